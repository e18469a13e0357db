//! Quantum Fisher information matrices for phase-shift generators `n̂ᵢ`.
//!
//! With commuting generators the pure-state QFIM is `4 Cov(n̂ᵢ, n̂ⱼ)`. Without
//! an external reference the state is replaced by its mixture of fixed-`N`
//! layers and the QFIM becomes the `p_N`-weighted sum of layer covariances.
//! That superselected matrix has zero row sums and rank at most `d`, so
//! bounds are always taken on a restricted `d × d` block.

use std::fmt;

use nalgebra::DMatrix;

use crate::fock::{CoherentProbe, FockLayer, NoonProbe};
use crate::linalg;
use crate::{Error, Result};

/// Relative singular-value threshold used by [`rank_of`] by default.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Pure-state QFIM assuming an unlimited external phase reference.
    WithReference,
    /// QFIM of the global-phase-averaged state.
    Superselected,
    /// A superselected QFIM with one mode's row and column removed.
    Restricted,
    /// Transformed by a change of parametrization `JᵀHJ`.
    Reparametrized,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::WithReference => "with_reference",
            Provenance::Superselected => "superselected",
            Provenance::Restricted => "restricted",
            Provenance::Reparametrized => "reparametrized",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    entries: DMatrix<f64>,
    provenance: Provenance,
    labels: Vec<String>,
}

fn phase_labels(modes: usize) -> Vec<String> {
    (0..modes).map(|i| format!("φ{i}")).collect()
}

impl FisherMatrix {
    pub fn new(entries: DMatrix<f64>, provenance: Provenance, labels: Vec<String>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        if labels.len() != entries.nrows() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: labels.len(),
            });
        }
        Ok(FisherMatrix {
            entries,
            provenance,
            labels,
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn rank(&self, tol: f64) -> usize {
        rank_of(self, tol)
    }

    /// Checks symmetry (1e-10 absolute, scaled by the largest entry) and
    /// positive semidefiniteness (min eigenvalue ≥ −1e-8 · max).
    pub fn validate(&self) -> Result<()> {
        let scale = linalg::max_abs(&self.entries).max(1.0);
        let asym = linalg::max_asymmetry(&self.entries);
        if asym > 1e-10 * scale {
            return Err(Error::InvariantViolation(format!(
                "Fisher matrix asymmetric by {asym:e}"
            )));
        }
        if !linalg::is_psd(&self.entries, 1e-8) {
            return Err(Error::InvariantViolation(
                "Fisher matrix is not positive semidefinite".into(),
            ));
        }
        Ok(())
    }

    /// Change of parametrization `H → Jᵀ H J`, where `J` differentiates the
    /// current parameters with respect to the new ones.
    pub fn reparametrize(&self, jacobian: &DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if jacobian.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: jacobian.nrows(),
            });
        }
        Self::new(
            jacobian.transpose() * &self.entries * jacobian,
            Provenance::Reparametrized,
            labels,
        )
    }
}

/// Probes whose superselected QFIM takes the form `4(diag(w) − w wᵀ / Σw)`.
///
/// For coherent probes `wᵢ = |αᵢ|²`; for N00N probes `wᵢ = N²|βᵢ|²`.
pub trait SuperselectedProbe {
    fn information_weights(&self) -> Vec<f64>;

    fn modes(&self) -> usize {
        self.information_weights().len()
    }
}

impl SuperselectedProbe for CoherentProbe {
    fn information_weights(&self) -> Vec<f64> {
        self.mode_energies()
    }
}

impl SuperselectedProbe for NoonProbe {
    fn information_weights(&self) -> Vec<f64> {
        let n2 = f64::from(self.photon_number()).powi(2);
        self.weights().into_iter().map(|w| n2 * w).collect()
    }
}

/// `Hᵢⱼ = 4|αᵢ|² δᵢⱼ`.
pub fn qfim_coherent_with_reference(probe: &CoherentProbe) -> FisherMatrix {
    let diag = nalgebra::DVector::from_iterator(
        probe.modes(),
        probe.mode_energies().into_iter().map(|e| 4.0 * e),
    );
    FisherMatrix {
        entries: DMatrix::from_diagonal(&diag),
        provenance: Provenance::WithReference,
        labels: phase_labels(probe.modes()),
    }
}

/// `Hᵢⱼ = 4(δᵢⱼ|αᵢ|² − |αᵢ|²|αⱼ|² / E)`.
pub fn qfim_coherent_no_reference(probe: &CoherentProbe) -> FisherMatrix {
    let e = probe.total_energy();
    let w = probe.mode_energies();
    let m = w.len();
    let entries = DMatrix::from_fn(m, m, |i, j| {
        let diag = if i == j { w[i] } else { 0.0 };
        4.0 * (diag - w[i] * w[j] / e)
    });
    FisherMatrix {
        entries,
        provenance: Provenance::Superselected,
        labels: phase_labels(m),
    }
}

/// `Hᵢⱼ = 4N²(δᵢⱼ|βᵢ|² − |βᵢ|²|βⱼ|²)`.
pub fn qfim_noon(probe: &NoonProbe) -> FisherMatrix {
    let n2 = f64::from(probe.photon_number()).powi(2);
    let b = probe.weights();
    let m = b.len();
    let entries = DMatrix::from_fn(m, m, |i, j| {
        let diag = if i == j { b[i] } else { 0.0 };
        (4.0 * n2) * (diag - b[i] * b[j])
    });
    FisherMatrix {
        entries,
        provenance: Provenance::Superselected,
        labels: phase_labels(m),
    }
}

/// `Hᵢⱼ = 4 Σ_N p_N Cov_{ψ_N}(n̂ᵢ, n̂ⱼ)` evaluated layer by layer.
///
/// Independent of the closed forms; phases applied to the layers do not
/// change the result.
pub fn qfim_oracle(layers: &[FockLayer]) -> Result<FisherMatrix> {
    let first = layers
        .first()
        .ok_or_else(|| Error::invalid("oracle needs at least one layer"))?;
    let m = first.modes();
    let mut entries = DMatrix::zeros(m, m);
    for layer in layers {
        if layer.modes() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: layer.modes(),
            });
        }
        let p = layer.weight();
        if p == 0.0 {
            continue;
        }
        for i in 0..m {
            for j in 0..=i {
                let c = 4.0 * p * layer.number_covariance(i, j);
                entries[(i, j)] += c;
                if i != j {
                    entries[(j, i)] += c;
                }
            }
        }
    }
    Ok(FisherMatrix {
        entries,
        provenance: Provenance::Superselected,
        labels: phase_labels(m),
    })
}

/// Number of singular values above `tol` times the largest one.
pub fn rank_of(matrix: &FisherMatrix, tol: f64) -> usize {
    let sv = matrix.entries.clone().svd(false, false).singular_values;
    let largest = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * largest).count()
}

/// Removes the row and column of `drop_mode`, leaving the block that
/// describes the relative phases `δ_{drop_mode, i}`.
pub fn restrict(matrix: &FisherMatrix, drop_mode: usize) -> Result<FisherMatrix> {
    let m = matrix.dim();
    if matches!(
        matrix.provenance,
        Provenance::Restricted | Provenance::Reparametrized
    ) {
        return Err(Error::invalid(
            "restriction applies to a full (d+1)-mode matrix",
        ));
    }
    if m < 2 {
        return Err(Error::invalid("restriction needs at least two modes"));
    }
    if drop_mode >= m {
        return Err(Error::invalid(format!(
            "mode {drop_mode} out of range for {m} modes"
        )));
    }
    let entries = matrix
        .entries
        .clone()
        .remove_row(drop_mode)
        .remove_column(drop_mode);
    let labels = (0..m)
        .filter(|&i| i != drop_mode)
        .map(|i| format!("δ{drop_mode},{i}"))
        .collect();
    Ok(FisherMatrix {
        entries,
        provenance: Provenance::Restricted,
        labels,
    })
}

/// Closed-form inverse of the superselected QFIM restricted to `i, j > 0`:
/// `(H⁻¹)ᵢⱼ = δᵢⱼ / 4wᵢ + 1 / 4w₀` (Sherman-Morrison on a diagonal minus a
/// rank-one term).
pub fn invert_restricted<P: SuperselectedProbe + ?Sized>(probe: &P) -> Result<DMatrix<f64>> {
    let w = probe.information_weights();
    if w.len() < 2 {
        return Err(Error::invalid("restricted inverse needs at least two modes"));
    }
    if let Some(i) = w.iter().position(|&x| x <= 0.0) {
        return Err(Error::invalid(format!(
            "mode {i} carries no energy; restricted QFIM is singular"
        )));
    }
    let d = w.len() - 1;
    let reference = 1.0 / (4.0 * w[0]);
    Ok(DMatrix::from_fn(d, d, |i, j| {
        let diag = if i == j { 1.0 / (4.0 * w[i + 1]) } else { 0.0 };
        diag + reference
    }))
}

/// Restricted superselected QFIM of any [`SuperselectedProbe`], built from
/// its information weights.
pub fn restricted_qfim<P: SuperselectedProbe + ?Sized>(probe: &P) -> DMatrix<f64> {
    let w = probe.information_weights();
    let total: f64 = w.iter().sum();
    let d = w.len() - 1;
    DMatrix::from_fn(d, d, |i, j| {
        let diag = if i == j { w[i + 1] } else { 0.0 };
        4.0 * (diag - w[i + 1] * w[j + 1] / total)
    })
}
