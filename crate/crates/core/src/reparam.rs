//! Cost matrices for relative-phase parametrizations and the scalar bound
//! `S = Tr(R H⁻¹)`.
//!
//! Every cost matrix lives in the basis of the `d` relative phases
//! `δ₀,ᵢ = φᵢ − φ₀` and is generated as `R = JᵀJ`, where row `μ` of `J`
//! holds the derivatives of target parameter `μ` with respect to `δ₀,ⱼ`.

use std::fmt;

use nalgebra::DMatrix;

use crate::linalg;
use crate::{Error, Result};

/// The three relative-phase parametrizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parametrization {
    /// `δ₀,ᵢ` for `i = 1..d`: mode 0 is a privileged reference.
    Common,
    /// `δᵢ,ᵢ₊₁` cyclically, including `δ_d,0`.
    Ring,
    /// Every pair `δᵢ,ⱼ`, `i < j`.
    AllPairs,
}

impl Parametrization {
    pub const ALL: [Parametrization; 3] = [
        Parametrization::Common,
        Parametrization::Ring,
        Parametrization::AllPairs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Parametrization::Common => "common",
            Parametrization::Ring => "ring",
            Parametrization::AllPairs => "all_pairs",
        }
    }
}

impl fmt::Display for Parametrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Parametrization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "common" | "r0" => Ok(Parametrization::Common),
            "ring" | "r1" => Ok(Parametrization::Ring),
            "all_pairs" | "all-pairs" | "pairs" | "r2" => Ok(Parametrization::AllPairs),
            other => Err(Error::invalid(format!("unknown cost kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CostKind {
    Common,
    Ring,
    AllPairs,
    WeightedCommon,
    WeightedRing,
    Custom,
}

impl CostKind {
    pub fn name(self) -> &'static str {
        match self {
            CostKind::Common => "common",
            CostKind::Ring => "ring",
            CostKind::AllPairs => "all_pairs",
            CostKind::WeightedCommon => "weighted_common",
            CostKind::WeightedRing => "weighted_ring",
            CostKind::Custom => "custom",
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    matrix: DMatrix<f64>,
    kind: CostKind,
    jacobian: DMatrix<f64>,
}

impl CostMatrix {
    /// `R = JᵀJ` for an arbitrary Jacobian with `d` columns.
    pub fn custom(jacobian: DMatrix<f64>) -> Result<Self> {
        Self::from_jacobian(jacobian, CostKind::Custom)
    }

    fn from_jacobian(jacobian: DMatrix<f64>, kind: CostKind) -> Result<Self> {
        if jacobian.ncols() == 0 || jacobian.nrows() == 0 {
            return Err(Error::invalid("empty Jacobian"));
        }
        if jacobian.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite Jacobian entry"));
        }
        let matrix = jacobian.transpose() * &jacobian;
        Ok(CostMatrix {
            matrix,
            kind,
            jacobian,
        })
    }

    pub fn for_parametrization(p: Parametrization, d: usize) -> Result<Self> {
        match p {
            Parametrization::Common => cost_common(d, None),
            Parametrization::Ring => cost_ring(d, None),
            Parametrization::AllPairs => cost_all_pairs(d),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    /// Number of independent relative phases.
    pub fn d(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of target parameters (rows of the Jacobian).
    pub fn targets(&self) -> usize {
        self.jacobian.nrows()
    }
}

fn check_d(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("d must be >= 1"));
    }
    Ok(())
}

fn check_weights(weights: &[f64], expected: usize) -> Result<()> {
    if weights.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::invalid(format!("weights must be positive, got {w}")));
    }
    Ok(())
}

/// Jacobian column for `δ₀,ᵢ`; `None` for the reference mode itself.
fn column(mode: usize) -> Option<usize> {
    mode.checked_sub(1)
}

/// Row of `J` for the relative phase `φ_to − φ_from`.
fn difference_row(j: &mut DMatrix<f64>, row: usize, from: usize, to: usize, scale: f64) {
    if let Some(c) = column(to) {
        j[(row, c)] += scale;
    }
    if let Some(c) = column(from) {
        j[(row, c)] -= scale;
    }
}

/// `R₀ = 𝟙`, or `diag(w)` with one positive weight per `δ₀,ᵢ`.
pub fn cost_common(d: usize, weights: Option<&[f64]>) -> Result<CostMatrix> {
    check_d(d)?;
    match weights {
        None => CostMatrix::from_jacobian(DMatrix::identity(d, d), CostKind::Common),
        Some(w) => {
            check_weights(w, d)?;
            let diag = nalgebra::DVector::from_iterator(d, w.iter().map(|x| x.sqrt()));
            CostMatrix::from_jacobian(DMatrix::from_diagonal(&diag), CostKind::WeightedCommon)
        }
    }
}

/// Ring cost `R₁ = J_ringᵀ W J_ring`.
///
/// Edge `i < d` is `δᵢ,ᵢ₊₁`; edge `d` closes the ring as `δ_d,0`, so
/// `weights[d]` weighs the pair `(d, 0)`. For `d = 1` both edges are `±δ₀,₁`
/// and `R₁ = [2]`.
pub fn cost_ring(d: usize, weights: Option<&[f64]>) -> Result<CostMatrix> {
    check_d(d)?;
    if let Some(w) = weights {
        check_weights(w, d + 1)?;
    }
    let mut j = DMatrix::zeros(d + 1, d);
    for edge in 0..=d {
        let scale = weights.map_or(1.0, |w| w[edge].sqrt());
        difference_row(&mut j, edge, edge, (edge + 1) % (d + 1), scale);
    }
    let kind = if weights.is_some() {
        CostKind::WeightedRing
    } else {
        CostKind::Ring
    };
    CostMatrix::from_jacobian(j, kind)
}

/// Unordered mode pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn mode_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..=d)
        .flat_map(|i| (i + 1..=d).map(move |j| (i, j)))
        .collect()
}

fn pairs_jacobian(d: usize, weights: Option<&[f64]>) -> DMatrix<f64> {
    let pairs = mode_pairs(d);
    let mut j = DMatrix::zeros(pairs.len(), d);
    for (row, &(a, b)) in pairs.iter().enumerate() {
        let scale = weights.map_or(1.0, |w| w[row].sqrt());
        difference_row(&mut j, row, a, b, scale);
    }
    j
}

/// All-pairs cost `R₂`: `d` on the diagonal, `−1` elsewhere.
pub fn cost_all_pairs(d: usize) -> Result<CostMatrix> {
    check_d(d)?;
    CostMatrix::from_jacobian(pairs_jacobian(d, None), CostKind::AllPairs)
}

/// All-pairs cost with one weight per pair in [`mode_pairs`] order. No
/// closed-form optimum is known, so the result is tagged custom.
pub fn cost_pairs_weighted(d: usize, pair_weights: &[f64]) -> Result<CostMatrix> {
    check_d(d)?;
    check_weights(pair_weights, d * (d + 1) / 2)?;
    CostMatrix::from_jacobian(pairs_jacobian(d, Some(pair_weights)), CostKind::Custom)
}

/// A scalar Cramér-Rao bound `Tr(R H⁻¹)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarBound {
    pub value: f64,
    pub cost_kind: CostKind,
    pub probe_descriptor: String,
}

impl ScalarBound {
    pub fn with_descriptor(mut self, descriptor: impl Into<String>) -> Self {
        self.probe_descriptor = descriptor.into();
        self
    }
}

/// `Tr(R H⁻¹)` for a restricted inverse QFIM in the `δ₀,·` basis.
pub fn scalar_bound(restricted_inverse: &DMatrix<f64>, cost: &CostMatrix) -> Result<ScalarBound> {
    if restricted_inverse.nrows() != cost.d() || restricted_inverse.ncols() != cost.d() {
        return Err(Error::DimensionMismatch {
            expected: cost.d(),
            found: restricted_inverse.nrows(),
        });
    }
    Ok(ScalarBound {
        value: linalg::trace_product(cost.matrix(), restricted_inverse)?,
        cost_kind: cost.kind(),
        probe_descriptor: String::new(),
    })
}

/// `Δ²(δᵢ,ⱼ) = Δ²(δ₀,ᵢ) + Δ²(δ₀,ⱼ) − 2 Cov(δ₀,ᵢ, δ₀,ⱼ)` from a `d × d`
/// covariance in the `δ₀,·` basis. Mode indices run over `0..=d`; index 0
/// contributes nothing (`δ₀,₀ ≡ 0`).
///
/// # Panics
///
/// If a mode index exceeds `d`.
pub fn variance_of_pair(covariance: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let d = covariance.nrows();
    assert!(i <= d && j <= d, "mode index out of range");
    let entry = |a: usize, b: usize| match (column(a), column(b)) {
        (Some(x), Some(y)) => covariance[(x, y)],
        _ => 0.0,
    };
    entry(i, i) + entry(j, j) - 2.0 * entry(i, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::CoherentProbe;
    use crate::qfim::invert_restricted;
    use proptest::prelude::*;

    fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    #[test]
    fn common_costs() {
        assert_eq!(cost_common(3, None).unwrap().matrix(), &DMatrix::identity(3, 3));
        let w = cost_common(2, Some(&[1.0, 4.0])).unwrap();
        assert_eq!(rows(w.matrix()), vec![vec![1.0, 0.0], vec![0.0, 4.0]]);
        assert_eq!(w.kind(), CostKind::WeightedCommon);
        let c = cost_common(3, Some(&[2.5; 3])).unwrap();
        assert!((c.matrix() - DMatrix::identity(3, 3) * 2.5).abs().max() < 1e-15);
        assert!(cost_common(2, Some(&[1.0, 0.0])).is_err());
        assert!(cost_common(2, Some(&[1.0])).is_err());
        assert!(cost_common(0, None).is_err());
    }

    #[test]
    fn ring_costs() {
        assert_eq!(
            rows(cost_ring(2, None).unwrap().matrix()),
            vec![vec![2.0, -1.0], vec![-1.0, 2.0]]
        );
        assert_eq!(
            rows(cost_ring(4, None).unwrap().matrix()),
            vec![
                vec![2.0, -1.0, 0.0, 0.0],
                vec![-1.0, 2.0, -1.0, 0.0],
                vec![0.0, -1.0, 2.0, -1.0],
                vec![0.0, 0.0, -1.0, 2.0]
            ]
        );
        // d = 1: J = (1, −1)ᵀ.
        let r1 = cost_ring(1, None).unwrap();
        assert_eq!(rows(r1.jacobian()), vec![vec![1.0], vec![-1.0]]);
        assert_eq!(rows(r1.matrix()), vec![vec![2.0]]);
        assert!(cost_ring(2, Some(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn weighted_ring_is_jt_w_j() {
        let w = [2.0, 1.0, 3.0];
        let r = cost_ring(2, Some(&w)).unwrap();
        let j = cost_ring(2, None).unwrap().jacobian().clone();
        let wm = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&w));
        assert!((r.matrix() - j.transpose() * wm * &j).abs().max() < 1e-14);
    }

    #[test]
    fn all_pairs_costs() {
        assert_eq!(
            rows(cost_all_pairs(3).unwrap().matrix()),
            vec![vec![3.0, -1.0, -1.0], vec![-1.0, 3.0, -1.0], vec![-1.0, -1.0, 3.0]]
        );
        assert_eq!(rows(cost_all_pairs(1).unwrap().matrix()), vec![vec![1.0]]);
        let j = cost_all_pairs(2).unwrap().jacobian().clone();
        assert_eq!(
            rows(&j),
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 1.0]]
        );
        assert_eq!(
            rows(&(j.transpose() * &j)),
            vec![vec![2.0, -1.0], vec![-1.0, 2.0]]
        );
        assert_eq!(mode_pairs(2), vec![(0, 1), (0, 2), (1, 2)]);
        let custom = cost_pairs_weighted(2, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(custom.matrix(), cost_all_pairs(2).unwrap().matrix());
        assert_eq!(custom.kind(), CostKind::Custom);
    }

    #[test]
    fn scalar_bound_examples() {
        let optimal = CoherentProbe::from_energies(&[0.5, 0.5]).unwrap();
        let s0 = scalar_bound(&invert_restricted(&optimal).unwrap(), &cost_common(1, None).unwrap())
            .unwrap();
        assert!((s0.value - 1.0).abs() < 1e-14);

        let equal = CoherentProbe::from_energies(&[1.0 / 3.0; 3]).unwrap();
        let inv = invert_restricted(&equal).unwrap();
        let s1 = scalar_bound(&inv, &cost_ring(2, None).unwrap()).unwrap();
        let s2 = scalar_bound(&inv, &cost_all_pairs(2).unwrap()).unwrap();
        assert!((s1.value - 4.5).abs() < 1e-13);
        assert!((s2.value - 4.5).abs() < 1e-13);
        assert_eq!(s2.cost_kind, CostKind::AllPairs);

        assert!(scalar_bound(&inv, &cost_ring(3, None).unwrap()).is_err());
    }

    #[test]
    fn pair_variance_conventions() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 5.0]);
        assert_eq!(variance_of_pair(&c, 1, 1), 0.0);
        assert_eq!(variance_of_pair(&c, 0, 2), 5.0);
        assert_eq!(variance_of_pair(&c, 0, 0), 0.0);
        assert!((variance_of_pair(&c, 1, 2) - (2.0 + 5.0 - 0.6)).abs() < 1e-15);
    }

    fn arb_symmetric(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-2.0..2.0f64, d * d).prop_map(move |v| {
            let m = DMatrix::from_vec(d, d, v);
            (&m + m.transpose()) * 0.5
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn ring_trace_equals_pair_variance_sum(c in (1usize..=5).prop_flat_map(arb_symmetric)) {
            let d = c.nrows();
            let r1 = cost_ring(d, None).unwrap();
            let direct = linalg::trace_product(r1.matrix(), &c).unwrap();
            let ring: f64 = (0..=d).map(|i| variance_of_pair(&c, i, (i + 1) % (d + 1))).sum();
            prop_assert!((direct - ring).abs() < 1e-12);

            let r2 = cost_all_pairs(d).unwrap();
            let pairs: f64 = mode_pairs(d).iter().map(|&(i, j)| variance_of_pair(&c, i, j)).sum();
            prop_assert!((linalg::trace_product(r2.matrix(), &c).unwrap() - pairs).abs() < 1e-12);
        }

        #[test]
        fn costs_factorize_and_are_psd(
            d in 1usize..=6,
            w in prop::collection::vec(0.01..10.0f64, 28),
        ) {
            let costs = [
                cost_common(d, None).unwrap(),
                cost_common(d, Some(&w[..d])).unwrap(),
                cost_ring(d, None).unwrap(),
                cost_ring(d, Some(&w[..d + 1])).unwrap(),
                cost_all_pairs(d).unwrap(),
                cost_pairs_weighted(d, &w[..d * (d + 1) / 2]).unwrap(),
            ];
            for c in &costs {
                let jtj = c.jacobian().transpose() * c.jacobian();
                prop_assert!((&jtj - c.matrix()).abs().max() <= 1e-12);
                prop_assert!(linalg::max_asymmetry(c.matrix()) == 0.0);
                prop_assert!(linalg::is_psd(c.matrix(), 1e-12));
            }
        }

        #[test]
        fn all_pairs_is_half_d_times_ring_for_equal_energies(d in 1usize..=8, e in 0.1..20.0f64) {
            let probe = CoherentProbe::from_energies(&vec![e / (d + 1) as f64; d + 1]).unwrap();
            let inv = invert_restricted(&probe).unwrap();
            let s1 = scalar_bound(&inv, &cost_ring(d, None).unwrap()).unwrap().value;
            let s2 = scalar_bound(&inv, &cost_all_pairs(d).unwrap()).unwrap().value;
            prop_assert!((s2 - d as f64 / 2.0 * s1).abs() <= 1e-12 * s2);
        }
    }
}
