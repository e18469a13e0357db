//! Projective measurements on the N00N block space and the classical Fisher
//! information they induce.
//!
//! A fixed-N probe `Σ_i β_i |N⟩_i` lives in the `(d+1)`-dimensional span of
//! `|N⟩_0 … |N⟩_d`. Measurements are `d+1` orthonormal vectors over that
//! basis; the first is the unperturbed probe itself, the rest come from
//! Gram-Schmidt on a fixed ladder of real vectors.
//!
//! Ladder convention (both families): `v⁽¹⁾ = (a, 1, …, 1)` and, for
//! `j = 2..=d+1`, `v⁽ʲ⁾` has `a` at index 0, ones at indices `1..p`, `-1`
//! at index `p = d + 2 - j`, zeros after. `a = d^{1/4}` for the
//! common-reference set and `a = 1` for the GHZ set. For `d = 3` these give
//! `(a,1,1,-1)`, `(a,1,-1,0)`, `(a,-1,0,0)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::fock::{NoonProbe, PhaseVector};
use crate::linalg;
use crate::{Error, Result};

/// Orthonormality tolerance for stored sets.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Probabilities below this are treated as extinguished outcomes.
pub const PROBABILITY_FLOOR: f64 = 1e-15;
/// Derivative magnitude under which an extinguished outcome is a 0/0 limit.
pub const DERIVATIVE_FLOOR: f64 = 1e-12;
/// Offsets used for the extrapolated CFIM.
pub const DEFAULT_EPSILONS: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasurementSource {
    Humphreys,
    GhzGs,
    GhzHadamardD3,
    Custom,
}

impl MeasurementSource {
    pub fn name(self) -> &'static str {
        match self {
            MeasurementSource::Humphreys => "humphreys",
            MeasurementSource::GhzGs => "ghz_gs",
            MeasurementSource::GhzHadamardD3 => "ghz_hadamard_d3",
            MeasurementSource::Custom => "custom",
        }
    }
}

impl std::fmt::Display for MeasurementSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    vectors: Vec<DVector<Complex64>>,
    photon_number: u32,
    source: MeasurementSource,
}

impl MeasurementSet {
    /// Validates that `vectors` form an orthonormal basis of the block space.
    pub fn custom(vectors: Vec<DVector<Complex64>>, photon_number: u32) -> Result<Self> {
        Self::checked(vectors, photon_number, MeasurementSource::Custom)
    }

    fn checked(vectors: Vec<DVector<Complex64>>, photon_number: u32, source: MeasurementSource) -> Result<Self> {
        if photon_number == 0 {
            return Err(Error::invalid("photon number must be >= 1"));
        }
        let n = vectors.len();
        if n < 2 {
            return Err(Error::invalid("a measurement needs at least two outcomes"));
        }
        for v in &vectors {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len() });
            }
        }
        let set = MeasurementSet { vectors, photon_number, source };
        let defect = set.orthonormality_defect();
        if defect > ORTHONORMAL_TOL {
            return Err(Error::InvariantViolation(format!(
                "measurement vectors not orthonormal (max defect {defect:e})"
            )));
        }
        Ok(set)
    }

    pub fn vectors(&self) -> &[DVector<Complex64>] {
        &self.vectors
    }

    pub fn photon_number(&self) -> u32 {
        self.photon_number
    }

    pub fn source(&self) -> MeasurementSource {
        self.source
    }

    /// Number of modes, `d + 1`.
    pub fn modes(&self) -> usize {
        self.vectors.len()
    }

    pub fn d(&self) -> usize {
        self.vectors.len() - 1
    }

    /// Same vectors relabeled for another photon number.
    pub fn with_photon_number(mut self, photon_number: u32) -> Result<Self> {
        if photon_number == 0 {
            return Err(Error::invalid("photon number must be >= 1"));
        }
        self.photon_number = photon_number;
        Ok(self)
    }

    /// `max |⟨u⁽ʲ⁾|u⁽ᵏ⁾⟩ − δ_jk|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (j, a) in self.vectors.iter().enumerate() {
            for (k, b) in self.vectors.iter().enumerate() {
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((a.dotc(b) - target).norm());
            }
        }
        worst
    }

    /// `max |Σ_j |u⁽ʲ⁾⟩⟨u⁽ʲ⁾| − I|` entrywise.
    pub fn completeness_defect(&self) -> f64 {
        let n = self.modes();
        let mut sum = DMatrix::<Complex64>::zeros(n, n);
        for v in &self.vectors {
            sum += v * v.adjoint();
        }
        sum -= DMatrix::identity(n, n);
        sum.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest imaginary part among all coefficients.
    pub fn max_imaginary(&self) -> f64 {
        self.vectors
            .iter()
            .flat_map(|v| v.iter())
            .map(|z| z.im.abs())
            .fold(0.0, f64::max)
    }

    /// `⟨u⁽¹⁾|β⟩`.
    pub fn first_overlap(&self, probe: &NoonProbe) -> Result<Complex64> {
        self.check_probe(probe)?;
        let beta = DVector::from_column_slice(probe.betas());
        Ok(self.vectors[0].dotc(&beta))
    }

    fn check_probe(&self, probe: &NoonProbe) -> Result<()> {
        if probe.modes() != self.modes() {
            return Err(Error::DimensionMismatch { expected: self.modes(), found: probe.modes() });
        }
        if probe.photon_number() != self.photon_number {
            return Err(Error::invalid(format!(
                "measurement built for N={} used with an N={} probe",
                self.photon_number,
                probe.photon_number()
            )));
        }
        Ok(())
    }
}

/// Modified Gram-Schmidt with one re-orthogonalization pass, in input
/// order.
pub fn gram_schmidt(vectors: &[DVector<Complex64>]) -> Result<Vec<DVector<Complex64>>> {
    let mut out: Vec<DVector<Complex64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let scale = v.norm();
        if scale == 0.0 {
            return Err(Error::Singular);
        }
        let mut w = v.clone();
        for _pass in 0..2 {
            for u in &out {
                let c = u.dotc(&w);
                w -= u * c;
            }
        }
        let norm = w.norm();
        if norm <= 1e-12 * scale {
            return Err(Error::Singular);
        }
        out.push(w / Complex64::new(norm, 0.0));
    }
    Ok(out)
}

/// The ladder `v⁽¹⁾ … v⁽ᵈ⁺¹⁾` with leading entry `lead` (see module docs).
pub fn ladder(d: usize, lead: f64) -> Vec<DVector<Complex64>> {
    let n = d + 1;
    let mut out = Vec::with_capacity(n);
    out.push(DVector::from_fn(n, |i, _| Complex64::new(if i == 0 { lead } else { 1.0 }, 0.0)));
    for j in 2..=n {
        let p = d + 2 - j;
        out.push(DVector::from_fn(n, |i, _| {
            let x = if i == 0 {
                lead
            } else if i < p {
                1.0
            } else if i == p {
                -1.0
            } else {
                0.0
            };
            Complex64::new(x, 0.0)
        }));
    }
    out
}

fn built(d: usize, photon_number: u32, lead: f64, source: MeasurementSource) -> Result<MeasurementSet> {
    if d == 0 {
        return Err(Error::invalid("d must be >= 1"));
    }
    let vectors = gram_schmidt(&ladder(d, lead))?;
    MeasurementSet::checked(vectors, photon_number, source)
}

/// Measurement matched to the optimal common-reference N00N probe.
pub fn build_humphreys_set(d: usize, photon_number: u32) -> Result<MeasurementSet> {
    built(d, photon_number, (d as f64).powf(0.25), MeasurementSource::Humphreys)
}

/// Measurement matched to the balanced GHZ probe.
pub fn build_ghz_set(d: usize, photon_number: u32) -> Result<MeasurementSet> {
    built(d, photon_number, 1.0, MeasurementSource::GhzGs)
}

/// Alternative d = 3 GHZ measurement: the rows of a 4×4 Hadamard matrix
/// over 2. Carries `N = 1`; relabel with
/// [`MeasurementSet::with_photon_number`].
pub fn build_hadamard_d3() -> MeasurementSet {
    let rows: [[f64; 4]; 4] = [
        [1.0, 1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0, -1.0],
        [1.0, 1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0, 1.0],
    ];
    let vectors = rows
        .iter()
        .map(|r| DVector::from_iterator(4, r.iter().map(|&x| Complex64::new(0.5 * x, 0.0))))
        .collect();
    MeasurementSet::checked(vectors, 1, MeasurementSource::GhzHadamardD3).expect("Hadamard rows are orthonormal")
}

fn amplitudes(set: &MeasurementSet, probe: &NoonProbe, phases: &[f64]) -> Vec<Complex64> {
    let n = probe.photon_number() as f64;
    let evolved: Vec<Complex64> = probe
        .betas()
        .iter()
        .zip(phases)
        .map(|(b, &phi)| b * Complex64::from_polar(1.0, n * phi))
        .collect();
    set.vectors
        .iter()
        .map(|u| u.iter().zip(&evolved).map(|(ui, e)| ui.conj() * e).sum())
        .collect()
}

/// Born-rule outcome probabilities `p_j = |⟨u⁽ʲ⁾|ψ(φ)⟩|²`.
pub fn outcome_probabilities(set: &MeasurementSet, probe: &NoonProbe, phases: &PhaseVector) -> Result<Vec<f64>> {
    set.check_probe(probe)?;
    if phases.len() != set.modes() {
        return Err(Error::DimensionMismatch { expected: set.modes(), found: phases.len() });
    }
    Ok(amplitudes(set, probe, phases.as_slice()).iter().map(|a| a.norm_sqr()).collect())
}

/// Outcome probabilities and their analytic derivatives with respect to
/// `δ₀,₁ … δ₀,d` (mode 0 held fixed). Row `j` of the second value is
/// `∂p_j`.
pub fn probabilities_with_gradient(
    set: &MeasurementSet,
    probe: &NoonProbe,
    phases: &[f64],
) -> (Vec<f64>, DMatrix<f64>) {
    let n = probe.photon_number() as f64;
    let d = set.d();
    let amps = amplitudes(set, probe, phases);
    let mut grad = DMatrix::zeros(d + 1, d);
    for (j, u) in set.vectors.iter().enumerate() {
        for a in 1..=d {
            // ∂A_j/∂φ_a = i N conj(u_a) β_a e^{iNφ_a}
            let da = Complex64::new(0.0, n) * u[a].conj() * probe.betas()[a] * Complex64::from_polar(1.0, n * phases[a]);
            grad[(j, a - 1)] = 2.0 * (amps[j].conj() * da).re;
        }
    }
    (amps.iter().map(|a| a.norm_sqr()).collect(), grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfimResult {
    pub matrix: DMatrix<f64>,
    pub evaluation_phases: PhaseVector,
    /// Offset magnitude, or 0 for an extrapolated result.
    pub epsilon: f64,
}

impl CfimResult {
    /// `Tr(R F⁻¹)`.
    pub fn scalar_bound(&self, cost: &DMatrix<f64>) -> Result<f64> {
        let inv = linalg::inverse(&self.matrix)?;
        linalg::trace_product(cost, &inv)
    }
}

/// Fixed generic offset direction over `δ₀,₁ … δ₀,d`, unit length.
///
/// Irrational-ratio components keep every `Σ_a u_a β_a δ_a` away from zero
/// for the built-in sets.
pub fn offset_direction(d: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=d)
        .map(|a| 1.0 + 0.5 * (a as f64 * std::f64::consts::SQRT_2).fract() + 0.1 * (a as f64).ln_1p())
        .collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.into_iter().map(|x| x / norm).collect()
}

fn fisher_sum(p: &[f64], dp: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = dp.ncols();
    let mut f = DMatrix::zeros(d, d);
    for (j, &pj) in p.iter().enumerate() {
        let row = dp.row(j);
        let gmax = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if pj < PROBABILITY_FLOOR {
            if gmax < DERIVATIVE_FLOOR {
                continue;
            }
            return Err(Error::ProbabilityUnderflow { outcome: j, probability: pj });
        }
        for a in 0..d {
            for b in 0..d {
                f[(a, b)] += row[a] * row[b] / pj;
            }
        }
    }
    Ok(f)
}

/// CFIM at `phases + ε·g` (φ₀ untouched, `g` from [`offset_direction`]),
/// derivatives by central differences of step `ε/10`.
pub fn cfim(set: &MeasurementSet, probe: &NoonProbe, phases: &PhaseVector, epsilon: f64) -> Result<CfimResult> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!("epsilon must be > 0, got {epsilon}")));
    }
    set.check_probe(probe)?;
    if phases.len() != set.modes() {
        return Err(Error::DimensionMismatch { expected: set.modes(), found: phases.len() });
    }
    let d = set.d();
    let g = offset_direction(d);
    let mut point = phases.as_slice().to_vec();
    for a in 1..=d {
        point[a] += epsilon * g[a - 1];
    }
    let h = epsilon / 10.0;
    let p = amplitudes(set, probe, &point).iter().map(|a| a.norm_sqr()).collect::<Vec<_>>();
    let mut dp = DMatrix::zeros(d + 1, d);
    for a in 1..=d {
        let mut plus = point.clone();
        let mut minus = point.clone();
        plus[a] += h;
        minus[a] -= h;
        let pp = amplitudes(set, probe, &plus);
        let pm = amplitudes(set, probe, &minus);
        for j in 0..=d {
            dp[(j, a - 1)] = (pp[j].norm_sqr() - pm[j].norm_sqr()) / (2.0 * h);
        }
    }
    let matrix = fisher_sum(&p, &dp)?;
    Ok(CfimResult {
        matrix: (&matrix + matrix.transpose()) * 0.5,
        evaluation_phases: PhaseVector::new(point)?,
        epsilon,
    })
}

/// Polynomial (Neville) extrapolation of `(x_k, y_k)` to `x = 0`.
pub fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mut t = ys.to_vec();
    let n = xs.len();
    for m in 1..n {
        for i in 0..n - m {
            t[i] = (xs[i + m] * t[i] - xs[i] * t[i + 1]) / (xs[i + m] - xs[i]);
        }
    }
    t[0]
}

/// CFIM extrapolated entrywise to `ε → 0` over `epsilons`.
pub fn cfim_extrapolated(
    set: &MeasurementSet,
    probe: &NoonProbe,
    phases: &PhaseVector,
    epsilons: &[f64],
) -> Result<CfimResult> {
    if epsilons.is_empty() {
        return Err(Error::invalid("need at least one epsilon"));
    }
    let results = epsilons
        .iter()
        .map(|&e| cfim(set, probe, phases, e))
        .collect::<Result<Vec<_>>>()?;
    let d = set.d();
    let matrix = DMatrix::from_fn(d, d, |a, b| {
        let ys: Vec<f64> = results.iter().map(|r| r.matrix[(a, b)]).collect();
        extrapolate_to_zero(epsilons, &ys)
    });
    Ok(CfimResult {
        matrix,
        evaluation_phases: phases.clone(),
        epsilon: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qfim::restricted_qfim;
    use crate::reparam::{cost_all_pairs, cost_common, cost_ring};
    use approx::assert_relative_eq;

    fn re(v: &DVector<Complex64>) -> Vec<f64> {
        v.iter().map(|z| z.re).collect()
    }

    fn rel_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max() / b.abs().max()
    }

    #[test]
    fn ladder_pattern_d3() {
        let l = ladder(3, 2.0);
        let rows: Vec<Vec<f64>> = l.iter().map(re).collect();
        assert_eq!(
            rows,
            vec![
                vec![2.0, 1.0, 1.0, 1.0],
                vec![2.0, 1.0, 1.0, -1.0],
                vec![2.0, 1.0, -1.0, 0.0],
                vec![2.0, -1.0, 0.0, 0.0],
            ]
        );
    }

    #[test]
    fn d1_sets_are_hadamard() {
        let s = 0.5f64.sqrt();
        for set in [build_humphreys_set(1, 1).unwrap(), build_ghz_set(1, 1).unwrap()] {
            let v = set.vectors();
            for (got, want) in re(&v[0]).iter().zip([s, s]) {
                assert_relative_eq!(*got, want, epsilon = 1e-15);
            }
            for (got, want) in re(&v[1]).iter().zip([s, -s]) {
                assert_relative_eq!(*got, want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn ghz_d3_first_vector_is_uniform() {
        let set = build_ghz_set(3, 2).unwrap();
        for z in set.vectors()[0].iter() {
            assert_relative_eq!(z.re, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn humphreys_d3_by_hand() {
        // a = 3^{1/4}; u⁽¹⁾ = (a,1,1,1)/√(√3+3). The second vector is v⁽²⁾
        // minus its projection: v⁽²⁾ − (√3+1)/(√3+3) v⁽¹⁾.
        let a = 3f64.powf(0.25);
        let set = build_humphreys_set(3, 1).unwrap();
        let n1 = (3f64.sqrt() + 3.0).sqrt();
        for (got, want) in re(&set.vectors()[0]).iter().zip([a / n1, 1.0 / n1, 1.0 / n1, 1.0 / n1]) {
            assert_relative_eq!(*got, want, epsilon = 1e-14);
        }
        let c = (3f64.sqrt() + 1.0) / (3f64.sqrt() + 3.0);
        let w = [a - c * a, 1.0 - c, 1.0 - c, -1.0 - c];
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (got, want) in re(&set.vectors()[1]).iter().zip(w.iter().map(|x| x / nw)) {
            assert_relative_eq!(*got, want, epsilon = 1e-14);
        }
    }

    #[test]
    fn sets_are_orthonormal_complete_and_real() {
        for d in 1..=8 {
            for set in [build_humphreys_set(d, 1).unwrap(), build_ghz_set(d, 3).unwrap()] {
                assert!(set.orthonormality_defect() < 1e-10);
                assert!(set.completeness_defect() < 1e-10);
                assert!(set.max_imaginary() <= 1e-14);
            }
        }
        let h = build_hadamard_d3();
        assert!(h.orthonormality_defect() < 1e-15);
        for v in h.vectors() {
            assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn first_vector_matches_probe() {
        for d in 1..=8 {
            for n in [1, 4] {
                let p = NoonProbe::optimal_common(d, n).unwrap();
                let o = build_humphreys_set(d, n).unwrap().first_overlap(&p).unwrap();
                assert!((o - Complex64::new(1.0, 0.0)).norm() < 1e-12);
                let g = NoonProbe::ghz(d, n).unwrap();
                let o = build_ghz_set(d, n).unwrap().first_overlap(&g).unwrap();
                assert!((o - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn custom_rejects_non_orthonormal() {
        let v = vec![
            DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]),
            DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]),
        ];
        assert!(matches!(MeasurementSet::custom(v, 1), Err(Error::InvariantViolation(_))));
        assert!(matches!(gram_schmidt(&vec![DVector::from_element(2, Complex64::new(1.0, 0.0)); 2]), Err(Error::Singular)));
    }

    #[test]
    fn probabilities_at_rest_and_global_phase() {
        let p = NoonProbe::optimal_common(3, 2).unwrap();
        let set = build_humphreys_set(3, 2).unwrap();
        let probs = outcome_probabilities(&set, &p, &PhaseVector::zeros(4)).unwrap();
        assert_relative_eq!(probs[0], 1.0, epsilon = 1e-14);
        assert!(probs[1..].iter().all(|&x| x < 1e-14));
        let phases = PhaseVector::new(vec![0.1, -0.3, 0.7, 0.2]).unwrap();
        let a = outcome_probabilities(&set, &p, &phases).unwrap();
        let b = outcome_probabilities(&set, &p, &phases.shifted(1.234)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, epsilon = 1e-14);
        }
        assert_relative_eq!(a.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_mode_fringe() {
        let p = NoonProbe::ghz(1, 1).unwrap();
        let set = build_ghz_set(1, 1).unwrap();
        for theta in [0.0, 0.3, 1.0, 2.5] {
            let probs = outcome_probabilities(&set, &p, &PhaseVector::new(vec![0.0, theta]).unwrap()).unwrap();
            assert_relative_eq!(probs[0], (theta / 2.0).cos().powi(2), epsilon = 1e-14);
            assert_relative_eq!(probs[1], (theta / 2.0).sin().powi(2), epsilon = 1e-14);
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let p = NoonProbe::from_weights(&[0.4, 0.3, 0.2, 0.1], 3).unwrap();
        let set = build_ghz_set(3, 3).unwrap();
        let phi = [0.0, 0.11, -0.07, 0.05];
        let (_, g) = probabilities_with_gradient(&set, &p, &phi);
        let h = 1e-6;
        for a in 1..=3 {
            let mut plus = phi;
            let mut minus = phi;
            plus[a] += h;
            minus[a] -= h;
            let pp = outcome_probabilities(&set, &p, &PhaseVector::new(plus.to_vec()).unwrap()).unwrap();
            let pm = outcome_probabilities(&set, &p, &PhaseVector::new(minus.to_vec()).unwrap()).unwrap();
            for j in 0..4 {
                assert_relative_eq!(g[(j, a - 1)], (pp[j] - pm[j]) / (2.0 * h), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn humphreys_saturates_common_probe() {
        let p = NoonProbe::optimal_common(2, 1).unwrap();
        let set = build_humphreys_set(2, 1).unwrap();
        let f = cfim_extrapolated(&set, &p, &PhaseVector::zeros(3), &DEFAULT_EPSILONS).unwrap();
        let q = restricted_qfim(&p);
        assert!(rel_gap(&f.matrix, &q) < 1e-3, "gap {}", rel_gap(&f.matrix, &q));
    }

    #[test]
    fn ghz_set_reaches_ring_bound() {
        for n in [1u32, 2, 3] {
            let p = NoonProbe::ghz(3, n).unwrap();
            let set = build_ghz_set(3, n).unwrap();
            let f = cfim_extrapolated(&set, &p, &PhaseVector::zeros(4), &DEFAULT_EPSILONS).unwrap();
            let s1 = f.scalar_bound(cost_ring(3, None).unwrap().matrix()).unwrap();
            assert_relative_eq!(s1, 8.0 / (n * n) as f64, max_relative = 1e-3);
        }
    }

    #[test]
    fn hadamard_matches_ghz_set() {
        let p = NoonProbe::ghz(3, 2).unwrap();
        let gs = build_ghz_set(3, 2).unwrap();
        let had = build_hadamard_d3().with_photon_number(2).unwrap();
        let zero = PhaseVector::zeros(4);
        let a = cfim(&gs, &p, &zero, 1e-3).unwrap();
        let b = cfim(&had, &p, &zero, 1e-3).unwrap();
        assert!(rel_gap(&a.matrix, &b.matrix) < 1e-3);
        let q = restricted_qfim(&p);
        let b0 = cfim_extrapolated(&had, &p, &zero, &DEFAULT_EPSILONS).unwrap();
        assert!(rel_gap(&b0.matrix, &q) < 1e-3);
    }

    #[test]
    fn saturation_is_cost_independent() {
        for (d, probe, set) in [
            (3, NoonProbe::optimal_common(3, 2).unwrap(), build_humphreys_set(3, 2).unwrap()),
            (4, NoonProbe::ghz(4, 1).unwrap(), build_ghz_set(4, 1).unwrap()),
        ] {
            let f = cfim_extrapolated(&set, &probe, &PhaseVector::zeros(d + 1), &DEFAULT_EPSILONS).unwrap();
            let q = restricted_qfim(&probe);
            let qi = linalg::inverse(&q).unwrap();
            assert!(linalg::sym_eigenvalues(&f.matrix)[0] > 0.0);
            for r in [cost_common(d, None).unwrap(), cost_ring(d, None).unwrap(), cost_all_pairs(d).unwrap()] {
                let c = f.scalar_bound(r.matrix()).unwrap();
                let b = linalg::trace_product(r.matrix(), &qi).unwrap();
                assert_relative_eq!(c, b, max_relative = 1e-3);
            }
        }
    }

    #[test]
    fn cfim_never_exceeds_qfim() {
        let probes = [NoonProbe::ghz(3, 1).unwrap(), NoonProbe::optimal_common(3, 1).unwrap()];
        let sets = [build_ghz_set(3, 1).unwrap(), build_humphreys_set(3, 1).unwrap(), build_hadamard_d3()];
        for p in &probes {
            let q = restricted_qfim(p);
            for s in &sets {
                for eps in DEFAULT_EPSILONS {
                    let f = cfim(s, p, &PhaseVector::zeros(4), eps).unwrap();
                    let gap = &q - &f.matrix;
                    assert!(linalg::sym_eigenvalues(&gap)[0] > -1e-6 * linalg::max_abs(&q));
                    assert!(linalg::sym_eigenvalues(&f.matrix)[0] > -1e-9);
                }
            }
        }
    }

    #[test]
    fn mismatched_set_respects_bound() {
        let p = NoonProbe::ghz(3, 1).unwrap();
        let set = build_humphreys_set(3, 1).unwrap();
        let r = cost_ring(3, None).unwrap();
        let s1 = 8.0;
        for eps in DEFAULT_EPSILONS {
            let f = cfim(&set, &p, &PhaseVector::zeros(4), eps).unwrap();
            // A singular CFIM means unbounded variance, which also respects
            // the bound.
            if let Ok(v) = f.scalar_bound(r.matrix()) {
                assert!(v >= s1 * (1.0 - 1e-9), "{v}");
            }
        }
    }

    #[test]
    fn neville_is_exact_for_quadratics() {
        let xs = [0.3, 0.1, 0.05];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 3.0 * x + 5.0 * x * x).collect();
        assert_relative_eq!(extrapolate_to_zero(&xs, &ys), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn cfim_rejects_bad_inputs() {
        let p = NoonProbe::ghz(2, 1).unwrap();
        let set = build_ghz_set(2, 1).unwrap();
        assert!(cfim(&set, &p, &PhaseVector::zeros(3), 0.0).is_err());
        assert!(cfim(&set, &p, &PhaseVector::zeros(4), 1e-3).is_err());
        let wrong_n = NoonProbe::ghz(2, 2).unwrap();
        assert!(outcome_probabilities(&set, &wrong_n, &PhaseVector::zeros(3)).is_err());
    }

    #[test]
    fn underflow_is_reported() {
        // Outcome 1 extinguished with non-vanishing derivative.
        let p = vec![1.0, 0.0];
        let dp = DMatrix::from_row_slice(2, 1, &[0.0, 1e-3]);
        assert!(matches!(fisher_sum(&p, &dp), Err(Error::ProbabilityUnderflow { outcome: 1, .. })));
        let dp = DMatrix::from_row_slice(2, 1, &[0.0, 1e-14]);
        assert!(fisher_sum(&p, &dp).is_ok());
    }

    proptest::proptest! {
        #[test]
        fn probabilities_sum_to_one(d in 1usize..7, n in 1u32..5, seed in proptest::collection::vec(-3.0f64..3.0, 8), shift in -5.0f64..5.0) {
            let probe = NoonProbe::optimal_common(d, n).unwrap();
            let phases = PhaseVector::new(seed[..=d].to_vec()).unwrap();
            for set in [build_humphreys_set(d, n).unwrap(), build_ghz_set(d, n).unwrap()] {
                let p = outcome_probabilities(&set, &probe, &phases).unwrap();
                proptest::prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let q = outcome_probabilities(&set, &probe, &phases.shifted(shift)).unwrap();
                for (a, b) in p.iter().zip(&q) {
                    proptest::prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn gram_schmidt_output_is_orthonormal(d in 1usize..8, lead in 0.1f64..3.0) {
            let u = gram_schmidt(&ladder(d, lead)).unwrap();
            let set = MeasurementSet::custom(u, 1).unwrap();
            proptest::prop_assert!(set.completeness_defect() < 1e-10);
        }
    }
}
