//! Multimode photonic probes and their fixed-photon-number decomposition.
//!
//! A coherent probe `⊗|αᵢ⟩` splits into Fock layers: for every total photon
//! number `N` the normalized component `|ψ_N⟩` carries Poisson weight
//! `p_N = Eᴺ e^{−E} / N!`. Averaging over a global phase (no external
//! reference) leaves exactly this incoherent mixture of layers.
//!
//! Layers are built at zero phase; [`apply_phases`] imprints `e^{i k·φ}`
//! afterwards.

use num_complex::Complex64;

use crate::{Error, Result};

/// Number of interferometer modes, `d + 1` with `d ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeCount(usize);

impl ModeCount {
    pub fn new(modes: usize) -> Result<Self> {
        if modes < 2 {
            return Err(Error::invalid(format!(
                "need at least two modes (d >= 1), got {modes}"
            )));
        }
        Ok(ModeCount(modes))
    }

    pub fn from_d(d: usize) -> Result<Self> {
        Self::new(d + 1)
    }

    pub fn modes(self) -> usize {
        self.0
    }

    /// Number of independent relative phases.
    pub fn d(self) -> usize {
        self.0 - 1
    }
}

/// Product of coherent states `⊗|αᵢ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentProbe {
    amplitudes: Vec<Complex64>,
    energy: f64,
}

impl CoherentProbe {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::invalid("coherent probe needs at least one mode"));
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::invalid("non-finite coherent amplitude"));
        }
        let energy: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if energy <= 0.0 {
            return Err(Error::ZeroEnergy);
        }
        Ok(CoherentProbe { amplitudes, energy })
    }

    /// Real amplitudes `√Eᵢ` from per-mode mean photon numbers.
    pub fn from_energies(energies: &[f64]) -> Result<Self> {
        if let Some(e) = energies.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
            return Err(Error::invalid(format!("mode energy must be >= 0, got {e}")));
        }
        Self::new(
            energies
                .iter()
                .map(|&e| Complex64::new(e.sqrt(), 0.0))
                .collect(),
        )
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn modes(&self) -> usize {
        self.amplitudes.len()
    }

    /// Mean photon number `E = Σ|αᵢ|²`.
    pub fn total_energy(&self) -> f64 {
        self.energy
    }

    /// `|αᵢ|²` per mode.
    pub fn mode_energies(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Generalized N00N probe `⊕ βᵢ |N⟩ᵢ`: all `N` photons sit in mode `i` with
/// amplitude `βᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoonProbe {
    betas: Vec<Complex64>,
    photon_number: u32,
}

impl NoonProbe {
    pub fn new(betas: Vec<Complex64>, photon_number: u32) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("N00N probe needs at least one mode"));
        }
        if photon_number == 0 {
            return Err(Error::invalid("photon number must be >= 1"));
        }
        let norm: f64 = betas.iter().map(|b| b.norm_sqr()).sum();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(NoonProbe {
            betas,
            photon_number,
        })
    }

    /// Real amplitudes from branch probabilities `|βᵢ|²`. The weights are
    /// rescaled to sum to one.
    pub fn from_weights(weights: &[f64], photon_number: u32) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("branch weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroEnergy);
        }
        Self::new(
            weights
                .iter()
                .map(|w| Complex64::new((w / total).sqrt(), 0.0))
                .collect(),
            photon_number,
        )
    }

    /// GHZ-type probe with equal weight on all `d + 1` branches.
    pub fn ghz(d: usize, photon_number: u32) -> Result<Self> {
        ModeCount::from_d(d)?;
        Self::from_weights(&vec![1.0; d + 1], photon_number)
    }

    /// Probe optimal for the common-reference cost: `|β₀|² = √d |βᵢ|²`.
    pub fn optimal_common(d: usize, photon_number: u32) -> Result<Self> {
        ModeCount::from_d(d)?;
        let mut w = vec![1.0; d + 1];
        w[0] = (d as f64).sqrt();
        Self::from_weights(&w, photon_number)
    }

    pub fn betas(&self) -> &[Complex64] {
        &self.betas
    }

    pub fn photon_number(&self) -> u32 {
        self.photon_number
    }

    pub fn modes(&self) -> usize {
        self.betas.len()
    }

    /// `|βᵢ|²` per branch.
    pub fn weights(&self) -> Vec<f64> {
        self.betas.iter().map(|b| b.norm_sqr()).collect()
    }
}

/// Phases `φᵢ` in radians, one per mode. No wrapping is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(Vec<f64>);

impl PhaseVector {
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("phases must be finite"));
        }
        Ok(PhaseVector(phases))
    }

    pub fn zeros(modes: usize) -> Self {
        PhaseVector(vec![0.0; modes])
    }

    /// `(0, δ₀,₁, …, δ₀,d)`: mode 0 held at zero phase.
    pub fn from_offsets(offsets: &[f64]) -> Result<Self> {
        let mut phases = Vec::with_capacity(offsets.len() + 1);
        phases.push(0.0);
        phases.extend_from_slice(offsets);
        Self::new(phases)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Adds `θ` to every phase.
    pub fn shifted(&self, theta: f64) -> Self {
        PhaseVector(self.0.iter().map(|p| p + theta).collect())
    }
}

/// The normalized `N`-photon component of a probe with its weight `p_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockLayer {
    photon_number: u32,
    weight: f64,
    occupations: Vec<Vec<u32>>,
    amplitudes: Vec<Complex64>,
}

impl FockLayer {
    /// Builds a layer from explicit occupation/amplitude pairs.
    pub fn new(
        photon_number: u32,
        weight: f64,
        occupations: Vec<Vec<u32>>,
        amplitudes: Vec<Complex64>,
    ) -> Result<Self> {
        if occupations.len() != amplitudes.len() {
            return Err(Error::DimensionMismatch {
                expected: occupations.len(),
                found: amplitudes.len(),
            });
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::invalid(format!("layer weight {weight} outside [0, 1]")));
        }
        let modes = occupations.first().map_or(0, |k| k.len());
        for k in &occupations {
            if k.len() != modes {
                return Err(Error::DimensionMismatch {
                    expected: modes,
                    found: k.len(),
                });
            }
            if k.iter().sum::<u32>() != photon_number {
                return Err(Error::invalid(format!(
                    "occupation {k:?} does not sum to {photon_number}"
                )));
            }
        }
        let layer = FockLayer {
            photon_number,
            weight,
            occupations,
            amplitudes,
        };
        let norm = layer.norm_sqr();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(layer)
    }

    /// The `N`-photon sector of a N00N probe: one basis state per branch.
    pub fn from_noon(probe: &NoonProbe) -> Self {
        let modes = probe.modes();
        let n = probe.photon_number();
        let occupations = (0..modes)
            .map(|i| {
                let mut k = vec![0; modes];
                k[i] = n;
                k
            })
            .collect();
        FockLayer {
            photon_number: n,
            weight: 1.0,
            occupations,
            amplitudes: probe.betas().to_vec(),
        }
    }

    pub fn photon_number(&self) -> u32 {
        self.photon_number
    }

    /// `p_N`.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn modes(&self) -> usize {
        self.occupations.first().map_or(0, |k| k.len())
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn occupations(&self) -> &[Vec<u32>] {
        &self.occupations
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], Complex64)> + '_ {
        self.occupations
            .iter()
            .map(Vec::as_slice)
            .zip(self.amplitudes.iter().copied())
    }

    pub fn amplitude(&self, occupation: &[u32]) -> Option<Complex64> {
        self.iter()
            .find(|(k, _)| *k == occupation)
            .map(|(_, a)| a)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `Cov(n̂ᵢ, n̂ⱼ)` in this layer.
    ///
    /// # Panics
    ///
    /// If either mode index is out of range.
    pub fn number_covariance(&self, i: usize, j: usize) -> f64 {
        let modes = self.modes();
        assert!(i < modes && j < modes, "mode index out of range");
        let (mut mij, mut mi, mut mj) = (0.0, 0.0, 0.0);
        for (k, a) in self.iter() {
            let p = a.norm_sqr();
            let (ki, kj) = (f64::from(k[i]), f64::from(k[j]));
            mij += p * ki * kj;
            mi += p * ki;
            mj += p * kj;
        }
        mij - mi * mj
    }
}

/// Free-function form of [`FockLayer::number_covariance`].
pub fn number_covariance(layer: &FockLayer, i: usize, j: usize) -> f64 {
    layer.number_covariance(i, j)
}

/// All occupation vectors of `modes` modes holding `n` photons, in
/// lexicographically descending order (`k₀ = n` first).
pub fn occupations(modes: usize, n: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(modes);
    fill_occupations(modes, n, &mut current, &mut out);
    out
}

fn fill_occupations(modes: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if modes == 0 {
        return;
    }
    if modes == 1 {
        current.push(remaining);
        out.push(current.clone());
        current.pop();
        return;
    }
    for k in (0..=remaining).rev() {
        current.push(k);
        fill_occupations(modes - 1, remaining - k, current, out);
        current.pop();
    }
}

fn ln_factorials(max: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(max + 1);
    table.push(0.0);
    for n in 1..=max {
        let prev = table[n - 1];
        table.push(prev + (n as f64).ln());
    }
    table
}

/// Poisson weights `p_N = Eᴺ e^{−E} / N!` for `N = 0..=n_max`.
pub fn poisson_weights(energy: f64, n_max: usize) -> Vec<f64> {
    let lnf = ln_factorials(n_max);
    (0..=n_max)
        .map(|n| (n as f64 * energy.ln() - energy - lnf[n]).exp())
        .collect()
}

/// Smallest `N_max` with `Σ_{N > N_max} p_N < tail_mass`.
pub fn truncation_order(energy: f64, tail_mass: f64) -> usize {
    // Beyond this the Poisson tail is far below any representable tail_mass.
    let ceiling = (energy + 40.0 * energy.sqrt() + 60.0).ceil() as usize;
    let p = poisson_weights(energy, ceiling);
    let mut tail = 0.0;
    let mut tails = vec![0.0; ceiling + 1];
    for n in (0..=ceiling).rev() {
        tails[n] = tail;
        tail += p[n];
    }
    tails
        .iter()
        .position(|&t| t < tail_mass)
        .unwrap_or(ceiling)
}

/// Fock-layer decomposition of a coherent probe at zero phase.
///
/// Layer amplitudes are `√(N!/∏kᵢ!) ∏ (αᵢ/√E)^{kᵢ}` over all occupations of
/// `N` photons; layers run from `N = 0` to the truncation order set by
/// `tail_mass`.
pub fn decompose_coherent(probe: &CoherentProbe, tail_mass: f64) -> Result<Vec<FockLayer>> {
    if !(tail_mass > 0.0 && tail_mass < 1.0) {
        return Err(Error::invalid(format!(
            "tail mass must lie in (0, 1), got {tail_mass}"
        )));
    }
    let energy = probe.total_energy();
    if energy <= 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let n_max = truncation_order(energy, tail_mass);
    let lnf = ln_factorials(n_max);
    let weights = poisson_weights(energy, n_max);
    let scaled: Vec<Complex64> = probe
        .amplitudes()
        .iter()
        .map(|a| a / energy.sqrt())
        .collect();
    let modes = probe.modes();

    Ok((0..=n_max)
        .map(|n| {
            let occupations = occupations(modes, n as u32);
            let amplitudes = occupations
                .iter()
                .map(|k| {
                    let ln_multinomial =
                        lnf[n] - k.iter().map(|&ki| lnf[ki as usize]).sum::<f64>();
                    let product: Complex64 = scaled
                        .iter()
                        .zip(k)
                        .map(|(a, &ki)| a.powi(ki as i32))
                        .product();
                    product * (0.5 * ln_multinomial).exp()
                })
                .collect();
            FockLayer {
                photon_number: n as u32,
                weight: weights[n],
                occupations,
                amplitudes,
            }
        })
        .collect())
}

/// Imprints `Û(φ) = exp(i Σ φᵢ n̂ᵢ)` on a layer.
pub fn apply_phases(layer: &FockLayer, phases: &PhaseVector) -> Result<FockLayer> {
    if phases.len() != layer.modes() {
        return Err(Error::DimensionMismatch {
            expected: layer.modes(),
            found: phases.len(),
        });
    }
    let phi = phases.as_slice();
    let amplitudes = layer
        .iter()
        .map(|(k, a)| {
            let angle: f64 = k.iter().zip(phi).map(|(&ki, p)| f64::from(ki) * p).sum();
            a * Complex64::from_polar(1.0, angle)
        })
        .collect();
    Ok(FockLayer {
        amplitudes,
        ..layer.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Expands `e^{−E/2} (Σ αᵢ a†ᵢ)ᴺ / N! |vac⟩` monomial by monomial and
    /// applies `a†ᵏ|0⟩ = √k! |k⟩`, then divides by `√p_N`.
    fn brute_force_layer(alphas: &[Complex64], n: u32) -> BTreeMap<Vec<u32>, Complex64> {
        let modes = alphas.len();
        let mut poly: BTreeMap<Vec<u32>, Complex64> = BTreeMap::new();
        poly.insert(vec![0; modes], c(1.0, 0.0));
        for _ in 0..n {
            let mut next = BTreeMap::new();
            for (k, coef) in &poly {
                for (i, a) in alphas.iter().enumerate() {
                    let mut k2 = k.clone();
                    k2[i] += 1;
                    *next.entry(k2).or_insert(c(0.0, 0.0)) += coef * a;
                }
            }
            poly = next;
        }
        let energy: f64 = alphas.iter().map(|a| a.norm_sqr()).sum();
        let fact = |m: u32| (1..=m).map(f64::from).product::<f64>();
        let p_n = energy.powi(n as i32) * (-energy).exp() / fact(n);
        poly.into_iter()
            .map(|(k, coef)| {
                let sqrt_fact: f64 = k.iter().map(|&ki| fact(ki).sqrt()).product();
                let amp = coef * sqrt_fact * (-energy / 2.0).exp() / fact(n) / p_n.sqrt();
                (k, amp)
            })
            .collect()
    }

    #[test]
    fn single_mode_poisson_weights() {
        let probe = CoherentProbe::new(vec![c(1.0, 0.0)]).unwrap();
        let layers = decompose_coherent(&probe, 1e-10).unwrap();
        let e1 = (-1.0_f64).exp();
        assert!((layers[0].weight() - e1).abs() < 1e-15);
        assert!((layers[1].weight() - e1).abs() < 1e-15);
        assert!((layers[2].weight() - e1 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn vacuum_probe_is_rejected() {
        assert_eq!(
            CoherentProbe::new(vec![c(0.0, 0.0); 3]),
            Err(Error::ZeroEnergy)
        );
        assert_eq!(
            CoherentProbe::from_energies(&[0.0, 0.0]),
            Err(Error::ZeroEnergy)
        );
    }

    #[test]
    fn balanced_two_mode_layer_matches_direct_expansion() {
        let a = (2.0_f64 / 2.0).sqrt();
        let probe = CoherentProbe::new(vec![c(a, 0.0), c(a, 0.0)]).unwrap();
        let layers = decompose_coherent(&probe, 1e-10).unwrap();
        let layer = &layers[2];
        assert_eq!(layer.occupations(), &[vec![2, 0], vec![1, 1], vec![0, 2]]);
        let expected = [0.5, 1.0 / 2.0_f64.sqrt(), 0.5];
        for (amp, want) in layer.amplitudes().iter().zip(expected) {
            assert!((amp - c(want, 0.0)).norm() < 1e-14);
        }
        let oracle = brute_force_layer(probe.amplitudes(), 2);
        for (k, amp) in layer.iter() {
            assert!((oracle[k] - amp).norm() < 1e-14);
        }
    }

    #[test]
    fn complex_three_mode_layers_match_direct_expansion() {
        let probe = CoherentProbe::new(vec![c(0.8, 0.3), c(-0.2, 0.9), c(0.5, -0.4)]).unwrap();
        let layers = decompose_coherent(&probe, 1e-10).unwrap();
        for n in 0..5 {
            let oracle = brute_force_layer(probe.amplitudes(), n);
            let layer = &layers[n as usize];
            assert_eq!(layer.len(), oracle.len());
            for (k, amp) in layer.iter() {
                assert!((oracle[k] - amp).norm() < 1e-13, "N={n} k={k:?}");
            }
        }
    }

    #[test]
    fn occupation_order_is_descending_lexicographic() {
        let occ = occupations(3, 2);
        assert_eq!(
            occ,
            vec![
                vec![2, 0, 0],
                vec![1, 1, 0],
                vec![1, 0, 1],
                vec![0, 2, 0],
                vec![0, 1, 1],
                vec![0, 0, 2]
            ]
        );
        assert_eq!(occupations(5, 4).len(), 70);
    }

    #[test]
    fn truncation_meets_tail_mass() {
        for &e in &[0.1, 1.0, 3.7, 6.0] {
            for &tail in &[1e-3, 1e-10] {
                let n_max = truncation_order(e, tail);
                let p = poisson_weights(e, n_max + 200);
                let beyond: f64 = p[n_max + 1..].iter().sum();
                assert!(beyond < tail);
                if n_max > 0 {
                    let beyond_prev: f64 = p[n_max..].iter().sum();
                    assert!(beyond_prev >= tail, "E={e} tail={tail} not minimal");
                }
            }
        }
    }

    #[test]
    fn bad_tail_mass_is_rejected() {
        let probe = CoherentProbe::from_energies(&[1.0, 1.0]).unwrap();
        assert!(decompose_coherent(&probe, 0.0).is_err());
        assert!(decompose_coherent(&probe, 1.0).is_err());
    }

    #[test]
    fn zero_phases_leave_layer_unchanged() {
        let probe = CoherentProbe::from_energies(&[0.5, 1.0, 1.5]).unwrap();
        let layer = &decompose_coherent(&probe, 1e-6).unwrap()[3];
        let shifted = apply_phases(layer, &PhaseVector::zeros(3)).unwrap();
        assert_eq!(&shifted, layer);
    }

    #[test]
    fn global_phase_multiplies_by_exp_i_n_theta() {
        let probe = CoherentProbe::from_energies(&[0.5, 1.0, 1.5]).unwrap();
        let layer = &decompose_coherent(&probe, 1e-6).unwrap()[3];
        let theta = 0.41;
        let shifted = apply_phases(layer, &PhaseVector::new(vec![theta; 3]).unwrap()).unwrap();
        let factor = Complex64::from_polar(1.0, 3.0 * theta);
        for (a, b) in layer.amplitudes().iter().zip(shifted.amplitudes()) {
            assert!((a * factor - b).norm() < 1e-14);
            assert!((a.norm_sqr() - b.norm_sqr()).abs() < 1e-15);
        }
    }

    #[test]
    fn single_excitation_picks_up_its_mode_phase() {
        let layer = FockLayer::new(
            1,
            1.0,
            vec![vec![1, 0], vec![0, 1]],
            vec![c(1.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        let shifted = apply_phases(&layer, &PhaseVector::new(vec![0.3, 0.7]).unwrap()).unwrap();
        assert!((shifted.amplitudes()[0] - Complex64::from_polar(1.0, 0.3)).norm() < 1e-15);
    }

    #[test]
    fn phase_dimension_mismatch() {
        let layer = FockLayer::from_noon(&NoonProbe::ghz(2, 1).unwrap());
        assert_eq!(
            apply_phases(&layer, &PhaseVector::zeros(2)),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 2
            })
        );
    }

    #[test]
    fn deterministic_number_has_zero_variance() {
        let layer = FockLayer::new(3, 1.0, vec![vec![2, 1]], vec![c(0.0, 1.0)]).unwrap();
        assert_eq!(layer.number_covariance(0, 0), 0.0);
        assert_eq!(layer.number_covariance(0, 1), 0.0);
    }

    #[test]
    fn single_photon_split_covariances() {
        let s = 0.5_f64.sqrt();
        let layer =
            FockLayer::new(1, 1.0, vec![vec![1, 0], vec![0, 1]], vec![c(s, 0.0), c(s, 0.0)])
                .unwrap();
        assert!((number_covariance(&layer, 0, 0) - 0.25).abs() < 1e-15);
        assert!((number_covariance(&layer, 0, 1) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn layer_weighted_covariance_approaches_closed_form() {
        let probe = CoherentProbe::from_energies(&[1.0, 1.0]).unwrap();
        let mut previous = f64::INFINITY;
        for tail in [1e-2, 1e-4, 1e-8, 1e-12] {
            let layers = decompose_coherent(&probe, tail).unwrap();
            let h11: f64 = 4.0
                * layers
                    .iter()
                    .map(|l| l.weight() * l.number_covariance(1, 1))
                    .sum::<f64>();
            let err = (h11 - 2.0).abs();
            assert!(err <= previous + 1e-15);
            previous = err;
        }
        assert!(previous < 1e-10);
    }

    #[test]
    fn layer_constructor_validates() {
        assert!(FockLayer::new(1, 1.0, vec![vec![1, 1]], vec![c(1.0, 0.0)]).is_err());
        assert!(FockLayer::new(1, 1.0, vec![vec![1, 0]], vec![c(0.5, 0.0)]).is_err());
        assert!(FockLayer::new(1, 2.0, vec![vec![1, 0]], vec![c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn noon_probe_validation() {
        assert!(NoonProbe::new(vec![c(1.0, 0.0), c(1.0, 0.0)], 1).is_err());
        assert!(NoonProbe::new(vec![c(1.0, 0.0)], 0).is_err());
        let p = NoonProbe::optimal_common(4, 2).unwrap();
        let w = p.weights();
        assert!((w[0] / w[1] - 2.0).abs() < 1e-12);
        assert!(ModeCount::from_d(0).is_err());
        assert_eq!(ModeCount::from_d(3).unwrap().modes(), 4);
    }

    fn arb_probe() -> impl Strategy<Value = CoherentProbe> {
        prop::collection::vec((0.05..1.5f64, -3.2..3.2f64), 2..=4).prop_map(|v| {
            CoherentProbe::new(v.into_iter().map(|(r, t)| Complex64::from_polar(r, t)).collect())
                .unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn poisson_and_multinomial_normalization(probe in arb_probe(), tail in 1e-10..1e-2f64) {
            let layers = decompose_coherent(&probe, tail).unwrap();
            let e = probe.total_energy();
            let total: f64 = layers.iter().map(FockLayer::weight).sum();
            prop_assert!(total >= 1.0 - tail);
            let fact = |m: u32| (1..=m).map(f64::from).product::<f64>();
            for l in &layers {
                let n = l.photon_number();
                let exact = e.powi(n as i32) * (-e).exp() / fact(n);
                prop_assert!((l.weight() - exact).abs() <= 1e-12 * exact);
                prop_assert!((l.norm_sqr() - 1.0).abs() < 1e-10);
                prop_assert!(l.occupations().iter().all(|k| k.iter().sum::<u32>() == n));
            }
        }

        #[test]
        fn phases_preserve_moduli_and_covariances(
            probe in arb_probe(),
            raw in prop::collection::vec(-3.0..3.0f64, 4),
            theta in -3.0..3.0f64,
        ) {
            let layers = decompose_coherent(&probe, 1e-6).unwrap();
            let m = probe.modes();
            let phases = PhaseVector::new(raw[..m].to_vec()).unwrap();
            for l in layers.iter().take(5) {
                let a = apply_phases(l, &phases).unwrap();
                let b = apply_phases(l, &phases.shifted(theta)).unwrap();
                for (x, y) in l.amplitudes().iter().zip(a.amplitudes()) {
                    prop_assert!((x.norm() - y.norm()).abs() <= 1e-15 * x.norm().max(1.0));
                }
                for i in 0..m {
                    for j in 0..m {
                        prop_assert!((a.number_covariance(i, j) - b.number_covariance(i, j)).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
