//! Monte-Carlo check that a measurement attains `H⁻¹/M`.
//!
//! Each trial draws `M` outcomes from the Born probabilities at the true
//! offsets, fits the offsets by local maximum likelihood and contributes one
//! estimate; the spread of the estimates over trials is the empirical
//! covariance.
//!
//! Randomness: trial `t` uses `ChaCha8Rng::seed_from_u64(seed)` with
//! `set_stream(t)`, so results do not depend on thread count or order. The
//! bootstrap uses the same seed on stream `u64::MAX`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::fock::{NoonProbe, PhaseVector};
use crate::linalg;
use crate::measurement::{outcome_probabilities, probabilities_with_gradient, MeasurementSet};
use crate::qfim::invert_restricted;
use crate::reparam::{CostMatrix, Parametrization};
use crate::{Error, Result};

/// Largest admissible true offset, radians.
pub const MAX_OFFSET: f64 = 0.2;
/// Expected counts per outcome below which a warning is issued.
pub const MIN_EXPECTED_COUNTS: f64 = 5.0;
/// Tolerated fraction of trials where Newton fails and the fallback is used.
pub const MAX_FALLBACK_RATE: f64 = 0.01;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-10;

/// `0.05·(1, 2, …, d)/d` radians.
pub fn default_offsets(d: usize) -> Vec<f64> {
    (1..=d).map(|i| 0.05 * i as f64 / d as f64).collect()
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub probe: NoonProbe,
    pub set: MeasurementSet,
    /// True `δ₀,₁ … δ₀,d`.
    pub true_offsets: Vec<f64>,
    pub shots_per_trial: u64,
    pub trials: usize,
    pub seed: u64,
}

impl SimConfig {
    /// Config with [`default_offsets`].
    pub fn new(probe: NoonProbe, set: MeasurementSet, shots_per_trial: u64, trials: usize, seed: u64) -> Self {
        let d = set.d();
        SimConfig {
            probe,
            set,
            true_offsets: default_offsets(d),
            shots_per_trial,
            trials,
            seed,
        }
    }

    pub fn d(&self) -> usize {
        self.set.d()
    }

    fn phases_at(&self, offsets: &[f64]) -> Vec<f64> {
        std::iter::once(0.0).chain(offsets.iter().copied()).collect()
    }

    /// Checks preconditions; returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.shots_per_trial == 0 {
            return Err(Error::invalid("shots per trial must be >= 1"));
        }
        if self.trials < 2 {
            return Err(Error::invalid("need at least two trials for a covariance"));
        }
        if self.true_offsets.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), found: self.true_offsets.len() });
        }
        if let Some(x) = self.true_offsets.iter().find(|x| !x.is_finite() || x.abs() > MAX_OFFSET) {
            return Err(Error::invalid(format!("true offset {x} outside |δ| <= {MAX_OFFSET}")));
        }
        let p = outcome_probabilities(&self.set, &self.probe, &PhaseVector::new(self.phases_at(&self.true_offsets))?)?;
        let min_p = p.iter().copied().fold(f64::INFINITY, f64::min);
        let mut warnings = Vec::new();
        let expected = self.shots_per_trial as f64 * min_p;
        if expected < MIN_EXPECTED_COUNTS {
            let msg = format!("smallest expected outcome count is {expected:.3} (< {MIN_EXPECTED_COUNTS})");
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(warnings)
    }
}

/// One cost's empirical vs predicted total variance.
#[derive(Debug, Clone, PartialEq)]
pub struct CostComparison {
    pub cost: Parametrization,
    pub empirical: f64,
    pub predicted: f64,
    pub ratio: f64,
    /// Bootstrap standard error of `empirical`.
    pub bootstrap_se: f64,
}

impl CostComparison {
    /// `empirical ≥ (1 − 3σ/empirical)·predicted`.
    pub fn respects_bound(&self) -> bool {
        self.empirical >= (1.0 - 3.0 * self.bootstrap_se / self.empirical) * self.predicted
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub shots_per_trial: u64,
    pub trials: usize,
    pub seed: u64,
    pub true_offsets: Vec<f64>,
    pub empirical_covariance: DMatrix<f64>,
    /// `H⁻¹ / M` with `H` the restricted QFIM.
    pub predicted: DMatrix<f64>,
    pub comparisons: Vec<CostComparison>,
    pub estimator_bias: Vec<f64>,
    /// Trials where the moment estimator replaced Newton.
    pub fallbacks: usize,
    /// Outcome counts, one row per trial.
    pub tallies: Vec<Vec<u64>>,
    /// Fitted offsets, one row per trial.
    pub estimates: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl SimResult {
    pub fn comparison(&self, cost: Parametrization) -> &CostComparison {
        self.comparisons.iter().find(|c| c.cost == cost).expect("all three costs are compared")
    }

    pub fn respects_bound(&self) -> bool {
        self.comparisons.iter().all(CostComparison::respects_bound)
    }

    /// Every ratio at most `1 + tol`.
    pub fn saturates(&self, tol: f64) -> bool {
        self.comparisons.iter().all(|c| c.ratio <= 1.0 + tol)
    }
}

fn sample_counts(p: &[f64], shots: u64, rng: &mut impl Rng) -> Vec<u64> {
    let mut counts = vec![0u64; p.len()];
    let mut left = shots;
    let mut mass = 1.0;
    for (j, &pj) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if j + 1 == p.len() {
            counts[j] = left;
            break;
        }
        let q = (pj / mass).clamp(0.0, 1.0);
        let k = Binomial::new(left, q).expect("probability clamped to [0, 1]").sample(rng);
        counts[j] = k;
        left -= k;
        mass -= pj;
        if mass <= 0.0 {
            break;
        }
    }
    counts
}

fn log_likelihood(cfg: &SimConfig, counts: &[u64], offsets: &[f64]) -> f64 {
    let (p, _) = probabilities_with_gradient(&cfg.set, &cfg.probe, &cfg.phases_at(offsets));
    counts
        .iter()
        .zip(&p)
        .filter(|(&n, _)| n > 0)
        .map(|(&n, &pj)| if pj > 0.0 { n as f64 * pj.ln() } else { f64::NEG_INFINITY })
        .sum()
}

/// Score and observed information of the log-likelihood.
fn score_and_information(cfg: &SimConfig, counts: &[u64], offsets: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let d = cfg.d();
    let n = cfg.probe.photon_number() as f64;
    let phases = cfg.phases_at(offsets);
    let (p, dp) = probabilities_with_gradient(&cfg.set, &cfg.probe, &phases);
    let beta = cfg.probe.betas();
    let mut score = DVector::zeros(d);
    let mut info = DMatrix::zeros(d, d);
    for (j, u) in cfg.set.vectors().iter().enumerate() {
        let nj = counts[j] as f64;
        if nj == 0.0 || p[j] <= 0.0 {
            continue;
        }
        // A_j = Σ_i c_i, c_i = conj(u_i) β_i e^{iNφ_i}
        let c: Vec<_> = (0..=d)
            .map(|i| u[i].conj() * beta[i] * num_complex::Complex64::from_polar(1.0, n * phases[i]))
            .collect();
        let amp: num_complex::Complex64 = c.iter().sum();
        for a in 0..d {
            score[a] += nj * dp[(j, a)] / p[j];
            for b in 0..d {
                // ∂a∂b p = 2N² Re(conj(c_a) c_b − δ_ab conj(A) c_a)
                let mut h = c[a + 1].conj() * c[b + 1];
                if a == b {
                    h -= amp.conj() * c[a + 1];
                }
                let d2p = 2.0 * n * n * h.re;
                info[(a, b)] -= nj * (d2p / p[j] - dp[(j, a)] * dp[(j, b)] / (p[j] * p[j]));
            }
        }
    }
    (score, info)
}

/// Newton ascent from the truth with step halving. `None` if it does not
/// settle.
fn newton_mle(cfg: &SimConfig, counts: &[u64]) -> Option<Vec<f64>> {
    let mut x = cfg.true_offsets.clone();
    let mut ll = log_likelihood(cfg, counts, &x);
    for _ in 0..NEWTON_MAX_ITER {
        let (g, info) = score_and_information(cfg, counts, &x);
        // Fall back to the gradient direction when the observed information
        // is not positive definite.
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => g.clone() / (linalg::max_abs(&info).max(1.0)),
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, s)| xi + t * s).collect();
            let cl = log_likelihood(cfg, counts, &cand);
            if cl.is_finite() && cl >= ll - 1e-12 * ll.abs() {
                accepted = Some((cand, cl));
                break;
            }
            t *= 0.5;
        }
        let (cand, cl) = accepted?;
        let moved = x.iter().zip(&cand).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = cand;
        ll = cl;
        if moved < NEWTON_TOL {
            return x.iter().all(|v| v.is_finite()).then_some(x);
        }
    }
    None
}

/// Linear inversion of the frequency deviations through the outcome
/// Jacobian at the truth.
fn moment_estimate(cfg: &SimConfig, counts: &[u64]) -> Vec<f64> {
    let (p, dp) = probabilities_with_gradient(&cfg.set, &cfg.probe, &cfg.phases_at(&cfg.true_offsets));
    let m = cfg.shots_per_trial as f64;
    let dev = DVector::from_iterator(p.len(), counts.iter().zip(&p).map(|(&n, &pj)| n as f64 / m - pj));
    let svd = dp.clone().svd(true, true);
    let delta = svd.solve(&dev, 1e-12).unwrap_or_else(|_| DVector::zeros(cfg.d()));
    cfg.true_offsets.iter().zip(delta.iter()).map(|(t, s)| t + s).collect()
}

struct Trial {
    counts: Vec<u64>,
    estimate: Vec<f64>,
    fallback: bool,
}

fn run_trial(cfg: &SimConfig, p: &[f64], index: usize) -> Trial {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let counts = sample_counts(p, cfg.shots_per_trial, &mut rng);
    match newton_mle(cfg, &counts) {
        Some(estimate) => Trial { counts, estimate, fallback: false },
        None => Trial { estimate: moment_estimate(cfg, &counts), counts, fallback: true },
    }
}

fn covariance(estimates: &[&[f64]], d: usize) -> (DMatrix<f64>, DVector<f64>) {
    let t = estimates.len() as f64;
    let mut mean = DVector::zeros(d);
    for e in estimates {
        mean += DVector::from_column_slice(e);
    }
    mean /= t;
    let mut cov = DMatrix::zeros(d, d);
    for e in estimates {
        let x = DVector::from_column_slice(e) - &mean;
        cov += &x * x.transpose();
    }
    (cov / (t - 1.0), mean)
}

/// Runs `config.trials` independent trials.
pub fn run(config: &SimConfig) -> Result<SimResult> {
    let warnings = config.validate()?;
    let d = config.d();
    let p = outcome_probabilities(&config.set, &config.probe, &PhaseVector::new(config.phases_at(&config.true_offsets))?)?;
    let trials: Vec<Trial> = (0..config.trials).into_par_iter().map(|t| run_trial(config, &p, t)).collect();

    let fallbacks = trials.iter().filter(|t| t.fallback).count();
    if fallbacks as f64 > MAX_FALLBACK_RATE * config.trials as f64 {
        return Err(Error::NonConvergence(format!(
            "maximum-likelihood fit failed in {fallbacks} of {} trials",
            config.trials
        )));
    }

    let estimates: Vec<&[f64]> = trials.iter().map(|t| t.estimate.as_slice()).collect();
    let (cov, mean) = covariance(&estimates, d);
    let m = config.shots_per_trial as f64;
    let predicted = invert_restricted(&config.probe)? / m;

    let costs: Vec<CostMatrix> = Parametrization::ALL
        .iter()
        .map(|&k| CostMatrix::for_parametrization(k, d))
        .collect::<Result<_>>()?;

    // Bootstrap over trials.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::MAX);
    let mut boot: Vec<Vec<f64>> = vec![Vec::with_capacity(BOOTSTRAP_RESAMPLES); costs.len()];
    let mut pick: Vec<&[f64]> = Vec::with_capacity(estimates.len());
    for _ in 0..BOOTSTRAP_RESAMPLES {
        pick.clear();
        for _ in 0..estimates.len() {
            pick.push(estimates[rng.random_range(0..estimates.len())]);
        }
        let (c, _) = covariance(&pick, d);
        for (k, r) in costs.iter().enumerate() {
            boot[k].push(linalg::trace_product(r.matrix(), &c)?);
        }
    }

    let mut comparisons = Vec::with_capacity(costs.len());
    for (k, r) in costs.iter().enumerate() {
        let empirical = linalg::trace_product(r.matrix(), &cov)?;
        let pred = linalg::trace_product(r.matrix(), &predicted)?;
        let b = &boot[k];
        let bm = b.iter().sum::<f64>() / b.len() as f64;
        let se = (b.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (b.len() - 1) as f64).sqrt();
        comparisons.push(CostComparison {
            cost: Parametrization::ALL[k],
            empirical,
            predicted: pred,
            ratio: empirical / pred,
            bootstrap_se: se,
        });
    }

    Ok(SimResult {
        shots_per_trial: config.shots_per_trial,
        trials: config.trials,
        seed: config.seed,
        true_offsets: config.true_offsets.clone(),
        estimator_bias: mean.iter().zip(&config.true_offsets).map(|(m, t)| m - t).collect(),
        empirical_covariance: cov,
        predicted,
        comparisons,
        fallbacks,
        estimates: trials.iter().map(|t| t.estimate.clone()).collect(),
        tallies: trials.into_iter().map(|t| t.counts).collect(),
        warnings,
    })
}

/// [`run`] at each shot count, ascending.
pub fn sweep_shots(config: &SimConfig, shots: &[u64]) -> Result<Vec<SimResult>> {
    if shots.is_empty() {
        return Err(Error::invalid("empty shot list"));
    }
    if shots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("shot list must be strictly ascending"));
    }
    shots
        .iter()
        .map(|&m| {
            let mut c = config.clone();
            c.shots_per_trial = m;
            run(&c)
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
