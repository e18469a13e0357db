//! Energy allocations minimizing `Tr(R H⁻¹)` over the probe simplex.
//!
//! With the restricted inverse `δᵢⱼ/4wᵢ + 1/4w₀`, any cost matrix gives
//! `S = ¼ (Σᵢ₌₁ᵈ Rᵢᵢ / wᵢ + (Σᵢⱼ Rᵢⱼ) / w₀)`. Minimizing `Σ cᵢ / Eᵢ` under
//! `Σ Eᵢ = E` puts `Eᵢ ∝ √cᵢ`, which is where every closed form below comes
//! from. [`optimize_numeric`] re-derives the optima by projected descent on
//! the numerically inverted QFIM and shares no code with the closed forms.

use std::fmt;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::fock::{CoherentProbe, NoonProbe};
use crate::linalg;
use crate::qfim::{invert_restricted, SuperselectedProbe};
use crate::reparam::{cost_all_pairs, cost_common, cost_ring, scalar_bound, CostKind, CostMatrix};
use crate::{Error, Result};

/// Interior floor on each mode's energy during numeric optimization.
pub const ENERGY_FLOOR: f64 = 1e-9;
/// Relative objective change treated as convergence.
pub const OBJECTIVE_TOL: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 100_000;
pub const STARTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbeFamily {
    /// Product of coherent states with mean photon number `E`.
    Coherent,
    /// Generalized N00N state with fixed photon number `N`.
    Noon,
}

impl fmt::Display for ProbeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeFamily::Coherent => "coherent",
            ProbeFamily::Noon => "noon",
        })
    }
}

/// Per-mode energies `Eᵢ` with the bound they achieve.
///
/// For N00N probes the energies are `N|βᵢ|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    energies: Vec<f64>,
    total: f64,
    achieved_bound: f64,
    cost_kind: CostKind,
    family: ProbeFamily,
}

impl Allocation {
    /// Builds an allocation and evaluates its bound through the closed-form
    /// restricted inverse.
    pub fn evaluate(energies: Vec<f64>, cost: &CostMatrix, family: ProbeFamily) -> Result<Self> {
        if energies.len() != cost.d() + 1 {
            return Err(Error::DimensionMismatch {
                expected: cost.d() + 1,
                found: energies.len(),
            });
        }
        let total: f64 = energies.iter().sum();
        let achieved_bound = match family {
            ProbeFamily::Coherent => bound_for(&CoherentProbe::from_energies(&energies)?, cost)?,
            ProbeFamily::Noon => bound_for(&noon_from_energies(&energies, total)?, cost)?,
        };
        Ok(Allocation {
            energies,
            total,
            achieved_bound,
            cost_kind: cost.kind(),
            family,
        })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// `Eᵢ / E`, equal to `|βᵢ|²` for N00N probes.
    pub fn fractions(&self) -> Vec<f64> {
        self.energies.iter().map(|e| e / self.total).collect()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn achieved_bound(&self) -> f64 {
        self.achieved_bound
    }

    pub fn cost_kind(&self) -> CostKind {
        self.cost_kind
    }

    pub fn family(&self) -> ProbeFamily {
        self.family
    }

    pub fn d(&self) -> usize {
        self.energies.len() - 1
    }

    pub fn coherent_probe(&self) -> Result<CoherentProbe> {
        CoherentProbe::from_energies(&self.energies)
    }

    /// The N00N probe with the same mode fractions and `N` photons.
    pub fn noon_probe(&self, photons: u32) -> Result<NoonProbe> {
        NoonProbe::from_weights(&self.fractions(), photons)
    }

    /// Same fractions for a N00N probe of `photons` photons.
    pub fn as_noon(&self, photons: u32, cost: &CostMatrix) -> Result<Allocation> {
        let n = f64::from(photons);
        let energies = self.fractions().into_iter().map(|f| f * n).collect();
        Allocation::evaluate(energies, cost, ProbeFamily::Noon)
    }
}

fn noon_from_energies(energies: &[f64], total: f64) -> Result<NoonProbe> {
    let n = total.round();
    if n < 1.0 || (total - n).abs() > 1e-9 * n {
        return Err(Error::invalid(format!(
            "N00N allocation needs an integer photon number, got {total}"
        )));
    }
    NoonProbe::from_weights(energies, n as u32)
}

fn bound_for<P: SuperselectedProbe>(probe: &P, cost: &CostMatrix) -> Result<f64> {
    Ok(scalar_bound(&invert_restricted(probe)?, cost)?.value)
}

fn check_energy(energy: f64) -> Result<()> {
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::invalid(format!("total energy must be > 0, got {energy}")));
    }
    Ok(())
}

/// Splits `energy` proportionally to `√cᵢ`.
fn sqrt_split(coefficients: &[f64], energy: f64) -> Vec<f64> {
    let roots: Vec<f64> = coefficients.iter().map(|c| c.sqrt()).collect();
    let total: f64 = roots.iter().sum();
    roots.iter().map(|r| energy * r / total).collect()
}

/// Common-reference optimum: `E₀ = √d E/(d+√d)`, `Eᵢ = E/(d+√d)`.
///
/// With weights `wᵢ` on `δ₀,ᵢ`: `Eᵢ = E√wᵢ / (√Σw + Σ√w)` and
/// `E₀ = E√Σw / (√Σw + Σ√w)`.
pub fn optimal_common(d: usize, energy: f64, weights: Option<&[f64]>) -> Result<Allocation> {
    check_energy(energy)?;
    let cost = cost_common(d, weights)?;
    let energies = match weights {
        None => {
            let root_d = (d as f64).sqrt();
            let unit = energy / (d as f64 + root_d);
            let mut e = vec![unit; d + 1];
            e[0] = root_d * unit;
            e
        }
        Some(w) => {
            let total_w: f64 = w.iter().sum();
            let denom = total_w.sqrt() + w.iter().map(|x| x.sqrt()).sum::<f64>();
            std::iter::once(energy * total_w.sqrt() / denom)
                .chain(w.iter().map(|x| energy * x.sqrt() / denom))
                .collect()
        }
    };
    Allocation::evaluate(energies, &cost, ProbeFamily::Coherent)
}

/// Ring optimum: equal split, or with edge weights
/// `Eᵢ ∝ √(w_{i−1} + wᵢ)` (cyclic, `w_{−1} = w_d`).
pub fn optimal_ring(d: usize, energy: f64, weights: Option<&[f64]>) -> Result<Allocation> {
    check_energy(energy)?;
    let cost = cost_ring(d, weights)?;
    let energies = match weights {
        None => vec![energy / (d + 1) as f64; d + 1],
        Some(w) => sqrt_split(&ring_mode_loads(w), energy),
    };
    Allocation::evaluate(energies, &cost, ProbeFamily::Coherent)
}

/// `w_{i−1} + wᵢ`: total weight of the two ring edges meeting at mode `i`.
pub fn ring_mode_loads(edge_weights: &[f64]) -> Vec<f64> {
    let m = edge_weights.len();
    (0..m)
        .map(|i| edge_weights[(i + m - 1) % m] + edge_weights[i])
        .collect()
}

/// All-pairs optimum: the equal split.
pub fn optimal_all_pairs(d: usize, energy: f64) -> Result<Allocation> {
    check_energy(energy)?;
    let cost = cost_all_pairs(d)?;
    Allocation::evaluate(vec![energy / (d + 1) as f64; d + 1], &cost, ProbeFamily::Coherent)
}

/// Optimum for an arbitrary cost matrix: `Eᵢ ∝ √Rᵢᵢ` for `i ≥ 1` and
/// `E₀ ∝ √(Σᵢⱼ Rᵢⱼ)`.
pub fn optimal_for_cost(cost: &CostMatrix, energy: f64) -> Result<Allocation> {
    check_energy(energy)?;
    let r = cost.matrix();
    let mut c = Vec::with_capacity(cost.d() + 1);
    c.push(r.sum());
    c.extend(r.diagonal().iter().copied());
    if let Some(i) = c.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::invalid(format!(
            "cost gives no weight to mode {i}; optimum lies on the boundary"
        )));
    }
    Allocation::evaluate(sqrt_split(&c, energy), cost, ProbeFamily::Coherent)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericOptimum {
    pub allocation: Allocation,
    pub status: OptimizerStatus,
    /// Iterations used by the winning start.
    pub iterations: usize,
}

impl NumericOptimum {
    pub fn converged(&self) -> bool {
        self.status == OptimizerStatus::Converged
    }

    /// Turns a non-converged run into an error.
    pub fn require_converged(self) -> Result<Self> {
        match self.status {
            OptimizerStatus::Converged => Ok(self),
            OptimizerStatus::MaxIterations => Err(Error::NonConvergence(format!(
                "allocation optimizer hit {MAX_ITERATIONS} iterations"
            ))),
        }
    }
}

/// Restricted QFIM `4(s·diag(x) − t·x xᵀ)` over modes `1..=d`.
struct Objective<'a> {
    cost: &'a DMatrix<f64>,
    diag_scale: f64,
    outer_scale: f64,
}

impl Objective<'_> {
    fn qfim(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len() - 1;
        DMatrix::from_fn(d, d, |i, j| {
            let diag = if i == j { self.diag_scale * x[i + 1] } else { 0.0 };
            4.0 * (diag - self.outer_scale * x[i + 1] * x[j + 1])
        })
    }

    /// Objective and gradient; `None` outside the region where `H` is
    /// positive definite.
    fn eval(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let inv = linalg::spd_inverse(&self.qfim(x)).ok()?;
        let value = linalg::trace_product(self.cost, &inv).ok()?;
        if !value.is_finite() {
            return None;
        }
        // ∂S/∂x_a = −Tr(G ∂H/∂x_a) with G = H⁻¹ R H⁻¹.
        let g = &inv * self.cost * &inv;
        let xs = nalgebra::DVector::from_iterator(x.len() - 1, x[1..].iter().copied());
        let gx = &g * xs;
        let mut grad = vec![0.0; x.len()];
        for a in 0..x.len() - 1 {
            grad[a + 1] = -4.0 * (self.diag_scale * g[(a, a)] - 2.0 * self.outer_scale * gx[a]);
        }
        Some((value, grad))
    }
}

/// Euclidean projection onto `{x : xᵢ ≥ floor, Σx = total}`.
pub fn project_to_simplex(v: &[f64], total: f64, floor: f64) -> Vec<f64> {
    let mass = total - floor * v.len() as f64;
    let shifted: Vec<f64> = v.iter().map(|x| x - floor).collect();
    let mut sorted = shifted.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - mass) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    shifted.iter().map(|x| (x - theta).max(0.0) + floor).collect()
}

fn descend(objective: &Objective<'_>, start: Vec<f64>, total: f64) -> Option<(Vec<f64>, f64, usize, bool)> {
    let mut x = project_to_simplex(&start, total, ENERGY_FLOOR);
    let (mut f, mut g) = objective.eval(&x)?;
    let mut step = 1e-2 * total / g.iter().fold(1e-300_f64, |m, v| m.max(v.abs()));
    let mut quiet = 0;
    for iter in 1..=MAX_ITERATIONS {
        let mut trial_step = step;
        let mut accepted = None;
        for _ in 0..80 {
            let candidate: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - trial_step * gi).collect();
            let y = project_to_simplex(&candidate, total, ENERGY_FLOOR);
            if let Some((fy, gy)) = objective.eval(&y) {
                let decrease: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gi, (yi, xi))| gi * (yi - xi)).sum();
                if fy <= f + 1e-4 * decrease {
                    accepted = Some((y, fy, gy));
                    break;
                }
            }
            trial_step *= 0.5;
        }
        let Some((y, fy, gy)) = accepted else {
            // No descent possible at machine precision.
            return Some((x, f, iter, true));
        };
        // Barzilai-Borwein step for the next iteration.
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..x.len() {
            let s = y[i] - x[i];
            ss += s * s;
            sy += s * (gy[i] - g[i]);
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-20, 1e20) } else { trial_step * 2.0 };

        let change = (f - fy).abs() / fy.abs().max(f64::MIN_POSITIVE);
        x = y;
        f = fy;
        g = gy;
        if change < OBJECTIVE_TOL {
            quiet += 1;
            if quiet >= 3 {
                return Some((x, f, iter, true));
            }
        } else {
            quiet = 0;
        }
    }
    Some((x, f, MAX_ITERATIONS, false))
}

/// Numeric minimum of `Tr(R · inverse(restricted QFIM))` on the simplex.
///
/// For `Noon`, `energy` is the photon number `N` and the search runs over
/// `|βᵢ|²`; the returned energies are `N|βᵢ|²`. Runs [`STARTS`] starts
/// (the barycenter plus seeded random points) and keeps the best.
pub fn optimize_numeric(
    d: usize,
    energy: f64,
    cost: &CostMatrix,
    family: ProbeFamily,
) -> Result<NumericOptimum> {
    check_energy(energy)?;
    if cost.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: cost.d(),
        });
    }
    if family == ProbeFamily::Noon && (energy.fract() != 0.0 || energy < 1.0) {
        return Err(Error::invalid("N00N optimization needs an integer photon number"));
    }
    // Coherent: H = 4(diag x − x xᵀ/E). N00N with x = N|β|²: H = 4(N diag x − x xᵀ).
    let objective = match family {
        ProbeFamily::Coherent => Objective {
            cost: cost.matrix(),
            diag_scale: 1.0,
            outer_scale: 1.0 / energy,
        },
        ProbeFamily::Noon => Objective {
            cost: cost.matrix(),
            diag_scale: energy,
            outer_scale: 1.0,
        },
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_a110c);
    let m = d + 1;
    let mut best: Option<(Vec<f64>, f64, usize, bool)> = None;
    for start in 0..STARTS {
        let x0 = if start == 0 {
            vec![energy / m as f64; m]
        } else {
            let raw: Vec<f64> = (0..m).map(|_| Exp1.sample(&mut rng)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|r| energy * (0.05 / m as f64 + 0.95 * r / s)).collect()
        };
        if let Some(run) = descend(&objective, x0, energy) {
            if best.as_ref().is_none_or(|b| run.1 < b.1) {
                best = Some(run);
            }
        }
    }
    let (x, _, iterations, converged) =
        best.ok_or_else(|| Error::NonConvergence("no start reached a finite objective".into()))?;
    let allocation = Allocation::evaluate(x, cost, family)?;
    let status = if converged {
        OptimizerStatus::Converged
    } else {
        OptimizerStatus::MaxIterations
    };
    Ok(NumericOptimum {
        allocation,
        status,
        iterations,
    })
}
