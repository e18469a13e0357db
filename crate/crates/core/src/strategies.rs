//! Sequential baselines and the simultaneous-vs-sequential comparison.
//!
//! At unit resource (`E = 1` or `N = 1`) every minimum total variance is a
//! rational number, except the common-reference simultaneous bound
//! `d(√d+1)²/4`, which is `a + b√d` with rational `a, b`. [`ExactValue`]
//! carries those values exactly; other resource amounts divide by `E` or
//! `N²`.
//!
//! Each sequential sub-strategy is also evaluated through the Jacobian route
//! (`H → JᵀHJ` over independently estimated parameters), which is how the
//! exact formulas are checked.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;

use crate::alloc::{optimal_all_pairs, optimal_common, optimal_ring};
use crate::linalg;
use crate::qfim::{FisherMatrix, Provenance};
use crate::reparam::{cost_all_pairs, mode_pairs, cost_ring, CostMatrix, Parametrization};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ResourceKind {
    Classical,
    Quantum,
}

impl ResourceKind {
    pub fn name(self) -> &'static str {
        match self {
            ResourceKind::Classical => "classical",
            ResourceKind::Quantum => "quantum",
        }
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ResourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" | "coherent" => Ok(ResourceKind::Classical),
            "quantum" | "noon" => Ok(ResourceKind::Quantum),
            other => Err(Error::invalid(format!("unknown resource kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Schedule {
    Sequential,
    Simultaneous,
}

impl Schedule {
    pub fn name(self) -> &'static str {
        match self {
            Schedule::Sequential => "sequential",
            Schedule::Simultaneous => "simultaneous",
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `rational + coefficient · √radicand`, with `radicand` square-free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExactValue {
    pub rational: Rational64,
    pub coefficient: Rational64,
    pub radicand: i64,
}

impl ExactValue {
    pub fn rational(r: Rational64) -> Self {
        ExactValue {
            rational: r,
            coefficient: Rational64::from_integer(0),
            radicand: 1,
        }
    }

    pub fn integer(n: i64) -> Self {
        Self::rational(Rational64::from_integer(n))
    }

    /// `rational + coefficient · √n`, simplified so the radicand is
    /// square-free.
    pub fn with_sqrt(rational: Rational64, coefficient: Rational64, n: i64) -> Self {
        assert!(n >= 1, "radicand must be positive");
        let mut outside = 1;
        let mut inside = n;
        let mut k = 2;
        while k * k <= inside {
            while inside % (k * k) == 0 {
                inside /= k * k;
                outside *= k;
            }
            k += 1;
        }
        let coefficient = coefficient * Rational64::from_integer(outside);
        if inside == 1 {
            Self::rational(rational + coefficient)
        } else {
            ExactValue {
                rational,
                coefficient,
                radicand: inside,
            }
        }
    }

    pub fn is_rational(&self) -> bool {
        *self.coefficient.numer() == 0
    }

    pub fn to_f64(&self) -> f64 {
        let r = |q: Rational64| *q.numer() as f64 / *q.denom() as f64;
        r(self.rational) + r(self.coefficient) * (self.radicand as f64).sqrt()
    }
}

impl fmt::Display for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_rational() {
            write!(f, "{}", self.rational)
        } else {
            write!(f, "{} + {}*sqrt({})", self.rational, self.coefficient, self.radicand)
        }
    }
}

fn q(n: i64, den: i64) -> Rational64 {
    Rational64::new(n, den)
}

/// How a sequential scheme splits its resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubStrategy {
    /// `d` estimates of `δ₀,ᵢ` against mode 0.
    CommonEstimates,
    /// `d + 1` estimates of the ring edges.
    RingEstimates,
    /// `C(d+1, 2)` estimates, one per mode pair.
    PairEstimates,
}

impl SubStrategy {
    pub fn note(self) -> &'static str {
        match self {
            SubStrategy::CommonEstimates => "d estimates",
            SubStrategy::RingEstimates => "d+1 estimates",
            SubStrategy::PairEstimates => "C(d+1,2) estimates",
        }
    }

    pub fn estimates(self, d: usize) -> usize {
        match self {
            SubStrategy::CommonEstimates => d,
            SubStrategy::RingEstimates => d + 1,
            SubStrategy::PairEstimates => d * (d + 1) / 2,
        }
    }

    /// Jacobian from the estimated parameters back to `δ₀,·`.
    fn jacobian(self, d: usize) -> Result<DMatrix<f64>> {
        Ok(match self {
            SubStrategy::CommonEstimates => DMatrix::identity(d, d),
            SubStrategy::RingEstimates => cost_ring(d, None)?.jacobian().clone(),
            SubStrategy::PairEstimates => cost_all_pairs(d)?.jacobian().clone(),
        })
    }
}

/// Sub-strategies considered for each resource and cost, in tie-break
/// order.
pub fn sequential_candidates(resource: ResourceKind, p: Parametrization) -> &'static [SubStrategy] {
    use SubStrategy::*;
    match (resource, p) {
        (_, Parametrization::Common) => &[CommonEstimates],
        (ResourceKind::Classical, Parametrization::Ring) => &[RingEstimates, CommonEstimates],
        (ResourceKind::Classical, Parametrization::AllPairs) => &[PairEstimates],
        (ResourceKind::Quantum, Parametrization::Ring) => &[CommonEstimates, RingEstimates],
        (ResourceKind::Quantum, Parametrization::AllPairs) => {
            &[CommonEstimates, RingEstimates, PairEstimates]
        }
    }
}

/// `Tr(R_p (JᵀJ)⁻¹)` for the Jacobian of `sub`.
///
/// With `R₁⁻¹` the inverse of the path Laplacian with both ends pinned and
/// `R₂ = (d+1)I − 11ᵀ`, all nine traces are low-degree rationals in `d`.
fn cost_trace(d: usize, p: Parametrization, sub: SubStrategy) -> Rational64 {
    let di = d as i64;
    use Parametrization::*;
    use SubStrategy::*;
    match (p, sub) {
        (Common, CommonEstimates) => q(di, 1),
        (Ring, CommonEstimates) => q(2 * di, 1),
        (AllPairs, CommonEstimates) => q(di * di, 1),
        (Common, RingEstimates) => q(di * (di + 2), 6),
        (Ring, RingEstimates) => q(di, 1),
        (AllPairs, RingEstimates) => q(di * (di + 1) * (di + 2), 12),
        (Common, PairEstimates) => q(2 * di, di + 1),
        (Ring, PairEstimates) => q(2, 1),
        (AllPairs, PairEstimates) => q(di, 1),
    }
}

/// Exact total variance of a sequential sub-strategy at unit resource.
///
/// Each of the `n` estimates gets `1/n` of the resource; its information is
/// `1/n` (coherent) or `1/n²` (N00N).
pub fn sequential_exact(d: usize, resource: ResourceKind, p: Parametrization, sub: SubStrategy) -> ExactValue {
    let n = sub.estimates(d) as i64;
    let factor = match resource {
        ResourceKind::Classical => n,
        ResourceKind::Quantum => n * n,
    };
    ExactValue::rational(cost_trace(d, p, sub) * Rational64::from_integer(factor))
}

/// Total variance of a sequential sub-strategy by explicit
/// reparametrization: each of the `n` estimates receives `amount / n`, the
/// diagonal information of the estimated parameters is mapped back to
/// `δ₀,·` with `JᵀHJ`, and the cost is `Tr(R H⁻¹)`.
pub fn sequential_via_jacobian(
    d: usize,
    amount: f64,
    resource: ResourceKind,
    p: Parametrization,
    sub: SubStrategy,
) -> Result<f64> {
    let n = sub.estimates(d) as f64;
    let share = amount / n;
    // Coherent: two modes at share/2 each give 4(a − a²/2a) = share.
    // N00N with `share` photons over two modes gives share².
    let info = match resource {
        ResourceKind::Classical => share,
        ResourceKind::Quantum => share * share,
    };
    let estimates = sub.estimates(d);
    let labels = (0..estimates).map(|i| format!("θ{i}")).collect();
    let h = FisherMatrix::new(
        DMatrix::from_diagonal(&DVector::from_element(estimates, info)),
        Provenance::WithReference,
        labels,
    )?;
    let j = sub.jacobian(d)?;
    let relabeled = h.reparametrize(&j, (1..=d).map(|i| format!("δ0,{i}")).collect())?;
    let cost = CostMatrix::for_parametrization(p, d)?;
    let inv = linalg::inverse(relabeled.entries())?;
    linalg::trace_product(cost.matrix(), &inv)
}

/// Winning sequential sub-strategy and its exact unit-resource value.
pub fn best_sequential(d: usize, resource: ResourceKind, p: Parametrization) -> (SubStrategy, ExactValue) {
    let mut best: Option<(SubStrategy, ExactValue)> = None;
    for &sub in sequential_candidates(resource, p) {
        let v = sequential_exact(d, resource, p, sub);
        if best.is_none_or(|(_, b)| v.rational < b.rational) {
            best = Some((sub, v));
        }
    }
    best.expect("every cost has at least one sequential strategy")
}

/// Sequential value together with the losing alternatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialResult {
    pub value: f64,
    pub strategy: SubStrategy,
    pub note: String,
    pub alternatives: Vec<(SubStrategy, f64)>,
}

fn scale(resource: ResourceKind, amount: f64) -> f64 {
    match resource {
        ResourceKind::Classical => amount,
        ResourceKind::Quantum => amount * amount,
    }
}

fn check_amount(d: usize, amount: f64) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("d must be >= 1"));
    }
    if !(amount > 0.0) || !amount.is_finite() {
        return Err(Error::invalid(format!("resource must be > 0, got {amount}")));
    }
    Ok(())
}

fn sequential(d: usize, amount: f64, resource: ResourceKind, p: Parametrization) -> Result<SequentialResult> {
    check_amount(d, amount)?;
    if resource == ResourceKind::Quantum && amount < 1.0 {
        return Err(Error::invalid(format!("photon number must be >= 1, got {amount}")));
    }
    let s = scale(resource, amount);
    let (strategy, exact) = best_sequential(d, resource, p);
    let alternatives = sequential_candidates(resource, p)
        .iter()
        .filter(|&&sub| sub != strategy)
        .map(|&sub| (sub, sequential_exact(d, resource, p, sub).to_f64() / s))
        .collect::<Vec<_>>();
    let mut note = strategy.note().to_string();
    if !alternatives.is_empty() {
        let others: Vec<String> = alternatives
            .iter()
            .map(|(sub, v)| format!("{} gives {v}", sub.note()))
            .collect();
        note = format!("{note} (vs {})", others.join(", "));
    }
    Ok(SequentialResult {
        value: exact.to_f64() / s,
        strategy,
        note,
        alternatives,
    })
}

/// Best sequential classical scheme with total energy `energy`.
pub fn sequential_classical(d: usize, energy: f64, p: Parametrization) -> Result<SequentialResult> {
    sequential(d, energy, ResourceKind::Classical, p)
}

/// Best sequential N00N scheme with `photons` photons in total, with the
/// name of the winning sub-strategy.
pub fn sequential_quantum(d: usize, photons: f64, p: Parametrization) -> Result<(f64, String)> {
    let r = sequential(d, photons, ResourceKind::Quantum, p)?;
    Ok((r.value, r.strategy.note().to_string()))
}

/// Exact simultaneous minimum at unit resource.
pub fn simultaneous_exact(d: usize, p: Parametrization) -> ExactValue {
    let di = d as i64;
    match p {
        // d(√d+1)²/4 = d(d+1)/4 + (d/2)√d
        Parametrization::Common => ExactValue::with_sqrt(q(di * (di + 1), 4), q(di, 2), di),
        Parametrization::Ring => ExactValue::rational(q((di + 1) * (di + 1), 2)),
        Parametrization::AllPairs => ExactValue::rational(q(di * (di + 1) * (di + 1), 4)),
    }
}

/// Simultaneous minimum through the optimal allocations; `amount` is `E`
/// for classical and the photon number `N` for quantum probes.
pub fn simultaneous_bound(d: usize, amount: f64, resource: ResourceKind, p: Parametrization) -> Result<f64> {
    check_amount(d, amount)?;
    let classical = match p {
        Parametrization::Common => optimal_common(d, amount, None)?,
        Parametrization::Ring => optimal_ring(d, amount, None)?,
        Parametrization::AllPairs => optimal_all_pairs(d, amount)?,
    };
    match resource {
        ResourceKind::Classical => Ok(classical.achieved_bound()),
        ResourceKind::Quantum => {
            if amount.fract() != 0.0 {
                return Err(Error::invalid(format!("photon number must be an integer, got {amount}")));
            }
            let cost = CostMatrix::for_parametrization(p, d)?;
            Ok(classical.as_noon(amount as u32, &cost)?.achieved_bound())
        }
    }
}

/// Sequential over simultaneous total variance at equal resource.
pub fn advantage_ratio(d: usize, resource: ResourceKind, p: Parametrization) -> f64 {
    best_sequential(d, resource, p).1.to_f64() / simultaneous_exact(d, p).to_f64()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRow {
    pub resource: ResourceKind,
    pub schedule: Schedule,
    pub cost: Parametrization,
    pub d: usize,
    pub exact: ExactValue,
    pub total_variance: f64,
    pub strategy_note: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StrategyReport {
    pub rows: Vec<StrategyRow>,
}

impl StrategyReport {
    pub fn find(&self, resource: ResourceKind, schedule: Schedule, cost: Parametrization, d: usize) -> Option<&StrategyRow> {
        self.rows
            .iter()
            .find(|r| r.resource == resource && r.schedule == schedule && r.cost == cost && r.d == d)
    }

    /// Checks positivity and simultaneous ≤ sequential for each cell pair.
    pub fn validate(&self) -> Result<()> {
        for row in &self.rows {
            if !(row.total_variance > 0.0) {
                return Err(Error::InvariantViolation(format!("non-positive variance in {row:?}")));
            }
            if row.schedule == Schedule::Simultaneous {
                if let Some(seq) = self.find(row.resource, Schedule::Sequential, row.cost, row.d) {
                    if row.total_variance > seq.total_variance * (1.0 + 1e-12) {
                        return Err(Error::InvariantViolation(format!(
                            "simultaneous exceeds sequential for {} {} d={}",
                            row.resource, row.cost, row.d
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// The comparison table at `E = N = 1` for `d = 1..=d_max`.
pub fn table1(d_max: usize) -> Result<StrategyReport> {
    if d_max == 0 {
        return Err(Error::invalid("d_max must be >= 1"));
    }
    let mut rows = Vec::new();
    for resource in [ResourceKind::Classical, ResourceKind::Quantum] {
        for schedule in [Schedule::Sequential, Schedule::Simultaneous] {
            for cost in Parametrization::ALL {
                for d in 1..=d_max {
                    let (exact, note) = match schedule {
                        Schedule::Sequential => {
                            let (sub, v) = best_sequential(d, resource, cost);
                            (v, sub.note())
                        }
                        Schedule::Simultaneous => (
                            simultaneous_exact(d, cost),
                            match cost {
                                Parametrization::Common => "privileged mode",
                                _ => "mode symmetry",
                            },
                        ),
                    };
                    rows.push(StrategyRow {
                        resource,
                        schedule,
                        cost,
                        d,
                        exact,
                        total_variance: exact.to_f64(),
                        strategy_note: note.to_string(),
                    });
                }
            }
        }
    }
    let report = StrategyReport { rows };
    report.validate()?;
    Ok(report)
}

/// Used for labeling pair-indexed parameters in reports.
pub fn pair_labels(d: usize) -> Vec<String> {
    mode_pairs(d).iter().map(|(i, j)| format!("δ{i},{j}")).collect()
}
