//! Command bodies. Each returns the data files it would write, so the same
//! code backs the binary, `replay` and the tests.

use multiphase::alloc::{optimal_all_pairs, optimal_common, optimal_for_cost, optimal_ring, Allocation};
use multiphase::fock::{NoonProbe, PhaseVector};
use multiphase::linalg;
use multiphase::mc_sim::{default_offsets, loglog_slope, run as run_sim, sweep_shots, SimConfig, SimResult};
use multiphase::measurement::{
    build_ghz_set, build_hadamard_d3, build_humphreys_set, cfim_extrapolated, MeasurementSet, DEFAULT_EPSILONS,
};
use multiphase::qfim::{invert_restricted, restricted_qfim};
use multiphase::reparam::{cost_common, cost_pairs_weighted, cost_ring, CostMatrix, Parametrization};
use multiphase::strategies::{sequential_classical, sequential_quantum, simultaneous_exact, table1, ResourceKind};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::output::{csv_document, to_json, CsvPrecision, OutputFile};
use crate::{BoundsArgs, Command, Format, MeasureArgs, ProbeKind, SetKind, SimulateArgs, Table1Args};

pub const TABLE1_SCHEMA: &str = "multiphase.table1/v1";
pub const BOUNDS_SCHEMA: &str = "multiphase.bounds/v1";
pub const SCALING_SCHEMA: &str = "multiphase.scaling/v1";
pub const TRIALS_SCHEMA: &str = "multiphase.trials/v1";

/// Flag combinations the parser cannot rule out on its own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub files: Vec<OutputFile>,
    pub seed: Option<u64>,
    /// Short human-readable lines for stdout.
    pub messages: Vec<String>,
}

pub fn run(cmd: &Command, full_precision: bool) -> anyhow::Result<CommandOutput> {
    let p = CsvPrecision { full: full_precision };
    match cmd {
        Command::Bounds(a) => bounds(a, p),
        Command::Table1(a) => table(a, p),
        Command::Measure(a) => measure(a),
        Command::Simulate(a) => simulate(a, p),
        Command::Replay(_) => Err(usage("replay is handled before dispatch")),
    }
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::Array((0..m.nrows()).map(|i| json!((0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>())).collect())
}

// ---------------------------------------------------------------- bounds

fn weighted_cost(a: &BoundsArgs, w: &[f64]) -> anyhow::Result<CostMatrix> {
    Ok(match a.cost {
        Parametrization::Common => cost_common(a.d, Some(w))?,
        Parametrization::Ring => cost_ring(a.d, Some(w))?,
        Parametrization::AllPairs => cost_pairs_weighted(a.d, w)?,
    })
}

fn allocation_for(a: &BoundsArgs, energy: f64) -> anyhow::Result<(Allocation, CostMatrix)> {
    let w = a.weights.as_deref();
    let cost = match w {
        Some(w) => weighted_cost(a, w)?,
        None => CostMatrix::for_parametrization(a.cost, a.d)?,
    };
    let alloc = match (a.cost, w) {
        (Parametrization::Common, w) => optimal_common(a.d, energy, w)?,
        (Parametrization::Ring, w) => optimal_ring(a.d, energy, w)?,
        (Parametrization::AllPairs, None) => optimal_all_pairs(a.d, energy)?,
        (Parametrization::AllPairs, Some(_)) => optimal_for_cost(&cost, energy)?,
    };
    Ok((alloc, cost))
}

pub fn bounds(a: &BoundsArgs, precision: CsvPrecision) -> anyhow::Result<CommandOutput> {
    let amount = match (a.resource, a.energy, a.photons) {
        (ResourceKind::Classical, _, Some(_)) => return Err(usage("--photons applies to --resource quantum")),
        (ResourceKind::Quantum, Some(_), _) => return Err(usage("--energy applies to --resource classical")),
        (ResourceKind::Classical, e, None) => e.unwrap_or(1.0),
        (ResourceKind::Quantum, None, n) => f64::from(n.unwrap_or(1)),
    };
    let (classical, cost) = allocation_for(a, amount)?;
    let alloc = match a.resource {
        ResourceKind::Classical => classical,
        ResourceKind::Quantum => classical.as_noon(amount as u32, &cost)?,
    };
    let bound = alloc.achieved_bound();
    let scale = match a.resource {
        ResourceKind::Classical => amount,
        ResourceKind::Quantum => amount * amount,
    };

    let (sequential, closed_form) = if a.weights.is_none() {
        let seq = match a.resource {
            ResourceKind::Classical => {
                let r = sequential_classical(a.d, amount, a.cost)?;
                json!({
                    "value": r.value,
                    "strategy": r.strategy.note(),
                    "alternatives": r.alternatives.iter().map(|(s, v)| json!({"strategy": s.note(), "value": v})).collect::<Vec<_>>(),
                })
            }
            ResourceKind::Quantum => {
                let (v, note) = sequential_quantum(a.d, amount, a.cost)?;
                json!({"value": v, "strategy": note})
            }
        };
        (seq, json!(simultaneous_exact(a.d, a.cost).to_string()))
    } else {
        (Value::Null, Value::Null)
    };
    let advantage = sequential.get("value").and_then(Value::as_f64).map(|s| s / bound);

    let body = json!({
        "d": a.d,
        "resource": a.resource.name(),
        "cost": a.cost.name(),
        "cost_kind": alloc.cost_kind().name(),
        "amount": amount,
        "weights": a.weights,
        "allocation": {
            "energies": alloc.energies(),
            "fractions": alloc.fractions(),
        },
        "bound": bound,
        "bound_at_unit_resource": bound * scale,
        "closed_form_at_unit_resource": closed_form,
        "sequential": sequential,
        "advantage_ratio": advantage,
    });

    let messages = vec![format!(
        "{} {} d={}: bound {bound}, E0 fraction {}",
        a.resource,
        a.cost,
        a.d,
        alloc.fractions()[0]
    )];
    let file = match a.format {
        Format::Json => OutputFile { name: "bounds.json".into(), contents: to_json(&body) },
        Format::Csv => {
            let f = |x: f64| precision.fmt(x);
            let mut rows = vec![
                vec!["bound".into(), f(bound)],
                vec!["amount".into(), f(amount)],
            ];
            for (i, (e, fr)) in alloc.energies().iter().zip(alloc.fractions()).enumerate() {
                rows.push(vec![format!("energy_{i}"), f(*e)]);
                rows.push(vec![format!("fraction_{i}"), f(fr)]);
            }
            if let Some(v) = body["sequential"]["value"].as_f64() {
                rows.push(vec!["sequential".into(), f(v)]);
            }
            if let Some(r) = advantage {
                rows.push(vec!["advantage_ratio".into(), f(r)]);
            }
            let comments = vec![format!("d={} resource={} cost={} kind={}", a.d, a.resource, a.cost, alloc.cost_kind())];
            OutputFile {
                name: "bounds.csv".into(),
                contents: csv_document(BOUNDS_SCHEMA, &comments, &["quantity", "value"], &rows),
            }
        }
    };
    Ok(CommandOutput { files: vec![file], seed: None, messages })
}

// ---------------------------------------------------------------- table1

pub fn table(a: &Table1Args, precision: CsvPrecision) -> anyhow::Result<CommandOutput> {
    let report = table1(a.d_max)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.resource.name().into(),
                r.schedule.name().into(),
                r.cost.name().into(),
                r.d.to_string(),
                precision.fmt(r.total_variance),
                r.exact.to_string(),
                r.strategy_note.clone(),
            ]
        })
        .collect();
    let comments = vec!["E = N = 1; classical values scale as 1/E, quantum as 1/N^2".to_string()];
    let contents = csv_document(
        TABLE1_SCHEMA,
        &comments,
        &["resource", "schedule", "cost", "d", "total_variance", "exact", "strategy_note"],
        &rows,
    );
    Ok(CommandOutput {
        files: vec![OutputFile { name: "table1.csv".into(), contents }],
        seed: None,
        messages: vec![format!("{} rows for d = 1..{}", report.rows.len(), a.d_max)],
    })
}

// --------------------------------------------------------------- measure

fn build_set(kind: SetKind, d: usize, photons: u32) -> anyhow::Result<MeasurementSet> {
    Ok(match kind {
        SetKind::Humphreys => build_humphreys_set(d, photons)?,
        SetKind::Ghz => build_ghz_set(d, photons)?,
        SetKind::Hadamard => {
            if d != 3 {
                return Err(usage(format!("the Hadamard set exists only for d = 3, got d = {d}")));
            }
            build_hadamard_d3().with_photon_number(photons)?
        }
    })
}

fn matched_probe(kind: SetKind) -> ProbeKind {
    match kind {
        SetKind::Humphreys => ProbeKind::OptimalCommon,
        SetKind::Ghz | SetKind::Hadamard => ProbeKind::Ghz,
    }
}

fn make_probe(kind: ProbeKind, d: usize, photons: u32) -> anyhow::Result<NoonProbe> {
    Ok(match kind {
        ProbeKind::OptimalCommon => NoonProbe::optimal_common(d, photons)?,
        ProbeKind::Ghz => NoonProbe::ghz(d, photons)?,
    })
}

fn probe_name(kind: ProbeKind) -> &'static str {
    match kind {
        ProbeKind::OptimalCommon => "optimal_common",
        ProbeKind::Ghz => "ghz",
    }
}

pub fn measure(a: &MeasureArgs) -> anyhow::Result<CommandOutput> {
    let set = build_set(a.set, a.d, a.photons)?;
    let pk = matched_probe(a.set);
    let probe = make_probe(pk, a.d, a.photons)?;
    let eps = a.epsilons.clone().unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());
    let cfim = cfim_extrapolated(&set, &probe, &PhaseVector::zeros(a.d + 1), &eps)?;
    let q = restricted_qfim(&probe);
    let qi = invert_restricted(&probe)?;
    let gap = linalg::relative_trace_norm_gap(&cfim.matrix, &q);
    let mut costs = serde_json::Map::new();
    for p in Parametrization::ALL {
        let r = CostMatrix::for_parametrization(p, a.d)?;
        let from_cfim = cfim.scalar_bound(r.matrix())?;
        let from_qfim = linalg::trace_product(r.matrix(), &qi)?;
        costs.insert(p.name().into(), json!({"cfim": from_cfim, "qfim": from_qfim, "ratio": from_cfim / from_qfim}));
    }
    let overlap = set.first_overlap(&probe)?;
    let body = json!({
        "d": a.d,
        "photons": a.photons,
        "source": set.source().name(),
        "probe": probe_name(pk),
        "vectors": set.vectors().iter().map(|v| v.iter().map(|z| json!([z.re, z.im])).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "orthonormality_defect": set.orthonormality_defect(),
        "completeness_defect": set.completeness_defect(),
        "first_overlap": [overlap.re, overlap.im],
        "epsilons": eps,
        "cfim_limit": matrix_json(&cfim.matrix),
        "restricted_qfim": matrix_json(&q),
        "relative_trace_norm_gap": gap,
        "scalar_bounds": costs,
    });
    Ok(CommandOutput {
        files: vec![OutputFile { name: "measure.json".into(), contents: to_json(&body) }],
        seed: None,
        messages: vec![format!("{} set d={} N={}: CFIM/QFIM gap {gap:e}", set.source(), a.d, a.photons)],
    })
}

// -------------------------------------------------------------- simulate

fn sim_summary(r: &SimResult) -> Value {
    let totals: Vec<u64> = (0..r.tallies.first().map_or(0, Vec::len))
        .map(|j| r.tallies.iter().map(|t| t[j]).sum())
        .collect();
    json!({
        "shots_per_trial": r.shots_per_trial,
        "trials": r.trials,
        "true_offsets": r.true_offsets,
        "empirical_covariance": matrix_json(&r.empirical_covariance),
        "predicted_covariance": matrix_json(&r.predicted),
        "costs": r.comparisons.iter().map(|c| json!({
            "cost": c.cost.name(),
            "empirical": c.empirical,
            "predicted": c.predicted,
            "ratio": c.ratio,
            "bootstrap_se": c.bootstrap_se,
            "respects_bound": c.respects_bound(),
        })).collect::<Vec<_>>(),
        "estimator_bias": r.estimator_bias,
        "fallbacks": r.fallbacks,
        "outcome_totals": totals,
        "warnings": r.warnings,
    })
}

pub fn simulate(a: &SimulateArgs, precision: CsvPrecision) -> anyhow::Result<CommandOutput> {
    let set = build_set(a.set, a.d, a.photons)?;
    let pk = a.probe.unwrap_or(matched_probe(a.set));
    let probe = make_probe(pk, a.d, a.photons)?;
    let mut cfg = SimConfig::new(probe, set, a.shots, a.trials, a.seed);
    cfg.true_offsets = a.offsets.clone().unwrap_or_else(|| default_offsets(a.d));
    let main = run_sim(&cfg)?;

    let sweep_list = a.sweep.clone().unwrap_or_else(|| vec![a.shots]);
    let sweep = if sweep_list == [a.shots] { vec![main.clone()] } else { sweep_shots(&cfg, &sweep_list)? };
    let xs: Vec<f64> = sweep.iter().map(|r| r.shots_per_trial as f64).collect();
    let mut slopes = serde_json::Map::new();
    if sweep.len() >= 2 {
        for p in Parametrization::ALL {
            let ys: Vec<f64> = sweep.iter().map(|r| r.comparison(p).empirical).collect();
            slopes.insert(p.name().into(), json!(loglog_slope(&xs, &ys)));
        }
    }

    let body = json!({
        "d": a.d,
        "photons": a.photons,
        "set": cfg.set.source().name(),
        "probe": probe_name(pk),
        "seed": a.seed,
        "result": sim_summary(&main),
        "sweep_shots": sweep_list,
        "loglog_slopes": slopes,
    });

    let mut rows = Vec::new();
    for r in &sweep {
        for c in &r.comparisons {
            rows.push(vec![
                r.shots_per_trial.to_string(),
                c.cost.name().into(),
                precision.fmt(c.empirical),
                precision.fmt(c.predicted),
                precision.fmt(c.ratio),
                precision.fmt(c.bootstrap_se),
            ]);
        }
    }
    let scaling = csv_document(
        SCALING_SCHEMA,
        &[format!("d={} N={} set={} seed={}", a.d, a.photons, cfg.set.source(), a.seed)],
        &["shots", "cost", "empirical", "predicted", "ratio", "bootstrap_se"],
        &rows,
    );

    let mut files = vec![
        OutputFile { name: "simulate.json".into(), contents: to_json(&body) },
        OutputFile { name: "simulate_scaling.csv".into(), contents: scaling },
    ];
    if a.per_trial {
        let mut header: Vec<String> = vec!["trial".into()];
        header.extend((1..=a.d).map(|i| format!("delta_0_{i}")));
        header.extend((0..=a.d).map(|j| format!("count_{j}")));
        let rows: Vec<Vec<String>> = main
            .estimates
            .iter()
            .zip(&main.tallies)
            .enumerate()
            .map(|(t, (e, n))| {
                let mut row = vec![t.to_string()];
                row.extend(e.iter().map(|x| precision.fmt(*x)));
                row.extend(n.iter().map(u64::to_string));
                row
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        files.push(OutputFile {
            name: "simulate_trials.csv".into(),
            contents: csv_document(TRIALS_SCHEMA, &[], &header, &rows),
        });
    }

    let mut messages: Vec<String> = main
        .comparisons
        .iter()
        .map(|c| format!("{}: Tr(R C) / Tr(R H^-1) / M = {:.4} (se {:.2e})", c.cost, c.ratio, c.bootstrap_se / c.predicted))
        .collect();
    messages.extend(main.warnings.iter().map(|w| format!("warning: {w}")));
    Ok(CommandOutput { files, seed: Some(a.seed), messages })
}
