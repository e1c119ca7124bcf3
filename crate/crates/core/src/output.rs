//! Canonical JSON and CSV rendering of results. Floats carry 17 significant
//! digits, rationals are "num/den" strings and object keys are sorted, so
//! identical inputs give byte-identical files.

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde_json::{Map, Value};

use crate::dimension::{DecayCheck, DimensionReport};
use crate::extension::{ExtensionSpec, XCylinder};
use crate::group::GroupElement;
use crate::harmonic::{HarmonicityReport, KernelEstimate, MartingaleReport, PathSample};
use crate::patterson::{ConformalDiagnostics, ErgodicityVerdict, MeasureApprox};
use crate::transfer::{PartitionTable, SpectralEstimate};
use crate::validate::ValidationReport;

/// Float with 17 significant digits; non-finite values become strings.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        serde_json::from_str(&format!("{x:.16e}")).expect("float literal parses")
    } else {
        Value::String(x.to_string())
    }
}

pub fn int(x: usize) -> Value {
    Value::from(x as u64)
}

pub fn rational(q: &BigRational) -> Value {
    Value::String(format!("{}/{}", q.numer(), q.denom()))
}

pub fn element(g: &GroupElement) -> Value {
    match g {
        GroupElement::Lattice(v) => Value::from(v.clone()),
        GroupElement::Free(v) => Value::from(v.clone()),
        GroupElement::Table(i) => int(*i),
    }
}

pub fn cylinder(ext: &ExtensionSpec, c: &XCylinder) -> Value {
    obj([("word", Value::String(ext.shift.format_word(&c.word))), ("g", element(&c.g))])
}

pub fn obj<const K: usize>(entries: [(&str, Value); K]) -> Value {
    Value::Object(entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<Map<_, _>>())
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

/// Wraps a result with the provenance fields every artifact carries.
pub fn envelope(command: &str, config_hash: &str, seed: u64, result: Value) -> Value {
    obj([
        ("command", Value::String(command.into())),
        ("config_hash", Value::String(config_hash.into())),
        ("seed", Value::from(seed)),
        ("result", result),
    ])
}

pub fn render(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("Value serializes");
    s.push('\n');
    s
}

/// CSV with a leading comment line carrying the provenance fields.
pub fn csv(config_hash: &str, seed: u64, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = format!("# config_hash={config_hash} seed={seed}\n{}\n", header.join(","));
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn table_csv(table: &PartitionTable, config_hash: &str, seed: u64) -> String {
    let rows = (0..=table.n_max).map(|n| {
        let lz = table.log_z[n];
        vec![
            n.to_string(),
            fmt_float(lz.exp()),
            fmt_float(lz),
            table.exact.as_ref().map_or(String::new(), |e| format!("{}/{}", e[n].numer(), e[n].denom())),
            table.states_visited.get(n).map_or(String::new(), |s| s.to_string()),
        ]
    });
    csv(config_hash, seed, &["n", "Z_float", "log_Z", "Z_rational", "states_visited"], rows)
}

pub fn spectral_json(e: &SpectralEstimate) -> Value {
    obj([
        ("rho_hat", num(e.rho_hat)),
        ("method", Value::String(e.method.into())),
        ("beta", num(e.beta)),
        ("stderr", num(e.stderr)),
        ("beta_stderr", num(e.beta_stderr)),
        ("hadamard", num(e.hadamard)),
        ("period", int(e.period)),
        ("fit_degree", int(e.fit_degree)),
        ("window", Value::from(vec![e.window.0 as u64, e.window.1 as u64])),
        ("clamped", Value::Bool(e.clamped)),
    ])
}

fn per_cylinder(ext: &ExtensionSpec, m: &BTreeMap<XCylinder, f64>) -> Value {
    Value::Array(m.iter().map(|(c, v)| obj([("cylinder", cylinder(ext, c)), ("value", num(*v))])).collect())
}

pub fn diagnostics_json(ext: &ExtensionSpec, d: &ConformalDiagnostics) -> Value {
    obj([
        ("schedule", nums(&d.schedule)),
        ("schedule_limit", per_cylinder(ext, &d.schedule_limit)),
        ("difference_ratio", per_cylinder(ext, &d.difference_ratio)),
        ("non_monotone", int(d.non_monotone)),
        ("unconverged", Value::Bool(d.unconverged)),
        ("order", Value::Array(d.order.iter().map(|(c, o)| obj([("cylinder", cylinder(ext, c)), ("value", int(*o))])).collect())),
    ])
}

pub fn measure_json(ext: &ExtensionSpec, m: &MeasureApprox) -> Value {
    let masses = m
        .masses
        .iter()
        .map(|(c, v)| {
            obj([
                ("word", Value::String(ext.shift.format_word(&c.word))),
                ("g", element(&c.g)),
                ("mass", num(*v)),
                ("spread", num(m.spread.get(c).copied().unwrap_or(0.0))),
            ])
        })
        .collect();
    obj([
        ("s", opt_num(m.s)),
        ("rho_hat", num(m.rho_hat)),
        ("masses", Value::Array(masses)),
        ("n_max", int(m.n_max)),
        ("depth", int(m.depth)),
        ("ball_radius", int(m.ball_radius)),
        ("tail_bound", num(m.tail_bound)),
        ("diagnostics", m.diagnostics.as_ref().map_or(Value::Null, |d| diagnostics_json(ext, d))),
    ])
}

pub fn verdict_json(v: &ErgodicityVerdict) -> Value {
    obj([
        ("verdict", Value::String(v.verdict.as_str().into())),
        ("beta", num(v.beta)),
        ("beta_stderr", num(v.beta_stderr)),
        ("partial_sums", nums(&v.partial_sums)),
        ("note", v.note.clone().map_or(Value::Null, Value::String)),
    ])
}

pub fn point_json(ext: &ExtensionSpec, p: &(Vec<usize>, GroupElement)) -> Value {
    obj([("word", Value::String(ext.shift.format_word(&p.0))), ("g", element(&p.1))])
}

pub fn kernel_json(ext: &ExtensionSpec, k: &KernelEstimate) -> Value {
    obj([
        ("source", point_json(ext, &k.source)),
        ("targets", Value::Array(k.targets.iter().map(|c| cylinder(ext, c)).collect())),
        ("values", nums(&k.values)),
        ("spreads", nums(&k.spreads)),
        ("limit", num(k.limit)),
        ("spread", num(k.spread)),
        ("stabilized", Value::Bool(k.stabilized)),
        ("zero_mass", Value::Bool(k.zero_mass)),
    ])
}

pub fn harmonicity_json(r: &HarmonicityReport) -> Value {
    obj([
        ("max_residual", num(r.max_residual)),
        ("points", int(r.points)),
        ("degenerate", Value::Bool(r.degenerate)),
    ])
}

pub fn martingale_json(ext: &ExtensionSpec, r: &MartingaleReport) -> Value {
    let buckets = r
        .buckets
        .iter()
        .map(|b| {
            obj([
                ("n", int(b.n)),
                ("key", point_json(ext, &b.key)),
                ("count", int(b.count)),
                ("mean_w", num(b.mean_w)),
                ("mean_next", num(b.mean_next)),
                ("stderr", num(b.stderr)),
                ("z", num(b.z)),
            ])
        })
        .collect();
    obj([
        ("buckets", Value::Array(buckets)),
        ("max_abs_z", num(r.max_abs_z)),
        ("threshold", num(r.threshold)),
        ("passes", Value::Bool(r.passes())),
    ])
}

pub fn paths_csv(paths: &[PathSample], config_hash: &str, seed: u64) -> String {
    let rows = paths.iter().flat_map(|p| {
        p.log_observables.iter().enumerate().map(move |(i, o)| {
            vec![p.id.to_string(), (i + 1).to_string(), o.map_or(String::new(), |x| fmt_float(x.exp()))]
        })
    });
    csv(config_hash, seed, &["path_id", "n", "observable"], rows)
}

pub fn dimension_json(r: &DimensionReport, decay: Option<&DecayCheck>) -> Value {
    let decay = match decay {
        None => Value::Null,
        Some(DecayCheck::NotApplicable(why)) => obj([("status", Value::String("not applicable".into())), ("reason", Value::String(why.clone()))]),
        Some(DecayCheck::Checked { summary, passes }) => obj([
            ("status", Value::String(if *passes { "pass" } else { "fail" }.into())),
            ("from", int(summary.from)),
            ("to", int(summary.to)),
            ("passing", int(summary.passing)),
            ("total", int(summary.total)),
            ("median_slope", num(summary.median_slope)),
            ("truncated", int(summary.truncated)),
        ]),
    };
    obj([
        ("delta", num(r.delta)),
        ("delta_interval", nums(&[r.delta_interval.0, r.delta_interval.1])),
        ("certificate", nums(&[r.certificate.0, r.certificate.1])),
        ("pressure_at_delta", num(r.pressure_at_delta)),
        ("pressure_stderr", num(r.pressure_stderr)),
        ("rho_delta", num(r.rho_delta)),
        ("lyapunov", num(r.lyapunov)),
        ("dim_raw", num(r.dim_raw)),
        ("dim_value", num(r.dim_value)),
        ("dim_stderr", num(r.dim_stderr)),
        ("amenability_gap", num(r.amenability_gap)),
        ("gap_stderr", num(r.gap_stderr)),
        (
            "amenable_consistent",
            r.amenable_consistent.map_or(Value::String("not applicable".into()), Value::Bool),
        ),
        ("dim_exceeds_delta", Value::Bool(r.dim_exceeds_delta)),
        ("bracket", nums(&[r.bracket.0, r.bracket.1])),
        ("tol", num(r.tol)),
        ("n_max", int(r.n_max)),
        ("evaluations", int(r.evaluations)),
        ("decay_check", decay),
    ])
}

pub fn validation_json(report: &ValidationReport) -> Value {
    let checks = report
        .checks
        .iter()
        .map(|c| {
            obj([
                ("name", Value::String(c.name.clone())),
                ("value", num(c.value)),
                ("tolerance", num(c.tolerance)),
                ("passed", Value::Bool(c.passed)),
                ("detail", Value::String(c.detail.clone())),
            ])
        })
        .collect();
    obj([
        ("name", Value::String(report.name.clone())),
        ("passed", Value::Bool(report.passed())),
        ("checks", Value::Array(checks)),
        ("count", int(report.checks.len())),
    ])
}
