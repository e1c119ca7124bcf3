//! Engine-versus-oracle diff suite for one system configuration.

use std::time::Instant;

use crate::config::SystemConfig;
use crate::dimension::{decay_check, find_delta, DecayCheck};
use crate::error::Result;
use crate::extension::{ExtensionSpec, XCylinder};
use crate::group::{GroupElement, GroupSpec};
use crate::harmonic::{
    decay_summary, harmonicity_residual, kernel_estimate, martingale_bucket_test, nested_targets, oracle_decay_observable,
    point_mesh, sample_paths, Point,
};
use crate::oracles::{oracle_for, tilted_pressure, Oracle};
use crate::patterson::{classify_ergodicity, conformality_residual, mesh_cylinders, with_images, Calibration, MeasureApprox, Verdict};
use crate::transfer::zcount;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// The compared quantity (an error, residual or fraction).
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when value ≤ tolerance.
    fn at_most(name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        Check { name: name.into(), value, tolerance, passed: value <= tolerance, detail }
    }

    fn flag(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.into(), value: if passed { 0.0 } else { 1.0 }, tolerance: 0.0, passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub name: String,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn rel_err(x: f64, want: f64) -> f64 {
    if want == 0.0 {
        x.abs()
    } else {
        (x / want - 1.0).abs()
    }
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn unit(ext: &ExtensionSpec) -> Option<GroupElement> {
    match ext.group {
        GroupSpec::Lattice { d } => {
            let mut v = vec![0; d];
            v[0] = 1;
            Some(GroupElement::Lattice(v))
        }
        GroupSpec::Free { .. } => Some(GroupElement::Free(vec![1])),
        GroupSpec::Table(_) => None,
    }
}

/// Run every check that applies to the configuration.
pub fn validate(cfg: &SystemConfig) -> Result<ValidationReport> {
    let started = Instant::now();
    let ext = &cfg.ext;
    let num = &cfg.numerics;
    let n_max = num.n_max;
    let xi = ext.default_xi();
    let oracle = oracle_for(ext);
    let mut checks = Vec::new();

    // partition function
    let small = n_max.min(20);
    if num.exact {
        let t = zcount(ext, &xi, small, true)?;
        let gap = t.exact_float_gap().unwrap_or(f64::INFINITY);
        checks.push(Check::at_most("zcount.exact_vs_float", gap, 1e-9, format!("n ≤ {small}")));
    }
    if let Some(Oracle::Polya { spec, scale, .. }) = &oracle {
        if spec.d() == 1 {
            let t = zcount(ext, &xi, small, false)?;
            let (p, q) = (spec.plus[0], spec.minus[0]);
            let err = (0..=small)
                .map(|n| {
                    let want = if n % 2 == 1 { 0.0 } else { binomial(n as u64, n as u64 / 2) * (p * q).powi(n as i32 / 2) * scale.powi(n as i32) };
                    if want == 0.0 { t.z(n).abs() } else { rel_err(t.z(n), want) }
                })
                .fold(0.0, f64::max);
            checks.push(Check::at_most("zcount.binomial", err, 1e-12, format!("n ≤ {small}")));
        }
    }

    // spectral radius and exponent
    let cal = Calibration::new(ext, &xi, n_max)?;
    let est = &cal.est;
    let lattice_d = match ext.group {
        GroupSpec::Lattice { d } => Some(d),
        _ => None,
    };
    let reference = match &oracle {
        Some(o) => Some((o.rho(), o.name().to_string())),
        None => tilted_pressure(ext)?.map(|(r, _)| (r, "tilted pressure".to_string())),
    };
    if let Some((rho, source)) = &reference {
        let (err, tol) = match lattice_d {
            Some(_) => ((est.rho_hat - rho).abs(), 0.002),
            None => (rel_err(est.rho_hat, *rho), 0.02),
        };
        checks.push(Check::at_most("spectrum.rho", err, tol, format!("ρ̂ = {:.6}, {source} ρ = {rho:.6}", est.rho_hat)));
    }
    let expected = match &ext.group {
        GroupSpec::Lattice { d } => Some((*d as f64 / 2.0, 0.2, *d <= 2)),
        GroupSpec::Free { .. } => Some((1.5, 0.3, false)),
        GroupSpec::Table(_) => None,
    };
    if let Some((beta, tol, conservative)) = expected {
        checks.push(Check::at_most("spectrum.beta", (est.beta - beta).abs(), tol, format!("β = {:.4} vs {beta}", est.beta)));
        let v = classify_ergodicity(&cal.table, est);
        let got = v.verdict == Verdict::ConservativeErgodic;
        checks.push(Check::flag(
            "classify.verdict",
            v.verdict != Verdict::Inconclusive && got == conservative,
            format!("{}{}", v.verdict.as_str(), v.note.map(|n| format!(" ({n})")).unwrap_or_default()),
        ));
    }

    // conformal measure
    let mesh = mesh_cylinders(ext, num.depth, num.ball_radius)?;
    let with_img = with_images(ext, &mesh, 1)?;
    let nu = cal.nu_base(&with_img)?;
    let residual = max_residual(ext, &nu, &mesh)?;
    let tol = if lattice_d.is_some() { 1e-2 } else { 0.1 };
    checks.push(Check::at_most("conformal.residual", residual, tol, format!("{} cylinders, depth ≤ {}", mesh.len(), num.depth)));
    if let Some(o) = &oracle {
        let exact = MeasureApprox::from_oracle(ext, o, &with_img)?;
        let r = max_residual(ext, &exact, &mesh)?;
        checks.push(Check::at_most("conformal.oracle_residual", r, 1e-12, String::new()));
        let scale = exact.masses.values().cloned().fold(0.0, f64::max);
        let mut worst = 0.0f64;
        for c in &mesh {
            let want = exact.masses[c];
            if want > 1e-6 * scale {
                worst = worst.max(rel_err(nu.masses[c], want));
            }
        }
        let tol = if lattice_d.is_some() { 0.05 } else { 0.15 };
        checks.push(Check::at_most("conformal.vs_oracle", worst, tol, "max relative error over the mesh".into()));
    }

    // kernel
    let targets = nested_targets(&ext.shift.least_extension(&[ext.shift.len() - 1], 4), &ext.group.identity(), 4);
    let anchor = kernel_estimate(&cal, &(xi.clone(), ext.group.identity()), &targets)?;
    let off = anchor.values.iter().chain([&anchor.limit]).map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("kernel.anchor", off, 0.0, String::new()));
    if let (Some(o), Some(g)) = (&oracle, unit(ext)) {
        let (k, want) = match o {
            Oracle::Polya { .. } => (kernel_estimate(&cal, &(xi.clone(), g.clone()), &targets)?, o.harmonic(ext, &g)?),
            Oracle::Free { spec, .. } => {
                let Some(b) = (0..ext.shift.len()).find(|&a| ext.psi(a) == &GroupElement::Free(vec![2])) else {
                    return finish(cfg, checks, started);
                };
                let word = vec![b; 5];
                (kernel_estimate(&cal, &(xi.clone(), g), &nested_targets(&word, &ext.group.identity(), 5))?, spec.kernel(&[1], &[], &[2; 12])?.0)
            }
        };
        let tol = if matches!(o, Oracle::Polya { .. }) { 0.05 } else { 0.15 };
        checks.push(Check::at_most("kernel.vs_oracle", rel_err(k.limit, want), tol, format!("K = {:.5} vs {want:.5}", k.limit)));

        // harmonic function and martingales
        let h = |z: &Point| o.harmonic(ext, &z.1);
        let rep = harmonicity_residual(ext, &h, o.rho(), &point_mesh(ext, 2, num.ball_radius.max(1))?)?;
        checks.push(Check::at_most("harmonic.oracle_residual", rep.max_residual, 1e-9, format!("{} points", rep.points)));
        let gibbs = ext.potential.base_pressure(&ext.shift)?;
        let paths = sample_paths(ext, &gibbs, 17, 10_000, num.seed, &|_, _| None);
        let hv = |z: &Point| o.harmonic(ext, &z.1).unwrap_or(f64::NAN);
        let mart = martingale_bucket_test(ext, &paths, &hv, o.rho(), &[4, 8, 16], 1, 100, 3);
        checks.push(Check::at_most("paths.martingale", mart.max_abs_z, mart.threshold, format!("{} buckets", mart.buckets.len())));
        let symmetric_lattice = matches!(o, Oracle::Polya { spec, .. } if spec.plus == spec.minus);
        if !symmetric_lattice {
            let obs = oracle_decay_observable(o);
            let paths = sample_paths(ext, &gibbs, 200, 100, num.seed, &obs);
            let s = decay_summary(&paths, 4, 200, 1e3);
            checks.push(Check {
                name: "paths.decay".into(),
                value: s.fraction(),
                tolerance: 0.95,
                passed: s.fraction() >= 0.95,
                detail: format!("{}/{} paths drop by 10^3, median slope {:.4}", s.passing, s.total, s.median_slope),
            });
        }
    }

    // dimension
    let (lo, hi) = ext.potential.value_range();
    if lo > 0.0 && hi < 1.0 {
        let r = find_delta(ext, (0.0, 4.0), 1e-5, n_max.min(24))?;
        checks.push(Check::flag(
            "dimension.certificate",
            r.certificate.0 > 1.0 && r.certificate.1 < 1.0,
            format!("δ = {:.6}, P(δ∓tol) = ({:.6}, {:.6})", r.delta, r.certificate.0, r.certificate.1),
        ));
        let at_delta = ext.with_potential(ext.potential.powered(r.delta));
        let rho_at = match oracle_for(&at_delta) {
            Some(o) => Some(o.rho()),
            None => tilted_pressure(&at_delta)?.map(|(v, _)| v),
        };
        if let Some(rho_at) = rho_at {
            let tol = if lattice_d.is_some() { 0.002 } else { 0.02 };
            checks.push(Check::at_most("dimension.pressure_at_delta", (rho_at - 1.0).abs(), tol, format!("reference ρ(φ^δ) = {rho_at:.6}")));
        }
        if let Some(flag) = r.amenable_consistent {
            checks.push(Check::flag("dimension.amenable", flag == lattice_d.is_some(), format!("gap = {:.3e} ± {:.3e}", r.amenability_gap, r.gap_stderr)));
        }
        if let DecayCheck::Checked { summary, passes } = decay_check(ext, &r, 200, 100, num.seed)? {
            checks.push(Check::flag("dimension.decay", passes, format!("{}/{} paths, median slope {:.4}", summary.passing, summary.total, summary.median_slope)));
        }
    }
    finish(cfg, checks, started)
}

fn finish(cfg: &SystemConfig, checks: Vec<Check>, started: Instant) -> Result<ValidationReport> {
    Ok(ValidationReport { name: cfg.name.clone().unwrap_or_default(), checks, seconds: started.elapsed().as_secs_f64() })
}

fn max_residual(ext: &ExtensionSpec, nu: &MeasureApprox, mesh: &[XCylinder]) -> Result<f64> {
    let mut worst = 0.0f64;
    let min_len = ext.potential.depth().max(1);
    for c in mesh.iter().filter(|c| c.word.len() >= min_len) {
        let r = conformality_residual(ext, nu, c, 1)?;
        if !r.undefined {
            worst = worst.max(r.value);
        }
    }
    Ok(worst)
}
