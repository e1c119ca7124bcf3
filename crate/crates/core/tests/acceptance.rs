//! Acceptance suite: one pass/fail line per criterion, nonzero exit when any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;

use groupext::config::{parse_config, SystemConfig};
use groupext::dimension::find_delta;
use groupext::extension::{ExtensionSpec, XCylinder};
use groupext::group::{GroupElement, GroupSpec};
use groupext::harmonic::{
    decay_summary, kernel_eigen_residuals, kernel_estimate, martingale_bucket_test, nested_targets, oracle_decay_observable,
    regularity_coefficients, sample_paths, theta_eval, Point,
};
use groupext::oracles::oracle_for;
use groupext::patterson::{
    classify_ergodicity, conformality_residual, mesh_cylinders, with_images, Calibration, MeasureApprox, Verdict,
};
use groupext::potential::PotentialSpec;
use groupext::shift::{MetricParam, ShiftSpec};
use groupext::transfer::{doeblin_fortet_check, spectral_radius, zcount, CylinderFunction};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Nearest-neighbour walk on ℤ^d with step weights p(+e_i), p(−e_i), given
/// as decimal or "num/den" literals.
fn lattice_walk(plus: &[&str], minus: &[&str]) -> SystemConfig {
    let d = plus.len();
    let mut symbols = Vec::new();
    let mut values = Vec::new();
    let mut psi = Vec::new();
    let mut dagger = Vec::new();
    for i in 0..d {
        dagger.push(format!("\"+{0}\": \"-{0}\", \"-{0}\": \"+{0}\"", i + 1));
        for (sign, p) in [("+", plus[i]), ("-", minus[i])] {
            let name = format!("{sign}{}", i + 1);
            let mut v = vec![0; d];
            v[i] = if sign == "+" { 1 } else { -1 };
            values.push(format!("\"{name}\": \"{p}\""));
            psi.push(format!("\"{name}\": {v:?}"));
            symbols.push(format!("\"{name}\""));
        }
    }
    let text = format!(
        r#"{{"symbols": [{}], "dagger": {{{}}}, "potential": {{"depth": 1, "values": {{{}}}}}, "exact": true,
            "group": {{"kind": "lattice", "d": {d}}}, "psi": {{{}}}}}"#,
        symbols.join(", "),
        dagger.join(", "),
        values.join(", "),
        psi.join(", ")
    );
    parse_config(&text).expect("walk config")
}

fn bundled(name: &str) -> SystemConfig {
    let text = match name {
        "polya_d1_sym" => include_str!("../configs/polya_d1_sym.json"),
        "polya_d1_asym" => include_str!("../configs/polya_d1_asym.json"),
        "polya_d3_sym" => include_str!("../configs/polya_d3_sym.json"),
        "free_d2_sym" => include_str!("../configs/free_d2_sym.json"),
        "golden_mean_z" => include_str!("../configs/golden_mean_z.json"),
        _ => unreachable!(),
    };
    parse_config(text).expect("bundled config")
}

/// ℤ-extension of the full 2-shift with a non-constant potential of the given depth.
fn z_system(depth: usize) -> ExtensionSpec {
    let shift = ShiftSpec::full(vec!["+1".into(), "-1".into()], Some(vec![1, 0])).unwrap();
    let entries = shift
        .words_of_length(depth)
        .map(|w| {
            let v = 0.5 + 0.05 * w[1] as f64 - 0.03 * w.get(2).copied().unwrap_or(0) as f64 - 0.02 * w[0] as f64;
            (w, v)
        })
        .collect();
    let pot = PotentialSpec::new(&shift, depth, entries, MetricParam::default()).unwrap();
    let psi = vec![GroupElement::Lattice(vec![1]), GroupElement::Lattice(vec![-1])];
    ExtensionSpec::new(shift, pot, GroupSpec::lattice(1).unwrap(), psi).unwrap()
}

fn lat(k: i64) -> GroupElement {
    GroupElement::Lattice(vec![k])
}

fn rho_formula(plus: &[f64], minus: &[f64]) -> f64 {
    2.0 * plus.iter().zip(minus).map(|(p, q)| (p * q).sqrt()).sum::<f64>()
}

fn c1_exact_partition() -> Outcome {
    let started = Instant::now();
    let mut notes = Vec::new();
    for (p, q) in [((1, 2), (1, 2)), ((4, 5), (1, 5))] {
        let cfg = lattice_walk(&[&format!("{}/{}", p.0, p.1)], &[&format!("{}/{}", q.0, q.1)]);
        let t = zcount(&cfg.ext, &cfg.ext.default_xi(), 40, true).map_err(|e| e.to_string())?;
        let exact = t.exact.as_ref().ok_or("no exact values")?;
        let pq = BigRational::new(BigInt::from(p.0 * q.0), BigInt::from(p.1 * q.1));
        for n in 0..=20usize {
            let binom: BigInt = (0..n).fold(BigInt::from(1), |acc, i| acc * BigInt::from(2 * n - i) / BigInt::from(i + 1));
            let want = BigRational::from_integer(binom) * num_traits::pow(pq.clone(), n);
            if exact[2 * n] != want {
                return Err(format!("p = {p:?}: Z^{} = {} differs from {}", 2 * n, exact[2 * n], want));
            }
            if n > 0 && exact[2 * n - 1] != BigRational::from_integer(0.into()) {
                return Err(format!("odd term Z^{} nonzero", 2 * n - 1));
            }
        }
        notes.push(format!("p = {}/{} exact through Z^40", p.0, p.1));
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("{} in {secs:.2}s", notes.join(", ")))
}

fn c2_spectral_radii() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let cases: [(&[&str], &[&str], &[f64], &[f64]); 4] = [
        (&["1/2"], &["1/2"], &[0.5], &[0.5]),
        (&["4/5"], &["1/5"], &[0.8], &[0.2]),
        (&["1/4", "1/4"], &["1/4", "1/4"], &[0.25, 0.25], &[0.25, 0.25]),
        (&["2/5", "1/5"], &["1/10", "3/10"], &[0.4, 0.2], &[0.1, 0.3]),
    ];
    for (plus, minus, pf, mf) in cases {
        let cfg = lattice_walk(plus, minus);
        let cal = Calibration::new(&cfg.ext, &cfg.ext.default_xi(), 40).map_err(|e| e.to_string())?;
        let want = rho_formula(pf, mf);
        let err = (cal.rho_hat() - want).abs();
        ok &= err <= 0.002;
        notes.push(format!("ℤ^{} {:?}/{:?}: |Δρ| = {err:.1e}", pf.len(), pf, mf));
    }
    let started = Instant::now();
    let f2 = bundled("free_d2_sym");
    let t = zcount(&f2.ext, &f2.ext.default_xi(), 24, false).map_err(|e| e.to_string())?;
    let est = spectral_radius(&t, Some(1.0)).map_err(|e| e.to_string())?;
    let want = 3f64.sqrt() / 2.0;
    let rel = (est.rho_hat / want - 1.0).abs();
    let secs = started.elapsed().as_secs_f64();
    ok &= rel <= 0.02 && secs < 300.0;
    notes.push(format!("F_2: ρ̂ = {:.5} ({:.2}% off, {secs:.1}s)", est.rho_hat, 100.0 * rel));
    ensure(ok, notes.join("; "))
}

fn c3_and_c4_exponents() -> (Outcome, Outcome) {
    let run = || -> Result<(Vec<(String, f64, f64, bool)>, Vec<(String, Verdict, bool)>), String> {
        let mut betas = Vec::new();
        let mut verdicts = Vec::new();
        let cases: Vec<(&str, SystemConfig, usize, f64, f64, bool)> = vec![
            ("ℤ^1 sym", lattice_walk(&["1/2"], &["1/2"]), 40, 0.5, 0.2, true),
            ("ℤ^1 asym", lattice_walk(&["4/5"], &["1/5"]), 40, 0.5, 0.2, true),
            ("ℤ^2 sym", lattice_walk(&["1/4", "1/4"], &["1/4", "1/4"]), 40, 1.0, 0.2, true),
            ("ℤ^2 asym", lattice_walk(&["2/5", "1/5"], &["1/10", "3/10"]), 40, 1.0, 0.2, true),
            ("ℤ^3 sym", bundled("polya_d3_sym"), 40, 1.5, 0.2, false),
            ("F_2 sym", bundled("free_d2_sym"), 24, 1.5, 0.3, false),
        ];
        for (name, cfg, n, beta, tol, conservative) in cases {
            let cal = Calibration::new(&cfg.ext, &cfg.ext.default_xi(), n).map_err(|e| e.to_string())?;
            betas.push((name.to_string(), cal.est.beta, beta, (cal.est.beta - beta).abs() <= tol));
            let v = classify_ergodicity(&cal.table, &cal.est);
            let ok = if conservative { v.verdict == Verdict::ConservativeErgodic } else { v.verdict == Verdict::Dissipative };
            verdicts.push((name.to_string(), v.verdict, ok));
        }
        Ok((betas, verdicts))
    };
    match run() {
        Err(e) => (Err(e.clone()), Err(e)),
        Ok((betas, verdicts)) => {
            let b = betas.iter().map(|(n, got, want, _)| format!("{n} β = {got:.3} (want {want})")).collect::<Vec<_>>().join("; ");
            let v = verdicts.iter().map(|(n, v, _)| format!("{n} {}", v.as_str())).collect::<Vec<_>>().join("; ");
            (ensure(betas.iter().all(|x| x.3), b), ensure(verdicts.iter().all(|x| x.2), v))
        }
    }
}

fn c5_measure_values() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let asym = lattice_walk(&["4/5"], &["1/5"]);
    let cal = Calibration::new(&asym.ext, &asym.ext.default_xi(), 40).map_err(|e| e.to_string())?;
    let sheets = [XCylinder::sheet(lat(0)), XCylinder::sheet(lat(1))];
    let nu = cal.nu_base(&sheets).map_err(|e| e.to_string())?;
    let ratio = nu.masses[&sheets[1]] / nu.masses[&sheets[0]];
    ok &= (ratio / 0.5 - 1.0).abs() <= 0.05;
    notes.push(format!("(0.8,0.2): ν̂(X_1)/ν̂(X_0) = {ratio:.4}"));

    let sym = lattice_walk(&["1/2"], &["1/2"]);
    let cal = Calibration::new(&sym.ext, &sym.ext.default_xi(), 40).map_err(|e| e.to_string())?;
    let sheets: Vec<XCylinder> = (-3..=3).map(|g| XCylinder::sheet(lat(g))).collect();
    let nu = cal.nu_base(&sheets).map_err(|e| e.to_string())?;
    let worst = sheets.iter().map(|c| (nu.masses[c] - 1.0).abs()).fold(0.0, f64::max);
    ok &= worst <= 0.05;
    notes.push(format!("symmetric: max |ν̂(X_g) − 1| = {worst:.4} for |g| ≤ 3"));

    let f2 = bundled("free_d2_sym");
    let cal = Calibration::new(&f2.ext, &f2.ext.default_xi(), 24).map_err(|e| e.to_string())?;
    let oracle = oracle_for(&f2.ext).ok_or("no F_2 oracle")?;
    let sheets = mesh_cylinders(&f2.ext, 0, 2).map_err(|e| e.to_string())?;
    let nu = cal.nu_base(&sheets).map_err(|e| e.to_string())?;
    let base = nu.masses[&XCylinder::sheet(f2.ext.group.identity())];
    let mut worst = 0.0f64;
    for c in &sheets {
        let want = oracle.nu_group(&c.g).map_err(|e| e.to_string())?;
        worst = worst.max((nu.masses[c] / base / want - 1.0).abs());
    }
    ok &= worst <= 0.15;
    notes.push(format!("F_2: max relative error vs C_k 3^(-k/2) = {worst:.4} for k ≤ 2"));
    ensure(ok, notes.join("; "))
}

fn max_residual(ext: &ExtensionSpec, nu: &MeasureApprox, mesh: &[XCylinder]) -> Result<(f64, usize), String> {
    let mut worst = 0.0f64;
    let mut count = 0;
    for c in mesh.iter().filter(|c| c.word.len() >= ext.potential.depth()) {
        let r = conformality_residual(ext, nu, c, 1).map_err(|e| e.to_string())?;
        if !r.undefined {
            worst = worst.max(r.value);
            count += 1;
        }
    }
    Ok((worst, count))
}

fn c6_conformality() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for name in ["polya_d1_sym", "polya_d1_asym", "golden_mean_z"] {
        let cfg = bundled(name);
        let ext = &cfg.ext;
        let mesh = mesh_cylinders(ext, 3, 2).map_err(|e| e.to_string())?;
        let cyls = with_images(ext, &mesh, 1).map_err(|e| e.to_string())?;
        let cal = Calibration::new(ext, &ext.default_xi(), 40).map_err(|e| e.to_string())?;
        let nu = cal.nu_base(&cyls).map_err(|e| e.to_string())?;
        let (worst, count) = max_residual(ext, &nu, &mesh)?;
        ok &= worst < 1e-2 && count > 0;
        notes.push(format!("{name}: {worst:.2e} over {count} cylinders"));
    }
    for name in ["polya_d1_asym", "free_d2_sym"] {
        let cfg = bundled(name);
        let ext = &cfg.ext;
        let oracle = oracle_for(ext).ok_or("no oracle")?;
        let mesh = mesh_cylinders(ext, 3, 2).map_err(|e| e.to_string())?;
        let cyls = with_images(ext, &mesh, 1).map_err(|e| e.to_string())?;
        let nu = MeasureApprox::from_oracle(ext, &oracle, &cyls).map_err(|e| e.to_string())?;
        let (worst, _) = max_residual(ext, &nu, &mesh)?;
        ok &= worst < 1e-12;
        notes.push(format!("{name} oracle: {worst:.1e}"));
    }
    ensure(ok, notes.join("; "))
}

fn c7_kernel() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let asym = lattice_walk(&["4/5"], &["1/5"]);
    let ext = &asym.ext;
    let cal = Calibration::new(ext, &ext.default_xi(), 40).map_err(|e| e.to_string())?;
    let targets = nested_targets(&[1, 0, 0, 1], &lat(2), 4);
    let anchor = kernel_estimate(&cal, &(cal.table.xi.clone(), lat(0)), &targets).map_err(|e| e.to_string())?;
    let exact_one = anchor.values.iter().all(|&v| v == 1.0) && anchor.limit == 1.0;
    ok &= exact_one;
    notes.push(format!("anchor ≡ 1: {exact_one}"));

    // value at source g = 1 is ν(X_{g^{-1}}) = λ = 2 for every target path
    let oracle = oracle_for(ext).ok_or("no oracle")?;
    let want = oracle.harmonic(ext, &lat(1)).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (z, g) in [(vec![0, 1, 1, 0], lat(0)), (vec![1, 1, 1, 1], lat(2)), (vec![0, 0, 1, 0], lat(-1))] {
        let k = kernel_estimate(&cal, &(vec![0], lat(1)), &nested_targets(&z, &g, 4)).map_err(|e| e.to_string())?;
        for v in &k.values {
            worst = worst.max((v / want - 1.0).abs());
        }
    }
    ok &= worst <= 0.05;
    notes.push(format!("Polya kernel constant {want} within {:.2}%", 100.0 * worst));

    let mut eig = 0.0f64;
    for e in [asym.ext.clone(), z_system(3)] {
        let cal = Calibration::new(&e, &[0, 0, 0], 30).map_err(|e| e.to_string())?;
        let cyls = mesh_cylinders(&e, 2, 1).map_err(|e| e.to_string())?;
        for zeta in [(vec![0, 1, 0], lat(0)), (vec![1, 1, 0], lat(1))] {
            for r in kernel_eigen_residuals(&cal, &zeta, &cyls).map_err(|e| e.to_string())? {
                eig = eig.max(r);
            }
        }
    }
    ok &= eig < 0.05;
    notes.push(format!("eigen-relation residual {eig:.2e}"));

    let e = z_system(3);
    let cal = Calibration::new(&e, &[0, 0, 0], 30).map_err(|e| e.to_string())?;
    let zeta = (vec![1, 0, 1], lat(1));
    let z = vec![0, 1, 1, 0, 0, 1];
    let k = kernel_estimate(&cal, &zeta, &nested_targets(&z, &lat(0), 5)).map_err(|e| e.to_string())?;
    let image = kernel_estimate(&cal, &zeta, &nested_targets(&z[1..], e.psi(z[0]), 4)).map_err(|e| e.to_string())?;
    let diff = (k.limit - image.limit).abs();
    let spread = k.spread + image.spread;
    ok &= diff <= spread.max(1e-9);
    notes.push(format!("T-invariance |Δ| = {diff:.2e} vs spread {spread:.2e}"));
    ensure(ok, notes.join("; "))
}

fn c8_martingales() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, cfg) in [("F_2", bundled("free_d2_sym")), ("ℤ^1 (0.8,0.2)", bundled("polya_d1_asym"))] {
        let ext = &cfg.ext;
        let oracle = oracle_for(ext).ok_or("no oracle")?;
        let gibbs = ext.potential.base_pressure(&ext.shift).map_err(|e| e.to_string())?;
        let paths = sample_paths(ext, &gibbs, 200, 100, 0, &oracle_decay_observable(&oracle));
        let s = decay_summary(&paths, 4, 200, 1e3);
        ok &= s.passing >= 95;
        notes.push(format!("{name}: {}/{} paths drop ≥ 10^3", s.passing, s.total));
    }
    let cfg = bundled("polya_d1_asym");
    let ext = &cfg.ext;
    let oracle = oracle_for(ext).ok_or("no oracle")?;
    let gibbs = ext.potential.base_pressure(&ext.shift).map_err(|e| e.to_string())?;
    let paths = sample_paths(ext, &gibbs, 17, 10_000, 0, &|_, _| None);
    let h = |z: &Point| oracle.harmonic(ext, &z.1).unwrap_or(f64::NAN);
    let rep = martingale_bucket_test(ext, &paths, &h, oracle.rho(), &[4, 8, 16], 1, 100, 3);
    ok &= rep.passes();
    notes.push(format!("bucket test max |z| = {:.2} over {} buckets (3σ)", rep.max_abs_z, rep.buckets.len()));
    ensure(ok, notes.join("; "))
}

fn c9_regularity() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for depth in [2, 3] {
        let e = z_system(depth);
        let c_phi = e.potential.distortion_constant(&e.shift);
        let cal = Calibration::new(&e, &[0, 0, 0], 24).map_err(|e| e.to_string())?;
        let f = CylinderFunction::indicator(XCylinder::sheet(lat(0)));
        let theta = |z: &Point| theta_eval(&cal, &f, z, 8).map(|t| t.value);
        let reg = regularity_coefficients(&e, &theta, 3, &[lat(0), lat(1)]).map_err(|e| e.to_string())?;
        ok &= reg.ld <= c_phi + 1e-3;
        notes.push(format!("depth {depth}: LD(Θf) = {:.3e} ≤ C_φ = {c_phi:.3e}", reg.ld));
    }
    let e = z_system(2);
    let words: Vec<Vec<usize>> = (1..=3).flat_map(|n| e.shift.words_of_length(n)).collect();
    let pairs: Vec<(Vec<usize>, Vec<usize>)> =
        words.iter().flat_map(|x| words.iter().filter(|y| y[0] == x[0]).map(move |y| (x.clone(), y.clone()))).collect();
    let mut checked = 0;
    let mut worst = f64::NEG_INFINITY;
    for f in [
        CylinderFunction::indicator(XCylinder::new(vec![0, 1], lat(0))),
        CylinderFunction::indicator(XCylinder::new(vec![1], lat(1))),
    ] {
        for n in 1..=4 {
            let rep = doeblin_fortet_check(&e, &f, n, &pairs, &lat(0)).map_err(|e| e.to_string())?;
            ok &= rep.passes();
            worst = worst.max(rep.max_excess);
            checked += rep.pairs_checked;
        }
    }
    notes.push(format!("Doeblin–Fortet n ≤ 4: {checked} ordered pairs, max excess {worst:.2e}"));
    ensure(ok, notes.join("; "))
}

fn c10_dimension() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let amenable = [("ℤ^1", bundled("polya_d1_sym"), 30), ("ℤ^2", lattice_walk(&["1/4", "1/4"], &["1/4", "1/4"]), 30), ("ℤ^3", bundled("polya_d3_sym"), 24)];
    for (name, cfg, n) in amenable {
        let r = find_delta(&cfg.ext, (0.0, 4.0), 1e-6, n).map_err(|e| e.to_string())?;
        let cert = r.certificate.0 > 1.0 && r.certificate.1 < 1.0;
        ok &= cert && r.amenable_consistent == Some(true) && r.dim_value == r.delta;
        notes.push(format!("{name}: δ = {:.5}, certificate {cert}, amenable {:?}, dim = δ: {}", r.delta, r.amenable_consistent, r.dim_value == r.delta));
    }
    let f2 = bundled("free_d2_sym");
    let r = find_delta(&f2.ext, (0.0, 4.0), 1e-6, 24).map_err(|e| e.to_string())?;
    let cert = r.certificate.0 > 1.0 && r.certificate.1 < 1.0;
    ok &= cert && r.amenable_consistent == Some(false) && r.dim_exceeds_delta;
    notes.push(format!(
        "F_2: δ = {:.5}, certificate {cert}, amenable {:?}, dim = {:.4} ± {:.1e} > δ",
        r.delta, r.amenable_consistent, r.dim_value, r.dim_stderr
    ));
    ensure(ok, notes.join("; "))
}

fn c11_validate() -> Outcome {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_groupext")).arg("validate").output().map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    let failed: Vec<String> = String::from_utf8_lossy(&out.stderr).lines().filter(|l| l.contains("FAIL")).map(|l| l.trim().to_string()).collect();
    let status = out.status.code().unwrap_or(-1);
    ensure(
        status == 0 && secs < 900.0,
        format!("exit {status} in {secs:.0}s{}", if failed.is_empty() { String::new() } else { format!(", failing: {}", failed.join(" | ")) }),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    })
}

fn main() -> ExitCode {
    let (c3, c4) = match catch_unwind(c3_and_c4_exponents) {
        Ok(pair) => pair,
        Err(_) => (Err("panicked".into()), Err("panicked".into())),
    };
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "exact partition functions", guarded(c1_exact_partition)),
        (2, "spectral radii", guarded(c2_spectral_radii)),
        (3, "correction exponents", c3),
        (4, "ergodicity classifier", c4),
        (5, "conformal measure values", guarded(c5_measure_values)),
        (6, "conformality residuals", guarded(c6_conformality)),
        (7, "kernel checks", guarded(c7_kernel)),
        (8, "martingale decay", guarded(c8_martingales)),
        (9, "regularity", guarded(c9_regularity)),
        (10, "dimension pipeline", guarded(c10_dimension)),
    ];
    results.push((11, "full oracle diff", guarded(c11_validate)));
    let mut failures = 0;
    for (id, name, outcome) in &results {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {tag}: {name}: {detail}");
    }
    println!("{} of {} criteria passed", results.len() - failures, results.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
