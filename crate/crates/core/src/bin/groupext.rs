use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use groupext::config::{load_config, parse_config, SystemConfig};
use groupext::dimension::{decay_check, find_delta};
use groupext::error::{Error, Result};
use groupext::harmonic::{
    harmonicity_residual, kernel_estimate, nested_targets, oracle_decay_observable, point_mesh, sample_paths, theta_eval, Point,
};
use groupext::oracles::{oracle_for, Oracle};
use groupext::output::{self, envelope, num, obj, render};
use groupext::patterson::{build_bn, classify_ergodicity, conformal_limit, default_schedule, mesh_cylinders, Calibration, MeasureApprox};
use groupext::transfer::{zcount, CylinderFunction};
use groupext::validate::validate;
use groupext::extension::XCylinder;

/// Bundled example systems, in the order `validate` runs them.
const BUNDLED: [(&str, &str); 5] = [
    ("polya_d1_sym", include_str!("../../configs/polya_d1_sym.json")),
    ("polya_d1_asym", include_str!("../../configs/polya_d1_asym.json")),
    ("polya_d3_sym", include_str!("../../configs/polya_d3_sym.json")),
    ("free_d2_sym", include_str!("../../configs/free_d2_sym.json")),
    ("golden_mean_z", include_str!("../../configs/golden_mean_z.json")),
];

#[derive(Parser)]
#[command(name = "groupext", version, about = "Conformal measures and harmonic functions for group extensions of Markov shifts")]
struct Cli {
    /// System configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write artifacts into this directory instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Random seed; overrides numerics.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exact rational partition function.
    #[arg(long, global = true)]
    exact: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition function Z^n(ξ) as CSV.
    Zcount,
    /// Spectral radius estimate.
    Spectrum,
    /// ρ̂-conformal measure on the cylinder mesh.
    Conformal,
    /// Conservative/dissipative verdict.
    Classify,
    /// Martin kernel estimates from sources in the unit ball.
    Martin,
    /// Sample paths with the decay observable, as CSV.
    Paths {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 200)]
        len: usize,
    },
    /// Harmonicity residuals of Θ(1_{X_id}) and of the closed form when known.
    HarmonicCheck,
    /// Exponent δ, dimension value and amenability flag.
    Dimension {
        /// Truncation used for each pressure evaluation.
        #[arg(long, default_value_t = 24)]
        n: usize,
    },
    /// Closed-form tables for Polya walks on ℤ^d.
    ExampleZd,
    /// Closed-form tables for walks on free groups.
    ExampleFd,
    /// Oracle diff suite; runs every bundled config when --config is absent.
    Validate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("cannot start {n} workers: {e}");
            return ExitCode::from(3);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } | Error::Input(_) => 2,
                Error::Resource(_) => {
                    eprintln!("hint: lower numerics.N, numerics.depth or numerics.ball_radius");
                    3
                }
                _ => 1,
            })
        }
    }
}

fn load(cli: &Cli) -> Result<SystemConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::config("--config", "a configuration file is required"))?;
    let mut cfg = load_config(path)?;
    if let Some(s) = cli.seed {
        cfg.numerics.seed = s;
    }
    cfg.numerics.exact |= cli.exact;
    Ok(cfg)
}

fn emit(cli: &Cli, file: &str, text: &str) -> Result<()> {
    match &cli.out {
        None => print!("{text}"),
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::Resource(format!("cannot create {}: {e}", dir.display())))?;
            let path = dir.join(file);
            std::fs::write(&path, text).map_err(|e| Error::Resource(format!("cannot write {}: {e}", path.display())))?;
        }
    }
    Ok(())
}

fn emit_json(cli: &Cli, cfg: &SystemConfig, command: &str, result: Value) -> Result<()> {
    let v = envelope(command, &cfg.hash, cfg.numerics.seed, result);
    emit(cli, &format!("{command}.json"), &render(&v))
}

fn run(cli: &Cli) -> Result<u8> {
    if let Command::Validate = cli.command {
        return run_validate(cli);
    }
    let cfg = load(cli)?;
    let ext = &cfg.ext;
    let n_max = cfg.numerics.n_max;
    let xi = ext.default_xi();
    match &cli.command {
        Command::Zcount => {
            let t = zcount(ext, &xi, n_max, cfg.numerics.exact)?;
            emit(cli, "zcount.csv", &output::table_csv(&t, &cfg.hash, cfg.numerics.seed))?;
        }
        Command::Spectrum => {
            let cal = Calibration::new(ext, &xi, n_max)?;
            emit_json(cli, &cfg, "spectrum", output::spectral_json(&cal.est))?;
        }
        Command::Conformal => {
            let cal = Calibration::new(ext, &xi, n_max)?;
            let weights = build_bn(&cal.table, cal.rho_hat(), n_max)?;
            let schedule = cfg.numerics.schedule.clone().unwrap_or_else(|| default_schedule(cal.rho_hat()));
            let mesh = mesh_cylinders(ext, cfg.numerics.depth, cfg.numerics.ball_radius)?;
            let nu = conformal_limit(ext, &cal.table, &cal.est, &weights, &mesh, &schedule)?;
            emit_json(cli, &cfg, "conformal", output::measure_json(ext, &nu))?;
        }
        Command::Classify => {
            let cal = Calibration::new(ext, &xi, n_max)?;
            emit_json(cli, &cfg, "classify", output::verdict_json(&classify_ergodicity(&cal.table, &cal.est)))?;
        }
        Command::Martin => {
            let cal = Calibration::new(ext, &xi, n_max)?;
            let depth = cfg.numerics.depth.max(1) + 1;
            let target_word = ext.shift.least_extension(&[ext.shift.len() - 1], depth);
            let targets = nested_targets(&target_word, &ext.group.identity(), depth);
            let estimates = ext
                .group
                .ball(1)?
                .into_iter()
                .map(|g| kernel_estimate(&cal, &(xi.clone(), g), &targets).map(|k| output::kernel_json(ext, &k)))
                .collect::<Result<Vec<_>>>()?;
            emit_json(cli, &cfg, "martin", Value::Array(estimates))?;
        }
        Command::Paths { count, len } => {
            if *len == 0 {
                return Err(Error::Input("--len must be positive".into()));
            }
            let gibbs = ext.potential.base_pressure(&ext.shift)?;
            let oracle = oracle_for(ext);
            let paths = match &oracle {
                Some(o) => sample_paths(ext, &gibbs, *len, *count, cfg.numerics.seed, &oracle_decay_observable(o)),
                None => sample_paths(ext, &gibbs, *len, *count, cfg.numerics.seed, &|_, _| None),
            };
            emit(cli, "paths.csv", &output::paths_csv(&paths, &cfg.hash, cfg.numerics.seed))?;
        }
        Command::HarmonicCheck => {
            let cal = Calibration::new(ext, &xi, n_max)?;
            let mesh = point_mesh(ext, 1, cfg.numerics.ball_radius.min(2))?;
            let f = CylinderFunction::indicator(XCylinder::sheet(ext.group.identity()));
            let theta = |z: &Point| theta_eval(&cal, &f, z, 8).map(|t| t.value);
            let est = harmonicity_residual(ext, &theta, cal.rho_hat(), &mesh)?;
            let closed = match oracle_for(ext) {
                Some(o) => {
                    let h = |z: &Point| o.harmonic(ext, &z.1);
                    output::harmonicity_json(&harmonicity_residual(ext, &h, o.rho(), &mesh)?)
                }
                None => Value::Null,
            };
            emit_json(cli, &cfg, "harmonic-check", obj([("theta", output::harmonicity_json(&est)), ("closed_form", closed)]))?;
        }
        Command::Dimension { n } => {
            let r = find_delta(ext, (0.0, 4.0), cfg.numerics.tol, *n)?;
            let decay = decay_check(ext, &r, 200, 100, cfg.numerics.seed)?;
            emit_json(cli, &cfg, "dimension", output::dimension_json(&r, Some(&decay)))?;
        }
        Command::ExampleZd | Command::ExampleFd => {
            let want_polya = matches!(cli.command, Command::ExampleZd);
            let o = oracle_for(ext).filter(|o| matches!(o, Oracle::Polya { .. }) == want_polya).ok_or_else(|| {
                Error::config("", if want_polya { "not a Polya walk on ℤ^d" } else { "not a nearest-neighbour walk on a free group" })
            })?;
            let mesh = mesh_cylinders(ext, cfg.numerics.depth, cfg.numerics.ball_radius)?;
            let nu = MeasureApprox::from_oracle(ext, &o, &mesh)?;
            let mut extra = vec![("family", Value::String(o.name().into())), ("rho", num(o.rho())), ("beta", num(o.beta()))];
            match &o {
                Oracle::Polya { spec, .. } => extra.push(("lambda", output::nums(&spec.lambda()))),
                Oracle::Free { spec, .. } => extra.push(("c_k", output::nums(&(0..=4).map(|k| spec.c_k(k)).collect::<Vec<_>>()))),
            }
            let mut result = output::measure_json(ext, &nu);
            let map = result.as_object_mut().expect("object");
            for (k, v) in extra {
                map.insert(k.into(), v);
            }
            let name = if want_polya { "example-zd" } else { "example-fd" };
            emit_json(cli, &cfg, name, result)?;
        }
        Command::Validate => unreachable!(),
    }
    Ok(0)
}

fn run_validate(cli: &Cli) -> Result<u8> {
    let configs: Vec<SystemConfig> = match &cli.config {
        Some(_) => vec![load(cli)?],
        None => BUNDLED
            .iter()
            .map(|(name, text)| {
                let mut c = parse_config(text)?;
                c.name.get_or_insert_with(|| name.to_string());
                if let Some(s) = cli.seed {
                    c.numerics.seed = s;
                }
                Ok(c)
            })
            .collect::<Result<_>>()?,
    };
    let mut all_ok = true;
    for cfg in &configs {
        let report = validate(cfg)?;
        eprintln!("{} ({:.1}s)", report.name, report.seconds);
        for c in &report.checks {
            eprintln!("  {} {:<28} {:.3e} (tol {:.1e}) {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.value, c.tolerance, c.detail);
        }
        all_ok &= report.passed();
        let result = output::validation_json(&report);
        let file = format!("validate-{}.json", if report.name.is_empty() { "config" } else { &report.name });
        let v = envelope("validate", &cfg.hash, cfg.numerics.seed, result);
        match &cli.out {
            Some(_) => emit(cli, &file, &render(&v))?,
            None => print!("{}", render(&v)),
        }
    }
    Ok(if all_ok { 0 } else { 1 })
}
