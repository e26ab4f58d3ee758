//! Command line front end: simulate, compute variations, calibrate, fit the
//! reaction term and run Monte Carlo studies.
//!
//! Exit codes: 0 on success, 1 on data or runtime errors, 2 on usage errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use spde_calib::basis::parse_pair;
use spde_calib::harness::{run_study, StudyConfig};
use spde_calib::nonparametric::{build_responses, default_sigma2, fit_fm, select_model, truncate};
use spde_calib::simulator::simulate;
use spde_calib::variation::{
    joint_estimate, rqv_double, rqv_double_balanced, rqv_space, rqv_time, subsampled_v, CompactSet,
};
use spde_calib::{BasisSpec, Error, GridShape, ModelSpec, ObservationGrid, Result, SimConfig};

const CURVE_POINTS: usize = 512;

#[derive(Parser)]
#[command(name = "spde", version, about = "Simulate and calibrate stochastic reaction-diffusion equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one observation grid from a JSON config `{model, sim, grid}`.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output file; `.json` writes an envelope with metadata, anything else CSV.
        #[arg(long)]
        out: PathBuf,
        /// Overrides `sim.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Realized quadratic variation of a grid file, printed as JSON.
    Qv {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        stat: Stat,
        /// Diffusivity for `--stat double`.
        #[arg(long)]
        theta: Option<f64>,
        /// Balance ratio for `--stat balanced`; defaults to the grid's own.
        #[arg(long)]
        r: Option<f64>,
        #[arg(long, default_value_t = 1)]
        nu: usize,
        #[arg(long, default_value_t = 1)]
        v: usize,
        #[arg(long, default_value_t = 1)]
        w: usize,
    },
    /// Joint estimate of `(sigma^2, theta)`, printed as JSON.
    Calibrate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        sigma2_range: Option<Vec<f64>>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        theta_range: Option<Vec<f64>>,
    },
    /// Least-squares fit of the reaction function on a `b = 0` grid.
    FitReaction {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Family::Trig)]
        basis: Family,
        /// Trigonometric index `m` (dimension 2m + 1) or `p,r` for piecewise
        /// polynomials on 2^p cells of degree r. With `--select`, the largest
        /// candidate.
        #[arg(long)]
        m: String,
        /// Half-width of the approximation interval `[-a, a]`.
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        /// Known diffusivity.
        #[arg(long, conflicts_with = "estimate_theta", required_unless_present = "estimate_theta")]
        theta: Option<f64>,
        /// Estimate the diffusivity from the same grid first.
        #[arg(long)]
        estimate_theta: bool,
        /// Penalized selection over all nested spaces up to `--m`.
        #[arg(long)]
        select: bool,
        #[arg(long, default_value_t = 2.0)]
        kappa: f64,
        /// `sigma^2` in the penalty; defaults to `V_t sqrt(pi theta)`.
        #[arg(long)]
        sigma2: Option<f64>,
        /// Clamp the fit to `[-bound, bound]`; without a value uses `N`.
        #[arg(long, num_args = 0..=1, default_missing_value = "NaN")]
        truncate: Option<f64>,
        /// Write `(x, f_hat(x))` on 512 points of `[-a, a]` as CSV.
        #[arg(long)]
        emit_curve: Option<PathBuf>,
        /// Write the fit JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo study from a JSON config.
    Mc {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the `output` path of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Stat {
    Vt,
    Vsp,
    Double,
    Balanced,
    Sub,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Family {
    Trig,
    Pp,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    model: ModelSpec,
    #[serde(default)]
    sim: SimConfig,
    grid: GridShape,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn load(path: &Path) -> Result<ObservationGrid> {
    ObservationGrid::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn run_simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", config.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let mut cfg: SimulateConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    let sim = simulate(&cfg.model, &cfg.grid, &cfg.sim)?;
    for w in &sim.warnings {
        eprintln!("warning: {w}");
    }
    if out.extension().is_some_and(|e| e == "json") {
        write_file(out, &sim.grid.to_json(Some(&cfg.model), Some(&cfg.sim))?)
    } else {
        let mut f = BufWriter::new(File::create(out)?);
        sim.grid.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

fn run_qv(input: &Path, stat: Stat, theta: Option<f64>, r: Option<f64>, nu: usize, v: usize, w: usize) -> Result<()> {
    let obs = load(input)?;
    let res = match stat {
        Stat::Vt => rqv_time(&obs)?,
        Stat::Vsp => rqv_space(&obs)?,
        Stat::Double => {
            let theta = theta.ok_or_else(|| Error::Domain("--stat double needs --theta".into()))?;
            rqv_double(&obs, theta)?
        }
        Stat::Balanced => rqv_double_balanced(&obs, r.unwrap_or_else(|| obs.shape.balance_ratio()))?,
        Stat::Sub => subsampled_v(&obs, nu, v, w)?,
    };
    print_json(&res)
}

fn range(v: Option<Vec<f64>>, default: (f64, f64)) -> (f64, f64) {
    v.map_or(default, |v| (v[0], v[1]))
}

fn run_calibrate(input: &Path, sigma2: Option<Vec<f64>>, theta: Option<Vec<f64>>) -> Result<()> {
    let obs = load(input)?;
    let d = CompactSet::default();
    let h = CompactSet {
        sigma2: range(sigma2, d.sigma2),
        theta: range(theta, d.theta),
    };
    print_json(&joint_estimate(&obs, &h)?)
}

fn candidates(family: Family, m: &str, a: f64, select: bool) -> Result<Vec<BasisSpec>> {
    match family {
        Family::Trig => {
            let m: usize = m
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("--m `{m}` is not an integer")))?;
            let lo = if select { 0 } else { m };
            (lo..=m).map(|k| BasisSpec::trig(k, a)).collect()
        }
        Family::Pp => {
            let (p, r) = parse_pair(m)?;
            let lo = if select { 0 } else { p };
            (lo..=p).map(|k| BasisSpec::piecewise(k, r, r, a)).collect()
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_fit(
    input: &Path,
    family: Family,
    m: &str,
    a: f64,
    theta: Option<f64>,
    estimate_theta: bool,
    select: bool,
    kappa: f64,
    sigma2: Option<f64>,
    bound: Option<f64>,
    emit_curve: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let obs = load(input)?;
    let theta = match theta {
        Some(t) => t,
        None => {
            debug_assert!(estimate_theta);
            joint_estimate(&obs, &CompactSet::default())?.theta_hat
        }
    };
    let data = build_responses(&obs, theta)?;
    let specs = candidates(family, m, a, select)?;
    let mut fit = if select {
        let s2 = match sigma2 {
            Some(s) => s,
            None => default_sigma2(&obs, theta)?,
        };
        select_model(&data, &specs, kappa, s2)?
    } else {
        fit_fm(&data, &specs[0])?
    };
    if let Some(b) = bound {
        fit = truncate(&fit, if b.is_nan() { obs.shape.n as f64 } else { b })?;
    }
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = emit_curve {
        let mut f = BufWriter::new(File::create(path)?);
        fit.write_curve(&mut f, CURVE_POINTS)?;
        f.flush()?;
    }
    match out {
        Some(path) => write_file(path, &serde_json::to_string_pretty(&fit)?),
        None => print_json(&fit),
    }
}

fn run_mc(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = StudyConfig::load(config)?;
    cfg.apply_env()?;
    if out.is_some() {
        cfg.output = out;
    }
    cfg.validate()?;
    let report = run_study(&cfg)?;
    if cfg.output.is_none() {
        writeln!(std::io::stdout().lock(), "{}", report.to_json()?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed } => run_simulate(&config, &out, seed),
        Command::Qv {
            input,
            stat,
            theta,
            r,
            nu,
            v,
            w,
        } => run_qv(&input, stat, theta, r, nu, v, w),
        Command::Calibrate {
            input,
            sigma2_range,
            theta_range,
        } => run_calibrate(&input, sigma2_range, theta_range),
        Command::FitReaction {
            input,
            basis,
            m,
            a,
            theta,
            estimate_theta,
            select,
            kappa,
            sigma2,
            truncate,
            emit_curve,
            out,
        } => run_fit(
            &input,
            basis,
            &m,
            a,
            theta,
            estimate_theta,
            select,
            kappa,
            sigma2,
            truncate,
            emit_curve.as_deref(),
            out.as_deref(),
        ),
        Command::Mc { config, out } => run_mc(&config, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
