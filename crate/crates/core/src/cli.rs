//! `simrobust` command line. Data goes to stdout, logs to stderr.
//!
//! Exit codes: `0` success, `1` a verification failed or the computation
//! itself failed, `2` usage or input error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{self, emit, stein_report, verify_table2, OutputFormat, Scenario, SweepReport};
use crate::data;
use crate::error::{Error, Result};
use crate::gaussian::QuadratureRule;
use crate::link::{builtin, constants_report, render_table, LinkName};
use crate::par::Exec;
use crate::recover::{baseline_erm, recover, write_trajectory_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable capping the sweep worker pool.
pub const THREADS_ENV: &str = "SIMROBUST_THREADS";

#[derive(Debug, Parser)]
#[command(name = "simrobust", version, about = "Robust single-index model recovery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural constants of a link function.
    Constants {
        #[arg(long)]
        link: LinkName,
        /// Noise standard deviation (enters C4 only).
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Noise fourth-moment constant; defaults to the Gaussian value.
        #[arg(long)]
        k4: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Reference-table and Stein-identity checks.
    Verify {
        #[command(subcommand)]
        what: Verify,
    },
    /// Draw a corrupted dataset from a scenario file.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// `.csv` for CSV, anything else for the binary format; stdout CSV if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the robust pipeline once.
    Recover {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Also run the unfiltered baseline on the same data.
        #[arg(long)]
        baseline: bool,
        /// Write the trajectory as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Sweep the contamination grid of a scenario.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        trials: Option<usize>,
        /// Rows as CSV (or JSON for a `.json` path); stdout CSV if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Full report with per-trial outcomes and the fitted slope, as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum Verify {
    /// Compare computed constants with the reference table.
    Table2 {
        #[arg(long, default_value_t = 0.02)]
        tol: f64,
        #[arg(long)]
        json: bool,
    },
    /// Univariate and multivariate Stein identities for `g = f²`.
    Stein {
        #[arg(long)]
        link: LinkName,
        #[arg(long, default_value_t = 5)]
        dim: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

/// Scenario file plus field overrides.
#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Number of gradient steps.
    #[arg(long = "steps")]
    pub steps: Option<usize>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let mut s = Scenario::load(&self.config)?;
        if let Some(seed) = self.seed {
            s.base.seed = seed;
        }
        if let Some(eps) = self.eps {
            s.base.eps = eps;
            s.eps_grid = vec![eps];
        }
        if self.steps.is_some() {
            s.steps = self.steps;
        }
        s.validate()?;
        Ok(s)
    }
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match execute(cli.command, &mut stdout.lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Input problems map to the usage code, computational failures to `1`.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_)
        | Error::Format(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::UnknownLink(_)
        | Error::EpsOutOfRange(_)
        | Error::TooFewSamples { .. }
        | Error::MissingTruth => EXIT_USAGE,
        _ => EXIT_FAILED,
    }
}

/// Runs one command, writing data to `out`.
pub fn execute<W: Write>(command: Command, out: &mut W) -> Result<i32> {
    match command {
        Command::Constants { link, sigma, k4, json } => {
            let k4 = k4.unwrap_or(3f64.powf(0.25) * sigma);
            let report = constants_report(&builtin(link), sigma, k4, &QuadratureRule::default())?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                write!(out, "{}", render_table(std::slice::from_ref(&report)))?;
                let c4 = report.c4.map_or("undefined".to_string(), |c| format!("{c:.4e}"));
                writeln!(
                    out,
                    "C4 = {c4}  alpha = {:.4e}  gamma = {:.4e}  eta = {:.4e}",
                    report.alpha, report.gamma, report.eta
                )?;
            }
            Ok(EXIT_OK)
        }
        Command::Verify {
            what: Verify::Table2 { tol, json },
        } => {
            let report = verify_table2(tol)?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                write!(out, "{}", report.render())?;
                let failed = report.failures().count();
                writeln!(
                    out,
                    "{} of {} cells within {tol}",
                    report.cells.len() - failed,
                    report.cells.len()
                )?;
            }
            Ok(if report.passed() { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Verify {
            what:
                Verify::Stein {
                    link,
                    dim,
                    samples,
                    seed,
                    json,
                },
        } => {
            let report = stein_report(link, dim, samples, seed)?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                writeln!(out, "link: {link}")?;
                writeln!(
                    out,
                    "univariate residual: {:.3e} (tolerance {:.0e})",
                    report.univariate_residual,
                    bench::STEIN_TOL
                )?;
                let m = &report.multivariate;
                writeln!(
                    out,
                    "multivariate residual: {:.3e}, stderr {:.3e} (d = {}, {} samples, tolerance {} stderr)",
                    m.residual,
                    m.stderr,
                    m.d,
                    m.samples,
                    bench::STEIN_MC_SIGMAS
                )?;
                writeln!(out, "{}", if report.pass { "pass" } else { "FAIL" })?;
            }
            Ok(if report.pass { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Simulate { scenario, out: path } => {
            let s = scenario.load()?;
            let ds = s.base.simulate(Exec::Sequential)?;
            eprintln!(
                "simulated n = {}, d = {}, corrupted = {}",
                ds.n(),
                ds.d(),
                ds.corrupted_count()
            );
            match path {
                Some(p) => data::save(&ds, &p)?,
                None => data::write_csv(&ds, &mut *out)?,
            }
            Ok(EXIT_OK)
        }
        Command::Recover {
            scenario,
            baseline,
            trajectory,
            json,
        } => {
            let s = scenario.load()?;
            let ds = s.base.simulate(Exec::Sequential)?;
            let cfg = s.recovery_config(s.base.eps, Exec::Sequential)?;
            let result = recover(&ds, &cfg)?;
            let base = if baseline {
                Some(baseline_erm(&ds, &cfg).map_err(|e| e.to_string()))
            } else {
                None
            };
            if let Some(p) = trajectory {
                write_trajectory_csv(&result.trajectory, std::fs::File::create(p)?)?;
            }
            if json {
                let doc = serde_json::json!({
                    "result": result,
                    "baseline": base.as_ref().map(|b| match b {
                        Ok(r) => serde_json::to_value(r).unwrap_or_default(),
                        Err(e) => serde_json::json!({ "error": e }),
                    }),
                });
                writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
            } else {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6e}"));
                writeln!(out, "P = {}, eta = {:.4e}, eps = {}", cfg.steps, cfg.eta(), s.base.eps)?;
                writeln!(out, "dist_init  = {}", fmt(result.dist_init))?;
                writeln!(out, "dist_final = {}", fmt(result.dist_final))?;
                if result.dist_final_raw.is_some() {
                    writeln!(out, "dist_final_raw = {}", fmt(result.dist_final_raw))?;
                }
                match &base {
                    Some(Ok(b)) => writeln!(out, "baseline dist_final = {}", fmt(b.dist_final))?,
                    Some(Err(e)) => writeln!(out, "baseline failed: {e}")?,
                    None => {}
                }
                let beta: Vec<String> = result.beta_hat.iter().map(|v| format!("{v:.6}")).collect();
                writeln!(out, "beta_hat = [{}]", beta.join(", "))?;
            }
            Ok(EXIT_OK)
        }
        Command::Sweep {
            scenario,
            trials,
            out: path,
            report,
        } => {
            let mut s = scenario.load()?;
            if let Some(t) = trials {
                s.trials = t;
            }
            s.validate()?;
            eprintln!("sweeping {} eps values x {} trials", s.grid().len(), s.trials);
            let rep = bench::sweep_epsilon(&s, Exec::default())?;
            log_sweep(&rep);
            match path {
                Some(p) => emit(&rep.rows, OutputFormat::from_path(&p), &p)?,
                None => bench::write_rows_csv(&rep.rows, &mut *out)?,
            }
            if let Some(p) = report {
                write_json(&p, &rep)?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn log_sweep(rep: &SweepReport) {
    for r in &rep.rows {
        eprintln!(
            "eps {:<6} robust {:.4e} (sd {:.2e}, {} failed)  init {:.4e}  baseline {:.4e} ({} failed)  {:.1}s",
            r.eps,
            r.mean_dist_final,
            r.std_dist_final,
            r.failures,
            r.mean_dist_init,
            r.baseline_mean_dist_final,
            r.baseline_failures,
            r.wall_time_s
        );
    }
    if let Some(s) = rep.slope {
        eprintln!("log-log slope over eps >= {}: {s:.3}", bench::SLOPE_MIN_EPS);
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

/// Sizes the global worker pool from [`THREADS_ENV`], if set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| crate::error::invalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(crate::error::invalid(format!("{THREADS_ENV} must be positive")));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| crate::error::invalid(e.to_string()))?;
    Ok(())
}
