//! Experiment harness: constant tables, structural Monte-Carlo checks and
//! contamination sweeps with machine-readable output.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{stream, stream_rng, ScenarioConfig};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{stein_check_multivariate, stein_check_univariate, MultivariateStein, QuadratureRule};
use crate::linalg::{dot, random_unit, SymMatrix};
use crate::link::{builtin, constants_report, ConstantsReport, LinkFunction, LinkName};
use crate::par::{self, Exec};
use crate::recover::{baseline_erm, recover, RecoveryConfig};

const TABLE2_SOURCE: &str = include_str!("../data/table2_reference.toml");

/// The six links with published reference constants, in table order.
pub const TABLE2_LINKS: [LinkName; 6] = [
    LinkName::Logistic,
    LinkName::Tanh,
    LinkName::Probit,
    LinkName::Square,
    LinkName::Gelu,
    LinkName::Swish,
];

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ReferenceRow {
    pub name: LinkName,
    #[serde(rename = "ESC")]
    pub esc: f64,
    pub mu: f64,
    pub mu1: f64,
    #[serde(rename = "R")]
    pub basin_radius: f64,
    #[serde(rename = "C_lip")]
    pub c_lip: f64,
    pub phi1: f64,
    pub phi2: f64,
}

impl ReferenceRow {
    pub fn values(&self) -> [f64; 7] {
        [
            self.esc,
            self.mu,
            self.mu1,
            self.basin_radius,
            self.c_lip,
            self.phi1,
            self.phi2,
        ]
    }
}

#[derive(Deserialize)]
struct ReferenceFile {
    link: Vec<ReferenceRow>,
}

/// Parses the embedded reference table.
pub fn table2_reference() -> Result<Vec<ReferenceRow>> {
    let file: ReferenceFile = toml::from_str(TABLE2_SOURCE).map_err(|e| Error::Format(e.to_string()))?;
    Ok(file.link)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Cell {
    pub link: LinkName,
    pub constant: String,
    pub reference: f64,
    pub computed: f64,
    pub rel_err: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Report {
    pub tolerance_rel: f64,
    pub cells: Vec<Table2Cell>,
    pub computed: Vec<ConstantsReport>,
}

impl Table2Report {
    pub fn passed(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Table2Cell> {
        self.cells.iter().filter(|c| !c.pass)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<18}{:<7}{:>12}{:>14}{:>11}  result\n",
            "link", "const", "reference", "computed", "rel_err"
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{:<18}{:<7}{:>12.3e}{:>14.5e}{:>11.2e}  {}\n",
                c.link.label(),
                c.constant,
                c.reference,
                c.computed,
                c.rel_err,
                if c.pass { "pass" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Recomputes the tabulated constants and compares each cell at relative
/// tolerance `tolerance_rel`.
pub fn verify_table2(tolerance_rel: f64) -> Result<Table2Report> {
    let rule = QuadratureRule::default();
    let mut cells = Vec::new();
    let mut computed = Vec::new();
    for reference in table2_reference()? {
        // σ and K₄ only enter C₄, which the table does not list
        let report = constants_report(&builtin(reference.name), 1.0, 3f64.powf(0.25), &rule)?;
        for ((name, got), want) in report.table_values().into_iter().zip(reference.values()) {
            let rel_err = (got - want).abs() / want.abs();
            cells.push(Table2Cell {
                link: reference.name,
                constant: name.to_string(),
                reference: want,
                computed: got,
                rel_err,
                pass: rel_err <= tolerance_rel,
            });
        }
        computed.push(report);
    }
    Ok(Table2Report {
        tolerance_rel,
        cells,
        computed,
    })
}

/// Absolute tolerance of the univariate Stein residual.
pub const STEIN_TOL: f64 = 1e-8;
/// Multivariate residuals pass below this many standard errors.
pub const STEIN_MC_SIGMAS: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteinReport {
    pub link: LinkName,
    /// `|E[f²(z)(z² − 1)] − E[(f²)''(z)]|` by quadrature.
    pub univariate_residual: f64,
    pub multivariate: MultivariateSteinRow,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultivariateSteinRow {
    pub d: usize,
    pub samples: usize,
    pub residual: f64,
    pub stderr: f64,
}

impl From<MultivariateStein> for MultivariateSteinRow {
    fn from(m: MultivariateStein) -> Self {
        Self {
            d: 0,
            samples: m.samples,
            residual: m.residual,
            stderr: m.stderr,
        }
    }
}

/// Stein identities for `g = f²` in one dimension and for
/// `g(x) = f(xᵀβ)²` in `d` dimensions.
pub fn stein_report(name: LinkName, d: usize, mc_samples: usize, seed: u64) -> Result<SteinReport> {
    let link = builtin(name);
    let rule = QuadratureRule::default();
    let sq_second = |z: f64| {
        let (f, f1, f2, _) = link.eval(z);
        2.0 * (f1 * f1 + f * f2)
    };
    let univariate_residual = stein_check_univariate(|z| (link.f)(z).powi(2), sq_second, &rule)?;
    let beta = random_unit(d, &mut stream_rng(seed, stream::TRUTH, 0));
    let multi = stein_check_multivariate(
        |x| (link.f)(dot(x, &beta)).powi(2),
        |x, h| {
            let c = sq_second(dot(x, &beta));
            for i in 0..d {
                for j in 0..d {
                    h[i * d + j] = c * beta[i] * beta[j];
                }
            }
        },
        d,
        mc_samples,
        seed,
    )?;
    let multivariate = MultivariateSteinRow { d, ..multi.into() };
    let pass = univariate_residual <= STEIN_TOL && multivariate.residual <= STEIN_MC_SIGMAS * multivariate.stderr;
    Ok(SteinReport {
        link: name,
        univariate_residual,
        multivariate,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianRow {
    /// `‖β − β*‖`.
    pub radius: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub stderr_min: f64,
    pub stderr_max: f64,
    /// `λ_min ≥ μ/2 − 3·se` and `λ_max ≤ μ/2 + μ₁ + 3·se`.
    pub in_band: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    pub link: LinkName,
    pub d: usize,
    pub mc_samples: usize,
    pub mu: f64,
    pub mu1: f64,
    pub basin_radius: f64,
    pub band: (f64, f64),
    pub rows: Vec<HessianRow>,
}

/// Independent batches behind each Hessian standard error.
pub const HESSIAN_BATCHES: usize = 20;

/// Monte-Carlo population Hessian `E[(f'(xᵀβ)² + (f(xᵀβ) − y) f''(xᵀβ)) xxᵀ]`
/// at one random `β` per radius.
///
/// Responses are taken noiseless: the noise is independent and mean zero, so
/// it leaves the expectation unchanged and only adds variance.
pub fn hessian_spectrum_check(
    name: LinkName,
    radii: &[f64],
    d: usize,
    mc_samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<HessianReport> {
    if !(2..=10).contains(&d) {
        return Err(invalid(format!("Hessian check needs 2 <= d <= 10, got {d}")));
    }
    if mc_samples < 100_000 {
        return Err(invalid(format!(
            "Hessian check needs at least 1e5 samples, got {mc_samples}"
        )));
    }
    let link = builtin(name);
    let report = constants_report(&link, 1.0, 3f64.powf(0.25), &QuadratureRule::default())?;
    let (lower, upper) = (report.mu / 2.0, report.mu / 2.0 + report.mu1);
    let mut dir_rng = stream_rng(seed, stream::DIRECTION, 0);
    let beta_star = random_unit(d, &mut dir_rng);
    let mut rows = Vec::with_capacity(radii.len());
    for (k, &r) in radii.iter().enumerate() {
        let u = random_unit(d, &mut dir_rng);
        let beta: Vec<f64> = beta_star.iter().zip(&u).map(|(s, u)| s + r * u).collect();
        let per_batch = mc_samples / HESSIAN_BATCHES;
        let batches = par::map_indexed(exec, HESSIAN_BATCHES, |b| {
            let block = (k * HESSIAN_BATCHES + b) as u64;
            hessian_batch(&link, &beta, &beta_star, per_batch, seed, block)
        });
        let mut mean = vec![0.0; d * d];
        for h in &batches {
            mean.iter_mut()
                .zip(h)
                .for_each(|(m, v)| *m += v / HESSIAN_BATCHES as f64);
        }
        let eig = nalgebra::SymmetricEigen::new(SymMatrix::from_full(d, mean)?.to_nalgebra());
        let (imin, imax) = extreme_indices(eig.eigenvalues.as_slice());
        let spread = |i: usize| {
            let v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let q: Vec<f64> = batches.iter().map(|h| quad(h, &v, d)).collect();
            std_error(&q)
        };
        let (lambda_min, lambda_max) = (eig.eigenvalues[imin], eig.eigenvalues[imax]);
        let (stderr_min, stderr_max) = (spread(imin), spread(imax));
        rows.push(HessianRow {
            radius: r,
            lambda_min,
            lambda_max,
            stderr_min,
            stderr_max,
            in_band: lambda_min >= lower - 3.0 * stderr_min && lambda_max <= upper + 3.0 * stderr_max,
        });
    }
    Ok(HessianReport {
        link: name,
        d,
        mc_samples,
        mu: report.mu,
        mu1: report.mu1,
        basin_radius: report.basin_radius,
        band: (lower, upper),
        rows,
    })
}

fn hessian_batch(
    link: &LinkFunction,
    beta: &[f64],
    beta_star: &[f64],
    samples: usize,
    seed: u64,
    block: u64,
) -> Vec<f64> {
    let d = beta.len();
    let mut rng = stream_rng(seed, stream::MONTE_CARLO, block);
    let mut acc = vec![0.0; d * d];
    let mut x = vec![0.0; d];
    for _ in 0..samples {
        x.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        let (f, f1, f2, _) = link.eval(dot(&x, beta));
        let y = (link.f)(dot(&x, beta_star));
        let w = f1 * f1 + (f - y) * f2;
        for i in 0..d {
            let wi = w * x[i];
            for j in i..d {
                acc[i * d + j] += wi * x[j];
            }
        }
    }
    let n = samples as f64;
    for i in 0..d {
        for j in i..d {
            let v = acc[i * d + j] / n;
            acc[i * d + j] = v;
            acc[j * d + i] = v;
        }
    }
    acc
}

fn quad(h: &[f64], v: &[f64], d: usize) -> f64 {
    (0..d).map(|i| v[i] * dot(&h[i * d..(i + 1) * d], v)).sum()
}

fn extreme_indices(values: &[f64]) -> (usize, usize) {
    let mut imin = 0;
    let mut imax = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[imin] {
            imin = i;
        }
        if *v > values[imax] {
            imax = i;
        }
    }
    (imin, imax)
}

/// Standard error of the mean of `values`.
pub fn std_error(values: &[f64]) -> f64 {
    sample_std(values) / (values.len() as f64).sqrt()
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

fn default_trials() -> usize {
    50
}

/// A family of datasets swept over contamination levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub base: ScenarioConfig,
    /// Contamination levels, ascending. Empty means just `base.eps`.
    #[serde(default)]
    pub eps_grid: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Gradient steps; defaults to the formula in [`crate::recover::default_steps`].
    #[serde(default, rename = "P")]
    pub steps: Option<usize>,
    #[serde(default)]
    pub eta: Option<f64>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(invalid("scenario needs trials >= 1"));
        }
        if self.eps_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("eps grid must be strictly ascending"));
        }
        if let Some(e) = self.grid().into_iter().find(|e| !(0.0..0.5).contains(e)) {
            return Err(Error::EpsOutOfRange(e));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        if self.eps_grid.is_empty() {
            vec![self.base.eps]
        } else {
            self.eps_grid.clone()
        }
    }

    /// Data seed of trial `t`; shared by every contamination level.
    pub fn trial_seed(&self, t: usize) -> u64 {
        self.base.seed.wrapping_add(t as u64)
    }

    pub fn recovery_config(&self, eps: f64, exec: Exec) -> Result<RecoveryConfig> {
        let noise = self.base.noise_model()?;
        let mut cfg =
            RecoveryConfig::new(&builtin(self.base.link), &noise, eps, &QuadratureRule::default())?.with_exec(exec);
        if let Some(p) = self.steps {
            cfg.steps = p;
        }
        cfg.eta = self.eta;
        Ok(cfg)
    }
}

/// Aggregate of `trials` paired robust/baseline runs at one contamination level.
///
/// CSV column order: `eps, trials, failures, mean_dist_final, std_dist_final,
/// mean_dist_init, baseline_mean_dist_final, baseline_failures, wall_time_s`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub trials: usize,
    /// Robust runs that returned an error; they count as distance `√2`.
    pub failures: usize,
    pub mean_dist_final: f64,
    pub std_dist_final: f64,
    pub mean_dist_init: f64,
    pub baseline_mean_dist_final: f64,
    /// Baseline runs that diverged or errored; they count as distance `√2`.
    pub baseline_failures: usize,
    pub wall_time_s: f64,
}

/// Equality ignores the wall time.
impl PartialEq for SweepRow {
    fn eq(&self, other: &Self) -> bool {
        self.eps == other.eps
            && self.trials == other.trials
            && self.failures == other.failures
            && self.mean_dist_final == other.mean_dist_final
            && self.std_dist_final == other.std_dist_final
            && self.mean_dist_init == other.mean_dist_init
            && self.baseline_mean_dist_final == other.baseline_mean_dist_final
            && self.baseline_failures == other.baseline_failures
    }
}

/// Per-trial outcome of a paired run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub eps: f64,
    pub trial: usize,
    pub seed: u64,
    pub dist_init: Option<f64>,
    pub dist_final: Option<f64>,
    pub baseline_dist_final: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln(mean dist_final)` against `ln ε` over `ε ≥ 0.01`.
    pub slope: Option<f64>,
    pub trials: Vec<TrialOutcome>,
}

/// Smallest ε used in the slope fit; below it the statistical floor dominates.
pub const SLOPE_MIN_EPS: f64 = 0.01;

const FAILED_DIST: f64 = std::f64::consts::SQRT_2;

/// Runs the paired robust/baseline trials for every contamination level.
pub fn sweep_epsilon(scenario: &Scenario, exec: Exec) -> Result<SweepReport> {
    scenario.validate()?;
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for eps in scenario.grid() {
        let start = Instant::now();
        let cfg = scenario.recovery_config(eps, exec)?;
        let trials = par::map_indexed(exec, scenario.trials, |t| run_trial(scenario, &cfg, eps, t));
        let wall = start.elapsed().as_secs_f64();
        let finals: Vec<f64> = trials.iter().map(|o| o.dist_final.unwrap_or(FAILED_DIST)).collect();
        let inits: Vec<f64> = trials.iter().map(|o| o.dist_init.unwrap_or(FAILED_DIST)).collect();
        let base: Vec<f64> = trials
            .iter()
            .map(|o| o.baseline_dist_final.unwrap_or(FAILED_DIST))
            .collect();
        let k = trials.len() as f64;
        rows.push(SweepRow {
            eps,
            trials: trials.len(),
            failures: trials.iter().filter(|o| o.dist_final.is_none()).count(),
            mean_dist_final: finals.iter().sum::<f64>() / k,
            std_dist_final: sample_std(&finals),
            mean_dist_init: inits.iter().sum::<f64>() / k,
            baseline_mean_dist_final: base.iter().sum::<f64>() / k,
            baseline_failures: trials.iter().filter(|o| o.baseline_dist_final.is_none()).count(),
            wall_time_s: wall,
        });
        outcomes.extend(trials);
    }
    let slope = fit_slope(&rows);
    Ok(SweepReport {
        rows,
        slope,
        trials: outcomes,
    })
}

fn run_trial(scenario: &Scenario, cfg: &RecoveryConfig, eps: f64, t: usize) -> TrialOutcome {
    let seed = scenario.trial_seed(t);
    let mut out = TrialOutcome {
        eps,
        trial: t,
        seed,
        dist_init: None,
        dist_final: None,
        baseline_dist_final: None,
        error: None,
    };
    let ds = match scenario.base.simulate_at(eps, seed, cfg.filter.exec) {
        Ok(ds) => ds,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    match recover(&ds, cfg) {
        Ok(r) => {
            out.dist_init = r.dist_init;
            out.dist_final = r.dist_final;
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out.baseline_dist_final = baseline_erm(&ds, cfg)
        .ok()
        .and_then(|r| r.dist_final)
        .filter(|d| d.is_finite());
    out
}

/// Log-log least-squares slope of mean final error against ε, over ε ≥ 0.01.
pub fn fit_slope(rows: &[SweepRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.eps >= SLOPE_MIN_EPS && r.mean_dist_final > 0.0)
        .map(|r| (r.eps.ln(), r.mean_dist_final.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    /// `.json` means JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => OutputFormat::Json,
            _ => OutputFormat::Csv,
        }
    }
}

const SWEEP_COLUMNS: [&str; 9] = [
    "eps",
    "trials",
    "failures",
    "mean_dist_final",
    "std_dist_final",
    "mean_dist_init",
    "baseline_mean_dist_final",
    "baseline_failures",
    "wall_time_s",
];

pub fn write_rows_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(SWEEP_COLUMNS) {
        return Err(Error::Format("unexpected sweep CSV header".into()));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_rows<W: Write>(rows: &[SweepRow], format: OutputFormat, mut out: W) -> Result<()> {
    match format {
        OutputFormat::Csv => write_rows_csv(rows, out),
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
            Ok(())
        }
    }
}

pub fn read_rows<R: Read>(format: OutputFormat, input: R) -> Result<Vec<SweepRow>> {
    match format {
        OutputFormat::Csv => read_rows_csv(input),
        OutputFormat::Json => Ok(serde_json::from_reader(input)?),
    }
}

/// Writes `rows` to `path` in `format`.
pub fn emit(rows: &[SweepRow], format: OutputFormat, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_rows(rows, format, file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AdversaryKind, AdversaryModel, NoiseKind};

    fn row(eps: f64, dist: f64) -> SweepRow {
        SweepRow {
            eps,
            trials: 3,
            failures: 0,
            mean_dist_final: dist,
            std_dist_final: 0.1 * dist,
            mean_dist_init: 0.03,
            baseline_mean_dist_final: 0.7,
            baseline_failures: 1,
            wall_time_s: 0.25,
        }
    }

    #[test]
    fn reference_file_parses() {
        let rows = table2_reference().unwrap();
        assert_eq!(rows.iter().map(|r| r.name).collect::<Vec<_>>(), TABLE2_LINKS.to_vec());
        let sq = rows.iter().find(|r| r.name == LinkName::Square).unwrap();
        assert_eq!(sq.values(), [6.00, 4.00, 12.0, 1.64e-3, 2.89e2, 6.08e2, 6.95]);
    }

    #[test]
    fn table2_at_tight_tolerance_fails() {
        let report = verify_table2(1e-12).unwrap();
        assert_eq!(report.cells.len(), 42);
        assert!(!report.passed());
    }

    #[test]
    fn slope_of_power_law() {
        let rows: Vec<SweepRow> = [0.005, 0.01, 0.02, 0.05]
            .iter()
            .map(|&e| row(e, 3.0 * f64::sqrt(e)))
            .collect();
        assert!((fit_slope(&rows).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(fit_slope(&rows[..2]), None);
    }

    #[test]
    fn csv_and_json_round_trip() {
        let rows = vec![row(0.01, 0.02), row(0.05, 1.0 / 3.0)];
        for format in [OutputFormat::Csv, OutputFormat::Json] {
            let mut buf = Vec::new();
            write_rows(&rows, format, &mut buf).unwrap();
            let back = read_rows(format, buf.as_slice()).unwrap();
            assert_eq!(back, rows);
            assert_eq!(back[1].wall_time_s, 0.25);
        }
        let mut buf = Vec::new();
        write_rows_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{}\n", SWEEP_COLUMNS.join(","))
        );
    }

    #[test]
    fn equality_ignores_wall_time() {
        let mut a = row(0.01, 0.1);
        let b = a.clone();
        a.wall_time_s = 99.0;
        assert_eq!(a, b);
    }

    #[test]
    fn scenario_validation() {
        let json = r#"{"n": 1000, "d": 3, "link": "gelu", "sigma": 0.5, "eps_grid": [0.02, 0.01]}"#;
        assert!(Scenario::from_json(json).is_err());
        let json = r#"{"n": 1000, "d": 3, "link": "gelu", "sigma": 0.5, "eps_grid": [0.1, 0.5]}"#;
        assert!(matches!(Scenario::from_json(json), Err(Error::EpsOutOfRange(_))));
        let json = r#"{"n": 1000, "d": 3, "link": "gelu", "sigma": 0.5, "trials": 0}"#;
        assert!(Scenario::from_json(json).is_err());
        let json = r#"{"n": 1000, "d": 3, "link": "gelu", "sigma": 0.5, "noise": {"kind": "student_t", "nu": 6.0},
                       "adversary": {"kind": "point_mass"}, "P": 3}"#;
        let s = Scenario::from_json(json).unwrap();
        assert_eq!(s.trials, 50);
        assert_eq!(s.steps, Some(3));
        assert_eq!(s.base.adversary.magnitude, 100.0);
        assert_eq!(s.grid(), vec![0.0]);
    }

    #[test]
    fn sweep_is_deterministic() {
        let scenario = Scenario {
            base: ScenarioConfig {
                n: 8_000,
                d: 3,
                link: LinkName::Gelu,
                sigma: 0.5,
                noise: NoiseKind::Gaussian,
                eps: 0.0,
                adversary: AdversaryModel::new(AdversaryKind::PointMass, 100.0, 1),
                seed: 17,
            },
            eps_grid: vec![0.0, 0.05],
            trials: 2,
            steps: Some(3),
            eta: None,
        };
        let a = sweep_epsilon(&scenario, Exec::Parallel).unwrap();
        let b = sweep_epsilon(&scenario, Exec::Sequential).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.rows.len(), 2);
        assert!(a.rows.iter().all(|r| r.trials == 2 && r.std_dist_final >= 0.0));
        assert!(a.rows[1].baseline_mean_dist_final > a.rows[1].mean_dist_final);
    }

    #[test]
    fn hessian_at_truth_has_two_eigenvalues() {
        let rep = hessian_spectrum_check(LinkName::Square, &[0.0], 3, 200_000, 5, Exec::default()).unwrap();
        let row = &rep.rows[0];
        assert!(
            (row.lambda_min - rep.mu).abs() <= 4.0 * row.stderr_min + 1e-3,
            "{row:?}"
        );
        assert!(
            (row.lambda_max - rep.mu1).abs() <= 4.0 * row.stderr_max + 1e-3,
            "{row:?}"
        );
        assert!(hessian_spectrum_check(LinkName::Square, &[0.0], 3, 10, 5, Exec::default()).is_err());
        assert!(hessian_spectrum_check(LinkName::Square, &[0.0], 11, 200_000, 5, Exec::default()).is_err());
    }

    #[test]
    fn stein_for_square_is_exact_in_one_dimension() {
        let rep = stein_report(LinkName::Square, 3, 50_000, 1).unwrap();
        assert!(rep.univariate_residual <= 1e-8);
        assert!(rep.pass, "{rep:?}");
    }
}
