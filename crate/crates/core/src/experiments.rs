//! Monte Carlo harness: grid sweeps over loading, leakage and SNR, with
//! per-draw results, summaries and CSV persistence.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotic::{self, asymptotic_beamformers};
use crate::baselines::{baseline_max_min, td_finite_rate, td_users, BaselineId, BaselineSettings};
use crate::channel::{sample_channels, SystemConfig};
use crate::downlink::{max_min_sinr, MaxMinSettings, PrecodingSolution};
use crate::dual_uplink::SchemeId;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 12] = [
    "scheme",
    "beta",
    "epsilon",
    "snr_db",
    "draw_id",
    "gamma",
    "rate_nats",
    "rate_bits",
    "per_bs_power_1",
    "per_bs_power_2",
    "converged",
    "wall_time_ms",
];

pub const CURVE_HEADER: [&str; 7] = ["scheme", "beta", "epsilon", "snr_db", "gamma_star", "rate", "feasible"];

pub const RATE_DEFINITION: &str = "beta * ln(1 + min_k SINR_k); TD_SCP: (K_TD / 2N) * ln(1 + min_k SINR_k)";

/// An optimised scheme or a reference baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Scheme(SchemeId),
    Baseline(BaselineId),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Scheme(s) => s.fmt(f),
            Method::Baseline(b) => b.fmt(f),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<SchemeId>()
            .map(Method::Scheme)
            .or_else(|_| s.parse::<BaselineId>().map(Method::Baseline))
            .map_err(|_| Error::Argument(format!("unknown scheme or baseline {s:?}")))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExperimentMode {
    /// Finite-system max-min optimisation per draw.
    Optimized,
    /// Limiting beamformers applied to finite draws at `γ = γ*`.
    AsymptoticBf,
    /// Closed forms only; draws are ignored.
    LsaOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schemes: Vec<Method>,
    pub beta_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    pub snr_db_grid: Vec<f64>,
    pub n_draws: usize,
    /// Supplies N, σ² and the seed; K, ε and P are set per grid point.
    pub base: SystemConfig,
    pub mode: ExperimentMode,
    #[serde(default)]
    pub output_path: Option<String>,
    #[serde(default)]
    pub settings: MaxMinSettings,
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentSpec {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: ExperimentSpec =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schemes.is_empty() {
            return bad("schemes must not be empty".into());
        }
        for (name, grid) in [
            ("beta_grid", &self.beta_grid),
            ("epsilon_grid", &self.epsilon_grid),
            ("snr_db_grid", &self.snr_db_grid),
        ] {
            if grid.is_empty() {
                return bad(format!("{name} must not be empty"));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return bad(format!("{name} contains a non-finite value"));
            }
        }
        if self.beta_grid.iter().any(|b| *b <= 0.0) {
            return bad("beta_grid values must be positive".into());
        }
        if self.epsilon_grid.iter().any(|e| *e < 0.0) {
            return bad("epsilon_grid values must be nonnegative".into());
        }
        if self.mode != ExperimentMode::LsaOnly && self.n_draws == 0 {
            return bad("n_draws must be at least 1".into());
        }
        for m in &self.schemes {
            if let Method::Baseline(b) = m {
                let allowed = match self.mode {
                    ExperimentMode::Optimized => true,
                    ExperimentMode::LsaOnly => *b == BaselineId::TdScp,
                    ExperimentMode::AsymptoticBf => false,
                };
                if !allowed {
                    return bad(format!("baseline {b} is not available in {:?} mode", self.mode));
                }
            }
        }
        Ok(())
    }

    fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &beta in &self.beta_grid {
            for &epsilon in &self.epsilon_grid {
                for &snr_db in &self.snr_db_grid {
                    out.push(GridPoint { beta, epsilon, snr_db });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct GridPoint {
    beta: f64,
    epsilon: f64,
    snr_db: f64,
}

impl GridPoint {
    fn snr(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    fn users(&self, n: usize) -> usize {
        (self.beta * n as f64).round().max(1.0) as usize
    }

    fn config(&self, base: &SystemConfig) -> Result<SystemConfig> {
        base.with_users(self.users(base.n_antennas()))?
            .with_epsilon(self.epsilon)?
            .with_power(base.sigma2() * self.snr())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: Method,
    pub beta: f64,
    pub epsilon: f64,
    pub snr_db: f64,
    pub draw_id: u64,
    pub gamma: Option<f64>,
    pub rate_nats: Option<f64>,
    pub per_bs_power: Option<[f64; 2]>,
    pub converged: bool,
    pub wall_time_ms: Option<f64>,
}

impl ResultRow {
    pub fn rate_bits(&self) -> Option<f64> {
        self.rate_nats.map(|r| r / std::f64::consts::LN_2)
    }

    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.scheme.to_string(),
            self.beta.to_string(),
            self.epsilon.to_string(),
            self.snr_db.to_string(),
            self.draw_id.to_string(),
            opt(self.gamma),
            opt(self.rate_nats),
            opt(self.rate_bits()),
            opt(self.per_bs_power.map(|p| p[0])),
            opt(self.per_bs_power.map(|p| p[1])),
            self.converged.to_string(),
            opt(self.wall_time_ms),
        ]
    }
}

fn worker_count() -> usize {
    std::env::var("CELLBEAM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs every (grid point, scheme, draw) combination. Rows are ordered by
/// grid point (β, then ε, then SNR), then scheme in spec order, then draw.
/// Failures are recorded as rows with `converged = false`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let points = spec.points();
    if spec.mode == ExperimentMode::LsaOnly {
        let mut rows = Vec::new();
        for p in &points {
            for &m in &spec.schemes {
                rows.push(lsa_row(m, p, spec.base.sigma2()));
            }
        }
        return Ok(rows);
    }

    let tasks: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| (0..spec.n_draws as u64).map(move |d| (p, d)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let per_task: Vec<Vec<ResultRow>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(p, d)| spec.schemes.iter().map(|&m| run_one(spec, m, &points[p], d)).collect())
            .collect()
    });

    let draws = spec.n_draws;
    let mut rows = Vec::with_capacity(per_task.len() * spec.schemes.len());
    for p in 0..points.len() {
        for s in 0..spec.schemes.len() {
            for d in 0..draws {
                rows.push(per_task[p * draws + d][s].clone());
            }
        }
    }
    Ok(rows)
}

/// Runs every scheme and every baseline available in the spec's mode,
/// keeping the spec's own methods first.
pub fn run_comparison(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let mut all = spec.clone();
    let extra = SchemeId::ALL
        .iter()
        .map(|&s| Method::Scheme(s))
        .chain(BaselineId::ALL.iter().map(|&b| Method::Baseline(b)));
    for m in extra {
        if !all.schemes.contains(&m) {
            all.schemes.push(m);
        }
    }
    all.schemes.retain(|m| match (spec.mode, m) {
        (_, Method::Scheme(_)) | (ExperimentMode::Optimized, _) => true,
        (ExperimentMode::LsaOnly, Method::Baseline(b)) => *b == BaselineId::TdScp,
        _ => false,
    });
    run_experiment(&all)
}

fn failed_row(m: Method, p: &GridPoint, beta: f64, draw: u64) -> ResultRow {
    ResultRow {
        scheme: m,
        beta,
        epsilon: p.epsilon,
        snr_db: p.snr_db,
        draw_id: draw,
        gamma: None,
        rate_nats: None,
        per_bs_power: None,
        converged: false,
        wall_time_ms: None,
    }
}

fn run_one(spec: &ExperimentSpec, m: Method, p: &GridPoint, draw: u64) -> ResultRow {
    let start = Instant::now();
    let n = spec.base.n_antennas();
    let beta = p.users(n) as f64 / n as f64;
    let outcome = evaluate(spec, m, p, draw);
    let mut row = match outcome {
        Ok((gamma, rate, solution)) => ResultRow {
            scheme: m,
            beta,
            epsilon: p.epsilon,
            snr_db: p.snr_db,
            draw_id: draw,
            gamma: Some(gamma),
            rate_nats: Some(rate),
            per_bs_power: Some(solution.map(|s| s.per_bs_power).unwrap_or([0.0, 0.0])),
            converged: true,
            wall_time_ms: None,
        },
        Err(_) => failed_row(m, p, beta, draw),
    };
    if spec.record_timing {
        row.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    row
}

/// (reported γ, rate in nats, solution) for one draw.
fn evaluate(spec: &ExperimentSpec, m: Method, p: &GridPoint, draw: u64) -> Result<(f64, f64, Option<PrecodingSolution>)> {
    let config = p.config(&spec.base)?;
    let n = config.n_antennas();
    let beta = config.beta();
    match (spec.mode, m) {
        (ExperimentMode::Optimized, Method::Scheme(s)) => {
            let ch = sample_channels(&config, draw);
            let r = max_min_sinr(s, &ch, &config, &spec.settings)?;
            let min = r.solution.as_ref().map(|s| s.min_sinr()).unwrap_or(0.0);
            Ok((r.gamma_star, beta * min.ln_1p(), r.solution))
        }
        (ExperimentMode::Optimized, Method::Baseline(BaselineId::TdScp)) => {
            let k_td = td_users(p.beta, n);
            let slot_config = config.with_users(k_td)?;
            let ch = sample_channels(&slot_config, draw);
            let settings = BaselineSettings {
                max_min: spec.settings,
                ..Default::default()
            };
            let r = baseline_max_min(BaselineId::TdScp, &ch, &slot_config, &settings)?;
            let min = r.solution.as_ref().map(|s| s.min_sinr()).unwrap_or(0.0);
            Ok((r.gamma_star, td_finite_rate(k_td, n, min), r.solution))
        }
        (ExperimentMode::Optimized, Method::Baseline(b)) => {
            let ch = sample_channels(&config, draw);
            let settings = BaselineSettings {
                max_min: spec.settings,
                ..Default::default()
            };
            let r = baseline_max_min(b, &ch, &config, &settings)?;
            let min = r.solution.as_ref().map(|s| s.min_sinr()).unwrap_or(0.0);
            Ok((r.gamma_star, beta * min.ln_1p(), r.solution))
        }
        (ExperimentMode::AsymptoticBf, Method::Scheme(s)) => {
            let ch = sample_channels(&config, draw);
            let g = asymptotic::gamma_star(s, beta, p.epsilon, p.snr())?;
            let sol = asymptotic_beamformers(s, &ch, g, &config)?;
            let min = sol.min_sinr();
            Ok((min, beta * min.ln_1p(), Some(sol)))
        }
        (mode, m) => Err(Error::Argument(format!("{m} is not available in {mode:?} mode"))),
    }
}

fn lsa_values(m: Method, beta: f64, p: &GridPoint) -> Result<(f64, f64)> {
    match m {
        Method::Scheme(s) => {
            let g = asymptotic::gamma_star(s, beta, p.epsilon, p.snr())?;
            Ok((g, beta * g.ln_1p()))
        }
        Method::Baseline(BaselineId::TdScp) => {
            let g = asymptotic::td_gamma_star(beta, p.snr())?;
            Ok((g, beta * g.ln_1p()))
        }
        Method::Baseline(b) => Err(Error::Argument(format!("{b} has no large-system value"))),
    }
}

fn lsa_row(m: Method, p: &GridPoint, sigma2: f64) -> ResultRow {
    let power = sigma2 * p.snr();
    match lsa_values(m, p.beta, p) {
        Ok((g, r)) => {
            let per_bs = if m == Method::Baseline(BaselineId::TdScp) { 2.0 * power } else { power };
            ResultRow {
                scheme: m,
                beta: p.beta,
                epsilon: p.epsilon,
                snr_db: p.snr_db,
                draw_id: 0,
                gamma: Some(g),
                rate_nats: Some(r),
                per_bs_power: Some([per_bs, per_bs]),
                converged: true,
                wall_time_ms: None,
            }
        }
        Err(_) => failed_row(m, p, p.beta, 0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: Method,
    pub beta: f64,
    pub epsilon: f64,
    pub snr_db: f64,
    pub n_rows: usize,
    pub n_failed: usize,
    pub mean_gamma: Option<f64>,
    pub mean_rate_nats: Option<f64>,
    /// `None` with fewer than two successful draws.
    pub stderr_rate_nats: Option<f64>,
    /// More than half of the draws failed.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rate_definition: String,
    pub points: Vec<SummaryRow>,
}

/// Means and standard errors per (scheme, β, ε, SNR), in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Result<Summary> {
    if rows.is_empty() {
        return Err(Error::Argument("cannot summarise an empty table".into()));
    }
    type Key = (Method, u64, u64, u64);
    let mut order: Vec<Key> = Vec::new();
    let mut groups: BTreeMap<Key, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.scheme, r.beta.to_bits(), r.epsilon.to_bits(), r.snr_db.to_bits());
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    let points = order
        .iter()
        .map(|key| {
            let members = &groups[key];
            let ok: Vec<&&ResultRow> = members.iter().filter(|r| r.converged).collect();
            let rates: Vec<f64> = ok.iter().filter_map(|r| r.rate_nats).collect();
            let gammas: Vec<f64> = ok.iter().filter_map(|r| r.gamma).collect();
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v[0] + v.iter().map(|x| x - v[0]).sum::<f64>() / v.len() as f64);
            let mean_rate = mean(&rates);
            let stderr = match (mean_rate, rates.len()) {
                (Some(m), n) if n >= 2 => {
                    let var = rates.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (n - 1) as f64;
                    Some((var / n as f64).sqrt())
                }
                _ => None,
            };
            let n_failed = members.len() - ok.len();
            ResultRow::summary_head(members[0], members.len(), n_failed, mean(&gammas), mean_rate, stderr)
        })
        .collect();
    Ok(Summary {
        rate_definition: RATE_DEFINITION.to_string(),
        points,
    })
}

impl ResultRow {
    fn summary_head(
        first: &ResultRow,
        n_rows: usize,
        n_failed: usize,
        mean_gamma: Option<f64>,
        mean_rate: Option<f64>,
        stderr: Option<f64>,
    ) -> SummaryRow {
        SummaryRow {
            scheme: first.scheme,
            beta: first.beta,
            epsilon: first.epsilon,
            snr_db: first.snr_db,
            n_rows,
            n_failed,
            mean_gamma,
            mean_rate_nats: mean_rate,
            stderr_rate_nats: stderr,
            degenerate: 2 * n_failed > n_rows,
        }
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_path(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?)
}

/// Result rows with the matching large-system γ* and rate appended.
pub fn write_compare_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    header.extend(["lsa_gamma", "lsa_rate_nats"]);
    w.write_record(&header)?;
    for r in rows {
        let point = GridPoint {
            beta: r.beta,
            epsilon: r.epsilon,
            snr_db: r.snr_db,
        };
        let lsa = lsa_values(r.scheme, r.beta, &point).ok();
        let mut rec = r.record();
        rec.push(lsa.map(|l| l.0.to_string()).unwrap_or_default());
        rec.push(lsa.map(|l| l.1.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub scheme: Method,
    pub beta: f64,
    pub epsilon: f64,
    pub snr_db: f64,
    pub gamma_star: f64,
    pub rate: f64,
    pub feasible: bool,
}

/// Large-system γ* and rate along a β grid. `TD_SCP` uses its own limit.
pub fn asymptotic_curve(method: Method, betas: &[f64], epsilon: f64, snr_db: f64) -> Result<Vec<CurveRow>> {
    betas
        .iter()
        .map(|&beta| {
            let point = GridPoint { beta, epsilon, snr_db };
            let (g, r) = lsa_values(method, beta, &point)?;
            let feasible = match method {
                Method::Scheme(s) => asymptotic::is_feasible_unlimited(s, g, beta, epsilon),
                _ => 2.0 * beta * g / (1.0 + g) < 1.0,
            };
            Ok(CurveRow {
                scheme: method,
                beta,
                epsilon,
                snr_db,
                gamma_star: g,
                rate: r,
                feasible,
            })
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER)?;
    for r in rows {
        w.write_record([
            r.scheme.to_string(),
            r.beta.to_string(),
            r.epsilon.to_string(),
            r.snr_db.to_string(),
            r.gamma_star.to_string(),
            r.rate.to_string(),
            r.feasible.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mode: ExperimentMode) -> ExperimentSpec {
        ExperimentSpec {
            schemes: vec![
                Method::Scheme(SchemeId::Scp),
                Method::Scheme(SchemeId::Cbf),
                Method::Scheme(SchemeId::Mcp),
            ],
            beta_grid: vec![0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
            epsilon_grid: vec![0.5],
            snr_db_grid: vec![10.0],
            n_draws: 2,
            base: SystemConfig::new(4, 3, 0.5, 1.0, 10.0, 5).unwrap(),
            mode,
            output_path: None,
            settings: MaxMinSettings::default(),
            record_timing: false,
        }
    }

    #[test]
    fn lsa_ordering_per_beta() {
        let rows = run_experiment(&spec(ExperimentMode::LsaOnly)).unwrap();
        assert_eq!(rows.len(), 18);
        for chunk in rows.chunks(3) {
            let r: Vec<f64> = chunk.iter().map(|r| r.rate_nats.unwrap()).collect();
            assert!(r[0] < r[1] && r[1] < r[2], "{r:?}");
        }
    }

    #[test]
    fn empty_grid_is_rejected() {
        let mut s = spec(ExperimentMode::Optimized);
        s.epsilon_grid.clear();
        assert!(matches!(run_experiment(&s), Err(Error::Config(_))));
        let mut s = spec(ExperimentMode::AsymptoticBf);
        s.schemes.push(Method::Baseline(BaselineId::Gzf));
        assert!(s.validate().is_err());
    }

    #[test]
    fn summary_single_draw_and_constant_column() {
        let mut s = spec(ExperimentMode::LsaOnly);
        s.beta_grid = vec![0.75];
        let rows = run_experiment(&s).unwrap();
        let sum = summarize(&rows).unwrap();
        assert!(sum.points.iter().all(|p| p.stderr_rate_nats.is_none()));

        let mut dup = Vec::new();
        for d in 0..500 {
            let mut r = rows[0].clone();
            r.draw_id = d;
            dup.push(r);
        }
        let sum = summarize(&dup).unwrap();
        assert_eq!(sum.points.len(), 1);
        assert_eq!(sum.points[0].mean_rate_nats, rows[0].rate_nats);
        assert_eq!(sum.points[0].stderr_rate_nats, Some(0.0));
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn degenerate_flag() {
        let rows = run_experiment(&spec(ExperimentMode::LsaOnly)).unwrap();
        let mut group: Vec<ResultRow> = (0..5)
            .map(|d| {
                let mut r = rows[0].clone();
                r.draw_id = d;
                r
            })
            .collect();
        for r in group.iter_mut().take(3) {
            r.converged = false;
        }
        let sum = summarize(&group).unwrap();
        assert!(sum.points[0].degenerate);
        assert_eq!(sum.points[0].n_failed, 3);
    }

    #[test]
    fn optimized_rows_are_ordered_and_reproducible() {
        let mut s = spec(ExperimentMode::Optimized);
        s.beta_grid = vec![0.5, 0.75];
        s.schemes.push(Method::Baseline(BaselineId::TdScp));
        let a = run_experiment(&s).unwrap();
        let b = run_experiment(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2 * 4 * 2);
        assert_eq!(a[0].scheme, Method::Scheme(SchemeId::Scp));
        assert_eq!(a[1].draw_id, 1);
        assert!(a.iter().all(|r| r.converged));
        let mut buf = Vec::new();
        write_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "scheme,beta,epsilon,snr_db,draw_id,gamma,rate_nats,rate_bits,per_bs_power_1,per_bs_power_2,converged,wall_time_ms\n"
        ));
    }

    #[test]
    fn failures_do_not_abort_the_sweep() {
        // GZF needs 2K ≤ N, which fails at β = 1 and holds at β = 0.25.
        let mut s = spec(ExperimentMode::Optimized);
        s.schemes = vec![Method::Baseline(BaselineId::Gzf)];
        s.beta_grid = vec![0.25, 1.0];
        s.n_draws = 1;
        let rows = run_experiment(&s).unwrap();
        assert!(rows[0].converged);
        assert!(!rows[1].converged);
        assert!(rows[1].gamma.is_none());
    }

    #[test]
    fn curve_and_method_parsing() {
        let c = asymptotic_curve(Method::Scheme(SchemeId::Cbf), &[0.5, 1.0], 1.0, 10.0).unwrap();
        let t = asymptotic_curve(Method::Baseline(BaselineId::TdScp), &[0.5, 1.0], 1.0, 10.0).unwrap();
        for (a, b) in c.iter().zip(&t) {
            assert!((a.rate - b.rate).abs() < 1e-12);
        }
        assert_eq!("mcp_zf".parse::<Method>().unwrap(), Method::Baseline(BaselineId::McpZf));
        assert_eq!(serde_json::to_string(&Method::Scheme(SchemeId::Cbf)).unwrap(), "\"CBF\"");
    }

    #[test]
    fn spec_json_round_trip() {
        let s = spec(ExperimentMode::AsymptoticBf);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"ASYMPTOTIC_BF\""));
        let back: ExperimentSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
