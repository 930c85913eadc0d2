//! Downlink power recovery, achieved-SINR evaluation and the max-min SINR
//! search under per-BS power budgets.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::asymptotic;
use crate::channel::{ChannelSet, SystemConfig, NUM_CELLS};
use crate::dual_uplink::{mu_search, scp_network_capped, DualSolution, SchemeId, SolverSettings, UplinkModel};
use crate::error::{Error, Result};
use crate::power::{DownlinkGains, Layout};

/// Beamformers and powers for all `2K` users, ordered `cell * K + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecodingSolution {
    pub scheme: SchemeId,
    /// Unit-norm directions: length `N` (SCP, CBf) or `2N` (MCP).
    #[serde(with = "complex_vectors")]
    pub directions: Vec<DVector<Complex64>>,
    /// `p_u`; the beam of user `u` carries `p_u / N`.
    pub powers: Vec<f64>,
    pub per_bs_power: [f64; 2],
    pub sinrs: Vec<f64>,
    pub gamma_target: f64,
    pub noise_power: f64,
    pub n_antennas: usize,
    /// Cell-alternation rounds of the SCP power loop (0 for the joint solves).
    pub outer_rounds: usize,
}

impl PrecodingSolution {
    /// `‖w_u‖² = p_u / N`.
    pub fn beam_powers(&self) -> Vec<f64> {
        let n = self.n_antennas as f64;
        self.powers.iter().map(|p| p / n).collect()
    }

    pub fn total_power(&self) -> f64 {
        self.beam_powers().iter().sum()
    }

    pub fn min_sinr(&self) -> f64 {
        self.sinrs.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_bs_power(&self) -> f64 {
        self.per_bs_power[0].max(self.per_bs_power[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMinResult {
    pub gamma_star: f64,
    /// `None` when no positive SINR target was found feasible.
    pub solution: Option<PrecodingSolution>,
    pub dual: Option<DualSolution>,
    pub bisection_iterations: usize,
    pub bracket_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxMinSettings {
    pub solver: SolverSettings,
    /// Absolute width of the final γ bracket.
    pub gamma_tolerance: f64,
    pub max_trials: usize,
}

impl Default for MaxMinSettings {
    fn default() -> Self {
        MaxMinSettings {
            solver: SolverSettings::default(),
            gamma_tolerance: 1e-6,
            max_trials: 200,
        }
    }
}

const SCP_MAX_ROUNDS: usize = 1000;

pub(crate) fn assemble(
    scheme: SchemeId,
    gains: &DownlinkGains,
    directions: Vec<DVector<Complex64>>,
    beam_powers: &[f64],
    gamma: f64,
    noise: f64,
    n_antennas: usize,
    outer_rounds: usize,
) -> PrecodingSolution {
    let n = n_antennas as f64;
    PrecodingSolution {
        scheme,
        per_bs_power: gains.per_bs_power(beam_powers),
        sinrs: gains.sinrs(beam_powers, noise),
        powers: beam_powers.iter().map(|x| x * n).collect(),
        directions,
        gamma_target: gamma,
        noise_power: noise,
        n_antennas,
        outer_rounds,
    }
}

fn check_target(gamma: f64, noise: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Argument(format!("gamma must be positive, got {gamma}")));
    }
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(Error::Argument(format!("noise power must be positive, got {noise}")));
    }
    Ok(())
}

/// Per-cell power solves alternated between the two cells, each cell
/// treating the other cell's current interference as extra noise.
pub fn scp_downlink_powers(
    channels: &ChannelSet,
    directions: &[DVector<Complex64>],
    gamma: f64,
    noise: f64,
    settings: &SolverSettings,
) -> Result<PrecodingSolution> {
    check_target(gamma, noise)?;
    settings.validate()?;
    let gains = DownlinkGains::new(Layout::PerCell, channels, directions)?;
    let (x, rounds) = scp_alternating(&gains, channels.n_users(), gamma, noise, settings.tolerance)?;
    Ok(assemble(
        SchemeId::Scp,
        &gains,
        directions.to_vec(),
        &x,
        gamma,
        noise,
        channels.n_antennas(),
        rounds,
    ))
}

pub(crate) fn scp_alternating(
    gains: &DownlinkGains,
    k: usize,
    gamma: f64,
    noise: f64,
    tolerance: f64,
) -> Result<(Vec<f64>, usize)> {
    let cells: Vec<Vec<usize>> = (0..NUM_CELLS).map(|c| (c * k..(c + 1) * k).collect()).collect();
    let lus: Vec<_> = cells
        .iter()
        .map(|own| {
            nalgebra::DMatrix::from_fn(k, k, |r, c| {
                if r == c {
                    gains.gains[(own[r], own[r])] / gamma
                } else {
                    -gains.gains[(own[r], own[c])]
                }
            })
            .lu()
        })
        .collect();

    let mut x = vec![0.0; 2 * k];
    for round in 1..=SCP_MAX_ROUNDS {
        let prev = x.clone();
        for (c, own) in cells.iter().enumerate() {
            let others = &cells[1 - c];
            let rhs = DVector::from_iterator(
                k,
                own.iter().map(|&u| noise + gains.cross_interference(u, others, &x)),
            );
            let sol = lus[c]
                .solve(&rhs)
                .ok_or_else(|| Error::Infeasible("singular per-cell power system".into()))?;
            if sol.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Infeasible("per-cell power solution is negative".into()));
            }
            for (i, &u) in own.iter().enumerate() {
                x[u] = sol[i];
            }
        }
        let scale = x.iter().cloned().fold(0.0, f64::max);
        let change = x
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change <= tolerance * scale {
            return Ok((x, round));
        }
    }
    Err(Error::Infeasible(format!(
        "cell power alternation did not settle in {SCP_MAX_ROUNDS} rounds"
    )))
}

/// Joint `2K × 2K` power solve for coordinated beamforming.
pub fn cbf_downlink_powers(
    channels: &ChannelSet,
    directions: &[DVector<Complex64>],
    gamma: f64,
    noise: f64,
) -> Result<PrecodingSolution> {
    joint_powers(SchemeId::Cbf, channels, directions, gamma, noise)
}

/// Joint power solve for multicell processing with stacked `2N` directions.
pub fn mcp_downlink_powers(
    channels: &ChannelSet,
    directions: &[DVector<Complex64>],
    gamma: f64,
    noise: f64,
) -> Result<PrecodingSolution> {
    joint_powers(SchemeId::Mcp, channels, directions, gamma, noise)
}

fn joint_powers(
    scheme: SchemeId,
    channels: &ChannelSet,
    directions: &[DVector<Complex64>],
    gamma: f64,
    noise: f64,
) -> Result<PrecodingSolution> {
    check_target(gamma, noise)?;
    let gains = DownlinkGains::new(scheme.layout(), channels, directions)?;
    let x = gains.solve_joint(gamma, noise)?;
    Ok(assemble(
        scheme,
        &gains,
        directions.to_vec(),
        &x,
        gamma,
        noise,
        channels.n_antennas(),
        0,
    ))
}

/// Achieved downlink SINRs recomputed from the solution's directions and powers.
pub fn evaluate_sinrs(scheme: SchemeId, channels: &ChannelSet, solution: &PrecodingSolution) -> Result<Vec<f64>> {
    let gains = DownlinkGains::new(scheme.layout(), channels, &solution.directions)?;
    Ok(gains.sinrs(&solution.beam_powers(), solution.noise_power))
}

/// Relative gap between the primal power objective and the dual objective.
///
/// CBf and MCP compare `2·max_j P_j` against `σ² Σλ/N`; SCP compares the sum
/// of cell powers against `Σ λ_u σ²_u / N`, where `σ²_u` is noise plus the
/// other cell's interference at the primal solution.
pub fn duality_gap(
    dual: &DualSolution,
    primal: &PrecodingSolution,
    channels: &ChannelSet,
    config: &SystemConfig,
) -> Result<f64> {
    if dual.scheme != primal.scheme {
        return Err(Error::Argument(format!(
            "scheme mismatch: dual {} vs primal {}",
            dual.scheme, primal.scheme
        )));
    }
    if (dual.gamma - primal.gamma_target).abs() > 1e-12 * dual.gamma.max(1.0) {
        return Err(Error::Argument(format!(
            "gamma mismatch: dual {} vs primal {}",
            dual.gamma, primal.gamma_target
        )));
    }
    let sigma2 = config.sigma2();
    let (primal_obj, dual_obj) = match dual.scheme {
        SchemeId::Scp => {
            let k = channels.n_users();
            let gains = DownlinkGains::new(Layout::PerCell, channels, &primal.directions)?;
            let x = primal.beam_powers();
            let n = channels.n_antennas() as f64;
            let mut dual_obj = 0.0;
            for cell in 0..NUM_CELLS {
                let others: Vec<usize> = ((1 - cell) * k..(2 - cell) * k).collect();
                for u in cell * k..(cell + 1) * k {
                    let local_noise = sigma2 + gains.cross_interference(u, &others, &x);
                    dual_obj += dual.lambdas[u] * local_noise / n;
                }
            }
            (primal.per_bs_power[0] + primal.per_bs_power[1], dual_obj)
        }
        SchemeId::Cbf | SchemeId::Mcp => (2.0 * primal.max_bs_power(), dual.dual_objective * sigma2),
    };
    let denom = primal_obj.max(dual_obj);
    Ok(if denom > 0.0 {
        (primal_obj - dual_obj).abs() / denom
    } else {
        0.0
    })
}

/// Minimum-power solution meeting SINR `gamma` for every user (SCP: per
/// cell; CBf/MCP: minimising the larger per-BS power). The per-BS budget is
/// not enforced.
pub fn solve_at_gamma(
    scheme: SchemeId,
    channels: &ChannelSet,
    config: &SystemConfig,
    gamma: f64,
    settings: &SolverSettings,
) -> Result<(DualSolution, PrecodingSolution)> {
    solve_capped(scheme, channels, config, gamma, settings, None, None)
}

#[derive(Debug, Clone)]
struct Operating {
    dual: DualSolution,
    primal: PrecodingSolution,
}

fn solve_capped(
    scheme: SchemeId,
    channels: &ChannelSet,
    config: &SystemConfig,
    gamma: f64,
    settings: &SolverSettings,
    warm: Option<&DualSolution>,
    budget: Option<f64>,
) -> Result<(DualSolution, PrecodingSolution)> {
    check_target(gamma, config.sigma2())?;
    let sigma2 = config.sigma2();
    match scheme {
        SchemeId::Scp => {
            let cap = budget.map(|p| p / sigma2);
            let dual = match warm {
                Some(w) => scp_network_warm(channels, gamma, settings, cap, &w.lambdas)?,
                None => scp_network_capped(channels, gamma, settings, cap)?,
            };
            let directions = UplinkModel::scp(channels).directions(&dual.lambdas)?;
            let primal = scp_downlink_powers(channels, &directions, gamma, sigma2, settings)?;
            Ok((dual, primal))
        }
        SchemeId::Cbf | SchemeId::Mcp => {
            let cap = budget.map(|p| 2.0 * p / sigma2);
            let hint = warm.map(|w| (w.mus[0], w.lambdas.as_slice()));
            let out = mu_search(scheme, channels, gamma, settings, hint, cap)?;
            let primal = joint_powers(scheme, channels, &out.directions, gamma, sigma2)?;
            Ok((out.dual, primal))
        }
    }
}

fn scp_network_warm(
    channels: &ChannelSet,
    gamma: f64,
    settings: &SolverSettings,
    per_cell_cap: Option<f64>,
    init: &[f64],
) -> Result<DualSolution> {
    let k = channels.n_users();
    let mut lambdas = Vec::with_capacity(2 * k);
    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    for c in 0..NUM_CELLS {
        let cell = UplinkModel::scp_cell(channels.block(c, c)).solve_capped(
            gamma,
            Some(&init[c * k..(c + 1) * k]),
            settings,
            per_cell_cap,
        )?;
        iterations = iterations.max(cell.iterations);
        residual = residual.max(cell.residual);
        lambdas.extend(cell.lambdas);
    }
    let n = channels.n_antennas() as f64;
    Ok(DualSolution {
        scheme: SchemeId::Scp,
        gamma,
        dual_objective: lambdas.iter().sum::<f64>() / n,
        lambdas,
        mus: [1.0, 1.0],
        iterations,
        converged: true,
        residual,
    })
}

/// Largest γ such that a per-user SINR of γ is reachable within the budget
/// even without any interference.
pub(crate) fn gamma_upper_bound(scheme: SchemeId, channels: &ChannelSet, config: &SystemConfig) -> f64 {
    let k = channels.n_users();
    let snr = config.power() / config.sigma2();
    let mut best = f64::INFINITY;
    for cell in 0..NUM_CELLS {
        for kk in 0..k {
            let own = channels.block(cell, cell).user_adjoint(kk).norm();
            let gain = match scheme {
                SchemeId::Scp | SchemeId::Cbf => own * own,
                SchemeId::Mcp => {
                    let cross = channels.block(cell, 1 - cell).user_adjoint(kk).norm();
                    (own + cross) * (own + cross)
                }
            };
            best = best.min(snr * gain);
        }
    }
    best
}

/// Outcome of one trial target in the γ search.
pub(crate) enum Trial<T> {
    /// Budget met; carries `max_j P_j / P − 1 ≤ 0`.
    Feasible(f64, T),
    /// Budget violated; the same utilisation measure when it was computed.
    Infeasible(Option<f64>),
}

pub(crate) struct GammaSearch<T> {
    pub gamma: f64,
    pub payload: Option<T>,
    pub trials: usize,
    pub width: f64,
}

/// Locates the boundary between feasible and infeasible targets on
/// `[0, upper]`. The utilisation `f(γ) = max_j P_j(γ)/P − 1` is increasing and
/// equals −1 at γ = 0; trials use regula falsi (Illinois) when both ends carry
/// a value, secant extrapolation from feasible points otherwise, and halving
/// as the fallback. Each interpolated estimate is probed at `±tol/4` so the
/// bracket can close in two trials.
pub(crate) fn search_gamma<T>(
    upper: f64,
    estimate: Option<f64>,
    tol: f64,
    max_trials: usize,
    mut eval: impl FnMut(f64, Option<&T>) -> Result<Trial<T>>,
) -> Result<GammaSearch<T>> {
    let mut lo = 0.0;
    let mut f_lo = -1.0;
    let mut payload: Option<T> = None;
    let mut prev_feasible: Option<(f64, f64)> = None;
    let mut hi = upper;
    let mut f_hi: Option<f64> = None;
    let (mut w_lo, mut w_hi) = (1.0, 1.0);
    let mut last_side = 0i8;
    let mut estimate = estimate.filter(|e| e.is_finite() && *e > 0.0 && *e < upper);
    let mut pending: Option<f64> = None;
    let mut trials = 0;
    // ln(max_j P_j / P) is much closer to linear in γ than the utilisation
    // itself; the γ = 0 end (f = −1) stays on the linear scale.
    let scaled = |f: f64| if f > -1.0 { f.ln_1p() } else { f };

    while hi - lo > tol && trials < max_trials {
        let (x, probe) = if let Some(p) = pending.take() {
            (p, None)
        } else if let Some(fh) = f_hi {
            let (a, b) = (scaled(f_lo) * w_lo, scaled(fh) * w_hi);
            let x = lo - a * (hi - lo) / (b - a);
            (x - tol / 4.0, Some(x + tol / 4.0))
        } else if let Some((g0, f0)) = prev_feasible.filter(|(g0, f0)| *g0 < lo && f_lo > *f0) {
            let x = lo - scaled(f_lo) * (lo - g0) / (scaled(f_lo) - scaled(f0));
            (x - tol / 4.0, Some(x + tol / 4.0))
        } else if let Some(e) = estimate.take() {
            (e, None)
        } else {
            (0.5 * (lo + hi), None)
        };
        let x = if x > lo && x < hi && x.is_finite() { x } else { 0.5 * (lo + hi) };

        trials += 1;
        match eval(x, payload.as_ref())? {
            Trial::Feasible(f, p) => {
                prev_feasible = Some((lo, f_lo));
                lo = x;
                f_lo = f;
                payload = Some(p);
                if last_side == 1 {
                    w_hi *= 0.5;
                } else {
                    w_hi = 1.0;
                }
                w_lo = 1.0;
                last_side = 1;
                pending = probe.filter(|p| *p > lo && *p < hi);
            }
            Trial::Infeasible(f) => {
                hi = x;
                f_hi = f;
                if last_side == -1 {
                    w_lo *= 0.5;
                } else {
                    w_lo = 1.0;
                }
                w_hi = 1.0;
                last_side = -1;
                pending = None;
            }
        }
    }
    Ok(GammaSearch {
        gamma: lo,
        payload,
        trials,
        width: hi - lo,
    })
}

/// Trial targets whose dual objective passes this multiple of the budget are
/// abandoned without a utilisation value.
const ABORT_FACTOR: f64 = 8.0;

/// Max-min SINR for one scheme under per-BS budgets `P`.
pub fn max_min_sinr(
    scheme: SchemeId,
    channels: &ChannelSet,
    config: &SystemConfig,
    settings: &MaxMinSettings,
) -> Result<MaxMinResult> {
    settings.solver.validate()?;
    if !(settings.gamma_tolerance > 0.0) {
        return Err(Error::Argument("gamma tolerance must be positive".into()));
    }
    let budget = config.power();
    let upper = gamma_upper_bound(scheme, channels, config);
    let estimate = asymptotic::gamma_star(scheme, config.beta(), config.epsilon(), config.snr()).ok();

    let search = search_gamma(
        upper,
        estimate,
        settings.gamma_tolerance,
        settings.max_trials,
        |gamma, warm: Option<&Operating>| {
            match solve_capped(
                scheme,
                channels,
                config,
                gamma,
                &settings.solver,
                warm.map(|w| &w.dual),
                Some(ABORT_FACTOR * budget),
            ) {
                Ok((dual, primal)) => {
                    let f = primal.max_bs_power() / budget - 1.0;
                    if f <= 0.0 {
                        Ok(Trial::Feasible(f, Operating { dual, primal }))
                    } else {
                        Ok(Trial::Infeasible(Some(f)))
                    }
                }
                Err(Error::Infeasible(_)) => Ok(Trial::Infeasible(None)),
                Err(e) => Err(e),
            }
        },
    )?;

    let (solution, dual) = match search.payload {
        Some(op) => (Some(op.primal), Some(op.dual)),
        None => (None, None),
    };
    Ok(MaxMinResult {
        gamma_star: if solution.is_some() { search.gamma } else { 0.0 },
        solution,
        dual,
        bisection_iterations: search.trials,
        bracket_width: search.width,
    })
}

mod complex_vectors {
    use nalgebra::DVector;
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[DVector<Complex64>], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<Vec<[f64; 2]>> = v.iter().map(|d| d.iter().map(|z| [z.re, z.im]).collect()).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<Complex64>>, D::Error> {
        let raw = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|v| DVector::from_iterator(v.len(), v.into_iter().map(|[re, im]| Complex64::new(re, im))))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channels;
    use crate::dual_uplink::{cbf_dual_powers, mcp_dual_powers, scp_dual_powers_network};
    use nalgebra::DMatrix;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn cfg(n: usize, k: usize, eps: f64, seed: u64) -> SystemConfig {
        SystemConfig::new(n, k, eps, 1.0, 10.0, seed).unwrap()
    }

    fn scalar_set(a: f64, b: f64, cc: f64, d: f64) -> ChannelSet {
        let m = |v: f64| DMatrix::from_element(1, 1, c(v));
        ChannelSet::from_blocks([[m(a), m(cc)], [m(b), m(d)]]).unwrap()
    }

    #[test]
    fn scp_single_user_closed_form() {
        // user 0 with |h|² = 4; the second cell is silent
        let ch = scalar_set(2.0, 0.0, 0.0, 1.0);
        let dirs = vec![DVector::from_element(1, c(1.0)), DVector::from_element(1, c(1.0))];
        let sol = scp_downlink_powers(&ch, &dirs, 1.0, 1.0, &SolverSettings::default()).unwrap();
        assert!((sol.powers[0] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn scp_zero_epsilon_settles_immediately() {
        let config = cfg(4, 3, 0.0, 3);
        let ch = sample_channels(&config, 0);
        let (_, sol) = solve_at_gamma(SchemeId::Scp, &ch, &config, 0.5, &SolverSettings::default()).unwrap();
        assert_eq!(sol.outer_rounds, 2);
        // equal to isolated per-cell solves
        let gains = DownlinkGains::new(Layout::PerCell, &ch, &sol.directions).unwrap();
        for cell in 0..2 {
            let users: Vec<usize> = (cell * 3..cell * 3 + 3).collect();
            let x = gains.solve_subset(&users, 0.5, &[1.0; 3]).unwrap();
            for (i, &u) in users.iter().enumerate() {
                assert!((sol.beam_powers()[u] - x[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn achieved_sinrs_match_target() {
        let config = cfg(4, 3, 0.5, 11);
        let ch = sample_channels(&config, 2);
        for scheme in SchemeId::ALL {
            let (_, sol) = solve_at_gamma(scheme, &ch, &config, 0.5, &SolverSettings::default()).unwrap();
            let sinrs = evaluate_sinrs(scheme, &ch, &sol).unwrap();
            for s in sinrs {
                assert!((s - 0.5).abs() < 1e-8, "{scheme}: {s}");
            }
            let bs: f64 = sol.per_bs_power.iter().sum();
            assert!((bs - sol.total_power()).abs() < 1e-12 * bs);
        }
    }

    #[test]
    fn cbf_two_user_scalar_system() {
        let (a, b, cc, d) = (1.3, 0.4, 0.6, 0.9);
        let ch = scalar_set(a, b, cc, d);
        let dirs = vec![DVector::from_element(1, c(1.0)), DVector::from_element(1, c(1.0))];
        let g = 0.7;
        let sol = cbf_downlink_powers(&ch, &dirs, g, 1.0).unwrap();
        // user0 hears BS0 (a) and BS1 (c);  user1 hears BS1 (d) and BS0 (b)
        // x0 a²/γ − x1 c² = 1,  x1 d²/γ − x0 b² = 1
        let (a2, b2, c2, d2) = (a * a, b * b, cc * cc, d * d);
        let det = a2 * d2 / (g * g) - b2 * c2;
        let x0 = (d2 / g + c2) / det;
        let x1 = (a2 / g + b2) / det;
        assert!((sol.powers[0] - x0).abs() < 1e-12);
        assert!((sol.powers[1] - x1).abs() < 1e-12);
    }

    #[test]
    fn cbf_zero_epsilon_matches_scp() {
        let config = cfg(4, 2, 0.0, 7);
        let ch = sample_channels(&config, 0);
        let (_, scp) = solve_at_gamma(SchemeId::Scp, &ch, &config, 0.8, &SolverSettings::default()).unwrap();
        let cbf = cbf_downlink_powers(&ch, &scp.directions, 0.8, 1.0).unwrap();
        for (a, b) in scp.powers.iter().zip(&cbf.powers) {
            assert!((a - b).abs() < 1e-12 * a);
        }
    }

    #[test]
    fn mcp_single_active_user() {
        let ch = scalar_set(1.5, 0.0, 0.5, 0.0);
        let h = ch.stacked_channel(0, 0).unwrap();
        let dir = h.map(|z| z.conj()) / c(h.norm());
        let dirs = vec![dir, DVector::from_element(2, c(0.0))];
        let gains = DownlinkGains::new(Layout::Joint, &ch, &dirs).unwrap();
        let x = gains.solve_subset(&[0], 2.0, &[1.0]).unwrap();
        assert!((x[0] - 2.0 / h.norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn mcp_power_accounting() {
        let config = cfg(4, 3, 0.0, 5);
        let ch = sample_channels(&config, 1);
        let (_, sol) = solve_at_gamma(SchemeId::Mcp, &ch, &config, 0.6, &SolverSettings::default()).unwrap();
        let bs: f64 = sol.per_bs_power.iter().sum();
        assert!((bs - sol.total_power()).abs() < 1e-12 * bs);
    }

    #[test]
    fn zero_powers_give_zero_sinr() {
        let config = cfg(3, 2, 0.3, 1);
        let ch = sample_channels(&config, 0);
        let (_, mut sol) = solve_at_gamma(SchemeId::Cbf, &ch, &config, 0.5, &SolverSettings::default()).unwrap();
        sol.powers.iter_mut().for_each(|p| *p = 0.0);
        assert!(evaluate_sinrs(SchemeId::Cbf, &ch, &sol).unwrap().iter().all(|s| *s == 0.0));
    }

    #[test]
    fn duality_gap_small_for_each_scheme() {
        let config = cfg(4, 3, 0.5, 9);
        let ch = sample_channels(&config, 0);
        for scheme in SchemeId::ALL {
            let (dual, primal) = solve_at_gamma(scheme, &ch, &config, 0.5, &SolverSettings::default()).unwrap();
            let gap = duality_gap(&dual, &primal, &ch, &config).unwrap();
            assert!(gap <= 1e-6, "{scheme}: {gap}");
        }
    }

    #[test]
    fn duality_gap_rejects_mismatch() {
        let config = cfg(4, 3, 0.5, 9);
        let ch = sample_channels(&config, 0);
        let (dual, primal) = solve_at_gamma(SchemeId::Cbf, &ch, &config, 0.5, &SolverSettings::default()).unwrap();
        let other = cbf_dual_powers(&ch, 0.6, [1.0, 1.0], &SolverSettings::default()).unwrap();
        assert!(duality_gap(&other, &primal, &ch, &config).is_err());
        let mcp = mcp_dual_powers(&ch, 0.5, [1.0, 1.0], &SolverSettings::default()).unwrap();
        assert!(duality_gap(&mcp, &primal, &ch, &config).is_err());
        assert!(duality_gap(&dual, &primal, &ch, &config).is_ok());
    }

    #[test]
    fn scp_dual_matches_downlink_power() {
        let config = cfg(4, 3, 0.5, 4);
        let ch = sample_channels(&config, 3);
        let dual = scp_dual_powers_network(&ch, 0.5, &SolverSettings::default()).unwrap();
        let dirs = UplinkModel::scp(&ch).directions(&dual.lambdas).unwrap();
        let sol = scp_downlink_powers(&ch, &dirs, 0.5, 1.0, &SolverSettings::default()).unwrap();
        assert!(duality_gap(&dual, &sol, &ch, &config).unwrap() < 1e-8);
    }

    #[test]
    fn scalar_max_min_is_matched_filter_capacity() {
        // N = 1, K = 1, |h|² = 4, σ² = 1, P = 1, no cross coupling
        let config = SystemConfig::new(1, 1, 0.0, 1.0, 1.0, 0).unwrap();
        let ch = scalar_set(2.0, 0.0, 0.0, 2.0);
        for scheme in SchemeId::ALL {
            let r = max_min_sinr(scheme, &ch, &config, &MaxMinSettings::default()).unwrap();
            assert!((r.gamma_star - 4.0).abs() <= 1e-6, "{scheme}: {}", r.gamma_star);
            assert!(r.bracket_width <= 1e-6);
        }
    }

    #[test]
    fn scheme_dominance_on_random_draws() {
        for seed in 0..4 {
            let config = cfg(4, 3, 0.5, seed);
            let ch = sample_channels(&config, 0);
            let s = MaxMinSettings::default();
            let g: Vec<f64> = SchemeId::ALL
                .iter()
                .map(|&sc| max_min_sinr(sc, &ch, &config, &s).unwrap().gamma_star)
                .collect();
            assert!(g[2] >= g[1] - 1e-6 && g[1] >= g[0] - 1e-6, "{g:?}");
        }
    }

    #[test]
    fn doubling_power_increases_scp_target() {
        let config = cfg(4, 3, 0.5, 2);
        let ch = sample_channels(&config, 0);
        let mut prev = 0.0;
        for p in [1.0, 2.0, 4.0, 8.0] {
            let c2 = config.with_power(p).unwrap();
            let g = max_min_sinr(SchemeId::Scp, &ch, &c2, &MaxMinSettings::default())
                .unwrap()
                .gamma_star;
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn max_min_solution_meets_budget_and_target() {
        let config = cfg(6, 4, 0.5, 13);
        let ch = sample_channels(&config, 0);
        for scheme in SchemeId::ALL {
            let r = max_min_sinr(scheme, &ch, &config, &MaxMinSettings::default()).unwrap();
            let sol = r.solution.unwrap();
            assert!(sol.max_bs_power() <= config.power() * (1.0 + 1e-12));
            assert!(sol.max_bs_power() >= config.power() * (1.0 - 1e-4), "{scheme}: {:?}", sol.per_bs_power);
            assert!(sol.min_sinr() >= r.gamma_star - 1e-8);
        }
    }

    #[test]
    fn feasibility_is_monotone_in_gamma() {
        let config = cfg(4, 3, 0.5, 21);
        let ch = sample_channels(&config, 0);
        let r = max_min_sinr(SchemeId::Cbf, &ch, &config, &MaxMinSettings::default()).unwrap();
        for frac in [0.2, 0.5, 0.9, 0.99] {
            let (_, sol) =
                solve_at_gamma(SchemeId::Cbf, &ch, &config, frac * r.gamma_star, &SolverSettings::default()).unwrap();
            assert!(sol.max_bs_power() <= config.power());
        }
        match solve_at_gamma(SchemeId::Cbf, &ch, &config, 1.01 * r.gamma_star, &SolverSettings::default()) {
            Ok((_, sol)) => assert!(sol.max_bs_power() > config.power()),
            Err(e) => assert!(e.is_infeasible()),
        }
    }

    #[test]
    fn precoding_solution_json_round_trip() {
        let config = cfg(3, 2, 0.4, 1);
        let ch = sample_channels(&config, 0);
        let (_, sol) = solve_at_gamma(SchemeId::Mcp, &ch, &config, 0.4, &SolverSettings::default()).unwrap();
        let back: PrecodingSolution = serde_json::from_str(&serde_json::to_string(&sol).unwrap()).unwrap();
        assert_eq!(back, sol);
    }
}
