//! Zero-forcing reference precoders and the half-reuse time-division scheme.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, SystemConfig, NUM_CELLS};
use crate::downlink::{assemble, gamma_upper_bound, max_min_sinr, search_gamma, MaxMinResult, MaxMinSettings, Trial};
use crate::dual_uplink::SchemeId;
use crate::error::{Error, Result};
use crate::power::DownlinkGains;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaselineId {
    /// Nulls own-cell interference at each BS.
    #[serde(rename = "SCP_ZF")]
    ScpZf,
    /// Each BS nulls every other user it can reach.
    #[serde(rename = "GZF")]
    Gzf,
    /// Joint nulling over the stacked 2N array.
    #[serde(rename = "MCP_ZF")]
    McpZf,
    /// Cells take turns; each slot runs SCP with doubled power.
    #[serde(rename = "TD_SCP")]
    TdScp,
}

impl BaselineId {
    pub const ALL: [BaselineId; 4] = [BaselineId::ScpZf, BaselineId::Gzf, BaselineId::McpZf, BaselineId::TdScp];

    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineId::ScpZf => "SCP_ZF",
            BaselineId::Gzf => "GZF",
            BaselineId::McpZf => "MCP_ZF",
            BaselineId::TdScp => "TD_SCP",
        }
    }

    /// The optimised scheme whose SINR model and power constraints apply.
    pub fn scheme(&self) -> SchemeId {
        match self {
            BaselineId::ScpZf | BaselineId::TdScp => SchemeId::Scp,
            BaselineId::Gzf => SchemeId::Cbf,
            BaselineId::McpZf => SchemeId::Mcp,
        }
    }
}

impl fmt::Display for BaselineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "SCP_ZF" => Ok(BaselineId::ScpZf),
            "GZF" => Ok(BaselineId::Gzf),
            "MCP_ZF" => Ok(BaselineId::McpZf),
            "TD_SCP" | "TD" => Ok(BaselineId::TdScp),
            other => Err(Error::Argument(format!("unknown baseline {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ZfPowerPolicy {
    /// Powers chosen to maximise the smallest SINR.
    #[default]
    Balanced,
    /// Every beam of a BS gets `P/K` (MCP-ZF: a common power scaled to the budget).
    EqualPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct BaselineSettings {
    pub max_min: MaxMinSettings,
    pub power_policy: ZfPowerPolicy,
}

const RANK_TOLERANCE: f64 = 1e-12;

/// Unit ZF directions for the columns of `rows` listed in `keep`: the
/// columns of `rowsᴴ (rows rowsᴴ)⁻¹`, computed as `Q R⁻ᴴ` from `rowsᴴ = QR`.
fn zf_columns(rows_adj: DMatrix<Complex64>, keep: impl Iterator<Item = usize>) -> Result<Vec<DVector<Complex64>>> {
    let qr = rows_adj.qr();
    let (q, r) = (qr.q(), qr.r());
    let diag_max = (0..r.nrows()).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    if (0..r.nrows()).any(|i| r[(i, i)].norm() <= RANK_TOLERANCE * diag_max) || diag_max == 0.0 {
        return Err(Error::Rank("channel matrix to be nulled is rank deficient".into()));
    }
    let w_adj = r
        .solve_upper_triangular(&q.adjoint())
        .ok_or_else(|| Error::Rank("triangular factor is singular".into()))?;
    let w = w_adj.adjoint();
    Ok(keep
        .map(|c| {
            let col = w.column(c).clone_owned();
            let norm = col.norm();
            col / Complex64::new(norm, 0.0)
        })
        .collect())
}

/// ZF directions for all `2K` users, ordered `cell * K + k`.
pub fn zf_directions(baseline: BaselineId, channels: &ChannelSet) -> Result<Vec<DVector<Complex64>>> {
    let k = channels.n_users();
    let n = channels.n_antennas();
    let mut out = Vec::with_capacity(2 * k);
    match baseline {
        BaselineId::ScpZf => {
            if k > n {
                return Err(Error::Dimension(format!("SCP-ZF needs K ≤ N, got K={k}, N={n}")));
            }
            for c in 0..NUM_CELLS {
                out.extend(zf_columns(channels.block(c, c).adjoint().clone(), 0..k)?);
            }
        }
        BaselineId::Gzf => {
            if 2 * k > n {
                return Err(Error::Dimension(format!("GZF needs 2K ≤ N, got K={k}, N={n}")));
            }
            for bs in 0..NUM_CELLS {
                let mut seen = DMatrix::zeros(n, 2 * k);
                for cell in 0..NUM_CELLS {
                    seen.columns_mut(cell * k, k).copy_from(channels.block(cell, bs).adjoint());
                }
                out.extend(zf_columns(seen, bs * k..(bs + 1) * k)?);
            }
        }
        BaselineId::McpZf => {
            if k > n {
                return Err(Error::Dimension(format!("MCP-ZF needs 2K ≤ 2N, got K={k}, N={n}")));
            }
            let mut seen = DMatrix::zeros(2 * n, 2 * k);
            for cell in 0..NUM_CELLS {
                for kk in 0..k {
                    seen.set_column(cell * k + kk, &channels.stacked_adjoint(kk, cell));
                }
            }
            out.extend(zf_columns(seen, 0..2 * k)?);
        }
        BaselineId::TdScp => {
            return Err(Error::Argument("TD_SCP has no zero-forcing directions".into()));
        }
    }
    Ok(out)
}

/// Largest designed-null leakage `|h_v w_u|²` relative to the smallest
/// desired gain `|h_u w_u|²`.
pub fn nulling_residual(baseline: BaselineId, channels: &ChannelSet, directions: &[DVector<Complex64>]) -> Result<f64> {
    let scheme = baseline.scheme();
    let gains = DownlinkGains::new(scheme.layout(), channels, directions)?;
    let k = channels.n_users();
    let total = 2 * k;
    let signal = (0..total).map(|u| gains.gains[(u, u)]).fold(f64::INFINITY, f64::min);
    let mut leak: f64 = 0.0;
    for v in 0..total {
        for u in 0..total {
            let nulled = u != v
                && match baseline {
                    BaselineId::ScpZf => u / k == v / k,
                    BaselineId::Gzf | BaselineId::McpZf => true,
                    BaselineId::TdScp => false,
                };
            if nulled {
                leak = leak.max(gains.gains[(u, v)]);
            }
        }
    }
    Ok(leak / signal)
}

/// Max-min SINR of a baseline under per-BS budget `P`.
///
/// For `TD_SCP` the caller supplies the channels of the users served in one
/// slot (`2K` at the matching loading); cross-cell blocks are ignored and the
/// slot power is `2P`. The returned SINR is per slot; the rate carries a
/// time share of 1/2.
pub fn baseline_max_min(
    baseline: BaselineId,
    channels: &ChannelSet,
    config: &SystemConfig,
    settings: &BaselineSettings,
) -> Result<MaxMinResult> {
    if baseline == BaselineId::TdScp {
        let slot = channels.without_cross_blocks();
        let slot_config = config
            .with_users(channels.n_users())?
            .with_epsilon(0.0)?
            .with_power(2.0 * config.power())?;
        return max_min_sinr(SchemeId::Scp, &slot, &slot_config, &settings.max_min);
    }

    let scheme = baseline.scheme();
    let directions = zf_directions(baseline, channels)?;
    let gains = DownlinkGains::new(scheme.layout(), channels, &directions)?;
    let sigma2 = config.sigma2();
    let budget = config.power();
    let n = channels.n_antennas();

    if settings.power_policy == ZfPowerPolicy::EqualPower {
        let k = channels.n_users() as f64;
        let mut x = vec![budget / k; 2 * channels.n_users()];
        let per_bs = gains.per_bs_power(&x);
        let scale = budget / per_bs[0].max(per_bs[1]);
        x.iter_mut().for_each(|v| *v *= scale);
        let mut sol = assemble(scheme, &gains, directions, &x, 0.0, sigma2, n, 0);
        sol.gamma_target = sol.min_sinr();
        return Ok(MaxMinResult {
            gamma_star: sol.gamma_target,
            solution: Some(sol),
            dual: None,
            bisection_iterations: 0,
            bracket_width: 0.0,
        });
    }

    let upper = gamma_upper_bound(scheme, channels, config);
    let search = search_gamma(
        upper,
        None,
        settings.max_min.gamma_tolerance,
        settings.max_min.max_trials,
        |gamma, _: Option<&Vec<f64>>| match gains.solve_joint(gamma, sigma2) {
            Ok(x) => {
                let p = gains.per_bs_power(&x);
                let f = p[0].max(p[1]) / budget - 1.0;
                Ok(if f <= 0.0 { Trial::Feasible(f, x) } else { Trial::Infeasible(Some(f)) })
            }
            Err(Error::Infeasible(_)) => Ok(Trial::Infeasible(None)),
            Err(e) => Err(e),
        },
    )?;
    let solution = search
        .payload
        .map(|x| assemble(scheme, &gains, directions, &x, search.gamma, sigma2, n, 0));
    Ok(MaxMinResult {
        gamma_star: if solution.is_some() { search.gamma } else { 0.0 },
        solution,
        dual: None,
        bisection_iterations: search.trials,
        bracket_width: search.width,
    })
}

/// Users per slot of the time-division reference at loading `beta`.
pub fn td_users(beta: f64, n_antennas: usize) -> usize {
    (2.0 * beta * n_antennas as f64).round().max(1.0) as usize
}

/// Normalised TD rate in nats: half the time, `K_TD/N` streams per cell pair.
pub fn td_finite_rate(k_td: usize, n_antennas: usize, gamma: f64) -> f64 {
    0.5 * k_td as f64 / n_antennas as f64 * gamma.ln_1p()
}
