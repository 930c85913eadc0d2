//! Large-system limits: deterministic dual powers and downlink powers,
//! limiting max-min SINRs, effective interference, feasibility tests,
//! optimal cell loading, the half-reuse time-division reference, resolvent
//! `t`-functions and finite-N constructors of the limiting beamformers.
//!
//! Throughout, `snr = P/σ²` and `s = σ²/P`.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, SystemConfig};
use crate::downlink::{assemble, PrecodingSolution};
use crate::dual_uplink::{SchemeId, UplinkModel};
use crate::error::{Error, Result};
use crate::power::DownlinkGains;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticPoint {
    pub scheme: SchemeId,
    pub gamma_star: f64,
    pub lambda_bar: f64,
    pub p_bar: f64,
    /// Per-BS power `β·p̄`.
    pub big_p_bar: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum BetaStar {
    Finite(f64),
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoadingRegime {
    NoiseLimited,
    InteriorOptimum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingResult {
    pub beta_star: BetaStar,
    /// `r(β*)`; for an unbounded optimum, the supremum `lim_{β→∞} r(β)`.
    pub rate_at_star: f64,
    pub regime: LoadingRegime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadingSettings {
    pub beta_min: f64,
    pub beta_start: f64,
    /// Final width of the golden-section bracket in β.
    pub beta_tolerance: f64,
    pub max_doublings: usize,
}

impl Default for LoadingSettings {
    fn default() -> Self {
        LoadingSettings {
            beta_min: 1e-3,
            beta_start: 1.0,
            beta_tolerance: 1e-9,
            max_doublings: 64,
        }
    }
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("{what} must be positive and finite, got {v}")))
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps >= 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("epsilon must be nonnegative, got {eps}")))
    }
}

/// `β·Σ` of the scheme's effective bandwidths; the limit is finite only when
/// this is below one.
pub fn bandwidth_load(scheme: SchemeId, gamma: f64, beta: f64, epsilon: f64) -> f64 {
    let own = gamma / (1.0 + gamma);
    match scheme {
        SchemeId::Scp => beta * (own + epsilon * gamma),
        SchemeId::Cbf => beta * (own + epsilon * gamma / (1.0 + epsilon * gamma)),
        SchemeId::Mcp => beta * own,
    }
}

/// Deterministic equivalent of the dual powers `λ_{kj}`.
pub fn lambda_bar(scheme: SchemeId, gamma: f64, beta: f64, epsilon: f64) -> Result<f64> {
    check_positive("gamma", gamma)?;
    check_positive("beta", beta)?;
    check_epsilon(epsilon)?;
    let (num, den) = match scheme {
        SchemeId::Scp => (gamma, 1.0 - beta * gamma / (1.0 + gamma)),
        SchemeId::Cbf => (gamma, 1.0 - bandwidth_load(scheme, gamma, beta, epsilon)),
        SchemeId::Mcp => (gamma, (1.0 + epsilon) * (1.0 - bandwidth_load(scheme, gamma, beta, epsilon))),
    };
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::Infeasible(format!(
            "{scheme}: target {gamma} unreachable at beta {beta}, epsilon {epsilon}"
        )))
    }
}

/// Deterministic equivalent of the per-user downlink power `p_{kj}`.
pub fn p_bar(scheme: SchemeId, gamma: f64, beta: f64, epsilon: f64, sigma2: f64) -> Result<f64> {
    check_positive("sigma2", sigma2)?;
    match scheme {
        SchemeId::Scp => {
            check_positive("gamma", gamma)?;
            check_positive("beta", beta)?;
            check_epsilon(epsilon)?;
            let den = 1.0 - bandwidth_load(scheme, gamma, beta, epsilon);
            if den > 0.0 {
                Ok(sigma2 * gamma / den)
            } else {
                Err(Error::Infeasible(format!(
                    "SCP: target {gamma} unreachable at beta {beta}, epsilon {epsilon}"
                )))
            }
        }
        SchemeId::Cbf | SchemeId::Mcp => Ok(lambda_bar(scheme, gamma, beta, epsilon)? * sigma2),
    }
}

/// Positive root of `a γ² + b γ − c = 0` (`a ≥ 0`, `c > 0`) without cancellation.
fn positive_root(a: f64, b: f64, c: f64) -> f64 {
    let disc = (b * b + 4.0 * a * c).sqrt();
    if b >= 0.0 {
        2.0 * c / (b + disc)
    } else {
        (disc - b) / (2.0 * a)
    }
}

/// Denominator `D(γ)` of the limiting SINR equation `γ = 1 / (β D(γ))`.
fn sinr_denominator(scheme: SchemeId, gamma: f64, epsilon: f64, s: f64) -> f64 {
    match scheme {
        SchemeId::Scp => s + epsilon + 1.0 / (1.0 + gamma),
        SchemeId::Cbf => s + epsilon / (1.0 + epsilon * gamma) + 1.0 / (1.0 + gamma),
        SchemeId::Mcp => s / (1.0 + epsilon) + 1.0 / (1.0 + gamma),
    }
}

/// Relative residual `|γ − 1/(β D(γ))| / max(1, γ)` of the limiting SINR equation.
pub fn gamma_star_residual(scheme: SchemeId, gamma: f64, beta: f64, epsilon: f64, snr: f64) -> f64 {
    let f = 1.0 / (beta * sinr_denominator(scheme, gamma, epsilon, 1.0 / snr));
    (gamma - f).abs() / gamma.max(1.0)
}

/// Limiting max-min SINR under per-BS power `P`.
pub fn gamma_star(scheme: SchemeId, beta: f64, epsilon: f64, snr: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    check_positive("snr", snr)?;
    check_epsilon(epsilon)?;
    let s = 1.0 / snr;
    let inv_beta = 1.0 / beta;
    Ok(match scheme {
        SchemeId::Scp | SchemeId::Mcp => {
            let a = if scheme == SchemeId::Scp { s + epsilon } else { s / (1.0 + epsilon) };
            positive_root(a, a + 1.0 - inv_beta, inv_beta)
        }
        SchemeId::Cbf => cbf_root(beta, epsilon, s),
    })
}

/// Root of the increasing residual `β γ D(γ) − 1` on `[0, 1/(βs)]` by Newton
/// steps kept inside a shrinking bracket.
fn cbf_root(beta: f64, epsilon: f64, s: f64) -> f64 {
    let r = |g: f64| beta * g * sinr_denominator(SchemeId::Cbf, g, epsilon, s) - 1.0;
    let dr = |g: f64| {
        beta * (s + epsilon / ((1.0 + epsilon * g) * (1.0 + epsilon * g)) + 1.0 / ((1.0 + g) * (1.0 + g)))
    };
    let (mut lo, mut hi) = (0.0, 1.0 / (beta * s));
    let mut g = positive_root(s + epsilon, s + epsilon + 1.0 - 1.0 / beta, 1.0 / beta)
        .max(positive_root(s, s + 2.0 - 1.0 / beta, 1.0 / beta))
        .min(hi);
    for _ in 0..200 {
        let v = r(g);
        if v == 0.0 {
            return g;
        }
        if v < 0.0 {
            lo = g;
        } else {
            hi = g;
        }
        let mut next = g - v / dr(g);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - g).abs() <= 1e-16 * g.max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * hi {
            return next;
        }
        g = next;
    }
    g
}

/// Effective interference at target `gamma`: a target is reachable when
/// `snr / I_eff ≥ γ` (SCP, CBf) or `(1+ε)·snr / I_eff ≥ γ` (MCP).
pub fn effective_interference(scheme: SchemeId, snr: f64, epsilon: f64, gamma: f64, beta: f64) -> f64 {
    let own = snr / (1.0 + gamma);
    let cross = match scheme {
        SchemeId::Scp => epsilon * snr,
        SchemeId::Cbf => epsilon * snr / (1.0 + epsilon * gamma),
        SchemeId::Mcp => epsilon * snr / (1.0 + gamma),
    };
    beta * (1.0 + own + cross)
}

/// Reachability of `gamma` with unlimited power.
pub fn is_feasible_unlimited(scheme: SchemeId, gamma: f64, beta: f64, epsilon: f64) -> bool {
    bandwidth_load(scheme, gamma, beta, epsilon) < 1.0
}

/// Reachability of `gamma` under per-BS power `P` (`snr = P/σ²`).
pub fn is_feasible(scheme: SchemeId, gamma: f64, beta: f64, epsilon: f64, snr: f64) -> bool {
    let i_eff = effective_interference(scheme, snr, epsilon, gamma, beta);
    let useful = match scheme {
        SchemeId::Mcp => (1.0 + epsilon) * snr,
        _ => snr,
    };
    useful / i_eff >= gamma
}

pub fn asymptotic_point(scheme: SchemeId, beta: f64, epsilon: f64, snr: f64, sigma2: f64) -> Result<AsymptoticPoint> {
    let g = gamma_star(scheme, beta, epsilon, snr)?;
    let lambda_bar = lambda_bar(scheme, g, beta, epsilon)?;
    let p_bar = p_bar(scheme, g, beta, epsilon, sigma2)?;
    Ok(AsymptoticPoint {
        scheme,
        gamma_star: g,
        lambda_bar,
        p_bar,
        big_p_bar: beta * p_bar,
        feasible: is_feasible_unlimited(scheme, g, beta, epsilon),
    })
}

/// Normalised rate `r = β ln(1 + γ*)` in nats per antenna.
pub fn rate(scheme: SchemeId, beta: f64, epsilon: f64, snr: f64) -> Result<f64> {
    Ok(beta * gamma_star(scheme, beta, epsilon, snr)?.ln_1p())
}

/// True when `r(β)` keeps increasing with the loading.
pub fn is_noise_limited(scheme: SchemeId, snr: f64, epsilon: f64) -> bool {
    let s = 1.0 / snr;
    match scheme {
        SchemeId::Scp => s + epsilon >= 1.0,
        SchemeId::Cbf => s + epsilon - 2.0 * epsilon * epsilon - 1.0 >= 0.0,
        SchemeId::Mcp => s >= 1.0 + epsilon,
    }
}

/// Rate-maximising cell loading.
pub fn optimal_beta(scheme: SchemeId, snr: f64, epsilon: f64, settings: &LoadingSettings) -> Result<LoadingResult> {
    check_positive("snr", snr)?;
    check_epsilon(epsilon)?;
    if is_noise_limited(scheme, snr, epsilon) {
        let s = 1.0 / snr;
        return Ok(LoadingResult {
            beta_star: BetaStar::Unbounded,
            rate_at_star: 1.0 / sinr_denominator(scheme, 0.0, epsilon, s),
            regime: LoadingRegime::NoiseLimited,
        });
    }
    let r = |b: f64| rate(scheme, b, epsilon, snr);

    let mut lo = settings.beta_min;
    let mut hi = settings.beta_start.max(2.0 * lo);
    let mut r_hi = r(hi)?;
    let mut doublings = 0;
    loop {
        let next = 2.0 * hi;
        let r_next = r(next)?;
        if r_next <= r_hi {
            hi = next;
            break;
        }
        lo = 0.5 * hi;
        hi = next;
        r_hi = r_next;
        doublings += 1;
        if doublings >= settings.max_doublings {
            return Err(Error::NotConverged {
                iterations: doublings,
                residual: r_next,
            });
        }
    }

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut rc, mut rd) = (r(c)?, r(d)?);
    while b - a > settings.beta_tolerance * b.max(1.0) {
        if rc >= rd {
            b = d;
            d = c;
            rd = rc;
            c = b - INV_PHI * (b - a);
            rc = r(c)?;
        } else {
            a = c;
            c = d;
            rc = rd;
            d = a + INV_PHI * (b - a);
            rd = r(d)?;
        }
    }
    let (beta, rate) = if rc >= rd { (c, rc) } else { (d, rd) };
    Ok(LoadingResult {
        beta_star: BetaStar::Finite(beta),
        rate_at_star: rate,
        regime: LoadingRegime::InteriorOptimum,
    })
}

/// Limiting SINR of the half-reuse time-division reference, where each BS
/// serves `2βN` users with power `2P` during its half of the time.
pub fn td_gamma_star(beta: f64, snr: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    check_positive("snr", snr)?;
    let s = 1.0 / snr;
    let inv_beta = 1.0 / beta;
    Ok(positive_root(s, s + 2.0 - inv_beta, inv_beta))
}

pub fn td_rate(beta: f64, snr: f64) -> Result<f64> {
    Ok(beta * td_gamma_star(beta, snr)?.ln_1p())
}

/// Solves the resolvent fixed point at `z = −ρ` by monotone iteration from
/// `t = 1/ρ`, which bounds every solution from above.
///
/// * SCP: `t_j = 1/(ρ + βλ_j/(1+λ_j t_j))`, per cell; `mus` unused.
/// * CBf: `t_j = 1/(ρ + βλ_j/(1+λ_j t_j) + βελ_ĵ/(1+ελ_ĵ t_j))`; `mus` unused.
/// * MCP: the coupled pair `(t₁, t₂)` for cell ordering `(j, ĵ)`, with
///   `λ = (λ_j, λ_ĵ)` and `μ = (μ_j, μ_ĵ)`.
pub fn t_fixed_point(
    scheme: SchemeId,
    rho: f64,
    lambdas: [f64; 2],
    mus: [f64; 2],
    beta: f64,
    epsilon: f64,
) -> Result<[f64; 2]> {
    check_positive("rho", rho)?;
    check_positive("beta", beta)?;
    check_epsilon(epsilon)?;
    if lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::Argument("dual powers must be nonnegative".into()));
    }
    if scheme == SchemeId::Mcp && mus.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::Argument("noise duals must be positive".into()));
    }
    let [l1, l2] = lambdas;
    let [m1, m2] = mus;
    let map = |t: [f64; 2]| -> [f64; 2] {
        match scheme {
            SchemeId::Scp => [
                1.0 / (rho + beta * l1 / (1.0 + l1 * t[0])),
                1.0 / (rho + beta * l2 / (1.0 + l2 * t[1])),
            ],
            SchemeId::Cbf => [
                1.0 / (rho + beta * l1 / (1.0 + l1 * t[0]) + beta * epsilon * l2 / (1.0 + epsilon * l2 * t[0])),
                1.0 / (rho + beta * l2 / (1.0 + l2 * t[1]) + beta * epsilon * l1 / (1.0 + epsilon * l1 * t[1])),
            ],
            SchemeId::Mcp => {
                let own_j = 1.0 + l1 / m1 * t[0] + epsilon * l1 / m2 * t[1];
                let own_jb = 1.0 + epsilon * l2 / m1 * t[0] + l2 / m2 * t[1];
                [
                    1.0 / (rho + beta * l1 / m1 / own_j + epsilon * beta * l2 / m1 / own_jb),
                    1.0 / (rho + beta * epsilon * l1 / m2 / own_j + beta * l2 / m2 / own_jb),
                ]
            }
        }
    };
    let mut t = [1.0 / rho; 2];
    let mut residual = f64::INFINITY;
    for _ in 0..1_000_000 {
        let next = map(t);
        residual = (next[0] - t[0]).abs().max((next[1] - t[1]).abs()) / next[0].max(next[1]);
        t = next;
        if residual <= 1e-15 {
            return Ok(t);
        }
    }
    if residual <= 1e-12 {
        Ok(t)
    } else {
        Err(Error::NotConverged {
            iterations: 1_000_000,
            residual,
        })
    }
}

/// Finite-N beamformers built from the limiting regulariser `λ̄` with uniform
/// powers `p̄`: RZF (SCP), generalised RZF over every other user seen from the
/// serving BS (CBf), and joint RZF over both arrays (MCP). MCP powers are
/// scaled down by a common factor when either BS would exceed `P`.
pub fn asymptotic_beamformers(
    scheme: SchemeId,
    channels: &ChannelSet,
    gamma: f64,
    config: &SystemConfig,
) -> Result<PrecodingSolution> {
    let beta = config.beta();
    let eps = config.epsilon();
    let lam = lambda_bar(scheme, gamma, beta, eps)?;
    let p = p_bar(scheme, gamma, beta, eps, config.sigma2())?;
    let users = channels.total_users();
    let model = UplinkModel::for_scheme(scheme, channels, [1.0, 1.0])?;
    let directions = model.directions(&vec![lam; users])?;
    let gains = DownlinkGains::new(scheme.layout(), channels, &directions)?;

    let n = channels.n_antennas() as f64;
    let mut x = vec![p / n; users];
    if scheme == SchemeId::Mcp {
        let per_bs = gains.per_bs_power(&x);
        let worst = per_bs[0].max(per_bs[1]);
        if worst > config.power() {
            let scale = config.power() / worst;
            x.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Ok(assemble(
        scheme,
        &gains,
        directions,
        &x,
        gamma,
        config.sigma2(),
        channels.n_antennas(),
        0,
    ))
}
