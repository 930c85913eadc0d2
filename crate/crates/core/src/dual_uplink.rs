//! Virtual-uplink (Lagrangian dual) solvers.
//!
//! For every scheme the optimal dual powers `λ_u` solve
//! `λ_u = γN / (g_uᴴ A_{-u}⁻¹ g_u)`, where `g_u` is user `u`'s signature at its
//! receiver and `A_{-u} = D + Σ_{v≠u} (λ_v/N) g_v g_vᴴ` is the noise-plus-
//! interference covariance seen there:
//!
//! | scheme | receiver of cell-`c` user | signatures seen there        | noise `D`          |
//! |--------|---------------------------|------------------------------|--------------------|
//! | SCP    | BS `c`                    | own-cell users, `h_{k,c,c}ᴴ` | `I_N`              |
//! | CBf    | BS `c`                    | all users, `h_{k',c',c}ᴴ`    | `μ_c I_N`          |
//! | MCP    | joint 2N array            | all users, `h̃_{k',c'}ᴴ`      | `diag(μ₀I, μ₁I)`   |
//!
//! The map is evaluated with one Cholesky factorisation of the full covariance
//! per receiver and a rank-one correction per user:
//! `g A_{-u}⁻¹ g = q / (1 − (λ_u/N) q)` with `q = g A⁻¹ g`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelBlock, ChannelSet, NUM_CELLS};
use crate::error::{Error, Result};
use crate::power::{DownlinkGains, Layout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeId {
    #[serde(rename = "SCP")]
    Scp,
    #[serde(rename = "CBF")]
    Cbf,
    #[serde(rename = "MCP")]
    Mcp,
}

impl SchemeId {
    pub const ALL: [SchemeId; 3] = [SchemeId::Scp, SchemeId::Cbf, SchemeId::Mcp];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeId::Scp => "SCP",
            SchemeId::Cbf => "CBF",
            SchemeId::Mcp => "MCP",
        }
    }

    pub(crate) fn layout(&self) -> Layout {
        match self {
            SchemeId::Scp | SchemeId::Cbf => Layout::PerCell,
            SchemeId::Mcp => Layout::Joint,
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scp" => Ok(SchemeId::Scp),
            "cbf" => Ok(SchemeId::Cbf),
            "mcp" => Ok(SchemeId::Mcp),
            other => Err(Error::Argument(format!("unknown scheme {other:?}"))),
        }
    }
}

/// How the noise duals (μ₁, μ₂) are located on the simplex μ₁ + μ₂ = 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MuSearchMethod {
    /// Root of the dual objective's derivative, which equals the difference of
    /// the two per-BS downlink powers. Bracketed regula falsi.
    #[default]
    EnvelopeGradient,
    /// Golden-section maximisation of the dual objective.
    GoldenSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Relative fixed-point residual at which a sweep counts as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// `λ ← (1−d)·I(λ) + d·λ`.
    pub damping: f64,
    #[serde(default)]
    pub mu_search: MuSearchMethod,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-10,
            max_iterations: 10_000,
            damping: 0.0,
            mu_search: MuSearchMethod::EnvelopeGradient,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Argument("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Argument("max_iterations must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Argument("damping must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Converged (or last) state of a dual-uplink fixed point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub scheme: SchemeId,
    pub gamma: f64,
    /// `λ_u`, users ordered `cell * K + k`; the uplink power of user `u` is `λ_u / N`.
    pub lambdas: Vec<f64>,
    pub mus: [f64; 2],
    /// `Σ λ_u / N`, the dual objective per unit noise power.
    #[serde(rename = "objective")]
    pub dual_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

pub const MU_LOWER: f64 = 1e-3;

const DIVERGENCE_FACTOR: f64 = 1e6;
const STALL_SWEEPS: usize = 50;

#[derive(Debug, Clone)]
struct Receiver {
    noise: DVector<f64>,
    /// Columns are the signatures `g_v` of the users in `users`.
    signatures: DMatrix<Complex64>,
    users: Vec<usize>,
}

/// The dual-uplink interference structure of one scheme on one channel draw.
#[derive(Debug, Clone)]
pub struct UplinkModel {
    scheme: SchemeId,
    n_antennas: usize,
    mus: [f64; 2],
    receivers: Vec<Receiver>,
    /// For each user: (receiver, column of its own signature there).
    home: Vec<(usize, usize)>,
    active: Vec<bool>,
}

impl UplinkModel {
    /// Single-cell SCP model for one own-cell block.
    pub fn scp_cell(block: &ChannelBlock) -> Self {
        let k = block.n_users();
        let n = block.n_antennas();
        UplinkModel {
            scheme: SchemeId::Scp,
            n_antennas: n,
            mus: [1.0, 1.0],
            receivers: vec![Receiver {
                noise: DVector::from_element(n, 1.0),
                signatures: block.adjoint().clone(),
                users: (0..k).collect(),
            }],
            home: (0..k).map(|kk| (0, kk)).collect(),
            active: vec![true; k],
        }
    }

    /// Both SCP cells side by side (they do not interact on the dual uplink).
    pub fn scp(channels: &ChannelSet) -> Self {
        let k = channels.n_users();
        let n = channels.n_antennas();
        let receivers = (0..NUM_CELLS)
            .map(|c| Receiver {
                noise: DVector::from_element(n, 1.0),
                signatures: channels.block(c, c).adjoint().clone(),
                users: (c * k..(c + 1) * k).collect(),
            })
            .collect();
        UplinkModel {
            scheme: SchemeId::Scp,
            n_antennas: n,
            mus: [1.0, 1.0],
            receivers,
            home: (0..2 * k).map(|u| (u / k, u % k)).collect(),
            active: vec![true; 2 * k],
        }
    }

    pub fn cbf(channels: &ChannelSet, mus: [f64; 2]) -> Result<Self> {
        check_mus(mus)?;
        let k = channels.n_users();
        let n = channels.n_antennas();
        let receivers = (0..NUM_CELLS)
            .map(|bs| {
                let mut signatures = DMatrix::zeros(n, 2 * k);
                for cell in 0..NUM_CELLS {
                    signatures
                        .columns_mut(cell * k, k)
                        .copy_from(channels.block(cell, bs).adjoint());
                }
                Receiver {
                    noise: DVector::from_element(n, mus[bs]),
                    signatures,
                    users: (0..2 * k).collect(),
                }
            })
            .collect();
        Ok(UplinkModel {
            scheme: SchemeId::Cbf,
            n_antennas: n,
            mus,
            receivers,
            home: (0..2 * k).map(|u| (u / k, u)).collect(),
            active: vec![true; 2 * k],
        })
    }

    pub fn mcp(channels: &ChannelSet, mus: [f64; 2]) -> Result<Self> {
        check_mus(mus)?;
        let k = channels.n_users();
        let n = channels.n_antennas();
        let mut signatures = DMatrix::zeros(2 * n, 2 * k);
        for cell in 0..NUM_CELLS {
            for kk in 0..k {
                signatures.set_column(cell * k + kk, &channels.stacked_adjoint(kk, cell));
            }
        }
        let noise = DVector::from_fn(2 * n, |i, _| if i < n { mus[0] } else { mus[1] });
        Ok(UplinkModel {
            scheme: SchemeId::Mcp,
            n_antennas: n,
            mus,
            receivers: vec![Receiver {
                noise,
                signatures,
                users: (0..2 * k).collect(),
            }],
            home: (0..2 * k).map(|u| (0, u)).collect(),
            active: vec![true; 2 * k],
        })
    }

    pub fn for_scheme(scheme: SchemeId, channels: &ChannelSet, mus: [f64; 2]) -> Result<Self> {
        match scheme {
            SchemeId::Scp => Ok(Self::scp(channels)),
            SchemeId::Cbf => Self::cbf(channels, mus),
            SchemeId::Mcp => Self::mcp(channels, mus),
        }
    }

    /// Drops every user not listed from both the interference sums and the
    /// SINR constraints; their dual powers stay at zero.
    pub fn restrict_to(mut self, users: &[usize]) -> Self {
        self.active = (0..self.home.len()).map(|u| users.contains(&u)).collect();
        self
    }

    pub fn scheme(&self) -> SchemeId {
        self.scheme
    }

    pub fn mus(&self) -> [f64; 2] {
        self.mus
    }

    pub fn n_users(&self) -> usize {
        self.home.len()
    }

    fn check_len(&self, lambdas: &[f64]) -> Result<()> {
        if lambdas.len() != self.n_users() {
            return Err(Error::Dimension(format!(
                "expected {} dual powers, got {}",
                self.n_users(),
                lambdas.len()
            )));
        }
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Argument("dual powers must be finite and nonnegative".into()));
        }
        Ok(())
    }

    fn covariance(&self, r: usize, lambdas: &[f64], skip: Option<usize>) -> DMatrix<Complex64> {
        let rx = &self.receivers[r];
        let inv_n = 1.0 / self.n_antennas as f64;
        let (rows, cols) = rx.signatures.shape();
        let mut re = DMatrix::<f64>::zeros(rows, cols);
        let mut im = DMatrix::<f64>::zeros(rows, cols);
        for (col, &v) in rx.users.iter().enumerate() {
            let w = if self.active[v] && Some(v) != skip {
                (lambdas[v] * inv_n).sqrt()
            } else {
                0.0
            };
            for (i, z) in rx.signatures.column(col).iter().enumerate() {
                re[(col * rows) + i] = w * z.re;
                im[(col * rows) + i] = w * z.im;
            }
        }
        // S Sᴴ from real products: (R + iJ)(R − iJ)ᵀ = RRᵀ + JJᵀ + i(JRᵀ − RJᵀ).
        let (re_t, im_t) = (re.transpose(), im.transpose());
        let real = &re * &re_t + &im * &im_t;
        let imag = &im * &re_t - &re * &im_t;
        DMatrix::from_fn(rows, rows, |i, j| {
            let d = if i == j { rx.noise[i] } else { 0.0 };
            Complex64::new(real[(i, j)] + d, imag[(i, j)])
        })
    }

    fn cholesky(&self, r: usize, lambdas: &[f64]) -> Result<Cholesky<Complex64, Dyn>> {
        self.covariance(r, lambdas, None)
            .cholesky()
            .ok_or_else(|| Error::Infeasible("uplink covariance not positive definite".into()))
    }

    /// `A⁻¹ G` for every receiver.
    fn whitened(&self, lambdas: &[f64]) -> Result<Vec<DMatrix<Complex64>>> {
        (0..self.receivers.len())
            .map(|r| Ok(self.cholesky(r, lambdas)?.solve(&self.receivers[r].signatures)))
            .collect()
    }

    /// `g_uᴴ A_{-u}⁻¹ g_u` for every active user (0 for inactive ones).
    fn excluded_quadratic_forms(&self, lambdas: &[f64]) -> Result<Vec<f64>> {
        let inv_n = 1.0 / self.n_antennas as f64;
        // gᴴA⁻¹g = ‖L⁻¹g‖² with A = LLᴴ.
        let half: Vec<DMatrix<Complex64>> = (0..self.receivers.len())
            .map(|r| {
                let mut y = self.receivers[r].signatures.clone();
                if !self.cholesky(r, lambdas)?.l_dirty().solve_lower_triangular_mut(&mut y) {
                    return Err(Error::Infeasible("singular uplink covariance".into()));
                }
                Ok(y)
            })
            .collect::<Result<_>>()?;
        Ok(self
            .home
            .iter()
            .enumerate()
            .map(|(u, &(r, col))| {
                if !self.active[u] {
                    return 0.0;
                }
                let q = half[r].column(col).norm_squared();
                q / (1.0 - lambdas[u] * inv_n * q)
            })
            .collect())
    }

    /// The fixed-point map `I_u(λ) = γN / (g_uᴴ A_{-u}⁻¹ g_u)`.
    pub fn interference_map(&self, lambdas: &[f64], gamma: f64) -> Result<Vec<f64>> {
        self.check_len(lambdas)?;
        let n = self.n_antennas as f64;
        let q = self.excluded_quadratic_forms(lambdas)?;
        self.map_from_forms(&q, gamma, n)
    }

    fn map_from_forms(&self, q: &[f64], gamma: f64, n: f64) -> Result<Vec<f64>> {
        q.iter()
            .enumerate()
            .map(|(u, &qu)| {
                if !self.active[u] {
                    Ok(0.0)
                } else if qu > 0.0 && qu.is_finite() {
                    Ok(gamma * n / qu)
                } else {
                    Err(Error::Infeasible(format!("user {u} has no usable channel")))
                }
            })
            .collect()
    }

    /// Reference evaluation of the same map: one explicit covariance and
    /// solve per user.
    pub fn interference_map_direct(&self, lambdas: &[f64], gamma: f64) -> Result<Vec<f64>> {
        self.check_len(lambdas)?;
        let n = self.n_antennas as f64;
        let q: Vec<f64> = (0..self.n_users())
            .map(|u| {
                if !self.active[u] {
                    return Ok(0.0);
                }
                let (r, col) = self.home[u];
                let a = self.covariance(r, lambdas, Some(u));
                let g = self.receivers[r].signatures.column(col).clone_owned();
                let z = a
                    .lu()
                    .solve(&g)
                    .ok_or_else(|| Error::Infeasible("singular covariance".into()))?;
                Ok(g.dotc(&z).re)
            })
            .collect::<Result<_>>()?;
        self.map_from_forms(&q, gamma, n)
    }

    /// Uplink SINR of every user under MMSE reception, `(λ_u/N) g_uᴴ A_{-u}⁻¹ g_u`.
    pub fn uplink_sinrs(&self, lambdas: &[f64]) -> Result<Vec<f64>> {
        self.check_len(lambdas)?;
        let inv_n = 1.0 / self.n_antennas as f64;
        let q = self.excluded_quadratic_forms(lambdas)?;
        Ok(q.iter().zip(lambdas).map(|(q, l)| l * inv_n * q).collect())
    }

    /// Unit-norm MMSE receive directions. `A_{-u}⁻¹ g_u` and `A⁻¹ g_u` are
    /// collinear, so the shared inverse is used.
    pub fn directions(&self, lambdas: &[f64]) -> Result<Vec<DVector<Complex64>>> {
        self.check_len(lambdas)?;
        let solved = self.whitened(lambdas)?;
        self.home
            .iter()
            .map(|&(r, col)| {
                let z = solved[r].column(col).clone_owned();
                let norm = z.norm();
                if norm > 0.0 && norm.is_finite() {
                    Ok(z / Complex64::new(norm, 0.0))
                } else {
                    Err(Error::Infeasible("zero receive direction".into()))
                }
            })
            .collect()
    }

    fn divergence_cap(&self, gamma: f64) -> f64 {
        let max_noise = self
            .receivers
            .iter()
            .flat_map(|rx| rx.noise.iter().copied())
            .fold(0.0, f64::max);
        let min_norm = self
            .home
            .iter()
            .enumerate()
            .filter(|(u, _)| self.active[*u])
            .map(|(_, &(r, col))| self.receivers[r].signatures.column(col).norm_squared())
            .fold(f64::INFINITY, f64::min);
        DIVERGENCE_FACTOR * gamma * self.n_antennas as f64 * max_noise / min_norm
    }

    /// Jacobi iteration of the interference map from `init` (zeros by default).
    pub fn solve(&self, gamma: f64, init: Option<&[f64]>, settings: &SolverSettings) -> Result<DualSolution> {
        self.solve_capped(gamma, init, settings, None)
    }

    /// As [`solve`](Self::solve); additionally reports infeasibility as soon as
    /// `Σλ/N` exceeds `objective_cap` while the iterates are still increasing
    /// componentwise (every later iterate, and the fixed point, is larger).
    pub(crate) fn solve_capped(
        &self,
        gamma: f64,
        init: Option<&[f64]>,
        settings: &SolverSettings,
        objective_cap: Option<f64>,
    ) -> Result<DualSolution> {
        settings.validate()?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Argument(format!("gamma must be positive, got {gamma}")));
        }
        let m = self.n_users();
        let n = self.n_antennas as f64;
        let mut lambdas = match init {
            Some(l) => {
                self.check_len(l)?;
                l.iter()
                    .zip(&self.active)
                    .map(|(v, a)| if *a { *v } else { 0.0 })
                    .collect()
            }
            None => vec![0.0; m],
        };
        let cap = self.divergence_cap(gamma);
        let d = settings.damping;

        let mut monotone = true;
        let mut best_residual = f64::INFINITY;
        let mut since_best = 0usize;
        let mut residual = f64::INFINITY;
        for iter in 1..=settings.max_iterations {
            let mapped = self.interference_map(&lambdas, gamma)?;
            let next: Vec<f64> = mapped
                .iter()
                .zip(&lambdas)
                .map(|(i, l)| (1.0 - d) * i + d * l)
                .collect();

            let previous = residual;
            residual = next
                .iter()
                .zip(&lambdas)
                .map(|(a, b)| if *a > 0.0 { (a - b).abs() / a } else { 0.0 })
                .fold(0.0, f64::max);
            monotone &= next.iter().zip(&lambdas).all(|(a, b)| *a >= *b);
            let grew = next.iter().sum::<f64>() > lambdas.iter().sum::<f64>();
            lambdas = next;

            if lambdas.iter().any(|l| !l.is_finite()) {
                return Err(Error::Infeasible("dual powers became non-finite".into()));
            }
            if lambdas.iter().cloned().fold(0.0, f64::max) > cap {
                return Err(Error::Infeasible(format!(
                    "dual powers exceeded divergence cap {cap:.3e} at sweep {iter}"
                )));
            }
            if let Some(limit) = objective_cap {
                if monotone && lambdas.iter().sum::<f64>() / n > limit {
                    return Err(Error::Infeasible("dual objective exceeds power budget".into()));
                }
            }
            // Distance to the fixed point, estimated from the observed contraction.
            let rate = (residual / previous).min(0.999);
            let error = if rate.is_finite() { residual / (1.0 - rate) } else { residual };
            if error <= settings.tolerance {
                return Ok(self.wrap(gamma, lambdas, iter, true, residual));
            }
            if residual < best_residual {
                best_residual = residual;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= STALL_SWEEPS && grew {
                    return Err(Error::Infeasible(format!(
                        "fixed point stalled at residual {residual:.3e} with growing powers"
                    )));
                }
            }
        }
        Err(Error::NotConverged {
            iterations: settings.max_iterations,
            residual,
        })
    }

    fn wrap(&self, gamma: f64, lambdas: Vec<f64>, iterations: usize, converged: bool, residual: f64) -> DualSolution {
        let dual_objective = lambdas.iter().sum::<f64>() / self.n_antennas as f64;
        DualSolution {
            scheme: self.scheme,
            gamma,
            lambdas,
            mus: self.mus,
            dual_objective,
            iterations,
            converged,
            residual,
        }
    }
}

fn check_mus(mus: [f64; 2]) -> Result<()> {
    if mus.iter().all(|m| *m > 0.0 && m.is_finite()) {
        Ok(())
    } else {
        Err(Error::Argument(format!("noise duals must be positive, got {mus:?}")))
    }
}

/// SCP dual powers of one cell from its own-cell block.
pub fn scp_dual_powers(block: &ChannelBlock, gamma: f64, settings: &SolverSettings) -> Result<DualSolution> {
    UplinkModel::scp_cell(block).solve(gamma, None, settings)
}

/// SCP dual powers of both cells, each solved independently.
pub fn scp_dual_powers_network(channels: &ChannelSet, gamma: f64, settings: &SolverSettings) -> Result<DualSolution> {
    scp_network_capped(channels, gamma, settings, None)
}

pub(crate) fn scp_network_capped(
    channels: &ChannelSet,
    gamma: f64,
    settings: &SolverSettings,
    per_cell_cap: Option<f64>,
) -> Result<DualSolution> {
    let mut lambdas = Vec::with_capacity(channels.total_users());
    let mut iterations = 0;
    let mut residual: f64 = 0.0;
    for c in 0..NUM_CELLS {
        let cell = UplinkModel::scp_cell(channels.block(c, c)).solve_capped(gamma, None, settings, per_cell_cap)?;
        iterations = iterations.max(cell.iterations);
        residual = residual.max(cell.residual);
        lambdas.extend(cell.lambdas);
    }
    Ok(UplinkModel::scp(channels).wrap(gamma, lambdas, iterations, true, residual))
}

/// Unit MMSE direction for `user` of an SCP cell.
pub fn scp_mmse_direction(block: &ChannelBlock, lambdas: &[f64], user: usize) -> Result<DVector<Complex64>> {
    if user >= block.n_users() {
        return Err(Error::Range {
            what: "user",
            index: user,
            len: block.n_users(),
        });
    }
    let mut dirs = UplinkModel::scp_cell(block).directions(lambdas)?;
    Ok(dirs.swap_remove(user))
}

pub fn cbf_dual_powers(
    channels: &ChannelSet,
    gamma: f64,
    mus: [f64; 2],
    settings: &SolverSettings,
) -> Result<DualSolution> {
    UplinkModel::cbf(channels, mus)?.solve(gamma, None, settings)
}

pub fn mcp_dual_powers(
    channels: &ChannelSet,
    gamma: f64,
    mus: [f64; 2],
    settings: &SolverSettings,
) -> Result<DualSolution> {
    UplinkModel::mcp(channels, mus)?.solve(gamma, None, settings)
}

pub fn cbf_mu_search(channels: &ChannelSet, gamma: f64, settings: &SolverSettings) -> Result<([f64; 2], DualSolution)> {
    let out = mu_search(SchemeId::Cbf, channels, gamma, settings, None, None)?;
    Ok((out.dual.mus, out.dual))
}

pub fn mcp_mu_search(channels: &ChannelSet, gamma: f64, settings: &SolverSettings) -> Result<([f64; 2], DualSolution)> {
    let out = mu_search(SchemeId::Mcp, channels, gamma, settings, None, None)?;
    Ok((out.dual.mus, out.dual))
}

/// Uplink SINR of one user, evaluated from an explicitly assembled
/// interference-plus-noise covariance.
pub fn uplink_sinr(
    scheme: SchemeId,
    channels: &ChannelSet,
    lambdas: &[f64],
    mus: [f64; 2],
    user: usize,
    cell: usize,
) -> Result<f64> {
    if cell >= NUM_CELLS {
        return Err(Error::Range {
            what: "cell",
            index: cell,
            len: NUM_CELLS,
        });
    }
    if user >= channels.n_users() {
        return Err(Error::Range {
            what: "user",
            index: user,
            len: channels.n_users(),
        });
    }
    let model = UplinkModel::for_scheme(scheme, channels, mus)?;
    model.check_len(lambdas)?;
    let u = cell * channels.n_users() + user;
    let (r, col) = model.home[u];
    let a = model.covariance(r, lambdas, Some(u));
    let g = model.receivers[r].signatures.column(col).clone_owned();
    let z = a
        .lu()
        .solve(&g)
        .ok_or_else(|| Error::Infeasible("singular covariance".into()))?;
    Ok(lambdas[u] / channels.n_antennas() as f64 * g.dotc(&z).re)
}

/// First bracketing step in μ₁, from the default start and from a warm hint.
const COLD_MU_STEP: f64 = 0.05;
const WARM_MU_STEP: f64 = 0.004;

#[derive(Debug, Clone)]
pub(crate) struct MuSearchOutcome {
    pub dual: DualSolution,
    pub directions: Vec<DVector<Complex64>>,
}

#[derive(Debug, Clone)]
struct MuPoint {
    mu: f64,
    dual: DualSolution,
    directions: Vec<DVector<Complex64>>,
    powers: [f64; 2],
}

impl MuPoint {
    fn grad(&self) -> f64 {
        self.powers[0] - self.powers[1]
    }
}

struct MuEvaluator<'a> {
    scheme: SchemeId,
    channels: &'a ChannelSet,
    gamma: f64,
    settings: &'a SolverSettings,
    cap: Option<f64>,
    warm: Option<(f64, Vec<f64>)>,
}

impl MuEvaluator<'_> {
    fn eval(&mut self, mu: f64) -> Result<MuPoint> {
        let mus = [mu, 2.0 - mu];
        let model = UplinkModel::for_scheme(self.scheme, self.channels, mus)?;
        let init = self.warm.as_ref().map(|(_, l)| l.as_slice());
        let dual = match model.solve_capped(self.gamma, init, self.settings, self.cap) {
            Ok(d) => d,
            // A warm start far from the new fixed point can trip the stall
            // detector; retry once from zero.
            Err(Error::Infeasible(_)) if init.is_some() && self.cap.is_none() => {
                model.solve_capped(self.gamma, None, self.settings, None)?
            }
            Err(e) => return Err(e),
        };
        let directions = model.directions(&dual.lambdas)?;
        let gains = DownlinkGains::new(self.scheme.layout(), self.channels, &directions)?;
        let x = gains.solve_joint(self.gamma, 1.0)?;
        let powers = gains.per_bs_power(&x);
        self.warm = Some((mu, dual.lambdas.clone()));
        Ok(MuPoint {
            mu,
            dual,
            directions,
            powers,
        })
    }
}

/// Maximises the dual objective over μ₁ ∈ [μ_lo, 2 − μ_lo], μ₂ = 2 − μ₁.
///
/// The objective is concave in μ₁ and its derivative is `P₁ − P₂`, the
/// difference of per-BS downlink powers obtained with the current MMSE
/// directions.
pub(crate) fn mu_search(
    scheme: SchemeId,
    channels: &ChannelSet,
    gamma: f64,
    settings: &SolverSettings,
    hint: Option<(f64, &[f64])>,
    objective_cap: Option<f64>,
) -> Result<MuSearchOutcome> {
    if scheme == SchemeId::Scp {
        return Err(Error::Argument("SCP has no noise duals to search".into()));
    }
    let (lo, hi) = (MU_LOWER, 2.0 - MU_LOWER);
    let start = hint.map(|(m, _)| m.clamp(lo, hi)).unwrap_or(1.0);
    let mut ev = MuEvaluator {
        scheme,
        channels,
        gamma,
        settings,
        cap: objective_cap,
        warm: hint.map(|(m, l)| (m, l.to_vec())),
    };

    let best = match settings.mu_search {
        MuSearchMethod::EnvelopeGradient => {
            let step = if hint.is_some() { WARM_MU_STEP } else { COLD_MU_STEP };
            gradient_search(&mut ev, start, step, lo, hi)?
        }
        MuSearchMethod::GoldenSection => golden_search(&mut ev, lo, hi)?,
    };
    Ok(MuSearchOutcome {
        dual: best.dual,
        directions: best.directions,
    })
}

fn gradient_search(ev: &mut MuEvaluator<'_>, start: f64, mut step: f64, lo: f64, hi: f64) -> Result<MuPoint> {
    let first = ev.eval(start)?;
    let scale = |p: &MuPoint| p.powers[0] + p.powers[1];
    let done = |p: &MuPoint| p.grad().abs() <= 1e-13 * scale(p);
    if done(&first) {
        return Ok(first);
    }

    // Bracket the sign change of the (decreasing) derivative.
    let (mut left, mut right);
    if first.grad() > 0.0 {
        left = first;
        loop {
            let x = (left.mu + step).min(hi);
            let p = ev.eval(x)?;
            if p.grad() <= 0.0 {
                right = p;
                break;
            }
            if x >= hi {
                return Ok(p);
            }
            left = p;
            step *= 2.0;
        }
    } else {
        right = first;
        loop {
            let x = (right.mu - step).max(lo);
            let p = ev.eval(x)?;
            if p.grad() >= 0.0 {
                left = p;
                break;
            }
            if x <= lo {
                return Ok(p);
            }
            right = p;
            step *= 2.0;
        }
    }

    // Illinois regula falsi on the derivative.
    let (mut gl, mut gr) = (left.grad(), right.grad());
    let mut side = 0i8;
    for _ in 0..200 {
        if done(&left) {
            return Ok(left);
        }
        if done(&right) {
            return Ok(right);
        }
        if right.mu - left.mu <= 1e-14 {
            break;
        }
        let mut x = left.mu + gl * (right.mu - left.mu) / (gl - gr);
        let width = right.mu - left.mu;
        if !(x > left.mu && x < right.mu) {
            x = 0.5 * (left.mu + right.mu);
        }
        x = x.clamp(left.mu + 1e-3 * width.min(1e-9), right.mu - 1e-3 * width.min(1e-9));
        let p = ev.eval(x)?;
        if p.grad() > 0.0 {
            left = p;
            gl = left.grad();
            if side == 1 {
                gr *= 0.5;
            }
            side = 1;
        } else {
            right = p;
            gr = right.grad();
            if side == -1 {
                gl *= 0.5;
            }
            side = -1;
        }
    }
    Ok(if left.grad().abs() <= right.grad().abs() { left } else { right })
}

fn golden_search(ev: &mut MuEvaluator<'_>, lo: f64, hi: f64) -> Result<MuPoint> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    const WIDTH: f64 = 1e-7;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut pc = ev.eval(c)?;
    let mut pd = ev.eval(d)?;
    while b - a > WIDTH {
        if pc.dual.dual_objective >= pd.dual.dual_objective {
            b = d;
            d = c;
            pd = pc;
            c = b - INV_PHI * (b - a);
            pc = ev.eval(c)?;
        } else {
            a = c;
            c = d;
            pc = pd;
            d = a + INV_PHI * (b - a);
            pd = ev.eval(d)?;
        }
    }
    Ok(if pc.dual.dual_objective >= pd.dual.dual_objective { pc } else { pd })
}
