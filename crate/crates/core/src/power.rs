//! Downlink coupling gains and SINR-balancing power solves for fixed
//! beamforming directions.
//!
//! Users are indexed globally as `cell * K + k`. Powers are handled in the
//! per-user form `x = p / N`, the actual transmit power of the user's beam.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{ChannelSet, NUM_CELLS};
use crate::error::{Error, Result};

/// How directions map onto transmit antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Layout {
    /// Length-N direction transmitted by the serving BS only.
    PerCell,
    /// Length-2N direction over both BS arrays.
    Joint,
}

/// `gains[(u, v)] = |h_{u ← tx(v)} w_v|²` plus each beam's per-BS energy split.
#[derive(Debug, Clone)]
pub(crate) struct DownlinkGains {
    pub n_users: usize,
    pub gains: DMatrix<f64>,
    pub bs_share: Vec<[f64; 2]>,
}

impl DownlinkGains {
    pub fn new(layout: Layout, channels: &ChannelSet, directions: &[DVector<Complex64>]) -> Result<Self> {
        let k = channels.n_users();
        let n = channels.n_antennas();
        let total = channels.total_users();
        if directions.len() != total {
            return Err(Error::Dimension(format!(
                "expected {total} directions, got {}",
                directions.len()
            )));
        }
        let want = match layout {
            Layout::PerCell => n,
            Layout::Joint => 2 * n,
        };
        if let Some(bad) = directions.iter().find(|d| d.len() != want) {
            return Err(Error::Dimension(format!(
                "direction length {} does not match {want}",
                bad.len()
            )));
        }

        let mut gains = DMatrix::zeros(total, total);
        let mut bs_share = vec![[0.0; 2]; total];
        match layout {
            Layout::PerCell => {
                for bs in 0..NUM_CELLS {
                    // Channels from this BS to every user, as columns h_uᴴ.
                    let mut seen = DMatrix::<Complex64>::zeros(n, total);
                    for cell in 0..NUM_CELLS {
                        seen.columns_mut(cell * k, k)
                            .copy_from(channels.block(cell, bs).adjoint());
                    }
                    let mut beams = DMatrix::<Complex64>::zeros(n, k);
                    for kk in 0..k {
                        beams.set_column(kk, &directions[bs * k + kk]);
                    }
                    let coupling = seen.ad_mul(&beams);
                    for u in 0..total {
                        for kk in 0..k {
                            gains[(u, bs * k + kk)] = coupling[(u, kk)].norm_sqr();
                        }
                    }
                    for kk in 0..k {
                        let mut share = [0.0; 2];
                        share[bs] = directions[bs * k + kk].norm_squared();
                        bs_share[bs * k + kk] = share;
                    }
                }
            }
            Layout::Joint => {
                let mut seen = DMatrix::<Complex64>::zeros(2 * n, total);
                for cell in 0..NUM_CELLS {
                    for kk in 0..k {
                        seen.set_column(cell * k + kk, &channels.stacked_adjoint(kk, cell));
                    }
                }
                let mut beams = DMatrix::<Complex64>::zeros(2 * n, total);
                for (v, d) in directions.iter().enumerate() {
                    beams.set_column(v, d);
                }
                let coupling = seen.ad_mul(&beams);
                gains = coupling.map(|z| z.norm_sqr());
                for (v, d) in directions.iter().enumerate() {
                    bs_share[v] = [d.rows(0, n).norm_squared(), d.rows(n, n).norm_squared()];
                }
            }
        }
        Ok(DownlinkGains {
            n_users: total,
            gains,
            bs_share,
        })
    }

    /// Solves `x_u G_uu / γ − Σ_{v≠u} x_v G_uv = noise` for all users jointly.
    pub fn solve_joint(&self, gamma: f64, noise: f64) -> Result<Vec<f64>> {
        let users: Vec<usize> = (0..self.n_users).collect();
        let rhs = vec![noise; self.n_users];
        self.solve_subset(&users, gamma, &rhs)
    }

    /// Same system restricted to `users`, with a per-user right-hand side.
    pub fn solve_subset(&self, users: &[usize], gamma: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        let m = users.len();
        let a = DMatrix::from_fn(m, m, |r, c| {
            let (u, v) = (users[r], users[c]);
            if r == c {
                self.gains[(u, u)] / gamma
            } else {
                -self.gains[(u, v)]
            }
        });
        let b = DVector::from_column_slice(rhs);
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Infeasible("singular downlink power system".into()))?;
        if x.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Infeasible(
                "downlink power solution is negative or non-finite".into(),
            ));
        }
        Ok(x.iter().copied().collect())
    }

    /// Interference received by `u` from the beams of `others`.
    pub fn cross_interference(&self, u: usize, others: &[usize], x: &[f64]) -> f64 {
        others.iter().map(|&v| self.gains[(u, v)] * x[v]).sum()
    }

    pub fn per_bs_power(&self, x: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (share, xv) in self.bs_share.iter().zip(x) {
            out[0] += share[0] * xv;
            out[1] += share[1] * xv;
        }
        out
    }

    pub fn sinrs(&self, x: &[f64], noise: f64) -> Vec<f64> {
        (0..self.n_users)
            .map(|u| {
                let interference: f64 = (0..self.n_users)
                    .filter(|&v| v != u)
                    .map(|v| self.gains[(u, v)] * x[v])
                    .sum();
                self.gains[(u, u)] * x[u] / (noise + interference)
            })
            .collect()
    }
}
