//! Scenario parameters and the symmetric two-cell Rayleigh channel model.
//!
//! Cells and base stations are indexed `0` and `1`. Block `(c, b)` holds the
//! channels from BS `b` to the users of cell `c`; it is an own-cell block when
//! `c == b` (unit-variance entries) and a cross block otherwise (variance ε).

use std::path::Path;

use nalgebra::{DMatrix, DVector, DVectorView};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CELLS: usize = 2;

/// Index of the other cell.
#[inline]
pub fn other(cell: usize) -> usize {
    1 - cell
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct SystemConfig {
    n_antennas: usize,
    n_users: usize,
    epsilon: f64,
    sigma2: f64,
    power: f64,
    seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_antennas: usize,
    n_users: usize,
    epsilon: f64,
    sigma2: f64,
    power: f64,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<RawConfig> for SystemConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        SystemConfig::new(
            raw.n_antennas,
            raw.n_users,
            raw.epsilon,
            raw.sigma2,
            raw.power,
            raw.seed,
        )
    }
}

impl From<SystemConfig> for RawConfig {
    fn from(c: SystemConfig) -> Self {
        RawConfig {
            n_antennas: c.n_antennas,
            n_users: c.n_users,
            epsilon: c.epsilon,
            sigma2: c.sigma2,
            power: c.power,
            seed: c.seed,
        }
    }
}

impl SystemConfig {
    pub fn new(
        n_antennas: usize,
        n_users: usize,
        epsilon: f64,
        sigma2: f64,
        power: f64,
        seed: u64,
    ) -> Result<Self> {
        if n_antennas == 0 {
            return Err(Error::Config("n_antennas must be at least 1".into()));
        }
        if n_users == 0 {
            return Err(Error::Config("n_users must be at least 1".into()));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::Config(format!("sigma2 must be > 0, got {sigma2}")));
        }
        if !(power.is_finite() && power > 0.0) {
            return Err(Error::Config(format!("power must be > 0, got {power}")));
        }
        Ok(SystemConfig {
            n_antennas,
            n_users,
            epsilon,
            sigma2,
            power,
            seed,
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Cell loading K/N.
    pub fn beta(&self) -> f64 {
        self.n_users as f64 / self.n_antennas as f64
    }

    /// P/σ².
    pub fn snr(&self) -> f64 {
        self.power / self.sigma2
    }

    pub fn with_users(self, n_users: usize) -> Result<Self> {
        Self::new(self.n_antennas, n_users, self.epsilon, self.sigma2, self.power, self.seed)
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<Self> {
        Self::new(self.n_antennas, self.n_users, epsilon, self.sigma2, self.power, self.seed)
    }

    pub fn with_power(self, power: f64) -> Result<Self> {
        Self::new(self.n_antennas, self.n_users, self.epsilon, self.sigma2, power, self.seed)
    }

    /// Parses either a JSON object or `key = value` lines (`#` starts a comment).
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            return serde_json::from_str(trimmed).map_err(|e| Error::Config(e.to_string()));
        }

        let mut n_antennas = None;
        let mut n_users = None;
        let mut epsilon = None;
        let mut sigma2 = None;
        let mut power = None;
        let mut seed = 0u64;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| {
                Error::Config(format!("line {}: bad value for {key}: {e}", lineno + 1))
            };
            match key {
                "n_antennas" => n_antennas = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
                "n_users" => n_users = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
                "epsilon" => epsilon = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
                "sigma2" => sigma2 = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
                "power" => power = Some(value.parse::<f64>().map_err(|e| bad(&e))?),
                "seed" => seed = value.parse::<u64>().map_err(|e| bad(&e))?,
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        let missing = |k: &str| Error::Config(format!("missing key {k}"));
        SystemConfig::new(
            n_antennas.ok_or_else(|| missing("n_antennas"))?,
            n_users.ok_or_else(|| missing("n_users"))?,
            epsilon.ok_or_else(|| missing("epsilon"))?,
            sigma2.ok_or_else(|| missing("sigma2"))?,
            power.ok_or_else(|| missing("power"))?,
            seed,
        )
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        Self::parse(&text)
    }
}

/// K×N channel block stored as its N×K adjoint, so each user's channel is one
/// contiguous column `h_kᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBlock {
    adj: DMatrix<Complex64>,
}

impl ChannelBlock {
    /// From a K×N matrix whose row k is `h_k`.
    pub fn from_rows(h: &DMatrix<Complex64>) -> Self {
        ChannelBlock { adj: h.adjoint() }
    }

    pub fn zeros(n_users: usize, n_antennas: usize) -> Self {
        ChannelBlock {
            adj: DMatrix::zeros(n_antennas, n_users),
        }
    }

    pub fn n_users(&self) -> usize {
        self.adj.ncols()
    }

    pub fn n_antennas(&self) -> usize {
        self.adj.nrows()
    }

    /// `h_kᴴ` as a column.
    pub fn user_adjoint(&self, k: usize) -> DVectorView<'_, Complex64> {
        self.adj.column(k)
    }

    /// Entries of the row vector `h_k`.
    pub fn user(&self, k: usize) -> DVector<Complex64> {
        self.adj.column(k).map(|z| z.conj())
    }

    /// The N×K matrix `Hᴴ`.
    pub fn adjoint(&self) -> &DMatrix<Complex64> {
        &self.adj
    }

    /// The K×N matrix `H`.
    pub fn to_rows(&self) -> DMatrix<Complex64> {
        self.adj.adjoint()
    }
}

/// One realisation of the four channel blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    n_antennas: usize,
    n_users: usize,
    // blocks[cell][bs]
    blocks: [[ChannelBlock; 2]; 2],
}

impl ChannelSet {
    /// Builds a channel set from explicit blocks, `blocks[cell][bs]` being K×N.
    pub fn from_blocks(blocks: [[DMatrix<Complex64>; 2]; 2]) -> Result<Self> {
        let (k, n) = blocks[0][0].shape();
        if k == 0 || n == 0 {
            return Err(Error::Dimension("channel blocks must be non-empty".into()));
        }
        for row in &blocks {
            for b in row {
                if b.shape() != (k, n) {
                    return Err(Error::Dimension(format!(
                        "all blocks must be {k}x{n}, found {}x{}",
                        b.nrows(),
                        b.ncols()
                    )));
                }
            }
        }
        let [[a, b], [c, d]] = blocks;
        Ok(ChannelSet {
            n_antennas: n,
            n_users: k,
            blocks: [
                [ChannelBlock::from_rows(&a), ChannelBlock::from_rows(&b)],
                [ChannelBlock::from_rows(&c), ChannelBlock::from_rows(&d)],
            ],
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn total_users(&self) -> usize {
        NUM_CELLS * self.n_users
    }

    /// Channels from BS `bs` to the users of `cell`.
    pub fn block(&self, cell: usize, bs: usize) -> &ChannelBlock {
        &self.blocks[cell][bs]
    }

    /// `h_{k,cell,bs}ᴴ` as a column of length N.
    pub fn adjoint_column(&self, user: usize, cell: usize, bs: usize) -> DVectorView<'_, Complex64> {
        self.blocks[cell][bs].user_adjoint(user)
    }

    fn check_user(&self, user: usize, cell: usize) -> Result<()> {
        if cell >= NUM_CELLS {
            return Err(Error::Range {
                what: "cell",
                index: cell,
                len: NUM_CELLS,
            });
        }
        if user >= self.n_users {
            return Err(Error::Range {
                what: "user",
                index: user,
                len: self.n_users,
            });
        }
        Ok(())
    }

    /// `h̃_{k,cell} = [h_{k,cell,0}, h_{k,cell,1}]`, length 2N.
    pub fn stacked_channel(&self, user: usize, cell: usize) -> Result<DVector<Complex64>> {
        self.check_user(user, cell)?;
        Ok(self.stacked_adjoint(user, cell).map(|z| z.conj()))
    }

    /// `h̃_{k,cell}ᴴ` as a column of length 2N. Indices must be in range.
    pub fn stacked_adjoint(&self, user: usize, cell: usize) -> DVector<Complex64> {
        let n = self.n_antennas;
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&self.blocks[cell][0].user_adjoint(user));
        out.rows_mut(n, n).copy_from(&self.blocks[cell][1].user_adjoint(user));
        out
    }

    /// Same channels with both cross blocks replaced by zeros.
    pub fn without_cross_blocks(&self) -> ChannelSet {
        let mut out = self.clone();
        out.blocks[0][1] = ChannelBlock::zeros(self.n_users, self.n_antennas);
        out.blocks[1][0] = ChannelBlock::zeros(self.n_users, self.n_antennas);
        out
    }

    /// Swaps the roles of the two cells (and BSs).
    pub fn swap_cells(&self) -> ChannelSet {
        let b = &self.blocks;
        ChannelSet {
            n_antennas: self.n_antennas,
            n_users: self.n_users,
            blocks: [
                [b[1][1].clone(), b[1][0].clone()],
                [b[0][1].clone(), b[0][0].clone()],
            ],
        }
    }
}

/// Draws one channel realisation.
///
/// The generator is ChaCha20 seeded from `config.seed()` with `stream_id`
/// selecting an independent keystream, so draws are reproducible and can be
/// produced in any order. Entries are filled block by block in the order
/// (0,0), (0,1), (1,0), (1,1), user-major, real part before imaginary part.
pub fn sample_channels(config: &SystemConfig, stream_id: u64) -> ChannelSet {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed());
    rng.set_stream(stream_id);

    let (k, n) = (config.n_users(), config.n_antennas());
    let mut fill = |variance: f64| {
        let scale = (variance / 2.0).sqrt();
        let mut adj = DMatrix::<Complex64>::zeros(n, k);
        for user in 0..k {
            for ant in 0..n {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                if scale > 0.0 {
                    // stored conjugated: column k is h_kᴴ
                    adj[(ant, user)] = Complex64::new(re * scale, -im * scale);
                }
            }
        }
        ChannelBlock { adj }
    };

    let eps = config.epsilon();
    let b00 = fill(1.0);
    let b01 = fill(eps);
    let b10 = fill(eps);
    let b11 = fill(1.0);
    ChannelSet {
        n_antennas: n,
        n_users: k,
        blocks: [[b00, b01], [b10, b11]],
    }
}

#[derive(Serialize, Deserialize)]
struct RawChannelSet {
    n_antennas: usize,
    n_users: usize,
    /// blocks[cell][bs][user][antenna] = [re, im] of h_{user,cell,bs}
    blocks: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
}

impl Serialize for ChannelSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let blocks = (0..NUM_CELLS)
            .map(|c| {
                (0..NUM_CELLS)
                    .map(|b| {
                        let rows = self.blocks[c][b].to_rows();
                        (0..self.n_users)
                            .map(|k| (0..self.n_antennas).map(|a| [rows[(k, a)].re, rows[(k, a)].im]).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        RawChannelSet {
            n_antennas: self.n_antennas,
            n_users: self.n_users,
            blocks,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ChannelSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawChannelSet::deserialize(d)?;
        let (k, n) = (raw.n_users, raw.n_antennas);
        if raw.blocks.len() != NUM_CELLS || raw.blocks.iter().any(|r| r.len() != NUM_CELLS) {
            return Err(D::Error::custom("expected 2x2 blocks"));
        }
        let mut mats: Vec<DMatrix<Complex64>> = Vec::with_capacity(4);
        for row in &raw.blocks {
            for block in row {
                if block.len() != k || block.iter().any(|u| u.len() != n) {
                    return Err(D::Error::custom(format!("every block must be {k}x{n}")));
                }
                mats.push(DMatrix::from_fn(k, n, |r, c| {
                    let [re, im] = block[r][c];
                    Complex64::new(re, im)
                }));
            }
        }
        let mut it = mats.into_iter();
        let mut next = || it.next().unwrap();
        ChannelSet::from_blocks([[next(), next()], [next(), next()]]).map_err(D::Error::custom)
    }
}
