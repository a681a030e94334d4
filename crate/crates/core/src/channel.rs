//! Flat Rayleigh-fading multi-user channels and the SNR-to-noise mapping.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::{stack_rows, ComplexMatrix};

/// Antenna layout of the downlink: `n_tx` base-station antennas, one entry of
/// `rx_per_user` per user, and the total stream budget `total_streams`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub rx_per_user: Vec<usize>,
    pub total_streams: usize,
}

impl SystemConfig {
    pub fn new(n_tx: usize, rx_per_user: Vec<usize>, total_streams: usize) -> Result<Self> {
        let cfg = Self {
            n_tx,
            rx_per_user,
            total_streams,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_users();
        if k == 0 {
            return Err(Error::Config("at least one user is required".into()));
        }
        if self.n_tx == 0 {
            return Err(Error::Config("n_tx must be positive".into()));
        }
        if let Some(u) = self.rx_per_user.iter().position(|&n| n == 0) {
            return Err(Error::Config(format!("user {u} has no receive antennas")));
        }
        if self.total_streams < k {
            return Err(Error::FairnessInfeasible {
                streams: self.total_streams,
                users: k,
            });
        }
        let cap = self.n_tx.min(self.total_rx());
        if self.total_streams > cap {
            return Err(Error::Config(format!(
                "total streams {} exceed min(n_tx, total rx) = {cap}",
                self.total_streams
            )));
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.rx_per_user.len()
    }

    pub fn total_rx(&self) -> usize {
        self.rx_per_user.iter().sum()
    }

    /// First global receive-antenna index of every user.
    pub fn user_row_offsets(&self) -> Vec<usize> {
        self.rx_per_user
            .iter()
            .scan(0, |acc, &n| {
                let start = *acc;
                *acc += n;
                Some(start)
            })
            .collect()
    }
}

/// Stacked downlink channel `H` (`total_rx x n_tx`) with its per-user row
/// partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub full: ComplexMatrix,
    pub user_row_offsets: Vec<usize>,
    pub rx_per_user: Vec<usize>,
}

impl ChannelMatrix {
    pub fn new(full: ComplexMatrix, rx_per_user: Vec<usize>) -> Result<Self> {
        let total: usize = rx_per_user.iter().sum();
        if total != full.nrows() {
            return Err(Error::Dimension(format!(
                "row partition sums to {total} but channel has {} rows",
                full.nrows()
            )));
        }
        if rx_per_user.is_empty() || rx_per_user.contains(&0) {
            return Err(Error::Config("every user needs at least one row".into()));
        }
        let user_row_offsets = rx_per_user
            .iter()
            .scan(0, |acc, &n| {
                let start = *acc;
                *acc += n;
                Some(start)
            })
            .collect();
        Ok(Self {
            full,
            user_row_offsets,
            rx_per_user,
        })
    }

    /// Stacks per-user blocks into one channel.
    pub fn from_blocks(blocks: &[ComplexMatrix]) -> Result<Self> {
        let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
        if blocks.iter().any(|b| b.ncols() != cols) {
            return Err(Error::Dimension(
                "user blocks differ in column count".into(),
            ));
        }
        let refs: Vec<&ComplexMatrix> = blocks.iter().collect();
        Self::new(
            stack_rows(&refs, cols),
            blocks.iter().map(|b| b.nrows()).collect(),
        )
    }

    pub fn num_users(&self) -> usize {
        self.rx_per_user.len()
    }

    pub fn n_tx(&self) -> usize {
        self.full.ncols()
    }

    pub fn total_rx(&self) -> usize {
        self.full.nrows()
    }

    /// `H_k`, the rows belonging to user `k`.
    pub fn user_block(&self, k: usize) -> ComplexMatrix {
        self.full
            .rows(self.user_row_offsets[k], self.rx_per_user[k])
            .into_owned()
    }

    /// Owning user of a global receive-antenna row.
    pub fn user_of_row(&self, row: usize) -> Option<usize> {
        if row >= self.total_rx() {
            return None;
        }
        Some(
            self.user_row_offsets
                .iter()
                .rposition(|&off| off <= row)
                .expect("offset 0 always matches"),
        )
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            full: self.full.map(|z| z * factor),
            ..self.clone()
        }
    }
}

/// Per-dimension noise variance `sigma_n^2` (linear).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma2: f64,
}

/// Draws one frame's channel with i.i.d. `CN(0, 1)` entries.
pub fn generate_channel<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelMatrix {
    let rows = cfg.total_rx();
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let full = ComplexMatrix::from_fn(rows, cfg.n_tx, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    ChannelMatrix {
        full,
        user_row_offsets: cfg.user_row_offsets(),
        rx_per_user: cfg.rx_per_user.clone(),
    }
}

/// `H~_k`: every user's block except user `k`, in original order. With a
/// single user this is a `0 x n_tx` matrix.
pub fn excise_user(h: &ChannelMatrix, k: usize) -> Result<ComplexMatrix> {
    if k >= h.num_users() {
        return Err(Error::Dimension(format!(
            "user {k} out of range for {} users",
            h.num_users()
        )));
    }
    let blocks: Vec<ComplexMatrix> = (0..h.num_users())
        .filter(|&i| i != k)
        .map(|i| h.user_block(i))
        .collect();
    let refs: Vec<&ComplexMatrix> = blocks.iter().collect();
    Ok(stack_rows(&refs, h.n_tx()))
}

/// SNR is total transmit power (`n_tx`) over per-antenna noise variance, so
/// `sigma2 = n_tx / 10^(snr_db / 10)`.
pub fn snr_to_sigma2(snr_db: f64, cfg: &SystemConfig) -> NoiseModel {
    NoiseModel {
        sigma2: cfg.n_tx as f64 / 10f64.powf(snr_db / 10.0),
    }
}
