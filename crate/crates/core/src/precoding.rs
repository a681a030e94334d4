//! Interference-cancelling precoders: block diagonalization (BD) and
//! coordinated transmit/receive beamforming.
//!
//! Both place user `k`'s transmit subspace in the null space of everybody
//! else's (possibly pre-filtered) channel. BD needs `n_tx` larger than the
//! other users' total receive antennas; the coordinated scheme only needs it
//! larger than their total stream count, because each receiver first projects
//! onto an `L_k`-dimensional subspace `R_k`.

use crate::channel::{excise_user, ChannelMatrix};
use crate::error::{Error, Result};
use crate::kernels::{null_space_basis, stack_rows, svd, ComplexMatrix};

/// Per-user transmit matrices (orthonormal columns, `n_tx x L_k`) and the
/// per-stream powers applied on top of them.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub per_user_tx: Vec<ComplexMatrix>,
    pub power_loading: Vec<Vec<f64>>,
}

impl PrecoderSet {
    pub fn streams(&self) -> Vec<usize> {
        self.per_user_tx.iter().map(|t| t.ncols()).collect()
    }

    /// `T_k P_k^{1/2}`.
    pub fn loaded(&self, k: usize) -> ComplexMatrix {
        let mut t = self.per_user_tx[k].clone();
        for (j, p) in self.power_loading[k].iter().enumerate() {
            t.column_mut(j).scale_mut(p.sqrt());
        }
        t
    }

    /// `sum_k trace(P_k)`.
    pub fn total_power(&self) -> f64 {
        self.power_loading.iter().flatten().sum()
    }
}

/// Per-user receive pre-filters `R_k` (`N_Rk x L_k`, orthonormal columns).
#[derive(Debug, Clone)]
pub struct ReceiveFilterSet {
    pub per_user_rx: Vec<ComplexMatrix>,
}

/// Channel seen by each user's detector before power loading: `H_k B_k` for
/// BD, `R_k^H H_k T_k` for the coordinated scheme.
#[derive(Debug, Clone)]
pub struct EffectiveChannelSet {
    pub per_user_eff: Vec<ComplexMatrix>,
}

/// Same power on every stream, `n_tx / sum(L_k)`, so the total is `n_tx`.
pub fn equal_power_loading(streams: &[usize], n_tx: usize) -> Result<Vec<Vec<f64>>> {
    let total: usize = streams.iter().sum();
    if total == 0 {
        return Err(Error::Dimension("no streams to load".into()));
    }
    let p = n_tx as f64 / total as f64;
    Ok(streams.iter().map(|&l| vec![p; l]).collect())
}

/// Block diagonalization. Each `B_k` spans the part of the null space of the
/// other users' stacked channel that user `k` can see, so `H_i B_k = 0` for
/// `i != k`. User `k` gets as many streams as the rank of `H_k V~_k^0`.
pub fn block_diagonalize(h: &ChannelMatrix) -> Result<(PrecoderSet, EffectiveChannelSet)> {
    let n_tx = h.n_tx();
    let mut per_user_tx = Vec::with_capacity(h.num_users());
    let mut per_user_eff = Vec::with_capacity(h.num_users());
    for k in 0..h.num_users() {
        let others = excise_user(h, k)?;
        let null = null_space_basis(&others)?;
        if null.ncols() == 0 {
            return Err(Error::BdInfeasible {
                user: k,
                rank: n_tx,
                n_tx,
            });
        }
        let hk = h.user_block(k);
        let projected = &hk * &null;
        let dec = svd(&projected)?;
        if dec.numeric_rank == 0 {
            return Err(Error::BdInfeasible {
                user: k,
                rank: n_tx - null.ncols(),
                n_tx,
            });
        }
        let bk = &null * dec.leading_right(dec.numeric_rank);
        per_user_eff.push(&hk * &bk);
        per_user_tx.push(bk);
    }
    let streams: Vec<usize> = per_user_tx.iter().map(|b| b.ncols()).collect();
    let power_loading = equal_power_loading(&streams, n_tx)?;
    Ok((
        PrecoderSet {
            per_user_tx,
            power_loading,
        },
        EffectiveChannelSet { per_user_eff },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationControls {
    pub max_iterations: usize,
    /// Stop once every `R_k` moves less than this (subspace distance).
    pub tolerance: f64,
}

impl Default for IterationControls {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoordinatedOutput {
    pub precoders: PrecoderSet,
    pub filters: ReceiveFilterSet,
    pub effective: EffectiveChannelSet,
    pub iterations: usize,
    /// Largest subspace change of any `R_k` in the last iteration.
    pub residual: f64,
    pub converged: bool,
}

/// Coordinated transmit/receive beamforming with `streams[k]` streams for
/// user `k`.
///
/// Alternates between the transmit side (null space of the other users'
/// filtered channels `R_i^H H_i`) and the receive side (`R_k` = leading left
/// singular vectors of `F_k = H_k V_k`) until the receive subspaces stop
/// moving. The returned precoders are always computed from the returned
/// filters, so `R_i^H H_i T_k = 0` holds for `i != k` at every iterate.
pub fn coordinated_txrx(
    h: &ChannelMatrix,
    streams: &[usize],
    opts: IterationControls,
) -> Result<CoordinatedOutput> {
    let k_users = h.num_users();
    if streams.len() != k_users {
        return Err(Error::Dimension(format!(
            "{} stream counts for {k_users} users",
            streams.len()
        )));
    }
    for (k, (&l, &nr)) in streams.iter().zip(&h.rx_per_user).enumerate() {
        if l == 0 || l > nr {
            return Err(Error::Dimension(format!(
                "user {k}: {l} streams with {nr} receive antennas"
            )));
        }
    }
    let total: usize = streams.iter().sum();
    if total > h.n_tx() {
        return Err(Error::Dimension(format!(
            "{total} streams exceed {} transmit antennas",
            h.n_tx()
        )));
    }

    let blocks: Vec<ComplexMatrix> = (0..k_users).map(|k| h.user_block(k)).collect();
    let mut filters = blocks
        .iter()
        .zip(streams)
        .map(|(hk, &l)| Ok(svd(hk)?.leading_left(l)))
        .collect::<Result<Vec<_>>>()?;

    let mut best = (f64::INFINITY, filters.clone());
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let step = transmit_step(&blocks, &filters, streams)?;
        residual = 0.0f64;
        for (k, next) in step.next_filters.iter().enumerate() {
            residual = residual.max(subspace_distance(&filters[k], next));
        }
        filters = step.next_filters;
        if residual < best.0 {
            best = (residual, filters.clone());
        }
        if residual < opts.tolerance {
            break;
        }
    }
    let converged = residual < opts.tolerance;
    if !converged {
        residual = best.0;
        filters = best.1;
    }

    let step = transmit_step(&blocks, &filters, streams)?;
    // rotate within each user's receive and transmit spans so that
    // R_k^H H_k T_k becomes diagonal; the spans, and with them the zero
    // leakage, are unchanged
    let mut per_user_tx = Vec::with_capacity(k_users);
    let mut per_user_eff = Vec::with_capacity(k_users);
    for (k, tk) in step.precoders.into_iter().enumerate() {
        let e = svd(&(filters[k].adjoint() * &blocks[k] * &tk))?;
        let l = streams[k];
        filters[k] = &filters[k] * e.left_vectors.columns(0, l);
        let tk = tk * e.right_vectors.columns(0, l);
        per_user_eff.push(filters[k].adjoint() * &blocks[k] * &tk);
        per_user_tx.push(tk);
    }
    Ok(CoordinatedOutput {
        precoders: PrecoderSet {
            per_user_tx,
            power_loading: equal_power_loading(streams, h.n_tx())?,
        },
        filters: ReceiveFilterSet {
            per_user_rx: filters,
        },
        effective: EffectiveChannelSet { per_user_eff },
        iterations,
        residual,
        converged,
    })
}

struct TransmitStep {
    precoders: Vec<ComplexMatrix>,
    next_filters: Vec<ComplexMatrix>,
}

/// One transmit-side pass for fixed receive filters.
fn transmit_step(
    blocks: &[ComplexMatrix],
    filters: &[ComplexMatrix],
    streams: &[usize],
) -> Result<TransmitStep> {
    let n_tx = blocks[0].ncols();
    let filtered: Vec<ComplexMatrix> = blocks
        .iter()
        .zip(filters)
        .map(|(hk, rk)| rk.adjoint() * hk)
        .collect();
    let mut precoders = Vec::with_capacity(blocks.len());
    let mut next_filters = Vec::with_capacity(blocks.len());
    for (k, hk) in blocks.iter().enumerate() {
        let others: Vec<&ComplexMatrix> = filtered
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, m)| m)
            .collect();
        let null = null_space_basis(&stack_rows(&others, n_tx))?;
        let l = streams[k];
        if null.ncols() < l {
            return Err(Error::Dimension(format!(
                "user {k}: null space of dimension {} cannot carry {l} streams",
                null.ncols()
            )));
        }
        // keep the L_k null-space directions with the largest gain to user k
        let gain = svd(&(hk * &null))?;
        let vk = &null * gain.right_vectors.columns(0, l);
        let fk = svd(&(hk * &vk))?;
        next_filters.push(fk.leading_left(l));
        precoders.push(vk * &fk.right_vectors);
    }
    Ok(TransmitStep {
        precoders,
        next_filters,
    })
}

/// Distance between the column spans of two orthonormal bases,
/// `||(I - A A^H) B||_F`.
pub fn subspace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let proj = a * (a.adjoint() * b);
    (b - proj).norm()
}

/// Largest `||R_i^H H_i T_k||_F` over `i != k`.
pub fn coordinated_leakage(
    h: &ChannelMatrix,
    precoders: &PrecoderSet,
    filters: &ReceiveFilterSet,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..h.num_users() {
        let ri_hi = filters.per_user_rx[i].adjoint() * h.user_block(i);
        for (k, tk) in precoders.per_user_tx.iter().enumerate() {
            if i != k {
                worst = worst.max((&ri_hi * tk).norm());
            }
        }
    }
    worst
}

/// Largest `||H_i B_k||_F` over `i != k`.
pub fn bd_leakage(h: &ChannelMatrix, precoders: &PrecoderSet) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..h.num_users() {
        let hi = h.user_block(i);
        for (k, bk) in precoders.per_user_tx.iter().enumerate() {
            if i != k {
                worst = worst.max((&hi * bk).norm());
            }
        }
    }
    worst
}
