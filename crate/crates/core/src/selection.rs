//! Adaptive per-user stream selection.
//!
//! Every receive antenna is a candidate stream. The search works on the
//! columns of `H^H` (one per receive antenna) and looks for the `M`-subset
//! that minimizes `D = sum 1/R_ii^2`, the diagonal part of the ZF noise
//! amplification of the selected rows.
//!
//! The search runs one stage per column. Stage `s` forces the column with the
//! `s`-th largest norm as the first pick and then extends greedily, always
//! taking the column with the largest residual norm. `D` only grows as columns
//! are added, so a stage stops as soon as it reaches the best complete metric
//! found so far. Only allocations giving every user at least one stream may
//! become the new best.

use std::collections::BTreeMap;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::kernels::{ComplexMatrix, SortedQrBuilder, RANK_EPS};

/// Brute-force enumeration refuses instances with more subsets than this.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamAllocation {
    /// `L_k` per user.
    pub per_user_streams: Vec<usize>,
    /// Selected global receive-antenna rows, in pick order.
    pub selected_rows: Vec<usize>,
    /// `sum 1/R_ii^2` of the selected rows in pick order.
    pub metric: f64,
}

impl StreamAllocation {
    pub fn total_streams(&self) -> usize {
        self.per_user_streams.iter().sum()
    }

    pub fn is_fair(&self) -> bool {
        self.per_user_streams.iter().all(|&l| l >= 1)
    }
}

/// Partial state of one search stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionCandidate {
    pub chosen: Vec<usize>,
    /// Running `D`.
    pub partial_metric: f64,
    /// Squared residual norm of every column (zero once chosen).
    pub residual_norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub first_pick: usize,
    pub candidate: SelectionCandidate,
    /// All `M` picks made (not cut off by the threshold).
    pub completed: bool,
    pub fair: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub allocation: StreamAllocation,
    pub stages: Vec<StageOutcome>,
    /// No stage produced a fair allocation and the result comes from the
    /// one-row-per-user repair.
    pub repaired: bool,
}

/// Maps selected global rows to per-user stream counts.
pub fn allocation_from_rows(selected_rows: &[usize], rx_per_user: &[usize]) -> Result<Vec<usize>> {
    let total: usize = rx_per_user.iter().sum();
    let mut seen = vec![false; total];
    let mut owner = Vec::with_capacity(total);
    for (k, &n) in rx_per_user.iter().enumerate() {
        owner.extend(std::iter::repeat_n(k, n));
    }
    let mut counts = vec![0; rx_per_user.len()];
    for &row in selected_rows {
        if row >= total {
            return Err(Error::Dimension(format!(
                "row {row} out of range for {total} receive antennas"
            )));
        }
        if std::mem::replace(&mut seen[row], true) {
            return Err(Error::DuplicateRow(row));
        }
        counts[owner[row]] += 1;
    }
    Ok(counts)
}

fn check_stream_budget(h: &ChannelMatrix, m: usize) -> Result<()> {
    let users = h.num_users();
    if m < users {
        return Err(Error::FairnessInfeasible { streams: m, users });
    }
    let cap = h.n_tx().min(h.total_rx());
    if m > cap {
        return Err(Error::Dimension(format!(
            "{m} streams exceed min(n_tx, total rx) = {cap}"
        )));
    }
    Ok(())
}

fn inverse_or_inf(tnorm: f64) -> f64 {
    if tnorm > 0.0 {
        1.0 / tnorm
    } else {
        f64::INFINITY
    }
}

/// Adaptive stream selection with threshold pruning.
pub fn select_streams(h: &ChannelMatrix, m: usize) -> Result<StreamAllocation> {
    Ok(select_streams_traced(h, m, true)?.allocation)
}

/// Stream selection that also reports every stage. With `pruning` off each
/// stage runs to `m` picks regardless of the threshold; the result is the
/// same either way.
pub fn select_streams_traced(
    h: &ChannelMatrix,
    m: usize,
    pruning: bool,
) -> Result<SelectionReport> {
    check_stream_budget(h, m)?;
    let hh = h.full.adjoint();
    let n = hh.ncols();

    let mut by_norm: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| hh.column(j).norm_squared()).collect();
    by_norm.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let mut threshold = f64::INFINITY;
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut stages = Vec::with_capacity(n);

    for &first in &by_norm {
        let mut qr = SortedQrBuilder::new(&hh);
        let mut metric = inverse_or_inf(qr.push(first));
        let mut completed = !(pruning && metric >= threshold);
        if completed {
            for _ in 1..m {
                let (_, tnorm) = qr.push_largest().expect("m <= columns");
                metric += inverse_or_inf(tnorm);
                if pruning && metric >= threshold {
                    completed = false;
                    break;
                }
            }
        }
        let chosen = qr.order().to_vec();
        let fair = completed
            && allocation_from_rows(&chosen, &h.rx_per_user)?
                .iter()
                .all(|&l| l >= 1);
        if fair && metric < threshold {
            threshold = metric;
            best = Some((chosen.clone(), metric));
        }
        stages.push(StageOutcome {
            first_pick: first,
            candidate: SelectionCandidate {
                residual_norms: (0..n)
                    .map(|j| {
                        if qr.is_remaining(j) {
                            qr.residual_norm(j)
                        } else {
                            0.0
                        }
                    })
                    .collect(),
                chosen,
                partial_metric: metric,
            },
            completed,
            fair,
        });
    }

    let (rows, metric, repaired) = match best {
        Some((rows, metric)) => (rows, metric, false),
        None => {
            let (rows, metric) = repair(h, &hh, &norms, m);
            (rows, metric, true)
        }
    };
    Ok(SelectionReport {
        allocation: StreamAllocation {
            per_user_streams: allocation_from_rows(&rows, &h.rx_per_user)?,
            selected_rows: rows,
            metric,
        },
        stages,
        repaired,
    })
}

/// Forces each user's largest-norm row (strongest user first), then fills the
/// remaining picks greedily.
fn repair(h: &ChannelMatrix, hh: &ComplexMatrix, norms: &[f64], m: usize) -> (Vec<usize>, f64) {
    let mut forced: Vec<usize> = (0..h.num_users())
        .map(|k| {
            let start = h.user_row_offsets[k];
            (start..start + h.rx_per_user[k])
                .max_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(b.cmp(&a)))
                .expect("users have at least one row")
        })
        .collect();
    forced.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let mut qr = SortedQrBuilder::new(hh);
    let mut metric = 0.0;
    for &j in &forced {
        metric += inverse_or_inf(qr.push(j));
    }
    for _ in forced.len()..m {
        let (_, tnorm) = qr.push_largest().expect("m <= columns");
        metric += inverse_or_inf(tnorm);
    }
    (qr.order().to_vec(), metric)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

#[derive(Debug, Clone, Copy)]
struct Node {
    metric: f64,
    det: f64,
    last: usize,
}

/// Exhaustive minimum of `D` over every fair `m`-subset of receive antennas
/// and every pick order within it.
///
/// Works from Gram determinants instead of a QR factorization: for an ordered
/// pick sequence the `j`-th squared diagonal entry of `R` equals
/// `det G(S_j) / det G(S_{j-1})` where `S_j` is the set of the first `j`
/// picks. The best order for a set is found by dynamic programming over its
/// subsets. Ties between sets go to the lexicographically smallest set.
pub fn brute_force_select(h: &ChannelMatrix, m: usize) -> Result<StreamAllocation> {
    check_stream_budget(h, m)?;
    let n = h.total_rx();
    let subsets = binomial(n, m);
    if subsets > BRUTE_FORCE_LIMIT || n > 63 {
        return Err(Error::SearchTooLarge {
            subsets,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let gram = &h.full * h.full.adjoint();
    let max_norm = (0..n).map(|i| gram[(i, i)].re).fold(0.0, f64::max);
    let scale = h.n_tx().max(n) as f64 * RANK_EPS;
    let zero_tol = scale * scale * max_norm;

    let mut levels: Vec<BTreeMap<u64, Node>> = vec![BTreeMap::from([(
        0u64,
        Node {
            metric: 0.0,
            det: 1.0,
            last: usize::MAX,
        },
    )])];
    for _ in 0..m {
        let prev = levels.last().expect("level 0 exists");
        let mut next: BTreeMap<u64, Node> = BTreeMap::new();
        for (&mask, node) in prev {
            for c in (0..n).filter(|&c| mask & (1 << c) == 0) {
                let grown = mask | (1 << c);
                let det = match next.get(&grown) {
                    Some(existing) => existing.det,
                    None => gram_det(&gram, grown),
                };
                let step = det / node.det;
                let term = if node.det > 0.0 && step > zero_tol {
                    1.0 / step
                } else {
                    f64::INFINITY
                };
                let metric = node.metric + term;
                let entry = next.entry(grown).or_insert(Node {
                    metric: f64::INFINITY,
                    det,
                    last: usize::MAX,
                });
                if entry.last == usize::MAX || metric < entry.metric {
                    entry.metric = metric;
                    entry.last = c;
                }
            }
        }
        levels.push(next);
    }

    let owners: Vec<usize> = (0..n)
        .map(|r| h.user_of_row(r).expect("row in range"))
        .collect();
    let mut fair: Vec<(Vec<usize>, u64, f64)> = levels[m]
        .iter()
        .map(|(&mask, node)| {
            let rows: Vec<usize> = (0..n).filter(|&r| mask & (1 << r) != 0).collect();
            (rows, mask, node.metric)
        })
        .filter(|(rows, _, _)| {
            let mut covered = vec![false; h.num_users()];
            rows.iter().for_each(|&r| covered[owners[r]] = true);
            covered.iter().all(|&c| c)
        })
        .collect();
    fair.sort_by(|a, b| a.0.cmp(&b.0));
    let mut best: Option<&(Vec<usize>, u64, f64)> = None;
    for cand in &fair {
        if best.is_none_or(|b| cand.2 < b.2) {
            best = Some(cand);
        }
    }
    let (_, mut mask, metric) = best.cloned().ok_or(Error::FairnessInfeasible {
        streams: m,
        users: h.num_users(),
    })?;

    let mut order = Vec::with_capacity(m);
    for level in (1..=m).rev() {
        let last = levels[level][&mask].last;
        order.push(last);
        mask &= !(1 << last);
    }
    order.reverse();
    Ok(StreamAllocation {
        per_user_streams: allocation_from_rows(&order, &h.rx_per_user)?,
        selected_rows: order,
        metric,
    })
}

/// Determinant of the principal submatrix of a Hermitian PSD matrix picked by
/// `mask`, via Cholesky. Returns 0 when the submatrix is not positive definite.
fn gram_det(gram: &ComplexMatrix, mask: u64) -> f64 {
    let idx: Vec<usize> = (0..gram.nrows())
        .filter(|&i| mask & (1 << i) != 0)
        .collect();
    let sub = ComplexMatrix::from_fn(idx.len(), idx.len(), |i, j| gram[(idx[i], idx[j])]);
    match sub.cholesky() {
        Some(chol) => {
            let l = chol.l();
            (0..idx.len()).map(|i| l[(i, i)].norm_sqr()).product()
        }
        None => 0.0,
    }
}
