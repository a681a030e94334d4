//! Monte-Carlo BER simulation.
//!
//! One trial is one frame: a fresh channel, a stream allocation, precoders,
//! one 4QAM symbol per stream, noise and per-user linear detection. Trials
//! are seeded from `(master_seed, snr index, trial index)` only, so results
//! do not depend on scheduling, and every scheme sees the same channel
//! realizations at a given SNR point.

mod config;
mod csv;

pub use config::{parse_config_text, parse_snr_grid, ConfigError, ConfigValues};
pub use csv::{emit_csv, emit_csv_to_path, format_sig, parse_csv, CsvRow, CSV_HEADER};

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channel::{generate_channel, snr_to_sigma2, SystemConfig};
use crate::detection::{mmse_detect, qam4_demodulate, qam4_modulate, zf_detect, ComplexVector};
use crate::error::{Error, Result};
use crate::kernels::ComplexMatrix;
use crate::precoding::{block_diagonalize, coordinated_txrx, IterationControls};
use crate::selection::select_streams;

/// Trials are scheduled and checked against the stopping rule in batches of
/// this size.
pub const TRIAL_BATCH: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Bd,
    CoordFixed,
    CoordAdaptive,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Bd => "bd",
            Scheme::CoordFixed => "coord-fixed",
            Scheme::CoordAdaptive => "coord-adaptive",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bd" => Ok(Scheme::Bd),
            "coord-fixed" => Ok(Scheme::CoordFixed),
            "coord-adaptive" => Ok(Scheme::CoordAdaptive),
            other => Err(format!(
                "unknown scheme '{other}' (expected bd, coord-fixed or coord-adaptive)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    Zf,
    Mmse,
}

impl Detector {
    pub fn name(self) -> &'static str {
        match self {
            Detector::Zf => "zf",
            Detector::Mmse => "mmse",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zf" => Ok(Detector::Zf),
            "mmse" => Ok(Detector::Mmse),
            other => Err(format!("unknown detector '{other}' (expected zf or mmse)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimJob {
    pub cfg: SystemConfig,
    pub scheme: Scheme,
    pub detector: Detector,
    /// Streams per user for `coord-fixed`.
    pub fixed_streams_per_user: usize,
    pub snr_grid_db: Vec<f64>,
    pub target_min_errors: u64,
    pub max_trials: u64,
    pub master_seed: u64,
    pub iteration: IterationControls,
}

impl SimJob {
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("SNR grid is empty".into()));
        }
        if self
            .snr_grid_db
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::Config("SNR grid must be strictly increasing".into()));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR grid has a non-finite value".into()));
        }
        if self.max_trials == 0 {
            return Err(Error::Config("max_trials must be positive".into()));
        }
        if self.scheme == Scheme::CoordFixed {
            let l = self.fixed_streams_per_user;
            let k = self.cfg.num_users();
            let cap = self.cfg.n_tx.min(self.cfg.total_rx());
            if l == 0 || l * k > cap {
                return Err(Error::Config(format!(
                    "{l} streams per user for {k} users exceed min(n_tx, total rx) = {cap}"
                )));
            }
            if let Some(u) = self.cfg.rx_per_user.iter().position(|&n| n < l) {
                return Err(Error::Config(format!(
                    "user {u} has fewer than {l} receive antennas"
                )));
            }
        }
        Ok(())
    }

    fn fixed_streams(&self) -> Vec<usize> {
        vec![self.fixed_streams_per_user; self.cfg.num_users()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub bit_errors: u64,
    pub bits_sent: u64,
    /// Streams per user used in this frame; empty for an infeasible frame.
    pub allocation: Vec<usize>,
    /// The frame could not be precoded or detected and is excluded.
    pub infeasible: bool,
    /// The coordinated iteration hit its iteration cap.
    pub unconverged: bool,
}

/// Independent generator for one trial. ChaCha is keyed by the three
/// indices, so each trial owns a disjoint stream.
pub fn trial_rng(master_seed: u64, snr_index: u64, trial_index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&snr_index.to_le_bytes());
    key[16..24].copy_from_slice(&trial_index.to_le_bytes());
    key[24..32].copy_from_slice(b"mumimo\0\0");
    ChaCha8Rng::from_seed(key)
}

struct FramePrecoding {
    /// `T_k P_k^{1/2}` per user.
    loaded_tx: Vec<ComplexMatrix>,
    /// `R_k` per user, `None` for BD.
    filters: Option<Vec<ComplexMatrix>>,
    /// Effective channel before power loading, per user.
    effective: Vec<ComplexMatrix>,
    stream_power: Vec<Vec<f64>>,
    unconverged: bool,
}

fn precode(job: &SimJob, h: &crate::channel::ChannelMatrix) -> Result<FramePrecoding> {
    match job.scheme {
        Scheme::Bd => {
            let (pre, eff) = block_diagonalize(h)?;
            Ok(FramePrecoding {
                loaded_tx: (0..h.num_users()).map(|k| pre.loaded(k)).collect(),
                filters: None,
                effective: eff.per_user_eff,
                stream_power: pre.power_loading,
                unconverged: false,
            })
        }
        Scheme::CoordFixed | Scheme::CoordAdaptive => {
            let streams = if job.scheme == Scheme::CoordFixed {
                job.fixed_streams()
            } else {
                select_streams(h, job.cfg.total_streams)?.per_user_streams
            };
            let out = coordinated_txrx(h, &streams, job.iteration)?;
            Ok(FramePrecoding {
                loaded_tx: (0..h.num_users())
                    .map(|k| out.precoders.loaded(k))
                    .collect(),
                filters: Some(out.filters.per_user_rx),
                effective: out.effective.per_user_eff,
                stream_power: out.precoders.power_loading,
                unconverged: !out.converged,
            })
        }
    }
}

fn complex_normal<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Simulates one frame at `snr_db`.
///
/// The generator is consumed in a fixed order: channel, then bits, then
/// noise.
pub fn run_trial<R: Rng>(job: &SimJob, snr_db: f64, rng: &mut R) -> Result<TrialOutcome> {
    let h = generate_channel(&job.cfg, rng);
    let noise = snr_to_sigma2(snr_db, &job.cfg);
    let frame = match precode(job, &h) {
        Ok(f) => f,
        Err(Error::BdInfeasible { .. } | Error::Singular { .. }) => {
            return Ok(TrialOutcome {
                bit_errors: 0,
                bits_sent: 0,
                allocation: Vec::new(),
                infeasible: true,
                unconverged: false,
            })
        }
        Err(e) => return Err(e),
    };
    let allocation: Vec<usize> = frame.loaded_tx.iter().map(|t| t.ncols()).collect();
    let total_streams: usize = allocation.iter().sum();

    let bits: Vec<u8> = (0..2 * total_streams)
        .map(|_| rng.random_range(0..2u8))
        .collect();
    let mut x = ComplexVector::zeros(job.cfg.n_tx);
    let mut at = 0;
    let mut per_user_bits = Vec::with_capacity(allocation.len());
    for (k, &l) in allocation.iter().enumerate() {
        let user_bits = &bits[2 * at..2 * (at + l)];
        let sv = qam4_modulate(user_bits)?;
        x += &frame.loaded_tx[k] * ComplexVector::from_vec(sv.symbols);
        per_user_bits.push(user_bits);
        at += l;
    }

    let n = ComplexVector::from_fn(h.total_rx(), |_, _| complex_normal(rng, noise.sigma2));
    let y = &h.full * x + n;

    let mut bit_errors = 0u64;
    for (k, user_bits) in per_user_bits.iter().enumerate() {
        let yk = y.rows(h.user_row_offsets[k], h.rx_per_user[k]).into_owned();
        let observed = match &frame.filters {
            Some(r) => r[k].adjoint() * yk,
            None => yk,
        };
        let eff = &frame.effective[k];
        let es = frame.stream_power[k].first().copied().unwrap_or(1.0);
        let detected = match job.detector {
            Detector::Zf => zf_detect(eff, &observed),
            Detector::Mmse => mmse_detect(eff, &observed, noise.sigma2, es),
        };
        let estimate = match detected {
            Ok(v) => v,
            Err(Error::Singular { .. }) => {
                return Ok(TrialOutcome {
                    bit_errors: 0,
                    bits_sent: 0,
                    allocation: Vec::new(),
                    infeasible: true,
                    unconverged: frame.unconverged,
                })
            }
            Err(e) => return Err(e),
        };
        // ZF/MMSE estimate the loaded symbols sqrt(p) * s; the quadrant decision
        // does not depend on that positive scale
        let decided = qam4_demodulate(estimate.as_slice());
        bit_errors += decided
            .iter()
            .zip(user_bits.iter())
            .filter(|(a, b)| a != b)
            .count() as u64;
    }
    Ok(TrialOutcome {
        bit_errors,
        bits_sent: bits.len() as u64,
        allocation,
        infeasible: false,
        unconverged: frame.unconverged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub snr_db: f64,
    pub scheme: Scheme,
    pub detector: Detector,
    /// Feasible trials counted.
    pub trials: u64,
    pub bit_errors: u64,
    pub bits_sent: u64,
    pub ber: f64,
    /// Average streams per user (adaptive scheme only).
    pub mean_allocation: Option<Vec<f64>>,
    pub infeasible_trials: u64,
    pub unconverged_trials: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Debug, Default)]
struct Tally {
    trials: u64,
    bit_errors: u64,
    bits_sent: u64,
    alloc_sums: Vec<u64>,
    infeasible: u64,
    unconverged: u64,
}

impl Tally {
    fn add(&mut self, t: &TrialOutcome) {
        if t.unconverged {
            self.unconverged += 1;
        }
        if t.infeasible {
            self.infeasible += 1;
            return;
        }
        self.trials += 1;
        self.bit_errors += t.bit_errors;
        self.bits_sent += t.bits_sent;
        if self.alloc_sums.len() < t.allocation.len() {
            self.alloc_sums.resize(t.allocation.len(), 0);
        }
        for (s, &l) in self.alloc_sums.iter_mut().zip(&t.allocation) {
            *s += l as u64;
        }
    }
}

/// Runs every SNR point of the job until `target_min_errors` bit errors or
/// `max_trials` trials, whichever comes first. The stopping rule is checked
/// after each batch of [`TRIAL_BATCH`] trials.
pub fn run_ber_sweep(job: &SimJob, execution: Execution) -> Result<Vec<BerRecord>> {
    job.validate()?;
    let mut records = Vec::with_capacity(job.snr_grid_db.len());
    for (si, &snr_db) in job.snr_grid_db.iter().enumerate() {
        let mut tally = Tally::default();
        let mut next = 0u64;
        while next < job.max_trials && tally.bit_errors < job.target_min_errors {
            let end = (next + TRIAL_BATCH).min(job.max_trials);
            let run =
                |t: u64| run_trial(job, snr_db, &mut trial_rng(job.master_seed, si as u64, t));
            let outcomes: Vec<Result<TrialOutcome>> = match execution {
                Execution::Sequential => (next..end).map(run).collect(),
                Execution::Parallel => (next..end).into_par_iter().map(run).collect(),
            };
            for o in outcomes {
                tally.add(&o?);
            }
            next = end;
        }
        let ber = if tally.bits_sent == 0 {
            0.0
        } else {
            tally.bit_errors as f64 / tally.bits_sent as f64
        };
        let mean_allocation =
            (job.scheme == Scheme::CoordAdaptive && tally.trials > 0).then(|| {
                tally
                    .alloc_sums
                    .iter()
                    .map(|&s| s as f64 / tally.trials as f64)
                    .collect()
            });
        records.push(BerRecord {
            snr_db,
            scheme: job.scheme,
            detector: job.detector,
            trials: tally.trials,
            bit_errors: tally.bit_errors,
            bits_sent: tally.bits_sent,
            ber,
            mean_allocation,
            infeasible_trials: tally.infeasible,
            unconverged_trials: tally.unconverged,
        });
    }
    Ok(records)
}

/// SNR at which the BER curve crosses `target`, by linear interpolation of
/// `log10(BER)` between the first pair of neighbouring points that brackets
/// it. Records must belong to one curve and be sorted by SNR.
pub fn snr_at_ber(records: &[BerRecord], target: f64) -> Option<f64> {
    records.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        if a.ber >= target && b.ber < target {
            if a.ber == target {
                return Some(a.snr_db);
            }
            if b.ber <= 0.0 {
                return None;
            }
            let (la, lb, lt) = (a.ber.log10(), b.ber.log10(), target.log10());
            Some(a.snr_db + (lt - la) * (b.snr_db - a.snr_db) / (lb - la))
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(scheme: Scheme, detector: Detector) -> SimJob {
        SimJob {
            cfg: SystemConfig::new(8, vec![2, 2, 2, 2], 8).unwrap(),
            scheme,
            detector,
            fixed_streams_per_user: 2,
            snr_grid_db: vec![0.0, 10.0],
            target_min_errors: 50,
            max_trials: 256,
            master_seed: 1,
            iteration: IterationControls::default(),
        }
    }

    #[test]
    fn names_round_trip() {
        for s in [Scheme::Bd, Scheme::CoordFixed, Scheme::CoordAdaptive] {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        for d in [Detector::Zf, Detector::Mmse] {
            assert_eq!(d.name().parse::<Detector>().unwrap(), d);
        }
        assert!("dpc".parse::<Scheme>().is_err());
    }

    #[test]
    fn bd_bit_accounting() {
        let j = job(Scheme::Bd, Detector::Zf);
        let out = run_trial(&j, 10.0, &mut trial_rng(1, 0, 0)).unwrap();
        assert_eq!(out.bits_sent, 16);
        assert_eq!(out.allocation, vec![2, 2, 2, 2]);
    }

    #[test]
    fn trial_is_deterministic() {
        for scheme in [Scheme::Bd, Scheme::CoordFixed, Scheme::CoordAdaptive] {
            let j = job(scheme, Detector::Mmse);
            let a = run_trial(&j, 4.0, &mut trial_rng(9, 2, 17)).unwrap();
            let b = run_trial(&j, 4.0, &mut trial_rng(9, 2, 17)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn high_snr_is_error_free() {
        for scheme in [Scheme::Bd, Scheme::CoordFixed, Scheme::CoordAdaptive] {
            let j = job(scheme, Detector::Zf);
            for t in 0..20 {
                let out = run_trial(&j, 60.0, &mut trial_rng(3, 0, t)).unwrap();
                assert_eq!(out.bit_errors, 0, "{scheme} trial {t}");
            }
        }
    }

    #[test]
    fn validation() {
        let mut j = job(Scheme::CoordFixed, Detector::Zf);
        j.snr_grid_db = vec![];
        assert!(j.validate().is_err());
        j.snr_grid_db = vec![2.0, 2.0];
        assert!(j.validate().is_err());
        j.snr_grid_db = vec![0.0];
        j.fixed_streams_per_user = 3;
        assert!(j.validate().is_err());
        j.fixed_streams_per_user = 2;
        assert!(j.validate().is_ok());
    }

    #[test]
    fn sequential_equals_parallel() {
        let j = job(Scheme::CoordAdaptive, Detector::Zf);
        let a = run_ber_sweep(&j, Execution::Sequential).unwrap();
        let b = run_ber_sweep(&j, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a[0].mean_allocation.as_deref(),
            Some(&[2.0, 2.0, 2.0, 2.0][..])
        );
        for r in &a {
            assert_eq!(r.ber, r.bit_errors as f64 / (r.trials * 16) as f64);
        }
    }

    fn rec(snr: f64, ber: f64) -> BerRecord {
        BerRecord {
            snr_db: snr,
            scheme: Scheme::Bd,
            detector: Detector::Zf,
            trials: 1,
            bit_errors: 0,
            bits_sent: 1,
            ber,
            mean_allocation: None,
            infeasible_trials: 0,
            unconverged_trials: 0,
        }
    }

    #[test]
    fn interpolation() {
        let curve = [
            rec(0.0, 1e-1),
            rec(2.0, 1e-2 * 10f64.sqrt()),
            rec(4.0, 1e-3 * 10f64.sqrt()),
        ];
        let s = snr_at_ber(&curve, 1e-2).unwrap();
        assert!((s - 3.0).abs() < 1e-12);
        assert_eq!(snr_at_ber(&curve[..2], 1e-2), None);
        assert_eq!(snr_at_ber(&[rec(0.0, 0.1), rec(2.0, 0.0)], 1e-2), None);
    }
}
