//! Simulation settings from a key-value file and command-line flags.

use std::path::PathBuf;

use crate::channel::SystemConfig;
use crate::error::Error;
use crate::precoding::IterationControls;

use super::{Detector, Scheme, SimJob};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

/// Settings before defaults are applied. Every field mirrors one CLI flag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigValues {
    pub nt: Option<usize>,
    pub rx: Option<Vec<usize>>,
    pub schemes: Option<Vec<Scheme>>,
    pub detectors: Option<Vec<Detector>>,
    pub streams: Option<usize>,
    pub fixed_per_user: Option<usize>,
    pub snr: Option<Vec<f64>>,
    pub min_errors: Option<u64>,
    pub max_trials: Option<u64>,
    pub seed: Option<u64>,
    pub max_iterations: Option<usize>,
    pub out: Option<PathBuf>,
    pub summary: Option<bool>,
    pub threads: Option<usize>,
}

fn parse_list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|e| format!("'{}': {e}", p.trim()))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("'{v}': {e}"))
}

/// Parses `a:s:b` (inclusive, `s > 0`) or a single value into an SNR grid.
pub fn parse_snr_grid(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| parse_one::<f64>(p))
        .collect::<Result<_, _>>()?;
    if nums.iter().any(|x| !x.is_finite()) {
        return Err(format!("non-finite value in SNR grid '{text}'"));
    }
    match nums[..] {
        [x] => Ok(vec![x]),
        [a, s, b] => {
            if s <= 0.0 || b < a {
                return Err(format!("SNR grid '{text}' needs step > 0 and end >= start"));
            }
            let n = ((b - a) / s + 1e-9).floor() as usize;
            if n > 100_000 {
                return Err(format!("SNR grid '{text}' has too many points"));
            }
            Ok((0..=n).map(|i| a + i as f64 * s).collect())
        }
        _ => Err(format!("SNR grid '{text}' must be a:s:b or a single value")),
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("'{v}' is not a boolean")),
    }
}

impl ConfigValues {
    /// Sets one key. Keys use the flag names without the leading dashes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "nt" => self.nt = Some(parse_one(v)?),
            "rx" => self.rx = Some(parse_list(v)?),
            "scheme" => self.schemes = Some(parse_list(v)?),
            "detector" => self.detectors = Some(parse_list(v)?),
            "streams" => self.streams = Some(parse_one(v)?),
            "fixed-per-user" => self.fixed_per_user = Some(parse_one(v)?),
            "snr" => self.snr = Some(parse_snr_grid(v)?),
            "min-errors" => self.min_errors = Some(parse_one(v)?),
            "max-trials" => self.max_trials = Some(parse_one(v)?),
            "seed" => self.seed = Some(parse_one(v)?),
            "max-iterations" => self.max_iterations = Some(parse_one(v)?),
            "out" => self.out = Some(PathBuf::from(v)),
            "summary" => self.summary = Some(parse_bool(v)?),
            "threads" => self.threads = Some(parse_one(v)?),
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Values set in `other` replace ours.
    pub fn overridden_by(self, other: ConfigValues) -> ConfigValues {
        ConfigValues {
            nt: other.nt.or(self.nt),
            rx: other.rx.or(self.rx),
            schemes: other.schemes.or(self.schemes),
            detectors: other.detectors.or(self.detectors),
            streams: other.streams.or(self.streams),
            fixed_per_user: other.fixed_per_user.or(self.fixed_per_user),
            snr: other.snr.or(self.snr),
            min_errors: other.min_errors.or(self.min_errors),
            max_trials: other.max_trials.or(self.max_trials),
            seed: other.seed.or(self.seed),
            max_iterations: other.max_iterations.or(self.max_iterations),
            out: other.out.or(self.out),
            summary: other.summary.or(self.summary),
            threads: other.threads.or(self.threads),
        }
    }

    /// One job per (scheme, detector) pair, defaults filled in.
    pub fn jobs(&self) -> crate::Result<Vec<SimJob>> {
        let n_tx = self.nt.unwrap_or(8);
        let rx = self.rx.clone().unwrap_or_else(|| vec![2; 4]);
        let total = self.streams.unwrap_or_else(|| n_tx.min(rx.iter().sum()));
        let cfg = SystemConfig::new(n_tx, rx, total)?;
        let schemes = self
            .schemes
            .clone()
            .unwrap_or_else(|| vec![Scheme::CoordAdaptive]);
        let detectors = self.detectors.clone().unwrap_or_else(|| vec![Detector::Zf]);
        if schemes.is_empty() || detectors.is_empty() {
            return Err(Error::Config(
                "scheme and detector lists must be non-empty".into(),
            ));
        }
        let iteration = IterationControls {
            max_iterations: self
                .max_iterations
                .unwrap_or(IterationControls::default().max_iterations),
            ..IterationControls::default()
        };
        let mut jobs = Vec::new();
        for &scheme in &schemes {
            for &detector in &detectors {
                let job = SimJob {
                    cfg: cfg.clone(),
                    scheme,
                    detector,
                    fixed_streams_per_user: self.fixed_per_user.unwrap_or(2),
                    snr_grid_db: self.snr.clone().unwrap_or_else(|| vec![0.0]),
                    target_min_errors: self.min_errors.unwrap_or(200),
                    max_trials: self.max_trials.unwrap_or(200_000),
                    master_seed: self.seed.unwrap_or(1),
                    iteration,
                };
                job.validate()?;
                jobs.push(job);
            }
        }
        Ok(jobs)
    }
}

/// Reads `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_config_text(text: &str) -> Result<ConfigValues, ConfigError> {
    let mut values = ConfigValues::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ConfigError {
            line: i + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
        values.set(key, value).map_err(err)?;
    }
    Ok(values)
}
