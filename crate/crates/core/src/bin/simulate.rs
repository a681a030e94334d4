use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mumimo::harness::{
    emit_csv, emit_csv_to_path, parse_config_text, parse_snr_grid, run_ber_sweep, snr_at_ber,
    BerRecord, ConfigValues, Detector, Execution, Scheme,
};
use mumimo::Error;

/// Monte-Carlo BER sweep for downlink multi-user MIMO precoding schemes.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Cli {
    /// Key-value config file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Transmit antennas.
    #[arg(long)]
    nt: Option<usize>,
    /// Receive antennas per user, comma separated.
    #[arg(long, value_delimiter = ',')]
    rx: Option<Vec<usize>>,
    /// bd, coord-fixed or coord-adaptive; a comma list runs each.
    #[arg(long, value_delimiter = ',')]
    scheme: Option<Vec<Scheme>>,
    /// zf or mmse; a comma list runs each.
    #[arg(long, value_delimiter = ',')]
    detector: Option<Vec<Detector>>,
    /// Total streams for the adaptive scheme.
    #[arg(long)]
    streams: Option<usize>,
    /// Streams per user for coord-fixed.
    #[arg(long)]
    fixed_per_user: Option<usize>,
    /// SNR grid in dB, `start:step:end` inclusive.
    #[arg(long)]
    snr: Option<String>,
    #[arg(long)]
    min_errors: Option<u64>,
    #[arg(long)]
    max_trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration cap of the coordinated transmit/receive design.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the SNR needed for BER 1e-2 per curve.
    #[arg(long)]
    summary: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Cli {
    fn values(&self) -> Result<ConfigValues, String> {
        Ok(ConfigValues {
            nt: self.nt,
            rx: self.rx.clone(),
            schemes: self.scheme.clone(),
            detectors: self.detector.clone(),
            streams: self.streams,
            fixed_per_user: self.fixed_per_user,
            snr: self.snr.as_deref().map(parse_snr_grid).transpose()?,
            min_errors: self.min_errors,
            max_trials: self.max_trials,
            seed: self.seed,
            max_iterations: self.max_iterations,
            out: self.out.clone(),
            summary: self.summary.then_some(true),
            threads: self.threads,
        })
    }
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {msg}");
    ExitCode::from(2)
}

fn print_summary(records: &[BerRecord]) {
    println!("{:<16} {:<8} {:>14}", "scheme", "detector", "snr@1e-2 [dB]");
    let mut curves: Vec<(Scheme, Detector)> = Vec::new();
    for r in records {
        if !curves.contains(&(r.scheme, r.detector)) {
            curves.push((r.scheme, r.detector));
        }
    }
    for (s, d) in curves {
        let curve: Vec<BerRecord> = records
            .iter()
            .filter(|r| r.scheme == s && r.detector == d)
            .cloned()
            .collect();
        let cell = snr_at_ber(&curve, 1e-2)
            .map(|x| format!("{x:.2}"))
            .unwrap_or_else(|| "not bracketed".into());
        println!("{:<16} {:<8} {:>14}", s.name(), d.name(), cell);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut values = ConfigValues::default();
    if let Some(path) = &cli.config {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return config_error(format!("{}: {e}", path.display())),
        };
        values = match parse_config_text(&text) {
            Ok(v) => v,
            Err(e) => return config_error(format!("{}: {e}", path.display())),
        };
    }
    let overrides = match cli.values() {
        Ok(v) => v,
        Err(e) => return config_error(e),
    };
    let values = values.overridden_by(overrides);
    let jobs = match values.jobs() {
        Ok(j) => j,
        Err(e) => return config_error(e),
    };

    let threads = values.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => return config_error(e),
    };
    let mut records = Vec::new();
    for job in &jobs {
        match pool.install(|| run_ber_sweep(job, Execution::Parallel)) {
            Ok(r) => records.extend(r),
            Err(e @ (Error::Config(_) | Error::FairnessInfeasible { .. })) => {
                return config_error(e)
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
    for r in &records {
        if r.infeasible_trials > 0 || r.unconverged_trials > 0 {
            eprintln!(
                "{} {} at {} dB: {} infeasible, {} unconverged trials",
                r.scheme, r.detector, r.snr_db, r.infeasible_trials, r.unconverged_trials
            );
        }
    }

    let written = match &values.out {
        Some(path) => emit_csv_to_path(&records, path),
        None => emit_csv(&records, &mut std::io::stdout().lock()).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            message: e.to_string(),
        }),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    if values.summary.unwrap_or(false) {
        print_summary(&records);
    }
    ExitCode::SUCCESS
}
