use std::process::Command;

use mumimo::harness::{parse_csv, Scheme};

fn simulate(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_simulate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("mumimo-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn flags_produce_csv() {
    let out = simulate(&[
        "--scheme",
        "bd,coord-adaptive",
        "--detector",
        "mmse",
        "--snr",
        "0:5:10",
        "--min-errors",
        "20",
        "--max-trials",
        "128",
        "--seed",
        "4",
        "--threads",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = parse_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0].scheme, Scheme::Bd);
    assert!(rows[0].mean_alloc.is_none());
    assert!(rows[3].mean_alloc.is_some());
}

#[test]
fn config_file_with_override() {
    let cfg = tmp("sweep.cfg");
    let csv = tmp("sweep.csv");
    std::fs::write(
        &cfg,
        format!(
            "# small sweep\nnt = 4\nrx = 2,2\nstreams = 3\nscheme = coord-adaptive\nsnr = 0:10:20\nmax-trials = 64\nout = {}\n",
            csv.display()
        ),
    )
    .unwrap();
    let out = simulate(&["--config", cfg.to_str().unwrap(), "--snr", "5", "--summary"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = parse_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].snr_db, 5.0);
    let total: f64 = rows[0].mean_alloc.as_ref().unwrap().iter().sum();
    assert!((total - 3.0).abs() < 1e-9);
    assert!(String::from_utf8_lossy(&out.stdout).contains("snr@1e-2"));
}

#[test]
fn config_errors_exit_with_two() {
    for args in [
        &["--nt", "4", "--rx", "2,2,2,2", "--streams", "8"][..],
        &["--snr", "10:1:0"],
        &["--scheme", "dpc"],
        &["--scheme", "coord-fixed", "--fixed-per-user", "3"],
        &["--streams", "2"],
        &["--config", "/nonexistent/file.cfg"],
    ] {
        let out = simulate(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    let bad = tmp("bad.cfg");
    std::fs::write(&bad, "nt = 8\ncolour = blue\n").unwrap();
    let out = simulate(&["--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn same_seed_same_bytes_any_thread_count() {
    let args = [
        "--scheme",
        "coord-adaptive",
        "--snr",
        "0:4:8",
        "--min-errors",
        "50",
        "--max-trials",
        "256",
        "--seed",
        "11",
    ];
    let one = simulate(&[&args[..], &["--threads", "1"]].concat());
    let four = simulate(&[&args[..], &["--threads", "4"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
}
