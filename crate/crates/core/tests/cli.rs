use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use idarr::io::{read_vector, write_vector};

fn idarr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idarr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.split_whitespace()
        .find_map(|w| w.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

#[test]
fn solves_identity_operator() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("op.toml"), "kind = \"identity\"\nn = 3\n").unwrap();
    write_vector(&dir.path().join("b.bin"), &[1.0, 2.0, 3.0]).unwrap();
    let x_path = dir.path().join("x.bin");
    let out = idarr(&[
        "solve",
        "--operator",
        path(&dir.path().join("op.toml")),
        "--data",
        path(&dir.path().join("b.bin")),
        "--stop",
        "fixed",
        "-k",
        "1",
        "-o",
        path(&x_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let x = read_vector(&x_path).unwrap();
    for (got, want) in x.iter().zip([1.0, 2.0, 3.0]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert_eq!(field(&stdout(&out), "k_stop"), Some("1"));
}

#[test]
fn solves_diagonal_operator_from_text_data() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.txt"), "2 1\n").unwrap();
    fs::write(dir.path().join("b.txt"), "1 0\n").unwrap();
    fs::write(dir.path().join("op.toml"), "kind = \"diagonal\"\nvalues = \"d.txt\"\n").unwrap();
    let x_path = dir.path().join("x.bin");
    let out = idarr(&[
        "solve",
        "--operator",
        path(&dir.path().join("op.toml")),
        "--data",
        path(&dir.path().join("b.txt")),
        "--stop",
        "fixed",
        "-k",
        "1",
        "-o",
        path(&x_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let x = read_vector(&x_path).unwrap();
    assert!((x[0] - 0.5).abs() < 1e-12 && x[1].abs() < 1e-12, "{x:?}");
}

#[test]
fn generated_fredholm_problem_round_trips_through_solve() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("prob");
    let gen = idarr(&["generate", "--m", "60", "--n", "20", "--nsr", "0.1", "-o", path(&prob)]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    for method in ["iDARR", "IR-l2", "IR-L2", "DARTR"] {
        let x_path = dir.path().join(format!("{method}.bin"));
        let out = idarr(&["solve", "--problem", path(&prob), "--method", method, "-o", path(&x_path)]);
        assert!(out.status.success(), "{method}: {}", String::from_utf8_lossy(&out.stderr));
        let text = stdout(&out);
        let err: f64 = field(&text, "l2rho_error").expect("truth is known").parse().unwrap();
        assert!(err.is_finite(), "{text}");
        assert_eq!(read_vector(&x_path).unwrap().len(), 20);
    }
}

#[test]
fn discrepancy_stop_uses_problem_noise() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("prob");
    assert!(idarr(&["generate", "--m", "80", "--n", "30", "-o", path(&prob)]).status.success());
    let out = idarr(&["solve", "--problem", path(&prob), "--stop", "dp", "-o", path(&dir.path().join("x.bin"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let k: usize = field(&stdout(&out), "k_stop").unwrap().parse().unwrap();
    assert!(k >= 1);
}

fn bench(dir: &Path) -> Output {
    idarr(&[
        "fredholm-bench",
        "--m",
        "60",
        "--n",
        "20",
        "--trials",
        "1",
        "--nsr",
        "1,0.25",
        "--methods",
        "iDARR",
        "--seed",
        "5",
        "-o",
        path(dir),
    ])
}

#[test]
fn bench_writes_one_row_per_trial_and_nsr() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench(dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2);
    assert!(dir.path().join("stats.csv").exists());
}

#[test]
fn bench_csv_is_deterministic_apart_from_timings() {
    let strip_time = |csv: String| -> Vec<String> {
        let mut rows = csv::Reader::from_reader(csv.as_bytes());
        let headers = rows.headers().unwrap().clone();
        let t = headers.iter().position(|h| h == "wall_time_ms").unwrap();
        rows.records()
            .map(|r| {
                let r = r.unwrap();
                r.iter().enumerate().filter(|(i, _)| *i != t).map(|(_, v)| v).collect::<Vec<_>>().join(",")
            })
            .collect()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(bench(a.path()).status.success());
    assert!(bench(b.path()).status.success());
    let read = |d: &Path| fs::read_to_string(d.join("results.csv")).unwrap();
    assert_eq!(strip_time(read(a.path())), strip_time(read(b.path())));
}

#[test]
fn timing_rejects_zero_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let out = idarr(&["timing", "-k", "0", "--n", "20", "--m", "40", "-o", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn delta_psf_without_noise_restores_the_image() {
    let dir = tempfile::tempdir().unwrap();
    let out = idarr(&[
        "deblur",
        "--phantom",
        "16",
        "--delta",
        "--nsr",
        "0",
        "--stop",
        "fixed",
        "-k",
        "1",
        "-o",
        path(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let restored = fs::read(dir.path().join("restored.pgm")).unwrap();
    let observed = fs::read(dir.path().join("observed.pgm")).unwrap();
    assert_eq!(restored.len(), observed.len());
    let worst = restored.iter().zip(&observed).map(|(a, b)| a.abs_diff(*b)).max().unwrap();
    assert!(worst <= 1, "pixel levels differ by {worst}");
}

#[test]
fn oracle_check_reports_through_exit_code() {
    let ok = idarr(&["oracle-check", "--m", "20", "--n", "12", "--seed", "3"]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    assert!(stdout(&ok).lines().all(|l| !l.contains("FAIL")));
    let too_big = idarr(&["oracle-check", "--m", "300"]);
    assert_eq!(too_big.status.code(), Some(1));
}

#[test]
fn usage_and_io_errors_have_distinct_codes() {
    assert_eq!(idarr(&["solve", "--bogus"]).status.code(), Some(1));
    let missing = idarr(&["solve", "--problem", "/nonexistent/problem"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());
    assert!(idarr(&["--help"]).status.success());
}
