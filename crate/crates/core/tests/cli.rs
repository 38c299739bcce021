use std::process::{Command, Output};

use damlab::experiment::CSV_HEADER;
use damlab::model::parse_instance;

fn damlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_damlab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn gen_then_run_every_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.txt");
    let path = path.to_str().unwrap();
    let g = damlab(&["gen", "--small", "300", "--large-count", "40", "--width", "8", "--stripes", "6", "--seed", "2", "--out", path]);
    assert!(g.status.success());
    let (h, inst) = parse_instance(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!((h.small, inst.large_count(), inst.w, inst.k), (300, 40, 8, 6));

    for algo in ["ram", "sort-dam", "ple-dfs", "ple-bfs", "ple-auto", "sampled"] {
        let o = damlab(&["run", "--algo", algo, "--B", "8", "--M", "128", "--in", path, "--csv"]);
        assert!(o.status.success(), "{algo}: {}", String::from_utf8_lossy(&o.stderr));
        let text = stdout(&o);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), CSV_HEADER.split(',').count());
        assert!(row[0].starts_with(algo));
        assert_eq!(&row[1..5], &["300", "40", "8", "6"]);
    }
}

#[test]
fn trace_goes_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.txt");
    let path = path.to_str().unwrap();
    assert!(damlab(&["gen", "--small", "64", "--large-count", "8", "--width", "4", "--stripes", "2", "--out", path]).status.success());
    let o = damlab(&["run", "--algo", "ple-dfs", "--B", "4", "--M", "64", "--in", path, "--csv", "--trace"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 2);
    assert!(!o.stderr.is_empty());
}

#[test]
fn exit_codes() {
    assert_eq!(damlab(&["run", "--algo", "nope", "--B", "4", "--M", "32", "--in", "x"]).status.code(), Some(2));
    assert_eq!(damlab(&["run", "--algo", "sort-dam", "--B", "4", "--M", "32", "--in", "/nonexistent/inst"]).status.code(), Some(4));
    assert_eq!(damlab(&["gen", "--small", "4", "--large-count", "2", "--width", "1", "--stripes", "9"]).status.code(), Some(2));
    assert_eq!(damlab(&["bounds", "--S", "8", "--L", "8", "--w", "1", "--k", "1", "--B", "4", "--M", "1"]).status.code(), Some(2));
}

#[test]
fn bounds_prints_worked_example() {
    let o = damlab(&["bounds", "--S", "1024", "--L", "512", "--w", "32", "--k", "4", "--B", "8", "--M", "64"]);
    let text = stdout(&o);
    assert!(text.lines().any(|l| l == "ple_lower=48"));
    assert!(text.lines().any(|l| l == "ple_upper=216"));
}

#[test]
fn bench_emits_one_row_per_point_and_algorithm() {
    let o = damlab(&[
        "bench",
        "--B",
        "8",
        "--M",
        "128",
        "--algo",
        "sort-dam,ple-bfs",
        "--small",
        "200",
        "--large-count",
        "30",
        "--width",
        "8",
        "--stripes",
        "4",
        "--sweep",
        "seed=1,2,3",
        "--sweep",
        "B=4,8",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    assert_eq!(text.lines().count(), 1 + 3 * 2 * 2);
}
