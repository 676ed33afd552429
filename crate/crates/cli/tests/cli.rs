use std::path::Path;
use std::process::{Command, Output};

fn octkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_octkit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn octkit")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn gen(dir: &Path, name: &str) {
    let o = octkit(
        dir,
        &[
            "malgen",
            "--records",
            "10000",
            "--entities",
            "500",
            "--sites",
            "100",
            "--seed",
            "7",
            "--out",
            name,
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn malgen_writes_fixed_width_file() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "d.log");
    let bytes = std::fs::read(dir.path().join("d.log")).unwrap();
    assert_eq!(bytes.len(), 1_000_000);
    assert!(bytes.chunks(100).all(|r| r[99] == b'\n'));
    assert!(stderr(&octkit(dir.path(), &["malgen", "--out", "x.log"])).contains("# seed = 1"));
}

#[test]
fn malgen_is_deterministic_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "a.log");
    gen(dir.path(), "b.log");
    let a = std::fs::read(dir.path().join("a.log")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.log")).unwrap());

    let o = octkit(
        dir.path(),
        &[
            "malgen",
            "--records",
            "1000",
            "--split",
            "3",
            "--out",
            "s.log",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let total: u64 = (0..3)
        .map(|i| {
            std::fs::metadata(dir.path().join(format!("s.part-{i:03}")))
                .unwrap()
                .len()
        })
        .sum();
    assert_eq!(total, 100_000);
}

#[test]
fn malstone_verify_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "d.log");
    let o = octkit(
        dir.path(),
        &[
            "malstone", "--mode", "b", "--window", "604800", "--input", "d.log", "--verify",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("site_id,window_index,numerator,denominator,ratio"));
    assert!(out.contains("# window = 604800"));
    assert!(stderr(&o).contains("match the oracle"));
}

#[test]
fn malstone_table_matches_oracle_without_network() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "d.log");
    let local = octkit(dir.path(), &["malstone", "--input", "d.log"]);
    let dist = octkit(
        dir.path(),
        &[
            "malstone",
            "--input",
            "d.log",
            "--distributed",
            "--workers",
            "5",
        ],
    );
    assert_eq!(local.status.code(), Some(0));
    assert_eq!(dist.status.code(), Some(0), "{}", stderr(&dist));
    let rows = |o: &Output| {
        stdout(o)
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(String::from)
            .collect::<Vec<_>>()
    };
    assert_eq!(rows(&local), rows(&dist));
}

#[test]
fn malstone_timing_report() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "d.log");
    let o = octkit(
        dir.path(),
        &["malstone", "--input", "d.log", "--report", "timing"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("section,name,value"));
    assert!(out.contains("phase,total,"));
    assert!(out.contains("worker,r0n0,"));
}

#[test]
fn usage_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = octkit(dir.path(), &["--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));

    let o = octkit(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("simbench"));

    assert_eq!(octkit(dir.path(), &["malgen"]).status.code(), Some(1));
    assert_eq!(
        octkit(
            dir.path(),
            &["malstone", "--mode", "b", "--window", "0", "--input", "x"]
        )
        .status
        .code(),
        Some(1)
    );

    let o = octkit(dir.path(), &["malstone", "--input", "missing.log"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("octkit: "));

    std::fs::write(dir.path().join("bad.scenario"), "racks = 0\n").unwrap();
    assert_eq!(
        octkit(dir.path(), &["--config", "bad.scenario", "gmp-ping"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn simbench_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--seed",
        "3",
        "simbench",
        "--records",
        "5000",
        "--racks",
        "2",
        "--workers-per-rack",
        "3",
    ];
    let a = octkit(dir.path(), &args);
    let b = octkit(dir.path(), &args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let out = stdout(&a);
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("layout,racks,workers,policy,"));
    assert!(rows[1].starts_with("local,1,6,"));
    assert!(rows[2].starts_with("distributed-naive,2,6,naive,"));
    assert!(rows[3].starts_with("distributed-balanced,2,6,balanced,"));
}

#[test]
fn monitor_report_is_seeded_and_flags_slow_node() {
    let dir = tempfile::tempdir().unwrap();
    let a = octkit(dir.path(), &["--seed", "5", "monitor-report"]);
    let b = octkit(dir.path(), &["--seed", "5", "monitor-report"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let out = stdout(&a);
    let flagged = out
        .lines()
        .find_map(|l| l.strip_prefix("# underperformers = "))
        .unwrap();
    assert_eq!(flagged.split_whitespace().count(), 1, "{flagged}");
    assert_eq!(out.lines().filter(|l| l.starts_with("node,")).count(), 32);
    assert!(out.lines().any(|l| l.starts_with("edge,rack0-core,")));
}

#[test]
fn monitor_report_reads_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut samples = String::new();
    for r in 0..3u64 {
        for (n, rate) in [
            ("r0n0", 80_000_000),
            ("r0n1", 90_000_000),
            ("r1n0", 85_000_000),
            ("r1n1", 1_000),
        ] {
            samples.push_str(&format!("{n},{},50,1000,0,{rate},{rate}\n", r * 1_000_000));
        }
    }
    std::fs::write(dir.path().join("s.csv"), samples).unwrap();
    std::fs::write(
        dir.path().join("t.csv"),
        "# flows\nr0n0,r1n0,1000\nr0n1,r1n1,500\n",
    )
    .unwrap();
    let o = octkit(
        dir.path(),
        &["monitor-report", "--samples", "s.csv", "--traffic", "t.csv"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("# underperformers = r1n1"), "{out}");
    assert!(
        out.lines()
            .any(|l| l.starts_with("edge,rack0-core,") && l.contains(",1500,")),
        "{out}"
    );

    std::fs::write(dir.path().join("t2.csv"), "r0n0,nowhere,1\n").unwrap();
    let o = octkit(
        dir.path(),
        &[
            "monitor-report",
            "--samples",
            "s.csv",
            "--traffic",
            "t2.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gmp_ping_over_simulator_and_udp() {
    let dir = tempfile::tempdir().unwrap();
    let o = octkit(
        dir.path(),
        &["gmp-ping", "--count", "4", "--from", "r0n0", "--to", "r0n1"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().filter(|l| l.ends_with(",ok")).collect();
    assert_eq!(rows.len(), 4);
    // Intra-rack round trip is well under a millisecond.
    for r in rows {
        let rtt: f64 = r.split(',').nth(2).unwrap().parse().unwrap();
        assert!(rtt > 0.0 && rtt < 1.0, "{r}");
    }

    let o = octkit(
        dir.path(),
        &["gmp-ping", "--udp", "--count", "2", "--interval-ms", "1"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with(",ok")).count(), 2);

    assert_eq!(
        octkit(dir.path(), &["gmp-ping", "--to", "core"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn text_format_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "d.log");
    let o = octkit(
        dir.path(),
        &[
            "--format", "text", "--out", "t.txt", "malstone", "--input", "d.log",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(dir.path().join("t.txt")).unwrap();
    assert!(text.contains("# format = text"));
    assert!(!text.contains("site_id,window_index"));
}
