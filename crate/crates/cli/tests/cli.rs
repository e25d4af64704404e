use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use copula_ot::copula::{empirical_copula_from_samples, reference_copula, TargetKind, TargetSpec};
use copula_ot::io::{read_cop, write_cop};
use copula_ot::synth::{gen_gaussian_pair, substream};
use rand::Rng;
use rand_distr::StandardNormal;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_copula-ot"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_table(path: &Path, names: &[&str], cols: &[Vec<f64>]) {
    let mut text = names.join(",");
    text.push('\n');
    for t in 0..cols[0].len() {
        let row: Vec<String> = cols.iter().map(|c| c[t].to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

/// Four columns whose six pairs are two near-M and four near-W copulas.
fn mw_table(dir: &Path) -> PathBuf {
    let mut rng = substream(8, 0);
    let t = 400;
    let z: Vec<f64> = (0..t).map(|_| rng.random()).collect();
    let mut jitter = |sign: f64| -> Vec<f64> {
        z.iter()
            .map(|&v| sign * v + 0.01 * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let cols = vec![jitter(1.0), jitter(1.0), jitter(-1.0), jitter(-1.0)];
    let path = dir.join("mw.csv");
    write_table(&path, &["a", "b", "c", "d"], &cols);
    path
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn cluster_separates_comonotone_and_countermonotone_pairs() {
    let dir = TempDir::new().unwrap();
    let input = mw_table(dir.path());
    let out = dir.path().join("model");
    ok(&[
        "cluster",
        "--input",
        s(&input),
        "--m",
        "8",
        "--k",
        "2",
        "--seed",
        "3",
        "--out",
        s(&out),
    ]);
    let rows = csv_rows(&out.join("assignment.csv"));
    assert_eq!(
        rows[0],
        ["pair_i", "pair_j", "cluster", "distance_to_centroid"]
    );
    let cluster_of = |a: &str, b: &str| {
        rows.iter()
            .find(|r| r[0] == a && r[1] == b)
            .map(|r| r[2].clone())
            .unwrap()
    };
    let m_side = cluster_of("a", "b");
    assert_eq!(cluster_of("c", "d"), m_side);
    for (x, y) in [("a", "c"), ("a", "d"), ("b", "c"), ("b", "d")] {
        assert_ne!(cluster_of(x, y), m_side, "{x}{y}");
    }
    for f in [
        "centroid_0.cop",
        "centroid_1.cop",
        "centroid_0.pgm",
        "centroid_1.pgm",
        "objective.csv",
        "run-meta.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run-meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["parameters"]["k"], 2);
    assert_eq!(meta["parameters"]["lambda"], 50.0 * 64.0);
}

#[test]
fn query_ranks_the_gaussian_pair_first() {
    let dir = TempDir::new().unwrap();
    let (x, y) = gen_gaussian_pair(0.7, 3000, 5).unwrap();
    let mut rng = substream(5, 1);
    let w: Vec<f64> = (0..3000).map(|_| rng.random()).collect();
    let v: Vec<f64> = x
        .iter()
        .map(|&a| -a + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let input = dir.path().join("data.csv");
    write_table(&input, &["x", "y", "w", "v"], &[x, y, w, v]);
    let target = dir.path().join("gauss.cop");
    write_cop(
        &reference_copula(&TargetSpec::new(TargetKind::Gaussian { rho: 0.7 }, 10)).unwrap(),
        &target,
    )
    .unwrap();
    let out = dir.path().join("q");
    ok(&[
        "query",
        "--input",
        s(&input),
        "--targets",
        s(&target),
        "--out",
        s(&out),
    ]);
    let rows = csv_rows(&out.join("query-ranking.csv"));
    assert_eq!(rows[0], ["rank", "pair_i", "pair_j", "distance", "target"]);
    assert_eq!(rows.len(), 7);
    assert_eq!(&rows[1][..3], ["1", "x", "y"]);
    assert_eq!(rows[1][4], "gauss");
    let d: Vec<f64> = rows[1..].iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(d.windows(2).all(|p| p[0] <= p[1]), "{d:?}");
}

#[test]
fn tfdc_scores_a_duplicated_column_near_one() {
    let dir = TempDir::new().unwrap();
    let mut rng = substream(2, 0);
    let x: Vec<f64> = (0..500).map(|_| rng.random()).collect();
    let z: Vec<f64> = (0..500).map(|_| rng.random()).collect();
    let input = dir.path().join("data.csv");
    write_table(&input, &["x", "x2", "z"], &[x.clone(), x, z]);
    let mut paths = Vec::new();
    for (name, kind) in [
        ("upper", TargetKind::Upper),
        ("lower", TargetKind::Lower),
        ("pi", TargetKind::Independence),
    ] {
        let p = dir.path().join(format!("{name}.cop"));
        write_cop(&reference_copula(&TargetSpec::new(kind, 10)).unwrap(), &p).unwrap();
        paths.push(p);
    }
    let out = dir.path().join("t");
    ok(&[
        "tfdc",
        "--input",
        s(&input),
        "--targets",
        s(&paths[0]),
        s(&paths[1]),
        "--forgets",
        s(&paths[2]),
        "--out",
        s(&out),
    ]);
    let rows = csv_rows(&out.join("tfdc-matrix.csv"));
    assert_eq!(rows[0], ["", "x", "x2", "z"]);
    let entry: f64 = rows[1][2].parse().unwrap();
    assert!(entry >= 0.9, "{entry}");
    let indep: f64 = rows[1][3].parse().unwrap();
    assert!(indep < 0.5, "{indep}");
}

#[test]
fn copula_files_round_trip() {
    let dir = TempDir::new().unwrap();
    let input = mw_table(dir.path());
    let out = dir.path().join("c");
    ok(&[
        "copula",
        "--input",
        s(&input),
        "--m",
        "6",
        "--heatmaps",
        "--out",
        s(&out),
    ]);
    let table = copula_ot::io::load_csv(&input).unwrap();
    let (a, c): (Vec<f64>, Vec<f64>) = (table.column(0).to_vec(), table.column(2).to_vec());
    let want = empirical_copula_from_samples(&a, &c, 6).unwrap();
    let got = read_cop(&out.join("pair_0_2.cop")).unwrap();
    for (g, w) in got.as_slice().iter().zip(want.as_slice()) {
        assert!((g - w).abs() <= 1e-12);
    }
    assert!(out.join("pair_2_3.pgm").exists());
    assert_eq!(csv_rows(&out.join("pairs.csv")).len(), 7);
}

#[test]
fn dist_matrix_is_symmetric_with_pair_labels() {
    let dir = TempDir::new().unwrap();
    let input = mw_table(dir.path());
    let out = dir.path().join("d");
    ok(&[
        "dist",
        "--input",
        s(&input),
        "--m",
        "6",
        "--debias",
        "--out",
        s(&out),
    ]);
    let rows = csv_rows(&out.join("distance-matrix.csv"));
    assert_eq!(rows[0], ["", "a:b", "a:c", "a:d", "b:c", "b:d", "c:d"]);
    for (i, row) in rows.iter().enumerate().skip(1) {
        assert_eq!(row[i], "0");
        for (j, cell) in row.iter().enumerate().skip(1) {
            assert_eq!(cell, &rows[j][i]);
        }
    }
}

#[test]
fn synth_and_power_repeat_byte_for_byte() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "synth",
            "--scenario",
            "pattern",
            "--pattern",
            "circle",
            "--noise",
            "0.5",
            "--t",
            "300",
            "--seed",
            "11",
            "--out",
            s(out),
        ]);
        ok(&[
            "power",
            "--patterns",
            "linear,circle",
            "--noise",
            "0,1",
            "--coefficients",
            "spearman,dcor",
            "--n-sims",
            "20",
            "--sample-size",
            "60",
            "--seed",
            "4",
            "--out",
            s(out),
        ]);
    }
    for f in ["synth.csv", "power.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let rows = csv_rows(&a.join("power.csv"));
    assert_eq!(rows.len(), 1 + 2 * 2 * 2);
    assert_eq!(rows[1][..3], ["linear", "0", "spearman"]);
    assert_eq!(rows[1][3], "1");
}

#[test]
fn reference_writes_cop_and_heatmap() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r");
    ok(&[
        "reference",
        "--kind",
        "gaussian",
        "--rho",
        "-0.5",
        "--m",
        "7",
        "--out",
        s(&out),
    ]);
    let h = read_cop(&out.join("gaussian.cop")).unwrap();
    assert_eq!(h.m(), 7);
    assert!(fs::read_to_string(out.join("gaussian.pgm"))
        .unwrap()
        .starts_with("P2\n7 7\n255\n"));
    assert_eq!(
        run(&[
            "reference",
            "--kind",
            "upper",
            "--rho",
            "0.5",
            "--out",
            s(&out)
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = TempDir::new().unwrap();
    let input = mw_table(dir.path());
    // malformed input
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n3,oops\n").unwrap();
    let out = dir.path().join("o");
    assert_eq!(
        run(&["dist", "--input", s(&bad), "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["dist", "--input", "/no/such.csv", "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );
    // unknown flag and missing seed
    assert_eq!(
        run(&["dist", "--input", s(&input), "--out", s(&out), "--bogus"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["cluster", "--input", s(&input), "--out", s(&out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "dist",
            "--input",
            s(&input),
            "--lambda",
            "-1",
            "--out",
            s(&out)
        ])
        .status
        .code(),
        Some(2)
    );
    // convergence failure leaves no artifacts behind
    let failed = run(&[
        "dist",
        "--input",
        s(&input),
        "--m",
        "6",
        "--max-iter",
        "1",
        "--tol",
        "1e-15",
        "--out",
        s(&out),
    ]);
    assert_eq!(failed.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&failed.stderr).contains("no convergence"));
    assert!(!out.exists());
    // output directory below a regular file
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let code = run(&[
        "dist",
        "--input",
        s(&input),
        "--m",
        "4",
        "--out",
        s(&blocker.join("sub")),
    ])
    .status
    .code();
    assert_eq!(code, Some(4));
}
