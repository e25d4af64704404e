use copula_ot::clustering::{centroid_report, cluster_copulas, ClusterParams};
use copula_ot::copula::{pair_copulas, reference_copula, TargetKind, TargetSpec};
use copula_ot::dependence::{tfdc_matrix, TfdcSpec};
use copula_ot::io::{parse_cop, parse_csv, render_cop};
use copula_ot::synth::substream;
use copula_ot::transport::{pairwise_divergence_matrix, GroundCost, SinkhornConfig};
use rand::Rng;

const M: usize = 8;

/// Four columns: `b` and `c` rise with `a`, `d` is unrelated.
fn table_text() -> String {
    let mut rng = substream(7, 0);
    let mut text = String::from("a,b,c,d\n");
    for _ in 0..400 {
        let z: f64 = rng.random();
        let (e1, e2, d): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        text.push_str(&format!("{z},{},{},{d}\n", z + 0.02 * e1, z + 0.03 * e2));
    }
    text
}

fn reference(kind: TargetKind) -> copula_ot::copula::CopulaHistogram {
    reference_copula(&TargetSpec::new(kind, M)).unwrap()
}

#[test]
fn csv_to_clusters_and_tfdc() {
    let table = parse_csv(&table_text(), "inline").unwrap();
    let pairs = pair_copulas(&table, M).unwrap();
    let labels: Vec<(usize, usize)> = pairs.iter().map(|p| (p.i, p.j)).collect();
    assert_eq!(labels, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
    let hists: Vec<_> = pairs.into_iter().map(|p| p.copula).collect();

    // copulas survive the text format
    for h in &hists {
        let back = parse_cop(&render_cop(h), "inline").unwrap();
        for (x, y) in back.as_slice().iter().zip(h.as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    let cost = GroundCost::squared_euclidean(M);
    let cfg = SinkhornConfig::for_resolution(M);
    let d = pairwise_divergence_matrix(&hists, &cost, &cfg).unwrap();
    for i in 0..6 {
        assert!(d[[i, i]].abs() <= 1e-9);
        for j in 0..6 {
            assert_eq!(d[[i, j]], d[[j, i]]);
        }
    }

    // the three pairs involving `d` are independent, the rest comonotone
    let model = cluster_copulas(&hists, &cost, &cfg, &ClusterParams::new(2, 3)).unwrap();
    let a = &model.assignment;
    assert_eq!(a[2], a[4]);
    assert_eq!(a[2], a[5]);
    assert_ne!(a[0], a[2]);
    let trace = &model.objective_trace;
    assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-7));
    let report = centroid_report(&model, &hists, &cost, &cfg).unwrap();
    assert_eq!(report.iter().map(|r| r.size).sum::<usize>(), 6);

    let spec = TfdcSpec::new(
        vec![reference(TargetKind::Upper), reference(TargetKind::Lower)],
        vec![reference(TargetKind::Independence)],
        cost,
        cfg,
        false,
    )
    .unwrap();
    let t = tfdc_matrix(&table, &spec).unwrap();
    assert!(t[[0, 1]] >= 0.9, "{}", t[[0, 1]]);
    assert!(t[[0, 2]] >= 0.9, "{}", t[[0, 2]]);
    assert!(t[[0, 3]] <= 0.15, "{}", t[[0, 3]]);
    assert_eq!(t[[1, 3]], t[[3, 1]]);
}
