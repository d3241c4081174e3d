use multiaxis::denoise::{denoise, DataMatrix};
use multiaxis::graphmetrics::{modularity, Adjacency};
use multiaxis::linalg::sorted_eigen;
use multiaxis::synth::{
    barabasi_albert, corrupt, generate_experiment, graph_to_precision, make_truth_labels,
    SynthConfig,
};
use nalgebra::DMatrix;

#[test]
fn ba_edge_count_and_heavy_tail() {
    let mut heavy = 0;
    for seed in 0..200 {
        let g = barabasi_albert(200, 2, seed).unwrap();
        assert_eq!(g.n_edges(), 2 * 198 + 1);
        assert!(g.is_connected());
        let degrees: Vec<usize> = (0..200).map(|i| g.degree(i)).collect();
        let mean = degrees.iter().sum::<usize>() as f64 / 200.0;
        if *degrees.iter().max().unwrap() as f64 > 4.0 * mean {
            heavy += 1;
        }
    }
    assert!(heavy >= 180, "{heavy} of 200 graphs heavy-tailed");
}

#[test]
fn ba_precision_is_well_conditioned_and_pattern_preserving() {
    for seed in 0..20 {
        let g = barabasi_albert(60, 2, seed).unwrap();
        let psi = graph_to_precision(&g, 0.1);
        assert!(sorted_eigen(&psi).0[0] >= 0.01);
        for i in 0..60 {
            for j in 0..60 {
                if i != j {
                    assert_eq!(psi[(i, j)] != 0.0, g.has_edge(i, j));
                }
            }
        }
    }
}

#[test]
fn ba_truth_labels_have_structure() {
    let g = barabasi_albert(100, 2, 3).unwrap();
    let labels = make_truth_labels(&g, 1.0, 3);
    assert!(labels.iter().max().unwrap() + 1 >= 2);
    assert!(modularity(&g, &labels, 1.0) > 0.0);
    let complete =
        Adjacency::from_edges(5, (0..5).flat_map(|i| ((i + 1)..5).map(move |j| (i, j)))).unwrap();
    assert!(make_truth_labels(&complete, 1.0, 0).iter().all(|&c| c == 0));
}

#[test]
fn corruption_then_denoise_equals_denoise() {
    let cfg = SynthConfig {
        d_rows: 12,
        d_cols: 15,
        replicates: 2,
        seed: 4,
        ..Default::default()
    };
    for alpha in [0.0, 0.25, 0.5, 1.0] {
        for bundle in generate_experiment(&SynthConfig { alpha, ..cfg }).unwrap() {
            let a = denoise(&DataMatrix::new(bundle.latent.clone()).unwrap()).unwrap();
            let b = denoise(&DataMatrix::new(bundle.observed.clone()).unwrap()).unwrap();
            assert!((a.entries() - b.entries()).amax() < 1e-8 * a.entries().amax());
        }
    }
}

#[test]
fn bundles_are_consistent() {
    let cfg = SynthConfig {
        d_rows: 30,
        d_cols: 40,
        alpha: 0.5,
        replicates: 3,
        seed: 7,
        ..Default::default()
    };
    let bundles = generate_experiment(&cfg).unwrap();
    assert_eq!(bundles, generate_experiment(&cfg).unwrap());
    for b in &bundles {
        let scaled = DMatrix::from_fn(30, 40, |i, j| {
            b.noise.r_rows[i] * b.noise.r_cols[j] * b.latent[(i, j)]
        });
        assert_eq!(scaled, b.observed);
        // log|observed/latent| is rank one: every 2x2 log-minor vanishes.
        let l = DMatrix::from_fn(30, 40, |i, j| (b.observed[(i, j)] / b.latent[(i, j)]).ln());
        for (i, j) in [(0, 1), (5, 17), (29, 39)] {
            let minor = l[(0, 0)] + l[(i, j)] - l[(0, j)] - l[(i, 0)];
            assert!(minor.abs() < 1e-10);
        }
        for (adj, psi) in [
            (&b.truth_rows, b.precision.psi_rows()),
            (&b.truth_cols, b.precision.psi_cols()),
        ] {
            let n = adj.n_nodes();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        assert_eq!(psi[(i, j)] != 0.0, adj.has_edge(i, j));
                    }
                }
            }
        }
    }
}

#[test]
fn corrupt_is_reproducible_and_validates_alpha() {
    let latent = DMatrix::from_fn(4, 4, |i, j| 1.0 + i as f64 - j as f64 * 0.3);
    assert_eq!(
        corrupt(&latent, 0.7, 5).unwrap(),
        corrupt(&latent, 0.7, 5).unwrap()
    );
    assert!(corrupt(&latent, -0.1, 5).is_err());
}
