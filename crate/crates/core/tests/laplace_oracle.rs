mod oracles;

use multiaxis::kroncore::Axis;
use multiaxis::laplace::{
    build_projected_precision, correction_matrix, hessian_entry_form, psd_safeguard, pseudo_stats,
};
use multiaxis::latentpoint::{find_z_star, FlipFlopConfig};
use multiaxis::DataMatrix;
use nalgebra::DMatrix;
use oracles::*;

const SIZES: [(usize, usize); 6] = [(1, 3), (2, 2), (2, 5), (3, 4), (5, 3), (5, 6)];

#[test]
fn projected_precision_matches_dense_projection() {
    let mut rng = rng(21);
    for (dr, dc) in SIZES {
        let fp = random_factor(&mut rng, dr, dc);
        let tp = build_projected_precision(&fp).unwrap();
        let p = dense_projector(dr, dc);
        let want = &p * dense_omega(&fp) * p.transpose();
        assert!((tp.projected_precision() - &want).amax() < 1e-8 * want.amax());
        let inv = want.try_inverse().unwrap();
        assert!((tp.inverse() - &inv).amax() < 1e-8 * inv.amax());
    }
}

#[test]
fn hessian_form_matches_second_differences() {
    for (dr, dc) in [(2, 3), (3, 2), (4, 4)] {
        for axis in [Axis::Rows, Axis::Cols] {
            let d = if axis == Axis::Rows { dr } else { dc };
            for a in 0..d {
                for b in 0..d {
                    let h = hessian_entry_form(axis, (a, b), (dr, dc)).unwrap();
                    let dense = dense_hessian(axis, a, b, dr, dc);
                    for k in 0..dr * dc {
                        let mut e = nalgebra::DVector::zeros(dr * dc);
                        e[k] = 1.0;
                        let col = h.apply_vec(&e).unwrap();
                        assert_eq!(col, dense.column(k).into_owned());
                    }
                }
            }
        }
    }
}

#[test]
fn correction_matches_dense_trace_formula() {
    let mut rng = rng(22);
    for (dr, dc) in SIZES {
        let fp = random_factor(&mut rng, dr, dc);
        let tp = build_projected_precision(&fp).unwrap();
        for axis in [Axis::Rows, Axis::Cols] {
            let got = correction_matrix(&tp, axis);
            let want = dense_correction(&fp, axis);
            assert!(
                (&got - &want).amax() < 1e-8 * want.amax().max(1.0),
                "{dr}x{dc} {axis:?}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn pseudo_stats_are_symmetric_psd_with_equal_traces() {
    let mut rng = rng(23);
    for (dr, dc) in [(3, 4), (5, 6)] {
        let fp = random_factor(&mut rng, dr, dc);
        let x = gaussian(&mut rng, dr, dc).map(|v| v + 3.0);
        let y = multiaxis::denoise(&DataMatrix::new(x).unwrap()).unwrap();
        let fiber = find_z_star(&y, &fp, None, &FlipFlopConfig::default()).unwrap();
        for correction in [false, true] {
            let s = pseudo_stats(&fiber, &fp, correction).unwrap();
            for m in [s.s_rows(), s.s_cols()] {
                assert!((m - m.transpose()).amax() < 1e-12);
                let (vals, _) = multiaxis::linalg::sorted_eigen(m);
                assert!(vals[0] >= -1e-12 * vals.amax());
            }
            assert!((s.s_rows().trace() - s.s_cols().trace()).abs() < 1e-8 * s.s_rows().trace());
        }
    }
}

#[test]
fn safeguard_floors_negative_spectrum() {
    let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0, 2.0]);
    let out = psd_safeguard(&m);
    let (vals, _) = multiaxis::linalg::sorted_eigen(&out);
    assert!((vals[0] - 2e-8).abs() < 1e-15);
    assert!((vals[2] - 2.0).abs() < 1e-14);
}
