mod oracles;

use multiaxis::kroncore::Axis;
use multiaxis::latentpoint::{
    aggregate_quadratic, find_z_star, quadratic_value, solve_product_constrained_qp,
    FlipFlopConfig, NoiseFactors, QpConfig,
};
use multiaxis::{denoise, DataMatrix};
use nalgebra::{DMatrix, DVector};
use oracles::*;
use rand::Rng;

#[test]
fn aggregate_matches_vec_form_quadratic() {
    let mut rng = rng(41);
    for (dr, dc) in [(2, 3), (4, 4), (5, 6), (6, 5)] {
        let fp = random_factor(&mut rng, dr, dc);
        let omega = dense_omega(&fp);
        let y = gaussian(&mut rng, dr, dc);
        for axis in [Axis::Rows, Axis::Cols] {
            let (n_free, n_fixed) = if axis == Axis::Rows {
                (dr, dc)
            } else {
                (dc, dr)
            };
            let fixed = DVector::from_fn(n_fixed, |_, _| rng.random_range(0.3..2.0));
            let a = aggregate_quadratic(&y, &fp, &fixed, axis).unwrap();
            for _ in 0..5 {
                let free = DVector::from_fn(n_free, |_, _| rng.random_range(0.3..2.0));
                let (rr, rc) = if axis == Axis::Rows {
                    (&free, &fixed)
                } else {
                    (&fixed, &free)
                };
                let z = DMatrix::from_fn(dr, dc, |i, j| rr[i] * y[(i, j)] * rc[j]);
                let v = vec_of(&z);
                let want = (v.transpose() * &omega * &v)[(0, 0)];
                let got = (free.transpose() * &a * &free)[(0, 0)];
                assert!((got - want).abs() < 1e-10 * want.abs());
                assert!((quadratic_value(&fp, &z).unwrap() - want).abs() < 1e-10 * want.abs());
            }
        }
    }
}

#[test]
fn qp_beats_random_feasible_points() {
    let mut rng = rng(42);
    for n in 2..6 {
        let g = gaussian(&mut rng, n, n);
        let a = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
        let r = solve_product_constrained_qp(&a, &QpConfig::default()).unwrap();
        assert!((r.iter().map(|v| v.ln()).sum::<f64>()).abs() < 1e-10);
        let best = (r.transpose() * &a * &r)[(0, 0)];
        for _ in 0..2000 {
            let u = DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5));
            let u = u.add_scalar(-u.mean());
            let s = u.map(f64::exp);
            assert!((s.transpose() * &a * &s)[(0, 0)] >= best - 1e-12 * best);
        }
    }
}

#[test]
fn flip_flop_is_monotone_and_stays_on_the_fiber() {
    let mut rng = rng(43);
    let mut violations = 0;
    for trial in 0..50 {
        let (dr, dc) = (2 + trial % 5, 2 + (trial / 5) % 5);
        let fp = random_factor(&mut rng, dr, dc);
        let x = gaussian(&mut rng, dr, dc);
        let y = denoise(&DataMatrix::new(x).unwrap()).unwrap();
        let fiber = find_z_star(&y, &fp, None, &FlipFlopConfig::default()).unwrap();
        violations += fiber
            .trace
            .windows(2)
            .filter(|w| w[1] > w[0] + 1e-12)
            .count();
        let (rr, rc) = (fiber.factors.r_rows(), fiber.factors.r_cols());
        assert!(rr.iter().map(|v| v.ln()).sum::<f64>().abs() < 1e-9);
        assert!(rc.iter().map(|v| v.ln()).sum::<f64>().abs() < 1e-9);
        let back = denoise(&DataMatrix::new(fiber.z_star.clone()).unwrap()).unwrap();
        assert!((back.entries() - y.entries()).amax() < 1e-8 * y.entries().amax());
    }
    assert_eq!(violations, 0);
}

#[test]
fn noise_factor_validation() {
    let ok = NoiseFactors::new(
        DVector::from_vec(vec![2.0, 0.5]),
        DVector::from_vec(vec![1.0]),
    );
    assert!(ok.is_ok());
    assert!(NoiseFactors::new(
        DVector::from_vec(vec![2.0, 1.0]),
        DVector::from_vec(vec![1.0])
    )
    .is_err());
    assert!(NoiseFactors::new(
        DVector::from_vec(vec![-1.0, -1.0]),
        DVector::from_vec(vec![1.0])
    )
    .is_err());
}
