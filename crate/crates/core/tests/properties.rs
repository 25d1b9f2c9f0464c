use dion2::bench::{comm_volume, SyncMode};
use dion2::linalg::{gram_schmidt, jacobi_svd_full, matmul, Matrix, Rng};
use dion2::optim::lr_schedule;
use dion2::orthonorm::{newton_schulz, newton_schulz_auto, NewtonSchulzParams};
use dion2::selection::{
    gather, scatter_update, select_count, select_l1, select_random, Axis, SelectionStrategy,
};
use dion2::trainer::{write_reports_csv, StepReport};
use dion2::verify::{argsort_top_k, low_rank_commutation_error};
use proptest::prelude::*;

fn gaussian(r: usize, c: usize, seed: u64) -> Matrix {
    Matrix::gaussian(r, c, &mut Rng::new(seed, 0))
}

fn naive(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_matches_naive(m in 1usize..40, k in 1usize..40, n in 1usize..40, seed: u64) {
        let a = gaussian(m, k, seed);
        let b = gaussian(k, n, seed ^ 1);
        let err = matmul(&a, &b).unwrap().max_abs_diff(&naive(&a, &b));
        prop_assert!(err <= 1e-12 * (k as f64).sqrt().max(1.0));
    }

    #[test]
    fn ns_scale_invariant(r in 1usize..24, c in 1usize..24, seed: u64, log_c in -3.0f64..3.0) {
        // exact up to rounding once the eps guard is out of the way
        let m = gaussian(r, c, seed);
        let p = NewtonSchulzParams { eps: 0.0, ..NewtonSchulzParams::default() };
        let base = newton_schulz_auto(&m, &p).unwrap();
        let scaled = newton_schulz_auto(&m.scaled(10f64.powf(log_c)), &p).unwrap();
        prop_assert!(base.max_abs_diff(&scaled) <= 1e-8, "{}", base.max_abs_diff(&scaled));
    }

    #[test]
    fn ns_scale_invariant_default_eps(r in 1usize..24, c in 1usize..24, seed: u64, log_c in 0.0f64..3.0) {
        // eps shifts the normalized input by about eps/‖cM‖_F
        let m = gaussian(r, c, seed);
        let p = NewtonSchulzParams::default();
        let base = newton_schulz_auto(&m, &p).unwrap();
        let scaled = newton_schulz_auto(&m.scaled(10f64.powf(log_c)), &p).unwrap();
        prop_assert!(base.max_abs_diff(&scaled) <= 1e-5, "{}", base.max_abs_diff(&scaled));
    }

    #[test]
    fn ns_preserves_singular_vectors(r in 2usize..20, c in 2usize..20, seed: u64) {
        // Odd polynomials keep U and V: M·Oᵀ = U·Σ·f(Σ)·Uᵀ is symmetric PSD.
        let m = gaussian(r, c, seed);
        let o = newton_schulz_auto(&m, &NewtonSchulzParams::default()).unwrap();
        let s = matmul(&m, &o.transpose()).unwrap();
        let asym = s.max_abs_diff(&s.transpose());
        prop_assert!(asym <= 1e-9 * s.max_abs().max(1.0), "asymmetry {}", asym);
        let svd = jacobi_svd_full(&m).unwrap();
        // Oᵀ·u_i ≈ f(σ_i)·v_i for every nonzero singular pair
        for i in 0..svd.s.len() {
            if svd.s[i] < 1e-6 * svd.s[0] {
                continue;
            }
            let u = Matrix::from_fn(r, 1, |a, _| svd.u[(a, i)]);
            let v = Matrix::from_fn(c, 1, |a, _| svd.v[(a, i)]);
            let ov = matmul(&o.transpose(), &u).unwrap();
            let f = ov.as_slice().iter().zip(v.as_slice()).map(|(x, y)| x * y).sum::<f64>();
            let resid = ov.sub(&v.scaled(f)).unwrap().frobenius_norm();
            prop_assert!(resid <= 1e-8, "pair {} residual {}", i, resid);
        }
    }

    #[test]
    fn ns_low_rank_commutes(rows in 4usize..40, cols in 4usize..40, seed: u64) {
        let rank = 1 + (seed as usize % (rows.min(cols) - 1));
        let err = low_rank_commutation_error(rows, cols, rank, 1, &mut Rng::new(seed, 9)).unwrap();
        prop_assert!(err <= 1e-8, "deviation {}", err);
    }

    #[test]
    fn ns_auto_matches_explicit_orientation(r in 1usize..30, c in 1usize..30, seed: u64) {
        let m = gaussian(r, c, seed);
        let p = NewtonSchulzParams::default();
        let auto = newton_schulz_auto(&m, &p).unwrap();
        let manual = if r > c {
            newton_schulz(&m.transpose(), &p).unwrap().transpose()
        } else {
            newton_schulz(&m, &p).unwrap()
        };
        prop_assert_eq!(auto, manual);
    }

    #[test]
    fn random_selection_valid(d in 1usize..200, pct in 1u32..=100, seed: u64, step: u64) {
        let alpha = pct as f64 / 100.0;
        let draw = || select_random(alpha, d, Axis::Rows, &mut Rng::for_step(seed, 3, step)).unwrap();
        let mask = draw();
        prop_assert_eq!(mask.len(), select_count(alpha, d).unwrap());
        prop_assert!(mask.indices().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(mask.indices().iter().all(|&i| i < d));
        prop_assert_eq!(mask, draw());
    }

    #[test]
    fn scatter_writes_only_selection(
        r in 1usize..30,
        c in 1usize..30,
        pct in 1u32..=100,
        cols_axis: bool,
        seed: u64,
    ) {
        let axis = if cols_axis { Axis::Columns } else { Axis::Rows };
        let w = gaussian(r, c, seed);
        let mask = select_random(pct as f64 / 100.0, axis.len((r, c)), axis, &mut Rng::new(seed, 4)).unwrap();
        let vals = gather(&gaussian(r, c, seed ^ 7), &mask).unwrap();
        let mut after = w.clone();
        scatter_update(&mut after, &mask, &vals, 0.3).unwrap();
        let sel = mask.selected();
        let pos: Vec<usize> = {
            let mut p = vec![usize::MAX; sel.len()];
            for (k, &i) in mask.indices().iter().enumerate() {
                p[i] = k;
            }
            p
        };
        for i in 0..r {
            for j in 0..c {
                let a = if cols_axis { j } else { i };
                if sel[a] {
                    let v = if cols_axis { vals[(i, pos[j])] } else { vals[(pos[i], j)] };
                    prop_assert_eq!(after[(i, j)].to_bits(), (w[(i, j)] - 0.3 * v).to_bits());
                } else {
                    prop_assert_eq!(after[(i, j)].to_bits(), w[(i, j)].to_bits());
                }
            }
        }
    }

    #[test]
    fn gather_of_full_mask_is_identity(r in 1usize..20, c in 1usize..20, seed: u64) {
        let m = gaussian(r, c, seed);
        let mask = select_l1(&m, 1.0, Axis::Auto).unwrap();
        prop_assert!(mask.is_full());
        prop_assert_eq!(gather(&m, &mask).unwrap(), m);
    }

    #[test]
    fn comm_ratio_exact(r in 1usize..5000, c in 1usize..5000, pct in 1u32..=100) {
        let alpha = pct as f64 / 100.0;
        let full = comm_volume(r, c, alpha, 4, SyncMode::FullMomentum, SelectionStrategy::Random).unwrap();
        let sel = comm_volume(r, c, alpha, 4, SyncMode::SelectedSubmatrix, SelectionStrategy::Random).unwrap();
        let l1 = comm_volume(r, c, alpha, 4, SyncMode::SelectedSubmatrix, SelectionStrategy::L1).unwrap();
        let short = r.min(c) as u64;
        let k = select_count(alpha, r.min(c)).unwrap() as u64;
        prop_assert_eq!(sel * short, full * k);
        prop_assert_eq!(l1, sel + 8 * k);
    }

    #[test]
    fn lr_schedule_shape(total in 4u64..5000, base in 1e-4f64..1.0) {
        let s0 = (3 * total).div_ceil(4);
        let mut prev = f64::INFINITY;
        for s in 0..total {
            let lr = lr_schedule(s, total, base);
            prop_assert!(lr > 0.0 && lr <= prev);
            if s <= s0 {
                prop_assert_eq!(lr, base);
            }
            prev = lr;
        }
    }

    #[test]
    fn csv_floats_round_trip(loss in any::<f64>().prop_filter("finite", |x| x.is_finite()), lr in 0.0f64..1.0) {
        let r = StepReport { step: 1, train_loss: loss, lr, optimizer_time_ns: 5, selected_fraction: 0.25 };
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let fields: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        prop_assert_eq!(fields[1].parse::<f64>().unwrap().to_bits(), loss.to_bits());
        prop_assert_eq!(fields[2].parse::<f64>().unwrap().to_bits(), lr.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn l1_selection_matches_argsort(
        r in 1usize..16,
        c in 1usize..16,
        pct in 1u32..=100,
        cols_axis: bool,
        entries in proptest::collection::vec(-3i32..=3, 256),
    ) {
        // small integers make ties common
        let m = Matrix::from_fn(r, c, |i, j| entries[i * 16 + j] as f64);
        let axis = if cols_axis { Axis::Columns } else { Axis::Rows };
        let alpha = pct as f64 / 100.0;
        let mask = select_l1(&m, alpha, axis).unwrap();
        let norms: Vec<f64> = if cols_axis {
            (0..c).map(|j| (0..r).map(|i| m[(i, j)].abs()).sum()).collect()
        } else {
            (0..r).map(|i| (0..c).map(|j| m[(i, j)].abs()).sum()).collect()
        };
        let k = select_count(alpha, norms.len()).unwrap();
        let want = argsort_top_k(&norms, k);
        prop_assert_eq!(mask.indices(), want.as_slice());
    }
}

#[test]
fn random_selection_is_uniform() {
    // chi-square over 20k draws of 5 from 20; dof 19, 99.9% quantile 43.8
    let (d, k, trials) = (20usize, 5usize, 20_000u64);
    let mut counts = vec![0u64; d];
    for t in 0..trials {
        let mask = select_random(
            k as f64 / d as f64,
            d,
            Axis::Columns,
            &mut Rng::for_step(99, 0, t),
        )
        .unwrap();
        for &i in mask.indices() {
            counts[i] += 1;
        }
    }
    let e = (trials * k as u64) as f64 / d as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    assert!(chi2 < 43.8, "chi-square {chi2}");
}

#[test]
fn gram_schmidt_output_orthonormal() {
    let mut rng = Rng::new(5, 5);
    for (n, r) in [(10, 3), (64, 16), (200, 50)] {
        let q = gram_schmidt(&Matrix::gaussian(n, r, &mut rng)).unwrap();
        let g = matmul(&q.transpose(), &q).unwrap();
        assert!(g.max_abs_diff(&Matrix::identity(r)) <= 1e-12);
    }
}
