use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikescan::scan::*;
use spikescan::{Error, Tensor};

/// Plain loop over `H_t = a_t H_{t-1} + (1 - a_t) x_t`, kept separate from the
/// library so the two can disagree.
fn oracle(alpha: &[f64], x: &[f64], h0: f64) -> Vec<f64> {
    let mut h = h0;
    alpha
        .iter()
        .zip(x)
        .map(|(&a, &xi)| {
            h = a * h + (1.0 - a) * xi;
            h
        })
        .collect()
}

fn random_problem(rng: &mut ChaCha8Rng, b: usize, c: usize, t: usize, lo: f64, hi: f64) -> ScanProblem {
    let n = b * c * t;
    let alpha = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    let x = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    ScanProblem::new(Tensor::new(&[b, c, t], alpha).unwrap(), Tensor::new(&[b, c, t], x).unwrap()).unwrap()
}

fn lanes_oracle(p: &ScanProblem) -> Vec<f64> {
    let (b, c, t) = p.dims();
    let mut out = Vec::with_capacity(b * c * t);
    for lane in 0..b * c {
        let r = lane * t..(lane + 1) * t;
        out.extend(oracle(&p.alpha.data()[r.clone()], &p.x.data()[r], p.h0.data()[lane]));
    }
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn parallel_and_serial_match_oracle_across_chunk_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (i, t) in [1, 2, 3, 255, 256, 257, 513, 1024].into_iter().enumerate() {
        let lo = if i % 2 == 0 { 0.0 } else { 0.95 };
        let p = random_problem(&mut rng, 2, 3, t, lo, 1.0);
        let want = lanes_oracle(&p);
        let par = scan_parallel(&p).unwrap();
        let ser = scan_serial(&p).unwrap();
        assert!(max_diff(par.data(), &want) <= 1e-10, "T={t}");
        assert!(max_diff(ser.data(), &want) <= 1e-12, "T={t}");
    }
}

#[test]
fn initial_state_is_carried() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let base = random_problem(&mut rng, 1, 4, 300, 0.2, 0.99);
    let h0 = Tensor::new(&[1, 4], vec![5.0, -2.0, 0.0, 11.0]).unwrap();
    let p = ScanProblem::with_h0(base.alpha.clone(), base.x.clone(), h0).unwrap();
    assert!(max_diff(scan_parallel(&p).unwrap().data(), &lanes_oracle(&p)) <= 1e-10);
}

#[test]
fn mismatched_shapes_are_rejected() {
    let a = Tensor::zeros(&[1, 2, 5]);
    let x = Tensor::zeros(&[1, 2, 4]);
    assert!(ScanProblem::new(a, x).is_err());
}

#[test]
fn matrix_form_matches_in_band_and_guards_outside() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for t in [1, 7, 32, 64] {
        let p = random_problem(&mut rng, 2, 4, t, 0.1, 0.9);
        let m = matrix_form(&p).unwrap();
        assert!(max_diff(m.data(), &lanes_oracle(&p)) <= 1e-8, "T={t}");
    }

    let mut p = random_problem(&mut rng, 1, 1, 16, 0.1, 0.9);
    let mut alpha = p.alpha.data().to_vec();
    alpha[5] = 0.01;
    p.alpha = Tensor::new(&[1, 1, 16], alpha).unwrap();
    assert!(matches!(matrix_form(&p), Err(Error::StabilityGuard(_))));

    let long = random_problem(&mut rng, 1, 1, 600, 0.1, 0.9);
    assert!(matches!(matrix_form(&long), Err(Error::StabilityGuard(_))));

    let loose = MatrixGuard {
        alpha_min: 0.01,
        max_len: 64,
    };
    assert!(matrix_form_guarded(&random_problem(&mut rng, 1, 1, 8, 0.1, 0.9), loose).is_err());
}

#[test]
fn decay_matrix_rows_reproduce_the_recurrence() {
    let alpha = [0.5, 0.25, 0.8];
    let w = decay_matrix(&alpha);
    // Column-oriented: H_j = sum_i x_i W_ij for zero initial state.
    let x = [1.0, 2.0, 3.0];
    let want = oracle(&alpha, &x, 0.0);
    for j in 0..3 {
        let h: f64 = (0..3).map(|i| x[i] * w[i * 3 + j]).sum();
        assert!((h - want[j]).abs() < 1e-12, "{j}: {h} vs {}", want[j]);
    }
}

#[test]
fn backward_matches_hand_derivative_on_two_steps() {
    // H1 = a1 h0 + (1-a1) x1, H2 = a2 H1 + (1-a2) x2, loss = H1 + H2.
    let (a1, a2, x1, x2, h0) = (0.3, 0.6, 2.0, -1.0, 0.5);
    let p = ScanProblem::with_h0(
        Tensor::new(&[1, 1, 2], vec![a1, a2]).unwrap(),
        Tensor::new(&[1, 1, 2], vec![x1, x2]).unwrap(),
        Tensor::new(&[1, 1], vec![h0]).unwrap(),
    )
    .unwrap();
    let h = scan_serial(&p).unwrap();
    let g = scan_backward(&p, &h, &Tensor::full(&[1, 1, 2], 1.0)).unwrap();
    let h1 = h.data()[0];
    let dh1 = 1.0 + a2;
    let want_alpha = [dh1 * (h0 - x1), h1 - x2];
    let want_x = [dh1 * (1.0 - a1), 1.0 - a2];
    assert!(max_diff(g.d_alpha.data(), &want_alpha) < 1e-14);
    assert!(max_diff(g.d_x.data(), &want_x) < 1e-14);
    assert!((g.d_h0.data()[0] - dh1 * a1).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parallel_equals_serial(
        lanes in 1usize..4,
        t in 1usize..700,
        lo in prop::sample::select(vec![0.0, 0.9, 0.99]),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, 1, lanes, t, lo, 1.0);
        let d = scan_parallel(&p).unwrap().max_abs_diff(&scan_serial(&p).unwrap()).unwrap();
        prop_assert!(d <= 1e-10);
    }

    #[test]
    fn output_stays_in_input_hull(
        xs in prop::collection::vec(-5.0f64..5.0, 1..300),
        a in 0.0f64..1.0,
    ) {
        // A convex combination of h0 = 0 and the inputs cannot leave their range.
        let t = xs.len();
        let p = ScanProblem::new(
            Tensor::full(&[1, 1, t], a),
            Tensor::new(&[1, 1, t], xs.clone()).unwrap(),
        ).unwrap();
        let lo = xs.iter().cloned().fold(0.0, f64::min);
        let hi = xs.iter().cloned().fold(0.0, f64::max);
        for &h in scan_parallel(&p).unwrap().data() {
            prop_assert!(h >= lo - 1e-12 && h <= hi + 1e-12);
        }
    }

    #[test]
    fn compose_is_associative(
        m in prop::collection::vec((0.0f64..1.0, -2.0f64..2.0), 3),
        h in -4.0f64..4.0,
    ) {
        let f: Vec<Affine> = m.iter().map(|&(a, b)| Affine { a, b }).collect();
        let left = f[0].then(f[1]).then(f[2]).apply(h);
        let right = f[0].then(f[1].then(f[2])).apply(h);
        prop_assert!((left - right).abs() <= 1e-12);
    }
}
