use std::time::Instant;

use groundkit_core::aligner::gradcheck::{gradcheck_case, run_case, DEFAULT_CASES, DEFAULT_EPS};
use groundkit_core::aligner::{
    aligner_forward, aligner_forward_masked, forward_backward, tolerance, AlignerWeights, Matrix,
};
use proptest::prelude::*;

#[test]
fn twenty_seeded_chains_pass_central_differences() {
    let start = Instant::now();
    let tol = tolerance(DEFAULT_EPS);
    assert_eq!(tol, 1e-4);
    let mut worst: f64 = 0.0;
    for seed in 0..DEFAULT_CASES {
        let case = gradcheck_case(seed);
        let r = run_case(&case, DEFAULT_EPS, None).unwrap();
        assert_eq!(r.checked, case.params.scalar_count());
        assert!(r.passes(tol), "seed {seed}: {:?}", r.per_param);
        worst = worst.max(r.max_rel_error());
    }
    println!("max relative error {worst:e} in {:?}", start.elapsed());
}

#[test]
fn flipped_gradients_are_named() {
    let tol = tolerance(DEFAULT_EPS);
    let mut flipped = 0;
    for seed in 0..5 {
        let case = gradcheck_case(seed);
        let (_, grads) = forward_backward(&case.batch, &case.params, &case.loss).unwrap();
        for (name, g) in grads.iter() {
            // A parameter with no gradient signal cannot reveal a flip.
            if g.data().iter().all(|v| v.abs() < 1e-6) {
                continue;
            }
            let r = run_case(&case, DEFAULT_EPS, Some(name)).unwrap();
            assert_eq!(r.failing(tol), vec![name], "seed {seed}");
            flipped += 1;
        }
    }
    assert!(flipped >= 30, "only {flipped} parameters exercised");
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |v| Matrix::new(rows, cols, v).unwrap())
}

fn inputs() -> impl Strategy<Value = (u64, usize, Matrix, Matrix, Matrix, Matrix)> {
    (
        any::<u64>(),
        1usize..4,
        1usize..5,
        0usize..3,
        0usize..3,
        1usize..4,
    )
        .prop_flat_map(|(seed, d4, n_img, n_qt, n_qv, n_q)| {
            let d = 4 * d4;
            (
                Just(seed),
                Just(n_q),
                matrix(n_img, d),
                matrix(n_qt, d),
                matrix(n_qv, d),
                matrix(n_qv, d),
            )
        })
}

fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
    a.rows() == b.rows()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn masked_prompt_rows_do_not_matter((seed, n_q, img, qt, qv, other) in inputs()) {
        let w = AlignerWeights::init(img.cols(), n_q, seed).unwrap();
        let none = Matrix::zeros(0, img.cols());
        let base = aligner_forward(&img, &qt, &none, &w).unwrap();
        let masked = aligner_forward_masked(&img, &qt, &qv, &w, false).unwrap();
        let masked_other = aligner_forward_masked(&img, &qt, &other, &w, false).unwrap();
        prop_assert!(close(&masked, &base, 1e-12));
        prop_assert_eq!(masked.data(), masked_other.data());

        let used = aligner_forward_masked(&img, &qt, &qv, &w, true).unwrap();
        prop_assert!(close(&used, &aligner_forward(&img, &qt, &qv, &w).unwrap(), 1e-12));
        prop_assert_eq!((used.rows(), used.cols()), (n_q, img.cols()));
    }

    #[test]
    fn key_order_does_not_matter((seed, n_q, img, qt, qv, _) in inputs()) {
        let w = AlignerWeights::init(img.cols(), n_q, seed).unwrap();
        let a = aligner_forward(&img, &qt, &qv, &w).unwrap();
        // Reverse the image rows and swap the roles of the other blocks.
        let rows: Vec<&[f64]> = (0..img.rows()).rev().map(|r| img.row(r)).collect();
        let rev = Matrix::from_rows(&rows).unwrap();
        let b = aligner_forward(&rev, &qv, &qt, &w).unwrap();
        prop_assert!(close(&a, &b, 1e-12));
    }
}
