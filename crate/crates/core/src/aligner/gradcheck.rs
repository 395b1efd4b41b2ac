//! Central-difference verification of analytic gradients.

use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng as _;

use super::matrix::Matrix;
use super::model::{
    forward_backward, forward_loss, init_params, Example, LossConfig, ModelDims, ParamSet,
    TextTarget,
};
use super::AlignerError;
use crate::forge::VisualPrompt;
use crate::mask::{BinaryMask, BoundingBox, LossWeights, Point};
use crate::seed;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_CASES: u64 = 20;

/// Pass threshold for step `eps`: `1e-4`, widened to `10·eps` for coarser
/// steps.
pub fn tolerance(eps: f64) -> f64 {
    f64::max(1e-4, 10.0 * eps)
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let den = libm::fabs(analytic).max(libm::fabs(numeric)).max(1e-8);
    libm::fabs(analytic - numeric) / den
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error per parameter, in parameter order.
    pub per_param: Vec<(String, f64)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    /// Parameters whose error reaches `tol`; NaN counts as failing.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn failing(&self, tol: f64) -> Vec<&str> {
        self.per_param
            .iter()
            .filter(|(_, e)| !(*e < tol))
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.failing(tol).is_empty()
    }
}

/// Compares `analytic` with `(f(θ+eps) - f(θ-eps)) / 2eps` for every entry
/// of every parameter.
pub fn grad_check(
    mut loss_fn: impl FnMut(&ParamSet) -> Result<f64, AlignerError>,
    params: &ParamSet,
    analytic: &ParamSet,
    eps: f64,
) -> Result<GradCheckReport, AlignerError> {
    let mut work = params.clone();
    let mut per_param = Vec::new();
    let mut checked = 0;
    let names: Vec<String> = params.names().map(String::from).collect();
    for name in names {
        let a = analytic.get(&name)?.clone();
        let n = work.get(&name)?.data().len();
        if a.data().len() != n {
            return Err(AlignerError::Length {
                expected: n,
                got: a.data().len(),
            });
        }
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let orig = work.get(&name)?.data()[i];
            work.get_mut(&name)?.data_mut()[i] = orig + eps;
            let plus = loss_fn(&work)?;
            work.get_mut(&name)?.data_mut()[i] = orig - eps;
            let minus = loss_fn(&work)?;
            work.get_mut(&name)?.data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(AlignerError::NonFinite);
            }
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(a.data()[i], numeric));
            checked += 1;
        }
        per_param.push((name, worst));
    }
    Ok(GradCheckReport { per_param, checked })
}

/// A seeded random model, batch and loss configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckCase {
    pub seed: u64,
    pub dims: ModelDims,
    pub params: ParamSet,
    pub batch: Vec<Example>,
    pub loss: LossConfig,
}

pub fn gradcheck_case(case_seed: u64) -> GradCheckCase {
    let mut rng = seed::rng(seed::derive_seed(case_seed, "gradcheck"));
    let dims = ModelDims {
        d: 4 * rng.gen_range(1..=3),
        n_q: rng.gen_range(1..=4),
        d_dec: rng.gen_range(2..=6),
        vocab: rng.gen_range(2..=6),
    };
    let params = init_params(dims, seed::derive_seed(case_seed, "params"));
    let loss = LossConfig {
        weights: LossWeights::new(
            rng.gen_range(0.1..2.0),
            rng.gen_range(0.1..2.0),
            rng.gen_range(0.1..2.0),
        )
        .expect("positive weights"),
        dice_smooth: [1.0, 0.5, 0.1][rng.gen_range(0..3)],
    };
    let batch_len = rng.gen_range(1..=3);
    let batch = (0..batch_len)
        .map(|i| {
            let (gh, gw) = (rng.gen_range(2..=5), rng.gen_range(2..=5));
            let (ih, iw) = (rng.gen_range(8..=32), rng.gen_range(8..=32));
            let mut m = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
            let x_img = m(2 + i, dims.d);
            let x_qt = m(i % 3, dims.d);
            let features = m(gh * gw, dims.d_dec);
            let prompt = match rng.gen_range(0..3) {
                0 => None,
                1 => Some(VisualPrompt::Point(Point {
                    x: rng.gen_range(0..iw),
                    y: rng.gen_range(0..ih),
                })),
                _ => {
                    let (x0, y0) = (rng.gen_range(0..iw), rng.gen_range(0..ih));
                    Some(VisualPrompt::Box(BoundingBox::new(
                        x0,
                        y0,
                        rng.gen_range(x0..iw),
                        rng.gen_range(y0..ih),
                    )))
                }
            };
            let gold =
                BinaryMask::from_fn(gh, gw, |_, _| rng.gen_bool(0.4)).expect("non-zero grid");
            let text = if rng.gen_bool(0.7) {
                TextTarget::Tokens(
                    (0..dims.n_q)
                        .map(|_| rng.gen_range(0..dims.vocab))
                        .collect(),
                )
            } else {
                TextTarget::Constant(rng.gen_range(0.5..2.0))
            };
            Example {
                x_img,
                x_qt,
                prompt,
                image_height: ih,
                image_width: iw,
                features,
                gold,
                text,
            }
        })
        .collect();
    GradCheckCase {
        seed: case_seed,
        dims,
        params,
        batch,
        loss,
    }
}

/// Checks one case. `flip_sign` negates the named analytic gradient first,
/// for exercising the failure path.
pub fn run_case(
    case: &GradCheckCase,
    eps: f64,
    flip_sign: Option<&str>,
) -> Result<GradCheckReport, AlignerError> {
    let (_, mut grads) = forward_backward(&case.batch, &case.params, &case.loss)?;
    if let Some(name) = flip_sign {
        grads.get_mut(name)?.scale(-1.0);
    }
    grad_check(
        |p| forward_loss(&case.batch, p, &case.loss),
        &case.params,
        &grads,
        eps,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aligner::model::{PROJ, W_Q};

    fn scalar(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("theta", Matrix::new(1, 1, alloc::vec![v]).unwrap());
        p
    }

    fn theta(p: &ParamSet) -> f64 {
        p.get("theta").unwrap().get(0, 0)
    }

    #[test]
    fn linear_loss_is_exact() {
        let c = 3.25;
        let r = grad_check(|p| Ok(c * theta(p)), &scalar(0.7), &scalar(c), DEFAULT_EPS).unwrap();
        assert!(r.max_rel_error() < 1e-10);
    }

    #[test]
    fn quadratic_at_one() {
        let r = grad_check(
            |p| Ok(theta(p) * theta(p)),
            &scalar(1.0),
            &scalar(2.0),
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(r.max_rel_error() < 1e-10, "{}", r.max_rel_error());
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let r = grad_check(
            |p| Ok(1.0 / (theta(p) - 1e-5)),
            &scalar(0.0),
            &scalar(1.0),
            1e-5,
        );
        assert_eq!(r, Err(AlignerError::NonFinite));
    }

    #[test]
    fn chain_passes_on_a_few_cases() {
        for s in 0..3 {
            let case = gradcheck_case(s);
            let r = run_case(&case, DEFAULT_EPS, None).unwrap();
            assert!(
                r.passes(tolerance(DEFAULT_EPS)),
                "case {s}: {:?}",
                r.per_param
            );
            assert_eq!(r.checked, case.params.scalar_count());
        }
    }

    #[test]
    fn sign_flip_is_caught_and_named() {
        let case = gradcheck_case(1);
        for name in [W_Q, PROJ] {
            let r = run_case(&case, DEFAULT_EPS, Some(name)).unwrap();
            assert_eq!(r.failing(tolerance(DEFAULT_EPS)), alloc::vec![name]);
        }
    }

    #[test]
    fn tolerance_scales_with_step() {
        assert_eq!(tolerance(1e-5), 1e-4);
        assert_eq!(tolerance(1e-3), 1e-2);
    }
}
