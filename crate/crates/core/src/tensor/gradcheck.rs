//! Finite-difference gradient verification.
//!
//! The numeric side is a central difference of the loss with step `h`,
//! computed independently of any backward rule, so it can serve as the
//! oracle for every analytic gradient in the crate.

use super::layers::Tunable;
use super::Matrix;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Number of scalar parameters compared.
    pub checked: usize,
}

/// Central finite-difference gradient of `loss` with respect to every
/// parameter of `model`.
pub fn central_differences<M: Tunable>(
    model: &mut M,
    loss: impl Fn(&M) -> f64,
    h: f64,
) -> Vec<Matrix> {
    let shapes: Vec<(usize, usize)> = model
        .params()
        .iter()
        .map(|p| (p.rows(), p.cols()))
        .collect();
    let mut grads: Vec<Matrix> = shapes
        .iter()
        .map(|&(r, c)| Matrix::zeros(r, c))
        .collect();
    for (pi, &(rows, cols)) in shapes.iter().enumerate() {
        for idx in 0..rows * cols {
            {
                let mut ps = model.params_mut();
                ps[pi].as_mut_slice()[idx] += h;
            }
            let up = loss(model);
            {
                let mut ps = model.params_mut();
                ps[pi].as_mut_slice()[idx] -= 2.0 * h;
            }
            let down = loss(model);
            {
                let mut ps = model.params_mut();
                ps[pi].as_mut_slice()[idx] += h;
            }
            grads[pi].as_mut_slice()[idx] = (up - down) / (2.0 * h);
        }
    }
    grads
}

/// Compares analytic and numeric gradients elementwise.
pub fn compare(analytic: &[Matrix], numeric: &[Matrix]) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient list length");
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        checked: 0,
    };
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!((a.rows(), a.cols()), (n.rows(), n.cols()));
        for (&av, &nv) in a.as_slice().iter().zip(n.as_slice()) {
            let abs = (av - nv).abs();
            let rel = abs / (av.abs().max(nv.abs()) + 1e-6);
            report.max_abs_err = report.max_abs_err.max(abs);
            report.max_rel_err = report.max_rel_err.max(rel);
            report.checked += 1;
        }
    }
    report
}

/// Runs the full check: analytic gradients from `backward` against central
/// finite differences of `loss` at [`FD_STEP`].
pub fn check_gradients<M: Tunable>(
    model: &mut M,
    loss: impl Fn(&M) -> f64,
    backward: impl Fn(&M) -> Vec<Matrix>,
) -> GradCheckReport {
    let analytic = backward(model);
    let numeric = central_differences(model, loss, FD_STEP);
    compare(&analytic, &numeric)
}

/// Mean squared error between two same-shaped matrices, as a scalar loss.
pub fn mse_scalar(pred: &Matrix, target: &Matrix) -> f64 {
    assert_eq!((pred.rows(), pred.cols()), (target.rows(), target.cols()));
    let n = pred.len() as f64;
    pred.as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}
