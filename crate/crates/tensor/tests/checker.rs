//! Behaviour of the finite-difference checker itself: it must reject wrong
//! gradients, tolerate isolated kinks and stay accurate on curved functions.

use vtcc_tensor::gradcheck::{check_gradients, OP_TOLERANCE};
use vtcc_tensor::Tensor;

fn input(values: Vec<f64>) -> Tensor<f64> {
    let n = values.len();
    Tensor::new(values, &[n]).unwrap()
}

fn spread(n: usize) -> Vec<f64> {
    (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect()
}

#[test]
fn a_missing_gradient_path_is_caught() {
    // x.detach() * x has autograd gradient x, true derivative 2x
    let report = check_gradients("half gradient", &[input(spread(8))], 1e-5, |t| {
        Ok(t[0].detach().mul(&t[0])?.sum())
    })
    .unwrap();
    assert!(!report.passed());
    assert!((report.max_rel_error - 0.5).abs() < 1e-3, "{report}");
}

#[test]
fn isolated_kinks_are_skipped_not_failed() {
    // one element of 200 sits exactly on the ReLU kink
    let mut values = spread(200);
    values[17] = 0.0;
    let report = check_gradients("relu", &[input(values)], 1e-5, |t| Ok(t[0].relu().sum())).unwrap();
    assert_eq!(report.skipped, 1);
    assert_eq!(report.checked, 199);
    assert!(report.passed(), "{report}");
    assert!(report.to_string().contains("skipped"));
}

#[test]
fn widespread_kinks_fail_the_check() {
    let report = check_gradients("relu at zero", &[input(vec![0.0; 10])], 1e-5, |t| Ok(t[0].relu().sum())).unwrap();
    assert_eq!(report.skipped, 10);
    assert!(!report.passed());
}

#[test]
fn strongly_curved_functions_stay_accurate() {
    // exp(8x) has relative curvature 8, which a single central difference resolves poorly
    let report = check_gradients("exp", &[input(spread(16))], OP_TOLERANCE, |t| {
        Ok(t[0].mul(&Tensor::scalar(8.0))?.exp().sum())
    })
    .unwrap();
    assert!(report.passed(), "{report}");
}

#[test]
fn structurally_zero_gradients_pass_at_the_floor() {
    // the second input does not influence the output at all
    let report = check_gradients("unused", &[input(spread(4)), input(spread(4))], 1e-5, |t| {
        Ok(t[0].square().sum())
    })
    .unwrap();
    assert!(report.passed(), "{report}");
    assert!(report.max_rel_error < 1e-9, "{report}");
}
