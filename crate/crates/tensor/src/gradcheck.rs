//! Central finite-difference checks of analytic gradients (float64).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ops::{NormMode, RunningStats};
use crate::tensor::{no_grad, Tensor};

/// Central-difference step sizes, largest first.
pub const FD_STEPS: [f64; 4] = [1e-4, 1e-5, 1e-6, 1e-7];
pub const OP_TOLERANCE: f64 = 1e-5;

/// Relative disagreement of the one-sided slopes that signals a kink.
pub const KINK_RATIO: f64 = 0.1;


/// Outcome of one finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub checked: usize,
    /// Elements that sat on a kink at every step size tried.
    pub skipped: usize,
    pub max_rel_error: f64,
    /// (input index, element index) of the worst element.
    pub worst: (usize, usize),
    pub tolerance: f64,
}

impl GradCheck {
    /// Within tolerance, with at most 1% of elements skipped as kinks.
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance && self.skipped * 100 <= self.checked + self.skipped
    }
}

impl std::fmt::Display for GradCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: max rel err {:.3e} over {} elements (tol {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.max_rel_error,
            self.checked,
            self.tolerance
        )?;
        if self.skipped > 0 {
            write!(f, ", {} skipped at kinks", self.skipped)?;
        }
        Ok(())
    }
}

/// Magnitude below which a gradient is treated as zero: differences of
/// this size are within central-difference round-off for O(1) objectives.
pub const GRAD_FLOOR: f64 = 1e-5;

/// Element-wise relative error, denominated by
/// `max(|analytic|, |numeric|, GRAD_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Compares the gradient of `f` at `inputs` with central differences.
/// `f` must return a single-element tensor.
///
/// Each element is differenced at every step in [`FD_STEPS`]. A stencil
/// whose forward and backward one-sided slopes disagree by more than
/// [`KINK_RATIO`] straddles a kink (a ReLU changing sign, say) and is
/// discarded. Among the remaining consecutive pairs (h, h/10), the one with
/// the smallest disagreement plus round-off bound `eps * |f| * 10 / h` is
/// Richardson-extrapolated, cancelling the O(h^2) truncation term.
/// An element with no usable pair is counted in `skipped`.
pub fn check_gradients<F>(name: &str, inputs: &[Tensor<f64>], tolerance: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let params: Vec<Tensor<f64>> = inputs.iter().map(|t| t.detach().into_parameter()).collect();
    f(&params)?.backward()?;
    let mut report = GradCheck {
        name: name.to_string(),
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        worst: (0, 0),
        tolerance,
    };
    let base: Vec<Tensor<f64>> = inputs.iter().map(Tensor::detach).collect();
    let f0 = no_grad(|| f(&base))?.item();
    for (i, p) in params.iter().enumerate() {
        let analytic = p.grad().unwrap_or_else(|| vec![0.0; p.numel()]);
        for (j, &a) in analytic.iter().enumerate() {
            let eval = |delta: f64| -> Result<f64> {
                let mut shifted = base.clone();
                let mut data = base[i].to_vec();
                data[j] += delta;
                shifted[i] = Tensor::new(data, base[i].shape())?;
                no_grad(|| f(&shifted)).map(|t| t.item())
            };
            let mut estimates = Vec::with_capacity(FD_STEPS.len());
            for &h in &FD_STEPS {
                let (fp, fm) = (eval(h)?, eval(-h)?);
                let (right, left) = ((fp - f0) / h, (f0 - fm) / h);
                let smooth = (right - left).abs() <= KINK_RATIO * right.abs().max(left.abs()) + GRAD_FLOOR;
                estimates.push(smooth.then_some((fp - fm) / (2.0 * h)));
            }
            let roundoff = |h: f64| f64::EPSILON * f0.abs().max(1.0) * 10.0 / h;
            let best = estimates
                .windows(2)
                .zip(FD_STEPS)
                .filter_map(|(w, h)| {
                    let (coarse, fine) = (w[0]?, w[1]?);
                    let extrapolated = fine + (fine - coarse) / 99.0;
                    Some((extrapolated, (coarse - fine).abs() + roundoff(h)))
                })
                .min_by(|x, y| x.1.total_cmp(&y.1));
            let Some((numeric, _)) = best else {
                report.skipped += 1;
                continue;
            };
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}

/// Fixed pseudo-random weights so that `sum(w * y)` has a non-degenerate
/// gradient with respect to every element of `y`.
pub fn probe_weights(shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|i| {
            let x = i as f64;
            0.6 + 0.5 * (1.3 * x + 0.7).sin() + 0.3 * (0.37 * x).cos()
        })
        .collect();
    Tensor::new(data, shape).expect("non-empty shape")
}

/// Reduces an op output to a scalar through [`probe_weights`].
pub fn probe(y: &Tensor<f64>) -> Result<Tensor<f64>> {
    Ok(y.mul(&probe_weights(y.shape()))?.sum())
}

fn sym(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    uniform(rng, shape, -2.0, 2.0)
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.random_range(lo..hi)).collect(), shape).expect("non-empty shape")
}

/// Finite-difference checks for every differentiable tensor operation.
pub fn op_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let tol = OP_TOLERANCE;
    let mut out = Vec::new();

    let (a, b) = (sym(rng, &[3, 4]), sym(rng, &[4, 5]));
    out.push(check_gradients("matmul", &[a, b], tol, |t| probe(&t[0].matmul(&t[1])?))?);

    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let sa = if ta { [2, 4, 3] } else { [2, 3, 4] };
        let sb = if tb { [2, 5, 4] } else { [2, 4, 5] };
        let (a, b) = (sym(rng, &sa), sym(rng, &sb));
        let name = format!("bmm(trans_a={ta}, trans_b={tb})");
        out.push(check_gradients(&name, &[a, b], tol, move |t| probe(&t[0].bmm(&t[1], ta, tb)?))?);
    }

    for (stride, pad, k) in [(1, 1, 3), (2, 1, 3), (2, 0, 2)] {
        let (x, w, bias) = (sym(rng, &[2, 2, 5, 5]), sym(rng, &[3, 2, k, k]), sym(rng, &[3]));
        let name = format!("conv2d(k={k}, stride={stride}, pad={pad})");
        out.push(check_gradients(&name, &[x, w, bias], tol, move |t| {
            probe(&t[0].conv2d(&t[1], Some(&t[2]), stride, pad)?)
        })?);
    }

    for shape in [vec![3, 2, 3, 3], vec![5, 4]] {
        let c = shape[1];
        let (x, g, b) = (sym(rng, &shape), sym(rng, &[c]), sym(rng, &[c]));
        out.push(check_gradients(&format!("batch_norm train {shape:?}"), &[x.clone(), g.clone(), b.clone()], tol, |t| {
            let mut st = RunningStats::new(t[1].numel());
            probe(&t[0].batch_norm(&t[1], &t[2], &mut st, NormMode::Train)?)
        })?);
        out.push(check_gradients(&format!("batch_norm eval {shape:?}"), &[x, g, b], tol, |t| {
            let mut st = RunningStats::new(t[1].numel());
            st.mean.iter_mut().enumerate().for_each(|(i, m)| *m = 0.1 * i as f64);
            st.var.iter_mut().enumerate().for_each(|(i, v)| *v = 0.5 + 0.25 * i as f64);
            probe(&t[0].batch_norm(&t[1], &t[2], &mut st, NormMode::Eval)?)
        })?);
    }

    let (x, g, b) = (sym(rng, &[2, 3, 5]), sym(rng, &[5]), sym(rng, &[5]));
    out.push(check_gradients("layer_norm", &[x, g, b], tol, |t| probe(&t[0].layer_norm(&t[1], &t[2])?))?);

    let x = sym(rng, &[3, 5]);
    type Unary = fn(&Tensor<f64>) -> Tensor<f64>;
    let unary: [(&str, Unary); 7] = [
        ("relu", |t| t.relu()),
        ("gelu", |t| t.gelu()),
        ("exp", |t| t.exp()),
        ("neg", |t| t.neg()),
        ("square", |t| t.square()),
        ("add_scalar", |t| t.add_scalar(0.7)),
        ("mul_scalar", |t| t.mul_scalar(-1.3)),
    ];
    for (name, f) in unary {
        out.push(check_gradients(name, std::slice::from_ref(&x), tol, move |t| probe(&f(&t[0])))?);
    }
    let pos = uniform(rng, &[3, 5], 0.1, 2.0);
    out.push(check_gradients("log", std::slice::from_ref(&pos), tol, |t| probe(&t[0].log()))?);
    out.push(check_gradients("sqrt", std::slice::from_ref(&pos), tol, |t| probe(&t[0].sqrt()))?);

    let x = sym(rng, &[3, 4]);
    out.push(check_gradients("softmax(last)", std::slice::from_ref(&x), tol, |t| probe(&t[0].softmax(1)?))?);
    out.push(check_gradients("softmax(0)", std::slice::from_ref(&x), tol, |t| probe(&t[0].softmax(0)?))?);

    let a = sym(rng, &[2, 3, 4]);
    let rhs = [vec![2, 3, 4], vec![4], vec![3, 4], vec![2, 1, 1], vec![]];
    type Binary = fn(&Tensor<f64>, &Tensor<f64>) -> Result<Tensor<f64>>;
    let binary: [(&str, Binary); 3] = [("add", |a, b| a.add(b)), ("sub", |a, b| a.sub(b)), ("mul", |a, b| a.mul(b))];
    for shape in &rhs {
        let b = sym(rng, shape);
        for (name, f) in binary {
            out.push(check_gradients(&format!("{name} {shape:?}"), &[a.clone(), b.clone()], tol, move |t| {
                probe(&f(&t[0], &t[1])?)
            })?);
        }
        let d = uniform(rng, shape, 0.5, 2.0);
        out.push(check_gradients(&format!("div {shape:?}"), &[a.clone(), d], tol, |t| probe(&t[0].div(&t[1])?))?);
    }

    let x = sym(rng, &[2, 3, 4]);
    out.push(check_gradients("sum", std::slice::from_ref(&x), tol, |t| t[0].square().sum().mul_scalar(0.5).add(&t[0].sum()))?);
    out.push(check_gradients("mean", std::slice::from_ref(&x), tol, |t| Ok(t[0].square().mean()))?);
    for axis in 0..3 {
        out.push(check_gradients(&format!("sum_axis({axis})"), std::slice::from_ref(&x), tol, move |t| {
            probe(&t[0].sum_axis(axis, false)?.square())
        })?);
        out.push(check_gradients(&format!("mean_axis({axis}, keepdim)"), std::slice::from_ref(&x), tol, move |t| {
            probe(&t[0].mean_axis(axis, true)?.square())
        })?);
    }
    out.push(check_gradients("reshape", std::slice::from_ref(&x), tol, |t| probe(&t[0].reshape(&[6, 4])?.square()))?);
    out.push(check_gradients("transpose", std::slice::from_ref(&x), tol, |t| probe(&t[0].transpose()?.square()))?);
    out.push(check_gradients("permute", std::slice::from_ref(&x), tol, |t| probe(&t[0].permute(&[2, 0, 1])?.square()))?);
    let y = sym(rng, &[2, 2, 4]);
    out.push(check_gradients("concat", &[x.clone(), y], tol, |t| {
        probe(&Tensor::concat(&[t[0].clone(), t[1].clone()], 1)?.square())
    })?);
    out.push(check_gradients("slice", std::slice::from_ref(&x), tol, |t| probe(&t[0].slice(2, 1, 3)?.square()))?);
    out.push(check_gradients("l2_norm", std::slice::from_ref(&x), tol, |t| probe(&t[0].l2_norm()?))?);
    out.push(check_gradients("l2_normalize", std::slice::from_ref(&x), tol, |t| probe(&t[0].l2_normalize()?))?);

    let (x, w, g, b) = (sym(rng, &[4, 3]), sym(rng, &[3, 5]), sym(rng, &[5]), sym(rng, &[5]));
    out.push(check_gradients("composite", &[x, w, g, b], tol, |t| {
        let h = t[0].matmul(&t[1])?.layer_norm(&t[2], &t[3])?.gelu();
        let p = h.softmax(1)?;
        p.log().mean().add(&h.l2_normalize()?.sum_axis(0, false)?.square().mean())
    })?);

    Ok(out)
}
