//! Pointwise arithmetic and activations.
//!
//! Binary ops broadcast the right operand onto the left operand's shape.
//! Three layouts are accepted: a single-element tensor, a trailing suffix of
//! the left shape (`[d]` onto `[n, l, d]`), and a keep-dim prefix
//! (`[n, 1]` onto `[n, d]`). Anything else is a shape error.

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

/// Log clamps its argument from below at this value.
pub const LOG_CLAMP: f64 = 1e-12;

const GELU_COEFF: f64 = 0.044715;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Broadcast {
    Same,
    Scalar,
    /// right index = i % n
    Suffix(usize),
    /// right index = i / inner
    Prefix(usize),
}

impl Broadcast {
    pub(crate) fn plan(op: &'static str, a: &[usize], b: &[usize]) -> Result<Self> {
        if a == b {
            return Ok(Broadcast::Same);
        }
        let bn: usize = b.iter().product();
        if bn == 1 {
            return Ok(Broadcast::Scalar);
        }
        let lead = b.iter().take_while(|&&d| d == 1).count();
        let core = &b[lead..];
        if core.len() <= a.len() && a[a.len() - core.len()..] == *core {
            return Ok(Broadcast::Suffix(bn));
        }
        if b.len() == a.len() {
            let k = b.iter().rposition(|&d| d != 1).map_or(0, |p| p + 1);
            if a[..k] == b[..k] {
                let inner: usize = a[k..].iter().product();
                return Ok(Broadcast::Prefix(inner));
            }
        }
        Err(TensorError::shape(op, a, b))
    }

    /// Sums a full-size gradient down to the right operand's size.
    pub(crate) fn reduce<T: Real>(self, g: &[T], bn: usize) -> Vec<T> {
        match self {
            Broadcast::Same => g.to_vec(),
            Broadcast::Scalar => vec![g.iter().fold(T::zero(), |s, &v| s + v)],
            Broadcast::Suffix(n) => {
                let mut out = vec![T::zero(); bn];
                for chunk in g.chunks_exact(n) {
                    for (o, &v) in out.iter_mut().zip(chunk) {
                        *o = *o + v;
                    }
                }
                out
            }
            Broadcast::Prefix(inner) => g
                .chunks_exact(inner)
                .map(|c| c.iter().fold(T::zero(), |s, &v| s + v))
                .collect(),
        }
    }

    /// Visits `(i, a[i], b[index(i)])` in order without per-element index math.
    #[inline]
    pub(crate) fn zip_map<T: Real, R>(
        self,
        a: &[T],
        b: &[T],
        mut f: impl FnMut(T, T) -> R,
    ) -> Vec<R> {
        let mut out = Vec::with_capacity(a.len());
        match self {
            Broadcast::Same => out.extend(a.iter().zip(b).map(|(&x, &y)| f(x, y))),
            Broadcast::Scalar => {
                let y = b[0];
                out.extend(a.iter().map(|&x| f(x, y)));
            }
            Broadcast::Suffix(n) => {
                for chunk in a.chunks_exact(n) {
                    out.extend(chunk.iter().zip(b).map(|(&x, &y)| f(x, y)));
                }
            }
            Broadcast::Prefix(inner) => {
                for (chunk, &y) in a.chunks_exact(inner).zip(b) {
                    out.extend(chunk.iter().map(|&x| f(x, y)));
                }
            }
        }
        out
    }
}

impl<T: Real> Tensor<T> {
    fn binary(
        &self,
        rhs: &Tensor<T>,
        op: &'static str,
        f: impl Fn(T, T) -> T,
        // (grad, a, b) -> (da, db)
        df: impl Fn(T, T, T) -> (T, T) + 'static,
    ) -> Result<Tensor<T>> {
        let plan = Broadcast::plan(op, self.shape(), rhs.shape())?;
        let (a, b) = (self.data(), rhs.data());
        let data = plan.zip_map(a, b, &f);
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            op,
            vec![self.clone(), rhs.clone()],
            move |ctx| {
                let (a, b) = (ctx.inputs[0].data(), ctx.inputs[1].data());
                let pairs = plan.zip_map(a, b, |x, y| (x, y));
                let (ga, gb_full): (Vec<T>, Vec<T>) = pairs
                    .iter()
                    .zip(ctx.grad.iter())
                    .map(|(&(x, y), &g)| df(g, x, y))
                    .unzip();
                let gb = plan.reduce(&gb_full, b.len());
                vec![Some(ga), Some(gb)]
            },
        ))
    }

    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(rhs, "add", |a, b| a + b, |g, _, _| (g, g))
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(rhs, "sub", |a, b| a - b, |g, _, _| (g, -g))
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(rhs, "mul", |a, b| a * b, |g, a, b| (g * b, g * a))
    }

    pub fn div(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(rhs, "div", |a, b| a / b, |g, a, b| (g / b, -g * a / (b * b)))
    }

    /// `df(x, y)` is the local derivative given input `x` and output `y`.
    fn unary(&self, op: &'static str, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Tensor<T> {
        let data = self.data().iter().map(|&x| f(x)).collect();
        Tensor::from_op(self.shape().to_vec(), data, op, vec![self.clone()], move |ctx| {
            let x = ctx.inputs[0].data();
            let g = ctx
                .grad
                .iter()
                .zip(x)
                .zip(ctx.output)
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(g)]
        })
    }

    pub fn neg(&self) -> Tensor<T> {
        self.unary("neg", |x| -x, |_, _| -T::one())
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        self.unary("add_scalar", move |x| x + c, |_, _| T::one())
    }

    pub fn mul_scalar(&self, c: T) -> Tensor<T> {
        self.unary("mul_scalar", move |x| x * c, move |_, _| c)
    }

    pub fn square(&self) -> Tensor<T> {
        self.unary("square", |x| x * x, |x, _| x + x)
    }

    pub fn sqrt(&self) -> Tensor<T> {
        self.unary("sqrt", |x| x.sqrt(), |_, y| T::lit(0.5) / y)
    }

    pub fn exp(&self) -> Tensor<T> {
        let mut data = self.to_vec();
        T::exp_in_place(&mut data);
        Tensor::from_op(self.shape().to_vec(), data, "exp", vec![self.clone()], |ctx| {
            vec![Some(ctx.grad.iter().zip(ctx.output).map(|(&g, &y)| g * y).collect())]
        })
    }

    /// Natural log of `max(x, 1e-12)`; the gradient is zero where clamped.
    pub fn log(&self) -> Tensor<T> {
        let floor = T::lit(LOG_CLAMP);
        self.unary(
            "log",
            move |x| x.max(floor).ln(),
            move |x, _| if x > floor { T::one() / x } else { T::zero() },
        )
    }

    pub fn relu(&self) -> Tensor<T> {
        self.unary(
            "relu",
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&self) -> Tensor<T> {
        let x = self.data();
        let t = gelu_tanh(x);
        let data = x.iter().zip(&t).map(|(&x, &t)| T::lit(0.5) * x * (T::one() + t)).collect();
        Tensor::from_op(self.shape().to_vec(), data, "gelu", vec![self.clone()], |ctx| {
            let x = ctx.inputs[0].data();
            let t = gelu_tanh(x);
            let g = ctx
                .grad
                .iter()
                .zip(x)
                .zip(&t)
                .map(|((&g, &x), &t)| g * gelu_derivative(x, t))
                .collect();
            vec![Some(g)]
        })
    }
}

fn gelu_inner<T: Real>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    c * (x + T::lit(GELU_COEFF) * x * x * x)
}

/// `tanh(sqrt(2/pi) (x + 0.044715 x^3))` for every element, through one
/// vectorized `exp` pass: `tanh(u) = 1 - 2 / (exp(2u) + 1)`.
fn gelu_tanh<T: Real>(x: &[T]) -> Vec<T> {
    let mut e: Vec<T> = x.iter().map(|&x| T::lit(2.0) * gelu_inner(x)).collect();
    T::exp_in_place(&mut e);
    e.into_iter().map(|e| T::one() - T::lit(2.0) / (e + T::one())).collect()
}

fn gelu_derivative<T: Real>(x: T, t: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let du = c * (T::one() + T::lit(3.0 * GELU_COEFF) * x * x);
    T::lit(0.5) * (T::one() + t) + T::lit(0.5) * x * (T::one() - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_plans() {
        assert_eq!(Broadcast::plan("t", &[2, 3], &[2, 3]).unwrap(), Broadcast::Same);
        assert_eq!(Broadcast::plan("t", &[2, 3], &[]).unwrap(), Broadcast::Scalar);
        assert_eq!(Broadcast::plan("t", &[4, 2, 3], &[3]).unwrap(), Broadcast::Suffix(3));
        assert_eq!(Broadcast::plan("t", &[4, 2, 3], &[1, 2, 3]).unwrap(), Broadcast::Suffix(6));
        assert_eq!(Broadcast::plan("t", &[4, 3], &[4, 1]).unwrap(), Broadcast::Prefix(3));
        assert!(Broadcast::plan("t", &[4, 3], &[2]).is_err());
        assert!(Broadcast::plan("t", &[4, 3], &[3, 4]).is_err());
    }

    #[test]
    fn relu_definition() {
        let x = Tensor::new(vec![-1.0f64, 2.0], &[2]).unwrap();
        assert_eq!(x.relu().to_vec(), vec![0.0, 2.0]);
    }

    #[test]
    fn gelu_reference_points() {
        let x = Tensor::new(vec![0.0f64, 1.0], &[2]).unwrap();
        let y = x.gelu().to_vec();
        assert_eq!(y[0], 0.0);
        assert!((y[1] - 0.8412).abs() < 1e-3, "{}", y[1]);
    }

    #[test]
    fn log_of_exp_round_trips() {
        let xs: Vec<f64> = (0..=100).map(|i| -5.0 + 0.1 * i as f64).collect();
        let x = Tensor::new(xs.clone(), &[xs.len()]).unwrap();
        for (a, b) in x.exp().log().data().iter().zip(&xs) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn log_clamps_zero() {
        let x = Tensor::new(vec![0.0f64], &[1]).unwrap();
        assert!((x.log().item() - LOG_CLAMP.ln()).abs() < 1e-9);
    }

    #[test]
    fn incompatible_shapes_error() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[3, 2]);
        assert!(matches!(a.add(&b), Err(TensorError::Shape { .. })));
    }
}
