use crate::error::Result;
use crate::ops::reduce::{check_axis, split_axis};
use crate::real::Real;
use crate::tensor::Tensor;

impl<T: Real> Tensor<T> {
    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        check_axis("softmax", self.shape(), axis)?;
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let x = self.data();
        let mut out = vec![T::zero(); x.len()];
        if inner == 1 {
            for (row, dst) in x.chunks_exact(len).zip(out.chunks_exact_mut(len)) {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                dst.iter_mut().zip(row).for_each(|(d, &v)| *d = v - max);
                T::exp_in_place(dst);
                let total: T = dst.iter().copied().sum();
                let inv = T::one() / total;
                dst.iter_mut().for_each(|d| *d = *d * inv);
            }
        } else {
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| (o * len + k) * inner + i;
                    let max = (0..len).map(|k| x[at(k)]).fold(T::neg_infinity(), T::max);
                    let mut total = T::zero();
                    for k in 0..len {
                        let e = (x[at(k)] - max).exp();
                        out[at(k)] = e;
                        total = total + e;
                    }
                    for k in 0..len {
                        out[at(k)] = out[at(k)] / total;
                    }
                }
            }
        }
        Ok(Tensor::from_op(self.shape().to_vec(), out, "softmax", vec![self.clone()], move |ctx| {
            let (y, g) = (ctx.output, ctx.grad);
            let mut gx = vec![T::zero(); y.len()];
            if inner == 1 {
                for ((yr, gr), dst) in y.chunks_exact(len).zip(g.chunks_exact(len)).zip(gx.chunks_exact_mut(len)) {
                    let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for ((d, &yv), &gv) in dst.iter_mut().zip(yr).zip(gr) {
                        *d = yv * (gv - dot);
                    }
                }
                return vec![Some(gx)];
            }
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| (o * len + k) * inner + i;
                    let dot: T = (0..len).map(|k| g[at(k)] * y[at(k)]).sum();
                    for k in 0..len {
                        gx[at(k)] = y[at(k)] * (g[at(k)] - dot);
                    }
                }
            }
            vec![Some(gx)]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_row_is_uniform() {
        let x = Tensor::full(&[1, 4], 3.0f64);
        assert_eq!(x.softmax(1).unwrap().to_vec(), vec![0.25; 4]);
    }

    #[test]
    fn two_logits() {
        let y = Tensor::new(vec![2.0f64, 0.0], &[2]).unwrap().softmax(0).unwrap();
        assert!((y.data()[0] - 0.8808).abs() < 1e-4);
        assert!((y.data()[1] - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn shift_invariance() {
        let v: Vec<f64> = (0..12).map(|i| (i as f64 * 1.7).sin() * 3.0).collect();
        let x = Tensor::new(v, &[3, 4]).unwrap();
        let a = x.softmax(1).unwrap();
        let b = x.add_scalar(11.5).softmax(1).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn non_last_axis() {
        let x = Tensor::new(vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2]).unwrap();
        let y = x.softmax(0).unwrap();
        for col in 0..2 {
            let s: f64 = (0..3).map(|r| y.data()[r * 2 + col]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
