use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

/// (outer, axis length, inner) split of a shape around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(TensorError::invalid(op, format!("axis {axis} out of range for {shape:?}")));
    }
    Ok(())
}

impl<T: Real> Tensor<T> {
    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&self) -> Tensor<T> {
        let total = self.data().iter().copied().sum();
        Tensor::from_op(Vec::new(), vec![total], "sum", vec![self.clone()], |ctx| {
            vec![Some(vec![ctx.grad[0]; ctx.inputs[0].numel()])]
        })
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = T::from_usize(self.numel()).unwrap();
        let total: T = self.data().iter().copied().sum();
        Tensor::from_op(Vec::new(), vec![total / n], "mean", vec![self.clone()], move |ctx| {
            vec![Some(vec![ctx.grad[0] / n; ctx.inputs[0].numel()])]
        })
    }

    pub fn sum_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor<T>> {
        self.reduce_axis(axis, keepdim, false)
    }

    pub fn mean_axis(&self, axis: usize, keepdim: bool) -> Result<Tensor<T>> {
        self.reduce_axis(axis, keepdim, true)
    }

    fn reduce_axis(&self, axis: usize, keepdim: bool, average: bool) -> Result<Tensor<T>> {
        let op = if average { "mean_axis" } else { "sum_axis" };
        check_axis(op, self.shape(), axis)?;
        let (outer, len, inner) = split_axis(self.shape(), axis);
        let scale = if average {
            T::one() / T::from_usize(len).unwrap()
        } else {
            T::one()
        };
        let x = self.data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for k in 0..len {
                let row = &x[(o * len + k) * inner..(o * len + k + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                dst.iter_mut().zip(row).for_each(|(d, &v)| *d = *d + v);
            }
        }
        out.iter_mut().for_each(|v| *v = *v * scale);
        let mut shape = self.shape().to_vec();
        if keepdim {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        Ok(Tensor::from_op(shape, out, op, vec![self.clone()], move |ctx| {
            let mut g = vec![T::zero(); outer * len * inner];
            for o in 0..outer {
                let src = &ctx.grad[o * inner..(o + 1) * inner];
                for k in 0..len {
                    let dst = &mut g[(o * len + k) * inner..(o * len + k + 1) * inner];
                    dst.iter_mut().zip(src).for_each(|(d, &v)| *d = v * scale);
                }
            }
            vec![Some(g)]
        }))
    }
}
