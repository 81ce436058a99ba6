use crate::error::{Result, TensorError};
use crate::ops::reduce::{check_axis, split_axis};
use crate::real::Real;
use crate::tensor::Tensor;

pub(crate) fn permute_data<T: Real>(data: &[T], shape: &[usize], axes: &[usize]) -> Vec<T> {
    let rank = shape.len();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(data.len());
    if rank == 0 {
        out.extend_from_slice(data);
        return out;
    }
    let last = rank - 1;
    let (last_len, last_stride) = (out_shape[last], strides[last]);
    let mut idx = vec![0usize; rank];
    let mut base = 0usize;
    loop {
        if last_stride == 1 {
            out.extend_from_slice(&data[base..base + last_len]);
        } else {
            out.extend((0..last_len).map(|j| data[base + j * last_stride]));
        }
        // odometer over all but the last output axis
        let mut d = last;
        loop {
            if d == 0 {
                return out;
            }
            d -= 1;
            idx[d] += 1;
            base += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            base -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
}

impl<T: Real> Tensor<T> {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if shape.iter().product::<usize>() != self.numel() || shape.contains(&0) {
            return Err(TensorError::shape("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            "reshape",
            vec![self.clone()],
            |ctx| vec![Some(ctx.grad.to_vec())],
        ))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<T>> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(TensorError::invalid(
                "permute",
                format!("{axes:?} is not a permutation of the axes of {:?}", self.shape()),
            ));
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape()[a]).collect();
        let data = permute_data(self.data(), self.shape(), axes);
        let mut inverse = vec![0; rank];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        let grad_shape = out_shape.clone();
        Ok(Tensor::from_op(out_shape, data, "permute", vec![self.clone()], move |ctx| {
            vec![Some(permute_data(ctx.grad, &grad_shape, &inverse))]
        }))
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Tensor<T>> {
        let rank = self.rank();
        if rank < 2 {
            return Err(TensorError::invalid("transpose", "needs at least two axes"));
        }
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(rank - 2, rank - 1);
        self.permute(&axes)
    }

    /// Concatenates along `axis`; all other dims must agree.
    pub fn concat(parts: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::invalid("concat", "no tensors given"))?;
        check_axis("concat", first.shape(), axis)?;
        for p in &parts[1..] {
            let ok = p.rank() == first.rank()
                && p.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(TensorError::shape("concat", first.shape(), p.shape()));
            }
        }
        let (outer, _, inner) = split_axis(first.shape(), axis);
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &len) in parts.iter().zip(&lens) {
                data.extend_from_slice(&p.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        Ok(Tensor::from_op(shape, data, "concat", parts.to_vec(), move |ctx| {
            let mut grads: Vec<Vec<T>> = lens.iter().map(|&l| Vec::with_capacity(outer * l * inner)).collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (g, &len) in grads.iter_mut().zip(&lens) {
                    g.extend_from_slice(&ctx.grad[pos..pos + len * inner]);
                    pos += len * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        }))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor<T>> {
        check_axis("slice", self.shape(), axis)?;
        let (outer, len, inner) = split_axis(self.shape(), axis);
        if start >= end || end > len {
            return Err(TensorError::invalid(
                "slice",
                format!("range {start}..{end} invalid for axis of length {len}"),
            ));
        }
        let width = (end - start) * inner;
        let mut data = Vec::with_capacity(outer * width);
        for o in 0..outer {
            let off = (o * len + start) * inner;
            data.extend_from_slice(&self.data()[off..off + width]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = end - start;
        Ok(Tensor::from_op(shape, data, "slice", vec![self.clone()], move |ctx| {
            let mut g = vec![T::zero(); outer * len * inner];
            for o in 0..outer {
                let off = (o * len + start) * inner;
                g[off..off + width].copy_from_slice(&ctx.grad[o * width..(o + 1) * width]);
            }
            vec![Some(g)]
        }))
    }
}
