use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

/// Whether batch statistics or running statistics normalize the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

/// Running mean/variance carried between batch-norm calls.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: T,
    pub eps: T,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum: T::lit(0.1),
            eps: T::lit(1e-5),
        }
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-6;

impl<T: Real> Tensor<T> {
    /// Normalizes each row over the last axis, then applies `gamma`, `beta`.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<Tensor<T>> {
        let d = *self.shape().last().unwrap_or(&0);
        if d < 2 {
            return Err(TensorError::shape("layer_norm", self.shape(), gamma.shape()));
        }
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(TensorError::shape("layer_norm", self.shape(), gamma.shape()));
        }
        let rows = self.numel() / d;
        let dt = T::from_usize(d).unwrap();
        let eps = T::lit(LAYER_NORM_EPS);
        let mut xhat = Vec::with_capacity(self.numel());
        let mut inv_std = Vec::with_capacity(rows);
        for row in self.data().chunks_exact(d) {
            let mean = row.iter().copied().sum::<T>() / dt;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dt;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            xhat.extend(row.iter().map(|&v| (v - mean) * is));
        }
        let (gm, bt) = (gamma.data(), beta.data());
        let out = xhat
            .chunks_exact(d)
            .flat_map(|r| r.iter().zip(gm).zip(bt).map(|((&x, &g), &b)| x * g + b))
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            "layer_norm",
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |ctx| {
                let gm = ctx.inputs[1].data();
                let mut gx = Vec::with_capacity(ctx.grad.len());
                let mut gg = vec![T::zero(); d];
                let mut gb = vec![T::zero(); d];
                for ((g, xh), &is) in ctx.grad.chunks_exact(d).zip(xhat.chunks_exact(d)).zip(&inv_std) {
                    let mut sum_dxh = T::zero();
                    let mut sum_dxh_xh = T::zero();
                    for j in 0..d {
                        let dxh = g[j] * gm[j];
                        sum_dxh = sum_dxh + dxh;
                        sum_dxh_xh = sum_dxh_xh + dxh * xh[j];
                        gg[j] = gg[j] + g[j] * xh[j];
                        gb[j] = gb[j] + g[j];
                    }
                    for j in 0..d {
                        let dxh = g[j] * gm[j];
                        gx.push(is / dt * (dt * dxh - sum_dxh - xh[j] * sum_dxh_xh));
                    }
                }
                vec![Some(gx), Some(gg), Some(gb)]
            },
        ))
    }

    /// Batch normalization over axis 1 of an `[N, C, ...]` tensor.
    ///
    /// Train mode normalizes with the biased batch variance and folds the
    /// unbiased variance into `stats`; eval mode reads `stats` only.
    pub fn batch_norm(
        &self,
        gamma: &Tensor<T>,
        beta: &Tensor<T>,
        stats: &mut RunningStats<T>,
        mode: NormMode,
    ) -> Result<Tensor<T>> {
        let shape = self.shape();
        if shape.len() < 2 {
            return Err(TensorError::invalid("batch_norm", format!("needs [N, C, ...], got {shape:?}")));
        }
        let (n, c) = (shape[0], shape[1]);
        let s: usize = shape[2..].iter().product();
        if gamma.shape() != [c] || beta.shape() != [c] || stats.mean.len() != c || stats.var.len() != c {
            return Err(TensorError::shape("batch_norm", shape, gamma.shape()));
        }
        let m = n * s;
        let x = self.data();
        let idx = move |ni: usize, ci: usize, si: usize| (ni * c + ci) * s + si;
        let (mean, var) = match mode {
            NormMode::Train => {
                if m < 2 {
                    return Err(TensorError::DegenerateBatch(m));
                }
                let mt = T::from_usize(m).unwrap();
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ci in 0..c {
                    let mut acc = T::zero();
                    for ni in 0..n {
                        acc = acc + x[idx(ni, ci, 0)..idx(ni, ci, 0) + s].iter().copied().sum::<T>();
                    }
                    mean[ci] = acc / mt;
                    let mut acc = T::zero();
                    for ni in 0..n {
                        acc = acc + x[idx(ni, ci, 0)..idx(ni, ci, 0) + s]
                            .iter()
                            .map(|&v| (v - mean[ci]) * (v - mean[ci]))
                            .sum::<T>();
                    }
                    var[ci] = acc / mt;
                }
                let unbias = mt / (mt - T::one());
                let mom = stats.momentum;
                for ci in 0..c {
                    stats.mean[ci] = (T::one() - mom) * stats.mean[ci] + mom * mean[ci];
                    stats.var[ci] = (T::one() - mom) * stats.var[ci] + mom * var[ci] * unbias;
                }
                (mean, var)
            }
            NormMode::Eval => (stats.mean.clone(), stats.var.clone()),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + stats.eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); x.len()];
        let mut out = vec![T::zero(); x.len()];
        let (gm, bt) = (gamma.data(), beta.data());
        for ni in 0..n {
            for ci in 0..c {
                let base = idx(ni, ci, 0);
                for si in 0..s {
                    let v = (x[base + si] - mean[ci]) * inv_std[ci];
                    xhat[base + si] = v;
                    out[base + si] = v * gm[ci] + bt[ci];
                }
            }
        }
        let train = mode == NormMode::Train;
        Ok(Tensor::from_op(
            shape.to_vec(),
            out,
            "batch_norm",
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |ctx| {
                let g = ctx.grad;
                let gm = ctx.inputs[1].data();
                let mt = T::from_usize(m).unwrap();
                let mut gg = vec![T::zero(); c];
                let mut gb = vec![T::zero(); c];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = idx(ni, ci, 0);
                        for si in 0..s {
                            gg[ci] = gg[ci] + g[base + si] * xhat[base + si];
                            gb[ci] = gb[ci] + g[base + si];
                        }
                    }
                }
                let mut gx = vec![T::zero(); g.len()];
                for ci in 0..c {
                    let scale = gm[ci] * inv_std[ci];
                    for ni in 0..n {
                        let base = idx(ni, ci, 0);
                        for si in 0..s {
                            let k = base + si;
                            gx[k] = if train {
                                // sum(dy) = gb, sum(dy * xhat) = gg
                                scale / mt * (mt * g[k] - gb[ci] - xhat[k] * gg[ci])
                            } else {
                                scale * g[k]
                            };
                        }
                    }
                }
                vec![Some(gx), Some(gg), Some(gb)]
            },
        ))
    }

    /// Euclidean norm over the last axis; the axis is dropped.
    pub fn l2_norm(&self) -> Result<Tensor<T>> {
        let d = *self
            .shape()
            .last()
            .ok_or_else(|| TensorError::invalid("l2_norm", "rank-0 input"))?;
        let norms: Vec<T> = self
            .data()
            .chunks_exact(d)
            .map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt())
            .collect();
        let shape = self.shape()[..self.rank() - 1].to_vec();
        Ok(Tensor::from_op(shape, norms, "l2_norm", vec![self.clone()], move |ctx| {
            let x = ctx.inputs[0].data();
            let g = x
                .chunks_exact(d)
                .zip(ctx.grad.iter().zip(ctx.output))
                .flat_map(|(row, (&g, &nrm))| row.iter().map(move |&v| g * v / nrm))
                .collect();
            vec![Some(g)]
        }))
    }

    /// Scales every row (last axis) to unit Euclidean norm.
    pub fn l2_normalize(&self) -> Result<Tensor<T>> {
        let d = *self
            .shape()
            .last()
            .ok_or_else(|| TensorError::invalid("l2_normalize", "rank-0 input"))?;
        let norms: Vec<T> = self
            .data()
            .chunks_exact(d)
            .map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt())
            .collect();
        let out = self
            .data()
            .chunks_exact(d)
            .zip(&norms)
            .flat_map(|(r, &nrm)| r.iter().map(move |&v| v / nrm))
            .collect();
        Ok(Tensor::from_op(self.shape().to_vec(), out, "l2_normalize", vec![self.clone()], move |ctx| {
            let mut gx = Vec::with_capacity(ctx.grad.len());
            for ((g, y), &nrm) in ctx.grad.chunks_exact(d).zip(ctx.output.chunks_exact(d)).zip(&norms) {
                let dot: T = g.iter().zip(y).map(|(&a, &b)| a * b).sum();
                gx.extend(g.iter().zip(y).map(|(&gi, &yi)| (gi - yi * dot) / nrm));
            }
            vec![Some(gx)]
        }))
    }
}
