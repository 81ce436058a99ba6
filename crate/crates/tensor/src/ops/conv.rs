use crate::error::{Result, TensorError};
use crate::ops::linalg::{gemm, MatView};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.n * self.oh * self.ow
    }

    /// Visits (column index, position row, input offset) for every in-bounds tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let ck = self.patch_len();
        for n in 0..self.n {
            for oy in 0..self.oh {
                for ox in 0..self.ow {
                    let p = (n * self.oh + oy) * self.ow + ox;
                    for c in 0..self.c {
                        for ky in 0..self.kh {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= self.h as isize {
                                continue;
                            }
                            for kx in 0..self.kw {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= self.w as isize {
                                    continue;
                                }
                                let col = p * ck + (c * self.kh + ky) * self.kw + kx;
                                let src = ((n * self.c + c) * self.h + iy as usize) * self.w + ix as usize;
                                f(col, src);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn im2col<T: Real>(x: &[T], g: &Geometry) -> Vec<T> {
    let mut col = vec![T::zero(); g.positions() * g.patch_len()];
    g.for_each_tap(|c, s| col[c] = x[s]);
    col
}

/// Output side for a convolution, or `None` when the kernel does not fit.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let span = input + 2 * padding;
    (stride >= 1 && kernel >= 1 && kernel <= span).then(|| (span - kernel) / stride + 1)
}

impl<T: Real> Tensor<T> {
    /// 2-D cross-correlation of `[N, C, H, W]` input with `[F, C, kh, kw]`
    /// weights, producing `[N, F, H', W']`.
    pub fn conv2d(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>, stride: usize, padding: usize) -> Result<Tensor<T>> {
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
            return Err(TensorError::shape("conv2d", xs, ws));
        }
        if let Some(b) = bias {
            if b.shape() != [ws[0]] {
                return Err(TensorError::shape("conv2d bias", b.shape(), &ws[..1]));
            }
        }
        let (oh, ow) = match (
            conv_output_size(xs[2], ws[2], stride, padding),
            conv_output_size(xs[3], ws[3], stride, padding),
        ) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => return Err(TensorError::shape("conv2d", xs, ws)),
        };
        let g = Geometry {
            n: xs[0],
            c: xs[1],
            h: xs[2],
            w: xs[3],
            kh: ws[2],
            kw: ws[3],
            stride,
            pad: padding,
            oh,
            ow,
        };
        let f = ws[0];
        let (ck, p) = (g.patch_len(), g.positions());
        let col = im2col(self.data(), &g);
        // [P, F] = col [P, CK] @ W^T [CK, F]
        let mut flat = vec![T::zero(); p * f];
        gemm(p, ck, f, MatView::row_major(&col, ck, false), MatView::row_major(weight.data(), ck, true), &mut flat, false);
        let spatial = oh * ow;
        let mut out = vec![T::zero(); g.n * f * spatial];
        for n in 0..g.n {
            for s in 0..spatial {
                let row = &flat[(n * spatial + s) * f..(n * spatial + s + 1) * f];
                for (fi, &v) in row.iter().enumerate() {
                    let b = bias.map_or(T::zero(), |b| b.data()[fi]);
                    out[(n * f + fi) * spatial + s] = v + b;
                }
            }
        }
        let mut inputs = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            inputs.push(b.clone());
        }
        Ok(Tensor::from_op(vec![g.n, f, oh, ow], out, "conv2d", inputs, move |ctx| {
            // back to [P, F] layout
            let mut g2 = vec![T::zero(); p * f];
            for n in 0..g.n {
                for fi in 0..f {
                    let src = &ctx.grad[(n * f + fi) * spatial..(n * f + fi + 1) * spatial];
                    for (s, &v) in src.iter().enumerate() {
                        g2[(n * spatial + s) * f + fi] = v;
                    }
                }
            }
            let gx = ctx.inputs[0].requires_grad().then(|| {
                let mut dcol = vec![T::zero(); p * ck];
                gemm(p, f, ck, MatView::row_major(&g2, f, false), MatView::row_major(ctx.inputs[1].data(), ck, false), &mut dcol, false);
                let mut gx = vec![T::zero(); ctx.inputs[0].numel()];
                g.for_each_tap(|c, s| gx[s] = gx[s] + dcol[c]);
                gx
            });
            let gw = ctx.inputs[1].requires_grad().then(|| {
                let mut gw = vec![T::zero(); f * ck];
                gemm(f, p, ck, MatView::row_major(&g2, f, true), MatView::row_major(&col, ck, false), &mut gw, false);
                gw
            });
            let mut grads = vec![gx, gw];
            if ctx.inputs.len() == 3 {
                let mut gb = vec![T::zero(); f];
                for row in g2.chunks_exact(f) {
                    gb.iter_mut().zip(row).for_each(|(a, &b)| *a = *a + b);
                }
                grads.push(Some(gb));
            }
            grads
        }))
    }
}
