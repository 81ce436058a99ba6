use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

/// Strided view of a matrix stored in a slice.
#[derive(Clone, Copy)]
pub(crate) struct MatView<'a, T> {
    pub data: &'a [T],
    pub rs: isize,
    pub cs: isize,
}

impl<'a, T> MatView<'a, T> {
    /// Row-major `rows x cols` matrix, optionally read transposed.
    pub fn row_major(data: &'a [T], cols: usize, transposed: bool) -> Self {
        if transposed {
            MatView { data, rs: 1, cs: cols as isize }
        } else {
            MatView { data, rs: cols as isize, cs: 1 }
        }
    }
}

/// `c (+)= a @ b` where `c` is row-major `m x n`.
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: MatView<'_, T>,
    b: MatView<'_, T>,
    c: &mut [T],
    accumulate: bool,
) {
    assert!(c.len() >= m * n);
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: callers pass views whose extents cover m x k and k x n; c is
    // checked above and is a distinct mutable buffer.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl<T: Real> Tensor<T> {
    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (a, b) = (self.shape(), rhs.shape());
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return Err(TensorError::shape("matmul", a, b));
        }
        let (m, k, n) = (a[0], a[1], b[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(
            m,
            k,
            n,
            MatView::row_major(self.data(), k, false),
            MatView::row_major(rhs.data(), n, false),
            &mut out,
            false,
        );
        Ok(Tensor::from_op(vec![m, n], out, "matmul", vec![self.clone(), rhs.clone()], move |ctx| {
            let (a, b, g) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad);
            let ga = ctx.inputs[0].requires_grad().then(|| {
                // dA = dC B^T
                let mut ga = vec![T::zero(); m * k];
                gemm(m, n, k, MatView::row_major(g, n, false), MatView::row_major(b, n, true), &mut ga, false);
                ga
            });
            let gb = ctx.inputs[1].requires_grad().then(|| {
                // dB = A^T dC
                let mut gb = vec![T::zero(); k * n];
                gemm(k, m, n, MatView::row_major(a, k, true), MatView::row_major(g, n, false), &mut gb, false);
                gb
            });
            vec![ga, gb]
        }))
    }

    /// Batched product of rank-3 tensors, `op(a[i]) @ op(b[i])`, where `op`
    /// transposes the last two axes when the matching flag is set.
    pub fn bmm(&self, rhs: &Tensor<T>, trans_a: bool, trans_b: bool) -> Result<Tensor<T>> {
        let (sa, sb) = (self.shape(), rhs.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(TensorError::shape("bmm", sa, sb));
        }
        let batch = sa[0];
        let (m, k) = if trans_a { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
        let (k2, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if k != k2 {
            return Err(TensorError::shape("bmm", sa, sb));
        }
        // stored column counts
        let (acols, bcols) = (sa[2], sb[2]);
        let mut out = vec![T::zero(); batch * m * n];
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                MatView::row_major(&self.data()[i * m * k..(i + 1) * m * k], acols, trans_a),
                MatView::row_major(&rhs.data()[i * k * n..(i + 1) * k * n], bcols, trans_b),
                &mut out[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        Ok(Tensor::from_op(vec![batch, m, n], out, "bmm", vec![self.clone(), rhs.clone()], move |ctx| {
            let (a, b, g) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad);
            let ga = ctx.inputs[0].requires_grad().then(|| {
                let mut ga = vec![T::zero(); batch * m * k];
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let bi = &b[i * k * n..(i + 1) * k * n];
                    let dst = &mut ga[i * m * k..(i + 1) * m * k];
                    if trans_a {
                        // A is stored k x m: dA = op(B) dC^T
                        gemm(k, n, m, MatView::row_major(bi, bcols, trans_b), MatView::row_major(gi, n, true), dst, false);
                    } else {
                        // dA = dC op(B)^T
                        gemm(m, n, k, MatView::row_major(gi, n, false), MatView::row_major(bi, bcols, !trans_b), dst, false);
                    }
                }
                ga
            });
            let gb = ctx.inputs[1].requires_grad().then(|| {
                let mut gb = vec![T::zero(); batch * k * n];
                for i in 0..batch {
                    let gi = &g[i * m * n..(i + 1) * m * n];
                    let ai = &a[i * m * k..(i + 1) * m * k];
                    let dst = &mut gb[i * k * n..(i + 1) * k * n];
                    if trans_b {
                        // B is stored n x k: dB = dC^T op(A)
                        gemm(n, m, k, MatView::row_major(gi, n, true), MatView::row_major(ai, acols, trans_a), dst, false);
                    } else {
                        // dB = op(A)^T dC
                        gemm(k, m, n, MatView::row_major(ai, acols, !trans_a), MatView::row_major(gi, n, false), dst, false);
                    }
                }
                gb
            });
            vec![ga, gb]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn two_by_two_product() {
        let a = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = Tensor::new(vec![5.0, 6.0, 7.0, 8.0], &[2, 2]).unwrap();
        let c = a.matmul(&b).unwrap();
        let expected = naive(a.data(), b.data(), 2, 2, 2);
        assert_eq!(expected, vec![19.0, 22.0, 43.0, 50.0]);
        assert_eq!(c.to_vec(), expected);
    }

    #[test]
    fn identity_is_neutral() {
        let a = Tensor::new((0..9).map(|i| i as f64 * 0.5 - 1.0).collect(), &[3, 3]).unwrap();
        let mut eye = vec![0.0; 9];
        (0..3).for_each(|i| eye[i * 4] = 1.0);
        let eye = Tensor::new(eye, &[3, 3]).unwrap();
        assert_eq!(a.matmul(&eye).unwrap().to_vec(), a.to_vec());
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn bmm_transpose_flags_agree_with_explicit_transpose() {
        let a = Tensor::new((0..24).map(|i| (i as f64).sin()).collect(), &[2, 3, 4]).unwrap();
        let b = Tensor::new((0..40).map(|i| (i as f64).cos()).collect(), &[2, 4, 5]).unwrap();
        let plain = a.bmm(&b, false, false).unwrap();
        let at = a.transpose().unwrap();
        let bt = b.transpose().unwrap();
        for (ta, tb, x, y) in [(true, false, &at, &b), (false, true, &a, &bt), (true, true, &at, &bt)] {
            let c = x.bmm(y, ta, tb).unwrap();
            for (p, q) in c.data().iter().zip(plain.data()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
