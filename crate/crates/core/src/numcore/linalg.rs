//! Dense kernels shared by the tape: strided GEMM and the im2col lowering
//! used by stride-1 convolution.

/// `c = a * b + beta * c` for an `m x k` by `k x n` product with explicit
/// (row, column) strides, so transposed operands need no copies.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    (rsc, csc): (isize, isize),
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the asserts above bound every index reachable through the given
    // strides, which callers derive from the same m/k/n extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

impl ConvGeometry {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            self.h + 2 * self.pad_h + 1 - self.kh,
            self.w + 2 * self.pad_w + 1 - self.kw,
        )
    }
}

/// Output columns `[lo, hi)` of kernel column `kx` that read inside the input row.
fn valid_span(g: &ConvGeometry, kx: usize, ow: usize) -> (usize, usize) {
    let lo = g.pad_w.saturating_sub(kx).min(ow);
    let hi = (g.w + g.pad_w).saturating_sub(kx).min(ow).max(lo);
    (lo, hi)
}

/// Lowers one `[cin, h, w]` item to a `[cin*kh*kw, oh*ow]` patch matrix,
/// appended to `col`.
pub fn im2col(g: &ConvGeometry, x: &[f64], col: &mut Vec<f64>) {
    let (oh, ow) = g.out_hw();
    for ci in 0..g.cin {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let (lo, hi) = valid_span(g, kx, ow);
                for oy in 0..oh {
                    let iy = oy + ky;
                    if iy < g.pad_h || iy - g.pad_h >= g.h {
                        col.resize(col.len() + ow, 0.0);
                        continue;
                    }
                    let src = &x[(ci * g.h + iy - g.pad_h) * g.w..];
                    col.resize(col.len() + lo, 0.0);
                    col.extend_from_slice(&src[lo + kx - g.pad_w..hi + kx - g.pad_w]);
                    col.resize(col.len() + ow - hi, 0.0);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch-matrix gradients back onto the input.
pub fn col2im(g: &ConvGeometry, col: &[f64], x: &mut [f64]) {
    let (oh, ow) = g.out_hw();
    let plane = oh * ow;
    for ci in 0..g.cin {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &col[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_span(g, kx, ow);
                for oy in 0..oh {
                    let iy = oy + ky;
                    if iy < g.pad_h || iy - g.pad_h >= g.h {
                        continue;
                    }
                    let start = (ci * g.h + iy - g.pad_h) * g.w + lo + kx - g.pad_w;
                    let dst = &mut x[start..start + hi - lo];
                    for (d, s) in dst.iter_mut().zip(&src[oy * ow + lo..oy * ow + hi]) {
                        *d += s;
                    }
                }
            }
        }
    }
}
