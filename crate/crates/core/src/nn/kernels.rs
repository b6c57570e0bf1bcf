//! Dense convolution kernels (im2col + GEMM) shared by the forward and
//! backward passes of `conv2d` and `transposed_conv2d`.

use super::NnError;

/// Spatial arithmetic of a valid-padding 2-D cross-correlation mapping
/// `[in_ch, in_h, in_w]` to `[out_ch, out_h, out_w]`.
///
/// A transposed convolution is described by the geometry of the forward
/// convolution it is the adjoint of.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn forward(
        in_ch: usize,
        in_h: usize,
        in_w: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
    ) -> Result<Self, NnError> {
        let (kh, kw) = kernel;
        let (sh, sw) = stride;
        if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
            return Err(NnError::Shape(format!(
                "kernel {kernel:?} and stride {stride:?} must be positive"
            )));
        }
        if in_h < kh || in_w < kw {
            return Err(NnError::Shape(format!(
                "input {in_h}x{in_w} smaller than kernel {kh}x{kw}"
            )));
        }
        Ok(Self {
            in_ch,
            in_h,
            in_w,
            out_ch,
            kernel,
            stride,
            out_h: (in_h - kh) / sh + 1,
            out_w: (in_w - kw) / sw + 1,
        })
    }

    /// Geometry of the convolution whose adjoint maps `[ch, h, w]` to
    /// `[target_ch, target_h, target_w]`.
    pub fn for_transposed(
        ch: usize,
        h: usize,
        w: usize,
        target_ch: usize,
        target: (usize, usize),
        kernel: (usize, usize),
        stride: (usize, usize),
    ) -> Result<Self, NnError> {
        let g = Self::forward(target_ch, target.0, target.1, ch, kernel, stride)?;
        if g.out_h != h || g.out_w != w {
            return Err(NnError::Shape(format!(
                "transposed conv: {h}x{w} input cannot produce {}x{} with kernel {kernel:?} stride {stride:?}",
                target.0, target.1
            )));
        }
        Ok(g)
    }

    /// Smallest output size a transposed convolution can produce from `h x w`.
    pub fn transposed_min_output(
        h: usize,
        w: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
    ) -> (usize, usize) {
        ((h - 1) * stride.0 + kernel.0, (w - 1) * stride.1 + kernel.1)
    }

    /// Rows of the patch matrix: `in_ch * kh * kw`.
    pub fn patch_len(&self) -> usize {
        self.in_ch * self.kernel.0 * self.kernel.1
    }

    /// Columns of the patch matrix: `out_h * out_w`.
    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn input_len(&self) -> usize {
        self.in_ch * self.in_h * self.in_w
    }

    pub fn output_len(&self) -> usize {
        self.out_ch * self.positions()
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.patch_len()
    }
}

/// `x [in_ch, in_h, in_w]` to patch matrix `[patch_len, positions]`.
pub fn im2col(g: &ConvGeometry, x: &[f64], cols: &mut [f64]) {
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let p = g.positions();
    for c in 0..g.in_ch {
        let plane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for a in 0..kh {
            for b in 0..kw {
                let row = ((c * kh + a) * kw + b) * p;
                let dst = &mut cols[row..row + p];
                for i in 0..g.out_h {
                    let src = &plane[(i * sh + a) * g.in_w + b..];
                    let out = &mut dst[i * g.out_w..(i + 1) * g.out_w];
                    if sw == 1 {
                        out.copy_from_slice(&src[..g.out_w]);
                    } else {
                        for (j, o) in out.iter_mut().enumerate() {
                            *o = src[j * sw];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add a patch matrix back into `x`.
pub fn col2im(g: &ConvGeometry, cols: &[f64], x: &mut [f64]) {
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let p = g.positions();
    for c in 0..g.in_ch {
        let plane = &mut x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for a in 0..kh {
            for b in 0..kw {
                let row = ((c * kh + a) * kw + b) * p;
                let src = &cols[row..row + p];
                for i in 0..g.out_h {
                    let base = (i * sh + a) * g.in_w + b;
                    let s = &src[i * g.out_w..(i + 1) * g.out_w];
                    for (j, v) in s.iter().enumerate() {
                        plane[base + j * sw] += v;
                    }
                }
            }
        }
    }
}

/// Row-major `c = alpha * op(a) * op(b) + beta * c` where `op` optionally
/// transposes. Shapes are given after transposition: `op(a)` is `m x k`,
/// `op(b)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: slice lengths are checked above and the strides describe
    // exactly those row-major buffers.
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
            n as isize,
            1,
        );
    }
}

/// Dot product with four independent accumulators.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += W x` for row-major `W: [m, n]`.
pub fn matvec_acc(m: usize, n: usize, w: &[f64], x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), m * n);
    for (row, yo) in w.chunks_exact(n).zip(y.iter_mut()).take(m) {
        *yo += dot(row, x);
    }
}

/// `dx += W^T g` for row-major `W: [m, n]`.
pub fn matvec_t_acc(m: usize, n: usize, w: &[f64], g: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(w.len(), m * n);
    for (row, &go) in w.chunks_exact(n).zip(g).take(m) {
        if go != 0.0 {
            dx.iter_mut().zip(row).for_each(|(d, w)| *d += go * w);
        }
    }
}

/// `dw += g x^T` for row-major `dw: [m, n]`.
pub fn outer_acc(g: &[f64], x: &[f64], dw: &mut [f64]) {
    debug_assert_eq!(dw.len(), g.len() * x.len());
    for (row, &go) in dw.chunks_exact_mut(x.len()).zip(g) {
        if go != 0.0 {
            row.iter_mut().zip(x).for_each(|(d, x)| *d += go * x);
        }
    }
}

/// `tanh` through `expm1`; accurate near 0 and faster than `f64::tanh`.
pub fn tanh(x: f64) -> f64 {
    if x.abs() > 20.0 {
        return x.signum();
    }
    let e = (2.0 * x).exp_m1();
    e / (e + 2.0)
}

/// Forward cross-correlation. `weight` is `[out_ch, in_ch, kh, kw]`.
pub fn conv_forward(
    g: &ConvGeometry,
    x: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
    cols: &mut Vec<f64>,
) -> Vec<f64> {
    let k = g.patch_len();
    let p = g.positions();
    cols.resize(k * p, 0.0);
    im2col(g, x, cols);
    let mut y = vec![0.0; g.out_ch * p];
    if let Some(bias) = bias {
        for (o, row) in y.chunks_mut(p).enumerate() {
            row.fill(bias[o]);
        }
    }
    gemm(g.out_ch, k, p, weight, false, cols, false, 1.0, &mut y);
    y
}

/// Gradients of [`conv_forward`] given the cached patch matrix.
/// Returns `(dx, dweight, dbias)`; `dx` only when `need_dx`.
pub fn conv_backward(
    g: &ConvGeometry,
    cols: &[f64],
    weight: &[f64],
    dy: &[f64],
    need_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let k = g.patch_len();
    let p = g.positions();
    let mut dw = vec![0.0; g.weight_len()];
    gemm(g.out_ch, p, k, dy, false, cols, true, 0.0, &mut dw);
    let dx = need_dx.then(|| {
        let mut dcols = vec![0.0; k * p];
        gemm(k, g.out_ch, p, weight, true, dy, false, 0.0, &mut dcols);
        let mut dx = vec![0.0; g.input_len()];
        col2im(g, &dcols, &mut dx);
        dx
    });
    let db = dy.chunks(p).map(|row| row.iter().sum()).collect();
    (dx, dw, db)
}

/// Adjoint of [`conv_forward`] (without bias) plus an optional bias on the
/// `g.in_ch` output channels. `y` is `[g.out_ch, out_h, out_w]`.
pub fn conv_transpose_forward(
    g: &ConvGeometry,
    y: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let k = g.patch_len();
    let p = g.positions();
    let mut cols = vec![0.0; k * p];
    gemm(k, g.out_ch, p, weight, true, y, false, 0.0, &mut cols);
    let mut x = vec![0.0; g.input_len()];
    if let Some(bias) = bias {
        let plane = g.in_h * g.in_w;
        for (c, chunk) in x.chunks_mut(plane).enumerate() {
            chunk.fill(bias[c]);
        }
    }
    col2im(g, &cols, &mut x);
    x
}

/// Gradients of [`conv_transpose_forward`]. Returns `(dy, dweight, dbias)`;
/// `dy` only when `need_dy`.
pub fn conv_transpose_backward(
    g: &ConvGeometry,
    y: &[f64],
    weight: &[f64],
    dx: &[f64],
    need_dy: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let k = g.patch_len();
    let p = g.positions();
    let mut dcols = vec![0.0; k * p];
    im2col(g, dx, &mut dcols);
    let dy = need_dy.then(|| {
        let mut dy = vec![0.0; g.output_len()];
        gemm(g.out_ch, k, p, weight, false, &dcols, false, 0.0, &mut dy);
        dy
    });
    let mut dw = vec![0.0; g.weight_len()];
    gemm(g.out_ch, p, k, y, false, &dcols, true, 0.0, &mut dw);
    let plane = g.in_h * g.in_w;
    let db = dx.chunks(plane).map(|c| c.iter().sum()).collect();
    (dy, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(g: &ConvGeometry, x: &[f64], w: &[f64]) -> Vec<f64> {
        let (kh, kw) = g.kernel;
        let mut y = vec![0.0; g.output_len()];
        for o in 0..g.out_ch {
            for i in 0..g.out_h {
                for j in 0..g.out_w {
                    let mut s = 0.0;
                    for c in 0..g.in_ch {
                        for a in 0..kh {
                            for b in 0..kw {
                                let xi =
                                    (c * g.in_h + i * g.stride.0 + a) * g.in_w + j * g.stride.1 + b;
                                s += x[xi] * w[((o * g.in_ch + c) * kh + a) * kw + b];
                            }
                        }
                    }
                    y[(o * g.out_h + i) * g.out_w + j] = s;
                }
            }
        }
        y
    }

    #[test]
    fn gemm_matches_direct_product() {
        // op(a) = a^T, a stored 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = vec![0.0; 4];
        gemm(2, 3, 2, &a, true, &b, false, 0.0, &mut c);
        // a^T = [[1,3,5],[2,4,6]]
        assert_eq!(c, vec![6.0, 8.0, 8.0, 10.0]);
    }

    #[test]
    fn gemm_based_conv_matches_loops() {
        let g = ConvGeometry::forward(2, 7, 6, 3, (3, 2), (2, 1)).unwrap();
        let x: Vec<f64> = (0..g.input_len())
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        let w: Vec<f64> = (0..g.weight_len())
            .map(|i| (i as f64 * 0.11).cos())
            .collect();
        let mut cols = Vec::new();
        let y = conv_forward(&g, &x, &w, None, &mut cols);
        let expected = naive_conv(&g, &x, &w);
        for (a, b) in y.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_geometry_rejects_unreachable_target() {
        assert!(ConvGeometry::for_transposed(40, 18, 10, 1, (32, 24), (15, 15), (1, 1)).is_ok());
        assert!(ConvGeometry::for_transposed(40, 18, 10, 1, (33, 24), (15, 15), (1, 1)).is_err());
        // stride (9,4) drops trailing rows, so 32x24 is still reachable from 2x3
        assert!(ConvGeometry::for_transposed(40, 2, 3, 1, (32, 24), (15, 15), (9, 4)).is_ok());
    }
}
