//! Scalar abstraction and the few dense kernels the network needs.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::Float;

pub trait Scalar: Float + AddAssign + Sum + Default + Debug + Send + Sync + 'static {
    /// `C = alpha·A·B + beta·C` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn of(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("f64 converts to every scalar")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

macro_rules! impl_scalar {
    ($t:ty, $kernel:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                debug_assert!(a.len() >= span(m, k, rsa, csa));
                debug_assert!(b.len() >= span(k, n, rsb, csb));
                debug_assert!(c.len() >= span(m, n, rsc, csc));
                // SAFETY: the strides describe regions inside the slices (checked
                // in debug builds above) and `c` does not alias `a` or `b`.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
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
                    )
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

fn span(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
}

/// Output side length of a padded convolution with padding `kernel / 2`.
pub fn conv_out(size: usize, kernel: usize, stride: usize) -> usize {
    (size + 2 * (kernel / 2) - kernel) / stride + 1
}

/// Unfolds a `[c, h, w]` image into `[c·k·k, ho·wo]` patch columns.
pub fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, k: usize, stride: usize) -> Vec<T> {
    let pad = (k / 2) as isize;
    let ho = conv_out(h, k, stride);
    let wo = conv_out(w, k, stride);
    let p = ho * wo;
    let mut cols = vec![T::zero(); c * k * k * p];
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ch * k + ky) * k + kx) * p..][..p];
                for oy in 0..ho {
                    let iy = (oy * stride) as isize + ky as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..][..w];
                    let dst = &mut row[oy * wo..][..wo];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride) as isize + kx as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
pub fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, stride: usize) -> Vec<T> {
    let pad = (k / 2) as isize;
    let ho = conv_out(h, k, stride);
    let wo = conv_out(w, k, stride);
    let p = ho * wo;
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ch * k + ky) * k + kx) * p..][..p];
                for oy in 0..ho {
                    let iy = (oy * stride) as isize + ky as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..][..w];
                    for (ox, g) in row[oy * wo..][..wo].iter().enumerate() {
                        let ix = (ox * stride) as isize + kx as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += *g;
                        }
                    }
                }
            }
        }
    }
    out
}
