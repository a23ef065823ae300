//! Convolution kernels (im2col + GEMM), forward and backward.
//!
//! All loops run per sample in a fixed order, so a sample's result does not
//! depend on which other samples share its batch.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Geometry of one sliding-window pass over a `[c, h, w]` image.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Window {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Window {
    pub fn new(
        c: usize,
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::dim("stride must be at least 1"));
        }
        if kh == 0 || kw == 0 || kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(Error::dim(format!(
                "kernel {kh}x{kw} does not fit a {h}x{w} input with padding {pad}"
            )));
        }
        Ok(Self {
            c,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (w + 2 * pad - kw) / stride + 1,
        })
    }

    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfolds one image into a `[c·kh·kw, oh·ow]` column matrix (zero padding).
pub(crate) fn im2col<T: Scalar>(img: &[T], g: &Window, col: &mut [T]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * cols;
                let dst = &mut col[row..row + cols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                    let out = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        out.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.stride + j) as isize - g.pad as isize;
                        *o = if ix < 0 || ix >= g.w as isize {
                            T::ZERO
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds a column matrix back into an image.
pub(crate) fn col2im<T: Scalar>(col: &[T], g: &Window, img: &mut [T]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * cols;
                let src = &col[row..row + cols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + j) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `c = a(m×k) · b(k×n)` with all operands contiguous row-major, optionally
/// transposing either input, accumulating into `c` when `accumulate` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_trans: bool,
    b: &[T],
    b_trans: bool,
    c: &mut [T],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::ONE } else { T::ZERO };
    // SAFETY: slice lengths are checked above and the strides describe
    // exactly those row-major layouts.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::ONE,
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

fn conv_window<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> Result<(usize, usize, Window)> {
    let [n, cin, h, wd] = x.dims4()?;
    let [cout, wcin, kh, kw] = w.dims4()?;
    if cin != wcin {
        return Err(Error::dim(format!(
            "conv2d: input has {cin} channels but kernel expects {wcin}"
        )));
    }
    Ok((n, cout, Window::new(cin, h, wd, kh, kw, stride, pad)?))
}

/// Cross-correlation of `[N, Cin, H, W]` with `[Cout, Cin, kh, kw]`, zero padded.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let (n, cout, g) = conv_window(x, w, stride, pad)?;
    let (rows, cols) = (g.rows(), g.cols());
    let mut out = vec![T::ZERO; n * cout * cols];
    let mut col = vec![T::ZERO; rows * cols];
    let in_sz = g.c * g.h * g.w;
    for s in 0..n {
        im2col(&x.data()[s * in_sz..(s + 1) * in_sz], &g, &mut col);
        matmul(
            cout,
            rows,
            cols,
            w.data(),
            false,
            &col,
            false,
            &mut out[s * cout * cols..(s + 1) * cout * cols],
            false,
        );
    }
    Ok(Tensor::from_parts(vec![n, cout, g.oh, g.ow], out))
}

/// Gradients of [`conv2d`] w.r.t. input (if `want_dx`) and kernel.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
    dy: &Tensor<T>,
    want_dx: bool,
    want_dw: bool,
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    let (n, cout, g) = conv_window(x, w, stride, pad)?;
    let (rows, cols) = (g.rows(), g.cols());
    let in_sz = g.c * g.h * g.w;
    let mut col = vec![T::ZERO; rows * cols];
    let mut dx = want_dx.then(|| vec![T::ZERO; x.len()]);
    let mut dw = want_dw.then(|| vec![T::ZERO; w.len()]);
    for s in 0..n {
        let dys = &dy.data()[s * cout * cols..(s + 1) * cout * cols];
        if let Some(dw) = dw.as_mut() {
            im2col(&x.data()[s * in_sz..(s + 1) * in_sz], &g, &mut col);
            matmul(cout, cols, rows, dys, false, &col, true, dw, true);
        }
        if let Some(dx) = dx.as_mut() {
            matmul(rows, cout, cols, w.data(), true, dys, false, &mut col, false);
            col2im(&col, &g, &mut dx[s * in_sz..(s + 1) * in_sz]);
        }
    }
    Ok((
        dx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
        dw.map(|d| Tensor::from_parts(w.shape().to_vec(), d)),
    ))
}

fn convt_window<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize) -> Result<(usize, usize, Window)> {
    let [n, cin, h, wd] = x.dims4()?;
    let [wcin, cout, kh, kw] = w.dims4()?;
    if cin != wcin {
        return Err(Error::dim(format!(
            "conv_transpose2d: input has {cin} channels but kernel expects {wcin}"
        )));
    }
    if stride == 0 {
        return Err(Error::dim("stride must be at least 1"));
    }
    let oh = (h - 1) * stride + kh;
    let ow = (wd - 1) * stride + kw;
    // The window runs over the *output* image; its positions are the input pixels.
    let g = Window::new(cout, oh, ow, kh, kw, stride, 0)?;
    debug_assert_eq!((g.oh, g.ow), (h, wd));
    Ok((n, cin, g))
}

/// Transposed convolution: `[N, Cin, H, W]` with kernel `[Cin, Cout, kh, kw]`
/// to `[N, Cout, (H-1)·stride+kh, (W-1)·stride+kw]`. Adjoint of [`conv2d`].
pub fn conv_transpose2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    let (n, cin, g) = convt_window(x, w, stride)?;
    let (rows, cols) = (g.rows(), g.cols());
    let out_sz = g.c * g.h * g.w;
    let mut out = vec![T::ZERO; n * out_sz];
    let mut col = vec![T::ZERO; rows * cols];
    for s in 0..n {
        let xs = &x.data()[s * cin * cols..(s + 1) * cin * cols];
        matmul(rows, cin, cols, w.data(), true, xs, false, &mut col, false);
        col2im(&col, &g, &mut out[s * out_sz..(s + 1) * out_sz]);
    }
    Ok(Tensor::from_parts(vec![n, g.c, g.h, g.w], out))
}

pub fn conv_transpose2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    dy: &Tensor<T>,
    want_dx: bool,
    want_dw: bool,
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    let (n, cin, g) = convt_window(x, w, stride)?;
    let (rows, cols) = (g.rows(), g.cols());
    let out_sz = g.c * g.h * g.w;
    let mut col = vec![T::ZERO; rows * cols];
    let mut dx = want_dx.then(|| vec![T::ZERO; x.len()]);
    let mut dw = want_dw.then(|| vec![T::ZERO; w.len()]);
    for s in 0..n {
        im2col(&dy.data()[s * out_sz..(s + 1) * out_sz], &g, &mut col);
        let range = s * cin * cols..(s + 1) * cin * cols;
        if let Some(dx) = dx.as_mut() {
            matmul(cin, rows, cols, w.data(), false, &col, false, &mut dx[range.clone()], false);
        }
        if let Some(dw) = dw.as_mut() {
            matmul(cin, cols, rows, &x.data()[range], false, &col, true, dw, true);
        }
    }
    Ok((
        dx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
        dw.map(|d| Tensor::from_parts(w.shape().to_vec(), d)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = Tensor::<f64>::full([1, 1, 3, 3], 1.0);
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let k = Tensor::new([1, 1, 3, 3], k).unwrap();
        assert_eq!(conv2d(&x, &k, 1, 1).unwrap(), x);
    }

    #[test]
    fn all_ones_kernel_sums_window() {
        let x = Tensor::<f64>::full([1, 1, 3, 3], 1.0);
        let k = Tensor::<f64>::full([1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.item(), 9.0);
    }

    #[test]
    fn output_size_formula() {
        let x = Tensor::<f32>::zeros([2, 3, 24, 64]);
        let k = Tensor::<f32>::zeros([5, 3, 3, 3]);
        assert_eq!(conv2d(&x, &k, 2, 1).unwrap().shape(), &[2, 5, 12, 32]);
        assert_eq!(conv2d(&x, &k, 1, 0).unwrap().shape(), &[2, 5, 22, 62]);
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let x = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let k = Tensor::<f32>::zeros([1, 3, 3, 3]);
        assert!(matches!(conv2d(&x, &k, 1, 1), Err(Error::Dimension(_))));
        let kt = Tensor::<f32>::zeros([3, 1, 2, 2]);
        assert!(matches!(
            conv_transpose2d(&x, &kt, 2),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn oversized_kernel_rejected() {
        let x = Tensor::<f32>::zeros([1, 1, 2, 2]);
        let k = Tensor::<f32>::zeros([1, 1, 5, 5]);
        assert!(conv2d(&x, &k, 1, 1).is_err());
        assert!(conv2d(&x, &Tensor::zeros([1, 1, 1, 1]), 0, 0).is_err());
    }

    #[test]
    fn transpose_tiles_disjointly_at_stride_two() {
        let x = Tensor::<f64>::full([1, 1, 2, 2], 1.0);
        let k = Tensor::<f64>::full([1, 1, 2, 2], 1.0);
        let y = conv_transpose2d(&x, &k, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 4]);
        assert!(y.data().iter().all(|&v| v == 1.0));
    }
}
