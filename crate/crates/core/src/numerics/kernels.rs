//! Raw layer kernels on NCHW buffers. The tape in [`super::graph`] calls these
//! for both the forward pass and the vector-Jacobian products.

use super::{Real, TensorOf};
use crate::{Error, Result};

/// `c = a·b (+ c when accumulate)`. `a` is m×k and `b` is k×n, each optionally
/// stored transposed; all buffers are row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_transposed: bool,
    b: &[T],
    b_transposed: bool,
    c: &mut [T],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].fill(T::zero());
        }
        return;
    }
    // SAFETY: the asserts above guarantee every strided access stays inside the slices.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
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

/// Sliding-window geometry over one `c×h×w` image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn new(c: usize, h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Dimension("stride must be at least 1".into()));
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(Error::Dimension(format!(
                "kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Ok(Self { c, h, w, kh, kw, stride, pad, oh, ow })
    }

    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Input coordinate touched by output position `o` and kernel tap `k`.
    #[inline]
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    fn im2col<T: Real>(&self, image: &[T], cols: &mut [T]) {
        let plane = self.cols();
        for ch in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ch * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.oh {
                        let line = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        match self.src(oy, ky, self.h) {
                            None => line.fill(T::zero()),
                            Some(iy) => {
                                let src_row = &image[(ch * self.h + iy) * self.w..(ch * self.h + iy + 1) * self.w];
                                for (ox, v) in line.iter_mut().enumerate() {
                                    *v = self.src(ox, kx, self.w).map_or(T::zero(), |ix| src_row[ix]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds columns back onto the image (adjoint of `im2col`).
    fn col2im<T: Real>(&self, cols: &[T], image: &mut [T]) {
        let plane = self.cols();
        for ch in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ch * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * plane..(row + 1) * plane];
                    for oy in 0..self.oh {
                        let Some(iy) = self.src(oy, ky, self.h) else { continue };
                        let dst_row = &mut image[(ch * self.h + iy) * self.w..(ch * self.h + iy + 1) * self.w];
                        for ox in 0..self.ow {
                            if let Some(ix) = self.src(ox, kx, self.w) {
                                dst_row[ix] += src[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_window<T: Real>(input: &TensorOf<T>, kernel: &TensorOf<T>, bias: &TensorOf<T>, stride: usize, padding: usize) -> Result<Window> {
    let (_, c, h, w) = input.dims4()?;
    let (f, kc, kh, kw) = kernel.dims4()?;
    if kc != c {
        return Err(Error::Dimension(format!(
            "conv2d input {:?} has {c} channels but kernel {:?} expects {kc}",
            input.shape(),
            kernel.shape()
        )));
    }
    if bias.shape() != [f] {
        return Err(Error::Dimension(format!("bias {:?} does not match {f} filters", bias.shape())));
    }
    Window::new(c, h, w, kh, kw, stride, padding)
}

pub(crate) fn conv2d<T: Real>(input: &TensorOf<T>, kernel: &TensorOf<T>, bias: &TensorOf<T>, stride: usize, padding: usize) -> Result<TensorOf<T>> {
    let win = conv_window(input, kernel, bias, stride, padding)?;
    let (n, ..) = input.dims4()?;
    let f = kernel.shape()[0];
    let in_plane = win.c * win.h * win.w;
    let out_plane = f * win.cols();
    let mut out = vec![T::zero(); n * out_plane];
    let mut cols = if win.is_pointwise() { Vec::new() } else { vec![T::zero(); win.rows() * win.cols()] };
    for b in 0..n {
        let image = &input.data()[b * in_plane..(b + 1) * in_plane];
        let rhs: &[T] = if win.is_pointwise() {
            image
        } else {
            win.im2col(image, &mut cols);
            &cols
        };
        let dst = &mut out[b * out_plane..(b + 1) * out_plane];
        for (row, &bv) in dst.chunks_mut(win.cols()).zip(bias.data()) {
            row.fill(bv);
        }
        gemm(f, win.rows(), win.cols(), kernel.data(), false, rhs, false, dst, true);
    }
    TensorOf::new(&[n, f, win.oh, win.ow], out)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Vec<T>>,
    pub kernel: Vec<T>,
    pub bias: Vec<T>,
}

pub(crate) fn conv2d_backward<T: Real>(
    input: &TensorOf<T>,
    kernel: &TensorOf<T>,
    bias: &TensorOf<T>,
    stride: usize,
    padding: usize,
    grad_out: &[T],
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let win = conv_window(input, kernel, bias, stride, padding)?;
    let (n, ..) = input.dims4()?;
    let f = kernel.shape()[0];
    let in_plane = win.c * win.h * win.w;
    let out_plane = f * win.cols();
    let mut d_kernel = vec![T::zero(); kernel.len()];
    let mut d_bias = vec![T::zero(); f];
    let mut d_input = need_input.then(|| vec![T::zero(); input.len()]);
    let mut cols = vec![T::zero(); if win.is_pointwise() { 0 } else { win.rows() * win.cols() }];
    let mut d_cols = vec![T::zero(); if need_input && !win.is_pointwise() { win.rows() * win.cols() } else { 0 }];
    for b in 0..n {
        let image = &input.data()[b * in_plane..(b + 1) * in_plane];
        let g = &grad_out[b * out_plane..(b + 1) * out_plane];
        for (db, row) in d_bias.iter_mut().zip(g.chunks(win.cols())) {
            *db += row.iter().copied().sum::<T>();
        }
        let rhs: &[T] = if win.is_pointwise() {
            image
        } else {
            win.im2col(image, &mut cols);
            &cols
        };
        gemm(f, win.cols(), win.rows(), g, false, rhs, true, &mut d_kernel, true);
        if let Some(dx) = d_input.as_mut() {
            let dx = &mut dx[b * in_plane..(b + 1) * in_plane];
            if win.is_pointwise() {
                gemm(win.rows(), f, win.cols(), kernel.data(), true, g, false, dx, true);
            } else {
                gemm(win.rows(), f, win.cols(), kernel.data(), true, g, false, &mut d_cols, false);
                win.col2im(&d_cols, dx);
            }
        }
    }
    Ok(ConvGrads { input: d_input, kernel: d_kernel, bias: d_bias })
}

/// Geometry of a transposed convolution expressed as the forward convolution
/// it is the adjoint of: that convolution reads the `cout×oh×ow` output image.
fn transpose_window<T: Real>(input: &TensorOf<T>, kernel: &TensorOf<T>, bias: &TensorOf<T>, stride: usize, padding: usize) -> Result<Window> {
    let (_, c, h, w) = input.dims4()?;
    let (kc, cout, kh, kw) = kernel.dims4()?;
    if kc != c {
        return Err(Error::Dimension(format!(
            "conv_transpose2d input {:?} has {c} channels but kernel {:?} expects {kc}",
            input.shape(),
            kernel.shape()
        )));
    }
    if bias.shape() != [cout] {
        return Err(Error::Dimension(format!("bias {:?} does not match {cout} output channels", bias.shape())));
    }
    if stride == 0 {
        return Err(Error::Dimension("stride must be at least 1".into()));
    }
    let oh = ((h - 1) * stride + kh).checked_sub(2 * padding).filter(|&v| v > 0);
    let ow = ((w - 1) * stride + kw).checked_sub(2 * padding).filter(|&v| v > 0);
    let (Some(oh), Some(ow)) = (oh, ow) else {
        return Err(Error::Dimension(format!("padding {padding} leaves no output for kernel {kh}x{kw}")));
    };
    let win = Window::new(cout, oh, ow, kh, kw, stride, padding)?;
    debug_assert_eq!((win.oh, win.ow), (h, w));
    Ok(win)
}

pub(crate) fn conv_transpose2d<T: Real>(
    input: &TensorOf<T>,
    kernel: &TensorOf<T>,
    bias: &TensorOf<T>,
    stride: usize,
    padding: usize,
) -> Result<TensorOf<T>> {
    let win = transpose_window(input, kernel, bias, stride, padding)?;
    let (n, cin, h, w) = input.dims4()?;
    let cout = win.c;
    let in_plane = cin * h * w;
    let out_plane = cout * win.h * win.w;
    let mut out = vec![T::zero(); n * out_plane];
    let mut cols = vec![T::zero(); win.rows() * win.cols()];
    for b in 0..n {
        let x = &input.data()[b * in_plane..(b + 1) * in_plane];
        gemm(win.rows(), cin, win.cols(), kernel.data(), true, x, false, &mut cols, false);
        let dst = &mut out[b * out_plane..(b + 1) * out_plane];
        for (plane, &bv) in dst.chunks_mut(win.h * win.w).zip(bias.data()) {
            plane.fill(bv);
        }
        win.col2im(&cols, dst);
    }
    TensorOf::new(&[n, cout, win.h, win.w], out)
}

pub(crate) fn conv_transpose2d_backward<T: Real>(
    input: &TensorOf<T>,
    kernel: &TensorOf<T>,
    bias: &TensorOf<T>,
    stride: usize,
    padding: usize,
    grad_out: &[T],
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let win = transpose_window(input, kernel, bias, stride, padding)?;
    let (n, cin, h, w) = input.dims4()?;
    let cout = win.c;
    let in_plane = cin * h * w;
    let out_plane = cout * win.h * win.w;
    let mut d_kernel = vec![T::zero(); kernel.len()];
    let mut d_bias = vec![T::zero(); cout];
    let mut d_input = need_input.then(|| vec![T::zero(); input.len()]);
    let mut cols = vec![T::zero(); win.rows() * win.cols()];
    for b in 0..n {
        let g = &grad_out[b * out_plane..(b + 1) * out_plane];
        for (db, plane) in d_bias.iter_mut().zip(g.chunks(win.h * win.w)) {
            *db += plane.iter().copied().sum::<T>();
        }
        win.im2col(g, &mut cols);
        let x = &input.data()[b * in_plane..(b + 1) * in_plane];
        gemm(cin, win.cols(), win.rows(), x, false, &cols, true, &mut d_kernel, true);
        if let Some(dx) = d_input.as_mut() {
            let dx = &mut dx[b * in_plane..(b + 1) * in_plane];
            gemm(cin, win.rows(), win.cols(), kernel.data(), false, &cols, false, dx, true);
        }
    }
    Ok(ConvGrads { input: d_input, kernel: d_kernel, bias: d_bias })
}

/// Max pooling; returns the pooled tensor and, per output element, the flat
/// input index that produced it. Ties resolve to the first position in
/// row-major window order.
pub(crate) fn maxpool2d<T: Real>(input: &TensorOf<T>, window: usize, stride: usize) -> Result<(TensorOf<T>, Vec<usize>)> {
    let (n, c, h, w) = input.dims4()?;
    if window == 0 || stride == 0 {
        return Err(Error::Dimension("pool window and stride must be at least 1".into()));
    }
    if window > h || window > w {
        return Err(Error::Dimension(format!("pool window {window} exceeds input extent {h}x{w}")));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let data = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for dy in 0..window {
                    for dx in 0..window {
                        let idx = base + (oy * stride + dy) * w + ox * stride + dx;
                        if data[idx] > data[best] || data[idx].is_nan() {
                            best = idx;
                        }
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((TensorOf::new(&[n, c, oh, ow], out)?, argmax))
}

/// Splits `shape` around `axis` into `(outer, axis extent, inner)`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::Dimension(format!("axis {axis} out of range for shape {shape:?}")));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Numerically stable softmax along `axis` (max subtracted before `exp`).
pub(crate) fn softmax<T: Real>(input: &TensorOf<T>, axis: usize) -> Result<TensorOf<T>> {
    let (outer, dim, inner) = axis_split(input.shape(), axis)?;
    let x = input.data();
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * dim + k) * inner + i;
            let max = (0..dim).map(|k| x[at(k)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for k in 0..dim {
                let e = (x[at(k)] - max).exp();
                out[at(k)] = e;
                total += e;
            }
            for k in 0..dim {
                out[at(k)] /= total;
            }
        }
    }
    TensorOf::new(input.shape(), out)
}
