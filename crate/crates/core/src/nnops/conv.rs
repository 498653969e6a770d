//! 2-D convolution (cross-correlation) and its adjoint, the transposed
//! convolution, lowered to matrix products through im2col / col2im.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{MatRef, Scalar};
use crate::tensor::Tensor;

/// Weights `[Cout, Cin, kh, kw]`, optional bias `[Cout]`, stride and
/// symmetric zero padding.
#[derive(Clone, Copy, Debug)]
pub struct ConvParams<'a, S = f64> {
    pub weights: &'a Tensor<S>,
    pub bias: Option<&'a Tensor<S>>,
    pub stride: usize,
    pub padding: usize,
}

/// Weights `[Cin, Cout, kh, kw]`, optional bias `[Cout]`, stride. No padding:
/// the output is `(Hin - 1) * stride + kh` high.
#[derive(Clone, Copy, Debug)]
pub struct DeconvParams<'a, S = f64> {
    pub weights: &'a Tensor<S>,
    pub bias: Option<&'a Tensor<S>>,
    pub stride: usize,
}

#[derive(Clone, Debug)]
pub struct ConvGrads<S = f64> {
    /// `None` when the caller asked to skip the input gradient.
    pub input: Option<Tensor<S>>,
    pub weights: Tensor<S>,
    pub bias: Tensor<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.ho * self.wo
    }

    /// im2col is the identity for unit kernels without stride or padding.
    fn trivial(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn out_len(len: usize, k: usize, stride: usize, pad: usize, axis: &str) -> Result<usize> {
    if stride == 0 {
        return Err(Error::shape("stride must be at least 1"));
    }
    let padded = len + 2 * pad;
    if padded < k {
        return Err(Error::shape(format!(
            "{axis}: kernel {k} larger than padded input {padded}"
        )));
    }
    if !(padded - k).is_multiple_of(stride) {
        return Err(Error::shape(format!(
            "{axis}: ({len} + 2*{pad} - {k}) is not divisible by stride {stride}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

fn weight_dims<S: Scalar>(weights: &Tensor<S>) -> Result<(usize, usize, usize, usize)> {
    weights
        .dims4()
        .map_err(|_| Error::shape(format!("kernel must be 4-D, got {:?}", weights.shape())))
}

fn check_bias<S: Scalar>(bias: Option<&Tensor<S>>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [channels] {
            return Err(Error::shape(format!(
                "bias shape {:?} does not match {channels} output channels",
                b.shape()
            )));
        }
    }
    Ok(())
}

fn im2col<S: Scalar>(x: &[S], g: &Geometry, cols: &mut [S]) {
    let p = g.col_cols();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(S::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            S::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add of im2col columns back onto an (already zeroed) image.
fn col2im<S: Scalar>(cols: &[S], g: &Geometry, x: &mut [S]) {
    let p = g.col_cols();
    for ci in 0..g.cin {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] = dst[ix as usize] + src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn add_bias<S: Scalar>(out: &mut Tensor<S>, bias: Option<&Tensor<S>>) {
    let Some(bias) = bias else { return };
    let (n, c, h, w) = out.dims4().expect("4-D output");
    let plane = h * w;
    let data = out.data_mut();
    for ni in 0..n {
        for (ci, &b) in bias.data().iter().enumerate().take(c) {
            let start = (ni * c + ci) * plane;
            data[start..start + plane].iter_mut().for_each(|v| *v = *v + b);
        }
    }
}

/// Per-channel sums over batch and space, summed in batch order.
pub(crate) fn channel_sums<S: Scalar>(t: &Tensor<S>) -> Result<Tensor<S>> {
    let (n, c, h, w) = t.dims4()?;
    let plane = h * w;
    let mut out = vec![S::zero(); c];
    for ni in 0..n {
        for (ci, o) in out.iter_mut().enumerate() {
            let start = (ni * c + ci) * plane;
            *o = *o + t.data()[start..start + plane].iter().copied().sum::<S>();
        }
    }
    Ok(Tensor::raw(vec![c], out))
}

fn conv_geometry<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize, Geometry)> {
    let (n, cin, h, w) = input.dims4()?;
    let (cout, wcin, kh, kw) = weight_dims(weights)?;
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv2d: input has {cin} channels but kernel expects {wcin}"
        )));
    }
    let ho = out_len(h, kh, stride, pad, "height")?;
    let wo = out_len(w, kw, stride, pad, "width")?;
    Ok((
        n,
        cout,
        Geometry {
            cin,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        },
    ))
}

/// Forward pass without bias handling, shared with the transposed
/// convolution's input gradient.
fn conv_forward_raw<S: Scalar>(input: &Tensor<S>, weights: &Tensor<S>, n: usize, cout: usize, g: &Geometry) -> Tensor<S> {
    let k = g.col_rows();
    let p = g.col_cols();
    let in_per = g.cin * g.h * g.w;
    let mut out = Tensor::zeros_raw(&[n, cout, g.ho, g.wo]);
    out.data_mut()
        .par_chunks_mut(cout * p)
        .zip(input.data().par_chunks(in_per))
        .for_each_init(
            || vec![S::zero(); if g.trivial() { 0 } else { k * p }],
            |cols, (dst, x)| {
                let src: &[S] = if g.trivial() {
                    x
                } else {
                    im2col(x, g, cols);
                    cols
                };
                S::gemm(
                    cout,
                    k,
                    p,
                    S::one(),
                    MatRef::rows(weights.data(), k),
                    MatRef::rows(src, p),
                    S::zero(),
                    dst,
                );
            },
        );
    out
}

/// Adjoint of [`conv_forward_raw`] with respect to its input.
fn conv_input_grad_raw<S: Scalar>(weights: &Tensor<S>, grad_out: &Tensor<S>, n: usize, cout: usize, g: &Geometry) -> Tensor<S> {
    let k = g.col_rows();
    let p = g.col_cols();
    let in_per = g.cin * g.h * g.w;
    let mut grad_in = Tensor::zeros_raw(&[n, g.cin, g.h, g.w]);
    grad_in
        .data_mut()
        .par_chunks_mut(in_per)
        .zip(grad_out.data().par_chunks(cout * p))
        .for_each_init(
            || vec![S::zero(); k * p],
            |cols, (dst, gy)| {
                let target: &mut [S] = if g.trivial() { dst } else { cols };
                S::gemm(
                    k,
                    cout,
                    p,
                    S::one(),
                    MatRef::transposed(weights.data(), k),
                    MatRef::rows(gy, p),
                    S::zero(),
                    target,
                );
                if !g.trivial() {
                    col2im(cols, g, dst);
                }
            },
        );
    grad_in
}

/// Gradient with respect to the kernel; per-sample partials are reduced in
/// batch order so the result does not depend on thread count.
fn conv_weight_grad_raw<S: Scalar>(input: &Tensor<S>, grad_out: &Tensor<S>, n: usize, cout: usize, g: &Geometry) -> Tensor<S> {
    let k = g.col_rows();
    let p = g.col_cols();
    let in_per = g.cin * g.h * g.w;
    let partials: Vec<Vec<S>> = (0..n)
        .into_par_iter()
        .map_init(
            || vec![S::zero(); if g.trivial() { 0 } else { k * p }],
            |cols, ni| {
                let x = &input.data()[ni * in_per..(ni + 1) * in_per];
                let gy = &grad_out.data()[ni * cout * p..(ni + 1) * cout * p];
                let src: &[S] = if g.trivial() {
                    x
                } else {
                    im2col(x, g, cols);
                    cols
                };
                let mut part = vec![S::zero(); cout * k];
                S::gemm(
                    cout,
                    p,
                    k,
                    S::one(),
                    MatRef::rows(gy, p),
                    MatRef::transposed(src, p),
                    S::zero(),
                    &mut part,
                );
                part
            },
        )
        .collect();
    let mut grad = vec![S::zero(); cout * k];
    for part in &partials {
        for (a, &b) in grad.iter_mut().zip(part) {
            *a = *a + b;
        }
    }
    Tensor::raw(vec![cout, g.cin, g.kh, g.kw], grad)
}

pub fn conv2d<S: Scalar>(input: &Tensor<S>, p: &ConvParams<'_, S>) -> Result<Tensor<S>> {
    let (n, cout, g) = conv_geometry(input, p.weights, p.stride, p.padding)?;
    check_bias(p.bias, cout)?;
    let mut out = conv_forward_raw(input, p.weights, n, cout, &g);
    add_bias(&mut out, p.bias);
    Ok(out)
}

pub fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    p: &ConvParams<'_, S>,
    grad_out: &Tensor<S>,
) -> Result<ConvGrads<S>> {
    conv2d_backward_with(input, p, grad_out, true)
}

/// As [`conv2d_backward`]; `want_input = false` skips the input gradient
/// (first layer of a network).
pub fn conv2d_backward_with<S: Scalar>(
    input: &Tensor<S>,
    p: &ConvParams<'_, S>,
    grad_out: &Tensor<S>,
    want_input: bool,
) -> Result<ConvGrads<S>> {
    let (n, cout, g) = conv_geometry(input, p.weights, p.stride, p.padding)?;
    check_bias(p.bias, cout)?;
    if grad_out.shape() != [n, cout, g.ho, g.wo] {
        return Err(Error::shape(format!(
            "conv2d_backward: grad_out {:?} does not match output {:?}",
            grad_out.shape(),
            [n, cout, g.ho, g.wo]
        )));
    }
    let input_grad = want_input.then(|| conv_input_grad_raw(p.weights, grad_out, n, cout, &g));
    Ok(ConvGrads {
        input: input_grad,
        weights: conv_weight_grad_raw(input, grad_out, n, cout, &g),
        bias: channel_sums(grad_out)?,
    })
}

/// Gradient of a bias-free convolution with respect to its input of spatial
/// size `in_h × in_w`. This is the transposed-convolution forward map.
pub fn conv2d_input_grad<S: Scalar>(
    weights: &Tensor<S>,
    grad_out: &Tensor<S>,
    in_h: usize,
    in_w: usize,
    stride: usize,
    padding: usize,
) -> Result<Tensor<S>> {
    let (cout, cin, kh, kw) = weight_dims(weights)?;
    let (n, gc, gh, gw) = grad_out.dims4()?;
    if gc != cout {
        return Err(Error::shape(format!(
            "grad_out has {gc} channels, kernel produces {cout}"
        )));
    }
    let ho = out_len(in_h, kh, stride, padding, "height")?;
    let wo = out_len(in_w, kw, stride, padding, "width")?;
    if (ho, wo) != (gh, gw) {
        return Err(Error::shape(format!(
            "grad_out spatial {gh}x{gw} does not match {ho}x{wo}"
        )));
    }
    let g = Geometry {
        cin,
        h: in_h,
        w: in_w,
        kh,
        kw,
        stride,
        pad: padding,
        ho,
        wo,
    };
    Ok(conv_input_grad_raw(weights, grad_out, n, cout, &g))
}

fn deconv_dims<S: Scalar>(input: &Tensor<S>, p: &DeconvParams<'_, S>) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, cin, h, w) = input.dims4()?;
    let (wcin, cout, kh, kw) = weight_dims(p.weights)?;
    if wcin != cin {
        return Err(Error::shape(format!(
            "transposed_conv2d: input has {cin} channels but kernel expects {wcin}"
        )));
    }
    if p.stride == 0 {
        return Err(Error::shape("stride must be at least 1"));
    }
    check_bias(p.bias, cout)?;
    Ok((n, cout, (h - 1) * p.stride + kh, (w - 1) * p.stride + kw, cin))
}

pub fn transposed_conv2d<S: Scalar>(input: &Tensor<S>, p: &DeconvParams<'_, S>) -> Result<Tensor<S>> {
    let (_, _, ho, wo, _) = deconv_dims(input, p)?;
    let mut out = conv2d_input_grad(p.weights, input, ho, wo, p.stride, 0)?;
    add_bias(&mut out, p.bias);
    Ok(out)
}

pub fn transposed_conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    p: &DeconvParams<'_, S>,
    grad_out: &Tensor<S>,
) -> Result<ConvGrads<S>> {
    let (n, cout, ho, wo, _) = deconv_dims(input, p)?;
    if grad_out.shape() != [n, cout, ho, wo] {
        return Err(Error::shape(format!(
            "transposed_conv2d_backward: grad_out {:?} does not match output {:?}",
            grad_out.shape(),
            [n, cout, ho, wo]
        )));
    }
    // The forward map is the input-adjoint of a convolution taking
    // grad_out-shaped tensors to input-shaped ones.
    let (_, conv_out, g) = conv_geometry(grad_out, p.weights, p.stride, 0).map_err(|_| {
        Error::shape("transposed_conv2d_backward: kernel/grad_out mismatch")
    })?;
    Ok(ConvGrads {
        input: Some(conv_forward_raw(grad_out, p.weights, n, conv_out, &g)),
        weights: conv_weight_grad_raw(grad_out, input, n, conv_out, &g),
        bias: channel_sums(grad_out)?,
    })
}
