use serde::{Deserialize, Serialize};

use super::tensor::Tensor3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// One same-padded convolution layer.
///
/// `kernels` has extents `(out_channels, kernel, kernel, in_channels)` in
/// row-major order. The layer computes a cross-correlation (the kernel is
/// not flipped) with zero padding of `(kernel - 1) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub kernels: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl ConvLayerParams {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        kernels: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        let layer = Self {
            out_channels,
            in_channels,
            kernel,
            kernels,
            biases,
            activation,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn zeros(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        activation: Activation,
    ) -> Self {
        Self {
            out_channels,
            in_channels,
            kernel,
            kernels: vec![0.0; out_channels * in_channels * kernel * kernel],
            biases: vec![0.0; out_channels],
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_channels == 0 || self.in_channels == 0 {
            return Err(Error::InvalidArchitecture(
                "channel counts must be positive".into(),
            ));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::InvalidArchitecture(format!(
                "kernel size must be odd, got {}",
                self.kernel
            )));
        }
        if self.kernels.len() != self.weights_per_filter() * self.out_channels {
            return Err(Error::InvalidArchitecture(format!(
                "{} kernel weights for a {}x{}x{}x{} layer",
                self.kernels.len(),
                self.out_channels,
                self.in_channels,
                self.kernel,
                self.kernel
            )));
        }
        if self.biases.len() != self.out_channels {
            return Err(Error::InvalidArchitecture(format!(
                "{} biases for {} output channels",
                self.biases.len(),
                self.out_channels
            )));
        }
        if self
            .kernels
            .iter()
            .chain(&self.biases)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidValue(
                "layer holds a non-finite weight".into(),
            ));
        }
        Ok(())
    }

    /// N * K * K, the length of one im2col row.
    #[inline]
    pub(crate) fn weights_per_filter(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    #[inline]
    pub fn weight(&self, out_c: usize, in_c: usize, ky: usize, kx: usize) -> f64 {
        let k = self.kernel;
        self.kernels[((out_c * k + ky) * k + kx) * self.in_channels + in_c]
    }

    #[inline]
    pub fn weight_mut(&mut self, out_c: usize, in_c: usize, ky: usize, kx: usize) -> &mut f64 {
        let k = self.kernel;
        &mut self.kernels[((out_c * k + ky) * k + kx) * self.in_channels + in_c]
    }
}

/// Expands a stack of HWC images into a `(samples*h*w) x (K*K*N)` patch
/// matrix whose columns are ordered `(ky, kx, channel)`, matching the kernel
/// storage order.
pub(crate) fn im2col(
    input: &[f64],
    samples: usize,
    h: usize,
    w: usize,
    n: usize,
    k: usize,
    cols: &mut Vec<f64>,
) {
    let row_len = n * k * k;
    cols.resize(samples * h * w * row_len, 0.0);
    let half = k / 2;
    for (img, out) in input
        .chunks_exact(h * w * n)
        .zip(cols.chunks_exact_mut(h * w * row_len))
    {
        for (r, row) in out.chunks_exact_mut(row_len).enumerate() {
            let (y, x) = (r / w, r % w);
            for (tap, dst) in row.chunks_exact_mut(n).enumerate() {
                let sy = (y + tap / k).wrapping_sub(half);
                let sx = (x + tap % k).wrapping_sub(half);
                if sy < h && sx < w {
                    dst.copy_from_slice(&img[(sy * w + sx) * n..][..n]);
                } else {
                    dst.fill(0.0);
                }
            }
        }
    }
}

/// Scatter-adds a patch-matrix gradient back onto a stack of HWC image gradients.
fn col2im(dcols: &[f64], h: usize, w: usize, n: usize, k: usize, dinput: &mut [f64]) {
    let row_len = n * k * k;
    let half = k / 2;
    dinput.fill(0.0);
    for (d, img) in dcols
        .chunks_exact(h * w * row_len)
        .zip(dinput.chunks_exact_mut(h * w * n))
    {
        for (r, row) in d.chunks_exact(row_len).enumerate() {
            let (y, x) = (r / w, r % w);
            for (tap, src) in row.chunks_exact(n).enumerate() {
                let sy = (y + tap / k).wrapping_sub(half);
                let sx = (x + tap % k).wrapping_sub(half);
                if sy < h && sx < w {
                    for (o, v) in img[(sy * w + sx) * n..][..n].iter_mut().zip(src) {
                        *o += v;
                    }
                }
            }
        }
    }
}

/// `c = alpha * a * b + beta * c` over strided row-major views.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert!(m == 0 || n == 0 || c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the debug assertions above spell out the bounds every caller
    // satisfies: each strided view lies inside its slice, and `c` is a
    // unique borrow that does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Forward pass of one layer over a stack of `samples` HWC images. `cols`
/// receives the patch matrix (kept for the backward pass) and `out` the
/// activated output.
pub(crate) fn forward_raw(
    layer: &ConvLayerParams,
    input: &[f64],
    samples: usize,
    h: usize,
    w: usize,
    cols: &mut Vec<f64>,
    out: &mut Vec<f64>,
) {
    let p = samples * h * w;
    let m = layer.out_channels;
    let nkk = layer.weights_per_filter();
    im2col(input, samples, h, w, layer.in_channels, layer.kernel, cols);
    out.clear();
    out.resize(p * m, 0.0);
    // out (P x M) = cols (P x NKK) * W^T, W stored M x NKK
    gemm(
        p,
        nkk,
        m,
        cols,
        (nkk, 1),
        &layer.kernels,
        (1, nkk),
        0.0,
        out,
        (m, 1),
    );
    for px in out.chunks_exact_mut(m) {
        for (v, b) in px.iter_mut().zip(&layer.biases) {
            *v += b;
        }
        if layer.activation == Activation::Relu {
            for v in px.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }
}

/// Backward pass of one layer.
///
/// `dout` holds the gradient with respect to the activated output and is
/// overwritten with the gradient with respect to the pre-activation.
/// Kernel and bias gradients are accumulated into `dkernels` / `dbiases`.
/// When `dinput` is given it receives the gradient with respect to the input.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_raw(
    layer: &ConvLayerParams,
    samples: usize,
    h: usize,
    w: usize,
    cols: &[f64],
    out: &[f64],
    dout: &mut [f64],
    dkernels: &mut [f64],
    dbiases: &mut [f64],
    dinput: Option<(&mut [f64], &mut Vec<f64>)>,
) {
    let p = samples * h * w;
    let m = layer.out_channels;
    let nkk = layer.weights_per_filter();
    if layer.activation == Activation::Relu {
        // out > 0 exactly where the pre-activation is > 0
        for (d, &o) in dout.iter_mut().zip(out) {
            if o <= 0.0 {
                *d = 0.0;
            }
        }
    }
    for px in dout.chunks_exact(m) {
        for (db, d) in dbiases.iter_mut().zip(px) {
            *db += d;
        }
    }
    // dW^T (NKK x M) += cols^T (NKK x P) * dz (P x M)
    gemm(
        nkk,
        p,
        m,
        cols,
        (1, nkk),
        dout,
        (m, 1),
        1.0,
        dkernels,
        (1, nkk),
    );
    if let Some((dinput, dcols)) = dinput {
        dcols.clear();
        dcols.resize(p * nkk, 0.0);
        // dcols (P x NKK) = dz (P x M) * W (M x NKK)
        gemm(
            p,
            m,
            nkk,
            dout,
            (m, 1),
            &layer.kernels,
            (nkk, 1),
            0.0,
            dcols,
            (nkk, 1),
        );
        col2im(dcols, h, w, layer.in_channels, layer.kernel, dinput);
    }
}

/// Applies one layer to a tensor.
pub fn conv_forward(input: &Tensor3, layer: &ConvLayerParams) -> Result<Tensor3> {
    layer.validate()?;
    if input.channels() != layer.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "layer expects {} input channels, got {}",
            layer.in_channels,
            input.channels()
        )));
    }
    let (h, w) = (input.height(), input.width());
    let mut cols = Vec::new();
    let mut out = Vec::new();
    forward_raw(layer, input.data(), 1, h, w, &mut cols, &mut out);
    Ok(Tensor3::from_raw(h, w, layer.out_channels, out))
}
