use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{backward_raw, forward_raw, Activation, ConvLayerParams};
use super::tensor::Tensor3;
use crate::{Error, Result};

/// Depth of the network: two ReLU layers and a linear output layer.
pub const NUM_LAYERS: usize = 3;

/// Layer widths and kernel sizes. `widths[2]` is the number of output bands.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub in_channels: usize,
    pub widths: Vec<usize>,
    pub kernels: Vec<usize>,
}

impl Arch {
    /// 48 and 32 hidden channels with 3x3 kernels throughout.
    pub fn standard(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            widths: vec![48, 32, out_channels],
            kernels: vec![3, 3, 3],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.widths.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != NUM_LAYERS || self.kernels.len() != NUM_LAYERS {
            return Err(Error::InvalidArchitecture(format!(
                "expected {NUM_LAYERS} layers, got {} widths and {} kernel sizes",
                self.widths.len(),
                self.kernels.len()
            )));
        }
        if self.in_channels == 0 || self.widths.contains(&0) {
            return Err(Error::InvalidArchitecture(
                "channel counts must be positive".into(),
            ));
        }
        if let Some(k) = self.kernels.iter().find(|k| *k % 2 == 0) {
            return Err(Error::InvalidArchitecture(format!(
                "kernel size {k} is not odd"
            )));
        }
        Ok(())
    }

    /// Largest kernel, i.e. the smallest sensible training patch.
    pub fn max_kernel(&self) -> usize {
        self.kernels.iter().copied().max().unwrap_or(1)
    }
}

/// What the model was trained on and how.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelMeta {
    pub swir_bands: Vec<String>,
    pub guide_bands: Vec<String>,
    pub ratio: usize,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<ConvLayerParams>,
    pub meta: ModelMeta,
}

pub(crate) fn activation_for_layer(layer: usize) -> Activation {
    if layer + 1 == NUM_LAYERS {
        Activation::Linear
    } else {
        Activation::Relu
    }
}

impl ModelParams {
    pub fn new(layers: Vec<ConvLayerParams>, meta: ModelMeta) -> Result<Self> {
        let params = Self { layers, meta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() != NUM_LAYERS {
            return Err(Error::InvalidArchitecture(format!(
                "expected {NUM_LAYERS} layers, got {}",
                self.layers.len()
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if layer.activation != activation_for_layer(i) {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {} must use {:?} activation",
                    i + 1,
                    activation_for_layer(i)
                )));
            }
            if i > 0 && layer.in_channels != self.layers[i - 1].out_channels {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {} takes {} channels but layer {} yields {}",
                    i + 1,
                    layer.in_channels,
                    i,
                    self.layers[i - 1].out_channels
                )));
            }
        }
        let bands = self.meta.swir_bands.len() + self.meta.guide_bands.len();
        if bands != 0 && bands != self.in_channels() {
            return Err(Error::InvalidArchitecture(format!(
                "{} named input bands for {} input channels",
                bands,
                self.in_channels()
            )));
        }
        if !self.meta.swir_bands.is_empty() && self.meta.swir_bands.len() != self.out_channels() {
            return Err(Error::InvalidArchitecture(format!(
                "{} SWIR bands for {} output channels",
                self.meta.swir_bands.len(),
                self.out_channels()
            )));
        }
        Ok(())
    }

    pub fn arch(&self) -> Arch {
        Arch {
            in_channels: self.in_channels(),
            widths: self.layers.iter().map(|l| l.out_channels).collect(),
            kernels: self.layers.iter().map(|l| l.kernel).collect(),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.layers[NUM_LAYERS - 1].out_channels
    }

    /// Fan-in scaled uniform initialisation: weights from
    /// `U(-sqrt(6 / (N K^2)), sqrt(6 / (N K^2)))`, biases zero. Deterministic
    /// for a given seed.
    pub fn init(arch: &Arch, meta: ModelMeta, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_c = arch.in_channels;
        let mut layers = Vec::with_capacity(NUM_LAYERS);
        for (i, (&m, &k)) in arch.widths.iter().zip(&arch.kernels).enumerate() {
            let bound = (6.0 / (in_c * k * k) as f64).sqrt();
            let kernels = (0..m * in_c * k * k)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            layers.push(ConvLayerParams {
                out_channels: m,
                in_channels: in_c,
                kernel: k,
                kernels,
                biases: vec![0.0; m],
                activation: activation_for_layer(i),
            });
            in_c = m;
        }
        Self::new(layers, meta)
    }

    /// Network that copies its first `out_channels` input channels to the
    /// output on non-negative inputs: centre-tap delta kernels, zero biases.
    pub fn delta_identity(arch: &Arch, meta: ModelMeta) -> Result<Self> {
        arch.validate()?;
        let out = arch.out_channels();
        if out > arch.in_channels || arch.widths.iter().any(|&w| w < out) {
            return Err(Error::InvalidArchitecture(format!(
                "identity needs every layer at least {out} channels wide"
            )));
        }
        let mut in_c = arch.in_channels;
        let mut layers = Vec::with_capacity(NUM_LAYERS);
        for (i, (&m, &k)) in arch.widths.iter().zip(&arch.kernels).enumerate() {
            let mut layer = ConvLayerParams::zeros(m, in_c, k, activation_for_layer(i));
            for c in 0..out {
                *layer.weight_mut(c, c, k / 2, k / 2) = 1.0;
            }
            layers.push(layer);
            in_c = m;
        }
        Self::new(layers, meta)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.kernels.len() + l.biases.len())
            .sum()
    }

    /// Kernel and bias buffers in canonical order (layer 1 kernels, layer 1
    /// biases, layer 2 kernels, ...).
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.kernels.as_slice(), l.biases.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.kernels.as_mut_slice(), l.biases.as_mut_slice()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub kernels: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Parameter gradients, shaped like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGradients {
                    kernels: vec![0.0; l.kernels.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.kernels.fill(0.0);
            l.biases.fill(0.0);
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.kernels.as_slice(), l.biases.as_slice()])
    }

    pub(crate) fn matches(&self, params: &ModelParams) -> bool {
        self.layers.len() == params.layers.len()
            && self.layers.iter().zip(&params.layers).all(|(g, p)| {
                g.kernels.len() == p.kernels.len() && g.biases.len() == p.biases.len()
            })
    }
}

/// Reusable buffers for repeated forward/backward passes over single images
/// or stacks of equally sized images.
#[derive(Debug, Default)]
pub struct ForwardCache {
    samples: usize,
    h: usize,
    w: usize,
    cols: [Vec<f64>; NUM_LAYERS],
    outs: [Vec<f64>; NUM_LAYERS],
    grad: Vec<f64>,
    grad_prev: Vec<f64>,
    dcols: Vec<f64>,
}

impl ForwardCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs the network on an HWC buffer and returns the HWC output. The
    /// caller guarantees `input.len() == h * w * params.in_channels()`.
    pub fn forward(&mut self, params: &ModelParams, input: &[f64], h: usize, w: usize) -> &[f64] {
        self.forward_batch(params, input, 1, h, w)
    }

    /// Runs the network on `samples` HWC images stored back to back and
    /// returns their outputs, also back to back.
    pub fn forward_batch(
        &mut self,
        params: &ModelParams,
        input: &[f64],
        samples: usize,
        h: usize,
        w: usize,
    ) -> &[f64] {
        debug_assert_eq!(input.len(), samples * h * w * params.in_channels());
        self.samples = samples;
        self.h = h;
        self.w = w;
        for (i, layer) in params.layers.iter().enumerate() {
            let (done, rest) = self.outs.split_at_mut(i);
            let src: &[f64] = if i == 0 { input } else { &done[i - 1] };
            forward_raw(layer, src, samples, h, w, &mut self.cols[i], &mut rest[0]);
        }
        &self.outs[NUM_LAYERS - 1]
    }

    pub fn output(&self) -> &[f64] {
        &self.outs[NUM_LAYERS - 1]
    }

    /// Back-propagates `loss_grad` (gradient w.r.t. the last forward output)
    /// and adds the parameter gradients into `grads`. For a stacked forward
    /// pass the per-sample contributions are summed.
    pub fn backward(&mut self, params: &ModelParams, loss_grad: &[f64], grads: &mut Gradients) {
        let (s, h, w) = (self.samples, self.h, self.w);
        self.grad.clear();
        self.grad.extend_from_slice(loss_grad);
        for i in (0..NUM_LAYERS).rev() {
            let layer = &params.layers[i];
            let g = &mut grads.layers[i];
            let dinput = if i > 0 {
                self.grad_prev.clear();
                self.grad_prev.resize(s * h * w * layer.in_channels, 0.0);
                Some((self.grad_prev.as_mut_slice(), &mut self.dcols))
            } else {
                None
            };
            backward_raw(
                layer,
                s,
                h,
                w,
                &self.cols[i],
                &self.outs[i],
                &mut self.grad,
                &mut g.kernels,
                &mut g.biases,
                dinput,
            );
            if i > 0 {
                std::mem::swap(&mut self.grad, &mut self.grad_prev);
            }
        }
    }
}

fn check_input(input: &Tensor3, params: &ModelParams) -> Result<()> {
    if input.channels() != params.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} input channels, got {}",
            params.in_channels(),
            input.channels()
        )));
    }
    Ok(())
}

/// Runs the three layers on `input`.
pub fn model_forward(input: &Tensor3, params: &ModelParams) -> Result<Tensor3> {
    params.validate()?;
    check_input(input, params)?;
    let mut cache = ForwardCache::new();
    let (h, w) = (input.height(), input.width());
    let out = cache.forward(params, input.data(), h, w).to_vec();
    Ok(Tensor3::from_raw(h, w, params.out_channels(), out))
}

/// Exact gradient of `<loss_grad, model_forward(input)>` with respect to every
/// kernel weight and bias.
pub fn model_backward(
    input: &Tensor3,
    params: &ModelParams,
    loss_grad: &Tensor3,
) -> Result<Gradients> {
    params.validate()?;
    check_input(input, params)?;
    let expected = (input.height(), input.width(), params.out_channels());
    if loss_grad.shape() != expected {
        return Err(Error::ShapeMismatch(format!(
            "loss gradient has shape {:?}, model output is {:?}",
            loss_grad.shape(),
            expected
        )));
    }
    let mut cache = ForwardCache::new();
    cache.forward(params, input.data(), input.height(), input.width());
    let mut grads = Gradients::zeros_like(params);
    cache.backward(params, loss_grad.data(), &mut grads);
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch(k: usize) -> Arch {
        Arch {
            in_channels: 2,
            widths: vec![3, 2, 1],
            kernels: vec![k; 3],
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = ModelParams::init(&Arch::standard(3, 2), ModelMeta::default(), 42).unwrap();
        let b = ModelParams::init(&Arch::standard(3, 2), ModelMeta::default(), 42).unwrap();
        assert_eq!(a, b);
        assert!(a.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        let c = ModelParams::init(&Arch::standard(3, 2), ModelMeta::default(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_weight_distribution() {
        // N = 2, K = 3 first layer, 10k weights
        let arch = Arch {
            in_channels: 2,
            widths: vec![556, 1, 1],
            kernels: vec![3, 1, 1],
        };
        let p = ModelParams::init(&arch, ModelMeta::default(), 1).unwrap();
        let w = &p.layers[0].kernels;
        assert!(w.len() >= 10_000);
        let bound = (6.0f64 / 18.0).sqrt();
        assert!(w.iter().all(|v| v.abs() <= bound));
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        // uniform(-b, b) has sd b / sqrt(3); standard error of the mean is sd / sqrt(n)
        let sigma = bound / 3f64.sqrt() / n.sqrt();
        assert!(
            mean.abs() < 3.0 * sigma,
            "mean {mean}, 3 sigma {}",
            3.0 * sigma
        );
    }

    #[test]
    fn rejects_wrong_depth() {
        let arch = Arch {
            in_channels: 1,
            widths: vec![2, 1],
            kernels: vec![3, 3],
        };
        assert!(ModelParams::init(&arch, ModelMeta::default(), 0).is_err());
        let mut p = ModelParams::init(&tiny_arch(3), ModelMeta::default(), 0).unwrap();
        p.layers.pop();
        assert!(p.validate().is_err());
    }

    #[test]
    fn delta_identity_passes_non_negative_input() {
        let p = ModelParams::delta_identity(&tiny_arch(3), ModelMeta::default()).unwrap();
        let input =
            Tensor3::new(4, 5, 2, (0..40).map(|i| (i as f64 * 0.37) % 1.0).collect()).unwrap();
        let out = model_forward(&input, &p).unwrap();
        assert_eq!(out.plane(0), input.plane(0));
    }

    #[test]
    fn constant_propagation_through_zero_kernels() {
        // zero kernels: layer outputs are relu(b1), relu(b2), b3 regardless of input
        let mut p = ModelParams::init(&tiny_arch(3), ModelMeta::default(), 3).unwrap();
        for (l, b) in p.layers.iter_mut().zip([0.4, 0.25, 0.1]) {
            l.kernels.fill(0.0);
            l.biases.fill(b);
        }
        // give layer 3 a non-zero kernel so it consumes the constant layer-2 output
        p.layers[2].kernels.fill(0.5);
        let input = Tensor3::new(3, 3, 2, vec![0.9; 18]).unwrap();
        let out = model_forward(&input, &p).unwrap();
        // centre pixel sees all 9 taps of both layer-2 channels: 0.1 + 9 * 2 * 0.5 * 0.25
        assert!((out.at(1, 1, 0) - 2.35).abs() < 1e-12);
        // corner sees 4 taps: 0.1 + 4 * 2 * 0.5 * 0.25
        assert!((out.at(0, 0, 0) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let p = ModelParams::init(&tiny_arch(3), ModelMeta::default(), 0).unwrap();
        assert!(model_forward(&Tensor3::zeros(3, 3, 1), &p).is_err());
    }

    #[test]
    fn scalar_chain_rule() {
        let arch = Arch {
            in_channels: 1,
            widths: vec![1, 1, 1],
            kernels: vec![1, 1, 1],
        };
        let mut p = ModelParams::delta_identity(&arch, ModelMeta::default()).unwrap();
        p.layers[2].kernels[0] = 1.5;
        p.layers[2].biases[0] = 0.25;
        let x = 0.8;
        let g = 2.0;
        let grads = model_backward(
            &Tensor3::new(1, 1, 1, vec![x]).unwrap(),
            &p,
            &Tensor3::new(1, 1, 1, vec![g]).unwrap(),
        )
        .unwrap();
        // last layer: y = w * h + b with h = x
        assert_eq!(grads.layers[2].kernels[0], g * x);
        assert_eq!(grads.layers[2].biases[0], g);
    }

    #[test]
    fn zero_loss_grad_gives_zero_gradients() {
        let p = ModelParams::init(&tiny_arch(3), ModelMeta::default(), 8).unwrap();
        let input = Tensor3::new(4, 4, 2, (0..32).map(|i| i as f64 / 32.0).collect()).unwrap();
        let grads = model_backward(&input, &p, &Tensor3::zeros(4, 4, 1)).unwrap();
        assert!(grads.tensors().all(|t| t.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn output_shape_follows_input() {
        let p = ModelParams::init(&tiny_arch(5), ModelMeta::default(), 2).unwrap();
        for (h, w) in [(1, 1), (3, 7), (9, 4)] {
            let out = model_forward(&Tensor3::zeros(h, w, 2), &p).unwrap();
            assert_eq!(out.shape(), (h, w, 1));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..4 {
            let arch = Arch {
                in_channels: rng.gen_range(1..=4),
                widths: vec![
                    rng.gen_range(1..=4),
                    rng.gen_range(1..=4),
                    rng.gen_range(1..=4),
                ],
                kernels: vec![3, [1, 3][rng.gen_range(0..2)], 3],
            };
            let mut p = ModelParams::init(&arch, ModelMeta::default(), rng.gen()).unwrap();
            for l in &mut p.layers {
                l.biases
                    .iter_mut()
                    .for_each(|b| *b = rng.gen_range(-0.1..0.1));
            }
            let x = Tensor3::new(
                8,
                8,
                arch.in_channels,
                (0..64 * arch.in_channels)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap();
            let c = Tensor3::new(
                8,
                8,
                arch.out_channels(),
                (0..64 * arch.out_channels())
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap();
            // L = <c, f(x)>, so dL/df = c
            let loss = |p: &ModelParams| -> f64 {
                model_forward(&x, p)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(c.data())
                    .map(|(a, b)| a * b)
                    .sum()
            };
            let g = model_backward(&x, &p, &c).unwrap();
            let analytic: Vec<f64> = g.tensors().flatten().copied().collect();
            for (i, &a) in analytic.iter().enumerate() {
                let h = 1e-5;
                let mut plus = p.clone();
                *plus.tensors_mut().flatten().nth(i).unwrap() += h;
                let mut minus = p.clone();
                *minus.tensors_mut().flatten().nth(i).unwrap() -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                if a.abs() > 1e-8 {
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
                    assert!(rel < 1e-4, "param {i}: analytic {a}, numeric {numeric}");
                }
            }
        }
    }
}
