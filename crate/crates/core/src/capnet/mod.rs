//! Capacity map producers: hand-crafted intensity/edge features and a small
//! trainable encoder-decoder with skip connections, built from scratch with
//! manual backpropagation.
//!
//! The network takes a standardized multi-channel image through paired
//! stride-2/stride-1 3×3 convolutions (three blocks by default), mirrors back
//! up with 5×5 stride-2 transposed convolutions, concatenates same-resolution
//! encoder features before each up-block convolution, and ends in a 3×3 head
//! producing `out_maps` raw maps. Raw maps pass through softplus to become
//! strictly positive capacities, grouped in triples (C_s, C_t, C_g) per
//! segmentation region.

mod conv;

pub use conv::{ConvSpec, Tensor3};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GridDomain, ScalarField};
use crate::losses::CapacityGradients;
use crate::solver::CapacityMaps;

/// A stack of co-registered image channels (T1, T2, Flair, T1c order for the
/// default four).
#[derive(Clone, Debug, PartialEq)]
pub struct MultiChannelImage {
    channels: Vec<ScalarField>,
    standardized: bool,
}

impl MultiChannelImage {
    pub fn new(channels: Vec<ScalarField>) -> Self {
        assert!(!channels.is_empty(), "image needs at least one channel");
        let d = channels[0].domain();
        assert!(
            channels.iter().all(|c| c.domain() == d),
            "channels must share a domain"
        );
        Self {
            channels,
            standardized: false,
        }
    }

    pub fn domain(&self) -> GridDomain {
        self.channels[0].domain()
    }

    pub fn channels(&self) -> &[ScalarField] {
        &self.channels
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn to_tensor(&self) -> Tensor3 {
        let d = self.domain();
        let mut t = Tensor3::zeros(self.channels.len(), d.height(), d.width());
        let plane = d.len();
        for (c, ch) in self.channels.iter().enumerate() {
            t.data[c * plane..(c + 1) * plane].copy_from_slice(ch.values());
        }
        t
    }
}

/// Per-channel z-score over the whole image. Errors on a zero-variance
/// channel.
pub fn standardize(image: &MultiChannelImage) -> Result<MultiChannelImage> {
    let mut out = Vec::with_capacity(image.channels.len());
    for (idx, ch) in image.channels.iter().enumerate() {
        let mean = ch.mean();
        let var = ch.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / ch.values().len() as f64;
        let std = var.sqrt();
        if std <= 1e-12 * mean.abs().max(1.0) {
            return Err(Error::ZeroVariance(idx));
        }
        out.push(ch.map(|v| (v - mean) / std));
    }
    Ok(MultiChannelImage {
        channels: out,
        standardized: true,
    })
}

/// Parameters of the hand-crafted capacity features: squared distance to the
/// background/foreground reference intensities for C_s/C_t, and a Sobel-edge
/// attenuation `γ / (1 + η·|Sobel|)` for C_g.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandcraftedParams {
    pub fg_mean: f64,
    pub bg_mean: f64,
    /// γ, the edge capacity scale.
    pub edge_scale: f64,
    /// η, the Sobel response sharpness.
    pub edge_sharpness: f64,
    pub channel_index: usize,
}

impl Default for HandcraftedParams {
    fn default() -> Self {
        Self {
            fg_mean: 1.0,
            bg_mean: 0.0,
            edge_scale: 1.0,
            edge_sharpness: 1.0,
            channel_index: 0,
        }
    }
}

/// Sobel gradient magnitude with replicated borders.
pub fn sobel_magnitude(image: &ScalarField) -> ScalarField {
    let d = image.domain();
    let (h, w) = (d.height(), d.width());
    let sample = |r: isize, c: isize| {
        let rr = r.clamp(0, h as isize - 1) as usize;
        let cc = c.clamp(0, w as isize - 1) as usize;
        image.at(rr, cc)
    };
    ScalarField::from_fn(d, |row, col| {
        let (r, c) = (row as isize, col as isize);
        let gx = -sample(r - 1, c - 1) + sample(r - 1, c + 1) - 2.0 * sample(r, c - 1)
            + 2.0 * sample(r, c + 1)
            - sample(r + 1, c - 1)
            + sample(r + 1, c + 1);
        let gy = -sample(r - 1, c - 1) - 2.0 * sample(r - 1, c) - sample(r - 1, c + 1)
            + sample(r + 1, c - 1)
            + 2.0 * sample(r + 1, c)
            + sample(r + 1, c + 1);
        (gx * gx + gy * gy).sqrt()
    })
}

/// Hand-crafted capacities from one reference channel: intensity thresholding
/// for the source/sink terms and Sobel edges for the spatial term.
pub fn handcrafted_caps(
    image: &MultiChannelImage,
    params: &HandcraftedParams,
) -> Result<CapacityMaps> {
    if params.channel_index >= image.channels.len() {
        return Err(Error::Config(format!(
            "channel index {} out of range ({} channels)",
            params.channel_index,
            image.channels.len()
        )));
    }
    if !(params.edge_scale > 0.0) || params.edge_sharpness < 0.0 {
        return Err(Error::Config(
            "handcrafted features need edge_scale > 0 and edge_sharpness >= 0".into(),
        ));
    }
    let reference = &image.channels[params.channel_index];
    let c_source = reference.map(|v| (v - params.bg_mean) * (v - params.bg_mean));
    let c_sink = reference.map(|v| (v - params.fg_mean) * (v - params.fg_mean));
    let sobel = sobel_magnitude(reference);
    let c_edge = sobel.map(|s| params.edge_scale / (1.0 + params.edge_sharpness * s));
    CapacityMaps::new(c_source, c_sink, c_edge)
}

/// Network topology. `down_widths` holds the output widths of the paired
/// stride-2 / stride-1 convolutions per block (two entries per block).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub in_channels: usize,
    pub down_widths: Vec<usize>,
    pub out_maps: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            in_channels: 4,
            down_widths: vec![8, 16, 16, 32, 32, 64],
            out_maps: 9,
            dropout_rate: 0.3,
            seed: 42,
        }
    }
}

impl NetConfig {
    pub fn blocks(&self) -> usize {
        self.down_widths.len() / 2
    }

    /// Spatial divisibility required by the down-sampling path.
    pub fn size_factor(&self) -> usize {
        1 << self.blocks()
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::BadNetConfig("in_channels must be >= 1".into()));
        }
        if self.down_widths.is_empty() || self.down_widths.len() % 2 != 0 {
            return Err(Error::BadNetConfig(
                "down_widths needs a nonzero even number of entries".into(),
            ));
        }
        if self.down_widths.iter().any(|&w| w == 0) {
            return Err(Error::BadNetConfig("widths must be >= 1".into()));
        }
        if self.out_maps == 0 || self.out_maps % 3 != 0 {
            return Err(Error::BadNetConfig(
                "out_maps must be a positive multiple of 3".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::BadNetConfig("dropout_rate must be in [0,1)".into()));
        }
        Ok(())
    }
}

/// Momentum SGD hyperparameters. Defaults are the published constants:
/// learning rate 0.002 and weight decay 1e-6, with momentum 0.9.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            momentum: 0.9,
            weight_decay: 1e-6,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.momentum)
            || self.weight_decay < 0.0
        {
            return Err(Error::Config(
                "optimizer needs lr > 0, momentum in [0,1), weight_decay >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerDef {
    pub name: String,
    pub spec: ConvSpec,
}

/// One layer's weights plus parallel gradient and momentum buffers.
#[derive(Clone, Debug)]
pub struct LayerParams {
    pub def: LayerDef,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_w: Vec<f64>,
    pub grad_b: Vec<f64>,
    pub mom_w: Vec<f64>,
    pub mom_b: Vec<f64>,
}

/// All trainable parameters, in layer order.
#[derive(Clone, Debug)]
pub struct NetParams {
    layers: Vec<LayerParams>,
}

/// The layer sequence implied by a config: down pairs, up pairs, head.
pub fn layer_plan(cfg: &NetConfig) -> Result<Vec<LayerDef>> {
    cfg.validate()?;
    let n = cfg.blocks();
    let mut plan = Vec::with_capacity(4 * n + 1);
    let mut prev = cfg.in_channels;
    for b in 0..n {
        let reduce = cfg.down_widths[2 * b];
        let refine = cfg.down_widths[2 * b + 1];
        plan.push(LayerDef {
            name: format!("down{b}.reduce"),
            spec: ConvSpec::conv(prev, reduce, 3, 2),
        });
        plan.push(LayerDef {
            name: format!("down{b}.refine"),
            spec: ConvSpec::conv(reduce, refine, 3, 1),
        });
        prev = refine;
    }
    for k in 0..n {
        let level = n - 1 - k; // resolution level the deconv lands on
        let width = if level == 0 {
            cfg.down_widths[0]
        } else {
            cfg.down_widths[2 * level - 1]
        };
        let skip_ch = if level == 0 {
            cfg.in_channels
        } else {
            cfg.down_widths[2 * (level - 1) + 1]
        };
        plan.push(LayerDef {
            name: format!("up{k}.deconv"),
            spec: ConvSpec::deconv_double(prev, width),
        });
        plan.push(LayerDef {
            name: format!("up{k}.conv"),
            spec: ConvSpec::conv(width + skip_ch, width, 3, 1),
        });
        prev = width;
    }
    plan.push(LayerDef {
        name: "head.conv".to_string(),
        spec: ConvSpec::conv(prev, cfg.out_maps, 3, 1),
    });
    Ok(plan)
}

impl NetParams {
    /// He-style fan-in initialization, seeded by `cfg.seed`; biases, gradient
    /// and momentum buffers start at zero.
    pub fn init(cfg: &NetConfig) -> Result<Self> {
        let plan = layer_plan(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let layers = plan
            .into_iter()
            .map(|def| {
                let fan_in = def.spec.in_ch * def.spec.kernel * def.spec.kernel;
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                let wlen = def.spec.weight_len();
                let blen = def.spec.out_ch;
                LayerParams {
                    weights: (0..wlen).map(|_| normal.sample(&mut rng)).collect(),
                    bias: vec![0.0; blen],
                    grad_w: vec![0.0; wlen],
                    grad_b: vec![0.0; blen],
                    mom_w: vec![0.0; wlen],
                    mom_b: vec![0.0; blen],
                    def,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn layer_by_name_mut(&mut self, name: &str) -> Option<&mut LayerParams> {
        self.layers.iter_mut().find(|l| l.def.name == name)
    }

    /// Zero every weight and bias (gradient checks and degenerate tests).
    pub fn zero_weights(&mut self) {
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
            layer.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    fn matches_plan(&self, plan: &[LayerDef]) -> bool {
        self.layers.len() == plan.len()
            && self
                .layers
                .iter()
                .zip(plan)
                .all(|(l, d)| l.def == *d)
    }

    /// Flat view of all parameters, layer order then weights-before-bias.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_flat_parameters(&mut self, flat: &[f64]) {
        let mut off = 0;
        for layer in &mut self.layers {
            let wlen = layer.weights.len();
            layer.weights.copy_from_slice(&flat[off..off + wlen]);
            off += wlen;
            let blen = layer.bias.len();
            layer.bias.copy_from_slice(&flat[off..off + blen]);
            off += blen;
        }
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
    }

    pub fn flat_gradients(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(&layer.grad_w);
            out.extend_from_slice(&layer.grad_b);
        }
        out
    }

    pub fn zero_gradients(&mut self) {
        for layer in &mut self.layers {
            layer.grad_w.iter_mut().for_each(|g| *g = 0.0);
            layer.grad_b.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

/// Activation record from one forward pass, holding everything the backward
/// pass needs.
#[derive(Clone, Debug)]
pub struct Tape {
    cfg: NetConfig,
    input: Tensor3,
    /// Per down block: (post-ReLU reduce output, post-ReLU refine output).
    down: Vec<(Tensor3, Tensor3)>,
    /// Per up block: (post-ReLU deconv output, concatenated input, post-ReLU
    /// conv output).
    up: Vec<(Tensor3, Tensor3, Tensor3)>,
    /// Per-element scale applied before the head (0 or 1/(1−rate); all 1 in
    /// inference mode).
    dropout_scale: Vec<f64>,
    head_input: Tensor3,
}

impl Tape {
    /// Spatial size at the bottom of the encoder.
    pub fn bottleneck_size(&self) -> (usize, usize) {
        let b = &self.down[self.down.len() - 1].1;
        (b.height, b.width)
    }
}

/// Run the network. `training` enables (inverted) dropout driven by `seed`;
/// inference is seed-independent. Returns the raw head maps and the tape.
pub fn forward(
    params: &NetParams,
    cfg: &NetConfig,
    image: &MultiChannelImage,
    training: bool,
    seed: u64,
) -> Result<(Vec<ScalarField>, Tape)> {
    let plan = layer_plan(cfg)?;
    if !params.matches_plan(&plan) {
        return Err(Error::TapeMismatch);
    }
    let d = image.domain();
    let factor = cfg.size_factor();
    if d.height() % factor != 0 || d.width() % factor != 0 {
        return Err(Error::BadImageSize {
            height: d.height(),
            width: d.width(),
            factor,
        });
    }
    if image.channels().len() != cfg.in_channels {
        return Err(Error::BadNetConfig(format!(
            "expected {} input channels, got {}",
            cfg.in_channels,
            image.channels().len()
        )));
    }

    let n = cfg.blocks();
    let input = image.to_tensor();
    let mut down = Vec::with_capacity(n);
    let mut cur = input.clone();
    for b in 0..n {
        let reduce = &params.layers[2 * b];
        let refine = &params.layers[2 * b + 1];
        let r = reduce
            .def
            .spec
            .forward(&cur, &reduce.weights, &reduce.bias)
            .relu();
        let f = refine.def.spec.forward(&r, &refine.weights, &refine.bias).relu();
        cur = f.clone();
        down.push((r, f));
    }

    let mut up = Vec::with_capacity(n);
    for k in 0..n {
        let level = n - 1 - k;
        let deconv = &params.layers[2 * n + 2 * k];
        let conv = &params.layers[2 * n + 2 * k + 1];
        let dec = deconv
            .def
            .spec
            .forward(&cur, &deconv.weights, &deconv.bias)
            .relu();
        let skip = if level == 0 {
            &input
        } else {
            &down[level - 1].1
        };
        let concat = dec.concat_channels(skip);
        let out = conv.def.spec.forward(&concat, &conv.weights, &conv.bias).relu();
        cur = out.clone();
        up.push((dec, concat, out));
    }

    // Inverted dropout before the head convolution.
    let mut dropout_scale = vec![1.0; cur.data.len()];
    if training && cfg.dropout_rate > 0.0 {
        let keep = 1.0 - cfg.dropout_rate;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in dropout_scale.iter_mut() {
            *s = if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 };
        }
    }
    let mut head_input = cur.clone();
    for (v, s) in head_input.data.iter_mut().zip(&dropout_scale) {
        *v *= s;
    }

    let head = &params.layers[4 * n];
    let raw = head.def.spec.forward(&head_input, &head.weights, &head.bias);

    let plane = d.len();
    let maps = (0..cfg.out_maps)
        .map(|m| {
            ScalarField::from_vec(
                d,
                raw.data[m * plane..(m + 1) * plane].to_vec(),
            )
        })
        .collect();

    Ok((
        maps,
        Tape {
            cfg: cfg.clone(),
            input,
            down,
            up,
            dropout_scale,
            head_input,
        },
    ))
}

/// Reverse-mode gradients of every weight and bias for `forward`, given
/// upstream gradients on the raw head maps. Gradients accumulate into the
/// parameter buffers (additive over a batch).
pub fn backward(
    params: &mut NetParams,
    cfg: &NetConfig,
    tape: &Tape,
    grad_raw_maps: &[ScalarField],
) -> Result<()> {
    if tape.cfg != *cfg {
        return Err(Error::TapeMismatch);
    }
    let plan = layer_plan(cfg)?;
    if !params.matches_plan(&plan) {
        return Err(Error::TapeMismatch);
    }
    if grad_raw_maps.len() != cfg.out_maps {
        return Err(Error::WrongMapCount {
            expected: cfg.out_maps,
            got: grad_raw_maps.len(),
        });
    }
    let n = cfg.blocks();
    let (h, w) = (tape.input.height, tape.input.width);

    let mut grad = Tensor3::zeros(cfg.out_maps, h, w);
    let plane = h * w;
    for (m, g) in grad_raw_maps.iter().enumerate() {
        if g.domain().height() != h || g.domain().width() != w {
            return Err(Error::DomainMismatch(
                "gradient maps must match the image grid".into(),
            ));
        }
        grad.data[m * plane..(m + 1) * plane].copy_from_slice(g.values());
    }

    // Head convolution.
    let head = &mut params.layers[4 * n];
    let mut g = {
        let weights = head.def.spec;
        let w_copy = head.weights.clone();
        weights.backward(
            &tape.head_input,
            &grad,
            &w_copy,
            &mut head.grad_w,
            &mut head.grad_b,
        )
    };
    for (v, s) in g.data.iter_mut().zip(&tape.dropout_scale) {
        *v *= s;
    }

    // Up blocks in reverse; collect gradients flowing into encoder skips.
    let mut skip_grads: Vec<Option<Tensor3>> = vec![None; n];
    for k in (0..n).rev() {
        let level = n - 1 - k;
        let (dec, concat, out) = &tape.up[k];
        let g_out = out.relu_backward(&g);

        let conv = &mut params.layers[2 * n + 2 * k + 1];
        let w_copy = conv.weights.clone();
        let g_concat = conv.def.spec.backward(
            concat,
            &g_out,
            &w_copy,
            &mut conv.grad_w,
            &mut conv.grad_b,
        );

        let (g_dec_part, g_skip) = g_concat.split_channels(dec.channels);
        if level > 0 {
            skip_grads[level] = Some(g_skip);
        }

        let g_dec = dec.relu_backward(&g_dec_part);
        let deconv_input = if k == 0 {
            &tape.down[n - 1].1
        } else {
            &tape.up[k - 1].2
        };
        let deconv = &mut params.layers[2 * n + 2 * k];
        let w_copy = deconv.weights.clone();
        g = deconv.def.spec.backward(
            deconv_input,
            &g_dec,
            &w_copy,
            &mut deconv.grad_w,
            &mut deconv.grad_b,
        );
    }

    // Down blocks in reverse. down{b}.refine output sits at resolution level
    // b+1; its gradient combines the downstream path with the skip branch.
    for b in (0..n).rev() {
        let (reduce_out, refine_out) = &tape.down[b];
        if b + 1 <= n - 1 {
            if let Some(skip) = &skip_grads[b + 1] {
                for (gv, sv) in g.data.iter_mut().zip(&skip.data) {
                    *gv += sv;
                }
            }
        }
        let g_refine = refine_out.relu_backward(&g);
        let refine = &mut params.layers[2 * b + 1];
        let w_copy = refine.weights.clone();
        let g_reduce_out = refine.def.spec.backward(
            reduce_out,
            &g_refine,
            &w_copy,
            &mut refine.grad_w,
            &mut refine.grad_b,
        );

        let g_reduce = reduce_out.relu_backward(&g_reduce_out);
        let reduce_input = if b == 0 { &tape.input } else { &tape.down[b - 1].1 };
        let reduce = &mut params.layers[2 * b];
        let w_copy = reduce.weights.clone();
        g = reduce.def.spec.backward(
            reduce_input,
            &g_reduce,
            &w_copy,
            &mut reduce.grad_w,
            &mut reduce.grad_b,
        );
    }

    Ok(())
}

/// Numerically stable `ln(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Derivative of softplus (the logistic sigmoid).
pub fn softplus_deriv(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Group the raw head maps into capacity triples, applying softplus so every
/// capacity is strictly positive. Map order within a group is (C_s, C_t, C_g);
/// groups follow the WT, TC, EC hierarchy for the default nine maps.
pub fn capacity_head(raw_maps: &[ScalarField]) -> Result<Vec<CapacityMaps>> {
    if raw_maps.is_empty() || raw_maps.len() % 3 != 0 {
        return Err(Error::WrongMapCount {
            expected: 9,
            got: raw_maps.len(),
        });
    }
    raw_maps
        .chunks(3)
        .map(|group| {
            CapacityMaps::new(
                group[0].map(softplus),
                group[1].map(softplus),
                group[2].map(softplus),
            )
        })
        .collect()
}

/// Chain capacity-space gradients back to the raw maps through the softplus
/// head.
pub fn capacity_head_backward(
    raw_maps: &[ScalarField],
    grad_caps: &[CapacityGradients],
) -> Result<Vec<ScalarField>> {
    if raw_maps.len() != 3 * grad_caps.len() {
        return Err(Error::WrongMapCount {
            expected: 3 * grad_caps.len(),
            got: raw_maps.len(),
        });
    }
    let mut out = Vec::with_capacity(raw_maps.len());
    for (group, grads) in raw_maps.chunks(3).zip(grad_caps) {
        out.push(group[0].zip_map(&grads.c_source, |z, g| g * softplus_deriv(z)));
        out.push(group[1].zip_map(&grads.c_sink, |z, g| g * softplus_deriv(z)));
        out.push(group[2].zip_map(&grads.c_edge, |z, g| g * softplus_deriv(z)));
    }
    Ok(out)
}

/// Momentum SGD with decoupled-in-order weight decay:
/// `g ← g + wd·w; v ← m·v + g; w ← w − lr·v`, then gradients are zeroed.
pub fn sgd_momentum_step(params: &mut NetParams, optim: &OptimConfig) {
    for layer in params.layers_mut() {
        for i in 0..layer.weights.len() {
            let g = layer.grad_w[i] + optim.weight_decay * layer.weights[i];
            layer.mom_w[i] = optim.momentum * layer.mom_w[i] + g;
            layer.weights[i] -= optim.learning_rate * layer.mom_w[i];
            layer.grad_w[i] = 0.0;
        }
        for i in 0..layer.bias.len() {
            let g = layer.grad_b[i] + optim.weight_decay * layer.bias[i];
            layer.mom_b[i] = optim.momentum * layer.mom_b[i] + g;
            layer.bias[i] -= optim.learning_rate * layer.mom_b[i];
            layer.grad_b[i] = 0.0;
        }
    }
}
