use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dpconv::{ConvSpec, WindowStats};
use crate::error::{Error, Result};
use crate::loss::composite_image;
use crate::maskprop::LayerStackSpec;
use crate::net::attention::{AttentionCache, SelfAttention};
use crate::net::layers::{ConvLayer, Nonlinearity, PConvLayer};
use crate::net::{ParamGrads, Parameterized};
use crate::tensor::{check_masks, concat_channels, upsample_nearest, upsample_nearest_backward, BinaryMask, ConvGeometry, Tensor4};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub spec: ConvSpec,
    pub activation: Nonlinearity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipSource {
    /// The masked input image.
    Input,
    /// Output of the encoder layer with this index.
    Encoder(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderLevel {
    pub upsample: usize,
    pub skip: Option<SkipSource>,
    pub kernel_half: usize,
    pub out_channels: usize,
    pub activation: Nonlinearity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub encoder: Vec<EncoderLayer>,
    /// Dilations of the 3×3 partial convolutions after the encoder.
    pub dilation_schedule: Vec<usize>,
    pub residual: Vec<bool>,
    pub block_activation: Nonlinearity,
    pub decoder: Vec<DecoderLevel>,
    /// Decoder level whose output passes through self-attention.
    pub attention_after: Option<usize>,
    pub attention_gamma: f64,
    pub output_activation: Nonlinearity,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::with_widths(256, 256, [64, 128, 256, 256], [128, 64, 64])
    }
}

impl GeneratorConfig {
    /// Reference topology: partial convolutions 7×7/2, 5×5/2, 5×5/2, 3×3/1,
    /// a residual block with dilations 2, 4, 8, three decoder levels with
    /// skips from the second and first encoder layers and the input, and
    /// self-attention after the first decoder level.
    pub fn with_widths(height: usize, width: usize, enc: [usize; 4], dec: [usize; 3]) -> Self {
        let layer = |half: usize, stride: usize, cin: usize, cout: usize| EncoderLayer {
            spec: ConvSpec::square(half, cin, cout).with_stride(stride),
            activation: Nonlinearity::LeakyRelu,
        };
        let level = |skip: SkipSource, cout: usize| DecoderLevel {
            upsample: 2,
            skip: Some(skip),
            kernel_half: 1,
            out_channels: cout,
            activation: Nonlinearity::Relu,
        };
        Self {
            height,
            width,
            in_channels: 3,
            out_channels: 3,
            encoder: vec![
                layer(3, 2, 3, enc[0]),
                layer(2, 2, enc[0], enc[1]),
                layer(2, 2, enc[1], enc[2]),
                layer(1, 1, enc[2], enc[3]),
            ],
            dilation_schedule: vec![2, 4, 8],
            residual: vec![true; 3],
            block_activation: Nonlinearity::LeakyRelu,
            decoder: vec![
                level(SkipSource::Encoder(1), dec[0]),
                level(SkipSource::Encoder(0), dec[1]),
                level(SkipSource::Input, dec[2]),
            ],
            attention_after: Some(0),
            attention_gamma: 0.0,
            output_activation: Nonlinearity::Tanh,
            seed: 0,
        }
    }

    /// Same topology with narrow layers, sized for CPU training demos.
    pub fn compact(height: usize, width: usize) -> Self {
        Self::with_widths(height, width, [16, 32, 64, 64], [32, 16, 16])
    }

    /// Two encoder layers, one dilated layer and one decoder level with
    /// attention; small enough for exhaustive finite differences.
    pub fn tiny() -> Self {
        Self {
            height: 16,
            width: 16,
            in_channels: 3,
            out_channels: 3,
            encoder: vec![
                EncoderLayer {
                    spec: ConvSpec::square(1, 3, 4).with_stride(2),
                    activation: Nonlinearity::LeakyRelu,
                },
                EncoderLayer {
                    spec: ConvSpec::square(1, 4, 4),
                    activation: Nonlinearity::LeakyRelu,
                },
            ],
            dilation_schedule: vec![2],
            residual: vec![true],
            block_activation: Nonlinearity::LeakyRelu,
            decoder: vec![DecoderLevel {
                upsample: 2,
                skip: Some(SkipSource::Input),
                kernel_half: 1,
                out_channels: 4,
                activation: Nonlinearity::Relu,
            }],
            attention_after: Some(0),
            attention_gamma: 0.5,
            output_activation: Nonlinearity::Tanh,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn bottleneck_channels(&self) -> usize {
        self.encoder.last().map_or(self.in_channels, |l| l.spec.out_channels)
    }

    fn block_spec(&self, dilation: usize) -> ConvSpec {
        let c = self.bottleneck_channels();
        ConvSpec::square(1, c, c).with_dilation(dilation).same_padding()
    }

    /// Encoder layers followed by the dilated block, as a mask stack.
    pub fn mask_stack(&self) -> LayerStackSpec {
        let mut layers: Vec<ConvSpec> = self.encoder.iter().map(|l| l.spec).collect();
        layers.extend(self.dilation_schedule.iter().map(|&l| self.block_spec(l)));
        LayerStackSpec {
            name: "generator".into(),
            layers,
        }
    }

    /// Checks the structural rules and the shapes for the configured size.
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid("generator needs at least one input and output channel"));
        }
        if self.encoder.is_empty() {
            return Err(Error::invalid("generator encoder is empty"));
        }
        if let Some(i) = self.encoder.iter().take(4).position(|l| l.spec.dilation != 1) {
            return Err(Error::invalid(format!(
                "encoder layer {i} must be an undilated partial convolution"
            )));
        }
        let mut c = self.in_channels;
        for (i, l) in self.encoder.iter().enumerate() {
            l.spec.validate()?;
            if l.spec.in_channels != c {
                return Err(Error::shape(format!(
                    "encoder layer {i} expects {} channels, receives {c}",
                    l.spec.in_channels
                )));
            }
            c = l.spec.out_channels;
        }
        if self.dilation_schedule.iter().any(|&l| l == 0) {
            return Err(Error::invalid("dilations must be >= 1"));
        }
        if self.dilation_schedule.windows(2).any(|p| p[1] < p[0]) {
            return Err(Error::invalid(format!(
                "dilation schedule {:?} must be non-decreasing",
                self.dilation_schedule
            )));
        }
        if self.residual.len() != self.dilation_schedule.len() {
            return Err(Error::invalid("one residual flag is needed per dilated layer"));
        }
        if self.decoder.is_empty() {
            return Err(Error::invalid("generator decoder is empty"));
        }
        if let Some(a) = self.attention_after {
            if a >= self.decoder.len() {
                return Err(Error::invalid(format!("attention level {a} does not exist")));
            }
        }
        self.shape_walk(self.height, self.width).map(|_| ())
    }

    /// Feature resolutions after each encoder layer and each decoder level.
    fn shape_walk(&self, h: usize, w: usize) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
        let mut enc = Vec::with_capacity(self.encoder.len());
        let (mut ch, mut cw) = (h, w);
        for (i, l) in self.encoder.iter().enumerate() {
            (ch, cw) = l
                .spec
                .output_dims(ch, cw)
                .map_err(|e| Error::shape(format!("encoder layer {i}: {e}")))?;
            enc.push((ch, cw));
        }
        for &l in &self.dilation_schedule {
            if self.block_spec(l).output_dims(ch, cw)? != (ch, cw) {
                return Err(Error::shape(format!("dilated layer {l} changes the resolution")));
            }
        }
        let mut dec = Vec::with_capacity(self.decoder.len());
        for (i, lvl) in self.decoder.iter().enumerate() {
            if lvl.upsample == 0 || lvl.out_channels == 0 {
                return Err(Error::invalid(format!("decoder level {i} has a zero factor or width")));
            }
            (ch, cw) = (ch * lvl.upsample, cw * lvl.upsample);
            if let Some(skip) = lvl.skip {
                let res = match skip {
                    SkipSource::Input => (h, w),
                    SkipSource::Encoder(k) => *enc
                        .get(k)
                        .ok_or_else(|| Error::invalid(format!("decoder level {i} skips from missing layer {k}")))?,
                };
                if res != (ch, cw) {
                    return Err(Error::shape(format!(
                        "decoder level {i} at {ch}x{cw} cannot concatenate a {}x{} skip",
                        res.0, res.1
                    )));
                }
            }
            dec.push((ch, cw));
        }
        if (ch, cw) != (h, w) {
            return Err(Error::shape(format!("generator maps {h}x{w} to {ch}x{cw}")));
        }
        Ok((enc, dec))
    }

    /// Smallest feature map side across the encoder.
    pub fn min_feature_resolution(&self) -> Result<(usize, usize)> {
        let (enc, _) = self.shape_walk(self.height, self.width)?;
        Ok(enc.into_iter().min_by_key(|&(h, w)| h.min(w)).expect("non-empty encoder"))
    }

    fn skip_channels(&self, skip: SkipSource) -> usize {
        match skip {
            SkipSource::Input => self.in_channels,
            SkipSource::Encoder(k) => self.encoder[k].spec.out_channels,
        }
    }
}

#[derive(Clone, Debug)]
struct LayerRecord {
    input: Tensor4,
    masks_in: Vec<BinaryMask>,
    stats: Vec<WindowStats>,
    pre: Tensor4,
    post: Tensor4,
}

/// Encoder and dilated-block activations plus every emitted mask.
#[derive(Clone, Debug)]
pub struct EncoderTrace {
    pub features: Tensor4,
    /// `masks[k]` is the mask list emitted by layer `k` (encoder layers,
    /// then dilated layers), one per sample or one for the batch.
    pub masks: Vec<Vec<BinaryMask>>,
    masked_input: Tensor4,
    layers: Vec<LayerRecord>,
}

#[derive(Clone, Debug)]
pub struct GeneratorTrace {
    pub output: Tensor4,
    pub encoder: EncoderTrace,
    dec_inputs: Vec<Tensor4>,
    dec_pre: Vec<Tensor4>,
    dec_post: Vec<Tensor4>,
    attention: Option<AttentionCache>,
    head_input: Tensor4,
    head_pre: Tensor4,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    config: GeneratorConfig,
    encoder: Vec<PConvLayer>,
    block: Vec<PConvLayer>,
    decoder: Vec<ConvLayer>,
    attention: Option<SelfAttention>,
    head: ConvLayer,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder: Vec<PConvLayer> = config.encoder.iter().map(|l| PConvLayer::new(l.spec, &mut rng)).collect();
        let block = config
            .dilation_schedule
            .iter()
            .map(|&l| PConvLayer::new(config.block_spec(l), &mut rng))
            .collect();
        let mut c = config.bottleneck_channels();
        let mut decoder = Vec::with_capacity(config.decoder.len());
        let mut attention = None;
        for (i, lvl) in config.decoder.iter().enumerate() {
            let cin = c + lvl.skip.map_or(0, |s| config.skip_channels(s));
            let k = 2 * lvl.kernel_half + 1;
            decoder.push(ConvLayer::new(
                cin,
                lvl.out_channels,
                ConvGeometry::new(k, k, 1, lvl.kernel_half, 1),
                &mut rng,
            ));
            c = lvl.out_channels;
            if config.attention_after == Some(i) {
                attention = Some(SelfAttention::new(c, config.attention_gamma, &mut rng));
            }
        }
        let head = ConvLayer::new(c, config.out_channels, ConvGeometry::new(1, 1, 1, 0, 1), &mut rng);
        Ok(Self {
            config,
            encoder,
            block,
            decoder,
            attention,
            head,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn encoder_layers(&self) -> &[PConvLayer] {
        &self.encoder
    }

    pub fn block_layers(&self) -> &[PConvLayer] {
        &self.block
    }

    pub fn decoder_layers(&self) -> &[ConvLayer] {
        &self.decoder
    }

    pub fn attention(&self) -> Option<&SelfAttention> {
        self.attention.as_ref()
    }

    pub fn attention_mut(&mut self) -> Option<&mut SelfAttention> {
        self.attention.as_mut()
    }

    pub fn head(&self) -> &ConvLayer {
        &self.head
    }

    fn check_input(&self, image: &Tensor4, masks: &[BinaryMask]) -> Result<()> {
        if image.channels() != self.config.in_channels {
            return Err(Error::shape(format!(
                "generator expects {} channels, got {}",
                self.config.in_channels,
                image.channels()
            )));
        }
        self.config.shape_walk(image.height(), image.width())?;
        check_masks(image, masks)
    }

    /// Runs the partial-convolution encoder and the dilated block.
    pub fn encode(&self, image: &Tensor4, masks: &[BinaryMask]) -> Result<EncoderTrace> {
        self.check_input(image, masks)?;
        let mut x = image.clone();
        let mut m = masks.to_vec();
        let mut layers = Vec::with_capacity(self.encoder.len() + self.block.len());
        let mut emitted = Vec::with_capacity(layers.capacity());
        let acts = self
            .config
            .encoder
            .iter()
            .map(|l| (l.activation, false))
            .chain(self.config.residual.iter().map(|&r| (self.config.block_activation, r)));
        for (layer, (act, residual)) in self.encoder.iter().chain(&self.block).zip(acts) {
            let out = layer.forward(&x, &m)?;
            let post = act.forward(&out.output);
            let next = if residual { post.add(&x)? } else { post.clone() };
            emitted.push(out.masks.clone());
            layers.push(LayerRecord {
                input: x,
                masks_in: m,
                stats: out.stats,
                pre: out.output,
                post,
            });
            x = next;
            m = out.masks;
        }
        Ok(EncoderTrace {
            features: x,
            masks: emitted,
            masked_input: image.apply_masks(masks)?,
            layers,
        })
    }

    /// `image` in `[-1, 1]`; hole pixels are ignored.
    pub fn forward(&self, image: &Tensor4, masks: &[BinaryMask]) -> Result<GeneratorTrace> {
        let encoder = self.encode(image, masks)?;
        let n_dec = self.decoder.len();
        let (mut dec_inputs, mut dec_pre, mut dec_post) =
            (Vec::with_capacity(n_dec), Vec::with_capacity(n_dec), Vec::with_capacity(n_dec));
        let mut attention = None;
        let mut d = encoder.features.clone();
        for (i, (layer, lvl)) in self.decoder.iter().zip(&self.config.decoder).enumerate() {
            let up = upsample_nearest(&d, lvl.upsample)?;
            let input = match lvl.skip {
                None => up,
                Some(SkipSource::Input) => concat_channels(&up, &encoder.masked_input)?,
                Some(SkipSource::Encoder(k)) => concat_channels(&up, &encoder.layers[k].post)?,
            };
            let pre = layer.forward(&input)?;
            let post = lvl.activation.forward(&pre);
            d = post.clone();
            if self.config.attention_after == Some(i) {
                let att = self.attention.as_ref().expect("attention built with config");
                let (out, cache) = att.forward(&d)?;
                d = out;
                attention = Some(cache);
            }
            dec_inputs.push(input);
            dec_pre.push(pre);
            dec_post.push(post);
        }
        let head_pre = self.head.forward(&d)?;
        let output = self.config.output_activation.forward(&head_pre);
        Ok(GeneratorTrace {
            output,
            encoder,
            dec_inputs,
            dec_pre,
            dec_post,
            attention,
            head_input: d,
            head_pre,
        })
    }

    /// Raw output and the composite with valid pixels taken from `image`.
    pub fn infer(&self, image: &Tensor4, masks: &[BinaryMask]) -> Result<(Tensor4, Tensor4)> {
        let out = self.forward(image, masks)?.output;
        let comp = composite_image(&out, image, masks)?;
        Ok((out, comp))
    }

    /// Parameter gradients for `dL/d output`, in [`Parameterized`] order.
    pub fn backward(&self, trace: &GeneratorTrace, grad_output: &Tensor4) -> Result<ParamGrads> {
        grad_output.expect_same_shape(&trace.output, "generator output gradient")?;
        let g = self
            .config
            .output_activation
            .backward(&trace.head_pre, &trace.output, grad_output)?;
        let hg = self.head.backward(&trace.head_input, &g)?;
        let mut g = hg.input;

        let mut dec_grads = vec![Vec::new(); self.decoder.len()];
        let mut att_grads = Vec::new();
        let mut skip_grads: Vec<Option<Tensor4>> = vec![None; self.encoder.len()];
        for i in (0..self.decoder.len()).rev() {
            let lvl = &self.config.decoder[i];
            if self.config.attention_after == Some(i) {
                let att = self.attention.as_ref().expect("attention built with config");
                let ag = att.backward(trace.attention.as_ref().expect("attention cache"), &g)?;
                att_grads = vec![
                    ag.query.into_data(),
                    ag.query_bias,
                    ag.key.into_data(),
                    ag.key_bias,
                    ag.value.into_data(),
                    ag.value_bias,
                    vec![ag.gamma],
                ];
                g = ag.input;
            }
            let gp = lvl.activation.backward(&trace.dec_pre[i], &trace.dec_post[i], &g)?;
            let cg = self.decoder[i].backward(&trace.dec_inputs[i], &gp)?;
            dec_grads[i] = vec![cg.weights.into_data(), cg.bias];
            let up_channels = cg.input.channels() - lvl.skip.map_or(0, |s| self.config.skip_channels(s));
            let g_up = cg.input.slice_channels(0, up_channels)?;
            if let Some(SkipSource::Encoder(k)) = lvl.skip {
                let gs = cg.input.slice_channels(up_channels, cg.input.channels() - up_channels)?;
                match &mut skip_grads[k] {
                    Some(acc) => acc.add_assign(&gs)?,
                    slot => *slot = Some(gs),
                }
            }
            g = upsample_nearest_backward(&g_up, lvl.upsample)?;
        }

        let records = &trace.encoder.layers;
        let n_enc = self.encoder.len();
        let mut layer_grads = vec![Vec::new(); records.len()];
        for k in (0..records.len()).rev() {
            let rec = &records[k];
            let (layer, act, residual) = if k < n_enc {
                if let Some(sg) = &skip_grads[k] {
                    g.add_assign(sg)?;
                }
                (&self.encoder[k], self.config.encoder[k].activation, false)
            } else {
                let j = k - n_enc;
                (&self.block[j], self.config.block_activation, self.config.residual[j])
            };
            let gp = act.backward(&rec.pre, &rec.post, &g)?;
            let lg = layer.backward(&rec.input, &rec.masks_in, &rec.stats, &gp)?;
            layer_grads[k] = vec![lg.weights.into_data(), lg.bias];
            g = if residual { lg.input.add(&g)? } else { lg.input };
        }

        let mut out: ParamGrads = layer_grads.into_iter().flatten().collect();
        out.extend(dec_grads.into_iter().flatten());
        out.extend(att_grads);
        out.extend([hg.weights.into_data(), hg.bias]);
        Ok(out)
    }
}

impl Parameterized for Generator {
    fn named_params(&self) -> Vec<(String, &[f64])> {
        let mut v: Vec<(String, &[f64])> = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            v.push((format!("enc{i}.weight"), l.weights.data()));
            v.push((format!("enc{i}.bias"), &l.bias));
        }
        for (i, l) in self.block.iter().enumerate() {
            v.push((format!("dil{i}.weight"), l.weights.data()));
            v.push((format!("dil{i}.bias"), &l.bias));
        }
        for (i, l) in self.decoder.iter().enumerate() {
            v.push((format!("dec{i}.weight"), l.weights.data()));
            v.push((format!("dec{i}.bias"), &l.bias));
        }
        if let Some(a) = &self.attention {
            v.push(("attn.query.weight".into(), a.query.data()));
            v.push(("attn.query.bias".into(), &a.query_bias));
            v.push(("attn.key.weight".into(), a.key.data()));
            v.push(("attn.key.bias".into(), &a.key_bias));
            v.push(("attn.value.weight".into(), a.value.data()));
            v.push(("attn.value.bias".into(), &a.value_bias));
            v.push(("attn.gamma".into(), std::slice::from_ref(&a.gamma)));
        }
        v.push(("head.weight".into(), self.head.weights.data()));
        v.push(("head.bias".into(), &self.head.bias));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for l in self.encoder.iter_mut().chain(self.block.iter_mut()) {
            v.push(l.weights.data_mut());
            v.push(&mut l.bias);
        }
        for l in &mut self.decoder {
            v.push(l.weights.data_mut());
            v.push(&mut l.bias);
        }
        if let Some(a) = &mut self.attention {
            v.push(a.query.data_mut());
            v.push(&mut a.query_bias);
            v.push(a.key.data_mut());
            v.push(&mut a.key_bias);
            v.push(a.value.data_mut());
            v.push(&mut a.value_bias);
            v.push(std::slice::from_mut(&mut a.gamma));
        }
        v.push(self.head.weights.data_mut());
        v.push(&mut self.head.bias);
        v
    }
}
