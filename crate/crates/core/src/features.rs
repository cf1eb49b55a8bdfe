//! Feature extractors for the style loss.
//!
//! A [`FeatureExtractor`] maps an image batch to a list of feature maps
//! (one per level) and back-propagates gradients given per-level. The
//! bundled [`ConvFeatureExtractor`] is a stack of strided convolutions with
//! a pointwise nonlinearity; it is built either from a fixed seed or from a
//! weights file (flat little-endian `f32` plus a JSON sidecar).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{conv2d, conv2d_backward, ConvGeometry, Tensor4};

/// Per-level feature maps plus whatever the extractor saved for backward.
#[derive(Clone, Debug)]
pub struct Features {
    pub levels: Vec<Tensor4>,
    saved: Vec<Tensor4>,
}

pub trait FeatureExtractor: Send + Sync {
    fn level_count(&self) -> usize;

    fn forward(&self, image: &Tensor4) -> Result<Features>;

    /// Gradient with respect to the image given one gradient per level.
    fn backward(&self, features: &Features, level_grads: &[Tensor4]) -> Result<Tensor4>;
}

/// Returns the image itself as the single level.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn level_count(&self) -> usize {
        1
    }

    fn forward(&self, image: &Tensor4) -> Result<Features> {
        Ok(Features {
            levels: vec![image.clone()],
            saved: Vec::new(),
        })
    }

    fn backward(&self, _features: &Features, level_grads: &[Tensor4]) -> Result<Tensor4> {
        level_grads
            .first()
            .cloned()
            .ok_or_else(|| Error::shape("identity extractor expects one level gradient"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => f64::from(u8::from(y > 0.0)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: [usize; 2],
    pub stride: usize,
    pub padding: usize,
    #[serde(default = "default_true")]
    pub bias: bool,
    /// Whether this layer's activation is exposed as a style level.
    #[serde(default = "default_true")]
    pub level: bool,
}

fn default_true() -> bool {
    true
}

/// JSON sidecar describing the layout of a weights file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsManifest {
    pub activation: Activation,
    pub layers: Vec<LayerDesc>,
}

#[derive(Clone, Debug)]
struct FeatureLayer {
    weights: Tensor4,
    bias: Vec<f64>,
    geom: ConvGeometry,
    level: bool,
}

#[derive(Clone, Debug)]
pub struct ConvFeatureExtractor {
    layers: Vec<FeatureLayer>,
    activation: Activation,
}

impl ConvFeatureExtractor {
    /// Random 3×3 stride-2 convolutions with `tanh`, one level per layer.
    pub fn random(in_channels: usize, widths: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c_in = in_channels;
        let layers = widths
            .iter()
            .map(|&c_out| {
                let bound = (3.0 / (c_in * 9) as f64).sqrt();
                let weights = Tensor4::from_fn([c_out, c_in, 3, 3], |_, _, _, _| rng.gen_range(-bound..bound));
                let bias = (0..c_out).map(|_| rng.gen_range(-0.1..0.1)).collect();
                c_in = c_out;
                FeatureLayer {
                    weights,
                    bias,
                    geom: ConvGeometry::new(3, 3, 2, 1, 1),
                    level: true,
                }
            })
            .collect();
        Self {
            layers,
            activation: Activation::Tanh,
        }
    }

    /// The deterministic three-level extractor used by training and tests.
    pub fn test_extractor(in_channels: usize) -> Self {
        Self::random(in_channels, &[8, 16, 32], 0x5EED_0F57)
    }

    pub fn manifest(&self) -> WeightsManifest {
        WeightsManifest {
            activation: self.activation,
            layers: self
                .layers
                .iter()
                .map(|l| {
                    let [co, ci, kh, kw] = l.weights.shape();
                    LayerDesc {
                        out_channels: co,
                        in_channels: ci,
                        kernel: [kh, kw],
                        stride: l.geom.stride,
                        padding: l.geom.padding,
                        bias: !l.bias.is_empty(),
                        level: l.level,
                    }
                })
                .collect(),
        }
    }

    /// Builds an extractor from raw little-endian `f32` weights laid out
    /// layer by layer as `weights (co, ci, kh, kw)` then `bias (co)`.
    pub fn from_bytes(manifest: &WeightsManifest, bytes: &[u8]) -> Result<Self> {
        if manifest.layers.is_empty() {
            return Err(Error::invalid("weights manifest lists no layers"));
        }
        if bytes.len() % 4 != 0 {
            return Err(Error::invalid(format!("weights blob length {} is not a multiple of 4", bytes.len())));
        }
        let floats: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let mut cursor = 0usize;
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let end = cursor + n;
            if end > floats.len() {
                return Err(Error::invalid(format!(
                    "weights blob too short: need {end} floats, have {}",
                    floats.len()
                )));
            }
            let v = floats[cursor..end].to_vec();
            cursor = end;
            Ok(v)
        };
        let mut layers = Vec::with_capacity(manifest.layers.len());
        let mut prev: Option<usize> = None;
        for d in &manifest.layers {
            if let Some(p) = prev {
                if p != d.in_channels {
                    return Err(Error::shape(format!(
                        "layer expects {} input channels but the previous layer produces {p}",
                        d.in_channels
                    )));
                }
            }
            prev = Some(d.out_channels);
            let [kh, kw] = d.kernel;
            let w = take(d.out_channels * d.in_channels * kh * kw)?;
            let bias = if d.bias { take(d.out_channels)? } else { Vec::new() };
            layers.push(FeatureLayer {
                weights: Tensor4::new([d.out_channels, d.in_channels, kh, kw], w)?,
                bias,
                geom: ConvGeometry::new(kh, kw, d.stride, d.padding, 1),
                level: d.level,
            });
        }
        if cursor != floats.len() {
            return Err(Error::invalid(format!(
                "weights blob has {} trailing floats",
                floats.len() - cursor
            )));
        }
        if !layers.iter().any(|l| l.level) {
            return Err(Error::invalid("weights manifest exposes no style level"));
        }
        Ok(Self {
            layers,
            activation: manifest.activation,
        })
    }

    /// Loads `<bin>` with its JSON sidecar.
    pub fn load(bin: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<Self> {
        let manifest: WeightsManifest = serde_json::from_slice(&std::fs::read(sidecar)?)?;
        Self::from_bytes(&manifest, &std::fs::read(bin)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for l in &self.layers {
            for v in l.weights.data().iter().chain(&l.bias) {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, bin: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<()> {
        std::fs::write(bin, self.to_bytes())?;
        std::fs::write(sidecar, serde_json::to_vec_pretty(&self.manifest())?)?;
        Ok(())
    }
}

impl FeatureExtractor for ConvFeatureExtractor {
    fn level_count(&self) -> usize {
        self.layers.iter().filter(|l| l.level).count()
    }

    fn forward(&self, image: &Tensor4) -> Result<Features> {
        let mut saved = Vec::with_capacity(self.layers.len() * 2);
        let mut levels = Vec::new();
        let mut x = image.clone();
        for l in &self.layers {
            let pre = conv2d(&x, &l.weights, &l.bias, &l.geom)?;
            let y = pre.map(|v| self.activation.apply(v));
            saved.push(x);
            if l.level {
                levels.push(y.clone());
            }
            x = y;
        }
        // the final activation is kept so backward can form the derivative
        saved.push(x);
        Ok(Features { levels, saved })
    }

    fn backward(&self, features: &Features, level_grads: &[Tensor4]) -> Result<Tensor4> {
        if level_grads.len() != self.level_count() || features.saved.len() != self.layers.len() + 1 {
            return Err(Error::shape("feature gradients do not match the extractor levels"));
        }
        let mut level_iter = level_grads.iter().rev();
        let mut grad: Option<Tensor4> = None;
        for (i, l) in self.layers.iter().enumerate().rev() {
            let y = &features.saved[i + 1];
            let mut g = grad.take().unwrap_or_else(|| Tensor4::zeros(y.shape()));
            if l.level {
                let lg = level_iter.next().expect("level count checked");
                g.add_assign(lg)?;
            }
            let act = self.activation;
            let gpre = g.zip_map(y, |g, y| g * act.derivative_from_output(y))?;
            grad = Some(conv2d_backward(&features.saved[i], &l.weights, &l.geom, &gpre)?.input);
        }
        grad.ok_or_else(|| Error::invalid("extractor has no layers"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_extractor_shapes() {
        let ext = ConvFeatureExtractor::test_extractor(3);
        let img = Tensor4::filled([2, 3, 16, 16], 0.3);
        let f = ext.forward(&img).unwrap();
        assert_eq!(f.levels.len(), 3);
        assert_eq!(f.levels[0].shape(), [2, 8, 8, 8]);
        assert_eq!(f.levels[1].shape(), [2, 16, 4, 4]);
        assert_eq!(f.levels[2].shape(), [2, 32, 2, 2]);
        let f2 = ConvFeatureExtractor::test_extractor(3).forward(&img).unwrap();
        assert_eq!(f.levels, f2.levels);
    }

    #[test]
    fn weights_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ext = ConvFeatureExtractor::random(3, &[4, 6], 11);
        let (bin, json) = (dir.path().join("w.bin"), dir.path().join("w.json"));
        ext.save(&bin, &json).unwrap();
        let back = ConvFeatureExtractor::load(&bin, &json).unwrap();
        assert_eq!(back.manifest(), ext.manifest());
        let img = Tensor4::filled([1, 3, 8, 8], 0.5);
        let (a, b) = (ext.forward(&img).unwrap(), back.forward(&img).unwrap());
        for (la, lb) in a.levels.iter().zip(&b.levels) {
            for (x, y) in la.data().iter().zip(lb.data()) {
                // weights were rounded to f32
                assert!((x - y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn weights_file_length_checked() {
        let ext = ConvFeatureExtractor::random(3, &[4], 1);
        let mut bytes = ext.to_bytes();
        bytes.extend_from_slice(&0f32.to_le_bytes());
        assert!(ConvFeatureExtractor::from_bytes(&ext.manifest(), &bytes).is_err());
        bytes.truncate(bytes.len() - 8);
        assert!(ConvFeatureExtractor::from_bytes(&ext.manifest(), &bytes).is_err());
    }

    #[test]
    fn manifest_json_shape() {
        let json = r#"{"activation":"relu","layers":[
            {"out_channels":2,"in_channels":1,"kernel":[3,3],"stride":1,"padding":1},
            {"out_channels":2,"in_channels":2,"kernel":[1,1],"stride":1,"padding":0,"bias":false,"level":false}]}"#;
        let m: WeightsManifest = serde_json::from_str(json).unwrap();
        assert_eq!(m.activation, Activation::Relu);
        assert!(m.layers[0].bias && m.layers[0].level);
        let bytes = vec![0u8; 4 * (2 * 9 + 2 + 4)];
        let ext = ConvFeatureExtractor::from_bytes(&m, &bytes).unwrap();
        assert_eq!(ext.level_count(), 1);
    }
}
