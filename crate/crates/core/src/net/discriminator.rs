use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::layers::{ConvLayer, Nonlinearity};
use crate::net::{ParamGrads, Parameterized};
use crate::tensor::{ConvGeometry, Tensor4};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    /// Output channels of the stride-2 4×4 blocks; the last one is the
    /// score map width.
    pub widths: Vec<usize>,
    pub seed: u64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            widths: vec![64, 128, 256, 512, 1],
            seed: 1,
        }
    }
}

impl DiscriminatorConfig {
    pub fn compact() -> Self {
        Self {
            widths: vec![16, 32, 64, 64, 1],
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::invalid(format!("invalid discriminator widths {:?}", self.widths)));
        }
        Ok(())
    }
}

const BLOCK: ConvGeometry = ConvGeometry {
    kernel_h: 4,
    kernel_w: 4,
    stride: 2,
    padding: 1,
    dilation: 1,
};

#[derive(Clone, Debug)]
pub struct DiscriminatorTrace {
    pub scores: Tensor4,
    inputs: Vec<Tensor4>,
    pre: Vec<Tensor4>,
}

/// Stack of 4×4 stride-2 convolutions with leaky activations between
/// them and a raw score map at the end.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    layers: Vec<ConvLayer>,
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut c = config.in_channels;
        let layers = config
            .widths
            .iter()
            .map(|&w| {
                let l = ConvLayer::new(c, w, BLOCK, &mut rng);
                c = w;
                l
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.layers
    }

    fn activation(&self, i: usize) -> Nonlinearity {
        if i + 1 == self.layers.len() {
            Nonlinearity::Identity
        } else {
            Nonlinearity::LeakyRelu
        }
    }

    pub fn forward(&self, image: &Tensor4) -> Result<DiscriminatorTrace> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = image.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let p = l.forward(&x)?;
            let next = self.activation(i).forward(&p);
            inputs.push(x);
            pre.push(p);
            x = next;
        }
        Ok(DiscriminatorTrace { scores: x, inputs, pre })
    }

    /// Parameter gradients and the gradient with respect to the image.
    pub fn backward(&self, trace: &DiscriminatorTrace, grad_scores: &Tensor4) -> Result<(ParamGrads, Tensor4)> {
        let mut g = grad_scores.clone();
        let mut grads = vec![Vec::new(); 2 * self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let post = if i + 1 == self.layers.len() {
                &trace.scores
            } else {
                &trace.inputs[i + 1]
            };
            let gp = self.activation(i).backward(&trace.pre[i], post, &g)?;
            let cg = self.layers[i].backward(&trace.inputs[i], &gp)?;
            grads[2 * i] = cg.weights.into_data();
            grads[2 * i + 1] = cg.bias;
            g = cg.input;
        }
        Ok((grads, g))
    }
}

impl Parameterized for Discriminator {
    fn named_params(&self) -> Vec<(String, &[f64])> {
        let mut v: Vec<(String, &[f64])> = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            v.push((format!("disc{i}.weight"), l.weights.data()));
            v.push((format!("disc{i}.bias"), &l.bias));
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            v.push(l.weights.data_mut());
            v.push(&mut l.bias);
        }
        v
    }
}
