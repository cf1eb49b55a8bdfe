use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dpconv::{dpconv_backward, dpconv_forward_batch, ConvSpec, DpConvContext, DpConvOutput, WindowStats};
use crate::error::Result;
use crate::tensor::{conv2d, conv2d_backward, BinaryMask, ConvGeometry, ConvGrads, Tensor4};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Identity,
    Relu,
    LeakyRelu,
    Tanh,
}

impl Nonlinearity {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Nonlinearity::Identity => v,
            Nonlinearity::Relu => v.max(0.0),
            Nonlinearity::LeakyRelu => {
                if v > 0.0 {
                    v
                } else {
                    LEAKY_SLOPE * v
                }
            }
            Nonlinearity::Tanh => v.tanh(),
        }
    }

    /// Derivative at pre-activation `x` with output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Nonlinearity::Identity => 1.0,
            Nonlinearity::Relu => f64::from(u8::from(x > 0.0)),
            Nonlinearity::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Nonlinearity::Tanh => 1.0 - y * y,
        }
    }

    pub fn forward(self, pre: &Tensor4) -> Tensor4 {
        match self {
            Nonlinearity::Identity => pre.clone(),
            _ => pre.map(|v| self.apply(v)),
        }
    }

    pub fn backward(self, pre: &Tensor4, post: &Tensor4, grad: &Tensor4) -> Result<Tensor4> {
        if self == Nonlinearity::Identity {
            return Ok(grad.clone());
        }
        pre.expect_same_shape(post, "activation output")?;
        grad.expect_same_shape(pre, "activation gradient")?;
        let mut out = grad.clone();
        for ((g, &x), &y) in out.data_mut().iter_mut().zip(pre.data()).zip(post.data()) {
            *g *= self.derivative(x, y);
        }
        Ok(out)
    }
}

/// Uniform initialisation with bound `sqrt(6 / fan_in)`.
pub(crate) fn init_weights(shape: [usize; 4], rng: &mut impl Rng) -> Tensor4 {
    let fan_in = (shape[1] * shape[2] * shape[3]).max(1);
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(-bound..bound))
}

/// Plain convolution with bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub weights: Tensor4,
    pub bias: Vec<f64>,
    pub geom: ConvGeometry,
}

impl ConvLayer {
    pub fn new(cin: usize, cout: usize, geom: ConvGeometry, rng: &mut impl Rng) -> Self {
        Self {
            weights: init_weights([cout, cin, geom.kernel_h, geom.kernel_w], rng),
            bias: vec![0.0; cout],
            geom,
        }
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        conv2d(x, &self.weights, &self.bias, &self.geom)
    }

    pub fn backward(&self, x: &Tensor4, grad: &Tensor4) -> Result<ConvGrads> {
        conv2d_backward(x, &self.weights, &self.geom, grad)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Dilated partial convolution with bias.
#[derive(Clone, Debug, PartialEq)]
pub struct PConvLayer {
    pub spec: ConvSpec,
    pub weights: Tensor4,
    pub bias: Vec<f64>,
}

impl PConvLayer {
    pub fn new(spec: ConvSpec, rng: &mut impl Rng) -> Self {
        Self {
            weights: init_weights(spec.weight_shape(), rng),
            bias: vec![0.0; spec.out_channels],
            spec,
        }
    }

    pub fn forward(&self, x: &Tensor4, masks: &[BinaryMask]) -> Result<DpConvOutput> {
        dpconv_forward_batch(x, masks, &self.weights, &self.bias, &self.spec)
    }

    pub fn backward(
        &self,
        x: &Tensor4,
        masks: &[BinaryMask],
        stats: &[WindowStats],
        grad: &Tensor4,
    ) -> Result<ConvGrads> {
        let g = dpconv_backward(
            grad,
            &DpConvContext {
                input: x,
                masks,
                stats,
                weights: &self.weights,
                spec: &self.spec,
            },
        )?;
        Ok(ConvGrads {
            input: g.input,
            weights: g.weights,
            bias: g.bias,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}
