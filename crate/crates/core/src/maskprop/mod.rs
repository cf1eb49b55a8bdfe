//! Mask propagation through stacks of partial convolution layers.
//!
//! [`propagate`] applies the mask update layer after layer and records how
//! much of each intermediate mask is valid; [`run_transparency_experiment`]
//! repeats that over many generated masks, bucketed by hole ratio, and
//! compares stacks by the number of layers needed to fill every hole.

mod experiment;
mod generator;
mod packed;

pub use experiment::{
    run_on_masks, run_transparency_experiment, BucketRow, ExperimentSummary, MaskExperimentConfig,
};
pub use generator::{generate_irregular_mask, RATIO_TOLERANCE};
pub use packed::PackedMask;

use serde::{Deserialize, Serialize};

use crate::dpconv::ConvSpec;
use crate::error::{Error, Result};
use crate::tensor::BinaryMask;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerStackSpec {
    pub name: String,
    pub layers: Vec<ConvSpec>,
}

impl LayerStackSpec {
    pub fn new(name: impl Into<String>, layers: Vec<ConvSpec>) -> Result<Self> {
        let stack = Self {
            name: name.into(),
            layers,
        };
        if stack.layers.is_empty() {
            return Err(Error::invalid(format!("layer stack '{}' is empty", stack.name)));
        }
        for l in &stack.layers {
            l.validate()?;
        }
        Ok(stack)
    }

    /// Layer applied at 0-based depth `i`; the last layer repeats.
    pub fn layer_at(&self, i: usize) -> &ConvSpec {
        &self.layers[i.min(self.layers.len() - 1)]
    }

    /// Checks that the first `depth` layers fit an `h × w` input.
    pub fn validate_for(&self, h: usize, w: usize, depth: usize) -> Result<()> {
        let (mut h, mut w) = (h, w);
        for i in 0..depth {
            (h, w) = self.layer_at(i).output_dims(h, w).map_err(|e| {
                Error::shape(format!("stack '{}' layer {}: {e}", self.name, i + 1))
            })?;
        }
        Ok(())
    }

    /// Repeated 3×3 partial convolutions (dilation 1, stride 1).
    pub fn reference_baseline() -> Self {
        Self {
            name: "pconv".into(),
            layers: vec![ConvSpec::square(1, 1, 1)],
        }
    }

    /// Four 3×3 dilation-1 layers followed by dilations 2, 4, 8 repeating,
    /// expanded to `depth` layers.
    pub fn reference_dilated(depth: usize) -> Self {
        let cycle = [2usize, 4, 8];
        let layers = (0..depth.max(1))
            .map(|i| {
                let l = if i < 4 { 1 } else { cycle[(i - 4) % cycle.len()] };
                ConvSpec::square(1, 1, 1).with_dilation(l).same_padding()
            })
            .collect();
        Self {
            name: "dpconv".into(),
            layers,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransparencyReport {
    /// Valid fraction after each applied layer.
    pub per_layer_coverage: Vec<f64>,
    /// First 1-based layer whose output mask has no holes; `Some(0)` when
    /// the input already has none, `None` if the cap was hit first.
    pub layers_to_transparency: Option<usize>,
    pub cap: usize,
}

impl TransparencyReport {
    /// Layers-to-transparency with unreached masks counted as `cap`.
    pub fn censored_layers(&self) -> usize {
        self.layers_to_transparency.unwrap_or(self.cap)
    }
}

/// Applies up to `cap` mask updates from `stack`, stopping early once the
/// mask is fully transparent.
pub fn propagate(stack: &LayerStackSpec, mask: &BinaryMask, cap: usize) -> Result<TransparencyReport> {
    propagate_packed(stack, &PackedMask::from_mask(mask), cap)
}

pub fn propagate_packed(stack: &LayerStackSpec, mask: &PackedMask, cap: usize) -> Result<TransparencyReport> {
    if stack.layers.is_empty() {
        return Err(Error::invalid(format!("layer stack '{}' is empty", stack.name)));
    }
    let mut report = TransparencyReport {
        per_layer_coverage: Vec::new(),
        layers_to_transparency: None,
        cap,
    };
    if mask.is_transparent() {
        report.layers_to_transparency = Some(0);
        return Ok(report);
    }
    let mut current = mask.clone();
    for i in 0..cap {
        current = current.update(stack.layer_at(i)).map_err(|e| {
            Error::shape(format!("stack '{}' layer {}: {e}", stack.name, i + 1))
        })?;
        report.per_layer_coverage.push(current.coverage());
        if current.is_transparent() {
            report.layers_to_transparency = Some(i + 1);
            break;
        }
    }
    Ok(report)
}

/// Masks emitted by the first `depth` layers of `stack`.
pub fn propagate_masks(stack: &LayerStackSpec, mask: &BinaryMask, depth: usize) -> Result<Vec<BinaryMask>> {
    let mut current = PackedMask::from_mask(mask);
    let mut out = Vec::with_capacity(depth);
    for i in 0..depth {
        current = current.update(stack.layer_at(i))?;
        out.push(current.to_mask());
    }
    Ok(out)
}
