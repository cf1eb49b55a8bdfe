//! Generator, discriminator, optimizer and the GAN training loop.

pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod data;
pub mod discriminator;
pub mod generator;
pub mod layers;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use attention::{AttentionCache, AttentionGrads, SelfAttention};
pub use checkpoint::{Checkpoint, NetworkConfig};
pub use discriminator::{Discriminator, DiscriminatorConfig, DiscriminatorTrace};
pub use generator::{DecoderLevel, EncoderLayer, EncoderTrace, Generator, GeneratorConfig, GeneratorTrace, SkipSource};
pub use layers::{ConvLayer, Nonlinearity, PConvLayer};
pub use train::{loss_trend, StepLog, TrainConfig, Trainer, LOSS_LOG_HEADER};

use crate::error::{Error, Result};

/// One gradient vector per parameter slice, in parameter order.
pub type ParamGrads = Vec<Vec<f64>>;

/// Flat, ordered, named access to a network's parameters.
pub trait Parameterized {
    fn named_params(&self) -> Vec<(String, &[f64])>;

    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    /// Copies values in, requiring the same names and lengths in order.
    fn load_params(&mut self, blobs: &[(String, Vec<f64>)]) -> Result<()> {
        let names: Vec<(String, usize)> = self.named_params().into_iter().map(|(n, p)| (n, p.len())).collect();
        if names.len() != blobs.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter blobs, found {}",
                names.len(),
                blobs.len()
            )));
        }
        for ((name, len), (bname, values)) in names.iter().zip(blobs) {
            if name != bname || *len != values.len() {
                return Err(Error::Checkpoint(format!(
                    "blob {bname} ({} values) does not match parameter {name} ({len} values)",
                    values.len()
                )));
            }
        }
        for (dst, (_, src)) in self.params_mut().into_iter().zip(blobs) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }
}
