//! Dilated partial convolutions for image inpainting.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense `(n, c, h, w)` tensors, binary masks, reference and
//!   GEMM-backed convolutions.
//! * [`dpconv`]: the dilated partial convolution operator, its mask update
//!   and its analytic gradients.
//! * [`maskprop`]: irregular mask generation and the layers-to-transparency
//!   analysis.
//! * [`loss`] and [`features`]: inpainting losses and the style feature
//!   extractors.
//! * [`net`]: generator, discriminator, optimizer and the GAN training step.
//! * [`metrics`]: ℓ1 %, PSNR and SSIM.

pub mod config;
pub mod dpconv;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod imageio;
pub mod loss;
pub mod maskprop;
pub mod metrics;
pub mod net;
pub mod tensor;

pub use dpconv::{
    dpconv_backward, dpconv_forward, dpconv_forward_batch, mask_update, window_mask_sum, ConvSpec,
    CountMap, DpConvContext, DpConvGrads, DpConvOutput, WindowStats,
};
pub use error::{Error, Result};
pub use tensor::{
    concat_channels, conv2d, conv2d_backward, conv2d_direct, upsample_nearest, BinaryMask,
    ConvGeometry, ConvGrads, Tensor4,
};
