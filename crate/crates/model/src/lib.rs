//! Segmentation networks built on the tape in `swinseg-tensor`:
//! shifted-window attention layers, the U-shaped transformer network, a
//! convolutional baseline, checkpoint I/O and transfer loading.
//!
//! Parameter storage is a flat [`NamedParameterSet`]; a single layout walk
//! defines every parameter's name, shape and initializer, and the same walk
//! either creates tensors (init) or binds them onto a graph (forward).

mod checkpoint;
mod error;
mod net;
mod transfer;

pub mod layout;
pub mod swin;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CheckpointError,
    CHECKPOINT_MAGIC,
};
pub use error::{ModelError, Result};
pub use layout::{
    AttentionLayout, BindVisitor, Bindings, BlockLayout, BlockPairLayout, ConvLayout, ExpandLayout,
    Init, InitVisitor, LinearLayout, MergeLayout, NormLayout, ParamVisitor, PatchEmbedLayout,
};
pub use net::swin_unet::{
    bind_swin_unet, forward_swin_unet, init_swin_unet, swin_unet_layout, DecoderStageLayout,
    EncoderStageLayout, StagePlan, SwinUnetConfig, SwinUnetLayout, SwinUnetModel,
};
pub use net::unet::{
    bind_unet, forward_unet, init_unet, unet_layout, UNetBaselineConfig, UnetDecoderLayout,
    UnetLayout, UnetModel,
};
pub use net::Segmenter;
pub use transfer::{encoder_scope, init_transfer, TransferReport, TransferScope};

pub use swinseg_tensor::NamedParameterSet;

/// Epsilon used by every LayerNorm in these networks.
pub const LAYER_NORM_EPS: f64 = 1e-5;
