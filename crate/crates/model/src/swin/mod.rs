//! Shifted-window attention building blocks: windowing, masks, the
//! attention layer itself, the paired transformer block, patch movement
//! between space and channels, and the attention complexity formulas.

mod attention;
mod block;
mod flops;
mod updown;
mod window;

pub use attention::{rel_position_index, window_attention, AttentionConfig};
pub use block::{swin_block, swin_block_pair, BlockContext};
pub use flops::{msa_flops, wmsa_flops, ComplexityQuery};
pub use updown::{
    channels_to_space_indices, final_patch_expanding_x4, patch_embed, patch_expanding,
    patch_merging, skip_fuse, space_to_channels_indices,
};
pub use window::{attention_mask, window_partition, window_reverse, MASK_NEG};
