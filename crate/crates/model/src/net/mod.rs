pub mod swin_unet;
pub mod unet;

use swinseg_tensor::{Graph, NamedParameterSet, Var};

use crate::error::Result;
use crate::layout::Bindings;

/// Common surface the trainer drives: parameter creation and a forward pass
/// from an image `[B, H, W, 3]` to per-pixel logits `[B, H, W, K]`.
pub trait Segmenter: Sync {
    fn name(&self) -> &'static str;
    fn classes(&self) -> usize;
    fn input_hw(&self) -> (usize, usize);
    fn init_params(&self, seed: u64) -> Result<NamedParameterSet>;
    /// Binds `params` onto `g` and runs the network. The returned bindings
    /// map parameter names to graph variables for gradient extraction.
    fn forward(&self, g: &mut Graph, params: &NamedParameterSet, image: Var) -> Result<(Var, Bindings)>;
}
