use swinseg_tensor::NamedParameterSet;

use crate::error::{ModelError, Result};

/// Which part of a model a pretrained set may overwrite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferScope {
    /// Patch embedding, encoder stages and the bottleneck.
    EncoderOnly,
    Full,
}

/// True for parameter names inside the encoder transfer scope.
pub fn encoder_scope(name: &str) -> bool {
    name.starts_with("patch_embed.") || name.starts_with("encoder.")
}

#[derive(Debug, Clone, Default)]
pub struct TransferReport {
    pub loaded: Vec<String>,
    pub skipped: Vec<String>,
}

/// Overwrites in-scope parameters with pretrained ones. Every in-scope
/// pretrained entry must exist in `params` with a matching shape;
/// out-of-scope entries are skipped and reported. Parameters not covered by
/// the pretrained set are left untouched.
pub fn init_transfer(
    params: &mut NamedParameterSet,
    pretrained: &NamedParameterSet,
    scope: TransferScope,
) -> Result<TransferReport> {
    let mut report = TransferReport::default();
    for (name, tensor) in pretrained.iter() {
        let in_scope = match scope {
            TransferScope::Full => true,
            TransferScope::EncoderOnly => encoder_scope(name),
        };
        if !in_scope {
            report.skipped.push(name.to_string());
            continue;
        }
        match params.get_mut(name) {
            None => return Err(ModelError::MissingParam(name.to_string())),
            Some(dst) => {
                if dst.shape() != tensor.shape() {
                    return Err(ModelError::ShapeConflict {
                        name: name.to_string(),
                        expected: dst.shape().to_vec(),
                        got: tensor.shape().to_vec(),
                    });
                }
                *dst = tensor.clone();
            }
        }
        report.loaded.push(name.to_string());
    }
    Ok(report)
}
