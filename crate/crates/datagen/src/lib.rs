//! Synthetic multimodal phantom slices standing in for a private clinical
//! dataset. Every slice holds two gland ellipses with a tumor inside exactly
//! one; the three modality channels carry deliberately complementary
//! contrast (tumor/gland in the STIR-like channel, gland/background in the
//! T1-like channel, partial redundancy plus extra noise in the T2-like
//! channel). Two center profiles impose a systematic intensity shift so
//! multicenter effects can be manufactured. Everything is a pure function of
//! `(spec, profiles, seed)`.

mod image;
mod manifest;
mod pgm;
mod phantom;

pub use image::{GrayImage16, LabelImage};
pub use manifest::{
    load_manifest, make_dataset, read_slice, save_manifest, write_slice, DataConfig,
    DatasetManifest, RecordEntry, RecordPaths, Split, GENERATOR_VERSION,
};
pub use pgm::{read_pgm, write_pgm16, write_pgm8, PgmImage};
pub use phantom::{
    concat_halves, generate_slice, split_halves, split_left_right, CenterProfile, ModalityContrast,
    PhantomSpec, Range, Side, SliceRecord,
};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: parse error at byte {offset}: {msg}")]
    Parse { path: PathBuf, offset: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible geometry: {0}")]
    Geometry(String),

    #[error("{0}")]
    Dim(String),
}

pub type Result<T> = std::result::Result<T, DatagenError>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> DatagenError + '_ {
    move |source| DatagenError::Io { path: path.to_path_buf(), source }
}
