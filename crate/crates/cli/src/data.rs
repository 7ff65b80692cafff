use std::path::Path;

use swinseg_datagen::{
    load_manifest, read_slice, split_left_right, DatasetManifest, SliceRecord, Split,
};
use swinseg_tensor::Tensor;

use crate::config::ChannelMode;
use crate::error::{AppError, Result};

/// One training/evaluation item: the labeled half-slice as a ready network
/// input plus its label mask.
#[derive(Debug, Clone)]
pub struct LoadedSlice {
    pub id: u32,
    pub center: u8,
    pub input: Tensor,
    pub labels: Vec<u8>,
    pub h: usize,
    pub w: usize,
}

/// Stacks a record's modalities into a `[1, H, W, 3]` input. Stacked mode
/// uses the fixed order (STIR, T1, T2); replicated modes copy one modality
/// into all three channels.
pub fn build_input(record: &SliceRecord, mode: ChannelMode) -> Result<Tensor> {
    let (h, w) = (record.height(), record.width());
    for img in [&record.t1, &record.t2] {
        if (img.width, img.height) != (w, h) {
            return Err(AppError::Data(format!(
                "modalities disagree on extents: {}x{} vs {}x{}",
                img.width, img.height, w, h
            )));
        }
    }
    let stir = record.stir.to_f64();
    let t1 = record.t1.to_f64();
    let t2 = record.t2.to_f64();
    let planes: [&[f64]; 3] = match mode {
        ChannelMode::Stacked => [&stir, &t1, &t2],
        ChannelMode::ReplicatedStir => [&stir, &stir, &stir],
        ChannelMode::ReplicatedT1 => [&t1, &t1, &t1],
        ChannelMode::ReplicatedT2 => [&t2, &t2, &t2],
    };
    let mut data = Vec::with_capacity(h * w * 3);
    for i in 0..h * w {
        data.push(planes[0][i]);
        data.push(planes[1][i]);
        data.push(planes[2][i]);
    }
    Ok(Tensor::new(vec![1, h, w, 3], data)?)
}

/// Loads the labeled halves of one split, optionally restricted to a
/// center, with inputs built for `mode`. Order follows the manifest.
pub fn load_split(
    dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
    mode: ChannelMode,
    center: Option<u8>,
) -> Result<Vec<LoadedSlice>> {
    let mut out = Vec::new();
    for entry in &manifest.records {
        if entry.split != split || center.map(|c| c != entry.center).unwrap_or(false) {
            continue;
        }
        let record = read_slice(dir, entry)?;
        let (kept, _) = split_left_right(&record)?;
        let input = build_input(&kept, mode)?;
        out.push(LoadedSlice {
            id: entry.id,
            center: entry.center,
            input,
            labels: kept.label.data.clone(),
            h: kept.height(),
            w: kept.width(),
        });
    }
    if out.is_empty() {
        return Err(AppError::Data(format!(
            "no {:?} slices in the manifest{}",
            split,
            center.map(|c| format!(" for center {c}")).unwrap_or_default()
        )));
    }
    Ok(out)
}

/// Convenience: manifest plus both splits for a run configuration.
pub fn load_dataset(
    manifest_path: &Path,
    mode: ChannelMode,
    train_center: Option<u8>,
    test_center: Option<u8>,
) -> Result<(Vec<LoadedSlice>, Vec<LoadedSlice>)> {
    let manifest = load_manifest(manifest_path)?;
    let dir = manifest_path
        .parent()
        .ok_or_else(|| AppError::Data(format!("manifest path {} has no parent", manifest_path.display())))?;
    let train = load_split(dir, &manifest, Split::Train, mode, train_center)?;
    let test = load_split(dir, &manifest, Split::Test, mode, test_center)?;
    Ok((train, test))
}
