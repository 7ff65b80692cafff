use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use swinseg_tensor::rng::{mix_seed, SeededRng};

use crate::pgm::{read_pgm, write_pgm16, write_pgm8, PgmImage};
use crate::phantom::{generate_slice, CenterProfile, PhantomSpec, Side, SliceRecord};
use crate::{io_err, DatagenError, GrayImage16, LabelImage, Result};

pub const GENERATOR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordPaths {
    pub stir: String,
    pub t1: String,
    pub t2: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub id: u32,
    pub center: u8,
    pub side: Side,
    pub split: Split,
    pub paths: RecordPaths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub records: Vec<RecordEntry>,
}

impl DatasetManifest {
    pub fn split_ids(&self, split: Split) -> Vec<u32> {
        self.records.iter().filter(|r| r.split == split).map(|r| r.id).collect()
    }
}

/// Generation request: slice count, center mixture and the phantom spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub count: usize,
    /// Fractions per center, summing to 1; counts are
    /// `floor(count * mix[0])` for center 1 and the remainder for center 2.
    pub center_mix: [f64; 2],
    pub spec: PhantomSpec,
    pub centers: [CenterProfile; 2],
}

impl Default for DataConfig {
    fn default() -> Self {
        // 42/58 mirrors the two-center slice proportion of the source data
        DataConfig {
            count: 250,
            center_mix: [0.42, 0.58],
            spec: PhantomSpec::default(),
            centers: [CenterProfile::center1(), CenterProfile::center2()],
        }
    }
}

pub fn write_slice(record: &SliceRecord, dir: &Path, id: u32) -> Result<RecordPaths> {
    let slices = dir.join("slices");
    std::fs::create_dir_all(&slices).map_err(io_err(&slices))?;
    let rel = |m: &str| format!("slices/{id:04}_{m}.pgm");
    let paths = RecordPaths { stir: rel("stir"), t1: rel("t1"), t2: rel("t2"), label: rel("label") };
    let (w, h) = (record.width(), record.height());
    write_pgm16(&dir.join(&paths.stir), w, h, &record.stir.data)?;
    write_pgm16(&dir.join(&paths.t1), w, h, &record.t1.data)?;
    write_pgm16(&dir.join(&paths.t2), w, h, &record.t2.data)?;
    write_pgm8(&dir.join(&paths.label), w, h, &record.label.data)?;
    Ok(paths)
}

fn read_gray16(path: &Path) -> Result<GrayImage16> {
    match read_pgm(path)? {
        PgmImage::Sixteen { width, height, data } => Ok(GrayImage16 { width, height, data }),
        PgmImage::Eight { .. } => Err(DatagenError::Parse {
            path: path.to_path_buf(),
            offset: 0,
            msg: "expected a 16-bit intensity image".to_string(),
        }),
    }
}

/// Loads the four files of one manifest entry back into a record.
pub fn read_slice(dir: &Path, entry: &RecordEntry) -> Result<SliceRecord> {
    let stir = read_gray16(&dir.join(&entry.paths.stir))?;
    let t1 = read_gray16(&dir.join(&entry.paths.t1))?;
    let t2 = read_gray16(&dir.join(&entry.paths.t2))?;
    let label_path = dir.join(&entry.paths.label);
    let label = match read_pgm(&label_path)? {
        PgmImage::Eight { width, height, data } => LabelImage { width, height, data },
        PgmImage::Sixteen { .. } => {
            return Err(DatagenError::Parse {
                path: label_path,
                offset: 0,
                msg: "expected an 8-bit label mask".to_string(),
            })
        }
    };
    for img in [&stir, &t1, &t2] {
        if (img.width, img.height) != (label.width, label.height) {
            return Err(DatagenError::Dim(format!(
                "record {}: modality {}x{} does not match label {}x{}",
                entry.id, img.width, img.height, label.width, label.height
            )));
        }
    }
    if let Some(&bad) = label.data.iter().find(|&&l| l > 2) {
        return Err(DatagenError::Parse {
            path: dir.join(&entry.paths.label),
            offset: 0,
            msg: format!("label value {} outside {{0,1,2}}", bad),
        });
    }
    Ok(SliceRecord { stir, t1, t2, label, center: entry.center, side: entry.side })
}

pub fn save_manifest(manifest: &DatasetManifest, dir: &Path) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| DatagenError::Config(format!("manifest serialization: {e}")))?;
    std::fs::write(&path, json).map_err(io_err(&path))?;
    Ok(path)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| DatagenError::Parse {
        path: path.to_path_buf(),
        offset: e.column(),
        msg: e.to_string(),
    })
}

/// Generates `count` slices, writes them under `dir` and splits 80/20 into
/// train/test, stratified per center. The whole dataset is a pure function
/// of `(config, seed)`.
pub fn make_dataset(config: &DataConfig, seed: u64, dir: &Path) -> Result<DatasetManifest> {
    if config.count < 10 {
        return Err(DatagenError::Config(format!("need at least 10 slices, got {}", config.count)));
    }
    if (config.center_mix[0] + config.center_mix[1] - 1.0).abs() > 1e-9
        || config.center_mix.iter().any(|&f| f < 0.0)
    {
        return Err(DatagenError::Config(format!(
            "center mixture {:?} must be non-negative and sum to 1",
            config.center_mix
        )));
    }
    config.spec.validate()?;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    // floor for center 1, remainder to center 2
    let n1 = (config.count as f64 * config.center_mix[0]).floor() as usize;
    let mut records = Vec::with_capacity(config.count);
    for id in 0..config.count as u32 {
        let center = if (id as usize) < n1 { &config.centers[0] } else { &config.centers[1] };
        let record = generate_slice(&config.spec, center, mix_seed(seed, id as u64))?;
        let paths = write_slice(&record, dir, id)?;
        records.push(RecordEntry { id, center: center.id, side: record.side, split: Split::Train, paths });
    }

    // stratified 80/20: shuffle each center group, first fifth to test
    for (group_idx, center) in config.centers.iter().enumerate() {
        let ids: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.center == center.id)
            .map(|(i, _)| i)
            .collect();
        let mut order = ids.clone();
        let mut rng = SeededRng::derive(seed, 0x5714 + group_idx as u64);
        rng.shuffle(&mut order);
        let n_test = (ids.len() as f64 * 0.2).round() as usize;
        for &i in order.iter().take(n_test) {
            records[i].split = Split::Test;
        }
    }

    let manifest = DatasetManifest { version: GENERATOR_VERSION, seed, records };
    save_manifest(&manifest, dir)?;
    Ok(manifest)
}
