use serde::{Deserialize, Serialize};
use swinseg_tensor::rng::SeededRng;

use crate::image::{GrayImage16, LabelImage};
use crate::{DatagenError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    fn sample(&self, rng: &mut SeededRng) -> f64 {
        rng.uniform_in(self.lo, self.hi)
    }
}

/// Region intensities (fractions of full scale) for one modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityContrast {
    pub background: f64,
    pub gland: f64,
    pub tumor: f64,
}

impl ModalityContrast {
    fn level(&self, label: u8) -> f64 {
        match label {
            0 => self.background,
            1 => self.gland,
            _ => self.tumor,
        }
    }
}

/// Geometry ranges and the per-modality contrast table of the phantom
/// distribution. All lengths are fractions of the image height so one spec
/// scales across desk sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub height: usize,
    /// Full-slice width holding both glands; split in half for training.
    pub width: usize,
    pub gland_axis_x: Range,
    pub gland_axis_y: Range,
    pub gland_rotation: Range,
    /// Center jitter as a fraction of height.
    pub gland_center_jitter: f64,
    /// Tumor radius as a fraction of the smaller gland semi-axis.
    pub tumor_radius: Range,
    pub stir: ModalityContrast,
    pub t1: ModalityContrast,
    pub t2: ModalityContrast,
    /// The T2-like channel carries this multiple of the center noise.
    pub t2_noise_factor: f64,
    pub max_placement_retries: usize,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            height: 64,
            width: 128,
            gland_axis_x: Range::new(0.22, 0.32),
            gland_axis_y: Range::new(0.26, 0.36),
            gland_rotation: Range::new(-0.5, 0.5),
            gland_center_jitter: 0.05,
            tumor_radius: Range::new(0.50, 0.68),
            // complementary construction: tumor/gland contrast lives in the
            // STIR-like channel, gland/background contrast in the T1-like
            // channel, the T2-like channel is partially redundant and noisy
            stir: ModalityContrast { background: 0.35, gland: 0.40, tumor: 0.85 },
            t1: ModalityContrast { background: 0.15, gland: 0.70, tumor: 0.72 },
            t2: ModalityContrast { background: 0.40, gland: 0.53, tumor: 0.64 },
            t2_noise_factor: 2.5,
            max_placement_retries: 64,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    /// A deliberately different geometry/contrast regime for pretext
    /// pretraining: the same kind of task (bright lesion inside a gland)
    /// with disjoint shapes, levels and noise, so encoder features carry
    /// over without matching the target distribution.
    pub fn pretext() -> Self {
        PhantomSpec {
            gland_axis_x: Range::new(0.28, 0.38),
            gland_axis_y: Range::new(0.18, 0.28),
            gland_rotation: Range::new(-1.2, 1.2),
            tumor_radius: Range::new(0.36, 0.52),
            stir: ModalityContrast { background: 0.25, gland: 0.33, tumor: 0.72 },
            t1: ModalityContrast { background: 0.25, gland: 0.62, tumor: 0.66 },
            t2: ModalityContrast { background: 0.33, gland: 0.47, tumor: 0.58 },
            t2_noise_factor: 1.5,
            ..PhantomSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 16 || self.width % 2 != 0 {
            return Err(DatagenError::Config(format!(
                "image {}x{} must be at least 16x8 with even width",
                self.width, self.height
            )));
        }
        for c in [&self.stir, &self.t1, &self.t2] {
            for v in [c.background, c.gland, c.tumor] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(DatagenError::Config(format!("intensity {} outside [0,1]", v)));
                }
            }
        }
        Ok(())
    }
}

/// One imaging site: a systematic intensity transform plus noise level.
/// The gamma warp is deliberately non-affine so the gap between centers
/// survives the networks' normalization layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CenterProfile {
    pub id: u8,
    pub noise_sigma: f64,
    pub gain: f64,
    pub offset: f64,
    /// Box-blur width in pixels (0 or 1 disables), simulating slice
    /// thickness and equipment differences.
    pub blur_width: usize,
    /// Intensity curve exponent applied before gain/offset.
    pub gamma: f64,
    /// Per-tissue response multipliers `[background, gland, tumor]`,
    /// modeling sequence-weighting differences between sites. These move
    /// the relative tissue levels, which normalization layers cannot undo,
    /// so they carry the cross-center generalization gap.
    pub tissue_response: [f64; 3],
}

impl Default for CenterProfile {
    fn default() -> Self {
        CenterProfile::center1()
    }
}

impl CenterProfile {
    pub fn center1() -> Self {
        CenterProfile {
            id: 1,
            noise_sigma: 0.02,
            gain: 1.0,
            offset: 0.0,
            blur_width: 0,
            gamma: 1.0,
            tissue_response: [1.0, 1.0, 1.0],
        }
    }

    pub fn center2() -> Self {
        CenterProfile {
            id: 2,
            noise_sigma: 0.03,
            gain: 0.9,
            offset: 0.10,
            blur_width: 0,
            gamma: 1.15,
            tissue_response: [1.6, 0.75, 0.95],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// One synthetic slice: three aligned modality images, the label mask
/// (0 background, 1 gland, 2 tumor), the originating center and the side
/// holding the tumor.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceRecord {
    pub stir: GrayImage16,
    pub t1: GrayImage16,
    pub t2: GrayImage16,
    pub label: LabelImage,
    pub center: u8,
    pub side: Side,
}

impl SliceRecord {
    pub fn width(&self) -> usize {
        self.label.width
    }

    pub fn height(&self) -> usize {
        self.label.height
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cy: f64,
    cx: f64,
    ax: f64,
    ay: f64,
    rot: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let (s, c) = self.rot.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.ax).powi(2) + (v / self.ay).powi(2) <= 1.0
    }
}

fn sample_gland(rng: &mut SeededRng, spec: &PhantomSpec, center_x: f64) -> Ellipse {
    let h = spec.height as f64;
    let jitter = spec.gland_center_jitter * h;
    Ellipse {
        cy: h / 2.0 + rng.uniform_in(-jitter, jitter),
        cx: center_x + rng.uniform_in(-jitter, jitter),
        ax: spec.gland_axis_x.sample(rng) * h,
        ay: spec.gland_axis_y.sample(rng) * h,
        rot: spec.gland_rotation.sample(rng),
    }
}

/// Circle fully inside the gland, checked on sampled boundary points.
fn tumor_fits(gland: &Ellipse, cy: f64, cx: f64, r: f64) -> bool {
    (0..16).all(|k| {
        let theta = k as f64 * std::f64::consts::TAU / 16.0;
        gland.contains(cy + r * theta.sin(), cx + r * theta.cos())
    })
}

fn box_blur(data: &mut Vec<f64>, width: usize, height: usize, k: usize) {
    if k < 2 {
        return;
    }
    let r = (k / 2) as i64;
    let mut tmp = vec![0.0; data.len()];
    // horizontal pass
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            let mut count = 0.0;
            for d in -r..=r {
                let xx = x as i64 + d;
                if xx >= 0 && xx < width as i64 {
                    acc += data[y * width + xx as usize];
                    count += 1.0;
                }
            }
            tmp[y * width + x] = acc / count;
        }
    }
    // vertical pass
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            let mut count = 0.0;
            for d in -r..=r {
                let yy = y as i64 + d;
                if yy >= 0 && yy < height as i64 {
                    acc += tmp[yy as usize * width + x];
                    count += 1.0;
                }
            }
            data[y * width + x] = acc / count;
        }
    }
}

/// Renders one slice. Bit-deterministic for fixed `(spec, center, seed)`.
pub fn generate_slice(spec: &PhantomSpec, center: &CenterProfile, seed: u64) -> Result<SliceRecord> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = SeededRng::new(seed);

    let side = if rng.flip() { Side::Right } else { Side::Left };
    let left = sample_gland(&mut rng, spec, w as f64 / 4.0);
    let right = sample_gland(&mut rng, spec, 3.0 * w as f64 / 4.0);
    let host = match side {
        Side::Left => left,
        Side::Right => right,
    };

    let r = spec.tumor_radius.sample(&mut rng) * host.ax.min(host.ay);
    let mut tumor = None;
    for _ in 0..spec.max_placement_retries {
        let cy = host.cy + rng.uniform_in(-host.ay, host.ay);
        let cx = host.cx + rng.uniform_in(-host.ax, host.ax);
        if tumor_fits(&host, cy, cx, r) {
            tumor = Some((cy, cx));
            break;
        }
    }
    let (tcy, tcx) = tumor.ok_or_else(|| {
        DatagenError::Geometry(format!(
            "no tumor placement inside the gland after {} attempts (seed {})",
            spec.max_placement_retries, seed
        ))
    })?;

    let mut label = LabelImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (yf, xf) = (y as f64, x as f64);
            let in_gland = left.contains(yf, xf) || right.contains(yf, xf);
            // tumor pixels only ever appear inside the host gland
            let l = if in_gland && host.contains(yf, xf) && (yf - tcy).powi(2) + (xf - tcx).powi(2) <= r * r {
                2
            } else if in_gland {
                1
            } else {
                0
            };
            label.data[y * w + x] = l;
        }
    }

    let render = |contrast: &ModalityContrast, sigma: f64, rng: &mut SeededRng| -> GrayImage16 {
        let mut field: Vec<f64> = label
            .data
            .iter()
            .map(|&l| (contrast.level(l) * center.tissue_response[l as usize]).clamp(0.0, 1.0))
            .collect();
        box_blur(&mut field, w, h, center.blur_width);
        let mut img = GrayImage16::new(w, h);
        for (dst, v) in img.data.iter_mut().zip(field) {
            let warped = v.max(0.0).powf(center.gamma);
            let noisy = center.gain * warped + center.offset + sigma * rng.normal();
            *dst = (noisy.clamp(0.0, 1.0) * u16::MAX as f64).round() as u16;
        }
        img
    };
    let stir = render(&spec.stir, center.noise_sigma, &mut rng);
    let t1 = render(&spec.t1, center.noise_sigma, &mut rng);
    let t2 = render(&spec.t2, center.noise_sigma * spec.t2_noise_factor, &mut rng);

    Ok(SliceRecord { stir, t1, t2, label, center: center.id, side })
}

fn half_image16(img: &GrayImage16, x0: usize, half_w: usize) -> GrayImage16 {
    let mut out = GrayImage16::new(half_w, img.height);
    for y in 0..img.height {
        out.data[y * half_w..(y + 1) * half_w]
            .copy_from_slice(&img.data[y * img.width + x0..y * img.width + x0 + half_w]);
    }
    out
}

fn half_label(img: &LabelImage, x0: usize, half_w: usize) -> LabelImage {
    let mut out = LabelImage::new(half_w, img.height);
    for y in 0..img.height {
        out.data[y * half_w..(y + 1) * half_w]
            .copy_from_slice(&img.data[y * img.width + x0..y * img.width + x0 + half_w]);
    }
    out
}

fn take_half(r: &SliceRecord, x0: usize, half_w: usize) -> SliceRecord {
    SliceRecord {
        stir: half_image16(&r.stir, x0, half_w),
        t1: half_image16(&r.t1, x0, half_w),
        t2: half_image16(&r.t2, x0, half_w),
        label: half_label(&r.label, x0, half_w),
        center: r.center,
        side: r.side,
    }
}

/// Splits a full slice at the midline into `(left, right)` halves in
/// spatial order, side-agnostic (the prediction path runs both).
pub fn split_halves(r: &SliceRecord) -> Result<(SliceRecord, SliceRecord)> {
    if r.width() % 2 != 0 {
        return Err(DatagenError::Dim(format!("width {} must be even to split", r.width())));
    }
    let half_w = r.width() / 2;
    Ok((take_half(r, 0, half_w), take_half(r, half_w, half_w)))
}

/// Splits a full slice at the midline into the labeled (tumor) half and the
/// discarded half: `(kept, discarded)`.
pub fn split_left_right(r: &SliceRecord) -> Result<(SliceRecord, SliceRecord)> {
    let (left, right) = split_halves(r)?;
    Ok(match r.side {
        Side::Left => (left, right),
        Side::Right => (right, left),
    })
}

/// Joins a left and right half back into a full-width record (inverse of the
/// split, given the halves in spatial order).
pub fn concat_halves(left: &SliceRecord, right: &SliceRecord) -> SliceRecord {
    assert_eq!(left.height(), right.height());
    let (hw, h) = (left.width(), left.height());
    let w = hw + right.width();
    let join16 = |a: &GrayImage16, b: &GrayImage16| -> GrayImage16 {
        let mut out = GrayImage16::new(w, h);
        for y in 0..h {
            out.data[y * w..y * w + hw].copy_from_slice(&a.data[y * hw..(y + 1) * hw]);
            out.data[y * w + hw..(y + 1) * w].copy_from_slice(&b.data[y * hw..(y + 1) * hw]);
        }
        out
    };
    let mut label = LabelImage::new(w, h);
    for y in 0..h {
        label.data[y * w..y * w + hw].copy_from_slice(&left.label.data[y * hw..(y + 1) * hw]);
        label.data[y * w + hw..(y + 1) * w].copy_from_slice(&right.label.data[y * hw..(y + 1) * hw]);
    }
    SliceRecord {
        stir: join16(&left.stir, &right.stir),
        t1: join16(&left.t1, &right.t1),
        t2: join16(&left.t2, &right.t2),
        label,
        center: left.center,
        side: left.side,
    }
}
