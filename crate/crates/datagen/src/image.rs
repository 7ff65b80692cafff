/// Single-channel 16-bit intensity image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage16 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl GrayImage16 {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage16 { width, height, data: vec![0; width * height] }
    }

    /// Intensities as fractions of full scale.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64 / u16::MAX as f64).collect()
    }
}

/// Single-channel 8-bit label mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl LabelImage {
    pub fn new(width: usize, height: usize) -> Self {
        LabelImage { width, height, data: vec![0; width * height] }
    }

    pub fn class_histogram(&self, classes: usize) -> Vec<usize> {
        let mut hist = vec![0usize; classes];
        for &l in &self.data {
            if (l as usize) < classes {
                hist[l as usize] += 1;
            }
        }
        hist
    }
}
