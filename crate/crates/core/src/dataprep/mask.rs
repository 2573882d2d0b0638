use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DataprepError;

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, DataprepError> {
        if bits.len() != width * height {
            return Err(DataprepError::InvalidMask(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    /// Mask with the half-open rectangle `[x0, x1) × [y0, y1)` set.
    pub fn from_rect(
        width: usize,
        height: usize,
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
    ) -> Self {
        let mut m = Self::empty(width, height);
        for y in y0.min(height)..y1.min(height) {
            for x in x0.min(width)..x1.min(width) {
                m.set(x, y, true);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Alternating run lengths over the row-major pixels, starting with a
    /// (possibly empty) background run.
    pub fn to_rle(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in &self.bits {
            if b != current {
                runs.push(len);
                current = b;
                len = 0;
            }
            len += 1;
        }
        runs.push(len);
        runs
    }

    pub fn from_rle(width: usize, height: usize, runs: &[u32]) -> Result<Self, DataprepError> {
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        if total != (width * height) as u64 {
            return Err(DataprepError::InvalidMask(format!(
                "run lengths sum to {total}, expected {}",
                width * height
            )));
        }
        let mut bits = Vec::with_capacity(width * height);
        for (i, &r) in runs.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
        }
        Self::new(width, height, bits)
    }

    /// Reads an 8-bit single-channel image; nonzero pixels are foreground.
    pub fn load_image(path: &Path) -> Result<Self, DataprepError> {
        let img = image::open(path)
            .map_err(|e| DataprepError::Io {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .to_luma8();
        let (w, h) = img.dimensions();
        let bits = img.as_raw().iter().map(|&v| v != 0).collect();
        Self::new(w as usize, h as usize, bits)
    }

    /// Writes as an 8-bit grayscale PNG (255 for foreground).
    pub fn save_image(&self, path: &Path) -> Result<(), DataprepError> {
        let raw: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .ok_or_else(|| DataprepError::InvalidMask("buffer size".into()))?;
        img.save(path).map_err(|e| DataprepError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Max-pools by `stride`: a cell is set if any covered pixel is set.
    /// Partial cells at the right/bottom edge are pooled over what exists.
    pub fn downsample_max(&self, stride: usize) -> BinaryMask {
        let stride = stride.max(1);
        let w = self.width.div_ceil(stride);
        let h = self.height.div_ceil(stride);
        let mut out = BinaryMask::empty(w, h);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.set(x / stride, y / stride, true);
                }
            }
        }
        out
    }
}

/// How a manifest refers to a mask: an image path (relative to the manifest)
/// or inline run-length encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskRef {
    Path(String),
    Inline {
        width: usize,
        height: usize,
        rle: Vec<u32>,
    },
}

impl MaskRef {
    pub fn inline(mask: &BinaryMask) -> Self {
        MaskRef::Inline {
            width: mask.width(),
            height: mask.height(),
            rle: mask.to_rle(),
        }
    }

    pub fn resolve(&self, base_dir: &Path) -> Result<BinaryMask, DataprepError> {
        match self {
            MaskRef::Path(p) => {
                let path = PathBuf::from(p);
                let full = if path.is_absolute() {
                    path
                } else {
                    base_dir.join(path)
                };
                BinaryMask::load_image(&full)
            }
            MaskRef::Inline { width, height, rle } => BinaryMask::from_rle(*width, *height, rle),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OcclusionMode {
    /// `1 − IoU`: zero for an unoccluded hand.
    #[default]
    Complement,
    /// The raw IoU.
    Literal,
}

pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, DataprepError> {
    if a.width != b.width || a.height != b.height {
        return Err(DataprepError::DimensionMismatch {
            left: (a.width, a.height),
            right: (b.width, b.height),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.bits.iter().zip(&b.bits) {
        inter += usize::from(*x && *y);
        union += usize::from(*x || *y);
    }
    if union == 0 {
        return Err(DataprepError::EmptyUnion);
    }
    Ok(inter as f64 / union as f64)
}

/// Occlusion proportion of the hand from its amodal and full masks.
pub fn occlusion_proportion(amodal: &BinaryMask, full: &BinaryMask) -> Result<f64, DataprepError> {
    occlusion_proportion_with(amodal, full, OcclusionMode::Complement)
}

pub fn occlusion_proportion_with(
    amodal: &BinaryMask,
    full: &BinaryMask,
    mode: OcclusionMode,
) -> Result<f64, DataprepError> {
    let iou = mask_iou(amodal, full)?;
    Ok(match mode {
        OcclusionMode::Complement => 1.0 - iou,
        OcclusionMode::Literal => iou,
    })
}
