//! Cosmetic-region label maps and per-region feature statistics.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Result, SamcError};
use crate::image::{read_png, write_png};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Region {
    Background = 0,
    Foundation = 1,
    EyeShadow = 2,
    Lip = 3,
}

impl Region {
    pub const COSMETIC: [Region; 3] = [Region::Foundation, Region::EyeShadow, Region::Lip];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Region> {
        match code {
            0 => Some(Region::Background),
            1 => Some(Region::Foundation),
            2 => Some(Region::EyeShadow),
            3 => Some(Region::Lip),
            _ => None,
        }
    }

    pub fn from_name(name: &str) -> Option<Region> {
        match name {
            "background" => Some(Region::Background),
            "foundation" => Some(Region::Foundation),
            "eye_shadow" | "eye-shadow" => Some(Region::EyeShadow),
            "lip" => Some(Region::Lip),
            _ => None,
        }
    }
}

/// Class codes of the face-parsing maps this crate reads and writes.
pub mod parse_class {
    pub const BACKGROUND: u8 = 0;
    pub const SKIN: u8 = 1;
    pub const LEFT_BROW: u8 = 2;
    pub const RIGHT_BROW: u8 = 3;
    pub const LEFT_EYE: u8 = 4;
    pub const RIGHT_EYE: u8 = 5;
    pub const NOSE: u8 = 6;
    pub const LEFT_EAR: u8 = 7;
    pub const RIGHT_EAR: u8 = 8;
    pub const MOUTH: u8 = 9;
    pub const UPPER_LIP: u8 = 10;
    pub const LOWER_LIP: u8 = 11;
    pub const HAIR: u8 = 12;
    pub const NECK: u8 = 13;
    pub const PERIOCULAR: u8 = 14;
}

/// Parser class -> cosmetic region table. Codes missing from the table map to
/// background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMapping {
    table: BTreeMap<u8, Region>,
}

impl Default for RegionMapping {
    fn default() -> Self {
        use parse_class::*;
        let mut table = BTreeMap::new();
        for c in [BACKGROUND, MOUTH, HAIR, NECK] {
            table.insert(c, Region::Background);
        }
        for c in [SKIN, NOSE, LEFT_EAR, RIGHT_EAR] {
            table.insert(c, Region::Foundation);
        }
        for c in [LEFT_EYE, RIGHT_EYE, LEFT_BROW, RIGHT_BROW, PERIOCULAR] {
            table.insert(c, Region::EyeShadow);
        }
        for c in [UPPER_LIP, LOWER_LIP] {
            table.insert(c, Region::Lip);
        }
        RegionMapping { table }
    }
}

impl RegionMapping {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u8, Region)>) -> Self {
        RegionMapping {
            table: pairs.into_iter().collect(),
        }
    }

    /// Parse `code region` lines (region one of background, foundation,
    /// eye_shadow, lip); `#` starts a comment.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |reason: String| SamcError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let mut it = line.split_whitespace();
            let code = it
                .next()
                .and_then(|c| c.parse::<u8>().ok())
                .ok_or_else(|| perr("expected a class code 0-255".into()))?;
            let region = it
                .next()
                .and_then(Region::from_name)
                .ok_or_else(|| perr("expected a region name".into()))?;
            table.insert(code, region);
        }
        Ok(RegionMapping { table })
    }

    pub fn region_of(&self, code: u8) -> Option<Region> {
        self.table.get(&code).copied()
    }
}

/// Raw face-parsing output: one class code per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseMap {
    pub height: usize,
    pub width: usize,
    pub codes: Vec<u8>,
}

impl ParseMap {
    pub fn new(height: usize, width: usize, codes: Vec<u8>) -> Result<Self> {
        if codes.len() != height * width {
            return Err(SamcError::Shape(format!(
                "parse map has {} codes, expected {height}x{width}",
                codes.len()
            )));
        }
        Ok(ParseMap {
            height,
            width,
            codes,
        })
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let (w, h, codes) = read_png(path, png::ColorType::Grayscale)?;
        ParseMap::new(h, w, codes)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        write_png(path, self.width, self.height, png::ColorType::Grayscale, &self.codes)
    }
}

/// Per-pixel cosmetic region codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionLabelMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl RegionLabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(SamcError::Shape(format!(
                "label map has {} entries, expected {height}x{width}",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 3) {
            return Err(SamcError::Shape(format!("invalid region code {bad}")));
        }
        Ok(RegionLabelMap {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, region: Region) -> Self {
        RegionLabelMap {
            height,
            width,
            labels: vec![region.code(); height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> Region {
        Region::from_code(self.labels[row * self.width + col]).expect("validated code")
    }

    pub fn count(&self, region: Region) -> usize {
        self.labels.iter().filter(|&&l| l == region.code()).count()
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let (w, h, labels) = read_png(path, png::ColorType::Grayscale)?;
        RegionLabelMap::new(h, w, labels).map_err(|e| SamcError::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        write_png(path, self.width, self.height, png::ColorType::Grayscale, &self.labels)
    }
}

/// Class codes that had no entry in the mapping, with their pixel counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MergeReport {
    pub unmapped: BTreeMap<u8, usize>,
}

pub fn merge_parsing_labels(raw: &ParseMap, mapping: &RegionMapping) -> (RegionLabelMap, MergeReport) {
    let mut report = MergeReport::default();
    let labels = raw
        .codes
        .iter()
        .map(|&c| match mapping.region_of(c) {
            Some(r) => r.code(),
            None => {
                *report.unmapped.entry(c).or_default() += 1;
                Region::Background.code()
            }
        })
        .collect();
    for (code, n) in &report.unmapped {
        log::warn!("parse class {code} has no region mapping; {n} pixels set to background");
    }
    (
        RegionLabelMap {
            height: raw.height,
            width: raw.width,
            labels,
        },
        report,
    )
}

/// Nearest-neighbour resampling: output pixel `i` reads input pixel
/// `floor((i + 0.5) * in / out)`.
pub fn resize_label_map(labels: &RegionLabelMap, out_h: usize, out_w: usize) -> RegionLabelMap {
    assert!(out_h >= 1 && out_w >= 1, "label map size must be positive");
    let src = |i: usize, out: usize, inn: usize| (((2 * i + 1) * inn) / (2 * out)).min(inn - 1);
    let mut out = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        let sr = src(r, out_h, labels.height);
        for c in 0..out_w {
            out.push(labels.labels[sr * labels.width + src(c, out_w, labels.width)]);
        }
    }
    RegionLabelMap {
        height: out_h,
        width: out_w,
        labels: out,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
    pub pixel_count: usize,
}

/// Per-channel mean and population standard deviation of sample `sample` of
/// `features` over the pixels labelled `region`. An empty region yields zeros.
pub fn region_statistics<T: Scalar>(
    features: &Tensor<T>,
    sample: usize,
    labels: &RegionLabelMap,
    region: Region,
) -> Result<RegionStats<T>> {
    if (features.h, features.w) != (labels.height, labels.width) {
        return Err(SamcError::Shape(format!(
            "features are {}x{} but labels are {}x{}",
            features.h, features.w, labels.height, labels.width
        )));
    }
    if sample >= features.n {
        return Err(SamcError::Shape(format!(
            "sample {sample} out of range for batch of {}",
            features.n
        )));
    }
    let code = region.code();
    let idx: Vec<usize> = (0..labels.labels.len())
        .filter(|&i| labels.labels[i] == code)
        .collect();
    let mut stats = RegionStats {
        mean: vec![T::zero(); features.c],
        std: vec![T::zero(); features.c],
        pixel_count: idx.len(),
    };
    if idx.is_empty() {
        return Ok(stats);
    }
    let inv_n = T::lit(1.0 / idx.len() as f64);
    for ch in 0..features.c {
        let plane = features.plane_slice(ch, sample);
        let mean = idx.iter().map(|&i| plane[i]).sum::<T>() * inv_n;
        let var = idx
            .iter()
            .map(|&i| (plane[i] - mean) * (plane[i] - mean))
            .sum::<T>()
            * inv_n;
        stats.mean[ch] = mean;
        stats.std[ch] = var.sqrt();
    }
    Ok(stats)
}
