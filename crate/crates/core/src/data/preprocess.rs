use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{Result, SamcError};
use crate::image::ImageTensor;
use crate::regions::{merge_parsing_labels, ParseMap, RegionMapping};
use crate::warp::{warp_ground_truth, KeypointSet};

use super::manifest::PairedSample;

/// Result of preprocessing one sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Preprocessed {
    Ready(PairedSample),
    /// Keypoints were unusable; the sample is left out of training.
    Skipped { identity: String, reason: String },
}

fn cache_stem(sample: &PairedSample) -> String {
    let x_stem = sample.x.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    format!("{}__{}", sample.identity, x_stem)
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn check_square(img: &ImageTensor, path: &Path) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    if h != w || !h.is_power_of_two() {
        return Err(SamcError::Image {
            path: path.to_path_buf(),
            reason: format!("{h}x{w} is not square with a power-of-two side"),
        });
    }
    Ok(())
}

/// Warp Y onto X's landmarks and merge both parse maps into cosmetic region
/// labels, writing `W`, `labels_X` and `labels_Y` under `out_dir`.
pub fn preprocess(sample: &PairedSample, out_dir: &Path, mapping: &RegionMapping) -> Result<Preprocessed> {
    let x = ImageTensor::load_png(&sample.x)?;
    let y = ImageTensor::load_png(&sample.y)?;
    check_square(&x, &sample.x)?;
    check_square(&y, &sample.y)?;
    if (x.height(), x.width()) != (y.height(), y.width()) {
        return Err(SamcError::Image {
            path: sample.y.clone(),
            reason: format!(
                "size {}x{} differs from the makeup image's {}x{}",
                y.height(),
                y.width(),
                x.height(),
                x.width()
            ),
        });
    }
    let parse_x = ParseMap::load_png(&sample.parse_x)?;
    let parse_y = ParseMap::load_png(&sample.parse_y)?;
    for (p, path) in [(&parse_x, &sample.parse_x), (&parse_y, &sample.parse_y)] {
        if (p.height, p.width) != (x.height(), x.width()) {
            return Err(SamcError::Image {
                path: path.clone(),
                reason: format!("parse map is {}x{}, image is {}x{}", p.height, p.width, x.height(), x.width()),
            });
        }
    }

    let skip = |reason: String| {
        warn!("skipping sample `{}`: {reason}", sample.identity);
        Ok(Preprocessed::Skipped {
            identity: sample.identity.clone(),
            reason,
        })
    };
    let kps = |p: &Path| -> Result<std::result::Result<KeypointSet, String>> {
        match KeypointSet::load(p) {
            Ok(k) => Ok(Ok(k)),
            Err(SamcError::Io { path, source }) => Err(SamcError::Io { path, source }),
            Err(e) => Ok(Err(e.to_string())),
        }
    };
    let kps_x = match kps(&sample.kps_x)? {
        Ok(k) => k,
        Err(reason) => return skip(reason),
    };
    let kps_y = match kps(&sample.kps_y)? {
        Ok(k) => k,
        Err(reason) => return skip(reason),
    };
    let w = match warp_ground_truth(&y, &kps_y, &kps_x) {
        Ok(w) => w,
        Err(e @ (SamcError::SingularSolve(_) | SamcError::Keypoints(_))) => return skip(e.to_string()),
        Err(e) => return Err(e),
    };
    let (labels_x, _) = merge_parsing_labels(&parse_x, mapping);
    let (labels_y, _) = merge_parsing_labels(&parse_y, mapping);

    std::fs::create_dir_all(out_dir).map_err(|e| SamcError::io(out_dir, e))?;
    let stem = cache_stem(sample);
    let path = |suffix: &str| -> PathBuf { out_dir.join(format!("{stem}_{suffix}.png")) };
    let mut out = sample.clone();
    let (wp, lxp, lyp) = (path("w"), path("labels_x"), path("labels_y"));
    w.save_png(&wp)?;
    labels_x.save_png(&lxp)?;
    labels_y.save_png(&lyp)?;
    out.w = Some(wp);
    out.labels_x = Some(lxp);
    out.labels_y = Some(lyp);
    Ok(Preprocessed::Ready(out))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PreprocessOutcome {
    pub ready: Vec<PairedSample>,
    pub skipped: Vec<(String, String)>,
}

/// Preprocess every sample whose cache files are not already present.
pub fn preprocess_all(samples: &[PairedSample], out_dir: &Path, mapping: &RegionMapping) -> Result<PreprocessOutcome> {
    let mut outcome = PreprocessOutcome::default();
    for s in samples {
        let cached = [&s.w, &s.labels_x, &s.labels_y]
            .iter()
            .all(|p| p.as_ref().is_some_and(|p| p.exists()));
        if cached {
            outcome.ready.push(s.clone());
            continue;
        }
        match preprocess(s, out_dir, mapping)? {
            Preprocessed::Ready(p) => outcome.ready.push(p),
            Preprocessed::Skipped { identity, reason } => outcome.skipped.push((identity, reason)),
        }
    }
    Ok(outcome)
}
