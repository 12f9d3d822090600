//! Verification-via-generation metrics: cosine matching, rank-1
//! identification and TPR at fixed FPR on a step-function ROC.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::PairedSample;
use crate::error::{Result, SamcError};
use crate::image::{images_to_tensor, ImageTensor};
use crate::models::{Extractor, ModelParams, Networks};

/// Target false-positive rates reported alongside rank-1.
pub const FPR_TARGETS: [f64; 2] = [0.001, 0.01];
pub const REPORT_FIELDS: [&str; 6] = [
    "rank1",
    "tpr_at_fpr_0.1pct",
    "tpr_at_fpr_1pct",
    "baseline_rank1",
    "baseline_tpr_0.1pct",
    "baseline_tpr_1pct",
];
/// Published CMF rank-1 figures (baseline, with generation); recorded as
/// context only, not reproducible on synthetic data.
pub const REFERENCE_RANK1: (f64, f64) = (91.92, 94.04);

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SamcError::Shape(format!(
            "embedding dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(SamcError::ZeroNorm);
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

/// An embedding tagged with its identity.
#[derive(Clone, Copy, Debug)]
pub struct Labeled<'a> {
    pub embedding: &'a [f64],
    pub identity: &'a str,
}

fn gallery_index<'a>(gallery: &[Labeled<'a>]) -> Result<BTreeMap<&'a str, usize>> {
    let mut index = BTreeMap::new();
    for (i, g) in gallery.iter().enumerate() {
        if index.insert(g.identity, i).is_some() {
            return Err(SamcError::Metric(format!(
                "gallery identity `{}` appears more than once",
                g.identity
            )));
        }
    }
    Ok(index)
}

/// Percentage of probes whose most similar gallery entry has their identity.
/// Ties go to the lowest gallery index.
pub fn rank1_accuracy(probes: &[Labeled], gallery: &[Labeled]) -> Result<f64> {
    if probes.is_empty() {
        return Err(SamcError::Metric("no probes".into()));
    }
    let index = gallery_index(gallery)?;
    let mut hits = 0usize;
    for p in probes {
        if !index.contains_key(p.identity) {
            return Err(SamcError::Metric(format!(
                "probe identity `{}` is absent from the gallery",
                p.identity
            )));
        }
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, g) in gallery.iter().enumerate() {
            let s = cosine_similarity(p.embedding, g.embedding)?;
            if s > best.0 {
                best = (s, i);
            }
        }
        if gallery[best.1].identity == p.identity {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / probes.len() as f64)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredPairSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoredPairSet {
    /// Every probe against every gallery entry: same identity is genuine,
    /// everything else impostor.
    pub fn from_embeddings(probes: &[Labeled], gallery: &[Labeled]) -> Result<Self> {
        gallery_index(gallery)?;
        let mut set = ScoredPairSet::default();
        for p in probes {
            for g in gallery {
                let s = cosine_similarity(p.embedding, g.embedding)?;
                if p.identity == g.identity {
                    set.genuine.push(s);
                } else {
                    set.impostor.push(s);
                }
            }
        }
        Ok(set)
    }

    pub fn mean_genuine(&self) -> f64 {
        self.genuine.iter().sum::<f64>() / self.genuine.len().max(1) as f64
    }
}

fn count_at_least(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|&v| v < t)
}

/// TPR (percent) at each target FPR. The threshold for target `f` is the
/// smallest candidate `t` with `#{impostor >= t} / #impostor <= f`, where the
/// candidates are every observed score plus `+inf`.
pub fn tpr_at_fpr(scores: &ScoredPairSet, fpr_targets: &[f64]) -> Result<Vec<f64>> {
    if scores.genuine.is_empty() || scores.impostor.is_empty() {
        return Err(SamcError::Metric(
            "TPR@FPR needs at least one genuine and one impostor score".into(),
        ));
    }
    if scores.genuine.iter().chain(&scores.impostor).any(|v| !v.is_finite()) {
        return Err(SamcError::Metric("scores must be finite".into()));
    }
    let sort = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let genuine = sort(&scores.genuine);
    let impostor = sort(&scores.impostor);
    let mut candidates: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates.push(f64::INFINITY);
    let n_imp = impostor.len() as f64;

    fpr_targets
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f < 1.0) {
                return Err(SamcError::Metric(format!("FPR target {f} is not in (0, 1)")));
            }
            // FPR is non-increasing along the sorted candidates.
            let k = candidates.partition_point(|&t| count_at_least(&impostor, t) as f64 / n_imp > f);
            let t = candidates[k];
            Ok(100.0 * count_at_least(&genuine, t) as f64 / genuine.len() as f64)
        })
        .collect()
}

/// One row of the verification table.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VerificationRow {
    pub rank1: f64,
    pub tpr_01pct: f64,
    pub tpr_1pct: f64,
    pub mean_genuine: f64,
}

impl VerificationRow {
    pub fn compute(probes: &[Labeled], gallery: &[Labeled]) -> Result<Self> {
        let rank1 = rank1_accuracy(probes, gallery)?;
        let pairs = ScoredPairSet::from_embeddings(probes, gallery)?;
        let tpr = tpr_at_fpr(&pairs, &FPR_TARGETS)?;
        Ok(VerificationRow {
            rank1,
            tpr_01pct: tpr[0],
            tpr_1pct: tpr[1],
            mean_genuine: pairs.mean_genuine(),
        })
    }
}

/// Generated-versus-baseline verification results.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub generated: VerificationRow,
    pub baseline: VerificationRow,
    pub checkpoint: String,
    /// Architecture and extractor identifier of the evaluated model.
    pub fingerprint: String,
    pub probes: usize,
}

impl EvalReport {
    /// `key=value` lines with the six metric fields; `#` lines carry
    /// metadata that downstream parsers may ignore.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# checkpoint={}", self.checkpoint);
        let _ = writeln!(s, "# fingerprint={}", self.fingerprint);
        let _ = writeln!(s, "# probes={}", self.probes);
        let _ = writeln!(s, "# mean_genuine_cosine={}", self.generated.mean_genuine);
        let _ = writeln!(s, "# baseline_mean_genuine_cosine={}", self.baseline.mean_genuine);
        let _ = writeln!(
            s,
            "# reference_cmf_rank1 baseline={} generated={} (published, not reproducible here)",
            REFERENCE_RANK1.0, REFERENCE_RANK1.1
        );
        let values = self.metric_values();
        for (k, v) in REPORT_FIELDS.iter().zip(values) {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn metric_values(&self) -> [f64; 6] {
        let (g, b) = (&self.generated, &self.baseline);
        [g.rank1, g.tpr_01pct, g.tpr_1pct, b.rank1, b.tpr_01pct, b.tpr_1pct]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| SamcError::io(path, e))
    }
}

/// A makeup probe and the same identity's non-makeup gallery image.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPair {
    pub identity: String,
    pub x: ImageTensor,
    pub y: ImageTensor,
}

impl EvalPair {
    pub fn load(s: &PairedSample) -> Result<Self> {
        Ok(EvalPair {
            identity: s.identity.clone(),
            x: ImageTensor::load_png(&s.x)?,
            y: ImageTensor::load_png(&s.y)?,
        })
    }
}

/// Extractor embeddings of `images`, in order.
pub fn embed_images(extractor: &Extractor<f32>, images: &[&ImageTensor]) -> Result<Vec<Vec<f64>>> {
    let dim = extractor.embedding_dim();
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(16) {
        let t = extractor.forward(&images_to_tensor::<f32>(chunk)?)?;
        out.extend(t.embedding.chunks(dim).map(|e| e.iter().map(|&v| v as f64).collect::<Vec<f64>>()));
    }
    Ok(out)
}

fn label<'a>(embs: &'a [Vec<f64>], pairs: &'a [EvalPair]) -> Vec<Labeled<'a>> {
    embs.iter()
        .zip(pairs)
        .map(|(e, p)| Labeled {
            embedding: e,
            identity: &p.identity,
        })
        .collect()
}

/// Match generated images `G(X)` (and, as the baseline, raw `X`) against a
/// gallery holding every pair's `Y`.
pub fn verification_via_generation(
    nets: &Networks,
    params: &ModelParams<f32>,
    pairs: &[EvalPair],
    extractor: &Extractor<f32>,
    checkpoint: &str,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(SamcError::Metric("no evaluation pairs".into()));
    }
    let xs: Vec<&ImageTensor> = pairs.iter().map(|p| &p.x).collect();
    let ys: Vec<&ImageTensor> = pairs.iter().map(|p| &p.y).collect();
    let zs = nets.remove_makeup(params, &xs)?;
    let gallery_emb = embed_images(extractor, &ys)?;
    let base_emb = embed_images(extractor, &xs)?;
    let gen_emb = embed_images(extractor, &zs.iter().collect::<Vec<_>>())?;
    let gallery = label(&gallery_emb, pairs);
    Ok(EvalReport {
        generated: VerificationRow::compute(&label(&gen_emb, pairs), &gallery)?,
        baseline: VerificationRow::compute(&label(&base_emb, pairs), &gallery)?,
        checkpoint: checkpoint.to_string(),
        fingerprint: nets.fingerprint(&extractor.fingerprint()),
        probes: pairs.len(),
    })
}

/// Parse the metric fields of a report (metadata comments are skipped).
pub fn parse_report(text: &str, path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |reason: String| SamcError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| perr("expected key=value".into()))?;
        let v: f64 = v.trim().parse().map_err(|_| perr(format!("`{v}` is not a number")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}
