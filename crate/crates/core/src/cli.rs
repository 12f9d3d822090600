//! Operator commands behind the `samc` binary. Argument parsing lives in the
//! binary; everything here takes already-typed options.

use std::path::{Path, PathBuf};

use log::info;

use crate::data::{load_manifest, load_training_set, synthesize_fixture_dataset, FIXTURE_SIZES};
use crate::error::SamcError;
use crate::evaluation::{verification_via_generation, EvalPair, EvalReport};
use crate::image::ImageTensor;
use crate::losses::LossFlags;
use crate::models::{Extractor, ExtractorSource};
use crate::regions::RegionMapping;
use crate::training::{fit, load_checkpoint, load_checkpoint_matching, FitOutcome, TrainConfig, TrainState};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or configuration; maps to exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] SamcError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn usage(e: SamcError) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Training options: every [`TrainConfig`] key plus data locations and
/// ablation switches, read from `key=value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CliConfig {
    pub train: TrainConfig,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Preprocessing cache; defaults to `<out>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub disable_loss: Vec<String>,
}

impl CliConfig {
    pub const EXTRA_KEYS: [&'static str; 4] = ["manifest", "out", "cache_dir", "disable_loss"];

    pub fn set(&mut self, key: &str, value: &str) -> crate::Result<()> {
        match key {
            "manifest" => self.manifest = Some(value.into()),
            "out" => self.out = Some(value.into()),
            "cache_dir" => self.cache_dir = Some(value.into()),
            "disable_loss" => self.disable_loss.extend(
                value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from),
            ),
            _ => self.train.set(key, value)?,
        }
        Ok(())
    }

    /// Parse a configuration file body. Relative paths are taken as given.
    pub fn parse(text: &str, path: &Path) -> crate::Result<Self> {
        let mut c = CliConfig::default();
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
            let (k, v) = line.split_once('=').ok_or_else(|| perr("expected key=value".into()))?;
            c.set(k.trim(), v.trim()).map_err(|e| perr(e.to_string()))?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SamcError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// The training configuration with ablations applied.
    pub fn effective(&self) -> crate::Result<TrainConfig> {
        let mut t = self.train.clone();
        let off = LossFlags::without(&self.disable_loss.join(","))?;
        t.losses = LossFlags {
            adv: t.losses.adv && off.adv,
            id: t.losses.id && off.id,
            rec: t.losses.rec && off.rec,
            sat: t.losses.sat && off.sat,
        };
        t.validate()?;
        Ok(t)
    }
}

pub fn cmd_fixtures(seed: u64, count: usize, size: usize, out: &Path) -> CliResult<PathBuf> {
    if !FIXTURE_SIZES.contains(&size) {
        return Err(CliError::Usage(format!(
            "--size {size} is not one of {FIXTURE_SIZES:?}"
        )));
    }
    if count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    Ok(synthesize_fixture_dataset(seed, count, size, out)?)
}

/// Preprocess, then train. `overrides` are applied after the file, in order.
pub fn cmd_train(
    config_file: Option<&Path>,
    overrides: &[(String, String)],
    resume: Option<&Path>,
) -> CliResult<FitOutcome> {
    let mut cfg = match config_file {
        Some(p) => CliConfig::load(p).map_err(CliError::usage)?,
        None => CliConfig::default(),
    };
    for (k, v) in overrides {
        cfg.set(k, v).map_err(CliError::usage)?;
    }
    let train = cfg.effective().map_err(CliError::usage)?;
    let manifest = cfg
        .manifest
        .clone()
        .ok_or_else(|| CliError::Usage("no manifest given (--manifest or `manifest=` in the config)".into()))?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory given (--out or `out=` in the config)".into()))?;
    let cache = cfg.cache_dir.clone().unwrap_or_else(|| out.join("cache"));
    let extractor = Extractor::<f32>::from_source(&train.extractor)?;
    let data = load_training_set(&manifest, &cache, &RegionMapping::default())?;
    info!("{} training pairs, losses {}", data.len(), train.losses);
    std::fs::create_dir_all(&out).map_err(|e| SamcError::io(&out, e))?;
    let cfg_path = out.join("config.txt");
    std::fs::write(&cfg_path, train.to_text()).map_err(|e| SamcError::io(&cfg_path, e))?;
    Ok(fit(&data, &train, &extractor, &out, resume)?)
}

/// Run G and A on one image; writes Z, the raw attention map and an overlay
/// (`<attention stem>_overlay.png`). Returns the overlay path.
pub fn cmd_demakeup(checkpoint: &Path, input: &Path, output: &Path, attention_out: &Path) -> CliResult<PathBuf> {
    let state = load_checkpoint(checkpoint)?;
    let x = ImageTensor::load_png(input)?;
    let z = state.nets.remove_makeup(&state.params, &[&x])?;
    let a = state.nets.attention_maps(&state.params, &[&x])?;
    z[0].save_png(output)?;
    a[0].save_png(attention_out)?;
    let stem = attention_out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "attention".into());
    let overlay_path = attention_out.with_file_name(format!("{stem}_overlay.png"));
    a[0].overlay(&x)?.save_png(&overlay_path)?;
    Ok(overlay_path)
}

fn eval_state(checkpoint: &Path, extractor: Option<&ExtractorSource>) -> CliResult<(TrainState, Extractor<f32>)> {
    let peek = load_checkpoint(checkpoint)?;
    let source = extractor.cloned().unwrap_or_else(|| peek.config.extractor.clone());
    let ext = Extractor::<f32>::from_source(&source)?;
    let expected = peek.nets.fingerprint(&ext.fingerprint());
    let state = load_checkpoint_matching(checkpoint, &expected)?;
    Ok((state, ext))
}

pub fn cmd_eval(
    checkpoint: &Path,
    manifest: &Path,
    report: &Path,
    extractor: Option<&ExtractorSource>,
) -> CliResult<EvalReport> {
    let (state, ext) = eval_state(checkpoint, extractor)?;
    let pairs = load_manifest(manifest)?
        .iter()
        .map(EvalPair::load)
        .collect::<crate::Result<Vec<_>>>()?;
    let r = verification_via_generation(
        &state.nets,
        &state.params,
        &pairs,
        &ext,
        &checkpoint.display().to_string(),
    )?;
    if let Some(dir) = report.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| SamcError::io(dir, e))?;
    }
    r.save(report)?;
    Ok(r)
}
