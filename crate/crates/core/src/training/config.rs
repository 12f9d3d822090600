use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, SamcError};
use crate::losses::{AdvForm, LossFlags};
use crate::models::{ExtractorSource, DEFAULT_BASE_CHANNELS, DEFAULT_DISC_BLOCKS};

pub const IMAGE_SIZES: [usize; 4] = [32, 64, 128, 256];

/// Hyper-parameters of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub image_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub max_steps: u64,
    pub seed: u64,
    pub losses: LossFlags,
    pub checkpoint_interval: u64,
    pub extractor: ExtractorSource,
    pub base_channels: usize,
    pub disc_blocks: usize,
    pub adv_form: AdvForm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            image_size: 64,
            batch_size: 8,
            learning_rate: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            max_steps: 2000,
            seed: 0,
            losses: LossFlags::default(),
            checkpoint_interval: 500,
            extractor: ExtractorSource::default(),
            base_channels: DEFAULT_BASE_CHANNELS,
            disc_blocks: DEFAULT_DISC_BLOCKS,
            adv_form: AdvForm::default(),
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 13] = [
        "image_size",
        "batch_size",
        "learning_rate",
        "adam_beta1",
        "adam_beta2",
        "max_steps",
        "seed",
        "losses",
        "checkpoint_interval",
        "extractor",
        "base_channels",
        "disc_blocks",
        "adv_form",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SamcError::Config(m));
        if !IMAGE_SIZES.contains(&self.image_size) {
            return bad(format!("image_size {} is not one of {IMAGE_SIZES:?}", self.image_size));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        for (k, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{k} {b} must lie in [0, 1)"));
            }
        }
        if self.base_channels == 0 {
            return bad("base_channels must be at least 1".into());
        }
        if self.disc_blocks == 0 || self.image_size >> self.disc_blocks == 0 {
            return bad(format!(
                "disc_blocks {} does not fit image_size {}",
                self.disc_blocks, self.image_size
            ));
        }
        Ok(())
    }

    /// Assign one `key=value` setting; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| SamcError::Config(format!("`{v}` is not a valid value for {key}")))
        }
        match key {
            "image_size" => self.image_size = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "adam_beta1" => self.adam_beta1 = num(key, value)?,
            "adam_beta2" => self.adam_beta2 = num(key, value)?,
            "max_steps" => self.max_steps = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "losses" => self.losses = value.parse()?,
            "checkpoint_interval" => self.checkpoint_interval = num(key, value)?,
            "extractor" => self.extractor = ExtractorSource::parse(value),
            "base_channels" => self.base_channels = num(key, value)?,
            "disc_blocks" => self.disc_blocks = num(key, value)?,
            "adv_form" => self.adv_form = value.parse()?,
            other => return Err(SamcError::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "image_size" => self.image_size.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "adam_beta1" => self.adam_beta1.to_string(),
            "adam_beta2" => self.adam_beta2.to_string(),
            "max_steps" => self.max_steps.to_string(),
            "seed" => self.seed.to_string(),
            "losses" => self.losses.to_string(),
            "checkpoint_interval" => self.checkpoint_interval.to_string(),
            "extractor" => self.extractor.describe(),
            "base_channels" => self.base_channels.to_string(),
            "disc_blocks" => self.disc_blocks.to_string(),
            "adv_form" => self.adv_form.to_string(),
            _ => return None,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in Self::KEYS {
            let _ = writeln!(s, "{k}={}", self.get(k).expect("known key"));
        }
        s
    }

    /// Parse `key=value` lines (`#` comments allowed) on top of the defaults.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut c = TrainConfig::default();
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
}
