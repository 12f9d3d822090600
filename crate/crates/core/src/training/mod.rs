//! Alternating optimisation of the discriminator and the generator /
//! attention pair, with seeded batching, checkpoints and a loss log.

mod adam;
mod checkpoint;
mod config;

pub use adam::{Adam, ADAM_EPS};
pub use checkpoint::{load_checkpoint, load_checkpoint_matching, save_checkpoint, CHECKPOINT_KIND};
pub use config::{TrainConfig, IMAGE_SIZES};

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::data::{batch_order, Batch, LoadedSample};
use crate::error::{Result, SamcError};
use crate::losses::{
    adversarial_loss_d_grad, adversarial_loss_g_grad, identity_loss_batch_grad, reconstruction_loss_grad,
    sat_loss_grad, total_generator_loss, LossBundle, LossComponents,
};
use crate::models::{Extractor, ModelParams, Networks};
use crate::regions::resize_label_map;
use crate::tensor::{Scalar, Tensor};

pub const LOSS_LOG: &str = "loss_log.txt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// Everything that evolves during training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub nets: Networks,
    pub params: ModelParams<f32>,
    pub adam_g: Adam<f32>,
    pub adam_a: Adam<f32>,
    pub adam_d: Adam<f32>,
    /// Completed steps.
    pub step: u64,
    /// Extractor identifier baked into the fingerprint.
    pub extractor_id: String,
}

impl TrainState {
    pub fn new(config: &TrainConfig, extractor: &Extractor<f32>) -> Result<Self> {
        config.validate()?;
        let (nets, params) = Networks::new::<f32>(
            config.image_size,
            config.base_channels,
            config.disc_blocks,
            config.seed,
        )?;
        Ok(TrainState {
            adam_g: Adam::new(&params.g),
            adam_a: Adam::new(&params.a),
            adam_d: Adam::new(&params.d),
            config: config.clone(),
            nets,
            params,
            step: 0,
            extractor_id: extractor.fingerprint(),
        })
    }

    pub fn fingerprint(&self) -> String {
        self.nets.fingerprint(&self.extractor_id)
    }

    /// Adversarial discriminator loss on real `y` and fake `z` with the
    /// current discriminator.
    pub fn discriminator_loss(&self, y: &Tensor<f32>, z: &Tensor<f32>) -> Result<f64> {
        let d = &self.nets.discriminator;
        let real = d.forward(&self.params.d, y)?.scores;
        let fake = d.forward(&self.params.d, z)?.scores;
        Ok(adversarial_loss_d_grad(&real, &fake)?.0.as_f64())
    }
}

fn check_grads(grads: &ModelParams<f32>) -> Result<()> {
    if grads.all_finite() {
        Ok(())
    } else {
        Err(SamcError::NonFinite { component: "gradient" })
    }
}

fn check_batch(state: &TrainState, batch: &Batch<f32>) -> Result<()> {
    let s = state.config.image_size;
    if batch.len() != state.config.batch_size || (batch.x.h, batch.x.w) != (s, s) {
        return Err(SamcError::Shape(format!(
            "batch of {} images at {}x{} does not match batch_size {} and image_size {s}",
            batch.len(),
            batch.x.h,
            batch.x.w,
            state.config.batch_size
        )));
    }
    Ok(())
}

/// One optimisation step: a discriminator update on `[Y; Z]`, then a joint
/// generator / attention update. On any non-finite value the state is left
/// exactly as it was and the offending component is reported.
pub fn train_step(state: &mut TrainState, extractor: &Extractor<f32>, batch: &Batch<f32>) -> Result<LossBundle> {
    check_batch(state, batch)?;
    let snapshot = state.clone();
    match step_inner(state, extractor, batch) {
        Ok(b) => Ok(b),
        Err(e) => {
            *state = snapshot;
            Err(e)
        }
    }
}

fn step_inner(state: &mut TrainState, extractor: &Extractor<f32>, batch: &Batch<f32>) -> Result<LossBundle> {
    let cfg = state.config.clone();
    let flags = cfg.losses;
    let (lr, b1, b2) = (cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);
    let nets = &state.nets;
    let n = batch.len();

    let gen = nets.generate(&state.params, &batch.x)?;
    let z = &gen.z;
    let mut comps = LossComponents::default();

    if flags.adv {
        let both = Tensor::concat_batch(&batch.y, z);
        let trace = nets.discriminator.forward(&state.params.d, &both)?;
        let real = trace.scores.batch_range(0, n);
        let fake = trace.scores.batch_range(n, n);
        let (loss, d_real, d_fake) = adversarial_loss_d_grad(&real, &fake)?;
        comps.adv_d = loss.as_f64();
        if !comps.adv_d.is_finite() {
            return Err(SamcError::NonFinite { component: "adv_d" });
        }
        let mut grads = state.params.d.zeros_like();
        let d_scores = Tensor::concat_batch(&d_real, &d_fake);
        nets.discriminator
            .backward(&state.params.d, &trace, &d_scores, Some(&mut grads), false);
        if !grads.all_finite() {
            return Err(SamcError::NonFinite { component: "adv_d" });
        }
        state.adam_d.step(&mut state.params.d, &grads, lr, b1, b2);
    }

    let mut dz = Tensor::zeros(z.c, z.n, z.h, z.w);
    let mut grads = state.params.zeros_like();

    if flags.adv {
        let trace = nets.discriminator.forward(&state.params.d, z)?;
        let (loss, d_scores) = adversarial_loss_g_grad(&trace.scores, cfg.adv_form)?;
        comps.adv_g = loss.as_f64();
        let dx = nets
            .discriminator
            .backward(&state.params.d, &trace, &d_scores, None, true)
            .expect("input gradient");
        dz.add_assign(&dx);
    }

    if flags.id || flags.sat {
        let tz = extractor.forward(z)?;
        let ty = extractor.forward(&batch.y)?;
        let mut d_emb = None;
        let mut d_feat = None;
        if flags.id {
            let (loss, g) = identity_loss_batch_grad(&tz.embedding, &ty.embedding)?;
            comps.id = loss.as_f64();
            d_emb = Some(g);
        }
        if flags.sat {
            let (fh, fw) = (tz.features.h, tz.features.w);
            let lx: Vec<_> = batch.labels_x.iter().map(|l| resize_label_map(l, fh, fw)).collect();
            let ly: Vec<_> = batch.labels_y.iter().map(|l| resize_label_map(l, fh, fw)).collect();
            let (loss, g) = sat_loss_grad(&tz.features, &lx, &ty.features, &ly)?;
            comps.sat = loss.as_f64();
            d_feat = Some(g);
        }
        let dx = extractor.backward(&tz, d_emb.as_deref(), d_feat.as_ref());
        dz.add_assign(&dx);
    }

    if flags.rec {
        let att = nets.attend(&state.params, &batch.x)?;
        let (terms, da, dzr) = reconstruction_loss_grad(&att.output, &batch.w, &batch.x, z)?;
        comps.rec = terms.rec.as_f64();
        comps.reg = terms.reg.as_f64();
        dz.add_assign(&dzr);
        nets.attention
            .backward(&state.params.a, &att, &da, Some(&mut grads.a), false);
    }

    let bundle = total_generator_loss(comps, flags)?;
    let d_res = gen.residual_grad(&dz);
    nets.generator
        .backward(&state.params.g, &gen.unet, &d_res, Some(&mut grads.g), false);
    check_grads(&grads)?;

    if flags.adv || flags.id || flags.sat || flags.rec {
        state.adam_g.step(&mut state.params.g, &grads.g, lr, b1, b2);
    }
    // The attention module only ever learns from the reconstruction terms.
    if flags.rec {
        state.adam_a.step(&mut state.params.a, &grads.a, lr, b1, b2);
    }
    if !state.params.all_finite() {
        return Err(SamcError::NonFinite { component: "parameter" });
    }
    state.step += 1;
    Ok(bundle)
}

/// One loss-log line: step index then the seven scalars.
pub fn format_log_line(step: u64, b: &LossBundle) -> String {
    let mut s = step.to_string();
    for v in b.values() {
        s.push(' ');
        s.push_str(&v.to_string());
    }
    s
}

/// Parse a loss log back into `(step, values)` rows.
pub fn read_loss_log(path: &Path) -> Result<Vec<(u64, [f64; 7])>> {
    let f = File::open(path).map_err(|e| SamcError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| SamcError::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let perr = |reason: &str| SamcError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: reason.to_string(),
        };
        let mut it = line.split_whitespace();
        let step = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr("bad step index"))?;
        let mut vals = [0.0; 7];
        for v in &mut vals {
            *v = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| perr("expected seven loss values"))?;
        }
        out.push((step, vals));
    }
    Ok(out)
}

/// Result of [`fit`].
#[derive(Debug)]
pub struct FitOutcome {
    pub state: TrainState,
    pub final_checkpoint: PathBuf,
    /// Bundles of the steps run by this call.
    pub history: Vec<LossBundle>,
}

/// Run training until `config.max_steps` steps are complete, starting fresh
/// or from `resume`. Writes `loss_log.txt`, periodic `step_NNNNNN.ckpt`
/// files and `final.ckpt` under `out_dir`.
pub fn fit(
    data: &[LoadedSample],
    config: &TrainConfig,
    extractor: &Extractor<f32>,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<FitOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(SamcError::Config("training set is empty".into()));
    }
    if data.len() < config.batch_size {
        return Err(SamcError::Config(format!(
            "{} samples cannot fill one batch of {}",
            data.len(),
            config.batch_size
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| SamcError::io(out_dir, e))?;
    let fresh = TrainState::new(config, extractor)?;
    let mut state = match resume {
        Some(p) => {
            let mut s = load_checkpoint_matching(p, &fresh.fingerprint())?;
            if s.config.seed != config.seed || s.config.batch_size != config.batch_size {
                warn!("resuming with a different seed or batch size; the run will not match an uninterrupted one");
            }
            s.config = config.clone();
            s
        }
        None => fresh,
    };

    let log_path = out_dir.join(LOSS_LOG);
    let kept = if log_path.exists() && resume.is_some() {
        read_loss_log(&log_path)?
            .into_iter()
            .filter(|(s, _)| *s <= state.step)
            .map(|(s, v)| {
                let b = LossBundle {
                    adv_d: v[0],
                    adv_g: v[1],
                    id: v[2],
                    rec: v[3],
                    reg: v[4],
                    sat: v[5],
                    total: v[6],
                    enabled: config.losses,
                };
                format_log_line(s, &b)
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&log_path)
        .map_err(|e| SamcError::io(&log_path, e))?;
    for line in kept {
        writeln!(log, "{line}").map_err(|e| SamcError::io(&log_path, e))?;
    }

    let per_epoch = (data.len() / config.batch_size) as u64;
    let mut history = Vec::new();
    let mut cached: Option<(u64, Vec<Vec<usize>>)> = None;
    while state.step < config.max_steps {
        let (epoch, pos) = (state.step / per_epoch, (state.step % per_epoch) as usize);
        if cached.as_ref().is_none_or(|(e, _)| *e != epoch) {
            cached = Some((epoch, batch_order(data.len(), config.batch_size, config.seed, epoch)));
        }
        let idx = &cached.as_ref().expect("order").1[pos];
        let batch = Batch::from_samples(&idx.iter().map(|&i| &data[i]).collect::<Vec<_>>())?;
        let bundle = train_step(&mut state, extractor, &batch)?;
        writeln!(log, "{}", format_log_line(state.step, &bundle)).map_err(|e| SamcError::io(&log_path, e))?;
        if state.step % 50 == 0 {
            info!("step {} total {:.4} rec {:.4}", state.step, bundle.total, bundle.rec);
        }
        history.push(bundle);
        if config.checkpoint_interval > 0 && state.step % config.checkpoint_interval == 0 {
            save_checkpoint(&state, &out_dir.join(format!("step_{:06}.ckpt", state.step)))?;
        }
    }
    log.flush().map_err(|e| SamcError::io(&log_path, e))?;
    let final_checkpoint = out_dir.join(FINAL_CHECKPOINT);
    save_checkpoint(&state, &final_checkpoint)?;
    Ok(FitOutcome {
        state,
        final_checkpoint,
        history,
    })
}

#[cfg(test)]
mod tests;
