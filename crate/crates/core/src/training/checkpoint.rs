use std::path::Path;

use crate::error::{Result, SamcError};
use crate::models::Networks;
use crate::nn::Params;
use crate::store::Container;

use super::{Adam, TrainConfig, TrainState};

pub const CHECKPOINT_KIND: &str = "samc-checkpoint";

fn push_params(c: &mut Container, prefix: &str, p: &Params<f32>) {
    for a in &p.arrays {
        c.push_array(format!("{prefix}{}", a.name), a.shape.clone(), a.data.clone());
    }
}

fn fill_params(c: &Container, prefix: &str, dst: &mut Params<f32>, path: &Path) -> Result<()> {
    let corrupt = |reason: String| SamcError::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let found: Vec<_> = c.arrays_with_prefix(prefix).collect();
    if found.len() != dst.arrays.len() {
        return Err(corrupt(format!(
            "expected {} arrays under `{prefix}`, found {}",
            dst.arrays.len(),
            found.len()
        )));
    }
    for a in &mut dst.arrays {
        let (_, src) = found
            .iter()
            .find(|(n, _)| *n == a.name)
            .ok_or_else(|| corrupt(format!("missing array `{prefix}{}`", a.name)))?;
        if src.shape != a.shape || src.data.len() != a.data.len() {
            return Err(corrupt(format!(
                "array `{prefix}{}` has shape {:?}, expected {:?}",
                a.name, src.shape, a.shape
            )));
        }
        a.data.copy_from_slice(&src.data);
    }
    Ok(())
}

/// Write the full training state (weights, optimiser moments, step, config).
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let mut c = Container::new(CHECKPOINT_KIND);
    c.set_meta("fingerprint", state.fingerprint());
    c.set_meta("extractor", &state.extractor_id);
    c.set_meta("step", state.step);
    c.set_meta("config", state.config.to_text());
    for (name, adam) in [("g", &state.adam_g), ("a", &state.adam_a), ("d", &state.adam_d)] {
        c.set_meta(&format!("adam_t.{name}"), adam.t);
    }
    let p = &state.params;
    for (name, params, adam) in [
        ("G", &p.g, &state.adam_g),
        ("A", &p.a, &state.adam_a),
        ("D", &p.d, &state.adam_d),
    ] {
        push_params(&mut c, &format!("{name}/"), params);
        push_params(&mut c, &format!("{name}.m/"), &adam.m);
        push_params(&mut c, &format!("{name}.v/"), &adam.v);
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| SamcError::io(dir, e))?;
    }
    c.save(path)
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let c = Container::load(path)?;
    let corrupt = |reason: String| SamcError::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    if c.kind != CHECKPOINT_KIND {
        return Err(corrupt(format!("container kind is `{}`, not a checkpoint", c.kind)));
    }
    let meta = |k: &str| c.meta(k).ok_or_else(|| corrupt(format!("missing metadata `{k}`")));
    let num = |k: &str| -> Result<u64> {
        meta(k)?
            .parse()
            .map_err(|_| corrupt(format!("metadata `{k}` is not an integer")))
    };
    let config = TrainConfig::parse(meta("config")?, path)?;
    let extractor_id = meta("extractor")?.to_string();
    let (nets, mut params) = Networks::new::<f32>(
        config.image_size,
        config.base_channels,
        config.disc_blocks,
        config.seed,
    )?;
    let stored = meta("fingerprint")?;
    let rebuilt = nets.fingerprint(&extractor_id);
    if stored != rebuilt {
        return Err(SamcError::FingerprintMismatch {
            expected: rebuilt,
            found: stored.to_string(),
        });
    }
    let mut adams = Vec::new();
    for (name, dst, key) in [("G", &mut params.g, "g"), ("A", &mut params.a, "a"), ("D", &mut params.d, "d")] {
        fill_params(&c, &format!("{name}/"), dst, path)?;
        let mut adam = Adam::new(dst);
        fill_params(&c, &format!("{name}.m/"), &mut adam.m, path)?;
        fill_params(&c, &format!("{name}.v/"), &mut adam.v, path)?;
        adam.t = num(&format!("adam_t.{key}"))?;
        adams.push(adam);
    }
    let adam_d = adams.pop().expect("three optimisers");
    let adam_a = adams.pop().expect("three optimisers");
    let adam_g = adams.pop().expect("three optimisers");
    Ok(TrainState {
        step: num("step")?,
        config,
        nets,
        params,
        adam_g,
        adam_a,
        adam_d,
        extractor_id,
    })
}

/// [`load_checkpoint`], then require the architecture fingerprint to equal `expected`.
pub fn load_checkpoint_matching(path: &Path, expected: &str) -> Result<TrainState> {
    let state = load_checkpoint(path)?;
    let found = state.fingerprint();
    if found != expected {
        return Err(SamcError::FingerprintMismatch {
            expected: expected.to_string(),
            found,
        });
    }
    Ok(state)
}
