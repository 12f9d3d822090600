use std::path::Path;

use super::*;
use crate::data::{load_training_set, synthesize_fixture_dataset};
use crate::losses::LossFlags;
use crate::regions::RegionMapping;

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        image_size: 32,
        batch_size: 2,
        base_channels: 8,
        disc_blocks: 2,
        max_steps: 4,
        checkpoint_interval: 0,
        seed,
        ..TrainConfig::default()
    }
}

fn fixture_set(dir: &Path, count: usize, seed: u64) -> Vec<LoadedSample> {
    let manifest = synthesize_fixture_dataset(seed, count, 32, &dir.join("fx")).unwrap();
    load_training_set(&manifest, &dir.join("cache"), &RegionMapping::default()).unwrap()
}

fn batch_of(data: &[LoadedSample], idx: &[usize]) -> Batch<f32> {
    Batch::from_samples(&idx.iter().map(|&i| &data[i]).collect::<Vec<_>>()).unwrap()
}

fn toy() -> Extractor<f32> {
    Extractor::toy(crate::models::TOY_EXTRACTOR_SEED)
}

#[test]
fn converged_fixture_leaves_parameters_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_set(dir.path(), 2, 3);
    let mut batch = batch_of(&data, &[0, 1]);
    batch.w = batch.x.clone();
    batch.y = batch.x.clone();
    let cfg = TrainConfig {
        losses: "rec".parse().unwrap(),
        ..small_config(1)
    };
    let ext = toy();
    let mut state = TrainState::new(&cfg, &ext).unwrap();
    for name in ["head.weight", "head.bias"] {
        state.params.g.by_name_mut(name).unwrap().data.fill(0.0);
    }
    let before = state.params.clone();
    let b = train_step(&mut state, &ext, &batch).unwrap();
    assert_eq!(b.rec, 0.0);
    assert_eq!(state.params, before);
    assert_eq!(state.step, 1);
}

#[test]
fn same_seed_gives_bit_identical_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_set(dir.path(), 4, 5);
    let ext = toy();
    let cfg = small_config(9);
    let a = fit(&data, &cfg, &ext, &dir.path().join("a"), None).unwrap();
    let b = fit(&data, &cfg, &ext, &dir.path().join("b"), None).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.state, b.state);
    let la = std::fs::read(dir.path().join("a").join(LOSS_LOG)).unwrap();
    let lb = std::fs::read(dir.path().join("b").join(LOSS_LOG)).unwrap();
    assert_eq!(la, lb);
    assert_eq!(read_loss_log(&dir.path().join("a").join(LOSS_LOG)).unwrap().len(), 4);
}

#[test]
fn resume_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_set(dir.path(), 4, 6);
    let ext = toy();
    let full_cfg = TrainConfig {
        max_steps: 5,
        checkpoint_interval: 2,
        ..small_config(2)
    };
    let full = fit(&data, &full_cfg, &ext, &dir.path().join("full"), None).unwrap();
    assert!(dir.path().join("full/step_000002.ckpt").exists());
    assert!(dir.path().join("full/step_000004.ckpt").exists());

    let part_dir = dir.path().join("part");
    let part_cfg = TrainConfig {
        max_steps: 3,
        ..full_cfg.clone()
    };
    fit(&data, &part_cfg, &ext, &part_dir, None).unwrap();
    let resumed = fit(&data, &full_cfg, &ext, &part_dir, Some(&part_dir.join("step_000002.ckpt"))).unwrap();
    assert_eq!(resumed.history, full.history[2..]);
    assert_eq!(resumed.state, full.state);
    assert_eq!(
        std::fs::read(part_dir.join(LOSS_LOG)).unwrap(),
        std::fs::read(dir.path().join("full").join(LOSS_LOG)).unwrap()
    );
}

#[test]
fn checkpoint_round_trip_gives_the_same_next_step() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_set(dir.path(), 2, 7);
    let batch = batch_of(&data, &[1, 0]);
    let ext = toy();
    let mut state = TrainState::new(&small_config(4), &ext).unwrap();
    train_step(&mut state, &ext, &batch).unwrap();
    let path = dir.path().join("s.ckpt");
    save_checkpoint(&state, &path).unwrap();
    let mut loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, state);
    let a = train_step(&mut state, &ext, &batch).unwrap();
    let b = train_step(&mut loaded, &ext, &batch).unwrap();
    assert_eq!(a, b);
    assert_eq!(loaded.params, state.params);
}

#[test]
fn truncated_checkpoint_is_reported_as_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let ext = toy();
    let state = TrainState::new(&small_config(4), &ext).unwrap();
    let path = dir.path().join("s.ckpt");
    save_checkpoint(&state, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let err = load_checkpoint(&path).unwrap_err();
    assert!(matches!(err, SamcError::CorruptCheckpoint { .. }), "{err}");
}

#[test]
fn different_image_size_is_a_fingerprint_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let ext = toy();
    let state = TrainState::new(&small_config(4), &ext).unwrap();
    let path = dir.path().join("s.ckpt");
    save_checkpoint(&state, &path).unwrap();
    let other = TrainState::new(
        &TrainConfig {
            image_size: 64,
            ..small_config(4)
        },
        &ext,
    )
    .unwrap();
    let err = load_checkpoint_matching(&path, &other.fingerprint()).unwrap_err();
    assert!(matches!(err, SamcError::FingerprintMismatch { .. }), "{err}");
    assert!(load_checkpoint_matching(&path, &state.fingerprint()).is_ok());
}

#[test]
fn zero_steps_returns_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_set(dir.path(), 2, 8);
    let ext = toy();
    let cfg = TrainConfig {
        max_steps: 0,
        ..small_config(3)
    };
    let out = fit(&data, &cfg, &ext, &dir.path().join("o"), None).unwrap();
    assert!(out.history.is_empty());
    assert_eq!(out.state, TrainState::new(&cfg, &ext).unwrap());
    assert_eq!(load_checkpoint(&out.final_checkpoint).unwrap(), out.state);
}

#[test]
fn extractor_is_frozen_and_attention_learns_only_from_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_set(dir.path(), 2, 9);
    let batch = batch_of(&data, &[0, 1]);
    let ext = toy();
    let ext_before = ext.params().clone();
    let cfg = TrainConfig {
        losses: LossFlags::without("rec").unwrap(),
        ..small_config(5)
    };
    let mut state = TrainState::new(&cfg, &ext).unwrap();
    let before = state.params.clone();
    for _ in 0..3 {
        train_step(&mut state, &ext, &batch).unwrap();
    }
    assert_eq!(ext.params(), &ext_before);
    assert_eq!(state.params.a, before.a);
    assert_ne!(state.params.g, before.g);
    assert_ne!(state.params.d, before.d);

    let mut full = TrainState::new(&small_config(5), &ext).unwrap();
    train_step(&mut full, &ext, &batch).unwrap();
    assert_ne!(full.params.a, before.a);
}

#[test]
fn disabled_losses_read_as_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_set(dir.path(), 2, 10);
    let batch = batch_of(&data, &[0, 1]);
    let ext = toy();
    for off in ["adv", "id", "sat", "rec"] {
        let cfg = TrainConfig {
            losses: LossFlags::without(off).unwrap(),
            ..small_config(6)
        };
        let mut state = TrainState::new(&cfg, &ext).unwrap();
        let b = train_step(&mut state, &ext, &batch).unwrap();
        let zeroed: &[f64] = match off {
            "adv" => &[b.adv_d, b.adv_g],
            "id" => &[b.id],
            "sat" => &[b.sat],
            _ => &[b.rec, b.reg],
        };
        assert!(zeroed.iter().all(|v| *v == 0.0), "{off}: {b:?}");
        assert!(b.total > 0.0);
    }
}

#[test]
fn non_finite_step_rolls_back() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_set(dir.path(), 2, 11);
    let batch = batch_of(&data, &[0, 1]);
    let ext = toy();
    let mut state = TrainState::new(&small_config(7), &ext).unwrap();
    state.params.g.by_name_mut("head.bias").unwrap().data[0] = f32::NAN;
    let before = state.clone();
    let err = train_step(&mut state, &ext, &batch).unwrap_err();
    assert!(matches!(err, SamcError::NonFinite { .. }), "{err}");
    assert_eq!(format!("{:?}", state), format!("{:?}", before));
    assert_eq!(state.step, 0);
}

#[test]
fn mismatched_batch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_set(dir.path(), 3, 12);
    let ext = toy();
    let mut state = TrainState::new(&small_config(7), &ext).unwrap();
    let err = train_step(&mut state, &ext, &batch_of(&data, &[0, 1, 2])).unwrap_err();
    assert!(matches!(err, SamcError::Shape(_)));
}

#[test]
fn discriminator_update_lowers_its_loss_in_most_trials() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture_set(dir.path(), 8, 13);
    let ext = toy();
    let mut descended = 0;
    for trial in 0..100u64 {
        let cfg = TrainConfig {
            losses: "adv".parse().unwrap(),
            ..small_config(1000 + trial)
        };
        let mut state = TrainState::new(&cfg, &ext).unwrap();
        let i = (trial as usize * 2) % data.len();
        let batch = batch_of(&data, &[i, (i + 1) % data.len()]);
        let z = state.nets.generate(&state.params, &batch.x).unwrap().z;
        let before = state.discriminator_loss(&batch.y, &z).unwrap();
        train_step(&mut state, &ext, &batch).unwrap();
        let after = state.discriminator_loss(&batch.y, &z).unwrap();
        descended += usize::from(after < before);
    }
    assert!(descended >= 95, "descended in {descended}/100 trials");
}
