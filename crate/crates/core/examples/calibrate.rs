//! Fixture experiment: train on synthetic pairs, then report the reconstruction
//! trend, attention contrast on the makeup mask and verification metrics.
//!
//! `cargo run --release --example calibrate -- [steps] [pairs] [base] [seed] [out] [KEY=VALUE...]`

use std::path::PathBuf;
use std::time::Instant;

use samc::data::{load_manifest, load_training_set, synthesize_fixture_dataset};
use samc::evaluation::{verification_via_generation, EvalPair};
use samc::models::{Extractor, TOY_EXTRACTOR_SEED};
use samc::regions::{parse_class, ParseMap, RegionMapping};
use samc::training::{fit, TrainConfig};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: u64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (steps, pairs, base, seed) = (arg(0, 2000), arg(1, 200) as usize, arg(2, 16) as usize, arg(3, 0));
    let out = PathBuf::from(args.get(4).cloned().unwrap_or_else(|| "/tmp/samc_calib".into()));
    let _ = std::fs::remove_dir_all(&out);

    let train_manifest = synthesize_fixture_dataset(seed, pairs, 64, &out.join("train"))?;
    let test_manifest = synthesize_fixture_dataset(seed + 1, 50, 64, &out.join("test"))?;
    let data = load_training_set(&train_manifest, &out.join("cache"), &RegionMapping::default())?;
    let mut cfg = TrainConfig {
        image_size: 64,
        base_channels: base,
        max_steps: steps,
        checkpoint_interval: 0,
        seed,
        ..TrainConfig::default()
    };
    for kv in args.iter().skip(5) {
        let (k, v) = kv.split_once('=').ok_or_else(|| anyhow::anyhow!("expected KEY=VALUE, got {kv}"))?;
        cfg.set(k, v)?;
    }
    let ext = Extractor::toy(TOY_EXTRACTOR_SEED);
    let t0 = Instant::now();
    let run = fit(&data, &cfg, &ext, &out.join("run"), None)?;
    let secs = t0.elapsed().as_secs_f64();
    let rec: Vec<f64> = run.history.iter().map(|b| b.rec).collect();
    let first = rec.iter().take(10).sum::<f64>() / 10.0;
    let last10 = rec.iter().rev().take(10).sum::<f64>() / 10.0;
    println!("steps={steps} time={secs:.1}s ({:.3}s/step)", secs / steps.max(1) as f64);
    println!("rec first10={first:.5} last={:.5} last10={last10:.5} ratio={:.3}", rec.last().unwrap_or(&0.0), last10 / first);

    for (name, manifest) in [("train", &train_manifest), ("test", &test_manifest)] {
        let samples = load_manifest(manifest)?;
        let (mut inside, mut outside) = ((0.0, 0usize), (0.0, 0usize));
        let evals: Vec<EvalPair> = samples.iter().map(EvalPair::load).collect::<Result<_, _>>()?;
        let xs: Vec<_> = evals.iter().map(|p| &p.x).collect();
        let maps = run.state.nets.attention_maps(&run.state.params, &xs)?;
        for (s, m) in samples.iter().zip(&maps) {
            let parse = ParseMap::load_png(&s.parse_x)?;
            for (code, a) in parse.codes.iter().zip(m.data()) {
                let hit = matches!(*code, parse_class::PERIOCULAR | parse_class::UPPER_LIP | parse_class::LOWER_LIP);
                let acc = if hit { &mut inside } else { &mut outside };
                acc.0 += *a as f64;
                acc.1 += 1;
            }
        }
        let (mi, mo) = (inside.0 / inside.1 as f64, outside.0 / outside.1 as f64);
        let r = verification_via_generation(&run.state.nets, &run.state.params, &evals, &ext, "calib")?;
        println!(
            "{name}: attention in={mi:.4} out={mo:.4} gap={:.4} | rank1 gen={:.2} base={:.2} | genuine gen={:.4} base={:.4} | tpr1 gen={:.2} base={:.2}",
            mi - mo,
            r.generated.rank1,
            r.baseline.rank1,
            r.generated.mean_genuine,
            r.baseline.mean_genuine,
            r.generated.tpr_1pct,
            r.baseline.tpr_1pct
        );
    }
    Ok(())
}
