use std::collections::BTreeMap;
use std::path::Path;

use super::*;
use crate::evaluation::cosine_similarity;
use crate::image::{images_to_tensor, ImageTensor};
use crate::models::Extractor;
use crate::regions::{parse_class as pc, RegionMapping};
use crate::warp::KeypointSet;

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn fixture_tree_is_a_function_of_its_arguments() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = synthesize_fixture_dataset(7, 4, 32, a.path()).unwrap();
    synthesize_fixture_dataset(7, 4, 32, b.path()).unwrap();
    assert_eq!(ma, a.path().join("manifest.txt"));
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), 1 + 4 * 6);
    assert_eq!(ta, tb);
    let c = tempfile::tempdir().unwrap();
    synthesize_fixture_dataset(8, 4, 32, c.path()).unwrap();
    assert_ne!(ta, tree(c.path()));
    assert_eq!(load_manifest(&ma).unwrap().len(), 4);
    assert!(matches!(
        synthesize_fixture_dataset(7, 1, 100, a.path()),
        Err(crate::SamcError::ImageSize(100))
    ));
}

#[test]
fn makeup_only_changes_face_eye_and_lip_regions() {
    for i in 0..10 {
        let f = FixtureFace::new(3, i, 64).unwrap();
        let (bare, parse) = f.render(false);
        let (made, parse_m) = f.render(true);
        assert_eq!(parse, parse_m);
        let allowed = [pc::PERIOCULAR, pc::UPPER_LIP, pc::LOWER_LIP, pc::SKIN, pc::NOSE];
        let mut changed_in = [0usize; 256];
        for (k, &code) in parse.codes.iter().enumerate() {
            if bare.pixel(k / 64, k % 64) != made.pixel(k / 64, k % 64) {
                assert!(allowed.contains(&code), "identity {i}: class {code} changed");
                changed_in[code as usize] += 1;
            }
        }
        for code in [pc::PERIOCULAR, pc::UPPER_LIP, pc::LOWER_LIP] {
            assert!(changed_in[code as usize] > 0, "identity {i}: no makeup in class {code}");
        }
    }
}

#[test]
fn keypoints_follow_the_jitter() {
    let f = FixtureFace::new(5, 2, 64).unwrap();
    let (_, _, kx, _, _, ky) = f.pair();
    for (p, q) in kx.points().iter().zip(ky.points()) {
        let t = f.jitter.forward(*q, 64);
        assert!((p[0] - t[0]).abs() < 1e-12 && (p[1] - t[1]).abs() < 1e-12);
        let back = f.jitter.inverse(*p, 64);
        assert!((back[0] - q[0]).abs() < 1e-9 && (back[1] - q[1]).abs() < 1e-9);
        assert!(q.iter().all(|v| (0.0..64.0).contains(v)));
    }
}

#[test]
fn fixture_identities_are_separable_by_the_toy_extractor() {
    let ex = Extractor::<f64>::toy(crate::models::TOY_EXTRACTOR_SEED);
    let n = 20;
    let mut views = Vec::new();
    for i in 0..n {
        let f = FixtureFace::new(11, i, 64).unwrap();
        let (y, parse) = f.render(false);
        let other = FixtureFace::new(99, i, 64).unwrap().jitter;
        let (y2, _) = f.apply_jitter(&y, &parse, &other);
        views.push((y, y2));
    }
    let embed = |img: &ImageTensor| {
        let t = images_to_tensor::<f64>(&[img]).unwrap();
        ex.forward(&t).unwrap().embedding
    };
    let e: Vec<_> = views.iter().map(|(a, b)| (embed(a), embed(b))).collect();
    let mut intra = 0.0;
    let mut inter = (0.0, 0usize);
    for i in 0..n {
        intra += cosine_similarity(&e[i].0, &e[i].1).unwrap() / n as f64;
        for j in 0..n {
            if i != j {
                inter.0 += cosine_similarity(&e[i].0, &e[j].1).unwrap();
                inter.1 += 1;
            }
        }
    }
    let inter = inter.0 / inter.1 as f64;
    assert!(inter < intra, "inter {inter} intra {intra}");
}

fn write_pair(dir: &Path, x: &ImageTensor, y: &ImageTensor, kx: &KeypointSet, ky: &KeypointSet, parse: &crate::regions::ParseMap) -> PairedSample {
    let s = PairedSample::new(
        "p",
        dir.join("x.png"),
        dir.join("y.png"),
        dir.join("kx.txt"),
        dir.join("ky.txt"),
        dir.join("px.png"),
        dir.join("py.png"),
    );
    x.save_png(&s.x).unwrap();
    y.save_png(&s.y).unwrap();
    kx.save(&s.kps_x).unwrap();
    ky.save(&s.kps_y).unwrap();
    parse.save_png(&s.parse_x).unwrap();
    parse.save_png(&s.parse_y).unwrap();
    s
}

#[test]
fn aligned_pair_warps_to_itself_and_preprocess_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let f = FixtureFace::new(1, 0, 32).unwrap();
    let (y, parse) = f.render(false);
    let k = f.keypoints();
    let s = write_pair(dir.path(), &y, &y, &k, &k, &parse);
    let cache = dir.path().join("cache");
    let Preprocessed::Ready(p) = preprocess(&s, &cache, &RegionMapping::default()).unwrap() else {
        panic!("aligned pair skipped");
    };
    let w = ImageTensor::load_png(p.w.as_ref().unwrap()).unwrap();
    assert_eq!(w.to_rgb8(), y.to_rgb8());
    let before = tree(&cache);
    preprocess(&s, &cache, &RegionMapping::default()).unwrap();
    assert_eq!(tree(&cache), before);
    assert_eq!(before.len(), 3);
}

#[test]
fn degenerate_keypoints_are_skipped_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let f = FixtureFace::new(1, 0, 32).unwrap();
    let (y, parse) = f.render(false);
    let line = KeypointSet::new((0..68).map(|i| [i as f64 * 0.3, i as f64 * 0.3]).collect()).unwrap();
    let s = write_pair(dir.path(), &y, &y, &line, &line, &parse);
    let out = preprocess_all(&[s.clone()], &dir.path().join("c"), &RegionMapping::default()).unwrap();
    assert!(out.ready.is_empty());
    assert_eq!(out.skipped.len(), 1);
    std::fs::write(&s.kps_x, "1 2\n").unwrap();
    assert!(matches!(
        preprocess(&s, &dir.path().join("c"), &RegionMapping::default()).unwrap(),
        Preprocessed::Skipped { .. }
    ));
    std::fs::remove_file(&s.kps_y).unwrap();
    std::fs::write(&s.kps_x, k_text()).unwrap();
    assert!(preprocess(&s, &dir.path().join("c"), &RegionMapping::default()).is_err());
}

fn k_text() -> String {
    FixtureFace::new(1, 0, 32).unwrap().keypoints().to_text()
}

#[test]
fn translated_pair_is_realigned() {
    let dir = tempfile::tempdir().unwrap();
    let f = FixtureFace::new(2, 1, 64).unwrap();
    let (y, parse) = f.render(false);
    let shift = Jitter {
        angle_deg: 0.0,
        scale: 1.0,
        shift: [0.0, 4.0],
    };
    let (x, _) = f.apply_jitter(&y, &parse, &shift);
    let ky = f.keypoints();
    let kx = ky.translated(0.0, 4.0);
    let s = write_pair(dir.path(), &x, &y, &kx, &ky, &parse);
    let Preprocessed::Ready(p) = preprocess(&s, &dir.path().join("c"), &RegionMapping::default()).unwrap() else {
        panic!("skipped");
    };
    let w = ImageTensor::load_png(p.w.as_ref().unwrap()).unwrap();
    // Away from the left edge, where X replicates the border, W equals X.
    for r in 0..64 {
        for c in 6..64 {
            let (a, b) = (w.pixel(r, c), x.pixel(r, c));
            for ch in 0..3 {
                assert!((a[ch] - b[ch]).abs() <= 1.0 / 127.5 + 1e-6, "({r},{c})");
            }
        }
    }
}

#[test]
fn batching_is_seeded_and_drops_the_remainder() {
    assert_eq!(batch_order(10, 4, 1, 0).len(), 2);
    assert_eq!(batch_order(10, 4, 1, 0), batch_order(10, 4, 1, 0));
    assert_ne!(batch_order(10, 4, 1, 0), batch_order(10, 4, 1, 1));
    let all = batch_order(10, 10, 3, 2);
    assert_eq!(all.len(), 1);
    let mut sorted = all[0].clone();
    sorted.sort();
    assert_eq!(sorted, (0..10).collect::<Vec<_>>());

    let dir = tempfile::tempdir().unwrap();
    let m = synthesize_fixture_dataset(4, 3, 32, dir.path()).unwrap();
    let samples = load_manifest(&m).unwrap();
    assert!(make_batches::<f32>(&samples, 3, 0, 0).is_err(), "unpreprocessed samples must fail");
    let ready = preprocess_all(&samples, &dir.path().join("cache"), &RegionMapping::default()).unwrap().ready;
    let batches = make_batches::<f32>(&ready, 3, 0, 0).unwrap();
    assert_eq!(batches.len(), 1);
    assert_eq!(batches[0].x.dims(), (3, 3, 32, 32));
    assert_eq!(batches[0].labels_x.len(), 3);
    assert!(batches[0].x.data.iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn byte_extremes_decode_to_unit_range() {
    let img = ImageTensor::from_rgb8(1, 2, &[255, 255, 255, 0, 0, 0]).unwrap();
    let t = images_to_tensor::<f32>(&[&img]).unwrap();
    assert_eq!(t.at(0, 0, 0, 0), 1.0);
    assert_eq!(t.at(0, 0, 0, 1), -1.0);
}
