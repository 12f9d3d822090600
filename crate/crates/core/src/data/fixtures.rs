//! Procedural face pairs standing in for a real makeup dataset.
//!
//! Each identity is a flat-shaded cartoon face with per-identity geometry and
//! colours. `Y` is the bare face; `X` is the same face with eye shadow,
//! lipstick and a mild foundation tint, then jittered by a small affine
//! transform so the pair is misaligned.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SamcError};
use crate::image::ImageTensor;
use crate::regions::{parse_class as pc, ParseMap};
use crate::warp::{sample_bilinear, KeypointSet};

use super::manifest::{write_manifest, PairedSample};

pub const FIXTURE_SIZES: [usize; 4] = [32, 64, 128, 256];

const EYESHADOW_PALETTE: [[f64; 3]; 6] = [
    [0.45, 0.10, 0.60],
    [0.10, 0.30, 0.80],
    [0.85, 0.65, 0.10],
    [0.90, 0.30, 0.60],
    [0.10, 0.55, 0.30],
    [0.20, 0.15, 0.15],
];
const LIPSTICK_PALETTE: [[f64; 3]; 5] = [
    [0.75, 0.02, 0.10],
    [0.45, 0.05, 0.30],
    [0.95, 0.40, 0.30],
    [0.90, 0.35, 0.55],
    [0.35, 0.05, 0.05],
];
const FOUNDATION: [f64; 3] = [1.0, 0.86, 0.78];
const FOUNDATION_STRENGTH: f64 = 0.12;

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    r: f64,
    c: f64,
    rr: f64,
    rc: f64,
}

impl Ellipse {
    fn contains(&self, r: f64, c: f64) -> bool {
        let dr = (r - self.r) / self.rr;
        let dc = (c - self.c) / self.rc;
        dr * dr + dc * dc <= 1.0
    }

    /// Point at angle `phi` (0 = right, counter-clockwise on screen).
    fn at(&self, phi: f64) -> [f64; 2] {
        [self.r - self.rr * phi.sin(), self.c + self.rc * phi.cos()]
    }
}

/// Small similarity transform about the image centre, mapping Y's frame to X's.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jitter {
    pub angle_deg: f64,
    pub scale: f64,
    pub shift: [f64; 2],
}

impl Jitter {
    pub const IDENTITY: Jitter = Jitter {
        angle_deg: 0.0,
        scale: 1.0,
        shift: [0.0, 0.0],
    };

    fn centre(size: usize) -> f64 {
        (size as f64 - 1.0) / 2.0
    }

    pub fn forward(&self, p: [f64; 2], size: usize) -> [f64; 2] {
        let m = Self::centre(size);
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let (dr, dc) = (p[0] - m, p[1] - m);
        [
            m + self.scale * (c * dr + s * dc) + self.shift[0],
            m + self.scale * (-s * dr + c * dc) + self.shift[1],
        ]
    }

    pub fn inverse(&self, p: [f64; 2], size: usize) -> [f64; 2] {
        let m = Self::centre(size);
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let (dr, dc) = ((p[0] - m - self.shift[0]) / self.scale, (p[1] - m - self.shift[1]) / self.scale);
        [m + c * dr - s * dc, m + s * dr + c * dc]
    }
}

/// Geometry, colours and makeup style of one synthetic identity.
#[derive(Clone, Debug)]
pub struct FixtureFace {
    size: usize,
    face: Ellipse,
    hairline: f64,
    hair: Ellipse,
    ears: [Ellipse; 2],
    brows: [Ellipse; 2],
    periocular: [Ellipse; 2],
    eyes: [Ellipse; 2],
    iris_radius: f64,
    nose: Ellipse,
    lips: Ellipse,
    skin: [f64; 3],
    hair_color: [f64; 3],
    background: [f64; 3],
    iris: [f64; 3],
    lip_color: [f64; 3],
    eyeshadow: [f64; 3],
    eyeshadow_strength: f64,
    lipstick: [f64; 3],
    lipstick_strength: f64,
    pub jitter: Jitter,
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn scale3(a: [f64; 3], k: f64) -> [f64; 3] {
    [a[0] * k, a[1] * k, a[2] * k]
}

impl FixtureFace {
    /// The `index`-th identity of the fixture set drawn from `seed`.
    pub fn new(seed: u64, index: usize, size: usize) -> Result<Self> {
        if !FIXTURE_SIZES.contains(&size) {
            return Err(SamcError::ImageSize(size));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        let s = size as f64;
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);

        let (cr, cc) = (s * u(0.50, 0.55), s * u(0.47, 0.53));
        let (fb, fa) = (s * u(0.36, 0.42), s * u(0.28, 0.34));
        let face = Ellipse { r: cr, c: cc, rr: fb, rc: fa };
        let hairline = cr - fb * u(0.45, 0.65);
        let hair = Ellipse { r: cr - fb * 0.05, c: cc, rr: fb * 1.12, rc: fa * 1.15 };
        let ear_r = cr - fb * 0.05;
        let ears = [
            Ellipse { r: ear_r, c: cc - fa, rr: fb * 0.16, rc: fa * 0.12 },
            Ellipse { r: ear_r, c: cc + fa, rr: fb * 0.16, rc: fa * 0.12 },
        ];

        let eye_r = cr - fb * u(0.12, 0.22);
        let eye_dx = fa * u(0.40, 0.50);
        let (erc, err) = (fa * u(0.17, 0.22), fb * u(0.06, 0.08));
        let eyes = [
            Ellipse { r: eye_r, c: cc - eye_dx, rr: err, rc: erc },
            Ellipse { r: eye_r, c: cc + eye_dx, rr: err, rc: erc },
        ];
        let peri = |e: &Ellipse| Ellipse { r: e.r - e.rr * 0.8, c: e.c, rr: e.rr * 2.6, rc: e.rc * 1.45 };
        let periocular = [peri(&eyes[0]), peri(&eyes[1])];
        let brow_gap = fb * u(0.20, 0.26);
        let brow = |e: &Ellipse| Ellipse { r: e.r - brow_gap, c: e.c, rr: fb * 0.035, rc: e.rc * 1.3 };
        let brows = [brow(&eyes[0]), brow(&eyes[1])];
        let iris_radius = err * 0.95;

        let nose = Ellipse { r: cr + fb * u(0.10, 0.16), c: cc, rr: fb * 0.16, rc: fa * u(0.10, 0.14) };
        let lips = Ellipse { r: cr + fb * u(0.48, 0.56), c: cc, rr: fb * u(0.08, 0.11), rc: fa * u(0.32, 0.42) };

        let tone = u(0.0, 1.0);
        let skin = lerp3([0.96, 0.80, 0.70], [0.45, 0.30, 0.22], tone);
        let hb = u(0.05, 0.45);
        let hair_color = [hb * u(0.8, 1.6), hb * u(0.7, 1.1), hb * u(0.5, 0.9)];
        let bg = u(0.25, 0.8);
        let background = [bg + u(-0.1, 0.1), bg + u(-0.1, 0.1), bg + u(-0.1, 0.1)];
        let iris = [u(0.05, 0.45), u(0.05, 0.4), u(0.05, 0.45)];
        let lip_color = [skin[0] * 0.9 + 0.08, skin[1] * 0.62, skin[2] * 0.66];

        let eyeshadow = EYESHADOW_PALETTE[(u(0.0, 1.0) * EYESHADOW_PALETTE.len() as f64) as usize];
        let eyeshadow_strength = u(0.55, 0.8);
        let lipstick = LIPSTICK_PALETTE[(u(0.0, 1.0) * LIPSTICK_PALETTE.len() as f64) as usize];
        let lipstick_strength = u(0.6, 0.85);
        let jitter = Jitter {
            angle_deg: u(-3.0, 3.0),
            scale: u(0.97, 1.03),
            shift: [u(-2.0, 2.0), u(-2.0, 2.0)],
        };
        Ok(FixtureFace {
            size,
            face,
            hairline,
            hair,
            ears,
            brows,
            periocular,
            eyes,
            iris_radius,
            nose,
            lips,
            skin,
            hair_color,
            background,
            iris,
            lip_color,
            eyeshadow,
            eyeshadow_strength,
            lipstick,
            lipstick_strength,
            jitter,
        })
    }

    fn class_at(&self, r: f64, c: f64) -> u8 {
        let f = &self.face;
        let mut class = pc::BACKGROUND;
        if r > f.r + f.rr * 0.6 && (c - f.c).abs() < f.rc * 0.45 {
            class = pc::NECK;
        }
        if self.ears[0].contains(r, c) {
            class = pc::LEFT_EAR;
        }
        if self.ears[1].contains(r, c) {
            class = pc::RIGHT_EAR;
        }
        if f.contains(r, c) {
            class = pc::SKIN;
        }
        if r < self.hairline && self.hair.contains(r, c) {
            class = pc::HAIR;
        }
        for (k, e) in self.periocular.iter().enumerate() {
            if e.contains(r, c) && f.contains(r, c) {
                class = pc::PERIOCULAR;
            }
            if self.brows[k].contains(r, c) {
                class = if k == 0 { pc::LEFT_BROW } else { pc::RIGHT_BROW };
            }
            if self.eyes[k].contains(r, c) {
                class = if k == 0 { pc::LEFT_EYE } else { pc::RIGHT_EYE };
            }
        }
        if self.nose.contains(r, c) {
            class = pc::NOSE;
        }
        if self.lips.contains(r, c) {
            class = if r < self.lips.r { pc::UPPER_LIP } else { pc::LOWER_LIP };
        }
        class
    }

    fn bare_color(&self, class: u8, r: f64, c: f64) -> [f64; 3] {
        // Mild horizontal shading so skin is not perfectly flat.
        let dc = (c - self.face.c) / self.face.rc;
        let shade = 1.0 - 0.12 * dc * dc.abs();
        match class {
            pc::BACKGROUND => self.background,
            pc::HAIR | pc::LEFT_BROW | pc::RIGHT_BROW => self.hair_color,
            pc::LEFT_EYE | pc::RIGHT_EYE => {
                let e = if class == pc::LEFT_EYE { &self.eyes[0] } else { &self.eyes[1] };
                if (r - e.r).hypot(c - e.c) <= self.iris_radius {
                    self.iris
                } else {
                    [0.92, 0.92, 0.9]
                }
            }
            pc::UPPER_LIP | pc::LOWER_LIP => scale3(self.lip_color, if class == pc::UPPER_LIP { 0.92 } else { 1.0 }),
            pc::NOSE => scale3(self.skin, 0.92 * shade),
            pc::NECK => scale3(self.skin, 0.85),
            pc::LEFT_EAR | pc::RIGHT_EAR => scale3(self.skin, 0.93),
            pc::PERIOCULAR => scale3(self.skin, 0.96 * shade),
            _ => scale3(self.skin, shade),
        }
    }

    fn makeup(&self, class: u8, bare: [f64; 3]) -> [f64; 3] {
        match class {
            pc::PERIOCULAR => lerp3(bare, self.eyeshadow, self.eyeshadow_strength),
            pc::UPPER_LIP | pc::LOWER_LIP => lerp3(bare, self.lipstick, self.lipstick_strength),
            pc::SKIN | pc::NOSE => lerp3(bare, FOUNDATION, FOUNDATION_STRENGTH),
            _ => bare,
        }
    }

    /// Aligned rendering: the bare face (`makeup == false`) or the made-up
    /// face before jitter, with its parse map.
    pub fn render(&self, makeup: bool) -> (ImageTensor, ParseMap) {
        let n = self.size;
        let mut data = Vec::with_capacity(n * n * 3);
        let mut codes = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let (rf, cf) = (r as f64, c as f64);
                let class = self.class_at(rf, cf);
                let mut col = self.bare_color(class, rf, cf);
                if makeup {
                    col = self.makeup(class, col);
                }
                data.extend(col.iter().map(|v| (v.clamp(0.0, 1.0) * 2.0 - 1.0) as f32));
                codes.push(class);
            }
        }
        let img = ImageTensor::new(n, n, data).expect("colours are in range");
        let parse = ParseMap::new(n, n, codes).expect("square map");
        (img, parse)
    }

    /// Resample an aligned rendering into the jittered frame (bilinear for the
    /// image, nearest for the parse map).
    pub fn apply_jitter(&self, img: &ImageTensor, parse: &ParseMap, jitter: &Jitter) -> (ImageTensor, ParseMap) {
        let n = self.size;
        let mut data = Vec::with_capacity(n * n * 3);
        let mut codes = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let src = jitter.inverse([r as f64, c as f64], n);
                data.extend(sample_bilinear(img, src[0], src[1]));
                let rr = src[0].round().clamp(0.0, (n - 1) as f64) as usize;
                let cc = src[1].round().clamp(0.0, (n - 1) as f64) as usize;
                codes.push(parse.codes[rr * n + cc]);
            }
        }
        (
            ImageTensor::new(n, n, data).expect("bilinear stays in range"),
            ParseMap::new(n, n, codes).expect("square map"),
        )
    }

    /// 68 landmarks in the aligned (Y) frame, iBUG ordering.
    pub fn keypoints(&self) -> KeypointSet {
        let mut p = Vec::with_capacity(68);
        let f = &self.face;
        for k in 0..17 {
            // Jaw: left temple, around the chin, to the right temple.
            p.push(f.at(PI + k as f64 * PI / 16.0));
        }
        for b in &self.brows {
            for k in 0..5 {
                p.push(b.at(PI - k as f64 * PI / 4.0));
            }
        }
        let bridge_top = self.eyes[0].r;
        let tip = self.nose.r + self.nose.rr * 0.6;
        for k in 0..4 {
            p.push([bridge_top + (tip - bridge_top) * k as f64 / 3.0, self.nose.c]);
        }
        for k in 0..5 {
            let dc = (k as f64 - 2.0) / 2.0 * self.nose.rc;
            p.push([self.nose.r + self.nose.rr * (0.8 - 0.1 * (k as f64 - 2.0).abs()), self.nose.c + dc]);
        }
        for e in &self.eyes {
            for deg in [180.0, 120.0, 60.0, 0.0, 300.0, 240.0] {
                p.push(e.at(f64::to_radians(deg)));
            }
        }
        for k in 0..12 {
            p.push(self.lips.at(PI - k as f64 * PI / 6.0));
        }
        let inner = Ellipse { rr: self.lips.rr * 0.3, rc: self.lips.rc * 0.6, ..self.lips };
        for k in 0..8 {
            p.push(inner.at(PI - k as f64 * PI / 4.0));
        }
        KeypointSet::new(p).expect("68 finite points")
    }

    /// Full pair: `(X, parse_X, kps_X, Y, parse_Y, kps_Y)`.
    pub fn pair(&self) -> (ImageTensor, ParseMap, KeypointSet, ImageTensor, ParseMap, KeypointSet) {
        let (y, parse_y) = self.render(false);
        let (xm, parse_m) = self.render(true);
        let (x, parse_x) = self.apply_jitter(&xm, &parse_m, &self.jitter);
        let kps_y = self.keypoints();
        let kps_x = KeypointSet::new(kps_y.points().iter().map(|&q| self.jitter.forward(q, self.size)).collect())
            .expect("68 finite points");
        (x, parse_x, kps_x, y, parse_y, kps_y)
    }
}

/// Write `count` identities (one pair each) under `out_dir` and return the
/// manifest path `out_dir/manifest.txt`.
pub fn synthesize_fixture_dataset(seed: u64, count: usize, image_size: usize, out_dir: &Path) -> Result<PathBuf> {
    if !FIXTURE_SIZES.contains(&image_size) {
        return Err(SamcError::ImageSize(image_size));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| SamcError::io(out_dir, e))?;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let face = FixtureFace::new(seed, i, image_size)?;
        let (x, parse_x, kps_x, y, parse_y, kps_y) = face.pair();
        let id = format!("id{i:04}");
        let dir = out_dir.join(&id);
        std::fs::create_dir_all(&dir).map_err(|e| SamcError::io(&dir, e))?;
        let s = PairedSample::new(
            &id,
            dir.join("x.png"),
            dir.join("y.png"),
            dir.join("kps_x.txt"),
            dir.join("kps_y.txt"),
            dir.join("parse_x.png"),
            dir.join("parse_y.png"),
        );
        x.save_png(&s.x)?;
        y.save_png(&s.y)?;
        kps_x.save(&s.kps_x)?;
        kps_y.save(&s.kps_y)?;
        parse_x.save_png(&s.parse_x)?;
        parse_y.save_png(&s.parse_y)?;
        samples.push(s);
    }
    let manifest = out_dir.join("manifest.txt");
    write_manifest(&manifest, &samples)?;
    Ok(manifest)
}
