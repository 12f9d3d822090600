//! Landmark-driven warping of the non-makeup ground truth onto the makeup
//! image's geometry.
//!
//! A thin-plate spline with an affine term maps every target pixel to the
//! location it should be sampled from in the source image; the image is then
//! resampled backwards with bilinear interpolation and edge clamping.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, Dyn, OMatrix, U2};

use crate::error::{Result, SamcError};
use crate::image::ImageTensor;

pub const NUM_KEYPOINTS: usize = 68;

/// Diagonal regularization of the kernel matrix.
pub const TPS_REGULARIZATION: f64 = 1e-8;

/// Landmarks closer than this are treated as one.
pub const DUPLICATE_TOLERANCE: f64 = 1e-9;

/// 68 facial landmarks as `(row, col)` pixel coordinates, origin at the centre
/// of the top-left pixel. Points may lie slightly outside the frame.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointSet {
    points: Vec<[f64; 2]>,
}

impl KeypointSet {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() != NUM_KEYPOINTS {
            return Err(SamcError::Keypoints(format!(
                "expected {NUM_KEYPOINTS} points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(SamcError::Keypoints(format!("point {i} is not finite")));
        }
        Ok(KeypointSet { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn translated(&self, dr: f64, dc: f64) -> Self {
        KeypointSet {
            points: self.points.iter().map(|p| [p[0] + dr, p[1] + dc]).collect(),
        }
    }

    /// Parse the text format: one `row col` pair per line.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut points = Vec::with_capacity(NUM_KEYPOINTS);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let perr = |reason: String| SamcError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let mut it = line.split_whitespace();
            let mut coord = |what: &str| -> Result<f64> {
                it.next()
                    .ok_or_else(|| perr(format!("missing {what} coordinate")))?
                    .parse::<f64>()
                    .map_err(|e| perr(format!("bad {what} coordinate: {e}")))
            };
            let r = coord("row")?;
            let c = coord("col")?;
            if it.next().is_some() {
                return Err(perr("expected exactly two numbers".into()));
            }
            points.push([r, c]);
        }
        KeypointSet::new(points)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SamcError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.points {
            let _ = writeln!(s, "{} {}", p[0], p[1]);
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| SamcError::io(path, e))
    }
}

#[inline]
fn tps_kernel(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        // r^2 log r == 0.5 * r^2 * log(r^2)
        0.5 * r2 * r2.ln()
    }
}

/// A fitted 2-d thin-plate spline `f(p) = sum_i w_i U(|p - c_i|) + a0 + a1 row + a2 col`.
#[derive(Clone, Debug)]
pub struct ThinPlateSpline {
    centers: Vec<[f64; 2]>,
    weights: Vec<[f64; 2]>,
    affine: [[f64; 2]; 3],
}

impl ThinPlateSpline {
    /// Fit an interpolant taking `values[i]` at `centers[i]`.
    pub fn fit(centers: &[[f64; 2]], values: &[[f64; 2]]) -> Result<Self> {
        assert_eq!(centers.len(), values.len());
        let (centers, values) = merge_duplicates(centers, values);
        check_non_degenerate(&centers)?;

        let n = centers.len();
        let mut sys = DMatrix::<f64>::zeros(n + 3, n + 3);
        for i in 0..n {
            for j in 0..n {
                sys[(i, j)] = tps_kernel(dist2(centers[i], centers[j]));
            }
            sys[(i, i)] += TPS_REGULARIZATION;
            let row = [1.0, centers[i][0], centers[i][1]];
            for (k, v) in row.into_iter().enumerate() {
                sys[(i, n + k)] = v;
                sys[(n + k, i)] = v;
            }
        }
        let mut rhs = OMatrix::<f64, Dyn, U2>::zeros(n + 3);
        for (i, v) in values.iter().enumerate() {
            rhs[(i, 0)] = v[0];
            rhs[(i, 1)] = v[1];
        }
        let sol = sys.lu().solve(&rhs).ok_or_else(|| {
            SamcError::SingularSolve(format!("{}x{} augmented kernel system", n + 3, n + 3))
        })?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(SamcError::SingularSolve("non-finite spline coefficients".into()));
        }
        let weights = (0..n).map(|i| [sol[(i, 0)], sol[(i, 1)]]).collect();
        let affine = [0, 1, 2].map(|k| [sol[(n + k, 0)], sol[(n + k, 1)]]);
        Ok(ThinPlateSpline {
            centers,
            weights,
            affine,
        })
    }

    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        let a = &self.affine;
        let mut out = [
            a[0][0] + a[1][0] * p[0] + a[2][0] * p[1],
            a[0][1] + a[1][1] * p[0] + a[2][1] * p[1],
        ];
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let u = tps_kernel(dist2(p, *c));
            out[0] += w[0] * u;
            out[1] += w[1] * u;
        }
        out
    }
}

#[inline]
fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dr, dc) = (a[0] - b[0], a[1] - b[1]);
    dr * dr + dc * dc
}

fn merge_duplicates(centers: &[[f64; 2]], values: &[[f64; 2]]) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let tol2 = DUPLICATE_TOLERANCE * DUPLICATE_TOLERANCE;
    let mut c_out: Vec<[f64; 2]> = Vec::with_capacity(centers.len());
    let mut v_out = Vec::with_capacity(centers.len());
    for (c, v) in centers.iter().zip(values) {
        if c_out.iter().all(|k| dist2(*k, *c) > tol2) {
            c_out.push(*c);
            v_out.push(*v);
        }
    }
    (c_out, v_out)
}

fn check_non_degenerate(centers: &[[f64; 2]]) -> Result<()> {
    if centers.len() < 3 {
        return Err(SamcError::SingularSolve(format!(
            "only {} distinct landmarks; at least 3 non-collinear are required",
            centers.len()
        )));
    }
    let (p0, p1) = (centers[0], centers[1]);
    let d = [p1[0] - p0[0], p1[1] - p0[1]];
    let len = d[0].hypot(d[1]);
    let off_line = centers[2..].iter().any(|p| {
        let cross = d[0] * (p[1] - p0[1]) - d[1] * (p[0] - p0[0]);
        cross.abs() > 1e-9 * len.max(1.0)
    });
    if off_line {
        Ok(())
    } else {
        Err(SamcError::SingularSolve(
            "all landmarks are collinear; the affine part is undetermined".into(),
        ))
    }
}

/// Dense `(dr, dc)` source-sampling offsets, one per pixel, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpField {
    height: usize,
    width: usize,
    displacement: Vec<[f64; 2]>,
}

impl WarpField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, [0.0, 0.0])
    }

    pub fn constant(height: usize, width: usize, d: [f64; 2]) -> Self {
        WarpField {
            height,
            width,
            displacement: vec![d; height * width],
        }
    }

    /// Row-major `(dr, dc)` offsets.
    pub fn from_values(height: usize, width: usize, values: Vec<[f64; 2]>) -> Result<Self> {
        if values.len() != height * width {
            return Err(SamcError::Shape(format!(
                "{} offsets for a {height}x{width} field",
                values.len()
            )));
        }
        Ok(WarpField {
            height,
            width,
            displacement: values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn at(&self, row: usize, col: usize) -> [f64; 2] {
        self.displacement[row * self.width + col]
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.displacement
    }
}

/// Fit the spline sending each `dst` landmark to its `src` counterpart and
/// rasterize its displacement over a `height x width` grid.
pub fn compute_warp_field(
    dst_kps: &KeypointSet,
    src_kps: &KeypointSet,
    height: usize,
    width: usize,
) -> Result<WarpField> {
    let spline = fit_displacement(dst_kps, src_kps)?;
    if height < 8 || width < 8 {
        return Err(SamcError::Shape(format!(
            "warp grid {height}x{width} is smaller than 8x8"
        )));
    }
    let mut displacement = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            displacement.push(spline.eval([r as f64, c as f64]));
        }
    }
    Ok(WarpField {
        height,
        width,
        displacement,
    })
}

/// The continuous displacement spline behind [`compute_warp_field`].
pub fn fit_displacement(dst_kps: &KeypointSet, src_kps: &KeypointSet) -> Result<ThinPlateSpline> {
    let values: Vec<[f64; 2]> = dst_kps
        .points()
        .iter()
        .zip(src_kps.points())
        .map(|(d, s)| [s[0] - d[0], s[1] - d[1]])
        .collect();
    ThinPlateSpline::fit(dst_kps.points(), &values)
}

/// Bilinear sample with coordinates clamped to the image border.
pub fn sample_bilinear(image: &ImageTensor, r: f64, c: f64) -> [f32; 3] {
    let (h, w) = (image.height(), image.width());
    let r = r.clamp(0.0, (h - 1) as f64);
    let c = c.clamp(0.0, (w - 1) as f64);
    let (r0, c0) = (r.floor() as usize, c.floor() as usize);
    let (r1, c1) = ((r0 + 1).min(h - 1), (c0 + 1).min(w - 1));
    let (fr, fc) = (r - r0 as f64, c - c0 as f64);
    let corners = [
        (image.pixel(r0, c0), (1.0 - fr) * (1.0 - fc)),
        (image.pixel(r0, c1), (1.0 - fr) * fc),
        (image.pixel(r1, c0), fr * (1.0 - fc)),
        (image.pixel(r1, c1), fr * fc),
    ];
    let mut out = [0f32; 3];
    for (ch, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (px, wt) in &corners {
            let v = px[ch] as f64;
            acc += v * wt;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        *o = acc.clamp(lo, hi) as f32;
    }
    out
}

/// Backward warp: `out(p) = image(p + field(p))`.
pub fn apply_warp(image: &ImageTensor, field: &WarpField) -> Result<ImageTensor> {
    if (field.height, field.width) != (image.height(), image.width()) {
        return Err(SamcError::Shape(format!(
            "warp field {}x{} does not match image {}x{}",
            field.height,
            field.width,
            image.height(),
            image.width()
        )));
    }
    let mut out = ImageTensor::filled(image.height(), image.width(), [0.0; 3]);
    for r in 0..image.height() {
        for c in 0..image.width() {
            let d = field.at(r, c);
            out.set_pixel(r, c, sample_bilinear(image, r as f64 + d[0], c as f64 + d[1]));
        }
    }
    Ok(out)
}

/// Warp the non-makeup image `y` so its landmarks land on the makeup image's.
pub fn warp_ground_truth(
    y: &ImageTensor,
    kps_y: &KeypointSet,
    kps_x: &KeypointSet,
) -> Result<ImageTensor> {
    let field = compute_warp_field(kps_x, kps_y, y.height(), y.width())?;
    apply_warp(y, &field)
}
