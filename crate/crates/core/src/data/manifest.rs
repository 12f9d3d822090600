use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Result, SamcError};

/// One makeup / non-makeup pair and its side files. The cache fields are
/// filled in by preprocessing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairedSample {
    pub identity: String,
    pub x: PathBuf,
    pub y: PathBuf,
    pub kps_x: PathBuf,
    pub kps_y: PathBuf,
    pub parse_x: PathBuf,
    pub parse_y: PathBuf,
    pub w: Option<PathBuf>,
    pub labels_x: Option<PathBuf>,
    pub labels_y: Option<PathBuf>,
}

const REQUIRED: [&str; 7] = ["identity", "x", "y", "kps_x", "kps_y", "parse_x", "parse_y"];
const OPTIONAL: [&str; 3] = ["w", "labels_x", "labels_y"];

impl PairedSample {
    pub fn new(
        identity: &str,
        x: PathBuf,
        y: PathBuf,
        kps_x: PathBuf,
        kps_y: PathBuf,
        parse_x: PathBuf,
        parse_y: PathBuf,
    ) -> Self {
        PairedSample {
            identity: identity.to_string(),
            x,
            y,
            kps_x,
            kps_y,
            parse_x,
            parse_y,
            w: None,
            labels_x: None,
            labels_y: None,
        }
    }

    pub fn is_preprocessed(&self) -> bool {
        self.w.is_some() && self.labels_x.is_some() && self.labels_y.is_some()
    }

    fn fields(&self) -> Vec<(&'static str, &Path)> {
        let mut v = vec![
            ("x", self.x.as_path()),
            ("y", self.y.as_path()),
            ("kps_x", self.kps_x.as_path()),
            ("kps_y", self.kps_y.as_path()),
            ("parse_x", self.parse_x.as_path()),
            ("parse_y", self.parse_y.as_path()),
        ];
        for (k, p) in [("w", &self.w), ("labels_x", &self.labels_x), ("labels_y", &self.labels_y)] {
            if let Some(p) = p {
                v.push((k, p.as_path()));
            }
        }
        v
    }
}

/// Parse manifest text. Each non-empty line holds whitespace-separated
/// `key=value` tokens; `#` starts a comment. Relative paths resolve against
/// `base`.
pub fn parse_manifest(text: &str, base: &Path, path: &Path) -> Result<Vec<PairedSample>> {
    let mut out = Vec::new();
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
        let mut fields: Vec<(&str, &str)> = Vec::new();
        for tok in line.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| perr(format!("token `{tok}` is not key=value")))?;
            if !REQUIRED.contains(&k) && !OPTIONAL.contains(&k) {
                return Err(perr(format!("unknown field `{k}`")));
            }
            if v.is_empty() {
                return Err(perr(format!("field `{k}` is empty")));
            }
            if fields.iter().any(|(f, _)| *f == k) {
                return Err(perr(format!("field `{k}` given twice")));
            }
            fields.push((k, v));
        }
        let get = |k: &str| fields.iter().find(|(f, _)| *f == k).map(|(_, v)| *v);
        let req = |k: &str| get(k).ok_or_else(|| perr(format!("missing field `{k}`")));
        let resolve = |v: &str| base.join(v);
        let identity = req("identity")?;
        let mut s = PairedSample::new(
            identity,
            resolve(req("x")?),
            resolve(req("y")?),
            resolve(req("kps_x")?),
            resolve(req("kps_y")?),
            resolve(req("parse_x")?),
            resolve(req("parse_y")?),
        );
        s.w = get("w").map(resolve);
        s.labels_x = get("labels_x").map(resolve);
        s.labels_y = get("labels_y").map(resolve);
        out.push(s);
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<PairedSample>> {
    let text = std::fs::read_to_string(path).map_err(|e| SamcError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let base = if base.as_os_str().is_empty() { Path::new(".") } else { base };
    let base = std::fs::canonicalize(base).map_err(|e| SamcError::io(base, e))?;
    parse_manifest(&text, &base, path)
}

/// Write a manifest, storing paths relative to its directory where possible.
pub fn write_manifest(path: &Path, samples: &[PairedSample]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut text = String::new();
    for s in samples {
        if s.identity.contains(char::is_whitespace) || s.identity.is_empty() {
            return Err(SamcError::Config(format!("identity `{}` must be a non-empty token", s.identity)));
        }
        let _ = write!(text, "identity={}", s.identity);
        for (k, p) in s.fields() {
            let rel = p.strip_prefix(base).unwrap_or(p);
            let shown = rel.to_string_lossy();
            if shown.contains(char::is_whitespace) {
                return Err(SamcError::Config(format!("path `{shown}` contains whitespace")));
            }
            let _ = write!(text, " {k}={shown}");
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| SamcError::io(path, e))
}
