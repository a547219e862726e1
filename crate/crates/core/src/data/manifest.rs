//! Dataset manifests: `image_path,mask_path,label,split` per line.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("split must be train or test, got `{other}`")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleRecord {
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub label: Option<usize>,
    pub split: Split,
}

impl SampleRecord {
    pub fn to_line(&self) -> String {
        let mask = self.mask_path.as_ref().map_or("-".into(), |p| p.display().to_string());
        let label = self.label.map_or("-".into(), |l| l.to_string());
        format!("{},{mask},{label},{}", self.image_path.display(), self.split)
    }
}

/// Parses manifest text. Paths are kept exactly as written.
pub fn parse_manifest(text: &str, class_count: Option<usize>) -> Result<Vec<SampleRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| Error::Manifest { line, message };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let [image, mask, label, split] = fields[..] else {
            return Err(err(format!("expected 4 comma-separated fields, found {}", fields.len())));
        };
        if image.is_empty() || image == "-" {
            return Err(err("image path is required".into()));
        }
        if mask.is_empty() {
            return Err(err("empty mask field (use `-` for none)".into()));
        }
        let label = match label {
            "-" => None,
            l => {
                let v: usize = l.parse().map_err(|_| err(format!("label `{l}` is not a non-negative integer")))?;
                if let Some(k) = class_count.filter(|&k| v >= k) {
                    return Err(err(format!("label {v} outside [0, {k})")));
                }
                Some(v)
            }
        };
        let split = split.parse().map_err(err)?;
        if !seen.insert(image.to_string()) {
            return Err(err(format!("duplicate image path `{image}`")));
        }
        out.push(SampleRecord {
            image_path: image.into(),
            mask_path: (mask != "-").then(|| mask.into()),
            label,
            split,
        });
    }
    Ok(out)
}

pub fn load_manifest(path: &Path, class_count: Option<usize>) -> Result<Vec<SampleRecord>> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::invalid(format!("{}: not UTF-8: {e}", path.display())))?;
    parse_manifest(&text, class_count)
}

/// Joins a record path onto the manifest's directory.
pub fn resolve(manifest: &Path, rel: &Path) -> PathBuf {
    manifest.parent().unwrap_or(Path::new("")).join(rel)
}
