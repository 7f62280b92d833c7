//! Paired hazy/clean corpora: the manifest file, directory scanning and
//! scene-level train/test splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{is_image_file, Rgb};

/// File name used for manifests written next to synthesized images.
pub const MANIFEST_FILE_NAME: &str = "manifest.tsv";

#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub hazy: PathBuf,
    pub clean: PathBuf,
    pub beta: Option<f64>,
    pub airlight: Option<Rgb>,
    pub depth_kind: Option<String>,
}

impl PairRecord {
    pub fn new(hazy: impl Into<PathBuf>, clean: impl Into<PathBuf>) -> Self {
        PairRecord {
            hazy: hazy.into(),
            clean: clean.into(),
            beta: None,
            airlight: None,
            depth_kind: None,
        }
    }
}

/// Ordered, duplicate-free list of hazy/clean pairs. Records are kept in
/// byte-wise lexicographic order of the hazy path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairManifest {
    records: Vec<PairRecord>,
}

fn path_key(p: &Path) -> &[u8] {
    p.as_os_str().as_encoded_bytes()
}

impl PairManifest {
    pub fn new(mut records: Vec<PairRecord>) -> Result<Self> {
        for r in &records {
            if r.hazy.as_os_str().is_empty() || r.clean.as_os_str().is_empty() {
                return Err(Error::InvalidParameter(
                    "manifest paths must be non-empty".into(),
                ));
            }
        }
        records.sort_by(|a, b| path_key(&a.hazy).cmp(path_key(&b.hazy)));
        if let Some(w) = records.windows(2).find(|w| w[0].hazy == w[1].hazy) {
            return Err(Error::DuplicateHazy(w[0].hazy.clone()));
        }
        Ok(PairManifest { records })
    }

    pub fn records(&self) -> &[PairRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Serializes to the tab-separated manifest format. Paths under `base`
    /// are written relative to it.
    pub fn to_tsv(&self, base: Option<&Path>) -> String {
        let rel = |p: &Path| -> String {
            let shown = base
                .and_then(|b| p.strip_prefix(b).ok())
                .filter(|r| !r.as_os_str().is_empty())
                .unwrap_or(p);
            shown.to_string_lossy().into_owned()
        };
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        let mut out = String::new();
        for r in &self.records {
            let a = r.airlight.map(Rgb::to_array);
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                rel(&r.hazy),
                rel(&r.clean),
                opt(r.beta),
                opt(a.map(|a| a[0])),
                opt(a.map(|a| a[1])),
                opt(a.map(|a| a[2])),
                r.depth_kind.as_deref().unwrap_or("-"),
            );
        }
        out
    }

    /// Parses the manifest format. Relative paths are resolved against `base`.
    pub fn from_tsv(text: &str, base: Option<&Path>) -> Result<Self> {
        let resolve = |s: &str| -> PathBuf {
            let p = PathBuf::from(s);
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 7 {
                return Err(Error::MalformedManifest {
                    line: line_no,
                    message: format!("expected 7 tab-separated fields, found {}", fields.len()),
                });
            }
            let num = |s: &str, name: &str| -> Result<Option<f64>> {
                if s == "-" {
                    return Ok(None);
                }
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| Error::MalformedManifest {
                        line: line_no,
                        message: format!("bad {name} value `{s}`"),
                    })
            };
            let beta = num(fields[2], "beta")?;
            let channels = [
                num(fields[3], "A_r")?,
                num(fields[4], "A_g")?,
                num(fields[5], "A_b")?,
            ];
            let airlight = match channels {
                [Some(r), Some(g), Some(b)] => Some(Rgb::new(r, g, b)),
                [None, None, None] => None,
                _ => {
                    return Err(Error::MalformedManifest {
                        line: line_no,
                        message: "airlight must have all three channels or none".into(),
                    })
                }
            };
            records.push(PairRecord {
                hazy: resolve(fields[0]),
                clean: resolve(fields[1]),
                beta,
                airlight,
                depth_kind: (fields[6] != "-").then(|| fields[6].to_string()),
            });
        }
        PairManifest::new(records)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().filter(|p| !p.as_os_str().is_empty());
        fs::write(path, self.to_tsv(base)).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty());
        PairManifest::from_tsv(&text, base)
    }
}

/// How a hazy file name is mapped to its clean counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StemRule {
    /// `<stem>` or `<stem>_<airlight>_<beta>` maps to clean `<stem>`.
    #[default]
    ParameterSuffix,
    /// Hazy and clean stems must be identical.
    Exact,
}

impl FromStr for StemRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "suffix" => Ok(StemRule::ParameterSuffix),
            "exact" => Ok(StemRule::Exact),
            other => Err(Error::InvalidParameter(format!(
                "stem rule must be `suffix` or `exact`, got `{other}`"
            ))),
        }
    }
}

/// Parsed hazy file name: the scene stem plus any `(airlight mean, beta)` suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct HazyName {
    pub stem: String,
    pub airlight_mean: Option<f64>,
    pub beta: Option<f64>,
}

pub fn parse_hazy_stem(stem: &str, rule: StemRule) -> HazyName {
    let plain = HazyName {
        stem: stem.to_string(),
        airlight_mean: None,
        beta: None,
    };
    if rule == StemRule::Exact {
        return plain;
    }
    let mut parts = stem.rsplitn(3, '_');
    let (Some(p2), Some(p1), Some(base)) = (parts.next(), parts.next(), parts.next()) else {
        return plain;
    };
    match (p1.parse::<f64>(), p2.parse::<f64>()) {
        (Ok(a), Ok(b)) if !base.is_empty() && a.is_finite() && b.is_finite() => HazyName {
            stem: base.to_string(),
            airlight_mean: Some(a),
            beta: Some(b),
        },
        _ => plain,
    }
}

fn sorted_image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && is_image_file(&path) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| path_key(a).cmp(path_key(b)));
    Ok(files)
}

pub(crate) fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    sorted_image_files(dir)
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutcome {
    pub manifest: PairManifest,
    /// Hazy files with no clean counterpart.
    pub skipped: Vec<PathBuf>,
}

/// Pairs every hazy image with a clean image by stem.
///
/// When `hazy_dir` holds a manifest written by the synthesizer, its
/// recorded parameters take precedence over what the file names say.
pub fn scan_pairs(hazy_dir: &Path, clean_dir: &Path, rule: StemRule) -> Result<ScanOutcome> {
    let mut clean_by_stem: BTreeMap<String, PathBuf> = BTreeMap::new();
    for path in sorted_image_files(clean_dir)? {
        clean_by_stem.entry(file_stem(&path)).or_insert(path);
    }

    let recorded = {
        let path = hazy_dir.join(MANIFEST_FILE_NAME);
        if path.is_file() {
            Some(PairManifest::read(&path)?)
        } else {
            None
        }
    };

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for hazy in sorted_image_files(hazy_dir)? {
        let name = parse_hazy_stem(&file_stem(&hazy), rule);
        let Some(clean) = clean_by_stem.get(&name.stem) else {
            skipped.push(hazy);
            continue;
        };
        let known = recorded
            .as_ref()
            .and_then(|m| m.records().iter().find(|r| r.hazy == hazy && &r.clean == clean));
        let record = match known {
            Some(r) => r.clone(),
            None => PairRecord {
                hazy,
                clean: clean.clone(),
                beta: name.beta,
                airlight: name.airlight_mean.map(Rgb::gray),
                depth_kind: None,
            },
        };
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::NoMatches);
    }
    Ok(ScanOutcome {
        manifest: PairManifest::new(records)?,
        skipped,
    })
}

/// Seeded scene-level split: every pair sharing a clean image lands on the
/// same side.
pub fn split(
    manifest: &PairManifest,
    train_fraction: f64,
    seed: u64,
) -> Result<(PairManifest, PairManifest)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let scenes: BTreeSet<&[u8]> = manifest.records.iter().map(|r| path_key(&r.clean)).collect();
    let mut scenes: Vec<&[u8]> = scenes.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scenes.shuffle(&mut rng);
    let n_train = (train_fraction * scenes.len() as f64).round() as usize;
    if n_train == 0 {
        return Err(Error::EmptySplit("train"));
    }
    if n_train >= scenes.len() {
        return Err(Error::EmptySplit("test"));
    }
    let train_scenes: BTreeSet<&[u8]> = scenes[..n_train].iter().copied().collect();
    let (train, test): (Vec<_>, Vec<_>) = manifest
        .records
        .iter()
        .cloned()
        .partition(|r| train_scenes.contains(path_key(&r.clean)));
    Ok((PairManifest::new(train)?, PairManifest::new(test)?))
}
