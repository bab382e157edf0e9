//! Dataset manifests.
//!
//! ```text
//! # explicit pairs: degraded input, clean target
//! pair noisy/001.pgm clean/001.pgm
//! # clean image plus a degradation recipe
//! clean clean/002.pgm gaussian=25
//! clean clean/003.pgm impulse=0.4
//! # optional train fraction (default 0.9)
//! split 0.8
//! ```
//!
//! Relative paths resolve against the manifest's directory. Recipe noise is
//! drawn once per sample with a seed derived from `(seed, sample index)`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{Image, Raster};
use crate::{noise, pnm};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Degradation {
    Gaussian { sigma255: f64 },
    Impulse { density: f64 },
}

impl Degradation {
    pub fn apply(&self, clean: &Image, seed: u64) -> Result<Image> {
        match *self {
            Degradation::Gaussian { sigma255 } => noise::add_gaussian_noise(clean, sigma255, seed),
            Degradation::Impulse { density } => noise::add_impulse_noise(clean, density, seed),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        let (k, v) = s.split_once('=')?;
        let v: f64 = v.parse().ok()?;
        match k {
            "gaussian" if v >= 0.0 => Some(Degradation::Gaussian { sigma255: v }),
            "impulse" if (0.0..=1.0).contains(&v) => Some(Degradation::Impulse { density: v }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Pair { input: PathBuf, target: PathBuf },
    Clean { path: PathBuf, degradation: Degradation },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub entries: Vec<Entry>,
    pub train_fraction: Option<f64>,
}

/// A loaded training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub input: Image,
    pub target: Image,
    /// Ground-truth artifact; defaults to `input - target` when absent.
    pub artifact: Option<Raster>,
}

impl Sample {
    pub fn new(id: impl Into<String>, input: Image, target: Image) -> Self {
        Sample {
            id: id.into(),
            input,
            target,
            artifact: None,
        }
    }
}

/// SplitMix64 finalizer over `seed` and `index`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        ^ index
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl DatasetSpec {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut train_fraction = None;
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Manifest { line: i + 1, reason };
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["pair", input, target] => entries.push(Entry::Pair {
                    input: resolve(input),
                    target: resolve(target),
                }),
                ["clean", path, recipe] => {
                    let degradation =
                        Degradation::parse(recipe).ok_or_else(|| err(format!("bad degradation `{recipe}`")))?;
                    entries.push(Entry::Clean {
                        path: resolve(path),
                        degradation,
                    })
                }
                ["split", f] => {
                    let f: f64 = f
                        .parse()
                        .ok()
                        .filter(|f| *f > 0.0 && *f <= 1.0)
                        .ok_or_else(|| err(format!("split must be in (0, 1], got `{f}`")))?;
                    train_fraction = Some(f);
                }
                _ => return Err(err(format!("unrecognized line `{line}`"))),
            }
        }
        if entries.is_empty() {
            return Err(Error::Manifest {
                line: 0,
                reason: "dataset lists no samples".into(),
            });
        }
        Ok(DatasetSpec {
            entries,
            train_fraction,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading dataset {}", path.display()), e))?;
        DatasetSpec::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Loads every entry, synthesizing recipe noise deterministically.
    pub fn load(&self, seed: u64) -> Result<Vec<Sample>> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let (id, res) = match e {
                    Entry::Pair { input, target } => (
                        input.display().to_string(),
                        pnm::read_image(input).and_then(|inp| Ok((inp, pnm::read_image(target)?))),
                    ),
                    Entry::Clean { path, degradation } => (
                        path.display().to_string(),
                        pnm::read_image(path)
                            .and_then(|clean| Ok((degradation.apply(&clean, derive_seed(seed, i as u64))?, clean))),
                    ),
                };
                let wrap = |e: Error| Error::Sample {
                    id: id.clone(),
                    source: Box::new(e),
                };
                let (input, target) = res.map_err(wrap)?;
                input.shape().ensure_same(&target.shape()).map_err(wrap)?;
                Ok(Sample::new(id.clone(), input, target))
            })
            .collect()
    }

    pub fn train_fraction(&self) -> f64 {
        self.train_fraction.unwrap_or(DEFAULT_TRAIN_FRACTION)
    }
}

/// Splits in manifest order: the first `round(n * fraction)` samples (at least
/// one) train, the rest validate.
pub fn split<T: Clone>(samples: &[T], train_fraction: f64) -> (Vec<T>, Vec<T>) {
    let n = samples.len();
    let k = ((n as f64 * train_fraction).round() as usize).clamp(1.min(n), n);
    (samples[..k].to_vec(), samples[k..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines_and_resolves_paths() {
        let spec = DatasetSpec::parse(
            "# c\npair a.pgm b.pgm\nclean /abs/c.pgm gaussian=25 # trailing\nclean d.pgm impulse=0.4\nsplit 0.5\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(spec.entries.len(), 3);
        assert_eq!(
            spec.entries[0],
            Entry::Pair {
                input: "/data/a.pgm".into(),
                target: "/data/b.pgm".into()
            }
        );
        assert_eq!(
            spec.entries[1],
            Entry::Clean {
                path: "/abs/c.pgm".into(),
                degradation: Degradation::Gaussian { sigma255: 25.0 }
            }
        );
        assert_eq!(spec.train_fraction(), 0.5);
    }

    #[test]
    fn manifest_errors_name_the_line() {
        for (text, line) in [
            ("pair a.pgm\n", 1),
            ("pair a b\nclean x.pgm blur=3\n", 2),
            ("pair a b\nsplit 1.5\n", 2),
            ("clean x.pgm impulse=2\n", 1),
        ] {
            match DatasetSpec::parse(text, Path::new(".")) {
                Err(Error::Manifest { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("unexpected {other:?}"),
            }
        }
        assert!(DatasetSpec::parse("# nothing\n", Path::new(".")).is_err());
    }

    #[test]
    fn split_sizes() {
        let v: Vec<usize> = (0..10).collect();
        assert_eq!(split(&v, 0.9).0.len(), 9);
        assert_eq!(split(&v, 1.0).1.len(), 0);
        assert_eq!(split(&[1], 0.1).0, vec![1]);
    }

    #[test]
    fn seeds_differ_per_index() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
