use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One filter invocation with all of its parameters.
///
/// Canonical text forms (also accepted by [`FromStr`]):
///
/// ```text
/// bilateral:ss=0.5,sr=1.5,k=15
/// median:3x5
/// rgf:sr=0.2,ss=3,k=9,t=2
/// gauss:ss=2
/// ```
///
/// For `median:AxB`, `A` is the window height and `B` its width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterConfig {
    Bilateral {
        sigma_spatial: f64,
        sigma_range: f64,
        window: usize,
    },
    Median {
        k1: usize,
        k2: usize,
    },
    RollingGuidance {
        sigma_range: f64,
        sigma_spatial: f64,
        window: usize,
        iterations: usize,
    },
    Gaussian {
        sigma_spatial: f64,
    },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!(
            "{name} must be a positive finite number, got {v}"
        )))
    }
}

fn odd(name: &str, v: usize) -> Result<()> {
    if v >= 1 && v % 2 == 1 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be odd and >= 1, got {v}")))
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterConfig::Bilateral {
                sigma_spatial,
                sigma_range,
                window,
            } => {
                positive("sigma_spatial", sigma_spatial)?;
                positive("sigma_range", sigma_range)?;
                odd("window", window)
            }
            FilterConfig::Median { k1, k2 } => {
                odd("k1", k1)?;
                odd("k2", k2)
            }
            FilterConfig::RollingGuidance {
                sigma_range,
                sigma_spatial,
                window,
                ..
            } => {
                positive("sigma_spatial", sigma_spatial)?;
                positive("sigma_range", sigma_range)?;
                odd("window", window)
            }
            FilterConfig::Gaussian { sigma_spatial } => positive("sigma_spatial", sigma_spatial),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FilterConfig::Bilateral { .. } => "bilateral",
            FilterConfig::Median { .. } => "median",
            FilterConfig::RollingGuidance { .. } => "rgf",
            FilterConfig::Gaussian { .. } => "gauss",
        }
    }
}

impl fmt::Display for FilterConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            FilterConfig::Bilateral {
                sigma_spatial,
                sigma_range,
                window,
            } => write!(f, "bilateral:ss={sigma_spatial},sr={sigma_range},k={window}"),
            FilterConfig::Median { k1, k2 } => write!(f, "median:{k1}x{k2}"),
            FilterConfig::RollingGuidance {
                sigma_range,
                sigma_spatial,
                window,
                iterations,
            } => write!(f, "rgf:sr={sigma_range},ss={sigma_spatial},k={window},t={iterations}"),
            FilterConfig::Gaussian { sigma_spatial } => write!(f, "gauss:ss={sigma_spatial}"),
        }
    }
}

struct Fields<'a> {
    input: &'a str,
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn parse(input: &'a str, body: &'a str) -> Result<Self> {
        let mut pairs = Vec::new();
        for part in body.split(',') {
            let (k, v) = part.split_once('=').ok_or_else(|| Error::ConfigParse {
                input: input.into(),
                reason: format!("expected key=value, found `{part}`"),
            })?;
            let k = k.trim();
            if pairs.iter().any(|(seen, _)| *seen == k) {
                return Err(Error::ConfigParse {
                    input: input.into(),
                    reason: format!("duplicate key `{k}`"),
                });
            }
            pairs.push((k, v.trim()));
        }
        Ok(Fields { input, pairs })
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let idx = self
            .pairs
            .iter()
            .position(|(k, _)| *k == key)
            .ok_or_else(|| Error::ConfigParse {
                input: self.input.into(),
                reason: format!("missing `{key}`"),
            })?;
        let (_, v) = self.pairs.remove(idx);
        v.parse().map_err(|_| Error::ConfigParse {
            input: self.input.into(),
            reason: format!("bad value `{v}` for `{key}`"),
        })
    }

    fn finish(self) -> Result<()> {
        match self.pairs.first() {
            None => Ok(()),
            Some((k, _)) => Err(Error::ConfigParse {
                input: self.input.into(),
                reason: format!("unknown key `{k}`"),
            }),
        }
    }
}

impl FromStr for FilterConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let input = s.trim();
        let (kind, body) = input.split_once(':').ok_or_else(|| Error::ConfigParse {
            input: input.into(),
            reason: "expected `kind:params`".into(),
        })?;
        let cfg = match kind.trim() {
            "bilateral" => {
                let mut f = Fields::parse(input, body)?;
                let cfg = FilterConfig::Bilateral {
                    sigma_spatial: f.take("ss")?,
                    sigma_range: f.take("sr")?,
                    window: f.take("k")?,
                };
                f.finish()?;
                cfg
            }
            "rgf" => {
                let mut f = Fields::parse(input, body)?;
                let cfg = FilterConfig::RollingGuidance {
                    sigma_range: f.take("sr")?,
                    sigma_spatial: f.take("ss")?,
                    window: f.take("k")?,
                    iterations: f.take("t")?,
                };
                f.finish()?;
                cfg
            }
            "gauss" => {
                let mut f = Fields::parse(input, body)?;
                let cfg = FilterConfig::Gaussian {
                    sigma_spatial: f.take("ss")?,
                };
                f.finish()?;
                cfg
            }
            "median" => {
                let (a, b) = body.split_once('x').ok_or_else(|| Error::ConfigParse {
                    input: input.into(),
                    reason: "median expects `median:K1xK2`".into(),
                })?;
                let parse = |v: &str| {
                    v.trim().parse::<usize>().map_err(|_| Error::ConfigParse {
                        input: input.into(),
                        reason: format!("bad window size `{v}`"),
                    })
                };
                FilterConfig::Median {
                    k1: parse(a)?,
                    k2: parse(b)?,
                }
            }
            other => {
                return Err(Error::ConfigParse {
                    input: input.into(),
                    reason: format!("unknown filter kind `{other}`"),
                })
            }
        };
        cfg.validate().map_err(|e| Error::ConfigParse {
            input: input.into(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }
}
