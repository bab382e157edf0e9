//! Filtered basis construction and parameter sampling.
//!
//! A filtered basis is the stack of one filter's outputs under a fixed list of
//! configurations. Configurations come from a direct grid over the parameter
//! ranges ([`dis_grid`]) or from score-isometric selection over a densely
//! calibrated grid ([`calibrate`] then [`iis_select`]).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::filters::{self, FilterConfig};
use crate::image::{Image, Raster};
use crate::metrics;
use crate::par;

/// Name of a tunable filter parameter, matching the canonical config keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    /// `ss`
    SigmaSpatial,
    /// `sr`
    SigmaRange,
    /// `k`
    Window,
    /// `t`
    Iterations,
    /// median window height
    K1,
    /// median window width
    K2,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RangeKind {
    Continuous { lo: f64, hi: f64 },
    Discrete(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamRange {
    pub name: Param,
    pub kind: RangeKind,
}

impl ParamRange {
    pub fn continuous(name: Param, lo: f64, hi: f64) -> Self {
        ParamRange {
            name,
            kind: RangeKind::Continuous { lo, hi },
        }
    }

    pub fn discrete(name: Param, values: Vec<f64>) -> Self {
        ParamRange {
            name,
            kind: RangeKind::Discrete(values),
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.kind {
            RangeKind::Continuous { lo, hi } if !(lo <= hi) => {
                Err(Error::param(format!("range {:?}: lo {lo} > hi {hi}", self.name)))
            }
            RangeKind::Discrete(v) if v.is_empty() => {
                Err(Error::param(format!("range {:?}: empty value set", self.name)))
            }
            _ => Ok(()),
        }
    }

    fn samples(&self, count: usize) -> Vec<f64> {
        match &self.kind {
            RangeKind::Discrete(v) => v.clone(),
            RangeKind::Continuous { lo, hi } => {
                if count == 1 {
                    vec![tidy((lo + hi) / 2.0)]
                } else {
                    (0..count)
                        .map(|i| tidy(lo + (hi - lo) * i as f64 / (count - 1) as f64))
                        .collect()
                }
            }
        }
    }
}

/// Snaps grid values to 12 significant digits so `0.1 + 0.2` prints as `0.3`.
fn tidy(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let scale = 10f64.powi(11 - v.abs().log10().floor() as i32);
    (v * scale).round() / scale
}

fn as_count(name: Param, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::param(format!("{name:?} needs an integer value, got {v}")))
    }
}

/// Returns `cfg` with one parameter replaced.
pub fn with_param(cfg: &FilterConfig, name: Param, value: f64) -> Result<FilterConfig> {
    let mut out = *cfg;
    let unsupported = || {
        Err(Error::param(format!(
            "parameter {name:?} does not apply to {} filters",
            cfg.kind()
        )))
    };
    match (&mut out, name) {
        (FilterConfig::Bilateral { sigma_spatial, .. }, Param::SigmaSpatial)
        | (FilterConfig::RollingGuidance { sigma_spatial, .. }, Param::SigmaSpatial)
        | (FilterConfig::Gaussian { sigma_spatial }, Param::SigmaSpatial) => *sigma_spatial = value,
        (FilterConfig::Bilateral { sigma_range, .. }, Param::SigmaRange)
        | (FilterConfig::RollingGuidance { sigma_range, .. }, Param::SigmaRange) => *sigma_range = value,
        (FilterConfig::Bilateral { window, .. }, Param::Window)
        | (FilterConfig::RollingGuidance { window, .. }, Param::Window) => *window = as_count(name, value)?,
        (FilterConfig::RollingGuidance { iterations, .. }, Param::Iterations) => *iterations = as_count(name, value)?,
        (FilterConfig::Median { k1, .. }, Param::K1) => *k1 = as_count(name, value)?,
        (FilterConfig::Median { k2, .. }, Param::K2) => *k2 = as_count(name, value)?,
        _ => return unsupported(),
    }
    out.validate()?;
    Ok(out)
}

/// Direct isometric sampling: equally spaced values per continuous range
/// (both endpoints included; one point means the midpoint), listed values for
/// discrete ranges, combined as a Cartesian product with the first range
/// varying slowest. Parameters not covered by a range keep their value from
/// `template`.
pub fn dis_grid(template: &FilterConfig, ranges: &[ParamRange], counts: &[usize]) -> Result<Vec<FilterConfig>> {
    if ranges.len() != counts.len() {
        return Err(Error::param(format!(
            "{} ranges but {} counts",
            ranges.len(),
            counts.len()
        )));
    }
    if let Some(i) = counts.iter().position(|c| *c == 0) {
        return Err(Error::param(format!("count for range {i} must be >= 1")));
    }
    ranges.iter().try_for_each(ParamRange::validate)?;

    let axes: Vec<Vec<f64>> = ranges.iter().zip(counts).map(|(r, c)| r.samples(*c)).collect();
    let mut out = vec![*template];
    for (range, values) in ranges.iter().zip(&axes) {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for base in &out {
            for v in values {
                next.push(with_param(base, range.name, *v)?);
            }
        }
        out = next;
    }
    Ok(out)
}

/// Picks `m` entries at evenly spaced positions of `grid` (first and last
/// included), for basis magnitudes that are not a product of per-axis counts.
pub fn dis_truncate(grid: &[FilterConfig], m: usize) -> Result<Vec<FilterConfig>> {
    if m == 0 || m > grid.len() {
        return Err(Error::param(format!(
            "cannot take {m} configs from a grid of {}",
            grid.len()
        )));
    }
    if m == 1 {
        return Ok(vec![grid[(grid.len() - 1) / 2]]);
    }
    Ok((0..m)
        .map(|i| grid[((i * (grid.len() - 1)) as f64 / (m - 1) as f64).round() as usize])
        .collect())
}

/// A configuration together with its mean calibration PSNR.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub config: FilterConfig,
    pub score: f64,
}

/// Scores each candidate by the mean PSNR of `apply(degraded, config)` against
/// `clean`, then sorts ascending by score (stable in candidate order).
pub fn calibrate(candidates: &[FilterConfig], pairs: &[(Image, Image)]) -> Result<Vec<Candidate>> {
    if candidates.is_empty() {
        return Err(Error::param("no calibration candidates"));
    }
    if pairs.is_empty() {
        return Err(Error::param("no calibration pairs"));
    }
    for (i, (d, c)) in pairs.iter().enumerate() {
        d.shape().ensure_same(&c.shape()).map_err(|e| Error::Sample {
            id: format!("calibration pair {i}"),
            source: Box::new(e),
        })?;
    }
    let scored = par::map(candidates, |_, cfg| -> Result<Candidate> {
        let mut total = 0.0;
        for (degraded, clean) in pairs {
            let out = filters::apply(degraded, cfg)?;
            total += metrics::psnr(&out, clean, 1.0)?;
        }
        let score = total / pairs.len() as f64;
        if !score.is_finite() {
            return Err(Error::Filter {
                config: cfg.to_string(),
                source: Box::new(Error::param("non-finite calibration score")),
            });
        }
        Ok(Candidate { config: *cfg, score })
    });
    let mut scored = scored.into_iter().collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| a.score.total_cmp(&b.score));
    Ok(scored)
}

/// Score targets used by [`iis_select`]: `m` values equally spaced over
/// `[min, max]` of the observed scores; `m = 1` yields the max.
pub fn iis_targets(scored: &[Candidate], m: usize) -> Vec<f64> {
    let lo = scored.iter().map(|c| c.score).fold(f64::INFINITY, f64::min);
    let hi = scored.iter().map(|c| c.score).fold(f64::NEG_INFINITY, f64::max);
    if m == 1 {
        return vec![hi];
    }
    (0..m).map(|j| lo + (hi - lo) * j as f64 / (m - 1) as f64).collect()
}

/// Indirect isometric sampling with explicit targets: for each target in
/// ascending order, take the unpicked candidate whose score is nearest, ties
/// going to the higher score and then to the earlier candidate.
///
/// The result is ordered by score, which coincides with target order except
/// in degenerate layouts where a greedy pick overshoots a later target.
pub fn iis_select_targets(scored: &[Candidate], targets: &[f64]) -> Result<Vec<Candidate>> {
    if targets.is_empty() {
        return Err(Error::param("IIS needs at least one target"));
    }
    if targets.len() > scored.len() {
        return Err(Error::param(format!(
            "cannot select {} configs from {} candidates",
            targets.len(),
            scored.len()
        )));
    }
    let mut sorted_targets = targets.to_vec();
    sorted_targets.sort_by(f64::total_cmp);
    let mut taken = vec![false; scored.len()];
    let mut picks = Vec::with_capacity(targets.len());
    for t in sorted_targets {
        let mut best: Option<usize> = None;
        for (i, c) in scored.iter().enumerate() {
            if taken[i] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let (db, di) = ((scored[b].score - t).abs(), (c.score - t).abs());
                    if di < db || (di == db && c.score > scored[b].score) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        let i = best.expect("at least one candidate remains");
        taken[i] = true;
        picks.push(i);
    }
    picks.sort_by(|a, b| scored[*a].score.total_cmp(&scored[*b].score).then(a.cmp(b)));
    Ok(picks.into_iter().map(|i| scored[i].clone()).collect())
}

/// Indirect isometric sampling of `m` configs over the observed score range.
pub fn iis_select(scored: &[Candidate], m: usize) -> Result<Vec<FilterConfig>> {
    if m == 0 {
        return Err(Error::param("IIS needs m >= 1"));
    }
    if m > scored.len() {
        return Err(Error::param(format!(
            "cannot select {m} configs from {} candidates",
            scored.len()
        )));
    }
    let targets = iis_targets(scored, m);
    Ok(iis_select_targets(scored, &targets)?
        .into_iter()
        .map(|c| c.config)
        .collect())
}

/// Source image plus one filtered plane per configuration, in configuration order.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredBasis {
    source: Image,
    configs: Vec<FilterConfig>,
    planes: Vec<Image>,
}

impl FilteredBasis {
    /// Assembles a basis from precomputed planes (e.g. loaded from a cache).
    pub fn from_planes(source: Image, configs: Vec<FilterConfig>, planes: Vec<Image>) -> Result<Self> {
        if planes.is_empty() {
            return Err(Error::param("a filtered basis needs at least one plane"));
        }
        if planes.len() != configs.len() {
            return Err(Error::MagnitudeMismatch {
                expected: configs.len(),
                found: planes.len(),
            });
        }
        for p in &planes {
            source.shape().ensure_same(&p.shape())?;
        }
        Ok(FilteredBasis {
            source,
            configs,
            planes,
        })
    }

    pub fn source(&self) -> &Image {
        &self.source
    }

    pub fn configs(&self) -> &[FilterConfig] {
        &self.configs
    }

    pub fn planes(&self) -> &[Image] {
        &self.planes
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }
}

/// Filters `source` under every config. Planes are computed independently
/// (in parallel when enabled) and returned in config order.
pub fn build_basis(source: &Image, configs: &[FilterConfig]) -> Result<FilteredBasis> {
    if configs.is_empty() {
        return Err(Error::param("a filtered basis needs at least one config"));
    }
    let planes = par::map(configs, |_, cfg| filters::apply(source, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(FilteredBasis {
        source: source.clone(),
        configs: configs.to_vec(),
        planes,
    })
}

/// Signed residual planes `source - plane[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBasis {
    planes: Vec<Raster>,
}

impl ResidualBasis {
    pub fn planes(&self) -> &[Raster] {
        &self.planes
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }
}

pub fn build_residuals(basis: &FilteredBasis) -> ResidualBasis {
    let planes = basis
        .planes
        .iter()
        .map(|p| Raster::difference(&basis.source, p).expect("basis planes share the source shape"))
        .collect();
    ResidualBasis { planes }
}

/// Shipped basis recipes.
pub mod presets {
    use super::*;

    pub const BILATERAL_WINDOW: usize = 15;

    /// Calibration grid for bilateral IIS: range sigma over `[0.1, 1.1]` in
    /// steps of 0.1, spatial sigma over `[0.5, 3.5]` in steps of 0.5, `k = 15`.
    ///
    /// Range sigma is on the `[0, 1]` intensity scale and spatial sigma is in
    /// pixels. With the roles the other way round every candidate collapses
    /// to a near-identity or a plain small Gaussian, since intensities never
    /// differ by more than 1.
    pub fn bilateral_grid_ranges() -> (Vec<ParamRange>, Vec<usize>) {
        (
            vec![
                ParamRange::continuous(Param::SigmaRange, 0.1, 1.1),
                ParamRange::continuous(Param::SigmaSpatial, 0.5, 3.5),
            ],
            vec![11, 7],
        )
    }

    /// Calibration pairs used to rank [`bilateral_grid`]: four seeded
    /// synthetic 64x64 images, each paired with itself, so a candidate scores
    /// by how closely it reproduces its input.
    pub fn fidelity_calibration_pairs() -> Vec<(Image, Image)> {
        (0..4)
            .map(|i| {
                let img = crate::synth::natural(64, 64, 1, 1000 + i);
                (img.clone(), img)
            })
            .collect()
    }

    fn bilateral_template() -> FilterConfig {
        FilterConfig::Bilateral {
            sigma_spatial: 1.0,
            sigma_range: 1.0,
            window: BILATERAL_WINDOW,
        }
    }

    /// The 77-candidate bilateral calibration grid.
    pub fn bilateral_grid() -> Vec<FilterConfig> {
        let (ranges, counts) = bilateral_grid_ranges();
        dis_grid(&bilateral_template(), &ranges, &counts).expect("preset ranges are valid")
    }

    /// Magnitude-9 bilateral basis selected by IIS over [`bilateral_grid`].
    /// Regenerate with `compfilter calibrate --preset bilateral-grid --iis 9`.
    pub const BILATERAL_IIS9: &str = include_str!("../presets/bilateral_iis9.txt");

    pub fn bilateral_iis9() -> Vec<FilterConfig> {
        parse_manifest(BILATERAL_IIS9).expect("shipped preset parses")
    }

    /// Eight median window shapes (rows x columns).
    pub fn median_shapes() -> Vec<FilterConfig> {
        [(3, 3), (3, 5), (3, 7), (3, 9), (5, 5), (5, 7), (5, 9), (7, 7)]
            .into_iter()
            .map(|(k1, k2)| FilterConfig::Median { k1, k2 })
            .collect()
    }

    /// Rolling guidance basis: range sigma {0.2, 0.5} x spatial sigma {3, 6}
    /// x iterations {2, 4}, window 9.
    pub fn rolling_guidance() -> Vec<FilterConfig> {
        let template = FilterConfig::RollingGuidance {
            sigma_range: 0.2,
            sigma_spatial: 3.0,
            window: 9,
            iterations: 2,
        };
        dis_grid(
            &template,
            &[
                ParamRange::discrete(Param::SigmaRange, vec![0.2, 0.5]),
                ParamRange::discrete(Param::SigmaSpatial, vec![3.0, 6.0]),
                ParamRange::discrete(Param::Iterations, vec![2.0, 4.0]),
            ],
            &[1, 1, 1],
        )
        .expect("preset ranges are valid")
    }

    /// Looks a preset up by its CLI name.
    pub fn by_name(name: &str) -> Option<Vec<FilterConfig>> {
        match name {
            "bilateral-iis9" => Some(bilateral_iis9()),
            "bilateral-grid" => Some(bilateral_grid()),
            "median8" => Some(median_shapes()),
            "rgf8" => Some(rolling_guidance()),
            _ => None,
        }
    }

    pub const NAMES: &[&str] = &["bilateral-iis9", "bilateral-grid", "median8", "rgf8"];
}

/// Parses a preset manifest: one canonical config per line, `#` starts a comment.
pub fn parse_manifest(text: &str) -> Result<Vec<FilterConfig>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(line.parse().map_err(|e: Error| Error::Manifest {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    if out.is_empty() {
        return Err(Error::Manifest {
            line: 0,
            reason: "manifest lists no configs".into(),
        });
    }
    Ok(out)
}

pub fn format_manifest(configs: &[FilterConfig], header: &str) -> String {
    let mut out = String::new();
    for line in header.lines() {
        let _ = writeln!(out, "# {line}");
    }
    for c in configs {
        let _ = writeln!(out, "{c}");
    }
    out
}

/// Loads a manifest file, or a built-in preset when `spec` names one.
pub fn load_configs(spec: &str) -> Result<Vec<FilterConfig>> {
    if let Some(p) = presets::by_name(spec) {
        return Ok(p);
    }
    let path = Path::new(spec);
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
    parse_manifest(&text)
}

/// Calibration report as CSV with header `config,score_db`. Config strings
/// contain commas and are therefore quoted.
pub fn calibration_csv(scored: &[Candidate]) -> String {
    let mut out = String::from("config,score_db\n");
    for c in scored {
        let _ = writeln!(out, "\"{}\",{:.6}", c.config, c.score);
    }
    out
}
