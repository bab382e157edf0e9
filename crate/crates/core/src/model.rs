//! Dual-branch composition model.
//!
//! Per sample (pixel and channel):
//!
//! ```text
//! content  = sum_i wc[i] * plane_i    + bc
//! residual = sum_i wr[i] * residual_i + br
//! merged   = m_content * content + m_residual * (source - residual) + m_bias
//! ```
//!
//! Weights are shared across colour channels. Forward values are never
//! clamped; callers clamp when exporting an image.

use std::fmt::Write as _;
use std::path::Path;

use crate::basis::{FilteredBasis, ResidualBasis};
use crate::error::{Error, Result};
use crate::filters::FilterConfig;
use crate::image::{Image, Raster, Shape};
use crate::par;

pub const MODEL_FORMAT: &str = "compfilter-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BranchWeights {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeWeights {
    pub w_content: f64,
    pub w_residual_path: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.1,
            lambda: 0.1,
            gamma: 1.0,
        }
    }
}

impl LossWeights {
    /// Content branch only.
    pub fn content_only() -> Self {
        LossWeights {
            alpha: 1.0,
            lambda: 0.0,
            gamma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("alpha", self.alpha), ("lambda", self.lambda), ("gamma", self.gamma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(format!("loss weight {n} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Mse,
    /// Mean absolute error per component plus `tv_weight * TV(merged)`.
    L1Tv {
        tv_weight: f64,
    },
}

impl LossKind {
    fn label(&self) -> String {
        match self {
            LossKind::Mse => "mse".into(),
            LossKind::L1Tv { tv_weight } => format!("l1tv:{}", fmt_f64(*tv_weight)),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        if s == "mse" {
            return Some(LossKind::Mse);
        }
        s.strip_prefix("l1tv:")
            .and_then(|w| w.parse().ok())
            .map(|tv_weight| LossKind::L1Tv { tv_weight })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub weights: LossWeights,
    pub kind: LossKind,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            weights: LossWeights::default(),
            kind: LossKind::Mse,
        }
    }
}

/// Which model output is exported by `apply` and scored by evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputBranch {
    #[default]
    Merged,
    Content,
}

impl OutputBranch {
    fn label(&self) -> &'static str {
        match self {
            OutputBranch::Merged => "merged",
            OutputBranch::Content => "content",
        }
    }
}

/// Optimizer settings recorded alongside trained weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingRecord {
    pub loss: LossSpec,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub lr0: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionModel {
    pub basis_configs: Vec<FilterConfig>,
    pub content: BranchWeights,
    pub residual: BranchWeights,
    pub merge: MergeWeights,
    pub output: OutputBranch,
    pub training: Option<TrainingRecord>,
}

/// Gradients laid out like the model's learnable fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub content: BranchWeights,
    pub residual: BranchWeights,
    pub merge: MergeWeights,
}

impl ModelGradients {
    pub fn zeros(n: usize) -> Self {
        ModelGradients {
            content: BranchWeights {
                weights: vec![0.0; n],
                bias: 0.0,
            },
            residual: BranchWeights {
                weights: vec![0.0; n],
                bias: 0.0,
            },
            merge: MergeWeights {
                w_content: 0.0,
                w_residual_path: 0.0,
                bias: 0.0,
            },
        }
    }

    /// Same order as [`CompositionModel::params`].
    pub fn to_vec(&self) -> Vec<f64> {
        flatten(&self.content, &self.residual, &self.merge)
    }
}

fn flatten(c: &BranchWeights, r: &BranchWeights, m: &MergeWeights) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * c.weights.len() + 5);
    v.extend_from_slice(&c.weights);
    v.push(c.bias);
    v.extend_from_slice(&r.weights);
    v.push(r.bias);
    v.extend([m.w_content, m.w_residual_path, m.bias]);
    v
}

/// Initialization scheme for [`init_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// Branch weights `1/n`, biases 0, merge `(0.5, 0.5, 0)`.
    #[default]
    Uniform,
    /// Branch weights drawn uniformly from `[-1/n, 1/n]`; biases and merge as above.
    Random,
}

pub fn init_model(configs: &[FilterConfig], seed: u64, mode: InitMode) -> Result<CompositionModel> {
    use rand::{Rng, SeedableRng};
    if configs.is_empty() {
        return Err(Error::param("a composition model needs at least one basis config"));
    }
    let n = configs.len();
    let inv = 1.0 / n as f64;
    let (wc, wr) = match mode {
        InitMode::Uniform => (vec![inv; n], vec![inv; n]),
        InitMode::Random => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || (0..n).map(|_| rng.random_range(-inv..=inv)).collect::<Vec<_>>();
            let wc = draw();
            (wc, draw())
        }
    };
    Ok(CompositionModel {
        basis_configs: configs.to_vec(),
        content: BranchWeights { weights: wc, bias: 0.0 },
        residual: BranchWeights { weights: wr, bias: 0.0 },
        merge: MergeWeights {
            w_content: 0.5,
            w_residual_path: 0.5,
            bias: 0.0,
        },
        output: OutputBranch::Merged,
        training: None,
    })
}

/// Unclamped model outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub content: Raster,
    pub residual: Raster,
    pub merged: Raster,
}

impl Outputs {
    pub fn export(&self, branch: OutputBranch) -> Image {
        match branch {
            OutputBranch::Merged => self.merged.to_image(),
            OutputBranch::Content => self.content.to_image(),
        }
    }
}

impl CompositionModel {
    pub fn magnitude(&self) -> usize {
        self.basis_configs.len()
    }

    /// Learnable parameters: content weights and bias, residual weights and
    /// bias, then the three merge values.
    pub fn params(&self) -> Vec<f64> {
        flatten(&self.content, &self.residual, &self.merge)
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let n = self.magnitude();
        assert_eq!(p.len(), 2 * n + 5, "parameter vector length");
        self.content.weights.copy_from_slice(&p[..n]);
        self.content.bias = p[n];
        self.residual.weights.copy_from_slice(&p[n + 1..2 * n + 1]);
        self.residual.bias = p[2 * n + 1];
        self.merge = MergeWeights {
            w_content: p[2 * n + 2],
            w_residual_path: p[2 * n + 3],
            bias: p[2 * n + 4],
        };
    }

    fn check_inputs(&self, basis: &FilteredBasis, residuals: &ResidualBasis) -> Result<()> {
        let n = self.magnitude();
        if self.content.weights.len() != n {
            return Err(Error::ConfigCount {
                configs: n,
                weights: self.content.weights.len(),
                branch: "content",
            });
        }
        if self.residual.weights.len() != n {
            return Err(Error::ConfigCount {
                configs: n,
                weights: self.residual.weights.len(),
                branch: "residual",
            });
        }
        for found in [basis.len(), residuals.len()] {
            if found != n {
                return Err(Error::MagnitudeMismatch { expected: n, found });
            }
        }
        for r in residuals.planes() {
            basis.source().shape().ensure_same(&r.shape())?;
        }
        Ok(())
    }

    /// Evaluates both branches and the merge.
    pub fn forward(&self, basis: &FilteredBasis, residuals: &ResidualBasis) -> Result<Outputs> {
        self.check_inputs(basis, residuals)?;
        let shape = basis.source().shape();
        let planes: Vec<&[f64]> = basis.planes().iter().map(|p| p.data()).collect();
        let res: Vec<&[f64]> = residuals.planes().iter().map(|p| p.data()).collect();
        let src = basis.source().data();
        let row = shape.width;

        // three outputs packed per row so one parallel pass fills them all
        let mut packed = vec![0.0; 3 * shape.len()];
        par::for_each_row(&mut packed, 3 * row, |r, out| {
            let off = r * row;
            for x in 0..row {
                let j = off + x;
                let c = dot(&self.content.weights, &planes, j) + self.content.bias;
                let rr = dot(&self.residual.weights, &res, j) + self.residual.bias;
                let m = self.merge.w_content * c + self.merge.w_residual_path * (src[j] - rr) + self.merge.bias;
                out[x] = c;
                out[row + x] = rr;
                out[2 * row + x] = m;
            }
        });
        let mut content = Vec::with_capacity(shape.len());
        let mut residual = Vec::with_capacity(shape.len());
        let mut merged = Vec::with_capacity(shape.len());
        for chunk in packed.chunks_exact(3 * row) {
            content.extend_from_slice(&chunk[..row]);
            residual.extend_from_slice(&chunk[row..2 * row]);
            merged.extend_from_slice(&chunk[2 * row..]);
        }
        Ok(Outputs {
            content: Raster::from_raw(shape, content),
            residual: Raster::from_raw(shape, residual),
            merged: Raster::from_raw(shape, merged),
        })
    }
}

#[inline]
fn dot(w: &[f64], planes: &[&[f64]], j: usize) -> f64 {
    let mut acc = 0.0;
    for (wi, p) in w.iter().zip(planes) {
        acc += wi * p[j];
    }
    acc
}

/// Component losses and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub content: f64,
    pub residual: f64,
    pub merged: f64,
    /// Unweighted total variation of the merged output (0 for mse).
    pub tv: f64,
    pub total: f64,
}

/// Weighted sum of component losses: `alpha*Lc + lambda*Lr + gamma*Lm`, plus
/// `tv_weight * tv` for [`LossKind::L1Tv`].
pub fn combine_losses(lc: f64, lr: f64, lm: f64, tv: f64, spec: &LossSpec) -> f64 {
    let w = &spec.weights;
    let base = w.alpha * lc + w.lambda * lr + w.gamma * lm;
    match spec.kind {
        LossKind::Mse => base,
        LossKind::L1Tv { tv_weight } => base + tv_weight * tv,
    }
}

#[inline]
fn penalty(kind: &LossKind, d: f64) -> f64 {
    match kind {
        LossKind::Mse => d * d,
        LossKind::L1Tv { .. } => d.abs(),
    }
}

#[inline]
fn penalty_grad(kind: &LossKind, d: f64) -> f64 {
    match kind {
        LossKind::Mse => 2.0 * d,
        LossKind::L1Tv { .. } => sign(d),
    }
}

#[inline]
fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_targets(shape: Shape, gt_clean: &Image, gt_artifact: &Raster) -> Result<()> {
    shape.ensure_same(&gt_clean.shape())?;
    shape.ensure_same(&gt_artifact.shape())
}

/// Total objective on already-computed outputs.
pub fn total_loss(outputs: &Outputs, gt_clean: &Image, gt_artifact: &Raster, spec: &LossSpec) -> Result<LossBreakdown> {
    let shape = outputs.merged.shape();
    check_targets(shape, gt_clean, gt_artifact)?;
    shape.ensure_same(&outputs.content.shape())?;
    shape.ensure_same(&outputs.residual.shape())?;
    let row = shape.width;
    let g = gt_clean.data();
    let gn = gt_artifact.data();
    let (c, r, m) = (outputs.content.data(), outputs.residual.data(), outputs.merged.data());
    let rows: Vec<usize> = (0..shape.len() / row).collect();
    let partial = par::map(&rows, |_, &ri| {
        let mut acc = [0.0; 3];
        for j in ri * row..(ri + 1) * row {
            acc[0] += penalty(&spec.kind, c[j] - g[j]);
            acc[1] += penalty(&spec.kind, r[j] - gn[j]);
            acc[2] += penalty(&spec.kind, m[j] - g[j]);
        }
        acc
    });
    let mut sums = [0.0; 3];
    for p in partial {
        for k in 0..3 {
            sums[k] += p[k];
        }
    }
    let n = shape.len() as f64;
    let (lc, lr, lm) = (sums[0] / n, sums[1] / n, sums[2] / n);
    let tv = match spec.kind {
        LossKind::Mse => 0.0,
        LossKind::L1Tv { .. } => crate::metrics::total_variation_raster(&outputs.merged),
    };
    Ok(LossBreakdown {
        content: lc,
        residual: lr,
        merged: lm,
        tv,
        total: combine_losses(lc, lr, lm, tv, spec),
    })
}

/// Derivative of `TV(merged)` with respect to merged sample `j`.
fn tv_grad(m: &[f64], shape: Shape, j: usize) -> f64 {
    let (w, h) = (shape.width, shape.height);
    let p = j % (w * h);
    let (x, y) = (p % w, p / w);
    let mut g = 0.0;
    if x + 1 < w {
        g -= sign(m[j + 1] - m[j]);
    }
    if x > 0 {
        g += sign(m[j] - m[j - 1]);
    }
    if y + 1 < h {
        g -= sign(m[j + w] - m[j]);
    }
    if y > 0 {
        g += sign(m[j] - m[j - w]);
    }
    g / shape.pixels() as f64
}

/// Loss and exact analytic gradients with respect to every weight and bias.
///
/// Per-row partial sums are reduced in row order, so the result does not
/// depend on the number of worker threads.
pub fn gradients(
    model: &CompositionModel,
    basis: &FilteredBasis,
    residuals: &ResidualBasis,
    gt_clean: &Image,
    gt_artifact: &Raster,
    spec: &LossSpec,
) -> Result<(LossBreakdown, ModelGradients)> {
    let outputs = model.forward(basis, residuals)?;
    let loss = total_loss(&outputs, gt_clean, gt_artifact, spec)?;

    let shape = basis.source().shape();
    let n = model.magnitude();
    let row = shape.width;
    let inv_n = 1.0 / shape.len() as f64;
    let lw = spec.weights;
    let tv_weight = match spec.kind {
        LossKind::Mse => 0.0,
        LossKind::L1Tv { tv_weight } => tv_weight,
    };
    let planes: Vec<&[f64]> = basis.planes().iter().map(|p| p.data()).collect();
    let res: Vec<&[f64]> = residuals.planes().iter().map(|p| p.data()).collect();
    let src = basis.source().data();
    let (c, r, m) = (outputs.content.data(), outputs.residual.data(), outputs.merged.data());
    let (g, gn) = (gt_clean.data(), gt_artifact.data());
    let mw = model.merge;

    let rows: Vec<usize> = (0..shape.len() / row).collect();
    let partial = par::map(&rows, |_, &ri| {
        // layout: [wc.., bc, wr.., br, m1, m2, mb]
        let mut acc = vec![0.0; 2 * n + 5];
        for j in ri * row..(ri + 1) * row {
            let mut d_m = lw.gamma * penalty_grad(&spec.kind, m[j] - g[j]) * inv_n;
            if tv_weight != 0.0 {
                d_m += tv_weight * tv_grad(m, shape, j);
            }
            let d_c = lw.alpha * penalty_grad(&spec.kind, c[j] - g[j]) * inv_n + mw.w_content * d_m;
            let d_r = lw.lambda * penalty_grad(&spec.kind, r[j] - gn[j]) * inv_n - mw.w_residual_path * d_m;
            for i in 0..n {
                acc[i] += d_c * planes[i][j];
                acc[n + 1 + i] += d_r * res[i][j];
            }
            acc[n] += d_c;
            acc[2 * n + 1] += d_r;
            acc[2 * n + 2] += d_m * c[j];
            acc[2 * n + 3] += d_m * (src[j] - r[j]);
            acc[2 * n + 4] += d_m;
        }
        acc
    });
    let mut total = vec![0.0; 2 * n + 5];
    for p in partial {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let mut grads = ModelGradients::zeros(n);
    grads.content.weights.copy_from_slice(&total[..n]);
    grads.content.bias = total[n];
    grads.residual.weights.copy_from_slice(&total[n + 1..2 * n + 1]);
    grads.residual.bias = total[2 * n + 1];
    grads.merge = MergeWeights {
        w_content: total[2 * n + 2],
        w_residual_path: total[2 * n + 3],
        bias: total[2 * n + 4],
    };
    Ok((loss, grads))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.17e}")
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ")
}

impl CompositionModel {
    /// Serializes to the versioned text document read by [`CompositionModel::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MODEL_FORMAT} {MODEL_VERSION}");
        let _ = writeln!(s, "configs {}", self.basis_configs.len());
        for c in &self.basis_configs {
            let _ = writeln!(s, "config {c}");
        }
        let _ = writeln!(s, "content.weights {}", fmt_list(&self.content.weights));
        let _ = writeln!(s, "content.bias {}", fmt_f64(self.content.bias));
        let _ = writeln!(s, "residual.weights {}", fmt_list(&self.residual.weights));
        let _ = writeln!(s, "residual.bias {}", fmt_f64(self.residual.bias));
        let m = &self.merge;
        let _ = writeln!(s, "merge {}", fmt_list(&[m.w_content, m.w_residual_path, m.bias]));
        let _ = writeln!(s, "output {}", self.output.label());
        if let Some(t) = &self.training {
            let w = t.loss.weights;
            let _ = writeln!(s, "loss.kind {}", t.loss.kind.label());
            let _ = writeln!(s, "loss.weights {}", fmt_list(&[w.alpha, w.lambda, w.gamma]));
            let _ = writeln!(s, "adam {}", fmt_list(&[t.beta1, t.beta2, t.epsilon]));
            let _ = writeln!(s, "schedule {} {}", t.epochs, fmt_f64(t.lr0));
            let _ = writeln!(s, "seed {}", t.seed);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::MalformedModel(msg);
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| bad("empty document".into()))?;
        let version = match header.split_once(' ') {
            Some((MODEL_FORMAT, v)) => v.trim().parse::<u32>().map_err(|_| bad(format!("bad version `{v}`")))?,
            _ => return Err(bad(format!("missing `{MODEL_FORMAT} <version>` header"))),
        };
        if version != MODEL_VERSION {
            return Err(Error::ModelVersion {
                expected: MODEL_VERSION,
                found: version,
            });
        }

        let mut declared: Option<usize> = None;
        let mut configs = Vec::new();
        let mut fields: std::collections::HashMap<&str, &str> = Default::default();
        for line in lines {
            let (key, value) = line.split_once(' ').unwrap_or((line, ""));
            let value = value.trim();
            match key {
                "configs" => declared = Some(value.parse().map_err(|_| bad(format!("bad config count `{value}`")))?),
                "config" => configs.push(value.parse::<FilterConfig>()?),
                _ => {
                    if fields.insert(key, value).is_some() {
                        return Err(bad(format!("duplicate field `{key}`")));
                    }
                }
            }
        }
        let declared = declared.ok_or_else(|| bad("missing `configs` line".into()))?;
        if declared != configs.len() {
            return Err(bad(format!("`configs {declared}` but {} config lines", configs.len())));
        }
        let floats = |key: &str| -> Result<Vec<f64>> {
            let v = fields.get(key).ok_or_else(|| bad(format!("missing `{key}`")))?;
            v.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| bad(format!("bad number `{t}` in `{key}`")))
                })
                .collect()
        };
        let scalar = |key: &str| -> Result<f64> {
            let v = floats(key)?;
            match v.as_slice() {
                [x] => Ok(*x),
                _ => Err(bad(format!("`{key}` expects one value, got {}", v.len()))),
            }
        };
        let wc = floats("content.weights")?;
        let wr = floats("residual.weights")?;
        for (weights, branch) in [(&wc, "content"), (&wr, "residual")] {
            if weights.len() != configs.len() {
                return Err(Error::ConfigCount {
                    configs: configs.len(),
                    weights: weights.len(),
                    branch,
                });
            }
        }
        let merge = floats("merge")?;
        let [w_content, w_residual_path, mbias] = merge[..] else {
            return Err(bad(format!("`merge` expects 3 values, got {}", merge.len())));
        };
        let output = match fields.get("output").copied() {
            None | Some("merged") => OutputBranch::Merged,
            Some("content") => OutputBranch::Content,
            Some(o) => return Err(bad(format!("unknown output branch `{o}`"))),
        };
        let training = if let Some(kind) = fields.get("loss.kind") {
            let kind = LossKind::parse(kind).ok_or_else(|| bad(format!("unknown loss kind `{kind}`")))?;
            let lw = floats("loss.weights")?;
            let adam = floats("adam")?;
            let (Ok::<[f64; 3], _>([alpha, lambda, gamma]), Ok::<[f64; 3], _>([beta1, beta2, epsilon])) =
                (lw.as_slice().try_into(), adam.as_slice().try_into())
            else {
                return Err(bad("`loss.weights` and `adam` expect 3 values each".into()));
            };
            let sched = fields.get("schedule").ok_or_else(|| bad("missing `schedule`".into()))?;
            let (epochs, lr0) = sched
                .split_once(' ')
                .and_then(|(e, l)| Some((e.parse().ok()?, l.trim().parse().ok()?)))
                .ok_or_else(|| bad(format!("bad schedule `{sched}`")))?;
            let seed = fields
                .get("seed")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("missing or bad `seed`".into()))?;
            Some(TrainingRecord {
                loss: LossSpec {
                    weights: LossWeights { alpha, lambda, gamma },
                    kind,
                },
                beta1,
                beta2,
                epsilon,
                epochs,
                lr0,
                seed,
            })
        } else {
            None
        };
        Ok(CompositionModel {
            basis_configs: configs,
            content: BranchWeights {
                weights: wc,
                bias: scalar("content.bias")?,
            },
            residual: BranchWeights {
                weights: wr,
                bias: scalar("residual.bias")?,
            },
            merge: MergeWeights {
                w_content,
                w_residual_path,
                bias: mbias,
            },
            output,
            training,
        })
    }
}

pub fn save_model(model: &CompositionModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_text()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CompositionModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    CompositionModel::from_text(&text)
}
