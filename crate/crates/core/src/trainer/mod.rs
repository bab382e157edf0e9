//! Training and evaluation of composition models.

mod adam;
pub mod cache;
pub mod dataset;

pub use adam::{AdamHyper, AdamState};
pub use cache::FbCache;
pub use dataset::{DatasetSpec, Degradation, Sample};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::basis::{self, FilteredBasis, ResidualBasis};
use crate::error::{Error, Result};
use crate::filters::FilterConfig;
use crate::image::{Image, Raster};
use crate::metrics::{self, ImageScore, MetricReport};
use crate::model::{self, CompositionModel, InitMode, LossSpec, LossWeights, OutputBranch, TrainingRecord};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_divisor: f64,
    pub lr_period: usize,
    pub loss: LossSpec,
    pub adam: AdamHyper,
    pub seed: u64,
    pub shuffle: bool,
    pub init: InitMode,
    /// Output scored during validation and exported by `apply`.
    pub output: OutputBranch,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 250,
            batch_size: 1,
            lr0: 0.1,
            lr_divisor: 5.0,
            lr_period: 50,
            loss: LossSpec::default(),
            adam: AdamHyper::default(),
            seed: 0,
            shuffle: true,
            init: InitMode::Uniform,
            output: OutputBranch::Merged,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::param("epochs must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::param("batch size must be >= 1"));
        }
        if !(self.lr0 > 0.0) {
            return Err(Error::param(format!("lr0 must be > 0, got {}", self.lr0)));
        }
        if !(self.lr_divisor > 1.0) {
            return Err(Error::param(format!("lr divisor must be > 1, got {}", self.lr_divisor)));
        }
        if self.lr_period < 1 {
            return Err(Error::param("lr period must be >= 1"));
        }
        self.loss.weights.validate()
    }

    /// The content-branch-only variant used by the residual ablation.
    pub fn content_only(&self) -> Self {
        TrainingConfig {
            loss: LossSpec {
                weights: LossWeights::content_only(),
                kind: self.loss.kind,
            },
            output: OutputBranch::Content,
            ..self.clone()
        }
    }
}

/// Step schedule: `lr0 / divisor^floor(epoch / period)`.
pub fn lr_at(epoch: usize, cfg: &TrainingConfig) -> f64 {
    let k = (epoch / cfg.lr_period) as i32;
    cfg.lr0 / cfg.lr_divisor.powi(k)
}

/// A sample with its basis, residuals and targets precomputed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    pub basis: FilteredBasis,
    pub residuals: ResidualBasis,
    pub target: Image,
    pub artifact: Raster,
}

/// Builds the basis of every sample, optionally through an on-disk cache.
pub fn prepare(samples: &[Sample], configs: &[FilterConfig], cache: Option<&FbCache>) -> Result<Vec<Prepared>> {
    par::map(samples, |_, s| -> Result<Prepared> {
        let wrap = |e: Error| Error::Sample {
            id: s.id.clone(),
            source: Box::new(e),
        };
        s.input.shape().ensure_same(&s.target.shape()).map_err(wrap)?;
        let basis = match cache {
            None => basis::build_basis(&s.input, configs).map_err(wrap)?,
            Some(cache) => {
                let digest = cache::image_digest(&s.input);
                let planes = par::map(configs, |_, cfg| cache.plane(&s.input, &digest, cfg))
                    .into_iter()
                    .collect::<Result<Vec<_>>>()
                    .map_err(wrap)?;
                FilteredBasis::from_planes(s.input.clone(), configs.to_vec(), planes).map_err(wrap)?
            }
        };
        let residuals = basis::build_residuals(&basis);
        let artifact = match &s.artifact {
            Some(a) => {
                s.input.shape().ensure_same(&a.shape()).map_err(wrap)?;
                a.clone()
            }
            None => Raster::difference(&s.input, &s.target).map_err(wrap)?,
        };
        Ok(Prepared {
            id: s.id.clone(),
            basis,
            residuals,
            target: s.target.clone(),
            artifact,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-sample loss seen during the epoch (before each update).
    pub train_loss: f64,
    pub val_psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_psnr: f64,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,val_psnr\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:e},{:.17e},{:.6}", r.epoch, r.lr, r.train_loss, r.val_psnr);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model after the final epoch.
    pub model: CompositionModel,
    /// Model at the epoch with the highest validation PSNR.
    pub best_model: CompositionModel,
    pub history: TrainHistory,
}

fn check_magnitude(samples: &[Prepared], n: usize) -> Result<()> {
    for s in samples {
        if s.basis.len() != n {
            return Err(Error::Sample {
                id: s.id.clone(),
                source: Box::new(Error::MagnitudeMismatch {
                    expected: n,
                    found: s.basis.len(),
                }),
            });
        }
    }
    Ok(())
}

fn branch_output(model: &CompositionModel, s: &Prepared) -> Result<Image> {
    Ok(model.forward(&s.basis, &s.residuals)?.export(model.output))
}

fn mean_psnr(model: &CompositionModel, samples: &[Prepared]) -> Result<f64> {
    let scores = par::map(samples, |_, s| metrics::psnr(&branch_output(model, s)?, &s.target, 1.0))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Trains on precomputed samples. Validation falls back to the training set
/// when `val` is empty. Deterministic in `(train order, cfg.seed)`.
pub fn train_prepared(
    train: &[Prepared],
    val: &[Prepared],
    configs: &[FilterConfig],
    cfg: &TrainingConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::param("training set is empty"));
    }
    check_magnitude(train, configs.len())?;
    check_magnitude(val, configs.len())?;
    let val = if val.is_empty() { train } else { val };

    let mut model = model::init_model(configs, cfg.seed, cfg.init)?;
    model.output = cfg.output;
    model.training = Some(TrainingRecord {
        loss: cfg.loss,
        beta1: cfg.adam.beta1,
        beta2: cfg.adam.beta2,
        epsilon: cfg.adam.epsilon,
        epochs: cfg.epochs,
        lr0: cfg.lr0,
        seed: cfg.seed,
    });
    let mut params = model.params();
    let mut adam = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, CompositionModel)> = None;
    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad_sum = vec![0.0; params.len()];
            for &i in batch {
                let s = &train[i];
                let (loss, grads) = model::gradients(&model, &s.basis, &s.residuals, &s.target, &s.artifact, &cfg.loss)
                    .map_err(|e| Error::Sample {
                        id: s.id.clone(),
                        source: Box::new(e),
                    })?;
                loss_sum += loss.total;
                for (acc, g) in grad_sum.iter_mut().zip(grads.to_vec()) {
                    *acc += g;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad_sum.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut params, &grad_sum, lr, &cfg.adam);
            model.set_params(&params);
        }
        let val_psnr = mean_psnr(&model, val)?;
        records.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            val_psnr,
        });
        if best.as_ref().is_none_or(|(_, p, _)| val_psnr > *p) {
            best = Some((epoch, val_psnr, model.clone()));
        }
    }
    let (best_epoch, best_val_psnr, best_model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        best_model,
        history: TrainHistory {
            records,
            best_epoch,
            best_val_psnr,
        },
    })
}

/// Prepares `train` and `val`, then trains.
pub fn train(
    train: &[Sample],
    val: &[Sample],
    configs: &[FilterConfig],
    cfg: &TrainingConfig,
    cache: Option<&FbCache>,
) -> Result<TrainOutcome> {
    let t = prepare(train, configs, cache)?;
    let v = prepare(val, configs, cache)?;
    train_prepared(&t, &v, configs, cfg)
}

/// PSNR/SSIM of the model's exported output against each target.
pub fn evaluate_prepared(model: &CompositionModel, samples: &[Prepared]) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::param("evaluation set is empty"));
    }
    check_magnitude(samples, model.magnitude())?;
    let scores = par::map(samples, |_, s| -> Result<ImageScore> {
        let out = branch_output(model, s)?;
        Ok(ImageScore {
            id: s.id.clone(),
            psnr: metrics::psnr(&out, &s.target, 1.0)?,
            ssim: metrics::ssim(&out, &s.target)?,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_scores(scores))
}

pub fn evaluate(model: &CompositionModel, samples: &[Sample], cache: Option<&FbCache>) -> Result<MetricReport> {
    let prepared = prepare(samples, &model.basis_configs, cache)?;
    evaluate_prepared(model, &prepared)
}

/// Mean PSNR of each basis plane against the targets, in basis order.
pub fn basis_plane_psnr(samples: &[Prepared]) -> Result<Vec<f64>> {
    let n = samples.first().map(|s| s.basis.len()).unwrap_or(0);
    check_magnitude(samples, n)?;
    let mut sums = vec![0.0; n];
    for s in samples {
        for (sum, plane) in sums.iter_mut().zip(s.basis.planes()) {
            *sum += metrics::psnr(plane, &s.target, 1.0)?;
        }
    }
    Ok(sums.into_iter().map(|v| v / samples.len() as f64).collect())
}

/// Dual-branch vs content-only comparison on identical data and seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRecord {
    pub dual_branch_psnr: f64,
    pub content_only_psnr: f64,
}

impl AblationRecord {
    pub fn gap(&self) -> f64 {
        self.dual_branch_psnr - self.content_only_psnr
    }

    pub fn to_csv(&self) -> String {
        format!(
            "variant,val_psnr\ndual_branch,{:.6}\ncontent_only,{:.6}\ndifference,{:.6}\n",
            self.dual_branch_psnr,
            self.content_only_psnr,
            self.gap()
        )
    }
}

/// Trains the full objective and the content-only variant, and scores both
/// final models on `val`.
pub fn ablate_residual_prepared(
    train: &[Prepared],
    val: &[Prepared],
    configs: &[FilterConfig],
    cfg: &TrainingConfig,
) -> Result<AblationRecord> {
    let eval_set = if val.is_empty() { train } else { val };
    let dual = train_prepared(train, val, configs, cfg)?;
    let content = train_prepared(train, val, configs, &cfg.content_only())?;
    Ok(AblationRecord {
        dual_branch_psnr: mean_psnr(&dual.model, eval_set)?,
        content_only_psnr: mean_psnr(&content.model, eval_set)?,
    })
}

pub fn ablate_residual(
    train: &[Sample],
    val: &[Sample],
    configs: &[FilterConfig],
    cfg: &TrainingConfig,
    cache: Option<&FbCache>,
) -> Result<AblationRecord> {
    let t = prepare(train, configs, cache)?;
    let v = prepare(val, configs, cache)?;
    ablate_residual_prepared(&t, &v, configs, cfg)
}
