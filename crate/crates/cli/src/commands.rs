use std::fs;
use std::path::Path;

use compfilter::basis::{self, presets};
use compfilter::model::{self, InitMode, LossKind, LossSpec, LossWeights, OutputBranch};
use compfilter::trainer::dataset::{self, DatasetSpec, Sample};
use compfilter::trainer::{self, FbCache, TrainingConfig};
use compfilter::{bench, filters, noise, pnm, synth, Error, FilterConfig, Result};

use crate::{
    AblateArgs, ApplyArgs, BenchArgs, BranchArg, CalibrateArgs, Command, EvalArgs, FilterArgs, InitArg, LossArg,
    NoiseArgs, SelectArg, TrainArgs, TrainOpts,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Noise(a) => noise_cmd(a),
        Command::Filter(a) => filter_cmd(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Apply(a) => apply_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Bench(a) => bench_cmd(a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        context: format!("writing {}", path.display()),
        source: e,
    })
}

fn noise_cmd(a: NoiseArgs) -> Result<()> {
    let img = pnm::read_image(&a.input)?;
    let out = match (a.gaussian, a.impulse) {
        (Some(sigma), _) => noise::add_gaussian_noise(&img, sigma, a.seed)?,
        (None, Some(d)) => noise::add_impulse_noise(&img, d, a.seed)?,
        (None, None) => unreachable!("clap requires one noise kind"),
    };
    pnm::write_image(&out, &a.output)
}

fn filter_cmd(a: FilterArgs) -> Result<()> {
    let cfg: FilterConfig = a.config.parse()?;
    let img = pnm::read_image(&a.input)?;
    pnm::write_image(&filters::apply(&img, &cfg)?, &a.output)
}

fn load_dataset(path: &Path, seed: u64) -> Result<(DatasetSpec, Vec<Sample>)> {
    let spec = DatasetSpec::from_file(path)?;
    let samples = spec.load(seed)?;
    Ok((spec, samples))
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<()> {
    let grid = basis::load_configs(&a.grid)?;
    let pairs = match &a.pairs {
        Some(p) => load_dataset(p, a.seed)?
            .1
            .into_iter()
            .map(|s| (s.input, s.target))
            .collect(),
        None => presets::fidelity_calibration_pairs(),
    };
    let scored = basis::calibrate(&grid, &pairs)?;
    let picked = basis::iis_select(&scored, a.iis)?;
    let header = format!(
        "IIS selection of {} from {} candidates ({}), scores {:.2}..{:.2} dB",
        picked.len(),
        grid.len(),
        a.grid,
        scored[0].score,
        scored[scored.len() - 1].score
    );
    write_text(&a.output, &basis::format_manifest(&picked, &header))?;
    if let Some(csv) = &a.csv {
        write_text(csv, &basis::calibration_csv(&scored))?;
    }
    for cfg in &picked {
        let score = scored
            .iter()
            .find(|c| c.config == *cfg)
            .map(|c| c.score)
            .unwrap_or(f64::NAN);
        println!("{cfg}\t{score:.3}");
    }
    Ok(())
}

fn training_config(o: &TrainOpts) -> TrainingConfig {
    TrainingConfig {
        epochs: o.epochs,
        batch_size: o.batch_size,
        lr0: o.lr,
        loss: LossSpec {
            weights: LossWeights {
                alpha: o.alpha,
                lambda: o.lambda,
                gamma: o.gamma,
            },
            kind: match o.loss {
                LossArg::Mse => LossKind::Mse,
                LossArg::L1tv => LossKind::L1Tv { tv_weight: o.tv_weight },
            },
        },
        seed: o.seed,
        shuffle: !o.no_shuffle,
        init: match o.init {
            InitArg::Uniform => InitMode::Uniform,
            InitArg::Random => InitMode::Random,
        },
        ..TrainingConfig::default()
    }
}

struct Prepared {
    configs: Vec<FilterConfig>,
    train: Vec<trainer::Prepared>,
    val: Vec<trainer::Prepared>,
}

fn prepare_split(dataset: &Path, o: &TrainOpts) -> Result<Prepared> {
    let configs = basis::load_configs(&o.basis)?;
    let cache = o.cache.as_ref().map(FbCache::new).transpose()?;
    let (spec, samples) = load_dataset(dataset, o.seed)?;
    let (train, val) = match &o.val {
        Some(v) => (samples, load_dataset(v, o.seed)?.1),
        None => dataset::split(&samples, spec.train_fraction()),
    };
    Ok(Prepared {
        train: trainer::prepare(&train, &configs, cache.as_ref())?,
        val: trainer::prepare(&val, &configs, cache.as_ref())?,
        configs,
    })
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let data = prepare_split(&a.dataset, &a.opts)?;
    let mut cfg = training_config(&a.opts);
    cfg.output = match a.output_branch {
        BranchArg::Merged => OutputBranch::Merged,
        BranchArg::Content => OutputBranch::Content,
    };
    let outcome = trainer::train_prepared(&data.train, &data.val, &data.configs, &cfg)?;
    let chosen = match a.select {
        SelectArg::Final => &outcome.model,
        SelectArg::Best => &outcome.best_model,
    };
    model::save_model(chosen, &a.model)?;
    if let Some(h) = &a.history {
        write_text(h, &outcome.history.to_csv())?;
    }
    let last = outcome.history.records.last().expect("at least one epoch");
    println!(
        "trained {} samples ({} validation), magnitude {}: final val PSNR {:.3} dB, best {:.3} dB at epoch {}",
        data.train.len(),
        data.val.len(),
        data.configs.len(),
        last.val_psnr,
        outcome.history.best_val_psnr,
        outcome.history.best_epoch
    );
    Ok(())
}

fn apply_cmd(a: ApplyArgs) -> Result<()> {
    let model = model::load_model(&a.model)?;
    let img = pnm::read_image(&a.input)?;
    let fb = basis::build_basis(&img, &model.basis_configs)?;
    let res = basis::build_residuals(&fb);
    let out = model.forward(&fb, &res)?.export(model.output);
    pnm::write_image(&out, &a.output)
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let model = model::load_model(&a.model)?;
    let cache = a.cache.as_ref().map(FbCache::new).transpose()?;
    let (_, samples) = load_dataset(&a.dataset, a.seed)?;
    let report = trainer::evaluate(&model, &samples, cache.as_ref())?;
    if let Some(csv) = &a.csv {
        write_text(csv, &report.to_csv())?;
    }
    println!(
        "mean PSNR {:.3} dB, mean SSIM {:.4} over {} images",
        report.psnr,
        report.ssim,
        samples.len()
    );
    Ok(())
}

fn ablate_cmd(a: AblateArgs) -> Result<()> {
    let data = prepare_split(&a.dataset, &a.opts)?;
    let rec = trainer::ablate_residual_prepared(&data.train, &data.val, &data.configs, &training_config(&a.opts))?;
    if let Some(csv) = &a.csv {
        write_text(csv, &rec.to_csv())?;
    }
    print!("{}", rec.to_csv());
    Ok(())
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let configs = basis::load_configs(&a.basis)?;
    let img = match &a.input {
        Some(p) => pnm::read_image(p)?,
        None => synth::natural(481, 321, 1, 42),
    };
    let report = bench::bench(&configs, &img, a.reps, &a.ks)?;
    print!("{}", report.to_text());
    Ok(())
}
