//! End-to-end acceptance checks. Run with `cargo test --test acceptance`.
//!
//! Each criterion prints a single `PASS`/`FAIL` line; the process exits with
//! a non-zero status if any gating criterion fails.

use std::time::Instant;

use compfilter::basis::{self, presets, Candidate, FilteredBasis};
use compfilter::bench;
use compfilter::filters;
use compfilter::model::{self, CompositionModel, InitMode, LossSpec, LossWeights};
use compfilter::trainer::dataset::{DatasetSpec, Sample};
use compfilter::trainer::{self, Prepared, TrainingConfig};
use compfilter::{noise, synth, FilterConfig, Image, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-4;
const FD_REL_TOL: f64 = 1e-5;
/// Gradients are compared relative to `max(|analytic|, |numeric|, FD_FLOOR)`.
const FD_FLOOR: f64 = 1e-6;
const BEATS_BEST_MARGIN_DB: f64 = 0.3;
const BEATS_BEST_BUDGET_S: f64 = 600.0;
const ABLATION_FLOOR_DB: f64 = -0.05;
const IIS_TARGETS: [f64; 6] = [20.0, 25.0, 30.0, 35.0, 40.0, 45.0];
const IIS_TOL_DB: f64 = 2.5;
const BENCH_R2: f64 = 0.98;
const FORWARD_FRACTION: f64 = 0.05;
const BSD_TARGET_DB: f64 = 30.22;
const BSD_TOL_DB: f64 = 0.5;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: usize, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!("{} [{id}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, ch: usize) -> Image {
    let data = (0..w * h * ch).map(|_| rng.random::<f64>()).collect();
    Image::new(w, h, ch, data).unwrap()
}

fn clampi(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Direct double loop over the window with clamp-to-edge sampling.
fn bilateral_oracle(img: &Image, guide: &Image, ss: f64, sr: f64, window: usize) -> Vec<f64> {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let r = (window / 2) as isize;
    let mut out = vec![0.0; w * h * ch];
    for y in 0..h {
        for x in 0..w {
            let mut num = vec![0.0; ch];
            let mut den = 0.0;
            for j in -r..=r {
                for i in -r..=r {
                    let qx = clampi(x as isize + i, w);
                    let qy = clampi(y as isize + j, h);
                    let gs = (-((i * i + j * j) as f64) / (2.0 * ss * ss)).exp();
                    let d2: f64 = (0..ch)
                        .map(|c| (guide.get(qx, qy, c) - guide.get(x, y, c)).powi(2))
                        .sum();
                    let wgt = gs * (-d2 / (2.0 * sr * sr)).exp();
                    den += wgt;
                    for (c, n) in num.iter_mut().enumerate() {
                        *n += wgt * img.get(qx, qy, c);
                    }
                }
            }
            for c in 0..ch {
                out[c * w * h + y * w + x] = num[c] / den;
            }
        }
    }
    out
}

fn gaussian_oracle(img: &Image, sigma: f64) -> Vec<f64> {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let r = (3.0 * sigma).ceil() as isize;
    let mut out = vec![0.0; w * h * ch];
    for c in 0..ch {
        for y in 0..h {
            for x in 0..w {
                let (mut num, mut den) = (0.0, 0.0);
                for j in -r..=r {
                    for i in -r..=r {
                        let wgt = (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
                        den += wgt;
                        num += wgt * img.get(clampi(x as isize + i, w), clampi(y as isize + j, h), c);
                    }
                }
                out[c * w * h + y * w + x] = num / den;
            }
        }
    }
    out
}

fn median_oracle(img: &Image, k1: usize, k2: usize) -> Vec<f64> {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let (ry, rx) = ((k1 / 2) as isize, (k2 / 2) as isize);
    let mut out = vec![0.0; w * h * ch];
    for c in 0..ch {
        for y in 0..h {
            for x in 0..w {
                let mut vals = Vec::new();
                for j in -ry..=ry {
                    for i in -rx..=rx {
                        vals.push(img.get(clampi(x as isize + i, w), clampi(y as isize + j, h), c));
                    }
                }
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                out[c * w * h + y * w + x] = vals[vals.len() / 2];
            }
        }
    }
    out
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn kernel_oracles(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0001);
    let cases = 120;
    let (mut bf_err, mut jbf_err, mut rgf_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut median_exact = true;
    for _ in 0..cases {
        let w = rng.random_range(5..=9);
        let h = rng.random_range(5..=9);
        let ch = if rng.random_bool(0.5) { 1 } else { 3 };
        let img = random_image(&mut rng, w, h, ch);
        let guide = random_image(&mut rng, w, h, ch);
        let ss = rng.random_range(0.3..3.0);
        let sr = rng.random_range(0.05..1.0);
        let window = [1, 3, 5, 7, 9][rng.random_range(0..5)];

        let got = filters::bilateral(&img, ss, sr, window).unwrap();
        bf_err = bf_err.max(max_abs(got.data(), &bilateral_oracle(&img, &img, ss, sr, window)));
        let got = filters::joint_bilateral(&img, &guide, ss, sr, window).unwrap();
        jbf_err = jbf_err.max(max_abs(got.data(), &bilateral_oracle(&img, &guide, ss, sr, window)));

        let k1 = [1, 3, 5, 7][rng.random_range(0..4)];
        let k2 = [1, 3, 5, 7][rng.random_range(0..4)];
        median_exact &= filters::median(&img, k1, k2).unwrap().data() == median_oracle(&img, k1, k2).as_slice();

        let init = Image::new(w, h, ch, gaussian_oracle(&img, ss)).unwrap();
        let expected = bilateral_oracle(&img, &init, ss, sr, window);
        let got = filters::rolling_guidance(&img, sr, ss, window, 1).unwrap();
        rgf_err = rgf_err.max(max_abs(got.data(), &expected));
    }
    let ok = bf_err < ORACLE_TOL && jbf_err < ORACLE_TOL && median_exact && rgf_err < ORACLE_TOL;
    rep.line(
        1,
        "kernel oracles",
        ok,
        format!(
            "{cases} images; bilateral max err {bf_err:.2e}, joint {jbf_err:.2e}, rgf(t=1) {rgf_err:.2e} (tol {ORACLE_TOL:.0e}); median exact: {median_exact}"
        ),
    );
}

fn random_model(rng: &mut ChaCha8Rng, configs: &[FilterConfig]) -> CompositionModel {
    let mut m = model::init_model(configs, rng.random(), InitMode::Random).unwrap();
    let p: Vec<f64> = m.params().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    m.set_params(&p);
    m
}

fn loss_at(
    m: &CompositionModel,
    fb: &FilteredBasis,
    res: &basis::ResidualBasis,
    gt: &Image,
    gn: &Raster,
    spec: &LossSpec,
) -> f64 {
    let out = m.forward(fb, res).unwrap();
    model::total_loss(&out, gt, gn, spec).unwrap().total
}

fn gradient_check(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0002);
    let pool = [
        FilterConfig::Gaussian { sigma_spatial: 0.8 },
        FilterConfig::Median { k1: 3, k2: 3 },
        FilterConfig::Bilateral {
            sigma_spatial: 1.5,
            sigma_range: 0.3,
            window: 5,
        },
        FilterConfig::Gaussian { sigma_spatial: 2.0 },
        FilterConfig::Median { k1: 1, k2: 5 },
        FilterConfig::Bilateral {
            sigma_spatial: 0.7,
            sigma_range: 0.1,
            window: 3,
        },
        FilterConfig::Median { k1: 5, k2: 3 },
        FilterConfig::Gaussian { sigma_spatial: 0.4 },
        FilterConfig::Bilateral {
            sigma_spatial: 3.0,
            sigma_range: 1.0,
            window: 7,
        },
    ];
    let instances = 60;
    let mut worst = 0.0f64;
    for k in 0..instances {
        let n = [1, 2, 3, 9][k % 4];
        let (w, h) = (rng.random_range(2..=8), rng.random_range(2..=8));
        let ch = if rng.random_bool(0.5) { 1 } else { 3 };
        let src = random_image(&mut rng, w, h, ch);
        let gt = random_image(&mut rng, w, h, ch);
        let gn = Raster::difference(&src, &gt).unwrap();
        let configs: Vec<FilterConfig> = (0..n).map(|i| pool[(i + k) % pool.len()]).collect();
        let fb = basis::build_basis(&src, &configs).unwrap();
        let res = basis::build_residuals(&fb);
        let spec = if k % 3 == 0 {
            LossSpec::default()
        } else {
            LossSpec {
                weights: LossWeights {
                    alpha: rng.random_range(0.0..1.0),
                    lambda: rng.random_range(0.0..1.0),
                    gamma: rng.random_range(0.0..1.0),
                },
                ..LossSpec::default()
            }
        };
        let mut m = random_model(&mut rng, &configs);
        let (_, grads) = model::gradients(&m, &fb, &res, &gt, &gn, &spec).unwrap();
        let analytic = grads.to_vec();
        let base = m.params();
        for (i, a) in analytic.iter().enumerate() {
            let mut p = base.clone();
            p[i] = base[i] + FD_STEP;
            m.set_params(&p);
            let up = loss_at(&m, &fb, &res, &gt, &gn, &spec);
            p[i] = base[i] - FD_STEP;
            m.set_params(&p);
            let down = loss_at(&m, &fb, &res, &gt, &gn, &spec);
            let numeric = (up - down) / (2.0 * FD_STEP);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
            worst = worst.max(rel);
        }
        m.set_params(&base);
    }
    rep.line(
        2,
        "finite-difference gradients",
        worst < FD_REL_TOL,
        format!("{instances} instances, n in {{1,2,3,9}}, h={FD_STEP:.0e}; worst relative error {worst:.2e} (tol {FD_REL_TOL:.0e})"),
    );
}

fn denoising_sample(seed: u64) -> Sample {
    let clean = synth::natural(64, 64, 1, seed);
    let noisy = noise::add_gaussian_noise(&clean, 25.0, seed.wrapping_mul(31).wrapping_add(7)).unwrap();
    Sample::new(format!("synth{seed}"), noisy, clean)
}

struct DeskSuite {
    configs: Vec<FilterConfig>,
    train: Vec<Prepared>,
    held_out: Vec<Prepared>,
}

fn desk_suite() -> DeskSuite {
    let configs = presets::bilateral_iis9();
    let train: Vec<Sample> = (0..20).map(denoising_sample).collect();
    let held: Vec<Sample> = (100..110).map(denoising_sample).collect();
    DeskSuite {
        train: trainer::prepare(&train, &configs, None).unwrap(),
        held_out: trainer::prepare(&held, &configs, None).unwrap(),
        configs,
    }
}

fn beats_best_basis(rep: &mut Report, suite: &DeskSuite) {
    let t0 = Instant::now();
    let outcome = bench::serially(|| {
        trainer::train_prepared(&suite.train, &[], &suite.configs, &TrainingConfig::default()).unwrap()
    });
    let elapsed = t0.elapsed().as_secs_f64();
    let merged = trainer::evaluate_prepared(&outcome.model, &suite.held_out)
        .unwrap()
        .psnr;
    let planes = trainer::basis_plane_psnr(&suite.held_out).unwrap();
    let best = planes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let noisy: f64 = suite
        .held_out
        .iter()
        .map(|p| compfilter::metrics::psnr(p.basis.source(), &p.target, 1.0).unwrap())
        .sum::<f64>()
        / suite.held_out.len() as f64;
    rep.line(
        3,
        "beats best basis plane",
        merged >= best + BEATS_BEST_MARGIN_DB && elapsed < BEATS_BEST_BUDGET_S,
        format!(
            "held-out merged {merged:.3} dB vs best plane {best:.3} dB (gain {:+.3}, need {BEATS_BEST_MARGIN_DB:+}); noisy input {noisy:.3} dB; single-thread training {elapsed:.1}s",
            merged - best
        ),
    );
}

fn residual_ablation(rep: &mut Report, suite: &DeskSuite) {
    let rec = trainer::ablate_residual_prepared(
        &suite.train,
        &suite.held_out,
        &suite.configs,
        &TrainingConfig::default(),
    )
    .unwrap();
    rep.line(
        4,
        "residual-branch ablation",
        rec.gap() >= ABLATION_FLOOR_DB,
        format!(
            "dual-branch {:.3} dB, content-only {:.3} dB, gap {:+.3} dB (floor {ABLATION_FLOOR_DB:+})",
            rec.dual_branch_psnr,
            rec.content_only_psnr,
            rec.gap()
        ),
    );
}

fn iis_structure(rep: &mut Report) {
    let grid = presets::bilateral_grid();
    let scored = basis::calibrate(&grid, &presets::fidelity_calibration_pairs()).unwrap();
    let (lo, hi) = (scored[0].score, scored[scored.len() - 1].score);
    let picked = basis::iis_select_targets(&scored, &IIS_TARGETS).unwrap();
    let devs: Vec<f64> = picked
        .iter()
        .zip(IIS_TARGETS)
        .map(|(c, t)| (c.score - t).abs())
        .collect();
    let worst = devs.iter().cloned().fold(0.0, f64::max);
    let increasing = picked.windows(2).all(|p| p[0].score < p[1].score);
    let ok = grid.len() == 77 && picked.len() == 6 && worst <= IIS_TOL_DB && increasing;
    let scores: Vec<String> = picked.iter().map(|c: &Candidate| format!("{:.2}", c.score)).collect();

    // Same selection driven by the observed range at the nearest 5 dB spacing.
    let m = ((hi - lo) / 5.0).round() as usize + 1;
    let targets = basis::iis_targets(&scored, m);
    let observed = basis::iis_select_targets(&scored, &targets).unwrap();
    let obs_worst = observed
        .iter()
        .zip(&targets)
        .map(|(c, t)| (c.score - t).abs())
        .fold(0.0, f64::max);
    rep.line(
        5,
        "IIS structure",
        ok,
        format!(
            "{} candidates scored {lo:.2}..{hi:.2} dB; targets 20..45 step 5 -> {} configs at [{}], worst deviation {worst:.2} dB (tol {IIS_TOL_DB}), strictly increasing: {increasing}; observed-range variant m={m} spacing {:.2} dB, worst deviation {obs_worst:.2} dB",
            grid.len(),
            picked.len(),
            scores.join(", "),
            (hi - lo) / (m - 1) as f64
        ),
    );
}

fn schedule_and_loss(rep: &mut Report) {
    let cfg = TrainingConfig::default();
    let lrs = [
        trainer::lr_at(0, &cfg),
        trainer::lr_at(50, &cfg),
        trainer::lr_at(100, &cfg),
    ];
    let total = model::combine_losses(1.0, 2.0, 3.0, 0.0, &LossSpec::default());
    let ok = lrs == [0.1, 0.02, 0.004] && total == 3.3;
    rep.line(
        6,
        "schedule and loss constants",
        ok,
        format!("lr(0,50,100) = {:?}, weighted (1,2,3) = {total:?}", lrs),
    );
}

fn determinism(rep: &mut Report, suite: &DeskSuite) {
    let cfg = TrainingConfig {
        epochs: 12,
        seed: 11,
        ..TrainingConfig::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let configs = &suite.configs;
                let train: Vec<Sample> = (0..6).map(denoising_sample).collect();
                let prepared = trainer::prepare(&train, configs, None).unwrap();
                let out = trainer::train_prepared(&prepared, &suite.held_out[..2], configs, &cfg).unwrap();
                let image = out
                    .model
                    .forward(&suite.held_out[0].basis, &suite.held_out[0].residuals)
                    .unwrap()
                    .merged;
                (out.model.to_text(), out.history.to_csv(), image.data().to_vec())
            })
    };
    let (a, b) = (run(1), run(8));
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let ok = a.0 == b.0 && a.1 == b.1 && bits(&a.2) == bits(&b.2);
    rep.line(
        7,
        "thread-count determinism",
        ok,
        format!(
            "1 vs 8 threads: model text equal {}, history equal {}, outputs bitwise equal {}",
            a.0 == b.0,
            a.1 == b.1,
            bits(&a.2) == bits(&b.2)
        ),
    );
}

fn cost_model(rep: &mut Report) {
    let img = synth::natural(481, 321, 1, 42);
    let report = bench::bench(&presets::bilateral_iis9(), &img, 3, &[1, 3, 9]).unwrap();
    let frac = report.forward_fraction();
    let ok = report.r_squared > BENCH_R2 && frac < FORWARD_FRACTION;
    let scaling: Vec<String> = report.scaling.iter().map(|(k, t)| format!("K={k} {t:.3}s")).collect();
    rep.line(
        8,
        "cost model",
        ok,
        format!(
            "481x321 serial FB {}; R^2 {:.5} (need > {BENCH_R2}); forward {:.4}s = {:.3}% of K=9 FB (need < {}%)",
            scaling.join(", "),
            report.r_squared,
            report.forward,
            100.0 * frac,
            100.0 * FORWARD_FRACTION
        ),
    );
}

/// Uses dataset manifests named by `COMPFILTER_BSD_TRAIN` and `COMPFILTER_BSD_TEST`.
fn full_scale(rep: &mut Report) {
    let (Ok(train), Ok(test)) = (
        std::env::var("COMPFILTER_BSD_TRAIN"),
        std::env::var("COMPFILTER_BSD_TEST"),
    ) else {
        println!("SKIP [9] full-scale BSD check: set COMPFILTER_BSD_TRAIN and COMPFILTER_BSD_TEST (non-gating)");
        return;
    };
    let load = |p: &str| DatasetSpec::from_file(p).and_then(|d| d.load(0)).unwrap();
    let (train, test) = (load(&train), load(&test));
    let configs = presets::bilateral_iis9();
    let out = trainer::train(&train, &[], &configs, &TrainingConfig::default(), None).unwrap();
    let psnr = trainer::evaluate(&out.model, &test, None).unwrap().psnr;
    let ok = (psnr - BSD_TARGET_DB).abs() <= BSD_TOL_DB;
    println!(
        "{} [9] full-scale BSD check (non-gating): {psnr:.3} dB vs {BSD_TARGET_DB} +/- {BSD_TOL_DB}",
        if ok { "PASS" } else { "FAIL" }
    );
    let _ = rep;
}

fn main() {
    // libtest passes flags such as --nocapture; this harness ignores them.
    let mut rep = Report { failures: 0 };
    kernel_oracles(&mut rep);
    gradient_check(&mut rep);
    let suite = desk_suite();
    beats_best_basis(&mut rep, &suite);
    residual_ablation(&mut rep, &suite);
    iis_structure(&mut rep);
    schedule_and_loss(&mut rep);
    determinism(&mut rep, &suite);
    cost_model(&mut rep);
    full_scale(&mut rep);
    if rep.failures > 0 {
        println!("{} acceptance criteria failed", rep.failures);
        std::process::exit(1);
    }
    println!("all gating acceptance criteria passed");
}
