//! Wall-clock measurements of basis construction and composition.

use std::fmt::Write as _;
use std::time::Instant;

use crate::basis::{self, build_basis, build_residuals};
use crate::error::{Error, Result};
use crate::filters::{self, FilterConfig};
use crate::image::Image;
use crate::model::{init_model, InitMode};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub repetitions: usize,
    /// Median time of each single filter, in config order (seconds).
    pub single_filter: Vec<(FilterConfig, f64)>,
    pub fb_serial: f64,
    pub fb_parallel: f64,
    pub forward: f64,
    /// `fb_serial / sum(single_filter)`; 1.0 when cost is exactly linear in K.
    pub linearity_ratio: f64,
    /// Median serial FB time for the first K configs.
    pub scaling: Vec<(usize, f64)>,
    /// Coefficient of determination of a least-squares line through `scaling`.
    pub r_squared: f64,
}

fn median_time(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        f()?;
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[reps / 2])
}

/// Runs `f` on the calling thread only.
pub fn serially<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool")
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        f()
    }
}

/// Coefficient of determination for an ordinary least-squares line.
pub fn r_squared(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    if sxx == 0.0 {
        return 0.0;
    }
    (sxy * sxy) / (sxx * syy)
}

/// Times single filters, serial/parallel basis construction and the
/// composition forward pass on `image`.
pub fn bench(configs: &[FilterConfig], image: &Image, repetitions: usize, ks: &[usize]) -> Result<BenchReport> {
    if repetitions < 3 {
        return Err(Error::param(format!("bench needs >= 3 repetitions, got {repetitions}")));
    }
    if configs.is_empty() {
        return Err(Error::param("bench needs at least one config"));
    }
    if let Some(k) = ks.iter().find(|k| **k == 0 || **k > configs.len()) {
        return Err(Error::param(format!("K = {k} outside 1..={}", configs.len())));
    }

    let single_filter = configs
        .iter()
        .map(|cfg| {
            let t = serially(|| median_time(repetitions, || filters::apply(image, cfg).map(drop)))?;
            Ok((*cfg, t))
        })
        .collect::<Result<Vec<_>>>()?;
    let fb_serial = serially(|| median_time(repetitions, || build_basis(image, configs).map(drop)))?;
    let fb_parallel = median_time(repetitions, || build_basis(image, configs).map(drop))?;

    let fb = build_basis(image, configs)?;
    let res = build_residuals(&fb);
    let model = init_model(configs, 0, InitMode::Uniform)?;
    let forward = serially(|| median_time(repetitions, || model.forward(&fb, &res).map(drop)))?;

    let scaling = ks
        .iter()
        .map(|&k| {
            let t = serially(|| median_time(repetitions, || basis::build_basis(image, &configs[..k]).map(drop)))?;
            Ok((k, t))
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = scaling.iter().map(|(k, t)| (*k as f64, *t)).collect();
    let total_single: f64 = single_filter.iter().map(|(_, t)| t).sum();

    Ok(BenchReport {
        repetitions,
        linearity_ratio: fb_serial / total_single,
        r_squared: if pts.len() >= 2 { r_squared(&pts) } else { f64::NAN },
        single_filter,
        fb_serial,
        fb_parallel,
        forward,
        scaling,
    })
}

impl BenchReport {
    pub fn forward_fraction(&self) -> f64 {
        self.forward / self.fb_serial
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "repetitions {}", self.repetitions);
        for (cfg, t) in &self.single_filter {
            let _ = writeln!(s, "filter {cfg} {:.6}s", t);
        }
        let k = self.single_filter.len();
        let _ = writeln!(s, "fb_serial K={k} {:.6}s", self.fb_serial);
        let _ = writeln!(s, "fb_parallel K={k} {:.6}s", self.fb_parallel);
        let _ = writeln!(
            s,
            "forward {:.6}s ({:.3}% of fb_serial)",
            self.forward,
            100.0 * self.forward_fraction()
        );
        let _ = writeln!(s, "fb_time/(sum of single filters) {:.4}", self.linearity_ratio);
        for (k, t) in &self.scaling {
            let _ = writeln!(s, "scaling K={k} {:.6}s", t);
        }
        let _ = writeln!(s, "scaling r_squared {:.5}", self.r_squared);
        s
    }
}
