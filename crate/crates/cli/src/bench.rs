//! Run time of the HTF path against the conventional path as the number
//! of analyzed resistor values grows.

use std::time::Instant;

use anyhow::{Context, Result};
use htf_core::feedback::{k_gain, SweepOptions, Topology};
use htf_core::oracle::closed_loop_poles_direct;
use htf_core::{FeedbackSpec, FrequencyGrid, PltvSystem};
use rayon::prelude::*;

use crate::pipeline::{self, IdentifyOptions};

#[derive(Debug, Clone)]
pub struct BenchSettings {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub workers: usize,
    pub r_range: (f64, f64),
    pub topology: Topology,
    pub grid: FrequencyGrid,
    pub truncation: usize,
    pub identify: IdentifyOptions,
    pub sweep: SweepOptions,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub t_htf: f64,
    pub t_conv: f64,
}

pub fn values(r_range: (f64, f64), n: usize) -> Vec<f64> {
    let (lo, hi) = r_range;
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Sample, identify and sweep `values` in one go.
pub fn htf_path(sys: &PltvSystem, s: &BenchSettings, values: Vec<f64>) -> Result<usize> {
    let data = pipeline::oracle_responses(sys, &s.grid, s.truncation)?;
    let id = pipeline::identify(&data, &s.identify)?;
    let spec = FeedbackSpec::new(s.topology, values)?;
    let (locus, _) = pipeline::htf_sweep(&id.htf, &spec, &s.sweep)?;
    Ok(locus.records.len())
}

/// One exact closed-loop eigenvalue solve per value.
pub fn conventional_path(sys: &PltvSystem, s: &BenchSettings, values: &[f64]) -> Result<usize> {
    let counts = values
        .par_iter()
        .map(|&r| {
            let k = k_gain(s.topology, r, sys.kind())?;
            Ok(closed_loop_poles_direct(sys, k, s.truncation)?.len())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(counts.len())
}

fn min_time(repeats: usize, mut f: impl FnMut() -> Result<usize>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        std::hint::black_box(f()?);
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

pub fn run_bench(sys: &PltvSystem, s: &BenchSettings) -> Result<Vec<BenchRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(s.workers.max(1))
        .build()
        .context("building the bench worker pool")?;
    pool.install(|| {
        // warm-up so the first size does not pay for page faults and caches
        htf_path(sys, s, values(s.r_range, 1))?;
        s.sizes
            .iter()
            .map(|&n| {
                let v = values(s.r_range, n);
                let t_htf = min_time(s.repeats, || htf_path(sys, s, v.clone()))?;
                let t_conv = min_time(s.repeats, || conventional_path(sys, s, &v))?;
                Ok(BenchRow { n, t_htf, t_conv })
            })
            .collect()
    })
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,t_htf_s,t_conv_s\n");
    for r in rows {
        out.push_str(&format!("{},{:e},{:e}\n", r.n, r.t_htf, r.t_conv));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_spreads() {
        assert_eq!(values((1.0, 3.0), 3), vec![1.0, 2.0, 3.0]);
        assert_eq!(values((1.0, 3.0), 1), vec![1.0]);
        assert!(values((1.0, 3.0), 0).is_empty());
    }

    #[test]
    fn csv_layout() {
        let csv = to_csv(&[BenchRow { n: 5, t_htf: 0.25, t_conv: 1.5 }]);
        assert_eq!(csv, "n,t_htf_s,t_conv_s\n5,2.5e-1,1.5e0\n");
    }
}
