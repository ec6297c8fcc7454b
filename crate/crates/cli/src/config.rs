//! Run configuration: command-line flags override the `--config` file,
//! which overrides built-in defaults.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use htf_core::feedback::{Band, Topology, DEFAULT_CANCELLATION_TOL};
use htf_core::vecfit::{FitConfig, Weighting};
use serde::Deserialize;

pub const DEFAULT_NH: usize = 8;
pub const DEFAULT_POINTS: usize = 101;
pub const DEFAULT_BAND_HZ: (f64, f64) = (1e8, 6e8);
pub const DEFAULT_BENCH_SIZES: [usize; 5] = [1, 5, 10, 20, 50];

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub truncation: TruncationSection,
    #[serde(default)]
    pub feedback: FeedbackSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub f0_hz: Option<f64>,
    pub band_hz: Option<(f64, f64)>,
    pub points: Option<usize>,
    pub nh: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub truncation: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub order_min: Option<usize>,
    pub order_max: Option<usize>,
    pub max_iterations: Option<usize>,
    pub rms_tolerance: Option<f64>,
    pub weighting: Option<Weighting>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    pub margin: Option<f64>,
    pub k_max: Option<usize>,
    pub n: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    pub topology: Option<Topology>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub band_hz: Option<(f64, f64)>,
    pub margin: Option<f64>,
    pub cancellation_tol: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub sizes: Option<Vec<usize>>,
    pub repeats: Option<usize>,
    pub workers: Option<usize>,
    pub r_range: Option<(f64, f64)>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// Parses `lo:hi`.
pub fn parse_range(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(':')
        .with_context(|| format!("expected 'lo:hi', got '{s}'"))?;
    let lo: f64 = lo.trim().parse().with_context(|| format!("bad lower bound in '{s}'"))?;
    let hi: f64 = hi.trim().parse().with_context(|| format!("bad upper bound in '{s}'"))?;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        bail!("range '{s}' is not well ordered");
    }
    Ok((lo, hi))
}

/// Parses a comma-separated list of numbers.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<T>().map_err(|_| anyhow::anyhow!("bad list entry '{}'", t.trim())))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub f0_hz: Option<f64>,
    pub band_hz: (f64, f64),
    pub points: usize,
    pub nh: usize,
}

impl GridSettings {
    pub fn resolve(file: &GridSection, f0: Option<f64>, band: Option<(f64, f64)>, points: Option<usize>, nh: Option<usize>) -> Self {
        Self {
            f0_hz: f0.or(file.f0_hz),
            band_hz: band.or(file.band_hz).unwrap_or(DEFAULT_BAND_HZ),
            points: points.or(file.points).unwrap_or(DEFAULT_POINTS),
            nh: nh.or(file.nh).unwrap_or(DEFAULT_NH),
        }
    }
}

pub fn resolve_fit(
    file: &FitSection,
    order_min: Option<usize>,
    order_max: Option<usize>,
    max_iterations: Option<usize>,
    rms_tolerance: Option<f64>,
    weighting: Option<Weighting>,
) -> Result<FitConfig> {
    let d = FitConfig::default();
    let cfg = FitConfig {
        order_min: order_min.or(file.order_min).unwrap_or(d.order_min),
        order_max: order_max.or(file.order_max).unwrap_or(d.order_max),
        max_iterations: max_iterations.or(file.max_iterations).unwrap_or(d.max_iterations),
        rms_tolerance: rms_tolerance.or(file.rms_tolerance).unwrap_or(d.rms_tolerance),
        weighting: weighting.or(file.weighting).unwrap_or(d.weighting),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub band: Band,
    pub margin: f64,
    pub cancellation_tol: f64,
}

impl SweepSettings {
    pub fn resolve(file: &SweepSection, band: Option<(f64, f64)>, margin: Option<f64>, cancellation_tol: Option<f64>) -> Result<Self> {
        let (lo, hi) = band.or(file.band_hz).unwrap_or(DEFAULT_BAND_HZ);
        Ok(Self {
            band: Band::new(lo, hi)?,
            margin: margin.or(file.margin).unwrap_or(0.0),
            cancellation_tol: cancellation_tol.or(file.cancellation_tol).unwrap_or(DEFAULT_CANCELLATION_TOL),
        })
    }

    pub fn options(&self) -> htf_core::feedback::SweepOptions {
        htf_core::feedback::SweepOptions {
            band: self.band,
            cancellation_tol: self.cancellation_tol,
            margin: self.margin,
        }
    }
}

pub fn resolve_feedback(
    file: &FeedbackSection,
    topology: Option<Topology>,
    values: Option<Vec<f64>>,
) -> Result<htf_core::FeedbackSpec> {
    let topology = topology
        .or(file.topology)
        .context("no feedback topology given (--topology parallel|series or [feedback] topology)")?;
    let values = values
        .or_else(|| file.values.clone())
        .context("no resistor values given (--values or [feedback] values)")?;
    Ok(htf_core::FeedbackSpec::new(topology, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: ConfigFile = toml::from_str("[grid]\npoints = 51\nnh = 4\n[fit]\nrms_tolerance = 1e-6\n").unwrap();
        let g = GridSettings::resolve(&file.grid, None, None, Some(21), None);
        assert_eq!(g.points, 21);
        assert_eq!(g.nh, 4);
        assert_eq!(g.band_hz, DEFAULT_BAND_HZ);
        let fit = resolve_fit(&file.fit, None, None, None, None, None).unwrap();
        assert_eq!(fit.rms_tolerance, 1e-6);
        assert_eq!(fit.order_min, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("[grid]\npoint = 3\n").is_err());
    }

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_range("1e5:6e8").unwrap(), (1e5, 6e8));
        assert!(parse_range("6e8:1e5").is_err());
        assert!(parse_range("abc").is_err());
        assert_eq!(parse_list::<f64>("1, 2.5,3").unwrap(), vec![1.0, 2.5, 3.0]);
        assert!(parse_list::<f64>("1,x").is_err());
    }
}
