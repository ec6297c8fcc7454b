//! The stages behind the subcommands, usable without going through files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use htf_core::feedback::{self, SweepOptions};
use htf_core::htf::{self, HtfManifest};
use htf_core::oracle::{analytic_htf_sample, default_truncation, HarmonicStateSpace};
use htf_core::vecfit::FitConfig;
use htf_core::{
    CentralColumn, FeedbackSpec, FrequencyGrid, HarmonicTransferFunction, PltvSystem, PoleLocus, SidebandResponseSet,
    StabilityReport, TruncationReport,
};

use crate::config::GridSettings;

/// Grid for sampling `sys`. An explicit pump frequency must agree with
/// the system's own.
pub fn oracle_grid(sys: &PltvSystem, grid: &GridSettings) -> Result<FrequencyGrid> {
    let f0 = sys.f0_hz();
    if let Some(given) = grid.f0_hz {
        if (given - f0).abs() > 1e-12 * f0.abs() {
            bail!("--f0 {given:e} Hz disagrees with the system pump frequency {f0:e} Hz");
        }
    }
    let (lo, hi) = grid.band_hz;
    Ok(FrequencyGrid::linear(lo, hi, grid.points, f0, grid.nh)?)
}

pub fn oracle_truncation(grid: &FrequencyGrid, truncation: Option<usize>) -> usize {
    truncation.unwrap_or_else(|| default_truncation(grid.nh()))
}

pub fn oracle_responses(sys: &PltvSystem, grid: &FrequencyGrid, truncation: usize) -> Result<SidebandResponseSet> {
    let hss = HarmonicStateSpace::assemble(sys, truncation)?;
    Ok(analytic_htf_sample(&hss, grid)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyOptions {
    pub fit: FitConfig,
    pub margin: f64,
    pub k_max: Option<usize>,
    pub forced_n: Option<usize>,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            margin: 1.0,
            k_max: None,
            forced_n: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Identified {
    pub truncation: TruncationReport,
    pub htf: HarmonicTransferFunction,
}

impl Identified {
    pub fn column(&self) -> &CentralColumn {
        self.htf.column()
    }

    pub fn n(&self) -> usize {
        self.htf.column().n()
    }
}

pub fn identify(data: &SidebandResponseSet, opts: &IdentifyOptions) -> Result<Identified> {
    let truncation = htf::truncation_order_with(data, opts.margin, opts.k_max)?;
    let n = opts.forced_n.unwrap_or(truncation.chosen_n);
    if n > data.nh() {
        bail!("truncation order {n} exceeds the {} sidebands in the data", data.nh());
    }
    let column = htf::build_central_column(data, n, &opts.fit)?;
    let htf = htf::assemble_htf(column)?;
    Ok(Identified { truncation, htf })
}

/// Column model path written alongside a manifest.
pub fn column_path(manifest: &Path) -> PathBuf {
    let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("htf");
    manifest.with_file_name(format!("{stem}.column.json"))
}

pub fn save_identified(id: &Identified, data: &SidebandResponseSet, manifest: &Path) -> Result<PathBuf> {
    let model_path = column_path(manifest);
    id.column().model().save(&model_path)?;
    let rel = PathBuf::from(model_path.file_name().context("manifest path has no file name")?);
    HtfManifest {
        n: id.n(),
        f0_hz: id.column().f0_hz(),
        nh: data.nh(),
        kind: id.column().kind(),
        model: rel,
        truncation: id.truncation.clone(),
    }
    .save(manifest)?;
    Ok(model_path)
}

pub fn load_htf(manifest_path: &Path) -> Result<HarmonicTransferFunction> {
    let manifest = HtfManifest::load(manifest_path)?;
    let column = manifest.load_column(manifest_path)?;
    Ok(htf::assemble_htf(column)?)
}

pub fn htf_sweep(htf: &HarmonicTransferFunction, spec: &FeedbackSpec, opts: &SweepOptions) -> Result<(PoleLocus, StabilityReport)> {
    let locus = feedback::sweep(htf, spec, opts)?;
    let report = feedback::classify(&locus, opts.margin);
    Ok((locus, report))
}

pub fn oracle_sweep(
    sys: &PltvSystem,
    spec: &FeedbackSpec,
    truncation: usize,
    opts: &SweepOptions,
) -> Result<(PoleLocus, StabilityReport)> {
    let locus = feedback::oracle_sweep(sys, spec, truncation, opts)?;
    let report = feedback::classify(&locus, opts.margin);
    Ok((locus, report))
}

/// `<csv>.report.json` unless given.
pub fn report_path(csv: &Path, explicit: Option<&Path>) -> PathBuf {
    explicit.map_or_else(
        || {
            let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("locus");
            csv.with_file_name(format!("{stem}.report.json"))
        },
        Path::to_path_buf,
    )
}

#[derive(Debug, serde::Serialize)]
pub struct SweepReportFile<'a> {
    pub report: &'a StabilityReport,
    /// Wall time per resistor value in seconds, in resistor order.
    pub timing_s: Vec<(f64, Option<f64>)>,
}

pub fn save_report(locus: &PoleLocus, report: &StabilityReport, path: &Path) -> Result<()> {
    let file = SweepReportFile {
        report,
        timing_s: locus.records.iter().map(|r| (r.r_stab, r.elapsed_s)).collect(),
    };
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
