use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use htf_core::feedback::{load_locus_csv, Topology};
use htf_core::freqdata::{load_responses, ResponseMeta};
use htf_core::{PltvSystem, PoleLocus, StabilityReport};

use crate::args::{BenchArgs, FeedbackArgs, IdentifyArgs, OracleGenArgs, OracleSweepArgs, PlotArgs, SweepArgs};
use crate::bench::{self, BenchSettings};
use crate::config::{self, ConfigFile, GridSettings, SweepSettings, DEFAULT_BENCH_SIZES};
use crate::pipeline::{self, IdentifyOptions};
use crate::{svg, workers_from_env, Warnings};

fn load_system(path: &Path) -> Result<PltvSystem> {
    PltvSystem::load(path).with_context(|| format!("loading system {}", path.display()))
}

pub fn oracle_gen(args: &OracleGenArgs, cfg: &ConfigFile) -> Result<Warnings> {
    let sys = load_system(&args.system)?;
    let g = &args.grid;
    let settings = GridSettings::resolve(&cfg.grid, g.f0, g.band, g.points, g.nh);
    let grid = pipeline::oracle_grid(&sys, &settings)?;
    let m = pipeline::oracle_truncation(&grid, args.truncation.or(cfg.oracle.truncation));
    let set = htf_core::oracle::emit_responses(&sys, m, &grid, &args.output)?;
    println!(
        "wrote {} rows x {} sidebands (NH = {}, M = {m}) to {}",
        set.grid().len(),
        2 * set.nh() + 1,
        set.nh(),
        args.output.display()
    );
    Ok(Vec::new())
}

pub fn identify(args: &IdentifyArgs, cfg: &ConfigFile) -> Result<Warnings> {
    let meta = ResponseMeta {
        f0_hz: args.f0.or(cfg.grid.f0_hz),
        kind: args.kind,
    };
    let data = load_responses(&args.responses, &meta)?;
    if let Some(nh) = args.nh.or(cfg.grid.nh) {
        if nh != data.nh() {
            bail!(
                "{} carries NH = {} sidebands but NH = {nh} was expected",
                args.responses.display(),
                data.nh()
            );
        }
    }
    let f = &args.fit;
    let opts = IdentifyOptions {
        fit: config::resolve_fit(&cfg.fit, f.order_min, f.order_max, f.max_iterations, f.rms_tol, f.weighting)?,
        margin: args.margin.or(cfg.truncation.margin).unwrap_or(1.0),
        k_max: args.k_max.or(cfg.truncation.k_max),
        forced_n: args.n.or(cfg.truncation.n),
    };
    let id = pipeline::identify(&data, &opts)?;
    for v in &id.truncation.verdicts {
        println!(
            "sideband {}: max |H+k|/|H0| = {:.3e}, max |H-k|/|H0| = {:.3e} over {} points -> {}",
            v.k,
            v.max_ratio_pos,
            v.max_ratio_neg,
            v.points,
            if v.passes { "negligible" } else { "kept" }
        );
    }
    let n = id.n();
    println!("chosen n = {n} ({}x{} HTF)", 2 * n + 1, 2 * n + 1);
    let model_path = pipeline::save_identified(&id, &data, &args.output)?;
    let mut warnings = Vec::new();
    match &id.column().model().fit_info {
        Some(info) => {
            println!(
                "fit rms = {:.3e} (order {}, {} iterations)",
                info.rms, info.order, info.iterations
            );
            if !info.tolerance_met {
                warnings.push(format!(
                    "fit rms {:.3e} misses the tolerance {:.3e}; best model kept",
                    info.rms, opts.fit.rms_tolerance
                ));
            }
        }
        None => println!("fit rms unavailable"),
    }
    println!("wrote {} and {}", args.output.display(), model_path.display());
    Ok(warnings)
}

fn feedback_settings(a: &FeedbackArgs, cfg: &ConfigFile) -> Result<(htf_core::FeedbackSpec, SweepSettings)> {
    let spec = config::resolve_feedback(&cfg.feedback, a.topology, a.values.clone().map(|v| v.0))?;
    let sweep = SweepSettings::resolve(&cfg.sweep, a.band, a.margin, a.cancellation_tol)?;
    Ok((spec, sweep))
}

fn report_locus(locus: &PoleLocus, report: &StabilityReport, csv: &Path, report_path: &Path) -> Result<Warnings> {
    locus.save_csv(csv)?;
    pipeline::save_report(locus, report, report_path)?;
    let what = match report.topology {
        Topology::Series => "smallest stable series R",
        Topology::Parallel => "largest stable parallel R",
    };
    match report.critical_value {
        Some(r) => println!("{what} = {r:e} ohm"),
        None => println!("{what}: none (unstable at every value)"),
    }
    if let Some(c) = report.crossing {
        println!(
            "interpolated crossing = {:e} ohm (bracket {:e} .. {:e})",
            c.estimate, c.bracket.0, c.bracket.1
        );
    }
    println!("wrote {} and {}", csv.display(), report_path.display());
    let mut warnings = Vec::new();
    if report.empty_records > 0 {
        warnings.push(format!(
            "{} resistor value(s) left no pole in the reporting band",
            report.empty_records
        ));
    }
    Ok(warnings)
}

pub fn sweep(args: &SweepArgs, cfg: &ConfigFile) -> Result<Warnings> {
    let htf = pipeline::load_htf(&args.manifest)?;
    let (spec, settings) = feedback_settings(&args.feedback, cfg)?;
    let (locus, report) = pipeline::htf_sweep(&htf, &spec, &settings.options())?;
    let rp = pipeline::report_path(&args.output, args.report.as_deref());
    let mut warnings = report_locus(&locus, &report, &args.output, &rp)?;
    if !htf.column().tolerance_met() {
        warnings.push("the identified model did not meet its fit tolerance".into());
    }
    Ok(warnings)
}

pub fn oracle_sweep(args: &OracleSweepArgs, cfg: &ConfigFile) -> Result<Warnings> {
    let sys = load_system(&args.system)?;
    let (spec, settings) = feedback_settings(&args.feedback, cfg)?;
    let nh = cfg.grid.nh.unwrap_or(config::DEFAULT_NH);
    let m = args
        .truncation
        .or(cfg.oracle.truncation)
        .unwrap_or_else(|| htf_core::oracle::default_truncation(nh));
    let (locus, report) = pipeline::oracle_sweep(&sys, &spec, m, &settings.options())?;
    let total: f64 = locus.records.iter().filter_map(|r| r.elapsed_s).sum();
    println!("{} exact solves at M = {m}, {total:.3e} s total", locus.records.len());
    let rp = pipeline::report_path(&args.output, args.report.as_deref());
    report_locus(&locus, &report, &args.output, &rp)
}

pub fn plot(args: &PlotArgs, _cfg: &ConfigFile) -> Result<Warnings> {
    let load = |paths: &[std::path::PathBuf]| -> Result<Vec<_>> {
        let mut rows = Vec::new();
        for p in paths {
            rows.extend(load_locus_csv(p).with_context(|| format!("reading locus {}", p.display()))?);
        }
        Ok(rows)
    };
    let htf = load(&args.htf)?;
    let oracle = load(&args.oracle)?;
    if args.htf.is_empty() && args.oracle.is_empty() {
        bail!("nothing to plot: give --htf and/or --oracle locus files");
    }
    fs::write(&args.output, svg::render(&htf, &oracle)).with_context(|| format!("writing {}", args.output.display()))?;
    println!("wrote {}", args.output.display());
    Ok(Vec::new())
}

pub fn bench_settings(args: &BenchArgs, cfg: &ConfigFile, sys: &PltvSystem) -> Result<BenchSettings> {
    let g = &args.grid;
    let grid_settings = GridSettings::resolve(&cfg.grid, g.f0, g.band, g.points, g.nh);
    let grid = pipeline::oracle_grid(sys, &grid_settings)?;
    let truncation = pipeline::oracle_truncation(&grid, cfg.oracle.truncation);
    let topology = args
        .topology
        .or(cfg.feedback.topology)
        .unwrap_or(Topology::Series);
    let r_range = args
        .values
        .or(cfg.bench.r_range)
        .or_else(|| {
            let v = cfg.feedback.values.as_ref()?;
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (hi > lo).then_some((lo, hi))
        })
        .context("no resistor range for bench (--values lo:hi, [bench] r_range or [feedback] values)")?;
    let fit = config::resolve_fit(&cfg.fit, None, None, None, None, None)?;
    Ok(BenchSettings {
        sizes: args
            .sizes
            .clone()
            .map(|s| s.0)
            .or_else(|| cfg.bench.sizes.clone())
            .unwrap_or_else(|| DEFAULT_BENCH_SIZES.to_vec()),
        repeats: args.repeats.or(cfg.bench.repeats).unwrap_or(3),
        workers: workers_from_env()?.or(cfg.bench.workers).unwrap_or(1),
        r_range,
        topology,
        grid,
        truncation,
        identify: IdentifyOptions {
            fit,
            margin: cfg.truncation.margin.unwrap_or(1.0),
            k_max: cfg.truncation.k_max,
            forced_n: cfg.truncation.n,
        },
        sweep: SweepSettings::resolve(&cfg.sweep, None, None, None)?.options(),
    })
}

pub fn bench(args: &BenchArgs, cfg: &ConfigFile) -> Result<Warnings> {
    let sys = load_system(&args.system)?;
    let settings = bench_settings(args, cfg, &sys)?;
    let rows = bench::run_bench(&sys, &settings)?;
    for r in &rows {
        println!("N = {:>4}: t_htf = {:.3e} s, t_conv = {:.3e} s", r.n, r.t_htf, r.t_conv);
    }
    fs::write(&args.output, bench::to_csv(&rows)).with_context(|| format!("writing {}", args.output.display()))?;
    println!("wrote {} ({} worker(s))", args.output.display(), settings.workers);
    Ok(Vec::new())
}
