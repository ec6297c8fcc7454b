//! Constant diagonal feedback `u = -K·y` around a harmonic transfer
//! function, pole loci over a list of stabilization resistor values and
//! stability classification.

use std::f64::consts::TAU;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqdata::ResponseKind;
use crate::htf::HarmonicTransferFunction;
use crate::linalg::{self, CMat};
use crate::oracle::{closed_loop_poles_direct, PltvSystem};

/// Relative modal weight below which a closed-loop mode of a truncated
/// HTF realization is treated as a cancelled copy.
pub const DEFAULT_CANCELLATION_TOL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    #[serde(alias = "parallel_resistor")]
    Parallel,
    #[serde(alias = "series_resistor")]
    Series,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Parallel => "parallel",
            Topology::Series => "series",
        }
    }

    /// The response kind this topology closes the loop around.
    pub fn required_kind(self) -> ResponseKind {
        match self {
            Topology::Parallel => ResponseKind::Impedance,
            Topology::Series => ResponseKind::Admittance,
        }
    }

    /// Resistor value that corresponds to no feedback.
    pub fn open_loop_value(self) -> f64 {
        match self {
            Topology::Parallel => f64::INFINITY,
            Topology::Series => 0.0,
        }
    }

    /// Inverse of [`k_gain`].
    pub fn resistance(self, k: f64) -> f64 {
        match self {
            Topology::Parallel => 1.0 / k,
            Topology::Series => k,
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parallel" | "parallel_resistor" => Ok(Topology::Parallel),
            "series" | "series_resistor" => Ok(Topology::Series),
            other => Err(Error::Invalid(format!("unknown topology '{other}' (use parallel or series)"))),
        }
    }
}

/// Topology plus the swept resistor values in ohms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSpec {
    pub topology: Topology,
    pub values: Vec<f64>,
}

impl FeedbackSpec {
    pub fn new(topology: Topology, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Invalid(format!("resistor values must be positive and finite, got {v}")));
        }
        Ok(Self { topology, values })
    }

    pub fn check_kind(&self, kind: ResponseKind) -> Result<()> {
        check_pairing(self.topology, kind)
    }
}

fn check_pairing(topology: Topology, kind: ResponseKind) -> Result<()> {
    let expected = topology.required_kind();
    if kind != expected {
        return Err(Error::TopologyMismatch {
            topology: topology.name(),
            expected: kind_name(expected),
            found: kind_name(kind),
        });
    }
    Ok(())
}

fn kind_name(kind: ResponseKind) -> &'static str {
    match kind {
        ResponseKind::Impedance => "impedance",
        ResponseKind::Admittance => "admittance",
    }
}

/// Loop gain of a stabilization resistor: `1/R` in parallel with a node
/// impedance, `R` in series with a branch admittance.
pub fn k_gain(topology: Topology, r: f64, kind: ResponseKind) -> Result<f64> {
    check_pairing(topology, kind)?;
    if !(r > 0.0) || r.is_nan() {
        return Err(Error::Invalid(format!("resistor value must be positive, got {r}")));
    }
    Ok(match topology {
        Topology::Parallel => 1.0 / r,
        Topology::Series => r,
    })
}

/// State-space form of the closed loop.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub a: CMat,
    pub b: CMat,
    pub c: CMat,
    pub d: CMat,
}

impl ClosedLoop {
    pub fn poles(&self) -> Result<Vec<Complex64>> {
        linalg::eigvals(&self.a)
    }
}

/// `A_cl = A - B·K(I + D·K)⁻¹·C` with `K = k·I`.
pub fn close_loop(htf: &HarmonicTransferFunction, k: f64) -> Result<ClosedLoop> {
    let re = htf.realization();
    let dim = htf.dimension();
    let eye = |i: usize, j: usize| if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
    let loop_matrix = CMat::from_fn(dim, dim, |i, j| eye(i, j) + re.d[(i, j)] * k);
    let err = || Error::AlgebraicLoop { gain: k };
    let c_cl = linalg::solve(&loop_matrix, &re.c).ok_or_else(err)?;
    let d_cl = linalg::solve(&loop_matrix, &re.d).ok_or_else(err)?;
    let bc = &re.b * &c_cl;
    let n = re.order();
    let a = CMat::from_fn(n, n, |i, j| {
        let diag = if i == j { re.a[i] } else { Complex64::new(0.0, 0.0) };
        diag - bc[(i, j)] * k
    });
    let bd = &re.b * &d_cl;
    let b = CMat::from_fn(n, dim, |i, j| re.b[(i, j)] - bd[(i, j)] * k);
    Ok(ClosedLoop { a, b, c: c_cl, d: d_cl })
}

/// Reporting band on `|Im(s)| / 2π` in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl Band {
    pub fn new(lo_hz: f64, hi_hz: f64) -> Result<Self> {
        if !(lo_hz >= 0.0 && hi_hz >= lo_hz) {
            return Err(Error::Invalid(format!("band [{lo_hz}, {hi_hz}] Hz is not well ordered")));
        }
        Ok(Self { lo_hz, hi_hz })
    }

    pub fn everything() -> Self {
        Self {
            lo_hz: 0.0,
            hi_hz: f64::INFINITY,
        }
    }

    pub fn contains(&self, p: Complex64) -> bool {
        let f = p.im.abs() / TAU;
        f >= self.lo_hz && f <= self.hi_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub band: Band,
    /// Modes whose weight relative to the strongest in-band mode falls
    /// below this are dropped; only applies to HTFs larger than 1×1.
    pub cancellation_tol: f64,
    pub margin: f64,
}

impl SweepOptions {
    pub fn new(band: Band) -> Self {
        Self {
            band,
            cancellation_tol: DEFAULT_CANCELLATION_TOL,
            margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleRecord {
    pub r_stab: f64,
    pub k: f64,
    pub poles: Vec<Complex64>,
    pub stable: bool,
    /// No pole fell inside the reporting band.
    pub empty: bool,
    pub dominant_unstable: Option<Complex64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_s: Option<f64>,
}

impl PoleRecord {
    fn new(r_stab: f64, k: f64, mut poles: Vec<Complex64>, margin: f64) -> Self {
        poles.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
        let dominant = poles.iter().copied().max_by(|a, b| a.re.total_cmp(&b.re));
        let stable = dominant.is_some_and(|d| d.re < -margin);
        Self {
            r_stab,
            k,
            empty: poles.is_empty(),
            stable,
            dominant_unstable: if stable { None } else { dominant },
            poles,
            elapsed_s: None,
        }
    }

    pub fn max_real(&self) -> Option<f64> {
        self.poles.iter().map(|p| p.re).max_by(f64::total_cmp)
    }

    pub fn is_open_loop(&self) -> bool {
        self.k == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleLocus {
    pub topology: Topology,
    pub band: Band,
    pub margin: f64,
    /// Ordered by resistor value, open-loop record included.
    pub records: Vec<PoleRecord>,
}

impl PoleLocus {
    fn assemble(topology: Topology, band: Band, margin: f64, mut records: Vec<PoleRecord>) -> Self {
        records.sort_by(|a, b| a.r_stab.total_cmp(&b.r_stab));
        Self {
            topology,
            band,
            margin,
            records,
        }
    }

    pub fn open_loop(&self) -> Option<&PoleRecord> {
        self.records.iter().find(|r| r.is_open_loop())
    }

    pub fn swept(&self) -> impl Iterator<Item = &PoleRecord> {
        self.records.iter().filter(|r| !r.is_open_loop())
    }

    /// `r_stab_ohm,k_gain,pole_re,pole_im,stable`, one row per pole; a
    /// record without in-band poles is written as a single row with empty
    /// pole fields.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::from("r_stab_ohm,k_gain,pole_re,pole_im,stable\n");
        for r in &self.records {
            if r.poles.is_empty() {
                writeln!(out, "{:e},{:e},,,false", r.r_stab, r.k).unwrap();
            }
            for p in &r.poles {
                writeln!(out, "{:e},{:e},{:e},{:e},{}", r.r_stab, r.k, p.re, p.im, r.stable).unwrap();
            }
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// One row of a locus CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocusRow {
    pub r_stab: f64,
    pub k: f64,
    pub pole: Option<Complex64>,
    pub stable: bool,
}

pub fn parse_locus_csv(text: &str) -> Result<Vec<LocusRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::parse("header", e.to_string()))?.clone();
    let expected = ["r_stab_ohm", "k_gain", "pole_re", "pole_im", "stable"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse("header", format!("expected '{}'", expected.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::parse(format!("row {row}"), e.to_string()))?;
        let num = |c: usize| -> Result<f64> {
            rec[c]
                .parse()
                .map_err(|_| Error::parse(format!("row {row}, column {}", expected[c]), format!("bad number '{}'", &rec[c])))
        };
        let pole = if rec[2].is_empty() && rec[3].is_empty() {
            None
        } else {
            Some(Complex64::new(num(2)?, num(3)?))
        };
        let stable = match &rec[4] {
            "true" => true,
            "false" => false,
            other => return Err(Error::parse(format!("row {row}, column stable"), format!("bad flag '{other}'"))),
        };
        rows.push(LocusRow {
            r_stab: num(0)?,
            k: num(1)?,
            pole,
            stable,
        });
    }
    Ok(rows)
}

pub fn load_locus_csv(path: impl AsRef<Path>) -> Result<Vec<LocusRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_locus_csv(&text)
}

/// Closed-loop poles of `htf` for gain `k`, filtered to the band and, for
/// matrices larger than 1×1, stripped of modes that the truncation leaves
/// nearly uncontrollable or unobservable.
pub fn closed_loop_poles(htf: &HarmonicTransferFunction, k: f64, opts: &SweepOptions) -> Result<Vec<Complex64>> {
    if k == 0.0 {
        return Ok(htf.realization().a.iter().copied().filter(|p| opts.band.contains(*p)).collect());
    }
    let cl = close_loop(htf, k)?;
    if htf.dimension() == 1 || opts.cancellation_tol <= 0.0 {
        return Ok(cl.poles()?.into_iter().filter(|p| opts.band.contains(*p)).collect());
    }
    let (values, vectors) = linalg::eig(&cl.a)?;
    let cv = &cl.c * &vectors;
    let weights_in = linalg::solve(&vectors, &cl.b);
    let weight = |j: usize| -> f64 {
        let out = (0..cv.nrows()).map(|r| cv[(r, j)].norm_sqr()).sum::<f64>().sqrt();
        let inp = match &weights_in {
            Some(w) => (0..w.ncols()).map(|c| w[(j, c)].norm_sqr()).sum::<f64>().sqrt(),
            None => 1.0,
        };
        out * inp
    };
    let in_band: Vec<(Complex64, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, p)| opts.band.contains(**p))
        .map(|(j, &p)| (p, weight(j)))
        .collect();
    let peak = in_band.iter().map(|x| x.1).fold(0.0, f64::max);
    Ok(in_band
        .into_iter()
        .filter(|&(_, w)| peak == 0.0 || w >= opts.cancellation_tol * peak)
        .map(|(p, _)| p)
        .collect())
}

/// Pole locus of the HTF under every swept resistor value plus the open
/// loop.
pub fn sweep(htf: &HarmonicTransferFunction, spec: &FeedbackSpec, opts: &SweepOptions) -> Result<PoleLocus> {
    spec.check_kind(htf.kind())?;
    let mut records: Vec<PoleRecord> = spec
        .values
        .par_iter()
        .map(|&r| {
            let k = k_gain(spec.topology, r, htf.kind())?;
            let start = Instant::now();
            let poles = closed_loop_poles(htf, k, opts)?;
            let mut rec = PoleRecord::new(r, k, poles, opts.margin);
            rec.elapsed_s = Some(start.elapsed().as_secs_f64());
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    let open = closed_loop_poles(htf, 0.0, opts)?;
    records.push(PoleRecord::new(spec.topology.open_loop_value(), 0.0, open, opts.margin));
    Ok(PoleLocus::assemble(spec.topology, opts.band, opts.margin, records))
}

/// The conventional path: exact PLTV poles re-solved for every value.
pub fn oracle_sweep(sys: &PltvSystem, spec: &FeedbackSpec, truncation: usize, opts: &SweepOptions) -> Result<PoleLocus> {
    spec.check_kind(sys.kind())?;
    let mut values: Vec<(f64, f64)> = spec
        .values
        .iter()
        .map(|&r| Ok((r, k_gain(spec.topology, r, sys.kind())?)))
        .collect::<Result<_>>()?;
    values.push((spec.topology.open_loop_value(), 0.0));
    let records = values
        .par_iter()
        .map(|&(r, k)| {
            let start = Instant::now();
            let poles: Vec<Complex64> = closed_loop_poles_direct(sys, k, truncation)?
                .into_iter()
                .filter(|p| opts.band.contains(*p))
                .collect();
            let mut rec = PoleRecord::new(r, k, poles, opts.margin);
            rec.elapsed_s = Some(start.elapsed().as_secs_f64());
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    Ok(PoleLocus::assemble(spec.topology, opts.band, opts.margin, records))
}

/// Linear estimate of where the dominant real part crosses `-margin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub estimate: f64,
    /// `(unstable value, stable value)`.
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub topology: Topology,
    pub margin: f64,
    /// Smallest stable series value or largest stable parallel value.
    pub critical_value: Option<f64>,
    pub crossing: Option<Crossing>,
    /// Largest real part per swept value in resistor order; `None` marks
    /// a record with no in-band poles.
    pub max_real: Vec<(f64, Option<f64>)>,
    pub open_loop_max_real: Option<f64>,
    pub empty_records: usize,
}

impl StabilityReport {
    pub fn all_unstable(&self) -> bool {
        self.critical_value.is_none()
    }
}

pub fn classify(locus: &PoleLocus, margin: f64) -> StabilityReport {
    let swept: Vec<&PoleRecord> = locus.swept().collect();
    let stable = |r: &PoleRecord| r.max_real().is_some_and(|m| m < -margin);
    let critical_index = match locus.topology {
        Topology::Series => swept.iter().position(|r| stable(r)),
        Topology::Parallel => swept.iter().rposition(|r| stable(r)),
    };
    let crossing = critical_index.and_then(|i| {
        let j = match locus.topology {
            Topology::Series => i.checked_sub(1)?,
            Topology::Parallel => (i + 1 < swept.len()).then_some(i + 1)?,
        };
        let (s, u) = (swept[i], swept[j]);
        let (xs, xu) = (s.max_real()? + margin, u.max_real()? + margin);
        let t = xu / (xu - xs);
        Some(Crossing {
            estimate: u.r_stab + t * (s.r_stab - u.r_stab),
            bracket: (u.r_stab, s.r_stab),
        })
    });
    StabilityReport {
        topology: locus.topology,
        margin,
        critical_value: critical_index.map(|i| swept[i].r_stab),
        crossing,
        max_real: swept.iter().map(|r| (r.r_stab, r.max_real())).collect(),
        open_loop_max_real: locus.open_loop().and_then(|r| r.max_real()),
        empty_records: swept.iter().filter(|r| r.empty).count(),
    }
}

/// Bisection for the root of a scalar function known to change sign on
/// `[lo, hi]`, to a bracket width of `rel_tol·|root|`.
pub fn bisect(mut lo: f64, mut hi: f64, rel_tol: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Bisection(format!(
            "no sign change on [{lo:e}, {hi:e}] (values {f_lo:e}, {f_hi:e})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= rel_tol * mid.abs() {
            return Ok(mid);
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Resistor value at which the exact dominant in-band PLTV pole crosses
/// `-margin`, located by bisection on `[r_lo, r_hi]`.
pub fn bisect_crossing(
    sys: &PltvSystem,
    topology: Topology,
    (r_lo, r_hi): (f64, f64),
    truncation: usize,
    opts: &SweepOptions,
    rel_tol: f64,
) -> Result<f64> {
    check_pairing(topology, sys.kind())?;
    bisect(r_lo, r_hi, rel_tol, |r| {
        let k = k_gain(topology, r, sys.kind())?;
        closed_loop_poles_direct(sys, k, truncation)?
            .into_iter()
            .filter(|p| opts.band.contains(*p))
            .map(|p| p.re + opts.margin)
            .max_by(f64::total_cmp)
            .ok_or_else(|| Error::Bisection(format!("no in-band pole at R = {r:e}")))
    })
}
