//! Sideband frequency-response ensembles.
//!
//! A [`SidebandResponseSet`] holds the central column of the harmonic
//! transfer function sampled on a small-signal grid: `H_k(jω)` for
//! `k = -NH..=NH`, where `H_k` maps an input tone at `ω` to the output
//! component at `ω + k·ω0`. Negative sidebands are stored as the
//! mathematical objects `H_{-k}(jω)` themselves (already conjugated, as a
//! harmonic-balance export would deliver them after post-processing).
//!
//! Frequencies are stored in Hz; kernels convert to rad/s on demand.

use std::f64::consts::TAU;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Small-signal sweep grid together with the pump frequency and harmonic
/// count of the large-signal steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points_hz: Vec<f64>,
    f0_hz: f64,
    nh: usize,
}

impl FrequencyGrid {
    pub fn new(points_hz: Vec<f64>, f0_hz: f64, nh: usize) -> Result<Self> {
        if !(f0_hz.is_finite() && f0_hz > 0.0) {
            return Err(Error::Invalid(format!("f0 must be positive, got {f0_hz}")));
        }
        if nh < 1 {
            return Err(Error::Invalid("harmonic count NH must be at least 1".into()));
        }
        if points_hz.is_empty() {
            return Err(Error::Invalid("frequency grid is empty".into()));
        }
        for (i, &f) in points_hz.iter().enumerate() {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::Invalid(format!(
                    "grid point {i} must be positive and finite, got {f}"
                )));
            }
            if i > 0 {
                check_order(points_hz[i - 1], f, &format!("grid point {i}"))?;
            }
        }
        Ok(Self {
            points_hz,
            f0_hz,
            nh,
        })
    }

    /// `count` points linearly spaced over `[lo_hz, hi_hz]`.
    pub fn linear(lo_hz: f64, hi_hz: f64, count: usize, f0_hz: f64, nh: usize) -> Result<Self> {
        if count < 2 || !(hi_hz > lo_hz) {
            return Err(Error::Invalid(format!(
                "need at least two points on a well-ordered band, got {count} on [{lo_hz}, {hi_hz}]"
            )));
        }
        let step = (hi_hz - lo_hz) / (count - 1) as f64;
        let points = (0..count)
            .map(|i| {
                if i == count - 1 {
                    hi_hz
                } else {
                    lo_hz + step * i as f64
                }
            })
            .collect();
        Self::new(points, f0_hz, nh)
    }

    pub fn points_hz(&self) -> &[f64] {
        &self.points_hz
    }

    pub fn len(&self) -> usize {
        self.points_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points_hz.is_empty()
    }

    pub fn f0_hz(&self) -> f64 {
        self.f0_hz
    }

    pub fn omega0(&self) -> f64 {
        TAU * self.f0_hz
    }

    pub fn nh(&self) -> usize {
        self.nh
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.points_hz.iter().map(|f| TAU * f).collect()
    }

    pub fn min_hz(&self) -> f64 {
        self.points_hz[0]
    }

    pub fn max_hz(&self) -> f64 {
        *self.points_hz.last().unwrap()
    }

    pub(crate) fn with_nh(&self, nh: usize) -> Self {
        Self {
            nh,
            ..self.clone()
        }
    }
}

fn check_order(prev: f64, next: f64, location: &str) -> Result<()> {
    if next == prev {
        Err(Error::parse(location, format!("duplicate grid frequency {next}")))
    } else if next < prev {
        Err(Error::parse(location, format!("non-monotone grid ({next} after {prev})")))
    } else {
        Ok(())
    }
}

/// Whether the responses are node impedances (current-source input,
/// voltage output) or branch admittances (voltage-source input, current
/// output).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    #[default]
    Impedance,
    Admittance,
}

impl fmt::Display for ResponseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResponseKind::Impedance => "impedance",
            ResponseKind::Admittance => "admittance",
        })
    }
}

impl FromStr for ResponseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "impedance" => Ok(ResponseKind::Impedance),
            "admittance" => Ok(ResponseKind::Admittance),
            other => Err(Error::Invalid(format!("unknown response kind '{other}'"))),
        }
    }
}

/// `H_k(jω)` for every sideband `k ∈ [-NH, NH]` on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SidebandResponseSet {
    grid: FrequencyGrid,
    kind: ResponseKind,
    // index k + nh
    responses: Vec<Vec<Complex64>>,
}

impl SidebandResponseSet {
    /// `responses[i]` holds sideband `k = i - NH`.
    pub fn new(grid: FrequencyGrid, kind: ResponseKind, responses: Vec<Vec<Complex64>>) -> Result<Self> {
        let nh = grid.nh();
        if responses.len() != 2 * nh + 1 {
            return Err(Error::Invalid(format!(
                "expected {} sideband vectors for NH = {nh}, got {}",
                2 * nh + 1,
                responses.len()
            )));
        }
        for (i, r) in responses.iter().enumerate() {
            if r.len() != grid.len() {
                return Err(Error::Invalid(format!(
                    "sideband {} has {} samples, grid has {}",
                    i as i64 - nh as i64,
                    r.len(),
                    grid.len()
                )));
            }
        }
        Ok(Self {
            grid,
            kind,
            responses,
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn kind(&self) -> ResponseKind {
        self.kind
    }

    pub fn nh(&self) -> usize {
        self.grid.nh()
    }

    /// Samples of `H_k`. Panics if `|k| > NH`.
    pub fn sideband(&self, k: i64) -> &[Complex64] {
        let nh = self.nh() as i64;
        assert!(k.abs() <= nh, "sideband {k} outside [-{nh}, {nh}]");
        &self.responses[(k + nh) as usize]
    }

    /// Keeps only sidebands with `|k| <= n`.
    pub fn restrict(&self, n: usize) -> Result<Self> {
        let nh = self.nh();
        if n > nh {
            return Err(Error::Invalid(format!("order {n} exceeds NH = {nh}")));
        }
        if n == 0 {
            Ok(Self {
                grid: self.grid.with_nh(0),
                kind: self.kind,
                responses: vec![self.responses[nh].clone()],
            })
        } else {
            Self::new(
                self.grid.with_nh(n),
                self.kind,
                self.responses[nh - n..=nh + n].to_vec(),
            )
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_responses(path, &ResponseMeta::default())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_responses(self, path)
    }
}

/// Hermitian-symmetrized ensemble `H̃_k`, `k ∈ [-n, n]`.
///
/// For `k ≥ 1`: `H̃_k = (H_k + H_{-k}) / 2` and `H̃_{-k} = (j/2)(H_k - H_{-k})`.
/// For a real periodic system both are conjugate-symmetric in `ω`, so each
/// can be fitted with real-coefficient rational functions.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianResponseSet {
    grid: FrequencyGrid,
    kind: ResponseKind,
    n: usize,
    elements: Vec<Vec<Complex64>>,
}

impl HermitianResponseSet {
    /// `elements[i]` holds `H̃_{i-n}`.
    pub fn new(grid: FrequencyGrid, kind: ResponseKind, n: usize, elements: Vec<Vec<Complex64>>) -> Result<Self> {
        if elements.len() != 2 * n + 1 {
            return Err(Error::Invalid(format!(
                "expected {} elements for n = {n}, got {}",
                2 * n + 1,
                elements.len()
            )));
        }
        if elements.iter().any(|e| e.len() != grid.len()) {
            return Err(Error::Invalid("element length does not match grid".into()));
        }
        Ok(Self {
            grid,
            kind,
            n,
            elements,
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn kind(&self) -> ResponseKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn element(&self, k: i64) -> &[Complex64] {
        &self.elements[(k + self.n as i64) as usize]
    }

    /// All elements ordered `H̃_{-n} … H̃_n`.
    pub fn elements(&self) -> &[Vec<Complex64>] {
        &self.elements
    }
}

pub fn to_hermitian(src: &SidebandResponseSet, n: usize) -> Result<HermitianResponseSet> {
    let nh = src.nh();
    if n > nh {
        return Err(Error::Invalid(format!(
            "Hermitian order {n} outside [0, {nh}]"
        )));
    }
    let len = src.grid().len();
    let mut elements = vec![Vec::new(); 2 * n + 1];
    elements[n] = src.sideband(0).to_vec();
    for k in 1..=n as i64 {
        let pos = src.sideband(k);
        let neg = src.sideband(-k);
        let mut sum = Vec::with_capacity(len);
        let mut diff = Vec::with_capacity(len);
        for (&a, &b) in pos.iter().zip(neg) {
            sum.push((a + b) * 0.5);
            diff.push(times_j((a - b) * 0.5));
        }
        elements[n + k as usize] = sum;
        elements[n - k as usize] = diff;
    }
    HermitianResponseSet::new(src.grid().clone(), src.kind(), n, elements)
}

pub fn from_hermitian(src: &HermitianResponseSet) -> Result<SidebandResponseSet> {
    let n = src.n();
    let mut responses = vec![Vec::new(); 2 * n + 1];
    responses[n] = src.element(0).to_vec();
    for k in 1..=n as i64 {
        let sym = src.element(k);
        let anti = src.element(-k);
        // -j·H̃_{-k} and +j·H̃_{-k} by exact component swaps
        responses[n + k as usize] = sym.iter().zip(anti).map(|(&s, &a)| s - times_j(a)).collect();
        responses[n - k as usize] = sym.iter().zip(anti).map(|(&s, &a)| s + times_j(a)).collect();
    }
    let grid = src.grid().with_nh(n);
    if n == 0 {
        return Ok(SidebandResponseSet {
            grid,
            kind: src.kind(),
            responses,
        });
    }
    SidebandResponseSet::new(grid, src.kind(), responses)
}

#[inline]
fn times_j(z: Complex64) -> Complex64 {
    Complex64::new(-z.im, z.re)
}

/// Metadata that may be supplied by the caller when a response file does
/// not carry it in its comment preamble. File metadata wins when both are
/// present and agree; a conflict is an error.
#[derive(Debug, Clone, Copy, Default)]
pub struct ResponseMeta {
    pub f0_hz: Option<f64>,
    pub kind: Option<ResponseKind>,
}

/// Reads a sideband response CSV.
///
/// Layout: optional `# key = value` preamble lines (`f0_hz`, `kind`), then
/// the header `f_hz,H-NH_re,H-NH_im,…,HNH_re,HNH_im` in ascending `k`, then
/// one row per grid frequency.
pub fn load_responses(path: impl AsRef<Path>, meta: &ResponseMeta) -> Result<SidebandResponseSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_responses(&text, meta).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn parse_responses(text: &str, meta: &ResponseMeta) -> Result<SidebandResponseSet> {
    let mut f0_file = None;
    let mut kind_file = None;
    let mut body_start = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once('=') {
                match key.trim() {
                    "f0_hz" => {
                        f0_file = Some(value.trim().parse::<f64>().map_err(|_| {
                            Error::parse("preamble", format!("bad f0_hz '{}'", value.trim()))
                        })?)
                    }
                    "kind" => kind_file = Some(value.trim().parse::<ResponseKind>()?),
                    _ => {}
                }
            }
            body_start += line.len();
        } else if trimmed.is_empty() {
            body_start += line.len();
        } else {
            break;
        }
    }
    let f0_hz = resolve(f0_file, meta.f0_hz, "f0_hz", |a, b| (a - b).abs() <= 1e-12 * a.abs())?
        .ok_or_else(|| Error::parse("preamble", "missing f0_hz (add '# f0_hz = …' or pass it explicitly)"))?;
    let kind = resolve(kind_file, meta.kind, "kind", |a, b| a == b)?.unwrap_or_default();

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text[body_start..].as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse("header", e.to_string()))?
        .clone();
    let columns: Vec<&str> = header.iter().collect();
    if columns.first().copied() != Some("f_hz") {
        return Err(Error::parse("header column 1", "first column must be 'f_hz'"));
    }
    let pair_count = columns.len().saturating_sub(1);
    if pair_count < 2 || pair_count % 2 != 0 || (pair_count / 2) % 2 == 0 {
        return Err(Error::parse(
            "header",
            format!("malformed header: {} sample columns do not form 2·NH+1 re/im pairs", pair_count),
        ));
    }
    let sidebands = pair_count / 2;
    let nh = (sidebands - 1) / 2;
    for (i, k) in (-(nh as i64)..=nh as i64).enumerate() {
        for (offset, part) in ["re", "im"].iter().enumerate() {
            let col = 1 + 2 * i + offset;
            let expected = format!("H{k}_{part}");
            if columns[col] != expected {
                return Err(Error::parse(
                    format!("header column {}", col + 1),
                    format!("expected '{expected}', found '{}' (missing sideband column?)", columns[col]),
                ));
            }
        }
    }

    let mut points = Vec::new();
    let mut responses = vec![Vec::new(); sidebands];
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| Error::parse(format!("row {row}"), e.to_string()))?;
        if record.len() != columns.len() {
            return Err(Error::parse(
                format!("row {row}"),
                format!("expected {} columns, found {}", columns.len(), record.len()),
            ));
        }
        let value = |col: usize| -> Result<f64> {
            let raw = &record[col];
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::parse(format!("row {row}, column {}", columns[col]), format!("not a number: '{raw}'")))?;
            if !v.is_finite() {
                return Err(Error::parse(
                    format!("row {row}, column {}", columns[col]),
                    "non-finite sample",
                ));
            }
            Ok(v)
        };
        let f = value(0)?;
        if f <= 0.0 {
            return Err(Error::parse(format!("row {row}, column f_hz"), "frequency must be positive"));
        }
        if let Some(&prev) = points.last() {
            check_order(prev, f, &format!("row {row}, column f_hz"))?;
        }
        points.push(f);
        for (i, r) in responses.iter_mut().enumerate() {
            r.push(Complex64::new(value(1 + 2 * i)?, value(2 + 2 * i)?));
        }
    }
    if points.is_empty() {
        return Err(Error::parse("body", "no data rows"));
    }
    let grid = FrequencyGrid::new(points, f0_hz, nh.max(1))?;
    if nh == 0 {
        return Err(Error::parse("header", "at least one sideband pair (NH ≥ 1) is required"));
    }
    SidebandResponseSet::new(grid, kind, responses)
}

fn resolve<T: Copy + fmt::Debug>(
    file: Option<T>,
    given: Option<T>,
    name: &str,
    same: impl Fn(T, T) -> bool,
) -> Result<Option<T>> {
    match (file, given) {
        (Some(a), Some(b)) if !same(a, b) => Err(Error::Invalid(format!(
            "{name} in file ({a:?}) conflicts with the supplied value ({b:?})"
        ))),
        (Some(a), _) => Ok(Some(a)),
        (None, b) => Ok(b),
    }
}

pub fn save_responses(set: &SidebandResponseSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_responses(set)).map_err(|e| Error::io(path, e))
}

pub fn render_responses(set: &SidebandResponseSet) -> String {
    use std::fmt::Write;

    let nh = set.nh() as i64;
    let mut out = String::new();
    writeln!(out, "# f0_hz = {:e}", set.grid().f0_hz()).unwrap();
    writeln!(out, "# kind = {}", set.kind()).unwrap();
    out.push_str("f_hz");
    for k in -nh..=nh {
        write!(out, ",H{k}_re,H{k}_im").unwrap();
    }
    out.push('\n');
    for (i, f) in set.grid().points_hz().iter().enumerate() {
        write!(out, "{f:e}").unwrap();
        for k in -nh..=nh {
            let z = set.sideband(k)[i];
            write!(out, ",{:e},{:e}", z.re, z.im).unwrap();
        }
        out.push('\n');
    }
    out
}
