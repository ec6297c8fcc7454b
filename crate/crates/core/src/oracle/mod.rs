//! Ground truth from periodic state-space models given by their Fourier
//! coefficients `G(t) = Σ G_m e^{jmω0t}` (likewise `B`, `C`, `D`).
//!
//! The truncated harmonic operator ([`HarmonicStateSpace`]) gives exact
//! sideband responses and poles; [`floquet_exponents`] integrates one
//! period in the time domain as an independent check.

mod floquet;
mod toeplitz;

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqdata::ResponseKind;
use crate::linalg::CMat;

pub use floquet::{floquet_exponents, monodromy};
pub use toeplitz::{
    analytic_htf_sample, closed_loop_poles_direct, default_truncation, emit_responses, open_loop_poles,
    strip_representatives, HarmonicStateSpace, EDGE_ENERGY_LIMIT,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Single-input single-output periodic linear system
/// `ẋ = G(t)x + B(t)u`, `y = C(t)x + D(t)u`.
///
/// Coefficients are stored for every harmonic `m` in the support, negative
/// ones included; `X_{-m} = conj(X_m)` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct PltvSystem {
    omega0: f64,
    state_dim: usize,
    kind: ResponseKind,
    g: BTreeMap<i64, CMat>,
    b: BTreeMap<i64, Vec<Complex64>>,
    c: BTreeMap<i64, Vec<Complex64>>,
    d: BTreeMap<i64, Complex64>,
}

impl PltvSystem {
    /// Builds a real periodic system from its non-negative harmonics.
    /// Negative harmonics are filled in by conjugation; `m = 0` terms must
    /// be real.
    pub fn new(
        omega0: f64,
        state_dim: usize,
        kind: ResponseKind,
        g: BTreeMap<i64, CMat>,
        b: BTreeMap<i64, Vec<Complex64>>,
        c: BTreeMap<i64, Vec<Complex64>>,
        d: BTreeMap<i64, Complex64>,
    ) -> Result<Self> {
        if !(omega0.is_finite() && omega0 > 0.0) {
            return Err(Error::Invalid(format!("omega0 must be positive, got {omega0}")));
        }
        if state_dim == 0 {
            return Err(Error::Invalid("state_dim must be at least 1".into()));
        }
        let negative = |m: i64, what: &str| -> Result<()> {
            if m < 0 {
                Err(Error::Invalid(format!(
                    "{what} harmonic {m}: give m ≥ 0 only, negative harmonics follow by conjugation"
                )))
            } else {
                Ok(())
            }
        };
        let mut sys = Self {
            omega0,
            state_dim,
            kind,
            g: BTreeMap::new(),
            b: BTreeMap::new(),
            c: BTreeMap::new(),
            d: BTreeMap::new(),
        };
        for (m, mat) in g {
            negative(m, "G")?;
            if mat.nrows() != state_dim || mat.ncols() != state_dim {
                return Err(Error::Invalid(format!("G_{m} is not {state_dim}×{state_dim}")));
            }
            if m == 0 && (0..state_dim).any(|i| (0..state_dim).any(|j| mat[(i, j)].im != 0.0)) {
                return Err(Error::Invalid("G_0 must be real".into()));
            }
            if m > 0 {
                sys.g.insert(-m, CMat::from_fn(state_dim, state_dim, |i, j| mat[(i, j)].conj()));
            }
            sys.g.insert(m, mat);
        }
        for (name, src, dst) in [("B", b, &mut sys.b), ("C", c, &mut sys.c)] {
            for (m, v) in src {
                negative(m, name)?;
                if v.len() != state_dim {
                    return Err(Error::Invalid(format!("{name}_{m} must have {state_dim} entries")));
                }
                if m == 0 && v.iter().any(|z| z.im != 0.0) {
                    return Err(Error::Invalid(format!("{name}_0 must be real")));
                }
                if m > 0 {
                    dst.insert(-m, v.iter().map(|z| z.conj()).collect());
                }
                dst.insert(m, v);
            }
        }
        for (m, v) in d {
            negative(m, "D")?;
            if m == 0 && v.im != 0.0 {
                return Err(Error::Invalid("D_0 must be real".into()));
            }
            if m > 0 {
                sys.d.insert(-m, v.conj());
            }
            sys.d.insert(m, v);
        }
        sys.g.retain(|_, m| (0..m.nrows()).any(|i| (0..m.ncols()).any(|j| m[(i, j)] != ZERO)));
        sys.b.retain(|_, v| v.iter().any(|z| *z != ZERO));
        sys.c.retain(|_, v| v.iter().any(|z| *z != ZERO));
        sys.d.retain(|_, v| *v != ZERO);
        Ok(sys)
    }

    /// Time-invariant system with real matrices.
    pub fn lti(omega0: f64, g0: CMat, b0: Vec<f64>, c0: Vec<f64>, d0: f64, kind: ResponseKind) -> Result<Self> {
        let n = g0.nrows();
        let lift = |v: Vec<f64>| v.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
        Self::new(
            omega0,
            n,
            kind,
            BTreeMap::from([(0, g0)]),
            BTreeMap::from([(0, lift(b0))]),
            BTreeMap::from([(0, lift(c0))]),
            BTreeMap::from([(0, Complex64::new(d0, 0.0))]),
        )
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn f0_hz(&self) -> f64 {
        self.omega0 / TAU
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn kind(&self) -> ResponseKind {
        self.kind
    }

    /// Largest |m| with a nonzero coefficient in any matrix.
    pub fn support(&self) -> usize {
        let g = self.g.keys().chain(self.b.keys()).chain(self.c.keys()).chain(self.d.keys());
        g.map(|m| m.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn g(&self, m: i64) -> Option<&CMat> {
        self.g.get(&m)
    }

    pub fn b(&self, m: i64) -> Option<&[Complex64]> {
        self.b.get(&m).map(Vec::as_slice)
    }

    pub fn c(&self, m: i64) -> Option<&[Complex64]> {
        self.c.get(&m).map(Vec::as_slice)
    }

    pub fn d(&self, m: i64) -> Complex64 {
        self.d.get(&m).copied().unwrap_or(ZERO)
    }

    pub fn is_time_invariant(&self) -> bool {
        self.support() == 0
    }

    /// `G(t)` reconstructed from the coefficients (real by construction).
    pub fn g_at(&self, t: f64) -> Vec<Vec<f64>> {
        let n = self.state_dim;
        let mut out = vec![vec![0.0; n]; n];
        for (&m, mat) in &self.g {
            let phase = Complex64::from_polar(1.0, m as f64 * self.omega0 * t);
            for (i, row) in out.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += (mat[(i, j)] * phase).re;
                }
            }
        }
        out
    }

    fn d_constant(&self) -> Result<f64> {
        if self.d.keys().any(|&m| m != 0) {
            return Err(Error::Invalid(
                "time-varying D(t) is not supported by the closed-loop oracle".into(),
            ));
        }
        Ok(self.d(0).re)
    }

    /// The system with `u = -K·y + v` substituted:
    /// `G_cl(t) = G(t) - B(t)·K(1 + D·K)⁻¹·C(t)`.
    pub fn closed_loop(&self, k: f64) -> Result<Self> {
        if k == 0.0 {
            return Ok(self.clone());
        }
        let d0 = self.d_constant()?;
        let denom = 1.0 + d0 * k;
        if denom.abs() <= 1e-12 {
            return Err(Error::AlgebraicLoop { gain: k });
        }
        let gain = k / denom;
        let n = self.state_dim;
        let mut g = self.g.clone();
        for (&mb, bv) in &self.b {
            for (&mc, cv) in &self.c {
                let entry = g.entry(mb + mc).or_insert_with(|| CMat::zeros(n, n));
                for i in 0..n {
                    for j in 0..n {
                        entry[(i, j)] -= bv[i] * cv[j] * gain;
                    }
                }
            }
        }
        let scale = |v: &Vec<Complex64>| v.iter().map(|z| z / denom).collect::<Vec<_>>();
        let mut sys = Self {
            g,
            b: self.b.iter().map(|(&m, v)| (m, scale(v))).collect(),
            c: self.c.clone(),
            d: self.d.iter().map(|(&m, v)| (m, v / denom)).collect(),
            ..self.clone()
        };
        // conjugate harmonic products sum to a real G_0 up to rounding
        if let Some(g0) = sys.g.get_mut(&0) {
            for i in 0..n {
                for j in 0..n {
                    g0[(i, j)].im = 0.0;
                }
            }
        }
        Ok(sys)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { location, message } => Error::Parse {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SystemFile = toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|s| format!("line {}", text[..s.start].matches('\n').count() + 1))
                .unwrap_or_else(|| "system file".into());
            Error::parse(location, e.message().to_string())
        })?;
        file.into_system()
    }

    /// Sparse text form listing the non-negative harmonics.
    pub fn to_toml(&self) -> String {
        let mut file = SystemFile {
            omega0: Some(self.omega0),
            state_dim: Some(self.state_dim),
            kind: Some(self.kind),
            ..Default::default()
        };
        let entry = |m: i64, row: usize, col: usize, z: Complex64| Entry {
            m,
            row,
            col,
            re: z.re,
            im: z.im,
        };
        for (&m, mat) in self.g.range(0..) {
            for i in 0..self.state_dim {
                for j in 0..self.state_dim {
                    if mat[(i, j)] != ZERO {
                        file.g.push(entry(m, i, j, mat[(i, j)]));
                    }
                }
            }
        }
        for (&m, v) in self.b.range(0..) {
            file.b.extend(v.iter().enumerate().filter(|(_, z)| **z != ZERO).map(|(i, z)| entry(m, i, 0, *z)));
        }
        for (&m, v) in self.c.range(0..) {
            file.c.extend(v.iter().enumerate().filter(|(_, z)| **z != ZERO).map(|(j, z)| entry(m, 0, j, *z)));
        }
        for (&m, z) in self.d.range(0..) {
            file.d.push(entry(m, 0, 0, *z));
        }
        toml::to_string(&file).expect("system serializes")
    }
}

/// Which state of the oscillator is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MathieuOutput {
    Position,
    #[default]
    Velocity,
}

/// Damped Mathieu oscillator
/// `ẍ + 2ζω_n ẋ + ω_n²(1 + ε cos ω0t) x = b·u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MathieuSpec {
    pub omega_n: f64,
    pub zeta: f64,
    pub epsilon: f64,
    pub omega0: f64,
    /// Input gain `b`; defaults to `omega_n`.
    #[serde(default)]
    pub input_gain: Option<f64>,
    #[serde(default)]
    pub output: MathieuOutput,
    #[serde(default = "admittance")]
    pub kind: ResponseKind,
}

fn admittance() -> ResponseKind {
    ResponseKind::Admittance
}

impl Default for MathieuSpec {
    fn default() -> Self {
        Self {
            omega_n: TAU * 500e6,
            zeta: 0.02,
            epsilon: 0.3,
            omega0: TAU * 1e9,
            input_gain: None,
            output: MathieuOutput::Velocity,
            kind: ResponseKind::Admittance,
        }
    }
}

impl MathieuSpec {
    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }
}

pub fn mathieu_system(spec: &MathieuSpec) -> Result<PltvSystem> {
    if spec.zeta < 0.0 {
        return Err(Error::Invalid(format!("zeta must be non-negative, got {}", spec.zeta)));
    }
    let wn = spec.omega_n;
    let re = |x: f64| Complex64::new(x, 0.0);
    let g0 = CMat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => re(1.0),
        (1, 0) => re(-wn * wn),
        (1, 1) => re(-2.0 * spec.zeta * wn),
        _ => ZERO,
    });
    let mut g = BTreeMap::from([(0, g0)]);
    if spec.epsilon != 0.0 {
        g.insert(
            1,
            CMat::from_fn(2, 2, |i, j| if (i, j) == (1, 0) { re(-wn * wn * spec.epsilon / 2.0) } else { ZERO }),
        );
    }
    let gain = spec.input_gain.unwrap_or(wn);
    let c0 = match spec.output {
        MathieuOutput::Position => vec![re(1.0), ZERO],
        MathieuOutput::Velocity => vec![ZERO, re(1.0)],
    };
    PltvSystem::new(
        spec.omega0,
        2,
        spec.kind,
        g,
        BTreeMap::from([(0, vec![ZERO, re(gain)])]),
        BTreeMap::from([(0, c0)]),
        BTreeMap::new(),
    )
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    omega0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<ResponseKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mathieu: Option<MathieuSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    g: Vec<Entry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    b: Vec<Entry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    c: Vec<Entry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    d: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    m: i64,
    row: usize,
    col: usize,
    re: f64,
    #[serde(default)]
    im: f64,
}

impl SystemFile {
    fn into_system(self) -> Result<PltvSystem> {
        if let Some(spec) = self.mathieu {
            let sparse = !(self.g.is_empty() && self.b.is_empty() && self.c.is_empty() && self.d.is_empty());
            if sparse || self.state_dim.is_some() {
                return Err(Error::parse("[mathieu]", "a mathieu stanza cannot be combined with explicit coefficients"));
            }
            let spec = MathieuSpec {
                omega0: self.omega0.unwrap_or(spec.omega0),
                kind: self.kind.unwrap_or(spec.kind),
                ..spec
            };
            return mathieu_system(&spec);
        }
        let omega0 = self.omega0.ok_or_else(|| Error::parse("system file", "missing omega0"))?;
        let n = self.state_dim.ok_or_else(|| Error::parse("system file", "missing state_dim"))?;
        let check = |e: &Entry, name: &str, rows: usize, cols: usize| -> Result<()> {
            if e.row >= rows || e.col >= cols {
                return Err(Error::parse(
                    format!("[[{name}]] m = {}", e.m),
                    format!("index ({}, {}) outside {rows}×{cols}", e.row, e.col),
                ));
            }
            if e.m < 0 {
                return Err(Error::parse(
                    format!("[[{name}]] m = {}", e.m),
                    "negative harmonics are implied by conjugation; list m ≥ 0 only",
                ));
            }
            if !(e.re.is_finite() && e.im.is_finite()) {
                return Err(Error::parse(format!("[[{name}]] m = {}", e.m), "non-finite coefficient"));
            }
            Ok(())
        };
        let mut g: BTreeMap<i64, CMat> = BTreeMap::new();
        for e in &self.g {
            check(e, "g", n, n)?;
            g.entry(e.m).or_insert_with(|| CMat::zeros(n, n))[(e.row, e.col)] += Complex64::new(e.re, e.im);
        }
        let mut b: BTreeMap<i64, Vec<Complex64>> = BTreeMap::new();
        for e in &self.b {
            check(e, "b", n, 1)?;
            b.entry(e.m).or_insert_with(|| vec![ZERO; n])[e.row] += Complex64::new(e.re, e.im);
        }
        let mut c: BTreeMap<i64, Vec<Complex64>> = BTreeMap::new();
        for e in &self.c {
            check(e, "c", 1, n)?;
            c.entry(e.m).or_insert_with(|| vec![ZERO; n])[e.col] += Complex64::new(e.re, e.im);
        }
        let mut d: BTreeMap<i64, Complex64> = BTreeMap::new();
        for e in &self.d {
            check(e, "d", 1, 1)?;
            *d.entry(e.m).or_insert(ZERO) += Complex64::new(e.re, e.im);
        }
        PltvSystem::new(omega0, n, self.kind.unwrap_or_default(), g, b, c, d)
    }
}
