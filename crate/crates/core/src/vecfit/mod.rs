//! Common-pole rational approximation (vector fitting) and state-space
//! realization of the fitted models.
//!
//! A [`RationalModel`] represents a vector of transfer functions
//! `H_e(s) = Σ_i r[i][e] / (s - p_i) + d[e]` sharing the poles `p_i`.

mod relocate;

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat};

pub use relocate::{fit, initial_poles, residue_fit, vf_iterate, IterationOutcome};

/// Relative distance below which an evaluation point is treated as a pole hit.
pub const POLE_HIT_TOL: f64 = 1e-12;

/// Relative distance below which two poles are considered the same.
pub const MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoeffField {
    Real,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    #[default]
    InverseMagnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub order_min: usize,
    pub order_max: usize,
    pub max_iterations: usize,
    pub rms_tolerance: f64,
    pub weighting: Weighting,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            order_min: 2,
            order_max: 40,
            max_iterations: 30,
            rms_tolerance: 1e-4,
            weighting: Weighting::InverseMagnitude,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order_min < 2 {
            return Err(Error::Invalid(format!("order_min must be at least 2, got {}", self.order_min)));
        }
        if self.order_min > self.order_max {
            return Err(Error::Invalid(format!(
                "order_min {} exceeds order_max {}",
                self.order_min, self.order_max
            )));
        }
        if !(self.rms_tolerance > 0.0) {
            return Err(Error::Invalid("rms_tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Invalid("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// How a fitted model came about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub rms: f64,
    pub order: usize,
    pub iterations: usize,
    /// False when no order in the configured range met the tolerance and
    /// the best model found is returned instead.
    pub tolerance_met: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationalModel {
    poles: Vec<Complex64>,
    residues: Vec<Vec<Complex64>>,
    direct: Vec<Complex64>,
    labels: Vec<String>,
    coeff_field: CoeffField,
    pub f0_hz: Option<f64>,
    pub fit_info: Option<FitInfo>,
}

impl RationalModel {
    /// `residues[i][e]` belongs to pole `i` and element `e`.
    pub fn new(
        poles: Vec<Complex64>,
        residues: Vec<Vec<Complex64>>,
        direct: Vec<Complex64>,
        coeff_field: CoeffField,
    ) -> Result<Self> {
        let elements = direct.len();
        if residues.len() != poles.len() {
            return Err(Error::Invalid(format!(
                "{} residue rows for {} poles",
                residues.len(),
                poles.len()
            )));
        }
        if let Some(i) = residues.iter().position(|r| r.len() != elements) {
            return Err(Error::Invalid(format!(
                "pole {i} has {} residues, expected {elements}",
                residues[i].len()
            )));
        }
        if poles.iter().any(|p| !linalg::is_finite(*p)) {
            return Err(Error::Invalid("non-finite pole".into()));
        }
        for i in 0..poles.len() {
            for j in 0..i {
                if (poles[i] - poles[j]).norm() <= MERGE_TOL * poles[i].norm() {
                    return Err(Error::Invalid(format!("pole {} repeated", poles[i])));
                }
            }
        }
        if coeff_field == CoeffField::Real {
            check_conjugate_closure(&poles, &residues, &direct)?;
        }
        let labels = (0..elements).map(|e| format!("H_{e}")).collect();
        Ok(Self {
            poles,
            residues,
            direct,
            labels,
            coeff_field,
            f0_hz: None,
            fit_info: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.element_count() {
            return Err(Error::Invalid(format!(
                "{} labels for {} elements",
                labels.len(),
                self.element_count()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Labels `H_-n … H_n` for a centred set of `2n+1` elements.
    pub fn with_sideband_labels(self) -> Result<Self> {
        let count = self.element_count();
        if count % 2 == 0 {
            return Err(Error::Invalid(format!("{count} elements is not an odd count")));
        }
        let n = (count / 2) as i64;
        self.with_labels((-n..=n).map(|k| format!("H_{k}")).collect())
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn residues(&self) -> &[Vec<Complex64>] {
        &self.residues
    }

    pub fn residue(&self, pole: usize, element: usize) -> Complex64 {
        self.residues[pole][element]
    }

    pub fn direct(&self) -> &[Complex64] {
        &self.direct
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn coeff_field(&self) -> CoeffField {
        self.coeff_field
    }

    pub fn order(&self) -> usize {
        self.poles.len()
    }

    pub fn element_count(&self) -> usize {
        self.direct.len()
    }

    /// Element `e` as a single-element model.
    pub fn element(&self, e: usize) -> RationalModel {
        RationalModel {
            poles: self.poles.clone(),
            residues: self.residues.iter().map(|r| vec![r[e]]).collect(),
            direct: vec![self.direct[e]],
            labels: vec![self.labels[e].clone()],
            coeff_field: self.coeff_field,
            f0_hz: self.f0_hz,
            fit_info: self.fit_info.clone(),
        }
    }

    /// Samples at `s = jω` for every element: `out[e][i]`.
    pub fn evaluate(&self, omegas: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        let s: Vec<Complex64> = omegas.iter().map(|&w| Complex64::new(0.0, w)).collect();
        self.evaluate_at(&s)
    }

    /// Samples at arbitrary complex frequencies: `out[e][i]`.
    pub fn evaluate_at(&self, s: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
        let groups = self.term_groups();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); s.len()]; self.element_count()];
        for (i, &si) in s.iter().enumerate() {
            for (e, d) in self.direct.iter().enumerate() {
                out[e][i] = *d;
            }
            for &(a, b) in &groups {
                let inv_a = pole_term(si, self.poles[a])?;
                let inv_b = b.map(|b| pole_term(si, self.poles[b])).transpose()?;
                for e in 0..self.direct.len() {
                    let mut t = self.residues[a][e] * inv_a;
                    if let (Some(b), Some(inv_b)) = (b, inv_b) {
                        t += self.residues[b][e] * inv_b;
                    }
                    out[e][i] += t;
                }
            }
        }
        Ok(out)
    }

    /// Summation order: conjugate partners are added together first, which
    /// makes `H(-jω) = conj H(jω)` hold bit for bit in real models.
    fn term_groups(&self) -> Vec<(usize, Option<usize>)> {
        let n = self.poles.len();
        if self.coeff_field == CoeffField::Complex {
            return (0..n).map(|i| (i, None)).collect();
        }
        let mut used = vec![false; n];
        let mut groups = Vec::with_capacity(n);
        for i in 0..n {
            if used[i] {
                continue;
            }
            used[i] = true;
            let p = self.poles[i];
            let partner = (p.im != 0.0)
                .then(|| (i + 1..n).find(|&j| !used[j] && self.poles[j] == p.conj()))
                .flatten();
            if let Some(j) = partner {
                used[j] = true;
            }
            groups.push((i, partner));
        }
        groups
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&ModelFile::from(self)).map_err(|e| Error::Invalid(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { location, message } => Error::Parse {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::parse(format!("line {}", e.line()), e.to_string()))?;
        file.try_into()
    }
}

pub(crate) fn pole_term(s: Complex64, p: Complex64) -> Result<Complex64> {
    let gap = s - p;
    if gap.norm() <= POLE_HIT_TOL * p.norm() || gap.norm() == 0.0 {
        return Err(Error::PoleHit { omega: s.im, pole: p });
    }
    Ok(gap.inv())
}

fn check_conjugate_closure(poles: &[Complex64], residues: &[Vec<Complex64>], direct: &[Complex64]) -> Result<()> {
    if direct.iter().any(|d| d.im != 0.0) {
        return Err(Error::Invalid("real-coefficient model with complex direct term".into()));
    }
    for (i, p) in poles.iter().enumerate() {
        if p.im == 0.0 {
            if residues[i].iter().any(|r| r.im != 0.0) {
                return Err(Error::Invalid(format!("real pole {} with complex residue", p.re)));
            }
            continue;
        }
        let partner = poles
            .iter()
            .position(|q| *q == p.conj())
            .ok_or_else(|| Error::Invalid(format!("pole {p} has no conjugate partner")))?;
        if residues[i].iter().zip(&residues[partner]).any(|(a, b)| *a != b.conj()) {
            return Err(Error::Invalid(format!("residues of pole {p} are not conjugate to its partner")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f0_hz: Option<f64>,
    coeff_field: CoeffField,
    poles: Vec<Complex64>,
    residues: Vec<Vec<Complex64>>,
    direct: Vec<Complex64>,
    labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fit: Option<FitInfo>,
}

impl From<&RationalModel> for ModelFile {
    fn from(m: &RationalModel) -> Self {
        Self {
            f0_hz: m.f0_hz,
            coeff_field: m.coeff_field,
            poles: m.poles.clone(),
            residues: m.residues.clone(),
            direct: m.direct.clone(),
            labels: m.labels.clone(),
            fit: m.fit_info.clone(),
        }
    }
}

impl TryFrom<ModelFile> for RationalModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let mut model = RationalModel::new(f.poles, f.residues, f.direct, f.coeff_field)?.with_labels(f.labels)?;
        model.f0_hz = f.f0_hz;
        model.fit_info = f.fit;
        Ok(model)
    }
}

/// Inverts the Hermitian transform on a fitted model whose elements are
/// ordered `H̃_{-n} … H̃_n`. Produces complex-coefficient elements
/// `H_{-n} … H_n` on the same pole set.
pub fn recombine(h_tilde: &RationalModel) -> Result<RationalModel> {
    let count = h_tilde.element_count();
    if count % 2 == 0 {
        return Err(Error::Invalid(format!("expected an odd element count, got {count}")));
    }
    let n = count / 2;
    let mix = |v: &[Complex64]| -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); count];
        out[n] = v[n];
        for k in 1..=n {
            let sym = v[n + k];
            let anti = v[n - k];
            out[n + k] = sym - times_j(anti);
            out[n - k] = sym + times_j(anti);
        }
        out
    };
    let residues = h_tilde.residues.iter().map(|r| mix(r)).collect();
    let direct = mix(&h_tilde.direct);
    let mut model = RationalModel::new(h_tilde.poles.clone(), residues, direct, CoeffField::Complex)?
        .with_sideband_labels()?;
    model.f0_hz = h_tilde.f0_hz;
    model.fit_info = h_tilde.fit_info.clone();
    Ok(model)
}

#[inline]
fn times_j(z: Complex64) -> Complex64 {
    Complex64::new(-z.im, z.re)
}

/// `ẋ = A x + B u`, `y = C x + D u` with a single input and one output row
/// per model element.
#[derive(Debug, Clone)]
pub struct StateSpaceRealization {
    pub a: CMat,
    pub b: CMat,
    pub c: CMat,
    pub d: Vec<Complex64>,
}

impl StateSpaceRealization {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Samples of every output at `s = jω`: `out[e][i]`.
    pub fn evaluate(&self, omegas: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        let n = self.order();
        let outputs = self.c.nrows();
        let mut out = vec![Vec::with_capacity(omegas.len()); outputs];
        for &w in omegas {
            let s = Complex64::new(0.0, w);
            let resolvent = CMat::from_fn(n, n, |i, j| {
                let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
                diag - self.a[(i, j)]
            });
            let x = linalg::solve(&resolvent, &self.b).ok_or(Error::Singular { omega: w })?;
            let y = &self.c * &x;
            for (e, o) in out.iter_mut().enumerate() {
                o.push(y[(e, 0)] + self.d[e]);
            }
        }
        Ok(out)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        linalg::eigvals(&self.a)
    }
}

/// Canonical diagonal realization: `A = diag(p)`, `B = 1`, `C[e][i] = r[i][e]`.
pub fn realize(model: &RationalModel) -> StateSpaceRealization {
    let n = model.order();
    let zero = Complex64::new(0.0, 0.0);
    StateSpaceRealization {
        a: CMat::from_fn(n, n, |i, j| if i == j { model.poles[i] } else { zero }),
        b: CMat::from_fn(n, 1, |_, _| Complex64::new(1.0, 0.0)),
        c: CMat::from_fn(model.element_count(), n, |e, i| model.residues[i][e]),
        d: model.direct.clone(),
    }
}

/// Real block realization of a real-coefficient model. Each conjugate pair
/// `p = σ + jω`, `r = a + jb` becomes `A = [[σ, ω], [-ω, σ]]`, `B = [2, 0]ᵀ`,
/// `C = [a, b]`; real poles stay scalar.
pub fn realize_real(model: &RationalModel) -> Result<StateSpaceRealization> {
    if model.coeff_field != CoeffField::Real {
        return Err(Error::Invalid("real block form needs a real-coefficient model".into()));
    }
    let n = model.order();
    let mut a = RMat::zeros(n, n);
    let mut b = RMat::zeros(n, 1);
    let mut c = RMat::zeros(model.element_count(), n);
    let mut col = 0;
    let (reals, pairs) = crate::poles::upper_half(&model.poles);
    let index_of = |p: Complex64| model.poles.iter().position(|q| *q == p).unwrap();
    for p in pairs {
        let i = index_of(p);
        a[(col, col)] = p.re;
        a[(col, col + 1)] = p.im;
        a[(col + 1, col)] = -p.im;
        a[(col + 1, col + 1)] = p.re;
        b[(col, 0)] = 2.0;
        for e in 0..model.element_count() {
            c[(e, col)] = model.residues[i][e].re;
            c[(e, col + 1)] = model.residues[i][e].im;
        }
        col += 2;
    }
    for re in reals {
        let i = index_of(Complex64::new(re, 0.0));
        a[(col, col)] = re;
        b[(col, 0)] = 1.0;
        for e in 0..model.element_count() {
            c[(e, col)] = model.residues[i][e].re;
        }
        col += 1;
    }
    let lift = |m: &RMat| CMat::from_fn(m.nrows(), m.ncols(), |i, j| Complex64::new(m[(i, j)], 0.0));
    Ok(StateSpaceRealization {
        a: lift(&a),
        b: lift(&b),
        c: lift(&c),
        d: model.direct.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pair_model() -> RationalModel {
        let p = c(-1.0, 5.0);
        let r = c(0.5, -2.0);
        RationalModel::new(vec![p, p.conj()], vec![vec![r], vec![r.conj()]], vec![c(0.25, 0.0)], CoeffField::Real)
            .unwrap()
    }

    #[test]
    fn single_pole_evaluates_partial_fraction() {
        let p = c(-2.0, 3.0);
        let r = c(1.5, 0.5);
        let m = RationalModel::new(vec![p], vec![vec![r]], vec![c(0.0, 0.0)], CoeffField::Complex).unwrap();
        let w = [0.0, 1.0, 7.0];
        let got = m.evaluate(&w).unwrap();
        for (i, &wi) in w.iter().enumerate() {
            let want = r / (c(0.0, wi) - p);
            assert!((got[0][i] - want).norm() <= 4.0 * f64::EPSILON * want.norm());
        }
        let ss = realize(&m).evaluate(&w).unwrap();
        for i in 0..w.len() {
            assert!((ss[0][i] - got[0][i]).norm() <= 1e-14 * got[0][i].norm());
        }
    }

    #[test]
    fn direct_only_model_is_constant() {
        let m = RationalModel::new(vec![], vec![], vec![c(5.0, 0.0)], CoeffField::Real).unwrap();
        let got = m.evaluate(&[1.0, 1e9]).unwrap();
        assert!(got[0].iter().all(|&v| v == c(5.0, 0.0)));
        assert_eq!(realize(&m).evaluate(&[3.0]).unwrap()[0][0], c(5.0, 0.0));
    }

    #[test]
    fn real_block_and_diagonal_forms_agree() {
        let m = pair_model();
        let w: Vec<f64> = (0..40).map(|i| -10.0 + 0.5 * i as f64).collect();
        let diag = realize(&m).evaluate(&w).unwrap();
        let block = realize_real(&m).unwrap().evaluate(&w).unwrap();
        for i in 0..w.len() {
            assert!((diag[0][i] - block[0][i]).norm() <= 1e-12 * diag[0][i].norm());
        }
    }

    #[test]
    fn conjugate_closure_of_real_models() {
        let m = pair_model();
        let pos = m.evaluate(&[2.5]).unwrap()[0][0];
        let neg = m.evaluate(&[-2.5]).unwrap()[0][0];
        assert!((pos - neg.conj()).norm() <= 1e-15 * pos.norm());
    }

    #[test]
    fn pole_hit_is_reported() {
        let m = RationalModel::new(vec![c(0.0, 2.0)], vec![vec![c(1.0, 0.0)]], vec![c(0.0, 0.0)], CoeffField::Complex)
            .unwrap();
        match m.evaluate(&[2.0]) {
            Err(Error::PoleHit { pole, .. }) => assert_eq!(pole, c(0.0, 2.0)),
            other => panic!("expected pole hit, got {other:?}"),
        }
    }

    #[test]
    fn rejects_broken_models() {
        let p = c(-1.0, 1.0);
        assert!(RationalModel::new(vec![p], vec![vec![c(1.0, 0.0)]], vec![c(0.0, 0.0)], CoeffField::Real).is_err());
        assert!(RationalModel::new(vec![p, p], vec![vec![c(1.0, 0.0)]; 2], vec![c(0.0, 0.0)], CoeffField::Complex)
            .is_err());
        assert!(RationalModel::new(vec![p], vec![], vec![c(0.0, 0.0)], CoeffField::Complex).is_err());
    }

    #[test]
    fn recombine_mixes_elements() {
        let p = c(-1.0, 0.0);
        let sym = c(2.0, 0.0);
        let anti = c(0.0, 1.0);
        // elements ordered H̃_-1, H̃_0, H̃_1
        let m = RationalModel::new(
            vec![p],
            vec![vec![anti, c(3.0, 0.0), sym]],
            vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
            CoeffField::Complex,
        )
        .unwrap();
        let h = recombine(&m).unwrap();
        assert_eq!(h.residue(0, 2), sym - c(0.0, 1.0) * anti);
        assert_eq!(h.residue(0, 0), sym + c(0.0, 1.0) * anti);
        assert_eq!(h.residue(0, 1), c(3.0, 0.0));
        assert_eq!(h.labels(), ["H_-1", "H_0", "H_1"]);
        assert_eq!(h.coeff_field(), CoeffField::Complex);

        let single = m.element(1);
        let same = recombine(&single).unwrap();
        assert_eq!(same.residue(0, 0), c(3.0, 0.0));
        assert!(recombine(&m.element(0).with_labels(vec!["x".into()]).unwrap()).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let mut m = pair_model().with_labels(vec!["H_0".into()]).unwrap();
        m.f0_hz = Some(1e9);
        m.fit_info = Some(FitInfo {
            rms: 1.234e-7,
            order: 2,
            iterations: 4,
            tolerance_met: true,
        });
        let back = RationalModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }
}
