//! Truncation-order selection, central-column identification and assembly
//! of the truncated harmonic transfer function matrix.
//!
//! Entry `(r, c)` of the HTF, with `r, c ∈ [-n, n]`, is the central-column
//! element `H_{r-c}` evaluated at `s + j·c·ω0`.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqdata::{to_hermitian, ResponseKind, SidebandResponseSet};
use crate::linalg::CMat;
use crate::vecfit::{self, pole_term, CoeffField, FitConfig, RationalModel};

pub const DEFAULT_STATE_CAP: usize = 20_000;

/// Outcome of the sideband-magnitude test for one `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidebandVerdict {
    pub k: usize,
    pub passes: bool,
    /// Largest `|H_k| / |H_0|` over the checked points.
    pub max_ratio_pos: f64,
    /// Largest `|H_-k| / |H_0|` over the checked points.
    pub max_ratio_neg: f64,
    /// Checked band in Hz: `[0, k·f0]` intersected with the grid.
    pub band_hz: (f64, f64),
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub nh: usize,
    pub margin: f64,
    pub k_max: usize,
    pub chosen_n: usize,
    pub verdicts: Vec<SidebandVerdict>,
}

impl TruncationReport {
    pub fn dimension(&self) -> usize {
        2 * self.chosen_n + 1
    }
}

/// Smallest `n` such that `|H_±k| < margin·|H_0|` at every grid point in
/// `[0, k·f0]` for all `k_max ≥ k > n`, with `k_max = ⌊NH/2⌋`.
pub fn truncation_order(data: &SidebandResponseSet, margin: f64) -> Result<TruncationReport> {
    truncation_order_with(data, margin, None)
}

/// As [`truncation_order`] with an explicit upper bound for `k`.
pub fn truncation_order_with(data: &SidebandResponseSet, margin: f64, k_max: Option<usize>) -> Result<TruncationReport> {
    if !(margin >= 1.0 && margin.is_finite()) {
        return Err(Error::Invalid(format!("truncation margin must be ≥ 1, got {margin}")));
    }
    let nh = data.nh();
    let k_max = k_max.unwrap_or(nh / 2);
    if k_max > nh {
        return Err(Error::Invalid(format!("k_max = {k_max} exceeds NH = {nh}")));
    }
    let grid = data.grid();
    let f0 = grid.f0_hz();
    if grid.min_hz() > f0 {
        return Err(Error::Invalid(format!(
            "grid starts at {} Hz, above f0 = {f0} Hz; the band is too narrow to evaluate the truncation criterion",
            grid.min_hz()
        )));
    }
    let h0 = data.sideband(0);
    let mut verdicts = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let limit = k as f64 * f0;
        let idx: Vec<usize> = (0..grid.len()).filter(|&i| grid.points_hz()[i] <= limit).collect();
        let pos = data.sideband(k as i64);
        let neg = data.sideband(-(k as i64));
        let mut passes = true;
        let mut max_pos = 0.0f64;
        let mut max_neg = 0.0f64;
        for &i in &idx {
            let base = h0[i].norm();
            for (z, worst) in [(pos[i], &mut max_pos), (neg[i], &mut max_neg)] {
                let mag = z.norm();
                if mag == 0.0 {
                    continue;
                }
                *worst = worst.max(mag / base);
                if !(mag < margin * base) {
                    passes = false;
                }
            }
        }
        let lo = grid.points_hz()[idx[0]];
        let hi = grid.points_hz()[*idx.last().unwrap()];
        verdicts.push(SidebandVerdict {
            k,
            passes,
            max_ratio_pos: max_pos,
            max_ratio_neg: max_neg,
            band_hz: (lo, hi),
            points: idx.len(),
        });
    }
    let chosen_n = verdicts.iter().filter(|v| !v.passes).map(|v| v.k).max().unwrap_or(0);
    Ok(TruncationReport {
        nh,
        margin,
        k_max,
        chosen_n,
        verdicts,
    })
}

/// Identified central column `H_{-n}(s) … H_n(s)` on one pole set.
#[derive(Debug, Clone)]
pub struct CentralColumn {
    n: usize,
    f0_hz: f64,
    kind: ResponseKind,
    model: RationalModel,
}

impl CentralColumn {
    pub fn new(model: RationalModel, f0_hz: f64, kind: ResponseKind) -> Result<Self> {
        let count = model.element_count();
        if count % 2 == 0 {
            return Err(Error::Invalid(format!("central column needs 2n+1 elements, got {count}")));
        }
        if !(f0_hz > 0.0 && f0_hz.is_finite()) {
            return Err(Error::Invalid(format!("f0 must be positive, got {f0_hz}")));
        }
        Ok(Self {
            n: count / 2,
            f0_hz,
            kind,
            model,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f0_hz(&self) -> f64 {
        self.f0_hz
    }

    pub fn omega0(&self) -> f64 {
        TAU * self.f0_hz
    }

    pub fn kind(&self) -> ResponseKind {
        self.kind
    }

    pub fn model(&self) -> &RationalModel {
        &self.model
    }

    pub fn poles(&self) -> &[Complex64] {
        self.model.poles()
    }

    /// Whether the fit met its RMS tolerance.
    pub fn tolerance_met(&self) -> bool {
        self.model.fit_info.as_ref().map_or(true, |f| f.tolerance_met)
    }

    /// Matrix index of sideband `k`.
    fn index(&self, k: i64) -> usize {
        (k + self.n as i64) as usize
    }

    /// `H_k(s)` at each `s`.
    pub fn evaluate_element(&self, k: i64, s: &[Complex64]) -> Result<Vec<Complex64>> {
        if k.unsigned_abs() as usize > self.n {
            return Ok(vec![Complex64::new(0.0, 0.0); s.len()]);
        }
        let e = self.index(k);
        let mut out = Vec::with_capacity(s.len());
        for &si in s {
            let mut acc = self.model.direct()[e];
            for (p, r) in self.model.poles().iter().zip(self.model.residues()) {
                acc += r[e] * pole_term(si, *p)?;
            }
            out.push(acc);
        }
        Ok(out)
    }
}

/// Restricts to `|k| ≤ n`, symmetrizes, fits and inverts the symmetrization.
pub fn build_central_column(data: &SidebandResponseSet, n: usize, cfg: &FitConfig) -> Result<CentralColumn> {
    if n > data.nh() {
        return Err(Error::Invalid(format!("order n = {n} exceeds NH = {}", data.nh())));
    }
    let restricted = data.restrict(n)?;
    let hermitian = to_hermitian(&restricted, n)?;
    let fitted = vecfit::fit(&hermitian, cfg)?;
    let model = vecfit::recombine(&fitted)?;
    CentralColumn::new(model, data.grid().f0_hz(), data.kind())
}

/// Block state-space form of the HTF: one diagonal block per input
/// harmonic `c`, holding the poles `p_i - j·c·ω0`.
#[derive(Debug, Clone)]
pub struct HtfRealization {
    /// Diagonal of `A`.
    pub a: Vec<Complex64>,
    pub b: CMat,
    pub c: CMat,
    pub d: CMat,
}

impl HtfRealization {
    pub fn order(&self) -> usize {
        self.a.len()
    }

    pub fn a_matrix(&self) -> CMat {
        let n = self.order();
        CMat::from_fn(n, n, |i, j| if i == j { self.a[i] } else { Complex64::new(0.0, 0.0) })
    }
}

#[derive(Debug, Clone)]
pub struct HarmonicTransferFunction {
    column: CentralColumn,
    realization: HtfRealization,
}

impl HarmonicTransferFunction {
    pub fn column(&self) -> &CentralColumn {
        &self.column
    }

    pub fn realization(&self) -> &HtfRealization {
        &self.realization
    }

    /// Matrix dimension `2n+1`.
    pub fn dimension(&self) -> usize {
        2 * self.column.n() + 1
    }

    pub fn kind(&self) -> ResponseKind {
        self.column.kind()
    }

    pub fn omega0(&self) -> f64 {
        self.column.omega0()
    }

    /// Entry `(r, c)` at `s`, with `r, c ∈ [-n, n]`, from the column model.
    pub fn entry(&self, r: i64, c: i64, s: Complex64) -> Result<Complex64> {
        let shifted = s + Complex64::new(0.0, c as f64 * self.omega0());
        Ok(self.column.evaluate_element(r - c, &[shifted])?[0])
    }

    /// Full matrix at `s` through the block realization.
    pub fn evaluate_realization(&self, s: Complex64) -> Result<CMat> {
        let re = &self.realization;
        let dim = self.dimension();
        let inv: Vec<Complex64> = re.a.iter().map(|&p| pole_term(s, p)).collect::<Result<_>>()?;
        Ok(CMat::from_fn(dim, dim, |r, c| {
            let mut acc = re.d[(r, c)];
            for (i, v) in inv.iter().enumerate() {
                if re.b[(i, c)] != Complex64::new(0.0, 0.0) {
                    acc += re.c[(r, i)] * v * re.b[(i, c)];
                }
            }
            acc
        }))
    }
}

/// Builds the truncated HTF realization from an identified column.
pub fn assemble_htf(column: CentralColumn) -> Result<HarmonicTransferFunction> {
    assemble_htf_capped(column, DEFAULT_STATE_CAP)
}

pub fn assemble_htf_capped(column: CentralColumn, cap: usize) -> Result<HarmonicTransferFunction> {
    let n = column.n() as i64;
    let dim = column.n() * 2 + 1;
    let p = column.model().order();
    let order = dim * p;
    if order > cap {
        return Err(Error::RealizationTooLarge { order, cap });
    }
    let w0 = column.omega0();
    let zero = Complex64::new(0.0, 0.0);
    let model = column.model();
    let mut a = Vec::with_capacity(order);
    let mut b = CMat::zeros(order, dim);
    let mut c = CMat::zeros(dim, order);
    let mut d = CMat::zeros(dim, dim);
    for (ci, col) in (-n..=n).enumerate() {
        let shift = Complex64::new(0.0, col as f64 * w0);
        for (i, &pole) in model.poles().iter().enumerate() {
            let state = ci * p + i;
            a.push(pole - shift);
            b[(state, ci)] = Complex64::new(1.0, 0.0);
            for (ri, row) in (-n..=n).enumerate() {
                let k = row - col;
                if k.abs() <= n {
                    c[(ri, state)] = model.residue(i, (k + n) as usize);
                }
            }
        }
        for (ri, row) in (-n..=n).enumerate() {
            let k = row - col;
            d[(ri, ci)] = if k.abs() <= n { model.direct()[(k + n) as usize] } else { zero };
        }
    }
    Ok(HarmonicTransferFunction {
        column,
        realization: HtfRealization { a, b, c, d },
    })
}

/// The HTF matrix at `s = jω` for every `ω`, from the column model.
pub fn sample_htf(htf: &HarmonicTransferFunction, omegas: &[f64]) -> Result<Vec<CMat>> {
    let n = htf.column().n() as i64;
    let dim = htf.dimension();
    omegas
        .iter()
        .map(|&w| {
            let s = Complex64::new(0.0, w);
            let mut m = CMat::zeros(dim, dim);
            for (ri, r) in (-n..=n).enumerate() {
                for (ci, c) in (-n..=n).enumerate() {
                    m[(ri, ci)] = htf.entry(r, c, s)?;
                }
            }
            Ok(m)
        })
        .collect()
}

/// Small index file pointing at the column model and recording how it
/// was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HtfManifest {
    pub n: usize,
    pub f0_hz: f64,
    pub nh: usize,
    pub kind: ResponseKind,
    /// Column model path, relative to the manifest's directory.
    pub model: PathBuf,
    pub truncation: TruncationReport,
}

impl HtfManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::parse(format!("{}: line {}", path.display(), e.line()), e.to_string()))
    }

    /// Loads the referenced column model, resolving its path against the
    /// manifest location.
    pub fn load_column(&self, manifest_path: impl AsRef<Path>) -> Result<CentralColumn> {
        let base = manifest_path.as_ref().parent().unwrap_or(Path::new("."));
        let model = RationalModel::load(base.join(&self.model))?;
        if model.coeff_field() != CoeffField::Complex && model.element_count() != 1 {
            return Err(Error::Invalid("column model must hold recombined sideband elements".into()));
        }
        if model.element_count() != 2 * self.n + 1 {
            return Err(Error::Invalid(format!(
                "manifest says n = {} but the model has {} elements",
                self.n,
                model.element_count()
            )));
        }
        CentralColumn::new(model, self.f0_hz, self.kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freqdata::FrequencyGrid;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn column(n: usize, f0_hz: f64) -> CentralColumn {
        let dim = 2 * n + 1;
        let p = c(-1e7, 2e8);
        let residues: Vec<Complex64> = (0..dim).map(|e| c(1e7 * (e as f64 + 1.0), -3e6 * e as f64)).collect();
        let direct: Vec<Complex64> = (0..dim).map(|e| c(0.01 * e as f64, 0.0)).collect();
        let model = RationalModel::new(vec![p], vec![residues], direct, CoeffField::Complex)
            .unwrap()
            .with_sideband_labels()
            .unwrap();
        CentralColumn::new(model, f0_hz, ResponseKind::Impedance).unwrap()
    }

    #[test]
    fn shift_rule_at_zero() {
        let col = column(1, 1e9);
        let htf = assemble_htf(col.clone()).unwrap();
        let w0 = col.omega0();
        let m = htf.evaluate_realization(c(0.0, 0.0)).unwrap();
        for (ri, r) in (-1i64..=1).enumerate() {
            for (ci, cc) in (-1i64..=1).enumerate() {
                let expected = col.evaluate_element(r - cc, &[c(0.0, cc as f64 * w0)]).unwrap()[0];
                assert!((m[(ri, ci)] - expected).norm() <= 1e-12 * expected.norm().max(1e-300), "({r},{cc})");
            }
        }
        assert_eq!(m[(2, 0)], c(0.0, 0.0));
        assert_eq!(htf.realization().order(), 3);
    }

    #[test]
    fn realization_matches_column_entries() {
        let col = column(2, 1e9);
        let htf = assemble_htf(col).unwrap();
        let omegas: Vec<f64> = (0..7).map(|i| 1e8 + 5e8 * i as f64).collect();
        let direct = sample_htf(&htf, &omegas).unwrap();
        for (i, &w) in omegas.iter().enumerate() {
            let via = htf.evaluate_realization(c(0.0, w)).unwrap();
            for r in 0..5 {
                for cc in 0..5 {
                    let a = direct[i][(r, cc)];
                    let b = via[(r, cc)];
                    assert!((a - b).norm() <= 1e-10 * a.norm().max(b.norm()), "({r},{cc}) at {w}");
                }
            }
        }
    }

    #[test]
    fn state_cap_is_enforced() {
        let col = column(2, 1e9);
        assert!(matches!(
            assemble_htf_capped(col, 4),
            Err(Error::RealizationTooLarge { order: 5, cap: 4 })
        ));
    }

    fn set(nh: usize, f: impl Fn(i64, usize) -> Complex64) -> SidebandResponseSet {
        let grid = FrequencyGrid::linear(1e8, 6e8, 6, 1e9, nh).unwrap();
        let responses = (-(nh as i64)..=nh as i64).map(|k| (0..6).map(|i| f(k, i)).collect()).collect();
        SidebandResponseSet::new(grid, ResponseKind::Impedance, responses).unwrap()
    }

    #[test]
    fn lti_data_truncates_to_one() {
        let data = set(8, |k, _| if k == 0 { c(1.0, 1.0) } else { c(0.0, 0.0) });
        let rep = truncation_order(&data, 1.0).unwrap();
        assert_eq!(rep.chosen_n, 0);
        assert_eq!(rep.k_max, 4);
        assert!(rep.verdicts.iter().all(|v| v.passes));
    }

    #[test]
    fn failing_sideband_sets_order_above_it() {
        // k = 3 fails, k = 1, 2, 4 pass
        let data = set(8, |k, i| match k {
            0 => c(1.0, 0.0),
            3 if i == 2 => c(1.5, 0.0),
            _ => c(0.5, 0.0),
        });
        let rep = truncation_order(&data, 1.0).unwrap();
        assert_eq!(rep.chosen_n, 3);
        assert!(!rep.verdicts[2].passes);
        assert!((rep.verdicts[2].max_ratio_pos - 1.5).abs() < 1e-15);
        let relaxed = truncation_order(&data, 2.0).unwrap();
        assert_eq!(relaxed.chosen_n, 0);
        let capped = truncation_order_with(&data, 1.0, Some(2)).unwrap();
        assert_eq!(capped.chosen_n, 0);
    }

    #[test]
    fn equality_fails_the_strict_test() {
        let data = set(2, |_, _| c(1.0, 0.0));
        assert_eq!(truncation_order(&data, 1.0).unwrap().chosen_n, 1);
        assert!(truncation_order(&data, 0.5).is_err());
    }

    #[test]
    fn band_above_f0_is_rejected() {
        let grid = FrequencyGrid::linear(2e9, 3e9, 4, 1e9, 2).unwrap();
        let responses = vec![vec![c(1.0, 0.0); 4]; 5];
        let data = SidebandResponseSet::new(grid, ResponseKind::Impedance, responses).unwrap();
        assert!(truncation_order(&data, 1.0).is_err());
    }
}
