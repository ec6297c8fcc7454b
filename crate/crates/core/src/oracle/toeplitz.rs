use std::f64::consts::TAU;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use super::PltvSystem;
use crate::error::{Error, Result};
use crate::freqdata::{FrequencyGrid, ResponseKind, SidebandResponseSet};
use crate::linalg::{self, CMat};
use crate::poles::{to_strip, wrap_distance, StripPole};

/// Eigenvectors with more than this fraction of their energy in the two
/// outermost harmonic blocks are truncation artifacts.
pub const EDGE_ENERGY_LIMIT: f64 = 0.1;

/// Class tolerance for shifted Floquet copies in [`strip_representatives`].
pub const COPY_TOL: f64 = 1e-3;

/// Operator truncation that keeps the central column edge-clean for `nh`
/// emitted sidebands.
pub fn default_truncation(nh: usize) -> usize {
    2 * nh + 2
}

/// Truncated harmonic state space: harmonics `m ∈ [-M, M]`, block `(r, c)`
/// of each Toeplitz matrix holding the coefficient of harmonic `r - c`.
#[derive(Debug, Clone)]
pub struct HarmonicStateSpace {
    truncation: usize,
    state_dim: usize,
    omega0: f64,
    kind: ResponseKind,
    ghat: CMat,
    bhat: CMat,
    chat: CMat,
    dhat: CMat,
}

impl HarmonicStateSpace {
    pub fn assemble(sys: &PltvSystem, truncation: usize) -> Result<Self> {
        let support = sys.support();
        if truncation < support {
            return Err(Error::TruncationTooSmall { truncation, support });
        }
        let n = sys.state_dim();
        let blocks = 2 * truncation + 1;
        let zero = Complex64::new(0.0, 0.0);
        let harmonic = |r: usize, c: usize| r as i64 - c as i64;
        let ghat = CMat::from_fn(blocks * n, blocks * n, |i, j| {
            sys.g(harmonic(i / n, j / n)).map_or(zero, |g| g[(i % n, j % n)])
        });
        let bhat = CMat::from_fn(blocks * n, blocks, |i, j| {
            sys.b(harmonic(i / n, j)).map_or(zero, |b| b[i % n])
        });
        let chat = CMat::from_fn(blocks, blocks * n, |i, j| {
            sys.c(harmonic(i, j / n)).map_or(zero, |c| c[j % n])
        });
        let dhat = CMat::from_fn(blocks, blocks, |i, j| sys.d(harmonic(i, j)));
        Ok(Self {
            truncation,
            state_dim: n,
            omega0: sys.omega0(),
            kind: sys.kind(),
            ghat,
            bhat,
            chat,
            dhat,
        })
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn kind(&self) -> ResponseKind {
        self.kind
    }

    /// Total dimension `(2M+1)·state_dim`.
    pub fn dim(&self) -> usize {
        self.ghat.nrows()
    }

    pub fn ghat(&self) -> &CMat {
        &self.ghat
    }

    pub fn bhat(&self) -> &CMat {
        &self.bhat
    }

    pub fn chat(&self) -> &CMat {
        &self.chat
    }

    pub fn dhat(&self) -> &CMat {
        &self.dhat
    }

    /// Harmonic index of state row `i`.
    pub fn harmonic_of(&self, i: usize) -> i64 {
        (i / self.state_dim) as i64 - self.truncation as i64
    }

    /// `Ĝ - N` with `N = blkdiag(j·m·ω0·I)`.
    pub fn system_matrix(&self) -> CMat {
        let mut a = self.ghat.clone();
        for i in 0..a.nrows() {
            a[(i, i)] -= Complex64::new(0.0, self.harmonic_of(i) as f64 * self.omega0);
        }
        a
    }

    /// Output harmonics `Y_m`, `m ∈ [-M, M]`, for a unit input tone on
    /// harmonic `input`: column `input` of `Ĉ(sI - (Ĝ - N))⁻¹B̂ + D̂`.
    pub fn transfer_column(&self, s: Complex64, input: i64) -> Result<Vec<Complex64>> {
        let a = self.system_matrix();
        self.transfer_column_with(&a, s, input)
    }

    fn transfer_column_with(&self, a: &CMat, s: Complex64, input: i64) -> Result<Vec<Complex64>> {
        let m = self.truncation as i64;
        if input.abs() > m {
            return Err(Error::Invalid(format!("input harmonic {input} outside [-{m}, {m}]")));
        }
        let col = (input + m) as usize;
        let dim = self.dim();
        let resolvent = CMat::from_fn(dim, dim, |i, j| {
            let d = if i == j { s } else { Complex64::new(0.0, 0.0) };
            d - a[(i, j)]
        });
        let rhs = CMat::from_fn(dim, 1, |i, _| self.bhat[(i, col)]);
        let x = linalg::solve(&resolvent, &rhs).ok_or(Error::Singular { omega: s.im })?;
        let y = &self.chat * &x;
        Ok((0..y.nrows()).map(|r| y[(r, 0)] + self.dhat[(r, col)]).collect())
    }

    /// Eigenvalues of `Ĝ - N` with the fraction of eigenvector energy that
    /// sits in the blocks `m = ±M`.
    pub fn eigen_with_edge_energy(&self) -> Result<Vec<(Complex64, f64)>> {
        let (values, vectors) = linalg::eig(&self.system_matrix())?;
        let n = self.state_dim;
        let dim = self.dim();
        Ok(values
            .into_iter()
            .enumerate()
            .map(|(j, lambda)| {
                let mut total = 0.0;
                let mut edge = 0.0;
                for i in 0..dim {
                    let e = vectors[(i, j)].norm_sqr();
                    total += e;
                    if i < n || i >= dim - n {
                        edge += e;
                    }
                }
                let frac = if total > 0.0 { edge / total } else { 1.0 };
                (lambda, frac)
            })
            .collect())
    }
}

/// Samples the central column `H_k(jω)`, `|k| ≤ grid.nh()`, on `grid`.
pub fn analytic_htf_sample(hss: &HarmonicStateSpace, grid: &FrequencyGrid) -> Result<SidebandResponseSet> {
    let f0 = hss.omega0() / TAU;
    if (grid.f0_hz() - f0).abs() > 1e-12 * f0 {
        return Err(Error::Invalid(format!(
            "grid f0 {} Hz does not match the system pump frequency {f0} Hz",
            grid.f0_hz()
        )));
    }
    let nh = grid.nh();
    if nh > hss.truncation() {
        return Err(Error::Invalid(format!(
            "cannot emit NH = {nh} sidebands from an operator truncated at M = {}",
            hss.truncation()
        )));
    }
    let a = hss.system_matrix();
    let m = hss.truncation();
    let columns: Vec<Vec<Complex64>> = grid
        .omegas()
        .par_iter()
        .map(|&w| hss.transfer_column_with(&a, Complex64::new(0.0, w), 0))
        .collect::<Result<_>>()?;
    let responses = (0..2 * nh + 1)
        .map(|i| columns.iter().map(|col| col[m - nh + i]).collect())
        .collect();
    SidebandResponseSet::new(grid.clone(), hss.kind(), responses)
}

/// Eigenvalues of `Ĝ - N` whose eigenvectors are not concentrated on the
/// truncation edge. Floquet repetitions are kept.
pub fn open_loop_poles(hss: &HarmonicStateSpace) -> Result<Vec<Complex64>> {
    Ok(hss
        .eigen_with_edge_energy()?
        .into_iter()
        .filter(|&(_, edge)| edge < EDGE_ENERGY_LIMIT)
        .map(|(lambda, _)| lambda)
        .collect())
}

/// Exact poles of the PLTV system under `u = -K·y`, assembled at
/// truncation `m`.
pub fn closed_loop_poles_direct(sys: &PltvSystem, k: f64, m: usize) -> Result<Vec<Complex64>> {
    let cl = sys.closed_loop(k)?;
    open_loop_poles(&HarmonicStateSpace::assemble(&cl, m)?)
}

/// One representative per Floquet class, preferring the copy with the
/// smallest shift. An unshifted pole joins an existing class when its
/// distance modulo `j·ω0` is below `rel_tol·|λ|`; shifted copies, which
/// lose accuracy towards the truncation edge, join within
/// `COPY_TOL·|λ|` instead.
pub fn strip_representatives(poles: &[Complex64], omega0: f64, rel_tol: f64) -> Vec<StripPole> {
    let mut mapped: Vec<StripPole> = poles.iter().map(|&p| to_strip(p, omega0)).collect();
    mapped.sort_by_key(|sp| sp.shift.abs());
    let mut out: Vec<StripPole> = Vec::new();
    for sp in mapped {
        let tol = if sp.shift == 0 { rel_tol } else { rel_tol.max(COPY_TOL) };
        let dup = out
            .iter()
            .any(|q| wrap_distance(q.value, sp.value, omega0) <= tol * sp.value.norm().max(q.value.norm()));
        if !dup {
            out.push(sp);
        }
    }
    out.sort_by(|a, b| a.value.im.total_cmp(&b.value.im).then(a.value.re.total_cmp(&b.value.re)));
    out
}

/// Samples the analytic HTF on `grid` with truncation `m` and writes the
/// sideband CSV.
pub fn emit_responses(sys: &PltvSystem, m: usize, grid: &FrequencyGrid, path: impl AsRef<Path>) -> Result<SidebandResponseSet> {
    let hss = HarmonicStateSpace::assemble(sys, m)?;
    let set = analytic_htf_sample(&hss, grid)?;
    set.save(path)?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::oracle::{mathieu_system, MathieuSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn block(m: &CMat, n: usize, r: usize, col: usize) -> CMat {
        CMat::from_fn(n, n, |i, j| m[(r * n + i, col * n + j)])
    }

    fn two_harmonic() -> PltvSystem {
        let g0 = CMat::from_fn(2, 2, |i, j| c(-(1.0 + i as f64 + 2.0 * j as f64), 0.0));
        let g1 = CMat::from_fn(2, 2, |i, j| c(0.1 * i as f64, 0.2 * j as f64));
        let g2 = CMat::from_fn(2, 2, |i, j| c(0.03 + i as f64 * 0.01, -0.02 * (1.0 + j as f64)));
        PltvSystem::new(
            10.0,
            2,
            ResponseKind::Impedance,
            BTreeMap::from([(0, g0), (1, g1), (2, g2)]),
            BTreeMap::from([(0, vec![c(1.0, 0.0), c(0.0, 0.0)])]),
            BTreeMap::from([(0, vec![c(1.0, 0.0), c(1.0, 0.0)])]),
            BTreeMap::new(),
        )
        .unwrap()
    }

    #[test]
    fn toeplitz_layout() {
        let sys = two_harmonic();
        let hss = HarmonicStateSpace::assemble(&sys, 4).unwrap();
        assert_eq!(hss.dim(), 18);
        assert_eq!(block(hss.ghat(), 2, 3, 1), *sys.g(2).unwrap());
        assert_eq!(block(hss.ghat(), 2, 1, 3), *sys.g(-2).unwrap());
        assert_eq!(block(hss.ghat(), 2, 5, 5), *sys.g(0).unwrap());
        assert!(block(hss.ghat(), 2, 8, 0).norm_l2() == 0.0);
    }

    #[test]
    fn truncation_below_support_is_rejected() {
        let sys = two_harmonic();
        assert!(matches!(
            HarmonicStateSpace::assemble(&sys, 1),
            Err(Error::TruncationTooSmall { truncation: 1, support: 2 })
        ));
    }

    #[test]
    fn mathieu_operator_is_tri_block_diagonal() {
        let sys = mathieu_system(&MathieuSpec::default()).unwrap();
        let hss = HarmonicStateSpace::assemble(&sys, 3).unwrap();
        for r in 0..7usize {
            for col in 0..7usize {
                let nonzero = block(hss.ghat(), 2, r, col).norm_l2() > 0.0;
                assert_eq!(nonzero, r.abs_diff(col) <= 1, "block ({r}, {col})");
            }
        }
    }

    #[test]
    fn lti_poles_and_copies() {
        let wn = TAU * 1e8;
        let zeta = 0.05;
        let spec = MathieuSpec {
            omega_n: wn,
            zeta,
            epsilon: 0.0,
            omega0: TAU * 1e9,
            ..Default::default()
        };
        let sys = mathieu_system(&spec).unwrap();
        let hss = HarmonicStateSpace::assemble(&sys, 2).unwrap();
        let poles = open_loop_poles(&hss).unwrap();
        let p = c(-zeta * wn, wn * (1.0 - zeta * zeta).sqrt());
        for m in -1i64..=1 {
            for q in [p, p.conj()] {
                let target = q - c(0.0, m as f64 * spec.omega0);
                assert!(poles.iter().any(|&x| (x - target).norm() < 1e-10 * target.norm()), "{target}");
            }
        }
        let reps = strip_representatives(&poles, spec.omega0, 1e-9);
        assert_eq!(reps.len(), 2);
    }

    #[test]
    fn lti_sidebands_vanish() {
        let sys = mathieu_system(&MathieuSpec::default().with_epsilon(0.0)).unwrap();
        let hss = HarmonicStateSpace::assemble(&sys, 3).unwrap();
        let grid = FrequencyGrid::linear(1e8, 6e8, 11, 1e9, 2).unwrap();
        let set = analytic_htf_sample(&hss, &grid).unwrap();
        for k in [-2, -1, 1, 2] {
            assert!(set.sideband(k).iter().all(|z| z.norm() == 0.0));
        }
        let spec = MathieuSpec::default();
        let w = grid.omegas()[3];
        let s = c(0.0, w);
        let expected = s * spec.omega_n / (s * s + 2.0 * spec.zeta * spec.omega_n * s + spec.omega_n * spec.omega_n);
        assert!((set.sideband(0)[3] - expected).norm() < 1e-12 * expected.norm());
    }

    #[test]
    fn scalar_feedback_moves_pole() {
        let g0 = CMat::from_fn(1, 1, |_, _| c(-3.0, 0.0));
        let sys = PltvSystem::lti(100.0, g0, vec![1.0], vec![1.0], 0.0, ResponseKind::Impedance).unwrap();
        let poles = closed_loop_poles_direct(&sys, 2.0, 1).unwrap();
        assert!(poles.iter().any(|p| (p - c(-5.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let sys = mathieu_system(&MathieuSpec::default()).unwrap();
        let hss = HarmonicStateSpace::assemble(&sys, 3).unwrap();
        let grid = FrequencyGrid::linear(1e8, 6e8, 11, 2e9, 2).unwrap();
        assert!(analytic_htf_sample(&hss, &grid).is_err());
        let grid = FrequencyGrid::linear(1e8, 6e8, 11, 1e9, 4).unwrap();
        assert!(analytic_htf_sample(&hss, &grid).is_err());
    }
}
