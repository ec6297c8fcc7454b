use num_complex::Complex64;
use rayon::prelude::*;

use super::{CoeffField, FitConfig, FitInfo, RationalModel, Weighting, MERGE_TOL};
use crate::error::{Error, Result};
use crate::freqdata::{FrequencyGrid, HermitianResponseSet};
use crate::linalg::{self, RMat};
use crate::poles::upper_half;

const MOVE_TOL: f64 = 1e-6;
const RELAX_FLOOR: f64 = 1e-8;
const EXACT_FIT: f64 = 1e-13;

/// Real-coefficient pole set: one entry per conjugate pair (`Im > 0`) and
/// the real poles.
#[derive(Debug, Clone, PartialEq)]
struct PoleSet {
    pairs: Vec<Complex64>,
    reals: Vec<f64>,
}

impl PoleSet {
    fn from_list(poles: &[Complex64]) -> Self {
        let (reals, pairs) = upper_half(poles);
        Self { pairs, reals }
    }

    fn order(&self) -> usize {
        2 * self.pairs.len() + self.reals.len()
    }

    fn expand(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.order());
        for &p in &self.pairs {
            out.push(p);
            out.push(p.conj());
        }
        out.extend(self.reals.iter().map(|&r| Complex64::new(r, 0.0)));
        out
    }

    /// Basis row at `s`: `1/(s-p) + 1/(s-p*)`, `j/(s-p) - j/(s-p*)` per
    /// pair, `1/(s-p)` per real pole, then the constant.
    fn basis_row(&self, s: Complex64, row: &mut Vec<Complex64>) {
        row.clear();
        let j = Complex64::new(0.0, 1.0);
        for &p in &self.pairs {
            let a = (s - p).inv();
            let b = (s - p.conj()).inv();
            row.push(a + b);
            row.push(j * a - j * b);
        }
        for &r in &self.reals {
            row.push((s - r).inv());
        }
        row.push(Complex64::new(1.0, 0.0));
    }

    /// Real state matrix of the basis together with its input vector.
    fn real_form(&self) -> (RMat, Vec<f64>) {
        let n = self.order();
        let mut a = RMat::zeros(n, n);
        let mut b = vec![0.0; n];
        let mut i = 0;
        for p in &self.pairs {
            a[(i, i)] = p.re;
            a[(i, i + 1)] = p.im;
            a[(i + 1, i)] = -p.im;
            a[(i + 1, i + 1)] = p.re;
            b[i] = 2.0;
            i += 2;
        }
        for &r in &self.reals {
            a[(i, i)] = r;
            b[i] = 1.0;
            i += 1;
        }
        (a, b)
    }

    fn from_eigenvalues(values: &[Complex64]) -> Self {
        let mut pairs = Vec::new();
        let mut reals = Vec::new();
        for &v in values {
            if v.im.abs() <= 1e-12 * v.norm() {
                reals.push(v.re);
            } else if v.im > 0.0 {
                pairs.push(v);
            }
        }
        pairs.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
        reals.sort_by(f64::total_cmp);
        let mut set = Self { pairs: Vec::new(), reals: Vec::new() };
        for p in pairs {
            if !set.pairs.iter().any(|q| (p - q).norm() <= MERGE_TOL * p.norm()) {
                set.pairs.push(p);
            }
        }
        for r in reals {
            if !set.reals.iter().any(|q| (r - q).abs() <= MERGE_TOL * r.abs()) {
                set.reals.push(r);
            }
        }
        set
    }
}

/// Standard vector-fitting start: conjugate pairs with imaginary parts
/// log-spaced over `[omega_min, omega_max]` and real parts `-Im/100`; an
/// odd order adds a real pole at `-omega_max`. A single pair sits at the
/// geometric mean of the band.
pub fn initial_poles(omega_min: f64, omega_max: f64, order: usize) -> Result<Vec<Complex64>> {
    if order < 2 {
        return Err(Error::Invalid(format!("model order must be at least 2, got {order}")));
    }
    if !(omega_min > 0.0 && omega_max >= omega_min && omega_max.is_finite()) {
        return Err(Error::Invalid(format!("bad band [{omega_min}, {omega_max}] rad/s")));
    }
    let count = order / 2;
    let imag: Vec<f64> = if count == 1 {
        vec![(omega_min * omega_max).sqrt()]
    } else {
        let (lo, hi) = (omega_min.ln(), omega_max.ln());
        (0..count)
            .map(|i| {
                if i == 0 {
                    omega_min
                } else if i == count - 1 {
                    omega_max
                } else {
                    (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp()
                }
            })
            .collect()
    };
    let mut out = Vec::with_capacity(order);
    for w in imag {
        out.push(Complex64::new(-w / 100.0, w));
        out.push(Complex64::new(-w / 100.0, -w));
    }
    if order % 2 == 1 {
        out.push(Complex64::new(-omega_max, 0.0));
    }
    Ok(out)
}

fn grid_band(grid: &FrequencyGrid) -> (f64, f64) {
    let w = grid.omegas();
    (w[0], *w.last().unwrap())
}

/// Result of one pole-relocation step.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub poles: Vec<Complex64>,
    /// Weighted relative RMS of the residue fit on the input poles.
    pub residual: f64,
}

struct Problem {
    s: Vec<Complex64>,
    // data[e][i], weights[e][i]
    data: Vec<Vec<Complex64>>,
    weights: Vec<Vec<f64>>,
}

impl Problem {
    fn new(data: &HermitianResponseSet, weighting: Weighting) -> Result<Self> {
        if data.grid().is_empty() || data.elements().is_empty() {
            return Err(Error::Invalid("no data to fit".into()));
        }
        let s = data.grid().omegas().into_iter().map(|w| Complex64::new(0.0, w)).collect();
        let data: Vec<Vec<Complex64>> = data.elements().to_vec();
        let peak = data.iter().flatten().fold(0.0f64, |m, z| m.max(z.norm()));
        let floor = if peak > 0.0 { 1e-12 * peak } else { 1.0 };
        let weights = data
            .iter()
            .map(|e| {
                e.iter()
                    .map(|z| match weighting {
                        Weighting::Uniform => 1.0,
                        Weighting::InverseMagnitude => 1.0 / z.norm().max(floor),
                    })
                    .collect()
            })
            .collect();
        Ok(Self { s, data, weights })
    }

    fn samples(&self) -> usize {
        self.s.len()
    }

    fn require_rank(&self, order: usize) -> Result<()> {
        if self.samples() < order + 1 {
            return Err(Error::SingularFit {
                context: format!("order {order} needs more than {} frequency samples", self.samples()),
            });
        }
        Ok(())
    }

    fn weighted_norm_sq(&self) -> f64 {
        self.data
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| d.iter().zip(w).map(|(z, w)| (z * w).norm_sqr()).sum::<f64>())
            .sum()
    }
}

fn basis_matrix(set: &PoleSet, s: &[Complex64]) -> Vec<Vec<Complex64>> {
    let mut row = Vec::new();
    s.iter()
        .map(|&si| {
            set.basis_row(si, &mut row);
            row.clone()
        })
        .collect()
}

/// Real coefficients (basis order) per element, plus the weighted RMS.
fn fit_residues(problem: &Problem, set: &PoleSet) -> Result<(Vec<Vec<f64>>, f64)> {
    problem.require_rank(set.order())?;
    let phi = basis_matrix(set, &problem.s);
    let cols = set.order() + 1;
    let ns = problem.samples();
    let solved: Vec<Result<(Vec<f64>, f64)>> = problem
        .data
        .par_iter()
        .zip(&problem.weights)
        .map(|(f, w)| {
            let a = RMat::from_fn(2 * ns, cols, |r, c| {
                let i = r % ns;
                let v = phi[i][c] * w[i];
                if r < ns {
                    v.re
                } else {
                    v.im
                }
            });
            let b = RMat::from_fn(2 * ns, 1, |r, _| {
                let i = r % ns;
                let v = f[i] * w[i];
                if r < ns {
                    v.re
                } else {
                    v.im
                }
            });
            let x = linalg::lstsq(&a, &b, "residue identification")?;
            let coef: Vec<f64> = (0..cols).map(|c| x[(c, 0)]).collect();
            let mut err = 0.0;
            for i in 0..ns {
                let fit: Complex64 = phi[i].iter().zip(&coef).map(|(p, c)| p * c).sum();
                err += ((fit - f[i]) * w[i]).norm_sqr();
            }
            Ok((coef, err))
        })
        .collect();
    let mut coefs = Vec::with_capacity(solved.len());
    let mut err = 0.0;
    for r in solved {
        let (c, e) = r?;
        coefs.push(c);
        err += e;
    }
    let norm = problem.weighted_norm_sq();
    let rms = if norm > 0.0 { (err / norm).sqrt() } else { err.sqrt() };
    Ok((coefs, rms))
}

fn relocate(problem: &Problem, set: &PoleSet) -> Result<PoleSet> {
    let n = set.order();
    let cols = n + 1;
    let ns = problem.samples();
    problem.require_rank(n)?;
    let phi = basis_matrix(set, &problem.s);

    let blocks: Vec<RMat> = problem
        .data
        .par_iter()
        .zip(&problem.weights)
        .map(|(f, w)| {
            let a = RMat::from_fn(2 * ns, 2 * cols, |r, c| {
                let i = r % ns;
                let v = if c < cols {
                    phi[i][c] * w[i]
                } else {
                    -phi[i][c - cols] * f[i] * w[i]
                };
                if r < ns {
                    v.re
                } else {
                    v.im
                }
            });
            let r = linalg::qr_r(&a);
            RMat::from_fn(cols, cols, |i, j| r[(cols + i, cols + j)])
        })
        .collect();

    let scale = problem.weighted_norm_sq().sqrt() / ns as f64;
    let rows = blocks.len() * cols + 1;
    let mut m = RMat::zeros(rows, cols);
    for (b, block) in blocks.iter().enumerate() {
        for i in 0..cols {
            for j in 0..cols {
                m[(b * cols + i, j)] = block[(i, j)];
            }
        }
    }
    for j in 0..cols {
        let sum: f64 = phi.iter().map(|row| row[j].re).sum();
        m[(rows - 1, j)] = scale * sum;
    }
    let mut rhs = RMat::zeros(rows, 1);
    rhs[(rows - 1, 0)] = scale * ns as f64;
    let x = linalg::lstsq(&m, &rhs, "pole relocation")?;
    let mut c: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    let mut d = x[(n, 0)];

    if d.abs() < RELAX_FLOOR {
        let a = RMat::from_fn(rows - 1, n, |i, j| m[(i, j)]);
        let b = RMat::from_fn(rows - 1, 1, |i, _| -m[(i, n)]);
        let x = linalg::lstsq(&a, &b, "pole relocation (non-relaxed)")?;
        c = (0..n).map(|i| x[(i, 0)]).collect();
        d = 1.0;
    }

    let (a, b) = set.real_form();
    let zeros = RMat::from_fn(n, n, |i, j| a[(i, j)] - b[i] * c[j] / d);
    let values = linalg::eigvals_real(&zeros)?;
    if values.iter().any(|v| !linalg::is_finite(*v)) {
        return Err(Error::SingularFit {
            context: "relocated poles are not finite".into(),
        });
    }
    Ok(PoleSet::from_eigenvalues(&values))
}

/// One relaxed sigma-relocation step on a real-coefficient pole set.
///
/// When the current poles already represent the data to rounding level the
/// relocation problem carries no information and the poles are returned
/// unchanged.
pub fn vf_iterate(data: &HermitianResponseSet, poles: &[Complex64], cfg: &FitConfig) -> Result<IterationOutcome> {
    let problem = Problem::new(data, cfg.weighting)?;
    let set = PoleSet::from_list(poles);
    iterate(&problem, &set).map(|(set, residual)| IterationOutcome {
        poles: set.expand(),
        residual,
    })
}

fn iterate(problem: &Problem, set: &PoleSet) -> Result<(PoleSet, f64)> {
    let (_, residual) = fit_residues(problem, set)?;
    if residual <= EXACT_FIT {
        return Ok((set.clone(), residual));
    }
    Ok((relocate(problem, set)?, residual))
}

fn movement(old: &PoleSet, new: &PoleSet) -> f64 {
    if old.order() != new.order() {
        return f64::INFINITY;
    }
    let old = old.expand();
    new.expand()
        .iter()
        .map(|p| {
            let d = old.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
            d / p.norm().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// Real-coefficient model of every element of `data` on the given poles.
pub fn residue_fit(data: &HermitianResponseSet, poles: &[Complex64], cfg: &FitConfig) -> Result<RationalModel> {
    let problem = Problem::new(data, cfg.weighting)?;
    let set = PoleSet::from_list(poles);
    let (coefs, rms) = fit_residues(&problem, &set)?;
    let mut model = assemble_model(data, &set, &coefs)?;
    model.fit_info = Some(FitInfo {
        rms,
        order: set.order(),
        iterations: 0,
        tolerance_met: rms < cfg.rms_tolerance,
    });
    Ok(model)
}

fn assemble_model(data: &HermitianResponseSet, set: &PoleSet, coefs: &[Vec<f64>]) -> Result<RationalModel> {
    let poles = set.expand();
    let n = set.order();
    let mut residues = vec![vec![Complex64::new(0.0, 0.0); coefs.len()]; n];
    let mut direct = Vec::with_capacity(coefs.len());
    for (e, x) in coefs.iter().enumerate() {
        let mut i = 0;
        for _ in &set.pairs {
            let r = Complex64::new(x[i], x[i + 1]);
            residues[i][e] = r;
            residues[i + 1][e] = r.conj();
            i += 2;
        }
        for _ in &set.reals {
            residues[i][e] = Complex64::new(x[i], 0.0);
            i += 1;
        }
        direct.push(Complex64::new(x[n], 0.0));
    }
    let half = data.n() as i64;
    let labels = if data.elements().len() == 2 * data.n() + 1 {
        (-half..=half).map(|k| format!("Ht_{k}")).collect()
    } else {
        (0..coefs.len()).map(|e| format!("Ht_{e}")).collect()
    };
    let mut model = RationalModel::new(poles, residues, direct, CoeffField::Real)?.with_labels(labels)?;
    model.f0_hz = Some(data.grid().f0_hz());
    Ok(model)
}

/// Fits all elements of `data` with one common real pole set, escalating
/// the order in steps of two from `order_min` until the weighted relative
/// RMS drops below `rms_tolerance`.
///
/// If no order meets the tolerance the lowest-RMS model is returned with
/// `tolerance_met = false`.
pub fn fit(data: &HermitianResponseSet, cfg: &FitConfig) -> Result<RationalModel> {
    cfg.validate()?;
    let problem = Problem::new(data, cfg.weighting)?;
    let (wmin, wmax) = grid_band(data.grid());
    let mut best: Option<RationalModel> = None;
    let mut order = cfg.order_min;
    while order <= cfg.order_max {
        let attempt = fit_order(&problem, data, cfg, wmin, wmax, order);
        let model = match attempt {
            Ok(m) => m,
            Err(Error::SingularFit { context }) => {
                if best.is_some() {
                    break;
                }
                return Err(Error::SingularFit { context });
            }
            Err(e) => return Err(e),
        };
        let info = model.fit_info.as_ref().unwrap();
        if info.tolerance_met {
            return Ok(model);
        }
        let better = best
            .as_ref()
            .map_or(true, |b| info.rms < b.fit_info.as_ref().unwrap().rms);
        if better {
            best = Some(model);
        }
        order += 2;
    }
    best.ok_or_else(|| Error::Invalid("empty order range".into()))
}

fn fit_order(
    problem: &Problem,
    data: &HermitianResponseSet,
    cfg: &FitConfig,
    wmin: f64,
    wmax: f64,
    order: usize,
) -> Result<RationalModel> {
    let mut set = PoleSet::from_list(&initial_poles(wmin, wmax, order)?);
    // lowest-residual pole set seen so far; excess-order iterations can
    // wander off after reaching the true poles
    let mut best: Option<(f64, PoleSet)> = None;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        let (next, residual) = match iterate(problem, &set) {
            Ok(step) => step,
            Err(Error::SingularFit { .. }) if best.is_some() => break,
            Err(e) => return Err(e),
        };
        if best.as_ref().map_or(true, |(r, _)| residual < *r) {
            best = Some((residual, set.clone()));
        }
        iterations += 1;
        let moved = movement(&set, &next);
        set = next;
        if moved < MOVE_TOL {
            break;
        }
    }
    let (mut coefs, mut rms) = match fit_residues(problem, &set) {
        Ok(fit) => fit,
        Err(Error::SingularFit { .. }) if best.is_some() => (Vec::new(), f64::INFINITY),
        Err(e) => return Err(e),
    };
    if let Some((r, earlier)) = best {
        if r < rms {
            set = earlier;
            (coefs, rms) = fit_residues(problem, &set)?;
        }
    }
    let mut model = assemble_model(data, &set, &coefs)?;
    model.fit_info = Some(FitInfo {
        rms,
        order: set.order(),
        iterations,
        tolerance_met: rms < cfg.rms_tolerance,
    });
    Ok(model)
}
