//! Pole-set bookkeeping for periodic systems: principal-strip mapping,
//! wrap-around distances, matching and conjugate-pair canonicalization.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A pole mapped into the principal strip `Im ∈ (-ω0/2, ω0/2]`, together
/// with the integer `m` such that the original pole is `value + j·m·ω0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripPole {
    pub value: Complex64,
    pub shift: i64,
}

/// Maps `z` into the principal strip.
pub fn to_strip(z: Complex64, omega0: f64) -> StripPole {
    let half = 0.5 * omega0;
    let mut shift = (z.im / omega0).round() as i64;
    let mut im = z.im - shift as f64 * omega0;
    if im <= -half {
        im += omega0;
        shift -= 1;
    } else if im > half {
        im -= omega0;
        shift += 1;
    }
    StripPole {
        value: Complex64::new(z.re, im),
        shift,
    }
}

/// Distance between two poles modulo `j·ω0`.
pub fn wrap_distance(a: Complex64, b: Complex64, omega0: f64) -> f64 {
    let dre = a.re - b.re;
    let mut dim = (a.im - b.im) % omega0;
    if dim > 0.5 * omega0 {
        dim -= omega0;
    } else if dim < -0.5 * omega0 {
        dim += omega0;
    }
    dre.hypot(dim)
}

/// Principal-strip logarithm of a Floquet multiplier over `period`.
pub fn floquet_log(mu: Complex64, period: f64) -> Complex64 {
    let re = mu.norm().ln() / period;
    let mut arg = mu.arg();
    if arg <= -PI {
        arg += 2.0 * PI;
    }
    Complex64::new(re, arg / period)
}

/// For every pole in `reference`, the relative distance to its closest
/// partner in `candidates` (greedy one-to-one assignment in order of
/// increasing distance). `scale(p)` sets the denominator of the relative
/// error for reference pole `p`. Returns `None` if `candidates` is too short.
pub fn match_relative(
    reference: &[Complex64],
    candidates: &[Complex64],
    distance: impl Fn(Complex64, Complex64) -> f64,
    scale: impl Fn(Complex64) -> f64,
) -> Option<Vec<f64>> {
    if candidates.len() < reference.len() {
        return None;
    }
    let mut pairs = Vec::with_capacity(reference.len() * candidates.len());
    for (i, &r) in reference.iter().enumerate() {
        for (j, &c) in candidates.iter().enumerate() {
            pairs.push((distance(r, c), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = vec![f64::NAN; reference.len()];
    let mut used_r = vec![false; reference.len()];
    let mut used_c = vec![false; candidates.len()];
    let mut left = reference.len();
    for (d, i, j) in pairs {
        if left == 0 {
            break;
        }
        if used_r[i] || used_c[j] {
            continue;
        }
        used_r[i] = true;
        used_c[j] = true;
        left -= 1;
        out[i] = d / scale(reference[i]);
    }
    Some(out)
}

/// Worst relative mismatch between two pole sets with plain Euclidean
/// distance, relative to `|p|`.
pub fn max_relative_mismatch(reference: &[Complex64], candidates: &[Complex64]) -> f64 {
    match match_relative(reference, candidates, |a, b| (a - b).norm(), |p| p.norm()) {
        Some(errs) => errs.into_iter().fold(0.0, f64::max),
        None => f64::INFINITY,
    }
}

/// Sorts by imaginary part, then real part.
pub fn sort_poles(poles: &mut [Complex64]) {
    poles.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
}

/// Canonical real-coefficient ordering: real poles first (ascending), then
/// one entry per conjugate pair with positive imaginary part, ascending in
/// imaginary part. Entries with negative imaginary part are dropped; the
/// caller reconstructs them by conjugation.
pub fn upper_half(poles: &[Complex64]) -> (Vec<f64>, Vec<Complex64>) {
    let mut reals = Vec::new();
    let mut pairs = Vec::new();
    for &p in poles {
        if p.im == 0.0 {
            reals.push(p.re);
        } else if p.im > 0.0 {
            pairs.push(p);
        }
    }
    reals.sort_by(f64::total_cmp);
    pairs.sort_by(|a, b| a.im.total_cmp(&b.im));
    (reals, pairs)
}
