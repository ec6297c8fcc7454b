use std::f64::consts::TAU;

use num_complex::Complex64;

use super::PltvSystem;
use crate::error::{Error, Result};
use crate::linalg::{self, RMat};
use crate::poles::{floquet_log, wrap_distance};

const REFINE_TOL: f64 = 1e-8;
const MAX_STEPS: usize = 1 << 20;

/// Fundamental matrix `Φ(T)` of `ξ̇ = G(t)ξ` over one pump period with
/// `steps` fixed RK4 steps.
pub fn monodromy(sys: &PltvSystem, steps: usize) -> RMat {
    let n = sys.state_dim();
    let period = TAU / sys.omega0();
    let h = period / steps as f64;
    let mut phi = RMat::identity(n, n);
    let as_mat = |g: Vec<Vec<f64>>| RMat::from_fn(n, n, |i, j| g[i][j]);
    let mut g_start = as_mat(sys.g_at(0.0));
    for step in 0..steps {
        let t = step as f64 * h;
        let g_mid = as_mat(sys.g_at(t + 0.5 * h));
        let g_end = as_mat(sys.g_at(t + h));
        let k1 = &g_start * &phi;
        let y2 = &phi + &k1 * (0.5 * h);
        let k2 = &g_mid * &y2;
        let y3 = &phi + &k2 * (0.5 * h);
        let k3 = &g_mid * &y3;
        let y4 = &phi + &k3 * h;
        let k4 = &g_end * &y4;
        phi = &phi + (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h / 6.0);
        g_start = g_end;
    }
    phi
}

fn exponents(sys: &PltvSystem, steps: usize) -> Result<Vec<Complex64>> {
    let period = TAU / sys.omega0();
    let mu = linalg::eigvals_real(&monodromy(sys, steps))?;
    Ok(mu.into_iter().map(|m| floquet_log(m, period)).collect())
}

fn relative_change(old: &[Complex64], new: &[Complex64], omega0: f64) -> f64 {
    new.iter()
        .map(|&p| {
            let d = old.iter().map(|&q| wrap_distance(p, q, omega0)).fold(f64::INFINITY, f64::min);
            d / p.norm().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// Floquet exponents of the system under `u = -K·y`, in the principal
/// strip `Im ∈ (-ω0/2, ω0/2]`.
///
/// The step count doubles until the exponents change by less than
/// `1e-8` relative.
pub fn floquet_exponents(sys: &PltvSystem, k: f64) -> Result<Vec<Complex64>> {
    let cl = sys.closed_loop(k)?;
    let omega0 = cl.omega0();
    let mut steps = 256 * (cl.support().max(1));
    let mut previous = exponents(&cl, steps)?;
    let mut change = f64::INFINITY;
    while steps < MAX_STEPS {
        steps *= 2;
        let current = exponents(&cl, steps)?;
        change = relative_change(&previous, &current, omega0);
        if change < REFINE_TOL {
            return Ok(current);
        }
        previous = current;
    }
    Err(Error::Integration { steps, change })
}
