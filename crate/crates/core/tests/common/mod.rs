#![allow(dead_code)]

use std::f64::consts::TAU;

use htf_core::{Complex64, FrequencyGrid, HermitianResponseSet, ResponseKind};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `Σ r/(s - p) + d` evaluated term by term.
pub fn partial_fraction(poles: &[Complex64], residues: &[Complex64], d: Complex64, s: Complex64) -> Complex64 {
    poles.iter().zip(residues).map(|(p, r)| r / (s - p)).sum::<Complex64>() + d
}

/// Stable or unstable conjugate-closed pole/residue lists from upper-half
/// pairs.
pub fn conjugate_closed(pairs: &[(Complex64, Complex64)]) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut poles = Vec::new();
    let mut residues = Vec::new();
    for &(p, r) in pairs {
        poles.extend([p, p.conj()]);
        residues.extend([r, r.conj()]);
    }
    (poles, residues)
}

pub fn grid(lo_hz: f64, hi_hz: f64, points: usize) -> FrequencyGrid {
    FrequencyGrid::linear(lo_hz, hi_hz, points, 1e9, 1).unwrap()
}

pub fn single_element(grid: &FrequencyGrid, values: Vec<Complex64>) -> HermitianResponseSet {
    HermitianResponseSet::new(grid.clone(), ResponseKind::Impedance, 0, vec![values]).unwrap()
}

pub fn sample(grid: &FrequencyGrid, mut f: impl FnMut(Complex64) -> Complex64) -> Vec<Complex64> {
    grid.points_hz().iter().map(|&hz| f(c(0.0, TAU * hz))).collect()
}

/// Largest over `reference` of the relative distance to the nearest
/// candidate.
pub fn worst_nearest(reference: &[Complex64], candidates: &[Complex64]) -> f64 {
    reference
        .iter()
        .map(|r| {
            candidates
                .iter()
                .map(|q| (q - r).norm() / r.norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

pub fn in_band(poles: &[Complex64], lo_hz: f64, hi_hz: f64) -> Vec<Complex64> {
    poles
        .iter()
        .copied()
        .filter(|p| (lo_hz..=hi_hz).contains(&(p.im.abs() / TAU)))
        .collect()
}
