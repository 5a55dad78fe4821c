//! Quadratic Hamiltonian with external data and its single-site structure.
//!
//! The pair sum runs over unordered pairs `{i, j}` with at least one end in
//! `Λ`, with coupling `J_{i,j} = α p(i,j)` and data weight `h = 1 - α`. Under
//! this convention the couplings seen from any site sum to one together with
//! `h`, so the energy as a function of a single height `z(k)` is
//! `(z(k) - z̄(k))²` plus terms that do not involve `z(k)`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lattice::{HeightField, Kernel, LatticeBox, ModelParams, Site};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// Pairs with both ends in `Λ`.
    pub pair_interior: f64,
    /// Pairs with one end in `Λ` and one in the shell.
    pub pair_boundary: f64,
    pub data_term: f64,
    pub total: f64,
}

/// Heights on `Λ` from `x` and outside `Λ` from `y`.
fn height_at(bx: &LatticeBox, x: &HeightField, y: &HeightField, site: &Site) -> Result<f64> {
    if bx.contains(site) {
        x.get(site)
    } else {
        y.get(site)
    }
}

pub fn energy(
    bx: &LatticeBox,
    x: &HeightField,
    y: &HeightField,
    d: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<EnergyBreakdown> {
    let alpha = params.alpha();
    let mut pair_interior = 0.0;
    let mut pair_boundary = 0.0;
    let mut data_term = 0.0;
    for i in bx.sites() {
        let xi = x.get(&i)?;
        for (j, w) in kernel.neighbors(&i) {
            if bx.contains(&j) {
                if j > i {
                    let diff = xi - x.get(&j)?;
                    pair_interior += alpha * w * diff * diff;
                }
            } else {
                let diff = xi - y.get(&j)?;
                pair_boundary += alpha * w * diff * diff;
            }
        }
        let diff = xi - d.get(&i)?;
        data_term += params.h() * diff * diff;
    }
    Ok(EnergyBreakdown {
        pair_interior,
        pair_boundary,
        data_term,
        total: pair_interior + pair_boundary + data_term,
    })
}

/// `z̄(k) = α Σ_j p(k,j) z(j) + (1 - α) d(k)`.
pub fn local_mean(
    k: &Site,
    z: &HeightField,
    d_k: f64,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<f64> {
    let mut avg = 0.0;
    for (j, w) in kernel.neighbors(k) {
        avg += w * z.get(&j)?;
    }
    Ok(params.alpha() * avg + params.h() * d_k)
}

/// Change in energy when the height at `k` moves from `old_val` to `new_val`
/// with everything else held fixed.
pub fn energy_delta(
    k: &Site,
    old_val: f64,
    new_val: f64,
    z: &HeightField,
    d_k: f64,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<f64> {
    let mean = local_mean(k, z, d_k, params, kernel)?;
    Ok((new_val - mean).powi(2) - (old_val - mean).powi(2))
}

/// Mean and variance of the single-site conditional law at `k`, i.e. the
/// heat-bath update distribution `N(z̄(k), σ²)`.
pub fn conditional_law(
    k: &Site,
    z: &HeightField,
    d_k: f64,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<(f64, f64)> {
    Ok((local_mean(k, z, d_k, params, kernel)?, params.sigma2()))
}

/// `∂H/∂x(i) = 2 (x(i) - x̄(i))` for `i ∈ Λ`.
pub fn gradient(
    bx: &LatticeBox,
    x: &HeightField,
    y: &HeightField,
    d: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<HeightField> {
    let mut g = HeightField::new();
    for i in bx.sites() {
        let mut avg = 0.0;
        for (j, w) in kernel.neighbors(&i) {
            avg += w * height_at(bx, x, y, &j)?;
        }
        let mean = params.alpha() * avg + params.h() * d.get(&i)?;
        let gi = 2.0 * (x.get(&i)? - mean);
        g.set(i, gi);
    }
    Ok(g)
}
