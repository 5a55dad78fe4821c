//! Backward (dual) construction of the finite-volume process.
//!
//! Given the realized epochs of a window `[s, t]`, the walk started at `i` at
//! time `t` runs backwards: at each epoch `(j, τ)` it is killed at `j*` with
//! probability `1 - α` or jumps to `k` with probability `α p(j, k)`, and it is
//! absorbed as soon as it lands outside `Λ`. Conditional on the epochs, the
//! walk's law is a mass vector evolved by a deterministic recursion, so all
//! weights below are exact rather than sampled.
//!
//! The height at `(i, t)` is then the four-term sum
//! `A + B + C + D`: noise marks weighted by the alive mass at their epoch,
//! data weighted by the killed mass, boundary values weighted by the absorbed
//! mass, and the initial condition weighted by the mass still alive at `s`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::EpochList;
use crate::error::{Error, Result};
use crate::ground_state::SiteMass;
use crate::lattice::{HeightField, Kernel, LatticeBox, ModelParams, Site};
use crate::stencil::{Link, Stencil};

/// Alive masses below this are dropped and booked in `pruned_mass`.
pub const PRUNE_BELOW: f64 = 1e-15;

/// Mass attached to a site at a given epoch (index into the epoch list).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMass {
    pub epoch: usize,
    pub site: Site,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    /// Start of the walk; `None` when propagated from a general mass vector.
    pub origin: Option<Site>,
    pub window: (f64, f64),
    /// Mass alive at the window start, `b_{[s,t]}(i, ·)`.
    pub b_final: Vec<SiteMass>,
    /// Alive mass at the epoch site just before the epoch acts, `b_{[τ,t]}(i, j)`.
    pub visits: Vec<EpochMass>,
    /// Mass killed at `j*` by the epoch, `(1 - α)` times the visit mass.
    pub a_killed: Vec<EpochMass>,
    /// Mass absorbed on shell sites by the epoch.
    pub a_absorbed: Vec<EpochMass>,
    pub pruned_mass: f64,
}

impl WeightTable {
    pub fn alive_mass(&self) -> f64 {
        self.b_final.iter().map(|e| e.mass).sum()
    }

    pub fn killed_mass(&self) -> f64 {
        self.a_killed.iter().map(|e| e.mass).sum()
    }

    pub fn absorbed_mass(&self) -> f64 {
        self.a_absorbed.iter().map(|e| e.mass).sum()
    }

    /// Alive + killed + absorbed + pruned; one for a unit start.
    pub fn total_mass(&self) -> f64 {
        self.alive_mass() + self.killed_mass() + self.absorbed_mass() + self.pruned_mass
    }
}

/// The four terms of the backward representation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualTerms {
    /// Noise term `A`.
    pub noise: f64,
    /// Data term `B`.
    pub data: f64,
    /// Boundary term `C`.
    pub boundary: f64,
    /// Initial-condition term `D`.
    pub initial: f64,
}

impl DualTerms {
    pub fn value(&self) -> f64 {
        self.noise + self.data + self.boundary + self.initial
    }
}

/// Dense backward propagation over a fixed box and epoch list.
pub struct DualEngine<'a> {
    stencil: Stencil,
    epochs: &'a EpochList,
    /// Box index of each epoch site, `None` for epochs outside `Λ`.
    epoch_sites: Vec<Option<usize>>,
    params: ModelParams,
}

struct Trace {
    alive: Vec<f64>,
    visits: Vec<(usize, usize, f64)>,
    absorbed: Vec<(usize, usize, f64)>,
    pruned: f64,
}

impl<'a> DualEngine<'a> {
    pub fn new(
        epochs: &'a EpochList,
        bx: &LatticeBox,
        params: &ModelParams,
        kernel: &Kernel,
    ) -> Result<Self> {
        let stencil = Stencil::new(bx, kernel)?;
        let epoch_sites = epochs.epochs.iter().map(|e| bx.index_of(&e.site)).collect();
        Ok(DualEngine {
            stencil,
            epochs,
            epoch_sites,
            params: *params,
        })
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    fn propagate(&self, mut mass: Vec<f64>) -> Trace {
        let alpha = self.params.alpha();
        let mut visits = Vec::new();
        let mut absorbed = Vec::new();
        let mut pruned = 0.0;
        for (e, site) in self.epoch_sites.iter().enumerate().rev() {
            let Some(j) = *site else { continue };
            let w = mass[j];
            if w == 0.0 {
                continue;
            }
            mass[j] = 0.0;
            if w < PRUNE_BELOW {
                pruned += w;
                continue;
            }
            visits.push((e, j, w));
            for &(link, p) in self.stencil.links(j) {
                match link {
                    Link::Inner(k) => mass[k] += alpha * p * w,
                    Link::Shell(k) => absorbed.push((e, k, alpha * p * w)),
                }
            }
        }
        Trace {
            alive: mass,
            visits,
            absorbed,
            pruned,
        }
    }

    fn table(&self, origin: Option<Site>, trace: Trace) -> WeightTable {
        let h = self.params.h();
        let sites = self.stencil.sites();
        let shell = self.stencil.shell();
        WeightTable {
            origin,
            window: self.epochs.window,
            b_final: sites
                .iter()
                .zip(&trace.alive)
                .filter(|(_, &m)| m != 0.0)
                .map(|(s, &m)| SiteMass {
                    site: s.clone(),
                    mass: m,
                })
                .collect(),
            visits: trace
                .visits
                .iter()
                .map(|&(e, j, w)| EpochMass {
                    epoch: e,
                    site: sites[j].clone(),
                    mass: w,
                })
                .collect(),
            a_killed: trace
                .visits
                .iter()
                .map(|&(e, j, w)| EpochMass {
                    epoch: e,
                    site: sites[j].clone(),
                    mass: h * w,
                })
                .collect(),
            a_absorbed: trace
                .absorbed
                .iter()
                .map(|&(e, k, m)| EpochMass {
                    epoch: e,
                    site: shell[k].clone(),
                    mass: m,
                })
                .collect(),
            pruned_mass: trace.pruned,
        }
    }

    fn unit(&self, i: &Site) -> Result<Vec<f64>> {
        let idx = self.stencil.index_of(i)?;
        let mut mass = vec![0.0; self.stencil.len()];
        mass[idx] = 1.0;
        Ok(mass)
    }

    pub fn weights(&self, i: &Site) -> Result<WeightTable> {
        let trace = self.propagate(self.unit(i)?);
        Ok(self.table(Some(i.clone()), trace))
    }

    /// Weights for the walk started from an arbitrary mass distribution on `Λ`.
    pub fn weights_from(&self, initial: &HeightField) -> Result<WeightTable> {
        let mass = self.stencil.dense(initial)?;
        Ok(self.table(None, self.propagate(mass)))
    }

    /// The four terms at `i`, with fields given in dense layout.
    fn terms_dense(&self, i: usize, z_init: &[f64], y: &[f64], d: &[f64]) -> DualTerms {
        let mut mass = vec![0.0; self.stencil.len()];
        mass[i] = 1.0;
        let trace = self.propagate(mass);
        let h = self.params.h();
        let noise = trace
            .visits
            .iter()
            .map(|&(e, _, w)| w * self.epochs.epochs[e].noise)
            .sum();
        let data = trace.visits.iter().map(|&(_, j, w)| h * w * d[j]).sum();
        let boundary = trace.absorbed.iter().map(|&(_, k, m)| m * y[k]).sum();
        let initial = trace.alive.iter().zip(z_init).map(|(m, z)| m * z).sum();
        DualTerms {
            noise,
            data,
            boundary,
            initial,
        }
    }

    pub fn reconstruct(
        &self,
        i: &Site,
        z_init: &HeightField,
        y: &HeightField,
        d: &HeightField,
    ) -> Result<DualTerms> {
        let idx = self.stencil.index_of(i)?;
        let z = self.stencil.dense(z_init)?;
        let y = self.stencil.dense_shell(y)?;
        let d = self.stencil.dense(d)?;
        Ok(self.terms_dense(idx, &z, &y, &d))
    }

    /// Reconstruction at every site of `Λ`, in layout order.
    pub fn reconstruct_all(
        &self,
        z_init: &HeightField,
        y: &HeightField,
        d: &HeightField,
    ) -> Result<Vec<(Site, DualTerms)>> {
        let z = self.stencil.dense(z_init)?;
        let y = self.stencil.dense_shell(y)?;
        let d = self.stencil.dense(d)?;
        Ok((0..self.stencil.len())
            .into_par_iter()
            .map(|i| (self.stencil.sites()[i].clone(), self.terms_dense(i, &z, &y, &d)))
            .collect())
    }
}

pub fn backward_weights(
    epochs: &EpochList,
    bx: &LatticeBox,
    i: &Site,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<WeightTable> {
    DualEngine::new(epochs, bx, params, kernel)?.weights(i)
}

/// Value at `(i, t)` and its four terms, rebuilt from the epochs and marks.
#[allow(clippy::too_many_arguments)]
pub fn reconstruct(
    epochs: &EpochList,
    bx: &LatticeBox,
    i: &Site,
    z_init: &HeightField,
    y: &HeightField,
    d: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<(f64, DualTerms)> {
    let terms = DualEngine::new(epochs, bx, params, kernel)?.reconstruct(i, z_init, y, d)?;
    Ok((terms.value(), terms))
}

/// Mass of the backward walk still alive (not killed) at the window start.
/// The box must be large enough that no mass reaches the shell.
pub fn survival_mass(
    epochs: &EpochList,
    bx: &LatticeBox,
    i: &Site,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<f64> {
    let table = backward_weights(epochs, bx, i, params, kernel)?;
    if !table.a_absorbed.is_empty() {
        return Err(Error::AbsorptionOccurred);
    }
    Ok(table.alive_mass())
}

/// Conditional variance of the noise term given the epochs: `σ² Σ b²`.
pub fn noise_variance_accumulator(
    epochs: &EpochList,
    bx: &LatticeBox,
    i: &Site,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<f64> {
    let table = backward_weights(epochs, bx, i, params, kernel)?;
    Ok(params.sigma2() * table.visits.iter().map(|v| v.mass * v.mass).sum::<f64>())
}
