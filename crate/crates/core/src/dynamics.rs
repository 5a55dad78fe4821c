//! Forward heat-bath dynamics in a finite box driven by an explicit list of
//! space-time Poisson epochs.
//!
//! Each site carries an independent rate-1 Poisson clock. At an epoch
//! `(i, τ)` the height at `i` is replaced by
//! `α (Σ_{j∈Λ} p(i,j) η(j) + Σ_{j∉Λ} p(i,j) y(j)) + (1 - α) d(i) + ξ`,
//! where the noise mark `ξ ~ N(0, σ²)` is drawn together with the epoch so the
//! same randomness can be replayed by the backward construction.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{HeightField, Kernel, LatticeBox, ModelParams, Site};
use crate::rng::{derive_seed, stream_rng};
use crate::stencil::Stencil;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub site: Site,
    pub time: f64,
    pub noise: f64,
}

/// Time-ordered epochs of the window `[start, end]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochList {
    pub window: (f64, f64),
    pub epochs: Vec<Epoch>,
    pub seed: u64,
}

impl EpochList {
    pub fn new(window: (f64, f64), mut epochs: Vec<Epoch>, seed: u64) -> Result<Self> {
        check_window(window)?;
        if let Some(e) = epochs
            .iter()
            .find(|e| !(e.time >= window.0 && e.time <= window.1) || !e.noise.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "epoch at {} time {} noise {} is not admissible for window {:?}",
                e.site, e.time, e.noise, window
            )));
        }
        sort_epochs(&mut epochs);
        Ok(EpochList {
            window,
            epochs,
            seed,
        })
    }

    pub fn empty(window: (f64, f64)) -> Result<Self> {
        Self::new(window, Vec::new(), 0)
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.window.0
    }

    pub fn end(&self) -> f64 {
        self.window.1
    }

    /// Epochs with time in `[from, to]`, as a list over that window.
    pub fn restricted(&self, from: f64, to: f64) -> Result<EpochList> {
        check_window((from, to))?;
        Ok(EpochList {
            window: (from, to),
            epochs: self
                .epochs
                .iter()
                .filter(|e| e.time >= from && e.time <= to)
                .cloned()
                .collect(),
            seed: self.seed,
        })
    }

    /// A copy with the noise marks replaced (same order as the epochs).
    pub fn with_noises(&self, noises: &[f64]) -> Result<EpochList> {
        if noises.len() != self.epochs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} noises for {} epochs",
                noises.len(),
                self.epochs.len()
            )));
        }
        let mut out = self.clone();
        for (e, &n) in out.epochs.iter_mut().zip(noises) {
            e.noise = n;
        }
        Ok(out)
    }
}

fn check_window(window: (f64, f64)) -> Result<()> {
    if !(window.0 < window.1) || !window.0.is_finite() || !window.1.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "window must satisfy start < end, got {window:?}"
        )));
    }
    Ok(())
}

fn sort_epochs(epochs: &mut [Epoch]) {
    epochs.sort_by(|a, b| a.time.total_cmp(&b.time).then_with(|| a.site.cmp(&b.site)));
}

/// Rate-1 Poisson epochs on every site of the box over `window`, each with a
/// `N(0, σ²)` mark. Site number `k` (lexicographic) uses the stream
/// `derive_seed(seed, k)`.
pub fn generate_epochs(
    bx: &LatticeBox,
    window: (f64, f64),
    params: &ModelParams,
    seed: u64,
) -> Result<EpochList> {
    check_window(window)?;
    let sigma = params.sigma2().sqrt();
    let mut epochs = Vec::new();
    for (k, site) in bx.sites().into_iter().enumerate() {
        let mut rng = stream_rng(seed, k as u64);
        let mut t = window.0;
        loop {
            let gap: f64 = Exp1.sample(&mut rng);
            t += gap;
            if t >= window.1 {
                break;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            epochs.push(Epoch {
                site: site.clone(),
                time: t,
                noise: sigma * z,
            });
        }
    }
    sort_epochs(&mut epochs);
    Ok(EpochList {
        window,
        epochs,
        seed,
    })
}

/// Dense forward simulator over a fixed box, boundary condition and data.
#[derive(Clone, Debug)]
pub struct Simulator {
    stencil: Stencil,
    y: Vec<f64>,
    d: Vec<f64>,
    params: ModelParams,
}

impl Simulator {
    pub fn new(
        bx: &LatticeBox,
        y: &HeightField,
        d: &HeightField,
        params: &ModelParams,
        kernel: &Kernel,
    ) -> Result<Self> {
        let stencil = Stencil::new(bx, kernel)?;
        let y = stencil.dense_shell(y)?;
        let d = stencil.dense(d)?;
        Ok(Simulator {
            stencil,
            y,
            d,
            params: *params,
        })
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    /// Conditional mean `z̄(i)` given the current state.
    pub fn local_mean(&self, state: &[f64], idx: usize) -> f64 {
        self.params.alpha() * self.stencil.neighbor_average(idx, state, &self.y)
            + self.params.h() * self.d[idx]
    }

    pub fn step(&self, state: &mut [f64], idx: usize, noise: f64) {
        state[idx] = self.local_mean(state, idx) + noise;
    }

    /// Applies every epoch in time order.
    pub fn run(&self, state: &mut [f64], epochs: &EpochList) -> Result<()> {
        for e in &epochs.epochs {
            let idx = self.stencil.index_of(&e.site)?;
            self.step(state, idx, e.noise);
        }
        Ok(())
    }

    /// Runs the epochs and records the state at each time in `times`
    /// (ascending, inside the window).
    pub fn run_snapshots(
        &self,
        state: &mut [f64],
        epochs: &EpochList,
        times: &[f64],
    ) -> Result<Vec<(f64, Vec<f64>)>> {
        let mut out = Vec::with_capacity(times.len());
        let mut next = epochs.epochs.iter().peekable();
        for &t in times {
            while let Some(e) = next.peek() {
                if e.time > t {
                    break;
                }
                let idx = self.stencil.index_of(&e.site)?;
                self.step(state, idx, e.noise);
                next.next();
            }
            out.push((t, state.to_vec()));
        }
        for e in next {
            let idx = self.stencil.index_of(&e.site)?;
            self.step(state, idx, e.noise);
        }
        Ok(out)
    }
}

/// One heat-bath update at `epoch.site`; all other heights are copied.
pub fn heat_bath_step(
    state: &HeightField,
    epoch: &Epoch,
    bx: &LatticeBox,
    y: &HeightField,
    d: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<HeightField> {
    if !bx.contains(&epoch.site) {
        return Err(Error::SiteOutsideBox {
            site: epoch.site.clone(),
        });
    }
    let mut avg = 0.0;
    for (j, w) in kernel.neighbors(&epoch.site) {
        let v = if bx.contains(&j) { state.get(&j)? } else { y.get(&j)? };
        avg += w * v;
    }
    let value = params.alpha() * avg + params.h() * d.get(&epoch.site)? + epoch.noise;
    let mut next = state.clone();
    next.set(epoch.site.clone(), value);
    Ok(next)
}

/// Log-density of the heat-bath transition that sets site `k` to `new_value`
/// from `state`: `log N(new_value; z̄(k), σ²)`.
pub fn heat_bath_log_density(
    sim: &Simulator,
    state: &[f64],
    k: usize,
    new_value: f64,
) -> f64 {
    let s2 = sim.params.sigma2();
    let mean = sim.local_mean(state, k);
    -(new_value - mean).powi(2) / (2.0 * s2) - 0.5 * (2.0 * std::f64::consts::PI * s2).ln()
}

/// Simulates the window `(s, t)` from `z_init`, returning the final state and
/// the consumed epochs.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    bx: &LatticeBox,
    z_init: &HeightField,
    y: &HeightField,
    d: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
    window: (f64, f64),
    seed: u64,
) -> Result<(HeightField, EpochList)> {
    let epochs = generate_epochs(bx, window, params, seed)?;
    let final_state = simulate_epochs(bx, z_init, y, d, params, kernel, &epochs)?;
    Ok((final_state, epochs))
}

/// Forward simulation over a given epoch list.
pub fn simulate_epochs(
    bx: &LatticeBox,
    z_init: &HeightField,
    y: &HeightField,
    d: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
    epochs: &EpochList,
) -> Result<HeightField> {
    let sim = Simulator::new(bx, y, d, params, kernel)?;
    let mut state = sim.stencil().dense(z_init)?;
    sim.run(&mut state, epochs)?;
    Ok(sim.stencil().field(&state))
}

/// Rows are configurations on `Λ` in lexicographic site order.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    pub sites: Vec<Site>,
    pub rows: Vec<Vec<f64>>,
}

impl SampleMatrix {
    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn means(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        let mut mean = vec![0.0; self.sites.len()];
        for r in &self.rows {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Unbiased sample covariance.
    #[allow(clippy::needless_range_loop)]
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let mean = self.means();
        let p = self.sites.len();
        let mut cov = vec![vec![0.0; p]; p];
        for r in &self.rows {
            for a in 0..p {
                let da = r[a] - mean[a];
                for b in a..p {
                    cov[a][b] += da * (r[b] - mean[b]);
                }
            }
        }
        let denom = (self.rows.len().max(2) - 1) as f64;
        for a in 0..p {
            for b in a..p {
                cov[a][b] /= denom;
                cov[b][a] = cov[a][b];
            }
        }
        cov
    }
}

/// Burn-in and thinning schedule in model time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub burn_in: f64,
    pub thin: f64,
    pub n_samples: usize,
}

/// One long trajectory from `y`-independent zero initial state: runs for
/// `burn_in`, then records the state every `thin` time units. Segment `k`
/// uses the epoch stream `derive_seed(seed, k)`.
pub fn sample_stationary(
    bx: &LatticeBox,
    y: &HeightField,
    d: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
    plan: &SamplingPlan,
    seed: u64,
) -> Result<SampleMatrix> {
    if !(plan.burn_in > 0.0 && plan.thin > 0.0) || plan.n_samples == 0 {
        return Err(Error::InvalidArgument(
            "burn_in and thin must be positive and n_samples at least 1".into(),
        ));
    }
    let sim = Simulator::new(bx, y, d, params, kernel)?;
    let mut state = vec![0.0; sim.stencil().len()];
    let burn = generate_epochs(bx, (0.0, plan.burn_in), params, derive_seed(seed, 0))?;
    sim.run(&mut state, &burn)?;
    let mut rows = Vec::with_capacity(plan.n_samples);
    let mut t = plan.burn_in;
    for k in 0..plan.n_samples {
        let seg = generate_epochs(bx, (t, t + plan.thin), params, derive_seed(seed, k as u64 + 1))?;
        sim.run(&mut state, &seg)?;
        rows.push(state.clone());
        t += plan.thin;
    }
    Ok(SampleMatrix {
        sites: sim.stencil().sites().to_vec(),
        rows,
    })
}

/// Draws a uniform field on `sites` with values in `[lo, hi)`.
pub fn uniform_field(sites: impl IntoIterator<Item = Site>, lo: f64, hi: f64, seed: u64) -> HeightField {
    let mut rng = stream_rng(seed, 0);
    sites
        .into_iter()
        .map(|s| (s, lo + (hi - lo) * rng.random::<f64>()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(c: i64) -> Site {
        Site::new([c])
    }

    fn setup() -> (Kernel, ModelParams) {
        (Kernel::nearest_neighbor(1), ModelParams::with_alpha(0.5).unwrap())
    }

    #[test]
    fn tiny_window_is_almost_always_empty() {
        let (_, p) = setup();
        let bx = LatticeBox::interval(0, 9, 1).unwrap();
        let nonempty = (0..100)
            .filter(|&seed| !generate_epochs(&bx, (0.0, 1e-15), &p, seed).unwrap().is_empty())
            .count();
        assert_eq!(nonempty, 0);
    }

    #[test]
    fn epochs_replay_and_are_sorted() {
        let (_, p) = setup();
        let bx = LatticeBox::centered(2, 2, 1).unwrap();
        let a = generate_epochs(&bx, (1.0, 4.0), &p, 5).unwrap();
        let b = generate_epochs(&bx, (1.0, 4.0), &p, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.epochs.windows(2).all(|w| w[0].time <= w[1].time));
        assert!(a.epochs.iter().all(|e| e.time > 1.0 && e.time < 4.0));
        assert!(generate_epochs(&bx, (1.0, 1.0), &p, 5).is_err());
    }

    #[test]
    fn heat_bath_step_examples() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(-1, 1, 1).unwrap();
        let y = HeightField::constant(bx.shell(), 0.0);
        let d = HeightField::constant(bx.sites(), 0.0);
        let state = HeightField::from_pairs([(s(-1), 1.0), (s(0), 9.0), (s(1), 3.0)]).unwrap();
        let e = Epoch {
            site: s(0),
            time: 0.5,
            noise: 0.3,
        };
        let next = heat_bath_step(&state, &e, &bx, &y, &d, &p, &k).unwrap();
        assert!((next.get(&s(0)).unwrap() - 1.3).abs() < 1e-15);
        assert_eq!(next.get(&s(-1)).unwrap().to_bits(), 1f64.to_bits());
        assert_eq!(next.get(&s(1)).unwrap().to_bits(), 3f64.to_bits());

        let zero = HeightField::constant(bx.sites(), 0.0);
        let quiet = Epoch { noise: 0.0, ..e };
        let next = heat_bath_step(&zero, &quiet, &bx, &y, &d, &p, &k).unwrap();
        assert_eq!(next.get(&s(0)).unwrap(), 0.0);
    }

    #[test]
    fn simulate_base_cases() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(0, 3, 1).unwrap();
        let y = HeightField::constant(bx.shell(), 1.0);
        let d = HeightField::from_fn(bx.sites(), |s| s.coords()[0] as f64);
        let z = uniform_field(bx.sites(), -1.0, 1.0, 3);

        let empty = EpochList::empty((0.0, 1.0)).unwrap();
        assert_eq!(simulate_epochs(&bx, &z, &y, &d, &p, &k, &empty).unwrap(), z);

        let e = Epoch {
            site: s(2),
            time: 0.5,
            noise: -0.7,
        };
        let one = EpochList::new((0.0, 1.0), vec![e.clone()], 0).unwrap();
        assert_eq!(
            simulate_epochs(&bx, &z, &y, &d, &p, &k, &one).unwrap(),
            heat_bath_step(&z, &e, &bx, &y, &d, &p, &k).unwrap()
        );

        let (a, ea) = simulate(&bx, &z, &y, &d, &p, &k, (0.0, 5.0), 9).unwrap();
        let (b, eb) = simulate(&bx, &z, &y, &d, &p, &k, (0.0, 5.0), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(ea, eb);
    }

    #[test]
    fn snapshots_end_in_the_final_state() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(0, 3, 1).unwrap();
        let y = HeightField::constant(bx.shell(), 0.0);
        let d = HeightField::constant(bx.sites(), 1.0);
        let sim = Simulator::new(&bx, &y, &d, &p, &k).unwrap();
        let epochs = generate_epochs(&bx, (0.0, 4.0), &p, 1).unwrap();
        let mut a = vec![0.0; 4];
        let snaps = sim.run_snapshots(&mut a, &epochs, &[1.0, 2.0, 4.0]).unwrap();
        let mut b = vec![0.0; 4];
        sim.run(&mut b, &epochs).unwrap();
        assert_eq!(snaps.last().unwrap().1, b);
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_replays() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(0, 2, 1).unwrap();
        let y = HeightField::constant(bx.shell(), 0.0);
        let d = HeightField::constant(bx.sites(), 1.0);
        let plan = SamplingPlan {
            burn_in: 5.0,
            thin: 1.0,
            n_samples: 20,
        };
        let a = sample_stationary(&bx, &y, &d, &p, &k, &plan, 4).unwrap();
        let b = sample_stationary(&bx, &y, &d, &p, &k, &plan, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 20);
    }
}
