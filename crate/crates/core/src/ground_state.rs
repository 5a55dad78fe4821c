//! Ground states of the Hamiltonian: the harmonic field `m = K d` in infinite
//! volume and the finite-volume solution `m_Λ + r_Λ` of
//! `(I - αP_Λ) m = α (P y)|_∂ + (1 - α) d`.
//!
//! `K` is the killing distribution of the discrete-time walk that at every
//! step dies where it stands with probability `1 - α` and otherwise jumps
//! according to `p`. In finite volume the walk is also absorbed on the shell.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{HeightField, Kernel, LatticeBox, ModelParams, Site};
use crate::rng::stream_rng;
use crate::stencil::{Link, Stencil};

/// Largest box handled by the dense solvers.
pub const DENSE_LIMIT: usize = 4096;
/// Hard cap on the length of a single Monte Carlo walk.
pub const WALK_STEP_CAP: usize = 1_000_000;
/// Roundoff allowance in the decay bound check.
const DECAY_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteMass {
    pub site: Site,
    pub mass: f64,
}

/// Killing and absorption distribution of the walk started at `start`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub start: Site,
    /// `K_Λ(i, j)` for `j ∈ Λ`.
    pub killed: Vec<SiteMass>,
    /// Absorption probabilities on shell sites.
    pub absorbed: Vec<SiteMass>,
    pub truncation_mass: f64,
}

impl KernelRow {
    pub fn total(&self) -> f64 {
        self.killed.iter().map(|e| e.mass).sum::<f64>()
            + self.absorbed.iter().map(|e| e.mass).sum::<f64>()
            + self.truncation_mass
    }

    pub fn killed_at(&self, site: &Site) -> f64 {
        lookup(&self.killed, site)
    }

    pub fn absorbed_at(&self, site: &Site) -> f64 {
        lookup(&self.absorbed, site)
    }

    /// `(Σ_j K(i,j) d(j), Σ_k K(i,k) y(k))`, i.e. `(m_Λ(i), r_Λ(i))`.
    pub fn recompose(&self, d: &HeightField, y: &HeightField) -> Result<(f64, f64)> {
        let mut data = 0.0;
        for e in &self.killed {
            if e.mass != 0.0 {
                data += e.mass * d.get(&e.site)?;
            }
        }
        let mut boundary = 0.0;
        for e in &self.absorbed {
            if e.mass != 0.0 {
                boundary += e.mass * y.get(&e.site)?;
            }
        }
        Ok((data, boundary))
    }
}

fn lookup(entries: &[SiteMass], site: &Site) -> f64 {
    entries
        .iter()
        .find(|e| &e.site == site)
        .map(|e| e.mass)
        .unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Jacobi,
    Neumann,
    ExactSolve,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundStateResult {
    pub m: HeightField,
    /// `sup |m - αP m - αP y - (1 - α) d|` on `Λ`.
    pub residual_inf: f64,
    pub iterations: usize,
    pub method: Method,
}

/// Dense problem data shared by the solvers.
struct Problem {
    stencil: Stencil,
    d: Vec<f64>,
    y: Vec<f64>,
}

impl Problem {
    fn new(
        bx: &LatticeBox,
        d: &HeightField,
        y: &HeightField,
        kernel: &Kernel,
    ) -> Result<Self> {
        let stencil = Stencil::new(bx, kernel)?;
        let d = stencil.dense(d)?;
        let y = stencil.dense_shell(y)?;
        Ok(Problem { stencil, d, y })
    }

    /// `α (P y)|_∂ + (1 - α) d`.
    fn source(&self, params: &ModelParams) -> Vec<f64> {
        (0..self.stencil.len())
            .map(|i| {
                params.alpha() * self.stencil.boundary_average(i, &self.y)
                    + params.h() * self.d[i]
            })
            .collect()
    }

    fn result(&self, m: Vec<f64>, params: &ModelParams, iterations: usize, method: Method) -> GroundStateResult {
        let residual_inf = fixed_point_residual(&self.stencil, &m, &self.y, &self.d, params);
        GroundStateResult {
            m: self.stencil.field(&m),
            residual_inf,
            iterations,
            method,
        }
    }
}

/// One Jacobi sweep `m ↦ αP_Λ m + α (P y)|_∂ + (1 - α) d`.
pub fn jacobi_sweep(
    stencil: &Stencil,
    m: &[f64],
    y_shell: &[f64],
    d: &[f64],
    params: &ModelParams,
) -> Vec<f64> {
    (0..stencil.len())
        .map(|i| params.alpha() * stencil.neighbor_average(i, m, y_shell) + params.h() * d[i])
        .collect()
}

/// Sup-norm of `m - (αP m + αP y + (1 - α) d)` on `Λ`.
pub fn fixed_point_residual(
    stencil: &Stencil,
    m: &[f64],
    y_shell: &[f64],
    d: &[f64],
    params: &ModelParams,
) -> f64 {
    jacobi_sweep(stencil, m, y_shell, d, params)
        .iter()
        .zip(m)
        .fold(0.0, |acc, (t, v)| acc.max((t - v).abs()))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Jacobi iteration from `m ≡ 0`.
///
/// Stops once the sweep-to-sweep change is at most `tol (1 - α)/α`; the
/// contraction factor `α` then bounds the distance to the fixed point by `tol`.
pub fn solve_jacobi(
    bx: &LatticeBox,
    d: &HeightField,
    y: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
    tol: f64,
    max_iter: usize,
) -> Result<GroundStateResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let pb = Problem::new(bx, d, y, kernel)?;
    let stop = tol * params.h() / params.alpha();
    let mut m = vec![0.0; pb.stencil.len()];
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = jacobi_sweep(&pb.stencil, &m, &pb.y, &pb.d, params);
        change = sup_diff(&next, &m);
        m = next;
        iterations += 1;
        if change <= stop {
            return Ok(pb.result(m, params, iterations, Method::Jacobi));
        }
    }
    Err(Error::NoConvergence { iterations, change })
}

/// Truncated Neumann series `Σ_{n ≤ N} (αP_Λ)^n b` for the source `b`, with `N`
/// chosen so that the tail `α^{N+1} ‖b‖_∞ / (1 - α)` is at most `tol`.
pub fn solve_neumann(
    bx: &LatticeBox,
    d: &HeightField,
    y: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
    tol: f64,
) -> Result<GroundStateResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let pb = Problem::new(bx, d, y, kernel)?;
    let source = pb.source(params);
    let scale = source.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let terms = neumann_terms(params.alpha(), scale, tol);
    let zero_shell = vec![0.0; pb.y.len()];
    let mut term = source.clone();
    let mut m = source;
    for _ in 0..terms {
        term = (0..pb.stencil.len())
            .map(|i| params.alpha() * pb.stencil.neighbor_average(i, &term, &zero_shell))
            .collect();
        m.iter_mut().zip(&term).for_each(|(a, t)| *a += t);
    }
    Ok(pb.result(m, params, terms, Method::Neumann))
}

/// Smallest `N` with `α^{N+1} mass / (1 - α) ≤ tol`.
fn neumann_terms(alpha: f64, mass: f64, tol: f64) -> usize {
    if mass == 0.0 {
        return 0;
    }
    let mut n = 0usize;
    let mut tail = alpha * mass / (1.0 - alpha);
    while tail > tol {
        tail *= alpha;
        n += 1;
    }
    n
}

fn check_dense(module: &'static str, n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        return Err(Error::SizeLimit {
            module,
            sites: n,
            limit: DENSE_LIMIT,
        });
    }
    Ok(())
}

/// `I - αP_Λ` in layout order.
pub(crate) fn system_matrix(stencil: &Stencil, params: &ModelParams) -> DMatrix<f64> {
    let n = stencil.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for &(link, w) in stencil.links(i) {
            if let Link::Inner(j) = link {
                a[(i, j)] -= params.alpha() * w;
            }
        }
    }
    a
}

/// Direct dense solve of the stationarity system.
pub fn solve_exact(
    bx: &LatticeBox,
    d: &HeightField,
    y: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<GroundStateResult> {
    check_dense("ground_state", bx.len())?;
    let pb = Problem::new(bx, d, y, kernel)?;
    let a = system_matrix(&pb.stencil, params);
    let b = DVector::from_vec(pb.source(params));
    let m = a
        .lu()
        .solve(&b)
        .ok_or(Error::FactorizationFailure)?;
    Ok(pb.result(m.as_slice().to_vec(), params, 1, Method::ExactSolve))
}

/// `(m_Λ, r_Λ)`: the data part (zero boundary) and the boundary part (zero data)
/// of the finite-volume ground state.
pub fn split_ground_state(
    bx: &LatticeBox,
    d: &HeightField,
    y: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<(HeightField, HeightField)> {
    let zero_y = y.map(|_| 0.0);
    let zero_d = d.map(|_| 0.0);
    let data = solve_exact(bx, d, &zero_y, params, kernel)?;
    let boundary = solve_exact(bx, &zero_d, y, params, kernel)?;
    Ok((data.m, boundary.m))
}

/// Exact killing/absorption distribution of the walk started at `i`.
pub fn kernel_row_exact(
    bx: &LatticeBox,
    params: &ModelParams,
    kernel: &Kernel,
    i: &Site,
) -> Result<KernelRow> {
    check_dense("ground_state", bx.len())?;
    let stencil = Stencil::new(bx, kernel)?;
    let start = stencil.index_of(i)?;
    let n = stencil.len();
    // row i of the Green function G = (I - αP_Λ)^{-1}
    let at = system_matrix(&stencil, params).transpose();
    let mut e = DVector::<f64>::zeros(n);
    e[start] = 1.0;
    let g = at.lu().solve(&e).ok_or(Error::FactorizationFailure)?;
    let killed = stencil
        .sites()
        .iter()
        .zip(g.iter())
        .map(|(s, gj)| SiteMass {
            site: s.clone(),
            mass: params.h() * gj,
        })
        .collect();
    let mut absorbed = vec![0.0; stencil.shell().len()];
    for j in 0..n {
        for &(link, w) in stencil.links(j) {
            if let Link::Shell(k) = link {
                absorbed[k] += params.alpha() * g[j] * w;
            }
        }
    }
    Ok(KernelRow {
        start: i.clone(),
        killed,
        absorbed: stencil
            .shell()
            .iter()
            .zip(absorbed)
            .map(|(s, mass)| SiteMass {
                site: s.clone(),
                mass,
            })
            .collect(),
        truncation_mass: 0.0,
    })
}

#[derive(Clone, Copy)]
enum WalkEnd {
    Killed(usize),
    Absorbed(usize),
}

fn run_walk(
    cumulative: &[Vec<(Link, f64)>],
    start: usize,
    alpha: f64,
    seed: u64,
    walk: u64,
) -> Result<WalkEnd> {
    let mut rng = stream_rng(seed, walk);
    let mut at = start;
    for _ in 0..WALK_STEP_CAP {
        if rng.random::<f64>() >= alpha {
            return Ok(WalkEnd::Killed(at));
        }
        let u: f64 = rng.random();
        let row = &cumulative[at];
        let link = row
            .iter()
            .find(|(_, c)| u < *c)
            .map(|(l, _)| *l)
            .unwrap_or_else(|| row[row.len() - 1].0);
        match link {
            Link::Inner(j) => at = j,
            Link::Shell(k) => return Ok(WalkEnd::Absorbed(k)),
        }
    }
    Err(Error::WalkCapExceeded { cap: WALK_STEP_CAP })
}

/// Empirical killing/absorption distribution from `n_walks` independent
/// walks. Walk `w` draws from its own stream `derive_seed(seed, w)`.
pub fn kernel_row_mc(
    bx: &LatticeBox,
    params: &ModelParams,
    kernel: &Kernel,
    i: &Site,
    n_walks: usize,
    seed: u64,
) -> Result<KernelRow> {
    if n_walks == 0 {
        return Err(Error::InvalidArgument("n_walks must be at least 1".into()));
    }
    let stencil = Stencil::new(bx, kernel)?;
    let start = stencil.index_of(i)?;
    let cumulative: Vec<Vec<(Link, f64)>> = (0..stencil.len())
        .map(|j| {
            let mut acc = 0.0;
            stencil
                .links(j)
                .iter()
                .map(|&(l, w)| {
                    acc += w;
                    (l, acc)
                })
                .collect()
        })
        .collect();
    let ends: Vec<WalkEnd> = (0..n_walks as u64)
        .into_par_iter()
        .map(|w| run_walk(&cumulative, start, params.alpha(), seed, w))
        .collect::<Result<_>>()?;
    let mut killed = vec![0usize; stencil.len()];
    let mut absorbed = vec![0usize; stencil.shell().len()];
    for end in ends {
        match end {
            WalkEnd::Killed(j) => killed[j] += 1,
            WalkEnd::Absorbed(k) => absorbed[k] += 1,
        }
    }
    let n = n_walks as f64;
    let to_masses = |sites: &[Site], counts: Vec<usize>| {
        sites
            .iter()
            .zip(counts)
            .map(|(s, c)| SiteMass {
                site: s.clone(),
                mass: c as f64 / n,
            })
            .collect()
    };
    Ok(KernelRow {
        start: i.clone(),
        killed: to_masses(stencil.sites(), killed),
        absorbed: to_masses(stencil.shell(), absorbed),
        truncation_mass: 0.0,
    })
}

/// `m_Λ + r_Λ` assembled site by site from exact kernel rows.
pub fn recompose_from_rows(
    bx: &LatticeBox,
    d: &HeightField,
    y: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<HeightField> {
    bx.sites()
        .into_iter()
        .map(|i| {
            let row = kernel_row_exact(bx, params, kernel, &i)?;
            let (data, boundary) = row.recompose(d, y)?;
            Ok((i, data + boundary))
        })
        .collect()
}

/// Ground state assembled from Monte Carlo kernel rows, one seed stream per site.
pub fn solve_monte_carlo(
    bx: &LatticeBox,
    d: &HeightField,
    y: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
    n_walks: usize,
    seed: u64,
) -> Result<GroundStateResult> {
    let pb = Problem::new(bx, d, y, kernel)?;
    let mut m = Vec::with_capacity(pb.stencil.len());
    for (k, i) in pb.stencil.sites().iter().enumerate() {
        let row = kernel_row_mc(bx, params, kernel, i, n_walks, crate::rng::derive_seed(seed, k as u64))?;
        let (data, boundary) = row.recompose(d, y)?;
        m.push(data + boundary);
    }
    Ok(pb.result(m, params, n_walks, Method::MonteCarlo))
}

/// Infinite-volume ground state `m = (1 - α) Σ_n (αP)^n d` for finitely
/// supported `d`, truncated so that the neglected tail is at most `tol`.
///
/// The result holds every site reached by the truncated series; at sites not
/// listed, `|m| ≤ tol`.
pub fn ground_state_infinite(
    d: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
    tol: f64,
) -> Result<HeightField> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    if let Some(s) = d.sites().find(|s| s.dim() != kernel.dim()) {
        return Err(Error::DimensionMismatch {
            expected: kernel.dim(),
            found: s.dim(),
        });
    }
    // the tail after N terms is (1-α) Σ_{n>N} α^n ‖d‖₁ ≤ α^{N+1} ‖d‖₁ / (1-α)
    let terms = neumann_terms(params.alpha(), d.l1_norm(), tol);
    let mut term: HashMap<Site, f64> = d.iter().map(|(s, v)| (s.clone(), v)).collect();
    let mut m: HashMap<Site, f64> = term.iter().map(|(s, v)| (s.clone(), params.h() * v)).collect();
    for _ in 0..terms {
        let mut next: HashMap<Site, f64> = HashMap::with_capacity(term.len() * 2);
        for (s, v) in &term {
            for (j, w) in kernel.neighbors(s) {
                *next.entry(j).or_insert(0.0) += params.alpha() * w * v;
            }
        }
        for (s, v) in &next {
            *m.entry(s.clone()).or_insert(0.0) += params.h() * v;
        }
        term = next;
    }
    let sorted: BTreeMap<Site, f64> = m.into_iter().collect();
    Ok(sorted.into_iter().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub entries_checked: usize,
    /// Smallest `bound - entry` over all entries.
    pub worst_slack: f64,
    pub worst_site: Site,
}

/// Checks `K(i,j) ≤ α^{⌊‖i - j‖/r⌋}` for every entry of the row, with `r` the
/// kernel's jump radius.
pub fn decay_bound_check(row: &KernelRow, params: &ModelParams, kernel: &Kernel) -> Result<DecayReport> {
    let radius = kernel.radius().max(1) as u64;
    let mut report = DecayReport {
        entries_checked: 0,
        worst_slack: f64::INFINITY,
        worst_site: row.start.clone(),
    };
    for e in row.killed.iter().chain(&row.absorbed) {
        let jumps = row.start.sup_dist(&e.site) / radius;
        let bound = params.alpha().powi(jumps as i32);
        if e.mass > bound + DECAY_SLACK {
            return Err(Error::BoundViolated {
                site: e.site.clone(),
                entry: e.mass,
                bound,
            });
        }
        report.entries_checked += 1;
        if bound - e.mass < report.worst_slack {
            report.worst_slack = bound - e.mass;
            report.worst_site = e.site.clone();
        }
    }
    Ok(report)
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
    fn jacobi_single_site() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(0, 0, 1).unwrap();
        let d = HeightField::constant([s(0)], 2.0);
        let y = HeightField::constant(bx.shell(), 0.0);
        let r = solve_jacobi(&bx, &d, &y, &p, &k, 1e-12, 1000).unwrap();
        assert!((r.m.get(&s(0)).unwrap() - 1.0).abs() < 1e-12);
        assert!(r.residual_inf <= 1e-12);
        assert_eq!(r.method, Method::Jacobi);
    }

    #[test]
    fn jacobi_constant_data_gives_constant() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(-3, 3, 1).unwrap();
        let d = HeightField::constant(bx.sites(), 1.5);
        let y = HeightField::constant(bx.shell(), 1.5);
        let r = solve_jacobi(&bx, &d, &y, &p, &k, 1e-10, 10_000).unwrap();
        for (_, v) in r.m.iter() {
            assert!((v - 1.5).abs() <= 1e-10);
        }
    }

    #[test]
    fn jacobi_reports_no_convergence() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(0, 3, 1).unwrap();
        let d = HeightField::constant(bx.sites(), 1.0);
        let y = HeightField::constant(bx.shell(), 0.0);
        assert!(matches!(
            solve_jacobi(&bx, &d, &y, &p, &k, 1e-14, 3),
            Err(Error::NoConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn exact_two_site_solution() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(0, 1, 1).unwrap();
        let d = HeightField::from_pairs([(s(0), 2.0), (s(1), 0.0)]).unwrap();
        let y = HeightField::constant(bx.shell(), 0.0);
        let r = solve_exact(&bx, &d, &y, &p, &k).unwrap();
        // (16/15)[[1, 1/4], [1/4, 1]] (1, 0)^T
        assert!((r.m.get(&s(0)).unwrap() - 16.0 / 15.0).abs() < 1e-14);
        assert!((r.m.get(&s(1)).unwrap() - 4.0 / 15.0).abs() < 1e-14);
        let zero = solve_exact(&bx, &d.map(|_| 0.0), &y, &p, &k).unwrap();
        assert!(zero.m.values().all(|v| v == 0.0));
    }

    #[test]
    fn exact_solve_rejects_huge_boxes() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(0, DENSE_LIMIT as i64, 1).unwrap();
        let d = HeightField::constant(bx.sites(), 0.0);
        let y = HeightField::constant(bx.shell(), 0.0);
        assert!(matches!(solve_exact(&bx, &d, &y, &p, &k), Err(Error::SizeLimit { .. })));
    }

    #[test]
    fn single_site_kernel_row_by_enumeration() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(0, 0, 1).unwrap();
        let row = kernel_row_exact(&bx, &p, &k, &s(0)).unwrap();
        assert!((row.killed_at(&s(0)) - 0.5).abs() < 1e-15);
        assert!((row.absorbed_at(&s(-1)) - 0.25).abs() < 1e-15);
        assert!((row.absorbed_at(&s(1)) - 0.25).abs() < 1e-15);
        assert!(matches!(
            kernel_row_exact(&bx, &p, &k, &s(4)),
            Err(Error::SiteOutsideBox { .. })
        ));
    }

    #[test]
    fn near_one_alpha_single_site_is_mostly_absorbed() {
        let k = Kernel::nearest_neighbor(1);
        let p = ModelParams::with_alpha(0.999).unwrap();
        let bx = LatticeBox::interval(0, 0, 1).unwrap();
        let row = kernel_row_exact(&bx, &p, &k, &s(0)).unwrap();
        let absorbed: f64 = row.absorbed.iter().map(|e| e.mass).sum();
        assert!((absorbed - 0.999).abs() < 1e-12);
    }

    #[test]
    fn mc_row_replays_with_same_seed() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(-2, 2, 1).unwrap();
        let a = kernel_row_mc(&bx, &p, &k, &s(0), 2000, 11).unwrap();
        let b = kernel_row_mc(&bx, &p, &k, &s(0), 2000, 11).unwrap();
        assert_eq!(a, b);
        assert!((a.total() - 1.0).abs() < 1e-12);
        assert!(kernel_row_mc(&bx, &p, &k, &s(0), 0, 11).is_err());
    }

    #[test]
    fn infinite_ground_state_spot_values() {
        let (k, p) = setup();
        let d = HeightField::constant([s(0)], 1.0);
        let m = ground_state_infinite(&d, &p, &k, 1e-13).unwrap();
        let sqrt3 = 3f64.sqrt();
        assert!((m.get(&s(0)).unwrap() - 1.0 / sqrt3).abs() < 1e-12);
        assert!((m.get(&s(1)).unwrap() - (2.0 - sqrt3) / sqrt3).abs() < 1e-12);
        assert!((m.get(&s(-1)).unwrap() - (2.0 - sqrt3) / sqrt3).abs() < 1e-12);
    }

    #[test]
    fn infinite_ground_state_is_linear() {
        let (k, p) = setup();
        let d = HeightField::from_pairs([(s(0), 1.0), (s(3), -0.5)]).unwrap();
        let m = ground_state_infinite(&d, &p, &k, 1e-10).unwrap();
        let m3 = ground_state_infinite(&d.scaled(-3.0), &p, &k, 1e-10).unwrap();
        // same truncation order up to the l1-dependent term count
        for (site, v) in m.iter() {
            let w = m3.get_or(site, 0.0);
            assert!((w + 3.0 * v).abs() < 1e-9, "{site}: {w} vs {}", -3.0 * v);
        }
    }

    #[test]
    fn decay_checks() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(-5, 5, 1).unwrap();
        let row = kernel_row_exact(&bx, &p, &k, &s(0)).unwrap();
        let rep = decay_bound_check(&row, &p, &k).unwrap();
        assert_eq!(rep.entries_checked, 13);
        assert!(rep.worst_slack >= 0.0);
        assert!(row.killed_at(&s(3)) <= 0.125);

        let single = LatticeBox::interval(0, 0, 1).unwrap();
        let r0 = kernel_row_exact(&single, &p, &k, &s(0)).unwrap();
        assert!(decay_bound_check(&r0, &p, &k).is_ok());

        let mut bad = row.clone();
        bad.killed.iter_mut().find(|e| e.site == s(3)).unwrap().mass = 0.2;
        assert!(matches!(
            decay_bound_check(&bad, &p, &k),
            Err(Error::BoundViolated { .. })
        ));
    }
}
