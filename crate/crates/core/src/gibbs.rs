//! Closed-form Gaussian description of the finite-volume Gibbs measure.
//!
//! With density proportional to `exp{-H_Λ / (2σ²)}` the measure on `R^Λ` is
//! Gaussian with mean `(I - αP_Λ)^{-1} (α (P y)|_∂ + (1 - α) d)` and covariance
//! `σ² (I - αP_Λ)^{-1}`. The default `σ² = 1/2` gives exactly `exp{-H_Λ}`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::SampleMatrix;
use crate::error::{Error, Result};
use crate::ground_state::{system_matrix, DENSE_LIMIT};
use crate::hamiltonian::conditional_law;
use crate::lattice::{HeightField, Kernel, LatticeBox, ModelParams, Site};
use crate::rng::stream_rng;
use crate::stencil::Stencil;

#[derive(Clone, Debug)]
pub struct GaussianSpec {
    sites: Vec<Site>,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    cov_factor: Cholesky<f64, Dyn>,
    precision: DMatrix<f64>,
    /// Lower Cholesky factor of the precision matrix.
    precision_factor: DMatrix<f64>,
    sigma2: f64,
}

impl GaussianSpec {
    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn precision_factor(&self) -> &DMatrix<f64> {
        &self.precision_factor
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn index_of(&self, site: &Site) -> Result<usize> {
        self.sites
            .binary_search(site)
            .map_err(|_| Error::SiteOutsideBox { site: site.clone() })
    }

    pub fn mean_at(&self, site: &Site) -> Result<f64> {
        Ok(self.mean[self.index_of(site)?])
    }

    pub fn mean_field(&self) -> HeightField {
        self.sites.iter().cloned().zip(self.mean.iter().copied()).collect()
    }

    fn dense(&self, x: &HeightField) -> Result<DVector<f64>> {
        let v = self
            .sites
            .iter()
            .map(|s| x.get(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(v))
    }

    pub fn to_export(&self) -> GaussianExport {
        let n = self.len();
        let mut covariance = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                covariance.push(self.covariance[(i, j)]);
            }
        }
        GaussianExport {
            site_order: "lexicographic".into(),
            layout: "covariance is row-major, n x n".into(),
            sigma2: self.sigma2,
            sites: self.sites.clone(),
            mean: self.mean.iter().copied().collect(),
            covariance,
        }
    }
}

/// JSON form of a [`GaussianSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianExport {
    pub site_order: String,
    pub layout: String,
    pub sigma2: f64,
    pub sites: Vec<Site>,
    pub mean: Vec<f64>,
    pub covariance: Vec<f64>,
}

pub fn build_gaussian(
    bx: &LatticeBox,
    y: &HeightField,
    d: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<GaussianSpec> {
    if bx.len() > DENSE_LIMIT {
        return Err(Error::SizeLimit {
            module: "gibbs_exact",
            sites: bx.len(),
            limit: DENSE_LIMIT,
        });
    }
    let stencil = Stencil::new(bx, kernel)?;
    let n = stencil.len();
    let yv = stencil.dense_shell(y)?;
    let dv = stencil.dense(d)?;
    let source = DVector::from_iterator(
        n,
        (0..n).map(|i| params.alpha() * stencil.boundary_average(i, &yv) + params.h() * dv[i]),
    );
    let lu = system_matrix(&stencil, params).lu();
    let mean = lu.solve(&source).ok_or(Error::FactorizationFailure)?;
    let inv = lu
        .solve(&DMatrix::<f64>::identity(n, n))
        .ok_or(Error::FactorizationFailure)?;
    let covariance = (&inv + inv.transpose()) * (0.5 * params.sigma2());
    let cov_factor = Cholesky::new(covariance.clone()).ok_or(Error::FactorizationFailure)?;
    let precision = cov_factor.inverse();
    let precision = (&precision + precision.transpose()) * 0.5;
    let precision_factor = Cholesky::new(precision.clone())
        .ok_or(Error::FactorizationFailure)?
        .l();
    Ok(GaussianSpec {
        sites: stencil.sites().to_vec(),
        mean,
        covariance,
        cov_factor,
        precision,
        precision_factor,
        sigma2: params.sigma2(),
    })
}

/// `-(x-μ)ᵀ Σ^{-1} (x-μ)/2 - log det(2πΣ)/2`.
pub fn log_density(spec: &GaussianSpec, x: &HeightField) -> Result<f64> {
    let diff = spec.dense(x)? - &spec.mean;
    let l = spec.cov_factor.l_dirty();
    let w = l
        .solve_lower_triangular(&diff)
        .ok_or(Error::FactorizationFailure)?;
    let log_det: f64 = 2.0 * (0..spec.len()).map(|i| l[(i, i)].ln()).sum::<f64>();
    let n = spec.len() as f64;
    Ok(-0.5 * w.norm_squared() - 0.5 * (n * (2.0 * std::f64::consts::PI).ln() + log_det))
}

/// `n` independent draws `μ + L z` with `LLᵀ = Σ`; row `r` uses stream `r`.
pub fn sample_exact(spec: &GaussianSpec, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let l = spec.cov_factor.l();
    let p = spec.len();
    let rows = (0..n as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r);
            let z = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(&mut rng)));
            let x = &spec.mean + &l * z;
            x.iter().copied().collect()
        })
        .collect();
    Ok(SampleMatrix {
        sites: spec.sites.clone(),
        rows,
    })
}

/// Largest of `|mean difference|` and `|variance difference|` between the
/// Gaussian conditional of coordinate `k` (from the precision matrix) and the
/// single-site heat-bath law built from the local mean.
#[allow(clippy::too_many_arguments)]
pub fn conditional_check(
    spec: &GaussianSpec,
    k: &Site,
    x: &HeightField,
    y: &HeightField,
    d: &HeightField,
    params: &ModelParams,
    kernel: &Kernel,
) -> Result<f64> {
    let idx = spec.index_of(k)?;
    let xv = spec.dense(x)?;
    let q = &spec.precision;
    let qkk = q[(idx, idx)];
    let shift: f64 = (0..spec.len())
        .filter(|&j| j != idx)
        .map(|j| q[(idx, j)] * (xv[j] - spec.mean[j]))
        .sum();
    let gauss_mean = spec.mean[idx] - shift / qkk;
    let gauss_var = 1.0 / qkk;

    let z = y.merged(x);
    let (mean, var) = conditional_law(k, &z, d.get(k)?, params, kernel)?;
    Ok((gauss_mean - mean).abs().max((gauss_var - var).abs()))
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
    fn single_site_spec() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(0, 0, 1).unwrap();
        let y = HeightField::constant(bx.shell(), 0.0);
        let d = HeightField::constant([s(0)], 2.0);
        let g = build_gaussian(&bx, &y, &d, &p, &k).unwrap();
        assert!((g.mean()[0] - 1.0).abs() < 1e-15);
        assert!((g.covariance()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_site_covariance() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(0, 1, 1).unwrap();
        let y = HeightField::constant(bx.shell(), 0.0);
        let d = HeightField::constant(bx.sites(), 0.0);
        let g = build_gaussian(&bx, &y, &d, &p, &k).unwrap();
        let c = g.covariance();
        assert!((c[(0, 0)] - 8.0 / 15.0).abs() < 1e-14);
        assert!((c[(1, 1)] - 8.0 / 15.0).abs() < 1e-14);
        assert!((c[(0, 1)] - 2.0 / 15.0).abs() < 1e-14);
        assert_eq!(c[(0, 1)], c[(1, 0)]);
        let q = g.precision_factor();
        let rebuilt = q * q.transpose();
        assert!((rebuilt - g.precision()).amax() < 1e-12);
    }

    #[test]
    fn halving_sigma2_halves_covariance() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(0, 3, 1).unwrap();
        let y = HeightField::constant(bx.shell(), 1.0);
        let d = HeightField::from_fn(bx.sites(), |x| x.coords()[0] as f64);
        let a = build_gaussian(&bx, &y, &d, &p, &k).unwrap();
        let b = build_gaussian(&bx, &y, &d, &p.at_beta(2.0).unwrap(), &k).unwrap();
        assert!((a.mean() - b.mean()).amax() < 1e-14);
        assert!((a.covariance() * 0.5 - b.covariance()).amax() < 1e-14);
    }

    #[test]
    fn log_density_peaks_at_mean_and_is_symmetric() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(0, 3, 1).unwrap();
        let y = HeightField::constant(bx.shell(), 0.5);
        let d = HeightField::from_fn(bx.sites(), |x| x.coords()[0] as f64);
        let g = build_gaussian(&bx, &y, &d, &p, &k).unwrap();
        let mu = g.mean_field();
        let at_mean = log_density(&g, &mu).unwrap();
        let v = HeightField::from_fn(bx.sites(), |x| 0.3 - 0.2 * x.coords()[0] as f64);
        let plus: HeightField = mu.iter().map(|(s, m)| (s.clone(), m + v.get(s).unwrap())).collect();
        let minus: HeightField = mu.iter().map(|(s, m)| (s.clone(), m - v.get(s).unwrap())).collect();
        let lp = log_density(&g, &plus).unwrap();
        let lm = log_density(&g, &minus).unwrap();
        assert!(at_mean > lp);
        assert!((lp - lm).abs() < 1e-12);
    }

    #[test]
    fn samples_replay() {
        let (k, p) = setup();
        let bx = LatticeBox::interval(0, 2, 1).unwrap();
        let y = HeightField::constant(bx.shell(), 0.0);
        let d = HeightField::constant(bx.sites(), 1.0);
        let g = build_gaussian(&bx, &y, &d, &p, &k).unwrap();
        assert_eq!(sample_exact(&g, 50, 3).unwrap(), sample_exact(&g, 50, 3).unwrap());
        assert!(sample_exact(&g, 0, 3).is_err());
    }
}
