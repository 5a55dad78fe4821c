//! Lattice geometry, jump kernels, model parameters and height fields.
//!
//! Sites live in `Z^d` and are ordered lexicographically everywhere; boxes
//! enumerate their sites in that order, which fixes every dense vector and
//! matrix layout used elsewhere in the crate.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance within which raw kernel weights are renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-9;
/// Tolerance for `p(v) == p(-v)` on raw input.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A lattice site (or an offset vector) in `Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(Vec<i64>);

impl Site {
    pub fn new(coords: impl Into<Vec<i64>>) -> Self {
        Site(coords.into())
    }

    pub fn origin(dim: usize) -> Self {
        Site(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn sup_norm(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn sup_dist(&self, other: &Site) -> u64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    /// `self + offset`.
    pub fn shifted(&self, offset: &Site) -> Site {
        Site(self.0.iter().zip(&offset.0).map(|(a, b)| a + b).collect())
    }

    /// `self - other`.
    pub fn minus(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn negated(&self) -> Site {
        Site(self.0.iter().map(|c| -c).collect())
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<i64>> for Site {
    fn from(v: Vec<i64>) -> Self {
        Site(v)
    }
}

/// An inclusive axis-aligned box `Λ` together with the width of the boundary
/// shell around it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    lower: Site,
    upper: Site,
    shell_width: u32,
}

impl LatticeBox {
    pub fn new(lower: Site, upper: Site, shell_width: u32) -> Result<Self> {
        if lower.dim() == 0 {
            return Err(Error::InvalidBox("dimension must be at least 1".into()));
        }
        if lower.dim() != upper.dim() {
            return Err(Error::DimensionMismatch {
                expected: lower.dim(),
                found: upper.dim(),
            });
        }
        if lower.coords().iter().zip(upper.coords()).any(|(l, u)| l > u) {
            return Err(Error::InvalidBox(format!("lower {lower} exceeds upper {upper}")));
        }
        if shell_width == 0 {
            return Err(Error::InvalidBox("shell width must be positive".into()));
        }
        Ok(LatticeBox {
            lower,
            upper,
            shell_width,
        })
    }

    /// The 1D box `{lo, ..., hi}`.
    pub fn interval(lo: i64, hi: i64, shell_width: u32) -> Result<Self> {
        Self::new(Site::new([lo]), Site::new([hi]), shell_width)
    }

    /// The cube `{-half, ..., half}^dim`.
    pub fn centered(dim: usize, half_width: i64, shell_width: u32) -> Result<Self> {
        Self::new(
            Site::new(vec![-half_width; dim]),
            Site::new(vec![half_width; dim]),
            shell_width,
        )
    }

    pub fn lower(&self) -> &Site {
        &self.lower
    }

    pub fn upper(&self) -> &Site {
        &self.upper
    }

    pub fn shell_width(&self) -> u32 {
        self.shell_width
    }

    pub fn dim(&self) -> usize {
        self.lower.dim()
    }

    fn extents(&self) -> impl Iterator<Item = usize> + '_ {
        self.lower
            .coords()
            .iter()
            .zip(self.upper.coords())
            .map(|(l, u)| (u - l + 1) as usize)
    }

    pub fn len(&self) -> usize {
        self.extents().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, site: &Site) -> bool {
        site.dim() == self.dim()
            && site
                .coords()
                .iter()
                .zip(self.lower.coords().iter().zip(self.upper.coords()))
                .all(|(c, (l, u))| l <= c && c <= u)
    }

    /// Row-major (lexicographic) index of `site`.
    pub fn index_of(&self, site: &Site) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let mut idx = 0usize;
        for ((c, l), n) in site
            .coords()
            .iter()
            .zip(self.lower.coords())
            .zip(self.extents())
        {
            idx = idx * n + (c - l) as usize;
        }
        Some(idx)
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let extents: Vec<usize> = self.extents().collect();
        let mut coords = vec![0i64; self.dim()];
        for k in (0..self.dim()).rev() {
            coords[k] = self.lower.coords()[k] + (idx % extents[k]) as i64;
            idx /= extents[k];
        }
        Site(coords)
    }

    /// All sites of the box in lexicographic order.
    pub fn sites(&self) -> Vec<Site> {
        (0..self.len()).map(|k| self.site_at(k)).collect()
    }

    /// Center site (rounded toward the lower corner).
    pub fn center(&self) -> Site {
        Site(
            self.lower
                .coords()
                .iter()
                .zip(self.upper.coords())
                .map(|(l, u)| l + (u - l).div_euclid(2))
                .collect(),
        )
    }

    /// Sup-distance from `site` (inside the box) to the nearest site outside it.
    pub fn distance_to_outside(&self, site: &Site) -> u64 {
        site.coords()
            .iter()
            .zip(self.lower.coords().iter().zip(self.upper.coords()))
            .map(|(c, (l, u))| ((c - l).min(u - c) + 1) as u64)
            .min()
            .unwrap_or(0)
    }

    /// The box grown by `width` on every side.
    pub fn grown(&self, width: u32) -> LatticeBox {
        let w = width as i64;
        LatticeBox {
            lower: Site(self.lower.coords().iter().map(|c| c - w).collect()),
            upper: Site(self.upper.coords().iter().map(|c| c + w).collect()),
            shell_width: self.shell_width,
        }
    }

    /// The boundary shell of width `shell_width` around the box.
    pub fn shell(&self) -> Vec<Site> {
        boundary_shell(self, self.shell_width)
    }
}

/// Sites within sup-distance `range` of the box but outside it, in
/// lexicographic order.
pub fn boundary_shell(bx: &LatticeBox, range: u32) -> Vec<Site> {
    let outer = bx.grown(range);
    outer.sites().into_iter().filter(|s| !bx.contains(s)).collect()
}

/// Finite-range, symmetric, stochastic, translation-invariant jump kernel
/// `p(i, j) = p(j - i)` without self-weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    dim: usize,
    range: u32,
    offsets: Vec<(Site, f64)>,
}

/// Validates raw offset weights and builds a [`Kernel`].
///
/// Weights whose sum is within [`RENORMALIZE_TOL`] of one are rescaled to sum
/// to one; larger deviations are rejected.
pub fn validate_kernel(raw: &BTreeMap<Site, f64>, range: u32) -> Result<Kernel> {
    let Some((first, _)) = raw.iter().next() else {
        return Err(Error::EmptyKernel);
    };
    let dim = first.dim();
    if dim == 0 {
        return Err(Error::InvalidArgument("offsets must have dimension >= 1".into()));
    }
    for (offset, &w) in raw {
        if offset.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: offset.dim(),
            });
        }
        if offset.is_origin() {
            return Err(Error::SelfLoop);
        }
        if !(w > 0.0 && w <= 1.0) {
            return Err(Error::InvalidWeight {
                offset: offset.clone(),
                weight: w,
            });
        }
        if offset.sup_norm() >= range as u64 {
            return Err(Error::RangeViolation {
                offset: offset.clone(),
                range,
            });
        }
    }
    for (offset, &w) in raw {
        let back = raw.get(&offset.negated()).copied().unwrap_or(0.0);
        if (w - back).abs() > SYMMETRY_TOL {
            return Err(Error::AsymmetricKernel {
                offset: offset.clone(),
                forward: w,
                backward: back,
            });
        }
    }
    let sum: f64 = raw.values().sum();
    if (sum - 1.0).abs() > RENORMALIZE_TOL {
        return Err(Error::NonStochastic { sum });
    }
    // symmetrize exactly, then rescale
    let offsets = raw
        .iter()
        .map(|(v, &w)| {
            let back = raw[&v.negated()];
            (v.clone(), 0.5 * (w + back) / sum)
        })
        .collect();
    Ok(Kernel {
        dim,
        range,
        offsets,
    })
}

impl Kernel {
    /// Uniform nearest-neighbour kernel `p(±e_k) = 1/(2d)`, range 2.
    pub fn nearest_neighbor(dim: usize) -> Kernel {
        let mut raw = BTreeMap::new();
        let w = 1.0 / (2 * dim) as f64;
        for k in 0..dim {
            let mut e = vec![0i64; dim];
            e[k] = 1;
            raw.insert(Site::new(e.clone()), w);
            e[k] = -1;
            raw.insert(Site::new(e), w);
        }
        validate_kernel(&raw, 2).expect("nearest-neighbour kernel is valid")
    }

    /// Builds a kernel without any validation. Only meant for negative tests
    /// that need to feed a corrupted kernel through the pipeline.
    #[doc(hidden)]
    pub fn from_raw_unchecked(dim: usize, range: u32, offsets: Vec<(Site, f64)>) -> Kernel {
        Kernel {
            dim,
            range,
            offsets,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The validation bound `R`: every offset has sup-norm `< R`.
    pub fn range(&self) -> u32 {
        self.range
    }

    /// Largest sup-norm of any offset (the length of the longest jump).
    pub fn radius(&self) -> u32 {
        self.offsets
            .iter()
            .map(|(v, _)| v.sup_norm() as u32)
            .max()
            .unwrap_or(0)
    }

    pub fn offsets(&self) -> &[(Site, f64)] {
        &self.offsets
    }

    /// `p(i, j) = p(j - i)`.
    pub fn weight(&self, from: &Site, to: &Site) -> f64 {
        let v = to.minus(from);
        self.offsets
            .iter()
            .find(|(o, _)| *o == v)
            .map(|(_, w)| *w)
            .unwrap_or(0.0)
    }

    /// Neighbours `j` of `site` with `p(site, j)`.
    pub fn neighbors<'a>(&'a self, site: &'a Site) -> impl Iterator<Item = (Site, f64)> + 'a {
        self.offsets.iter().map(move |(v, w)| (site.shifted(v), *w))
    }

    pub fn to_literal(&self) -> KernelLiteral {
        KernelLiteral {
            dim: self.dim,
            range: self.range,
            offsets: self
                .offsets
                .iter()
                .map(|(v, w)| (offset_key(v), *w))
                .collect(),
        }
    }
}

/// Mixing weight `α` and noise variance `σ²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    alpha: f64,
    sigma2: f64,
}

impl ModelParams {
    pub const DEFAULT_SIGMA2: f64 = 0.5;

    pub fn new(alpha: f64, sigma2: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParams(format!("alpha must lie in (0,1), got {alpha}")));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(ModelParams { alpha, sigma2 })
    }

    /// Parameters at the default noise variance 1/2 (inverse temperature 1).
    pub fn with_alpha(alpha: f64) -> Result<Self> {
        Self::new(alpha, Self::DEFAULT_SIGMA2)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Data weight `h = 1 - α`.
    pub fn h(&self) -> f64 {
        1.0 - self.alpha
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Inverse temperature `β = 1/(2σ²)`.
    pub fn beta(&self) -> f64 {
        1.0 / (2.0 * self.sigma2)
    }

    /// Same `α`, noise variance chosen so that the inverse temperature is `beta`.
    pub fn at_beta(&self, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParams(format!("beta must be positive, got {beta}")));
        }
        Self::new(self.alpha, 1.0 / (2.0 * beta))
    }

    /// Pair coupling `J_{i,j} = α p(i,j)`.
    pub fn coupling(&self, kernel: &Kernel, i: &Site, j: &Site) -> f64 {
        self.alpha * kernel.weight(i, j)
    }
}

/// A real-valued function on an explicit finite set of sites.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeightField {
    values: BTreeMap<Site, f64>,
}

impl HeightField {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Site, f64)>) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (s, v) in pairs {
            if values.insert(s.clone(), v).is_some() {
                return Err(Error::DuplicateSite { site: s });
            }
        }
        Ok(HeightField { values })
    }

    pub fn constant(sites: impl IntoIterator<Item = Site>, value: f64) -> Self {
        HeightField {
            values: sites.into_iter().map(|s| (s, value)).collect(),
        }
    }

    pub fn from_fn(sites: impl IntoIterator<Item = Site>, f: impl Fn(&Site) -> f64) -> Self {
        HeightField {
            values: sites
                .into_iter()
                .map(|s| {
                    let v = f(&s);
                    (s, v)
                })
                .collect(),
        }
    }

    pub fn get(&self, site: &Site) -> Result<f64> {
        self.values
            .get(site)
            .copied()
            .ok_or_else(|| Error::DomainMismatch { site: site.clone() })
    }

    pub fn get_or(&self, site: &Site, default: f64) -> f64 {
        self.values.get(site).copied().unwrap_or(default)
    }

    pub fn contains(&self, site: &Site) -> bool {
        self.values.contains_key(site)
    }

    pub fn set(&mut self, site: Site, value: f64) -> Option<f64> {
        self.values.insert(site, value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Site, f64)> {
        self.values.iter().map(|(s, v)| (s, *v))
    }

    pub fn sites(&self) -> impl Iterator<Item = &Site> {
        self.values.keys()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.values().copied()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> HeightField {
        HeightField {
            values: self.values.iter().map(|(s, v)| (s.clone(), f(*v))).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> HeightField {
        self.map(|v| c * v)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.values().map(|v| v.abs()).sum()
    }

    /// Union of two fields; values in `other` win on overlapping sites.
    pub fn merged(&self, other: &HeightField) -> HeightField {
        let mut values = self.values.clone();
        values.extend(other.values.iter().map(|(s, v)| (s.clone(), *v)));
        HeightField { values }
    }

    /// Restriction to `sites`; every site must be present.
    pub fn restricted<'a>(&self, sites: impl IntoIterator<Item = &'a Site>) -> Result<HeightField> {
        let mut values = BTreeMap::new();
        for s in sites {
            values.insert(s.clone(), self.get(s)?);
        }
        Ok(HeightField { values })
    }

    pub fn to_literal(&self) -> FieldLiteral {
        FieldLiteral {
            sites: self.values.keys().cloned().collect(),
            values: self.values.values().copied().collect(),
        }
    }
}

impl FromIterator<(Site, f64)> for HeightField {
    fn from_iter<T: IntoIterator<Item = (Site, f64)>>(iter: T) -> Self {
        HeightField {
            values: iter.into_iter().collect(),
        }
    }
}

/// `Σ_j |x(j)| α^{‖j‖/R}` with the sup-norm and no floor on the exponent.
pub fn weighted_norm(field: &HeightField, alpha: f64, range: u32) -> f64 {
    let r = range.max(1) as f64;
    field
        .iter()
        .map(|(s, v)| v.abs() * alpha.powf(s.sup_norm() as f64 / r))
        .sum()
}

/// JSON literal for a kernel, e.g. `{"dim":1,"range":2,"offsets":{"1":0.5,"-1":0.5}}`.
/// Offsets of higher-dimensional kernels are written as comma-separated
/// coordinates (`"1,0"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelLiteral {
    pub dim: usize,
    pub range: u32,
    pub offsets: BTreeMap<String, f64>,
}

impl KernelLiteral {
    pub fn parse(&self) -> Result<Kernel> {
        let mut raw = BTreeMap::new();
        for (key, &w) in &self.offsets {
            let site = parse_offset_key(key)?;
            if site.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: site.dim(),
                });
            }
            raw.insert(site, w);
        }
        validate_kernel(&raw, self.range)
    }
}

fn offset_key(v: &Site) -> String {
    v.coords()
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_offset_key(key: &str) -> Result<Site> {
    key.split(',')
        .map(|t| {
            t.trim()
                .parse::<i64>()
                .map_err(|_| Error::InvalidArgument(format!("bad offset key {key:?}")))
        })
        .collect::<Result<Vec<_>>>()
        .map(Site::new)
}

/// JSON literal for a field, e.g. `{"sites":[[0],[1]],"values":[0.0,1.0]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldLiteral {
    pub sites: Vec<Site>,
    pub values: Vec<f64>,
}

impl FieldLiteral {
    pub fn parse(&self) -> Result<HeightField> {
        if self.sites.len() != self.values.len() {
            return Err(Error::InvalidArgument(format!(
                "field literal has {} sites but {} values",
                self.sites.len(),
                self.values.len()
            )));
        }
        HeightField::from_pairs(self.sites.iter().cloned().zip(self.values.iter().copied()))
    }
}
