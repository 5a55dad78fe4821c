//! Dense layout of a box and its boundary shell for a given kernel.

use crate::error::{Error, Result};
use crate::lattice::{HeightField, Kernel, LatticeBox, Site};

/// Where a kernel jump from a box site lands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Link {
    Inner(usize),
    Shell(usize),
}

/// Sites of `Λ` and of its shell in lexicographic order, with every
/// kernel jump out of `Λ` resolved to a dense index.
#[derive(Clone, Debug)]
pub struct Stencil {
    bx: LatticeBox,
    sites: Vec<Site>,
    shell: Vec<Site>,
    links: Vec<Vec<(Link, f64)>>,
}

impl Stencil {
    pub fn new(bx: &LatticeBox, kernel: &Kernel) -> Result<Self> {
        if kernel.dim() != bx.dim() {
            return Err(Error::DimensionMismatch {
                expected: bx.dim(),
                found: kernel.dim(),
            });
        }
        let radius = kernel.radius();
        if radius > bx.shell_width() {
            return Err(Error::ShellTooNarrow {
                shell: bx.shell_width(),
                radius,
            });
        }
        let sites = bx.sites();
        let shell = bx.shell();
        let links = sites
            .iter()
            .map(|s| {
                kernel
                    .neighbors(s)
                    .map(|(j, w)| {
                        let link = match bx.index_of(&j) {
                            Some(k) => Link::Inner(k),
                            None => Link::Shell(
                                shell.binary_search(&j).expect("shell covers one jump"),
                            ),
                        };
                        (link, w)
                    })
                    .collect()
            })
            .collect();
        Ok(Stencil {
            bx: bx.clone(),
            sites,
            shell,
            links,
        })
    }

    pub fn lattice_box(&self) -> &LatticeBox {
        &self.bx
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn shell(&self) -> &[Site] {
        &self.shell
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn links(&self, idx: usize) -> &[(Link, f64)] {
        &self.links[idx]
    }

    pub fn index_of(&self, site: &Site) -> Result<usize> {
        self.bx
            .index_of(site)
            .ok_or_else(|| Error::SiteOutsideBox { site: site.clone() })
    }

    /// Values of `field` on `Λ` in layout order.
    pub fn dense(&self, field: &HeightField) -> Result<Vec<f64>> {
        self.sites.iter().map(|s| field.get(s)).collect()
    }

    /// Values of `field` on the shell in layout order.
    pub fn dense_shell(&self, field: &HeightField) -> Result<Vec<f64>> {
        self.shell.iter().map(|s| field.get(s)).collect()
    }

    pub fn field(&self, values: &[f64]) -> HeightField {
        self.sites.iter().cloned().zip(values.iter().copied()).collect()
    }

    /// `Σ_j p(i,j) z(j)` with `z` read from `inner` on `Λ` and `outer` on the shell.
    pub fn neighbor_average(&self, idx: usize, inner: &[f64], outer: &[f64]) -> f64 {
        self.links[idx]
            .iter()
            .map(|&(link, w)| {
                w * match link {
                    Link::Inner(k) => inner[k],
                    Link::Shell(k) => outer[k],
                }
            })
            .sum()
    }

    /// `(P y)(i)` restricted to the shell part of the jumps.
    pub fn boundary_average(&self, idx: usize, outer: &[f64]) -> f64 {
        self.links[idx]
            .iter()
            .filter_map(|&(link, w)| match link {
                Link::Shell(k) => Some(w * outer[k]),
                Link::Inner(_) => None,
            })
            .sum()
    }
}
