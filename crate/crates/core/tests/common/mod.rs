#![allow(dead_code)]

use harness_core::dynamics::uniform_field;
use harness_core::{HeightField, Kernel, LatticeBox, ModelParams, Site};

pub fn s1(c: i64) -> Site {
    Site::new([c])
}

/// Box, boundary field on its shell, data and initial condition on the box,
/// all uniform in [-1, 1) from `seed`.
pub struct Instance {
    pub bx: LatticeBox,
    pub kernel: Kernel,
    pub params: ModelParams,
    pub y: HeightField,
    pub d: HeightField,
    pub z: HeightField,
}

pub fn instance(bx: LatticeBox, alpha: f64, seed: u64) -> Instance {
    let kernel = Kernel::nearest_neighbor(bx.dim());
    let params = ModelParams::with_alpha(alpha).unwrap();
    let y = uniform_field(bx.shell(), -1.0, 1.0, seed.wrapping_mul(3) + 1);
    let d = uniform_field(bx.sites(), -1.0, 1.0, seed.wrapping_mul(3) + 2);
    let z = uniform_field(bx.sites(), -1.0, 1.0, seed.wrapping_mul(3) + 3);
    Instance {
        bx,
        kernel,
        params,
        y,
        d,
        z,
    }
}

/// Symmetric range-3 kernel in 1D with weights on ±1 and ±2.
pub fn two_step_kernel(w1: f64) -> Kernel {
    let w2 = 0.5 - w1;
    let raw = [(1, w1), (-1, w1), (2, w2), (-2, w2)]
        .into_iter()
        .map(|(o, w)| (Site::new([o]), w))
        .collect();
    harness_core::lattice::validate_kernel(&raw, 3).unwrap()
}
