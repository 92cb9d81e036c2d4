//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use tbg_core::bm::SplitStepper;
use tbg_core::geometry::enumerate_sites;
use tbg_core::hamiltonian::assemble;
use tbg_core::wavepacket::{coefficient_patterns, make_envelope, WavepacketSpec};
use tbg_core::{BmParams, Envelope, Grid, HoppingModel, LatticeParams, LatticeState, SparseHermitian};

/// Physical bilayer truncated to `radius` with a centred Gaussian packet.
pub fn lattice_fixture(radius: f64, sigma_r: f64) -> (SparseHermitian, LatticeState) {
    let lattice = LatticeParams::physical();
    let hopping = HoppingModel::physical();
    let table = Arc::new(enumerate_sites(&lattice, radius).expect("valid radius"));
    let h = assemble(table.clone(), &hopping).expect("assembled");
    let bm = BmParams::derived(&hopping, &lattice);
    let grid = Grid::with_spacing(2.0 * radius + 10.0 * sigma_r, 1.5).expect("grid");
    let spec = WavepacketSpec::gaussian(coefficient_patterns()[0], sigma_r);
    let ic = make_envelope(&spec, &bm, &grid, &table, radius * 0.8, 1.0).expect("packet");
    (h, ic.state)
}

/// Split-step solver on an `n` x `n` grid with a centred Gaussian envelope.
pub fn continuum_fixture(n: usize, side: f64) -> (SplitStepper, Envelope) {
    let bm = BmParams::physical();
    let grid = Grid::new(n, side).expect("grid");
    let stepper = SplitStepper::new(&bm, &grid).expect("stepper");
    let s2 = (side / 10.0).powi(2);
    let f = Envelope::from_fn(grid, |r| {
        let g = tbg_core::Complex64::new((-r.norm_squared() / (2.0 * s2)).exp(), 0.0);
        [g, g, g, g]
    });
    (stepper, f)
}
