//! Initial conditions shared by both models, and the maps between envelopes
//! and lattice wavefunctions.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bm::{eigenfunction, BandIndex, BmParams};
use crate::envelope::{Envelope, Grid};
use crate::error::{invalid, Error, Result};
use crate::geometry::{tbg_basis, LatticeParams, SiteTable, Vec2};
use crate::nufft::TrigInterpolator;
use crate::state::LatticeState;

/// How `epsilon` maps to the Gaussian width.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthConvention {
    /// sigma_r = 1/epsilon in Angstrom.
    #[default]
    Angstrom,
    /// sigma_r = a/epsilon.
    LatticeConstant,
}

impl WidthConvention {
    pub fn sigma_r(self, epsilon: f64, a: f64) -> f64 {
        match self {
            WidthConvention::Angstrom => 1.0 / epsilon,
            WidthConvention::LatticeConstant => a / epsilon,
        }
    }

    pub fn epsilon(self, sigma_r: f64, a: f64) -> f64 {
        match self {
            WidthConvention::Angstrom => 1.0 / sigma_r,
            WidthConvention::LatticeConstant => a / sigma_r,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WavepacketKind {
    /// (c_1^A, c_1^B, c_2^A, c_2^B) G(r).
    Gaussian { coefficients: [Complex64; 4] },
    /// Phi_n(r; k) G(r).
    BandConcentrated { band: BandIndex, k: Vec2 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavepacketSpec {
    pub kind: WavepacketKind,
    pub sigma_r: f64,
    /// Plane-wave shell count used for band-concentrated packets.
    pub cutoff: usize,
}

impl WavepacketSpec {
    pub fn gaussian(coefficients: [Complex64; 4], sigma_r: f64) -> Self {
        Self {
            kind: WavepacketKind::Gaussian { coefficients },
            sigma_r,
            cutoff: 6,
        }
    }

    pub fn band(band: BandIndex, k: Vec2, sigma_r: f64) -> Self {
        Self {
            kind: WavepacketKind::BandConcentrated { band, k },
            sigma_r,
            cutoff: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_r > 0.0 && self.sigma_r.is_finite()) {
            return Err(invalid("sigma_r", format!("must be positive, got {}", self.sigma_r)));
        }
        if let WavepacketKind::Gaussian { coefficients } = self.kind {
            if coefficients.iter().all(|c| c.norm() == 0.0) {
                return Err(invalid("coefficients", "all zero"));
            }
        }
        Ok(())
    }
}

/// Four enumerated unit coefficient patterns: equal weights and the three
/// sign patterns orthogonal to it.
pub fn coefficient_patterns() -> [[Complex64; 4]; 4] {
    let h = Complex64::new(0.5, 0.0);
    [[h, h, h, h], [h, -h, h, -h], [h, h, -h, -h], [h, -h, -h, h]]
}

/// G(r) = exp(-|r|^2 / (2 sigma_r^2)).
pub fn gaussian(r: Vec2, sigma_r: f64) -> f64 {
    (-r.norm_squared() / (2.0 * sigma_r * sigma_r)).exp()
}

/// Unnormalized envelope shape of `spec` on `grid`.
pub fn envelope_shape(spec: &WavepacketSpec, bm: &BmParams, grid: &Grid) -> Result<Envelope> {
    spec.validate()?;
    if grid.side < 8.0 * spec.sigma_r {
        return Err(invalid(
            "grid",
            format!("box side {} is below 8 sigma_r = {}", grid.side, 8.0 * spec.sigma_r),
        ));
    }
    let env = match spec.kind {
        WavepacketKind::Gaussian { coefficients } => Envelope::from_fn(*grid, |r| {
            let g = gaussian(r, spec.sigma_r);
            coefficients.map(|c| c * g)
        }),
        WavepacketKind::BandConcentrated { band, k } => {
            let (_, mut phi) = eigenfunction(band, k, bm, spec.cutoff, grid)?;
            for comp in phi.components_mut().iter_mut() {
                for (i, v) in comp.iter_mut().enumerate() {
                    *v *= gaussian(grid.point(i), spec.sigma_r);
                }
            }
            phi
        }
    };
    Ok(env)
}

/// Matched initial data: the envelope `f0` and the lattice state it induces
/// on `table` cut to the disk of radius `r`.
#[derive(Clone, Debug)]
pub struct InitialCondition {
    pub envelope: Envelope,
    /// Cut to B_r; its norm is `norm_inside`.
    pub state: LatticeState,
    pub r: f64,
    /// Norm of the induced state on B_r (before the cut the norm is 1).
    pub norm_inside: f64,
    /// Norm of the induced state outside B_r.
    pub phi_r: f64,
}

/// Builds f0 scaled so that the induced lattice state on `table` has unit
/// norm, then cuts that state to B_r.
pub fn make_envelope(
    spec: &WavepacketSpec,
    bm: &BmParams,
    grid: &Grid,
    table: &Arc<SiteTable>,
    r: f64,
    containment_limit: f64,
) -> Result<InitialCondition> {
    let mut env = envelope_shape(spec, bm, grid)?;
    let frac = env.boundary_mass_fraction();
    if frac > containment_limit {
        return Err(Error::Containment {
            fraction: frac,
            limit: containment_limit,
        });
    }
    let raw = envelope_to_lattice_raw(&env, table)?;
    let n = raw.norm();
    if n == 0.0 {
        return Err(invalid("wavepacket", "induced lattice state vanishes"));
    }
    env.scale(Complex64::new(1.0 / n, 0.0));
    let mut state = LatticeState::new(table.clone(), raw.into_amplitudes().into_iter().map(|a| a / n).collect())?;
    let phi_r = state.norm_outside(r);
    state.cut_to_disk(r);
    Ok(InitialCondition {
        envelope: env,
        norm_inside: state.norm(),
        state,
        r,
        phi_r,
    })
}

/// Samples each component at its sites by trigonometric interpolation and
/// attaches e^{i K_l . x}; no normalization.
pub fn envelope_to_lattice_raw(f: &Envelope, table: &Arc<SiteTable>) -> Result<LatticeState> {
    let grid = f.grid();
    let basis = tbg_basis(table.params());
    let it = TrigInterpolator::new(grid);
    let mut amps = vec![Complex64::new(0.0, 0.0); table.len()];
    for (comp, values) in f.components().iter().enumerate() {
        let idx: Vec<usize> = (0..table.len()).filter(|&i| table.site(i).component() == comp).collect();
        if idx.is_empty() || values.iter().all(|v| v.norm() == 0.0) {
            continue;
        }
        let pts: Vec<Vec2> = idx.iter().map(|&i| table.position(i)).collect();
        let u = it.prepare(&it.coefficients(values));
        let vals: Vec<Complex64> = pts.par_iter().map(|p| it.eval_prepared(&u, *p)).collect::<Result<_>>()?;
        for (&i, v) in idx.iter().zip(vals) {
            let x = table.position(i);
            let k = basis.layer(table.site(i).layer).k;
            amps[i] = v * Complex64::from_polar(1.0, k.dot(&x));
        }
    }
    LatticeState::new(table.clone(), amps)
}

/// [`envelope_to_lattice_raw`] followed by normalization.
pub fn envelope_to_lattice(f: &Envelope, table: &Arc<SiteTable>) -> Result<LatticeState> {
    let mut s = envelope_to_lattice_raw(f, table)?;
    s.normalize();
    Ok(s)
}

/// Settings of the least-squares inversion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 500 }
    }
}

/// Radius of the monolayer Brillouin zone inscribed circle (A^-1).
fn zone_radius(params: &LatticeParams) -> f64 {
    2.0 * std::f64::consts::PI / (3f64.sqrt() * params.a)
}

/// Strips e^{i K_l . x} and least-squares fits each component by a field
/// band-limited to half the grid Nyquist wavenumber. Diagnostic only.
pub fn lattice_to_envelope(psi: &LatticeState, grid: &Grid, opts: &FitOptions) -> Result<Envelope> {
    let table = psi.table();
    let params = table.params();
    let kmax = 0.5 * grid.nyquist();
    if kmax > 0.9 * zone_radius(params) {
        log::warn!(
            "fit bandwidth {kmax:.3} A^-1 exceeds 0.9 of the lattice zone radius {:.3}; the fit is ill conditioned",
            zone_radius(params)
        );
    }
    let basis = tbg_basis(params);
    let it = TrigInterpolator::new(grid);
    let n = grid.n;
    let mask: Vec<bool> = (0..grid.len())
        .map(|i| {
            let (jx, jy) = (i % n, i / n);
            grid.wavenumber(jx).abs() < kmax && grid.wavenumber(jy).abs() < kmax
        })
        .collect();
    let mut comps: [Vec<Complex64>; 4] = Default::default();
    for (comp, out) in comps.iter_mut().enumerate() {
        let idx: Vec<usize> = (0..table.len()).filter(|&i| table.site(i).component() == comp).collect();
        let pts: Vec<Vec2> = idx.iter().map(|&i| table.position(i)).collect();
        let data: Vec<Complex64> = idx
            .iter()
            .map(|&i| {
                let k = basis.layer(table.site(i).layer).k;
                psi.amplitudes()[i] * Complex64::from_polar(1.0, -k.dot(&table.position(i)))
            })
            .collect();
        let coeffs = if data.iter().all(|v| v.norm() == 0.0) {
            vec![Complex64::new(0.0, 0.0); grid.len()]
        } else {
            cgnr(&it, &mask, &pts, &data, opts)?
        };
        *out = it.synthesize(&coeffs);
    }
    Envelope::from_components(*grid, comps)
}

/// Conjugate gradients on the normal equations A* A x = A* b, where A maps
/// masked Fourier coefficients to point values.
fn cgnr(it: &TrigInterpolator, mask: &[bool], pts: &[Vec2], b: &[Complex64], opts: &FitOptions) -> Result<Vec<Complex64>> {
    let forward = |x: &[Complex64]| -> Result<Vec<Complex64>> {
        let u = it.prepare(x);
        pts.par_iter().map(|p| it.eval_prepared(&u, *p)).collect()
    };
    let adjoint = |y: &[Complex64]| -> Result<Vec<Complex64>> {
        let mut g = it.adjoint(pts, y)?;
        for (v, m) in g.iter_mut().zip(mask) {
            if !m {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        Ok(g)
    };
    let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
    let mut x = vec![Complex64::new(0.0, 0.0); mask.len()];
    let mut r = b.to_vec();
    let mut z = adjoint(&r)?;
    let mut p = z.clone();
    let mut zz = dot(&z, &z).re;
    let target = opts.tol * zz.sqrt();
    for _ in 0..opts.max_iter {
        if zz.sqrt() <= target {
            return Ok(x);
        }
        let w = forward(&p)?;
        let ww = dot(&w, &w).re;
        if ww == 0.0 {
            break;
        }
        let alpha = zz / ww;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += pi * alpha);
        r.iter_mut().zip(&w).for_each(|(ri, wi)| *ri -= wi * alpha);
        z = adjoint(&r)?;
        let zz_new = dot(&z, &z).re;
        let beta = zz_new / zz;
        zz = zz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + *pi * beta);
    }
    if zz.sqrt() <= target * 10.0 {
        return Ok(x);
    }
    Err(Error::NonConvergence {
        cap: opts.max_iter,
        tol: opts.tol,
    })
}

/// ||Psi_BM - Psi_TB|| over the sites of `psi_tb`, with Psi_BM the raw
/// (unnormalized) lattice image of `f_bm`.
pub fn comparison_error(psi_tb: &LatticeState, f_bm: &Envelope) -> Result<f64> {
    let bm = envelope_to_lattice_raw(f_bm, psi_tb.table())?;
    bm.distance(psi_tb)
}
