//! Continuum (Bistritzer-MacDonald) model: plane-wave band structure, Bloch
//! functions, group velocities and split-step envelope dynamics.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelope::{Envelope, Fft2, Grid};
use crate::error::{invalid, Error, Result};
use crate::geometry::{moire_data, LatticeParams, MoireData, Vec2};
use crate::hamiltonian::HoppingModel;

type C2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Dirac velocity `v` (eV A), interlayer strength `w` (eV), twist angle
/// (rad) and the monolayer lattice constant `a` (A) fixing the moire scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BmParams {
    pub v: f64,
    pub w: f64,
    pub theta: f64,
    pub a: f64,
}

impl BmParams {
    pub fn new(v: f64, w: f64, theta: f64, a: f64) -> Result<Self> {
        let p = Self { v, w, theta, a };
        p.validate()?;
        Ok(p)
    }

    /// v = 6.6 eV A, w = 0.11 eV, theta = 1.05 degrees, a = 2.5 A.
    pub fn physical() -> Self {
        Self {
            v: 6.6,
            w: 0.11,
            theta: 1.05_f64.to_radians(),
            a: 2.5,
        }
    }

    /// v = (3/2) t0 delta and w = hhat(K; L) / |Gamma|.
    pub fn derived(model: &HoppingModel, lattice: &LatticeParams) -> Self {
        Self {
            v: 1.5 * model.t0 * lattice.delta(),
            w: model.fourier(lattice.dirac_momentum()) / lattice.cell_area(),
            theta: lattice.theta,
            a: lattice.a,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v > 0.0 && self.v.is_finite()) {
            return Err(invalid("v", format!("must be positive, got {}", self.v)));
        }
        if !(self.w >= 0.0 && self.w.is_finite()) {
            return Err(invalid("w", format!("must be nonnegative, got {}", self.w)));
        }
        self.lattice().validate()?;
        if self.theta == 0.0 {
            return Err(Error::DegenerateAngle { theta: 0.0 });
        }
        Ok(())
    }

    pub fn lattice(&self) -> LatticeParams {
        LatticeParams {
            a: self.a,
            theta: self.theta,
            interlayer_distance: 0.0,
        }
    }

    pub fn moire(&self) -> Result<MoireData> {
        moire_data(&self.lattice())
    }

    /// Dimensionless ratio a w / v.
    pub fn hopping_ratio(&self) -> f64 {
        self.a * self.w / self.v
    }

    /// Momentum hops s_1 = K_1 - K_2, s_2 = s_1 + b_m2, s_3 = s_1 - b_m1.
    pub fn hops(&self) -> Result<[Vec2; 3]> {
        let m = self.moire()?;
        let s1 = Vec2::new(0.0, -self.lattice().delta_k());
        Ok([s1, s1 + m.b_m2, s1 - m.b_m1])
    }
}

/// T_1, T_2, T_3 with phi = 2 pi / 3.
pub fn t_matrices() -> [C2; 3] {
    let one = c(1.0, 0.0);
    let e = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
    [
        [[one, one], [one, one]],
        [[one, e.conj()], [e, one]],
        [[one, e], [e.conj(), one]],
    ]
}

/// T(r) = w sum_n T_n e^{-i s_n . r}.
pub fn moire_potential(r: Vec2, params: &BmParams, hops: &[Vec2; 3]) -> C2 {
    let tm = t_matrices();
    let mut out = [[ZERO; 2]; 2];
    for (t, s) in tm.iter().zip(hops) {
        let ph = Complex64::from_polar(params.w, -s.dot(&r));
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] += t[i][j] * ph;
            }
        }
    }
    out
}

/// Reciprocal vectors G = n1 b_m1 + n2 b_m2 with max(|n1|, |n2|) <= cutoff.
#[derive(Clone, Debug)]
pub struct PlaneWaveBasis {
    pub cutoff: usize,
    pub moire: MoireData,
    pub s1: Vec2,
}

impl PlaneWaveBasis {
    pub fn new(params: &BmParams, cutoff: usize) -> Result<Self> {
        params.validate()?;
        if cutoff < 1 {
            return Err(invalid("cutoff", "must be at least 1"));
        }
        Ok(Self {
            cutoff,
            moire: params.moire()?,
            s1: params.hops()?[0],
        })
    }

    pub fn side(&self) -> usize {
        2 * self.cutoff + 1
    }

    /// Number of reciprocal vectors.
    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        4 * self.len()
    }

    pub fn index(&self, n1: i64, n2: i64) -> Option<usize> {
        let c = self.cutoff as i64;
        if n1.abs() > c || n2.abs() > c {
            return None;
        }
        Some(((n1 + c) * self.side() as i64 + (n2 + c)) as usize)
    }

    pub fn integers(&self, g: usize) -> (i64, i64) {
        let c = self.cutoff as i64;
        let s = self.side() as i64;
        ((g as i64) / s - c, (g as i64) % s - c)
    }

    pub fn vector(&self, g: usize) -> Vec2 {
        let (n1, n2) = self.integers(g);
        self.moire.b_m1 * n1 as f64 + self.moire.b_m2 * n2 as f64
    }
}

fn dirac_block(v: f64, q: Vec2) -> C2 {
    [[ZERO, c(v * q.x, -v * q.y)], [c(v * q.x, v * q.y), ZERO]]
}

/// Plane-wave matrix of the continuum Hamiltonian at Bloch momentum `k`.
/// Row `4 g + 2 l + s` is layer `l`, sublattice `s`, reciprocal vector `g`.
pub fn bm_matrix(k: Vec2, params: &BmParams, cutoff: usize) -> Result<Mat<Complex64>> {
    let basis = PlaneWaveBasis::new(params, cutoff)?;
    Ok(bm_matrix_in(k, params, &basis))
}

pub fn bm_matrix_in(k: Vec2, params: &BmParams, basis: &PlaneWaveBasis) -> Mat<Complex64> {
    let dim = basis.dim();
    let mut m = Mat::<Complex64>::zeros(dim, dim);
    let tm = t_matrices();
    for g in 0..basis.len() {
        let gv = basis.vector(g);
        let b1 = dirac_block(params.v, k + gv);
        let b2 = dirac_block(params.v, k + gv + basis.s1);
        for i in 0..2 {
            for j in 0..2 {
                m[(4 * g + i, 4 * g + j)] = b1[i][j];
                m[(4 * g + 2 + i, 4 * g + 2 + j)] = b2[i][j];
            }
        }
        let (n1, n2) = basis.integers(g);
        let partners = [(0usize, n1, n2), (1, n1, n2 + 1), (2, n1 - 1, n2)];
        for (t, p1, p2) in partners {
            if let Some(h) = basis.index(p1, p2) {
                for i in 0..2 {
                    for j in 0..2 {
                        let val = tm[t][i][j] * params.w;
                        m[(4 * g + i, 4 * h + 2 + j)] += val;
                        m[(4 * h + 2 + j, 4 * g + i)] += val.conj();
                    }
                }
            }
        }
    }
    m
}

/// Band label relative to charge neutrality: 0 is the lowest band above
/// zero energy (upper flat band), -1 the highest band below (lower flat
/// band), +1 the next band up, and so on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BandIndex(pub i32);

impl BandIndex {
    pub const UPPER_FLAT: BandIndex = BandIndex(0);
    pub const LOWER_FLAT: BandIndex = BandIndex(-1);
    pub const THIRD: BandIndex = BandIndex(1);

    /// Position in the ascending spectrum of a matrix of dimension `dim`.
    pub fn sorted_position(self, dim: usize) -> Result<usize> {
        let pos = dim as i64 / 2 + self.0 as i64;
        if pos < 0 || pos >= dim as i64 {
            return Err(invalid("band", format!("band {} outside spectrum of size {dim}", self.0)));
        }
        Ok(pos as usize)
    }
}

/// Ascending eigenvalues at `k`.
pub fn energies(k: Vec2, params: &BmParams, basis: &PlaneWaveBasis) -> Result<Vec<f64>> {
    let m = bm_matrix_in(k, params, basis);
    let mut e: Vec<f64> = m
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    e.sort_by(|a, b| a.total_cmp(b));
    Ok(e)
}

/// Ascending eigenvalues and the matching unit eigenvectors (columns).
pub fn eigenpairs(k: Vec2, params: &BmParams, basis: &PlaneWaveBasis) -> Result<(Vec<f64>, Mat<Complex64>)> {
    let m = bm_matrix_in(k, params, basis);
    let eig = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = eig.S();
    let u = eig.U();
    let dim = basis.dim();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| s[a].re.total_cmp(&s[b].re));
    let vals = order.iter().map(|&i| s[i].re).collect();
    let vecs = Mat::from_fn(dim, dim, |i, j| u[(i, order[j])]);
    Ok((vals, vecs))
}

/// One row of a band table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub k: Vec2,
    pub band: i32,
    pub energy: f64,
}

/// Energies of the `n_bands` bands nearest charge neutrality along a path,
/// labelled by [`BandIndex`]. `n_bands` must be even.
pub fn bands(path: &[Vec2], params: &BmParams, cutoff: usize, n_bands: usize) -> Result<Vec<BandPoint>> {
    if path.is_empty() {
        return Err(invalid("path", "must contain at least one k point"));
    }
    let basis = PlaneWaveBasis::new(params, cutoff)?;
    let half = (n_bands / 2).max(1) as i32;
    let rows: Vec<Vec<BandPoint>> = path
        .par_iter()
        .map(|k| {
            let e = energies(*k, params, &basis)?;
            (-half..half)
                .map(|b| {
                    let pos = BandIndex(b).sorted_position(e.len())?;
                    Ok(BandPoint {
                        k: *k,
                        band: b,
                        energy: e[pos],
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Named points of the moire Brillouin zone in the plane-wave frame, where
/// the layer-1 Dirac point sits at k = 0 and the layer-2 one at -s_1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryPoints {
    /// (2 b_m1 + b_m2) / 3, congruent to -s_1.
    pub k_m: Vec2,
    /// Layer-1 Dirac point.
    pub k_m_prime: Vec2,
    /// Congruent to s_1.
    pub gamma_m: Vec2,
    /// Midpoint of a K_m - K_m' edge.
    pub m_m: Vec2,
}

pub fn symmetry_points(params: &BmParams) -> Result<SymmetryPoints> {
    let m = params.moire()?;
    let s = params.hops()?;
    let k_m = m.k_m;
    let gamma_m = k_m - s[0];
    let k_m_prime = gamma_m - s[2];
    Ok(SymmetryPoints {
        k_m,
        k_m_prime,
        gamma_m,
        m_m: 0.5 * (k_m + k_m_prime),
    })
}

/// Straight-line path through `corners` with `per_segment` points per leg.
pub fn path_through(corners: &[Vec2], per_segment: usize) -> Vec<Vec2> {
    let mut out = Vec::new();
    for w in corners.windows(2) {
        for i in 0..per_segment {
            out.push(w[0] + (w[1] - w[0]) * (i as f64 / per_segment as f64));
        }
    }
    if let Some(last) = corners.last() {
        out.push(*last);
    }
    out
}

/// K_m -> Gamma_m -> M_m -> K_m' path.
pub fn high_symmetry_path(params: &BmParams, per_segment: usize) -> Result<Vec<Vec2>> {
    let p = symmetry_points(params)?;
    Ok(path_through(&[p.k_m, p.gamma_m, p.m_m, p.k_m_prime], per_segment))
}

fn band_gap(e: &[f64], pos: usize) -> f64 {
    let below = if pos > 0 { e[pos] - e[pos - 1] } else { f64::INFINITY };
    let above = if pos + 1 < e.len() { e[pos + 1] - e[pos] } else { f64::INFINITY };
    below.min(above)
}

/// Gap below which a band is treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

fn check_nondegenerate(e: &[f64], band: BandIndex) -> Result<usize> {
    let pos = band.sorted_position(e.len())?;
    let gap = band_gap(e, pos);
    if gap < DEGENERACY_TOL {
        return Err(Error::DegenerateBand { band: band.0, gap });
    }
    Ok(pos)
}

/// C2T acting on plane-wave coefficients: sublattices swap and amplitudes
/// are conjugated, with every momentum left in place.
pub fn c2t(coef: &[Complex64]) -> Vec<Complex64> {
    (0..coef.len()).map(|i| coef[i ^ 1].conj()).collect()
}

/// C2T on a grid envelope: (C2T f)_l(r) = sigma_x conj(f_l(-r)).
pub fn c2t_envelope(f: &Envelope) -> Envelope {
    let grid = *f.grid();
    let n = grid.n;
    let src = f.components();
    let mirror = |i: usize| ((n - i / n) % n) * n + (n - i % n) % n;
    let comps = [1usize, 0, 3, 2].map(|c| (0..grid.len()).map(|i| src[c][mirror(i)].conj()).collect::<Vec<_>>());
    Envelope::from_components(grid, comps).expect("same grid")
}

/// Rescales `coef` to the C2T-invariant vector closest to it, then fixes the
/// remaining sign so the largest entry has positive real part.
pub fn c2t_gauge(coef: &mut [Complex64]) {
    let norm = |v: &[Complex64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let n0 = norm(coef);
    let mut sym: Vec<Complex64> = coef.iter().zip(c2t(coef)).map(|(a, b)| 0.5 * (a + b)).collect();
    if norm(&sym) < 0.5 * n0 {
        let i = Complex64::new(0.0, 1.0);
        let rot: Vec<Complex64> = coef.iter().map(|a| a * i).collect();
        sym = rot.iter().zip(c2t(&rot)).map(|(a, b)| 0.5 * (a + b)).collect();
    }
    let ns = norm(&sym);
    if ns == 0.0 {
        return;
    }
    let big = sym.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(ZERO);
    let sign = if big.re < 0.0 { -1.0 } else { 1.0 };
    for (c, v) in coef.iter_mut().zip(&sym) {
        *c = v * (sign * n0 / ns);
    }
}

/// Bloch function Phi_n(r; k) on `grid`, normalized to unit mean square over
/// a moire cell. The coefficients are put in the C2T-invariant gauge, which
/// also selects one vector of a degenerate pair.
pub fn eigenfunction(
    band: BandIndex,
    k: Vec2,
    params: &BmParams,
    cutoff: usize,
    grid: &Grid,
) -> Result<(f64, Envelope)> {
    let basis = PlaneWaveBasis::new(params, cutoff)?;
    let (e, vecs) = eigenpairs(k, params, &basis)?;
    let pos = band.sorted_position(e.len())?;
    let mut coef: Vec<Complex64> = (0..basis.dim()).map(|i| vecs[(i, pos)]).collect();
    if band_gap(&e, pos) < DEGENERACY_TOL {
        log::info!("band {} is degenerate at k = ({}, {}); using the C2T-invariant eigenvector", band.0, k.x, k.y);
    }
    c2t_gauge(&mut coef);
    Ok((e[pos], bloch_envelope(&coef, k, &basis, grid)))
}

/// Fixes the phase so the largest entry is real and positive.
pub fn fix_phase(coef: &mut [Complex64]) {
    let big = coef
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(ZERO);
    if big.norm() > 0.0 {
        let ph = big.conj() / big.norm();
        coef.iter_mut().for_each(|v| *v *= ph);
    }
}

/// Sums the plane-wave expansion on the grid.
pub fn bloch_envelope(coef: &[Complex64], k: Vec2, basis: &PlaneWaveBasis, grid: &Grid) -> Envelope {
    let cmax = coef.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let cut = basis.cutoff as i64;
    let side = basis.side();
    let active: Vec<usize> = (0..basis.len())
        .filter(|&g| (0..4).any(|j| coef[4 * g + j].norm() > 1e-14 * cmax))
        .collect();
    let (b1, b2) = (basis.moire.b_m1, basis.moire.b_m2);
    let s1 = basis.s1;
    Envelope::from_fn(*grid, |r| {
        let z1 = Complex64::from_polar(1.0, b1.dot(&r));
        let z2 = Complex64::from_polar(1.0, b2.dot(&r));
        let mut p1 = vec![ZERO; side];
        let mut p2 = vec![ZERO; side];
        p1[cut as usize] = c(1.0, 0.0);
        p2[cut as usize] = c(1.0, 0.0);
        for i in 1..=cut as usize {
            p1[cut as usize + i] = p1[cut as usize + i - 1] * z1;
            p1[cut as usize - i] = p1[cut as usize - i + 1] * z1.conj();
            p2[cut as usize + i] = p2[cut as usize + i - 1] * z2;
            p2[cut as usize - i] = p2[cut as usize - i + 1] * z2.conj();
        }
        let mut acc = [ZERO; 4];
        for &g in &active {
            let (n1, n2) = basis.integers(g);
            let ph = p1[(n1 + cut) as usize] * p2[(n2 + cut) as usize];
            for (j, a) in acc.iter_mut().enumerate() {
                *a += coef[4 * g + j] * ph;
            }
        }
        let base = Complex64::from_polar(1.0, k.dot(&r));
        let shift = base * Complex64::from_polar(1.0, s1.dot(&r));
        [acc[0] * base, acc[1] * base, acc[2] * shift, acc[3] * shift]
    })
}

/// Finite-difference step for group velocities, relative to |b_m1|.
pub const FD_STEP: f64 = 1e-4;

/// grad_k E_n(k) by central differences (one Richardson pass).
pub fn group_velocity(band: BandIndex, k: Vec2, params: &BmParams, cutoff: usize) -> Result<Vec2> {
    let basis = PlaneWaveBasis::new(params, cutoff)?;
    let e0 = energies(k, params, &basis)?;
    let pos = check_nondegenerate(&e0, band)?;
    let h = FD_STEP * basis.moire.b_m1.norm();
    let at = |q: Vec2| -> Result<f64> { Ok(energies(q, params, &basis)?[pos]) };
    let mut grad = Vec2::zeros();
    for axis in 0..2 {
        let mut d = Vec2::zeros();
        d[axis] = 1.0;
        let diff = |step: f64| -> Result<f64> { Ok((at(k + d * step)? - at(k - d * step)?) / (2.0 * step)) };
        let coarse = diff(h)?;
        let fine = diff(0.5 * h)?;
        grad[axis] = (4.0 * fine - coarse) / 3.0;
    }
    Ok(grad)
}

/// grad_k E_n(k) = v <u| (sigma_x, sigma_y) |u> by Hellmann-Feynman.
pub fn hellmann_feynman_velocity(band: BandIndex, k: Vec2, params: &BmParams, cutoff: usize) -> Result<Vec2> {
    let basis = PlaneWaveBasis::new(params, cutoff)?;
    let (e, vecs) = eigenpairs(k, params, &basis)?;
    let pos = check_nondegenerate(&e, band)?;
    let mut gx = 0.0;
    let mut gy = 0.0;
    for blk in 0..2 * basis.len() {
        let a = vecs[(2 * blk, pos)];
        let b = vecs[(2 * blk + 1, pos)];
        let cross = a.conj() * b;
        gx += 2.0 * cross.re;
        gy += 2.0 * cross.im;
    }
    Ok(Vec2::new(params.v * gx, params.v * gy))
}

/// Slope of a conical crossing between `band` and the band below at `k`:
/// the mean over `directions` of (E_band - E_below)(k + h u) / 2h.
pub fn dirac_slope(band: BandIndex, k: Vec2, params: &BmParams, cutoff: usize, directions: usize) -> Result<f64> {
    let basis = PlaneWaveBasis::new(params, cutoff)?;
    let pos = band.sorted_position(basis.dim())?;
    if pos == 0 {
        return Err(invalid("band", "no band below"));
    }
    let h = FD_STEP * basis.moire.b_m1.norm();
    let n = directions.max(1);
    let mut total = 0.0;
    for j in 0..n {
        let ang = 2.0 * PI * j as f64 / n as f64;
        let u = Vec2::new(ang.cos(), ang.sin());
        let e = energies(k + u * h, params, &basis)?;
        total += (e[pos] - e[pos - 1]) / (2.0 * h);
    }
    Ok(total / n as f64)
}

/// Flat-band diagnostics on a uniform k grid over the moire cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatBandMetrics {
    pub grid: usize,
    pub upper_flat_width: f64,
    pub lower_flat_width: f64,
    pub upper_remote_width: f64,
    pub lower_remote_width: f64,
    pub gap_above: f64,
    pub gap_below: f64,
    /// Largest |E_j(k) + E_{-1-j}(k)| over the grid for the 8 middle bands.
    pub particle_hole_asymmetry: f64,
}

pub fn flat_band_metrics(params: &BmParams, cutoff: usize, grid: usize) -> Result<FlatBandMetrics> {
    let basis = PlaneWaveBasis::new(params, cutoff)?;
    let m = basis.moire;
    let ks: Vec<Vec2> = (0..grid * grid)
        .map(|i| {
            let (a, b) = ((i / grid) as f64 / grid as f64, (i % grid) as f64 / grid as f64);
            m.b_m1 * a + m.b_m2 * b
        })
        .collect();
    let dim = basis.dim();
    let pos = |b: i32| BandIndex(b).sorted_position(dim);
    let (p_m2, p_m1, p_0, p_1) = (pos(-2)?, pos(-1)?, pos(0)?, pos(1)?);
    let rows: Vec<Vec<f64>> = ks
        .par_iter()
        .map(|k| energies(*k, params, &basis))
        .collect::<Result<_>>()?;
    let width = |p: usize| {
        let (lo, hi) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e[p]), hi.max(e[p])));
        hi - lo
    };
    let min_of = |f: &dyn Fn(&Vec<f64>) -> f64| rows.iter().map(f).fold(f64::INFINITY, f64::min);
    let asym = rows
        .iter()
        .map(|e| (0..4).map(|j| (e[p_0 + j] + e[p_m1 - j]).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    Ok(FlatBandMetrics {
        grid,
        upper_flat_width: width(p_0),
        lower_flat_width: width(p_m1),
        upper_remote_width: width(p_1),
        lower_remote_width: width(p_m2),
        gap_above: min_of(&|e| e[p_1]) - rows.iter().map(|e| e[p_0]).fold(f64::NEG_INFINITY, f64::max),
        gap_below: rows.iter().map(|e| e[p_m1]).fold(f64::INFINITY, f64::min) - rows.iter().map(|e| e[p_m2]).fold(f64::NEG_INFINITY, f64::max),
        particle_hole_asymmetry: asym,
    })
}

/// Settings for split-step envelope evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    /// Accept when doubling the step count changes the result by less than
    /// `tol` relative to the initial norm.
    pub tol: f64,
    /// Largest time step of the first attempt (hbar/eV).
    pub initial_dt: f64,
    pub max_steps: usize,
    /// Largest admissible fraction of the squared norm in the box's outer strip.
    pub containment_limit: f64,
    #[serde(default)]
    pub splitting: Splitting,
}

/// Composition scheme of one time step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    /// Second order: K(dt/2) V(dt) K(dt/2).
    Strang,
    /// Fourth order: three Strang steps with the triple-jump weights.
    #[default]
    TripleJump,
}

impl Splitting {
    /// Substep weights of one step.
    pub fn weights(self) -> Vec<f64> {
        match self {
            Splitting::Strang => vec![1.0],
            Splitting::TripleJump => {
                let c = 2f64.cbrt();
                let w1 = 1.0 / (2.0 - c);
                vec![w1, -c * w1, w1]
            }
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Splitting::Strang => 2,
            Splitting::TripleJump => 4,
        }
    }
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            initial_dt: 0.5,
            max_steps: 1 << 16,
            containment_limit: 1e-6,
            splitting: Splitting::TripleJump,
        }
    }
}

/// Outcome of an adaptive evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub steps: usize,
    pub change_on_doubling: f64,
    pub boundary_fraction: f64,
}

/// Strang splitting of exp(-i H_BM t) on a fixed periodic grid.
#[derive(Debug)]
pub struct SplitStepper {
    params: BmParams,
    grid: Grid,
    fft: Fft2,
    hops: [Vec2; 3],
    potential: Vec<C2>,
}

/// f(M) for a 2x2 Hermitian positive semidefinite M via its eigensystem.
fn herm2_fn(m: &C2, f: impl Fn(f64) -> f64) -> C2 {
    let a = m[0][0].re;
    let d = m[1][1].re;
    let b = m[0][1];
    let h = 0.5 * (a - d);
    let r = (h * h + b.norm_sqr()).sqrt();
    if r == 0.0 {
        let v = f(a.max(0.0));
        return [[c(v, 0.0), ZERO], [ZERO, c(v, 0.0)]];
    }
    let mid = 0.5 * (a + d);
    let (lp, lm) = ((mid + r).max(0.0), (mid - r).max(0.0));
    let (x, y) = if h >= 0.0 { (c(h + r, 0.0), b.conj()) } else { (b, c(r - h, 0.0)) };
    let nrm = (x.norm_sqr() + y.norm_sqr()).sqrt();
    let (x, y) = (x / nrm, y / nrm);
    let (fp, fm) = (f(lp), f(lm));
    // P+ = v v^dagger with v = (x, y); P- = I - P+
    let p00 = x.norm_sqr();
    let p01 = x * y.conj();
    let p11 = y.norm_sqr();
    [
        [c(fm + (fp - fm) * p00, 0.0), p01 * (fp - fm)],
        [p01.conj() * (fp - fm), c(fm + (fp - fm) * p11, 0.0)],
    ]
}

fn mul2(a: &C2, b: &C2) -> C2 {
    let mut o = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    o
}

fn adj2(a: &C2) -> C2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// exp(-i tau [[0, T], [T^dagger, 0]]) as blocks (A, B, C, D).
fn potential_exp(t: &C2, tau: f64) -> [C2; 4] {
    let tt = mul2(t, &adj2(t));
    let ttd = mul2(&adj2(t), t);
    let a = herm2_fn(&tt, |l| (tau * l.sqrt()).cos());
    let d = herm2_fn(&ttd, |l| (tau * l.sqrt()).cos());
    let g = herm2_fn(&tt, |l| tau * sinc(tau * l.sqrt()));
    let mi = c(0.0, -1.0);
    let gt = mul2(&g, t);
    let b = [[gt[0][0] * mi, gt[0][1] * mi], [gt[1][0] * mi, gt[1][1] * mi]];
    let tg = mul2(&adj2(t), &g);
    let cc = [[tg[0][0] * mi, tg[0][1] * mi], [tg[1][0] * mi, tg[1][1] * mi]];
    [a, b, cc, d]
}

impl SplitStepper {
    pub fn new(params: &BmParams, grid: &Grid) -> Result<Self> {
        params.validate()?;
        let hops = params.hops()?;
        let potential = (0..grid.len())
            .into_par_iter()
            .map(|i| moire_potential(grid.point(i), params, &hops))
            .collect();
        Ok(Self {
            params: *params,
            grid: *grid,
            fft: Fft2::new(grid.n),
            hops,
            potential,
        })
    }

    pub fn hops(&self) -> &[Vec2; 3] {
        &self.hops
    }

    fn kinetic(&self, f: &mut Envelope, tau: f64) {
        let n = self.grid.n;
        let v = self.params.v;
        for comp in f.components_mut().iter_mut() {
            self.fft.forward(comp);
        }
        let [c0, c1, c2, c3] = f.components_mut();
        let apply = |a: &mut [Complex64], b: &mut [Complex64]| {
            a.par_chunks_mut(n)
                .zip(b.par_chunks_mut(n))
                .enumerate()
                .for_each(|(iy, (ra, rb))| {
                    let qy = self.grid.wavenumber(iy);
                    for ix in 0..n {
                        let qx = self.grid.wavenumber(ix);
                        let q = (qx * qx + qy * qy).sqrt();
                        let co = (v * q * tau).cos();
                        let s = v * tau * sinc(v * q * tau);
                        let (x, y) = (ra[ix], rb[ix]);
                        // -i s (sigma . q) with sigma . q = [[0, qx - i qy], [qx + i qy, 0]]
                        ra[ix] = x * co + y * c(0.0, -s) * c(qx, -qy);
                        rb[ix] = y * co + x * c(0.0, -s) * c(qx, qy);
                    }
                });
        };
        apply(c0, c1);
        apply(c2, c3);
        for comp in f.components_mut().iter_mut() {
            self.fft.inverse(comp);
        }
    }

    fn potential_table(&self, tau: f64) -> Vec<[C2; 4]> {
        self.potential.par_iter().map(|t| potential_exp(t, tau)).collect()
    }

    fn apply_potential(f: &mut Envelope, table: &[[C2; 4]]) {
        let [c0, c1, c2, c3] = f.components_mut();
        c0.par_iter_mut()
            .zip(c1.par_iter_mut())
            .zip(c2.par_iter_mut().zip(c3.par_iter_mut()))
            .zip(table.par_iter())
            .for_each(|(((u0, u1), (u2, u3)), [a, b, cc, d])| {
                let (x0, x1, x2, x3) = (*u0, *u1, *u2, *u3);
                *u0 = a[0][0] * x0 + a[0][1] * x1 + b[0][0] * x2 + b[0][1] * x3;
                *u1 = a[1][0] * x0 + a[1][1] * x1 + b[1][0] * x2 + b[1][1] * x3;
                *u2 = cc[0][0] * x0 + cc[0][1] * x1 + d[0][0] * x2 + d[0][1] * x3;
                *u3 = cc[1][0] * x0 + cc[1][1] * x1 + d[1][0] * x2 + d[1][1] * x3;
            });
    }

    /// H_BM f with spectral derivatives.
    pub fn apply(&self, f: &Envelope) -> Result<Envelope> {
        if f.grid() != &self.grid {
            return Err(invalid("envelope", "grid differs from the stepper grid"));
        }
        let n = self.grid.n;
        let v = self.params.v;
        let mut kin = f.clone();
        for comp in kin.components_mut().iter_mut() {
            self.fft.forward(comp);
        }
        let [c0, c1, c2, c3] = kin.components_mut();
        for (a, b) in [(c0, c1), (c2, c3)] {
            for i in 0..self.grid.len() {
                let q = Vec2::new(self.grid.wavenumber(i % n), self.grid.wavenumber(i / n));
                let (x, y) = (a[i], b[i]);
                a[i] = y * c(v * q.x, -v * q.y);
                b[i] = x * c(v * q.x, v * q.y);
            }
        }
        for comp in kin.components_mut().iter_mut() {
            self.fft.inverse(comp);
        }
        let [k0, k1, k2, k3] = kin.components_mut();
        for (i, t) in self.potential.iter().enumerate() {
            let u = f.at(i);
            k0[i] += t[0][0] * u[2] + t[0][1] * u[3];
            k1[i] += t[1][0] * u[2] + t[1][1] * u[3];
            k2[i] += t[0][0].conj() * u[0] + t[1][0].conj() * u[1];
            k3[i] += t[0][1].conj() * u[0] + t[1][1].conj() * u[1];
        }
        Ok(kin)
    }

    /// Fixed-step Strang evolution; returns the largest boundary fraction seen.
    pub fn run(&self, f0: &Envelope, t: f64, steps: usize) -> Result<(Envelope, f64)> {
        self.run_with(f0, t, steps, Splitting::Strang)
    }

    /// `steps` steps of the given composition; also returns the largest
    /// boundary mass fraction seen.
    pub fn run_with(&self, f0: &Envelope, t: f64, steps: usize, splitting: Splitting) -> Result<(Envelope, f64)> {
        if f0.grid() != &self.grid {
            return Err(invalid("envelope", "grid differs from the stepper grid"));
        }
        let mut f = f0.clone();
        if t == 0.0 || steps == 0 {
            return Ok((f, f0.boundary_mass_fraction()));
        }
        let dt = t / steps as f64;
        let weights = splitting.weights();
        let mut tables: Vec<(f64, Vec<[C2; 4]>)> = Vec::new();
        for &w in &weights {
            if !tables.iter().any(|(x, _)| *x == w) {
                tables.push((w, self.potential_table(w * dt)));
            }
        }
        let mut worst = f.boundary_mass_fraction();
        let mut pending = 0.0;
        for _ in 0..steps {
            for &w in &weights {
                self.kinetic(&mut f, pending + 0.5 * w * dt);
                let table = &tables.iter().find(|(x, _)| *x == w).expect("table for every weight").1;
                Self::apply_potential(&mut f, table);
                pending = 0.5 * w * dt;
            }
            worst = worst.max(f.boundary_mass_fraction());
        }
        self.kinetic(&mut f, pending);
        worst = worst.max(f.boundary_mass_fraction());
        Ok((f, worst))
    }

    /// Doubles the step count until the result stabilizes to `opts.tol`.
    pub fn evolve(&self, f0: &Envelope, t: f64, opts: &StepOptions) -> Result<(Envelope, StepReport)> {
        let norm0 = f0.l2_norm();
        let start = f0.boundary_mass_fraction();
        if start > opts.containment_limit {
            return Err(Error::Containment {
                fraction: start,
                limit: opts.containment_limit,
            });
        }
        if t == 0.0 || norm0 == 0.0 {
            return Ok((
                f0.clone(),
                StepReport {
                    steps: 0,
                    change_on_doubling: 0.0,
                    boundary_fraction: start,
                },
            ));
        }
        let mut steps = ((t.abs() / opts.initial_dt).ceil() as usize).max(1);
        let (mut prev, _) = self.run_with(f0, t, steps, opts.splitting)?;
        loop {
            steps *= 2;
            if steps > opts.max_steps {
                return Err(Error::NonConvergence {
                    cap: opts.max_steps,
                    tol: opts.tol,
                });
            }
            let (next, worst) = self.run_with(f0, t, steps, opts.splitting)?;
            let change = next.distance(&prev)? / norm0;
            if worst > opts.containment_limit {
                return Err(Error::Containment {
                    fraction: worst,
                    limit: opts.containment_limit,
                });
            }
            if change < opts.tol {
                return Ok((
                    next,
                    StepReport {
                        steps,
                        change_on_doubling: change,
                        boundary_fraction: worst,
                    },
                ));
            }
            prev = next;
        }
    }

    /// Envelopes at increasing times, each advanced from the previous.
    pub fn snapshots(&self, f0: &Envelope, times: &[f64], opts: &StepOptions) -> Result<Vec<(Envelope, StepReport)>> {
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !(*t >= 0.0)) {
            return Err(invalid("times", "must be nonnegative and strictly increasing"));
        }
        let mut out = Vec::with_capacity(times.len());
        let mut cur = f0.clone();
        let mut now = 0.0;
        for &t in times {
            let (next, rep) = self.evolve(&cur, t - now, opts)?;
            cur = next;
            now = t;
            out.push((cur.clone(), rep));
        }
        Ok(out)
    }
}

/// Convenience wrapper: evolve `f0` for time `t`.
pub fn evolve_envelope(f0: &Envelope, t: f64, params: &BmParams, opts: &StepOptions) -> Result<(Envelope, StepReport)> {
    SplitStepper::new(params, f0.grid())?.evolve(f0, t, opts)
}
