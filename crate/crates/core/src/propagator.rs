//! Time evolution exp(-i H t) psi for the truncated tight-binding system.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hamiltonian::SparseHermitian;
use crate::state::LatticeState;

/// Largest dimension for which the dense reference is allowed.
pub const DENSE_LIMIT: usize = 4000;

/// Scaling-and-squaring threshold for the degree-13 Pade approximant.
const THETA_13: f64 = 5.371920351148152;

const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DensePade,
    Chebyshev,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagatorOptions {
    pub method: Method,
    /// Target l2 error per call, relative to the initial norm.
    pub tol: f64,
    /// Strictly increasing nonnegative times for [`evolve_snapshots`].
    pub snapshot_times: Vec<f64>,
    /// Largest Chebyshev degree before giving up.
    pub max_degree: usize,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        Self {
            method: Method::Chebyshev,
            tol: 1e-10,
            snapshot_times: Vec::new(),
            max_degree: 1_000_000,
        }
    }
}

impl PropagatorOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 1e-14 && self.tol < 1e-2) {
            return Err(invalid("tol", format!("must lie in (1e-14, 1e-2), got {}", self.tol)));
        }
        if self.snapshot_times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(invalid("snapshot_times", "times must be finite and nonnegative"));
        }
        if self.snapshot_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("snapshot_times", "times must be strictly increasing"));
        }
        Ok(())
    }
}

/// J_0(x), ..., J_kmax(x) by Miller's backward recurrence, normalized with
/// J_0 + 2 sum J_2k = 1.
pub fn bessel_j_sequence(x: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    let ax = x.abs();
    if ax == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = (kmax as f64).max(ax + 20.0 * ax.cbrt() + 60.0).ceil() as usize;
    let start = start + start % 2 + 2;
    let mut vals = vec![0.0f64; start + 2];
    vals[start] = 1e-300;
    for n in (1..=start).rev() {
        vals[n - 1] = 2.0 * n as f64 / ax * vals[n] - vals[n + 1];
        if vals[n - 1].abs() > 1e250 {
            for v in vals[n - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm = vals[0] + 2.0 * vals.iter().step_by(2).skip(1).sum::<f64>();
    for (k, o) in out.iter_mut().enumerate() {
        let v = if k < vals.len() { vals[k] / norm } else { 0.0 };
        *o = if x < 0.0 && k % 2 == 1 { -v } else { v };
    }
    out
}

/// Expansion coefficients (2 - delta_k0)(-i)^k J_k(x) of exp(-i x y) in
/// Chebyshev polynomials T_k(y), truncated where the coefficient tail drops
/// below `tol`.
pub fn chebyshev_coefficients(x: f64, tol: f64, max_degree: usize) -> Result<Vec<Complex64>> {
    let ax = x.abs();
    let guess = (ax + 20.0 * ax.cbrt() + 60.0).ceil() as usize;
    if guess > max_degree.saturating_add(200) {
        return Err(Error::NonConvergence { cap: max_degree, tol });
    }
    let j = bessel_j_sequence(x, guess);
    let mut tail = 0.0;
    let mut degree = 0;
    for k in (1..j.len()).rev() {
        tail += 2.0 * j[k].abs();
        if tail > tol {
            degree = k;
            break;
        }
    }
    if degree > max_degree {
        return Err(Error::NonConvergence { cap: max_degree, tol });
    }
    let mi = Complex64::new(0.0, -1.0);
    let mut phase = Complex64::new(1.0, 0.0);
    Ok((0..=degree)
        .map(|k| {
            let c = phase * j[k] * if k == 0 { 1.0 } else { 2.0 };
            phase *= mi;
            c
        })
        .collect())
}

/// exp(-i H t) applied to `m` interleaved vectors (`x[i * m + j]`).
pub fn chebyshev_block(
    h: &SparseHermitian,
    x: &[Complex64],
    m: usize,
    t: f64,
    tol: f64,
    max_degree: usize,
) -> Result<Vec<Complex64>> {
    let n = h.dim();
    if x.len() != n * m {
        return Err(Error::DimensionMismatch {
            expected: n * m,
            got: x.len(),
        });
    }
    let rho = h.max_row_sum() * (1.0 + 1e-12);
    if rho == 0.0 || t == 0.0 {
        return Ok(x.to_vec());
    }
    let coef = chebyshev_coefficients(rho * t, tol, max_degree)?;
    let scale = 1.0 / rho;
    let mut out: Vec<Complex64> = x.iter().map(|v| v * coef[0]).collect();
    if coef.len() == 1 {
        return Ok(out);
    }
    let mut prev = x.to_vec();
    let mut cur = vec![Complex64::new(0.0, 0.0); n * m];
    h.apply_block(&prev, &mut cur, m);
    cur.iter_mut().for_each(|v| *v *= scale);
    for (o, c) in out.iter_mut().zip(&cur) {
        *o += c * coef[1];
    }
    let mut next = vec![Complex64::new(0.0, 0.0); n * m];
    for ck in &coef[2..] {
        h.apply_block(&cur, &mut next, m);
        for ((nv, pv), o) in next.iter_mut().zip(&prev).zip(out.iter_mut()) {
            *nv = *nv * (2.0 * scale) - pv;
            *o += *nv * ck;
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(out)
}

fn one_norm(a: &Mat<Complex64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn lin_comb(terms: &[(f64, &Mat<Complex64>)], identity: f64) -> Mat<Complex64> {
    let n = terms[0].1.nrows();
    Mat::from_fn(n, n, |i, j| {
        let mut v: Complex64 = terms.iter().map(|(c, m)| m[(i, j)] * *c).sum();
        if i == j {
            v += identity;
        }
        v
    })
}

/// Matrix exponential by scaling and squaring with the degree-13 diagonal
/// Pade approximant.
pub fn expm_pade13(a: &Mat<Complex64>) -> Result<Mat<Complex64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if n > DENSE_LIMIT {
        return Err(Error::TooLargeForDense { n, limit: DENSE_LIMIT });
    }
    let norm = one_norm(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let f = 0.5f64.powi(s);
    let a = Mat::from_fn(n, n, |i, j| a[(i, j)] * f);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE_13;
    let inner_u = lin_comb(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], 0.0);
    let outer_u = &a6 * &inner_u;
    let u_arg = lin_comb(&[(1.0, &outer_u), (b[7], &a6), (b[5], &a4), (b[3], &a2)], b[1]);
    let u = &a * &u_arg;
    let inner_v = lin_comb(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], 0.0);
    let outer_v = &a6 * &inner_v;
    let v = lin_comb(&[(1.0, &outer_v), (b[6], &a6), (b[4], &a4), (b[2], &a2)], b[0]);
    let p = lin_comb(&[(1.0, &v), (1.0, &u)], 0.0);
    let q = lin_comb(&[(1.0, &v), (-1.0, &u)], 0.0);
    let mut r = q.partial_piv_lu().solve(&p);
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Dense propagator exp(-i H t).
pub fn dense_propagator(h: &SparseHermitian, t: f64) -> Result<Mat<Complex64>> {
    let n = h.dim();
    if n > DENSE_LIMIT {
        return Err(Error::TooLargeForDense { n, limit: DENSE_LIMIT });
    }
    let hd = h.to_dense();
    let a = Mat::from_fn(n, n, |i, j| hd[(i, j)] * Complex64::new(0.0, -t));
    expm_pade13(&a)
}

fn check_table(h: &SparseHermitian, psi: &LatticeState) -> Result<()> {
    if psi.len() != h.dim() || psi.table().sites() != h.table().sites() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: psi.len(),
        });
    }
    Ok(())
}

/// Psi(t) = exp(-i H t) psi0.
pub fn evolve(h: &SparseHermitian, psi0: &LatticeState, t: f64, opts: &PropagatorOptions) -> Result<LatticeState> {
    Ok(evolve_block(h, std::slice::from_ref(psi0), t, opts)?.remove(0))
}

/// Evolves several states at once; the Chebyshev method shares every sparse
/// product between them.
pub fn evolve_block(
    h: &SparseHermitian,
    psis: &[LatticeState],
    t: f64,
    opts: &PropagatorOptions,
) -> Result<Vec<LatticeState>> {
    opts.validate()?;
    if !t.is_finite() {
        return Err(invalid("t", "must be finite"));
    }
    for p in psis {
        check_table(h, p)?;
    }
    let n = h.dim();
    let m = psis.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let out = match opts.method {
        Method::Chebyshev => {
            let mut x = vec![Complex64::new(0.0, 0.0); n * m];
            for (j, p) in psis.iter().enumerate() {
                for (i, a) in p.amplitudes().iter().enumerate() {
                    x[i * m + j] = *a;
                }
            }
            let y = chebyshev_block(h, &x, m, t, opts.tol, opts.max_degree)?;
            (0..m)
                .map(|j| (0..n).map(|i| y[i * m + j]).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        }
        Method::DensePade => {
            let u = dense_propagator(h, t)?;
            psis.iter()
                .map(|p| {
                    let a = p.amplitudes();
                    (0..n)
                        .map(|i| (0..n).map(|k| u[(i, k)] * a[k]).sum())
                        .collect::<Vec<_>>()
                })
                .collect()
        }
    };
    out.into_iter()
        .map(|amps| LatticeState::new(h.table().clone(), amps))
        .collect()
}

/// States at each of `opts.snapshot_times`, each advanced from the previous.
pub fn evolve_snapshots(h: &SparseHermitian, psi0: &LatticeState, opts: &PropagatorOptions) -> Result<Vec<LatticeState>> {
    Ok(evolve_snapshots_block(h, std::slice::from_ref(psi0), opts)?
        .into_iter()
        .map(|mut v| v.remove(0))
        .collect())
}

/// Snapshots for several initial states: `result[snapshot][state]`.
pub fn evolve_snapshots_block(
    h: &SparseHermitian,
    psis: &[LatticeState],
    opts: &PropagatorOptions,
) -> Result<Vec<Vec<LatticeState>>> {
    opts.validate()?;
    let mut out = Vec::with_capacity(opts.snapshot_times.len());
    let mut cur = psis.to_vec();
    let mut now = 0.0;
    for &t in &opts.snapshot_times {
        if t > now {
            cur = evolve_block(h, &cur, t - now, opts)?;
            now = t;
        }
        out.push(cur.clone());
    }
    Ok(out)
}

/// <psi, H psi>.
pub fn energy(h: &SparseHermitian, psi: &LatticeState) -> Result<f64> {
    check_table(h, psi)?;
    let mut y = vec![Complex64::new(0.0, 0.0); h.dim()];
    h.apply(psi.amplitudes(), &mut y);
    Ok(psi.amplitudes().iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LatticeParams, Layer, SiteIndex, SiteTable, Sublattice};
    use crate::hamiltonian::{assemble_disk, HoppingModel};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    // J_n(x) = (1/pi) int_0^pi cos(n s - x sin s) ds, trapezoid rule on a
    // periodic integrand.
    fn bessel_quadrature(n: usize, x: f64) -> f64 {
        let m = 4000;
        let h = PI / m as f64;
        let mut s = 0.0;
        for i in 0..=m {
            let u = i as f64 * h;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            s += w * (n as f64 * u - x * u.sin()).cos();
        }
        s * h / PI
    }

    #[test]
    fn bessel_values() {
        let j = bessel_j_sequence(1.0, 5);
        assert_relative_eq!(j[0], 0.7651976865579666, epsilon = 1e-14);
        assert_relative_eq!(j[1], 0.44005058574493355, epsilon = 1e-14);
        assert_relative_eq!(bessel_j_sequence(10.0, 5)[5], -0.2340615281867936, epsilon = 1e-13);
        assert_relative_eq!(bessel_j_sequence(100.0, 0)[0], 0.019985850304223122, epsilon = 1e-13);
        for x in [0.3, 7.0, 55.5, 480.0] {
            let j = bessel_j_sequence(x, 60);
            for n in [0usize, 1, 2, 7, 30, 60] {
                assert!((j[n] - bessel_quadrature(n, x)).abs() < 1e-12, "J_{n}({x})");
            }
            let jm = bessel_j_sequence(-x, 60);
            for n in 0..=60 {
                assert_eq!(jm[n], if n % 2 == 1 { -j[n] } else { j[n] });
            }
        }
    }

    #[test]
    fn coefficient_tail() {
        let c = chebyshev_coefficients(300.0, 1e-10, 100_000).unwrap();
        assert!(c.len() > 300 && c.len() < 400);
        assert!(matches!(
            chebyshev_coefficients(300.0, 1e-10, 100),
            Err(Error::NonConvergence { .. })
        ));
    }

    fn two_site() -> SparseHermitian {
        let p = LatticeParams::physical().with_theta(0.0);
        let t = SiteTable::from_sites(
            &p,
            vec![
                SiteIndex::new(Layer::One, Sublattice::A, 0, 0),
                SiteIndex::new(Layer::One, Sublattice::B, 0, 0),
            ],
        )
        .unwrap();
        SparseHermitian::from_entries(Arc::new(t), vec![(0, 1, Complex64::new(-3.048, 0.0))]).unwrap()
    }

    #[test]
    fn two_level_oracle() {
        let h = two_site();
        let psi0 = LatticeState::new(h.table().clone(), vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
        for method in [Method::Chebyshev, Method::DensePade] {
            let opts = PropagatorOptions {
                method,
                ..Default::default()
            };
            for t in [0.0, 0.37, 5.0, -2.0] {
                let psi = evolve(&h, &psi0, t, &opts).unwrap();
                let a = psi.amplitudes();
                let w = 3.048 * t;
                // exp(-i H t) with H = -t0 sigma_x is cos(t0 t) + i sin(t0 t) sigma_x
                assert!((a[0] - Complex64::new(w.cos(), 0.0)).norm() < 1e-10);
                assert!((a[1] - Complex64::new(0.0, w.sin())).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let h0 = two_site();
        let h = SparseHermitian::from_entries(h0.table().clone(), vec![]).unwrap();
        let psi0 = LatticeState::new(h.table().clone(), vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)]).unwrap();
        let psi = evolve(&h, &psi0, 12.0, &PropagatorOptions::default()).unwrap();
        assert_eq!(psi.distance(&psi0).unwrap(), 0.0);
    }

    #[test]
    fn pade_matches_eigendecomposition() {
        let h = assemble_disk(&LatticeParams::physical(), 5.0, &HoppingModel::physical()).unwrap();
        let n = h.dim();
        let t = 0.8;
        let u = dense_propagator(&h, t).unwrap();
        let eig = h.to_dense().self_adjoint_eigen(faer::Side::Lower).unwrap();
        let s = eig.S();
        let v = eig.U();
        for i in 0..n {
            for j in 0..n {
                let mut e = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    let lam: f64 = s[k].re;
                    e += v[(i, k)] * Complex64::from_polar(1.0, -lam * t) * v[(j, k)].conj();
                }
                assert!((e - u[(i, j)]).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn dense_limit() {
        let a = Mat::<Complex64>::zeros(DENSE_LIMIT + 1, DENSE_LIMIT + 1);
        assert!(matches!(expm_pade13(&a), Err(Error::TooLargeForDense { .. })));
    }

    #[test]
    fn options_validation() {
        let mut o = PropagatorOptions::default();
        assert!(o.validate().is_ok());
        o.tol = 1e-15;
        assert!(o.validate().is_err());
        o.tol = 1e-8;
        o.snapshot_times = vec![1.0, 1.0];
        assert!(o.validate().is_err());
    }

    #[test]
    fn block_snapshots_match_direct() {
        let h = assemble_disk(&LatticeParams::physical(), 12.0, &HoppingModel::physical()).unwrap();
        let n = h.dim();
        let mk = |s: f64| {
            let mut st = LatticeState::new(
                h.table().clone(),
                (0..n).map(|i| Complex64::new((i as f64 * s).sin(), (i as f64 * 0.3).cos())).collect(),
            )
            .unwrap();
            st.normalize();
            st
        };
        let psis = vec![mk(0.1), mk(0.7)];
        let opts = PropagatorOptions {
            snapshot_times: vec![0.0, 0.5, 2.0],
            ..Default::default()
        };
        let snaps = evolve_snapshots_block(&h, &psis, &opts).unwrap();
        assert_eq!(snaps.len(), 3);
        for (k, &t) in opts.snapshot_times.iter().enumerate() {
            for j in 0..2 {
                let direct = evolve(&h, &psis[j], t, &opts).unwrap();
                assert!(direct.distance(&snaps[k][j]).unwrap() < 3e-10);
            }
        }
        let e0 = energy(&h, &psis[0]).unwrap();
        let e1 = energy(&h, &snaps[2][0]).unwrap();
        assert!((e0 - e1).abs() < 10.0 * 1e-10 * h.max_row_sum());
    }
}
