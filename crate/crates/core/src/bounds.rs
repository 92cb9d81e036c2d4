//! Computable resolvent-decay, propagation-speed and truncation-error bounds.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::LatticeParams;
use crate::hamiltonian::{norm_bound, HoppingModel};

/// Default splitting parameter.
pub const DEFAULT_NU: f64 = 0.5;

/// Rectangle [-half_width - d, half_width + d] x [-d, d] in the complex
/// energy plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub half_width: f64,
    pub d: f64,
    pub c_gamma: f64,
}

impl ContourSpec {
    pub fn rectangle(half_width: f64, d: f64) -> Result<Self> {
        if !(half_width >= 0.0 && half_width.is_finite()) {
            return Err(invalid("half_width", format!("must be nonnegative, got {half_width}")));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(invalid("d", format!("must be positive, got {d}")));
        }
        Ok(Self {
            half_width,
            d,
            c_gamma: 2.0 * (2.0 * half_width + 2.0 * d) + 2.0 * (2.0 * d),
        })
    }
}

/// Half width of a symmetric interval certified to contain the spectrum of
/// the infinite Hamiltonian.
pub fn spectral_half_width(model: &HoppingModel, params: &LatticeParams) -> f64 {
    norm_bound(model, params).min(model.row_sum_bound(params))
}

/// Prefactor 8 pi h e^{delta alpha0} / |Gamma| of the decay-rate equation.
fn ct_prefactor(model: &HoppingModel, params: &LatticeParams) -> f64 {
    8.0 * PI * model.decay_prefactor(params) * (params.delta() * model.alpha0).exp() / params.cell_area()
}

/// e^{delta a}/(a0 - a)^2 - 1/a0^2 written without cancellation at small a.
fn ct_shape(alpha: f64, alpha0: f64, delta: f64) -> f64 {
    let num = alpha0 * alpha0 * (delta * alpha).exp_m1() + alpha * (2.0 * alpha0 - alpha);
    num / (alpha0 * alpha0 * (alpha0 - alpha).powi(2))
}

/// Left-hand side of the decay-rate equation at `alpha`.
pub fn ct_lhs(alpha: f64, model: &HoppingModel, params: &LatticeParams) -> f64 {
    ct_prefactor(model, params) * ct_shape(alpha, model.alpha0, params.delta())
}

/// Largest admissible decay rate for resolvent entries at spectral distance
/// `d`: the root in (0, alpha0) of ct_lhs(alpha) = (1 - nu) d.
pub fn solve_alpha_max(d: f64, nu: f64, model: &HoppingModel, params: &LatticeParams) -> Result<f64> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(invalid("nu", format!("must lie in (0, 1), got {nu}")));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(invalid("d", format!("must be positive, got {d}")));
    }
    model.validate()?;
    let target = (1.0 - nu) * d;
    let (mut lo, mut hi) = (0.0, model.alpha0);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ct_lhs(mid, model, params) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * lo {
            break;
        }
    }
    let alpha = 0.5 * (lo + hi);
    if !(alpha > 0.0) || !alpha.is_normal() {
        return Err(Error::DegenerateBound { d });
    }
    Ok(alpha)
}

/// (1/(nu d)) e^{-alpha_max distance}.
pub fn resolvent_decay_bound(
    d: f64,
    nu: f64,
    distance: f64,
    model: &HoppingModel,
    params: &LatticeParams,
) -> Result<f64> {
    let alpha = solve_alpha_max(d, nu, model, params)?;
    Ok((-alpha * distance).exp() / (nu * d))
}

/// Speed-of-propagation constant 16 pi e^{delta a0} (2 + delta a0) h / (|Gamma| a0^3).
pub fn v_max(model: &HoppingModel, params: &LatticeParams) -> f64 {
    let da = params.delta() * model.alpha0;
    16.0 * PI * da.exp() * (2.0 + da) * model.decay_prefactor(params)
        / (params.cell_area() * model.alpha0.powi(3))
}

/// 4 ceil(4 r / (sqrt 3 a))^2 orbitals cover the disk of radius `r`.
pub fn counting_bound(r: f64, params: &LatticeParams) -> u64 {
    let n = (4.0 * r / (3f64.sqrt() * params.a)).ceil().max(0.0) as u64;
    4 * n * n
}

/// C_1(alpha, R) = e^{delta alpha} (1 + 2 R alpha - 2 delta alpha)^{1/2} / (2 alpha).
pub fn c1(alpha: f64, big_r: f64, params: &LatticeParams) -> f64 {
    let delta = params.delta();
    (delta * alpha).exp() * (1.0 + 2.0 * big_r * alpha - 2.0 * delta * alpha).sqrt() / (2.0 * alpha)
}

/// C_2(alpha, R) = (1 + R alpha - delta alpha) / alpha^2.
pub fn c2(alpha: f64, big_r: f64, params: &LatticeParams) -> f64 {
    let delta = params.delta();
    (1.0 + big_r * alpha - delta * alpha) / (alpha * alpha)
}

/// Bound on sum_{x outside Omega_R} sum_{y in Omega_r} e^{-alpha |x - y|}.
pub fn lattice_sum_bound(big_r: f64, r: f64, alpha: f64, params: &LatticeParams) -> Result<f64> {
    if !(big_r > r) {
        return Err(Error::Precondition(format!("R = {big_r} must exceed r = {r}")));
    }
    if !(r >= params.delta()) {
        return Err(Error::Precondition(format!("r = {r} must be at least delta")));
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha", "must be positive"));
    }
    let omega_r = counting_bound(r, params) as f64;
    Ok(8.0 * PI * (2.0 * params.delta() * alpha).exp() * omega_r / params.cell_area()
        * c2(alpha, big_r, params)
        * (-alpha * (big_r - r)).exp())
}

/// Record of one evaluation of the truncation estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub d: f64,
    pub nu: f64,
    pub alpha_max: f64,
    #[serde(rename = "C_gamma")]
    pub c_gamma: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub r: f64,
    pub t: f64,
    #[serde(rename = "omega_R_count")]
    pub omega_big_r_count: u64,
    pub omega_r_count: u64,
    #[serde(rename = "C1")]
    pub c1: f64,
    /// Effective decay prefactor used in place of h0.
    pub h: f64,
    pub psi0_norm_inside: f64,
    pub phi_r: f64,
    /// Natural log of `bound_value`; finite even when the value overflows.
    pub ln_bound: f64,
    pub bound_value: f64,
}

impl BoundCertificate {
    /// Recomputes the bound from the stored fields, in log space.
    pub fn recompute_ln(&self, params: &LatticeParams) -> f64 {
        let nd = self.nu * self.d;
        let bracket = self.h * self.omega_big_r_count as f64 / (nd * nd) + 1.0 / nd;
        let ln_main = 0.5 * (2.0 / PI).ln()
            + self.c_gamma.ln()
            + self.c1.ln()
            + bracket.ln()
            + 0.5 * (self.omega_r_count as f64 / params.cell_area()).ln()
            - (self.alpha_max * (self.big_r - self.r) - self.d * self.t)
            + self.psi0_norm_inside.ln();
        log_add_exp(ln_main, self.phi_r.ln())
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Evaluates the truncation estimate for the given radii, time and contour.
#[allow(clippy::too_many_arguments)]
pub fn truncation_bound(
    big_r: f64,
    r: f64,
    t: f64,
    contour: &ContourSpec,
    nu: f64,
    psi0_norm_inside: f64,
    phi_r: f64,
    model: &HoppingModel,
    params: &LatticeParams,
) -> Result<BoundCertificate> {
    if !(big_r > r) {
        return Err(Error::Precondition(format!("R = {big_r} must exceed r = {r}")));
    }
    if !(r > 0.0) {
        return Err(invalid("r", "must be positive"));
    }
    if !(t >= 0.0) {
        return Err(invalid("t", "must be nonnegative"));
    }
    if !(psi0_norm_inside >= 0.0) || !(phi_r >= 0.0) {
        return Err(invalid("psi0_norm_inside", "norms must be nonnegative"));
    }
    let d = contour.d;
    let alpha = solve_alpha_max(d, nu, model, params)?;
    let mut cert = BoundCertificate {
        d,
        nu,
        alpha_max: alpha,
        c_gamma: contour.c_gamma,
        big_r,
        r,
        t,
        omega_big_r_count: counting_bound(big_r, params),
        omega_r_count: counting_bound(r, params),
        c1: c1(alpha, big_r, params),
        h: model.decay_prefactor(params),
        psi0_norm_inside,
        phi_r,
        ln_bound: 0.0,
        bound_value: 0.0,
    };
    cert.ln_bound = cert.recompute_ln(params);
    cert.bound_value = cert.ln_bound.exp();
    Ok(cert)
}

/// Search settings for [`plan_radius`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub nu: f64,
    /// Number of logarithmic grid points for d.
    pub d_points: usize,
    pub d_min: f64,
    /// Largest radius considered (A).
    pub r_cap: f64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            nu: DEFAULT_NU,
            d_points: 40,
            d_min: 1e-3,
            r_cap: 1e9,
        }
    }
}

/// Smallest certified radius for the given contour distance, if any.
#[allow(clippy::too_many_arguments)]
fn min_radius_for_d(
    d: f64,
    t: f64,
    target: f64,
    r: f64,
    psi0_norm_inside: f64,
    phi_r: f64,
    model: &HoppingModel,
    params: &LatticeParams,
    opts: &PlanOptions,
) -> Result<Option<BoundCertificate>> {
    let contour = ContourSpec::rectangle(spectral_half_width(model, params), d)?;
    let ln_target = target.ln();
    let eval = |big_r: f64| {
        truncation_bound(big_r, r, t, &contour, opts.nu, psi0_norm_inside, phi_r, model, params)
    };
    let mut lo = r * (1.0 + 1e-12) + 1e-12;
    let mut hi = r + params.delta().max(1.0);
    loop {
        if hi > opts.r_cap {
            return Ok(None);
        }
        if eval(hi)?.ln_bound <= ln_target {
            break;
        }
        lo = hi;
        hi = r + 2.0 * (hi - r);
    }
    for _ in 0..200 {
        if hi - lo <= 1e-9 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if eval(mid)?.ln_bound <= ln_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    eval(hi).map(Some)
}

/// Minimizes the certified radius over the contour distance d.
#[allow(clippy::too_many_arguments)]
pub fn plan_radius(
    t: f64,
    target_error: f64,
    r: f64,
    psi0_norm_inside: f64,
    phi_r: f64,
    model: &HoppingModel,
    params: &LatticeParams,
    opts: &PlanOptions,
) -> Result<(f64, f64, BoundCertificate)> {
    if !(target_error > phi_r) {
        return Err(Error::Precondition(format!(
            "target error {target_error:e} must exceed the initial tail {phi_r:e}"
        )));
    }
    if opts.d_points < 2 {
        return Err(invalid("d_points", "need at least two grid points"));
    }
    let half = spectral_half_width(model, params);
    let (l0, l1) = (opts.d_min.ln(), half.ln());
    let grid: Vec<f64> = (0..opts.d_points)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (opts.d_points - 1) as f64).exp())
        .collect();
    let mut best: Option<(usize, BoundCertificate)> = None;
    for (i, &d) in grid.iter().enumerate() {
        if let Some(c) = min_radius_for_d(d, t, target_error, r, psi0_norm_inside, phi_r, model, params, opts)? {
            if best.as_ref().map_or(true, |(_, b)| c.big_r < b.big_r) {
                best = Some((i, c));
            }
        }
    }
    let Some((i, mut cert)) = best else {
        return Err(Error::Infeasible {
            target: target_error,
            cap: opts.r_cap,
        });
    };
    // local refinement between the neighboring grid points
    let a = grid[i.saturating_sub(1)].ln();
    let b = grid[(i + 1).min(grid.len() - 1)].ln();
    for j in 0..=20 {
        let d = (a + (b - a) * j as f64 / 20.0).exp();
        if let Some(c) = min_radius_for_d(d, t, target_error, r, psi0_norm_inside, phi_r, model, params, opts)? {
            if c.big_r < cert.big_r {
                cert = c;
            }
        }
    }
    Ok((cert.big_r, cert.d, cert))
}

/// Tightest certificate at fixed radii and time, minimizing over the
/// contour distance d on a logarithmic grid with local refinement.
#[allow(clippy::too_many_arguments)]
pub fn optimal_bound(
    big_r: f64,
    r: f64,
    t: f64,
    psi0_norm_inside: f64,
    phi_r: f64,
    model: &HoppingModel,
    params: &LatticeParams,
    opts: &PlanOptions,
) -> Result<BoundCertificate> {
    if opts.d_points < 2 {
        return Err(invalid("d_points", "need at least two grid points"));
    }
    let half = spectral_half_width(model, params);
    let eval = |d: f64| -> Result<BoundCertificate> {
        let contour = ContourSpec::rectangle(half, d)?;
        truncation_bound(big_r, r, t, &contour, opts.nu, psi0_norm_inside, phi_r, model, params)
    };
    let (l0, l1) = (opts.d_min.ln(), half.ln());
    let grid: Vec<f64> = (0..opts.d_points)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (opts.d_points - 1) as f64).exp())
        .collect();
    let mut best_i = 0;
    let mut best = eval(grid[0])?;
    for (i, &d) in grid.iter().enumerate().skip(1) {
        let c = eval(d)?;
        if c.ln_bound < best.ln_bound {
            best = c;
            best_i = i;
        }
    }
    let a = grid[best_i.saturating_sub(1)].ln();
    let b = grid[(best_i + 1).min(grid.len() - 1)].ln();
    for j in 0..=20 {
        let c = eval((a + (b - a) * j as f64 / 20.0).exp())?;
        if c.ln_bound < best.ln_bound {
            best = c;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::enumerate_sites;
    use crate::hamiltonian::assemble_disk;
    use approx::assert_relative_eq;
    use faer::linalg::solvers::Solve;
    use faer::Mat;
    use num_complex::Complex64;

    fn phys() -> (HoppingModel, LatticeParams) {
        (HoppingModel::physical(), LatticeParams::physical())
    }

    #[test]
    fn contour_length() {
        let c = ContourSpec::rectangle(10.0, 1.0).unwrap();
        assert_eq!(c.c_gamma, 2.0 * 22.0 + 4.0);
        assert!(ContourSpec::rectangle(10.0, 0.0).is_err());
    }

    #[test]
    fn alpha_max_root_and_residual() {
        let (m, p) = phys();
        for d in [1e-3, 0.1, 1.0, 30.0] {
            let a = solve_alpha_max(d, 0.5, &m, &p).unwrap();
            assert!(a > 0.0 && a < m.alpha0);
            // residual against the textbook (unsimplified) form
            let c0 = 8.0 * PI * m.h0 * (p.delta() * m.alpha0).exp() / p.cell_area();
            let lhs = c0 * ((p.delta() * a).exp() / (m.alpha0 - a).powi(2) - 1.0 / (m.alpha0 * m.alpha0));
            assert_relative_eq!(lhs, 0.5 * d, max_relative = 1e-6);
            assert_relative_eq!(ct_lhs(a, &m, &p), 0.5 * d, max_relative = 1e-10);
        }
        let a1 = solve_alpha_max(1.0, 0.5, &m, &p).unwrap();
        assert_relative_eq!(a1, 8.88e-5, max_relative = 0.01);
        assert!(solve_alpha_max(1.0, 1.0, &m, &p).is_err());
        assert!(solve_alpha_max(-1.0, 0.5, &m, &p).is_err());
    }

    #[test]
    fn leading_order_law() {
        let (m, p) = phys();
        let vm = v_max(&m, &p);
        for d in [1e-3, 1e-2, 1e-1] {
            let ratio = solve_alpha_max(d, 0.5, &m, &p).unwrap() * vm / d;
            assert!((ratio - 1.0).abs() < 0.02, "d={d} ratio={ratio}");
        }
    }

    #[test]
    fn v_max_value_and_identity() {
        let (m, p) = phys();
        let vm = v_max(&m, &p);
        assert_relative_eq!(vm, 1.1260e4, max_relative = 2e-4);
        let da = p.delta() * m.alpha0;
        assert_relative_eq!(vm, 2.0 * norm_bound(&m, &p) * (2.0 + da) / m.alpha0, max_relative = 1e-14);
        let doubled = HoppingModel { h0: 2.0 * m.h0, ..m };
        assert_relative_eq!(v_max(&doubled, &p), 2.0 * vm, max_relative = 1e-14);
        // v_max / 2 is the slope of the decay-rate equation at zero
        let h = 1e-7;
        let slope = (ct_lhs(h, &m, &p) - ct_lhs(0.0, &m, &p)) / h;
        assert_relative_eq!(slope, vm / 2.0, max_relative = 1e-5);
    }

    #[test]
    fn counting() {
        let p = LatticeParams::physical();
        assert_eq!(counting_bound(10.0, &p), 400);
        for r in [1.0, 5.0, 10.0, 23.7] {
            assert!(counting_bound(r, &p) as usize >= enumerate_sites(&p, r).unwrap().len());
        }
    }

    #[test]
    fn lattice_sum_is_an_upper_bound() {
        let p = LatticeParams::physical();
        let (big_r, r, alpha) = (30.0, 10.0, 0.5);
        let inner = enumerate_sites(&p, r).unwrap();
        let outer = enumerate_sites(&p, 90.0).unwrap();
        let mut sum = 0.0;
        for x in outer.positions().iter().filter(|x| x.norm() > big_r) {
            for y in inner.positions() {
                sum += (-alpha * (x - y).norm()).exp();
            }
        }
        let bound = lattice_sum_bound(big_r, r, alpha, &p).unwrap();
        assert!(sum <= bound, "{sum} > {bound}");
        assert_relative_eq!(c2(alpha, big_r, &p), (1.0 + 15.0 - 0.5 * p.delta()) / 0.25);
        assert!(lattice_sum_bound(10.0, 10.0, 0.5, &p).is_err());
    }

    #[test]
    fn resolvent_entries_obey_decay() {
        let (m, p) = phys();
        let h = assemble_disk(&p, 6.0, &m).unwrap();
        let n = h.dim();
        assert!(n > 50);
        let d = 5.0;
        let z = Complex64::new(0.0, d);
        let mut a = Mat::<Complex64>::zeros(n, n);
        let hd = h.to_dense();
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = -hd[(i, j)];
            }
            a[(i, i)] += z;
        }
        let inv = a.partial_piv_lu().solve(Mat::<Complex64>::identity(n, n));
        let t = h.table();
        for i in 0..n {
            for j in 0..n {
                let dist = (t.position(i) - t.position(j)).norm();
                let b = resolvent_decay_bound(d, 0.5, dist, &m, &p).unwrap();
                assert!(inv[(i, j)].norm() <= b * (1.0 + 1e-12));
            }
        }
        assert_relative_eq!(resolvent_decay_bound(d, 0.5, 0.0, &m, &p).unwrap(), 1.0 / (0.5 * d));
    }

    #[test]
    fn certificate_reproduces_formula() {
        let (m, p) = phys();
        let c = ContourSpec::rectangle(spectral_half_width(&m, &p), 0.5).unwrap();
        let cert = truncation_bound(50.0, 10.0, 2.0, &c, 0.5, 0.9, 1e-6, &m, &p).unwrap();
        let a = cert.alpha_max;
        let direct = (2.0 / PI).sqrt()
            * c.c_gamma
            * c1(a, 50.0, &p)
            * (m.h0 * counting_bound(50.0, &p) as f64 / (0.25 * 0.25) + 1.0 / 0.25)
            * (400.0 / p.cell_area()).sqrt()
            * (-(a * 40.0 - 0.5 * 2.0)).exp()
            * 0.9
            + 1e-6;
        assert_relative_eq!(cert.bound_value, direct, max_relative = 1e-12);
        assert_relative_eq!(cert.recompute_ln(&p), cert.ln_bound);
        // C_1 equals e^{delta a} sqrt(C_2(2 a, R))
        assert_relative_eq!(
            c1(a, 50.0, &p),
            (p.delta() * a).exp() * c2(2.0 * a, 50.0, &p).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn exponent_shift_invariance() {
        let (m, p) = phys();
        let c = ContourSpec::rectangle(spectral_half_width(&m, &p), 1.0).unwrap();
        let base = truncation_bound(1e5, 10.0, 1.0, &c, 0.5, 1.0, 0.0, &m, &p).unwrap();
        let dt = 3.0;
        let shift = c.d / base.alpha_max * dt;
        let later = truncation_bound(1e5 + shift, 10.0, 1.0 + dt, &c, 0.5, 1.0, 0.0, &m, &p).unwrap();
        let e0 = base.alpha_max * (base.big_r - base.r) - base.d * base.t;
        let e1 = later.alpha_max * (later.big_r - later.r) - later.d * later.t;
        assert_relative_eq!(e0, e1, max_relative = 1e-12);
    }

    #[test]
    fn bound_decays_at_rate_alpha_max() {
        let (m, p) = phys();
        let c = ContourSpec::rectangle(spectral_half_width(&m, &p), 20.0).unwrap();
        let rs: Vec<f64> = (0..10).map(|i| 2e5 + 2e4 * i as f64).collect();
        let lns: Vec<f64> = rs
            .iter()
            .map(|&r| truncation_bound(r, 10.0, 1.0, &c, 0.5, 1.0, 0.0, &m, &p).unwrap().ln_bound)
            .collect();
        assert!(lns.windows(2).all(|w| w[1] < w[0]));
        let slope = (lns[9] - lns[0]) / (rs[9] - rs[0]);
        let a = solve_alpha_max(20.0, 0.5, &m, &p).unwrap();
        assert!((slope + a).abs() < 0.02 * a, "slope {slope} vs {a}");
    }

    #[test]
    fn planner() {
        let (m, p) = phys();
        let opts = PlanOptions::default();
        let (r0, _, c0) = plan_radius(0.0, 1e-2, 10.0, 1.0, 1e-4, &m, &p, &opts).unwrap();
        assert!(c0.bound_value <= 1e-2 * (1.0 + 1e-9));
        let (r1, d1, _) = plan_radius(1.0, 1e-2, 10.0, 1.0, 1e-4, &m, &p, &opts).unwrap();
        let (r2, _, _) = plan_radius(2.0, 1e-2, 10.0, 1.0, 1e-4, &m, &p, &opts).unwrap();
        assert!(r0 <= r1 && r1 <= r2);
        let a1 = solve_alpha_max(d1, 0.5, &m, &p).unwrap();
        // growth per unit time is at most the rate d / alpha_max at the optimum
        assert!(r2 - r1 <= 1.05 * d1 / a1);
        let (rl, _, _) = plan_radius(1.0, 1e-1, 10.0, 1.0, 1e-4, &m, &p, &opts).unwrap();
        assert!(rl <= r1);
        assert!(matches!(
            plan_radius(1.0, 1e-5, 10.0, 1.0, 1e-4, &m, &p, &opts),
            Err(Error::Precondition(_))
        ));
        let tight = PlanOptions { r_cap: 50.0, ..opts };
        assert!(matches!(
            plan_radius(1.0, 1e-2, 10.0, 1.0, 1e-4, &m, &p, &tight),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn optimal_bound_beats_grid_points() {
        let (m, p) = phys();
        let opts = PlanOptions::default();
        let best = optimal_bound(400.0, 10.0, 0.01, 1.0, 0.0, &m, &p, &opts).unwrap();
        let half = spectral_half_width(&m, &p);
        for d in [1e-3, 1e-2, 0.1, 1.0, 10.0] {
            let c = truncation_bound(400.0, 10.0, 0.01, &ContourSpec::rectangle(half, d).unwrap(), opts.nu, 1.0, 0.0, &m, &p).unwrap();
            assert!(best.ln_bound <= c.ln_bound + 1e-12);
        }
    }
}
