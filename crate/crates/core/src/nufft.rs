//! Trigonometric interpolation between an envelope grid and scattered
//! points, by Gaussian gridding (non-uniform FFT of types 1 and 2).

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::envelope::{Fft2, Grid};
use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Oversampling ratio of the fine grid.
const OVERSAMPLE: usize = 2;
/// Half width (in fine grid points) of the truncated Gaussian.
const SPREAD: usize = 12;

/// Evaluates sum_k F_k e^{i k x} at arbitrary points of the box and applies
/// the adjoint map, where k runs over the modes of `grid`.
#[derive(Clone, Debug)]
pub struct TrigInterpolator {
    grid: Grid,
    fine: usize,
    tau: f64,
    coarse_fft: Fft2,
    fine_fft: Fft2,
    /// 1 / ghat(k) for each coarse bin along one axis.
    deconv: Vec<f64>,
}

impl TrigInterpolator {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.n;
        let fine = OVERSAMPLE * n;
        let r = OVERSAMPLE as f64;
        let tau = PI * SPREAD as f64 / ((n * n) as f64 * r * (r - 0.5));
        let deconv = (0..n)
            .map(|j| {
                let k = signed_bin(j, n) as f64;
                (PI / tau).sqrt() * (k * k * tau).exp()
            })
            .collect();
        Self {
            grid: *grid,
            fine,
            tau,
            coarse_fft: Fft2::new(n),
            fine_fft: Fft2::new(fine),
            deconv,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Fourier coefficients F_k of grid values (row-major, x fastest).
    pub fn coefficients(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut f = values.to_vec();
        self.coarse_fft.forward(&mut f);
        let s = 1.0 / self.grid.len() as f64;
        f.iter_mut().for_each(|v| *v *= s);
        f
    }

    /// Grid values from Fourier coefficients.
    pub fn synthesize(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut f = coeffs.to_vec();
        self.coarse_fft.inverse_unscaled(&mut f);
        f
    }

    /// Fine-grid field whose Gaussian smoothing reproduces the coefficients.
    pub fn prepare(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n;
        let m = self.fine;
        let mut u = vec![Complex64::new(0.0, 0.0); m * m];
        for jy in 0..n {
            let fy = fine_bin(signed_bin(jy, n), m);
            for jx in 0..n {
                let fx = fine_bin(signed_bin(jx, n), m);
                u[fy * m + fx] = coeffs[jy * n + jx] * (self.deconv[jx] * self.deconv[jy]);
            }
        }
        self.fine_fft.inverse_unscaled(&mut u);
        u
    }

    fn to_angle(&self, p: Vec2) -> Result<(f64, f64)> {
        if !self.grid.contains(p) {
            return Err(Error::OutOfBox { x: p.x, y: p.y });
        }
        let s = 2.0 * PI / self.grid.side;
        Ok(((p.x + 0.5 * self.grid.side) * s, (p.y + 0.5 * self.grid.side) * s))
    }

    /// Gaussian weights along one axis: first fine index and 2*SPREAD weights.
    fn weights(&self, x: f64) -> (i64, [f64; 2 * SPREAD]) {
        let hf = 2.0 * PI / self.fine as f64;
        let m0 = (x / hf).floor() as i64;
        let start = m0 - SPREAD as i64 + 1;
        let mut w = [0.0; 2 * SPREAD];
        for (i, wi) in w.iter_mut().enumerate() {
            let d = x - (start + i as i64) as f64 * hf;
            *wi = (-d * d / (4.0 * self.tau)).exp();
        }
        (start, w)
    }

    /// Evaluates the prepared field at `p`.
    pub fn eval_prepared(&self, u: &[Complex64], p: Vec2) -> Result<Complex64> {
        let (x, y) = self.to_angle(p)?;
        let m = self.fine as i64;
        let (sx, wx) = self.weights(x);
        let (sy, wy) = self.weights(y);
        let mut acc = Complex64::new(0.0, 0.0);
        for (iy, wyv) in wy.iter().enumerate() {
            let row = (sy + iy as i64).rem_euclid(m) as usize * self.fine;
            let mut racc = Complex64::new(0.0, 0.0);
            for (ix, wxv) in wx.iter().enumerate() {
                let col = (sx + ix as i64).rem_euclid(m) as usize;
                racc += u[row + col] * *wxv;
            }
            acc += racc * *wyv;
        }
        Ok(acc / (m * m) as f64)
    }

    /// Values of the trigonometric interpolant of `values` at `points`.
    pub fn interpolate(&self, values: &[Complex64], points: &[Vec2]) -> Result<Vec<Complex64>> {
        let u = self.prepare(&self.coefficients(values));
        points.par_iter().map(|p| self.eval_prepared(&u, *p)).collect()
    }

    /// Adjoint of coefficient-to-point evaluation:
    /// G_k = sum_j c_j e^{-i k x_j}, returned in coarse bin layout.
    pub fn adjoint(&self, points: &[Vec2], vals: &[Complex64]) -> Result<Vec<Complex64>> {
        if points.len() != vals.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: vals.len(),
            });
        }
        let m = self.fine;
        let mut v = vec![Complex64::new(0.0, 0.0); m * m];
        for (p, c) in points.iter().zip(vals) {
            let (x, y) = self.to_angle(*p)?;
            let (sx, wx) = self.weights(x);
            let (sy, wy) = self.weights(y);
            for (iy, wyv) in wy.iter().enumerate() {
                let row = (sy + iy as i64).rem_euclid(m as i64) as usize * m;
                let cy = c * *wyv;
                for (ix, wxv) in wx.iter().enumerate() {
                    let col = (sx + ix as i64).rem_euclid(m as i64) as usize;
                    v[row + col] += cy * *wxv;
                }
            }
        }
        self.fine_fft.forward(&mut v);
        let n = self.grid.n;
        let scale = 1.0 / (m * m) as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for jy in 0..n {
            let fy = fine_bin(signed_bin(jy, n), m);
            for jx in 0..n {
                let fx = fine_bin(signed_bin(jx, n), m);
                out[jy * n + jx] = v[fy * m + fx] * (self.deconv[jx] * self.deconv[jy] * scale);
            }
        }
        Ok(out)
    }
}

fn signed_bin(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

fn fine_bin(k: i64, m: usize) -> usize {
    k.rem_euclid(m as i64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(grid: &Grid, coeffs: &[Complex64], p: Vec2) -> Complex64 {
        let n = grid.n;
        let x = p + Vec2::new(0.5 * grid.side, 0.5 * grid.side);
        let mut s = Complex64::new(0.0, 0.0);
        for jy in 0..n {
            for jx in 0..n {
                let ph = grid.wavenumber(jx) * x.x + grid.wavenumber(jy) * x.y;
                s += coeffs[jy * n + jx] * Complex64::from_polar(1.0, ph);
            }
        }
        s
    }

    fn sample_points(grid: &Grid, count: usize) -> Vec<Vec2> {
        (0..count)
            .map(|i| {
                let a = (i as f64 * 0.618_033_988_75).fract();
                let b = (i as f64 * 0.754_877_666_2).fract();
                Vec2::new((a - 0.5) * grid.side, (b - 0.5) * grid.side * 0.999)
            })
            .collect()
    }

    #[test]
    fn type2_matches_direct_sum() {
        let grid = Grid::new(32, 40.0).unwrap();
        let it = TrigInterpolator::new(&grid);
        let coeffs: Vec<Complex64> = (0..grid.len())
            .map(|i| Complex64::new((i as f64 * 1.3).sin(), (i as f64 * 0.7).cos()) / (1.0 + i as f64))
            .collect();
        let u = it.prepare(&coeffs);
        for p in sample_points(&grid, 50) {
            let a = it.eval_prepared(&u, p).unwrap();
            let b = direct(&grid, &coeffs, p);
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
        assert!(it.eval_prepared(&u, Vec2::new(20.0, 0.0)).is_err());
    }

    #[test]
    fn interpolation_is_exact_on_grid_points() {
        let grid = Grid::new(16, 10.0).unwrap();
        let it = TrigInterpolator::new(&grid);
        let vals: Vec<Complex64> = (0..grid.len()).map(|i| Complex64::new(i as f64, -(i as f64).sqrt())).collect();
        let pts: Vec<Vec2> = (0..grid.len()).map(|i| grid.point(i)).collect();
        let out = it.interpolate(&vals, &pts).unwrap();
        for (a, b) in out.iter().zip(&vals) {
            assert!((a - b).norm() < 1e-9 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn adjoint_matches_direct_sum() {
        let grid = Grid::new(16, 30.0).unwrap();
        let it = TrigInterpolator::new(&grid);
        let pts = sample_points(&grid, 40);
        let vals: Vec<Complex64> = (0..40).map(|i| Complex64::new(1.0 / (1.0 + i as f64), i as f64 * 0.1)).collect();
        let g = it.adjoint(&pts, &vals).unwrap();
        let n = grid.n;
        let mass: f64 = vals.iter().map(|c| c.norm()).sum();
        for jy in 0..n {
            for jx in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for (p, c) in pts.iter().zip(&vals) {
                    let x = p + Vec2::new(15.0, 15.0);
                    let ph = grid.wavenumber(jx) * x.x + grid.wavenumber(jy) * x.y;
                    s += c * Complex64::from_polar(1.0, -ph);
                }
                assert!((s - g[jy * n + jx]).norm() < 1e-11 * mass, "{jx} {jy} {s} {}", g[jy * n + jx]);
            }
        }
    }
}
