//! Four-component envelope fields on a uniform periodic square grid.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Vec2;

/// Periodic box [-side/2, side/2)^2 sampled at n x n points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub side: f64,
}

impl Grid {
    pub fn new(n: usize, side: f64) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(invalid("n", format!("grid size must be even and >= 4, got {n}")));
        }
        if !(side > 0.0 && side.is_finite()) {
            return Err(invalid("side", format!("must be positive, got {side}")));
        }
        Ok(Self { n, side })
    }

    /// Smallest power-of-two grid of the given side with spacing <= `max_spacing`.
    pub fn with_spacing(side: f64, max_spacing: f64) -> Result<Self> {
        let mut n = 4;
        while side / n as f64 > max_spacing {
            n *= 2;
        }
        Self::new(n, side)
    }

    pub fn spacing(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.side + i as f64 * self.spacing()
    }

    /// Physical position of the flat index `idx = iy * n + ix`.
    pub fn point(&self, idx: usize) -> Vec2 {
        Vec2::new(self.coord(idx % self.n), self.coord(idx / self.n))
    }

    /// Angular wavenumber of FFT bin `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        let j = j as i64;
        let n = self.n as i64;
        let m = if j < n / 2 { j } else { j - n };
        2.0 * PI * m as f64 / self.side
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let h = 0.5 * self.side;
        p.x >= -h && p.x < h && p.y >= -h && p.y < h
    }

    /// Largest wavenumber magnitude resolved along one axis.
    pub fn nyquist(&self) -> f64 {
        PI / self.spacing()
    }
}

/// Fields (f1A, f1B, f2A, f2B), each stored row-major with x fastest.
#[derive(Clone, Debug)]
pub struct Envelope {
    grid: Grid,
    comps: [Vec<Complex64>; 4],
}

impl Envelope {
    pub fn zeros(grid: Grid) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self {
            grid,
            comps: [z.clone(), z.clone(), z.clone(), z],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Vec2) -> [Complex64; 4] + Sync) -> Self {
        let vals: Vec<[Complex64; 4]> = (0..grid.len()).into_par_iter().map(|i| f(grid.point(i))).collect();
        let mut e = Self::zeros(grid);
        for (i, v) in vals.into_iter().enumerate() {
            for c in 0..4 {
                e.comps[c][i] = v[c];
            }
        }
        e
    }

    pub fn from_components(grid: Grid, comps: [Vec<Complex64>; 4]) -> Result<Self> {
        for c in &comps {
            if c.len() != grid.len() {
                return Err(Error::DimensionMismatch {
                    expected: grid.len(),
                    got: c.len(),
                });
            }
        }
        Ok(Self { grid, comps })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        &self.comps[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut Vec<Complex64> {
        &mut self.comps[c]
    }

    pub fn components(&self) -> &[Vec<Complex64>; 4] {
        &self.comps
    }

    pub fn components_mut(&mut self) -> &mut [Vec<Complex64>; 4] {
        &mut self.comps
    }

    pub fn at(&self, idx: usize) -> [Complex64; 4] {
        [self.comps[0][idx], self.comps[1][idx], self.comps[2][idx], self.comps[3][idx]]
    }

    /// L2 norm: (sum |f|^2 h^2)^{1/2}.
    pub fn l2_norm(&self) -> f64 {
        let h2 = self.grid.spacing().powi(2);
        (self.sum_sq() * h2).sqrt()
    }

    fn sum_sq(&self) -> f64 {
        self.comps.iter().flat_map(|c| c.iter()).map(|v| v.norm_sqr()).sum()
    }

    pub fn scale(&mut self, s: Complex64) {
        for c in self.comps.iter_mut() {
            c.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.at(i).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Fraction of the squared norm lying in the outer strip of the box,
    /// of width max(2 points, 5% of the side).
    pub fn boundary_mass_fraction(&self) -> f64 {
        let n = self.grid.n;
        let w = ((0.05 * n as f64).ceil() as usize).max(2);
        let total = self.sum_sq();
        if total == 0.0 {
            return 0.0;
        }
        let mut edge = 0.0;
        for iy in 0..n {
            for ix in 0..n {
                if ix < w || iy < w || ix >= n - w || iy >= n - w {
                    let i = iy * n + ix;
                    edge += self.comps.iter().map(|c| c[i].norm_sqr()).sum::<f64>();
                }
            }
        }
        edge / total
    }

    /// Largest |f| on the outermost ring of grid points relative to the max.
    pub fn edge_ratio(&self) -> f64 {
        let n = self.grid.n;
        let max = self.max_abs();
        if max == 0.0 {
            return 0.0;
        }
        let mut edge = 0.0f64;
        for k in 0..n {
            for idx in [k, (n - 1) * n + k, k * n, k * n + n - 1] {
                edge = edge.max(self.at(idx).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt());
            }
        }
        edge / max
    }

    /// Norm of the difference of two envelopes on the same grid.
    pub fn distance(&self, other: &Envelope) -> Result<f64> {
        if self.grid != other.grid {
            return Err(invalid("grid", "envelopes live on different grids"));
        }
        let h2 = self.grid.spacing().powi(2);
        let s: f64 = self
            .comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()))
            .sum();
        Ok((s * h2).sqrt())
    }

    /// Centroid of |f|^2 in box coordinates.
    pub fn centroid(&self) -> Vec2 {
        let mut c = Vec2::zeros();
        let mut w = 0.0;
        for i in 0..self.grid.len() {
            let m: f64 = self.at(i).iter().map(|v| v.norm_sqr()).sum();
            c += self.grid.point(i) * m;
            w += m;
        }
        if w > 0.0 {
            c / w
        } else {
            c
        }
    }

    /// CSV with columns `x,y,component,re,im`.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: Option<&str>) -> Result<()> {
        if let Some(m) = metadata {
            writeln!(w, "# metadata: {m}")?;
        }
        writeln!(w, "x,y,component,re,im")?;
        const NAMES: [&str; 4] = ["1A", "1B", "2A", "2B"];
        for i in 0..self.grid.len() {
            let p = self.grid.point(i);
            for (c, name) in NAMES.iter().enumerate() {
                let v = self.comps[c][i];
                writeln!(w, "{:.8e},{:.8e},{},{:.10e},{:.10e}", p.x, p.y, name, v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// Planned forward and inverse 2D FFTs of a fixed size.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({})", self.n)
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Unnormalized forward transform (sum f e^{-i k x}).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    /// Inverse transform including the 1/n^2 factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
        let s = 1.0 / (self.n * self.n) as f64;
        data.par_iter_mut().for_each(|v| *v *= s);
    }

    /// Inverse transform without normalization (sum F e^{+i k x}).
    pub fn inverse_unscaled(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        data.par_chunks_mut(n).for_each(|row| plan.process(row));
        transpose(data, n);
        data.par_chunks_mut(n).for_each(|row| plan.process(row));
        transpose(data, n);
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry() {
        let g = Grid::new(8, 16.0).unwrap();
        assert_eq!(g.spacing(), 2.0);
        assert_eq!(g.coord(0), -8.0);
        assert_eq!(g.point(9), Vec2::new(-6.0, -6.0));
        assert_eq!(g.wavenumber(5), 2.0 * PI * -3.0 / 16.0);
        assert!(Grid::new(7, 1.0).is_err());
        let s = Grid::with_spacing(100.0, 1.0).unwrap();
        assert_eq!(s.n, 128);
    }

    #[test]
    fn fft_roundtrip_and_plane_wave() {
        let g = Grid::new(16, 10.0).unwrap();
        let f = Fft2::new(16);
        let (mx, my) = (3usize, 14usize);
        let mut d: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let p = g.point(i) + Vec2::new(5.0, 5.0);
                Complex64::from_polar(1.0, g.wavenumber(mx) * p.x + g.wavenumber(my) * p.y)
            })
            .collect();
        let orig = d.clone();
        f.forward(&mut d);
        for (i, v) in d.iter().enumerate() {
            let expect = if i == my * 16 + mx { 256.0 } else { 0.0 };
            assert!((v.re - expect).abs() < 1e-9 && v.im.abs() < 1e-9);
        }
        f.inverse(&mut d);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn containment_metrics() {
        let g = Grid::new(64, 64.0).unwrap();
        let e = Envelope::from_fn(g, |p| {
            let v = Complex64::new((-p.norm_squared() / 18.0).exp(), 0.0);
            [v, v * 0.5, Complex64::new(0.0, 0.0), v]
        });
        assert!(e.boundary_mass_fraction() < 1e-20);
        assert!(e.edge_ratio() < 1e-8);
        let c = e.centroid();
        assert!(c.norm() < 1e-12);
        let norm2 = 2.25 * PI * 9.0;
        assert!((e.l2_norm().powi(2) - norm2).abs() < 1e-9);
    }
}
