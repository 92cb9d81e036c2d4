//! Truncated tight-binding Hamiltonian: nearest-neighbor intralayer hops and
//! an exponentially decaying interlayer kernel, assembled as a sparse
//! Hermitian operator on a [`SiteTable`].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{tbg_basis, LatticeParams, SiteIndex, SiteTable, TbgBasis, Vec2};

/// Relative tolerance (in units of `a`) for nearest-neighbor detection.
pub const NEIGHBOR_TOL: f64 = 1e-9;

/// Parameters of the hopping model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoppingModel {
    /// Intralayer nearest-neighbor energy (eV).
    pub t0: f64,
    /// Interlayer prefactor (eV).
    pub h0: f64,
    /// Interlayer decay rate (1/A).
    pub alpha0: f64,
    /// Interlayer distance L (A).
    pub interlayer_distance: f64,
    /// In-plane distance beyond which interlayer hops are dropped (A).
    pub interlayer_cutoff: f64,
}

impl HoppingModel {
    /// t0 = 3.048 eV, h0 = 83.135 eV, alpha0 = 1/A, L = 3.5 A, cutoff 15 A.
    pub fn physical() -> Self {
        Self {
            t0: 3.048,
            h0: 83.135,
            alpha0: 1.0,
            interlayer_distance: 3.5,
            interlayer_cutoff: 15.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t0", self.t0), ("h0", self.h0), ("alpha0", self.alpha0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.interlayer_distance >= 0.0) {
            return Err(invalid("interlayer_distance", "must be nonnegative"));
        }
        if !(self.interlayer_cutoff >= 0.0) {
            return Err(invalid("interlayer_cutoff", "must be nonnegative"));
        }
        Ok(())
    }

    /// h(r; L) = h0 exp(-alpha0 sqrt(r^2 + L^2)) for in-plane distance r.
    pub fn kernel(&self, r: f64) -> f64 {
        let l = self.interlayer_distance;
        self.h0 * (-self.alpha0 * (r * r + l * l).sqrt()).exp()
    }

    /// Two-dimensional Fourier transform of the interlayer kernel at |xi|.
    pub fn fourier(&self, xi: f64) -> f64 {
        let q = (xi * xi + self.alpha0 * self.alpha0).sqrt();
        let l = self.interlayer_distance;
        2.0 * PI * self.h0 * self.alpha0 * (-l * q).exp() * (1.0 + l * q) / q.powi(3)
    }

    /// Prefactor h such that every matrix element obeys
    /// |H_xy| <= h exp(-alpha0 |x - y|).
    pub fn decay_prefactor(&self, params: &LatticeParams) -> f64 {
        (self.t0 * (self.alpha0 * params.delta()).exp()).max(self.h0)
    }

    /// Certified upper bound on the summed magnitude of dropped interlayer
    /// hops in any row, from the lattice-sum integral estimate.
    pub fn dropped_mass_bound(&self, params: &LatticeParams) -> f64 {
        let delta = params.delta();
        let rho = (self.interlayer_cutoff - delta).max(0.0);
        let l = self.interlayer_distance;
        let u0 = (rho * rho + l * l).sqrt();
        let a = self.alpha0;
        let tail = 2.0 * PI * self.h0 * (-a * u0).exp() * (a * u0 + 1.0) / (a * a);
        2.0 * (delta * a).exp() * tail / params.cell_area()
    }

    /// Upper bound on any row sum of the untruncated Hamiltonian:
    /// 3 t0 plus the lattice-sum bound of the interlayer kernel.
    pub fn row_sum_bound(&self, params: &LatticeParams) -> f64 {
        3.0 * self.t0 + 2.0 * (params.delta() * self.alpha0).exp() * self.fourier(0.0) / params.cell_area()
    }
}

/// -t0 for intralayer nearest neighbors, zero otherwise.
pub fn intralayer_element(
    basis: &TbgBasis,
    x: &SiteIndex,
    y: &SiteIndex,
    model: &HoppingModel,
    params: &LatticeParams,
) -> Complex64 {
    debug_assert_eq!(x.layer, y.layer);
    let d = (basis.position(x) - basis.position(y)).norm();
    if (d - params.delta()).abs() <= NEIGHBOR_TOL * params.a {
        Complex64::new(-model.t0, 0.0)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Interlayer kernel value, or zero beyond the in-plane cutoff.
pub fn interlayer_element(
    basis: &TbgBasis,
    x: &SiteIndex,
    y: &SiteIndex,
    model: &HoppingModel,
) -> Complex64 {
    debug_assert_ne!(x.layer, y.layer);
    let d = (basis.position(x) - basis.position(y)).norm();
    if d <= model.interlayer_cutoff {
        Complex64::new(model.kernel(d), 0.0)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Fourier transform of the interlayer kernel at wavevector `xi` (eV A^2).
pub fn hopping_fourier(xi: Vec2, model: &HoppingModel) -> f64 {
    model.fourier(xi.norm())
}

/// Analytic operator norm bound 8 pi h e^{delta alpha0} / (|Gamma| alpha0^2),
/// with h the decay prefactor.
pub fn norm_bound(model: &HoppingModel, params: &LatticeParams) -> f64 {
    8.0 * PI * model.decay_prefactor(params) * (params.delta() * model.alpha0).exp()
        / (params.cell_area() * model.alpha0 * model.alpha0)
}

#[derive(Clone, Debug)]
enum Values {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// Compressed sparse rows holding both triangles, used for products.
#[derive(Clone, Debug)]
struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    values: Values,
}

/// Hermitian operator on a site table. Entries are stored once with
/// `row < col` (the diagonal is identically zero).
#[derive(Clone, Debug)]
pub struct SparseHermitian {
    table: Arc<SiteTable>,
    entries: Vec<(u32, u32, Complex64)>,
    csr: Csr,
}

impl SparseHermitian {
    pub fn from_entries(table: Arc<SiteTable>, mut entries: Vec<(u32, u32, Complex64)>) -> Result<Self> {
        let n = table.len();
        for e in entries.iter_mut() {
            if e.0 as usize >= n || e.1 as usize >= n {
                return Err(invalid("entries", format!("index ({}, {}) out of range {n}", e.0, e.1)));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0, e.2.conj());
            }
        }
        entries.retain(|e| e.0 != e.1 && e.2 != Complex64::new(0.0, 0.0));
        entries.sort_by_key(|e| (e.0, e.1));
        entries.dedup_by_key(|e| (e.0, e.1));
        let csr = build_csr(n, &entries);
        Ok(Self {
            table,
            entries,
            csr,
        })
    }

    pub fn table(&self) -> &Arc<SiteTable> {
        &self.table
    }

    pub fn dim(&self) -> usize {
        self.table.len()
    }

    /// Upper-triangle entries `(row, col, value)` with `row < col`.
    pub fn entries(&self) -> &[(u32, u32, Complex64)] {
        &self.entries
    }

    /// Number of structural nonzeros of the full matrix.
    pub fn nnz(&self) -> usize {
        self.csr.cols.len()
    }

    pub fn row_nnz(&self, row: usize) -> usize {
        self.csr.row_ptr[row + 1] - self.csr.row_ptr[row]
    }

    pub fn is_real(&self) -> bool {
        matches!(self.csr.values, Values::Real(_))
    }

    /// Gershgorin bound: largest absolute row sum.
    pub fn max_row_sum(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let r = self.csr.row_ptr[i]..self.csr.row_ptr[i + 1];
                match &self.csr.values {
                    Values::Real(v) => v[r].iter().map(|x| x.abs()).sum::<f64>(),
                    Values::Complex(v) => v[r].iter().map(|x| x.norm()).sum::<f64>(),
                }
            })
            .fold(0.0, f64::max)
    }

    /// y = H x
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.apply_block(x, y, 1);
    }

    /// Block product on `m` interleaved vectors: `x[i * m + j]` is entry `i`
    /// of vector `j`.
    pub fn apply_block(&self, x: &[Complex64], y: &mut [Complex64], m: usize) {
        let n = self.dim();
        assert_eq!(x.len(), n * m);
        assert_eq!(y.len(), n * m);
        let csr = &self.csr;
        y.par_chunks_mut(m).enumerate().for_each(|(i, yi)| {
            yi.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            let r = csr.row_ptr[i]..csr.row_ptr[i + 1];
            match &csr.values {
                Values::Real(vals) => {
                    for (&c, &v) in csr.cols[r.clone()].iter().zip(&vals[r]) {
                        let xc = &x[c as usize * m..c as usize * m + m];
                        for (acc, &xv) in yi.iter_mut().zip(xc) {
                            *acc += xv * v;
                        }
                    }
                }
                Values::Complex(vals) => {
                    for (&c, &v) in csr.cols[r.clone()].iter().zip(&vals[r]) {
                        let xc = &x[c as usize * m..c as usize * m + m];
                        for (acc, &xv) in yi.iter_mut().zip(xc) {
                            *acc += xv * v;
                        }
                    }
                }
            }
        });
    }

    /// Dense copy (for reference computations on small systems).
    pub fn to_dense(&self) -> Mat<Complex64> {
        let n = self.dim();
        let mut m = Mat::<Complex64>::zeros(n, n);
        for &(i, j, v) in &self.entries {
            m[(i as usize, j as usize)] = v;
            m[(j as usize, i as usize)] = v.conj();
        }
        m
    }

    /// Coordinate text dump: `# n nnz`, then `row col re im` for every
    /// nonzero of the full matrix.
    pub fn write_coo<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {} {}", self.dim(), self.nnz())?;
        for i in 0..self.dim() {
            for k in self.csr.row_ptr[i]..self.csr.row_ptr[i + 1] {
                let v = match &self.csr.values {
                    Values::Real(v) => Complex64::new(v[k], 0.0),
                    Values::Complex(v) => v[k],
                };
                writeln!(w, "{} {} {:.17e} {:.17e}", i, self.csr.cols[k], v.re, v.im)?;
            }
        }
        Ok(())
    }
}

fn build_csr(n: usize, entries: &[(u32, u32, Complex64)]) -> Csr {
    let mut counts = vec![0usize; n + 1];
    for &(i, j, _) in entries {
        counts[i as usize + 1] += 1;
        counts[j as usize + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let row_ptr = counts.clone();
    let nnz = row_ptr[n];
    let mut cols = vec![0u32; nnz];
    let mut vals = vec![Complex64::new(0.0, 0.0); nnz];
    let mut next = counts;
    // Lower-triangle contributions land in ascending column order, followed
    // by the upper ones, so each row ends up sorted.
    for &(i, j, v) in entries {
        let k = next[j as usize];
        cols[k] = i;
        vals[k] = v.conj();
        next[j as usize] += 1;
    }
    for &(i, j, v) in entries {
        let k = next[i as usize];
        cols[k] = j;
        vals[k] = v;
        next[i as usize] += 1;
    }
    let values = if vals.iter().all(|v| v.im == 0.0) {
        Values::Real(vals.iter().map(|v| v.re).collect())
    } else {
        Values::Complex(vals)
    };
    Csr {
        row_ptr,
        cols,
        values,
    }
}

/// Uniform spatial bins over one layer's positions.
struct Bins {
    size: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl Bins {
    fn new(size: f64, items: impl Iterator<Item = (u32, Vec2)>) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in items {
            cells.entry(Self::key(size, p)).or_default().push(i);
        }
        Self { size, cells }
    }

    fn key(size: f64, p: Vec2) -> (i64, i64) {
        ((p.x / size).floor() as i64, (p.y / size).floor() as i64)
    }

    fn near(&self, p: Vec2) -> impl Iterator<Item = u32> + '_ {
        let (cx, cy) = Self::key(self.size, p);
        (-1..=1)
            .flat_map(move |dx| (-1..=1).map(move |dy| (cx + dx, cy + dy)))
            .filter_map(move |k| self.cells.get(&k))
            .flat_map(|v| v.iter().copied())
    }
}

/// Assembles H_R on `table`.
pub fn assemble(table: Arc<SiteTable>, model: &HoppingModel) -> Result<SparseHermitian> {
    model.validate()?;
    if table.is_empty() {
        return Err(invalid("table", "must contain at least one site"));
    }
    let params = *table.params();
    let delta = params.delta();
    let tol = NEIGHBOR_TOL * params.a;
    let cutoff = model.interlayer_cutoff;
    let bin = cutoff.max(delta * 1.01);
    let pos = table.positions();
    let sites = table.sites();
    let layer_bins: Vec<Bins> = (0..2)
        .map(|l| {
            Bins::new(
                bin,
                sites
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.layer.index() == l)
                    .map(|(i, _)| (i as u32, pos[i])),
            )
        })
        .collect();

    let rows: Vec<Vec<(u32, u32, Complex64)>> = (0..table.len())
        .into_par_iter()
        .map(|i| {
            let si = &sites[i];
            let pi = pos[i];
            let mut row = Vec::new();
            for (l, bins) in layer_bins.iter().enumerate() {
                let same = l == si.layer.index();
                for j in bins.near(pi) {
                    if (j as usize) <= i {
                        continue;
                    }
                    let d = (pos[j as usize] - pi).norm();
                    if same {
                        if (d - delta).abs() <= tol {
                            row.push((i as u32, j, Complex64::new(-model.t0, 0.0)));
                        }
                    } else if d <= cutoff {
                        row.push((i as u32, j, Complex64::new(model.kernel(d), 0.0)));
                    }
                }
            }
            row.sort_by_key(|e| e.1);
            row
        })
        .collect();
    let entries = rows.into_iter().flatten().collect();
    SparseHermitian::from_entries(table, entries)
}

/// Convenience: enumerate the disk of radius `radius` and assemble H_R.
pub fn assemble_disk(params: &LatticeParams, radius: f64, model: &HoppingModel) -> Result<SparseHermitian> {
    let table = crate::geometry::enumerate_sites(params, radius)?;
    assemble(Arc::new(table), model)
}

/// Positions-based basis for callers that only hold a table.
pub fn basis_of(table: &SiteTable) -> TbgBasis {
    tbg_basis(table.params())
}
