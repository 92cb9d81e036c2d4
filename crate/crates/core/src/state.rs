//! Complex amplitudes over a site table.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::SiteTable;

/// A truncated wavefunction: one amplitude per orbital of `table`.
#[derive(Clone, Debug)]
pub struct LatticeState {
    table: Arc<SiteTable>,
    amps: Vec<Complex64>,
}

impl LatticeState {
    pub fn new(table: Arc<SiteTable>, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != table.len() {
            return Err(Error::DimensionMismatch {
                expected: table.len(),
                got: amps.len(),
            });
        }
        Ok(Self { table, amps })
    }

    pub fn zeros(table: Arc<SiteTable>) -> Self {
        let n = table.len();
        Self {
            table,
            amps: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn table(&self) -> &Arc<SiteTable> {
        &self.table
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.amps)
    }

    /// Scales to unit norm. A zero state is left unchanged.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            self.amps.iter_mut().for_each(|a| *a /= n);
        }
        n
    }

    /// <self, other>, conjugate-linear in `self`.
    pub fn inner(&self, other: &LatticeState) -> Result<Complex64> {
        self.check_same(other)?;
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Norm of `self - other` on a common table.
    pub fn distance(&self, other: &LatticeState) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    fn check_same(&self, other: &LatticeState) -> Result<()> {
        if !Arc::ptr_eq(&self.table, &other.table) && self.table.sites() != other.table.sites() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(())
    }

    /// Norm of the amplitudes on sites with |position| <= r.
    pub fn norm_inside(&self, r: f64) -> f64 {
        self.masked_norm(|p| p <= r)
    }

    /// Norm of the amplitudes on sites with |position| > r.
    pub fn norm_outside(&self, r: f64) -> f64 {
        self.masked_norm(|p| p > r)
    }

    fn masked_norm(&self, keep: impl Fn(f64) -> bool) -> f64 {
        self.table
            .positions()
            .iter()
            .zip(&self.amps)
            .filter(|(p, _)| keep(p.norm()))
            .map(|(_, a)| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Zeroes every amplitude outside the closed disk of radius `r`.
    pub fn cut_to_disk(&mut self, r: f64) {
        for (p, a) in self.table.positions().iter().zip(self.amps.iter_mut()) {
            if p.norm() > r {
                *a = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Copies the state onto `target`, zero on sites absent here. Sites of
    /// `self` missing from `target` are dropped.
    pub fn transfer_to(&self, target: &Arc<SiteTable>) -> LatticeState {
        let amps = target
            .sites()
            .iter()
            .map(|s| {
                self.table
                    .index_of(s)
                    .map_or(Complex64::new(0.0, 0.0), |i| self.amps[i])
            })
            .collect();
        LatticeState {
            table: target.clone(),
            amps,
        }
    }

    /// Centroid sum |psi|^2 x / sum |psi|^2, optionally restricted to one layer.
    pub fn centroid(&self, layer: Option<crate::geometry::Layer>) -> nalgebra::Vector2<f64> {
        let mut c = nalgebra::Vector2::zeros();
        let mut w = 0.0;
        for ((s, p), a) in self.table.sites().iter().zip(self.table.positions()).zip(&self.amps) {
            if layer.map_or(true, |l| l == s.layer) {
                let m = a.norm_sqr();
                c += p * m;
                w += m;
            }
        }
        if w > 0.0 {
            c / w
        } else {
            c
        }
    }

    /// CSV with columns `layer,sublattice,n1,n2,x,y,re,im,abs`.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: Option<&str>) -> Result<()> {
        if let Some(m) = metadata {
            writeln!(w, "# metadata: {m}")?;
        }
        writeln!(w, "layer,sublattice,n1,n2,x,y,re,im,abs")?;
        for ((s, p), a) in self.table.sites().iter().zip(self.table.positions()).zip(&self.amps) {
            writeln!(
                w,
                "{},{},{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
                s.layer.number(),
                s.sublattice,
                s.cell[0],
                s.cell[1],
                p.x,
                p.y,
                a.re,
                a.im,
                a.norm()
            )?;
        }
        Ok(())
    }
}

pub(crate) fn l2_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{enumerate_sites, LatticeParams};

    #[test]
    fn transfer_and_norms() {
        let p = LatticeParams::physical();
        let small = Arc::new(enumerate_sites(&p, 5.0).unwrap());
        let big = Arc::new(enumerate_sites(&p, 9.0).unwrap());
        let amps = (0..small.len()).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let s = LatticeState::new(small.clone(), amps).unwrap();
        let b = s.transfer_to(&big);
        assert!((b.norm() - s.norm()).abs() < 1e-12);
        let back = b.transfer_to(&small);
        assert_eq!(back.distance(&s).unwrap(), 0.0);
        assert!((b.norm_inside(5.0) - s.norm()).abs() < 1e-12);
        assert_eq!(b.norm_outside(5.0), 0.0);
        assert!(LatticeState::new(small, vec![]).is_err());
        assert!(s.distance(&b).is_err());
    }

    #[test]
    fn csv_rows() {
        let t = Arc::new(enumerate_sites(&LatticeParams::physical(), 3.0).unwrap());
        let s = LatticeState::zeros(t.clone());
        let mut buf = Vec::new();
        s.write_csv(&mut buf, Some("{}")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "# metadata: {}");
        assert_eq!(lines[1], "layer,sublattice,n1,n2,x,y,re,im,abs");
        assert_eq!(lines.len(), t.len() + 2);
    }
}
