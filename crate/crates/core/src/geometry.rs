//! Monolayer, bilayer and moire lattice geometry, and enumeration of the
//! truncated orbital set inside a disk.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Convention used for the moire Dirac point, stamped into run metadata.
pub const MOIRE_K_CONVENTION: &str = "K_m = (2 b_m1 + b_m2) / 3";

/// Counter-clockwise rotation by `angle` radians.
pub fn rotation(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// Monolayer lattice constant, twist angle and interlayer distance.
///
/// Lengths are in angstrom, the angle in radians. Negative angles are
/// accepted (the mirror-image bilayer), which the chirality study needs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    pub a: f64,
    pub theta: f64,
    pub interlayer_distance: f64,
}

impl LatticeParams {
    pub fn new(a: f64, theta: f64, interlayer_distance: f64) -> Result<Self> {
        let p = Self {
            a,
            theta,
            interlayer_distance,
        };
        p.validate()?;
        Ok(p)
    }

    /// a = 2.5 A, theta = 1.05 degrees, L = 3.5 A.
    pub fn physical() -> Self {
        Self {
            a: 2.5,
            theta: 1.05_f64.to_radians(),
            interlayer_distance: 3.5,
        }
    }

    pub fn with_theta(self, theta: f64) -> Self {
        Self { theta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(invalid("a", format!("must be positive, got {}", self.a)));
        }
        if !(self.interlayer_distance >= 0.0) {
            return Err(invalid(
                "interlayer_distance",
                format!("must be nonnegative, got {}", self.interlayer_distance),
            ));
        }
        if !(self.theta.abs() < PI / 3.0) {
            return Err(invalid(
                "theta",
                format!("|theta| must be below pi/3, got {}", self.theta),
            ));
        }
        Ok(())
    }

    /// Nearest-neighbor distance a / sqrt(3).
    pub fn delta(&self) -> f64 {
        self.a / 3f64.sqrt()
    }

    /// Unit cell area sqrt(3) a^2 / 2.
    pub fn cell_area(&self) -> f64 {
        3f64.sqrt() * self.a * self.a / 2.0
    }

    /// |K| = 4 pi / (3 a).
    pub fn dirac_momentum(&self) -> f64 {
        4.0 * PI / (3.0 * self.a)
    }

    /// Signed 2 |K| sin(theta / 2); its absolute value is |K_1 - K_2|.
    pub fn delta_k(&self) -> f64 {
        2.0 * self.dirac_momentum() * (self.theta / 2.0).sin()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    One,
    Two,
}

impl Layer {
    pub fn index(self) -> usize {
        match self {
            Layer::One => 0,
            Layer::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sublattice {
    A,
    B,
}

impl Sublattice {
    pub fn index(self) -> usize {
        match self {
            Sublattice::A => 0,
            Sublattice::B => 1,
        }
    }
}

impl fmt::Display for Sublattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sublattice::A => write!(f, "A"),
            Sublattice::B => write!(f, "B"),
        }
    }
}

/// An orbital of the bilayer: layer, sublattice and integer cell coordinates.
///
/// The derived ordering is lexicographic in (layer, sublattice, n1, n2).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteIndex {
    pub layer: Layer,
    pub sublattice: Sublattice,
    pub cell: [i64; 2],
}

impl SiteIndex {
    pub fn new(layer: Layer, sublattice: Sublattice, n1: i64, n2: i64) -> Self {
        Self {
            layer,
            sublattice,
            cell: [n1, n2],
        }
    }

    /// Envelope component this orbital samples: (f1A, f1B, f2A, f2B).
    pub fn component(&self) -> usize {
        2 * self.layer.index() + self.sublattice.index()
    }
}

/// Lattice data of one (possibly rotated) graphene sheet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerBasis {
    /// Columns are the lattice vectors a_1, a_2.
    pub lattice: Mat2,
    /// Columns are the reciprocal vectors b_1, b_2.
    pub reciprocal: Mat2,
    pub k: Vec2,
    pub k_prime: Vec2,
    /// Sublattice offsets tau^A, tau^B.
    pub tau: [Vec2; 2],
}

impl LayerBasis {
    fn rotated(&self, angle: f64) -> Self {
        let r = rotation(angle);
        Self {
            lattice: r * self.lattice,
            reciprocal: r * self.reciprocal,
            k: r * self.k,
            k_prime: r * self.k_prime,
            tau: [r * self.tau[0], r * self.tau[1]],
        }
    }

    pub fn position(&self, sublattice: Sublattice, cell: [i64; 2]) -> Vec2 {
        self.lattice * Vec2::new(cell[0] as f64, cell[1] as f64) + self.tau[sublattice.index()]
    }
}

/// Unrotated monolayer: a_1 = (a/2)(1, sqrt 3), a_2 = (a/2)(-1, sqrt 3),
/// tau^A = 0, tau^B = (0, delta), K = (4 pi / 3a)(1, 0).
pub fn monolayer_basis(params: &LatticeParams) -> LayerBasis {
    let a = params.a;
    let s3 = 3f64.sqrt();
    let lattice = Mat2::new(a / 2.0, -a / 2.0, s3 * a / 2.0, s3 * a / 2.0);
    let pref = 4.0 * PI / (3.0 * params.delta());
    let reciprocal = Mat2::new(pref * s3 / 2.0, -pref * s3 / 2.0, pref / 2.0, pref / 2.0);
    let k = Vec2::new(params.dirac_momentum(), 0.0);
    LayerBasis {
        lattice,
        reciprocal,
        k,
        k_prime: -k,
        tau: [Vec2::zeros(), Vec2::new(0.0, params.delta())],
    }
}

/// Both sheets of the bilayer: layer 1 rotated by -theta/2, layer 2 by +theta/2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TbgBasis {
    pub layers: [LayerBasis; 2],
}

impl TbgBasis {
    pub fn layer(&self, layer: Layer) -> &LayerBasis {
        &self.layers[layer.index()]
    }

    pub fn position(&self, site: &SiteIndex) -> Vec2 {
        self.layer(site.layer).position(site.sublattice, site.cell)
    }
}

pub fn tbg_basis(params: &LatticeParams) -> TbgBasis {
    let mono = monolayer_basis(params);
    TbgBasis {
        layers: [
            mono.rotated(-params.theta / 2.0),
            mono.rotated(params.theta / 2.0),
        ],
    }
}

/// Moire reciprocal and direct lattice vectors and the moire Dirac point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoireData {
    pub b_m1: Vec2,
    pub b_m2: Vec2,
    pub a_m1: Vec2,
    pub a_m2: Vec2,
    pub k_m: Vec2,
}

impl MoireData {
    pub fn convention(&self) -> &'static str {
        MOIRE_K_CONVENTION
    }

    /// Columns b_m1, b_m2.
    pub fn reciprocal(&self) -> Mat2 {
        Mat2::from_columns(&[self.b_m1, self.b_m2])
    }

    pub fn cell_area(&self) -> f64 {
        (self.a_m1.x * self.a_m2.y - self.a_m1.y * self.a_m2.x).abs()
    }
}

pub fn moire_data(params: &LatticeParams) -> Result<MoireData> {
    if params.theta == 0.0 {
        return Err(Error::DegenerateAngle { theta: 0.0 });
    }
    let basis = tbg_basis(params);
    let b1 = basis.layers[0].reciprocal;
    let b2 = basis.layers[1].reciprocal;
    let b_m1 = b1.column(0) - b2.column(0);
    let b_m2 = b1.column(1) - b2.column(1);
    // a_m = 2 pi (B_m^T)^{-1}
    let bm = Mat2::from_columns(&[b_m1, b_m2]);
    let am = bm
        .transpose()
        .try_inverse()
        .ok_or(Error::DegenerateAngle {
            theta: params.theta,
        })?
        * (2.0 * PI);
    Ok(MoireData {
        b_m1,
        b_m2,
        a_m1: am.column(0).into(),
        a_m2: am.column(1).into(),
        k_m: (2.0 * b_m1 + b_m2) / 3.0,
    })
}

/// Orbitals of the bilayer inside the closed disk of radius `radius`.
#[derive(Clone, Debug)]
pub struct SiteTable {
    params: LatticeParams,
    radius: f64,
    sites: Vec<SiteIndex>,
    positions: Vec<Vec2>,
    lookup: HashMap<SiteIndex, usize>,
}

impl SiteTable {
    /// Builds a table from an explicit site list (sorted and deduplicated).
    pub fn from_sites(params: &LatticeParams, mut sites: Vec<SiteIndex>) -> Result<Self> {
        params.validate()?;
        if sites.is_empty() {
            return Err(invalid("sites", "must not be empty"));
        }
        sites.sort();
        sites.dedup();
        let basis = tbg_basis(params);
        let positions: Vec<Vec2> = sites.iter().map(|s| basis.position(s)).collect();
        let radius = positions.iter().fold(0.0f64, |r, p| r.max(p.norm()));
        let lookup = sites.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Ok(Self {
            params: *params,
            radius,
            sites,
            positions,
            lookup,
        })
    }

    pub fn params(&self) -> &LatticeParams {
        &self.params
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[SiteIndex] {
        &self.sites
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn site(&self, i: usize) -> &SiteIndex {
        &self.sites[i]
    }

    pub fn position(&self, i: usize) -> Vec2 {
        self.positions[i]
    }

    pub fn index_of(&self, site: &SiteIndex) -> Option<usize> {
        self.lookup.get(site).copied()
    }

    /// CSV with columns `layer,sublattice,n1,n2,x,y`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "layer,sublattice,n1,n2,x,y")?;
        for (s, p) in self.sites.iter().zip(&self.positions) {
            writeln!(
                w,
                "{},{},{},{},{:.12e},{:.12e}",
                s.layer.number(),
                s.sublattice,
                s.cell[0],
                s.cell[1],
                p.x,
                p.y
            )?;
        }
        Ok(())
    }
}

/// Enumerates every orbital with |R_i + tau_i^sigma| <= radius.
pub fn enumerate_sites(params: &LatticeParams, radius: f64) -> Result<SiteTable> {
    params.validate()?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid("radius", format!("must be positive, got {radius}")));
    }
    let basis = tbg_basis(params);
    // |n_i| = |b_i . x| / 2 pi <= |x| * 2 / (sqrt(3) a) for every point of the disk.
    let reach = (radius + params.delta()) * 2.0 / (3f64.sqrt() * params.a);
    let nmax = reach.ceil() as i64 + 2;
    let mut sites = Vec::new();
    let mut positions = Vec::new();
    for layer in [Layer::One, Layer::Two] {
        let lb = basis.layer(layer);
        for sub in [Sublattice::A, Sublattice::B] {
            for n1 in -nmax..=nmax {
                for n2 in -nmax..=nmax {
                    let p = lb.position(sub, [n1, n2]);
                    if p.norm() <= radius {
                        sites.push(SiteIndex::new(layer, sub, n1, n2));
                        positions.push(p);
                    }
                }
            }
        }
    }
    let lookup = sites.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    Ok(SiteTable {
        params: *params,
        radius,
        sites,
        positions,
        lookup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derived_monolayer_quantities() {
        let p = LatticeParams::physical();
        assert_relative_eq!(p.delta(), 1.443376, epsilon = 1e-6);
        assert_relative_eq!(p.cell_area(), 5.412659, epsilon = 1e-6);
        assert_relative_eq!(p.dirac_momentum(), 1.675516, epsilon = 1e-6);
    }

    #[test]
    fn monolayer_reciprocal_relation() {
        for a in [1.0, 2.5, 3.7] {
            let p = LatticeParams::new(a, 0.0, 0.0).unwrap();
            let m = monolayer_basis(&p);
            let prod = m.lattice.transpose() * m.reciprocal;
            assert_relative_eq!(prod, Mat2::identity() * 2.0 * PI, epsilon = 1e-12);
            assert_relative_eq!(m.tau[1].norm(), p.delta(), epsilon = 1e-15);
        }
    }

    #[test]
    fn twisted_layers() {
        let p = LatticeParams::physical().with_theta(0.0);
        let b = tbg_basis(&p);
        let m = monolayer_basis(&p);
        assert_eq!(b.layers[0], m);
        assert_eq!(b.layers[1], m);

        let p = LatticeParams::physical();
        let b = tbg_basis(&p);
        let dk = (b.layers[0].k - b.layers[1].k).norm();
        assert_relative_eq!(dk, p.delta_k(), epsilon = 1e-15);
        assert_relative_eq!(dk, 0.030705, epsilon = 1e-6);
    }

    #[test]
    fn moire_vectors_match_closed_forms() {
        for deg in [0.5, 1.05, 4.0, 10.0] {
            let p = LatticeParams::physical().with_theta(f64::to_radians(deg));
            let m = moire_data(&p).unwrap();
            let dk = p.delta_k();
            let s3 = 3f64.sqrt();
            assert_relative_eq!(m.b_m1, s3 * dk * Vec2::new(0.5, -s3 / 2.0), epsilon = 1e-12);
            assert_relative_eq!(m.b_m2, s3 * dk * Vec2::new(0.5, s3 / 2.0), epsilon = 1e-12);
            let pref = 4.0 * PI / (3.0 * dk);
            assert_relative_eq!(m.a_m1, pref * Vec2::new(s3 / 2.0, -0.5), max_relative = 1e-12);
            assert_relative_eq!(m.a_m2, pref * Vec2::new(s3 / 2.0, 0.5), max_relative = 1e-12);
            let am = Mat2::from_columns(&[m.a_m1, m.a_m2]);
            let dual = am.transpose() * m.reciprocal() / (2.0 * PI);
            assert_relative_eq!(dual, Mat2::identity(), epsilon = 1e-12);
        }
    }

    #[test]
    fn moire_cell_sizes() {
        let m = moire_data(&LatticeParams::physical()).unwrap();
        assert_relative_eq!(m.a_m1.norm(), 136.43, epsilon = 0.01);
        let m4 = moire_data(&LatticeParams::physical().with_theta(4f64.to_radians())).unwrap();
        assert_relative_eq!(m4.a_m1.norm(), 35.8, epsilon = 0.05);
    }

    #[test]
    fn zero_angle_has_no_moire_cell() {
        let p = LatticeParams::physical().with_theta(0.0);
        assert!(matches!(moire_data(&p), Err(Error::DegenerateAngle { .. })));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(LatticeParams::new(-1.0, 0.1, 3.5).is_err());
        assert!(LatticeParams::new(2.5, 1.1, 3.5).is_err());
        assert!(LatticeParams::new(2.5, 0.1, -1.0).is_err());
        assert!(enumerate_sites(&LatticeParams::physical(), 0.0).is_err());
    }

    #[test]
    fn tiny_radius_keeps_origin_a_sites() {
        let p = LatticeParams::physical().with_theta(0.0);
        let t = enumerate_sites(&p, p.delta() / 2.0 - 1e-3).unwrap();
        assert_eq!(
            t.sites(),
            &[
                SiteIndex::new(Layer::One, Sublattice::A, 0, 0),
                SiteIndex::new(Layer::Two, Sublattice::A, 0, 0)
            ]
        );
    }

    #[test]
    fn r10_count() {
        let p = LatticeParams::physical();
        let t = enumerate_sites(&p, 10.0).unwrap();
        assert!((t.len() as i64 - 232).abs() <= 8, "count {}", t.len());
        assert!(t.len() <= 400);
    }

    #[test]
    fn table_is_sorted_complete_and_injective() {
        let p = LatticeParams::physical();
        let r = 12.0;
        let t = enumerate_sites(&p, r).unwrap();
        assert!(t.sites().windows(2).all(|w| w[0] < w[1]));
        // brute force over a generous window
        let basis = tbg_basis(&p);
        let mut expected = 0;
        for layer in [Layer::One, Layer::Two] {
            for sub in [Sublattice::A, Sublattice::B] {
                for n1 in -30..=30 {
                    for n2 in -30..=30 {
                        let s = SiteIndex::new(layer, sub, n1, n2);
                        if basis.position(&s).norm() <= r {
                            expected += 1;
                            assert!(t.index_of(&s).is_some());
                        }
                    }
                }
            }
        }
        assert_eq!(expected, t.len());
        let pos = t.positions();
        let mut min_d = f64::INFINITY;
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                if t.site(i).layer != t.site(j).layer {
                    continue;
                }
                min_d = min_d.min((pos[i] - pos[j]).norm());
            }
        }
        assert!(min_d > 1e-6, "min distance {min_d}");
    }

    #[test]
    fn csv_header_and_rows() {
        let t = enumerate_sites(&LatticeParams::physical(), 3.0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("layer,sublattice,n1,n2,x,y"));
        assert_eq!(lines.count(), t.len());
    }
}
