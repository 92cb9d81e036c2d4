//! Numerical studies comparing the tight-binding and continuum models, and
//! their on-disk outputs (CSV tables with a `# metadata:` line plus a
//! `run.json` manifest per study).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bm::{
    bands, dirac_slope, flat_band_metrics, group_velocity, hellmann_feynman_velocity, high_symmetry_path,
    symmetry_points, BandIndex, BandPoint, BmParams, FlatBandMetrics, SplitStepper, StepOptions, StepReport,
};
use crate::bounds::{optimal_bound, plan_radius, BoundCertificate, PlanOptions};
use crate::config::{Preset, RunConfig, Study};
use crate::envelope::{Envelope, Fft2, Grid};
use crate::error::{invalid, Error, Result};
use crate::geometry::{enumerate_sites, LatticeParams, Layer, SiteTable, Vec2, MOIRE_K_CONVENTION};
use crate::hamiltonian::{assemble, HoppingModel};
use crate::propagator::{evolve_snapshots_block, PropagatorOptions};
use crate::state::LatticeState;
use crate::wavepacket::{
    coefficient_patterns, comparison_error, envelope_to_lattice_raw, lattice_to_envelope, make_envelope, FitOptions,
    InitialCondition, WavepacketSpec,
};

/// Conventions stamped into every manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub moire_k: String,
    pub band_index: String,
    pub sigma_r: String,
    pub time_unit: String,
    pub envelope_frame: String,
    pub plane_wave_basis: String,
    pub truncation_error: String,
    pub interlayer_cutoff: String,
}

impl Conventions {
    pub fn new(cfg: &RunConfig) -> Self {
        let lattice = cfg.lattice_params();
        Self {
            moire_k: MOIRE_K_CONVENTION.into(),
            band_index: "0 = lowest band above charge neutrality, -1 = highest below, 1 = third band".into(),
            sigma_r: format!("{:?} (sigma_r = {} A)", cfg.wavepacket.width_convention, cfg.sigma_r()),
            time_unit: "hbar/eV".into(),
            envelope_frame: "layer l carries e^{i K_l . r}; the continuum kinetic term acts on unshifted momenta".into(),
            plane_wave_basis: format!("max(|n1|, |n2|) <= {}", cfg.bm.cutoff),
            truncation_error: "certificate bounds the distance to the infinite system; measured errors use a finite reference".into(),
            interlayer_cutoff: format!(
                "{} A, dropped row mass <= {:.3e} eV",
                cfg.hopping.interlayer_cutoff,
                cfg.hopping.dropped_mass_bound(&lattice)
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub columns: Vec<String>,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub study: Study,
    pub preset: Preset,
    pub code_version: String,
    pub config: RunConfig,
    pub conventions: Conventions,
    pub files: Vec<FileEntry>,
    pub summary: Value,
}

/// Collects output files of one study and writes the manifest.
pub struct OutputWriter {
    dir: PathBuf,
    meta: String,
    files: Vec<FileEntry>,
}

impl OutputWriter {
    pub fn new(dir: impl AsRef<Path>, cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
            meta: cfg.to_line(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` with a metadata line, a header and `rows`.
    pub fn csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<String>], description: &str) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(self.dir.join(name))?);
        writeln!(w, "# metadata: {}", self.meta)?;
        writeln!(w, "{}", columns.join(","))?;
        for row in rows {
            if row.len() != columns.len() {
                return Err(Error::DimensionMismatch {
                    expected: columns.len(),
                    got: row.len(),
                });
            }
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        self.register(name, columns, description);
        Ok(())
    }

    /// Records a file written by other means.
    pub fn register(&mut self, name: &str, columns: &[&str], description: &str) {
        self.files.push(FileEntry {
            path: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            description: description.into(),
        });
    }

    pub fn metadata(&self) -> &str {
        &self.meta
    }

    pub fn finish(self, cfg: &RunConfig, summary: Value) -> Result<Manifest> {
        let manifest = Manifest {
            study: cfg.study,
            preset: cfg.preset,
            code_version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            conventions: Conventions::new(cfg),
            files: self.files,
            summary,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.dir.join("run.json"), text)?;
        Ok(manifest)
    }
}

fn f(x: f64) -> String {
    format!("{x:.10e}")
}

/// Least-squares slope of y on x with a separate intercept per group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    /// Half width of the 95% confidence interval (NaN without spare degrees of freedom).
    pub ci95: f64,
    pub r_squared: f64,
    pub residual_rms: f64,
    pub points: usize,
    pub groups: usize,
}

pub fn grouped_slope(points: &[(usize, f64, f64)]) -> Result<SlopeFit> {
    let mut groups: Vec<usize> = points.iter().map(|p| p.0).collect();
    groups.sort_unstable();
    groups.dedup();
    let mean = |g: usize, pick: fn(&(usize, f64, f64)) -> f64| {
        let v: Vec<f64> = points.iter().filter(|p| p.0 == g).map(pick).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let centred: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.1 - mean(p.0, |q| q.1), p.2 - mean(p.0, |q| q.2)))
        .collect();
    let sxx: f64 = centred.iter().map(|c| c.0 * c.0).sum();
    let syy: f64 = centred.iter().map(|c| c.1 * c.1).sum();
    if !(sxx > 0.0) {
        return Err(invalid("fit", "need at least two distinct abscissae in some group"));
    }
    let slope = centred.iter().map(|c| c.0 * c.1).sum::<f64>() / sxx;
    let ss: f64 = centred.iter().map(|c| (c.1 - slope * c.0).powi(2)).sum();
    let df = points.len() as i64 - groups.len() as i64 - 1;
    let ci95 = if df > 0 {
        let se = (ss / df as f64 / sxx).sqrt();
        let q = StudentsT::new(0.0, 1.0, df as f64)
            .map_err(|e| invalid("fit", e.to_string()))?
            .inverse_cdf(0.975);
        q * se
    } else {
        f64::NAN
    };
    Ok(SlopeFit {
        slope,
        ci95,
        r_squared: if syy > 0.0 { 1.0 - ss / syy } else { 1.0 },
        residual_rms: (ss / points.len() as f64).sqrt(),
        points: points.len(),
        groups: groups.len(),
    })
}

/// Log-log slope with one group per `group` key.
pub fn loglog_slope(points: &[(usize, f64, f64)]) -> Result<SlopeFit> {
    let logged: Vec<_> = points
        .iter()
        .filter(|p| p.1 > 0.0 && p.2 > 0.0)
        .map(|p| (p.0, p.1.ln(), p.2.ln()))
        .collect();
    if logged.len() != points.len() {
        return Err(invalid("fit", "log-log fit needs positive data"));
    }
    grouped_slope(&logged)
}

// ---------------------------------------------------------------- truncation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationRow {
    pub radius: f64,
    pub t: f64,
    pub relative_error: f64,
    pub error_min: f64,
    pub error_max: f64,
    pub certificate: BoundCertificate,
    /// Certificate at the reference radius.
    pub reference_certificate: f64,
    /// Rigorous bound on the measured quantity: certificate(R) + certificate(R').
    pub certified_total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub t: f64,
    /// d ln(error) / dR (1/A).
    pub slope: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub reference_radius: f64,
    pub r: f64,
    pub sigma_r: f64,
    pub initial_conditions: usize,
    pub rows: Vec<TruncationRow>,
    pub fits: Vec<DecayFit>,
    pub violations: usize,
}

fn grid_for(radius: f64, sigma_r: f64, max_spacing: f64) -> Result<Grid> {
    let side = 2.0 * (1.15 * radius + 3.0 * sigma_r);
    Grid::with_spacing(side.max(8.0 * sigma_r), max_spacing.min(sigma_r / 3.0))
}

pub fn study_truncation(cfg: &RunConfig) -> Result<TruncationReport> {
    let tc = &cfg.truncation;
    let lattice = cfg.lattice_params();
    let model = cfg.hopping;
    let bm = cfg.bm_params();
    if tc.radii.is_empty() || tc.times.is_empty() {
        return Err(invalid("truncation", "radii and times must be nonempty"));
    }
    if tc.radii.iter().any(|&r| !(r > tc.r && r <= tc.reference_radius)) {
        return Err(invalid("truncation.radii", "each radius must lie in (r, reference_radius]"));
    }
    let reference = Arc::new(enumerate_sites(&lattice, tc.reference_radius)?);
    let grid = grid_for(tc.reference_radius, tc.sigma_r, cfg.compare.max_spacing)?;
    let states: Vec<LatticeState> = coefficient_patterns()[..tc.initial_conditions]
        .iter()
        .map(|c| {
            let spec = WavepacketSpec::gaussian(*c, tc.sigma_r);
            let mut ic = make_envelope(&spec, &bm, &grid, &reference, tc.r, cfg.split_step.containment_limit)?;
            ic.state.normalize();
            Ok(ic.state)
        })
        .collect::<Result<_>>()?;
    let mut times = tc.times.clone();
    times.sort_by(|a, b| a.total_cmp(b));
    times.dedup();
    let opts = cfg.propagator_options(times.clone());
    let h_ref = assemble(reference.clone(), &model)?;
    let ref_snaps = evolve_snapshots_block(&h_ref, &states, &opts)?;
    drop(h_ref);
    let plan = PlanOptions {
        nu: cfg.bound.nu,
        ..PlanOptions::default()
    };
    let mut rows = Vec::new();
    for &radius in &tc.radii {
        let table = Arc::new(enumerate_sites(&lattice, radius)?);
        let local: Vec<LatticeState> = states.iter().map(|s| s.transfer_to(&table)).collect();
        let snaps = if radius == tc.reference_radius {
            ref_snaps.clone()
        } else {
            let h = assemble(table.clone(), &model)?;
            evolve_snapshots_block(&h, &local, &opts)?
        };
        for (ti, &t) in times.iter().enumerate() {
            let errs: Vec<f64> = snaps[ti]
                .iter()
                .zip(&ref_snaps[ti])
                .map(|(a, b)| a.transfer_to(&reference).distance(b))
                .collect::<Result<_>>()?;
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            let cert = optimal_bound(radius, tc.r, t, 1.0, 0.0, &model, &lattice, &plan)?;
            let ref_cert = optimal_bound(tc.reference_radius, tc.r, t, 1.0, 0.0, &model, &lattice, &plan)?;
            rows.push(TruncationRow {
                radius,
                t,
                relative_error: mean,
                error_min: errs.iter().copied().fold(f64::INFINITY, f64::min),
                error_max: errs.iter().copied().fold(0.0, f64::max),
                certified_total: cert.bound_value + ref_cert.bound_value,
                reference_certificate: ref_cert.bound_value,
                certificate: cert,
            });
        }
    }
    let mut fits = Vec::new();
    for &t in &times {
        let pts: Vec<(usize, f64, f64)> = rows
            .iter()
            .filter(|r| r.t == t && r.relative_error > 0.0)
            .map(|r| (0, r.radius, r.relative_error.ln()))
            .collect();
        if pts.len() >= 2 {
            let fit = grouped_slope(&pts)?;
            fits.push(DecayFit {
                t,
                slope: fit.slope,
                r_squared: fit.r_squared,
            });
        }
    }
    let violations = rows.iter().filter(|r| r.relative_error > r.certified_total).count();
    Ok(TruncationReport {
        reference_radius: tc.reference_radius,
        r: tc.r,
        sigma_r: tc.sigma_r,
        initial_conditions: tc.initial_conditions,
        rows,
        fits,
        violations,
    })
}

pub fn write_truncation(report: &TruncationReport, out: &mut OutputWriter) -> Result<()> {
    let cols = [
        "R", "t", "relative_error", "error_min", "error_max", "certificate", "ln_certificate", "reference_certificate",
        "certified_total", "d", "alpha_max", "C_gamma", "C1", "omega_R_count", "omega_r_count",
    ];
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let c = &r.certificate;
            vec![
                f(r.radius),
                f(r.t),
                f(r.relative_error),
                f(r.error_min),
                f(r.error_max),
                f(c.bound_value),
                f(c.ln_bound),
                f(r.reference_certificate),
                f(r.certified_total),
                f(c.d),
                f(c.alpha_max),
                f(c.c_gamma),
                f(c.c1),
                c.omega_big_r_count.to_string(),
                c.omega_r_count.to_string(),
            ]
        })
        .collect();
    out.csv("truncation.csv", &cols, &rows, "truncation error against the reference radius, with certificates")?;
    let fits: Vec<Vec<String>> = report.fits.iter().map(|x| vec![f(x.t), f(x.slope), f(x.r_squared)]).collect();
    out.csv("truncation_fits.csv", &["t", "slope", "r_squared"], &fits, "log-linear fit of error against R per time")
}

// --------------------------------------------------------------------- bands

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedMethod {
    FiniteDifference,
    /// Mean slope of a conical crossing, used at degenerate points.
    ConeSlope,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSpeed {
    pub band: i32,
    pub k: Vec2,
    pub speed: f64,
    pub method: SpeedMethod,
}

/// |grad E| of `band` at `k`; at a crossing, the slope of the cone instead.
pub fn band_speed(band: BandIndex, k: Vec2, bm: &BmParams, cutoff: usize) -> Result<BandSpeed> {
    match group_velocity(band, k, bm, cutoff) {
        Ok(g) => Ok(BandSpeed {
            band: band.0,
            k,
            speed: g.norm(),
            method: SpeedMethod::FiniteDifference,
        }),
        Err(Error::DegenerateBand { .. }) => {
            let basis = crate::bm::PlaneWaveBasis::new(bm, cutoff)?;
            let e = crate::bm::energies(k, bm, &basis)?;
            let pos = band.sorted_position(e.len())?;
            let upper = if pos > 0 && e[pos] - e[pos - 1] < crate::bm::DEGENERACY_TOL { band } else { BandIndex(band.0 + 1) };
            Ok(BandSpeed {
                band: band.0,
                k,
                speed: dirac_slope(upper, k, bm, cutoff, 12)?,
                method: SpeedMethod::ConeSlope,
            })
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientPoint {
    pub label: String,
    pub band: i32,
    pub k: Vec2,
    pub gradient: Vec2,
    pub hellmann_feynman: Vec2,
    pub angle_deg: f64,
    pub angle_gap_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandsReport {
    pub params: BmParams,
    pub rows: Vec<BandPoint>,
    pub path_labels: Vec<(usize, String)>,
    pub metrics: FlatBandMetrics,
    pub flat_pair: bool,
    pub flat_speed: BandSpeed,
    pub third_speed: BandSpeed,
    pub gradients: Vec<GradientPoint>,
    pub contrast_theta_deg: f64,
    pub contrast_metrics: FlatBandMetrics,
    pub contrast_flat_pair: bool,
}

/// Flat widths at most 0.02 eV and remote widths above 0.05 eV.
pub fn has_flat_pair(m: &FlatBandMetrics) -> bool {
    m.upper_flat_width <= 0.02 && m.lower_flat_width <= 0.02 && m.upper_remote_width > 0.05 && m.lower_remote_width > 0.05
}

fn angle_between(a: Vec2, b: Vec2) -> f64 {
    let c = (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

pub fn study_bands(cfg: &RunConfig) -> Result<BandsReport> {
    let bm = cfg.bm_params();
    let cutoff = cfg.bm.cutoff;
    let bc = &cfg.bands;
    let path = high_symmetry_path(&bm, bc.per_segment)?;
    let rows = bands(&path, &bm, cutoff, bc.n_bands)?;
    let labels = ["K_m", "Gamma_m", "M_m", "K_m'"]
        .iter()
        .enumerate()
        .map(|(i, l)| (i * bc.per_segment, l.to_string()))
        .collect();
    let metrics = flat_band_metrics(&bm, cutoff, bc.k_grid)?;
    let km = symmetry_points(&bm)?.k_m;
    let flat_speed = band_speed(BandIndex::UPPER_FLAT, km, &bm, cutoff)?;
    let third_speed = band_speed(BandIndex::THIRD, km, &bm, cutoff)?;
    let mut gradients = Vec::new();
    for (label, k) in [("k1", Vec2::new(0.0, -0.02)), ("k2", Vec2::new(0.01, -0.0275))] {
        let g = group_velocity(BandIndex::THIRD, k, &bm, cutoff)?;
        let hf = hellmann_feynman_velocity(BandIndex::THIRD, k, &bm, cutoff)?;
        gradients.push(GradientPoint {
            label: label.into(),
            band: BandIndex::THIRD.0,
            k,
            gradient: g,
            hellmann_feynman: hf,
            angle_deg: g.y.atan2(g.x).to_degrees(),
            angle_gap_deg: angle_between(g, hf),
        });
    }
    let contrast = BmParams {
        theta: bc.contrast_theta_deg.to_radians(),
        ..bm
    };
    let contrast_metrics = flat_band_metrics(&contrast, cutoff, bc.k_grid)?;
    Ok(BandsReport {
        params: bm,
        rows,
        path_labels: labels,
        flat_pair: has_flat_pair(&metrics),
        metrics,
        flat_speed,
        third_speed,
        gradients,
        contrast_theta_deg: bc.contrast_theta_deg,
        contrast_flat_pair: has_flat_pair(&contrast_metrics),
        contrast_metrics,
    })
}

pub fn write_bands(report: &BandsReport, out: &mut OutputWriter) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|p| vec![f(p.k.x), f(p.k.y), p.band.to_string(), f(p.energy)])
        .collect();
    out.csv("bands.csv", &["kx", "ky", "band_index", "energy"], &rows, "band energies along K_m - Gamma_m - M_m - K_m'")?;
    let grads: Vec<Vec<String>> = report
        .gradients
        .iter()
        .map(|g| {
            vec![
                g.label.clone(),
                g.band.to_string(),
                f(g.k.x),
                f(g.k.y),
                f(g.gradient.x),
                f(g.gradient.y),
                f(g.angle_deg),
            ]
        })
        .collect();
    out.csv(
        "gradients.csv",
        &["label", "band_index", "kx", "ky", "grad_x", "grad_y", "angle_deg"],
        &grads,
        "group velocities on the third band",
    )?;
    let m = &report.metrics;
    let metric_rows = vec![
        vec!["upper_flat_width".into(), f(m.upper_flat_width)],
        vec!["lower_flat_width".into(), f(m.lower_flat_width)],
        vec!["upper_remote_width".into(), f(m.upper_remote_width)],
        vec!["lower_remote_width".into(), f(m.lower_remote_width)],
        vec!["particle_hole_asymmetry".into(), f(m.particle_hole_asymmetry)],
        vec!["flat_speed_km".into(), f(report.flat_speed.speed)],
        vec!["third_speed_km".into(), f(report.third_speed.speed)],
        vec!["v".into(), f(report.params.v)],
    ];
    out.csv("band_metrics.csv", &["metric", "value"], &metric_rows, "flat-band diagnostics")
}

// ------------------------------------------------------------------- compare

/// Radii and envelope grid for a matched run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairGeometry {
    pub r: f64,
    pub radius: f64,
    pub grid: Grid,
}

/// r = support_sigmas sigma_r and R = r + v t_max + 2 sigma_r unless given.
pub fn pair_geometry(
    sigma_r: f64,
    v: f64,
    t_max: f64,
    support_sigmas: f64,
    r: f64,
    radius: f64,
    max_spacing: f64,
) -> Result<PairGeometry> {
    let r = if r > 0.0 { r } else { support_sigmas * sigma_r };
    let radius = if radius > 0.0 { radius } else { r + v * t_max + 2.0 * sigma_r };
    if !(radius > r) {
        return Err(invalid("radius", format!("truncation radius {radius} must exceed r = {r}")));
    }
    let reach = radius.max(support_sigmas * sigma_r + v * t_max);
    let grid = grid_for(reach, sigma_r, max_spacing)?;
    Ok(PairGeometry { r, radius, grid })
}

/// Both models evolved from one matched initial condition.
#[derive(Clone, Debug)]
pub struct PairRun {
    pub times: Vec<f64>,
    pub initial: InitialCondition,
    pub tb: Vec<LatticeState>,
    pub bm: Vec<Envelope>,
    pub steps: Vec<StepReport>,
    pub errors: Vec<f64>,
}

impl PairRun {
    pub fn tb_centroids(&self) -> Vec<Vec2> {
        self.tb.iter().map(|s| s.centroid(None)).collect()
    }

    pub fn bm_centroids(&self) -> Vec<Vec2> {
        self.bm.iter().map(|e| e.centroid()).collect()
    }
}

/// Model parameters of one simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSetup {
    pub lattice: LatticeParams,
    pub hopping: HoppingModel,
    pub bm: BmParams,
}

pub fn run_pair(
    setup: &ModelSetup,
    spec: &WavepacketSpec,
    geom: &PairGeometry,
    times: &[f64],
    prop: &PropagatorOptions,
    step: &StepOptions,
) -> Result<PairRun> {
    let clock = Instant::now();
    let table = Arc::new(enumerate_sites(&setup.lattice, geom.radius)?);
    let ic = make_envelope(spec, &setup.bm, &geom.grid, &table, geom.r, step.containment_limit)?;
    log::debug!("initial condition on {} sites, grid {}: {:.1?}", table.len(), geom.grid.n, clock.elapsed());
    let h = assemble(table.clone(), &setup.hopping)?;
    let opts = PropagatorOptions {
        snapshot_times: times.to_vec(),
        ..prop.clone()
    };
    let tb: Vec<LatticeState> = evolve_snapshots_block(&h, std::slice::from_ref(&ic.state), &opts)?
        .into_iter()
        .map(|mut v| v.remove(0))
        .collect();
    drop(h);
    log::debug!("lattice evolution done: {:.1?}", clock.elapsed());
    let stepper = SplitStepper::new(&setup.bm, &geom.grid)?;
    let (bm, steps): (Vec<Envelope>, Vec<StepReport>) = stepper.snapshots(&ic.envelope, times, step)?.into_iter().unzip();
    log::debug!("continuum evolution done: {:.1?}", clock.elapsed());
    let errors = tb.iter().zip(&bm).map(|(s, e)| comparison_error(s, e)).collect::<Result<_>>()?;
    Ok(PairRun {
        times: times.to_vec(),
        initial: ic,
        tb,
        bm,
        steps,
        errors,
    })
}

/// <L_z> about the centroid, with the centroid-momentum part r_c x <p> removed,
/// by spectral derivatives.
pub fn angular_momentum(env: &Envelope) -> f64 {
    angular_momentum_moments(env).0
}

/// Centred <L_z> and ||L_z f|| / ||f||.
pub fn angular_momentum_moments(env: &Envelope) -> (f64, f64) {
    let grid = env.grid();
    let n = grid.n;
    let fft = Fft2::new(n);
    let (mut lz_sum, mut den, mut second) = (0.0, 0.0, 0.0);
    let (mut px, mut py, mut cx, mut cy) = (0.0, 0.0, 0.0, 0.0);
    for comp in env.components() {
        let mut hat = comp.clone();
        fft.forward(&mut hat);
        let mut dx = hat.clone();
        let mut dy = hat;
        for i in 0..grid.len() {
            let (kx, ky) = (grid.wavenumber(i % n), grid.wavenumber(i / n));
            dx[i] *= Complex64::new(0.0, kx);
            dy[i] *= Complex64::new(0.0, ky);
        }
        fft.inverse(&mut dx);
        fft.inverse(&mut dy);
        for i in 0..grid.len() {
            let p = grid.point(i);
            let w = comp[i].norm_sqr();
            let lz = dy[i] * p.x - dx[i] * p.y;
            lz_sum += (comp[i].conj() * lz).im;
            px += (comp[i].conj() * dx[i]).im;
            py += (comp[i].conj() * dy[i]).im;
            cx += w * p.x;
            cy += w * p.y;
            den += w;
            second += lz.norm_sqr();
        }
    }
    if den > 0.0 {
        let (cx, cy) = (cx / den, cy / den);
        let l = (lz_sum - (cx * py - cy * px)) / den;
        (l, (second / den).sqrt())
    } else {
        (0.0, 0.0)
    }
}

/// Angular-momentum series of both models, relative to t = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiralitySeries {
    pub times: Vec<f64>,
    /// From the fitted envelope of the tight-binding state.
    pub tb: Vec<f64>,
    /// From the continuum envelope.
    pub bm: Vec<f64>,
    /// From the fitted envelope of the continuum solution's lattice image.
    pub bm_through_fit: Vec<f64>,
    /// `tb - bm`.
    pub difference: Vec<f64>,
    /// Resolution of the diagnostic: the largest discrepancy between `bm_through_fit`
    /// and `bm`, plus 2 k tol ||L_z f|| / ||f|| at the k-th snapshot for the
    /// split-step tolerance tol.
    pub noise: f64,
}

/// Fit options for the angular-momentum diagnostic.
pub const CHIRALITY_FIT: FitOptions = FitOptions { tol: 1e-6, max_iter: 2000 };

/// Grid spacing of the fitted envelope in the angular-momentum diagnostic (A).
pub const CHIRALITY_SPACING: f64 = 2.0;

/// Power-of-two square grid of exactly `spacing` covering the sites of `table`.
pub fn fit_grid(table: &SiteTable, spacing: f64) -> Result<Grid> {
    let reach = table.positions().iter().map(|p| p.x.abs().max(p.y.abs())).fold(0.0, f64::max);
    let n = ((2.0 * reach / spacing).ceil() as usize + 4).next_power_of_two();
    Grid::new(n, n as f64 * spacing)
}

pub fn chirality_diagnostic(run: &PairRun, fit: &FitOptions, step_tol: f64) -> Result<ChiralitySeries> {
    let table = run.initial.state.table().clone();
    let grid = fit_grid(&table, CHIRALITY_SPACING)?;
    let mut tb = Vec::new();
    let mut bm = Vec::new();
    let mut through = Vec::new();
    let mut solver_noise: f64 = 0.0;
    for (k, (s, e)) in run.tb.iter().zip(&run.bm).enumerate() {
        tb.push(angular_momentum(&lattice_to_envelope(s, &grid, fit)?));
        let (l, spread) = angular_momentum_moments(e);
        bm.push(l);
        solver_noise = solver_noise.max(2.0 * k as f64 * step_tol * spread);
        log::debug!("angular momentum at t = {}: tb {}, bm {}", run.times[tb.len() - 1], tb[tb.len() - 1], bm[bm.len() - 1]);
        let img = envelope_to_lattice_raw(e, &table)?;
        through.push(angular_momentum(&lattice_to_envelope(&img, &grid, fit)?));
    }
    let rel = |v: &[f64]| v.iter().map(|x| x - v[0]).collect::<Vec<_>>();
    let (tb, bm, through) = (rel(&tb), rel(&bm), rel(&through));
    let noise = bm.iter().zip(&through).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) + solver_noise;
    let difference = tb.iter().zip(&bm).map(|(a, b)| a - b).collect();
    Ok(ChiralitySeries {
        times: run.times.clone(),
        tb,
        bm,
        difference,
        bm_through_fit: through,
        noise,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub label: String,
    pub theta: f64,
    pub band: i32,
    pub k: Vec2,
    pub sigma_r: f64,
    pub r: f64,
    pub radius: f64,
    pub grid_n: usize,
    pub grid_side: f64,
    pub phi_r: f64,
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    pub tb_centroids: Vec<Vec2>,
    pub bm_centroids: Vec<Vec2>,
    pub tb_speed: f64,
    pub bm_speed: f64,
    pub group_velocity: Option<Vec2>,
    pub displacement_angle_gap_deg: Option<f64>,
    pub chirality: Option<ChiralitySeries>,
}

fn centroid_speed(c: &[Vec2], times: &[f64]) -> f64 {
    match (c.first(), c.last(), times.first(), times.last()) {
        (Some(a), Some(b), Some(t0), Some(t1)) if t1 > t0 => (b - a).norm() / (t1 - t0),
        _ => 0.0,
    }
}

/// One comparison run plus the diagnostics reported for it.
pub fn compare_case(
    cfg: &RunConfig,
    label: &str,
    theta: f64,
    band: BandIndex,
    k: Option<Vec2>,
    with_chirality: bool,
) -> Result<(CaseSummary, PairRun)> {
    let lattice = LatticeParams {
        theta,
        ..cfg.lattice_params()
    };
    let bm = cfg.bm_for(&lattice, &cfg.hopping);
    let k = match k {
        Some(k) => k,
        None => symmetry_points(&bm)?.k_m,
    };
    let setup = ModelSetup {
        lattice,
        hopping: cfg.hopping,
        bm,
    };
    let sigma = cfg.sigma_r();
    let mut times = cfg.compare.times.clone();
    if times.first() != Some(&0.0) {
        times.insert(0, 0.0);
    }
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let c = &cfg.compare;
    let geom = pair_geometry(sigma, bm.v, t_max, c.support_sigmas, c.r, c.radius, c.max_spacing)?;
    let spec = WavepacketSpec::band(band, k, sigma);
    let spec = WavepacketSpec {
        cutoff: cfg.bm.cutoff,
        ..spec
    };
    let run = run_pair(&setup, &spec, &geom, &times, &cfg.propagator_options(vec![]), &cfg.split_step)?;
    let tbc = run.tb_centroids();
    let bmc = run.bm_centroids();
    let gv = group_velocity(band, k, &bm, cfg.bm.cutoff).ok();
    let gap = gv.and_then(|g| {
        let d = tbc.last()? - tbc.first()?;
        (d.norm() > 0.0 && g.norm() > 0.0).then(|| angle_between(d, g))
    });
    let chirality = if with_chirality {
        Some(chirality_diagnostic(&run, &CHIRALITY_FIT, cfg.split_step.tol)?)
    } else {
        None
    };
    Ok((
        CaseSummary {
            label: label.into(),
            theta,
            band: band.0,
            k,
            sigma_r: sigma,
            r: geom.r,
            radius: geom.radius,
            grid_n: geom.grid.n,
            grid_side: geom.grid.side,
            phi_r: run.initial.phi_r,
            times: times.clone(),
            errors: run.errors.clone(),
            tb_speed: centroid_speed(&tbc, &times),
            bm_speed: centroid_speed(&bmc, &times),
            tb_centroids: tbc,
            bm_centroids: bmc,
            group_velocity: gv,
            displacement_angle_gap_deg: gap,
            chirality,
        },
        run,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub cases: Vec<CaseSummary>,
    /// Flat-band centroid speed over the configured packet's speed.
    pub speed_ratio: f64,
}

/// Configured packet, the flat-band packet at K_m, and its mirror at -theta.
/// Snapshot files are written through `out` when given.
pub fn study_compare(cfg: &RunConfig, mut out: Option<&mut OutputWriter>) -> Result<CompareReport> {
    let theta = cfg.lattice_params().theta;
    let configured = (
        "configured",
        theta,
        BandIndex(cfg.wavepacket.band),
        Some(Vec2::new(cfg.wavepacket.kx, cfg.wavepacket.ky)),
    );
    let flat = ("flat_km", theta, BandIndex::UPPER_FLAT, None);
    let mirror = ("flat_km_mirror", -theta, BandIndex::UPPER_FLAT, None);
    let mut cases = Vec::new();
    for (label, th, band, k) in [configured, flat, mirror] {
        let chir = label != "configured";
        let (summary, run) = compare_case(cfg, label, th, band, k, chir)?;
        if let Some(o) = out.as_deref_mut() {
            write_case(&summary, &run, o)?;
        }
        cases.push(summary);
    }
    let ratio = if cases[0].tb_speed > 0.0 { cases[1].tb_speed / cases[0].tb_speed } else { f64::INFINITY };
    Ok(CompareReport {
        cases,
        speed_ratio: ratio,
    })
}

fn time_tag(t: f64) -> String {
    let s = format!("{t}");
    s.replace('.', "p")
}

pub fn write_case(case: &CaseSummary, run: &PairRun, out: &mut OutputWriter) -> Result<()> {
    let label = &case.label;
    let table = run.initial.state.table().clone();
    for (i, &t) in run.times.iter().enumerate() {
        let tag = time_tag(t);
        let bm_img = envelope_to_lattice_raw(&run.bm[i], &table)?;
        let rows: Vec<Vec<String>> = (0..table.len())
            .map(|j| {
                let s = table.site(j);
                let p = table.position(j);
                let a = run.tb[i].amplitudes()[j];
                let b = bm_img.amplitudes()[j];
                vec![
                    s.layer.number().to_string(),
                    s.sublattice.to_string(),
                    s.cell[0].to_string(),
                    s.cell[1].to_string(),
                    f(p.x),
                    f(p.y),
                    f(a.norm()),
                    f(b.norm()),
                    f((a - b).norm()),
                ]
            })
            .collect();
        out.csv(
            &format!("{label}_sites_t{tag}.csv"),
            &["layer", "sublattice", "n1", "n2", "x", "y", "tb_abs", "bm_abs", "diff_abs"],
            &rows,
            "per-site moduli of both models and of their difference",
        )?;
        let name = format!("{label}_bm_t{tag}.csv");
        let file = fs::File::create(out.dir().join(&name))?;
        run.bm[i].write_csv(BufWriter::new(file), Some(out.metadata()))?;
        out.register(&name, &["x", "y", "component", "re", "im"], "continuum envelope snapshot");
    }
    let mut rows = Vec::new();
    for (i, &t) in run.times.iter().enumerate() {
        let mut row = vec![
            f(t),
            f(run.errors[i]),
            f(run.tb[i].norm()),
            f(case.tb_centroids[i].x),
            f(case.tb_centroids[i].y),
            f(case.bm_centroids[i].x),
            f(case.bm_centroids[i].y),
            f(run.tb[i].centroid(Some(Layer::One)).x),
            f(run.tb[i].centroid(Some(Layer::One)).y),
            f(run.tb[i].centroid(Some(Layer::Two)).x),
            f(run.tb[i].centroid(Some(Layer::Two)).y),
        ];
        if let Some(ch) = &case.chirality {
            row.extend([f(ch.tb[i]), f(ch.bm[i]), f(ch.bm_through_fit[i]), f(ch.difference[i])]);
        }
        rows.push(row);
    }
    let mut cols = vec![
        "t", "error", "tb_norm", "tb_cx", "tb_cy", "bm_cx", "bm_cy", "tb_layer1_cx", "tb_layer1_cy", "tb_layer2_cx",
        "tb_layer2_cy",
    ];
    if case.chirality.is_some() {
        cols.extend(["tb_lz", "bm_lz", "bm_lz_fit", "lz_difference"]);
    }
    out.csv(&format!("{label}_series.csv"), &cols, &rows, "error, centroid and angular-momentum series")
}

// ------------------------------------------------------------------- scaling

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub substudy: String,
    pub epsilon: f64,
    pub hbar: f64,
    pub theta_deg: f64,
    pub t: f64,
    pub error: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub substudy: String,
    pub variable: String,
    pub fit: SlopeFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub fits: Vec<ScalingFit>,
}

impl ScalingReport {
    pub fn slope(&self, substudy: &str, variable: &str) -> Option<&SlopeFit> {
        self.fits
            .iter()
            .find(|f| f.substudy == substudy && f.variable == variable)
            .map(|f| &f.fit)
    }
}

/// a w / v for the given tight-binding parameters.
pub fn hopping_ratio(lattice: &LatticeParams, hopping: &HoppingModel) -> f64 {
    BmParams::derived(hopping, lattice).hopping_ratio()
}

/// Errors at `cfg.scaling.times` for one (epsilon, hbar, theta) point.
pub fn scaling_point(cfg: &RunConfig, epsilon: f64, hbar: f64, theta_deg: f64) -> Result<Vec<(f64, f64, f64)>> {
    let lattice = LatticeParams {
        theta: theta_deg.to_radians(),
        ..cfg.lattice_params()
    };
    let base = hopping_ratio(&lattice, &cfg.hopping);
    let hopping = HoppingModel {
        h0: cfg.hopping.h0 * hbar / base,
        ..cfg.hopping
    };
    let bm = cfg.bm_for(&lattice, &hopping);
    let setup = ModelSetup { lattice, hopping, bm };
    let sigma = cfg.wavepacket.width_convention.sigma_r(epsilon, lattice.a);
    let mut times = cfg.scaling.times.clone();
    times.sort_by(|a, b| a.total_cmp(b));
    let t_max = *times.last().ok_or_else(|| invalid("scaling.times", "must be nonempty"))?;
    let c = &cfg.compare;
    let geom = pair_geometry(sigma, bm.v, t_max, c.support_sigmas, 0.0, 0.0, c.max_spacing)?;
    let spec = WavepacketSpec::gaussian(cfg.coefficients(), sigma);
    let run = run_pair(&setup, &spec, &geom, &times, &cfg.propagator_options(vec![]), &cfg.split_step)?;
    Ok(times.iter().zip(&run.errors).map(|(&t, &e)| (t, e, geom.radius)).collect())
}

pub fn study_scaling(cfg: &RunConfig) -> Result<ScalingReport> {
    let s = &cfg.scaling;
    let mut points = Vec::new();
    let mut push = |sub: &str, eps: f64, hbar: f64, theta: f64| -> Result<()> {
        log::info!("scaling {sub}: epsilon {eps}, hbar {hbar}, theta {theta} deg");
        for (t, e, radius) in scaling_point(cfg, eps, hbar, theta)? {
            points.push(ScalingPoint {
                substudy: sub.into(),
                epsilon: eps,
                hbar,
                theta_deg: theta,
                t,
                error: e,
                radius,
            });
        }
        Ok(())
    };
    for &eps in &s.regime_epsilons {
        push("regime", eps, s.lambda0 * eps, (s.lambda1 * eps).to_degrees())?;
    }
    for &h in &s.hbar_values {
        push("hbar", s.base_epsilon, h, s.base_theta_deg)?;
    }
    for &eps in &s.epsilons {
        push("epsilon", eps, s.base_hbar, s.base_theta_deg)?;
    }
    for &th in &s.thetas_deg {
        push("theta", s.base_epsilon, s.base_hbar, th)?;
    }
    let fits = scaling_fits(&points, &s.times)?;
    Ok(ScalingReport { points, fits })
}

/// Pooled log-log slopes; each sub-study is fitted against its swept
/// variable with one intercept per time, and the regime sweep also against t.
pub fn scaling_fits(points: &[ScalingPoint], times: &[f64]) -> Result<Vec<ScalingFit>> {
    let time_group = |t: f64| times.iter().position(|&x| x == t).unwrap_or(usize::MAX);
    let mut fits = Vec::new();
    let mut add = |sub: &str, var: &str, pick: &dyn Fn(&ScalingPoint) -> (usize, f64)| -> Result<()> {
        let pts: Vec<(usize, f64, f64)> = points
            .iter()
            .filter(|p| p.substudy == sub)
            .map(|p| {
                let (g, x) = pick(p);
                (g, x, p.error)
            })
            .collect();
        if pts.len() >= 3 {
            fits.push(ScalingFit {
                substudy: sub.into(),
                variable: var.into(),
                fit: loglog_slope(&pts)?,
            });
        }
        Ok(())
    };
    let eps_key = |p: &ScalingPoint| (p.epsilon * 1e9).round() as usize;
    add("regime", "t", &|p| (eps_key(p), p.t))?;
    add("regime", "epsilon", &|p| (time_group(p.t), p.epsilon))?;
    add("hbar", "hbar", &|p| (time_group(p.t), p.hbar))?;
    add("epsilon", "epsilon", &|p| (time_group(p.t), p.epsilon))?;
    add("theta", "theta", &|p| (time_group(p.t), p.theta_deg))?;
    Ok(fits)
}

pub fn write_scaling(report: &ScalingReport, out: &mut OutputWriter) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .points
        .iter()
        .map(|p| vec![p.substudy.clone(), f(p.epsilon), f(p.hbar), f(p.theta_deg), f(p.t), f(p.error), f(p.radius)])
        .collect();
    out.csv(
        "scaling.csv",
        &["substudy", "epsilon", "hbar", "theta_deg", "t", "error", "R"],
        &rows,
        "model discrepancy against the swept parameters",
    )?;
    let fits: Vec<Vec<String>> = report
        .fits
        .iter()
        .map(|x| {
            vec![
                x.substudy.clone(),
                x.variable.clone(),
                f(x.fit.slope),
                f(x.fit.ci95),
                f(x.fit.r_squared),
                f(x.fit.residual_rms),
                x.fit.points.to_string(),
            ]
        })
        .collect();
    out.csv(
        "scaling_fits.csv",
        &["substudy", "variable", "slope", "ci95", "r_squared", "residual_rms", "points"],
        &fits,
        "pooled log-log slopes with one intercept per group",
    )
}

// --------------------------------------------------------------------- bound

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub certificate: BoundCertificate,
    pub planned_radius: Option<f64>,
    pub planned: Option<BoundCertificate>,
    pub v_max: f64,
}

pub fn study_bound(cfg: &RunConfig) -> Result<BoundReport> {
    let b = &cfg.bound;
    let lattice = cfg.lattice_params();
    let plan = PlanOptions {
        nu: b.nu,
        ..PlanOptions::default()
    };
    let certificate = optimal_bound(b.big_r, b.r, b.t, 1.0, 0.0, &cfg.hopping, &lattice, &plan)?;
    let planned = match plan_radius(b.t, b.target_error, b.r, 1.0, 0.0, &cfg.hopping, &lattice, &plan) {
        Ok((_, _, c)) => Some(c),
        Err(Error::Infeasible { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(BoundReport {
        certificate,
        planned_radius: planned.as_ref().map(|c| c.big_r),
        planned,
        v_max: crate::bounds::v_max(&cfg.hopping, &lattice),
    })
}

/// Snapshots of one model evolved from the configured wavepacket.
pub enum Propagated {
    Lattice(Vec<LatticeState>),
    Continuum(Vec<Envelope>),
}

/// Evolves the configured wavepacket with one model at `compare.times`.
pub fn propagate(cfg: &RunConfig, lattice_model: bool) -> Result<(PairGeometry, Vec<f64>, Propagated)> {
    let bm = cfg.bm_params();
    let sigma = cfg.sigma_r();
    let times = cfg.compare.times.clone();
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let c = &cfg.compare;
    let geom = pair_geometry(sigma, bm.v, t_max, c.support_sigmas, c.r, c.radius, c.max_spacing)?;
    let table = Arc::new(enumerate_sites(&cfg.lattice_params(), geom.radius)?);
    let ic = make_envelope(&cfg.wavepacket_spec(sigma), &bm, &geom.grid, &table, geom.r, cfg.split_step.containment_limit)?;
    let out = if lattice_model {
        let h = assemble(table, &cfg.hopping)?;
        let snaps = evolve_snapshots_block(&h, std::slice::from_ref(&ic.state), &cfg.propagator_options(times.clone()))?;
        Propagated::Lattice(snaps.into_iter().map(|mut v| v.remove(0)).collect())
    } else {
        let stepper = SplitStepper::new(&bm, &geom.grid)?;
        let snaps = stepper.snapshots(&ic.envelope, &times, &cfg.split_step)?;
        Propagated::Continuum(snaps.into_iter().map(|s| s.0).collect())
    };
    Ok((geom, times, out))
}

fn write_propagated(cfg: &RunConfig, lattice_model: bool, out: &mut OutputWriter) -> Result<Value> {
    let (geom, times, snaps) = propagate(cfg, lattice_model)?;
    let mut norms = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let tag = time_tag(t);
        match &snaps {
            Propagated::Lattice(s) => {
                let name = format!("tb_t{tag}.csv");
                let file = fs::File::create(out.dir().join(&name))?;
                s[i].write_csv(BufWriter::new(file), Some(out.metadata()))?;
                out.register(&name, &["layer", "sublattice", "n1", "n2", "x", "y", "re", "im", "abs"], "lattice state snapshot");
                norms.push(s[i].norm());
            }
            Propagated::Continuum(s) => {
                let name = format!("bm_t{tag}.csv");
                let file = fs::File::create(out.dir().join(&name))?;
                s[i].write_csv(BufWriter::new(file), Some(out.metadata()))?;
                out.register(&name, &["x", "y", "component", "re", "im"], "continuum envelope snapshot");
                norms.push(s[i].l2_norm());
            }
        }
    }
    Ok(json!({ "geometry": geom, "times": times, "norms": norms }))
}

/// Runs the configured study and writes its outputs under `dir`.
pub fn run_study(cfg: &RunConfig, dir: &Path) -> Result<Manifest> {
    let mut out = OutputWriter::new(dir, cfg)?;
    let summary = match cfg.study {
        Study::Truncation => {
            let r = study_truncation(cfg)?;
            write_truncation(&r, &mut out)?;
            json!({ "fits": r.fits, "violations": r.violations })
        }
        Study::Bands => {
            let r = study_bands(cfg)?;
            write_bands(&r, &mut out)?;
            json!({
                "metrics": r.metrics,
                "flat_pair": r.flat_pair,
                "flat_speed": r.flat_speed,
                "third_speed": r.third_speed,
                "gradients": r.gradients,
                "contrast_theta_deg": r.contrast_theta_deg,
                "contrast_flat_pair": r.contrast_flat_pair,
                "path_labels": r.path_labels,
            })
        }
        Study::Compare => {
            let r = study_compare(cfg, Some(&mut out))?;
            serde_json::to_value(&r)?
        }
        Study::Scaling => {
            let r = study_scaling(cfg)?;
            write_scaling(&r, &mut out)?;
            json!({ "fits": r.fits })
        }
        Study::Bound => {
            let r = study_bound(cfg)?;
            let path = "bound.json";
            fs::write(out.dir().join(path), serde_json::to_string_pretty(&r)?)?;
            out.register(path, &[], "certificate fields and the planned radius");
            serde_json::to_value(&r)?
        }
        Study::PropagateTb => write_propagated(cfg, true, &mut out)?,
        Study::PropagateBm => write_propagated(cfg, false, &mut out)?,
    };
    out.finish(cfg, summary)
}

/// Writes a site table for the figure layer.
pub fn write_sites(table: &SiteTable, out: &mut OutputWriter, name: &str) -> Result<()> {
    let file = fs::File::create(out.dir().join(name))?;
    table.write_csv(BufWriter::new(file))?;
    out.register(name, &["layer", "sublattice", "n1", "n2", "x", "y"], "site positions");
    Ok(())
}
