//! Run configuration: presets plus a flat `section.key = value` overlay.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bm::{BandIndex, BmParams, StepOptions};
use crate::error::{Error, Result};
use crate::geometry::{LatticeParams, Vec2};
use crate::hamiltonian::HoppingModel;
use crate::propagator::{Method, PropagatorOptions};
use crate::wavepacket::{WavepacketKind, WavepacketSpec, WidthConvention};
use crate::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config {
                line: 0,
                reason: format!("unknown preset '{other}' (expected desk or paper)"),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Truncation,
    Bands,
    Compare,
    Scaling,
    Bound,
    PropagateTb,
    PropagateBm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BmMode {
    /// v and w follow from the tight-binding parameters.
    Derived,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSection {
    pub a: f64,
    pub theta_deg: f64,
    pub interlayer_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BmSection {
    pub mode: BmMode,
    pub v: f64,
    pub w: f64,
    pub cutoff: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketKind {
    Gaussian,
    BandConcentrated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavepacketSection {
    pub kind: PacketKind,
    pub band: i32,
    pub kx: f64,
    pub ky: f64,
    pub epsilon: f64,
    /// Overrides `epsilon` when positive.
    pub sigma_r: f64,
    pub width_convention: WidthConvention,
    /// Re/Im pairs of c_1^A, c_1^B, c_2^A, c_2^B.
    pub coefficients: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationSection {
    pub method: Method,
    pub tol: f64,
    pub max_degree: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationSection {
    pub radii: Vec<f64>,
    pub reference_radius: f64,
    pub times: Vec<f64>,
    /// Support radius of the initial condition.
    pub r: f64,
    /// Gaussian width of the initial conditions.
    pub sigma_r: f64,
    /// Number of enumerated coefficient patterns averaged per point (1 to 4).
    pub initial_conditions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandsSection {
    pub per_segment: usize,
    pub n_bands: usize,
    pub k_grid: usize,
    /// Twist angle of the comparison run without a flat pair.
    pub contrast_theta_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSection {
    pub times: Vec<f64>,
    /// Truncation radius; zero selects it from the packet width and times.
    pub radius: f64,
    /// Initial support radius in units of sigma_r when `r` is zero.
    pub support_sigmas: f64,
    pub r: f64,
    /// Largest envelope grid spacing (A).
    pub max_spacing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSection {
    pub times: Vec<f64>,
    pub lambda0: f64,
    pub lambda1: f64,
    pub regime_epsilons: Vec<f64>,
    pub base_epsilon: f64,
    pub base_hbar: f64,
    pub base_theta_deg: f64,
    pub hbar_values: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub thetas_deg: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSection {
    pub big_r: f64,
    pub r: f64,
    pub t: f64,
    pub target_error: f64,
    pub nu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub study: Study,
    pub preset: Preset,
    pub output_dir: String,
    pub threads: usize,
    pub lattice: LatticeSection,
    pub hopping: HoppingModel,
    pub bm: BmSection,
    pub wavepacket: WavepacketSection,
    pub propagation: PropagationSection,
    pub split_step: StepOptions,
    pub truncation: TruncationSection,
    pub bands: BandsSection,
    pub compare: CompareSection,
    pub scaling: ScalingSection,
    pub bound: BoundSection,
}

impl RunConfig {
    pub fn preset(preset: Preset, study: Study) -> Self {
        let lattice = LatticeParams::physical();
        let hopping = HoppingModel::physical();
        let derived = BmParams::derived(&hopping, &lattice);
        let paper = preset == Preset::Paper;
        Self {
            study,
            preset,
            output_dir: "out".into(),
            threads: 0,
            lattice: LatticeSection {
                a: lattice.a,
                theta_deg: lattice.theta.to_degrees(),
                interlayer_distance: lattice.interlayer_distance,
            },
            hopping,
            bm: BmSection {
                mode: BmMode::Derived,
                v: derived.v,
                w: derived.w,
                cutoff: 6,
            },
            wavepacket: WavepacketSection {
                kind: PacketKind::BandConcentrated,
                band: BandIndex::THIRD.0,
                kx: 0.0,
                ky: -0.02,
                epsilon: 0.1,
                sigma_r: 0.0,
                width_convention: WidthConvention::Angstrom,
                coefficients: vec![0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0],
            },
            propagation: PropagationSection {
                method: Method::Chebyshev,
                tol: 1e-10,
                max_degree: 1_000_000,
            },
            split_step: StepOptions::default(),
            truncation: TruncationSection {
                radii: if paper {
                    vec![30.0, 40.0, 50.0, 60.0, 70.0]
                } else {
                    vec![25.0, 35.0, 50.0]
                },
                reference_radius: if paper { 86.60 } else { 60.0 },
                times: vec![5.0, 10.0, 20.0],
                r: 10.0,
                sigma_r: 2.5,
                initial_conditions: 4,
            },
            bands: BandsSection {
                per_segment: if paper { 60 } else { 30 },
                n_bands: 8,
                k_grid: 12,
                contrast_theta_deg: 5.0,
            },
            compare: CompareSection {
                times: if paper { vec![0.0, 20.0, 40.0] } else { vec![0.0, 5.0, 10.0] },
                radius: if paper { 86.60 } else { 0.0 },
                support_sigmas: 5.0,
                r: if paper { 10.0 } else { 0.0 },
                max_spacing: 1.5,
            },
            scaling: ScalingSection {
                times: if paper { vec![2.0, 4.0, 8.0, 16.0] } else { vec![1.0, 2.0, 4.0, 8.0] },
                lambda0: 0.42,
                lambda1: 0.17,
                regime_epsilons: vec![0.05, 0.0707, 0.1, 0.1414],
                base_epsilon: 0.1,
                base_hbar: 0.042,
                base_theta_deg: 1.05,
                hbar_values: vec![0.042, 0.084, 0.168, 0.336],
                epsilons: vec![0.05, 0.0707, 0.1, 0.1414, 0.2],
                thetas_deg: vec![1.05, 2.0, 3.0, 4.0, 5.0],
            },
            bound: BoundSection {
                big_r: 86.60,
                r: 10.0,
                t: 1e-3,
                target_error: 1e-2,
                nu: crate::bounds::DEFAULT_NU,
            },
        }
    }

    /// Applies `section.key = value` lines on top of `self`.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        let mut value = serde_json::to_value(&*self)?;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Config { line: no + 1, reason };
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            let (key, val) = (key.trim(), val.trim());
            let slot = key
                .split('.')
                .try_fold(&mut value, |v, part| v.get_mut(part))
                .ok_or_else(|| err(format!("unknown key '{key}'")))?;
            *slot = parse_like(slot, val).map_err(err)?;
        }
        *self = serde_json::from_value(value)?;
        self.validate()
    }

    pub fn from_text(preset: Preset, study: Study, text: &str) -> Result<Self> {
        let mut cfg = Self::preset(preset, study);
        let mut head = String::new();
        // `preset` in the file selects the base before the other keys apply
        for line in text.lines() {
            let l = line.split('#').next().unwrap_or("").trim();
            if let Some(("preset", v)) = l.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
                cfg = Self::preset(v.parse()?, study);
            } else {
                head.push_str(line);
            }
            head.push('\n');
        }
        cfg.apply_overrides(&head)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice_params().validate()?;
        self.hopping.validate()?;
        if self.wavepacket.coefficients.len() != 8 {
            return Err(Error::Config {
                line: 0,
                reason: format!("wavepacket.coefficients needs 8 reals, got {}", self.wavepacket.coefficients.len()),
            });
        }
        if !(1..=4).contains(&self.truncation.initial_conditions) {
            return Err(Error::Config {
                line: 0,
                reason: "truncation.initial_conditions must lie in 1..=4".into(),
            });
        }
        Ok(())
    }

    pub fn lattice_params(&self) -> LatticeParams {
        LatticeParams {
            a: self.lattice.a,
            theta: self.lattice.theta_deg.to_radians(),
            interlayer_distance: self.lattice.interlayer_distance,
        }
    }

    /// Continuum parameters for the given lattice and hopping model.
    pub fn bm_for(&self, lattice: &LatticeParams, hopping: &HoppingModel) -> BmParams {
        match self.bm.mode {
            BmMode::Derived => BmParams::derived(hopping, lattice),
            BmMode::Explicit => BmParams {
                v: self.bm.v,
                w: self.bm.w,
                theta: lattice.theta,
                a: lattice.a,
            },
        }
    }

    pub fn bm_params(&self) -> BmParams {
        self.bm_for(&self.lattice_params(), &self.hopping)
    }

    pub fn sigma_r(&self) -> f64 {
        if self.wavepacket.sigma_r > 0.0 {
            self.wavepacket.sigma_r
        } else {
            self.wavepacket.width_convention.sigma_r(self.wavepacket.epsilon, self.lattice.a)
        }
    }

    pub fn coefficients(&self) -> [Complex64; 4] {
        let c = &self.wavepacket.coefficients;
        [0, 1, 2, 3].map(|i| Complex64::new(c[2 * i], c[2 * i + 1]))
    }

    pub fn wavepacket_spec(&self, sigma_r: f64) -> WavepacketSpec {
        let kind = match self.wavepacket.kind {
            PacketKind::Gaussian => WavepacketKind::Gaussian {
                coefficients: self.coefficients(),
            },
            PacketKind::BandConcentrated => WavepacketKind::BandConcentrated {
                band: BandIndex(self.wavepacket.band),
                k: Vec2::new(self.wavepacket.kx, self.wavepacket.ky),
            },
        };
        WavepacketSpec {
            kind,
            sigma_r,
            cutoff: self.bm.cutoff,
        }
    }

    pub fn propagator_options(&self, snapshot_times: Vec<f64>) -> PropagatorOptions {
        PropagatorOptions {
            method: self.propagation.method,
            tol: self.propagation.tol,
            snapshot_times,
            max_degree: self.propagation.max_degree,
        }
    }

    /// Single-line JSON of the resolved configuration.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

fn parse_like(old: &Value, text: &str) -> std::result::Result<Value, String> {
    let num = |s: &str| -> std::result::Result<Value, String> {
        let s = s.trim();
        if let Ok(i) = s.parse::<u64>() {
            if old.is_u64() {
                return Ok(Value::from(i));
            }
        }
        s.parse::<f64>()
            .map_err(|_| format!("'{s}' is not a number"))
            .and_then(|x| serde_json::Number::from_f64(x).map(Value::Number).ok_or_else(|| format!("'{s}' is not finite")))
    };
    match old {
        Value::Number(n) if n.is_i64() && !n.is_u64() => text
            .trim()
            .parse::<i64>()
            .map(Value::from)
            .map_err(|_| format!("'{text}' is not an integer")),
        Value::Number(n) if n.is_u64() => text
            .trim()
            .parse::<u64>()
            .map(Value::from)
            .or_else(|_| text.trim().parse::<i64>().map(Value::from))
            .map_err(|_| format!("'{text}' is not an integer")),
        Value::Number(_) => num(text),
        Value::Bool(_) => text.trim().parse::<bool>().map(Value::Bool).map_err(|e| e.to_string()),
        Value::Array(_) => {
            let t = text.trim().trim_start_matches('[').trim_end_matches(']');
            if t.trim().is_empty() {
                return Ok(Value::Array(vec![]));
            }
            t.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>().map(Value::Array)
        }
        Value::String(_) => Ok(Value::String(text.trim().trim_matches('"').to_string())),
        Value::Object(_) => Err("cannot assign a value to a section".into()),
        Value::Null => num(text).or_else(|_| Ok(Value::String(text.to_string()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_and_reject_unknown_keys() {
        let text = "# comment\nlattice.theta_deg = 2.0\ntruncation.radii = 20, 30\nwavepacket.kind = gaussian\nbm.cutoff = 4\nwavepacket.band = -1\n";
        let cfg = RunConfig::from_text(Preset::Desk, Study::Truncation, text).unwrap();
        assert_eq!(cfg.lattice.theta_deg, 2.0);
        assert_eq!(cfg.truncation.radii, vec![20.0, 30.0]);
        assert_eq!(cfg.wavepacket.kind, PacketKind::Gaussian);
        assert_eq!(cfg.bm.cutoff, 4);
        assert_eq!(cfg.wavepacket.band, -1);
        let bad = RunConfig::from_text(Preset::Desk, Study::Bands, "x.y = 1\n");
        assert!(matches!(bad, Err(Error::Config { line: 1, .. })));
        let bad = RunConfig::from_text(Preset::Desk, Study::Bands, "\nlattice.a = abc\n");
        assert!(matches!(bad, Err(Error::Config { line: 2, .. })));
        let bad = RunConfig::from_text(Preset::Desk, Study::Bands, "wavepacket.kind = spiral\n");
        assert!(bad.is_err());
    }

    #[test]
    fn preset_line_selects_base() {
        let cfg = RunConfig::from_text(Preset::Desk, Study::Compare, "preset = paper\n").unwrap();
        assert_eq!(cfg.preset, Preset::Paper);
        assert_eq!(cfg.compare.radius, 86.60);
        let line = cfg.to_line();
        assert!(!line.contains('\n'));
        let back: RunConfig = serde_json::from_str(&line).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn derived_bm_is_consistent() {
        let cfg = RunConfig::preset(Preset::Desk, Study::Bands);
        let bm = cfg.bm_params();
        assert!((bm.v - 6.6).abs() < 0.01);
        assert!((bm.w - 0.11).abs() < 0.001);
        assert_eq!(cfg.sigma_r(), 10.0);
    }
}
