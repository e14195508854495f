use std::fmt;
use std::str::FromStr;

use nalgebra::{dvector, DVector};

use crate::dynamics::{
    cstr_inlet_temperature, make_bilinear_motor, make_cstr, make_two_tank, make_van_der_pol,
    van_der_pol_mu, PlantModel,
};
use crate::error::{Error, Result};
use crate::estimation::{DEFAULT_P0_SCALE, DEFAULT_Q_SCALE, DEFAULT_R};
use crate::mpc::MpcConfig;

use super::reference::{Preview, ReferenceSpec};

/// The four built-in benchmark plants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Benchmark {
    TwoTank,
    BilinearMotor,
    Cstr,
    VanDerPol,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [
        Self::TwoTank,
        Self::BilinearMotor,
        Self::Cstr,
        Self::VanDerPol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::TwoTank => "two_tank",
            Self::BilinearMotor => "bilinear_motor",
            Self::Cstr => "cstr",
            Self::VanDerPol => "van_der_pol",
        }
    }

    pub fn plant(self) -> PlantModel {
        match self {
            Self::TwoTank => make_two_tank(),
            Self::BilinearMotor => make_bilinear_motor(),
            Self::Cstr => make_cstr(),
            Self::VanDerPol => make_van_der_pol(),
        }
    }

    /// True unmeasured disturbance at time `t` (empty for plants without one).
    pub fn disturbance(self, t: f64) -> DVector<f64> {
        match self {
            Self::TwoTank | Self::BilinearMotor => DVector::zeros(0),
            Self::Cstr => dvector![cstr_inlet_temperature(t)],
            Self::VanDerPol => dvector![van_der_pol_mu(t)],
        }
    }

    /// Disturbance value assumed by the models before any estimation.
    pub fn nominal_disturbance(self) -> DVector<f64> {
        match self {
            Self::TwoTank | Self::BilinearMotor => DVector::zeros(0),
            Self::Cstr => dvector![298.15],
            Self::VanDerPol => dvector![1.0],
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown plant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfSettings {
    pub p0_scale: f64,
    pub q_scale: f64,
    pub r: f64,
}

impl Default for EkfSettings {
    fn default() -> Self {
        Self {
            p0_scale: DEFAULT_P0_SCALE,
            q_scale: DEFAULT_Q_SCALE,
            r: DEFAULT_R,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSettings {
    pub enabled: bool,
    /// Process noise scale: `x += amplitude · U[0,1)` per state after each step.
    pub amplitude: f64,
    /// Optional output noise scale, `y += amplitude · U[0,1)`; off by default.
    pub measurement_amplitude: f64,
    pub seed: u64,
}

/// Everything needed to reproduce one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub plant: Benchmark,
    pub t_s: f64,
    pub duration: f64,
    pub initial_x: DVector<f64>,
    pub initial_u: DVector<f64>,
    pub arx_order: usize,
    pub observer_poles: Vec<f64>,
    pub mpc: MpcConfig,
    pub ekf: EkfSettings,
    pub noise: NoiseSettings,
    pub reference: ReferenceSpec,
    pub preview: Preview,
    /// Adds a wall-clock `solve_seconds` column to the CSV log.
    pub log_timing: bool,
}

pub const DEFAULT_HORIZON: usize = 10;
pub const DEFAULT_W_Y: f64 = 10.0;
pub const DEFAULT_W_DU: f64 = 0.1;

impl ScenarioConfig {
    /// Built-in settings for a benchmark, noise off.
    pub fn default_for(plant: Benchmark) -> Self {
        let mpc = MpcConfig::new(DEFAULT_HORIZON, 1, 1, DEFAULT_W_Y, DEFAULT_W_DU);
        let (t_s, duration, x0, u0, p, poles, mpc, amplitude, reference) = match plant {
            Benchmark::TwoTank => (
                0.2,
                200.0,
                dvector![1.0, 1.0],
                1.0,
                3,
                vec![0.01, 0.02],
                mpc.with_u_box(0.0, 2.0).with_du_box(-0.5, 0.5),
                0.05,
                ReferenceSpec::RandomStep {
                    period: 20.0,
                    min: 1.0,
                    max: 3.0,
                    seed: 0,
                },
            ),
            Benchmark::BilinearMotor => (
                0.01,
                4.0,
                dvector![5.2542, -19.2205],
                1.0,
                5,
                vec![0.05, 0.1],
                mpc.with_u_box(0.0, 2.0).with_du_box(-1.0, 1.0),
                1.0,
                ReferenceSpec::RandomStep {
                    period: 0.4,
                    min: -10.0,
                    max: 10.0,
                    seed: 0,
                },
            ),
            Benchmark::Cstr => (
                0.5,
                200.0,
                dvector![8.57, 311.0],
                298.15,
                3,
                vec![0.01, 0.02],
                mpc.with_du_box(-1.0, 1.0),
                0.1,
                ReferenceSpec::Ramp {
                    t_start: 50.0,
                    t_end: 100.0,
                    from: 311.2639,
                    to: 370.0,
                },
            ),
            Benchmark::VanDerPol => (
                0.2,
                100.0,
                dvector![0.0, 0.0],
                0.0,
                3,
                vec![0.005, 0.01],
                mpc.with_u_box(-10.0, 10.0).with_du_box(-10.0, 10.0),
                1.0,
                ReferenceSpec::Square {
                    period: 10.0,
                    low: 0.0,
                    high: 1.0,
                },
            ),
        };
        let preview = reference.default_preview();
        Self {
            plant,
            t_s,
            duration,
            initial_x: x0,
            initial_u: dvector![u0],
            arx_order: p,
            observer_poles: poles,
            mpc,
            ekf: EkfSettings::default(),
            noise: NoiseSettings {
                enabled: false,
                amplitude,
                measurement_amplitude: 0.0,
                seed: 0,
            },
            reference,
            preview,
            log_timing: false,
        }
    }

    /// Uses `seed` for both the process noise and any random reference.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.noise.seed = seed;
        if let ReferenceSpec::RandomStep { seed: s, .. } = &mut self.reference {
            *s = seed;
        }
        self
    }

    pub fn with_noise(mut self, enabled: bool) -> Self {
        self.noise.enabled = enabled;
        self
    }

    pub fn samples(&self) -> usize {
        (self.duration / self.t_s + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.t_s > 0.0 && self.t_s.is_finite()) {
            return bad(format!("t_s must be positive, got {}", self.t_s));
        }
        if !(self.duration >= self.t_s && self.duration.is_finite()) {
            return bad(format!(
                "duration must cover at least one sample, got {}",
                self.duration
            ));
        }
        let plant = self.plant.plant();
        if self.initial_x.len() != plant.n_x() || self.initial_u.len() != plant.n_u() {
            return bad("initial_x / initial_u have the wrong size for this plant".into());
        }
        if self.arx_order == 0 {
            return bad("arx.order must be at least 1".into());
        }
        if self.observer_poles.len() != plant.n_x() {
            return bad(format!(
                "expected {} observer poles, got {}",
                plant.n_x(),
                self.observer_poles.len()
            ));
        }
        if self.mpc.n_u() != plant.n_u() || self.mpc.n_y() != plant.n_y() {
            return bad("MPC weights have the wrong size for this plant".into());
        }
        self.mpc.validate()?;
        if !(self.ekf.p0_scale > 0.0 && self.ekf.q_scale >= 0.0 && self.ekf.r > 0.0) {
            return bad("ekf requires p0 > 0, q >= 0 and r > 0".into());
        }
        if !(self.noise.amplitude >= 0.0 && self.noise.measurement_amplitude >= 0.0) {
            return bad("noise amplitudes must be non-negative".into());
        }
        self.reference.validate()
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        let n_u = self.mpc.n_u();
        let n_y = self.mpc.n_y();
        match key {
            "plant" => {
                let plant: Benchmark = value.parse()?;
                if plant != self.plant {
                    return Err(Error::InvalidConfig(
                        "the plant is chosen on the command line and cannot be changed by a setting".into(),
                    ));
                }
            }
            "t_s" => self.t_s = parse_f64(key, value)?,
            "duration" => self.duration = parse_f64(key, value)?,
            "initial_x" => self.initial_x = parse_vector(key, value, None)?,
            "initial_u" => self.initial_u = parse_vector(key, value, None)?,
            "arx.order" => self.arx_order = parse_usize(key, value)?,
            "arx.poles" => self.observer_poles = parse_list(key, value)?,
            "mpc.T" => self.mpc.horizon = parse_usize(key, value)?,
            "mpc.w_y" => {
                self.mpc.w_y = nalgebra::DMatrix::identity(n_y, n_y) * parse_f64(key, value)?
            }
            "mpc.w_du" => {
                self.mpc.w_du = nalgebra::DMatrix::identity(n_u, n_u) * parse_f64(key, value)?
            }
            "mpc.u_min" => self.mpc.u_min = parse_vector(key, value, Some(n_u))?,
            "mpc.u_max" => self.mpc.u_max = parse_vector(key, value, Some(n_u))?,
            "mpc.du_min" => self.mpc.du_min = parse_vector(key, value, Some(n_u))?,
            "mpc.du_max" => self.mpc.du_max = parse_vector(key, value, Some(n_u))?,
            "mpc.y_min" => self.mpc.y_min = parse_vector(key, value, Some(n_y))?,
            "mpc.y_max" => self.mpc.y_max = parse_vector(key, value, Some(n_y))?,
            "mpc.rho" => self.mpc.rho = parse_f64(key, value)?,
            "mpc.tol_primal" => self.mpc.tol_primal = parse_f64(key, value)?,
            "mpc.tol_dual" => self.mpc.tol_dual = parse_f64(key, value)?,
            "mpc.max_outer" => self.mpc.max_outer = parse_usize(key, value)?,
            "mpc.max_inner" => self.mpc.max_inner = parse_usize(key, value)?,
            "ekf.p0" => self.ekf.p0_scale = parse_f64(key, value)?,
            "ekf.q" => self.ekf.q_scale = parse_f64(key, value)?,
            "ekf.r" => self.ekf.r = parse_f64(key, value)?,
            "noise.enabled" => self.noise.enabled = parse_bool(key, value)?,
            "noise.amplitude" => self.noise.amplitude = parse_f64(key, value)?,
            "noise.measurement" => self.noise.measurement_amplitude = parse_f64(key, value)?,
            "noise.seed" => self.noise.seed = parse_u64(key, value)?,
            "reference.preview" => {
                self.preview = match value {
                    "trajectory" => Preview::Trajectory,
                    "hold" => Preview::Hold,
                    _ => {
                        return Err(Error::InvalidConfig(format!(
                            "{key}: expected `trajectory` or `hold`"
                        )))
                    }
                }
            }
            "log.timing" => self.log_timing = parse_bool(key, value)?,
            _ if key.starts_with("reference.") => {
                self.reference.set(&key["reference.".len()..], value)?
            }
            _ => return Err(Error::InvalidConfig(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key=value` document; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "line {}: expected key=value, got `{raw}`",
                    lineno + 1
                ))
            })?;
            self.set(k, v)
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Applies `key=value` override strings.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for item in overrides {
            let item = item.as_ref();
            let (k, v) = item.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("override `{item}` is not key=value"))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// One-line summary of the main settings.
    pub fn summary(&self) -> String {
        let b = |lo: f64, hi: f64| {
            let f = |v: f64| {
                if v.is_infinite() {
                    if v > 0.0 {
                        "inf".to_string()
                    } else {
                        "-inf".to_string()
                    }
                } else {
                    format!("{v}")
                }
            };
            format!("[{},{}]", f(lo), f(hi))
        };
        let poles: Vec<String> = self.observer_poles.iter().map(|p| p.to_string()).collect();
        format!(
            "t_s={}, u∈{}, Δu∈{}, p={}, poles=[{}], T={}, duration={}",
            self.t_s,
            b(self.mpc.u_min[0], self.mpc.u_max[0]),
            b(self.mpc.du_min[0], self.mpc.du_max[0]),
            self.arx_order,
            poles.join(","),
            self.mpc.horizon,
            self.duration
        )
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: `{value}` is not a number")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| {
        Error::InvalidConfig(format!("{key}: `{value}` is not a non-negative integer"))
    })
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value.parse().map_err(|_| {
        Error::InvalidConfig(format!("{key}: `{value}` is not a non-negative integer"))
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(Error::InvalidConfig(format!(
            "{key}: `{value}` is not a boolean"
        ))),
    }
}

pub(super) fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse_f64(key, v.trim())).collect()
}

/// Comma list; a single value is broadcast when `len` is given.
fn parse_vector(key: &str, value: &str, len: Option<usize>) -> Result<DVector<f64>> {
    let items = parse_list(key, value)?;
    match len {
        Some(n) if items.len() == 1 => Ok(DVector::from_element(n, items[0])),
        Some(n) if items.len() != n => Err(Error::InvalidConfig(format!(
            "{key}: expected 1 or {n} values, got {}",
            items.len()
        ))),
        _ => Ok(DVector::from_vec(items)),
    }
}

pub(super) fn parse_number(key: &str, value: &str) -> Result<f64> {
    parse_f64(key, value)
}

pub(super) fn parse_seed(key: &str, value: &str) -> Result<u64> {
    parse_u64(key, value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        for b in Benchmark::ALL {
            let s = ScenarioConfig::default_for(b);
            s.validate().unwrap();
            assert_eq!(b.name().parse::<Benchmark>().unwrap(), b);
        }
        assert!("unknown".parse::<Benchmark>().is_err());
    }

    #[test]
    fn two_tank_summary() {
        let s = ScenarioConfig::default_for(Benchmark::TwoTank);
        assert!(s
            .summary()
            .starts_with("t_s=0.2, u∈[0,2], Δu∈[-0.5,0.5], p=3, poles=[0.01,0.02]"));
        assert!(ScenarioConfig::default_for(Benchmark::BilinearMotor)
            .summary()
            .contains("p=5, poles=[0.05,0.1]"));
        assert_eq!(s.samples(), 1000);
    }

    #[test]
    fn key_value_settings() {
        let mut s = ScenarioConfig::default_for(Benchmark::Cstr);
        s.apply_text(
            "# comment\nmpc.T = 12\n\nmpc.du_max=2\nnoise.enabled=true\nreference.to=360\n",
        )
        .unwrap();
        assert_eq!(s.mpc.horizon, 12);
        assert_eq!(s.mpc.du_max[0], 2.0);
        assert!(s.noise.enabled);
        assert!(matches!(s.reference, ReferenceSpec::Ramp { to, .. } if to == 360.0));
        s.apply_overrides(&["mpc.u_min=-inf", "ekf.q=0.02"])
            .unwrap();
        assert_eq!(s.mpc.u_min[0], f64::NEG_INFINITY);
        assert_eq!(s.ekf.q_scale, 0.02);
        assert!(s.apply_overrides(&["bogus=1"]).is_err());
        assert!(s.apply_overrides(&["mpc.T"]).is_err());
        assert!(s.apply_text("mpc.T=abc").is_err());
        assert!(s.apply_text("plant=two_tank").is_err());
    }

    #[test]
    fn seed_reaches_reference_and_noise() {
        let s = ScenarioConfig::default_for(Benchmark::TwoTank).with_seed(7);
        assert_eq!(s.noise.seed, 7);
        assert!(matches!(
            s.reference,
            ReferenceSpec::RandomStep { seed: 7, .. }
        ));
    }
}
