//! The four nonlinear benchmark plants.

use nalgebra::dvector;

use super::PlantModel;

pub const TWO_TANK_K1: f64 = 0.5;
pub const TWO_TANK_K2: f64 = 0.5;
pub const TWO_TANK_K3: f64 = 0.5;

/// Tank levels are clamped here so that `√x` stays real.
const TWO_TANK_LEVEL_FLOOR: f64 = 1e-9;

pub const MOTOR_LA: f64 = 0.314;
pub const MOTOR_RA: f64 = 12.345;
pub const MOTOR_KM: f64 = 0.253;
pub const MOTOR_J: f64 = 0.00441;
pub const MOTOR_B: f64 = 0.00732;
pub const MOTOR_TAU_L: f64 = 1.47;
pub const MOTOR_UA: f64 = 60.0;

pub const CSTR_FEED_CONC: f64 = 10.0;
pub const CSTR_K0: f64 = 34_930_800.0;
/// Activation energy over gas constant, in kelvin. The rate is
/// `k0 · exp(-CSTR_ACTIVATION_RATIO / T)`.
pub const CSTR_ACTIVATION_RATIO: f64 = 5963.6;

/// Cascaded two-tank level plant. `x = (upper level, lower level)`, `u` = pump
/// command, `y = x₂`, no disturbance.
pub fn make_two_tank() -> PlantModel {
    PlantModel::new(
        "two_tank",
        2,
        1,
        0,
        1,
        |x, u, _d, _t| {
            let q1 = TWO_TANK_K1 * x[0].sqrt();
            dvector![-q1 + TWO_TANK_K2 * u[0], q1 - TWO_TANK_K3 * x[1].sqrt()]
        },
        |x, _d| dvector![x[1]],
    )
    .and_then(|p| p.with_lower_guard(dvector![TWO_TANK_LEVEL_FLOOR, TWO_TANK_LEVEL_FLOOR]))
    .expect("two-tank plant definition is consistent")
}

/// Bilinear DC motor. `x = (rotor current, angular velocity)`, `u` = stator
/// current, `y = x₂`, no disturbance.
pub fn make_bilinear_motor() -> PlantModel {
    PlantModel::new(
        "bilinear_motor",
        2,
        1,
        0,
        1,
        |x, u, _d, _t| {
            dvector![
                -(MOTOR_RA / MOTOR_LA) * x[0] - (MOTOR_KM / MOTOR_LA) * x[1] * u[0]
                    + MOTOR_UA / MOTOR_LA,
                -(MOTOR_B / MOTOR_J) * x[1] + (MOTOR_KM / MOTOR_J) * x[0] * u[0]
                    - MOTOR_TAU_L / MOTOR_J
            ]
        },
        |x, _d| dvector![x[1]],
    )
    .expect("motor plant definition is consistent")
}

/// Arrhenius rate constant `k0 · exp(-E/R / T)`.
pub fn cstr_rate_constant(temperature: f64) -> f64 {
    CSTR_K0 * (-CSTR_ACTIVATION_RATIO / temperature).exp()
}

/// Inlet feed temperature disturbance `T_i(t)` in kelvin.
pub fn cstr_inlet_temperature(t: f64) -> f64 {
    298.15 + 5.0 * (0.05 * t).sin()
}

/// Continuous stirred tank reactor. `x = (C_A, T)`, `u = T_c` (coolant
/// temperature), `d = T_i` (inlet temperature), `y = T`.
pub fn make_cstr() -> PlantModel {
    PlantModel::new(
        "cstr",
        2,
        1,
        1,
        1,
        |x, u, d, _t| {
            let (conc, temp) = (x[0], x[1]);
            let rate = cstr_rate_constant(temp) * conc;
            dvector![
                CSTR_FEED_CONC - conc - rate,
                d[0] + 0.3 * u[0] - 1.3 * temp + 11.92 * rate
            ]
        },
        |x, _d| dvector![x[1]],
    )
    .expect("CSTR plant definition is consistent")
}

/// Time-varying damping parameter: 1 up to and including t = 50, then 3.
pub fn van_der_pol_mu(t: f64) -> f64 {
    if t <= 50.0 {
        1.0
    } else {
        3.0
    }
}

/// Forced Van der Pol oscillator. `x = (position, velocity)`, `d = μ`,
/// `y = position`.
pub fn make_van_der_pol() -> PlantModel {
    PlantModel::new(
        "van_der_pol",
        2,
        1,
        1,
        1,
        |x, u, d, _t| {
            let (pos, vel) = (x[0], x[1]);
            dvector![vel, d[0] * (1.0 - pos * pos) * vel - pos + u[0]]
        },
        |x, _d| dvector![x[0]],
    )
    .expect("Van der Pol plant definition is consistent")
}
