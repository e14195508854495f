//! Continuous-time plant models, fixed-step RK4 integration and
//! finite-difference Jacobians of the sampled map.
//!
//! The discrete map `F_ts(x, u, d)` holds `u` and `d` constant over one
//! sample and composes `n_sub` classical RK4 steps. Both the truth
//! simulation and the joint EKF use it.

mod plants;

pub use plants::{
    cstr_inlet_temperature, cstr_rate_constant, make_bilinear_motor, make_cstr, make_two_tank,
    make_van_der_pol, van_der_pol_mu, CSTR_ACTIVATION_RATIO, CSTR_FEED_CONC, CSTR_K0, MOTOR_B,
    MOTOR_J, MOTOR_KM, MOTOR_LA, MOTOR_RA, MOTOR_TAU_L, MOTOR_UA, TWO_TANK_K1, TWO_TANK_K2,
    TWO_TANK_K3,
};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// RK4 substeps per sample used by the harness and the joint EKF.
pub const DEFAULT_SUBSTEPS: usize = 4;

/// Relative finite-difference step: `δ = FD_REL_STEP · max(1, |z|)`.
pub const FD_REL_STEP: f64 = 1e-6;

/// Continuous dynamics `(x, u, d, t) -> ẋ`.
pub type RhsFn =
    dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>, f64) -> DVector<f64> + Send + Sync;

/// Output map `(x, d) -> y`.
pub type OutputFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// A continuous-time plant `ẋ = f(x, u, d, t)`, `y = g(x, d)`.
#[derive(Clone)]
pub struct PlantModel {
    name: String,
    n_x: usize,
    n_u: usize,
    n_d: usize,
    n_y: usize,
    f: Arc<RhsFn>,
    g: Arc<OutputFn>,
    state_lower_guard: Option<DVector<f64>>,
}

impl fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("name", &self.name)
            .field("n_x", &self.n_x)
            .field("n_u", &self.n_u)
            .field("n_d", &self.n_d)
            .field("n_y", &self.n_y)
            .field("state_lower_guard", &self.state_lower_guard)
            .finish()
    }
}

impl PlantModel {
    pub fn new<F, G>(
        name: impl Into<String>,
        n_x: usize,
        n_u: usize,
        n_d: usize,
        n_y: usize,
        f: F,
        g: G,
    ) -> Result<Self>
    where
        F: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>, f64) -> DVector<f64>
            + Send
            + Sync
            + 'static,
        G: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        if n_x == 0 || n_u == 0 || n_y == 0 {
            return Err(Error::InvalidArgument(
                "plant dimensions n_x, n_u, n_y must be at least 1".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            n_x,
            n_u,
            n_d,
            n_y,
            f: Arc::new(f),
            g: Arc::new(g),
            state_lower_guard: None,
        })
    }

    /// Clamp states from below before every evaluation of `f`/`g` and after
    /// every integration step. Use `f64::NEG_INFINITY` for unguarded states.
    pub fn with_lower_guard(mut self, guard: DVector<f64>) -> Result<Self> {
        check_len("state lower guard", self.n_x, guard.len())?;
        self.state_lower_guard = Some(guard);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_d(&self) -> usize {
        self.n_d
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn state_lower_guard(&self) -> Option<&DVector<f64>> {
        self.state_lower_guard.as_ref()
    }

    pub fn guard(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.state_lower_guard {
            Some(lo) => x.zip_map(lo, |xi, li| xi.max(li)),
            None => x.clone(),
        }
    }

    pub(crate) fn check_dims(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        d: &DVector<f64>,
    ) -> Result<()> {
        check_len("plant state", self.n_x, x.len())?;
        check_len("plant input", self.n_u, u.len())?;
        check_len("plant disturbance", self.n_d, d.len())
    }

    /// `ẋ` evaluated on the guarded state.
    pub fn rhs(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        d: &DVector<f64>,
        t: f64,
    ) -> DVector<f64> {
        (self.f)(&self.guard(x), u, d, t)
    }

    /// `y` evaluated on the guarded state.
    pub fn output(&self, x: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        (self.g)(&self.guard(x), d)
    }
}

fn first_non_finite(x: &DVector<f64>) -> Option<usize> {
    x.iter().position(|v| !v.is_finite())
}

/// One classical RK4 step of size `h`, clamped through the plant guard.
pub fn rk4_step(
    plant: &PlantModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    t: f64,
    h: f64,
) -> Result<DVector<f64>> {
    plant.check_dims(x, u, d)?;
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive, got {h}"
        )));
    }
    let k1 = plant.rhs(x, u, d, t);
    let k2 = plant.rhs(&(x + &k1 * (0.5 * h)), u, d, t + 0.5 * h);
    let k3 = plant.rhs(&(x + &k2 * (0.5 * h)), u, d, t + 0.5 * h);
    let k4 = plant.rhs(&(x + &k3 * h), u, d, t + h);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let next = plant.guard(&next);
    match first_non_finite(&next) {
        Some(index) => Err(Error::IntegrationFailure { index }),
        None => Ok(next),
    }
}

/// The sampled map `F_ts`: `n_sub` RK4 steps of `t_s / n_sub` with `u`, `d` held.
pub fn discrete_map(
    plant: &PlantModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    t: f64,
    t_s: f64,
    n_sub: usize,
) -> Result<DVector<f64>> {
    if n_sub == 0 {
        return Err(Error::InvalidArgument("n_sub must be at least 1".into()));
    }
    let h = t_s / n_sub as f64;
    let mut state = x.clone();
    for i in 0..n_sub {
        state = rk4_step(plant, &state, u, d, t + i as f64 * h, h)?;
    }
    Ok(state)
}

pub(crate) fn fd_step(z: f64) -> f64 {
    FD_REL_STEP * z.abs().max(1.0)
}

/// Central-difference Jacobians `(∂F/∂x, ∂F/∂d)` of the sampled map.
pub fn fd_jacobians(
    plant: &PlantModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    d: &DVector<f64>,
    t: f64,
    t_s: f64,
    n_sub: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    plant.check_dims(x, u, d)?;
    let n_x = plant.n_x();
    let mut jac_x = DMatrix::zeros(n_x, n_x);
    for col in 0..n_x {
        let delta = fd_step(x[col]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[col] += delta;
        xm[col] -= delta;
        let fp = discrete_map(plant, &xp, u, d, t, t_s, n_sub)?;
        let fm = discrete_map(plant, &xm, u, d, t, t_s, n_sub)?;
        jac_x.set_column(col, &((fp - fm) / (2.0 * delta)));
    }
    let mut jac_d = DMatrix::zeros(n_x, plant.n_d());
    for col in 0..plant.n_d() {
        let delta = fd_step(d[col]);
        let mut dp = d.clone();
        let mut dm = d.clone();
        dp[col] += delta;
        dm[col] -= delta;
        let fp = discrete_map(plant, x, u, &dp, t, t_s, n_sub)?;
        let fm = discrete_map(plant, x, u, &dm, t, t_s, n_sub)?;
        jac_d.set_column(col, &((fp - fm) / (2.0 * delta)));
    }
    Ok((jac_x, jac_d))
}
