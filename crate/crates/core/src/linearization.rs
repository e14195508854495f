//! "First linearise then discretise": continuous Jacobians of `f`/`g` at an
//! operating point, followed by a one-step Euler discretization into an
//! affine discrete-time state-space model.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{fd_step, PlantModel};
use crate::error::{check_len, Error, Result};

/// Continuous-time affine approximation around `(x̂, u_prev, d̂)`:
/// `ẋ ≈ A_c (x − x̂) + B_c (u − u_prev) + e_c`, `y ≈ C (x − x̂) + h_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLinearization {
    pub a_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
    pub e_c: DVector<f64>,
    pub c: DMatrix<f64>,
    pub h_c: DVector<f64>,
}

/// Discrete affine model `x⁺ = A x + B u + e`, `y = C x + h`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSsModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DVector<f64>,
    pub c: DMatrix<f64>,
    pub h: DVector<f64>,
    pub t_s: f64,
}

impl LinearSsModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        e: DVector<f64>,
        c: DMatrix<f64>,
        h: DVector<f64>,
        t_s: f64,
    ) -> Result<Self> {
        let model = Self { a, b, e, c, h, t_s };
        model.validate()?;
        Ok(model)
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n_x = self.a.nrows();
        check_len("A columns", n_x, self.a.ncols())?;
        check_len("B rows", n_x, self.b.nrows())?;
        check_len("e length", n_x, self.e.len())?;
        check_len("C columns", n_x, self.c.ncols())?;
        check_len("h length", self.c.nrows(), self.h.len())?;
        let finite = self.a.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
            && self.e.iter().all(|v| v.is_finite())
            && self.c.iter().all(|v| v.is_finite())
            && self.h.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument(
                "state-space model has non-finite entries".into(),
            ));
        }
        Ok(())
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.e
    }

    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.h
    }
}

fn finite_or(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    for (idx, v) in m.iter().enumerate() {
        if !v.is_finite() {
            // column-major storage
            return Err(Error::LinearizationFailure {
                what,
                row: idx % m.nrows(),
                col: idx / m.nrows(),
            });
        }
    }
    Ok(())
}

/// Central-difference linearization of `f` and `g` at `(x̂, u_prev, d̂)`.
pub fn linearize_continuous(
    plant: &PlantModel,
    x_hat: &DVector<f64>,
    u_prev: &DVector<f64>,
    d_hat: &DVector<f64>,
    t: f64,
) -> Result<ContinuousLinearization> {
    plant.check_dims(x_hat, u_prev, d_hat)?;
    let (n_x, n_u, n_y) = (plant.n_x(), plant.n_u(), plant.n_y());

    let mut a_c = DMatrix::zeros(n_x, n_x);
    let mut c = DMatrix::zeros(n_y, n_x);
    for col in 0..n_x {
        let delta = fd_step(x_hat[col]);
        let mut xp = x_hat.clone();
        let mut xm = x_hat.clone();
        xp[col] += delta;
        xm[col] -= delta;
        let df =
            (plant.rhs(&xp, u_prev, d_hat, t) - plant.rhs(&xm, u_prev, d_hat, t)) / (2.0 * delta);
        let dg = (plant.output(&xp, d_hat) - plant.output(&xm, d_hat)) / (2.0 * delta);
        a_c.set_column(col, &df);
        c.set_column(col, &dg);
    }

    let mut b_c = DMatrix::zeros(n_x, n_u);
    for col in 0..n_u {
        let delta = fd_step(u_prev[col]);
        let mut up = u_prev.clone();
        let mut um = u_prev.clone();
        up[col] += delta;
        um[col] -= delta;
        let df =
            (plant.rhs(x_hat, &up, d_hat, t) - plant.rhs(x_hat, &um, d_hat, t)) / (2.0 * delta);
        b_c.set_column(col, &df);
    }

    let e_c = plant.rhs(x_hat, u_prev, d_hat, t);
    let h_c = plant.output(x_hat, d_hat);

    finite_or("A_c", &a_c)?;
    finite_or("B_c", &b_c)?;
    finite_or("C", &c)?;
    finite_or("e_c", &DMatrix::from_column_slice(n_x, 1, e_c.as_slice()))?;
    finite_or("h_c", &DMatrix::from_column_slice(n_y, 1, h_c.as_slice()))?;

    Ok(ContinuousLinearization {
        a_c,
        b_c,
        e_c,
        c,
        h_c,
    })
}

/// One-step Euler discretization of a continuous linearization:
/// `A = I + t_s A_c`, `B = t_s B_c`, `e = t_s (e_c − A_c x̂ − B_c u_prev)`,
/// `h = h_c − C x̂`.
pub fn euler_discretize(
    lin: &ContinuousLinearization,
    x_hat: &DVector<f64>,
    u_prev: &DVector<f64>,
    t_s: f64,
) -> Result<LinearSsModel> {
    if !(t_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample time must be positive, got {t_s}"
        )));
    }
    let n_x = lin.a_c.nrows();
    check_len("linearization point", n_x, x_hat.len())?;
    check_len("linearization input", lin.b_c.ncols(), u_prev.len())?;
    let a = DMatrix::identity(n_x, n_x) + &lin.a_c * t_s;
    let b = &lin.b_c * t_s;
    let e = (&lin.e_c - &lin.a_c * x_hat - &lin.b_c * u_prev) * t_s;
    let h = &lin.h_c - &lin.c * x_hat;
    LinearSsModel::new(a, b, e, lin.c.clone(), h, t_s)
}

/// Linearize and discretize in one call.
pub fn linearize_and_discretize(
    plant: &PlantModel,
    x_hat: &DVector<f64>,
    u_prev: &DVector<f64>,
    d_hat: &DVector<f64>,
    t: f64,
    t_s: f64,
) -> Result<LinearSsModel> {
    let lin = linearize_continuous(plant, x_hat, u_prev, d_hat, t)?;
    euler_discretize(&lin, x_hat, u_prev, t_s)
}
