//! Extended Kalman filters.
//!
//! [`joint_ekf_step`] estimates the plant state together with an unmeasured
//! random-walk disturbance, using finite-difference Jacobians of the sampled
//! map. [`arx_ekf_update`] tracks ARX coefficients as slowly drifting
//! states; since every output channel shares the same regressor, each channel
//! is filtered independently and the gain needs a single scalar division.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{discrete_map, fd_jacobians, fd_step, PlantModel, DEFAULT_SUBSTEPS};
use crate::error::{check_len, Error, Result};
use crate::ss2arx::{flatten_theta, theta_len, unflatten_theta, ArxModel, Regressor};

/// Innovation covariance condition number above which the joint EKF gives up.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// Defaults shared by both filters.
pub const DEFAULT_P0_SCALE: f64 = 10.0;
pub const DEFAULT_Q_SCALE: f64 = 0.01;
pub const DEFAULT_R: f64 = 0.01;

fn symmetrize(p: &mut DMatrix<f64>) {
    let t = p.transpose();
    *p += t;
    *p *= 0.5;
}

/// State of the joint state/disturbance EKF.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEkfState {
    pub x_hat: DVector<f64>,
    pub d_hat: DVector<f64>,
    /// Covariance of `[x; d]`.
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// RK4 substeps used for the prediction.
    pub substeps: usize,
    /// Number of dense matrix inversions performed so far.
    pub matrix_inversions: u64,
}

impl JointEkfState {
    /// `P₀ = ε I`, `Q = q I`, `R = r I`.
    pub fn new(
        x_hat: DVector<f64>,
        d_hat: DVector<f64>,
        n_y: usize,
        p0_scale: f64,
        q_scale: f64,
        r_scale: f64,
    ) -> Result<Self> {
        if !(p0_scale > 0.0) || q_scale < 0.0 || !(r_scale > 0.0) {
            return Err(Error::InvalidArgument(
                "EKF requires P0 scale > 0, Q scale >= 0 and R scale > 0".into(),
            ));
        }
        let n = x_hat.len() + d_hat.len();
        Ok(Self {
            x_hat,
            d_hat,
            p: DMatrix::identity(n, n) * p0_scale,
            q: DMatrix::identity(n, n) * q_scale,
            r: DMatrix::identity(n_y, n_y) * r_scale,
            substeps: DEFAULT_SUBSTEPS,
            matrix_inversions: 0,
        })
    }
}

/// Central-difference `(∂g/∂x, ∂g/∂d)`.
fn output_jacobians(
    plant: &PlantModel,
    x: &DVector<f64>,
    d: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n_y = plant.n_y();
    let mut hx = DMatrix::zeros(n_y, x.len());
    for col in 0..x.len() {
        let delta = fd_step(x[col]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[col] += delta;
        xm[col] -= delta;
        hx.set_column(
            col,
            &((plant.output(&xp, d) - plant.output(&xm, d)) / (2.0 * delta)),
        );
    }
    let mut hd = DMatrix::zeros(n_y, d.len());
    for col in 0..d.len() {
        let delta = fd_step(d[col]);
        let mut dp = d.clone();
        let mut dm = d.clone();
        dp[col] += delta;
        dm[col] -= delta;
        hd.set_column(
            col,
            &((plant.output(x, &dp) - plant.output(x, &dm)) / (2.0 * delta)),
        );
    }
    (hx, hd)
}

/// One prediction/correction cycle. `t` is the time of the previous sample,
/// `u_prev` the input applied over `[t, t + t_s)` and `y_meas` the output
/// measured at `t + t_s`.
///
/// The state Jacobians are taken at the previous estimate; the output
/// Jacobians at the predicted estimate, where the innovation is formed.
pub fn joint_ekf_step(
    state: &JointEkfState,
    plant: &PlantModel,
    u_prev: &DVector<f64>,
    y_meas: &DVector<f64>,
    t: f64,
    t_s: f64,
) -> Result<JointEkfState> {
    plant.check_dims(&state.x_hat, u_prev, &state.d_hat)?;
    check_len("measurement", plant.n_y(), y_meas.len())?;
    if y_meas.iter().any(|v| !v.is_finite()) {
        return Err(Error::EstimatorFailure("non-finite measurement".into()));
    }
    let (n_x, n_d) = (plant.n_x(), plant.n_d());
    let n = n_x + n_d;

    let x_pred = discrete_map(
        plant,
        &state.x_hat,
        u_prev,
        &state.d_hat,
        t,
        t_s,
        state.substeps,
    )?;
    let d_pred = state.d_hat.clone();

    let (lam, lam_d) = fd_jacobians(
        plant,
        &state.x_hat,
        u_prev,
        &state.d_hat,
        t,
        t_s,
        state.substeps,
    )?;
    let mut phi = DMatrix::identity(n, n);
    phi.view_mut((0, 0), (n_x, n_x)).copy_from(&lam);
    phi.view_mut((0, n_x), (n_x, n_d)).copy_from(&lam_d);

    let p_pred = &phi * &state.p * phi.transpose() + &state.q;

    let (hx, hd) = output_jacobians(plant, &x_pred, &d_pred);
    let mut theta = DMatrix::zeros(plant.n_y(), n);
    theta.view_mut((0, 0), (plant.n_y(), n_x)).copy_from(&hx);
    theta.view_mut((0, n_x), (plant.n_y(), n_d)).copy_from(&hd);

    let s = &theta * &p_pred * theta.transpose() + &state.r;
    let sv = s.clone().svd(false, false).singular_values;
    let cond = sv.max() / sv.min();
    if !(cond <= MAX_INNOVATION_CONDITION) {
        return Err(Error::EstimatorFailure(format!(
            "innovation covariance is singular (condition number {cond:e})"
        )));
    }
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::EstimatorFailure("innovation covariance is singular".into()))?;
    let gain = &p_pred * theta.transpose() * s_inv;

    let innovation = y_meas - plant.output(&x_pred, &d_pred);
    let correction = &gain * innovation;
    let x_hat = plant.guard(&(x_pred + correction.rows(0, n_x)));
    let d_hat = d_pred + correction.rows(n_x, n_d);

    let mut p = (DMatrix::identity(n, n) - &gain * &theta) * p_pred;
    symmetrize(&mut p);

    if x_hat.iter().chain(d_hat.iter()).any(|v| !v.is_finite()) {
        return Err(Error::EstimatorFailure("non-finite state estimate".into()));
    }

    Ok(JointEkfState {
        x_hat,
        d_hat,
        p,
        q: state.q.clone(),
        r: state.r.clone(),
        substeps: state.substeps,
        matrix_inversions: state.matrix_inversions + 1,
    })
}

/// Operation counts on the ARX filter path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ArxEkfAudit {
    pub updates: u64,
    pub scalar_divisions: u64,
    pub matrix_inversions: u64,
}

/// Decoupled per-output ARX parameter filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxEkfState {
    pub theta: Vec<DVector<f64>>,
    pub p: Vec<DMatrix<f64>>,
    /// Process noise covariance shared by all channels.
    pub q: DMatrix<f64>,
    /// Per-channel multiplier on `q` (1 by default).
    pub channel_q_scale: Vec<f64>,
    pub r: f64,
    pub order: usize,
    pub n_u: usize,
    pub audit: ArxEkfAudit,
}

impl ArxEkfState {
    pub fn n_y(&self) -> usize {
        self.theta.len()
    }

    pub fn model(&self) -> Result<ArxModel> {
        unflatten_theta(&self.theta, self.order, self.n_y(), self.n_u)
    }

    /// All channel parameters concatenated.
    pub fn theta_concat(&self) -> Vec<f64> {
        self.theta.iter().flat_map(|t| t.iter().copied()).collect()
    }
}

/// `θ(j)` from the offline ARX model, `P(j) = ε I`.
pub fn init_arx_ekf(arx: &ArxModel, p0_scale: f64, q: DMatrix<f64>, r: f64) -> Result<ArxEkfState> {
    if !(p0_scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "P0 scale must be positive, got {p0_scale}"
        )));
    }
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "measurement variance must be >= 0, got {r}"
        )));
    }
    let len = arx.theta_len();
    check_len("ARX process noise rows", len, q.nrows())?;
    check_len("ARX process noise cols", len, q.ncols())?;
    let theta = flatten_theta(arx);
    let n_y = theta.len();
    Ok(ArxEkfState {
        theta,
        p: vec![DMatrix::identity(len, len) * p0_scale; n_y],
        q,
        channel_q_scale: vec![1.0; n_y],
        r,
        order: arx.order(),
        n_u: arx.n_u(),
        audit: ArxEkfAudit::default(),
    })
}

/// Default `Q = 0.01 I` sized for `arx`.
pub fn default_arx_q(arx: &ArxModel) -> DMatrix<f64> {
    let len = arx.theta_len();
    DMatrix::identity(len, len) * DEFAULT_Q_SCALE
}

/// One correction per output channel with the shared regressor `φ`.
pub fn arx_ekf_update(
    state: &ArxEkfState,
    phi: &Regressor,
    y_meas: &DVector<f64>,
) -> Result<ArxEkfState> {
    let mut next = state.clone();
    update_in_place(&mut next, phi, y_meas)?;
    Ok(next)
}

pub(crate) fn update_in_place(
    state: &mut ArxEkfState,
    phi: &Regressor,
    y_meas: &DVector<f64>,
) -> Result<()> {
    let len = theta_len(state.order, state.n_y(), state.n_u);
    check_len("ARX regressor", len, phi.len())?;
    check_len("ARX measurement", state.n_y(), y_meas.len())?;
    let phi = phi.as_vector();
    for j in 0..state.n_y() {
        let mut p_pred = &state.p[j] + &state.q * state.channel_q_scale[j];
        let p_phi = &p_pred * phi;
        let phi_p = phi.transpose() * &p_pred;
        let variance = phi.dot(&p_phi) + state.r;
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::CovarianceCorruption {
                channel: j,
                value: variance,
            });
        }
        let inv = 1.0 / variance;
        state.audit.scalar_divisions += 1;
        let gain = p_phi * inv;
        let innovation = y_meas[j] - phi.dot(&state.theta[j]);
        state.theta[j].axpy(innovation, &gain, 1.0);
        // (I − K φ') P⁻
        p_pred.ger(-1.0, &gain, &phi_p.transpose(), 1.0);
        symmetrize(&mut p_pred);
        state.p[j] = p_pred;
    }
    state.audit.updates += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_cstr;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hold_plant(sensitive: bool) -> PlantModel {
        PlantModel::new(
            "hold",
            1,
            1,
            0,
            1,
            |x, _, _, _| x * 0.0,
            move |x, _| if sensitive { x.clone() } else { dvector![0.0] },
        )
        .unwrap()
    }

    #[test]
    fn scalar_riccati_arithmetic() {
        let plant = hold_plant(true);
        let state = JointEkfState::new(dvector![0.0], dvector![], 1, 10.0, 0.01, 0.01).unwrap();
        let next =
            joint_ekf_step(&state, &plant, &dvector![0.0], &dvector![1.0], 0.0, 1.0).unwrap();
        let k = 10.01 / 10.02;
        assert!((next.x_hat[0] - k).abs() < 1e-9);
        assert!((next.p[(0, 0)] - (1.0 - k) * 10.01).abs() < 1e-9);
        assert!((next.p[(0, 0)] - 0.009990).abs() < 1e-6);
        assert_eq!(next.matrix_inversions, 1);
    }

    #[test]
    fn insensitive_output_gives_pure_prediction() {
        let plant =
            PlantModel::new("decay", 1, 1, 0, 1, |x, _, _, _| -x, |_, _| dvector![0.0]).unwrap();
        let state = JointEkfState::new(dvector![2.0], dvector![], 1, 10.0, 0.01, 0.01).unwrap();
        let next =
            joint_ekf_step(&state, &plant, &dvector![0.0], &dvector![5.0], 0.0, 0.1).unwrap();
        let pred = discrete_map(
            &plant,
            &dvector![2.0],
            &dvector![0.0],
            &dvector![],
            0.0,
            0.1,
            4,
        )
        .unwrap();
        assert_eq!(next.x_hat, pred);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let plant = hold_plant(false);
        let mut state = JointEkfState::new(dvector![0.0], dvector![], 1, 10.0, 0.01, 0.01).unwrap();
        state.r = dmatrix![0.0];
        let err = joint_ekf_step(&state, &plant, &dvector![0.0], &dvector![1.0], 0.0, 1.0);
        assert!(matches!(err, Err(Error::EstimatorFailure(_))));
    }

    #[test]
    fn cstr_disturbance_estimate_follows_inlet_temperature_open_loop() {
        let plant = make_cstr();
        let ts = 0.5;
        let mut x = dvector![8.57, 311.0];
        let u = dvector![298.15];
        let mut est = JointEkfState::new(x.clone(), dvector![298.15], 1, 10.0, 0.01, 0.01).unwrap();
        let mut worst_late = 0.0f64;
        for k in 0..300 {
            let t = k as f64 * ts;
            let d = dvector![crate::dynamics::cstr_inlet_temperature(t)];
            x = discrete_map(&plant, &x, &u, &d, t, ts, 4).unwrap();
            let y = plant.output(&x, &d);
            est = joint_ekf_step(&est, &plant, &u, &y, t, ts).unwrap();
            let sym = (&est.p - est.p.transpose()).abs().max();
            assert_eq!(sym, 0.0);
            let min_eig = est.p.clone().symmetric_eigen().eigenvalues.min();
            assert!(min_eig > -1e-10);
            if k >= 100 {
                let truth = crate::dynamics::cstr_inlet_temperature(t);
                worst_late = worst_late.max((est.d_hat[0] - truth).abs());
            }
        }
        // Open loop with the coolant fixed; the closed-loop bound is checked in the harness tests.
        assert!(worst_late < 2.0, "lag error {worst_late}");
    }

    fn scalar_arx_state(p0: f64, q: f64, r: f64) -> ArxEkfState {
        ArxEkfState {
            theta: vec![dvector![0.0]],
            p: vec![dmatrix![p0]],
            q: dmatrix![q],
            channel_q_scale: vec![1.0],
            r,
            order: 0,
            n_u: 1,
            audit: ArxEkfAudit::default(),
        }
    }

    #[test]
    fn scalar_arx_update() {
        let state = scalar_arx_state(10.0, 0.01, 0.01);
        let phi = Regressor::new(&[], &[]).unwrap();
        assert_eq!(phi.as_vector(), &dvector![1.0]);
        let next = arx_ekf_update(&state, &phi, &dvector![1.0]).unwrap();
        assert!((next.theta[0][0] - 10.01 / 10.02).abs() < 1e-12);
        assert_eq!(next.audit.scalar_divisions, 1);
        assert_eq!(next.audit.matrix_inversions, 0);
    }

    #[test]
    fn zero_innovation_keeps_theta_and_shrinks_p() {
        let arx = ArxModel::new(vec![dmatrix![0.5]], vec![dmatrix![1.5]], dvector![0.2]).unwrap();
        let state = init_arx_ekf(&arx, 10.0, default_arx_q(&arx), 0.01).unwrap();
        let phi = Regressor::new(&[dvector![1.0]], &[dvector![2.0]]).unwrap();
        let y = crate::ss2arx::arx_predict(&arx, &phi).unwrap();
        let next = arx_ekf_update(&state, &phi, &y).unwrap();
        assert!((&next.theta[0] - &state.theta[0]).abs().max() < 1e-15);
        let v = phi.as_vector();
        let before = v.dot(&((&state.p[0] + &state.q) * v));
        let after = v.dot(&(&next.p[0] * v));
        assert!(after < before);
    }

    #[test]
    fn covariance_corruption_is_reported() {
        let mut state = scalar_arx_state(-10.0, 0.0, 0.01);
        state.p[0] = dmatrix![-10.0];
        let phi = Regressor::new(&[], &[]).unwrap();
        assert!(matches!(
            arx_ekf_update(&state, &phi, &dvector![1.0]),
            Err(Error::CovarianceCorruption { channel: 0, .. })
        ));
    }

    #[test]
    fn init_layout_and_defaults() {
        let arx = ArxModel::new(
            vec![dmatrix![0.5], dmatrix![0.1], dmatrix![0.0]],
            vec![dmatrix![2.0], dmatrix![0.3], dmatrix![0.0]],
            dvector![0.1],
        )
        .unwrap();
        let state = init_arx_ekf(&arx, DEFAULT_P0_SCALE, default_arx_q(&arx), DEFAULT_R).unwrap();
        assert_eq!(state.theta, flatten_theta(&arx));
        assert_eq!(state.p[0], DMatrix::identity(7, 7) * 10.0);
        assert_eq!(state.q, DMatrix::identity(7, 7) * 0.01);
        assert_eq!(state.r, 0.01);
        assert_eq!(state.model().unwrap(), arx);
        assert!(init_arx_ekf(&arx, 0.0, default_arx_q(&arx), 0.01).is_err());
    }

    #[test]
    fn noise_free_identification_converges() {
        // Two-state plant written as an order-2 ARX model.
        let truth = ArxModel::new(
            vec![dmatrix![1.5], dmatrix![-0.56]],
            vec![dmatrix![0.3], dmatrix![0.1]],
            dvector![0.05],
        )
        .unwrap();
        let mut guess = truth.clone();
        guess.psi[0][(0, 0)] += 0.05;
        guess.omega[1][(0, 0)] -= 0.05;
        guess.zeta[0] += 0.02;
        let len = truth.theta_len();
        let mut state = init_arx_ekf(&guess, 10.0, DMatrix::zeros(len, len), 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut hist = crate::ss2arx::ArxHistory::constant(2, &dvector![0.0], &dvector![0.0]);
        let mut last_err = f64::INFINITY;
        for _ in 0..200 {
            let phi = hist.regressor();
            let y = crate::ss2arx::arx_predict(&truth, &phi).unwrap();
            last_err = (y[0] - phi.as_vector().dot(&state.theta[0])).abs();
            state = arx_ekf_update(&state, &phi, &y).unwrap();
            hist.push_output(y);
            hist.push_input(dvector![rng.gen_range(-1.0..1.0)]);
        }
        assert!(last_err < 1e-6, "prediction error {last_err}");
    }

    #[test]
    fn covariances_stay_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let arx = ArxModel::new(
            vec![dmatrix![0.5, 0.1; 0.0, 0.3], dmatrix![0.1, 0.0; 0.2, 0.1]],
            vec![dmatrix![1.0; 0.5], dmatrix![0.2; -0.1]],
            dvector![0.1, -0.2],
        )
        .unwrap();
        let mut state = init_arx_ekf(&arx, 10.0, default_arx_q(&arx), 0.01).unwrap();
        for _ in 0..200 {
            let outs: Vec<_> = (0..2)
                .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0)))
                .collect();
            let ins: Vec<_> = (0..2).map(|_| dvector![rng.gen_range(-3.0..3.0)]).collect();
            let phi = Regressor::new(&outs, &ins).unwrap();
            let y = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            state = arx_ekf_update(&state, &phi, &y).unwrap();
            for p in &state.p {
                assert_eq!((p - p.transpose()).abs().max(), 0.0);
                assert!(p.clone().symmetric_eigen().eigenvalues.min() > -1e-10);
            }
        }
        assert_eq!(state.audit.scalar_divisions, 400);
        assert_eq!(state.audit.matrix_inversions, 0);
    }

    #[test]
    fn decoupled_update_matches_stacked_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let arx = ArxModel::new(
            vec![dmatrix![0.4, 0.1; -0.2, 0.3]],
            vec![dmatrix![1.0, 0.0; 0.5, -1.0]],
            dvector![0.3, -0.1],
        )
        .unwrap();
        let len = arx.theta_len();
        let mut dec = init_arx_ekf(&arx, 10.0, default_arx_q(&arx), 0.01).unwrap();
        let n = 2 * len;
        let mut theta: DVector<f64> = DVector::from_iterator(n, dec.theta_concat());
        let mut p = DMatrix::identity(n, n) * 10.0;
        let q = DMatrix::identity(n, n) * 0.01;
        for _ in 0..25 {
            let outs = vec![DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0))];
            let ins = vec![DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0))];
            let phi = Regressor::new(&outs, &ins).unwrap();
            let y = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            dec = arx_ekf_update(&dec, &phi, &y).unwrap();

            let mut h = DMatrix::zeros(2, n);
            for j in 0..2 {
                h.view_mut((j, j * len), (1, len))
                    .copy_from(&phi.as_vector().transpose());
            }
            let p_pred = &p + &q;
            let s = &h * &p_pred * h.transpose() + DMatrix::identity(2, 2) * 0.01;
            let k = &p_pred * h.transpose() * s.try_inverse().unwrap();
            theta += &k * (&y - &h * &theta);
            p = (DMatrix::identity(n, n) - &k * &h) * p_pred;
        }
        let stacked: DVector<f64> = DVector::from_iterator(n, dec.theta_concat());
        assert!((stacked - &theta).abs().max() < 1e-10);
        for j in 0..2 {
            let block = p.view((j * len, j * len), (len, len));
            assert!((&dec.p[j] - block).abs().max() < 1e-10);
        }
    }
}
