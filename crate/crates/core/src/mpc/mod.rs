//! Box-constrained output tracking MPC.
//!
//! Both the ARX and the state-space formulation keep every predicted
//! quantity as a decision variable and couple them through equality
//! constraints. The equalities are handled by an augmented Lagrangian whose
//! subproblems are minimized by cyclic coordinate descent, with box
//! constraints applied by clipping each coordinate step. Constraint
//! columns are generated from the model coefficients when needed, so no
//! condensed matrices are ever formed.

mod engine;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linearization::LinearSsModel;
use crate::ss2arx::{ArxHistory, ArxModel};

pub use engine::{SolverTrace, SweepRecord};

pub const DEFAULT_RHO: f64 = 10.0;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_OUTER: usize = 200;
pub const DEFAULT_MAX_INNER: usize = 50;

/// Horizon, weights, boxes and solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub horizon: usize,
    pub w_y: DMatrix<f64>,
    pub w_du: DMatrix<f64>,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    pub du_min: DVector<f64>,
    pub du_max: DVector<f64>,
    pub y_min: DVector<f64>,
    pub y_max: DVector<f64>,
    pub rho: f64,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl MpcConfig {
    /// Unbounded problem with scalar weights `w_y I` and `w_du I`.
    pub fn new(horizon: usize, n_u: usize, n_y: usize, w_y: f64, w_du: f64) -> Self {
        let inf = |n| DVector::from_element(n, f64::INFINITY);
        Self {
            horizon,
            w_y: DMatrix::identity(n_y, n_y) * w_y,
            w_du: DMatrix::identity(n_u, n_u) * w_du,
            u_min: -inf(n_u),
            u_max: inf(n_u),
            du_min: -inf(n_u),
            du_max: inf(n_u),
            y_min: -inf(n_y),
            y_max: inf(n_y),
            rho: DEFAULT_RHO,
            tol_primal: DEFAULT_TOL,
            tol_dual: DEFAULT_TOL,
            max_outer: DEFAULT_MAX_OUTER,
            max_inner: DEFAULT_MAX_INNER,
        }
    }

    pub fn with_u_box(mut self, lo: f64, hi: f64) -> Self {
        self.u_min.fill(lo);
        self.u_max.fill(hi);
        self
    }

    pub fn with_du_box(mut self, lo: f64, hi: f64) -> Self {
        self.du_min.fill(lo);
        self.du_max.fill(hi);
        self
    }

    pub fn with_y_box(mut self, lo: f64, hi: f64) -> Self {
        self.y_min.fill(lo);
        self.y_max.fill(hi);
        self
    }

    pub fn n_u(&self) -> usize {
        self.w_du.nrows()
    }

    pub fn n_y(&self) -> usize {
        self.w_y.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        let (n_u, n_y) = (self.n_u(), self.n_y());
        check_len("W_y columns", n_y, self.w_y.ncols())?;
        check_len("W_du columns", n_u, self.w_du.ncols())?;
        for (name, w) in [("W_y", &self.w_y), ("W_du", &self.w_du)] {
            if w.iter().any(|v| !v.is_finite()) {
                return bad(&format!("{name} must be finite"));
            }
            if (w - w.transpose()).abs().max() > 1e-12 * (1.0 + w.abs().max()) {
                return bad(&format!("{name} must be symmetric"));
            }
            if w.nrows() > 0 && w.clone().symmetric_eigen().eigenvalues.min() < -1e-12 {
                return bad(&format!("{name} must be positive semidefinite"));
            }
        }
        for (name, lo, hi, n) in [
            ("u", &self.u_min, &self.u_max, n_u),
            ("du", &self.du_min, &self.du_max, n_u),
            ("y", &self.y_min, &self.y_max, n_y),
        ] {
            check_len("box lower bound", n, lo.len())?;
            check_len("box upper bound", n, hi.len())?;
            if lo
                .iter()
                .zip(hi.iter())
                .any(|(a, b)| a.is_nan() || b.is_nan() || a > b)
            {
                return bad(&format!("{name} box requires min <= max"));
            }
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be positive");
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return bad("iteration caps must be at least 1");
        }
        Ok(())
    }
}

/// Prediction model together with its initial condition.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictionModel {
    Arx {
        model: ArxModel,
        history: ArxHistory,
    },
    Ss {
        model: LinearSsModel,
        x0: DVector<f64>,
    },
}

/// One receding-horizon tracking problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub config: MpcConfig,
    pub model: PredictionModel,
    pub u_prev: DVector<f64>,
    /// `r_1 … r_T`.
    pub reference: Vec<DVector<f64>>,
}

impl MpcProblem {
    /// The last applied input is the newest input in `history`.
    pub fn arx(
        config: MpcConfig,
        model: ArxModel,
        history: ArxHistory,
        reference: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let u_prev = history.input(0).clone();
        let problem = Self {
            config,
            model: PredictionModel::Arx { model, history },
            u_prev,
            reference,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn ss(
        config: MpcConfig,
        model: LinearSsModel,
        x0: DVector<f64>,
        u_prev: DVector<f64>,
        reference: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let problem = Self {
            config,
            model: PredictionModel::Ss { model, x0 },
            u_prev,
            reference,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let (n_u, n_y) = (self.config.n_u(), self.config.n_y());
        match &self.model {
            PredictionModel::Arx { model, history } => {
                model.validate()?;
                check_len("ARX inputs", n_u, model.n_u())?;
                check_len("ARX outputs", n_y, model.n_y())?;
                check_len("history order", model.order(), history.order())?;
                for i in 0..history.order() {
                    check_len("history output", n_y, history.output(i).len())?;
                    check_len("history input", n_u, history.input(i).len())?;
                }
                if history.input(0) != &self.u_prev {
                    return Err(Error::InvalidArgument(
                        "u_prev must equal the newest input in the history".into(),
                    ));
                }
            }
            PredictionModel::Ss { model, x0 } => {
                model.validate()?;
                check_len("state-space inputs", n_u, model.n_u())?;
                check_len("state-space outputs", n_y, model.n_y())?;
                check_len("initial state", model.n_x(), x0.len())?;
            }
        }
        check_len("u_prev", n_u, self.u_prev.len())?;
        check_len(
            "reference length",
            self.config.horizon,
            self.reference.len(),
        )?;
        for r in &self.reference {
            check_len("reference entry", n_y, r.len())?;
        }
        let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
        if !finite(&self.u_prev) || !self.reference.iter().all(finite) {
            return Err(Error::InvalidArgument("problem data must be finite".into()));
        }
        Ok(())
    }

    fn n_x(&self) -> usize {
        match &self.model {
            PredictionModel::Arx { .. } => 0,
            PredictionModel::Ss { model, .. } => model.n_x(),
        }
    }

    /// Output trajectory produced by `u_seq` under the prediction model.
    pub fn simulate(&self, u_seq: &[DVector<f64>]) -> Vec<DVector<f64>> {
        match &self.model {
            PredictionModel::Arx { model, history } => {
                let mut hist = history.clone();
                let mut ys = Vec::with_capacity(u_seq.len());
                for u in u_seq {
                    hist.push_input(u.clone());
                    let phi = hist.regressor();
                    let y = crate::ss2arx::arx_predict(model, &phi).expect("validated dimensions");
                    hist.push_output(y.clone());
                    ys.push(y);
                }
                ys
            }
            PredictionModel::Ss { model, x0 } => {
                let mut x = x0.clone();
                u_seq
                    .iter()
                    .map(|u| {
                        x = model.step(&x, u);
                        model.output(&x)
                    })
                    .collect()
            }
        }
    }

    /// `½Σ‖y−r‖²_{W_y} + ½Σ‖Δu‖²_{W_Δu}`.
    pub fn objective(&self, du_seq: &[DVector<f64>], y_seq: &[DVector<f64>]) -> f64 {
        let cfg = &self.config;
        let mut f = 0.0;
        for (y, r) in y_seq.iter().zip(&self.reference) {
            let e = y - r;
            f += 0.5 * e.dot(&(&cfg.w_y * &e));
        }
        for du in du_seq {
            f += 0.5 * du.dot(&(&cfg.w_du * du));
        }
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    IterationLimit,
}

/// Solver state carried between consecutive solves.
///
/// Each stage block holds that stage's decision variables (Δu, u, then the
/// predicted state if any, then y) and its constraint multipliers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WarmStart {
    pub primal: Vec<DVector<f64>>,
    pub multipliers: Vec<DVector<f64>>,
    pub n_u: usize,
}

impl WarmStart {
    pub fn cold() -> Self {
        Self::default()
    }

    pub fn is_cold(&self) -> bool {
        self.primal.is_empty()
    }

    /// Planned inputs stored in the warm start.
    pub fn u_seq(&self) -> Vec<DVector<f64>> {
        self.primal
            .iter()
            .map(|s| s.rows(self.n_u, self.n_u).into_owned())
            .collect()
    }
}

/// Drop the first stage and repeat the last one; an empty warm start stays cold.
pub fn shift_warm_start(prev: &WarmStart) -> WarmStart {
    if prev.is_cold() {
        return WarmStart::cold();
    }
    let shift = |v: &Vec<DVector<f64>>| {
        let mut out: Vec<_> = v.iter().skip(1).cloned().collect();
        out.push(v.last().expect("non-empty").clone());
        out
    };
    WarmStart {
        primal: shift(&prev.primal),
        multipliers: shift(&prev.multipliers),
        n_u: prev.n_u,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub u_seq: Vec<DVector<f64>>,
    pub du_seq: Vec<DVector<f64>>,
    pub y_pred: Vec<DVector<f64>>,
    pub status: SolveStatus,
    pub outer_iters: usize,
    /// Total coordinate-descent sweeps.
    pub inner_iters: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub solve_seconds: f64,
    /// Unshifted solver state; pass through [`shift_warm_start`] for the next sample.
    pub warm: WarmStart,
    /// Number of scalars held in solver buffers.
    pub workspace_len: usize,
}

impl MpcSolution {
    pub fn first_input(&self) -> &DVector<f64> {
        &self.u_seq[0]
    }
}

/// Solves the ARX tracking problem.
pub fn solve_arx_mpc(problem: &MpcProblem, warm: Option<&WarmStart>) -> Result<MpcSolution> {
    if !matches!(problem.model, PredictionModel::Arx { .. }) {
        return Err(Error::InvalidArgument(
            "solve_arx_mpc needs an ARX prediction model".into(),
        ));
    }
    solve_mpc(problem, warm, None)
}

/// Solves the state-space tracking problem.
pub fn solve_ss_mpc(problem: &MpcProblem, warm: Option<&WarmStart>) -> Result<MpcSolution> {
    if !matches!(problem.model, PredictionModel::Ss { .. }) {
        return Err(Error::InvalidArgument(
            "solve_ss_mpc needs a state-space prediction model".into(),
        ));
    }
    solve_mpc(problem, warm, None)
}

/// Solves either formulation, optionally recording the per-sweep
/// augmented Lagrangian values.
pub fn solve_mpc(
    problem: &MpcProblem,
    warm: Option<&WarmStart>,
    trace: Option<&mut SolverTrace>,
) -> Result<MpcSolution> {
    let start = Instant::now();
    problem.validate()?;
    let mut solver = engine::Engine::new(problem);
    if let Some(w) = warm {
        solver.load_warm_start(w);
    }
    let run = solver.run(trace)?;
    let warm_out = solver.export_warm_start();

    let cfg = &problem.config;
    let mut u_seq = Vec::with_capacity(cfg.horizon);
    let mut du_seq = Vec::with_capacity(cfg.horizon);
    let mut u_last = problem.u_prev.clone();
    for k in 0..cfg.horizon {
        let (du_raw, _) = solver.stage_inputs(k);
        let mut du = DVector::zeros(cfg.n_u());
        let mut u = DVector::zeros(cfg.n_u());
        for m in 0..cfg.n_u() {
            let lo = cfg.du_min[m].max(cfg.u_min[m] - u_last[m]);
            let hi = cfg.du_max[m].min(cfg.u_max[m] - u_last[m]);
            let step = if lo <= hi {
                du_raw[m].clamp(lo, hi)
            } else if u_last[m] < cfg.u_min[m] {
                cfg.du_max[m]
            } else {
                cfg.du_min[m]
            };
            let next = u_last[m] + step;
            u[m] = if lo <= hi {
                next.clamp(cfg.u_min[m], cfg.u_max[m])
            } else {
                next
            };
            du[m] = u[m] - u_last[m];
        }
        u_last = u.clone();
        u_seq.push(u);
        du_seq.push(du);
    }
    let y_pred = problem.simulate(&u_seq);
    if y_pred.iter().flat_map(|y| y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure(
            "predicted outputs are not finite".into(),
        ));
    }
    let objective = problem.objective(&du_seq, &y_pred);

    Ok(MpcSolution {
        u_seq,
        du_seq,
        y_pred,
        status: if run.converged {
            SolveStatus::Converged
        } else {
            SolveStatus::IterationLimit
        },
        outer_iters: run.outer_iters,
        inner_iters: run.inner_iters,
        primal_residual: run.primal_residual,
        dual_residual: run.dual_residual,
        objective,
        solve_seconds: start.elapsed().as_secs_f64(),
        warm: warm_out,
        workspace_len: solver.workspace_len(),
    })
}
