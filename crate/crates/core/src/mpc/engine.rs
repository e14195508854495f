use nalgebra::DVector;

use super::{MpcProblem, PredictionModel, WarmStart};
use crate::error::{Error, Result};

/// Augmented Lagrangian value before and after one coordinate sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub outer: usize,
    pub sweep: usize,
    pub al_before: f64,
    pub al_after: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub sweeps: Vec<SweepRecord>,
}

pub(super) struct RunStats {
    pub converged: bool,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Clone, Copy)]
enum Var {
    Du(usize),
    /// `u` or `x`: no objective term.
    Free,
    Y(usize),
}

/// Variables per stage: `[Δu_k, u_k, x_{k+1}, y_{k+1}]` (no `x` for ARX).
///
/// Every variable except `Δu` is determined by the model once the rates are
/// fixed, and owns one equality constraint. The constraints are kept in
/// simulation-error form, `ĉ_v = v − sim_v(Δu)`, where `sim` runs the
/// prediction model from the measured history. This is the stage-wise
/// equality system `c = 0` multiplied by the inverse of its (unit lower
/// triangular) block in the dependent variables, so the feasible set is the
/// same but each dependent variable enters exactly one residual with unit
/// coefficient. Columns for `Δu` are the model sensitivities, regenerated
/// from the coefficients by a short recursion whenever they are needed.
///
/// Besides single coordinates, each sweep also minimizes along the
/// constraint-preserving direction of every `Δu` (the rate plus the response
/// of everything downstream), which the objective alone governs.
pub(super) struct Engine<'a> {
    problem: &'a MpcProblem,
    t: usize,
    n_u: usize,
    n_x: usize,
    n_y: usize,
    sv: usize,
    sc: usize,
    z: Vec<f64>,
    z_prev: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    col_sq: Vec<f64>,
    /// One-step residuals of the stage equations, used for stopping.
    c: Vec<f64>,
    /// Simulation-error residuals, the constraints the multipliers act on.
    c_hat: Vec<f64>,
    lam: Vec<f64>,
    lam_prev: Vec<f64>,
    lam_hat: Vec<f64>,
    dir: Vec<f64>,
    sim: Vec<f64>,
}

impl<'a> Engine<'a> {
    pub(super) fn new(problem: &'a MpcProblem) -> Self {
        let cfg = &problem.config;
        let (t, n_u, n_y) = (cfg.horizon, cfg.n_u(), cfg.n_y());
        let n_x = problem.n_x();
        let sv = 2 * n_u + n_x + n_y;
        let sc = n_u + n_x + n_y;
        let mut lo = vec![f64::NEG_INFINITY; t * sv];
        let mut hi = vec![f64::INFINITY; t * sv];
        for k in 0..t {
            for m in 0..n_u {
                lo[k * sv + m] = cfg.du_min[m];
                hi[k * sv + m] = cfg.du_max[m];
                lo[k * sv + n_u + m] = cfg.u_min[m];
                hi[k * sv + n_u + m] = cfg.u_max[m];
            }
            for l in 0..n_y {
                lo[k * sv + 2 * n_u + n_x + l] = cfg.y_min[l];
                hi[k * sv + 2 * n_u + n_x + l] = cfg.y_max[l];
            }
        }
        let mut engine = Self {
            problem,
            t,
            n_u,
            n_x,
            n_y,
            sv,
            sc,
            z: vec![0.0; t * sv],
            z_prev: vec![0.0; t * sv],
            lo,
            hi,
            col_sq: vec![1.0; t * sv],
            c: vec![0.0; t * sc],
            c_hat: vec![0.0; t * sc],
            lam: vec![0.0; t * sc],
            lam_prev: vec![0.0; t * sc],
            lam_hat: vec![0.0; t * sc],
            dir: vec![0.0; t * sv],
            sim: vec![0.0; t * sv],
        };
        for k in 0..t {
            for m in 0..n_u {
                engine.fill_direction(k, m, false);
                let s: f64 = (k * sv..t * sv)
                    .filter(|&i| i % sv >= n_u)
                    .map(|i| engine.dir[i] * engine.dir[i])
                    .sum();
                engine.col_sq[k * sv + m] = s;
            }
        }
        engine.cold_start();
        engine
    }

    /// `Δu = 0`, inputs held at `u_prev`, predictions from the model, zero multipliers.
    fn cold_start(&mut self) {
        for k in 0..self.t {
            for m in 0..self.n_u {
                self.z[k * self.sv + m] = 0.0;
            }
        }
        self.simulate_dependents();
        for i in 0..self.z.len() {
            if i % self.sv >= self.n_u {
                self.z[i] = self.sim[i];
            }
        }
        self.lam.fill(0.0);
    }

    pub(super) fn load_warm_start(&mut self, warm: &WarmStart) {
        let fits = warm.primal.len() == self.t
            && warm.multipliers.len() == self.t
            && warm.primal.iter().all(|s| s.len() == self.sv)
            && warm.multipliers.iter().all(|s| s.len() == self.sc)
            && warm
                .primal
                .iter()
                .chain(&warm.multipliers)
                .all(|s| s.iter().all(|v| v.is_finite()));
        if !fits {
            return;
        }
        for k in 0..self.t {
            self.z[k * self.sv..(k + 1) * self.sv].copy_from_slice(warm.primal[k].as_slice());
            self.lam[k * self.sc..(k + 1) * self.sc]
                .copy_from_slice(warm.multipliers[k].as_slice());
        }
        for i in 0..self.z.len() {
            self.z[i] = self.z[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    pub(super) fn export_warm_start(&self) -> WarmStart {
        WarmStart {
            primal: (0..self.t)
                .map(|k| DVector::from_column_slice(&self.z[k * self.sv..(k + 1) * self.sv]))
                .collect(),
            // The multipliers the final primal iterate was minimized against.
            multipliers: (0..self.t)
                .map(|k| DVector::from_column_slice(&self.lam_hat[k * self.sc..(k + 1) * self.sc]))
                .collect(),
            n_u: self.n_u,
        }
    }

    pub(super) fn stage_inputs(&self, k: usize) -> (DVector<f64>, DVector<f64>) {
        let base = k * self.sv;
        (
            DVector::from_column_slice(&self.z[base..base + self.n_u]),
            DVector::from_column_slice(&self.z[base + self.n_u..base + 2 * self.n_u]),
        )
    }

    pub(super) fn workspace_len(&self) -> usize {
        [
            &self.z,
            &self.z_prev,
            &self.lo,
            &self.hi,
            &self.col_sq,
            &self.c,
            &self.c_hat,
            &self.lam,
            &self.lam_prev,
            &self.lam_hat,
            &self.dir,
            &self.sim,
        ]
        .iter()
        .map(|v| v.len())
        .sum()
    }

    fn decode(&self, idx: usize) -> (usize, Var) {
        let (k, o) = (idx / self.sv, idx % self.sv);
        let var = if o < self.n_u {
            Var::Du(o)
        } else if o < 2 * self.n_u + self.n_x {
            Var::Free
        } else {
            Var::Y(o - 2 * self.n_u - self.n_x)
        };
        (k, var)
    }

    /// Constraint owned by a dependent variable; stage layouts line up
    /// because the constraint block is the variable block without `Δu`.
    fn owned(&self, idx: usize) -> usize {
        (idx / self.sv) * self.sc + idx % self.sv - self.n_u
    }

    fn history_y(&self, s: isize, l: usize) -> f64 {
        let PredictionModel::Arx { history, .. } = &self.problem.model else {
            unreachable!("history only exists in the ARX form")
        };
        history.output((-s) as usize)[l]
    }

    fn history_u(&self, s: isize, m: usize) -> f64 {
        let PredictionModel::Arx { history, .. } = &self.problem.model else {
            unreachable!("history only exists in the ARX form")
        };
        history.input((-s - 1) as usize)[m]
    }

    /// Writes into `sim` the inputs, states and outputs that the current
    /// rates produce under the model.
    fn simulate_dependents(&mut self) {
        let (sv, n_u, n_x, n_y) = (self.sv, self.n_u, self.n_x, self.n_y);
        let x_off = 2 * n_u;
        let y_off = x_off + n_x;
        let mut sim = std::mem::take(&mut self.sim);
        for k in 0..self.t {
            let base = k * sv;
            for m in 0..n_u {
                let before = if k == 0 {
                    self.problem.u_prev[m]
                } else {
                    sim[base - sv + n_u + m]
                };
                sim[base + m] = self.z[base + m];
                sim[base + n_u + m] = before + self.z[base + m];
            }
            match &self.problem.model {
                PredictionModel::Arx { model, .. } => {
                    for j in 0..n_y {
                        let mut v = model.zeta[j];
                        for i in 1..=model.order() {
                            // Output y_s sits in stage s − 1; input u_s in stage s.
                            let s = k as isize + 1 - i as isize;
                            for l in 0..n_y {
                                let y = if s >= 1 {
                                    sim[(s as usize - 1) * sv + y_off + l]
                                } else {
                                    self.history_y(s, l)
                                };
                                v += model.psi[i - 1][(j, l)] * y;
                            }
                            for m in 0..n_u {
                                let u = if s >= 0 {
                                    sim[s as usize * sv + n_u + m]
                                } else {
                                    self.history_u(s, m)
                                };
                                v += model.omega[i - 1][(j, m)] * u;
                            }
                        }
                        sim[base + y_off + j] = v;
                    }
                }
                PredictionModel::Ss { model, x0 } => {
                    for j in 0..n_x {
                        let mut v = model.e[j];
                        for l in 0..n_x {
                            let x = if k == 0 {
                                x0[l]
                            } else {
                                sim[base - sv + x_off + l]
                            };
                            v += model.a[(j, l)] * x;
                        }
                        for m in 0..n_u {
                            v += model.b[(j, m)] * sim[base + n_u + m];
                        }
                        sim[base + x_off + j] = v;
                    }
                    for j in 0..n_y {
                        let mut v = model.h[j];
                        for l in 0..n_x {
                            v += model.c[(j, l)] * sim[base + x_off + l];
                        }
                        sim[base + y_off + j] = v;
                    }
                }
            }
        }
        self.sim = sim;
    }

    fn recompute_c_hat(&mut self) {
        self.simulate_dependents();
        for i in 0..self.z.len() {
            if i % self.sv >= self.n_u {
                let con = self.owned(i);
                self.c_hat[con] = self.z[i] - self.sim[i];
            }
        }
    }

    /// One-step residuals `c_u = u_k − u_{k−1} − Δu_k`,
    /// `c_x = x_{k+1} − A x_k − B u_k − e` and `c_y` (ARX recursion or
    /// `y − C x − h`), all evaluated at the decision variables.
    fn recompute_residuals(&mut self) {
        let (sv, n_u, n_x, n_y) = (self.sv, self.n_u, self.n_x, self.n_y);
        let x_off = 2 * n_u;
        let y_off = x_off + n_x;
        let z = &self.z;
        let c = &mut self.c;
        for k in 0..self.t {
            let base = k * sv;
            let cb = k * self.sc;
            for m in 0..n_u {
                let before = if k == 0 {
                    self.problem.u_prev[m]
                } else {
                    z[base - sv + n_u + m]
                };
                c[cb + m] = z[base + n_u + m] - before - z[base + m];
            }
            match &self.problem.model {
                PredictionModel::Arx { model, history } => {
                    for j in 0..n_y {
                        let mut r = z[base + y_off + j] - model.zeta[j];
                        for i in 1..=model.order() {
                            let s = k as isize + 1 - i as isize;
                            for l in 0..n_y {
                                let y = if s >= 1 {
                                    z[(s as usize - 1) * sv + y_off + l]
                                } else {
                                    history.output((-s) as usize)[l]
                                };
                                r -= model.psi[i - 1][(j, l)] * y;
                            }
                            for m in 0..n_u {
                                let u = if s >= 0 {
                                    z[s as usize * sv + n_u + m]
                                } else {
                                    history.input((-s - 1) as usize)[m]
                                };
                                r -= model.omega[i - 1][(j, m)] * u;
                            }
                        }
                        c[cb + n_u + j] = r;
                    }
                }
                PredictionModel::Ss { model, x0 } => {
                    for j in 0..n_x {
                        let mut r = z[base + x_off + j] - model.e[j];
                        for l in 0..n_x {
                            let x = if k == 0 {
                                x0[l]
                            } else {
                                z[base - sv + x_off + l]
                            };
                            r -= model.a[(j, l)] * x;
                        }
                        for m in 0..n_u {
                            r -= model.b[(j, m)] * z[base + n_u + m];
                        }
                        c[cb + n_u + j] = r;
                    }
                    for j in 0..n_y {
                        let mut r = z[base + y_off + j] - model.h[j];
                        for l in 0..n_x {
                            r -= model.c[(j, l)] * z[base + x_off + l];
                        }
                        c[cb + n_u + n_x + j] = r;
                    }
                }
            }
        }
    }

    /// Fills `dir` with the response of every variable to a unit rise of
    /// `Δu_k[m]`: the later inputs follow it and the states and outputs
    /// follow the homogeneous model. With `pulse` the rise is undone by
    /// `Δu_{k+1}`, so only `u_k` moves among the inputs.
    fn fill_direction(&mut self, k: usize, m: usize, pulse: bool) {
        let (sv, n_u, n_x, n_y, t) = (self.sv, self.n_u, self.n_x, self.n_y, self.t);
        let x_off = 2 * n_u;
        let y_off = x_off + n_x;
        let moved = |s: isize| s == k as isize || (!pulse && s > k as isize);
        let mut dir = std::mem::take(&mut self.dir);
        dir[k * sv..].fill(0.0);
        dir[k * sv + m] = 1.0;
        if pulse && k + 1 < t {
            dir[(k + 1) * sv + m] = -1.0;
        }
        for s in k..t {
            let base = s * sv;
            if moved(s as isize) {
                dir[base + n_u + m] = 1.0;
            }
            match &self.problem.model {
                PredictionModel::Arx { model, .. } => {
                    for j in 0..n_y {
                        let mut v = 0.0;
                        for i in 1..=model.order() {
                            let src = s as isize + 1 - i as isize;
                            if src >= 1 && src as usize > k {
                                let yb = (src as usize - 1) * sv + y_off;
                                for l in 0..n_y {
                                    v += model.psi[i - 1][(j, l)] * dir[yb + l];
                                }
                            }
                            if moved(src) {
                                v += model.omega[i - 1][(j, m)];
                            }
                        }
                        dir[base + y_off + j] = v;
                    }
                }
                PredictionModel::Ss { model, .. } => {
                    for j in 0..n_x {
                        let mut v = if moved(s as isize) {
                            model.b[(j, m)]
                        } else {
                            0.0
                        };
                        if s > k {
                            for l in 0..n_x {
                                v += model.a[(j, l)] * dir[base - sv + x_off + l];
                            }
                        }
                        dir[base + x_off + j] = v;
                    }
                    for j in 0..n_y {
                        let mut v = 0.0;
                        for l in 0..n_x {
                            v += model.c[(j, l)] * dir[base + x_off + l];
                        }
                        dir[base + y_off + j] = v;
                    }
                }
            }
        }
        self.dir = dir;
    }

    /// Gradient and curvature of the tracking objective along one coordinate.
    fn objective_partial(&self, idx: usize) -> (f64, f64) {
        let cfg = &self.problem.config;
        let (k, var) = self.decode(idx);
        let base = k * self.sv;
        match var {
            Var::Du(m) => {
                let g = (0..self.n_u)
                    .map(|q| cfg.w_du[(m, q)] * self.z[base + q])
                    .sum();
                (g, cfg.w_du[(m, m)])
            }
            Var::Y(l) => {
                let off = base + 2 * self.n_u + self.n_x;
                let r = &self.problem.reference[k];
                let g = (0..self.n_y)
                    .map(|q| cfg.w_y[(l, q)] * (self.z[off + q] - r[q]))
                    .sum();
                (g, cfg.w_y[(l, l)])
            }
            Var::Free => (0.0, 0.0),
        }
    }

    /// Gradient and curvature of the tracking objective along `dir` from stage `k`.
    fn objective_along_dir(&self, k: usize) -> (f64, f64) {
        let cfg = &self.problem.config;
        let (sv, n_u, n_x, n_y) = (self.sv, self.n_u, self.n_x, self.n_y);
        let (mut g, mut h) = (0.0, 0.0);
        for s in k..self.t {
            let base = s * sv;
            for a in 0..n_u {
                for b in 0..n_u {
                    let w = cfg.w_du[(a, b)];
                    g += self.dir[base + a] * w * self.z[base + b];
                    h += self.dir[base + a] * w * self.dir[base + b];
                }
            }
            let off = base + 2 * n_u + n_x;
            let r = &self.problem.reference[s];
            for a in 0..n_y {
                for b in 0..n_y {
                    let w = cfg.w_y[(a, b)];
                    g += self.dir[off + a] * w * (self.z[off + b] - r[b]);
                    h += self.dir[off + a] * w * self.dir[off + b];
                }
            }
        }
        (g, h)
    }

    fn objective_value(&self) -> f64 {
        let cfg = &self.problem.config;
        let mut f = 0.0;
        for k in 0..self.t {
            let base = k * self.sv;
            for m in 0..self.n_u {
                for q in 0..self.n_u {
                    f += 0.5 * self.z[base + m] * cfg.w_du[(m, q)] * self.z[base + q];
                }
            }
            let off = base + 2 * self.n_u + self.n_x;
            let r = &self.problem.reference[k];
            for l in 0..self.n_y {
                for q in 0..self.n_y {
                    f +=
                        0.5 * (self.z[off + l] - r[l]) * cfg.w_y[(l, q)] * (self.z[off + q] - r[q]);
                }
            }
        }
        f
    }

    fn augmented_lagrangian(&self) -> f64 {
        let rho = self.problem.config.rho;
        self.objective_value()
            + self
                .c_hat
                .iter()
                .zip(&self.lam_hat)
                .map(|(c, l)| l * c + 0.5 * rho * c * c)
                .sum::<f64>()
    }

    /// Exact minimization of the augmented Lagrangian along a dependent
    /// variable, clipped to its box. Returns the step taken.
    fn dependent_step(&mut self, idx: usize) -> f64 {
        let rho = self.problem.config.rho;
        let con = self.owned(idx);
        let (g_obj, h_obj) = self.objective_partial(idx);
        let g = g_obj + self.lam_hat[con] + rho * self.c_hat[con];
        let h = h_obj + rho;
        let old = self.z[idx];
        let step = (old - g / h).clamp(self.lo[idx], self.hi[idx]) - old;
        if step != 0.0 {
            self.z[idx] = old + step;
            self.c_hat[con] += step;
        }
        step
    }

    /// Exact minimization along `Δu_k[m]` alone, with `dir` holding its
    /// sensitivity. Returns the step taken.
    fn rate_step(&mut self, k: usize, m: usize) -> f64 {
        let rho = self.problem.config.rho;
        let idx = k * self.sv + m;
        let (mut g, h_obj) = self.objective_partial(idx);
        for i in k * self.sv..self.z.len() {
            let d = self.dir[i];
            if d != 0.0 && i % self.sv >= self.n_u {
                let con = self.owned(i);
                g -= d * (self.lam_hat[con] + rho * self.c_hat[con]);
            }
        }
        let h = h_obj + rho * self.col_sq[idx];
        if h <= 0.0 {
            return 0.0;
        }
        let old = self.z[idx];
        let step = (old - g / h).clamp(self.lo[idx], self.hi[idx]) - old;
        if step != 0.0 {
            self.z[idx] = old + step;
            for i in k * self.sv..self.z.len() {
                let d = self.dir[i];
                if d != 0.0 && i % self.sv >= self.n_u {
                    let con = self.owned(i);
                    self.c_hat[con] -= step * d;
                }
            }
        }
        step
    }

    /// Exact minimization along `dir` (the constraint-preserving direction
    /// of `Δu_k`), limited by every box it touches. Returns the largest
    /// coordinate change.
    fn direction_step(&mut self, k: usize) -> f64 {
        let (g, h) = self.objective_along_dir(k);
        if h <= 0.0 {
            return 0.0;
        }
        let (mut s_lo, mut s_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut scale = 0.0f64;
        for i in k * self.sv..self.z.len() {
            let d = self.dir[i];
            if d == 0.0 {
                continue;
            }
            scale = scale.max(d.abs());
            let (a, b) = ((self.lo[i] - self.z[i]) / d, (self.hi[i] - self.z[i]) / d);
            let (a, b) = if d > 0.0 { (a, b) } else { (b, a) };
            s_lo = s_lo.max(a);
            s_hi = s_hi.min(b);
        }
        if !(s_lo <= 0.0 && 0.0 <= s_hi) {
            return 0.0;
        }
        let step = (-g / h).clamp(s_lo, s_hi);
        if step == 0.0 || !step.is_finite() {
            return 0.0;
        }
        for i in k * self.sv..self.z.len() {
            let d = self.dir[i];
            if d != 0.0 {
                self.z[i] = (self.z[i] + step * d).clamp(self.lo[i], self.hi[i]);
            }
        }
        step.abs() * scale
    }

    fn sweep(&mut self, backward: bool) -> f64 {
        let n = self.z.len();
        let mut largest = 0.0f64;
        for i in 0..n {
            let idx = if backward { n - 1 - i } else { i };
            let (k, var) = self.decode(idx);
            let step = match var {
                Var::Du(m) => {
                    self.fill_direction(k, m, false);
                    let a = self.rate_step(k, m).abs().max(self.direction_step(k));
                    self.fill_direction(k, m, true);
                    a.max(self.direction_step(k))
                }
                _ => self.dependent_step(idx).abs(),
            };
            largest = largest.max(step);
        }
        // Rebuild the residuals so rounding does not accumulate.
        self.recompute_c_hat();
        largest
    }

    pub(super) fn run(&mut self, mut trace: Option<&mut SolverTrace>) -> Result<RunStats> {
        let cfg = &self.problem.config;
        let (rho, tol_p, tol_d) = (cfg.rho, cfg.tol_primal, cfg.tol_dual);
        let (max_outer, max_inner) = (cfg.max_outer, cfg.max_inner);

        self.recompute_c_hat();
        self.lam_prev.copy_from_slice(&self.lam);
        let mut momentum = 1.0f64;
        let mut last_norm = f64::INFINITY;
        let mut inner_total = 0;
        let mut primal = f64::INFINITY;
        let mut dual = f64::INFINITY;

        for outer in 1..=max_outer {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            for i in 0..self.lam.len() {
                self.lam_hat[i] = self.lam[i] + beta * (self.lam[i] - self.lam_prev[i]);
            }
            self.z_prev.copy_from_slice(&self.z);

            let mut inner_done = false;
            for s in 0..max_inner {
                let before = trace.as_ref().map(|_| self.augmented_lagrangian());
                let largest = self.sweep(s % 2 == 1);
                inner_total += 1;
                if let (Some(tr), Some(al_before)) = (trace.as_deref_mut(), before) {
                    let al_after = self.augmented_lagrangian();
                    tr.sweeps.push(SweepRecord {
                        outer,
                        sweep: s,
                        al_before,
                        al_after,
                    });
                }
                if largest <= 0.1 * tol_d {
                    inner_done = true;
                    break;
                }
            }

            self.recompute_residuals();
            std::mem::swap(&mut self.lam_prev, &mut self.lam);
            for i in 0..self.lam.len() {
                self.lam[i] = self.lam_hat[i] + rho * self.c_hat[i];
            }
            let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            primal = sup(&self.c).max(sup(&self.c_hat));
            dual = self
                .z
                .iter()
                .zip(&self.z_prev)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            if !primal.is_finite() || !dual.is_finite() || self.lam.iter().any(|v| !v.is_finite()) {
                return Err(Error::SolverFailure(format!(
                    "non-finite iterate at outer iteration {outer}"
                )));
            }
            if inner_done && primal <= tol_p && dual <= tol_d {
                return Ok(RunStats {
                    converged: true,
                    outer_iters: outer,
                    inner_iters: inner_total,
                    primal_residual: primal,
                    dual_residual: dual,
                });
            }
            let norm = self.c_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > last_norm {
                momentum = 1.0;
                self.lam_prev.copy_from_slice(&self.lam);
            } else {
                momentum = next;
            }
            last_norm = norm;
        }
        Ok(RunStats {
            converged: false,
            outer_iters: max_outer,
            inner_iters: inner_total,
            primal_residual: primal,
            dual_residual: dual,
        })
    }
}
