//! Closed-loop simulation of the benchmark plants.
//!
//! [`run_ia_mpc`] identifies an ARX model offline from a single
//! linearization and adapts it online; [`run_sl_mpc`] re-linearizes the
//! plant every sample around a joint state/disturbance estimate. Both runs
//! share the truth simulation, reference and noise streams, so identical
//! scenarios produce identical logs.

mod reference;
mod report;
mod scenario;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{discrete_map, PlantModel, DEFAULT_SUBSTEPS};
use crate::error::{Error, Result};
use crate::estimation::{init_arx_ekf, joint_ekf_step, update_in_place, JointEkfState};
use crate::linearization::{linearize_and_discretize, LinearSsModel};
use crate::mpc::{
    shift_warm_start, solve_arx_mpc, solve_ss_mpc, MpcProblem, MpcSolution, WarmStart,
};
use crate::ss2arx::{place_observer_gain, ss_to_arx, ArxHistory, ArxModel, ObserverDesign};

pub use reference::{
    inject_process_noise, make_reference, noise_rng, Preview, Reference, ReferenceSpec,
};
pub use report::{
    compute_metrics, hold_segments, settling_samples, write_atomic, ClosedLoopLog, HoldSegment,
    Metrics, StepRecord, FEASIBILITY_TOL,
};
pub use scenario::{
    Benchmark, EkfSettings, NoiseSettings, ScenarioConfig, DEFAULT_HORIZON, DEFAULT_W_DU,
    DEFAULT_W_Y,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    IaMpc,
    SlMpc,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::IaMpc, Method::SlMpc];

    pub fn name(self) -> &'static str {
        match self {
            Method::IaMpc => "ia-mpc",
            Method::SlMpc => "sl-mpc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

/// Models built before the loop starts (IA-MPC only).
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineModel {
    pub linear: LinearSsModel,
    pub observer: ObserverDesign,
    pub arx: ArxModel,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: ClosedLoopLog,
    pub metrics: Metrics,
    pub offline: Option<OfflineModel>,
}

/// A run aborted at `step`; `partial` holds the samples completed before it.
#[derive(Debug, Clone)]
pub struct RunError {
    pub step: usize,
    pub source: Error,
    pub partial: ClosedLoopLog,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run aborted at step {}: {}", self.step, self.source)
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub fn run_method(
    scenario: &ScenarioConfig,
    method: Method,
) -> std::result::Result<RunOutput, RunError> {
    match method {
        Method::IaMpc => run_ia_mpc(scenario),
        Method::SlMpc => run_sl_mpc(scenario),
    }
}

/// Standard file stem `<plant>_<method>[_noise]`.
pub fn output_stem(scenario: &ScenarioConfig, method: Method) -> String {
    let noise = if scenario.noise.enabled { "_noise" } else { "" };
    format!("{}_{}{}", scenario.plant.name(), method.name(), noise)
}

/// Linearize at the initial point, place the observer and convert to ARX.
pub fn build_offline_model(scenario: &ScenarioConfig) -> Result<OfflineModel> {
    let plant = scenario.plant.plant();
    let d0 = scenario.plant.nominal_disturbance();
    let linear = linearize_and_discretize(
        &plant,
        &scenario.initial_x,
        &scenario.initial_u,
        &d0,
        0.0,
        scenario.t_s,
    )?;
    let observer = place_observer_gain(&linear.a, &linear.c, &scenario.observer_poles)?;
    let arx = ss_to_arx(&linear, &observer.gain, scenario.arx_order)?;
    Ok(OfflineModel {
        linear,
        observer,
        arx,
    })
}

/// Truth state, measurement path and logs shared by both loops.
struct Loop<'a> {
    scenario: &'a ScenarioConfig,
    plant: PlantModel,
    reference: Reference,
    rng: ChaCha8Rng,
    x: DVector<f64>,
    log: ClosedLoopLog,
}

impl<'a> Loop<'a> {
    fn new(scenario: &'a ScenarioConfig, method: Method, estimate_labels: Vec<String>) -> Self {
        Self {
            scenario,
            plant: scenario.plant.plant(),
            reference: make_reference(
                &scenario.reference,
                scenario.duration,
                scenario.t_s,
                scenario.mpc.horizon,
                scenario.preview,
            ),
            rng: noise_rng(scenario.noise.seed),
            x: scenario.initial_x.clone(),
            log: ClosedLoopLog {
                plant: scenario.plant.name().to_string(),
                method,
                estimate_labels,
                records: Vec::new(),
                log_timing: scenario.log_timing,
            },
        }
    }

    fn fail(self, step: usize, source: Error) -> RunError {
        RunError {
            step,
            source,
            partial: self.log,
        }
    }

    fn time(&self, k: usize) -> f64 {
        k as f64 * self.scenario.t_s
    }

    fn measure(&mut self, k: usize) -> (DVector<f64>, DVector<f64>) {
        let d = self.scenario.plant.disturbance(self.time(k));
        let mut y = self.plant.output(&self.x, &d);
        let noise = &self.scenario.noise;
        if noise.enabled && noise.measurement_amplitude > 0.0 {
            y = inject_process_noise(&y, noise.measurement_amplitude, &mut self.rng);
        }
        (y, d)
    }

    fn record(
        &mut self,
        k: usize,
        d: DVector<f64>,
        y: DVector<f64>,
        sol: &MpcSolution,
        estimate: Vec<f64>,
    ) {
        self.log.records.push(StepRecord {
            t: self.time(k),
            x_true: self.x.clone(),
            d_true: d,
            y_meas: y,
            r: DVector::from_element(1, self.reference.at(k)),
            u: sol.u_seq[0].clone(),
            du: sol.du_seq[0].clone(),
            estimate,
            status: sol.status,
            outer_iters: sol.outer_iters,
            inner_iters: sol.inner_iters,
            solve_seconds: sol.solve_seconds,
            workspace_len: sol.workspace_len,
        });
    }

    /// Hold `u` over one sample, then add process noise.
    fn advance(&mut self, k: usize, u: &DVector<f64>, d: &DVector<f64>) -> Result<()> {
        let t = self.time(k);
        self.x = discrete_map(
            &self.plant,
            &self.x,
            u,
            d,
            t,
            self.scenario.t_s,
            DEFAULT_SUBSTEPS,
        )?;
        let noise = &self.scenario.noise;
        if noise.enabled && noise.amplitude > 0.0 {
            let noisy = inject_process_noise(&self.x, noise.amplitude, &mut self.rng);
            self.x = self.plant.guard(&noisy);
        }
        Ok(())
    }
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn start_error(scenario: &ScenarioConfig, method: Method, source: Error) -> RunError {
    RunError {
        step: 0,
        source,
        partial: ClosedLoopLog {
            plant: scenario.plant.name().to_string(),
            method,
            estimate_labels: Vec::new(),
            records: Vec::new(),
            log_timing: scenario.log_timing,
        },
    }
}

/// Adaptive ARX loop: estimator update, ARX-MPC solve, apply the first input.
pub fn run_ia_mpc(scenario: &ScenarioConfig) -> std::result::Result<RunOutput, RunError> {
    let method = Method::IaMpc;
    let setup = || -> Result<(OfflineModel, crate::estimation::ArxEkfState)> {
        scenario.validate()?;
        let offline = build_offline_model(scenario)?;
        let len = offline.arx.theta_len();
        let q = nalgebra::DMatrix::identity(len, len) * scenario.ekf.q_scale;
        let ekf = init_arx_ekf(&offline.arx, scenario.ekf.p0_scale, q, scenario.ekf.r)?;
        Ok((offline, ekf))
    };
    let (offline, mut ekf) = setup().map_err(|e| start_error(scenario, method, e))?;
    let n_theta = offline.arx.theta_len() * offline.arx.n_y();
    let mut lp = Loop::new(scenario, method, labels("theta", n_theta));

    let y0 = lp
        .plant
        .output(&scenario.initial_x, &scenario.plant.disturbance(0.0));
    let mut history = ArxHistory::constant(scenario.arx_order, &y0, &scenario.initial_u);
    let mut warm: Option<WarmStart> = None;

    for k in 0..scenario.samples() {
        let (y, d) = lp.measure(k);
        let step = (|| -> Result<MpcSolution> {
            if k > 0 {
                update_in_place(&mut ekf, &history.regressor(), &y)?;
            }
            let model = ekf.model()?;
            history.push_output(y.clone());
            let problem = MpcProblem::arx(
                scenario.mpc.clone(),
                model,
                history.clone(),
                lp.reference.horizon(k, scenario.mpc.horizon),
            )?;
            let shifted = warm.as_ref().map(shift_warm_start);
            solve_arx_mpc(&problem, shifted.as_ref())
        })();
        let sol = match step {
            Ok(sol) => sol,
            Err(e) => return Err(lp.fail(k, e)),
        };
        let u = sol.u_seq[0].clone();
        lp.record(k, d.clone(), y, &sol, ekf.theta_concat());
        history.push_input(u.clone());
        warm = Some(sol.warm);
        if let Err(e) = lp.advance(k, &u, &d) {
            return Err(lp.fail(k, e));
        }
    }

    let metrics = compute_metrics(
        &lp.log,
        &scenario.mpc,
        &scenario.initial_u,
        scenario.preview,
    );
    Ok(RunOutput {
        log: lp.log,
        metrics,
        offline: Some(offline),
    })
}

/// Successive linearization loop with a joint state/disturbance EKF.
pub fn run_sl_mpc(scenario: &ScenarioConfig) -> std::result::Result<RunOutput, RunError> {
    let method = Method::SlMpc;
    let setup = || -> Result<JointEkfState> {
        scenario.validate()?;
        let plant = scenario.plant.plant();
        JointEkfState::new(
            scenario.initial_x.clone(),
            scenario.plant.nominal_disturbance(),
            plant.n_y(),
            scenario.ekf.p0_scale,
            scenario.ekf.q_scale,
            scenario.ekf.r,
        )
    };
    let mut ekf = setup().map_err(|e| start_error(scenario, method, e))?;
    let n_x = scenario.initial_x.len();
    let n_d = ekf.d_hat.len();
    let mut names = labels("xhat", n_x);
    names.extend(labels("dhat", n_d));
    let mut lp = Loop::new(scenario, method, names);

    let mut u_prev = scenario.initial_u.clone();
    let mut warm: Option<WarmStart> = None;

    for k in 0..scenario.samples() {
        let (y, d) = lp.measure(k);
        let t = lp.time(k);
        let step = (|| -> Result<MpcSolution> {
            if k > 0 {
                ekf = joint_ekf_step(&ekf, &lp.plant, &u_prev, &y, lp.time(k - 1), scenario.t_s)?;
            }
            let model = linearize_and_discretize(
                &lp.plant,
                &ekf.x_hat,
                &u_prev,
                &ekf.d_hat,
                t,
                scenario.t_s,
            )?;
            let problem = MpcProblem::ss(
                scenario.mpc.clone(),
                model,
                ekf.x_hat.clone(),
                u_prev.clone(),
                lp.reference.horizon(k, scenario.mpc.horizon),
            )?;
            let shifted = warm.as_ref().map(shift_warm_start);
            solve_ss_mpc(&problem, shifted.as_ref())
        })();
        let sol = match step {
            Ok(sol) => sol,
            Err(e) => return Err(lp.fail(k, e)),
        };
        let u = sol.u_seq[0].clone();
        let estimate: Vec<f64> = ekf.x_hat.iter().chain(ekf.d_hat.iter()).copied().collect();
        lp.record(k, d.clone(), y, &sol, estimate);
        u_prev = u.clone();
        warm = Some(sol.warm);
        if let Err(e) = lp.advance(k, &u, &d) {
            return Err(lp.fail(k, e));
        }
    }

    let metrics = compute_metrics(
        &lp.log,
        &scenario.mpc,
        &scenario.initial_u,
        scenario.preview,
    );
    Ok(RunOutput {
        log: lp.log,
        metrics,
        offline: None,
    })
}
