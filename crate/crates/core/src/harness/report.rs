use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;

use crate::error::Result;
use crate::mpc::{MpcConfig, SolveStatus};

use super::{Method, Preview};

/// Bound excess below this is treated as rounding, not a violation.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// One control sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// True state at `t`, before the input is applied.
    pub x_true: DVector<f64>,
    pub d_true: DVector<f64>,
    pub y_meas: DVector<f64>,
    pub r: DVector<f64>,
    pub u: DVector<f64>,
    pub du: DVector<f64>,
    /// ARX coefficients (IA-MPC) or `[x̂; d̂]` (SL-MPC) after the estimator update.
    pub estimate: Vec<f64>,
    pub status: SolveStatus,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub solve_seconds: f64,
    pub workspace_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopLog {
    pub plant: String,
    pub method: Method,
    /// Column prefix for the estimate block (`theta` or `xhat`/`dhat`).
    pub estimate_labels: Vec<String>,
    pub records: Vec<StepRecord>,
    pub log_timing: bool,
}

fn push_labels(header: &mut Vec<String>, prefix: &str, n: usize) {
    header.extend((1..=n).map(|i| format!("{prefix}{i}")));
}

fn num(out: &mut String, v: f64) {
    // 17 significant digits round-trip every f64.
    let _ = write!(out, ",{v:.16e}");
}

impl ClosedLoopLog {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        if let Some(r) = self.records.first() {
            push_labels(&mut h, "x", r.x_true.len());
            push_labels(&mut h, "d", r.d_true.len());
            push_labels(&mut h, "y", r.y_meas.len());
            push_labels(&mut h, "r", r.r.len());
            push_labels(&mut h, "u", r.u.len());
            push_labels(&mut h, "du", r.du.len());
        }
        h.extend(self.estimate_labels.iter().cloned());
        h.extend(["converged", "outer_iters", "inner_iters"].map(String::from));
        if self.log_timing {
            h.push("solve_seconds".into());
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for r in &self.records {
            let mut line = format!("{:.16e}", r.t);
            for v in r
                .x_true
                .iter()
                .chain(r.d_true.iter())
                .chain(r.y_meas.iter())
                .chain(r.r.iter())
                .chain(r.u.iter())
                .chain(r.du.iter())
                .chain(r.estimate.iter())
            {
                num(&mut line, *v);
            }
            let _ = write!(
                line,
                ",{},{},{}",
                u8::from(r.status == SolveStatus::Converged),
                r.outer_iters,
                r.inner_iters
            );
            if self.log_timing {
                num(&mut line, r.solve_seconds);
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn outputs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y_meas[0]).collect()
    }

    pub fn references(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.r[0]).collect()
    }
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// A run of at least two samples with an unchanged reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldSegment {
    pub start: usize,
    pub end: usize,
    /// `|y − r|` at the last sample of the segment.
    pub final_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub samples: usize,
    /// RMS of `y − r`, skipping the first tenth of the run.
    pub rms_tracking_error: f64,
    pub max_constraint_violation: f64,
    pub violation_count: usize,
    pub mean_solve_seconds: f64,
    pub max_solve_seconds: f64,
    pub first_solve_seconds: f64,
    pub mean_warm_solve_seconds: f64,
    pub mean_outer_iters: f64,
    pub mean_inner_iters: f64,
    pub iteration_limit_count: usize,
    pub max_workspace_len: usize,
    pub hold_segments: Vec<HoldSegment>,
}

pub fn settling_samples(n: usize) -> usize {
    n.div_ceil(10)
}

fn excess(v: f64, lo: f64, hi: f64) -> f64 {
    let e = (lo - v).max(v - hi).max(0.0);
    if e <= FEASIBILITY_TOL {
        0.0
    } else {
        e
    }
}

/// Runs of at least two samples with a constant reference. The error is
/// taken `lookahead` samples before the run ends, i.e. at the last output
/// not yet shaped by inputs chosen with the next level in view.
pub fn hold_segments(log: &ClosedLoopLog, lookahead: usize) -> Vec<HoldSegment> {
    let r = log.references();
    let y = log.outputs();
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=r.len() {
        if k == r.len() || r[k] != r[start] {
            if k - start >= 2 {
                out.push(HoldSegment {
                    start,
                    end: k - 1,
                    final_error: {
                        let at = (k - 1).saturating_sub(lookahead).max(start);
                        (y[at] - r[at]).abs()
                    },
                });
            }
            start = k;
        }
    }
    out
}

/// With a trajectory preview the controller starts moving `T − 1` samples
/// before a reference change, so hold errors are read that much earlier.
pub fn compute_metrics(
    log: &ClosedLoopLog,
    mpc: &MpcConfig,
    initial_u: &DVector<f64>,
    preview: Preview,
) -> Metrics {
    let n = log.records.len();
    let skip = settling_samples(n);
    let tail: Vec<f64> = log.records[skip.min(n)..]
        .iter()
        .map(|r| (&r.y_meas - &r.r).norm_squared())
        .collect();
    let rms = if tail.is_empty() {
        0.0
    } else {
        (tail.iter().sum::<f64>() / tail.len() as f64).sqrt()
    };

    let mut worst = 0.0f64;
    let mut count = 0;
    let mut last = initial_u.clone();
    for r in &log.records {
        let mut step_worst = 0.0f64;
        for m in 0..r.u.len() {
            step_worst = step_worst
                .max(excess(r.u[m], mpc.u_min[m], mpc.u_max[m]))
                .max(excess(r.du[m], mpc.du_min[m], mpc.du_max[m]))
                .max(excess(r.u[m] - last[m], mpc.du_min[m], mpc.du_max[m]));
        }
        if step_worst > 0.0 {
            count += 1;
        }
        worst = worst.max(step_worst);
        last = r.u.clone();
    }

    let times: Vec<f64> = log.records.iter().map(|r| r.solve_seconds).collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let outer: Vec<f64> = log.records.iter().map(|r| r.outer_iters as f64).collect();
    let inner: Vec<f64> = log.records.iter().map(|r| r.inner_iters as f64).collect();

    Metrics {
        samples: n,
        rms_tracking_error: rms,
        max_constraint_violation: worst,
        violation_count: count,
        mean_solve_seconds: mean(&times),
        max_solve_seconds: times.iter().cloned().fold(0.0, f64::max),
        first_solve_seconds: times.first().copied().unwrap_or(0.0),
        mean_warm_solve_seconds: mean(times.get(1..).unwrap_or(&[])),
        mean_outer_iters: mean(&outer),
        mean_inner_iters: mean(&inner),
        iteration_limit_count: log
            .records
            .iter()
            .filter(|r| r.status == SolveStatus::IterationLimit)
            .count(),
        max_workspace_len: log
            .records
            .iter()
            .map(|r| r.workspace_len)
            .max()
            .unwrap_or(0),
        hold_segments: hold_segments(
            log,
            match preview {
                Preview::Trajectory => mpc.horizon - 1,
                Preview::Hold => 0,
            },
        ),
    }
}

impl Metrics {
    pub fn to_key_value(&self, plant: &str, method: Method, noise: bool, seed: u64) -> String {
        let errors: Vec<String> = self
            .hold_segments
            .iter()
            .map(|s| format!("{}", s.final_error))
            .collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("plant", plant.to_string());
        kv("method", method.name().to_string());
        kv("noise", noise.to_string());
        kv("seed", seed.to_string());
        kv("samples", self.samples.to_string());
        kv("rms_tracking_error", self.rms_tracking_error.to_string());
        kv(
            "max_constraint_violation",
            self.max_constraint_violation.to_string(),
        );
        kv("violation_count", self.violation_count.to_string());
        kv("mean_solve_seconds", self.mean_solve_seconds.to_string());
        kv("max_solve_seconds", self.max_solve_seconds.to_string());
        kv("first_solve_seconds", self.first_solve_seconds.to_string());
        kv(
            "mean_warm_solve_seconds",
            self.mean_warm_solve_seconds.to_string(),
        );
        kv("mean_outer_iters", self.mean_outer_iters.to_string());
        kv("mean_inner_iters", self.mean_inner_iters.to_string());
        kv(
            "iteration_limit_count",
            self.iteration_limit_count.to_string(),
        );
        kv("max_workspace_len", self.max_workspace_len.to_string());
        kv("hold_segment_final_errors", errors.join(","));
        out
    }

    pub fn write(
        &self,
        path: &Path,
        plant: &str,
        method: Method,
        noise: bool,
        seed: u64,
    ) -> Result<()> {
        write_atomic(
            path,
            self.to_key_value(plant, method, noise, seed).as_bytes(),
        )
    }
}
