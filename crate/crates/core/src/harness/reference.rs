use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{parse_number, parse_seed};
use crate::error::{Error, Result};

/// Reference generator.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSpec {
    /// A new level drawn uniformly from `[min, max)` every `period` seconds.
    RandomStep {
        period: f64,
        min: f64,
        max: f64,
        seed: u64,
    },
    /// `from` until `t_start`, linear to `to` at `t_end`, then constant.
    Ramp {
        t_start: f64,
        t_end: f64,
        from: f64,
        to: f64,
    },
    /// `low` on even periods, `high` on odd ones.
    Square { period: f64, low: f64, high: f64 },
}

/// What the controller sees of the future reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preview {
    /// The upcoming reference samples.
    Trajectory,
    /// The current setpoint repeated over the horizon.
    Hold,
}

impl ReferenceSpec {
    /// Future values of deterministic shapes are known; random steps are not.
    pub fn default_preview(&self) -> Preview {
        match self {
            Self::RandomStep { .. } => Preview::Hold,
            Self::Ramp { .. } | Self::Square { .. } => Preview::Trajectory,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::RandomStep {
                period, min, max, ..
            } => period > 0.0 && min <= max && min.is_finite() && max.is_finite(),
            Self::Ramp {
                t_start,
                t_end,
                from,
                to,
            } => t_start <= t_end && from.is_finite() && to.is_finite(),
            Self::Square { period, low, high } => {
                period > 0.0 && low.is_finite() && high.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid reference {self:?}")))
        }
    }

    pub(super) fn set(&mut self, field: &str, value: &str) -> Result<()> {
        let key = format!("reference.{field}");
        if field == "kind" {
            *self = match value {
                "random_step" => Self::RandomStep {
                    period: 20.0,
                    min: 1.0,
                    max: 3.0,
                    seed: 0,
                },
                "ramp" => Self::Ramp {
                    t_start: 0.0,
                    t_end: 0.0,
                    from: 0.0,
                    to: 0.0,
                },
                "square" => Self::Square {
                    period: 10.0,
                    low: 0.0,
                    high: 1.0,
                },
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "{key}: unknown kind `{value}`"
                    )))
                }
            };
            return Ok(());
        }
        let slot = match (self, field) {
            (Self::RandomStep { seed, .. }, "seed") => {
                *seed = parse_seed(&key, value)?;
                return Ok(());
            }
            (Self::RandomStep { period, .. }, "period")
            | (Self::Square { period, .. }, "period") => period,
            (Self::RandomStep { min, .. }, "min") => min,
            (Self::RandomStep { max, .. }, "max") => max,
            (Self::Ramp { t_start, .. }, "t_start") => t_start,
            (Self::Ramp { t_end, .. }, "t_end") => t_end,
            (Self::Ramp { from, .. }, "from") => from,
            (Self::Ramp { to, .. }, "to") => to,
            (Self::Square { low, .. }, "low") => low,
            (Self::Square { high, .. }, "high") => high,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "`{key}` does not apply to this reference kind"
                )))
            }
        };
        *slot = parse_number(&key, value)?;
        Ok(())
    }
}

/// Sampled reference, long enough to preview a full horizon past the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    values: Vec<f64>,
    preview: Preview,
}

impl Reference {
    /// `r_k`, held at its last value beyond the generated range.
    pub fn at(&self, k: usize) -> f64 {
        self.values[k.min(self.values.len() - 1)]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Targets `r_{k+1} … r_{k+T}` seen by the controller at sample `k`.
    pub fn horizon(&self, k: usize, horizon: usize) -> Vec<DVector<f64>> {
        (1..=horizon)
            .map(|i| {
                let idx = match self.preview {
                    Preview::Trajectory => k + i,
                    Preview::Hold => k,
                };
                DVector::from_element(1, self.at(idx))
            })
            .collect()
    }
}

/// Samples `spec` at `t_k = k t_s` for `k = 0 … duration/t_s + extra`.
pub fn make_reference(
    spec: &ReferenceSpec,
    duration: f64,
    t_s: f64,
    extra: usize,
    preview: Preview,
) -> Reference {
    let n = (duration / t_s + 1e-9).floor() as usize + extra + 1;
    let values = match *spec {
        ReferenceSpec::RandomStep {
            period,
            min,
            max,
            seed,
        } => {
            let per = ((period / t_s).round() as usize).max(1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(0);
            let mut out = Vec::with_capacity(n);
            let mut level = min;
            for k in 0..n {
                if k % per == 0 {
                    level = if max > min {
                        rng.gen_range(min..max)
                    } else {
                        min
                    };
                }
                out.push(level);
            }
            out
        }
        ReferenceSpec::Ramp {
            t_start,
            t_end,
            from,
            to,
        } => (0..n)
            .map(|k| {
                let t = k as f64 * t_s;
                if t <= t_start {
                    from
                } else if t >= t_end {
                    to
                } else {
                    from + (to - from) * (t - t_start) / (t_end - t_start)
                }
            })
            .collect(),
        ReferenceSpec::Square { period, low, high } => (0..n)
            .map(|k| {
                let t = k as f64 * t_s;
                let seg = (t / period + 1e-9).floor() as u64;
                if seg % 2 == 0 {
                    low
                } else {
                    high
                }
            })
            .collect(),
    };
    Reference { values, preview }
}

/// `x + amplitude · U[0,1)` per component.
pub fn inject_process_noise(
    x: &DVector<f64>,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    if amplitude == 0.0 {
        return x.clone();
    }
    x.map(|v| v + amplitude * rng.gen::<f64>())
}

/// Generator for the noise stream of a run.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}
