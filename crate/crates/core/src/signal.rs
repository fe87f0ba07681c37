//! Scalar input signals with closed-form energies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Force/pressure time history applied to one input channel.
///
/// All signals start at `t = 0` and are zero for `t < 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputSignal {
    /// `amplitude` on `[0, horizon]`, zero afterwards. Without a horizon the
    /// step never ends and has infinite energy.
    Step {
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<f64>,
    },
    /// Linear rise to `amplitude` over `[0, rise]`, hold until `end`, then zero.
    RampHold { amplitude: f64, rise: f64, end: f64 },
    /// `amplitude·sin(2π·frequency·t)` on `[0, duration]`.
    SineBurst {
        amplitude: f64,
        frequency: f64,
        duration: f64,
    },
    /// Piecewise-linear interpolation of a table, zero outside `[t₀, t_last]`.
    Sampled { times: Vec<f64>, values: Vec<f64> },
}

/// Discriminant of [`InputSignal`], used for source comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalKind {
    Step,
    RampHold,
    SineBurst,
    Sampled,
}

impl std::fmt::Display for SignalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SignalKind::Step => "step",
            SignalKind::RampHold => "ramp-hold",
            SignalKind::SineBurst => "sine-burst",
            SignalKind::Sampled => "sampled",
        })
    }
}

impl InputSignal {
    pub fn zero() -> Self {
        InputSignal::Step {
            amplitude: 0.0,
            horizon: Some(0.0),
        }
    }

    pub fn kind(&self) -> SignalKind {
        match self {
            InputSignal::Step { .. } => SignalKind::Step,
            InputSignal::RampHold { .. } => SignalKind::RampHold,
            InputSignal::SineBurst { .. } => SignalKind::SineBurst,
            InputSignal::Sampled { .. } => SignalKind::Sampled,
        }
    }

    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(format!("{} signal: {m}", self.kind())));
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        match self {
            InputSignal::Step { amplitude, horizon } => {
                if !amplitude.is_finite() {
                    return bad("amplitude must be finite".into());
                }
                if let Some(h) = horizon {
                    if !finite_nonneg(*h) {
                        return bad(format!("horizon must be finite and non-negative, got {h}"));
                    }
                }
            }
            InputSignal::RampHold { amplitude, rise, end } => {
                if !amplitude.is_finite() || !(rise.is_finite() && *rise > 0.0) || !(end.is_finite() && end >= rise) {
                    return bad(format!("need finite amplitude and 0 < rise <= end, got rise {rise}, end {end}"));
                }
            }
            InputSignal::SineBurst {
                amplitude,
                frequency,
                duration,
            } => {
                if !amplitude.is_finite() || !(frequency.is_finite() && *frequency > 0.0) || !finite_nonneg(*duration) {
                    return bad(format!("need finite amplitude, frequency > 0, duration >= 0, got {frequency}, {duration}"));
                }
            }
            InputSignal::Sampled { times, values } => {
                if times.len() != values.len() || times.len() < 2 {
                    return bad(format!(
                        "need matching time/value tables with at least two rows, got {} and {}",
                        times.len(),
                        values.len()
                    ));
                }
                if times.iter().chain(values).any(|x| !x.is_finite()) {
                    return bad("table contains a non-finite entry".into());
                }
                if times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("times must be non-negative and strictly increasing".into());
                }
            }
        }
        Ok(())
    }

    /// Signal value at time `t`.
    pub fn value(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            InputSignal::Step { amplitude, horizon } => match horizon {
                Some(h) if t > *h => 0.0,
                _ => *amplitude,
            },
            InputSignal::RampHold { amplitude, rise, end } => {
                if t > *end {
                    0.0
                } else if t < *rise {
                    amplitude * t / rise
                } else {
                    *amplitude
                }
            }
            InputSignal::SineBurst {
                amplitude,
                frequency,
                duration,
            } => {
                if t > *duration {
                    0.0
                } else {
                    amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin()
                }
            }
            InputSignal::Sampled { times, values } => {
                let last = times.len() - 1;
                if t < times[0] || t > times[last] {
                    return 0.0;
                }
                let k = times.partition_point(|&x| x <= t).clamp(1, last);
                let (t0, t1) = (times[k - 1], times[k]);
                let w = (t - t0) / (t1 - t0);
                values[k - 1] * (1.0 - w) + values[k] * w
            }
        }
    }

    /// Time after which the signal is identically zero (`None` if never).
    pub fn support_end(&self) -> Option<f64> {
        match self {
            InputSignal::Step { horizon, .. } => *horizon,
            InputSignal::RampHold { end, .. } => Some(*end),
            InputSignal::SineBurst { duration, .. } => Some(*duration),
            InputSignal::Sampled { times, .. } => times.last().copied(),
        }
    }

    /// `∫₀^∞ s(t)² dt`.
    ///
    /// Closed forms for the parametric kinds; the sampled kind integrates its
    /// piecewise-linear interpolant exactly.
    pub fn energy(&self) -> Result<f64> {
        self.validate()?;
        Ok(match self {
            InputSignal::Step { amplitude, horizon } => match horizon {
                Some(h) => amplitude * amplitude * h,
                None if *amplitude == 0.0 => 0.0,
                None => {
                    return Err(Error::InfiniteEnergy(format!(
                        "step of amplitude {amplitude} never ends; the output deviation bound needs ∫h² < ∞, declare a horizon"
                    )))
                }
            },
            InputSignal::RampHold { amplitude, rise, end } => amplitude * amplitude * (rise / 3.0 + end - rise),
            InputSignal::SineBurst {
                amplitude,
                frequency,
                duration,
            } => {
                let w4 = 4.0 * std::f64::consts::PI * frequency;
                amplitude * amplitude * (duration / 2.0 - (w4 * duration).sin() / (2.0 * w4))
            }
            InputSignal::Sampled { times, values } => times
                .windows(2)
                .zip(values.windows(2))
                .map(|(t, v)| (t[1] - t[0]) * (v[0] * v[0] + v[0] * v[1] + v[1] * v[1]) / 3.0)
                .sum(),
        })
    }

    /// `sup_t |s(t)|`.
    pub fn peak(&self) -> f64 {
        match self {
            InputSignal::Step { amplitude, .. } | InputSignal::RampHold { amplitude, .. } => amplitude.abs(),
            InputSignal::SineBurst {
                amplitude,
                frequency,
                duration,
            } => {
                if *duration >= 0.25 / frequency {
                    amplitude.abs()
                } else {
                    (amplitude * (2.0 * std::f64::consts::PI * frequency * duration).sin()).abs()
                }
            }
            InputSignal::Sampled { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// Amplitude-free shape, or `None` when the signal has no amplitude
    /// parameter (sampled) or the amplitude is zero.
    pub fn normalized(&self) -> Option<(f64, InputSignal)> {
        let mut shape = self.clone();
        let amp = match &mut shape {
            InputSignal::Step { amplitude, .. }
            | InputSignal::RampHold { amplitude, .. }
            | InputSignal::SineBurst { amplitude, .. } => std::mem::replace(amplitude, 1.0),
            InputSignal::Sampled { .. } => return None,
        };
        (amp != 0.0).then_some((amp, shape))
    }

    /// Scaled copy. Sampled tables are scaled pointwise.
    pub fn scaled(&self, c: f64) -> InputSignal {
        let mut out = self.clone();
        match &mut out {
            InputSignal::Step { amplitude, .. }
            | InputSignal::RampHold { amplitude, .. }
            | InputSignal::SineBurst { amplitude, .. } => *amplitude *= c,
            InputSignal::Sampled { values, .. } => values.iter_mut().for_each(|v| *v *= c),
        }
        out
    }
}

/// `sqrt(Σ_j ∫₀^∞ h_j(t)² dt)`: the L2 norm of a vector input.
///
/// Multiplying an H2 error by this factor bounds the peak output deviation
/// for zero initial conditions.
pub fn input_energy_factor(channels: &[InputSignal]) -> Result<f64> {
    let mut total = 0.0;
    for s in channels {
        total += s.energy()?;
    }
    Ok(total.sqrt())
}
