use serde::Serialize;

use super::scenario::TrajectoryLog;
use crate::error::{Result, WristError};

/// RMS posture error (rad) and elastic torque (N·m) over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmsReport {
    pub t_start: f64,
    pub samples: usize,
    /// Both posture components stacked.
    pub rms_error: f64,
    pub rms_error_axes: [f64; 2],
    /// All three legs stacked.
    pub rms_torque: f64,
    pub rms_torque_legs: [f64; 3],
}

/// Batch RMS over samples with `t ≥ t_start`.
pub fn rms_metrics(log: &TrajectoryLog, t_start: f64) -> Result<RmsReport> {
    let window: Vec<_> = log.samples.iter().filter(|s| s.t >= t_start).collect();
    if window.is_empty() {
        return Err(WristError::EmptyWindow { t_start });
    }
    let n = window.len() as f64;
    let mean_sq = |f: &dyn Fn(usize) -> f64| -> f64 {
        (0..window.len()).map(f).map(|v| v * v).sum::<f64>() / n
    };
    let ex = mean_sq(&|i| window[i].error()[0]);
    let ez = mean_sq(&|i| window[i].error()[1]);
    let tl: [f64; 3] = std::array::from_fn(|leg| mean_sq(&|i| window[i].tau_a[leg]));
    Ok(RmsReport {
        t_start,
        samples: window.len(),
        rms_error: ((ex + ez) / 2.0).sqrt(),
        rms_error_axes: [ex.sqrt(), ez.sqrt()],
        rms_torque: (tl.iter().sum::<f64>() / 3.0).sqrt(),
        rms_torque_legs: tl.map(f64::sqrt),
    })
}

/// Compensated running sum of squares.
#[derive(Debug, Clone, Copy, Default)]
struct SquareSum {
    sum: f64,
    carry: f64,
}

impl SquareSum {
    fn push(&mut self, x: f64) {
        let v = x * x;
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Single-pass RMS accumulator, fed sample by sample.
#[derive(Debug, Clone, Default)]
pub struct RmsAccumulator {
    count: usize,
    error: [SquareSum; 2],
    torque: [SquareSum; 3],
}

impl RmsAccumulator {
    pub fn push(&mut self, error: [f64; 2], torque: [f64; 3]) {
        self.count += 1;
        for (acc, e) in self.error.iter_mut().zip(error) {
            acc.push(e);
        }
        for (acc, t) in self.torque.iter_mut().zip(torque) {
            acc.push(t);
        }
    }

    pub fn finish(&self, t_start: f64) -> Result<RmsReport> {
        if self.count == 0 {
            return Err(WristError::EmptyWindow { t_start });
        }
        let n = self.count as f64;
        let e = self.error.map(|s| s.value() / n);
        let t = self.torque.map(|s| s.value() / n);
        Ok(RmsReport {
            t_start,
            samples: self.count,
            rms_error: ((e[0] + e[1]) / 2.0).sqrt(),
            rms_error_axes: e.map(f64::sqrt),
            rms_torque: ((t[0] + t[1] + t[2]) / 3.0).sqrt(),
            rms_torque_legs: t.map(f64::sqrt),
        })
    }
}

/// The same report computed by [`RmsAccumulator`].
pub fn rms_streaming(log: &TrajectoryLog, t_start: f64) -> Result<RmsReport> {
    let mut acc = RmsAccumulator::default();
    for s in log.samples.iter().filter(|s| s.t >= t_start) {
        acc.push(s.error(), s.tau_a);
    }
    acc.finish(t_start)
}
