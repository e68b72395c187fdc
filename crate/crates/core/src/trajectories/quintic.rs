//! Fifth-order polynomial boundary-value segments for lane changes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position, velocity and acceleration on both axes at one end of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Boundary {
    pub x: f64,
    pub vx: f64,
    pub ax: f64,
    pub y: f64,
    pub vy: f64,
    pub ay: f64,
}

impl Boundary {
    pub fn is_finite(&self) -> bool {
        [self.x, self.vx, self.ax, self.y, self.vy, self.ay]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// `x(t) = sum ax[i] t^i`, `y(t) = sum ay[i] t^i` for `t` in `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuinticSegment {
    pub ax: [f64; 6],
    pub ay: [f64; 6],
    pub duration: f64,
}

fn solve_axis(p0: f64, v0: f64, a0: f64, p1: f64, v1: f64, a1: f64, t: f64) -> [f64; 6] {
    // The first three coefficients follow from the initial conditions; the
    // remaining 3x3 system has a closed-form inverse.
    let c0 = p0;
    let c1 = v0;
    let c2 = 0.5 * a0;
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let dp = p1 - (c0 + c1 * t + c2 * t2);
    let dv = v1 - (c1 + 2.0 * c2 * t);
    let da = a1 - 2.0 * c2;
    let c3 = (10.0 * dp - 4.0 * dv * t + 0.5 * da * t2) / t3;
    let c4 = (-15.0 * dp + 7.0 * dv * t - da * t2) / t4;
    let c5 = (6.0 * dp - 3.0 * dv * t + 0.5 * da * t2) / t5;
    [c0, c1, c2, c3, c4, c5]
}

fn eval_poly(c: &[f64; 6], t: f64) -> (f64, f64, f64) {
    let p = ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0];
    let v = (((5.0 * c[5] * t + 4.0 * c[4]) * t + 3.0 * c[3]) * t + 2.0 * c[2]) * t + c[1];
    let a = ((20.0 * c[5] * t + 12.0 * c[4]) * t + 6.0 * c[3]) * t + 2.0 * c[2];
    (p, v, a)
}

/// Solves the two independent boundary-value problems for `x` and `y`.
pub fn solve_quintic(ini: &Boundary, term: &Boundary, duration: f64) -> Result<QuinticSegment> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::Domain(format!(
            "quintic duration must be finite and > 0, got {duration}"
        )));
    }
    if !(ini.is_finite() && term.is_finite()) {
        return Err(Error::Domain("non-finite quintic boundary".into()));
    }
    Ok(QuinticSegment {
        ax: solve_axis(ini.x, ini.vx, ini.ax, term.x, term.vx, term.ax, duration),
        ay: solve_axis(ini.y, ini.vy, ini.ay, term.y, term.vy, term.ay, duration),
        duration,
    })
}

impl QuinticSegment {
    /// Evaluates position, velocity and acceleration on both axes at local
    /// time `t` (not clamped to the segment's range).
    pub fn eval(&self, t: f64) -> Boundary {
        let (x, vx, ax) = eval_poly(&self.ax, t);
        let (y, vy, ay) = eval_poly(&self.ay, t);
        Boundary { x, vx, ax, y, vy, ay }
    }

    /// Vehicle state on the segment: speed is the path speed, yaw the course
    /// angle.
    pub fn state_at(&self, t: f64) -> crate::dynamics::VehicleState {
        let b = self.eval(t);
        crate::dynamics::VehicleState {
            x: b.x,
            y: b.y,
            v: b.vx.hypot(b.vy),
            psi: b.vy.atan2(b.vx),
        }
    }

    /// The same curve re-based so that local time zero is `t0`.
    pub fn shifted(&self, t0: f64) -> Result<QuinticSegment> {
        let ini = self.eval(t0);
        let term = self.eval(self.duration);
        solve_quintic(&ini, &term, self.duration - t0)
    }
}
