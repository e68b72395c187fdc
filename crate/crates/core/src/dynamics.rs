//! Kinematic bicycle model and the reduced longitudinal model used by
//! lane-keeping vehicles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pose and speed of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// Longitudinal position (m).
    pub x: f64,
    /// Lateral position (m).
    pub y: f64,
    /// Speed (m/s).
    pub v: f64,
    /// Yaw angle (rad).
    pub psi: f64,
}

impl VehicleState {
    pub const fn new(x: f64, y: f64, v: f64, psi: f64) -> Self {
        Self { x, y, v, psi }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.v.is_finite() && self.psi.is_finite()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.v, self.psi]
    }

    fn check(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("non-finite vehicle state {self:?}")))
        }
    }
}

/// Acceleration along the velocity direction and front-wheel steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub a: f64,
    pub delta_f: f64,
}

impl Control {
    pub const fn new(a: f64, delta_f: f64) -> Self {
        Self { a, delta_f }
    }

    pub const fn longitudinal(a: f64) -> Self {
        Self { a, delta_f: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// CG to front axle (m).
    pub l_f: f64,
    /// CG to rear axle (m).
    pub l_r: f64,
    pub length: f64,
    pub width: f64,
    pub a_bound: f64,
    pub delta_bound: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            l_f: 1.5,
            l_r: 1.5,
            length: 5.0,
            width: 2.0,
            a_bound: 4.0,
            delta_bound: 0.5,
            v_min: 0.0,
            v_max: 32.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self, path: &str) -> Vec<crate::error::FieldError> {
        use crate::error::FieldError;
        let mut errs = Vec::new();
        for (name, value) in [
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("length", self.length),
            ("width", self.width),
            ("a_bound", self.a_bound),
            ("delta_bound", self.delta_bound),
        ] {
            if !(value.is_finite() && value > 0.0) {
                errs.push(FieldError::new(format!("{path}.{name}"), "must be finite and > 0"));
            }
        }
        if !(self.v_min.is_finite() && self.v_min >= 0.0) {
            errs.push(FieldError::new(format!("{path}.v_min"), "must be finite and >= 0"));
        }
        if !(self.v_max.is_finite() && self.v_max > self.v_min) {
            errs.push(FieldError::new(format!("{path}.v_max"), "must be finite and > v_min"));
        }
        errs
    }

    pub fn clamp_speed(&self, v: f64) -> f64 {
        v.clamp(self.v_min, self.v_max)
    }

    /// Slip angle at the CG for a given front-wheel angle.
    pub fn slip_angle(&self, delta_f: f64) -> f64 {
        (self.l_r / (self.l_r + self.l_f) * delta_f.tan()).atan()
    }

    /// Front-wheel angle producing the given slip angle.
    pub fn steering_for_slip(&self, beta: f64) -> f64 {
        ((self.l_r + self.l_f) / self.l_r * beta.tan()).atan()
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("time step must be finite and > 0, got {dt}")))
    }
}

/// One forward-Euler step of the kinematic bicycle model, with all
/// derivatives evaluated at the input state. Speed is not clamped.
pub fn step_bicycle(
    state: &VehicleState,
    control: &Control,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    state.check()?;
    check_dt(dt)?;
    if !(control.a.is_finite() && control.delta_f.is_finite()) {
        return Err(Error::Domain(format!("non-finite control {control:?}")));
    }
    let beta = params.slip_angle(control.delta_f);
    let heading = state.psi + beta;
    Ok(VehicleState {
        x: state.x + state.v * heading.cos() * dt,
        y: state.y + state.v * heading.sin() * dt,
        v: state.v + control.a * dt,
        psi: state.psi + state.v / params.l_r * beta.sin() * dt,
    })
}

/// Reduced model for lane-keeping vehicles (`psi = 0`, `delta_f = 0`):
/// position advances with the start-of-step speed, then speed is updated and
/// clamped to the vehicle's limits. `y` and `psi` are left untouched.
pub fn step_longitudinal(
    state: &VehicleState,
    a: f64,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    state.check()?;
    check_dt(dt)?;
    if !a.is_finite() {
        return Err(Error::Domain(format!("non-finite acceleration {a}")));
    }
    Ok(VehicleState {
        x: state.x + state.v * dt,
        v: params.clamp_speed(state.v + a * dt),
        ..*state
    })
}

/// Integrates the bicycle model over `duration` with a held control, using
/// Euler sub-steps no longer than `max_substep`.
pub fn propagate(
    state: &VehicleState,
    control: &Control,
    params: &VehicleParams,
    duration: f64,
    max_substep: f64,
) -> Result<VehicleState> {
    check_dt(duration)?;
    check_dt(max_substep)?;
    let n = (duration / max_substep).ceil().max(1.0) as usize;
    let h = duration / n as f64;
    let mut s = *state;
    for _ in 0..n {
        s = step_bicycle(&s, control, params, h)?;
    }
    Ok(s)
}
