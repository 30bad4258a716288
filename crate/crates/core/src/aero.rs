//! Blade-element forces and moments on the propeller and the lifting
//! fuselage, in the body frame.
//!
//! Sign conventions: the rotor hub sits at `l·ŷ`, its axis is
//! `(sin δ, 0, cos δ)` and `omega_p` is the rotor speed relative to the body.
//! The rotor sees the air at the effective speed `omega_p + r·cos δ` and, from
//! the hub's circular motion, an edgewise freestream of `r·l·cos δ`.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{DesignVector, VehicleModel, ALPHA_MAX_DEG, ALPHA_MIN_DEG};

/// Which rate exponents the rotor force and drag formulas use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AeroVariant {
    /// Dimensionally consistent two-blade forms, quadratic in the rates.
    #[default]
    Quadratic,
    /// Leading terms cubic in `omega_p`, kept for audit only.
    Printed,
}

impl fmt::Display for AeroVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AeroVariant::Quadratic => "quadratic",
            AeroVariant::Printed => "printed",
        })
    }
}

impl FromStr for AeroVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quadratic" => Ok(AeroVariant::Quadratic),
            "printed" => Ok(AeroVariant::Printed),
            other => Err(format!("unknown model variant {other:?}")),
        }
    }
}

fn check_window(alpha: f64) -> Result<(), ModelError> {
    if !alpha.is_finite() {
        return Err(ModelError::NonFinite {
            field: "alpha",
            value: alpha,
        });
    }
    if !(ALPHA_MIN_DEG..=ALPHA_MAX_DEG).contains(&alpha) {
        return Err(ModelError::OutOfRange {
            field: "alpha",
            value: alpha,
            range: "[0, 10] deg",
        });
    }
    Ok(())
}

/// Linear NACA 4415 lift fit, valid for 0–10 degrees.
pub fn lift_coeff(alpha_deg: f64) -> Result<f64, ModelError> {
    check_window(alpha_deg)?;
    Ok(0.1 * alpha_deg + 0.5)
}

/// Linear NACA 4415 drag fit, valid for 0–10 degrees.
pub fn drag_coeff(alpha_deg: f64) -> Result<f64, ModelError> {
    check_window(alpha_deg)?;
    Ok(0.006 * alpha_deg + 0.04)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AeroCoefficients {
    pub c_l_p: f64,
    pub c_l_b: f64,
    pub c_d_p: f64,
    pub c_d_b: f64,
}

impl AeroCoefficients {
    pub fn for_design(x: &DesignVector) -> Result<Self, ModelError> {
        let named = |field: &'static str, r: Result<f64, ModelError>| {
            r.map_err(|e| match e {
                ModelError::OutOfRange { value, range, .. } => {
                    ModelError::OutOfRange { field, value, range }
                }
                other => other,
            })
        };
        Ok(Self {
            c_l_p: named("alpha_p", lift_coeff(x.alpha_p))?,
            c_l_b: named("alpha_B", lift_coeff(x.alpha_b))?,
            c_d_p: named("alpha_p", drag_coeff(x.alpha_p))?,
            c_d_b: named("alpha_B", drag_coeff(x.alpha_b))?,
        })
    }
}

/// Rotor speed relative to the air about its own axis.
pub fn effective_rotor_speed(v: &VehicleModel, omega_p: f64, r: f64) -> f64 {
    omega_p + r * v.design.delta.cos()
}

/// `+1` for non-negative input, `-1` otherwise.
fn direction(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Signed thrust magnitude along the rotor axis (N).
pub fn thrust_magnitude(v: &VehicleModel, omega_p: f64, r: f64) -> f64 {
    let rp = v.geometry.r_p;
    let l = v.geometry.l;
    let c = v.design.delta.cos();
    let k = v.base.rho * v.base.c_p * v.coeffs.c_l_p;
    let edgewise = rp * r * r * l * l * c * c / 2.0;
    match v.variant {
        AeroVariant::Quadratic => {
            let w = effective_rotor_speed(v, omega_p, r);
            k * (rp.powi(3) * w * w / 3.0 + edgewise)
        }
        AeroVariant::Printed => {
            k * (rp.powi(3) * omega_p.powi(3) / 3.0
                + rp.powi(3) * r * r * c * c / 3.0
                + edgewise
                + 2.0 * rp.powi(3) * r * omega_p * c / 3.0)
        }
    }
}

pub fn propeller_thrust(v: &VehicleModel, omega_p: f64, r: f64) -> Vector3<f64> {
    v.rotor_axis * thrust_magnitude(v, omega_p, r)
}

/// Moment of the rotor thrust about the centre of mass, `(l·ŷ) × f_p`.
pub fn thrust_moment(v: &VehicleModel, f_p: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(0.0, v.geometry.l, 0.0).cross(f_p)
}

/// Rolling moment from the lift asymmetry between advancing and retreating
/// blades in the edgewise freestream, about body x.
pub fn asymmetric_lift_moment(v: &VehicleModel, omega_p: f64, r: f64) -> Vector3<f64> {
    let rp3 = v.geometry.r_p.powi(3);
    let l = v.geometry.l;
    let c = v.design.delta.cos();
    let k = v.base.rho * v.base.c_p * v.coeffs.c_l_p;
    let spin = match v.variant {
        AeroVariant::Quadratic => effective_rotor_speed(v, omega_p, r),
        AeroVariant::Printed => omega_p + r,
    };
    Vector3::new(k * rp3 * r * l * c * spin / 3.0, 0.0, 0.0)
}

/// Propeller profile-drag torque.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotorDrag {
    /// Blade-element torque magnitude (N·m), sign-free in the quadratic model.
    pub magnitude: f64,
    /// Torque loading the motor along the rotor axis (N·m), signed.
    pub motor_load: f64,
    /// Drag moment on the vehicle in the body frame.
    pub moment: Vector3<f64>,
}

pub fn propeller_drag(v: &VehicleModel, omega_p: f64, r: f64) -> RotorDrag {
    let rp = v.geometry.r_p;
    let l = v.geometry.l;
    let c = v.design.delta.cos();
    let k = v.base.rho * v.base.c_p * v.coeffs.c_d_p;
    let edgewise = rp * rp * r * r * l * l * c * c / 2.0;
    let w = effective_rotor_speed(v, omega_p, r);
    let magnitude = match v.variant {
        AeroVariant::Quadratic => k * (rp.powi(4) * w * w / 4.0 + edgewise),
        AeroVariant::Printed => {
            k * (rp.powi(4) * omega_p.powi(3) / 4.0
                + rp.powi(4) * r * r * c * c / 4.0
                + edgewise
                + rp.powi(4) * r * omega_p * c / 2.0)
        }
    };
    let motor_load = direction(w) * magnitude;
    RotorDrag {
        magnitude,
        motor_load,
        moment: -motor_load * v.rotor_axis,
    }
}

pub fn propeller_drag_moment(v: &VehicleModel, omega_p: f64, r: f64) -> Vector3<f64> {
    propeller_drag(v, omega_p, r).moment
}

/// Fuselage profile drag plus hub drag, both opposing the body spin.
pub fn fuselage_drag_moment(v: &VehicleModel, r: f64) -> Vector3<f64> {
    let rb = v.geometry.r_b;
    let aero = 0.25 * v.base.rho * v.geometry.c_b * v.coeffs.c_d_b * rb.powi(4) * r * r.abs();
    Vector3::new(0.0, 0.0, -(aero + v.base.gamma * r))
}

/// Lift of the two-blade fuselage spinning at `r`, along body z.
pub fn fuselage_lift(v: &VehicleModel, r: f64) -> Vector3<f64> {
    let rb = v.geometry.r_b;
    let f = v.base.rho * v.geometry.c_b * v.coeffs.c_l_b * rb.powi(3) * r * r / 3.0;
    Vector3::new(0.0, 0.0, f)
}

/// All forces and moments on the vehicle, by source, in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyWrench {
    pub f_p: Vector3<f64>,
    pub f_b: Vector3<f64>,
    pub tau_f: Vector3<f64>,
    pub tau_p: Vector3<f64>,
    pub tau_dp: Vector3<f64>,
    pub tau_db: Vector3<f64>,
    /// Signed drag torque loading the motor.
    pub motor_load: f64,
}

impl BodyWrench {
    pub fn force(&self) -> Vector3<f64> {
        self.f_p + self.f_b
    }

    pub fn moment(&self) -> Vector3<f64> {
        self.tau_f + self.tau_p + self.tau_dp + self.tau_db
    }
}

/// Evaluates the wrench; only the z-component of `omega_b` drives the aero.
pub fn body_wrench(v: &VehicleModel, omega_p: f64, omega_b: &Vector3<f64>) -> BodyWrench {
    let r = omega_b.z;
    let f_p = propeller_thrust(v, omega_p, r);
    let drag = propeller_drag(v, omega_p, r);
    BodyWrench {
        f_p,
        f_b: fuselage_lift(v, r),
        tau_f: thrust_moment(v, &f_p),
        tau_p: asymmetric_lift_moment(v, omega_p, r),
        tau_dp: drag.moment,
        tau_db: fuselage_drag_moment(v, r),
        motor_load: drag.motor_load,
    }
}

pub fn total_external_moment(
    v: &VehicleModel,
    omega_p: f64,
    omega_b: &Vector3<f64>,
) -> Vector3<f64> {
    body_wrench(v, omega_p, omega_b).moment()
}
