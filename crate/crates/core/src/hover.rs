//! Hover equilibrium as a square nonlinear system, solved by damped Newton.
//!
//! A spinner hovers by rotating at constant rate about a fixed vertical axis
//! `n̄`. The unknowns are motor current and voltage, rotor speed and the three
//! body rates. The axis itself is eliminated: `n̄ = ±ω̄_B/|ω̄_B|`, with the sign
//! picked so that `n̄_z > 0`. The six residual rows are
//!
//! 1. rotor torque balance, `K_τ i − τ_dp`,
//! 2. steady motor circuit, `V − R_m i − K_v ω_p`,
//! 3. to 5. steady rotational equation, `ω × h − τ_ext`,
//! 6. weight balance along the axis, `|(f_p + f_B)·n̄| − m g`.
//!
//! Torque rows are divided by `K_τ · 1 A`, the weight row by `m g` and the
//! voltage row by 1 V.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::aero::{body_wrench, fuselage_drag_moment, fuselage_lift};
use crate::dynamics::{gyroscopic_momentum, FullState};
use crate::error::HoverError;
use crate::model::VehicleModel;

type Vector6 = SVector<f64, 6>;
type Matrix6 = SMatrix<f64, 6, 6>;

/// The six solved unknowns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoverUnknowns {
    pub current: f64,
    pub v_m: f64,
    pub omega_p: f64,
    pub omega_b: Vector3<f64>,
}

impl HoverUnknowns {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.current,
            self.v_m,
            self.omega_p,
            self.omega_b.x,
            self.omega_b.y,
            self.omega_b.z,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            current: a[0],
            v_m: a[1],
            omega_p: a[2],
            omega_b: Vector3::new(a[3], a[4], a[5]),
        }
    }

    fn to_vector(self) -> Vector6 {
        Vector6::from(self.to_array())
    }

    fn from_vector(v: &Vector6) -> Self {
        Self::from_array([v[0], v[1], v[2], v[3], v[4], v[5]])
    }
}

/// A converged hover equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoverState {
    pub current: f64,
    pub v_m: f64,
    pub omega_p: f64,
    pub omega_b: Vector3<f64>,
    /// Unit spin axis in the body frame, `n_z > 0`.
    pub n_bar: Vector3<f64>,
    /// Electrical power over weight (W/N).
    pub p_s: f64,
    /// Scaled residual norm at the returned point.
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Flat JSON record of a hover state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoverRecord {
    pub i: f64,
    #[serde(rename = "V_m")]
    pub v_m: f64,
    pub omega_p: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub n_x: f64,
    pub n_y: f64,
    pub n_z: f64,
    #[serde(rename = "P_s")]
    pub p_s: f64,
    pub residual_norm: f64,
}

impl From<&HoverState> for HoverRecord {
    fn from(h: &HoverState) -> Self {
        Self {
            i: h.current,
            v_m: h.v_m,
            omega_p: h.omega_p,
            p: h.omega_b.x,
            q: h.omega_b.y,
            r: h.omega_b.z,
            n_x: h.n_bar.x,
            n_y: h.n_bar.y,
            n_z: h.n_bar.z,
            p_s: h.p_s,
            residual_norm: h.residual_norm,
        }
    }
}

impl HoverRecord {
    pub fn to_state(&self) -> HoverState {
        HoverState {
            current: self.i,
            v_m: self.v_m,
            omega_p: self.omega_p,
            omega_b: Vector3::new(self.p, self.q, self.r),
            n_bar: Vector3::new(self.n_x, self.n_y, self.n_z),
            p_s: self.p_s,
            residual_norm: self.residual_norm,
            iterations: 0,
        }
    }
}

impl HoverState {
    pub fn unknowns(&self) -> HoverUnknowns {
        HoverUnknowns {
            current: self.current,
            v_m: self.v_m,
            omega_p: self.omega_p,
            omega_b: self.omega_b,
        }
    }

    pub fn power(&self) -> f64 {
        self.v_m * self.current
    }

    pub fn to_record(&self) -> HoverRecord {
        HoverRecord::from(self)
    }

    /// Simulation start state at this equilibrium, with the spin axis mapped
    /// to inertial vertical.
    pub fn to_full_state(&self) -> FullState {
        let n = self.n_bar.normalize();
        // rows of the body-to-inertial matrix are the inertial axes in body
        // coordinates; the third one is the spin axis
        let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = (helper - n * n.dot(&helper)).normalize();
        let e2 = n.cross(&e1);
        FullState {
            omega_b: self.omega_b,
            omega_p: self.omega_p,
            current: self.current,
            spin_axis: n,
            attitude: Matrix3::from_rows(&[e1.transpose(), e2.transpose(), n.transpose()]),
            ..FullState::default()
        }
    }
}

/// `P_m / W`.
pub fn specific_power(hover: &HoverState, total_weight: f64) -> f64 {
    hover.power() / total_weight
}

/// Unit spin axis parallel to `omega_b` with positive z-component.
pub fn spin_axis(omega_b: &Vector3<f64>) -> Result<Vector3<f64>, HoverError> {
    let norm = omega_b.norm();
    if norm == 0.0 {
        return Err(HoverError::AxisUndefined);
    }
    if !norm.is_finite() {
        return Err(HoverError::NonFinite);
    }
    if omega_b.x == 0.0 && omega_b.y == 0.0 {
        return Ok(Vector3::z());
    }
    let sign = if omega_b.z >= 0.0 { 1.0 } else { -1.0 };
    Ok(omega_b * (sign / norm))
}

/// Scaled hover residual.
pub fn hover_residual(v: &VehicleModel, u: &HoverUnknowns) -> Result<[f64; 6], HoverError> {
    residual(v, u).map(|r| [r[0], r[1], r[2], r[3], r[4], r[5]])
}

fn residual(v: &VehicleModel, u: &HoverUnknowns) -> Result<Vector6, HoverError> {
    let b = &v.base;
    let n = spin_axis(&u.omega_b)?;
    let wrench = body_wrench(v, u.omega_p, &u.omega_b);
    let torque_scale = b.k_tau_m;
    let weight = v.weight();

    let h = gyroscopic_momentum(v, u.omega_p, &u.omega_b);
    let rot = (u.omega_b.cross(&h) - wrench.moment()) / torque_scale;
    let res = Vector6::new(
        (b.k_tau_m * u.current - wrench.motor_load) / torque_scale,
        u.v_m - b.r_m * u.current - b.k_v * u.omega_p,
        rot.x,
        rot.y,
        rot.z,
        (wrench.force().dot(&n).abs() - weight) / weight,
    );
    if res.iter().any(|x| !x.is_finite()) {
        return Err(HoverError::NonFinite);
    }
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative finite-difference step.
    pub rel_step: f64,
    /// Absolute floor on the finite-difference step.
    pub abs_step: f64,
    pub min_damping: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 100,
            rel_step: 1e-6,
            abs_step: 1e-8,
            min_damping: 2f64.powi(-20),
        }
    }
}

/// Central-difference Jacobian. Central differences keep the Jacobian
/// exactly block-diagonal when the off-axis rows decouple.
fn jacobian(
    v: &VehicleModel,
    x: &Vector6,
    settings: &SolverSettings,
) -> Result<Matrix6, HoverError> {
    let mut jac = Matrix6::zeros();
    for j in 0..6 {
        let h = (settings.rel_step * x[j].abs()).max(settings.abs_step);
        let mut plus = *x;
        let mut minus = *x;
        plus[j] += h;
        minus[j] -= h;
        let fp = residual(v, &HoverUnknowns::from_vector(&plus))?;
        let fm = residual(v, &HoverUnknowns::from_vector(&minus))?;
        jac.set_column(j, &((fp - fm) / (plus[j] - minus[j])));
    }
    Ok(jac)
}

pub fn solve_hover(v: &VehicleModel, guess: &HoverUnknowns) -> Result<HoverState, HoverError> {
    solve_hover_with(v, guess, &SolverSettings::default())
}

pub fn solve_hover_with(
    v: &VehicleModel,
    guess: &HoverUnknowns,
    settings: &SolverSettings,
) -> Result<HoverState, HoverError> {
    if guess.to_array().iter().any(|x| !x.is_finite()) {
        return Err(HoverError::NonFinite);
    }
    let mut x = guess.to_vector();
    let mut f = residual(v, guess)?;
    let mut norm = f.norm();

    for iteration in 0..=settings.max_iterations {
        if norm < settings.tolerance {
            return finish(v, &x, norm, iteration);
        }
        if iteration == settings.max_iterations {
            break;
        }
        let jac = jacobian(v, &x, settings)?;
        let lu = jac.lu();
        let u = lu.u();
        let diag = u.diagonal().map(f64::abs);
        let (dmin, dmax) = (diag.min(), diag.max());
        if !(dmin > 1e-14 * dmax) {
            return Err(HoverError::SingularJacobian { iteration });
        }
        let step = lu
            .solve(&(-f))
            .ok_or(HoverError::SingularJacobian { iteration })?;

        let mut t = 1.0;
        let mut accepted = None;
        while t >= settings.min_damping {
            let trial = x + step * t;
            // a trial through ω_B = 0 or into overflow is just a bad step
            if let Ok(ft) = residual(v, &HoverUnknowns::from_vector(&trial)) {
                let nt = ft.norm();
                if nt < norm {
                    accepted = Some((trial, ft, nt));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((xn, fnew, nn)) => {
                x = xn;
                f = fnew;
                norm = nn;
            }
            None => {
                return Err(HoverError::NonConvergence {
                    iterations: iteration + 1,
                    residual: norm,
                })
            }
        }
    }
    Err(HoverError::NonConvergence {
        iterations: settings.max_iterations,
        residual: norm,
    })
}

fn finish(v: &VehicleModel, x: &Vector6, norm: f64, iterations: usize) -> Result<HoverState, HoverError> {
    let u = HoverUnknowns::from_vector(x);
    v.design
        .validate()
        .map_err(|e| HoverError::Infeasible(e.to_string()))?;
    let n_bar = spin_axis(&u.omega_b)?;
    Ok(HoverState {
        current: u.current,
        v_m: u.v_m,
        omega_p: u.omega_p,
        omega_b: u.omega_b,
        n_bar,
        p_s: u.v_m * u.current / v.weight(),
        residual_norm: norm,
        iterations,
    })
}

/// Reduced axisymmetric balance used to seed Newton: no precession, thrust
/// carrying whatever weight the fuselage does not, and the yaw torque
/// (thrust offset, rotor reaction, fuselage and hub drag) summed to zero.
/// Returns `(effective rotor speed, yaw-torque residual)` at body rate `r`.
fn reduced_yaw_balance(v: &VehicleModel, r: f64, rotor_sign: f64) -> (f64, f64) {
    let b = &v.base;
    let rp = v.geometry.r_p;
    let l = v.geometry.l;
    let (s, c) = v.design.delta.sin_cos();
    let k_l = b.rho * b.c_p * v.coeffs.c_l_p;
    let k_d = b.rho * b.c_p * v.coeffs.c_d_p;

    let thrust = (v.weight() - fuselage_lift(v, r).z).max(0.0) / c.abs().max(1e-3);
    let edgewise = r * l * c;
    let spin_sq = (thrust / k_l - rp * edgewise * edgewise / 2.0) * 3.0 / rp.powi(3);
    let spin = rotor_sign * spin_sq.max(0.0).sqrt();
    let drag = k_d * (rp.powi(4) * spin * spin / 4.0 + rp * rp * edgewise * edgewise / 2.0);
    let yaw = -l * thrust * s - rotor_sign * drag * c + fuselage_drag_moment(v, r).z;
    (spin, yaw)
}

/// Starting point for Newton: the isolated-rotor hover (rotor speed from
/// thrust = weight, body rate from the yaw-torque balance), extended with the
/// fuselage lift and the yaw torque of an offset, tilted rotor.
pub fn default_guess(v: &VehicleModel) -> HoverUnknowns {
    let rates: Vec<f64> = (-40..=100).map(|k| 10f64.powf(k as f64 / 20.0)).collect();

    for (r_sign, rotor_sign) in [(-1.0, 1.0), (-1.0, -1.0), (1.0, 1.0), (1.0, -1.0)] {
        let yaw = |mag: f64| reduced_yaw_balance(v, r_sign * mag, rotor_sign).1;
        let bracket = rates
            .windows(2)
            .find(|w| yaw(w[0]) * yaw(w[1]) <= 0.0);
        if let Some(w) = bracket {
            let (mut lo, mut hi) = (w[0], w[1]);
            let f_lo = yaw(lo);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if (yaw(mid) <= 0.0) == (f_lo <= 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let r = r_sign * 0.5 * (lo + hi);
            let (spin, _) = reduced_yaw_balance(v, r, rotor_sign);
            return seed(v, spin, r);
        }
    }
    // no yaw balance on any branch: spin slowly and let Newton sort it out
    let r = -10.0;
    let (spin, _) = reduced_yaw_balance(v, r, 1.0);
    seed(v, spin.max(1.0), r)
}

fn seed(v: &VehicleModel, spin: f64, r: f64) -> HoverUnknowns {
    let b = &v.base;
    let omega_p = spin - r * v.design.delta.cos();
    let load = body_wrench(v, omega_p, &Vector3::new(0.0, 0.0, r)).motor_load;
    let current = load / b.k_tau_m;
    HoverUnknowns {
        current,
        v_m: b.r_m * current + b.k_v * omega_p,
        omega_p,
        omega_b: Vector3::new(0.0, 0.0, r),
    }
}
