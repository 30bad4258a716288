mod support;

use monospinner::dynamics::{
    integrate, translational_accel, DynamicsOptions, FullState, IntegrationSettings,
    VoltageSchedule,
};
use monospinner::{default_guess, solve_hover, DesignVector, MassModel};
use nalgebra::{Matrix3, Vector3};
use support::{config1, config1_design, vehicle};

fn no_aero() -> DynamicsOptions {
    DynamicsOptions {
        aerodynamics: false,
        rotor_coupling: false,
    }
}

fn asymmetric_masses() -> MassModel {
    // electronics cylinder taller than wide: distinct axial and diametral moments
    MassModel {
        m_e: 0.1,
        m_p: 0.01,
        m_b: 0.05,
        electronics_radius: 0.01,
        electronics_height: 0.08,
    }
}

#[test]
fn torque_free_principal_spin_is_constant() {
    let (base, _) = config1();
    let v = vehicle(&base, &asymmetric_masses(), &config1_design());
    let s0 = FullState {
        omega_b: Vector3::new(0.0, 0.0, -100.0),
        ..FullState::default()
    };
    let settings = IntegrationSettings {
        options: no_aero(),
        sample_every: 1000,
        ..IntegrationSettings::new(1e-4, 1.0)
    };
    let traj = integrate(&v, &s0, &VoltageSchedule::constant(0.0), &settings).unwrap();
    for s in &traj.samples {
        assert!((s.state.omega_b - s0.omega_b).norm() <= 1e-10 * 100.0);
    }
}

#[test]
fn angular_momentum_conserved_without_torque() {
    let (base, _) = config1();
    let v = vehicle(&base, &asymmetric_masses(), &config1_design());
    let s0 = FullState {
        omega_b: Vector3::new(3.0, -2.0, -40.0),
        ..FullState::default()
    };
    let settings = IntegrationSettings {
        options: no_aero(),
        sample_every: 100,
        ..IntegrationSettings::new(1e-4, 2.0)
    };
    let traj = integrate(&v, &s0, &VoltageSchedule::constant(0.0), &settings).unwrap();
    let momentum = |s: &FullState| s.attitude * (v.inertia.total * s.omega_b);
    let l0 = momentum(&s0);
    for s in &traj.samples {
        let l = momentum(&s.state);
        assert!((l - l0).norm() <= 1e-6 * l0.norm(), "{}", (l - l0).norm() / l0.norm());
    }
}

#[test]
fn spin_axis_stays_unit_over_long_runs() {
    let (base, masses) = support::config2();
    let v = vehicle(&base, &masses, &DesignVector::new(10.0, 10.0, 1.0, 5.0, 0.1, 1.0));
    let s0 = FullState {
        omega_b: Vector3::new(0.5, -0.3, -35.0),
        omega_p: 300.0,
        current: 0.2,
        spin_axis: Vector3::new(0.01, 0.02, 1.0).normalize(),
        ..FullState::default()
    };
    let settings = IntegrationSettings {
        sample_every: 500,
        ..IntegrationSettings::new(1e-4, 10.0)
    };
    let traj = integrate(&v, &s0, &VoltageSchedule::constant(6.0), &settings).unwrap();
    assert_eq!(traj.samples.last().unwrap().t, 10.0);
    for s in &traj.samples {
        assert!((s.state.spin_axis.norm() - 1.0).abs() < 1e-6);
        let r = s.state.attitude;
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-9);
    }
}

/// Final state at `t_end` with step `dt`, as a flat vector of the smooth
/// quantities.
fn final_state(dt: f64) -> Vec<f64> {
    let (base, masses) = support::config2();
    let v = vehicle(&base, &masses, &DesignVector::new(10.0, 10.0, 1.0, 5.0, 0.1, 0.8));
    let s0 = FullState {
        omega_b: Vector3::new(2.0, -1.0, -35.0),
        omega_p: 350.0,
        current: 0.25,
        ..FullState::default()
    };
    let traj = integrate(&v, &s0, &VoltageSchedule::constant(7.0), &IntegrationSettings::new(dt, 0.2)).unwrap();
    let s = traj.last().unwrap().state;
    let mut out = vec![s.omega_b.x, s.omega_b.y, s.omega_b.z, s.omega_p, s.current];
    out.extend(s.spin_axis.iter());
    out.extend(s.velocity.iter());
    out
}

#[test]
fn rk4_self_convergence_order() {
    let a = final_state(4e-4);
    let b = final_state(2e-4);
    let c = final_state(1e-4);
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let order = (dist(&a, &b) / dist(&b, &c)).log2();
    assert!(order >= 3.7, "observed order {order}");
}

#[test]
fn hover_persists_for_ten_seconds() {
    let (base, masses) = config1();
    let v = vehicle(&base, &masses, &config1_design());
    let h = solve_hover(&v, &default_guess(&v)).unwrap();
    let settings = IntegrationSettings {
        sample_every: 100,
        ..IntegrationSettings::new(1e-4, 10.0)
    };
    let traj = integrate(&v, &h.to_full_state(), &VoltageSchedule::constant(h.v_m), &settings).unwrap();
    assert!(traj.max_relative_drift_r(h.omega_b.z) < 0.01);
    // vertical force balance: no climb or sink to speak of
    let end = traj.last().unwrap().state;
    assert!(end.velocity.norm() < 1e-3, "{}", end.velocity);
}

#[test]
fn doubled_thrust_climbs_at_one_g() {
    let (base, masses) = config1();
    let v = vehicle(&base, &masses, &DesignVector::new(10.0, 10.0, 0.0, 0.0, 0.0, 0.0));
    // rotor speed for thrust = 2 m g with the body not spinning
    let k = base.rho * base.c_p * v.coeffs.c_l_p;
    let omega_p = (6.0 * v.weight() / (k * base.r_p.powi(3))).sqrt();
    let s = FullState {
        omega_p,
        ..FullState::default()
    };
    let a = translational_accel(&v, &s).unwrap();
    assert!((a - Vector3::new(0.0, 0.0, base.g)).norm() < 1e-12);
}
