//! Rigid-body quadcopter with Euler-angle attitude.
//!
//! State (12): position `[px, py, pz]`, world velocity `[vx, vy, vz]`,
//! roll/pitch/yaw `[phi, theta, psi]` (ZYX convention), body rates
//! `[p, q, r]`. Control (4): total thrust along the body z axis plus body
//! torques `[tau_x, tau_y, tau_z]`.
//!
//! Hover at the origin needs `T = MASS * GRAVITY`; thrust is bounded to
//! four times that. The Euler-rate map is singular at pitch +-90 deg, which
//! the point-to-point maneuvers here stay well away from.

use crate::DVec;

pub const MASS: f64 = 1.0;
pub const GRAVITY: f64 = 9.81;
pub const INERTIA: [f64; 3] = [0.01, 0.01, 0.02];

/// Hover thrust, also the midpoint heuristic for control initialization.
pub fn hover_thrust() -> f64 {
    MASS * GRAVITY
}

pub fn dynamics(x: &DVec, u: &DVec) -> DVec {
    let (vx, vy, vz) = (x[3], x[4], x[5]);
    let (phi, theta, psi) = (x[6], x[7], x[8]);
    let (p, q, r) = (x[9], x[10], x[11]);
    let (thrust, tau_x, tau_y, tau_z) = (u[0], u[1], u[2], u[3]);

    let (sph, cph) = phi.sin_cos();
    let (sth, cth) = theta.sin_cos();
    let (sps, cps) = psi.sin_cos();

    // Body z axis expressed in world frame (ZYX Euler rotation applied to e3).
    let bz = [
        cph * sth * cps + sph * sps,
        cph * sth * sps - sph * cps,
        cph * cth,
    ];
    let acc = thrust / MASS;

    let tth = sth / cth;
    let (ix, iy, iz) = (INERTIA[0], INERTIA[1], INERTIA[2]);

    DVec::from_vec(vec![
        vx,
        vy,
        vz,
        acc * bz[0],
        acc * bz[1],
        acc * bz[2] - GRAVITY,
        p + sph * tth * q + cph * tth * r,
        cph * q - sph * r,
        (sph * q + cph * r) / cth,
        ((iy - iz) * q * r + tau_x) / ix,
        ((iz - ix) * p * r + tau_y) / iy,
        ((ix - iy) * p * q + tau_z) / iz,
    ])
}
