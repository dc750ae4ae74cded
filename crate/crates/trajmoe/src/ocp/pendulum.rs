//! Torque-limited pendulum swing-up.
//!
//! State `[theta, omega]` with `theta = 0` hanging down, dynamics
//!
//! ```text
//! theta_dot = omega
//! omega_dot = u - sin(theta)
//! ```
//!
//! in normalized units (unit mass, length, gravity). The torque bound
//! `|u| <= 1` is below the holding torque at horizontal, so swing-up
//! requires pumping energy through one or more swings.

use crate::{DMat, DVec};

pub fn dynamics(x: &DVec, u: &DVec) -> DVec {
    DVec::from_vec(vec![x[1], u[0] - x[0].sin()])
}

pub fn jacobians(x: &DVec, _u: &DVec) -> (DMat, DMat) {
    let mut a = DMat::zeros(2, 2);
    a[(0, 1)] = 1.0;
    a[(1, 0)] = -x[0].cos();
    let mut b = DMat::zeros(2, 1);
    b[(1, 0)] = 1.0;
    (a, b)
}
