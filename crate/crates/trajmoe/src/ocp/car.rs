//! Kinematic ground vehicle steered by curvature and acceleration.
//!
//! State `[x, y, theta, v]` where `theta` is heading measured from the +y
//! axis, dynamics
//!
//! ```text
//! x_dot     = v * sin(theta)
//! y_dot     = v * cos(theta)
//! theta_dot = u_theta * v
//! v_dot     = u_v
//! ```
//!
//! Turn rate scales with speed (fixed-curvature steering), so the vehicle
//! cannot turn in place and parking maneuvers need forward/backward arcs.

use crate::{DMat, DVec};

pub fn dynamics(x: &DVec, u: &DVec) -> DVec {
    let (theta, v) = (x[2], x[3]);
    DVec::from_vec(vec![v * theta.sin(), v * theta.cos(), u[0] * v, u[1]])
}

pub fn jacobians(x: &DVec, u: &DVec) -> (DMat, DMat) {
    let (theta, v) = (x[2], x[3]);
    let mut a = DMat::zeros(4, 4);
    a[(0, 2)] = v * theta.cos();
    a[(0, 3)] = theta.sin();
    a[(1, 2)] = -v * theta.sin();
    a[(1, 3)] = theta.cos();
    a[(2, 3)] = u[0];
    let mut b = DMat::zeros(4, 2);
    b[(2, 0)] = v;
    b[(3, 1)] = 1.0;
    (a, b)
}
