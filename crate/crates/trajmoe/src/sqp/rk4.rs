//! Classic fourth-order Runge-Kutta step with sensitivities.
//!
//! The transcription needs not just the step map `Phi(x, u, h)` but its
//! Jacobians with respect to `x`, `u`, and the step length `h` (the final
//! time is a decision variable). Those are propagated exactly through the
//! four stages by the chain rule, so derivative quality is limited only by
//! the quality of the stage Jacobians `A = df/dx`, `B = df/du`.

use crate::{DMat, DVec};

/// One RK4 step of `x_dot = f(x, u)` with constant `u` over the step.
pub fn rk4_step<F>(f: F, x: &DVec, u: &DVec, h: f64) -> DVec
where
    F: Fn(&DVec, &DVec) -> DVec,
{
    let k1 = f(x, u);
    let k2 = f(&(x + &k1 * (h / 2.0)), u);
    let k3 = f(&(x + &k2 * (h / 2.0)), u);
    let k4 = f(&(x + &k3 * h), u);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Step map value plus Jacobians `(x_next, d/dx, d/du, d/dh)`.
pub struct Rk4Sensitivity {
    pub x_next: DVec,
    pub dx: DMat,
    pub du: DMat,
    pub dh: DVec,
}

pub fn rk4_step_with_sensitivity<F, J>(f: F, jac: J, x: &DVec, u: &DVec, h: f64) -> Rk4Sensitivity
where
    F: Fn(&DVec, &DVec) -> DVec,
    J: Fn(&DVec, &DVec) -> (DMat, DMat),
{
    let n = x.len();
    let eye = DMat::identity(n, n);

    let k1 = f(x, u);
    let (a1, b1) = jac(x, u);

    let x2 = x + &k1 * (h / 2.0);
    let k2 = f(&x2, u);
    let (a2, b2) = jac(&x2, u);

    let x3 = x + &k2 * (h / 2.0);
    let k3 = f(&x3, u);
    let (a3, b3) = jac(&x3, u);

    let x4 = x + &k3 * h;
    let k4 = f(&x4, u);
    let (a4, b4) = jac(&x4, u);

    // Stage sensitivities w.r.t. x.
    let dk1_dx = a1.clone();
    let dk2_dx = &a2 * (&eye + &dk1_dx * (h / 2.0));
    let dk3_dx = &a3 * (&eye + &dk2_dx * (h / 2.0));
    let dk4_dx = &a4 * (&eye + &dk3_dx * h);
    let dx = &eye + (dk1_dx + &dk2_dx * 2.0 + &dk3_dx * 2.0 + &dk4_dx) * (h / 6.0);

    // Stage sensitivities w.r.t. u (u enters every stage directly).
    let dk1_du = b1;
    let dk2_du = &a2 * (&dk1_du * (h / 2.0)) + b2;
    let dk3_du = &a3 * (&dk2_du * (h / 2.0)) + b3;
    let dk4_du = &a4 * (&dk3_du * h) + b4;
    let du = (dk1_du + &dk2_du * 2.0 + &dk3_du * 2.0 + &dk4_du) * (h / 6.0);

    // Stage sensitivities w.r.t. h. dk1/dh = 0.
    let dk2_dh = &a2 * (&k1 * 0.5);
    let dk3_dh = &a3 * (&k2 * 0.5 + &dk2_dh * (h / 2.0));
    let dk4_dh = &a4 * (&k3 + &dk3_dh * h);
    let sum_k = &k1 + &k2 * 2.0 + &k3 * 2.0 + &k4;
    let sum_dk = dk2_dh * 2.0 + dk3_dh * 2.0 + dk4_dh;
    let dh = &sum_k / 6.0 + sum_dk * (h / 6.0);

    Rk4Sensitivity {
        x_next: x + sum_k * (h / 6.0),
        dx,
        du,
        dh,
    }
}
