//! Parametric optimal control problem definitions.
//!
//! Each [`SystemId`] names a benchmark system with fixed dimensions, cost
//! weights, control bounds, and a terminal condition; a parameter vector
//! drawn from [`SystemId::param_box`] instantiates a concrete problem
//! ([`Ocp`]) by fixing the initial state and, for the obstacle variant, a
//! spherical keep-out region.
//!
//! The continuous problem minimizes
//!
//! ```text
//! J = integral_0^tf ( w + x'Qx + u'Ru ) dt
//! ```
//!
//! over state trajectory, control trajectory, and free final time, subject
//! to dynamics, control bounds, and reaching the goal state at `t_f`. Goal
//! headings are met modulo full turns: the terminal angle may differ from
//! the goal angle by `2*pi*k`, and the winding count `k` is inherited from
//! the initial guess (see [`Ocp::winding_of`]), which is what lets distinct
//! local optima with different swing or turn topology coexist in a dataset.

mod car;
mod pendulum;
pub mod quadcopter;
mod trajectory;

pub use trajectory::Trajectory;

use crate::{DMat, DVec, Error};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// The four benchmark systems.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemId {
    #[serde(rename = "pendulum")]
    Pendulum,
    #[serde(rename = "car")]
    Car,
    #[serde(rename = "quadcopter")]
    Quadcopter,
    #[serde(rename = "quadcopter-obstacle")]
    QuadcopterObstacle,
}

impl SystemId {
    pub const ALL: [SystemId; 4] = [
        SystemId::Pendulum,
        SystemId::Car,
        SystemId::Quadcopter,
        SystemId::QuadcopterObstacle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemId::Pendulum => "pendulum",
            SystemId::Car => "car",
            SystemId::Quadcopter => "quadcopter",
            SystemId::QuadcopterObstacle => "quadcopter-obstacle",
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            SystemId::Pendulum => 2,
            SystemId::Car => 4,
            SystemId::Quadcopter | SystemId::QuadcopterObstacle => 12,
        }
    }

    pub fn control_dim(self) -> usize {
        match self {
            SystemId::Pendulum => 1,
            SystemId::Car => 2,
            SystemId::Quadcopter | SystemId::QuadcopterObstacle => 4,
        }
    }

    pub fn param_dim(self) -> usize {
        match self {
            SystemId::Pendulum => 2,
            SystemId::Car => 4,
            SystemId::Quadcopter => 3,
            SystemId::QuadcopterObstacle => 7,
        }
    }

    /// Default transcription grid size (number of control intervals).
    pub fn default_nodes(self) -> usize {
        match self {
            SystemId::Pendulum | SystemId::Car => 24,
            SystemId::Quadcopter | SystemId::QuadcopterObstacle => 19,
        }
    }

    /// Index of the heading/angle state that the terminal condition treats
    /// modulo `2*pi`, if the system has one.
    pub fn angle_index(self) -> Option<usize> {
        match self {
            SystemId::Pendulum => Some(0),
            SystemId::Car => Some(2),
            _ => None,
        }
    }

    /// Goal state the terminal constraint pins (up to angle winding).
    pub fn goal_state(self) -> DVec {
        match self {
            SystemId::Pendulum => DVec::from_vec(vec![PI, 0.0]),
            _ => DVec::zeros(self.state_dim()),
        }
    }

    pub fn control_bounds(self) -> (DVec, DVec) {
        match self {
            SystemId::Pendulum => (DVec::from_element(1, -1.0), DVec::from_element(1, 1.0)),
            SystemId::Car => (DVec::from_element(2, -1.0), DVec::from_element(2, 1.0)),
            SystemId::Quadcopter | SystemId::QuadcopterObstacle => {
                let lo = DVec::from_vec(vec![0.0, -1.0, -1.0, -1.0]);
                let hi = DVec::from_vec(vec![4.0 * quadcopter::hover_thrust(), 1.0, 1.0, 1.0]);
                (lo, hi)
            }
        }
    }

    /// Constant term of the running cost (weight on elapsed time).
    pub fn time_weight(self) -> f64 {
        match self {
            SystemId::Pendulum => 1.0,
            _ => 10.0,
        }
    }

    /// Diagonal of the quadratic state weight in the running cost.
    pub fn state_weight(self) -> DVec {
        match self {
            SystemId::Pendulum | SystemId::Car => DVec::zeros(self.state_dim()),
            SystemId::Quadcopter | SystemId::QuadcopterObstacle => DVec::from_vec(vec![
                0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.1, 0.1, 0.1, 1.0, 1.0, 1.0,
            ]),
        }
    }

    /// Diagonal of the quadratic control weight in the running cost.
    pub fn control_weight(self) -> DVec {
        DVec::from_element(self.control_dim(), 1.0)
    }

    /// Axis-aligned box the problem parameters are drawn from.
    pub fn param_box(self) -> Vec<(f64, f64)> {
        match self {
            SystemId::Pendulum => vec![(-PI, PI), (-2.0, 2.0)],
            SystemId::Car => vec![(-10.0, 10.0), (-10.0, 10.0), (-PI, PI), (-3.1, 3.1)],
            SystemId::Quadcopter => vec![(-10.0, 10.0); 3],
            SystemId::QuadcopterObstacle => {
                let mut b = vec![(-10.0, 10.0); 6];
                b.push((1.0, 5.0));
                b
            }
        }
    }

    /// Flat decision/target vector length at the default grid.
    pub fn packed_len(self) -> usize {
        Trajectory::packed_len(self.state_dim(), self.control_dim(), self.default_nodes())
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        SystemId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown system '{s}'")))
    }
}

/// Spherical keep-out region for the obstacle-avoidance variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Sphere {
    /// Signed clearance of a point: negative inside the sphere.
    pub fn margin(&self, pos: &[f64]) -> f64 {
        let dx = pos[0] - self.center[0];
        let dy = pos[1] - self.center[1];
        let dz = pos[2] - self.center[2];
        (dx * dx + dy * dy + dz * dz).sqrt() - self.radius
    }
}

/// A concrete problem instance: system, grid size, and parameter vector
/// resolved into initial state and optional obstacle.
#[derive(Clone, Debug)]
pub struct Ocp {
    pub system: SystemId,
    pub n_nodes: usize,
    pub params: DVec,
    pub x0: DVec,
    pub obstacle: Option<Sphere>,
}

impl Ocp {
    pub fn new(system: SystemId, params: &DVec) -> Result<Ocp, Error> {
        Ocp::with_nodes(system, params, system.default_nodes())
    }

    pub fn with_nodes(system: SystemId, params: &DVec, n_nodes: usize) -> Result<Ocp, Error> {
        if params.len() != system.param_dim() {
            return Err(Error::invalid(format!(
                "{system} expects {} parameters, got {}",
                system.param_dim(),
                params.len()
            )));
        }
        if n_nodes < 2 {
            return Err(Error::invalid("need at least 2 grid intervals"));
        }
        let n = system.state_dim();
        let (x0, obstacle) = match system {
            SystemId::Pendulum | SystemId::Car => (params.clone(), None),
            SystemId::Quadcopter => {
                let mut x0 = DVec::zeros(n);
                x0.rows_mut(0, 3).copy_from(&params.rows(0, 3));
                (x0, None)
            }
            SystemId::QuadcopterObstacle => {
                let mut x0 = DVec::zeros(n);
                x0.rows_mut(0, 3).copy_from(&params.rows(0, 3));
                let sphere = Sphere {
                    center: [params[3], params[4], params[5]],
                    radius: params[6],
                };
                (x0, Some(sphere))
            }
        };
        Ok(Ocp {
            system,
            n_nodes,
            params: params.clone(),
            x0,
            obstacle,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.system.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.system.control_dim()
    }

    pub fn decision_len(&self) -> usize {
        Trajectory::packed_len(self.state_dim(), self.control_dim(), self.n_nodes)
    }

    pub fn dynamics(&self, x: &DVec, u: &DVec) -> DVec {
        match self.system {
            SystemId::Pendulum => pendulum::dynamics(x, u),
            SystemId::Car => car::dynamics(x, u),
            SystemId::Quadcopter | SystemId::QuadcopterObstacle => quadcopter::dynamics(x, u),
        }
    }

    /// State and control Jacobians of the dynamics. Analytic where the
    /// algebra is small (pendulum, car); central differences with the given
    /// step otherwise.
    pub fn dynamics_jacobians(&self, x: &DVec, u: &DVec, fd_step: f64) -> (DMat, DMat) {
        match self.system {
            SystemId::Pendulum => pendulum::jacobians(x, u),
            SystemId::Car => car::jacobians(x, u),
            SystemId::Quadcopter | SystemId::QuadcopterObstacle => {
                fd_jacobians(quadcopter::dynamics, x, u, fd_step)
            }
        }
    }

    pub fn running_cost(&self, x: &DVec, u: &DVec) -> f64 {
        let q = self.system.state_weight();
        let r = self.system.control_weight();
        let mut c = self.system.time_weight();
        for i in 0..x.len() {
            c += q[i] * x[i] * x[i];
        }
        for j in 0..u.len() {
            c += r[j] * u[j] * u[j];
        }
        c
    }

    /// Gradients of [`Ocp::running_cost`] with respect to state and control.
    pub fn running_cost_grad(&self, x: &DVec, u: &DVec) -> (DVec, DVec) {
        let q = self.system.state_weight();
        let r = self.system.control_weight();
        let gx = DVec::from_fn(x.len(), |i, _| 2.0 * q[i] * x[i]);
        let gu = DVec::from_fn(u.len(), |j, _| 2.0 * r[j] * u[j]);
        (gx, gu)
    }

    /// Winding count a trajectory's final angle implies, used to pin the
    /// terminal target to the guess's homotopy class.
    pub fn winding_of(&self, traj: &Trajectory) -> i64 {
        match self.system.angle_index() {
            None => 0,
            Some(i) => {
                let goal = self.system.goal_state()[i];
                let theta = traj.states[traj.states.len() - 1][i];
                ((theta - goal) / (2.0 * PI)).round() as i64
            }
        }
    }

    /// Terminal state target for a given winding count.
    pub fn terminal_target(&self, winding: i64) -> DVec {
        let mut goal = self.system.goal_state();
        if let Some(i) = self.system.angle_index() {
            goal[i] += 2.0 * PI * winding as f64;
        }
        goal
    }

    /// Obstacle clearance at a state, if this instance has an obstacle.
    pub fn obstacle_margin(&self, x: &DVec) -> Option<f64> {
        self.obstacle
            .as_ref()
            .map(|s| s.margin(x.as_slice().get(0..3).unwrap()))
    }
}

/// Central-difference Jacobians of a dynamics function, used where analytic
/// derivatives are not worth the algebra.
pub fn fd_jacobians<F>(f: F, x: &DVec, u: &DVec, step: f64) -> (DMat, DMat)
where
    F: Fn(&DVec, &DVec) -> DVec,
{
    let n = x.len();
    let m = u.len();
    let fdim = f(x, u).len();
    let mut a = DMat::zeros(fdim, n);
    let mut b = DMat::zeros(fdim, m);
    let mut xp = x.clone();
    let mut xm = x.clone();
    for j in 0..n {
        xp[j] = x[j] + step;
        xm[j] = x[j] - step;
        let d = (f(&xp, u) - f(&xm, u)) / (2.0 * step);
        a.column_mut(j).copy_from(&d);
        xp[j] = x[j];
        xm[j] = x[j];
    }
    let mut up = u.clone();
    let mut um = u.clone();
    for j in 0..m {
        up[j] = u[j] + step;
        um[j] = u[j] - step;
        let d = (f(x, &up) - f(x, &um)) / (2.0 * step);
        b.column_mut(j).copy_from(&d);
        up[j] = u[j];
        um[j] = u[j];
    }
    (a, b)
}
