//! Direct transcription of an [`Ocp`] into a dense nonlinear program.
//!
//! Decision vector `z = [t_f, x_0..x_N, u_0..u_{N-1}]` of length
//! `1 + n(N+1) + mN`. The step is `h = t_f / N`, so the final time enters
//! every defect row through the integrator's step sensitivity.
//!
//! Equality rows, in order: initial state pin (`n`), one defect block
//! `x_{k+1} - Phi(x_k, u_k, h)` per interval (`nN`), terminal pin to the
//! winding-adjusted goal (`n`). Inequality rows (all `>= 0`): control
//! bounds interleaved low/high per entry, the two final-time bounds, then
//! one obstacle clearance row per node when the instance has an obstacle.
//!
//! The objective is the rectangle rule `sum_k L(x_k, u_k) * h`; its exact
//! gradient and the exact defect Jacobians (chain rule through the RK4
//! stages) are what give the outer SQP loop its precision.

use super::rk4::{rk4_step, rk4_step_with_sensitivity};
use crate::ocp::Ocp;
use crate::{DMat, DVec};

/// Roll/pitch box that keeps iterates away from the Euler-rate pole at
/// pitch +-90 deg (about 74 deg, far above what the maneuvers here use).
const ATTITUDE_LIMIT: f64 = 1.3;

pub struct TranscribedNlp<'a> {
    pub ocp: &'a Ocp,
    pub winding: i64,
    pub fd_step: f64,
    pub tf_bounds: (f64, f64),
    terminal: DVec,
}

/// One full evaluation at a point: objective, gradient, constraint values
/// and Jacobians, in buffers reused across solver iterations.
pub struct NlpEval {
    pub f: f64,
    pub grad: DVec,
    pub c_eq: DVec,
    pub c_in: DVec,
    pub j_eq: DMat,
    pub j_in: DMat,
}

impl<'a> TranscribedNlp<'a> {
    pub fn new(ocp: &'a Ocp, winding: i64, fd_step: f64, tf_bounds: (f64, f64)) -> Self {
        TranscribedNlp {
            ocp,
            winding,
            fd_step,
            tf_bounds,
            terminal: ocp.terminal_target(winding),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.ocp.decision_len()
    }

    pub fn n_eq(&self) -> usize {
        self.ocp.state_dim() * (self.ocp.n_nodes + 2)
    }

    pub fn n_ineq(&self) -> usize {
        let mut rows = 2 * self.ocp.control_dim() * self.ocp.n_nodes + 2;
        if self.ocp.obstacle.is_some() {
            rows += self.ocp.n_nodes + 1;
        }
        rows + self.n_attitude_rows()
    }

    /// Roll and pitch safeguard rows for systems whose Euler-rate map has a
    /// pole at pitch +-90 deg. Like the horizon bounds these are solver
    /// scaffolding: they keep every iterate inside the smooth region and
    /// sit inactive at sensible optima.
    fn n_attitude_rows(&self) -> usize {
        if self.ocp.state_dim() == 12 {
            4 * (self.ocp.n_nodes + 1)
        } else {
            0
        }
    }

    fn attitude_rows_start(&self) -> usize {
        self.obstacle_rows_start()
            + if self.ocp.obstacle.is_some() {
                self.ocp.n_nodes + 1
            } else {
                0
            }
    }

    pub fn x_at(&self, k: usize) -> usize {
        1 + k * self.ocp.state_dim()
    }

    pub fn u_at(&self, k: usize) -> usize {
        1 + self.ocp.state_dim() * (self.ocp.n_nodes + 1) + k * self.ocp.control_dim()
    }

    /// Row of the first obstacle clearance constraint, if any.
    pub fn obstacle_rows_start(&self) -> usize {
        2 * self.ocp.control_dim() * self.ocp.n_nodes + 2
    }

    pub fn alloc_eval(&self) -> NlpEval {
        NlpEval {
            f: 0.0,
            grad: DVec::zeros(self.n_vars()),
            c_eq: DVec::zeros(self.n_eq()),
            c_in: DVec::zeros(self.n_ineq()),
            j_eq: DMat::zeros(self.n_eq(), self.n_vars()),
            j_in: DMat::zeros(self.n_ineq(), self.n_vars()),
        }
    }

    /// Objective and constraint values only; cheap enough for line search.
    pub fn values(&self, z: &DVec) -> (f64, DVec, DVec) {
        let (n, m, nn) = (self.ocp.state_dim(), self.ocp.control_dim(), self.ocp.n_nodes);
        let t_f = z[0];
        let h = t_f / nn as f64;
        let mut f = 0.0;
        let mut c_eq = DVec::zeros(self.n_eq());
        let mut c_in = DVec::zeros(self.n_ineq());

        for i in 0..n {
            c_eq[i] = z[self.x_at(0) + i] - self.ocp.x0[i];
        }
        for k in 0..nn {
            let xk = DVec::from(z.rows(self.x_at(k), n));
            let uk = DVec::from(z.rows(self.u_at(k), m));
            f += self.ocp.running_cost(&xk, &uk) * h;
            let phi = rk4_step(|x, u| self.ocp.dynamics(x, u), &xk, &uk, h);
            for i in 0..n {
                c_eq[n * (k + 1) + i] = z[self.x_at(k + 1) + i] - phi[i];
            }
        }
        for i in 0..n {
            c_eq[n * (nn + 1) + i] = z[self.x_at(nn) + i] - self.terminal[i];
        }

        self.fill_ineq_values(z, &mut c_in);
        (f, c_eq, c_in)
    }

    fn fill_ineq_values(&self, z: &DVec, c_in: &mut DVec) {
        let (m, nn) = (self.ocp.control_dim(), self.ocp.n_nodes);
        let (lo, hi) = self.ocp.system.control_bounds();
        for k in 0..nn {
            for j in 0..m {
                let u = z[self.u_at(k) + j];
                c_in[2 * (k * m + j)] = u - lo[j];
                c_in[2 * (k * m + j) + 1] = hi[j] - u;
            }
        }
        let tfr = 2 * m * nn;
        c_in[tfr] = z[0] - self.tf_bounds.0;
        c_in[tfr + 1] = self.tf_bounds.1 - z[0];
        if let Some(sphere) = &self.ocp.obstacle {
            let start = self.obstacle_rows_start();
            for k in 0..=nn {
                let at = self.x_at(k);
                c_in[start + k] = sphere.margin(&[z[at], z[at + 1], z[at + 2]]);
            }
        }
        if self.n_attitude_rows() > 0 {
            let start = self.attitude_rows_start();
            for k in 0..=nn {
                let at = self.x_at(k);
                for (a, &idx) in [6usize, 7].iter().enumerate() {
                    let v = z[at + idx];
                    c_in[start + 4 * k + 2 * a] = v + ATTITUDE_LIMIT;
                    c_in[start + 4 * k + 2 * a + 1] = ATTITUDE_LIMIT - v;
                }
            }
        }
    }

    /// Full evaluation into `out`. Jacobian buffers hold mostly structural
    /// zeros; only the blocks touched by this problem are rewritten, which
    /// is safe because the sparsity pattern is fixed per problem.
    pub fn eval(&self, z: &DVec, out: &mut NlpEval) {
        let (n, m, nn) = (self.ocp.state_dim(), self.ocp.control_dim(), self.ocp.n_nodes);
        let t_f = z[0];
        let h = t_f / nn as f64;
        out.f = 0.0;
        out.grad.fill(0.0);

        for i in 0..n {
            out.c_eq[i] = z[self.x_at(0) + i] - self.ocp.x0[i];
            out.j_eq[(i, self.x_at(0) + i)] = 1.0;
        }

        for k in 0..nn {
            let xk = DVec::from(z.rows(self.x_at(k), n));
            let uk = DVec::from(z.rows(self.u_at(k), m));

            let cost = self.ocp.running_cost(&xk, &uk);
            out.f += cost * h;
            out.grad[0] += cost / nn as f64;
            let (gx, gu) = self.ocp.running_cost_grad(&xk, &uk);
            for i in 0..n {
                out.grad[self.x_at(k) + i] += gx[i] * h;
            }
            for j in 0..m {
                out.grad[self.u_at(k) + j] += gu[j] * h;
            }

            let sens = rk4_step_with_sensitivity(
                |x, u| self.ocp.dynamics(x, u),
                |x, u| self.ocp.dynamics_jacobians(x, u, self.fd_step),
                &xk,
                &uk,
                h,
            );
            let row0 = n * (k + 1);
            for i in 0..n {
                out.c_eq[row0 + i] = z[self.x_at(k + 1) + i] - sens.x_next[i];
                out.j_eq[(row0 + i, self.x_at(k + 1) + i)] = 1.0;
                out.j_eq[(row0 + i, 0)] = -sens.dh[i] / nn as f64;
                for jc in 0..n {
                    out.j_eq[(row0 + i, self.x_at(k) + jc)] = -sens.dx[(i, jc)];
                }
                for jc in 0..m {
                    out.j_eq[(row0 + i, self.u_at(k) + jc)] = -sens.du[(i, jc)];
                }
            }
        }

        let row0 = n * (nn + 1);
        for i in 0..n {
            out.c_eq[row0 + i] = z[self.x_at(nn) + i] - self.terminal[i];
            out.j_eq[(row0 + i, self.x_at(nn) + i)] = 1.0;
        }

        self.fill_ineq_values(z, &mut out.c_in);
        for k in 0..nn {
            for j in 0..m {
                out.j_in[(2 * (k * m + j), self.u_at(k) + j)] = 1.0;
                out.j_in[(2 * (k * m + j) + 1, self.u_at(k) + j)] = -1.0;
            }
        }
        let tfr = 2 * m * nn;
        out.j_in[(tfr, 0)] = 1.0;
        out.j_in[(tfr + 1, 0)] = -1.0;
        if let Some(sphere) = &self.ocp.obstacle {
            let start = self.obstacle_rows_start();
            for k in 0..=nn {
                let at = self.x_at(k);
                let d = [
                    z[at] - sphere.center[0],
                    z[at + 1] - sphere.center[1],
                    z[at + 2] - sphere.center[2],
                ];
                let nrm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-9);
                for (i, di) in d.iter().enumerate() {
                    out.j_in[(start + k, at + i)] = di / nrm;
                }
            }
        }
        if self.n_attitude_rows() > 0 {
            let start = self.attitude_rows_start();
            for k in 0..=nn {
                let at = self.x_at(k);
                for (a, &idx) in [6usize, 7].iter().enumerate() {
                    out.j_in[(start + 4 * k + 2 * a, at + idx)] = 1.0;
                    out.j_in[(start + 4 * k + 2 * a + 1, at + idx)] = -1.0;
                }
            }
        }
    }

    /// Condense the equality structure at the current Jacobians: every
    /// defect row carries an identity on its outgoing state, so the state
    /// columns are eliminated by forward propagation and only the condensed
    /// coordinates `w = [dt_f, du_0..du_{N-1}]` remain, with the terminal
    /// pin left as a small dense equality block in `w`.
    pub fn condense(&self, ev: &NlpEval) -> Condensed {
        let (n, m, nn) = (self.ocp.state_dim(), self.ocp.control_dim(), self.ocp.n_nodes);
        let nw = 1 + m * nn;
        let nv = self.n_vars();

        let mut a_blocks = Vec::with_capacity(nn);
        let mut t = DMat::zeros(nv, nw);
        t[(0, 0)] = 1.0;
        for k in 0..nn {
            for j in 0..m {
                t[(self.u_at(k) + j, 1 + k * m + j)] = 1.0;
            }
        }

        // dx_{k+1} = A_k dx_k + B_k du_k + d_k dt_f, blocks read back out of
        // the defect rows (stored negated there).
        let mut s_k = DMat::zeros(n, nw);
        for k in 0..nn {
            let row0 = n * (k + 1);
            let mut a_k = DMat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    a_k[(i, j)] = -ev.j_eq[(row0 + i, self.x_at(k) + j)];
                }
            }
            let mut s_next = &a_k * &s_k;
            for i in 0..n {
                s_next[(i, 0)] -= ev.j_eq[(row0 + i, 0)];
                for j in 0..m {
                    s_next[(i, 1 + k * m + j)] -= ev.j_eq[(row0 + i, self.u_at(k) + j)];
                }
            }
            t.view_mut((self.x_at(k + 1), 0), (n, nw)).copy_from(&s_next);
            a_blocks.push(a_k);
            s_k = s_next;
        }

        Condensed { n, nn, nw, a_blocks, t }
    }
}

/// Null-space view of a transcription's equality Jacobian; see
/// [`TranscribedNlp::condense`]. Valid for the Jacobians it was built from.
pub struct Condensed {
    n: usize,
    nn: usize,
    pub nw: usize,
    a_blocks: Vec<DMat>,
    /// Full-space response to the condensed coordinates; state rows hold
    /// the propagated sensitivities, control and time rows the identity.
    pub t: DMat,
}

impl Condensed {
    fn x_at(&self, k: usize) -> usize {
        1 + k * self.n
    }

    /// Number of equality rows in the problem this view condenses.
    pub fn eq_len(&self) -> usize {
        self.n * (self.nn + 2)
    }

    /// Terminal-pin rows expressed in the condensed coordinates.
    pub fn terminal_block(&self) -> DMat {
        DMat::from(self.t.rows(self.x_at(self.nn), self.n))
    }

    /// Particular solution of the initial-pin and defect rows for the given
    /// equality right-hand side (condensed coordinates frozen at zero), and
    /// the residual rhs the terminal block must still absorb.
    pub fn particular(&self, eq_rhs: &DVec) -> (DVec, DVec) {
        let (n, nn) = (self.n, self.nn);
        let mut x_p = DVec::zeros(self.t.nrows());
        let mut r = DVec::from(eq_rhs.rows(0, n));
        x_p.rows_mut(self.x_at(0), n).copy_from(&r);
        for k in 0..nn {
            r = &self.a_blocks[k] * &r;
            for i in 0..n {
                r[i] += eq_rhs[n * (k + 1) + i];
            }
            x_p.rows_mut(self.x_at(k + 1), n).copy_from(&r);
        }
        let term = DVec::from(eq_rhs.rows(n * (nn + 1), n)) - r;
        (x_p, term)
    }

    /// Recover the full equality multipliers from stationarity
    /// `J_eq' lam = rhs` by a backward sweep over the state rows, given the
    /// terminal multipliers from the condensed subproblem.
    pub fn recover_multipliers(&self, rhs: &DVec, lam_term: &DVec) -> DVec {
        let (n, nn) = (self.n, self.nn);
        let mut lam = DVec::zeros(n * (nn + 2));
        lam.rows_mut(n * (nn + 1), n).copy_from(lam_term);
        let mut acc = DVec::from(rhs.rows(self.x_at(nn), n)) - lam_term;
        for k in (0..nn).rev() {
            lam.rows_mut(n * (k + 1), n).copy_from(&acc);
            let mut next = self.a_blocks[k].tr_mul(&acc);
            for i in 0..n {
                next[i] += rhs[self.x_at(k) + i];
            }
            acc = next;
        }
        lam.rows_mut(0, n).copy_from(&acc);
        lam
    }
}
