//! SQP loop: damped-BFGS Hessian, dual active-set QP subproblems, and a
//! backtracking line search on the l1 merit function.
//!
//! Per iteration, at the current point `z` with Lagrange estimates from the
//! previous subproblem:
//!
//! ```text
//! min_d  1/2 d'Bd + grad_f'd
//! s.t.   Je d  = -ce        (linearized equalities)
//!        Ji d >= -ci        (linearized inequalities)
//! ```
//!
//! The step is accepted under Armijo decrease of
//! `f + pen * (sum|ce| + sum max(0, -ci))` with the penalty kept above the
//! current multiplier magnitudes. `B` starts at identity and absorbs
//! curvature through Powell-damped BFGS updates on the Lagrangian gradient,
//! so it stays positive definite, which the QP method requires.
//!
//! The solver is deterministic: no randomness, no time dependence, and a
//! fixed evaluation order, so identical inputs give identical results.

use super::nlp::{Condensed, NlpEval, TranscribedNlp};
use super::qp::{solve_qp, QpSolution, QpStatus};
use crate::ocp::{Ocp, Trajectory};
use crate::{DMat, DVec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Max-norm bound on the KKT residual for declaring convergence.
    pub kkt_tol: f64,
    /// Max-norm bound on constraint violation for declaring convergence.
    pub feas_tol: f64,
    pub max_iters: usize,
    /// Central-difference step for dynamics Jacobians where used.
    pub fd_step: f64,
    pub tf_min: f64,
    pub tf_max: f64,
    /// Initial Levenberg damping added to the Hessian model. Keeps early
    /// steps short enough for the linearization to mean something; decays
    /// on full accepted steps, grows when the line search bites.
    pub damping_init: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kkt_tol: 1e-6,
            feas_tol: 1e-6,
            max_iters: 300,
            fd_step: 1e-7,
            tf_min: 0.1,
            tf_max: 60.0,
            damping_init: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    /// KKT residual and constraint violation both under tolerance.
    Converged,
    /// Ran out of iterations (or stalled) while still feasible-ish.
    MaxIters,
    /// Could not reach a feasible point / subproblems inconsistent.
    Infeasible,
    /// Iterates lost finiteness.
    Diverged,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub trajectory: Trajectory,
    pub objective: f64,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub eq_multipliers: DVec,
    pub ineq_multipliers: DVec,
    pub iterations: usize,
    /// Winding count inherited from the initial guess (see [`Ocp::winding_of`]).
    pub winding: i64,
}

/// Max-norm KKT residual: stationarity of the Lagrangian, equality
/// violation, inequality violation, complementarity, and multiplier sign.
pub fn kkt_residual(ev: &NlpEval, lam: &DVec, mu: &DVec) -> f64 {
    let stat = (&ev.grad - ev.j_eq.tr_mul(lam) - ev.j_in.tr_mul(mu)).amax();
    let feas_eq = if ev.c_eq.is_empty() { 0.0 } else { ev.c_eq.amax() };
    let mut feas_in = 0.0_f64;
    let mut compl = 0.0_f64;
    let mut neg = 0.0_f64;
    for i in 0..ev.c_in.len() {
        feas_in = feas_in.max(-ev.c_in[i]);
        compl = compl.max((mu[i] * ev.c_in[i]).abs());
        neg = neg.max(-mu[i]);
    }
    stat.max(feas_eq).max(feas_in.max(0.0)).max(compl).max(neg)
}

fn violation_l1(c_eq: &DVec, c_in: &DVec) -> f64 {
    let mut v = 0.0;
    for i in 0..c_eq.len() {
        v += c_eq[i].abs();
    }
    for i in 0..c_in.len() {
        v += (-c_in[i]).max(0.0);
    }
    v
}

fn violation_max(c_eq: &DVec, c_in: &DVec) -> f64 {
    let mut v = if c_eq.is_empty() { 0.0 } else { c_eq.amax() };
    for i in 0..c_in.len() {
        v = v.max(-c_in[i]);
    }
    v.max(0.0)
}

/// Half squared norm of the infeasibility: equality residuals plus the
/// hinge of violated inequalities.
fn infeas_merit(c_eq: &DVec, c_in: &DVec) -> f64 {
    let mut v = 0.0;
    for i in 0..c_eq.len() {
        v += c_eq[i] * c_eq[i];
    }
    for i in 0..c_in.len() {
        let h = c_in[i].min(0.0);
        v += h * h;
    }
    0.5 * v
}

/// Trust-region Gauss-Newton pass that drives the constraint residuals
/// toward zero while holding the satisfied inequality rows. The merit
/// iteration calls this when the current point is too far from the
/// feasible set for its linearizations to be useful; a near-feasible
/// point restarts it in a regime where full correction steps work.
fn restore_feasibility(nlp: &TranscribedNlp, z: &mut DVec, ev: &mut NlpEval, config: &SolverConfig) {
    let nv = z.len();
    let n_in = ev.c_in.len();
    let trace = std::env::var_os("TRAJMOE_SQP_TRACE").is_some();
    // Levenberg damping; a 2-norm step control, unlike a max-norm box,
    // matches the 2-norm model error of the Gauss-Newton step.
    let mut lambda = config.damping_init.max(1e-10);
    let eq_a = DMat::zeros(0, nv);
    let eq_b = DVec::zeros(0);
    for it in 0..80 {
        nlp.eval(z, ev);
        let viol = violation_max(&ev.c_eq, &ev.c_in);
        if viol <= config.feas_tol || !ev.f.is_finite() {
            return;
        }
        let psi0 = infeas_merit(&ev.c_eq, &ev.c_in);
        // Gauss-Newton model of the squared residuals. Violated inequality
        // rows join the residual set; satisfied rows stay hard constraints
        // so the step cannot leave the region they define, and violated
        // rows are additionally barred from getting worse.
        let mut b_r = ev.j_eq.tr_mul(&ev.j_eq);
        let mut g_r = ev.j_eq.tr_mul(&ev.c_eq);
        for i in 0..n_in {
            if ev.c_in[i] < 0.0 {
                let row = ev.j_in.row(i).transpose();
                b_r.ger(1.0, &row, &row, 1.0);
                g_r.axpy(ev.c_in[i], &row, 1.0);
            }
        }
        for i in 0..nv {
            b_r[(i, i)] += lambda;
        }
        let mut in_b = DVec::zeros(n_in);
        for i in 0..n_in {
            in_b[i] = (-ev.c_in[i]).min(0.0);
        }
        let qp = solve_qp(&b_r, &g_r, &eq_a, &eq_b, &ev.j_in, &in_b);
        if qp.status != QpStatus::Optimal {
            lambda *= 16.0;
            if lambda >= 1e10 {
                return;
            }
            continue;
        }
        let d = qp.x;
        let jd_eq = &ev.j_eq * &d;
        let mut pred = 0.0;
        for i in 0..ev.c_eq.len() {
            let r0 = ev.c_eq[i];
            let r1 = r0 + jd_eq[i];
            pred += 0.5 * (r0 * r0 - r1 * r1);
        }
        let jd_in = &ev.j_in * &d;
        for i in 0..n_in {
            if ev.c_in[i] < 0.0 {
                let r0 = ev.c_in[i];
                let r1 = (r0 + jd_in[i]).min(0.0);
                pred += 0.5 * (r0 * r0 - r1 * r1);
            }
        }
        if pred <= 1e-14 * (1.0 + psi0) {
            // Stationary point of the infeasibility measure; nothing more
            // to gain here.
            return;
        }
        let zt = &*z + &d;
        let (ft, ce, ci) = nlp.values(&zt);
        let ared = if ft.is_finite() {
            psi0 - infeas_merit(&ce, &ci)
        } else {
            f64::NEG_INFINITY
        };
        let rho = ared / pred;
        if trace {
            eprintln!(
                "  restore it={it} viol={viol:.3e} |d|={:.3e} rho={rho:.2} lam={lambda:.2e} qp_it={}",
                d.amax(),
                qp.iterations
            );
        }
        if rho >= 0.01 {
            *z = zt;
            if rho >= 0.7 {
                lambda = (lambda / 3.0).max(1e-10);
            }
        } else {
            lambda *= 4.0;
            if lambda >= 1e10 {
                return;
            }
        }
    }
}

/// Per-iteration view of the SQP subproblem through the condensed
/// coordinates: the reduced Hessian and inequality rows are built once and
/// shared by the relaxation ladder and correction solves, which only vary
/// right-hand sides. `b_mat` passed to [`CondensedQp::solve`] must be the
/// matrix the view was last built or refreshed with.
struct CondensedQp<'c> {
    cond: &'c Condensed,
    j_in: &'c DMat,
    h_w: DMat,
    a_w: DMat,
    term: DMat,
}

impl<'c> CondensedQp<'c> {
    fn new(cond: &'c Condensed, b_mat: &DMat, j_in: &'c DMat) -> CondensedQp<'c> {
        let mut made = CondensedQp {
            h_w: DMat::zeros(cond.nw, cond.nw),
            a_w: j_in * &cond.t,
            term: cond.terminal_block(),
            cond,
            j_in,
        };
        made.refresh(b_mat);
        made
    }

    /// Rebuild the reduced Hessian after `b_mat` changed.
    fn refresh(&mut self, b_mat: &DMat) {
        self.h_w = self.cond.t.tr_mul(&(b_mat * &self.cond.t));
        for i in 0..self.h_w.nrows() {
            for j in 0..i {
                let s = 0.5 * (self.h_w[(i, j)] + self.h_w[(j, i)]);
                self.h_w[(i, j)] = s;
                self.h_w[(j, i)] = s;
            }
        }
    }

    /// Condensed equivalent of `solve_qp(b, g, j_eq, eq_rhs, j_in, in_rhs)`
    /// for the transcription this was built from. None means the reduced
    /// subproblem failed numerically and the dense path should take over.
    fn solve(&self, b_mat: &DMat, g: &DVec, eq_rhs: &DVec, in_rhs: &DVec) -> Option<QpSolution> {
        let (x_p, term_rhs) = self.cond.particular(eq_rhs);
        let g_w = self.cond.t.tr_mul(&(g + b_mat * &x_p));
        let b_w = in_rhs - self.j_in * &x_p;
        let inner = solve_qp(&self.h_w, &g_w, &self.term, &term_rhs, &self.a_w, &b_w);
        match inner.status {
            QpStatus::Failed => None,
            QpStatus::Infeasible => Some(QpSolution {
                status: QpStatus::Infeasible,
                x: DVec::zeros(x_p.len()),
                eq_multipliers: DVec::zeros(self.cond.eq_len()),
                ineq_multipliers: DVec::zeros(self.j_in.nrows()),
                iterations: inner.iterations,
            }),
            QpStatus::Optimal => {
                let x = x_p + &self.cond.t * &inner.x;
                let mu = inner.ineq_multipliers;
                let rhs = b_mat * &x + g - self.j_in.tr_mul(&mu);
                let lam = self.cond.recover_multipliers(&rhs, &inner.eq_multipliers);
                Some(QpSolution {
                    status: QpStatus::Optimal,
                    x,
                    eq_multipliers: lam,
                    ineq_multipliers: mu,
                    iterations: inner.iterations,
                })
            }
        }
    }
}

pub fn solve(ocp: &Ocp, guess: &Trajectory, config: &SolverConfig) -> SolveResult {
    let winding = ocp.winding_of(guess);
    let nlp = TranscribedNlp::new(ocp, winding, config.fd_step, (config.tf_min, config.tf_max));
    let nv = nlp.n_vars();
    let (n_eq, n_in) = (nlp.n_eq(), nlp.n_ineq());

    let mut z = guess.pack();
    z[0] = z[0].clamp(config.tf_min, config.tf_max);
    let (lo, hi) = ocp.system.control_bounds();
    for k in 0..ocp.n_nodes {
        for j in 0..ocp.control_dim() {
            let at = nlp.u_at(k) + j;
            z[at] = z[at].clamp(lo[j], hi[j]);
        }
    }

    let mut ev = nlp.alloc_eval();
    let mut b_mat = DMat::identity(nv, nv);
    let mut lam = DVec::zeros(n_eq);
    let mut mu = DVec::zeros(n_in);
    let mut pen = 10.0_f64;
    // Deferred BFGS pair: step and Lagrangian gradient at the previous
    // point under the current multipliers.
    let mut pending: Option<(DVec, DVec)> = None;
    // First update after a reset rescales the identity to the curvature the
    // pair implies (Shanno-Phua), otherwise the line search spends several
    // iterations fighting a unit Hessian on a stiff problem.
    let mut fresh_b = true;
    let mut resets = 0;
    let mut failures = 0;
    // Relaxation level that last produced a feasible QP; the ladder resumes
    // near it rather than halving down from 1 every iteration.
    let mut beta_hint = 1.0_f64;
    let mut restorations = 3_usize;

    // Crude cold-start guesses sit far off the dynamics manifold; project
    // toward it first so the merit iteration starts where the constraint
    // linearizations are trustworthy.
    nlp.eval(&z, &mut ev);
    if ev.f.is_finite() && violation_max(&ev.c_eq, &ev.c_in) > 1e-2 {
        restore_feasibility(&nlp, &mut z, &mut ev, config);
    }

    let finish = |status: SolveStatus,
                  z: &DVec,
                  ev: &NlpEval,
                  lam: DVec,
                  mu: DVec,
                  iters: usize| {
        let kkt = kkt_residual(ev, &lam, &mu);
        SolveResult {
            status,
            trajectory: Trajectory::unpack(ocp.state_dim(), ocp.control_dim(), z).unwrap(),
            objective: ev.f,
            kkt_residual: kkt,
            constraint_violation: violation_max(&ev.c_eq, &ev.c_in),
            eq_multipliers: lam,
            ineq_multipliers: mu,
            iterations: iters,
            winding,
        }
    };

    for iter in 0..config.max_iters {
        nlp.eval(&z, &mut ev);
        if !ev.f.is_finite() || !ev.grad.iter().all(|v| v.is_finite()) {
            return finish(SolveStatus::Diverged, &z, &ev, lam, mu, iter);
        }

        if let Some((s, gl_old)) = pending.take() {
            let gl_new = &ev.grad - ev.j_eq.tr_mul(&lam) - ev.j_in.tr_mul(&mu);
            let y = gl_new - gl_old;
            if fresh_b {
                let sy = s.dot(&y);
                if sy > 1e-12 {
                    let sigma = (y.dot(&y) / sy).clamp(1e-4, 1e8);
                    b_mat *= sigma;
                }
                fresh_b = false;
            }
            bfgs_update(&mut b_mat, &s, &y);
        }

        let kkt = kkt_residual(&ev, &lam, &mu);
        let viol = violation_max(&ev.c_eq, &ev.c_in);
        if kkt <= config.kkt_tol && viol <= config.feas_tol {
            return finish(SolveStatus::Converged, &z, &ev, lam, mu, iter);
        }

        let neg_ce = -&ev.c_eq;
        let mut in_b = DVec::zeros(n_in);
        for i in 0..n_in {
            in_b[i] = -ev.c_in[i];
        }
        let cond = nlp.condense(&ev);
        let mut cqp = CondensedQp::new(&cond, &b_mat, &ev.j_in);
        let mut qp = cqp
            .solve(&b_mat, &ev.grad, &neg_ce, &in_b)
            .unwrap_or_else(|| solve_qp(&b_mat, &ev.grad, &ev.j_eq, &neg_ce, &ev.j_in, &in_b));
        if qp.status != QpStatus::Optimal && resets < 3 {
            // Curvature gone bad numerically: restart from identity once
            // before concluding anything about the problem.
            b_mat = DMat::identity(nv, nv);
            fresh_b = true;
            resets += 1;
            cqp.refresh(&b_mat);
            qp = cqp
                .solve(&b_mat, &ev.grad, &neg_ce, &in_b)
                .unwrap_or_else(|| solve_qp(&b_mat, &ev.grad, &ev.j_eq, &neg_ce, &ev.j_in, &in_b));
        }
        // Fraction of the constraint residual the accepted step removes.
        // Far from the feasible set the bounded controls may not admit a
        // full one-step correction, which leaves the linearized constraints
        // inconsistent; asking for a fraction of the correction restores
        // feasibility while still driving the violation down geometrically.
        let mut beta = 1.0_f64;
        if qp.status != QpStatus::Optimal && beta_hint < 1.0 {
            // Resume one level above the relaxation that worked last
            // iteration instead of paying a full QP solve per halving from
            // the top of the ladder every time.
            beta = (beta_hint * 2.0).min(1.0);
        }
        while qp.status != QpStatus::Optimal && beta > 5e-4 {
            beta *= 0.5;
            let eq_b = &neg_ce * beta;
            let mut in_bb = in_b.clone();
            for v in in_bb.iter_mut() {
                // Violated rows demand a scaled fraction of their correction;
                // satisfied rows keep the true bound so d = 0 stays feasible
                // for them and the step cannot walk out of the region.
                if *v > 0.0 {
                    *v *= beta;
                }
            }
            qp = cqp
                .solve(&b_mat, &ev.grad, &eq_b, &in_bb)
                .unwrap_or_else(|| solve_qp(&b_mat, &ev.grad, &ev.j_eq, &eq_b, &ev.j_in, &in_bb));
        }
        if qp.status != QpStatus::Optimal {
            let status = if viol <= config.feas_tol {
                SolveStatus::MaxIters
            } else {
                SolveStatus::Infeasible
            };
            return finish(status, &z, &ev, lam, mu, iter);
        }
        beta_hint = beta;

        // Heavy relaxation while far from feasible means the bounds cannot
        // hold a useful fraction of the correction; a restoration pass gets
        // much further than crawling at beta-scaled progress.
        if beta < 0.05 && viol > 0.1 && restorations > 0 {
            restorations -= 1;
            restore_feasibility(&nlp, &mut z, &mut ev, config);
            b_mat = DMat::identity(nv, nv);
            fresh_b = true;
            pending = None;
            beta_hint = 1.0;
            pen = 10.0;
            failures = 0;
            continue;
        }

        // A vanishing step paired with a large first-order error means the
        // curvature model has degenerated (implied norm above 1e6); rebuild
        // it and take the fresh direction instead of crawling.
        if qp.x.amax() * 1e6 < kkt && resets < 6 {
            b_mat = DMat::identity(nv, nv);
            fresh_b = true;
            resets += 1;
            cqp.refresh(&b_mat);
            let retry = cqp
                .solve(&b_mat, &ev.grad, &neg_ce, &in_b)
                .unwrap_or_else(|| solve_qp(&b_mat, &ev.grad, &ev.j_eq, &neg_ce, &ev.j_in, &in_b));
            if retry.status == QpStatus::Optimal {
                qp = retry;
                beta_hint = 1.0;
            }
        }

        let d = qp.x;
        lam = qp.eq_multipliers;
        mu = qp.ineq_multipliers;

        let mult_inf = lam.amax().max(mu.amax());
        // Two-sided penalty tracking: jump when the multipliers demand more
        // weight, decay toward the demand otherwise so one degenerate
        // iterate cannot pin the merit function at an extreme value for the
        // rest of the solve.
        let pen_need = 1.5 * mult_inf + 1e-3;
        pen = if pen_need > pen {
            pen_need
        } else {
            0.5 * (pen + pen_need)
        };

        let phi0 = ev.f + pen * violation_l1(&ev.c_eq, &ev.c_in);
        // The linearized step removes a beta fraction of the violation, so
        // only that much enters the predicted merit decrease.
        let descent = ev.grad.dot(&d) - pen * beta * violation_l1(&ev.c_eq, &ev.c_in);

        let mut alpha = 1.0_f64;
        let mut accepted = false;
        let mut step = d.clone();
        let mut soc_used = false;
        while alpha >= 1e-10 {
            let zt = &z + &d * alpha;
            let (ft, ce, ci) = nlp.values(&zt);
            if ft.is_finite() {
                let phi = ft + pen * violation_l1(&ce, &ci);
                if phi <= phi0 + 1e-4 * alpha * descent.min(0.0) {
                    step = &d * alpha;
                    accepted = true;
                    break;
                }
                // Full step rejected with the violation grown: curvature of
                // the constraint manifold, not a bad direction. Retry once
                // with a minimum-curvature-norm correction aimed at the
                // trial point's own residuals (second-order correction)
                // before surrendering step length.
                if alpha == 1.0 && violation_l1(&ce, &ci) > violation_l1(&ev.c_eq, &ev.c_in) {
                    let corr = cqp
                        .solve(&b_mat, &DVec::zeros(nv), &(-&ce), &(-&ci))
                        .unwrap_or_else(|| {
                            solve_qp(&b_mat, &DVec::zeros(nv), &ev.j_eq, &(-&ce), &ev.j_in, &(-&ci))
                        });
                    if corr.status == QpStatus::Optimal {
                        let zc = &zt + &corr.x;
                        let (fc, cec, cic) = nlp.values(&zc);
                        if fc.is_finite()
                            && fc + pen * violation_l1(&cec, &cic)
                                <= phi0 + 1e-4 * descent.min(0.0)
                        {
                            step = &d + &corr.x;
                            soc_used = true;
                            accepted = true;
                            break;
                        }
                    }
                }
            }
            alpha *= 0.5;
        }

        if std::env::var_os("TRAJMOE_SQP_TRACE").is_some() {
            eprintln!(
                "it={iter} f={:.6} viol={viol:.3e} kkt={kkt:.3e} pen={pen:.1e} beta={beta:.3} |d|={:.3e} alpha={alpha:.3e} acc={accepted} soc={} qp_it={}",
                ev.f,
                d.amax(),
                soc_used as u8,
                qp.iterations
            );
        }
        if !accepted {
            if viol > 0.1 && restorations > 0 {
                restorations -= 1;
                restore_feasibility(&nlp, &mut z, &mut ev, config);
                b_mat = DMat::identity(nv, nv);
                fresh_b = true;
                pending = None;
                beta_hint = 1.0;
                pen = 10.0;
                failures = 0;
                continue;
            }
            failures += 1;
            if failures >= 4 || d.amax() < 1e-12 {
                let status = if viol <= config.feas_tol {
                    SolveStatus::MaxIters
                } else {
                    SolveStatus::Infeasible
                };
                return finish(status, &z, &ev, lam, mu, iter);
            }
            b_mat = DMat::identity(nv, nv);
            fresh_b = true;
            pending = None;
            continue;
        }
        failures = 0;

        let gl_old = &ev.grad - ev.j_eq.tr_mul(&lam) - ev.j_in.tr_mul(&mu);
        pending = Some((step.clone(), gl_old));
        z += step;
    }

    nlp.eval(&z, &mut ev);
    let status = if violation_max(&ev.c_eq, &ev.c_in) <= config.feas_tol {
        SolveStatus::MaxIters
    } else {
        SolveStatus::Infeasible
    };
    finish(status, &z, &ev, lam, mu, config.max_iters)
}

/// Powell-damped BFGS update; keeps `B` positive definite by pulling the
/// curvature pair toward `Bs` when `s'y` is too small.
fn bfgs_update(b_mat: &mut DMat, s: &DVec, y: &DVec) {
    let ss = s.dot(s);
    if ss < 1e-16 {
        return;
    }
    // A pair with implied curvature beyond 1e6 carries multiplier noise
    // from a degenerate subproblem, not curvature information; folding it
    // in would poison the model for many iterations.
    if y.dot(y) > 1e12 * ss {
        return;
    }
    let bs = &*b_mat * s;
    let sbs = s.dot(&bs);
    if sbs <= 1e-16 {
        return;
    }
    let sy = s.dot(y);
    let theta = if sy >= 0.2 * sbs {
        1.0
    } else {
        0.8 * sbs / (sbs - sy)
    };
    let ybar = y * theta + &bs * (1.0 - theta);
    let sybar = s.dot(&ybar);
    if sybar <= 1e-16 || ybar.norm_squared() > 1e8 * sybar {
        return;
    }
    b_mat.ger(-1.0 / sbs, &bs, &bs, 1.0);
    b_mat.ger(1.0 / sybar, &ybar, &ybar, 1.0);
}
