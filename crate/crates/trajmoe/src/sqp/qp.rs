//! Dense strictly convex QP solver, dual active-set method.
//!
//! Solves
//!
//! ```text
//! min  1/2 x'Gx + g'x
//! s.t. E x  = be        (equality rows)
//!      A x >= ba        (inequality rows)
//! ```
//!
//! for positive definite `G` by the Goldfarb-Idnani method: start at the
//! unconstrained minimum (dual feasible by construction), repeatedly add the
//! most violated constraint to the working set, taking primal steps that
//! keep working-set constraints tight and dual steps that drop blocking
//! inequalities. No feasible starting point is required, which is exactly
//! what an SQP subproblem needs. Equality rows are normally eliminated onto
//! their null space up front (one dense QR) so the active-set core only ever
//! sees inequalities; if the elimination looks rank-deficient the core takes
//! the full problem instead, forcing equalities into the working set first
//! and never dropping them.
//!
//! The factorization state is the usual pair `J = L^-T Q`, `R` with
//! `J' N_active = [R; 0]` for `G = L L'`; adds append a column to `R` via
//! Givens rotations, drops restore triangularity the same way. Constraint
//! normals are applied through their sparsity pattern, which matters because
//! transcription rows touch only a few dozen of the decision variables.

use crate::{DMat, DVec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    /// Dual became unbounded: the constraint system is inconsistent.
    Infeasible,
    /// Iteration cap hit or factorization failed; treat as a solver miss.
    Failed,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: DVec,
    pub eq_multipliers: DVec,
    pub ineq_multipliers: DVec,
    pub iterations: usize,
}

/// Constraint row stored by its nonzero pattern.
struct SparseRow {
    idx: Vec<usize>,
    val: Vec<f64>,
    rhs: f64,
}

impl SparseRow {
    fn from_dense(row: &[f64], rhs: f64) -> SparseRow {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                idx.push(j);
                val.push(v);
            }
        }
        SparseRow { idx, val, rhs }
    }

    fn dot(&self, x: &DVec) -> f64 {
        let mut s = 0.0;
        for (&j, &v) in self.idx.iter().zip(&self.val) {
            s += v * x[j];
        }
        s
    }

    /// d = J' n for this row's normal n (scaled by `sign`).
    fn apply_jt(&self, j: &DMat, sign: f64, d: &mut DVec) {
        d.fill(0.0);
        let n = j.nrows();
        for (&jj, &v) in self.idx.iter().zip(&self.val) {
            let col = j.row(jj);
            let v = v * sign;
            for k in 0..n {
                d[k] += v * col[k];
            }
        }
    }
}

/// Solve the QP, eliminating equality rows first when that is numerically
/// safe and falling back to the bare active-set core when it is not.
pub fn solve_qp(
    g_mat: &DMat,
    g_vec: &DVec,
    eq_a: &DMat,
    eq_b: &DVec,
    ineq_a: &DMat,
    ineq_b: &DVec,
) -> QpSolution {
    if eq_a.nrows() > 0 && eq_a.nrows() < g_mat.nrows() {
        if let Some(sol) = solve_eliminated(g_mat, g_vec, eq_a, eq_b, ineq_a, ineq_b) {
            return sol;
        }
    }
    solve_gi(g_mat, g_vec, eq_a, eq_b, ineq_a, ineq_b)
}

/// Eliminate the equality rows before touching the active-set core: factor
/// `E' = Q1 R`, split `x = x_p + Z w` with `E x_p = be` and `E Z = 0`
/// (`Z` = trailing columns of the full `Q`), and solve the inequality-only
/// reduced QP in `w`. One dense QR replaces one working-set add per equality
/// row, which is the bulk of the core's work on transcription problems.
/// Equality multipliers come back out of stationarity through the same `R`.
/// Returns None when `E` looks rank-deficient or `x_p` fails to reproduce
/// `be`; those corners fall through to the core, which has verdicts for them.
fn solve_eliminated(
    g_mat: &DMat,
    g_vec: &DVec,
    eq_a: &DMat,
    eq_b: &DVec,
    ineq_a: &DMat,
    ineq_b: &DVec,
) -> Option<QpSolution> {
    let n = g_mat.nrows();
    let m_eq = eq_a.nrows();
    let m_in = ineq_a.nrows();
    let nz = n - m_eq;

    // QR of [E' | I-slice]: the trailing columns only pad the factorization
    // to full size so Q comes back square; Q's last nz columns are an
    // orthonormal null-space basis of E whenever R's leading diagonal says
    // E' had full column rank.
    let mut padded = DMat::zeros(n, n);
    padded
        .view_mut((0, 0), (n, m_eq))
        .copy_from(&eq_a.transpose());
    for k in 0..nz {
        padded[(k, m_eq + k)] = 1.0;
    }
    let qr = padded.qr();
    let q_full = qr.q();
    let r_full = qr.r();

    let r11 = r_full.view((0, 0), (m_eq, m_eq));
    let mut diag_max: f64 = 0.0;
    let mut diag_min = f64::INFINITY;
    for i in 0..m_eq {
        let d = r11[(i, i)].abs();
        diag_max = diag_max.max(d);
        diag_min = diag_min.min(d);
    }
    if diag_min <= 1e-10 * diag_max.max(1.0) {
        return None;
    }

    // Minimum-norm particular solution: R' y = be, x_p = Q1 y.
    let y = r11.transpose().solve_lower_triangular(eq_b)?;
    let q1 = q_full.columns(0, m_eq);
    let x_p = &q1 * y;
    if (eq_a * &x_p - eq_b).amax() > 1e-7 * (1.0 + eq_b.amax()) {
        return None;
    }

    let z = DMat::from(q_full.columns(m_eq, nz));
    let gz = g_mat * &z;
    let mut h_w = z.tr_mul(&gz);
    for i in 0..nz {
        for j in 0..i {
            let s = 0.5 * (h_w[(i, j)] + h_w[(j, i)]);
            h_w[(i, j)] = s;
            h_w[(j, i)] = s;
        }
    }
    let g_w = z.tr_mul(&(g_vec + g_mat * &x_p));
    let a_w = ineq_a * &z;
    let b_w = ineq_b - ineq_a * &x_p;

    let inner = solve_gi(
        &h_w,
        &g_w,
        &DMat::zeros(0, nz),
        &DVec::zeros(0),
        &a_w,
        &b_w,
    );
    match inner.status {
        QpStatus::Failed => return None,
        QpStatus::Infeasible => {
            // The reduced problem is the original restricted to the equality
            // manifold, so its infeasibility verdict carries over.
            return Some(QpSolution {
                status: QpStatus::Infeasible,
                x: DVec::zeros(n),
                eq_multipliers: DVec::zeros(m_eq),
                ineq_multipliers: DVec::zeros(m_in),
                iterations: inner.iterations,
            });
        }
        QpStatus::Optimal => {}
    }

    let x = x_p + &z * &inner.x;
    let mu = inner.ineq_multipliers;
    // Stationarity G x + g = E' lam + A' mu projected onto range(E').
    let resid = g_mat * &x + g_vec - ineq_a.tr_mul(&mu);
    let t = q1.tr_mul(&resid);
    let lam = r11.solve_upper_triangular(&t)?;

    Some(QpSolution {
        status: QpStatus::Optimal,
        x,
        eq_multipliers: lam,
        ineq_multipliers: mu,
        iterations: inner.iterations,
    })
}

fn solve_gi(
    g_mat: &DMat,
    g_vec: &DVec,
    eq_a: &DMat,
    eq_b: &DVec,
    ineq_a: &DMat,
    ineq_b: &DVec,
) -> QpSolution {
    let n = g_mat.nrows();
    let m_eq = eq_a.nrows();
    let m_in = ineq_a.nrows();

    let fail = |status: QpStatus| QpSolution {
        status,
        x: DVec::zeros(n),
        eq_multipliers: DVec::zeros(m_eq),
        ineq_multipliers: DVec::zeros(m_in),
        iterations: 0,
    };

    // Cholesky with escalating jitter; BFGS keeps G positive definite so
    // the jitter path only fires on hard numerical corners.
    let mut chol = None;
    let mut jitter = 0.0;
    for _ in 0..6 {
        let mut gj = g_mat.clone();
        if jitter > 0.0 {
            for i in 0..n {
                gj[(i, i)] += jitter;
            }
        }
        match nalgebra::Cholesky::new(gj) {
            Some(c) => {
                chol = Some(c);
                break;
            }
            None => {
                let scale = g_mat.diagonal().amax().max(1.0);
                jitter = if jitter == 0.0 {
                    1e-12 * scale
                } else {
                    jitter * 100.0
                };
            }
        }
    }
    let chol = match chol {
        Some(c) => c,
        None => return fail(QpStatus::Failed),
    };

    // J = L^-T, x = unconstrained minimum.
    let mut j_mat = DMat::identity(n, n);
    chol.l_dirty()
        .transpose()
        .solve_upper_triangular_mut(&mut j_mat);
    // Pristine copy of L^-T, kept so J and R can be rebuilt from scratch
    // when incremental updates have drifted.
    let j0 = j_mat.clone();
    let mut x = -g_vec.clone();
    chol.solve_mut(&mut x);

    let mut rows: Vec<SparseRow> = Vec::with_capacity(m_eq + m_in);
    for i in 0..m_eq {
        let r: Vec<f64> = eq_a.row(i).iter().copied().collect();
        rows.push(SparseRow::from_dense(&r, eq_b[i]));
    }
    for i in 0..m_in {
        let r: Vec<f64> = ineq_a.row(i).iter().copied().collect();
        rows.push(SparseRow::from_dense(&r, ineq_b[i]));
    }
    let scale: Vec<f64> = rows
        .iter()
        .map(|r| {
            let nrm: f64 = r.val.iter().map(|v| v * v).sum::<f64>().sqrt();
            nrm.max(1.0)
        })
        .collect();

    let mut r_mat = DMat::zeros(n, n);
    let mut active: Vec<usize> = Vec::new();
    // Sign each constraint entered the working set with (equalities may be
    // added with a flipped normal so their "violation" looks negative).
    let mut asign: Vec<f64> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut in_set = vec![false; m_eq + m_in];

    let tol = 1e-10;
    let max_iters = 100 + 10 * (m_eq + m_in);
    let mut iters = 0;

    let mut d = DVec::zeros(n);
    let mut z = DVec::zeros(n);

    loop {
        iters += 1;
        if iters > max_iters {
            qp_trace("outer iteration cap");
            return fail(QpStatus::Failed);
        }

        // Constraint selection: any pending equality first (in order), else
        // the most violated inequality.
        let mut pick: Option<(usize, f64)> = None; // (row, sign)
        let mut s_p = 0.0;
        for i in 0..m_eq {
            if !in_set[i] {
                let s = rows[i].dot(&x) - rows[i].rhs;
                let sign = if s > 0.0 { -1.0 } else { 1.0 };
                pick = Some((i, sign));
                s_p = s * sign;
                break;
            }
        }
        if pick.is_none() {
            let mut worst = -tol;
            for i in m_eq..m_eq + m_in {
                if in_set[i] {
                    continue;
                }
                let s = (rows[i].dot(&x) - rows[i].rhs) / scale[i];
                if s < worst {
                    worst = s;
                    pick = Some((i, 1.0));
                    s_p = rows[i].dot(&x) - rows[i].rhs;
                }
            }
        }
        let (p, p_sign) = match pick {
            Some(v) => v,
            None => break, // all satisfied: optimal
        };

        let mut u_p = 0.0;
        // The terminal verdicts below (degenerate normal, unbounded dual)
        // are only trusted when reached with freshly rebuilt factors; after
        // a few hundred Givens updates at transcription scale the drift in
        // J and R is enough to fabricate either.
        let mut refreshed = false;
        // Inner loop: take dual steps (dropping blockers) until the chosen
        // constraint can be added with a full primal step.
        loop {
            iters += 1;
            if iters > max_iters {
                qp_trace("inner iteration cap");
                return fail(QpStatus::Failed);
            }
            let q = active.len();
            rows[p].apply_jt(&j_mat, p_sign, &mut d);

            // z = J2 d2
            z.fill(0.0);
            for k in q..n {
                let dk = d[k];
                if dk != 0.0 {
                    z.axpy(dk, &j_mat.column(k), 1.0);
                }
            }
            // r = R^-1 d1
            let mut r_dir = vec![0.0; q];
            for k in (0..q).rev() {
                let mut s = d[k];
                for l in k + 1..q {
                    s -= r_mat[(k, l)] * r_dir[l];
                }
                r_dir[k] = s / r_mat[(k, k)];
            }

            let z_norm = z.amax();
            let ztn = if z_norm > 1e-13 {
                let mut s = 0.0;
                for (&jj, &v) in rows[p].idx.iter().zip(&rows[p].val) {
                    s += v * p_sign * z[jj];
                }
                s
            } else {
                0.0
            };

            // Partial step bound from droppable (inequality) members.
            let mut t1 = f64::INFINITY;
            let mut k_drop = usize::MAX;
            for (k, &row) in active.iter().enumerate() {
                if row >= m_eq && r_dir[k] > tol {
                    let t = u[k] / r_dir[k];
                    if t < t1 {
                        t1 = t;
                        k_drop = k;
                    }
                }
            }
            let t2 = if ztn > 1e-13 { -s_p / ztn } else { f64::INFINITY };
            let t = t1.min(t2);
            if !t.is_finite() {
                if !refreshed {
                    refresh_factors(&rows, &active, &asign, &j0, &mut j_mat, &mut r_mat);
                    refreshed = true;
                    continue;
                }
                qp_trace(&format!(
                    "dual unbounded: p={p} q={} z_norm={z_norm:.3e}",
                    active.len()
                ));
                return fail(QpStatus::Infeasible);
            }

            if t2.is_finite() {
                x.axpy(t, &z, 1.0);
            }
            for (k, r) in r_dir.iter().enumerate() {
                u[k] -= t * r;
            }
            u_p += t;

            if t2.is_finite() && (t - t2).abs() <= f64::EPSILON * t2.abs().max(1.0) {
                // Full step: add p to the working set.
                let q = active.len();
                let tail: f64 = (q..n).map(|k| d[k] * d[k]).sum::<f64>().sqrt();
                if tail < 1e-13 {
                    // Normal lies in the span of the working set: degenerate
                    // add. Only believable with fresh factors.
                    if !refreshed {
                        refresh_factors(&rows, &active, &asign, &j0, &mut j_mat, &mut r_mat);
                        refreshed = true;
                        continue;
                    }
                    qp_trace(&format!("degenerate add: p={p} q={q} tail={tail:.3e}"));
                    return fail(QpStatus::Failed);
                }
                // Rotate d[q+1..n] into d[q], carrying J along.
                for k in (q + 1..n).rev() {
                    let (a, b) = (d[k - 1], d[k]);
                    if b == 0.0 {
                        continue;
                    }
                    let h = a.hypot(b);
                    let (c, s) = (a / h, b / h);
                    d[k - 1] = h;
                    d[k] = 0.0;
                    for ri in 0..n {
                        let (j1, j2) = (j_mat[(ri, k - 1)], j_mat[(ri, k)]);
                        j_mat[(ri, k - 1)] = c * j1 + s * j2;
                        j_mat[(ri, k)] = -s * j1 + c * j2;
                    }
                }
                for k in 0..=q.min(n - 1) {
                    r_mat[(k, q)] = d[k];
                }
                active.push(p);
                asign.push(p_sign);
                u.push(u_p);
                in_set[p] = true;
                break;
            }

            // Partial step: drop blocker k_drop, restore R, retry.
            drop_constraint(&mut active, &mut asign, &mut u, &mut in_set, k_drop, &mut r_mat, &mut j_mat);
            refreshed = false;
            if t2.is_finite() {
                s_p = rows[p].dot(&x) * p_sign - rows[p].rhs * p_sign;
            }
        }
    }

    let mut lam = DVec::zeros(m_eq);
    let mut mu = DVec::zeros(m_in);
    for (k, &row) in active.iter().enumerate() {
        if row < m_eq {
            lam[row] = u[k] * asign[k];
        } else {
            mu[row - m_eq] = u[k];
        }
    }
    QpSolution {
        status: QpStatus::Optimal,
        x,
        eq_multipliers: lam,
        ineq_multipliers: mu,
        iterations: iters,
    }
}

fn qp_trace(msg: &str) {
    if std::env::var_os("TRAJMOE_QP_TRACE").is_some() {
        eprintln!("qp: {msg}");
    }
}

/// Rebuild `J = L^-T Q` and `R` for the current working set from scratch:
/// QR-factorize `L^-1 N_active` instead of replaying the incremental Givens
/// history. Restores `J' N_active = [R; 0]` to working precision.
fn refresh_factors(
    rows: &[SparseRow],
    active: &[usize],
    asign: &[f64],
    j0: &DMat,
    j_mat: &mut DMat,
    r_mat: &mut DMat,
) {
    let n = j0.nrows();
    let q = active.len();
    let mut w = DMat::zeros(n, q);
    let mut col = DVec::zeros(n);
    for (k, &row) in active.iter().enumerate() {
        rows[row].apply_jt(j0, asign[k], &mut col);
        w.column_mut(k).copy_from(&col);
    }
    let qr = w.qr();
    let mut q_tr = DMat::identity(n, n);
    qr.q_tr_mul(&mut q_tr);
    *j_mat = j0 * q_tr.transpose();
    r_mat.fill(0.0);
    r_mat.view_mut((0, 0), (q.min(n), q)).copy_from(&qr.r());
}

fn drop_constraint(
    active: &mut Vec<usize>,
    asign: &mut Vec<f64>,
    u: &mut Vec<f64>,
    in_set: &mut [bool],
    k: usize,
    r_mat: &mut DMat,
    j_mat: &mut DMat,
) {
    let q = active.len();
    in_set[active[k]] = false;
    active.remove(k);
    asign.remove(k);
    u.remove(k);
    // Shift columns k+1..q of R left, then rotate the subdiagonal away.
    for col in k + 1..q {
        for row in 0..=col {
            r_mat[(row, col - 1)] = r_mat[(row, col)];
        }
    }
    let n = j_mat.nrows();
    for col in k..q - 1 {
        let (a, b) = (r_mat[(col, col)], r_mat[(col + 1, col)]);
        if b != 0.0 {
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for cc in col..q - 1 {
                let (r1, r2) = (r_mat[(col, cc)], r_mat[(col + 1, cc)]);
                r_mat[(col, cc)] = c * r1 + s * r2;
                r_mat[(col + 1, cc)] = -s * r1 + c * r2;
            }
            for ri in 0..n {
                let (j1, j2) = (j_mat[(ri, col)], j_mat[(ri, col + 1)]);
                j_mat[(ri, col)] = c * j1 + s * j2;
                j_mat[(ri, col + 1)] = -s * j1 + c * j2;
            }
        }
    }
    for row in 0..q {
        r_mat[(row, q - 1)] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Brute-force oracle: enumerate working sets, solve the equality KKT
    /// system for each, keep primal+dual feasible candidates, take the best.
    /// Exhaustive and independent of the dual active-set machinery.
    fn brute_force(
        g_mat: &DMat,
        g_vec: &DVec,
        eq_a: &DMat,
        eq_b: &DVec,
        ineq_a: &DMat,
        ineq_b: &DVec,
    ) -> Option<(DVec, DVec, DVec)> {
        let n = g_mat.nrows();
        let m_eq = eq_a.nrows();
        let m_in = ineq_a.nrows();
        let mut best: Option<(f64, DVec, DVec, DVec)> = None;
        for mask in 0..(1u32 << m_in) {
            let act: Vec<usize> = (0..m_in).filter(|i| mask >> i & 1 == 1).collect();
            let rows = m_eq + act.len();
            let mut kkt = DMat::zeros(n + rows, n + rows);
            let mut rhs = DVec::zeros(n + rows);
            kkt.view_mut((0, 0), (n, n)).copy_from(g_mat);
            for r in 0..m_eq {
                for c in 0..n {
                    kkt[(n + r, c)] = eq_a[(r, c)];
                    kkt[(c, n + r)] = -eq_a[(r, c)];
                }
                rhs[n + r] = eq_b[r];
            }
            for (k, &i) in act.iter().enumerate() {
                for c in 0..n {
                    kkt[(n + m_eq + k, c)] = ineq_a[(i, c)];
                    kkt[(c, n + m_eq + k)] = -ineq_a[(i, c)];
                }
                rhs[n + m_eq + k] = ineq_b[i];
            }
            rhs.rows_mut(0, n).copy_from(&(-g_vec));
            let lu = kkt.clone().lu();
            let sol = match lu.solve(&rhs) {
                Some(s) => s,
                None => continue,
            };
            // LU only rejects exactly-zero pivots; a redundant working set
            // gives a nearly singular KKT matrix and a garbage solution.
            if (&kkt * &sol - &rhs).amax() > 1e-8 {
                continue;
            }
            let x = DVec::from(sol.rows(0, n));
            let lam = DVec::from(sol.rows(n, m_eq));
            let mut mu = DVec::zeros(m_in);
            let mut dual_ok = true;
            for (k, &i) in act.iter().enumerate() {
                mu[i] = sol[n + m_eq + k];
                if mu[i] < -1e-8 {
                    dual_ok = false;
                }
            }
            if !dual_ok {
                continue;
            }
            let mut primal_ok = true;
            for i in 0..m_in {
                if (ineq_a.row(i) * &x)[0] < ineq_b[i] - 1e-8 {
                    primal_ok = false;
                    break;
                }
            }
            if !primal_ok {
                continue;
            }
            let obj = 0.5 * (&x.transpose() * g_mat * &x)[0] + g_vec.dot(&x);
            if best.as_ref().map_or(true, |(b, ..)| obj < *b - 1e-12) {
                best = Some((obj, x, lam, mu));
            }
        }
        best.map(|(_, x, l, m)| (x, l, m))
    }

    fn random_pd(rng: &mut impl Rng, n: usize) -> DMat {
        let m = DMat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &m * m.transpose() + DMat::identity(n, n) * 0.5
    }

    #[test]
    fn matches_brute_force_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut solved = 0;
        for trial in 0..250 {
            let n = rng.gen_range(2..=5);
            let m_eq = rng.gen_range(0..=1.min(n - 1));
            let m_in = rng.gen_range(0..=6);
            let g_mat = random_pd(&mut rng, n);
            let g_vec = DVec::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let eq_a = DMat::from_fn(m_eq, n, |_, _| rng.gen_range(-1.0..1.0));
            let eq_b = DVec::from_fn(m_eq, |_, _| rng.gen_range(-1.0..1.0));
            let ineq_a = DMat::from_fn(m_in, n, |_, _| rng.gen_range(-1.0..1.0));
            let ineq_b = DVec::from_fn(m_in, |_, _| rng.gen_range(-1.5..0.5));

            let oracle = brute_force(&g_mat, &g_vec, &eq_a, &eq_b, &ineq_a, &ineq_b);
            let got = solve_qp(&g_mat, &g_vec, &eq_a, &eq_b, &ineq_a, &ineq_b);
            match oracle {
                Some((x, lam, mu)) => {
                    assert_eq!(got.status, QpStatus::Optimal, "trial {trial}");
                    assert!(
                        (&got.x - &x).amax() < 1e-6,
                        "trial {trial}: x mismatch {} vs oracle {}",
                        got.x,
                        x
                    );
                    assert!((&got.eq_multipliers - &lam).amax() < 1e-6, "trial {trial}");
                    assert!((&got.ineq_multipliers - &mu).amax() < 1e-6, "trial {trial}");
                    solved += 1;
                }
                None => {
                    assert_ne!(got.status, QpStatus::Optimal, "trial {trial}: oracle infeasible");
                }
            }
        }
        assert!(solved > 150, "only {solved} feasible trials; oracle too weak");
    }

    #[test]
    fn clamps_to_box_like_projection() {
        // min 1/2 |x - c|^2 s.t. -1 <= x <= 1 is coordinatewise clamping.
        let n = 4;
        let g_mat = DMat::identity(n, n);
        let c = DVec::from_vec(vec![2.0, -0.3, -5.0, 0.9]);
        let g_vec = -c.clone();
        let mut ineq_a = DMat::zeros(2 * n, n);
        let mut ineq_b = DVec::zeros(2 * n);
        for i in 0..n {
            ineq_a[(i, i)] = 1.0;
            ineq_b[i] = -1.0;
            ineq_a[(n + i, i)] = -1.0;
            ineq_b[n + i] = -1.0;
        }
        let sol = solve_qp(
            &g_mat,
            &g_vec,
            &DMat::zeros(0, n),
            &DVec::zeros(0),
            &ineq_a,
            &ineq_b,
        );
        assert_eq!(sol.status, QpStatus::Optimal);
        for i in 0..n {
            assert_relative_eq!(sol.x[i], c[i].clamp(-1.0, 1.0), epsilon = 1e-9);
        }
    }

    #[test]
    fn equality_projection_has_closed_form() {
        // min 1/2|x|^2 s.t. sum(x) = 1 gives x = 1/n.
        let n = 5;
        let sol = solve_qp(
            &DMat::identity(n, n),
            &DVec::zeros(n),
            &DMat::from_element(1, n, 1.0),
            &DVec::from_element(1, 1.0),
            &DMat::zeros(0, n),
            &DVec::zeros(0),
        );
        assert_eq!(sol.status, QpStatus::Optimal);
        for i in 0..n {
            assert_relative_eq!(sol.x[i], 0.2, epsilon = 1e-10);
        }
        assert_relative_eq!(sol.eq_multipliers[0], 0.2, epsilon = 1e-10);
    }

    #[test]
    fn reports_inconsistent_constraints_infeasible() {
        // x >= 1 and -x >= 0 cannot hold together.
        let g_mat = DMat::identity(1, 1);
        let g_vec = DVec::zeros(1);
        let mut ineq_a = DMat::zeros(2, 1);
        ineq_a[(0, 0)] = 1.0;
        ineq_a[(1, 0)] = -1.0;
        let ineq_b = DVec::from_vec(vec![1.0, 0.0]);
        let sol = solve_qp(
            &g_mat,
            &g_vec,
            &DMat::zeros(0, 1),
            &DVec::zeros(0),
            &ineq_a,
            &ineq_b,
        );
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn transcription_scale_problem_stays_exact() {
        // Random PD problem at the pendulum subproblem scale, checked
        // against KKT residuals rather than the exponential oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 75;
        let g_mat = random_pd(&mut rng, n);
        let g_vec = DVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let eq_a = DMat::from_fn(52, n, |_, _| {
            if rng.gen_bool(0.1) {
                rng.gen_range(-1.0..1.0)
            } else {
                0.0
            }
        });
        let eq_b = DVec::from_fn(52, |_, _| rng.gen_range(-0.5..0.5));
        let mut ineq_a = DMat::zeros(2 * n, n);
        let mut ineq_b = DVec::zeros(2 * n);
        for i in 0..n {
            ineq_a[(i, i)] = 1.0;
            ineq_b[i] = -3.0;
            ineq_a[(n + i, i)] = -1.0;
            ineq_b[n + i] = -3.0;
        }
        let sol = solve_qp(&g_mat, &g_vec, &eq_a, &eq_b, &ineq_a, &ineq_b);
        assert_eq!(sol.status, QpStatus::Optimal);
        // Stationarity: Gx + g = E' lam + A' mu.
        let grad = &g_mat * &sol.x + &g_vec;
        let pull = eq_a.transpose() * &sol.eq_multipliers + ineq_a.transpose() * &sol.ineq_multipliers;
        assert!((grad - pull).amax() < 1e-7);
        assert!((&eq_a * &sol.x - &eq_b).amax() < 1e-8);
        for i in 0..2 * n {
            let slack = (ineq_a.row(i) * &sol.x)[0] - ineq_b[i];
            assert!(slack > -1e-9);
            assert!(sol.ineq_multipliers[i] > -1e-9);
            assert!(sol.ineq_multipliers[i] * slack < 1e-6);
        }
    }
}
