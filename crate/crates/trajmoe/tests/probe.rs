use std::time::Instant;
use trajmoe::dataset::{bootstrap_solve, sample_parameters, ParamMode};
use trajmoe::ocp::{Ocp, SystemId};
use trajmoe::sqp::nlp::TranscribedNlp;
use trajmoe::sqp::qp::solve_qp;
use trajmoe::sqp::{solve, SolverConfig};
use trajmoe::DVec;

#[test]
#[ignore]
fn quad_single_solve_timing() {
    let params = sample_parameters(SystemId::Quadcopter, &ParamMode::Random { count: 1 }, 31);
    println!("param: {:.2} {:.2} {:.2}", params[0][0], params[0][1], params[0][2]);
    let mut cfg = SolverConfig::default();
    cfg.max_iters = 1500;
    let t0 = Instant::now();
    let solved = bootstrap_solve(SystemId::Quadcopter, 19, &params, 1, &cfg, 31);
    println!(
        "bootstrap in {:.1}s -> {:?}",
        t0.elapsed().as_secs_f64(),
        solved[0].as_ref().map(|s| (s.objective, s.kkt_residual))
    );

    let seed = match &solved[0] {
        Some(s) => s,
        None => return,
    };
    let mut p2 = params[0].clone();
    p2[0] += 0.3;
    p2[1] -= 0.2;
    let ocp = Ocp::with_nodes(SystemId::Quadcopter, &p2, 19).unwrap();
    let t1 = Instant::now();
    let warm = solve(&ocp, &seed.trajectory, &cfg);
    println!(
        "warm in {:.2}s -> {:?} iters={} obj={:.3}",
        t1.elapsed().as_secs_f64(),
        warm.status,
        warm.iterations,
        warm.objective
    );

    // Per-piece timing at the converged point.
    let nlp = TranscribedNlp::new(&ocp, 0, cfg.fd_step, (cfg.tf_min, cfg.tf_max));
    let z = warm.trajectory.pack();
    let mut ev = nlp.alloc_eval();
    nlp.eval(&z, &mut ev);

    let reps = 50;
    let t = Instant::now();
    for _ in 0..reps {
        nlp.eval(&z, &mut ev);
    }
    println!("eval: {:.2} ms", t.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let t = Instant::now();
    for _ in 0..reps {
        let _ = nlp.values(&z);
    }
    println!("values: {:.2} ms", t.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let nv = z.len();
    let b = trajmoe::DMat::identity(nv, nv);
    let neg_ce = -&ev.c_eq;
    let mut in_b = DVec::zeros(ev.c_in.len());
    for i in 0..ev.c_in.len() {
        in_b[i] = -ev.c_in[i];
    }
    let t = Instant::now();
    for _ in 0..reps {
        let _ = solve_qp(&b, &ev.grad, &ev.j_eq, &neg_ce, &ev.j_in, &in_b);
    }
    println!("qp: {:.2} ms", t.elapsed().as_secs_f64() * 1e3 / reps as f64);

    let t = Instant::now();
    for _ in 0..reps {
        let mut padded = trajmoe::DMat::zeros(nv, nv);
        padded
            .view_mut((0, 0), (nv, ev.j_eq.nrows()))
            .copy_from(&ev.j_eq.transpose());
        let qr = padded.qr();
        let _ = qr.q();
    }
    println!("qr+q: {:.2} ms", t.elapsed().as_secs_f64() * 1e3 / reps as f64);
}
