//! Database generation: parameter sampling, multi-start bootstrap solving,
//! and nearest-neighbor warm-start expansion.

use super::{Dataset, Sample};
use crate::ocp::{Ocp, SystemId, Trajectory};
use crate::sqp::{solve, SolveStatus, SolverConfig};
use crate::DVec;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// How problem parameters are drawn from the box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum ParamMode {
    /// i.i.d. uniform over the parameter box.
    Random { count: usize },
    /// Tensor-product grid, one point count per parameter dimension,
    /// endpoints included. Row-major order, last dimension fastest.
    Grid(Vec<usize>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub mode: ParamMode,
    /// Problems solved by multi-start before expansion begins. Zero means
    /// a tenth of the total, which is enough seed coverage in practice.
    pub bootstrap: usize,
    /// Initial guesses per bootstrap problem, cycling winding targets.
    pub restarts: usize,
    /// Warm-start sources per expansion problem.
    pub knn: usize,
    /// Expansion problems solved against a frozen database per round.
    pub batch: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl GenerationConfig {
    pub fn new(mode: ParamMode, seed: u64) -> GenerationConfig {
        GenerationConfig {
            mode,
            bootstrap: 0,
            restarts: 6,
            knn: 5,
            batch: 256,
            seed,
            solver: SolverConfig::default(),
        }
    }
}

/// What happened during generation, kept for the manifest.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GenerationReport {
    pub attempted: usize,
    pub converged: usize,
    /// (index into the sampled parameter sequence, reason).
    pub dropped: Vec<(usize, String)>,
}

/// Candidate terminal windings worth trying from scratch. Systems without a
/// wrapped angle have a single homotopy class.
fn windings(system: SystemId) -> &'static [i64] {
    match system {
        SystemId::Pendulum | SystemId::Car => &[-1, 0, 1],
        SystemId::Quadcopter | SystemId::QuadcopterObstacle => &[0],
    }
}

/// Per-state-dimension scale used for guess noise: the parameter box span
/// where the dimension is parameter-controlled, a nominal span otherwise.
fn noise_spans(system: SystemId) -> Vec<f64> {
    use std::f64::consts::PI;
    match system {
        SystemId::Pendulum => vec![2.0 * PI, 4.0],
        SystemId::Car => vec![20.0, 20.0, 2.0 * PI, 6.2],
        SystemId::Quadcopter | SystemId::QuadcopterObstacle => {
            let mut s = vec![20.0; 3];
            s.extend(std::iter::repeat(2.0).take(9));
            s
        }
    }
}

/// Interpolated guess: states on the straight line from the start to the
/// winding's terminal target with +-20%-of-span uniform noise on interior
/// nodes, controls uniform within bounds, five seconds on the clock.
fn random_guess(ocp: &Ocp, winding: i64, rng: &mut ChaCha8Rng) -> Trajectory {
    let n = ocp.state_dim();
    let nn = ocp.n_nodes;
    let target = ocp.terminal_target(winding);
    let spans = noise_spans(ocp.system);
    let states: Vec<DVec> = (0..=nn)
        .map(|k| {
            let a = k as f64 / nn as f64;
            DVec::from_fn(n, |i, _| {
                let base = (1.0 - a) * ocp.x0[i] + a * target[i];
                if k == 0 || k == nn {
                    base
                } else {
                    base + rng.gen_range(-0.2..0.2) * spans[i]
                }
            })
        })
        .collect();
    let (lo, hi) = ocp.system.control_bounds();
    let controls: Vec<DVec> = (0..nn)
        .map(|_| DVec::from_fn(ocp.control_dim(), |j, _| rng.gen_range(lo[j]..hi[j])))
        .collect();
    Trajectory {
        t_f: 5.0,
        states,
        controls,
    }
}

/// Noise-free interpolated guess with a deterministic wiggle, for tests.
#[cfg(test)]
pub(crate) fn interp_guess_for_test(ocp: &Ocp, winding: i64, t_f: f64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = random_guess(ocp, winding, &mut rng);
    g.t_f = t_f;
    g
}

/// Draw parameters per `mode`, deterministically under `seed`.
pub fn sample_parameters(system: SystemId, mode: &ParamMode, seed: u64) -> Vec<DVec> {
    let boxes = system.param_box();
    match mode {
        ParamMode::Random { count } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..*count)
                .map(|_| {
                    DVec::from_iterator(
                        boxes.len(),
                        boxes.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)),
                    )
                })
                .collect()
        }
        ParamMode::Grid(counts) => {
            assert_eq!(
                counts.len(),
                boxes.len(),
                "grid needs one point count per parameter dimension"
            );
            let total: usize = counts.iter().product();
            (0..total)
                .map(|mut flat| {
                    let mut p = vec![0.0; boxes.len()];
                    for dim in (0..boxes.len()).rev() {
                        let c = counts[dim];
                        let idx = flat % c;
                        flat /= c;
                        let (lo, hi) = boxes[dim];
                        p[dim] = if c == 1 {
                            0.5 * (lo + hi)
                        } else {
                            lo + (hi - lo) * idx as f64 / (c - 1) as f64
                        };
                    }
                    DVec::from_vec(p)
                })
                .collect()
        }
    }
}

fn to_sample(ocp: &Ocp, params: &DVec, res: crate::sqp::SolveResult) -> Sample {
    // Inequality rows are control bounds, then the two t_f bounds, then one
    // sphere margin per node on obstacle systems.
    let sphere_multipliers = if ocp.system == SystemId::QuadcopterObstacle {
        let at = 2 * ocp.control_dim() * ocp.n_nodes + 2;
        Some(res.ineq_multipliers.rows(at, ocp.n_nodes + 1).clone_owned())
    } else {
        None
    };
    Sample {
        params: params.clone(),
        trajectory: res.trajectory,
        objective: res.objective,
        winding: res.winding,
        kkt_residual: res.kkt_residual,
        sphere_multipliers,
    }
}

fn better(best: &mut Option<Sample>, candidate: Sample) {
    if best.as_ref().map_or(true, |b| candidate.objective < b.objective) {
        *best = Some(candidate);
    }
}

/// Multi-start solve of each parameter: `restarts` random guesses cycling
/// the winding candidates, keeping the lowest-objective converged result.
/// `None` where nothing converged. Deterministic regardless of thread
/// schedule: every problem draws from its own seeded stream.
pub fn bootstrap_solve(
    system: SystemId,
    n_nodes: usize,
    params: &[DVec],
    restarts: usize,
    solver: &SolverConfig,
    seed: u64,
) -> Vec<Option<Sample>> {
    let ws = windings(system);
    params
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let ocp = Ocp::with_nodes(system, p, n_nodes).expect("in-box parameters");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut best: Option<Sample> = None;
            for r in 0..restarts.max(1) {
                let guess = random_guess(&ocp, ws[r % ws.len()], &mut rng);
                let res = solve(&ocp, &guess, solver);
                if res.status == SolveStatus::Converged {
                    better(&mut best, to_sample(&ocp, p, res));
                }
            }
            best
        })
        .collect()
}

fn box_normalized(system: SystemId, p: &DVec) -> DVec {
    let boxes = system.param_box();
    DVec::from_iterator(
        boxes.len(),
        boxes
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| (p[i] - lo) / (hi - lo)),
    )
}

/// Indices of the `k` stored samples nearest to `p`, by Euclidean distance
/// in box-normalized parameter coordinates (no data-dependent statistics,
/// so the metric is stable while the database grows).
fn nearest(db: &Dataset, p: &DVec, k: usize) -> Vec<usize> {
    let pn = box_normalized(db.system, p);
    let mut scored: Vec<(f64, usize)> = db
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| ((box_normalized(db.system, &s.params) - &pn).norm_squared(), i))
        .collect();
    scored.sort_by(|a, b| a.partial_cmp(b).unwrap());
    scored.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Warm-start expansion: solve each new parameter from the trajectories of
/// its nearest solved neighbors, appending the best converged result.
/// Batches run in parallel against a database frozen per round, so growth
/// order and results are deterministic.
pub fn knn_expand(
    db: &mut Dataset,
    new_params: &[DVec],
    k: usize,
    solver: &SolverConfig,
    batch: usize,
    report: &mut GenerationReport,
    index_offset: usize,
) {
    assert!(!db.is_empty(), "expansion needs a seeded database");
    let batch = batch.max(1);
    for (chunk_no, chunk) in new_params.chunks(batch).enumerate() {
        let solved: Vec<Option<Sample>> = chunk
            .par_iter()
            .map(|p| {
                let ocp =
                    Ocp::with_nodes(db.system, p, db.n_nodes).expect("in-box parameters");
                let mut best: Option<Sample> = None;
                for ni in nearest(db, p, k.max(1)) {
                    let res = solve(&ocp, &db.samples[ni].trajectory, solver);
                    if res.status == SolveStatus::Converged {
                        better(&mut best, to_sample(&ocp, p, res));
                    }
                }
                best
            })
            .collect();
        for (j, s) in solved.into_iter().enumerate() {
            report.attempted += 1;
            match s {
                Some(s) => {
                    report.converged += 1;
                    db.samples.push(s);
                }
                None => report.dropped.push((
                    index_offset + chunk_no * batch + j,
                    "no warm start converged".into(),
                )),
            }
        }
    }
}

fn config_hash(system: SystemId, n_nodes: usize, cfg: &GenerationConfig) -> String {
    let blob = serde_json::to_vec(&(system.name(), n_nodes, cfg)).expect("config serializes");
    let mut h = Sha256::new();
    h.update(&blob);
    format!("{:x}", h.finalize())
}

/// Full generation pass: sample parameters, bootstrap a seed subset by
/// multi-start, expand the rest by nearest-neighbor warm starts.
pub fn generate(system: SystemId, cfg: &GenerationConfig) -> (Dataset, GenerationReport) {
    let n_nodes = system.default_nodes();
    let params = sample_parameters(system, &cfg.mode, cfg.seed);
    let mut order: Vec<usize> = (0..params.len()).collect();
    super::shuffle(&mut order, cfg.seed ^ 0xb007);

    let n_boot = if cfg.bootstrap == 0 {
        (params.len() / 10).max(8).min(params.len())
    } else {
        cfg.bootstrap.min(params.len())
    };
    let boot_params: Vec<DVec> = order[..n_boot].iter().map(|&i| params[i].clone()).collect();
    let rest_params: Vec<DVec> = order[n_boot..].iter().map(|&i| params[i].clone()).collect();

    let mut db = Dataset::new(system, n_nodes);
    db.config_hash = config_hash(system, n_nodes, cfg);
    let mut report = GenerationReport::default();

    for (j, s) in bootstrap_solve(system, n_nodes, &boot_params, cfg.restarts, &cfg.solver, cfg.seed)
        .into_iter()
        .enumerate()
    {
        report.attempted += 1;
        match s {
            Some(s) => {
                report.converged += 1;
                db.samples.push(s);
            }
            None => report
                .dropped
                .push((j, "no bootstrap restart converged".into())),
        }
    }
    if db.is_empty() {
        return (db, report);
    }
    knn_expand(
        &mut db,
        &rest_params,
        cfg.knn,
        &cfg.solver,
        cfg.batch,
        &mut report,
        n_boot,
    );
    (db, report)
}

/// Obstacle-course database from an obstacle-free one: every free optimum
/// gets `per_trajectory` spheres sampled to intersect it (so the obstacle
/// actually binds), each solved warm-started from that free optimum.
/// Spheres swallowing the start or the goal are rejected during sampling;
/// those instances could never be feasible.
pub fn generate_obstacle(
    db_free: &Dataset,
    per_trajectory: usize,
    cfg: &GenerationConfig,
) -> (Dataset, GenerationReport) {
    assert_eq!(db_free.system, SystemId::Quadcopter, "free database expected");
    let system = SystemId::QuadcopterObstacle;
    let mut db = Dataset::new(system, db_free.n_nodes);
    db.config_hash = config_hash(system, db_free.n_nodes, cfg);
    let mut report = GenerationReport::default();

    let jobs: Vec<(usize, usize)> = (0..db_free.len())
        .flat_map(|i| (0..per_trajectory).map(move |j| (i, j)))
        .collect();
    let solved: Vec<(usize, Option<Sample>, Option<String>)> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let parent = &db_free.samples[i];
            let idx = i * per_trajectory + j;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0b57);
            rng.set_stream(idx as u64);
            let params = match sample_colliding_sphere(parent, &mut rng) {
                Some(p) => p,
                None => return (idx, None, Some("sphere rejection budget exhausted".into())),
            };
            let ocp = Ocp::with_nodes(system, &params, db_free.n_nodes).expect("valid sphere");
            let mut best: Option<Sample> = None;
            for attempt in 0..cfg.restarts.clamp(1, 3) {
                let guess = if attempt == 0 {
                    parent.trajectory.clone()
                } else {
                    wiggled(&parent.trajectory, &mut rng)
                };
                let res = solve(&ocp, &guess, &cfg.solver);
                if res.status == SolveStatus::Converged {
                    better(&mut best, to_sample(&ocp, &params, res));
                }
            }
            let err = if best.is_none() {
                Some("no warm start converged".into())
            } else {
                None
            };
            (idx, best, err)
        })
        .collect();
    for (idx, s, err) in solved {
        report.attempted += 1;
        match s {
            Some(s) => {
                report.converged += 1;
                db.samples.push(s);
            }
            None => report.dropped.push((idx, err.unwrap())),
        }
    }
    (db, report)
}

/// Sphere parameters [start, center, radius] whose ball contains a node of
/// the parent trajectory but keeps a clearance margin from both the start
/// point and the goal at the origin. `None` if the budget runs out (a very
/// short path wedged between start and goal can leave no room).
fn sample_colliding_sphere(parent: &Sample, rng: &mut ChaCha8Rng) -> Option<DVec> {
    let x0 = [parent.params[0], parent.params[1], parent.params[2]];
    let clearance = 0.5;
    for _ in 0..100 {
        let r = rng.gen_range(1.0..5.0);
        let node = rng.gen_range(0..parent.trajectory.states.len());
        let pos = &parent.trajectory.states[node];
        // Center uniform in the ball of radius 0.9 r around the node, so
        // the node is strictly inside the sphere.
        let offset = loop {
            let v = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let n2: f64 = v.iter().map(|a| a * a).sum();
            if n2 <= 1.0 {
                break v.map(|a| a * 0.9 * r);
            }
        };
        let c = [pos[0] + offset[0], pos[1] + offset[1], pos[2] + offset[2]];
        if c.iter().any(|&v| !(-10.0..=10.0).contains(&v)) {
            continue;
        }
        let dist = |a: &[f64; 3]| -> f64 {
            ((a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2) + (a[2] - c[2]).powi(2)).sqrt()
        };
        if dist(&x0) < r + clearance || dist(&[0.0, 0.0, 0.0]) < r + clearance {
            continue;
        }
        return Some(DVec::from_vec(vec![x0[0], x0[1], x0[2], c[0], c[1], c[2], r]));
    }
    None
}

/// Small state-noise copy of a trajectory, for retry guesses.
fn wiggled(traj: &Trajectory, rng: &mut ChaCha8Rng) -> Trajectory {
    let mut t = traj.clone();
    for x in &mut t.states[1..] {
        for v in x.iter_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_two_by_two_hits_the_corners() {
        let params = sample_parameters(SystemId::Pendulum, &ParamMode::Grid(vec![2, 2]), 0);
        use std::f64::consts::PI;
        let got: Vec<(f64, f64)> = params.iter().map(|p| (p[0], p[1])).collect();
        assert_eq!(
            got,
            vec![(-PI, -2.0), (-PI, 2.0), (PI, -2.0), (PI, 2.0)]
        );
    }

    #[test]
    fn pendulum_grid_has_expected_size_and_stays_in_box() {
        let params = sample_parameters(SystemId::Pendulum, &ParamMode::Grid(vec![61, 21]), 0);
        assert_eq!(params.len(), 1281);
        for p in &params {
            assert!(p[0].abs() <= std::f64::consts::PI + 1e-12);
            assert!(p[1].abs() <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn random_parameters_are_seed_reproducible() {
        let a = sample_parameters(SystemId::Car, &ParamMode::Random { count: 40 }, 9);
        let b = sample_parameters(SystemId::Car, &ParamMode::Random { count: 40 }, 9);
        let c = sample_parameters(SystemId::Car, &ParamMode::Random { count: 40 }, 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let boxes = SystemId::Car.param_box();
        for p in &a {
            for (i, &(lo, hi)) in boxes.iter().enumerate() {
                assert!(p[i] >= lo && p[i] <= hi);
            }
        }
    }

    #[test]
    fn bootstrap_converges_on_most_pendulum_problems() {
        let params = sample_parameters(SystemId::Pendulum, &ParamMode::Random { count: 30 }, 5);
        let solved = bootstrap_solve(
            SystemId::Pendulum,
            24,
            &params,
            6,
            &SolverConfig::default(),
            5,
        );
        let ok = solved.iter().filter(|s| s.is_some()).count();
        assert!(ok >= 27, "only {ok}/30 bootstrap problems converged");
    }

    #[test]
    fn warm_start_at_stored_parameter_reproduces_its_objective() {
        let params = sample_parameters(SystemId::Pendulum, &ParamMode::Random { count: 6 }, 21);
        let solved = bootstrap_solve(
            SystemId::Pendulum,
            24,
            &params,
            6,
            &SolverConfig::default(),
            21,
        );
        let mut db = Dataset::new(SystemId::Pendulum, 24);
        for s in solved.into_iter().flatten() {
            db.samples.push(s);
        }
        assert!(db.len() >= 4);
        let stored = db.samples[0].clone();
        let mut report = GenerationReport::default();
        knn_expand(
            &mut db,
            &[stored.params.clone()],
            1,
            &SolverConfig::default(),
            8,
            &mut report,
            0,
        );
        let new = db.samples.last().unwrap();
        assert!(
            (new.objective - stored.objective).abs() <= 1e-6,
            "warm start at an optimum moved J by {}",
            (new.objective - stored.objective).abs()
        );
    }

    #[test]
    fn knn_clamps_k_to_database_size() {
        let db = {
            let params = sample_parameters(SystemId::Pendulum, &ParamMode::Random { count: 3 }, 2);
            let solved =
                bootstrap_solve(SystemId::Pendulum, 24, &params, 6, &SolverConfig::default(), 2);
            let mut db = Dataset::new(SystemId::Pendulum, 24);
            for s in solved.into_iter().flatten() {
                db.samples.push(s);
            }
            db
        };
        let p = DVec::from_vec(vec![0.1, 0.1]);
        let ids = nearest(&db, &p, 50);
        assert_eq!(ids.len(), db.len());
    }

    #[test]
    fn small_generation_run_is_bit_reproducible() {
        let cfg = GenerationConfig {
            bootstrap: 4,
            restarts: 4,
            ..GenerationConfig::new(ParamMode::Random { count: 12 }, 77)
        };
        let (a, ra) = generate(SystemId::Pendulum, &cfg);
        let (b, rb) = generate(SystemId::Pendulum, &cfg);
        assert_eq!(a.len(), b.len());
        assert_eq!(ra.dropped, rb.dropped);
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert_eq!(sa.trajectory.pack(), sb.trajectory.pack());
            assert_eq!(sa.objective.to_bits(), sb.objective.to_bits());
        }
        assert!(!a.config_hash.is_empty());
    }

    #[test]
    fn colliding_spheres_intersect_parent_and_spare_endpoints() {
        let params = sample_parameters(SystemId::Quadcopter, &ParamMode::Random { count: 2 }, 31);
        let solved =
            bootstrap_solve(SystemId::Quadcopter, 19, &params, 3, &SolverConfig::default(), 31);
        let mut free = Dataset::new(SystemId::Quadcopter, 19);
        for s in solved.into_iter().flatten() {
            free.samples.push(s);
        }
        assert!(!free.is_empty(), "no free quadcopter problem converged");
        let parent = &free.samples[0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = sample_colliding_sphere(parent, &mut rng).unwrap();
            let (c, r) = ([p[3], p[4], p[5]], p[6]);
            assert!((1.0..=5.0).contains(&r));
            let min_margin = parent
                .trajectory
                .states
                .iter()
                .map(|x| {
                    ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt()
                        - r
                })
                .fold(f64::INFINITY, f64::min);
            assert!(min_margin < 0.0, "sphere misses the parent trajectory");
            let d0 = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt();
            let dg = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            assert!(d0 >= r + 0.5 - 1e-12 && dg >= r + 0.5 - 1e-12);
        }
    }
}
