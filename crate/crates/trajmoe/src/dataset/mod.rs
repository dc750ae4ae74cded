//! Solved-problem databases: pairs of problem parameters and the optimal
//! trajectories found for them, with splitting, standardization, and
//! generation built on the `sqp` solver.
//!
//! A database is grown in two phases. A bootstrap subset is solved by
//! multi-start (interpolated guesses with noise, cycling through candidate
//! winding targets); the remainder is solved by warm-starting from the
//! trajectories of already-solved nearest neighbors in parameter space,
//! which is much cheaper and follows solution branches continuously.

mod gen;
mod io;

pub use gen::{
    bootstrap_solve, generate, generate_obstacle, knn_expand, sample_parameters,
    GenerationConfig, GenerationReport, ParamMode,
};
pub use io::{load_dataset, load_manifest, save_dataset, save_manifest, Manifest};

use crate::ocp::{Ocp, SystemId, Trajectory};
use crate::sqp::rk4::rk4_step;
use crate::DVec;

/// One solved problem: the parameter and the best optimum found for it.
#[derive(Clone, Debug)]
pub struct Sample {
    pub params: DVec,
    pub trajectory: Trajectory,
    pub objective: f64,
    pub winding: i64,
    pub kkt_residual: f64,
    /// Obstacle systems only: the sphere-margin multiplier per node, used
    /// downstream to tell which side of the obstacle the solution passes.
    pub sphere_multipliers: Option<DVec>,
}

/// Per-dimension affine normalization for parameters (model inputs) and
/// packed trajectories (model targets). Fitted on training data only.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(from = "StandardizationRecord", into = "StandardizationRecord")]
pub struct Standardization {
    pub param_mean: DVec,
    pub param_std: DVec,
    pub target_mean: DVec,
    pub target_std: DVec,
}

/// Plain-vector serialization shape for [`Standardization`].
#[derive(serde::Serialize, serde::Deserialize)]
struct StandardizationRecord {
    param_mean: Vec<f64>,
    param_std: Vec<f64>,
    target_mean: Vec<f64>,
    target_std: Vec<f64>,
}

impl From<Standardization> for StandardizationRecord {
    fn from(s: Standardization) -> Self {
        StandardizationRecord {
            param_mean: s.param_mean.iter().copied().collect(),
            param_std: s.param_std.iter().copied().collect(),
            target_mean: s.target_mean.iter().copied().collect(),
            target_std: s.target_std.iter().copied().collect(),
        }
    }
}

impl From<StandardizationRecord> for Standardization {
    fn from(r: StandardizationRecord) -> Self {
        Standardization {
            param_mean: DVec::from_vec(r.param_mean),
            param_std: DVec::from_vec(r.param_std),
            target_mean: DVec::from_vec(r.target_mean),
            target_std: DVec::from_vec(r.target_std),
        }
    }
}

impl Standardization {
    /// Mean and standard deviation per dimension. Dimensions with no spread
    /// (e.g. a control saturated across the whole set) get a unit scale so
    /// they pass through unchanged instead of exploding.
    pub fn fit(samples: &[Sample]) -> Standardization {
        let (pm, ps) = moments(samples.iter().map(|s| s.params.clone()));
        let (tm, ts) = moments(samples.iter().map(|s| s.trajectory.pack()));
        Standardization {
            param_mean: pm,
            param_std: ps,
            target_mean: tm,
            target_std: ts,
        }
    }

    pub fn standardize_params(&self, p: &DVec) -> DVec {
        p.zip_zip_map(&self.param_mean, &self.param_std, |v, m, s| (v - m) / s)
    }

    pub fn standardize_target(&self, z: &DVec) -> DVec {
        z.zip_zip_map(&self.target_mean, &self.target_std, |v, m, s| (v - m) / s)
    }

    pub fn destandardize_target(&self, z: &DVec) -> DVec {
        z.zip_zip_map(&self.target_mean, &self.target_std, |v, m, s| v * s + m)
    }
}

fn moments<I: Iterator<Item = DVec> + Clone>(values: I) -> (DVec, DVec) {
    let mut count = 0usize;
    let mut mean: Option<DVec> = None;
    for v in values.clone() {
        match &mut mean {
            None => mean = Some(v),
            Some(m) => *m += v,
        }
        count += 1;
    }
    let mut mean = mean.expect("moments of an empty set");
    mean /= count as f64;
    let mut var = DVec::zeros(mean.len());
    for v in values {
        var += (v - &mean).map(|d| d * d);
    }
    var /= count as f64;
    let std = var.map(|v| {
        let s = v.sqrt();
        if s < 1e-8 {
            1.0
        } else {
            s
        }
    });
    (mean, std)
}

/// A set of solved problems for one system, all on the same node count.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub system: SystemId,
    pub n_nodes: usize,
    pub samples: Vec<Sample>,
    /// Present after [`Dataset::split`]; both halves carry the train fit.
    pub standardization: Option<Standardization>,
    /// Hash of the generation configuration, for provenance checks.
    pub config_hash: String,
}

impl Dataset {
    pub fn new(system: SystemId, n_nodes: usize) -> Dataset {
        Dataset {
            system,
            n_nodes,
            samples: Vec::new(),
            standardization: None,
            config_hash: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Seeded shuffle, then `floor(ratio * n)` samples to the train half.
    /// Standardization is fitted on the train half and attached to both.
    pub fn split(&self, ratio: f64, seed: u64) -> (Dataset, Dataset) {
        assert!(ratio > 0.0 && ratio < 1.0, "split ratio must be in (0, 1)");
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        shuffle(&mut order, seed);
        let n_train = ((self.samples.len() as f64) * ratio).floor() as usize;
        let make = |idx: &[usize]| Dataset {
            system: self.system,
            n_nodes: self.n_nodes,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            standardization: None,
            config_hash: self.config_hash.clone(),
        };
        let mut train = make(&order[..n_train]);
        let mut test = make(&order[n_train..]);
        let stats = Standardization::fit(&train.samples);
        train.standardization = Some(stats.clone());
        test.standardization = Some(stats);
        (train, test)
    }

    /// Worst defect residual and worst objective mismatch over all samples
    /// when trajectories are re-integrated and costs re-accumulated. Both
    /// should be tiny for a database of converged solutions.
    pub fn replay_residuals(&self) -> (f64, f64) {
        let mut worst_defect = 0.0_f64;
        let mut worst_obj = 0.0_f64;
        for s in &self.samples {
            let ocp = Ocp::with_nodes(self.system, &s.params, self.n_nodes)
                .expect("stored sample has valid parameters");
            let h = s.trajectory.step();
            let mut j = 0.0;
            for k in 0..self.n_nodes {
                let x = &s.trajectory.states[k];
                let u = &s.trajectory.controls[k];
                let next = rk4_step(|x, u| ocp.dynamics(x, u), x, u, h);
                worst_defect = worst_defect.max((&s.trajectory.states[k + 1] - next).amax());
                j += ocp.running_cost(x, u) * h;
            }
            worst_obj = worst_obj.max((j - s.objective).abs());
        }
        (worst_defect, worst_obj)
    }
}

/// Fisher-Yates with a tiny splitmix-style generator; self-contained so the
/// split permutation never silently changes with an RNG crate version.
pub(crate) fn shuffle(order: &mut [usize], seed: u64) {
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    let mut next = move || {
        state ^= state >> 30;
        state = state.wrapping_mul(0xbf58476d1ce4e5b9);
        state ^= state >> 27;
        state = state.wrapping_mul(0x94d049bb133111eb);
        state ^= state >> 31;
        state
    };
    for i in (1..order.len()).rev() {
        let j = (next() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
}
