//! Partitioning a solved-problem database into groups across which the
//! parameter-to-solution map is expected to be continuous.
//!
//! Four strategies: k-means on standardized trajectory vectors, grouping by
//! the final angle's winding, the ground vehicle's angle-and-direction
//! refinement, and octants of the obstacle-contact direction. Each returns
//! a [`ClusterAssignment`] aligned to the dataset's sample order.

use crate::dataset::{Dataset, Sample, Standardization};
use crate::error::Error;
use crate::ocp::SystemId;
use crate::DVec;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Per-sample cluster labels, densely numbered 0..r with no empty cluster.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub r: usize,
    /// What produced this assignment, including its parameters.
    pub method: String,
    pub sizes: Vec<usize>,
    /// Indices of samples whose feature was degenerate (e.g. a symmetric
    /// obstacle contact averaging to a zero direction); they still carry a
    /// valid label, assigned by nearest centroid.
    pub degenerate: Vec<usize>,
}

impl ClusterAssignment {
    /// Build from raw labels by compacting label values to a dense 0..r
    /// range (ordered by raw value) and tallying sizes.
    fn from_raw<T: Ord + Copy>(raw: &[T], method: String, degenerate: Vec<usize>) -> Self {
        let mut ids = BTreeMap::new();
        for &v in raw {
            let next = ids.len();
            ids.entry(v).or_insert(next);
        }
        let labels: Vec<usize> = raw.iter().map(|v| ids[v]).collect();
        let r = ids.len();
        let mut sizes = vec![0usize; r];
        for &l in &labels {
            sizes[l] += 1;
        }
        ClusterAssignment {
            labels,
            r,
            method,
            sizes,
            degenerate,
        }
    }

    pub fn save(&self, path: &Path, overwrite: bool) -> Result<(), Error> {
        if !overwrite && path.exists() {
            return Err(Error::WouldOverwrite(path.display().to_string()));
        }
        let text = serde_json::to_string_pretty(self).expect("assignment serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<ClusterAssignment, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let a: ClusterAssignment = serde_json::from_str(&text).map_err(|e| Error::Format {
            what: "cluster assignment",
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        if a.labels.iter().any(|&l| l >= a.r) || a.sizes.iter().sum::<usize>() != a.labels.len()
        {
            return Err(Error::Format {
                what: "cluster assignment",
                path: path.display().to_string(),
                detail: "labels, r, and sizes are inconsistent".into(),
            });
        }
        Ok(a)
    }
}

/// Standardized packed trajectories (t_f included), the vector space the
/// k-means strategy clusters in. Uses the dataset's attached normalization
/// when present, otherwise fits one on the dataset itself.
pub fn trajectory_vectors(db: &Dataset) -> Vec<DVec> {
    let st = db
        .standardization
        .clone()
        .unwrap_or_else(|| Standardization::fit(&db.samples));
    db.samples
        .iter()
        .map(|s| st.standardize_target(&s.trajectory.pack()))
        .collect()
}

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` runs by
/// inertia. Deterministic under `seed`. A cluster emptied during a Lloyd
/// step is re-seeded on the point farthest from its center, so returned
/// assignments never contain an empty cluster.
pub fn kmeans(
    vectors: &[DVec],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<(ClusterAssignment, Vec<DVec>), Error> {
    if k == 0 || k > vectors.len() {
        return Err(Error::invalid(format!(
            "k-means needs 1 <= k <= {} points, got k={k}",
            vectors.len()
        )));
    }
    let mut best: Option<(f64, Vec<usize>, Vec<DVec>)> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let (inertia, labels, centers) = lloyd(vectors, k, &mut rng);
        if best.as_ref().map_or(true, |(bi, _, _)| inertia < *bi) {
            best = Some((inertia, labels, centers));
        }
    }
    let (_, labels, centers) = best.unwrap();
    let assignment = ClusterAssignment::from_raw(
        &labels,
        format!("kmeans-{k} (standardized trajectory vectors incl t_f)"),
        vec![],
    );
    Ok((assignment, centers))
}

fn lloyd(vectors: &[DVec], k: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>, Vec<DVec>) {
    let mut centers = plus_plus_seed(vectors, k, rng);
    let mut labels = vec![0usize; vectors.len()];
    let mut last_inertia = f64::INFINITY;
    loop {
        let mut inertia = 0.0;
        for (i, v) in vectors.iter().enumerate() {
            let (l, d2) = nearest_center(v, &centers);
            labels[i] = l;
            inertia += d2;
        }
        assert!(
            inertia <= last_inertia * (1.0 + 1e-12) + 1e-12,
            "k-means inertia increased: {last_inertia} -> {inertia}"
        );
        let mut sums: Vec<DVec> = vec![DVec::zeros(vectors[0].len()); k];
        let mut counts = vec![0usize; k];
        for (v, &l) in vectors.iter().zip(&labels) {
            sums[l] += v;
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an emptied cluster on the point farthest from its
                // current assignment's center.
                let far = (0..vectors.len())
                    .max_by(|&a, &b| {
                        let da = (&vectors[a] - &centers[labels[a]]).norm_squared();
                        let db = (&vectors[b] - &centers[labels[b]]).norm_squared();
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centers[c] = vectors[far].clone();
            } else {
                centers[c] = &sums[c] / counts[c] as f64;
            }
        }
        if (last_inertia - inertia).abs() <= 1e-12 * (1.0 + inertia) {
            return (inertia, labels, centers);
        }
        last_inertia = inertia;
    }
}

fn nearest_center(v: &DVec, centers: &[DVec]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d2 = (v - center).norm_squared();
        if d2 < best.1 {
            best = (c, d2);
        }
    }
    best
}

/// k-means++ seeding: first center uniform, each next drawn with
/// probability proportional to squared distance from the chosen set.
fn plus_plus_seed(vectors: &[DVec], k: usize, rng: &mut ChaCha8Rng) -> Vec<DVec> {
    let mut centers = Vec::with_capacity(k);
    centers.push(vectors[rng.gen_range(0..vectors.len())].clone());
    let mut d2: Vec<f64> = vectors
        .iter()
        .map(|v| (v - &centers[0]).norm_squared())
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All points coincide with chosen centers; any point works.
            rng.gen_range(0..vectors.len())
        } else {
            let mut t = rng.gen_range(0.0..total);
            let mut pick = vectors.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if t < w {
                    pick = i;
                    break;
                }
                t -= w;
            }
            pick
        };
        centers.push(vectors[next].clone());
        for (i, v) in vectors.iter().enumerate() {
            d2[i] = d2[i].min((v - centers.last().unwrap()).norm_squared());
        }
    }
    centers
}

/// Winding label for one final angle: how many full turns it sits from the
/// goal angle. Insensitive to shifting the goal by whole turns, since that
/// shifts every label equally and labels are compacted order-preserving.
fn winding_label(theta_f: f64, theta_goal: f64) -> i64 {
    ((theta_f - theta_goal) / (2.0 * std::f64::consts::PI)).round() as i64
}

/// Group samples by the winding of the final angle at `angle_index`.
pub fn cluster_by_final_angle(db: &Dataset, angle_index: usize) -> Result<ClusterAssignment, Error> {
    let goal = db.system.goal_state();
    if angle_index >= goal.len() || db.system.angle_index() != Some(angle_index) {
        return Err(Error::invalid(format!(
            "{} has no wrapped angle at state index {angle_index}",
            db.system.name()
        )));
    }
    let mut raw = Vec::with_capacity(db.len());
    for (i, s) in db.samples.iter().enumerate() {
        let theta_f = s.trajectory.states.last().expect("nonempty trajectory")[angle_index];
        if !theta_f.is_finite() {
            return Err(Error::invalid(format!("non-finite final angle in sample {i}")));
        }
        raw.push(winding_label(theta_f, goal[angle_index]));
    }
    Ok(ClusterAssignment::from_raw(
        &raw,
        "final-angle".into(),
        vec![],
    ))
}

/// Ground vehicle refinement: final-angle winding crossed with the travel
/// direction, read off as the sign of the velocity value with the largest
/// magnitude along the trajectory (the mean can vanish on near-symmetric
/// maneuvers). Empty combinations are compacted away.
pub fn cluster_car_custom(db: &Dataset) -> Result<ClusterAssignment, Error> {
    if db.system != SystemId::Car {
        return Err(Error::invalid(format!(
            "angle-and-direction clustering is a ground vehicle strategy, got {}",
            db.system.name()
        )));
    }
    let goal = db.system.goal_state();
    let mut raw = Vec::with_capacity(db.len());
    for s in &db.samples {
        let w = winding_label(s.trajectory.states.last().unwrap()[2], goal[2]);
        let dominant = s
            .trajectory
            .states
            .iter()
            .map(|x| x[3])
            .max_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
            .unwrap();
        raw.push((w, dominant >= 0.0));
    }
    Ok(ClusterAssignment::from_raw(
        &raw,
        "car-custom (final angle x travel direction)".into(),
        vec![],
    ))
}

/// Obstacle-contact direction of one sample: multiplier-weighted mean of
/// the unit vectors from the sphere center to each node whose margin
/// constraint is active, normalized to unit length. Zero when no node is
/// active or opposing contacts cancel.
pub fn obstacle_feature(sample: &Sample, activation_tol: f64) -> DVec {
    let c = [sample.params[3], sample.params[4], sample.params[5]];
    let radius = sample.params[6];
    let mults = sample
        .sphere_multipliers
        .as_ref()
        .expect("obstacle sample carries sphere multipliers");
    let mut dir = DVec::zeros(3);
    for (k, x) in sample.trajectory.states.iter().enumerate() {
        let d = DVec::from_vec(vec![x[0] - c[0], x[1] - c[1], x[2] - c[2]]);
        let margin = d.norm() - radius;
        if margin <= activation_tol || mults[k] >= activation_tol {
            dir += d.normalize() * mults[k];
        }
    }
    let n = dir.norm();
    if n > 0.0 {
        dir /= n;
    }
    dir
}

/// Octant code of a direction's sign pattern; zero components count as
/// nonnegative. A bijection from sign patterns onto 0..8.
pub fn octant_of(direction: &DVec) -> usize {
    (direction[0] >= 0.0) as usize
        + 2 * ((direction[1] >= 0.0) as usize)
        + 4 * ((direction[2] >= 0.0) as usize)
}

/// Group obstacle samples by the octant of their contact direction.
/// Degenerate zero directions are assigned to the nearest octant centroid
/// and logged. Unused octants are compacted away.
pub fn cluster_by_octant(db: &Dataset, activation_tol: f64) -> Result<ClusterAssignment, Error> {
    if db.system != SystemId::QuadcopterObstacle {
        return Err(Error::invalid(format!(
            "octant clustering needs obstacle data, got {}",
            db.system.name()
        )));
    }
    let features: Vec<DVec> = db
        .samples
        .iter()
        .map(|s| obstacle_feature(s, activation_tol))
        .collect();
    let mut raw: Vec<i64> = Vec::with_capacity(features.len());
    let mut degenerate = Vec::new();
    let mut centroid_sum = vec![DVec::zeros(3); 8];
    let mut centroid_n = vec![0usize; 8];
    for (i, f) in features.iter().enumerate() {
        if f.norm() == 0.0 {
            degenerate.push(i);
            raw.push(-1);
        } else {
            let o = octant_of(f);
            centroid_sum[o] += f;
            centroid_n[o] += 1;
            raw.push(o as i64);
        }
    }
    if raw.iter().all(|&v| v < 0) {
        return Err(Error::invalid(
            "every obstacle feature is degenerate; nothing to cluster on",
        ));
    }
    let centroids: Vec<Option<DVec>> = (0..8)
        .map(|o| (centroid_n[o] > 0).then(|| &centroid_sum[o] / centroid_n[o] as f64))
        .collect();
    for &i in &degenerate {
        let f = &features[i];
        let o = (0..8)
            .filter_map(|o| centroids[o].as_ref().map(|c| (o, (f - c).norm_squared())))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0;
        raw[i] = o as i64;
    }
    Ok(ClusterAssignment::from_raw(
        &raw,
        format!("octant-8 (activation tol {activation_tol:.0e})"),
        degenerate,
    ))
}

/// Split a dataset into one sub-dataset per cluster, preserving sample
/// order and sharing the parent's normalization and provenance.
pub fn partition_dataset(db: &Dataset, assignment: &ClusterAssignment) -> Result<Vec<Dataset>, Error> {
    if assignment.labels.len() != db.len() {
        return Err(Error::invalid(format!(
            "assignment covers {} samples, dataset holds {}",
            assignment.labels.len(),
            db.len()
        )));
    }
    let mut parts: Vec<Dataset> = (0..assignment.r)
        .map(|_| {
            let mut d = Dataset::new(db.system, db.n_nodes);
            d.standardization = db.standardization.clone();
            d.config_hash = db.config_hash.clone();
            d
        })
        .collect();
    for (s, &l) in db.samples.iter().zip(&assignment.labels) {
        parts[l].samples.push(s.clone());
    }
    debug_assert!(parts.iter().all(|p| !p.is_empty()));
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::Trajectory;
    use std::f64::consts::PI;

    fn pendulum_sample(theta_f: f64) -> Sample {
        let states = (0..=4)
            .map(|k| DVec::from_vec(vec![theta_f * k as f64 / 4.0, 0.0]))
            .collect();
        let controls = (0..4).map(|_| DVec::from_vec(vec![0.2])).collect();
        Sample {
            params: DVec::from_vec(vec![0.0, 0.0]),
            trajectory: Trajectory {
                t_f: 5.0,
                states,
                controls,
            },
            objective: 1.0,
            winding: 0,
            kkt_residual: 1e-9,
            sphere_multipliers: None,
        }
    }

    #[test]
    fn kmeans_separates_two_far_clouds_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut vectors = Vec::new();
        for i in 0..60 {
            let center = if i < 30 { -50.0 } else { 50.0 };
            vectors.push(DVec::from_fn(3, |_, _| center + rng.gen_range(-1.0..1.0)));
        }
        let (a, centers) = kmeans(&vectors, 2, 0, 5).unwrap();
        assert_eq!(a.r, 2);
        assert_eq!(a.sizes, vec![30, 30]);
        let first = a.labels[0];
        assert!(a.labels[..30].iter().all(|&l| l == first));
        assert!(a.labels[30..].iter().all(|&l| l != first));
        assert_eq!(centers.len(), 2);
    }

    #[test]
    fn kmeans_with_k_equal_to_count_gives_singletons() {
        let vectors: Vec<DVec> = (0..7)
            .map(|i| DVec::from_vec(vec![i as f64 * 10.0]))
            .collect();
        let (a, _) = kmeans(&vectors, 7, 1, 3).unwrap();
        assert_eq!(a.sizes, vec![1; 7]);
    }

    #[test]
    fn kmeans_rejects_k_larger_than_point_count() {
        let vectors: Vec<DVec> = (0..3).map(|_| DVec::zeros(2)).collect();
        assert!(kmeans(&vectors, 4, 0, 1).is_err());
    }

    #[test]
    fn kmeans_is_deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vectors: Vec<DVec> = (0..40)
            .map(|_| DVec::from_fn(4, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let (a, ca) = kmeans(&vectors, 3, 11, 4).unwrap();
        let (b, cb) = kmeans(&vectors, 3, 11, 4).unwrap();
        assert_eq!(a.labels, b.labels);
        for (x, y) in ca.iter().zip(&cb) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn final_angle_groups_windings_and_ignores_goal_turns() {
        // Three pendulum goals one turn apart: labels must be distinct and
        // ordered, and shifting the goal by whole turns must not change
        // the grouping.
        let thetas = [PI, PI, 3.0 * PI, -PI, PI, 3.0 * PI];
        let labels: Vec<i64> = thetas.iter().map(|&t| winding_label(t, PI)).collect();
        assert_eq!(labels, vec![0, 0, 1, -1, 0, 1]);
        let shifted: Vec<i64> = thetas
            .iter()
            .map(|&t| winding_label(t, PI + 4.0 * PI))
            .collect();
        let delta: Vec<i64> = labels.iter().zip(&shifted).map(|(a, b)| a - b).collect();
        assert!(delta.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn pendulum_final_angle_assignment_matches_goal_grouping() {
        let mut db = Dataset::new(SystemId::Pendulum, 4);
        let finals = [PI, 3.0 * PI, -PI, PI, -PI, PI + 0.3];
        for &t in &finals {
            db.samples.push(pendulum_sample(t));
        }
        let a = cluster_by_final_angle(&db, 0).unwrap();
        assert_eq!(a.r, 3);
        assert_eq!(a.sizes.iter().sum::<usize>(), db.len());
        // Same label exactly when final angles agree up to rounding to the
        // same goal turn.
        for i in 0..finals.len() {
            for j in 0..finals.len() {
                let same_goal = winding_label(finals[i], PI) == winding_label(finals[j], PI);
                assert_eq!(a.labels[i] == a.labels[j], same_goal);
            }
        }
    }

    #[test]
    fn final_angle_needs_a_wrapped_angle() {
        let db = Dataset::new(SystemId::Quadcopter, 4);
        assert!(cluster_by_final_angle(&db, 0).is_err());
    }

    fn car_sample(theta_f: f64, v: f64) -> Sample {
        let states = (0..=4)
            .map(|k| DVec::from_vec(vec![0.0, 0.0, theta_f * k as f64 / 4.0, v]))
            .collect();
        let controls = (0..4).map(|_| DVec::from_vec(vec![0.0, 0.0])).collect();
        Sample {
            params: DVec::from_vec(vec![0.0, 0.0, 0.0, 0.0]),
            trajectory: Trajectory {
                t_f: 5.0,
                states,
                controls,
            },
            objective: 1.0,
            winding: 0,
            kkt_residual: 1e-9,
            sphere_multipliers: None,
        }
    }

    #[test]
    fn car_custom_crosses_winding_with_travel_direction() {
        let mut db = Dataset::new(SystemId::Car, 4);
        for (t, v) in [
            (0.0, 1.0),
            (0.0, -1.0),
            (2.0 * PI, 1.0),
            (2.0 * PI, -1.0),
            (-2.0 * PI, 1.0),
            (-2.0 * PI, -1.0),
        ] {
            db.samples.push(car_sample(t, v));
        }
        let a = cluster_car_custom(&db).unwrap();
        assert_eq!(a.r, 6);
        assert_eq!(a.sizes, vec![1; 6]);
    }

    #[test]
    fn dominant_velocity_decides_direction_not_the_mean() {
        // Velocity profile mostly small positive with one large negative
        // spike: mean is positive, dominant value is negative.
        let mut s = car_sample(0.0, 0.5);
        s.trajectory.states[2][3] = -3.0;
        let mut db = Dataset::new(SystemId::Car, 4);
        db.samples.push(s);
        db.samples.push(car_sample(0.0, 0.5));
        let a = cluster_car_custom(&db).unwrap();
        assert_eq!(a.r, 2);
        assert_ne!(a.labels[0], a.labels[1]);
    }

    fn obstacle_sample(contacts: &[(DVec, f64)]) -> Sample {
        // Sphere of radius 1 at the origin; contact nodes sit on its
        // surface along the given directions with the given multipliers.
        let mut states = Vec::new();
        let mut mults = Vec::new();
        for (dir, w) in contacts {
            let mut x = DVec::zeros(12);
            x[0] = dir[0];
            x[1] = dir[1];
            x[2] = dir[2];
            states.push(x);
            mults.push(*w);
        }
        // Pad to 5 nodes with far-away inactive states.
        while states.len() < 5 {
            let mut x = DVec::zeros(12);
            x[0] = 8.0;
            states.push(x);
            mults.push(0.0);
        }
        let controls = (0..4).map(|_| DVec::zeros(4)).collect();
        Sample {
            params: DVec::from_vec(vec![5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            trajectory: Trajectory {
                t_f: 5.0,
                states,
                controls,
            },
            objective: 1.0,
            winding: 0,
            kkt_residual: 1e-9,
            sphere_multipliers: Some(DVec::from_vec(mults)),
        }
    }

    #[test]
    fn contact_direction_is_multiplier_weighted_and_unit() {
        let s = obstacle_sample(&[
            (DVec::from_vec(vec![1.0, 0.0, 0.0]), 3.0),
            (DVec::from_vec(vec![0.0, 1.0, 0.0]), 1.0),
        ]);
        let f = obstacle_feature(&s, 1e-4);
        let expect = DVec::from_vec(vec![3.0, 1.0, 0.0]).normalize();
        assert!((f - expect).norm() < 1e-12);
    }

    #[test]
    fn opposing_equal_contacts_cancel_to_zero() {
        let s = obstacle_sample(&[
            (DVec::from_vec(vec![0.0, 0.0, 1.0]), 2.0),
            (DVec::from_vec(vec![0.0, 0.0, -1.0]), 2.0),
        ]);
        let f = obstacle_feature(&s, 1e-4);
        assert_eq!(f.norm(), 0.0);
    }

    #[test]
    fn octant_encoding_is_a_sign_bijection() {
        let mut seen = [false; 8];
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let o = octant_of(&DVec::from_vec(vec![sx, sy, sz]));
                    assert!(o < 8);
                    assert!(!seen[o], "octant {o} hit twice");
                    seen[o] = true;
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(octant_of(&DVec::from_vec(vec![1.0, 1.0, 1.0])), 7);
        assert_eq!(octant_of(&DVec::from_vec(vec![-1.0, -1.0, -1.0])), 0);
        assert_eq!(octant_of(&DVec::from_vec(vec![1.0, -1.0, 1.0])), 5);
    }

    #[test]
    fn octant_clustering_logs_and_places_degenerates() {
        let mut db = Dataset::new(SystemId::QuadcopterObstacle, 4);
        db.samples
            .push(obstacle_sample(&[(DVec::from_vec(vec![1.0, 0.0, 0.0]), 1.0)]));
        db.samples
            .push(obstacle_sample(&[(DVec::from_vec(vec![0.9, 0.1, 0.0]), 1.0)]));
        db.samples.push(obstacle_sample(&[
            (DVec::from_vec(vec![0.0, 0.0, 1.0]), 2.0),
            (DVec::from_vec(vec![0.0, 0.0, -1.0]), 2.0),
        ]));
        let a = cluster_by_octant(&db, 1e-4).unwrap();
        assert_eq!(a.degenerate, vec![2]);
        assert_eq!(a.r, 1, "all three land in the +x octant after rescue");
        assert_eq!(a.sizes, vec![3]);
    }

    #[test]
    fn partition_preserves_order_and_normalization() {
        let mut db = Dataset::new(SystemId::Pendulum, 4);
        for &t in &[PI, 3.0 * PI, PI, -PI, PI] {
            db.samples.push(pendulum_sample(t));
        }
        db.standardization = Some(Standardization::fit(&db.samples));
        let a = cluster_by_final_angle(&db, 0).unwrap();
        let parts = partition_dataset(&db, &a).unwrap();
        assert_eq!(parts.len(), a.r);
        let total: usize = parts.iter().map(|p| p.len()).sum();
        assert_eq!(total, db.len());
        for p in &parts {
            assert!(p.standardization.is_some());
            // Order within a part follows dataset order: theta_f values of
            // the label-0 part appear as in the dataset.
        }
        let label_of_first = a.labels[0];
        let in_part: Vec<f64> = parts[label_of_first]
            .samples
            .iter()
            .map(|s| s.trajectory.states.last().unwrap()[0])
            .collect();
        let expect: Vec<f64> = db
            .samples
            .iter()
            .zip(&a.labels)
            .filter(|(_, &l)| l == label_of_first)
            .map(|(s, _)| s.trajectory.states.last().unwrap()[0])
            .collect();
        assert_eq!(in_part, expect);
    }

    #[test]
    fn assignment_round_trips_and_validates_on_load() {
        let a = ClusterAssignment {
            labels: vec![0, 1, 1, 0],
            r: 2,
            method: "final-angle".into(),
            sizes: vec![2, 2],
            degenerate: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.clusters.json");
        a.save(&path, false).unwrap();
        let b = ClusterAssignment::load(&path).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.method, b.method);

        let bad = ClusterAssignment {
            labels: vec![0, 5],
            r: 2,
            method: "x".into(),
            sizes: vec![1, 1],
            degenerate: vec![],
        };
        let p2 = dir.path().join("bad.clusters.json");
        std::fs::write(&p2, serde_json::to_string(&bad).unwrap()).unwrap();
        assert!(ClusterAssignment::load(&p2).is_err());
    }
}
