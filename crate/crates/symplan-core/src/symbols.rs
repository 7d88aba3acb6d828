//! Per-object symbol discovery and symbolic state labelling.
//!
//! Key-frame object features are pooled per object, clustered bottom-up under
//! cosine distance (average linkage), with the cluster count picked by
//! silhouette score. The retained exemplars back a k-nearest-neighbor
//! labeller that turns any frame into a K-tuple of discrete symbols.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{cosine_similarity, FrameRef, PlayDataset, PlayTrajectory};
use crate::scalar::Real;
use crate::segmentation::{segment_skills, KeyFrameSet};

/// A K-tuple of per-object discrete symbols; a node of the transition graph.
/// Equality, hashing, and ordering are component-wise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SymbolicState(pub Vec<usize>);

impl SymbolicState {
    pub fn arity(&self) -> usize {
        self.0.len()
    }
}

impl std::fmt::Display for SymbolicState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, ")")
    }
}

/// An observed state change between two key frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicTransition {
    pub before: SymbolicState,
    pub after: SymbolicState,
    /// Start and end key frame of the sub-skill that produced the transition.
    pub provenance: (FrameRef, FrameRef),
}

fn cosine_distance<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    Ok(T::one() - cosine_similarity(a, b)?)
}

/// Bottom-up average-linkage clustering under cosine distance, stopped at `n`
/// clusters. Labels are assigned in order of each cluster's lowest member
/// index, so the result is stable under input order.
pub fn agglomerative_cluster<T: Real>(features: &[Vec<T>], n: usize) -> Result<Vec<usize>> {
    let count = features.len();
    if n < 1 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "cluster count must be at least 1".into(),
        });
    }
    if count < n {
        return Err(Error::TooFewSamples {
            object: 0,
            available: count,
            required: n,
        });
    }
    // Lance-Williams update keeps average-linkage merges at O(N^2) each.
    let mut dist = vec![T::zero(); count * count];
    for i in 0..count {
        for j in i + 1..count {
            let d = cosine_distance(&features[i], &features[j])?;
            dist[i * count + j] = d;
            dist[j * count + i] = d;
        }
    }
    // cluster slots: active ones carry (size, lowest member index)
    let mut active: Vec<Option<(usize, usize)>> = (0..count).map(|i| Some((1, i))).collect();
    let mut membership: Vec<usize> = (0..count).collect();
    let mut remaining = count;
    while remaining > n {
        let mut best: Option<(T, usize, usize)> = None;
        for i in 0..count {
            let Some((_, mi)) = active[i] else { continue };
            for j in i + 1..count {
                let Some((_, mj)) = active[j] else { continue };
                let d = dist[i * count + j];
                // ties break to the pair with the lowest member indices
                let better = match &best {
                    None => true,
                    Some((bd, bi, bj)) => {
                        let (bmi, bmj) = (active[*bi].unwrap().1, active[*bj].unwrap().1);
                        let (lo, hi) = (mi.min(mj), mi.max(mj));
                        let (blo, bhi) = (bmi.min(bmj), bmi.max(bmj));
                        d < *bd || (d == *bd && (lo, hi) < (blo, bhi))
                    }
                };
                if better {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, a, b) = best.expect("at least two active clusters");
        let (sa, ma) = active[a].unwrap();
        let (sb, mb) = active[b].unwrap();
        // merge b into a
        let merged = T::of(sa as f64 + sb as f64);
        for c in 0..count {
            if c == a || c == b || active[c].is_none() {
                continue;
            }
            let d = (T::of(sa as f64) * dist[a * count + c]
                + T::of(sb as f64) * dist[b * count + c])
                / merged;
            dist[a * count + c] = d;
            dist[c * count + a] = d;
        }
        active[a] = Some((sa + sb, ma.min(mb)));
        active[b] = None;
        for m in membership.iter_mut() {
            if *m == b {
                *m = a;
            }
        }
        remaining -= 1;
    }
    // label clusters by their lowest member index
    let mut clusters: Vec<(usize, usize)> = active
        .iter()
        .enumerate()
        .filter_map(|(slot, a)| a.map(|(_, min_member)| (min_member, slot)))
        .collect();
    clusters.sort_unstable();
    let mut slot_to_label = vec![usize::MAX; count];
    for (label, (_, slot)) in clusters.iter().enumerate() {
        slot_to_label[*slot] = label;
    }
    Ok(membership.into_iter().map(|m| slot_to_label[m]).collect())
}

/// Mean silhouette under cosine distance. Singleton-cluster points score 0.
pub fn silhouette_score<T: Real>(features: &[Vec<T>], labels: &[usize]) -> Result<T> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        });
    }
    let num_clusters = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; num_clusters];
    for &l in labels {
        sizes[l] += 1;
    }
    if num_clusters < 2 || sizes.contains(&0) {
        return Err(Error::SingleCluster);
    }
    let n = features.len();
    let mut dist = vec![T::zero(); n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = cosine_distance(&features[i], &features[j])?;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut total = T::zero();
    for i in 0..n {
        let own = labels[i];
        let mut sums = vec![T::zero(); num_clusters];
        for j in 0..n {
            if j != i {
                sums[labels[j]] = sums[labels[j]] + dist[i * n + j];
            }
        }
        if sizes[own] == 1 {
            continue; // silhouette convention: s_i = 0
        }
        let a = sums[own] / T::of((sizes[own] - 1) as f64);
        let mut b = T::infinity();
        for c in 0..num_clusters {
            if c != own {
                let mean = sums[c] / T::of(sizes[c] as f64);
                if mean < b {
                    b = mean;
                }
            }
        }
        let denom = a.max(b);
        if denom > T::zero() {
            total = total + (b - a) / denom;
        }
    }
    Ok(total / T::of(n as f64))
}

/// Sweep cluster counts in `[n_min, n_max]`, returning the count with the
/// best silhouette (ties to the smaller count) along with that score.
pub fn select_cluster_count<T: Real>(
    features: &[Vec<T>],
    n_min: usize,
    n_max: usize,
) -> Result<(usize, T)> {
    if n_min < 2 || n_min > n_max || n_max + 1 > features.len() {
        return Err(Error::InvalidParameter {
            name: "n_range",
            reason: format!(
                "need 2 <= n_min <= n_max <= {} for {} samples, got [{n_min}, {n_max}]",
                features.len().saturating_sub(1),
                features.len()
            ),
        });
    }
    let mut best: Option<(usize, T)> = None;
    for n in n_min..=n_max {
        let labels = agglomerative_cluster(features, n)?;
        let score = silhouette_score(features, &labels)?;
        match best {
            Some((_, bs)) if score <= bs => {}
            _ => best = Some((n, score)),
        }
    }
    Ok(best.expect("nonempty range"))
}

/// Discrete state vocabulary of one object: exemplar features with cluster
/// labels, labelled by k-nearest-neighbor majority vote under cosine distance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: serde::de::DeserializeOwned"
))]
pub struct ObjectSymbolModel<T> {
    pub object_index: usize,
    pub num_clusters: usize,
    pub neighbor_count: usize,
    /// Best silhouette seen while selecting the cluster count (0 when the
    /// object was forced single-state).
    pub selection_score: T,
    exemplars: Vec<(Vec<T>, usize)>,
}

impl<T: Real> ObjectSymbolModel<T> {
    pub fn new(
        object_index: usize,
        num_clusters: usize,
        neighbor_count: usize,
        selection_score: T,
        exemplars: Vec<(Vec<T>, usize)>,
    ) -> Result<Self> {
        if num_clusters < 1 || exemplars.iter().any(|(_, l)| *l >= num_clusters) {
            return Err(Error::InvalidParameter {
                name: "exemplars",
                reason: "labels must lie in [0, num_clusters)".into(),
            });
        }
        Ok(Self {
            object_index,
            num_clusters,
            neighbor_count,
            selection_score,
            exemplars,
        })
    }

    pub fn exemplars(&self) -> &[(Vec<T>, usize)] {
        &self.exemplars
    }

    /// k-NN vote: nearest by cosine distance (ties by exemplar index),
    /// majority label, label ties to the smallest label.
    pub fn label(&self, feature: &[T]) -> Result<usize> {
        if self.num_clusters == 1 {
            return Ok(0);
        }
        let mut dists: Vec<(T, usize)> = Vec::with_capacity(self.exemplars.len());
        for (i, (ex, _)) in self.exemplars.iter().enumerate() {
            dists.push((cosine_distance(ex, feature)?, i));
        }
        dists.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
        });
        let k = self.neighbor_count.min(dists.len()).max(1);
        let mut votes = vec![0usize; self.num_clusters];
        for &(_, idx) in dists.iter().take(k) {
            votes[self.exemplars[idx].1] += 1;
        }
        let mut best = 0;
        for (label, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = label;
            }
        }
        Ok(best)
    }
}

/// Knobs for [`fit_object_models`].
#[derive(Debug, Clone, Copy)]
pub struct SymbolFitParams {
    pub neighbor_count: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Objects whose best silhouette falls below this are single-state.
    pub single_state_threshold: f64,
}

impl Default for SymbolFitParams {
    fn default() -> Self {
        Self {
            neighbor_count: 5,
            n_min: 2,
            n_max: 6,
            single_state_threshold: 0.1,
        }
    }
}

/// Pool each object's features at all key frames, select a cluster count via
/// silhouette, cluster, and retain all exemplars for labelling.
pub fn fit_object_models<T: Real>(
    dataset: &PlayDataset<T>,
    keyframes: &[KeyFrameSet],
    params: SymbolFitParams,
) -> Result<Vec<ObjectSymbolModel<T>>> {
    let mut models = Vec::with_capacity(dataset.num_objects());
    for object in 0..dataset.num_objects() {
        let mut pool: Vec<Vec<T>> = Vec::new();
        for kf in keyframes {
            let traj = dataset.trajectory(&kf.trajectory_id)?;
            for &frame in &kf.indices {
                pool.push(traj.object_feature(frame, object)?.to_vec());
            }
        }
        if pool.len() < 2 {
            return Err(Error::TooFewSamples {
                object,
                available: pool.len(),
                required: 2,
            });
        }
        let n_max = params.n_max.min(pool.len() - 1);
        let threshold = T::of(params.single_state_threshold);
        let (n, score) = if n_max < params.n_min {
            (1, T::zero())
        } else {
            let (n, score) = select_cluster_count(&pool, params.n_min, n_max)?;
            if score < threshold {
                (1, score)
            } else {
                (n, score)
            }
        };
        let labels = if n == 1 {
            vec![0; pool.len()]
        } else {
            agglomerative_cluster(&pool, n)?
        };
        // a rarely visited state may back only one or two exemplars; a vote
        // wider than the smallest cluster could never elect it
        let mut sizes = vec![0usize; n];
        for &l in &labels {
            sizes[l] += 1;
        }
        let neighbor_count = params.neighbor_count.min(*sizes.iter().min().unwrap());
        let exemplars = pool.into_iter().zip(labels).collect();
        models.push(ObjectSymbolModel::new(
            object,
            n,
            neighbor_count,
            score,
            exemplars,
        )?);
    }
    Ok(models)
}

/// Label one frame of a trajectory as a K-tuple of per-object symbols.
pub fn label_state<T: Real>(
    models: &[ObjectSymbolModel<T>],
    traj: &PlayTrajectory<T>,
    frame: usize,
) -> Result<SymbolicState> {
    let mut symbols = Vec::with_capacity(models.len());
    for (object, model) in models.iter().enumerate() {
        symbols.push(model.label(traj.object_feature(frame, object)?)?);
    }
    Ok(SymbolicState(symbols))
}

/// Label a raw `K*D` frame feature (object vectors concatenated in order).
pub fn label_feature<T: Real>(
    models: &[ObjectSymbolModel<T>],
    feature: &[T],
) -> Result<SymbolicState> {
    if models.is_empty() || !feature.len().is_multiple_of(models.len()) {
        return Err(Error::LengthMismatch {
            left: feature.len(),
            right: models.len(),
        });
    }
    let dim = feature.len() / models.len();
    let mut symbols = Vec::with_capacity(models.len());
    for (object, model) in models.iter().enumerate() {
        symbols.push(model.label(&feature[object * dim..(object + 1) * dim])?);
    }
    Ok(SymbolicState(symbols))
}

/// Label every key frame of the dataset, in trajectory then frame order.
pub fn label_keyframes<T: Real>(
    dataset: &PlayDataset<T>,
    keyframes: &[KeyFrameSet],
    models: &[ObjectSymbolModel<T>],
) -> Result<Vec<(FrameRef, SymbolicState)>> {
    let mut out = Vec::new();
    for kf in keyframes {
        let traj = dataset.trajectory(&kf.trajectory_id)?;
        for &frame in &kf.indices {
            out.push((
                FrameRef::new(traj.id(), frame),
                label_state(models, traj, frame)?,
            ));
        }
    }
    Ok(out)
}

/// Label each sub-skill's start and end key frames and emit a transition
/// wherever the labels differ. Repeated (before, after) pairs stay separate;
/// the graph merges them while keeping all provenance.
pub fn extract_transitions<T: Real>(
    dataset: &PlayDataset<T>,
    keyframes: &[KeyFrameSet],
    models: &[ObjectSymbolModel<T>],
) -> Result<Vec<SymbolicTransition>> {
    let mut transitions = Vec::new();
    for kf in keyframes {
        let traj = dataset.trajectory(&kf.trajectory_id)?;
        for skill in segment_skills(traj, kf)? {
            let before = label_state(models, traj, skill.start)?;
            let after = label_state(models, traj, skill.end)?;
            if before != after {
                transitions.push(SymbolicTransition {
                    before,
                    after,
                    provenance: (
                        FrameRef::new(traj.id(), skill.start),
                        FrameRef::new(traj.id(), skill.end),
                    ),
                });
            }
        }
    }
    Ok(transitions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    /// Random unit vector within `half_angle_deg` of `center`.
    fn cone_sample(rng: &mut ChaCha8Rng, center: &[f64], half_angle_deg: f64) -> Vec<f64> {
        loop {
            let jitter: Vec<f64> = center
                .iter()
                .map(|c| c + rng.gen_range(-1.0..1.0) * half_angle_deg.to_radians().sin())
                .collect();
            let v = unit(&jitter);
            let cos: f64 = v.iter().zip(center).map(|(a, b)| a * b).sum();
            if cos >= half_angle_deg.to_radians().cos() {
                return v;
            }
        }
    }

    #[test]
    fn antipodal_pairs_split_into_two_clusters() {
        let pts = vec![
            vec![1.0, 0.0],
            vec![0.9, 0.1],
            vec![-1.0, 0.0],
            vec![-0.9, -0.1],
        ];
        let labels = agglomerative_cluster(&pts, 2).unwrap();
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[2], labels[3]);
        assert_ne!(labels[0], labels[2]);
        // first cluster (lowest member index) gets label 0
        assert_eq!(labels[0], 0);
    }

    #[test]
    fn n_equals_count_is_identity_partition() {
        let pts = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]];
        let labels = agglomerative_cluster(&pts, 3).unwrap();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn too_few_samples_rejected() {
        let pts = vec![vec![1.0, 0.0]];
        assert!(matches!(
            agglomerative_cluster(&pts, 2).unwrap_err(),
            Error::TooFewSamples { .. }
        ));
    }

    fn three_cones(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // three centers 90 degrees apart
        let centers = [
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..10 {
                pts.push(cone_sample(&mut rng, center, 10.0));
                truth.push(c);
            }
        }
        (pts, truth)
    }

    #[test]
    fn cone_partition_matches_generators() {
        let (pts, truth) = three_cones(3);
        let labels = agglomerative_cluster(&pts, 3).unwrap();
        // exhaustive nearest-center check against generators: points sharing a
        // generating cone must share a label, and distinct cones must differ
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert_eq!(labels[i] == labels[j], truth[i] == truth[j], "{i} vs {j}");
            }
        }
    }

    #[test]
    fn cluster_labels_invariant_under_positive_rescaling() {
        let (pts, _) = three_cones(5);
        let labels = agglomerative_cluster(&pts, 3).unwrap();
        let scaled: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| p.iter().map(|x| x * 42.0).collect())
            .collect();
        assert_eq!(labels, agglomerative_cluster(&scaled, 3).unwrap());
    }

    /// Direct formula evaluation, kept independent of `silhouette_score`.
    fn silhouette_by_hand(pts: &[Vec<f64>], labels: &[usize]) -> f64 {
        let n = pts.len();
        let clusters = labels.iter().copied().max().unwrap() + 1;
        let d = |i: usize, j: usize| -> f64 {
            let dot: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| a * b).sum();
            let ni: f64 = pts[i].iter().map(|x| x * x).sum::<f64>().sqrt();
            let nj: f64 = pts[j].iter().map(|x| x * x).sum::<f64>().sqrt();
            1.0 - dot / (ni * nj)
        };
        let mut total = 0.0;
        for i in 0..n {
            let own_size = labels.iter().filter(|&&l| l == labels[i]).count();
            if own_size == 1 {
                continue;
            }
            let a = (0..n)
                .filter(|&j| j != i && labels[j] == labels[i])
                .map(|j| d(i, j))
                .sum::<f64>()
                / (own_size - 1) as f64;
            let b = (0..clusters)
                .filter(|&c| c != labels[i])
                .map(|c| {
                    let members: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                    members.iter().map(|&j| d(i, j)).sum::<f64>() / members.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            total += (b - a) / a.max(b);
        }
        total / n as f64
    }

    #[test]
    fn silhouette_matches_direct_formula() {
        let (pts, _) = three_cones(7);
        let labels = agglomerative_cluster(&pts, 3).unwrap();
        let got = silhouette_score(&pts, &labels).unwrap();
        let expected = silhouette_by_hand(&pts, &labels);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn tight_antipodal_clusters_score_high() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..12 {
            pts.push(cone_sample(&mut rng, &[1.0, 0.0, 0.0, 0.0], 5.0));
            labels.push(0);
        }
        for _ in 0..12 {
            pts.push(cone_sample(&mut rng, &[-1.0, 0.0, 0.0, 0.0], 5.0));
            labels.push(1);
        }
        assert!(silhouette_score(&pts, &labels).unwrap() > 0.9);
    }

    #[test]
    fn random_directions_score_near_zero() {
        // Monte-Carlo: arbitrary split of uniform directions
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let pts: Vec<Vec<f64>> = (0..40)
                .map(|_| {
                    let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    unit(&v)
                })
                .collect();
            let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
            let s = silhouette_score(&pts, &labels).unwrap();
            assert!(s.abs() < 0.2, "seed {seed}: {s}");
        }
    }

    #[test]
    fn single_cluster_rejected() {
        let pts = vec![vec![1.0, 0.0], vec![0.9, 0.1]];
        assert!(matches!(
            silhouette_score(&pts, &[0, 0]).unwrap_err(),
            Error::SingleCluster
        ));
    }

    #[test]
    fn select_count_recovers_three_cones() {
        let (pts, _) = three_cones(9);
        let (n, score) = select_cluster_count(&pts, 2, 6).unwrap();
        assert_eq!(n, 3);
        assert!(score > 0.5);
    }

    #[test]
    fn select_count_recovers_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts = Vec::new();
        for _ in 0..15 {
            pts.push(cone_sample(&mut rng, &[1.0, 0.0, 0.0, 0.0], 8.0));
        }
        for _ in 0..15 {
            pts.push(cone_sample(&mut rng, &[-1.0, 0.0, 0.0, 0.0], 8.0));
        }
        let (n, _) = select_cluster_count(&pts, 2, 6).unwrap();
        assert_eq!(n, 2);
    }

    #[test]
    fn select_count_rejects_bad_range() {
        let (pts, _) = three_cones(4);
        assert!(matches!(
            select_cluster_count(&pts, 5, 4).unwrap_err(),
            Error::InvalidParameter {
                name: "n_range",
                ..
            }
        ));
    }

    #[test]
    fn knn_one_returns_own_label_on_exemplars() {
        let (pts, _) = three_cones(13);
        let labels = agglomerative_cluster(&pts, 3).unwrap();
        let exemplars: Vec<(Vec<f64>, usize)> =
            pts.iter().cloned().zip(labels.iter().copied()).collect();
        let model = ObjectSymbolModel::new(0, 3, 1, 0.9, exemplars).unwrap();
        for (p, l) in pts.iter().zip(&labels) {
            assert_eq!(model.label(p).unwrap(), *l);
        }
    }

    #[test]
    fn knn_tie_breaks_to_smallest_label() {
        // two exemplars equidistant from the query, k = 2: vote is tied
        let exemplars = vec![(vec![1.0, 0.0], 1usize), (vec![0.0, 1.0], 0usize)];
        let model = ObjectSymbolModel::new(0, 2, 2, 1.0, exemplars).unwrap();
        let q = unit(&[1.0, 1.0]);
        assert_eq!(model.label(&q).unwrap(), 0);
    }

    #[test]
    fn noisy_copy_of_exemplar_keeps_its_label() {
        let (pts, _) = three_cones(17);
        let labels = agglomerative_cluster(&pts, 3).unwrap();
        let exemplars: Vec<(Vec<f64>, usize)> =
            pts.iter().cloned().zip(labels.iter().copied()).collect();
        let model = ObjectSymbolModel::new(0, 3, 5, 0.9, exemplars).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        // perturbation sweep well below cluster separation
        for (p, l) in pts.iter().zip(&labels) {
            for _ in 0..5 {
                let noisy: Vec<f64> = p.iter().map(|x| x + rng.gen_range(-0.02..0.02)).collect();
                assert_eq!(model.label(&noisy).unwrap(), *l);
            }
        }
    }

    /// Two trajectories: one where an object flips states, one where it
    /// never changes. K = 2 objects sharing the same per-frame vector.
    fn two_object_dataset() -> (PlayDataset<f64>, Vec<KeyFrameSet>) {
        let build = |id: &str, flip: bool| {
            let mut flat = Vec::new();
            for t in 0..30 {
                let moving: &[f64] = if flip && t >= 15 {
                    &[0.0, 1.0, 0.01]
                } else {
                    &[1.0, 0.0, 0.01]
                };
                flat.extend_from_slice(moving);
                flat.extend_from_slice(&[0.0, 0.01, 1.0]); // static object
            }
            PlayTrajectory::new(id, 30, 2, 3, flat).unwrap()
        };
        let ds = PlayDataset::new(
            vec![
                build("flip-a", true),
                build("flip-b", true),
                build("flat", false),
            ],
            vec!["moving".into(), "static".into()],
        )
        .unwrap();
        let kf = ds
            .trajectories()
            .iter()
            .map(|t| KeyFrameSet::new(t.id(), vec![0, 14, 29]).unwrap())
            .collect();
        (ds, kf)
    }

    #[test]
    fn static_object_is_forced_single_state() {
        let (ds, kf) = two_object_dataset();
        let models = fit_object_models(&ds, &kf, SymbolFitParams::default()).unwrap();
        assert_eq!(models[0].num_clusters, 2, "moving object");
        assert_eq!(models[1].num_clusters, 1, "static object");
        // a constant model labels everything 0
        for traj in ds.trajectories() {
            for f in [0usize, 29] {
                let state = label_state(&models, traj, f).unwrap();
                assert_eq!(state.0[1], 0);
            }
        }
    }

    #[test]
    fn interpolated_frames_label_to_an_endpoint_tuple() {
        let (ds, kf) = two_object_dataset();
        let models = fit_object_models(&ds, &kf, SymbolFitParams::default()).unwrap();
        let a = [1.0, 0.0, 0.01];
        let b = [0.0, 1.0, 0.01];
        let la = models[0].label(&a).unwrap();
        let lb = models[0].label(&b).unwrap();
        // sweep the interpolation; the label never leaves {la, lb}
        for i in 0..=10 {
            let u = i as f64 / 10.0;
            let mid: Vec<f64> = a
                .iter()
                .zip(&b)
                .map(|(x, y)| x * (1.0 - u) + y * u)
                .collect();
            let l = models[0].label(&mid).unwrap();
            assert!(l == la || l == lb, "u={u}: unseen label {l}");
        }
    }

    #[test]
    fn unchanged_trajectory_emits_no_transitions() {
        let (ds, kf) = two_object_dataset();
        let models = fit_object_models(&ds, &kf, SymbolFitParams::default()).unwrap();
        let flat_kf = vec![kf[2].clone()];
        let transitions = extract_transitions(&ds, &flat_kf, &models).unwrap();
        assert!(transitions.is_empty(), "{transitions:?}");
    }

    #[test]
    fn repeated_skill_keeps_separate_provenance() {
        let (ds, kf) = two_object_dataset();
        let models = fit_object_models(&ds, &kf, SymbolFitParams::default()).unwrap();
        // both flip trajectories perform the same state change
        let transitions = extract_transitions(&ds, &kf[..2], &models).unwrap();
        assert_eq!(transitions.len(), 2);
        assert_eq!(transitions[0].before, transitions[1].before);
        assert_eq!(transitions[0].after, transitions[1].after);
        assert_ne!(
            transitions[0].provenance.0.trajectory_id,
            transitions[1].provenance.0.trajectory_id
        );
    }
}
