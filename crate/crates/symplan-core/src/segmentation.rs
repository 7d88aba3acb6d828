//! Stable-state identification: temporal similarity, bilateral smoothing, and
//! peak selection via non-maximum suppression.
//!
//! A frame where all objects look like they did one frame earlier is a stable
//! state; the similarity series peaks there. Key frames split a trajectory
//! into sub-skills.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{cosine_similarity, PlayTrajectory};
use crate::scalar::Real;

/// Per-trajectory similarity series of length `T-1`; `values[t]` compares
/// frames `t` and `t+1`.
#[derive(Debug, Clone)]
pub struct SimilaritySeries<T> {
    pub trajectory_id: String,
    pub values: Vec<T>,
}

/// Strictly increasing key-frame indices; always contains 0 and `T-1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyFrameSet {
    pub trajectory_id: String,
    pub indices: Vec<usize>,
}

impl KeyFrameSet {
    pub fn new(trajectory_id: impl Into<String>, indices: Vec<usize>) -> Result<Self> {
        if indices.len() < 2 || !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter {
                name: "indices",
                reason: "key frames must be strictly increasing with at least 2 entries".into(),
            });
        }
        Ok(Self {
            trajectory_id: trajectory_id.into(),
            indices,
        })
    }

    /// Consecutive key-frame pairs, i.e. the sub-skill boundaries.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.indices.windows(2).map(|w| (w[0], w[1]))
    }
}

/// The trajectory segment between two consecutive stable states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubSkill {
    pub trajectory_id: String,
    pub start: usize,
    pub end: usize,
}

impl SubSkill {
    /// Frames strictly between the two key frames.
    pub fn intermediate(&self) -> impl Iterator<Item = usize> {
        self.start + 1..self.end
    }
}

/// Sum over objects of the cosine similarity between consecutive frames.
pub fn temporal_similarity<T: Real>(traj: &PlayTrajectory<T>) -> Result<SimilaritySeries<T>> {
    let mut values = Vec::with_capacity(traj.num_frames() - 1);
    for t in 0..traj.num_frames() - 1 {
        let mut sum = T::zero();
        for k in 0..traj.num_objects() {
            sum = sum
                + cosine_similarity(traj.object_feature(t, k)?, traj.object_feature(t + 1, k)?)?;
        }
        values.push(sum);
    }
    Ok(SimilaritySeries {
        trajectory_id: traj.id().to_string(),
        values,
    })
}

/// Bilateral smoothing parameters. `sigma_v = infinity` turns the value term
/// off and recovers plain Gaussian smoothing, which is the default.
#[derive(Debug, Clone, Copy)]
pub struct SmoothingParams<T> {
    pub sigma_t: T,
    pub sigma_v: T,
    pub half_window: usize,
}

impl<T: Real> Default for SmoothingParams<T> {
    fn default() -> Self {
        Self {
            sigma_t: T::of(2.0),
            sigma_v: T::infinity(),
            half_window: 7,
        }
    }
}

/// Windowed weighted average with kernel
/// `W(t,i) = exp(-(t-i)^2 / 2*sigma_t^2) * exp(-(v_t-v_i)^2 / 2*sigma_v^2)`,
/// truncated at the series boundaries.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN parameters
pub fn smooth<T: Real>(
    series: &SimilaritySeries<T>,
    params: SmoothingParams<T>,
) -> Result<SimilaritySeries<T>> {
    if !(params.sigma_t > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "sigma_t",
            reason: format!("must be positive, got {}", params.sigma_t),
        });
    }
    if !(params.sigma_v > T::zero()) {
        return Err(Error::InvalidParameter {
            name: "sigma_v",
            reason: format!("must be positive, got {}", params.sigma_v),
        });
    }
    if params.half_window < 1 {
        return Err(Error::InvalidParameter {
            name: "half_window",
            reason: "must be at least 1".into(),
        });
    }
    let n = series.values.len();
    let v = &series.values;
    let two = T::of(2.0);
    let t_denom = two * params.sigma_t * params.sigma_t;
    let v_denom = two * params.sigma_v * params.sigma_v;
    let k = params.half_window;
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let lo = t.saturating_sub(k);
        let hi = (t + k).min(n - 1);
        let mut num = T::zero();
        let mut den = T::zero();
        for i in lo..=hi {
            let dt = T::of(t as f64 - i as f64);
            let dv = v[t] - v[i];
            // dividing by an infinite denominator sends the exponent to 0
            let w = (-(dt * dt) / t_denom).exp() * (-(dv * dv) / v_denom).exp();
            num = num + w * v[i];
            den = den + w;
        }
        out.push(num / den);
    }
    Ok(SimilaritySeries {
        trajectory_id: series.trajectory_id.clone(),
        values: out,
    })
}

/// Non-maximum-suppression parameters.
#[derive(Debug, Clone, Copy)]
pub struct NmsParams<T> {
    /// Two accepted peaks are never closer than this many frames.
    pub window: usize,
    /// Minimum peak prominence; candidates below it are dropped.
    pub min_prominence: T,
}

#[derive(Debug, Clone, Copy)]
struct Candidate<T> {
    frame: usize,
    value: T,
    prominence: T,
}

/// Plateau-aware local maxima of the series. A maximal run of equal values is
/// a peak when both neighbors outside the run are strictly lower; runs
/// touching a boundary are not peaks (the endpoints are appended separately).
fn peak_candidates<T: Real>(values: &[T]) -> Vec<Candidate<T>> {
    let n = values.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[j + 1] == values[i] {
            j += 1;
        }
        let interior = i > 0 && j + 1 < n;
        if interior && values[i - 1] < values[i] && values[j + 1] < values[i] {
            // series index t compares frames t and t+1, so the run [i, j]
            // spans frames [i, j+1]; report its midpoint frame
            let frame = (i + j).div_ceil(2);
            out.push(Candidate {
                frame,
                value: values[i],
                prominence: prominence(values, i, j),
            });
        }
        i = j + 1;
    }
    out
}

/// Height above the higher of the two bases, where each base is the minimum
/// between the peak and the nearest strictly higher point (or the boundary).
fn prominence<T: Real>(values: &[T], run_start: usize, run_end: usize) -> T {
    let peak = values[run_start];
    let mut left_min = peak;
    let mut l = run_start;
    while l > 0 {
        l -= 1;
        if values[l] > peak {
            break;
        }
        if values[l] < left_min {
            left_min = values[l];
        }
    }
    let mut right_min = peak;
    let mut r = run_end;
    while r + 1 < values.len() {
        r += 1;
        if values[r] > peak {
            break;
        }
        if values[r] < right_min {
            right_min = values[r];
        }
    }
    peak - left_min.max(right_min)
}

/// Greedy non-maximum suppression over the (smoothed) similarity series.
/// Candidates are taken in descending value order (ties to the lower frame),
/// rejecting any within `window` frames of an accepted peak or with
/// prominence below the threshold. Frames 0 and `T-1` are always included.
pub fn nms_peaks<T: Real>(
    series: &SimilaritySeries<T>,
    params: NmsParams<T>,
) -> Result<KeyFrameSet> {
    if params.window < 1 {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: "must be at least 1".into(),
        });
    }
    let num_frames = series.values.len() + 1;
    let mut candidates: Vec<Candidate<T>> = peak_candidates(&series.values)
        .into_iter()
        .filter(|c| c.prominence >= params.min_prominence)
        .collect();
    candidates.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .expect("finite similarity values")
            .then(a.frame.cmp(&b.frame))
    });
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted
            .iter()
            .all(|&a| a.abs_diff(c.frame) >= params.window)
        {
            accepted.push(c.frame);
        }
    }
    accepted.push(0);
    accepted.push(num_frames - 1);
    accepted.sort_unstable();
    accepted.dedup();
    KeyFrameSet::new(series.trajectory_id.clone(), accepted)
}

/// One [`SubSkill`] per consecutive key-frame pair, in order.
pub fn segment_skills<T: Real>(
    traj: &PlayTrajectory<T>,
    keyframes: &KeyFrameSet,
) -> Result<Vec<SubSkill>> {
    if keyframes.trajectory_id != traj.id() {
        return Err(Error::KeyFrameMismatch {
            expected: keyframes.trajectory_id.clone(),
            actual: traj.id().to_string(),
        });
    }
    if *keyframes.indices.last().unwrap() >= traj.num_frames() {
        return Err(Error::IndexOutOfRange {
            id: traj.id().to_string(),
            index: *keyframes.indices.last().unwrap(),
            frames: traj.num_frames(),
        });
    }
    Ok(keyframes
        .pairs()
        .map(|(start, end)| SubSkill {
            trajectory_id: traj.id().to_string(),
            start,
            end,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::PlayTrajectory;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(values: Vec<f64>) -> SimilaritySeries<f64> {
        SimilaritySeries {
            trajectory_id: "t".into(),
            values,
        }
    }

    #[test]
    fn constant_trajectory_sums_to_k() {
        let frame = [1.0, 2.0, 0.5, -1.0, 2.0, 3.0]; // K=3, D=2
        let flat: Vec<f64> = std::iter::repeat_n(frame, 10).flatten().collect();
        let traj = PlayTrajectory::new("t", 10, 3, 2, flat).unwrap();
        let s = temporal_similarity(&traj).unwrap();
        assert_eq!(s.values.len(), 9);
        for v in s.values {
            assert_relative_eq!(v, 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn abrupt_flip_dips_below_neighbors() {
        // K=1, D=2: frames point at +x, flip to +y at frame 11
        let mut flat = Vec::new();
        for t in 0..20 {
            if t <= 10 {
                flat.extend_from_slice(&[1.0, 0.0]);
            } else {
                flat.extend_from_slice(&[0.0, 1.0]);
            }
        }
        let traj = PlayTrajectory::new("t", 20, 1, 2, flat).unwrap();
        let s = temporal_similarity(&traj).unwrap();
        assert!(s.values[10] < s.values[9]);
        assert!(s.values[10] < s.values[11]);
    }

    #[test]
    fn random_trajectory_matches_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (t, k, d) = (30usize, 2usize, 4usize);
        let flat: Vec<f64> = (0..t * k * d).map(|_| rng.gen_range(0.1..2.0)).collect();
        let traj = PlayTrajectory::new("t", t, k, d, flat.clone()).unwrap();
        let s = temporal_similarity(&traj).unwrap();
        // independent re-evaluation of the defining sum
        for tt in 0..t - 1 {
            let mut expected = 0.0;
            for kk in 0..k {
                let a = &flat[(tt * k + kk) * d..(tt * k + kk + 1) * d];
                let b = &flat[((tt + 1) * k + kk) * d..((tt + 1) * k + kk + 1) * d];
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                expected += dot / (na * nb);
            }
            assert_relative_eq!(s.values[tt], expected, epsilon = 1e-12);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn smooth_impulse_matches_kernel_evaluation() {
        let mut vals = vec![0.0; 21];
        vals[10] = 1.0;
        let s = series(vals.clone());
        let params = SmoothingParams {
            sigma_t: 2.0,
            sigma_v: f64::INFINITY,
            half_window: 5,
        };
        let sm = smooth(&s, params).unwrap();
        // closed-form: out[t] = sum_i g(t-i) v[i] / sum_i g(t-i)
        for t in 0..21usize {
            let lo = t.saturating_sub(5);
            let hi = (t + 5).min(20);
            let mut num = 0.0;
            let mut den = 0.0;
            for i in lo..=hi {
                let g = (-((t as f64 - i as f64).powi(2)) / 8.0).exp();
                num += g * vals[i];
                den += g;
            }
            assert_relative_eq!(sm.values[t], num / den, epsilon = 1e-12);
        }
    }

    #[test]
    fn smooth_constant_is_identity() {
        let s = series(vec![2.5; 40]);
        let sm = smooth(&s, SmoothingParams::default()).unwrap();
        for v in sm.values {
            assert_relative_eq!(v, 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn smooth_rejects_zero_half_window() {
        let s = series(vec![1.0; 5]);
        let params = SmoothingParams {
            sigma_t: 2.0,
            sigma_v: f64::INFINITY,
            half_window: 0,
        };
        assert!(matches!(
            smooth(&s, params).unwrap_err(),
            Error::InvalidParameter {
                name: "half_window",
                ..
            }
        ));
    }

    #[test]
    fn bilateral_term_preserves_edges_more_than_gaussian() {
        // step edge: the value kernel should keep the step sharper
        let mut vals = vec![0.0; 20];
        for v in vals.iter_mut().skip(10) {
            *v = 1.0;
        }
        let s = series(vals);
        let plain = smooth(
            &s,
            SmoothingParams {
                sigma_t: 3.0,
                sigma_v: f64::INFINITY,
                half_window: 7,
            },
        )
        .unwrap();
        let bilateral = smooth(
            &s,
            SmoothingParams {
                sigma_t: 3.0,
                sigma_v: 0.1,
                half_window: 7,
            },
        )
        .unwrap();
        assert!(bilateral.values[9] < plain.values[9]);
        assert!(bilateral.values[10] > plain.values[10]);
    }

    fn gaussian_bump(n: usize, center: f64, width: f64) -> Vec<f64> {
        (0..n)
            .map(|t| (-(t as f64 - center).powi(2) / (2.0 * width * width)).exp())
            .collect()
    }

    #[test]
    fn single_bump_yields_endpoints_plus_peak() {
        let s = series(gaussian_bump(49, 25.0, 4.0));
        let kf = nms_peaks(
            &s,
            NmsParams {
                window: 5,
                min_prominence: 0.01,
            },
        )
        .unwrap();
        assert_eq!(kf.indices, vec![0, 25, 49]);
    }

    #[test]
    fn monotone_series_yields_endpoints_only() {
        let s = series((0..30).map(|t| t as f64 * 0.1).collect());
        let kf = nms_peaks(
            &s,
            NmsParams {
                window: 5,
                min_prominence: 0.0,
            },
        )
        .unwrap();
        assert_eq!(kf.indices, vec![0, 30]);
    }

    #[test]
    fn equal_bumps_within_window_keep_lower_index() {
        // two equal single-point peaks 3 frames apart, suppression window 5
        let mut vals = vec![0.0; 30];
        vals[12] = 1.0;
        vals[15] = 1.0;
        let s = series(vals.clone());
        let kf = nms_peaks(
            &s,
            NmsParams {
                window: 5,
                min_prominence: 0.1,
            },
        )
        .unwrap();
        // exhaustive check of greedy suppression on the 2-peak signal:
        // both peaks have equal value, the lower index is visited first,
        // the other is within 5 frames and must be rejected
        let expected: Vec<usize> = {
            let mut peaks: Vec<usize> = (1..vals.len() - 1)
                .filter(|&i| vals[i] > vals[i - 1] && vals[i] > vals[i + 1])
                .collect();
            peaks.sort_by(|a, b| vals[*b].partial_cmp(&vals[*a]).unwrap().then(a.cmp(b)));
            let mut acc: Vec<usize> = Vec::new();
            for p in peaks {
                if acc.iter().all(|&a| a.abs_diff(p) >= 5) {
                    acc.push(p);
                }
            }
            acc.extend([0, 30]);
            acc.sort_unstable();
            acc
        };
        assert_eq!(kf.indices, expected);
        assert!(kf.indices.contains(&12) && !kf.indices.contains(&15));
    }

    #[test]
    fn plateau_peak_reports_midpoint_frame() {
        let mut vals = vec![0.0; 20];
        for v in vals.iter_mut().take(13).skip(9) {
            *v = 1.0; // plateau at series indices 9..=12, frames 9..=13
        }
        let kf = nms_peaks(
            &series(vals),
            NmsParams {
                window: 3,
                min_prominence: 0.1,
            },
        )
        .unwrap();
        assert_eq!(kf.indices, vec![0, 11, 20]);
    }

    #[test]
    fn segment_skills_pairs_consecutive_keyframes() {
        let flat: Vec<f64> = std::iter::repeat_n([1.0, 0.0], 50).flatten().collect();
        let traj = PlayTrajectory::new("t", 50, 1, 2, flat).unwrap();
        let kf = KeyFrameSet::new("t", vec![0, 25, 49]).unwrap();
        let skills = segment_skills(&traj, &kf).unwrap();
        assert_eq!(skills.len(), 2);
        assert_eq!((skills[0].start, skills[0].end), (0, 25));
        assert_eq!((skills[1].start, skills[1].end), (25, 49));

        let whole = KeyFrameSet::new("t", vec![0, 49]).unwrap();
        assert_eq!(segment_skills(&traj, &whole).unwrap().len(), 1);
    }

    #[test]
    fn segment_skills_rejects_foreign_keyframes() {
        let flat: Vec<f64> = std::iter::repeat_n([1.0, 0.0], 10).flatten().collect();
        let traj = PlayTrajectory::new("t", 10, 1, 2, flat).unwrap();
        let kf = KeyFrameSet::new("other", vec![0, 9]).unwrap();
        assert!(matches!(
            segment_skills(&traj, &kf).unwrap_err(),
            Error::KeyFrameMismatch { .. }
        ));
    }

    proptest! {
        #[test]
        fn smooth_stays_within_input_range(
            vals in proptest::collection::vec(-3.0f64..3.0, 5..60),
            sigma_t in 0.5f64..4.0,
            k in 1usize..8,
        ) {
            let s = series(vals.clone());
            let sm = smooth(&s, SmoothingParams { sigma_t, sigma_v: f64::INFINITY, half_window: k }).unwrap();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in sm.values {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }

        #[test]
        fn nms_respects_min_distance(
            vals in proptest::collection::vec(-1.0f64..1.0, 10..80),
            w in 1usize..10,
        ) {
            let kf = nms_peaks(&series(vals), NmsParams { window: w, min_prominence: 0.0 }).unwrap();
            let interior: Vec<usize> = kf.indices[1..kf.indices.len() - 1].to_vec();
            for pair in interior.windows(2) {
                prop_assert!(pair[1] - pair[0] >= w);
            }
        }
    }
}
