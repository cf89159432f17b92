//! Oracle proposals, point override, SD-FPS sampling and message packing.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::boxes::{BoxSize, OrientedBox};
use crate::cluster::{AgentId, AgentMessage, PointCluster};
use crate::error::SamplingError;
use crate::geometry::{Pose, Vec3};
use crate::scalar::{normalize_angle, Real};
use crate::scene::LabeledPointCloud;
use crate::seed::Rng;

/// Gaussian perturbation applied to oracle proposals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalNoise {
    pub center_sigma: f64,
    pub size_sigma: f64,
    pub yaw_sigma: f64,
}

impl Default for ProposalNoise {
    fn default() -> Self {
        Self {
            center_sigma: 0.1,
            size_sigma: 0.05,
            yaw_sigma: 0.02,
        }
    }
}

impl ProposalNoise {
    pub fn zero() -> Self {
        Self {
            center_sigma: 0.0,
            size_sigma: 0.0,
            yaw_sigma: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PackingParams {
    /// Point sampling rate in (0, 1].
    pub zeta: f64,
    pub lambda_s: f64,
    pub lambda_d: f64,
    /// Gaussian kernel bandwidth in meters.
    pub kde_bandwidth: f64,
    pub proposal_noise: ProposalNoise,
    /// Store coordinates, features and scores as f16 on the wire.
    pub half_precision: bool,
    /// Transmit per-point semantic scores.
    pub include_scores: bool,
}

impl Default for PackingParams {
    fn default() -> Self {
        Self {
            zeta: 1.0,
            lambda_s: 1.0,
            lambda_d: 1.0,
            kde_bandwidth: 0.5,
            proposal_noise: ProposalNoise::default(),
            half_precision: true,
            include_scores: false,
        }
    }
}

/// Points-in-rotated-box tolerance so that boundary points survive the
/// round-off of the frame change.
fn boundary_tol<T: Real>(b: &OrientedBox<T>) -> T {
    let scale = b.center.x.abs() + b.center.y.abs() + b.center.z.abs() + b.size.l + b.size.w + b.size.h;
    T::epsilon() * T::lit(16.0) * (T::one() + scale)
}

pub(crate) fn contains_closed<T: Real>(b: &OrientedBox<T>, p: Vec3<T>) -> bool {
    b.contains(p, boundary_tol(b))
}

/// Keeps clusters whose center falls inside a ground-truth box and attaches
/// a noisy copy of that box as the proposal. `truth` must be expressed in
/// the clusters' frame. When several boxes contain the center the one with
/// the nearest center wins (lower index on ties).
pub fn generate_proposals<T: Real>(
    clusters: Vec<PointCluster<T>>,
    truth: &[OrientedBox<T>],
    noise: &ProposalNoise,
    rng: &mut Rng,
) -> Vec<PointCluster<T>> {
    let gauss = |rng: &mut Rng, sigma: f64| -> f64 {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
        } else {
            0.0
        }
    };
    let mut out = Vec::new();
    for mut c in clusters {
        let hit = truth
            .iter()
            .enumerate()
            .filter(|(_, b)| contains_closed(b, c.center))
            .min_by(|(ia, a), (ib, b)| {
                let da = a.center.distance_squared(c.center);
                let db = b.center.distance_squared(c.center);
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(ia.cmp(ib))
            });
        let Some((_, gt)) = hit else { continue };
        let jitter = Vec3::new(
            T::lit(gauss(rng, noise.center_sigma)),
            T::lit(gauss(rng, noise.center_sigma)),
            T::lit(gauss(rng, noise.center_sigma)),
        );
        let floor = T::lit(0.05);
        let grow = |v: T, rng: &mut Rng| (v + T::lit(gauss(rng, noise.size_sigma))).max(floor);
        let size = BoxSize::new(grow(gt.size.h, rng), grow(gt.size.w, rng), grow(gt.size.l, rng));
        let yaw = normalize_angle(gt.yaw + T::lit(gauss(rng, noise.yaw_sigma)));
        let confidence = T::lit(rng.random_range(0.5..=1.0));
        c.proposal = Some(OrientedBox {
            center: gt.center + jitter,
            size,
            yaw,
            confidence,
        });
        out.push(c);
    }
    out
}

/// Replaces the cluster's points with every foreground candidate of `cloud`
/// inside the proposal. Keeps the original points if none fall inside or if
/// the cluster has no proposal. The voted center is left unchanged.
pub fn override_points<T: Real>(cluster: &PointCluster<T>, cloud: &LabeledPointCloud<T>, fg_threshold: T) -> PointCluster<T> {
    let mut out = cluster.clone();
    let Some(b) = cluster.proposal else { return out };
    let (points, scores): (Vec<_>, Vec<_>) = cloud
        .points
        .iter()
        .filter(|p| p.semantic_score >= fg_threshold && contains_closed(&b, p.position))
        .map(|p| (p.position, p.semantic_score))
        .unzip();
    if !points.is_empty() {
        out.points = points;
        out.semantic_scores = scores;
    }
    out
}

/// Sparsity scores from a Gaussian kernel density: 1 for the sparsest
/// point, 0 for the densest.
pub fn kde_density_scores<T: Real>(points: &[Vec3<T>], bandwidth: T) -> Vec<T> {
    let inv = T::one() / (T::lit(2.0) * bandwidth * bandwidth);
    let dens: Vec<T> = points
        .iter()
        .map(|p| points.iter().map(|q| (-p.distance_squared(*q) * inv).exp()).sum())
        .collect();
    let lo = dens.iter().copied().fold(T::infinity(), T::min);
    let hi = dens.iter().copied().fold(T::neg_infinity(), T::max);
    if !(hi > lo) {
        return vec![T::one(); points.len()];
    }
    dens.into_iter().map(|d| T::one() - (d - lo) / (hi - lo)).collect()
}

/// `max(1, floor(n·ζ))`, with a small guard so that exact products such as
/// 64 × 0.25 are not lost to representation error.
pub fn sample_count(n: usize, zeta: f64) -> usize {
    if n == 0 {
        return 0;
    }
    (((n as f64) * zeta + 1e-9).floor() as usize).clamp(1, n)
}

/// Semantic- and distribution-guided farthest point sampling. Returns the
/// selected indices in pick order.
pub fn sd_fps<T: Real>(
    points: &[Vec3<T>],
    s_f: &[T],
    s_d: &[T],
    zeta: f64,
    lambda_s: T,
    lambda_d: T,
) -> Result<Vec<usize>, SamplingError> {
    let n = points.len();
    if n == 0 {
        return Err(SamplingError::EmptyInput);
    }
    for len in [s_f.len(), s_d.len()] {
        if len != n {
            return Err(SamplingError::LengthMismatch { points: n, scores: len });
        }
    }
    let k = sample_count(n, zeta);
    let floor = T::lit(1e-6);
    let weight: Vec<T> = s_f
        .iter()
        .zip(s_d)
        .map(|(&f, &d)| f.max(floor).min(T::one()).powf(lambda_s) * d.max(floor).min(T::one()).powf(lambda_d))
        .collect();

    let mut visited = vec![false; n];
    let mut dist = vec![T::infinity(); n];
    let mut picks = Vec::with_capacity(k);

    // first pick: strict '>' keeps the smallest index among ties
    let mut first = 0;
    for i in 1..n {
        if s_f[i] + s_d[i] > s_f[first] + s_d[first] {
            first = i;
        }
    }
    let mut last = first;
    loop {
        visited[last] = true;
        picks.push(last);
        if picks.len() == k {
            break;
        }
        let mut best: Option<(usize, T)> = None;
        for i in 0..n {
            if visited[i] {
                continue;
            }
            let d = points[i].distance(points[last]);
            if d < dist[i] {
                dist[i] = d;
            }
            let m = weight[i] * dist[i];
            if best.is_none_or(|(_, bm)| m > bm) {
                best = Some((i, m));
            }
        }
        last = best.expect("unvisited point remains").0;
    }
    Ok(picks)
}

/// Subsamples one cluster's points (and aligned scores) with SD-FPS.
pub fn sample_cluster<T: Real>(cluster: &PointCluster<T>, params: &PackingParams) -> Result<PointCluster<T>, SamplingError> {
    let s_d = kde_density_scores(&cluster.points, T::lit(params.kde_bandwidth));
    let idx = sd_fps(
        &cluster.points,
        &cluster.semantic_scores,
        &s_d,
        params.zeta,
        T::lit(params.lambda_s),
        T::lit(params.lambda_d),
    )?;
    let mut out = cluster.clone();
    out.points = idx.iter().map(|&i| cluster.points[i]).collect();
    out.semantic_scores = idx.iter().map(|&i| cluster.semantic_scores[i]).collect();
    Ok(out)
}

/// Builds the outgoing message; only point sets are reduced.
pub fn pack_message<T: Real>(
    agent_id: AgentId,
    clusters: &[PointCluster<T>],
    params: &PackingParams,
    pose: Pose<T>,
    timestamp: T,
) -> Result<AgentMessage<T>, SamplingError> {
    let packed = clusters
        .iter()
        .map(|c| sample_cluster(c, params))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AgentMessage::new(agent_id, timestamp, pose, packed))
}

/// Transmitted scalar count and its log-scale volume at two bytes a value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommReport {
    pub n_values: usize,
    pub bytes: usize,
    pub comm_log2: f64,
}

impl CommReport {
    pub fn from_values(n_values: usize) -> Self {
        let bytes = n_values * 2;
        Self {
            n_values,
            bytes,
            comm_log2: if bytes == 0 { f64::NEG_INFINITY } else { (bytes as f64).log2() },
        }
    }
}

/// Scalars carried by one cluster: coordinates, center, feature, box and
/// optionally one score per point.
pub fn cluster_values(points: usize, feature_dim: usize, include_scores: bool) -> usize {
    3 * points + 3 + feature_dim + 8 + if include_scores { points } else { 0 }
}

pub fn comm_volume<T: Real>(message: &AgentMessage<T>, include_scores: bool) -> CommReport {
    CommReport::from_values(
        message
            .clusters
            .iter()
            .map(|c| cluster_values(c.len(), c.feature.len(), include_scores))
            .sum(),
    )
}
