//! Receiver-side fusion: match clusters across agents by center distance,
//! merge matched tuples, refit boxes.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::boxes::{BoxSize, OrientedBox};
use crate::cluster::{AgentId, AgentMessage, PointCluster};
use crate::geometry::{relative_pose, Vec3};
use crate::scalar::Real;
use crate::spatial::pairs_within;
use crate::union_find::UnionFind;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationParams {
    pub epsilon_agg: f64,
}

impl Default for AggregationParams {
    fn default() -> Self {
        Self { epsilon_agg: 0.6 }
    }
}

/// A cluster together with the agent that observed it.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedCluster<T> {
    pub agent: AgentId,
    pub cluster: PointCluster<T>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchResult<T> {
    pub unique: Vec<TaggedCluster<T>>,
    /// Each tuple holds clusters from distinct agents, sorted by agent id.
    pub shared: Vec<Vec<TaggedCluster<T>>>,
}

/// Work counters. Cluster-level operations are the ones whose count should
/// depend only on the number of objects; per-point work is kept apart.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AggregationTelemetry {
    pub clusters_in: usize,
    pub distance_checks: usize,
    pub unions: usize,
    pub tuples_merged: usize,
    pub clusters_out: usize,
    pub point_ops: usize,
}

impl AggregationTelemetry {
    /// Total cluster-level operations: transforms, grid inserts, distance
    /// checks, unions and per-member merge steps.
    pub fn cluster_ops(&self) -> usize {
        2 * self.clusters_in + self.distance_checks + self.unions + self.tuples_merged + self.clusters_out
    }
}

/// Index form of [`match_clusters`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IndexMatch {
    pub unique: Vec<usize>,
    /// Member indices per tuple, sorted by agent id.
    pub shared: Vec<Vec<usize>>,
    pub distance_checks: usize,
    pub unions: usize,
}

/// Links centers of different agents closer than `epsilon`, takes connected
/// components, and keeps per component the member of each agent nearest
/// the component centroid (lower index on ties). Other members and
/// singleton components are unique.
pub fn match_indices<T: Real>(centers: &[Vec3<T>], agents: &[AgentId], epsilon: T) -> IndexMatch {
    assert_eq!(centers.len(), agents.len());
    let (pairs, checks) = pairs_within(centers, epsilon, |i, j| agents[i] != agents[j]);
    let mut uf = UnionFind::new(centers.len());
    for (a, b) in pairs {
        uf.union(a, b);
    }
    let mut out = IndexMatch {
        distance_checks: checks,
        unions: uf.merges(),
        ..Default::default()
    };
    for g in uf.groups() {
        if g.len() == 1 {
            out.unique.push(g[0]);
            continue;
        }
        let centroid = Vec3::mean(g.iter().map(|&i| centers[i])).expect("non-empty group");
        // `g` is ascending, so strict '<' keeps the lower index on ties
        let mut keep: Vec<usize> = Vec::new();
        for &i in &g {
            match keep.iter_mut().find(|k| agents[**k] == agents[i]) {
                Some(k) => {
                    if centers[i].distance_squared(centroid) < centers[*k].distance_squared(centroid) {
                        *k = i;
                    }
                }
                None => keep.push(i),
            }
        }
        out.unique.extend(g.iter().copied().filter(|i| !keep.contains(i)));
        if keep.len() >= 2 {
            keep.sort_by_key(|&i| (agents[i], i));
            out.shared.push(keep);
        } else {
            out.unique.extend(keep);
        }
    }
    out
}

/// Groups clusters (all in one frame) into unique clusters and cross-agent
/// tuples. Also returns `(distance_checks, unions)`.
pub fn match_clusters<T: Real>(clusters: Vec<TaggedCluster<T>>, epsilon_agg: T) -> (MatchResult<T>, usize, usize) {
    let centers: Vec<Vec3<T>> = clusters.iter().map(|c| c.cluster.center).collect();
    let agents: Vec<AgentId> = clusters.iter().map(|c| c.agent).collect();
    let m = match_indices(&centers, &agents, epsilon_agg);
    let mut slots: Vec<Option<TaggedCluster<T>>> = clusters.into_iter().map(Some).collect();
    let mut take = |i: usize| slots[i].take().expect("each index used once");
    let shared = m.shared.iter().map(|t| t.iter().map(|&i| take(i)).collect()).collect();
    let unique = m.unique.iter().map(|&i| take(i)).collect();
    (MatchResult { unique, shared }, m.distance_checks, m.unions)
}

/// Union of points, mean center and feature, most confident box (lower
/// agent id on ties).
pub fn merge_tuple<T: Real>(tuple: &[TaggedCluster<T>]) -> PointCluster<T> {
    assert!(!tuple.is_empty(), "cannot merge an empty tuple");
    let k = T::from_usize_lossy(tuple.len());
    let center = Vec3::mean(tuple.iter().map(|c| c.cluster.center)).expect("non-empty tuple");
    let dim = tuple.iter().map(|c| c.cluster.feature.len()).max().unwrap_or(0);
    let mut feature = vec![T::zero(); dim];
    for c in tuple {
        for (acc, &v) in feature.iter_mut().zip(&c.cluster.feature) {
            *acc += v;
        }
    }
    for v in &mut feature {
        *v /= k;
    }
    let mut points = Vec::with_capacity(tuple.iter().map(|c| c.cluster.len()).sum());
    let mut scores = Vec::with_capacity(points.capacity());
    for c in tuple {
        points.extend_from_slice(&c.cluster.points);
        scores.extend_from_slice(&c.cluster.semantic_scores);
    }
    let proposal = tuple
        .iter()
        .filter_map(|c| c.cluster.proposal.map(|b| (c.agent, b)))
        .reduce(|best, cur| {
            let better = cur.1.confidence > best.1.confidence
                || (cur.1.confidence == best.1.confidence && cur.0 < best.0);
            if better {
                cur
            } else {
                best
            }
        })
        .map(|(_, b)| b);
    let object_id = tuple.iter().find_map(|c| c.cluster.object_id);
    PointCluster {
        points,
        center,
        feature,
        proposal,
        semantic_scores: scores,
        object_id,
    }
}

/// Grows the box to enclose the points in its own frame. Yaw and confidence
/// are kept; the box never shrinks.
pub fn refit_box<T: Real>(b: &OrientedBox<T>, points: &[Vec3<T>]) -> OrientedBox<T> {
    let half = T::lit(0.5);
    let mut lo = Vec3::new(-b.size.l * half, -b.size.w * half, -b.size.h * half);
    let mut hi = Vec3::new(b.size.l * half, b.size.w * half, b.size.h * half);
    for &p in points {
        let q = b.to_local(p);
        lo = Vec3::new(lo.x.min(q.x), lo.y.min(q.y), lo.z.min(q.z));
        hi = Vec3::new(hi.x.max(q.x), hi.y.max(q.y), hi.z.max(q.z));
    }
    let mid = (lo + hi) * half;
    let size = BoxSize::new(
        (hi.z - lo.z).max(b.size.h),
        (hi.y - lo.y).max(b.size.w),
        (hi.x - lo.x).max(b.size.l),
    );
    OrientedBox {
        center: b.frame().apply(mid),
        size,
        yaw: b.yaw,
        confidence: b.confidence,
    }
}

/// Fuses the ego's clusters with everything received. Received clusters
/// are mapped into the ego frame through their message poses. Output holds
/// one cluster per unique cluster or shared tuple.
pub fn aggregate<T: Real>(
    ego: &AgentMessage<T>,
    received: &[AgentMessage<T>],
    params: &AggregationParams,
) -> (Vec<PointCluster<T>>, AggregationTelemetry) {
    let mut tel = AggregationTelemetry::default();
    let mut tagged: Vec<TaggedCluster<T>> = ego
        .clusters
        .iter()
        .map(|c| TaggedCluster {
            agent: ego.agent_id,
            cluster: c.clone(),
        })
        .collect();
    for m in received {
        let t = relative_pose(&ego.pose, &m.pose);
        for c in &m.clusters {
            tel.point_ops += c.len();
            tagged.push(TaggedCluster {
                agent: m.agent_id,
                cluster: c.transformed(&t),
            });
        }
    }
    tel.clusters_in = tagged.len();

    let (matched, checks, unions) = match_clusters(tagged, T::lit(params.epsilon_agg));
    tel.distance_checks = checks;
    tel.unions = unions;

    let mut out: Vec<PointCluster<T>> = matched.unique.into_iter().map(|c| c.cluster).collect();
    for tuple in &matched.shared {
        tel.tuples_merged += tuple.len();
        let mut m = merge_tuple(tuple);
        if let Some(b) = m.proposal {
            m.proposal = Some(refit_box(&b, &m.points));
            tel.point_ops += 2 * m.len();
        }
        out.push(m);
    }
    tel.clusters_out = out.len();
    (out, tel)
}

/// Writes `frame,agent,x,y,z,h,w,l,yaw,confidence` rows, one per proposal.
pub fn write_detections_csv<T: Real, W: Write>(
    mut w: W,
    rows: impl IntoIterator<Item = (u64, AgentId, OrientedBox<T>)>,
) -> io::Result<()> {
    writeln!(w, "frame,agent,x,y,z,h,w,l,yaw,confidence")?;
    for (frame, agent, b) in rows {
        writeln!(
            w,
            "{frame},{agent},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.5},{:.4}",
            b.center.x, b.center.y, b.center.z, b.size.h, b.size.w, b.size.l, b.yaw, b.confidence
        )?;
    }
    Ok(())
}
