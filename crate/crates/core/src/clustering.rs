//! Foreground point grouping by center votes.
//!
//! Points whose semantic score clears the foreground threshold are linked
//! when their predicted centers are closer than `epsilon_point`; clusters are
//! the connected components of that graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::PointCluster;
use crate::geometry::Vec3;
use crate::scalar::Real;
use crate::scene::LabeledPointCloud;
use crate::spatial::pairs_within;
use crate::union_find::UnionFind;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringParams {
    pub epsilon_point: f64,
    pub fg_threshold: f64,
    pub min_cluster_points: usize,
}

impl Default for ClusteringParams {
    fn default() -> Self {
        Self {
            epsilon_point: 0.6,
            fg_threshold: 0.5,
            min_cluster_points: 3,
        }
    }
}

/// Work counters for one grouping call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GroupingStats {
    pub foreground_points: usize,
    pub distance_checks: usize,
    pub unions: usize,
}

/// Partition of cloud indices into clusters, before the size filter is
/// applied and with every member index ascending.
pub fn foreground_components<T: Real>(
    cloud: &LabeledPointCloud<T>,
    params: &ClusteringParams,
) -> (Vec<Vec<usize>>, GroupingStats) {
    let threshold = T::lit(params.fg_threshold);
    let fg: Vec<usize> = (0..cloud.len())
        .filter(|&i| cloud.points[i].semantic_score >= threshold)
        .collect();
    let votes: Vec<Vec3<T>> = fg.iter().map(|&i| cloud.points[i].predicted_center).collect();
    let (pairs, checks) = pairs_within(&votes, T::lit(params.epsilon_point), |_, _| true);
    let mut uf = UnionFind::new(fg.len());
    for (a, b) in pairs {
        uf.union(a, b);
    }
    let stats = GroupingStats {
        foreground_points: fg.len(),
        distance_checks: checks,
        unions: uf.merges(),
    };
    let groups = uf
        .groups()
        .into_iter()
        .map(|g| g.into_iter().map(|k| fg[k]).collect())
        .collect();
    (groups, stats)
}

/// Groups the cloud into point clusters (no features or proposals yet).
pub fn group_clusters<T: Real>(cloud: &LabeledPointCloud<T>, params: &ClusteringParams) -> Vec<PointCluster<T>> {
    group_clusters_with_stats(cloud, params).0
}

pub fn group_clusters_with_stats<T: Real>(
    cloud: &LabeledPointCloud<T>,
    params: &ClusteringParams,
) -> (Vec<PointCluster<T>>, GroupingStats) {
    let (groups, stats) = foreground_components(cloud, params);
    let clusters = groups
        .into_iter()
        .filter(|g| g.len() >= params.min_cluster_points.max(1))
        .map(|g| {
            let pts = &cloud.points;
            let center = Vec3::mean(g.iter().map(|&i| pts[i].predicted_center)).expect("non-empty group");
            let mut c = PointCluster::new(
                g.iter().map(|&i| pts[i].position).collect(),
                g.iter().map(|&i| pts[i].semantic_score).collect(),
                center,
            );
            c.object_id = majority_id(g.iter().filter_map(|&i| pts[i].object_id));
            c
        })
        .collect();
    (clusters, stats)
}

fn majority_id(ids: impl Iterator<Item = u32>) -> Option<u32> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for id in ids {
        *counts.entry(id).or_insert(0) += 1;
    }
    // max_by_key keeps the last maximum; iterate in reverse so ties go to the smaller id
    counts.into_iter().rev().max_by_key(|&(_, n)| n).map(|(id, _)| id)
}
