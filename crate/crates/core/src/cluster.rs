//! The collaborative message unit and the per-agent message that carries it.

use crate::boxes::OrientedBox;
use crate::geometry::{Pose, Vec3};
use crate::scalar::Real;

pub type AgentId = u32;

/// Points, center, feature and optional proposal box of one object hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCluster<T> {
    pub points: Vec<Vec3<T>>,
    pub center: Vec3<T>,
    pub feature: Vec<T>,
    pub proposal: Option<OrientedBox<T>>,
    /// One foreground score per point, aligned with `points`.
    pub semantic_scores: Vec<T>,
    /// Simulation bookkeeping only. Never serialized and never read by
    /// matching, merging or correction code.
    pub object_id: Option<u32>,
}

impl<T: Real> PointCluster<T> {
    pub fn new(points: Vec<Vec3<T>>, semantic_scores: Vec<T>, center: Vec3<T>) -> Self {
        debug_assert_eq!(points.len(), semantic_scores.len());
        Self {
            points,
            center,
            feature: Vec::new(),
            proposal: None,
            semantic_scores,
            object_id: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rigidly moves every geometric field by `t`.
    pub fn transformed(&self, t: &Pose<T>) -> Self {
        Self {
            points: self.points.iter().map(|&p| t.apply(p)).collect(),
            center: t.apply(self.center),
            feature: self.feature.clone(),
            proposal: self.proposal.map(|b| b.transformed(t)),
            semantic_scores: self.semantic_scores.clone(),
            object_id: self.object_id,
        }
    }

    /// Translates points, center and proposal center by `offset`.
    pub fn translated(&self, offset: Vec3<T>) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            *p += offset;
        }
        out.center += offset;
        if let Some(b) = out.proposal.as_mut() {
            b.center += offset;
        }
        out
    }
}

pub fn transform_cluster<T: Real>(c: &PointCluster<T>, t: &Pose<T>) -> PointCluster<T> {
    c.transformed(t)
}

/// Everything one agent transmits in a round.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentMessage<T> {
    pub agent_id: AgentId,
    /// Observation time in seconds.
    pub timestamp: T,
    pub pose: Pose<T>,
    pub clusters: Vec<PointCluster<T>>,
}

impl<T: Real> AgentMessage<T> {
    pub fn new(agent_id: AgentId, timestamp: T, pose: Pose<T>, clusters: Vec<PointCluster<T>>) -> Self {
        debug_assert!(timestamp >= T::zero());
        Self {
            agent_id,
            timestamp,
            pose,
            clusters,
        }
    }

    pub fn total_points(&self) -> usize {
        self.clusters.iter().map(PointCluster::len).sum()
    }

    /// Clusters re-expressed in the frame of `ego`.
    pub fn clusters_in_frame_of(&self, ego: &Pose<T>) -> Vec<PointCluster<T>> {
        let t = crate::geometry::relative_pose(ego, &self.pose);
        self.clusters.iter().map(|c| c.transformed(&t)).collect()
    }
}
