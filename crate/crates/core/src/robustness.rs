//! Pose correction by pose-graph optimization and latency compensation by
//! constant-velocity extrapolation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregation::match_indices;
use crate::cluster::{AgentId, AgentMessage};
use crate::geometry::{relative_pose, Pose, Vec2, Vec3};
use crate::linalg::{cholesky, cholesky_solve, Matrix};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseCorrectionParams {
    pub epsilon_pose: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this.
    pub min_decrease: f64,
    pub initial_damping: f64,
}

impl Default for PoseCorrectionParams {
    fn default() -> Self {
        Self {
            epsilon_pose: 1.5,
            max_iterations: 50,
            min_decrease: 1e-6,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyParams {
    pub epsilon_lo: f64,
    pub epsilon_hi: f64,
}

impl Default for LatencyParams {
    fn default() -> Self {
        Self {
            epsilon_lo: 0.5,
            epsilon_hi: 2.0,
        }
    }
}

/// One observation: agent `agent` saw object `object` at `observed`, in the
/// agent's own frame (bird's-eye).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseEdge<T> {
    pub agent: AgentId,
    pub object: usize,
    pub observed: Vec2<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseGraph<T> {
    pub ego: AgentId,
    /// Agent poses in the common frame; the ego's is held fixed.
    pub agents: BTreeMap<AgentId, Pose<T>>,
    /// Object positions in the common frame.
    pub objects: Vec<Vec2<T>>,
    pub edges: Vec<PoseEdge<T>>,
}

impl<T: Real> PoseGraph<T> {
    fn residual(&self, e: &PoseEdge<T>, agents: &BTreeMap<AgentId, Pose<T>>, objects: &[Vec2<T>]) -> Vec2<T> {
        let p = agents[&e.agent];
        (objects[e.object] - Vec2::new(p.x, p.y)).rotated(-p.yaw) - e.observed
    }

    fn cost_of(&self, agents: &BTreeMap<AgentId, Pose<T>>, objects: &[Vec2<T>]) -> T {
        self.edges
            .iter()
            .map(|e| {
                let r = self.residual(e, agents, objects);
                r.dot(r)
            })
            .sum()
    }

    /// Sum of squared residuals at the current estimate.
    pub fn cost(&self) -> T {
        self.cost_of(&self.agents, &self.objects)
    }

    pub fn residual_norms(&self) -> Vec<T> {
        self.edges
            .iter()
            .map(|e| self.residual(e, &self.agents, &self.objects).norm())
            .collect()
    }
}

/// Matches clusters across agents with `epsilon_pose` and turns each shared
/// tuple into an object vertex (mean of the members' common-frame centers)
/// with one edge per member.
pub fn build_pose_graph<T: Real>(ego: &AgentMessage<T>, received: &[AgentMessage<T>], epsilon_pose: T) -> PoseGraph<T> {
    let mut centers = Vec::new();
    let mut agents = Vec::new();
    let mut local = Vec::new();
    let mut poses = BTreeMap::new();
    for m in std::iter::once(ego).chain(received) {
        poses.insert(m.agent_id, m.pose);
        for c in &m.clusters {
            centers.push(m.pose.apply(c.center));
            agents.push(m.agent_id);
            local.push(c.center.xy());
        }
    }
    let matched = match_indices(&centers, &agents, epsilon_pose);
    let mut objects = Vec::with_capacity(matched.shared.len());
    let mut edges = Vec::new();
    for tuple in &matched.shared {
        let mean = Vec3::mean(tuple.iter().map(|&i| centers[i])).expect("non-empty tuple");
        for &i in tuple {
            edges.push(PoseEdge {
                agent: agents[i],
                object: objects.len(),
                observed: local[i],
            });
        }
        objects.push(mean.xy());
    }
    PoseGraph {
        ego: ego.agent_id,
        agents: poses,
        objects,
        edges,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseCorrection<T> {
    pub graph: PoseGraph<T>,
    pub initial_cost: T,
    pub final_cost: T,
    pub iterations: usize,
    /// Normal equations were singular at the start; poses left unchanged.
    pub degenerate: bool,
}

impl<T: Real> PoseCorrection<T> {
    pub fn pose(&self, agent: AgentId) -> Option<Pose<T>> {
        self.graph.agents.get(&agent).copied()
    }
}

struct Layout {
    /// Column offset of each free agent's (x, y, yaw).
    agent_col: BTreeMap<AgentId, usize>,
    object_col: usize,
    n: usize,
}

fn layout<T: Real>(g: &PoseGraph<T>) -> Layout {
    let agent_col: BTreeMap<AgentId, usize> = g
        .agents
        .keys()
        .filter(|&&a| a != g.ego)
        .enumerate()
        .map(|(k, &a)| (a, 3 * k))
        .collect();
    let object_col = 3 * agent_col.len();
    Layout {
        n: object_col + 2 * g.objects.len(),
        agent_col,
        object_col,
    }
}

/// Gauss-Newton normal equations `JᵀJ` and `-Jᵀr`.
fn normal_equations<T: Real>(g: &PoseGraph<T>, lay: &Layout) -> (Matrix<T>, Vec<T>) {
    let mut h = Matrix::zeros(lay.n);
    let mut rhs = vec![T::zero(); lay.n];
    for e in &g.edges {
        let p = g.agents[&e.agent];
        let (s, c) = p.yaw.sin_cos();
        let d = g.objects[e.object] - Vec2::new(p.x, p.y);
        let r = d.rotated(-p.yaw) - e.observed;
        // r = Rᵀ(o − t) − z with Rᵀ = [[c, s], [−s, c]]
        let mut cols: Vec<(usize, [T; 2])> = Vec::with_capacity(5);
        if let Some(&k) = lay.agent_col.get(&e.agent) {
            cols.push((k, [-c, s]));
            cols.push((k + 1, [-s, -c]));
            cols.push((k + 2, [-s * d.x + c * d.y, -c * d.x - s * d.y]));
        }
        let o = lay.object_col + 2 * e.object;
        cols.push((o, [c, -s]));
        cols.push((o + 1, [s, c]));
        for &(i, ji) in &cols {
            rhs[i] -= ji[0] * r.x + ji[1] * r.y;
            for &(j, jj) in &cols {
                h.add(i, j, ji[0] * jj[0] + ji[1] * jj[1]);
            }
        }
    }
    (h, rhs)
}

fn apply_step<T: Real>(g: &PoseGraph<T>, lay: &Layout, dx: &[T]) -> (BTreeMap<AgentId, Pose<T>>, Vec<Vec2<T>>) {
    let mut agents = g.agents.clone();
    for (a, &k) in &lay.agent_col {
        let p = agents[a];
        agents.insert(*a, Pose::new(p.x + dx[k], p.y + dx[k + 1], p.z, p.yaw + dx[k + 2]));
    }
    let objects = g
        .objects
        .iter()
        .enumerate()
        .map(|(s, o)| {
            let k = lay.object_col + 2 * s;
            Vec2::new(o.x + dx[k], o.y + dx[k + 1])
        })
        .collect();
    (agents, objects)
}

/// Levenberg-Marquardt over free agent poses and object positions. Steps
/// that raise the cost are rejected, so the cost never increases.
pub fn optimize_poses<T: Real>(graph: &PoseGraph<T>, params: &PoseCorrectionParams) -> PoseCorrection<T> {
    let mut g = graph.clone();
    let initial_cost = g.cost();
    let lay = layout(&g);
    let mut out = PoseCorrection {
        graph: graph.clone(),
        initial_cost,
        final_cost: initial_cost,
        iterations: 0,
        degenerate: false,
    };
    if g.edges.is_empty() || lay.n == 0 {
        return out;
    }
    let pivot_tol = T::lit(1e-10);
    let (h0, _) = normal_equations(&g, &lay);
    if cholesky(&h0, pivot_tol).is_none() {
        log::warn!("pose graph is under-constrained; keeping input poses");
        out.degenerate = true;
        return out;
    }

    let mut lambda = T::lit(params.initial_damping);
    let mut cost = initial_cost;
    let tiny = T::min_positive_value().sqrt();
    for it in 0..params.max_iterations {
        out.iterations = it + 1;
        let (mut h, rhs) = normal_equations(&g, &lay);
        let diag = h.diagonal();
        for (i, d) in diag.into_iter().enumerate() {
            h.add(i, i, lambda * d.max(tiny));
        }
        let Some(l) = cholesky(&h, T::zero()) else {
            lambda *= T::lit(10.0);
            continue;
        };
        let dx = cholesky_solve(&l, &rhs);
        let (agents, objects) = apply_step(&g, &lay, &dx);
        let new_cost = g.cost_of(&agents, &objects);
        if new_cost <= cost {
            let decrease = cost - new_cost;
            g.agents = agents;
            g.objects = objects;
            cost = new_cost;
            lambda = (lambda / T::lit(10.0)).max(T::lit(1e-12));
            if decrease < T::lit(params.min_decrease) || cost <= tiny {
                break;
            }
        } else {
            lambda *= T::lit(10.0);
            if lambda > T::lit(1e12) {
                break;
            }
        }
    }
    out.final_cost = cost;
    out.graph = g;
    out
}

/// Greedy pairing of previous and current clusters whose center distance
/// lies in `[epsilon_lo, epsilon_hi]`, shortest first (lower indices on
/// ties). Returns `(prev, cur)` index pairs in selection order.
pub fn match_temporal<T: Real>(prev: &[Vec3<T>], cur: &[Vec3<T>], params: &LatencyParams) -> Vec<(usize, usize)> {
    let (lo, hi) = (T::lit(params.epsilon_lo), T::lit(params.epsilon_hi));
    let mut cands: Vec<(T, usize, usize)> = Vec::new();
    for (i, p) in prev.iter().enumerate() {
        for (j, c) in cur.iter().enumerate() {
            let d = p.distance(*c);
            if d >= lo && d <= hi {
                cands.push((d, i, j));
            }
        }
    }
    cands.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((a.1, a.2).cmp(&(b.1, b.2)))
    });
    let mut used_p = vec![false; prev.len()];
    let mut used_c = vec![false; cur.len()];
    let mut out = Vec::new();
    for (_, i, j) in cands {
        if !used_p[i] && !used_c[j] {
            used_p[i] = true;
            used_c[j] = true;
            out.push((i, j));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CompensationStats {
    pub matched: usize,
    pub shifted_points: usize,
}

/// Moves each cluster of `msg` that has a temporal match in `prev` by its
/// estimated bird's-eye velocity times `now − msg.timestamp`. Previous
/// clusters are first expressed in the frame of `msg`.
pub fn compensate_latency<T: Real>(
    prev: Option<&AgentMessage<T>>,
    msg: &AgentMessage<T>,
    now: T,
    params: &LatencyParams,
) -> (AgentMessage<T>, CompensationStats) {
    let mut stats = CompensationStats::default();
    let Some(prev) = prev else {
        return (msg.clone(), stats);
    };
    let tau = now - msg.timestamp;
    let gap = msg.timestamp - prev.timestamp;
    if !(gap > T::zero()) {
        log::warn!(
            "agent {}: history timestamp {} is not before message timestamp {}; skipping compensation",
            msg.agent_id,
            prev.timestamp,
            msg.timestamp
        );
        return (msg.clone(), stats);
    }
    if tau == T::zero() {
        return (msg.clone(), stats);
    }
    let to_cur = relative_pose(&msg.pose, &prev.pose);
    let prev_centers: Vec<Vec3<T>> = prev.clusters.iter().map(|c| to_cur.apply(c.center)).collect();
    let cur_centers: Vec<Vec3<T>> = msg.clusters.iter().map(|c| c.center).collect();
    let mut out = msg.clone();
    for (i, j) in match_temporal(&prev_centers, &cur_centers, params) {
        let d = cur_centers[j] - prev_centers[i];
        let shift = Vec3::new(d.x / gap * tau, d.y / gap * tau, T::zero());
        let c = &mut out.clusters[j];
        *c = c.translated(shift);
        stats.matched += 1;
        stats.shifted_points += c.len();
    }
    (out, stats)
}
