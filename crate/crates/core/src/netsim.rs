//! Simulated links: latency, sender-side pose corruption, bandwidth caps
//! and a fixed-step delivery queue.

use std::collections::{BTreeMap, VecDeque};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cluster::{AgentId, AgentMessage, PointCluster};
use crate::error::WireError;
use crate::geometry::Pose;
use crate::packing::{cluster_values, sample_count, CommReport, PackingParams};
use crate::scalar::Real;
use crate::seed::Rng;
use crate::wire::{serialize, WireOptions};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub latency_s: f64,
    pub pos_noise_sigma: f64,
    pub heading_noise_sigma: f64,
    /// Upper bound on the message comm volume (log2 bytes). `None` is unlimited.
    pub bandwidth_cap_log2: Option<f64>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            latency_s: 0.0,
            pos_noise_sigma: 0.0,
            heading_noise_sigma: 0.0,
            bandwidth_cap_log2: None,
        }
    }
}

/// x, y and yaw perturbed by independent zero-mean Gaussians.
pub fn corrupt_pose<T: Real>(pose: &Pose<T>, cfg: &ChannelConfig, rng: &mut Rng) -> Pose<T> {
    let mut draw = |sigma: f64| {
        if sigma > 0.0 {
            T::lit(Normal::new(0.0, sigma).expect("finite sigma").sample(rng))
        } else {
            T::zero()
        }
    };
    let dx = draw(cfg.pos_noise_sigma);
    let dy = draw(cfg.pos_noise_sigma);
    let dyaw = draw(cfg.heading_noise_sigma);
    Pose::new(pose.x + dx, pose.y + dy, pose.z, pose.yaw + dyaw)
}

/// Sampling rates tried by [`enforce_bandwidth`], largest first.
pub const ZETA_GRID: [f64; 7] = [1.0, 1.0 / 4.0, 1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandwidthChoice {
    pub zeta: f64,
    /// Predicted volume of the message packed at `zeta`.
    pub comm: CommReport,
    /// `false` when even the smallest rate exceeds the cap.
    pub feasible: bool,
}

/// Volume the clusters would occupy after sampling at `zeta`.
pub fn predicted_comm<T: Real>(clusters: &[PointCluster<T>], zeta: f64, include_scores: bool) -> CommReport {
    CommReport::from_values(
        clusters
            .iter()
            .map(|c| cluster_values(sample_count(c.len(), zeta), c.feature.len(), include_scores))
            .sum(),
    )
}

/// Picks the largest grid rate not above `params.zeta` whose packed volume
/// fits under the cap. Falls back to the smallest rate when nothing fits.
pub fn enforce_bandwidth<T: Real>(
    clusters: &[PointCluster<T>],
    params: &PackingParams,
    cap_log2: Option<f64>,
) -> (PackingParams, BandwidthChoice) {
    let below = ZETA_GRID.iter().copied().filter(|&z| z < params.zeta - 1e-12);
    let candidates: Vec<f64> = std::iter::once(params.zeta).chain(below).collect();
    let mut choice = None;
    for &z in &candidates {
        let comm = predicted_comm(clusters, z, params.include_scores);
        if cap_log2.is_none_or(|cap| comm.comm_log2 <= cap) {
            choice = Some(BandwidthChoice {
                zeta: z,
                comm,
                feasible: true,
            });
            break;
        }
    }
    let choice = choice.unwrap_or_else(|| {
        let z = ZETA_GRID[ZETA_GRID.len() - 1].min(params.zeta);
        BandwidthChoice {
            zeta: z,
            comm: predicted_comm(clusters, z, params.include_scores),
            feasible: false,
        }
    });
    (
        PackingParams {
            zeta: choice.zeta,
            ..*params
        },
        choice,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct InFlightMessage {
    pub payload: Vec<u8>,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub send_tick: u64,
    pub deliver_tick: u64,
}

/// Fixed-step message queue between agents.
#[derive(Clone, Debug)]
pub struct Network {
    dt: f64,
    tick: u64,
    ego: AgentId,
    all_to_all: bool,
    default_link: ChannelConfig,
    links: BTreeMap<(AgentId, AgentId), ChannelConfig>,
    queue: Vec<InFlightMessage>,
    history_depth: usize,
    history: BTreeMap<(AgentId, AgentId), VecDeque<InFlightMessage>>,
}

impl Network {
    pub fn new(dt: f64, ego: AgentId, default_link: ChannelConfig) -> Self {
        assert!(dt > 0.0, "tick length must be positive");
        Self {
            dt,
            tick: 0,
            ego,
            all_to_all: false,
            default_link,
            links: BTreeMap::new(),
            queue: Vec::new(),
            history_depth: 2,
            history: BTreeMap::new(),
        }
    }

    pub fn with_all_to_all(mut self, on: bool) -> Self {
        self.all_to_all = on;
        self
    }

    pub fn with_history_depth(mut self, depth: usize) -> Self {
        self.history_depth = depth.max(1);
        self
    }

    pub fn set_link(&mut self, sender: AgentId, receiver: AgentId, cfg: ChannelConfig) {
        self.links.insert((sender, receiver), cfg);
    }

    pub fn link(&self, sender: AgentId, receiver: AgentId) -> &ChannelConfig {
        self.links.get(&(sender, receiver)).unwrap_or(&self.default_link)
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn tick_time(&self, tick: u64) -> f64 {
        tick as f64 * self.dt
    }

    pub fn advance(&mut self) {
        self.tick += 1;
    }

    /// Whole ticks a latency occupies, rounding up.
    pub fn latency_ticks(&self, latency_s: f64) -> u64 {
        ((latency_s / self.dt) - 1e-9).ceil().max(0.0) as u64
    }

    fn receivers(&self, sender: AgentId, agents: &[AgentId]) -> Vec<AgentId> {
        if self.all_to_all {
            agents.iter().copied().filter(|&a| a != sender).collect()
        } else if sender != self.ego {
            vec![self.ego]
        } else {
            Vec::new()
        }
    }

    /// Queues `msg` to every receiver at the current tick. The pose is
    /// corrupted per link before encoding, so the payload carries the noisy
    /// pose. Returns the number of copies queued.
    pub fn send<T: Real>(
        &mut self,
        msg: &AgentMessage<T>,
        agents: &[AgentId],
        opts: WireOptions,
        rng: &mut Rng,
    ) -> Result<usize, WireError> {
        let receivers = self.receivers(msg.agent_id, agents);
        for &r in &receivers {
            let cfg = *self.link(msg.agent_id, r);
            let noisy = AgentMessage {
                pose: corrupt_pose(&msg.pose, &cfg, rng),
                ..msg.clone()
            };
            self.queue.push(InFlightMessage {
                payload: serialize(&noisy, opts)?,
                sender: msg.agent_id,
                receiver: r,
                send_tick: self.tick,
                deliver_tick: self.tick + self.latency_ticks(cfg.latency_s),
            });
        }
        Ok(receivers.len())
    }

    /// Removes and returns everything due by the current tick, ordered by
    /// delivery tick, receiver, sender. Each delivery is also recorded in the
    /// receiver's history for its sender.
    pub fn deliver(&mut self) -> Vec<InFlightMessage> {
        let now = self.tick;
        let (mut due, rest): (Vec<_>, Vec<_>) = self.queue.drain(..).partition(|m| m.deliver_tick <= now);
        self.queue = rest;
        due.sort_by_key(|m| (m.deliver_tick, m.receiver, m.sender, m.send_tick));
        for m in &due {
            let h = self.history.entry((m.receiver, m.sender)).or_default();
            h.push_back(m.clone());
            while h.len() > self.history_depth {
                h.pop_front();
            }
        }
        due
    }

    /// Past deliveries from `sender` to `receiver`, oldest first.
    pub fn history(&self, receiver: AgentId, sender: AgentId) -> impl Iterator<Item = &InFlightMessage> {
        self.history.get(&(receiver, sender)).into_iter().flatten()
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}
