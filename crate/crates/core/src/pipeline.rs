//! End-to-end scenario runs and parameter sweeps.
//!
//! One frame: step the scene, observe and cluster per agent, attach
//! proposals and features, pack under the bandwidth cap, exchange over the
//! simulated network, correct poses, compensate latency, aggregate at the
//! ego and score the ego's detections.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::aggregation::{aggregate, write_detections_csv, AggregationTelemetry};
use crate::boxes::OrientedBox;
use crate::cluster::{AgentId, AgentMessage, PointCluster};
use crate::clustering::group_clusters;
use crate::config::ScenarioConfig;
use crate::error::{ConfigError, PipelineError};
use crate::geometry::Pose;
use crate::evaluation::{compute_ap, compute_category_ap, FrameEval, GroundTruth, MetricRow, METRIC_HEADER};
use crate::netsim::{enforce_bandwidth, Network};
use crate::packing::{comm_volume, generate_proposals, override_points, pack_message};
use crate::robustness::{build_pose_graph, compensate_latency, optimize_poses};
use crate::scalar::Real;
use crate::scene::{generate_scene, observe, step_scene, LabeledPointCloud, Scene};
use crate::seed::{derive_seed, repetition_seed, rng_for, Stream};
use crate::sir::{extract_cluster_feature, SirWeights};
use crate::wire::{deserialize, WireOptions};

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunReport<T> {
    pub metrics: MetricRow,
    /// AP at each configured IoU threshold.
    pub ap: Vec<(f64, f64)>,
    /// Every frame, warm-up included.
    pub frames: Vec<FrameEval<T>>,
    /// `(frame, evaluating agent, box)` in the ego frame.
    pub detections: Vec<(u64, AgentId, OrientedBox<T>)>,
    /// Volume of every message put on the network.
    pub comm_log2: Vec<f64>,
    pub telemetry: Vec<AggregationTelemetry>,
    /// Degenerate pose graphs and infeasible bandwidth caps.
    pub warnings: Vec<String>,
}

/// One agent's processed view of a frame, in its own frame.
#[derive(Clone, Debug)]
pub struct AgentView<T> {
    pub agent: AgentId,
    pub cloud: LabeledPointCloud<T>,
    pub clusters: Vec<PointCluster<T>>,
}

/// Scene state for `frame`: the generated scene advanced `frame` times.
pub fn scene_at<T: Real>(cfg: &ScenarioConfig, frame: usize) -> Result<Scene<T>, PipelineError> {
    let mut scene = generate_scene(&cfg.scene, &cfg.agents, derive_seed(cfg.seed, Stream::Scene, &[]))?;
    for _ in 0..frame {
        scene = step_scene(&scene, T::lit(cfg.dt));
    }
    Ok(scene)
}

/// Observation, grouping, proposals, point override and SIR features for
/// every agent.
pub fn perceive<T: Real>(
    cfg: &ScenarioConfig,
    scene: &Scene<T>,
    weights: &SirWeights<T>,
    frame: u64,
) -> Result<Vec<AgentView<T>>, PipelineError> {
    let fg = T::lit(cfg.clustering.fg_threshold);
    scene
        .agents
        .iter()
        .map(|agent| {
            let id = u64::from(agent.agent_id);
            let cloud = observe(scene, agent, &cfg.oracle, derive_seed(cfg.seed, Stream::Observation, &[frame, id]))?;
            let truth: Vec<OrientedBox<T>> = scene.boxes_in_frame(&agent.pose).into_iter().map(|(_, b)| b).collect();
            let mut rng = rng_for(cfg.seed, Stream::Proposal, &[frame, id]);
            let proposed = generate_proposals(
                group_clusters(&cloud, &cfg.clustering),
                &truth,
                &cfg.packing.proposal_noise,
                &mut rng,
            );
            let clusters = proposed
                .iter()
                .map(|c| {
                    let mut c = override_points(c, &cloud, fg);
                    c.feature = extract_cluster_feature(&c, weights)?;
                    Ok(c)
                })
                .collect::<Result<Vec<_>, PipelineError>>()?;
            Ok(AgentView {
                agent: agent.agent_id,
                cloud,
                clusters,
            })
        })
        .collect()
}

fn ground_truth<T: Real>(scene: &Scene<T>, views: &[AgentView<T>], ego: AgentId) -> Vec<GroundTruth<T>> {
    let counts: Vec<(AgentId, BTreeMap<u32, usize>)> =
        views.iter().map(|v| (v.agent, v.cloud.foreground_counts())).collect();
    scene
        .boxes_in_frame(&scene.ego().pose)
        .into_iter()
        .filter_map(|(id, bbox)| {
            let (mut ego_points, mut other_points) = (0, 0);
            for (agent, c) in &counts {
                let n = c.get(&id).copied().unwrap_or(0);
                if *agent == ego {
                    ego_points += n;
                } else {
                    other_points += n;
                }
            }
            (ego_points + other_points > 0).then_some(GroundTruth {
                bbox,
                ego_points,
                other_points,
            })
        })
        .collect()
}

/// Pose-graph estimates for the senders of `received`. Senders sharing
/// fewer than two objects with the rest cannot be constrained and are left
/// out.
fn corrected_poses<T: Real>(
    cfg: &ScenarioConfig,
    ego: &AgentMessage<T>,
    received: &[AgentMessage<T>],
    frame: usize,
    warnings: &mut Vec<String>,
) -> BTreeMap<AgentId, Pose<T>> {
    let eps = T::lit(cfg.robustness.pose.epsilon_pose);
    let mut edges: BTreeMap<AgentId, usize> = BTreeMap::new();
    for e in &build_pose_graph(ego, received, eps).edges {
        *edges.entry(e.agent).or_insert(0) += 1;
    }
    let usable: Vec<AgentMessage<T>> = received
        .iter()
        .filter(|m| edges.get(&m.agent_id).copied().unwrap_or(0) >= 2)
        .cloned()
        .collect();
    if usable.is_empty() {
        return BTreeMap::new();
    }
    let result = optimize_poses(&build_pose_graph(ego, &usable, eps), &cfg.robustness.pose);
    if result.degenerate {
        warnings.push(format!("frame {frame}: degenerate pose graph, poses left uncorrected"));
        return BTreeMap::new();
    }
    usable.iter().filter_map(|m| Some((m.agent_id, result.pose(m.agent_id)?))).collect()
}

/// Last message from a sender, with its pose-graph pose when it had one.
struct History<T> {
    raw: AgentMessage<T>,
    corrected: Option<AgentMessage<T>>,
}

/// Runs the scenario in double precision.
pub fn run(cfg: &ScenarioConfig) -> Result<RunReport<f64>, PipelineError> {
    run_with::<f64>(cfg)
}

/// Runs the scenario with scalar type `T`. The output depends only on the
/// config, master seed included.
pub fn run_with<T: Real>(cfg: &ScenarioConfig) -> Result<RunReport<T>, PipelineError> {
    cfg.validate()?;
    let weights = SirWeights::<T>::seeded(cfg.sir.dim, cfg.sir.layers, cfg.sir.weight_seed);
    let mut scene: Scene<T> = scene_at(cfg, 0)?;
    let ego_id = scene.ego().agent_id;
    let agent_ids: Vec<AgentId> = scene.agents.iter().map(|a| a.agent_id).collect();
    let mut net = Network::new(cfg.dt, ego_id, cfg.channel).with_all_to_all(cfg.network.all_to_all);
    let wire = WireOptions {
        half_precision: cfg.packing.half_precision,
        include_scores: cfg.packing.include_scores,
    };
    let mut prev: BTreeMap<AgentId, History<T>> = BTreeMap::new();
    let mut report = RunReport {
        metrics: MetricRow {
            parameter: "run".to_string(),
            ap50: 0.0,
            ap70: 0.0,
            ap_spo: None,
            ap_cp: None,
            ap_spe: None,
            comm_log2: f64::NAN,
        },
        ap: Vec::new(),
        frames: Vec::new(),
        detections: Vec::new(),
        comm_log2: Vec::new(),
        telemetry: Vec::new(),
        warnings: Vec::new(),
    };

    for frame in 0..cfg.frames {
        if frame > 0 {
            scene = step_scene(&scene, T::lit(cfg.dt));
        }
        let f = frame as u64;
        let now = scene.time;
        let views = perceive(cfg, &scene, &weights, f)?;
        let ego_view = views.iter().find(|v| v.agent == ego_id).expect("ego is observed");
        let ego_msg = AgentMessage::new(ego_id, now, scene.ego().pose, ego_view.clusters.clone());

        if cfg.collaborates() {
            for (agent, view) in scene.agents.iter().zip(&views) {
                if agent.is_ego && !cfg.network.all_to_all {
                    continue;
                }
                let (params, choice) =
                    enforce_bandwidth(&view.clusters, &cfg.packing, cfg.channel.bandwidth_cap_log2);
                if !choice.feasible {
                    report.warnings.push(format!(
                        "frame {frame}: agent {} exceeds the bandwidth cap even at zeta {}",
                        agent.agent_id, choice.zeta
                    ));
                }
                let msg = pack_message(agent.agent_id, &view.clusters, &params, agent.pose, now)?;
                report.comm_log2.push(comm_volume(&msg, params.include_scores).comm_log2);
                let mut rng = rng_for(cfg.seed, Stream::Channel, &[f, u64::from(agent.agent_id)]);
                net.send(&msg, &agent_ids, wire, &mut rng)?;
            }
        }

        // Older messages from a sender arriving in the same tick only feed
        // the velocity history.
        let mut latest: BTreeMap<AgentId, AgentMessage<T>> = BTreeMap::new();
        for d in net.deliver().into_iter().filter(|d| d.receiver == ego_id) {
            let msg: AgentMessage<T> = deserialize(&d.payload)?;
            if let Some(raw) = latest.insert(d.sender, msg) {
                prev.insert(d.sender, History { raw, corrected: None });
            }
        }
        let received: Vec<AgentMessage<T>> = latest.into_values().collect();
        let comp = cfg.robustness.latency_compensation;
        let compensate = |m: &AgentMessage<T>, p: Option<&AgentMessage<T>>| {
            if comp {
                compensate_latency(p, m, now, &cfg.robustness.latency).0
            } else {
                m.clone()
            }
        };
        // Clusters brought to the current time with the received poses. The
        // pose graph only sees these, and leaves out stale messages that have
        // no history to move them forward.
        let current: Vec<AgentMessage<T>> = received
            .iter()
            .map(|m| compensate(m, prev.get(&m.agent_id).map(|h| &h.raw)))
            .collect();
        let poses = if cfg.robustness.pose_correction && !received.is_empty() {
            let fresh: Vec<AgentMessage<T>> = current
                .iter()
                .filter(|m| m.timestamp >= now || (comp && prev.contains_key(&m.agent_id)))
                .cloned()
                .collect();
            corrected_poses(cfg, &ego_msg, &fresh, frame, &mut report.warnings)
        } else {
            BTreeMap::new()
        };
        let mut fused_inputs = Vec::with_capacity(received.len());
        for (m, cur) in received.into_iter().zip(current) {
            let corrected = poses.get(&m.agent_id).copied();
            let hist = prev.get(&m.agent_id);
            let out = match (corrected, hist.and_then(|h| h.corrected.as_ref())) {
                (Some(p), Some(h)) => compensate(&AgentMessage { pose: p, ..m.clone() }, Some(h)),
                _ => AgentMessage {
                    pose: corrected.unwrap_or(cur.pose),
                    ..cur
                },
            };
            fused_inputs.push(out);
            let corrected = corrected.map(|p| AgentMessage { pose: p, ..m.clone() });
            prev.insert(m.agent_id, History { raw: m, corrected });
        }

        let (fused, tel) = aggregate(&ego_msg, &fused_inputs, &cfg.aggregation);
        report.telemetry.push(tel);
        let detections: Vec<OrientedBox<T>> = fused.iter().filter_map(|c| c.proposal).collect();
        report.detections.extend(detections.iter().map(|&b| (f, ego_id, b)));
        report.frames.push(FrameEval {
            detections,
            ground_truth: ground_truth(&scene, &views, ego_id),
        });
        net.advance();
    }

    let scored = &report.frames[cfg.eval.warmup_frames..];
    let cat = compute_category_ap(scored, cfg.eval.category_iou, &cfg.eval);
    report.ap = cfg.eval.iou_thresholds.iter().map(|&t| (t, compute_ap(scored, t))).collect();
    report.metrics = MetricRow {
        parameter: "run".to_string(),
        ap50: compute_ap(scored, 0.5),
        ap70: compute_ap(scored, 0.7),
        ap_spo: cat.sp_o,
        ap_cp: cat.cp,
        ap_spe: cat.sp_e,
        comm_log2: mean(&report.comm_log2).unwrap_or(f64::NAN),
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Population standard deviation.
fn std_dev(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    Some((v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt())
}

/// One parameter path, its values, and repetitions per value.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub path: String,
    pub values: Vec<String>,
    pub repetitions: usize,
}

impl SweepSpec {
    /// Parses `path=v1,v2,...`.
    pub fn parse(text: &str, repetitions: usize) -> Result<Self, ConfigError> {
        let (path, values) = text
            .split_once('=')
            .ok_or_else(|| ConfigError::new("sweep", "expected PATH=v1,v2,..."))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if path.trim().is_empty() || values.iter().any(String::is_empty) {
            return Err(ConfigError::new("sweep", "expected PATH=v1,v2,..."));
        }
        if repetitions == 0 {
            return Err(ConfigError::new("sweep.reps", "must be at least 1"));
        }
        Ok(Self {
            path: path.trim().to_string(),
            values,
            repetitions,
        })
    }
}

/// Mean metrics for one sweep value plus their spread over repetitions.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub mean: MetricRow,
    pub std: MetricRow,
    pub repetitions: usize,
    pub warnings: Vec<String>,
}

pub const SWEEP_HEADER: &str = "parameter,value,ap50,ap70,ap_spo,ap_cp,ap_spe,comm_log2,\
ap50_std,ap70_std,ap_spo_std,ap_cp_std,ap_spe_std,comm_log2_std,reps";

fn fmt_opt(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl SweepRow {
    pub fn csv_line(&self, path: &str) -> String {
        let cols = |r: &MetricRow| {
            [Some(r.ap50), Some(r.ap70), r.ap_spo, r.ap_cp, r.ap_spe, Some(r.comm_log2)]
                .into_iter()
                .map(fmt_opt)
                .collect::<Vec<_>>()
                .join(",")
        };
        format!("{path},{},{},{},{}", self.value, cols(&self.mean), cols(&self.std), self.repetitions)
    }
}

fn summarize(value: &str, rows: &[MetricRow], stat: fn(&[f64]) -> Option<f64>) -> MetricRow {
    let pick = |f: fn(&MetricRow) -> Option<f64>| {
        let v: Vec<f64> = rows.iter().filter_map(f).filter(|x| x.is_finite()).collect();
        stat(&v)
    };
    MetricRow {
        parameter: value.to_string(),
        ap50: pick(|r| Some(r.ap50)).unwrap_or(f64::NAN),
        ap70: pick(|r| Some(r.ap70)).unwrap_or(f64::NAN),
        ap_spo: pick(|r| r.ap_spo),
        ap_cp: pick(|r| r.ap_cp),
        ap_spe: pick(|r| r.ap_spe),
        comm_log2: pick(|r| Some(r.comm_log2)).unwrap_or(f64::NAN),
    }
}

/// Config for one sweep point and repetition.
pub fn sweep_config(cfg: &ScenarioConfig, spec: &SweepSpec, value: &str, rep: usize) -> Result<ScenarioConfig, ConfigError> {
    let mut c = cfg.with_override(&spec.path, value)?;
    c.seed = repetition_seed(c.seed, rep as u64);
    Ok(c)
}

/// Every (value, repetition) pair as an independent run, in parallel.
pub fn sweep(cfg: &ScenarioConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>, PipelineError> {
    let jobs: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|v| (0..spec.repetitions).map(move |r| (v, r)))
        .collect();
    let configs = jobs
        .iter()
        .map(|&(v, r)| sweep_config(cfg, spec, &spec.values[v], r))
        .collect::<Result<Vec<_>, _>>()?;
    let results = configs.par_iter().map(run).collect::<Result<Vec<_>, _>>()?;
    Ok(spec
        .values
        .iter()
        .enumerate()
        .map(|(v, value)| {
            let reports: Vec<&RunReport<f64>> =
                jobs.iter().zip(&results).filter(|((jv, _), _)| *jv == v).map(|(_, r)| r).collect();
            let rows: Vec<MetricRow> = reports.iter().map(|r| r.metrics.clone()).collect();
            SweepRow {
                value: value.clone(),
                mean: summarize(value, &rows, mean),
                std: summarize(value, &rows, std_dev),
                repetitions: rows.len(),
                warnings: reports.iter().flat_map(|r| r.warnings.iter().cloned()).collect(),
            }
        })
        .collect())
}

fn create(dir: &Path, name: &str) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_manifest(dir: &Path, cfg: &ScenarioConfig, extra: &[String]) -> io::Result<()> {
    let mut w = create(dir, "manifest.txt")?;
    writeln!(w, "# ptcollab {}", env!("CARGO_PKG_VERSION"))?;
    for line in extra {
        writeln!(w, "# {line}")?;
    }
    writeln!(w)?;
    w.write_all(cfg.to_toml_string().as_bytes())?;
    w.flush()
}

/// `metrics.csv`, `detections.csv` and `manifest.txt` under `dir`.
pub fn write_run_outputs<T: Real>(dir: &Path, cfg: &ScenarioConfig, report: &RunReport<T>) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut m = create(dir, "metrics.csv")?;
    writeln!(m, "{METRIC_HEADER}")?;
    writeln!(m, "{}", report.metrics)?;
    m.flush()?;
    let mut d = create(dir, "detections.csv")?;
    write_detections_csv(&mut d, report.detections.iter().copied())?;
    d.flush()?;
    let mut extra = vec![format!("frames {}", report.frames.len())];
    extra.extend(report.ap.iter().map(|(t, ap)| format!("ap@{t} {ap:.6}")));
    extra.extend(report.warnings.iter().map(|w| format!("warning: {w}")));
    write_manifest(dir, cfg, &extra)
}

/// `sweep.csv` and `manifest.txt` under `dir`.
pub fn write_sweep_outputs(dir: &Path, cfg: &ScenarioConfig, spec: &SweepSpec, rows: &[SweepRow]) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = create(dir, "sweep.csv")?;
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_line(&spec.path))?;
    }
    w.flush()?;
    let extra = vec![
        format!("sweep {}={}", spec.path, spec.values.join(",")),
        format!("repetitions {}", spec.repetitions),
    ];
    write_manifest(dir, cfg, &extra)
}
