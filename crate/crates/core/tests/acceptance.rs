//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use ptcollab::aggregation::{aggregate, merge_tuple, AggregationParams, TaggedCluster};
use ptcollab::boxes::{BoxSize, OrientedBox};
use ptcollab::cluster::{AgentMessage, PointCluster};
use ptcollab::clustering::{group_clusters, ClusteringParams};
use ptcollab::config::ScenarioConfig;
use ptcollab::error::WireError;
use ptcollab::evaluation::box_iou;
use ptcollab::geometry::{Pose, Vec3};
use ptcollab::netsim::ZETA_GRID;
use ptcollab::packing::{cluster_values, comm_volume, sd_fps, CommReport, ProposalNoise};
use ptcollab::pipeline::{run, sweep, SweepSpec};
use ptcollab::robustness::{build_pose_graph, compensate_latency, optimize_poses, LatencyParams, PoseCorrectionParams};
use ptcollab::scalar::angle_diff;
use ptcollab::scene::{generate_scene, AgentsSpec, LabeledPoint, LabeledPointCloud, OracleNoise, SceneSpec};
use ptcollab::wire::{deserialize, quantize, serialize, WireOptions};

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn v3(x: f64, y: f64, z: f64) -> Vec3<f64> {
    Vec3::new(x, y, z)
}

fn vanilla_fps(points: &[Vec3<f64>], k: usize) -> Vec<usize> {
    let mut picks = vec![0];
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut taken = vec![false; points.len()];
    taken[0] = true;
    while picks.len() < k {
        let last = points[*picks.last().unwrap()];
        let mut best = usize::MAX;
        for i in 0..points.len() {
            if taken[i] {
                continue;
            }
            let d = points[i].distance(last);
            dist[i] = dist[i].min(d);
            if best == usize::MAX || dist[i] > dist[best] {
                best = i;
            }
        }
        taken[best] = true;
        picks.push(best);
    }
    picks
}

fn sd_fps_reduction() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = r.random_range(1..=1000);
        let pts: Vec<Vec3<f64>> = (0..n)
            .map(|_| v3(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(-1.0..1.0)))
            .collect();
        let zeta = *ZETA_GRID.choose(&mut r).unwrap();
        let s = vec![0.8; n];
        let got = sd_fps(&pts, &s, &s, zeta, 0.0, 0.0).map_err(|e| e.to_string())?;
        if got != vanilla_fps(&pts, got.len()) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(mismatches == 0 && secs < 1.0, format!("{mismatches}/100 mismatches, {secs:.3}s"))
}

fn comm_formula() -> Outcome {
    let single = CommReport::from_values(128).comm_log2;
    let example = cluster_values(10, 16, true) + cluster_values(6, 16, true);

    let cfg = ScenarioConfig {
        frames: 1,
        ..ScenarioConfig::default()
    };
    let report = run(&cfg).map_err(|e| e.to_string())?;
    let worst = report.comm_log2.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // 10,000 points spread over one cluster per default scene object
    let mut r = rng(2);
    let sizes: Vec<usize> = (0..12).map(|i| if i < 4 { 834 } else { 833 }).collect();
    let clusters: Vec<PointCluster<f64>> = sizes
        .iter()
        .map(|&n| {
            let pts: Vec<Vec3<f64>> = (0..n).map(|_| v3(r.random(), r.random(), r.random())).collect();
            let mut c = PointCluster::new(pts, vec![1.0; n], v3(0.5, 0.5, 0.5));
            c.feature = vec![0.0; 128];
            c
        })
        .collect();
    let packed = comm_volume(&AgentMessage::new(1, 0.0, Pose::identity(), clusters), false);

    let ok = single == 8.0
        && example == 118
        && CommReport::from_values(118).comm_log2 == 236f64.log2()
        && CommReport::from_values(32768).comm_log2 == 16.0
        && worst < 16.0
        && packed.n_values == 3 * 10_000 + 12 * (3 + 128 + 8)
        && packed.comm_log2 < 16.0;
    verdict(
        ok,
        format!(
            "single feature {single}, 118-value example {example}, pipeline max {worst:.4}, 10k-point message {:.4}",
            packed.comm_log2
        ),
    )
}

fn brute_components(votes: &[Vec3<f64>], fg: &[bool], eps: f64) -> Vec<Vec<usize>> {
    let n = votes.len();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut groups = Vec::new();
    for s in 0..n {
        if !fg[s] || label[s].is_some() {
            continue;
        }
        let id = groups.len();
        let mut stack = vec![s];
        let mut members = vec![];
        label[s] = Some(id);
        while let Some(i) = stack.pop() {
            members.push(i);
            for j in 0..n {
                if fg[j] && label[j].is_none() && votes[i].distance_squared(votes[j]) < eps * eps {
                    label[j] = Some(id);
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    groups
}

fn clustering_oracle() -> Outcome {
    let params = ClusteringParams::default();
    let mut r = rng(3);
    let mut failures = 0;
    for _ in 0..200 {
        let n = r.random_range(0..=500);
        let side = r.random_range(2.0..20.0);
        let mut fg = Vec::with_capacity(n);
        let cloud = LabeledPointCloud {
            points: (0..n)
                .map(|i| {
                    let score: f64 = r.random();
                    fg.push(score >= params.fg_threshold);
                    LabeledPoint {
                        // the index is written into x so clusters can be mapped back
                        position: v3(i as f64, 0.0, 0.0),
                        is_foreground: score >= params.fg_threshold,
                        object_id: None,
                        semantic_score: score,
                        predicted_center: v3(r.random_range(0.0..side), r.random_range(0.0..side), r.random_range(0.0..1.0)),
                    }
                })
                .collect(),
        };
        let votes: Vec<Vec3<f64>> = cloud.points.iter().map(|p| p.predicted_center).collect();
        let mut want: Vec<Vec<usize>> = brute_components(&votes, &fg, params.epsilon_point)
            .into_iter()
            .filter(|g| g.len() >= params.min_cluster_points)
            .collect();
        let mut got: Vec<Vec<usize>> = group_clusters(&cloud, &params)
            .iter()
            .map(|c| {
                let mut g: Vec<usize> = c.points.iter().map(|p| p.x as usize).collect();
                g.sort_unstable();
                g
            })
            .collect();
        want.sort();
        got.sort();
        if want != got {
            failures += 1;
        }
    }
    verdict(failures == 0, format!("{failures}/200 partitions differ"))
}

fn merge_algebra() -> Outcome {
    let mut r = rng(4);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let k = if case % 2 == 0 { 2 } else { 3 };
        let dim = r.random_range(0..12);
        let mut agents: Vec<u32> = (0..6).collect();
        agents.shuffle(&mut r);
        let confs = [0.5, 0.7, 0.9];
        let tuple: Vec<TaggedCluster<f64>> = (0..k)
            .map(|m| {
                let n = r.random_range(1..30);
                let pts: Vec<Vec3<f64>> = (0..n).map(|_| v3(r.random(), r.random(), r.random())).collect();
                let center = v3(r.random_range(-50.0..50.0), r.random_range(-50.0..50.0), r.random());
                let mut c = PointCluster::new(pts, vec![0.9; n], center);
                c.feature = (0..dim).map(|_| r.random_range(-3.0..3.0)).collect();
                // few distinct confidences so ties are common
                let conf = *confs.choose(&mut r).unwrap();
                c.proposal = Some(OrientedBox::new(center, BoxSize::new(1.5, 1.8, 4.0), r.random(), conf).unwrap());
                TaggedCluster {
                    agent: agents[m],
                    cluster: c,
                }
            })
            .collect();
        let merged = merge_tuple(&tuple);
        let kf = k as f64;
        let mean_c = tuple.iter().fold(Vec3::zero(), |a, t| a + t.cluster.center) * (1.0 / kf);
        let center_ok = merged.center.distance(mean_c) <= 1e-12;
        let feature_ok = (0..dim).all(|d| {
            let m = tuple.iter().map(|t| t.cluster.feature[d]).sum::<f64>() / kf;
            (merged.feature[d] - m).abs() <= 1e-12
        }) && merged.feature.len() == dim;
        let count_ok = merged.len() == tuple.iter().map(|t| t.cluster.len()).sum::<usize>();
        let best = tuple
            .iter()
            .min_by(|a, b| {
                let (ca, cb) = (a.cluster.proposal.unwrap().confidence, b.cluster.proposal.unwrap().confidence);
                cb.partial_cmp(&ca).unwrap().then(a.agent.cmp(&b.agent))
            })
            .unwrap();
        let box_ok = merged.proposal == best.cluster.proposal;
        if !(center_ok && feature_ok && count_ok && box_ok) {
            failures.push(case);
        }
    }
    verdict(failures.is_empty(), format!("{} of 1000 tuples violate the merge rules", failures.len()))
}

struct PoseTrial {
    injected_t: f64,
    injected_yaw: f64,
    residual_t: f64,
    residual_yaw: f64,
    secs: f64,
}

fn pose_trial(seed: u64, center_sigma: f64) -> PoseTrial {
    let mut r = rng(1000 + seed);
    let truth = Pose::new(r.random_range(10.0..30.0), r.random_range(-10.0..10.0), 0.0, r.random_range(-3.0..3.0));
    let mut objects: Vec<Vec3<f64>> = Vec::new();
    while objects.len() < 10 {
        let c = v3(r.random_range(-10.0..40.0), r.random_range(-25.0..25.0), 0.8);
        if objects.iter().all(|o| o.distance(c) > 5.0) {
            objects.push(c);
        }
    }
    let pos = Normal::new(0.0, 0.4).unwrap();
    let yaw = Normal::new(0.0, 0.4f64.to_radians()).unwrap();
    let noisy = Pose::new(truth.x + pos.sample(&mut r), truth.y + pos.sample(&mut r), 0.0, truth.yaw + yaw.sample(&mut r));
    let jitter = |r: &mut ChaCha8Rng| {
        if center_sigma > 0.0 {
            let n = Normal::new(0.0, center_sigma).unwrap();
            v3(n.sample(r), n.sample(r), 0.0)
        } else {
            Vec3::zero()
        }
    };
    let cluster = |c: Vec3<f64>| PointCluster::new(vec![c], vec![1.0], c);
    let ego = AgentMessage::new(0, 0.0, Pose::identity(), objects.iter().map(|&o| cluster(o + jitter(&mut r))).collect());
    let other = AgentMessage::new(
        1,
        0.0,
        noisy,
        objects.iter().map(|&o| cluster(truth.apply_inverse(o) + jitter(&mut r))).collect(),
    );
    let start = Instant::now();
    let graph = build_pose_graph(&ego, &[other], 1.5);
    let result = optimize_poses(&graph, &PoseCorrectionParams::default());
    let secs = start.elapsed().as_secs_f64();
    let est = result.pose(1).unwrap();
    PoseTrial {
        injected_t: (noisy.translation() - truth.translation()).norm(),
        injected_yaw: angle_diff(noisy.yaw, truth.yaw).abs(),
        residual_t: (est.translation() - truth.translation()).norm(),
        residual_yaw: angle_diff(est.yaw, truth.yaw).abs(),
        secs,
    }
}

fn pose_recovery() -> Outcome {
    let exact: Vec<PoseTrial> = (0..50).map(|s| pose_trial(s, 0.0)).collect();
    let worst_t = exact.iter().map(|t| t.residual_t).fold(0.0, f64::max);
    let worst_yaw = exact.iter().map(|t| t.residual_yaw).fold(0.0, f64::max);
    let noisy: Vec<PoseTrial> = (0..50).map(|s| pose_trial(s, 0.05)).collect();
    let mean = |f: fn(&PoseTrial) -> f64| noisy.iter().map(f).sum::<f64>() / noisy.len() as f64;
    let red_t = 1.0 - mean(|t| t.residual_t) / mean(|t| t.injected_t);
    let red_yaw = 1.0 - mean(|t| t.residual_yaw) / mean(|t| t.injected_yaw);
    let slowest = exact.iter().chain(&noisy).map(|t| t.secs).fold(0.0, f64::max);
    verdict(
        worst_t <= 1e-3 && worst_yaw <= 1e-3 && red_t >= 0.9 && slowest < 1.0,
        format!(
            "exact: max error {worst_t:.2e} m / {worst_yaw:.2e} rad; sigma 0.05: translation error reduced {:.1}% (yaw {:.1}%); slowest graph {slowest:.4}s",
            100.0 * red_t,
            100.0 * red_yaw
        ),
    )
}

fn latency_kinematics() -> Outcome {
    let mut r = rng(6);
    let pose = Pose::new(12.0, -4.0, 0.0, 0.6);
    let (t0, gap, tau) = (1.0, 0.2, 0.5);
    let mut starts: Vec<Vec3<f64>> = Vec::new();
    while starts.len() < 12 {
        let c = v3(r.random_range(-30.0..30.0), r.random_range(-30.0..30.0), 0.8);
        if starts.iter().all(|o| o.distance(c) > 8.0) {
            starts.push(c);
        }
    }
    // the first eight move at 5 m/s, the rest stand still
    let vel: Vec<Vec3<f64>> = (0..starts.len())
        .map(|i| {
            if i < 8 {
                let h: f64 = r.random_range(-PI..PI);
                v3(5.0 * h.cos(), 5.0 * h.sin(), 0.0)
            } else {
                Vec3::zero()
            }
        })
        .collect();
    let at = |t: f64| -> Vec<Vec3<f64>> { starts.iter().zip(&vel).map(|(&s, &v)| s + v * (t - t0)).collect() };
    let message = |t: f64| {
        let clusters = at(t)
            .into_iter()
            .map(|g| {
                let c = pose.apply_inverse(g);
                let pts = vec![c + v3(0.3, 0.1, 0.0), c - v3(0.2, 0.4, 0.1), c];
                PointCluster::new(pts, vec![1.0; 3], c)
            })
            .collect();
        AgentMessage::new(1, t, pose, clusters)
    };
    let prev = message(t0);
    let msg = message(t0 + gap);
    let now = t0 + gap + tau;
    let truth = at(now);
    let (out, stats) = compensate_latency(Some(&prev), &msg, now, &LatencyParams::default());

    let moving = 0..8;
    let stale: Vec<f64> = moving.clone().map(|i| pose.apply(msg.clusters[i].center).distance(truth[i])).collect();
    let fixed: Vec<f64> = moving.map(|i| pose.apply(out.clusters[i].center).distance(truth[i])).collect();
    let stale_ok = stale.iter().all(|e| (e - 2.5).abs() <= 1e-9);
    let fixed_max = fixed.iter().copied().fold(0.0, f64::max);
    let still_ok = (8..starts.len()).all(|i| out.clusters[i] == msg.clusters[i]);
    verdict(
        stale_ok && fixed_max <= 0.05 && still_ok && stats.matched == 8,
        format!(
            "uncompensated error {:.12} m, compensated max {fixed_max:.2e} m, {} matched, stationary untouched: {still_ok}",
            stale[0], stats.matched
        ),
    )
}

fn collaboration_gain() -> Outcome {
    let start = Instant::now();
    let arms = |cfg: &ScenarioConfig| -> Result<(f64, Option<f64>), String> {
        let r = run(cfg).map_err(|e| e.to_string())?;
        Ok((r.metrics.ap70, r.metrics.ap_spo))
    };
    let mut gain = (0.0, 0.0);
    let mut spo_solo_max: f64 = 0.0;
    let mut spo_collab_min: f64 = 1.0;
    for seed in 0..20 {
        let base = ScenarioConfig::occlusion_fixture(seed);
        let mut solo = base.clone();
        solo.collaboration = false;
        let (c, _) = arms(&base)?;
        let (s, _) = arms(&solo)?;
        gain.0 += c / 20.0;
        gain.1 += s / 20.0;

        let mut clean = base.clone();
        clean.oracle = OracleNoise::zero();
        clean.packing.proposal_noise = ProposalNoise::zero();
        clean.packing.zeta = 1.0;
        let mut clean_solo = clean.clone();
        clean_solo.collaboration = false;
        let (_, spo_c) = arms(&clean)?;
        let (_, spo_s) = arms(&clean_solo)?;
        spo_collab_min = spo_collab_min.min(spo_c.ok_or("no SP-O targets")?);
        spo_solo_max = spo_solo_max.max(spo_s.ok_or("no SP-O targets")?);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        gain.0 > gain.1 && spo_solo_max == 0.0 && spo_collab_min >= 0.9 && secs < 30.0,
        format!(
            "mean AP@0.7 {:.4} collaborative vs {:.4} single-agent; AP_SP-O max {spo_solo_max:.2} without, min {spo_collab_min:.2} with; {secs:.2}s",
            gain.0, gain.1
        ),
    )
}

fn bandwidth_tradeoff() -> Outcome {
    let values: Vec<String> = ZETA_GRID.iter().map(|z| z.to_string()).collect();
    let spec = SweepSpec {
        path: "packing.zeta".to_string(),
        values,
        repetitions: 20,
    };
    let rows = sweep(&ScenarioConfig::occlusion_fixture(0), &spec).map_err(|e| e.to_string())?;
    let ap: Vec<f64> = rows.iter().map(|r| r.mean.ap70).collect();
    let monotone = ap.windows(2).all(|w| w[1] <= w[0]);
    let drop = 100.0 * (ap[0] - ap[3]);
    let curve: Vec<String> = ap.iter().map(|a| format!("{a:.4}")).collect();
    verdict(
        monotone && drop <= 5.0,
        format!("AP@0.7 over zeta 1..1/128: [{}], drop to 1/16 = {drop:.2} points", curve.join(", ")),
    )
}

fn ops_at_extent(extent: f64, seed: u64) -> Result<usize, String> {
    let spec = SceneSpec {
        extent,
        object_count: 12,
        ..SceneSpec::default()
    };
    let agents = AgentsSpec {
        count: 3,
        ..AgentsSpec::default()
    };
    let scene = generate_scene::<f64>(&spec, &agents, seed).map_err(|e| e.to_string())?;
    let mut r = rng(seed);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let messages: Vec<AgentMessage<f64>> = scene
        .agents
        .iter()
        .map(|a| {
            let clusters = scene
                .boxes_in_frame(&a.pose)
                .into_iter()
                .map(|(_, b)| {
                    let frame = b.frame();
                    let pts: Vec<Vec3<f64>> = (0..16)
                        .map(|_| {
                            frame.apply(v3(
                                b.size.l * r.random_range(-0.5..0.5),
                                b.size.w * r.random_range(-0.5..0.5),
                                b.size.h * r.random_range(-0.5..0.5),
                            ))
                        })
                        .collect();
                    let c = b.center + v3(noise.sample(&mut r), noise.sample(&mut r), 0.0);
                    let mut cl = PointCluster::new(pts, vec![1.0; 16], c);
                    cl.feature = vec![0.0; 8];
                    cl.proposal = Some(b);
                    cl
                })
                .collect();
            AgentMessage::new(a.agent_id, 0.0, a.pose, clusters)
        })
        .collect();
    let (_, tel) = aggregate(&messages[0], &messages[1..], &AggregationParams::default());
    Ok(tel.cluster_ops())
}

fn range_independence() -> Outcome {
    let mut near = 0;
    let mut far = 0;
    for seed in 0..20 {
        near += ops_at_extent(80.0, seed)?;
        far += ops_at_extent(320.0, seed)?;
    }
    let change = (far as f64 - near as f64).abs() / near as f64;
    verdict(
        change < 0.1,
        format!("cluster ops {near} at 80 m vs {far} at 320 m ({:.2}% change)", 100.0 * change),
    )
}

fn random_message(r: &mut ChaCha8Rng) -> AgentMessage<f64> {
    let dim = r.random_range(0..24);
    let clusters = (0..r.random_range(0..6))
        .map(|_| {
            let n = r.random_range(0..40);
            let c = v3(r.random_range(-60.0..60.0), r.random_range(-60.0..60.0), r.random_range(-2.0..3.0));
            let pts = (0..n)
                .map(|_| c + v3(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-1.0..1.0)))
                .collect();
            let mut cl = PointCluster::new(pts, (0..n).map(|_| r.random()).collect(), c);
            cl.feature = (0..dim).map(|_| r.random_range(-4.0..4.0)).collect();
            let size = BoxSize::new(r.random_range(1.0..2.0), r.random_range(1.5..2.5), r.random_range(3.0..5.0));
            cl.proposal = Some(OrientedBox::new(c, size, r.random_range(-3.0..3.0), r.random()).unwrap());
            cl
        })
        .collect();
    let pose = Pose::new(r.random_range(-50.0..50.0), r.random_range(-50.0..50.0), 0.0, r.random_range(-3.0..3.0));
    AgentMessage::new(r.random_range(0..100), r.random_range(0.0..100.0), pose, clusters)
}

fn bit_equal(a: &AgentMessage<f64>, b: &AgentMessage<f64>) -> bool {
    let v = |p: Vec3<f64>| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
    let bx = |o: &Option<OrientedBox<f64>>| {
        o.map(|b| {
            [v(b.center), [b.size.h.to_bits(), b.size.w.to_bits(), b.size.l.to_bits()], [b.yaw.to_bits(), b.confidence.to_bits(), 0]]
        })
    };
    a.agent_id == b.agent_id
        && a.timestamp.to_bits() == b.timestamp.to_bits()
        && [a.pose.x, a.pose.y, a.pose.z, a.pose.yaw].map(f64::to_bits) == [b.pose.x, b.pose.y, b.pose.z, b.pose.yaw].map(f64::to_bits)
        && a.clusters.len() == b.clusters.len()
        && a.clusters.iter().zip(&b.clusters).all(|(x, y)| {
            v(x.center) == v(y.center)
                && x.points.iter().map(|&p| v(p)).eq(y.points.iter().map(|&p| v(p)))
                && x.feature.iter().map(|f| f.to_bits()).eq(y.feature.iter().map(|f| f.to_bits()))
                && x.semantic_scores.iter().map(|f| f.to_bits()).eq(y.semantic_scores.iter().map(|f| f.to_bits()))
                && bx(&x.proposal) == bx(&y.proposal)
        })
}

fn serialization() -> Outcome {
    let mut r = rng(10);
    let mut round_trip_failures = 0;
    let mut truncations = 0;
    let mut untyped = 0;
    for _ in 0..1000 {
        let m = random_message(&mut r);
        let opts = WireOptions {
            half_precision: r.random_bool(0.7),
            include_scores: r.random_bool(0.5),
        };
        let bytes = serialize(&m, opts).map_err(|e| e.to_string())?;
        let q = quantize(&m, opts).map_err(|e| e.to_string())?;
        let again: AgentMessage<f64> = deserialize(&serialize(&q, opts).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        if !bit_equal(&q, &again) || serialize(&q, opts).ok() != Some(bytes.clone()) || comm_volume(&q, opts.include_scores) != comm_volume(&m, opts.include_scores) {
            round_trip_failures += 1;
        }
        for _ in 0..8 {
            let cut = r.random_range(0..bytes.len());
            truncations += 1;
            let result = catch_unwind(|| deserialize::<f64>(&bytes[..cut]));
            match result {
                Ok(Err(WireError::Truncated { .. } | WireError::BadMagic(_) | WireError::VersionMismatch { .. })) => {}
                _ => untyped += 1,
            }
        }
        let mut flipped = bytes.clone();
        let at = r.random_range(0..flipped.len());
        flipped[at] ^= 1 << r.random_range(0..8);
        truncations += 1;
        if catch_unwind(|| deserialize::<f64>(&flipped)).is_err() {
            untyped += 1;
        }
    }
    verdict(
        round_trip_failures == 0 && untyped == 0,
        format!("{round_trip_failures}/1000 round-trip failures; {untyped} of {truncations} corrupted inputs panicked or gave an unexpected result"),
    )
}

fn iou_oracle() -> Outcome {
    let mut r = rng(11);
    let pairs: Vec<(OrientedBox<f64>, OrientedBox<f64>, u64)> = (0..200)
        .map(|i| {
            let a = OrientedBox::new(
                v3(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0), r.random_range(0.0..1.0)),
                BoxSize::new(r.random_range(1.0..2.5), r.random_range(1.0..3.0), r.random_range(2.0..6.0)),
                r.random_range(-3.0..3.0),
                1.0,
            )
            .unwrap();
            let b = OrientedBox::new(
                a.center + v3(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-0.8..0.8)),
                BoxSize::new(r.random_range(1.0..2.5), r.random_range(1.0..3.0), r.random_range(2.0..6.0)),
                r.random_range(-3.0..3.0),
                1.0,
            )
            .unwrap();
            (a, b, i)
        })
        .collect();
    let errors: Vec<f64> = pairs
        .par_iter()
        .map(|(a, b, i)| {
            let mut r = rng(5000 + i);
            let frame = a.frame();
            let samples = 1_000_000;
            let inside = (0..samples)
                .filter(|_| {
                    let p = frame.apply(v3(
                        a.size.l * (r.random::<f64>() - 0.5),
                        a.size.w * (r.random::<f64>() - 0.5),
                        a.size.h * (r.random::<f64>() - 0.5),
                    ));
                    b.contains(p, 0.0)
                })
                .count();
            let inter = a.volume() * inside as f64 / samples as f64;
            let mc = inter / (a.volume() + b.volume() - inter);
            (box_iou(a, b) - mc).abs()
        })
        .collect();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    let overlapping = pairs.iter().filter(|(a, b, _)| box_iou(a, b) > 0.0).count();
    verdict(
        worst <= 0.01,
        format!("max |IoU - Monte Carlo| = {worst:.5} over 200 pairs ({overlapping} overlapping)"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("SD-FPS reduces to FPS", sd_fps_reduction),
        ("comm formula exactness", comm_formula),
        ("clustering oracle equivalence", clustering_oracle),
        ("merge algebra", merge_algebra),
        ("pose correction recovery", pose_recovery),
        ("latency compensation kinematics", latency_kinematics),
        ("end-to-end collaboration gain", collaboration_gain),
        ("bandwidth trade-off shape", bandwidth_tradeoff),
        ("aggregation range independence", range_independence),
        ("serialization", serialization),
        ("IoU oracle", iou_oracle),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} ({secs:.2}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} ({secs:.2}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
