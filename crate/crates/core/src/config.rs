//! Scenario configuration: TOML schema, defaults, validation and sweep
//! overrides by dotted key path.

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationParams;
use crate::clustering::ClusteringParams;
use crate::error::ConfigError;
use crate::evaluation::EvalConfig;
use crate::netsim::ChannelConfig;
use crate::packing::PackingParams;
use crate::robustness::{LatencyParams, PoseCorrectionParams};
use crate::scene::{AgentsSpec, Layout, OracleNoise, SceneSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SirConfig {
    /// Feature width D.
    pub dim: usize,
    /// Encoder depth L1.
    pub layers: usize,
    pub weight_seed: u64,
}

impl Default for SirConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            layers: 6,
            weight_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Deliver every agent's message to every other agent instead of only to
    /// the ego. Only the ego's output is evaluated either way.
    pub all_to_all: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub pose_correction: bool,
    pub latency_compensation: bool,
    pub pose: PoseCorrectionParams,
    pub latency: LatencyParams,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            pose_correction: true,
            latency_compensation: true,
            pose: PoseCorrectionParams::default(),
            latency: LatencyParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub frames: usize,
    /// Simulation step and network tick, seconds.
    pub dt: f64,
    /// Master switch; a bandwidth cap ≤ 0 also disables collaboration.
    pub collaboration: bool,
    pub scene: SceneSpec,
    pub agents: AgentsSpec,
    pub oracle: OracleNoise,
    pub clustering: ClusteringParams,
    pub sir: SirConfig,
    pub packing: PackingParams,
    pub channel: ChannelConfig,
    pub network: NetworkConfig,
    pub aggregation: AggregationParams,
    pub robustness: RobustnessConfig,
    pub eval: EvalConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 5,
            dt: 0.1,
            collaboration: true,
            scene: SceneSpec::default(),
            agents: AgentsSpec::default(),
            oracle: OracleNoise::default(),
            clustering: ClusteringParams::default(),
            sir: SirConfig::default(),
            packing: PackingParams::default(),
            channel: ChannelConfig::default(),
            network: NetworkConfig::default(),
            aggregation: AggregationParams::default(),
            robustness: RobustnessConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn check(ok: bool, path: &str, msg: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(path, msg))
    }
}

fn finite_nonneg(v: f64, path: &str) -> Result<(), ConfigError> {
    check(v.is_finite() && v >= 0.0, path, "must be a finite number ≥ 0")
}

fn positive(v: f64, path: &str) -> Result<(), ConfigError> {
    check(v.is_finite() && v > 0.0, path, "must be a finite number > 0")
}

fn range(r: [f64; 2], path: &str) -> Result<(), ConfigError> {
    check(
        r[0].is_finite() && r[1].is_finite() && r[0] > 0.0 && r[1] >= r[0],
        path,
        "must be [min, max] with 0 < min ≤ max",
    )
}

impl ScenarioConfig {
    /// Two agents facing each other across occluder/hidden object pairs:
    /// half the objects are invisible to the ego but seen by the other agent.
    pub fn occlusion_fixture(seed: u64) -> Self {
        let mut c = Self {
            seed,
            frames: 3,
            ..Self::default()
        };
        c.scene.layout = Layout::Occlusion;
        c.scene.object_count = 8;
        c.agents.count = 2;
        c.oracle.bg_clutter_rate = 0.0;
        c.sir.dim = 32;
        c.sir.layers = 2;
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::new(error_path(text, &e), e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field; the error names the first offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.frames >= 1, "frames", "must be at least 1")?;
        positive(self.dt, "dt")?;

        let s = &self.scene;
        positive(s.extent, "scene.extent")?;
        check(s.object_count >= 1, "scene.object_count", "must be at least 1")?;
        finite_nonneg(s.speed_min, "scene.speed_min")?;
        check(
            s.speed_max.is_finite() && s.speed_max >= s.speed_min,
            "scene.speed_max",
            "must be ≥ scene.speed_min",
        )?;
        check(
            (0.0..=1.0).contains(&s.stationary_fraction),
            "scene.stationary_fraction",
            "must be in [0, 1]",
        )?;
        range(s.length_range, "scene.length_range")?;
        range(s.width_range, "scene.width_range")?;
        range(s.height_range, "scene.height_range")?;
        check(s.vertical_layers >= 1, "scene.vertical_layers", "must be at least 1")?;
        if s.layout == Layout::Occlusion {
            check(s.object_count.is_multiple_of(2), "scene.object_count", "must be even for the occlusion layout")?;
            check(self.agents.count == 2, "agents.count", "the occlusion layout uses exactly 2 agents")?;
        }

        let a = &self.agents;
        check(a.count >= 2, "agents.count", "must be at least 2")?;
        positive(a.spacing, "agents.spacing")?;
        positive(a.sensor_range, "agents.sensor_range")?;
        check(
            a.angular_resolution.is_finite() && a.angular_resolution > 0.0 && a.angular_resolution < std::f64::consts::PI,
            "agents.angular_resolution",
            "must be in (0, π) radians",
        )?;

        let o = &self.oracle;
        finite_nonneg(o.center_sigma, "oracle.center_sigma")?;
        check((0.0..=1.0).contains(&o.score_flip_rate), "oracle.score_flip_rate", "must be in [0, 1]")?;
        finite_nonneg(o.bg_clutter_rate, "oracle.bg_clutter_rate")?;

        let c = &self.clustering;
        positive(c.epsilon_point, "clustering.epsilon_point")?;
        check((0.0..=1.0).contains(&c.fg_threshold), "clustering.fg_threshold", "must be in [0, 1]")?;
        check(c.min_cluster_points >= 1, "clustering.min_cluster_points", "must be at least 1")?;

        check(
            self.sir.dim >= 1 && self.sir.dim <= u16::MAX as usize,
            "sir.dim",
            "must be in [1, 65535]",
        )?;
        check(self.sir.layers >= 1, "sir.layers", "must be at least 1")?;

        let p = &self.packing;
        check(p.zeta > 0.0 && p.zeta <= 1.0, "packing.zeta", "must be in (0, 1]")?;
        finite_nonneg(p.lambda_s, "packing.lambda_s")?;
        finite_nonneg(p.lambda_d, "packing.lambda_d")?;
        positive(p.kde_bandwidth, "packing.kde_bandwidth")?;
        finite_nonneg(p.proposal_noise.center_sigma, "packing.proposal_noise.center_sigma")?;
        finite_nonneg(p.proposal_noise.size_sigma, "packing.proposal_noise.size_sigma")?;
        finite_nonneg(p.proposal_noise.yaw_sigma, "packing.proposal_noise.yaw_sigma")?;

        let ch = &self.channel;
        finite_nonneg(ch.latency_s, "channel.latency_s")?;
        finite_nonneg(ch.pos_noise_sigma, "channel.pos_noise_sigma")?;
        finite_nonneg(ch.heading_noise_sigma, "channel.heading_noise_sigma")?;
        if let Some(b) = ch.bandwidth_cap_log2 {
            check(!b.is_nan(), "channel.bandwidth_cap_log2", "must be a number")?;
        }

        positive(self.aggregation.epsilon_agg, "aggregation.epsilon_agg")?;

        let r = &self.robustness;
        positive(r.pose.epsilon_pose, "robustness.pose.epsilon_pose")?;
        check(r.pose.max_iterations >= 1, "robustness.pose.max_iterations", "must be at least 1")?;
        finite_nonneg(r.pose.min_decrease, "robustness.pose.min_decrease")?;
        positive(r.pose.initial_damping, "robustness.pose.initial_damping")?;
        finite_nonneg(r.latency.epsilon_lo, "robustness.latency.epsilon_lo")?;
        check(
            r.latency.epsilon_hi.is_finite() && r.latency.epsilon_hi > r.latency.epsilon_lo,
            "robustness.latency.epsilon_hi",
            "must be > robustness.latency.epsilon_lo",
        )?;

        let e = &self.eval;
        check(!e.iou_thresholds.is_empty(), "eval.iou_thresholds", "must not be empty")?;
        for (k, t) in e.iou_thresholds.iter().enumerate() {
            check(*t > 0.0 && *t < 1.0, &format!("eval.iou_thresholds[{k}]"), "must be in (0, 1)")?;
        }
        check(e.spe_ratio > 0.0 && e.spe_ratio < 1.0, "eval.spe_ratio", "must be in (0, 1)")?;
        check(e.category_iou > 0.0 && e.category_iou < 1.0, "eval.category_iou", "must be in (0, 1)")?;
        check(e.warmup_frames < self.frames, "eval.warmup_frames", "must be less than frames")?;
        Ok(())
    }

    /// True when messages are exchanged at all.
    pub fn collaborates(&self) -> bool {
        self.collaboration && self.channel.bandwidth_cap_log2.is_none_or(|b| b > 0.0)
    }

    /// Copy with the dotted `path` set to `value`, parsed as a TOML literal
    /// (bare words are taken as strings). Unknown paths are errors.
    pub fn with_override(&self, path: &str, value: &str) -> Result<Self, ConfigError> {
        let mut root = toml::Value::try_from(self).map_err(|e| ConfigError::new(path, e.to_string()))?;
        let keys: Vec<&str> = path.split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(ConfigError::new(path, "malformed key path"));
        }
        let (last, parents) = keys.split_last().expect("split yields at least one key");
        let mut table = root.as_table_mut().expect("config serializes to a table");
        for (depth, k) in parents.iter().enumerate() {
            table = table
                .get_mut(*k)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| ConfigError::new(keys[..=depth].join("."), "no such section"))?;
        }
        let existing = table.get(*last).cloned();
        let parsed = parse_literal(value);
        let parsed = match (&existing, parsed) {
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (None, toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        table.insert(last.to_string(), parsed);
        let cfg: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::new(path, e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_literal(s: &str) -> toml::Value {
    let s = s.trim();
    match toml::from_str::<toml::Table>(&format!("v = {s}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(s.to_string()),
    }
}

/// Best-effort dotted key path for a parse error: the enclosing `[section]`
/// header plus the offending key.
fn error_path(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message();
    let offset = e.span().map_or(0, |r| r.start.min(text.len()));
    let before = &text[..offset];
    let section = before
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    let key = msg
        .strip_prefix("unknown field `")
        .and_then(|r| r.split('`').next())
        .map(str::to_string)
        .or_else(|| line.split_once('=').map(|(k, _)| k.trim().to_string()))
        .filter(|k| !k.is_empty() && !k.starts_with('['));
    match (section, key) {
        (Some(s), Some(k)) => format!("{s}.{k}"),
        (Some(s), None) => s,
        (None, Some(k)) => k,
        (None, None) => "config".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ScenarioConfig::default();
        c.validate().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
        assert_eq!(ScenarioConfig::from_toml_str("").unwrap(), c);
        ScenarioConfig::occlusion_fixture(3).validate().unwrap();
    }

    #[test]
    fn documented_defaults() {
        let c = ScenarioConfig::default();
        assert_eq!((c.sir.dim, c.sir.layers), (128, 6));
        assert_eq!(c.aggregation.epsilon_agg, 0.6);
        assert_eq!(c.robustness.pose.epsilon_pose, 1.5);
        assert_eq!((c.robustness.latency.epsilon_lo, c.robustness.latency.epsilon_hi), (0.5, 2.0));
        assert_eq!(c.eval.iou_thresholds, vec![0.5, 0.7]);
    }

    #[test]
    fn partial_file_and_errors() {
        let c = ScenarioConfig::from_toml_str("seed = 9\n[packing]\nzeta = 0.25\n").unwrap();
        assert_eq!((c.seed, c.packing.zeta, c.packing.lambda_s), (9, 0.25, 1.0));

        let e = ScenarioConfig::from_toml_str("[packing]\nzeta = 0.0\n").unwrap_err();
        assert_eq!(e.path, "packing.zeta");
        let e = ScenarioConfig::from_toml_str("[packing]\nzetta = 0.5\n").unwrap_err();
        assert_eq!(e.path, "packing.zetta");
        let e = ScenarioConfig::from_toml_str("seed = 1\n[robustness.pose]\nmax_iterations = -3\n").unwrap_err();
        assert_eq!(e.path, "robustness.pose.max_iterations");
        let e = ScenarioConfig::from_toml_str("[robustness.latency]\nepsilon_lo = 3.0\n").unwrap_err();
        assert_eq!(e.path, "robustness.latency.epsilon_hi");
        let e = ScenarioConfig::from_toml_str("[eval]\niou_thresholds = [0.5, 1.5]\n").unwrap_err();
        assert_eq!(e.path, "eval.iou_thresholds[1]");
        assert!(ScenarioConfig::from_toml_str("frames = \"x\"").is_err());
    }

    #[test]
    fn overrides() {
        let c = ScenarioConfig::default();
        assert_eq!(c.with_override("channel.latency_s", "0").unwrap().channel.latency_s, 0.0);
        assert_eq!(c.with_override("channel.latency_s", "0.3").unwrap().channel.latency_s, 0.3);
        assert_eq!(c.with_override("frames", "7").unwrap().frames, 7);
        assert_eq!(c.with_override("packing.zeta", "0.125").unwrap().packing.zeta, 0.125);
        assert_eq!(
            c.with_override("channel.bandwidth_cap_log2", "12").unwrap().channel.bandwidth_cap_log2,
            Some(12.0)
        );
        let occ = c.with_override("scene.layout", "occlusion").unwrap();
        assert_eq!(occ.scene.layout, Layout::Occlusion);
        assert_eq!(occ.with_override("agents.count", "3").unwrap_err().path, "agents.count");
        assert_eq!(occ.with_override("scene.object_count", "7").unwrap_err().path, "scene.object_count");
        assert!(!c.with_override("robustness.pose_correction", "false").unwrap().robustness.pose_correction);
        assert_eq!(c.with_override("nope.x", "1").unwrap_err().path, "nope");
        assert!(c.with_override("channel.nope", "1").is_err());
        assert_eq!(c.with_override("packing.zeta", "2").unwrap_err().path, "packing.zeta");
    }

    #[test]
    fn collaboration_switches() {
        let mut c = ScenarioConfig::default();
        assert!(c.collaborates());
        c.channel.bandwidth_cap_log2 = Some(0.0);
        assert!(!c.collaborates());
        c.channel.bandwidth_cap_log2 = Some(10.0);
        c.collaboration = false;
        assert!(!c.collaborates());
    }
}
