//! Synthetic world and sensing oracle.
//!
//! Objects are boxes resting on the ground plane (`z = 0`) moving at constant
//! velocity. Each agent observes the world with a bird's-eye ray caster: one
//! ray per bearing step, the nearest box footprint along the ray within range
//! returns a vertical column of points on the struck face. The oracle then
//! labels those points the way a trained segmentation and center-voting head
//! would, with controllable noise.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::boxes::{footprints_overlap, ray_entry_bev, BoxSize, OrientedBox};
use crate::cluster::AgentId;
use crate::error::SceneError;
use crate::geometry::{Pose, Vec2, Vec3};
use crate::scalar::Real;
use crate::seed::Rng;

const PLACEMENT_ATTEMPTS: usize = 2000;
/// Free space kept between object footprints.
const OBJECT_CLEARANCE: f64 = 0.5;
/// Free space kept between an object footprint and any agent.
const AGENT_CLEARANCE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Objects scattered uniformly over a square of side `extent`.
    Random,
    /// Pairs of objects on common bearings from the ego: the nearer one
    /// hides the farther one completely. A second agent faces the ego from
    /// the far side and sees the hidden objects.
    Occlusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub layout: Layout,
    /// Side of the square objects are placed in, meters.
    pub extent: f64,
    pub object_count: usize,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Fraction of objects with zero velocity.
    pub stationary_fraction: f64,
    pub length_range: [f64; 2],
    pub width_range: [f64; 2],
    pub height_range: [f64; 2],
    /// Points returned per ray hit, spread over the box height.
    pub vertical_layers: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            layout: Layout::Random,
            extent: 80.0,
            object_count: 12,
            speed_min: 5.0,
            speed_max: 12.0,
            stationary_fraction: 0.25,
            length_range: [3.6, 4.8],
            width_range: [1.6, 2.0],
            height_range: [1.4, 1.7],
            vertical_layers: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsSpec {
    pub count: usize,
    /// Distance of non-ego agents from the ego (random layout).
    pub spacing: f64,
    pub sensor_range: f64,
    /// Bearing step of the ray caster, radians.
    pub angular_resolution: f64,
}

impl Default for AgentsSpec {
    fn default() -> Self {
        Self {
            count: 2,
            spacing: 30.0,
            sensor_range: 60.0,
            angular_resolution: 0.5_f64.to_radians(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleNoise {
    /// Std of the per-point center vote error, meters.
    pub center_sigma: f64,
    /// Probability that a semantic score lands on the wrong side of 0.5.
    pub score_flip_rate: f64,
    /// Background clutter density, points per m² of sensor disk.
    pub bg_clutter_rate: f64,
}

impl Default for OracleNoise {
    fn default() -> Self {
        Self {
            center_sigma: 0.1,
            score_flip_rate: 0.02,
            bg_clutter_rate: 0.005,
        }
    }
}

impl OracleNoise {
    pub fn zero() -> Self {
        Self {
            center_sigma: 0.0,
            score_flip_rate: 0.0,
            bg_clutter_rate: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectState<T> {
    /// Ground truth box, confidence 1.
    pub bbox: OrientedBox<T>,
    pub velocity: Vec2<T>,
    pub object_id: u32,
}

impl<T: Real> ObjectState<T> {
    pub fn speed(&self) -> T {
        self.velocity.norm()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec<T> {
    pub agent_id: AgentId,
    pub pose: Pose<T>,
    pub sensor_range: T,
    pub angular_resolution: T,
    pub is_ego: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene<T> {
    pub time: T,
    pub objects: Vec<ObjectState<T>>,
    pub agents: Vec<AgentSpec<T>>,
    pub vertical_layers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledPoint<T> {
    pub position: Vec3<T>,
    pub is_foreground: bool,
    pub object_id: Option<u32>,
    pub semantic_score: T,
    pub predicted_center: Vec3<T>,
}

/// One agent's observation, in that agent's local frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledPointCloud<T> {
    pub points: Vec<LabeledPoint<T>>,
}

impl<T: Real> LabeledPointCloud<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Foreground point count per object id.
    pub fn foreground_counts(&self) -> BTreeMap<u32, usize> {
        let mut out = BTreeMap::new();
        for p in &self.points {
            if let (true, Some(id)) = (p.is_foreground, p.object_id) {
                *out.entry(id).or_insert(0) += 1;
            }
        }
        out
    }

    /// One line per point: `x,y,z,fg,object_id,score` (`object_id` is -1 for
    /// background).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,z,fg,object_id,score")?;
        for p in &self.points {
            let id = p.object_id.map_or(-1, i64::from);
            writeln!(
                w,
                "{:.6},{:.6},{:.6},{},{},{:.6}",
                p.position.x.as_f64(),
                p.position.y.as_f64(),
                p.position.z.as_f64(),
                u8::from(p.is_foreground),
                id,
                p.semantic_score.as_f64()
            )?;
        }
        Ok(())
    }
}

fn uniform(rng: &mut Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

fn validate(spec: &SceneSpec, agents: &AgentsSpec) -> Result<(), SceneError> {
    if agents.count < 2 {
        return Err(SceneError::TooFewAgents { min: 2, got: agents.count });
    }
    if spec.object_count == 0 {
        return Err(SceneError::NoObjects);
    }
    let ranges = [spec.length_range, spec.width_range, spec.height_range];
    if ranges.iter().any(|r| !(r[0] > 0.0 && r[1] >= r[0])) {
        return Err(SceneError::Invalid("size ranges must be positive and ordered".into()));
    }
    if !(spec.speed_min >= 0.0 && spec.speed_max >= spec.speed_min) {
        return Err(SceneError::Invalid("speed range must be non-negative and ordered".into()));
    }
    if !(agents.sensor_range > 0.0 && agents.angular_resolution > 0.0) {
        return Err(SceneError::Invalid("sensor range and angular resolution must be positive".into()));
    }
    if spec.vertical_layers == 0 {
        return Err(SceneError::Invalid("vertical_layers must be at least 1".into()));
    }
    if spec.layout == Layout::Occlusion && !spec.object_count.is_multiple_of(2) {
        return Err(SceneError::Invalid("occlusion layout needs an even object count".into()));
    }
    Ok(())
}

fn make_agent<T: Real>(id: AgentId, pose: Pose<f64>, agents: &AgentsSpec) -> AgentSpec<T> {
    AgentSpec {
        agent_id: id,
        pose: pose.cast(),
        sensor_range: T::lit(agents.sensor_range),
        angular_resolution: T::lit(agents.angular_resolution),
        is_ego: id == 0,
    }
}

fn random_speed(spec: &SceneSpec, rng: &mut Rng) -> f64 {
    if rng.random::<f64>() < spec.stationary_fraction {
        0.0
    } else {
        uniform(rng, [spec.speed_min, spec.speed_max])
    }
}

/// Builds a scene deterministically from `(spec, agents, seed)`. The ego is
/// agent 0 at the origin.
pub fn generate_scene<T: Real>(spec: &SceneSpec, agents: &AgentsSpec, seed: u64) -> Result<Scene<T>, SceneError> {
    use rand::SeedableRng;
    validate(spec, agents)?;
    let mut rng = Rng::seed_from_u64(seed);
    match spec.layout {
        Layout::Random => random_layout(spec, agents, &mut rng),
        Layout::Occlusion => occlusion_layout(spec, agents, &mut rng),
    }
}

fn random_layout<T: Real>(spec: &SceneSpec, agents: &AgentsSpec, rng: &mut Rng) -> Result<Scene<T>, SceneError> {
    let others = agents.count - 1;
    let mut agent_list = vec![make_agent::<T>(0, Pose::identity(), agents)];
    for k in 0..others {
        let theta = std::f64::consts::TAU * k as f64 / others as f64 + std::f64::consts::FRAC_PI_4;
        let (s, c) = theta.sin_cos();
        let pose = Pose::new(agents.spacing * c, agents.spacing * s, 0.0, theta + std::f64::consts::PI);
        agent_list.push(make_agent(k as AgentId + 1, pose, agents));
    }

    let half = spec.extent * 0.5;
    let mut objects: Vec<ObjectState<T>> = Vec::with_capacity(spec.object_count);
    for index in 0..spec.object_count {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let size = BoxSize::from_f64(
                uniform(rng, spec.height_range),
                uniform(rng, spec.width_range),
                uniform(rng, spec.length_range),
            );
            let x = rng.random_range(-half..=half);
            let y = rng.random_range(-half..=half);
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let bbox = OrientedBox::new(Vec3::new(T::lit(x), T::lit(y), size.h * T::lit(0.5)), size, T::lit(yaw), T::one())
                .map_err(|e| SceneError::Invalid(e.to_string()))?;
            let clear_of_objects = objects
                .iter()
                .all(|o| !footprints_overlap(&o.bbox, &bbox, T::lit(OBJECT_CLEARANCE * 0.5)));
            let clear_of_agents = agent_list
                .iter()
                .all(|a| !bbox.contains_bev(a.pose.translation().xy(), T::lit(AGENT_CLEARANCE)));
            if clear_of_objects && clear_of_agents {
                let speed = random_speed(spec, rng);
                placed = Some(ObjectState {
                    bbox,
                    velocity: Vec2::new(T::lit(speed * yaw.cos()), T::lit(speed * yaw.sin())),
                    object_id: index as u32,
                });
                break;
            }
        }
        objects.push(placed.ok_or(SceneError::PlacementFailed {
            index,
            attempts: PLACEMENT_ATTEMPTS,
        })?);
    }
    Ok(Scene {
        time: T::zero(),
        objects,
        agents: agent_list,
        vertical_layers: spec.vertical_layers,
    })
}

const OCCLUDER_RANGE: f64 = 12.0;
const HIDDEN_RANGE: f64 = 20.0;
const FAR_AGENT_RANGE: f64 = 40.0;
const OCCLUSION_FAN: f64 = 40.0;

fn occlusion_layout<T: Real>(spec: &SceneSpec, agents: &AgentsSpec, rng: &mut Rng) -> Result<Scene<T>, SceneError> {
    let mut agent_list = vec![
        make_agent::<T>(0, Pose::identity(), agents),
        make_agent::<T>(1, Pose::new(FAR_AGENT_RANGE, 0.0, 0.0, std::f64::consts::PI), agents),
    ];
    for k in 2..agents.count {
        // extra agents sit well off to the side so they do not change who sees what
        let y = if k % 2 == 0 { -1.0 } else { 1.0 } * (40.0 + 10.0 * (k / 2) as f64);
        agent_list.push(make_agent(k as AgentId, Pose::new(HIDDEN_RANGE, y, 0.0, 0.0), agents));
    }

    let pairs = spec.object_count / 2;
    let fan = OCCLUSION_FAN.to_radians();
    let mut objects = Vec::with_capacity(spec.object_count);
    // occluders first, then hidden objects, so ids 0..pairs are visible to the ego
    let mut hidden = Vec::with_capacity(pairs);
    for k in 0..pairs {
        let bearing = if pairs == 1 {
            0.0
        } else {
            -fan + 2.0 * fan * k as f64 / (pairs - 1) as f64
        };
        // pairs close in on the ego along their bearing, which keeps the
        // far object inside the near one's shadow
        let speed = -random_speed(spec, rng);
        let (s, c) = bearing.sin_cos();
        let velocity = Vec2::new(T::lit(speed * c), T::lit(speed * s));
        for (range, bucket) in [(OCCLUDER_RANGE, 0usize), (HIDDEN_RANGE, 1)] {
            let size = BoxSize::from_f64(
                uniform(rng, spec.height_range),
                uniform(rng, spec.width_range),
                uniform(rng, spec.length_range),
            );
            let center = Vec3::new(T::lit(range * c), T::lit(range * s), size.h * T::lit(0.5));
            let bbox = OrientedBox::new(center, size, T::lit(bearing), T::one())
                .map_err(|e| SceneError::Invalid(e.to_string()))?;
            let state = ObjectState {
                bbox,
                velocity,
                object_id: 0,
            };
            if bucket == 0 {
                objects.push(state);
            } else {
                hidden.push(state);
            }
        }
    }
    objects.extend(hidden);
    for (i, o) in objects.iter_mut().enumerate() {
        o.object_id = i as u32;
    }
    Ok(Scene {
        time: T::zero(),
        objects,
        agents: agent_list,
        vertical_layers: spec.vertical_layers,
    })
}

impl<T: Real> Scene<T> {
    pub fn ego(&self) -> &AgentSpec<T> {
        self.agents.iter().find(|a| a.is_ego).expect("scene has an ego agent")
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentSpec<T>> {
        self.agents.iter().find(|a| a.agent_id == id)
    }

    /// Ground-truth boxes expressed in the local frame of `pose`.
    pub fn boxes_in_frame(&self, pose: &Pose<T>) -> Vec<(u32, OrientedBox<T>)> {
        let inv = pose.inverse();
        self.objects.iter().map(|o| (o.object_id, o.bbox.transformed(&inv))).collect()
    }
}

/// Advances every object along its velocity for `dt` seconds.
pub fn step_scene<T: Real>(scene: &Scene<T>, dt: T) -> Scene<T> {
    assert!(dt > T::zero(), "step_scene needs dt > 0");
    let mut next = scene.clone();
    next.time += dt;
    for o in &mut next.objects {
        o.bbox.center.x += o.velocity.x * dt;
        o.bbox.center.y += o.velocity.y * dt;
    }
    next
}

/// Nearest object hit along a bird's-eye ray: `(object index, distance)`.
pub fn cast_ray<T: Real>(objects: &[ObjectState<T>], origin: Vec2<T>, dir: Vec2<T>, max_range: T) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, o) in objects.iter().enumerate() {
        if let Some(t) = ray_entry_bev(&o.bbox, origin, dir) {
            if t <= max_range && best.is_none_or(|(_, bt)| t < bt) {
                best = Some((i, t));
            }
        }
    }
    best
}

fn draw_score(rng: &mut Rng, foreground: bool, flip_rate: f64) -> f64 {
    let s = if foreground {
        rng.random_range(0.7..=1.0)
    } else {
        rng.random_range(0.0..=0.3)
    };
    if flip_rate > 0.0 && rng.random::<f64>() < flip_rate {
        1.0 - s
    } else {
        s
    }
}

fn gaussian(rng: &mut Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

/// Simulated sensing for one agent; coordinates are in the agent's frame.
pub fn observe<T: Real>(
    scene: &Scene<T>,
    agent: &AgentSpec<T>,
    noise: &OracleNoise,
    seed: u64,
) -> Result<LabeledPointCloud<T>, SceneError> {
    use rand::SeedableRng;
    if !scene.agents.iter().any(|a| a.agent_id == agent.agent_id) {
        return Err(SceneError::UnknownAgent(agent.agent_id));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let origin = agent.pose.translation().xy();
    let to_local = agent.pose.inverse();
    let steps = (T::TAU() / agent.angular_resolution).round().to_usize().unwrap_or(0).max(1);
    let layers = scene.vertical_layers.max(1);
    let mut cloud = LabeledPointCloud::default();

    for k in 0..steps {
        let bearing = agent.pose.yaw - T::PI() + agent.angular_resolution * T::from_usize_lossy(k);
        let dir = Vec2::new(bearing.cos(), bearing.sin());
        let Some((idx, t)) = cast_ray(&scene.objects, origin, dir, agent.sensor_range) else {
            continue;
        };
        let obj = &scene.objects[idx];
        let hit = origin + dir * t;
        let center_local = to_local.apply(obj.bbox.center);
        for layer in 0..layers {
            let frac = (T::from_usize_lossy(layer) + T::lit(0.5)) / T::from_usize_lossy(layers);
            let z = obj.bbox.z_min() + obj.bbox.size.h * frac;
            let position = to_local.apply(Vec3::new(hit.x, hit.y, z));
            let vote = Vec3::new(
                T::lit(gaussian(&mut rng, noise.center_sigma)),
                T::lit(gaussian(&mut rng, noise.center_sigma)),
                T::lit(gaussian(&mut rng, noise.center_sigma)),
            );
            cloud.points.push(LabeledPoint {
                position,
                is_foreground: true,
                object_id: Some(obj.object_id),
                semantic_score: T::lit(draw_score(&mut rng, true, noise.score_flip_rate)),
                predicted_center: center_local + vote,
            });
        }
    }

    if noise.bg_clutter_rate > 0.0 {
        let r_max = agent.sensor_range.as_f64();
        let area = std::f64::consts::PI * r_max * r_max;
        let count = (noise.bg_clutter_rate * area).round() as usize;
        for _ in 0..count {
            let r = r_max * rng.random::<f64>().sqrt();
            let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let z = rng.random_range(0.0..0.3);
            let position = Vec3::new(T::lit(r * a.cos()), T::lit(r * a.sin()), T::lit(z));
            let vote = Vec3::new(
                T::lit(gaussian(&mut rng, noise.center_sigma)),
                T::lit(gaussian(&mut rng, noise.center_sigma)),
                T::lit(gaussian(&mut rng, noise.center_sigma)),
            );
            cloud.points.push(LabeledPoint {
                position,
                is_foreground: false,
                object_id: None,
                semantic_score: T::lit(draw_score(&mut rng, false, noise.score_flip_rate)),
                predicted_center: position + vote,
            });
        }
    }
    Ok(cloud)
}
