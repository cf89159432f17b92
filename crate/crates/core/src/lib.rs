//! Point-cluster collaborative perception.

// `!(a > b)` is used on purpose where NaN must take the failing branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod boxes;
pub mod cluster;
pub mod clustering;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod linalg;
pub mod netsim;
pub mod packing;
pub mod pipeline;
pub mod robustness;
pub mod scalar;
pub mod scene;
pub mod seed;
pub mod sir;
pub mod spatial;
pub mod union_find;
pub mod wire;

pub type Vec2 = geometry::Vec2<f64>;
pub type Vec3 = geometry::Vec3<f64>;
pub type Pose = geometry::Pose<f64>;
pub type OrientedBox = boxes::OrientedBox<f64>;
pub type PointCluster = cluster::PointCluster<f64>;
pub type AgentMessage = cluster::AgentMessage<f64>;
pub type Scene = scene::Scene<f64>;
pub type RunReport = pipeline::RunReport<f64>;

pub type Pose32 = geometry::Pose<f32>;
pub type OrientedBox32 = boxes::OrientedBox<f32>;
pub type PointCluster32 = cluster::PointCluster<f32>;
pub type AgentMessage32 = cluster::AgentMessage<f32>;
pub type Scene32 = scene::Scene<f32>;
pub type RunReport32 = pipeline::RunReport<f32>;
