//! Sparse instance recognition (SIR) feature encoder with fixed weights.
//!
//! One layer maps per-point features `F` (N×D) of a cluster to
//!
//! ```text
//! F̃   = relu(W₁ [F ; P − C] + b₁)              (N×D)
//! out = relu(W₂ [F̃ ; maxpool(F̃)] + b₂)         (N×D)
//! ```
//!
//! where `maxpool` is the per-channel maximum over the cluster's points and
//! is broadcast back to every row. A cluster feature stacks `L` layers
//! starting from zero point features, concatenates the `L` layer outputs per
//! point, projects `L·D → D` linearly and max-pools over points.
//!
//! Weights are drawn from a seeded generator and shared by every agent.

use rand::{Rng as _, SeedableRng};

use crate::cluster::PointCluster;
use crate::error::ShapeError;
use crate::geometry::Vec3;
use crate::scalar::Real;
use crate::seed::Rng;

/// Affine map `y = W x + b`, `W` stored row-major as `outputs × inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self, ShapeError> {
        if weight.len() != inputs * outputs {
            return Err(ShapeError::Mismatch {
                what: "dense weight",
                expected: inputs * outputs,
                got: weight.len(),
            });
        }
        if bias.len() != outputs {
            return Err(ShapeError::Mismatch {
                what: "dense bias",
                expected: outputs,
                got: bias.len(),
            });
        }
        Ok(Self {
            inputs,
            outputs,
            weight,
            bias,
        })
    }

    /// Glorot-uniform weights, small uniform biases.
    fn seeded(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = (0..inputs * outputs)
            .map(|_| T::lit(rng.random_range(-limit..limit)))
            .collect();
        let bias = (0..outputs).map(|_| T::lit(rng.random_range(-0.05..0.05))).collect();
        Self {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    fn row(&self, o: usize) -> &[T] {
        &self.weight[o * self.inputs..(o + 1) * self.inputs]
    }

    /// `W[:, cols] · x` for a contiguous column range.
    fn partial(&self, o: usize, start: usize, x: &[T]) -> T {
        self.row(o)[start..start + x.len()]
            .iter()
            .zip(x)
            .fold(T::zero(), |acc, (&w, &v)| acc + w * v)
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.inputs);
        (0..self.outputs).map(|o| self.bias[o] + self.partial(o, 0, x)).collect()
    }
}

fn relu<T: Real>(v: T) -> T {
    v.max(T::zero())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SirLayer<T> {
    /// `(D + 3) → D`: point feature concatenated with its center offset.
    pub point_mlp: Dense<T>,
    /// `2D → D`: transformed feature concatenated with the pooled feature.
    pub context_mlp: Dense<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SirWeights<T> {
    pub dim: usize,
    pub layers: Vec<SirLayer<T>>,
    /// `L·D → D`, no activation.
    pub projection: Dense<T>,
}

impl<T: Real> SirWeights<T> {
    pub fn seeded(dim: usize, layer_count: usize, seed: u64) -> Self {
        assert!(dim > 0 && layer_count > 0, "SIR needs D ≥ 1 and L ≥ 1");
        let mut rng = Rng::seed_from_u64(seed);
        let layers = (0..layer_count)
            .map(|_| SirLayer {
                point_mlp: Dense::seeded(dim + 3, dim, &mut rng),
                context_mlp: Dense::seeded(2 * dim, dim, &mut rng),
            })
            .collect();
        let projection = Dense::seeded(layer_count * dim, dim, &mut rng);
        Self {
            dim,
            layers,
            projection,
        }
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        let d = self.dim;
        let check = |what, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(ShapeError::Mismatch { what, expected, got })
            }
        };
        if self.layers.is_empty() {
            return Err(ShapeError::Empty("SIR layer stack"));
        }
        for l in &self.layers {
            check("point_mlp inputs", d + 3, l.point_mlp.inputs)?;
            check("point_mlp outputs", d, l.point_mlp.outputs)?;
            check("context_mlp inputs", 2 * d, l.context_mlp.inputs)?;
            check("context_mlp outputs", d, l.context_mlp.outputs)?;
        }
        check("projection inputs", self.layers.len() * d, self.projection.inputs)?;
        check("projection outputs", d, self.projection.outputs)
    }
}

fn channel_max<T: Real>(rows: &[Vec<T>], dim: usize) -> Vec<T> {
    let mut m = vec![T::neg_infinity(); dim];
    for r in rows {
        for (acc, &v) in m.iter_mut().zip(r) {
            *acc = acc.max(v);
        }
    }
    m
}

/// One SIR layer over a cluster's points.
pub fn sir_layer<T: Real>(
    points: &[Vec3<T>],
    center: Vec3<T>,
    point_feats: &[Vec<T>],
    layer: &SirLayer<T>,
) -> Result<Vec<Vec<T>>, ShapeError> {
    if points.is_empty() {
        return Err(ShapeError::Empty("cluster points"));
    }
    if point_feats.len() != points.len() {
        return Err(ShapeError::Mismatch {
            what: "point feature rows",
            expected: points.len(),
            got: point_feats.len(),
        });
    }
    let d = layer.point_mlp.outputs;
    let in_dim = layer.point_mlp.inputs;
    if in_dim < 3 || layer.context_mlp.inputs != 2 * d {
        return Err(ShapeError::Mismatch {
            what: "context_mlp inputs",
            expected: 2 * d,
            got: layer.context_mlp.inputs,
        });
    }
    let feat_dim = in_dim - 3;
    let mut transformed = Vec::with_capacity(points.len());
    let mut input = vec![T::zero(); in_dim];
    for (p, f) in points.iter().zip(point_feats) {
        if f.len() != feat_dim {
            return Err(ShapeError::Mismatch {
                what: "point feature width",
                expected: feat_dim,
                got: f.len(),
            });
        }
        let off = *p - center;
        input[..feat_dim].copy_from_slice(f);
        input[feat_dim..].copy_from_slice(&[off.x, off.y, off.z]);
        transformed.push(layer.point_mlp.forward(&input).into_iter().map(relu).collect::<Vec<T>>());
    }
    let pooled = channel_max(&transformed, d);
    // the pooled half of W₂ is shared by every row
    let ctx = &layer.context_mlp;
    let shared: Vec<T> = (0..ctx.outputs).map(|o| ctx.bias[o] + ctx.partial(o, d, &pooled)).collect();
    Ok(transformed
        .iter()
        .map(|row| (0..ctx.outputs).map(|o| relu(shared[o] + ctx.partial(o, 0, row))).collect())
        .collect())
}

/// The cluster feature: stacked layers, concatenation, projection, max-pool.
pub fn extract_cluster_feature<T: Real>(cluster: &PointCluster<T>, weights: &SirWeights<T>) -> Result<Vec<T>, ShapeError> {
    weights.validate()?;
    let d = weights.dim;
    let n = cluster.points.len();
    let mut feats = vec![vec![T::zero(); d]; n];
    let mut stacked = vec![Vec::with_capacity(d * weights.layers.len()); n];
    for layer in &weights.layers {
        feats = sir_layer(&cluster.points, cluster.center, &feats, layer)?;
        for (acc, f) in stacked.iter_mut().zip(&feats) {
            acc.extend_from_slice(f);
        }
    }
    let projected: Vec<Vec<T>> = stacked.iter().map(|s| weights.projection.forward(s)).collect();
    Ok(channel_max(&projected, d))
}
