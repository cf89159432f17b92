//! Little-endian binary encoding of [`AgentMessage`].
//!
//! ```text
//! header   "PCV1" | version u8 | flags u8 | feature_dim u16 | agent_id u32
//!          | timestamp f64 | pose x,y,z,yaw f32 | cluster_count u32
//! cluster  point_count u32 | center 3×f32 | feature D×v | box 8×f32
//!          | points N×3×v | scores N×v (flag bit 0)
//! ```
//!
//! `v` is f16, or f32 when flag bit 1 is set. Box fields are center xyz,
//! h, w, l, yaw, confidence. Points are stored as offsets from the cluster
//! center, which keeps f16 resolution at the centimeter level far from the
//! sensor. Scores that were not transmitted decode as 1.

use half::f16;

use crate::boxes::{BoxSize, OrientedBox};
use crate::cluster::{AgentMessage, PointCluster};
use crate::error::WireError;
use crate::geometry::{Pose, Vec3};
use crate::scalar::Real;

pub const MAGIC: [u8; 4] = *b"PCV1";
pub const VERSION: u8 = 1;

const FLAG_SCORES: u8 = 1;
const FLAG_FULL: u8 = 1 << 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WireOptions {
    /// f16 for coordinates, features and scores; f32 otherwise.
    pub half_precision: bool,
    pub include_scores: bool,
}

impl Default for WireOptions {
    fn default() -> Self {
        Self {
            half_precision: true,
            include_scores: false,
        }
    }
}

struct Writer {
    buf: Vec<u8>,
    half: bool,
}

impl Writer {
    // Values that round to zero are written as +0 so decoded messages re-encode identically.
    fn f32(&mut self, v: f64) {
        let x = v as f32;
        let x = if x == 0.0 { 0.0 } else { x };
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    fn val(&mut self, v: f64) {
        if self.half {
            let h = f16::from_f64(v);
            let h = if h == f16::ZERO { f16::ZERO } else { h };
            self.buf.extend_from_slice(&h.to_le_bytes());
        } else {
            self.f32(v);
        }
    }
}

pub fn serialize<T: Real>(m: &AgentMessage<T>, opts: WireOptions) -> Result<Vec<u8>, WireError> {
    let dim = m.clusters.first().map_or(0, |c| c.feature.len());
    let dim16 = u16::try_from(dim).map_err(|_| WireError::OutOfRange("feature_dim"))?;
    let count = u32::try_from(m.clusters.len()).map_err(|_| WireError::OutOfRange("cluster_count"))?;
    let mut flags = 0;
    if opts.include_scores {
        flags |= FLAG_SCORES;
    }
    if !opts.half_precision {
        flags |= FLAG_FULL;
    }
    let mut w = Writer {
        buf: Vec::with_capacity(encoded_len(m, opts)),
        half: opts.half_precision,
    };
    w.buf.extend_from_slice(&MAGIC);
    w.buf.extend_from_slice(&[VERSION, flags]);
    w.buf.extend_from_slice(&dim16.to_le_bytes());
    w.buf.extend_from_slice(&m.agent_id.to_le_bytes());
    w.buf.extend_from_slice(&m.timestamp.as_f64().to_le_bytes());
    for v in [m.pose.x, m.pose.y, m.pose.z, m.pose.yaw] {
        w.f32(v.as_f64());
    }
    w.buf.extend_from_slice(&count.to_le_bytes());

    for (i, c) in m.clusters.iter().enumerate() {
        let b = c.proposal.ok_or(WireError::MissingProposal(i))?;
        if c.feature.len() != dim {
            return Err(WireError::FeatureDim {
                index: i,
                expected: dim,
                got: c.feature.len(),
            });
        }
        let n = u32::try_from(c.points.len()).map_err(|_| WireError::OutOfRange("point_count"))?;
        w.buf.extend_from_slice(&n.to_le_bytes());
        // offsets are taken from the center as it will be decoded
        let center = [c.center.x, c.center.y, c.center.z].map(|v| v.as_f64() as f32 as f64);
        for v in center {
            w.f32(v);
        }
        for &f in &c.feature {
            w.val(f.as_f64());
        }
        for v in [b.center.x, b.center.y, b.center.z, b.size.h, b.size.w, b.size.l, b.yaw, b.confidence] {
            w.f32(v.as_f64());
        }
        for p in &c.points {
            w.val(p.x.as_f64() - center[0]);
            w.val(p.y.as_f64() - center[1]);
            w.val(p.z.as_f64() - center[2]);
        }
        if opts.include_scores {
            if c.semantic_scores.len() != c.points.len() {
                return Err(WireError::OutOfRange("semantic_scores length"));
            }
            for &s in &c.semantic_scores {
                w.val(s.as_f64());
            }
        }
    }
    Ok(w.buf)
}

/// Exact byte length `serialize` will produce.
pub fn encoded_len<T: Real>(m: &AgentMessage<T>, opts: WireOptions) -> usize {
    let v = if opts.half_precision { 2 } else { 4 };
    let header = 4 + 1 + 1 + 2 + 4 + 8 + 16 + 4;
    header
        + m.clusters
            .iter()
            .map(|c| {
                let per_point = 3 + usize::from(opts.include_scores);
                4 + 12 + v * c.feature.len() + 32 + v * per_point * c.points.len()
            })
            .sum::<usize>()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    half: bool,
}

impl<'a> Reader<'a> {
    fn take<const K: usize>(&mut self) -> Result<[u8; K], WireError> {
        let available = self.buf.len() - self.pos;
        if available < K {
            return Err(WireError::Truncated {
                offset: self.pos,
                needed: K,
                available,
            });
        }
        let mut out = [0; K];
        out.copy_from_slice(&self.buf[self.pos..self.pos + K]);
        self.pos += K;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        self.take().map(u32::from_le_bytes)
    }

    fn f32<T: Real>(&mut self) -> Result<T, WireError> {
        self.take().map(|b| T::lit(f32::from_le_bytes(b) as f64))
    }

    fn val<T: Real>(&mut self) -> Result<T, WireError> {
        if self.half {
            self.take().map(|b| T::lit(f16::from_le_bytes(b).to_f64()))
        } else {
            self.f32()
        }
    }

    fn vec3<T: Real>(&mut self, read: fn(&mut Self) -> Result<T, WireError>) -> Result<Vec3<T>, WireError> {
        Ok(Vec3::new(read(self)?, read(self)?, read(self)?))
    }
}

pub fn deserialize<T: Real>(bytes: &[u8]) -> Result<AgentMessage<T>, WireError> {
    let mut r = Reader {
        buf: bytes,
        pos: 0,
        half: true,
    };
    let magic: [u8; 4] = r.take()?;
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let [version, flags] = r.take()?;
    if version != VERSION {
        return Err(WireError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    r.half = flags & FLAG_FULL == 0;
    let has_scores = flags & FLAG_SCORES != 0;
    let dim = u16::from_le_bytes(r.take()?) as usize;
    let agent_id = r.u32()?;
    let timestamp = T::lit(f64::from_le_bytes(r.take()?));
    let pose = Pose::new(r.f32()?, r.f32()?, r.f32()?, r.f32()?);
    let count = r.u32()? as usize;

    // counts are untrusted: never pre-allocate more than the buffer could hold
    let mut clusters = Vec::with_capacity(count.min(bytes.len() / 48));
    for _ in 0..count {
        let n = r.u32()? as usize;
        let center: Vec3<T> = r.vec3(Reader::f32)?;
        let feature = (0..dim).map(|_| r.val()).collect::<Result<Vec<T>, _>>()?;
        let bc = r.vec3(Reader::f32)?;
        let (h, w, l) = (r.f32()?, r.f32()?, r.f32()?);
        let (yaw, confidence) = (r.f32()?, r.f32()?);
        let mut points = Vec::with_capacity(n.min(bytes.len() / 6));
        for _ in 0..n {
            points.push(center + r.vec3(Reader::val)?);
        }
        let scores = if has_scores {
            (0..n).map(|_| r.val()).collect::<Result<Vec<T>, _>>()?
        } else {
            vec![T::one(); n]
        };
        let mut c = PointCluster::new(points, scores, center);
        c.feature = feature;
        c.proposal = Some(OrientedBox {
            center: bc,
            size: BoxSize::new(h, w, l),
            yaw,
            confidence,
        });
        clusters.push(c);
    }
    if r.pos != bytes.len() {
        return Err(WireError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(AgentMessage {
        agent_id,
        timestamp,
        pose,
        clusters,
    })
}

/// The message as a receiver will see it.
pub fn quantize<T: Real>(m: &AgentMessage<T>, opts: WireOptions) -> Result<AgentMessage<T>, WireError> {
    deserialize(&serialize(m, opts)?)
}
