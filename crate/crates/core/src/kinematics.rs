//! Articulated-body forward kinematics.
//!
//! A model is a tree of rigid segments. The root carries a free joint (three
//! translations in meters, then intrinsic XYZ Euler angles); every other
//! segment carries a bounded hinge or a bounded ball joint (intrinsic XYZ
//! Euler angles). Marker sites are fixed points on segments.
//!
//! The scale vector β holds `S` dimensionless segment scale factors followed
//! by a 3-vector residual offset (meters) for every site. A segment's scale
//! factor multiplies both its offset from the parent and the nominal offsets
//! of its own sites; the residual is added after scaling.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::gradcore::{Eval, Op, Ops};
use crate::math::{self, Mat3};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum JointType {
    Free,
    Hinge,
    Ball,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SegmentSpec {
    pub name: String,
    #[cfg_attr(feature = "serde", serde(default))]
    pub parent: Option<String>,
    pub offset: [f64; 3],
    #[cfg_attr(feature = "serde", serde(default))]
    pub scale: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct JointSpec {
    pub name: String,
    pub segment: String,
    #[cfg_attr(feature = "serde", serde(rename = "type"))]
    pub kind: JointType,
    /// Hinge axis in the parent frame; normalised on load.
    #[cfg_attr(feature = "serde", serde(default))]
    pub axis: Option<[f64; 3]>,
    /// One `[lower, upper]` pair per bounded degree of freedom (radians).
    #[cfg_attr(feature = "serde", serde(default))]
    pub limits: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SiteSpec {
    pub name: String,
    pub segment: String,
    pub offset: [f64; 3],
}

/// File-agnostic model description, validated by
/// [`KinematicModel::from_description`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ModelDescription {
    pub version: u32,
    pub name: String,
    pub scale_param_count: usize,
    pub segments: Vec<SegmentSpec>,
    pub joints: Vec<JointSpec>,
    pub sites: Vec<SiteSpec>,
}

/// Limits of a bounded degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointBound {
    pub lower: f64,
    pub upper: f64,
}

impl JointBound {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn half_range(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    /// Distance outside the interval, zero inside.
    pub fn excess(&self, x: f64) -> f64 {
        if x > self.upper {
            x - self.upper
        } else if x < self.lower {
            self.lower - x
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Joint {
    Free,
    Hinge { axis: [f64; 3] },
    Ball,
}

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    name: String,
    parent: Option<usize>,
    offset: [f64; 3],
    scale: Option<usize>,
    joint: Joint,
    dof: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Site {
    segment: usize,
    offset: [f64; 3],
}

/// Validated, immutable kinematic tree.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicModel {
    description: ModelDescription,
    /// Parents precede children.
    segments: Vec<Segment>,
    sites: Vec<Site>,
    bounds: Vec<Option<JointBound>>,
    dof_names: Vec<String>,
}

/// Segment frames and site positions from one forward pass.
#[derive(Debug, Clone)]
pub struct BodyFrames<V> {
    /// Segment origins in world coordinates, in [`KinematicModel::segment_names`] order.
    pub segment_positions: Vec<[V; 3]>,
    pub segment_rotations: Vec<[[V; 3]; 3]>,
    pub sites: Vec<[V; 3]>,
}

/// Segment scale factors followed by per-site residual offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleParams {
    values: Vec<f64>,
}

impl ScaleParams {
    /// Unit scales and zero site offsets.
    pub fn identity(model: &KinematicModel) -> Self {
        let mut values = alloc::vec![1.0; model.scale_count()];
        values.resize(model.beta_len(), 0.0);
        Self { values }
    }

    pub fn new(model: &KinematicModel, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != model.beta_len() {
            return Err(ModelError::Dimension {
                what: "beta",
                expected: model.beta_len(),
                got: values.len(),
            });
        }
        if let Some(i) = values[..model.scale_count()]
            .iter()
            .position(|&s| !(s > 0.0))
        {
            return Err(schema(
                format!("beta[{i}]"),
                "scale factors must be positive",
            ));
        }
        Ok(Self { values })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl KinematicModel {
    pub fn from_description(desc: &ModelDescription) -> Result<Self, ModelError> {
        if desc.version != MODEL_FORMAT_VERSION {
            return Err(schema(
                "version",
                format!(
                    "unsupported version {} (expected {MODEL_FORMAT_VERSION})",
                    desc.version
                ),
            ));
        }
        let n = desc.segments.len();
        if n == 0 {
            return Err(schema("segments", "at least one segment is required"));
        }
        // Resolve names and parents.
        let mut parents = Vec::with_capacity(n);
        for (i, s) in desc.segments.iter().enumerate() {
            if desc.segments[..i].iter().any(|o| o.name == s.name) {
                return Err(schema(
                    format!("segments[{i}].name"),
                    format!("duplicate segment {:?}", s.name),
                ));
            }
            let parent = match &s.parent {
                None => None,
                Some(p) => Some(desc.segments.iter().position(|o| &o.name == p).ok_or_else(
                    || {
                        schema(
                            format!("segments[{i}].parent"),
                            format!("unknown parent {p:?}"),
                        )
                    },
                )?),
            };
            if let Some(k) = s.scale {
                if k >= desc.scale_param_count {
                    return Err(schema(
                        format!("segments[{i}].scale"),
                        format!(
                            "index {k} exceeds scale_param_count {}",
                            desc.scale_param_count
                        ),
                    ));
                }
            }
            if s.offset.iter().any(|x| !x.is_finite()) {
                return Err(schema(format!("segments[{i}].offset"), "non-finite offset"));
            }
            parents.push(parent);
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(schema(
                "segments",
                format!("expected exactly one root, found {}", roots.len()),
            ));
        }
        // Topological order by walking from the root; anything unreached sits
        // on a cycle.
        let mut order = Vec::with_capacity(n);
        let mut stack = alloc::vec![roots[0]];
        while let Some(i) = stack.pop() {
            order.push(i);
            for c in (0..n).rev() {
                if parents[c] == Some(i) {
                    stack.push(c);
                }
            }
        }
        if order.len() != n {
            let on_cycle = (0..n).find(|i| !order.contains(i)).unwrap();
            return Err(schema(
                format!("segments[{on_cycle}].parent"),
                "segment hierarchy contains a cycle",
            ));
        }
        // Joints: exactly one per segment, root free, others bounded.
        let mut joint_of = alloc::vec![None; n];
        for (j, js) in desc.joints.iter().enumerate() {
            let seg = desc
                .segments
                .iter()
                .position(|s| s.name == js.segment)
                .ok_or_else(|| {
                    schema(
                        format!("joints[{j}].segment"),
                        format!("unknown segment {:?}", js.segment),
                    )
                })?;
            if joint_of[seg].is_some() {
                return Err(schema(
                    format!("joints[{j}].segment"),
                    "segment already has a joint",
                ));
            }
            let is_root = parents[seg].is_none();
            let path = format!("joints[{j}]");
            match (js.kind, is_root) {
                (JointType::Free, false) => {
                    return Err(schema(
                        format!("{path}.type"),
                        "free joint on a non-root segment",
                    ))
                }
                (JointType::Hinge | JointType::Ball, true) => {
                    return Err(schema(
                        format!("{path}.type"),
                        "root segment must have a free joint",
                    ))
                }
                _ => {}
            }
            let expected = match js.kind {
                JointType::Free => 0,
                JointType::Hinge => 1,
                JointType::Ball => 3,
            };
            if js.limits.len() != expected {
                return Err(schema(
                    format!("{path}.limits"),
                    format!("expected {expected} limit pairs, got {}", js.limits.len()),
                ));
            }
            for (k, l) in js.limits.iter().enumerate() {
                if !(l[0].is_finite() && l[1].is_finite()) || !(l[0] < l[1]) {
                    return Err(schema(
                        format!("{path}.limits[{k}]"),
                        format!(
                            "limits must be finite with lower < upper, got ({}, {})",
                            l[0], l[1]
                        ),
                    ));
                }
            }
            if js.kind == JointType::Hinge {
                let a = js
                    .axis
                    .ok_or_else(|| schema(format!("{path}.axis"), "hinge requires an axis"))?;
                let nrm = math::norm3(&a);
                if !(nrm > 1e-12) || !nrm.is_finite() {
                    return Err(schema(
                        format!("{path}.axis"),
                        "axis must be a finite non-zero vector",
                    ));
                }
            }
            joint_of[seg] = Some(j);
        }
        if let Some(seg) = (0..n).find(|&i| joint_of[i].is_none()) {
            return Err(schema(
                format!("segments[{seg}]"),
                format!("segment {:?} has no joint", desc.segments[seg].name),
            ));
        }
        // Pose layout: root first, then joints in declaration order.
        let root = roots[0];
        let mut dof_of = alloc::vec![0usize; n];
        let mut bounds = alloc::vec![None; 6];
        let mut dof_names: Vec<String> = ["tx", "ty", "tz", "rx", "ry", "rz"]
            .iter()
            .map(|s| format!("{}_{s}", desc.segments[root].name))
            .collect();
        for js in &desc.joints {
            let seg = desc
                .segments
                .iter()
                .position(|s| s.name == js.segment)
                .unwrap();
            if seg == root {
                continue;
            }
            dof_of[seg] = bounds.len();
            for (k, l) in js.limits.iter().enumerate() {
                bounds.push(Some(JointBound {
                    lower: l[0],
                    upper: l[1],
                }));
                dof_names.push(if js.kind == JointType::Ball {
                    format!("{}_{}", js.name, ["x", "y", "z"][k])
                } else {
                    js.name.clone()
                });
            }
        }
        let mut index_of = alloc::vec![0usize; n];
        for (pos, &i) in order.iter().enumerate() {
            index_of[i] = pos;
        }
        let segments = order
            .iter()
            .map(|&i| {
                let s = &desc.segments[i];
                let js = &desc.joints[joint_of[i].unwrap()];
                let joint = match js.kind {
                    JointType::Free => Joint::Free,
                    JointType::Ball => Joint::Ball,
                    JointType::Hinge => {
                        let a = js.axis.unwrap();
                        let nrm = math::norm3(&a);
                        Joint::Hinge {
                            axis: [a[0] / nrm, a[1] / nrm, a[2] / nrm],
                        }
                    }
                };
                Segment {
                    name: s.name.clone(),
                    parent: parents[i].map(|p| index_of[p]),
                    offset: s.offset,
                    scale: s.scale,
                    joint,
                    dof: dof_of[i],
                }
            })
            .collect();
        let mut sites = Vec::with_capacity(desc.sites.len());
        for (j, s) in desc.sites.iter().enumerate() {
            if desc.sites[..j].iter().any(|o| o.name == s.name) {
                return Err(schema(
                    format!("sites[{j}].name"),
                    format!("duplicate site {:?}", s.name),
                ));
            }
            let seg = desc
                .segments
                .iter()
                .position(|g| g.name == s.segment)
                .ok_or_else(|| {
                    schema(
                        format!("sites[{j}].segment"),
                        format!("unknown segment {:?}", s.segment),
                    )
                })?;
            if s.offset.iter().any(|x| !x.is_finite()) {
                return Err(schema(format!("sites[{j}].offset"), "non-finite offset"));
            }
            sites.push(Site {
                segment: index_of[seg],
                offset: s.offset,
            });
        }
        Ok(Self {
            description: desc.clone(),
            segments,
            sites,
            bounds,
            dof_names,
        })
    }

    pub fn description(&self) -> &ModelDescription {
        &self.description
    }

    pub fn name(&self) -> &str {
        &self.description.name
    }

    /// Pose dimension K.
    pub fn pose_dim(&self) -> usize {
        self.bounds.len()
    }

    /// Number of marker sites J.
    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn site_names(&self) -> Vec<&str> {
        self.description
            .sites
            .iter()
            .map(|s| s.name.as_str())
            .collect()
    }

    /// Number of segment scale factors S.
    pub fn scale_count(&self) -> usize {
        self.description.scale_param_count
    }

    /// Length of β: `S + 3·J`.
    pub fn beta_len(&self) -> usize {
        self.scale_count() + 3 * self.site_count()
    }

    /// Per-DoF limits; `None` for the six root DoF.
    pub fn bounds(&self) -> &[Option<JointBound>] {
        &self.bounds
    }

    pub fn dof_names(&self) -> &[String] {
        &self.dof_names
    }

    /// Whether DoF `k` is an angle (everything except root translation).
    pub fn is_angular(&self, k: usize) -> bool {
        k >= 3
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    /// Segment names in evaluation order (parents first).
    pub fn segment_names(&self) -> Vec<&str> {
        self.segments.iter().map(|s| s.name.as_str()).collect()
    }

    /// Pose with every bounded DoF at its limit midpoint and the root at the
    /// origin.
    pub fn neutral_pose(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|b| b.map_or(0.0, |b| b.mid()))
            .collect()
    }

    /// Per-DoF distance outside the joint limits (zero for the root).
    pub fn joint_limit_violation(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_pose(theta.len())?;
        Ok(theta
            .iter()
            .zip(&self.bounds)
            .map(|(&x, b)| b.map_or(0.0, |b| b.excess(x)))
            .collect())
    }

    fn check_pose(&self, len: usize) -> Result<(), ModelError> {
        if len != self.pose_dim() {
            return Err(ModelError::Dimension {
                what: "pose",
                expected: self.pose_dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Site positions (meters) for plain values.
    pub fn markers(&self, beta: &[f64], theta: &[f64]) -> Result<Vec<[f64; 3]>, ModelError> {
        Ok(self.forward(&mut Eval, beta, theta)?.sites)
    }

    /// Composes scaled segment transforms root to leaf.
    pub fn forward<O: Ops>(
        &self,
        o: &mut O,
        beta: &[O::V],
        theta: &[O::V],
    ) -> Result<BodyFrames<O::V>, ModelError> {
        self.check_pose(theta.len())?;
        if beta.len() != self.beta_len() {
            return Err(ModelError::Dimension {
                what: "beta",
                expected: self.beta_len(),
                got: beta.len(),
            });
        }
        let n = self.segments.len();
        let mut positions: Vec<[O::V; 3]> = Vec::with_capacity(n);
        let mut rotations: Vec<[[O::V; 3]; 3]> = Vec::with_capacity(n);
        for seg in &self.segments {
            let scale = seg.scale.map(|k| beta[k]);
            match seg.parent {
                None => {
                    let r = euler_xyz(
                        o,
                        theta[seg.dof + 3],
                        theta[seg.dof + 4],
                        theta[seg.dof + 5],
                    );
                    let p: [O::V; 3] = core::array::from_fn(|i| match scale {
                        Some(s) => o.linear(&[(theta[seg.dof + i], 1.0), (s, seg.offset[i])], 0.0),
                        None => o.add_const(theta[seg.dof + i], seg.offset[i]),
                    });
                    positions.push(p);
                    rotations.push(r);
                }
                Some(pi) => {
                    let local = match seg.joint {
                        Joint::Hinge { axis } => hinge(o, &axis, theta[seg.dof]),
                        Joint::Ball => {
                            euler_xyz(o, theta[seg.dof], theta[seg.dof + 1], theta[seg.dof + 2])
                        }
                        Joint::Free => unreachable!("validated: free joints only on the root"),
                    };
                    let pr = rotations[pi];
                    let pp = positions[pi];
                    let p = transform_point(o, &pp, &pr, seg.offset, scale, None);
                    let r = mat3_mul(o, &pr, &local);
                    positions.push(p);
                    rotations.push(r);
                }
            }
        }
        let s_count = self.scale_count();
        let sites = self
            .sites
            .iter()
            .enumerate()
            .map(|(j, site)| {
                let seg = &self.segments[site.segment];
                let scale = seg.scale.map(|k| beta[k]);
                let residual = [
                    beta[s_count + 3 * j],
                    beta[s_count + 3 * j + 1],
                    beta[s_count + 3 * j + 2],
                ];
                transform_point(
                    o,
                    &positions[site.segment],
                    &rotations[site.segment],
                    site.offset,
                    scale,
                    Some(residual),
                )
            })
            .collect();
        Ok(BodyFrames {
            segment_positions: positions,
            segment_rotations: rotations,
            sites,
        })
    }
}

/// `p + R·(s·nominal + residual)` as three fused nodes.
fn transform_point<O: Ops>(
    o: &mut O,
    p: &[O::V; 3],
    r: &[[O::V; 3]; 3],
    nominal: [f64; 3],
    scale: Option<O::V>,
    residual: Option<[O::V; 3]>,
) -> [O::V; 3] {
    let sv = scale.map_or(1.0, |s| o.val(s));
    let local: [f64; 3] =
        core::array::from_fn(|j| sv * nominal[j] + residual.map_or(0.0, |res| o.val(res[j])));
    core::array::from_fn(|i| {
        let rv = [o.val(r[i][0]), o.val(r[i][1]), o.val(r[i][2])];
        let value = o.val(p[i]) + rv[0] * local[0] + rv[1] * local[1] + rv[2] * local[2];
        let mut parts: [(O::V, f64); 8] = [(p[i], 1.0); 8];
        let mut n = 1;
        for j in 0..3 {
            parts[n] = (r[i][j], local[j]);
            n += 1;
        }
        if let Some(s) = scale {
            let ds = rv[0] * nominal[0] + rv[1] * nominal[1] + rv[2] * nominal[2];
            parts[n] = (s, ds);
            n += 1;
        }
        if let Some(res) = residual {
            for j in 0..3 {
                parts[n] = (res[j], rv[j]);
                n += 1;
            }
        }
        o.custom(Op::Fused("transform_point"), value, &parts[..n])
    })
}

/// Product of two 3×3 matrices of recorded values.
pub fn mat3_mul<O: Ops>(o: &mut O, a: &[[O::V; 3]; 3], b: &[[O::V; 3]; 3]) -> [[O::V; 3]; 3] {
    let av: Mat3 = core::array::from_fn(|i| core::array::from_fn(|j| o.val(a[i][j])));
    let bv: Mat3 = core::array::from_fn(|i| core::array::from_fn(|j| o.val(b[i][j])));
    core::array::from_fn(|i| {
        core::array::from_fn(|j| {
            let value = av[i][0] * bv[0][j] + av[i][1] * bv[1][j] + av[i][2] * bv[2][j];
            let parts = [
                (a[i][0], bv[0][j]),
                (a[i][1], bv[1][j]),
                (a[i][2], bv[2][j]),
                (b[0][j], av[i][0]),
                (b[1][j], av[i][1]),
                (b[2][j], av[i][2]),
            ];
            o.custom(Op::Fused("mat3_mul"), value, &parts)
        })
    })
}

/// Intrinsic XYZ Euler rotation `Rx(a)·Ry(b)·Rz(c)`.
pub fn euler_xyz<O: Ops>(o: &mut O, a: O::V, b: O::V, c: O::V) -> [[O::V; 3]; 3] {
    let (av, bv, cv) = (o.val(a), o.val(b), o.val(c));
    let (rx, ry, rz) = (math::rot_x(av), math::rot_y(bv), math::rot_z(cv));
    let r = math::mat3_mul(&math::mat3_mul(&rx, &ry), &rz);
    if !o.records() {
        return core::array::from_fn(|i| core::array::from_fn(|j| o.constant(r[i][j])));
    }
    let (sa, ca) = (math::sin(av), math::cos(av));
    let (sb, cb) = (math::sin(bv), math::cos(bv));
    let (sc, cc) = (math::sin(cv), math::cos(cv));
    let drx = [[0.0, 0.0, 0.0], [0.0, -sa, -ca], [0.0, ca, -sa]];
    let dry = [[-sb, 0.0, cb], [0.0, 0.0, 0.0], [-cb, 0.0, -sb]];
    let drz = [[-sc, -cc, 0.0], [cc, -sc, 0.0], [0.0, 0.0, 0.0]];
    let da = math::mat3_mul(&math::mat3_mul(&drx, &ry), &rz);
    let db = math::mat3_mul(&math::mat3_mul(&rx, &dry), &rz);
    let dc = math::mat3_mul(&math::mat3_mul(&rx, &ry), &drz);
    core::array::from_fn(|i| {
        core::array::from_fn(|j| {
            o.custom(
                Op::Fused("euler_xyz"),
                r[i][j],
                &[(a, da[i][j]), (b, db[i][j]), (c, dc[i][j])],
            )
        })
    })
}

/// Rotation by `angle` about the fixed unit `axis`.
pub fn hinge<O: Ops>(o: &mut O, axis: &[f64; 3], angle: O::V) -> [[O::V; 3]; 3] {
    let t = o.val(angle);
    let (s, c) = (math::sin(t), math::cos(t));
    let k = math::skew(axis);
    let k2 = math::mat3_mul(&k, &k);
    core::array::from_fn(|i| {
        core::array::from_fn(|j| {
            let id = if i == j { 1.0 } else { 0.0 };
            let value = id + s * k[i][j] + (1.0 - c) * k2[i][j];
            let d = c * k[i][j] + s * k2[i][j];
            o.custom(Op::Fused("hinge"), value, &[(angle, d)])
        })
    })
}

/// Pose name helper for error messages.
pub fn describe_dof(model: &KinematicModel, k: usize) -> String {
    model
        .dof_names()
        .get(k)
        .cloned()
        .unwrap_or_else(|| k.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::{jacobian, ParamVector};
    use crate::presets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain(n_hinges: usize, lengths: &[f64]) -> ModelDescription {
        let mut segments = alloc::vec![SegmentSpec {
            name: "base".into(),
            parent: None,
            offset: [0.0; 3],
            scale: None,
        }];
        let mut joints = alloc::vec![JointSpec {
            name: "root".into(),
            segment: "base".into(),
            kind: JointType::Free,
            axis: None,
            limits: alloc::vec![],
        }];
        for i in 0..n_hinges {
            let parent = if i == 0 {
                "base".to_string()
            } else {
                format!("link{}", i - 1)
            };
            let off = if i == 0 { 0.0 } else { lengths[i - 1] };
            segments.push(SegmentSpec {
                name: format!("link{i}"),
                parent: Some(parent),
                offset: [off, 0.0, 0.0],
                scale: Some(0),
            });
            joints.push(JointSpec {
                name: format!("q{i}"),
                segment: format!("link{i}"),
                kind: JointType::Hinge,
                axis: Some([0.0, 0.0, 1.0]),
                limits: alloc::vec![[-3.0, 3.0]],
            });
        }
        let last = format!("link{}", n_hinges - 1);
        ModelDescription {
            version: 1,
            name: "chain".into(),
            scale_param_count: 1,
            segments,
            joints,
            sites: alloc::vec![
                SiteSpec {
                    name: "tip".into(),
                    segment: last.clone(),
                    offset: [lengths[n_hinges - 1], 0.0, 0.0]
                },
                SiteSpec {
                    name: "mid".into(),
                    segment: last,
                    offset: [0.5 * lengths[n_hinges - 1], 0.0, 0.0]
                },
            ],
        }
    }

    fn unit_beta(m: &KinematicModel) -> Vec<f64> {
        ScaleParams::identity(m).into_vec()
    }

    #[test]
    fn zero_pose_places_tip_at_length() {
        let m = KinematicModel::from_description(&chain(1, &[0.7])).unwrap();
        let x = m.markers(&unit_beta(&m), &alloc::vec![0.0; 7]).unwrap();
        assert_eq!(x[0], [0.7, 0.0, 0.0]);
    }

    #[test]
    fn quarter_turn_hinge() {
        let m = KinematicModel::from_description(&chain(1, &[0.7])).unwrap();
        let mut theta = alloc::vec![0.0; 7];
        theta[6] = core::f64::consts::FRAC_PI_2;
        let x = m.markers(&unit_beta(&m), &theta).unwrap();
        assert!((x[0][0]).abs() < 1e-15 && (x[0][1] - 0.7).abs() < 1e-15 && x[0][2] == 0.0);
    }

    #[test]
    fn planar_chain_matches_angle_sum_formula() {
        let lengths = [0.4, 0.3, 0.25];
        let m = KinematicModel::from_description(&chain(3, &lengths)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let mut theta = alloc::vec![0.0; 9];
            for k in 6..9 {
                theta[k] = rng.random_range(-3.0..3.0);
            }
            let x = m.markers(&unit_beta(&m), &theta).unwrap()[0];
            // Oracle: x = Σ Lᵢ cos(q₀+…+qᵢ), y = Σ Lᵢ sin(q₀+…+qᵢ).
            let (mut ox, mut oy, mut acc) = (0.0, 0.0, 0.0);
            for i in 0..3 {
                acc += theta[6 + i];
                ox += lengths[i] * acc.cos();
                oy += lengths[i] * acc.sin();
            }
            assert!(
                (x[0] - ox).abs() <= 1e-10 && (x[1] - oy).abs() <= 1e-10 && x[2].abs() <= 1e-10
            );
        }
    }

    #[test]
    fn limit_violation_examples() {
        let m = KinematicModel::from_description(&chain(1, &[0.7])).unwrap();
        let mut desc = chain(1, &[0.7]);
        desc.joints[1].limits = alloc::vec![[-1.0, 1.0]];
        let m2 = KinematicModel::from_description(&desc).unwrap();
        assert!(m
            .joint_limit_violation(&m.neutral_pose())
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let mut theta = alloc::vec![0.0; 7];
        theta[6] = 1.3;
        theta[0] = 100.0;
        let v = m2.joint_limit_violation(&theta).unwrap();
        assert!((v[6] - 0.3).abs() < 1e-15);
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn limit_violation_matches_clamp_oracle() {
        let m = KinematicModel::from_description(&presets::humanoid_lite()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let theta: Vec<f64> = (0..m.pose_dim())
                .map(|_| rng.random_range(-3.0..3.0))
                .collect();
            let v = m.joint_limit_violation(&theta).unwrap();
            for (k, b) in m.bounds().iter().enumerate() {
                let expect = match b {
                    None => 0.0,
                    Some(b) => (theta[k] - theta[k].clamp(b.lower, b.upper)).abs(),
                };
                assert_eq!(v[k], expect);
            }
        }
    }

    #[test]
    fn inverted_limits_rejected_with_path() {
        let mut desc = chain(1, &[0.7]);
        desc.joints[1].limits = alloc::vec![[0.5, -0.5]];
        match KinematicModel::from_description(&desc) {
            Err(ModelError::Schema { path, .. }) => assert_eq!(path, "joints[1].limits[0]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cycle_and_unknown_parent_rejected() {
        let mut desc = chain(2, &[0.5, 0.5]);
        desc.segments[1].parent = Some("link1".into());
        assert!(matches!(
            KinematicModel::from_description(&desc),
            Err(ModelError::Schema { ref message, .. }) if message.contains("cycle")
        ));
        let mut desc = chain(1, &[0.5]);
        desc.segments[1].parent = Some("nowhere".into());
        assert!(matches!(
            KinematicModel::from_description(&desc),
            Err(ModelError::Schema { ref path, .. }) if path == "segments[1].parent"
        ));
    }

    #[test]
    fn dimension_mismatch_reported() {
        let m = KinematicModel::from_description(&chain(1, &[0.7])).unwrap();
        assert!(matches!(
            m.markers(&unit_beta(&m), &[0.0; 3]),
            Err(ModelError::Dimension { what: "pose", .. })
        ));
    }

    #[test]
    fn bundled_models_have_documented_sizes() {
        let lite = KinematicModel::from_description(&presets::humanoid_lite()).unwrap();
        assert_eq!((lite.pose_dim(), lite.site_count()), (16, 20));
        let paper = KinematicModel::from_description(&presets::paper_scale()).unwrap();
        assert_eq!(
            (paper.pose_dim(), paper.site_count(), paper.scale_count()),
            (40, 87, 8)
        );
        assert_eq!(paper.beta_len(), 8 + 87 * 3);
    }

    #[test]
    fn same_segment_site_distances_are_rigid() {
        let m = KinematicModel::from_description(&presets::humanoid_lite()).unwrap();
        let beta = unit_beta(&m);
        let names = m.site_names();
        let pairs: Vec<(usize, usize)> = {
            let d = m.description();
            let mut v = Vec::new();
            for i in 0..names.len() {
                for j in i + 1..names.len() {
                    if d.sites[i].segment == d.sites[j].segment {
                        v.push((i, j));
                    }
                }
            }
            v
        };
        assert!(!pairs.is_empty());
        let reference = m.markers(&beta, &m.neutral_pose()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let theta: Vec<f64> = (0..m.pose_dim())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let x = m.markers(&beta, &theta).unwrap();
            for &(i, j) in &pairs {
                let d0 = math::norm3(&math::sub3(&reference[i], &reference[j]));
                let d1 = math::norm3(&math::sub3(&x[i], &x[j]));
                assert!((d0 - d1).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn doubling_scale_doubles_offset_contribution() {
        let m = KinematicModel::from_description(&chain(1, &[0.7])).unwrap();
        let mut theta = alloc::vec![0.0; 7];
        theta[6] = 0.4;
        let x1 = m
            .markers(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &theta)
            .unwrap()[0];
        let x2 = m
            .markers(&[2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &theta)
            .unwrap()[0];
        for i in 0..3 {
            assert!((x2[i] - 2.0 * x1[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_jacobian_matches_differences() {
        let m = KinematicModel::from_description(&presets::humanoid_lite()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let theta: Vec<f64> = (0..m.pose_dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let mut beta = unit_beta(&m);
        for b in beta.iter_mut() {
            *b += rng.random_range(-0.05..0.05);
        }
        let mut p = ParamVector::new();
        p.push("theta", &theta).push("beta", &beta);
        let k = m.pose_dim();
        let f = |o: &mut crate::gradcore::Tape, x: &[crate::gradcore::Var]| {
            let frames = m.forward(o, &x[k..], &x[..k]).unwrap();
            frames.sites.iter().flatten().copied().collect::<Vec<_>>()
        };
        let jac = jacobian(f, &p).unwrap();
        let h = 1e-5;
        let eval = |v: &[f64]| -> Vec<f64> {
            m.markers(&v[k..], &v[..k])
                .unwrap()
                .into_iter()
                .flatten()
                .collect()
        };
        for col in 0..p.len() {
            let mut plus = p.values().to_vec();
            plus[col] += h;
            let mut minus = p.values().to_vec();
            minus[col] -= h;
            let (fp, fm) = (eval(&plus), eval(&minus));
            for row in 0..fp.len() {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                let rel = (jac[(row, col)] - fd).abs() / fd.abs().max(1.0);
                assert!(
                    rel <= 1e-5,
                    "row {row} col {col}: {} vs {fd}",
                    jac[(row, col)]
                );
            }
        }
    }
}
