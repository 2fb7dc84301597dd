//! Pinhole cameras with 5-coefficient Brown–Conrady distortion.
//!
//! Camera frame: z along the optical axis, x to the image right, y down.
//! Extrinsics map world to camera: `Xc = R·X + t` with `R` given as an
//! axis-angle vector.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::gradcore::{Op, Ops};
use crate::math::{self, Mat3, Vec3};

/// Points closer to the image plane than this (meters) are behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CameraError {
    #[error("camera {camera:?}: {field}: {message}")]
    Invalid {
        camera: String,
        field: &'static str,
        message: String,
    },
    #[error("rig: {0}")]
    Rig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// `[k1, k2, p1, p2, k3]`.
pub type Distortion = [f64; 5];

#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub name: String,
    pub intrinsics: Intrinsics,
    pub distortion: Distortion,
    /// World-to-camera rotation, axis-angle (radians).
    pub rotation: Vec3,
    /// World-to-camera translation (meters).
    pub translation: Vec3,
    pub width: u32,
    pub height: u32,
}

/// World-to-camera transform as recorded values.
#[derive(Debug, Clone, Copy)]
pub struct CameraPose<V> {
    pub r: [[V; 3]; 3],
    pub t: [V; 3],
}

impl CameraModel {
    /// Camera at `eye` looking at `target` with world `up` pointing image-up.
    pub fn look_at(
        name: &str,
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        intrinsics: Intrinsics,
        width: u32,
        height: u32,
    ) -> Self {
        let z = normalize(math::sub3(&target, &eye));
        let x = normalize(cross(&z, &up));
        let y = cross(&z, &x);
        let r = [x, y, z];
        let rt = math::mat3_vec(&r, &eye);
        Self {
            name: name.into(),
            intrinsics,
            distortion: [0.0; 5],
            rotation: math::matrix_axis_angle(&r),
            translation: [-rt[0], -rt[1], -rt[2]],
            width,
            height,
        }
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        math::axis_angle_matrix(&self.rotation)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        let rt = math::mat3_transpose(&self.rotation_matrix());
        let c = math::mat3_vec(&rt, &self.translation);
        [-c[0], -c[1], -c[2]]
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let bad = |field: &'static str, message: String| CameraError::Invalid {
            camera: self.name.clone(),
            field,
            message,
        };
        let i = &self.intrinsics;
        for (field, v) in [("fx", i.fx), ("fy", i.fy)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(
                    field,
                    format!("focal length must be finite and positive, got {v}"),
                ));
            }
        }
        for (field, v) in [("cx", i.cx), ("cy", i.cy)] {
            if !v.is_finite() {
                return Err(bad(field, format!("non-finite value {v}")));
            }
        }
        if self.distortion.iter().any(|v| !v.is_finite()) {
            return Err(bad("distortion", "non-finite coefficient".into()));
        }
        if self
            .rotation
            .iter()
            .chain(&self.translation)
            .any(|v| !v.is_finite())
        {
            return Err(bad("extrinsics", "non-finite value".into()));
        }
        let angle = math::norm3(&self.rotation);
        if !(angle <= core::f64::consts::PI + 1e-9) {
            return Err(bad(
                "extrinsics.axis_angle",
                format!("rotation magnitude {angle} exceeds pi"),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(bad(
                "image_size",
                "width and height must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Pose as constants.
    pub fn pose<O: Ops>(&self, o: &mut O) -> CameraPose<O::V> {
        let r = self.rotation_matrix();
        CameraPose {
            r: core::array::from_fn(|i| core::array::from_fn(|j| o.constant(r[i][j]))),
            t: core::array::from_fn(|i| o.constant(self.translation[i])),
        }
    }

    /// Pose with rotation `Exp(delta)·R0` and translation `t`, differentiable
    /// in both.
    pub fn pose_with_increment<O: Ops>(
        &self,
        o: &mut O,
        delta: [O::V; 3],
        t: [O::V; 3],
    ) -> CameraPose<O::V> {
        let r0 = self.rotation_matrix();
        let d = [o.val(delta[0]), o.val(delta[1]), o.val(delta[2])];
        let (e, de) = exp_with_partials(&d);
        let r = math::mat3_mul(&e, &r0);
        let dr: [Mat3; 3] = core::array::from_fn(|k| math::mat3_mul(&de[k], &r0));
        CameraPose {
            r: core::array::from_fn(|i| {
                core::array::from_fn(|j| {
                    o.custom(
                        Op::Fused("exp_rotation"),
                        r[i][j],
                        &[
                            (delta[0], dr[0][i][j]),
                            (delta[1], dr[1][i][j]),
                            (delta[2], dr[2][i][j]),
                        ],
                    )
                })
            }),
            t,
        }
    }

    /// Camera with the increment folded into its stored extrinsics.
    pub fn with_increment(&self, delta: &Vec3, t: &Vec3) -> Self {
        let (e, _) = exp_with_partials(delta);
        let r = math::mat3_mul(&e, &self.rotation_matrix());
        Self {
            rotation: math::matrix_axis_angle(&r),
            translation: *t,
            ..self.clone()
        }
    }

    /// Projects a world point, `None` when it lies behind the camera.
    pub fn project(&self, x: &Vec3) -> Option<[f64; 2]> {
        let r = self.rotation_matrix();
        let xc = math::mat3_vec(&r, x);
        let xc = [
            xc[0] + self.translation[0],
            xc[1] + self.translation[1],
            xc[2] + self.translation[2],
        ];
        self.project_camera_frame(&xc)
    }

    /// Projects a point already in camera coordinates.
    pub fn project_camera_frame(&self, xc: &Vec3) -> Option<[f64; 2]> {
        if !(xc[2] > MIN_DEPTH) {
            return None;
        }
        let (x, y) = (xc[0] / xc[2], xc[1] / xc[2]);
        let (xd, yd) = distort(&self.distortion, x, y);
        Some([
            self.intrinsics.fx * xd + self.intrinsics.cx,
            self.intrinsics.fy * yd + self.intrinsics.cy,
        ])
    }

    /// Differentiable projection through `pose`.
    pub fn project_with<O: Ops>(
        &self,
        o: &mut O,
        pose: &CameraPose<O::V>,
        x: &[O::V; 3],
    ) -> Option<[O::V; 2]> {
        let xv = [o.val(x[0]), o.val(x[1]), o.val(x[2])];
        let xc: [O::V; 3] = core::array::from_fn(|i| {
            let ri = [
                o.val(pose.r[i][0]),
                o.val(pose.r[i][1]),
                o.val(pose.r[i][2]),
            ];
            let value = ri[0] * xv[0] + ri[1] * xv[1] + ri[2] * xv[2] + o.val(pose.t[i]);
            o.custom(
                Op::Fused("rigid"),
                value,
                &[
                    (pose.r[i][0], xv[0]),
                    (pose.r[i][1], xv[1]),
                    (pose.r[i][2], xv[2]),
                    (x[0], ri[0]),
                    (x[1], ri[1]),
                    (x[2], ri[2]),
                    (pose.t[i], 1.0),
                ],
            )
        });
        self.project_camera_frame_with(o, &xc)
    }

    /// Differentiable perspective, distortion and intrinsics.
    pub fn project_camera_frame_with<O: Ops>(
        &self,
        o: &mut O,
        xc: &[O::V; 3],
    ) -> Option<[O::V; 2]> {
        let (xx, yy, zz) = (o.val(xc[0]), o.val(xc[1]), o.val(xc[2]));
        if !(zz > MIN_DEPTH) {
            return None;
        }
        let (x, y) = (xx / zz, yy / zz);
        let (xd, yd) = distort(&self.distortion, x, y);
        let Intrinsics { fx, fy, cx, cy } = self.intrinsics;
        let u_val = fx * xd + cx;
        let v_val = fy * yd + cy;
        if !o.records() {
            return Some([
                o.custom(Op::Fused("project_u"), u_val, &[]),
                o.custom(Op::Fused("project_v"), v_val, &[]),
            ]);
        }
        let [k1, k2, p1, p2, k3] = self.distortion;
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
        let drad = k1 + r2 * (2.0 * k2 + 3.0 * k3 * r2);
        let dxd_dx = radial + 2.0 * x * x * drad + 2.0 * p1 * y + 6.0 * p2 * x;
        let dxd_dy = 2.0 * x * y * drad + 2.0 * p1 * x + 2.0 * p2 * y;
        let dyd_dx = 2.0 * x * y * drad + 2.0 * p1 * x + 2.0 * p2 * y;
        let dyd_dy = radial + 2.0 * y * y * drad + 6.0 * p1 * y + 2.0 * p2 * x;
        let iz = 1.0 / zz;
        let u = o.custom(
            Op::Fused("project_u"),
            u_val,
            &[
                (xc[0], fx * dxd_dx * iz),
                (xc[1], fx * dxd_dy * iz),
                (xc[2], -fx * (dxd_dx * x + dxd_dy * y) * iz),
            ],
        );
        let v = o.custom(
            Op::Fused("project_v"),
            v_val,
            &[
                (xc[0], fy * dyd_dx * iz),
                (xc[1], fy * dyd_dy * iz),
                (xc[2], -fy * (dyd_dx * x + dyd_dy * y) * iz),
            ],
        );
        Some([u, v])
    }
}

/// Brown–Conrady distortion of normalized coordinates.
pub fn distort(dist: &Distortion, x: f64, y: f64) -> (f64, f64) {
    let [k1, k2, p1, p2, k3] = *dist;
    let r2 = x * x + y * y;
    let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
    let xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    let yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
    (xd, yd)
}

/// `Exp(δ)` and its partials with respect to each component of δ.
fn exp_with_partials(d: &Vec3) -> (Mat3, [Mat3; 3]) {
    let q = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let (a, b) = math::rodrigues_coeffs(q);
    let (da, db) = math::rodrigues_coeffs_dq(q);
    let k = math::skew(d);
    let k2 = math::mat3_mul(&k, &k);
    let e: Mat3 = core::array::from_fn(|i| {
        core::array::from_fn(|j| if i == j { 1.0 } else { 0.0 } + a * k[i][j] + b * k2[i][j])
    });
    let de = core::array::from_fn(|m| {
        let mut unit = [0.0; 3];
        unit[m] = 1.0;
        let dk = math::skew(&unit);
        core::array::from_fn(|i| {
            core::array::from_fn(|j| {
                // K² = δδᵀ − q·I
                let dk2 = unit[i] * d[j] + d[i] * unit[j] - if i == j { 2.0 * d[m] } else { 0.0 };
                2.0 * d[m] * (da * k[i][j] + db * k2[i][j]) + a * dk[i][j] + b * dk2
            })
        })
    });
    (e, de)
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: Vec3) -> Vec3 {
    let n = math::norm3(&v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Named cameras plus a per-camera flag for trainable extrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    cameras: Vec<CameraModel>,
    refine: Vec<bool>,
}

impl Rig {
    pub fn new(cameras: Vec<CameraModel>, refine: Vec<bool>) -> Result<Self, CameraError> {
        if cameras.is_empty() {
            return Err(CameraError::Rig("at least one camera is required".into()));
        }
        if refine.len() != cameras.len() {
            return Err(CameraError::Rig(format!(
                "refine mask has {} entries for {} cameras",
                refine.len(),
                cameras.len()
            )));
        }
        for (i, c) in cameras.iter().enumerate() {
            c.validate()?;
            if cameras[..i].iter().any(|o| o.name == c.name) {
                return Err(CameraError::Rig(format!(
                    "duplicate camera name {:?}",
                    c.name
                )));
            }
        }
        Ok(Self { cameras, refine })
    }

    pub fn cameras(&self) -> &[CameraModel] {
        &self.cameras
    }

    pub fn refine_mask(&self) -> &[bool] {
        &self.refine
    }

    pub fn set_refine(&mut self, idx: usize, refine: bool) {
        self.refine[idx] = refine;
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.cameras.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.cameras.iter().map(|c| c.name.as_str()).collect()
    }

    /// Replaces a camera's extrinsics; the camera must stay valid.
    pub fn update_camera(&mut self, idx: usize, camera: CameraModel) -> Result<(), CameraError> {
        camera.validate()?;
        self.cameras[idx] = camera;
        Ok(())
    }

    /// Rig restricted to `names`, in the given order.
    pub fn subset(&self, names: &[&str]) -> Result<Self, CameraError> {
        let mut cams = Vec::with_capacity(names.len());
        let mut refine = Vec::with_capacity(names.len());
        for n in names {
            let i = self
                .index_of(n)
                .ok_or_else(|| CameraError::Rig(format!("unknown camera {n:?}")))?;
            cams.push(self.cameras[i].clone());
            refine.push(self.refine[i]);
        }
        Self::new(cams, refine)
    }
}
