//! Bundled model descriptions.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::kinematics::{
    JointSpec, JointType, ModelDescription, SegmentSpec, SiteSpec, MODEL_FORMAT_VERSION,
};
use crate::math;

struct Builder {
    desc: ModelDescription,
}

impl Builder {
    fn new(name: &str, scale_count: usize) -> Self {
        Self {
            desc: ModelDescription {
                version: MODEL_FORMAT_VERSION,
                name: name.to_string(),
                scale_param_count: scale_count,
                segments: Vec::new(),
                joints: Vec::new(),
                sites: Vec::new(),
            },
        }
    }

    fn root(&mut self, name: &str, scale: usize) -> &mut Self {
        self.desc.segments.push(SegmentSpec {
            name: name.into(),
            parent: None,
            offset: [0.0; 3],
            scale: Some(scale),
        });
        self.desc.joints.push(JointSpec {
            name: name.into(),
            segment: name.into(),
            kind: JointType::Free,
            axis: None,
            limits: vec![],
        });
        self
    }

    fn segment(&mut self, name: &str, parent: &str, offset: [f64; 3], scale: usize) -> &mut Self {
        self.desc.segments.push(SegmentSpec {
            name: name.into(),
            parent: Some(parent.into()),
            offset,
            scale: Some(scale),
        });
        self
    }

    fn hinge(&mut self, joint: &str, segment: &str, axis: [f64; 3], limits: [f64; 2]) -> &mut Self {
        self.desc.joints.push(JointSpec {
            name: joint.into(),
            segment: segment.into(),
            kind: JointType::Hinge,
            axis: Some(axis),
            limits: vec![limits],
        });
        self
    }

    fn ball(&mut self, joint: &str, segment: &str, limits: [[f64; 2]; 3]) -> &mut Self {
        self.desc.joints.push(JointSpec {
            name: joint.into(),
            segment: segment.into(),
            kind: JointType::Ball,
            axis: None,
            limits: limits.to_vec(),
        });
        self
    }

    fn site(&mut self, name: &str, segment: &str, offset: [f64; 3]) -> &mut Self {
        self.desc.sites.push(SiteSpec {
            name: name.into(),
            segment: segment.into(),
            offset,
        });
        self
    }
}

fn mirror(v: [f64; 3]) -> [f64; 3] {
    [v[0], -v[1], v[2]]
}

/// Small humanoid: free pelvis, lumbar and neck hinges, ball hips, hinge
/// knees. K = 16, J = 20, four scale factors (trunk, thigh, shank, head).
pub fn humanoid_lite() -> ModelDescription {
    let mut b = Builder::new("humanoid-lite", 4);
    b.root("pelvis", 0)
        .site("asis_r", "pelvis", [0.06, -0.12, 0.05])
        .site("asis_l", "pelvis", [0.06, 0.12, 0.05])
        .site("sacrum", "pelvis", [-0.10, 0.0, 0.06]);
    b.segment("torso", "pelvis", [0.0, 0.0, 0.10], 0)
        .hinge("lumbar", "torso", [0.0, 1.0, 0.0], [-0.5, 0.8])
        .site("c7", "torso", [-0.06, 0.0, 0.45])
        .site("sternum", "torso", [0.09, 0.0, 0.32])
        .site("shoulder_r", "torso", [0.0, -0.18, 0.42])
        .site("shoulder_l", "torso", [0.0, 0.18, 0.42]);
    b.segment("head", "torso", [0.0, 0.0, 0.50], 3)
        .hinge("neck", "head", [0.0, 1.0, 0.0], [-0.6, 0.6])
        .site("head_front", "head", [0.09, 0.0, 0.12]);
    for (side, sign) in [("r", -1.0), ("l", 1.0)] {
        let thigh = format!("thigh_{side}");
        let shank = format!("shank_{side}");
        let adduction = [-0.5, 0.5];
        let rotation = [-0.6, 0.6];
        b.segment(&thigh, "pelvis", [0.0, 0.09 * sign, -0.05], 1)
            .ball(
                &format!("hip_{side}"),
                &thigh,
                [adduction, [-1.6, 0.5], rotation],
            )
            .site(&format!("thigh_{side}"), &thigh, [0.06, 0.05 * sign, -0.20])
            .site(
                &format!("knee_lat_{side}"),
                &thigh,
                [0.0, 0.05 * sign, -0.42],
            );
        b.segment(&shank, &thigh, [0.0, 0.0, -0.42], 2)
            .hinge(&format!("knee_{side}"), &shank, [0.0, 1.0, 0.0], [0.0, 2.2])
            .site(&format!("tibia_{side}"), &shank, [0.05, 0.02 * sign, -0.20])
            .site(
                &format!("ankle_lat_{side}"),
                &shank,
                [0.0, 0.04 * sign, -0.40],
            )
            .site(&format!("heel_{side}"), &shank, [-0.05, 0.0, -0.45])
            .site(&format!("toe_{side}"), &shank, [0.16, 0.0, -0.45]);
    }
    b.desc
}

/// Sites spread along and around a segment: `n` points at evenly spaced
/// fractions of `length`, each displaced `radius` perpendicular to it.
fn ring_sites(b: &mut Builder, segment: &str, length: [f64; 3], radius: f64, n: usize, phase: f64) {
    let l = math::norm3(&length);
    let dir = [length[0] / l, length[1] / l, length[2] / l];
    let reference = if dir[2].abs() > 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let a = normalize(cross(&dir, &reference));
    let c = cross(&dir, &a);
    for i in 0..n {
        let f = (i as f64 + 0.5) / n as f64;
        let ang = phase + core::f64::consts::TAU * i as f64 / n as f64;
        let (s, co) = (math::sin(ang), math::cos(ang));
        let offset = core::array::from_fn(|k| f * length[k] + radius * (co * a[k] + s * c[k]));
        b.site(&format!("{segment}_{i}"), segment, offset);
    }
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = math::norm3(&v);
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Full-body model at clinical-marker-set scale: K = 40 (free pelvis plus
/// 34 bounded DoF), J = 87 sites on 23 segments, S = 8 scale factors
/// (pelvis, trunk, head, upper arm, forearm, hand, thigh, shank and foot).
pub fn paper_scale() -> ModelDescription {
    let mut b = Builder::new("paper-scale", 8);
    b.root("pelvis", 0);
    ring_sites(&mut b, "pelvis", [0.0, 0.0, 0.10], 0.12, 7, 0.0);
    b.segment("torso", "pelvis", [0.0, 0.0, 0.10], 1).ball(
        "lumbar",
        "torso",
        [[-0.5, 0.5], [-0.6, 0.8], [-0.6, 0.6]],
    );
    ring_sites(&mut b, "torso", [0.0, 0.0, 0.45], 0.12, 8, 0.3);
    b.segment("head", "torso", [0.0, 0.0, 0.50], 2).ball(
        "neck",
        "head",
        [[-0.6, 0.6], [-0.6, 0.6], [-0.8, 0.8]],
    );
    ring_sites(&mut b, "head", [0.0, 0.0, 0.20], 0.08, 6, 0.1);

    struct Part {
        name: &'static str,
        parent: &'static str,
        offset: [f64; 3],
        scale: usize,
        length: [f64; 3],
        radius: f64,
        sites: usize,
    }
    let parts = [
        Part {
            name: "humerus",
            parent: "torso",
            offset: [0.0, -0.18, 0.42],
            scale: 3,
            length: [0.0, 0.0, -0.30],
            radius: 0.04,
            sites: 4,
        },
        Part {
            name: "ulna",
            parent: "humerus",
            offset: [0.0, 0.0, -0.30],
            scale: 4,
            length: [0.0, 0.0, -0.25],
            radius: 0.03,
            sites: 3,
        },
        Part {
            name: "radius",
            parent: "ulna",
            offset: [0.0, 0.0, 0.0],
            scale: 4,
            length: [0.0, 0.0, -0.25],
            radius: 0.035,
            sites: 3,
        },
        Part {
            name: "hand",
            parent: "radius",
            offset: [0.0, 0.0, -0.25],
            scale: 5,
            length: [0.0, 0.0, -0.04],
            radius: 0.03,
            sites: 3,
        },
        Part {
            name: "carpus",
            parent: "hand",
            offset: [0.0, 0.0, -0.04],
            scale: 5,
            length: [0.0, 0.0, -0.10],
            radius: 0.03,
            sites: 4,
        },
        Part {
            name: "femur",
            parent: "pelvis",
            offset: [0.0, -0.09, -0.05],
            scale: 6,
            length: [0.0, 0.0, -0.42],
            radius: 0.06,
            sites: 5,
        },
        Part {
            name: "tibia",
            parent: "femur",
            offset: [0.0, 0.0, -0.42],
            scale: 7,
            length: [0.0, 0.0, -0.40],
            radius: 0.05,
            sites: 4,
        },
        Part {
            name: "talus",
            parent: "tibia",
            offset: [0.0, 0.0, -0.40],
            scale: 7,
            length: [0.05, 0.0, -0.03],
            radius: 0.03,
            sites: 2,
        },
        Part {
            name: "calcn",
            parent: "talus",
            offset: [0.0, 0.0, -0.03],
            scale: 7,
            length: [0.15, 0.0, -0.03],
            radius: 0.03,
            sites: 3,
        },
        Part {
            name: "toes",
            parent: "calcn",
            offset: [0.15, 0.0, -0.03],
            scale: 7,
            length: [0.05, 0.0, 0.0],
            radius: 0.02,
            sites: 2,
        },
    ];
    for (side, sign) in [("r", 1.0), ("l", -1.0)] {
        let seg = |n: &str| -> String {
            if n == "torso" || n == "pelvis" {
                n.into()
            } else {
                format!("{n}_{side}")
            }
        };
        for (i, p) in parts.iter().enumerate() {
            let name = seg(p.name);
            let offset = if sign > 0.0 {
                p.offset
            } else {
                mirror(p.offset)
            };
            b.segment(&name, &seg(p.parent), offset, p.scale);
            // Abduction-type limits flip with the side.
            let flip = |l: [f64; 2]| if sign > 0.0 { l } else { [-l[1], -l[0]] };
            match p.name {
                "humerus" => {
                    b.ball(
                        &format!("shoulder_{side}"),
                        &name,
                        [flip([-1.5, 0.5]), [-1.0, 2.0], [-1.0, 1.0]],
                    );
                }
                "ulna" => {
                    b.hinge(
                        &format!("elbow_{side}"),
                        &name,
                        [0.0, 1.0, 0.0],
                        [-2.5, 0.0],
                    );
                }
                "radius" => {
                    b.hinge(
                        &format!("pronation_{side}"),
                        &name,
                        [0.0, 0.0, 1.0],
                        [-1.5, 1.5],
                    );
                }
                "hand" => {
                    b.hinge(
                        &format!("wrist_flex_{side}"),
                        &name,
                        [0.0, 1.0, 0.0],
                        [-1.2, 1.2],
                    );
                }
                "carpus" => {
                    b.hinge(
                        &format!("wrist_dev_{side}"),
                        &name,
                        [1.0, 0.0, 0.0],
                        [-0.4, 0.4],
                    );
                }
                "femur" => {
                    b.ball(
                        &format!("hip_{side}"),
                        &name,
                        [flip([-0.5, 0.5]), [-1.6, 0.5], [-0.6, 0.6]],
                    );
                }
                "tibia" => {
                    b.hinge(&format!("knee_{side}"), &name, [0.0, 1.0, 0.0], [0.0, 2.2]);
                }
                "talus" => {
                    b.hinge(
                        &format!("ankle_{side}"),
                        &name,
                        [0.0, 1.0, 0.0],
                        [-0.7, 0.5],
                    );
                }
                "calcn" => {
                    b.hinge(
                        &format!("subtalar_{side}"),
                        &name,
                        [1.0, 0.0, 0.0],
                        [-0.5, 0.5],
                    );
                }
                _ => {
                    b.hinge(&format!("mtp_{side}"), &name, [0.0, 1.0, 0.0], [-0.5, 0.9]);
                }
            }
            let length = if sign > 0.0 {
                p.length
            } else {
                mirror(p.length)
            };
            ring_sites(
                &mut b,
                &name,
                length,
                p.radius,
                p.sites,
                0.7 * i as f64 + if sign > 0.0 { 0.0 } else { 0.4 },
            );
        }
    }
    b.desc
}
