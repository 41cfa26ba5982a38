/*
  Copyright 2026 The trifinger-cpc Authors

  Licensed under the Apache License, Version 2.0 (the "License");
  you may not use this file except in compliance with the License.
  You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

  Unless required by applicable law or agreed to in writing, software
  distributed under the License is distributed on an "AS IS" BASIS,
  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
  See the License for the specific language governing permissions and
  limitations under the License.
*/
//! Fingertip contact planning on an upright cube.
//!
//! Contacts are planned in the cube frame (origin at the cube center, z up,
//! rotated by the cube's yaw) and always lie on the four vertical faces at
//! mid-height.

use serde::{Deserialize, Serialize};

use crate::kinematics::{self, JointVector, KinematicChain, Vec3, NUM_FINGERS};

/// Horizontal bearings (cube frame, degrees) of the triangle-grasp rays.
pub const TRIANGLE_BEARINGS_DEG: [f64; 3] = [90.0, 210.0, 330.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspKind {
    Triangle,
    #[serde(rename = "chuck")]
    ThreeJawChuck,
}

impl GraspKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GraspKind::Triangle => "triangle",
            GraspKind::ThreeJawChuck => "chuck",
        }
    }
}

impl std::str::FromStr for GraspKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "triangle" => Ok(GraspKind::Triangle),
            "chuck" => Ok(GraspKind::ThreeJawChuck),
            other => Err(format!("unknown grasp kind `{other}` (expected triangle|chuck)")),
        }
    }
}

/// Which horizontal cube axis the chuck grasp squeezes along. The thumb sits on
/// the positive face of that axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThumbAxis {
    X,
    Y,
}

/// Upright cube: center position, yaw about z, and half edge length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeGeom {
    pub position: Vec3,
    pub yaw: f64,
    pub half_extent: f64,
}

impl CubeGeom {
    pub fn new(position: Vec3, yaw: f64, half_extent: f64) -> Self {
        Self {
            position,
            yaw,
            half_extent,
        }
    }

    /// Rotates a cube-frame vector into the world frame.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
    }

    /// Rotates a world-frame vector into the cube frame.
    pub fn unrotate(&self, v: &Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z)
    }

    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        self.position + self.rotate(p)
    }

    /// True when the world point is inside the cube or on its surface.
    pub fn contains(&self, world: &Vec3) -> bool {
        let local = self.unrotate(&(world - self.position));
        local.amax() <= self.half_extent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    /// Cube-frame contact point, m.
    pub point: Vec3,
    /// Cube-frame unit normal pointing into the cube.
    pub inward_normal: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspSpec {
    pub kind: GraspKind,
    pub contacts: [Contact; 3],
    /// `finger_assignment[finger]` is the contact index that finger takes.
    pub finger_assignment: [usize; NUM_FINGERS],
}

impl GraspSpec {
    /// Cube-frame contact assigned to `finger`.
    pub fn contact_for(&self, finger: usize) -> &Contact {
        &self.contacts[self.finger_assignment[finger]]
    }

    /// World contact point per finger.
    pub fn world_contacts(&self, cube: &CubeGeom) -> [Vec3; NUM_FINGERS] {
        std::array::from_fn(|f| cube.to_world(&self.contact_for(f).point))
    }

    pub fn has_valid_assignment(&self) -> bool {
        let mut seen = [false; 3];
        for &c in &self.finger_assignment {
            if c >= 3 || seen[c] {
                return false;
            }
            seen[c] = true;
        }
        true
    }
}

/// Whether a cube-frame contact sits on a vertical face with an inward normal.
pub fn contact_on_vertical_face(contact: &Contact, half_extent: f64) -> bool {
    const TOL: f64 = 1e-9;
    let p = contact.point;
    let on_x = (p.x.abs() - half_extent).abs() <= TOL;
    let on_y = (p.y.abs() - half_extent).abs() <= TOL;
    if on_x == on_y || p.z.abs() > half_extent + TOL {
        return false;
    }
    if on_x && p.y.abs() > half_extent + TOL || on_y && p.x.abs() > half_extent + TOL {
        return false;
    }
    let outward = if on_x {
        Vec3::new(p.x.signum(), 0.0, 0.0)
    } else {
        Vec3::new(0.0, p.y.signum(), 0.0)
    };
    contact.inward_normal.dot(&outward) < 0.0 && (contact.inward_normal.norm() - 1.0).abs() < 1e-12
}

/// Intersection of a horizontal ray from the cube center with the side faces.
fn ray_to_side_face(bearing: f64, half_extent: f64) -> Contact {
    let (dy, dx) = bearing.sin_cos();
    if dx.abs() >= dy.abs() {
        let sign = dx.signum();
        Contact {
            point: Vec3::new(sign * half_extent, half_extent * dy / dx.abs(), 0.0),
            inward_normal: Vec3::new(-sign, 0.0, 0.0),
        }
    } else {
        let sign = dy.signum();
        Contact {
            point: Vec3::new(half_extent * dx / dy.abs(), sign * half_extent, 0.0),
            inward_normal: Vec3::new(0.0, -sign, 0.0),
        }
    }
}

/// Three contacts whose horizontal bearings about the cube center are 120
/// degrees apart: one at the center of the +y face and two on the x faces.
pub fn plan_triangle_grasp(cube: &CubeGeom) -> GraspSpec {
    GraspSpec {
        kind: GraspKind::Triangle,
        contacts: TRIANGLE_BEARINGS_DEG.map(|b| ray_to_side_face(b.to_radians(), cube.half_extent)),
        finger_assignment: [0, 1, 2],
    }
}

/// Thumb at the center of the `+axis` face, two fingers on the opposite face
/// spread by half the half-extent either side of center. Contact 0 is the thumb.
pub fn plan_chuck_grasp(cube: &CubeGeom, thumb_axis: ThumbAxis) -> GraspSpec {
    let h = cube.half_extent;
    let d = 0.5 * h;
    // Built for the y axis, then x/y swapped for the x axis.
    let along_y = [
        (Vec3::new(0.0, h, 0.0), Vec3::new(0.0, -1.0, 0.0)),
        (Vec3::new(d, -h, 0.0), Vec3::new(0.0, 1.0, 0.0)),
        (Vec3::new(-d, -h, 0.0), Vec3::new(0.0, 1.0, 0.0)),
    ];
    let swap = |v: Vec3| Vec3::new(v.y, v.x, v.z);
    let contacts = along_y.map(|(p, n)| match thumb_axis {
        ThumbAxis::Y => Contact {
            point: p,
            inward_normal: n,
        },
        ThumbAxis::X => Contact {
            point: swap(p),
            inward_normal: swap(n),
        },
    });
    GraspSpec {
        kind: GraspKind::ThreeJawChuck,
        contacts,
        finger_assignment: [0, 1, 2],
    }
}

/// The chuck axis whose thumb contact lands closest to any finger base.
pub fn default_thumb_axis(cube: &CubeGeom, chain: &KinematicChain) -> ThumbAxis {
    let score = |axis: ThumbAxis| {
        let thumb = cube.to_world(&plan_chuck_grasp(cube, axis).contacts[0].point);
        chain
            .fingers
            .iter()
            .map(|f| (f.base_position - thumb).norm())
            .fold(f64::INFINITY, f64::min)
    };
    if score(ThumbAxis::Y) <= score(ThumbAxis::X) {
        ThumbAxis::Y
    } else {
        ThumbAxis::X
    }
}

/// Plans a grasp of the given kind (chuck uses [`default_thumb_axis`]).
pub fn plan_grasp(kind: GraspKind, cube: &CubeGeom, chain: &KinematicChain) -> GraspSpec {
    match kind {
        GraspKind::Triangle => plan_triangle_grasp(cube),
        GraspKind::ThreeJawChuck => plan_chuck_grasp(cube, default_thumb_axis(cube, chain)),
    }
}

/// All permutations of three items, lexicographic order.
pub const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Picks the finger-to-contact permutation with the least total fingertip
/// travel. Ties go to the lexicographically smallest permutation.
pub fn assign_fingers(
    spec: &GraspSpec,
    cube: &CubeGeom,
    chain: &KinematicChain,
    q: &JointVector,
) -> crate::Result<GraspSpec> {
    let tips = kinematics::fingertips(chain, q)?;
    let world: [Vec3; 3] = spec.contacts.map(|c| cube.to_world(&c.point));
    let mut best = (f64::INFINITY, PERMUTATIONS[0]);
    for perm in PERMUTATIONS {
        let cost: f64 = (0..NUM_FINGERS).map(|f| (tips[f] - world[perm[f]]).norm()).sum();
        if cost < best.0 {
            best = (cost, perm);
        }
    }
    Ok(GraspSpec {
        finger_assignment: best.1,
        ..*spec
    })
}

/// Staging positions per finger: each assigned contact pushed outward along
/// its face normal by `standoff`.
pub fn pregrasp_targets(spec: &GraspSpec, cube: &CubeGeom, standoff: f64) -> [Vec3; NUM_FINGERS] {
    std::array::from_fn(|f| {
        let c = spec.contact_for(f);
        cube.to_world(&(c.point - c.inward_normal * standoff))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feasibility {
    pub feasible: bool,
    /// Fingers whose assigned contact is out of reach.
    pub unreachable: Vec<usize>,
}

/// A grasp is feasible when every finger can reach its assigned world contact.
pub fn grasp_feasible(spec: &GraspSpec, cube: &CubeGeom, chain: &KinematicChain) -> Feasibility {
    let world = spec.world_contacts(cube);
    let unreachable: Vec<usize> = (0..NUM_FINGERS)
        .filter(|&f| !kinematics::reachable(chain, f, &world[f]))
        .collect();
    Feasibility {
        feasible: unreachable.is_empty(),
        unreachable,
    }
}
