//! Race scene: static collision geometry, gates with corner IR beacons,
//! ray casting, sphere collision, gate-crossing detection and seeded
//! course perturbation.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DomainError};
use crate::geometry::{Aabb, OrientedBox, Triangle};
use crate::rng::{Rng, Stream};

type V3 = Vector3<f64>;

pub const COURSE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrBeacon {
    pub id: u32,
    pub position: V3,
}

/// Rectangular racing gate. The aperture is `width × height`, centred on
/// `center`, lying in the plane with normal `normal` (the direction of
/// travel). The frame is four square bars of side `frame_thickness`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GateSpec", into = "GateSpec")]
pub struct Gate {
    pub id: u32,
    pub center: V3,
    pub normal: V3,
    pub up: V3,
    pub width: f64,
    pub height: f64,
    pub frame_thickness: f64,
    /// Corner beacons: top-left, top-right, bottom-right, bottom-left as
    /// seen when approaching along `normal`, mounted on the approach face.
    pub beacons: [IrBeacon; 4],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateSpec {
    id: u32,
    center: V3,
    normal: V3,
    up: V3,
    width: f64,
    height: f64,
    #[serde(default = "default_frame_thickness")]
    frame_thickness: f64,
    beacon_ids: [u32; 4],
}

fn default_frame_thickness() -> f64 {
    0.15
}

impl TryFrom<GateSpec> for Gate {
    type Error = String;
    fn try_from(s: GateSpec) -> Result<Self, String> {
        Gate::new(s.id, s.center, s.normal, s.up, s.width, s.height, s.frame_thickness, s.beacon_ids)
    }
}

impl From<Gate> for GateSpec {
    fn from(g: Gate) -> Self {
        GateSpec {
            id: g.id,
            center: g.center,
            normal: g.normal,
            up: g.up,
            width: g.width,
            height: g.height,
            frame_thickness: g.frame_thickness,
            beacon_ids: g.beacons.map(|b| b.id),
        }
    }
}

impl Gate {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        center: V3,
        normal: V3,
        up: V3,
        width: f64,
        height: f64,
        frame_thickness: f64,
        beacon_ids: [u32; 4],
    ) -> Result<Self, String> {
        let finite = center.iter().chain(normal.iter()).chain(up.iter()).all(|x| x.is_finite());
        if !finite {
            return Err(format!("gate {id}: non-finite geometry"));
        }
        if (normal.norm() - 1.0).abs() > 1e-9 || (up.norm() - 1.0).abs() > 1e-9 {
            return Err(format!("gate {id}: normal and up must be unit vectors"));
        }
        if normal.dot(&up).abs() > 1e-9 {
            return Err(format!("gate {id}: normal and up must be perpendicular"));
        }
        if !(width > 0.0 && height > 0.0 && frame_thickness >= 0.0) {
            return Err(format!("gate {id}: aperture must be positive"));
        }
        let mut g = Gate {
            id,
            center,
            normal,
            up,
            width,
            height,
            frame_thickness,
            beacons: beacon_ids.map(|id| IrBeacon { id, position: center }),
        };
        let face = g.normal * (0.5 * frame_thickness);
        let corners = g.corners();
        for (b, c) in g.beacons.iter_mut().zip(corners) {
            b.position = c - face;
        }
        Ok(g)
    }

    /// Unit vector to the traveller's left, `up × normal`.
    pub fn left(&self) -> V3 {
        self.up.cross(&self.normal)
    }

    /// Aperture corners: top-left, top-right, bottom-right, bottom-left.
    pub fn corners(&self) -> [V3; 4] {
        let l = self.left() * (0.5 * self.width);
        let u = self.up * (0.5 * self.height);
        [self.center + l + u, self.center - l + u, self.center - l - u, self.center + l - u]
    }

    /// Columns: left, up, normal.
    pub fn frame_axes(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.left(), self.up, self.normal])
    }

    /// Position expressed in gate axes (left, up, normal) relative to the centre.
    pub fn to_local(&self, p: &V3) -> V3 {
        self.frame_axes().transpose() * (p - self.center)
    }

    /// The four frame bars as oriented boxes.
    pub fn frame_boxes(&self) -> Vec<OrientedBox> {
        let t = self.frame_thickness;
        if t <= 0.0 {
            return Vec::new();
        }
        let axes = self.frame_axes();
        let (hw, hh, ht) = (0.5 * self.width, 0.5 * self.height, 0.5 * t);
        let bar = |offset: V3, half: V3| OrientedBox { center: self.center + axes * offset, axes, half_extents: half };
        vec![
            bar(V3::new(0.0, hh + ht, 0.0), V3::new(hw + t, ht, ht)),
            bar(V3::new(0.0, -hh - ht, 0.0), V3::new(hw + t, ht, ht)),
            bar(V3::new(hw + ht, 0.0, 0.0), V3::new(ht, hh, ht)),
            bar(V3::new(-hw - ht, 0.0, 0.0), V3::new(ht, hh, ht)),
        ]
    }

    /// Rigid motion: translate by `offset` and yaw about world z through the centre.
    pub fn displaced(&self, offset: &V3, yaw: f64) -> Gate {
        let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
        let center = self.center + offset;
        let mut g = Gate {
            center,
            normal: rot * self.normal,
            up: rot * self.up,
            ..self.clone()
        };
        for (nb, ob) in g.beacons.iter_mut().zip(&self.beacons) {
            nb.position = center + rot * (ob.position - self.center);
        }
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub position: V3,
    #[serde(default)]
    pub yaw: f64,
}

/// A complete course: geometry, gates in race order, and the start pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CourseFile", into = "CourseFile")]
pub struct Scene {
    pub name: String,
    pub start: StartPose,
    pub triangles: Vec<Triangle>,
    pub boxes: Vec<Aabb>,
    pub gates: Vec<Gate>,
    pub static_beacons: Vec<IrBeacon>,
    frames: Vec<(usize, OrientedBox)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CourseFile {
    format_version: u32,
    #[serde(default)]
    name: String,
    start: StartPose,
    #[serde(default)]
    gates: Vec<Gate>,
    #[serde(default)]
    static_beacons: Vec<IrBeacon>,
    #[serde(default)]
    triangles: Vec<Triangle>,
    #[serde(default)]
    boxes: Vec<Aabb>,
}

impl TryFrom<CourseFile> for Scene {
    type Error = String;
    fn try_from(f: CourseFile) -> Result<Self, String> {
        if f.format_version != COURSE_FORMAT_VERSION {
            return Err(format!(
                "unsupported course format_version {} (expected {COURSE_FORMAT_VERSION})",
                f.format_version
            ));
        }
        let scene = Scene::new(f.name, f.start, f.triangles, f.boxes, f.gates, f.static_beacons);
        scene.validate()?;
        Ok(scene)
    }
}

impl From<Scene> for CourseFile {
    fn from(s: Scene) -> Self {
        CourseFile {
            format_version: COURSE_FORMAT_VERSION,
            name: s.name,
            start: s.start,
            gates: s.gates,
            static_beacons: s.static_beacons,
            triangles: s.triangles,
            boxes: s.boxes,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Triangle,
    Box,
    GateFrame,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayHit {
    pub distance: f64,
    pub point: V3,
    pub object_kind: ObjectKind,
    /// Index into the matching list; for gate frames, the gate index.
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub object_kind: ObjectKind,
    pub index: usize,
    pub point: V3,
    pub distance: f64,
}

impl Scene {
    pub fn new(
        name: String,
        start: StartPose,
        triangles: Vec<Triangle>,
        boxes: Vec<Aabb>,
        gates: Vec<Gate>,
        static_beacons: Vec<IrBeacon>,
    ) -> Self {
        let mut s = Scene { name, start, triangles, boxes, gates, static_beacons, frames: Vec::new() };
        s.rebuild_frames();
        s
    }

    pub fn empty() -> Self {
        Self::new(
            String::new(),
            StartPose { position: V3::zeros(), yaw: 0.0 },
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
        )
    }

    /// Recomputes cached gate-frame colliders after editing `gates`.
    pub fn rebuild_frames(&mut self) {
        self.frames =
            self.gates.iter().enumerate().flat_map(|(i, g)| g.frame_boxes().into_iter().map(move |b| (i, b))).collect();
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            line: e.inner().line(),
            column: e.inner().column(),
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut gate_ids = HashSet::new();
        for g in &self.gates {
            if !gate_ids.insert(g.id) {
                return Err(format!("duplicate gate id {}", g.id));
            }
        }
        let mut beacon_ids = HashSet::new();
        for b in self.all_beacons() {
            if !beacon_ids.insert(b.id) {
                return Err(format!("duplicate beacon id {}", b.id));
            }
            if !b.position.iter().all(|x| x.is_finite()) {
                return Err(format!("beacon {} has a non-finite position", b.id));
            }
        }
        if let Some(i) = self.triangles.iter().position(|t| !t.is_finite()) {
            return Err(format!("triangle {i} has non-finite vertices"));
        }
        if let Some(i) = self.boxes.iter().position(|b| !b.is_valid()) {
            return Err(format!("box {i} is invalid (min must not exceed max)"));
        }
        Ok(())
    }

    /// Gate-mounted beacons followed by static ones.
    pub fn all_beacons(&self) -> impl Iterator<Item = &IrBeacon> {
        self.gates.iter().flat_map(|g| g.beacons.iter()).chain(self.static_beacons.iter())
    }

    pub fn gate_frames(&self) -> &[(usize, OrientedBox)] {
        &self.frames
    }

    pub fn element_count(&self) -> usize {
        self.triangles.len() + self.boxes.len() + self.frames.len()
    }

    /// Nearest intersection along a half-line within `max_range`.
    pub fn ray_cast(&self, origin: &V3, direction: &V3, max_range: f64) -> Result<Option<RayHit>, DomainError> {
        let n = direction.norm();
        if n == 0.0 {
            return Err(DomainError::ZeroDirection);
        }
        if (n - 1.0).abs() > 1e-9 {
            return Err(DomainError::NonUnitDirection(n));
        }
        let mut best: Option<RayHit> = None;
        let mut consider = |t: Option<f64>, kind: ObjectKind, index: usize| {
            if let Some(t) = t {
                if t <= max_range && best.is_none_or(|b| t < b.distance) {
                    best = Some(RayHit { distance: t, point: origin + direction * t, object_kind: kind, index });
                }
            }
        };
        for (i, t) in self.triangles.iter().enumerate() {
            consider(t.ray_intersect(origin, direction), ObjectKind::Triangle, i);
        }
        for (i, b) in self.boxes.iter().enumerate() {
            consider(b.ray_intersect(origin, direction), ObjectKind::Box, i);
        }
        for (gi, b) in &self.frames {
            consider(b.ray_intersect(origin, direction), ObjectKind::GateFrame, *gi);
        }
        Ok(best)
    }

    /// First element (triangles, then boxes, then gate frames) within
    /// `radius` of `position`.
    pub fn check_collision(&self, position: &V3, radius: f64) -> Option<Contact> {
        let within = |cp: V3, kind, index| {
            let d = (cp - position).norm();
            (d <= radius).then_some(Contact { object_kind: kind, index, point: cp, distance: d })
        };
        self.triangles
            .iter()
            .enumerate()
            .find_map(|(i, t)| within(t.closest_point(position), ObjectKind::Triangle, i))
            .or_else(|| {
                self.boxes.iter().enumerate().find_map(|(i, b)| within(b.closest_point(position), ObjectKind::Box, i))
            })
            .or_else(|| {
                self.frames.iter().find_map(|(gi, b)| within(b.closest_point(position), ObjectKind::GateFrame, *gi))
            })
    }
}

/// Free-function form of [`Scene::ray_cast`].
pub fn ray_cast(origin: &V3, direction: &V3, scene: &Scene, max_range: f64) -> Result<Option<RayHit>, DomainError> {
    scene.ray_cast(origin, direction, max_range)
}

/// Free-function form of [`Scene::check_collision`].
pub fn check_collision(position: &V3, radius: f64, scene: &Scene) -> Option<Contact> {
    scene.check_collision(position, radius)
}

/// True iff the segment crosses the gate plane travelling along +normal
/// and pierces the plane inside the aperture rectangle.
pub fn gate_pass_check(prev_position: &V3, position: &V3, gate: &Gate) -> bool {
    let s0 = (prev_position - gate.center).dot(&gate.normal);
    let s1 = (position - gate.center).dot(&gate.normal);
    if !(s0 < 0.0 && s1 >= 0.0) {
        return false;
    }
    let t = s0 / (s0 - s1);
    let hit = prev_position + (position - prev_position) * t;
    let rel = hit - gate.center;
    rel.dot(&gate.left()).abs() <= 0.5 * gate.width && rel.dot(&gate.up).abs() <= 0.5 * gate.height
}

/// Moves every gate by an independent uniform offset in `[−2σ, 2σ]³` and yaw
/// in `[−2σ_yaw, 2σ_yaw]`, keyed by `(seed, gate id)`. Gate order, IDs,
/// apertures and static geometry are unchanged.
pub fn perturb_course(scene: &Scene, seed: u64, translation_sigma: f64, yaw_sigma: f64) -> Scene {
    let (ts, ys) = (2.0 * translation_sigma.max(0.0), 2.0 * yaw_sigma.max(0.0));
    let gates = scene
        .gates
        .iter()
        .map(|g| {
            let mut rng = Rng::substream(seed, Stream::Perturbation, u64::from(g.id));
            let offset = V3::new(rng.uniform(-ts, ts), rng.uniform(-ts, ts), rng.uniform(-ts, ts));
            let yaw = rng.uniform(-ys, ys);
            if ts == 0.0 && ys == 0.0 {
                g.clone()
            } else {
                g.displaced(&offset, yaw)
            }
        })
        .collect();
    let mut out = scene.clone();
    out.gates = gates;
    out.rebuild_frames();
    out
}

/// Straight-line length from the start through every gate centre in order.
pub fn course_length(scene: &Scene) -> f64 {
    let mut prev = scene.start.position;
    let mut total = 0.0;
    for g in &scene.gates {
        total += (g.center - prev).norm();
        prev = g.center;
    }
    total
}
