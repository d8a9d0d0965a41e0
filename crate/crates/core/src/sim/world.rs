use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{Error, Result};

// Rays closer to parallel with a face than this are treated as misses.
const PARALLEL_EPS: f64 = 1e-12;
// Hits closer than this to the ray origin are ignored.
const MIN_HIT: f64 = 1e-9;

/// Axis-aligned finite rectangle `x[axis] = offset`, bounded on the other
/// two axes (in increasing axis order) by `lo` and `hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub axis: usize,
    pub offset: f64,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    fn others(&self) -> [usize; 2] {
        match self.axis {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }

    pub fn normal(&self) -> Vector3<f64> {
        let mut n = Vector3::zeros();
        n[self.axis] = 1.0;
        n
    }

    pub fn contains(&self, p: &Vector3<f64>, tol: f64) -> bool {
        let [a, b] = self.others();
        (p[self.axis] - self.offset).abs() <= tol
            && p[a] >= self.lo[0] - tol
            && p[a] <= self.hi[0] + tol
            && p[b] >= self.lo[1] - tol
            && p[b] <= self.hi[1] + tol
    }

    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let d = dir[self.axis];
        if d.abs() < PARALLEL_EPS {
            return None;
        }
        let t = (self.offset - origin[self.axis]) / d;
        if t <= MIN_HIT {
            return None;
        }
        let p = origin + dir * t;
        let [a, b] = self.others();
        let inside = p[a] >= self.lo[0] && p[a] <= self.hi[0] && p[b] >= self.lo[1] && p[b] <= self.hi[1];
        inside.then_some(t)
    }
}

fn box_faces(min: &Vector3<f64>, max: &Vector3<f64>) -> Vec<Rect> {
    let mut faces = Vec::with_capacity(6);
    for axis in 0..3 {
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for offset in [min[axis], max[axis]] {
            faces.push(Rect {
                axis,
                offset,
                lo: [min[a], min[b]],
                hi: [max[a], max[b]],
            });
        }
    }
    faces
}

#[derive(Clone, Debug, PartialEq)]
pub enum Surface {
    Rect(Rect),
    /// Box seen from outside.
    SolidBox { min: Vector3<f64>, max: Vector3<f64> },
    /// Box seen from inside (a room's walls, floor and ceiling).
    RoomBox { min: Vector3<f64>, max: Vector3<f64> },
}

impl Surface {
    pub fn faces(&self) -> Vec<Rect> {
        match self {
            Surface::Rect(r) => vec![*r],
            Surface::SolidBox { min, max } | Surface::RoomBox { min, max } => box_faces(min, max),
        }
    }

    /// Nearest hit distance along a unit `dir` using slab tests.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Surface::Rect(r) => r.intersect(origin, dir),
            Surface::SolidBox { min, max } => {
                let (t_near, t_far) = slabs(origin, dir, min, max)?;
                if t_near > MIN_HIT {
                    Some(t_near)
                } else if t_far > MIN_HIT && t_near <= MIN_HIT && !strictly_inside(origin, min, max) {
                    // Origin on the surface, ray leaving through the box.
                    Some(t_far)
                } else {
                    None
                }
            }
            Surface::RoomBox { min, max } => {
                let (t_near, t_far) = slabs(origin, dir, min, max)?;
                if t_near > MIN_HIT {
                    Some(t_near)
                } else {
                    (t_far > MIN_HIT).then_some(t_far)
                }
            }
        }
    }
}

fn strictly_inside(p: &Vector3<f64>, min: &Vector3<f64>, max: &Vector3<f64>) -> bool {
    (0..3).all(|i| p[i] > min[i] && p[i] < max[i])
}

fn slabs(origin: &Vector3<f64>, dir: &Vector3<f64>, min: &Vector3<f64>, max: &Vector3<f64>) -> Option<(f64, f64)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for i in 0..3 {
        if dir[i].abs() < PARALLEL_EPS {
            if origin[i] < min[i] || origin[i] > max[i] {
                return None;
            }
            continue;
        }
        let a = (min[i] - origin[i]) / dir[i];
        let b = (max[i] - origin[i]) / dir[i];
        t_near = t_near.max(a.min(b));
        t_far = t_far.min(a.max(b));
    }
    (t_near <= t_far).then_some((t_near, t_far))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WorldKind {
    BoxRoom,
    Corridor,
    OpenPlane,
    SparseEdges,
}

impl WorldKind {
    pub const ALL: [WorldKind; 4] = [
        WorldKind::BoxRoom,
        WorldKind::Corridor,
        WorldKind::OpenPlane,
        WorldKind::SparseEdges,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WorldKind::BoxRoom => "box_room",
            WorldKind::Corridor => "corridor",
            WorldKind::OpenPlane => "open_plane",
            WorldKind::SparseEdges => "sparse_edges",
        }
    }
}

impl fmt::Display for WorldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| Error::UnknownName {
                kind: "world",
                name: s.to_string(),
                valid: Self::ALL.map(|w| w.name()).join(", "),
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldSpec {
    pub kind: WorldKind,
    pub surfaces: Vec<Surface>,
    /// Height of the sensor above the floor at the start of every profile.
    pub sensor_height: f64,
}

fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z)
}

fn ground(half: f64) -> Surface {
    Surface::Rect(Rect {
        axis: 2,
        offset: 0.0,
        lo: [-half, -half],
        hi: [half, half],
    })
}

impl WorldSpec {
    pub fn new(kind: WorldKind) -> Self {
        let (surfaces, sensor_height) = match kind {
            // Rectangular room with a pillar and a cabinet to break symmetry.
            WorldKind::BoxRoom => (
                vec![
                    Surface::RoomBox { min: v(-6.0, -3.0, 0.0), max: v(6.0, 3.0, 3.0) },
                    Surface::SolidBox { min: v(2.5, 1.0, 0.0), max: v(3.1, 1.6, 3.0) },
                    Surface::SolidBox { min: v(-4.5, -3.0, 0.0), max: v(-3.0, -2.2, 1.8) },
                ],
                1.2,
            ),
            // End walls lie beyond the sensor range.
            WorldKind::Corridor => (
                vec![Surface::RoomBox { min: v(-300.0, -1.5, 0.0), max: v(300.0, 1.5, 3.0) }],
                1.2,
            ),
            WorldKind::OpenPlane => (vec![ground(500.0)], 1.5),
            WorldKind::SparseEdges => (
                vec![
                    ground(500.0),
                    Surface::SolidBox { min: v(25.0, 18.0, 0.0), max: v(27.0, 20.0, 4.0) },
                    Surface::SolidBox { min: v(-30.0, -22.0, 0.0), max: v(-28.0, -21.0, 3.0) },
                    Surface::SolidBox { min: v(40.0, -35.0, 0.0), max: v(41.0, -30.0, 5.0) },
                ],
                1.5,
            ),
        };
        Self { kind, surfaces, sensor_height }
    }

    /// Nearest hit distance over all surfaces.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        self.surfaces
            .iter()
            .filter_map(|s| s.intersect(origin, dir))
            .min_by(f64::total_cmp)
    }

    /// Every face rectangle of every surface.
    pub fn faces(&self) -> Vec<Rect> {
        self.surfaces.iter().flat_map(Surface::faces).collect()
    }

    /// Distance from `p` to the nearest face, for points near some face.
    pub fn distance_to_surface(&self, p: &Vector3<f64>) -> f64 {
        self.faces()
            .iter()
            .map(|f| {
                let [a, b] = f.others();
                let da = (f.lo[0] - p[a]).max(p[a] - f.hi[0]).max(0.0);
                let db = (f.lo[1] - p[b]).max(p[b] - f.hi[1]).max(0.0);
                let dn = p[f.axis] - f.offset;
                (da * da + db * db + dn * dn).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }
}
