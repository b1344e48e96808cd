//! Seeded procedural base clouds built from simple surfaces.

use nalgebra::{Point3, Rotation3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::geometry::PointCloud;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// A 4 m × 4 m floor with two walls and a random set of boxes, spheres
    /// and cylinders.
    #[default]
    Room,
    /// Objects only, on a 3 m × 3 m floor patch.
    Tabletop,
}

impl SceneKind {
    pub fn name(self) -> &'static str {
        match self {
            SceneKind::Room => "room",
            SceneKind::Tabletop => "tabletop",
        }
    }
}

impl std::str::FromStr for SceneKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "room" => Ok(SceneKind::Room),
            "tabletop" => Ok(SceneKind::Tabletop),
            other => Err(crate::Error::Config(format!("unknown scene generator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Surface {
    /// `origin + a·u + b·v` for `a, b ∈ [0, 1]`.
    Rect {
        origin: Point3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
    },
    Sphere { center: Point3<f64>, radius: f64 },
    /// Lateral surface of an upright cylinder standing on `base`.
    Tube {
        base: Point3<f64>,
        radius: f64,
        height: f64,
    },
    /// Horizontal disk.
    Disk { center: Point3<f64>, radius: f64 },
}

impl Surface {
    fn area(&self) -> f64 {
        use std::f64::consts::PI;
        match self {
            Surface::Rect { u, v, .. } => u.cross(v).norm(),
            Surface::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            Surface::Tube { radius, height, .. } => 2.0 * PI * radius * height,
            Surface::Disk { radius, .. } => PI * radius * radius,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3<f64> {
        use std::f64::consts::TAU;
        match self {
            Surface::Rect { origin, u, v } => origin + u * rng.random::<f64>() + v * rng.random::<f64>(),
            Surface::Sphere { center, radius } => {
                let d: [f64; 3] = UnitSphere.sample(rng);
                center + Vector3::from(d) * *radius
            }
            Surface::Tube { base, radius, height } => {
                let a = rng.random_range(0.0..TAU);
                base + Vector3::new(radius * a.cos(), radius * a.sin(), height * rng.random::<f64>())
            }
            Surface::Disk { center, radius } => {
                let a = rng.random_range(0.0..TAU);
                let r = radius * rng.random::<f64>().sqrt();
                center + Vector3::new(r * a.cos(), r * a.sin(), 0.0)
            }
        }
    }
}

fn push_box(surfaces: &mut Vec<Surface>, center: Point3<f64>, size: Vector3<f64>, yaw: f64) {
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
    let ex = rot * Vector3::new(size.x, 0.0, 0.0);
    let ey = rot * Vector3::new(0.0, size.y, 0.0);
    let ez = Vector3::new(0.0, 0.0, size.z);
    let o = center - ex / 2.0 - ey / 2.0;
    surfaces.push(Surface::Rect { origin: o + ez, u: ex, v: ey });
    surfaces.push(Surface::Rect { origin: o, u: ex, v: ez });
    surfaces.push(Surface::Rect { origin: o + ey, u: ex, v: ez });
    surfaces.push(Surface::Rect { origin: o, u: ey, v: ez });
    surfaces.push(Surface::Rect { origin: o + ex, u: ey, v: ez });
}

fn layout(kind: SceneKind, rng: &mut ChaCha8Rng) -> Vec<Surface> {
    let (side, objects) = match kind {
        SceneKind::Room => (4.0, 14),
        SceneKind::Tabletop => (3.0, 10),
    };
    let mut s = vec![Surface::Rect {
        origin: Point3::origin(),
        u: Vector3::new(side, 0.0, 0.0),
        v: Vector3::new(0.0, side, 0.0),
    }];
    if kind == SceneKind::Room {
        s.push(Surface::Rect {
            origin: Point3::origin(),
            u: Vector3::new(side, 0.0, 0.0),
            v: Vector3::new(0.0, 0.0, 2.2),
        });
        s.push(Surface::Rect {
            origin: Point3::origin(),
            u: Vector3::new(0.0, side * 0.7, 0.0),
            v: Vector3::new(0.0, 0.0, 2.2),
        });
    }
    let margin = 0.3;
    for i in 0..objects {
        let x = rng.random_range(margin..side - margin);
        let y = rng.random_range(margin..side - margin);
        match i % 3 {
            0 => {
                let size = Vector3::new(
                    rng.random_range(0.2..0.8),
                    rng.random_range(0.2..0.8),
                    rng.random_range(0.15..1.0),
                );
                let yaw = rng.random_range(0.0..std::f64::consts::PI);
                push_box(&mut s, Point3::new(x, y, 0.0), size, yaw);
            }
            1 => {
                let radius = rng.random_range(0.12..0.35);
                s.push(Surface::Sphere {
                    center: Point3::new(x, y, radius),
                    radius,
                });
            }
            _ => {
                let radius = rng.random_range(0.08..0.25);
                let height = rng.random_range(0.3..1.2);
                let base = Point3::new(x, y, 0.0);
                s.push(Surface::Tube { base, radius, height });
                s.push(Surface::Disk {
                    center: base + Vector3::new(0.0, 0.0, height),
                    radius,
                });
            }
        }
    }
    s
}

/// Samples `points` points uniformly by area over a seeded scene layout.
pub fn procedural_cloud(kind: SceneKind, points: usize, rng: &mut ChaCha8Rng) -> Result<PointCloud> {
    let surfaces = layout(kind, rng);
    let mut cumulative = Vec::with_capacity(surfaces.len());
    let mut total = 0.0;
    for s in &surfaces {
        total += s.area();
        cumulative.push(total);
    }
    let pts = (0..points)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let i = cumulative.partition_point(|&c| c <= u).min(surfaces.len() - 1);
            surfaces[i].sample(rng)
        })
        .collect();
    PointCloud::new(pts)
}
