use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{canonical_cloud, Dataset};
use super::error::{HarnessError, HarnessResult};
use crate::geometry::{Point, PointCloud};

/// Procedural shape classes, in class-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyShape {
    Sphere,
    Cube,
    Cone,
    Plane,
    Cylinder,
    Torus,
    Pyramid,
    Tetrahedron,
}

pub const TOY_SHAPES: [ToyShape; 8] = [
    ToyShape::Sphere,
    ToyShape::Cube,
    ToyShape::Cone,
    ToyShape::Plane,
    ToyShape::Cylinder,
    ToyShape::Torus,
    ToyShape::Pyramid,
    ToyShape::Tetrahedron,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub classes: usize,
    pub points: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Largest per-point displacement before rotation.
    pub jitter: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            points: 256,
            train_per_class: 200,
            test_per_class: 50,
            jitter: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyBenchmark {
    pub train: Dataset,
    pub test: Dataset,
}

fn uniform_sphere(rng: &mut ChaCha8Rng) -> Point {
    loop {
        let v: Point = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn triangle(rng: &mut ChaCha8Rng, a: Point, b: Point, c: Point) -> Point {
    let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
    if u + v > 1.0 {
        (u, v) = (1.0 - u, 1.0 - v);
    }
    [0, 1, 2].map(|k| a[k] + u * (b[k] - a[k]) + v * (c[k] - a[k]))
}

fn tri_area(a: Point, b: Point, c: Point) -> f64 {
    let (u, v) = ([0, 1, 2].map(|k| b[k] - a[k]), [0, 1, 2].map(|k| c[k] - a[k]));
    let x = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

fn mesh_point(rng: &mut ChaCha8Rng, faces: &[[Point; 3]]) -> Point {
    let areas: Vec<f64> = faces.iter().map(|f| tri_area(f[0], f[1], f[2])).collect();
    let mut pick = rng.random::<f64>() * areas.iter().sum::<f64>();
    for (f, a) in faces.iter().zip(&areas) {
        if pick < *a {
            return triangle(rng, f[0], f[1], f[2]);
        }
        pick -= a;
    }
    let f = faces[faces.len() - 1];
    triangle(rng, f[0], f[1], f[2])
}

fn disk(rng: &mut ChaCha8Rng, radius: f64, z: f64) -> Point {
    let (r, t) = (radius * rng.random::<f64>().sqrt(), 2.0 * PI * rng.random::<f64>());
    [r * t.cos(), r * t.sin(), z]
}

impl ToyShape {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sphere => "sphere",
            Self::Cube => "cube",
            Self::Cone => "cone",
            Self::Plane => "plane",
            Self::Cylinder => "cylinder",
            Self::Torus => "torus",
            Self::Pyramid => "pyramid",
            Self::Tetrahedron => "tetrahedron",
        }
    }

    /// One point drawn area-uniformly from the surface, centered near the
    /// origin with extent about 1.
    pub fn sample_surface(self, rng: &mut ChaCha8Rng) -> Point {
        match self {
            Self::Sphere => uniform_sphere(rng).map(|v| 0.5 * v),
            Self::Cube => {
                let face = rng.random_range(0..6);
                let (u, v) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                let s = if face % 2 == 0 { 0.5 } else { -0.5 };
                match face / 2 {
                    0 => [s, u, v],
                    1 => [u, s, v],
                    _ => [u, v, s],
                }
            }
            Self::Cone => {
                // lateral area π·r·slant against base area π·r²
                let (r, h): (f64, f64) = (0.5, 1.0);
                let lateral = r * (r * r + h * h).sqrt();
                if rng.random::<f64>() * (lateral + r * r) < r * r {
                    disk(rng, r, -0.5)
                } else {
                    let t = rng.random::<f64>().sqrt();
                    let a = 2.0 * PI * rng.random::<f64>();
                    [r * t * a.cos(), r * t * a.sin(), 0.5 - h * t]
                }
            }
            Self::Plane => [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0],
            Self::Cylinder => {
                // lateral 2π·r·h against two caps 2π·r²
                let (r, h): (f64, f64) = (0.5, 1.0);
                if rng.random::<f64>() * (h + r) < r {
                    let z = if rng.random_bool(0.5) { 0.5 } else { -0.5 };
                    disk(rng, r, z)
                } else {
                    let a = 2.0 * PI * rng.random::<f64>();
                    [r * a.cos(), r * a.sin(), rng.random_range(-0.5..0.5)]
                }
            }
            Self::Torus => {
                let (big, small) = (0.35, 0.15);
                loop {
                    let (u, v) = (2.0 * PI * rng.random::<f64>(), 2.0 * PI * rng.random::<f64>());
                    // accept by the local area factor
                    if rng.random::<f64>() * (big + small) <= big + small * v.cos() {
                        let ring = big + small * v.cos();
                        return [ring * u.cos(), ring * u.sin(), small * v.sin()];
                    }
                }
            }
            Self::Pyramid => {
                let b = [[-0.5, -0.5, -0.5], [0.5, -0.5, -0.5], [0.5, 0.5, -0.5], [-0.5, 0.5, -0.5]];
                let apex = [0.0, 0.0, 0.5];
                let faces = [
                    [b[0], b[1], b[2]],
                    [b[0], b[2], b[3]],
                    [b[0], b[1], apex],
                    [b[1], b[2], apex],
                    [b[2], b[3], apex],
                    [b[3], b[0], apex],
                ];
                mesh_point(rng, &faces)
            }
            Self::Tetrahedron => {
                let s = 0.5 / 3f64.sqrt();
                let v = [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]].map(|p| p.map(|c| c * 1.5));
                let faces = [[v[0], v[1], v[2]], [v[0], v[1], v[3]], [v[0], v[2], v[3]], [v[1], v[2], v[3]]];
                mesh_point(rng, &faces)
            }
        }
    }

    /// `n` jittered surface points before rotation and normalization; every
    /// jitter vector has length below `jitter`.
    pub fn sample(self, n: usize, jitter: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
        (0..n)
            .map(|_| {
                let p = self.sample_surface(rng);
                let d = uniform_sphere(rng);
                let m = jitter * rng.random::<f64>();
                [0, 1, 2].map(|k| p[k] + m * d[k])
            })
            .collect()
    }
}

/// Uniformly random rotation from a normalized Gaussian quaternion.
pub fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let mut q: [f64; 4] = [0.0; 4];
    loop {
        q.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            q.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Normalizes until the cloud is a fixed point of the load-time
/// normalization, so saved toy data reloads bit-identically.
fn settle(cloud: PointCloud) -> HarnessResult<PointCloud> {
    let mut c = canonical_cloud(&cloud)?;
    for _ in 0..8 {
        let next = canonical_cloud(&c)?;
        if next == c {
            return Ok(c);
        }
        c = next;
    }
    Ok(c)
}

fn make_split(config: &ToyConfig, per_class: usize, rng: &mut ChaCha8Rng, split: &str) -> HarnessResult<Dataset> {
    let mut clouds = Vec::with_capacity(per_class * config.classes);
    // class-interleaved, so every prefix is close to balanced
    for _ in 0..per_class {
        for (label, shape) in TOY_SHAPES[..config.classes].iter().enumerate() {
            let pts = shape.sample(config.points, config.jitter, rng);
            let r = random_rotation(rng);
            let rotated = pts.iter().map(|p| [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2])).collect();
            clouds.push(settle(PointCloud::new(rotated)?.with_label(label))?);
        }
    }
    let names = TOY_SHAPES[..config.classes].iter().map(|s| s.name().to_string()).collect();
    Dataset::new(clouds, split, names)
}

/// Train and test splits of procedurally sampled shapes under random
/// rotations, drawn from independent streams of `seed`.
pub fn make_toy_dataset(config: &ToyConfig, seed: u64) -> HarnessResult<ToyBenchmark> {
    if !(2..=TOY_SHAPES.len()).contains(&config.classes) {
        return Err(HarnessError::Config(format!("toy benchmark supports 2 to 8 classes, got {}", config.classes)));
    }
    if config.points < 64 {
        return Err(HarnessError::Config(format!("toy clouds need at least 64 points, got {}", config.points)));
    }
    if !(config.jitter >= 0.0 && config.jitter.is_finite()) {
        return Err(HarnessError::Config(format!("invalid jitter {}", config.jitter)));
    }
    let mut train_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57_7e57_7e57_7e57);
    Ok(ToyBenchmark {
        train: make_split(config, config.train_per_class, &mut train_rng, "train")?,
        test: make_split(config, config.test_per_class, &mut test_rng, "test")?,
    })
}
