//! Analytic test scenes: closed-form ray intersections, Lambertian ground
//! truth renders, noisy prior point clouds, and posed train/test datasets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VoxError};
use crate::image::{DepthMap, Image};
use crate::math::{vec3, Aabb, Mat3, Vec3};
use crate::raycast::{generate_ray, Camera, Ray};
use crate::rng::{standard_normal, substream, Stream};
use crate::svo::{PointCloud, PriorPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Box {
        min: Vec3,
        max: Vec3,
        albedo: [f64; 3],
    },
    Sphere {
        center: Vec3,
        radius: f64,
        albedo: [f64; 3],
    },
    /// Axis-aligned zero-thickness rectangle. `axis` is the normal axis;
    /// `min2`/`max2` bound the two remaining axes in increasing order.
    Rect {
        axis: usize,
        offset: f64,
        min2: [f64; 2],
        max2: [f64; 2],
        albedo: [f64; 3],
    },
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Primitive::Box { min, max, .. } => {
                min.x < max.x && min.y < max.y && min.z < max.z
            }
            Primitive::Sphere { radius, .. } => *radius > 0.0,
            Primitive::Rect {
                axis, min2, max2, ..
            } => *axis < 3 && min2[0] < max2[0] && min2[1] < max2[1],
        };
        if ok {
            Ok(())
        } else {
            Err(VoxError::Geometry("invalid primitive geometry".into()))
        }
    }

    fn albedo(&self) -> [f64; 3] {
        match self {
            Primitive::Box { albedo, .. }
            | Primitive::Sphere { albedo, .. }
            | Primitive::Rect { albedo, .. } => *albedo,
        }
    }

    fn surface_area(&self) -> f64 {
        match self {
            Primitive::Box { min, max, .. } => {
                let e = *max - *min;
                2.0 * (e.x * e.y + e.y * e.z + e.x * e.z)
            }
            Primitive::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
            Primitive::Rect { min2, max2, .. } => {
                (max2[0] - min2[0]) * (max2[1] - min2[1])
            }
        }
    }

    fn bounds(&self) -> Aabb {
        match self {
            Primitive::Box { min, max, .. } => Aabb::new(*min, *max),
            Primitive::Sphere { center, radius, .. } => Aabb::new(
                *center - Vec3::splat(*radius),
                *center + Vec3::splat(*radius),
            ),
            Primitive::Rect {
                axis,
                offset,
                min2,
                max2,
                ..
            } => {
                let (a1, a2) = other_axes(*axis);
                let mut min = Vec3::default();
                let mut max = Vec3::default();
                min.set(*axis, *offset);
                max.set(*axis, *offset);
                min.set(a1, min2[0]);
                max.set(a1, max2[0]);
                min.set(a2, min2[1]);
                max.set(a2, max2[1]);
                Aabb::new(min, max)
            }
        }
    }
}

fn other_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub room: Aabb,
    pub primitives: Vec<Primitive>,
    /// Unit vector pointing toward the light.
    pub light: Vec3,
    pub ambient: f64,
    pub wall_albedo: [f64; 3],
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        if !(self.room.min.x < self.room.max.x
            && self.room.min.y < self.room.max.y
            && self.room.min.z < self.room.max.z)
        {
            return Err(VoxError::Geometry("degenerate room bounds".into()));
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(VoxError::Range(format!("ambient {}", self.ambient)));
        }
        if (self.light.norm() - 1.0).abs() > 1e-9 {
            return Err(VoxError::Geometry("light direction not unit".into()));
        }
        for p in &self.primitives {
            p.validate()?;
            let b = p.bounds();
            if !(self.room.contains(b.min) && self.room.contains(b.max)) {
                return Err(VoxError::Geometry("primitive outside room".into()));
            }
        }
        Ok(())
    }

    /// Default scene: a 4 x 3 x 2.5 m room with a table box, a sphere on the
    /// table, and a poster rectangle on one wall.
    pub fn toy_room() -> SyntheticScene {
        SyntheticScene {
            room: Aabb::new(vec3(0.0, 0.0, 0.0), vec3(4.0, 3.0, 2.5)),
            primitives: vec![
                Primitive::Box {
                    min: vec3(2.4, 0.8, 0.0),
                    max: vec3(3.4, 1.8, 0.7),
                    albedo: [0.75, 0.35, 0.2],
                },
                Primitive::Sphere {
                    center: vec3(2.9, 1.3, 1.0),
                    radius: 0.3,
                    albedo: [0.2, 0.45, 0.8],
                },
                Primitive::Rect {
                    axis: 1,
                    offset: 2.999,
                    min2: [0.8, 0.8],
                    max2: [2.0, 1.8],
                    albedo: [0.85, 0.8, 0.25],
                },
            ],
            light: vec3(0.3, 0.5, 0.8).normalized(),
            ambient: 0.35,
            wall_albedo: [0.7, 0.7, 0.7],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub t: f64,
    pub normal: Vec3,
    pub albedo: [f64; 3],
}

fn hit_box(ray: &Ray, min: Vec3, max: Vec3) -> Option<(f64, Vec3)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    let (mut axis0, mut axis1) = (0, 0);
    for a in 0..3 {
        let inv = 1.0 / ray.direction.get(a);
        let mut ta = (min.get(a) - ray.origin.get(a)) * inv;
        let mut tb = (max.get(a) - ray.origin.get(a)) * inv;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        if ta > t0 {
            t0 = ta;
            axis0 = a;
        }
        if tb < t1 {
            t1 = tb;
            axis1 = a;
        }
    }
    if t0 > t1 {
        return None;
    }
    // entry when the origin is outside, exit when it starts inside
    let (t, axis) = if t0 > 1e-9 {
        (t0, axis0)
    } else if t1 > 1e-9 {
        (t1, axis1)
    } else {
        return None;
    };
    let mut n = Vec3::default();
    n.set(axis, -ray.direction.get(axis).signum());
    Some((t, n))
}

/// Exit parameter of a ray starting inside an AABB, with the inward normal
/// of the wall it leaves through.
fn exit_box(ray: &Ray, min: Vec3, max: Vec3) -> Option<(f64, Vec3)> {
    let mut t1 = f64::INFINITY;
    let mut axis1 = 0;
    for a in 0..3 {
        let inv = 1.0 / ray.direction.get(a);
        let ta = (min.get(a) - ray.origin.get(a)) * inv;
        let tb = (max.get(a) - ray.origin.get(a)) * inv;
        let tb = ta.max(tb);
        if tb < t1 {
            t1 = tb;
            axis1 = a;
        }
    }
    if !(t1 > 1e-9 && t1.is_finite()) {
        return None;
    }
    let mut n = Vec3::default();
    n.set(axis1, -ray.direction.get(axis1).signum());
    Some((t1, n))
}

fn hit_sphere(ray: &Ray, center: Vec3, radius: f64) -> Option<(f64, Vec3)> {
    let oc = ray.origin - center;
    let b = oc.dot(ray.direction);
    let c = oc.dot(oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t = if -b - sq > 1e-9 {
        -b - sq
    } else if -b + sq > 1e-9 {
        -b + sq
    } else {
        return None;
    };
    let n = (ray.at(t) - center).normalized();
    Some((t, n))
}

fn hit_rect(
    ray: &Ray,
    axis: usize,
    offset: f64,
    min2: [f64; 2],
    max2: [f64; 2],
) -> Option<(f64, Vec3)> {
    let d = ray.direction.get(axis);
    if d.abs() < 1e-15 {
        return None;
    }
    let t = (offset - ray.origin.get(axis)) / d;
    if t <= 1e-9 {
        return None;
    }
    let p = ray.at(t);
    let (a1, a2) = other_axes(axis);
    if p.get(a1) < min2[0] || p.get(a1) > max2[0] || p.get(a2) < min2[1] || p.get(a2) > max2[1]
    {
        return None;
    }
    let mut n = Vec3::default();
    n.set(axis, -d.signum());
    Some((t, n))
}

/// Nearest positive intersection over all primitives and the room walls.
/// Normals face the incoming ray.
pub fn oracle_trace(scene: &SyntheticScene, ray: &Ray) -> Option<SurfaceHit> {
    let mut best: Option<SurfaceHit> = None;
    let mut consider = |hit: Option<(f64, Vec3)>, albedo: [f64; 3]| {
        if let Some((t, normal)) = hit {
            if best.map_or(true, |b| t < b.t) {
                best = Some(SurfaceHit { t, normal, albedo });
            }
        }
    };
    for p in &scene.primitives {
        let h = match p {
            Primitive::Box { min, max, .. } => hit_box(ray, *min, *max),
            Primitive::Sphere { center, radius, .. } => hit_sphere(ray, *center, *radius),
            Primitive::Rect {
                axis,
                offset,
                min2,
                max2,
                ..
            } => hit_rect(ray, *axis, *offset, *min2, *max2),
        };
        consider(h, p.albedo());
    }
    consider(
        exit_box(ray, scene.room.min, scene.room.max),
        scene.wall_albedo,
    );
    best
}

/// Lambertian shade under the scene's directional light plus ambient term.
pub fn shade(scene: &SyntheticScene, hit: &SurfaceHit) -> [f64; 3] {
    let diffuse = hit.normal.dot(scene.light).max(0.0);
    let s = scene.ambient + (1.0 - scene.ambient) * diffuse;
    let a = hit.albedo;
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Exact ground-truth RGB-D render: one center ray per pixel.
pub fn oracle_render(scene: &SyntheticScene, camera: &Camera) -> Result<(Image, DepthMap)> {
    camera.validate()?;
    let mut image = Image::new(camera.width, camera.height);
    let mut depth = DepthMap::new(camera.width, camera.height);
    for py in 0..camera.height {
        for px in 0..camera.width {
            let ray = generate_ray(camera, px as f64, py as f64, 0.0, f64::INFINITY);
            if let Some(hit) = oracle_trace(scene, &ray) {
                image.set(px, py, shade(scene, &hit));
                let i = image.idx(px, py);
                depth.data[i] = hit.t;
                depth.valid[i] = true;
            }
        }
    }
    Ok((image, depth))
}

/// Distance from a point to the nearest scene surface (primitives + walls).
pub fn surface_distance(scene: &SyntheticScene, p: Vec3) -> f64 {
    let mut best = f64::INFINITY;
    for prim in &scene.primitives {
        let d = match prim {
            Primitive::Box { min, max, .. } => box_surface_distance(p, *min, *max),
            Primitive::Sphere { center, radius, .. } => ((p - *center).norm() - radius).abs(),
            Primitive::Rect {
                axis,
                offset,
                min2,
                max2,
                ..
            } => {
                let (a1, a2) = other_axes(*axis);
                let dn = p.get(*axis) - offset;
                let d1 = (min2[0] - p.get(a1)).max(p.get(a1) - max2[0]).max(0.0);
                let d2 = (min2[1] - p.get(a2)).max(p.get(a2) - max2[1]).max(0.0);
                (dn * dn + d1 * d1 + d2 * d2).sqrt()
            }
        };
        best = best.min(d);
    }
    // room walls: distance to the boundary of the room box (points stay inside)
    let mut wall = f64::INFINITY;
    for a in 0..3 {
        wall = wall
            .min((p.get(a) - scene.room.min.get(a)).abs())
            .min((scene.room.max.get(a) - p.get(a)).abs());
    }
    best.min(wall)
}

fn box_surface_distance(p: Vec3, min: Vec3, max: Vec3) -> f64 {
    let mut outside = 0.0;
    let mut inside = f64::NEG_INFINITY;
    for a in 0..3 {
        let lo = min.get(a) - p.get(a);
        let hi = p.get(a) - max.get(a);
        let d = lo.max(hi);
        if d > 0.0 {
            outside += d * d;
        }
        inside = inside.max(d);
    }
    if outside > 0.0 {
        outside.sqrt()
    } else {
        -inside
    }
}

fn sample_box_surface(rng: &mut Stream, min: Vec3, max: Vec3) -> Vec3 {
    let e = max - min;
    let areas = [e.y * e.z, e.x * e.z, e.x * e.y]; // per axis-pair, two faces each
    let total: f64 = areas.iter().map(|a| 2.0 * a).sum();
    let mut pick = rng.random::<f64>() * total;
    for axis in 0..3 {
        for side in 0..2 {
            if pick < areas[axis] {
                let (a1, a2) = other_axes(axis);
                let mut p = Vec3::default();
                p.set(
                    axis,
                    if side == 0 { min.get(axis) } else { max.get(axis) },
                );
                p.set(a1, min.get(a1) + rng.random::<f64>() * (max.get(a1) - min.get(a1)));
                p.set(a2, min.get(a2) + rng.random::<f64>() * (max.get(a2) - min.get(a2)));
                return p;
            }
            pick -= areas[axis];
        }
    }
    max // unreachable up to rounding
}

fn sample_surface(rng: &mut Stream, scene: &SyntheticScene, areas: &[f64]) -> Vec3 {
    let total: f64 = areas.iter().sum();
    let mut pick = rng.random::<f64>() * total;
    for (i, a) in areas.iter().enumerate() {
        if pick < *a || i == areas.len() - 1 {
            if i < scene.primitives.len() {
                return match &scene.primitives[i] {
                    Primitive::Box { min, max, .. } => sample_box_surface(rng, *min, *max),
                    Primitive::Sphere { center, radius, .. } => {
                        // uniform direction via normalized Gaussian triple
                        let d = vec3(
                            standard_normal(rng),
                            standard_normal(rng),
                            standard_normal(rng),
                        )
                        .normalized();
                        *center + d * *radius
                    }
                    Primitive::Rect {
                        axis,
                        offset,
                        min2,
                        max2,
                        ..
                    } => {
                        let (a1, a2) = other_axes(*axis);
                        let mut p = Vec3::default();
                        p.set(*axis, *offset);
                        p.set(a1, min2[0] + rng.random::<f64>() * (max2[0] - min2[0]));
                        p.set(a2, min2[1] + rng.random::<f64>() * (max2[1] - min2[1]));
                        p
                    }
                };
            }
            return sample_box_surface(rng, scene.room.min, scene.room.max);
        }
        pick -= a;
    }
    unreachable!()
}

/// Area-weighted surface samples with isotropic Gaussian noise; a fraction
/// of points is replaced by uniform room-interior outliers. Every point
/// records sigma = noise_sigma.
pub fn sample_prior_cloud(
    scene: &SyntheticScene,
    n_points: usize,
    noise_sigma: f64,
    outlier_frac: f64,
    seed: u64,
) -> Result<PointCloud> {
    if n_points == 0 {
        return Err(VoxError::EmptyInput("prior cloud size"));
    }
    if noise_sigma < 0.0 {
        return Err(VoxError::Range(format!("noise_sigma {noise_sigma}")));
    }
    if !(0.0..0.5).contains(&outlier_frac) {
        return Err(VoxError::Range(format!("outlier_frac {outlier_frac}")));
    }
    let mut areas: Vec<f64> = scene.primitives.iter().map(|p| p.surface_area()).collect();
    let re = scene.room.extent();
    areas.push(2.0 * (re.x * re.y + re.y * re.z + re.x * re.z));

    let points: Vec<PriorPoint> = (0..n_points)
        .map(|i| {
            let mut rng = substream(seed, &[0x7031, i as u64]);
            let pos = if rng.random::<f64>() < outlier_frac {
                vec3(
                    scene.room.min.x + rng.random::<f64>() * re.x,
                    scene.room.min.y + rng.random::<f64>() * re.y,
                    scene.room.min.z + rng.random::<f64>() * re.z,
                )
            } else {
                let s = sample_surface(&mut rng, scene, &areas);
                s + vec3(
                    standard_normal(&mut rng),
                    standard_normal(&mut rng),
                    standard_normal(&mut rng),
                ) * noise_sigma
            };
            PriorPoint {
                position: pos,
                noise_sigma,
            }
        })
        .collect();
    PointCloud::from_points(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    TestInterp,
    TestExtrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trajectory {
    Orbit,
    InsideOut,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub cameras: Vec<Camera>,
    pub images: Vec<Image>,
    pub depths: Vec<DepthMap>,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn views_in(&self, split: Split) -> Vec<usize> {
        (0..self.split.len())
            .filter(|i| self.split[*i] == split)
            .collect()
    }
}

/// Camera-to-world rotation looking from `eye` toward `target`, +z up.
pub fn look_at(eye: Vec3, target: Vec3) -> Mat3 {
    let forward = (target - eye).normalized();
    let up = vec3(0.0, 0.0, 1.0);
    let right = forward.cross(up).normalized();
    let down = forward.cross(right);
    Mat3::from_cols(right, down, forward)
}

fn make_camera(eye: Vec3, target: Vec3, width: u32, height: u32) -> Camera {
    // ~70 degree horizontal field of view
    let fx = 0.5 * width as f64 / (35.0f64.to_radians()).tan();
    Camera {
        fx,
        fy: fx,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
        rotation: look_at(eye, target),
        translation: eye,
    }
}

/// Angle of an inside-out/orbit pose, measured at the room center.
pub fn pose_angle(scene: &SyntheticScene, cam: &Camera) -> f64 {
    let c = scene.room.center();
    let d = cam.translation - c;
    d.y.atan2(d.x)
}

const INSIDE_OUT_ARC: f64 = 270.0 * std::f64::consts::PI / 180.0;

/// Posed ground-truth dataset along a closed-path trajectory.
///
/// Inside-out: cameras on a small circle at mid-height looking outward; the
/// train views span a 270 degree arc, test_interp views sit midway between
/// adjacent train views, and test_extrap views fill the remaining arc.
/// Orbit: full-circle inward-looking views; extrap views are lifted above
/// the train circle.
pub fn make_dataset(
    scene: &SyntheticScene,
    n_train: usize,
    n_test: usize,
    trajectory: Trajectory,
    width: u32,
    height: u32,
) -> Result<Dataset> {
    if n_train == 0 || n_test == 0 {
        return Err(VoxError::EmptyInput("dataset view count"));
    }
    scene.validate()?;
    let c = scene.room.center();
    let e = scene.room.extent();
    let radius = 0.2 * e.x.min(e.y);
    let n_interp = n_test.div_ceil(2);
    let n_extrap = n_test - n_interp;

    let mut poses: Vec<(Vec3, Vec3, Split)> = Vec::new();
    match trajectory {
        Trajectory::InsideOut => {
            let eye_at = |ang: f64| c + vec3(radius * ang.cos(), radius * ang.sin(), 0.0);
            // look outward: target is the eye pushed away from the center
            let tgt_at = |ang: f64| c + vec3(ang.cos(), ang.sin(), 0.0) * (radius + 1.0);
            let step = INSIDE_OUT_ARC / n_train as f64;
            let train_angles: Vec<f64> = (0..n_train).map(|i| i as f64 * step).collect();
            for &a in &train_angles {
                poses.push((eye_at(a), tgt_at(a), Split::Train));
            }
            for k in 0..n_interp {
                let i = k * n_train.max(1) / n_interp.max(1) % n_train.max(1);
                let a = train_angles[i.min(n_train - 1)] + 0.5 * step;
                poses.push((eye_at(a), tgt_at(a), Split::TestInterp));
            }
            // spread extrap views over the uncovered arc, away from its ends
            let gap = std::f64::consts::TAU - (train_angles[n_train - 1] + 0.5 * step);
            for k in 0..n_extrap {
                let a = train_angles[n_train - 1]
                    + 0.5 * step
                    + gap * (k as f64 + 0.75) / (n_extrap as f64 + 0.5);
                poses.push((eye_at(a), tgt_at(a), Split::TestExtrap));
            }
        }
        Trajectory::Orbit => {
            let orbit_r = 0.35 * e.x.min(e.y);
            let eye_at = |ang: f64, z: f64| {
                c + vec3(orbit_r * ang.cos(), orbit_r * ang.sin(), z)
            };
            let step = std::f64::consts::TAU / n_train as f64;
            for i in 0..n_train {
                poses.push((eye_at(i as f64 * step, 0.0), c, Split::Train));
            }
            for k in 0..n_interp {
                let i = k * n_train / n_interp.max(1) % n_train;
                poses.push((eye_at(i as f64 * step + 0.5 * step, 0.0), c, Split::TestInterp));
            }
            for k in 0..n_extrap {
                let a = (k as f64 + 0.25) * std::f64::consts::TAU / n_extrap as f64;
                poses.push((eye_at(a, 0.25 * e.z), c, Split::TestExtrap));
            }
        }
    }

    let mut cameras = Vec::with_capacity(poses.len());
    let mut images = Vec::with_capacity(poses.len());
    let mut depths = Vec::with_capacity(poses.len());
    let mut split = Vec::with_capacity(poses.len());
    for (eye, target, s) in poses {
        let cam = make_camera(eye, target, width, height);
        let (img, dep) = oracle_render(scene, &cam)?;
        cameras.push(cam);
        images.push(img);
        depths.push(dep);
        split.push(s);
    }
    Ok(Dataset {
        cameras,
        images,
        depths,
        split,
    })
}
