//! Sparse voxel octree built from a noisy prior point cloud.
//!
//! The leaf size encodes the worst-case surface uncertainty: one global
//! voxel side equal to the largest per-point noise sigma. Occupancy is
//! stored explicitly per level so traversal queries are O(1).

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Result, VoxError};
use crate::math::{vec3, Aabb, Vec3};
use crate::morton::{morton_decode, morton_encode, MortonCode, MAX_LEVEL};

/// One point of the geometry prior with its noise-sphere radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorPoint {
    pub position: Vec3,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone)]
pub struct PointCloud {
    pub points: Vec<PriorPoint>,
    pub bounds: Aabb,
}

impl PointCloud {
    pub fn from_points(points: Vec<PriorPoint>) -> Result<PointCloud> {
        if points.is_empty() {
            return Err(VoxError::EmptyInput("point cloud"));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.position.is_finite() {
                return Err(VoxError::Contract(format!("point {i}: non-finite position")));
            }
            if !(p.noise_sigma >= 0.0 && p.noise_sigma.is_finite()) {
                return Err(VoxError::Contract(format!(
                    "point {i}: invalid noise sigma {}",
                    p.noise_sigma
                )));
            }
        }
        let bounds = Aabb::from_points(points.iter().map(|p| p.position));
        Ok(PointCloud { points, bounds })
    }
}

/// Leaf size selection for [`build_octree`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeafSize {
    /// Max noise sigma over the cloud; falls back to 1e-3 of the scene
    /// diagonal when every sigma is zero.
    Auto,
    Explicit(f64),
}

/// Max-sigma leaf size rule.
pub fn choose_leaf_size(cloud: &PointCloud) -> Result<f64> {
    if cloud.points.is_empty() {
        return Err(VoxError::EmptyInput("point cloud"));
    }
    let max_sigma = cloud
        .points
        .iter()
        .map(|p| p.noise_sigma)
        .fold(0.0f64, f64::max);
    if max_sigma > 0.0 {
        Ok(max_sigma)
    } else {
        Ok(1e-3 * cloud.bounds.diagonal())
    }
}

#[derive(Debug, Clone)]
pub struct SparseVoxelOctree {
    pub root_bounds: Aabb,
    pub max_level: u32,
    pub leaf_size: f64,
    /// occupancy[l - 1] holds the occupied cells at level l (1..=max_level);
    /// the last entry is the leaf set. Ancestor closure is maintained.
    occupancy: Vec<HashSet<u64>>,
}

impl SparseVoxelOctree {
    pub fn occupied_leaves(&self) -> &HashSet<u64> {
        &self.occupancy[self.max_level as usize - 1]
    }

    pub fn cell_size(&self, level: u32) -> f64 {
        self.root_bounds.extent().x / (1u64 << level) as f64
    }

    /// World-space box of a cell.
    pub fn cell_bounds(&self, code: MortonCode) -> Result<Aabb> {
        let (x, y, z) = morton_decode(code)?;
        let s = self.cell_size(code.level);
        let min = self.root_bounds.min + vec3(x as f64, y as f64, z as f64) * s;
        Ok(Aabb::new(min, min + Vec3::splat(s)))
    }

    /// True iff any occupied leaf descends from (or equals) the cell.
    pub fn is_occupied(&self, code: MortonCode) -> Result<bool> {
        if code.level == 0 || code.level > self.max_level {
            return Err(VoxError::Range(format!(
                "level {} outside 1..={}",
                code.level, self.max_level
            )));
        }
        if code.code >= 1u64 << (3 * code.level) {
            return Err(VoxError::Range(format!(
                "code {} out of range at level {}",
                code.code, code.level
            )));
        }
        Ok(self.occupancy[code.level as usize - 1].contains(&code.code))
    }

    /// Grid coordinates of the leaf containing a world position, if inside
    /// the root cube. Cells are half-open: [min, min + v).
    pub fn leaf_coords(&self, p: Vec3) -> Option<(u32, u32, u32)> {
        let n = 1u64 << self.max_level;
        let rel = (p - self.root_bounds.min) / self.leaf_size;
        let (x, y, z) = (rel.x.floor(), rel.y.floor(), rel.z.floor());
        if x < 0.0 || y < 0.0 || z < 0.0 {
            return None;
        }
        let (x, y, z) = (x as u64, y as u64, z as u64);
        if x >= n || y >= n || z >= n {
            return None;
        }
        Some((x as u32, y as u32, z as u32))
    }

    /// Rebuild an octree from stored leaf codes, restoring the ancestor
    /// closure. Inverse of serializing `occupied_leaves`.
    pub fn from_parts(
        root_bounds: Aabb,
        max_level: u32,
        leaf_size: f64,
        leaves: HashSet<u64>,
    ) -> Result<SparseVoxelOctree> {
        if max_level == 0 || max_level > MAX_LEVEL {
            return Err(VoxError::Resolution(format!(
                "max level {max_level} outside 1..={MAX_LEVEL}"
            )));
        }
        if leaves.is_empty() {
            return Err(VoxError::EmptyInput("leaf set"));
        }
        let mut occupancy: Vec<HashSet<u64>> = vec![HashSet::new(); max_level as usize];
        for &code in &leaves {
            if code >= 1u64 << (3 * max_level) {
                return Err(VoxError::Range(format!(
                    "leaf code {code} out of range at level {max_level}"
                )));
            }
            let m = MortonCode {
                code,
                level: max_level,
            };
            for l in 1..max_level {
                occupancy[l as usize - 1].insert(m.ancestor(l).code);
            }
        }
        occupancy[max_level as usize - 1] = leaves;
        Ok(SparseVoxelOctree {
            root_bounds,
            max_level,
            leaf_size,
            occupancy,
        })
    }

    /// Text dump, one occupied leaf per line: "level code x y z", sorted by code.
    pub fn debug_dump(&self) -> String {
        let mut codes: Vec<u64> = self.occupied_leaves().iter().copied().collect();
        codes.sort_unstable();
        let mut out = String::new();
        for code in codes {
            let m = MortonCode {
                code,
                level: self.max_level,
            };
            let (x, y, z) = morton_decode(m).expect("stored code valid");
            writeln!(out, "{} {} {} {} {}", self.max_level, code, x, y, z).unwrap();
        }
        out
    }
}

/// Cubify the cloud bounds to the max extent and pad by 1% per side so
/// boundary points fall strictly inside.
pub fn root_cube(bounds: &Aabb) -> Result<Aabb> {
    let extent = bounds.extent().max_component();
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(VoxError::Geometry(format!(
            "degenerate bounds, extent {extent}"
        )));
    }
    let side = extent * 1.02;
    let c = bounds.center();
    Ok(Aabb::new(c - Vec3::splat(side / 2.0), c + Vec3::splat(side / 2.0)))
}

pub fn build_octree(cloud: &PointCloud, leaf: LeafSize) -> Result<SparseVoxelOctree> {
    if cloud.points.is_empty() {
        return Err(VoxError::EmptyInput("point cloud"));
    }
    let requested = match leaf {
        LeafSize::Auto => choose_leaf_size(cloud)?,
        LeafSize::Explicit(v) => v,
    };
    if !(requested > 0.0) || !requested.is_finite() {
        return Err(VoxError::Contract(format!("leaf size {requested} must be > 0")));
    }
    let root_bounds = root_cube(&cloud.bounds)?;
    let side = root_bounds.extent().x;

    // Largest level whose cells still contain the requested size, so the
    // actual leaf is at least as large as the worst-case noise sigma.
    let ratio = side / requested;
    let level = (ratio.log2().floor() as i64).max(1);
    if level > MAX_LEVEL as i64 {
        return Err(VoxError::Resolution(format!(
            "leaf size {requested} needs {level} levels (max {MAX_LEVEL}); \
             pass a coarser explicit leaf size"
        )));
    }
    let max_level = level as u32;
    let leaf_size = side / (1u64 << max_level) as f64;

    let mut occupancy: Vec<HashSet<u64>> = vec![HashSet::new(); max_level as usize];
    let n = 1u64 << max_level;
    for p in &cloud.points {
        let rel = (p.position - root_bounds.min) / leaf_size;
        let gx = (rel.x.floor().max(0.0) as u64).min(n - 1) as u32;
        let gy = (rel.y.floor().max(0.0) as u64).min(n - 1) as u32;
        let gz = (rel.z.floor().max(0.0) as u64).min(n - 1) as u32;
        let m = morton_encode(gx, gy, gz, max_level)?;
        if occupancy[max_level as usize - 1].insert(m.code) {
            for l in 1..max_level {
                occupancy[l as usize - 1].insert(m.ancestor(l).code);
            }
        }
    }
    Ok(SparseVoxelOctree {
        root_bounds,
        max_level,
        leaf_size,
        occupancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn pt(x: f64, y: f64, z: f64, s: f64) -> PriorPoint {
        PriorPoint {
            position: vec3(x, y, z),
            noise_sigma: s,
        }
    }

    #[test]
    fn leaf_size_is_max_sigma() {
        let cloud = PointCloud::from_points(vec![
            pt(0.0, 0.0, 0.0, 0.01),
            pt(1.0, 0.0, 0.0, 0.03),
            pt(0.0, 1.0, 0.0, 0.02),
        ])
        .unwrap();
        assert_eq!(choose_leaf_size(&cloud).unwrap(), 0.03);
    }

    #[test]
    fn leaf_size_zero_sigma_fallback() {
        let cloud =
            PointCloud::from_points(vec![pt(0.0, 0.0, 0.0, 0.0), pt(1.0, 1.0, 1.0, 0.0)]).unwrap();
        let v = choose_leaf_size(&cloud).unwrap();
        assert!((v - 1e-3 * 3.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn leaf_size_matches_linear_scan() {
        let mut rng = substream(3, &[0]);
        let points: Vec<PriorPoint> = (0..10_000)
            .map(|_| {
                pt(
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    rng.random::<f64>() * 0.1,
                )
            })
            .collect();
        let oracle = points
            .iter()
            .map(|p| p.noise_sigma)
            .fold(f64::MIN, f64::max);
        let cloud = PointCloud::from_points(points).unwrap();
        assert_eq!(choose_leaf_size(&cloud).unwrap(), oracle);
    }

    #[test]
    fn invalid_points_rejected() {
        assert!(PointCloud::from_points(vec![]).is_err());
        assert!(PointCloud::from_points(vec![pt(f64::NAN, 0.0, 0.0, 0.1)]).is_err());
        assert!(PointCloud::from_points(vec![pt(0.0, 0.0, 0.0, -1.0)]).is_err());
    }

    #[test]
    fn single_point_single_leaf() {
        // Spread-out cloud so the cube is non-degenerate, then query.
        let cloud = PointCloud::from_points(vec![
            pt(0.0, 0.0, 0.0, 0.0),
            pt(1.0, 1.0, 1.0, 0.0),
        ])
        .unwrap();
        let svo = build_octree(&cloud, LeafSize::Explicit(0.4)).unwrap();
        assert_eq!(svo.occupied_leaves().len(), 2);
        // root-level children of occupied leaves are occupied
        for &code in svo.occupied_leaves() {
            let m = MortonCode {
                code,
                level: svo.max_level,
            };
            for l in 1..=svo.max_level {
                assert!(svo.is_occupied(m.ancestor(l)).unwrap());
            }
        }
    }

    #[test]
    fn eight_octant_centers() {
        let mut points = Vec::new();
        for x in [0.25, 0.75] {
            for y in [0.25, 0.75] {
                for z in [0.25, 0.75] {
                    points.push(pt(x, y, z, 0.0));
                }
            }
        }
        let cloud = PointCloud::from_points(points).unwrap();
        let svo = build_octree(&cloud, LeafSize::Explicit(0.3)).unwrap();
        assert_eq!(svo.max_level, 1);
        assert_eq!(svo.occupied_leaves().len(), 8);
    }

    #[test]
    fn leaf_size_rule_and_exactness() {
        let mut rng = substream(5, &[1]);
        let points: Vec<PriorPoint> = (0..500)
            .map(|_| {
                pt(
                    rng.random::<f64>() * 4.0,
                    rng.random::<f64>() * 3.0,
                    rng.random::<f64>() * 2.0,
                    0.02 + rng.random::<f64>() * 0.02,
                )
            })
            .collect();
        let max_sigma = points
            .iter()
            .map(|p| p.noise_sigma)
            .fold(0.0f64, f64::max);
        let cloud = PointCloud::from_points(points).unwrap();
        let svo = build_octree(&cloud, LeafSize::Auto).unwrap();
        assert!(svo.leaf_size >= max_sigma);
        let side = svo.root_bounds.extent().x;
        assert_eq!(svo.leaf_size, side / (1u64 << svo.max_level) as f64);
    }

    #[test]
    fn build_matches_brute_force_voxelizer() {
        let mut rng = substream(9, &[2]);
        let points: Vec<PriorPoint> = (0..5_000)
            .map(|_| {
                // points on a sphere surface
                let d = vec3(
                    standard(&mut rng),
                    standard(&mut rng),
                    standard(&mut rng),
                )
                .normalized();
                pt(d.x, d.y, d.z, 0.05)
            })
            .collect();
        let cloud = PointCloud::from_points(points.clone()).unwrap();
        let svo = build_octree(&cloud, LeafSize::Auto).unwrap();

        // brute-force voxelization: floor-divide each point by the leaf size
        let mut expected = HashSet::new();
        let n = 1u64 << svo.max_level;
        for p in &points {
            let rel = (p.position - svo.root_bounds.min) / svo.leaf_size;
            let gx = (rel.x.floor().max(0.0) as u64).min(n - 1) as u32;
            let gy = (rel.y.floor().max(0.0) as u64).min(n - 1) as u32;
            let gz = (rel.z.floor().max(0.0) as u64).min(n - 1) as u32;
            expected.insert(morton_encode(gx, gy, gz, svo.max_level).unwrap().code);
        }
        assert_eq!(svo.occupied_leaves(), &expected);
    }

    fn standard(rng: &mut crate::rng::Stream) -> f64 {
        crate::rng::standard_normal(rng)
    }

    #[test]
    fn is_occupied_matches_descendant_scan() {
        let mut rng = substream(13, &[3]);
        let points: Vec<PriorPoint> = (0..200)
            .map(|_| {
                pt(
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    0.0,
                )
            })
            .collect();
        let cloud = PointCloud::from_points(points).unwrap();
        let svo = build_octree(&cloud, LeafSize::Explicit(0.06)).unwrap();
        assert!(svo.max_level >= 3);
        for _ in 0..2_000 {
            let level = rng.random_range(1..=svo.max_level);
            let code = rng.random_range(0..1u64 << (3 * level));
            let got = svo
                .is_occupied(MortonCode { code, level })
                .unwrap();
            // descendant enumeration oracle
            let shift = 3 * (svo.max_level - level);
            let oracle = svo
                .occupied_leaves()
                .iter()
                .any(|&leaf| leaf >> shift == code);
            assert_eq!(got, oracle, "level {level} code {code}");
        }
    }

    #[test]
    fn build_is_deterministic() {
        let cloud = PointCloud::from_points(
            (0..100)
                .map(|i| pt((i % 10) as f64 * 0.1, (i / 10) as f64 * 0.1, 0.5, 0.02))
                .collect(),
        )
        .unwrap();
        let a = build_octree(&cloud, LeafSize::Auto).unwrap();
        let b = build_octree(&cloud, LeafSize::Auto).unwrap();
        assert_eq!(a.occupied_leaves(), b.occupied_leaves());
        assert_eq!(a.debug_dump(), b.debug_dump());
    }

    #[test]
    fn degenerate_bounds_error() {
        let cloud =
            PointCloud::from_points(vec![pt(1.0, 1.0, 1.0, 0.1), pt(1.0, 1.0, 1.0, 0.1)]).unwrap();
        assert!(matches!(
            build_octree(&cloud, LeafSize::Auto),
            Err(VoxError::Geometry(_))
        ));
    }

    #[test]
    fn too_deep_resolution_error() {
        let cloud =
            PointCloud::from_points(vec![pt(0.0, 0.0, 0.0, 0.0), pt(1.0, 1.0, 1.0, 0.0)]).unwrap();
        assert!(matches!(
            build_octree(&cloud, LeafSize::Explicit(1e-9)),
            Err(VoxError::Resolution(_))
        ));
    }
}
