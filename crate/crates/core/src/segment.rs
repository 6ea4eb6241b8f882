//! Planar segmentation of a point cloud by region growing over a k-NN graph.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{cartesian_to_polar, CartesianPlane, GeomError, PlanePrimitive, Point3};
use crate::spatial::PointIndex;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("points are collinear or coincident ({0} given)")]
    RankDeficient(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    /// Maximum deviation between a point normal and the segment normal, degrees.
    pub angle_tol: f64,
    pub dist_tol: f64,
    pub min_support: usize,
    pub k: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            angle_tol: 10.0,
            dist_tol: 0.01,
            min_support: 20,
            k: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub plane: CartesianPlane,
    /// Sorted point indices.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    pub unassigned: Vec<usize>,
}

impl Segmentation {
    /// Segment index per point, `None` for unassigned points.
    pub fn labels(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        for (s, seg) in self.segments.iter().enumerate() {
            for &i in &seg.members {
                out[i] = Some(s);
            }
        }
        out
    }

    pub fn assigned_count(&self) -> usize {
        self.segments.iter().map(|s| s.members.len()).sum()
    }

    /// One primitive per segment, holding its member points.
    pub fn to_primitives(&self, points: &[Point3]) -> Vec<PlanePrimitive> {
        self.segments
            .iter()
            .map(|s| {
                let plane = match cartesian_to_polar(&s.plane) {
                    Ok(p) | Err(GeomError::DegeneratePlane(p)) => p,
                    Err(GeomError::ParallelDirection(_)) => unreachable!(),
                };
                PlanePrimitive {
                    plane,
                    points: s.members.iter().map(|&i| points[i]).collect(),
                    confidence: 1.0,
                }
            })
            .collect()
    }
}

/// Centroid plus eigen-decomposition of the covariance, eigenvalues ascending.
fn principal_axes(points: &[Point3]) -> (Point3, [f64; 3], [Point3; 3]) {
    let n = points.len().max(1) as f64;
    let c = points.iter().fold(Point3::ZERO, |a, &p| a + p) / n;
    let mut cov = Matrix3::zeros();
    for &p in points {
        let v = Vector3::new(p.x - c.x, p.y - c.y, p.z - c.z);
        cov += v * v.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });
    let vals = order.map(|i| eig.eigenvalues[i].max(0.0));
    let vecs = order.map(|i| {
        let v = eig.eigenvectors.column(i);
        Point3::new(v[0], v[1], v[2])
    });
    (c, vals, vecs)
}

/// Total-least-squares plane through `points`, in canonical form.
pub fn refit_plane(points: &[Point3]) -> Result<CartesianPlane, SegmentError> {
    if points.len() < 3 {
        return Err(SegmentError::RankDeficient(points.len()));
    }
    let (c, vals, vecs) = principal_axes(points);
    // The middle eigenvalue vanishes for collinear input, all of them for coincident input.
    if vals[1] <= 1e-12 * vals[2].max(f64::MIN_POSITIVE) || vals[2] <= 1e-30 {
        return Err(SegmentError::RankDeficient(points.len()));
    }
    let n = vecs[0]
        .normalized()
        .ok_or(SegmentError::RankDeficient(points.len()))?;
    Ok(CartesianPlane::new(n, n.dot(c)).canonical())
}

/// Sum of squared point-to-plane distances.
pub fn residual_ss(plane: &CartesianPlane, points: &[Point3]) -> f64 {
    points
        .iter()
        .map(|&p| plane.signed_distance(p).powi(2))
        .sum()
}

/// PCA normal and surface variation (smallest eigenvalue over the trace) of
/// each point's neighbourhood. Neighbour lists exclude the point itself.
pub fn estimate_normals(points: &[Point3], neighbors: &[Vec<usize>]) -> (Vec<Point3>, Vec<f64>) {
    points
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut local = Vec::with_capacity(neighbors[i].len() + 1);
            local.push(p);
            local.extend(neighbors[i].iter().map(|&j| points[j]));
            let (_, vals, vecs) = principal_axes(&local);
            let trace = vals.iter().sum::<f64>();
            let curvature = if trace > 0.0 { vals[0] / trace } else { 0.0 };
            let n = vecs[0].normalized().unwrap_or(Point3::new(0.0, 0.0, 1.0));
            (n, curvature)
        })
        .unzip()
}

/// Region growing: seeds in order of increasing surface variation; a
/// neighbour joins while it lies within `dist_tol` of the current segment
/// plane and its normal is within `angle_tol` of the plane normal. Accepted
/// segments are refit and trimmed until every member is within `dist_tol`.
pub fn detect_planes(points: &[Point3], params: &SegmentParams) -> Segmentation {
    let n = points.len();
    if n < params.min_support.max(3) {
        return Segmentation {
            segments: Vec::new(),
            unassigned: (0..n).collect(),
        };
    }
    let k = params.k.min(n - 1);
    let index = PointIndex::new(points);
    let neighbors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            index
                .knn_excluding(points, i, k)
                .into_iter()
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let (normals, curvature) = estimate_normals(points, &neighbors);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| curvature[a].total_cmp(&curvature[b]).then(a.cmp(&b)));

    let cos_tol = params.angle_tol.to_radians().cos();
    let mut label: Vec<Option<usize>> = vec![None; n];
    // Stamp per point of the region currently being grown.
    let mut stamp = vec![usize::MAX; n];
    let mut segments = Vec::new();

    for (attempt, &seed) in order.iter().enumerate() {
        if label[seed].is_some() {
            continue;
        }
        let mut plane = CartesianPlane::new(normals[seed], normals[seed].dot(points[seed]));
        let mut region = vec![seed];
        stamp[seed] = attempt;
        let mut next_refit = 8;
        let mut head = 0;
        while head < region.len() {
            let cur = region[head];
            head += 1;
            for &j in &neighbors[cur] {
                if stamp[j] == attempt || label[j].is_some() {
                    continue;
                }
                if plane.signed_distance(points[j]).abs() < params.dist_tol
                    && normals[j].dot(plane.n).abs() >= cos_tol
                {
                    stamp[j] = attempt;
                    region.push(j);
                }
            }
            if region.len() >= next_refit {
                let pts: Vec<Point3> = region.iter().map(|&i| points[i]).collect();
                if let Ok(p) = refit_plane(&pts) {
                    plane = p;
                }
                next_refit = region.len() * 2;
            }
        }
        if region.len() < params.min_support {
            continue;
        }
        let Some((plane, members)) = finalize(points, region, params) else {
            continue;
        };
        for &i in &members {
            label[i] = Some(segments.len());
        }
        segments.push(Segment { plane, members });
    }

    let unassigned = (0..n).filter(|&i| label[i].is_none()).collect();
    Segmentation {
        segments,
        unassigned,
    }
}

fn finalize(
    points: &[Point3],
    mut region: Vec<usize>,
    params: &SegmentParams,
) -> Option<(CartesianPlane, Vec<usize>)> {
    for _ in 0..8 {
        let pts: Vec<Point3> = region.iter().map(|&i| points[i]).collect();
        let plane = refit_plane(&pts).ok()?;
        let before = region.len();
        region.retain(|&i| plane.signed_distance(points[i]).abs() < params.dist_tol);
        if region.len() < params.min_support {
            return None;
        }
        if region.len() == before {
            region.sort_unstable();
            return Some((plane, region));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_shape, sample_surface, UnitDiagonal};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_square_plane() {
        let pts =
            [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)].map(|(x, y)| Point3::new(x, y, 0.0));
        let p = refit_plane(&pts).unwrap();
        assert!((p.n - Point3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert!(p.d.abs() < 1e-12);
    }

    #[test]
    fn tilted_plane_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Point3> = (0..100)
            .map(|_| {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y: f64 = rng.random_range(-1.0..1.0);
                Point3::new(x, y, 1.0 - x - y)
            })
            .collect();
        let p = refit_plane(&pts).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((p.n - Point3::new(s, s, s)).norm() < 1e-9);
        assert!((p.d - s).abs() < 1e-9);
        let worst = pts
            .iter()
            .map(|&q| p.signed_distance(q).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        let two = [Point3::ZERO, Point3::new(1.0, 0.0, 0.0)];
        assert_eq!(refit_plane(&two), Err(SegmentError::RankDeficient(2)));
        let line: Vec<Point3> = (0..10)
            .map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.5))
            .collect();
        assert!(refit_plane(&line).is_err());
        assert!(refit_plane(&[Point3::new(1.0, 1.0, 1.0); 5]).is_err());
    }

    fn box_cloud(n: usize, seed: u64) -> (Vec<Point3>, crate::mesh::PolyMesh) {
        let mesh = gen_shape(seed, 6)
            .unwrap()
            .normalize_unit_diagonal()
            .unwrap();
        let (pts, _) = sample_surface(&mesh, n, seed);
        (pts, mesh)
    }

    #[test]
    fn box_gives_six_axis_segments() {
        let (pts, _) = box_cloud(4096, 7);
        let seg = detect_planes(&pts, &SegmentParams::default());
        assert_eq!(seg.segments.len(), 6);
        for s in &seg.segments {
            let a = s
                .plane
                .n
                .to_array()
                .iter()
                .map(|c| c.abs())
                .fold(0.0, f64::max);
            assert!(a > 1f64.to_radians().cos(), "{:?}", s.plane.n);
        }
    }

    #[test]
    fn single_plane_is_one_segment() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point3> = (0..500)
            .map(|_| Point3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 0.3))
            .collect();
        let seg = detect_planes(&pts, &SegmentParams::default());
        assert_eq!(seg.segments.len(), 1);
        assert_eq!(seg.segments[0].members.len(), 500);
        assert!(seg.unassigned.is_empty());
    }

    #[test]
    fn random_ball_has_few_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = Vec::new();
        while pts.len() < 2048 {
            let p = Point3::new(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            );
            if p.norm() <= 0.5 {
                pts.push(p);
            }
        }
        let seg = detect_planes(&pts, &SegmentParams::default());
        assert!(seg.segments.len() <= 1, "{}", seg.segments.len());
    }

    #[test]
    fn too_few_points_is_empty() {
        let seg = detect_planes(&[Point3::ZERO; 5], &SegmentParams::default());
        assert!(seg.segments.is_empty());
        assert_eq!(seg.unassigned.len(), 5);
    }

    fn check_invariants(seg: &Segmentation, pts: &[Point3], params: &SegmentParams) {
        let mut seen = vec![0u8; pts.len()];
        for s in &seg.segments {
            assert!(s.members.len() >= params.min_support);
            for &i in &s.members {
                seen[i] += 1;
                assert!(s.plane.signed_distance(pts[i]).abs() < params.dist_tol);
            }
        }
        for &i in &seg.unassigned {
            seen[i] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fit_beats_perturbed_planes(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                .normalized().unwrap();
            let (e1, e2) = crate::mesh::plane_basis(n);
            let pts: Vec<Point3> = (0..60).map(|_| {
                e1 * rng.random_range(-1.0..1.0) + e2 * rng.random_range(-1.0..1.0) + n * (0.2 + rng.random_range(-0.05..0.05))
            }).collect();
            let best = refit_plane(&pts).unwrap();
            let base = residual_ss(&best, &pts);
            for _ in 0..100 {
                let dn = Point3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
                let m = (best.n + dn).normalized().unwrap();
                let other = CartesianPlane::new(m, best.d + rng.random_range(-0.05..0.05));
                prop_assert!(base <= residual_ss(&other, &pts) + 1e-12);
            }
        }

        #[test]
        fn segmentation_partitions_points(seed in 0u64..500, complexity in 6usize..14) {
            let mesh = gen_shape(seed, complexity).unwrap().normalize_unit_diagonal().unwrap();
            let (pts, _) = sample_surface(&mesh, 1500, seed);
            let params = SegmentParams::default();
            let seg = detect_planes(&pts, &params);
            check_invariants(&seg, &pts, &params);
        }

        #[test]
        fn loosening_dist_tol_keeps_coverage(seed in 0u64..500) {
            let (pts, _) = box_cloud(1500, seed);
            let tight = SegmentParams { dist_tol: 0.005, ..SegmentParams::default() };
            let loose = SegmentParams { dist_tol: 0.02, ..SegmentParams::default() };
            let a = detect_planes(&pts, &tight).assigned_count();
            let b = detect_planes(&pts, &loose).assigned_count();
            prop_assert!(b >= a, "{} < {}", b, a);
        }
    }
}
