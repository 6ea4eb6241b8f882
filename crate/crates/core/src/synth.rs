//! Procedural plane-only shapes, surface sampling, occlusion and normalization.
//!
//! Shapes are convex polyhedra: an axis-aligned box whose corners and edges are
//! chamfered by extra cutting planes. Each accepted cut adds exactly one face,
//! so a shape generated with complexity `c` has `c` faces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{cartesian_to_polar, CartesianPlane, GeomError, PlanePrimitive, Point3};
use crate::mesh::{clip_polygon, plane_square, polygon_area, PolyMesh};
use crate::spatial::{bounding_box, farthest_point_sampling};

pub const INPUT_POINTS: usize = 2048;
pub const GT_POINTS: usize = 8192;
pub const MIN_COMPLEXITY: usize = 6;
pub const MAX_COMPLEXITY: usize = 30;

const SHAPE_ATTEMPTS: usize = 10;
const CUT_ATTEMPTS: usize = 60;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("complexity {0} outside [{MIN_COMPLEXITY}, {MAX_COMPLEXITY}]")]
    BadComplexity(usize),
    #[error("shape generation failed for seed {seed} after {attempts} attempts")]
    GenerationFailed { seed: u64, attempts: usize },
    #[error("input has zero bounding-box diagonal")]
    DegenerateExtent,
    #[error("cannot occlude an empty point set")]
    EmptyInput,
}

/// Occlusion level and its fraction of removed points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Simple,
    Moderate,
    Hard,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Simple, Level::Moderate, Level::Hard];

    pub fn ratio(self) -> f64 {
        match self {
            Level::Simple => 0.25,
            Level::Moderate => 0.5,
            Level::Hard => 0.75,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Simple => "simple",
            Level::Moderate => "moderate",
            Level::Hard => "hard",
        }
    }
}

impl std::str::FromStr for Level {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simple" => Ok(Level::Simple),
            "moderate" => Ok(Level::Moderate),
            "hard" => Ok(Level::Hard),
            other => Err(format!(
                "unknown level `{other}` (expected simple, moderate or hard)"
            )),
        }
    }
}

/// The eight fixed viewing directions (cube diagonals).
pub fn views() -> [Point3; 8] {
    let s = 1.0 / 3f64.sqrt();
    let mut out = [Point3::ZERO; 8];
    for (i, v) in out.iter_mut().enumerate() {
        let sx = if i & 1 == 0 { s } else { -s };
        let sy = if i & 2 == 0 { s } else { -s };
        let sz = if i & 4 == 0 { s } else { -s };
        *v = Point3::new(sx, sy, sz);
    }
    out
}

/// One benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub seed: u64,
    pub level: Level,
    pub view: Point3,
    pub complexity: usize,
    pub input_cloud: Vec<Point3>,
    pub gt_cloud: Vec<Point3>,
    /// Index into `gt_primitives` for every ground-truth point.
    pub gt_labels: Vec<usize>,
    pub gt_primitives: Vec<PlanePrimitive>,
    pub gt_mesh: PolyMesh,
}

impl Sample {
    /// Ground-truth point indices per primitive.
    pub fn primitive_point_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.gt_primitives.len()];
        for (i, &l) in self.gt_labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

/// What to generate for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub seed: u64,
    pub complexity: usize,
    pub level: Level,
    pub view_index: usize,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates a watertight convex plane-only mesh with exactly `complexity` faces.
pub fn gen_shape(seed: u64, complexity: usize) -> Result<PolyMesh, SynthError> {
    if !(MIN_COMPLEXITY..=MAX_COMPLEXITY).contains(&complexity) {
        return Err(SynthError::BadComplexity(complexity));
    }
    let mut rng = rng_for(seed, 1);
    for _ in 0..SHAPE_ATTEMPTS {
        if let Some(mesh) = try_shape(&mut rng, complexity) {
            return Ok(mesh);
        }
    }
    Err(SynthError::GenerationFailed {
        seed,
        attempts: SHAPE_ATTEMPTS,
    })
}

fn try_shape(rng: &mut ChaCha8Rng, complexity: usize) -> Option<PolyMesh> {
    let ext = [
        rng.random_range(0.35..1.0),
        rng.random_range(0.35..1.0),
        rng.random_range(0.35..1.0),
    ];
    let mut planes = Vec::with_capacity(complexity);
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut n = [0.0; 3];
            n[axis] = sign;
            planes.push(CartesianPlane::new(Point3::from_array(n), ext[axis] / 2.0));
        }
    }
    let scale = ext.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut mesh = polyhedron(&planes)?;
    for _ in MIN_COMPLEXITY..complexity {
        let mut accepted = false;
        for _ in 0..CUT_ATTEMPTS {
            let cut = propose_cut(rng, &mesh, scale);
            let mut trial = planes.clone();
            trial.push(cut);
            if let Some(next) = polyhedron(&trial) {
                if next.face_count() == trial.len() && well_shaped(&next, &trial, scale) {
                    planes = trial;
                    mesh = next;
                    accepted = true;
                    break;
                }
            }
        }
        if !accepted {
            return None;
        }
    }
    mesh.is_watertight().then_some(mesh)
}

fn propose_cut(rng: &mut ChaCha8Rng, mesh: &PolyMesh, scale: f64) -> CartesianPlane {
    let jitter = |rng: &mut ChaCha8Rng| {
        Point3::new(
            rng.random_range(-0.35..0.35),
            rng.random_range(-0.35..0.35),
            rng.random_range(-0.35..0.35),
        )
    };
    let depth = rng.random_range(0.12..0.35) * scale;
    if rng.random_bool(0.5) {
        // Corner chamfer: direction is the mean of the incident face normals.
        let v = rng.random_range(0..mesh.vertices.len());
        let mut dir = Point3::ZERO;
        for (f, face) in mesh.faces.iter().enumerate() {
            if face.contains(&v) {
                dir += mesh.face_planes[f].n;
            }
        }
        let n = (dir.normalized().unwrap_or(Point3::new(0.0, 0.0, 1.0)) + jitter(rng))
            .normalized()
            .unwrap_or(Point3::new(0.0, 0.0, 1.0));
        CartesianPlane::new(n, n.dot(mesh.vertices[v]) - depth)
    } else {
        // Edge wedge between two adjacent faces.
        let f = rng.random_range(0..mesh.faces.len());
        let face = &mesh.faces[f];
        let k = rng.random_range(0..face.len());
        let (a, b) = (face[k], face[(k + 1) % face.len()]);
        let g = mesh
            .faces
            .iter()
            .position(|other| {
                other
                    .iter()
                    .enumerate()
                    .any(|(i, &x)| x == b && other[(i + 1) % other.len()] == a)
            })
            .unwrap_or(f);
        let dir = mesh.face_planes[f].n + mesh.face_planes[g].n;
        let n = (dir.normalized().unwrap_or(mesh.face_planes[f].n) + jitter(rng) * 0.5)
            .normalized()
            .unwrap_or(mesh.face_planes[f].n);
        let mid = (mesh.vertices[a] + mesh.vertices[b]) * 0.5;
        CartesianPlane::new(n, n.dot(mid) - depth)
    }
}

/// Rejects shapes with short edges, slivers or vertices shared by more than
/// three planes.
fn well_shaped(mesh: &PolyMesh, planes: &[CartesianPlane], scale: f64) -> bool {
    let min_edge = 0.04 * scale;
    let min_area = 0.004 * scale * scale;
    for (f, face) in mesh.faces.iter().enumerate() {
        if mesh.face_area(f) < min_area {
            return false;
        }
        for k in 0..face.len() {
            let a = mesh.vertices[face[k]];
            let b = mesh.vertices[face[(k + 1) % face.len()]];
            if a.distance(b) < min_edge {
                return false;
            }
        }
    }
    let tol = 1e-3 * scale;
    mesh.vertices.iter().all(|&v| {
        planes
            .iter()
            .filter(|p| p.signed_distance(v).abs() < tol)
            .count()
            == 3
    })
}

/// Convex polyhedron bounded by `n . x <= d` for every plane, or `None` if a
/// face collapses.
pub fn polyhedron(planes: &[CartesianPlane]) -> Option<PolyMesh> {
    let mut polygons = Vec::with_capacity(planes.len());
    for (i, plane) in planes.iter().enumerate() {
        let mut poly = plane_square(plane, 10.0);
        for (j, other) in planes.iter().enumerate() {
            if i != j {
                poly = clip_polygon(&poly, other);
                if poly.len() < 3 {
                    break;
                }
            }
        }
        if poly.len() >= 3 && polygon_area(&poly) > 1e-12 {
            polygons.push((poly, *plane));
        }
    }
    if polygons.len() < 4 {
        return None;
    }
    let mesh = PolyMesh::from_polygons(&polygons, 1e-9);
    (mesh.face_count() == polygons.len()).then_some(mesh)
}

/// Area-uniform surface sampling; returns points and their face index.
pub fn sample_surface(mesh: &PolyMesh, n: usize, seed: u64) -> (Vec<Point3>, Vec<usize>) {
    let tris = mesh.triangles();
    if n == 0 || tris.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let mut cumulative = Vec::with_capacity(tris.len());
    let mut total = 0.0;
    for (t, _) in &tris {
        let [a, b, c] = t.map(|i| mesh.vertices[i]);
        total += (b - a).cross(c - a).norm() * 0.5;
        cumulative.push(total);
    }
    let mut rng = rng_for(seed, 2);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * total;
        let t = cumulative.partition_point(|&c| c <= u).min(tris.len() - 1);
        let ([ia, ib, ic], face) = tris[t];
        let (a, b, c) = (mesh.vertices[ia], mesh.vertices[ib], mesh.vertices[ic]);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        let p = a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2);
        // Remove the rounding drift off the supporting plane.
        points.push(mesh.face_planes[face].project(p));
        labels.push(face);
    }
    (points, labels)
}

/// Indices that survive removing the `ceil(ratio * n)` points lying farthest
/// along `-view`, in original order.
pub fn occlusion_survivors(points: &[Point3], view: Point3, ratio: f64) -> Vec<usize> {
    let n = points.len();
    let remove = ((ratio * n as f64).ceil() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        view.dot(points[a])
            .total_cmp(&view.dot(points[b]))
            .then(a.cmp(&b))
    });
    let mut keep: Vec<usize> = order[remove..].to_vec();
    keep.sort_unstable();
    keep
}

/// Depth-cut occlusion followed by resampling to exactly [`INPUT_POINTS`].
pub fn occlude(points: &[Point3], view: Point3, ratio: f64) -> Result<Vec<Point3>, SynthError> {
    if points.is_empty() {
        return Err(SynthError::EmptyInput);
    }
    let mut survivors: Vec<Point3> = occlusion_survivors(points, view, ratio)
        .into_iter()
        .map(|i| points[i])
        .collect();
    if survivors.is_empty() {
        // ratio = 1 leaves nothing; keep the nearest point to the viewer.
        let best = (0..points.len())
            .max_by(|&a, &b| view.dot(points[a]).total_cmp(&view.dot(points[b])))
            .unwrap();
        survivors.push(points[best]);
    }
    Ok(resample(&survivors, INPUT_POINTS))
}

/// Farthest-point sampling down, cyclic duplication up.
pub fn resample(points: &[Point3], target: usize) -> Vec<Point3> {
    if points.len() >= target {
        farthest_point_sampling(points, target, 0)
            .into_iter()
            .map(|i| points[i])
            .collect()
    } else {
        (0..target).map(|i| points[i % points.len()]).collect()
    }
}

/// Geometry that can be rescaled to a unit bounding-box diagonal.
pub trait UnitDiagonal: Sized {
    fn normalize_unit_diagonal(&self) -> Result<Self, SynthError>;
}

fn unit_transform(points: &[Point3]) -> Result<(Point3, f64), SynthError> {
    let (lo, hi) = bounding_box(points).ok_or(SynthError::DegenerateExtent)?;
    let diag = (hi - lo).norm();
    if !(diag > 0.0) || !diag.is_finite() {
        return Err(SynthError::DegenerateExtent);
    }
    Ok(((lo + hi) * 0.5, 1.0 / diag))
}

impl UnitDiagonal for Vec<Point3> {
    fn normalize_unit_diagonal(&self) -> Result<Self, SynthError> {
        let (c, s) = unit_transform(self)?;
        Ok(self.iter().map(|&p| (p - c) * s).collect())
    }
}

impl UnitDiagonal for PolyMesh {
    fn normalize_unit_diagonal(&self) -> Result<Self, SynthError> {
        let (c, s) = unit_transform(&self.vertices)?;
        Ok(PolyMesh {
            vertices: self.vertices.iter().map(|&p| (p - c) * s).collect(),
            faces: self.faces.clone(),
            face_planes: self
                .face_planes
                .iter()
                .map(|pl| CartesianPlane::new(pl.n, (pl.d - pl.n.dot(c)) * s))
                .collect(),
        })
    }
}

pub fn normalize_unit_diagonal<T: UnitDiagonal>(x: &T) -> Result<T, SynthError> {
    x.normalize_unit_diagonal()
}

/// Ground-truth primitives from a labelled sampling; faces that received no
/// points are dropped and labels are renumbered to the kept primitives.
pub fn primitives_from_labels(
    mesh: &PolyMesh,
    points: &[Point3],
    labels: &[usize],
) -> (Vec<PlanePrimitive>, Vec<usize>) {
    let mut per_face: Vec<Vec<Point3>> = vec![Vec::new(); mesh.face_count()];
    for (&p, &l) in points.iter().zip(labels) {
        per_face[l].push(p);
    }
    let mut remap = vec![usize::MAX; mesh.face_count()];
    let mut prims = Vec::new();
    for (f, pts) in per_face.into_iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let plane = match cartesian_to_polar(&mesh.face_planes[f]) {
            Ok(p) | Err(GeomError::DegeneratePlane(p)) => p,
            Err(GeomError::ParallelDirection(_)) => unreachable!(),
        };
        remap[f] = prims.len();
        prims.push(PlanePrimitive {
            plane,
            points: pts,
            confidence: 1.0,
        });
    }
    let labels = labels.iter().map(|&l| remap[l]).collect();
    (prims, labels)
}

/// Builds one complete sample: shape, normalization, ground truth and
/// occluded input.
pub fn generate_sample(spec: &SampleSpec) -> Result<Sample, SynthError> {
    let mesh = gen_shape(spec.seed, spec.complexity)?.normalize_unit_diagonal()?;
    let (gt_cloud, face_labels) = sample_surface(&mesh, GT_POINTS, spec.seed ^ 0x6774);
    let (gt_primitives, gt_labels) = primitives_from_labels(&mesh, &gt_cloud, &face_labels);
    let (dense, _) = sample_surface(&mesh, GT_POINTS, spec.seed ^ 0x696e);
    let view = views()[spec.view_index % 8];
    let input_cloud = occlude(&dense, view, spec.level.ratio())?;
    Ok(Sample {
        seed: spec.seed,
        level: spec.level,
        view,
        complexity: spec.complexity,
        input_cloud,
        gt_cloud,
        gt_labels,
        gt_primitives,
        gt_mesh: mesh,
    })
}

/// Level assignment for a generated dataset; written as `simple`,
/// `moderate`, `hard` or `mixed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LevelChoice {
    Fixed(Level),
    /// Cycles simple, moderate, hard.
    Mixed,
}

impl From<LevelChoice> for String {
    fn from(l: LevelChoice) -> String {
        match l {
            LevelChoice::Fixed(l) => l.name().to_string(),
            LevelChoice::Mixed => "mixed".to_string(),
        }
    }
}

impl TryFrom<String> for LevelChoice {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl std::str::FromStr for LevelChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "mixed" {
            Ok(LevelChoice::Mixed)
        } else {
            s.parse().map(LevelChoice::Fixed)
        }
    }
}

/// Deterministic per-sample specs for a dataset.
pub fn dataset_specs(
    seed: u64,
    count: usize,
    level: LevelChoice,
    max_complexity: usize,
) -> Vec<SampleSpec> {
    let max_complexity = max_complexity.clamp(MIN_COMPLEXITY, MAX_COMPLEXITY);
    let mut rng = rng_for(seed, 3);
    (0..count)
        .map(|i| {
            let sample_seed: u64 = rng.random();
            let complexity = rng.random_range(MIN_COMPLEXITY..=max_complexity);
            let view_index = rng.random_range(0..8);
            let level = match level {
                LevelChoice::Fixed(l) => l,
                LevelChoice::Mixed => Level::ALL[i % 3],
            };
            SampleSpec {
                seed: sample_seed,
                complexity,
                level,
                view_index,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> PolyMesh {
        let mut planes = Vec::new();
        for axis in 0..3 {
            for (sign, d) in [(1.0, 1.0), (-1.0, 0.0)] {
                let mut n = [0.0; 3];
                n[axis] = sign;
                planes.push(CartesianPlane::new(Point3::from_array(n), d));
            }
        }
        polyhedron(&planes).unwrap()
    }

    #[test]
    fn complexity_six_is_a_box() {
        let m = gen_shape(11, 6).unwrap();
        assert_eq!(m.face_count(), 6);
        assert_eq!(m.vertices.len(), 8);
        assert!(m.is_watertight());
        assert!(m.face_planes.iter().all(|p| {
            let a = p.n.to_array();
            a.iter().filter(|c| c.abs() == 1.0).count() == 1
        }));
    }

    #[test]
    fn complexity_seven_adds_one_chamfer() {
        for seed in 0..10 {
            let m = gen_shape(seed, 7).unwrap();
            assert_eq!(m.face_count(), 7);
            assert!(m.is_watertight());
            // Euler characteristic of a sphere-like surface.
            let edges: usize = m.faces.iter().map(|f| f.len()).sum::<usize>() / 2;
            assert_eq!(
                m.vertices.len() as i64 - edges as i64 + m.face_count() as i64,
                2
            );
        }
    }

    #[test]
    fn shapes_are_deterministic_and_valid() {
        for c in [6, 9, 14, 20, 30] {
            let a = gen_shape(42, c).unwrap();
            let b = gen_shape(42, c).unwrap();
            assert_eq!(a.vertices, b.vertices);
            assert_eq!(a.face_count(), c);
            assert!(a.is_watertight());
            assert!(a.max_planarity_error() < 1e-7);
        }
        assert_eq!(gen_shape(1, 5), Err(SynthError::BadComplexity(5)));
    }

    #[test]
    fn box_sampling_is_area_proportional() {
        let m = unit_box();
        let (pts, labels) = sample_surface(&m, 6000, 5);
        let mut counts = [0usize; 6];
        for &l in &labels {
            counts[l] += 1;
        }
        // Binomial(6000, 1/6): sigma ~ 28.9.
        let sigma = (6000.0f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for c in counts {
            assert!((c as f64 - 1000.0).abs() < 3.0 * sigma, "{counts:?}");
        }
        for (p, &l) in pts.iter().zip(&labels) {
            assert!(m.face_planes[l].signed_distance(*p).abs() < 1e-9);
        }
    }

    #[test]
    fn tiny_sampling_requests() {
        let m = unit_box();
        let (p, l) = sample_surface(&m, 1, 0);
        assert_eq!((p.len(), l.len()), (1, 1));
        assert!(m.face_planes[l[0]].signed_distance(p[0]).abs() < 1e-12);
        let (p, l) = sample_surface(&m, 0, 0);
        assert!(p.is_empty() && l.is_empty());
    }

    #[test]
    fn occlusion_counts_and_bottom_removal() {
        let m = unit_box();
        let (pts, _) = sample_surface(&m, 8192, 9);
        assert_eq!(
            occlusion_survivors(&pts, Point3::new(0.0, 0.0, 1.0), 0.25).len(),
            6144
        );
        let view = Point3::new(0.0, 0.0, 1.0);
        for ratio in [0.5, 0.75] {
            let keep = occlusion_survivors(&pts, view, ratio);
            assert!(
                keep.iter().all(|&i| pts[i].z > 0.0),
                "bottom face survived at {ratio}"
            );
            let out = occlude(&pts, view, ratio).unwrap();
            assert_eq!(out.len(), INPUT_POINTS);
        }
    }

    #[test]
    fn occlusion_is_idempotent() {
        let m = unit_box();
        let (pts, _) = sample_surface(&m, 4000, 1);
        let view = views()[3];
        let once = occlusion_survivors(&pts, view, 0.5);
        let kept: Vec<Point3> = once.iter().map(|&i| pts[i]).collect();
        let again = occlusion_survivors(&pts, view, 0.5);
        assert_eq!(once, again);
        assert_eq!(kept.len(), 2000);
    }

    #[test]
    fn normalize_examples() {
        let m = unit_box();
        let n = m.normalize_unit_diagonal().unwrap();
        let (lo, hi) = bounding_box(&n.vertices).unwrap();
        assert!(((hi - lo).norm() - 1.0).abs() < 1e-12);
        assert!((lo + hi).norm() < 1e-12);
        let s = 1.0 / 3f64.sqrt();
        assert!((hi.x - s / 2.0).abs() < 1e-12);
        for (f, pl) in n.face_planes.iter().enumerate() {
            for &v in &n.faces[f] {
                assert!(pl.signed_distance(n.vertices[v]).abs() < 1e-12);
            }
        }
        let again = n.normalize_unit_diagonal().unwrap();
        for (a, b) in n.vertices.iter().zip(&again.vertices) {
            assert!(a.distance(*b) < 1e-9);
        }
        let same = vec![Point3::new(1.0, 2.0, 3.0); 5];
        assert_eq!(
            same.normalize_unit_diagonal(),
            Err(SynthError::DegenerateExtent)
        );
    }

    #[test]
    fn sample_invariants() {
        let spec = SampleSpec {
            seed: 77,
            complexity: 10,
            level: Level::Moderate,
            view_index: 2,
        };
        let s = generate_sample(&spec).unwrap();
        assert_eq!(s.input_cloud.len(), INPUT_POINTS);
        assert_eq!(s.gt_cloud.len(), GT_POINTS);
        let total: usize = s.gt_primitives.iter().map(|p| p.points.len()).sum();
        assert_eq!(total, GT_POINTS);
        for (p, &l) in s.gt_cloud.iter().zip(&s.gt_labels) {
            let plane = crate::geom::polar_to_cartesian(&s.gt_primitives[l].plane);
            assert!(plane.signed_distance(*p).abs() < 1e-7);
        }
        assert_eq!(generate_sample(&spec).unwrap(), s);
    }

    #[test]
    fn dataset_specs_are_deterministic() {
        let a = dataset_specs(1, 10, LevelChoice::Fixed(Level::Hard), 12);
        assert_eq!(a, dataset_specs(1, 10, LevelChoice::Fixed(Level::Hard), 12));
        assert!(a
            .iter()
            .all(|s| s.level == Level::Hard && (6..=12).contains(&s.complexity)));
    }
}
