//! Polygonal surface assembly from plane primitives.
//!
//! Each primitive's inliers give a convex footprint on its plane. Footprints
//! are grown by a small margin and then clipped by the planes of the
//! primitives they meet, so faces of adjacent primitives end on their common
//! edge and weld into shared vertices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{CartesianPlane, PlanePrimitive, Point3};
use crate::mesh::{clip_polygon, plane_basis, polygon_area, polygon_vector_area, PolyMesh};

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("primitive footprint is degenerate ({0} usable points)")]
    DegenerateFootprint(usize),
    #[error("no primitives selected")]
    EmptySelection,
    #[error("every primitive footprint was degenerate or clipped away")]
    NoFaces,
}

pub type Result<T, E = AssemblyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssemblyParams {
    /// Minimum angle between normals for two planes to clip each other, degrees.
    pub min_dihedral: f64,
    /// Distance within which a hull edge counts as lying on a neighbor
    /// plane, and growth used to decide whether two footprints meet.
    pub margin: f64,
    /// Outward growth of each footprint before clipping by neighbor planes.
    pub reach: f64,
    pub weld_tol: f64,
}

impl Default for AssemblyParams {
    fn default() -> Self {
        Self {
            min_dihedral: 15.0,
            margin: 0.05,
            reach: 0.2,
            weld_tol: 1e-6,
        }
    }
}

/// A planar polygon on a primitive's plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Footprint {
    pub plane: CartesianPlane,
    /// Counter-clockwise around `plane.n`.
    pub vertices: Vec<Point3>,
    /// Centroid of the inliers that produced the polygon.
    pub centroid: Point3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub faces: usize,
    pub vertices: usize,
    pub triangles: usize,
    /// Primitives that produced no face.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub mesh: PolyMesh,
    pub triangulated: PolyMesh,
    pub report: AssemblyReport,
}

/// Convex hull (counter-clockwise, no collinear vertices) by monotone chain.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Convex footprint of the inliers projected onto the primitive's plane.
pub fn polygonize_primitive(p: &PlanePrimitive) -> Result<Footprint> {
    let plane = p.cartesian();
    let n = p.points.len();
    if n < 3 {
        return Err(AssemblyError::DegenerateFootprint(n));
    }
    let (e1, e2) = plane_basis(plane.n);
    let origin = plane.n * plane.d;
    let uv: Vec<[f64; 2]> = p
        .points
        .iter()
        .map(|&q| [(q - origin).dot(e1), (q - origin).dot(e2)])
        .collect();
    let hull = convex_hull_2d(&uv);
    let vertices: Vec<Point3> = hull
        .iter()
        .map(|&[u, v]| origin + e1 * u + e2 * v)
        .collect();
    let extent = uv
        .iter()
        .map(|&[u, v]| u.abs().max(v.abs()))
        .fold(0.0, f64::max)
        .max(1e-300);
    if hull.len() < 3 || polygon_area(&vertices) <= 1e-12 * extent * extent {
        return Err(AssemblyError::DegenerateFootprint(hull.len()));
    }
    let centroid = p.points.iter().fold(Point3::ZERO, |a, &q| a + q) / n as f64;
    Ok(Footprint {
        plane,
        vertices,
        centroid: plane.project(centroid),
    })
}

/// Grows a convex footprint by roughly `margin` in every in-plane direction.
fn expand(f: &Footprint, margin: f64) -> Vec<Point3> {
    if margin <= 0.0 {
        return f.vertices.clone();
    }
    let (e1, e2) = plane_basis(f.plane.n);
    let origin = f.plane.n * f.plane.d;
    let mut uv = Vec::with_capacity(f.vertices.len() * 8);
    for &v in &f.vertices {
        let (u, w) = ((v - origin).dot(e1), (v - origin).dot(e2));
        for k in 0..8 {
            let a = k as f64 * std::f64::consts::FRAC_PI_4;
            // Octagon circumscribing a circle of radius `margin`.
            let r = margin / (std::f64::consts::PI / 8.0).cos();
            uv.push([u + r * a.cos(), w + r * a.sin()]);
        }
    }
    convex_hull_2d(&uv)
        .into_iter()
        .map(|[u, w]| origin + e1 * u + e2 * w)
        .collect()
}

fn crosses(poly: &[Point3], plane: &CartesianPlane, eps: f64) -> bool {
    let (mut lo, mut hi) = (false, false);
    for &p in poly {
        let d = plane.signed_distance(p);
        lo |= d < -eps;
        hi |= d > eps;
    }
    lo && hi
}

/// Removes consecutive vertices closer than `tol`.
fn dedup_loop(poly: Vec<Point3>, tol: f64) -> Vec<Point3> {
    let mut out: Vec<Point3> = Vec::with_capacity(poly.len());
    for p in poly {
        if out.last().is_none_or(|q| q.distance(p) > tol) {
            out.push(p);
        }
    }
    while out.len() > 1 && out[0].distance(out[out.len() - 1]) <= tol {
        out.pop();
    }
    out
}

/// Clips every footprint by the planes of the footprints it meets.
///
/// Two footprints meet when their normals differ by more than the dihedral
/// threshold and each (grown by the margin) crosses the other's plane. A
/// footprint is grown by the reach, then keeps the side of each neighbor
/// plane that holds its inlier centroid. Hull edges away from every
/// neighbor plane are free boundaries and stay where they were. An edge is
/// bound when both ends are within the margin of one neighbor plane, or
/// when it is no longer than the reach and each end is near some neighbor
/// plane (the cut-off corner between two neighbors, sized by the sample
/// spacing rather than the margin). Footprints that vanish
/// are returned as `None`.
pub fn clip_mutual(footprints: &[Footprint], params: &AssemblyParams) -> Vec<Option<Vec<Point3>>> {
    let cos_max = params.min_dihedral.to_radians().cos();
    let grown: Vec<Vec<Point3>> = footprints
        .iter()
        .map(|f| expand(f, params.margin))
        .collect();
    let eps = 1e-12;
    (0..footprints.len())
        .map(|i| {
            let fi = &footprints[i];
            let neighbors: Vec<CartesianPlane> = footprints
                .iter()
                .enumerate()
                .filter(|&(j, fj)| {
                    j != i
                        && fi.plane.n.dot(fj.plane.n).abs() <= cos_max
                        && crosses(&grown[i], &fj.plane, eps)
                        && crosses(&grown[j], &fi.plane, eps)
                        && fj.plane.signed_distance(fi.centroid).abs() > eps
                })
                .map(|(_, fj)| {
                    if fj.plane.signed_distance(fi.centroid) < 0.0 {
                        fj.plane
                    } else {
                        CartesianPlane {
                            n: -fj.plane.n,
                            d: -fj.plane.d,
                        }
                    }
                })
                .collect();
            if neighbors.is_empty() {
                return Some(fi.vertices.clone());
            }
            let mut poly = expand(fi, params.reach);
            for keep in &neighbors {
                poly = clip_polygon(&poly, keep);
            }
            let m = fi.vertices.len();
            for k in 0..m {
                let (a, b) = (fi.vertices[k], fi.vertices[(k + 1) % m]);
                let near =
                    |p: Point3, pl: &CartesianPlane| pl.signed_distance(p).abs() <= params.margin;
                let bound = neighbors.iter().any(|pl| near(a, pl) && near(b, pl))
                    || (a.distance(b) <= params.reach
                        && neighbors.iter().any(|pl| near(a, pl))
                        && neighbors.iter().any(|pl| near(b, pl)));
                if bound || poly.len() < 3 {
                    continue;
                }
                // Counter-clockwise loop: the outward edge normal is edge x n.
                if let Some(out) = (b - a).cross(fi.plane.n).normalized() {
                    poly = clip_polygon(
                        &poly,
                        &CartesianPlane {
                            n: out,
                            d: out.dot(a),
                        },
                    );
                }
            }
            let poly = dedup_loop(poly, params.weld_tol);
            (poly.len() >= 3 && polygon_area(&poly) > 1e-14).then_some(poly)
        })
        .collect()
}

/// Polygon soup from selected primitives, with welded vertices and its fan
/// triangulation.
pub fn assemble_mesh(primitives: &[PlanePrimitive], params: &AssemblyParams) -> Result<Assembly> {
    if primitives.is_empty() {
        return Err(AssemblyError::EmptySelection);
    }
    let footprints: Vec<Footprint> = primitives
        .iter()
        .filter_map(|p| polygonize_primitive(p).ok())
        .collect();
    let clipped = clip_mutual(&footprints, params);
    let polygons: Vec<(Vec<Point3>, CartesianPlane)> = clipped
        .into_iter()
        .zip(&footprints)
        .filter_map(|(poly, f)| {
            let mut poly = poly?;
            if polygon_vector_area(&poly).dot(f.plane.n) < 0.0 {
                poly.reverse();
            }
            Some((poly, f.plane))
        })
        .collect();
    let mesh = PolyMesh::from_polygons(&polygons, params.weld_tol);
    if mesh.faces.is_empty() {
        return Err(AssemblyError::NoFaces);
    }
    let triangulated = mesh.triangulated();
    let report = AssemblyReport {
        faces: mesh.face_count(),
        vertices: mesh.vertices.len(),
        triangles: triangulated.face_count(),
        dropped: primitives.len() - mesh.face_count(),
    };
    Ok(Assembly {
        mesh,
        triangulated,
        report,
    })
}
