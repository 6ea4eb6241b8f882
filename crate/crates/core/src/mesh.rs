//! Polygon meshes made of planar faces.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geom::{CartesianPlane, Point3};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolyMesh {
    pub vertices: Vec<Point3>,
    /// Vertex loops, counter-clockwise seen from the side `face_planes[i].n` points to.
    pub faces: Vec<Vec<usize>>,
    /// Supporting plane of each face.
    pub face_planes: Vec<CartesianPlane>,
}

impl PolyMesh {
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_points(&self, f: usize) -> Vec<Point3> {
        self.faces[f].iter().map(|&v| self.vertices[v]).collect()
    }

    /// Fan triangulation from each face's first vertex, tagged with the face index.
    pub fn triangles(&self) -> Vec<([usize; 3], usize)> {
        let mut out = Vec::new();
        for (f, face) in self.faces.iter().enumerate() {
            for k in 1..face.len().saturating_sub(1) {
                out.push(([face[0], face[k], face[k + 1]], f));
            }
        }
        out
    }

    /// Same geometry with every face split into a triangle fan.
    pub fn triangulated(&self) -> PolyMesh {
        let tris = self.triangles();
        PolyMesh {
            vertices: self.vertices.clone(),
            faces: tris.iter().map(|(t, _)| t.to_vec()).collect(),
            face_planes: tris.iter().map(|&(_, f)| self.face_planes[f]).collect(),
        }
    }

    pub fn face_area(&self, f: usize) -> f64 {
        polygon_area(&self.face_points(f))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Every undirected edge is used by exactly two faces, once per direction.
    pub fn is_watertight(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for face in &self.faces {
            for k in 0..face.len() {
                let e = (face[k], face[(k + 1) % face.len()]);
                *directed.entry(e).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &count)| count == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Largest distance of any face vertex from its supporting plane.
    pub fn max_planarity_error(&self) -> f64 {
        self.faces
            .iter()
            .zip(&self.face_planes)
            .flat_map(|(face, plane)| face.iter().map(move |&v| (v, plane)))
            .map(|(v, plane)| plane.signed_distance(self.vertices[v]).abs())
            .fold(0.0, f64::max)
    }

    /// Builds a mesh from independent polygon loops, merging vertices closer
    /// than `tol`. Degenerate loops (fewer than 3 distinct vertices) are skipped.
    pub fn from_polygons(polygons: &[(Vec<Point3>, CartesianPlane)], tol: f64) -> PolyMesh {
        let mut welder = Welder::new(tol);
        let mut mesh = PolyMesh::default();
        for (poly, plane) in polygons {
            let mut loop_ids: Vec<usize> = poly.iter().map(|&p| welder.insert(p)).collect();
            loop_ids.dedup();
            while loop_ids.len() > 1 && loop_ids.first() == loop_ids.last() {
                loop_ids.pop();
            }
            if loop_ids.len() >= 3 {
                mesh.faces.push(loop_ids);
                mesh.face_planes.push(*plane);
            }
        }
        mesh.vertices = welder.points;
        mesh
    }
}

/// Vertex welding on a hashed grid of cell size `tol`.
struct Welder {
    tol: f64,
    points: Vec<Point3>,
    grid: HashMap<[i64; 3], Vec<usize>>,
}

impl Welder {
    fn new(tol: f64) -> Self {
        Self {
            tol,
            points: Vec::new(),
            grid: HashMap::new(),
        }
    }

    fn cell(&self, p: Point3) -> [i64; 3] {
        [
            (p.x / self.tol).floor() as i64,
            (p.y / self.tol).floor() as i64,
            (p.z / self.tol).floor() as i64,
        ]
    }

    fn insert(&mut self, p: Point3) -> usize {
        let c = self.cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if let Some(&i) = ids
                            .iter()
                            .find(|&&i| self.points[i].distance(p) <= self.tol)
                        {
                            return i;
                        }
                    }
                }
            }
        }
        let id = self.points.len();
        self.points.push(p);
        self.grid.entry(c).or_default().push(id);
        id
    }
}

/// Area of a planar polygon loop (any orientation).
pub fn polygon_area(poly: &[Point3]) -> f64 {
    polygon_vector_area(poly).norm()
}

/// Half the sum of edge cross products: normal times area.
pub fn polygon_vector_area(poly: &[Point3]) -> Point3 {
    if poly.len() < 3 {
        return Point3::ZERO;
    }
    let o = poly[0];
    let mut acc = Point3::ZERO;
    for k in 1..poly.len() - 1 {
        acc += (poly[k] - o).cross(poly[k + 1] - o);
    }
    acc * 0.5
}

/// Sutherland-Hodgman clip of a convex polygon keeping `n . x <= d`.
pub fn clip_polygon(poly: &[Point3], keep_below: &CartesianPlane) -> Vec<Point3> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let da = keep_below.signed_distance(a);
        let db = keep_below.signed_distance(b);
        if da <= 0.0 {
            out.push(a);
        }
        if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
            let t = da / (da - db);
            out.push(a + (b - a) * t);
        }
    }
    out
}

/// Large square on `plane`, counter-clockwise around its normal.
pub fn plane_square(plane: &CartesianPlane, half_size: f64) -> Vec<Point3> {
    let (e1, e2) = plane_basis(plane.n);
    let c = plane.n * plane.d;
    vec![
        c + (e1 + e2) * -half_size,
        c + (e1 - e2) * half_size,
        c + (e1 + e2) * half_size,
        c + (e2 - e1) * half_size,
    ]
}

/// Orthonormal in-plane axes with `e1 x e2 = n`.
pub fn plane_basis(n: Point3) -> (Point3, Point3) {
    let e1 = n.any_orthonormal();
    let e2 = n.cross(e1);
    (e1, e2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square_mesh() -> PolyMesh {
        let z = CartesianPlane::new(Point3::new(0.0, 0.0, 1.0), 0.0);
        let sq = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        PolyMesh::from_polygons(&[(sq, z)], 1e-9)
    }

    #[test]
    fn square_area_and_triangles() {
        let m = unit_square_mesh();
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        assert_eq!(m.triangles().len(), 2);
        assert!(!m.is_watertight());
    }

    #[test]
    fn clip_halves_square() {
        let sq = unit_square_mesh().face_points(0);
        let cut = CartesianPlane::new(Point3::new(1.0, 0.0, 0.0), 0.5);
        let half = clip_polygon(&sq, &cut);
        assert!((polygon_area(&half) - 0.5).abs() < 1e-15);
        assert!(half.iter().all(|p| p.x <= 0.5 + 1e-15));
    }

    #[test]
    fn plane_square_orientation_follows_normal() {
        let plane = CartesianPlane::new(Point3::new(0.0, 0.6, 0.8), 0.3);
        let sq = plane_square(&plane, 2.0);
        let va = polygon_vector_area(&sq);
        assert!((va.norm() - 16.0).abs() < 1e-12);
        assert!(va.dot(plane.n) > 0.0);
        assert!(sq.iter().all(|&p| plane.signed_distance(p).abs() < 1e-12));
    }

    #[test]
    fn welding_merges_close_vertices() {
        let z = CartesianPlane::new(Point3::new(0.0, 0.0, 1.0), 0.0);
        let a = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let b = vec![
            Point3::new(1.0, 0.0, 1e-8),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, -1e-8),
        ];
        let m = PolyMesh::from_polygons(&[(a, z), (b, z)], 1e-6);
        assert_eq!(m.vertices.len(), 4);
    }
}
