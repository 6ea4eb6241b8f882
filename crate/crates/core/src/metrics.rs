//! Reconstruction metrics on meshes and primitive sets.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{CartesianPlane, PlanePrimitive, Point3};
use crate::matchloss::hungarian;
use crate::mesh::PolyMesh;
use crate::spatial::PointIndex;
use crate::synth::{polyhedron, sample_surface};

/// Surface samples per mesh.
pub const METRIC_SAMPLES: usize = 10_000;
/// Reported CD and HD are raw values times this.
pub const REPORT_SCALE: f64 = 100.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mesh has no surface area")]
    EmptyMesh,
    #[error("empty primitive set")]
    EmptySet,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Raw (unscaled) surface metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMetrics {
    pub cd: f64,
    pub hd: f64,
    pub nc: f64,
}

impl SurfaceMetrics {
    /// CD and HD times [`REPORT_SCALE`]; NC unchanged.
    pub fn reported(&self) -> SurfaceMetrics {
        SurfaceMetrics {
            cd: self.cd * REPORT_SCALE,
            hd: self.hd * REPORT_SCALE,
            nc: self.nc,
        }
    }
}

/// Area-weighted surface samples with the normal of the face each lies on.
pub fn sample_with_normals(
    mesh: &PolyMesh,
    n: usize,
    seed: u64,
) -> Result<(Vec<Point3>, Vec<Point3>)> {
    if mesh.faces.is_empty() || mesh.total_area() <= 0.0 {
        return Err(MetricsError::EmptyMesh);
    }
    let (pts, faces) = sample_surface(mesh, n, seed);
    let normals = faces.iter().map(|&f| mesh.face_planes[f].n).collect();
    Ok((pts, normals))
}

/// Nearest counterpart index and distance for every point of `a` in `b`.
fn nearest_all(a: &[Point3], b: &[Point3]) -> Vec<(usize, f64)> {
    let index = PointIndex::new(b);
    a.par_iter().map(|&p| index.nearest(p)).collect()
}

/// CD, HD and NC between two sampled surfaces.
pub fn point_metrics(a: &[Point3], na: &[Point3], b: &[Point3], nb: &[Point3]) -> SurfaceMetrics {
    let ab = nearest_all(a, b);
    let ba = nearest_all(b, a);
    let mean = |v: &[(usize, f64)]| v.iter().map(|x| x.1).sum::<f64>() / v.len() as f64;
    let max = |v: &[(usize, f64)]| v.iter().map(|x| x.1).fold(0.0, f64::max);
    let nc = |from: &[Point3], to: &[Point3], nn: &[(usize, f64)]| {
        nn.iter()
            .zip(from)
            .map(|(&(j, _), n)| n.dot(to[j]).abs().min(1.0))
            .sum::<f64>()
            / nn.len() as f64
    };
    SurfaceMetrics {
        cd: 0.5 * (mean(&ab) + mean(&ba)),
        hd: max(&ab).max(max(&ba)),
        nc: 0.5 * (nc(na, nb, &ab) + nc(nb, na, &ba)),
    }
}

/// Raw CD, HD and NC between two meshes from `n` samples each; both meshes
/// use the same sampling seed.
pub fn surface_metrics(
    pred: &PolyMesh,
    gt: &PolyMesh,
    n: usize,
    seed: u64,
) -> Result<SurfaceMetrics> {
    let (a, na) = sample_with_normals(pred, n, seed)?;
    let (b, nb) = sample_with_normals(gt, n, seed)?;
    Ok(point_metrics(&a, &na, &b, &nb))
}

/// Distance from `p` to the triangle `abc`.
pub fn point_triangle_distance(p: Point3, a: Point3, b: Point3, c: Point3) -> f64 {
    // Closest-point classification over the triangle's Voronoi regions.
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return p.distance(a);
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return p.distance(b);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return p.distance(a + ab * v);
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return p.distance(c);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return p.distance(a + ac * w);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return p.distance(b + (c - b) * w);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    p.distance(a + ab * v + ac * w)
}

/// Distance from each point to the nearest point of the mesh surface.
pub fn point_mesh_distances(points: &[Point3], mesh: &PolyMesh) -> Vec<f64> {
    let tris: Vec<[Point3; 3]> = mesh
        .triangles()
        .iter()
        .map(|(t, _)| t.map(|i| mesh.vertices[i]))
        .collect();
    points
        .par_iter()
        .map(|&p| {
            tris.iter()
                .map(|t| point_triangle_distance(p, t[0], t[1], t[2]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Chamfer distance measured against surfaces rather than samples: the mean
/// distance of `gt_points` to `pred`'s surface and of `n` samples of `pred`
/// to `gt`'s surface, averaged. Free of the sampling-density floor of
/// point-to-point chamfer.
pub fn surface_chamfer(
    pred: &PolyMesh,
    gt: &PolyMesh,
    gt_points: &[Point3],
    n: usize,
    seed: u64,
) -> Result<f64> {
    let (samples, _) = sample_with_normals(pred, n, seed)?;
    if gt.faces.is_empty() || gt_points.is_empty() {
        return Err(MetricsError::EmptyMesh);
    }
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    Ok(0.5
        * (mean(point_mesh_distances(gt_points, pred)) + mean(point_mesh_distances(&samples, gt))))
}

/// Mean `|cos|` between matched primitive normals. Primitives are paired by
/// the assignment minimizing total normal angle; pairs with an empty side
/// are not counted.
pub fn nc_prim(pred: &[PlanePrimitive], gt: &[PlanePrimitive]) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let n = pred.len().max(gt.len());
    let normals = |v: &[PlanePrimitive]| v.iter().map(|p| p.plane.normal()).collect::<Vec<_>>();
    let (pn, gn) = (normals(pred), normals(gt));
    let mut cost = vec![0.0; n * n];
    for i in 0..gt.len() {
        for j in 0..pred.len() {
            cost[i * n + j] = gn[i].dot(pn[j]).abs().min(1.0).acos();
        }
    }
    let sigma = hungarian(&cost, n).expect("square finite cost matrix");
    let pairs: Vec<f64> = (0..gt.len())
        .filter(|&i| sigma[i] < pred.len())
        .map(|i| gn[i].dot(pn[sigma[i]]).abs().min(1.0))
        .collect();
    Ok(pairs.iter().sum::<f64>() / pairs.len() as f64)
}

/// Axis-aligned cube centered at the origin with unit diagonal.
pub fn failure_stand_in() -> PolyMesh {
    let h = 0.5 / 3f64.sqrt();
    let planes: Vec<CartesianPlane> = (0..3)
        .flat_map(|axis| {
            [1.0, -1.0].map(|s| {
                let mut n = [0.0; 3];
                n[axis] = s;
                CartesianPlane::new(Point3::from_array(n), h)
            })
        })
        .collect();
    polyhedron(&planes).expect("cube is a valid polyhedron")
}

/// Per-sample evaluation row. CD and HD are reported (scaled) values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample: String,
    pub failed: bool,
    pub cd: f64,
    pub hd: f64,
    pub nc: f64,
    pub nc_prim: Option<f64>,
    pub faces: usize,
    pub vertices: usize,
}

/// Scores one reconstruction; `None` marks a failure, which is scored using
/// the unit-diagonal cube in place of the reconstruction.
pub fn evaluate(
    sample: &str,
    pred: Option<&PolyMesh>,
    gt: &PolyMesh,
    nc_prim: Option<f64>,
    n: usize,
    seed: u64,
) -> Result<EvalRecord> {
    let usable = pred.filter(|m| !m.faces.is_empty() && m.total_area() > 0.0);
    let stand_in;
    let mesh = match usable {
        Some(m) => m,
        None => {
            stand_in = failure_stand_in();
            &stand_in
        }
    };
    let m = surface_metrics(mesh, gt, n, seed)?.reported();
    Ok(EvalRecord {
        sample: sample.to_string(),
        failed: usable.is_none(),
        cd: m.cd,
        hd: m.hd,
        nc: m.nc,
        nc_prim,
        faces: usable.map_or(0, |m| m.face_count()),
        vertices: usable.map_or(0, |m| m.vertices.len()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub samples: usize,
    pub cd: f64,
    pub hd: f64,
    pub nc: f64,
    /// Mean over records that have it.
    pub nc_prim: Option<f64>,
    /// Failed samples as a percentage.
    pub fr: f64,
    pub faces: f64,
    pub vertices: f64,
}

pub fn aggregate(records: &[EvalRecord]) -> Aggregate {
    let n = records.len().max(1) as f64;
    let mean = |f: fn(&EvalRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let prim: Vec<f64> = records.iter().filter_map(|r| r.nc_prim).collect();
    Aggregate {
        samples: records.len(),
        cd: mean(|r| r.cd),
        hd: mean(|r| r.hd),
        nc: mean(|r| r.nc),
        nc_prim: (!prim.is_empty()).then(|| prim.iter().sum::<f64>() / prim.len() as f64),
        fr: 100.0 * records.iter().filter(|r| r.failed).count() as f64 / n,
        faces: mean(|r| r.faces as f64),
        vertices: mean(|r| r.vertices as f64),
    }
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub aggregate: Aggregate,
    pub samples: Vec<EvalRecord>,
}

impl Report {
    pub fn new(samples: Vec<EvalRecord>) -> Self {
        Self {
            format_version: REPORT_FORMAT_VERSION,
            aggregate: aggregate(&samples),
            samples,
        }
    }

    pub fn write_json(&self, w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// One row per sample followed by an `ALL` row with the aggregate; the
    /// `failed` column of the aggregate row holds FR.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "sample", "failed", "cd", "hd", "nc", "nc_prim", "faces", "vertices",
        ])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for r in &self.samples {
            out.write_record([
                r.sample.clone(),
                u8::from(r.failed).to_string(),
                format!("{:.6}", r.cd),
                format!("{:.6}", r.hd),
                format!("{:.6}", r.nc),
                opt(r.nc_prim),
                r.faces.to_string(),
                r.vertices.to_string(),
            ])?;
        }
        let a = &self.aggregate;
        out.write_record([
            "ALL".to_string(),
            format!("{:.2}", a.fr),
            format!("{:.6}", a.cd),
            format!("{:.6}", a.hd),
            format!("{:.6}", a.nc),
            opt(a.nc_prim),
            format!("{:.2}", a.faces),
            format!("{:.2}", a.vertices),
        ])?;
        out.flush()?;
        Ok(())
    }
}
