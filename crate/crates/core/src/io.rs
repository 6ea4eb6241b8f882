//! File formats: PLY point clouds, OBJ meshes, JSON documents and sample
//! directories. Every file carries a format version.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ply_rs::parser::Parser;
use ply_rs::ply::{
    Addable, DefaultElement, ElementDef, Encoding, Ply, Property, PropertyDef, PropertyType,
    ScalarType,
};
use ply_rs::writer::Writer;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{CartesianPlane, PlanePrimitive, Point3, PolarPlane};
use crate::mesh::{polygon_vector_area, PolyMesh};
use crate::segment::Segmentation;
use crate::synth::{Level, LevelChoice, Sample, SampleSpec};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: format_version {found} is not supported (expected {FORMAT_VERSION})")]
    Version { path: PathBuf, found: u32 },
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, msg: impl ToString) -> IoError {
    IoError::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

/// Writes points (and optional per-point integer labels, `-1` for none).
pub fn write_ply(
    path: &Path,
    points: &[Point3],
    labels: Option<&[i32]>,
    encoding: PlyEncoding,
) -> Result<()> {
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = match encoding {
        PlyEncoding::Ascii => Encoding::Ascii,
        PlyEncoding::BinaryLittleEndian => Encoding::BinaryLittleEndian,
    };
    ply.header
        .comments
        .push(format!("format_version {FORMAT_VERSION}"));
    let mut vertex = ElementDef::new("vertex".to_string());
    for name in ["x", "y", "z"] {
        vertex.properties.add(PropertyDef::new(
            name.to_string(),
            PropertyType::Scalar(ScalarType::Double),
        ));
    }
    if labels.is_some() {
        vertex.properties.add(PropertyDef::new(
            "label".to_string(),
            PropertyType::Scalar(ScalarType::Int),
        ));
    }
    ply.header.elements.add(vertex);
    let rows = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut e = DefaultElement::new();
            e.insert("x".to_string(), Property::Double(p.x));
            e.insert("y".to_string(), Property::Double(p.y));
            e.insert("z".to_string(), Property::Double(p.z));
            if let Some(l) = labels {
                e.insert("label".to_string(), Property::Int(l[i]));
            }
            e
        })
        .collect();
    ply.payload.insert("vertex".to_string(), rows);
    let mut out = create(path)?;
    Writer::new()
        .write_ply(&mut out, &mut ply)
        .map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

fn check_version_comment(path: &Path, comments: &[String], prefix: &str) -> Result<()> {
    for c in comments {
        if let Some(v) = c.trim().strip_prefix(prefix) {
            let found: u32 = v
                .trim()
                .parse()
                .map_err(|_| format_err(path, format!("bad version comment `{c}`")))?;
            if found != FORMAT_VERSION {
                return Err(IoError::Version {
                    path: path.to_path_buf(),
                    found,
                });
            }
        }
    }
    Ok(())
}

/// Reads points and, when present, the `label` property.
pub fn read_ply(path: &Path) -> Result<(Vec<Point3>, Option<Vec<i32>>)> {
    let ply = Parser::<DefaultElement>::new()
        .read_ply(&mut open(path)?)
        .map_err(|e| format_err(path, e))?;
    check_version_comment(path, &ply.header.comments, "format_version")?;
    let rows = ply
        .payload
        .get("vertex")
        .ok_or_else(|| format_err(path, "no vertex element"))?;
    let scalar = |e: &DefaultElement, k: &str| -> Result<f64> {
        match e.get(k) {
            Some(Property::Double(v)) => Ok(*v),
            Some(Property::Float(v)) => Ok(*v as f64),
            Some(Property::Int(v)) => Ok(*v as f64),
            Some(Property::UInt(v)) => Ok(*v as f64),
            Some(Property::Short(v)) => Ok(*v as f64),
            Some(Property::UShort(v)) => Ok(*v as f64),
            Some(Property::Char(v)) => Ok(*v as f64),
            Some(Property::UChar(v)) => Ok(*v as f64),
            _ => Err(format_err(
                path,
                format!("vertex property `{k}` missing or not a scalar"),
            )),
        }
    };
    let mut points = Vec::with_capacity(rows.len());
    for e in rows {
        let p = Point3::new(scalar(e, "x")?, scalar(e, "y")?, scalar(e, "z")?);
        if !p.is_finite() {
            return Err(format_err(path, "non-finite coordinate"));
        }
        points.push(p);
    }
    let labels = match rows.first().map(|e| e.contains_key("label")) {
        Some(true) => Some(
            rows.iter()
                .map(|e| scalar(e, "label").map(|v| v as i32))
                .collect::<Result<_>>()?,
        ),
        _ => None,
    };
    Ok((points, labels))
}

/// Writes a polygon mesh; vertices use shortest round-trip formatting.
pub fn write_obj(path: &Path, mesh: &PolyMesh) -> Result<()> {
    let mut out = create(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(out, "# format_version {FORMAT_VERSION}")?;
        for v in &mesh.vertices {
            writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for f in &mesh.faces {
            write!(out, "f")?;
            for &i in f {
                write!(out, " {}", i + 1)?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    go().map_err(io_err(path))
}

/// Least-squares plane of a face loop: Newell normal through the vertex mean.
fn face_plane(loop_pts: &[Point3]) -> Option<CartesianPlane> {
    let n = polygon_vector_area(loop_pts).normalized()?;
    let c = loop_pts.iter().fold(Point3::ZERO, |a, &p| a + p) / loop_pts.len() as f64;
    Some(CartesianPlane::new(n, n.dot(c)))
}

/// Reads all objects of an OBJ file into one polygon mesh. Face planes are
/// refit from the vertices; zero-area faces are rejected.
pub fn read_obj(path: &Path) -> Result<PolyMesh> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    if let Some(line) = text
        .lines()
        .find(|l| l.trim_start().starts_with("# format_version"))
    {
        check_version_comment(
            path,
            &[line.trim_start()[1..].to_string()],
            "format_version",
        )?;
    }
    let opts = tobj::LoadOptions {
        single_index: true,
        triangulate: false,
        ..Default::default()
    };
    let (models, _) = tobj::load_obj_buf(&mut text.as_bytes(), &opts, |_| {
        Err(tobj::LoadError::GenericFailure)
    })
    .map_err(|e| format_err(path, e))?;
    let mut mesh = PolyMesh::default();
    for m in models {
        let base = mesh.vertices.len();
        let pos = &m.mesh.positions;
        mesh.vertices
            .extend(pos.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])));
        let arities: Vec<u32> = if m.mesh.face_arities.is_empty() {
            vec![3; m.mesh.indices.len() / 3]
        } else {
            m.mesh.face_arities.clone()
        };
        let mut at = 0;
        for a in arities {
            let face: Vec<usize> = m.mesh.indices[at..at + a as usize]
                .iter()
                .map(|&i| base + i as usize)
                .collect();
            at += a as usize;
            let pts: Vec<Point3> = face.iter().map(|&i| mesh.vertices[i]).collect();
            let plane = face_plane(&pts).ok_or_else(|| {
                format_err(path, format!("face {} has zero area", mesh.faces.len()))
            })?;
            mesh.faces.push(face);
            mesh.face_planes.push(plane);
        }
    }
    Ok(mesh)
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    format_version: u32,
    #[serde(flatten)]
    body: T,
}

/// Writes `{"format_version": 1, ...value}` as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(
        &mut out,
        &Versioned {
            format_version: FORMAT_VERSION,
            body: value,
        },
    )
    .map_err(|e| format_err(path, e))?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let v: Versioned<T> = serde_json::from_reader(open(path)?).map_err(|e| format_err(path, e))?;
    if v.format_version != FORMAT_VERSION {
        return Err(IoError::Version {
            path: path.to_path_buf(),
            found: v.format_version,
        });
    }
    Ok(v.body)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSet {
    pub primitives: Vec<PlanePrimitive>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationDoc {
    pub points: usize,
    pub segmentation: Segmentation,
}

/// Per-sample metadata stored next to the clouds and mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SampleMeta {
    seed: u64,
    complexity: usize,
    level: Level,
    view: Point3,
    planes: Vec<PolarPlane>,
}

pub const INPUT_FILE: &str = "input.ply";
pub const GT_CLOUD_FILE: &str = "gt.ply";
pub const GT_MESH_FILE: &str = "gt_mesh.obj";
pub const SAMPLE_FILE: &str = "sample.json";

/// Writes `input.ply`, `gt.ply` (labelled), `gt_mesh.obj` and `sample.json`.
pub fn save_sample(dir: &Path, s: &Sample) -> Result<()> {
    let labels: Vec<i32> = s.gt_labels.iter().map(|&l| l as i32).collect();
    write_ply(
        &dir.join(INPUT_FILE),
        &s.input_cloud,
        None,
        PlyEncoding::Ascii,
    )?;
    write_ply(
        &dir.join(GT_CLOUD_FILE),
        &s.gt_cloud,
        Some(&labels),
        PlyEncoding::Ascii,
    )?;
    write_obj(&dir.join(GT_MESH_FILE), &s.gt_mesh)?;
    let meta = SampleMeta {
        seed: s.seed,
        complexity: s.complexity,
        level: s.level,
        view: s.view,
        planes: s.gt_primitives.iter().map(|p| p.plane).collect(),
    };
    write_json(&dir.join(SAMPLE_FILE), &meta)
}

pub fn load_sample(dir: &Path) -> Result<Sample> {
    let meta: SampleMeta = read_json(&dir.join(SAMPLE_FILE))?;
    let (input_cloud, _) = read_ply(&dir.join(INPUT_FILE))?;
    let gt_path = dir.join(GT_CLOUD_FILE);
    let (gt_cloud, labels) = read_ply(&gt_path)?;
    let labels = labels.ok_or_else(|| format_err(&gt_path, "missing `label` property"))?;
    let mut gt_primitives: Vec<PlanePrimitive> = meta
        .planes
        .iter()
        .map(|&plane| PlanePrimitive {
            plane,
            points: Vec::new(),
            confidence: 1.0,
        })
        .collect();
    let mut gt_labels = Vec::with_capacity(labels.len());
    for (&p, &l) in gt_cloud.iter().zip(&labels) {
        let prim = usize::try_from(l)
            .ok()
            .filter(|&l| l < gt_primitives.len())
            .ok_or_else(|| format_err(&gt_path, format!("label {l} out of range")))?;
        gt_primitives[prim].points.push(p);
        gt_labels.push(prim);
    }
    Ok(Sample {
        seed: meta.seed,
        level: meta.level,
        view: meta.view,
        complexity: meta.complexity,
        input_cloud,
        gt_cloud,
        gt_labels,
        gt_primitives,
        gt_mesh: read_obj(&dir.join(GT_MESH_FILE))?,
    })
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Directory name relative to the dataset root.
    pub name: String,
    pub spec: SampleSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub level: LevelChoice,
    pub max_complexity: usize,
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn sample_name(i: usize) -> String {
        format!("sample_{i:05}")
    }
}
