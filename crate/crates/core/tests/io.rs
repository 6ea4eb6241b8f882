use parcomp_core::assembly::{assemble_mesh, AssemblyParams};
use parcomp_core::io::*;
use parcomp_core::synth::{generate_sample, Level, SampleSpec};
use parcomp_core::Point3;
use tempfile::tempdir;

fn sample() -> parcomp_core::Sample {
    generate_sample(&SampleSpec {
        seed: 5,
        complexity: 9,
        level: Level::Moderate,
        view_index: 2,
    })
    .unwrap()
}

#[test]
fn ply_round_trip_is_exact() {
    let dir = tempdir().unwrap();
    let pts = vec![
        Point3::new(0.1, -2.0 / 3.0, 1e-17),
        Point3::new(f64::MIN_POSITIVE, 12345.678, -0.0),
    ];
    for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
        let p = dir.path().join("a.ply");
        write_ply(&p, &pts, Some(&[3, -1]), enc).unwrap();
        let (back, labels) = read_ply(&p).unwrap();
        assert_eq!(back, pts);
        assert_eq!(labels, Some(vec![3, -1]));
        write_ply(&p, &pts, None, enc).unwrap();
        assert_eq!(read_ply(&p).unwrap().1, None);
    }
    write_ply(&dir.path().join("b.ply"), &pts, None, PlyEncoding::Ascii).unwrap();
    let text = std::fs::read_to_string(dir.path().join("b.ply")).unwrap();
    assert!(text.contains("comment format_version 1"));
}

#[test]
fn foreign_ply_with_floats_is_read() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("f.ply");
    std::fs::write(&p, "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0.5 1\n2 3 4\n").unwrap();
    let (pts, labels) = read_ply(&p).unwrap();
    assert_eq!(
        pts,
        vec![Point3::new(0.0, 0.5, 1.0), Point3::new(2.0, 3.0, 4.0)]
    );
    assert!(labels.is_none());
}

#[test]
fn bad_files_are_format_errors() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("v.ply");
    std::fs::write(&p, "ply\nformat ascii 1.0\ncomment format_version 7\nelement vertex 0\nproperty double x\nproperty double y\nproperty double z\nend_header\n").unwrap();
    assert!(matches!(
        read_ply(&p),
        Err(IoError::Version { found: 7, .. })
    ));
    std::fs::write(&p, "not a ply").unwrap();
    assert!(matches!(read_ply(&p), Err(IoError::Format { .. })));
    assert!(matches!(
        read_ply(&dir.path().join("none.ply")),
        Err(IoError::Io { .. })
    ));

    let j = dir.path().join("x.json");
    std::fs::write(&j, r#"{"format_version": 2, "primitives": []}"#).unwrap();
    assert!(matches!(
        read_json::<PrimitiveSet>(&j),
        Err(IoError::Version { found: 2, .. })
    ));
    std::fs::write(&j, r#"{"primitives": []}"#).unwrap();
    assert!(matches!(
        read_json::<PrimitiveSet>(&j),
        Err(IoError::Format { .. })
    ));
}

#[test]
fn obj_keeps_polygons_and_planes() {
    let dir = tempdir().unwrap();
    let s = sample();
    let asm = assemble_mesh(&s.gt_primitives, &AssemblyParams::default()).unwrap();
    let p = dir.path().join("m.obj");
    write_obj(&p, &asm.mesh).unwrap();
    let back = read_obj(&p).unwrap();
    assert_eq!(back.vertices, asm.mesh.vertices);
    assert_eq!(back.faces, asm.mesh.faces);
    for (a, b) in back.face_planes.iter().zip(&asm.mesh.face_planes) {
        assert!(a.n.distance(b.n) < 1e-7 && (a.d - b.d).abs() < 1e-7);
    }
    assert!(std::fs::read_to_string(&p)
        .unwrap()
        .starts_with("# format_version 1\n"));

    std::fs::write(&p, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
    let quad = read_obj(&p).unwrap();
    assert_eq!(quad.faces, vec![vec![0, 1, 2, 3]]);
    assert_eq!(quad.face_planes[0].n, Point3::new(0.0, 0.0, 1.0));

    std::fs::write(&p, "v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n").unwrap();
    assert!(matches!(read_obj(&p), Err(IoError::Format { .. })));
}

#[test]
fn sample_directory_round_trip() {
    let dir = tempdir().unwrap();
    let s = sample();
    save_sample(dir.path(), &s).unwrap();
    let back = load_sample(dir.path()).unwrap();
    assert_eq!(back.input_cloud, s.input_cloud);
    assert_eq!(back.gt_cloud, s.gt_cloud);
    assert_eq!(back.gt_labels, s.gt_labels);
    assert_eq!(back.gt_primitives, s.gt_primitives);
    assert_eq!(back.gt_mesh.vertices, s.gt_mesh.vertices);
    assert_eq!(back.gt_mesh.faces, s.gt_mesh.faces);
    assert_eq!(
        (back.seed, back.level, back.complexity, back.view),
        (s.seed, s.level, s.complexity, s.view)
    );

    // Writing again gives identical bytes.
    let again = tempdir().unwrap();
    save_sample(again.path(), &back).unwrap();
    for f in [INPUT_FILE, GT_CLOUD_FILE, SAMPLE_FILE, GT_MESH_FILE] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(again.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn json_documents_carry_the_version() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("prims.json");
    let set = PrimitiveSet {
        primitives: sample().gt_primitives,
    };
    write_json(&p, &set).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
    assert_eq!(v["format_version"], 1);
    assert_eq!(read_json::<PrimitiveSet>(&p).unwrap(), set);
}
