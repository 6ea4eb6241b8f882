use parcomp_core::assembly::{assemble_mesh, AssemblyParams};
use parcomp_core::geom::{cartesian_to_polar, CartesianPlane, PlanePrimitive, Point3};
use parcomp_core::mesh::PolyMesh;
use parcomp_core::metrics::*;
use parcomp_core::synth::{generate_sample, Level, SampleSpec};
use proptest::prelude::*;

fn shifted(m: &PolyMesh, t: Point3) -> PolyMesh {
    PolyMesh {
        vertices: m.vertices.iter().map(|&v| v + t).collect(),
        faces: m.faces.clone(),
        face_planes: m
            .face_planes
            .iter()
            .map(|p| CartesianPlane::new(p.n, p.d + p.n.dot(t)))
            .collect(),
    }
}

fn sample(seed: u64) -> parcomp_core::synth::Sample {
    generate_sample(&SampleSpec {
        seed,
        complexity: 10,
        level: Level::Simple,
        view_index: 0,
    })
    .unwrap()
}

#[test]
fn mesh_against_itself() {
    let m = sample(3).gt_mesh;
    let s = surface_metrics(&m, &m, METRIC_SAMPLES, 7).unwrap();
    assert_eq!(
        s,
        SurfaceMetrics {
            cd: 0.0,
            hd: 0.0,
            nc: 1.0
        }
    );
}

#[test]
fn shifted_cube_hausdorff_matches_dense_oracle() {
    let a = failure_stand_in();
    let b = shifted(&a, Point3::new(0.1, 0.0, 0.0));
    let m = surface_metrics(&a, &b, METRIC_SAMPLES, 0).unwrap();
    // Oracle: exact point-to-surface distances from 1e5 samples per side.
    let dense = |x: &PolyMesh, y: &PolyMesh| {
        let (p, _) = sample_with_normals(x, 100_000, 99).unwrap();
        point_mesh_distances(&p, y).into_iter().fold(0.0, f64::max)
    };
    let oracle = dense(&a, &b).max(dense(&b, &a));
    assert!((oracle - 0.1).abs() < 1e-3, "oracle {oracle}");
    assert!(
        (m.hd - oracle).abs() < 0.05 * oracle,
        "hd {} oracle {oracle}",
        m.hd
    );
    assert!((m.reported().hd - 10.0).abs() < 0.5);
    assert!(m.cd > 0.0 && m.cd < m.hd);
}

#[test]
fn flipped_plane_normals_are_consistent() {
    let a = failure_stand_in();
    let mut b = a.clone();
    for p in &mut b.face_planes {
        *p = CartesianPlane::new(-p.n, -p.d);
    }
    let m = surface_metrics(&a, &b, 2000, 1).unwrap();
    assert_eq!(m.nc, 1.0);
    assert_eq!(m.cd, 0.0);
}

#[test]
fn empty_mesh_is_an_error() {
    let m = failure_stand_in();
    assert!(matches!(
        surface_metrics(&PolyMesh::default(), &m, 100, 0),
        Err(MetricsError::EmptyMesh)
    ));
    assert!(matches!(
        surface_metrics(&m, &PolyMesh::default(), 100, 0),
        Err(MetricsError::EmptyMesh)
    ));
}

fn prim_with_normal(n: Point3) -> PlanePrimitive {
    let plane = cartesian_to_polar(&CartesianPlane::new(n.normalized().unwrap(), 0.3)).unwrap();
    PlanePrimitive {
        plane,
        points: vec![],
        confidence: 1.0,
    }
}

#[test]
fn nc_prim_examples() {
    let normals = [
        Point3::new(1.0, 0.0, 0.0),
        Point3::new(0.0, 1.0, 0.0),
        Point3::new(0.0, 0.0, 1.0),
        Point3::new(1.0, 1.0, 1.0),
    ];
    let gt: Vec<_> = normals.iter().map(|&n| prim_with_normal(n)).collect();
    assert!((nc_prim(&gt, &gt).unwrap() - 1.0).abs() < 1e-12);

    // z rotated 90 degrees about y lands on x: any matching leaves one pair at cos 0.
    let mut pred = gt.clone();
    pred[2] = prim_with_normal(Point3::new(1.0, 0.0, 0.0));
    assert!((nc_prim(&pred, &gt).unwrap() - 0.75).abs() < 1e-12);

    // Order does not matter; extra predictions stay unmatched.
    let mut rev: Vec<_> = gt.iter().rev().cloned().collect();
    rev.push(prim_with_normal(Point3::new(0.3, -1.0, 0.2)));
    assert!((nc_prim(&rev, &gt).unwrap() - 1.0).abs() < 1e-12);

    assert!(matches!(nc_prim(&[], &gt), Err(MetricsError::EmptySet)));
}

#[test]
fn failure_rate_extremes() {
    let gts: Vec<_> = (0..4).map(sample).collect();
    let fail: Vec<_> = gts
        .iter()
        .enumerate()
        .map(|(i, s)| evaluate(&i.to_string(), None, &s.gt_mesh, None, 2000, 0).unwrap())
        .collect();
    let a = aggregate(&fail);
    assert_eq!(a.fr, 100.0);
    assert!(fail.iter().all(|r| r.failed && r.faces == 0));

    let ok: Vec<_> = gts
        .iter()
        .enumerate()
        .map(|(i, s)| {
            evaluate(
                &i.to_string(),
                Some(&s.gt_mesh),
                &s.gt_mesh,
                Some(1.0),
                2000,
                0,
            )
            .unwrap()
        })
        .collect();
    let a = aggregate(&ok);
    assert_eq!(a.fr, 0.0);
    assert_eq!(a.nc_prim, Some(1.0));
    assert_eq!(a.cd, 0.0);

    let mixed = aggregate(&[fail[0].clone(), ok[1].clone()]);
    assert_eq!(mixed.fr, 50.0);
    assert_eq!(mixed.nc_prim, Some(1.0));
}

#[test]
fn empty_prediction_counts_as_failure() {
    let s = sample(1);
    let r = evaluate("x", Some(&PolyMesh::default()), &s.gt_mesh, None, 1000, 0).unwrap();
    let stand_in = evaluate("x", None, &s.gt_mesh, None, 1000, 0).unwrap();
    assert!(r.failed);
    assert_eq!(r, stand_in);
}

#[test]
fn stand_in_is_worse_than_assembled_ground_truth() {
    for seed in 0..12 {
        let s = generate_sample(&SampleSpec {
            seed,
            complexity: 6 + seed as usize,
            level: Level::Simple,
            view_index: 0,
        })
        .unwrap();
        let asm = assemble_mesh(&s.gt_primitives, &AssemblyParams::default()).unwrap();
        let ok = evaluate("s", Some(&asm.mesh), &s.gt_mesh, None, 4000, 0).unwrap();
        let bad = evaluate("s", None, &s.gt_mesh, None, 4000, 0).unwrap();
        assert!(
            bad.cd > ok.cd,
            "seed {seed}: stand-in {} vs {}",
            bad.cd,
            ok.cd
        );
    }
}

#[test]
fn reports_round_trip() {
    let s = sample(2);
    let recs = vec![
        evaluate("a", Some(&s.gt_mesh), &s.gt_mesh, Some(0.9), 500, 0).unwrap(),
        evaluate("b", None, &s.gt_mesh, None, 500, 0).unwrap(),
    ];
    let report = Report::new(recs);
    let mut json = Vec::new();
    report.write_json(&mut json).unwrap();
    let back: Report = serde_json::from_slice(&json).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.aggregate.fr, 50.0);

    let mut csv_out = Vec::new();
    report.write_csv(&mut csv_out).unwrap();
    let mut rd = csv::Reader::from_reader(csv_out.as_slice());
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[0][0], "a");
    assert_eq!(&rows[1][1], "1");
    assert_eq!(&rows[1][5], "");
    assert_eq!(&rows[2][0], "ALL");
    assert_eq!(&rows[2][1], "50.00");
    assert_eq!(
        rows[1][2].parse::<f64>().unwrap(),
        format!("{:.6}", report.samples[1].cd)
            .parse::<f64>()
            .unwrap()
    );
}

/// Distance to a triangle: in-plane projection when it falls inside, else
/// the nearest of the three edges.
fn triangle_oracle(p: Point3, a: Point3, b: Point3, c: Point3) -> f64 {
    let seg = |u: Point3, v: Point3| {
        let t = ((p - u).dot(v - u) / (v - u).norm_squared()).clamp(0.0, 1.0);
        p.distance(u + (v - u) * t)
    };
    let n = (b - a).cross(c - a);
    let q = p - n * ((p - a).dot(n) / n.norm_squared());
    let side = |u: Point3, v: Point3| (v - u).cross(q - u).dot(n) >= 0.0;
    if side(a, b) && side(b, c) && side(c, a) {
        p.distance(q)
    } else {
        seg(a, b).min(seg(b, c)).min(seg(c, a))
    }
}

fn point() -> impl Strategy<Value = Point3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

proptest! {
    #[test]
    fn point_triangle_distance_matches_oracle(p in point(), a in point(), b in point(), c in point()) {
        prop_assume!((b - a).cross(c - a).norm() > 1e-3);
        let d = point_triangle_distance(p, a, b, c);
        let o = triangle_oracle(p, a, b, c);
        prop_assert!((d - o).abs() < 1e-9, "{} vs {}", d, o);
    }

    #[test]
    fn metric_invariants(seed in 0u64..200, shift in 0.0..0.2f64) {
        let s = generate_sample(&SampleSpec { seed, complexity: 8, level: Level::Simple, view_index: 0 }).unwrap();
        let other = shifted(&s.gt_mesh, Point3::new(shift, -shift / 2.0, 0.0));
        let m = surface_metrics(&other, &s.gt_mesh, 1000, seed).unwrap();
        prop_assert!(m.cd >= 0.0 && m.cd <= m.hd);
        prop_assert!((0.0..=1.0).contains(&m.nc));
        prop_assert_eq!(m, surface_metrics(&other, &s.gt_mesh, 1000, seed).unwrap());
        let r = m.reported();
        prop_assert_eq!(r.cd, m.cd * 100.0);
        prop_assert_eq!(r.hd, m.hd * 100.0);
        prop_assert_eq!(r.nc, m.nc);
    }
}
