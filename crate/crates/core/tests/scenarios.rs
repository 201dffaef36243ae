use relucone::{bundled_names, run_scenario, GeometryExport, Role, ScenarioConfig};

fn run(name: &str) -> relucone::ScenarioOutcome {
    let cfg = ScenarioConfig::bundled(name).unwrap();
    run_scenario(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn all_bundled_scenarios_run() {
    for name in bundled_names() {
        let out = run(name);
        assert!(!out.export.elements.is_empty(), "{name} exported nothing");
        assert!(out.export.summary.contains_key("max_residual"));
        println!("{}", out.report);
    }
}

#[test]
fn config_round_trips_through_json() {
    for name in bundled_names() {
        let cfg = ScenarioConfig::bundled(name).unwrap();
        let again = ScenarioConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }
}

#[test]
fn runs_are_deterministic() {
    let a = run("fig1-preimage").export.to_json().unwrap();
    let b = run("fig1-preimage").export.to_json().unwrap();
    assert_eq!(a, b);
}

#[test]
fn export_round_trips_through_json() {
    let out = run("fig4-triangle");
    let back = GeometryExport::from_json(&out.export.to_json().unwrap()).unwrap();
    assert_eq!(back, out.export);
}

#[test]
fn fig1_preimage_is_exact() {
    let out = run("fig1-preimage");
    assert!(out.max_residual < 1e-8);
    assert!(out.export.count(Role::Preimage) > 0);
    assert!(out.export.count(Role::Plane) == 3);
    assert!(out.export.count(Role::DualVector) == 3);
}

#[test]
fn fig2_bias_only_collapses_to_axes() {
    let out = run("fig2-bias-only");
    let nested = out.export.summary["fully_nested"].as_array().unwrap();
    assert!(nested.iter().all(|v| v.as_bool() == Some(true)));
    // the origin pulls back to the whole corner [0, 1.2]^2
    let cov = out.export.summary["coverage"].as_array().unwrap();
    let origin = cov[0].as_f64().unwrap();
    assert!((origin - 0.36).abs() < 0.05, "coverage of the origin {origin}");
}

#[test]
fn fig3_identity_has_eight_cells_and_contracts() {
    let out = run("fig3-identity");
    assert_eq!(out.export.summary["cell_count"][0], 8);
    assert_eq!(out.export.summary["contraction_violations"][0], 0);
}

#[test]
fn fig3_wide_cone_is_not_nested() {
    let out = run("fig3-wide");
    assert_eq!(out.export.summary["fully_nested"][0], false);
    assert!(out.export.summary["violated_subsets"][0].as_u64().unwrap() > 0);
}

#[test]
fn fig4_traces_a_connected_surface() {
    let out = run("fig4-triangle");
    let s = &out.export.summary;
    assert!(out.max_residual < 1e-6);
    assert!(s["piece_count"].as_u64().unwrap() > 1);
    assert!(s["adjacent_pairs"].as_u64().unwrap() > 0);
    assert!(s["continuity_residual"].as_f64().unwrap() < 1e-8);
    assert!(s["min_separation"].as_f64().unwrap() > 0.0);
    assert_eq!(out.export.count(Role::ManifoldPiece), s["piece_count"].as_u64().unwrap() as usize);
}

#[test]
fn exported_coordinates_stay_in_the_scene_box() {
    use relucone::Geometry;
    for name in bundled_names() {
        let out = run(name);
        let b = out.export.scene_box;
        let inside = |p: &[f64]| p.iter().all(|v| *v >= b.min && *v <= b.max);
        for e in &out.export.elements {
            let ok = match &e.geometry {
                Geometry::Point { at } => inside(at),
                Geometry::Segment { from, to } => inside(from) && inside(to),
                Geometry::Polygon { vertices } => vertices.iter().all(|v| inside(v)),
                Geometry::Ray { origin, .. } => inside(origin),
            };
            assert!(ok, "{name}: {e:?}");
        }
    }
}

#[test]
fn fig4_pieces_keep_the_manifold_dimension() {
    let out = run("fig4-triangle");
    let dims = out.export.summary["piece_dims"].as_array().unwrap();
    assert!(dims.iter().all(|d| d == 2));
}

#[test]
fn exports_written_to_disk_read_back() {
    use relucone::{export_json, export_obj, export_svg, Projection};
    let dir = tempfile::tempdir().unwrap();
    let out = run("fig1-preimage");
    let json = dir.path().join("a.json");
    export_json(&out.export, &json).unwrap();
    let back = GeometryExport::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back, out.export);
    let obj = dir.path().join("a.obj");
    export_obj(&out.export, &obj).unwrap();
    assert!(std::fs::read_to_string(&obj).unwrap().lines().any(|l| l.starts_with("v ")));
    let svg = dir.path().join("a.svg");
    export_svg(&out.export, &svg, Projection::Identity).unwrap();
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));
}
