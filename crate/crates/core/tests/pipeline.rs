use npos_core::dataset::build_anchor_set;
use npos_core::experiment::{
    prepare, raw_features, run_methods, simulate, sweep, write_reports, ArtifactWriter, SweepParam,
};
use npos_core::features::{read_features, write_features};
use npos_core::simkit::generate_trajectory;
use npos_core::{ExperimentConfig, Method, MotionModel};

fn tiny(methods: &[Method]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::small_room();
    cfg.name = "tiny".into();
    cfg.n_samples = 800;
    cfg.leap = 20;
    cfg.baseline2_leap = 20;
    cfg.motion.dock_return_period = 20;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 64;
    cfg.methods = methods.to_vec();
    cfg
}

#[test]
fn dock_visits_are_anchored_at_the_dock() {
    // Periods count commands; one command covers many samples, so 500
    // commands span several thousand samples rather than 500.
    let cfg = ExperimentConfig::small_room();
    let motion = MotionModel { dock_return_period: 500, ..MotionModel::default() };
    let world = cfg.world_config();
    let (traj, _) = generate_trajectory(&world, &motion, 5_000).unwrap();
    let anchors = build_anchor_set(&traj.dock_indices, world.dock.position, 1.0);
    assert!(!anchors.is_empty());
    assert_eq!(anchors.entries[0].index, 0);
    for a in &anchors.entries {
        assert!(traj.positions[a.index].distance(world.dock.position) < 0.02, "{a:?}");
    }
    let (long, _) = generate_trajectory(&world, &motion, 60_000).unwrap();
    let (dense, _) = generate_trajectory(&world, &MotionModel { dock_return_period: 50, ..motion }, 60_000).unwrap();
    assert!(dense.dock_indices.len() > 5 * long.dock_indices.len());
}

#[test]
fn pipeline_is_deterministic_and_leak_free() {
    let cfg = tiny(&[Method::Ours, Method::Baseline3]);
    let sim = simulate(&cfg).unwrap();
    let raw = raw_features(&cfg, &sim).unwrap();
    let data = prepare(&cfg, &sim, &raw, &cfg.averaging, cfg.leap).unwrap();
    for t in &data.triangles {
        let train = t.vertices().iter().all(|&i| !data.split.is_test(i));
        assert!(!train || t.vertices().iter().all(|&i| i < sim.trajectory.len()));
    }
    let a = run_methods(&cfg, &sim, &data).unwrap();
    let b = run_methods(&cfg, &sim, &data).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.report.per_sample_errors, y.report.per_sample_errors);
        assert_eq!(x.outcome.model.weights, y.outcome.model.weights);
    }
}

#[test]
fn thread_count_does_not_change_features() {
    let mut cfg = tiny(&[]);
    cfg.threads = 1;
    let sim = simulate(&cfg).unwrap();
    let one = raw_features(&cfg, &sim).unwrap();
    cfg.threads = 3;
    let three = raw_features(&cfg, &sim).unwrap();
    assert_eq!(one.values, three.values);
}

#[test]
fn feature_file_roundtrip_preserves_f32_values() {
    let cfg = tiny(&[]);
    let sim = simulate(&cfg).unwrap();
    let raw = raw_features(&cfg, &sim).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.npof");
    let mut buf = vec![];
    write_features(&raw, &mut buf).unwrap();
    std::fs::write(&path, buf).unwrap();
    let back = read_features(&path).unwrap();
    assert_eq!(back.to_f32(), raw.to_f32());
}

#[test]
fn sweep_values_must_ascend() {
    let cfg = tiny(&[]);
    let sim = simulate(&cfg).unwrap();
    let raw = raw_features(&cfg, &sim).unwrap();
    assert!(sweep(&cfg, &sim, &raw, SweepParam::Leap, &[20, 10]).is_err());
    let rows = sweep(&cfg, &sim, &raw, SweepParam::Window, &[0, 4]).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.param == "L" && r.mean.is_finite()));
}

#[test]
fn artifacts_are_listed_in_manifest() {
    let cfg = tiny(&[Method::Baseline1]);
    let sim = simulate(&cfg).unwrap();
    let raw = raw_features(&cfg, &sim).unwrap();
    let data = prepare(&cfg, &sim, &raw, &cfg.averaging, cfg.leap).unwrap();
    let runs = run_methods(&cfg, &sim, &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut out = ArtifactWriter::new(dir.path(), &cfg).unwrap();
    write_reports(&mut out, &runs, &data, &sim).unwrap();
    let manifest = std::fs::read_to_string(out.finish().unwrap()).unwrap();
    assert!(manifest.starts_with(&format!("config_hash {}\n", cfg.hash())));
    for name in ["tiny_results.csv", "tiny_cdf_baseline1.csv", "tiny_cdf.svg", "tiny_error_map_baseline1.svg"] {
        assert!(manifest.contains(name), "{name} not in manifest");
        assert!(dir.path().join(name).exists());
    }
}
