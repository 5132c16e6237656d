use std::fs;
use std::path::Path;

use proptest::prelude::*;
use uowc::config::{RunConfig, Stage};
use uowc::pipeline::{emit_tables, run_pipeline, ResultManifest, MANIFEST_FILE};
use uowc::Error;

fn small(dir: &Path, stages: &[Stage]) -> RunConfig {
    let mut c = RunConfig {
        output_dir: dir.to_path_buf(),
        seed: 21,
        stages: stages.to_vec(),
        ..Default::default()
    };
    c.link.z_link = 15.0;
    c.link.photon_count = 200_000;
    c.phase.resolution = 4000;
    c.rx.time_bin = 2e-11;
    c.scintillation.bt_max = 0.1;
    c.scintillation.iterations = 30;
    c.scintillation.photons_per_iter = 3000;
    c.rate.l_bits = 2000;
    c.rate.points = 3;
    c.rate.max_memory = 6;
    c
}

fn digests(m: &ResultManifest) -> Vec<(String, String)> {
    m.stages
        .iter()
        .flat_map(|s| s.files.iter().map(|f| (f.path.clone(), f.sha256.clone())))
        .collect()
}

#[test]
fn full_run_is_reproducible_across_pool_sizes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = |dir: &Path, threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_pipeline(&small(dir, &Stage::ALL)).unwrap())
    };
    let (ma, mb) = (run(a.path(), 1), run(b.path(), 3));
    assert_eq!(digests(&ma), digests(&mb));
    assert_eq!(ma.results, mb.results);
    assert!(ma.failure.is_none());
    for stage in Stage::ALL {
        assert!(ma.stage(stage).is_some(), "{}", stage.name());
    }
    let r = &ma.results;
    assert!(r.simulation.is_some() && r.dgf.is_some() && r.fading.is_some() && r.r_max.is_some());
    for (path, _) in digests(&ma) {
        assert_eq!(fs::read(a.path().join(&path)).unwrap(), fs::read(b.path().join(&path)).unwrap());
    }
    let loaded = ResultManifest::load(&a.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded, ma);

    let report = tempfile::tempdir().unwrap();
    let files = emit_tables(&[ma], report.path()).unwrap();
    for name in ["table1_dgf.txt", "table2_lognormal.txt", "fig10_rate_coastal-15m.csv"] {
        assert!(files.iter().any(|p| p.ends_with(name)), "{name}");
    }
    assert!(!files.iter().any(|p| p.ends_with("table3_gaussian.txt")));
    assert!(files.iter().all(|p| p.exists()));
}

#[test]
fn simulate_only_has_no_fits() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_pipeline(&small(dir.path(), &[Stage::Simulate])).unwrap();
    assert!(m.results.simulation.is_some());
    assert!(m.results.dgf.is_none() && m.results.fading.is_none() && m.results.r_max.is_none());
    let names: Vec<_> = digests(&m).into_iter().map(|d| d.0).collect();
    for f in ["response.json", "spatial_map.csv", "impulse.csv"] {
        assert!(names.iter().any(|n| n == f), "{f}");
    }

    let report = tempfile::tempdir().unwrap();
    let out = report.path().join("tables");
    assert!(matches!(emit_tables(&[m], &out), Err(Error::MissingStage(_))));
    assert!(!out.exists());
}

#[test]
fn stages_resume_from_earlier_runs() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_pipeline(&small(dir.path(), &[Stage::Simulate])).unwrap();
    let second = run_pipeline(&small(dir.path(), &[Stage::Fit])).unwrap();
    assert_eq!(second.results.simulation, first.results.simulation);
    assert!(second.results.dgf.is_some());
}

#[test]
fn missing_upstream_stage() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_pipeline(&small(dir.path(), &[Stage::Fit])).unwrap_err();
    assert!(matches!(err, Error::MissingStage("simulate")), "{err}");
    let m = ResultManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(m.failure.is_some());
}

#[test]
fn tampered_artifacts_are_not_reused() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&small(dir.path(), &[Stage::Simulate])).unwrap();
    fs::write(dir.path().join("response.json"), b"{}").unwrap();
    assert!(matches!(
        run_pipeline(&small(dir.path(), &[Stage::Fit])),
        Err(Error::MissingStage(_))
    ));
}

#[test]
fn changed_physics_invalidates_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&small(dir.path(), &[Stage::Simulate])).unwrap();
    let mut c = small(dir.path(), &[Stage::Fit]);
    c.water.b_t = 0.05;
    assert!(matches!(run_pipeline(&c), Err(Error::MissingStage(_))));
}

#[test]
fn bad_config_fails_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(&dir.path().join("out"), &Stage::ALL);
    c.scintillation.iterations = 3;
    assert!(matches!(run_pipeline(&c), Err(Error::Config(_))));
    assert!(!dir.path().join("out").exists());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_survives_toml(
        seed in any::<u64>(),
        z in 0.5..100.0f64,
        b_t in 0.0..5.0f64,
        photons in 1u64..10_000_000,
        bt_max in 0.0..5.0f64,
        p_t in 1e-4..1.0f64,
        preset in prop::sample::select(vec!["clear", "coastal", "harbour"]),
        explicit in any::<bool>(),
        stages in prop::sample::subsequence(Stage::ALL.to_vec(), 1..=4),
    ) {
        let mut c = RunConfig { seed, stages, ..Default::default() };
        c.link.z_link = z;
        c.water.b_t = b_t;
        if explicit {
            c.water.preset = None;
            c.water.a = Some(0.3);
            c.water.b_petzold = Some(1.2);
        } else {
            c.water.preset = Some(preset.to_string());
        }
        c.link.photon_count = photons;
        c.scintillation.bt_max = bt_max;
        c.rate.p_t = p_t;
        let text = c.render().unwrap();
        prop_assert_eq!(RunConfig::parse(&text).unwrap(), c.clone());
        prop_assert!(c.validate().is_ok());
    }
}
