use bam_core::experiment::{
    read_csv, run, run_bandit, run_infer, summarize, write_csv, write_outputs, BanditConfig, BanditRecord,
    ExperimentConfig, ExperimentKind, InferConfig, InferMethod, InferRecord, Profile, Records, Settings,
    INFER_HEADER,
};
use bam_core::rng::StreamFactory;
use bam_core::Error;
use std::collections::BTreeMap;

fn config_key(err: Error) -> String {
    match err {
        Error::Config { key, .. } => key,
        other => panic!("expected a config error, got {other:?}"),
    }
}

fn small_infer() -> InferConfig {
    let mut methods = BTreeMap::new();
    methods.insert("recursive".to_string(), InferMethod::Recursive);
    methods.insert("bocd".to_string(), InferMethod::Bocd { hazard: 0.05 });
    methods.insert("bf".to_string(), InferMethod::Forgetting { alpha: 0.8 });
    methods.insert("power".to_string(), InferMethod::PowerPrior { alpha: 0.5 });
    methods.insert(
        "bam".to_string(),
        InferMethod::Bam { lambda: 0.0, strategy: Default::default(), quantile_q: 0.5 },
    );
    InferConfig { steps: 40, methods, ..InferConfig::default() }
}

#[test]
fn every_preset_validates_and_round_trips_through_toml() {
    for kind in ExperimentKind::ALL {
        for profile in [Profile::Desk, Profile::Full] {
            let cfg = ExperimentConfig::preset(kind, profile);
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            let back = ExperimentConfig::from_toml_str(&text, kind, None).unwrap();
            assert_eq!(back, cfg, "{kind} {profile:?}");
        }
    }
}

#[test]
fn empty_file_gives_the_desk_preset() {
    let cfg = ExperimentConfig::from_toml_str("", ExperimentKind::Bandit, None).unwrap();
    assert_eq!(cfg, ExperimentConfig::preset(ExperimentKind::Bandit, Profile::Desk));
}

#[test]
fn overrides_merge_onto_the_preset() {
    let text = "seeds = [3, 4]\n[bandit]\nhorizon = 77\n[bandit.params]\nbocd_hazard = 0.1\n";
    let cfg = ExperimentConfig::from_toml_str(text, ExperimentKind::Bandit, None).unwrap();
    assert_eq!(cfg.seeds, vec![3, 4]);
    let Settings::Bandit(b) = &cfg.settings else { panic!("wrong settings") };
    let preset = BanditConfig::default();
    assert_eq!(b.horizon, 77);
    assert_eq!(b.params.bocd_hazard, 0.1);
    assert_eq!(b.arms, preset.arms);
    assert_eq!(b.params.forgetting_alpha, preset.params.forgetting_alpha);
}

#[test]
fn profile_argument_overrides_the_file() {
    let cfg = ExperimentConfig::from_toml_str("profile = \"desk\"", ExperimentKind::Bandit, Some(Profile::Full)).unwrap();
    assert_eq!(cfg.profile, Profile::Full);
    let Settings::Bandit(b) = &cfg.settings else { panic!("wrong settings") };
    assert_eq!(b.horizon, 10_000);
}

#[test]
fn methods_table_replaces_the_default_set() {
    let text = "[infer.methods.only]\nkind = \"forgetting\"\nalpha = 0.5\n";
    let cfg = ExperimentConfig::from_toml_str(text, ExperimentKind::Infer, None).unwrap();
    let Settings::Infer(c) = &cfg.settings else { panic!("wrong settings") };
    assert_eq!(c.methods.len(), 1);
    assert_eq!(c.methods["only"], InferMethod::Forgetting { alpha: 0.5 });
}

#[test]
fn unknown_keys_are_named() {
    let kind = ExperimentKind::Bandit;
    assert_eq!(config_key(ExperimentConfig::from_toml_str("bogus = 1", kind, None).unwrap_err()), "bogus");
    assert_eq!(config_key(ExperimentConfig::from_toml_str("[bandit]\nhorizn = 5", kind, None).unwrap_err()), "bandit.horizn");
    assert_eq!(
        config_key(ExperimentConfig::from_toml_str("[bandit.params]\nbogus = 5", kind, None).unwrap_err()),
        "bandit.params.bogus"
    );
    assert_eq!(config_key(ExperimentConfig::from_toml_str("[infer]\nsteps = 5", kind, None).unwrap_err()), "infer");
    let cp = ExperimentKind::CartpoleEpisodic;
    assert_eq!(
        config_key(ExperimentConfig::from_toml_str("[cartpole_episodic.mppi]\nsamples = 5", cp, None).unwrap_err()),
        "cartpole_episodic.mppi.samples"
    );
}

#[test]
fn wrongly_typed_and_invalid_values_are_named() {
    let kind = ExperimentKind::Bandit;
    let key = config_key(ExperimentConfig::from_toml_str("[bandit]\nhorizon = \"long\"", kind, None).unwrap_err());
    assert_eq!(key, "bandit.horizon");
    let key = config_key(ExperimentConfig::from_toml_str("[bandit]\nhorizon = 0", kind, None).unwrap_err());
    assert!(key.starts_with("bandit.horizon"), "{key}");
    let key = config_key(ExperimentConfig::from_toml_str("[bandit]\nswitch_rate = 1.5", kind, None).unwrap_err());
    assert!(key.starts_with("bandit.switch_rate"), "{key}");
    let key = config_key(
        ExperimentConfig::from_toml_str("[infer.methods.b]\nkind = \"bocd\"\nhazard = 2.0", ExperimentKind::Infer, None)
            .unwrap_err(),
    );
    assert!(key.starts_with("infer.methods.b"), "{key}");
    let key = config_key(
        ExperimentConfig::from_toml_str("[cartpole_continual]\ntrial_length = 0", ExperimentKind::CartpoleContinual, None)
            .unwrap_err(),
    );
    assert!(key.starts_with("cartpole_continual."), "{key}");
}

#[test]
fn seed_lists_must_be_nonempty_and_distinct() {
    let kind = ExperimentKind::Infer;
    assert_eq!(config_key(ExperimentConfig::from_toml_str("seeds = []", kind, None).unwrap_err()), "seeds");
    assert_eq!(config_key(ExperimentConfig::from_toml_str("seeds = [1, 1]", kind, None).unwrap_err()), "seeds");
    assert_eq!(config_key(ExperimentConfig::from_toml_str("seeds = [-1]", kind, None).unwrap_err()), "seeds");
}

#[test]
fn mismatched_experiment_name_is_rejected() {
    let err = ExperimentConfig::from_toml_str("experiment = \"bandit\"", ExperimentKind::Infer, None).unwrap_err();
    assert_eq!(config_key(err), "experiment");
}

#[test]
fn malformed_toml_is_a_config_error() {
    let err = ExperimentConfig::from_toml_str("[bandit", ExperimentKind::Bandit, None).unwrap_err();
    assert!(matches!(err, Error::Config { .. }));
}

#[test]
fn experiment_names_parse() {
    for kind in ExperimentKind::ALL {
        assert_eq!(kind.name().parse::<ExperimentKind>().unwrap(), kind);
    }
    assert!("cartpole".parse::<ExperimentKind>().is_err());
    assert_eq!("full".parse::<Profile>().unwrap(), Profile::Full);
}

#[test]
fn infer_run_shape_and_learner_invariants() {
    let cfg = small_infer();
    let streams = StreamFactory::new(9);
    let records = run_infer(&cfg, &[0, 1], &streams).unwrap();
    assert_eq!(records.len(), 2 * 5 * 40);
    for r in &records {
        assert!(r.mean > 0.0 && r.mean < 1.0);
        assert!(r.log_variance.is_finite());
        assert!((r.theta - cfg.theta(r.t as usize)).abs() < 1e-15);
        assert_eq!(r.changepoint.is_some(), r.method == "bocd");
        assert_eq!(r.mixture_mean.is_some(), r.method == "bocd");
        assert_eq!(r.selected.is_some(), r.method == "bam");
        if let Some(k) = r.selected {
            assert!(k < r.t as usize);
        }
    }
    // Recursive Bayes matches the closed-form Beta variance on the final step.
    let rb: Vec<&InferRecord> = records.iter().filter(|r| r.method == "recursive" && r.seed == 0).collect();
    let n = cfg.steps as f64 * cfg.trials as f64;
    let last = rb.last().unwrap();
    let total = cfg.prior_alpha + cfg.prior_beta + n;
    let alpha = last.mean * total;
    let var = alpha * (total - alpha) / (total * total * (total + 1.0));
    assert!((last.log_variance - var.ln()).abs() < 1e-9);
}

#[test]
fn learners_share_the_same_data_per_seed() {
    let cfg = small_infer();
    let streams = StreamFactory::new(9);
    let all = run_infer(&cfg, &[4], &streams).unwrap();
    let mut only = cfg.clone();
    only.methods.retain(|k, _| k == "recursive");
    let rb = run_infer(&only, &[4], &streams).unwrap();
    let from_all: Vec<&InferRecord> = all.iter().filter(|r| r.method == "recursive").collect();
    assert_eq!(rb.len(), from_all.len());
    for (a, b) in rb.iter().zip(from_all) {
        assert_eq!(a, b);
    }
}

#[test]
fn infer_is_deterministic_and_seed_dependent() {
    let cfg = small_infer();
    let a = run_infer(&cfg, &[0, 1], &StreamFactory::new(3)).unwrap();
    let b = run_infer(&cfg, &[0, 1], &StreamFactory::new(3)).unwrap();
    assert_eq!(a, b);
    let c = run_infer(&cfg, &[0, 1], &StreamFactory::new(4)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn empty_seed_list_is_an_error() {
    assert!(run_infer(&small_infer(), &[], &StreamFactory::new(0)).is_err());
    assert!(run_bandit(&BanditConfig::default(), &[], &StreamFactory::new(0)).is_err());
}

#[test]
fn bandit_run_shape_and_regret_monotone() {
    let cfg = BanditConfig { arms: vec![3, 5], horizon: 60, configs: 2, ..BanditConfig::default() };
    let records = run_bandit(&cfg, &[0, 1], &StreamFactory::new(1)).unwrap();
    assert_eq!(records.len(), 2 * 2 * 2 * cfg.agents.len() * 60);
    let mut groups: BTreeMap<(usize, u64, u64, String), Vec<&BanditRecord>> = BTreeMap::new();
    for r in &records {
        groups.entry((r.arms, r.config_id, r.seed, r.agent.clone())).or_default().push(r);
    }
    for curve in groups.values() {
        assert_eq!(curve.len(), 60);
        assert!(curve[0].regret >= 0.0);
        for w in curve.windows(2) {
            assert_eq!(w[1].t, w[0].t + 1);
            assert!(w[1].regret >= w[0].regret - 1e-12);
        }
    }
}

#[test]
fn csv_round_trip_and_empty_header() {
    let records = run_infer(&small_infer(), &[0], &StreamFactory::new(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_csv(&records, &INFER_HEADER, std::fs::File::create(&path).unwrap()).unwrap();
    let back: Vec<InferRecord> = read_csv(&path).unwrap();
    assert_eq!(back, records);

    let mut buf = Vec::new();
    write_csv::<InferRecord, _>(&[], &INFER_HEADER, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", INFER_HEADER.join(",")));
}

#[test]
fn summary_of_constant_metric_has_degenerate_band() {
    let records: Vec<BanditRecord> = (0..7)
        .map(|s| BanditRecord { arms: 2, config_id: 0, seed: s, t: 1, agent: "ucb".into(), regret: 2.5 })
        .collect();
    let summary = summarize("bandit", &records);
    assert_eq!(summary.records, 7);
    assert_eq!(summary.series.len(), 1);
    let s = &summary.series[0];
    assert_eq!((s.median[0], s.q10[0], s.q90[0]), (2.5, 2.5, 2.5));
    assert_eq!(s.last.n, 7);
    assert_eq!(s.group, "arms=2");
}

#[test]
fn summary_band_matches_sorted_order_statistics() {
    let records: Vec<BanditRecord> = (0..11)
        .map(|s| BanditRecord { arms: 2, config_id: 0, seed: s, t: 1, agent: "ucb".into(), regret: (10 - s) as f64 })
        .collect();
    let s = &summarize("bandit", &records).series[0];
    // Linear interpolation on 0..=10 puts the q-quantile at 10q.
    assert!((s.median[0] - 5.0).abs() < 1e-12);
    assert!((s.q10[0] - 1.0).abs() < 1e-12);
    assert!((s.q90[0] - 9.0).abs() < 1e-12);
}

#[test]
fn write_outputs_emits_sorted_csv_summary_and_config() {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Infer, Profile::Desk);
    cfg.seeds = vec![2, 0, 1];
    cfg.settings = Settings::Infer(InferConfig { steps: 15, ..small_infer() });
    let records = run(&cfg, 11).unwrap();
    let Records::Infer(rows) = &records else { panic!("wrong records") };
    assert_eq!(rows.len(), 3 * 5 * 15);
    let dir = tempfile::tempdir().unwrap();
    let paths = write_outputs(&cfg, records.clone(), dir.path()).unwrap();
    assert_eq!(paths.len(), 3);
    for p in &paths {
        assert!(p.exists(), "{}", p.display());
    }

    let back: Vec<InferRecord> = read_csv(&dir.path().join("records.csv")).unwrap();
    let keys: Vec<(String, u64, u64)> = back.iter().map(|r| (r.method.clone(), r.seed, r.t)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("records_summary.json")).unwrap()).unwrap();
    assert_eq!(json["experiment"], "infer");
    assert_eq!(json["records"], 225);

    let text = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&text, ExperimentKind::Infer, None).unwrap(), cfg);

    // Same seed list in any order and a fresh run produce identical bytes.
    let dir2 = tempfile::tempdir().unwrap();
    write_outputs(&cfg, run(&cfg, 11).unwrap(), dir2.path()).unwrap();
    for name in ["records.csv", "records_summary.json"] {
        assert_eq!(std::fs::read(dir.path().join(name)).unwrap(), std::fs::read(dir2.path().join(name)).unwrap());
    }
}

#[test]
fn mnist_without_data_is_an_io_error() {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Mnist, Profile::Desk);
    let dir = tempfile::tempdir().unwrap();
    cfg.data_dir = Some(dir.path().to_path_buf());
    cfg.seeds = vec![0];
    assert!(run(&cfg, 0).is_err());
}
