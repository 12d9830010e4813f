use o2pac_cli::config::{
    default_bounds, default_learners, default_stat_learners, parse_config, Command, DEFAULT_DELTA, DEFAULT_N, DEFAULT_REPLICATES,
};

#[test]
fn defaults_are_filled_in() {
    let c = parse_config(r#"{ "schema_version": 1, "command": "coverage" }"#).unwrap();
    assert_eq!(c.n, DEFAULT_N);
    assert_eq!(c.replicates, DEFAULT_REPLICATES);
    assert_eq!(c.delta, DEFAULT_DELTA);
    assert_eq!(c.seed, 0);
    assert_eq!(c.learners, default_learners());
    assert_eq!(c.stat_learners, default_stat_learners());
    assert_eq!(c.bounds, default_bounds(Command::Coverage));
    assert_eq!(c.options.deltas, vec![DEFAULT_DELTA]);
}

#[test]
fn out_of_range_delta_is_named() {
    let err = parse_config(r#"{ "schema_version": 1, "command": "coverage", "delta": 1.5 }"#).unwrap_err();
    assert!(format!("{err:#}").contains("delta"), "{err:#}");
}

#[test]
fn unknown_field_reports_its_path() {
    let err = parse_config(r#"{ "schema_version": 1, "command": "coverage", "options": { "k_maxx": 3 } }"#).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("options") && msg.contains("k_maxx"), "{msg}");
}

#[test]
fn wrong_schema_version_is_rejected() {
    assert!(parse_config(r#"{ "schema_version": 2, "command": "coverage" }"#).is_err());
}

#[test]
fn unknown_command_is_rejected() {
    let err = parse_config(r#"{ "schema_version": 1, "command": "train" }"#).unwrap_err();
    assert!(format!("{err:#}").contains("command"));
}

#[test]
fn configs_round_trip() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/examples");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let c = parse_config(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let again = parse_config(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 7);
}
