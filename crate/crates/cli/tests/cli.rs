use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::sync::OnceLock;

use gamespace::ntbea::Fingerprint;
use gamespace_cli::config::SPACES;
use gamespace_cli::{execute, CliError, Command, ExperimentConfig, Overrides, RunManifest, Scale};

const TINY: &str = r#"
seed = 7
games = ["loveletter", "diamant"]

[budgets]
agent = { iterations = 8 }
opponent = { iterations = 8 }

[ntbea]
runs = 3
iterations = 10

[games_per_row]
attributes = 5
performance = 3
round_robin = 3

[analysis]
parallel_reps = 50
"#;

/// TINY with the keys of `extra` laid over it, one table level deep.
fn tiny_text(extra: &str) -> String {
    let mut base: toml::Table = TINY.parse().unwrap();
    let extra: toml::Table = extra.parse().unwrap();
    for (k, v) in extra {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => b.extend(t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    toml::to_string(&base).unwrap()
}

fn tiny(out: &Path, extra: &str) -> ExperimentConfig {
    let text = tiny_text(extra);
    let overrides = Overrides { seed: None, output: Some(out.to_path_buf()) };
    ExperimentConfig::from_toml(&text, Scale::Desk, &overrides).unwrap()
}

/// One finished pipeline shared by the read-only tests.
fn shared_run() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let out = dir.join("run");
        execute(Command::All, &tiny(&out, ""), false).unwrap();
        out
    })
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn manifest(dir: &Path) -> RunManifest {
    RunManifest::read(dir).unwrap().unwrap()
}

fn config_error(text: &str) -> String {
    match ExperimentConfig::from_toml(text, Scale::Desk, &Overrides::default()) {
        Err(CliError::Config(msg)) => msg,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn config_round_trips_through_toml() {
    let config = tiny(Path::new("somewhere"), "");
    let back = ExperimentConfig::from_toml(&config.to_toml(), Scale::Paper, &Overrides::default()).unwrap();
    assert_eq!(back, config);
}

#[test]
fn presets_differ_only_where_intended() {
    let desk = ExperimentConfig::from_toml("seed = 1", Scale::Desk, &Overrides::default()).unwrap();
    let paper = ExperimentConfig::from_toml("seed = 1", Scale::Paper, &Overrides::default()).unwrap();
    assert_eq!(desk.games.len(), 2);
    assert_eq!(paper.games.len(), 4);
    assert_eq!(paper.games_per_row.attributes, 1000);
    assert_eq!(paper.games_per_row.round_robin, 10_000);
    assert_eq!(desk.players, paper.players);
    assert_eq!(desk.analysis, paper.analysis);
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let msg = config_error("seed = 1\n[ntbea]\nkapa = 1.0\n");
    assert!(msg.starts_with("ntbea.kapa"), "{msg}");
    let msg = config_error("seed = 1\ncolour = 3\n");
    assert!(msg.contains("colour"), "{msg}");
}

#[test]
fn seed_is_required() {
    let msg = config_error("games = [\"diamant\"]\n");
    assert!(msg.contains("seed"), "{msg}");
}

#[test]
fn invalid_values_are_config_errors() {
    for (text, path) in [
        ("seed = 1\nplayers = [2, 9]", "players"),
        ("seed = 1\ngames = [\"chess\"]", "games"),
        ("seed = 1\nplayers = [2, 2]", "players"),
        ("seed = 1\n[analysis]\nparallel_reps = 19", "analysis.parallel_reps"),
        ("seed = 1\n[analysis]\nalpha = 1.0", "analysis.alpha"),
        ("seed = 1\n[analysis]\ncca = [[\"ntbea\", \"ntbea\"]]", "analysis.cca"),
        ("seed = 1\n[analysis]\ncca = [[\"ntbea\", \"moves\"]]", "analysis.cca"),
        ("seed = 1\n[budgets]\nagent = { iterations = 0 }", "budgets.agent"),
        ("seed = 1\n[games_per_row]\nattributes = 1", "games_per_row.attributes"),
    ] {
        let msg = config_error(text);
        assert!(msg.starts_with(path), "{text:?} gave {msg}");
    }
}

#[test]
fn hash_ignores_output_directory() {
    let a = tiny(Path::new("a"), "");
    let b = tiny(Path::new("b"), "");
    assert_eq!(a.hash(), b.hash());
    let c = tiny(Path::new("a"), "[ntbea]\nkappa = 1.5");
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn grid_spaces_have_one_row_per_environment() {
    let dir = shared_run();
    for space in ["attributes", "ntbea", "performance"] {
        let (header, rows) = read_csv(&dir.join(format!("{space}.csv")));
        assert_eq!(rows.len(), 18, "{space}");
        assert_eq!(header.len(), 3 + 16, "{space}");
        assert!(rows.iter().all(|r| !r[2].is_empty()), "{space}");
    }
}

#[test]
fn roundrobin_rows_have_no_opponent() {
    let (_, rows) = read_csv(&shared_run().join("roundrobin.csv"));
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert_eq!(r[2], "");
        for v in &r[3..] {
            let v: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
    let (_, counts) = read_csv(&shared_run().join("roundrobin_games.csv"));
    assert_eq!(counts.len(), 6 * 16);
    assert!(counts.iter().all(|r| r[3].parse::<usize>().unwrap() >= 3));
}

#[test]
fn sidecar_names_every_column() {
    let dir = shared_run();
    for space in SPACES {
        let (header, _) = read_csv(&dir.join(format!("{space}.csv")));
        let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.join(format!("{space}.json"))).unwrap()).unwrap();
        let features = json["features"].as_object().unwrap();
        assert_eq!(features.len(), header.len() - 3, "{space}");
        for code in &header[3..] {
            assert!(features.contains_key(code), "{space}: {code}");
        }
    }
}

#[test]
fn fingerprint_marginals_sum_to_runs() {
    let dir = shared_run();
    let (_, rows) = read_csv(&dir.join("ntbea.csv"));
    for (row, env) in rows.iter().zip(gamespace_cli::stages::environments(&tiny(dir, ""))) {
        let fp: Fingerprint =
            serde_json::from_slice(&fs::read(dir.join(gamespace_cli::stages::fingerprint_file(&env))).unwrap()).unwrap();
        assert_eq!(fp.marginals.len(), 7);
        for m in &fp.marginals {
            assert_eq!(m.counts.iter().sum::<u32>(), 3, "{env} {}", m.param);
        }
        assert_eq!(fp.recommendations.len(), 3);
        // the table drops one reference level per parameter
        let table: Vec<f64> = row[3..].iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(table, fp.features, "{env}");
        for m in &fp.marginals {
            let kept: f64 = fp
                .feature_names
                .iter()
                .zip(&fp.features)
                .filter(|(n, _)| n.split('=').next() == Some(m.param.as_str()))
                .map(|(_, v)| v)
                .sum();
            assert_eq!(kept, f64::from(m.counts[1..].iter().sum::<u32>()), "{env} {}", m.param);
        }
    }
    let (_, log) = read_csv(&dir.join("fingerprints/diamant-3p-OSLA_log.csv"));
    assert_eq!(log.len(), 30);
}

#[test]
fn manifest_matches_files_on_disk() {
    let dir = shared_run();
    let m = manifest(dir);
    assert!(m.stages.values().all(|s| s.complete));
    for (rel, entry) in &m.files {
        let bytes = fs::read(dir.join(rel)).unwrap();
        assert_eq!(entry.bytes, bytes.len() as u64, "{rel}");
        assert_eq!(entry.sha256, gamespace_cli::manifest::sha256_hex(&bytes), "{rel}");
        if let Some(rows) = entry.rows {
            let (_, data) = read_csv(&dir.join(rel));
            assert_eq!(rows, data.len(), "{rel}");
        }
    }
    assert!(m.files["attributes.csv"].timing);
    assert!(!m.files["ntbea.csv"].timing);
    assert!(m.files["analysis/attributes/scores.csv"].timing);
    assert!(!m.files["analysis/ntbea/scores.csv"].timing);
}

#[test]
fn clustering_tests_cover_every_attribute() {
    let dir = shared_run();
    for space in SPACES {
        let (_, rows) = read_csv(&dir.join(format!("analysis/{space}/tests.csv")));
        for projection in ["full", "pca2"] {
            let attrs: Vec<&str> = rows.iter().filter(|r| r[1] == projection).map(|r| r[2].as_str()).collect();
            assert_eq!(attrs, ["game", "players", "opponent"], "{space} {projection}");
        }
        for r in &rows {
            if r[3] != "not-applicable" {
                let p: f64 = r[6].parse().unwrap();
                assert!((0.0..=1.0).contains(&p), "{r:?}");
            }
        }
    }
    let (_, rr) = read_csv(&dir.join("analysis/roundrobin/tests.csv"));
    assert!(rr.iter().filter(|r| r[2] == "opponent").all(|r| r[3] == "not-applicable"));
}

#[test]
fn homogeneity_is_bonferroni_corrected() {
    let (_, rows) = read_csv(&shared_run().join("analysis/homogeneity.csv"));
    // 2 games x 3 opponents x 9 parameters
    assert_eq!(rows.len(), 54);
    for r in &rows {
        let threshold: f64 = r[6].parse().unwrap();
        assert!((threshold - 0.05 / 54.0).abs() < 1e-15);
        let p: f64 = r[5].parse().unwrap();
        assert_eq!(r[7] == "true", p < threshold);
    }
}

#[test]
fn plots_are_well_formed_with_one_marker_per_row() {
    let dir = shared_run();
    let markers = |rel: &str| {
        let text = fs::read_to_string(dir.join(rel)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        doc.descendants().filter(|n| n.attribute("class") == Some("marker")).count()
    };
    for space in SPACES {
        let rows = if space == "roundrobin" { 6 } else { 18 };
        assert_eq!(markers(&format!("plots/{space}_scatter.svg")), rows, "{space}");
        let (_, scree) = read_csv(&dir.join(format!("analysis/{space}/scree.csv")));
        assert_eq!(markers(&format!("plots/{space}_scree.svg")), scree.len(), "{space}");
        markers(&format!("plots/{space}_loadings.svg"));
    }
    for pair in ["attributes-ntbea", "attributes-performance", "ntbea-performance"] {
        let (_, loadings) = read_csv(&dir.join(format!("analysis/cca/{pair}/cca_loadings.csv")));
        assert_eq!(markers(&format!("plots/cca_{pair}.svg")), loadings.len(), "{pair}");
    }
}

#[test]
fn cca_correlations_are_ordered_and_bounded() {
    let (_, rows) = read_csv(&shared_run().join("analysis/cca/attributes-ntbea/cca_correlations.csv"));
    let rho: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(!rho.is_empty());
    assert!(rho.iter().all(|r| (0.0..=1.0 + 1e-9).contains(r)));
    assert!(rho.windows(2).all(|w| w[0] >= w[1] - 1e-12));
}

#[test]
fn rerun_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = tiny(&out, "games = [\"diamant\"]\nplayers = [2, 3]");
    execute(Command::All, &config, false).unwrap();
    let before = manifest(&out);
    let mtimes: Vec<_> =
        before.files.keys().map(|f| fs::metadata(out.join(f)).unwrap().modified().unwrap()).collect();
    execute(Command::All, &config, false).unwrap();
    let after = manifest(&out);
    assert_eq!(before.files, after.files);
    let again: Vec<_> = after.files.keys().map(|f| fs::metadata(out.join(f)).unwrap().modified().unwrap()).collect();
    // config.toml is rewritten on open; its bytes stay identical
    for ((f, a), b) in before.files.keys().zip(&mtimes).zip(&again) {
        if f != "config.toml" {
            assert_eq!(a, b, "{f} was rewritten");
        }
    }
}

#[test]
fn same_seed_gives_identical_non_timing_files() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "games = [\"diamant\"]\nplayers = [2, 3]";
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    execute(Command::All, &tiny(&a, extra), false).unwrap();
    execute(Command::All, &tiny(&b, extra), false).unwrap();
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma.files.keys().collect::<Vec<_>>(), mb.files.keys().collect::<Vec<_>>());
    let mut compared = 0;
    for (rel, entry) in &ma.files {
        if !entry.timing {
            assert_eq!(entry.sha256, mb.files[rel].sha256, "{rel}");
            compared += 1;
        }
    }
    assert!(compared > 20);
    // only the two timing columns of the attribute table may differ
    let (_, ra) = read_csv(&a.join("attributes.csv"));
    let (_, rb) = read_csv(&b.join("attributes.csv"));
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x[..3], y[..3]);
        assert_eq!(x[5..], y[5..]);
    }
}

#[test]
fn different_seed_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "games = [\"diamant\"]\nplayers = [2]";
    let a = tiny(&dir.path().join("a"), extra);
    let mut b = tiny(&dir.path().join("b"), extra);
    b.seed = 8;
    execute(Command::Performance, &a, false).unwrap();
    execute(Command::Performance, &b, false).unwrap();
    assert_ne!(manifest(&a.output).files["performance.csv"].sha256, manifest(&b.output).files["performance.csv"].sha256);
}

#[test]
fn resume_keeps_finished_fingerprints() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = tiny(&out, "games = [\"diamant\"]\nplayers = [2]");
    execute(Command::Fingerprint, &config, false).unwrap();
    let done = out.join("fingerprints/diamant-2p-RND.json");
    let redo = out.join("fingerprints/diamant-2p-OSLA.json");
    let original = fs::read(&redo).unwrap();

    // simulate an interruption after two of the three environments
    let mut m = manifest(&out);
    let stage = m.stages.get_mut("fingerprint").unwrap();
    stage.complete = false;
    stage.units.remove("diamant-2p-OSLA");
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&m).unwrap()).unwrap();
    fs::remove_file(&redo).unwrap();
    let stamp = fs::metadata(&done).unwrap().modified().unwrap();

    execute(Command::Fingerprint, &config, true).unwrap();
    assert_eq!(fs::metadata(&done).unwrap().modified().unwrap(), stamp);
    assert_eq!(fs::read(&redo).unwrap(), original);
    assert!(manifest(&out).stages["fingerprint"].complete);
}

#[test]
fn corrupted_output_is_regenerated() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = tiny(&out, "games = [\"diamant\"]\nplayers = [2]");
    execute(Command::Performance, &config, false).unwrap();
    let path = out.join("performance.csv");
    let good = fs::read(&path).unwrap();
    fs::write(&path, b"garbage").unwrap();
    execute(Command::Performance, &config, false).unwrap();
    assert_eq!(fs::read(&path).unwrap(), good);
}

#[test]
fn cca_with_roundrobin_reports_row_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config = tiny(
        &out,
        "games = [\"diamant\", \"loveletter\"]\nplayers = [2, 3]\n[analysis]\ncca = [[\"performance\", \"roundrobin\"]]",
    );
    execute(Command::Performance, &config, false).unwrap();
    execute(Command::Roundrobin, &config, false).unwrap();
    match execute(Command::Analyze, &config, false) {
        Err(e @ CliError::Runtime(_)) => assert!(e.to_string().contains("row"), "{e}"),
        other => panic!("expected a runtime error, got {other:?}"),
    }
}

#[test]
fn plot_without_analysis_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny(&dir.path().join("run"), "");
    assert!(matches!(execute(Command::Plot, &config, false), Err(CliError::Runtime(_))));
}

fn binary(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = Process::new(env!("CARGO_BIN_EXE_gamespace")).args(args).current_dir(cwd).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    fs::write(cwd.join("tiny.toml"), tiny_text("games = [\"diamant\"]\nplayers = [2]")).unwrap();
    fs::write(cwd.join("bad.toml"), "seed = 1\n[ntbea]\nkapa = 1.0\n").unwrap();

    let (code, err) = binary(&["performance", "--config", "bad.toml", "--out", "x"], cwd);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("ntbea.kapa"), "{err}");
    let (code, _) = binary(&["performance", "--out", "x"], cwd);
    assert_eq!(code, 2);
    let (code, err) = binary(&["performance", "--config", "tiny.toml", "--out", "run"], cwd);
    assert_eq!(code, 0, "{err}");
    let (code, err) = binary(&["performance", "--config", "tiny.toml", "--out", "run", "--seed", "9"], cwd);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("different configuration"), "{err}");
    let (code, _) = binary(&["analyze", "--config", "tiny.toml", "--out", "empty"], cwd);
    assert_eq!(code, 3);
    let (code, _) = binary(&["frobnicate"], cwd);
    assert_ne!(code, 0);
}
