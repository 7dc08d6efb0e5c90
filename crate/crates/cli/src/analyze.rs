//! The analysis stage: PCA, parallel analysis, clustering tests, CCA and the
//! per-parameter homogeneity tests on fingerprints.

use std::collections::BTreeMap;

use gamespace::analysis::{
    bonferroni, cca, homogeneity_test, mann_whitney_clustering, parallel_analysis, pca, standardize, DataMatrix,
    TestResult,
};
use gamespace::features::{EnvKey, FeatureTable};
use gamespace::ntbea::{marginal_homogeneity_table, Fingerprint, SearchSpace};
use gamespace::rng::{label, stream};
use gamespace::Error;
use log::{info, warn};
use nalgebra::DMatrix;

use crate::config::{ExperimentConfig, SPACES};
use crate::error::CliError;
use crate::manifest::{sha256_hex, Workspace};
use crate::stages::{environments, fingerprint_file};

const STAGE: &str = "analyze";

/// A feature space loaded from the output directory.
struct Space {
    name: String,
    table: FeatureTable,
    timing: bool,
}

fn load_space(ws: &Workspace, name: &str) -> Result<Option<Space>, CliError> {
    let csv_file = format!("{name}.csv");
    let side_file = format!("{name}.json");
    if !ws.verify(&csv_file) {
        return Ok(None);
    }
    let csv_text = std::fs::read_to_string(ws.path(&csv_file))?;
    let sidecar = std::fs::read_to_string(ws.path(&side_file)).ok();
    let table = FeatureTable::read(&csv_text, sidecar.as_deref())?;
    Ok(Some(Space { name: name.to_string(), table, timing: ws.is_timing(&csv_file) }))
}

struct CsvOut {
    writer: csv::Writer<Vec<u8>>,
    rows: usize,
}

impl CsvOut {
    fn new<I: IntoIterator<Item = S>, S: AsRef<[u8]>>(header: I) -> Result<CsvOut, CliError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(CsvOut { writer, rows: 0 })
    }

    fn row<I: IntoIterator<Item = S>, S: AsRef<[u8]>>(&mut self, rec: I) -> Result<(), CliError> {
        self.rows += 1;
        Ok(self.writer.write_record(rec)?)
    }

    fn finish(self, ws: &mut Workspace, rel: &str, timing: bool) -> Result<(), CliError> {
        let bytes = self.writer.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
        ws.write(Some(STAGE), rel, &bytes, Some(self.rows), timing)
    }
}

fn component_names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|c| format!("{prefix}{c}")).collect()
}

fn test_row(
    out: &mut CsvOut,
    space: &str,
    projection: &str,
    attribute: &str,
    result: Result<TestResult, Error>,
) -> Result<(), CliError> {
    match result {
        Ok(r) => {
            let groups = r.groups.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(";");
            out.row([
                space.to_string(),
                projection.into(),
                attribute.into(),
                r.method,
                groups,
                r.statistic.to_string(),
                r.p_value.to_string(),
            ])
        }
        Err(Error::DegenerateGroups(why)) => {
            out.row([space, projection, attribute, "not-applicable", "", "", ""])?;
            info!("{space}/{projection}/{attribute}: {why}");
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

/// Standardized data of one space, rows keyed by environment.
fn standardized(space: &Space) -> Result<(DataMatrix, Vec<String>), CliError> {
    let s = standardize(&space.table.to_data_matrix()?)?;
    if !s.dropped.is_empty() {
        warn!("{}: constant features dropped: {}", space.name, s.dropped.join(", "));
    }
    Ok((s.matrix, s.dropped))
}

fn analyse_space(config: &ExperimentConfig, ws: &mut Workspace, space: &Space) -> Result<(), CliError> {
    let name = &space.name;
    let dir = format!("analysis/{name}");
    let (z, _) = standardized(space)?;
    if z.nrows() < 3 || z.ncols() < 2 {
        warn!("{name}: {}x{} after standardization; too small to analyse", z.nrows(), z.ncols());
        return Ok(());
    }
    let mut rng = stream(config.seed, &[label("analysis"), label(name)]);
    let pa = parallel_analysis(&z, config.analysis.parallel_reps, config.analysis.threshold, &mut rng)?;
    let k = pa.significant.max(2).min(z.ncols());
    info!("{name}: {} significant components; keeping {k}", pa.significant);

    let mut scree = CsvOut::new(["component", "eigenvalue", "random", "significant"])?;
    for (i, (real, random)) in pa.real.iter().zip(&pa.random).enumerate() {
        scree.row([(i + 1).to_string(), real.to_string(), random.to_string(), (i < pa.significant).to_string()])?;
    }
    scree.finish(ws, &format!("{dir}/scree.csv"), space.timing)?;

    let r = pca(&z, k)?;
    let mut header = vec!["feature".to_string()];
    header.extend(component_names("PC", k));
    header.extend(component_names("RC", k));
    let mut loadings = CsvOut::new(&header)?;
    for (j, feature) in r.columns.iter().enumerate() {
        let mut rec = vec![feature.clone()];
        rec.extend((0..k).map(|c| r.loadings[(j, c)].to_string()));
        rec.extend((0..k).map(|c| r.rotated[(j, c)].to_string()));
        loadings.row(rec)?;
    }
    loadings.finish(ws, &format!("{dir}/pca_loadings.csv"), space.timing)?;

    let keys: Vec<EnvKey> = space.table.rows.iter().map(|row| row.key).collect();
    let mut header = vec!["game".to_string(), "players".into(), "opponent".into()];
    header.extend(component_names("RC", k));
    let mut scores = CsvOut::new(&header)?;
    for (i, key) in keys.iter().enumerate() {
        let mut rec = vec![key.game.to_string(), key.players.to_string(), key.opponent.map(|o| o.to_string()).unwrap_or_default()];
        rec.extend((0..k).map(|c| r.rotated_scores[(i, c)].to_string()));
        scores.row(rec)?;
    }
    scores.finish(ws, &format!("{dir}/scores.csv"), space.timing)?;

    // Clustering, in the full space and in the first two components.
    let plane = pca(&z, 2)?;
    let plane = DataMatrix::from_values(DMatrix::from_fn(z.nrows(), 2, |i, c| plane.scores[(i, c)]))?;
    let game: Vec<String> = keys.iter().map(|k| k.game.to_string()).collect();
    let players: Vec<String> = keys.iter().map(|k| k.players.to_string()).collect();
    let opponent: Option<Vec<String>> = keys.iter().map(|k| k.opponent.map(|o| o.to_string())).collect();
    let mut tests = CsvOut::new(["space", "projection", "attribute", "method", "groups", "statistic", "p"])?;
    for (projection, points) in [("full", &z), ("pca2", &plane)] {
        test_row(&mut tests, name, projection, "game", mann_whitney_clustering(points, &game))?;
        test_row(&mut tests, name, projection, "players", mann_whitney_clustering(points, &players))?;
        let opp = match &opponent {
            Some(labels) => mann_whitney_clustering(points, labels),
            None => Err(Error::DegenerateGroups("rows carry no opponent".into())),
        };
        test_row(&mut tests, name, projection, "opponent", opp)?;
    }
    tests.finish(ws, &format!("{dir}/tests.csv"), space.timing)
}

fn analyse_pair(config: &ExperimentConfig, ws: &mut Workspace, a: &Space, b: &Space) -> Result<(), CliError> {
    let (x, _) = standardized(a)?;
    let (y, _) = standardized(b)?;
    if x.nrows() != y.nrows() {
        return Err(Error::RowCountMismatch { left: x.nrows(), right: y.nrows() }.into());
    }
    if x.rows != y.rows {
        return Err(CliError::Runtime(format!("{} and {} list different environments", a.name, b.name)));
    }
    if x.nrows() <= x.ncols() + y.ncols() {
        // With this few rows some combination of each set matches exactly, whatever the data.
        warn!(
            "cca {}-{}: {} rows for {}+{} features; correlations near 1 are expected",
            a.name,
            b.name,
            x.nrows(),
            x.ncols(),
            y.ncols()
        );
    }
    let k = 2.min(x.ncols()).min(y.ncols());
    let r = cca(&x, &y, k, config.analysis.cca_ridge)?;
    let timing = a.timing || b.timing;
    let dir = format!("analysis/cca/{}-{}", a.name, b.name);
    let mut header = vec!["set".to_string(), "feature".into()];
    header.extend(component_names("CC", k));
    let mut loadings = CsvOut::new(&header)?;
    for (set, cols, m) in [(&a.name, &x.columns, &r.x_loadings), (&b.name, &y.columns, &r.y_loadings)] {
        for (j, feature) in cols.iter().enumerate() {
            let mut rec = vec![set.clone(), feature.clone()];
            rec.extend((0..k).map(|c| m[(j, c)].to_string()));
            loadings.row(rec)?;
        }
    }
    loadings.finish(ws, &format!("{dir}/cca_loadings.csv"), timing)?;
    let mut corr = CsvOut::new(["component", "correlation"])?;
    for (c, v) in r.correlations.iter().enumerate() {
        corr.row([(c + 1).to_string(), v.to_string()])?;
    }
    corr.finish(ws, &format!("{dir}/cca_correlations.csv"), timing)
}

/// Player-count homogeneity of every parameter, per game and opponent.
fn homogeneity(config: &ExperimentConfig, ws: &mut Workspace) -> Result<(), CliError> {
    let mut groups: BTreeMap<(String, String), Vec<Fingerprint>> = BTreeMap::new();
    for env in environments(config) {
        let file = fingerprint_file(&env);
        if !ws.verify(&file) {
            return Ok(());
        }
        let fp: Fingerprint = serde_json::from_slice(&std::fs::read(ws.path(&file))?)?;
        groups.entry((env.game.to_string(), fp.opponent.to_string())).or_default().push(fp);
    }
    let params: Vec<String> = SearchSpace::mcts().dims.into_iter().map(|d| d.name).collect();
    let mut labels = Vec::new();
    let mut results = Vec::new();
    for ((game, opponent), fps) in &groups {
        if fps.len() < 2 {
            continue;
        }
        for p in &params {
            let table = marginal_homogeneity_table(fps, p)?;
            match homogeneity_test(&table) {
                Ok(r) => {
                    labels.push((game.clone(), opponent.clone(), p.clone()));
                    results.push(r);
                }
                Err(Error::EmptyTable) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    if results.is_empty() {
        return Ok(());
    }
    let b = bonferroni(&results, config.analysis.alpha)?;
    let mut out = CsvOut::new(["game", "opponent", "param", "method", "statistic", "p", "threshold", "significant"])?;
    for (i, ((game, opponent, param), r)) in labels.iter().zip(&results).enumerate() {
        out.row([
            game.clone(),
            opponent.clone(),
            param.clone(),
            r.method.clone(),
            r.statistic.to_string(),
            r.p_value.to_string(),
            b.threshold.to_string(),
            b.significant.contains(&i).to_string(),
        ])?;
    }
    out.finish(ws, "analysis/homogeneity.csv", false)
}

pub fn cmd_analyze(config: &ExperimentConfig, ws: &mut Workspace) -> Result<(), CliError> {
    // The analysis is redone whenever its inputs change.
    let digest = input_digest(ws);
    if ws.stage_complete(STAGE) && ws.unit_done(STAGE, &digest, &[]) {
        info!("stage `{STAGE}` already complete; nothing to do");
        return Ok(());
    }
    ws.begin_stage(STAGE)?;
    let mut spaces = BTreeMap::new();
    for name in SPACES {
        if let Some(s) = load_space(ws, name)? {
            spaces.insert(name.to_string(), s);
        }
    }
    if spaces.is_empty() {
        return Err(CliError::Runtime(format!("no feature CSVs found in {}", ws.root.display())));
    }
    for name in SPACES {
        if let Some(s) = spaces.get(name) {
            analyse_space(config, ws, s)?;
        }
    }
    for [a, b] in &config.analysis.cca {
        match (spaces.get(a), spaces.get(b)) {
            (Some(x), Some(y)) => analyse_pair(config, ws, x, y)?,
            _ => info!("skipping CCA {a}-{b}: space missing"),
        }
    }
    homogeneity(config, ws)?;
    crate::plot::render_all(ws, STAGE)?;
    ws.set_units(STAGE, [digest])?;
    ws.finish_stage(STAGE)
}

/// Checksum over the checksums of every input the analysis reads.
fn input_digest(ws: &Workspace) -> String {
    let inputs: Vec<String> = ws
        .manifest
        .files
        .iter()
        .filter(|(f, _)| !f.starts_with("analysis/") && !f.starts_with("plots/") && (f.ends_with(".csv") || f.ends_with(".json")))
        .map(|(f, e)| format!("{f}:{}", e.sha256))
        .collect();
    sha256_hex(inputs.join("\n").as_bytes())
}
