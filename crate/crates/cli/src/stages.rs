//! The four data-collection stages.

use gamespace::features::{
    agent_performance_row, default_roster, game_attribute_row, ntbea_row, round_robin_rows, EnvKey, FeatureRow,
    FeatureTable, PlayConfig, ATTRIBUTE_NAMES,
};
use gamespace::ntbea::{fingerprint, Fingerprint, FingerprintConfig, LogEntry, NtbeaConfig};
use gamespace::rng::{label, stream};
use log::info;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::Workspace;

pub fn environments(config: &ExperimentConfig) -> Vec<EnvKey> {
    let mut out = Vec::new();
    for &g in &config.games {
        for &p in &config.players {
            for &o in &config.opponents {
                out.push(EnvKey::new(g, p, o));
            }
        }
    }
    out
}

fn play_config(config: &ExperimentConfig) -> PlayConfig {
    PlayConfig { rules: config.rules, opponent_budget: config.budgets.opponent, agent_budget: config.budgets.agent }
}

/// File-name friendly environment label, e.g. `loveletter-3p-RND`.
pub fn env_slug(env: &EnvKey) -> String {
    env.to_string()
}

/// Writes `<space>.csv` and its `<space>.json` sidecar.
fn write_table(
    ws: &mut Workspace,
    stage: &str,
    space: &str,
    names: Vec<String>,
    rows: Vec<FeatureRow>,
    timing: bool,
) -> Result<(), CliError> {
    let table = FeatureTable::new(space, names, rows);
    let mut bytes = Vec::new();
    table.write_csv(&mut bytes)?;
    ws.write(Some(stage), &format!("{space}.csv"), &bytes, Some(table.rows.len()), timing)?;
    ws.write(Some(stage), &format!("{space}.json"), (table.sidecar_json() + "\n").as_bytes(), None, false)?;
    Ok(())
}

/// Runs `body` unless `stage` already finished with intact files.
fn run_stage(
    ws: &mut Workspace,
    stage: &str,
    body: impl FnOnce(&mut Workspace) -> Result<(), CliError>,
) -> Result<(), CliError> {
    if ws.stage_complete(stage) {
        info!("stage `{stage}` already complete; nothing to do");
        return Ok(());
    }
    ws.begin_stage(stage)?;
    body(ws)?;
    ws.finish_stage(stage)
}

pub fn cmd_attributes(config: &ExperimentConfig, ws: &mut Workspace) -> Result<(), CliError> {
    run_stage(ws, "attributes", |ws| {
        let play = play_config(config);
        let mut rows = Vec::new();
        for env in environments(config) {
            info!("attributes: {env}");
            let mut rng = stream(config.seed, &[label("attributes"), label(&env_slug(&env))]);
            rows.push(game_attribute_row(env, config.games_per_row.attributes, &play, &mut rng)?);
        }
        let names = ATTRIBUTE_NAMES.iter().map(|s| s.to_string()).collect();
        write_table(ws, "attributes", "attributes", names, rows, true)
    })
}

fn log_csv(logs: &[Vec<LogEntry>]) -> Result<(Vec<u8>, usize), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["run", "iteration", "point", "evaluation", "running_best"])?;
    let mut rows = 0;
    for (run, log) in logs.iter().enumerate() {
        for e in log {
            w.write_record([
                run.to_string(),
                e.iteration.to_string(),
                e.point.clone(),
                e.evaluation.to_string(),
                e.running_best.clone(),
            ])?;
            rows += 1;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok((bytes, rows))
}

pub fn fingerprint_file(env: &EnvKey) -> String {
    format!("fingerprints/{}.json", env_slug(env))
}

pub fn cmd_fingerprint(config: &ExperimentConfig, ws: &mut Workspace) -> Result<(), CliError> {
    const STAGE: &str = "fingerprint";
    run_stage(ws, STAGE, |ws| {
        let fp_config = FingerprintConfig {
            runs: config.ntbea.runs,
            ntbea: NtbeaConfig {
                iterations: config.ntbea.iterations,
                neighbours: config.ntbea.neighbours,
                kappa: config.ntbea.kappa,
            },
            budget: config.budgets.agent,
            opponent_budget: config.budgets.opponent,
            rules: config.rules,
            seed: config.seed,
        };
        let mut rows = Vec::new();
        let mut names = Vec::new();
        for env in environments(config) {
            let unit = env_slug(&env);
            let json_file = fingerprint_file(&env);
            let log_file = format!("fingerprints/{unit}_log.csv");
            let fp: Fingerprint = if ws.unit_done(STAGE, &unit, &[json_file.clone(), log_file.clone()]) {
                info!("fingerprint: {env} already done");
                serde_json::from_slice(&std::fs::read(ws.path(&json_file))?)?
            } else {
                info!("fingerprint: {env}");
                let opponent = env.opponent.expect("grid environments have opponents");
                let (fp, logs) = fingerprint(env.game, env.players, opponent, &fp_config)?;
                let (log_bytes, log_rows) = log_csv(&logs)?;
                ws.write(Some(STAGE), &log_file, &log_bytes, Some(log_rows), false)?;
                let json = serde_json::to_string_pretty(&fp)? + "\n";
                ws.write(Some(STAGE), &json_file, json.as_bytes(), None, false)?;
                ws.mark_unit(STAGE, &unit)?;
                fp
            };
            names = fp.feature_names.clone();
            rows.push(ntbea_row(env, &fp)?);
        }
        write_table(ws, STAGE, "ntbea", names, rows, false)
    })
}

fn roster_names(config: &ExperimentConfig) -> Vec<String> {
    default_roster(config.budgets.agent).iter().map(|e| e.name.to_string()).collect()
}

pub fn cmd_performance(config: &ExperimentConfig, ws: &mut Workspace) -> Result<(), CliError> {
    run_stage(ws, "performance", |ws| {
        let play = play_config(config);
        let roster = default_roster(config.budgets.agent);
        let mut rows = Vec::new();
        for env in environments(config) {
            info!("performance: {env}");
            let mut rng = stream(config.seed, &[label("performance"), label(&env_slug(&env))]);
            rows.push(agent_performance_row(env, &roster, config.games_per_row.performance, &play, &mut rng)?);
        }
        write_table(ws, "performance", "performance", roster_names(config), rows, false)
    })
}

pub fn cmd_roundrobin(config: &ExperimentConfig, ws: &mut Workspace) -> Result<(), CliError> {
    run_stage(ws, "roundrobin", |ws| {
        let play = play_config(config);
        let roster = default_roster(config.budgets.agent);
        let mut rows = Vec::new();
        let mut counts = csv::Writer::from_writer(Vec::new());
        counts.write_record(["game", "players", "agent", "games"])?;
        let mut count_rows = 0;
        for &g in &config.games {
            for &p in &config.players {
                info!("roundrobin: {g}-{p}p");
                let mut rng = stream(config.seed, &[label("roundrobin"), label(g.as_str()), p as u64]);
                let (row, played) =
                    round_robin_rows(g, p, &roster, config.games_per_row.round_robin, &play, &mut rng)?;
                for (entry, n) in roster.iter().zip(&played) {
                    counts.write_record([g.to_string(), p.to_string(), entry.name.to_string(), n.to_string()])?;
                    count_rows += 1;
                }
                rows.push(row);
            }
        }
        let bytes = counts.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
        ws.write(Some("roundrobin"), "roundrobin_games.csv", &bytes, Some(count_rows), false)?;
        write_table(ws, "roundrobin", "roundrobin", roster_names(config), rows, false)
    })
}
