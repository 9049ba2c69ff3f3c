use std::path::{Path, PathBuf};

use equicity::analytics::{analyze, interaction_means, write_interaction_csv, DecisionPanel, Factor, ScorePanel, Section};
use equicity::badges::issue_badges;
use equicity::engine::{
    evaluate, massing, read_decisions_csv, replay, simulate, write_decisions_csv, ActorPolicy, EngineError, GameConfig,
    GameContext, RoundRecord, VoxelAssignment,
};
use equicity::ipf::{ipf_fit, quantize_volumes, reconcile, IpfParams, ReconcilePolicy, VolumeMatrix};
use equicity::pooling::{pool_opinions, AllocationMatrix, ControlTensor, InterestTensor};
use equicity::tensor::Matrix;
use equicity::voxel::mean_weights;
use equicity_service::{AppState, ServiceConfig};
use serde::{Deserialize, Serialize};

use crate::csvio::{read_matrix, read_tensor, read_vector, read_volumes, write_matrix, write_volumes};
use crate::{CliError, Command};

fn engine(e: impl Into<EngineError>) -> CliError {
    e.into().into()
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| CliError::validation("Json", format!("{}: {e}", path.display())))
}

/// Pretty JSON to `path`, or stdout.
fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::runtime("Json", e.to_string()))?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn load_config(path: &Path) -> Result<GameConfig, CliError> {
    GameConfig::load(path).map_err(CliError::from)
}

/// Interests as `actor,site,colour,value` and controls as
/// `site,actor,colour,value`.
fn read_pair(interests: &Path, controls: &Path) -> Result<(InterestTensor, ControlTensor), CliError> {
    let x = InterestTensor::normalized(&read_tensor(interests, ["actor", "site", "colour"])?).map_err(engine)?;
    let c = ControlTensor::normalized(&read_tensor(controls, ["site", "actor", "colour"])?).map_err(engine)?;
    Ok((x, c))
}

/// What `mass` writes and `eval` reads.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MassFile {
    pub grid_hash: String,
    pub weights: Vec<f64>,
    pub volumes: VolumeMatrix,
    pub voxels: VoxelAssignment,
    /// Morton code of each selected voxel, parallel to `voxels.selected`.
    pub morton_codes: Vec<u64>,
}

const RECORD_PREFIX: &str = "round-";

fn record_name(round: usize) -> String {
    format!("{RECORD_PREFIX}{round:03}.json")
}

fn read_records(dir: &Path) -> Result<Vec<RoundRecord>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(RECORD_PREFIX) && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::validation("Ingest", format!("{}: no round records", dir.display())));
    }
    paths.iter().map(|p| read_json(p)).collect()
}

pub fn run(command: Command, header: bool) -> Result<(), CliError> {
    match command {
        Command::Pool { interests, controls, out } => {
            let (x, c) = read_pair(&interests, &controls)?;
            let a = pool_opinions(&x, &c).map_err(engine)?;
            write_matrix(Some(&out), a.matrix(), header)
        }
        Command::Ipf {
            seed,
            rows,
            cols,
            eps,
            max_iter,
            reconcile: policy,
            quantize,
            out,
            report,
        } => {
            let policy: ReconcilePolicy = serde_json::from_value(serde_json::Value::String(policy.clone()))
                .map_err(|_| CliError::validation("InvalidArgument", format!("unknown reconcile policy {policy:?}")))?;
            let seed = read_matrix(&seed, header)?;
            let targets =
                reconcile(read_vector(&rows, header)?, read_vector(&cols, header)?, policy).map_err(engine)?;
            let params = IpfParams { epsilon: eps, max_iter };
            let fit = ipf_fit(&seed, &targets, params).map_err(engine)?;
            if !fit.report.converged {
                eprintln!(
                    "warning: not converged after {} iterations (error {:e})",
                    fit.report.iterations, fit.report.error
                );
            }
            if let Some(path) = report {
                write_json(Some(&path), &fit.report)?;
            }
            if quantize {
                write_volumes(out.as_deref(), &quantize_volumes(&fit.matrix), header)
            } else {
                write_matrix(out.as_deref(), &fit.matrix, header)
            }
        }
        Command::Mass {
            config,
            volumes,
            weights,
            out,
        } => {
            let ctx = GameContext::build(&load_config(&config)?)?;
            let volumes = read_volumes(&volumes, header)?;
            let weights = match weights {
                Some(path) => {
                    let w = read_vector(&path, header)?;
                    mean_weights(&Matrix::from_vec(w.len(), 1, w).map_err(engine)?).map_err(engine)?
                }
                None => mean_weights(&ctx.default_weights).map_err(engine)?,
            };
            let m = massing(&ctx, &volumes, &weights)?;
            let morton_codes = m.voxels.selected.iter().map(|&l| ctx.grid.buildable(l as usize).morton).collect();
            write_json(
                Some(&out),
                &MassFile {
                    grid_hash: ctx.grid.hash().to_string(),
                    weights,
                    volumes,
                    voxels: m.voxels,
                    morton_codes,
                },
            )
        }
        Command::Eval { config, voxels, out } => {
            let ctx = GameContext::build(&load_config(&config)?)?;
            let file: MassFile = read_json(&voxels)?;
            if file.grid_hash != ctx.grid.hash() {
                return Err(CliError::validation(
                    "GridMismatch",
                    format!("{} was made for another grid", voxels.display()),
                ));
            }
            let mass = file.voxels.to_mass(&ctx.grid)?;
            write_json(out.as_deref(), &evaluate(&ctx, &file.volumes, &mass)?)
        }
        Command::Badges {
            interests,
            controls,
            decision,
            public,
            out,
        } => {
            let (x, c) = read_pair(&interests, &controls)?;
            let a = AllocationMatrix::new(read_matrix(&decision, header)?);
            let badges = issue_badges(&x, &c, &a).map_err(engine)?;
            if public {
                write_json(out.as_deref(), &badges.public())
            } else {
                write_json(out.as_deref(), &badges)
            }
        }
        Command::Simulate {
            config,
            policies,
            rounds,
            seed,
            out,
        } => {
            let config = load_config(&config)?;
            let policies: Vec<ActorPolicy> = match policies {
                Some(path) => read_json(&path)?,
                None => vec![ActorPolicy::Stubborn; config.actors.len()],
            };
            let records = simulate(&config, &policies, rounds, seed)?;
            create_dir(&out)?;
            for r in &records {
                write_json(Some(&out.join(record_name(r.round))), r)?;
            }
            let dataset = equicity::engine::DecisionDataset {
                rounds: records.iter().map(|r| r.interests.clone()).collect(),
            };
            let csv_path = out.join("decisions.csv");
            let file = std::fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
            write_decisions_csv(&dataset, file)?;
            for r in &records {
                let scores: Vec<String> = r
                    .outputs
                    .scores
                    .names
                    .iter()
                    .zip(&r.outputs.scores.values)
                    .map(|(n, v)| format!("{n}={v:.4}"))
                    .collect();
                println!("round {}: {}", r.round, scores.join(" "));
            }
            Ok(())
        }
        Command::Replay { config, records } => {
            let config = load_config(&config)?;
            let stored = read_records(&records)?;
            let again = replay(&config, &stored)?;
            for (a, b) in stored.iter().zip(&again) {
                if a.hash() != b.hash() {
                    return Err(CliError::runtime("ReplayMismatch", format!("round {} differs on replay", a.round)));
                }
            }
            println!("{} rounds reproduced", stored.len());
            Ok(())
        }
        Command::Serve {
            config,
            port,
            host,
            state_dir,
            admin_token,
        } => serve(config, &host, port, state_dir, admin_token),
        Command::Analyze { records, decisions, out } => {
            let (panel, scores) = match (records, decisions) {
                (Some(dir), _) => {
                    let records = read_records(&dir)?;
                    (DecisionPanel::from_records(&records), Some(ScorePanel::from_records(&records)))
                }
                (None, Some(path)) => {
                    let file = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
                    (DecisionPanel::from_dataset(&read_decisions_csv(file)?), None)
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            let report = analyze(&panel, scores.as_ref());
            create_dir(&out)?;
            write_json(Some(&out.join("report.json")), &report)?;
            let pairs = [
                (Factor::Actor, Factor::Colour),
                (Factor::Site, Factor::Actor),
                (Factor::Site, Factor::Colour),
                (Factor::Round, Factor::Colour),
            ];
            for (a, b) in pairs {
                let path = out.join(format!(
                    "interaction-{}-{}.csv",
                    a.label().to_lowercase(),
                    b.label().to_lowercase()
                ));
                let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
                write_interaction_csv(&interaction_means(&panel, a, b), a, b, file)
                    .map_err(|e| CliError::from_csv(&path, e))?;
            }
            for s in &report.round_stats {
                println!("round {}: mean {:.4} std {:.4} (n={})", s.round, s.mean, s.std, s.n);
            }
            match &report.cell_levene {
                Section::Ok(l) => println!("levene W={:.4} df=({}, {}) p={:.4}", l.w, l.df_between, l.df_within, l.p),
                Section::Unavailable(why) => println!("levene unavailable: {why}"),
            }
            if let Some(row) = report.cell_anova.ok().and_then(|t| t.row("Actor")) {
                println!(
                    "actor effect F={:.4} df={} partial eta2={:.4}",
                    row.f.unwrap_or(f64::NAN),
                    row.df,
                    row.partial_eta_sq.unwrap_or(f64::NAN)
                );
            }
            Ok(())
        }
    }
}

fn serve(
    config: Option<PathBuf>,
    host: &str,
    port: u16,
    state_dir: Option<PathBuf>,
    admin_token: Option<String>,
) -> Result<(), CliError> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let config = config.map(|p| load_config(&p)).transpose()?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::runtime("Io", e.to_string()))?;
    runtime.block_on(async move {
        let state = AppState::new(ServiceConfig {
            state_dir,
            admin_token,
            ..ServiceConfig::default()
        })
        .map_err(|e| CliError::runtime("CorruptState", e))?;
        if let Some(config) = config {
            let created = state
                .create_game(config)
                .await
                .map_err(|e| CliError::validation(e.code, e.message))?;
            write_json(None, &created)?;
        }
        let addr = format!("{host}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::runtime("Io", format!("{addr}: {e}")))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(|e| CliError::runtime("Io", e.to_string()))?);
        equicity_service::serve(listener, state)
            .await
            .map_err(|e| CliError::runtime("Io", e.to_string()))
    })
}
