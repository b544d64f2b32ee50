use std::path::PathBuf;

use serde_json::Map;

use boed_core::models::ModelId;
use boed_core::trainer::{hyperparameter_row, train_with, Profile, TrainConfig, TrainError, TrainOptions, TrainResult};

use crate::config::{merge, peek, read_document, set};
use crate::{ensure_dir, CliError, TrainArgs};

#[derive(Debug)]
pub struct TrainOutputs {
    pub config: TrainConfig,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub header: String,
    pub result: TrainResult,
}

/// Resolves defaults, config file and flags into one validated config.
pub fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut doc = match &args.common.config {
        Some(path) => read_document(path)?,
        None => Map::new(),
    };
    let model: ModelId = match args.common.model {
        Some(m) => m,
        None => peek(&doc, "model")?.ok_or_else(|| CliError::Usage("train needs --model (or a config with \"model\")".into()))?,
    };
    let profile: Profile = match args.common.profile {
        Some(p) => p,
        None => peek(&doc, "profile")?.unwrap_or(Profile::Desk),
    };
    set(&mut doc, "model", Some(model));
    set(&mut doc, "profile", Some(profile));
    set(&mut doc, "seed", args.common.seed);
    set(&mut doc, "reward_mode", args.reward);
    set(&mut doc, "gamma", args.gamma);
    set(&mut doc, "iterations", args.iterations);
    set(&mut doc, "contrastive", args.contrastive);
    let config: TrainConfig = merge(&TrainConfig::for_model(model, profile), &doc)?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

/// Run header: the published table row for the model, then the resolved values.
pub fn run_header(config: &TrainConfig) -> String {
    let row = hyperparameter_row(config.model);
    let mut out = String::new();
    out.push_str(&format!("# boed train: model {} profile {}\n", config.model, config.profile));
    out.push_str("# published hyperparameters:\n");
    for (k, v) in row.table_entries() {
        out.push_str(&format!("#   {k} = {v}\n"));
    }
    if config.profile == Profile::Desk {
        out.push_str("# desk profile: iterations / 10, contrastive samples / 100 (at least 1e3)\n");
    }
    out.push_str(&format!(
        "# resolved: {}\n",
        serde_json::to_string(config).expect("config serialises")
    ));
    out.push_str(&format!("# config digest: {}\n", config.digest()));
    out
}

pub fn file_stem(config: &TrainConfig) -> String {
    format!(
        "train-{}-{}-gamma{}-seed{}",
        config.model,
        serde_json::to_value(config.reward_mode).expect("serialises").as_str().expect("string"),
        config.gamma,
        config.seed
    )
}

impl TrainOutputs {
    pub fn summary(&self) -> String {
        format!("{}checkpoint: {}\nlog: {}", self.header, self.checkpoint.display(), self.log.display())
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutputs, CliError> {
    let config = resolve_train_config(args)?;
    ensure_dir(&args.common.out)?;
    let stem = file_stem(&config);
    let checkpoint = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| args.common.out.join(format!("{stem}.ckpt")));
    let log = args.common.out.join(format!("{stem}-log.csv"));
    let header = run_header(&config);
    std::fs::write(args.common.out.join(format!("{stem}-header.txt")), &header)?;

    let quiet = args.quiet;
    let result = train_with(&config, TrainOptions { timing: args.timing }, |row| {
        if !quiet {
            eprintln!(
                "iter {:>6}  return {:.4} ± {:.4}  critic {:.4}  actor {:.4}  alpha {:.4}",
                row.iteration, row.mean_return, row.return_stderr, row.critic_loss, row.actor_loss, row.alpha
            );
        }
    })
    .map_err(train_error)?;
    if let Some(parent) = checkpoint.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    result.save(&config, &checkpoint, &log).map_err(train_error)?;
    Ok(TrainOutputs {
        config,
        checkpoint,
        log,
        header,
        result,
    })
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::InvalidConfig(m) => CliError::Usage(m),
        other => CliError::Runtime(other.to_string()),
    }
}
