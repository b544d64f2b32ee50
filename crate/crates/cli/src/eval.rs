use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Map;

use boed_core::agents::{baseline_random, load_policy, AgentError, MyopicConfig, MyopicSnisPolicy, PolicyAgent, RandomPolicy};
use boed_core::estimators::{mean_stderr, sequential_bounds, BoundConfig, DesignPolicy, SequentialBounds};
use boed_core::models::{Design, Model, ModelId};
use boed_core::rng::{stream, StreamKind};
use boed_core::trainer::{hyperparameter_row, Profile};

use crate::config::{merge, peek, read_document, set};
use crate::{ensure_dir, CliError, EvalArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "rl")]
    Rl,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "myopic-snis")]
    MyopicSnis,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rl => "rl",
            Method::Random => "random",
            Method::MyopicSnis => "myopic-snis",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rl" => Ok(Method::Rl),
            "random" => Ok(Method::Random),
            "myopic-snis" => Ok(Method::MyopicSnis),
            other => Err(CliError::Usage(format!("unknown method {other:?} (expected rl, random or myopic-snis)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub model: ModelId,
    pub profile: Profile,
    pub method: Method,
    pub seed: u64,
    pub rollouts: usize,
    pub contrastive: usize,
    pub horizon: usize,
    pub checkpoint: Option<PathBuf>,
    pub label: Option<String>,
    pub myopic: MyopicConfig,
    /// Random candidate designs scored by myopic-snis on continuous design spaces.
    pub n_candidates: usize,
}

impl EvalConfig {
    /// Desk: `L = 1e4`, 500 rollouts for prey and 200 otherwise. Paper: the
    /// published evaluation `L` and 2000 (rl) or 1000 (baselines) rollouts.
    pub fn defaults(model: ModelId, profile: Profile, method: Method) -> Self {
        let (rollouts, contrastive) = match profile {
            Profile::Desk => (if model == ModelId::Prey { 500 } else { 200 }, 10_000),
            Profile::Paper => (
                if method == Method::Rl { 2000 } else { 1000 },
                if model == ModelId::Ces { 10_000_000 } else { 1_000_000 },
            ),
        };
        Self {
            model,
            profile,
            method,
            seed: 0,
            rollouts,
            contrastive,
            horizon: hyperparameter_row(model).horizon,
            checkpoint: None,
            label: None,
            myopic: MyopicConfig::default(),
            n_candidates: 64,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.method.as_str().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRow {
    pub model: String,
    pub method: String,
    pub seed: u64,
    pub rollout: usize,
    pub t: usize,
    pub g_lower: f64,
    pub g_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: String,
    pub method: String,
    pub t: usize,
    pub lower_mean: f64,
    pub lower_stderr: f64,
    pub upper_mean: f64,
    pub upper_stderr: f64,
    pub n: usize,
}

#[derive(Debug)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub bounds: SequentialBounds,
    pub rows: Vec<RolloutRow>,
    pub aggregate: Vec<AggregateRow>,
    pub rollouts_csv: PathBuf,
    pub aggregate_csv: PathBuf,
}

impl EvalReport {
    pub fn at(&self, t: usize) -> &AggregateRow {
        &self.aggregate[t - 1]
    }

    pub fn summary(&self) -> String {
        let last = self.aggregate.last().expect("horizon >= 1");
        format!(
            "{} {} t={}: sPCE {:.4} ± {:.4}  sNMC {:.4} ± {:.4}  (L={}, n={})\nrollouts: {}\naggregate: {}",
            last.model,
            last.method,
            last.t,
            last.lower_mean,
            last.lower_stderr,
            last.upper_mean,
            last.upper_stderr,
            self.config.contrastive,
            last.n,
            self.rollouts_csv.display(),
            self.aggregate_csv.display()
        )
    }
}

pub fn resolve_eval_config(args: &EvalArgs) -> Result<EvalConfig, CliError> {
    let mut doc = match &args.common.config {
        Some(path) => read_document(path)?,
        None => Map::new(),
    };
    let method: Method = match &args.method {
        Some(m) => m.parse()?,
        None => peek(&doc, "method")?.unwrap_or(Method::Rl),
    };
    let checkpoint: Option<PathBuf> = match &args.checkpoint {
        Some(c) => Some(c.clone()),
        None => peek(&doc, "checkpoint")?.flatten(),
    };
    match (method, &checkpoint) {
        (Method::Rl, None) => return Err(CliError::Usage("--method rl needs --checkpoint".into())),
        (Method::Random | Method::MyopicSnis, Some(_)) => {
            return Err(CliError::Usage(format!("--checkpoint only applies to --method rl, not {}", method.as_str())))
        }
        _ => {}
    }
    let model: ModelId = match args.common.model {
        Some(m) => m,
        None => match peek(&doc, "model")? {
            Some(m) => m,
            None => match &checkpoint {
                Some(path) => checkpoint_model(path)?,
                None => return Err(CliError::Usage("eval needs --model".into())),
            },
        },
    };
    let profile: Profile = match args.common.profile {
        Some(p) => p,
        None => peek(&doc, "profile")?.unwrap_or(Profile::Desk),
    };
    set(&mut doc, "model", Some(model));
    set(&mut doc, "profile", Some(profile));
    set(&mut doc, "method", Some(method));
    set(&mut doc, "checkpoint", checkpoint);
    set(&mut doc, "seed", args.common.seed);
    set(&mut doc, "rollouts", args.rollouts);
    set(&mut doc, "contrastive", args.contrastive);
    set(&mut doc, "horizon", args.horizon);
    set(&mut doc, "label", args.label.clone());
    let config: EvalConfig = merge(&EvalConfig::defaults(model, profile, method), &doc)?;
    if config.rollouts == 0 || config.contrastive == 0 || config.horizon == 0 || config.n_candidates == 0 {
        return Err(CliError::Usage("rollouts, contrastive, horizon and n_candidates must be >= 1".into()));
    }
    Ok(config)
}

fn checkpoint_model(path: &Path) -> Result<ModelId, CliError> {
    let (_, meta) = boed_core::autodiff::load_checkpoint(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    meta.model
        .parse()
        .map_err(|_| CliError::Runtime(format!("{}: unknown model id {:?}", path.display(), meta.model)))
}

/// Builds the policy named by the config; rl policies act deterministically.
pub fn build_policy(config: &EvalConfig, model: &Model) -> Result<Box<dyn DesignPolicy>, CliError> {
    Ok(match config.method {
        Method::Random => Box::new(RandomPolicy),
        Method::Rl => {
            let path = config.checkpoint.as_ref().expect("validated");
            let (actor, _) = load_policy(path, Some(config.model)).map_err(|e| match e {
                AgentError::ModelMismatch { .. } => CliError::Runtime(format!("{}: {e}", path.display())),
                other => CliError::Runtime(format!("loading {}: {other}", path.display())),
            })?;
            Box::new(PolicyAgent::new(actor, false).with_label(config.label()))
        }
        Method::MyopicSnis => {
            if model.design_space().is_discrete() {
                Box::new(MyopicSnisPolicy::new(config.myopic))
            } else {
                let mut rng = stream(config.seed, u64::MAX / 4, StreamKind::Policy);
                let candidates: Vec<Design> = (0..config.n_candidates).map(|_| baseline_random(model, &mut rng)).collect();
                Box::new(MyopicSnisPolicy::with_candidates(config.myopic, candidates))
            }
        }
    })
}

pub fn rollout_rows(config: &EvalConfig, bounds: &SequentialBounds) -> Vec<RolloutRow> {
    let (model, method) = (config.model.to_string(), config.label());
    let mut rows = Vec::with_capacity(bounds.rollouts.len() * config.horizon);
    for trace in &bounds.rollouts {
        for (i, (lo, up)) in trace.g_lower.iter().zip(&trace.g_upper).enumerate() {
            rows.push(RolloutRow {
                model: model.clone(),
                method: method.clone(),
                seed: config.seed,
                rollout: trace.rollout,
                t: i + 1,
                g_lower: *lo,
                g_upper: *up,
            });
        }
    }
    rows
}

/// Mean and standard error per `(model, method, t)`, computed from the per-rollout rows alone.
pub fn aggregate(rows: &[RolloutRow]) -> Vec<AggregateRow> {
    let mut groups: std::collections::BTreeMap<(String, String, usize), (Vec<f64>, Vec<f64>)> = Default::default();
    for r in rows {
        let e = groups.entry((r.model.clone(), r.method.clone(), r.t)).or_default();
        e.0.push(r.g_lower);
        e.1.push(r.g_upper);
    }
    groups
        .into_iter()
        .map(|((model, method, t), (lo, up))| {
            let (lower_mean, lower_stderr) = mean_stderr(&lo);
            let (upper_mean, upper_stderr) = mean_stderr(&up);
            AggregateRow {
                model,
                method,
                t,
                lower_mean,
                lower_stderr,
                upper_mean,
                upper_stderr,
                n: lo.len(),
            }
        })
        .collect()
}

pub fn write_rows<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(w);
    for r in rows {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

/// Runs a resolved evaluation and writes both CSVs into `out`.
pub fn run_eval(config: EvalConfig, out: &Path) -> Result<EvalReport, CliError> {
    let model = Model::new(config.model);
    let mut policy = build_policy(&config, &model)?;
    let bounds = sequential_bounds(
        &model,
        policy.as_mut(),
        &BoundConfig {
            contrastive: config.contrastive,
            horizon: config.horizon,
            rollouts: config.rollouts,
            seed: config.seed,
        },
    )
    .map_err(CliError::runtime)?;
    let rows = rollout_rows(&config, &bounds);
    let aggregate = aggregate(&rows);
    ensure_dir(out)?;
    let stem = format!("eval-{}-{}-seed{}", config.model, config.label(), config.seed);
    let rollouts_csv = out.join(format!("{stem}.csv"));
    let aggregate_csv = out.join(format!("{stem}-aggregate.csv"));
    write_rows(&rows, std::fs::File::create(&rollouts_csv)?)?;
    write_rows(&aggregate, std::fs::File::create(&aggregate_csv)?)?;
    Ok(EvalReport {
        config,
        bounds,
        rows,
        aggregate,
        rollouts_csv,
        aggregate_csv,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    let config = resolve_eval_config(args)?;
    run_eval(config, &args.common.out)
}
