use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use boed_core::agents::{baseline_random, load_policy};
use boed_core::estimators::mean_stderr;
use boed_core::models::{Design, Model};
use boed_core::rng::RolloutStreams;
use boed_core::trainer::hyperparameter_row;

use crate::{ensure_dir, CliError, BenchArgs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub proposals: usize,
    /// Seconds per design: summary update with the previous pair plus one policy forward.
    pub rl_mean_s: f64,
    pub rl_stderr_s: f64,
    pub random_mean_s: f64,
    pub random_stderr_s: f64,
    pub hardware: String,
    pub report: PathBuf,
}

impl BenchReport {
    pub fn summary(&self) -> String {
        format!(
            "{}: rl {:.3e} ± {:.1e} s per design, random {:.3e} ± {:.1e} s ({} proposals)\nhardware: {}",
            self.model, self.rl_mean_s, self.rl_stderr_s, self.random_mean_s, self.random_stderr_s, self.proposals, self.hardware
        )
    }
}

pub fn hardware_note() -> String {
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!(
        "{} {}, {cpus} logical CPU(s) available, single-threaded timing",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

pub fn cmd_bench(args: &BenchArgs) -> Result<BenchReport, CliError> {
    let path = args
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Usage("bench needs --checkpoint".into()))?;
    if args.proposals == 0 {
        return Err(CliError::Usage("--proposals must be >= 1".into()));
    }
    let (actor, _) = load_policy(path, args.common.model).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let model = Model::new(actor.model_id());
    let horizon = hyperparameter_row(model.id()).horizon;
    let seed = args.common.seed.unwrap_or(0);

    let mut rl = Vec::with_capacity(args.proposals);
    let mut random = Vec::with_capacity(args.proposals);
    let mut episode = 0u64;
    while rl.len() < args.proposals {
        let mut streams = RolloutStreams::new(seed, episode);
        episode += 1;
        let theta = model.sample_prior_set(1, &mut streams.theta0);
        let theta = theta.iter().next().expect("one draw").to_vec();
        let mut summary = actor.empty_summary();
        let mut last: Option<(Design, f64)> = None;
        for _ in 0..horizon {
            if rl.len() == args.proposals {
                break;
            }
            let start = Instant::now();
            if let Some((d, y)) = &last {
                actor.update_summary(&mut summary, &model, d, *y);
            }
            let action = actor.act(&summary, &mut streams.policy, false);
            rl.push(start.elapsed().as_secs_f64());

            let start = Instant::now();
            let r = baseline_random(&model, &mut streams.policy);
            random.push(start.elapsed().as_secs_f64());
            std::hint::black_box(r);

            let y = model
                .sample_outcome(&theta, &action.design, &mut streams.outcomes)
                .map_err(CliError::runtime)?;
            last = Some((action.design, y));
        }
    }
    let (rl_mean_s, rl_stderr_s) = mean_stderr(&rl);
    let (random_mean_s, random_stderr_s) = mean_stderr(&random);
    ensure_dir(&args.common.out)?;
    let report_path = args.common.out.join(format!("bench-{}-seed{seed}.json", model.id()));
    let report = BenchReport {
        model: model.id().to_string(),
        proposals: args.proposals,
        rl_mean_s,
        rl_stderr_s,
        random_mean_s,
        random_stderr_s,
        hardware: hardware_note(),
        report: report_path.clone(),
    };
    std::fs::write(&report_path, serde_json::to_string_pretty(&report).expect("serialises"))?;
    Ok(report)
}
