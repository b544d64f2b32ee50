use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use boed_core::agents::PolicyAgent;
use boed_core::estimators::{design_grid, grid_search_optimal_design_1d, sequential_bounds, BoundConfig, OracleGrid};
use boed_core::models::{Model, ModelId};
use boed_core::trainer::{train_with, Profile, TrainConfig, TrainOptions};

use crate::eval::write_rows;
use crate::{ensure_dir, CliError, Toy1dArgs};

/// Spacing of the design grid searched with the quadrature oracle.
pub const GRID_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Toy1dRow {
    pub agent: String,
    pub gamma: f64,
    pub t: usize,
    pub eig_mean: f64,
    pub eig_stderr: f64,
    pub upper_mean: f64,
    pub upper_stderr: f64,
    pub n: usize,
    /// First design the agent proposes (its action for the empty history).
    pub first_design: f64,
}

#[derive(Debug, Clone)]
pub struct Toy1dReport {
    pub rows: Vec<Toy1dRow>,
    pub optimal_design: f64,
    pub optimal_eig: f64,
    pub csv: PathBuf,
}

impl Toy1dReport {
    pub fn row(&self, agent: &str, t: usize) -> &Toy1dRow {
        self.rows
            .iter()
            .find(|r| r.agent == agent && r.t == t)
            .unwrap_or_else(|| panic!("no row for {agent} at t={t}"))
    }

    pub fn summary(&self) -> String {
        let mut lines: Vec<String> = self
            .rows
            .iter()
            .map(|r| {
                format!(
                    "{:<12} t={}  EIG {:.4} ± {:.4}  first design {:.3}",
                    r.agent, r.t, r.eig_mean, r.eig_stderr, r.first_design
                )
            })
            .collect();
        lines.push(format!("comparison: {}", self.csv.display()));
        lines.join("\n")
    }
}

pub fn cmd_toy1d(args: &Toy1dArgs) -> Result<Toy1dReport, CliError> {
    if let Some(m) = args.common.model {
        if m != ModelId::Source1d {
            return Err(CliError::Usage(format!("toy1d always uses source1d, got --model {m}")));
        }
    }
    if args.common.config.is_some() {
        return Err(CliError::Usage("toy1d takes flags only, not --config".into()));
    }
    let profile = args.common.profile.unwrap_or(Profile::Desk);
    let seed = args.common.seed.unwrap_or(0);
    let rollouts = args.rollouts.unwrap_or(10_000);
    let contrastive = args.contrastive.unwrap_or(1000);
    if rollouts == 0 || contrastive == 0 {
        return Err(CliError::Usage("rollouts and contrastive must be >= 1".into()));
    }
    let out = &args.common.out;
    ensure_dir(out)?;
    let model = Model::new(ModelId::Source1d);
    let mut rows = Vec::new();

    for (agent, gamma) in [("myopic", 0.0), ("non-myopic", 1.0)] {
        let mut config = TrainConfig::for_model(ModelId::Source1d, profile);
        config.seed = seed;
        config.gamma = gamma;
        if let Some(n) = args.iterations {
            config.iterations = n;
        }
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let quiet = args.quiet;
        let result = train_with(&config, TrainOptions::default(), |row| {
            if !quiet {
                eprintln!("{agent} iter {:>6}  return {:.4}", row.iteration, row.mean_return);
            }
        })
        .map_err(CliError::runtime)?;
        let stem = format!("toy1d-{agent}-seed{seed}");
        result
            .save(&config, &out.join(format!("{stem}.ckpt")), &out.join(format!("{stem}-log.csv")))
            .map_err(CliError::runtime)?;

        let mut policy = PolicyAgent::new(result.actor().clone(), false);
        let bounds = sequential_bounds(
            &model,
            &mut policy,
            &BoundConfig {
                contrastive,
                horizon: 2,
                rollouts,
                seed,
            },
        )
        .map_err(CliError::runtime)?;
        let first_design = bounds.rollouts[0].history.designs()[0].as_continuous().expect("continuous")[0];
        for t in 1..=2 {
            let ((eig_mean, eig_stderr), (upper_mean, upper_stderr)) = bounds.at_step(t);
            rows.push(Toy1dRow {
                agent: agent.to_string(),
                gamma,
                t,
                eig_mean,
                eig_stderr,
                upper_mean,
                upper_stderr,
                n: rollouts,
                first_design,
            });
        }
    }

    let source = model.source().expect("source1d is a source model");
    let designs = design_grid(source.bound, GRID_STEP);
    let (optimal_design, optimal_eig) =
        grid_search_optimal_design_1d(source, &designs, OracleGrid::default()).map_err(CliError::runtime)?;
    rows.push(Toy1dRow {
        agent: "grid-optimum".into(),
        gamma: 0.0,
        t: 1,
        eig_mean: optimal_eig,
        eig_stderr: 0.0,
        upper_mean: optimal_eig,
        upper_stderr: 0.0,
        n: 0,
        first_design: optimal_design,
    });

    let csv = out.join(format!("toy1d-seed{seed}.csv"));
    write_rows(&rows, std::fs::File::create(&csv)?)?;
    Ok(Toy1dReport {
        rows,
        optimal_design,
        optimal_eig,
        csv,
    })
}
