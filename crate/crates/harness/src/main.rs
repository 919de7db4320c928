use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use intercept_core::scenario::Range;
use intercept_harness::campaign::{run_campaign, CampaignConfig, ControllerSpec, WORKERS_ENV};
use intercept_harness::error::{HarnessError, Result};
use intercept_harness::inaccuracy::InaccuracyConfig;
use intercept_harness::presets;
use intercept_harness::trajectory::{dump_trajectory, replay_observations, track_path};
use intercept_policy::gradcheck::{gradient_check, TinyProblem};
use intercept_policy::train::{reward_trend, TrainConfig, Trainer};
use intercept_policy::{NetworkParams, SampleMode};

#[derive(Parser)]
#[command(name = "intercept", version, about = "Exoatmospheric intercept simulation, guidance benchmarks and policy training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo campaign; prints stats as JSON.
    Montecarlo(CampaignArgs),
    /// Single episode with a per-step trajectory file.
    Simulate {
        #[command(flatten)]
        campaign: CampaignArgs,
        /// Episode stream index to run.
        #[arg(long, default_value_t = 0)]
        episode: u64,
        #[arg(long)]
        out: PathBuf,
        /// Re-run the seeker on the logged states and compare observations.
        #[arg(long)]
        replay: bool,
    },
    /// Translational PN benchmark with 20 ms lags.
    Bench {
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Seeker angle filter lag, ms.
        #[arg(long, default_value_t = 20.0)]
        tau_theta_ms: f64,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        #[arg(long, value_enum, default_value_t = Law::Pn)]
        law: Law,
    },
    /// PPO training; writes weights and a JSON-lines log.
    Train(TrainArgs),
    /// Finite-difference check of the policy and value gradients.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Law {
    Pn,
    Apn,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Pn,
    Apn,
    Policy,
    None,
    Random,
}

#[derive(Args)]
struct CampaignArgs {
    /// JSON campaign config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    controller: Option<ControllerArg>,
    /// Weight file for the policy controller.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Sample actions instead of taking the argmax.
    #[arg(long)]
    sample: bool,
    /// Parasitic-effect row 1–8.
    #[arg(long, conflicts_with = "extended_row")]
    scenario_row: Option<usize>,
    /// Extended engagement row 1–7.
    #[arg(long)]
    extended_row: Option<usize>,
    /// Translational benchmark mode.
    #[arg(long)]
    benchmark: bool,
    #[arg(long)]
    slosh: bool,
    /// Inertia perturbation fraction, e.g. 0.2.
    #[arg(long)]
    inertia: Option<f64>,
    #[arg(long)]
    mismatch: bool,
    /// Per-episode CSV.
    #[arg(long)]
    rows: Option<PathBuf>,
    /// Stats JSON file (also printed).
    #[arg(long)]
    stats: Option<PathBuf>,
}

impl CampaignArgs {
    fn resolve(&self) -> Result<CampaignConfig> {
        let mut c = match &self.config {
            Some(p) => CampaignConfig::from_json_file(p)?,
            None => CampaignConfig::default(),
        };
        if let Some(r) = self.scenario_row {
            c.scenario = presets::scenario_row(r)?;
        }
        if let Some(r) = self.extended_row {
            c.scenario = presets::extended_row(r)?;
        }
        if let Some(n) = self.episodes {
            c.episodes = n;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if self.workers.is_some() {
            c.workers = self.workers;
        }
        if self.benchmark {
            c.episode.benchmark = true;
        }
        let mode = if self.sample { SampleMode::Sample } else { SampleMode::Argmax };
        if let Some(k) = self.controller {
            c.controller = match k {
                ControllerArg::Pn => ControllerSpec::Pn,
                ControllerArg::Apn => ControllerSpec::Apn,
                ControllerArg::None => ControllerSpec::None,
                ControllerArg::Random => ControllerSpec::Random,
                ControllerArg::Policy => ControllerSpec::Policy {
                    weights: self.weights.clone().ok_or_else(|| HarnessError::Config("--controller policy needs --weights".into()))?,
                    mode,
                },
            };
        } else if let Some(w) = &self.weights {
            c.controller = ControllerSpec::Policy { weights: w.clone(), mode };
        }
        c.inaccuracy = InaccuracyConfig {
            fuel_slosh: self.slosh || c.inaccuracy.fuel_slosh,
            inertia_perturbation: self.inertia.unwrap_or(c.inaccuracy.inertia_perturbation),
            thruster_mismatch: self.mismatch || c.inaccuracy.thruster_mismatch,
        };
        Ok(c)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// JSON training config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the simplified desk-scale scenario.
    #[arg(long)]
    reduced: bool,
    #[arg(long)]
    updates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from these weights instead of a fresh initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value = "policy.bin")]
    out: PathBuf,
    #[arg(long, default_value = "train_log.jsonl")]
    log: PathBuf,
    /// Save a checkpoint every this many updates.
    #[arg(long, default_value_t = 25)]
    checkpoint_every: usize,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    lr_policy: Option<f64>,
    #[arg(long)]
    lr_value: Option<f64>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn montecarlo(args: &CampaignArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let out = run_campaign(&cfg)?;
    if let Some(p) = &args.rows {
        out.write_rows(p)?;
    }
    if let Some(p) = &args.stats {
        out.write_stats(p)?;
    }
    print_json(&out.stats)
}

fn simulate(args: &CampaignArgs, episode: u64, out: &Path, replay: bool) -> Result<()> {
    let cfg = args.resolve()?;
    let o = dump_trajectory(&cfg, episode, out)?;
    let mut summary = json!({
        "episode": episode,
        "miss_m": o.result.miss,
        "fuel_kg": o.result.fuel_used,
        "cause": o.result.cause.name(),
        "steps": o.result.steps,
        "trajectory": out,
        "track": track_path(out),
    });
    if replay {
        let r = replay_observations(&cfg, episode, out)?;
        summary["replay_mismatched_rows"] = json!(r.mismatched_rows);
        if r.mismatched_rows > 0 {
            print_json(&summary)?;
            return Err(HarnessError::Check(format!("{} of {} replayed rows differ", r.mismatched_rows, r.rows)));
        }
    }
    print_json(&summary)
}

fn bench(episodes: usize, seed: u64, tau_theta_ms: f64, workers: Option<usize>, law: Law) -> Result<()> {
    let (mut scenario, episode) = presets::pn_benchmark();
    scenario.tau_theta_ms = Range::fixed(tau_theta_ms);
    let mut cfg = CampaignConfig {
        scenario,
        episode,
        controller: match law {
            Law::Pn => ControllerSpec::Pn,
            Law::Apn => ControllerSpec::Apn,
        },
        episodes,
        seed,
        workers,
        ..CampaignConfig::default()
    };
    cfg.guidance.filter_tau = tau_theta_ms / 1e3;
    print_json(&run_campaign(&cfg)?.stats)
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            serde_json::from_str(&text)?
        }
        None => TrainConfig::default(),
    };
    if a.reduced {
        cfg = presets::reduced_train_config();
    }
    if let Some(n) = a.updates {
        cfg.updates = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
        cfg.init_seed = s;
    }
    if let Some(e) = a.eval_every {
        cfg.eval_every = e;
    }
    if let Some(l) = a.lr_policy {
        cfg.ppo.lr_policy = l;
    }
    if let Some(l) = a.lr_value {
        cfg.ppo.lr_value = l;
    }
    if let Some(w) = a.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    }
    let init = a.init.as_deref().map(NetworkParams::load).transpose()?;
    let mut trainer = Trainer::new(cfg, init)?;
    let mut log = std::fs::File::create(&a.log).map_err(|e| HarnessError::io(&a.log, e))?;
    let mut failure = None;
    let history = trainer.run(|l, p| {
        let line = serde_json::to_string(l).expect("log record serializes");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            failure = Some(HarnessError::io(&a.log, e));
            return false;
        }
        eprintln!(
            "update {:>5}  reward {:>8.3}  steps {:>6.1}  hit {:.2}  kl {:.4}  epochs {:>2}  {:.1}s",
            l.update, l.mean_reward, l.mean_steps, l.hit_rate, l.kl, l.epochs, l.seconds
        );
        if a.checkpoint_every > 0 && (l.update + 1) % a.checkpoint_every == 0 {
            if let Err(e) = p.save(&a.out) {
                failure = Some(e.into());
                return false;
            }
        }
        true
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    trainer.params.save(&a.out)?;
    let trend = reward_trend(&history, 10.min(history.len()));
    print_json(&json!({
        "updates": trainer.update,
        "weights": a.out,
        "log": a.log,
        "first_mean_reward": trend.map(|t| t.0),
        "last_mean_reward": trend.map(|t| t.1),
        "final_eval": history.last().and_then(|l| l.eval.clone()),
    }))
}

fn gradcheck(seed: u64, tolerance: f64, step: f64) -> Result<()> {
    let problem = TinyProblem::new(seed, &[1, 3, 6])?;
    let report = gradient_check(&problem, step)?;
    print_json(&report)?;
    if report.passes(tolerance) {
        Ok(())
    } else {
        Err(HarnessError::Check(format!("max relative error {} ≥ {tolerance}", report.max_rel_error)))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Montecarlo(a) => montecarlo(a),
        Command::Simulate { campaign, episode, out, replay } => simulate(campaign, *episode, out, *replay),
        Command::Bench { episodes, seed, tau_theta_ms, workers, law } => bench(*episodes, *seed, *tau_theta_ms, *workers, *law),
        Command::Train(a) => train(a),
        Command::Gradcheck { seed, tolerance, step } => gradcheck(*seed, *tolerance, *step),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "status": "fault", "kind": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
