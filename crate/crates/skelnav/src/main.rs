//! Command-line front end: run episodes, run the benchmark suite, solve
//! standalone plan instances, render logs, and validate scenario files.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use skelnav::harness::{
    ablation_matrix, compute_metrics, format_report_table, log_from_jsonl, log_to_jsonl,
    render_from_log, run_episode, run_suite, EpisodeLog, HarnessError, ProviderKind, RunConfig,
    SuiteManifest,
};
use skelnav::planner::{
    brute_force_order, greedy_order, softmax_probs, two_opt, PlanCandidate, PlanInstance,
    TwoOptConfig,
};
use skelnav::policy::{MapMode, PlannerMode};
use skelnav::scenario::{generate_apartment, load_scenario, GenParams, Scenario};

#[derive(Parser)]
#[command(
    name = "skelnav",
    about = "Grid-world object navigation on a skeleton-graph memory",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProviderArg {
    Cooccurrence,
    Oracle,
    Random,
    Remote,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MapArg {
    Ssmg,
    Value,
    Semantic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlannerArg {
    Greedy,
    LhpNoRevisit,
    Lhp,
}

#[derive(Parser)]
struct ConfigArgs {
    #[arg(long, value_enum, default_value_t = ProviderArg::Cooccurrence)]
    provider: ProviderArg,
    /// Endpoint for the remote provider (plain http).
    #[arg(long)]
    remote_url: Option<String>,
    /// Remote provider timeout in milliseconds.
    #[arg(long, default_value_t = 2000)]
    remote_timeout_ms: u64,
    /// Noise sigma for the oracle provider.
    #[arg(long, default_value_t = 0.0)]
    oracle_sigma: f64,
    /// Softmax temperature.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, value_enum, default_value_t = MapArg::Ssmg)]
    map: MapArg,
    #[arg(long, value_enum, default_value_t = PlannerArg::Lhp)]
    planner: PlannerArg,
    /// Disable the revisiting stage (same as --planner lhp-no-revisit).
    #[arg(long)]
    no_revisit: bool,
    /// Clear memory between subtasks.
    #[arg(long)]
    no_persist: bool,
    /// Pool subtask successes across episodes for s-SR.
    #[arg(long)]
    pooled_ssr: bool,
    /// Leave the approach leg to the first visited candidate uncounted.
    #[arg(long)]
    free_first_leg: bool,
    /// Best-improvement 2-opt instead of first-improvement.
    #[arg(long)]
    best_improvement: bool,
}

impl ConfigArgs {
    fn to_config(&self, seed: u64) -> Result<RunConfig, HarnessError> {
        let provider = match self.provider {
            ProviderArg::Cooccurrence => ProviderKind::Cooccurrence,
            ProviderArg::Oracle => ProviderKind::Oracle {
                sigma: self.oracle_sigma,
            },
            ProviderArg::Random => ProviderKind::Random,
            ProviderArg::Remote => ProviderKind::Remote {
                url: self
                    .remote_url
                    .clone()
                    .ok_or_else(|| HarnessError::Config("--remote-url is required".into()))?,
                timeout_ms: self.remote_timeout_ms,
            },
        };
        if self.tau <= 0.0 {
            return Err(HarnessError::Config("--tau must be positive".into()));
        }
        let planner_mode = if self.no_revisit {
            PlannerMode::LhpNoRevisit
        } else {
            match self.planner {
                PlannerArg::Greedy => PlannerMode::Greedy,
                PlannerArg::LhpNoRevisit => PlannerMode::LhpNoRevisit,
                PlannerArg::Lhp => PlannerMode::Lhp,
            }
        };
        Ok(RunConfig {
            provider,
            tau: self.tau,
            map_mode: match self.map {
                MapArg::Ssmg => MapMode::Ssmg,
                MapArg::Value => MapMode::Value,
                MapArg::Semantic => MapMode::Semantic,
            },
            planner_mode,
            persistence: !self.no_persist,
            pooled_ssr: self.pooled_ssr,
            count_first_leg: !self.free_first_leg,
            best_improvement: self.best_improvement,
            step_budget: skelnav::harness::STEP_BUDGET,
            seed,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its log.
    Run {
        /// Scenario file path.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Built-in generated apartment seed (alternative to --scenario).
        #[arg(long)]
        builtin: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Also emit map renders and trajectory plots.
        #[arg(long)]
        render: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the benchmark suite from a manifest.
    Suite {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Run all five map x planner ablation rows.
        #[arg(long)]
        matrix: bool,
        /// Skip writing per-episode logs.
        #[arg(long)]
        no_logs: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Solve a standalone plan instance and compare solvers.
    Plan {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
    },
    /// Re-render maps and trajectories from an episode log.
    Render {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn load_or_generate(
    scenario: &Option<PathBuf>,
    builtin: &Option<u64>,
) -> Result<Scenario, HarnessError> {
    match (scenario, builtin) {
        (Some(path), None) => Ok(load_scenario(path)?),
        (None, Some(seed)) => Ok(generate_apartment(*seed, GenParams::default())),
        _ => Err(HarnessError::Config(
            "give exactly one of --scenario or --builtin".into(),
        )),
    }
}

fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

fn write_log(out_dir: &Path, log: &EpisodeLog) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!(
        "episode-{}-{}.jsonl",
        log.scenario_id, log.config.seed
    ));
    write_atomic(&path, &log_to_jsonl(log))?;
    Ok(path)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            scenario,
            builtin,
            seed,
            out_dir,
            render,
            config,
        } => {
            let scenario = load_or_generate(&scenario, &builtin)?;
            let cfg = config.to_config(seed)?;
            let log = run_episode(&scenario, &cfg);
            let path = write_log(&out_dir, &log)?;
            println!("log: {}", path.display());
            let report = compute_metrics(std::slice::from_ref(&log), cfg.pooled_ssr);
            print!(
                "{}",
                format_report_table(&[("episode".to_string(), report)])
            );
            if render {
                let dir = out_dir.join(format!(
                    "render-{}-{}",
                    log.scenario_id, log.config.seed
                ));
                for p in render_from_log(&log, &dir)? {
                    println!("render: {}", p.display());
                }
            }
            Ok(())
        }
        Command::Suite {
            manifest,
            out_dir,
            matrix,
            no_logs,
            config,
        } => {
            let base = manifest
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            let manifest = SuiteManifest::load(&manifest)?;
            let base_cfg = config.to_config(0)?;
            let cells: Vec<(String, RunConfig)> = if matrix {
                ablation_matrix(&base_cfg)
            } else {
                vec![("configured".to_string(), base_cfg.clone())]
            };
            let mut rows = Vec::new();
            std::fs::create_dir_all(&out_dir)?;
            for (label, cfg) in &cells {
                let logs = run_suite(&manifest, &base, cfg)?;
                if !no_logs {
                    let dir = out_dir.join("logs").join(label);
                    std::fs::create_dir_all(&dir)?;
                    for log in &logs {
                        write_log(&dir, log)?;
                    }
                }
                rows.push((label.clone(), compute_metrics(&logs, cfg.pooled_ssr)));
            }
            let table = format_report_table(&rows);
            print!("{table}");
            write_atomic(&out_dir.join("report.txt"), &table)?;
            write_atomic(
                &out_dir.join("report.json"),
                &serde_json::to_string_pretty(&rows).unwrap(),
            )?;
            Ok(())
        }
        Command::Plan { instance, tau } => {
            let text = std::fs::read_to_string(&instance)?;
            plan_command(&text, tau).map_err(HarnessError::Config)
        }
        Command::Render { log, out_dir } => {
            let text = std::fs::read_to_string(&log)?;
            let log = log_from_jsonl(&text)?;
            for p in render_from_log(&log, &out_dir)? {
                println!("render: {}", p.display());
            }
            Ok(())
        }
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario)?;
            println!(
                "ok: {} ({}x{} cells, {} objects, {} subtasks)",
                s.id,
                s.world.dims.width,
                s.world.dims.height,
                s.world.objects.len(),
                s.subtasks.len()
            );
            Ok(())
        }
    }
}

#[derive(serde::Deserialize)]
struct InstanceFile {
    start: [f64; 2],
    points: Vec<[f64; 2]>,
    #[serde(default)]
    probs: Option<Vec<f64>>,
    #[serde(default)]
    beliefs: Option<Vec<f64>>,
    /// Optional explicit (N+1)x(N+1) matrix, row/col 0 = start.
    #[serde(default)]
    dist: Option<Vec<Vec<f64>>>,
}

fn plan_command(text: &str, tau: f64) -> Result<(), String> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let candidates: Vec<PlanCandidate> = file
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| PlanCandidate {
            id: i as u64,
            position: skelnav::grid::Point::new(p[0], p[1]),
        })
        .collect();
    let probs = match (&file.probs, &file.beliefs) {
        (Some(p), _) => p.clone(),
        (None, Some(b)) => softmax_probs(b, tau),
        (None, None) => return Err("instance needs `probs` or `beliefs`".into()),
    };
    let start = skelnav::grid::Point::new(file.start[0], file.start[1]);
    let instance = match file.dist {
        Some(d) => PlanInstance::new(start, candidates, probs, d),
        None => PlanInstance::euclidean(start, candidates, probs),
    }
    .map_err(|e| e.to_string())?;

    let greedy = greedy_order(&instance);
    let refined = two_opt(&instance, greedy.clone(), TwoOptConfig::default());
    println!(
        "greedy   order {:?}  E = {:.6}",
        greedy.order, greedy.expected_cost
    );
    println!(
        "2-opt    order {:?}  E = {:.6}",
        refined.order, refined.expected_cost
    );
    match brute_force_order(&instance) {
        Ok(exact) => println!(
            "exact    order {:?}  E = {:.6}",
            exact.order, exact.expected_cost
        ),
        Err(e) => println!("exact    skipped ({e})"),
    }
    Ok(())
}
