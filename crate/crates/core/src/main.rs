//! Command-line front end: maps, roadmaps, demos, training, single runs, experiments and replay.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use popi_core::config::Config;
use popi_core::demo::{load_demo_dir, save_demo_dir};
use popi_core::diffusion::{DiffusionPolicy, PolicyHeader, PolicyKind};
use popi_core::eval::{
    audit_logs, generate_training_demos, run_experiment, snippet_spec, train_policy, Condition, EpisodeRecord,
    EpisodeSummary, ExperimentSpec, Policies, RunOptions,
};
use popi_core::executor::{run_episode, EpisodeContext, ExecutorConfig, Method};
use popi_core::layouts::{test_route, Layout};
use popi_core::planner::{build_roadmap_cached, sample_intermediate_goals};
use popi_core::render::{render_episode, render_frame};
use popi_core::snippet::SnippetSet;
use popi_core::{Error, OccupancyMap, Pose2, Simulator};

#[derive(Parser)]
#[command(name = "popi", version, about = "Planner-ordered diffusion policy for chair towing")]
struct Cli {
    /// JSON config file; the built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config value, e.g. `--set executor.max_steps=2000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write or inspect occupancy maps.
    Map {
        #[command(subcommand)]
        command: MapCommand,
    },
    /// Build the SE(2) roadmap for a map.
    Roadmap {
        #[command(subcommand)]
        command: RoadmapCommand,
    },
    /// Generate expert demonstrations.
    Demo {
        #[command(subcommand)]
        command: DemoCommand,
    },
    /// Extract training snippets from demonstrations.
    Snippets {
        #[command(subcommand)]
        command: SnippetsCommand,
    },
    /// Train a diffusion policy on a demonstration directory.
    Train {
        /// Directory written by `demo gen`.
        #[arg(long)]
        demos: PathBuf,
        /// Checkpoint file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "local")]
        kind: Kind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the loss curve as JSON.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Plan a roadmap path between two chair poses.
    Plan {
        #[arg(long)]
        map: PathBuf,
        /// Chair start pose `x,y,theta` (theta in radians).
        #[arg(long, value_parser = parse_pose)]
        start: Pose2,
        #[arg(long, value_parser = parse_pose)]
        goal: Pose2,
        /// Also write the poses and waypoints as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a single episode and print its record as JSON.
    Run {
        /// One of popi, local, global, astar, rrt.
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// Policy checkpoint for the diffusion methods.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "nominal")]
        condition: CondArg,
        /// Route goal by distance (2, 6 or 10 m); ignored when `--goal` is given.
        #[arg(long, default_value_t = 10.0)]
        distance: f64,
        /// Chair start pose `x,y,theta`; defaults to the route start.
        #[arg(long, value_parser = parse_pose)]
        start: Option<Pose2>,
        /// Chair goal pose `x,y,theta`.
        #[arg(long, value_parser = parse_pose)]
        goal: Option<Pose2>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        layout: LayoutArgs,
        /// Write the episode record here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment grid and write its report.
    Eval {
        /// Experiment spec JSON, or `table1` / `generalization` for the built-in grids.
        #[arg(long)]
        spec: String,
        /// Overrides the spec's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Local policy checkpoint, used by popi and local.
        #[arg(long)]
        local: Option<PathBuf>,
        /// Global policy checkpoint.
        #[arg(long)]
        global: Option<PathBuf>,
        /// Report JSON path; the text table goes next to it with a `.txt` extension.
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-episode logs, audited after the run.
        #[arg(long)]
        logs: Option<PathBuf>,
        /// Episodes run in parallel; results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Render a logged episode to PNG.
    Replay {
        /// Episode log written by `eval --logs` or `run --out`.
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Map the episode ran on; defaults to the layout of the logged condition.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Write this many frames to `out` (a directory) instead of one still.
        #[arg(long)]
        frames: Option<usize>,
        /// Pixels per map cell.
        #[arg(long, default_value_t = 4)]
        scale: u32,
    },
}

#[derive(Subcommand)]
enum MapCommand {
    /// Write a bundled layout to a map file.
    Gen {
        #[command(flatten)]
        layout: LayoutArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the size and obstacle count of a map, or render it.
    Show {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        png: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum RoadmapCommand {
    /// Build the roadmap, or load it from the cache, and print its size.
    Build {
        #[arg(long)]
        map: PathBuf,
        /// Cache directory; defaults to `POPI_CACHE_DIR`.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DemoCommand {
    /// Write `n` expert demonstrations to a directory.
    Gen {
        #[arg(long, default_value_t = 35)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Leave the central doorway open.
        #[arg(long)]
        open_center: bool,
    },
}

#[derive(Subcommand)]
enum SnippetsCommand {
    /// Extract snippets for one policy kind and write them as JSON.
    Build {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long, value_enum, default_value = "local")]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct LayoutArgs {
    #[arg(long, value_enum, default_value = "training")]
    layout: LayoutArg,
    /// Leave the central doorway open.
    #[arg(long)]
    open_center: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Training,
    Carpet,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Local,
    Global,
}

impl From<Kind> for PolicyKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Local => PolicyKind::Local,
            Kind::Global => PolicyKind::Global,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CondArg {
    Nominal,
    Carpet,
    UnseenGrasp,
    UnseenChair,
}

impl From<CondArg> for Condition {
    fn from(c: CondArg) -> Self {
        match c {
            CondArg::Nominal => Condition::Nominal,
            CondArg::Carpet => Condition::Carpet,
            CondArg::UnseenGrasp => Condition::UnseenGrasp,
            CondArg::UnseenChair => Condition::UnseenChair,
        }
    }
}

fn parse_pose(s: &str) -> Result<Pose2, String> {
    let v: Vec<f64> =
        s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x, y, t] => Ok(Pose2::new(*x, *y, *t)),
        [x, y] => Ok(Pose2::new(*x, *y, 0.0)),
        _ => Err("expected x,y[,theta]".into()),
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

enum Failure {
    Usage(String),
    Runtime(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Core(Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os("POPI_CACHE_DIR").map(PathBuf::from)
}

fn layout_map(args: &LayoutArgs) -> OccupancyMap {
    let layout = match args.layout {
        LayoutArg::Training => Layout::Training,
        LayoutArg::Carpet => Layout::Carpet,
    };
    layout.map_with_block(!args.open_center)
}

fn load_config(cli: &Cli) -> CliResult<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn load_policy(path: Option<&Path>, cfg: &Config, kind: PolicyKind) -> CliResult<Option<DiffusionPolicy>> {
    match path {
        Some(p) => Ok(Some(DiffusionPolicy::load_checked(p, &cfg.policy, kind)?)),
        None => Ok(None),
    }
}

fn run(cli: Cli) -> CliResult {
    let cfg = load_config(&cli)?;
    eprintln!("config hash {}", cfg.hash());
    let fp = cfg.footprint;
    match cli.command {
        Command::Map { command } => match command {
            MapCommand::Gen { layout, out } => {
                layout_map(&layout).save(&out)?;
                println!("wrote {}", out.display());
            }
            MapCommand::Show { map, png } => {
                let m = OccupancyMap::load(&map)?;
                let (w, h) = m.extent();
                println!(
                    "{}x{} cells at {} m ({w:.1} m x {h:.1} m), {} occupied, hash {}",
                    m.width(),
                    m.height(),
                    m.resolution(),
                    m.obstacle_count(),
                    m.content_hash()
                );
                if let Some(png) = png {
                    popi_core::render::Canvas::new(&m, 4).save(&png)?;
                }
            }
        },
        Command::Roadmap { command: RoadmapCommand::Build { map, cache } } => {
            let m = OccupancyMap::load(&map)?;
            let dir = cache.or_else(cache_dir);
            if let Some(d) = &dir {
                std::fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
            }
            let rm = build_roadmap_cached(
                &m,
                &fp,
                cfg.planner.xy_step,
                cfg.planner.theta_step(),
                cfg.planner.rotation_weight,
                dir.as_deref(),
            )?;
            println!("{} nodes", rm.node_count());
        }
        Command::Demo { command: DemoCommand::Gen { n, seed, out, open_center } } => {
            let demos = generate_training_demos(&cfg, n, seed, !open_center)?;
            save_demo_dir(&out, &demos)?;
            let samples: usize = demos.iter().map(|d| d.len()).sum();
            println!("wrote {} demonstrations ({samples} samples) to {}", demos.len(), out.display());
        }
        Command::Snippets { command: SnippetsCommand::Build { demos, kind, out } } => {
            let demos = load_demo_dir(&demos)?;
            let header = PolicyHeader::from_params(&cfg.policy, kind.into());
            let set = SnippetSet::build(demos, snippet_spec(&header));
            let file = std::fs::File::create(&out).map_err(|e| io_err(&out, e))?;
            set.write_index(std::io::BufWriter::new(file)).map_err(|e| io_err(&out, e))?;
            println!("{} snippets", set.len());
        }
        Command::Train { demos, out, kind, seed, curve } => {
            let demos = load_demo_dir(&demos)?;
            let dir = cache_dir();
            let (policy, loss) = train_policy(&cfg, demos, kind.into(), seed, dir.as_deref())?;
            policy.save(&out)?;
            if let Some(c) = curve {
                write_file(&c, &serde_json::to_string_pretty(&loss).expect("curve serializes"))?;
            }
            let (first, last) = (loss.first().unwrap().loss, loss.last().unwrap().loss);
            println!("loss {first:.4} -> {last:.4}, wrote {}", out.display());
        }
        Command::Plan { map, start, goal, out } => {
            let m = OccupancyMap::load(&map)?;
            let dir = cache_dir();
            let rm = build_roadmap_cached(
                &m,
                &fp,
                cfg.planner.xy_step,
                cfg.planner.theta_step(),
                cfg.planner.rotation_weight,
                dir.as_deref(),
            )?;
            let path = rm.plan(&fp, &start, &goal).map_err(|e| match e {
                Error::NoPath { .. } | Error::SnapFailure(_) => Failure::Runtime(format!("no path: {e}")),
                e => Failure::Core(e),
            })?;
            let waypoints = sample_intermediate_goals(&path, cfg.planner.downsample_factor);
            println!(
                "{} poses, cost {:.3}, translation {:.2} m, {} waypoints",
                path.len(),
                path.total_length,
                path.translation_length(),
                waypoints.len()
            );
            if let Some(out) = out {
                let json =
                    serde_json::json!({ "poses": path.poses, "waypoints": waypoints, "cost": path.total_length });
                write_file(&out, &serde_json::to_string_pretty(&json).expect("path serializes"))?;
            }
        }
        Command::Run { method, ckpt, condition, distance, start, goal, seed, layout, out } => {
            let condition: Condition = condition.into();
            let route = test_route();
            let start = start.unwrap_or(route.start);
            let goal = match goal {
                Some(g) => g,
                None => {
                    route
                        .goals
                        .iter()
                        .find(|g| (g.distance - distance).abs() < 1e-9)
                        .ok_or_else(|| Failure::Usage(format!("no route goal at {distance} m")))?
                        .goal
                }
            };
            let map = match condition {
                Condition::Carpet => Layout::Carpet.map_with_block(!layout.open_center),
                _ => layout_map(&layout),
            };
            let sim = Simulator::new(condition.sim_params(&cfg), &map, fp)?;
            let policy = match method.policy_kind() {
                Some(kind) => {
                    let p = ckpt.as_deref().ok_or_else(|| Failure::Usage(format!("{method} needs --ckpt")))?;
                    load_policy(Some(p), &cfg, kind)?
                }
                None => None,
            };
            let roadmap = if method.uses_planner() {
                let dir = cache_dir();
                Some(build_roadmap_cached(
                    &map,
                    &fp,
                    cfg.planner.xy_step,
                    cfg.planner.theta_step(),
                    cfg.planner.rotation_weight,
                    dir.as_deref(),
                )?)
            } else {
                None
            };
            let ctx = EpisodeContext { sim: &sim, roadmap: roadmap.as_ref(), policy: policy.as_ref() };
            let exec = ExecutorConfig::from_config(&cfg, method);
            let result = run_episode(&exec, &ctx, &start, &goal, seed)?;
            let record = EpisodeRecord {
                summary: EpisodeSummary {
                    condition,
                    method,
                    distance,
                    trial: 0,
                    seed,
                    outcome: result.outcome,
                    steps: result.steps,
                    final_distance: result.final_object().position_distance(&goal),
                    waypoints_reached: result.waypoints_reached,
                    waypoints_total: result.waypoints_total,
                },
                start,
                goal,
                result,
            };
            let json = serde_json::to_string_pretty(&record).expect("record serializes");
            match out {
                Some(path) => {
                    write_file(&path, &json)?;
                    println!("{} after {} steps", record.summary.outcome.name(), record.summary.steps);
                }
                None => println!("{json}"),
            }
        }
        Command::Eval { spec, seed, local, global, out, logs, workers } => {
            let mut spec = match spec.as_str() {
                "table1" if !Path::new(&spec).exists() => ExperimentSpec::table1(0),
                "generalization" if !Path::new(&spec).exists() => ExperimentSpec::generalization(0),
                path => ExperimentSpec::load(path)?,
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(w) = workers {
                spec.workers = w;
            }
            let policies = Policies {
                local: load_policy(local.as_deref(), &cfg, PolicyKind::Local)?,
                global: load_policy(global.as_deref(), &cfg, PolicyKind::Global)?,
            };
            let opts = RunOptions { cache_dir: cache_dir(), log_dir: logs.clone() };
            let report = run_experiment(&cfg, &spec, &policies, &opts)?;
            if let Some(dir) = &logs {
                audit_logs(&report, dir, cfg.executor.success_tolerance)?;
            }
            write_file(&out, &report.to_json())?;
            let table = report.to_table();
            write_file(&out.with_extension("txt"), &table)?;
            print!("{table}");
        }
        Command::Replay { log, out, map, frames, scale } => {
            let text = std::fs::read_to_string(&log).map_err(|e| io_err(&log, e))?;
            let record: EpisodeRecord =
                serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", log.display())))?;
            let m = match map {
                Some(p) => OccupancyMap::load(&p)?,
                None => record.summary.condition.layout().map_with_block(true),
            };
            let robot: Vec<Pose2> = record.result.path.iter().map(|s| s.robot).collect();
            let chair: Vec<Pose2> = record.result.path.iter().map(|s| s.object).collect();
            let save = |img: image::RgbImage, path: &Path| -> CliResult {
                img.save(path).map_err(|e| Failure::Core(Error::io(path, std::io::Error::other(e.to_string()))))
            };
            match frames {
                None => save(render_episode(&m, &fp, &robot, &chair, &record.goal, &[], scale), &out)?,
                Some(n) => {
                    std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
                    let n = n.max(1);
                    let last = robot.len() - 1;
                    for i in 0..n {
                        let k = if n == 1 { last } else { i * last / (n - 1) };
                        save(
                            render_frame(&m, &fp, &robot, &chair, &record.goal, k, scale),
                            &out.join(format!("frame_{i:04}.png")),
                        )?;
                    }
                }
            }
            println!(
                "{} ({} steps) rendered to {}",
                record.summary.outcome.name(),
                record.summary.steps,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Invariant(_) => ExitCode::from(3),
                Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
