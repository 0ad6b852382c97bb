//! Experiment harness: demo generation and training for the bundled layouts, and the
//! method × goal × condition grid with a self-auditing report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::demo::{expert_roadmap, generate_demo_set, Trajectory};
use crate::diffusion::{DiffusionPolicy, LossPoint, PolicyHeader, PolicyKind};
use crate::error::{Error, Result};
use crate::executor::{
    audit_episode, reached, run_episode, EpisodeContext, EpisodeResult, ExecutorConfig, Method, Outcome,
};
use crate::geometry::Pose2;
use crate::layouts::{demo_regions, test_route, Layout};
use crate::planner::{build_roadmap_cached, Roadmap};
use crate::sim::{SimParams, Simulator};
use crate::snippet::{SnippetSet, SnippetSpec};

/// Minimum roadmap translation length of a generated demonstration, in meters.
pub const DEMO_MIN_LENGTH: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Nominal,
    /// Carpet layout with higher floor friction.
    Carpet,
    UnseenGrasp,
    UnseenChair,
}

impl Condition {
    pub const ALL: [Condition; 4] =
        [Condition::Nominal, Condition::Carpet, Condition::UnseenGrasp, Condition::UnseenChair];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Nominal => "nominal",
            Condition::Carpet => "carpet",
            Condition::UnseenGrasp => "unseen_grasp",
            Condition::UnseenChair => "unseen_chair",
        }
    }

    pub fn layout(self) -> Layout {
        match self {
            Condition::Carpet => Layout::Carpet,
            _ => Layout::Training,
        }
    }

    pub fn sim_params(self, cfg: &Config) -> SimParams {
        cfg.sim_variant(self == Condition::Carpet, self == Condition::UnseenGrasp, self == Condition::UnseenChair)
    }

    fn index(self) -> usize {
        Condition::ALL.iter().position(|c| *c == self).unwrap()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub conditions: Vec<Condition>,
    pub methods: Vec<Method>,
    /// Route goals to run, by their nominal distance in meters.
    pub distances: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Close the central doorway of the layout.
    #[serde(default = "default_true")]
    pub block_center: bool,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_true() -> bool {
    true
}

fn default_workers() -> usize {
    1
}

impl ExperimentSpec {
    /// Every method at every route distance on the training layout.
    pub fn table1(seed: u64) -> Self {
        ExperimentSpec {
            name: "table1".into(),
            conditions: vec![Condition::Nominal],
            methods: Method::ALL.to_vec(),
            distances: vec![2.0, 6.0, 10.0],
            trials: 10,
            seed,
            block_center: true,
            workers: 1,
        }
    }

    /// The planner-based methods at the longest distance under shifted conditions.
    pub fn generalization(seed: u64) -> Self {
        ExperimentSpec {
            name: "generalization".into(),
            conditions: vec![Condition::Carpet, Condition::UnseenGrasp],
            methods: vec![Method::PoPi, Method::AStarFollow],
            distances: vec![10.0],
            trials: 10,
            seed,
            block_center: true,
            workers: 1,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(e.line(), format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.conditions.is_empty() || self.methods.is_empty() || self.distances.is_empty() || self.trials == 0 {
            return Err(Error::Config("experiment grid is empty".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        for d in &self.distances {
            route_goal_index(*d)?;
        }
        Ok(())
    }
}

fn route_goal_index(distance: f64) -> Result<usize> {
    test_route()
        .goals
        .iter()
        .position(|g| (g.distance - distance).abs() < 1e-9)
        .ok_or_else(|| Error::Config(format!("no route goal at {distance} m")))
}

/// Episode seed; depends only on the cell and trial, so any cell can be rerun alone.
pub fn episode_seed(base: u64, condition: Condition, goal_index: usize, method: Method, trial: usize) -> u64 {
    let method_index = Method::ALL.iter().position(|m| *m == method).unwrap();
    let cell = (condition.index() * 16 + goal_index) * 8 + method_index;
    base.wrapping_add(cell as u64 * 1000 + trial as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub condition: Condition,
    pub method: Method,
    pub distance: f64,
    pub trial: usize,
    pub seed: u64,
    pub outcome: Outcome,
    pub steps: usize,
    pub final_distance: f64,
    pub waypoints_reached: usize,
    pub waypoints_total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub condition: Condition,
    pub method: Method,
    pub distance: f64,
    pub trials: usize,
    pub successes: usize,
    /// Count per outcome name.
    pub outcomes: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub cells: Vec<CellResult>,
    pub episodes: Vec<EpisodeSummary>,
}

impl Report {
    pub fn cell(&self, condition: Condition, method: Method, distance: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.condition == condition && c.method == method && (c.distance - distance).abs() < 1e-9)
    }

    pub fn successes(&self, condition: Condition, method: Method, distance: f64) -> Option<usize> {
        self.cell(condition, method, distance).map(|c| c.successes)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One block per condition: rows are route distances, columns are methods.
    pub fn to_table(&self) -> String {
        let mut conditions: Vec<Condition> = self.cells.iter().map(|c| c.condition).collect();
        conditions.dedup();
        let mut methods: Vec<Method> = Vec::new();
        let mut distances: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !methods.contains(&c.method) {
                methods.push(c.method);
            }
            if !distances.iter().any(|d| (d - c.distance).abs() < 1e-9) {
                distances.push(c.distance);
            }
        }
        let width = methods.iter().map(|m| m.name().len()).max().unwrap_or(0).max(7);
        let mut out = String::new();
        for cond in conditions {
            let _ = writeln!(out, "{} [{}]", self.name, cond.name());
            let _ = write!(out, "{:>8}", "goal");
            for m in &methods {
                let _ = write!(out, "  {:>width$}", m.name());
            }
            out.push('\n');
            for d in &distances {
                let _ = write!(out, "{:>7.0}m", d);
                for m in &methods {
                    let cell = self
                        .cell(cond, *m, *d)
                        .map(|c| format!("{}/{}", c.successes, c.trials))
                        .unwrap_or_else(|| "-".into());
                    let _ = write!(out, "  {cell:>width$}");
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    /// Recomputes every cell from the episode summaries and checks they agree.
    pub fn recount(&self) -> Result<()> {
        for cell in &self.cells {
            let eps: Vec<&EpisodeSummary> = self
                .episodes
                .iter()
                .filter(|e| {
                    e.condition == cell.condition
                        && e.method == cell.method
                        && (e.distance - cell.distance).abs() < 1e-9
                })
                .collect();
            let successes = eps.iter().filter(|e| e.outcome == Outcome::Success).count();
            if eps.len() != cell.trials || successes != cell.successes {
                return Err(Error::Invariant(format!(
                    "{} {} {} m: cell says {}/{}, episodes say {}/{}",
                    cell.condition.name(),
                    cell.method,
                    cell.distance,
                    cell.successes,
                    cell.trials,
                    successes,
                    eps.len()
                )));
            }
            let total: usize = cell.outcomes.values().sum();
            if total != cell.trials {
                return Err(Error::Invariant(format!("outcome counts sum to {total}, not {}", cell.trials)));
            }
        }
        Ok(())
    }
}

/// File name of a stored episode log.
pub fn episode_log_name(e: &EpisodeSummary) -> String {
    format!("{}-{}-{:.0}m-{:02}.json", e.condition.name(), e.method, e.distance, e.trial)
}

/// A stored episode: identifying fields plus the full log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub summary: EpisodeSummary,
    pub start: Pose2,
    pub goal: Pose2,
    pub result: EpisodeResult,
}

/// Recounts successes from stored logs in `dir`, re-deriving each outcome from the final
/// chair pose, and checks them against the report.
pub fn audit_logs(report: &Report, dir: &Path, success_tolerance: f64) -> Result<()> {
    let mut counts: BTreeMap<(Condition, Method, u64), usize> = BTreeMap::new();
    for e in &report.episodes {
        let path = dir.join(episode_log_name(e));
        let text = std::fs::read_to_string(&path).map_err(|err| Error::io(&path, err))?;
        let record: EpisodeRecord = serde_json::from_str(&text)
            .map_err(|err| Error::parse(err.line(), format!("{}: {err}", path.display())))?;
        audit_episode(&record.result, &record.goal, success_tolerance)?;
        if record.summary != *e {
            return Err(Error::Invariant(format!("{} does not match the report", path.display())));
        }
        if reached(&record.result.final_object(), &record.goal, success_tolerance) {
            *counts.entry((e.condition, e.method, e.distance.to_bits())).or_default() += 1;
        }
    }
    for cell in &report.cells {
        let n = counts.get(&(cell.condition, cell.method, cell.distance.to_bits())).copied().unwrap_or(0);
        if n != cell.successes {
            return Err(Error::Invariant(format!(
                "{} {} {} m: logs recount {n} successes, report says {}",
                cell.condition.name(),
                cell.method,
                cell.distance,
                cell.successes
            )));
        }
    }
    Ok(())
}

/// Trained policies available to an experiment.
#[derive(Default)]
pub struct Policies {
    pub local: Option<DiffusionPolicy>,
    pub global: Option<DiffusionPolicy>,
}

impl Policies {
    pub fn get(&self, kind: PolicyKind) -> Option<&DiffusionPolicy> {
        match kind {
            PolicyKind::Local => self.local.as_ref(),
            PolicyKind::Global => self.global.as_ref(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Roadmap cache directory.
    pub cache_dir: Option<PathBuf>,
    /// Where to write one [`EpisodeRecord`] per episode.
    pub log_dir: Option<PathBuf>,
}

/// Runs the whole grid. Episodes may run on several threads; the report is assembled in
/// grid order so it does not depend on scheduling.
pub fn run_experiment(cfg: &Config, spec: &ExperimentSpec, policies: &Policies, opts: &RunOptions) -> Result<Report> {
    spec.validate()?;
    for m in &spec.methods {
        if let Some(kind) = m.policy_kind() {
            if policies.get(kind).is_none() {
                return Err(Error::Config(format!("{m} needs a {kind:?} policy")));
            }
        }
    }
    if let Some(dir) = &opts.log_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let route = test_route();
    let fp = cfg.footprint;
    let mut episodes = Vec::new();
    let mut cells = Vec::new();
    for &condition in &spec.conditions {
        let map = condition.layout().map_with_block(spec.block_center);
        let sim = Simulator::new(condition.sim_params(cfg), &map, fp)?;
        let roadmap: Option<Roadmap> = if spec.methods.iter().any(|m| m.uses_planner()) {
            Some(build_roadmap_cached(
                &map,
                &fp,
                cfg.planner.xy_step,
                cfg.planner.theta_step(),
                cfg.planner.rotation_weight,
                opts.cache_dir.as_deref(),
            )?)
        } else {
            None
        };
        let mut jobs = Vec::new();
        for &distance in &spec.distances {
            let gi = route_goal_index(distance)?;
            for &method in &spec.methods {
                for trial in 0..spec.trials {
                    jobs.push((gi, distance, method, trial));
                }
            }
        }
        let results: Mutex<Vec<Option<Result<EpisodeSummary>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let work = || loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            let Some(&(gi, distance, method, trial)) = jobs.get(i) else {
                break;
            };
            let seed = episode_seed(spec.seed, condition, gi, method, trial);
            let goal = route.goals[gi].goal;
            let ctx = EpisodeContext {
                sim: &sim,
                roadmap: roadmap.as_ref(),
                policy: method.policy_kind().and_then(|k| policies.get(k)),
            };
            let exec = ExecutorConfig::from_config(cfg, method);
            let res = run_episode(&exec, &ctx, &route.start, &goal, seed).and_then(|result| {
                audit_episode(&result, &goal, exec.success_tolerance)?;
                let summary = EpisodeSummary {
                    condition,
                    method,
                    distance,
                    trial,
                    seed,
                    outcome: result.outcome,
                    steps: result.steps,
                    final_distance: result.final_object().position_distance(&goal),
                    waypoints_reached: result.waypoints_reached,
                    waypoints_total: result.waypoints_total,
                };
                if let Some(dir) = &opts.log_dir {
                    let record = EpisodeRecord { summary: summary.clone(), start: route.start, goal, result };
                    let path = dir.join(episode_log_name(&summary));
                    let text = serde_json::to_string(&record).expect("record serializes");
                    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                }
                Ok(summary)
            });
            results.lock().unwrap()[i] = Some(res);
        };
        std::thread::scope(|s| {
            for _ in 1..spec.workers.min(jobs.len()) {
                s.spawn(work);
            }
            work();
        });
        let results: Vec<EpisodeSummary> =
            results.into_inner().unwrap().into_iter().map(|r| r.expect("every job ran")).collect::<Result<_>>()?;
        for chunk in results.chunks(spec.trials) {
            let first = &chunk[0];
            let mut outcomes = BTreeMap::new();
            for e in chunk {
                *outcomes.entry(e.outcome.name().to_string()).or_insert(0) += 1;
            }
            cells.push(CellResult {
                condition,
                method: first.method,
                distance: first.distance,
                trials: chunk.len(),
                successes: chunk.iter().filter(|e| e.outcome == Outcome::Success).count(),
                outcomes,
            });
        }
        episodes.extend(results);
    }
    let report = Report { name: spec.name.clone(), config_hash: cfg.hash(), seed: spec.seed, cells, episodes };
    report.recount()?;
    Ok(report)
}

/// `n` expert demonstrations on the training layout under nominal dynamics.
pub fn generate_training_demos(cfg: &Config, n: usize, seed: u64, block_center: bool) -> Result<Vec<Trajectory>> {
    let map = Layout::Training.map_with_block(block_center);
    let sim = Simulator::new(cfg.sim.clone(), &map, cfg.footprint)?;
    let roadmap = expert_roadmap(&map, &cfg.footprint, &cfg.planner, &cfg.expert)?;
    generate_demo_set(&sim, &roadmap, &cfg.expert, cfg.policy.angular_weight, &demo_regions(), n, DEMO_MIN_LENGTH, seed)
}

/// Snippet extraction parameters matching a policy header.
pub fn snippet_spec(header: &PolicyHeader) -> SnippetSpec {
    SnippetSpec {
        obs_horizon: header.obs_horizon,
        action_horizon: header.action_horizon,
        distance: header.snippet_distance,
        angular_weight: header.angular_weight,
        mode: header.kind.goal_mode(),
    }
}

/// Extracts snippets of the requested kind from `demos` and trains a policy on them.
pub fn train_policy(
    cfg: &Config,
    demos: Vec<Trajectory>,
    kind: PolicyKind,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<(DiffusionPolicy, Vec<LossPoint>)> {
    let header = PolicyHeader::from_params(&cfg.policy, kind);
    let set = SnippetSet::build_cached(demos, snippet_spec(&header), cache_dir)?;
    DiffusionPolicy::train(header, &set, &cfg.training, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_per_cell_and_trial() {
        let mut seen = std::collections::HashSet::new();
        for c in Condition::ALL {
            for g in 0..3 {
                for m in Method::ALL {
                    for t in 0..10 {
                        assert!(seen.insert(episode_seed(7, c, g, m, t)));
                    }
                }
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ExperimentSpec::table1(0).validate().is_ok());
        let mut s = ExperimentSpec::table1(0);
        s.distances = vec![3.0];
        assert!(s.validate().is_err());
        let json = serde_json::to_string(&ExperimentSpec::generalization(3)).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ExperimentSpec::generalization(3));
    }

    #[test]
    fn astar_grid_report_is_consistent() {
        let cfg = Config::default();
        let mut spec = ExperimentSpec::table1(1);
        spec.methods = vec![Method::AStarFollow];
        spec.distances = vec![2.0];
        spec.trials = 2;
        spec.workers = 2;
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions { cache_dir: None, log_dir: Some(dir.path().to_path_buf()) };
        let report = run_experiment(&cfg, &spec, &Policies::default(), &opts).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert_eq!(report.episodes.len(), 2);
        audit_logs(&report, dir.path(), cfg.executor.success_tolerance).unwrap();
        spec.workers = 1;
        let again = run_experiment(&cfg, &spec, &Policies::default(), &RunOptions::default()).unwrap();
        assert_eq!(again.to_json(), report.to_json());
        assert!(report.to_table().contains("astar_follow"));

        let mut bad = report.clone();
        bad.cells[0].successes = 3;
        assert!(bad.recount().is_err());
    }
}
