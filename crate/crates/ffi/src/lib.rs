//! C ABI over the towing simulator, roadmap planner, diffusion policy and episode runner.
//!
//! Every function returns a [`PopiStatus`]; outputs go through pointer arguments. Objects
//! are opaque handles created by `popi_*_new`/`popi_*_load` and released with the matching
//! `popi_*_free`. After a failure, [`popi_last_error`] describes it on the calling thread.
//! Strings returned to the caller are freed with [`popi_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::mem::ManuallyDrop;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use popi_core::config::Config;
use popi_core::diffusion::{DiffusionPolicy, PolicyKind};
use popi_core::eval::{Condition, EpisodeRecord, EpisodeSummary};
use popi_core::executor::{run_episode, EpisodeContext, ExecutorConfig, Method};
use popi_core::layouts::{test_route, Layout};
use popi_core::planner::{PlannedPath, Roadmap};
use popi_core::{Error, OccupancyMap, Pose2, SimState, Simulator};

/// Result code of every exported function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PopiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    InitialCollision = 6,
    NoPath = 7,
    Checkpoint = 8,
    Invariant = 9,
    /// Output buffer too small; the required length is still written.
    BufferTooSmall = 10,
    Panic = 11,
}

/// SE(2) pose; `theta` in radians.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PopiPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl From<PopiPose> for Pose2 {
    fn from(p: PopiPose) -> Self {
        Pose2::new(p.x, p.y, p.theta)
    }
}

impl From<Pose2> for PopiPose {
    fn from(p: Pose2) -> Self {
        PopiPose { x: p.x, y: p.y, theta: p.theta }
    }
}

/// Configuration handle.
pub struct PopiConfig(Config);

/// Occupancy map handle.
pub struct PopiMap(OccupancyMap);

/// Simulator handle; owns a copy of its map.
pub struct PopiSim {
    sim: ManuallyDrop<Simulator<'static>>,
    map: *mut OccupancyMap,
}

impl Drop for PopiSim {
    fn drop(&mut self) {
        // SAFETY: `map` came from `Box::into_raw` in `popi_sim_new` and `sim`, its only
        // borrower, is gone before the map is freed.
        unsafe {
            ManuallyDrop::drop(&mut self.sim);
            drop(Box::from_raw(self.map));
        }
    }
}

/// Simulator state handle.
pub struct PopiState(SimState);

/// Roadmap handle.
pub struct PopiRoadmap(Roadmap);

/// Planned path handle.
pub struct PopiPath(PlannedPath);

/// Trained policy handle.
pub struct PopiPolicy(DiffusionPolicy);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> PopiStatus {
    match e {
        Error::Io { .. } => PopiStatus::Io,
        Error::Parse { .. } => PopiStatus::Parse,
        Error::Config(_) => PopiStatus::Config,
        Error::InitialCollision(_) => PopiStatus::InitialCollision,
        Error::NoPath { .. } | Error::SnapFailure(_) => PopiStatus::NoPath,
        Error::Checkpoint(_) => PopiStatus::Checkpoint,
        Error::Invariant(_) => PopiStatus::Invariant,
        _ => PopiStatus::InvalidArgument,
    }
}

struct Fail(PopiStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PopiStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(PopiStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PopiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PopiStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PopiStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn popi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn popi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `a ∘ b`.
#[no_mangle]
pub extern "C" fn popi_pose_compose(a: PopiPose, b: PopiPose) -> PopiPose {
    Pose2::from(a).compose(&b.into()).into()
}

/// `pose` expressed in `frame`.
#[no_mangle]
pub extern "C" fn popi_pose_relative(pose: PopiPose, frame: PopiPose) -> PopiPose {
    Pose2::from(pose).relative_to(&frame.into()).into()
}

/// Loads a JSON config, or the built-in defaults when `path` is null.
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn popi_config_new(path: *const c_char, out: *mut *mut PopiConfig) -> PopiStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = if path.is_null() { Config::default() } else { Config::load(str_arg(path, "path")?)? };
        *out = boxed(PopiConfig(cfg));
        Ok(())
    })
}

/// Applies one `key=value` override.
///
/// # Safety
/// `cfg` must be a live config handle and `assignment` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn popi_config_set(cfg: *mut PopiConfig, assignment: *const c_char) -> PopiStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        cfg.0.apply_override(str_arg(assignment, "assignment")?)?;
        Ok(())
    })
}

/// Content hash of the config as a new string.
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn popi_config_hash(cfg: *const PopiConfig, out: *mut *mut c_char) -> PopiStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        *out_arg(out, "out")? = CString::new(cfg.0.hash()).unwrap().into_raw();
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a config handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn popi_config_free(cfg: *mut PopiConfig) {
    free(cfg)
}

/// Bundled layout `"training"` or `"carpet"`, optionally with the central doorway closed.
///
/// # Safety
/// `layout` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn popi_map_layout(
    layout: *const c_char,
    block_center: bool,
    out: *mut *mut PopiMap,
) -> PopiStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let layout = Layout::parse(str_arg(layout, "layout")?)?;
        *out = boxed(PopiMap(layout.map_with_block(block_center)));
        Ok(())
    })
}

/// Loads a map file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn popi_map_load(path: *const c_char, out: *mut *mut PopiMap) -> PopiStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = boxed(PopiMap(OccupancyMap::load(str_arg(path, "path")?)?));
        Ok(())
    })
}

/// Whether the world point lies in an occupied cell or off the map.
///
/// # Safety
/// `map` must be a live map handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn popi_map_occupied(map: *const PopiMap, x: f64, y: f64, out: *mut bool) -> PopiStatus {
    guard(|| {
        let map = ref_arg(map, "map")?;
        *out_arg(out, "out")? = map.0.point_occupied(x, y);
        Ok(())
    })
}

/// # Safety
/// `map` must be null or a map handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn popi_map_free(map: *mut PopiMap) {
    free(map)
}

/// Simulator over a copy of `map`. `condition` is `"nominal"`, `"carpet"`, `"unseen_grasp"`
/// or `"unseen_chair"`; carpet only changes the dynamics here, the map is the caller's.
///
/// # Safety
/// `cfg` and `map` must be live handles, `condition` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn popi_sim_new(
    cfg: *const PopiConfig,
    map: *const PopiMap,
    condition: *const c_char,
    out: *mut *mut PopiSim,
) -> PopiStatus {
    guard(|| {
        let cfg = ref_arg(cfg, "cfg")?;
        let map = ref_arg(map, "map")?;
        let out = out_arg(out, "out")?;
        let condition = parse_condition(str_arg(condition, "condition")?)?;
        let owned = Box::into_raw(Box::new(map.0.clone()));
        // SAFETY: the map lives until `PopiSim` is dropped, after the simulator.
        let sim = match Simulator::new(condition.sim_params(&cfg.0), &*owned, cfg.0.footprint) {
            Ok(s) => s,
            Err(e) => {
                drop(Box::from_raw(owned));
                return Err(e.into());
            }
        };
        *out = boxed(PopiSim { sim: ManuallyDrop::new(sim), map: owned });
        Ok(())
    })
}

fn parse_condition(s: &str) -> Result<Condition, Fail> {
    Condition::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| invalid(format!("unknown condition {s:?}")))
}

/// # Safety
/// `sim` must be null or a simulator handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn popi_sim_free(sim: *mut PopiSim) {
    free(sim)
}

/// Resets with the chair at `object` and the robot at its nominal grasp pose.
///
/// # Safety
/// `sim` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn popi_sim_reset(
    sim: *const PopiSim,
    object: PopiPose,
    seed: u64,
    out: *mut *mut PopiState,
) -> PopiStatus {
    guard(|| {
        let sim = &ref_arg(sim, "sim")?.sim;
        let out = out_arg(out, "out")?;
        let object: Pose2 = object.into();
        let state = sim.reset(sim.params().robot_for_object(&object), object, seed)?;
        *out = boxed(PopiState(state));
        Ok(())
    })
}

/// Advances `state` one step toward the commanded robot pose.
///
/// # Safety
/// `sim` and `state` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn popi_sim_step(sim: *const PopiSim, state: *mut PopiState, command: PopiPose) -> PopiStatus {
    guard(|| {
        let sim = &ref_arg(sim, "sim")?.sim;
        let state = out_arg(state, "state")?;
        state.0 = sim.step(&state.0, &command.into());
        Ok(())
    })
}

/// Robot pose, chair pose, grasp stress and whether the grasp still holds.
///
/// # Safety
/// `state` must be a live handle; each output pointer may be null to skip it.
#[no_mangle]
pub unsafe extern "C" fn popi_state_get(
    state: *const PopiState,
    robot: *mut PopiPose,
    object: *mut PopiPose,
    stress: *mut f64,
    held: *mut bool,
) -> PopiStatus {
    guard(|| {
        let s = &ref_arg(state, "state")?.0;
        if let Some(r) = robot.as_mut() {
            *r = s.robot.into();
        }
        if let Some(o) = object.as_mut() {
            *o = s.object.into();
        }
        if let Some(v) = stress.as_mut() {
            *v = s.grasp_stress;
        }
        if let Some(h) = held.as_mut() {
            *h = s.grasp_held;
        }
        Ok(())
    })
}

/// # Safety
/// `state` must be null or a state handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn popi_state_free(state: *mut PopiState) {
    free(state)
}

/// Builds the roadmap for `map` with the config's planner grid.
///
/// # Safety
/// `cfg` and `map` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn popi_roadmap_build(
    cfg: *const PopiConfig,
    map: *const PopiMap,
    out: *mut *mut PopiRoadmap,
) -> PopiStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.0;
        let map = &ref_arg(map, "map")?.0;
        let out = out_arg(out, "out")?;
        let p = &cfg.planner;
        let rm = Roadmap::build(map, &cfg.footprint, p.xy_step, p.theta_step(), p.rotation_weight)?;
        *out = boxed(PopiRoadmap(rm));
        Ok(())
    })
}

/// # Safety
/// `roadmap` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn popi_roadmap_node_count(roadmap: *const PopiRoadmap, out: *mut usize) -> PopiStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(roadmap, "roadmap")?.0.node_count();
        Ok(())
    })
}

/// Plans between two chair poses; [`PopiStatus::NoPath`] when they are not connected.
///
/// # Safety
/// `cfg` and `roadmap` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn popi_roadmap_plan(
    cfg: *const PopiConfig,
    roadmap: *const PopiRoadmap,
    start: PopiPose,
    goal: PopiPose,
    out: *mut *mut PopiPath,
) -> PopiStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.0;
        let rm = &ref_arg(roadmap, "roadmap")?.0;
        let out = out_arg(out, "out")?;
        let path = rm.plan(&cfg.footprint, &start.into(), &goal.into())?;
        *out = boxed(PopiPath(path));
        Ok(())
    })
}

/// # Safety
/// `roadmap` must be null or a roadmap handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn popi_roadmap_free(roadmap: *mut PopiRoadmap) {
    free(roadmap)
}

/// Copies the path's chair poses into `buf` (capacity `cap`); `len` receives the count.
///
/// # Safety
/// `path` must be a live handle, `len` writable, and `buf` valid for `cap` poses (or null
/// with `cap == 0` to query the length).
#[no_mangle]
pub unsafe extern "C" fn popi_path_chair_poses(
    path: *const PopiPath,
    buf: *mut PopiPose,
    cap: usize,
    len: *mut usize,
) -> PopiStatus {
    guard(|| {
        let path = &ref_arg(path, "path")?.0;
        let poses: Vec<PopiPose> = path.poses.iter().map(|p| p.object.into()).collect();
        copy_out(&poses, buf, cap, len)
    })
}

/// Sum of edge costs along the path.
///
/// # Safety
/// `path` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn popi_path_cost(path: *const PopiPath, out: *mut f64) -> PopiStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(path, "path")?.0.total_length;
        Ok(())
    })
}

/// # Safety
/// `path` must be null or a path handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn popi_path_free(path: *mut PopiPath) {
    free(path)
}

unsafe fn copy_out(src: &[PopiPose], buf: *mut PopiPose, cap: usize, len: *mut usize) -> Result<(), Fail> {
    *out_arg(len, "len")? = src.len();
    if cap < src.len() {
        return Err(Fail(PopiStatus::BufferTooSmall, format!("buffer holds {cap} poses, {} needed", src.len())));
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Loads a checkpoint and checks it against the config's policy parameters. `global`
/// selects the whole-route policy instead of the waypoint-relative one.
///
/// # Safety
/// `cfg` must be a live handle, `path` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn popi_policy_load(
    cfg: *const PopiConfig,
    path: *const c_char,
    global: bool,
    out: *mut *mut PopiPolicy,
) -> PopiStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.0;
        let out = out_arg(out, "out")?;
        let kind = if global { PolicyKind::Global } else { PolicyKind::Local };
        let p = DiffusionPolicy::load_checked(str_arg(path, "path")?, &cfg.policy, kind)?;
        *out = boxed(PopiPolicy(p));
        Ok(())
    })
}

/// Samples one action sequence from `n_obs` robot and chair poses expressed in the goal
/// frame. `n_obs` must equal the policy's observation horizon.
///
/// # Safety
/// `policy` must be a live handle, `obs_robot`/`obs_object` valid for `n_obs` poses,
/// `buf` valid for `cap` poses and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn popi_policy_sample(
    policy: *const PopiPolicy,
    obs_robot: *const PopiPose,
    obs_object: *const PopiPose,
    n_obs: usize,
    seed: u64,
    buf: *mut PopiPose,
    cap: usize,
    len: *mut usize,
) -> PopiStatus {
    guard(|| {
        let policy = &ref_arg(policy, "policy")?.0;
        if obs_robot.is_null() || obs_object.is_null() {
            return Err(null("observation"));
        }
        let robot: Vec<Pose2> = std::slice::from_raw_parts(obs_robot, n_obs).iter().map(|&p| p.into()).collect();
        let object: Vec<Pose2> = std::slice::from_raw_parts(obs_object, n_obs).iter().map(|&p| p.into()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actions = policy.sample(&robot, &object, &mut rng, None)?;
        let actions: Vec<PopiPose> = actions.into_iter().map(Into::into).collect();
        copy_out(&actions, buf, cap, len)
    })
}

/// Number of poses in one sampled action sequence.
///
/// # Safety
/// `policy` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn popi_policy_action_horizon(policy: *const PopiPolicy, out: *mut usize) -> PopiStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(policy, "policy")?.0.header.action_horizon;
        Ok(())
    })
}

/// # Safety
/// `policy` must be null or a policy handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn popi_policy_free(policy: *mut PopiPolicy) {
    free(policy)
}

/// Runs one episode on the route goal `distance` meters along the bundled test route and
/// returns the episode record as a JSON string.
///
/// `method` is `"popi"`, `"local"`, `"global"`, `"astar"` or `"rrt"`; `policy` may be null
/// for the planner-only methods.
///
/// # Safety
/// `cfg` must be a live handle, `policy` null or live, strings NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn popi_run_episode(
    cfg: *const PopiConfig,
    policy: *const PopiPolicy,
    method: *const c_char,
    condition: *const c_char,
    distance: f64,
    seed: u64,
    out: *mut *mut c_char,
) -> PopiStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.0;
        let out = out_arg(out, "out")?;
        let method = Method::parse(str_arg(method, "method")?)?;
        let condition = parse_condition(str_arg(condition, "condition")?)?;
        let route = test_route();
        let goal = route
            .goals
            .iter()
            .find(|g| (g.distance - distance).abs() < 1e-9)
            .ok_or_else(|| invalid(format!("no route goal at {distance} m")))?
            .goal;
        let map = condition.layout().map_with_block(true);
        let sim = Simulator::new(condition.sim_params(cfg), &map, cfg.footprint)?;
        let roadmap = if method.uses_planner() {
            let p = &cfg.planner;
            Some(Roadmap::build(&map, &cfg.footprint, p.xy_step, p.theta_step(), p.rotation_weight)?)
        } else {
            None
        };
        let ctx = EpisodeContext { sim: &sim, roadmap: roadmap.as_ref(), policy: policy.as_ref().map(|p| &p.0) };
        let exec = ExecutorConfig::from_config(cfg, method);
        let result = run_episode(&exec, &ctx, &route.start, &goal, seed)?;
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
            start: route.start,
            goal,
            result,
        };
        let json = serde_json::to_string(&record).map_err(|e| invalid(e.to_string()))?;
        *out = CString::new(json).unwrap().into_raw();
        Ok(())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn popi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
