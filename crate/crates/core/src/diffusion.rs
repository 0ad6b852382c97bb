//! Denoising diffusion over goal-relative action sequences: noise schedule, forward
//! noising, L1 training of the noise-prediction network, reverse sampling and checkpoints.
//!
//! Two output parameterizations are supported. The conventional one trains the network
//! to predict the injected noise ε and samples with the DDPM posterior mean. The
//! β-scaled one trains `β_k · ε_θ` against ε and samples with
//! `a ← α_k (a − β_k ε_θ) + σ_k z`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{PolicyParams, TrainParams};
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::network::{cosine_lr, Adam, Denoiser};
use crate::snippet::{decode_actions, encode_actions, encode_poses, GoalMode, Snippet, SnippetSet, POSE_DIM};

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    /// Reverse-step noise scale; zero at the final step.
    pub sigma: Vec<f64>,
}

impl NoiseSchedule {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    fn alpha_bar_prev(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.alpha_bar[k - 1]
        }
    }
}

/// Linear β schedule with α = 1 − β, ᾱ the running product and σ² the posterior variance.
pub fn make_schedule(k: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if k == 0 || !(0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::Config(format!("invalid noise schedule K={k} beta=[{beta_min}, {beta_max}]")));
    }
    let beta: Vec<f64> = (0..k)
        .map(|i| if k == 1 { beta_min } else { beta_min + (beta_max - beta_min) * i as f64 / (k - 1) as f64 })
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(k);
    let mut prod = 1.0;
    for a in &alpha {
        prod *= a;
        alpha_bar.push(prod);
    }
    let sigma = (0..k)
        .map(|i| if i == 0 { 0.0 } else { ((1.0 - alpha_bar[i - 1]) / (1.0 - alpha_bar[i]) * beta[i]).sqrt() })
        .collect();
    Ok(NoiseSchedule { beta, alpha, alpha_bar, sigma })
}

/// `noisy = √ᾱ_k · actions + √(1 − ᾱ_k) · ε` with ε drawn from `rng`.
pub fn forward_noise(actions: &[f64], k: usize, sched: &NoiseSchedule, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let ab = sched.alpha_bar[k];
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let eps: Vec<f64> = (0..actions.len()).map(|_| rng.sample(StandardNormal)).collect();
    let noisy = actions.iter().zip(&eps).map(|(x, e)| a * x + b * e).collect();
    (noisy, eps)
}

/// Sinusoidal embedding of the diffusion step.
pub fn time_embedding(k: usize, dim: usize, out: &mut [f64]) {
    let half = dim / 2;
    for i in 0..half {
        let freq = (-(1000f64).ln() * i as f64 / half.max(1) as f64).exp();
        let (s, c) = (k as f64 * freq).sin_cos();
        out[i] = s;
        out[half + i] = c;
    }
    if dim % 2 == 1 {
        out[dim - 1] = k as f64 / 100.0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Waypoint-relative short-horizon policy.
    Local,
    /// Conditioned on the final goal, trained on final-pose snippets.
    Global,
}

impl PolicyKind {
    pub fn goal_mode(self) -> GoalMode {
        match self {
            PolicyKind::Local => GoalMode::Local,
            PolicyKind::Global => GoalMode::Final,
        }
    }
}

/// Everything needed to interpret a parameter vector; stored in checkpoint headers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyHeader {
    pub kind: PolicyKind,
    pub ddpm_standard: bool,
    pub obs_horizon: usize,
    pub action_horizon: usize,
    pub diffusion_steps: usize,
    pub time_embedding_dim: usize,
    pub layer_sizes: Vec<usize>,
    pub snippet_distance: f64,
    pub angular_weight: f64,
    pub position_scale: f64,
    pub action_scale: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub clip_sample: f64,
}

impl PolicyHeader {
    pub fn from_params(p: &PolicyParams, kind: PolicyKind) -> Self {
        let action_dim = p.action_horizon * POSE_DIM;
        let input = action_dim + 2 * p.obs_horizon * POSE_DIM + p.time_embedding_dim;
        let mut layer_sizes = vec![input];
        layer_sizes.extend(&p.hidden_layers);
        layer_sizes.push(action_dim);
        PolicyHeader {
            kind,
            ddpm_standard: p.ddpm_standard,
            obs_horizon: p.obs_horizon,
            action_horizon: p.action_horizon,
            diffusion_steps: p.diffusion_steps,
            time_embedding_dim: p.time_embedding_dim,
            layer_sizes,
            snippet_distance: p.snippet_distance,
            angular_weight: p.angular_weight,
            position_scale: match kind {
                PolicyKind::Local => p.position_scale,
                PolicyKind::Global => p.global_position_scale,
            },
            action_scale: p.action_scale,
            beta_min: p.beta_min,
            beta_max: p.beta_max,
            clip_sample: p.clip_sample,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_horizon * POSE_DIM
    }

    pub fn context_dim(&self) -> usize {
        2 * self.obs_horizon * POSE_DIM
    }

    pub fn input_dim(&self) -> usize {
        self.action_dim() + self.context_dim() + self.time_embedding_dim
    }

    fn validate(&self) -> Result<()> {
        if self.layer_sizes.first() != Some(&self.input_dim()) || self.layer_sizes.last() != Some(&self.action_dim()) {
            return Err(Error::Shape(format!(
                "layer sizes {:?} do not match input {} / output {}",
                self.layer_sizes,
                self.input_dim(),
                self.action_dim()
            )));
        }
        if self.obs_horizon == 0
            || self.action_horizon == 0
            || !(self.position_scale > 0.0)
            || !(self.action_scale > 0.0)
        {
            return Err(Error::Config("policy horizons and scales must be positive".into()));
        }
        Ok(())
    }
}

/// Training data accessible by index.
pub trait SnippetSource {
    fn len(&self) -> usize;
    fn get(&self, i: usize) -> Snippet;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SnippetSource for SnippetSet {
    fn len(&self) -> usize {
        SnippetSet::len(self)
    }

    fn get(&self, i: usize) -> Snippet {
        SnippetSet::get(self, i)
    }
}

impl SnippetSource for [Snippet] {
    fn len(&self) -> usize {
        <[Snippet]>::len(self)
    }

    fn get(&self, i: usize) -> Snippet {
        self[i].clone()
    }
}

impl SnippetSource for Vec<Snippet> {
    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn get(&self, i: usize) -> Snippet {
        self[i].clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    /// Mean minibatch loss since the previous point; the point at step 0 is the first
    /// minibatch loss before any update.
    pub loss: f64,
}

/// Mean absolute error between `target` and `scale_k · output`, with its parameter gradient.
/// `row_scale` holds the per-row output scale (1 for ε-prediction, β_k otherwise).
pub fn l1_loss_and_grad(
    net: &Denoiser,
    input: &Array2<f64>,
    target: &Array2<f64>,
    row_scale: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let (out, tape) = net.forward_tape(input.view())?;
    if out.dim() != target.dim() {
        return Err(Error::Shape(format!("output {:?} vs target {:?}", out.dim(), target.dim())));
    }
    let n = out.len() as f64;
    let mut loss = 0.0;
    let mut d_out = Array2::zeros(out.dim());
    for ((i, j), &o) in out.indexed_iter() {
        let s = row_scale[i];
        let r = target[(i, j)] - s * o;
        loss += r.abs();
        // d|r|/do = -s·sign(r); zero at the kink.
        d_out[(i, j)] = -s * r.signum() * f64::from(r != 0.0) / n;
    }
    Ok((loss / n, net.backward(&tape, d_out.view())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionPolicy {
    pub header: PolicyHeader,
    pub net: Denoiser,
    pub schedule: NoiseSchedule,
}

const CKPT_MAGIC: &[u8; 8] = b"POPICKPT";
const CKPT_VERSION: u32 = 1;

impl DiffusionPolicy {
    pub fn new(header: PolicyHeader, net: Denoiser) -> Result<Self> {
        header.validate()?;
        if net.layer_sizes() != header.layer_sizes.as_slice() {
            return Err(Error::Shape("network layers differ from header".into()));
        }
        let schedule = make_schedule(header.diffusion_steps, header.beta_min, header.beta_max)?;
        Ok(DiffusionPolicy { header, net, schedule })
    }

    /// Writes one network input row for context `ctx` (already encoded), noisy actions
    /// `x` and diffusion step `k`.
    fn fill_input(&self, row: &mut [f64], x: &[f64], ctx: &[f64], k: usize) {
        let (a, c) = (self.header.action_dim(), self.header.context_dim());
        row[..a].copy_from_slice(x);
        row[a..a + c].copy_from_slice(ctx);
        time_embedding(k, self.header.time_embedding_dim, &mut row[a + c..]);
    }

    /// Encoded context for goal-relative robot and chair histories.
    pub fn encode_context(&self, obs_robot: &[Pose2], obs_object: &[Pose2]) -> Result<Vec<f64>> {
        let h = self.header.obs_horizon;
        if obs_robot.len() != h || obs_object.len() != h {
            return Err(Error::Shape(format!(
                "expected {h} observations, got {} robot / {} chair",
                obs_robot.len(),
                obs_object.len()
            )));
        }
        let mut ctx = vec![0.0; self.header.context_dim()];
        encode_poses(obs_robot, self.header.position_scale, &mut ctx[..h * POSE_DIM]);
        encode_poses(obs_object, self.header.position_scale, &mut ctx[h * POSE_DIM..]);
        Ok(ctx)
    }

    /// Runs the reverse process from Gaussian noise and decodes goal-relative robot poses.
    ///
    /// `project`, when given, sees the decoded poses after every reverse step and may move
    /// them; moved positions are written back into the sample.
    pub fn sample(
        &self,
        obs_robot: &[Pose2],
        obs_object: &[Pose2],
        rng: &mut impl Rng,
        mut project: Option<&mut dyn FnMut(&mut [Pose2])>,
    ) -> Result<Vec<Pose2>> {
        let ctx = self.encode_context(obs_robot, obs_object)?;
        let dim = self.header.action_dim();
        let scale = self.header.action_scale;
        let anchor = obs_robot[obs_robot.len() - 1];
        let sched = &self.schedule;
        let mut x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut input = Array2::zeros((1, self.header.input_dim()));
        for k in (0..sched.len()).rev() {
            self.fill_input(input.row_mut(0).as_slice_mut().unwrap(), &x, &ctx, k);
            let out = self.net.forward(input.view())?;
            let out = out.row(0);
            let noise_scale = sched.sigma[k];
            if self.header.ddpm_standard {
                let ab = sched.alpha_bar[k];
                let ab_prev = sched.alpha_bar_prev(k);
                let c0 = ab_prev.sqrt() * sched.beta[k] / (1.0 - ab);
                let c1 = sched.alpha[k].sqrt() * (1.0 - ab_prev) / (1.0 - ab);
                for (xi, &e) in x.iter_mut().zip(out.iter()) {
                    let mut x0 = (*xi - (1.0 - ab).sqrt() * e) / ab.sqrt();
                    if self.header.clip_sample > 0.0 {
                        x0 = x0.clamp(-self.header.clip_sample, self.header.clip_sample);
                    }
                    *xi = c0 * x0 + c1 * *xi;
                }
            } else {
                let (a, b) = (sched.alpha[k], sched.beta[k]);
                for (xi, &e) in x.iter_mut().zip(out.iter()) {
                    *xi = a * (*xi - b * e);
                    if self.header.clip_sample > 0.0 {
                        *xi = xi.clamp(-self.header.clip_sample, self.header.clip_sample);
                    }
                }
            }
            if noise_scale > 0.0 {
                for xi in &mut x {
                    let z: f64 = rng.sample(StandardNormal);
                    *xi += noise_scale * z;
                }
            }
            if let Some(f) = project.as_deref_mut() {
                let before = decode_actions(&x, &anchor, scale);
                let mut moved = before.clone();
                f(&mut moved);
                for (i, (b, m)) in before.iter().zip(&moved).enumerate() {
                    if b != m {
                        let mut e = [0.0; POSE_DIM];
                        encode_actions(std::slice::from_ref(m), &anchor, scale, &mut e);
                        x[i * POSE_DIM] = e[0];
                        x[i * POSE_DIM + 1] = e[1];
                    }
                }
            }
        }
        Ok(decode_actions(&x, &anchor, scale))
    }

    /// Minibatch of (input, target, row scale) for L1 training.
    fn make_batch(
        &self,
        data: &(impl SnippetSource + ?Sized),
        batch: usize,
        rng: &mut impl Rng,
    ) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
        let (a, c) = (self.header.action_dim(), self.header.context_dim());
        let (scale, action_scale) = (self.header.position_scale, self.header.action_scale);
        let mut input = Array2::zeros((batch, self.header.input_dim()));
        let mut target = Array2::zeros((batch, a));
        let mut row_scale = vec![1.0; batch];
        let mut x0 = vec![0.0; a];
        let mut ctx = vec![0.0; c];
        for r in 0..batch {
            let s = data.get(rng.gen_range(0..data.len()));
            s.encode_actions(action_scale, &mut x0);
            s.encode_context(scale, &mut ctx);
            let k = rng.gen_range(0..self.schedule.len());
            let (noisy, eps) = forward_noise(&x0, k, &self.schedule, rng);
            self.fill_input(input.row_mut(r).as_slice_mut().unwrap(), &noisy, &ctx, k);
            target.row_mut(r).as_slice_mut().unwrap().copy_from_slice(&eps);
            if !self.header.ddpm_standard {
                row_scale[r] = self.schedule.beta[k];
            }
        }
        (input, target, row_scale)
    }

    /// Minibatch L1 training with Adam and cosine step-size decay.
    pub fn train(
        header: PolicyHeader,
        data: &(impl SnippetSource + ?Sized),
        hp: &TrainParams,
        seed: u64,
    ) -> Result<(DiffusionPolicy, Vec<LossPoint>)> {
        if data.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Denoiser::init(&header.layer_sizes, &mut rng)?;
        let mut policy = DiffusionPolicy::new(header, net)?;
        let mut opt = Adam::new(policy.net.params().len(), hp.adam_beta1, hp.adam_beta2, hp.adam_eps);
        let log_every = hp.log_every.max(1);
        let mut curve = Vec::new();
        let (mut acc, mut count) = (0.0, 0usize);
        for step in 0..hp.steps {
            let (input, target, row_scale) = policy.make_batch(data, hp.batch_size, &mut rng);
            let (loss, grad) = l1_loss_and_grad(&policy.net, &input, &target, &row_scale)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { step, loss });
            }
            let lr = cosine_lr(step, hp.steps, hp.learning_rate, hp.final_learning_rate);
            opt.step(policy.net.params_mut(), &grad, lr);
            if step == 0 {
                // Loss of the freshly initialized network.
                curve.push(LossPoint { step: 0, loss });
            }
            acc += loss;
            count += 1;
            if (step + 1) % log_every == 0 || step + 1 == hp.steps {
                curve.push(LossPoint { step: step + 1, loss: acc / count as f64 });
                acc = 0.0;
                count = 0;
            }
        }
        Ok((policy, curve))
    }

    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        w.write_all(CKPT_MAGIC)?;
        w.write_all(&CKPT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&(self.net.params().len() as u64).to_le_bytes())?;
        for p in self.net.params() {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read(mut r: impl Read) -> Result<Self> {
        let err = |m: String| Error::Checkpoint(m);
        let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CKPT_MAGIC {
            return Err(err("not a policy checkpoint".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(io)?;
        let version = u32::from_le_bytes(b4);
        if version != CKPT_VERSION {
            return Err(err(format!("unsupported checkpoint version {version}")));
        }
        r.read_exact(&mut b4).map_err(io)?;
        let mut header = vec![0u8; u32::from_le_bytes(b4) as usize];
        r.read_exact(&mut header).map_err(io)?;
        let header: PolicyHeader = serde_json::from_slice(&header).map_err(|e| err(e.to_string()))?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(io)?;
        let n = u64::from_le_bytes(b8) as usize;
        if n != crate::network::param_count(&header.layer_sizes) {
            return Err(err(format!("{n} parameters do not match layers {:?}", header.layer_sizes)));
        }
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b8).map_err(io)?;
            params.push(f64::from_le_bytes(b8));
        }
        let net = Denoiser::from_params(&header.layer_sizes, params)?;
        DiffusionPolicy::new(header, net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }

    /// Loads a checkpoint and checks it was trained under `params` for `kind`.
    pub fn load_checked(path: impl AsRef<Path>, params: &PolicyParams, kind: PolicyKind) -> Result<Self> {
        let policy = Self::load(path)?;
        let expected = PolicyHeader::from_params(params, kind);
        if policy.header != expected {
            return Err(Error::Checkpoint(format!(
                "checkpoint header {:?} does not match config {:?}",
                policy.header, expected
            )));
        }
        Ok(policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_header(standard: bool) -> PolicyHeader {
        let mut p = crate::config::Config::default().policy;
        p.hidden_layers = vec![16];
        p.diffusion_steps = 10;
        p.ddpm_standard = standard;
        PolicyHeader::from_params(&p, PolicyKind::Local)
    }

    #[test]
    fn schedule_basics() {
        let s = make_schedule(1, 1e-3, 1e-3).unwrap();
        assert_eq!(s.alpha_bar, vec![1.0 - 1e-3]);
        assert_eq!(s.sigma, vec![0.0]);
        let s = make_schedule(100, 1e-4, 0.02).unwrap();
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
        assert!(s.beta.windows(2).all(|w| w[1] > w[0]));
        assert!(make_schedule(0, 1e-4, 0.02).is_err());
        assert!(make_schedule(10, 0.2, 0.1).is_err());
    }

    #[test]
    fn oracle_noise_inverts_forward_process() {
        let s = make_schedule(50, 1e-4, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x0: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
        for k in [0, 10, 49] {
            let (noisy, eps) = forward_noise(&x0, k, &s, &mut rng);
            let ab = s.alpha_bar[k];
            for i in 0..x0.len() {
                let rec = (noisy[i] - (1.0 - ab).sqrt() * eps[i]) / ab.sqrt();
                assert!((rec - x0[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sampling_is_seeded_and_shaped() {
        let h = tiny_header(true);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Denoiser::init(&h.layer_sizes, &mut rng).unwrap();
        let policy = DiffusionPolicy::new(h, net).unwrap();
        let obs = vec![Pose2::new(-1.0, 0.0, 0.0); 2];
        let a = policy.sample(&obs, &obs, &mut ChaCha8Rng::seed_from_u64(3), None).unwrap();
        let b = policy.sample(&obs, &obs, &mut ChaCha8Rng::seed_from_u64(3), None).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a, b);
        assert!(policy.sample(&obs[..1], &obs, &mut rng, None).is_err());
    }

    #[test]
    fn identity_projection_changes_nothing() {
        let h = tiny_header(true);
        let net = Denoiser::init(&h.layer_sizes, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let policy = DiffusionPolicy::new(h, net).unwrap();
        let obs = vec![Pose2::new(-1.0, 0.2, 0.1); 2];
        let mut calls = 0;
        let mut id = |_: &mut [Pose2]| calls += 1;
        let a = policy.sample(&obs, &obs, &mut ChaCha8Rng::seed_from_u64(5), Some(&mut id)).unwrap();
        let b = policy.sample(&obs, &obs, &mut ChaCha8Rng::seed_from_u64(5), None).unwrap();
        assert_eq!(a, b);
        assert_eq!(calls, 10);
    }

    #[test]
    fn checkpoint_round_trip_and_validation() {
        for standard in [true, false] {
            let h = tiny_header(standard);
            let net = Denoiser::init(&h.layer_sizes, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
            let policy = DiffusionPolicy::new(h, net).unwrap();
            let mut buf = Vec::new();
            policy.write(&mut buf).unwrap();
            assert_eq!(DiffusionPolicy::read(buf.as_slice()).unwrap(), policy);
            let mut bad = buf.clone();
            bad[0] = b'X';
            assert!(DiffusionPolicy::read(bad.as_slice()).is_err());
            assert!(DiffusionPolicy::read(&buf[..buf.len() - 3]).is_err());
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let mut p = crate::config::Config::default().policy;
        p.hidden_layers = vec![16];
        p.diffusion_steps = 10;
        let h = PolicyHeader::from_params(&p, PolicyKind::Local);
        let net = Denoiser::zeros(&h.layer_sizes).unwrap();
        DiffusionPolicy::new(h, net).unwrap().save(&path).unwrap();
        assert!(DiffusionPolicy::load_checked(&path, &p, PolicyKind::Local).is_ok());
        assert!(DiffusionPolicy::load_checked(&path, &p, PolicyKind::Global).is_err());
        p.obs_horizon = 3;
        assert!(DiffusionPolicy::load_checked(&path, &p, PolicyKind::Local).is_err());
    }
}
