//! Diffusion numerics checks: forward-process statistics, gradients, single-mode fit.

use ndarray::Array2;
use popi_core::config::{Config, TrainParams};
use popi_core::diffusion::{forward_noise, l1_loss_and_grad, make_schedule, DiffusionPolicy, PolicyHeader, PolicyKind};
use popi_core::geometry::Pose2;
use popi_core::network::Denoiser;
use popi_core::snippet::Snippet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Check;

/// Noisy-sample mean and variance at the last diffusion step against theory.
pub fn check_forward_noise(n: usize) -> Check {
    let p = Config::default().policy;
    let s = make_schedule(p.diffusion_steps, p.beta_min, p.beta_max).map_err(|e| e.to_string())?;
    let k = s.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let zeros = [0.0];
    let draws: Vec<f64> = (0..n).map(|_| forward_noise(&zeros, k, &s, &mut rng).0[0]).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let theory = 1.0 - s.alpha_bar[k];
    let mean_ok = mean.abs() < 3.0 * (theory / n as f64).sqrt();
    let var_ok = (var / theory - 1.0).abs() < 0.05 && (var - 1.0).abs() < 0.05;
    let msg = format!("mean {mean:.4}, variance {var:.4} (theory {theory:.4})");
    if mean_ok && var_ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Largest relative error between analytic and central-difference gradients of the L1
/// loss on `probes` random parameters.
pub fn gradient_error(layers: &[usize], standard: bool, probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Denoiser::init(layers, &mut rng).unwrap();
    let batch = 6;
    let input = Array2::from_shape_fn((batch, layers[0]), |_| rng.gen_range(-1.5..1.5));
    let target = Array2::from_shape_fn((batch, *layers.last().unwrap()), |_| rng.gen_range(-2.0..2.0));
    let scale: Vec<f64> = (0..batch).map(|_| if standard { 1.0 } else { rng.gen_range(0.01..0.3) }).collect();
    let (_, grad) = l1_loss_and_grad(&net, &input, &target, &scale).unwrap();
    // Residual signs; a probe that flips one straddles a kink of |·| and is redrawn.
    let signs = |net: &Denoiser| -> Vec<bool> {
        let out = net.forward(input.view()).unwrap();
        out.indexed_iter().map(|((r, c), &o)| target[(r, c)] - scale[r] * o > 0.0).collect()
    };
    let base = signs(&net);
    let h = 1e-6;
    let n = net.params().len();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < probes {
        let i = rng.gen_range(0..n);
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let (up, _) = l1_loss_and_grad(&net, &input, &target, &scale).unwrap();
        let smooth_up = signs(&net) == base;
        net.params_mut()[i] = orig - h;
        let (down, _) = l1_loss_and_grad(&net, &input, &target, &scale).unwrap();
        let smooth_down = signs(&net) == base;
        net.params_mut()[i] = orig;
        if !(smooth_up && smooth_down) {
            continue;
        }
        checked += 1;
        let numeric = (up - down) / (2.0 * h);
        // Below 1e-5 the comparison is effectively absolute: FD rounding is ~1e-10 here.
        let denom = grad[i].abs().max(numeric.abs()).max(1e-5);
        worst = worst.max((grad[i] - numeric).abs() / denom);
    }
    worst
}

pub fn check_gradients() -> Check {
    let worst = [
        gradient_error(&[7, 9, 5], true, 100, 1),
        gradient_error(&[7, 9, 5], false, 100, 2),
        gradient_error(&[10, 12, 12, 6], true, 100, 3),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let msg = format!("worst relative error {worst:.1e} over 3 x 100 coordinates");
    if worst < 1e-4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

pub fn train_params(steps: usize) -> TrainParams {
    let mut t = Config::default().training;
    t.steps = steps;
    t.batch_size = 128;
    t.log_every = 50;
    t
}

/// Robot `x` behind the goal, chair 0.7 m ahead of it, all actions at `x + advance`.
pub fn advance_snippet(x: f64, y: f64, advance: f64) -> Snippet {
    let robot = Pose2::new(x, y, 0.0);
    let chair = Pose2::new(x + 0.7, y, 0.0);
    Snippet {
        obs_robot: vec![robot; 2],
        obs_object: vec![chair; 2],
        actions: vec![Pose2::new(x + advance, y, 0.0); 8],
        pad_mask: vec![true; 10],
    }
}

/// Trains on one demonstrated motion and checks the loss drop and the sampled action.
pub fn check_single_mode_training() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data: Vec<Snippet> =
        (0..256).map(|_| advance_snippet(rng.gen_range(-1.3..-0.9), rng.gen_range(-0.1..0.1), 0.5)).collect();
    let header = PolicyHeader::from_params(&Config::default().policy, PolicyKind::Local);
    let (policy, curve) = DiffusionPolicy::train(header, &data, &train_params(2000), 5).map_err(|e| e.to_string())?;
    let first = curve.first().unwrap().loss;
    let last = curve.last().unwrap().loss;
    let obs = advance_snippet(-1.1, 0.0, 0.5);
    let expert = obs.actions[0];
    let mut sample_rng = ChaCha8Rng::seed_from_u64(12);
    let mut total = 0.0;
    for _ in 0..100 {
        let actions =
            policy.sample(&obs.obs_robot, &obs.obs_object, &mut sample_rng, None).map_err(|e| e.to_string())?;
        total += actions[0].position_distance(&expert);
    }
    let mean = total / 100.0;
    let msg = format!("loss {first:.3} -> {last:.4}, mean first-action error {mean:.3} m");
    if last < 0.1 * first && mean < 0.1 {
        Ok(msg)
    } else {
        Err(msg)
    }
}
