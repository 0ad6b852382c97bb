//! Fully connected network over a flat parameter vector, with hand-written backprop and Adam.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// Multilayer perceptron with SiLU hidden activations and a linear output layer.
///
/// Parameters are stored layer by layer, each as a row-major `in × out` weight matrix
/// followed by an `out` bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for backprop.
pub struct Tape {
    /// Input to each layer (the network input, then post-activation hidden values).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation values of the hidden layers.
    pre: Vec<Array2<f64>>,
}

pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

impl Denoiser {
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {layer_sizes:?}")));
        }
        Ok(Denoiser { layer_sizes: layer_sizes.to_vec(), params: vec![0.0; param_count(layer_sizes)] })
    }

    /// Uniform fan-in initialization, `U(-1/√fan_in, 1/√fan_in)` for weights and biases.
    pub fn init(layer_sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let n = w[0] * w[1] + w[1];
            for p in &mut net.params[offset..offset + n] {
                *p = rng.gen_range(-bound..bound);
            }
            offset += n;
        }
        Ok(net)
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let net = Self::zeros(layer_sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "{} parameters for layers {layer_sizes:?}, expected {}",
                params.len(),
                net.params.len()
            )));
        }
        Ok(Denoiser { layer_sizes: layer_sizes.to_vec(), params })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer(&self, l: usize, offset: usize) -> (ArrayView2<'_, f64>, &[f64], usize) {
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let w = ArrayView2::from_shape((n_in, n_out), &self.params[offset..offset + n_in * n_out])
            .expect("layer slice matches its shape");
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        (w, b, offset + n_in * n_out + n_out)
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("input has {} columns, network expects {}", x.ncols(), self.input_dim())));
        }
        Ok(())
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let n_layers = self.layer_sizes.len() - 1;
        let mut h = x.to_owned();
        let mut offset = 0;
        for l in 0..n_layers {
            let (w, b, next) = self.layer(l, offset);
            offset = next;
            let mut z = h.dot(&w);
            for mut row in z.rows_mut() {
                row.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
            }
            if l + 1 < n_layers {
                z.mapv_inplace(silu);
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass that records the activations needed by [`Denoiser::backward`].
    pub fn forward_tape(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(&x)?;
        let n_layers = self.layer_sizes.len() - 1;
        let mut tape = Tape { inputs: Vec::with_capacity(n_layers), pre: Vec::with_capacity(n_layers - 1) };
        let mut h = x.to_owned();
        let mut offset = 0;
        for l in 0..n_layers {
            let (w, b, next) = self.layer(l, offset);
            offset = next;
            let mut z = h.dot(&w);
            for mut row in z.rows_mut() {
                row.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
            }
            tape.inputs.push(h);
            if l + 1 < n_layers {
                h = z.mapv(silu);
                tape.pre.push(z);
            } else {
                h = z;
            }
        }
        Ok((h, tape))
    }

    /// Gradient of a scalar loss with respect to every parameter, given `d_out` = ∂loss/∂output.
    pub fn backward(&self, tape: &Tape, d_out: ArrayView2<'_, f64>) -> Vec<f64> {
        let n_layers = self.layer_sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for l in 0..n_layers {
            offsets.push(offset);
            offset += self.layer_sizes[l] * self.layer_sizes[l + 1] + self.layer_sizes[l + 1];
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = d_out.to_owned();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (w, _, _) = self.layer(l, offsets[l]);
            let dw = tape.inputs[l].t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            let o = offsets[l];
            grad[o..o + n_in * n_out].copy_from_slice(dw.as_slice().expect("dot output is contiguous"));
            grad[o + n_in * n_out..o + n_in * n_out + n_out].copy_from_slice(db.as_slice().unwrap());
            if l > 0 {
                let mut dh = delta.dot(&w.t());
                dh.zip_mut_with(&tape.pre[l - 1], |d, &z| *d *= silu_grad(z));
                delta = dh;
            }
        }
        grad
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { beta1, beta2, eps, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Cosine decay from `lr0` at step 0 to `lr1` at `total`.
pub fn cosine_lr(step: usize, total: usize, lr0: f64, lr1: f64) -> f64 {
    if total <= 1 {
        return lr0;
    }
    let frac = (step as f64 / (total - 1) as f64).min(1.0);
    lr1 + 0.5 * (lr0 - lr1) * (1.0 + (std::f64::consts::PI * frac).cos())
}
