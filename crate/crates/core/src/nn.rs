//! Hand-written fully-connected networks for the actor-critic pair.
//!
//! One tanh hidden layer of width 200 for both networks. The actor carries
//! two heads on the shared trunk: a linear head for the torque means and a
//! softplus head for the standard deviations (softplus keeps sigma > 0
//! while leaving the means free to go negative). Reverse-mode gradients are
//! exact and checked against central finite differences in the tests.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::mathx;

pub const HIDDEN_WIDTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
    Softplus,
}

impl Activation {
    pub fn tag(&self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Tanh => 1,
            Activation::Softplus => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Softplus),
            _ => None,
        }
    }

    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Tanh => mathx::tanh(x),
            Activation::Softplus => mathx::softplus(x),
        }
    }

    /// Derivative expressed through the pre-activation value.
    fn derivative(&self, pre: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => {
                let t = mathx::tanh(pre);
                1.0 - t * t
            }
            Activation::Softplus => mathx::sigmoid(pre),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub dw: DMatrix<f64>,
    pub db: DVector<f64>,
}

impl Layer {
    pub fn new_scaled(
        inputs: usize,
        outputs: usize,
        gain: f64,
        act: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let scale = gain / mathx::sqrt(inputs as f64);
        let w = DMatrix::from_fn(outputs, inputs, |_, _| standard_normal(rng) * scale);
        Layer { w, b: DVector::zeros(outputs), act }
    }

    pub fn zeros(inputs: usize, outputs: usize, act: Activation) -> Self {
        Layer { w: DMatrix::zeros(outputs, inputs), b: DVector::zeros(outputs), act }
    }

    /// Returns (activated output, pre-activation cache).
    pub fn forward(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        assert_eq!(x.len(), self.w.ncols(), "layer input dimension mismatch");
        let pre = &self.w * x + &self.b;
        let out = pre.map(|v| self.act.apply(v));
        (out, pre)
    }

    /// Backprop through the layer: returns parameter gradients and dL/dx.
    pub fn backward(
        &self,
        x: &DVector<f64>,
        pre: &DVector<f64>,
        dout: &DVector<f64>,
    ) -> (LayerGrad, DVector<f64>) {
        let dpre = DVector::from_fn(pre.len(), |i, _| dout[i] * self.act.derivative(pre[i]));
        let dw = &dpre * x.transpose();
        let dx = self.w.transpose() * &dpre;
        (LayerGrad { dw, db: dpre }, dx)
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

pub struct MlpCache {
    /// Input to each layer.
    pub inputs: Vec<DVector<f64>>,
    /// Pre-activation of each layer.
    pub pres: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct MlpGrad {
    pub layers: Vec<LayerGrad>,
}

impl Mlp {
    pub fn forward(&self, x: &DVector<f64>) -> (DVector<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (out, pre) = layer.forward(&cur);
            inputs.push(cur);
            pres.push(pre);
            cur = out;
        }
        (cur, MlpCache { inputs, pres })
    }

    pub fn backward(&self, cache: &MlpCache, dout: &DVector<f64>) -> (MlpGrad, DVector<f64>) {
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        let mut d = dout.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (g, dx) = layer.backward(&cache.inputs[i], &cache.pres[i], &d);
            grads.push(g);
            d = dx;
        }
        grads.reverse();
        (MlpGrad { layers: grads }, d)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }
}

/// Diagonal-Gaussian policy distribution parameters for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicyOutput {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

/// Actor: shared tanh trunk, linear mean head, softplus std head.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub trunk: Mlp,
    pub mean_head: Layer,
    pub std_head: Layer,
}

pub struct ActorCache {
    pub trunk: MlpCache,
    pub hidden: DVector<f64>,
    pub mean_pre: DVector<f64>,
    pub std_pre: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct ActorGrad {
    pub trunk: MlpGrad,
    pub mean_head: LayerGrad,
    pub std_head: LayerGrad,
}

impl Actor {
    pub fn new(obs_dim: usize, act_dim: usize, init_std: f64, rng: &mut impl Rng) -> Self {
        let trunk =
            Mlp { layers: vec![Layer::new_scaled(obs_dim, HIDDEN_WIDTH, 1.0, Activation::Tanh, rng)] };
        let mean_head = Layer::new_scaled(HIDDEN_WIDTH, act_dim, 0.01, Activation::Linear, rng);
        let mut std_head = Layer::new_scaled(HIDDEN_WIDTH, act_dim, 0.01, Activation::Softplus, rng);
        // softplus(b) = init_std  =>  b = ln(e^init_std - 1)
        let bias = mathx::ln(mathx::exp(init_std) - 1.0);
        std_head.b.fill(bias);
        Actor { trunk, mean_head, std_head }
    }

    pub fn forward(&self, obs: &DVector<f64>) -> (GaussianPolicyOutput, ActorCache) {
        let (hidden, trunk_cache) = self.trunk.forward(obs);
        let (mean, mean_pre) = self.mean_head.forward(&hidden);
        let (std, std_pre) = self.std_head.forward(&hidden);
        (
            GaussianPolicyOutput { mean, std },
            ActorCache { trunk: trunk_cache, hidden, mean_pre, std_pre },
        )
    }

    pub fn backward(
        &self,
        cache: &ActorCache,
        dmean: &DVector<f64>,
        dstd: &DVector<f64>,
    ) -> ActorGrad {
        let (gmean, dh_mean) = self.mean_head.backward(&cache.hidden, &cache.mean_pre, dmean);
        let (gstd, dh_std) = self.std_head.backward(&cache.hidden, &cache.std_pre, dstd);
        let dh = dh_mean + dh_std;
        let (gtrunk, _) = self.trunk.backward(&cache.trunk, &dh);
        ActorGrad { trunk: gtrunk, mean_head: gmean, std_head: gstd }
    }

    pub fn param_count(&self) -> usize {
        self.trunk.param_count() + self.mean_head.param_count() + self.std_head.param_count()
    }

    pub fn action_dim(&self) -> usize {
        self.mean_head.b.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.layers[0].w.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: Mlp,
}

impl Critic {
    pub fn new(obs_dim: usize, rng: &mut impl Rng) -> Self {
        Critic {
            net: Mlp {
                layers: vec![
                    Layer::new_scaled(obs_dim, HIDDEN_WIDTH, 1.0, Activation::Tanh, rng),
                    Layer::new_scaled(HIDDEN_WIDTH, 1, 1.0, Activation::Linear, rng),
                ],
            },
        }
    }

    pub fn value(&self, obs: &DVector<f64>) -> (f64, MlpCache) {
        let (out, cache) = self.net.forward(obs);
        (out[0], cache)
    }
}

/// Draw one standard normal variate (Box-Muller).
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    mathx::sqrt(-2.0 * mathx::ln(u1)) * mathx::cos(mathx::TAU * u2)
}

/// Sample an action and its log-probability from the diagonal Gaussian.
pub fn policy_sample(
    out: &GaussianPolicyOutput,
    rng: &mut impl Rng,
) -> (DVector<f64>, f64) {
    let action = DVector::from_fn(out.mean.len(), |i, _| {
        out.mean[i] + out.std[i] * standard_normal(rng)
    });
    let lp = policy_log_prob(out, &action);
    (action, lp)
}

/// log pi(a | mean, std) for the diagonal Gaussian.
pub fn policy_log_prob(out: &GaussianPolicyOutput, action: &DVector<f64>) -> f64 {
    let mut lp = 0.0;
    for i in 0..out.mean.len() {
        let sigma = out.std[i];
        let z = (action[i] - out.mean[i]) / sigma;
        lp += -mathx::ln(sigma) - 0.5 * mathx::LN_2PI - 0.5 * z * z;
    }
    lp
}

/// Differential entropy of the diagonal Gaussian: sum of 0.5 ln(2 pi e s^2).
pub fn policy_entropy(std: &DVector<f64>) -> f64 {
    std.iter().map(|s| 0.5 * (mathx::LN_2PI + 1.0) + mathx::ln(*s)).sum()
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let b1t = 1.0 - mathx::powi(self.beta1, self.t as i32);
        let b2t = 1.0 - mathx::powi(self.beta2, self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= self.lr * mhat / (mathx::sqrt(vhat) + self.eps);
        }
    }
}

// Flat parameter views for the optimizer and checkpointing.

fn flatten_layer(layer: &Layer, out: &mut Vec<f64>) {
    out.extend(layer.w.iter());
    out.extend(layer.b.iter());
}

fn unflatten_layer(layer: &mut Layer, data: &[f64], pos: &mut usize) {
    for v in layer.w.iter_mut() {
        *v = data[*pos];
        *pos += 1;
    }
    for v in layer.b.iter_mut() {
        *v = data[*pos];
        *pos += 1;
    }
}

fn flatten_layer_grad(grad: &LayerGrad, out: &mut Vec<f64>) {
    out.extend(grad.dw.iter());
    out.extend(grad.db.iter());
}

impl Actor {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.trunk.layers {
            flatten_layer(l, &mut out);
        }
        flatten_layer(&self.mean_head, &mut out);
        flatten_layer(&self.std_head, &mut out);
        out
    }

    pub fn unflatten(&mut self, data: &[f64]) {
        let mut pos = 0;
        for l in &mut self.trunk.layers {
            unflatten_layer(l, data, &mut pos);
        }
        unflatten_layer(&mut self.mean_head, data, &mut pos);
        unflatten_layer(&mut self.std_head, data, &mut pos);
        assert_eq!(pos, data.len());
    }
}

impl ActorGrad {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.trunk.layers {
            flatten_layer_grad(g, &mut out);
        }
        flatten_layer_grad(&self.mean_head, &mut out);
        flatten_layer_grad(&self.std_head, &mut out);
        out
    }

    pub fn zeros_like(actor: &Actor) -> Self {
        ActorGrad {
            trunk: MlpGrad {
                layers: actor
                    .trunk
                    .layers
                    .iter()
                    .map(|l| LayerGrad {
                        dw: DMatrix::zeros(l.w.nrows(), l.w.ncols()),
                        db: DVector::zeros(l.b.len()),
                    })
                    .collect(),
            },
            mean_head: LayerGrad {
                dw: DMatrix::zeros(actor.mean_head.w.nrows(), actor.mean_head.w.ncols()),
                db: DVector::zeros(actor.mean_head.b.len()),
            },
            std_head: LayerGrad {
                dw: DMatrix::zeros(actor.std_head.w.nrows(), actor.std_head.w.ncols()),
                db: DVector::zeros(actor.std_head.b.len()),
            },
        }
    }

    pub fn accumulate(&mut self, other: &ActorGrad, scale: f64) {
        for (a, b) in self.trunk.layers.iter_mut().zip(other.trunk.layers.iter()) {
            a.dw += &b.dw * scale;
            a.db += &b.db * scale;
        }
        self.mean_head.dw += &other.mean_head.dw * scale;
        self.mean_head.db += &other.mean_head.db * scale;
        self.std_head.dw += &other.std_head.dw * scale;
        self.std_head.db += &other.std_head.db * scale;
    }
}

impl Critic {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.net.param_count());
        for l in &self.net.layers {
            flatten_layer(l, &mut out);
        }
        out
    }

    pub fn unflatten(&mut self, data: &[f64]) {
        let mut pos = 0;
        for l in &mut self.net.layers {
            unflatten_layer(l, data, &mut pos);
        }
        assert_eq!(pos, data.len());
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }
}

impl MlpGrad {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            flatten_layer_grad(g, &mut out);
        }
        out
    }

    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrad {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGrad {
                    dw: DMatrix::zeros(l.w.nrows(), l.w.ncols()),
                    db: DVector::zeros(l.b.len()),
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrad, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            a.dw += &b.dw * scale;
            a.db += &b.db * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let mlp = Mlp {
            layers: vec![Layer::zeros(3, 4, Activation::Tanh), Layer::zeros(4, 2, Activation::Linear)],
        };
        let (out, _) = mlp.forward(&DVector::from_column_slice(&[1.0, -2.0, 3.0]));
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn softplus_head_bias_sets_std() {
        let mut layer = Layer::zeros(4, 2, Activation::Softplus);
        layer.b.fill(0.7);
        let (out, _) = layer.forward(&DVector::zeros(4));
        let expected = mathx::ln(1.0 + mathx::exp(0.7));
        assert!((out[0] - expected).abs() < 1e-12);
        assert!((out[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn identity_like_net_propagates_tanh() {
        let mut layer = Layer::zeros(1, 1, Activation::Tanh);
        layer.w[(0, 0)] = 1.0;
        let (out, _) = layer.forward(&DVector::from_column_slice(&[0.5]));
        assert!((out[0] - 0.46211715726000974).abs() < 1e-12);
    }

    #[test]
    fn linear_chain_rule_base_case() {
        // One linear layer, loss = output: dL/dw = input, dL/db = 1.
        let mut layer = Layer::zeros(3, 1, Activation::Linear);
        layer.w[(0, 0)] = 0.3;
        layer.w[(0, 1)] = -0.2;
        layer.w[(0, 2)] = 0.9;
        let x = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let (_, pre) = layer.forward(&x);
        let (grad, _) = layer.backward(&x, &pre, &DVector::from_column_slice(&[1.0]));
        assert_eq!(grad.dw[(0, 0)], 1.0);
        assert_eq!(grad.dw[(0, 1)], 2.0);
        assert_eq!(grad.dw[(0, 2)], 3.0);
        assert_eq!(grad.db[0], 1.0);
    }

    #[test]
    fn zero_output_gradient_gives_zero_param_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let actor = Actor::new(5, 3, 0.5, &mut rng);
        let obs = DVector::from_fn(5, |_, _| standard_normal(&mut rng));
        let (_, cache) = actor.forward(&obs);
        let g = actor.backward(&cache, &DVector::zeros(3), &DVector::zeros(3));
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    /// Central finite-difference gradient check over random small actors and
    /// critics, including the softplus std head. Relative error < 1e-4.
    #[test]
    fn gradient_check_actor_and_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let eps = 1e-5;
        for trial in 0..20 {
            let obs_dim = 2 + (trial % 4);
            let act_dim = 1 + (trial % 3);
            let mut actor = Actor::new(obs_dim, act_dim, 0.6, &mut rng);
            // Shrink the trunk so finite differences stay well conditioned.
            actor.trunk.layers[0].w = actor.trunk.layers[0].w.rows(0, 8).into_owned();
            actor.trunk.layers[0].b = actor.trunk.layers[0].b.rows(0, 8).into_owned();
            actor.mean_head.w = actor.mean_head.w.columns(0, 8).into_owned();
            actor.std_head.w = actor.std_head.w.columns(0, 8).into_owned();
            // Re-randomize the shrunk heads with unit gain for nonzero grads.
            actor.mean_head = Layer::new_scaled(8, act_dim, 1.0, Activation::Linear, &mut rng);
            actor.std_head = Layer::new_scaled(8, act_dim, 1.0, Activation::Softplus, &mut rng);

            let obs = DVector::from_fn(obs_dim, |_, _| standard_normal(&mut rng));
            // Random linear functional of (mean, std) as the loss.
            let gm = DVector::from_fn(act_dim, |_, _| standard_normal(&mut rng));
            let gs = DVector::from_fn(act_dim, |_, _| standard_normal(&mut rng));

            let loss = |a: &Actor| -> f64 {
                let (out, _) = a.forward(&obs);
                out.mean.dot(&gm) + out.std.dot(&gs)
            };

            let (_, cache) = actor.forward(&obs);
            let analytic = actor.backward(&cache, &gm, &gs).flatten();
            let params = actor.flatten();
            let mut worst: f64 = 0.0;
            for i in 0..params.len() {
                let mut pp = params.clone();
                pp[i] += eps;
                let mut ap = actor.clone();
                ap.unflatten(&pp);
                let lp = loss(&ap);
                pp[i] -= 2.0 * eps;
                ap.unflatten(&pp);
                let lm = loss(&ap);
                let fd = (lp - lm) / (2.0 * eps);
                let denom = fd.abs().max(analytic[i].abs()).max(1e-3);
                worst = worst.max((fd - analytic[i]).abs() / denom);
            }
            assert!(worst < 1e-4, "actor trial {trial}: worst relative error {worst}");

            // Critic gradient check on a small net.
            let critic = Critic {
                net: Mlp {
                    layers: vec![
                        Layer::new_scaled(obs_dim, 6, 1.0, Activation::Tanh, &mut rng),
                        Layer::new_scaled(6, 1, 1.0, Activation::Linear, &mut rng),
                    ],
                },
            };
            let (_, cache) = critic.net.forward(&obs);
            let (grad, _) = critic.net.backward(&cache, &DVector::from_column_slice(&[1.0]));
            let analytic = grad.flatten();
            let params = critic.flatten();
            let mut worst: f64 = 0.0;
            for i in 0..params.len() {
                let mut pp = params.clone();
                pp[i] += eps;
                let mut cp = critic.clone();
                cp.unflatten(&pp);
                let lp = cp.value(&obs).0;
                pp[i] -= 2.0 * eps;
                cp.unflatten(&pp);
                let lm = cp.value(&obs).0;
                let fd = (lp - lm) / (2.0 * eps);
                let denom = fd.abs().max(analytic[i].abs()).max(1e-3);
                worst = worst.max((fd - analytic[i]).abs() / denom);
            }
            assert!(worst < 1e-4, "critic trial {trial}: worst relative error {worst}");
        }
    }

    #[test]
    fn log_prob_analytic_values() {
        let out = GaussianPolicyOutput {
            mean: DVector::from_column_slice(&[0.3]),
            std: DVector::from_column_slice(&[1.0]),
        };
        let lp = policy_log_prob(&out, &DVector::from_column_slice(&[0.3]));
        assert!((lp - (-0.5 * mathx::LN_2PI)).abs() < 1e-12);
        assert!((lp - (-0.9189385332046727)).abs() < 1e-12);

        // Doubling sigma at the mean lowers log_prob by ln 2 per dimension.
        let out2 = GaussianPolicyOutput {
            mean: out.mean.clone(),
            std: DVector::from_column_slice(&[2.0]),
        };
        let lp2 = policy_log_prob(&out2, &DVector::from_column_slice(&[0.3]));
        assert!((lp - lp2 - mathx::ln(2.0)).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let out = GaussianPolicyOutput {
            mean: DVector::from_column_slice(&[0.1, -0.2, 0.5]),
            std: DVector::from_column_slice(&[0.5, 1.0, 2.0]),
        };
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let (a1, lp1) = policy_sample(&out, &mut r1);
        let (a2, lp2) = policy_sample(&out, &mut r2);
        assert_eq!(a1, a2);
        assert_eq!(lp1, lp2);
    }

    #[test]
    fn entropy_analytic_values() {
        let e1 = policy_entropy(&DVector::from_column_slice(&[1.0]));
        assert!((e1 - 1.4189385332046727).abs() < 1e-12);
        let e10 = policy_entropy(&DVector::from_element(10, 1.0));
        assert!((e10 - 14.189385332046727).abs() < 1e-10);
        let doubled = policy_entropy(&DVector::from_element(10, 2.0));
        assert!((doubled - e10 - 10.0 * mathx::ln(2.0)).abs() < 1e-10);
    }

    /// Monte-Carlo check that exp(log_prob) is a proper density: the inverse
    /// density importance estimate of the integral of 1 over a wide box.
    #[test]
    fn log_prob_is_normalized_density() {
        let out = GaussianPolicyOutput {
            mean: DVector::from_column_slice(&[0.2]),
            std: DVector::from_column_slice(&[0.7]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        // E[ phi(a) / p(a) ] over samples a ~ p equals integral of phi; with a
        // Gaussian reference phi this must come out to 1.
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let (a, lp) = policy_sample(&out, &mut rng);
            let z = a[0]; // reference: standard normal density
            let phi = mathx::exp(-0.5 * z * z) / mathx::sqrt(mathx::TAU);
            let w = phi / mathx::exp(lp);
            sum += w;
            sumsq += w * w;
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean) / n as f64;
        let sigma = mathx::sqrt(var);
        assert!(
            (mean - 1.0).abs() < 3.0 * sigma + 1e-4,
            "MC estimate {mean} +- {sigma}"
        );
    }

    #[test]
    fn adam_zero_lr_leaves_params_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let actor = Actor::new(4, 2, 0.5, &mut rng);
        let mut params = actor.flatten();
        let before = params.clone();
        let grads: Vec<f64> = params.iter().map(|_| 1.0).collect();
        let mut opt = Adam::new(0.0, params.len());
        opt.step(&mut params, &grads);
        assert_eq!(params, before);
    }

    #[test]
    fn flatten_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let actor = Actor::new(7, 3, 0.4, &mut rng);
        let mut copy = actor.clone();
        copy.unflatten(&actor.flatten());
        assert_eq!(actor, copy);
    }
}
