//! Finite-difference verification of the hand-written backward passes.
//! Always 64-bit and serial.

use rand::Rng;

use super::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool_backward, maxpool_forward,
    relu_backward, relu_forward,
};
use super::loss::l2_loss;
use super::network::{Network, NetworkSpec};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng::{derive_seed, stream, Stream};

pub const STEP: f64 = 1e-5;
pub const LAYER_TOLERANCE: f64 = 1e-6;
pub const DIRECTIONAL_TOLERANCE: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-3;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub trials: usize,
    pub compared: usize,
    /// Entries skipped because the perturbation crossed a ReLU kink or
    /// changed a pooling winner.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(name: &str, tolerance: f64) -> Self {
        CheckResult {
            name: name.into(),
            trials: 0,
            compared: 0,
            skipped: 0,
            max_rel_error: 0.0,
            tolerance,
        }
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        self.compared += 1;
        let e = rel_error(analytic, numeric);
        if e > self.max_rel_error || e.is_nan() {
            self.max_rel_error = e;
        }
    }

    pub fn passes(&self) -> bool {
        self.compared > 0 && self.max_rel_error <= self.tolerance
    }
}

fn random_tensor(rng: &mut Stream, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Loss plus the kink pattern that identifies its linear piece.
type LossFn<'a> = dyn Fn(&[Tensor<f64>]) -> (f64, Vec<u32>) + 'a;

/// Central difference of `f` with respect to every entry of `t[which]`,
/// compared against `analytic`. `stable` decides whether the perturbed
/// point is in the same linear piece.
fn compare_entries(
    res: &mut CheckResult,
    inputs: &mut [Tensor<f64>],
    which: usize,
    analytic: &Tensor<f64>,
    f: &LossFn<'_>,
) {
    let (_, base) = f(inputs);
    for i in 0..inputs[which].len() {
        let orig = inputs[which].data[i];
        inputs[which].data[i] = orig + STEP;
        let (lp, pp) = f(inputs);
        inputs[which].data[i] = orig - STEP;
        let (lm, pm) = f(inputs);
        inputs[which].data[i] = orig;
        if pp != base || pm != base {
            res.skipped += 1;
            continue;
        }
        res.record(analytic.data[i], (lp - lm) / (2.0 * STEP));
    }
}

fn check_conv(trials: usize, seed: u64) -> Result<CheckResult> {
    let mut res = CheckResult::new("conv", LAYER_TOLERANCE);
    for t in 0..trials {
        let mut rng = stream(derive_seed(seed, t as u64));
        let (n, c, k) = (rng.random_range(1..=2), rng.random_range(1..=3), rng.random_range(1..=3));
        let (h, w) = (rng.random_range(2..=5), rng.random_range(2..=5));
        let mut ins = vec![
            random_tensor(&mut rng, &[n, c, h, w]),
            random_tensor(&mut rng, &[k, c, 3, 3]),
            random_tensor(&mut rng, &[k]),
        ];
        let r = random_tensor(&mut rng, &[n, k, h, w]);
        let mut dw = Tensor::zeros(&[k, c, 3, 3]);
        let mut db = Tensor::zeros(&[k]);
        let dx = conv2d_backward(&ins[0], &ins[1], &r, &mut dw, &mut db, true)?.expect("dx");
        let f = |t: &[Tensor<f64>]| (dot(&conv2d_forward(&t[0], &t[1], &t[2]).unwrap(), &r), Vec::new());
        compare_entries(&mut res, &mut ins, 0, &dx, &f);
        compare_entries(&mut res, &mut ins, 1, &dw, &f);
        compare_entries(&mut res, &mut ins, 2, &db, &f);
        res.trials += 1;
    }
    Ok(res)
}

fn check_dense(trials: usize, seed: u64) -> Result<CheckResult> {
    let mut res = CheckResult::new("dense", LAYER_TOLERANCE);
    for t in 0..trials {
        let mut rng = stream(derive_seed(seed, t as u64));
        let (n, i, o) = (rng.random_range(1..=3), rng.random_range(1..=6), rng.random_range(1..=4));
        let mut ins = vec![
            random_tensor(&mut rng, &[n, i]),
            random_tensor(&mut rng, &[o, i]),
            random_tensor(&mut rng, &[o]),
        ];
        let r = random_tensor(&mut rng, &[n, o]);
        let mut dw = Tensor::zeros(&[o, i]);
        let mut db = Tensor::zeros(&[o]);
        let dx = dense_backward(&ins[0], &ins[1], &r, &mut dw, &mut db, true)?.expect("dx");
        let f = |t: &[Tensor<f64>]| (dot(&dense_forward(&t[0], &t[1], &t[2]).unwrap(), &r), Vec::new());
        compare_entries(&mut res, &mut ins, 0, &dx, &f);
        compare_entries(&mut res, &mut ins, 1, &dw, &f);
        compare_entries(&mut res, &mut ins, 2, &db, &f);
        res.trials += 1;
    }
    Ok(res)
}

fn check_relu(trials: usize, seed: u64) -> Result<CheckResult> {
    let mut res = CheckResult::new("relu", LAYER_TOLERANCE);
    for t in 0..trials {
        let mut rng = stream(derive_seed(seed, t as u64));
        let shape = [rng.random_range(1..=3), rng.random_range(1..=4), 2, rng.random_range(1..=4)];
        let mut ins = vec![random_tensor(&mut rng, &shape)];
        let r = random_tensor(&mut rng, &shape);
        let dx = relu_backward(&ins[0], &r)?;
        let f = |t: &[Tensor<f64>]| {
            let mask = t[0].data.iter().map(|&v| (v > 0.0) as u32).collect();
            (dot(&relu_forward(&t[0]), &r), mask)
        };
        compare_entries(&mut res, &mut ins, 0, &dx, &f);
        res.trials += 1;
    }
    Ok(res)
}

fn check_maxpool(trials: usize, seed: u64) -> Result<CheckResult> {
    let mut res = CheckResult::new("maxpool", LAYER_TOLERANCE);
    for t in 0..trials {
        let mut rng = stream(derive_seed(seed, t as u64));
        let shape = [
            rng.random_range(1..=2),
            rng.random_range(1..=3),
            2 * rng.random_range(1..=3),
            2 * rng.random_range(1..=3),
        ];
        let mut ins = vec![random_tensor(&mut rng, &shape)];
        let (y, arg) = maxpool_forward(&ins[0])?;
        let r = random_tensor(&mut rng, &y.shape);
        let dx = maxpool_backward(&r, &arg, &shape)?;
        let f = |t: &[Tensor<f64>]| {
            let (y, arg) = maxpool_forward(&t[0]).unwrap();
            (dot(&y, &r), arg)
        };
        compare_entries(&mut res, &mut ins, 0, &dx, &f);
        res.trials += 1;
    }
    Ok(res)
}

/// Every layer type, `trials` randomized shapes each.
pub fn check_layers(trials: usize, seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_conv(trials, derive_seed(seed, 0))?,
        check_dense(trials, derive_seed(seed, 1))?,
        check_relu(trials, derive_seed(seed, 2))?,
        check_maxpool(trials, derive_seed(seed, 3))?,
    ])
}

fn network_loss(net: &Network<f64>, x: &Tensor<f64>, y: &Tensor<f64>) -> (f64, Vec<u32>) {
    let (pred, cache) = net.forward_cached(x).expect("forward");
    let (loss, _) = l2_loss(&pred, y).expect("loss");
    (loss, net.kink_pattern(&cache))
}

/// Network, input, target and analytic gradients.
type NetworkSetup = (Network<f64>, Tensor<f64>, Tensor<f64>, Vec<Tensor<f64>>);

fn network_setup(spec: NetworkSpec, batch: usize, seed: u64) -> Result<NetworkSetup> {
    let net = Network::<f64>::init(spec, derive_seed(seed, 0))?;
    let mut rng = stream(derive_seed(seed, 1));
    let [c, h, w] = net.spec.input;
    let x = random_tensor(&mut rng, &[batch, c, h, w]);
    let y = random_tensor(&mut rng, &[batch, 3]);
    let (pred, cache) = net.forward_cached(&x)?;
    let (_, dy) = l2_loss(&pred, &y)?;
    let mut grads = net.zero_grads();
    net.backward(&cache, &dy, &mut grads)?;
    Ok((net, x, y, grads))
}

/// Per-parameter comparison of the full backward pass against central
/// differences of the L2 loss.
pub fn check_network(spec: NetworkSpec, seed: u64) -> Result<CheckResult> {
    let (mut net, x, y, grads) = network_setup(spec, 2, seed)?;
    let mut res = CheckResult::new("network", LAYER_TOLERANCE);
    res.trials = 1;
    let (_, base) = network_loss(&net, &x, &y);
    for (p, grad) in grads.iter().enumerate() {
        for i in 0..net.params[p].len() {
            let orig = net.params[p].data[i];
            net.params[p].data[i] = orig + STEP;
            let (lp, pp) = network_loss(&net, &x, &y);
            net.params[p].data[i] = orig - STEP;
            let (lm, pm) = network_loss(&net, &x, &y);
            net.params[p].data[i] = orig;
            if pp != base || pm != base {
                res.skipped += 1;
                continue;
            }
            res.record(grad.data[i], (lp - lm) / (2.0 * STEP));
        }
    }
    Ok(res)
}

/// Directional derivative along a random unit direction in parameter space.
pub fn check_directional(spec: NetworkSpec, trials: usize, seed: u64) -> Result<CheckResult> {
    let mut res = CheckResult::new("directional", DIRECTIONAL_TOLERANCE);
    for t in 0..trials {
        let (mut net, x, y, grads) = network_setup(spec.clone(), 2, derive_seed(seed, t as u64))?;
        let mut rng = stream(derive_seed(seed, 1 << 40 | t as u64));
        let dir: Vec<Tensor<f64>> = net.params.iter().map(|p| random_tensor(&mut rng, &p.shape)).collect();
        let norm = dir.iter().map(|d| dot(d, d)).sum::<f64>().sqrt();
        let analytic = grads.iter().zip(&dir).map(|(g, d)| dot(g, d)).sum::<f64>() / norm;
        let shift = |net: &mut Network<f64>, s: f64| {
            for (p, d) in net.params.iter_mut().zip(&dir) {
                for (pv, dv) in p.data.iter_mut().zip(&d.data) {
                    *pv += s * dv / norm;
                }
            }
        };
        let orig = net.params.clone();
        let (_, base) = network_loss(&net, &x, &y);
        shift(&mut net, STEP);
        let (lp, pp) = network_loss(&net, &x, &y);
        net.params = orig.clone();
        shift(&mut net, -STEP);
        let (lm, pm) = network_loss(&net, &x, &y);
        res.trials += 1;
        if pp != base || pm != base {
            res.skipped += 1;
            continue;
        }
        res.record(analytic, (lp - lm) / (2.0 * STEP));
    }
    Ok(res)
}

/// The full suite run by the `gradcheck` command.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = check_layers(100, seed)?;
    out.push(check_network(NetworkSpec::tiny(), derive_seed(seed, 10))?);
    out.push(check_directional(NetworkSpec::tiny(), 20, derive_seed(seed, 11))?);
    Ok(out)
}
