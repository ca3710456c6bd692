//! Network description, parameter storage and the cached forward/backward pass.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool_backward, maxpool_forward,
    relu_backward, relu_forward,
};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSpec {
    /// 3×3 kernel, stride 1, zero padding 1.
    Conv { out_channels: usize },
    Relu,
    /// 2×2 window, stride 2.
    MaxPool,
    Flatten,
    Dense { out_features: usize },
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Input item shape `[C, H, W]`.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

/// Conv-ReLU-Conv-ReLU-Pool blocks, then the regression tail.
fn vgg_like(res: usize, blocks: &[(usize, usize)]) -> NetworkSpec {
    let mut layers = Vec::new();
    for &(channels, convs) in blocks {
        for _ in 0..convs {
            layers.push(LayerSpec::Conv { out_channels: channels });
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::MaxPool);
    }
    layers.extend([
        LayerSpec::Flatten,
        LayerSpec::Dense { out_features: 256 },
        LayerSpec::Relu,
        LayerSpec::Dense { out_features: 64 },
        LayerSpec::Relu,
        LayerSpec::Dense { out_features: 3 },
    ]);
    NetworkSpec {
        input: [3, res, res],
        layers,
    }
}

impl NetworkSpec {
    /// Default regressor: four double-conv blocks of 16, 32, 64, 128 channels.
    pub fn desk(res: usize) -> Self {
        vgg_like(res, &[(16, 2), (32, 2), (64, 2), (128, 2)])
    }

    /// The VGG-16 convolutional body (13 conv layers, 5 pools) with the same tail.
    pub fn vgg16(res: usize) -> Self {
        vgg_like(res, &[(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)])
    }

    /// Two convs, one pool, two dense layers on an 8×8 input; used for gradient checks.
    pub fn tiny() -> Self {
        NetworkSpec {
            input: [3, 8, 8],
            layers: vec![
                LayerSpec::Conv { out_channels: 4 },
                LayerSpec::Relu,
                LayerSpec::Conv { out_channels: 4 },
                LayerSpec::Relu,
                LayerSpec::MaxPool,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 8 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_features: 3 },
            ],
        }
    }

    /// Item shape after every layer; errors on the first inconsistency.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut cur = self.input.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match (*layer, cur.as_slice()) {
                (LayerSpec::Conv { out_channels }, &[_, h, w]) if out_channels > 0 => vec![out_channels, h, w],
                (LayerSpec::MaxPool, &[c, h, w]) if h % 2 == 0 && w % 2 == 0 && h > 0 && w > 0 => {
                    vec![c, h / 2, w / 2]
                }
                (LayerSpec::Relu, s) => s.to_vec(),
                (LayerSpec::Flatten, s) => vec![s.iter().product()],
                (LayerSpec::Dense { out_features }, &[_]) if out_features > 0 => vec![out_features],
                (l, s) => {
                    return Err(Error::Shape(format!("layer {i} ({}) cannot take input {s:?}", l.name())));
                }
            };
            out.push(cur.clone());
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.shapes()?;
        if self.input[0] != 3 {
            return Err(Error::Shape(format!("input must have 3 channels, got {:?}", self.input)));
        }
        match (self.layers.last(), shapes.last()) {
            (Some(LayerSpec::Dense { out_features: 3 }), Some(s)) if s == &[3] => Ok(()),
            _ => Err(Error::Shape("network must end in Dense with 3 outputs".into())),
        }
    }

    /// `(weight shape, bias shape)` for every parameterized layer, in order.
    pub fn param_shapes(&self) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        let shapes = self.shapes()?;
        let mut prev = self.input.to_vec();
        let mut out = Vec::new();
        for (layer, s) in self.layers.iter().zip(&shapes) {
            match *layer {
                LayerSpec::Conv { out_channels } => {
                    out.push((vec![out_channels, prev[0], 3, 3], vec![out_channels]));
                }
                LayerSpec::Dense { out_features } => {
                    out.push((vec![out_features, prev[0]], vec![out_features]));
                }
                _ => {}
            }
            prev = s.clone();
        }
        Ok(out)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_shapes()?
            .iter()
            .map(|(w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .sum())
    }
}

/// Per-layer saved state needed by the backward pass.
#[derive(Clone, Debug)]
enum Saved<T> {
    Input(Tensor<T>),
    Pool { argmax: Vec<u32>, input_shape: Vec<usize> },
    Shape(Vec<usize>),
}

/// Activations cached by [`Network::forward_cached`].
#[derive(Clone, Debug)]
pub struct Cache<T> {
    saved: Vec<Saved<T>>,
}

/// A network spec together with its parameters, stored as `[w0, b0, w1, b1, …]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub spec: NetworkSpec,
    pub params: Vec<Tensor<T>>,
}

impl<T: Real> Network<T> {
    /// He-normal weights, zero biases.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = stream(seed);
        let mut params = Vec::new();
        for (ws, bs) in spec.param_shapes()? {
            let fan_in: usize = ws[1..].iter().product();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let n = ws.iter().product();
            let data = (0..n).map(|_| T::from_f64(normal.sample(&mut rng))).collect();
            params.push(Tensor::from_vec(&ws, data)?);
            params.push(Tensor::zeros(&bs));
        }
        Ok(Network { spec, params })
    }

    /// Wrap existing parameters, checking them against the spec.
    pub fn from_params(spec: NetworkSpec, params: Vec<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.param_shapes()?;
        if shapes.len() * 2 != params.len() {
            return Err(Error::Shape(format!(
                "spec has {} parameter tensors, got {}",
                shapes.len() * 2,
                params.len()
            )));
        }
        for ((ws, bs), pair) in shapes.iter().zip(params.chunks_exact(2)) {
            if &pair[0].shape != ws || &pair[1].shape != bs {
                return Err(Error::Shape(format!(
                    "parameter shapes {:?}/{:?} do not match spec {ws:?}/{bs:?}",
                    pair[0].shape, pair[1].shape
                )));
            }
        }
        Ok(Network { spec, params })
    }

    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| Tensor::zeros(&p.shape)).collect()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape.len() != 4 || x.shape[1..] != self.spec.input {
            return Err(Error::Shape(format!(
                "network expects input [N, {}, {}, {}], got {:?}",
                self.spec.input[0], self.spec.input[1], self.spec.input[2], x.shape
            )));
        }
        Ok(())
    }

    fn step(&self, layer: LayerSpec, p: &mut usize, x: Tensor<T>, saved: Option<&mut Vec<Saved<T>>>) -> Result<Tensor<T>> {
        let y = match layer {
            LayerSpec::Conv { .. } => {
                let y = conv2d_forward(&x, &self.params[*p], &self.params[*p + 1])?;
                *p += 2;
                if let Some(s) = saved {
                    s.push(Saved::Input(x));
                }
                y
            }
            LayerSpec::Dense { .. } => {
                let y = dense_forward(&x, &self.params[*p], &self.params[*p + 1])?;
                *p += 2;
                if let Some(s) = saved {
                    s.push(Saved::Input(x));
                }
                y
            }
            LayerSpec::Relu => {
                let y = relu_forward(&x);
                if let Some(s) = saved {
                    s.push(Saved::Input(x));
                }
                y
            }
            LayerSpec::MaxPool => {
                let (y, argmax) = maxpool_forward(&x)?;
                if let Some(s) = saved {
                    s.push(Saved::Pool {
                        argmax,
                        input_shape: x.shape,
                    });
                }
                y
            }
            LayerSpec::Flatten => {
                let n = x.batch();
                let m = x.item_len();
                if let Some(s) = saved {
                    s.push(Saved::Shape(x.shape.clone()));
                }
                Tensor::from_vec(&[n, m], x.data)?
            }
        };
        if !y.all_finite() {
            return Err(Error::Divergence(format!("non-finite activation after {} layer", layer.name())));
        }
        Ok(y)
    }

    /// ReLU masks and pooling winners recorded in a cache. Two inputs with
    /// the same pattern lie in the same linear piece of the network.
    pub fn kink_pattern(&self, cache: &Cache<T>) -> Vec<u32> {
        let mut out = Vec::new();
        for (layer, saved) in self.spec.layers.iter().zip(&cache.saved) {
            match (layer, saved) {
                (LayerSpec::Relu, Saved::Input(x)) => out.extend(x.data.iter().map(|&v| (v > T::zero()) as u32)),
                (LayerSpec::MaxPool, Saved::Pool { argmax, .. }) => out.extend_from_slice(argmax),
                _ => {}
            }
        }
        out
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        let mut p = 0;
        for &layer in &self.spec.layers {
            cur = self.step(layer, &mut p, cur, None)?;
        }
        Ok(cur)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Cache<T>)> {
        self.check_input(x)?;
        let mut cur = x.clone();
        let mut p = 0;
        let mut saved = Vec::with_capacity(self.spec.layers.len());
        for &layer in &self.spec.layers {
            cur = self.step(layer, &mut p, cur, Some(&mut saved))?;
        }
        Ok((cur, Cache { saved }))
    }

    /// Accumulate parameter gradients of the loss into `grads` given the
    /// gradient `dy` with respect to the network output.
    pub fn backward(&self, cache: &Cache<T>, dy: &Tensor<T>, grads: &mut [Tensor<T>]) -> Result<()> {
        if cache.saved.len() != self.spec.layers.len() {
            return Err(Error::Shape(format!(
                "backward needs a cache for {} layers, found {}",
                self.spec.layers.len(),
                cache.saved.len()
            )));
        }
        if grads.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "expected {} gradient tensors, got {}",
                self.params.len(),
                grads.len()
            )));
        }
        let mut g = dy.clone();
        let mut p = self.params.len();
        for (i, (layer, saved)) in self.spec.layers.iter().zip(&cache.saved).enumerate().rev() {
            // the input image needs no gradient
            let need_dx = i > 0;
            let next = match (layer, saved) {
                (LayerSpec::Conv { .. }, Saved::Input(x)) => {
                    p -= 2;
                    let (gw, gb) = grads[p..p + 2].split_at_mut(1);
                    conv2d_backward(x, &self.params[p], &g, &mut gw[0], &mut gb[0], need_dx)?
                }
                (LayerSpec::Dense { .. }, Saved::Input(x)) => {
                    p -= 2;
                    let (gw, gb) = grads[p..p + 2].split_at_mut(1);
                    dense_backward(x, &self.params[p], &g, &mut gw[0], &mut gb[0], need_dx)?
                }
                (LayerSpec::Relu, Saved::Input(x)) => Some(relu_backward(x, &g)?),
                (LayerSpec::MaxPool, Saved::Pool { argmax, input_shape }) => {
                    Some(maxpool_backward(&g, argmax, input_shape)?)
                }
                (LayerSpec::Flatten, Saved::Shape(s)) => Some(Tensor::from_vec(s, g.data)?),
                (l, _) => {
                    return Err(Error::Shape(format!("cache entry {i} does not belong to a {} layer", l.name())));
                }
            };
            match next {
                Some(t) => g = t,
                None => break,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_shapes_and_tail() {
        let spec = NetworkSpec::desk(128);
        spec.validate().unwrap();
        let shapes = spec.shapes().unwrap();
        let flat_at = spec.layers.iter().position(|l| *l == LayerSpec::Flatten).unwrap();
        assert_eq!(shapes[flat_at - 1], vec![128, 8, 8]);
        let tail: Vec<_> = spec.layers[spec.layers.len() - 5..].to_vec();
        assert_eq!(
            tail,
            vec![
                LayerSpec::Dense { out_features: 256 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_features: 64 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_features: 3 },
            ]
        );
        assert_eq!(shapes.last().unwrap(), &vec![3]);
    }

    #[test]
    fn vgg16_has_thirteen_convs() {
        let spec = NetworkSpec::vgg16(64);
        spec.validate().unwrap();
        let convs = spec.layers.iter().filter(|l| matches!(l, LayerSpec::Conv { .. })).count();
        assert_eq!(convs, 13);
    }

    #[test]
    fn inconsistent_chain_is_rejected() {
        let spec = NetworkSpec {
            input: [3, 6, 6],
            layers: vec![LayerSpec::Dense { out_features: 3 }],
        };
        assert!(spec.validate().is_err());
        let spec = NetworkSpec {
            input: [3, 6, 6],
            layers: vec![LayerSpec::MaxPool, LayerSpec::MaxPool, LayerSpec::Flatten, LayerSpec::Dense { out_features: 3 }],
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn forward_shape_and_input_check() {
        let net = Network::<f32>::init(NetworkSpec::tiny(), 1).unwrap();
        let x = Tensor::zeros(&[2, 3, 8, 8]);
        assert_eq!(net.forward(&x).unwrap().shape, vec![2, 3]);
        assert!(net.forward(&Tensor::zeros(&[2, 3, 16, 16])).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let a = Network::<f32>::init(NetworkSpec::tiny(), 5).unwrap();
        let b = Network::<f32>::init(NetworkSpec::tiny(), 5).unwrap();
        let c = Network::<f32>::init(NetworkSpec::tiny(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let net = Network::<f64>::init(NetworkSpec::tiny(), 1).unwrap();
        let cache = Cache { saved: Vec::new() };
        let mut grads = net.zero_grads();
        assert!(net.backward(&cache, &Tensor::zeros(&[1, 3]), &mut grads).is_err());
    }
}
