//! Mini-batch Adam training with a fixed epoch budget, best-validation
//! checkpointing and the center-collapse diagnostic.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::network::{Network, NetworkSpec};
use super::tensor::Tensor;
use super::weights::Weights;
use super::LabelFrame;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::par;
use crate::rng::{derive_seed, stream};

/// Predictions whose variance falls below this fraction of the label
/// variance are reported as collapsed onto the table center.
pub const COLLAPSE_RATIO: f64 = 0.01;

const SHUFFLE_STREAM: u64 = 0x5348_0000_0000_0000;
const INIT_STREAM: u64 = 0x494E_4954;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Items per gradient micro-chunk. Chunk gradients are summed in chunk
    /// order, which keeps serial and parallel runs bit-identical.
    pub chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        TrainConfig {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            batch: 50,
            epochs: 10,
            seed: 0,
            chunk: 25,
        }
    }
}

impl TrainConfig {
    pub const LR_GRID: [f64; 2] = [1e-4, 2e-4];
    pub const BATCH_GRID: [usize; 3] = [25, 50, 100];

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.batch > 0
            && self.chunk > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config {self:?}")))
        }
    }

    /// Whether lr and batch come from the standard search grid.
    pub fn on_grid(&self) -> bool {
        Self::LR_GRID.contains(&self.lr) && Self::BATCH_GRID.contains(&self.batch)
    }
}

/// Images with world-frame labels (meters).
#[derive(Clone, Copy)]
pub struct Split<'a> {
    pub images: &'a [Image],
    pub labels: &'a [[f64; 3]],
}

impl<'a> Split<'a> {
    pub fn new(images: &'a [Image], labels: &'a [[f64; 3]]) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Split { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// One row of the loss curve. Epoch 0 evaluates the untrained network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Variance of normalized validation predictions, summed over x and y.
    pub pred_variance: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Parameters from the epoch with the lowest validation loss.
    pub weights: Weights,
    pub curve: Vec<EpochStats>,
    pub best_epoch: usize,
    /// Variance of normalized validation labels, summed over x and y.
    pub label_variance: f64,
}

impl TrainReport {
    pub fn best(&self) -> &EpochStats {
        &self.curve[self.best_epoch]
    }

    /// Ratio of prediction to label variance for the retained model.
    pub fn variance_ratio(&self) -> f64 {
        self.best().pred_variance / self.label_variance.max(f64::MIN_POSITIVE)
    }

    pub fn collapsed(&self) -> bool {
        self.variance_ratio() < COLLAPSE_RATIO
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,pred_variance\n");
        for e in &self.curve {
            s.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.pred_variance));
        }
        s
    }

    pub fn write_curve(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.curve_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Interleaved 8-bit RGB to planar `[C, H, W]` values in [−0.5, 0.5].
pub fn image_to_planar(img: &Image, out: &mut [f32]) {
    let hw = img.width * img.height;
    for (p, px) in img.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * hw + p] = px[c] as f32 / 255.0 - 0.5;
        }
    }
}

fn batch_tensor(images: &[&Image]) -> Result<Tensor<f32>> {
    let (w, h) = (images[0].width, images[0].height);
    let item = 3 * w * h;
    let mut t = Tensor::zeros(&[images.len(), 3, h, w]);
    for (img, out) in images.iter().zip(t.data.chunks_exact_mut(item)) {
        if img.width != w || img.height != h {
            return Err(Error::Shape(format!(
                "mixed image sizes in one batch: {}x{} and {w}x{h}",
                img.width, img.height
            )));
        }
        image_to_planar(img, out);
    }
    Ok(t)
}

fn check_resolution(net: &NetworkSpec, img: &Image) -> Result<()> {
    if net.input[1] != img.height || net.input[2] != img.width {
        return Err(Error::Shape(format!(
            "network expects {}x{} images, got {}x{}",
            net.input[2], net.input[1], img.width, img.height
        )));
    }
    Ok(())
}

/// Normalized predictions for many images, evaluated in chunks of `chunk`.
fn predict_normalized(net: &Network<f32>, images: &[Image], chunk: usize, workers: usize) -> Result<Vec<[f64; 3]>> {
    if let Some(img) = images.first() {
        check_resolution(&net.spec, img)?;
    }
    let n_chunks = images.len().div_ceil(chunk);
    let parts = par::try_map(n_chunks, workers, |c| -> Result<Vec<[f64; 3]>> {
        let refs: Vec<&Image> = images[c * chunk..((c + 1) * chunk).min(images.len())].iter().collect();
        let out = net.forward(&batch_tensor(&refs)?)?;
        Ok(out
            .data
            .chunks_exact(3)
            .map(|r| [r[0] as f64, r[1] as f64, r[2] as f64])
            .collect())
    })?;
    Ok(parts.into_iter().flatten().collect())
}

/// World-frame predictions (meters) for a set of images.
pub fn predict_many(weights: &Weights, images: &[Image], workers: usize) -> Result<Vec<[f64; 3]>> {
    Ok(predict_normalized(&weights.net, images, 25, workers)?
        .into_iter()
        .map(|q| weights.frame.denormalize(q))
        .collect())
}

pub fn predict(weights: &Weights, image: &Image) -> Result<[f64; 3]> {
    Ok(predict_many(weights, std::slice::from_ref(image), 1)?[0])
}

fn mean_sq(preds: &[[f64; 3]], targets: &[[f64; 3]]) -> f64 {
    let s: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (0..3).map(|i| (p[i] - t[i]).powi(2)).sum::<f64>())
        .sum();
    s / preds.len().max(1) as f64
}

/// Summed variance of the x and y components.
pub fn planar_variance(points: &[[f64; 3]]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    (0..2)
        .map(|i| {
            let m = points.iter().map(|p| p[i]).sum::<f64>() / n;
            points.iter().map(|p| (p[i] - m).powi(2)).sum::<f64>() / n
        })
        .sum()
}

struct Evaluator<'a> {
    split: Split<'a>,
    targets: Vec<[f64; 3]>,
}

impl<'a> Evaluator<'a> {
    fn new(split: Split<'a>, frame: &LabelFrame) -> Self {
        Evaluator {
            split,
            targets: split.labels.iter().map(|&l| frame.normalize(l)).collect(),
        }
    }

    fn run(&self, net: &Network<f32>, chunk: usize, workers: usize) -> Result<(f64, f64)> {
        let preds = predict_normalized(net, self.split.images, chunk, workers)?;
        Ok((mean_sq(&preds, &self.targets), planar_variance(&preds)))
    }
}

/// Gradient of one micro-chunk: summed squared error and parameter grads
/// for the batch-mean loss (`dy = 2(p − l)/batch`).
fn chunk_gradient(net: &Network<f32>, images: &[&Image], targets: &[[f64; 3]], batch: usize) -> Result<(f64, Vec<Tensor<f32>>)> {
    let x = batch_tensor(images)?;
    let (pred, cache) = net.forward_cached(&x)?;
    let scale = 2.0 / batch as f64;
    let mut dy = Tensor::zeros(&pred.shape);
    let mut sq = 0.0;
    for ((g, &p), t) in dy.data.iter_mut().zip(&pred.data).zip(targets.iter().flatten()) {
        let d = p as f64 - t;
        sq += d * d;
        *g = (scale * d) as f32;
    }
    let mut grads = net.zero_grads();
    net.backward(&cache, &dy, &mut grads)?;
    Ok((sq, grads))
}

/// Train from a fresh He-initialized network. `workers` > 1 spreads the
/// micro-chunks of each batch over threads without changing any result.
pub fn train(
    train_set: Split,
    val_set: Split,
    spec: NetworkSpec,
    frame: LabelFrame,
    cfg: &TrainConfig,
    workers: usize,
) -> Result<TrainReport> {
    train_with_progress(train_set, val_set, spec, frame, cfg, workers, &mut |_| {})
}

/// [`train`] with a callback after every epoch (including epoch 0).
#[allow(clippy::too_many_arguments)]
pub fn train_with_progress(
    train_set: Split,
    val_set: Split,
    spec: NetworkSpec,
    frame: LabelFrame,
    cfg: &TrainConfig,
    workers: usize,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Data("training needs non-empty train and validation sets".into()));
    }
    check_resolution(&spec, &train_set.images[0])?;
    let mut net = Network::<f32>::init(spec, derive_seed(cfg.seed, INIT_STREAM))?;
    let mut adam = AdamState::new(cfg.adam(), &net.params);
    let train_eval = Evaluator::new(train_set, &frame);
    let val_eval = Evaluator::new(val_set, &frame);
    let val_targets = &val_eval.targets;
    let label_variance = planar_variance(val_targets);

    let (train_loss, _) = train_eval.run(&net, cfg.chunk, workers)?;
    let (val_loss, pred_variance) = val_eval.run(&net, cfg.chunk, workers)?;
    let mut curve = vec![EpochStats {
        epoch: 0,
        train_loss,
        val_loss,
        pred_variance,
    }];
    on_epoch(&curve[0]);
    let mut best = (0, val_loss, net.params.clone());

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = stream(derive_seed(cfg.seed ^ SHUFFLE_STREAM, epoch as u64));
        order.shuffle(&mut rng);
        let mut sq_total = 0.0;
        for (b, idx) in order.chunks(cfg.batch).enumerate() {
            let at = |e: Error| match e {
                Error::Divergence(msg) => Error::Divergence(format!("epoch {epoch}, batch {b}: {msg}")),
                other => other,
            };
            let n_chunks = idx.len().div_ceil(cfg.chunk);
            let parts = par::try_map(n_chunks, workers, |c| {
                let ids = &idx[c * cfg.chunk..((c + 1) * cfg.chunk).min(idx.len())];
                let imgs: Vec<&Image> = ids.iter().map(|&i| &train_set.images[i]).collect();
                let tg: Vec<[f64; 3]> = ids.iter().map(|&i| train_eval.targets[i]).collect();
                chunk_gradient(&net, &imgs, &tg, idx.len())
            })
            .map_err(at)?;
            let mut parts = parts.into_iter();
            let (mut sq, mut grads) = parts.next().expect("at least one chunk");
            for (s, g) in parts {
                sq += s;
                for (a, b) in grads.iter_mut().zip(&g) {
                    a.add_assign(b);
                }
            }
            if !sq.is_finite() {
                return Err(Error::Divergence(format!("epoch {epoch}, batch {b}: non-finite loss")));
            }
            sq_total += sq;
            adam.step(&mut net.params, &grads).map_err(at)?;
        }
        let (val_loss, pred_variance) = val_eval.run(&net, cfg.chunk, workers)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence(format!("epoch {epoch}: non-finite validation loss")));
        }
        curve.push(EpochStats {
            epoch,
            train_loss: sq_total / train_set.len() as f64,
            val_loss,
            pred_variance,
        });
        on_epoch(curve.last().expect("just pushed"));
        if val_loss < best.1 {
            best = (epoch, val_loss, net.params.clone());
        }
    }
    let best_net = Network::from_params(net.spec.clone(), best.2)?;
    Ok(TrainReport {
        weights: Weights { net: best_net, frame },
        curve,
        best_epoch: best.0,
        label_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> (Vec<Image>, Vec<[f64; 3]>) {
        // a bright square whose position encodes the label
        let mut rng = stream(seed);
        let mut imgs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            use rand::Rng;
            let (px, py) = (rng.random_range(0..6usize), rng.random_range(0..6usize));
            let mut img = Image::filled(8, 8, [30, 30, 30]);
            for y in py..py + 2 {
                for x in px..px + 2 {
                    img.set(x, y, [250, 200, 100]);
                }
            }
            imgs.push(img);
            labels.push([px as f64 / 5.0 - 0.5, py as f64 / 5.0 - 0.5, 0.0]);
        }
        (imgs, labels)
    }

    const FRAME: LabelFrame = LabelFrame {
        center: [0.0; 3],
        half_extent: [1.0; 3],
    };

    #[test]
    fn serial_runs_are_bit_identical() {
        let (imgs, labels) = toy(40, 1);
        let split = Split::new(&imgs, &labels).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch: 10,
            chunk: 4,
            lr: 1e-3,
            ..TrainConfig::default()
        };
        let a = train(split, split, NetworkSpec::tiny(), FRAME, &cfg, 1).unwrap();
        let b = train(split, split, NetworkSpec::tiny(), FRAME, &cfg, 1).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.curve, b.curve);
        let c = train(split, split, NetworkSpec::tiny(), FRAME, &cfg, 3).unwrap();
        assert_eq!(a.weights, c.weights);
    }

    #[test]
    fn curve_csv_header() {
        let (imgs, labels) = toy(10, 2);
        let split = Split::new(&imgs, &labels).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch: 5,
            ..TrainConfig::default()
        };
        let r = train(split, split, NetworkSpec::tiny(), FRAME, &cfg, 1).unwrap();
        let csv = r.curve_csv();
        assert!(csv.starts_with("epoch,train_loss,val_loss,pred_variance\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn resolution_mismatch_is_rejected() {
        let w = Weights {
            net: Network::init(NetworkSpec::tiny(), 0).unwrap(),
            frame: FRAME,
        };
        assert!(predict(&w, &Image::new(16, 16)).is_err());
        assert!(predict(&w, &Image::new(8, 8)).is_ok());
    }
}
