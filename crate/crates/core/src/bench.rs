//! Evaluation domains, localization metrics, the hyperparameter grid and
//! the ablation sweeps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::dataset::{generate_samples, DomainTag, GenConfig, Sample};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::train::{predict_many, train_with_progress, Split};
use crate::nn::{EpochStats, LabelFrame, NetworkSpec, TrainConfig, Weights};
use crate::rng::derive_seed;
use crate::scene::{LightingMode, RandomizationConfig, TextureDomain};

const HOLDOUT_SALT: u64 = 0x484F_4C44_0000_0000;
const CANONICAL_SALT: u64 = 0x4341_4E4F_0000_0000;
const VALIDATION_SALT: u64 = 0x5641_4C49_0000_0000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    ObjectOnly,
    Distractors,
    Occlusions,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::ObjectOnly, Condition::Distractors, Condition::Occlusions];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::ObjectOnly => "object_only",
            Condition::Distractors => "distractors",
            Condition::Occlusions => "occlusions",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    RandomizedHoldout,
    Canonical,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::RandomizedHoldout => "randomized_holdout",
            Domain::Canonical => "canonical",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvalCondition {
    pub condition: Condition,
    pub domain: Domain,
}

/// Localization error statistics in centimeters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub mean_cm: f64,
    /// Population standard deviation of the per-sample errors.
    pub std_cm: f64,
    /// Mean error of the x/y components alone.
    pub xy_cm: f64,
    /// Mean absolute z residual.
    pub z_cm: f64,
    pub errors_cm: Vec<f64>,
}

impl Metrics {
    pub fn from_predictions(preds: &[[f64; 3]], labels: &[[f64; 3]]) -> Metrics {
        assert_eq!(preds.len(), labels.len(), "one prediction per label");
        let n = preds.len();
        let errors_cm: Vec<f64> = preds
            .iter()
            .zip(labels)
            .map(|(p, l)| 100.0 * ((p[0] - l[0]).powi(2) + (p[1] - l[1]).powi(2) + (p[2] - l[2]).powi(2)).sqrt())
            .collect();
        let denom = n.max(1) as f64;
        let mean_cm = errors_cm.iter().sum::<f64>() / denom;
        let std_cm = (errors_cm.iter().map(|e| (e - mean_cm).powi(2)).sum::<f64>() / denom).sqrt();
        let xy_cm = preds
            .iter()
            .zip(labels)
            .map(|(p, l)| 100.0 * ((p[0] - l[0]).powi(2) + (p[1] - l[1]).powi(2)).sqrt())
            .sum::<f64>()
            / denom;
        let z_cm = preds.iter().zip(labels).map(|(p, l)| 100.0 * (p[2] - l[2]).abs()).sum::<f64>() / denom;
        Metrics {
            n,
            mean_cm,
            std_cm,
            xy_cm,
            z_cm,
            errors_cm,
        }
    }

    /// "mean ± std" as printed in the tables.
    pub fn pretty(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean_cm, self.std_cm)
    }
}

/// Images and labels of a labeled set, ready for prediction.
pub fn split_of(samples: &[Sample]) -> (Vec<Image>, Vec<[f64; 3]>) {
    (
        samples.iter().map(|s| s.image.clone()).collect(),
        samples.iter().map(|s| s.label).collect(),
    )
}

pub fn evaluate(weights: &Weights, samples: &[Sample], workers: usize) -> Result<Metrics> {
    let (images, labels) = split_of(samples);
    let preds = predict_many(weights, &images, workers)?;
    Ok(Metrics::from_predictions(&preds, &labels))
}

/// One evaluation set of a domain.
#[derive(Clone, Debug)]
pub struct EvalSet {
    pub cond: EvalCondition,
    pub config: GenConfig,
    pub samples: Vec<Sample>,
}

fn with_condition(mut r: RandomizationConfig, condition: Condition) -> (RandomizationConfig, bool) {
    match condition {
        Condition::ObjectOnly => {
            r.scene.distractors = false;
            (r, false)
        }
        Condition::Distractors => {
            r.scene.distractors = true;
            r.scene.min_distractors = r.scene.min_distractors.max(1);
            (r, false)
        }
        Condition::Occlusions => (r, true),
    }
}

/// The held-out rendering domain standing in for real camera images:
/// eval-only texture families everywhere, a fixed light plus one random
/// light, the unperturbed base camera and multiplicative sensor noise.
pub fn canonical_config(base: &RandomizationConfig, condition: Condition) -> GenConfig {
    let mut r = base.clone();
    r.scene.textures = TextureDomain::HeldOut;
    r.scene.lighting = LightingMode::FixedPlusRandom;
    r.scene.texture_budget = None;
    r.camera.randomization.enabled = false;
    r.noise.enabled = true;
    r.noise.gaussian_sigma = 0.01;
    r.noise.salt_pepper_prob = 0.0;
    r.noise.speckle_sigma = 0.05;
    let (r, occlusion) = with_condition(r, condition);
    let tag = match condition {
        Condition::ObjectOnly => DomainTag::EvalCanonical,
        Condition::Distractors => DomainTag::EvalDistractor,
        Condition::Occlusions => DomainTag::EvalOcclusion,
    };
    GenConfig {
        randomization: r,
        occlusion,
        tag,
    }
}

/// Training-distribution scenes for one condition.
pub fn holdout_config(base: &RandomizationConfig, condition: Condition) -> GenConfig {
    let mut r = base.clone();
    r.scene.texture_budget = None;
    let (r, occlusion) = with_condition(r, condition);
    GenConfig {
        randomization: r,
        occlusion,
        tag: DomainTag::HoldoutRandomized,
    }
}

fn build_domain(
    domain: Domain,
    base: &RandomizationConfig,
    seed: u64,
    n: usize,
    workers: usize,
) -> Result<Vec<EvalSet>> {
    let per = n / Condition::ALL.len();
    Condition::ALL
        .iter()
        .enumerate()
        .map(|(k, &condition)| {
            let (config, salt) = match domain {
                Domain::Canonical => (canonical_config(base, condition), CANONICAL_SALT),
                Domain::RandomizedHoldout => (holdout_config(base, condition), HOLDOUT_SALT),
            };
            let samples = generate_samples(&config, derive_seed(seed ^ salt, k as u64), per, workers)?;
            Ok(EvalSet {
                cond: EvalCondition { condition, domain },
                config,
                samples,
            })
        })
        .collect()
}

/// `n / 3` scenes per condition of the canonical domain.
pub fn build_canonical_domain(base: &RandomizationConfig, seed: u64, n: usize, workers: usize) -> Result<Vec<EvalSet>> {
    build_domain(Domain::Canonical, base, seed, n, workers)
}

/// `n / 3` training-distribution scenes per condition, from seeds disjoint
/// from any training set.
pub fn build_holdout_domain(base: &RandomizationConfig, seed: u64, n: usize, workers: usize) -> Result<Vec<EvalSet>> {
    build_domain(Domain::RandomizedHoldout, base, seed, n, workers)
}

/// Validation scenes drawn like the training set of `cfg` but from a
/// disjoint seed family.
pub fn validation_samples(cfg: &GenConfig, seed: u64, n: usize, workers: usize) -> Result<Vec<Sample>> {
    let mut v = cfg.clone();
    v.tag = DomainTag::HoldoutRandomized;
    v.randomization.scene.texture_budget = None;
    generate_samples(&v, seed ^ VALIDATION_SALT, n, workers)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub lrs: Vec<f64>,
    pub batches: Vec<usize>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            lrs: TrainConfig::LR_GRID.to_vec(),
            batches: TrainConfig::BATCH_GRID.to_vec(),
        }
    }
}

impl HyperGrid {
    /// Grid points in a fixed order: learning rate outer, batch inner.
    pub fn points(&self) -> Vec<(f64, usize)> {
        self.lrs
            .iter()
            .flat_map(|&lr| self.batches.iter().map(move |&b| (lr, b)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperRun {
    pub lr: f64,
    pub batch: usize,
    /// Mean holdout error of the retained weights; `None` if the run failed.
    pub val_cm: Option<f64>,
    /// Reported for context only; never used for selection.
    pub canonical_cm: Option<f64>,
    pub error: Option<String>,
    pub selected: bool,
}

#[derive(Clone, Debug)]
pub struct HyperResult {
    pub runs: Vec<HyperRun>,
    pub selected: Option<usize>,
    pub best: Option<(TrainConfig, Weights)>,
}

impl HyperResult {
    pub fn csv(&self) -> String {
        let mut s = String::from("lr,batch,val_cm,canonical_cm,selected,error\n");
        for r in &self.runs {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.lr,
                r.batch,
                opt(r.val_cm),
                opt(r.canonical_cm),
                r.selected,
                r.error.as_deref().unwrap_or("").replace(',', ";")
            );
        }
        s
    }
}

/// Index of the smallest validation error; failed runs never win and ties
/// go to the earlier grid point.
pub fn select_best(val: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in val.iter().enumerate() {
        if let Some(v) = *v {
            if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Train every grid point on the same data and select by validation error.
/// `canonical` sets, when given, are evaluated for the report only.
#[allow(clippy::too_many_arguments)]
pub fn hyper_search(
    train_set: Split,
    val_samples: &[Sample],
    spec: &NetworkSpec,
    frame: LabelFrame,
    base: &TrainConfig,
    grid: &HyperGrid,
    canonical: Option<&[EvalSet]>,
    workers: usize,
) -> Result<HyperResult> {
    let (val_images, val_labels) = split_of(val_samples);
    let val_split = Split::new(&val_images, &val_labels)?;
    let mut runs = Vec::new();
    let mut weights = Vec::new();
    for (lr, batch) in grid.points() {
        let cfg = TrainConfig { lr, batch, ..*base };
        let outcome = train_with_progress(train_set, val_split, spec.clone(), frame, &cfg, workers, &mut |_| {})
            .and_then(|rep| {
                let preds = predict_many(&rep.weights, &val_images, workers)?;
                Ok((Metrics::from_predictions(&preds, &val_labels).mean_cm, rep.weights))
            });
        match outcome {
            Ok((val_cm, w)) => {
                let canonical_cm = match canonical {
                    Some(sets) => Some(mean_over(&w, sets, workers)?),
                    None => None,
                };
                runs.push(HyperRun {
                    lr,
                    batch,
                    val_cm: Some(val_cm),
                    canonical_cm,
                    error: None,
                    selected: false,
                });
                weights.push(Some((cfg, w)));
            }
            Err(e) => {
                runs.push(HyperRun {
                    lr,
                    batch,
                    val_cm: None,
                    canonical_cm: None,
                    error: Some(e.to_string()),
                    selected: false,
                });
                weights.push(None);
            }
        }
    }
    let selected = select_best(&runs.iter().map(|r| r.val_cm).collect::<Vec<_>>());
    let mut best = None;
    if let Some(i) = selected {
        runs[i].selected = true;
        best = weights[i].take();
    }
    Ok(HyperResult { runs, selected, best })
}

/// Mean error over the union of several evaluation sets.
pub fn mean_over(weights: &Weights, sets: &[EvalSet], workers: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for s in sets {
        let m = evaluate(weights, &s.samples, workers)?;
        total += m.mean_cm * m.n as f64;
        n += m.n;
    }
    Ok(total / n.max(1) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoNoise,
    NoCamera,
    NoDistractors,
    /// Texture budget: number of unique texturizations.
    Textures(u64),
    /// Number of training samples.
    Samples(usize),
}

impl Variant {
    /// The full method and one variant per removed randomization component.
    pub const COMPONENTS: [Variant; 4] = [Variant::Full, Variant::NoNoise, Variant::NoCamera, Variant::NoDistractors];

    pub fn name(&self) -> String {
        match self {
            Variant::Full => "full".into(),
            Variant::NoNoise => "no_noise".into(),
            Variant::NoCamera => "no_camera".into(),
            Variant::NoDistractors => "no_distractors".into(),
            Variant::Textures(b) => format!("textures_{b}"),
            Variant::Samples(n) => format!("samples_{n}"),
        }
    }

    /// The base config with this variant's single axis changed.
    pub fn apply(&self, base: &RandomizationConfig) -> RandomizationConfig {
        let mut r = base.clone();
        match *self {
            Variant::Full | Variant::Samples(_) => {}
            Variant::NoNoise => r.noise.enabled = false,
            Variant::NoCamera => r.camera.randomization.enabled = false,
            Variant::NoDistractors => r.scene.distractors = false,
            Variant::Textures(b) => r.scene.texture_budget = Some(b),
        }
        r
    }

    pub fn train_samples(&self, default: usize) -> usize {
        match *self {
            Variant::Samples(n) => n,
            _ => default,
        }
    }
}

/// Leaf paths at which two configs differ, e.g. `noise.enabled`.
pub fn config_diff(a: &RandomizationConfig, b: &RandomizationConfig) -> Vec<String> {
    fn walk(path: &str, a: &serde_json::Value, b: &serde_json::Value, out: &mut Vec<String>) {
        match (a, b) {
            (serde_json::Value::Object(x), serde_json::Value::Object(y)) => {
                let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
                keys.sort();
                keys.dedup();
                for k in keys {
                    let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                    let null = serde_json::Value::Null;
                    walk(&p, x.get(k).unwrap_or(&null), y.get(k).unwrap_or(&null), out);
                }
            }
            _ if a != b => out.push(path.to_string()),
            _ => {}
        }
    }
    let mut out = Vec::new();
    let va = serde_json::to_value(a).expect("config serializes");
    let vb = serde_json::to_value(b).expect("config serializes");
    walk("", &va, &vb, &mut out);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub seed: u64,
    pub train_samples: usize,
    pub val_samples: usize,
    /// Canonical scenes in total, split evenly over the three conditions.
    pub canonical_samples: usize,
    /// Randomized-holdout scenes in total, split evenly over the conditions.
    pub holdout_samples: usize,
    /// Run the full method and the no-noise, no-camera and no-distractors variants.
    pub components: bool,
    pub texture_budgets: Vec<u64>,
    pub sample_sweep: Vec<usize>,
    pub hyper_search: bool,
    pub hyper_grid: HyperGrid,
    pub hyper_train_samples: usize,
    pub hyper_epochs: usize,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            seed: 1,
            train_samples: 5000,
            val_samples: 300,
            canonical_samples: 60,
            holdout_samples: 300,
            components: true,
            texture_budgets: vec![50, 500, 5000],
            sample_sweep: vec![500, 2000, 5000],
            hyper_search: true,
            hyper_grid: HyperGrid::default(),
            hyper_train_samples: 1000,
            hyper_epochs: 3,
        }
    }
}

impl AblateConfig {
    /// Variants in report order, without duplicates.
    pub fn variants(&self) -> Vec<Variant> {
        let mut v = Vec::new();
        if self.components {
            v.extend(Variant::COMPONENTS);
        }
        v.extend(self.texture_budgets.iter().map(|&b| Variant::Textures(b)));
        v.extend(self.sample_sweep.iter().map(|&n| Variant::Samples(n)));
        let mut seen = Vec::new();
        v.retain(|x| {
            let fresh = !seen.contains(x);
            seen.push(*x);
            fresh
        });
        v
    }
}

#[derive(Clone, Debug)]
pub struct VariantResult {
    pub variant: Variant,
    pub train_samples: usize,
    pub metrics: Vec<(EvalCondition, Metrics)>,
    pub curve: Vec<EpochStats>,
    pub variance_ratio: f64,
    pub collapsed: bool,
    pub weights: Option<Weights>,
    pub error: Option<String>,
}

impl VariantResult {
    pub fn metrics(&self, condition: Condition, domain: Domain) -> Option<&Metrics> {
        self.metrics
            .iter()
            .find(|(c, _)| c.condition == condition && c.domain == domain)
            .map(|(_, m)| m)
    }

    /// Mean error over every sample of a domain.
    pub fn domain_mean(&self, domain: Domain) -> Option<f64> {
        let ms: Vec<&Metrics> = self.metrics.iter().filter(|(c, _)| c.domain == domain).map(|(_, m)| m).collect();
        let n: usize = ms.iter().map(|m| m.n).sum();
        (n > 0).then(|| ms.iter().map(|m| m.mean_cm * m.n as f64).sum::<f64>() / n as f64)
    }

    /// Population std over every sample of a domain.
    pub fn domain_std(&self, domain: Domain) -> Option<f64> {
        let errs: Vec<f64> = self
            .metrics
            .iter()
            .filter(|(c, _)| c.domain == domain)
            .flat_map(|(_, m)| m.errors_cm.iter().copied())
            .collect();
        (!errs.is_empty()).then(|| {
            let m = errs.iter().sum::<f64>() / errs.len() as f64;
            (errs.iter().map(|e| (e - m).powi(2)).sum::<f64>() / errs.len() as f64).sqrt()
        })
    }
}

/// Evaluation sets shared by every variant of one ablation run.
pub struct EvalDomains {
    pub canonical: Vec<EvalSet>,
    pub holdout: Vec<EvalSet>,
}

impl EvalDomains {
    pub fn build(cfg: &Config, workers: usize) -> Result<Self> {
        let base = cfg.randomization();
        let a = &cfg.ablate;
        Ok(EvalDomains {
            canonical: build_canonical_domain(&base, a.seed, a.canonical_samples, workers)?,
            holdout: build_holdout_domain(&base, a.seed, a.holdout_samples, workers)?,
        })
    }

    pub fn all(&self) -> impl Iterator<Item = &EvalSet> {
        self.canonical.iter().chain(&self.holdout)
    }
}

/// Generate the variant's training and validation data, train, and
/// evaluate on the shared domains. `train_cfg` overrides the config's
/// training section when given.
pub fn run_variant(
    cfg: &Config,
    variant: Variant,
    train_cfg: Option<&TrainConfig>,
    domains: &EvalDomains,
    workers: usize,
    log: &dyn Fn(&str),
) -> VariantResult {
    let n = variant.train_samples(cfg.ablate.train_samples);
    let outcome = (|| -> Result<VariantResult> {
        let gen = GenConfig::training(variant.apply(&cfg.randomization()));
        let train = generate_samples(&gen, cfg.ablate.seed, n, workers)?;
        let val = validation_samples(&gen, cfg.ablate.seed, cfg.ablate.val_samples, workers)?;
        let (ti, tl) = split_of(&train);
        drop(train);
        let (vi, vl) = split_of(&val);
        let tc = train_cfg.unwrap_or(&cfg.train);
        let name = variant.name();
        let rep = train_with_progress(
            Split::new(&ti, &tl)?,
            Split::new(&vi, &vl)?,
            cfg.network_spec(),
            cfg.label_frame(),
            tc,
            workers,
            &mut |e| {
                log(&format!(
                    "{name}: epoch {} train {:.5} val {:.5} pred_var {:.4}",
                    e.epoch, e.train_loss, e.val_loss, e.pred_variance
                ))
            },
        )?;
        let mut metrics = Vec::new();
        for set in domains.all() {
            metrics.push((set.cond, evaluate(&rep.weights, &set.samples, workers)?));
        }
        Ok(VariantResult {
            variant,
            train_samples: n,
            metrics,
            variance_ratio: rep.variance_ratio(),
            collapsed: rep.collapsed(),
            curve: rep.curve.clone(),
            weights: Some(rep.weights),
            error: None,
        })
    })();
    outcome.unwrap_or_else(|e| VariantResult {
        variant,
        train_samples: n,
        metrics: Vec::new(),
        curve: Vec::new(),
        variance_ratio: f64::NAN,
        collapsed: false,
        weights: None,
        error: Some(e.to_string()),
    })
}

#[derive(Clone, Debug)]
pub struct AblationReport {
    pub variants: Vec<VariantResult>,
    pub hyper: Option<HyperResult>,
}

impl AblationReport {
    pub fn get(&self, variant: Variant) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.variant == variant)
    }

    /// `variant,condition,domain,n,mean_cm,std_cm`
    pub fn csv(&self) -> String {
        let mut s = String::from("variant,condition,domain,n,mean_cm,std_cm\n");
        for v in &self.variants {
            for (c, m) in &v.metrics {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{:.4},{:.4}",
                    v.variant.name(),
                    c.condition.as_str(),
                    c.domain.as_str(),
                    m.n,
                    m.mean_cm,
                    m.std_cm
                );
            }
        }
        s
    }

    /// Canonical-domain errors of the component-ablation variants, one row each.
    pub fn component_table(&self) -> String {
        let mut s = format!("{:<16}", "method");
        for c in Condition::ALL {
            let _ = write!(s, "{:>18}", c.as_str());
        }
        s.push('\n');
        for variant in Variant::COMPONENTS {
            let Some(v) = self.get(variant) else { continue };
            let _ = write!(s, "{:<16}", variant.name());
            for c in Condition::ALL {
                let cell = match (&v.error, v.metrics(c, Domain::Canonical)) {
                    (Some(_), _) => "failed".to_string(),
                    (None, Some(m)) => m.pretty(),
                    (None, None) => "-".to_string(),
                };
                let _ = write!(s, "{cell:>18}");
            }
            s.push('\n');
        }
        s
    }

    /// `(x, canonical mean error)` for the texture-budget or sample sweep.
    pub fn sweep(&self, textures: bool) -> Vec<(u64, f64)> {
        self.variants
            .iter()
            .filter_map(|v| match (v.variant, textures) {
                (Variant::Textures(b), true) => Some((b, v)),
                (Variant::Samples(n), false) => Some((n as u64, v)),
                _ => None,
            })
            .filter_map(|(x, v)| v.domain_mean(Domain::Canonical).map(|m| (x, m)))
            .collect()
    }

    pub fn sweep_csv(&self) -> String {
        let mut s = String::from("sweep,x,mean_cm\n");
        for (name, textures) in [("textures", true), ("samples", false)] {
            for (x, m) in self.sweep(textures) {
                let _ = writeln!(s, "{name},{x},{m:.4}");
            }
        }
        s
    }
}

/// Run every configured variant (and the hyperparameter grid if enabled).
pub fn ablate(cfg: &Config, workers: usize, log: &dyn Fn(&str)) -> Result<AblationReport> {
    cfg.validate()?;
    let domains = EvalDomains::build(cfg, workers)?;
    let mut variants: Vec<VariantResult> = Vec::new();
    for variant in cfg.ablate.variants() {
        // the sample sweep point at the default size is the full method itself
        if let Variant::Samples(n) = variant {
            if n == cfg.ablate.train_samples {
                if let Some(full) = variants.iter().find(|v| v.variant == Variant::Full) {
                    let mut copy = full.clone();
                    copy.variant = variant;
                    variants.push(copy);
                    continue;
                }
            }
        }
        log(&format!("variant {}", variant.name()));
        variants.push(run_variant(cfg, variant, None, &domains, workers, log));
    }
    let hyper = if cfg.ablate.hyper_search {
        Some(run_hyper_search(cfg, Some(&domains.canonical), workers)?)
    } else {
        None
    };
    Ok(AblationReport { variants, hyper })
}

/// The 2×3 grid on a reduced training set.
pub fn run_hyper_search(cfg: &Config, canonical: Option<&[EvalSet]>, workers: usize) -> Result<HyperResult> {
    let a = &cfg.ablate;
    let gen = GenConfig::training(cfg.randomization());
    let train = generate_samples(&gen, derive_seed(a.seed, 7), a.hyper_train_samples, workers)?;
    let val = validation_samples(&gen, derive_seed(a.seed, 7), a.val_samples, workers)?;
    let (ti, tl) = split_of(&train);
    let base = TrainConfig {
        epochs: a.hyper_epochs,
        ..cfg.train
    };
    hyper_search(
        Split::new(&ti, &tl)?,
        &val,
        &cfg.network_spec(),
        cfg.label_frame(),
        &base,
        &a.hyper_grid,
        canonical,
        workers,
    )
}

/// Distinct texture families of a set of generation configs, as used by
/// the disjointness audit between training and canonical data.
pub fn families_of(cfg: &GenConfig, samples: &[Sample]) -> Result<std::collections::BTreeSet<crate::texgen::TextureFamily>> {
    let mut out = std::collections::BTreeSet::new();
    for s in samples {
        let scene = crate::dataset::sample_scene_for(cfg, s.seed, s.index)?;
        out.extend(scene.texture_families());
    }
    Ok(out)
}

/// Exit-code classification for the CLI.
pub fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::Divergence(_))
}
