//! Command-line front end. `run` returns the process exit code:
//! 0 success, 2 usage or config error, 3 data error, 4 numeric divergence.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, canonical_config, holdout_config, Condition, EvalDomains, Metrics};
use crate::config::Config;
use crate::dataset::{directory_digest, generate_dataset, load_dataset, GenConfig, Sample};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::gradcheck;
use crate::nn::train::{predict_many, train_with_progress, Split};
use crate::nn::Weights;
use crate::raster::render;
use crate::rng::derive_seed;
use crate::scene::sample_scene;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "domrand", about = "Domain-randomized tabletop data, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON config file with optional sections scene, camera, noise, net, train, ablate.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GenDomain {
    Train,
    Holdout,
    Canonical,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GenCondition {
    ObjectOnly,
    Distractors,
    Occlusions,
}

impl From<GenCondition> for Condition {
    fn from(c: GenCondition) -> Condition {
        match c {
            GenCondition::ObjectOnly => Condition::ObjectOnly,
            GenCondition::Distractors => Condition::Distractors,
            GenCondition::Occlusions => Condition::Occlusions,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset (images/ and manifest.jsonl).
    Gen {
        #[command(flatten)]
        common: Common,
        /// Number of samples.
        #[arg(short = 'n', default_value_t = 1000)]
        n: usize,
        #[arg(long, value_enum, default_value = "train")]
        domain: GenDomain,
        /// Scene condition for holdout and canonical domains.
        #[arg(long, value_enum, default_value = "object-only")]
        condition: GenCondition,
    },
    /// Train on a dataset; writes weights.bin and curve.csv.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Validation manifest; defaults to the last tenth of the training set.
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Evaluate weights; writes metrics.csv.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: PathBuf,
        /// Manifests to evaluate; without any, canonical and holdout domains are built from the config.
        #[arg(long)]
        manifest: Vec<PathBuf>,
    },
    /// Run the ablation variants and the hyperparameter grid.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// Render a 4×4 sheet of randomized scenes.
    Preview {
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference check of every backward pass.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<Config> {
    match &common.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence(_) => EXIT_DIVERGENCE,
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Gen {
            common,
            n,
            domain,
            condition,
        } => {
            let cfg = load_config(&common)?;
            let base = cfg.randomization();
            let gen = match domain {
                GenDomain::Train => GenConfig::training(base),
                GenDomain::Holdout => holdout_config(&base, condition.into()),
                GenDomain::Canonical => canonical_config(&base, condition.into()),
            };
            ensure_dir(&common.out)?;
            let manifest = generate_dataset(&gen, common.seed, n, &common.out, common.workers)?;
            println!("wrote {} samples to {}", manifest.records.len(), common.out.display());
            println!("digest {}", directory_digest(&common.out)?);
            Ok(EXIT_OK)
        }
        Command::Train { common, manifest, val } => {
            let cfg = load_config(&common)?;
            let (_, mut train) = load_dataset(&manifest)?;
            let val: Vec<Sample> = match val {
                Some(p) => load_dataset(&p)?.1,
                None => {
                    let k = (train.len() / 10).max(1);
                    if train.len() < 2 {
                        return Err(Error::Data("need at least 2 samples to split off validation".into()));
                    }
                    train.split_off(train.len() - k)
                }
            };
            let (ti, tl) = bench::split_of(&train);
            let (vi, vl) = bench::split_of(&val);
            let tc = crate::nn::TrainConfig {
                seed: common.seed,
                ..cfg.train
            };
            let rep = train_with_progress(
                Split::new(&ti, &tl)?,
                Split::new(&vi, &vl)?,
                cfg.network_spec(),
                cfg.label_frame(),
                &tc,
                common.workers,
                &mut |e| {
                    eprintln!(
                        "epoch {:>3}  train {:.5}  val {:.5}  pred_var {:.4}",
                        e.epoch, e.train_loss, e.val_loss, e.pred_variance
                    )
                },
            )?;
            ensure_dir(&common.out)?;
            rep.weights.save(&common.out.join("weights.bin"))?;
            rep.write_curve(&common.out.join("curve.csv"))?;
            let preds = predict_many(&rep.weights, &vi, common.workers)?;
            let inside = preds.iter().filter(|p| rep.weights.frame.contains(**p, 2.0)).count();
            println!("best epoch {} val loss {:.5}", rep.best_epoch, rep.best().val_loss);
            println!(
                "prediction/label variance ratio {:.4}{}",
                rep.variance_ratio(),
                if rep.collapsed() { "  CENTER COLLAPSE" } else { "" }
            );
            println!("{inside}/{} validation predictions within 2x table bounds", preds.len());
            Ok(EXIT_OK)
        }
        Command::Eval {
            common,
            weights,
            manifest,
        } => {
            let cfg = load_config(&common)?;
            let w = Weights::load(&weights)?;
            let mut csv = String::from("source,n,mean_cm,std_cm,xy_cm,z_cm\n");
            let mut row = |name: &str, m: &Metrics| {
                csv.push_str(&format!(
                    "{name},{},{:.4},{:.4},{:.4},{:.4}\n",
                    m.n, m.mean_cm, m.std_cm, m.xy_cm, m.z_cm
                ));
                println!("{name:<32} {:>5}  {} cm", m.n, m.pretty());
            };
            if manifest.is_empty() {
                let mut c = cfg.clone();
                c.ablate.seed = common.seed;
                let domains = EvalDomains::build(&c, common.workers)?;
                for set in domains.all() {
                    let m = bench::evaluate(&w, &set.samples, common.workers)?;
                    row(&format!("{}/{}", set.cond.domain.as_str(), set.cond.condition.as_str()), &m);
                }
            } else {
                for p in &manifest {
                    let (_, samples) = load_dataset(p)?;
                    row(&p.display().to_string(), &bench::evaluate(&w, &samples, common.workers)?);
                }
            }
            ensure_dir(&common.out)?;
            write(&common.out.join("metrics.csv"), &csv)?;
            Ok(EXIT_OK)
        }
        Command::Ablate { common } => {
            let mut cfg = load_config(&common)?;
            cfg.ablate.seed = common.seed;
            let report = bench::ablate(&cfg, common.workers, &|m| eprintln!("{m}"))?;
            ensure_dir(&common.out)?;
            write(&common.out.join("ablation.csv"), &report.csv())?;
            write(&common.out.join("sweeps.csv"), &report.sweep_csv())?;
            let table = report.component_table();
            write(&common.out.join("components.txt"), &table)?;
            print!("{table}");
            if let Some(h) = &report.hyper {
                write(&common.out.join("hyper.csv"), &h.csv())?;
            }
            for v in report.variants.iter().filter(|v| v.error.is_some()) {
                eprintln!("variant {} failed: {}", v.variant.name(), v.error.as_deref().unwrap_or(""));
            }
            Ok(EXIT_OK)
        }
        Command::Preview { common } => {
            let cfg = load_config(&common)?;
            let r = cfg.randomization();
            r.validate()?;
            let (w, h) = r.resolution();
            let mut sheet = Image::new(4 * w, 4 * h);
            for k in 0..16 {
                let scene = sample_scene(&r, derive_seed(common.seed, k));
                sheet.blit(&render(&scene), (k as usize % 4) * w, (k as usize / 4) * h);
            }
            ensure_dir(&common.out)?;
            let path = common.out.join("preview.ppm");
            sheet.write_ppm(&path)?;
            println!("wrote {}", path.display());
            Ok(EXIT_OK)
        }
        Command::Gradcheck { common } => {
            let results = gradcheck::run_all(common.seed)?;
            let mut ok = true;
            for r in &results {
                println!(
                    "{:<12} trials {:>3}  compared {:>6}  skipped {:>4}  max rel error {:.3e}  (tol {:.0e})  {}",
                    r.name,
                    r.trials,
                    r.compared,
                    r.skipped,
                    r.max_rel_error,
                    r.tolerance,
                    if r.passes() { "ok" } else { "FAIL" }
                );
                ok &= r.passes();
            }
            let worst = results
                .iter()
                .filter(|r| r.tolerance == gradcheck::LAYER_TOLERANCE)
                .map(|r| r.max_rel_error)
                .fold(0.0, f64::max);
            println!("max relative error {worst:.3e}");
            Ok(if ok { EXIT_OK } else { EXIT_DIVERGENCE })
        }
    }
}
