//! Deterministic dataset generation and the on-disk format: `images/%08d.ppm`
//! plus a JSON-lines manifest whose first line is a header record.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::noise::add_noise;
use crate::par;
use crate::raster::render;
use crate::rng::{derive_seed, stream};
use crate::scene::{audit_scene, make_occlusion_scene, sample_scene_indexed, RandomizationConfig, SceneSpec};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.jsonl";
pub const IMAGE_DIR: &str = "images";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    TrainRandomized,
    /// Training-style scenes from seeds never used for training.
    HoldoutRandomized,
    EvalCanonical,
    EvalDistractor,
    EvalOcclusion,
}

impl DomainTag {
    pub const ALL: [DomainTag; 5] = [
        DomainTag::TrainRandomized,
        DomainTag::HoldoutRandomized,
        DomainTag::EvalCanonical,
        DomainTag::EvalDistractor,
        DomainTag::EvalOcclusion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::TrainRandomized => "train_randomized",
            DomainTag::HoldoutRandomized => "holdout_randomized",
            DomainTag::EvalCanonical => "eval_canonical",
            DomainTag::EvalDistractor => "eval_distractor",
            DomainTag::EvalOcclusion => "eval_occlusion",
        }
    }

    pub fn parse(s: &str) -> Option<DomainTag> {
        DomainTag::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

/// Everything that determines the content of a dataset apart from the
/// master seed and the sample count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub randomization: RandomizationConfig,
    /// Force a partial occluder in front of the target in every scene.
    #[serde(default)]
    pub occlusion: bool,
    pub tag: DomainTag,
}

impl GenConfig {
    pub fn training(randomization: RandomizationConfig) -> Self {
        GenConfig {
            randomization,
            occlusion: false,
            tag: DomainTag::TrainRandomized,
        }
    }

    /// SHA-256 of the config's JSON serialization, hex encoded.
    pub fn digest(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub index: u64,
    pub image: Image,
    /// Target center of mass, world frame, meters.
    pub label: [f64; 3],
    pub seed: u64,
    pub tag: DomainTag,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Decimal text with 9 significant digits.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0".into() } else { format!("{v}") };
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (8 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Round to the value that the manifest stores, so in-memory and loaded
/// labels agree bit for bit.
pub fn quantize_label(p: [f64; 3]) -> [f64; 3] {
    p.map(|v| format_sig9(v).parse().expect("formatted float parses"))
}

/// Scene of sample `index`.
pub fn sample_scene_for(cfg: &GenConfig, seed: u64, index: u64) -> Result<SceneSpec> {
    if cfg.occlusion {
        make_occlusion_scene(&cfg.randomization, seed)
    } else {
        Ok(sample_scene_indexed(&cfg.randomization, seed, Some(index)))
    }
}

/// Render one sample from its per-index stream.
pub fn make_sample(cfg: &GenConfig, master_seed: u64, index: u64) -> Result<Sample> {
    let seed = derive_seed(master_seed, index);
    let scene = sample_scene_for(cfg, seed, index)?;
    let mut image = render(&scene);
    if !scene.noise.is_identity() {
        image = add_noise(&image, &scene.noise, &mut stream(scene.noise.seed));
    }
    Ok(Sample {
        index,
        image,
        label: quantize_label([scene.label.x, scene.label.y, scene.label.z]),
        seed,
        tag: cfg.tag,
    })
}

/// Generate samples `0..n` in memory.
pub fn generate_samples(cfg: &GenConfig, master_seed: u64, n: usize, workers: usize) -> Result<Vec<Sample>> {
    cfg.randomization.validate()?;
    par::try_map(n, workers, |i| make_sample(cfg, master_seed, i as u64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub v: u32,
    pub master_seed: u64,
    pub n: u64,
    pub config: GenConfig,
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub i: u64,
    pub img: String,
    pub label: [f64; 3],
    pub seed: u64,
    pub tag: DomainTag,
}

impl Record {
    fn to_line(&self) -> String {
        format!(
            "{{\"i\":{},\"img\":{},\"label\":[{},{},{}],\"seed\":{},\"tag\":\"{}\"}}",
            self.i,
            serde_json::to_string(&self.img).expect("string serializes"),
            format_sig9(self.label[0]),
            format_sig9(self.label[1]),
            format_sig9(self.label[2]),
            self.seed,
            self.tag.as_str()
        )
    }

    fn parse(line: &str, lineno: usize) -> Result<Record> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            i: u64,
            img: String,
            label: [f64; 3],
            seed: u64,
            tag: String,
        }
        let raw: Raw = serde_json::from_str(line)
            .map_err(|e| Error::Data(format!("manifest line {lineno}: {e}")))?;
        let tag = DomainTag::parse(&raw.tag)
            .ok_or_else(|| Error::Data(format!("manifest line {lineno}: unknown tag {:?}", raw.tag)))?;
        Ok(Record {
            i: raw.i,
            img: raw.img,
            label: raw.label,
            seed: raw.seed,
            tag,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<Record>,
}

pub fn image_name(index: u64) -> String {
    format!("{IMAGE_DIR}/{index:08}.ppm")
}

/// Write a dataset of `n` samples into `out_dir`. The manifest is written
/// last (temp file plus rename), so a directory without one is incomplete.
pub fn generate_dataset(cfg: &GenConfig, master_seed: u64, n: usize, out_dir: &Path, workers: usize) -> Result<DatasetManifest> {
    cfg.randomization.validate()?;
    let manifest_path = out_dir.join(MANIFEST);
    let img_dir = out_dir.join(IMAGE_DIR);
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }
    // images left over from an earlier, larger run would change the digest
    for entry in fs::read_dir(&img_dir).map_err(|e| Error::io(&img_dir, e))? {
        let path = entry.map_err(|e| Error::io(&img_dir, e))?.path();
        let stale = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok())
            .is_some_and(|i| i >= n as u64);
        if stale && path.extension().is_some_and(|e| e == "ppm") {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    let records = par::try_map(n, workers, |i| -> Result<Record> {
        let s = make_sample(cfg, master_seed, i as u64)?;
        let img = image_name(s.index);
        s.image.write_ppm(&out_dir.join(&img))?;
        Ok(Record {
            i: s.index,
            img,
            label: s.label,
            seed: s.seed,
            tag: s.tag,
        })
    })?;
    let header = ManifestHeader {
        v: MANIFEST_VERSION,
        master_seed,
        n: n as u64,
        config: cfg.clone(),
        digest: cfg.digest(),
    };
    let mut text = serde_json::to_string(&header).expect("header serializes");
    text.push('\n');
    for r in &records {
        text.push_str(&r.to_line());
        text.push('\n');
    }
    let tmp = out_dir.join(format!("{MANIFEST}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, &manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(DatasetManifest { header, records })
}

/// Parse and validate a manifest without touching the images.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| Error::Data("empty manifest".into()))?;
    let value: serde_json::Value =
        serde_json::from_str(first).map_err(|e| Error::Data(format!("manifest header: {e}")))?;
    let v = value.get("v").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if v != MANIFEST_VERSION {
        return Err(Error::Version {
            found: v,
            expected: MANIFEST_VERSION,
        });
    }
    let header: ManifestHeader =
        serde_json::from_value(value).map_err(|e| Error::Data(format!("manifest header: {e}")))?;
    let computed = header.config.digest();
    if computed != header.digest {
        return Err(Error::ConfigMismatch {
            stored: header.digest.clone(),
            computed,
        });
    }
    let records = lines
        .enumerate()
        .map(|(k, l)| Record::parse(l, k + 1))
        .collect::<Result<Vec<_>>>()?;
    if records.len() as u64 != header.n || records.iter().enumerate().any(|(k, r)| r.i != k as u64) {
        return Err(Error::Data(format!(
            "manifest indices are not dense 0..{} ({} records)",
            header.n,
            records.len()
        )));
    }
    Ok(DatasetManifest { header, records })
}

/// Load every sample listed in a manifest.
pub fn load_dataset(manifest_path: &Path) -> Result<(DatasetManifest, Vec<Sample>)> {
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let (w, h) = manifest.header.config.randomization.resolution();
    let samples = manifest
        .records
        .iter()
        .map(|r| {
            let path = dir.join(&r.img);
            let bytes = fs::read(&path).map_err(|e| Error::Image {
                index: r.i,
                reason: format!("{}: {e}", path.display()),
            })?;
            let image = Image::decode_ppm(&bytes).map_err(|e| Error::Image {
                index: r.i,
                reason: e.to_string(),
            })?;
            if image.width != w || image.height != h {
                return Err(Error::Image {
                    index: r.i,
                    reason: format!("{}x{} image, expected {w}x{h}", image.width, image.height),
                });
            }
            Ok(Sample {
                index: r.i,
                image,
                label: r.label,
                seed: r.seed,
                tag: r.tag,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

/// SHA-256 over every file below `dir` (relative path and contents, in
/// sorted path order).
pub fn directory_digest(dir: &Path) -> Result<String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("below root").to_string_lossy().replace('\\', "/");
                out.insert(rel, path);
            }
        }
        Ok(())
    }
    let mut files = BTreeMap::new();
    walk(dir, dir, &mut files)?;
    let mut h = Sha256::new();
    for (rel, path) in files {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        h.update((rel.len() as u64).to_le_bytes());
        h.update(rel.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex(&h.finalize()))
}

/// Problems with the generated samples: labels off the table top, or
/// training scenes failing the scene audit.
pub fn audit_samples(cfg: &GenConfig, samples: &[Sample]) -> Vec<String> {
    let sc = &cfg.randomization.scene;
    let (hx, hy) = (0.5 * sc.table_extent[0], 0.5 * sc.table_extent[1]);
    let mut problems = Vec::new();
    for s in samples {
        let [x, y, z] = s.label;
        if x.abs() > hx || y.abs() > hy || z < sc.table_height {
            problems.push(format!("sample {}: label {:?} outside the table", s.index, s.label));
        }
        if s.tag == DomainTag::TrainRandomized {
            if let Ok(scene) = sample_scene_for(cfg, s.seed, s.index) {
                let a = audit_scene(&scene);
                if !a.passes() {
                    problems.push(format!("sample {}: {:?}", s.index, a.problems));
                }
            }
        }
    }
    problems
}
