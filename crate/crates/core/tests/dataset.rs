//! Noise model and on-disk dataset contracts.

use std::fs;

use domrand::dataset::{
    directory_digest, generate_dataset, load_dataset, read_manifest, DomainTag, GenConfig, IMAGE_DIR, MANIFEST,
};
use domrand::error::Error;
use domrand::image::Image;
use domrand::noise::{add_noise, NoiseSpec};
use domrand::rng::{derive_seed, stream};
use domrand::scene::{CameraConfig, RandomizationConfig};

fn config(res: u32) -> GenConfig {
    let mut r = RandomizationConfig::default();
    r.camera.base = CameraConfig::base_camera(res);
    GenConfig::training(r)
}

#[test]
fn zero_noise_is_bytewise_identity() {
    let mut img = Image::new(40, 30);
    let mut rng = stream(3);
    for b in img.pixels.iter_mut() {
        *b = rand::Rng::random(&mut rng);
    }
    assert_eq!(add_noise(&img, &NoiseSpec::none(), &mut stream(1)), img);
}

#[test]
fn gaussian_noise_has_the_requested_std() {
    let img = Image::filled(400, 300, [128; 3]);
    let spec = NoiseSpec {
        gaussian_sigma: 0.05,
        ..NoiseSpec::none()
    };
    let out = add_noise(&img, &spec, &mut stream(4));
    let target = 0.05 * 255.0;
    for ch in 0..3 {
        let v: Vec<f64> = out.pixels.iter().skip(ch).step_by(3).map(|&b| b as f64).collect();
        assert!(v.len() >= 100_000);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - target).abs() <= 0.1 * target, "channel {ch}: std {sd}");
        assert!((mean - 128.0).abs() < 0.2, "channel {ch}: mean {mean}");
    }
}

#[test]
fn salt_and_pepper_rate() {
    let img = Image::filled(400, 300, [128; 3]);
    let p = 0.02;
    let spec = NoiseSpec {
        salt_pepper_prob: p,
        ..NoiseSpec::none()
    };
    let out = add_noise(&img, &spec, &mut stream(5));
    let n = out.width * out.height;
    let (mut salt, mut pepper) = (0usize, 0usize);
    for px in out.pixels.chunks_exact(3) {
        match px {
            [255, 255, 255] => salt += 1,
            [0, 0, 0] => pepper += 1,
            [128, 128, 128] => {}
            other => panic!("unexpected pixel {other:?}"),
        }
    }
    let hits = (salt + pepper) as f64;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((hits - n as f64 * p).abs() <= 3.0 * sd, "{hits} hits of {n}");
    // Half salt, half pepper.
    let sd_half = (hits * 0.25).sqrt();
    assert!((salt as f64 - 0.5 * hits).abs() <= 3.0 * sd_half);
}

#[test]
fn generation_is_deterministic_across_runs_and_workers() {
    let cfg = config(128);
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    generate_dataset(&cfg, 42, 100, dirs[0].path(), 1).unwrap();
    generate_dataset(&cfg, 42, 100, dirs[1].path(), 1).unwrap();
    generate_dataset(&cfg, 42, 100, dirs[2].path(), 8).unwrap();
    let d: Vec<String> = dirs.iter().map(|t| directory_digest(t.path()).unwrap()).collect();
    assert_eq!(d[0], d[1]);
    assert_eq!(d[0], d[2]);

    let m = read_manifest(&dirs[0].path().join(MANIFEST)).unwrap();
    assert_eq!(m.records.len(), 100);
    let sc = &cfg.randomization.scene;
    for (k, r) in m.records.iter().enumerate() {
        assert_eq!(r.i, k as u64);
        assert_eq!(r.seed, derive_seed(42, k as u64));
        assert_eq!(r.tag, DomainTag::TrainRandomized);
        assert!(r.label[0].abs() <= 0.5 * sc.table_extent[0]);
        assert!(r.label[1].abs() <= 0.5 * sc.table_extent[1]);
        assert!(r.label[2] > sc.table_height);
    }
    // No temp file survives.
    assert!(!dirs[0].path().join(format!("{MANIFEST}.tmp")).exists());
}

#[test]
fn write_then_load_round_trips() {
    let cfg = config(48);
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(&cfg, 7, 20, dir.path(), 2).unwrap();
    let mem = domrand::dataset::generate_samples(&cfg, 7, 20, 1).unwrap();
    let (loaded_m, loaded) = load_dataset(&dir.path().join(MANIFEST)).unwrap();
    assert_eq!(loaded_m, m);
    assert_eq!(loaded, mem);
    for s in &loaded {
        let r = &m.records[s.index as usize];
        for k in 0..3 {
            assert!((s.label[k] - r.label[k]).abs() < 1e-7);
        }
    }
}

#[test]
fn regenerating_into_a_used_directory_matches_a_fresh_one() {
    let cfg = config(32);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_dataset(&cfg, 1, 12, a.path(), 1).unwrap();
    generate_dataset(&cfg, 1, 5, a.path(), 1).unwrap();
    generate_dataset(&cfg, 1, 5, b.path(), 1).unwrap();
    assert_eq!(directory_digest(a.path()).unwrap(), directory_digest(b.path()).unwrap());
}

#[test]
fn truncated_image_names_its_index() {
    let cfg = config(32);
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&cfg, 3, 6, dir.path(), 1).unwrap();
    let victim = dir.path().join(IMAGE_DIR).join("00000004.ppm");
    let bytes = fs::read(&victim).unwrap();
    fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();
    match load_dataset(&dir.path().join(MANIFEST)) {
        Err(e @ Error::Image { index: 4, .. }) => assert!(e.to_string().contains('4')),
        other => panic!("expected image error for index 4, got {other:?}"),
    }
    fs::remove_file(&victim).unwrap();
    assert!(matches!(
        load_dataset(&dir.path().join(MANIFEST)),
        Err(Error::Image { index: 4, .. })
    ));
}

#[test]
fn edited_digest_is_a_config_mismatch() {
    let cfg = config(32);
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(&cfg, 3, 4, dir.path(), 1).unwrap();
    let path = dir.path().join(MANIFEST);
    let text = fs::read_to_string(&path).unwrap();
    let forged = "0".repeat(m.header.digest.len());
    fs::write(&path, text.replacen(&m.header.digest, &forged, 1)).unwrap();
    assert!(matches!(load_dataset(&path), Err(Error::ConfigMismatch { .. })));
}

#[test]
fn edited_config_is_a_config_mismatch() {
    let cfg = config(32);
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&cfg, 3, 4, dir.path(), 1).unwrap();
    let path = dir.path().join(MANIFEST);
    let text = fs::read_to_string(&path).unwrap();
    let edited = text.replacen("\"table_height\":0.75", "\"table_height\":0.8", 1);
    assert_ne!(edited, text);
    fs::write(&path, edited).unwrap();
    assert!(matches!(load_dataset(&path), Err(Error::ConfigMismatch { .. })));
}

#[test]
fn unsupported_version_is_reported() {
    let cfg = config(32);
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&cfg, 3, 2, dir.path(), 1).unwrap();
    let path = dir.path().join(MANIFEST);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replacen("{\"v\":1", "{\"v\":9", 1)).unwrap();
    assert!(matches!(
        load_dataset(&path),
        Err(Error::Version { found: 9, expected: 1 })
    ));
}

#[test]
fn missing_manifest_means_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_dataset(&dir.path().join(MANIFEST)).is_err());
}

#[test]
fn per_index_seeds_do_not_collide() {
    let mut seen = std::collections::HashSet::new();
    for i in 0..200_000u64 {
        assert!(seen.insert(derive_seed(42, i)), "collision at {i}");
    }
}
