//! Rasterizer contracts checked against brute-force oracles.

use domrand::camera::{camera_basis, pixel_ray, project, CameraSpec};
use domrand::geom::Vec3;
use domrand::image::IdBuffer;
use domrand::raster::{render_ids, render_triangles, render_with_ids, scene_triangles, shade, sky_uv, Material, Triangle};
use domrand::rng::{derive_seed, stream};
use domrand::scene::{make_occlusion_scene, sample_scene, CameraConfig, LightKind, LightSpec, RandomizationConfig};
use domrand::texgen::{eval_texture, Rgb, TextureSpec};
use rand::seq::SliceRandom;
use rand::Rng;

const SKY: TextureSpec = TextureSpec::Flat {
    color: Rgb::new(0.0, 0.0, 0.0),
};

fn white_triangle(p: [Vec3; 3], id: u8) -> Triangle {
    Triangle {
        p,
        uv: [[0.0; 2]; 3],
        material: Material::Emissive(Rgb::WHITE),
        id,
        layer: 0,
    }
}

/// Point-in-triangle over every pixel center, from projected vertices.
fn half_plane_oracle(cam: &CameraSpec, p: [Vec3; 3]) -> Vec<bool> {
    let q = p.map(|v| project(cam, v).expect("in front"));
    let (w, h) = (cam.image_w as usize, cam.image_h as usize);
    let side = |a: usize, b: usize, x: f64, y: f64| {
        (q[b].px - q[a].px) * (y - q[a].py) - (q[b].py - q[a].py) * (x - q[a].px)
    };
    let mut out = vec![false; w * h];
    for j in 0..h {
        for i in 0..w {
            let (x, y) = (i as f64 + 0.5, j as f64 + 0.5);
            let s = [side(1, 2, x, y), side(2, 0, x, y), side(0, 1, x, y)];
            out[j * w + i] = s.iter().all(|&v| v >= 0.0) || s.iter().all(|&v| v <= 0.0);
        }
    }
    out
}

#[test]
fn single_triangle_matches_half_plane_oracle() {
    let cam = CameraConfig::base_camera(128);
    let mut rng = stream(1);
    let mut covered_total = 0;
    for t in 0..100 {
        let p = [0; 3].map(|_| {
            Vec3::new(
                rng.random_range(-0.35..0.35),
                rng.random_range(-0.3..0.3),
                0.75 + rng.random_range(-0.2..0.2),
            )
        });
        let (_, ids) = render_triangles(&cam, &[white_triangle(p, 2)], &[], &SKY, true);
        let oracle = half_plane_oracle(&cam, p);
        let got: Vec<bool> = ids.ids.iter().map(|&v| v == 2).collect();
        let diff = got.iter().zip(&oracle).filter(|(a, b)| a != b).count();
        assert_eq!(diff, 0, "triangle {t}: {diff} pixels differ");
        covered_total += oracle.iter().filter(|&&b| b).count();
    }
    assert!(covered_total > 10_000, "triangles too small to be a meaningful check");
}

#[test]
fn emissive_pixels_are_exactly_white() {
    let cam = CameraConfig::base_camera(64);
    let p = [Vec3::new(-0.2, -0.1, 0.75), Vec3::new(0.2, -0.1, 0.75), Vec3::new(0.0, 0.2, 0.75)];
    let (img, ids) = render_triangles(&cam, &[white_triangle(p, 2)], &[], &SKY, true);
    for (k, &id) in ids.ids.iter().enumerate() {
        let px = [img.pixels[3 * k], img.pixels[3 * k + 1], img.pixels[3 * k + 2]];
        assert_eq!(px, if id == 2 { [255; 3] } else { [0; 3] });
    }
}

#[test]
fn optical_axis_projects_to_the_image_center() {
    let cfg = RandomizationConfig::default();
    for i in 0..200 {
        let cam = sample_scene(&cfg, derive_seed(9, i)).camera;
        let b = camera_basis(&cam);
        let q = project(&cam, cam.position + b.forward * 0.8).unwrap();
        assert!((q.px - 64.0).abs() <= 0.5 && (q.py - 64.0).abs() <= 0.5);
    }
}

#[test]
fn nearer_triangle_wins_overlap() {
    let cam = CameraSpec {
        position: Vec3::ZERO,
        look_target: Vec3::new(0.0, 1.0, 0.0),
        angle_offset: [0.0; 3],
        up_hint: Vec3::Z,
        fov_y: 1.0,
        image_w: 64,
        image_h: 64,
    };
    let tri = |y: f64, id: u8| {
        let s = y;
        let mut t = white_triangle(
            [Vec3::new(-0.5 * s, y, -0.4 * s), Vec3::new(0.5 * s, y, -0.4 * s), Vec3::new(0.0, y, 0.5 * s)],
            id,
        );
        t.material = Material::Emissive(if id == 2 { Rgb::new(1.0, 0.0, 0.0) } else { Rgb::new(0.0, 0.0, 1.0) });
        t
    };
    let near = tri(0.5, 2);
    let far = tri(1.0, 3);
    for order in [[near, far], [far, near]] {
        let (img, ids) = render_triangles(&cam, &order, &[], &SKY, true);
        // Same angular footprint: the far triangle is fully hidden.
        assert_eq!(ids.count(3), 0);
        assert!(ids.count(2) > 100);
        for (k, &id) in ids.ids.iter().enumerate() {
            if id == 2 {
                assert_eq!(&img.pixels[3 * k..3 * k + 3], &[255, 0, 0]);
            }
        }
    }
}

#[test]
fn empty_scene_is_pure_skybox() {
    let cfg = RandomizationConfig::default();
    let scene = sample_scene(&cfg, 4);
    let cam = scene.camera;
    let (img, ids) = render_triangles(&cam, &[], &scene.lights, &scene.skybox, true);
    assert_eq!(ids.count(IdBuffer::SKY), ids.ids.len());
    let basis = camera_basis(&cam);
    for j in 0..cam.image_h as usize {
        for i in 0..cam.image_w as usize {
            let dir = pixel_ray(&basis, &cam, cam.focal_px(), i as f64 + 0.5, j as f64 + 0.5);
            let (u, v) = sky_uv(dir);
            assert_eq!(img.get(i, j), eval_texture(&scene.skybox, u, v).to_bytes());
        }
    }
}

#[test]
fn submission_order_does_not_matter() {
    let cfg = RandomizationConfig::default();
    let mut rng = stream(2);
    for i in 0..6 {
        let scene = sample_scene(&cfg, derive_seed(5, i));
        let mut tris = scene_triangles(&scene);
        let (a, ia) = render_triangles(&scene.camera, &tris, &scene.lights, &scene.skybox, true);
        tris.shuffle(&mut rng);
        let (b, ib) = render_triangles(&scene.camera, &tris, &scene.lights, &scene.skybox, true);
        assert!(a == b && ia == ib, "scene {i} depends on triangle order");
    }
}

#[test]
fn render_is_deterministic() {
    let scene = sample_scene(&RandomizationConfig::default(), 99);
    assert_eq!(render_with_ids(&scene), render_with_ids(&scene));
}

#[test]
fn closed_form_shading() {
    let n = Vec3::Z;
    let light = LightSpec {
        kind: LightKind::Directional,
        position: Vec3::new(0.0, 0.0, 2.0),
        direction: -Vec3::Z,
        diffuse: 1.0,
        specular: 0.0,
        shininess: 16.0,
    };
    let c = shade(Rgb::gray(0.4), n, Vec3::ZERO, &[light], Vec3::Z);
    for ch in [c.r, c.g, c.b] {
        assert!((ch - 0.5).abs() < 1e-12, "{ch}");
    }
}

#[test]
fn target_is_visible_and_where_the_label_projects() {
    let cfg = RandomizationConfig::default();
    let n = 400;
    let mut visible = 0;
    let mut centroid_checks = 0;
    for i in 0..n {
        let mut scene = sample_scene(&cfg, derive_seed(123, i));
        let tid = IdBuffer::object_id(scene.target_index());
        let ids = render_ids(&scene);
        let count = ids.count(tid);
        if count >= 40 {
            visible += 1;
        }
        scene.objects.retain(|o| o.is_target);
        let alone = render_ids(&scene);
        let tid = IdBuffer::object_id(scene.target_index());
        let on_border = (0..alone.width).any(|k| {
            let last = alone.width - 1;
            [alone.ids[k], alone.ids[last * alone.width + k], alone.ids[k * alone.width], alone.ids[k * alone.width + last]]
                .contains(&tid)
        });
        if alone.count(tid) != count || on_border {
            continue;
        }
        let (cx, cy) = ids.centroid(tid).unwrap();
        let q = project(&scene.camera, scene.label).unwrap();
        let d = ((cx - q.px).powi(2) + (cy - q.py).powi(2)).sqrt();
        assert!(d <= 8.0, "scene {i}: centroid {d:.2} px from projected label");
        centroid_checks += 1;
    }
    assert!(visible as f64 >= 0.99 * n as f64, "only {visible}/{n} scenes show 40+ target pixels");
    assert!(centroid_checks > n / 2);
}

#[test]
fn occluder_hides_part_of_the_target() {
    let cfg = RandomizationConfig::default();
    for i in 0..8 {
        let scene = make_occlusion_scene(&cfg, derive_seed(31, i)).expect("occlusion scene");
        let occ = scene.objects.iter().filter(|o| o.occluder).count();
        assert_eq!(occ, 1);
        let tid = IdBuffer::object_id(scene.target_index());
        let with = render_ids(&scene).count(tid);
        let mut bare = scene.clone();
        bare.objects.retain(|o| !o.occluder);
        let without = render_ids(&bare).count(IdBuffer::object_id(bare.target_index()));
        assert!(without > with, "removing the occluder must reveal target pixels");
        let f = 1.0 - with as f64 / without as f64;
        assert!((0.2..=0.7).contains(&f), "fraction {f}");
        // Deterministic placement.
        assert_eq!(scene, make_occlusion_scene(&cfg, derive_seed(31, i)).unwrap());
    }
}
