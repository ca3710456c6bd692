//! Tabletop world composition and the randomized scene sampler.
//!
//! Each randomization axis draws from its own sub-stream of the scene seed,
//! so switching one axis off (distractors, camera, noise) leaves every other
//! field of the sampled scene unchanged.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{sample_camera, CameraRandomization, CameraSpec};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::image::IdBuffer;
use crate::mesh::{convex_polygons_overlap, make_box, make_mesh, Mesh, ShapeKind};
use crate::noise::NoiseSpec;
use crate::raster::render_ids;
use crate::rng::{derive_seed, stream, substream, Stream};
use crate::texgen::{sample_eval_texture, sample_texture, TextureFamily, TextureSpec};

pub const SCENE_SCHEMA_VERSION: u32 = 1;
pub const MAX_DISTRACTORS: u32 = 10;
pub const PLACEMENT_ATTEMPTS: usize = 100;
pub const OCCLUSION_ATTEMPTS: usize = 20;
pub const OCCLUSION_BAND: (f64, f64) = (0.2, 0.7);
/// Center distance of the forced occluder in front of the target, meters.
pub const OCCLUDER_DISTANCE: (f64, f64) = (0.06, 0.10);

// sub-stream purposes
const S_TARGET: u64 = 1;
const S_DISTRACTORS: u64 = 2;
const S_ENV_TEXTURES: u64 = 3;
const S_LIGHTS: u64 = 4;
const S_CAMERA: u64 = 5;
const S_NOISE: u64 = 6;
const S_OCCLUDER: u64 = 7;
const S_OBJ_TEXTURES: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightKind {
    Point,
    Directional,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightSpec {
    pub kind: LightKind,
    pub position: Vec3,
    /// Unit direction the light travels in.
    pub direction: Vec3,
    pub diffuse: f64,
    pub specular: f64,
    pub shininess: f64,
}

impl LightSpec {
    pub fn is_valid(&self) -> bool {
        (self.direction.norm() - 1.0).abs() < 1e-9
            && (0.0..=2.0).contains(&self.diffuse)
            && (0.0..=1.0).contains(&self.specular)
            && (4.0..=128.0).contains(&self.shininess)
    }

    /// Reference light used by the held-out evaluation domain.
    pub fn fixed(table_height: f64) -> LightSpec {
        let position = Vec3::new(0.4, -0.6, table_height + 1.25);
        LightSpec {
            kind: LightKind::Point,
            position,
            direction: (Vec3::new(0.0, 0.0, table_height) - position).normalized(),
            diffuse: 0.7,
            specular: 0.3,
            shininess: 32.0,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, table_height: f64) -> LightSpec {
        let kind = if rng.random::<bool>() {
            LightKind::Point
        } else {
            LightKind::Directional
        };
        let position = Vec3::new(
            rng.random_range(-1.2..1.2),
            rng.random_range(-1.5..0.9),
            table_height + rng.random_range(0.6..1.8),
        );
        let aim = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.2..0.2), table_height);
        LightSpec {
            kind,
            position,
            direction: (aim - position).normalized(),
            diffuse: rng.random_range(0.3..1.0),
            specular: rng.random(),
            shininess: rng.random_range(4.0..128.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectInstance {
    pub shape: ShapeKind,
    /// World-frame center of mass.
    pub position: Vec3,
    pub yaw: f64,
    pub texture: TextureSpec,
    pub is_target: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub occluder: bool,
}

impl ObjectInstance {
    /// Local-frame mesh. Shapes are validated when placed.
    pub fn mesh(&self) -> Mesh {
        make_mesh(&self.shape).expect("placed shapes are validated")
    }

    pub fn footprint_radius(&self) -> f64 {
        self.mesh().footprint_radius()
    }

    /// Convex footprint in world xy.
    pub fn world_footprint(&self) -> Vec<[f64; 2]> {
        let (s, c) = self.yaw.sin_cos();
        self.mesh()
            .footprint_hull()
            .into_iter()
            .map(|[x, y]| [c * x - s * y + self.position.x, s * x + c * y + self.position.y])
            .collect()
    }

    pub fn lowest_z(&self) -> f64 {
        self.mesh().z_range().0 + self.position.z
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    /// Full x/y extents, meters.
    pub extent: [f64; 2],
    pub height: f64,
    pub texture: TextureSpec,
}

/// Complete declarative description of one renderable scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub v: u32,
    pub table: TableSpec,
    pub floor: TextureSpec,
    pub skybox: TextureSpec,
    pub robot_proxy: TextureSpec,
    /// Target first, then distractors.
    pub objects: Vec<ObjectInstance>,
    pub dropped_distractors: u32,
    pub lights: Vec<LightSpec>,
    pub camera: CameraSpec,
    pub noise: NoiseSpec,
    pub label: Vec3,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texturization: Option<u64>,
}

impl SceneSpec {
    pub fn target(&self) -> &ObjectInstance {
        self.objects.iter().find(|o| o.is_target).expect("scene has a target")
    }

    pub fn target_index(&self) -> usize {
        self.objects.iter().position(|o| o.is_target).expect("scene has a target")
    }

    pub fn distractor_count(&self) -> usize {
        self.objects.iter().filter(|o| !o.is_target && !o.occluder).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene serializes")
    }

    /// Texture families of every textured surface.
    pub fn texture_families(&self) -> Vec<TextureFamily> {
        let mut v = vec![
            self.table.texture.family(),
            self.floor.family(),
            self.skybox.family(),
            self.robot_proxy.family(),
        ];
        v.extend(self.objects.iter().map(|o| o.texture.family()));
        v
    }

    /// Table slab, floor and the two-box robot proxy.
    pub fn environment_meshes(&self) -> Vec<(Mesh, TextureSpec)> {
        let [ex, ey] = self.table.extent;
        let (hx, hy, h) = (0.5 * ex, 0.5 * ey, self.table.height);
        let table = make_box(Vec3::new(-hx, -hy, h - 0.04), Vec3::new(hx, hy, h));
        let floor = make_box(Vec3::new(-3.0, -3.0, -0.02), Vec3::new(3.0, 3.0, 0.0));
        let base = make_box(Vec3::new(-0.2, hy + 0.05, 0.0), Vec3::new(0.2, hy + 0.3, h + 0.2));
        let head = make_box(Vec3::new(-0.12, hy + 0.08, h + 0.2), Vec3::new(0.12, hy + 0.26, h + 0.5));
        vec![
            (table, self.table.texture),
            (floor, self.floor),
            (base, self.robot_proxy),
            (head, self.robot_proxy),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureDomain {
    /// Flat, gradient and checker.
    Training,
    /// Stripes and speckle, never seen in training.
    HeldOut,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightingMode {
    Random,
    /// One fixed reference light plus one random light.
    FixedPlusRandom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub target: ShapeKind,
    pub distractors: bool,
    pub min_distractors: u32,
    pub max_distractors: u32,
    pub min_lights: u32,
    pub max_lights: u32,
    pub table_extent: [f64; 2],
    pub table_height: f64,
    /// Half extents of the region the target is placed in, centered on the table.
    pub place_half_extent: [f64; 2],
    pub textures: TextureDomain,
    pub lighting: LightingMode,
    /// Number of unique texturizations, reused cyclically by scene index.
    pub texture_budget: Option<u64>,
    pub texture_seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            target: ShapeKind::default(),
            distractors: true,
            min_distractors: 0,
            max_distractors: MAX_DISTRACTORS,
            min_lights: 1,
            max_lights: 4,
            table_extent: [1.0, 0.7],
            table_height: 0.75,
            place_half_extent: [0.28, 0.18],
            textures: TextureDomain::Training,
            lighting: LightingMode::Random,
            texture_budget: None,
            texture_seed: 0x7E47_0000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Upper bound of the per-image Gaussian std draw.
    pub gaussian_sigma: f64,
    /// Upper bound of the per-image salt-and-pepper probability draw.
    pub salt_pepper_prob: f64,
    /// Fixed multiplicative noise std.
    pub speckle_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            enabled: true,
            gaussian_sigma: 0.02,
            salt_pepper_prob: 0.005,
            speckle_sigma: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub base: CameraSpec,
    pub randomization: CameraRandomization,
}

impl CameraConfig {
    pub fn base_camera(resolution: u32) -> CameraSpec {
        CameraSpec {
            position: Vec3::new(0.0, -0.64, 1.30),
            look_target: Vec3::new(0.0, 0.0, 0.75),
            angle_offset: [0.0; 3],
            up_hint: Vec3::Z,
            fov_y: 0.95,
            image_w: resolution,
            image_h: resolution,
        }
    }
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            base: CameraConfig::base_camera(128),
            randomization: CameraRandomization::default(),
        }
    }
}

/// The ablation switchboard: every randomization axis is independently configurable.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationConfig {
    pub scene: SceneConfig,
    pub camera: CameraConfig,
    pub noise: NoiseConfig,
}

impl RandomizationConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.scene;
        s.target.validate()?;
        if s.min_distractors > s.max_distractors || s.max_distractors > MAX_DISTRACTORS {
            return Err(Error::Config(format!(
                "distractor range {}..={} invalid (max {MAX_DISTRACTORS})",
                s.min_distractors, s.max_distractors
            )));
        }
        if s.min_lights < 1 || s.min_lights > s.max_lights || s.max_lights > 4 {
            return Err(Error::Config("light count range must lie in 1..=4".into()));
        }
        if s.texture_budget == Some(0) {
            return Err(Error::Config("texture budget must be positive".into()));
        }
        let r = make_mesh(&s.target)?.footprint_radius();
        if s.place_half_extent[0] + r > 0.5 * s.table_extent[0] || s.place_half_extent[1] + r > 0.5 * s.table_extent[1] {
            return Err(Error::Config("placeable region exceeds the table".into()));
        }
        if !self.camera.base.is_valid() {
            return Err(Error::Config("invalid base camera".into()));
        }
        let n = &self.noise;
        NoiseSpec {
            gaussian_sigma: n.gaussian_sigma,
            salt_pepper_prob: n.salt_pepper_prob,
            speckle_sigma: n.speckle_sigma,
            seed: 0,
        }
        .validate()
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.camera.base.image_w as usize, self.camera.base.image_h as usize)
    }

    /// Label normalization frame: table-top center and half extents
    /// (z uses a fixed 0.1 m scale).
    pub fn label_frame(&self) -> ([f64; 3], [f64; 3]) {
        let s = &self.scene;
        (
            [0.0, 0.0, s.table_height],
            [0.5 * s.table_extent[0], 0.5 * s.table_extent[1], 0.1],
        )
    }
}

/// One complete assignment of textures and lighting for a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Texturization {
    pub table: TextureSpec,
    pub floor: TextureSpec,
    pub skybox: TextureSpec,
    pub robot: TextureSpec,
    /// One slot per possible object (target plus maximum distractors).
    pub objects: Vec<TextureSpec>,
    pub lights: Vec<LightSpec>,
}

fn draw_texture(domain: TextureDomain, rng: &mut Stream) -> TextureSpec {
    match domain {
        TextureDomain::Training => sample_texture(rng),
        TextureDomain::HeldOut => sample_eval_texture(rng),
    }
}

fn draw_lights(cfg: &SceneConfig, rng: &mut Stream) -> Vec<LightSpec> {
    match cfg.lighting {
        LightingMode::Random => {
            let n = rng.random_range(cfg.min_lights..=cfg.max_lights);
            (0..n).map(|_| LightSpec::random(rng, cfg.table_height)).collect()
        }
        LightingMode::FixedPlusRandom => vec![
            LightSpec::fixed(cfg.table_height),
            LightSpec::random(rng, cfg.table_height),
        ],
    }
}

/// Texturization `index` of the budgeted pool.
pub fn texturization(cfg: &SceneConfig, index: u64) -> Texturization {
    let mut rng = stream(derive_seed(cfg.texture_seed, index));
    let d = cfg.textures;
    Texturization {
        table: draw_texture(d, &mut rng),
        floor: draw_texture(d, &mut rng),
        skybox: draw_texture(d, &mut rng),
        robot: draw_texture(d, &mut rng),
        objects: (0..=MAX_DISTRACTORS).map(|_| draw_texture(d, &mut rng)).collect(),
        lights: draw_lights(cfg, &mut rng),
    }
}

fn sym<R: Rng + ?Sized>(rng: &mut R, half: f64) -> f64 {
    (2.0 * rng.random::<f64>() - 1.0) * half
}

fn place(shape: ShapeKind, x: f64, y: f64, yaw: f64, table_height: f64, texture: TextureSpec) -> ObjectInstance {
    let lo = make_mesh(&shape).expect("validated shape").z_range().0;
    ObjectInstance {
        shape,
        position: Vec3::new(x, y, table_height - lo),
        yaw,
        texture,
        is_target: false,
        occluder: false,
    }
}

fn circles_overlap(a: &ObjectInstance, b: &ObjectInstance) -> bool {
    let d = ((a.position.x - b.position.x).powi(2) + (a.position.y - b.position.y).powi(2)).sqrt();
    d < a.footprint_radius() + b.footprint_radius()
}

/// Sample a training-style scene. Ignores any texture budget.
pub fn sample_scene(cfg: &RandomizationConfig, seed: u64) -> SceneSpec {
    sample_scene_indexed(cfg, seed, None)
}

/// Sample a scene; with a texture budget, `index` selects texturization
/// `index mod budget`.
pub fn sample_scene_indexed(cfg: &RandomizationConfig, seed: u64, index: Option<u64>) -> SceneSpec {
    let sc = &cfg.scene;
    let (hx, hy) = (0.5 * sc.table_extent[0], 0.5 * sc.table_extent[1]);

    let budget = match (sc.texture_budget, index) {
        (Some(b), Some(i)) => Some((i % b, texturization(sc, i % b))),
        _ => None,
    };
    let mut env_rng = substream(seed, S_ENV_TEXTURES);
    let mut obj_tex_rng = substream(seed, S_OBJ_TEXTURES);
    let (table_tex, floor, skybox, robot, mut obj_textures, lights) = match &budget {
        Some((_, t)) => {
            let mut slots = t.objects.clone();
            slots.shuffle(&mut obj_tex_rng);
            (t.table, t.floor, t.skybox, t.robot, slots.into_iter(), t.lights.clone())
        }
        None => {
            let d = sc.textures;
            let env = [0; 4].map(|_| draw_texture(d, &mut env_rng));
            let objs: Vec<TextureSpec> = (0..=MAX_DISTRACTORS).map(|_| draw_texture(d, &mut obj_tex_rng)).collect();
            let lights = draw_lights(sc, &mut substream(seed, S_LIGHTS));
            (env[0], env[1], env[2], env[3], objs.into_iter(), lights)
        }
    };

    let mut trng = substream(seed, S_TARGET);
    let [px, py] = sc.place_half_extent;
    let tx = sym(&mut trng, px);
    let ty = sym(&mut trng, py);
    let tyaw = trng.random::<f64>() * std::f64::consts::TAU;
    let mut target = place(sc.target, tx, ty, tyaw, sc.table_height, obj_textures.next().expect("slot"));
    target.is_target = true;
    let mut objects = vec![target];

    let mut dropped = 0;
    if sc.distractors && sc.max_distractors > 0 {
        let mut drng = substream(seed, S_DISTRACTORS);
        let pool: Vec<ShapeKind> = ShapeKind::standard_set()
            .into_iter()
            .filter(|s| !s.same_kind(&sc.target))
            .collect();
        let count = drng.random_range(sc.min_distractors..=sc.max_distractors);
        for _ in 0..count {
            let shape = pool[drng.random_range(0..pool.len())];
            let texture = obj_textures.next().expect("slot");
            let r = make_mesh(&shape).expect("standard shape").footprint_radius();
            let mut placed = false;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let x = sym(&mut drng, hx - r);
                let y = sym(&mut drng, hy - r);
                let yaw = drng.random::<f64>() * std::f64::consts::TAU;
                let cand = place(shape, x, y, yaw, sc.table_height, texture);
                if objects.iter().all(|o| !circles_overlap(o, &cand)) {
                    objects.push(cand);
                    placed = true;
                    break;
                }
            }
            if !placed {
                dropped += 1;
            }
        }
    }

    let camera = sample_camera(&cfg.camera.base, &mut substream(seed, S_CAMERA), &cfg.camera.randomization);
    let noise = if cfg.noise.enabled {
        let mut nrng = substream(seed, S_NOISE);
        NoiseSpec {
            gaussian_sigma: nrng.random::<f64>() * cfg.noise.gaussian_sigma,
            salt_pepper_prob: nrng.random::<f64>() * cfg.noise.salt_pepper_prob,
            speckle_sigma: cfg.noise.speckle_sigma,
            seed: nrng.random(),
        }
    } else {
        NoiseSpec::none()
    };

    let label = objects[0].position;
    SceneSpec {
        v: SCENE_SCHEMA_VERSION,
        table: TableSpec {
            extent: sc.table_extent,
            height: sc.table_height,
            texture: table_tex,
        },
        floor,
        skybox,
        robot_proxy: robot,
        objects,
        dropped_distractors: dropped,
        lights,
        camera,
        noise,
        label,
        seed,
        texturization: budget.map(|(k, _)| k),
    }
}

/// Fraction of the target's pixels hidden by occluders, measured against
/// the same scene with the occluders removed. `None` when the target is not
/// visible even without occluders.
pub fn occlusion_fraction(scene: &SceneSpec) -> Option<f64> {
    let target_id = IdBuffer::object_id(scene.target_index());
    let with = render_ids(scene).count(target_id);
    let mut bare = scene.clone();
    bare.objects.retain(|o| !o.occluder);
    let alone = render_ids(&bare).count(IdBuffer::object_id(bare.target_index()));
    (alone > 0).then(|| 1.0 - with as f64 / alone as f64)
}

/// Like [`sample_scene`] but with one extra distractor forced onto the
/// camera-to-target ground ray so that it partially occludes the target.
pub fn make_occlusion_scene(cfg: &RandomizationConfig, seed: u64) -> Result<SceneSpec> {
    let sc = &cfg.scene;
    let (hx, hy) = (0.5 * sc.table_extent[0], 0.5 * sc.table_extent[1]);
    let pool: Vec<ShapeKind> = ShapeKind::standard_set()
        .into_iter()
        .filter(|s| !s.same_kind(&sc.target))
        .collect();
    for attempt in 0..OCCLUSION_ATTEMPTS as u64 {
        let s = derive_seed(seed, attempt);
        let mut scene = sample_scene(cfg, s);
        let mut rng = substream(s, S_OCCLUDER);
        let target = *scene.target();
        let to_cam = Vec3::new(
            scene.camera.position.x - target.position.x,
            scene.camera.position.y - target.position.y,
            0.0,
        )
        .normalized();
        let side = Vec3::new(-to_cam.y, to_cam.x, 0.0);
        let shape = pool[rng.random_range(0..pool.len())];
        let dist = rng.random_range(OCCLUDER_DISTANCE.0..=OCCLUDER_DISTANCE.1);
        let lateral = sym(&mut rng, 0.015);
        let yaw = rng.random::<f64>() * std::f64::consts::TAU;
        let texture = draw_texture(sc.textures, &mut rng);
        let at = target.position + to_cam * dist + side * lateral;
        let mut occ = place(shape, at.x, at.y, yaw, sc.table_height, texture);
        occ.occluder = true;
        let r = occ.footprint_radius();
        if at.x.abs() + r > hx || at.y.abs() + r > hy {
            continue;
        }
        if convex_polygons_overlap(&occ.world_footprint(), &target.world_footprint()) {
            continue;
        }
        let before = scene.objects.len();
        scene.objects.retain(|o| o.is_target || !circles_overlap(o, &occ));
        scene.dropped_distractors += (before - scene.objects.len()) as u32;
        scene.objects.push(occ);
        if let Some(f) = occlusion_fraction(&scene) {
            if (OCCLUSION_BAND.0..=OCCLUSION_BAND.1).contains(&f) {
                return Ok(scene);
            }
        }
    }
    Err(Error::Occlusion {
        attempts: OCCLUSION_ATTEMPTS,
    })
}

/// Machine-checkable scene invariants. Empty `problems` means the scene passes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SceneAudit {
    pub problems: Vec<String>,
}

impl SceneAudit {
    pub fn passes(&self) -> bool {
        self.problems.is_empty()
    }
}

pub fn audit_scene(scene: &SceneSpec) -> SceneAudit {
    let mut p = Vec::new();
    let targets = scene.objects.iter().filter(|o| o.is_target).count();
    if targets != 1 {
        p.push(format!("{targets} targets"));
    }
    if scene.distractor_count() > MAX_DISTRACTORS as usize {
        p.push(format!("{} distractors", scene.distractor_count()));
    }
    if !(1..=4).contains(&scene.lights.len()) {
        p.push(format!("{} lights", scene.lights.len()));
    }
    if scene.lights.iter().any(|l| !l.is_valid()) {
        p.push("invalid light".into());
    }
    if !scene.camera.is_valid() {
        p.push("invalid camera".into());
    }
    if scene.noise.validate().is_err() {
        p.push("invalid noise".into());
    }
    let (hx, hy) = (0.5 * scene.table.extent[0], 0.5 * scene.table.extent[1]);
    for (i, o) in scene.objects.iter().enumerate() {
        if o.shape.validate().is_err() {
            p.push(format!("object {i}: invalid shape"));
            continue;
        }
        if (o.lowest_z() - scene.table.height).abs() > 1e-6 {
            p.push(format!("object {i}: not resting on table"));
        }
        let r = o.footprint_radius();
        if o.position.x.abs() + r > hx + 1e-12 || o.position.y.abs() + r > hy + 1e-12 {
            p.push(format!("object {i}: footprint leaves table"));
        }
        if !o.texture.is_valid() {
            p.push(format!("object {i}: invalid texture"));
        }
        for (j, q) in scene.objects.iter().enumerate().skip(i + 1) {
            let exempt = (o.occluder && q.is_target) || (q.occluder && o.is_target);
            let clash = if exempt {
                convex_polygons_overlap(&o.world_footprint(), &q.world_footprint())
            } else {
                circles_overlap(o, q)
            };
            if clash {
                p.push(format!("objects {i} and {j} overlap"));
            }
        }
    }
    if targets == 1 {
        let t = scene.target();
        if scene.label != t.position {
            p.push("label is not the target center of mass".into());
        }
        let com_height = -t.mesh().z_range().0;
        if (scene.label.z - (scene.table.height + com_height)).abs() > 1e-9 {
            p.push("label height inconsistent with table".into());
        }
    }
    for t in [scene.table.texture, scene.floor, scene.skybox, scene.robot_proxy] {
        if !t.is_valid() {
            p.push("invalid environment texture".into());
        }
    }
    SceneAudit { problems: p }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_distractors_means_single_object() {
        let mut cfg = RandomizationConfig::default();
        cfg.scene.max_distractors = 0;
        for seed in 0..50 {
            let s = sample_scene(&cfg, seed);
            assert_eq!(s.objects.len(), 1);
            assert!(audit_scene(&s).passes());
        }
    }

    #[test]
    fn serialization_is_deterministic() {
        let cfg = RandomizationConfig::default();
        let a = sample_scene(&cfg, 1234).to_json();
        let b = sample_scene(&cfg, 1234).to_json();
        assert_eq!(a, b);
        assert!(a.starts_with(r#"{"v":1,"#));
        let back: SceneSpec = serde_json::from_str(&a).unwrap();
        assert_eq!(back.to_json(), a);
    }

    #[test]
    fn sampled_scenes_pass_audit() {
        let cfg = RandomizationConfig::default();
        for seed in 0..200 {
            let s = sample_scene(&cfg, seed);
            let a = audit_scene(&s);
            assert!(a.passes(), "seed {seed}: {:?}", a.problems);
            assert!(!s.texture_families().iter().any(|f| f.is_eval_only()));
            assert!(s.objects[1..].iter().all(|o| !o.shape.same_kind(&cfg.scene.target)));
        }
    }

    #[test]
    fn axis_independence() {
        let full = RandomizationConfig::default();
        let mut off = full.clone();
        off.scene.distractors = false;
        off.noise.enabled = false;
        for seed in 0..40 {
            let a = sample_scene(&full, seed);
            let b = sample_scene(&off, seed);
            let mut a2 = a.clone();
            a2.objects.truncate(1);
            a2.dropped_distractors = 0;
            a2.noise = NoiseSpec::none();
            assert_eq!(a2, b, "seed {seed}");
        }
        let mut nocam = full.clone();
        nocam.camera.randomization.enabled = false;
        let a = sample_scene(&full, 5);
        let mut b = sample_scene(&nocam, 5);
        assert_eq!(b.camera, full.camera.base);
        b.camera = a.camera;
        assert_eq!(a, b);
    }

    #[test]
    fn held_out_domain_uses_eval_families_only() {
        let mut cfg = RandomizationConfig::default();
        cfg.scene.textures = TextureDomain::HeldOut;
        cfg.scene.lighting = LightingMode::FixedPlusRandom;
        for seed in 0..30 {
            let s = sample_scene(&cfg, seed);
            assert!(s.texture_families().iter().all(|f| f.is_eval_only()));
            assert_eq!(s.lights.len(), 2);
            assert_eq!(s.lights[0], LightSpec::fixed(cfg.scene.table_height));
        }
    }

    #[test]
    fn budget_cycles_texturizations() {
        let mut cfg = RandomizationConfig::default();
        cfg.scene.texture_budget = Some(3);
        let a = sample_scene_indexed(&cfg, 10, Some(1));
        let b = sample_scene_indexed(&cfg, 99, Some(4));
        assert_eq!(a.texturization, Some(1));
        assert_eq!(b.texturization, Some(1));
        assert_eq!(a.table, b.table);
        assert_eq!(a.floor, b.floor);
        assert_eq!(a.lights, b.lights);
        let pool = texturization(&cfg.scene, 1).objects;
        assert!(pool.contains(&a.target().texture) && pool.contains(&b.target().texture));
    }

    #[test]
    fn occlusion_scene_in_band() {
        let cfg = RandomizationConfig::default();
        for seed in 0..8 {
            let s = make_occlusion_scene(&cfg, seed).expect("occlusion scene");
            let f = occlusion_fraction(&s).unwrap();
            assert!((0.2..=0.7).contains(&f), "{f}");
            assert!(audit_scene(&s).passes(), "{:?}", audit_scene(&s).problems);
            assert_eq!(s.objects.iter().filter(|o| o.occluder).count(), 1);
            assert_eq!(s, make_occlusion_scene(&cfg, seed).unwrap());
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = RandomizationConfig::default();
        cfg.scene.max_distractors = 11;
        assert!(cfg.validate().is_err());
        let mut cfg = RandomizationConfig::default();
        cfg.scene.place_half_extent = [0.49, 0.1];
        assert!(cfg.validate().is_err());
        assert!(RandomizationConfig::default().validate().is_ok());
    }
}
