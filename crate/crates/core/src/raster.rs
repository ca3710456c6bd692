//! Deterministic z-buffered software rasterizer with Blinn-Phong shading.
//!
//! Pixel `(i, j)` is sampled at its center `(i + 0.5, j + 0.5)`. Coverage uses
//! inclusive edge functions on the projected vertices, attributes are
//! interpolated perspective-correctly, and depth ties are broken by a layer
//! rank (environment before objects) so the result does not depend on the
//! order meshes are submitted in.

use std::f64::consts::{PI, TAU};

use crate::camera::{camera_basis, pixel_ray, project_camera_space, view_transform, CameraSpec, NEAR_PLANE};
use crate::geom::Vec3;
use crate::image::{IdBuffer, Image};
use crate::scene::{LightKind, LightSpec, SceneSpec};
use crate::texgen::{eval_texture, Rgb, TextureSpec};

pub const AMBIENT: f64 = 0.25;

/// Surface appearance of a triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Material {
    Textured(TextureSpec),
    /// Unlit constant color.
    Emissive(Rgb),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub p: [Vec3; 3],
    pub uv: [[f64; 2]; 3],
    pub material: Material,
    pub id: u8,
    /// Depth-tie rank; lower wins.
    pub layer: u8,
}

/// Blinn-Phong: fixed ambient plus per-light diffuse and white specular,
/// clamped per channel.
pub fn shade(albedo: Rgb, n: Vec3, p: Vec3, lights: &[LightSpec], view_dir: Vec3) -> Rgb {
    let mut out = albedo.scale(AMBIENT);
    for light in lights {
        let l = match light.kind {
            LightKind::Point => (light.position - p).normalized(),
            LightKind::Directional => -light.direction,
        };
        let ndl = n.dot(l);
        if ndl <= 0.0 {
            continue;
        }
        out = out + albedo.scale(ndl * light.diffuse);
        let h = (l + view_dir).normalized();
        let ndh = n.dot(h).max(0.0);
        out = out + Rgb::gray(ndh.powf(light.shininess) * light.specular);
    }
    out.clamped()
}

/// Map a world-space view direction onto skybox texture coordinates.
pub fn sky_uv(dir: Vec3) -> (f64, f64) {
    (0.5 + dir.y.atan2(dir.x) / TAU, 0.5 + dir.z.clamp(-1.0, 1.0).asin() / PI)
}

#[derive(Clone, Copy)]
struct ClipVert {
    cam: Vec3,
    world: Vec3,
    uv: [f64; 2],
}

impl ClipVert {
    fn lerp(&self, o: &ClipVert, t: f64) -> ClipVert {
        ClipVert {
            cam: self.cam + (o.cam - self.cam) * t,
            world: self.world + (o.world - self.world) * t,
            uv: [
                self.uv[0] + (o.uv[0] - self.uv[0]) * t,
                self.uv[1] + (o.uv[1] - self.uv[1]) * t,
            ],
        }
    }
}

/// Sutherland-Hodgman against the near plane `depth >= limit`.
fn clip_near(poly: &[ClipVert; 3], limit: f64) -> Vec<ClipVert> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = &poly[i];
        let b = &poly[(i + 1) % 3];
        let (da, db) = (-a.cam.z, -b.cam.z);
        let (ina, inb) = (da >= limit, db >= limit);
        if ina {
            out.push(*a);
        }
        if ina != inb {
            out.push(a.lerp(b, (limit - da) / (db - da)));
        }
    }
    out
}

/// Signed edge function of `p` against the directed edge `a -> b`.
#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Framebuffer plus the state needed to rasterize into it.
pub struct Rasterizer<'a> {
    cam: &'a CameraSpec,
    view: crate::camera::RigidTransform,
    focal: f64,
    lights: &'a [LightSpec],
    width: usize,
    height: usize,
    depth: Vec<f64>,
    layer: Vec<u8>,
    color: Vec<Rgb>,
    ids: Vec<u8>,
    shade_color: bool,
}

impl<'a> Rasterizer<'a> {
    pub fn new(cam: &'a CameraSpec, lights: &'a [LightSpec], shade_color: bool) -> Self {
        let (width, height) = (cam.image_w as usize, cam.image_h as usize);
        let n = width * height;
        Rasterizer {
            cam,
            view: view_transform(cam),
            focal: cam.focal_px(),
            lights,
            width,
            height,
            depth: vec![f64::INFINITY; n],
            layer: vec![u8::MAX; n],
            color: vec![Rgb::BLACK; if shade_color { n } else { 0 }],
            ids: vec![IdBuffer::SKY; n],
            shade_color,
        }
    }

    pub fn draw(&mut self, tri: &Triangle) {
        let verts = [0, 1, 2].map(|k| ClipVert {
            cam: self.view.apply(tri.p[k]),
            world: tri.p[k],
            uv: tri.uv[k],
        });
        let limit = NEAR_PLANE * (1.0 + 1e-9);
        if verts.iter().all(|v| -v.cam.z >= limit) {
            self.fill(tri, &verts);
            return;
        }
        let poly = clip_near(&verts, limit);
        for k in 1..poly.len().saturating_sub(1) {
            self.fill(tri, &[poly[0], poly[k], poly[k + 1]]);
        }
    }

    fn fill(&mut self, tri: &Triangle, v: &[ClipVert; 3]) {
        let mut pr = [(0.0, 0.0, 0.0); 3];
        for k in 0..3 {
            match project_camera_space(self.cam, self.focal, v[k].cam) {
                Some(p) => pr[k] = (p.px, p.py, p.depth),
                None => return,
            }
        }
        let [(x0, y0, d0), (x1, y1, d1), (x2, y2, d2)] = pr;
        let area = edge(x0, y0, x1, y1, x2, y2);
        if area == 0.0 || !area.is_finite() {
            return;
        }
        let min_x = x0.min(x1).min(x2);
        let max_x = x0.max(x1).max(x2);
        let min_y = y0.min(y1).min(y2);
        let max_y = y0.max(y1).max(y2);
        let i_lo = (min_x - 0.5).ceil().max(0.0) as usize;
        let j_lo = (min_y - 0.5).ceil().max(0.0) as usize;
        let i_hi = (max_x - 0.5).floor().min(self.width as f64 - 1.0);
        let j_hi = (max_y - 0.5).floor().min(self.height as f64 - 1.0);
        if i_hi < 0.0 || j_hi < 0.0 {
            return;
        }
        let (i_hi, j_hi) = (i_hi as usize, j_hi as usize);
        let (inv0, inv1, inv2) = (1.0 / d0, 1.0 / d1, 1.0 / d2);
        let normal = {
            let n = (tri.p[1] - tri.p[0]).cross(tri.p[2] - tri.p[0]);
            n / n.norm()
        };
        for j in j_lo..=j_hi {
            let py = j as f64 + 0.5;
            for i in i_lo..=i_hi {
                let px = i as f64 + 0.5;
                let e0 = edge(x1, y1, x2, y2, px, py);
                let e1 = edge(x2, y2, x0, y0, px, py);
                let e2 = edge(x0, y0, x1, y1, px, py);
                let inside = if area > 0.0 {
                    e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0
                } else {
                    e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0
                };
                if !inside {
                    continue;
                }
                let (b0, b1, b2) = (e0 / area, e1 / area, e2 / area);
                let (w0, w1, w2) = (b0 * inv0, b1 * inv1, b2 * inv2);
                let wsum = w0 + w1 + w2;
                let depth = 1.0 / wsum;
                let idx = j * self.width + i;
                let cur = self.depth[idx];
                if !(depth < cur || (depth == cur && tri.layer < self.layer[idx])) {
                    continue;
                }
                self.depth[idx] = depth;
                self.layer[idx] = tri.layer;
                self.ids[idx] = tri.id;
                if !self.shade_color {
                    continue;
                }
                let (w0, w1, w2) = (w0 / wsum, w1 / wsum, w2 / wsum);
                self.color[idx] = match tri.material {
                    Material::Emissive(c) => c,
                    Material::Textured(ref tex) => {
                        let u = w0 * v[0].uv[0] + w1 * v[1].uv[0] + w2 * v[2].uv[0];
                        let t = w0 * v[0].uv[1] + w1 * v[1].uv[1] + w2 * v[2].uv[1];
                        let p = v[0].world * w0 + v[1].world * w1 + v[2].world * w2;
                        let albedo = eval_texture(tex, u, t);
                        let view_dir = (self.cam.position - p).normalized();
                        let n = if normal.dot(view_dir) < 0.0 { -normal } else { normal };
                        shade(albedo, n, p, self.lights, view_dir)
                    }
                };
            }
        }
    }

    /// Resolve uncovered pixels against the skybox and quantize.
    pub fn finish(self, sky: &TextureSpec) -> (Image, IdBuffer) {
        let mut img = Image::new(self.width, self.height);
        if self.shade_color {
            let basis = camera_basis(self.cam);
            for j in 0..self.height {
                for i in 0..self.width {
                    let idx = j * self.width + i;
                    let c = if self.depth[idx].is_finite() {
                        self.color[idx]
                    } else {
                        let dir = pixel_ray(&basis, self.cam, self.focal, i as f64 + 0.5, j as f64 + 0.5);
                        let (u, v) = sky_uv(dir);
                        eval_texture(sky, u, v)
                    };
                    img.set(i, j, c.to_bytes());
                }
            }
        }
        let ids = IdBuffer {
            width: self.width,
            height: self.height,
            ids: self.ids,
        };
        (img, ids)
    }
}

/// World-space triangles of every mesh in the scene, environment first.
pub fn scene_triangles(scene: &SceneSpec) -> Vec<Triangle> {
    let mut out = Vec::new();
    for (mesh, texture) in scene.environment_meshes() {
        push_mesh(&mut out, &mesh, |p| p, Material::Textured(texture), IdBuffer::ENVIRONMENT, 0);
    }
    for (k, obj) in scene.objects.iter().enumerate() {
        let mesh = obj.mesh();
        let (s, c) = obj.yaw.sin_cos();
        let pos = obj.position;
        push_mesh(
            &mut out,
            &mesh,
            |p| Vec3::new(c * p.x - s * p.y + pos.x, s * p.x + c * p.y + pos.y, p.z + pos.z),
            Material::Textured(obj.texture),
            IdBuffer::object_id(k),
            1,
        );
    }
    out
}

fn push_mesh(
    out: &mut Vec<Triangle>,
    mesh: &crate::mesh::Mesh,
    to_world: impl Fn(Vec3) -> Vec3,
    material: Material,
    id: u8,
    layer: u8,
) {
    let world: Vec<Vec3> = mesh.vertices.iter().map(|&p| to_world(p)).collect();
    for tri in &mesh.triangles {
        let [a, b, c] = tri.map(|i| i as usize);
        out.push(Triangle {
            p: [world[a], world[b], world[c]],
            uv: [mesh.uvs[a], mesh.uvs[b], mesh.uvs[c]],
            material,
            id,
            layer,
        });
    }
}

pub fn render_triangles(
    cam: &CameraSpec,
    triangles: &[Triangle],
    lights: &[LightSpec],
    sky: &TextureSpec,
    shade_color: bool,
) -> (Image, IdBuffer) {
    let mut r = Rasterizer::new(cam, lights, shade_color);
    for t in triangles {
        r.draw(t);
    }
    r.finish(sky)
}

pub fn render(scene: &SceneSpec) -> Image {
    render_with_ids(scene).0
}

/// Color image plus per-pixel object IDs in one pass.
pub fn render_with_ids(scene: &SceneSpec) -> (Image, IdBuffer) {
    render_triangles(&scene.camera, &scene_triangles(scene), &scene.lights, &scene.skybox, true)
}

/// ID buffer only; skips shading.
pub fn render_ids(scene: &SceneSpec) -> IdBuffer {
    render_triangles(&scene.camera, &scene_triangles(scene), &scene.lights, &scene.skybox, false).1
}
