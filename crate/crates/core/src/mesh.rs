//! Triangle meshes for the eight geometric primitives and the environment
//! boxes (table slab, floor, robot proxy).

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Tessellation of curved primitives.
pub const CURVED_SEGMENTS: usize = 24;

pub const MIN_SIZE: f64 = 0.03;
pub const MAX_SIZE: f64 = 0.09;

/// One of the eight primitives with its dimensions in meters. Prisms are
/// extruded along +z and every shape rests on a flat face.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeKind {
    Cone { radius: f64, height: f64 },
    Cube { side: f64 },
    Cylinder { radius: f64, height: f64 },
    HexagonalPrism { radius: f64, height: f64 },
    Pyramid { base: f64, height: f64 },
    RectangularPrism { sx: f64, sy: f64, sz: f64 },
    Tetrahedron { edge: f64 },
    TriangularPrism { side: f64, height: f64 },
}

impl Default for ShapeKind {
    fn default() -> Self {
        ShapeKind::Cube { side: 0.06 }
    }
}

impl ShapeKind {
    /// The standard object set at default dimensions.
    pub fn standard_set() -> [ShapeKind; 8] {
        [
            ShapeKind::Cone { radius: 0.035, height: 0.08 },
            ShapeKind::Cube { side: 0.06 },
            ShapeKind::Cylinder { radius: 0.03, height: 0.07 },
            ShapeKind::HexagonalPrism { radius: 0.035, height: 0.055 },
            ShapeKind::Pyramid { base: 0.07, height: 0.07 },
            ShapeKind::RectangularPrism { sx: 0.08, sy: 0.04, sz: 0.05 },
            ShapeKind::Tetrahedron { edge: 0.09 },
            ShapeKind::TriangularPrism { side: 0.07, height: 0.05 },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Cone { .. } => "cone",
            ShapeKind::Cube { .. } => "cube",
            ShapeKind::Cylinder { .. } => "cylinder",
            ShapeKind::HexagonalPrism { .. } => "hexagonal_prism",
            ShapeKind::Pyramid { .. } => "pyramid",
            ShapeKind::RectangularPrism { .. } => "rectangular_prism",
            ShapeKind::Tetrahedron { .. } => "tetrahedron",
            ShapeKind::TriangularPrism { .. } => "triangular_prism",
        }
    }

    /// Default-sized shape by name.
    pub fn from_name(name: &str) -> Option<ShapeKind> {
        Self::standard_set().into_iter().find(|s| s.name() == name)
    }

    pub fn same_kind(&self, other: &ShapeKind) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }

    fn sizes(&self) -> Vec<f64> {
        match *self {
            ShapeKind::Cone { radius, height } => vec![radius, height],
            ShapeKind::Cube { side } => vec![side],
            ShapeKind::Cylinder { radius, height } => vec![radius, height],
            ShapeKind::HexagonalPrism { radius, height } => vec![radius, height],
            ShapeKind::Pyramid { base, height } => vec![base, height],
            ShapeKind::RectangularPrism { sx, sy, sz } => vec![sx, sy, sz],
            ShapeKind::Tetrahedron { edge } => vec![edge],
            ShapeKind::TriangularPrism { side, height } => vec![side, height],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in self.sizes() {
            if !(MIN_SIZE..=MAX_SIZE).contains(&s) {
                return Err(Error::Config(format!(
                    "{} size parameter {s} outside [{MIN_SIZE}, {MAX_SIZE}] m",
                    self.name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Vec<Vec3>,
    pub uvs: Vec<[f64; 2]>,
    pub center_of_mass: Vec3,
}

impl Mesh {
    fn from_raw(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Mesh {
        let mut m = Mesh {
            normals: vec![Vec3::ZERO; vertices.len()],
            uvs: vec![[0.0; 2]; vertices.len()],
            vertices,
            triangles,
            center_of_mass: Vec3::ZERO,
        };
        m.recompute_normals();
        m.cylindrical_uvs();
        m
    }

    pub fn face(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unnormalized face normal, length = twice the area.
    pub fn face_cross(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.face(t);
        (b - a).cross(c - a)
    }

    /// Area-weighted average of adjacent face normals.
    fn recompute_normals(&mut self) {
        let mut acc = vec![Vec3::ZERO; self.vertices.len()];
        for t in 0..self.triangles.len() {
            let n = self.face_cross(t);
            for &i in &self.triangles[t] {
                acc[i as usize] += n;
            }
        }
        self.normals = acc.into_iter().map(|n| n.normalized()).collect();
    }

    fn cylindrical_uvs(&mut self) {
        let (lo, hi) = self.z_range();
        let span = (hi - lo).max(1e-12);
        self.uvs = self
            .vertices
            .iter()
            .map(|p| {
                let u = if p.x == 0.0 && p.y == 0.0 {
                    0.5
                } else {
                    0.5 + p.y.atan2(p.x) / TAU
                };
                [u, (p.z - lo) / span]
            })
            .collect();
    }

    pub fn z_range(&self) -> (f64, f64) {
        self.vertices
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)))
    }

    /// Signed volume and volume centroid by summing tetrahedra against the origin.
    pub fn volume_and_centroid(&self) -> (f64, Vec3) {
        let mut vol = 0.0;
        let mut moment = Vec3::ZERO;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.face(t);
            let v = a.dot(b.cross(c)) / 6.0;
            vol += v;
            moment += (a + b + c) * (v / 4.0);
        }
        (vol, moment / vol)
    }

    fn translate(&mut self, d: Vec3) {
        for v in &mut self.vertices {
            *v += d;
        }
        self.center_of_mass += d;
    }

    /// Radius of the horizontal bounding circle about the local z axis.
    pub fn footprint_radius(&self) -> f64 {
        self.vertices
            .iter()
            .map(|p| (p.x * p.x + p.y * p.y).sqrt())
            .fold(0.0, f64::max)
    }

    /// Convex hull of the vertices projected on the xy plane, counter-clockwise.
    pub fn footprint_hull(&self) -> Vec<[f64; 2]> {
        convex_hull(self.vertices.iter().map(|p| [p.x, p.y]).collect())
    }
}

/// Result of the structural audit of a primitive mesh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeshAudit {
    pub bad_indices: usize,
    /// Undirected edges not shared by exactly two triangles.
    pub open_edges: usize,
    /// Directed edges used twice (inconsistent winding).
    pub misoriented_edges: usize,
    pub inward_faces: usize,
    pub max_normal_error: f64,
    pub com_error: f64,
}

impl MeshAudit {
    pub fn passes(&self) -> bool {
        self.bad_indices == 0
            && self.open_edges == 0
            && self.misoriented_edges == 0
            && self.inward_faces == 0
            && self.max_normal_error < 1e-5
            && self.com_error < 1e-6
    }
}

pub fn audit_mesh(mesh: &Mesh) -> MeshAudit {
    let n = mesh.vertices.len() as u32;
    let mut audit = MeshAudit {
        bad_indices: mesh.triangles.iter().flatten().filter(|&&i| i >= n).count(),
        ..Default::default()
    };
    if audit.bad_indices > 0 {
        return audit;
    }
    let mut undirected: HashMap<(u32, u32), usize> = HashMap::new();
    let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
    for tri in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            *undirected.entry((a.min(b), a.max(b))).or_default() += 1;
            *directed.entry((a, b)).or_default() += 1;
        }
    }
    audit.open_edges = undirected.values().filter(|&&c| c != 2).count();
    audit.misoriented_edges = directed.values().filter(|&&c| c != 1).count();
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.face(t);
        let centroid = (a + b + c) / 3.0;
        if mesh.face_cross(t).dot(centroid - mesh.center_of_mass) <= 0.0 {
            audit.inward_faces += 1;
        }
    }
    audit.max_normal_error = mesh
        .normals
        .iter()
        .map(|v| (v.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    let (_, com) = mesh.volume_and_centroid();
    audit.com_error = (com - mesh.center_of_mass).norm();
    audit
}

/// Closed prism over a counter-clockwise xy profile, z in [0, height].
/// With `cap_center` the caps are fans around an added center vertex.
fn prism(profile: &[[f64; 2]], height: f64, cap_center: bool) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let n = profile.len() as u32;
    let mut verts: Vec<Vec3> = profile.iter().map(|p| Vec3::new(p[0], p[1], 0.0)).collect();
    verts.extend(profile.iter().map(|p| Vec3::new(p[0], p[1], height)));
    let mut tris = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        tris.push([i, j, n + j]);
        tris.push([i, n + j, n + i]);
    }
    if cap_center {
        let cb = verts.len() as u32;
        verts.push(Vec3::new(0.0, 0.0, 0.0));
        let ct = verts.len() as u32;
        verts.push(Vec3::new(0.0, 0.0, height));
        for i in 0..n {
            let j = (i + 1) % n;
            tris.push([cb, j, i]);
            tris.push([ct, n + i, n + j]);
        }
    } else {
        for i in 1..n - 1 {
            tris.push([0, i + 1, i]);
            tris.push([n, n + i, n + i + 1]);
        }
    }
    (verts, tris)
}

/// Solid with a polygonal base at z = 0 and a single apex.
fn apex_solid(base: &[[f64; 2]], height: f64, cap_center: bool) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let n = base.len() as u32;
    let mut verts: Vec<Vec3> = base.iter().map(|p| Vec3::new(p[0], p[1], 0.0)).collect();
    let apex = n;
    verts.push(Vec3::new(0.0, 0.0, height));
    let mut tris = Vec::new();
    for i in 0..n {
        tris.push([i, (i + 1) % n, apex]);
    }
    if cap_center {
        let c = verts.len() as u32;
        verts.push(Vec3::ZERO);
        for i in 0..n {
            tris.push([c, (i + 1) % n, i]);
        }
    } else {
        for i in 1..n - 1 {
            tris.push([0, i + 1, i]);
        }
    }
    (verts, tris)
}

fn regular_polygon(n: usize, radius: f64, phase: f64) -> Vec<[f64; 2]> {
    (0..n)
        .map(|k| {
            let a = phase + TAU * k as f64 / n as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

fn rectangle(sx: f64, sy: f64) -> Vec<[f64; 2]> {
    let (hx, hy) = (0.5 * sx, 0.5 * sy);
    vec![[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]]
}

/// Build the mesh of a primitive with its center of mass at the local origin.
pub fn make_mesh(kind: &ShapeKind) -> Result<Mesh> {
    kind.validate()?;
    let (verts, tris) = match *kind {
        ShapeKind::Cone { radius, height } => {
            apex_solid(&regular_polygon(CURVED_SEGMENTS, radius, 0.0), height, true)
        }
        ShapeKind::Cube { side } => prism(&rectangle(side, side), side, false),
        ShapeKind::Cylinder { radius, height } => {
            prism(&regular_polygon(CURVED_SEGMENTS, radius, 0.0), height, true)
        }
        ShapeKind::HexagonalPrism { radius, height } => prism(&regular_polygon(6, radius, 0.0), height, true),
        ShapeKind::Pyramid { base, height } => apex_solid(&rectangle(base, base), height, false),
        ShapeKind::RectangularPrism { sx, sy, sz } => prism(&rectangle(sx, sy), sz, false),
        ShapeKind::Tetrahedron { edge } => {
            let height = edge * (2.0f64 / 3.0).sqrt();
            apex_solid(&regular_polygon(3, edge / 3f64.sqrt(), PI / 2.0), height, false)
        }
        ShapeKind::TriangularPrism { side, height } => {
            prism(&regular_polygon(3, side / 3f64.sqrt(), PI / 2.0), height, false)
        }
    };
    let mut mesh = Mesh::from_raw(verts, tris);
    let (_, com) = mesh.volume_and_centroid();
    mesh.translate(-com);
    mesh.center_of_mass = Vec3::ZERO;
    Ok(mesh)
}

/// Axis-aligned box from `lo` to `hi` with planar uv over its xy extent.
pub fn make_box(lo: Vec3, hi: Vec3) -> Mesh {
    let (verts, tris) = prism(&rectangle(hi.x - lo.x, hi.y - lo.y), hi.z - lo.z, false);
    let mut mesh = Mesh::from_raw(verts, tris);
    let center = Vec3::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y), lo.z);
    mesh.translate(center);
    mesh.center_of_mass = (lo + hi) * 0.5;
    let (sx, sy) = (hi.x - lo.x, hi.y - lo.y);
    mesh.uvs = mesh
        .vertices
        .iter()
        .map(|p| [(p.x - lo.x) / sx, (p.y - lo.y) / sy])
        .collect();
    mesh
}

/// Andrew's monotone chain. Returns the hull counter-clockwise without repeats.
pub fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-15 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Separating-axis overlap test for two convex polygons.
pub fn convex_polygons_overlap(a: &[[f64; 2]], b: &[[f64; 2]]) -> bool {
    for poly in [a, b] {
        for i in 0..poly.len() {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            let axis = [q[1] - p[1], p[0] - q[0]];
            let proj = |s: &[[f64; 2]]| {
                s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    let d = v[0] * axis[0] + v[1] * axis[1];
                    (lo.min(d), hi.max(d))
                })
            };
            let (alo, ahi) = proj(a);
            let (blo, bhi) = proj(b);
            if ahi < blo || bhi < alo {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Height of the center of mass above the resting face, by closed form.
    fn analytic_com_height(kind: &ShapeKind) -> f64 {
        match *kind {
            ShapeKind::Cone { height, .. } | ShapeKind::Pyramid { height, .. } => height / 4.0,
            ShapeKind::Tetrahedron { edge } => edge * (2.0f64 / 3.0).sqrt() / 4.0,
            ShapeKind::Cube { side } => side / 2.0,
            ShapeKind::Cylinder { height, .. }
            | ShapeKind::HexagonalPrism { height, .. }
            | ShapeKind::TriangularPrism { height, .. } => height / 2.0,
            ShapeKind::RectangularPrism { sz, .. } => sz / 2.0,
        }
    }

    #[test]
    fn all_primitives_pass_audit() {
        for kind in ShapeKind::standard_set() {
            let mesh = make_mesh(&kind).unwrap();
            let audit = audit_mesh(&mesh);
            assert!(audit.passes(), "{}: {audit:?}", kind.name());
            let (lo, _) = mesh.z_range();
            assert!(
                (-lo - analytic_com_height(&kind)).abs() < 1e-9,
                "{} com height {} vs {}",
                kind.name(),
                -lo,
                analytic_com_height(&kind)
            );
        }
    }

    #[test]
    fn cube_topology() {
        let m = make_mesh(&ShapeKind::Cube { side: 0.05 }).unwrap();
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.triangles.len(), 12);
        assert_eq!(m.center_of_mass, Vec3::ZERO);
        assert!(m.volume_and_centroid().1.norm() < 1e-12);
        assert!((m.volume_and_centroid().0 - 0.05f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn cylinder_triangle_count() {
        let m = make_mesh(&ShapeKind::Cylinder { radius: 0.03, height: 0.06 }).unwrap();
        assert_eq!(m.triangles.len(), CURVED_SEGMENTS * 2 + CURVED_SEGMENTS * 2);
        assert_eq!(m.triangles.len(), 96);
    }

    #[test]
    fn tetrahedron_topology() {
        let m = make_mesh(&ShapeKind::Tetrahedron { edge: 0.05 }).unwrap();
        assert_eq!(m.triangles.len(), 4);
        assert_eq!(audit_mesh(&m).open_edges, 0);
        // all six edges have the requested length
        for t in 0..4 {
            let [a, b, c] = m.face(t);
            for (p, q) in [(a, b), (b, c), (c, a)] {
                assert!(((p - q).norm() - 0.05).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_sizes() {
        assert!(make_mesh(&ShapeKind::Cube { side: 0.2 }).is_err());
        assert!(make_mesh(&ShapeKind::Cylinder { radius: 0.01, height: 0.05 }).is_err());
    }

    #[test]
    fn open_mesh_fails_audit() {
        let mut m = make_mesh(&ShapeKind::Cube { side: 0.05 }).unwrap();
        m.triangles.pop();
        assert!(audit_mesh(&m).open_edges > 0);
        let mut flipped = make_mesh(&ShapeKind::Cube { side: 0.05 }).unwrap();
        flipped.triangles[0].swap(1, 2);
        let a = audit_mesh(&flipped);
        assert!(a.inward_faces == 1 && a.misoriented_edges > 0);
    }

    #[test]
    fn names_roundtrip() {
        for k in ShapeKind::standard_set() {
            assert_eq!(ShapeKind::from_name(k.name()), Some(k));
            assert!(k.validate().is_ok());
        }
    }

    #[test]
    fn polygon_overlap() {
        let sq = |cx: f64| vec![[cx - 1.0, -1.0], [cx + 1.0, -1.0], [cx + 1.0, 1.0], [cx - 1.0, 1.0]];
        assert!(convex_polygons_overlap(&sq(0.0), &sq(1.5)));
        assert!(!convex_polygons_overlap(&sq(0.0), &sq(2.5)));
        let hull = convex_hull(vec![[0.0, 0.0], [1.0, 0.0], [0.5, 0.2], [1.0, 1.0], [0.0, 1.0]]);
        assert_eq!(hull.len(), 4);
    }
}
