//! Simulated block world: cuboid poses, pinhole projection, occlusion
//! reasoning, convex hulls, ground-truth relationships, and randomized
//! scene generation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_EDGE: f64 = 0.05;
pub const IMAGE_SIZE: (u32, u32) = (400, 400);

/// Named cube colors, indexed by `color_id`.
pub const PALETTE: [&str; 7] = ["red", "green", "blue", "yellow", "cyan", "magenta", "orange"];

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("cuboid {0} is behind the camera")]
    BehindCamera(usize),
    #[error("degenerate hull: {0}")]
    DegenerateHull(&'static str),
    #[error("invalid scene generation config: {0}")]
    ConfigError(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

// ---------------------------------------------------------------------------
// small vector helpers

pub type Vec3 = [f64; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    scale(a, 1.0 / n)
}

/// Row-major 3x3 matrix.
pub type Mat3 = [[f64; 3]; 3];

pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

pub fn mat_transpose_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

fn rot_z(yaw: f64) -> Mat3 {
    let (s, c) = yaw.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

// ---------------------------------------------------------------------------
// domain types

/// One cube: position of its center, rotation about the vertical axis,
/// side length, and a palette color index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuboidPose {
    pub center: Vec3,
    pub yaw: f64,
    pub edge: f64,
    pub color_id: usize,
}

impl CuboidPose {
    pub fn new(center: Vec3, yaw: f64, color_id: usize) -> Self {
        CuboidPose { center, yaw, edge: DEFAULT_EDGE, color_id }
    }

    /// Corners in canonical binary order of object-frame signs:
    /// index bit 2 = x sign, bit 1 = y sign, bit 0 = z sign (0 = minus).
    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.edge / 2.0;
        let r = rot_z(self.yaw);
        let mut out = [[0.0; 3]; 8];
        for (i, corner) in out.iter_mut().enumerate() {
            let s = [
                if i & 4 != 0 { h } else { -h },
                if i & 2 != 0 { h } else { -h },
                if i & 1 != 0 { h } else { -h },
            ];
            *corner = add(self.center, mat_vec(&r, s));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub cuboids: Vec<CuboidPose>,
}

impl Scene {
    pub fn n(&self) -> usize {
        self.cuboids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// (fx, fy) in pixels.
    pub focal: (f64, f64),
    /// (cx, cy) in pixels.
    pub principal: (f64, f64),
    /// World-to-camera rotation, orthonormal.
    pub rotation: Mat3,
    /// World-to-camera translation in meters: X_cam = R X_world + t.
    pub translation: Vec3,
    pub image_size: (u32, u32),
}

impl CameraModel {
    /// Default intrinsics for the 400x400 frame.
    pub fn default_intrinsics(rotation: Mat3, translation: Vec3) -> Self {
        CameraModel {
            focal: (400.0, 400.0),
            principal: (200.0, 200.0),
            rotation,
            translation,
            image_size: IMAGE_SIZE,
        }
    }

    /// Camera at `eye` looking at `target`, image y pointing down-ish
    /// (world +z maps to image up).
    pub fn look_at(eye: Vec3, target: Vec3) -> Self {
        let fwd = normalize(sub(target, eye));
        // right = fwd x up_world, down = fwd x right
        let mut right = cross(fwd, [0.0, 0.0, 1.0]);
        if norm(right) < 1e-9 {
            right = [1.0, 0.0, 0.0];
        }
        let right = normalize(right);
        let down = cross(fwd, right);
        let rotation = [right, down, fwd];
        let translation = scale(mat_vec(&rotation, eye), -1.0);
        CameraModel::default_intrinsics(rotation, translation)
    }

    pub fn position(&self) -> Vec3 {
        scale(mat_transpose_vec(&self.rotation, self.translation), -1.0)
    }

    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        add(mat_vec(&self.rotation, p), self.translation)
    }

    pub fn project_point(&self, p: Vec3) -> Option<(f64, f64)> {
        let c = self.to_camera(p);
        if c[2] <= 1e-9 {
            return None;
        }
        Some((
            self.focal.0 * c[0] / c[2] + self.principal.0,
            self.focal.1 * c[1] / c[2] + self.principal.1,
        ))
    }
}

/// The perception unit: 8 image-space vertices of one cuboid, the one
/// self-occluded vertex, per-vertex occlusion-by-other flags, and the
/// pixel area of the projected convex hull.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedCuboid {
    pub vertices: [(f64, f64); 8],
    pub hidden_index: usize,
    pub occluded_by_other: [bool; 8],
    pub hull_area: f64,
}

impl ProjectedCuboid {
    /// The 7 non-hidden vertices in canonical order (hidden one skipped).
    pub fn visible_vertices(&self) -> Vec<(f64, f64)> {
        (0..8)
            .filter(|&i| i != self.hidden_index)
            .map(|i| self.vertices[i])
            .collect()
    }
}

// ---------------------------------------------------------------------------
// convex hull

/// Monotone-chain convex hull, counter-clockwise, no duplicate endpoint.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let crossp = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && crossp(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && crossp(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let mut a = 0.0;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        a += x0 * y1 - x1 * y0;
    }
    a.abs() / 2.0
}

/// Area in pixels^2 of the convex hull of `points`.
pub fn convex_hull_area(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(GeometryError::DegenerateHull("fewer than 3 points"));
    }
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return Err(GeometryError::DegenerateHull("collinear points"));
    }
    let a = polygon_area(&hull);
    if a <= 1e-12 {
        return Err(GeometryError::DegenerateHull("zero-area hull"));
    }
    Ok(a)
}

/// Point-in-convex-polygon test; `poly` counter-clockwise.
pub fn point_in_convex(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        if (x1 - x0) * (p.1 - y0) - (y1 - y0) * (p.0 - x0) < -1e-9 {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// projection

/// Project cuboid `index` of `scene` through `camera`.
pub fn project_cuboid(scene: &Scene, camera: &CameraModel, index: usize) -> Result<ProjectedCuboid> {
    let cub = &scene.cuboids[index];
    let corners = cub.corners();
    let mut vertices = [(0.0, 0.0); 8];
    let mut depths = [0.0f64; 8];
    for (i, &c) in corners.iter().enumerate() {
        let cc = camera.to_camera(c);
        if cc[2] <= 1e-9 {
            return Err(GeometryError::BehindCamera(index));
        }
        depths[i] = cc[2];
        vertices[i] = camera.project_point(c).ok_or(GeometryError::BehindCamera(index))?;
    }

    // The six faces in object frame: normal axis (0=x,1=y,2=z) and sign.
    let cam_pos = camera.position();
    let r = rot_z(cub.yaw);
    let mut face_back = [[false; 2]; 3]; // [axis][sign: 0=minus, 1=plus]
    for axis in 0..3 {
        for (si, sgn) in [-1.0f64, 1.0].iter().enumerate() {
            let mut n_obj = [0.0; 3];
            n_obj[axis] = *sgn;
            let n_world = mat_vec(&r, n_obj);
            let face_center = add(cub.center, scale(n_world, cub.edge / 2.0));
            face_back[axis][si] = dot(n_world, sub(face_center, cam_pos)) > 1e-12;
        }
    }

    // Hidden vertex: all three incident faces back-facing; tie-break by
    // greatest camera depth (also the fallback for degenerate alignments).
    let incident_back = |i: usize| {
        let sx = (i >> 2) & 1;
        let sy = (i >> 1) & 1;
        let sz = i & 1;
        face_back[0][sx] && face_back[1][sy] && face_back[2][sz]
    };
    let hidden_index = (0..8)
        .filter(|&i| incident_back(i))
        .max_by(|&a, &b| depths[a].partial_cmp(&depths[b]).unwrap())
        .unwrap_or_else(|| {
            (0..8)
                .max_by(|&a, &b| depths[a].partial_cmp(&depths[b]).unwrap())
                .unwrap()
        });

    let hull_area = convex_hull_area(&vertices)?;

    // Occlusion by other cuboids: vertex inside the other's projected hull
    // and that cuboid nearer along the view ray.
    let mut occluded_by_other = [false; 8];
    for (j, other) in scene.cuboids.iter().enumerate() {
        if j == index {
            continue;
        }
        let other_depth = camera.to_camera(other.center)[2];
        if other_depth <= 1e-9 {
            continue;
        }
        let other_pts: Vec<(f64, f64)> = other
            .corners()
            .iter()
            .filter_map(|&c| camera.project_point(c))
            .collect();
        if other_pts.len() < 8 {
            continue;
        }
        let hull = convex_hull(&other_pts);
        for i in 0..8 {
            if !occluded_by_other[i] && other_depth < depths[i] && point_in_convex(vertices[i], &hull) {
                occluded_by_other[i] = true;
            }
        }
    }

    Ok(ProjectedCuboid { vertices, hidden_index, occluded_by_other, hull_area })
}

// ---------------------------------------------------------------------------
// ground-truth relationships

/// Binary pairwise relations of a scene, diagonal unused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryRelations {
    pub n: usize,
    pub above: Vec<Vec<bool>>,
    pub left: Vec<Vec<bool>>,
}

impl BinaryRelations {
    pub fn empty(n: usize) -> Self {
        BinaryRelations { n, above: vec![vec![false; n]; n], left: vec![vec![false; n]; n] }
    }

    pub fn count_above(&self) -> usize {
        self.above.iter().flatten().filter(|&&b| b).count()
    }

    pub fn count_left(&self) -> usize {
        self.left.iter().flatten().filter(|&&b| b).count()
    }
}

/// Footprint of a cube on the table plane as a convex polygon.
fn footprint(c: &CuboidPose) -> Vec<(f64, f64)> {
    let h = c.edge / 2.0;
    let r = rot_z(c.yaw);
    [(-h, -h), (h, -h), (h, h), (-h, h)]
        .iter()
        .map(|&(x, y)| {
            let w = mat_vec(&r, [x, y, 0.0]);
            (c.center[0] + w[0], c.center[1] + w[1])
        })
        .collect()
}

/// Sutherland-Hodgman clip of convex `subject` against convex CCW `clip`.
fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut output = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let input = output;
        output = Vec::new();
        let inside = |p: (f64, f64)| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= -1e-12;
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in != prev_in {
                // segment crosses the clip edge
                let dx = cur.0 - prev.0;
                let dy = cur.1 - prev.1;
                let denom = (b.0 - a.0) * dy - (b.1 - a.1) * dx;
                if denom.abs() > 1e-15 {
                    let t = ((b.0 - a.0) * (a.1 - prev.1) - (b.1 - a.1) * (a.0 - prev.0)) / -denom;
                    output.push((prev.0 + t * dx, prev.1 + t * dy));
                }
            }
            if cur_in {
                output.push(cur);
            }
        }
        if output.is_empty() {
            return output;
        }
    }
    output
}

fn footprint_overlap_area(a: &CuboidPose, b: &CuboidPose) -> f64 {
    let fa = footprint(a);
    let fb = footprint(b);
    let clipped = clip_convex(&fa, &fb);
    if clipped.len() < 3 {
        0.0
    } else {
        polygon_area(&clipped)
    }
}

/// Geometric oracle for pairwise relations.
///
/// Above(i,j): i's bottom face rests on j's top face (vertical gap <= 0.1
/// edge, footprint overlap >= 0.25 of the face area). Left(i,j): same
/// resting height (center-z within 0.1 edge), i's +x face contacts j within
/// 0.5 edge, i at smaller table x.
pub fn ground_truth_relations(scene: &Scene) -> BinaryRelations {
    let n = scene.n();
    let mut rel = BinaryRelations::empty(n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let a = &scene.cuboids[i];
            let b = &scene.cuboids[j];
            let e = a.edge.max(b.edge);
            let gap = (a.center[2] - a.edge / 2.0) - (b.center[2] + b.edge / 2.0);
            if gap.abs() <= 0.1 * e && footprint_overlap_area(a, b) >= 0.25 * e * e {
                rel.above[i][j] = true;
                continue;
            }
            let dz = (a.center[2] - b.center[2]).abs();
            let dx = b.center[0] - a.center[0];
            let dy = (a.center[1] - b.center[1]).abs();
            if dz <= 0.1 * e && dx > 0.0 && (dx - e).abs() <= 0.5 * e && dy <= 0.5 * e {
                rel.left[i][j] = true;
            }
        }
    }
    rel
}

// ---------------------------------------------------------------------------
// randomized scene generation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Flat,
    Stack,
    Pyramid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneGenConfig {
    pub n_min: usize,
    pub n_max: usize,
    /// Relative weights for flat / stack / pyramid structure choices.
    pub structure_weights: [f64; 3],
    /// Camera elevation range in radians above the table plane.
    pub elevation_range: (f64, f64),
    pub azimuth_range: (f64, f64),
    pub distance_range: (f64, f64),
    pub edge: f64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            n_min: 2,
            n_max: 4,
            structure_weights: [1.0, 1.0, 1.0],
            elevation_range: (0.35, 1.1),
            azimuth_range: (0.1, std::f64::consts::TAU - 0.1),
            distance_range: (0.7, 1.1),
            edge: DEFAULT_EDGE,
        }
    }
}

impl SceneGenConfig {
    pub fn only(kind: StructureKind, n: usize) -> Self {
        let mut w = [0.0; 3];
        w[kind as usize] = 1.0;
        SceneGenConfig { n_min: n, n_max: n, structure_weights: w, ..Default::default() }
    }
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64; 3]) -> StructureKind {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        x -= w;
        if x <= 0.0 && w > 0.0 {
            return match i {
                0 => StructureKind::Flat,
                1 => StructureKind::Stack,
                _ => StructureKind::Pyramid,
            };
        }
    }
    StructureKind::Flat
}

/// Deterministic randomized scene + camera for a seed.
///
/// Structures are exact (zero contact gaps); observation noise belongs to
/// the relationship module's augmentations.
pub fn randomize_scene(seed: u64, config: &SceneGenConfig) -> Result<(Scene, CameraModel)> {
    if config.n_min < 1 || config.n_max < config.n_min {
        return Err(GeometryError::ConfigError("bad n range".into()));
    }
    if config.n_max > PALETTE.len() {
        return Err(GeometryError::ConfigError(format!(
            "n_max {} exceeds palette size {}",
            config.n_max,
            PALETTE.len()
        )));
    }
    if config.structure_weights.iter().sum::<f64>() <= 0.0 {
        return Err(GeometryError::ConfigError("all structure weights zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(config.n_min..=config.n_max);
    let kind = pick_weighted(&mut rng, &config.structure_weights);
    let e = config.edge;

    let mut kind = kind;
    if kind == StructureKind::Pyramid && n < 3 {
        kind = StructureKind::Stack;
    }

    // Distinct color assignment.
    let mut colors: Vec<usize> = (0..PALETTE.len()).collect();
    for i in (1..colors.len()).rev() {
        let j = rng.random_range(0..=i);
        colors.swap(i, j);
    }
    colors.truncate(n);

    // Free table slots on a coarse grid, jittered, to avoid overlap.
    let mut slots: Vec<(f64, f64)> = Vec::new();
    for gx in -2i32..=2 {
        for gy in -2i32..=2 {
            slots.push((gx as f64 * 3.0 * e, gy as f64 * 3.0 * e));
        }
    }
    for i in (1..slots.len()).rev() {
        let j = rng.random_range(0..=i);
        slots.swap(i, j);
    }

    let mut cuboids: Vec<CuboidPose> = Vec::new();
    let mut slot_iter = slots.into_iter();
    let place_flat = |cuboids: &mut Vec<CuboidPose>, color: usize, rng: &mut ChaCha8Rng, it: &mut dyn Iterator<Item = (f64, f64)>| {
        let (x, y) = it.next().expect("enough slots");
        let jx = (rng.random::<f64>() - 0.5) * e;
        let jy = (rng.random::<f64>() - 0.5) * e;
        cuboids.push(CuboidPose {
            center: [x + jx, y + jy, e / 2.0],
            yaw: 0.0,
            edge: e,
            color_id: color,
        });
    };

    match kind {
        StructureKind::Flat => {
            for &c in &colors {
                place_flat(&mut cuboids, c, &mut rng, &mut slot_iter);
            }
        }
        StructureKind::Stack => {
            let (x, y) = slot_iter.next().unwrap();
            for (level, &c) in colors.iter().enumerate() {
                cuboids.push(CuboidPose {
                    center: [x, y, e / 2.0 + level as f64 * e],
                    yaw: 0.0,
                    edge: e,
                    color_id: c,
                });
            }
        }
        StructureKind::Pyramid => {
            let (x, y) = slot_iter.next().unwrap();
            // two supports side by side, top straddling them
            cuboids.push(CuboidPose { center: [x, y, e / 2.0], yaw: 0.0, edge: e, color_id: colors[0] });
            cuboids.push(CuboidPose { center: [x + e, y, e / 2.0], yaw: 0.0, edge: e, color_id: colors[1] });
            cuboids.push(CuboidPose { center: [x + e / 2.0, y, e * 1.5], yaw: 0.0, edge: e, color_id: colors[2] });
            for &c in colors.iter().skip(3) {
                place_flat(&mut cuboids, c, &mut rng, &mut slot_iter);
            }
        }
    }

    let scene = Scene { cuboids };

    // Camera pose: retry until every cuboid vertex lands inside the frame.
    for _ in 0..64 {
        let elev = rng.random_range(config.elevation_range.0..config.elevation_range.1);
        let azim = rng.random_range(config.azimuth_range.0..config.azimuth_range.1);
        let dist = rng.random_range(config.distance_range.0..config.distance_range.1);
        let eye = [
            dist * elev.cos() * azim.cos(),
            dist * elev.cos() * azim.sin(),
            dist * elev.sin(),
        ];
        let camera = CameraModel::look_at(eye, [0.0, 0.0, e]);
        let (w, h) = (camera.image_size.0 as f64, camera.image_size.1 as f64);
        let margin = 10.0;
        let all_in = scene.cuboids.iter().all(|c| {
            c.corners().iter().all(|&p| match camera.project_point(p) {
                Some((u, v)) => u > margin && u < w - margin && v > margin && v < h - margin,
                None => false,
            })
        });
        if all_in {
            return Ok((scene, camera));
        }
    }
    Err(GeometryError::ConfigError(
        "could not find a camera pose framing the scene".into(),
    ))
}

// ---------------------------------------------------------------------------
// scene file format

/// On-disk scene file: version, global edge, palette, cuboids, camera.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SceneFile {
    pub version: u32,
    pub edge_meters: f64,
    pub palette: Vec<String>,
    pub cuboids: Vec<SceneFileCuboid>,
    pub camera: SceneFileCamera,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SceneFileCuboid {
    pub color_id: usize,
    pub center: Vec3,
    pub yaw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SceneFileCamera {
    pub focal: (f64, f64),
    pub principal: (f64, f64),
    /// Row-major 9 numbers.
    pub rotation: Vec<f64>,
    pub translation: Vec3,
    pub image_size: (u32, u32),
}

pub const SCENE_FILE_VERSION: u32 = 1;

impl SceneFile {
    pub fn from_scene(scene: &Scene, camera: &CameraModel) -> Self {
        let edge = scene.cuboids.first().map(|c| c.edge).unwrap_or(DEFAULT_EDGE);
        SceneFile {
            version: SCENE_FILE_VERSION,
            edge_meters: edge,
            palette: PALETTE.iter().map(|s| s.to_string()).collect(),
            cuboids: scene
                .cuboids
                .iter()
                .map(|c| SceneFileCuboid { color_id: c.color_id, center: c.center, yaw: c.yaw })
                .collect(),
            camera: SceneFileCamera {
                focal: camera.focal,
                principal: camera.principal,
                rotation: camera.rotation.iter().flatten().copied().collect(),
                translation: camera.translation,
                image_size: camera.image_size,
            },
        }
    }

    pub fn into_scene(&self) -> (Scene, CameraModel) {
        let cuboids = self
            .cuboids
            .iter()
            .map(|c| CuboidPose { center: c.center, yaw: c.yaw, edge: self.edge_meters, color_id: c.color_id })
            .collect();
        let r = &self.camera.rotation;
        let rotation = [
            [r[0], r[1], r[2]],
            [r[3], r[4], r[5]],
            [r[6], r[7], r[8]],
        ];
        (
            Scene { cuboids },
            CameraModel {
                focal: self.camera.focal,
                principal: self.camera.principal,
                rotation,
                translation: self.camera.translation,
                image_size: self.camera.image_size,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn frontal_camera() -> CameraModel {
        // camera at world y = -1 looking along +y; world z up maps to image -v
        CameraModel::look_at([0.0, -1.0, 0.0], [0.0, 0.0, 0.0])
    }

    #[test]
    fn hull_area_unit_square() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        assert_relative_eq!(convex_hull_area(&pts).unwrap(), 1.0);
    }

    #[test]
    fn hull_area_ignores_interior_point() {
        let pts = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0), (5.0, 5.0)];
        assert_relative_eq!(convex_hull_area(&pts).unwrap(), 100.0);
    }

    #[test]
    fn hull_area_triangle() {
        let pts = [(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)];
        assert_relative_eq!(convex_hull_area(&pts).unwrap(), 6.0);
    }

    #[test]
    fn hull_degenerate_inputs() {
        assert!(convex_hull_area(&[(0.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(convex_hull_area(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).is_err());
    }

    #[test]
    fn axis_aligned_cube_front_face_projection() {
        // cube center 1 m in front of the camera on the optical axis
        let camera = frontal_camera();
        let scene = Scene {
            cuboids: vec![CuboidPose::new([0.0, 0.0, 0.0], 0.0, 0)],
        };
        let proj = project_cuboid(&scene, &camera, 0).unwrap();
        // front face sits at camera depth 0.975; offsets 0.025 m
        let expect = 400.0 * 0.025 / 0.975;
        let mut near = 0;
        for &(u, v) in &proj.vertices {
            let du = (u - 200.0).abs();
            let dv = (v - 200.0).abs();
            if (du - expect).abs() < 1e-9 && (dv - expect).abs() < 1e-9 {
                near += 1;
            }
        }
        assert_eq!(near, 4, "four front-face vertices at 200 +/- {expect:.3}");
    }

    #[test]
    fn projection_matches_homogeneous_oracle() {
        // independent evaluation through an explicit 3x4 homogeneous matrix
        let (scene, camera) = randomize_scene(7, &SceneGenConfig::default()).unwrap();
        for (i, cub) in scene.cuboids.iter().enumerate() {
            let proj = project_cuboid(&scene, &camera, i).unwrap();
            for (k, &corner) in cub.corners().iter().enumerate() {
                // P = K [R|t] applied to homogeneous world point
                let (fx, fy) = camera.focal;
                let (cx, cy) = camera.principal;
                let mut row = [[0.0f64; 4]; 3];
                for c in 0..3 {
                    row[0][c] = fx * camera.rotation[0][c] + cx * camera.rotation[2][c];
                    row[1][c] = fy * camera.rotation[1][c] + cy * camera.rotation[2][c];
                    row[2][c] = camera.rotation[2][c];
                }
                row[0][3] = fx * camera.translation[0] + cx * camera.translation[2];
                row[1][3] = fy * camera.translation[1] + cy * camera.translation[2];
                row[2][3] = camera.translation[2];
                let h = [corner[0], corner[1], corner[2], 1.0];
                let px: f64 = (0..4).map(|c| row[0][c] * h[c]).sum();
                let py: f64 = (0..4).map(|c| row[1][c] * h[c]).sum();
                let pw: f64 = (0..4).map(|c| row[2][c] * h[c]).sum();
                let (u, v) = proj.vertices[k];
                assert_relative_eq!(u, px / pw, epsilon = 1e-6);
                assert_relative_eq!(v, py / pw, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn single_cube_one_hidden_no_occlusion() {
        let camera = CameraModel::look_at([0.6, -0.7, 0.5], [0.0, 0.0, 0.025]);
        let scene = Scene {
            cuboids: vec![CuboidPose::new([0.0, 0.0, 0.025], 0.3, 0)],
        };
        let proj = project_cuboid(&scene, &camera, 0).unwrap();
        assert!(proj.hidden_index < 8);
        assert!(proj.occluded_by_other.iter().all(|&b| !b));
        assert!(proj.hull_area > 0.0);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let camera = frontal_camera();
        let scene = Scene {
            cuboids: vec![CuboidPose::new([0.0, -2.0, 0.0], 0.0, 0)],
        };
        assert!(matches!(
            project_cuboid(&scene, &camera, 0),
            Err(GeometryError::BehindCamera(0))
        ));
    }

    #[test]
    fn relations_exact_stack() {
        let scene = Scene {
            cuboids: vec![
                CuboidPose::new([0.0, 0.0, 0.075], 0.0, 0),
                CuboidPose::new([0.0, 0.0, 0.025], 0.0, 1),
            ],
        };
        let rel = ground_truth_relations(&scene);
        assert!(rel.above[0][1]);
        assert_eq!(rel.count_above(), 1);
        assert_eq!(rel.count_left(), 0);
    }

    #[test]
    fn relations_exact_side_contact() {
        let scene = Scene {
            cuboids: vec![
                CuboidPose::new([-0.05, 0.0, 0.025], 0.0, 0),
                CuboidPose::new([0.0, 0.0, 0.025], 0.0, 1),
            ],
        };
        let rel = ground_truth_relations(&scene);
        assert!(rel.left[0][1]);
        assert!(!rel.left[1][0]);
        assert_eq!(rel.count_above(), 0);
    }

    #[test]
    fn relations_far_apart_none() {
        let scene = Scene {
            cuboids: vec![
                CuboidPose::new([0.0, 0.0, 0.025], 0.0, 0),
                CuboidPose::new([1.0, 0.0, 0.025], 0.0, 1),
            ],
        };
        let rel = ground_truth_relations(&scene);
        assert_eq!(rel.count_above(), 0);
        assert_eq!(rel.count_left(), 0);
    }

    #[test]
    fn scene_generation_deterministic() {
        let cfg = SceneGenConfig::default();
        let a = randomize_scene(42, &cfg).unwrap();
        let b = randomize_scene(42, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn pyramid_scene_relations() {
        let cfg = SceneGenConfig::only(StructureKind::Pyramid, 3);
        let (scene, _cam) = randomize_scene(5, &cfg).unwrap();
        let rel = ground_truth_relations(&scene);
        assert_eq!(rel.count_above(), 2, "pyramid top above both supports");
        assert_eq!(rel.count_left(), 1);
    }

    #[test]
    fn stack_scene_relations() {
        let cfg = SceneGenConfig::only(StructureKind::Stack, 4);
        let (scene, _cam) = randomize_scene(9, &cfg).unwrap();
        let rel = ground_truth_relations(&scene);
        assert_eq!(rel.count_above(), 3, "chain of three Above");
        assert_eq!(rel.count_left(), 0);
    }

    #[test]
    fn relations_antisymmetric() {
        for seed in 0..20u64 {
            let (scene, _cam) = randomize_scene(seed, &SceneGenConfig::default()).unwrap();
            let rel = ground_truth_relations(&scene);
            for i in 0..rel.n {
                for j in 0..rel.n {
                    if rel.above[i][j] {
                        assert!(!rel.above[j][i]);
                    }
                    if rel.left[i][j] {
                        assert!(!rel.left[j][i]);
                    }
                }
            }
        }
    }

    #[test]
    fn generated_views_have_single_hidden_vertex() {
        for seed in 0..20u64 {
            let (scene, camera) = randomize_scene(seed, &SceneGenConfig::default()).unwrap();
            for i in 0..scene.n() {
                let proj = project_cuboid(&scene, &camera, i).unwrap();
                assert!(proj.hidden_index < 8);
                assert_eq!(proj.visible_vertices().len(), 7);
            }
        }
    }

    #[test]
    fn scene_file_round_trip() {
        let (scene, camera) = randomize_scene(3, &SceneGenConfig::default()).unwrap();
        let file = SceneFile::from_scene(&scene, &camera);
        let json = serde_json::to_string(&file).unwrap();
        let parsed: SceneFile = serde_json::from_str(&json).unwrap();
        let (scene2, camera2) = parsed.into_scene();
        assert_eq!(scene, scene2);
        assert_eq!(camera, camera2);
    }
}
