//! Pairwise relationship inference: vertex-based pair features, training
//! data augmentation, the relation classifier network, scene state tensors,
//! and evaluation (false negative / false positive rates).

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    self, BinaryRelations, CameraModel, ProjectedCuboid, Scene, SceneGenConfig, convex_hull,
    point_in_convex,
};
use crate::neural::{self, Dataset, HeadSpec, LossKind, NetSpec, Params, Pathing, TrainConfig};

/// 7 visible vertices per cube, 2 cubes, (u, v) each.
pub const PAIR_FEATURES: usize = 28;
pub const VERTS_PER_CUBE: usize = 7;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum RelError {
    #[error("relation of an object with itself is undefined")]
    DiagonalError,
    #[error("a state tensor needs at least two objects, got {0}")]
    TooFewObjects(usize),
    #[error("expected {VERTS_PER_CUBE} visible vertices, got {0}")]
    IncompleteDetection(usize),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Neural(#[from] neural::NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, RelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelLabel {
    Above,
    Left,
    None,
}

impl RelLabel {
    pub fn class_index(self) -> usize {
        match self {
            RelLabel::Above => 0,
            RelLabel::Left => 1,
            RelLabel::None => 2,
        }
    }
}

/// Ground-truth label for the ordered pair (i, j).
pub fn geometric_label(scene: &Scene, i: usize, j: usize) -> Result<RelLabel> {
    if i == j {
        return Err(RelError::DiagonalError);
    }
    let rel = geometry::ground_truth_relations(scene);
    Ok(if rel.above[i][j] {
        RelLabel::Above
    } else if rel.left[i][j] {
        RelLabel::Left
    } else {
        RelLabel::None
    })
}

fn normalized_visible(p: &ProjectedCuboid) -> Result<Vec<(f64, f64)>> {
    let (w, h) = geometry::IMAGE_SIZE;
    let verts = p.visible_vertices();
    if verts.len() != VERTS_PER_CUBE {
        return Err(RelError::IncompleteDetection(verts.len()));
    }
    Ok(verts.iter().map(|&(u, v)| (u / w as f64, v / h as f64)).collect())
}

/// 28 features: the 7 visible vertices of each cube, coordinates divided
/// by the image size (an image-center vertex contributes 0.5, 0.5).
pub fn pair_features(a: &ProjectedCuboid, b: &ProjectedCuboid) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(PAIR_FEATURES);
    for cube in [a, b] {
        for (u, v) in normalized_visible(cube)? {
            out.push(u);
            out.push(v);
        }
    }
    Ok(out)
}

/// One ordered pair plus everything the augmentations need: per-vertex
/// occlusion flags and the occluding cube's hull (normalized coordinates).
#[derive(Debug, Clone)]
pub struct PairSample {
    pub features: Vec<f64>,
    pub occluded: Vec<bool>,
    pub occluder_hulls: Vec<Option<Vec<(f64, f64)>>>,
    pub label: RelLabel,
}

/// Assemble the sample for ordered pair (i, j); `projections` must cover
/// the whole scene so occluders can be resolved.
pub fn make_pair_sample(
    scene: &Scene,
    projections: &[ProjectedCuboid],
    i: usize,
    j: usize,
) -> Result<PairSample> {
    if i == j {
        return Err(RelError::DiagonalError);
    }
    let (w, h) = geometry::IMAGE_SIZE;
    let normalize = |p: (f64, f64)| (p.0 / w as f64, p.1 / h as f64);
    let features = pair_features(&projections[i], &projections[j])?;
    let mut occluded = Vec::with_capacity(2 * VERTS_PER_CUBE);
    let mut occluder_hulls = Vec::with_capacity(2 * VERTS_PER_CUBE);
    for &cube in &[i, j] {
        let proj = &projections[cube];
        for (vi, &vert) in proj.vertices.iter().enumerate() {
            if vi == proj.hidden_index {
                continue;
            }
            let is_occ = proj.occluded_by_other[vi];
            occluded.push(is_occ);
            let hull = if is_occ {
                (0..projections.len())
                    .filter(|&o| o != cube)
                    .map(|o| convex_hull(&projections[o].vertices))
                    .find(|hull| point_in_convex(vert, hull))
                    .map(|hull| hull.into_iter().map(normalize).collect())
            } else {
                None
            };
            occluder_hulls.push(hull);
        }
    }
    Ok(PairSample { features, occluded, occluder_hulls, label: geometric_label(scene, i, j)? })
}

// ---------------------------------------------------------------------------
// augmentation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugKind {
    /// Gaussian noise drawn independently per coordinate.
    Independent,
    /// One shared Gaussian offset for all vertices of a cube.
    Structured,
    /// A vertex occasionally adopts the position of another vertex of the
    /// same cube.
    Confusion,
    /// Occluded vertices relocate uniformly inside the occluder's hull.
    Occlusion,
}

#[derive(Debug, Clone)]
pub struct AugmentConfig {
    /// Noise standard deviation in pixels (both Gaussian augmentations).
    pub sigma_px: f64,
    pub confusion_prob: f64,
    pub relocate_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { sigma_px: 2.0, confusion_prob: 0.01, relocate_prob: 0.5 }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn uniform_in_hull(hull: &[(f64, f64)], rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (mut lo_u, mut hi_u) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut lo_v, mut hi_v) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(u, v) in hull {
        lo_u = lo_u.min(u);
        hi_u = hi_u.max(u);
        lo_v = lo_v.min(v);
        hi_v = hi_v.max(v);
    }
    loop {
        let p = (
            lo_u + rng.random::<f64>() * (hi_u - lo_u),
            lo_v + rng.random::<f64>() * (hi_v - lo_v),
        );
        if point_in_convex(p, hull) {
            return p;
        }
    }
}

/// Perturbed copy of the sample's features.
pub fn augment(
    sample: &PairSample,
    kind: AugKind,
    config: &AugmentConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let (w, _) = geometry::IMAGE_SIZE;
    let sigma = config.sigma_px / w as f64;
    let mut features = sample.features.clone();
    match kind {
        AugKind::Independent => {
            for f in features.iter_mut() {
                *f += sigma * gaussian(rng);
            }
        }
        AugKind::Structured => {
            for cube in 0..2 {
                let (du, dv) = (sigma * gaussian(rng), sigma * gaussian(rng));
                for v in 0..VERTS_PER_CUBE {
                    let base = 2 * (cube * VERTS_PER_CUBE + v);
                    features[base] += du;
                    features[base + 1] += dv;
                }
            }
        }
        AugKind::Confusion => {
            let original = features.clone();
            for cube in 0..2 {
                for v in 0..VERTS_PER_CUBE {
                    if rng.random::<f64>() >= config.confusion_prob {
                        continue;
                    }
                    let mut other = rng.random_range(0..VERTS_PER_CUBE - 1);
                    if other >= v {
                        other += 1;
                    }
                    let dst = 2 * (cube * VERTS_PER_CUBE + v);
                    let src = 2 * (cube * VERTS_PER_CUBE + other);
                    features[dst] = original[src];
                    features[dst + 1] = original[src + 1];
                }
            }
        }
        AugKind::Occlusion => {
            for v in 0..2 * VERTS_PER_CUBE {
                if !sample.occluded[v] || rng.random::<f64>() >= config.relocate_prob {
                    continue;
                }
                if let Some(hull) = &sample.occluder_hulls[v] {
                    let p = uniform_in_hull(hull, rng);
                    features[2 * v] = p.0;
                    features[2 * v + 1] = p.1;
                }
            }
        }
    }
    features
}

// ---------------------------------------------------------------------------
// dataset

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PairRecord {
    pub features: Vec<f64>,
    pub label: RelLabel,
    pub scene_id: u64,
    pub aug_tag: String,
}

fn aug_tag(kind: Option<AugKind>) -> String {
    match kind {
        None => "clean".to_string(),
        Some(AugKind::Independent) => "independent".to_string(),
        Some(AugKind::Structured) => "structured".to_string(),
        Some(AugKind::Confusion) => "confusion".to_string(),
        Some(AugKind::Occlusion) => "occlusion".to_string(),
    }
}

/// Generate labeled pair records from random scenes: one clean record per
/// ordered pair plus one per requested augmentation. Scenes whose cubes
/// project incompletely are skipped.
pub fn gen_pair_dataset(
    seed: u64,
    n_scenes: usize,
    augs: &[AugKind],
    config: &AugmentConfig,
    scene_config: &SceneGenConfig,
) -> Result<Vec<PairRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e1a_7e1a);
    let mut out = Vec::new();
    for scene_id in 0..n_scenes as u64 {
        let Ok((scene, camera)) = geometry::randomize_scene(seed.wrapping_add(scene_id), scene_config)
        else {
            continue;
        };
        let Some(projections) = project_all(&scene, &camera) else {
            continue;
        };
        for i in 0..scene.n() {
            for j in 0..scene.n() {
                if i == j {
                    continue;
                }
                let sample = match make_pair_sample(&scene, &projections, i, j) {
                    Ok(s) => s,
                    Err(RelError::IncompleteDetection(_)) => continue,
                    Err(e) => return Err(e),
                };
                out.push(PairRecord {
                    features: sample.features.clone(),
                    label: sample.label,
                    scene_id,
                    aug_tag: aug_tag(None),
                });
                for &kind in augs {
                    out.push(PairRecord {
                        features: augment(&sample, kind, config, &mut rng),
                        label: sample.label,
                        scene_id,
                        aug_tag: aug_tag(Some(kind)),
                    });
                }
            }
        }
    }
    Ok(out)
}

pub fn project_all(scene: &Scene, camera: &CameraModel) -> Option<Vec<ProjectedCuboid>> {
    (0..scene.n()).map(|i| geometry::project_cuboid(scene, camera, i).ok()).collect()
}

pub fn write_pair_records<W: std::io::Write>(mut w: W, records: &[PairRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| RelError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_pair_records<R: std::io::BufRead>(r: R) -> Result<Vec<PairRecord>> {
    r.lines()
        .map(|line| {
            serde_json::from_str(&line?).map_err(|e: serde_json::Error| RelError::Format(e.to_string()))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// relation network

pub fn rel_net_spec() -> NetSpec {
    NetSpec {
        input_dim: PAIR_FEATURES,
        hidden: vec![100; 3],
        heads: vec![HeadSpec { dim: 3, loss: LossKind::SoftmaxCrossEntropy }],
        pathing: Pathing::SharedTrunk,
    }
}

pub fn records_to_dataset(records: &[PairRecord]) -> Dataset<f32> {
    let rows = records.len();
    let mut inputs = Array2::<f32>::zeros((rows, PAIR_FEATURES));
    let mut targets = Array2::<f32>::zeros((rows, 3));
    for (r, rec) in records.iter().enumerate() {
        for (c, &f) in rec.features.iter().enumerate() {
            inputs[[r, c]] = f as f32;
        }
        targets[[r, rec.label.class_index()]] = 1.0;
    }
    Dataset { inputs, targets: vec![targets] }
}

pub fn train_rel_net(records: &[PairRecord], config: &TrainConfig) -> Result<Params<f32>> {
    Ok(neural::train(&rel_net_spec(), &records_to_dataset(records), config)?.params)
}

fn softmax3(logits: &[f32]) -> [f64; 3] {
    let m = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&x| ((x as f64) - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    [exps[0] / sum, exps[1] / sum, exps[2] / sum]
}

/// (p_above, p_left) for one feature vector.
pub fn score_pair(params: &Params<f32>, features: &[f64]) -> Result<(f64, f64)> {
    let row = Array2::from_shape_vec(
        (1, features.len()),
        features.iter().map(|&f| f as f32).collect(),
    )
    .expect("shape from len");
    let out = neural::forward(params, &row)?;
    let p = softmax3(out[0].row(0).as_slice().unwrap());
    Ok((p[0], p[1]))
}

// ---------------------------------------------------------------------------
// state tensor

/// Per ordered pair: confidence of Above, Left, and the derived None score
/// 1 - max(above, left), clamped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateTensor {
    pub n: usize,
    pub above: Vec<Vec<f64>>,
    pub left: Vec<Vec<f64>>,
    pub none: Vec<Vec<f64>>,
}

/// Build the scene state tensor with exactly n(n-1) scorer evaluations.
pub fn build_state<F>(n: usize, mut scorer: F) -> Result<StateTensor>
where
    F: FnMut(usize, usize) -> Result<(f64, f64)>,
{
    if n < 2 {
        return Err(RelError::TooFewObjects(n));
    }
    let mut above = vec![vec![0.0; n]; n];
    let mut left = vec![vec![0.0; n]; n];
    let mut none = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, l) = scorer(i, j)?;
            above[i][j] = a;
            left[i][j] = l;
            none[i][j] = (1.0 - a.max(l)).clamp(0.0, 1.0);
        }
    }
    Ok(StateTensor { n, above, left, none })
}

/// State tensor for a projected scene using the relation network.
pub fn scene_state(
    projections: &[ProjectedCuboid],
    params: &Params<f32>,
) -> Result<StateTensor> {
    build_state(projections.len(), |i, j| {
        let features = pair_features(&projections[i], &projections[j])?;
        score_pair(params, &features)
    })
}

/// Binarize at the confidence threshold; idempotent.
pub fn threshold_state(state: &StateTensor, tau: f64) -> BinaryRelations {
    let mut rel = BinaryRelations::empty(state.n);
    for i in 0..state.n {
        for j in 0..state.n {
            if i == j {
                continue;
            }
            rel.above[i][j] = state.above[i][j] >= tau;
            rel.left[i][j] = state.left[i][j] >= tau;
        }
    }
    rel
}

pub fn binary_to_state(rel: &BinaryRelations) -> StateTensor {
    build_state(rel.n, |i, j| {
        Ok((rel.above[i][j] as u8 as f64, rel.left[i][j] as u8 as f64))
    })
    .expect("binary relations always have n >= 2 objects when built from a state")
}

// ---------------------------------------------------------------------------
// evaluation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RelEval {
    pub fnr_missed: usize,
    pub fnr_total: usize,
    pub fpr_false: usize,
    pub fpr_total: usize,
}

impl RelEval {
    pub fn fnr(&self) -> f64 {
        if self.fnr_total == 0 { 0.0 } else { self.fnr_missed as f64 / self.fnr_total as f64 }
    }

    pub fn fpr(&self) -> f64 {
        if self.fpr_total == 0 { 0.0 } else { self.fpr_false as f64 / self.fpr_total as f64 }
    }
}

/// FNR over truly related pairs (true relation scored below the threshold)
/// and FPR over truly unrelated pairs (any relation scored at or above it).
pub fn eval_rel(params: &Params<f32>, records: &[PairRecord]) -> Result<RelEval> {
    let mut eval = RelEval { fnr_missed: 0, fnr_total: 0, fpr_false: 0, fpr_total: 0 };
    for rec in records {
        let (a, l) = score_pair(params, &rec.features)?;
        match rec.label {
            RelLabel::Above => {
                eval.fnr_total += 1;
                eval.fnr_missed += (a < DEFAULT_THRESHOLD) as usize;
            }
            RelLabel::Left => {
                eval.fnr_total += 1;
                eval.fnr_missed += (l < DEFAULT_THRESHOLD) as usize;
            }
            RelLabel::None => {
                eval.fpr_total += 1;
                eval.fpr_false += (a.max(l) >= DEFAULT_THRESHOLD) as usize;
            }
        }
    }
    Ok(eval)
}
