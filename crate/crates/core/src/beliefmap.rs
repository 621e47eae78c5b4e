//! Ground-truth belief maps, the stage loss, and soft-argmax decoding
//! from maps back to image coordinates.

use std::io::{Read, Write};

use thiserror::Error;

pub const MAP_SIZE: usize = 50;
/// Image pixels per map cell.
pub const STRIDE: f64 = 8.0;
/// Gaussian sigma in the 400x400 image frame.
pub const DEFAULT_SIGMA_IMAGE: f64 = 3.4;
pub const DEFAULT_BETA: f64 = 100.0;
pub const DEFAULT_DETECTION_THRESHOLD: f64 = 0.2;
/// Vertices per cuboid observed by the perception stage.
pub const P_VERTICES: usize = 7;

pub const BMAP_MAGIC: &[u8; 4] = b"BMAP";
pub const BMAP_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("vertex ({0}, {1}) outside the image frame")]
    OutOfFrame(f64, f64),
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("all-zero belief map: no detection")]
    NoDetection,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad belief stack file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, BeliefError>;

/// Map cell (a, b) covers image pixel centers at (8a + 3.5, 8b + 3.5).
pub fn cell_center(a: usize, b: usize) -> (f64, f64) {
    (STRIDE * a as f64 + 3.5, STRIDE * b as f64 + 3.5)
}

/// A 50x50 non-negative grid; cell (a, b) indexes (u, v) map coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMap {
    grid: Vec<f64>,
}

impl Default for BeliefMap {
    fn default() -> Self {
        Self::zero()
    }
}

impl BeliefMap {
    pub fn zero() -> Self {
        BeliefMap { grid: vec![0.0; MAP_SIZE * MAP_SIZE] }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.grid[a * MAP_SIZE + b]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, v: f64) {
        self.grid[a * MAP_SIZE + b] = v;
    }

    pub fn max_value(&self) -> f64 {
        self.grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn cells(&self) -> &[f64] {
        &self.grid
    }

    pub fn cells_mut(&mut self) -> &mut [f64] {
        &mut self.grid
    }

    pub fn map_values<F: Fn(f64) -> f64>(&self, f: F) -> BeliefMap {
        BeliefMap { grid: self.grid.iter().map(|&v| f(v)).collect() }
    }
}

/// Per-vertex ground-truth maps for one cuboid.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMaps {
    pub maps: Vec<BeliefMap>,
    pub sigma_image: f64,
}

/// t stages of p per-vertex maps.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefStack {
    pub stages: Vec<Vec<BeliefMap>>,
}

impl BeliefStack {
    pub fn t(&self) -> usize {
        self.stages.len()
    }

    pub fn p(&self) -> usize {
        self.stages.first().map(|s| s.len()).unwrap_or(0)
    }
}

/// Unnormalized Gaussian maps, peak 1.0 when a vertex sits on a cell center.
pub fn make_ground_truth_maps(vertices: &[(f64, f64)], sigma_image: f64) -> Result<GroundTruthMaps> {
    let bound = STRIDE * MAP_SIZE as f64;
    let sigma_map = sigma_image / STRIDE;
    let mut maps = Vec::with_capacity(vertices.len());
    for &(u, v) in vertices {
        if !(0.0..bound).contains(&u) || !(0.0..bound).contains(&v) {
            return Err(BeliefError::OutOfFrame(u, v));
        }
        let mut map = BeliefMap::zero();
        for a in 0..MAP_SIZE {
            for b in 0..MAP_SIZE {
                let (cu, cv) = cell_center(a, b);
                let du = (u - cu) / STRIDE;
                let dv = (v - cv) / STRIDE;
                map.set(a, b, (-(du * du + dv * dv) / (2.0 * sigma_map * sigma_map)).exp());
            }
        }
        maps.push(map);
    }
    Ok(GroundTruthMaps { maps, sigma_image })
}

/// Per-stage loss: sum over vertices of the summed per-cell absolute
/// differences between predicted and ground-truth maps.
pub fn stage_loss(predicted: &[BeliefMap], truth: &GroundTruthMaps) -> Result<f64> {
    if predicted.len() != truth.maps.len() {
        return Err(BeliefError::ShapeError(format!(
            "{} predicted maps vs {} ground-truth maps",
            predicted.len(),
            truth.maps.len()
        )));
    }
    let mut total = 0.0;
    for (pred, gt) in predicted.iter().zip(&truth.maps) {
        total += pred
            .cells()
            .iter()
            .zip(gt.cells())
            .map(|(&x, &y)| (x - y).abs())
            .sum::<f64>();
    }
    Ok(total)
}

/// Sum of the per-stage losses (intermediate supervision).
pub fn total_loss(stack: &BeliefStack, truth: &GroundTruthMaps) -> Result<f64> {
    let mut total = 0.0;
    for stage in &stack.stages {
        total += stage_loss(stage, truth)?;
    }
    Ok(total)
}

/// Decode a map to image coordinates by a weighted centroid of cell
/// centers. Weights sharpen the max-normalized grid in the log domain,
/// w = (cell/max)^(beta/200): cells at zero get zero weight for any beta,
/// and the default beta keeps a Gaussian peak wide enough on the cell
/// lattice that the centroid recovers the mode to sub-pixel accuracy
/// (an intensity-domain exponential either drowns the peak in background
/// weight or collapses to the argmax cell, losing sub-cell information).
pub fn soft_argmax(map: &BeliefMap, beta: f64) -> Result<(f64, f64)> {
    let max = map.max_value();
    if max <= 0.0 {
        return Err(BeliefError::NoDetection);
    }
    let sharpen = beta / 200.0;
    let mut wsum = 0.0;
    let mut u = 0.0;
    let mut v = 0.0;
    for a in 0..MAP_SIZE {
        for b in 0..MAP_SIZE {
            let w = (map.get(a, b) / max).max(0.0).powf(sharpen);
            let (cu, cv) = cell_center(a, b);
            wsum += w;
            u += w * cu;
            v += w * cv;
        }
    }
    Ok((u / wsum, v / wsum))
}

/// Mean over vertices of each final-stage map's max cell value.
pub fn detection_confidence(maps: &[BeliefMap]) -> f64 {
    if maps.is_empty() {
        return 0.0;
    }
    maps.iter().map(|m| m.max_value().max(0.0)).sum::<f64>() / maps.len() as f64
}

pub fn is_detected(confidence: f64, threshold: f64) -> bool {
    confidence >= threshold
}

// ---------------------------------------------------------------------------
// binary belief stack format

/// Little-endian: magic "BMAP", version, t, p, h, w, then float32 cells in
/// stage-major, vertex-major, row-major order.
pub fn write_belief_stack<W: Write>(mut w: W, stack: &BeliefStack) -> Result<()> {
    w.write_all(BMAP_MAGIC)?;
    for val in [BMAP_VERSION, stack.t() as u32, stack.p() as u32, MAP_SIZE as u32, MAP_SIZE as u32] {
        w.write_all(&val.to_le_bytes())?;
    }
    for stage in &stack.stages {
        for map in stage {
            for b in 0..MAP_SIZE {
                for a in 0..MAP_SIZE {
                    w.write_all(&(map.get(a, b) as f32).to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_belief_stack<R: Read>(mut r: R) -> Result<BeliefStack> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BMAP_MAGIC {
        return Err(BeliefError::Format("bad magic".into()));
    }
    let mut buf = [0u8; 4];
    let mut read_u32 = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    };
    let version = read_u32(&mut r)?;
    if version != BMAP_VERSION {
        return Err(BeliefError::Format(format!("unsupported version {version}")));
    }
    let t = read_u32(&mut r)? as usize;
    let p = read_u32(&mut r)? as usize;
    let h = read_u32(&mut r)? as usize;
    let w = read_u32(&mut r)? as usize;
    if h != MAP_SIZE || w != MAP_SIZE {
        return Err(BeliefError::Format(format!("unsupported grid {h}x{w}")));
    }
    let mut stages = Vec::with_capacity(t);
    let mut cell = [0u8; 4];
    for _ in 0..t {
        let mut maps = Vec::with_capacity(p);
        for _ in 0..p {
            let mut map = BeliefMap::zero();
            for b in 0..MAP_SIZE {
                for a in 0..MAP_SIZE {
                    r.read_exact(&mut cell)?;
                    map.set(a, b, f32::from_le_bytes(cell) as f64);
                }
            }
            maps.push(map);
        }
        stages.push(maps);
    }
    Ok(BeliefStack { stages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn argmax_cell(map: &BeliefMap) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f64::NEG_INFINITY;
        for a in 0..MAP_SIZE {
            for b in 0..MAP_SIZE {
                if map.get(a, b) > best_v {
                    best_v = map.get(a, b);
                    best = (a, b);
                }
            }
        }
        best
    }

    #[test]
    fn gt_map_peaks_at_cell_center() {
        let gt = make_ground_truth_maps(&[(99.5, 275.5)], DEFAULT_SIGMA_IMAGE).unwrap();
        let map = &gt.maps[0];
        assert_eq!(argmax_cell(map), (12, 34));
        assert_relative_eq!(map.get(12, 34), 1.0);
    }

    #[test]
    fn gt_map_out_of_frame() {
        assert!(matches!(
            make_ground_truth_maps(&[(499.5, 275.5)], DEFAULT_SIGMA_IMAGE),
            Err(BeliefError::OutOfFrame(..))
        ));
    }

    #[test]
    fn gt_map_half_cell_offset_splits_evenly() {
        // 103.5 sits exactly between cell centers 99.5 (a=12) and 107.5 (a=13)
        let gt = make_ground_truth_maps(&[(103.5, 275.5)], DEFAULT_SIGMA_IMAGE).unwrap();
        let map = &gt.maps[0];
        assert_relative_eq!(map.get(12, 34), map.get(13, 34), epsilon = 1e-12);
        let (a, _) = argmax_cell(map);
        assert!(a == 12 || a == 13);
    }

    #[test]
    fn stage_loss_zero_on_identical() {
        let gt = make_ground_truth_maps(&[(99.5, 275.5), (200.0, 200.0)], DEFAULT_SIGMA_IMAGE).unwrap();
        assert_relative_eq!(stage_loss(&gt.maps, &gt).unwrap(), 0.0);
    }

    #[test]
    fn stage_loss_constant_offset_locked() {
        let gt = make_ground_truth_maps(&[(99.5, 275.5), (200.0, 200.0)], DEFAULT_SIGMA_IMAGE).unwrap();
        let mut pred = gt.maps.clone();
        pred[1] = pred[1].map_values(|v| v + 0.1);
        // one map offset by 0.1 everywhere: 0.1 * 2500 cells
        assert_relative_eq!(stage_loss(&pred, &gt).unwrap(), 250.0, epsilon = 1e-9);
    }

    #[test]
    fn stage_loss_homogeneous_in_error() {
        let gt = make_ground_truth_maps(&[(99.5, 275.5)], DEFAULT_SIGMA_IMAGE).unwrap();
        let pred1 = vec![gt.maps[0].map_values(|v| v + 0.05)];
        let pred2 = vec![gt.maps[0].map_values(|v| v + 0.10)];
        let l1 = stage_loss(&pred1, &gt).unwrap();
        let l2 = stage_loss(&pred2, &gt).unwrap();
        assert_relative_eq!(l2, 2.0 * l1, epsilon = 1e-9);
    }

    #[test]
    fn stage_loss_shape_mismatch() {
        let gt = make_ground_truth_maps(&[(99.5, 275.5)], DEFAULT_SIGMA_IMAGE).unwrap();
        assert!(matches!(stage_loss(&[], &gt), Err(BeliefError::ShapeError(_))));
    }

    #[test]
    fn total_loss_is_additive_over_stages() {
        let gt = make_ground_truth_maps(&[(99.5, 275.5)], DEFAULT_SIGMA_IMAGE).unwrap();
        let stage: Vec<BeliefMap> = vec![gt.maps[0].map_values(|v| v * 0.5)];
        let per_stage = stage_loss(&stage, &gt).unwrap();
        let stack = BeliefStack { stages: vec![stage.clone(); 6] };
        assert_relative_eq!(total_loss(&stack, &gt).unwrap(), 6.0 * per_stage, epsilon = 1e-9);
    }

    #[test]
    fn soft_argmax_one_hot() {
        let mut map = BeliefMap::zero();
        map.set(12, 34, 1.0);
        let (u, v) = soft_argmax(&map, DEFAULT_BETA).unwrap();
        // one-hot dominates: residual uniform weight pulls < 1e-9 px
        assert_relative_eq!(u, 99.5, epsilon = 1e-6);
        assert_relative_eq!(v, 275.5, epsilon = 1e-6);
    }

    #[test]
    fn soft_argmax_two_equal_peaks() {
        let mut map = BeliefMap::zero();
        map.set(10, 10, 1.0);
        map.set(10, 20, 1.0);
        let (u, v) = soft_argmax(&map, DEFAULT_BETA).unwrap();
        assert_relative_eq!(u, 83.5, epsilon = 1e-6);
        assert_relative_eq!(v, 123.5, epsilon = 1e-6);
    }

    #[test]
    fn soft_argmax_recovers_gaussian_vertex() {
        let gt = make_ground_truth_maps(&[(103.5, 275.5)], DEFAULT_SIGMA_IMAGE).unwrap();
        let (u, v) = soft_argmax(&gt.maps[0], DEFAULT_BETA).unwrap();
        assert!((u - 103.5).abs() < 0.25, "u = {u}");
        assert!((v - 275.5).abs() < 0.25, "v = {v}");
    }

    #[test]
    fn soft_argmax_scale_invariant() {
        let gt = make_ground_truth_maps(&[(150.0, 220.0)], DEFAULT_SIGMA_IMAGE).unwrap();
        let a = soft_argmax(&gt.maps[0], DEFAULT_BETA).unwrap();
        let scaled = gt.maps[0].map_values(|v| v * 7.3);
        let b = soft_argmax(&scaled, DEFAULT_BETA).unwrap();
        assert_relative_eq!(a.0, b.0, epsilon = 1e-12);
        assert_relative_eq!(a.1, b.1, epsilon = 1e-12);
    }

    #[test]
    fn soft_argmax_rejects_all_zero() {
        assert!(matches!(soft_argmax(&BeliefMap::zero(), DEFAULT_BETA), Err(BeliefError::NoDetection)));
    }

    #[test]
    fn detection_confidence_thresholding() {
        // cell-center-aligned vertices so every map peaks at exactly 1.0
        let gt = make_ground_truth_maps(&[(99.5, 275.5), (203.5, 195.5)], DEFAULT_SIGMA_IMAGE).unwrap();
        let conf = detection_confidence(&gt.maps);
        assert_relative_eq!(conf, 1.0);
        assert!(is_detected(conf, DEFAULT_DETECTION_THRESHOLD));

        let zeros = vec![BeliefMap::zero(); 7];
        assert_relative_eq!(detection_confidence(&zeros), 0.0);
        assert!(!is_detected(0.0, DEFAULT_DETECTION_THRESHOLD));

        let dim: Vec<BeliefMap> = gt.maps.iter().map(|m| m.map_values(|v| v * 0.15)).collect();
        let conf = detection_confidence(&dim);
        assert_relative_eq!(conf, 0.15, epsilon = 1e-12);
        assert!(!is_detected(conf, DEFAULT_DETECTION_THRESHOLD));
    }

    #[test]
    fn belief_stack_file_round_trip() {
        let gt = make_ground_truth_maps(&[(99.5, 275.5), (260.0, 140.0)], DEFAULT_SIGMA_IMAGE).unwrap();
        let stack = BeliefStack { stages: vec![gt.maps.clone(), gt.maps.clone()] };
        let mut buf = Vec::new();
        write_belief_stack(&mut buf, &stack).unwrap();
        assert_eq!(&buf[..4], BMAP_MAGIC);
        let parsed = read_belief_stack(buf.as_slice()).unwrap();
        assert_eq!(parsed.t(), 2);
        assert_eq!(parsed.p(), 2);
        // f32 round trip: compare at f32 precision
        for (s1, s2) in stack.stages.iter().zip(&parsed.stages) {
            for (m1, m2) in s1.iter().zip(s2) {
                for (x, y) in m1.cells().iter().zip(m2.cells()) {
                    assert_relative_eq!(*x as f32, *y as f32);
                }
            }
        }
    }

    #[test]
    fn belief_stack_bad_magic_rejected() {
        let buf = b"NOPE\x01\x00\x00\x00".to_vec();
        assert!(matches!(read_belief_stack(buf.as_slice()), Err(BeliefError::Format(_))));
    }
}
