//! Lesion detection scoring: 3D connected components and overlap matching.
//!
//! A ground-truth component is a true positive when it shares at least one
//! voxel with any predicted component; a predicted component is a false
//! positive when it shares no voxel with any ground-truth component.
//! Precision is `TP / (TP + FP)` where TP counts ground-truth components and
//! FP counts predicted components. That mix is deliberate: it is the
//! arithmetic behind published bone-lesion detection figures such as
//! 375 / (375 + 13) = 96.6 %. One prediction overlapping two lesions
//! therefore yields two TPs and no FP.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology;
use crate::volume::{Grid, LabelClass, LabelVolume, Mask3, Volume3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Connectivity3D {
    Six,
    Eighteen,
    #[default]
    TwentySix,
}

impl Connectivity3D {
    pub fn from_neighbors(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Self::Six),
            18 => Ok(Self::Eighteen),
            26 => Ok(Self::TwentySix),
            _ => Err(Error::InvalidParameter(format!(
                "connectivity must be 6, 18 or 26, got {n}"
            ))),
        }
    }

    pub fn neighbors(self) -> u32 {
        match self {
            Self::Six => 6,
            Self::Eighteen => 18,
            Self::TwentySix => 26,
        }
    }

    fn admits(self, d: [i64; 3]) -> bool {
        let l1 = d.iter().map(|v| v.abs()).sum::<i64>();
        match self {
            Self::Six => l1 == 1,
            Self::Eighteen => l1 <= 2,
            Self::TwentySix => true,
        }
    }

    /// Neighbor offsets that precede a voxel in x-fastest scan order.
    fn backward_offsets(self) -> Vec<[i64; 3]> {
        let mut out = Vec::new();
        for dz in -1..=0i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let before = dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)));
                    if before && self.admits([dx, dy, dz]) {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

impl Serialize for Connectivity3D {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u32(self.neighbors())
    }
}

impl<'de> Deserialize<'de> for Connectivity3D {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let n = u32::deserialize(d)?;
        Self::from_neighbors(n).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    pub id: u32,
    pub voxel_count: usize,
    /// Inclusive `[min, max]` voxel corners.
    pub bbox: [[usize; 3]; 2],
    /// Mean voxel index.
    pub centroid: [f64; 3],
}

/// Labeled foreground: ids `1..=N` in order of each component's first voxel
/// in x-fastest scan order; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    pub labels: Grid<u32>,
    pub components: Vec<Component>,
}

impl ComponentSet {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn foreground_voxels(&self) -> usize {
        self.components.iter().map(|c| c.voxel_count).sum()
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

/// Two-pass union-find labeling.
pub fn connected_components(mask: &Mask3, connectivity: Connectivity3D) -> ComponentSet {
    let g = *mask.geometry();
    let [nx, ny, nz] = g.dims;
    let offsets = connectivity.backward_offsets();
    let src = mask.data();
    let mut provisional = vec![0u32; g.len()];
    let mut parent: Vec<u32> = vec![0];

    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = g.index(x, y, z);
                if !src[i] {
                    continue;
                }
                let mut label = 0u32;
                for &[dx, dy, dz] in &offsets {
                    let (px, py, pz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                    if !g.contains(px, py, pz) {
                        continue;
                    }
                    let n = provisional[g.index(px as usize, py as usize, pz as usize)];
                    if n == 0 {
                        continue;
                    }
                    if label == 0 {
                        label = find(&mut parent, n);
                    } else {
                        let (a, b) = (find(&mut parent, label), find(&mut parent, n));
                        if a != b {
                            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                            parent[hi as usize] = lo;
                            label = lo;
                        }
                    }
                }
                if label == 0 {
                    label = parent.len() as u32;
                    parent.push(label);
                }
                provisional[i] = label;
            }
        }
    }

    let mut final_id = vec![0u32; parent.len()];
    let mut components: Vec<Component> = Vec::new();
    let mut sums: Vec<[f64; 3]> = Vec::new();
    for (i, slot) in provisional.iter_mut().enumerate() {
        if *slot == 0 {
            continue;
        }
        let root = find(&mut parent, *slot) as usize;
        if final_id[root] == 0 {
            components.push(Component {
                id: components.len() as u32 + 1,
                voxel_count: 0,
                bbox: [[usize::MAX; 3], [0; 3]],
                centroid: [0.0; 3],
            });
            sums.push([0.0; 3]);
            final_id[root] = components.len() as u32;
        }
        let id = final_id[root];
        *slot = id;
        let c = &mut components[id as usize - 1];
        let xyz = g.coords(i);
        c.voxel_count += 1;
        for a in 0..3 {
            c.bbox[0][a] = c.bbox[0][a].min(xyz[a]);
            c.bbox[1][a] = c.bbox[1][a].max(xyz[a]);
            sums[id as usize - 1][a] += xyz[a] as f64;
        }
    }
    for (c, s) in components.iter_mut().zip(&sums) {
        for a in 0..3 {
            c.centroid[a] = s[a] / c.voxel_count as f64;
        }
    }

    ComponentSet {
        labels: Grid::from_vec(g, provisional).expect("same geometry"),
        components,
    }
}

/// Removes components with fewer than `min_voxels` voxels.
pub fn remove_small_components(mask: &Mask3, min_voxels: usize, connectivity: Connectivity3D) -> Mask3 {
    let cc = connected_components(mask, connectivity);
    let keep: Vec<bool> = std::iter::once(false)
        .chain(cc.components.iter().map(|c| c.voxel_count >= min_voxels))
        .collect();
    cc.labels.map(|&id| keep[id as usize])
}

/// Largest component (ties to the lowest id), or `None` for an empty mask.
pub fn largest_component(mask: &Mask3, connectivity: Connectivity3D) -> Option<Mask3> {
    let cc = connected_components(mask, connectivity);
    let best = cc
        .components
        .iter()
        .fold(None::<&Component>, |best, c| match best {
            Some(b) if b.voxel_count >= c.voxel_count => Some(b),
            _ => Some(c),
        })?
        .id;
    Some(cc.labels.map(|&id| id == best))
}

/// TP / FP / FN counts with the derived metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl DetectionCounts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Self { tp, fp, fn_ }
    }

    /// `TP / (TP + FP)`, undefined when there are neither.
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `TP / (TP + FN)`, undefined without ground truth.
    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

/// Percentage with one decimal, `n/a` when undefined.
pub fn format_percent(v: Option<f64>) -> String {
    match v {
        Some(f) => format!("{:.1}", f * 100.0),
        None => "n/a".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEntry {
    pub gt: u32,
    pub preds: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub series_id: Option<String>,
    pub n_gt: usize,
    pub n_pred: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub matches: Vec<MatchEntry>,
}

impl DetectionReport {
    pub fn counts(&self) -> DetectionCounts {
        DetectionCounts::new(self.tp, self.fp, self.fn_)
    }

    pub fn with_series(mut self, series_id: impl Into<String>) -> Self {
        self.series_id = Some(series_id.into());
        self
    }
}

impl fmt::Display for DetectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# GT  # TP  # FP  # FN  Precision  Recall")?;
        write!(
            f,
            "{:>4}  {:>4}  {:>4}  {:>4}  {:>9}  {:>6}",
            self.n_gt,
            self.tp,
            self.fp,
            self.fn_,
            format_percent(self.precision),
            format_percent(self.recall)
        )
    }
}

/// Overlap matching between ground-truth and predicted components.
///
/// A (gt, pred) pair matches when they share at least one voxel and the
/// shared voxels make up at least `min_overlap_fraction` of the ground-truth
/// component (0 disables the fraction test).
pub fn match_detections(
    gt: &ComponentSet,
    pred: &ComponentSet,
    min_overlap_fraction: f64,
) -> Result<DetectionReport> {
    gt.labels
        .geometry()
        .ensure_matches(pred.labels.geometry(), "ground truth vs prediction")?;
    if !(0.0..=1.0).contains(&min_overlap_fraction) {
        return Err(Error::InvalidParameter(format!(
            "minimum overlap fraction {min_overlap_fraction} outside [0, 1]"
        )));
    }
    let mut overlap: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (&g, &p) in gt.labels.data().iter().zip(pred.labels.data()) {
        if g != 0 && p != 0 {
            *overlap.entry((g, p)).or_default() += 1;
        }
    }

    let mut preds_of: Vec<Vec<u32>> = vec![Vec::new(); gt.len()];
    let mut pred_matched = vec![false; pred.len()];
    for (&(g, p), &n) in &overlap {
        let size = gt.components[g as usize - 1].voxel_count;
        if n as f64 >= min_overlap_fraction * size as f64 {
            preds_of[g as usize - 1].push(p);
            pred_matched[p as usize - 1] = true;
        }
    }

    let tp = preds_of.iter().filter(|v| !v.is_empty()).count();
    let fp = pred_matched.iter().filter(|&&m| !m).count();
    let counts = DetectionCounts::new(tp, fp, gt.len() - tp);
    Ok(DetectionReport {
        series_id: None,
        n_gt: gt.len(),
        n_pred: pred.len(),
        tp,
        fp,
        fn_: counts.fn_,
        precision: counts.precision(),
        recall: counts.recall(),
        matches: preds_of
            .into_iter()
            .enumerate()
            .map(|(i, preds)| MatchEntry {
                gt: i as u32 + 1,
                preds,
            })
            .collect(),
    })
}

/// Components of both masks, then [`match_detections`].
pub fn evaluate_masks(
    gt: &Mask3,
    pred: &Mask3,
    connectivity: Connectivity3D,
    min_overlap_fraction: f64,
) -> Result<DetectionReport> {
    gt.geometry()
        .ensure_matches(pred.geometry(), "ground truth vs prediction")?;
    match_detections(
        &connected_components(gt, connectivity),
        &connected_components(pred, connectivity),
        min_overlap_fraction,
    )
}

/// Lesion-class voxels of a label volume.
pub fn extract_lesion_components(labels: &LabelVolume) -> Mask3 {
    labels.mask_of(LabelClass::Lesion)
}

pub const BASELINE_HIGH_HU: i16 = 500;
pub const BASELINE_LOW_HU: i16 = 80;
pub const BASELINE_MIN_VOXELS: usize = 10;

/// Non-learned lesion candidates: skeleton voxels brighter than 500 HU or
/// darker than 80 HU, opened with a radius-1 ball, keeping 26-connected
/// components of at least 10 voxels.
pub fn baseline_predict(volume: &Volume3D, skeleton: &Mask3) -> Result<Mask3> {
    volume
        .geometry()
        .ensure_matches(skeleton.geometry(), "volume vs skeleton")?;
    let data: Vec<bool> = volume
        .data()
        .iter()
        .zip(skeleton.data())
        .map(|(&hu, &bone)| bone && !(BASELINE_LOW_HU..=BASELINE_HIGH_HU).contains(&hu))
        .collect();
    let candidates = Grid::from_vec(*volume.geometry(), data)?;
    let opened = morphology::open(&candidates, 1);
    Ok(remove_small_components(
        &opened,
        BASELINE_MIN_VOXELS,
        Connectivity3D::TwentySix,
    ))
}

pub fn report_to_json(report: &DetectionReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn write_report(report: &DetectionReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, report_to_json(report)? + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<DetectionReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Geometry;

    fn mask(dims: [usize; 3], on: &[[usize; 3]]) -> Mask3 {
        let mut m = Grid::filled(Geometry::with_dims(dims).unwrap(), false);
        for &[x, y, z] in on {
            m.set(x, y, z, true);
        }
        m
    }

    #[test]
    fn single_voxel() {
        let cc = connected_components(&mask([3, 3, 3], &[[1, 1, 1]]), Connectivity3D::TwentySix);
        assert_eq!(cc.len(), 1);
        assert_eq!(cc.components[0].voxel_count, 1);
        assert_eq!(cc.components[0].centroid, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn corner_touch_depends_on_connectivity() {
        let m = mask([2, 2, 2], &[[0, 0, 0], [1, 1, 1]]);
        assert_eq!(connected_components(&m, Connectivity3D::TwentySix).len(), 1);
        assert_eq!(connected_components(&m, Connectivity3D::Eighteen).len(), 2);
        assert_eq!(connected_components(&m, Connectivity3D::Six).len(), 2);
        let edge = mask([2, 2, 1], &[[0, 0, 0], [1, 1, 0]]);
        assert_eq!(connected_components(&edge, Connectivity3D::Eighteen).len(), 1);
        assert_eq!(connected_components(&edge, Connectivity3D::Six).len(), 2);
    }

    #[test]
    fn ids_follow_scan_order() {
        // A U shape whose arms merge late in the scan still gets one id.
        let m = mask([5, 3, 1], &[[0, 0, 0], [4, 0, 0], [0, 1, 0], [4, 1, 0], [0, 2, 0], [1, 2, 0], [2, 2, 0], [3, 2, 0], [4, 2, 0], [2, 0, 0]]);
        let cc = connected_components(&m, Connectivity3D::Six);
        assert_eq!(cc.len(), 2);
        assert_eq!(cc.labels.get(0, 0, 0), 1);
        assert_eq!(cc.labels.get(4, 0, 0), 1);
        assert_eq!(cc.labels.get(2, 0, 0), 2);
        assert_eq!(cc.components[0].voxel_count, 9);
    }

    #[test]
    fn published_count_arithmetic() {
        let after = DetectionCounts::new(375, 13, 418);
        assert!((after.precision().unwrap() - 375.0 / 388.0).abs() < 1e-15);
        assert!((after.recall().unwrap() - 375.0 / 793.0).abs() < 1e-15);
        assert_eq!(format_percent(after.precision()), "96.6");
        assert_eq!(format_percent(after.recall()), "47.3");
        let before = DetectionCounts::new(99, 289, 98);
        assert_eq!(format_percent(before.precision()), "25.5");
        assert_eq!(format_percent(before.recall()), "50.3");
    }

    #[test]
    fn empty_prediction() {
        let gt = mask([9, 1, 1], &[[0, 0, 0], [2, 0, 0], [4, 0, 0], [6, 0, 0], [8, 0, 0]]);
        let pred = mask([9, 1, 1], &[]);
        let r = evaluate_masks(&gt, &pred, Connectivity3D::TwentySix, 0.0).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (0, 0, 5));
        assert_eq!(r.precision, None);
        assert_eq!(r.recall, Some(0.0));
    }

    #[test]
    fn one_prediction_over_two_lesions() {
        let gt = mask([5, 1, 1], &[[0, 0, 0], [4, 0, 0]]);
        let pred = mask([5, 1, 1], &[[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0], [4, 0, 0]]);
        let r = evaluate_masks(&gt, &pred, Connectivity3D::TwentySix, 0.0).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (2, 0, 0));
        assert_eq!(r.matches[1].preds, vec![1]);
    }

    #[test]
    fn overlap_fraction_threshold() {
        let gt = mask([4, 1, 1], &[[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]);
        let pred = mask([4, 1, 1], &[[0, 0, 0]]);
        let loose = evaluate_masks(&gt, &pred, Connectivity3D::TwentySix, 0.0).unwrap();
        assert_eq!((loose.tp, loose.fp), (1, 0));
        let strict = evaluate_masks(&gt, &pred, Connectivity3D::TwentySix, 0.5).unwrap();
        assert_eq!((strict.tp, strict.fp, strict.fn_), (0, 1, 1));
    }

    #[test]
    fn geometry_mismatch_is_an_error() {
        let a = mask([2, 2, 2], &[]);
        let b = mask([2, 2, 3], &[]);
        assert!(matches!(
            evaluate_masks(&a, &b, Connectivity3D::TwentySix, 0.0),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn report_json_shape() {
        let r = DetectionReport {
            series_id: Some("S1".into()),
            n_gt: 793,
            n_pred: 388,
            tp: 375,
            fp: 13,
            fn_: 418,
            precision: DetectionCounts::new(375, 13, 418).precision(),
            recall: DetectionCounts::new(375, 13, 418).recall(),
            matches: vec![],
        };
        let v: serde_json::Value = serde_json::from_str(&report_to_json(&r).unwrap()).unwrap();
        assert_eq!(v["fn"], 418);
        assert!((v["precision"].as_f64().unwrap() - 0.96649).abs() < 1e-5);
        let empty = DetectionReport {
            series_id: None,
            n_gt: 0,
            n_pred: 0,
            tp: 0,
            fp: 0,
            fn_: 0,
            precision: None,
            recall: None,
            matches: vec![],
        };
        let v: serde_json::Value = serde_json::from_str(&report_to_json(&empty).unwrap()).unwrap();
        assert!(v["precision"].is_null());
        assert!(v["recall"].is_null());
        let back: DetectionReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, empty);
    }

    #[test]
    fn connectivity_parse() {
        assert_eq!(Connectivity3D::from_neighbors(18).unwrap(), Connectivity3D::Eighteen);
        assert!(Connectivity3D::from_neighbors(8).is_err());
        assert_eq!(Connectivity3D::TwentySix.backward_offsets().len(), 13);
        assert_eq!(Connectivity3D::Eighteen.backward_offsets().len(), 9);
        assert_eq!(Connectivity3D::Six.backward_offsets().len(), 3);
    }
}
