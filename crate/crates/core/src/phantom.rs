//! Synthetic CT phantoms with implanted bone lesions.
//!
//! Geometry is analytic (ellipsoids, z-aligned tubes, spheres), so every
//! ground-truth mask is an exact rasterization: a voxel belongs to a shape
//! when its center lies inside it. Centers are given in voxel-index
//! coordinates and radii in mm.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology;
use crate::nifti;
use crate::recist::{write_lesion_records, Point, RecistMeasurement};
use crate::volume::{round_half_away, Geometry, Grid, LabelClass, LabelVolume, Mask3, Volume3D};

pub const AIR_HU: i16 = -1000;
pub const SOFT_TISSUE_HU: i16 = 40;
pub const BONE_HU_RANGE: (i16, i16) = (300, 700);

pub const VOLUME_FILE: &str = "ct.nii.gz";
pub const LABELS_FILE: &str = "labels.nii.gz";
pub const LESION_MASKS_FILE: &str = "lesion_masks.nii.gz";
pub const RECORDS_FILE: &str = "lesions.csv";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub radii_mm: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum BoneShape {
    Ellipsoid {
        center: [f64; 3],
        radii_mm: [f64; 3],
    },
    /// Circular cylinder along z covering slices `z_range[0]..=z_range[1]`.
    Tube {
        center_xy: [f64; 2],
        radius_mm: f64,
        z_range: [usize; 2],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bone {
    #[serde(flatten)]
    pub shape: BoneShape,
    pub hu: i16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LesionKind {
    Lytic,
    Blastic,
    /// Lytic core (inner half radius) inside a blastic shell.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionSpec {
    #[serde(default)]
    pub id: Option<String>,
    pub center: [f64; 3],
    pub radius_mm: f64,
    pub kind: LesionKind,
    /// HU relative to the host bone. Negative for lytic, positive for
    /// blastic; for mixed lesions the magnitude sets both shells.
    pub hu_offset: i16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    #[serde(default)]
    pub origin: [f64; 3],
    #[serde(default = "default_series_id")]
    pub series_id: String,
    pub body: Ellipsoid,
    pub bones: Vec<Bone>,
    pub lesions: Vec<LesionSpec>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_series_id() -> String {
    "PHANTOM".to_string()
}

impl Default for PhantomSpec {
    /// A torso-like phantom: 96 x 96 x 40 voxels at 0.8 x 0.8 x 2.5 mm, a
    /// spine-like tube and two smaller tubes, ten lesions of all three kinds.
    fn default() -> Self {
        let tube = |x: f64, y: f64, r: f64, hu: i16| Bone {
            shape: BoneShape::Tube {
                center_xy: [x, y],
                radius_mm: r,
                z_range: [0, 39],
            },
            hu,
        };
        let lesion = |c: [f64; 3], r: f64, kind: LesionKind, off: i16| LesionSpec {
            id: None,
            center: c,
            radius_mm: r,
            kind,
            hu_offset: off,
        };
        use LesionKind::*;
        Self {
            dims: [96, 96, 40],
            spacing: [0.8, 0.8, 2.5],
            origin: [0.0; 3],
            series_id: default_series_id(),
            body: Ellipsoid {
                center: [47.5, 47.5, 19.5],
                radii_mm: [36.0, 32.0, 200.0],
            },
            bones: vec![
                tube(47.5, 62.0, 12.0, 450),
                tube(24.0, 44.0, 8.0, 400),
                tube(71.0, 44.0, 8.0, 350),
            ],
            lesions: vec![
                lesion([44.0, 60.0, 4.0], 4.0, Lytic, -400),
                lesion([51.0, 64.0, 12.0], 4.5, Blastic, 350),
                lesion([47.0, 60.0, 20.0], 5.0, Mixed, 300),
                lesion([50.0, 63.0, 28.0], 4.0, Lytic, -380),
                lesion([46.0, 62.0, 35.0], 3.5, Blastic, 400),
                lesion([24.0, 44.0, 8.0], 3.5, Lytic, -520),
                lesion([24.0, 44.0, 20.0], 4.0, Blastic, 300),
                lesion([24.0, 44.0, 32.0], 3.5, Mixed, 350),
                lesion([71.0, 44.0, 14.0], 4.0, Lytic, -300),
                lesion([71.0, 44.0, 27.0], 3.5, Blastic, 450),
            ],
            noise_sigma: 10.0,
            seed: 7,
        }
    }
}

impl PhantomSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::new(self.dims, self.spacing, self.origin)
    }

    pub fn lesion_id(&self, i: usize) -> String {
        self.lesions[i]
            .id
            .clone()
            .unwrap_or_else(|| format!("L{:02}", i + 1))
    }
}

/// Squared normalized distance of voxel `(x, y, z)` from a shape center.
fn ellipsoid_r2(p: [usize; 3], center: [f64; 3], radii_mm: [f64; 3], spacing: [f64; 3]) -> f64 {
    (0..3)
        .map(|a| {
            let d = (p[a] as f64 - center[a]) * spacing[a] / radii_mm[a];
            d * d
        })
        .sum()
}

impl BoneShape {
    fn contains(&self, p: [usize; 3], spacing: [f64; 3]) -> bool {
        match *self {
            BoneShape::Ellipsoid { center, radii_mm } => ellipsoid_r2(p, center, radii_mm, spacing) <= 1.0,
            BoneShape::Tube {
                center_xy,
                radius_mm,
                z_range,
            } => {
                let dx = (p[0] as f64 - center_xy[0]) * spacing[0];
                let dy = (p[1] as f64 - center_xy[1]) * spacing[1];
                p[2] >= z_range[0] && p[2] <= z_range[1] && dx * dx + dy * dy <= radius_mm * radius_mm
            }
        }
    }
}

impl LesionSpec {
    /// Distance from the lesion center in units of its radius.
    fn radial(&self, p: [f64; 3], spacing: [f64; 3]) -> f64 {
        (0..3)
            .map(|a| ((p[a] - self.center[a]) * spacing[a] / self.radius_mm).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn hu(&self, radial: f64, bone_hu: i16) -> i16 {
        let mag = self.hu_offset.unsigned_abs() as i16;
        match self.kind {
            LesionKind::Lytic | LesionKind::Blastic => bone_hu.saturating_add(self.hu_offset),
            LesionKind::Mixed if radial <= 0.5 => bone_hu.saturating_sub(mag),
            LesionKind::Mixed => bone_hu.saturating_add(mag),
        }
    }

    /// Noise-free HU values the lesion can take inside bone of `bone_hu`.
    pub fn expected_hus(&self, bone_hu: i16) -> Vec<i16> {
        match self.kind {
            LesionKind::Mixed => vec![self.hu(0.0, bone_hu), self.hu(1.0, bone_hu)],
            _ => vec![self.hu(0.0, bone_hu)],
        }
    }
}

/// Generated volume with every ground-truth artifact.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub volume: Volume3D,
    pub labels: LabelVolume,
    /// 0 outside lesions, `i + 1` inside lesion `i`.
    pub lesion_ids: Grid<u8>,
    pub body: Mask3,
    /// Bone region including the lesions it hosts.
    pub skeleton: Mask3,
    pub recist: Vec<RecistMeasurement>,
    /// HU of the bone hosting each lesion.
    pub host_bone_hu: Vec<i16>,
}

impl Phantom {
    pub fn lesion_count(&self) -> usize {
        self.spec.lesions.len()
    }

    pub fn lesion_mask(&self, i: usize) -> Mask3 {
        let id = (i + 1) as u8;
        self.lesion_ids.map(|&v| v == id)
    }

    pub fn lesion_masks(&self) -> Vec<Mask3> {
        (0..self.lesion_count()).map(|i| self.lesion_mask(i)).collect()
    }

    pub fn all_lesions(&self) -> Mask3 {
        self.lesion_ids.map(|&v| v != 0)
    }

    /// Writes the volume, label volume, lesion instance map and RECIST CSV.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths: Vec<PathBuf> = [VOLUME_FILE, LABELS_FILE, LESION_MASKS_FILE, RECORDS_FILE]
            .iter()
            .map(|f| dir.join(f))
            .collect();
        nifti::write_volume(&self.volume, &paths[0])?;
        nifti::write_labels(&self.labels, &paths[1])?;
        nifti::write_volume(&self.lesion_ids, &paths[2])?;
        write_lesion_records(&paths[3], &self.recist)?;
        Ok(paths)
    }
}

fn validate(spec: &PhantomSpec) -> Result<Geometry> {
    let g = spec.geometry().map_err(|e| Error::Phantom(e.to_string()))?;
    if spec.body.radii_mm.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Phantom("body radii must be positive".into()));
    }
    for (i, b) in spec.bones.iter().enumerate() {
        if b.hu < BONE_HU_RANGE.0 || b.hu > BONE_HU_RANGE.1 {
            return Err(Error::Phantom(format!(
                "bone {i}: HU {} outside {}..={}",
                b.hu, BONE_HU_RANGE.0, BONE_HU_RANGE.1
            )));
        }
        let ok = match b.shape {
            BoneShape::Ellipsoid { radii_mm, .. } => radii_mm.iter().all(|&r| r > 0.0),
            BoneShape::Tube {
                radius_mm, z_range, ..
            } => radius_mm > 0.0 && z_range[0] <= z_range[1],
        };
        if !ok {
            return Err(Error::Phantom(format!("bone {i}: degenerate shape")));
        }
    }
    if spec.lesions.len() > u8::MAX as usize {
        return Err(Error::Phantom("at most 255 lesions".into()));
    }
    let min_in_plane = spec.spacing[0].min(spec.spacing[1]);
    for (i, l) in spec.lesions.iter().enumerate() {
        let id = spec.lesion_id(i);
        let sign_ok = match l.kind {
            LesionKind::Lytic => l.hu_offset < 0,
            LesionKind::Blastic => l.hu_offset > 0,
            LesionKind::Mixed => l.hu_offset != 0,
        };
        if !sign_ok {
            return Err(Error::Phantom(format!(
                "lesion {id}: {:?} lesion with HU offset {}",
                l.kind, l.hu_offset
            )));
        }
        if !(l.radius_mm >= 1.5 * min_in_plane) {
            return Err(Error::Phantom(format!(
                "lesion {id}: radius {} mm is below 1.5 in-plane voxels",
                l.radius_mm
            )));
        }
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::Phantom("noise_sigma must be >= 0".into()));
    }
    Ok(g)
}

/// Builds the phantom volume, ground truth and synthesized RECIST records.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    let g = validate(spec)?;
    let [nx, ny, nz] = g.dims;
    let sp = g.spacing;

    let mut hu = Grid::filled(g, AIR_HU);
    let mut body = Grid::filled(g, false);
    let mut bone_of: Grid<u8> = Grid::filled(g, 0);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = [x, y, z];
                if ellipsoid_r2(p, spec.body.center, spec.body.radii_mm, sp) <= 1.0 {
                    body.set(x, y, z, true);
                    hu.set(x, y, z, SOFT_TISSUE_HU);
                }
                // Later bones win where bones overlap.
                for (b, bone) in spec.bones.iter().enumerate() {
                    if bone.shape.contains(p, sp) {
                        bone_of.set(x, y, z, b as u8 + 1);
                        hu.set(x, y, z, bone.hu);
                    }
                }
            }
        }
    }

    let mut lesion_ids: Grid<u8> = Grid::filled(g, 0);
    let mut host_bone_hu = Vec::with_capacity(spec.lesions.len());
    for (i, l) in spec.lesions.iter().enumerate() {
        let id = spec.lesion_id(i);
        let r_vox: Vec<i64> = (0..3).map(|a| (l.radius_mm / sp[a]).ceil() as i64 + 1).collect();
        let c: Vec<i64> = l.center.iter().map(|&c| c.round() as i64).collect();
        let mut host: Option<i16> = None;
        let mut voxels = 0usize;
        for z in c[2] - r_vox[2]..=c[2] + r_vox[2] {
            for y in c[1] - r_vox[1]..=c[1] + r_vox[1] {
                for x in c[0] - r_vox[0]..=c[0] + r_vox[0] {
                    let radial = l.radial([x as f64, y as f64, z as f64], sp);
                    if radial > 1.0 {
                        continue;
                    }
                    if !g.contains(x, y, z) {
                        return Err(Error::Phantom(format!("lesion {id} extends outside the volume")));
                    }
                    let p = [x as usize, y as usize, z as usize];
                    let b = bone_of.get(p[0], p[1], p[2]);
                    if b == 0 {
                        return Err(Error::Phantom(format!(
                            "lesion {id} is not fully inside bone (voxel {p:?})"
                        )));
                    }
                    let bhu = spec.bones[b as usize - 1].hu;
                    if host.is_some_and(|h| h != bhu) {
                        return Err(Error::Phantom(format!("lesion {id} spans bones of different HU")));
                    }
                    host = Some(bhu);
                    if lesion_ids.get(p[0], p[1], p[2]) != 0 {
                        return Err(Error::Phantom(format!("lesion {id} overlaps another lesion")));
                    }
                    lesion_ids.set(p[0], p[1], p[2], (i + 1) as u8);
                    hu.set(p[0], p[1], p[2], l.hu(radial, bhu));
                    voxels += 1;
                }
            }
        }
        if voxels == 0 {
            return Err(Error::Phantom(format!("lesion {id} covers no voxel center")));
        }
        host_bone_hu.push(host.expect("non-empty lesion"));
    }

    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
        for v in hu.data_mut() {
            let noisy = *v as f64 + normal.sample(&mut rng);
            *v = round_half_away(noisy).clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        }
    }

    let skeleton = bone_of.map(|&b| b != 0);
    let labels = {
        let data = body
            .data()
            .iter()
            .zip(skeleton.data())
            .zip(lesion_ids.data())
            .map(|((&b, &s), &l)| {
                if l != 0 {
                    LabelClass::Lesion
                } else if s {
                    LabelClass::Skeleton
                } else if b {
                    LabelClass::Body
                } else {
                    LabelClass::Background
                }
                .code()
            })
            .collect();
        LabelVolume::new(Grid::from_vec(g, data)?)?
    };

    let recist = (0..spec.lesions.len())
        .map(|i| synthesize_recist(&lesion_ids, (i + 1) as u8, &spec.lesion_id(i), &spec.series_id))
        .collect::<Result<Vec<_>>>()?;

    Ok(Phantom {
        spec: spec.clone(),
        volume: hu,
        labels,
        lesion_ids,
        body,
        skeleton,
        recist,
        host_bone_hu,
    })
}

/// RECIST cross on the slice with the largest lesion cross-section: the
/// longest in-plane diameter between lesion pixels, and the perpendicular
/// extent through its midpoint.
pub fn synthesize_recist(
    lesion_ids: &Grid<u8>,
    id: u8,
    lesion_id: &str,
    series_id: &str,
) -> Result<RecistMeasurement> {
    let g = lesion_ids.geometry();
    let [nx, ny, nz] = g.dims;
    let (sx, sy) = (g.spacing[0], g.spacing[1]);

    let areas: Vec<usize> = (0..nz)
        .map(|z| {
            let n = nx * ny;
            lesion_ids.data()[z * n..(z + 1) * n].iter().filter(|&&v| v == id).count()
        })
        .collect();
    let max_area = *areas.iter().max().unwrap_or(&0);
    if max_area == 0 {
        return Err(Error::Phantom(format!("lesion {lesion_id} is empty")));
    }
    // Largest cross-section; ties go to the middle of the tied run.
    let tied: Vec<usize> = (0..nz).filter(|&z| areas[z] == max_area).collect();
    let z = tied[(tied.len() - 1) / 2];

    let pixels: Vec<(usize, usize)> = (0..ny)
        .flat_map(|y| (0..nx).map(move |x| (x, y)))
        .filter(|&(x, y)| lesion_ids.get(x, y, z) == id)
        .collect();
    let is_edge = |x: usize, y: usize| {
        x == 0
            || y == 0
            || x + 1 == nx
            || y + 1 == ny
            || lesion_ids.get(x - 1, y, z) != id
            || lesion_ids.get(x + 1, y, z) != id
            || lesion_ids.get(x, y - 1, z) != id
            || lesion_ids.get(x, y + 1, z) != id
    };
    let edge: Vec<(usize, usize)> = pixels.iter().cloned().filter(|&(x, y)| is_edge(x, y)).collect();

    let phys = |(x, y): (usize, usize)| (x as f64 * sx, y as f64 * sy);
    let mut best = (edge[0], edge[0], 0.0f64);
    for (i, &a) in edge.iter().enumerate() {
        for &b in &edge[i + 1..] {
            let (ax, ay) = phys(a);
            let (bx, by) = phys(b);
            let d = (ax - bx).hypot(ay - by);
            if d > best.2 {
                best = (a, b, d);
            }
        }
    }
    let (a, b, len) = best;
    if len == 0.0 {
        return Err(Error::Phantom(format!("lesion {lesion_id} is a single pixel")));
    }

    let (ax, ay) = phys(a);
    let (bx, by) = phys(b);
    let (ux, uy) = ((bx - ax) / len, (by - ay) / len);
    let (vx, vy) = (-uy, ux);
    let (mx, my) = ((ax + bx) / 2.0, (ay + by) / 2.0);
    let half = 0.5 * sx.min(sy);
    let mut s_lo = 0.0f64;
    let mut s_hi = 0.0f64;
    for &p in &pixels {
        let (px, py) = phys(p);
        let (dx, dy) = (px - mx, py - my);
        if (dx * ux + dy * uy).abs() <= half {
            let s = dx * vx + dy * vy;
            s_lo = s_lo.min(s);
            s_hi = s_hi.max(s);
        }
    }
    // Thousandths of a pixel, as an annotation tool would store them.
    let snap = |v: f64| (v * 1000.0).round() / 1000.0;
    let to_px = |s: f64| Point::new(snap((mx + s * vx) / sx), snap((my + s * vy) / sy));

    Ok(RecistMeasurement {
        lesion_id: lesion_id.to_string(),
        series_id: series_id.to_string(),
        slice_index: z,
        long_axis: [Point::new(a.0 as f64, a.1 as f64), Point::new(b.0 as f64, b.1 as f64)],
        short_axis: [to_px(s_lo), to_px(s_hi)],
    })
}

/// Controlled transformations of ground-truth lesions into predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbMode {
    Perfect,
    /// Union dilated with a radius-1 ball.
    Dilate,
    /// Union eroded with a radius-1 ball.
    Erode,
    /// Removes `k` lesions chosen by the seed.
    Drop(usize),
    /// Adds `k` 2x2x2 blobs at least one voxel away from every lesion and
    /// from each other.
    AddSpurious(usize),
}

const SPURIOUS_ATTEMPTS: usize = 100_000;

/// Prediction mask derived from per-lesion ground-truth masks.
pub fn perturb_predictions(gt_masks: &[Mask3], mode: PerturbMode, rng_seed: u64) -> Result<Mask3> {
    let Some(first) = gt_masks.first() else {
        return Err(Error::InvalidParameter("no ground-truth masks".into()));
    };
    let g = *first.geometry();
    for m in gt_masks {
        g.ensure_matches(m.geometry(), "ground-truth masks")?;
    }
    let union_of = |masks: &mut dyn Iterator<Item = &Mask3>| {
        let mut out = Grid::filled(g, false);
        for m in masks {
            for (o, &v) in out.data_mut().iter_mut().zip(m.data()) {
                *o |= v;
            }
        }
        out
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    match mode {
        PerturbMode::Perfect => Ok(union_of(&mut gt_masks.iter())),
        PerturbMode::Dilate => Ok(morphology::dilate(&union_of(&mut gt_masks.iter()), 1)),
        PerturbMode::Erode => Ok(morphology::erode(&union_of(&mut gt_masks.iter()), 1)),
        PerturbMode::Drop(k) => {
            if k > gt_masks.len() {
                return Err(Error::InvalidParameter(format!(
                    "cannot drop {k} of {} lesions",
                    gt_masks.len()
                )));
            }
            let dropped = sample(&mut rng, gt_masks.len(), k).into_vec();
            Ok(union_of(
                &mut gt_masks
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !dropped.contains(i))
                    .map(|(_, m)| m),
            ))
        }
        PerturbMode::AddSpurious(k) => {
            let mut out = union_of(&mut gt_masks.iter());
            let [nx, ny, nz] = g.dims;
            let size = if nx >= 2 && ny >= 2 && nz >= 2 { 2 } else { 1 };
            // Voxels within Chebyshev distance 1 of anything placed so far.
            let mut blocked = chebyshev_dilate(&out);
            let mut placed = 0;
            let mut attempts = 0;
            while placed < k {
                attempts += 1;
                if attempts > SPURIOUS_ATTEMPTS {
                    return Err(Error::InvalidParameter(format!(
                        "no room for {k} spurious components ({placed} placed)"
                    )));
                }
                let x0 = rng.random_range(0..=nx - size);
                let y0 = rng.random_range(0..=ny - size);
                let z0 = rng.random_range(0..=nz - size);
                let cube = || {
                    (z0..z0 + size).flat_map(move |z| {
                        (y0..y0 + size).flat_map(move |y| (x0..x0 + size).map(move |x| (x, y, z)))
                    })
                };
                if cube().any(|(x, y, z)| blocked.get(x, y, z)) {
                    continue;
                }
                let mut blob = Grid::filled(g, false);
                for (x, y, z) in cube() {
                    out.set(x, y, z, true);
                    blob.set(x, y, z, true);
                }
                for (b, &n) in blocked.data_mut().iter_mut().zip(chebyshev_dilate(&blob).data()) {
                    *b |= n;
                }
                placed += 1;
            }
            Ok(out)
        }
    }
}

fn chebyshev_dilate(mask: &Mask3) -> Mask3 {
    let g = *mask.geometry();
    let mut out = mask.clone();
    let [nx, ny, nz] = g.dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !mask.get(x, y, z) {
                    continue;
                }
                for dz in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (px, py, pz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                            if g.contains(px, py, pz) {
                                out.set(px as usize, py as usize, pz as usize, true);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}
