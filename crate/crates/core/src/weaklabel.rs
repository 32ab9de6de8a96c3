//! Weak 3D lesion labels and the merged training label volume.
//!
//! A weak lesion mask covers three slices: the GrabCut delineation on the
//! measured slice and the filled RECIST bounding box on the slices directly
//! above and below (two slices at the volume edges).

use serde::Serialize;

use crate::detect::{largest_component, Connectivity3D};
use crate::error::{Error, Result};
use crate::morphology;
use crate::recist::{BBox, SeedGeometry};
use crate::volume::{Geometry, Grid, LabelClass, LabelVolume, Mask2, Mask3, Volume3D};

pub const BODY_THRESHOLD_HU: i16 = -500;
pub const BONE_THRESHOLD_HU: i16 = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct WeakLesionMask {
    pub lesion_id: String,
    pub center_slice: usize,
    pub center_mask: Mask2,
    pub bbox: BBox,
    /// Occupied slices in increasing order.
    pub z_extent: Vec<usize>,
}

impl WeakLesionMask {
    /// In-plane footprint on slice `z`, if occupied.
    pub fn footprint(&self, z: usize) -> Option<Mask2> {
        if !self.z_extent.contains(&z) {
            None
        } else if z == self.center_slice {
            Some(self.center_mask.clone())
        } else {
            Some(self.bbox.to_mask(self.center_mask.width, self.center_mask.height))
        }
    }

    /// `(x, y, z)` of every occupied voxel.
    pub fn voxels(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let (w, h) = (self.center_mask.width, self.center_mask.height);
        self.z_extent.iter().flat_map(move |&z| {
            let center = z == self.center_slice;
            (0..h).flat_map(move |y| {
                (0..w).filter_map(move |x| {
                    let on = if center {
                        self.center_mask.get(x, y)
                    } else {
                        self.bbox.contains(x, y)
                    };
                    on.then_some([x, y, z])
                })
            })
        })
    }

    pub fn voxel_count(&self) -> usize {
        let box_slices = self.z_extent.len() - 1;
        self.center_mask.count() + box_slices * self.bbox.area()
    }
}

/// Extends a center-slice mask to the slices above and below with the
/// measurement's bounding box.
pub fn build_weak_mask(
    lesion_id: impl Into<String>,
    center_mask: &Mask2,
    geometry: &SeedGeometry,
    nz: usize,
) -> Result<WeakLesionMask> {
    let lesion_id = lesion_id.into();
    let z = geometry.slice_index;
    if z >= nz {
        return Err(Error::Lesion {
            lesion_id,
            message: format!("slice {z} out of range 0..{nz}"),
        });
    }
    if center_mask.count() == 0 {
        return Err(Error::EmptyMask(format!(
            "lesion {lesion_id}: center-slice mask is empty"
        )));
    }
    let bbox = geometry.bbox;
    for y in 0..center_mask.height {
        for x in 0..center_mask.width {
            if center_mask.get(x, y) && !bbox.contains(x, y) {
                return Err(Error::Lesion {
                    lesion_id,
                    message: format!("center mask pixel ({x}, {y}) outside bbox {bbox:?}"),
                });
            }
        }
    }
    let z_extent = (z.saturating_sub(1)..=(z + 1).min(nz - 1)).collect();
    Ok(WeakLesionMask {
        lesion_id,
        center_slice: z,
        center_mask: center_mask.clone(),
        bbox,
        z_extent,
    })
}

/// Union of all weak lesion masks as a 3D mask.
pub fn lesion_union(lesions: &[WeakLesionMask], geometry: &Geometry) -> Result<Mask3> {
    let mut out = Grid::filled(*geometry, false);
    let [nx, ny, nz] = geometry.dims;
    for l in lesions {
        if l.center_mask.width != nx || l.center_mask.height != ny {
            return Err(Error::GeometryMismatch(format!(
                "lesion {} mask is {}x{}, volume is {nx}x{ny}",
                l.lesion_id, l.center_mask.width, l.center_mask.height
            )));
        }
        if l.z_extent.iter().any(|&z| z >= nz) {
            return Err(Error::GeometryMismatch(format!(
                "lesion {} extends beyond slice {}",
                l.lesion_id,
                nz - 1
            )));
        }
        for [x, y, z] in l.voxels() {
            out.set(x, y, z, true);
        }
    }
    Ok(out)
}

/// Per-voxel precedence lesion > skeleton > body > background.
pub fn merge_labels(
    body: &Mask3,
    skeleton: &Mask3,
    lesions: &[WeakLesionMask],
    geometry: &Geometry,
) -> Result<LabelVolume> {
    geometry.ensure_matches(body.geometry(), "body mask")?;
    geometry.ensure_matches(skeleton.geometry(), "skeleton mask")?;
    let lesion = lesion_union(lesions, geometry)?;
    let data = body
        .data()
        .iter()
        .zip(skeleton.data())
        .zip(lesion.data())
        .map(|((&b, &s), &l)| {
            if l {
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
    LabelVolume::new(Grid::from_vec(*geometry, data)?)
}

/// Body stand-in: HU > -500, largest 26-connected component, closing with a
/// radius-1 ball, then per-slice hole filling.
pub fn fallback_body_mask(volume: &Volume3D) -> Result<Mask3> {
    let above = volume.map(|&hu| hu > BODY_THRESHOLD_HU);
    let largest = largest_component(&above, Connectivity3D::TwentySix)
        .ok_or_else(|| Error::EmptyMask("no voxel above -500 HU; cannot find a body".into()))?;
    let closed = morphology::close(&largest, 1);
    Ok(morphology::fill_holes_per_slice(&closed))
}

/// Skeleton stand-in: `(HU > 200) ∩ body`, opened with a radius-1 ball.
pub fn fallback_skeleton_mask(volume: &Volume3D, body: &Mask3) -> Result<Mask3> {
    volume
        .geometry()
        .ensure_matches(body.geometry(), "volume vs body mask")?;
    let data = volume
        .data()
        .iter()
        .zip(body.data())
        .map(|(&hu, &b)| b && hu > BONE_THRESHOLD_HU)
        .collect();
    let bone = Grid::from_vec(*volume.geometry(), data)?;
    Ok(morphology::open(&bone, 1))
}

/// Per-lesion line of a weak-label run summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LesionSummary {
    pub lesion_id: String,
    pub center_slice: usize,
    pub z_extent: Vec<usize>,
    pub center_voxels: usize,
    pub voxel_count: usize,
    pub bbox: BBox,
}

impl From<&WeakLesionMask> for LesionSummary {
    fn from(m: &WeakLesionMask) -> Self {
        Self {
            lesion_id: m.lesion_id.clone(),
            center_slice: m.center_slice,
            z_extent: m.z_extent.clone(),
            center_voxels: m.center_mask.count(),
            voxel_count: m.voxel_count(),
            bbox: m.bbox,
        }
    }
}
