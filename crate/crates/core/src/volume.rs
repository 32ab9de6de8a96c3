//! Volume containers, 2D slice images and Hounsfield-unit windowing.
//!
//! All grids are stored x-fastest (`x + nx * (y + ny * z)`), which is also the
//! on-disk order of NIfTI-1 payloads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spacing and origin tolerance used when comparing geometries, in mm.
/// NIfTI stores both as `f32`.
pub const GEOMETRY_TOLERANCE_MM: f64 = 1e-4;

/// Voxel grid geometry shared by intensity volumes, label volumes and masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    /// mm per voxel.
    pub spacing: [f64; 3],
    /// mm.
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidGeometry(format!(
                "dims must be positive, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidGeometry(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "origin must be finite, got {origin:?}"
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
        })
    }

    /// Unit spacing, zero origin.
    pub fn with_dims(dims: [usize; 3]) -> Result<Self> {
        Self::new(dims, [1.0; 3], [0.0; 3])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice_len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.dims[0] && y < self.dims[1] && z < self.dims[2]);
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.dims[0]
            && (y as usize) < self.dims[1]
            && (z as usize) < self.dims[2]
    }

    /// Same dims, spacing and origin within [`GEOMETRY_TOLERANCE_MM`].
    pub fn matches(&self, other: &Geometry) -> bool {
        self.dims == other.dims
            && self
                .spacing
                .iter()
                .zip(other.spacing.iter())
                .chain(self.origin.iter().zip(other.origin.iter()))
                .all(|(a, b)| (a - b).abs() <= GEOMETRY_TOLERANCE_MM)
    }

    pub fn ensure_matches(&self, other: &Geometry, what: &str) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GeometryMismatch(format!(
                "{what}: {:?}/{:?} vs {:?}/{:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )))
        }
    }
}

/// A 3D grid of voxels with geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    geometry: Geometry,
    data: Vec<T>,
}

impl<T> Grid<T> {
    pub fn from_vec(geometry: Geometry, data: Vec<T>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::InvalidGeometry(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                geometry.dims
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            geometry: self.geometry,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Clone> Grid<T> {
    pub fn filled(geometry: Geometry, value: T) -> Self {
        Self {
            data: vec![value; geometry.len()],
            geometry,
        }
    }
}

impl<T: Copy> Grid<T> {
    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.geometry.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.geometry.index(x, y, z);
        self.data[i] = value;
    }

    /// Copy of the `nx × ny` plane at index `z`.
    pub fn extract_slice(&self, z: usize) -> Result<Image<T>> {
        let [nx, ny, nz] = self.geometry.dims;
        if z >= nz {
            return Err(Error::InvalidParameter(format!(
                "slice {z} out of range 0..{nz}"
            )));
        }
        let n = nx * ny;
        Ok(Image {
            width: nx,
            height: ny,
            data: self.data[z * n..(z + 1) * n].to_vec(),
        })
    }
}

/// Signed 16-bit Hounsfield units.
pub type Volume3D = Grid<i16>;

/// Binary 3D mask.
pub type Mask3 = Grid<bool>;

/// Windowed display intensities.
pub type WindowedVolume = Grid<u8>;

impl Mask3 {
    pub fn count(&self) -> usize {
        self.data().iter().filter(|&&b| b).count()
    }
}

/// Class codes stored in a [`LabelVolume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum LabelClass {
    Background = 0,
    Body = 1,
    Skeleton = 2,
    Lesion = 3,
}

impl LabelClass {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Background),
            1 => Some(Self::Body),
            2 => Some(Self::Skeleton),
            3 => Some(Self::Lesion),
            _ => None,
        }
    }
}

/// Voxelwise class codes in `{0, 1, 2, 3}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume(Grid<u8>);

impl LabelVolume {
    pub fn new(grid: Grid<u8>) -> Result<Self> {
        if let Some(bad) = grid.data().iter().find(|&&c| c > LabelClass::Lesion.code()) {
            return Err(Error::InvalidParameter(format!(
                "label code {bad} is not one of 0..=3"
            )));
        }
        Ok(Self(grid))
    }

    pub fn background(geometry: Geometry) -> Self {
        Self(Grid::filled(geometry, LabelClass::Background.code()))
    }

    pub fn grid(&self) -> &Grid<u8> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<u8> {
        self.0
    }

    pub fn geometry(&self) -> &Geometry {
        self.0.geometry()
    }

    pub fn class_at(&self, x: usize, y: usize, z: usize) -> LabelClass {
        LabelClass::from_code(self.0.get(x, y, z)).expect("validated label code")
    }

    /// Voxels whose code equals `class`.
    pub fn mask_of(&self, class: LabelClass) -> Mask3 {
        let code = class.code();
        self.0.map(|&c| c == code)
    }

    /// Voxels whose code is at least `class` (e.g. `Body` selects the whole
    /// body region including skeleton and lesions).
    pub fn mask_at_least(&self, class: LabelClass) -> Mask3 {
        let code = class.code();
        self.0.map(|&c| c >= code)
    }

    /// Number of voxels per class code, indexed by code.
    pub fn histogram(&self) -> [usize; 4] {
        let mut h = [0; 4];
        for &c in self.0.data() {
            h[c as usize] += 1;
        }
        h
    }
}

/// A 2D image, row-major with x fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

pub type Mask2 = Image<bool>;

impl<T: Copy> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[x + self.width * y]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[x + self.width * y] = value;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

impl Mask2 {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Rounds half away from zero (`f64::round` semantics), named for clarity at
/// call sites.
#[inline]
pub fn round_half_away(v: f64) -> f64 {
    v.round()
}

/// Display window in Hounsfield units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub center: f64,
    pub width: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            center: 50.0,
            width: 450.0,
        }
    }
}

impl WindowSpec {
    pub fn new(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) || !center.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "window width must be positive (center {center}, width {width})"
            )));
        }
        Ok(Self { center, width })
    }

    pub fn lower(&self) -> f64 {
        self.center - self.width / 2.0
    }

    pub fn upper(&self) -> f64 {
        self.center + self.width / 2.0
    }

    /// Maps one HU value onto `[0, 255]`.
    #[inline]
    pub fn apply(&self, hu: f64) -> u8 {
        let scaled = (hu - self.lower()) / self.width * 255.0;
        round_half_away(scaled).clamp(0.0, 255.0) as u8
    }

    /// Lookup over the full i16 range; whole-volume windowing becomes a gather.
    fn table(&self) -> Vec<u8> {
        (i16::MIN as i32..=i16::MAX as i32)
            .map(|hu| self.apply(hu as f64))
            .collect()
    }
}

/// Linear window of `[center - width/2, center + width/2]` onto `[0, 255]`.
pub fn window_to_u8(volume: &Volume3D, window: &WindowSpec) -> WindowedVolume {
    let table = window.table();
    volume.map(|&hu| table[(hu as i32 - i16::MIN as i32) as usize])
}

/// Windows a single slice without touching the rest of the volume.
pub fn window_slice(volume: &Volume3D, z: usize, window: &WindowSpec) -> Result<Image<u8>> {
    let slice = volume.extract_slice(z)?;
    Ok(Image {
        width: slice.width,
        height: slice.height,
        data: slice.data.iter().map(|&hu| window.apply(hu as f64)).collect(),
    })
}
