//! Minimal NIfTI-1 single-file (`.nii` / `.nii.gz`) reader and writer.
//!
//! Only 3D images are accepted. Both byte orders are read; files are always
//! written little-endian with a 352-byte header block (348-byte header plus
//! an empty extension flag).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{round_half_away, Geometry, Grid, LabelVolume, Mask3, Volume3D};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_INT32: i16 = 8;
pub const DT_FLOAT32: i16 = 16;
pub const DT_FLOAT64: i16 = 64;
pub const DT_INT8: i16 = 256;
pub const DT_UINT16: i16 = 512;
pub const DT_UINT32: i16 = 768;

fn bytes_per_voxel(datatype: i16) -> Option<usize> {
    match datatype {
        DT_UINT8 | DT_INT8 => Some(1),
        DT_INT16 | DT_UINT16 => Some(2),
        DT_INT32 | DT_UINT32 | DT_FLOAT32 => Some(4),
        DT_FLOAT64 => Some(8),
        _ => None,
    }
}

/// Header fields this crate reads back.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub geometry: Geometry,
    pub datatype: i16,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub vox_offset: usize,
    little_endian: bool,
}

impl NiftiHeader {
    /// Whether `scl_slope`/`scl_inter` change stored values.
    pub fn has_scaling(&self) -> bool {
        self.scl_slope != 0.0 && !(self.scl_slope == 1.0 && self.scl_inter == 0.0)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    little_endian: bool,
}

impl Cursor<'_> {
    fn i16(&self, at: usize) -> i16 {
        let b = [self.bytes[at], self.bytes[at + 1]];
        if self.little_endian {
            i16::from_le_bytes(b)
        } else {
            i16::from_be_bytes(b)
        }
    }

    fn f32(&self, at: usize) -> f32 {
        let b: [u8; 4] = self.bytes[at..at + 4].try_into().unwrap();
        if self.little_endian {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    }
}

/// Parses the fixed 348-byte header.
pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Nifti(format!(
            "file too short for a header ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[344..348] != MAGIC_SINGLE {
        return Err(Error::Nifti(format!(
            "bad magic {:?}, expected \"n+1\\0\"",
            &bytes[344..348]
        )));
    }
    let little_endian = match i32::from_le_bytes(bytes[0..4].try_into().unwrap()) {
        348 => true,
        _ if i32::from_be_bytes(bytes[0..4].try_into().unwrap()) == 348 => false,
        other => return Err(Error::Nifti(format!("sizeof_hdr is {other}, expected 348"))),
    };
    let c = Cursor {
        bytes,
        little_endian,
    };

    let ndim = c.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::Nifti(format!("dim[0] = {ndim} out of range 1..=7")));
    }
    let mut dim = [1usize; 7];
    for (i, d) in dim.iter_mut().enumerate().take(ndim as usize) {
        let v = c.i16(42 + 2 * i);
        if v < 1 {
            return Err(Error::Nifti(format!("dim[{}] = {v} is not positive", i + 1)));
        }
        *d = v as usize;
    }
    let non_singleton = dim.iter().filter(|&&d| d > 1).count();
    if non_singleton > 3 {
        return Err(Error::Nifti(format!(
            "{non_singleton} non-singleton axes, only 3D volumes are supported"
        )));
    }
    if dim[3..].iter().any(|&d| d > 1) {
        return Err(Error::Nifti(format!(
            "dims {:?} extend beyond the three spatial axes",
            &dim[..ndim as usize]
        )));
    }

    let datatype = c.i16(70);
    if bytes_per_voxel(datatype).is_none() {
        return Err(Error::Nifti(format!("unsupported datatype {datatype}")));
    }

    let mut spacing = [1.0f64; 3];
    for (i, s) in spacing.iter_mut().enumerate() {
        let p = (c.f32(80 + 4 * i) as f64).abs();
        if p > 0.0 && p.is_finite() {
            *s = p;
        } else if dim[i] > 1 || p != 0.0 {
            log::warn!("pixdim[{}] = {p} is not a valid spacing; using 1 mm", i + 1);
        }
    }

    let vox_offset = c.f32(108);
    if !(vox_offset >= HEADER_SIZE as f32) {
        return Err(Error::Nifti(format!("vox_offset {vox_offset} is invalid")));
    }

    let qform_code = c.i16(252);
    let sform_code = c.i16(254);
    let origin = if qform_code > 0 {
        [c.f32(268) as f64, c.f32(272) as f64, c.f32(276) as f64]
    } else if sform_code > 0 {
        [c.f32(292) as f64, c.f32(308) as f64, c.f32(324) as f64]
    } else {
        [0.0; 3]
    };

    let geometry = Geometry::new([dim[0], dim[1], dim[2]], spacing, origin)
        .map_err(|e| Error::Nifti(e.to_string()))?;

    Ok(NiftiHeader {
        geometry,
        datatype,
        scl_slope: c.f32(112),
        scl_inter: c.f32(116),
        vox_offset: vox_offset as usize,
        little_endian,
    })
}

fn load_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    decompress_if_gzip(raw).map_err(|e| Error::io(path, e))
}

fn decompress_if_gzip(raw: Vec<u8>) -> std::io::Result<Vec<u8>> {
    if raw.len() >= 2 && raw[0] == 0x1F && raw[1] == 0x8B {
        let mut out = Vec::with_capacity(raw.len() * 4);
        MultiGzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Decodes the payload, applying scaling, and converts each value with `f`.
fn decode<T>(
    bytes: &[u8],
    mut f: impl FnMut(f64) -> Result<T>,
) -> Result<(NiftiHeader, Vec<T>)> {
    let header = parse_header(bytes)?;
    let width = bytes_per_voxel(header.datatype).expect("checked in parse_header");
    let n = header.geometry.len();
    let start = header.vox_offset;
    let end = start + n * width;
    if bytes.len() < end {
        return Err(Error::Nifti(format!(
            "truncated payload: need {} bytes after offset {start}, have {}",
            n * width,
            bytes.len().saturating_sub(start)
        )));
    }
    let payload = &bytes[start..end];
    let le = header.little_endian;
    let scale = header.has_scaling();
    let (slope, inter) = (header.scl_slope as f64, header.scl_inter as f64);

    let mut out = Vec::with_capacity(n);
    for chunk in payload.chunks_exact(width) {
        let raw = read_scalar(chunk, header.datatype, le);
        let v = if scale { raw * slope + inter } else { raw };
        if !v.is_finite() {
            return Err(Error::Nifti("non-finite voxel value".into()));
        }
        out.push(f(v)?);
    }
    Ok((header, out))
}

fn read_scalar(b: &[u8], datatype: i16, le: bool) -> f64 {
    macro_rules! rd {
        ($t:ty) => {{
            let arr = b.try_into().unwrap();
            (if le {
                <$t>::from_le_bytes(arr)
            } else {
                <$t>::from_be_bytes(arr)
            }) as f64
        }};
    }
    match datatype {
        DT_UINT8 => b[0] as f64,
        DT_INT8 => b[0] as i8 as f64,
        DT_INT16 => rd!(i16),
        DT_UINT16 => rd!(u16),
        DT_INT32 => rd!(i32),
        DT_UINT32 => rd!(u32),
        DT_FLOAT32 => rd!(f32),
        DT_FLOAT64 => rd!(f64),
        _ => unreachable!("datatype validated"),
    }
}

/// Decodes an in-memory NIfTI file into Hounsfield units.
pub fn decode_volume(bytes: &[u8]) -> Result<Volume3D> {
    let mut clamped = 0usize;
    let (header, data) = decode(bytes, |v| {
        let r = round_half_away(v);
        if r < i16::MIN as f64 || r > i16::MAX as f64 {
            clamped += 1;
        }
        Ok(r.clamp(i16::MIN as f64, i16::MAX as f64) as i16)
    })?;
    if clamped > 0 {
        log::warn!("{clamped} voxel values saturated to the 16-bit range");
    }
    Grid::from_vec(header.geometry, data)
}

/// Reads a 3D intensity volume. Float data is rounded half away from zero;
/// `scl_slope`/`scl_inter` are applied when the slope is nonzero.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    let path = path.as_ref();
    decode_volume(&load_bytes(path)?).map_err(|e| with_path(e, path))
}

/// Reads a label volume; every value must be an integer class code in 0..=3.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let path = path.as_ref();
    let grid = read_u8_grid(path)?;
    LabelVolume::new(grid).map_err(|e| with_path(e, path))
}

/// Reads any integer-valued volume with values in 0..=255.
pub fn read_u8_grid(path: impl AsRef<Path>) -> Result<Grid<u8>> {
    let path = path.as_ref();
    let bytes = load_bytes(path)?;
    let (header, data) = decode(&bytes, |v| {
        if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
            Err(Error::Nifti(format!("value {v} is not an integer code in 0..=255")))
        } else {
            Ok(v as u8)
        }
    })
    .map_err(|e| with_path(e, path))?;
    Grid::from_vec(header.geometry, data)
}

/// Reads a binary mask: any nonzero voxel is foreground.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask3> {
    let path = path.as_ref();
    let bytes = load_bytes(path)?;
    let (header, data) = decode(&bytes, |v| Ok(v != 0.0)).map_err(|e| with_path(e, path))?;
    Grid::from_vec(header.geometry, data)
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Nifti(msg) => Error::Nifti(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Voxel types that can be written.
pub trait NiftiElement: Copy {
    const DATATYPE: i16;
    const BITPIX: i16;
    fn put(self, out: &mut Vec<u8>);
}

impl NiftiElement for i16 {
    const DATATYPE: i16 = DT_INT16;
    const BITPIX: i16 = 16;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl NiftiElement for u8 {
    const DATATYPE: i16 = DT_UINT8;
    const BITPIX: i16 = 8;
    fn put(self, out: &mut Vec<u8>) {
        out.push(self);
    }
}

impl NiftiElement for bool {
    const DATATYPE: i16 = DT_UINT8;
    const BITPIX: i16 = 8;
    fn put(self, out: &mut Vec<u8>) {
        out.push(self as u8);
    }
}

impl NiftiElement for u16 {
    const DATATYPE: i16 = DT_UINT16;
    const BITPIX: i16 = 16;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl NiftiElement for f32 {
    const DATATYPE: i16 = DT_FLOAT32;
    const BITPIX: i16 = 32;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

/// Writes a 352-byte little-endian header for the given geometry.
pub fn encode_header(
    geometry: &Geometry,
    datatype: i16,
    bitpix: i16,
    scl_slope: f32,
    scl_inter: f32,
) -> Vec<u8> {
    let mut h = vec![0u8; VOX_OFFSET];
    let put_i16 = |h: &mut [u8], at: usize, v: i16| h[at..at + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8], at: usize, v: f32| h[at..at + 4].copy_from_slice(&v.to_le_bytes());

    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    put_i16(&mut h, 40, 3);
    for (i, &d) in geometry.dims.iter().enumerate() {
        put_i16(&mut h, 42 + 2 * i, d as i16);
    }
    for i in 3..7 {
        put_i16(&mut h, 42 + 2 * i, 1);
    }
    put_i16(&mut h, 70, datatype);
    put_i16(&mut h, 72, bitpix);
    put_f32(&mut h, 76, 1.0); // qfac
    for (i, &s) in geometry.spacing.iter().enumerate() {
        put_f32(&mut h, 80 + 4 * i, s as f32);
    }
    put_f32(&mut h, 108, VOX_OFFSET as f32);
    put_f32(&mut h, 112, scl_slope);
    put_f32(&mut h, 116, scl_inter);
    h[123] = 2 | 8; // mm, s
    put_i16(&mut h, 252, 1);
    put_i16(&mut h, 254, 1);
    let [ox, oy, oz] = geometry.origin;
    put_f32(&mut h, 268, ox as f32);
    put_f32(&mut h, 272, oy as f32);
    put_f32(&mut h, 276, oz as f32);
    let [sx, sy, sz] = geometry.spacing;
    for (row, vals) in [
        [sx, 0.0, 0.0, ox],
        [0.0, sy, 0.0, oy],
        [0.0, 0.0, sz, oz],
    ]
    .iter()
    .enumerate()
    {
        for (j, &v) in vals.iter().enumerate() {
            put_f32(&mut h, 280 + 16 * row + 4 * j, v as f32);
        }
    }
    h[344..348].copy_from_slice(MAGIC_SINGLE);
    h
}

/// Serializes a grid as an uncompressed NIfTI-1 byte stream.
pub fn encode<T: NiftiElement>(grid: &Grid<T>) -> Vec<u8> {
    let mut out = encode_header(grid.geometry(), T::DATATYPE, T::BITPIX, 1.0, 0.0);
    out.reserve(grid.data().len() * (T::BITPIX as usize / 8));
    for &v in grid.data() {
        v.put(&mut out);
    }
    out
}

/// Writes a grid; paths ending in `.gz` are gzip-compressed.
pub fn write_volume<T: NiftiElement>(grid: &Grid<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(grid);
    write_bytes(&bytes, path)
}

pub fn write_labels(labels: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    write_volume(labels.grid(), path)
}

pub(crate) fn write_bytes(bytes: &[u8], path: &Path) -> Result<()> {
    let gz = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("gz"))
        .unwrap_or(false);
    let data = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes.to_vec()
    };
    fs::write(path, data).map_err(|e| Error::io(path, e))
}
