//! QC overlays: one RGB PNG per labelled axial slice.
//!
//! The base is the windowed slice in gray. Body outline is red, skeleton
//! outline green, and lesion pixels are blended 50/50 with yellow.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::{window_slice, Image, LabelClass, LabelVolume, Mask2, Volume3D, WindowSpec};

pub const BODY_COLOR: [u8; 3] = [255, 0, 0];
pub const SKELETON_COLOR: [u8; 3] = [0, 255, 0];
pub const LESION_COLOR: [u8; 3] = [255, 255, 0];

pub type RgbImage = Image<[u8; 3]>;

/// 50% alpha blend, rounding half up.
#[inline]
pub fn blend_half(base: u8, color: u8) -> u8 {
    (base as u16 + color as u16).div_ceil(2) as u8
}

/// Slices holding at least one nonzero label, ascending.
pub fn labelled_slices(labels: &LabelVolume) -> Vec<usize> {
    let [nx, ny, nz] = labels.geometry().dims;
    let n = nx * ny;
    let data = labels.grid().data();
    (0..nz)
        .filter(|&z| data[z * n..(z + 1) * n].iter().any(|&v| v != 0))
        .collect()
}

fn slice_mask(labels: &LabelVolume, z: usize, at_least: LabelClass) -> Mask2 {
    let [nx, ny, _] = labels.geometry().dims;
    let n = nx * ny;
    let min = at_least.code();
    Mask2 {
        width: nx,
        height: ny,
        data: labels.grid().data()[z * n..(z + 1) * n]
            .iter()
            .map(|&v| v >= min)
            .collect(),
    }
}

/// Mask pixels with a 4-neighbor outside the mask or on the image border.
fn contour(mask: &Mask2) -> Mask2 {
    let (w, h) = (mask.width, mask.height);
    let mut out = Mask2::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let edge = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1);
            out.set(x, y, edge);
        }
    }
    out
}

pub fn render_slice(volume: &Volume3D, labels: &LabelVolume, z: usize, window: &WindowSpec) -> Result<RgbImage> {
    volume
        .geometry()
        .ensure_matches(labels.geometry(), "volume vs label volume")?;
    let gray = window_slice(volume, z, window)?;
    let body = contour(&slice_mask(labels, z, LabelClass::Body));
    let skeleton = contour(&slice_mask(labels, z, LabelClass::Skeleton));
    let lesion = slice_mask(labels, z, LabelClass::Lesion);

    let data = gray
        .data
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            if lesion.data[i] {
                LESION_COLOR.map(|c| blend_half(g, c))
            } else if skeleton.data[i] {
                SKELETON_COLOR
            } else if body.data[i] {
                BODY_COLOR
            } else {
                [g; 3]
            }
        })
        .collect();
    Ok(RgbImage {
        width: gray.width,
        height: gray.height,
        data,
    })
}

pub fn write_png(image: &RgbImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), image.width as u32, image.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = image.data.iter().flatten().copied().collect();
    let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))
}

pub fn overlay_file_name(z: usize) -> String {
    format!("slice_{z:04}.png")
}

/// Writes `slice_%04d.png` for every labelled slice and returns the paths.
pub fn write_overlays(
    volume: &Volume3D,
    labels: &LabelVolume,
    out_dir: impl AsRef<Path>,
    window: &WindowSpec,
) -> Result<Vec<PathBuf>> {
    volume
        .geometry()
        .ensure_matches(labels.geometry(), "volume vs label volume")?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for z in labelled_slices(labels) {
        let path = out_dir.join(overlay_file_name(z));
        write_png(&render_slice(volume, labels, z, window)?, &path)?;
        written.push(path);
    }
    Ok(written)
}
