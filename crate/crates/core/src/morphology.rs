//! Binary morphology on 3D masks with a Euclidean ball structuring element.
//!
//! Out-of-bounds voxels are ignored: dilation sees them as background and
//! erosion as foreground, so masks touching the volume edge are not eroded
//! from outside.

use std::collections::VecDeque;

use crate::volume::{Geometry, Mask2, Mask3};

/// Integer offsets with `dx² + dy² + dz² <= radius²`.
pub fn ball_offsets(radius: usize) -> Vec<[i64; 3]> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy + dz * dz <= r * r {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

fn apply(mask: &Mask3, radius: usize, want: bool) -> Mask3 {
    let g: Geometry = *mask.geometry();
    let offsets = ball_offsets(radius);
    let src = mask.data();
    let mut out = mask.clone();
    let [nx, ny, nz] = g.dims;
    let dst = out.data_mut();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = g.index(x, y, z);
                // Dilation flips background voxels touching foreground;
                // erosion flips foreground voxels touching background.
                if src[i] == want {
                    continue;
                }
                let hit = offsets.iter().any(|&[dx, dy, dz]| {
                    let (px, py, pz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                    g.contains(px, py, pz) && src[g.index(px as usize, py as usize, pz as usize)] == want
                });
                if hit {
                    dst[i] = want;
                }
            }
        }
    }
    out
}

pub fn dilate(mask: &Mask3, radius: usize) -> Mask3 {
    if radius == 0 {
        return mask.clone();
    }
    apply(mask, radius, true)
}

pub fn erode(mask: &Mask3, radius: usize) -> Mask3 {
    if radius == 0 {
        return mask.clone();
    }
    apply(mask, radius, false)
}

pub fn open(mask: &Mask3, radius: usize) -> Mask3 {
    dilate(&erode(mask, radius), radius)
}

pub fn close(mask: &Mask3, radius: usize) -> Mask3 {
    erode(&dilate(mask, radius), radius)
}

/// Fills background regions not 4-connected to the image border.
pub fn fill_holes_2d(mask: &Mask2) -> Mask2 {
    let (w, h) = (mask.width, mask.height);
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |x: usize, y: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<(usize, usize)>| {
        let i = x + w * y;
        if !mask.data[i] && !outside[i] {
            outside[i] = true;
            queue.push_back((x, y));
        }
    };
    for x in 0..w {
        seed(x, 0, &mut outside, &mut queue);
        seed(x, h - 1, &mut outside, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut outside, &mut queue);
        seed(w - 1, y, &mut outside, &mut queue);
    }
    while let Some((x, y)) = queue.pop_front() {
        if x > 0 {
            seed(x - 1, y, &mut outside, &mut queue);
        }
        if x + 1 < w {
            seed(x + 1, y, &mut outside, &mut queue);
        }
        if y > 0 {
            seed(x, y - 1, &mut outside, &mut queue);
        }
        if y + 1 < h {
            seed(x, y + 1, &mut outside, &mut queue);
        }
    }
    Mask2 {
        width: w,
        height: h,
        data: outside.iter().map(|&o| !o).collect(),
    }
}

/// [`fill_holes_2d`] on every axial slice.
pub fn fill_holes_per_slice(mask: &Mask3) -> Mask3 {
    let [nx, ny, nz] = mask.dims();
    let mut out = mask.clone();
    let n = nx * ny;
    for z in 0..nz {
        let slice = mask.extract_slice(z).expect("z in range");
        let filled = fill_holes_2d(&slice);
        out.data_mut()[z * n..(z + 1) * n].copy_from_slice(&filled.data);
    }
    out
}
