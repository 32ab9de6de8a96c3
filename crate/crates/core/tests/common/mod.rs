//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use osteoforge::recist::{BBox, Point, SeedGeometry};
use osteoforge::{Connectivity3D, Geometry, Grid, Image, Mask2, Mask3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Minimum cut by enumerating every source side that holds `s` and not `t`.
pub fn brute_force_min_cut(n: usize, arcs: &[(usize, usize, f64)], s: usize, t: usize) -> f64 {
    let mut best = f64::INFINITY;
    for subset in 0u32..(1 << n) {
        if subset & (1 << s) == 0 || subset & (1 << t) != 0 {
            continue;
        }
        let cut: f64 = arcs
            .iter()
            .filter(|&&(u, v, _)| subset & (1 << u) != 0 && subset & (1 << v) == 0)
            .map(|&(_, _, c)| c)
            .sum();
        best = best.min(cut);
    }
    best
}

fn neighbor_offsets(conn: Connectivity3D) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let nonzero = [dx, dy, dz].iter().filter(|&&d| d != 0).count();
                let keep = match conn {
                    Connectivity3D::Six => nonzero == 1,
                    Connectivity3D::Eighteen => (1..=2).contains(&nonzero),
                    Connectivity3D::TwentySix => nonzero >= 1,
                };
                if keep {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

/// BFS labeling seeded in scan order, so ids follow each component's first
/// voxel exactly like the library's convention.
pub fn flood_fill_labels(mask: &Mask3, conn: Connectivity3D) -> (Vec<u32>, u32) {
    let g = *mask.geometry();
    let offsets = neighbor_offsets(conn);
    let mut labels = vec![0u32; g.len()];
    let mut next = 0u32;
    for start in 0..g.len() {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let [x, y, z] = g.coords(i);
            for [dx, dy, dz] in &offsets {
                let (px, py, pz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                if !g.contains(px, py, pz) {
                    continue;
                }
                let j = g.index(px as usize, py as usize, pz as usize);
                if mask.data()[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    (labels, next)
}

/// TP/FP/FN from explicit voxel-set intersections of every GT/pred pair.
pub fn oracle_counts(gt: &Mask3, pred: &Mask3, conn: Connectivity3D) -> (usize, usize, usize) {
    let (gl, ng) = flood_fill_labels(gt, conn);
    let (pl, np) = flood_fill_labels(pred, conn);
    let voxels_of = |labels: &[u32], id: u32| -> Vec<usize> {
        labels.iter().enumerate().filter(|(_, &l)| l == id).map(|(i, _)| i).collect()
    };
    let gsets: Vec<Vec<usize>> = (1..=ng).map(|i| voxels_of(&gl, i)).collect();
    let psets: Vec<Vec<usize>> = (1..=np).map(|i| voxels_of(&pl, i)).collect();
    let intersects = |a: &[usize], b: &[usize]| a.iter().any(|v| b.binary_search(v).is_ok());
    let tp = gsets
        .iter()
        .filter(|g| psets.iter().any(|p| intersects(g, p)))
        .count();
    let fp = psets
        .iter()
        .filter(|p| !gsets.iter().any(|g| intersects(g, p)))
        .count();
    (tp, fp, ng as usize - tp)
}

pub fn random_mask(rng: &mut ChaCha8Rng, dims: [usize; 3], density: f64) -> Mask3 {
    let g = Geometry::with_dims(dims).unwrap();
    let data = (0..g.len()).map(|_| rng.random_bool(density)).collect();
    Grid::from_vec(g, data).unwrap()
}

/// A bright disk on a dark background with Gaussian noise, plus a seed whose
/// quad lies inside the disk and whose box clears it by `margin` pixels.
pub struct DiskCase {
    pub slice: Image<u8>,
    pub truth: Mask2,
    pub seed: SeedGeometry,
}

pub fn disk_case(rng: &mut ChaCha8Rng) -> DiskCase {
    let (w, h) = (rng.random_range(48..=64usize), rng.random_range(48..=64usize));
    let r = rng.random_range(6.0..12.0f64);
    let margin = rng.random_range(2..=4usize);
    let pad = r + margin as f64 + 2.0;
    let cx = rng.random_range(pad..w as f64 - 1.0 - pad);
    let cy = rng.random_range(pad..h as f64 - 1.0 - pad);
    let bg = rng.random_range(20.0..60.0f64);
    let fg = bg + rng.random_range(150.0..180.0f64);
    let noise = Normal::new(0.0, 8.0).unwrap();

    let mut slice = Image::filled(w, h, 0u8);
    let mut truth = Mask2::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let inside = (x as f64 - cx).hypot(y as f64 - cy) <= r;
            truth.set(x, y, inside);
            let v = if inside { fg } else { bg } + noise.sample(rng);
            slice.set(x, y, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    let a = 0.6 * r;
    let (rcx, rcy) = (cx.round(), cy.round());
    let quad = [
        Point::new(rcx, rcy - a.floor()),
        Point::new(rcx + a.floor(), rcy),
        Point::new(rcx, rcy + a.floor()),
        Point::new(rcx - a.floor(), rcy),
    ];
    let (xs, ys): (Vec<usize>, Vec<usize>) = (0..w)
        .flat_map(|x| (0..h).map(move |y| (x, y)))
        .filter(|&(x, y)| truth.get(x, y))
        .unzip();
    let bbox = BBox {
        x_min: xs.iter().min().unwrap() - margin,
        y_min: ys.iter().min().unwrap() - margin,
        x_max: xs.iter().max().unwrap() + margin,
        y_max: ys.iter().max().unwrap() + margin,
    };
    DiskCase {
        slice,
        truth,
        seed: SeedGeometry {
            bbox,
            quad,
            slice_index: 0,
            clamped: false,
        },
    }
}

pub fn dice(a: &Mask2, b: &Mask2) -> f64 {
    let inter = a.data.iter().zip(&b.data).filter(|(x, y)| **x && **y).count();
    2.0 * inter as f64 / (a.count() + b.count()) as f64
}

/// 64 x 64 x 12 phantom (1 x 1 x 5 mm) with one wide bone tube and
/// `lesions` randomly placed, non-touching lesions. Lesion centers may sit
/// on the first or last slice; radii stay under the 5 mm slice spacing.
pub fn random_lesion_phantom(rng: &mut ChaCha8Rng, lesions: usize) -> osteoforge::PhantomSpec {
    use osteoforge::phantom::{Bone, BoneShape, Ellipsoid, LesionKind, LesionSpec};
    let bone_r = 26.0;
    let mut placed: Vec<LesionSpec> = Vec::new();
    while placed.len() < lesions {
        let r = rng.random_range(3.0..4.9f64);
        let reach = bone_r - r - 1.5;
        let (dx, dy) = (rng.random_range(-reach..reach), rng.random_range(-reach..reach));
        if dx.hypot(dy) > reach {
            continue;
        }
        let c = [(32.0 + dx).round(), (32.0 + dy).round(), rng.random_range(0..12usize) as f64];
        let clear = placed.iter().all(|o| {
            let planar = (c[0] - o.center[0]).hypot(c[1] - o.center[1]);
            // Weak masks span a box over three slices; keep them apart.
            planar > 2.0 * (r + o.radius_mm) + 3.0 || (c[2] - o.center[2]).abs() > 3.0
        });
        if !clear {
            continue;
        }
        let kind = [LesionKind::Lytic, LesionKind::Blastic, LesionKind::Mixed][rng.random_range(0..3)];
        let mag = rng.random_range(250..400i16);
        placed.push(LesionSpec {
            id: None,
            center: c,
            radius_mm: r,
            kind,
            hu_offset: if kind == LesionKind::Lytic { -mag } else { mag },
        });
    }
    osteoforge::PhantomSpec {
        dims: [64, 64, 12],
        spacing: [1.0, 1.0, 5.0],
        origin: [0.0; 3],
        series_id: "RAND".into(),
        body: Ellipsoid {
            center: [31.5, 31.5, 5.5],
            radii_mm: [31.0, 31.0, 1000.0],
        },
        bones: vec![Bone {
            shape: BoneShape::Tube {
                center_xy: [32.0, 32.0],
                radius_mm: bone_r,
                z_range: [0, 11],
            },
            hu: rng.random_range(300..=500),
        }],
        lesions: placed,
        noise_sigma: rng.random_range(0.0..15.0),
        seed: rng.random(),
    }
}
