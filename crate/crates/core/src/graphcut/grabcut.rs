//! GrabCut on a single windowed grayscale slice.
//!
//! The energy minimized is
//!
//! ```text
//! E(a) = sum_p -ln max(p_{a_p}(z_p), 1e-12)
//!      + sum_{p~q, a_p != a_q} gamma / dist(p, q) * exp(-beta (z_p - z_q)^2)
//! ```
//!
//! where `p_FG` / `p_BG` are scalar Gaussian mixtures. Each round performs
//! one EM step per class given the current labeling, then an exact min-cut
//! over the probable pixels. Both steps are accepted only when they do not
//! raise `E`, so the recorded energy sequence is non-increasing.

use serde::{Deserialize, Serialize};

use super::gmm::{histogram_samples, Gmm, GmmModel};
use super::maxflow::{max_flow, FlowNetwork};
use crate::error::{Error, Result};
use crate::recist::{rasterize_quad, BBox, SeedGeometry};
use crate::volume::{Image, Mask2};

/// Floor applied to mixture likelihoods before taking logs.
pub const LIKELIHOOD_FLOOR: f64 = 1e-12;

const BG_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum TrimapLabel {
    DefiniteBg,
    ProbableBg,
    ProbableFg,
    DefiniteFg,
}

impl TrimapLabel {
    pub fn is_fg(self) -> bool {
        matches!(self, Self::ProbableFg | Self::DefiniteFg)
    }

    pub fn is_definite(self) -> bool {
        matches!(self, Self::DefiniteBg | Self::DefiniteFg)
    }
}

pub type Trimap = Image<TrimapLabel>;

/// Outside the bbox is definite background, the rasterized quadrilateral is
/// definite foreground and the rest of the bbox is probable foreground.
pub fn build_trimap(
    geometry: &SeedGeometry,
    quad_mask: &Mask2,
    image_dims: (usize, usize),
) -> Result<Trimap> {
    let (w, h) = image_dims;
    if quad_mask.width != w || quad_mask.height != h {
        return Err(Error::Trimap(format!(
            "quad mask is {}x{}, image is {w}x{h}",
            quad_mask.width, quad_mask.height
        )));
    }
    let bbox = geometry.bbox;
    if bbox.x_max >= w || bbox.y_max >= h {
        return Err(Error::Trimap(format!("bbox {bbox:?} exceeds the {w}x{h} image")));
    }
    if bbox.area() == w * h {
        return Err(Error::Trimap(
            "bounding box covers the whole image; no definite background".into(),
        ));
    }
    let mut trimap = Trimap::filled(w, h, TrimapLabel::DefiniteBg);
    let mut any_fg = false;
    for y in 0..h {
        for x in 0..w {
            let inside = bbox.contains(x, y);
            let quad = quad_mask.get(x, y);
            if quad && !inside {
                return Err(Error::Trimap(format!(
                    "quad pixel ({x}, {y}) lies outside the bounding box"
                )));
            }
            if quad {
                any_fg = true;
                trimap.set(x, y, TrimapLabel::DefiniteFg);
            } else if inside {
                trimap.set(x, y, TrimapLabel::ProbableFg);
            }
        }
    }
    if !any_fg {
        return Err(Error::Trimap("no definite foreground pixel".into()));
    }
    Ok(trimap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity2D {
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity2D {
    /// Forward offsets enumerating each unordered neighbor pair once.
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Self::Four => &[(1, 0), (0, 1)],
            Self::Eight => &[(1, 0), (0, 1), (1, 1), (-1, 1)],
        }
    }

    pub fn max_neighbors(self) -> usize {
        match self {
            Self::Four => 4,
            Self::Eight => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrabCutParams {
    /// Mixture components per class.
    pub components: usize,
    pub gamma: f64,
    pub max_iters: usize,
    /// In squared u8 intensity units.
    pub variance_floor: f64,
    pub connectivity: Connectivity2D,
}

impl Default for GrabCutParams {
    fn default() -> Self {
        Self {
            components: 5,
            gamma: 50.0,
            max_iters: 5,
            variance_floor: 0.25,
            connectivity: Connectivity2D::Eight,
        }
    }
}

impl GrabCutParams {
    pub fn validate(&self) -> Result<()> {
        if self.components < 1 {
            return Err(Error::InvalidParameter("components must be >= 1".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma {} must be >= 0", self.gamma)));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::InvalidParameter("variance_floor must be > 0".into()));
        }
        Ok(())
    }

    /// Terminal capacity that no combination of n-links can outweigh.
    pub fn hard_link(&self) -> f64 {
        8.0 * self.gamma * self.connectivity.max_neighbors() as f64 + 1.0
    }
}

fn neighbor_pairs(
    width: usize,
    height: usize,
    window: BBox,
    conn: Connectivity2D,
) -> impl Iterator<Item = ((usize, usize), (usize, usize), f64)> {
    let offsets = conn.offsets();
    (window.y_min..=window.y_max).flat_map(move |y| {
        (window.x_min..=window.x_max).flat_map(move |x| {
            offsets.iter().filter_map(move |&(dx, dy)| {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                if nx < window.x_min as isize
                    || nx > window.x_max as isize
                    || ny > window.y_max as isize
                    || nx >= width as isize
                    || ny >= height as isize
                {
                    return None;
                }
                let dist = if dx != 0 && dy != 0 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
                Some(((x, y), (nx as usize, ny as usize), dist))
            })
        })
    })
}

fn full_window(width: usize, height: usize) -> BBox {
    BBox {
        x_min: 0,
        y_min: 0,
        x_max: width - 1,
        y_max: height - 1,
    }
}

/// `1 / (2 * E[(z_p - z_q)^2])` over all unordered neighbor pairs; zero when
/// the expectation vanishes.
pub fn compute_beta(slice: &Image<u8>, conn: Connectivity2D) -> f64 {
    if slice.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((x, y), (u, v), _) in
        neighbor_pairs(slice.width, slice.height, full_window(slice.width, slice.height), conn)
    {
        let d = slice.get(x, y) as f64 - slice.get(u, v) as f64;
        sum += d * d;
        count += 1;
    }
    if count == 0 || sum == 0.0 {
        0.0
    } else {
        1.0 / (2.0 * sum / count as f64)
    }
}

#[inline]
fn n_link(params: &GrabCutParams, beta: f64, a: u8, b: u8, dist: f64) -> f64 {
    let d = a as f64 - b as f64;
    params.gamma / dist * (-beta * d * d).exp()
}

/// `-ln max(p(z), floor)` for all 256 intensities.
fn data_cost_table(gmm: &Gmm) -> [f64; 256] {
    let mut t = [0.0; 256];
    for (z, slot) in t.iter_mut().enumerate() {
        *slot = -gmm.ln_density(z as f64).max(LIKELIHOOD_FLOOR.ln());
    }
    t
}

struct CostTables {
    fg: [f64; 256],
    bg: [f64; 256],
}

impl CostTables {
    fn new(gmm: &GmmModel) -> Self {
        Self {
            fg: data_cost_table(&gmm.fg),
            bg: data_cost_table(&gmm.bg),
        }
    }
}

/// Network over the pixels in `window`. Node `i` is the `i`-th window pixel
/// in row-major order; the two last nodes are source (foreground) and sink.
///
/// Probable pixels get `source = -ln p_BG`, `sink = -ln p_FG`, shifted so the
/// smaller of the two is zero; this leaves every cut's ordering unchanged
/// while keeping capacities non-negative.
fn build_network(
    slice: &Image<u8>,
    trimap: &Trimap,
    costs: &CostTables,
    params: &GrabCutParams,
    beta: f64,
    window: BBox,
) -> Result<FlowNetwork> {
    let ww = window.width();
    let n = window.area();
    let (s, t) = (n, n + 1);
    let arcs = n * (1 + params.connectivity.offsets().len());
    let mut net = FlowNetwork::with_capacity(n + 2, s, t, arcs)?;
    let node = |x: usize, y: usize| (x - window.x_min) + ww * (y - window.y_min);
    let large = params.hard_link();

    for y in window.y_min..=window.y_max {
        for x in window.x_min..=window.x_max {
            let v = node(x, y);
            match trimap.get(x, y) {
                TrimapLabel::DefiniteFg => net.add_terminal(v, large, 0.0),
                TrimapLabel::DefiniteBg => net.add_terminal(v, 0.0, large),
                _ => {
                    let z = slice.get(x, y) as usize;
                    let (cs, ct) = (costs.bg[z], costs.fg[z]);
                    let m = cs.min(ct);
                    net.add_terminal(v, cs - m, ct - m);
                }
            }
        }
    }
    for ((x, y), (u, v), dist) in neighbor_pairs(slice.width, slice.height, window, params.connectivity) {
        let w = n_link(params, beta, slice.get(x, y), slice.get(u, v), dist);
        if w > 0.0 {
            net.add_edge(node(x, y), node(u, v), w, w);
        }
    }
    Ok(net)
}

/// Flow network for the whole slice: one node per pixel (index `x + w*y`)
/// followed by the source and the sink.
pub fn build_graph(
    slice: &Image<u8>,
    trimap: &Trimap,
    gmm: &GmmModel,
    params: &GrabCutParams,
    beta: f64,
) -> Result<FlowNetwork> {
    if trimap.width != slice.width || trimap.height != slice.height {
        return Err(Error::Trimap("trimap and slice sizes differ".into()));
    }
    build_network(
        slice,
        trimap,
        &CostTables::new(gmm),
        params,
        beta,
        full_window(slice.width, slice.height),
    )
}

/// Total energy of a foreground labeling (data over the whole slice plus
/// smoothness over every neighbor pair with differing labels).
pub fn energy(
    slice: &Image<u8>,
    fg: &Mask2,
    gmm: &GmmModel,
    params: &GrabCutParams,
    beta: f64,
) -> f64 {
    energy_with(slice, fg, &CostTables::new(gmm), params, beta)
}

fn energy_with(
    slice: &Image<u8>,
    fg: &Mask2,
    costs: &CostTables,
    params: &GrabCutParams,
    beta: f64,
) -> f64 {
    let data: f64 = slice
        .data
        .iter()
        .zip(&fg.data)
        .map(|(&z, &f)| if f { costs.fg[z as usize] } else { costs.bg[z as usize] })
        .sum();
    let smooth: f64 = neighbor_pairs(
        slice.width,
        slice.height,
        full_window(slice.width, slice.height),
        params.connectivity,
    )
    .filter(|&((x, y), (u, v), _)| fg.get(x, y) != fg.get(u, v))
    .map(|((x, y), (u, v), dist)| n_link(params, beta, slice.get(x, y), slice.get(u, v), dist))
    .sum();
    data + smooth
}

fn class_samples(slice: &Image<u8>, fg: &Mask2, want_fg: bool) -> Vec<(f64, f64)> {
    histogram_samples(
        slice
            .data
            .iter()
            .zip(&fg.data)
            .filter(|(_, &f)| f == want_fg)
            .map(|(&z, _)| z),
    )
}

/// Per-round diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTrace {
    pub energy_after_refit: f64,
    pub energy_after_cut: f64,
    /// The EM step would have raised the energy and was discarded.
    pub refit_rejected: bool,
    /// The cut labeling scored higher than the previous one (a floating-point
    /// tie) and was discarded.
    pub cut_rejected: bool,
    pub changed_pixels: usize,
}

#[derive(Debug, Clone)]
pub struct GrabCutOutcome {
    pub mask: Mask2,
    pub trimap: Trimap,
    pub gmm: GmmModel,
    pub beta: f64,
    pub initial_energy: f64,
    pub rounds: Vec<RoundTrace>,
}

impl GrabCutOutcome {
    /// Initial energy followed by the energy after every step.
    pub fn energy_sequence(&self) -> Vec<f64> {
        let mut out = vec![self.initial_energy];
        for r in &self.rounds {
            out.push(r.energy_after_refit);
            out.push(r.energy_after_cut);
        }
        out
    }

    pub fn converged(&self) -> bool {
        self.rounds.last().is_some_and(|r| r.changed_pixels == 0)
    }
}

/// Foreground mask for one lesion on one slice.
pub fn grabcut_segment(
    slice: &Image<u8>,
    geometry: &SeedGeometry,
    params: &GrabCutParams,
    rng_seed: u64,
) -> Result<Mask2> {
    grabcut_segment_traced(slice, geometry, params, rng_seed).map(|o| o.mask)
}

/// As [`grabcut_segment`], returning the per-round trace.
pub fn grabcut_segment_traced(
    slice: &Image<u8>,
    geometry: &SeedGeometry,
    params: &GrabCutParams,
    rng_seed: u64,
) -> Result<GrabCutOutcome> {
    params.validate()?;
    let dims = (slice.width, slice.height);
    let quad = rasterize_quad(geometry, dims);
    let mut trimap = build_trimap(geometry, &quad, dims)?;
    let beta = compute_beta(slice, params.connectivity);

    let mut fg = Mask2 {
        width: slice.width,
        height: slice.height,
        data: trimap.data.iter().map(|l| l.is_fg()).collect(),
    };
    let mut gmm = GmmModel {
        fg: Gmm::fit(
            &class_samples(slice, &fg, true),
            params.components,
            params.variance_floor,
            rng_seed,
        )?,
        bg: Gmm::fit(
            &class_samples(slice, &fg, false),
            params.components,
            params.variance_floor,
            rng_seed ^ BG_SEED_SALT,
        )?,
    };
    let mut costs = CostTables::new(&gmm);
    let initial_energy = energy_with(slice, &fg, &costs, params, beta);
    let mut current = initial_energy;

    // Pixels outside the bbox ring are definite background on both sides of
    // every n-link they touch, so the cut only needs bbox + 1.
    let window = geometry.bbox.expand(1, slice.width, slice.height);
    let ww = window.width();
    let mut rounds = Vec::with_capacity(params.max_iters);

    for _ in 0..params.max_iters {
        let candidate = GmmModel {
            fg: gmm.fg.em_step(&class_samples(slice, &fg, true)),
            bg: gmm.bg.em_step(&class_samples(slice, &fg, false)),
        };
        let candidate_costs = CostTables::new(&candidate);
        let refit_energy = energy_with(slice, &fg, &candidate_costs, params, beta);
        let refit_rejected = refit_energy > current;
        if !refit_rejected {
            gmm = candidate;
            costs = candidate_costs;
            current = refit_energy;
        }
        let energy_after_refit = current;

        let net = build_network(slice, &trimap, &costs, params, beta, window)?;
        let cut = max_flow(&net);
        let mut next = fg.clone();
        for y in window.y_min..=window.y_max {
            for x in window.x_min..=window.x_max {
                if !trimap.get(x, y).is_definite() {
                    let v = (x - window.x_min) + ww * (y - window.y_min);
                    next.set(x, y, cut.source_side[v]);
                }
            }
        }
        let cut_energy = energy_with(slice, &next, &costs, params, beta);
        let cut_rejected = cut_energy > current;
        let mut changed_pixels = 0;
        if !cut_rejected {
            changed_pixels = next.data.iter().zip(&fg.data).filter(|(a, b)| a != b).count();
            fg = next;
            current = cut_energy;
        }
        rounds.push(RoundTrace {
            energy_after_refit,
            energy_after_cut: current,
            refit_rejected,
            cut_rejected,
            changed_pixels,
        });
        if changed_pixels == 0 {
            break;
        }
    }

    for (label, &f) in trimap.data.iter_mut().zip(&fg.data) {
        if !label.is_definite() {
            *label = if f {
                TrimapLabel::ProbableFg
            } else {
                TrimapLabel::ProbableBg
            };
        }
    }

    Ok(GrabCutOutcome {
        mask: fg,
        trimap,
        gmm,
        beta,
        initial_energy,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recist::{seed_geometry, Point, RecistMeasurement};

    fn measurement(long: [(f64, f64); 2], short: [(f64, f64); 2]) -> RecistMeasurement {
        RecistMeasurement {
            lesion_id: "L".into(),
            series_id: "S".into(),
            slice_index: 0,
            long_axis: [Point::new(long[0].0, long[0].1), Point::new(long[1].0, long[1].1)],
            short_axis: [Point::new(short[0].0, short[0].1), Point::new(short[1].0, short[1].1)],
        }
    }

    #[test]
    fn trimap_partitions_image() {
        let m = measurement([(12.0, 20.0), (28.0, 20.0)], [(20.0, 12.0), (20.0, 28.0)]);
        let mut g = seed_geometry(&m, (40, 40)).unwrap();
        g.bbox = BBox {
            x_min: 10,
            y_min: 10,
            x_max: 30,
            y_max: 30,
        };
        let quad = rasterize_quad(&g, (40, 40));
        let t = build_trimap(&g, &quad, (40, 40)).unwrap();
        let count = |l| t.data.iter().filter(|&&x| x == l).count();
        let (bg, pfg, dfg) = (
            count(TrimapLabel::DefiniteBg),
            count(TrimapLabel::ProbableFg),
            count(TrimapLabel::DefiniteFg),
        );
        assert_eq!(bg, 40 * 40 - 21 * 21);
        assert_eq!(dfg, quad.count());
        assert_eq!(bg + pfg + dfg, 1600);
        assert_eq!(count(TrimapLabel::ProbableBg), 0);
    }

    #[test]
    fn trimap_full_quad_has_no_probable() {
        let g = SeedGeometry {
            bbox: BBox {
                x_min: 2,
                y_min: 2,
                x_max: 8,
                y_max: 8,
            },
            quad: [
                Point::new(2.0, 2.0),
                Point::new(8.0, 2.0),
                Point::new(8.0, 8.0),
                Point::new(2.0, 8.0),
            ],
            slice_index: 0,
            clamped: false,
        };
        let quad = rasterize_quad(&g, (12, 12));
        let t = build_trimap(&g, &quad, (12, 12)).unwrap();
        assert!(!t.data.contains(&TrimapLabel::ProbableFg));
    }

    #[test]
    fn trimap_rejects_full_image_bbox() {
        let m = measurement([(0.0, 5.0), (9.0, 5.0)], [(5.0, 0.0), (5.0, 9.0)]);
        let g = seed_geometry(&m, (10, 10)).unwrap();
        let quad = rasterize_quad(&g, (10, 10));
        assert!(matches!(build_trimap(&g, &quad, (10, 10)), Err(Error::Trimap(_))));
    }

    #[test]
    fn beta_constant_and_single_pair() {
        let c = Image::filled(5, 5, 77u8);
        assert_eq!(compute_beta(&c, Connectivity2D::Eight), 0.0);
        let pair = Image {
            width: 2,
            height: 1,
            data: vec![0u8, 255],
        };
        let b = compute_beta(&pair, Connectivity2D::Eight);
        assert!((b - 1.0 / (2.0 * 255.0 * 255.0)).abs() < 1e-15);
        assert!((b - 7.6895e-6).abs() < 1e-9);
    }

    #[test]
    fn constant_image_links_are_gamma_over_distance() {
        let slice = Image::filled(3, 3, 10u8);
        let trimap = Trimap::filled(3, 3, TrimapLabel::ProbableFg);
        let gmm = GmmModel {
            fg: Gmm::fit_u8(&[10], 1, 0.25, 0).unwrap(),
            bg: Gmm::fit_u8(&[10], 1, 0.25, 0).unwrap(),
        };
        let params = GrabCutParams::default();
        let net = build_graph(&slice, &trimap, &gmm, &params, 0.0).unwrap();
        let n = 9;
        let mut caps: Vec<f64> = net
            .arcs()
            .filter(|&(u, v, _)| u < n && v < n)
            .map(|(_, _, c)| c)
            .collect();
        caps.sort_by(f64::total_cmp);
        caps.dedup();
        assert_eq!(caps.len(), 2);
        assert!((caps[0] - 50.0 / std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((caps[1] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        let mut p = GrabCutParams::default();
        assert!(p.validate().is_ok());
        p.components = 0;
        assert!(p.validate().is_err());
        p = GrabCutParams {
            gamma: -1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        p = GrabCutParams {
            max_iters: 0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn full_quad_returns_bbox() {
        let mut slice = Image::filled(16, 16, 30u8);
        for y in 4..=10 {
            for x in 4..=10 {
                slice.set(x, y, 200);
            }
        }
        let g = SeedGeometry {
            bbox: BBox {
                x_min: 4,
                y_min: 4,
                x_max: 10,
                y_max: 10,
            },
            quad: [
                Point::new(4.0, 4.0),
                Point::new(10.0, 4.0),
                Point::new(10.0, 10.0),
                Point::new(4.0, 10.0),
            ],
            slice_index: 0,
            clamped: false,
        };
        let mask = grabcut_segment(&slice, &g, &GrabCutParams::default(), 1).unwrap();
        assert_eq!(mask, g.bbox.to_mask(16, 16));
    }
}
