//! Command implementations behind the `osteoforge` binary.
//!
//! Each `cmd_*` function is callable from Rust directly; the binary only
//! parses flags, prints results and maps errors to exit codes.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{baseline_predict, evaluate_masks, extract_lesion_components, write_report, Connectivity3D, DetectionReport};
use crate::error::{Error, Result};
use crate::graphcut::{grabcut_segment, GrabCutParams};
use crate::nifti;
use crate::overlay::write_overlays;
use crate::phantom::{generate_phantom, PhantomSpec};
use crate::recist::{parse_lesion_records, seed_geometry, RecistMeasurement};
use crate::volume::{window_slice, Grid, LabelClass, Mask3, Volume3D, WindowSpec};
use crate::weaklabel::{build_weak_mask, fallback_body_mask, fallback_skeleton_mask, merge_labels, LesionSummary, WeakLesionMask};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_GEOMETRY: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub window: WindowSpec,
    pub grabcut: GrabCutParams,
    pub connectivity: Connectivity3D,
    pub workers: usize,
    pub seed: u64,
    pub min_overlap: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            grabcut: GrabCutParams::default(),
            connectivity: Connectivity3D::TwentySix,
            workers: 1,
            seed: 0,
            min_overlap: 0.0,
        }
    }
}

/// Values given on the command line; `None` leaves the file or default.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub window_center: Option<f64>,
    pub window_width: Option<f64>,
    pub connectivity: Option<u32>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub min_overlap: Option<f64>,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults, then the JSON file, then the flags.
    pub fn resolve(file: Option<&Path>, overrides: &ConfigOverrides) -> Result<Self> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text)?
            }
            None => Self::default(),
        };
        if let Some(c) = overrides.window_center {
            cfg.window.center = c;
        }
        if let Some(w) = overrides.window_width {
            cfg.window.width = w;
        }
        if let Some(n) = overrides.connectivity {
            cfg.connectivity = Connectivity3D::from_neighbors(n)?;
        }
        if let Some(w) = overrides.workers {
            cfg.workers = w;
        }
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(f) = overrides.min_overlap {
            cfg.min_overlap = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        WindowSpec::new(self.window.center, self.window.width)?;
        self.grabcut.validate()?;
        if self.workers < 1 {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_overlap) {
            return Err(Error::InvalidParameter(format!(
                "min_overlap {} outside [0, 1]",
                self.min_overlap
            )));
        }
        Ok(())
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::GeometryMismatch(_) => EXIT_GEOMETRY,
        Error::Png(_) => EXIT_INTERNAL,
        _ => EXIT_VALIDATION,
    }
}

pub fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Io { .. } => "io",
        Error::InvalidGeometry(_) => "invalid_geometry",
        Error::GeometryMismatch(_) => "geometry_mismatch",
        Error::Nifti(_) => "nifti",
        Error::Schema { .. } => "schema",
        Error::Lesion { .. } => "lesion",
        Error::DegenerateMeasurement(_) => "degenerate_measurement",
        Error::Trimap(_) => "trimap",
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::EmptyMask(_) => "empty_mask",
        Error::Phantom(_) => "phantom",
        Error::Json(_) => "json",
        Error::Png(_) => "png",
    }
}

#[derive(Debug, Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    lesion_id: Option<&'a str>,
}

/// Single-line JSON description of an error, for stderr.
pub fn error_json(err: &Error) -> String {
    let line = ErrorLine {
        error: error_kind(err),
        message: err.to_string(),
        exit_code: exit_code(err),
        lesion_id: match err {
            Error::Lesion { lesion_id, .. } => Some(lesion_id),
            _ => None,
        },
    };
    serde_json::to_string(&line).expect("error line serializes")
}

/// Removes every registered file on drop unless committed.
struct OutputGuard {
    paths: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    fn new() -> Self {
        Self {
            paths: Vec::new(),
            committed: false,
        }
    }

    fn register(&mut self, path: impl Into<PathBuf>) {
        self.paths.push(path.into());
    }

    fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.paths)
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.paths {
            if p.exists() {
                if let Err(e) = std::fs::remove_file(p) {
                    warn!("could not remove partial output {}: {e}", p.display());
                }
            }
        }
    }
}

/// Where body and skeleton masks come from.
#[derive(Debug, Clone, Default)]
pub struct RegionInputs {
    pub body: Option<PathBuf>,
    pub skeleton: Option<PathBuf>,
    /// Label volume whose codes >= 1 are body and >= 2 skeleton.
    pub regions: Option<PathBuf>,
}

struct Regions {
    body: Mask3,
    skeleton: Mask3,
    body_fallback: bool,
    skeleton_fallback: bool,
}

fn load_regions(volume: &Volume3D, inputs: &RegionInputs) -> Result<Regions> {
    let g = volume.geometry();
    if let Some(path) = &inputs.regions {
        let labels = nifti::read_labels(path)?;
        g.ensure_matches(labels.geometry(), "volume vs region labels")?;
        return Ok(Regions {
            body: labels.mask_at_least(LabelClass::Body),
            skeleton: labels.mask_at_least(LabelClass::Skeleton),
            body_fallback: false,
            skeleton_fallback: false,
        });
    }
    let body = match &inputs.body {
        Some(path) => Some(nifti::read_mask(path)?),
        None => None,
    };
    if let Some(b) = &body {
        g.ensure_matches(b.geometry(), "volume vs body mask")?;
    }
    let skeleton = match &inputs.skeleton {
        Some(path) => Some(nifti::read_mask(path)?),
        None => None,
    };
    if let Some(s) = &skeleton {
        g.ensure_matches(s.geometry(), "volume vs skeleton mask")?;
    }
    let body_fallback = body.is_none();
    let body = match body {
        Some(b) => b,
        None => {
            warn!("no body mask given; using the threshold fallback");
            fallback_body_mask(volume)?
        }
    };
    let skeleton_fallback = skeleton.is_none();
    let skeleton = match skeleton {
        Some(s) => s,
        None => {
            warn!("no skeleton mask given; using the threshold fallback");
            fallback_skeleton_mask(volume, &body)?
        }
    };
    Ok(Regions {
        body,
        skeleton,
        body_fallback,
        skeleton_fallback,
    })
}

#[derive(Debug, Clone)]
pub struct WeaklabelArgs {
    pub volume: PathBuf,
    pub lesions: PathBuf,
    pub regions: RegionInputs,
    /// Keep only records of this series; required if the CSV mixes series.
    pub series: Option<String>,
    pub out: PathBuf,
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WeaklabelSummary {
    pub series_id: Option<String>,
    pub dims: [usize; 3],
    pub body_fallback: bool,
    pub skeleton_fallback: bool,
    /// Voxels per class code 0..=3 in the written label volume.
    pub class_voxels: [usize; 4],
    pub lesions: Vec<LesionSummary>,
    pub warnings: Vec<String>,
}

fn select_series(records: Vec<RecistMeasurement>, series: Option<&str>) -> Result<(Option<String>, Vec<RecistMeasurement>)> {
    let all: BTreeSet<&str> = records.iter().map(|r| r.series_id.as_str()).collect();
    match series {
        Some(s) => {
            if !records.is_empty() && !all.contains(s) {
                return Err(Error::InvalidParameter(format!("no lesion records for series {s}")));
            }
            let kept = records.into_iter().filter(|r| r.series_id == s).collect();
            Ok((Some(s.to_string()), kept))
        }
        None if all.len() > 1 => Err(Error::InvalidParameter(format!(
            "lesion records span {} series; pick one with --series",
            all.len()
        ))),
        None => Ok((all.iter().next().map(|s| s.to_string()), records)),
    }
}

/// GrabCut on every measured slice, three-slice extension, and merge with
/// body and skeleton regions into one label volume.
pub fn weak_label_volume(
    volume: &Volume3D,
    records: &[RecistMeasurement],
    body: &Mask3,
    skeleton: &Mask3,
    cfg: &PipelineConfig,
) -> Result<(crate::volume::LabelVolume, Vec<WeakLesionMask>, Vec<String>)> {
    cfg.validate()?;
    let g = *volume.geometry();
    let [nx, ny, nz] = g.dims;
    let mut warnings = Vec::new();
    for r in records {
        for w in r.validate_against(g.dims)? {
            let msg = format!("lesion {}: {w}", r.lesion_id);
            warn!("{msg}");
            warnings.push(msg);
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let per_lesion = |(i, r): (usize, &RecistMeasurement)| -> Result<WeakLesionMask> {
        let tag = |e: Error| match e {
            e @ (Error::Lesion { .. } | Error::GeometryMismatch(_)) => e,
            e => Error::Lesion {
                lesion_id: r.lesion_id.clone(),
                message: e.to_string(),
            },
        };
        let geom = seed_geometry(r, (nx, ny)).map_err(tag)?;
        let slice = window_slice(volume, geom.slice_index, &cfg.window)?;
        let mask = grabcut_segment(&slice, &geom, &cfg.grabcut, cfg.seed.wrapping_add(i as u64)).map_err(tag)?;
        info!("lesion {}: {} center-slice pixels", r.lesion_id, mask.count());
        build_weak_mask(r.lesion_id.clone(), &mask, &geom, nz)
    };
    let lesions = pool.install(|| {
        records
            .par_iter()
            .enumerate()
            .map(per_lesion)
            .collect::<Result<Vec<_>>>()
    })?;
    let labels = merge_labels(body, skeleton, &lesions, &g)?;
    Ok((labels, lesions, warnings))
}

pub fn cmd_weaklabel(args: &WeaklabelArgs, cfg: &PipelineConfig) -> Result<WeaklabelSummary> {
    let mut guard = OutputGuard::new();
    let volume = nifti::read_volume(&args.volume)?;
    let (series_id, records) = select_series(parse_lesion_records(&args.lesions)?, args.series.as_deref())?;
    let regions = load_regions(&volume, &args.regions)?;
    let (labels, lesions, mut warnings) =
        weak_label_volume(&volume, &records, &regions.body, &regions.skeleton, cfg)?;
    if regions.body_fallback {
        warnings.push("body mask missing; threshold fallback used".into());
    }
    if regions.skeleton_fallback {
        warnings.push("skeleton mask missing; threshold fallback used".into());
    }

    guard.register(&args.out);
    nifti::write_labels(&labels, &args.out)?;
    let summary = WeaklabelSummary {
        series_id,
        dims: volume.dims(),
        body_fallback: regions.body_fallback,
        skeleton_fallback: regions.skeleton_fallback,
        class_voxels: labels.histogram(),
        lesions: lesions.iter().map(LesionSummary::from).collect(),
        warnings,
    };
    if let Some(path) = &args.summary {
        guard.register(path);
        let text = serde_json::to_string_pretty(&summary)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    guard.commit();
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    /// Label volume; its lesion class is the ground truth.
    pub gt: PathBuf,
    pub pred: PathBuf,
    /// Read the prediction as a label volume and score its lesion class
    /// instead of treating every nonzero voxel as foreground.
    pub pred_labels: bool,
    pub out: Option<PathBuf>,
    pub series: Option<String>,
}

pub fn cmd_eval(args: &EvalArgs, cfg: &PipelineConfig) -> Result<DetectionReport> {
    cfg.validate()?;
    let gt_labels = nifti::read_labels(&args.gt)?;
    let gt = extract_lesion_components(&gt_labels);
    let pred = if args.pred_labels {
        extract_lesion_components(&nifti::read_labels(&args.pred)?)
    } else {
        nifti::read_mask(&args.pred)?
    };
    let mut report = evaluate_masks(&gt, &pred, cfg.connectivity, cfg.min_overlap)?;
    if let Some(s) = &args.series {
        report = report.with_series(s.clone());
    }
    if let Some(out) = &args.out {
        let mut guard = OutputGuard::new();
        guard.register(out);
        write_report(&report, out)?;
        guard.commit();
    }
    Ok(report)
}

/// Writes phantom volume, labels, lesion instance map and RECIST CSV.
pub fn cmd_phantom(spec: Option<&Path>, out_dir: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let mut spec = match spec {
        Some(p) => PhantomSpec::read(p)?,
        None => PhantomSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let phantom = generate_phantom(&spec)?;
    let mut guard = OutputGuard::new();
    for f in [
        crate::phantom::VOLUME_FILE,
        crate::phantom::LABELS_FILE,
        crate::phantom::LESION_MASKS_FILE,
        crate::phantom::RECORDS_FILE,
    ] {
        guard.register(out_dir.join(f));
    }
    phantom.write(out_dir)?;
    Ok(guard.commit())
}

pub fn cmd_overlay(volume: &Path, labels: &Path, out_dir: &Path, window: &WindowSpec) -> Result<Vec<PathBuf>> {
    let v = nifti::read_volume(volume)?;
    let l = nifti::read_labels(labels)?;
    v.geometry().ensure_matches(l.geometry(), "volume vs label volume")?;
    let mut guard = OutputGuard::new();
    for z in crate::overlay::labelled_slices(&l) {
        guard.register(out_dir.join(crate::overlay::overlay_file_name(z)));
    }
    write_overlays(&v, &l, out_dir, window)?;
    Ok(guard.commit())
}

/// Threshold baseline prediction, written as a 0/1 uint8 NIfTI mask.
pub fn cmd_baseline(volume: &Path, regions: &RegionInputs, out: &Path) -> Result<Mask3> {
    let v = nifti::read_volume(volume)?;
    let r = load_regions(&v, regions)?;
    let pred = baseline_predict(&v, &r.skeleton)?;
    let mut guard = OutputGuard::new();
    guard.register(out);
    let as_u8: Grid<u8> = pred.map(|&b| b as u8);
    nifti::write_volume(&as_u8, out)?;
    guard.commit();
    Ok(pred)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"workers": 3, "window": {"center": 400, "width": 1800}}"#).unwrap();
        let o = ConfigOverrides {
            window_width: Some(1000.0),
            connectivity: Some(6),
            ..Default::default()
        };
        let cfg = PipelineConfig::resolve(Some(&path), &o).unwrap();
        assert_eq!(cfg.workers, 3);
        assert_eq!(cfg.window.center, 400.0);
        assert_eq!(cfg.window.width, 1000.0);
        assert_eq!(cfg.connectivity, Connectivity3D::Six);
        assert_eq!(cfg.grabcut, GrabCutParams::default());
    }

    #[test]
    fn zero_workers_rejected() {
        let o = ConfigOverrides {
            workers: Some(0),
            ..Default::default()
        };
        assert!(PipelineConfig::resolve(None, &o).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::GeometryMismatch("x".into())), EXIT_GEOMETRY);
        assert_eq!(exit_code(&Error::InvalidParameter("x".into())), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::Png("x".into())), EXIT_INTERNAL);
        let e = Error::Lesion {
            lesion_id: "L7".into(),
            message: "slice".into(),
        };
        let v: serde_json::Value = serde_json::from_str(&error_json(&e)).unwrap();
        assert_eq!(v["lesion_id"], "L7");
        assert_eq!(v["exit_code"], 1);
    }

    #[test]
    fn mixed_series_need_a_choice() {
        let rec = |s: &str| RecistMeasurement {
            lesion_id: "L".into(),
            series_id: s.into(),
            slice_index: 0,
            long_axis: [crate::recist::Point::new(0.0, 0.0), crate::recist::Point::new(4.0, 0.0)],
            short_axis: [crate::recist::Point::new(2.0, -1.0), crate::recist::Point::new(2.0, 1.0)],
        };
        assert!(select_series(vec![rec("A"), rec("B")], None).is_err());
        let (s, kept) = select_series(vec![rec("A"), rec("B")], Some("B")).unwrap();
        assert_eq!(s.as_deref(), Some("B"));
        assert_eq!(kept.len(), 1);
    }
}
