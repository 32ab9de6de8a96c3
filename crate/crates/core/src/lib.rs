//! Weak 3D bone-lesion labels from RECIST measurements on CT, and
//! overlap-based lesion detection scoring.
//!
//! The pipeline reads a CT volume and per-lesion RECIST crosses, segments
//! each lesion on its measured slice with GrabCut, extends the result to a
//! three-slice weak mask and merges it with body and skeleton regions into
//! one label volume. [`detect`] scores predicted lesion masks against such
//! labels; [`phantom`] builds synthetic volumes with exact ground truth.

pub mod cli;
pub mod detect;
pub mod error;
pub mod graphcut;
pub mod morphology;
pub mod nifti;
pub mod overlay;
pub mod phantom;
pub mod recist;
pub mod volume;
pub mod weaklabel;

pub use detect::{
    baseline_predict, connected_components, evaluate_masks, match_detections, ComponentSet, Connectivity3D,
    DetectionCounts, DetectionReport,
};
pub use error::{Error, Result};
pub use graphcut::{grabcut_segment, GrabCutParams};
pub use phantom::{generate_phantom, perturb_predictions, PerturbMode, Phantom, PhantomSpec};
pub use recist::{parse_lesion_records, rasterize_quad, seed_geometry, BBox, Point, RecistMeasurement, SeedGeometry};
pub use volume::{
    window_to_u8, Geometry, Grid, Image, LabelClass, LabelVolume, Mask2, Mask3, Volume3D, WindowSpec,
};
pub use weaklabel::{build_weak_mask, merge_labels, WeakLesionMask};
