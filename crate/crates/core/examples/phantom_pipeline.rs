//! Phantom -> weak labels -> baseline prediction -> evaluation, via the
//! same command functions the binary uses.

use osteoforge::cli::{cmd_baseline, cmd_eval, cmd_phantom, cmd_weaklabel, EvalArgs, PipelineConfig, RegionInputs, WeaklabelArgs};

fn main() -> osteoforge::Result<()> {
    let dir = std::env::temp_dir().join("osteoforge_pipeline_demo");
    let cfg = PipelineConfig {
        workers: 4,
        ..Default::default()
    };
    cmd_phantom(None, &dir, None)?;
    let regions = RegionInputs {
        regions: Some(dir.join("labels.nii.gz")),
        ..Default::default()
    };
    let summary = cmd_weaklabel(
        &WeaklabelArgs {
            volume: dir.join("ct.nii.gz"),
            lesions: dir.join("lesions.csv"),
            regions: regions.clone(),
            series: None,
            out: dir.join("weak_labels.nii.gz"),
            summary: None,
        },
        &cfg,
    )?;
    println!("{} weak lesion masks", summary.lesions.len());

    cmd_baseline(&dir.join("ct.nii.gz"), &regions, &dir.join("baseline.nii.gz"))?;
    let report = cmd_eval(
        &EvalArgs {
            gt: dir.join("weak_labels.nii.gz"),
            pred: dir.join("baseline.nii.gz"),
            pred_labels: false,
            out: Some(dir.join("report.json")),
            series: summary.series_id.clone(),
        },
        &cfg,
    )?;
    println!("{report}");
    println!("outputs in {}", dir.display());
    Ok(())
}
