//! Overlap-based detection scoring, from raw counts and from masks.

use osteoforge::detect::format_percent;
use osteoforge::{
    evaluate_masks, generate_phantom, perturb_predictions, Connectivity3D, DetectionCounts, PerturbMode, PhantomSpec,
};

fn main() -> osteoforge::Result<()> {
    for (tp, fp, fn_) in [(375, 13, 418), (99, 289, 98)] {
        let c = DetectionCounts::new(tp, fp, fn_);
        println!(
            "TP {tp} FP {fp} FN {fn_}: precision {} recall {}",
            format_percent(c.precision()),
            format_percent(c.recall())
        );
    }

    let p = generate_phantom(&PhantomSpec::default())?;
    let masks = p.lesion_masks();
    let gt = p.all_lesions();
    for mode in [PerturbMode::Perfect, PerturbMode::Drop(3), PerturbMode::AddSpurious(2)] {
        let pred = perturb_predictions(&masks, mode, 1)?;
        let report = evaluate_masks(&gt, &pred, Connectivity3D::TwentySix, 0.0)?;
        println!("\n{mode:?}\n{report}");
    }
    Ok(())
}
