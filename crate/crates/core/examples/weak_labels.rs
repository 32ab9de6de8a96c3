//! Weak 3D lesion labels merged with body and skeleton regions.

use osteoforge::cli::{weak_label_volume, PipelineConfig};
use osteoforge::{generate_phantom, PhantomSpec};

fn main() -> osteoforge::Result<()> {
    let p = generate_phantom(&PhantomSpec::default())?;
    let cfg = PipelineConfig::default();
    let (labels, lesions, warnings) = weak_label_volume(&p.volume, &p.recist, &p.body, &p.skeleton, &cfg)?;

    for l in &lesions {
        println!(
            "{}: slices {:?}, {} center pixels, {} voxels",
            l.lesion_id,
            l.z_extent,
            l.center_mask.count(),
            l.voxel_count()
        );
    }
    let [bg, body, bone, lesion] = labels.histogram();
    println!("background {bg}, body {body}, skeleton {bone}, lesion {lesion}");
    for w in warnings {
        println!("warning: {w}");
    }
    Ok(())
}
