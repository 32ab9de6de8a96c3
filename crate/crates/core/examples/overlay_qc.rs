//! Render QC overlays for a phantom's ground-truth labels.

use osteoforge::overlay::write_overlays;
use osteoforge::{generate_phantom, PhantomSpec, WindowSpec};

fn main() -> osteoforge::Result<()> {
    let p = generate_phantom(&PhantomSpec::default())?;
    let dir = std::env::temp_dir().join("osteoforge_overlays");
    let written = write_overlays(&p.volume, &p.labels, &dir, &WindowSpec::default())?;
    println!("{} PNGs in {}", written.len(), dir.display());
    Ok(())
}
