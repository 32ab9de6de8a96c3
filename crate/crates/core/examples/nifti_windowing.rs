//! Write a small CT volume, read it back and window it for display.

use osteoforge::nifti;
use osteoforge::{window_to_u8, Geometry, Grid, WindowSpec};

fn main() -> osteoforge::Result<()> {
    let g = Geometry::new([5, 1, 1], [0.8, 0.8, 2.5], [0.0; 3])?;
    let hu = Grid::from_vec(g, vec![-1000i16, -175, 50, 275, 1200])?;
    let path = std::env::temp_dir().join("osteoforge_window_demo.nii.gz");
    nifti::write_volume(&hu, &path)?;

    let back = nifti::read_volume(&path)?;
    let gray = window_to_u8(&back, &WindowSpec::default());
    for (h, v) in back.data().iter().zip(gray.data()) {
        println!("{h:>6} HU -> {v:>3}");
    }
    Ok(())
}
