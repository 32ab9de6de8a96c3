//! GrabCut on a synthetic slice: a bright disk seeded by a RECIST cross.

use osteoforge::graphcut::{grabcut_segment_traced, GrabCutParams};
use osteoforge::recist::RecistMeasurement;
use osteoforge::{seed_geometry, Image, Point};

fn main() -> osteoforge::Result<()> {
    let (w, h) = (48, 48);
    let mut slice = Image::filled(w, h, 40u8);
    for y in 0..h {
        for x in 0..w {
            if (x as f64 - 24.0).hypot(y as f64 - 22.0) <= 9.0 {
                slice.set(x, y, 210);
            }
        }
    }
    let m = RecistMeasurement {
        lesion_id: "L1".into(),
        series_id: "demo".into(),
        slice_index: 0,
        long_axis: [Point::new(15.0, 22.0), Point::new(33.0, 22.0)],
        short_axis: [Point::new(24.0, 13.0), Point::new(24.0, 31.0)],
    };
    let geom = seed_geometry(&m, (w, h))?;
    let out = grabcut_segment_traced(&slice, &geom, &GrabCutParams::default(), 0)?;

    println!("foreground pixels: {} (disk area {:.0})", out.mask.count(), std::f64::consts::PI * 81.0);
    for (i, r) in out.rounds.iter().enumerate() {
        println!("round {i}: energy {:.2}, {} pixels changed", r.energy_after_cut, r.changed_pixels);
    }
    Ok(())
}
