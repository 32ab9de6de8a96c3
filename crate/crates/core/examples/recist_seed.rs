//! Parse a RECIST record and turn it into GrabCut seeds.

use osteoforge::recist::parse_lesion_records_str;
use osteoforge::{rasterize_quad, seed_geometry};

const CSV: &str = "lesion_id,series_id,slice_index,x1,y1,x2,y2,x3,y3,x4,y4
L1,CT01,12,5,15,25,15,15,5,15,25
";

fn main() -> osteoforge::Result<()> {
    let records = parse_lesion_records_str(CSV)?;
    let m = &records[0];
    let warnings = m.validate_against([32, 32, 24])?;
    println!("{} on slice {}: {} warnings", m.lesion_id, m.slice_index, warnings.len());

    let g = seed_geometry(m, (32, 32))?;
    println!("bbox {:?}", g.bbox);
    println!("quad {:?}", g.quad.map(|p| (p.x, p.y)));
    let quad = rasterize_quad(&g, (32, 32));
    for y in g.bbox.y_min..=g.bbox.y_max {
        let row: String = (g.bbox.x_min..=g.bbox.x_max)
            .map(|x| if quad.get(x, y) { '#' } else { '.' })
            .collect();
        println!("{row}");
    }
    Ok(())
}
