//! Minimum s-t cut on a small network.

use osteoforge::graphcut::{max_flow, FlowNetwork};

fn main() -> osteoforge::Result<()> {
    // 0 = source, 3 = sink.
    let mut net = FlowNetwork::new(4, 0, 3)?;
    net.add_arc(0, 1, 3.0);
    net.add_arc(0, 2, 2.0);
    net.add_arc(1, 2, 1.0);
    net.add_arc(1, 3, 2.0);
    net.add_arc(2, 3, 3.0);

    let cut = max_flow(&net);
    println!("max flow {}", cut.flow);
    println!("source side {:?}", cut.source_side);
    Ok(())
}
