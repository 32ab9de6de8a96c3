//! Graph-cut segmentation: mixtures, max-flow and the GrabCut loop.

pub mod gmm;
pub mod grabcut;
pub mod maxflow;

pub use gmm::{Gaussian, Gmm, GmmModel};
pub use grabcut::{
    build_graph, build_trimap, compute_beta, energy, grabcut_segment, grabcut_segment_traced,
    Connectivity2D, GrabCutOutcome, GrabCutParams, RoundTrace, Trimap, TrimapLabel,
};
pub use maxflow::{max_flow, FlowNetwork, MinCut};
