//! Synthetic multi-view head-video dataset generation.
//!
//! The crate turns per-frame head-mesh sequences and UV face textures into
//! rendered frame directories, distributes rendering over a coordinator and
//! worker farm, builds stratified dataset manifests for real, synthetic and
//! mixed training regimes, and scores binary pain predictions.
//!
//! | module | contents |
//! |---|---|
//! | [`mesh`] | OBJ parsing/serialization, mesh-sequence loading |
//! | [`texture`] | texture atlases, bilinear sampling, per-patient texture assignment |
//! | [`render`] | pinhole cameras, z-buffered rasterizer, frame output |
//! | [`farm`] | render-job coordinator, workers, wire protocol, journal |
//! | [`dataset`] | ablation job planning, manifests, stratified splits, leakage checks |
//! | [`metrics`] | AUROC, F1, accuracy, weighted BCE |
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example` lists them.

pub mod dataset;
pub mod farm;
pub mod mesh;
pub mod metrics;
pub mod render;
pub mod texture;
