pub mod biomarkers;
pub mod classifier;
pub mod graph;
pub mod hcz;
pub mod morphology;
pub mod numeric;
pub mod phantom;
pub mod pipeline;
pub mod pruning;
pub mod skeleton;
pub mod volume;
