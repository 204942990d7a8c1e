pub mod benchmark;
pub mod build_index;
pub mod glm;
pub mod report;
pub mod synth;
