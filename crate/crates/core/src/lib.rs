pub mod tensor;
pub mod dataset;
pub mod kinematics;
pub mod grae;
pub mod synthetic;
pub mod analysis;
pub mod metrics;
