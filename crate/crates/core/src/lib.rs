pub mod dataset;
pub mod similarity;
pub mod prompt;
pub mod gateway;
pub mod metrics;
pub mod reasoning;
pub mod analysis;
pub mod finetune;
pub mod synthetic;
pub mod runner;
