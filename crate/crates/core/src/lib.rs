pub mod dataset;
pub mod forest;
pub mod explanation;
pub mod lime;
pub mod shap;
pub mod render;
pub mod service;
