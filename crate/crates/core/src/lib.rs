pub(crate) mod binio;
pub mod config;
pub mod embed;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod trainer;
pub mod text;
