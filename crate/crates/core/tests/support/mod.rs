//! Independent oracles shared by the integration tests and the acceptance
//! suite.
#![allow(dead_code)]

pub mod fcm_oracle;
pub mod gradcheck;
pub mod metrics_oracle;
pub mod pca_oracle;
pub mod training;
