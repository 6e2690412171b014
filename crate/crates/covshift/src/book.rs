//! Doc-test anchors for the guide in `book/`.
//!
//! mdBook cannot run example code against this crate, so each chapter is
//! attached here as module documentation and `cargo test --doc` runs every
//! code block. A failing snippet names its chapter module.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/conformal-p-values.md")]
pub mod conformal_p_values {}

#[doc = include_str!("../../../book/src/weighted-conformal.md")]
pub mod weighted_conformal {}

#[doc = include_str!("../../../book/src/density-ratios.md")]
pub mod density_ratios {}

#[doc = include_str!("../../../book/src/running-the-test.md")]
pub mod running_the_test {}

#[doc = include_str!("../../../book/src/simulation-lab.md")]
pub mod simulation_lab {}

#[doc = include_str!("../../../book/src/real-data.md")]
pub mod real_data {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli_reference {}
