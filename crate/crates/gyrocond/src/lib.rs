//! Host side of the gyro conditioner: scenarios, analysis, reports and the
//! live service.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod report;
pub mod scenarios;
pub mod protocol;
pub mod service;
