//! Independent oracles shared by the integration and acceptance suites.
//! Nothing here calls into the code paths it is used to check.
#![allow(dead_code)]

pub mod graph;
pub mod linkage;
pub mod lattice;
