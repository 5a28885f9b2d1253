#![allow(dead_code)]

pub mod canary;
pub mod corpus;
pub mod desk;
pub mod oracles;
pub mod suites;
pub mod toy;
