#![allow(dead_code)]

pub mod des;
pub mod omega;
pub mod synth;
