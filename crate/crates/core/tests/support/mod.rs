#![allow(dead_code)]

pub mod counter;
pub mod naive;
pub mod random_kb;
