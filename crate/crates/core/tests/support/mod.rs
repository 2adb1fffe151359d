#![allow(dead_code)]

pub mod dp;
