pub mod data;
pub mod dataset;
pub mod features;
pub mod geogrid;
pub mod learn;
pub mod riskmodel;
pub mod rng;
pub mod service;
