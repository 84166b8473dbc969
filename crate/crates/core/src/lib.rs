pub mod assignment;
pub mod cli;
pub mod config;
pub mod geometry;
pub mod kalman;
pub mod metrics;
pub mod mot_io;
pub mod pipeline;
pub mod synth;
pub mod trackers;
pub mod windowtracker;
