pub mod audio_io;
pub mod augment;
pub mod cli;
pub mod datastore;
pub mod dsp;
pub mod features;
pub mod nn;
pub mod pipeline;
pub mod training;
