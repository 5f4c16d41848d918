//! Shared fixtures for the benchmarks.

use hrris::experiment::trial_channels;
use hrris::{ChannelPair, ExperimentSpec};

/// Default scenario with `n` surface elements and the channel draw of trial 0.
pub fn fixture(n: usize) -> (ExperimentSpec, ChannelPair) {
    let mut spec = ExperimentSpec::default();
    spec.fading.surface_elements = n;
    let ch = trial_channels(&spec, 0).expect("default scenario draws channels");
    (spec, ch)
}
