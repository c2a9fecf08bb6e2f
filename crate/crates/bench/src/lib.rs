//! Shared inputs for the benchmarks.

use wdpd_core::pa_model::NOMINAL_PEAK_DRIVE;
use wdpd_core::signal::{generate_multicarrier, scale_to_peak, WaveformSpec};
use wdpd_core::IqWaveform;

/// Default stimulus truncated to `n_samples`, at nominal drive.
pub fn stimulus(n_samples: usize) -> IqWaveform {
    let spec = WaveformSpec { n_samples, n_carriers: (n_samples / 32).max(1), ..Default::default() };
    let w = generate_multicarrier(&spec).expect("valid bench stimulus");
    scale_to_peak(&w, NOMINAL_PEAK_DRIVE).expect("non-zero stimulus")
}
