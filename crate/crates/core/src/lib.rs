//! Waveform-level model of an optically enabled, spectrally sliced ADC.
//!
//! A mode-locked laser comb supplies one reference line per spectral slice;
//! the RF signal is carried on a separate optical carrier, sliced by ideal
//! filters, heterodyned against its reference line on a balanced detector,
//! digitized by a jittered electrical clock and stitched back together in
//! DSP. The crate models every stage on a uniform time grid and provides the
//! closed-form jitter/SNR/ENOB arithmetic the Monte Carlo results are checked
//! against.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod digitizer;
pub mod dsp;
pub mod error;
pub mod noise;
pub mod optics;
pub mod sigkit;

pub use error::{Error, Result};
pub use sigkit::{BandMask, TimeGrid, WaveKind, Waveform};
