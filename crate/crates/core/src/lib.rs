//! Multimodal BCI building blocks: Riemannian geometry of covariance
//! matrices, an adaptive minimum-distance-to-mean motor-imagery classifier,
//! pupillary accommodative response (PAR) decoding, a neurofeedback training
//! protocol, the adaptive scanning-menu state machine, and a seeded signal
//! simulator that stands in for the acquisition hardware.

pub mod eeg;
pub mod label;
pub mod mi;
pub mod nf;
pub mod pupil;
pub mod sim;
pub mod spd;
pub mod ui;

pub use label::{label, TaskLabel};
pub use spd::{SpdError, SpdMatrix};
