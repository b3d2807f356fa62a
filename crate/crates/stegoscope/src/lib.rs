//! Reliability-aware steganalysis for spatial-domain LSB embedding.
//!
//! Classifiers built for steganalysis are only trustworthy on images that
//! resemble their training data. This crate trains the usual cover/stego
//! classifier and, alongside it, a second classifier on re-embedded
//! versions of the same images. Because embedding is something the analyst
//! can always do, every test image yields a pair of predictions whose
//! *consistency* can be checked without knowing the true label. The rate
//! of inconsistent pairs turns into a label-free estimate of the
//! classification error, which flags cover-source mismatch and other
//! domain shifts before the predictions are trusted.
//!
//! The pieces, bottom to top:
//!
//! * [`image`]: grayscale images, canonical PGM I/O, mirror-padded
//!   convolution.
//! * [`synth`]: a seeded synthetic cover generator so experiments run
//!   anywhere, with no external corpus.
//! * [`embed`]: LSB matching, both rate-based and cost-adaptive with a
//!   calibrated payload-limited sender.
//! * [`features`]: quantized residual co-occurrence histograms.
//! * [`ensemble`]: random-subspace Fisher discriminant ensemble.
//! * [`detector`]: paired dataset construction, the two consistency
//!   filters, and the error predictor.
//! * [`config`] / [`harness`] / [`cli`]: experiment configuration, the
//!   end-to-end pipeline, and the command-line front end.
//!
//! The rendered guide under `book/` walks through the same layers; its
//! code samples compile and run as this crate's doctests.

pub mod cli;
pub mod config;
pub mod detector;
pub mod embed;
pub mod ensemble;
pub mod features;
pub mod harness;
pub mod image;
pub mod rng;
pub mod synth;

pub mod book;

pub use embed::{EmbedAlgorithm, EmbedConfig};
pub use image::{ImageGray, RealPlane};
