//! Synthesis of paired low-light video training data.
//!
//! Ordinary videos (domain A) are mapped through a sensor-specific
//! long-exposure domain (B) into a short-exposure domain (C) using two
//! CycleGANs: an unpaired A-B translator and a semi-supervised B-C
//! translator that exploits still-image exposure pairs. The resulting
//! synthetic (long, short) video pairs train a RAW-to-RGB forward model
//! under a three-stage real/synthetic schedule.
//!
//! Module map:
//!
//! * [`tensorio`] — on-disk tensors, dataset manifests, checkpoints
//! * [`domains`] — in-memory data model and deterministic batch sampling
//! * [`isp`] — RAW preprocessing (mosaic packing, binning, gain, normalize)
//! * [`backend`] — differentiable tensor engine (conv, pool, autodiff, Adam)
//! * [`nets`] — U-Net generators and patch discriminators
//! * [`losses`] — adversarial, cycle, identity, supervised and feature losses
//! * [`training`] — CycleGAN trainers, schedules, KID model selection,
//!   three-stage forward-model scheme
//! * [`synthesis`] — paired dataset emission through trained generators
//! * [`metrics`] — PSNR/SSIM, temporal stability, FID/KID, warping error
//! * [`toy`] — procedural desk-scale datasets for smoke runs and tests

pub mod backend;
pub mod domains;
pub mod isp;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod synthesis;
pub mod tensorio;
pub mod toy;
pub mod training;
