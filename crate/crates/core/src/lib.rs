//! Aesthetic-judgement CAPTCHA.
//!
//! Users are shown a grid of curator-labeled images and asked to click the
//! one that does not look nice (or, reversed, the one that does). The crate
//! is split into the labeled image pool, the pure puzzle engine, the
//! one-shot challenge protocol, and an attack harness that measures how
//! often scripted bots get through.

pub mod harness;
pub mod pool;
pub mod puzzle;
pub mod service;
