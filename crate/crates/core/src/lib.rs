//! Chaotic variational autoencoder (C-VAE) one-class classifier.
//!
//! Trains a VAE on genuine-class records with latent noise drawn from a
//! logistic chaotic map, scores unseen records by reconstruction error, and
//! compares against the Gaussian-noise VAE baseline with a pooled t-test.

pub mod chaos;
pub mod cli;
pub mod data;
pub mod nn;
pub mod occ;
pub mod stats;
pub mod vae;
