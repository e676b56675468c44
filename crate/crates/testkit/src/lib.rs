//! Oracles and fixtures for the matra test suites.
//!
//! Everything here is written independently of the code it checks: the edit
//! distance is a breadth-first search over strings, BLEU counts n-grams by
//! sorting, and the gradient fixtures only go through the public graph API.

pub mod edit;
pub mod bleu;
pub mod gradients;
pub mod toy;
