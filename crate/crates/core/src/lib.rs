//! Recovery of obfuscated Windows API call names from 32-bit x86 listings.
//!
//! The pipeline: parse pre-disassembled function listings, pick the longest
//! loop-free CFG path, symbolically execute it to capture call-site stack
//! arguments, abstract those onto a small token alphabet, then classify the
//! token sequences with per-API hidden Markov models feeding a multinomial
//! logistic regression.
//!
//! Numeric code is generic over the scalar via [`num::Real`]; the `f64`
//! aliases below are what the pipeline and CLI use.

pub mod cfg;
pub mod dataset;
pub mod error;
pub mod extract;
pub mod features;
pub mod hmm;
pub mod listing;
pub mod mlr;
pub mod num;
pub mod pipeline;
pub mod report;
pub mod svd;
pub mod symexec;
pub mod synth;
pub mod tokens;
pub mod x86;

pub use error::{Error, Result};

/// Concrete `f64` instantiations of the generic numeric core. The pipeline,
/// bundle format and CLI all work at this precision.
pub type Hmm = hmm::HmmParams<f64>;
pub type Bank = features::HmmBank<f64>;
pub type Classifier = mlr::MlrModel<f64>;
pub type Basis = svd::BowBasis<f64>;
pub type FeatureVector = Vec<f64>;

/// Stable per-stage seed derivation so one master seed reproduces a whole
/// run. FNV-1a over the label, mixed with the master through splitmix64.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    splitmix64(master ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
