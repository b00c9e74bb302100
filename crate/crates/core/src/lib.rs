//! Space-time trellis codes over amplify-and-forward relay channels with an
//! M-antenna source, a single-antenna relay and an N-antenna destination:
//! pairwise-error-probability analysis, code design and ranking, and Monte
//! Carlo BER/FER simulation with ML Viterbi decoding.

pub mod analysis;
pub mod cli;
pub mod model;
pub mod quad;
pub mod search;
pub mod sim;
pub mod trellis;
