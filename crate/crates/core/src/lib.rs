pub mod isa;
pub mod kernels;
pub mod par;
pub mod rng;
pub mod verifier;
pub mod bench;
pub mod cli;
pub mod search;
