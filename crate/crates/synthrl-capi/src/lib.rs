//! C ABI surface; fleshed out alongside the core crate.
