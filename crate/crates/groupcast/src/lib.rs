//! User-grouping precoder for the multiuser MISO Gaussian downlink.
//!
//! Users are partitioned into ordered groups of equal size `g`. Beamforming
//! nulls inter-group interference only; the per-group effective channel is
//! lower triangular, so intra-group interference can be pre-subtracted
//! successively at the transmitter. With `g = 1` the scheme reduces to
//! classic zero-forcing; with `g = n_users` it is ZF-DP. The crate provides
//! the beamformer construction, waterfilling power allocation, grouping
//! search (exhaustive and greedy), the cached fast path for per-group
//! effective channels, and Monte Carlo evaluation utilities.

pub mod analysis;
pub mod channel;
pub mod fastpath;
pub mod grouping;
pub mod numkit;
pub mod powalloc;
pub mod precoder;
pub mod search;

mod error;

pub use error::{Error, Result};
