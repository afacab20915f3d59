//! Simulation of downlink massive MIMO links with 1-bit DACs at the base
//! station and 1-bit ADCs at the terminal.
//!
//! The crate linearizes both quantizers with Bussgang's theorem, computes the
//! resulting approximate MSE and its minimizing linear combiner, and checks
//! the approximation with Monte Carlo MSE and 16-PSK symbol error rates over
//! i.i.d. and geometric planar-array channels.

pub mod channel;
pub mod error;
pub mod experiments;
pub mod link;
pub mod metrics;
pub mod numerics;
pub mod par;
pub mod rx;
pub mod tx;

pub use channel::{AngleConvention, ArrayGeometry, ChannelError, ChannelModel, ChannelRealization, ScattererCluster};
pub use error::LinkError;
pub use link::LinearizedLink;
pub use metrics::{Constellation, MseReport, SerOptions, SerReport, SymbolSource};
pub use numerics::{ComplexMatrix, ComplexVector, NumericsError, RngStream, C64};
pub use par::Execution;
pub use tx::{AdcMode, DacMode, LinkConfig};
