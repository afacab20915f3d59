use thiserror::Error;

use crate::channel::ChannelError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("invalid link configuration: {0}")]
    Config(String),
    #[error("antenna {index} is fed no signal (diag(C_x) = {value:.3e}); W has a zero row")]
    DegenerateAntenna { index: usize, value: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}
