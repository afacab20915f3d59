//! All derived quantities of one channel realization, built in order:
//! precoder, transmit linearization, receive linearization, combiner.

use crate::error::LinkError;
use crate::numerics::ComplexMatrix;
use crate::rx::{effective_gain, optimal_combiner, rx_linearize, Combiner, RxLinearization};
use crate::tx::{tx_linearize, LinkConfig, Precoder, PrecoderBasis, TxLinearization};

#[derive(Clone, Debug)]
pub struct LinearizedLink {
    pub config: LinkConfig,
    /// `M × N`.
    pub h: ComplexMatrix,
    pub precoder: Precoder,
    pub tx: TxLinearization,
    pub rx: RxLinearization,
    /// `G̃_RX·H·G_TX·W`, without the `√ρ` factor.
    pub gain: ComplexMatrix,
    /// `V*`.
    pub combiner: Combiner,
}

impl LinearizedLink {
    pub fn new(h: ComplexMatrix, precoder: Precoder, config: LinkConfig) -> Result<Self, LinkError> {
        config.validate()?;
        if precoder.dac_mode != config.dac_mode {
            return Err(LinkError::Config(format!(
                "precoder built for {} DACs, link uses {}",
                precoder.dac_mode.label(),
                config.dac_mode.label()
            )));
        }
        let tx = tx_linearize(&precoder, &config)?;
        let rx = rx_linearize(&h, &tx, &config)?;
        let gain = effective_gain(&h, &tx, &rx, &precoder);
        let combiner = optimal_combiner(&h, &tx, &rx, &precoder, &config)?;
        Ok(Self {
            config,
            h,
            precoder,
            tx,
            rx,
            gain,
            combiner,
        })
    }

    /// Link with the SVD precoder of `h`.
    pub fn from_channel(h: ComplexMatrix, config: LinkConfig) -> Result<Self, LinkError> {
        let basis = PrecoderBasis::from_channel(&h)?;
        Self::from_basis(h, &basis, config)
    }

    /// Link reusing a precomputed right singular basis of `h`.
    pub fn from_basis(h: ComplexMatrix, basis: &PrecoderBasis, config: LinkConfig) -> Result<Self, LinkError> {
        let precoder = basis.precoder(config.k, config.dac_mode)?;
        Self::new(h, precoder, config)
    }

    pub fn optimal_v(&self) -> &ComplexMatrix {
        &self.combiner.v
    }
}
