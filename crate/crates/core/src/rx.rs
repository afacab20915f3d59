//! Receiver: channel pass, 1-bit ADCs, Gaussian-approximation Bussgang
//! linearization (`G̃_RX`, `C̃_r`) and the combiner minimizing the
//! approximate MSE.

use std::f64::consts::FRAC_2_PI;

use crate::error::LinkError;
use crate::numerics::{elementwise_arcsine_map, hermitian_solve_named, ComplexMatrix, ComplexVector, RngStream, C64};
use crate::tx::{quantize_1bit_in_place, AdcMode, LinkConfig, Precoder, TxLinearization};

#[derive(Clone, Debug)]
pub struct RxSignal {
    /// `√ρ·H·t + z`.
    pub y: ComplexVector,
    /// ADC output.
    pub r: ComplexVector,
}

/// One pass through channel, noise and 1-bit ADCs.
pub fn simulate_rx_signal(rng: &mut RngStream, h: &ComplexMatrix, t: &ComplexVector, rho: f64) -> RxSignal {
    simulate_rx_signal_with(rng, h, t, rho, AdcMode::OneBit)
}

/// As [`simulate_rx_signal`]; `AdcMode::FullResolution` returns `r = y`.
pub fn simulate_rx_signal_with(
    rng: &mut RngStream,
    h: &ComplexMatrix,
    t: &ComplexVector,
    rho: f64,
    adc: AdcMode,
) -> RxSignal {
    let sr = rho.sqrt();
    let mut y = h.mul_vector(t);
    for z in y.0.iter_mut() {
        *z = *z * sr + rng.complex_normal();
    }
    let mut r = y.clone();
    if adc == AdcMode::OneBit {
        quantize_1bit_in_place(&mut r.0, rho + 1.0);
    }
    RxSignal { y, r }
}

/// Receive-side linearization under the Gaussian approximation of `y`.
#[derive(Clone, Debug)]
pub struct RxLinearization {
    /// `ρ·H·C_t·Hᴴ + I`.
    pub c_y: ComplexMatrix,
    /// Diagonal of `G̃_RX`.
    pub g_rx: Vec<f64>,
    /// `C̃_r`.
    pub c_r: ComplexMatrix,
}

impl RxLinearization {
    pub fn g_rx_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_diagonal(&self.g_rx)
    }
}

/// Builds `C_y`, `G̃_RX = √(2η/π)·Diag(C_y)^{-1/2}` and the arcsine-law `C̃_r`.
///
/// With full-resolution ADCs the Bussgang step is the identity:
/// `G̃_RX = I`, `C̃_r = C_y`.
pub fn rx_linearize(
    h: &ComplexMatrix,
    tx_lin: &TxLinearization,
    config: &LinkConfig,
) -> Result<RxLinearization, LinkError> {
    if h.rows() != config.m || h.cols() != config.n || tx_lin.c_t.rows() != config.n {
        return Err(LinkError::Config(format!(
            "channel is {}x{}, link expects {}x{}",
            h.rows(),
            h.cols(),
            config.m,
            config.n
        )));
    }
    let m = config.m;
    let mut c_y = h.matmul(&tx_lin.c_t).mul_adjoint(h).scale(config.rho);
    for i in 0..m {
        c_y[(i, i)] += C64::new(1.0, 0.0);
    }
    c_y.hermitianize();

    match config.adc_mode {
        AdcMode::FullResolution => Ok(RxLinearization {
            g_rx: vec![1.0; m],
            c_r: c_y.clone(),
            c_y,
        }),
        AdcMode::OneBit => {
            let eta = config.eta_rx;
            let gain = (FRAC_2_PI * eta).sqrt();
            let g_rx = c_y.diagonal_real().iter().map(|d| gain / d.sqrt()).collect();
            let mut c_r = elementwise_arcsine_map(&c_y)?.scale(FRAC_2_PI * eta);
            for i in 0..m {
                c_r[(i, i)] = C64::new(eta, 0.0);
            }
            Ok(RxLinearization { c_y, g_rx, c_r })
        }
    }
}

/// `C̃_{d_RX} = C̃_r − G̃_RX·C_y·G̃_RX`.
pub fn rx_distortion_cov(rx_lin: &RxLinearization) -> ComplexMatrix {
    let gcg = rx_lin.c_y.scale_rows(&rx_lin.g_rx).scale_cols(&rx_lin.g_rx);
    rx_lin.c_r.sub(&gcg)
}

/// Combining matrix `V` (`M × K`).
#[derive(Clone, Debug, PartialEq)]
pub struct Combiner {
    pub v: ComplexMatrix,
}

/// `G̃_RX·H·G_TX·W` (`M × K`): the linear signal gain seen by the combiner.
pub fn effective_gain(
    h: &ComplexMatrix,
    tx_lin: &TxLinearization,
    rx_lin: &RxLinearization,
    precoder: &Precoder,
) -> ComplexMatrix {
    h.matmul(&precoder.w.scale_rows(&tx_lin.g_tx)).scale_rows(&rx_lin.g_rx)
}

/// `V* = √ρ·C̃_r⁻¹·G̃_RX·H·G_TX·W`, via a Cholesky solve.
pub fn optimal_combiner(
    h: &ComplexMatrix,
    tx_lin: &TxLinearization,
    rx_lin: &RxLinearization,
    precoder: &Precoder,
    config: &LinkConfig,
) -> Result<Combiner, LinkError> {
    let rhs = effective_gain(h, tx_lin, rx_lin, precoder).scale(config.rho.sqrt());
    let v = hermitian_solve_named("C_r_tilde", &rx_lin.c_r, &rhs)?;
    Ok(Combiner { v })
}
