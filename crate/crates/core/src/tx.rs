//! Transmitter: link parameters, SVD precoding, 1-bit DACs and the
//! transmit-side Bussgang linearization `t = G_TX·x + d_TX`.

use std::f64::consts::{FRAC_2_PI, PI};

use serde::{Deserialize, Serialize};

use crate::error::LinkError;
use crate::numerics::{self, elementwise_arcsine_map, ComplexMatrix, ComplexVector, C64};

/// Diagonal entries of `C_x` at or below this fraction of the largest one
/// are treated as antennas fed no signal.
pub const DEGENERATE_DIAG_RATIO: f64 = 1e-14;

/// Trailing singular values below this fraction of the largest mark a
/// precoder as using directions outside the channel's numerical rank.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DacMode {
    OneBit,
    FullResolution,
}

impl DacMode {
    pub fn label(self) -> &'static str {
        match self {
            DacMode::OneBit => "one-bit",
            DacMode::FullResolution => "full-resolution",
        }
    }
}

/// Receive converters. Full resolution is a diagnostic mode only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AdcMode {
    #[default]
    OneBit,
    FullResolution,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Scalar parameters of one link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkConfig {
    /// Transmit antennas.
    pub n: usize,
    /// Receive antennas.
    pub m: usize,
    /// Data streams.
    pub k: usize,
    /// Transmit SNR, linear.
    pub rho: f64,
    /// DAC output scaling, `1/N`.
    pub eta_tx: f64,
    /// ADC output scaling, `ρ + 1`.
    pub eta_rx: f64,
    pub dac_mode: DacMode,
    pub adc_mode: AdcMode,
}

impl LinkConfig {
    pub fn new(n: usize, m: usize, k: usize, rho: f64, dac_mode: DacMode) -> Result<Self, LinkError> {
        let cfg = Self {
            n,
            m,
            k,
            rho,
            eta_tx: 1.0 / n as f64,
            eta_rx: rho + 1.0,
            dac_mode,
            adc_mode: AdcMode::OneBit,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_db(n: usize, m: usize, k: usize, rho_db: f64, dac_mode: DacMode) -> Result<Self, LinkError> {
        Self::new(n, m, k, db_to_linear(rho_db), dac_mode)
    }

    pub fn with_adc_mode(mut self, adc_mode: AdcMode) -> Self {
        self.adc_mode = adc_mode;
        self
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        if self.n == 0 || self.m == 0 || self.k == 0 {
            return Err(LinkError::Config("N, M and K must be positive".into()));
        }
        if self.k > self.n.min(self.m) {
            return Err(LinkError::Config(format!(
                "K = {} exceeds min(N, M) = {}",
                self.k,
                self.n.min(self.m)
            )));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(LinkError::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if self.eta_tx != 1.0 / self.n as f64 {
            return Err(LinkError::Config("eta_tx must equal 1/N".into()));
        }
        if self.eta_rx != self.rho + 1.0 {
            return Err(LinkError::Config("eta_rx must equal rho + 1".into()));
        }
        Ok(())
    }
}

/// `√(η/2)·(sgn Re b + j·sgn Im b)` per entry, with `sgn(0) = +1`.
pub fn quantize_1bit(b: &ComplexVector, eta: f64) -> ComplexVector {
    let mut out = b.clone();
    quantize_1bit_in_place(&mut out.0, eta);
    out
}

pub fn quantize_1bit_in_place(b: &mut [C64], eta: f64) {
    let a = (eta / 2.0).sqrt();
    for z in b {
        *z = C64::new(sign(z.re) * a, sign(z.im) * a);
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Linear precoder `W` and the transmit covariance `C_x = W·Wᴴ`.
#[derive(Clone, Debug)]
pub struct Precoder {
    /// `N × K`.
    pub w: ComplexMatrix,
    /// `N × N`.
    pub c_x: ComplexMatrix,
    pub dac_mode: DacMode,
    /// Set when `K` exceeds the channel's numerical rank.
    pub rank_deficient: bool,
}

impl Precoder {
    pub fn from_w(w: ComplexMatrix, dac_mode: DacMode) -> Self {
        let mut c_x = w.mul_adjoint(&w);
        c_x.hermitianize();
        Self {
            w,
            c_x,
            dac_mode,
            rank_deficient: false,
        }
    }

    pub fn streams(&self) -> usize {
        self.w.cols()
    }
}

/// Right singular basis of a channel, reusable across `K` and DAC modes.
#[derive(Clone, Debug)]
pub struct PrecoderBasis {
    singular_values: Vec<f64>,
    /// `N × min(M, N)`, columns phase-normalized.
    v: ComplexMatrix,
}

impl PrecoderBasis {
    pub fn from_channel(h: &ComplexMatrix) -> Result<Self, LinkError> {
        let (singular_values, mut v) = numerics::right_singular_vectors(h)?;
        normalize_column_phases(&mut v);
        Ok(Self { singular_values, v })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Principal `k` right singular vectors; scaled by `1/√K` under
    /// full-resolution DACs so that `tr(W·Wᴴ) = 1`.
    pub fn precoder(&self, k: usize, dac_mode: DacMode) -> Result<Precoder, LinkError> {
        if k == 0 || k > self.v.cols() {
            return Err(LinkError::Config(format!("K = {k} must lie in 1..={}", self.v.cols())));
        }
        let scale = match dac_mode {
            DacMode::OneBit => 1.0,
            DacMode::FullResolution => 1.0 / (k as f64).sqrt(),
        };
        let w = ComplexMatrix::from_fn(self.v.rows(), k, |i, j| self.v[(i, j)] * scale);
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        let sk = self.singular_values[k - 1];
        let rank_deficient = sk.is_nan() || sk <= RANK_TOL * top;
        let mut p = Precoder::from_w(w, dac_mode);
        p.rank_deficient = rank_deficient;
        Ok(p)
    }
}

/// Rotates each column so its largest-magnitude entry is real positive
/// (first such entry on ties).
fn normalize_column_phases(v: &mut ComplexMatrix) {
    for j in 0..v.cols() {
        let mut best = 0;
        let mut best_abs = -1.0;
        for i in 0..v.rows() {
            let a = v[(i, j)].norm();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if best_abs > 0.0 {
            let phase = v[(best, j)].conj() / best_abs;
            for i in 0..v.rows() {
                v[(i, j)] *= phase;
            }
            v[(best, j)] = C64::new(v[(best, j)].re, 0.0);
        }
    }
}

/// `W` = the `k` principal right singular vectors of `h`.
pub fn build_svd_precoder(h: &ComplexMatrix, k: usize, dac_mode: DacMode) -> Result<Precoder, LinkError> {
    PrecoderBasis::from_channel(h)?.precoder(k, dac_mode)
}

/// Transmit-side Bussgang quantities.
#[derive(Clone, Debug)]
pub struct TxLinearization {
    /// Diagonal of `G_TX`.
    pub g_tx: Vec<f64>,
    /// `C_t = E[t·tᴴ]`.
    pub c_t: ComplexMatrix,
}

impl TxLinearization {
    pub fn g_tx_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_diagonal(&self.g_tx)
    }
}

/// Closed-form `G_TX = √(2η/π)·Diag(C_x)^{-1/2}` and arcsine-law `C_t`.
///
/// Under full-resolution DACs the quantizer is absent: `G_TX = I`, `C_t = C_x`.
pub fn tx_linearize(precoder: &Precoder, config: &LinkConfig) -> Result<TxLinearization, LinkError> {
    let n = precoder.c_x.rows();
    if n != config.n || precoder.streams() != config.k {
        return Err(LinkError::Config(format!(
            "precoder is {}x{}, link expects {}x{}",
            n,
            precoder.streams(),
            config.n,
            config.k
        )));
    }
    match config.dac_mode {
        DacMode::FullResolution => Ok(TxLinearization {
            g_tx: vec![1.0; n],
            c_t: precoder.c_x.clone(),
        }),
        DacMode::OneBit => {
            let diag = precoder.c_x.diagonal_real();
            let max = diag.iter().copied().fold(0.0f64, f64::max);
            if let Some((index, &value)) = diag
                .iter()
                .enumerate()
                .find(|(_, &d)| d.is_nan() || d <= DEGENERATE_DIAG_RATIO * max || max == 0.0)
            {
                return Err(LinkError::DegenerateAntenna { index, value });
            }
            let eta = config.eta_tx;
            let gain = (FRAC_2_PI * eta).sqrt();
            let g_tx = diag.iter().map(|d| gain / d.sqrt()).collect();
            let mut c_t = elementwise_arcsine_map(&precoder.c_x)?.scale(FRAC_2_PI * eta);
            for i in 0..n {
                c_t[(i, i)] = C64::new(eta, 0.0);
            }
            Ok(TxLinearization { g_tx, c_t })
        }
    }
}

/// `C_{d_TX} = C_t − G_TX·C_x·G_TX`.
pub fn tx_distortion_cov(lin: &TxLinearization, precoder: &Precoder) -> ComplexMatrix {
    let gcg = precoder.c_x.scale_rows(&lin.g_tx).scale_cols(&lin.g_tx);
    lin.c_t.sub(&gcg)
}

/// `1 − 2/π`: per-antenna distortion fraction of a 1-bit quantizer on a
/// Gaussian input.
pub const ONE_BIT_DISTORTION_FRACTION: f64 = 1.0 - 2.0 / PI;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ComplexGaussianSampler, RngStream};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_w(rng: &mut RngStream, n: usize, k: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, k, |_, _| rng.complex_normal())
    }

    #[test]
    fn quantizer_examples() {
        let b = ComplexVector(vec![c(1.0, 1.0), c(-2.0, -3.0)]);
        assert_eq!(quantize_1bit(&b, 2.0).0, vec![c(1.0, 1.0), c(-1.0, -1.0)]);
        let zero = ComplexVector(vec![c(0.0, 0.0)]);
        assert_eq!(quantize_1bit(&zero, 2.0).0, vec![c(1.0, 1.0)]);
        let neg_zero = ComplexVector(vec![c(-0.0, -0.0)]);
        assert_eq!(quantize_1bit(&neg_zero, 2.0).0, vec![c(1.0, 1.0)]);
    }

    #[test]
    fn quantizer_meets_power_constraint() {
        let mut rng = RngStream::new(1, 0);
        for n in [1usize, 3, 64, 1600] {
            let b = ComplexVector((0..n).map(|_| rng.complex_normal()).collect());
            let t = quantize_1bit(&b, 1.0 / n as f64);
            assert!((t.norm_sqr() - 1.0).abs() < 1e-12);
            let eta = 1.0 / n as f64;
            assert!(t.iter().all(|z| (z.norm_sqr() - eta).abs() <= 1e-15));
        }
    }

    #[test]
    fn config_invariants() {
        let cfg = LinkConfig::from_db(400, 400, 16, 10.0, DacMode::OneBit).unwrap();
        assert_eq!(cfg.eta_tx, 1.0 / 400.0);
        assert!((cfg.rho - 10.0).abs() < 1e-12);
        assert_eq!(cfg.eta_rx, cfg.rho + 1.0);
        assert!(LinkConfig::new(4, 8, 5, 1.0, DacMode::OneBit).is_err());
        assert!(LinkConfig::new(8, 4, 5, 1.0, DacMode::OneBit).is_err());
        assert!(LinkConfig::new(8, 8, 4, 0.0, DacMode::OneBit).is_err());
        assert!(LinkConfig::new(8, 8, 0, 1.0, DacMode::OneBit).is_err());
    }

    #[test]
    fn svd_precoder_of_diagonal_channel() {
        let h = ComplexMatrix::from_real_diagonal(&[3.0, 2.0, 1.0]);
        let p = build_svd_precoder(&h, 2, DacMode::OneBit).unwrap();
        // phase normalization makes the coordinate vectors exact
        for j in 0..2 {
            for i in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((p.w[(i, j)] - c(e, 0.0)).norm() < 1e-12);
            }
        }
        assert!(!p.rank_deficient);
    }

    #[test]
    fn svd_precoder_picks_top_singular_directions() {
        let mut rng = RngStream::new(2, 0);
        let h = random_w(&mut rng, 16, 16);
        let s = numerics::svd(&h).unwrap().singular_values;
        let p = build_svd_precoder(&h, 4, DacMode::OneBit).unwrap();
        let hw = h.matmul(&p.w);
        for (j, sj) in s.iter().take(4).enumerate() {
            assert!((hw.column(j).norm_sqr().sqrt() - sj).abs() < 1e-8);
        }
        let gram = p.w.adjoint_mul(&p.w);
        assert!(gram.sub(&ComplexMatrix::identity(4)).max_abs() < 1e-8);
        for j in 0..4 {
            let col = p.w.column(j);
            let (imax, _) = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
                .unwrap();
            assert_eq!(col[imax].im, 0.0);
            assert!(col[imax].re > 0.0);
        }
    }

    #[test]
    fn full_basis_gives_identity_covariance() {
        let mut rng = RngStream::new(3, 0);
        let h = random_w(&mut rng, 8, 8);
        let p = build_svd_precoder(&h, 8, DacMode::OneBit).unwrap();
        assert!(p.c_x.sub(&ComplexMatrix::identity(8)).max_abs() < 1e-8);
        let full = build_svd_precoder(&h, 8, DacMode::FullResolution).unwrap();
        assert!((full.c_x.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_excess_is_flagged() {
        let h = ComplexMatrix::from_real_diagonal(&[1.0, 0.0, 0.0]);
        let p = build_svd_precoder(&h, 2, DacMode::OneBit).unwrap();
        assert!(p.rank_deficient);
        assert!(build_svd_precoder(&h, 4, DacMode::OneBit).is_err());
    }

    #[test]
    fn linearize_identity_covariance() {
        let n = 4;
        let cfg = LinkConfig::new(n, n, n, 1.0, DacMode::OneBit).unwrap();
        let p = Precoder::from_w(ComplexMatrix::identity(n), DacMode::OneBit);
        let lin = tx_linearize(&p, &cfg).unwrap();
        let g = (2.0 / (PI * n as f64)).sqrt();
        assert!(lin.g_tx.iter().all(|&x| (x - g).abs() < 1e-15));
        assert!(lin.c_t.sub(&ComplexMatrix::identity(n).scale(0.25)).max_abs() < 1e-15);
        let d = tx_distortion_cov(&lin, &p);
        let expected = ComplexMatrix::identity(n).scale(0.25 * ONE_BIT_DISTORTION_FRACTION);
        assert!(d.sub(&expected).max_abs() < 1e-15);
    }

    fn correlated_pair() -> (Precoder, LinkConfig) {
        // Cholesky factor of [[1, 0.5], [0.5, 1]]
        let w = ComplexMatrix::from_row_major(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.5, 0.0), c(0.75f64.sqrt(), 0.0)])
            .unwrap();
        let p = Precoder::from_w(w, DacMode::OneBit);
        let cfg = LinkConfig::new(2, 2, 2, 1.0, DacMode::OneBit).unwrap();
        (p, cfg)
    }

    #[test]
    fn correlated_pair_closed_form() {
        let (p, cfg) = correlated_pair();
        let lin = tx_linearize(&p, &cfg).unwrap();
        assert!((lin.c_t[(0, 1)].re - 1.0 / 6.0).abs() < 1e-12);
        assert!((lin.c_t[(1, 0)].re - 1.0 / 6.0).abs() < 1e-12);
        let eig = tx_distortion_cov(&lin, &p).hermitian_eigenvalues().unwrap();
        assert!(eig.iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn linearize_rejects_zero_row() {
        let w = ComplexMatrix::from_row_major(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let p = Precoder::from_w(w, DacMode::OneBit);
        let cfg = LinkConfig::new(2, 2, 1, 1.0, DacMode::OneBit).unwrap();
        assert!(matches!(
            tx_linearize(&p, &cfg),
            Err(LinkError::DegenerateAntenna { index: 1, .. })
        ));
    }

    #[test]
    fn full_resolution_is_identity_linearization() {
        let mut rng = RngStream::new(4, 0);
        let h = random_w(&mut rng, 6, 6);
        let p = build_svd_precoder(&h, 3, DacMode::FullResolution).unwrap();
        let cfg = LinkConfig::new(6, 6, 3, 2.0, DacMode::FullResolution).unwrap();
        let lin = tx_linearize(&p, &cfg).unwrap();
        assert_eq!(lin.c_t, p.c_x);
        assert!(lin.g_tx.iter().all(|&g| g == 1.0));
    }

    /// Monte Carlo over `x ~ CN(0, C_x)`: returns the empirical `E[t tᴴ]`,
    /// its entrywise standard errors, `E[(t − Gx) xᴴ]` and its errors.
    struct TxMoments {
        tt: ComplexMatrix,
        tt_se: Vec<Vec<f64>>,
        dx: ComplexMatrix,
        dx_se: Vec<Vec<f64>>,
    }

    fn tx_moments(c_x: &ComplexMatrix, eta: f64, g: &[f64], draws: usize, seed: u64) -> TxMoments {
        let n = c_x.rows();
        let sampler = ComplexGaussianSampler::with_covariance(c_x).unwrap();
        let mut rng = RngStream::new(seed, 0);
        let mut sum = vec![vec![(c(0.0, 0.0), 0.0, 0.0); n]; n];
        let mut sum_dx = vec![vec![(c(0.0, 0.0), 0.0, 0.0); n]; n];
        for _ in 0..draws {
            let x = sampler.sample(&mut rng);
            let t = quantize_1bit(&x, eta);
            for i in 0..n {
                let d = t[i] - x[i] * g[i];
                for j in 0..n {
                    let v = t[i] * t[j].conj();
                    let e = &mut sum[i][j];
                    e.0 += v;
                    e.1 += v.re * v.re;
                    e.2 += v.im * v.im;
                    let w = d * x[j].conj();
                    let e = &mut sum_dx[i][j];
                    e.0 += w;
                    e.1 += w.re * w.re;
                    e.2 += w.im * w.im;
                }
            }
        }
        let d = draws as f64;
        let finish = |s: &Vec<Vec<(C64, f64, f64)>>| {
            let mean = ComplexMatrix::from_fn(n, n, |i, j| s[i][j].0 / d);
            let se = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let m = s[i][j].0 / d;
                            let vr = (s[i][j].1 / d - m.re * m.re).max(0.0);
                            let vi = (s[i][j].2 / d - m.im * m.im).max(0.0);
                            ((vr + vi) / d).sqrt()
                        })
                        .collect()
                })
                .collect();
            (mean, se)
        };
        let (tt, tt_se) = finish(&sum);
        let (dx, dx_se) = finish(&sum_dx);
        TxMoments { tt, tt_se, dx, dx_se }
    }

    #[test]
    fn arcsine_law_matches_monte_carlo_and_bussgang_orthogonality() {
        let (p, cfg) = correlated_pair();
        let lin = tx_linearize(&p, &cfg).unwrap();
        let mc = tx_moments(&p.c_x, cfg.eta_tx, &lin.g_tx, 1_000_000, 17);
        for i in 0..2 {
            for j in 0..2 {
                let se = mc.tt_se[i][j].max(1e-12);
                assert!((mc.tt[(i, j)] - lin.c_t[(i, j)]).norm() <= 4.0 * se);
                assert!(mc.dx[(i, j)].norm() <= 4.0 * mc.dx_se[i][j]);
            }
        }
    }

    #[test]
    fn bussgang_gain_minimizes_distortion_power() {
        let mut rng = RngStream::new(9, 9);
        let w = random_w(&mut rng, 4, 2);
        let p = Precoder::from_w(w, DacMode::OneBit);
        let cfg = LinkConfig::new(4, 4, 2, 1.0, DacMode::OneBit).unwrap();
        let lin = tx_linearize(&p, &cfg).unwrap();
        let sampler = ComplexGaussianSampler::with_covariance(&p.c_x).unwrap();
        let samples: Vec<(ComplexVector, ComplexVector)> = (0..200_000)
            .map(|_| {
                let x = sampler.sample(&mut rng);
                let t = quantize_1bit(&x, cfg.eta_tx);
                (x, t)
            })
            .collect();
        // objective per antenna is separable in the diagonal gain
        let objective =
            |i: usize, g: f64| -> f64 { samples.iter().map(|(x, t)| (t[i] - x[i] * g).norm_sqr()).sum::<f64>() };
        for i in 0..4 {
            let g = lin.g_tx[i];
            let base = objective(i, g);
            assert!(objective(i, g * 1.01) > base);
            assert!(objective(i, g * 0.99) > base);
        }
    }

    #[test]
    fn diag_c_t_is_eta() {
        let mut rng = RngStream::new(10, 0);
        for n in [2usize, 5, 12] {
            let p = Precoder::from_w(random_w(&mut rng, n, 2), DacMode::OneBit);
            let cfg = LinkConfig::new(n, n, 2, 1.0, DacMode::OneBit).unwrap();
            let lin = tx_linearize(&p, &cfg).unwrap();
            for d in lin.c_t.diagonal() {
                assert!((d.re - cfg.eta_tx).abs() < 1e-12 && d.im == 0.0);
            }
            let eig = lin.c_t.hermitian_eigenvalues().unwrap();
            let tr = lin.c_t.trace().re;
            assert!(eig.iter().all(|&e| e >= -1e-10 * tr));
            let eig_d = tx_distortion_cov(&lin, &p).hermitian_eigenvalues().unwrap();
            assert!(eig_d.iter().all(|&e| e >= -1e-9 * tr));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quantizer_ignores_positive_scale(
                seed in any::<u64>(),
                n in 1usize..64,
                scale in 1e-6f64..1e6,
            ) {
                let mut rng = RngStream::new(seed, 0);
                let b = ComplexVector((0..n).map(|_| rng.complex_normal()).collect());
                let scaled = ComplexVector(b.iter().map(|z| z * scale).collect());
                let eta = 1.0 / n as f64;
                prop_assert_eq!(quantize_1bit(&b, eta), quantize_1bit(&scaled, eta));
                prop_assert!((quantize_1bit(&b, eta).norm_sqr() - 1.0).abs() < 1e-12);
            }
        }
    }
}
