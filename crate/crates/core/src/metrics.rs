//! Approximate and Monte Carlo MSE, PSK detection and SER estimation.
//!
//! Monte Carlo loops split the draws into fixed-size chunks. Chunk `c` draws
//! its symbols and noise from substreams keyed by `(c, role)`, and partial
//! sums are combined in chunk order, so totals do not depend on the worker
//! count.

use std::f64::consts::TAU;
use std::io::Write;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use serde::Serialize;

use crate::link::LinearizedLink;
use crate::numerics::{ComplexMatrix, ComplexVector, RngStream, StreamRole, C64};
use crate::par::Execution;
use crate::rx::simulate_rx_signal_with;
use crate::tx::{quantize_1bit, quantize_1bit_in_place, AdcMode, DacMode};

/// Draws per Monte Carlo chunk.
pub const CHUNK_DRAWS: usize = 256;

/// Normal quantile for the 95% Wilson interval.
pub const WILSON_Z: f64 = 1.959_963_984_540_054;

/// Unit-magnitude symbol alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    points: Vec<C64>,
}

impl Constellation {
    /// `exp(j·2πk/order)`, `k = 0..order`.
    pub fn psk(order: usize) -> Self {
        assert!(order >= 2, "PSK needs at least two points");
        Self {
            points: (0..order)
                .map(|k| C64::from_polar(1.0, TAU * k as f64 / order as f64))
                .collect(),
        }
    }

    pub fn rotated(&self, phase: f64) -> Self {
        let rot = C64::from_polar(1.0, phase);
        Self {
            points: self.points.iter().map(|p| p * rot).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> C64 {
        self.points[index]
    }
}

/// Distribution of the data symbols.
#[derive(Clone, Debug, PartialEq)]
pub enum SymbolSource {
    /// i.i.d. `CN(0, 1)`.
    Gaussian,
    /// i.i.d. uniform over the points.
    Constellation(Constellation),
}

/// `ε̃(V) = 1 + tr(Vᴴ·C̃_r·V)/K − 2√ρ·tr Re(Vᴴ·G̃_RX·H·G_TX·W)/K`.
pub fn approximate_mse(v: &ComplexMatrix, link: &LinearizedLink) -> f64 {
    let k = link.config.k as f64;
    let cv = link.rx.c_r.matmul(v);
    let quad = real_inner(v, &cv);
    let cross = real_inner(v, &link.gain);
    1.0 + quad / k - 2.0 * link.config.rho.sqrt() * cross / k
}

/// `ε̃(V*) = 1 − √ρ·tr Re(V*ᴴ·G̃_RX·H·G_TX·W)/K`, using the stationarity of `V*`.
pub fn approximate_mse_at_optimum(link: &LinearizedLink) -> f64 {
    let k = link.config.k as f64;
    1.0 - link.config.rho.sqrt() * real_inner(&link.combiner.v, &link.gain) / k
}

/// `Re tr(Aᴴ·B)`.
fn real_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    let mut acc = 0.0;
    for j in 0..a.cols() {
        for i in 0..a.rows() {
            let (x, y) = (a[(i, j)], b[(i, j)]);
            acc += x.re * y.re + x.im * y.im;
        }
    }
    acc
}

/// `|ε_expanded − ε̃(V)|`, where `ε_expanded` rebuilds the MSE from
/// `E[s·sᴴ]`, `E[r·rᴴ] ≈ C̃_r` and `E[r·sᴴ]` assembled through the
/// linearized chain with every distortion/noise cross term set to zero.
pub fn mse_identity_check(link: &LinearizedLink, v: &ComplexMatrix) -> f64 {
    let cfg = &link.config;
    let k = cfg.k;
    let (n, m) = (cfg.n, cfg.m);
    let kf = k as f64;

    let ss = ComplexMatrix::identity(k);
    let d_tx_s = ComplexMatrix::zeros(n, k);
    let z_s = ComplexMatrix::zeros(m, k);
    let d_rx_s = ComplexMatrix::zeros(m, k);

    // E[r sᴴ] = G_RX(√ρ H (G_TX W E[s sᴴ] + E[d_TX sᴴ]) + E[z sᴴ]) + E[d_RX sᴴ]
    let tx_part = link.precoder.w.matmul(&ss).scale_rows(&link.tx.g_tx).add(&d_tx_s);
    let y_part = link.h.matmul(&tx_part).scale(cfg.rho.sqrt()).add(&z_s);
    let r_s = y_part.scale_rows(&link.rx.g_rx).add(&d_rx_s);

    let term_ss = ss.trace().re / kf;
    let term_rr = v.adjoint_mul(&link.rx.c_r).matmul(v).trace().re / kf;
    let term_rs = v.adjoint_mul(&r_s).trace().re / kf;
    let expanded = term_ss + term_rr - 2.0 * term_rs;
    (expanded - approximate_mse(v, link)).abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MseReport {
    pub eps_tilde: f64,
    pub eps_mc: f64,
    pub eps_mc_stderr: f64,
    pub draws: usize,
}

/// One end-to-end draw and every intermediate signal.
#[derive(Clone, Debug)]
pub struct LinkDraw {
    pub s: ComplexVector,
    /// Constellation indices, when the source is discrete.
    pub indices: Option<Vec<usize>>,
    pub x: ComplexVector,
    pub t: ComplexVector,
    pub y: ComplexVector,
    pub r: ComplexVector,
}

/// Simulates `s → x → t → y → r` once, symbols from `symbols`, noise from
/// `noise`.
pub fn simulate_draw(
    symbols: &mut RngStream,
    noise: &mut RngStream,
    link: &LinearizedLink,
    source: &SymbolSource,
) -> LinkDraw {
    let k = link.config.k;
    let (s, indices) = draw_symbols(symbols, source, k);
    let x = link.precoder.w.mul_vector(&s);
    let t = match link.config.dac_mode {
        DacMode::OneBit => quantize_1bit(&x, link.config.eta_tx),
        DacMode::FullResolution => x.clone(),
    };
    let sig = simulate_rx_signal_with(noise, &link.h, &t, link.config.rho, link.config.adc_mode);
    LinkDraw {
        s,
        indices,
        x,
        t,
        y: sig.y,
        r: sig.r,
    }
}

fn draw_symbols(rng: &mut RngStream, source: &SymbolSource, k: usize) -> (ComplexVector, Option<Vec<usize>>) {
    match source {
        SymbolSource::Gaussian => (ComplexVector((0..k).map(|_| rng.complex_normal()).collect()), None),
        SymbolSource::Constellation(c) => {
            let idx: Vec<usize> = (0..k).map(|_| rng.below(c.order())).collect();
            let s = idx.iter().map(|&i| c.point(i)).collect();
            (ComplexVector(s), Some(idx))
        }
    }
}

/// A batch of `B` draws as `K × B` column blocks.
struct Block {
    s: Mat<C64>,
    s_hat: Mat<C64>,
    /// Column-major `K × B` constellation indices.
    indices: Vec<usize>,
}

fn simulate_block(
    link: &LinearizedLink,
    v: &ComplexMatrix,
    source: &SymbolSource,
    symbols: &mut RngStream,
    noise: &mut RngStream,
    batch: usize,
) -> Block {
    let cfg = &link.config;
    let (n, m, k) = (cfg.n, cfg.m, cfg.k);
    let one = C64::new(1.0, 0.0);

    let mut indices = Vec::new();
    let s = match source {
        SymbolSource::Gaussian => Mat::from_fn(k, batch, |_, _| C64::new(0.0, 0.0)),
        SymbolSource::Constellation(_) => Mat::zeros(k, batch),
    };
    let mut s = s;
    for j in 0..batch {
        for i in 0..k {
            s[(i, j)] = match source {
                SymbolSource::Gaussian => symbols.complex_normal(),
                SymbolSource::Constellation(c) => {
                    let idx = symbols.below(c.order());
                    indices.push(idx);
                    c.point(idx)
                }
            };
        }
    }

    let mut x = Mat::<C64>::zeros(n, batch);
    matmul(
        x.as_mut(),
        Accum::Replace,
        link.precoder.w.as_faer(),
        s.as_ref(),
        one,
        Par::Seq,
    );
    if cfg.dac_mode == DacMode::OneBit {
        for j in 0..batch {
            let col = x.col_mut(j).try_as_col_major_mut().expect("contiguous column");
            quantize_1bit_in_place(col.as_slice_mut(), cfg.eta_tx);
        }
    }

    let mut y = Mat::<C64>::zeros(m, batch);
    matmul(
        y.as_mut(),
        Accum::Replace,
        link.h.as_faer(),
        x.as_ref(),
        C64::new(cfg.rho.sqrt(), 0.0),
        Par::Seq,
    );
    for j in 0..batch {
        for z in y.col_mut(j).iter_mut() {
            *z += noise.complex_normal();
        }
    }
    if cfg.adc_mode == AdcMode::OneBit {
        for j in 0..batch {
            let col = y.col_mut(j).try_as_col_major_mut().expect("contiguous column");
            quantize_1bit_in_place(col.as_slice_mut(), cfg.eta_rx);
        }
    }

    let mut s_hat = Mat::<C64>::zeros(k, batch);
    matmul(
        s_hat.as_mut(),
        Accum::Replace,
        v.as_faer().adjoint(),
        y.as_ref(),
        one,
        Par::Seq,
    );
    Block { s, s_hat, indices }
}

fn chunk_streams(rng: &RngStream, chunk: usize) -> (RngStream, RngStream) {
    (
        rng.substream(&[chunk as u64, StreamRole::Symbols as u64]),
        rng.substream(&[chunk as u64, StreamRole::Noise as u64]),
    )
}

fn chunk_sizes(draws: usize) -> Vec<usize> {
    let full = draws / CHUNK_DRAWS;
    let mut sizes = vec![CHUNK_DRAWS; full];
    if !draws.is_multiple_of(CHUNK_DRAWS) {
        sizes.push(draws % CHUNK_DRAWS);
    }
    sizes
}

/// Averages `‖s − Vᴴr‖²/K` over `draws` simulated draws.
pub fn monte_carlo_mse(
    rng: &RngStream,
    link: &LinearizedLink,
    v: &ComplexMatrix,
    source: &SymbolSource,
    draws: usize,
) -> MseReport {
    monte_carlo_mse_with(Execution::default(), rng, link, v, source, draws)
}

pub fn monte_carlo_mse_with(
    exec: Execution,
    rng: &RngStream,
    link: &LinearizedLink,
    v: &ComplexMatrix,
    source: &SymbolSource,
    draws: usize,
) -> MseReport {
    assert!(draws >= 1, "monte_carlo_mse needs at least one draw");
    let k = link.config.k as f64;
    let sizes = chunk_sizes(draws);
    let partial = exec.map_indexed(sizes.len(), |c| {
        let (mut sym, mut noise) = chunk_streams(rng, c);
        let block = simulate_block(link, v, source, &mut sym, &mut noise, sizes[c]);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for j in 0..sizes[c] {
            let e: f64 = (0..link.config.k)
                .map(|i| (block.s[(i, j)] - block.s_hat[(i, j)]).norm_sqr())
                .sum::<f64>()
                / k;
            sum += e;
            sum_sq += e * e;
        }
        (sum, sum_sq)
    });
    let (sum, sum_sq) = partial.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let d = draws as f64;
    let mean = sum / d;
    let var = if draws > 1 {
        ((sum_sq - d * mean * mean) / (d - 1.0)).max(0.0)
    } else {
        0.0
    };
    MseReport {
        eps_tilde: approximate_mse(v, link),
        eps_mc: mean,
        eps_mc_stderr: (var / d).sqrt(),
        draws,
    }
}

/// Relative distance slack within which two points count as tied.
pub const DETECTION_TIE_TOL: f64 = 1e-12;

/// Nearest constellation point per entry; ties go to the lower index.
pub fn detect_psk(s_hat: &[C64], constellation: &Constellation) -> Vec<usize> {
    s_hat.iter().map(|z| nearest_point(*z, constellation)).collect()
}

fn nearest_point(z: C64, constellation: &Constellation) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in constellation.points().iter().enumerate() {
        let d = (z - p).norm_sqr();
        if d < best_d * (1.0 - DETECTION_TIE_TOL) {
            best_d = d;
            best = i;
        }
    }
    best
}

/// 95% Wilson score interval for `errors` out of `trials`.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if errors >= trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub stream: usize,
    pub s: C64Pair,
    pub s_hat: C64Pair,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct C64Pair {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for C64Pair {
    fn from(z: C64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

#[derive(Clone, Debug)]
pub struct SerOptions {
    /// Per-stream least-squares gain fitted on pilot draws before detecting.
    pub gain_calibration: bool,
    pub pilot_draws: usize,
    /// Number of `(s, ŝ)` pairs retained for scatter output.
    pub scatter_limit: usize,
}

impl Default for SerOptions {
    fn default() -> Self {
        Self {
            gain_calibration: false,
            pilot_draws: 1024,
            scatter_limit: 4096,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SerReport {
    pub ser: f64,
    pub symbol_count: u64,
    pub errors: u64,
    pub per_stream: Vec<f64>,
    /// 95% Wilson interval on `ser`.
    pub interval: (f64, f64),
    pub gain_calibrated: bool,
    /// Complex gains divided out before detection (all ones when off).
    pub gains: Vec<C64>,
    pub scatter: Vec<ScatterPoint>,
}

/// Symbol error rate over `symbol_draws` vector draws (`K` symbols each).
pub fn estimate_ser(
    rng: &RngStream,
    link: &LinearizedLink,
    v: &ComplexMatrix,
    constellation: &Constellation,
    symbol_draws: usize,
) -> SerReport {
    estimate_ser_with(
        Execution::default(),
        rng,
        link,
        v,
        constellation,
        symbol_draws,
        &SerOptions::default(),
    )
}

pub fn estimate_ser_with(
    exec: Execution,
    rng: &RngStream,
    link: &LinearizedLink,
    v: &ComplexMatrix,
    constellation: &Constellation,
    symbol_draws: usize,
    options: &SerOptions,
) -> SerReport {
    assert!(symbol_draws >= 1, "estimate_ser needs at least one draw");
    let k = link.config.k;
    let source = SymbolSource::Constellation(constellation.clone());

    let gains = if options.gain_calibration {
        calibrate_gains(rng, link, v, &source, options.pilot_draws.max(1))
    } else {
        vec![C64::new(1.0, 0.0); k]
    };
    let inv_gains: Vec<C64> = gains.iter().map(|g| 1.0 / g).collect();

    let sizes = chunk_sizes(symbol_draws);
    let scatter_chunks = options.scatter_limit.div_ceil(CHUNK_DRAWS * k.max(1));
    let partial = exec.map_indexed(sizes.len(), |c| {
        let (mut sym, mut noise) = chunk_streams(rng, c);
        let block = simulate_block(link, v, &source, &mut sym, &mut noise, sizes[c]);
        let mut errors = vec![0u64; k];
        let mut scatter = Vec::new();
        for j in 0..sizes[c] {
            for i in 0..k {
                let est = block.s_hat[(i, j)] * inv_gains[i];
                if nearest_point(est, constellation) != block.indices[j * k + i] {
                    errors[i] += 1;
                }
                if c < scatter_chunks {
                    scatter.push(ScatterPoint {
                        stream: i,
                        s: block.s[(i, j)].into(),
                        s_hat: block.s_hat[(i, j)].into(),
                    });
                }
            }
        }
        (errors, scatter)
    });

    let mut per_stream_errors = vec![0u64; k];
    let mut scatter = Vec::new();
    for (errors, pts) in partial {
        for (acc, e) in per_stream_errors.iter_mut().zip(errors) {
            *acc += e;
        }
        scatter.extend(pts);
    }
    scatter.truncate(options.scatter_limit);
    let errors: u64 = per_stream_errors.iter().sum();
    let symbol_count = (symbol_draws * k) as u64;
    SerReport {
        ser: errors as f64 / symbol_count as f64,
        symbol_count,
        errors,
        per_stream: per_stream_errors
            .iter()
            .map(|&e| e as f64 / symbol_draws as f64)
            .collect(),
        interval: wilson_interval(errors, symbol_count),
        gain_calibrated: options.gain_calibration,
        gains,
        scatter,
    }
}

/// Least-squares `g_k` in `ŝ_k ≈ g_k·s_k`, from pilot draws on their own
/// substream.
fn calibrate_gains(
    rng: &RngStream,
    link: &LinearizedLink,
    v: &ComplexMatrix,
    source: &SymbolSource,
    pilot_draws: usize,
) -> Vec<C64> {
    let k = link.config.k;
    let pilot = rng.substream(&[u64::MAX]);
    let mut num = vec![C64::new(0.0, 0.0); k];
    let mut den = vec![0.0; k];
    for (c, size) in chunk_sizes(pilot_draws).into_iter().enumerate() {
        let (mut sym, mut noise) = chunk_streams(&pilot, c);
        let block = simulate_block(link, v, source, &mut sym, &mut noise, size);
        for j in 0..size {
            for i in 0..k {
                let s = block.s[(i, j)];
                num[i] += s.conj() * block.s_hat[(i, j)];
                den[i] += s.norm_sqr();
            }
        }
    }
    num.iter()
        .zip(&den)
        .map(|(n, d)| {
            if *d > 0.0 && n.norm() > 0.0 {
                n / d
            } else {
                C64::new(1.0, 0.0)
            }
        })
        .collect()
}

/// Writes scatter pairs as CSV: `stream,re_s,im_s,re_shat,im_shat,mode`.
pub fn write_scatter_csv<W: Write>(out: W, points: &[ScatterPoint], mode: &str) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stream", "re_s", "im_s", "re_shat", "im_shat", "mode"])?;
    for p in points {
        w.write_record([
            p.stream.to_string(),
            format!("{:.8e}", p.s.re),
            format!("{:.8e}", p.s.im),
            format!("{:.8e}", p.s_hat.re),
            format!("{:.8e}", p.s_hat.im),
            mode.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
