//! Declarative parameter sweeps, figure presets and CSV output.
//!
//! A sweep runs one task per `(N, M)` pair and channel realization. Each task
//! draws its channel from a stream keyed by `(seed, N, M, realization)`, so
//! every `K`, `ρ` and DAC mode at that antenna pair sees the same channels.
//! Symbol and noise streams are keyed by the full grid point. Task outputs are
//! merged by index, which makes the CSV body independent of the worker count.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    generate_iid_channel, generate_physical_channel_for, perfect_square_root, ChannelModel, ScattererCluster,
};
use crate::error::LinkError;
use crate::link::LinearizedLink;
use crate::metrics::{
    approximate_mse, estimate_ser_with, monte_carlo_mse_with, mse_identity_check, simulate_draw, wilson_interval,
    write_scatter_csv, Constellation, ScatterPoint, SerOptions, SymbolSource,
};
use crate::numerics::{derive_stream_id, ComplexMatrix, RngStream, StreamRole};
use crate::par::Execution;
use crate::tx::{DacMode, LinkConfig, PrecoderBasis};

pub const DEFAULT_REALIZATIONS: usize = 50;
pub const DEFAULT_SYMBOL_DRAWS: usize = 100_000;
/// PSK order used by SER sweeps.
pub const PSK_ORDER: usize = 16;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("cannot parse experiment spec {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("row {row} violates the link invariants: {source}")]
    InvalidRow {
        row: usize,
        #[source]
        source: LinkError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MseVsNm,
    MseVsNFixedM,
    MseVsK,
    SerScatter,
    ValidationSuite,
}

/// Lists of values; grid points are their Cartesian product. An empty `m`
/// list means `M = N` at every point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ParameterGrid {
    pub n: Vec<usize>,
    #[serde(default)]
    pub m: Vec<usize>,
    pub k: Vec<usize>,
    pub rho_db: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment_kind: ExperimentKind,
    pub grid: ParameterGrid,
    #[serde(default = "default_channel_model")]
    pub channel_model: ChannelModel,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    /// Monte Carlo draws of the symbol vector per realization; 0 skips the
    /// Monte Carlo MSE in MSE sweeps.
    #[serde(default = "default_symbol_draws")]
    pub symbol_draws: usize,
    #[serde(default = "default_dac_modes")]
    pub dac_modes: Vec<DacMode>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

fn default_channel_model() -> ChannelModel {
    ChannelModel::Physical
}

fn default_realizations() -> usize {
    DEFAULT_REALIZATIONS
}

fn default_symbol_draws() -> usize {
    DEFAULT_SYMBOL_DRAWS
}

fn default_dac_modes() -> Vec<DacMode> {
    vec![DacMode::OneBit]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub rho_db: f64,
}

impl std::fmt::Display for GridPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "N={} M={} K={} rho={}dB", self.n, self.m, self.k, self.rho_db)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfeasiblePoint {
    pub point: GridPoint,
    pub reason: String,
}

impl ExperimentSpec {
    pub fn from_json_str(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|source| ExperimentError::Parse {
            path: "<string>".into(),
            source,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ExperimentError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Grid points in sweep order: `N`, then `M`, then `K`, then `ρ`.
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &n in &self.grid.n {
            let ms: Vec<usize> = if self.grid.m.is_empty() {
                vec![n]
            } else {
                self.grid.m.clone()
            };
            for m in ms {
                for &k in &self.grid.k {
                    for &rho_db in &self.grid.rho_db {
                        out.push(GridPoint { n, m, k, rho_db });
                    }
                }
            }
        }
        out
    }

    /// Structural problems are errors; individually infeasible grid points are
    /// returned so the caller can decide whether to run the rest.
    pub fn validate(&self) -> Result<Vec<InfeasiblePoint>, ExperimentError> {
        let bad = |msg: &str| Err(ExperimentError::Spec(msg.to_string()));
        if self.grid.n.is_empty() || self.grid.k.is_empty() || self.grid.rho_db.is_empty() {
            return bad("grid lists n, k and rho-db must be non-empty");
        }
        if self.experiment_kind == ExperimentKind::MseVsNFixedM && self.grid.m.is_empty() {
            return bad("mse-vs-n-fixed-m needs a non-empty m list");
        }
        if self.grid.rho_db.iter().any(|r| !r.is_finite()) {
            return bad("rho-db values must be finite");
        }
        if self.realizations == 0 {
            return bad("realizations must be at least 1");
        }
        if self.experiment_kind == ExperimentKind::SerScatter && self.symbol_draws == 0 {
            return bad("ser-scatter needs symbol-draws >= 1");
        }
        if self.dac_modes.is_empty() {
            return bad("dac-modes must name at least one mode");
        }
        for (i, d) in self.dac_modes.iter().enumerate() {
            if self.dac_modes[..i].contains(d) {
                return bad("dac-modes contains duplicates");
            }
        }

        let mut infeasible = Vec::new();
        for point in self.run_points().into_iter().map(|(_, p)| p) {
            if let Some(reason) = self.infeasibility(&point) {
                infeasible.push(InfeasiblePoint { point, reason });
            }
        }
        Ok(infeasible)
    }

    fn infeasibility(&self, p: &GridPoint) -> Option<String> {
        if p.n == 0 || p.m == 0 || p.k == 0 {
            return Some("N, M and K must be positive".into());
        }
        if p.k > p.n.min(p.m) {
            return Some(format!("K = {} exceeds min(N, M) = {}", p.k, p.n.min(p.m)));
        }
        if self.channel_model == ChannelModel::Physical {
            for (name, v) in [("N", p.n), ("M", p.m)] {
                if perfect_square_root(v).is_none() {
                    return Some(format!("{name} = {v} is not a perfect square (square arrays)"));
                }
            }
        }
        None
    }

    /// Points actually simulated, with the pair id of the symmetry probe.
    fn run_points(&self) -> Vec<(Option<usize>, GridPoint)> {
        let points = self.grid_points();
        if self.experiment_kind != ExperimentKind::MseVsNFixedM {
            return points.into_iter().map(|p| (None, p)).collect();
        }
        let mut out = Vec::with_capacity(2 * points.len());
        for (pair, p) in points.into_iter().enumerate() {
            out.push((Some(pair), p));
            out.push((Some(pair), GridPoint { n: p.m, m: p.n, ..p }));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SerSummary {
    pub ser: f64,
    pub lo: f64,
    pub hi: f64,
    pub errors: u64,
    pub symbols: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    /// Pair id for symmetry-probe rows.
    pub pair: Option<usize>,
    pub point: GridPoint,
    pub dac_mode: DacMode,
    pub channel_model: ChannelModel,
    /// Realizations that completed.
    pub realizations: usize,
    pub symbol_draws: usize,
    /// Mean of the per-realization `ε̃`.
    pub eps_tilde: f64,
    /// Standard error of `eps_tilde` across realizations.
    pub eps_tilde_stderr: f64,
    pub eps_mc: Option<f64>,
    /// `√(Σ se_r²)/R`: Monte Carlo error only, channels held fixed.
    pub eps_mc_stderr: Option<f64>,
    pub ser: Option<SerSummary>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub row: usize,
    pub name: &'static str,
    /// Worst value over realizations.
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScatterSet {
    pub point: GridPoint,
    pub dac_mode: DacMode,
    pub points: Vec<ScatterPoint>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub errors: Vec<String>,
    pub checks: Vec<CheckRecord>,
    pub scatter: Vec<ScatterSet>,
    pub metadata: Vec<(String, String)>,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<SweepResult, ExperimentError> {
    run_experiment_with(Execution::default(), spec)
}

pub fn run_experiment_with(exec: Execution, spec: &ExperimentSpec) -> Result<SweepResult, ExperimentError> {
    let infeasible = spec.validate()?;
    let mut result = run_points(exec, spec, spec.run_points(), &infeasible);
    result.metadata = metadata(spec);
    Ok(result)
}

/// Runs `(N, M)` and `(M, N)` for every grid pair, whatever the spec kind.
pub fn run_nm_symmetry_probe(spec: &ExperimentSpec) -> Result<SweepResult, ExperimentError> {
    let mut probe = ExperimentSpec {
        experiment_kind: ExperimentKind::MseVsNFixedM,
        ..spec.clone()
    };
    if probe.grid.m.is_empty() {
        probe.grid.m = probe.grid.n.clone();
    }
    run_experiment(&probe)
}

struct Evaluation {
    eps_tilde: f64,
    mc: Option<(f64, f64)>,
    ser: Option<(u64, u64)>,
    scatter: Vec<ScatterPoint>,
    checks: Vec<(&'static str, f64, f64)>,
    seconds: f64,
}

/// One realization's outcome for every `(point, dac mode)` of a channel group.
type TaskOutput = Vec<Result<Evaluation, String>>;

fn run_points(
    exec: Execution,
    spec: &ExperimentSpec,
    points: Vec<(Option<usize>, GridPoint)>,
    infeasible: &[InfeasiblePoint],
) -> SweepResult {
    let mut result = SweepResult::default();
    for bad in infeasible {
        result.errors.push(format!("{}: {}", bad.point, bad.reason));
    }
    let runnable: Vec<(Option<usize>, GridPoint)> = points
        .into_iter()
        .filter(|(_, p)| !infeasible.iter().any(|b| b.point == *p))
        .collect();

    // channel groups in order of first appearance
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for (_, p) in &runnable {
        if !groups.contains(&(p.n, p.m)) {
            groups.push((p.n, p.m));
        }
    }
    let members: Vec<Vec<usize>> = groups
        .iter()
        .map(|&(n, m)| {
            runnable
                .iter()
                .enumerate()
                .filter(|(_, (_, p))| (p.n, p.m) == (n, m))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    let r_count = spec.realizations;
    let tasks = groups.len() * r_count;
    let outputs: Vec<TaskOutput> = exec.map_indexed(tasks, |t| {
        let (g, r) = (t / r_count, t % r_count);
        let pts: Vec<GridPoint> = members[g].iter().map(|&i| runnable[i].1).collect();
        run_task(exec, spec, groups[g], r, &pts)
    });

    let modes = spec.dac_modes.len();
    for (g, member) in members.iter().enumerate() {
        for (slot, &pi) in member.iter().enumerate() {
            let (pair, point) = runnable[pi];
            for (di, &dac) in spec.dac_modes.iter().enumerate() {
                let evals: Vec<&Evaluation> = (0..r_count)
                    .filter_map(|r| match &outputs[g * r_count + r][slot * modes + di] {
                        Ok(e) => Some(e),
                        Err(msg) => {
                            result
                                .errors
                                .push(format!("{point} dac={} realization {r}: {msg}", dac.label()));
                            None
                        }
                    })
                    .collect();
                if evals.is_empty() {
                    continue;
                }
                let row = result.rows.len();
                if let Some(first) = evals.first().filter(|e| !e.scatter.is_empty()) {
                    result.scatter.push(ScatterSet {
                        point,
                        dac_mode: dac,
                        points: first.scatter.clone(),
                    });
                }
                merge_checks(&mut result.checks, row, &evals);
                result.rows.push(aggregate(spec, pair, point, dac, &evals));
            }
        }
    }
    result
}

fn merge_checks(out: &mut Vec<CheckRecord>, row: usize, evals: &[&Evaluation]) {
    let Some(first) = evals.first() else { return };
    for (ci, &(name, _, limit)) in first.checks.iter().enumerate() {
        let value = evals.iter().map(|e| e.checks[ci].1).fold(f64::NEG_INFINITY, f64::max);
        out.push(CheckRecord {
            row,
            name,
            value,
            limit,
            pass: value <= limit,
        });
    }
}

fn aggregate(
    spec: &ExperimentSpec,
    pair: Option<usize>,
    point: GridPoint,
    dac_mode: DacMode,
    evals: &[&Evaluation],
) -> SweepRow {
    let r = evals.len() as f64;
    let eps_tilde = evals.iter().map(|e| e.eps_tilde).sum::<f64>() / r;
    let eps_tilde_stderr = if evals.len() > 1 {
        let var = evals.iter().map(|e| (e.eps_tilde - eps_tilde).powi(2)).sum::<f64>() / (r - 1.0);
        (var / r).sqrt()
    } else {
        0.0
    };
    let (eps_mc, eps_mc_stderr) = if evals.iter().all(|e| e.mc.is_some()) {
        let mean = evals.iter().map(|e| e.mc.unwrap().0).sum::<f64>() / r;
        let se = evals.iter().map(|e| e.mc.unwrap().1.powi(2)).sum::<f64>().sqrt() / r;
        (Some(mean), Some(se))
    } else {
        (None, None)
    };
    let ser = if evals.iter().all(|e| e.ser.is_some()) {
        let errors: u64 = evals.iter().map(|e| e.ser.unwrap().0).sum();
        let symbols: u64 = evals.iter().map(|e| e.ser.unwrap().1).sum();
        let (lo, hi) = wilson_interval(errors, symbols);
        Some(SerSummary {
            ser: errors as f64 / symbols as f64,
            lo,
            hi,
            errors,
            symbols,
        })
    } else {
        None
    };
    SweepRow {
        pair,
        point,
        dac_mode,
        channel_model: spec.channel_model,
        realizations: evals.len(),
        symbol_draws: spec.symbol_draws,
        eps_tilde,
        eps_tilde_stderr,
        eps_mc,
        eps_mc_stderr,
        ser,
        wall_time_s: evals.iter().map(|e| e.seconds).sum(),
    }
}

/// Stream of the channel for antenna pair `(n, m)`, realization `r`.
pub fn channel_stream(seed: u64, n: usize, m: usize, r: usize) -> RngStream {
    RngStream::new(
        seed,
        derive_stream_id(seed, &[n as u64, m as u64, r as u64, StreamRole::Channel as u64]),
    )
}

/// Base stream for the symbol and noise draws at one grid point.
pub fn draw_stream(seed: u64, p: &GridPoint, r: usize) -> RngStream {
    RngStream::new(
        seed,
        derive_stream_id(
            seed,
            &[p.n as u64, p.m as u64, p.k as u64, p.rho_db.to_bits(), r as u64],
        ),
    )
}

fn run_task(
    exec: Execution,
    spec: &ExperimentSpec,
    (n, m): (usize, usize),
    r: usize,
    points: &[GridPoint],
) -> TaskOutput {
    let modes = spec.dac_modes.len();
    let fail_all = |msg: String| (0..points.len() * modes).map(|_| Err(msg.clone())).collect::<Vec<_>>();

    let start = Instant::now();
    let mut rng = channel_stream(spec.seed, n, m, r);
    let h = match spec.channel_model {
        ChannelModel::Iid => generate_iid_channel(&mut rng, m, n).h,
        ChannelModel::Physical => {
            match generate_physical_channel_for(&mut rng, n, m, &ScattererCluster::broadside_default()) {
                Ok(c) => c.h,
                Err(e) => return fail_all(e.to_string()),
            }
        }
    };
    let basis = match PrecoderBasis::from_channel(&h) {
        Ok(b) => b,
        Err(e) => return fail_all(e.to_string()),
    };
    let setup_share = start.elapsed().as_secs_f64() / (points.len() * modes) as f64;

    let mut out = Vec::with_capacity(points.len() * modes);
    for p in points {
        for &dac in &spec.dac_modes {
            let t0 = Instant::now();
            let eval = evaluate(exec, spec, p, dac, r, &h, &basis).map(|mut e| {
                e.seconds = setup_share + t0.elapsed().as_secs_f64();
                e
            });
            out.push(eval.map_err(|e| e.to_string()));
        }
    }
    out
}

fn evaluate(
    exec: Execution,
    spec: &ExperimentSpec,
    p: &GridPoint,
    dac: DacMode,
    r: usize,
    h: &ComplexMatrix,
    basis: &PrecoderBasis,
) -> Result<Evaluation, LinkError> {
    let config = LinkConfig::from_db(p.n, p.m, p.k, p.rho_db, dac)?;
    let link = LinearizedLink::from_basis(h.clone(), basis, config)?;
    let v = link.optimal_v();
    let eps_tilde = approximate_mse(v, &link);
    let rng = draw_stream(spec.seed, p, r);
    let mut eval = Evaluation {
        eps_tilde,
        mc: None,
        ser: None,
        scatter: Vec::new(),
        checks: Vec::new(),
        seconds: 0.0,
    };
    match spec.experiment_kind {
        ExperimentKind::SerScatter => {
            let opts = SerOptions {
                scatter_limit: if r == 0 { SerOptions::default().scatter_limit } else { 0 },
                ..SerOptions::default()
            };
            let rep = estimate_ser_with(
                exec,
                &rng,
                &link,
                v,
                &Constellation::psk(PSK_ORDER),
                spec.symbol_draws,
                &opts,
            );
            eval.ser = Some((rep.errors, rep.symbol_count));
            eval.scatter = rep.scatter;
        }
        _ if spec.symbol_draws > 0 => {
            let rep = monte_carlo_mse_with(exec, &rng, &link, v, &SymbolSource::Gaussian, spec.symbol_draws);
            eval.mc = Some((rep.eps_mc, rep.eps_mc_stderr));
            if spec.experiment_kind == ExperimentKind::ValidationSuite {
                eval.checks = validation_checks(&link, &rng, eps_tilde, rep.eps_mc, rep.eps_mc_stderr);
            }
        }
        _ => {
            if spec.experiment_kind == ExperimentKind::ValidationSuite {
                eval.checks = validation_checks(&link, &rng, eps_tilde, f64::NAN, f64::NAN);
            }
        }
    }
    Ok(eval)
}

/// `(name, value, limit)`; a check passes when `value <= limit`.
fn validation_checks(
    link: &LinearizedLink,
    rng: &RngStream,
    eps_tilde: f64,
    eps_mc: f64,
    eps_mc_stderr: f64,
) -> Vec<(&'static str, f64, f64)> {
    let cfg = &link.config;
    let v = link.optimal_v();
    let mut checks = Vec::new();

    let (mut sym, mut noise) = (rng.substream(&[1, 0]), rng.substream(&[1, 1]));
    let power_dev = (0..32)
        .map(|_| {
            let d = simulate_draw(&mut sym, &mut noise, link, &SymbolSource::Gaussian);
            (d.t.norm_sqr() - 1.0).abs()
        })
        .fold(0.0, f64::max);
    if cfg.dac_mode == DacMode::OneBit {
        checks.push(("transmit-power-deviation", power_dev, 1e-12));
    }
    let diag_dev = |c: &ComplexMatrix, eta: f64| {
        c.diagonal()
            .iter()
            .map(|z| (z.re - eta).abs().max(z.im.abs()))
            .fold(0.0, f64::max)
            / eta
    };
    if cfg.dac_mode == DacMode::OneBit {
        checks.push(("diag-c-t-relative-deviation", diag_dev(&link.tx.c_t, cfg.eta_tx), 1e-12));
    }
    checks.push(("diag-c-r-relative-deviation", diag_dev(&link.rx.c_r, cfg.eta_rx), 1e-12));
    checks.push(("c-r-hermitian-deviation", link.rx.c_r.hermitian_deviation(), 1e-10));

    let target = link.gain.scale(cfg.rho.sqrt());
    let residual = link.rx.c_r.matmul(v).sub(&target).frobenius_norm() / target.frobenius_norm().max(f64::MIN_POSITIVE);
    checks.push(("combiner-stationarity-residual", residual, 1e-8));
    checks.push(("identity-check-deviation", mse_identity_check(link, v), 1e-12));
    if eps_mc.is_finite() {
        checks.push((
            "mc-excess-over-eps-tilde-in-stderr",
            (eps_mc - eps_tilde) / eps_mc_stderr.max(f64::MIN_POSITIVE),
            5.0,
        ));
    }
    checks
}

fn metadata(spec: &ExperimentSpec) -> Vec<(String, String)> {
    let mut md = vec![
        (
            "generator".to_string(),
            format!("onebit-mimo {}", env!("CARGO_PKG_VERSION")),
        ),
        ("seed".to_string(), spec.seed.to_string()),
        (
            "spec".to_string(),
            serde_json::to_string(spec).unwrap_or_else(|_| "<unserializable>".into()),
        ),
    ];
    match spec.channel_model {
        ChannelModel::Physical => {
            let c = ScattererCluster::broadside_default();
            md.push((
                "channel".to_string(),
                format!(
                    "physical; square UPAs, half-wavelength spacing, broadside facing; {} paths, gains CN(0,1)/sqrt(P); \
                     {} angles uniform, full azimuth spread {:.6} rad, full elevation spread {:.6} rad, independent per side",
                    c.path_count,
                    c.convention.label(),
                    c.azimuth_spread,
                    c.elevation_spread
                ),
            ));
        }
        ChannelModel::Iid => md.push(("channel".to_string(), "iid CN(0,1)".to_string())),
    }
    md.push((
        "averaging".to_string(),
        "per-realization eps-tilde and eps-mc averaged over realizations; SER pooled over realizations".to_string(),
    ));
    md
}

pub const CSV_HEADER: [&str; 17] = [
    "pair",
    "n",
    "m",
    "k",
    "rho_db",
    "dac_mode",
    "channel_model",
    "realizations",
    "symbol_draws",
    "eps_tilde",
    "eps_tilde_stderr",
    "eps_mc",
    "eps_mc_stderr",
    "ser",
    "ser_lo",
    "ser_hi",
    "ser_symbols",
];

/// Nine significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn model_label(m: ChannelModel) -> &'static str {
    match m {
        ChannelModel::Physical => "physical",
        ChannelModel::Iid => "iid",
    }
}

/// Writes `#` metadata lines (including wall-times, errors and checks), then
/// the header and one record per row.
pub fn write_csv<W: Write>(result: &SweepResult, out: W) -> Result<(), ExperimentError> {
    let to_err = |source: io::Error| ExperimentError::Io {
        path: PathBuf::from("<writer>"),
        source,
    };
    for (i, row) in result.rows.iter().enumerate() {
        LinkConfig::from_db(row.point.n, row.point.m, row.point.k, row.point.rho_db, row.dac_mode)
            .map_err(|source| ExperimentError::InvalidRow { row: i, source })?;
    }
    let mut out = out;
    for (k, v) in &result.metadata {
        writeln!(out, "# {k}: {v}").map_err(to_err)?;
    }
    for (i, row) in result.rows.iter().enumerate() {
        writeln!(out, "# wall-time: row {i} {:.3} s", row.wall_time_s).map_err(to_err)?;
    }
    for c in &result.checks {
        writeln!(
            out,
            "# check: row {} {} value {} limit {} {}",
            c.row,
            c.name,
            format_float(c.value),
            format_float(c.limit),
            if c.pass { "PASS" } else { "FAIL" }
        )
        .map_err(to_err)?;
    }
    for e in &result.errors {
        writeln!(out, "# error: {}", e.replace('\n', " ")).map_err(to_err)?;
    }

    let csv_err = |source: csv::Error| ExperimentError::Csv {
        path: PathBuf::from("<writer>"),
        source,
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in &result.rows {
        let p = &row.point;
        w.write_record([
            row.pair.map(|x| x.to_string()).unwrap_or_default(),
            p.n.to_string(),
            p.m.to_string(),
            p.k.to_string(),
            format_float(p.rho_db),
            row.dac_mode.label().to_string(),
            model_label(row.channel_model).to_string(),
            row.realizations.to_string(),
            row.symbol_draws.to_string(),
            format_float(row.eps_tilde),
            format_float(row.eps_tilde_stderr),
            opt_float(row.eps_mc),
            opt_float(row.eps_mc_stderr),
            opt_float(row.ser.map(|s| s.ser)),
            opt_float(row.ser.map(|s| s.lo)),
            opt_float(row.ser.map(|s| s.hi)),
            row.ser.map(|s| s.symbols.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(to_err)?;
    Ok(())
}

/// Writes the sweep CSV to `path`, plus one scatter CSV per scatter set next
/// to it.
pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let io_err = |p: &Path| {
        let p = p.to_owned();
        move |source: io::Error| ExperimentError::Io { path: p, source }
    };
    let file = File::create(path).map_err(io_err(path))?;
    write_csv(result, BufWriter::new(file)).map_err(|e| with_path(e, path))?;
    let mut written = vec![path.to_owned()];
    for set in &result.scatter {
        let sp = scatter_path(path, set);
        let file = File::create(&sp).map_err(io_err(&sp))?;
        write_scatter_csv(BufWriter::new(file), &set.points, set.dac_mode.label()).map_err(|source| {
            ExperimentError::Csv {
                path: sp.clone(),
                source,
            }
        })?;
        written.push(sp);
    }
    Ok(written)
}

fn with_path(e: ExperimentError, path: &Path) -> ExperimentError {
    match e {
        ExperimentError::Io { source, .. } => ExperimentError::Io {
            path: path.to_owned(),
            source,
        },
        ExperimentError::Csv { source, .. } => ExperimentError::Csv {
            path: path.to_owned(),
            source,
        },
        other => other,
    }
}

/// `<stem>-scatter-n<N>-m<M>-k<K>-rho<ρ>-<mode>.csv` beside `path`.
pub fn scatter_path(path: &Path, set: &ScatterSet) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let p = &set.point;
    path.with_file_name(format!(
        "{stem}-scatter-n{}-m{}-k{}-rho{}-{}.csv",
        p.n,
        p.m,
        p.k,
        p.rho_db,
        set.dac_mode.label()
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureScale {
    /// Desk-scale realization and draw counts.
    Reduced,
    /// The published counts; runs for many hours.
    Paper,
}

impl std::str::FromStr for FigureScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reduced" => Ok(Self::Reduced),
            "paper" => Ok(Self::Paper),
            other => Err(format!("unknown scale {other:?}, expected reduced or paper")),
        }
    }
}

const FIGURE_ANTENNAS: [usize; 6] = [400, 576, 784, 1024, 1296, 1600];

/// Sweep behind each figure:
/// 1. MSE versus `N = M`, both DAC types, with Monte Carlo MSE;
/// 2. approximate MSE versus `N` for fixed `M`, with `N` and `M` switched;
/// 3. approximate MSE versus `K`;
/// 4. 16-PSK SER and soft-estimate scatter.
pub fn figure_spec(figure: u8, scale: FigureScale) -> Option<ExperimentSpec> {
    let paper = scale == FigureScale::Paper;
    let pick = |reduced: usize, full: usize| if paper { full } else { reduced };
    let suffix = if paper { "paper" } else { "reduced" };
    let grid = |n: Vec<usize>, m: Vec<usize>, k: Vec<usize>| ParameterGrid {
        n,
        m,
        k,
        rho_db: vec![10.0],
    };
    let spec = |kind, grid, realizations, symbol_draws, dac_modes| ExperimentSpec {
        experiment_kind: kind,
        grid,
        channel_model: ChannelModel::Physical,
        realizations,
        symbol_draws,
        dac_modes,
        seed: 2023,
        output_path: Some(PathBuf::from(format!("figure{figure}-{suffix}.csv"))),
    };
    let both = vec![DacMode::OneBit, DacMode::FullResolution];
    Some(match figure {
        1 => spec(
            ExperimentKind::MseVsNm,
            grid(FIGURE_ANTENNAS.to_vec(), vec![], vec![16]),
            pick(10, 1000),
            1000,
            both,
        ),
        2 => spec(
            ExperimentKind::MseVsNFixedM,
            grid(FIGURE_ANTENNAS.to_vec(), vec![400, 1024, 1600], vec![16]),
            pick(5, 1000),
            0,
            vec![DacMode::OneBit],
        ),
        3 => spec(
            ExperimentKind::MseVsK,
            grid(vec![400, 1024, 1600], vec![], vec![2, 4, 8, 16, 32, 64]),
            pick(10, 1000),
            0,
            vec![DacMode::OneBit],
        ),
        4 => spec(
            ExperimentKind::SerScatter,
            grid(vec![400, 1024, 1600], vec![], vec![8]),
            pick(10, 100),
            pick(25_000, 1_000_000),
            both,
        ),
        _ => return None,
    })
}
