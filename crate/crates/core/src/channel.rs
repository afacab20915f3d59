//! Channel generation: discrete physical model between square UPAs, and an
//! i.i.d. Rayleigh alternative for validation.
//!
//! Physical model conventions:
//! * steering entry for antenna `(p, q)` (index `p·side + q`) is
//!   `exp(j·2π·d·(p·sin(θ)·cos(φ) + q·sin(θ)·sin(φ)))`, with `θ` measured from
//!   the array normal and `φ` around it, so broadside is `θ = 0`;
//! * scatterer angles are azimuth/elevation relative to broadside by default
//!   ([`AngleConvention::Geographic`]), converted to `(φ, θ)` before steering;
//! * path gains i.i.d. `CN(0, 1)`, overall scale `1/√P`, giving
//!   `E|H_mn|² = 1` without per-realization rescaling;
//! * scatterer angles i.i.d. uniform over `center ± spread/2`, drawn
//!   independently on the transmit and receive side.

use std::f64::consts::{PI, TAU};
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{ComplexMatrix, ComplexVector, RngStream, C64};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("{count} antennas is not a perfect square; a square UPA needs side² elements")]
    NotSquare { count: usize },
    #[error("array side must be at least 1")]
    EmptyArray,
    #[error("invalid scatterer cluster: {0}")]
    InvalidCluster(String),
    #[error("channel dump: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Square uniform planar array of `side × side` elements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArrayGeometry {
    side: usize,
    /// Element spacing in wavelengths.
    spacing: f64,
}

impl ArrayGeometry {
    pub fn half_wavelength(side: usize) -> Result<Self, ChannelError> {
        if side == 0 {
            return Err(ChannelError::EmptyArray);
        }
        Ok(Self { side, spacing: 0.5 })
    }

    /// Geometry with `antennas` elements; errors unless it is a perfect square.
    pub fn square(antennas: usize) -> Result<Self, ChannelError> {
        let side = perfect_square_root(antennas).ok_or(ChannelError::NotSquare { count: antennas })?;
        Self::half_wavelength(side)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn antenna_count(&self) -> usize {
        self.side * self.side
    }
}

/// `Some(r)` when `n == r²`, `n ≥ 1`.
pub fn perfect_square_root(n: usize) -> Option<usize> {
    if n == 0 {
        return None;
    }
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// How cluster `(azimuth, elevation)` pairs map onto array directions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AngleConvention {
    /// Azimuth and elevation relative to broadside, as longitude and latitude
    /// with the array normal on the equator. The direction cosines along the
    /// two array axes are `cos(el)·sin(az)` and `sin(el)`.
    #[default]
    Geographic,
    /// Passed to [`upa_steering_vector`] unchanged: elevation from the normal,
    /// azimuth around it.
    Polar,
}

impl AngleConvention {
    pub fn label(self) -> &'static str {
        match self {
            AngleConvention::Geographic => "geographic",
            AngleConvention::Polar => "polar",
        }
    }
}

/// Cluster of scatterers, one propagation path per scatterer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScattererCluster {
    pub path_count: usize,
    /// Full width of the azimuth interval, radians.
    pub azimuth_spread: f64,
    /// Full width of the elevation interval, radians.
    pub elevation_spread: f64,
    /// `(azimuth, elevation)` of the cluster center, radians.
    pub center: (f64, f64),
    pub convention: AngleConvention,
}

impl ScattererCluster {
    /// 100 paths within π/6 of broadside in azimuth and in elevation.
    pub fn broadside_default() -> Self {
        Self {
            path_count: 100,
            azimuth_spread: PI / 3.0,
            elevation_spread: PI / 3.0,
            center: (0.0, 0.0),
            convention: AngleConvention::Geographic,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.path_count == 0 {
            return Err(ChannelError::InvalidCluster("path_count must be >= 1".into()));
        }
        if !(self.azimuth_spread > 0.0 && self.elevation_spread > 0.0) {
            return Err(ChannelError::InvalidCluster("angle spreads must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for ScattererCluster {
    fn default() -> Self {
        Self::broadside_default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelModel {
    Physical,
    Iid,
}

/// One channel draw plus what produced it.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    /// `M × N`.
    pub h: ComplexMatrix,
    pub model: ChannelModel,
    pub geometry_tx: Option<ArrayGeometry>,
    pub geometry_rx: Option<ArrayGeometry>,
    pub cluster: Option<ScattererCluster>,
    /// `(seed, stream id)` of the generating stream.
    pub seed_record: (u64, u64),
}

impl ChannelRealization {
    pub fn tx_antennas(&self) -> usize {
        self.h.cols()
    }

    pub fn rx_antennas(&self) -> usize {
        self.h.rows()
    }
}

pub fn upa_steering_vector(geometry: &ArrayGeometry, azimuth: f64, elevation: f64) -> ComplexVector {
    let side = geometry.side;
    let k = TAU * geometry.spacing;
    let (se, (sa, ca)) = (elevation.sin(), azimuth.sin_cos());
    let u = k * se * ca;
    let v = k * se * sa;
    let mut out = Vec::with_capacity(side * side);
    for p in 0..side {
        for q in 0..side {
            out.push(C64::from_polar(1.0, p as f64 * u + q as f64 * v));
        }
    }
    ComplexVector(out)
}

/// `(azimuth, elevation)` relative to broadside, as the `(azimuth, elevation)`
/// arguments of [`upa_steering_vector`].
pub fn geographic_to_polar(azimuth: f64, elevation: f64) -> (f64, f64) {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    let theta = (ce * ca).clamp(-1.0, 1.0).acos();
    let phi = se.atan2(ce * sa);
    (phi, theta)
}

/// `path_count` `(azimuth, elevation)` pairs, each coordinate uniform over
/// `center ± spread/2`.
pub fn draw_cluster_angles(rng: &mut RngStream, cluster: &ScattererCluster) -> Vec<(f64, f64)> {
    let (az0, el0) = cluster.center;
    let (ha, he) = (cluster.azimuth_spread / 2.0, cluster.elevation_spread / 2.0);
    (0..cluster.path_count)
        .map(|_| {
            let az = rng.uniform_in(az0 - ha, az0 + ha);
            let el = rng.uniform_in(el0 - he, el0 + he);
            (az, el)
        })
        .collect()
}

/// `H = (1/√P) Σ_p g_p · a_rx(θ_p^rx) · a_tx(θ_p^tx)ᴴ`.
///
/// Draw order on `rng`: transmit angles, receive angles, then path gains.
pub fn generate_physical_channel(
    rng: &mut RngStream,
    geo_tx: &ArrayGeometry,
    geo_rx: &ArrayGeometry,
    cluster: &ScattererCluster,
) -> Result<ChannelRealization, ChannelError> {
    cluster.validate()?;
    let seed_record = (rng.seed(), rng.stream_id());
    let paths = cluster.path_count;
    let tx_angles = draw_cluster_angles(rng, cluster);
    let rx_angles = draw_cluster_angles(rng, cluster);
    let gains: Vec<C64> = (0..paths).map(|_| rng.complex_normal()).collect();

    let scale = 1.0 / (paths as f64).sqrt();
    let steer = |geo: &ArrayGeometry, &(az, el): &(f64, f64)| match cluster.convention {
        AngleConvention::Geographic => {
            let (phi, theta) = geographic_to_polar(az, el);
            upa_steering_vector(geo, phi, theta)
        }
        AngleConvention::Polar => upa_steering_vector(geo, az, el),
    };
    let a_rx: Vec<ComplexVector> = rx_angles.iter().map(|a| steer(geo_rx, a)).collect();
    let a_tx: Vec<ComplexVector> = tx_angles.iter().map(|a| steer(geo_tx, a)).collect();

    // (A_rx · diag(g)/√P) · A_txᴴ
    let left = ComplexMatrix::from_fn(geo_rx.antenna_count(), paths, |m, p| a_rx[p][m] * gains[p] * scale);
    let right = ComplexMatrix::from_fn(geo_tx.antenna_count(), paths, |n, p| a_tx[p][n]);
    let h = left.mul_adjoint(&right);

    Ok(ChannelRealization {
        h,
        model: ChannelModel::Physical,
        geometry_tx: Some(*geo_tx),
        geometry_rx: Some(*geo_rx),
        cluster: Some(*cluster),
        seed_record,
    })
}

/// Physical channel for `n` transmit and `m` receive antennas; both must be
/// perfect squares.
pub fn generate_physical_channel_for(
    rng: &mut RngStream,
    n: usize,
    m: usize,
    cluster: &ScattererCluster,
) -> Result<ChannelRealization, ChannelError> {
    let tx = ArrayGeometry::square(n)?;
    let rx = ArrayGeometry::square(m)?;
    generate_physical_channel(rng, &tx, &rx, cluster)
}

/// `M × N` channel with i.i.d. `CN(0, 1)` entries, drawn row by row.
pub fn generate_iid_channel(rng: &mut RngStream, m: usize, n: usize) -> ChannelRealization {
    let seed_record = (rng.seed(), rng.stream_id());
    let entries: Vec<C64> = (0..m * n).map(|_| rng.complex_normal()).collect();
    let h = ComplexMatrix::from_fn(m, n, |i, j| entries[i * n + j]);
    ChannelRealization {
        h,
        model: ChannelModel::Iid,
        geometry_tx: None,
        geometry_rx: None,
        cluster: None,
        seed_record,
    }
}

/// Magic bytes opening a binary channel dump.
pub const DUMP_MAGIC: &[u8; 8] = b"QMIMOCH1";

/// Writes `H` as a binary dump.
///
/// Layout, all little-endian: 8-byte magic `QMIMOCH1`; `u64` rows; `u64`
/// cols; `u64` seed; `u64` stream id; then `rows·cols` entries in row-major
/// order, each as `f64` real part followed by `f64` imaginary part.
pub fn write_channel_dump<W: Write>(real: &ChannelRealization, mut out: W) -> Result<(), ChannelError> {
    out.write_all(DUMP_MAGIC)?;
    for v in [
        real.h.rows() as u64,
        real.h.cols() as u64,
        real.seed_record.0,
        real.seed_record.1,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    for z in real.h.to_row_major() {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a dump written by [`write_channel_dump`]: `(H, (seed, stream id))`.
pub fn read_channel_dump<R: Read>(mut input: R) -> Result<(ComplexMatrix, (u64, u64)), ChannelError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(ChannelError::Format("bad magic".into()));
    }
    let mut word = [0u8; 8];
    let mut next_u64 = |input: &mut R| -> Result<u64, ChannelError> {
        input.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word))
    };
    let rows = next_u64(&mut input)? as usize;
    let cols = next_u64(&mut input)? as usize;
    let seed = next_u64(&mut input)?;
    let stream = next_u64(&mut input)?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| ChannelError::Format("dimension overflow".into()))?;
    let mut entries = Vec::with_capacity(count);
    let mut buf = [0u8; 16];
    for _ in 0..count {
        input.read_exact(&mut buf)?;
        let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
        let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
        entries.push(C64::new(re, im));
    }
    let h = ComplexMatrix::from_row_major(rows, cols, &entries).map_err(|e| ChannelError::Format(e.to_string()))?;
    Ok((h, (seed, stream)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::svd;

    #[test]
    fn broadside_steering_is_all_ones() {
        let g = ArrayGeometry::half_wavelength(4).unwrap();
        let a = upa_steering_vector(&g, 0.0, 0.0);
        assert_eq!(a.len(), 16);
        assert!(a.iter().all(|z| *z == C64::new(1.0, 0.0)));
    }

    #[test]
    fn single_antenna_steering_is_one() {
        let g = ArrayGeometry::half_wavelength(1).unwrap();
        for &(az, el) in &[(0.3, 1.1), (-2.0, 0.7)] {
            let a = upa_steering_vector(&g, az, el);
            assert_eq!(a.0, vec![C64::new(1.0, 0.0)]);
        }
    }

    #[test]
    fn endfire_two_by_two_phases() {
        // (p, q) -> phase π·p: grid order (0,0), (0,1), (1,0), (1,1)
        let g = ArrayGeometry::half_wavelength(2).unwrap();
        let a = upa_steering_vector(&g, 0.0, PI / 2.0);
        let expected = [0.0, 0.0, PI, PI];
        for (z, &ph) in a.iter().zip(&expected) {
            assert!((z - C64::from_polar(1.0, ph)).norm() < 1e-12);
        }
    }

    #[test]
    fn steering_entries_are_unit_magnitude() {
        let g = ArrayGeometry::half_wavelength(7).unwrap();
        let mut rng = RngStream::new(1, 1);
        for _ in 0..20 {
            let a = upa_steering_vector(&g, rng.uniform_in(-PI, PI), rng.uniform_in(0.0, PI / 2.0));
            assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn geometry_requires_perfect_square() {
        assert_eq!(ArrayGeometry::square(1600).unwrap().side(), 40);
        assert!(matches!(
            ArrayGeometry::square(1000),
            Err(ChannelError::NotSquare { count: 1000 })
        ));
        assert!(ArrayGeometry::square(0).is_err());
        assert_eq!(perfect_square_root(400), Some(20));
        assert_eq!(perfect_square_root(401), None);
    }

    #[test]
    fn degenerate_spread_collapses_to_center() {
        let cluster = ScattererCluster {
            path_count: 50,
            azimuth_spread: 1e-12,
            elevation_spread: 1e-12,
            center: (0.2, -0.1),
            convention: AngleConvention::Geographic,
        };
        let mut rng = RngStream::new(4, 4);
        for (az, el) in draw_cluster_angles(&mut rng, &cluster) {
            assert!((az - 0.2).abs() <= 1e-12);
            assert!((el + 0.1).abs() <= 1e-12);
        }
    }

    #[test]
    fn angles_fill_the_spread() {
        // uniform order statistics: the extreme of 100 draws sits within 5% of
        // the bound with probability 1 - 0.95^100 ≈ 0.994 per side
        let cluster = ScattererCluster {
            azimuth_spread: PI / 6.0,
            elevation_spread: PI / 6.0,
            ..ScattererCluster::broadside_default()
        };
        let bound = PI / 12.0;
        let mut rng = RngStream::new(21, 0);
        let trials = 1000;
        let mut near = 0usize;
        for _ in 0..trials {
            let angles = draw_cluster_angles(&mut rng, &cluster);
            let az_max = angles.iter().map(|a| a.0).fold(f64::MIN, f64::max);
            let az_min = angles.iter().map(|a| a.0).fold(f64::MAX, f64::min);
            for &(az, el) in &angles {
                assert!(az.abs() <= bound && el.abs() <= bound);
            }
            if az_max > 0.9 * bound && az_min < -0.9 * bound {
                near += 1;
            }
        }
        assert!(near as f64 / trials as f64 > 0.97, "{near}");
    }

    #[test]
    fn geographic_angles_give_latitude_longitude_phase_ramps() {
        // direction cosines of (az, el) relative to broadside, written out
        // directly: cos(el)·sin(az) along p, sin(el) along q
        let g = ArrayGeometry::half_wavelength(3).unwrap();
        let mut rng = RngStream::new(5, 5);
        for _ in 0..50 {
            let az = rng.uniform_in(-PI / 2.0, PI / 2.0);
            let el = rng.uniform_in(-PI / 2.0, PI / 2.0);
            let (phi, theta) = geographic_to_polar(az, el);
            let a = upa_steering_vector(&g, phi, theta);
            for p in 0..3 {
                for q in 0..3 {
                    let phase = PI * (p as f64 * el.cos() * az.sin() + q as f64 * el.sin());
                    assert!((a[p * 3 + q] - C64::from_polar(1.0, phase)).norm() < 1e-12);
                }
            }
        }
        assert_eq!(geographic_to_polar(0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn polar_convention_uses_angles_unchanged() {
        let cluster = ScattererCluster {
            path_count: 1,
            convention: AngleConvention::Polar,
            ..ScattererCluster::broadside_default()
        };
        let mut r1 = RngStream::new(6, 0);
        let h = generate_physical_channel_for(&mut r1, 4, 4, &cluster).unwrap().h;
        let mut r2 = RngStream::new(6, 0);
        let (az_t, el_t) = draw_cluster_angles(&mut r2, &cluster)[0];
        let (az_r, el_r) = draw_cluster_angles(&mut r2, &cluster)[0];
        let g0 = r2.complex_normal();
        let geo = ArrayGeometry::half_wavelength(2).unwrap();
        let (at, ar) = (
            upa_steering_vector(&geo, az_t, el_t),
            upa_steering_vector(&geo, az_r, el_r),
        );
        for i in 0..4 {
            for j in 0..4 {
                assert!((h[(i, j)] - g0 * ar[i] * at[j].conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_angles() {
        let cluster = ScattererCluster::broadside_default();
        let a = draw_cluster_angles(&mut RngStream::new(9, 9), &cluster);
        let b = draw_cluster_angles(&mut RngStream::new(9, 9), &cluster);
        assert_eq!(a, b);
    }

    #[test]
    fn single_broadside_path_is_rank_one_constant() {
        let cluster = ScattererCluster {
            path_count: 1,
            azimuth_spread: 1e-12,
            elevation_spread: 1e-12,
            center: (0.0, 0.0),
            convention: AngleConvention::Geographic,
        };
        let mut rng = RngStream::new(3, 0);
        let real = generate_physical_channel_for(&mut rng, 9, 4, &cluster).unwrap();
        let h0 = real.h[(0, 0)];
        for i in 0..4 {
            for j in 0..9 {
                assert!((real.h[(i, j)] - h0).norm() < 1e-9);
            }
        }
        let s = svd(&real.h).unwrap().singular_values;
        assert!(s[1] < 1e-9 * s[0]);
    }

    #[test]
    fn physical_channel_has_unit_entry_variance() {
        let cluster = ScattererCluster::broadside_default();
        let realizations = 200;
        let mut total = 0.0;
        for r in 0..realizations {
            let mut rng = RngStream::new(77, r);
            let real = generate_physical_channel_for(&mut rng, 16, 16, &cluster).unwrap();
            total += real.h.frobenius_norm().powi(2) / 256.0;
        }
        let mean = total / realizations as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn physical_channel_rank_is_bounded_by_paths() {
        let cluster = ScattererCluster::broadside_default();
        let mut rng = RngStream::new(5, 0);
        let real = generate_physical_channel_for(&mut rng, 144, 121, &cluster).unwrap();
        let s = svd(&real.h).unwrap().singular_values;
        assert!(s[100..].iter().all(|&x| x < 1e-10 * s[0]));
    }

    #[test]
    fn channel_generation_is_deterministic() {
        let cluster = ScattererCluster::broadside_default();
        let a = generate_physical_channel_for(&mut RngStream::new(1, 2), 16, 25, &cluster).unwrap();
        let b = generate_physical_channel_for(&mut RngStream::new(1, 2), 16, 25, &cluster).unwrap();
        assert_eq!(a.h, b.h);
        assert_eq!((a.h.rows(), a.h.cols()), (25, 16));
        assert_eq!(a.seed_record, (1, 2));
        let c = generate_iid_channel(&mut RngStream::new(1, 2), 2, 2);
        let d = generate_iid_channel(&mut RngStream::new(1, 2), 2, 2);
        assert_eq!(c.h, d.h);
    }

    #[test]
    fn mismatched_counts_are_rejected() {
        let cluster = ScattererCluster::broadside_default();
        let err = generate_physical_channel_for(&mut RngStream::new(0, 0), 15, 16, &cluster);
        assert!(matches!(err, Err(ChannelError::NotSquare { count: 15 })));
    }

    #[test]
    fn iid_entry_variance_and_independence() {
        let mut total = 0.0;
        for r in 0..100 {
            let real = generate_iid_channel(&mut RngStream::new(2, r), 32, 32);
            total += real.h.frobenius_norm().powi(2) / 1024.0;
        }
        assert!((total / 100.0 - 1.0).abs() < 0.05);

        let samples = 10_000;
        let mut cross = C64::new(0.0, 0.0);
        let (mut p0, mut p1) = (0.0, 0.0);
        for r in 0..samples {
            let real = generate_iid_channel(&mut RngStream::new(3, r), 2, 2);
            let (a, b) = (real.h[(0, 0)], real.h[(0, 1)]);
            cross += a * b.conj();
            p0 += a.norm_sqr();
            p1 += b.norm_sqr();
        }
        let corr = cross.norm() / (p0 * p1).sqrt();
        assert!(corr < 0.05, "{corr}");
    }

    #[test]
    fn dump_roundtrip() {
        let real = generate_iid_channel(&mut RngStream::new(42, 7), 3, 5);
        let mut buf = Vec::new();
        write_channel_dump(&real, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 * 8 + 15 * 16);
        let (h, rec) = read_channel_dump(buf.as_slice()).unwrap();
        assert_eq!(h, real.h);
        assert_eq!(rec, (42, 7));
        buf[0] = b'X';
        assert!(read_channel_dump(buf.as_slice()).is_err());
    }
}
