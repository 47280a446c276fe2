//! Geometric mmWave channels for the UE→RIS→BS link.
//!
//! The RIS-BS channel is `G = √(MN/P) Σ_p α_p a_BS(ξ_p) a_RISᴴ(φ_p, ϕ_p)` and
//! the UE-RIS channel is `h = √(N/Q) Σ_q β_q a_RIS(φ_q, ϕ_q)`, with unit-norm
//! array responses and `CN(0, 1)` path gains.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dft_matrix, kron_vec, ComplexMatrix, ComplexVector, C64};

/// Number of equal sub-intervals of `[0, 2π)` used by clustered angle draws.
pub const ANGLE_PARTITIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AngleMode {
    /// Every angle uniform on `[0, 2π)`.
    #[default]
    Mode1,
    /// UE-RIS arrival angles drawn inside a few clustered sub-intervals.
    Mode2,
}

/// Scenario dimensions and link parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// BS antennas.
    pub m: usize,
    /// RIS elements; must be a perfect square.
    pub n: usize,
    /// Pilots per UE-RIS coherence block.
    pub n_p: usize,
    /// UE-RIS coherence blocks in the training window.
    pub n_b: usize,
    /// Linear SNR.
    pub rho: f64,
    /// RIS-BS paths.
    pub p: usize,
    /// UE-RIS paths.
    pub q: usize,
    pub angle_mode: AngleMode,
    /// Active clusters (Mode2 only).
    pub cluster_count: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            m: 4,
            n: 64,
            n_p: 50,
            n_b: 200,
            rho: 100.0,
            p: 3,
            q: 1,
            angle_mode: AngleMode::Mode1,
            cluster_count: 4,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("n", self.n),
            ("n_p", self.n_p),
            ("n_b", self.n_b),
            ("p", self.p),
            ("q", self.q),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if isqrt(self.n).is_none() {
            return Err(Error::Config(format!("n = {} is not a perfect square", self.n)));
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::Config(format!("rho must be finite and nonnegative, got {}", self.rho)));
        }
        if self.angle_mode == AngleMode::Mode2
            && (self.cluster_count == 0 || self.cluster_count > ANGLE_PARTITIONS)
        {
            return Err(Error::Config(format!(
                "cluster_count must be in 1..={ANGLE_PARTITIONS}, got {}",
                self.cluster_count
            )));
        }
        Ok(())
    }

    /// SNR in dB.
    pub fn snr_db(&self) -> f64 {
        10.0 * self.rho.log10()
    }

    pub fn with_snr_db(mut self, db: f64) -> Self {
        self.rho = db_to_linear(db);
        self
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub(crate) fn isqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// Angles of one RIS-BS path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BsPath {
    /// BS angle of arrival.
    pub xi: f64,
    /// RIS azimuth angle of departure.
    pub phi: f64,
    /// RIS elevation angle of departure.
    pub vphi: f64,
}

/// Angles of one UE-RIS path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RisPath {
    pub phi: f64,
    pub vphi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    /// UE-RIS channel, length N.
    pub h: ComplexVector,
    /// RIS-BS channel, M×N.
    pub g: ComplexMatrix,
    pub g_paths: Vec<BsPath>,
    pub h_paths: Vec<RisPath>,
    pub alpha: Vec<C64>,
    pub beta: Vec<C64>,
}

/// Half-wavelength ULA response `a[m] = exp(jπ m cos ξ)/√M`.
pub fn ula_response(m: usize, xi: f64) -> ComplexVector {
    let s = 1.0 / (m as f64).sqrt();
    let c = xi.cos();
    (0..m).map(|i| C64::from_polar(s, PI * i as f64 * c)).collect()
}

/// Square planar-array response `(1/√N)·u ⊗ w`, with
/// `u[i] = exp(jπ i sin φ sin ϕ)` and `w[i] = exp(jπ i cos ϕ)`, `i = 0..√N−1`.
pub fn upa_response(n: usize, phi: f64, vphi: f64) -> Result<ComplexVector> {
    let side = isqrt(n).ok_or_else(|| Error::dim(format!("{n} RIS elements is not a perfect square")))?;
    let su = phi.sin() * vphi.sin();
    let sw = vphi.cos();
    let u: Vec<C64> = (0..side).map(|i| C64::from_polar(1.0, PI * i as f64 * su)).collect();
    let w: Vec<C64> = (0..side).map(|i| C64::from_polar(1.0, PI * i as f64 * sw)).collect();
    let s = 1.0 / (n as f64).sqrt();
    Ok(kron_vec(&u, &w).into_iter().map(|z| z * s).collect())
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn uniform_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() * 2.0 * PI
}

/// Scenario-level choice of active sub-intervals for clustered angles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLayout {
    pub azimuth: Vec<usize>,
    pub elevation: Vec<usize>,
}

impl ClusterLayout {
    /// Picks `count` distinct sub-intervals per angle from the fixed partition.
    pub fn draw<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Self {
        let pick = |rng: &mut R| rand::seq::index::sample(rng, ANGLE_PARTITIONS, count).into_vec();
        let azimuth = pick(rng);
        let elevation = pick(rng);
        Self { azimuth, elevation }
    }

    pub fn interval(index: usize) -> (f64, f64) {
        let w = 2.0 * PI / ANGLE_PARTITIONS as f64;
        (index as f64 * w, (index + 1) as f64 * w)
    }

    fn draw_path<R: Rng + ?Sized>(&self, rng: &mut R) -> RisPath {
        let c = rng.random_range(0..self.azimuth.len());
        let in_interval = |idx: usize, rng: &mut R| {
            let (lo, hi) = Self::interval(idx);
            lo + (hi - lo) * rng.random::<f64>()
        };
        let phi = in_interval(self.azimuth[c], rng);
        let vphi = in_interval(self.elevation[c], rng);
        RisPath { phi, vphi }
    }
}

/// Channel generator for one scenario: the configuration plus (in Mode2)
/// the cluster layout fixed by the scenario seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModel {
    pub cfg: SystemConfig,
    pub layout: Option<ClusterLayout>,
}

impl ChannelModel {
    pub fn new(cfg: SystemConfig, scenario_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let layout = match cfg.angle_mode {
            AngleMode::Mode1 => None,
            AngleMode::Mode2 => {
                let mut rng = ChaCha8Rng::seed_from_u64(crate::seeds::derive(scenario_seed, &[0xC1u64]));
                Some(ClusterLayout::draw(cfg.cluster_count, &mut rng))
            }
        };
        Ok(Self { cfg, layout })
    }

    pub fn draw_ris_path<R: Rng + ?Sized>(&self, rng: &mut R) -> RisPath {
        match &self.layout {
            None => RisPath {
                phi: uniform_angle(rng),
                vphi: uniform_angle(rng),
            },
            Some(layout) => layout.draw_path(rng),
        }
    }

    /// Draws fresh angles and gains for both links.
    pub fn gen_channels<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let SystemConfig { m, n, p, q, .. } = self.cfg;
        let g_paths: Vec<BsPath> = (0..p)
            .map(|_| BsPath {
                xi: uniform_angle(rng),
                phi: uniform_angle(rng),
                vphi: uniform_angle(rng),
            })
            .collect();
        let alpha: Vec<C64> = (0..p).map(|_| complex_gaussian(rng)).collect();
        let h_paths: Vec<RisPath> = (0..q).map(|_| self.draw_ris_path(rng)).collect();
        let beta: Vec<C64> = (0..q).map(|_| complex_gaussian(rng)).collect();

        let g = g_from_paths(m, n, &g_paths, &alpha);
        let h = h_from_paths(n, &h_paths, &beta);
        ChannelRealization {
            h,
            g,
            g_paths,
            h_paths,
            alpha,
            beta,
        }
    }

    /// New UE-RIS realization with the same angles and fresh gains.
    pub fn redraw_h<R: Rng + ?Sized>(&self, paths: &[RisPath], rng: &mut R) -> ComplexVector {
        let beta: Vec<C64> = paths.iter().map(|_| complex_gaussian(rng)).collect();
        h_from_paths(self.cfg.n, paths, &beta)
    }
}

/// Generates a realization for `cfg` with a Mode2 layout derived from seed 0.
pub fn gen_channels<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<ChannelRealization> {
    Ok(ChannelModel::new(cfg.clone(), 0)?.gen_channels(rng))
}

pub fn g_from_paths(m: usize, n: usize, paths: &[BsPath], alpha: &[C64]) -> ComplexMatrix {
    let scale = ((m * n) as f64 / paths.len() as f64).sqrt();
    let mut g = ComplexMatrix::zeros(m, n);
    for (path, &a) in paths.iter().zip(alpha) {
        let bs = ula_response(m, path.xi);
        let ris = upa_response(n, path.phi, path.vphi).expect("validated n");
        let term = ComplexMatrix::outer(&bs, &ris).scale_c(a * scale);
        g.add_assign(&term);
    }
    g
}

pub fn h_from_paths(n: usize, paths: &[RisPath], beta: &[C64]) -> ComplexVector {
    let scale = (n as f64 / paths.len() as f64).sqrt();
    let mut h = vec![C64::new(0.0, 0.0); n];
    for (path, &b) in paths.iter().zip(beta) {
        let a = upa_response(n, path.phi, path.vphi).expect("validated n");
        for (hi, ai) in h.iter_mut().zip(a) {
            *hi += ai * b * scale;
        }
    }
    h
}

/// Analytic UE-RIS covariance over `CN(0, 1)` gain redraws at fixed angles:
/// `(N/Q) Σ_q a_q a_qᴴ`.
pub fn ccm_ground_truth(paths: &[RisPath], n: usize) -> ComplexMatrix {
    let mut r = ComplexMatrix::zeros(n, n);
    let scale = n as f64 / paths.len() as f64;
    for path in paths {
        let a = upa_response(n, path.phi, path.vphi).expect("validated n");
        r.add_assign(&ComplexMatrix::outer(&a, &a).scale(scale));
    }
    r
}

/// Angular spectrum and the covariance it induces, `R = Fᴴ diag(d) F`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSpec {
    pub d: Vec<f64>,
    pub r_h: ComplexMatrix,
}

impl CovarianceSpec {
    pub fn from_spectrum(d: Vec<f64>) -> Result<Self> {
        let r_h = ccm_from_d(&d)?;
        Ok(Self { d, r_h })
    }
}

/// `Fᴴ diag(d) F` for a nonnegative spectrum `d`.
pub fn ccm_from_d(d: &[f64]) -> Result<ComplexMatrix> {
    if let Some(x) = d.iter().find(|&&x| !(x >= 0.0)) {
        return Err(Error::contract(format!("angular spectrum entries must be nonnegative, got {x}")));
    }
    let f = dft_matrix(d.len())?;
    let dc: Vec<C64> = d.iter().map(|&x| C64::new(x, 0.0)).collect();
    Ok(f.adjoint().mul_diag(&dc).matmul(&f))
}

/// Draws `h = Fᴴ diag(√d) z` with `z ~ CN(0, I)`.
pub fn sample_h_from_d<R: Rng + ?Sized>(d: &[f64], rng: &mut R) -> Result<ComplexVector> {
    if d.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::contract("angular spectrum entries must be nonnegative"));
    }
    let f = dft_matrix(d.len())?;
    let z: Vec<C64> = d.iter().map(|&x| complex_gaussian(rng) * x.sqrt()).collect();
    Ok(f.adjoint_mul_vec(&z))
}

/// Best diagonal fit of `R` in the DFT basis: `d_i = (F R Fᴴ)_ii / N²`.
pub fn spectrum_of(r: &ComplexMatrix) -> Result<Vec<f64>> {
    let n = r.rows();
    let f = dft_matrix(n)?;
    let proj = f.matmul(r).matmul(&f.adjoint());
    let n2 = (n * n) as f64;
    Ok((0..n).map(|i| (proj[(i, i)].re / n2).max(0.0)).collect())
}

/// Angular-domain twins `h_vir = F_N h`, `G_vir = F_M G F_N`.
pub fn to_angular(h: &[C64], g: &ComplexMatrix) -> (ComplexVector, ComplexMatrix) {
    let fm = dft_matrix(g.rows()).expect("m >= 1");
    let fn_ = dft_matrix(h.len()).expect("n >= 1");
    (fn_.mul_vec(h), fm.matmul(g).matmul(&fn_))
}

/// Inverse of [`to_angular`]: `h = (1/N) Fᴴ h_vir`, `G = (1/(MN)) F_Mᴴ G_vir F_Nᴴ`.
pub fn to_spatial(h_vir: &[C64], g_vir: &ComplexMatrix) -> (ComplexVector, ComplexMatrix) {
    let (m, n) = g_vir.shape();
    let fm = dft_matrix(m).expect("m >= 1");
    let fn_ = dft_matrix(n).expect("n >= 1");
    let h = fn_.adjoint_mul_vec(h_vir).into_iter().map(|z| z / n as f64).collect();
    let g = fm.adjoint().matmul(g_vir).matmul(&fn_.adjoint()).scale(1.0 / (m * n) as f64);
    (h, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{norm, norm_sqr, svd};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn numerical_rank(a: &ComplexMatrix) -> usize {
        let s = svd(a).unwrap().s;
        s.iter().filter(|&&x| x > 1e-8 * s[0].max(1e-300)).count()
    }

    #[test]
    fn ula_examples() {
        for m in [1, 3, 8] {
            for x in ula_response(m, PI / 2.0) {
                assert!((x - C64::new(1.0 / (m as f64).sqrt(), 0.0)).norm() < 1e-15);
            }
        }
        assert_eq!(ula_response(1, 0.3), vec![C64::new(1.0, 0.0)]);
        let a = ula_response(4, 0.0);
        for (x, e) in a.iter().zip([0.5, -0.5, 0.5, -0.5]) {
            assert!((x - C64::new(e, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn upa_examples() {
        // φ = 0: u is all ones, so the response is w repeated
        let a = upa_response(9, 0.0, 0.4).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i * 3 + j] - a[j]).norm() < 1e-15);
            }
        }
        // ϕ = π/2: w is all ones
        let a = upa_response(9, 0.8, PI / 2.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i * 3 + j] - a[i * 3]).norm() < 1e-15);
            }
        }
        let a = upa_response(4, PI / 2.0, PI / 2.0).unwrap();
        let expect = [0.5, 0.5, -0.5, -0.5];
        for (x, e) in a.iter().zip(expect) {
            assert!((x - C64::new(e, 0.0)).norm() < 1e-15);
        }
        assert!(matches!(upa_response(8, 0.0, 0.0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn steering_vectors_are_unit_norm() {
        let mut r = rng(1);
        for _ in 0..200 {
            let (a, b, c) = (r.random::<f64>() * 7.0, r.random::<f64>() * 7.0, r.random::<f64>() * 7.0);
            assert!((norm(&ula_response(6, a)) - 1.0).abs() < 1e-12);
            assert!((norm(&upa_response(16, b, c).unwrap()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_path_channels() {
        let cfg = SystemConfig {
            m: 4,
            n: 16,
            p: 1,
            q: 1,
            ..SystemConfig::default()
        };
        let model = ChannelModel::new(cfg, 3).unwrap();
        let real = model.gen_channels(&mut rng(2));
        assert_eq!(numerical_rank(&real.g), 1);
        // unit gain on the single UE-RIS path gives ‖h‖ = √N
        let h = h_from_paths(16, &real.h_paths, &[C64::from_polar(1.0, 0.3)]);
        assert!((norm(&h) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rank_bounds() {
        let cfg = SystemConfig {
            m: 4,
            n: 16,
            p: 2,
            q: 3,
            ..SystemConfig::default()
        };
        let model = ChannelModel::new(cfg, 1).unwrap();
        let mut r = rng(5);
        for _ in 0..20 {
            let real = model.gen_channels(&mut r);
            assert!(numerical_rank(&real.g) <= 2);
            assert!(numerical_rank(&ccm_ground_truth(&real.h_paths, 16)) <= 3);
        }
    }

    #[test]
    fn g_normalization_monte_carlo() {
        let cfg = SystemConfig {
            m: 4,
            n: 16,
            p: 3,
            ..SystemConfig::default()
        };
        let model = ChannelModel::new(cfg, 0).unwrap();
        let mut r = rng(7);
        let trials = 10_000;
        let mean: f64 = (0..trials).map(|_| model.gen_channels(&mut r).g.frobenius_norm_sqr()).sum::<f64>()
            / trials as f64;
        assert!((mean / 64.0 - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn ground_truth_covariance() {
        let paths = [RisPath { phi: 0.4, vphi: 1.1 }];
        let r = ccm_ground_truth(&paths, 16);
        assert!((r.trace().re - 16.0).abs() < 1e-12);
        assert_eq!(numerical_rank(&r), 1);

        // Monte-Carlo over gain redraws
        let cfg = SystemConfig {
            n: 16,
            q: 2,
            ..SystemConfig::default()
        };
        let model = ChannelModel::new(cfg, 0).unwrap();
        let paths = [RisPath { phi: 0.4, vphi: 1.1 }, RisPath { phi: 2.0, vphi: 0.3 }];
        let r = ccm_ground_truth(&paths, 16);
        let mut acc = ComplexMatrix::zeros(16, 16);
        let mut g = rng(8);
        let trials = 10_000;
        for _ in 0..trials {
            let h = model.redraw_h(&paths, &mut g);
            acc.add_assign(&ComplexMatrix::outer(&h, &h));
        }
        let sample = acc.scale(1.0 / trials as f64);
        assert!(sample.sub(&r).frobenius_norm() < 0.05 * r.frobenius_norm());
    }

    #[test]
    fn covariance_from_all_dft_directions_is_near_identity() {
        // a path on every DFT direction: angles chosen so that the response
        // equals a normalized DFT column
        let n = 16;
        let f = dft_matrix(n).unwrap();
        let mut r = ComplexMatrix::zeros(n, n);
        for k in 0..n {
            let col: Vec<C64> = f.adjoint().column(k).iter().map(|z| z / 4.0).collect();
            r.add_assign(&ComplexMatrix::outer(&col, &col));
        }
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| r[(i, j)].norm_sqr())
            .sum();
        assert!(off.sqrt() < 1e-10);
        assert!((r.trace().re - n as f64).abs() < 1e-10);
    }

    #[test]
    fn aligned_single_path_concentrates_in_one_bin() {
        // s_w = 2k/N and s_u = 2k/√N make the UPA response a DFT column
        let n = 16;
        let k = 1.0;
        let vphi = (2.0 * k / n as f64).acos();
        let phi = ((2.0 * k / 4.0) / vphi.sin()).asin();
        let h = h_from_paths(n, &[RisPath { phi, vphi }], &[C64::new(1.0, 0.0)]);
        let f = dft_matrix(n).unwrap();
        let hv = f.mul_vec(&h);
        let total = norm_sqr(&hv);
        let peak = hv.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        assert!(peak / total > 0.99);
    }

    #[test]
    fn mode2_angles_stay_in_clusters() {
        let cfg = SystemConfig {
            n: 16,
            q: 5,
            angle_mode: AngleMode::Mode2,
            cluster_count: 4,
            ..SystemConfig::default()
        };
        let model = ChannelModel::new(cfg, 42).unwrap();
        let layout = model.layout.clone().unwrap();
        assert_eq!(layout.azimuth.len(), 4);
        let mut r = rng(9);
        for _ in 0..200 {
            let real = model.gen_channels(&mut r);
            for p in &real.h_paths {
                let inside = |x: f64, set: &[usize]| {
                    set.iter().any(|&i| {
                        let (lo, hi) = ClusterLayout::interval(i);
                        x >= lo && x < hi
                    })
                };
                assert!(inside(p.phi, &layout.azimuth));
                assert!(inside(p.vphi, &layout.elevation));
            }
            for p in &real.g_paths {
                assert!((0.0..2.0 * PI).contains(&p.xi));
            }
        }
        // the layout is a function of the scenario seed
        assert_eq!(ChannelModel::new(model.cfg.clone(), 42).unwrap().layout, model.layout);
    }

    #[test]
    fn ccm_from_d_examples() {
        let n = 8;
        let r = ccm_from_d(&vec![1.0 / n as f64; n]).unwrap();
        assert!(r.sub(&ComplexMatrix::identity(n)).frobenius_norm() < 1e-12);
        let r = ccm_from_d(&vec![0.0; n]).unwrap();
        assert_eq!(r.frobenius_norm(), 0.0);
        let mut d = vec![0.0; n];
        d[0] = 1.0;
        let r = ccm_from_d(&d).unwrap();
        // first DFT column is all ones: outer product of ones
        for z in r.as_slice() {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
        assert!(ccm_from_d(&[1.0, -0.1]).is_err());
    }

    #[test]
    fn sampling_from_spectrum() {
        let mut r = rng(10);
        assert!(sample_h_from_d(&[0.0; 4], &mut r).unwrap().iter().all(|z| z.norm() == 0.0));

        let n = 8;
        let trials = 10_000;
        let d = vec![1.0 / n as f64; n];
        let mut acc = ComplexMatrix::zeros(n, n);
        for _ in 0..trials {
            let h = sample_h_from_d(&d, &mut r).unwrap();
            acc.add_assign(&ComplexMatrix::outer(&h, &h));
        }
        let sample = acc.scale(1.0 / trials as f64);
        let eye = ComplexMatrix::identity(n);
        assert!(sample.sub(&eye).frobenius_norm() < 0.05 * eye.frobenius_norm());

        // a single active bin keeps every draw on one DFT column
        let mut d = vec![0.0; n];
        d[3] = 2.0;
        let col = dft_matrix(n).unwrap().adjoint().column(3);
        for _ in 0..20 {
            let h = sample_h_from_d(&d, &mut r).unwrap();
            let c = crate::numerics::inner(&col, &h) / norm_sqr(&col);
            let resid: f64 = h.iter().zip(&col).map(|(x, y)| (x - c * y).norm_sqr()).sum();
            assert!(resid < 1e-20);
        }
    }

    #[test]
    fn angular_round_trip_and_spectrum() {
        let model = ChannelModel::new(
            SystemConfig {
                m: 3,
                n: 9,
                ..SystemConfig::default()
            },
            0,
        )
        .unwrap();
        let real = model.gen_channels(&mut rng(11));
        let (hv, gv) = to_angular(&real.h, &real.g);
        let (h, g) = to_spatial(&hv, &gv);
        assert!(h.iter().zip(&real.h).all(|(a, b)| (a - b).norm() < 1e-12));
        assert!(g.sub(&real.g).frobenius_norm() < 1e-12);

        let d = vec![0.5, 0.0, 2.0, 0.1, 0.0, 0.0, 0.0, 1.0, 0.0];
        let back = spectrum_of(&ccm_from_d(&d).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&d) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SystemConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.n = 15;
        assert!(cfg.validate().is_err());
        cfg.n = 16;
        cfg.p = 0;
        assert!(cfg.validate().is_err());
        cfg.p = 1;
        cfg.rho = -1.0;
        assert!(cfg.validate().is_err());
    }
}
