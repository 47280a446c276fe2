//! Closed-form RIS phase configuration and the capacity it achieves.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{eigh, svd, ComplexMatrix, ComplexVector, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseConfig {
    /// Angles in `[0, 2π)`.
    pub theta: Vec<f64>,
    /// `v_i = exp(jθ_i)`.
    pub v: ComplexVector,
}

pub fn wrap_angle(x: f64) -> f64 {
    let w = x.rem_euclid(2.0 * PI);
    // rem_euclid can return 2π itself for tiny negative inputs
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

impl PhaseConfig {
    pub fn from_theta(theta: &[f64]) -> Self {
        let theta: Vec<f64> = theta.iter().map(|&t| wrap_angle(t)).collect();
        let v = theta.iter().map(|&t| C64::from_polar(1.0, t)).collect();
        Self { theta, v }
    }

    /// Independent uniform phases.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let theta: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        Self::from_theta(&theta)
    }
}

fn check_nonzero(g: &ComplexMatrix, what: &str, x: &[C64]) -> Result<()> {
    if g.frobenius_norm() == 0.0 {
        return Err(Error::contract("RIS-BS channel is zero"));
    }
    if x.iter().all(|z| z.norm() == 0.0) {
        return Err(Error::contract(format!("{what} is zero")));
    }
    if g.cols() != x.len() {
        return Err(Error::dim(format!("G has {} columns but {what} has {} entries", g.cols(), x.len())));
    }
    Ok(())
}

/// Aligns `diag(x)·v` with the dominant right singular vector of `G`.
fn align(g: &ComplexMatrix, x: &[C64]) -> Result<PhaseConfig> {
    let s = svd(g)?;
    let top = s.v.column(0);
    let theta: Vec<f64> = x.iter().zip(&top).map(|(xi, ti)| -(xi.arg() - ti.arg())).collect();
    Ok(PhaseConfig::from_theta(&theta))
}

/// Phases from instantaneous channels.
pub fn phases_icsi(g: &ComplexMatrix, h: &[C64]) -> Result<PhaseConfig> {
    check_nonzero(g, "UE-RIS channel", h)?;
    align(g, h)
}

/// Phases from the RIS-BS channel and the UE-RIS covariance: `h` is replaced
/// by the dominant eigenvector of `R_h`.
pub fn phases_scsi(g: &ComplexMatrix, r_h: &ComplexMatrix) -> Result<PhaseConfig> {
    if r_h.frobenius_norm() == 0.0 {
        return Err(Error::contract("covariance is zero"));
    }
    let e = eigh(r_h)?;
    let p = e.vectors.column(0);
    check_nonzero(g, "covariance eigenvector", &p)?;
    align(g, &p)
}

/// `‖G diag(v) h‖²`.
pub fn beam_gain(g: &ComplexMatrix, v: &[C64], h: &[C64]) -> f64 {
    let x: Vec<C64> = v.iter().zip(h).map(|(a, b)| a * b).collect();
    g.mul_vec(&x).iter().map(|z| z.norm_sqr()).sum()
}

/// `log₂(1 + ρ‖G diag(v) h‖²)`.
pub fn capacity(g: &ComplexMatrix, v: &[C64], h: &[C64], rho: f64) -> f64 {
    (1.0 + rho * beam_gain(g, v, h)).log2()
}

/// `Tr(G diag(v) R_h diag(v)ᴴ Gᴴ)`.
pub fn expected_gain(g: &ComplexMatrix, v: &[C64], r_h: &ComplexMatrix) -> f64 {
    let b = g.mul_diag(v);
    b.matmul(r_h).matmul(&b.adjoint()).trace().re
}

/// `log₂(1 + ρ·expected_gain)`, an upper bound on the ergodic capacity.
pub fn capacity_upper_bound(g: &ComplexMatrix, v: &[C64], r_h: &ComplexMatrix, rho: f64) -> f64 {
    (1.0 + rho * expected_gain(g, v, r_h)).log2()
}

/// Visits every phase vector on a `levels`-point grid with the first phase
/// pinned to 0 (the objectives are invariant to a common rotation) and
/// returns the best objective value with its phases.
pub fn grid_search(n: usize, levels: usize, mut objective: impl FnMut(&[C64]) -> f64) -> (f64, PhaseConfig) {
    let step: Vec<C64> = (0..levels).map(|l| C64::from_polar(1.0, 2.0 * PI * l as f64 / levels as f64)).collect();
    let mut idx = vec![0usize; n];
    let mut v = vec![C64::new(1.0, 0.0); n];
    let mut best = (f64::NEG_INFINITY, vec![0usize; n]);
    loop {
        let val = objective(&v);
        if val > best.0 {
            best = (val, idx.clone());
        }
        // odometer over positions 1..n
        let mut pos = 1;
        loop {
            if pos >= n {
                let theta: Vec<f64> = best.1.iter().map(|&l| 2.0 * PI * l as f64 / levels as f64).collect();
                return (best.0, PhaseConfig::from_theta(&theta));
            }
            idx[pos] += 1;
            if idx[pos] < levels {
                v[pos] = step[idx[pos]];
                break;
            }
            idx[pos] = 0;
            v[pos] = step[0];
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_h_from_d, ChannelModel, SystemConfig, ccm_from_d};
    use crate::numerics::testutil::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn two_element_example() {
        let g = ComplexMatrix::from_row_major(1, 2, vec![C64::new(1.0, 0.0); 2]).unwrap();
        let h = [C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let pc = phases_icsi(&g, &h).unwrap();
        assert!(pc.theta[0].abs() < 1e-12);
        assert!((pc.theta[1] - 1.5 * PI).abs() < 1e-12);
        assert!((beam_gain(&g, &pc.v, &h).sqrt() - 2.0).abs() < 1e-12);
        let (best, _) = grid_search(2, 64, |v| beam_gain(&g, v, &h));
        assert!(beam_gain(&g, &pc.v, &h) >= best - 1e-12);
    }

    #[test]
    fn aligned_inputs_need_no_rotation() {
        let a = [C64::new(1.0, 0.0), C64::new(0.5, 0.0)];
        let b = [C64::new(0.8, 0.0), C64::new(0.3, 0.0), C64::new(0.6, 0.0)];
        let g = ComplexMatrix::outer(&a, &b);
        let h = [C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(0.5, 0.0)];
        let pc = phases_icsi(&g, &h).unwrap();
        assert!(pc.theta.iter().all(|&t| t.abs() < 1e-10 || (t - 2.0 * PI).abs() < 1e-10));
    }

    #[test]
    fn zero_inputs_rejected() {
        let g = ComplexMatrix::zeros(2, 2);
        assert!(phases_icsi(&g, &[C64::new(1.0, 0.0); 2]).is_err());
        let g = ComplexMatrix::identity(2);
        assert!(phases_icsi(&g, &[C64::new(0.0, 0.0); 2]).is_err());
    }

    #[test]
    fn capacity_examples() {
        let one = ComplexMatrix::identity(1);
        let u = [C64::new(1.0, 0.0)];
        assert_eq!(capacity(&one, &u, &u, 1.0), 1.0);
        assert_eq!(capacity(&one, &u, &u, 0.0), 0.0);
        assert_eq!(capacity_upper_bound(&one, &u, &ComplexMatrix::identity(1), 0.0), 0.0);
    }

    #[test]
    fn rank_one_optimum_matches_triangle_equality() {
        let mut r = rng(1);
        let a = random_vector(3, &mut r);
        let b = random_vector(4, &mut r);
        let g = ComplexMatrix::outer(&a, &b);
        let h = random_vector(4, &mut r);
        let pc = phases_icsi(&g, &h).unwrap();
        let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
        let s: f64 = b.iter().zip(&h).map(|(x, y)| x.norm() * y.norm()).sum();
        assert!((beam_gain(&g, &pc.v, &h) - na * s * s).abs() < 1e-9 * na * s * s);
    }

    #[test]
    fn rank_one_icsi_beats_grid() {
        let cfg = SystemConfig {
            m: 2,
            n: 4,
            p: 1,
            q: 1,
            ..SystemConfig::default()
        };
        let model = ChannelModel::new(cfg, 0).unwrap();
        let mut r = rng(2);
        for _ in 0..5 {
            let ch = model.gen_channels(&mut r);
            let pc = phases_icsi(&ch.g, &ch.h).unwrap();
            let (best, _) = grid_search(4, 32, |v| beam_gain(&ch.g, v, &ch.h));
            assert!(beam_gain(&ch.g, &pc.v, &ch.h) >= best - 1e-9);
        }
    }

    #[test]
    fn common_rotation_invariance() {
        let mut r = rng(3);
        let g = random_matrix(3, 4, &mut r);
        let h = random_vector(4, &mut r);
        let rh = random_matrix(4, 4, &mut r);
        let rh = rh.matmul(&rh.adjoint());
        let pc = PhaseConfig::random(4, &mut r);
        let shifted = PhaseConfig::from_theta(&pc.theta.iter().map(|t| t + 1.234).collect::<Vec<_>>());
        assert!((capacity(&g, &pc.v, &h, 5.0) - capacity(&g, &shifted.v, &h, 5.0)).abs() < 1e-10);
        assert!((expected_gain(&g, &pc.v, &rh) - expected_gain(&g, &shifted.v, &rh)).abs() < 1e-10 * expected_gain(&g, &pc.v, &rh));
        // global phase of h
        let hr: Vec<C64> = h.iter().map(|z| z * C64::from_polar(1.0, 0.7)).collect();
        let a = phases_icsi(&g, &h).unwrap();
        let b = phases_icsi(&g, &hr).unwrap();
        assert!((capacity(&g, &a.v, &h, 5.0) - capacity(&g, &b.v, &hr, 5.0)).abs() < 1e-10);
    }

    #[test]
    fn scsi_rank_one_matches_icsi() {
        let mut r = rng(4);
        let g = random_matrix(2, 4, &mut r);
        let h = random_vector(4, &mut r);
        let rh = ComplexMatrix::outer(&h, &h);
        let a = phases_icsi(&g, &h).unwrap();
        let b = phases_scsi(&g, &rh).unwrap();
        // equal up to a common rotation
        let d0 = wrap_angle(a.theta[0] - b.theta[0]);
        for (x, y) in a.theta.iter().zip(&b.theta) {
            let d = wrap_angle(x - y - d0);
            assert!(d < 1e-8 || 2.0 * PI - d < 1e-8);
        }
        assert!((expected_gain(&g, &b.v, &rh) - beam_gain(&g, &b.v, &h)).abs() < 1e-9);
    }

    #[test]
    fn isotropic_covariance_gain_is_constant() {
        let mut r = rng(5);
        let g = random_matrix(2, 4, &mut r);
        let eye = ComplexMatrix::identity(4);
        let pc = phases_scsi(&g, &eye).unwrap();
        let tr = g.frobenius_norm_sqr();
        assert!((expected_gain(&g, &pc.v, &eye) - tr).abs() < 1e-10);
        assert!((expected_gain(&g, &PhaseConfig::random(4, &mut r).v, &eye) - tr).abs() < 1e-10);
    }

    #[test]
    fn expected_gain_matches_monte_carlo_and_bounds_capacity() {
        let mut r = rng(6);
        let g = random_matrix(2, 4, &mut r);
        let d = [0.9, 0.1, 0.0, 0.4];
        let rh = ccm_from_d(&d).unwrap();
        let v = PhaseConfig::random(4, &mut r).v;
        let draws = 100_000;
        let mut gain = 0.0;
        let mut caps = Vec::with_capacity(draws);
        for _ in 0..draws {
            let h = sample_h_from_d(&d, &mut r).unwrap();
            gain += beam_gain(&g, &v, &h);
            caps.push(capacity(&g, &v, &h, 3.0));
        }
        let eg = expected_gain(&g, &v, &rh);
        assert!((gain / draws as f64 / eg - 1.0).abs() < 0.01);
        let mean = caps.iter().sum::<f64>() / draws as f64;
        assert!(mean <= capacity_upper_bound(&g, &v, &rh, 3.0));
    }

    // With a single UE-RIS path the covariance is rank one and the rule is
    // optimal up to G's spread; with several paths it is only a heuristic
    // and can lose to lucky random draws.
    #[test]
    fn scsi_beats_random_phases() {
        let cfg = SystemConfig {
            m: 2,
            n: 4,
            p: 3,
            q: 1,
            ..SystemConfig::default()
        };
        let model = ChannelModel::new(cfg, 0).unwrap();
        let mut r = rng(7);
        for _ in 0..20 {
            let ch = model.gen_channels(&mut r);
            let rh = crate::channel::ccm_ground_truth(&ch.h_paths, 4);
            let pc = phases_scsi(&ch.g, &rh).unwrap();
            let eg = expected_gain(&ch.g, &pc.v, &rh);
            let best_random = (0..1000)
                .map(|_| expected_gain(&ch.g, &PhaseConfig::random(4, &mut r).v, &rh))
                .fold(0.0, f64::max);
            assert!(eg >= best_random - 1e-9, "{eg} < {best_random}");
        }
    }

    #[test]
    fn wrap_range() {
        for x in [-1e-18, -PI, 0.0, 2.0 * PI, 7.0 * PI, -13.0] {
            let w = wrap_angle(x);
            assert!((0.0..2.0 * PI).contains(&w));
        }
    }
}
