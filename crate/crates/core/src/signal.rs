//! Uplink training observations.
//!
//! JCE uses one coherence block, `Y = √ρ G (Φ ∘ h xᵀ) + W`. JCCE stacks
//! `N_b` blocks with fresh UE-RIS draws; block `s` is vectorized as
//! `ỹ_s = √ρ (Φᵀ ⊙ G) h_s + w`.

use rand::Rng;

use crate::channel::{complex_gaussian, sample_h_from_d, ChannelRealization};
use crate::error::{Error, Result};
use crate::numerics::{dft_matrix, khatri_rao, ComplexMatrix, ComplexVector, C64};

/// RIS training configurations (one column per pilot) and pilot symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotPlan {
    /// N×N_p, unit-modulus entries.
    pub phi: ComplexMatrix,
    /// Length N_p, unit-modulus.
    pub x: ComplexVector,
}

impl PilotPlan {
    /// Random phases uniform on `[0, 2π)`, unit pilot symbols.
    pub fn random<R: Rng + ?Sized>(n: usize, n_p: usize, rng: &mut R) -> Self {
        let phi = ComplexMatrix::from_fn(n, n_p, |_, _| {
            C64::from_polar(1.0, rng.random::<f64>() * 2.0 * std::f64::consts::PI)
        });
        Self {
            phi,
            x: vec![C64::new(1.0, 0.0); n_p],
        }
    }

    /// Orthogonal training: the N columns of the DFT matrix (`N_p = N`).
    pub fn dft(n: usize) -> Result<Self> {
        Ok(Self {
            phi: dft_matrix(n)?,
            x: vec![C64::new(1.0, 0.0); n],
        })
    }

    pub fn from_parts(phi: ComplexMatrix, x: ComplexVector) -> Result<Self> {
        let plan = Self { phi, x };
        plan.validate()?;
        Ok(plan)
    }

    pub fn n(&self) -> usize {
        self.phi.rows()
    }

    pub fn n_p(&self) -> usize {
        self.phi.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.phi.cols() {
            return Err(Error::dim("pilot count differs between Φ and x"));
        }
        let unit = |z: &C64| (z.norm() - 1.0).abs() < 1e-12;
        if !self.phi.as_slice().iter().all(unit) || !self.x.iter().all(unit) {
            return Err(Error::contract("pilot plan entries must have unit modulus"));
        }
        Ok(())
    }

    /// RIS configuration `v_l` of pilot `l`.
    pub fn config(&self, l: usize) -> ComplexVector {
        self.phi.column(l)
    }
}

pub fn make_pilot_plan<R: Rng + ?Sized>(n: usize, n_p: usize, rng: &mut R) -> PilotPlan {
    PilotPlan::random(n, n_p, rng)
}

/// `Y`, M×N_p.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSignalJce {
    pub y: ComplexMatrix,
}

/// `Ỹ`, (M·N_p)×N_b, column `s` is `vec(Y_s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSignalJcce {
    pub y: ComplexMatrix,
}

fn noise_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Noise-free `√ρ G (Φ ∘ h xᵀ)`.
pub fn jce_mean(g: &ComplexMatrix, h: &[C64], plan: &PilotPlan, rho: f64) -> ComplexMatrix {
    let n_p = plan.n_p();
    let s = rho.sqrt();
    let weighted = ComplexMatrix::from_fn(h.len(), n_p, |i, l| plan.phi[(i, l)] * h[i] * plan.x[l] * s);
    g.matmul(&weighted)
}

pub fn rx_train_jce<R: Rng + ?Sized>(
    real: &ChannelRealization,
    plan: &PilotPlan,
    rho: f64,
    rng: &mut R,
) -> Result<TrainingSignalJce> {
    check_dims(&real.g, real.h.len(), plan)?;
    let mean = jce_mean(&real.g, &real.h, plan, rho);
    let noise = noise_matrix(mean.rows(), mean.cols(), rng);
    Ok(TrainingSignalJce { y: mean.add(&noise) })
}

fn check_dims(g: &ComplexMatrix, n: usize, plan: &PilotPlan) -> Result<()> {
    if g.cols() != n || plan.n() != n {
        return Err(Error::dim(format!(
            "G is {:?}, h has {n} entries, plan has {} rows",
            g.shape(),
            plan.n()
        )));
    }
    Ok(())
}

/// `Φᵀ ⊙ G`, (M·N_p)×N.
pub fn cascade_operator(g: &ComplexMatrix, phi: &ComplexMatrix) -> ComplexMatrix {
    khatri_rao(&phi.transpose(), g).expect("Φ and G share the RIS dimension")
}

/// Stacks `n_b` blocks, drawing each UE-RIS realization with `draw_h`.
pub fn rx_train_jcce_with<R, F>(
    g: &ComplexMatrix,
    plan: &PilotPlan,
    rho: f64,
    n_b: usize,
    rng: &mut R,
    mut draw_h: F,
) -> Result<TrainingSignalJcce>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> ComplexVector,
{
    check_dims(g, plan.n(), plan)?;
    let k = cascade_operator(g, &plan.phi);
    let s = rho.sqrt();
    let mut y = ComplexMatrix::zeros(k.rows(), n_b);
    for b in 0..n_b {
        let h = draw_h(rng);
        let col = k.mul_vec(&h);
        for (i, z) in col.into_iter().enumerate() {
            y[(i, b)] = z * s + complex_gaussian(rng);
        }
    }
    Ok(TrainingSignalJcce { y })
}

/// JCCE training with UE-RIS draws `h_s = Fᴴ diag(√d) z_s`.
pub fn rx_train_jcce<R: Rng + ?Sized>(
    g: &ComplexMatrix,
    d: &[f64],
    plan: &PilotPlan,
    rho: f64,
    n_b: usize,
    rng: &mut R,
) -> Result<TrainingSignalJcce> {
    if d.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::contract("angular spectrum entries must be nonnegative"));
    }
    rx_train_jcce_with(g, plan, rho, n_b, rng, |r| {
        sample_h_from_d(d, r).expect("validated spectrum")
    })
}

/// `ρ (Φᵀ⊙G) Fᴴ diag(d) F (Φᵀ⊙G)ᴴ + I`.
pub fn rx_cov_model(g: &ComplexMatrix, phi: &ComplexMatrix, d: &[f64], rho: f64) -> Result<ComplexMatrix> {
    if d.len() != g.cols() || phi.rows() != g.cols() {
        return Err(Error::dim("rx_cov_model: inconsistent RIS dimension"));
    }
    if d.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::contract("angular spectrum entries must be nonnegative"));
    }
    let a = cascade_operator(g, phi).matmul(&dft_matrix(d.len())?.adjoint());
    Ok(spectral_cov(&a, d, rho))
}

/// `ρ A diag(d) Aᴴ + I` for an already-formed `A = (Φᵀ⊙G) Fᴴ`.
pub(crate) fn spectral_cov(a: &ComplexMatrix, d: &[f64], rho: f64) -> ComplexMatrix {
    let n = a.rows();
    let mut r = ComplexMatrix::identity(n);
    for i in 0..n {
        for j in i..n {
            let mut s = C64::new(0.0, 0.0);
            for (k, &dk) in d.iter().enumerate() {
                if dk != 0.0 {
                    s += a[(i, k)] * a[(j, k)].conj() * dk;
                }
            }
            r[(i, j)] += s * rho;
            if i != j {
                r[(j, i)] = r[(i, j)].conj();
            }
        }
        r[(i, i)] = C64::new(r[(i, i)].re, 0.0);
    }
    r
}

/// Encoder input for JCCE: `Ỹ Ỹᴴ / N_b − I`.
pub fn preprocess_jcce(y: &ComplexMatrix, n_b: usize) -> Result<ComplexMatrix> {
    if n_b == 0 {
        return Err(Error::contract("n_b must be at least 1"));
    }
    let n = y.rows();
    let mut out = ComplexMatrix::zeros(n, n);
    let inv = 1.0 / n_b as f64;
    for i in 0..n {
        for j in i..n {
            let s: C64 = y.row(i).iter().zip(y.row(j)).map(|(a, b)| a * b.conj()).sum();
            out[(i, j)] = s * inv;
            out[(j, i)] = (s * inv).conj();
        }
        out[(i, i)] = C64::new(out[(i, i)].re - 1.0, 0.0);
    }
    Ok(out)
}
