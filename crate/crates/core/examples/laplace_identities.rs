// Monte-Carlo checks of the complex-Laplace moments and the implicit Gamma
// reparameterization gradient.

use ris_vi::numerics::C64;
use ris_vi::seeds;
use ris_vi::vardist::{gamma_quantile, implicit_draw, ComplexLaplace, GammaUnitScale};

pub struct Check {
    pub b: f64,
    /// Closed-form and Monte-Carlo entropy.
    pub entropy: (f64, f64),
    /// `6b²` and the Monte-Carlo mean of `|z − m|²`.
    pub variance: (f64, f64),
}

pub fn run(draws: usize) -> ris_vi::Result<Vec<Check>> {
    let mut out = Vec::new();
    for (i, b) in [0.1, 1.0, 10.0].into_iter().enumerate() {
        let dist = ComplexLaplace::new(C64::new(0.5, -1.0), b)?;
        let mut rng = seeds::stream(17, &[i as u64]);
        let (mut h, mut v) = (0.0, 0.0);
        for _ in 0..draws {
            let z = dist.sample(&mut rng).z;
            h -= dist.logpdf(z);
            v += (z - dist.m).norm_sqr();
        }
        let n = draws as f64;
        out.push(Check { b, entropy: (dist.entropy(), h / n), variance: (dist.variance(), v / n) });
    }
    Ok(out)
}

/// Pathwise `dx/dk` against a finite difference of the quantile at a fixed
/// CDF level.
pub fn gamma_gradient(k: f64) -> ris_vi::Result<(f64, f64)> {
    let mut rng = seeds::stream(5, &[]);
    let draw = GammaUnitScale::new(k)?.sample_implicit(&mut rng);
    let eps = 1e-5 * k.max(1.0);
    let fd = (gamma_quantile(k + eps, draw.u) - gamma_quantile(k - eps, draw.u)) / (2.0 * eps);
    Ok((implicit_draw(k, draw.x).dxdk, fd))
}

#[allow(dead_code)]
fn main() -> ris_vi::Result<()> {
    for c in run(1_000_000)? {
        println!(
            "b = {:>4}: entropy {:.4} vs MC {:.4}, E|z-m|² {:.4} vs MC {:.4}",
            c.b, c.entropy.0, c.entropy.1, c.variance.0, c.variance.1
        );
    }
    for k in [0.5, 1.0, 3.0] {
        let (path, fd) = gamma_gradient(k)?;
        println!("Gamma({k}): dx/dk pathwise {path:.6}, finite difference {fd:.6}");
    }
    Ok(())
}
