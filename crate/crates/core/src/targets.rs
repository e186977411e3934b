//! Analytic sampling targets.
//!
//! [`MixtureOfGaussians::grid25`] is the 25-component 2-D mixture with means
//! on the 5×5 grid `{-4,-2,0,2,4}²`, uniform weights, and a small shared
//! component variance. [`ProductTarget`] wraps it in a product
//! parameterization: the sampled point is `y = W3 W2 W1 x`, and the potential
//! depends on the position `(W1, W2, W3, x)` only through `y`.

use crate::error::{Error, Result};
use crate::nn::ParamTree;
use crate::tensor::{matmul, Tensor};

/// Isotropic 2-D Gaussian mixture with uniform weights.
#[derive(Clone, Debug)]
pub struct MixtureOfGaussians {
    means: Vec<[f64; 2]>,
    variance: f64,
}

impl MixtureOfGaussians {
    pub fn new(means: Vec<[f64; 2]>, variance: f64) -> Result<MixtureOfGaussians> {
        if variance <= 0.0 {
            return Err(Error::Spec("component variance must be positive".into()));
        }
        if means.is_empty() {
            return Err(Error::Spec("mixture needs at least one component".into()));
        }
        Ok(MixtureOfGaussians { means, variance })
    }

    /// The 25 means on `{-4,-2,0,2,4}²`.
    pub fn grid25(variance: f64) -> MixtureOfGaussians {
        let ticks = [-4.0, -2.0, 0.0, 2.0, 4.0];
        let mut means = Vec::with_capacity(25);
        for &x in &ticks {
            for &y in &ticks {
                means.push([x, y]);
            }
        }
        MixtureOfGaussians::new(means, variance).unwrap()
    }

    pub fn means(&self) -> &[[f64; 2]] {
        &self.means
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Log density, evaluated with a log-sum-exp guard.
    pub fn log_prob(&self, p: [f64; 2]) -> f64 {
        let k = self.means.len() as f64;
        let mut best = f64::NEG_INFINITY;
        let exponents: Vec<f64> = self
            .means
            .iter()
            .map(|m| {
                let dx = p[0] - m[0];
                let dy = p[1] - m[1];
                let e = -(dx * dx + dy * dy) / (2.0 * self.variance);
                best = best.max(e);
                e
            })
            .collect();
        let sum: f64 = exponents.iter().map(|e| (e - best).exp()).sum();
        best + sum.ln() - k.ln() - (2.0 * std::f64::consts::PI * self.variance).ln()
    }

    /// Gradient of [`Self::log_prob`]: the responsibility-weighted pull of
    /// each mean.
    pub fn grad_log_prob(&self, p: [f64; 2]) -> [f64; 2] {
        let mut best = f64::NEG_INFINITY;
        let exponents: Vec<f64> = self
            .means
            .iter()
            .map(|m| {
                let dx = p[0] - m[0];
                let dy = p[1] - m[1];
                let e = -(dx * dx + dy * dy) / (2.0 * self.variance);
                best = best.max(e);
                e
            })
            .collect();
        let weights: Vec<f64> = exponents.iter().map(|e| (e - best).exp()).collect();
        let z: f64 = weights.iter().sum();
        let mut g = [0.0, 0.0];
        for (w, m) in weights.iter().zip(&self.means) {
            g[0] += w / z * (m[0] - p[0]) / self.variance;
            g[1] += w / z * (m[1] - p[1]) / self.variance;
        }
        g
    }

    /// Potential `U(p) = -log p(p)` as a position tree over entry `x`.
    pub fn potential(&self, position: &ParamTree) -> Result<f64> {
        let x = entry_point(position, "x")?;
        Ok(-self.log_prob(x))
    }

    /// Gradient of the potential, congruent with the position tree.
    pub fn potential_grad(&self, position: &ParamTree) -> Result<ParamTree> {
        let x = entry_point(position, "x")?;
        let g = self.grad_log_prob(x);
        let mut out = ParamTree::new();
        out.push("x", Tensor::from_slice(&[-g[0], -g[1]]));
        Ok(out)
    }

    /// Position tree holding just the point.
    pub fn position(x: [f64; 2]) -> ParamTree {
        let mut t = ParamTree::new();
        t.push("x", Tensor::from_slice(&x));
        t
    }
}

fn entry_point(tree: &ParamTree, name: &str) -> Result<[f64; 2]> {
    let t = tree
        .get(name)
        .ok_or_else(|| Error::Shape(format!("position tree lacks entry {name}")))?;
    if t.len() != 2 {
        return Err(Error::Shape(format!("{name} must have two coordinates")));
    }
    Ok([t.data()[0], t.data()[1]])
}

/// Product-parameterized wrapper: position `(W1, W2, W3, x)`, emitted point
/// `y = W3 W2 W1 x`.
#[derive(Clone, Debug)]
pub struct ProductTarget {
    pub base: MixtureOfGaussians,
}

impl ProductTarget {
    pub fn new(base: MixtureOfGaussians) -> ProductTarget {
        ProductTarget { base }
    }

    /// Position tree with identity factors and the given base point.
    pub fn position(x: [f64; 2]) -> ParamTree {
        let mut t = ParamTree::new();
        t.push("W1", Tensor::identity(2));
        t.push("W2", Tensor::identity(2));
        t.push("W3", Tensor::identity(2));
        t.push("x", Tensor::from_slice(&x));
        t
    }

    fn factors(position: &ParamTree) -> Result<(Tensor, Tensor, Tensor, Tensor)> {
        let get = |n: &str| {
            position.get(n).cloned().ok_or_else(|| Error::Shape(format!("missing entry {n}")))
        };
        Ok((get("W1")?, get("W2")?, get("W3")?, get("x")?))
    }

    /// Emitted sample `y = W3 W2 W1 x`.
    pub fn emit(&self, position: &ParamTree) -> Result<[f64; 2]> {
        let (w1, w2, w3, x) = Self::factors(position)?;
        let y = matmul(&w3, &matmul(&w2, &matmul(&w1, &x)?)?)?;
        Ok([y.data()[0], y.data()[1]])
    }

    /// `U(position) = -log p(y)`.
    pub fn potential(&self, position: &ParamTree) -> Result<f64> {
        Ok(-self.base.log_prob(self.emit(position)?))
    }

    /// Chain-rule gradients with respect to every factor and the base point.
    pub fn potential_grad(&self, position: &ParamTree) -> Result<ParamTree> {
        let (w1, w2, w3, x) = Self::factors(position)?;
        let w1x = matmul(&w1, &x)?;
        let w21x = matmul(&w2, &w1x)?;
        let y = matmul(&w3, &w21x)?;
        let g = self.base.grad_log_prob([y.data()[0], y.data()[1]]);
        // dU/dy = -∇ log p(y).
        let dy = Tensor::from_slice(&[-g[0], -g[1]]);

        let w32 = matmul(&w3, &w2)?;
        let w321 = matmul(&w32, &w1)?;
        let dx = matmul(&w321.transpose(), &dy)?;
        let d3 = outer(&dy, &w21x);
        let d2 = outer(&matmul(&w3.transpose(), &dy)?, &w1x);
        let d1 = outer(&matmul(&w32.transpose(), &dy)?, &x);

        let mut out = ParamTree::new();
        out.push("W1", d1);
        out.push("W2", d2);
        out.push("W3", d3);
        out.push("x", dx);
        Ok(out)
    }
}

fn outer(u: &Tensor, v: &Tensor) -> Tensor {
    let (m, n) = (u.len(), v.len());
    let mut out = Tensor::zeros(&[m, n]);
    for j in 0..n {
        for i in 0..m {
            out.data_mut()[i + m * j] = u.data()[i] * v.data()[j];
        }
    }
    out
}

/// Number of mixture means with at least one sample within `radius`.
pub fn mode_coverage(samples: &[[f64; 2]], means: &[[f64; 2]], radius: f64) -> usize {
    assert!(radius > 0.0, "radius must be positive");
    means
        .iter()
        .filter(|m| {
            samples.iter().any(|s| {
                let dx = s[0] - m[0];
                let dy = s[1] - m[1];
                (dx * dx + dy * dy).sqrt() <= radius
            })
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mog() -> MixtureOfGaussians {
        MixtureOfGaussians::grid25(0.03)
    }

    #[test]
    fn grid_symmetry() {
        let m = mog();
        for p in [[0.3, 1.7], [-2.2, 0.9], [4.0, -4.0]] {
            let a = m.log_prob(p);
            let b = m.log_prob([-p[0], -p[1]]);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_vanishes_at_modes() {
        let m = mog();
        for mean in m.means().to_vec() {
            let g = m.grad_log_prob(mean);
            let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
            assert!(norm < 1e-8, "grad norm {norm} at {mean:?}");
        }
    }

    #[test]
    fn translation_consistency() {
        let shift = [0.37, -1.21];
        let m = mog();
        let shifted = MixtureOfGaussians::new(
            m.means().iter().map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect(),
            m.variance(),
        )
        .unwrap();
        for p in [[0.0, 0.0], [1.5, -2.5], [-3.0, 3.0]] {
            let a = m.log_prob(p);
            let b = shifted.log_prob([p[0] + shift[0], p[1] + shift[1]]);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn product_with_identity_factors_matches_base() {
        let target = ProductTarget::new(mog());
        let pos = ProductTarget::position([0.7, -0.4]);
        let base_pos = MixtureOfGaussians::position([0.7, -0.4]);
        let u_prod = target.potential(&pos).unwrap();
        let u_base = target.base.potential(&base_pos).unwrap();
        assert!((u_prod - u_base).abs() < 1e-14);
        let g_prod = target.potential_grad(&pos).unwrap();
        let g_base = target.base.potential_grad(&base_pos).unwrap();
        let dx = g_prod.get("x").unwrap().sub(g_base.get("x").unwrap()).unwrap();
        assert!(dx.max_abs() < 1e-14);
    }

    #[test]
    fn scaling_invariance_of_emitted_point() {
        let target = ProductTarget::new(mog());
        let mut pos = ProductTarget::position([1.0, 2.0]);
        let alpha = 3.0;
        let w1 = pos.get("W1").unwrap().scale(alpha);
        *pos.get_mut("W1").unwrap() = w1;
        let x = pos.get("x").unwrap().scale(1.0 / alpha);
        *pos.get_mut("x").unwrap() = x;
        let u = target.potential(&pos).unwrap();
        let u0 = target.potential(&ProductTarget::position([1.0, 2.0])).unwrap();
        assert!((u - u0).abs() < 1e-12);
    }

    #[test]
    fn coverage_counts() {
        let m = mog();
        let all: Vec<[f64; 2]> = m.means().to_vec();
        assert_eq!(mode_coverage(&all, m.means(), 0.5), 25);
        assert_eq!(mode_coverage(&[], m.means(), 0.5), 0);
        let clustered = vec![[0.01, 0.0], [0.0, 0.02], [-0.01, 0.01]];
        assert_eq!(mode_coverage(&clustered, m.means(), 0.5), 1);
    }
}
