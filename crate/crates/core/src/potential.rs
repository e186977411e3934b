//! Potential energy `U` and its minibatch estimator `Ũ`.
//!
//! `U(θ) = -log p(D|θ) - log p(θ)` with a zero-mean Gaussian prior of
//! variance `σ²` over every tensor in the tree (each expanded factor is
//! penalized individually; the merged matrix never is) and a categorical
//! likelihood. The minibatch form rescales the log-likelihood by `|D|/|B|`.
//! Temperature never enters `U`; samplers scale their injected noise instead.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Loss, Mlp, ParamTree};

/// Defines `U` and `Ũ` for a model/dataset pair.
#[derive(Clone, Copy, Debug)]
pub struct PotentialSpec {
    /// Prior variance `σ² > 0`.
    pub sigma2: f64,
    /// Posterior temperature `T > 0`; read by samplers, not by `U`.
    pub temperature: f64,
    /// Full dataset size `|D|`.
    pub dataset_size: usize,
    /// Minibatch size `|B| <= |D|`.
    pub batch_size: usize,
}

impl PotentialSpec {
    pub fn new(sigma2: f64, temperature: f64, dataset_size: usize, batch_size: usize) -> Result<Self> {
        if sigma2 <= 0.0 {
            return Err(Error::Spec("prior variance must be positive".into()));
        }
        if temperature <= 0.0 {
            return Err(Error::Spec("temperature must be positive".into()));
        }
        if batch_size == 0 || batch_size > dataset_size {
            return Err(Error::Spec(format!(
                "batch size {batch_size} incompatible with dataset size {dataset_size}"
            )));
        }
        Ok(PotentialSpec { sigma2, temperature, dataset_size, batch_size })
    }

    /// Likelihood rescaling factor `|D|/|B|`.
    pub fn scale(&self) -> f64 {
        self.dataset_size as f64 / self.batch_size as f64
    }
}

/// Gaussian prior energy `Σ ‖θ‖² / (2σ²)`, normalization dropped.
pub fn prior_energy(params: &ParamTree, sigma2: f64) -> f64 {
    let sq: f64 = params.iter().map(|(_, t)| t.data().iter().map(|v| v * v).sum::<f64>()).sum();
    sq / (2.0 * sigma2)
}

/// Gradient of [`prior_energy`]: `θ / σ²`.
pub fn prior_gradient(params: &ParamTree, sigma2: f64) -> ParamTree {
    params.scale(1.0 / sigma2)
}

/// Minibatch potential `Ũ(θ) = (|D|/|B|) Σ_B ce_i + prior`.
pub fn stochastic_potential(
    params: &ParamTree,
    model: &Mlp,
    batch: &Dataset,
    spec: &PotentialSpec,
) -> Result<f64> {
    Ok(potential_value_and_gradient(params, model, batch, spec)?.0)
}

/// Gradient of `Ũ` congruent with `params`.
pub fn potential_gradient(
    params: &ParamTree,
    model: &Mlp,
    batch: &Dataset,
    spec: &PotentialSpec,
) -> Result<ParamTree> {
    Ok(potential_value_and_gradient(params, model, batch, spec)?.1)
}

/// `Ũ` and `∇Ũ` in one pass.
pub fn potential_value_and_gradient(
    params: &ParamTree,
    model: &Mlp,
    batch: &Dataset,
    spec: &PotentialSpec,
) -> Result<(f64, ParamTree)> {
    if batch.len() == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    // backward returns the mean CE, so |D| * mean == (|D|/|B|) * sum.
    let scale = spec.dataset_size as f64;
    let (mean_ce, grads) = model.backward(params, batch.features(), batch.labels(), Loss::CrossEntropy)?;
    let mut grad = grads.scale(scale);
    grad.axpy(1.0, &prior_gradient(params, spec.sigma2))?;
    let value = scale * mean_ce + prior_energy(params, spec.sigma2);
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::nn::{Activation, ParamMode};
    use crate::tensor::{RngStream, Tensor};

    #[test]
    fn prior_trivial_values() {
        let mut t = ParamTree::new();
        t.push("l0.V", Tensor::zeros(&[3, 3]));
        assert_eq!(prior_energy(&t, 1.0), 0.0);
        let mut s = ParamTree::new();
        s.push("l0.V", Tensor::from_slice(&[2.0]));
        assert_eq!(prior_energy(&s, 1.0), 2.0);
    }

    #[test]
    fn prior_matches_elementwise_sum() {
        let mut rng = RngStream::new(5);
        let mut t = ParamTree::new();
        t.push("l0.V", rng.gaussian(&[4, 3]));
        t.push("l0.a", rng.gaussian(&[4]));
        let sigma2 = 0.7;
        let oracle: f64 = t
            .iter()
            .flat_map(|(_, x)| x.data().iter())
            .map(|v| v * v / (2.0 * sigma2))
            .sum();
        assert!((prior_energy(&t, sigma2) - oracle).abs() < 1e-12);
    }

    #[test]
    fn prior_order_invariant() {
        let mut rng = RngStream::new(6);
        let a = rng.gaussian(&[3]);
        let b = rng.gaussian(&[2, 2]);
        let mut t1 = ParamTree::new();
        t1.push("l0.V", b.clone());
        t1.push("l0.a", a.clone());
        let mut t2 = ParamTree::new();
        t2.push("l0.a", a);
        t2.push("l0.V", b);
        assert_eq!(prior_energy(&t1, 0.3), prior_energy(&t2, 0.3));
    }

    #[test]
    fn uniform_logits_give_log_k() {
        // Zero-parameter model produces uniform logits: likelihood term is
        // |D| ln K.
        let k = 4;
        let model = Mlp::from_dims(&[2, k], Activation::Identity, ParamMode::Standard).unwrap();
        let mut params = ParamTree::new();
        params.push("l0.V", Tensor::zeros(&[k, 2]));
        params.push("l0.a", Tensor::zeros(&[k]));
        let mut rng = RngStream::new(1);
        let features = rng.gaussian(&[8, 2]);
        let labels: Vec<usize> = (0..8).map(|i| i % k).collect();
        let data = Dataset::new(features, labels, k).unwrap();
        let spec = PotentialSpec::new(1.0, 1.0, 8, 8).unwrap();
        let u = stochastic_potential(&params, &model, &data, &spec).unwrap();
        assert!((u - 8.0 * (k as f64).ln()).abs() < 1e-10);
    }

    #[test]
    fn half_batches_average_to_full_potential() {
        let model = Mlp::from_dims(&[2, 3], Activation::Identity, ParamMode::Standard).unwrap();
        let mut rng = RngStream::new(2);
        let params = model.init_params(&mut rng, Default::default());
        let features = rng.gaussian(&[6, 2]);
        let labels = vec![0, 1, 2, 0, 1, 2];
        let data = Dataset::new(features, labels, 3).unwrap();
        let full_spec = PotentialSpec::new(0.5, 1.0, 6, 6).unwrap();
        let half_spec = PotentialSpec::new(0.5, 1.0, 6, 3).unwrap();
        let u_full = stochastic_potential(&params, &model, &data, &full_spec).unwrap();
        let first = data.subset(&[0, 1, 2]);
        let second = data.subset(&[3, 4, 5]);
        let u1 = stochastic_potential(&params, &model, &first, &half_spec).unwrap();
        let u2 = stochastic_potential(&params, &model, &second, &half_spec).unwrap();
        // Ũ averaged over a partition equals U; the prior appears in both
        // halves, hence the algebra below.
        let avg_likelihood = (u1 + u2) / 2.0 - prior_energy(&params, 0.5);
        let full_likelihood = u_full - prior_energy(&params, 0.5);
        assert!((avg_likelihood - full_likelihood).abs() < 1e-10);
    }

    #[test]
    fn gradient_scaling_matches_scalar_multiplication() {
        let model = Mlp::from_dims(&[2, 2], Activation::Identity, ParamMode::Standard).unwrap();
        let mut rng = RngStream::new(3);
        let params = model.init_params(&mut rng, Default::default());
        let features = rng.gaussian(&[4, 2]);
        let data = Dataset::new(features, vec![0, 1, 0, 1], 2).unwrap();
        // Same batch, two dataset sizes: likelihood gradients scale by the
        // ratio.
        let s1 = PotentialSpec::new(1e12, 1.0, 4, 4).unwrap();
        let s2 = PotentialSpec::new(1e12, 1.0, 8, 4).unwrap();
        let g1 = potential_gradient(&params, &model, &data, &s1).unwrap();
        let g2 = potential_gradient(&params, &model, &data, &s2).unwrap();
        // With an (effectively) flat prior, g2 = 2 g1.
        let diff = g2.sub(&g1.scale(2.0)).unwrap();
        let rel = diff.norm() / g2.norm();
        assert!(rel < 1e-9, "rel {rel}");
    }

    #[test]
    fn empty_batch_rejected() {
        let model = Mlp::from_dims(&[2, 2], Activation::Identity, ParamMode::Standard).unwrap();
        let mut rng = RngStream::new(4);
        let params = model.init_params(&mut rng, Default::default());
        let data = Dataset::new(Tensor::zeros(&[0, 2]), vec![], 2).unwrap();
        let spec = PotentialSpec::new(1.0, 1.0, 4, 4).unwrap();
        assert!(stochastic_potential(&params, &model, &data, &spec).is_err());
    }
}
