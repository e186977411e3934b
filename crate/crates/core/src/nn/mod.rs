//! Model definition: layer specs, expanded parameterizations, forward pass,
//! analytic reverse-mode gradients, and merge rules.
//!
//! An expanded (EP) layer factors its weight as
//! `W = P_c ⋯ P_1 · V · Q_1 ⋯ Q_d` with square expanded matrices `P_i`
//! (out × out) and `Q_j` (in × in), and its bias as `b = P_c ⋯ P_1 · a`.
//! Merging the factors recovers a standard (SP) layer, so inference cost is
//! unchanged; only the sampling dynamics differ.

mod tree;

pub use tree::{parse_name, ParamTree, Role};

use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_chain, Tensor};
use crate::tensor::RngStream;

/// Element-wise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Swish,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Swish => x * sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// How a layer's weight matrix is parameterized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamMode {
    /// Plain `W = V`.
    Standard,
    /// Dense expanded matrices, `c` on the left and `d` on the right.
    Expanded { c: usize, d: usize },
    /// Expanded matrices materialized as `diag(D) + L1ᵀ L2` with
    /// `L1, L2 ∈ R^{rank × width}`.
    LowRank { c: usize, d: usize, rank: usize },
}

impl ParamMode {
    pub fn counts(self) -> (usize, usize) {
        match self {
            ParamMode::Standard => (0, 0),
            ParamMode::Expanded { c, d } | ParamMode::LowRank { c, d, .. } => (c, d),
        }
    }
}

/// Per-layer description.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub mode: ParamMode,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, mode: ParamMode) -> LayerSpec {
        LayerSpec { in_dim, out_dim, activation, mode }
    }

    fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Spec("zero-width layer".into()));
        }
        if let ParamMode::LowRank { c, d, rank } = self.mode {
            if rank == 0 {
                return Err(Error::Spec("low-rank expansion needs rank >= 1".into()));
            }
            if c > 0 && rank >= self.out_dim {
                return Err(Error::Spec(format!(
                    "low-rank rank {rank} must be < width {}",
                    self.out_dim
                )));
            }
            if d > 0 && rank >= self.in_dim {
                return Err(Error::Spec(format!(
                    "low-rank rank {rank} must be < width {}",
                    self.in_dim
                )));
            }
        }
        Ok(())
    }
}

/// Initialization of the expanded matrices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    /// `P_i = Q_j = I`: merged weights equal `V` at initialization, so the SP
    /// and EP initial distributions coincide.
    Identity,
    /// Near-identity `I + eps * N(0,1)` per entry.
    Balanced { eps: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Identity
    }
}

/// A multilayer perceptron: hidden layers apply their activation, the final
/// layer is affine.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<LayerSpec>,
}

impl Mlp {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Mlp> {
        if layers.is_empty() {
            return Err(Error::Spec("a model needs at least one layer".into()));
        }
        for spec in &layers {
            spec.validate()?;
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Spec(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(Mlp { layers })
    }

    /// Builds a uniform-mode MLP from a width chain `[in, h1, ..., out]`.
    pub fn from_dims(dims: &[usize], activation: Activation, mode: ParamMode) -> Result<Mlp> {
        if dims.len() < 2 {
            return Err(Error::Spec("need at least input and output widths".into()));
        }
        let layers = dims
            .windows(2)
            .map(|w| LayerSpec::new(w[0], w[1], activation, mode))
            .collect();
        Mlp::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Initial position tree: He-normal `V`, identity (or near-identity)
    /// expanded matrices, zero biases. Entry order per layer is
    /// `P_1 .. P_c, V, Q_1 .. Q_d, a`, and RNG draws follow that order.
    pub fn init_params(&self, rng: &mut RngStream, scheme: InitScheme) -> ParamTree {
        let mut tree = ParamTree::new();
        for (l, spec) in self.layers.iter().enumerate() {
            let (c, d) = spec.mode.counts();
            for i in 1..=c {
                push_expanded(&mut tree, &format!("l{l}.P{i}"), spec.out_dim, spec.mode, scheme, rng);
            }
            let std = (2.0 / spec.in_dim as f64).sqrt();
            let v = rng.gaussian(&[spec.out_dim, spec.in_dim]).scale(std);
            tree.push(format!("l{l}.V"), v);
            for j in 1..=d {
                push_expanded(&mut tree, &format!("l{l}.Q{j}"), spec.in_dim, spec.mode, scheme, rng);
            }
            tree.push(format!("l{l}.a"), Tensor::zeros(&[spec.out_dim]));
        }
        tree
    }

    /// Materialized `(W, b)` for one layer, merging factors if needed.
    fn layer_weights(&self, params: &ParamTree, l: usize) -> Result<(Tensor, Tensor)> {
        // Merged trees short-circuit: they carry W/b directly.
        if let Some(w) = params.get(&format!("l{l}.W")) {
            let b = params
                .get(&format!("l{l}.b"))
                .ok_or_else(|| Error::Shape(format!("layer {l} has W but no b")))?;
            return Ok((w.clone(), b.clone()));
        }
        let f = self.layer_factors(params, l)?;
        Ok((f.merged_weight()?, f.merged_bias()?))
    }

    fn layer_factors(&self, params: &ParamTree, l: usize) -> Result<LayerFactors> {
        let spec = &self.layers[l];
        let (c, d) = spec.mode.counts();
        let missing = |n: &str| Error::Shape(format!("missing tensor {n}"));
        let mut ps = Vec::with_capacity(c);
        for i in 1..=c {
            ps.push(materialize(params, &format!("l{l}.P{i}"), spec.mode)?);
        }
        let vname = format!("l{l}.V");
        let v = params.get(&vname).ok_or_else(|| missing(&vname))?.clone();
        let mut qs = Vec::with_capacity(d);
        for j in 1..=d {
            qs.push(materialize(params, &format!("l{l}.Q{j}"), spec.mode)?);
        }
        let aname = format!("l{l}.a");
        let a = params.get(&aname).ok_or_else(|| missing(&aname))?.clone();
        Ok(LayerFactors { ps, v, qs, a })
    }

    /// Forward pass over a `[batch × in]` design matrix.
    pub fn forward(&self, params: &ParamTree, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 || x.cols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input {:?} does not match model input width {}",
                x.dims(),
                self.in_dim()
            )));
        }
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (l, spec) in self.layers.iter().enumerate() {
            let (w, b) = self.layer_weights(params, l)?;
            let mut z = affine(&h, &w, &b)?;
            if l < last {
                z = z.map(|v| spec.activation.apply(v));
            }
            h = z;
        }
        Ok(h)
    }

    /// Value and analytic gradients of the loss, congruent with `params`.
    pub fn backward(
        &self,
        params: &ParamTree,
        x: &Tensor,
        labels: &[usize],
        loss: Loss<'_>,
    ) -> Result<(f64, ParamTree)> {
        let n = x.rows();
        if n == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        let last = self.layers.len() - 1;

        // Forward with caches.
        let mut factors = Vec::with_capacity(self.layers.len());
        let mut pre_acts = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (l, spec) in self.layers.iter().enumerate() {
            let f = self.layer_factors(params, l)?;
            let z = affine(acts.last().unwrap(), &f.merged_weight()?, &f.merged_bias()?)?;
            let h = if l < last { z.map(|v| spec.activation.apply(v)) } else { z.clone() };
            factors.push(f);
            pre_acts.push(z);
            acts.push(h);
        }

        let logits = acts.last().unwrap();
        let (value, mut dz) = match loss {
            Loss::CrossEntropy => cross_entropy(logits, labels)?,
            Loss::Custom(f) => f.value_and_grad(logits, labels),
        };
        if dz.dims() != logits.dims() {
            return Err(Error::Shape("loss gradient shape mismatch".into()));
        }

        // Backward sweep; gradients are collected per layer then reassembled
        // in entry order.
        let mut grads: Vec<ParamTree> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let spec = &self.layers[l];
            let h_prev = &acts[l];
            // dW = dzᵀ h_prev, db = column sums of dz.
            let dw = matmul(&dz.transpose(), h_prev)?;
            let mut db = Tensor::zeros(&[spec.out_dim]);
            for j in 0..spec.out_dim {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += dz.at(i, j);
                }
                db.data_mut()[j] = acc;
            }
            grads.push(factors[l].distribute(l, spec, params, &dw, &db)?);
            if l > 0 {
                let (w, _) = (factors[l].merged_weight()?, ());
                let dh = matmul(&dz, &w)?;
                let zs = &pre_acts[l - 1];
                let act = self.layers[l - 1].activation;
                dz = dh.zip_map(zs, |g, z| g * act.derivative(z))?;
            }
        }
        grads.reverse();
        let mut out = ParamTree::new();
        for g in grads {
            for (name, t) in g.iter() {
                out.push(name.to_string(), t.clone());
            }
        }
        debug_assert!(out.congruent(params));
        Ok((value, out))
    }

    /// Collapses every layer to `(W, b)`, producing an inference-ready tree
    /// with `l{i}.W` / `l{i}.b` entries.
    pub fn merge_tree(&self, params: &ParamTree) -> Result<ParamTree> {
        let mut out = ParamTree::new();
        for l in 0..self.layers.len() {
            let (w, b) = self.layer_weights(params, l)?;
            out.push(format!("l{l}.W"), w);
            out.push(format!("l{l}.b"), b);
        }
        Ok(out)
    }
}

/// `h · Wᵀ + b` broadcast over rows.
fn affine(h: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut z = matmul(h, &w.transpose())?;
    let (n, k) = (z.rows(), z.cols());
    if b.len() != k {
        return Err(Error::Shape(format!("bias length {} vs width {k}", b.len())));
    }
    for j in 0..k {
        let bj = b.data()[j];
        for i in 0..n {
            let v = z.at(i, j) + bj;
            z.set_at(i, j, v);
        }
    }
    Ok(z)
}

fn push_expanded(
    tree: &mut ParamTree,
    name: &str,
    width: usize,
    mode: ParamMode,
    scheme: InitScheme,
    rng: &mut RngStream,
) {
    match mode {
        ParamMode::LowRank { rank, .. } => match scheme {
            InitScheme::Identity => {
                tree.push(format!("{name}.d"), Tensor::filled(&[width], 1.0));
                tree.push(format!("{name}.l1"), Tensor::zeros(&[rank, width]));
                tree.push(format!("{name}.l2"), Tensor::zeros(&[rank, width]));
            }
            InitScheme::Balanced { eps } => {
                let d = rng.gaussian(&[width]).scale(eps).map(|v| 1.0 + v);
                tree.push(format!("{name}.d"), d);
                tree.push(format!("{name}.l1"), rng.gaussian(&[rank, width]).scale(eps));
                tree.push(format!("{name}.l2"), rng.gaussian(&[rank, width]).scale(eps));
            }
        },
        _ => {
            let m = match scheme {
                InitScheme::Identity => Tensor::identity(width),
                InitScheme::Balanced { eps } => {
                    let mut m = rng.gaussian(&[width, width]).scale(eps);
                    for i in 0..width {
                        let v = m.at(i, i) + 1.0;
                        m.set_at(i, i, v);
                    }
                    m
                }
            };
            tree.push(name.to_string(), m);
        }
    }
}

/// Materializes one expanded matrix, assembling `diag(D) + L1ᵀ L2` for the
/// low-rank mode.
fn materialize(params: &ParamTree, name: &str, mode: ParamMode) -> Result<Tensor> {
    let missing = |n: &str| Error::Shape(format!("missing tensor {n}"));
    match mode {
        ParamMode::LowRank { .. } => {
            let d = params.get(&format!("{name}.d")).ok_or_else(|| missing(name))?;
            let l1 = params.get(&format!("{name}.l1")).ok_or_else(|| missing(name))?;
            let l2 = params.get(&format!("{name}.l2")).ok_or_else(|| missing(name))?;
            let mut m = matmul(&l1.transpose(), l2)?;
            for i in 0..d.len() {
                let v = m.at(i, i) + d.data()[i];
                m.set_at(i, i, v);
            }
            Ok(m)
        }
        _ => Ok(params.get(name).ok_or_else(|| missing(name))?.clone()),
    }
}

/// A layer's materialized factors.
struct LayerFactors {
    ps: Vec<Tensor>, // P_1 .. P_c
    v: Tensor,
    qs: Vec<Tensor>, // Q_1 .. Q_d
    a: Tensor,
}

impl LayerFactors {
    /// `P_c ⋯ P_1` (identity when c = 0).
    fn left_product(&self) -> Result<Tensor> {
        product_desc(&self.ps, self.v.rows())
    }

    /// `Q_1 ⋯ Q_d` (identity when d = 0).
    fn right_product(&self) -> Result<Tensor> {
        product_asc(&self.qs, self.v.cols())
    }

    fn merged_weight(&self) -> Result<Tensor> {
        merge_linear(&self.ps, &self.v, &self.qs)
    }

    fn merged_bias(&self) -> Result<Tensor> {
        matmul(&self.left_product()?, &self.a)
    }

    /// Splits `(dW, db)` into gradients for every factor of this layer,
    /// applying the chain rule through the matrix products.
    fn distribute(
        &self,
        l: usize,
        spec: &LayerSpec,
        params: &ParamTree,
        dw: &Tensor,
        db: &Tensor,
    ) -> Result<ParamTree> {
        let c = self.ps.len();
        let d = self.qs.len();
        let a_mat = self.left_product()?;
        let b_mat = self.right_product()?;
        let mut out = ParamTree::new();

        for i in 1..=c {
            // W = [P_c .. P_{i+1}] P_i [P_{i-1} .. P_1 V B]; the bias path
            // b = P_{1:c} a contributes through the same left factors.
            let left = product_desc(&self.ps[i..], spec.out_dim)?;
            let right_w = matmul(&matmul(&product_desc(&self.ps[..i - 1], spec.out_dim)?, &self.v)?, &b_mat)?;
            let right_b = matmul(&product_desc(&self.ps[..i - 1], spec.out_dim)?, &self.a)?;
            let mut dp = matmul(&matmul(&left.transpose(), dw)?, &right_w.transpose())?;
            let db_left = matmul(&left.transpose(), db)?;
            dp = dp.add(&outer(&db_left, &right_b))?;
            push_expanded_grad(&mut out, params, &format!("l{l}.P{i}"), spec.mode, dp)?;
        }

        let dv = matmul(&matmul(&a_mat.transpose(), dw)?, &b_mat.transpose())?;
        out.push(format!("l{l}.V"), dv);

        for j in 1..=d {
            // W = [A V Q_1 .. Q_{j-1}] Q_j [Q_{j+1} .. Q_d].
            let left = matmul(&matmul(&a_mat, &self.v)?, &product_asc(&self.qs[..j - 1], spec.in_dim)?)?;
            let right = product_asc(&self.qs[j..], spec.in_dim)?;
            let dq = matmul(&matmul(&left.transpose(), dw)?, &right.transpose())?;
            push_expanded_grad(&mut out, params, &format!("l{l}.Q{j}"), spec.mode, dq)?;
        }

        let da = matmul(&a_mat.transpose(), db)?;
        out.push(format!("l{l}.a"), da);
        Ok(out)
    }
}

/// Gradient entry for an expanded matrix; low-rank mode splits the dense
/// gradient into its `d` / `l1` / `l2` pieces.
fn push_expanded_grad(
    out: &mut ParamTree,
    params: &ParamTree,
    name: &str,
    mode: ParamMode,
    dm: Tensor,
) -> Result<()> {
    match mode {
        ParamMode::LowRank { .. } => {
            let l1 = params.get(&format!("{name}.l1")).unwrap();
            let l2 = params.get(&format!("{name}.l2")).unwrap();
            let w = dm.rows();
            let mut dd = Tensor::zeros(&[w]);
            for i in 0..w {
                dd.data_mut()[i] = dm.at(i, i);
            }
            // P = diag(D) + L1ᵀ L2  =>  dL1 = L2 dPᵀ, dL2 = L1 dP.
            let dl1 = matmul(l2, &dm.transpose())?;
            let dl2 = matmul(l1, &dm)?;
            out.push(format!("{name}.d"), dd);
            out.push(format!("{name}.l1"), dl1);
            out.push(format!("{name}.l2"), dl2);
        }
        _ => out.push(name.to_string(), dm),
    }
    Ok(())
}

/// Product of `factors[k-1] ⋯ factors[0]` (descending index), identity for an
/// empty slice.
fn product_desc(factors: &[Tensor], width: usize) -> Result<Tensor> {
    if factors.is_empty() {
        return Ok(Tensor::identity(width));
    }
    let refs: Vec<&Tensor> = factors.iter().rev().collect();
    matmul_chain(&refs)
}

/// Product of `factors[0] ⋯ factors[k-1]` (ascending index), identity for an
/// empty slice.
fn product_asc(factors: &[Tensor], width: usize) -> Result<Tensor> {
    if factors.is_empty() {
        return Ok(Tensor::identity(width));
    }
    let refs: Vec<&Tensor> = factors.iter().collect();
    matmul_chain(&refs)
}

/// Outer product `u vᵀ` of two rank-1 tensors.
fn outer(u: &Tensor, v: &Tensor) -> Tensor {
    let m = u.len();
    let n = v.len();
    let mut out = Tensor::zeros(&[m, n]);
    for j in 0..n {
        for i in 0..m {
            out.data_mut()[i + m * j] = u.data()[i] * v.data()[j];
        }
    }
    out
}

/// Loss driving [`Mlp::backward`].
pub enum Loss<'a> {
    /// Mean softmax cross-entropy over the batch.
    CrossEntropy,
    /// Arbitrary scalar function of the logits.
    Custom(&'a dyn OutputLoss),
}

/// Scalar loss over logits plus its gradient, for custom potentials.
pub trait OutputLoss {
    fn value_and_grad(&self, logits: &Tensor, labels: &[usize]) -> (f64, Tensor);
}

/// Row-wise softmax probabilities.
pub fn softmax(logits: &Tensor) -> Tensor {
    let (n, k) = (logits.rows(), logits.cols());
    let mut out = Tensor::zeros(&[n, k]);
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for j in 0..k {
            max = max.max(logits.at(i, j));
        }
        let mut z = 0.0;
        for j in 0..k {
            z += (logits.at(i, j) - max).exp();
        }
        for j in 0..k {
            out.set_at(i, j, (logits.at(i, j) - max).exp() / z);
        }
    }
    out
}

/// Mean cross-entropy and its logit gradient `(softmax − onehot)/n`.
fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, k) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    let probs = softmax(logits);
    let mut value = 0.0;
    let mut grad = probs.clone();
    for i in 0..n {
        let y = labels[i];
        if y >= k {
            return Err(Error::Input(format!("label {y} out of range for {k} classes")));
        }
        value -= probs.at(i, y).ln();
        let v = grad.at(i, y) - 1.0;
        grad.set_at(i, y, v);
    }
    Ok((value / n as f64, grad.scale(1.0 / n as f64)))
}

/// Merged linear weight `P_c ⋯ P_1 · V · Q_1 ⋯ Q_d`.
pub fn merge_linear(ps: &[Tensor], v: &Tensor, qs: &[Tensor]) -> Result<Tensor> {
    let a = product_desc(ps, v.rows())?;
    let b = product_asc(qs, v.cols())?;
    matmul(&matmul(&a, v)?, &b)
}

/// Merged linear bias `P_c ⋯ P_1 · a`.
pub fn merge_bias(ps: &[Tensor], a: &Tensor) -> Result<Tensor> {
    matmul(&product_desc(ps, a.len())?, a)
}

/// Merged convolution kernel: `W_abij = Σ_{u,l} P_iu · V_abul · Q_lj` with
/// `P` and `Q` acting on the channel axes only.
pub fn merge_conv(p: &Tensor, v: &Tensor, q: &Tensor) -> Result<Tensor> {
    let [k1, k2, co, ci] = conv_dims(v)?;
    check_square(p, co, "P")?;
    check_square(q, ci, "Q")?;
    let mut w = Tensor::zeros(&[k1, k2, co, ci]);
    for j in 0..ci {
        for i in 0..co {
            for b in 0..k2 {
                for a in 0..k1 {
                    let mut acc = 0.0;
                    for u in 0..co {
                        let piu = p.at(i, u);
                        if piu == 0.0 {
                            continue;
                        }
                        for l in 0..ci {
                            acc += piu * v.get(&[a, b, u, l]) * q.at(l, j);
                        }
                    }
                    w.set(&[a, b, i, j], acc);
                }
            }
        }
    }
    Ok(w)
}

/// Gradients of [`merge_conv`] given the upstream kernel gradient.
pub fn merge_conv_backward(
    p: &Tensor,
    v: &Tensor,
    q: &Tensor,
    dw: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [k1, k2, co, ci] = conv_dims(v)?;
    if dw.dims() != v.dims() {
        return Err(Error::Shape("kernel gradient shape mismatch".into()));
    }
    let mut dp = Tensor::zeros(&[co, co]);
    let mut dv = Tensor::zeros(&[k1, k2, co, ci]);
    let mut dq = Tensor::zeros(&[ci, ci]);
    for a in 0..k1 {
        for b in 0..k2 {
            for i in 0..co {
                for j in 0..ci {
                    let g = dw.get(&[a, b, i, j]);
                    if g == 0.0 {
                        continue;
                    }
                    for u in 0..co {
                        for l in 0..ci {
                            let t = v.get(&[a, b, u, l]);
                            dp.set_at(i, u, dp.at(i, u) + g * t * q.at(l, j));
                            dq.set_at(l, j, dq.at(l, j) + g * p.at(i, u) * t);
                            dv.set(&[a, b, u, l], dv.get(&[a, b, u, l]) + g * p.at(i, u) * q.at(l, j));
                        }
                    }
                }
            }
        }
    }
    Ok((dp, dv, dq))
}

fn conv_dims(v: &Tensor) -> Result<[usize; 4]> {
    if v.rank() != 4 {
        return Err(Error::Shape(format!("conv kernel must be rank 4, got {}", v.rank())));
    }
    let d = v.dims();
    Ok([d[0], d[1], d[2], d[3]])
}

fn check_square(m: &Tensor, n: usize, what: &str) -> Result<()> {
    if m.rank() != 2 || m.rows() != n || m.cols() != n {
        return Err(Error::Shape(format!("{what} must be {n}×{n}, got {:?}", m.dims())));
    }
    Ok(())
}

/// Merged normalization vector: `out_i = Σ_{u,l} P_iu · Q_ul · s_l` for
/// `i < len(s)`, with `P`, `Q` square of width `>= len(s)`.
pub fn merge_frn(p: &Tensor, q: &Tensor, s: &Tensor) -> Result<Tensor> {
    let co = s.len();
    let w = p.rows();
    if p.rank() != 2 || p.rows() != p.cols() || q.rank() != 2 || q.rows() != q.cols() {
        return Err(Error::Shape("P and Q must be square".into()));
    }
    if q.rows() != w || w < co {
        return Err(Error::Shape(format!("P/Q width {w} incompatible with vector length {co}")));
    }
    let mut out = Tensor::zeros(&[co]);
    for i in 0..co {
        let mut acc = 0.0;
        for u in 0..w {
            let mut inner = 0.0;
            for l in 0..co {
                inner += q.at(u, l) * s.data()[l];
            }
            acc += p.at(i, u) * inner;
        }
        out.data_mut()[i] = acc;
    }
    Ok(out)
}

/// Gradients of [`merge_frn`] given the upstream gradient of the merged
/// vector.
pub fn merge_frn_backward(
    p: &Tensor,
    q: &Tensor,
    s: &Tensor,
    dout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let co = s.len();
    let w = p.rows();
    if dout.len() != co {
        return Err(Error::Shape("merged-vector gradient length mismatch".into()));
    }
    let mut dp = Tensor::zeros(&[w, w]);
    let mut dq = Tensor::zeros(&[w, w]);
    let mut ds = Tensor::zeros(&[co]);
    for i in 0..co {
        let g = dout.data()[i];
        for u in 0..w {
            let mut qs = 0.0;
            for l in 0..co {
                qs += q.at(u, l) * s.data()[l];
                dq.set_at(u, l, dq.at(u, l) + g * p.at(i, u) * s.data()[l]);
                ds.data_mut()[l] += g * p.at(i, u) * q.at(u, l);
            }
            dp.set_at(i, u, dp.at(i, u) + g * qs);
        }
    }
    Ok((dp, dq, ds))
}
