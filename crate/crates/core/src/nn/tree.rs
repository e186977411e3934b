//! Ordered collections of named tensors.
//!
//! A [`ParamTree`] holds a model's position (or momentum, or gradient)
//! variables. Entry names encode the layer index and the tensor's role, e.g.
//! `l0.P1`, `l0.V`, `l0.Q2`, `l0.a` for expanded layers, `l0.W`/`l0.b` for
//! merged ones, and `l0.P1.d` / `l0.P1.l1` / `l0.P1.l2` for the pieces of a
//! low-rank expanded matrix.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which position a tensor occupies inside a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// Left expanded matrix `P_i` (1-based), or a piece of it.
    ExpandedLeft(usize),
    /// Base matrix `V`.
    Base,
    /// Right expanded matrix `Q_j` (1-based), or a piece of it.
    ExpandedRight(usize),
    /// Bias vector `a`.
    Bias,
    /// Merged weight matrix `W`.
    MergedWeight,
    /// Merged bias vector `b`.
    MergedBias,
}

impl Role {
    /// True for the expanded matrices `P_i` / `Q_j` and their low-rank pieces.
    pub fn is_expanded(self) -> bool {
        matches!(self, Role::ExpandedLeft(_) | Role::ExpandedRight(_))
    }
}

/// Splits an entry name into its layer index and role.
pub fn parse_name(name: &str) -> Option<(usize, Role)> {
    let rest = name.strip_prefix('l')?;
    let (layer, role) = rest.split_once('.')?;
    let layer: usize = layer.parse().ok()?;
    // Low-rank pieces carry a trailing ".d" / ".l1" / ".l2" component.
    let head = role.split('.').next()?;
    let role = match head {
        "V" => Role::Base,
        "a" => Role::Bias,
        "W" => Role::MergedWeight,
        "b" => Role::MergedBias,
        _ if head.starts_with('P') => Role::ExpandedLeft(head[1..].parse().ok()?),
        _ if head.starts_with('Q') => Role::ExpandedRight(head[1..].parse().ok()?),
        _ => return None,
    };
    Some((layer, role))
}

/// Ordered `name -> Tensor` map.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamTree {
    entries: Vec<(String, Tensor)>,
}

impl ParamTree {
    pub fn new() -> ParamTree {
        ParamTree { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        debug_assert!(self.get(&name).is_none(), "duplicate entry {name}");
        self.entries.push((name, tensor));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Same names, same order, same dims.
    pub fn congruent(&self, other: &ParamTree) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, ta), (nb, tb))| na == nb && ta.dims() == tb.dims())
    }

    /// Total number of scalar coordinates.
    pub fn dim(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    /// Elementwise map preserving structure.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ParamTree {
        ParamTree { entries: self.entries.iter().map(|(n, t)| (n.clone(), t.map(&f))).collect() }
    }

    pub fn zip_map(&self, other: &ParamTree, f: impl Fn(f64, f64) -> f64) -> Result<ParamTree> {
        if !self.congruent(other) {
            return Err(Error::Shape("trees are not congruent".into()));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|((n, a), (_, b))| Ok((n.clone(), a.zip_map(b, &f)?)))
            .collect::<Result<_>>()?;
        Ok(ParamTree { entries })
    }

    pub fn scale(&self, alpha: f64) -> ParamTree {
        self.map(|v| alpha * v)
    }

    pub fn add(&self, other: &ParamTree) -> Result<ParamTree> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ParamTree) -> Result<ParamTree> {
        self.zip_map(other, |a, b| a - b)
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ParamTree) -> Result<()> {
        if !self.congruent(other) {
            return Err(Error::Shape("trees are not congruent".into()));
        }
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    pub fn dot(&self, other: &ParamTree) -> Result<f64> {
        if !self.congruent(other) {
            return Err(Error::Shape("trees are not congruent".into()));
        }
        let mut acc = 0.0;
        for ((_, a), (_, b)) in self.entries.iter().zip(&other.entries) {
            acc += a.dot(b)?;
        }
        Ok(acc)
    }

    /// Euclidean norm over all coordinates.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, t)| t.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
    }

    /// All coordinates concatenated in entry order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Zero tree with this tree's structure.
    pub fn zeros_like(&self) -> ParamTree {
        self.map(|_| 0.0)
    }
}

impl FromIterator<(String, Tensor)> for ParamTree {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        ParamTree { entries: iter.into_iter().collect() }
    }
}
