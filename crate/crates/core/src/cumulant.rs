//! Multivariate cumulants up to order four.
//!
//! Cumulants are obtained from joint moments through the set-partition
//! formula
//!
//! ```text
//! Cum(x_1, ..., x_k) = sum_p (|p| - 1)! (-1)^(|p| - 1) prod_{B in p} E[prod_{j in B} x_j]
//! ```
//!
//! where `p` ranges over all set partitions of `{1..k}`. Order-`k` cumulants
//! of a `d`-vector are stacked into a vector of length `d^k` whose entries are
//! indexed by [`MultiIndex`] in row-major order (first entry slowest), and
//! reshaped column-major into the `d^(k-1) x d` [`CumulantMatrix`]. Column `m`
//! of that matrix collects all cumulants whose first index is `m`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::series::TimeSeriesMatrix;

pub const MAX_ORDER: usize = 4;

/// A `k`-tuple of zero-based component indices, each below `d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    entries: Vec<usize>,
}

impl MultiIndex {
    pub fn new(entries: Vec<usize>, dim: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Shape("multi-index must have at least one entry".into()));
        }
        if let Some(&bad) = entries.iter().find(|&&e| e >= dim) {
            return Err(Error::Shape(format!(
                "multi-index entry {bad} out of range for dimension {dim}"
            )));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn order(&self) -> usize {
        self.entries.len()
    }

    /// Position in the row-major enumeration of all `d^k` indices.
    pub fn linear_index(&self, dim: usize) -> usize {
        self.entries.iter().fold(0, |acc, &e| acc * dim + e)
    }

    pub fn from_linear(mut linear: usize, dim: usize, order: usize) -> Self {
        let mut entries = vec![0; order];
        for slot in entries.iter_mut().rev() {
            *slot = linear % dim;
            linear /= dim;
        }
        Self { entries }
    }

    /// Sorted copy; equal for every permutation of the same multiset.
    pub fn canonical(&self) -> Vec<usize> {
        let mut c = self.entries.clone();
        c.sort_unstable();
        c
    }

    /// All `d^k` indices, first entry varying slowest.
    pub fn enumerate(dim: usize, order: usize) -> impl Iterator<Item = MultiIndex> {
        let total = dim.pow(order as u32);
        (0..total).map(move |l| MultiIndex::from_linear(l, dim, order))
    }

    /// Multiset-distinct indices (non-decreasing tuples).
    pub fn enumerate_distinct(dim: usize, order: usize) -> Vec<MultiIndex> {
        Self::enumerate(dim, order)
            .filter(|m| m.entries.windows(2).all(|w| w[0] <= w[1]))
            .collect()
    }
}

/// A set partition of positions `0..k`; blocks are sorted and disjoint.
pub type Partition = Vec<Vec<usize>>;

/// All set partitions of `{0, ..., k-1}` for `1 <= k <= 4`.
pub fn enumerate_partitions(k: usize) -> Result<Vec<Partition>> {
    if !(1..=MAX_ORDER).contains(&k) {
        return Err(Error::UnsupportedOrder(k));
    }
    // Restricted growth strings: label[i] <= 1 + max(label[..i]).
    let mut out = Vec::new();
    let mut labels = vec![0usize; k];
    fn rec(i: usize, max_label: usize, labels: &mut [usize], out: &mut Vec<Partition>) {
        let k = labels.len();
        if i == k {
            let mut blocks: Partition = vec![Vec::new(); max_label + 1];
            for (pos, &l) in labels.iter().enumerate() {
                blocks[l].push(pos);
            }
            out.push(blocks);
            return;
        }
        for l in 0..=max_label + 1 {
            labels[i] = l;
            rec(i + 1, max_label.max(l), labels, out);
        }
    }
    labels[0] = 0;
    rec(1, 0, &mut labels, &mut out);
    Ok(out)
}

/// Joint moments keyed by the sorted multiset of component indices.
pub type JointMoments = BTreeMap<Vec<usize>, f64>;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Evaluates the partition formula for the cumulant indexed by `idx`.
///
/// `moments` must contain `E[prod x_j]` for every block of every partition,
/// keyed by the sorted component indices of the block.
pub fn cumulant_from_moments(moments: &JointMoments, idx: &MultiIndex) -> Result<f64> {
    let k = idx.order();
    let partitions = enumerate_partitions(k)?;
    cumulant_with_partitions(&partitions, |key| moments.get(key).copied(), idx)
}

fn cumulant_with_partitions(
    partitions: &[Partition],
    moment: impl Fn(&[usize]) -> Option<f64>,
    idx: &MultiIndex,
) -> Result<f64> {
    let mut total = 0.0;
    let mut key = Vec::with_capacity(idx.order());
    for p in partitions {
        let nb = p.len();
        let coef = factorial(nb - 1) * if nb % 2 == 1 { 1.0 } else { -1.0 };
        let mut prod = 1.0;
        for block in p {
            key.clear();
            key.extend(block.iter().map(|&pos| idx.entries[pos]));
            key.sort_unstable();
            prod *= moment(&key).ok_or_else(|| Error::IncompleteMoments(key.clone()))?;
        }
        total += coef * prod;
    }
    Ok(total)
}

/// Order-`k` cumulants of a `d`-vector, length `d^k`, in [`MultiIndex`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantVector {
    order: usize,
    dim: usize,
    values: Vec<f64>,
}

impl CumulantVector {
    pub fn new(order: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != dim.pow(order as u32) {
            return Err(Error::Shape(format!(
                "cumulant vector of order {order} and dimension {dim} needs {} entries, got {}",
                dim.pow(order as u32),
                values.len()
            )));
        }
        Ok(Self { order, dim, values })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, idx: &MultiIndex) -> f64 {
        self.values[idx.linear_index(self.dim)]
    }

    pub fn matricize(&self) -> CumulantMatrix {
        let rows = self.dim.pow(self.order as u32 - 1);
        CumulantMatrix {
            order: self.order,
            dim: self.dim,
            values: DMatrix::from_column_slice(rows, self.dim, &self.values),
        }
    }
}

/// The `d^(k-1) x d` reshaping of a [`CumulantVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantMatrix {
    order: usize,
    dim: usize,
    values: DMatrix<f64>,
}

impl CumulantMatrix {
    /// Cumulant matrix of mutually independent components with the given
    /// marginal order-`k` cumulants: column `m` is `kappa_m` times the
    /// `(k-1)`-fold Kronecker power of the `m`-th canonical vector.
    pub fn from_marginals(order: usize, marginals: &[f64]) -> Result<Self> {
        if !(2..=MAX_ORDER).contains(&order) {
            return Err(Error::UnsupportedOrder(order));
        }
        let d = marginals.len();
        let mut values = vec![0.0; d.pow(order as u32)];
        for (m, &kappa) in marginals.iter().enumerate() {
            let idx = MultiIndex {
                entries: vec![m; order],
            };
            values[idx.linear_index(d)] = kappa;
        }
        Ok(CumulantVector::new(order, d, values)?.matricize())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn vectorize(&self) -> CumulantVector {
        CumulantVector {
            order: self.order,
            dim: self.dim,
            values: self.values.as_slice().to_vec(),
        }
    }
}

/// Reshapes a raw cumulant vector of order `k` and dimension `d`.
pub fn matricize(values: &[f64], dim: usize, order: usize) -> Result<CumulantMatrix> {
    Ok(CumulantVector::new(order, dim, values.to_vec())?.matricize())
}

/// Plug-in sample cumulants of order `k` (biased, divide-by-`T` moments).
pub fn sample_cumulants(data: &TimeSeriesMatrix, k: usize) -> Result<CumulantVector> {
    if !(2..=MAX_ORDER).contains(&k) {
        return Err(Error::UnsupportedOrder(k));
    }
    data.ensure_finite()?;
    let (t, d) = (data.len(), data.dim());
    if t < 10 * d {
        return Err(Error::Data(format!(
            "sample cumulants need T >= 10 d (T = {t}, d = {d})"
        )));
    }
    let x = data.as_matrix();
    let mut moments = JointMoments::new();
    for size in 1..=k {
        for m in MultiIndex::enumerate_distinct(d, size) {
            let mut acc = 0.0;
            for row in 0..t {
                acc += m.entries.iter().map(|&j| x[(row, j)]).product::<f64>();
            }
            moments.insert(m.entries.clone(), acc / t as f64);
        }
    }
    let partitions = enumerate_partitions(k)?;
    let mut cache: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut values = Vec::with_capacity(d.pow(k as u32));
    for idx in MultiIndex::enumerate(d, k) {
        let key = idx.canonical();
        let v = match cache.get(&key) {
            Some(&v) => v,
            None => {
                let v = cumulant_with_partitions(&partitions, |b| moments.get(b).copied(), &idx)?;
                cache.insert(key, v);
                v
            }
        };
        values.push(v);
    }
    CumulantVector::new(k, d, values)
}
