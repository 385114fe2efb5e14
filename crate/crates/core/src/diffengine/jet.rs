use alloc::vec::Vec;

use super::basis::{block_offset, full_index, multichoose};

/// Value of a scalar field at a point together with all of its partial
/// derivatives up to `order`.
///
/// Derivative tensors are symmetric, so only sorted multi-indices are stored
/// (the upper simplex): order `k` over `d` inputs holds `C(d+k-1, k)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    dim: usize,
    order: usize,
    coeffs: Vec<f64>,
}

impl Jet {
    pub(crate) fn from_coeffs(dim: usize, order: usize, coeffs: Vec<f64>) -> Jet {
        debug_assert_eq!(coeffs.len(), block_offset(dim, order + 1));
        Jet { dim, order, coeffs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Gradient; empty for order 0.
    pub fn grad(&self) -> &[f64] {
        if self.order >= 1 {
            &self.coeffs[1..1 + self.dim]
        } else {
            &[]
        }
    }

    /// Packed coefficients of the order-`k` tensor, or `None` above the jet's order.
    pub fn tensor(&self, k: usize) -> Option<&[f64]> {
        (k <= self.order).then(|| {
            let start = block_offset(self.dim, k);
            &self.coeffs[start..start + multichoose(self.dim, k)]
        })
    }

    /// `∂^k u / ∂x_{i1}…∂x_{ik}` for any index order, or `None` if `k` exceeds
    /// the jet order or an index is out of range.
    pub fn partial(&self, indices: &[usize]) -> Option<f64> {
        if indices.len() > self.order || indices.iter().any(|&i| i >= self.dim) {
            return None;
        }
        Some(self.coeffs[full_index(self.dim, indices)])
    }

    /// Second partial derivative.
    ///
    /// # Panics
    /// If the jet order is below 2 or an index is out of range.
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.partial(&[i, j]).expect("jet carries no Hessian entry")
    }

    /// # Panics
    /// If the jet order is below 3 or an index is out of range.
    pub fn third(&self, i: usize, j: usize, k: usize) -> f64 {
        self.partial(&[i, j, k]).expect("jet carries no third-order entry")
    }

    /// # Panics
    /// If the jet order is below 4 or an index is out of range.
    pub fn fourth(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.partial(&[i, j, k, l]).expect("jet carries no fourth-order entry")
    }

    /// Dense row-major Hessian.
    pub fn hessian_matrix(&self) -> Option<Vec<f64>> {
        if self.order < 2 {
            return None;
        }
        let d = self.dim;
        let mut m = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                m.push(self.hess(i, j));
            }
        }
        Some(m)
    }

    /// Trace of the Hessian.
    pub fn laplacian(&self) -> Option<f64> {
        (self.order >= 2).then(|| (0..self.dim).map(|i| self.hess(i, i)).sum())
    }

    /// `Σᵢ Σⱼ ∂⁴u/∂xᵢ²∂xⱼ²`.
    pub fn bilaplacian(&self) -> Option<f64> {
        (self.order >= 4).then(|| {
            let mut acc = 0.0;
            for i in 0..self.dim {
                for j in 0..self.dim {
                    acc += self.fourth(i, i, j, j);
                }
            }
            acc
        })
    }

    /// All stored coefficients, order blocks in ascending order.
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }
}
