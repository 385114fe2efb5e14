//! Coefficient bases for jets.
//!
//! A basis fixes which derivative quantities travel with every scalar through
//! an expression graph, and how they transform under elementwise composition
//! (`σ(z)`) and multiplication (`a·b`). Every rule is a sum of monomials in the
//! input coefficients, stored as flat term lists so that the forward and
//! reverse passes are basis-agnostic.
//!
//! * [`BasisKind::Full`] carries every partial derivative up to the order, on
//!   the upper simplex (sorted multi-indices). Rules come from Faà di Bruno
//!   (set partitions) and Leibniz (subsets).
//! * [`BasisKind::Laplacian`] carries `(u, ∇u, Δu)`.
//! * [`BasisKind::Bilaplacian`] carries `(u, ∇u, ∇²u, ∇Δu, Δ²u)`, the smallest
//!   set containing `Δ²u` that is closed under composition and products.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Highest order carried by a [`BasisKind::Full`] basis.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// All partial derivatives up to the given order (0..=4).
    Full(u8),
    /// Value, gradient and Laplacian.
    Laplacian,
    /// Value, gradient, Hessian, gradient of the Laplacian and bi-Laplacian.
    Bilaplacian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct UnaryTerm {
    pub deriv: u8,
    pub nf: u8,
    pub factors: [u16; 4],
    pub coeff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ProductTerm {
    pub a: u16,
    pub b: u16,
    pub coeff: f64,
}

/// A jet coefficient layout together with its transformation rules.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    kind: BasisKind,
    dim: usize,
    len: usize,
    max_deriv: usize,
    unary_start: Vec<u32>,
    unary: Vec<UnaryTerm>,
    product_start: Vec<u32>,
    product: Vec<ProductTerm>,
    laplacian: Vec<(usize, f64)>,
    bilaplacian: Vec<(usize, f64)>,
}

fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc as usize
}

/// Number of non-decreasing `r`-tuples over `n` symbols.
pub(crate) fn multichoose(n: usize, r: usize) -> usize {
    if r == 0 {
        1
    } else if n == 0 {
        0
    } else {
        binom(n + r - 1, r)
    }
}

/// Offset of the order-`k` block in a full basis over `d` inputs.
pub(crate) fn block_offset(d: usize, k: usize) -> usize {
    (0..k).map(|m| multichoose(d, m)).sum()
}

/// Lexicographic rank of a sorted multi-index among all sorted tuples of its length.
pub(crate) fn simplex_rank(d: usize, sorted: &[usize]) -> usize {
    let k = sorted.len();
    let mut rank = 0;
    let mut lo = 0;
    for (p, &a) in sorted.iter().enumerate() {
        for v in lo..a {
            rank += multichoose(d - v, k - p - 1);
        }
        lo = a;
    }
    rank
}

/// Index of the partial derivative `∂^k / ∂x_{i1}…∂x_{ik}` in a full basis.
pub(crate) fn full_index(d: usize, idx: &[usize]) -> usize {
    let mut sorted = [0usize; MAX_ORDER];
    let k = idx.len();
    sorted[..k].copy_from_slice(idx);
    sorted[..k].sort_unstable();
    block_offset(d, k) + simplex_rank(d, &sorted[..k])
}

/// Upper-triangle index of `(i, j)` inside a packed symmetric `d×d` block.
#[inline]
pub(crate) fn sym_index(d: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * d - i * (i + 1) / 2 + j
}

/// Accumulates monomials keyed by (derivative order, sorted factor list).
struct RuleSet {
    unary: Vec<BTreeMap<(u8, Vec<u16>), f64>>,
    product: Vec<BTreeMap<(u16, u16), f64>>,
}

impl RuleSet {
    fn new(len: usize) -> Self {
        RuleSet {
            unary: vec![BTreeMap::new(); len],
            product: vec![BTreeMap::new(); len],
        }
    }

    fn unary(&mut self, out: usize, deriv: u8, factors: &[usize], coeff: f64) {
        let mut f: Vec<u16> = factors.iter().map(|&x| x as u16).collect();
        f.sort_unstable();
        *self.unary[out].entry((deriv, f)).or_insert(0.0) += coeff;
    }

    fn product(&mut self, out: usize, a: usize, b: usize, coeff: f64) {
        *self.product[out].entry((a as u16, b as u16)).or_insert(0.0) += coeff;
    }
}

impl Basis {
    pub fn new(kind: BasisKind, dim: usize) -> Result<Basis> {
        if dim == 0 {
            return Err(Error::InvalidArgument("basis dimension must be positive".into()));
        }
        match kind {
            BasisKind::Full(order) => {
                if order as usize > MAX_ORDER {
                    return Err(Error::UnsupportedOrder {
                        requested: order as usize,
                        max: MAX_ORDER,
                    });
                }
                Ok(Self::full(dim, order as usize))
            }
            BasisKind::Laplacian => Ok(Self::laplacian_basis(dim)),
            BasisKind::Bilaplacian => Ok(Self::bilaplacian_basis(dim)),
        }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of coefficients per scalar.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Highest derivative of an elementwise function the forward rules use.
    pub fn max_deriv(&self) -> usize {
        self.max_deriv
    }

    /// Index of `∂/∂x_i`, if the basis carries gradients.
    pub fn grad_index(&self, i: usize) -> Option<usize> {
        let has_grad = !matches!(self.kind, BasisKind::Full(0));
        (has_grad && i < self.dim).then_some(1 + i)
    }

    /// Index of `∂²/∂x_i∂x_j`, if the basis carries the Hessian.
    pub fn hess_index(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.dim || j >= self.dim {
            return None;
        }
        match self.kind {
            BasisKind::Full(o) if o >= 2 => Some(full_index(self.dim, &[i, j])),
            BasisKind::Bilaplacian => Some(1 + self.dim + sym_index(self.dim, i, j)),
            _ => None,
        }
    }

    /// Linear form extracting `Δu`; empty when the basis cannot represent it.
    pub fn laplacian_form(&self) -> &[(usize, f64)] {
        &self.laplacian
    }

    /// Linear form extracting `Δ²u`; empty when the basis cannot represent it.
    pub fn bilaplacian_form(&self) -> &[(usize, f64)] {
        &self.bilaplacian
    }

    pub(crate) fn unary_terms(&self, coef: usize) -> &[UnaryTerm] {
        &self.unary[self.unary_start[coef] as usize..self.unary_start[coef + 1] as usize]
    }

    pub(crate) fn product_terms(&self, coef: usize) -> &[ProductTerm] {
        &self.product[self.product_start[coef] as usize..self.product_start[coef + 1] as usize]
    }

    fn finish(
        kind: BasisKind,
        dim: usize,
        rules: RuleSet,
        laplacian: Vec<(usize, f64)>,
        bilaplacian: Vec<(usize, f64)>,
    ) -> Basis {
        let len = rules.unary.len();
        let mut unary_start = Vec::with_capacity(len + 1);
        let mut unary = Vec::new();
        let mut max_deriv = 0;
        unary_start.push(0);
        for map in rules.unary {
            for ((deriv, f), coeff) in map {
                if coeff == 0.0 {
                    continue;
                }
                let mut factors = [0u16; 4];
                factors[..f.len()].copy_from_slice(&f);
                max_deriv = max_deriv.max(deriv as usize);
                unary.push(UnaryTerm {
                    deriv,
                    nf: f.len() as u8,
                    factors,
                    coeff,
                });
            }
            unary_start.push(unary.len() as u32);
        }
        let mut product_start = Vec::with_capacity(len + 1);
        let mut product = Vec::new();
        product_start.push(0);
        for map in rules.product {
            for ((a, b), coeff) in map {
                if coeff != 0.0 {
                    product.push(ProductTerm { a, b, coeff });
                }
            }
            product_start.push(product.len() as u32);
        }
        Basis {
            kind,
            dim,
            len,
            max_deriv,
            unary_start,
            unary,
            product_start,
            product,
            laplacian,
            bilaplacian,
        }
    }

    fn full(d: usize, order: usize) -> Basis {
        let mut tuples: Vec<Vec<usize>> = Vec::new();
        for k in 0..=order {
            let mut cur = Vec::with_capacity(k);
            push_sorted_tuples(d, k, 0, &mut cur, &mut tuples);
        }
        let len = tuples.len();
        let mut rules = RuleSet::new(len);
        for (c, alpha) in tuples.iter().enumerate() {
            debug_assert_eq!(full_index(d, alpha), c);
            let n = alpha.len();
            if n == 0 {
                rules.unary(c, 0, &[], 1.0);
            }
            for_each_set_partition(n, |blocks| {
                let factors: Vec<usize> = blocks
                    .iter()
                    .map(|b| {
                        let sub: Vec<usize> = b.iter().map(|&p| alpha[p]).collect();
                        full_index(d, &sub)
                    })
                    .collect();
                rules.unary(c, blocks.len() as u8, &factors, 1.0);
            });
            for mask in 0u32..(1 << n) {
                let mut a = Vec::new();
                let mut b = Vec::new();
                for (p, &ix) in alpha.iter().enumerate() {
                    if mask & (1 << p) != 0 {
                        a.push(ix);
                    } else {
                        b.push(ix);
                    }
                }
                rules.product(c, full_index(d, &a), full_index(d, &b), 1.0);
            }
        }
        let laplacian = if order >= 2 {
            (0..d).map(|i| (full_index(d, &[i, i]), 1.0)).collect()
        } else {
            Vec::new()
        };
        let bilaplacian = if order >= 4 {
            let mut form = Vec::new();
            for i in 0..d {
                for j in i..d {
                    let w = if i == j { 1.0 } else { 2.0 };
                    form.push((full_index(d, &[i, i, j, j]), w));
                }
            }
            form
        } else {
            Vec::new()
        };
        Self::finish(BasisKind::Full(order as u8), d, rules, laplacian, bilaplacian)
    }

    fn laplacian_basis(d: usize) -> Basis {
        let lap = d + 1;
        let len = d + 2;
        let mut rules = RuleSet::new(len);
        rules.unary(0, 0, &[], 1.0);
        rules.product(0, 0, 0, 1.0);
        for i in 0..d {
            let g = 1 + i;
            rules.unary(g, 1, &[g], 1.0);
            rules.product(g, g, 0, 1.0);
            rules.product(g, 0, g, 1.0);
            // Δσ(z) = σ''|∇z|² + σ'Δz
            rules.unary(lap, 2, &[g, g], 1.0);
            // Δ(ab) = Δa b + 2∇a·∇b + aΔb
            rules.product(lap, g, g, 2.0);
        }
        rules.unary(lap, 1, &[lap], 1.0);
        rules.product(lap, lap, 0, 1.0);
        rules.product(lap, 0, lap, 1.0);
        Self::finish(BasisKind::Laplacian, d, rules, vec![(lap, 1.0)], Vec::new())
    }

    fn bilaplacian_basis(d: usize) -> Basis {
        let nh = d * (d + 1) / 2;
        let g = |i: usize| 1 + i;
        let h = |i: usize, j: usize| 1 + d + sym_index(d, i, j);
        let q = |i: usize| 1 + d + nh + i;
        let bl = 1 + 2 * d + nh;
        let len = bl + 1;
        let mut r = RuleSet::new(len);

        r.unary(0, 0, &[], 1.0);
        r.product(0, 0, 0, 1.0);
        for i in 0..d {
            r.unary(g(i), 1, &[g(i)], 1.0);
            r.product(g(i), g(i), 0, 1.0);
            r.product(g(i), 0, g(i), 1.0);
        }
        // Hessian: σ''z_i z_j + σ'z_ij ; a_ij b + a_i b_j + a_j b_i + a b_ij
        for i in 0..d {
            for j in i..d {
                let out = h(i, j);
                r.unary(out, 2, &[g(i), g(j)], 1.0);
                r.unary(out, 1, &[h(i, j)], 1.0);
                r.product(out, h(i, j), 0, 1.0);
                r.product(out, g(i), g(j), 1.0);
                r.product(out, g(j), g(i), 1.0);
                r.product(out, 0, h(i, j), 1.0);
            }
        }
        // ∂_iΔσ(z) = σ''' z_i|∇z|² + 2σ''(∇²z ∇z)_i + σ'' z_i Δz + σ' ∂_iΔz
        // ∂_iΔ(ab) = ∂_iΔa b + Δa b_i + 2Σ_j(a_ij b_j + a_j b_ij) + a_i Δb + a ∂_iΔb
        for i in 0..d {
            let out = q(i);
            for k in 0..d {
                r.unary(out, 3, &[g(i), g(k), g(k)], 1.0);
                r.unary(out, 2, &[h(i, k), g(k)], 2.0);
                r.unary(out, 2, &[g(i), h(k, k)], 1.0);
                r.product(out, h(k, k), g(i), 1.0);
                r.product(out, h(i, k), g(k), 2.0);
                r.product(out, g(k), h(i, k), 2.0);
                r.product(out, g(i), h(k, k), 1.0);
            }
            r.unary(out, 1, &[q(i)], 1.0);
            r.product(out, q(i), 0, 1.0);
            r.product(out, 0, q(i), 1.0);
        }
        // Δ²σ(z) = σ''''|∇z|⁴ + 2σ'''Δz|∇z|² + 4σ'''∇zᵀ∇²z∇z + 2σ''‖∇²z‖² + 4σ''∇z·∇Δz
        //          + σ''(Δz)² + σ'Δ²z
        // Δ²(ab) = Δ²a b + 4∇Δa·∇b + 2ΔaΔb + 4∇²a:∇²b + 4∇a·∇Δb + aΔ²b
        for i in 0..d {
            for j in 0..d {
                r.unary(bl, 4, &[g(i), g(i), g(j), g(j)], 1.0);
                r.unary(bl, 3, &[h(j, j), g(i), g(i)], 2.0);
                r.unary(bl, 3, &[g(i), g(j), h(i, j)], 4.0);
                r.unary(bl, 2, &[h(i, j), h(i, j)], 2.0);
                r.unary(bl, 2, &[h(i, i), h(j, j)], 1.0);
                r.product(bl, h(i, i), h(j, j), 2.0);
                r.product(bl, h(i, j), h(i, j), 4.0);
            }
            r.unary(bl, 2, &[g(i), q(i)], 4.0);
            r.product(bl, q(i), g(i), 4.0);
            r.product(bl, g(i), q(i), 4.0);
        }
        r.unary(bl, 1, &[bl], 1.0);
        r.product(bl, bl, 0, 1.0);
        r.product(bl, 0, bl, 1.0);

        let laplacian = (0..d).map(|i| (h(i, i), 1.0)).collect();
        Self::finish(BasisKind::Bilaplacian, d, r, laplacian, vec![(bl, 1.0)])
    }

    /// Index of `∂_i Δu`, if the basis carries it (bi-Laplacian basis only).
    pub(crate) fn grad_laplacian_index(&self, i: usize) -> Option<usize> {
        match self.kind {
            BasisKind::Bilaplacian if i < self.dim => {
                Some(1 + self.dim + self.dim * (self.dim + 1) / 2 + i)
            }
            _ => None,
        }
    }
}

fn push_sorted_tuples(
    d: usize,
    k: usize,
    lo: usize,
    cur: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for v in lo..d {
        cur.push(v);
        push_sorted_tuples(d, k, v, cur, out);
        cur.pop();
    }
}

/// Calls `f` with every set partition of `{0, …, n-1}` (restricted growth strings).
fn for_each_set_partition(n: usize, mut f: impl FnMut(&[Vec<usize>])) {
    if n == 0 {
        return;
    }
    let mut rgs = vec![0usize; n];
    loop {
        let nblocks = rgs.iter().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); nblocks];
        for (p, &b) in rgs.iter().enumerate() {
            blocks[b].push(p);
        }
        f(&blocks);
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return;
            }
            let max_prefix = rgs[..i].iter().copied().max().unwrap_or(0);
            if rgs[i] <= max_prefix {
                rgs[i] += 1;
                for x in rgs.iter_mut().skip(i + 1) {
                    *x = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}
