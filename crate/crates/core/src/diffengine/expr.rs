use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::func::UnaryFn;
use crate::{Error, Result};

/// Handle to a node inside an [`ExprBuilder`] or [`FieldExpr`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One vector-valued node of an expression graph.
///
/// Nodes only reference nodes created before them, so every graph is acyclic.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// The input point, width `d`.
    Input,
    /// Constant vector.
    Constant(Vec<f64>),
    /// `W·x + b` with a row-major `rows × cols` weight matrix.
    Affine {
        input: NodeId,
        rows: usize,
        cols: usize,
        weight: Vec<f64>,
        bias: Option<Vec<f64>>,
    },
    /// Elementwise scalar function.
    Map { input: NodeId, func: UnaryFn },
    /// `Σ cᵢ·nodeᵢ`; all terms share one width.
    LinComb(Vec<(f64, NodeId)>),
    /// Elementwise product; a width-1 operand broadcasts.
    Product(NodeId, NodeId),
    /// Stacks the operands' components.
    Concat(Vec<NodeId>),
    /// Picks components by index.
    Select { input: NodeId, indices: Vec<usize> },
}

impl Node {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Node::Input | Node::Constant(_) => Vec::new(),
            Node::Affine { input, .. } | Node::Map { input, .. } | Node::Select { input, .. } => {
                vec![*input]
            }
            Node::LinComb(terms) => terms.iter().map(|t| t.1).collect(),
            Node::Product(a, b) => vec![*a, *b],
            Node::Concat(parts) => parts.clone(),
        }
    }
}

/// Incrementally builds a [`FieldExpr`], validating dimensions as it goes.
#[derive(Debug, Clone)]
pub struct ExprBuilder {
    input_dim: usize,
    nodes: Vec<Node>,
    widths: Vec<usize>,
}

impl ExprBuilder {
    pub fn new(input_dim: usize) -> ExprBuilder {
        ExprBuilder {
            input_dim,
            nodes: vec![Node::Input],
            widths: vec![input_dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// The input node (always the first node).
    pub fn input(&self) -> NodeId {
        NodeId(0)
    }

    pub fn width(&self, id: NodeId) -> usize {
        self.widths[id.0]
    }

    fn check(&self, id: NodeId) -> Result<usize> {
        self.widths
            .get(id.0)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("node {} does not exist", id.0)))
    }

    fn push(&mut self, node: Node, width: usize) -> NodeId {
        self.nodes.push(node);
        self.widths.push(width);
        NodeId(self.nodes.len() - 1)
    }

    /// Coordinate `x_i` (zero-based) as a width-1 node.
    pub fn coordinate(&mut self, i: usize) -> Result<NodeId> {
        self.select(NodeId(0), vec![i])
    }

    pub fn constant(&mut self, values: Vec<f64>) -> Result<NodeId> {
        if values.is_empty() {
            return Err(Error::DimensionMismatch("empty constant".into()));
        }
        let w = values.len();
        Ok(self.push(Node::Constant(values), w))
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.push(Node::Constant(vec![value]), 1)
    }

    pub fn affine(
        &mut self,
        input: NodeId,
        rows: usize,
        cols: usize,
        weight: Vec<f64>,
        bias: Option<Vec<f64>>,
    ) -> Result<NodeId> {
        let w = self.check(input)?;
        if w != cols || weight.len() != rows * cols || rows == 0 {
            return Err(Error::DimensionMismatch(format!(
                "affine {rows}x{cols} with {} weights applied to width {w}",
                weight.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != rows {
                return Err(Error::DimensionMismatch(format!(
                    "bias of length {} for {rows} rows",
                    b.len()
                )));
            }
        }
        Ok(self.push(
            Node::Affine {
                input,
                rows,
                cols,
                weight,
                bias,
            },
            rows,
        ))
    }

    pub fn map(&mut self, input: NodeId, func: UnaryFn) -> Result<NodeId> {
        let w = self.check(input)?;
        Ok(self.push(Node::Map { input, func }, w))
    }

    pub fn lincomb(&mut self, terms: Vec<(f64, NodeId)>) -> Result<NodeId> {
        let first = terms
            .first()
            .ok_or_else(|| Error::DimensionMismatch("empty linear combination".into()))?;
        let w = self.check(first.1)?;
        for t in &terms {
            if self.check(t.1)? != w {
                return Err(Error::DimensionMismatch(
                    "linear combination of different widths".into(),
                ));
            }
        }
        Ok(self.push(Node::LinComb(terms), w))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.lincomb(vec![(1.0, a), (1.0, b)])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.lincomb(vec![(1.0, a), (-1.0, b)])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.lincomb(vec![(c, a)])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (wa, wb) = (self.check(a)?, self.check(b)?);
        let w = match (wa, wb) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::DimensionMismatch(format!(
                    "product of widths {wa} and {wb}"
                )))
            }
        };
        Ok(self.push(Node::Product(a, b), w))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let r = self.map(b, UnaryFn::Recip)?;
        self.mul(a, r)
    }

    pub fn concat(&mut self, parts: Vec<NodeId>) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::DimensionMismatch("empty concatenation".into()));
        }
        let mut w = 0;
        for p in &parts {
            w += self.check(*p)?;
        }
        Ok(self.push(Node::Concat(parts), w))
    }

    pub fn select(&mut self, input: NodeId, indices: Vec<usize>) -> Result<NodeId> {
        let w = self.check(input)?;
        if indices.is_empty() || indices.iter().any(|&i| i >= w) {
            return Err(Error::DimensionMismatch(format!(
                "selection {indices:?} from width {w}"
            )));
        }
        let n = indices.len();
        Ok(self.push(Node::Select { input, indices }, n))
    }

    /// Sum of all components as a width-1 node.
    pub fn sum(&mut self, input: NodeId) -> Result<NodeId> {
        let w = self.check(input)?;
        self.affine(input, 1, w, vec![1.0; w], None)
    }

    /// Copies another expression over the same input into this builder and
    /// returns the id of its output.
    pub fn embed(&mut self, expr: &FieldExpr) -> Result<NodeId> {
        if expr.input_dim != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "embedding a {}-dimensional expression into a {}-dimensional one",
                expr.input_dim, self.input_dim
            )));
        }
        let mut map = Vec::with_capacity(expr.nodes.len());
        for node in &expr.nodes {
            let id = match node {
                Node::Input => NodeId(0),
                other => {
                    let m = |n: &NodeId| map[n.0];
                    let remapped = match other {
                        Node::Input => unreachable!(),
                        Node::Constant(c) => Node::Constant(c.clone()),
                        Node::Affine {
                            input,
                            rows,
                            cols,
                            weight,
                            bias,
                        } => Node::Affine {
                            input: m(input),
                            rows: *rows,
                            cols: *cols,
                            weight: weight.clone(),
                            bias: bias.clone(),
                        },
                        Node::Map { input, func } => Node::Map {
                            input: m(input),
                            func: *func,
                        },
                        Node::LinComb(t) => Node::LinComb(t.iter().map(|(c, n)| (*c, m(n))).collect()),
                        Node::Product(a, b) => Node::Product(m(a), m(b)),
                        Node::Concat(p) => Node::Concat(p.iter().map(m).collect()),
                        Node::Select { input, indices } => Node::Select {
                            input: m(input),
                            indices: indices.clone(),
                        },
                    };
                    let w = expr.widths[map.len()];
                    self.push(remapped, w)
                }
            };
            map.push(id);
        }
        Ok(map[expr.output.0])
    }

    pub fn finish(self, output: NodeId) -> Result<FieldExpr> {
        self.check(output)?;
        let mut param_offsets = vec![usize::MAX; self.nodes.len()];
        let mut depends = vec![false; self.nodes.len()];
        let mut nparams = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Affine {
                rows, cols, bias, ..
            } = node
            {
                param_offsets[i] = nparams;
                nparams += rows * cols + bias.as_ref().map_or(0, |_| *rows);
                depends[i] = true;
            }
            depends[i] |= node.inputs().iter().any(|n| depends[n.0]);
        }
        Ok(FieldExpr {
            input_dim: self.input_dim,
            nodes: self.nodes,
            widths: self.widths,
            output,
            param_offsets,
            depends,
            nparams,
        })
    }
}

/// A vector-valued field over `ℝ^d` represented as an acyclic expression graph.
///
/// Hosts both network forward maps and closed-form fields such as exact
/// solutions. The trainable parameters of the graph are the weights and biases
/// of its affine nodes, flattened in node order (weights row-major, then bias).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldExpr {
    pub(crate) input_dim: usize,
    pub(crate) nodes: Vec<Node>,
    pub(crate) widths: Vec<usize>,
    pub(crate) output: NodeId,
    pub(crate) param_offsets: Vec<usize>,
    pub(crate) depends: Vec<bool>,
    pub(crate) nparams: usize,
}

impl FieldExpr {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_width(&self) -> usize {
        self.widths[self.output.0]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    /// Number of affine parameters (weights and biases).
    pub fn param_count(&self) -> usize {
        self.nparams
    }

    /// Offset of the affine node's parameters in the flat parameter vector.
    pub fn param_offset(&self, id: NodeId) -> Option<usize> {
        self.param_offsets
            .get(id.0)
            .copied()
            .filter(|&o| o != usize::MAX)
    }

    /// Flat affine parameters in node order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nparams);
        for node in &self.nodes {
            if let Node::Affine { weight, bias, .. } = node {
                out.extend_from_slice(weight);
                if let Some(b) = bias {
                    out.extend_from_slice(b);
                }
            }
        }
        out
    }

    /// Overwrites the affine parameters from a flat vector (see [`FieldExpr::params`]).
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.nparams {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters supplied for {}",
                flat.len(),
                self.nparams
            )));
        }
        let mut at = 0;
        for node in &mut self.nodes {
            if let Node::Affine { weight, bias, .. } = node {
                let n = weight.len();
                weight.copy_from_slice(&flat[at..at + n]);
                at += n;
                if let Some(b) = bias {
                    let n = b.len();
                    b.copy_from_slice(&flat[at..at + n]);
                    at += n;
                }
            }
        }
        Ok(())
    }

    /// Restricts the output to the listed components.
    pub fn select_outputs(&self, indices: &[usize]) -> Result<FieldExpr> {
        let mut b = self.to_builder();
        let out = b.select(self.output, indices.to_vec())?;
        b.finish(out)
    }

    /// `a·self + b·other`, both over the same input.
    pub fn linear_combination(&self, a: f64, other: &FieldExpr, b: f64) -> Result<FieldExpr> {
        let mut builder = self.to_builder();
        let rhs = builder.embed(other)?;
        let out = builder.lincomb(vec![(a, self.output), (b, rhs)])?;
        builder.finish(out)
    }

    /// A builder that already contains this expression's nodes.
    pub fn to_builder(&self) -> ExprBuilder {
        ExprBuilder {
            input_dim: self.input_dim,
            nodes: self.nodes.clone(),
            widths: self.widths.clone(),
        }
    }
}
