use alloc::vec::Vec;

use super::ops::{Op, Ops};
use super::params::ParamVector;
use super::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdError {
    #[error("non-finite value or partial at tape node {node} ({op:?})")]
    NonFinite { node: usize, op: Op },
    #[error("output is not a node of this tape")]
    ForeignVar,
}

/// Single-evaluation record of scalar primitives.
///
/// Nodes are stored in creation order, which is a topological order: every
/// operand index precedes the node that uses it. Edges are kept in flat
/// arrays (compressed rows) so the reverse sweep is one linear pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    values: Vec<f64>,
    ops: Vec<Op>,
    edge_end: Vec<u32>,
    srcs: Vec<u32>,
    weights: Vec<f64>,
    first_bad: Option<usize>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            values: Vec::with_capacity(nodes),
            ops: Vec::with_capacity(nodes),
            edge_end: Vec::with_capacity(nodes),
            srcs: Vec::with_capacity(nodes * 4),
            weights: Vec::with_capacity(nodes * 4),
            first_bad: None,
        }
    }

    /// Drops all nodes while keeping the allocations.
    pub fn clear(&mut self) {
        self.values.clear();
        self.ops.clear();
        self.edge_end.clear();
        self.srcs.clear();
        self.weights.clear();
        self.first_bad = None;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// A differentiable leaf.
    pub fn input(&mut self, x: f64) -> Var {
        self.push(Op::Input, x, &[])
    }

    pub fn inputs(&mut self, xs: &[f64]) -> Vec<Var> {
        xs.iter().map(|&x| self.input(x)).collect()
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.index()]
    }

    /// Index and primitive of the first node whose value or partials were
    /// non-finite.
    pub fn first_non_finite(&self) -> Option<(usize, Op)> {
        self.first_bad.map(|i| (i, self.ops[i]))
    }

    fn push(&mut self, op: Op, value: f64, partials: &[(Var, f64)]) -> Var {
        let id = self.values.len();
        let mut finite = value.is_finite();
        for &(src, w) in partials {
            debug_assert!(src.index() < id);
            finite &= w.is_finite();
            self.srcs.push(src.0);
            self.weights.push(w);
        }
        if !finite && self.first_bad.is_none() {
            self.first_bad = Some(id);
        }
        self.values.push(value);
        self.ops.push(op);
        self.edge_end.push(self.srcs.len() as u32);
        Var(id as u32)
    }

    /// Adjoints of every node with respect to `output`.
    pub fn adjoints(&self, output: Var) -> Result<Vec<f64>, AdError> {
        let mut adj = Vec::new();
        self.adjoints_into(output, &mut adj)?;
        Ok(adj)
    }

    /// Like [`Tape::adjoints`], reusing `adj` as the buffer.
    pub fn adjoints_into(&self, output: Var, adj: &mut Vec<f64>) -> Result<(), AdError> {
        let out = output.index();
        if out >= self.values.len() {
            return Err(AdError::ForeignVar);
        }
        if let Some(bad) = self.first_bad {
            if bad <= out {
                return Err(AdError::NonFinite {
                    node: bad,
                    op: self.ops[bad],
                });
            }
        }
        adj.clear();
        adj.resize(out + 1, 0.0);
        adj[out] = 1.0;
        for i in (0..=out).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let start = if i == 0 {
                0
            } else {
                self.edge_end[i - 1] as usize
            };
            let end = self.edge_end[i] as usize;
            for e in start..end {
                adj[self.srcs[e] as usize] += self.weights[e] * a;
            }
        }
        adj.resize(self.values.len(), 0.0);
        Ok(())
    }
}

impl Ops for Tape {
    type V = Var;

    #[inline]
    fn constant(&mut self, x: f64) -> Var {
        self.push(Op::Const, x, &[])
    }

    #[inline]
    fn val(&self, v: Var) -> f64 {
        self.values[v.index()]
    }

    #[inline]
    fn custom(&mut self, op: Op, value: f64, partials: &[(Var, f64)]) -> Var {
        self.push(op, value, partials)
    }
}

/// Gradient of the scalar function `f` at `p`, laid out like `p`.
///
/// `f` receives one tape input per entry of `p.values()`.
pub fn grad<F>(f: F, p: &ParamVector) -> Result<ParamVector, AdError>
where
    F: FnOnce(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let xs = tape.inputs(p.values());
    let out = f(&mut tape, &xs);
    let adj = tape.adjoints(out)?;
    let g: Vec<f64> = xs.iter().map(|x| adj[x.index()]).collect();
    Ok(p.with_values(g))
}

/// Jacobian of the vector function `g` at `p`: row `i` is the gradient of
/// output `i`.
pub fn jacobian<F>(g: F, p: &ParamVector) -> Result<Matrix, AdError>
where
    F: FnOnce(&mut Tape, &[Var]) -> Vec<Var>,
{
    let mut tape = Tape::new();
    let xs = tape.inputs(p.values());
    let outs = g(&mut tape, &xs);
    let mut jac = Matrix::zeros(outs.len(), xs.len());
    let mut adj = Vec::new();
    for (row, &o) in outs.iter().enumerate() {
        tape.adjoints_into(o, &mut adj)?;
        for (col, x) in xs.iter().enumerate() {
            jac[(row, col)] = adj[x.index()];
        }
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;
    use rand::{Rng, SeedableRng};

    fn scalar(x: f64) -> ParamVector {
        ParamVector::single("x", alloc::vec![x])
    }

    #[test]
    fn square_gradient() {
        let g = grad(|t, x| t.mul(x[0], x[0]), &scalar(3.0)).unwrap();
        assert_eq!(g.values(), &[6.0]);
    }

    #[test]
    fn product_rule() {
        let p = ParamVector::single("xy", alloc::vec![2.0, 5.0]);
        let g = grad(|t, x| t.mul(x[0], x[1]), &p).unwrap();
        assert_eq!(g.values(), &[5.0, 2.0]);
    }

    #[test]
    fn identity_jacobian() {
        let p = ParamVector::single("x", alloc::vec![0.3, -1.0, 2.0]);
        let j = jacobian(|_, x| x.to_vec(), &p).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(j[(r, c)], if r == c { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn linear_map_jacobian_is_exact() {
        let a = [[1.5, -2.0, 0.25], [0.0, 3.0, -1.0]];
        let p = ParamVector::single("x", alloc::vec![0.7, 0.1, -0.4]);
        let j = jacobian(
            |t, x| {
                a.iter()
                    .map(|row| t.linear(&[(x[0], row[0]), (x[1], row[1]), (x[2], row[2])], 0.0))
                    .collect()
            },
            &p,
        )
        .unwrap();
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(j[(r, c)], a[r][c]);
            }
        }
    }

    #[test]
    fn non_finite_names_first_node() {
        let err = grad(
            |t, x| {
                let z = t.constant(0.0);
                let l = t.ln(z);
                t.add(l, x[0])
            },
            &scalar(1.0),
        )
        .unwrap_err();
        assert_eq!(
            err,
            AdError::NonFinite {
                node: 2,
                op: Op::Ln
            }
        );
    }

    type Unary = fn(&mut Tape, Var) -> Var;

    /// Every unary primitive against central differences on random inputs.
    #[test]
    fn unary_primitives_match_differences() {
        let prims: [(&str, Unary, fn(f64) -> f64, (f64, f64)); 9] = [
            ("square", |t, a| t.square(a), |x| x * x, (-3.0, 3.0)),
            ("sqrt", |t, a| t.sqrt(a), math::sqrt, (0.1, 4.0)),
            ("exp", |t, a| t.exp(a), math::exp, (-3.0, 3.0)),
            ("ln", |t, a| t.ln(a), math::ln, (0.1, 5.0)),
            ("sin", |t, a| t.sin(a), math::sin, (-4.0, 4.0)),
            ("cos", |t, a| t.cos(a), math::cos, (-4.0, 4.0)),
            ("tanh", |t, a| t.tanh(a), math::tanh, (-3.0, 3.0)),
            (
                "softplus",
                |t, a| t.softplus(a),
                math::softplus,
                (-8.0, 8.0),
            ),
            ("neg", |t, a| t.neg(a), |x| -x, (-3.0, 3.0)),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for (name, prim, f, (lo, hi)) in prims {
            for _ in 0..100 {
                let x: f64 = rng.random_range(lo..hi);
                let g = grad(|t, v| prim(t, v[0]), &scalar(x)).unwrap().values()[0];
                let fd = (f(x + h) - f(x - h)) / (2.0 * h);
                let rel = (g - fd).abs() / fd.abs().max(1.0);
                assert!(rel < 1e-5, "{name} at {x}: {g} vs {fd}");
            }
        }
    }

    #[test]
    fn binary_primitives_match_differences() {
        type Binary = fn(&mut Tape, Var, Var) -> Var;
        let prims: [(&str, Binary, fn(f64, f64) -> f64); 4] = [
            ("add", |t, a, b| t.add(a, b), |x, y| x + y),
            ("sub", |t, a, b| t.sub(a, b), |x, y| x - y),
            ("mul", |t, a, b| t.mul(a, b), |x, y| x * y),
            ("div", |t, a, b| t.div(a, b), |x, y| x / y),
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let h = 1e-5;
        for (name, prim, f) in prims {
            for _ in 0..100 {
                let x: f64 = rng.random_range(-2.0..2.0);
                let y: f64 = rng.random_range(0.5..3.0);
                let p = ParamVector::single("xy", alloc::vec![x, y]);
                let g = grad(|t, v| prim(t, v[0], v[1]), &p).unwrap();
                let fdx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
                let fdy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
                assert!(
                    (g.values()[0] - fdx).abs() / fdx.abs().max(1.0) < 1e-5,
                    "{name}"
                );
                assert!(
                    (g.values()[1] - fdy).abs() / fdy.abs().max(1.0) < 1e-5,
                    "{name}"
                );
            }
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let p = ParamVector::single("x", alloc::vec![0.3, -0.7, 1.1]);
        let f = |t: &mut Tape, x: &[Var]| {
            let a = t.sin(x[0]);
            let b = t.dot(&[a, x[1]], &[x[2], x[0]]);
            let c = t.tanh(b);
            t.softplus(c)
        };
        let g1 = grad(f, &p).unwrap();
        let g2 = grad(f, &p).unwrap();
        for (a, b) in g1.values().iter().zip(g2.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
