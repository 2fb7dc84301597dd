use crate::math;

/// Primitive kind recorded with every tape node, reported when a value
/// turns non-finite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Square,
    Sqrt,
    Exp,
    Ln,
    Sin,
    Cos,
    Tanh,
    Softplus,
    Linear,
    Dot,
    Sum,
    /// A fused primitive with hand-derived partials.
    Fused(&'static str),
}

/// Scalar evaluation context.
///
/// Numerical code is written once against this trait. [`Eval`] computes
/// plain values; [`super::Tape`] additionally records every value with its
/// local partial derivatives for a reverse sweep.
///
/// Every primitive reduces to [`Ops::custom`]: a value plus the partial of
/// that value with respect to each operand.
pub trait Ops {
    type V: Copy;

    fn constant(&mut self, x: f64) -> Self::V;
    fn val(&self, v: Self::V) -> f64;
    fn custom(&mut self, op: Op, value: f64, partials: &[(Self::V, f64)]) -> Self::V;

    /// Whether partials are consumed. Fused primitives may skip computing
    /// them when this is false.
    fn records(&self) -> bool {
        true
    }

    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V {
        let v = self.val(a) + self.val(b);
        self.custom(Op::Add, v, &[(a, 1.0), (b, 1.0)])
    }

    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V {
        let v = self.val(a) - self.val(b);
        self.custom(Op::Sub, v, &[(a, 1.0), (b, -1.0)])
    }

    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V {
        let (x, y) = (self.val(a), self.val(b));
        self.custom(Op::Mul, x * y, &[(a, y), (b, x)])
    }

    fn div(&mut self, a: Self::V, b: Self::V) -> Self::V {
        let (x, y) = (self.val(a), self.val(b));
        let q = x / y;
        self.custom(Op::Div, q, &[(a, 1.0 / y), (b, -q / y)])
    }

    fn neg(&mut self, a: Self::V) -> Self::V {
        let v = -self.val(a);
        self.custom(Op::Neg, v, &[(a, -1.0)])
    }

    fn add_const(&mut self, a: Self::V, c: f64) -> Self::V {
        let v = self.val(a) + c;
        self.custom(Op::Add, v, &[(a, 1.0)])
    }

    fn mul_const(&mut self, a: Self::V, c: f64) -> Self::V {
        let v = self.val(a) * c;
        self.custom(Op::Mul, v, &[(a, c)])
    }

    fn square(&mut self, a: Self::V) -> Self::V {
        let x = self.val(a);
        self.custom(Op::Square, x * x, &[(a, 2.0 * x)])
    }

    fn sqrt(&mut self, a: Self::V) -> Self::V {
        let r = math::sqrt(self.val(a));
        self.custom(Op::Sqrt, r, &[(a, 0.5 / r)])
    }

    fn exp(&mut self, a: Self::V) -> Self::V {
        let e = math::exp(self.val(a));
        self.custom(Op::Exp, e, &[(a, e)])
    }

    fn ln(&mut self, a: Self::V) -> Self::V {
        let x = self.val(a);
        self.custom(Op::Ln, math::ln(x), &[(a, 1.0 / x)])
    }

    fn sin(&mut self, a: Self::V) -> Self::V {
        let x = self.val(a);
        self.custom(Op::Sin, math::sin(x), &[(a, math::cos(x))])
    }

    fn cos(&mut self, a: Self::V) -> Self::V {
        let x = self.val(a);
        self.custom(Op::Cos, math::cos(x), &[(a, -math::sin(x))])
    }

    fn tanh(&mut self, a: Self::V) -> Self::V {
        let t = math::tanh(self.val(a));
        self.custom(Op::Tanh, t, &[(a, 1.0 - t * t)])
    }

    fn softplus(&mut self, a: Self::V) -> Self::V {
        let x = self.val(a);
        self.custom(Op::Softplus, math::softplus(x), &[(a, math::sigmoid(x))])
    }

    /// `bias + Σ wᵢ·xᵢ` with constant weights.
    fn linear(&mut self, terms: &[(Self::V, f64)], bias: f64) -> Self::V {
        let v = terms
            .iter()
            .fold(bias, |acc, &(x, w)| acc + w * self.val(x));
        self.custom(Op::Linear, v, terms)
    }

    fn sum(&mut self, xs: &[Self::V]) -> Self::V {
        let mut buf = alloc::vec::Vec::with_capacity(xs.len());
        let mut v = 0.0;
        for &x in xs {
            v += self.val(x);
            buf.push((x, 1.0));
        }
        self.custom(Op::Sum, v, &buf)
    }

    /// `Σ aᵢ·bᵢ` with both operands recorded.
    fn dot(&mut self, a: &[Self::V], b: &[Self::V]) -> Self::V {
        debug_assert_eq!(a.len(), b.len());
        let mut buf = alloc::vec::Vec::with_capacity(2 * a.len());
        let mut v = 0.0;
        for (&x, &y) in a.iter().zip(b) {
            let (xv, yv) = (self.val(x), self.val(y));
            v += xv * yv;
            buf.push((x, yv));
            buf.push((y, xv));
        }
        self.custom(Op::Dot, v, &buf)
    }
}

/// Plain `f64` evaluation; nothing is recorded.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eval;

impl Ops for Eval {
    type V = f64;

    #[inline]
    fn constant(&mut self, x: f64) -> f64 {
        x
    }

    #[inline]
    fn val(&self, v: f64) -> f64 {
        v
    }

    #[inline]
    fn custom(&mut self, _op: Op, value: f64, _partials: &[(f64, f64)]) -> f64 {
        value
    }

    #[inline]
    fn records(&self) -> bool {
        false
    }

    #[inline]
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }

    #[inline]
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }

    #[inline]
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }

    fn linear(&mut self, terms: &[(f64, f64)], bias: f64) -> f64 {
        terms.iter().fold(bias, |acc, &(x, w)| acc + w * x)
    }

    fn sum(&mut self, xs: &[f64]) -> f64 {
        xs.iter().sum()
    }

    fn dot(&mut self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}
