use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::{DiffError, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tensor {
    pub(crate) id: usize,
    pub(crate) rows: usize,
    pub(crate) cols: usize,
}

impl Tensor {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Unary {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Softplus,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Div(Tensor, Tensor),
    Scale(Tensor, f64),
    AddConst(Tensor),
    AddBias(Tensor, Tensor),
    MulCol(Tensor, Tensor),
    MatMul(Tensor, Tensor),
    Transpose(Tensor),
    Reshape(Tensor),
    ConcatRows(Vec<Tensor>),
    ConcatCols(Vec<Tensor>),
    SliceCols {
        src: Tensor,
        start: usize,
    },
    Gather {
        src: Tensor,
        index: Vec<usize>,
    },
    SumGroups {
        src: Tensor,
        groups: Vec<Option<usize>>,
    },
    MaxGroups {
        src: Tensor,
        argmax: Vec<usize>,
    },
    Sum(Tensor),
    Mean(Tensor),
    Unary(Unary, Tensor),
    Atan2(Tensor, Tensor),
    Softmax(Tensor),
    LayerNorm {
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    MinReduce {
        src: Tensor,
        argmin: Vec<usize>,
    },
    SquareNorm(Tensor),
    Clamp {
        src: Tensor,
        lo: f64,
        hi: f64,
    },
    NearestDist {
        a: Tensor,
        b: Tensor,
        argmin: Vec<usize>,
    },
}

pub(crate) struct Node {
    pub(crate) value: Vec<f64>,
    pub(crate) op: Op,
    pub(crate) param: Option<ParamId>,
}

/// A computation tape. Values are computed eagerly as ops are recorded.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    pub(crate) grads: Vec<Option<Vec<f64>>>,
    params: HashMap<ParamId, Tensor>,
}

fn check_finite(values: &[f64], op: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DiffError::NonFinite(op))
    }
}

fn mismatch(op: &'static str, a: Tensor, b: Tensor) -> DiffError {
    DiffError::ShapeMismatch {
        op,
        lhs: a.dims(),
        rhs: b.dims(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(
        &mut self,
        rows: usize,
        cols: usize,
        value: Vec<f64>,
        op: Op,
        name: &'static str,
    ) -> Result<Tensor> {
        debug_assert_eq!(value.len(), rows * cols);
        check_finite(&value, name)?;
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        self.grads.push(None);
        Ok(Tensor { id, rows, cols })
    }

    /// Constant (or differentiable input) leaf.
    pub fn leaf(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<Tensor> {
        if value.len() != rows * cols {
            return Err(DiffError::ShapeMismatch {
                op: "leaf",
                lhs: (rows, cols),
                rhs: (value.len(), 1),
            });
        }
        self.push(rows, cols, value, Op::Leaf, "leaf")
    }

    pub fn scalar(&mut self, v: f64) -> Result<Tensor> {
        self.leaf(1, 1, vec![v])
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Result<Tensor> {
        self.leaf(rows, cols, vec![0.0; rows * cols])
    }

    /// Leaf holding the current value of a stored parameter. Repeated calls
    /// return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Tensor> {
        if let Some(&t) = self.params.get(&id) {
            return Ok(t);
        }
        let p = store.get(id);
        let t = self.leaf(p.rows, p.cols, p.value.clone())?;
        self.nodes[t.id].param = Some(id);
        self.params.insert(id, t);
        Ok(t)
    }

    /// Parameter leaves registered in this graph.
    pub fn param_leaves(&self) -> impl Iterator<Item = (ParamId, Tensor)> + '_ {
        self.params.iter().map(|(&p, &t)| (p, t))
    }

    pub fn value(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.id].value
    }

    pub fn scalar_value(&self, t: Tensor) -> f64 {
        self.nodes[t.id].value[0]
    }

    /// Element `(r, c)` of `t`.
    pub fn at(&self, t: Tensor, r: usize, c: usize) -> f64 {
        self.nodes[t.id].value[r * t.cols + c]
    }

    /// Accumulated gradient, if backward reached `t`.
    pub fn grad(&self, t: Tensor) -> Option<&[f64]> {
        self.grads[t.id].as_deref()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    fn binary(
        &mut self,
        a: Tensor,
        b: Tensor,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (rows, cols) = if a.dims() == b.dims() || b.len() == 1 {
            a.dims()
        } else if a.len() == 1 {
            b.dims()
        } else {
            return Err(mismatch(name, a, b));
        };
        let av = &self.nodes[a.id].value;
        let bv = &self.nodes[b.id].value;
        let n = rows * cols;
        let value: Vec<f64> = (0..n)
            .map(|i| {
                f(
                    av[if a.len() == 1 { 0 } else { i }],
                    bv[if b.len() == 1 { 0 } else { i }],
                )
            })
            .collect();
        self.push(rows, cols, value, op, name)
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(a, b, "div", Op::Div(a, b), |x, y| x / y)
    }

    /// `c * a` for a constant `c`.
    pub fn scale(&mut self, a: Tensor, c: f64) -> Result<Tensor> {
        let value = self.nodes[a.id].value.iter().map(|v| v * c).collect();
        self.push(a.rows, a.cols, value, Op::Scale(a, c), "scale")
    }

    /// `a + c` for a constant `c`.
    pub fn add_const(&mut self, a: Tensor, c: f64) -> Result<Tensor> {
        let value = self.nodes[a.id].value.iter().map(|v| v + c).collect();
        self.push(a.rows, a.cols, value, Op::AddConst(a), "add_const")
    }

    /// Adds the row vector `bias` (1 x cols) to every row of `x`.
    pub fn add_bias(&mut self, x: Tensor, bias: Tensor) -> Result<Tensor> {
        if bias.rows != 1 || bias.cols != x.cols {
            return Err(mismatch("add_bias", x, bias));
        }
        let xv = &self.nodes[x.id].value;
        let bv = &self.nodes[bias.id].value;
        let value = xv
            .iter()
            .enumerate()
            .map(|(i, v)| v + bv[i % x.cols])
            .collect();
        self.push(x.rows, x.cols, value, Op::AddBias(x, bias), "add_bias")
    }

    /// Multiplies row `i` of `x` by `s[i]` (s: rows x 1).
    pub fn mul_col(&mut self, x: Tensor, s: Tensor) -> Result<Tensor> {
        if s.cols != 1 || s.rows != x.rows {
            return Err(mismatch("mul_col", x, s));
        }
        let xv = &self.nodes[x.id].value;
        let sv = &self.nodes[s.id].value;
        let value = xv
            .iter()
            .enumerate()
            .map(|(i, v)| v * sv[i / x.cols])
            .collect();
        self.push(x.rows, x.cols, value, Op::MulCol(x, s), "mul_col")
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.cols != b.rows {
            return Err(mismatch("matmul", a, b));
        }
        let value = matmul_raw(
            &self.nodes[a.id].value,
            &self.nodes[b.id].value,
            a.rows,
            a.cols,
            b.cols,
        );
        self.push(a.rows, b.cols, value, Op::MatMul(a, b), "matmul")
    }

    pub fn transpose(&mut self, a: Tensor) -> Result<Tensor> {
        let v = &self.nodes[a.id].value;
        let mut out = vec![0.0; a.len()];
        for r in 0..a.rows {
            for c in 0..a.cols {
                out[c * a.rows + r] = v[r * a.cols + c];
            }
        }
        self.push(a.cols, a.rows, out, Op::Transpose(a), "transpose")
    }

    /// Row-major reinterpretation with the same element count.
    pub fn reshape(&mut self, a: Tensor, rows: usize, cols: usize) -> Result<Tensor> {
        if rows * cols != a.len() {
            return Err(DiffError::ShapeMismatch {
                op: "reshape",
                lhs: a.dims(),
                rhs: (rows, cols),
            });
        }
        let value = self.nodes[a.id].value.clone();
        self.push(rows, cols, value, Op::Reshape(a), "reshape")
    }

    /// Stacks tensors with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        let Some(first) = parts.first() else {
            return Err(DiffError::ShapeMismatch {
                op: "concat_rows",
                lhs: (0, 0),
                rhs: (0, 0),
            });
        };
        let mut value = Vec::new();
        let mut rows = 0;
        for &p in parts {
            if p.cols != first.cols {
                return Err(mismatch("concat_rows", *first, p));
            }
            value.extend_from_slice(&self.nodes[p.id].value);
            rows += p.rows;
        }
        self.push(
            rows,
            first.cols,
            value,
            Op::ConcatRows(parts.to_vec()),
            "concat_rows",
        )
    }

    /// Places tensors with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Tensor]) -> Result<Tensor> {
        let Some(first) = parts.first() else {
            return Err(DiffError::ShapeMismatch {
                op: "concat_cols",
                lhs: (0, 0),
                rhs: (0, 0),
            });
        };
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut value = Vec::with_capacity(first.rows * cols);
        for &p in parts {
            if p.rows != first.rows {
                return Err(mismatch("concat_cols", *first, p));
            }
        }
        for r in 0..first.rows {
            for &p in parts {
                value.extend_from_slice(&self.nodes[p.id].value[r * p.cols..(r + 1) * p.cols]);
            }
        }
        self.push(
            first.rows,
            cols,
            value,
            Op::ConcatCols(parts.to_vec()),
            "concat_cols",
        )
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, src: Tensor, start: usize, len: usize) -> Result<Tensor> {
        if start + len > src.cols {
            return Err(DiffError::ShapeMismatch {
                op: "slice_cols",
                lhs: src.dims(),
                rhs: (start, len),
            });
        }
        let v = &self.nodes[src.id].value;
        let mut value = Vec::with_capacity(src.rows * len);
        for r in 0..src.rows {
            value.extend_from_slice(&v[r * src.cols + start..r * src.cols + start + len]);
        }
        self.push(
            src.rows,
            len,
            value,
            Op::SliceCols { src, start },
            "slice_cols",
        )
    }

    /// Row gather: output row `i` is `src[index[i]]`.
    pub fn gather(&mut self, src: Tensor, index: &[usize]) -> Result<Tensor> {
        let v = &self.nodes[src.id].value;
        let mut value = Vec::with_capacity(index.len() * src.cols);
        for &i in index {
            if i >= src.rows {
                return Err(DiffError::IndexOutOfRange {
                    op: "gather",
                    index: i,
                    len: src.rows,
                });
            }
            value.extend_from_slice(&v[i * src.cols..(i + 1) * src.cols]);
        }
        self.push(
            index.len(),
            src.cols,
            value,
            Op::Gather {
                src,
                index: index.to_vec(),
            },
            "gather",
        )
    }

    /// Sums the rows of `src` into `n_groups` rows; rows mapped to `None` are dropped.
    pub fn sum_groups(
        &mut self,
        src: Tensor,
        groups: &[Option<usize>],
        n_groups: usize,
    ) -> Result<Tensor> {
        if groups.len() != src.rows {
            return Err(DiffError::ShapeMismatch {
                op: "sum_groups",
                lhs: src.dims(),
                rhs: (groups.len(), 1),
            });
        }
        let v = &self.nodes[src.id].value;
        let mut value = vec![0.0; n_groups * src.cols];
        for (r, g) in groups.iter().enumerate() {
            if let Some(g) = *g {
                if g >= n_groups {
                    return Err(DiffError::IndexOutOfRange {
                        op: "sum_groups",
                        index: g,
                        len: n_groups,
                    });
                }
                for c in 0..src.cols {
                    value[g * src.cols + c] += v[r * src.cols + c];
                }
            }
        }
        self.push(
            n_groups,
            src.cols,
            value,
            Op::SumGroups {
                src,
                groups: groups.to_vec(),
            },
            "sum_groups",
        )
    }

    /// Column-wise max over each group of rows. Every group must be non-empty;
    /// ties go to the lowest row.
    pub fn max_groups(&mut self, src: Tensor, groups: &[usize], n_groups: usize) -> Result<Tensor> {
        if groups.len() != src.rows {
            return Err(DiffError::ShapeMismatch {
                op: "max_groups",
                lhs: src.dims(),
                rhs: (groups.len(), 1),
            });
        }
        let v = &self.nodes[src.id].value;
        let mut value = vec![f64::NEG_INFINITY; n_groups * src.cols];
        let mut argmax = vec![usize::MAX; n_groups * src.cols];
        for (r, &g) in groups.iter().enumerate() {
            if g >= n_groups {
                return Err(DiffError::IndexOutOfRange {
                    op: "max_groups",
                    index: g,
                    len: n_groups,
                });
            }
            for c in 0..src.cols {
                let x = v[r * src.cols + c];
                let k = g * src.cols + c;
                if x > value[k] {
                    value[k] = x;
                    argmax[k] = r * src.cols + c;
                }
            }
        }
        self.push(
            n_groups,
            src.cols,
            value,
            Op::MaxGroups { src, argmax },
            "max_groups",
        )
    }

    pub fn sum(&mut self, a: Tensor) -> Result<Tensor> {
        let s = self.nodes[a.id].value.iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Tensor) -> Result<Tensor> {
        let v = &self.nodes[a.id].value;
        let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
        self.push(1, 1, vec![m], Op::Mean(a), "mean")
    }

    fn unary(&mut self, kind: Unary, a: Tensor, name: &'static str) -> Result<Tensor> {
        let f: fn(f64) -> f64 = match kind {
            Unary::Relu => |x| x.max(0.0),
            Unary::Sigmoid => sigmoid,
            Unary::Tanh => f64::tanh,
            Unary::Exp => f64::exp,
            Unary::Log => f64::ln,
            Unary::Sin => f64::sin,
            Unary::Cos => f64::cos,
            Unary::Sqrt => f64::sqrt,
            Unary::Softplus => softplus,
        };
        let value = self.nodes[a.id].value.iter().map(|&x| f(x)).collect();
        self.push(a.rows, a.cols, value, Op::Unary(kind, a), name)
    }

    pub fn relu(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(Unary::Relu, a, "relu")
    }

    pub fn sigmoid(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(Unary::Sigmoid, a, "sigmoid")
    }

    pub fn tanh(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(Unary::Tanh, a, "tanh")
    }

    pub fn exp(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(Unary::Exp, a, "exp")
    }

    pub fn log(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(Unary::Log, a, "log")
    }

    pub fn sin(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(Unary::Sin, a, "sin")
    }

    pub fn cos(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(Unary::Cos, a, "cos")
    }

    /// Square root; the gradient at exactly zero is taken as zero.
    pub fn sqrt(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(Unary::Sqrt, a, "sqrt")
    }

    /// `ln(1 + e^x)`, computed without overflow.
    pub fn softplus(&mut self, a: Tensor) -> Result<Tensor> {
        self.unary(Unary::Softplus, a, "softplus")
    }

    /// Elementwise `atan2(y, x)`; the gradient at the origin is taken as zero.
    pub fn atan2(&mut self, y: Tensor, x: Tensor) -> Result<Tensor> {
        if y.dims() != x.dims() {
            return Err(mismatch("atan2", y, x));
        }
        let yv = &self.nodes[y.id].value;
        let xv = &self.nodes[x.id].value;
        let value = yv.iter().zip(xv).map(|(&a, &b)| a.atan2(b)).collect();
        self.push(y.rows, y.cols, value, Op::Atan2(y, x), "atan2")
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Tensor) -> Result<Tensor> {
        let v = &self.nodes[a.id].value;
        let mut out = vec![0.0; a.len()];
        for r in 0..a.rows {
            let row = &v[r * a.cols..(r + 1) * a.cols];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (c, &x) in row.iter().enumerate() {
                let e = (x - m).exp();
                out[r * a.cols + c] = e;
                z += e;
            }
            for c in 0..a.cols {
                out[r * a.cols + c] /= z;
            }
        }
        self.push(a.rows, a.cols, out, Op::Softmax(a), "softmax")
    }

    /// Row-wise normalization followed by a learned scale (`gamma`) and shift
    /// (`beta`), both `1 x cols`.
    pub fn layer_norm(&mut self, x: Tensor, gamma: Tensor, beta: Tensor) -> Result<Tensor> {
        if gamma.dims() != (1, x.cols) || beta.dims() != (1, x.cols) {
            return Err(mismatch("layer_norm", x, gamma));
        }
        const EPS: f64 = 1e-5;
        let v = &self.nodes[x.id].value;
        let g = &self.nodes[gamma.id].value;
        let b = &self.nodes[beta.id].value;
        let n = x.cols as f64;
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; x.rows];
        let mut out = vec![0.0; x.len()];
        for r in 0..x.rows {
            let row = &v[r * x.cols..(r + 1) * x.cols];
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std[r] = is;
            for c in 0..x.cols {
                let h = (row[c] - mean) * is;
                xhat[r * x.cols + c] = h;
                out[r * x.cols + c] = h * g[c] + b[c];
            }
        }
        self.push(
            x.rows,
            x.cols,
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            "layer_norm",
        )
    }

    /// Row-wise minimum (rows x 1). The gradient goes to the first minimal entry.
    pub fn min_reduce(&mut self, a: Tensor) -> Result<Tensor> {
        let v = &self.nodes[a.id].value;
        let mut out = Vec::with_capacity(a.rows);
        let mut argmin = Vec::with_capacity(a.rows);
        for r in 0..a.rows {
            let row = &v[r * a.cols..(r + 1) * a.cols];
            let (mut best, mut arg) = (f64::INFINITY, 0);
            for (c, &x) in row.iter().enumerate() {
                if x < best {
                    best = x;
                    arg = c;
                }
            }
            out.push(best);
            argmin.push(arg);
        }
        self.push(
            a.rows,
            1,
            out,
            Op::MinReduce { src: a, argmin },
            "min_reduce",
        )
    }

    /// Elementwise clamp to `[lo, hi]`; the gradient is zero outside the range.
    pub fn clamp(&mut self, a: Tensor, lo: f64, hi: f64) -> Result<Tensor> {
        let value = self.nodes[a.id]
            .value
            .iter()
            .map(|v| v.clamp(lo, hi))
            .collect();
        self.push(a.rows, a.cols, value, Op::Clamp { src: a, lo, hi }, "clamp")
    }

    /// Row-wise sum of squares (rows x 1).
    pub fn square_norm(&mut self, a: Tensor) -> Result<Tensor> {
        let v = &self.nodes[a.id].value;
        let out = (0..a.rows)
            .map(|r| v[r * a.cols..(r + 1) * a.cols].iter().map(|x| x * x).sum())
            .collect();
        self.push(a.rows, 1, out, Op::SquareNorm(a), "square_norm")
    }

    /// For each row of `a`, the Euclidean distance to the closest row of `b`
    /// (rows(a) x 1). Equivalent to `sqrt(min_reduce(square_norm(a_i - b_j)))`
    /// without materializing the pairwise matrix. Ties go to the lowest row of `b`.
    pub fn nearest_dist(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.cols != b.cols || b.rows == 0 {
            return Err(mismatch("nearest_dist", a, b));
        }
        let av = &self.nodes[a.id].value;
        let bv = &self.nodes[b.id].value;
        let d = a.cols;
        let mut out = Vec::with_capacity(a.rows);
        let mut argmin = Vec::with_capacity(a.rows);
        for i in 0..a.rows {
            let p = &av[i * d..(i + 1) * d];
            let (mut best, mut arg) = (f64::INFINITY, 0);
            for j in 0..b.rows {
                let q = &bv[j * d..(j + 1) * d];
                let mut s = 0.0;
                for k in 0..d {
                    let t = p[k] - q[k];
                    s += t * t;
                }
                if s < best {
                    best = s;
                    arg = j;
                }
            }
            out.push(best.sqrt());
            argmin.push(arg);
        }
        self.push(
            a.rows,
            1,
            out,
            Op::NearestDist { a, b, argmin },
            "nearest_dist",
        )
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &y) in orow.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    out
}
