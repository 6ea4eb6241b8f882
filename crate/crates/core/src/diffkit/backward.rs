use super::graph::{matmul_raw, sigmoid, Graph, Op, Tensor, Unary};
use super::{DiffError, Result};

impl Graph {
    /// Reverse sweep from a scalar `loss`. Gradients are added to whatever
    /// the nodes already hold, so repeated calls accumulate.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if loss.len() != 1 {
            return Err(DiffError::NotScalar(loss.rows, loss.cols));
        }
        let mut pending: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        pending[loss.id] = Some(vec![1.0]);
        for id in (0..=loss.id).rev() {
            let Some(g) = pending[id].take() else {
                continue;
            };
            let op = std::mem::replace(&mut self.nodes[id].op, Op::Leaf);
            self.propagate(id, &op, &g, &mut pending);
            self.nodes[id].op = op;
            match &mut self.grads[id] {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, id: usize, op: &Op, g: &[f64], pending: &mut [Option<Vec<f64>>]) {
        let out = &self.nodes[id].value;
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.send_broadcast(pending, *a, g, |gi, _| gi);
                self.send_broadcast(pending, *b, g, |gi, _| gi);
            }
            Op::Sub(a, b) => {
                self.send_broadcast(pending, *a, g, |gi, _| gi);
                self.send_broadcast(pending, *b, g, |gi, _| -gi);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                self.send_broadcast(pending, *a, g, |gi, i| {
                    gi * bv[if b.len() == 1 { 0 } else { i }]
                });
                self.send_broadcast(pending, *b, g, |gi, i| {
                    gi * av[if a.len() == 1 { 0 } else { i }]
                });
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let bi = |i: usize| bv[if b.len() == 1 { 0 } else { i }];
                let ai = |i: usize| av[if a.len() == 1 { 0 } else { i }];
                self.send_broadcast(pending, *a, g, |gi, i| gi / bi(i));
                self.send_broadcast(pending, *b, g, |gi, i| -gi * ai(i) / (bi(i) * bi(i)));
            }
            Op::Scale(a, c) => send(pending, *a, g.iter().map(|x| x * c).collect()),
            Op::AddConst(a) => send(pending, *a, g.to_vec()),
            Op::AddBias(x, bias) => {
                send(pending, *x, g.to_vec());
                let mut gb = vec![0.0; bias.cols];
                for (i, gi) in g.iter().enumerate() {
                    gb[i % bias.cols] += gi;
                }
                send(pending, *bias, gb);
            }
            Op::MulCol(x, s) => {
                let (xv, sv) = (self.val(*x), self.val(*s));
                send(
                    pending,
                    *x,
                    g.iter()
                        .enumerate()
                        .map(|(i, gi)| gi * sv[i / x.cols])
                        .collect(),
                );
                let mut gs = vec![0.0; s.rows];
                for (i, gi) in g.iter().enumerate() {
                    gs[i / x.cols] += gi * xv[i];
                }
                send(pending, *s, gs);
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let (n, k, m) = (a.rows, a.cols, b.cols);
                // dA = G B^T, dB = A^T G
                let bt = transpose_raw(bv, k, m);
                send(pending, *a, matmul_raw(g, &bt, n, m, k));
                let at = transpose_raw(av, n, k);
                send(pending, *b, matmul_raw(&at, g, k, n, m));
            }
            Op::Transpose(a) => send(pending, *a, transpose_raw(g, a.cols, a.rows)),
            Op::Reshape(a) => send(pending, *a, g.to_vec()),
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    send(pending, *p, g[off..off + p.len()].to_vec());
                    off += p.len();
                }
            }
            Op::ConcatCols(parts) => {
                let total: usize = parts.iter().map(|p| p.cols).sum();
                let mut off = 0;
                for p in parts {
                    let mut gp = Vec::with_capacity(p.len());
                    for r in 0..p.rows {
                        gp.extend_from_slice(&g[r * total + off..r * total + off + p.cols]);
                    }
                    send(pending, *p, gp);
                    off += p.cols;
                }
            }
            Op::SliceCols { src, start } => {
                let len = g.len() / src.rows.max(1);
                let mut gs = vec![0.0; src.len()];
                for r in 0..src.rows {
                    gs[r * src.cols + start..r * src.cols + start + len]
                        .copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                send(pending, *src, gs);
            }
            Op::Gather { src, index } => {
                let mut gs = vec![0.0; src.len()];
                for (o, &i) in index.iter().enumerate() {
                    for c in 0..src.cols {
                        gs[i * src.cols + c] += g[o * src.cols + c];
                    }
                }
                send(pending, *src, gs);
            }
            Op::SumGroups { src, groups } => {
                let mut gs = vec![0.0; src.len()];
                for (r, grp) in groups.iter().enumerate() {
                    if let Some(k) = *grp {
                        gs[r * src.cols..(r + 1) * src.cols]
                            .copy_from_slice(&g[k * src.cols..(k + 1) * src.cols]);
                    }
                }
                send(pending, *src, gs);
            }
            Op::MaxGroups { src, argmax } => {
                let mut gs = vec![0.0; src.len()];
                for (k, &pos) in argmax.iter().enumerate() {
                    if pos != usize::MAX {
                        gs[pos] += g[k];
                    }
                }
                send(pending, *src, gs);
            }
            Op::Sum(a) => send(pending, *a, vec![g[0]; a.len()]),
            Op::Mean(a) => send(pending, *a, vec![g[0] / a.len().max(1) as f64; a.len()]),
            Op::Unary(kind, a) => {
                let x = self.val(*a);
                let d: Vec<f64> = g
                    .iter()
                    .enumerate()
                    .map(|(i, gi)| {
                        gi * match kind {
                            Unary::Relu => {
                                if x[i] > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Sigmoid => out[i] * (1.0 - out[i]),
                            Unary::Tanh => 1.0 - out[i] * out[i],
                            Unary::Exp => out[i],
                            Unary::Log => 1.0 / x[i],
                            Unary::Sin => x[i].cos(),
                            Unary::Cos => -x[i].sin(),
                            Unary::Sqrt => {
                                if out[i] > 0.0 {
                                    0.5 / out[i]
                                } else {
                                    0.0
                                }
                            }
                            Unary::Softplus => sigmoid(x[i]),
                        }
                    })
                    .collect();
                send(pending, *a, d);
            }
            Op::Atan2(y, x) => {
                let (yv, xv) = (self.val(*y), self.val(*x));
                let mut gy = vec![0.0; g.len()];
                let mut gx = vec![0.0; g.len()];
                for i in 0..g.len() {
                    let r2 = xv[i] * xv[i] + yv[i] * yv[i];
                    if r2 > 0.0 {
                        gy[i] = g[i] * xv[i] / r2;
                        gx[i] = -g[i] * yv[i] / r2;
                    }
                }
                send(pending, *y, gy);
                send(pending, *x, gx);
            }
            Op::Softmax(a) => {
                let mut ga = vec![0.0; a.len()];
                for r in 0..a.rows {
                    let s = &out[r * a.cols..(r + 1) * a.cols];
                    let gr = &g[r * a.cols..(r + 1) * a.cols];
                    let dot: f64 = s.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for c in 0..a.cols {
                        ga[r * a.cols + c] = s[c] * (gr[c] - dot);
                    }
                }
                send(pending, *a, ga);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gv = self.val(*gamma);
                let n = x.cols as f64;
                let mut gx = vec![0.0; x.len()];
                let mut gg = vec![0.0; x.cols];
                let mut gb = vec![0.0; x.cols];
                for r in 0..x.rows {
                    let base = r * x.cols;
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    for c in 0..x.cols {
                        let d = g[base + c] * gv[c];
                        sum_d += d;
                        sum_dx += d * xhat[base + c];
                        gg[c] += g[base + c] * xhat[base + c];
                        gb[c] += g[base + c];
                    }
                    for c in 0..x.cols {
                        let d = g[base + c] * gv[c];
                        gx[base + c] = inv_std[r] / n * (n * d - sum_d - xhat[base + c] * sum_dx);
                    }
                }
                send(pending, *x, gx);
                send(pending, *gamma, gg);
                send(pending, *beta, gb);
            }
            Op::MinReduce { src, argmin } => {
                let mut gs = vec![0.0; src.len()];
                for (r, &c) in argmin.iter().enumerate() {
                    gs[r * src.cols + c] = g[r];
                }
                send(pending, *src, gs);
            }
            Op::Clamp { src, lo, hi } => {
                let x = self.val(*src);
                let gs = g
                    .iter()
                    .zip(x)
                    .map(|(gi, v)| if (*lo..=*hi).contains(v) { *gi } else { 0.0 })
                    .collect();
                send(pending, *src, gs);
            }
            Op::SquareNorm(a) => {
                let x = self.val(*a);
                send(
                    pending,
                    *a,
                    x.iter()
                        .enumerate()
                        .map(|(i, v)| 2.0 * v * g[i / a.cols])
                        .collect(),
                );
            }
            Op::NearestDist { a, b, argmin } => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let d = a.cols;
                let mut ga = vec![0.0; a.len()];
                let mut gb = vec![0.0; b.len()];
                for (i, &j) in argmin.iter().enumerate() {
                    let dist = out[i];
                    if dist <= 0.0 {
                        continue;
                    }
                    for k in 0..d {
                        let u = g[i] * (av[i * d + k] - bv[j * d + k]) / dist;
                        ga[i * d + k] += u;
                        gb[j * d + k] -= u;
                    }
                }
                send(pending, *a, ga);
                send(pending, *b, gb);
            }
        }
    }

    fn val(&self, t: Tensor) -> &[f64] {
        &self.nodes[t.id].value
    }

    /// Sends `f(g_i, i)` to `t`, summing when `t` was broadcast as a scalar.
    fn send_broadcast(
        &self,
        pending: &mut [Option<Vec<f64>>],
        t: Tensor,
        g: &[f64],
        f: impl Fn(f64, usize) -> f64,
    ) {
        if t.len() == 1 && g.len() != 1 {
            let s = g.iter().enumerate().map(|(i, &gi)| f(gi, i)).sum();
            send(pending, t, vec![s]);
        } else {
            send(
                pending,
                t,
                g.iter().enumerate().map(|(i, &gi)| f(gi, i)).collect(),
            );
        }
    }
}

fn send(pending: &mut [Option<Vec<f64>>], t: Tensor, g: Vec<f64>) {
    match &mut pending[t.id] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot => *slot = Some(g),
    }
}

fn transpose_raw(v: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = v[r * cols + c];
        }
    }
    out
}
