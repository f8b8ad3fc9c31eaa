//! Minimal reverse-mode autodiff over flat f64 arrays.
//!
//! A [`Tape`] is an append-only arena of nodes; operations record their
//! parents so the backward pass can replay them in reverse insertion order
//! (which is a reverse topological order by construction). Only the ops the
//! garment model needs exist: mat-vec, elementwise arithmetic and
//! activations, concat. Nothing here is batched or clever; it is meant to
//! be obviously correct.

use crate::error::{Error, Result};

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    /// Input, constant, or parameter leaf.
    Leaf,
    /// y = W x with W stored flat row-major (rows x cols).
    MatVec { w: NodeId, x: NodeId, rows: usize, cols: usize },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    /// y = a + k b.
    AddScaled { a: NodeId, b: NodeId, k: f64 },
    Scale { a: NodeId, k: f64 },
    Relu { a: NodeId },
    Sigmoid { a: NodeId },
    Tanh { a: NodeId },
    Hadamard { a: NodeId, b: NodeId },
    Concat { parts: Vec<NodeId> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
}

/// Append-only computation graph.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node { value, grad, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Insert an input/constant/parameter node.
    pub fn leaf(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// A leaf holding a copy of another node's value: gradient flow stops.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.clone();
        self.leaf(v)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    pub fn len(&self, id: NodeId) -> usize {
        self.nodes[id.0].value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// y = W x; `w` holds rows*cols values row-major, `x` holds cols.
    pub fn matvec(&mut self, w: NodeId, rows: usize, cols: usize, x: NodeId) -> Result<NodeId> {
        if self.len(w) != rows * cols {
            return Err(Error::Shape(format!(
                "matvec weight has {} values, expected {rows}x{cols}",
                self.len(w)
            )));
        }
        if self.len(x) != cols {
            return Err(Error::Shape(format!(
                "matvec input has {} values, expected {cols}",
                self.len(x)
            )));
        }
        let mut y = vec![0.0; rows];
        {
            let wv = &self.nodes[w.0].value;
            let xv = &self.nodes[x.0].value;
            for (r, out) in y.iter_mut().enumerate() {
                let row = &wv[r * cols..(r + 1) * cols];
                let mut acc = 0.0;
                for (wc, xc) in row.iter().zip(xv) {
                    acc += wc * xc;
                }
                *out = acc;
            }
        }
        Ok(self.push(y, Op::MatVec { w, x, rows, cols }))
    }

    fn zip_op(
        &mut self,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        if self.len(a) != self.len(b) {
            return Err(Error::Shape(format!(
                "elementwise op on lengths {} and {}",
                self.len(a),
                self.len(b)
            )));
        }
        let v = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(v, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op(a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op(a, b, |x, y| x - y, Op::Sub { a, b })
    }

    /// a + k * b.
    pub fn add_scaled(&mut self, a: NodeId, b: NodeId, k: f64) -> Result<NodeId> {
        self.zip_op(a, b, |x, y| x + k * y, Op::AddScaled { a, b, k })
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.nodes[a.0].value.iter().map(|&x| k * x).collect();
        self.push(v, Op::Scale { a, k })
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.iter().map(|&x| x.max(0.0)).collect();
        self.push(v, Op::Relu { a })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect();
        self.push(v, Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.iter().map(|&x| x.tanh()).collect();
        self.push(v, Op::Tanh { a })
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op(a, b, |x, y| x * y, Op::Hadamard { a, b })
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut v = Vec::new();
        for p in parts {
            v.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(v, Op::Concat { parts: parts.to_vec() })
    }

    /// Reverse pass: seed the output gradient, then propagate through every
    /// node once, in reverse insertion order. Gradients accumulate into
    /// `grad` slots; leaves keep theirs for the caller to read.
    pub fn backward(&mut self, output: NodeId, seed: &[f64]) -> Result<()> {
        if seed.len() != self.len(output) {
            return Err(Error::Shape(format!(
                "seed length {} != output length {}",
                seed.len(),
                self.len(output)
            )));
        }
        for (g, s) in self.nodes[output.0].grad.iter_mut().zip(seed) {
            *g += s;
        }
        for i in (0..=output.0).rev() {
            let op = self.nodes[i].op.clone();
            let g = std::mem::take(&mut self.nodes[i].grad);
            match op {
                Op::Leaf => {
                    self.nodes[i].grad = g; // keep for the caller
                    continue;
                }
                Op::MatVec { w, x, rows, cols } => {
                    let xv = self.nodes[x.0].value.clone();
                    {
                        let gw = &mut self.nodes[w.0].grad;
                        for r in 0..rows {
                            for c in 0..cols {
                                gw[r * cols + c] += g[r] * xv[c];
                            }
                        }
                    }
                    let wv = self.nodes[w.0].value.clone();
                    let gx = &mut self.nodes[x.0].grad;
                    for r in 0..rows {
                        for (c, gxc) in gx.iter_mut().enumerate() {
                            *gxc += wv[r * cols + c] * g[r];
                        }
                    }
                }
                Op::Add { a, b } => {
                    for (k, gi) in g.iter().enumerate() {
                        self.nodes[a.0].grad[k] += gi;
                    }
                    for (k, gi) in g.iter().enumerate() {
                        self.nodes[b.0].grad[k] += gi;
                    }
                }
                Op::Sub { a, b } => {
                    for (k, gi) in g.iter().enumerate() {
                        self.nodes[a.0].grad[k] += gi;
                    }
                    for (k, gi) in g.iter().enumerate() {
                        self.nodes[b.0].grad[k] -= gi;
                    }
                }
                Op::AddScaled { a, b, k } => {
                    for (j, gi) in g.iter().enumerate() {
                        self.nodes[a.0].grad[j] += gi;
                    }
                    for (j, gi) in g.iter().enumerate() {
                        self.nodes[b.0].grad[j] += k * gi;
                    }
                }
                Op::Scale { a, k } => {
                    for (j, gi) in g.iter().enumerate() {
                        self.nodes[a.0].grad[j] += k * gi;
                    }
                }
                Op::Relu { a } => {
                    let av = &self.nodes[a.0].value;
                    let mask: Vec<f64> = av.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
                    for (j, gi) in g.iter().enumerate() {
                        self.nodes[a.0].grad[j] += mask[j] * gi;
                    }
                }
                Op::Sigmoid { a } => {
                    let yv = self.nodes[i].value.clone();
                    for (j, gi) in g.iter().enumerate() {
                        self.nodes[a.0].grad[j] += yv[j] * (1.0 - yv[j]) * gi;
                    }
                }
                Op::Tanh { a } => {
                    let yv = self.nodes[i].value.clone();
                    for (j, gi) in g.iter().enumerate() {
                        self.nodes[a.0].grad[j] += (1.0 - yv[j] * yv[j]) * gi;
                    }
                }
                Op::Hadamard { a, b } => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    for (j, gi) in g.iter().enumerate() {
                        self.nodes[a.0].grad[j] += bv[j] * gi;
                    }
                    for (j, gi) in g.iter().enumerate() {
                        self.nodes[b.0].grad[j] += av[j] * gi;
                    }
                }
                Op::Concat { parts } => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        for j in 0..len {
                            self.nodes[p.0].grad[j] += g[offset + j];
                        }
                        offset += len;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matvec_backward_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (rows, cols) = (3usize, 4usize);
        let w: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let seed: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();

        let f = |w: &[f64], x: &[f64]| -> f64 {
            // scalar objective: seed . (W x)
            let mut acc = 0.0;
            for r in 0..rows {
                let mut y = 0.0;
                for c in 0..cols {
                    y += w[r * cols + c] * x[c];
                }
                acc += seed[r] * y;
            }
            acc
        };

        let mut tape = Tape::new();
        let wn = tape.leaf(w.clone());
        let xn = tape.leaf(x.clone());
        let y = tape.matvec(wn, rows, cols, xn).unwrap();
        tape.backward(y, &seed).unwrap();

        let h = 1e-6;
        for i in 0..w.len() {
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let fd = (f(&wp, &x) - f(&wm, &x)) / (2.0 * h);
            let rel = (tape.grad(wn)[i] - fd).abs() / fd.abs().max(1e-6);
            assert!(rel < 1e-5, "w[{i}]: {} vs {fd}", tape.grad(wn)[i]);
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (f(&w, &xp) - f(&w, &xm)) / (2.0 * h);
            let rel = (tape.grad(xn)[i] - fd).abs() / fd.abs().max(1e-6);
            assert!(rel < 1e-5, "x[{i}]: {} vs {fd}", tape.grad(xn)[i]);
        }
    }

    #[test]
    fn duplicated_input_accumulates_once_per_use() {
        // y = x + x: dy/dx = 2 exactly, no double counting per node visit.
        let mut tape = Tape::new();
        let x = tape.leaf(vec![3.0, -1.0]);
        let y = tape.add(x, x).unwrap();
        tape.backward(y, &[1.0, 1.0]).unwrap();
        assert_eq!(tape.grad(x), &[2.0, 2.0]);
    }

    #[test]
    fn chained_activations_backward() {
        // f(x) = sum(tanh(sigmoid(x) * relu(x)))
        let x0 = vec![0.7, -0.3, 1.2];
        let f = |x: &[f64]| -> f64 {
            x.iter()
                .map(|&v| {
                    let s = 1.0 / (1.0 + (-v).exp());
                    let r = v.max(0.0);
                    (s * r).tanh()
                })
                .sum()
        };
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let s = tape.sigmoid(x);
        let r = tape.relu(x);
        let m = tape.hadamard(s, r).unwrap();
        let y = tape.tanh(m);
        tape.backward(y, &[1.0, 1.0, 1.0]).unwrap();
        let h = 1e-6;
        for i in 0..x0.len() {
            let mut xp = x0.clone();
            xp[i] += h;
            let mut xm = x0.clone();
            xm[i] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((tape.grad(x)[i] - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn concat_splits_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(vec![1.0, 2.0]);
        let b = tape.leaf(vec![3.0]);
        let c = tape.concat(&[a, b]);
        tape.backward(c, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(tape.grad(a), &[0.1, 0.2]);
        assert_eq!(tape.grad(b), &[0.3]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec![2.0]);
        let d = tape.detach(x);
        let y = tape.scale(d, 3.0);
        tape.backward(y, &[1.0]).unwrap();
        assert_eq!(tape.grad(x), &[0.0]);
        assert_eq!(tape.grad(d), &[3.0]);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut tape = Tape::new();
        let a = tape.leaf(vec![1.0, 2.0]);
        let b = tape.leaf(vec![1.0]);
        assert!(matches!(tape.add(a, b), Err(crate::Error::Shape(_))));
        let w = tape.leaf(vec![1.0; 6]);
        assert!(matches!(tape.matvec(w, 2, 4, a), Err(crate::Error::Shape(_))));
    }
}
