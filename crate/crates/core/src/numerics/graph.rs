//! The gradient tape. Ops compute values eagerly; `backward` replays the
//! tape in reverse and hands the caller per-node gradients.
//!
//! Shape violations panic with the op name and both shapes.

use super::Tensor;

pub type NodeId = usize;

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044715;

#[derive(Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    AddScalar(NodeId),
    Mul(NodeId, NodeId),
    MulRows(NodeId, NodeId),
    Scale(NodeId, f64),
    Matmul(NodeId, NodeId),
    SwapAxes(NodeId, usize, usize),
    Reshape(NodeId),
    Concat(Vec<NodeId>, usize),
    Narrow(NodeId, usize, usize, usize),
    Embedding {
        table: NodeId,
        ids: Vec<u32>,
    },
    Softmax(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Mean(NodeId),
    Sum(NodeId),
    CrossEntropy {
        logits: NodeId,
        targets: Vec<u32>,
        mask: Vec<f64>,
        probs: Vec<f64>,
        denom: f64,
    },
    BceWithLogits {
        logits: NodeId,
        labels: Vec<f64>,
    },
}

struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    requires_grad: bool,
    op: Op,
}

/// Gradients produced by one backward sweep, indexed by `NodeId`.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// `None` when the node was unreachable from the loss.
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id).and_then(|g| g.as_deref())
    }
}

/// Define-by-run tape. Build one per forward pass and discard after backward.
pub struct Graph {
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Op) -> NodeId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            data,
            shape,
            requires_grad,
            op,
        });
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn data(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].data
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id].shape
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        assert_eq!(
            self.nodes[id].data.len(),
            1,
            "scalar_value: node has shape {:?}",
            self.nodes[id].shape
        );
        self.nodes[id].data[0]
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    // ── Leaves ──────────────────────────────────────────────────────────

    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> NodeId {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "leaf: shape {:?} does not match {} data elements",
            shape,
            data.len()
        );
        self.push(data, shape, requires_grad, Op::Leaf)
    }

    /// Copies a tensor in as a gradient-carrying leaf when it requires grad.
    pub fn param(&mut self, t: &Tensor) -> NodeId {
        self.leaf(t.shape.clone(), t.data.clone(), t.requires_grad)
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> NodeId {
        self.leaf(shape, data, false)
    }

    // ── Elementwise and affine ──────────────────────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(
            self.nodes[a].shape, self.nodes[b].shape,
            "add: shapes {:?} vs {:?}",
            self.nodes[a].shape, self.nodes[b].shape
        );
        let data: Vec<f64> = self.nodes[a]
            .data
            .iter()
            .zip(&self.nodes[b].data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a].shape.clone();
        let rg = self.rg(a) || self.rg(b);
        self.push(data, shape, rg, Op::Add(a, b))
    }

    /// `x` of shape `[..., n]` plus a bias of shape `[n]`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let n = *self.nodes[x]
            .shape
            .last()
            .expect("add_bias: x must have rank >= 1");
        assert_eq!(
            self.nodes[bias].shape,
            vec![n],
            "add_bias: x {:?} needs bias [{}], got {:?}",
            self.nodes[x].shape,
            n,
            self.nodes[bias].shape
        );
        let mut data = self.nodes[x].data.clone();
        for (i, v) in data.iter_mut().enumerate() {
            *v += self.nodes[bias].data[i % n];
        }
        let shape = self.nodes[x].shape.clone();
        let rg = self.rg(x) || self.rg(bias);
        self.push(data, shape, rg, Op::AddBias(x, bias))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let data: Vec<f64> = self.nodes[x].data.iter().map(|v| v + c).collect();
        let shape = self.nodes[x].shape.clone();
        let rg = self.rg(x);
        self.push(data, shape, rg, Op::AddScalar(x))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(
            self.nodes[a].shape, self.nodes[b].shape,
            "mul: shapes {:?} vs {:?}",
            self.nodes[a].shape, self.nodes[b].shape
        );
        let data: Vec<f64> = self.nodes[a]
            .data
            .iter()
            .zip(&self.nodes[b].data)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.nodes[a].shape.clone();
        let rg = self.rg(a) || self.rg(b);
        self.push(data, shape, rg, Op::Mul(a, b))
    }

    /// Scales each leading-axis slice of `x` by the matching entry of `s`
    /// (`x: [r, ...]`, `s: [r]`).
    pub fn mul_rows(&mut self, x: NodeId, s: NodeId) -> NodeId {
        let r = self.nodes[x].shape[0];
        assert_eq!(
            self.nodes[s].shape,
            vec![r],
            "mul_rows: x {:?} needs s [{}], got {:?}",
            self.nodes[x].shape,
            r,
            self.nodes[s].shape
        );
        let cols = self.nodes[x].data.len() / r;
        let mut data = self.nodes[x].data.clone();
        for (i, v) in data.iter_mut().enumerate() {
            *v *= self.nodes[s].data[i / cols];
        }
        let shape = self.nodes[x].shape.clone();
        let rg = self.rg(x) || self.rg(s);
        self.push(data, shape, rg, Op::MulRows(x, s))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let data: Vec<f64> = self.nodes[x].data.iter().map(|v| v * c).collect();
        let shape = self.nodes[x].shape.clone();
        let rg = self.rg(x);
        self.push(data, shape, rg, Op::Scale(x, c))
    }

    // ── Matmul ──────────────────────────────────────────────────────────

    /// Two forms: `[.., m, k] x [k, n]` (shared right operand) and
    /// `[L.., m, k] x [L.., k, n]` (batched, identical leading dims).
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (as_, bs) = (self.nodes[a].shape.clone(), self.nodes[b].shape.clone());
        assert!(
            as_.len() >= 2,
            "matmul: lhs rank must be >= 2, got {:?}",
            as_
        );
        let (m, k) = (as_[as_.len() - 2], as_[as_.len() - 1]);
        let out_shape;
        let data;
        if bs.len() == 2 {
            assert_eq!(
                bs[0], k,
                "matmul: inner dims of {:?} x {:?} disagree",
                as_, bs
            );
            let n = bs[1];
            let rows: usize = as_[..as_.len() - 1].iter().product();
            data = matmul2d(&self.nodes[a].data, &self.nodes[b].data, rows, k, n);
            let mut s = as_[..as_.len() - 1].to_vec();
            s.push(n);
            out_shape = s;
        } else {
            assert_eq!(
                as_[..as_.len() - 2],
                bs[..bs.len() - 2],
                "matmul: leading dims of {:?} x {:?} disagree",
                as_,
                bs
            );
            assert_eq!(
                bs[bs.len() - 2],
                k,
                "matmul: inner dims of {:?} x {:?} disagree",
                as_,
                bs
            );
            let n = bs[bs.len() - 1];
            let batches: usize = as_[..as_.len() - 2].iter().product();
            let mut out = vec![0.0; batches * m * n];
            for l in 0..batches {
                let c = matmul2d(
                    &self.nodes[a].data[l * m * k..(l + 1) * m * k],
                    &self.nodes[b].data[l * k * n..(l + 1) * k * n],
                    m,
                    k,
                    n,
                );
                out[l * m * n..(l + 1) * m * n].copy_from_slice(&c);
            }
            data = out;
            let mut s = as_[..as_.len() - 2].to_vec();
            s.push(m);
            s.push(n);
            out_shape = s;
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(data, out_shape, rg, Op::Matmul(a, b))
    }

    // ── Shape moves ─────────────────────────────────────────────────────

    pub fn swap_axes(&mut self, x: NodeId, i: usize, j: usize) -> NodeId {
        let shape = self.nodes[x].shape.clone();
        assert!(
            i < shape.len() && j < shape.len(),
            "swap_axes: axes ({}, {}) out of range for {:?}",
            i,
            j,
            shape
        );
        let (data, out_shape) = swap_axes_raw(&self.nodes[x].data, &shape, i, j);
        let rg = self.rg(x);
        self.push(data, out_shape, rg, Op::SwapAxes(x, i, j))
    }

    pub fn reshape(&mut self, x: NodeId, new_shape: Vec<usize>) -> NodeId {
        assert_eq!(
            new_shape.iter().product::<usize>(),
            self.nodes[x].data.len(),
            "reshape: {:?} -> {:?} changes element count",
            self.nodes[x].shape,
            new_shape
        );
        let data = self.nodes[x].data.clone();
        let rg = self.rg(x);
        self.push(data, new_shape, rg, Op::Reshape(x))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> NodeId {
        assert!(!parts.is_empty(), "concat: no parts");
        let first = self.nodes[parts[0]].shape.clone();
        assert!(
            axis < first.len(),
            "concat: axis {} out of range for {:?}",
            axis,
            first
        );
        let mut axis_total = 0;
        for &p in parts {
            let s = &self.nodes[p].shape;
            assert_eq!(
                s.len(),
                first.len(),
                "concat: rank mismatch {:?} vs {:?}",
                first,
                s
            );
            for (d, (&a, &b)) in first.iter().zip(s.iter()).enumerate() {
                assert!(
                    d == axis || a == b,
                    "concat: shapes {:?} vs {:?} differ off-axis",
                    first,
                    s
                );
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let lead: usize = first[..axis].iter().product();
        let trail: usize = first[axis + 1..].iter().product();
        let mut data = vec![0.0; lead * axis_total * trail];
        let mut offset = 0;
        for &p in parts {
            let ext = self.nodes[p].shape[axis];
            for l in 0..lead {
                let src = &self.nodes[p].data[l * ext * trail..(l + 1) * ext * trail];
                let dst_start = l * axis_total * trail + offset * trail;
                data[dst_start..dst_start + ext * trail].copy_from_slice(src);
            }
            offset += ext;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(data, out_shape, rg, Op::Concat(parts.to_vec(), axis))
    }

    pub fn narrow(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> NodeId {
        let shape = self.nodes[x].shape.clone();
        assert!(
            axis < shape.len(),
            "narrow: axis {} out of range for {:?}",
            axis,
            shape
        );
        assert!(
            start + len <= shape[axis],
            "narrow: [{}, {}) exceeds extent {} of {:?}",
            start,
            start + len,
            shape[axis],
            shape
        );
        let lead: usize = shape[..axis].iter().product();
        let trail: usize = shape[axis + 1..].iter().product();
        let mut data = vec![0.0; lead * len * trail];
        for l in 0..lead {
            let src_start = l * shape[axis] * trail + start * trail;
            data[l * len * trail..(l + 1) * len * trail]
                .copy_from_slice(&self.nodes[x].data[src_start..src_start + len * trail]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.rg(x);
        self.push(data, out_shape, rg, Op::Narrow(x, axis, start, len))
    }

    // ── Lookup ──────────────────────────────────────────────────────────

    /// `table: [V, d]`, ids laid out as `id_shape`; output `id_shape + [d]`.
    pub fn embedding(&mut self, table: NodeId, ids: &[u32], id_shape: &[usize]) -> NodeId {
        let ts = &self.nodes[table].shape;
        assert_eq!(ts.len(), 2, "embedding: table must be [V, d], got {:?}", ts);
        assert_eq!(
            id_shape.iter().product::<usize>(),
            ids.len(),
            "embedding: id shape {:?} does not match {} ids",
            id_shape,
            ids.len()
        );
        let (v, d) = (ts[0], ts[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(
                (id as usize) < v,
                "embedding: id {} out of range for table [{}x{}]",
                id,
                v,
                d
            );
            data.extend_from_slice(&self.nodes[table].data[id as usize * d..(id as usize + 1) * d]);
        }
        let mut out_shape = id_shape.to_vec();
        out_shape.push(d);
        let rg = self.rg(table);
        self.push(
            data,
            out_shape,
            rg,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    // ── Activations and normalization ───────────────────────────────────

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let shape = self.nodes[x].shape.clone();
        let n = *shape.last().expect("softmax: rank must be >= 1");
        assert!(
            n >= 1,
            "softmax: last-axis extent must be >= 1, got {:?}",
            shape
        );
        let mut data = self.nodes[x].data.clone();
        for row in data.chunks_mut(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let rg = self.rg(x);
        self.push(data, shape, rg, Op::Softmax(x))
    }

    /// Layer norm over the last axis with learned gain and bias.
    /// `eps` is fixed small so the pre-affine output has unit variance to
    /// within 1e-6 on ordinary rows.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        const EPS: f64 = 1e-12;
        let shape = self.nodes[x].shape.clone();
        let n = *shape.last().expect("layer_norm: rank must be >= 1");
        assert!(
            n >= 1,
            "layer_norm: last-axis extent must be >= 1, got {:?}",
            shape
        );
        assert_eq!(
            self.nodes[gain].shape,
            vec![n],
            "layer_norm: x {:?} needs gain [{}], got {:?}",
            shape,
            n,
            self.nodes[gain].shape
        );
        assert_eq!(
            self.nodes[bias].shape,
            vec![n],
            "layer_norm: x {:?} needs bias [{}], got {:?}",
            shape,
            n,
            self.nodes[bias].shape
        );
        let rows = self.nodes[x].data.len() / n;
        let mut xhat = vec![0.0; rows * n];
        let mut inv_std = vec![0.0; rows];
        let mut data = vec![0.0; rows * n];
        for r in 0..rows {
            let row = &self.nodes[x].data[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + EPS).sqrt();
            inv_std[r] = inv;
            for c in 0..n {
                let h = (row[c] - mean) * inv;
                xhat[r * n + c] = h;
                data[r * n + c] = h * self.nodes[gain].data[c] + self.nodes[bias].data[c];
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        self.push(
            data,
            shape,
            rg,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// Tanh-form GELU.
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let data: Vec<f64> = self.nodes[x]
            .data
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (GELU_K * (v + GELU_C * v * v * v)).tanh()))
            .collect();
        let shape = self.nodes[x].shape.clone();
        let rg = self.rg(x);
        self.push(data, shape, rg, Op::Gelu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let data: Vec<f64> = self.nodes[x]
            .data
            .iter()
            .map(|&v| sigmoid_scalar(v))
            .collect();
        let shape = self.nodes[x].shape.clone();
        let rg = self.rg(x);
        self.push(data, shape, rg, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let data: Vec<f64> = self.nodes[x].data.iter().map(|v| v.tanh()).collect();
        let shape = self.nodes[x].shape.clone();
        let rg = self.rg(x);
        self.push(data, shape, rg, Op::Tanh(x))
    }

    // ── Reductions and losses ───────────────────────────────────────────

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.nodes[x].data.len();
        assert!(n > 0, "mean: empty input");
        let v = self.nodes[x].data.iter().sum::<f64>() / n as f64;
        let rg = self.rg(x);
        self.push(vec![v], vec![1], rg, Op::Mean(x))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x].data.iter().sum::<f64>();
        let rg = self.rg(x);
        self.push(vec![v], vec![1], rg, Op::Sum(x))
    }

    /// Token-level cross entropy with logits, masked mean.
    ///
    /// `logits: [..., V]` as R rows; `targets` and `mask` have length R.
    /// The loss averages `-log p(target)` over rows with nonzero mask.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[u32], mask: &[f64]) -> NodeId {
        let shape = self.nodes[logits].shape.clone();
        let v = *shape
            .last()
            .expect("cross_entropy: logits rank must be >= 2");
        let rows = self.nodes[logits].data.len() / v;
        assert_eq!(
            targets.len(),
            rows,
            "cross_entropy: {} targets for {} logit rows of {:?}",
            targets.len(),
            rows,
            shape
        );
        assert_eq!(
            mask.len(),
            rows,
            "cross_entropy: {} mask entries for {} logit rows of {:?}",
            mask.len(),
            rows,
            shape
        );
        let denom: f64 = mask.iter().sum();
        assert!(denom > 0.0, "cross_entropy: mask selects no positions");
        let mut probs = vec![0.0; rows * v];
        let mut total = 0.0;
        for r in 0..rows {
            let row = &self.nodes[logits].data[r * v..(r + 1) * v];
            let t = targets[r] as usize;
            assert!(
                t < v,
                "cross_entropy: target {} out of range for vocab {}",
                t,
                v
            );
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..v {
                let e = (row[c] - max).exp();
                probs[r * v + c] = e;
                sum += e;
            }
            for c in 0..v {
                probs[r * v + c] /= sum;
            }
            let lse = max + sum.ln();
            total += mask[r] * (lse - row[t]);
        }
        let rg = self.rg(logits);
        self.push(
            vec![total / denom],
            vec![1],
            rg,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                denom,
            },
        )
    }

    /// Binary cross entropy with logits, mean over elements. Numerically
    /// stable form `max(x,0) - x*z + ln(1 + exp(-|x|))`.
    pub fn bce_with_logits(&mut self, logits: NodeId, labels: &[f64]) -> NodeId {
        let n = self.nodes[logits].data.len();
        assert_eq!(
            labels.len(),
            n,
            "bce_with_logits: {} labels for {} logits",
            labels.len(),
            n
        );
        assert!(n > 0, "bce_with_logits: empty input");
        let mut total = 0.0;
        for (&x, &z) in self.nodes[logits].data.iter().zip(labels) {
            total += x.max(0.0) - x * z + (-x.abs()).exp().ln_1p();
        }
        let rg = self.rg(logits);
        self.push(
            vec![total / n as f64],
            vec![1],
            rg,
            Op::BceWithLogits {
                logits,
                labels: labels.to_vec(),
            },
        )
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Consumes the tape (values are
    /// dropped); read anything you need before calling. Panics when `loss`
    /// is not scalar.
    pub fn backward(self, loss: NodeId) -> Gradients {
        assert_eq!(
            self.nodes[loss].data.len(),
            1,
            "backward: loss must be scalar, got shape {:?}",
            self.nodes[loss].shape
        );
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss] = Some(vec![1.0]);

        for id in (0..=loss).rev() {
            if !nodes[id].requires_grad {
                grads[id] = None;
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            backprop_node(&nodes, id, &g, &mut grads);
            // Leaves keep their gradient for the caller.
            if matches!(nodes[id].op, Op::Leaf) {
                grads[id] = Some(g);
            }
        }
        Gradients { grads }
    }
}

fn backprop_node(nodes: &[Node], id: NodeId, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let acc = |grads: &mut [Option<Vec<f64>>], target: NodeId, contrib: &[f64]| {
        if !nodes[target].requires_grad {
            return;
        }
        let slot = grads[target].get_or_insert_with(|| vec![0.0; nodes[target].data.len()]);
        for (s, c) in slot.iter_mut().zip(contrib) {
            *s += c;
        }
    };

    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            acc(grads, *a, g);
            acc(grads, *b, g);
        }
        Op::AddBias(x, bias) => {
            acc(grads, *x, g);
            if nodes[*bias].requires_grad {
                let n = nodes[*bias].data.len();
                let mut db = vec![0.0; n];
                for (i, &gv) in g.iter().enumerate() {
                    db[i % n] += gv;
                }
                acc(grads, *bias, &db);
            }
        }
        Op::AddScalar(x) => acc(grads, *x, g),
        Op::Mul(a, b) => {
            if nodes[*a].requires_grad {
                let da: Vec<f64> = g
                    .iter()
                    .zip(&nodes[*b].data)
                    .map(|(gv, bv)| gv * bv)
                    .collect();
                acc(grads, *a, &da);
            }
            if nodes[*b].requires_grad {
                let db: Vec<f64> = g
                    .iter()
                    .zip(&nodes[*a].data)
                    .map(|(gv, av)| gv * av)
                    .collect();
                acc(grads, *b, &db);
            }
        }
        Op::MulRows(x, s) => {
            let r = nodes[*x].shape[0];
            let cols = nodes[*x].data.len() / r;
            if nodes[*x].requires_grad {
                let dx: Vec<f64> = g
                    .iter()
                    .enumerate()
                    .map(|(i, gv)| gv * nodes[*s].data[i / cols])
                    .collect();
                acc(grads, *x, &dx);
            }
            if nodes[*s].requires_grad {
                let mut ds = vec![0.0; r];
                for (i, &gv) in g.iter().enumerate() {
                    ds[i / cols] += gv * nodes[*x].data[i];
                }
                acc(grads, *s, &ds);
            }
        }
        Op::Scale(x, c) => {
            let dx: Vec<f64> = g.iter().map(|gv| gv * c).collect();
            acc(grads, *x, &dx);
        }
        Op::Matmul(a, b) => {
            let as_ = &nodes[*a].shape;
            let bs = &nodes[*b].shape;
            let (m, k) = (as_[as_.len() - 2], as_[as_.len() - 1]);
            if bs.len() == 2 {
                let n = bs[1];
                let rows: usize = as_[..as_.len() - 1].iter().product();
                if nodes[*a].requires_grad {
                    let da = matmul2d_bt(g, &nodes[*b].data, rows, n, k);
                    acc(grads, *a, &da);
                }
                if nodes[*b].requires_grad {
                    let db = matmul2d_at(&nodes[*a].data, g, rows, k, n);
                    acc(grads, *b, &db);
                }
            } else {
                let n = bs[bs.len() - 1];
                let batches: usize = as_[..as_.len() - 2].iter().product();
                if nodes[*a].requires_grad {
                    let mut da = vec![0.0; nodes[*a].data.len()];
                    for l in 0..batches {
                        let part = matmul2d_bt(
                            &g[l * m * n..(l + 1) * m * n],
                            &nodes[*b].data[l * k * n..(l + 1) * k * n],
                            m,
                            n,
                            k,
                        );
                        da[l * m * k..(l + 1) * m * k].copy_from_slice(&part);
                    }
                    acc(grads, *a, &da);
                }
                if nodes[*b].requires_grad {
                    let mut db = vec![0.0; nodes[*b].data.len()];
                    for l in 0..batches {
                        let part = matmul2d_at(
                            &nodes[*a].data[l * m * k..(l + 1) * m * k],
                            &g[l * m * n..(l + 1) * m * n],
                            m,
                            k,
                            n,
                        );
                        db[l * k * n..(l + 1) * k * n].copy_from_slice(&part);
                    }
                    acc(grads, *b, &db);
                }
            }
        }
        Op::SwapAxes(x, i, j) => {
            let (dx, _) = swap_axes_raw(g, &nodes[id].shape, *i, *j);
            acc(grads, *x, &dx);
        }
        Op::Reshape(x) => acc(grads, *x, g),
        Op::Concat(parts, axis) => {
            let out_shape = &nodes[id].shape;
            let lead: usize = out_shape[..*axis].iter().product();
            let trail: usize = out_shape[*axis + 1..].iter().product();
            let axis_total = out_shape[*axis];
            let mut offset = 0;
            for &p in parts {
                let ext = nodes[p].shape[*axis];
                if nodes[p].requires_grad {
                    let mut dp = vec![0.0; nodes[p].data.len()];
                    for l in 0..lead {
                        let src_start = l * axis_total * trail + offset * trail;
                        dp[l * ext * trail..(l + 1) * ext * trail]
                            .copy_from_slice(&g[src_start..src_start + ext * trail]);
                    }
                    acc(grads, p, &dp);
                }
                offset += ext;
            }
        }
        Op::Narrow(x, axis, start, len) => {
            let in_shape = &nodes[*x].shape;
            let lead: usize = in_shape[..*axis].iter().product();
            let trail: usize = in_shape[*axis + 1..].iter().product();
            let mut dx = vec![0.0; nodes[*x].data.len()];
            for l in 0..lead {
                let dst_start = l * in_shape[*axis] * trail + start * trail;
                dx[dst_start..dst_start + len * trail]
                    .copy_from_slice(&g[l * len * trail..(l + 1) * len * trail]);
            }
            acc(grads, *x, &dx);
        }
        Op::Embedding { table, ids } => {
            if nodes[*table].requires_grad {
                let d = nodes[*table].shape[1];
                let mut dt = vec![0.0; nodes[*table].data.len()];
                for (pos, &tid) in ids.iter().enumerate() {
                    let dst = &mut dt[tid as usize * d..(tid as usize + 1) * d];
                    for (dv, gv) in dst.iter_mut().zip(&g[pos * d..(pos + 1) * d]) {
                        *dv += gv;
                    }
                }
                acc(grads, *table, &dt);
            }
        }
        Op::Softmax(x) => {
            let n = *nodes[id].shape.last().unwrap();
            let y = &nodes[id].data;
            let mut dx = vec![0.0; y.len()];
            for r in 0..y.len() / n {
                let yr = &y[r * n..(r + 1) * n];
                let gr = &g[r * n..(r + 1) * n];
                let dot: f64 = yr.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                for c in 0..n {
                    dx[r * n + c] = yr[c] * (gr[c] - dot);
                }
            }
            acc(grads, *x, &dx);
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let n = *nodes[id].shape.last().unwrap();
            let rows = xhat.len() / n;
            if nodes[*gain].requires_grad {
                let mut dg = vec![0.0; n];
                for r in 0..rows {
                    for c in 0..n {
                        dg[c] += g[r * n + c] * xhat[r * n + c];
                    }
                }
                acc(grads, *gain, &dg);
            }
            if nodes[*bias].requires_grad {
                let mut db = vec![0.0; n];
                for r in 0..rows {
                    for c in 0..n {
                        db[c] += g[r * n + c];
                    }
                }
                acc(grads, *bias, &db);
            }
            if nodes[*x].requires_grad {
                let mut dx = vec![0.0; xhat.len()];
                let nf = n as f64;
                for r in 0..rows {
                    let mut sum_gy = 0.0;
                    let mut sum_gy_xhat = 0.0;
                    for c in 0..n {
                        let gy = g[r * n + c] * nodes[*gain].data[c];
                        sum_gy += gy;
                        sum_gy_xhat += gy * xhat[r * n + c];
                    }
                    for c in 0..n {
                        let gy = g[r * n + c] * nodes[*gain].data[c];
                        dx[r * n + c] =
                            inv_std[r] * (gy - sum_gy / nf - xhat[r * n + c] * sum_gy_xhat / nf);
                    }
                }
                acc(grads, *x, &dx);
            }
        }
        Op::Gelu(x) => {
            let dx: Vec<f64> = nodes[*x]
                .data
                .iter()
                .zip(g)
                .map(|(&v, &gv)| {
                    let u = GELU_K * (v + GELU_C * v * v * v);
                    let t = u.tanh();
                    let du = GELU_K * (1.0 + 3.0 * GELU_C * v * v);
                    gv * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
                })
                .collect();
            acc(grads, *x, &dx);
        }
        Op::Sigmoid(x) => {
            let dx: Vec<f64> = nodes[id]
                .data
                .iter()
                .zip(g)
                .map(|(&y, &gv)| gv * y * (1.0 - y))
                .collect();
            acc(grads, *x, &dx);
        }
        Op::Tanh(x) => {
            let dx: Vec<f64> = nodes[id]
                .data
                .iter()
                .zip(g)
                .map(|(&y, &gv)| gv * (1.0 - y * y))
                .collect();
            acc(grads, *x, &dx);
        }
        Op::Mean(x) => {
            let n = nodes[*x].data.len() as f64;
            let dx = vec![g[0] / n; nodes[*x].data.len()];
            acc(grads, *x, &dx);
        }
        Op::Sum(x) => {
            let dx = vec![g[0]; nodes[*x].data.len()];
            acc(grads, *x, &dx);
        }
        Op::CrossEntropy {
            logits,
            targets,
            mask,
            probs,
            denom,
        } => {
            if nodes[*logits].requires_grad {
                let v = *nodes[*logits].shape.last().unwrap();
                let mut dl = vec![0.0; probs.len()];
                for r in 0..targets.len() {
                    let coeff = g[0] * mask[r] / denom;
                    if coeff == 0.0 {
                        continue;
                    }
                    for c in 0..v {
                        dl[r * v + c] = coeff * probs[r * v + c];
                    }
                    dl[r * v + targets[r] as usize] -= coeff;
                }
                acc(grads, *logits, &dl);
            }
        }
        Op::BceWithLogits { logits, labels } => {
            if nodes[*logits].requires_grad {
                let n = labels.len() as f64;
                let dl: Vec<f64> = nodes[*logits]
                    .data
                    .iter()
                    .zip(labels)
                    .map(|(&x, &z)| g[0] * (sigmoid_scalar(x) - z) / n)
                    .collect();
                acc(grads, *logits, &dl);
            }
        }
    }
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `a: [m, k] x b: [k, n] -> [m, n]`, ikj order.
fn matmul2d(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// `g: [m, n] x b^T` where `b: [k, n]` -> `[m, k]`.
fn matmul2d_bt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a^T x g` where `a: [m, k]`, `g: [m, n]` -> `[k, n]`.
fn matmul2d_at(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (ov, gv) in orow.iter_mut().zip(grow) {
                *ov += av * gv;
            }
        }
    }
    out
}

fn swap_axes_raw(data: &[f64], shape: &[usize], i: usize, j: usize) -> (Vec<f64>, Vec<usize>) {
    if i == j {
        return (data.to_vec(), shape.to_vec());
    }
    let rank = shape.len();
    let mut out_shape = shape.to_vec();
    out_shape.swap(i, j);
    let mut in_strides = vec![1usize; rank];
    for d in (0..rank - 1).rev() {
        in_strides[d] = in_strides[d + 1] * shape[d + 1];
    }
    let mut out_strides = vec![1usize; rank];
    for d in (0..rank - 1).rev() {
        out_strides[d] = out_strides[d + 1] * out_shape[d + 1];
    }
    let mut out = vec![0.0; data.len()];
    let mut coords = vec![0usize; rank];
    for (flat, &v) in data.iter().enumerate() {
        let mut rem = flat;
        for d in 0..rank {
            coords[d] = rem / in_strides[d];
            rem %= in_strides[d];
        }
        coords.swap(i, j);
        let mut out_flat = 0;
        for d in 0..rank {
            out_flat += coords[d] * out_strides[d];
        }
        out[out_flat] = v;
    }
    (out, out_shape)
}
