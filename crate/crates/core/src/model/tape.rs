//! Dense row-major matrices and a reverse-mode tape over them.

use matrixmultiply::dgemm;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape mismatch");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `c = beta c + op(a) op(b)` where `op` optionally transposes.
fn gemm(a: &Mat, ta: bool, b: &Mat, tb: bool, c: &mut Mat, beta: f64) {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!((c.rows, c.cols), (m, n), "output shape");
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c.data {
            *v *= beta;
        }
        return;
    }
    // SAFETY: the pointers cover matrices of the asserted shapes and the
    // strides describe them exactly; `c` does not alias `a` or `b`.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

pub fn matmul(a: &Mat, b: &Mat, tb: bool) -> Mat {
    let n = if tb { b.rows } else { b.cols };
    let mut c = Mat::zeros(a.rows, n);
    gemm(a, false, b, tb, &mut c, 0.0);
    c
}

const GELU_C: f64 = 0.797_884_560_802_865_4;
const LN_EPS: f64 = 1e-5;

pub fn gelu(x: f64) -> f64 {
    // 0.5 (1 + tanh u) = sigmoid(2u), without the cancellation for x << 0.
    x * sigmoid(2.0 * GELU_C * (x + 0.044715 * x * x * x))
}

fn gelu_grad(x: f64) -> f64 {
    let s = sigmoid(2.0 * GELU_C * (x + 0.044715 * x * x * x));
    s + x * s * (1.0 - s) * 2.0 * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf,
    MatMul { a: Var, b: Var, tb: bool },
    AddBias { a: Var, bias: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, s: f64 },
    Gelu { a: Var },
    Sigmoid { a: Var },
    LayerNorm { a: Var, gamma: Var, beta: Var, xhat: Mat, rstd: Vec<f64> },
    Softmax { a: Var },
    Gather { a: Var, index: Vec<usize> },
    GroupMax { a: Var, argmax: Vec<usize> },
    EdgeMax { c: Var, b: Var, bias: Var, pick: Vec<usize>, pre: Vec<f64> },
    ConcatRows { parts: Vec<Var> },
    ConcatCols { parts: Vec<Var> },
    SliceCols { a: Var, start: usize },
    RowNorm { a: Var },
    Mean { a: Var },
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

/// Records operations for one forward pass; `backward` then yields
/// gradients for every variable created with `param`.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = matmul(self.value(a), self.value(b), false);
        let g = self.needs(&[a, b]);
        self.push(v, Op::MatMul { a, b, tb: false }, g)
    }

    /// `a b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = matmul(self.value(a), self.value(b), true);
        let g = self.needs(&[a, b]);
        self.push(v, Op::MatMul { a, b, tb: true }, g)
    }

    /// Adds the single-row `bias` to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (x, b) = (self.value(a), self.value(bias));
        assert_eq!((b.rows, b.cols), (1, x.cols), "bias shape");
        let mut v = x.clone();
        for r in 0..v.rows {
            for (o, bb) in v.row_mut(r).iter_mut().zip(&b.data) {
                *o += bb;
            }
        }
        let g = self.needs(&[a, bias]);
        self.push(v, Op::AddBias { a, bias }, g)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Mat {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!((x.rows, x.cols), (y.rows, y.cols), "elementwise shape");
        Mat::from_vec(x.rows, x.cols, x.data.iter().zip(&y.data).map(|(p, q)| f(*p, *q)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p + q);
        let g = self.needs(&[a, b]);
        self.push(v, Op::Add { a, b }, g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p - q);
        let g = self.needs(&[a, b]);
        self.push(v, Op::Sub { a, b }, g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p * q);
        let g = self.needs(&[a, b]);
        self.push(v, Op::Mul { a, b }, g)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64) -> Mat {
        let x = self.value(a);
        Mat::from_vec(x.rows, x.cols, x.data.iter().map(|v| f(*v)).collect())
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.map(a, |x| x * s);
        let g = self.needs(&[a]);
        self.push(v, Op::Scale { a, s }, g)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.map(a, gelu);
        let g = self.needs(&[a]);
        self.push(v, Op::Gelu { a }, g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.map(a, sigmoid);
        let g = self.needs(&[a]);
        self.push(v, Op::Sigmoid { a }, g)
    }

    /// Row-wise layer normalization with per-column gain and shift.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var) -> Var {
        let x = self.value(a);
        let (gm, bt) = (self.value(gamma), self.value(beta));
        let mut xhat = Mat::zeros(x.rows, x.cols);
        let mut out = Mat::zeros(x.rows, x.cols);
        let mut rstd = Vec::with_capacity(x.rows);
        for r in 0..x.rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / x.cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.cols as f64;
            let s = 1.0 / (var + LN_EPS).sqrt();
            rstd.push(s);
            for c in 0..x.cols {
                let h = (row[c] - mean) * s;
                xhat.data[r * x.cols + c] = h;
                out.data[r * x.cols + c] = h * gm.data[c] + bt.data[c];
            }
        }
        let g = self.needs(&[a, gamma, beta]);
        self.push(out, Op::LayerNorm { a, gamma, beta, xhat, rstd }, g)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let g = self.needs(&[a]);
        self.push(out, Op::Softmax { a }, g)
    }

    /// Rows of `a` picked by `index` (repeats allowed).
    pub fn gather(&mut self, a: Var, index: Vec<usize>) -> Var {
        let x = self.value(a);
        let mut out = Mat::zeros(index.len(), x.cols);
        for (r, &i) in index.iter().enumerate() {
            out.row_mut(r).copy_from_slice(x.row(i));
        }
        let g = self.needs(&[a]);
        self.push(out, Op::Gather { a, index }, g)
    }

    /// Column-wise maximum over consecutive blocks of `group` rows. Ties go
    /// to the first row of the block.
    pub fn group_max(&mut self, a: Var, group: usize) -> Var {
        let x = self.value(a);
        assert!(group > 0 && x.rows % group == 0, "rows must split into groups");
        let n = x.rows / group;
        let mut out = Mat::zeros(n, x.cols);
        let mut argmax = vec![0usize; n * x.cols];
        for g in 0..n {
            for c in 0..x.cols {
                let mut best = (g * group, x.get(g * group, c));
                for r in g * group + 1..(g + 1) * group {
                    let v = x.get(r, c);
                    if v > best.1 {
                        best = (r, v);
                    }
                }
                out.data[g * x.cols + c] = best.1;
                argmax[g * x.cols + c] = best.0;
            }
        }
        let needs = self.needs(&[a]);
        self.push(out, Op::GroupMax { a, argmax }, needs)
    }

    /// `out[i, c] = max_j gelu(centre[i, c] + other[j, c] + bias[c])` over the
    /// `k` neighbours `j` of row `i` listed in `nbrs` (row-major, `rows x k`).
    pub fn edge_max(&mut self, centre: Var, other: Var, bias: Var, nbrs: &[usize], k: usize) -> Var {
        let (cm, bm, bias_m) = (self.value(centre), self.value(other), self.value(bias));
        let (n, h) = (cm.rows, cm.cols);
        assert_eq!(nbrs.len(), n * k, "neighbour table shape");
        let mut out = Mat::zeros(n, h);
        let mut pick = vec![0usize; n * h];
        let mut pre = vec![0.0; n * h];
        let mut hi = vec![(0.0, 0usize); h];
        let mut lo = vec![(0.0, 0usize); h];
        for i in 0..n {
            let row = &nbrs[i * k..(i + 1) * k];
            for (c, v) in bm.row(row[0]).iter().enumerate() {
                hi[c] = (*v, row[0]);
                lo[c] = (*v, row[0]);
            }
            for &j in &row[1..] {
                for (c, v) in bm.row(j).iter().enumerate() {
                    if *v > hi[c].0 {
                        hi[c] = (*v, j);
                    }
                    if *v < lo[c].0 {
                        lo[c] = (*v, j);
                    }
                }
            }
            // gelu falls then rises, so the largest value over the
            // neighbours sits at the smallest or the largest argument.
            for c in 0..h {
                let a = cm.data[i * h + c] + bias_m.data[c];
                let (x1, x2) = (a + hi[c].0, a + lo[c].0);
                let (g1, g2) = (gelu(x1), gelu(x2));
                let (g, j, x) = if g2 > g1 { (g2, lo[c].1, x2) } else { (g1, hi[c].1, x1) };
                out.data[i * h + c] = g;
                pick[i * h + c] = j;
                pre[i * h + c] = x;
            }
        }
        let needs = self.needs(&[centre, other, bias]);
        self.push(out, Op::EdgeMax { c: centre, b: other, bias, pick, pre }, needs)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.cols, cols, "column mismatch");
            data.extend_from_slice(&m.data);
        }
        let rows = data.len() / cols.max(1);
        let g = self.needs(parts);
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows { parts: parts.to_vec() }, g)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.rows, rows, "row mismatch");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + m.cols].copy_from_slice(m.row(r));
            }
            offset += m.cols;
        }
        let g = self.needs(parts);
        self.push(out, Op::ConcatCols { parts: parts.to_vec() }, g)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        let mut out = Mat::zeros(x.rows, len);
        for r in 0..x.rows {
            out.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        let g = self.needs(&[a]);
        self.push(out, Op::SliceCols { a, start }, g)
    }

    /// Euclidean norm of each row, as a column.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows).map(|r| x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let v = Mat::from_vec(x.rows, 1, data);
        let g = self.needs(&[a]);
        self.push(v, Op::RowNorm { a }, g)
    }

    /// Mean of all entries, as a 1x1 matrix.
    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Mat::from_vec(1, 1, vec![x.data.iter().sum::<f64>() / x.data.len().max(1) as f64]);
        let g = self.needs(&[a]);
        self.push(v, Op::Mean { a }, g)
    }

    /// Back-propagates from the scalar `loss`; returns the gradient of every
    /// node (None where no gradient flows).
    pub fn backward(&self, loss: Var) -> Vec<Option<Mat>> {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        let l = self.value(loss);
        assert_eq!((l.rows, l.cols), (1, 1), "loss must be scalar");
        grads[loss.0] = Some(Mat::from_vec(1, 1, vec![1.0]));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        grads
    }

    fn accumulate(&self, grads: &mut [Option<Mat>], v: Var, g: Mat) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn grad_slot<'a>(&self, grads: &'a mut [Option<Mat>], v: Var) -> Option<&'a mut Mat> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let m = &self.nodes[v.0].value;
        Some(grads[v.0].get_or_insert_with(|| Mat::zeros(m.rows, m.cols)))
    }

    fn propagate(&self, node: &Node, g: &Mat, grads: &mut [Option<Mat>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, tb } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.grad_slot(grads, *a) {
                    // C = A op(B): dA = dC op(B)^T.
                    gemm(g, false, bv, !tb, ga, 1.0);
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    if *tb {
                        // C = A B^T: dB = dC^T A.
                        gemm(g, true, av, false, gb, 1.0);
                    } else {
                        gemm(av, true, g, false, gb, 1.0);
                    }
                }
            }
            Op::AddBias { a, bias } => {
                self.accumulate(grads, *a, g.clone());
                if let Some(gb) = self.grad_slot(grads, *bias) {
                    for r in 0..g.rows {
                        for (o, v) in gb.data.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub { a, b } => {
                self.accumulate(grads, *a, g.clone());
                let neg = Mat::from_vec(g.rows, g.cols, g.data.iter().map(|v| -v).collect());
                self.accumulate(grads, *b, neg);
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = Mat::from_vec(g.rows, g.cols, g.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect());
                let gb = Mat::from_vec(g.rows, g.cols, g.data.iter().zip(&av.data).map(|(x, y)| x * y).collect());
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Scale { a, s } => {
                self.accumulate(grads, *a, Mat::from_vec(g.rows, g.cols, g.data.iter().map(|v| v * s).collect()));
            }
            Op::Gelu { a } => {
                let x = self.value(*a);
                let d = g.data.iter().zip(&x.data).map(|(gv, xv)| gv * gelu_grad(*xv)).collect();
                self.accumulate(grads, *a, Mat::from_vec(g.rows, g.cols, d));
            }
            Op::Sigmoid { a } => {
                let y = &node.value;
                let d = g.data.iter().zip(&y.data).map(|(gv, yv)| gv * yv * (1.0 - yv)).collect();
                self.accumulate(grads, *a, Mat::from_vec(g.rows, g.cols, d));
            }
            Op::LayerNorm { a, gamma, beta, xhat, rstd } => {
                let gm = self.value(*gamma);
                let cols = g.cols;
                if let Some(gg) = self.grad_slot(grads, *gamma) {
                    for r in 0..g.rows {
                        for c in 0..cols {
                            gg.data[c] += g.get(r, c) * xhat.get(r, c);
                        }
                    }
                }
                if let Some(gbt) = self.grad_slot(grads, *beta) {
                    for r in 0..g.rows {
                        for c in 0..cols {
                            gbt.data[c] += g.get(r, c);
                        }
                    }
                }
                if self.nodes[a.0].needs_grad {
                    let mut dx = Mat::zeros(g.rows, cols);
                    for r in 0..g.rows {
                        let dxhat: Vec<f64> = (0..cols).map(|c| g.get(r, c) * gm.data[c]).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / cols as f64;
                        let mean_dx = dxhat.iter().zip(xhat.row(r)).map(|(d, h)| d * h).sum::<f64>() / cols as f64;
                        for c in 0..cols {
                            dx.data[r * cols + c] = rstd[r] * (dxhat[c] - mean_d - xhat.get(r, c) * mean_dx);
                        }
                    }
                    self.accumulate(grads, *a, dx);
                }
            }
            Op::Softmax { a } => {
                let y = &node.value;
                let mut dx = Mat::zeros(g.rows, g.cols);
                for r in 0..g.rows {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(p, q)| p * q).sum();
                    for c in 0..g.cols {
                        dx.data[r * g.cols + c] = y.get(r, c) * (g.get(r, c) - dot);
                    }
                }
                self.accumulate(grads, *a, dx);
            }
            Op::Gather { a, index } => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for (r, &i) in index.iter().enumerate() {
                        for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::GroupMax { a, argmax, .. } => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    let cols = g.cols;
                    for (k, &r) in argmax.iter().enumerate() {
                        ga.data[r * cols + k % cols] += g.data[k];
                    }
                }
            }
            Op::EdgeMax { c, b, bias, pick, pre } => {
                let h = g.cols;
                let d: Vec<f64> = g.data.iter().zip(pre).map(|(gv, x)| gv * gelu_grad(*x)).collect();
                if let Some(gc) = self.grad_slot(grads, *c) {
                    for (o, v) in gc.data.iter_mut().zip(&d) {
                        *o += v;
                    }
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    for (k, v) in d.iter().enumerate() {
                        gb.data[pick[k] * h + k % h] += v;
                    }
                }
                if let Some(gbias) = self.grad_slot(grads, *bias) {
                    for (k, v) in d.iter().enumerate() {
                        gbias.data[k % h] += v;
                    }
                }
            }
            Op::ConcatRows { parts } => {
                let mut offset = 0;
                for p in parts {
                    let m = self.value(*p);
                    let len = m.data.len();
                    let slice = Mat::from_vec(m.rows, m.cols, g.data[offset..offset + len].to_vec());
                    self.accumulate(grads, *p, slice);
                    offset += len;
                }
            }
            Op::ConcatCols { parts } => {
                let mut offset = 0;
                for p in parts {
                    let cols = self.value(*p).cols;
                    if let Some(gp) = self.grad_slot(grads, *p) {
                        for r in 0..g.rows {
                            for (o, v) in gp.row_mut(r).iter_mut().zip(&g.row(r)[offset..offset + cols]) {
                                *o += v;
                            }
                        }
                    }
                    offset += cols;
                }
            }
            Op::SliceCols { a, start } => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for r in 0..g.rows {
                        let dst = &mut ga.row_mut(r)[*start..*start + g.cols];
                        for (o, v) in dst.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::RowNorm { a } => {
                let x = self.value(*a);
                let mut dx = Mat::zeros(x.rows, x.cols);
                for r in 0..x.rows {
                    let n = node.value.data[r];
                    if n > 0.0 {
                        for c in 0..x.cols {
                            dx.data[r * x.cols + c] = g.data[r] * x.get(r, c) / n;
                        }
                    }
                }
                self.accumulate(grads, *a, dx);
            }
            Op::Mean { a } => {
                let x = self.value(*a);
                let v = g.data[0] / x.data.len() as f64;
                self.accumulate(grads, *a, Mat::from_vec(x.rows, x.cols, vec![v; x.data.len()]));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric(f: &dyn Fn(&Mat) -> f64, x: &Mat) -> Mat {
        let mut out = Mat::zeros(x.rows, x.cols);
        for i in 0..x.data.len() {
            let mut p = x.clone();
            p.data[i] += 1e-6;
            let mut m = x.clone();
            m.data[i] -= 1e-6;
            out.data[i] = (f(&p) - f(&m)) / 2e-6;
        }
        out
    }

    fn check(build: &dyn Fn(&mut Tape, Var) -> Var, x: Mat) {
        let mut tape = Tape::new();
        let v = tape.param(x.clone());
        let loss = build(&mut tape, v);
        let grads = tape.backward(loss);
        let analytic = grads[v.0].clone().unwrap();
        let f = |m: &Mat| {
            let mut t = Tape::new();
            let v = t.param(m.clone());
            let l = build(&mut t, v);
            t.value(l).data[0]
        };
        let num = numeric(&f, &x);
        for (a, n) in analytic.data.iter().zip(&num.data) {
            assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "{a} vs {n}");
        }
    }

    fn sample(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut s = seed;
        let data = (0..rows * cols)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        Mat::from_vec(rows, cols, data)
    }

    #[test]
    fn matmul_grads() {
        let w = sample(4, 3, 1);
        check(
            &move |t, x| {
                let wv = t.constant(w.clone());
                let y = t.matmul(x, wv);
                let xt = t.matmul_t(x, x);
                let z0 = t.matmul(xt, y);
                let z = t.matmul_t(z0, y);
                let s = t.mul(z, z);
                t.mean(s)
            },
            sample(5, 4, 2),
        );
    }

    #[test]
    fn nonlinear_grads() {
        let gamma = sample(1, 6, 3);
        let beta = sample(1, 6, 4);
        check(
            &move |t, x| {
                let g = t.constant(gamma.clone());
                let b = t.constant(beta.clone());
                let a = t.layer_norm(x, g, b);
                let a = t.gelu(a);
                let s = t.softmax(a);
                let y = t.sigmoid(s);
                let idx = t.gather(y, vec![0, 2, 2, 1]);
                let m = t.group_max(idx, 2);
                let c = t.concat_rows(&[m, x]);
                let sl = t.slice_cols(c, 1, 3);
                let sl = t.concat_cols(&[sl, sl]);
                let n = t.row_norm(sl);
                let sc = t.scale(n, 0.7);
                t.mean(sc)
            },
            sample(3, 6, 5),
        );
    }

    #[test]
    fn bias_and_elementwise_grads() {
        check(
            &|t, x| {
                let b = t.slice_cols(x, 0, 4);
                let row = t.gather(b, vec![1]);
                let y = t.add_bias(b, row);
                let z = t.sub(y, b);
                let w = t.add(z, y);
                let w = t.mul(w, w);
                t.mean(w)
            },
            sample(3, 4, 6),
        );
    }

    #[test]
    fn edge_max_matches_gather_then_max() {
        let c = sample(6, 5, 11);
        let b = sample(6, 5, 12);
        let bias = sample(1, 5, 13);
        let nbrs = vec![1, 2, 3, 0, 2, 5, 4, 1, 0, 5, 4, 3, 0, 1, 2, 3, 2, 1];
        let mut t = Tape::new();
        let (cv, bv, biasv) = (t.param(c.clone()), t.param(b.clone()), t.constant(bias.clone()));
        let fused = t.edge_max(cv, bv, biasv, &nbrs, 3);
        let centre = t.gather(cv, (0..6).flat_map(|i| [i, i, i]).collect());
        let other = t.gather(bv, nbrs.clone());
        let e = t.add(centre, other);
        let e = t.add_bias(e, biasv);
        let e = t.gelu(e);
        let naive = t.group_max(e, 3);
        assert_eq!(t.value(fused), t.value(naive));

        let nb = nbrs.clone();
        check(
            &move |t, x| {
                let cv = t.slice_cols(x, 0, 5);
                let bv = t.slice_cols(x, 5, 5);
                let biasv = t.constant(bias.clone());
                let y = t.edge_max(cv, bv, biasv, &nb, 3);
                let y = t.mul(y, y);
                t.mean(y)
            },
            Mat::from_vec(6, 10, (0..6).flat_map(|r| c.row(r).iter().chain(b.row(r)).copied().collect::<Vec<_>>()).collect()),
        );
    }

    #[test]
    fn gelu_has_one_minimum() {
        let xs: Vec<f64> = (0..4000).map(|i| -20.0 + i as f64 * 0.01).collect();
        let turns = xs.windows(3).filter(|w| (gelu(w[1]) - gelu(w[0])) * (gelu(w[2]) - gelu(w[1])) < 0.0).count();
        assert_eq!(turns, 1);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut t = Tape::new();
        let x = t.constant(sample(7, 9, 8));
        let s = t.softmax(x);
        for r in 0..7 {
            assert!((t.value(s).row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
