use std::collections::HashMap;

use super::store::{ParamId, ParamStore, Tensor};
use super::{Result, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Relu,
    Sigmoid,
    Tanh,
    Add,
    Mul,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather(Var, Vec<Option<usize>>),
    ScatterAdd(Var, Vec<usize>),
    ScaleRows(Var, Var),
    SelectRows(Var, Var, Vec<bool>),
    Reshape(Var),
    Softmax(Var),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<bool>,
        count: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

/// Append-only tape of matrix operations. Nodes are created in evaluation
/// order, so a reverse sweep visits every node after all of its consumers.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    grads: Vec<Option<Vec<f64>>>,
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

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::matrix(n.rows, n.cols, n.value.clone()).expect("graph node shape")
    }

    /// Adjoint of `v` from the last [`Graph::backward`] call, if `v` was reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Constant leaf.
    pub fn input(&mut self, t: &Tensor) -> Var {
        let (r, c) = t.dims2();
        self.push(r, c, t.values().to_vec(), Op::Input)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<Var> {
        if rows * cols != values.len() || rows == 0 || cols == 0 {
            return Err(TensorError::InvalidShape {
                shape: vec![rows, cols],
                len: values.len(),
            });
        }
        Ok(self.push(rows, cols, values, Op::Input))
    }

    /// Leaf bound to a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let t = store.get(id);
        let (r, c) = t.dims2();
        let v = self.push(r, c, t.values().to_vec(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: vec![sa.0, sa.1],
                rhs: vec![sb.0, sb.1],
            });
        }
        Ok(sa)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (k2, n)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let mut out = vec![0.0; m * n];
        let (av, bv) = (&self.node(a).value, &self.node(b).value);
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                for (o, w) in row.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *o += x * w;
                }
            }
        }
        Ok(self.push(m, n, out, Op::MatMul(a, b)))
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<(usize, usize, Vec<f64>)> {
        let (r, c) = self.same_shape(op, a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        Ok((r, c, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c, v) = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(r, c, v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c, v) = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(r, c, v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c, v) = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(r, c, v, Op::Mul(a, b)))
    }

    /// Adds a `1 × n` row to every row of an `m × n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let ((m, n), (r1, n2)) = (self.shape(a), self.shape(row));
        if r1 != 1 || n != n2 {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: vec![m, n],
                rhs: vec![r1, n2],
            });
        }
        let rv = self.value(row);
        let out = self
            .value(a)
            .chunks(n)
            .flat_map(|r| r.iter().zip(rv).map(|(x, b)| x + b))
            .collect();
        Ok(self.push(m, n, out, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x * factor).collect();
        self.push(r, c, out, Op::Scale(a, factor))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| f(*x)).collect();
        self.push(r, c, out, op)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    /// Dispatches the pointwise primitives by name.
    pub fn elementwise(&mut self, op: Elementwise, args: &[Var]) -> Result<Var> {
        let arity = match op {
            Elementwise::Relu | Elementwise::Sigmoid | Elementwise::Tanh => 1,
            Elementwise::Add | Elementwise::Mul => 2,
        };
        if args.len() != arity {
            return Err(TensorError::ShapeMismatch {
                op: "elementwise",
                lhs: vec![arity],
                rhs: vec![args.len()],
            });
        }
        Ok(match op {
            Elementwise::Relu => self.relu(args[0]),
            Elementwise::Sigmoid => self.sigmoid(args[0]),
            Elementwise::Tanh => self.tanh(args[0]),
            Elementwise::Add => self.add(args[0], args[1])?,
            Elementwise::Mul => self.mul(args[0], args[1])?,
        })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(TensorError::Empty { op: "concat_cols" })?;
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: vec![rows, cols],
                    rhs: vec![r, c],
                });
            }
            cols += c;
        }
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push(rows, cols, out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(TensorError::Empty { op: "concat_rows" })?;
        let cols = self.shape(first).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.shape(p);
            if c != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: vec![rows, cols],
                    rhs: vec![r, c],
                });
            }
            rows += r;
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(rows, cols, out, Op::ConcatRows(parts.to_vec())))
    }

    /// Selects rows by index; `None` yields a zero row.
    pub fn gather_rows(&mut self, a: Var, index: &[Option<usize>]) -> Result<Var> {
        if index.is_empty() {
            return Err(TensorError::Empty { op: "gather_rows" });
        }
        let (m, n) = self.shape(a);
        let mut out = Vec::with_capacity(index.len() * n);
        for ix in index {
            match *ix {
                Some(i) if i >= m => {
                    return Err(TensorError::IndexOutOfRange {
                        op: "gather_rows",
                        index: i,
                        bound: m,
                    })
                }
                Some(i) => out.extend_from_slice(&self.value(a)[i * n..(i + 1) * n]),
                None => out.extend(std::iter::repeat_n(0.0, n)),
            }
        }
        Ok(self.push(index.len(), n, out, Op::Gather(a, index.to_vec())))
    }

    /// Embedding-style lookup: `gather_rows` with every index present.
    pub fn lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let index: Vec<Option<usize>> = ids.iter().map(|&i| Some(i)).collect();
        self.gather_rows(table, &index)
    }

    /// Sums row `i` of `a` into output row `target[i]`; output has `rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, target: &[usize], rows: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if target.len() != m {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_add_rows",
                lhs: vec![m, n],
                rhs: vec![target.len()],
            });
        }
        let mut out = vec![0.0; rows * n];
        for (i, &t) in target.iter().enumerate() {
            if t >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "scatter_add_rows",
                    index: t,
                    bound: rows,
                });
            }
            let src = &self.node(a).value[i * n..(i + 1) * n];
            for (o, x) in out[t * n..(t + 1) * n].iter_mut().zip(src) {
                *o += x;
            }
        }
        Ok(self.push(rows, n, out, Op::ScatterAdd(a, target.to_vec())))
    }

    /// Multiplies row `i` of `a` by `s[i]`, where `s` is an `m × 1` column.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var> {
        let ((m, n), (sm, sc)) = (self.shape(a), self.shape(s));
        if sm != m || sc != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "scale_rows",
                lhs: vec![m, n],
                rhs: vec![sm, sc],
            });
        }
        let sv = self.value(s);
        let out = self
            .value(a)
            .chunks(n)
            .zip(sv)
            .flat_map(|(r, k)| r.iter().map(move |x| x * k))
            .collect();
        Ok(self.push(m, n, out, Op::ScaleRows(a, s)))
    }

    /// Row `i` comes from `a` where `take_a[i]`, otherwise from `b`.
    pub fn select_rows(&mut self, a: Var, b: Var, take_a: &[bool]) -> Result<Var> {
        let (m, n) = self.same_shape("select_rows", a, b)?;
        if take_a.len() != m {
            return Err(TensorError::ShapeMismatch {
                op: "select_rows",
                lhs: vec![m, n],
                rhs: vec![take_a.len()],
            });
        }
        let mut out = Vec::with_capacity(m * n);
        for (i, &k) in take_a.iter().enumerate() {
            let src = if k { a } else { b };
            out.extend_from_slice(&self.value(src)[i * n..(i + 1) * n]);
        }
        Ok(self.push(m, n, out, Op::SelectRows(a, b, take_a.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if m * n != rows * cols {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: vec![m, n],
                rhs: vec![rows, cols],
            });
        }
        let v = self.value(a).to_vec();
        Ok(self.push(rows, cols, v, Op::Reshape(a)))
    }

    /// Row-wise softmax. Masked-out entries (`false`) come out exactly zero.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (m, n) = self.shape(a);
        if let Some(mask) = mask {
            if mask.len() != m * n {
                return Err(TensorError::ShapeMismatch {
                    op: "softmax_rows",
                    lhs: vec![m, n],
                    rhs: vec![mask.len()],
                });
            }
        }
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &self.value(a)[i * n..(i + 1) * n];
            out.extend(softmax(row, mask.map(|k| &k[i * n..(i + 1) * n]))?);
        }
        Ok(self.push(m, n, out, Op::Softmax(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    /// Mean over unmasked rows of `-log softmax(logits[i])[targets[i]]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let (m, n) = self.shape(logits);
        if targets.len() != m || mask.len() != m {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: vec![m, n],
                rhs: vec![targets.len(), mask.len()],
            });
        }
        let count = mask.iter().filter(|&&k| k).count();
        if count == 0 {
            return Err(TensorError::AllMasked);
        }
        let lv = self.value(logits);
        let mut total = 0.0;
        for i in 0..m {
            if !mask[i] {
                continue;
            }
            if targets[i] >= n {
                return Err(TensorError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: targets[i],
                    bound: n,
                });
            }
            let row = &lv[i * n..(i + 1) * n];
            total += log_sum_exp(row) - row[targets[i]];
        }
        let loss = total / count as f64;
        Ok(self.push(
            1,
            1,
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                count,
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`. Adjoints of parameter leaves are
    /// added onto the matching tensors in `store` that require gradients.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        self.backward_only(loss)?;
        for (i, node) in self.nodes.iter().enumerate() {
            let Op::Param(id) = node.op else { continue };
            if let Some(g) = self.grads[i].as_deref() {
                let t = store.get_mut(id);
                if t.requires_grad() {
                    t.accumulate_grad(g);
                }
            }
        }
        Ok(())
    }

    /// Computes adjoints for every node reachable from `loss` without
    /// touching any parameter store.
    pub fn backward_only(&mut self, loss: Var) -> Result<()> {
        let (r, c) = self.shape(loss);
        if r * c != 1 {
            return Err(TensorError::NonScalarLoss(vec![r, c]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let (rows, cols) = (node.rows, node.cols);
        let out = &node.value;
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = cols;
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = accum(grads, *a, m * k);
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &bv[p * n..(p + 1) * n];
                        ga[i * k + p] += dot(grow, brow);
                    }
                }
                let gb = accum(grads, *b, k * n);
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let x = av[i * k + p];
                        if x == 0.0 {
                            continue;
                        }
                        for (o, y) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                            *o += x * y;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(accum(grads, *a, g.len()), g);
                add_into(accum(grads, *b, g.len()), g);
            }
            Op::Sub(a, b) => {
                add_into(accum(grads, *a, g.len()), g);
                for (o, d) in accum(grads, *b, g.len()).iter_mut().zip(g) {
                    *o -= d;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                for ((o, d), y) in accum(grads, *a, g.len()).iter_mut().zip(g).zip(bv) {
                    *o += d * y;
                }
                for ((o, d), x) in accum(grads, *b, g.len()).iter_mut().zip(g).zip(av) {
                    *o += d * x;
                }
            }
            Op::AddRow(a, row) => {
                add_into(accum(grads, *a, g.len()), g);
                let gr = accum(grads, *row, cols);
                for chunk in g.chunks(cols) {
                    add_into(gr, chunk);
                }
            }
            Op::Scale(a, k) => {
                for (o, d) in accum(grads, *a, g.len()).iter_mut().zip(g) {
                    *o += d * k;
                }
            }
            Op::Relu(a) => {
                let av = self.value(*a);
                for ((o, d), x) in accum(grads, *a, g.len()).iter_mut().zip(g).zip(av) {
                    if *x > 0.0 {
                        *o += d;
                    }
                }
            }
            Op::Sigmoid(a) => {
                for ((o, d), y) in accum(grads, *a, g.len()).iter_mut().zip(g).zip(out) {
                    *o += d * y * (1.0 - y);
                }
            }
            Op::Tanh(a) => {
                for ((o, d), y) in accum(grads, *a, g.len()).iter_mut().zip(g).zip(out) {
                    *o += d * (1.0 - y * y);
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let c = self.shape(*p).1;
                    let gp = accum(grads, *p, rows * c);
                    for r in 0..rows {
                        add_into(&mut gp[r * c..(r + 1) * c], &g[r * cols + offset..r * cols + offset + c]);
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    add_into(accum(grads, *p, len), &g[offset..offset + len]);
                    offset += len;
                }
            }
            Op::Gather(a, index) => {
                let len = self.value(*a).len();
                let ga = accum(grads, *a, len);
                for (r, ix) in index.iter().enumerate() {
                    if let Some(src) = ix {
                        add_into(&mut ga[src * cols..(src + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    }
                }
            }
            Op::ScatterAdd(a, target) => {
                let len = self.value(*a).len();
                let ga = accum(grads, *a, len);
                for (r, &t) in target.iter().enumerate() {
                    add_into(&mut ga[r * cols..(r + 1) * cols], &g[t * cols..(t + 1) * cols]);
                }
            }
            Op::ScaleRows(a, s) => {
                let (av, sv) = (self.value(*a), self.value(*s));
                let ga = accum(grads, *a, g.len());
                for r in 0..rows {
                    for c in 0..cols {
                        ga[r * cols + c] += g[r * cols + c] * sv[r];
                    }
                }
                let gs = accum(grads, *s, rows);
                for r in 0..rows {
                    gs[r] += dot(&g[r * cols..(r + 1) * cols], &av[r * cols..(r + 1) * cols]);
                }
            }
            Op::SelectRows(a, b, take_a) => {
                for (i, &k) in take_a.iter().enumerate() {
                    let dst = accum(grads, if k { *a } else { *b }, g.len());
                    add_into(&mut dst[i * cols..(i + 1) * cols], &g[i * cols..(i + 1) * cols]);
                }
            }
            Op::Reshape(a) => add_into(accum(grads, *a, g.len()), g),
            Op::Softmax(a) => {
                let ga = accum(grads, *a, g.len());
                for r in 0..rows {
                    let y = &out[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let inner = dot(y, gr);
                    for c in 0..cols {
                        ga[r * cols + c] += y[c] * (gr[c] - inner);
                    }
                }
            }
            Op::Sum(a) => {
                let len = self.value(*a).len();
                for o in accum(grads, *a, len).iter_mut() {
                    *o += g[0];
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                count,
            } => {
                let (m, n) = self.shape(*logits);
                let lv = self.value(*logits);
                let scale = g[0] / *count as f64;
                let gl = accum(grads, *logits, m * n);
                for i in 0..m {
                    if !mask[i] {
                        continue;
                    }
                    let row = &lv[i * n..(i + 1) * n];
                    let lse = log_sum_exp(row);
                    for c in 0..n {
                        let p = (row[c] - lse).exp();
                        let onehot = if c == targets[i] { 1.0 } else { 0.0 };
                        gl[i * n + c] += scale * (p - onehot);
                    }
                }
            }
        }
    }
}

fn accum(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Softmax of `logits` restricted to positions where `mask` is true.
pub fn softmax(logits: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(TensorError::Empty { op: "softmax" });
    }
    if let Some(mask) = mask {
        if mask.len() != logits.len() {
            return Err(TensorError::ShapeMismatch {
                op: "softmax",
                lhs: vec![logits.len()],
                rhs: vec![mask.len()],
            });
        }
    }
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let max = (0..logits.len())
        .filter(|&i| keep(i))
        .map(|i| logits[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(TensorError::AllMasked);
    }
    let mut out: Vec<f64> = (0..logits.len())
        .map(|i| if keep(i) { (logits[i] - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    Ok(out)
}
