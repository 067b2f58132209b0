//! A static computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in topological order and shapes are checked at build
//! time. `forward` evaluates every node; `backward` walks the exact reverse
//! order and accumulates gradients into every trainable parameter. All
//! execution is sequential, so results are bit-identical between runs for
//! identical graphs and inputs.

use std::collections::HashMap;

use super::ops::{self, ConvScratch};
use super::scalar::Scalar;
use super::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct NodeId(pub(crate) usize);

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphBuildError {
    ShapeMismatch { op: &'static str, detail: String },
    DuplicateParam(String),
}

impl std::fmt::Display for GraphBuildError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::ShapeMismatch { op, detail } => write!(f, "shape mismatch in {op}: {detail}"),
            Self::DuplicateParam(name) => write!(f, "duplicate parameter name {name:?}"),
        }
    }
}

impl std::error::Error for GraphBuildError {}

#[derive(Debug, Clone, PartialEq)]
pub enum ExecError {
    /// `backward` was called without a completed forward pass.
    BackwardBeforeForward,
    /// An operator produced NaN or infinity.
    NonFinite { node: usize, op: &'static str },
    /// An input node was not bound before `forward`.
    UnboundInput { node: usize },
}

impl std::fmt::Display for ExecError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::BackwardBeforeForward => write!(f, "backward called before forward"),
            Self::NonFinite { node, op } => write!(f, "non-finite value produced by node {node} ({op})"),
            Self::UnboundInput { node } => write!(f, "input node {node} not bound"),
        }
    }
}

impl std::error::Error for ExecError {}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param { trainable: bool },
    Conv2d { stride: usize },
    Dense,
    BatchNorm { mean: NodeId, var: NodeId },
    Relu,
    Add,
    GlobalAvgPool,
    GlobalMaxPool,
    Concat,
    Softmax,
    GroupSoftmax { group: usize },
    GroupWeightedSum { group: usize },
    Reshape,
    SoftmaxCrossEntropy,
    WeightedSum { coeffs: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param { .. } => "param",
            Op::Conv2d { .. } => "conv2d",
            Op::Dense => "dense",
            Op::BatchNorm { .. } => "batch_norm",
            Op::Relu => "relu",
            Op::Add => "add",
            Op::GlobalAvgPool => "global_avg_pool",
            Op::GlobalMaxPool => "global_max_pool",
            Op::Concat => "concat",
            Op::Softmax => "softmax",
            Op::GroupSoftmax { .. } => "group_softmax",
            Op::GroupWeightedSum { .. } => "group_weighted_sum",
            Op::Reshape => "reshape",
            Op::SoftmaxCrossEntropy => "softmax_cross_entropy",
            Op::WeightedSum { .. } => "weighted_sum",
        }
    }
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    shape: [usize; 4],
    needs_grad: bool,
}

enum Cache<T> {
    None,
    Bn { xhat: Tensor<T>, inv_std: Vec<T> },
    Gmp { argmax: Vec<u32> },
    Xent { probs: Tensor<T> },
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node>,
    values: Vec<Option<Tensor<T>>>,
    grads: Vec<Option<Tensor<T>>>,
    caches: Vec<Cache<T>>,
    param_ids: Vec<NodeId>,
    param_names: HashMap<String, NodeId>,
    names_by_id: HashMap<usize, String>,
    scratch: ConvScratch<T>,
    forward_done: bool,
    /// Drop intermediate values during backward to bound peak memory.
    pub transient_values: bool,
    /// Scan every operator output for NaN/Inf.
    pub finite_checks: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            caches: Vec::new(),
            param_ids: Vec::new(),
            param_names: HashMap::new(),
            names_by_id: HashMap::new(),
            scratch: ConvScratch::default(),
            forward_done: false,
            transient_values: false,
            finite_checks: true,
        }
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, shape: [usize; 4]) -> NodeId {
        let needs_grad = match op {
            Op::Param { trainable } => trainable,
            Op::Input => false,
            _ => inputs.iter().any(|i| self.nodes[i.0].needs_grad),
        };
        self.nodes.push(Node { op, inputs, shape, needs_grad });
        self.values.push(None);
        self.grads.push(None);
        self.caches.push(Cache::None);
        NodeId(self.nodes.len() - 1)
    }

    fn shape_of(&self, id: NodeId) -> [usize; 4] {
        self.nodes[id.0].shape
    }

    fn err(op: &'static str, detail: String) -> GraphBuildError {
        GraphBuildError::ShapeMismatch { op, detail }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    // ---- construction ----

    pub fn input(&mut self, shape: [usize; 4]) -> NodeId {
        self.push(Op::Input, vec![], shape)
    }

    pub fn param(&mut self, name: &str, init: Tensor<T>, trainable: bool) -> Result<NodeId, GraphBuildError> {
        if self.param_names.contains_key(name) {
            return Err(GraphBuildError::DuplicateParam(name.to_string()));
        }
        let shape = init.shape();
        let id = self.push(Op::Param { trainable }, vec![], shape);
        self.values[id.0] = Some(init);
        self.param_ids.push(id);
        self.param_names.insert(name.to_string(), id);
        self.names_by_id.insert(id.0, name.to_string());
        Ok(id)
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, stride: usize) -> Result<NodeId, GraphBuildError> {
        let xs = self.shape_of(x);
        let ws = self.shape_of(w);
        if !(stride == 1 || stride == 2) {
            return Err(Self::err("conv2d", format!("unsupported stride {stride}")));
        }
        if ws[2] != 3 || ws[3] != 3 {
            return Err(Self::err("conv2d", format!("kernel must be 3x3, got {:?}", ws)));
        }
        if ws[1] != xs[1] {
            return Err(Self::err("conv2d", format!("input channels {} != kernel channels {}", xs[1], ws[1])));
        }
        let out = ops::conv2d_out_shape(xs, ws, stride);
        Ok(self.push(Op::Conv2d { stride }, vec![x, w], out))
    }

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, GraphBuildError> {
        let xs = self.shape_of(x);
        let ws = self.shape_of(w);
        let bs = self.shape_of(b);
        if xs[2] != 1 || xs[3] != 1 {
            return Err(Self::err("dense", format!("expected flat input, got {:?}", xs)));
        }
        if ws[1] != xs[1] || ws[2] != 1 || ws[3] != 1 {
            return Err(Self::err("dense", format!("weight {:?} incompatible with input {:?}", ws, xs)));
        }
        if bs != [ws[0], 1, 1, 1] {
            return Err(Self::err("dense", format!("bias {:?} incompatible with weight {:?}", bs, ws)));
        }
        Ok(self.push(Op::Dense, vec![x, w, b], [xs[0], ws[0], 1, 1]))
    }

    /// `running_mean` and `running_var` must be non-trainable parameters;
    /// train-mode forward updates them with momentum [`BN_MOMENTUM`].
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: NodeId,
        running_var: NodeId,
    ) -> Result<NodeId, GraphBuildError> {
        let xs = self.shape_of(x);
        let c = xs[1];
        for (name, id) in [("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)] {
            if self.shape_of(id) != [c, 1, 1, 1] {
                return Err(Self::err(
                    "batch_norm",
                    format!("{name} shape {:?} incompatible with {c} channels", self.shape_of(id)),
                ));
            }
        }
        Ok(self.push(Op::BatchNorm { mean: running_mean, var: running_var }, vec![x, gamma, beta], xs))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let s = self.shape_of(x);
        self.push(Op::Relu, vec![x], s)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphBuildError> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa != sb {
            return Err(Self::err("add", format!("{sa:?} vs {sb:?}")));
        }
        Ok(self.push(Op::Add, vec![a, b], sa))
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> NodeId {
        let s = self.shape_of(x);
        self.push(Op::GlobalAvgPool, vec![x], [s[0], s[1], 1, 1])
    }

    pub fn global_max_pool(&mut self, x: NodeId) -> NodeId {
        let s = self.shape_of(x);
        self.push(Op::GlobalMaxPool, vec![x], [s[0], s[1], 1, 1])
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId, GraphBuildError> {
        if xs.is_empty() {
            return Err(Self::err("concat", "no inputs".into()));
        }
        let first = self.shape_of(xs[0]);
        let mut c = 0;
        for &x in xs {
            let s = self.shape_of(x);
            if [s[0], s[2], s[3]] != [first[0], first[2], first[3]] {
                return Err(Self::err("concat", format!("{s:?} vs {first:?}")));
            }
            c += s[1];
        }
        Ok(self.push(Op::Concat, xs.to_vec(), [first[0], c, first[2], first[3]]))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, GraphBuildError> {
        let s = self.shape_of(x);
        if s[2] != 1 || s[3] != 1 {
            return Err(Self::err("softmax", format!("expected flat input, got {s:?}")));
        }
        Ok(self.push(Op::Softmax, vec![x], s))
    }

    /// Softmax over consecutive groups of `group` rows of a (N, 1, 1, 1) tensor.
    pub fn group_softmax(&mut self, x: NodeId, group: usize) -> Result<NodeId, GraphBuildError> {
        let s = self.shape_of(x);
        if s[1] != 1 || s[2] != 1 || s[3] != 1 || s[0] % group != 0 {
            return Err(Self::err("group_softmax", format!("shape {s:?} not groupable by {group}")));
        }
        Ok(self.push(Op::GroupSoftmax { group }, vec![x], s))
    }

    /// Per-group weighted sum of row features: (N, F) with weights (N, 1)
    /// collapses to (N/group, F).
    pub fn group_weighted_sum(&mut self, weights: NodeId, feats: NodeId, group: usize) -> Result<NodeId, GraphBuildError> {
        let ws = self.shape_of(weights);
        let fs = self.shape_of(feats);
        if ws != [fs[0], 1, 1, 1] || fs[0] % group != 0 || fs[2] != 1 || fs[3] != 1 {
            return Err(Self::err("group_weighted_sum", format!("weights {ws:?} feats {fs:?} group {group}")));
        }
        Ok(self.push(Op::GroupWeightedSum { group }, vec![weights, feats], [fs[0] / group, fs[1], 1, 1]))
    }

    pub fn reshape(&mut self, x: NodeId, shape: [usize; 4]) -> Result<NodeId, GraphBuildError> {
        let s = self.shape_of(x);
        if s.iter().product::<usize>() != shape.iter().product::<usize>() {
            return Err(Self::err("reshape", format!("{s:?} -> {shape:?}")));
        }
        Ok(self.push(Op::Reshape, vec![x], shape))
    }

    /// Scalar node: mean cross-entropy between softmax(logits) and target.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: NodeId) -> Result<NodeId, GraphBuildError> {
        let (ls, ts) = (self.shape_of(logits), self.shape_of(target));
        if ls != ts || ls[2] != 1 || ls[3] != 1 {
            return Err(Self::err("softmax_cross_entropy", format!("logits {ls:?} target {ts:?}")));
        }
        Ok(self.push(Op::SoftmaxCrossEntropy, vec![logits, target], [1, 1, 1, 1]))
    }

    /// Scalar node: sum of `coeff * input` over scalar inputs.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId, GraphBuildError> {
        for &(id, _) in terms {
            if self.shape_of(id) != [1, 1, 1, 1] {
                return Err(Self::err("weighted_sum", format!("non-scalar input {:?}", self.shape_of(id))));
            }
        }
        let (ids, coeffs): (Vec<_>, Vec<_>) = terms.iter().copied().unzip();
        Ok(self.push(Op::WeightedSum { coeffs }, ids, [1, 1, 1, 1]))
    }

    // ---- parameter access ----

    /// Parameter ids in creation order (deterministic).
    pub fn params(&self) -> &[NodeId] {
        &self.param_ids
    }

    pub fn trainable_params(&self) -> Vec<NodeId> {
        self.param_ids
            .iter()
            .copied()
            .filter(|id| matches!(self.nodes[id.0].op, Op::Param { trainable: true }))
            .collect()
    }

    pub fn param_by_name(&self, name: &str) -> Option<NodeId> {
        self.param_names.get(name).copied()
    }

    pub fn param_name(&self, id: NodeId) -> &str {
        self.names_by_id.get(&id.0).map(|s| s.as_str()).unwrap_or("<anon>")
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        self.values[id.0].as_ref().expect("node value not available")
    }

    pub fn try_value(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.values[id.0].as_ref()
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads[id.0].as_ref()
    }

    pub fn set_param_value(&mut self, id: NodeId, value: Tensor<T>) {
        assert!(matches!(self.nodes[id.0].op, Op::Param { .. }), "not a parameter node");
        assert_eq!(value.shape(), self.nodes[id.0].shape, "parameter shape changed");
        self.values[id.0] = Some(value);
    }

    pub fn param_value_mut(&mut self, id: NodeId) -> &mut Tensor<T> {
        assert!(matches!(self.nodes[id.0].op, Op::Param { .. }), "not a parameter node");
        self.values[id.0].as_mut().expect("parameter value missing")
    }

    pub fn bind_input(&mut self, id: NodeId, value: Tensor<T>) {
        assert!(matches!(self.nodes[id.0].op, Op::Input), "not an input node");
        assert_eq!(value.shape(), self.nodes[id.0].shape, "input shape mismatch");
        self.values[id.0] = Some(value);
    }

    // ---- execution ----

    pub fn forward(&mut self, mode: Mode) -> Result<(), ExecError> {
        self.forward_done = false;
        for i in 0..self.nodes.len() {
            match &self.nodes[i].op {
                Op::Input => {
                    if self.values[i].is_none() {
                        return Err(ExecError::UnboundInput { node: i });
                    }
                    continue;
                }
                Op::Param { .. } => continue,
                _ => {}
            }
            self.eval_node(i, mode)?;
            if self.finite_checks && !self.values[i].as_ref().unwrap().all_finite() {
                return Err(ExecError::NonFinite { node: i, op: self.nodes[i].op.name() });
            }
        }
        self.forward_done = true;
        Ok(())
    }

    fn in_val(&self, ins: &[NodeId], k: usize) -> &Tensor<T> {
        self.values[ins[k].0].as_ref().expect("missing input value")
    }

    fn eval_node(&mut self, i: usize, mode: Mode) -> Result<(), ExecError> {
        let op = self.nodes[i].op.clone();
        let ins = self.nodes[i].inputs.clone();
        let (out, cache) = match &op {
            Op::Conv2d { stride } => {
                let mut scratch = std::mem::take(&mut self.scratch);
                let y = ops::conv2d_forward(self.in_val(&ins, 0), self.in_val(&ins, 1), *stride, &mut scratch);
                self.scratch = scratch;
                (y, Cache::None)
            }
            Op::Dense => (ops::dense_forward(self.in_val(&ins, 0), self.in_val(&ins, 1), self.in_val(&ins, 2)), Cache::None),
            Op::BatchNorm { mean, var } => {
                let (mean, var) = (*mean, *var);
                match mode {
                    Mode::Train => {
                        let fwd = ops::batch_norm_train(self.in_val(&ins, 0), self.in_val(&ins, 1), self.in_val(&ins, 2), BN_EPS);
                        let c = fwd.batch_mean.len();
                        let mut rm = self.values[mean.0].take().expect("running mean missing");
                        let mut rv = self.values[var.0].take().expect("running var missing");
                        for k in 0..c {
                            let m = rm.data()[k].to_f64() * BN_MOMENTUM + fwd.batch_mean[k] * (1.0 - BN_MOMENTUM);
                            let v = rv.data()[k].to_f64() * BN_MOMENTUM + fwd.batch_var[k] * (1.0 - BN_MOMENTUM);
                            rm.data_mut()[k] = T::from_f64(m);
                            rv.data_mut()[k] = T::from_f64(v);
                        }
                        self.values[mean.0] = Some(rm);
                        self.values[var.0] = Some(rv);
                        (fwd.y, Cache::Bn { xhat: fwd.xhat, inv_std: fwd.inv_std })
                    }
                    Mode::Eval => {
                        let rm = self.values[mean.0].as_ref().expect("running mean missing");
                        let rv = self.values[var.0].as_ref().expect("running var missing");
                        let y = ops::batch_norm_eval(self.in_val(&ins, 0), self.in_val(&ins, 1), self.in_val(&ins, 2), rm, rv, BN_EPS);
                        (y, Cache::None)
                    }
                }
            }
            Op::Relu => (ops::relu_forward(self.in_val(&ins, 0)), Cache::None),
            Op::Add => {
                let mut y = self.in_val(&ins, 0).clone();
                ops::add_assign(&mut y, self.in_val(&ins, 1));
                (y, Cache::None)
            }
            Op::GlobalAvgPool => (ops::global_avg_pool(self.in_val(&ins, 0)), Cache::None),
            Op::GlobalMaxPool => {
                let (y, argmax) = ops::global_max_pool(self.in_val(&ins, 0));
                (y, Cache::Gmp { argmax })
            }
            Op::Concat => {
                let shape = self.nodes[i].shape;
                let mut y = Tensor::zeros(shape);
                let [n, _, h, w] = shape;
                let plane = h * w;
                let mut c0 = 0;
                for k in 0..ins.len() {
                    let x = self.in_val(&ins, k);
                    let cs = x.shape()[1];
                    for b in 0..n {
                        let src = x.offset(b, 0, 0, 0);
                        let dst = y.offset(b, c0, 0, 0);
                        y.data_mut()[dst..dst + cs * plane].copy_from_slice(&x.data()[src..src + cs * plane]);
                    }
                    c0 += cs;
                }
                (y, Cache::None)
            }
            Op::Softmax => (ops::softmax(self.in_val(&ins, 0)), Cache::None),
            Op::GroupSoftmax { group } => (ops::group_softmax(self.in_val(&ins, 0), *group), Cache::None),
            Op::GroupWeightedSum { group } => {
                (ops::group_weighted_sum(self.in_val(&ins, 0), self.in_val(&ins, 1), *group), Cache::None)
            }
            Op::Reshape => (self.in_val(&ins, 0).reshaped(self.nodes[i].shape), Cache::None),
            Op::SoftmaxCrossEntropy => {
                let (loss, probs) = ops::softmax_cross_entropy(self.in_val(&ins, 0), self.in_val(&ins, 1));
                (loss, Cache::Xent { probs })
            }
            Op::WeightedSum { coeffs } => {
                let mut acc = 0f64;
                for (k, c) in coeffs.iter().enumerate() {
                    acc += c * self.in_val(&ins, k).item().to_f64();
                }
                (Tensor::scalar(T::from_f64(acc)), Cache::None)
            }
            Op::Input | Op::Param { .. } => unreachable!(),
        };
        self.values[i] = Some(out);
        self.caches[i] = cache;
        Ok(())
    }

    /// Reverse pass from a scalar loss node. Gradients of trainable
    /// parameters are retained; intermediate gradients are freed as soon as
    /// they are consumed. With `transient_values`, intermediate activations
    /// are freed as well, in which case another `forward` is required before
    /// the next `backward`.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), ExecError> {
        if !self.forward_done {
            return Err(ExecError::BackwardBeforeForward);
        }
        assert_eq!(self.nodes[loss.0].shape, [1, 1, 1, 1], "loss must be scalar");
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::scalar(T::ONE));
        for i in (0..self.nodes.len()).rev() {
            let Some(gout) = self.grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Param { .. }) {
                self.grads[i] = Some(gout);
                continue;
            }
            self.diff_node(i, gout)?;
            self.caches[i] = Cache::None;
            if self.transient_values {
                self.values[i] = None;
            }
        }
        if self.transient_values {
            for i in 0..self.nodes.len() {
                if !matches!(self.nodes[i].op, Op::Input | Op::Param { .. }) {
                    self.values[i] = None;
                }
            }
            self.forward_done = false;
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, g: Tensor<T>) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut self.grads[id.0] {
            slot @ None => *slot = Some(g),
            Some(acc) => ops::add_assign(acc, &g),
        }
    }

    fn diff_node(&mut self, i: usize, gout: Tensor<T>) -> Result<(), ExecError> {
        let op = self.nodes[i].op.clone();
        let ins = self.nodes[i].inputs.clone();
        let needs = |g: &Self, k: usize| g.nodes[ins[k].0].needs_grad;
        match &op {
            Op::Conv2d { stride } => {
                let mut scratch = std::mem::take(&mut self.scratch);
                let (dx, dw) = ops::conv2d_backward(self.in_val(&ins, 0), self.in_val(&ins, 1), &gout, *stride, needs(self, 0), &mut scratch);
                self.scratch = scratch;
                if let Some(dx) = dx {
                    self.accumulate(ins[0], dx);
                }
                self.accumulate(ins[1], dw);
            }
            Op::Dense => {
                let (dx, dw, db) = ops::dense_backward(self.in_val(&ins, 0), self.in_val(&ins, 1), &gout, needs(self, 0));
                if let Some(dx) = dx {
                    self.accumulate(ins[0], dx);
                }
                self.accumulate(ins[1], dw);
                self.accumulate(ins[2], db);
            }
            Op::BatchNorm { .. } => {
                let Cache::Bn { xhat, inv_std } = std::mem::replace(&mut self.caches[i], Cache::None) else {
                    panic!("batch_norm backward without train-mode cache");
                };
                let (dx, dgamma, dbeta) = ops::batch_norm_backward(&xhat, &inv_std, self.in_val(&ins, 1), &gout);
                self.accumulate(ins[0], dx);
                self.accumulate(ins[1], dgamma);
                self.accumulate(ins[2], dbeta);
            }
            Op::Relu => {
                let y = self.values[i].as_ref().expect("relu output missing");
                let dx = ops::relu_backward(y, &gout);
                self.accumulate(ins[0], dx);
            }
            Op::Add => {
                self.accumulate(ins[0], gout.clone());
                self.accumulate(ins[1], gout);
            }
            Op::GlobalAvgPool => {
                let dx = ops::global_avg_pool_backward(self.nodes[ins[0].0].shape, &gout);
                self.accumulate(ins[0], dx);
            }
            Op::GlobalMaxPool => {
                let Cache::Gmp { argmax } = std::mem::replace(&mut self.caches[i], Cache::None) else {
                    panic!("global_max_pool backward without cache");
                };
                let dx = ops::global_max_pool_backward(self.nodes[ins[0].0].shape, &argmax, &gout);
                self.accumulate(ins[0], dx);
            }
            Op::Concat => {
                let [n, _, h, w] = self.nodes[i].shape;
                let plane = h * w;
                let mut c0 = 0;
                for k in 0..ins.len() {
                    let cs = self.nodes[ins[k].0].shape[1];
                    if needs(self, k) {
                        let mut dx = Tensor::zeros(self.nodes[ins[k].0].shape);
                        for b in 0..n {
                            let src = gout.offset(b, c0, 0, 0);
                            let dst = dx.offset(b, 0, 0, 0);
                            dx.data_mut()[dst..dst + cs * plane].copy_from_slice(&gout.data()[src..src + cs * plane]);
                        }
                        self.accumulate(ins[k], dx);
                    }
                    c0 += cs;
                }
            }
            Op::Softmax => {
                let y = self.values[i].as_ref().expect("softmax output missing");
                let c = y.shape()[1];
                let dx = ops::softmax_backward(y, &gout, c);
                self.accumulate(ins[0], dx);
            }
            Op::GroupSoftmax { group } => {
                let y = self.values[i].as_ref().expect("group_softmax output missing");
                let dx = ops::softmax_backward(y, &gout, *group);
                self.accumulate(ins[0], dx);
            }
            Op::GroupWeightedSum { group } => {
                let (dw, df) = ops::group_weighted_sum_backward(self.in_val(&ins, 0), self.in_val(&ins, 1), &gout, *group);
                self.accumulate(ins[0], dw);
                self.accumulate(ins[1], df);
            }
            Op::Reshape => {
                let dx = gout.reshaped(self.nodes[ins[0].0].shape);
                self.accumulate(ins[0], dx);
            }
            Op::SoftmaxCrossEntropy => {
                let Cache::Xent { probs } = std::mem::replace(&mut self.caches[i], Cache::None) else {
                    panic!("cross-entropy backward without cache");
                };
                let dl = ops::softmax_cross_entropy_backward(&probs, self.in_val(&ins, 1), gout.item());
                self.accumulate(ins[0], dl);
            }
            Op::WeightedSum { coeffs } => {
                let g = gout.item().to_f64();
                for (k, c) in coeffs.iter().enumerate() {
                    self.accumulate(ins[k], Tensor::scalar(T::from_f64(g * c)));
                }
            }
            Op::Input | Op::Param { .. } => unreachable!(),
        }
        Ok(())
    }
}
