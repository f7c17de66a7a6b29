use std::collections::HashMap;

use super::kernels;
use super::tensor::{numel, Tensor};
use super::AutodiffError;
use crate::Scalar;

/// Index of a node inside a [`Graph`]. Ids stay valid in every graph derived from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Closed operation set. Every op's vector-Jacobian product is again
/// expressed with ops from this set, so gradient graphs can be differentiated.
#[derive(Clone, Debug, PartialEq)]
pub enum Op<T> {
    Input(String),
    Constant(Tensor<T>),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    ScalarMul(NodeId, T),
    /// `[m, k] x [k, n]`.
    MatMul(NodeId, NodeId),
    /// 2-D transpose.
    Transpose(NodeId),
    /// Stride-1 zero-padded cross-correlation: `[ci, h, w]` with `[co, ci, k, k]` gives `[co, h, w]`.
    Conv2d {
        input: NodeId,
        kernel: NodeId,
    },
    /// Gradient of [`Op::Conv2d`] with respect to its kernel.
    Conv2dKernelGrad {
        input: NodeId,
        grad_out: NodeId,
        size: usize,
    },
    /// `[co, ci, k, k] -> [ci, co, k, k]` with both spatial axes reversed.
    KernelFlip(NodeId),
    Silu(NodeId),
    Sigmoid(NodeId),
    SumAll(NodeId),
    /// Single-element tensor repeated to a shape.
    Broadcast(NodeId, Vec<usize>),
    Square(NodeId),
    /// `x[c, ...] + b[c]`.
    BiasAdd(NodeId, NodeId),
    /// `[c, ...] -> [c]` by summing trailing axes.
    ChannelSum(NodeId),
    /// `[c] -> [c, ...]` by repeating along trailing axes.
    ChannelBroadcast(NodeId, Vec<usize>),
    Reshape(NodeId, Vec<usize>),
    /// `[sin(t·ω + q·π/2), cos(t·ω + q·π/2)]` for a single-element `t`.
    SinCosEmbed {
        input: NodeId,
        freqs: Vec<T>,
        quarter_turns: u8,
    },
}

impl<T> Op<T> {
    pub fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Input(_) | Constant(_) => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) | BiasAdd(a, b) => vec![*a, *b],
            Conv2d { input, kernel } => vec![*input, *kernel],
            Conv2dKernelGrad {
                input, grad_out, ..
            } => vec![*input, *grad_out],
            ScalarMul(a, _)
            | Transpose(a)
            | KernelFlip(a)
            | Silu(a)
            | Sigmoid(a)
            | SumAll(a)
            | Broadcast(a, _)
            | Square(a)
            | ChannelSum(a)
            | ChannelBroadcast(a, _)
            | Reshape(a, _) => vec![*a],
            SinCosEmbed { input, .. } => vec![*input],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node<T> {
    pub op: Op<T>,
    pub shape: Vec<usize>,
}

/// Append-only expression graph. Inputs always precede their consumers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Source of values for [`Op::Input`] nodes.
pub trait Env<T> {
    fn lookup(&self, name: &str) -> Option<&Tensor<T>>;
}

impl<T> Env<T> for HashMap<String, Tensor<T>> {
    fn lookup(&self, name: &str) -> Option<&Tensor<T>> {
        self.get(name)
    }
}

impl<T, E: Env<T> + ?Sized> Env<T> for &E {
    fn lookup(&self, name: &str) -> Option<&Tensor<T>> {
        (**self).lookup(name)
    }
}

impl<T, A: Env<T>, B: Env<T>> Env<T> for (A, B) {
    fn lookup(&self, name: &str) -> Option<&Tensor<T>> {
        self.0.lookup(name).or_else(|| self.1.lookup(name))
    }
}

fn mismatch(msg: String) -> AutodiffError {
    AutodiffError::ShapeMismatch(msg)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node<T> {
        &self.nodes[id.0]
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    fn check(&self, id: NodeId) -> Result<&[usize], AutodiffError> {
        self.nodes
            .get(id.0)
            .map(|n| n.shape.as_slice())
            .ok_or(AutodiffError::UnknownNode(id.0))
    }

    fn infer_shape(&self, op: &Op<T>) -> Result<Vec<usize>, AutodiffError> {
        use Op::*;
        for id in op.inputs() {
            self.check(id)?;
        }
        let s = |id: NodeId| self.nodes[id.0].shape.clone();
        Ok(match op {
            Input(_) => unreachable!("inputs carry explicit shapes"),
            Constant(t) => t.shape().to_vec(),
            Add(a, b) | Sub(a, b) | Mul(a, b) => {
                if s(*a) != s(*b) {
                    return Err(mismatch(format!(
                        "elementwise op on {:?} and {:?}",
                        s(*a),
                        s(*b)
                    )));
                }
                s(*a)
            }
            ScalarMul(a, _) | Silu(a) | Sigmoid(a) | Square(a) => s(*a),
            MatMul(a, b) => {
                let (sa, sb) = (s(*a), s(*b));
                if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
                    return Err(mismatch(format!("matmul {sa:?} by {sb:?}")));
                }
                vec![sa[0], sb[1]]
            }
            Transpose(a) => {
                let sa = s(*a);
                if sa.len() != 2 {
                    return Err(mismatch(format!("transpose of rank-{} tensor", sa.len())));
                }
                vec![sa[1], sa[0]]
            }
            Conv2d { input, kernel } => {
                let (si, sk) = (s(*input), s(*kernel));
                if si.len() != 3
                    || sk.len() != 4
                    || sk[1] != si[0]
                    || sk[2] != sk[3]
                    || sk[2] % 2 == 0
                {
                    return Err(mismatch(format!("conv2d input {si:?} kernel {sk:?}")));
                }
                vec![sk[0], si[1], si[2]]
            }
            Conv2dKernelGrad {
                input,
                grad_out,
                size,
            } => {
                let (si, sg) = (s(*input), s(*grad_out));
                if si.len() != 3 || sg.len() != 3 || si[1..] != sg[1..] || size % 2 == 0 {
                    return Err(mismatch(format!(
                        "conv2d kernel gradient from input {si:?} and output gradient {sg:?}"
                    )));
                }
                vec![sg[0], si[0], *size, *size]
            }
            KernelFlip(a) => {
                let sa = s(*a);
                if sa.len() != 4 {
                    return Err(mismatch(format!("kernel flip of {sa:?}")));
                }
                vec![sa[1], sa[0], sa[2], sa[3]]
            }
            SumAll(_) => vec![],
            Broadcast(a, shape) => {
                if numel(&s(*a)) != 1 {
                    return Err(mismatch(format!("broadcast of non-scalar {:?}", s(*a))));
                }
                shape.clone()
            }
            BiasAdd(x, b) => {
                let (sx, sb) = (s(*x), s(*b));
                if sx.is_empty() || sb != [sx[0]] {
                    return Err(mismatch(format!("bias {sb:?} added to {sx:?}")));
                }
                sx
            }
            ChannelSum(a) => {
                let sa = s(*a);
                if sa.is_empty() {
                    return Err(mismatch("channel sum of a scalar".into()));
                }
                vec![sa[0]]
            }
            ChannelBroadcast(a, shape) => {
                let sa = s(*a);
                if shape.is_empty() || sa != [shape[0]] {
                    return Err(mismatch(format!("channel broadcast {sa:?} to {shape:?}")));
                }
                shape.clone()
            }
            Reshape(a, shape) => {
                if numel(&s(*a)) != numel(shape) {
                    return Err(mismatch(format!("reshape {:?} to {shape:?}", s(*a))));
                }
                shape.clone()
            }
            SinCosEmbed { input, freqs, .. } => {
                if numel(&s(*input)) != 1 {
                    return Err(mismatch(format!("embedding of non-scalar {:?}", s(*input))));
                }
                vec![2 * freqs.len()]
            }
        })
    }

    /// Appends an op after checking its shape rule.
    pub fn push(&mut self, op: Op<T>) -> Result<NodeId, AutodiffError> {
        let shape = self.infer_shape(&op)?;
        self.nodes.push(Node { op, shape });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> NodeId {
        self.nodes.push(Node {
            op: Op::Input(name.to_string()),
            shape: shape.to_vec(),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> NodeId {
        let shape = t.shape().to_vec();
        self.nodes.push(Node {
            op: Op::Constant(t),
            shape,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId, AutodiffError> {
        self.push(Op::ScalarMul(a, c))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.push(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.push(Op::Transpose(a))
    }

    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId) -> Result<NodeId, AutodiffError> {
        self.push(Op::Conv2d { input, kernel })
    }

    pub fn silu(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.push(Op::Silu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.push(Op::Sigmoid(a))
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.push(Op::SumAll(a))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.push(Op::Square(a))
    }

    pub fn bias_add(&mut self, x: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        self.push(Op::BiasAdd(x, b))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId, AutodiffError> {
        if self.check(a)? == shape {
            return Ok(a);
        }
        self.push(Op::Reshape(a, shape.to_vec()))
    }

    pub fn sin_cos_embed(&mut self, t: NodeId, freqs: Vec<T>) -> Result<NodeId, AutodiffError> {
        self.push(Op::SinCosEmbed {
            input: t,
            freqs,
            quarter_turns: 0,
        })
    }

    /// Forward values of `outputs`. Only the nodes they depend on are computed.
    pub fn evaluate<E: Env<T> + ?Sized>(
        &self,
        env: &E,
        outputs: &[NodeId],
    ) -> Result<Vec<Tensor<T>>, AutodiffError> {
        let mut needed = vec![false; self.nodes.len()];
        for &o in outputs {
            self.check(o)?;
            needed[o.0] = true;
        }
        for i in (0..self.nodes.len()).rev() {
            if needed[i] {
                for j in self.nodes[i].op.inputs() {
                    needed[j.0] = true;
                }
            }
        }
        let mut values: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        for i in 0..self.nodes.len() {
            if !needed[i] {
                continue;
            }
            let v = self.eval_node(i, env, &values)?;
            values[i] = Some(v);
        }
        Ok(outputs
            .iter()
            .map(|o| values[o.0].clone().expect("output evaluated"))
            .collect())
    }

    fn eval_node<E: Env<T> + ?Sized>(
        &self,
        i: usize,
        env: &E,
        values: &[Option<Tensor<T>>],
    ) -> Result<Tensor<T>, AutodiffError> {
        use Op::*;
        let node = &self.nodes[i];
        let v = |id: &NodeId| values[id.0].as_ref().expect("inputs precede consumers");
        Ok(match &node.op {
            Input(name) => {
                let t = env
                    .lookup(name)
                    .ok_or_else(|| AutodiffError::UnboundInput(name.clone()))?;
                if t.shape() != node.shape.as_slice() {
                    return Err(mismatch(format!(
                        "input '{name}' bound to {:?}, declared {:?}",
                        t.shape(),
                        node.shape
                    )));
                }
                t.clone()
            }
            Constant(t) => t.clone(),
            Add(a, b) => v(a).zip_map(v(b), |x, y| x + y),
            Sub(a, b) => v(a).zip_map(v(b), |x, y| x - y),
            Mul(a, b) => v(a).zip_map(v(b), |x, y| x * y),
            ScalarMul(a, c) => v(a).map(|x| x * *c),
            MatMul(a, b) => kernels::matmul(v(a), v(b)),
            Transpose(a) => kernels::transpose(v(a)),
            Conv2d { input, kernel } => kernels::conv2d(v(input), v(kernel)),
            Conv2dKernelGrad {
                input,
                grad_out,
                size,
            } => kernels::conv2d_kernel_grad(v(input), v(grad_out), *size),
            KernelFlip(a) => kernels::kernel_flip(v(a)),
            Silu(a) => v(a).map(|x| x * kernels::sigmoid(x)),
            Sigmoid(a) => v(a).map(kernels::sigmoid),
            SumAll(a) => Tensor::scalar(v(a).data().iter().copied().sum()),
            Broadcast(a, shape) => Tensor::full(shape, v(a).data()[0]),
            Square(a) => v(a).map(|x| x * x),
            BiasAdd(x, b) => kernels::bias_add(v(x), v(b)),
            ChannelSum(a) => kernels::channel_sum(v(a)),
            ChannelBroadcast(a, shape) => kernels::channel_broadcast(v(a), shape),
            Reshape(a, shape) => v(a).clone().with_shape(shape),
            SinCosEmbed {
                input,
                freqs,
                quarter_turns,
            } => kernels::sin_cos_embed(v(input).data()[0], freqs, *quarter_turns),
        })
    }
}
