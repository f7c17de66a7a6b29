use super::graph::{Graph, NodeId, Op};
use super::tensor::{numel, Tensor};
use super::AutodiffError;
use crate::Scalar;

impl<T: Scalar> Graph<T> {
    /// Reverse-mode gradient of the scalar `output` with respect to each node in `wrt`.
    ///
    /// Returns a new graph extending a copy of `self` with the adjoint nodes,
    /// together with the gradient node for each entry of `wrt`. The source graph
    /// is untouched and its node ids remain valid in the returned graph, so the
    /// result can be differentiated again.
    pub fn gradient(
        &self,
        output: NodeId,
        wrt: &[NodeId],
    ) -> Result<(Graph<T>, Vec<NodeId>), AutodiffError> {
        let n = self.len();
        if output.0 >= n {
            return Err(AutodiffError::UnknownNode(output.0));
        }
        let out_shape = self.shape(output).to_vec();
        if numel(&out_shape) != 1 {
            return Err(AutodiffError::NonScalarOutput(out_shape));
        }
        for w in wrt {
            if w.0 >= n {
                return Err(AutodiffError::UnknownNode(w.0));
            }
        }

        // Nodes that depend on some wrt node and feed the output.
        let mut depends = vec![false; n];
        for w in wrt {
            depends[w.0] = true;
        }
        for i in 0..=output.0 {
            if !depends[i]
                && self
                    .node(NodeId(i))
                    .op
                    .inputs()
                    .iter()
                    .any(|j| depends[j.0])
            {
                depends[i] = true;
            }
        }
        let mut feeds = vec![false; n];
        feeds[output.0] = true;
        for i in (0..=output.0).rev() {
            if feeds[i] {
                for j in self.node(NodeId(i)).op.inputs() {
                    feeds[j.0] = true;
                }
            }
        }
        let relevant: Vec<bool> = (0..n).map(|i| depends[i] && feeds[i]).collect();

        let mut g = self.clone();
        let mut adjoint: Vec<Option<NodeId>> = vec![None; n];
        if relevant[output.0] {
            adjoint[output.0] = Some(g.constant(Tensor::full(&out_shape, T::one())));
        }
        for i in (0..=output.0).rev() {
            let Some(gy) = adjoint[i] else { continue };
            if !relevant[i] {
                continue;
            }
            let op = self.node(NodeId(i)).op.clone();
            for (input, contrib) in vjp(&mut g, NodeId(i), &op, gy, &relevant)? {
                adjoint[input.0] = Some(match adjoint[input.0] {
                    Some(prev) => g.add(prev, contrib)?,
                    None => contrib,
                });
            }
        }

        let grads = wrt
            .iter()
            .map(|w| match adjoint[w.0] {
                Some(id) => id,
                None => {
                    let shape = g.shape(*w).to_vec();
                    g.constant(Tensor::zeros(&shape))
                }
            })
            .collect();
        Ok((g, grads))
    }
}

/// Vector-Jacobian products of node `y = op(..)` given its adjoint `gy`,
/// for each relevant input.
fn vjp<T: Scalar>(
    g: &mut Graph<T>,
    y: NodeId,
    op: &Op<T>,
    gy: NodeId,
    relevant: &[bool],
) -> Result<Vec<(NodeId, NodeId)>, AutodiffError> {
    use Op::*;
    let want = |id: &NodeId| relevant[id.0];
    let mut out = Vec::with_capacity(2);
    match op {
        Input(_) | Constant(_) => {}
        Add(a, b) => {
            if want(a) {
                out.push((*a, gy));
            }
            if want(b) {
                out.push((*b, gy));
            }
        }
        Sub(a, b) => {
            if want(a) {
                out.push((*a, gy));
            }
            if want(b) {
                out.push((*b, g.scale(gy, -T::one())?));
            }
        }
        Mul(a, b) => {
            if want(a) {
                out.push((*a, g.mul(gy, *b)?));
            }
            if want(b) {
                out.push((*b, g.mul(gy, *a)?));
            }
        }
        ScalarMul(a, c) => {
            if want(a) {
                out.push((*a, g.scale(gy, *c)?));
            }
        }
        MatMul(a, b) => {
            if want(a) {
                let bt = g.transpose(*b)?;
                out.push((*a, g.matmul(gy, bt)?));
            }
            if want(b) {
                let at = g.transpose(*a)?;
                out.push((*b, g.matmul(at, gy)?));
            }
        }
        Transpose(a) => {
            if want(a) {
                out.push((*a, g.transpose(gy)?));
            }
        }
        Conv2d { input, kernel } => {
            if want(input) {
                let flipped = g.push(KernelFlip(*kernel))?;
                out.push((*input, g.conv2d(gy, flipped)?));
            }
            if want(kernel) {
                let size = g.shape(*kernel)[2];
                let kg = g.push(Conv2dKernelGrad {
                    input: *input,
                    grad_out: gy,
                    size,
                })?;
                out.push((*kernel, kg));
            }
        }
        Conv2dKernelGrad {
            input, grad_out, ..
        } => {
            // Same trilinear form as Conv2d, with the kernel slot carrying gy.
            if want(input) {
                let flipped = g.push(KernelFlip(gy))?;
                out.push((*input, g.conv2d(*grad_out, flipped)?));
            }
            if want(grad_out) {
                out.push((*grad_out, g.conv2d(*input, gy)?));
            }
        }
        KernelFlip(a) => {
            if want(a) {
                out.push((*a, g.push(KernelFlip(gy))?));
            }
        }
        Silu(a) => {
            if want(a) {
                // silu'(x) = s + x·(s - s²), s = sigmoid(x)
                let s = g.sigmoid(*a)?;
                let s2 = g.square(s)?;
                let ds = g.sub(s, s2)?;
                let xds = g.mul(*a, ds)?;
                let d = g.add(s, xds)?;
                out.push((*a, g.mul(gy, d)?));
            }
        }
        Sigmoid(a) => {
            if want(a) {
                let s2 = g.square(y)?;
                let ds = g.sub(y, s2)?;
                out.push((*a, g.mul(gy, ds)?));
            }
        }
        SumAll(a) => {
            if want(a) {
                let shape = g.shape(*a).to_vec();
                out.push((*a, g.push(Broadcast(gy, shape))?));
            }
        }
        Broadcast(a, _) => {
            if want(a) {
                let s = g.sum_all(gy)?;
                let shape = g.shape(*a).to_vec();
                out.push((*a, g.reshape(s, &shape)?));
            }
        }
        Square(a) => {
            if want(a) {
                let two_a = g.scale(*a, T::of(2.0))?;
                out.push((*a, g.mul(gy, two_a)?));
            }
        }
        BiasAdd(x, b) => {
            if want(x) {
                out.push((*x, gy));
            }
            if want(b) {
                out.push((*b, g.push(ChannelSum(gy))?));
            }
        }
        ChannelSum(a) => {
            if want(a) {
                let shape = g.shape(*a).to_vec();
                out.push((*a, g.push(ChannelBroadcast(gy, shape))?));
            }
        }
        ChannelBroadcast(a, _) => {
            if want(a) {
                out.push((*a, g.push(ChannelSum(gy))?));
            }
        }
        Reshape(a, _) => {
            if want(a) {
                let shape = g.shape(*a).to_vec();
                out.push((*a, g.reshape(gy, &shape)?));
            }
        }
        SinCosEmbed {
            input,
            freqs,
            quarter_turns,
        } => {
            if want(input) {
                // d/dt sin(tω + φ) = ω·sin(tω + φ + π/2), likewise for cos
                let shifted = g.push(SinCosEmbed {
                    input: *input,
                    freqs: freqs.clone(),
                    quarter_turns: (quarter_turns + 1) % 4,
                })?;
                let mut omega = freqs.clone();
                omega.extend_from_slice(freqs);
                let omega = g.constant(Tensor::vector(omega));
                let d = g.mul(omega, shifted)?;
                let gd = g.mul(gy, d)?;
                let s = g.sum_all(gd)?;
                let shape = g.shape(*input).to_vec();
                out.push((*input, g.reshape(s, &shape)?));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    fn x_env(x: f64) -> HashMap<String, Tensor<f64>> {
        HashMap::from([("x".to_string(), Tensor::scalar(x))])
    }

    #[test]
    fn square_first_and_second_derivative() {
        let mut g = Graph::new();
        let x = g.input("x", &[]);
        let y = g.square(x).unwrap();
        let (g1, d1) = g.gradient(y, &[x]).unwrap();
        assert_eq!(g1.evaluate(&x_env(3.0), &d1).unwrap()[0].item(), 6.0);
        let (g2, d2) = g1.gradient(d1[0], &[x]).unwrap();
        assert_eq!(g2.evaluate(&x_env(3.0), &d2).unwrap()[0].item(), 2.0);
    }

    #[test]
    fn silu_slope_at_zero() {
        let mut g = Graph::new();
        let x = g.input("x", &[]);
        let y = g.silu(x).unwrap();
        let (g1, d) = g.gradient(y, &[x]).unwrap();
        assert_eq!(g1.evaluate(&x_env(0.0), &d).unwrap()[0].item(), 0.5);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.input("x", &[3]);
        let y = g.square(x).unwrap();
        assert_eq!(
            g.gradient(y, &[x]).unwrap_err(),
            AutodiffError::NonScalarOutput(vec![3])
        );
    }

    #[test]
    fn source_graph_is_not_mutated() {
        let mut g = Graph::<f64>::new();
        let x = g.input("x", &[]);
        let s = g.silu(x).unwrap();
        let y = g.square(s).unwrap();
        let before = g.clone();
        let (derived, _) = g.gradient(y, &[x]).unwrap();
        assert_eq!(g, before);
        assert!(derived.len() > g.len());
    }

    #[test]
    fn unrelated_wrt_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.input("x", &[]);
        let z = g.input("z", &[2]);
        let y = g.square(x).unwrap();
        let (g1, d) = g.gradient(y, &[z]).unwrap();
        let mut env = x_env(1.0);
        env.insert("z".into(), Tensor::vector(vec![1.0, 1.0]));
        assert_eq!(g1.evaluate(&env, &d).unwrap()[0].data(), &[0.0, 0.0]);
    }
}
