use crate::error::{contract, Result};

use super::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Inputs handed to a backward rule.
pub struct BackwardCtx<'a> {
    /// Forward values of the parents, in the order they were recorded.
    pub inputs: Vec<&'a Tensor>,
    /// Forward value of the node itself.
    pub output: &'a Tensor,
    /// Accumulated upstream gradient, same shape as `output`.
    pub grad: &'a Tensor,
    /// Which parents actually need a gradient.
    pub needs: Vec<bool>,
}

/// Backward rule: one optional gradient per parent.
pub type BackwardFn = Box<dyn Fn(&BackwardCtx<'_>) -> Vec<Option<Tensor>>>;

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Computation record for one forward pass.
///
/// Nodes are appended in creation order, which is already a topological
/// order, so the backward sweep simply walks the node list in reverse.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None, false)
    }

    /// Trainable leaf; receives a gradient on [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Vec::new(), None, true)
    }

    /// Records a node computed from `parents` with a caller-supplied backward rule.
    pub fn custom(&mut self, parents: &[Var], value: Tensor, backward: BackwardFn) -> Var {
        let requires = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let rule = requires.then_some(backward);
        self.push(value, parents.to_vec(), rule, requires)
    }

    fn push(
        &mut self,
        value: Tensor,
        parents: Vec<Var>,
        backward: Option<BackwardFn>,
        requires_grad: bool,
    ) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            parents,
            backward,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Gradient of `v`, zeros when nothing flowed into it.
    pub fn grad_or_zero(&self, v: Var) -> Tensor {
        self.grad(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()))
    }

    /// Reverse sweep from a scalar node, seeding `d loss / d loss = 1`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        contract!(
            self.value(loss).len() == 1,
            "backward needs a scalar, got shape {:?}",
            self.value(loss).shape()
        );
        for node in &mut self.nodes {
            node.grad = None;
        }
        let seed = Tensor::full(self.value(loss).shape(), 1.0);
        self.nodes[loss.0].grad = Some(seed);

        for idx in (0..=loss.0).rev() {
            let parent_grads = {
                let node = &self.nodes[idx];
                let (Some(rule), Some(grad)) = (node.backward.as_ref(), node.grad.as_ref()) else {
                    continue;
                };
                let ctx = BackwardCtx {
                    inputs: node.parents.iter().map(|p| &self.nodes[p.0].value).collect(),
                    output: &node.value,
                    grad,
                    needs: node
                        .parents
                        .iter()
                        .map(|p| self.nodes[p.0].requires_grad)
                        .collect(),
                };
                rule(&ctx)
            };
            let parents = self.nodes[idx].parents.clone();
            contract!(
                parent_grads.len() == parents.len(),
                "backward rule of node {idx} returned {} gradients for {} parents",
                parent_grads.len(),
                parents.len()
            );
            for (p, g) in parents.into_iter().zip(parent_grads) {
                let Some(g) = g else { continue };
                let target = &mut self.nodes[p.0];
                if !target.requires_grad {
                    continue;
                }
                contract!(
                    g.shape() == target.value.shape(),
                    "gradient shape {:?} does not match value shape {:?}",
                    g.shape(),
                    target.value.shape()
                );
                match target.grad.as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => target.grad = Some(g),
                }
            }
        }
        Ok(())
    }
}
