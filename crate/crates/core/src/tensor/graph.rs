use std::cell::RefCell;

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Backward rule of a recorded node.
///
/// Receives the upstream gradient, the input values, the output value and a
/// mask telling which inputs need a gradient. Returns one entry per input;
/// `None` for inputs that do not need one.
pub type BackwardFn<T> =
    Box<dyn Fn(&Tensor<T>, &[&Tensor<T>], &Tensor<T>, &[bool]) -> Vec<Option<Tensor<T>>>>;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    inputs: Vec<usize>,
    requires_grad: bool,
    backward: Option<BackwardFn<T>>,
}

/// Tape of one forward pass. Nodes are appended in evaluation order, so
/// the recorded order is a topological order and backward is a single
/// reverse sweep.
pub struct Graph<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    fn push(&self, node: Node<T>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var(nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.push(Node {
            value,
            inputs: Vec::new(),
            requires_grad: false,
            backward: None,
        })
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, value: Tensor<T>) -> Var {
        self.push(Node {
            value,
            inputs: Vec::new(),
            requires_grad: true,
            backward: None,
        })
    }

    pub fn value(&self, v: Var) -> Tensor<T> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn dims(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.dims().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records an operation result. The backward rule is dropped when no
    /// input requires a gradient.
    pub fn record(&self, inputs: &[Var], value: Tensor<T>, backward: BackwardFn<T>) -> Var {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| nodes[v.0].requires_grad)
        };
        self.push(Node {
            value,
            inputs: inputs.iter().map(|v| v.0).collect(),
            requires_grad,
            backward: requires_grad.then_some(backward),
        })
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root_node = &nodes[root.0];
        if root_node.value.len() != 1 || !root_node.value.dims().iter().all(|&d| d == 1) {
            return Err(Error::NonScalarRoot(root_node.value.dims().to_vec()));
        }

        let mut pending: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        let mut leaves: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        if root_node.requires_grad {
            pending[root.0] = Some(vec![T::one()]);
        }

        for id in (0..=root.0).rev() {
            let Some(grad) = pending[id].take() else {
                continue;
            };
            let node = &nodes[id];
            let grad = Tensor::from_parts(node.value.dims().to_vec(), grad);
            let Some(rule) = &node.backward else {
                leaves[id] = Some(grad);
                continue;
            };
            let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| &nodes[i].value).collect();
            let needs: Vec<bool> = node.inputs.iter().map(|&i| nodes[i].requires_grad).collect();
            let input_grads = rule(&grad, &inputs, &node.value, &needs);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for ((&input, g), need) in node.inputs.iter().zip(input_grads).zip(needs) {
                let (Some(g), true) = (g, need) else { continue };
                debug_assert_eq!(g.dims(), nodes[input].value.dims());
                match &mut pending[input] {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(g.data()) {
                            *a = *a + *b;
                        }
                    }
                    slot @ None => *slot = Some(g.into_vec()),
                }
            }
        }

        for (id, node) in nodes.iter().enumerate() {
            if node.requires_grad && node.backward.is_none() && leaves[id].is_none() {
                leaves[id] = Some(Tensor::from_parts(
                    node.value.dims().to_vec(),
                    vec![T::zero(); node.value.len()],
                ));
            }
        }
        Ok(Gradients { grads: leaves })
    }
}

/// Gradients of every gradient-carrying leaf after a backward sweep.
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf created with [`Graph::param`]; zero when the root
    /// does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
