use std::collections::{HashMap, HashSet};

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::{BackwardCtx, Tensor};

/// One recorded operation, as seen from the tape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TapeEntry {
    pub id: u64,
    pub op: Option<&'static str>,
    pub inputs: Vec<u64>,
}

/// The part of the computation graph that feeds a root tensor, in creation
/// order. Creation order is a topological order because an op's output is
/// always created after its inputs.
pub struct Tape<T: Real> {
    nodes: Vec<Tensor<T>>,
}

impl<T: Real> Tape<T> {
    pub fn collect(root: &Tensor<T>) -> Self {
        let mut seen = HashSet::new();
        let mut nodes = Vec::new();
        let mut stack = vec![root.clone()];
        while let Some(t) = stack.pop() {
            if !t.requires_grad() || !seen.insert(t.id()) {
                continue;
            }
            if let Some(node) = t.node() {
                stack.extend(node.inputs.iter().cloned());
            }
            nodes.push(t);
        }
        nodes.sort_by_key(Tensor::id);
        Tape { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn entries(&self) -> Vec<TapeEntry> {
        self.nodes
            .iter()
            .map(|t| TapeEntry {
                id: t.id(),
                op: t.op_name(),
                inputs: t
                    .node()
                    .map(|n| n.inputs.iter().map(Tensor::id).collect())
                    .unwrap_or_default(),
            })
            .collect()
    }

    /// Propagates `seed` from the last entry back to the leaves, visiting
    /// entries in exact reverse creation order. Returns the visit order.
    fn run(&self, seed: Vec<T>) -> Vec<u64> {
        let mut grads: HashMap<u64, Vec<T>> = HashMap::new();
        let mut order = Vec::with_capacity(self.nodes.len());
        if let Some(root) = self.nodes.last() {
            grads.insert(root.id(), seed);
        }
        for t in self.nodes.iter().rev() {
            order.push(t.id());
            let Some(g) = grads.remove(&t.id()) else {
                continue;
            };
            match t.node() {
                None => t.accumulate_grad(&g),
                Some(node) => {
                    let ctx = BackwardCtx {
                        grad: &g,
                        output: t.data(),
                        inputs: &node.inputs,
                    };
                    let input_grads = (node.backward)(&ctx);
                    debug_assert_eq!(input_grads.len(), node.inputs.len());
                    for (input, ig) in node.inputs.iter().zip(input_grads) {
                        let Some(ig) = ig else { continue };
                        if !input.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(ig.len(), input.numel(), "grad size from {}", node.op);
                        match grads.get_mut(&input.id()) {
                            Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, &b)| *a = *a + b),
                            None => {
                                grads.insert(input.id(), ig);
                            }
                        }
                    }
                }
            }
        }
        order
    }
}

impl<T: Real> Tensor<T> {
    /// Reverse-mode differentiation of a scalar. Every reachable leaf that
    /// requires grad gets its gradient slot incremented.
    pub fn backward(&self) -> Result<()> {
        self.backward_traced().map(|_| ())
    }

    /// Same as [`Tensor::backward`], returning the ids in visit order.
    pub fn backward_traced(&self) -> Result<Vec<u64>> {
        if self.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(TensorError::Contract(
                "backward on a tensor that is not connected to any parameter".into(),
            ));
        }
        let tape = Tape::collect(self);
        Ok(tape.run(vec![T::one()]))
    }
}
