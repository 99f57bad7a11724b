use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use super::{Element, Tensor};
use crate::error::{Error, Result};

type BackwardFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    value: Arc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

/// Running-statistics update emitted by a training-mode batch norm; applied to
/// the owning parameter store after the step.
#[derive(Clone, Debug)]
pub struct BufferUpdate<T> {
    pub store: u64,
    pub index: usize,
    pub value: Tensor<T>,
}

/// Tape of recorded operations. Node ids are assigned in creation order, which
/// is a topological order of the computation.
pub struct Graph<T: Element> {
    nodes: RefCell<Vec<Node<T>>>,
    bound: RefCell<HashMap<(u64, usize), usize>>,
    updates: RefCell<Vec<BufferUpdate<T>>>,
    poisoned: RefCell<Option<String>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T: Element> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T: Element> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients produced by [`Graph::backward`], indexed by node.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    pub(crate) fn get_id(&self, id: usize) -> Option<&Tensor<T>> {
        self.grads.get(id).and_then(|g| g.as_ref())
    }
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            bound: RefCell::new(HashMap::new()),
            updates: RefCell::new(Vec::new()),
            poisoned: RefCell::new(None),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push_node(&self, node: Node<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push_node(Node {
            value: Arc::new(value),
            parents: Vec::new(),
            backward: None,
            requires_grad: false,
        })
    }

    /// Leaf that accumulates a gradient.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf_arc(Arc::new(value), true)
    }

    pub fn leaf_arc(&self, value: Arc<Tensor<T>>, requires_grad: bool) -> Var<'_, T> {
        self.push_node(Node {
            value,
            parents: Vec::new(),
            backward: None,
            requires_grad,
        })
    }

    /// Binds a parameter identified by `key`, reusing the node if it was
    /// already bound on this graph.
    pub(crate) fn bind(&self, key: (u64, usize), value: &Arc<Tensor<T>>, requires_grad: bool) -> Var<'_, T> {
        if let Some(&id) = self.bound.borrow().get(&key) {
            return Var { graph: self, id };
        }
        let v = self.leaf_arc(Arc::clone(value), requires_grad);
        self.bound.borrow_mut().insert(key, v.id);
        v
    }

    pub(crate) fn bound_id(&self, key: (u64, usize)) -> Option<usize> {
        self.bound.borrow().get(&key).copied()
    }

    pub(crate) fn push_update(&self, update: BufferUpdate<T>) {
        self.updates.borrow_mut().push(update);
    }

    pub fn take_updates(&self) -> Vec<BufferUpdate<T>> {
        std::mem::take(&mut self.updates.borrow_mut())
    }

    /// Records an operation. `backward` maps the output gradient to one
    /// optional gradient per parent, in order.
    pub(crate) fn op<'g>(
        &'g self,
        name: &'static str,
        value: Tensor<T>,
        parents: &[Var<'g, T>],
        backward: impl Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>> + 'static,
    ) -> Var<'g, T> {
        if !value.all_finite() && self.poisoned.borrow().is_none() {
            *self.poisoned.borrow_mut() = Some(name.to_string());
        }
        let requires_grad = parents.iter().any(|p| self.requires_grad(p.id));
        self.push_node(Node {
            value: Arc::new(value),
            parents: parents.iter().map(|p| p.id).collect(),
            backward: if requires_grad {
                Some(Box::new(backward))
            } else {
                None
            },
            requires_grad,
        })
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    pub fn value(&self, v: Var<'_, T>) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[v.id].value)
    }

    /// Name of the first op that produced a non-finite value, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.poisoned.borrow().as_ref() {
            Some(op) => Err(Error::NonFinite { context: op.clone() }),
            None => Ok(()),
        }
    }

    /// Reverse-mode sweep from a scalar `loss`. Gradients reaching a node from
    /// several consumers are summed.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        self.check_finite()?;
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(loss_value.shape(), T::one()));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(g_out) = grads[id].take() else {
                continue;
            };
            let parent_grads = backward(&g_out);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&pid, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !nodes[pid].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[pid].value.shape());
                match &mut grads[pid] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

impl<'g, T: Element> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Arc<Tensor<T>> {
        self.graph.value(*self)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires_grad(self.id)
    }

    /// Same value, cut off from the tape.
    pub fn detach(&self) -> Var<'g, T> {
        self.graph.leaf_arc(self.value(), false)
    }

    /// The value of a one-element node.
    pub fn item(&self) -> T {
        self.value().item()
    }
}
