use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::real::{DType, Real};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording any operation for differentiation.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

pub(crate) struct BackwardCtx<'a, T: Real> {
    pub grad: &'a [T],
    pub output: &'a [T],
    pub inputs: &'a [Tensor<T>],
}

pub(crate) type BackwardFn<T> = dyn Fn(&BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>>;

pub(crate) struct Node<T: Real> {
    pub op: &'static str,
    pub inputs: Vec<Tensor<T>>,
    pub backward: Box<BackwardFn<T>>,
}

struct Inner<T: Real> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<T>>>,
    node: Option<Node<T>>,
}

/// Dense row-major n-dimensional array.
///
/// Cloning is cheap and shares the underlying buffer. Values never change
/// after construction; only the gradient slot of a leaf is written, by
/// [`Tensor::backward`].
pub struct Tensor<T: Real>(Rc<Inner<T>>);

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.0.node.as_ref().map(|n| n.op))
            .finish()
    }
}

fn next_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

impl<T: Real> Tensor<T> {
    fn build(shape: Vec<usize>, data: Vec<T>, requires_grad: bool, node: Option<Node<T>>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor(Rc::new(Inner {
            id: next_id(),
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            node,
        }))
    }

    pub fn new(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        if shape.contains(&0) {
            return Err(TensorError::invalid("new", format!("zero-sized dimension in {shape:?}")));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::invalid(
                "new",
                format!("shape {shape:?} does not match {} elements", data.len()),
            ));
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    pub fn scalar(value: T) -> Self {
        Self::build(Vec::new(), vec![value], false, None)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self::build(shape.to_vec(), vec![value; n], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    /// Trainable leaf.
    pub fn parameter(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        Ok(Self::new(data, shape)?.into_parameter())
    }

    /// Copies the values into a fresh leaf that requires grad.
    pub fn into_parameter(self) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.clone(), true, None)
    }

    /// Copies the values into a fresh constant leaf.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.clone(), false, None)
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        op: &'static str,
        inputs: Vec<Tensor<T>>,
        backward: impl Fn(&BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> + 'static,
    ) -> Self {
        let track = is_grad_enabled() && inputs.iter().any(Tensor::requires_grad);
        if track {
            let node = Node {
                op,
                inputs,
                backward: Box::new(backward),
            };
            Self::build(shape, data, true, Some(node))
        } else {
            Self::build(shape, data, false, None)
        }
    }

    pub(crate) fn node(&self) -> Option<&Node<T>> {
        self.0.node.as_ref()
    }

    /// Monotone creation stamp; outputs always have larger ids than inputs.
    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn data(&self) -> &[T] {
        &self.0.data
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.0.data.clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.data.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.0.node.as_ref().map(|n| n.op)
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        self.0.grad.borrow_mut().take();
    }

    pub(crate) fn accumulate_grad(&self, g: &[T]) {
        debug_assert!(self.0.requires_grad);
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b),
            None => *slot = Some(g.to_vec()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.data.iter().all(|v| v.is_finite())
    }

    /// True when both tensors share the same buffer.
    pub fn same_storage(&self, other: &Tensor<T>) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}
