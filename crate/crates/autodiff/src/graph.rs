// Wengert tape: every op appends a node, backward walks the nodes in
// reverse. Node order is construction order, which fixes the accumulation
// order and makes repeated runs bit-identical.

use std::collections::HashMap;

use crate::error::{AutodiffError, Result};
use crate::ops::{self, ConvSpec, NormMode, Primitive};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct Record {
    prim: Primitive,
    inputs: Vec<Var>,
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    requires_grad: bool,
    record: Option<Record>,
    saved: Vec<F>,
}

/// The tape for one forward pass.
#[derive(Debug, Default)]
pub struct Graph<F: Real> {
    nodes: Vec<Node<F>>,
    params: HashMap<ParamId, Var>,
}

/// Gradients of one backward pass, indexed by tape node.
#[derive(Debug)]
pub struct Gradients<F> {
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, var: Var) -> Option<&[F]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), params: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, record: None, saved: Vec::new() });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn input(&mut self, value: Tensor<F>) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push_leaf(value, false)
    }

    /// Leaf bound to a stored parameter. Repeated requests for the same
    /// parameter return the same node, so gradients of shared weights add up.
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push_leaf(store.get(id).value.clone(), true);
        self.params.insert(id, v);
        v
    }

    pub fn param_named(&mut self, store: &ParamStore<F>, name: &str) -> Result<Var> {
        Ok(self.param(store, store.id(name)?))
    }

    pub fn value(&self, var: Var) -> &Tensor<F> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Run a primitive on tape values and append its output.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        let fwd = {
            let values: Vec<&Tensor<F>> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            ops::forward(&prim, &values)?
        };
        if cfg!(debug_assertions) && !fwd.out.is_finite() {
            return Err(AutodiffError::NonFinite { op: prim.name() });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let record = requires_grad.then(|| Record { prim, inputs: inputs.to_vec() });
        let saved = if requires_grad { fwd.saved } else { Vec::new() };
        self.nodes.push(Node { value: fwd.out, requires_grad, record, saved });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![F::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(rec) = node.record.as_ref() else { continue };
            let Some(g) = grads[i].take() else { continue };
            let needs: Vec<bool> = rec.inputs.iter().map(|v| self.nodes[v.0].requires_grad).collect();
            let values: Vec<&Tensor<F>> = rec.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let local = ops::backward(&rec.prim, &values, &node.value, &node.saved, &g, &needs);
            for (var, gi) in rec.inputs.iter().zip(local) {
                let Some(gi) = gi else { continue };
                match grads[var.0].as_mut() {
                    Some(acc) => acc.iter_mut().zip(&gi).for_each(|(a, b)| *a += *b),
                    None => grads[var.0] = Some(gi),
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Add the gradients of every parameter leaf into the store.
    pub fn accumulate_param_grads(&self, grads: &Gradients<F>, store: &mut ParamStore<F>) {
        let mut bound: Vec<(&ParamId, &Var)> = self.params.iter().collect();
        bound.sort();
        for (id, var) in bound {
            if let Some(g) = grads.get(*var) {
                let p = store.get_mut(*id);
                p.grad.iter_mut().zip(g).for_each(|(a, b)| *a += *b);
            }
        }
    }

    // ── named helpers ────────────────────────────────────────────────

    fn with_bias(x: Var, w: Var, b: Option<Var>) -> Vec<Var> {
        match b {
            Some(b) => vec![x, w, b],
            None => vec![x, w],
        }
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        self.apply(Primitive::Conv1d(spec), &Self::with_bias(x, w, b))
    }

    pub fn depthwise_conv1d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        self.apply(Primitive::DepthwiseConv1d(spec), &Self::with_bias(x, w, b))
    }

    pub fn transposed_conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        self.apply(Primitive::TransposedConv1d { stride }, &Self::with_bias(x, w, b))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        self.apply(Primitive::Linear, &Self::with_bias(x, w, b))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, mode: NormMode) -> Result<Var> {
        self.apply(Primitive::LayerNorm(mode), &[x, gamma, beta])
    }

    pub fn prelu(&mut self, x: Var, alpha: Var) -> Result<Var> {
        self.apply(Primitive::Prelu, &[x, alpha])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Relu, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Sigmoid, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Tanh, &[x])
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Log, &[x])
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::Softmax { axis }, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Div, &[a, b])
    }

    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.apply(Primitive::Mean { axis }, &[x])
    }

    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.apply(Primitive::Sum { axis }, &[x])
    }

    pub fn l2_norm(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.apply(Primitive::L2Norm { axis }, &[x])
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.apply(Primitive::Scale(s), &[x])
    }

    pub fn offset(&mut self, x: Var, s: f64) -> Result<Var> {
        self.apply(Primitive::Offset(s), &[x])
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        self.apply(Primitive::Concat { axis }, xs)
    }

    pub fn upsample_repeat(&mut self, x: Var, factor: usize, len: usize) -> Result<Var> {
        self.apply(Primitive::UpsampleRepeat { factor, len }, &[x])
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.apply(Primitive::Slice { axis, start, len }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.apply(Primitive::Reshape(shape.to_vec()), &[x])
    }

    pub fn pad_trim(&mut self, x: Var, len: usize) -> Result<Var> {
        self.apply(Primitive::PadTrim { len }, &[x])
    }

    /// Sum of squared differences over all elements.
    pub fn squared_error(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        self.sum(sq, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut g = Graph::<f64>::new();
        let p = g.input(Tensor::from_vec(vec![3.0]));
        let sq = g.mul(p, p).unwrap();
        let loss = g.mean(sq, None).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap(), &[6.0]);
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::scalar(0.0));
        let y = g.sigmoid(x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.25]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(AutodiffError::NonScalarLoss(_))));
    }

    #[test]
    fn reusing_a_tensor_sums_both_gradients() {
        // loss = sum(a*x) + sum(b*x): grad x must equal grad of each single use added.
        let xv = Tensor::from_vec(vec![0.3, -1.2, 2.0]);
        let a = Tensor::from_vec(vec![1.5, 0.25, -2.0]);
        let b = Tensor::from_vec(vec![-0.5, 4.0, 0.125]);
        let single = |w: &Tensor<f64>| {
            let mut g = Graph::new();
            let x = g.input(xv.clone());
            let c = g.constant(w.clone());
            let m = g.mul(c, x).unwrap();
            let l = g.sum(m, None).unwrap();
            g.backward(l).unwrap().get(x).unwrap().to_vec()
        };
        let (ga, gb) = (single(&a), single(&b));
        let mut g = Graph::new();
        let x = g.input(xv.clone());
        let (ca, cb) = (g.constant(a.clone()), g.constant(b.clone()));
        let ma = g.mul(ca, x).unwrap();
        let mb = g.mul(cb, x).unwrap();
        let la = g.sum(ma, None).unwrap();
        let lb = g.sum(mb, None).unwrap();
        let l = g.add(la, lb).unwrap();
        let both = g.backward(l).unwrap().get(x).unwrap().to_vec();
        for i in 0..3 {
            assert_eq!(both[i], ga[i] + gb[i]);
        }
    }

    #[test]
    fn constants_do_not_record() {
        let mut g = Graph::<f32>::new();
        let c = g.constant(Tensor::from_vec(vec![1.0, 2.0]));
        let y = g.scale(c, 2.0).unwrap();
        assert!(!g.requires_grad(y));
    }

    #[test]
    fn shared_parameter_leaf_is_reused() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::from_vec(vec![2.0])).unwrap();
        let mut g = Graph::new();
        let a = g.param(&store, id);
        let b = g.param(&store, id);
        assert_eq!(a, b);
        let y = g.mul(a, b).unwrap();
        let l = g.sum(y, None).unwrap();
        let grads = g.backward(l).unwrap();
        g.accumulate_param_grads(&grads, &mut store);
        assert_eq!(store.get(id).grad, vec![4.0]);
    }
}
