//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Calling
//! [`Graph::backward`] walks the record in reverse and returns exact
//! gradients for the requested parameters. Graphs are cheap; the optimizer
//! builds a fresh one per step.
//!
//! Conventions: `abs`, `minimum`, `maximum` and `clamp` have derivative zero
//! at their kinks. Every operation rejects non-finite results.

use std::cell::RefCell;
use std::rc::Rc;

use crate::tensor::{broadcast_index, broadcast_shape};
use crate::{Error, Result, Tensor};

type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

struct Node {
    value: Rc<Tensor>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded in a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.value().shape())
            .finish()
    }
}

/// Gradients of a scalar loss, one entry per requested parameter.
#[derive(Clone, Debug)]
pub struct Gradients {
    entries: Vec<(usize, Tensor)>,
}

impl Gradients {
    pub fn get(&self, param: Var<'_>) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|(id, _)| *id == param.id)
            .map(|(_, g)| g)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, g)| g)
    }

    /// Euclidean norm over every gradient element.
    pub fn norm(&self) -> f64 {
        self.iter()
            .flat_map(|g| g.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf whose gradient can be requested.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            parents: Vec::new(),
            backward: None,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Records an operation. `backward` maps the upstream gradient of the
    /// output to one gradient per parent, each shaped like that parent. It
    /// is dropped when no parent needs gradients.
    pub(crate) fn record(
        &self,
        op: &'static str,
        value: Tensor,
        parents: &[Var<'_>],
        backward: impl Fn(&Tensor) -> Vec<Tensor> + 'static,
    ) -> Result<Var<'_>> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op });
        }
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = parents.iter().any(|p| nodes[p.id].requires_grad);
        nodes.push(Node {
            value: Rc::new(value),
            parents: parents.iter().map(|p| p.id).collect(),
            backward: if requires_grad {
                Some(Box::new(backward))
            } else {
                None
            },
            requires_grad,
        });
        Ok(Var {
            graph: self,
            id: nodes.len() - 1,
        })
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        self.nodes.borrow()[id].value.clone()
    }

    /// Gradients of the scalar `loss` with respect to `params`. Parameters
    /// that do not influence the loss receive zeros.
    pub fn backward(&self, loss: Var<'_>, params: &[Var<'_>]) -> Result<Gradients> {
        if !std::ptr::eq(loss.graph, self) || params.iter().any(|p| !std::ptr::eq(p.graph, self)) {
            return Err(Error::Usage("variable belongs to a different graph".into()));
        }
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Tensor::ones(nodes[loss.id].value.shape()));
        for id in (0..=loss.id).rev() {
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if let Some(backward) = &node.backward {
                let parent_grads = backward(&upstream);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (&pid, g) in node.parents.iter().zip(parent_grads) {
                    if !nodes[pid].requires_grad {
                        continue;
                    }
                    match &mut grads[pid] {
                        Some(acc) => add_assign(acc, &g),
                        slot => *slot = Some(g),
                    }
                }
            }
            // Keep leaf gradients for collection below.
            if node.parents.is_empty() {
                grads[id] = Some(upstream);
            }
        }
        let mut entries: Vec<(usize, Tensor)> = Vec::with_capacity(params.len());
        for p in params {
            if entries.iter().any(|(id, _)| *id == p.id) {
                continue;
            }
            let g = match grads.get_mut(p.id).and_then(Option::take) {
                Some(g) if nodes[p.id].parents.is_empty() => g,
                _ => Tensor::zeros(nodes[p.id].value.shape()),
            };
            entries.push((p.id, g));
        }
        Ok(Gradients { entries })
    }
}

fn add_assign(acc: &mut Tensor, g: &Tensor) {
    debug_assert_eq!(acc.shape(), g.shape());
    let data: Vec<f64> = acc.data().iter().zip(g.data()).map(|(a, b)| a + b).collect();
    *acc = Tensor::new(acc.shape(), data).expect("same shape");
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[allow(clippy::should_implement_trait)]
impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// A constant copy cut off from the recorded history.
    pub fn detach(&self) -> Var<'g> {
        self.graph.constant((*self.value()).clone())
    }

    fn unary(
        self,
        op: &'static str,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Var<'g>> {
        let x = self.value();
        let out = x.map(&f);
        let out_rc = Rc::new(out.clone());
        self.graph.record(op, out, &[self], move |g| {
            let data = g
                .data()
                .iter()
                .zip(x.data())
                .zip(out_rc.data())
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Tensor::new(x.shape(), data).expect("shape")]
        })
    }

    fn binary(
        self,
        other: Var<'g>,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
        dfa: impl Fn(f64, f64) -> f64 + 'static,
        dfb: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Var<'g>> {
        let a = self.value();
        let b = other.value();
        let out_shape = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })?;
        let same = a.shape() == b.shape();
        let (ia, ib) = if same {
            (Vec::new(), Vec::new())
        } else {
            (
                broadcast_index(a.shape(), &out_shape),
                broadcast_index(b.shape(), &out_shape),
            )
        };
        let n: usize = out_shape.iter().product();
        let (ad, bd) = (a.data(), b.data());
        let data: Vec<f64> = if same {
            ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect()
        } else {
            (0..n).map(|k| f(ad[ia[k]], bd[ib[k]])).collect()
        };
        let out = Tensor::new(&out_shape, data)?;
        self.graph.record(op, out, &[self, other], move |g| {
            let (ad, bd, gd) = (a.data(), b.data(), g.data());
            let mut ga = vec![0.0; a.len()];
            let mut gb = vec![0.0; b.len()];
            for k in 0..gd.len() {
                let (ka, kb) = if same { (k, k) } else { (ia[k], ib[k]) };
                let (x, y) = (ad[ka], bd[kb]);
                ga[ka] += gd[k] * dfa(x, y);
                gb[kb] += gd[k] * dfb(x, y);
            }
            vec![
                Tensor::new(a.shape(), ga).expect("shape"),
                Tensor::new(b.shape(), gb).expect("shape"),
            ]
        })
    }

    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "add", |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "sub", |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "mul", |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn div(self, other: Var<'g>) -> Result<Var<'g>> {
        if other.value().data().contains(&0.0) {
            return Err(Error::domain("div", "division by zero"));
        }
        self.binary(other, "div", |a, b| a / b, |_, b| 1.0 / b, |a, b| -a / (b * b))
    }

    /// Elementwise minimum; ties send no gradient to either side.
    pub fn minimum(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(
            other,
            "minimum",
            f64::min,
            |a, b| if a < b { 1.0 } else { 0.0 },
            |a, b| if b < a { 1.0 } else { 0.0 },
        )
    }

    /// Elementwise maximum; ties send no gradient to either side.
    pub fn maximum(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(
            other,
            "maximum",
            f64::max,
            |a, b| if a > b { 1.0 } else { 0.0 },
            |a, b| if b > a { 1.0 } else { 0.0 },
        )
    }

    pub fn neg(self) -> Result<Var<'g>> {
        self.unary("neg", |x| -x, |_, _| -1.0)
    }

    pub fn add_scalar(self, s: f64) -> Result<Var<'g>> {
        self.unary("add_scalar", move |x| x + s, |_, _| 1.0)
    }

    pub fn mul_scalar(self, s: f64) -> Result<Var<'g>> {
        self.unary("mul_scalar", move |x| x * s, move |_, _| s)
    }

    pub fn square(self) -> Result<Var<'g>> {
        self.unary("square", |x| x * x, |x, _| 2.0 * x)
    }

    pub fn abs(self) -> Result<Var<'g>> {
        self.unary("abs", f64::abs, |x, _| sign(x))
    }

    pub fn exp(self) -> Result<Var<'g>> {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn log(self) -> Result<Var<'g>> {
        if let Some(&bad) = self.value().data().iter().find(|&&v| v <= 0.0) {
            return Err(Error::domain("log", format!("non-positive argument {bad}")));
        }
        self.unary("log", f64::ln, |x, _| 1.0 / x)
    }

    pub fn sqrt(self) -> Result<Var<'g>> {
        if let Some(&bad) = self.value().data().iter().find(|&&v| v <= 0.0) {
            return Err(Error::domain("sqrt", format!("non-positive argument {bad}")));
        }
        self.unary("sqrt", f64::sqrt, |_, y| 0.5 / y)
    }

    /// Clamp into `[lo, hi]`; derivative 1 strictly inside, 0 elsewhere.
    pub fn clamp(self, lo: f64, hi: f64) -> Result<Var<'g>> {
        if lo > hi {
            return Err(Error::domain("clamp", format!("empty interval [{lo}, {hi}]")));
        }
        self.unary(
            "clamp",
            move |x| x.clamp(lo, hi),
            move |x, _| if x > lo && x < hi { 1.0 } else { 0.0 },
        )
    }

    pub fn sum(self) -> Result<Var<'g>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        self.graph
            .record("sum", Tensor::scalar(x.sum()), &[self], move |g| {
                vec![Tensor::full(&shape, g.item())]
            })
    }

    pub fn mean(self) -> Result<Var<'g>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let n = x.len() as f64;
        self.graph
            .record("mean", Tensor::scalar(x.mean()), &[self], move |g| {
                vec![Tensor::full(&shape, g.item() / n)]
            })
    }

    /// Sum over one axis, removing it.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'g>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("no axis {axis}"),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        let xd = x.data();
        for o in 0..outer {
            for k in 0..len {
                let base = (o * len + k) * inner;
                for i in 0..inner {
                    out[o * inner + i] += xd[base + i];
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let out = Tensor::new(&out_shape, out)?;
        self.graph.record("sum_axis", out, &[self], move |g| {
            let gd = g.data();
            let mut gx = vec![0.0; outer * len * inner];
            for o in 0..outer {
                for k in 0..len {
                    let base = (o * len + k) * inner;
                    gx[base..base + inner].copy_from_slice(&gd[o * inner..(o + 1) * inner]);
                }
            }
            vec![Tensor::new(&shape, gx).expect("shape")]
        })
    }

    pub fn mean_axis(self, axis: usize) -> Result<Var<'g>> {
        let len = *self.shape().get(axis).ok_or_else(|| Error::InvalidShape {
            shape: self.shape(),
            reason: format!("no axis {axis}"),
        })?;
        self.sum_axis(axis)?.mul_scalar(1.0 / len as f64)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g>> {
        let x = self.value();
        let old = x.shape().to_vec();
        let out = x.reshape(shape)?;
        self.graph.record("reshape", out, &[self], move |g| {
            vec![g.reshape(&old).expect("same size")]
        })
    }

    /// Elements `start..end` of the flattened tensor, as a vector.
    pub fn slice_range(self, start: usize, end: usize) -> Result<Var<'g>> {
        let x = self.value();
        if start > end || end > x.len() {
            return Err(Error::InvalidShape {
                shape: x.shape().to_vec(),
                reason: format!("slice {start}..{end} out of range"),
            });
        }
        let out = Tensor::from_vec(x.data()[start..end].to_vec());
        let shape = x.shape().to_vec();
        let n = x.len();
        self.graph.record("slice", out, &[self], move |g| {
            let mut full = vec![0.0; n];
            full[start..end].copy_from_slice(g.data());
            vec![Tensor::new(&shape, full).expect("shape")]
        })
    }

    /// Forward difference along the width axis: `out[y, x] = t[y, x+1] - t[y, x]`.
    pub fn grad_x(self) -> Result<Var<'g>> {
        self.forward_difference(1, "grad_x")
    }

    /// Forward difference along the height axis: `out[y, x] = t[y+1, x] - t[y, x]`.
    pub fn grad_y(self) -> Result<Var<'g>> {
        self.forward_difference(0, "grad_y")
    }

    fn forward_difference(self, axis: usize, op: &'static str) -> Result<Var<'g>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if shape.len() < 2 || shape[axis] < 2 {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("{op} needs at least 2 samples along axis {axis}"),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let xd = x.data();
        let mut out = Vec::with_capacity(outer * (len - 1) * inner);
        for o in 0..outer {
            for k in 0..len - 1 {
                let a = (o * len + k) * inner;
                let b = a + inner;
                for i in 0..inner {
                    out.push(xd[b + i] - xd[a + i]);
                }
            }
        }
        let mut out_shape = shape.clone();
        out_shape[axis] -= 1;
        let out = Tensor::new(&out_shape, out)?;
        self.graph.record(op, out, &[self], move |g| {
            let gd = g.data();
            let mut gx = vec![0.0; outer * len * inner];
            for o in 0..outer {
                for k in 0..len - 1 {
                    let a = (o * len + k) * inner;
                    let src = (o * (len - 1) + k) * inner;
                    for i in 0..inner {
                        gx[a + inner + i] += gd[src + i];
                        gx[a + i] -= gd[src + i];
                    }
                }
            }
            vec![Tensor::new(&shape, gx).expect("shape")]
        })
    }

    /// `k x k` mean over the two leading (spatial) axes with reflection
    /// padding; output has the input's shape. `k` must be odd.
    pub fn box_filter(self, k: usize) -> Result<Var<'g>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if k.is_multiple_of(2) || shape.len() < 2 {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("box filter of size {k} needs an odd size and 2 spatial axes"),
            });
        }
        let r = k / 2;
        let (h, w) = (shape[0], shape[1]);
        if h <= r || w <= r {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("reflection padding of {r} needs more than {r} pixels per axis"),
            });
        }
        let inner: usize = shape[2..].iter().product();
        let taps = Rc::new(box_taps(h, w, r));
        let norm = 1.0 / (k * k) as f64;
        let xd = x.data();
        let mut out = vec![0.0; xd.len()];
        for (p, list) in taps.iter().enumerate() {
            for &q in list {
                for i in 0..inner {
                    out[p * inner + i] += xd[q * inner + i];
                }
            }
            for i in 0..inner {
                out[p * inner + i] *= norm;
            }
        }
        let out = Tensor::new(&shape, out)?;
        self.graph.record("box_filter", out, &[self], move |g| {
            let gd = g.data();
            let mut gx = vec![0.0; gd.len()];
            for (p, list) in taps.iter().enumerate() {
                for &q in list {
                    for i in 0..inner {
                        gx[q * inner + i] += gd[p * inner + i] * norm;
                    }
                }
            }
            vec![Tensor::new(&shape, gx).expect("shape")]
        })
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j as usize
}

/// Flat source pixel of every tap of every output pixel.
fn box_taps(h: usize, w: usize, r: usize) -> Vec<Vec<usize>> {
    let r = r as isize;
    let mut taps = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut list = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
            for dy in -r..=r {
                for dx in -r..=r {
                    list.push(reflect(y + dy, h) * w + reflect(x + dx, w));
                }
            }
            taps.push(list);
        }
    }
    taps
}

/// Stacks equally shaped values along a new leading axis.
pub fn stack<'g>(vars: &[Var<'g>]) -> Result<Var<'g>> {
    let first = vars
        .first()
        .ok_or_else(|| Error::Usage("stack of zero tensors".into()))?;
    let graph = first.graph;
    let shape = first.shape();
    let mut data = Vec::with_capacity(vars.len() * first.value().len());
    for v in vars {
        let val = v.value();
        if val.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                op: "stack",
                lhs: shape,
                rhs: val.shape().to_vec(),
            });
        }
        data.extend_from_slice(val.data());
    }
    let mut out_shape = vec![vars.len()];
    out_shape.extend_from_slice(&shape);
    let out = Tensor::new(&out_shape, data)?;
    let chunk: usize = shape.iter().product();
    graph.record("stack", out, vars, move |g| {
        g.data()
            .chunks(chunk)
            .map(|c| Tensor::new(&shape, c.to_vec()).expect("shape"))
            .collect()
    })
}
