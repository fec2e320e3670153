use std::collections::HashMap;

use rand::Rng;

use super::conv::{self, Dims, Geometry};
use super::params::{GradientMap, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Dense { x: Var, w: Var, b: Var },
    Conv3 { x: Var, w: Var, b: Var, geom: Geometry },
    TConv3 { x: Var, w: Var, b: Var, geom: Geometry },
    Reshape(Var),
    Elu(Var),
    Sigmoid(Var),
    Dropout { x: Var, mask: Vec<f64> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, Vec<f64>),
    Exp(Var),
    Log(Var),
    Square(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    LogitCrossEntropy { x: Var, targets: Vec<f64>, bound: f64 },
    Sum(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Norm(Var),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Records a computation over a borrowed [`ParamStore`] for one backward pass.
///
/// Each parameter is entered at most once per tape; repeated
/// [`Tape::param`] calls return the same node.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.value(id),
            _ => &self.nodes[v.0].value,
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Op::Input, value)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(Op::Param(id), Tensor::scalar(0.0));
        self.param_vars.insert(id, v);
        v
    }

    pub fn param_named(&mut self, name: &str) -> Result<Var> {
        let id = self.params.require(name)?;
        Ok(self.param(id))
    }

    fn same_len(&self, ctx: &str, a: Var, b: Var) -> Result<()> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        if la != lb {
            return Err(Error::shape(ctx, format!("operands hold {la} and {lb} values")));
        }
        Ok(())
    }

    /// `y = W x + b` with `x` flattened; `W` is `[out, in]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var, ctx: &str) -> Result<Var> {
        let (xs, ws, bs) = (self.value(x), self.value(w), self.value(b));
        let [out, inp] = *ws.shape() else {
            return Err(Error::shape(ctx, format!("dense weight must be rank 2, got {:?}", ws.shape())));
        };
        if xs.len() != inp {
            return Err(Error::shape(ctx, format!("expects {inp} inputs, got shape {:?}", xs.shape())));
        }
        if bs.len() != out {
            return Err(Error::shape(ctx, format!("bias has {} values for {out} outputs", bs.len())));
        }
        let xd = xs.data();
        let wd = ws.data();
        let y: Vec<f64> = (0..out)
            .map(|o| {
                let row = &wd[o * inp..(o + 1) * inp];
                bs.data()[o] + row.iter().zip(xd).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        Ok(self.push(Op::Dense { x, w, b }, Tensor::from_parts(vec![out], y)))
    }

    fn conv_like(&mut self, x: Var, w: Var, b: Var, geom: Geometry, transposed: bool, ctx: &str) -> Result<Var> {
        let (xs, ws, bs) = (self.value(x), self.value(w), self.value(b));
        let xd = Dims::from_shape(xs.shape())
            .ok_or_else(|| Error::shape(ctx, format!("expects [C, D, H, W] input, got {:?}", xs.shape())))?;
        let &[w0, w1, k0, k1, k2] = ws.shape() else {
            return Err(Error::shape(ctx, format!("weight must be rank 5, got {:?}", ws.shape())));
        };
        if (k0, k1, k2) != (geom.kernel, geom.kernel, geom.kernel) {
            return Err(Error::shape(ctx, "kernel extent disagrees with weight shape"));
        }
        let (c_in, c_out) = if transposed { (w0, w1) } else { (w1, w0) };
        if xd.c != c_in {
            return Err(Error::shape(ctx, format!("expects {c_in} input channels, got {}", xd.c)));
        }
        if bs.len() != c_out {
            return Err(Error::shape(ctx, format!("bias has {} values for {c_out} channels", bs.len())));
        }
        let out_len = |n: usize| if transposed { geom.tconv_out(n) } else { geom.conv_out(n) };
        let (Some(d), Some(h), Some(wd)) = (out_len(xd.d), out_len(xd.h), out_len(xd.w)) else {
            return Err(Error::shape(ctx, format!("input {:?} too small for kernel {}", xs.shape(), geom.kernel)));
        };
        let yd = Dims { c: c_out, d, h, w: wd };
        let y = if transposed {
            conv::tconv3_forward(xs.data(), xd, ws.data(), bs.data(), yd, geom)
        } else {
            conv::conv3_forward(xs.data(), xd, ws.data(), bs.data(), yd, geom)
        };
        let value = Tensor::from_parts(vec![c_out, d, h, wd], y);
        let op = if transposed {
            Op::TConv3 { x, w, b, geom }
        } else {
            Op::Conv3 { x, w, b, geom }
        };
        Ok(self.push(op, value))
    }

    pub fn conv3(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize, ctx: &str) -> Result<Var> {
        let kernel = self.value(w).shape().get(2).copied().unwrap_or(0);
        let geom = Geometry { kernel, stride, padding, output_padding: 0 };
        self.conv_like(x, w, b, geom, false, ctx)
    }

    pub fn tconv3(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        padding: usize,
        output_padding: usize,
        ctx: &str,
    ) -> Result<Var> {
        let kernel = self.value(w).shape().get(2).copied().unwrap_or(0);
        let geom = Geometry { kernel, stride, padding, output_padding };
        self.conv_like(x, w, b, geom, true, ctx)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize], ctx: &str) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).len() || shape.contains(&0) {
            return Err(Error::shape(ctx, format!("cannot view {:?} as {shape:?}", self.value(x).shape())));
        }
        let value = Tensor::from_parts(shape.to_vec(), self.value(x).data().to_vec());
        Ok(self.push(Op::Reshape(x), value))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v >= 0.0 { v } else { v.exp_m1() });
        self.push(Op::Elu(x), value)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(logistic);
        self.push(Op::Sigmoid(x), value)
    }

    /// Inverted dropout: kept units are scaled by `1/(1-rate)`; identity in eval mode.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut R) -> Var {
        if mode == Mode::Eval || rate == 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let xs = self.value(x);
        let data = xs.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::from_parts(xs.shape().to_vec(), data);
        self.push(Op::Dropout { x, mask }, value)
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_parts(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("add", a, b)?;
        let v = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("sub", a, b)?;
        let v = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("mul", a, b)?;
        let v = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let v = self.value(x).map(|a| a * factor);
        self.push(Op::Scale(x, factor), v)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).map(|a| a + c);
        self.push(Op::AddScalar(x), v)
    }

    /// Elementwise product with a constant (non-differentiated) vector.
    pub fn mul_const(&mut self, x: Var, c: Vec<f64>) -> Result<Var> {
        let xs = self.value(x);
        if xs.len() != c.len() {
            return Err(Error::shape("mul_const", format!("{} values vs {} constants", xs.len(), c.len())));
        }
        let data = xs.data().iter().zip(&c).map(|(a, b)| a * b).collect();
        let value = Tensor::from_parts(xs.shape().to_vec(), data);
        Ok(self.push(Op::MulConst(x, c), value))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::exp);
        self.push(Op::Exp(x), v)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::ln);
        self.push(Op::Log(x), v)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a * a);
        self.push(Op::Square(x), v)
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(x).map(|a| a.clamp(lo, hi));
        self.push(Op::Clamp { x, lo, hi }, v)
    }

    /// `Σ t·softplus(-x) + (1 - t)·softplus(x)`: cross-entropy of sigmoid
    /// logits against arbitrary real targets, evaluated at logits clamped to
    /// `±bound`. The gradient is `sigmoid(x) - t`, except that beyond the
    /// bound only the component pointing back inside is kept; the loss stays
    /// bounded while a logit saturated on the wrong side still recovers.
    pub fn logit_cross_entropy(&mut self, x: Var, targets: Vec<f64>, bound: f64) -> Result<Var> {
        let xs = self.value(x);
        if xs.len() != targets.len() {
            return Err(Error::shape(
                "logit_cross_entropy",
                format!("{} logits vs {} targets", xs.len(), targets.len()),
            ));
        }
        let v = xs
            .data()
            .iter()
            .zip(&targets)
            .map(|(&a, &t)| {
                let a = a.clamp(-bound, bound);
                t * softplus(-a) + (1.0 - t) * softplus(a)
            })
            .sum();
        Ok(self.push(Op::LogitCrossEntropy { x, targets, bound }, Tensor::scalar(v)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    /// Sum of several scalars (or equally shaped tensors) as a chain of adds.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (&first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("add_all of no terms".into()))?;
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let data: Vec<f64> = parts.iter().flat_map(|&p| self.value(p).data().to_vec()).collect();
        self.push(Op::Concat(parts.to_vec()), Tensor::vector(data))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xs = self.value(x);
        if len == 0 || start + len > xs.len() {
            return Err(Error::shape("slice", format!("[{start}, {}) of {} values", start + len, xs.len())));
        }
        let value = Tensor::vector(xs.data()[start..start + len].to_vec());
        Ok(self.push(Op::Slice { x, start }, value))
    }

    /// Euclidean norm; its gradient at the origin is taken as zero.
    pub fn norm(&mut self, x: Var) -> Var {
        let n = self.value(x).data().iter().map(|a| a * a).sum::<f64>().sqrt();
        self.push(Op::Norm(x), Tensor::scalar(n))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<GradientMap> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = GradientMap::zeros_like(self.params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut acc = |v: Var, delta: Vec<f64>| accumulate(&mut grads[v.0], delta);
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    for (dst, src) in out.get_mut(*id).data_mut().iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
                Op::Dense { x, w, b } => {
                    let xv = self.value(*x).data();
                    let wv = self.value(*w).data();
                    let inp = xv.len();
                    let mut gx = vec![0.0; inp];
                    let mut gw = vec![0.0; wv.len()];
                    for (o, &go) in g.iter().enumerate() {
                        if go == 0.0 {
                            continue;
                        }
                        let row = &wv[o * inp..(o + 1) * inp];
                        let grow = &mut gw[o * inp..(o + 1) * inp];
                        for i in 0..inp {
                            gx[i] += row[i] * go;
                            grow[i] = xv[i] * go;
                        }
                    }
                    acc(*x, gx);
                    acc(*w, gw);
                    acc(*b, g);
                }
                Op::Conv3 { x, w, b, geom } | Op::TConv3 { x, w, b, geom } => {
                    let xs = self.value(*x);
                    let xd = Dims::from_shape(xs.shape()).expect("checked at forward");
                    let yd = Dims::from_shape(node.value.shape()).expect("checked at forward");
                    let (gx, gw, gb) = if matches!(node.op, Op::Conv3 { .. }) {
                        conv::conv3_backward(xs.data(), xd, self.value(*w).data(), &g, yd, *geom)
                    } else {
                        conv::tconv3_backward(xs.data(), xd, self.value(*w).data(), &g, yd, *geom)
                    };
                    acc(*x, gx);
                    acc(*w, gw);
                    acc(*b, gb);
                }
                Op::Reshape(x) => acc(*x, g),
                Op::Elu(x) => {
                    let xv = self.value(*x).data();
                    let d = g
                        .iter()
                        .zip(xv)
                        .map(|(gi, &xi)| if xi >= 0.0 { *gi } else { gi * xi.exp() })
                        .collect();
                    acc(*x, d);
                }
                Op::Sigmoid(x) => {
                    let d = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(gi, s)| gi * s * (1.0 - s))
                        .collect();
                    acc(*x, d);
                }
                Op::Dropout { x, mask } => {
                    acc(*x, g.iter().zip(mask).map(|(a, m)| a * m).collect());
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.iter().map(|v| -v).collect());
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    acc(*a, g.iter().zip(bv).map(|(x, y)| x * y).collect());
                    acc(*b, g.iter().zip(av).map(|(x, y)| x * y).collect());
                }
                Op::Scale(x, f) => acc(*x, g.iter().map(|v| v * f).collect()),
                Op::AddScalar(x) => acc(*x, g),
                Op::MulConst(x, c) => acc(*x, g.iter().zip(c).map(|(a, b)| a * b).collect()),
                Op::Exp(x) => {
                    acc(*x, g.iter().zip(node.value.data()).map(|(a, e)| a * e).collect());
                }
                Op::Log(x) => {
                    let xv = self.value(*x).data();
                    acc(*x, g.iter().zip(xv).map(|(a, v)| a / v).collect());
                }
                Op::Square(x) => {
                    let xv = self.value(*x).data();
                    acc(*x, g.iter().zip(xv).map(|(a, v)| 2.0 * a * v).collect());
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = self.value(*x).data();
                    let d = g
                        .iter()
                        .zip(xv)
                        .map(|(a, &v)| if v < *lo || v > *hi { 0.0 } else { *a })
                        .collect();
                    acc(*x, d);
                }
                Op::LogitCrossEntropy { x, targets, bound } => {
                    let xv = self.value(*x).data();
                    let d = xv
                        .iter()
                        .zip(targets)
                        .map(|(&a, t)| {
                            let slope = logistic(a) - t;
                            let outward = (a < -bound && slope > 0.0) || (a > *bound && slope < 0.0);
                            if outward {
                                0.0
                            } else {
                                g[0] * slope
                            }
                        })
                        .collect();
                    acc(*x, d);
                }
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    acc(*x, vec![g[0]; n]);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        acc(*p, g[offset..offset + n].to_vec());
                        offset += n;
                    }
                }
                Op::Slice { x, start } => {
                    let mut d = vec![0.0; self.value(*x).len()];
                    d[*start..*start + g.len()].copy_from_slice(&g);
                    acc(*x, d);
                }
                Op::Norm(x) => {
                    let n = node.value.data()[0];
                    let xv = self.value(*x).data();
                    let d = if n > 0.0 {
                        xv.iter().map(|v| g[0] * v / n).collect()
                    } else {
                        vec![0.0; xv.len()]
                    };
                    acc(*x, d);
                }
            }
        }
        Ok(out)
    }
}

fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: Vec<f64>) {
    match slot {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(&delta) {
                *a += b;
            }
        }
        None => *slot = Some(delta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::ParamGroup;

    #[test]
    fn sum_of_parameter_has_unit_gradient() {
        let mut store = ParamStore::new();
        let p = store
            .insert("p", ParamGroup::Encoder, Tensor::vector(vec![1.0, -2.0, 3.0]))
            .unwrap();
        let q = store.insert("unused", ParamGroup::Prior, Tensor::vector(vec![5.0])).unwrap();
        let mut tape = Tape::new(&store);
        let pv = tape.param(p);
        let loss = tape.sum(pv);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(p).data(), &[1.0, 1.0, 1.0]);
        assert_eq!(grads.get(q).data(), &[0.0]);
    }

    #[test]
    fn logit_cross_entropy_matches_softplus_form_and_keeps_gradient() {
        let mut store = ParamStore::new();
        let xs = vec![-0.7, 0.0, 1.3, -40.0, 40.0];
        let ts = vec![2.0, -1.0, 0.5, 2.0, -1.0];
        let x = store.insert("x", ParamGroup::Decoder, Tensor::vector(xs.clone())).unwrap();
        let mut tape = Tape::new(&store);
        let xv = tape.param(x);
        let loss = tape.logit_cross_entropy(xv, ts.clone(), 10.0).unwrap();
        let sp = |v: f64| (1.0 + v.exp()).ln();
        let expected: f64 = xs
            .iter()
            .zip(&ts)
            .map(|(&a, &t)| {
                let a = f64::clamp(a, -10.0, 10.0);
                t * sp(-a) + (1.0 - t) * sp(a)
            })
            .sum();
        assert!((tape.value(loss).item().unwrap() - expected).abs() < 1e-12);
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(x).data();
        // unclamped entries: central difference of the softplus form
        for k in 0..3 {
            let f = |a: f64| ts[k] * sp(-a) + (1.0 - ts[k]) * sp(a);
            let h = 1e-6;
            assert!((g[k] - (f(xs[k] + h) - f(xs[k] - h)) / (2.0 * h)).abs() < 1e-8);
        }
        // saturated on the wrong side: the inward slope sigmoid(x) - t survives
        assert!((g[3] + 2.0).abs() < 1e-12 && (g[4] - 2.0).abs() < 1e-12);
        // saturated on the right side: no push further out
        let mut store = ParamStore::new();
        let y = store.insert("y", ParamGroup::Decoder, Tensor::vector(vec![-40.0, 40.0])).unwrap();
        let mut tape = Tape::new(&store);
        let yv = tape.param(y);
        let loss = tape.logit_cross_entropy(yv, vec![-1.0, 2.0], 10.0).unwrap();
        assert_eq!(tape.backward(loss).unwrap().get(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn sigmoid_slope_at_origin_is_quarter() {
        let mut store = ParamStore::new();
        let w = store.insert("w", ParamGroup::Decoder, Tensor::new(vec![1, 2], vec![0.5, -0.25]).unwrap()).unwrap();
        let b = store.insert("b", ParamGroup::Decoder, Tensor::vector(vec![0.0])).unwrap();
        let mut tape = Tape::new(&store);
        // w.x = 0.5*2 - 0.25*4 = 0
        let x = tape.input(Tensor::vector(vec![2.0, 4.0]));
        let (wv, bv) = (tape.param(w), tape.param(b));
        let pre = tape.dense(x, wv, bv, "d").unwrap();
        let s = tape.sigmoid(pre);
        assert_eq!(tape.value(s).item(), Some(0.5));
        let loss = tape.sum(s);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(b).data(), &[0.25]);
        assert_eq!(grads.get(w).data(), &[0.5, 1.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn elu_and_sigmoid_fixed_points() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.input(Tensor::vector(vec![0.0, -1.0, 2.0]));
        let e = tape.elu(x);
        assert_eq!(tape.value(e).data(), &[0.0, (-1.0f64).exp_m1(), 2.0]);
        let s = tape.sigmoid(x);
        assert_eq!(tape.value(s).data()[0], 0.5);
    }

    #[test]
    fn repeated_param_shares_node() {
        let mut store = ParamStore::new();
        let p = store.insert("p", ParamGroup::Encoder, Tensor::vector(vec![3.0])).unwrap();
        let mut tape = Tape::new(&store);
        let a = tape.param(p);
        let b = tape.param(p);
        assert_eq!(a, b);
        let prod = tape.mul(a, b).unwrap();
        let loss = tape.sum(prod);
        assert_eq!(tape.backward(loss).unwrap().get(p).data(), &[6.0]);
    }
}
