use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `name[index]` of the worst element.
    pub worst: String,
    pub checked: usize,
}

/// Step shrink factor and table size of the extrapolation.
const RIDDERS_SHRINK: f64 = 2.0;
const RIDDERS_STEPS: usize = 12;
/// Stop once the diagonal moves by more than this multiple of the best error.
const RIDDERS_SAFE: f64 = 2.0;

/// Ridders' extrapolation of central differences `(f(h) - f(-h)) / 2h` over
/// steps `h0, h0/2, h0/4, ...`. Returns the estimate with the smallest
/// internal error estimate; it never sees the analytic value.
fn ridders(mut at: impl FnMut(f64) -> Result<f64>, h0: f64) -> Result<f64> {
    let c2 = RIDDERS_SHRINK * RIDDERS_SHRINK;
    let mut h = h0;
    let mut prev = vec![(at(h)? - at(-h)?) / (2.0 * h)];
    let mut best = prev[0];
    let mut err = f64::INFINITY;
    for _ in 1..RIDDERS_STEPS {
        h /= RIDDERS_SHRINK;
        let mut row = vec![(at(h)? - at(-h)?) / (2.0 * h)];
        let mut fac = c2;
        for j in 1..=prev.len() {
            let v = (row[j - 1] * fac - prev[j - 1]) / (fac - 1.0);
            fac *= c2;
            let e = (v - row[j - 1]).abs().max((v - prev[j - 1]).abs());
            if e <= err {
                err = e;
                best = v;
            }
            row.push(v);
        }
        let diverging = (row[row.len() - 1] - prev[prev.len() - 1]).abs() >= RIDDERS_SAFE * err;
        prev = row;
        if diverging {
            break;
        }
    }
    Ok(best)
}

/// Compares tape gradients against numeric derivatives for every scalar
/// parameter.
///
/// The numeric derivative is Ridders' extrapolation of central differences
/// starting at step `eps`, which stays accurate when a fixed step would
/// straddle an activation kink or drown a tiny gradient in roundoff.
/// Relative error per element is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(params: &ParamStore, loss_fn: F, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(store);
        let loss = loss_fn(&mut tape)?;
        tape.value(loss)
            .item()
            .ok_or_else(|| Error::shape("grad_check", "loss must be scalar"))
    };

    let (analytic, base) = {
        let mut tape = Tape::new(params);
        let loss = loss_fn(&mut tape)?;
        (tape.backward(loss)?, tape.value(loss).data()[0])
    };
    let again = eval(params)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic { first: base, second: again });
    }

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for id in params.ids() {
        for i in 0..params.value(id).len() {
            let original = params.value(id).data()[i];
            let at = |offset: f64| -> Result<f64> {
                *work.element_mut(id, i) = original + offset;
                eval(&work)
            };
            let numeric = ridders(at, eps)?;
            *work.element_mut(id, i) = original;
            let a = analytic.get(id).data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_relative_error || report.worst.is_empty() {
                report.max_relative_error = rel;
                report.worst = format!("{}[{i}]", params.name(id));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::gradcore::{init_layers, LayerKind, LayerSpec, Mode, ParamGroup, Tensor};

    #[test]
    fn quadratic_is_exact() {
        let mut store = ParamStore::new();
        store
            .insert("p", ParamGroup::Encoder, Tensor::vector(vec![0.3, -1.7, 2.2, 0.01]))
            .unwrap();
        let report = grad_check(
            &store,
            |tape| {
                let p = tape.param_named("p")?;
                let sq = tape.square(p);
                Ok(tape.sum(sq))
            },
            1e-3,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-8, "{report:?}");
        assert_eq!(report.checked, 4);
    }

    #[test]
    fn detects_nondeterminism() {
        use std::cell::Cell;
        let mut store = ParamStore::new();
        store.insert("p", ParamGroup::Encoder, Tensor::vector(vec![1.0])).unwrap();
        let calls = Cell::new(0.0);
        let err = grad_check(
            &store,
            |tape| {
                calls.set(calls.get() + 1.0);
                let p = tape.param_named("p")?;
                let s = tape.sum(p);
                Ok(tape.add_scalar(s, calls.get()))
            },
            1e-3,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonDeterministic { .. }));
    }

    fn check_stack(layers: &[LayerSpec], input_shape: &[usize], seed: u64) -> f64 {
        let mut store = ParamStore::new();
        init_layers(&mut store, layers, ParamGroup::Encoder, seed).unwrap();
        let n: usize = input_shape.iter().product();
        let input: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 17) as f64 / 17.0 - 0.4).collect();
        let input = Tensor::new(input_shape.to_vec(), input).unwrap();
        let weights: Vec<f64> = (0..4096).map(|i| ((i * 13 + 5) % 11) as f64 / 11.0 - 0.5).collect();
        grad_check(
            &store,
            |tape| {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let x = tape.input(input.clone());
                let y = tape.apply_layers(layers, x, Mode::Eval, &mut rng)?;
                let n = tape.value(y).len();
                let weighted = tape.mul_const(y, weights[..n].to_vec())?;
                Ok(tape.sum(weighted))
            },
            1e-4,
        )
        .unwrap()
        .max_relative_error
    }

    #[test]
    fn random_three_layer_dense_net() {
        let layers = [
            LayerSpec::new("a", LayerKind::Dense { fan_in: 6, fan_out: 5 }),
            LayerSpec::new("a_act", LayerKind::Elu),
            LayerSpec::new("b", LayerKind::Dense { fan_in: 5, fan_out: 4 }),
            LayerSpec::new("b_act", LayerKind::Elu),
            LayerSpec::new("c", LayerKind::Dense { fan_in: 4, fan_out: 3 }),
            LayerSpec::new("c_act", LayerKind::Sigmoid),
        ];
        let err = check_stack(&layers, &[6], 3);
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn conv_and_transposed_conv_stack() {
        let layers = [
            LayerSpec::new(
                "c",
                LayerKind::Conv3 { in_channels: 1, out_channels: 2, kernel: 3, stride: 2, padding: 1 },
            ),
            LayerSpec::new("c_act", LayerKind::Elu),
            LayerSpec::new(
                "t",
                LayerKind::TConv3 {
                    in_channels: 2,
                    out_channels: 1,
                    kernel: 3,
                    stride: 2,
                    padding: 1,
                    output_padding: 1,
                },
            ),
            LayerSpec::new("t_act", LayerKind::Sigmoid),
        ];
        let err = check_stack(&layers, &[1, 4, 4, 4], 5);
        assert!(err < 1e-4, "{err}");
    }
}
