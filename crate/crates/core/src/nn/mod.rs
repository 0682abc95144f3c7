//! Minimal reverse-mode autodiff over dense `f64` tensors.
//!
//! Only the operations the parking model needs are provided. Heavy ops
//! (convolution, attention, layer norm, lift-splat) are fused with
//! hand-written backward passes.

pub mod kernels;
mod tape;
mod tensor;

pub use tape::{Gradients, Grads, SplatEntry, SplatIndex, Tape, Var};
pub use tensor::Tensor;

/// Analytic gradients of the scalar `f(inputs)` with respect to every input.
pub fn analytic_gradients<F>(inputs: &[Tensor], f: F) -> (f64, Vec<Tensor>)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new(true);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let value = tape.value(out).data()[0];
    let mut g = tape.backward(out);
    let grads = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            let data = g.take(*v).unwrap_or_else(|| vec![0.0; t.len()]);
            Tensor::from_vec(t.shape(), data)
        })
        .collect();
    (value, grads)
}

/// Central finite-difference gradients of the scalar `f(inputs)`.
pub fn numeric_gradients<F>(inputs: &[Tensor], step: f64, f: F) -> Vec<Tensor>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |xs: &[Tensor]| {
        let mut tape = Tape::new(false);
        let vars: Vec<Var> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).data()[0]
    };
    let mut xs = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for ti in 0..xs.len() {
        let mut g = vec![0.0; xs[ti].len()];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = xs[ti].data()[i];
            xs[ti].data_mut()[i] = orig + step;
            let fp = eval(&xs);
            xs[ti].data_mut()[i] = orig - step;
            let fm = eval(&xs);
            xs[ti].data_mut()[i] = orig;
            *gi = (fp - fm) / (2.0 * step);
        }
        grads.push(Tensor::from_vec(xs[ti].shape(), g));
    }
    grads
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`; zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}
