//! Central finite-difference check of tape gradients.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

pub const FD_EPS: f64 = 1e-4;
pub const FD_TOLERANCE: f64 = 1e-3;

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.input(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    Ok(tape.scalar(out))
}

/// Compares the analytic gradient of the scalar `f(inputs)` with central
/// differences. Checks every coordinate, or a seeded sample of at most
/// `max_coords` per input. Returns the worst relative error.
pub fn finite_difference_check<F>(f: F, inputs: &[Tensor], eps: f64, max_coords: Option<usize>, seed: u64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.input(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.wrt(vars[i]);
        let n = input.len();
        for c in sample_coords(&mut rng, n, max_coords) {
            let mut probe = inputs.to_vec();
            probe[i].data_mut()[c] = input.data()[c] + eps;
            let up = evaluate(&f, &probe)?;
            probe[i].data_mut()[c] = input.data()[c] - eps;
            let down = evaluate(&f, &probe)?;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.map_or(0.0, |g| g[c]);
            let err = relative_error(a, numeric);
            if !err.is_finite() {
                return Err(Error::NonFinite { op: "finite_difference_check" });
            }
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn sample_coords(rng: &mut ChaCha8Rng, n: usize, max_coords: Option<usize>) -> Vec<usize> {
    match max_coords {
        Some(m) if m < n => (0..m).map(|_| (rng.next_u64() % n as u64) as usize).collect(),
        _ => (0..n).collect(),
    }
}

/// Finite-difference check of parameter gradients. Parameters are stored in
/// f32, so each difference quotient divides by the perturbation that the
/// f32 grid actually realized.
pub fn param_difference_check<F>(f: F, store: &ParamStore, eps: f64, max_coords: Option<usize>, seed: u64) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let grads = tape.backward(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = store.clone();
    let mut worst = 0.0f64;
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let analytic = grads.param(id);
        let base = store.data(id).to_vec();
        for c in sample_coords(&mut rng, base.len(), max_coords) {
            let up_w = (base[c] as f64 + eps) as f32;
            let down_w = (base[c] as f64 - eps) as f32;
            probe.get_mut(id).data[c] = up_w;
            let up = eval_params(&f, &probe)?;
            probe.get_mut(id).data[c] = down_w;
            let down = eval_params(&f, &probe)?;
            probe.get_mut(id).data[c] = base[c];
            let numeric = (up - down) / (up_w as f64 - down_w as f64);
            let err = relative_error(analytic.map_or(0.0, |g| g[c]), numeric);
            if !err.is_finite() {
                return Err(Error::NonFinite { op: "param_difference_check" });
            }
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn eval_params<F>(f: &F, store: &ParamStore) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    Ok(tape.scalar(out))
}
