//! Connectionist temporal classification: loss by the forward (alpha)
//! recursion over the blank-interleaved label lattice, its gradient by the
//! backward (beta) recursion, and greedy decoding. Blank is class 0.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BLANK: usize = 0;

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + libm::log(libm::exp(a - m) + libm::exp(b - m))
}

/// Minimum frames needed to emit `labels`: one per label plus one blank
/// between each adjacent repeat.
pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

fn validate(logprobs: &Tensor, labels: &[usize]) -> Result<()> {
    let (t, c) = (logprobs.rows(), logprobs.cols());
    if logprobs.dims().len() != 2 || t == 0 {
        return Err(crate::error::shape_err("ctc", logprobs.dims(), &[0, 0]));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l == BLANK || l >= c) {
        return Err(Error::Label { label: bad, classes: c });
    }
    for r in 0..t {
        let row = logprobs.row(r);
        let lse = row.iter().copied().fold(f64::NEG_INFINITY, log_add);
        if !(lse.abs() <= 1e-3) {
            return Err(Error::Contract(alloc::format!(
                "ctc row {r} is not log-normalized (logsumexp = {lse})"
            )));
        }
    }
    let needed = min_frames(labels);
    if needed > t {
        return Err(Error::Infeasible {
            labels: labels.len(),
            needed,
            frames: t,
        });
    }
    Ok(())
}

/// Negative log-likelihood and its gradient w.r.t. `logprobs` (`T × C`).
pub fn ctc_loss_and_grad(logprobs: &Tensor, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    validate(logprobs, labels)?;
    let (t_len, c) = (logprobs.rows(), logprobs.cols());
    let s_len = 2 * labels.len() + 1;
    let ext = |s: usize| if s % 2 == 0 { BLANK } else { labels[s / 2] };
    let can_skip = |s: usize| s >= 2 && ext(s) != BLANK && ext(s) != ext(s - 2);
    let lp = |t: usize, k: usize| logprobs.data()[t * c + k];
    let ninf = f64::NEG_INFINITY;

    // alpha_t(s): log prob of prefixes ending in state s at t (emissions 0..=t)
    let mut alpha = vec![ninf; t_len * s_len];
    alpha[0] = lp(0, ext(0));
    if s_len > 1 {
        alpha[1] = lp(0, ext(1));
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut a = alpha[(t - 1) * s_len + s];
            if s >= 1 {
                a = log_add(a, alpha[(t - 1) * s_len + s - 1]);
            }
            if can_skip(s) {
                a = log_add(a, alpha[(t - 1) * s_len + s - 2]);
            }
            alpha[t * s_len + s] = if a == ninf { ninf } else { a + lp(t, ext(s)) };
        }
    }
    let last = (t_len - 1) * s_len;
    let mut log_p = alpha[last + s_len - 1];
    if s_len > 1 {
        log_p = log_add(log_p, alpha[last + s_len - 2]);
    }
    if log_p == ninf {
        return Err(Error::Infeasible {
            labels: labels.len(),
            needed: min_frames(labels),
            frames: t_len,
        });
    }

    // beta_t(s): log prob of completing from state s at t (emissions t+1..)
    let mut beta = vec![ninf; t_len * s_len];
    beta[last + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[last + s_len - 2] = 0.0;
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let nxt = (t + 1) * s_len;
            let mut b = beta[nxt + s] + lp(t + 1, ext(s));
            if s + 1 < s_len {
                b = log_add(b, beta[nxt + s + 1] + lp(t + 1, ext(s + 1)));
            }
            if s + 2 < s_len && can_skip(s + 2) {
                b = log_add(b, beta[nxt + s + 2] + lp(t + 1, ext(s + 2)));
            }
            beta[t * s_len + s] = b;
        }
    }

    let mut grad = vec![0.0; t_len * c];
    for t in 0..t_len {
        let mut occ = vec![ninf; c];
        for s in 0..s_len {
            let k = ext(s);
            occ[k] = log_add(occ[k], alpha[t * s_len + s] + beta[t * s_len + s]);
        }
        for k in 0..c {
            if occ[k] != ninf {
                grad[t * c + k] = -libm::exp(occ[k] - log_p);
            }
        }
    }
    Ok((-log_p, grad))
}

/// CTC negative log-likelihood of `labels` under `logprobs: T × (V+1)`.
pub fn ctc_loss(logprobs: &Tensor, labels: &[usize]) -> Result<f64> {
    ctc_loss_and_grad(logprobs, labels).map(|(l, _)| l)
}

/// Per-frame argmax, repeats collapsed, blanks dropped.
pub fn ctc_greedy_decode(logprobs: &Tensor) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for t in 0..logprobs.rows() {
        let row = logprobs.row(t);
        let best = (0..row.len())
            .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
            .unwrap_or(BLANK);
        if best != BLANK && prev != Some(best) {
            out.push(best);
        }
        prev = Some(best);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_logprobs(path: &[usize], classes: usize) -> Tensor {
        let mut data = Vec::new();
        for &k in path {
            for j in 0..classes {
                data.push(if j == k { 0.0 } else { -30.0 });
            }
        }
        // renormalize rows so they pass the contract check
        let mut t = Tensor::matrix(path.len(), classes, data).unwrap();
        for r in 0..t.rows() {
            let row = t.row_mut(r);
            let lse = row.iter().copied().fold(f64::NEG_INFINITY, log_add);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        t
    }

    #[test]
    fn single_frame_single_label() {
        let lp = Tensor::matrix(1, 3, vec![libm::log(0.2), libm::log(0.5), libm::log(0.3)]).unwrap();
        let loss = ctc_loss(&lp, &[2]).unwrap();
        assert!((loss + libm::log(0.3)).abs() < 1e-12);
    }

    #[test]
    fn greedy_collapses() {
        let lp = one_hot_logprobs(&[0, 1, 1, 0, 2], 3);
        assert_eq!(ctc_greedy_decode(&lp), vec![1, 2]);
        let lp = one_hot_logprobs(&[1, 0, 1], 3);
        assert_eq!(ctc_greedy_decode(&lp), vec![1, 1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let lp = one_hot_logprobs(&[0, 1], 3);
        assert!(matches!(ctc_loss(&lp, &[1, 1]), Err(Error::Infeasible { needed: 3, .. })));
        assert!(matches!(ctc_loss(&lp, &[3]), Err(Error::Label { .. })));
        assert!(matches!(ctc_loss(&lp, &[0]), Err(Error::Label { .. })));
        let raw = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        assert!(matches!(ctc_loss(&raw, &[1]), Err(Error::Contract(_))));
    }

    #[test]
    fn empty_label_is_all_blank() {
        let lp = Tensor::matrix(2, 2, vec![libm::log(0.9), libm::log(0.1), libm::log(0.6), libm::log(0.4)]).unwrap();
        let loss = ctc_loss(&lp, &[]).unwrap();
        assert!((loss + libm::log(0.9 * 0.6)).abs() < 1e-12);
    }
}
