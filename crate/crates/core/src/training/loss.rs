use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Records `-(1/B) Σ_b log_softmax(U)_{b, y_b}` on the tape.
pub fn record_nll<T: Scalar>(tape: &mut Tape<T>, utilities: Var, labels: &[usize]) -> Result<Var> {
    let log_p = tape.log_softmax(utilities);
    let picked = tape.pick(log_p, labels)?;
    let mean = tape.mean(picked);
    Ok(tape.scale(mean, -T::one()))
}

fn check_labels<T: Scalar>(p: &Tensor<T>, labels: &[usize]) -> Result<()> {
    if p.rows() != labels.len() {
        return Err(Error::shape("nll", p.shape(), &[labels.len()]));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= p.cols()) {
        return Err(Error::usage(format!("label {y} out of range for {} alternatives", p.cols())));
    }
    Ok(())
}

/// Mean negative log-likelihood from `[rows, alternatives]` log-probabilities.
pub fn nll_from_log_probabilities<T: Scalar>(log_p: &Tensor<T>, labels: &[usize]) -> Result<T> {
    check_labels(log_p, labels)?;
    let total: T = labels.iter().enumerate().map(|(r, &y)| log_p.at(r, y)).sum();
    Ok(-total / T::of(labels.len() as f64))
}

/// Mean negative log-likelihood from `[rows, alternatives]` probabilities.
pub fn nll_loss<T: Scalar>(p: &Tensor<T>, labels: &[usize]) -> Result<T> {
    check_labels(p, labels)?;
    let total: T = labels.iter().enumerate().map(|(r, &y)| p.at(r, y).ln()).sum();
    Ok(-total / T::of(labels.len() as f64))
}
