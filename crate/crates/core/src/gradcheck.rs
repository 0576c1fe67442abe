//! Seeded finite-difference verification of the handwritten backward
//! passes, reported as a single scale-relative error figure.

use crate::backward::{signature_backward, SignatureGradOut};
use crate::error::Result;
use crate::logsignature::{logsignature, logsignature_backward, LogSigGradOut, LogSigMode};
use crate::signature::{signature, SignatureOptions, Stream};
use crate::tensor_algebra::{FreeTensor, TruncationSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-6;

/// Central-difference comparison of an analytic stream gradient against
/// the same scalar objective evaluated at perturbed inputs.
///
/// The error is `max_i |analytic_i - fd_i| / max(max_i |fd_i|, 1e-8)`:
/// relative to the gradient's own scale, so near-zero coordinates do not
/// produce spurious blow-ups.
fn max_relative_error(
    analytic: &[f64],
    data: &[f64],
    d: usize,
    mut objective: impl FnMut(&Stream) -> f64,
) -> f64 {
    let mut fd = vec![0.0; data.len()];
    for i in 0..data.len() {
        let mut plus = data.to_vec();
        plus[i] += FD_STEP;
        let mut minus = data.to_vec();
        minus[i] -= FD_STEP;
        let fp = objective(&Stream::new(d, plus).expect("rectangular by construction"));
        let fm = objective(&Stream::new(d, minus).expect("rectangular by construction"));
        fd[i] = (fp - fm) / (2.0 * FD_STEP);
    }
    let scale = fd.iter().fold(1e-8f64, |m, x| m.max(x.abs()));
    analytic
        .iter()
        .zip(&fd)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / scale))
}

fn random_case(d: usize, l: usize, seed: u64) -> (Stream, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..l * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (Stream::new(d, data).expect("rectangular"), rng)
}

/// Deliberately perturbs one analytic gradient entry; used as a negative
/// control to prove the check can fail.
fn corrupt_gradient(grad: &mut [f64]) {
    if let Some(g) = grad.first_mut() {
        *g = *g * 1.5 + 0.1;
    }
}

/// Checks `signature_backward` on a seeded random stream; returns the
/// max relative error against central finite differences.
pub fn gradcheck_signature(
    spec: TruncationSpec,
    length: usize,
    seed: u64,
    corrupt: bool,
) -> Result<f64> {
    let d = spec.channels();
    let (stream, mut rng) = random_case(d, length, seed);
    let opts = SignatureOptions::default();
    let sig = signature(&stream, spec, &opts)?;
    let weights: Vec<f64> = (0..spec.sig_length())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let grad_out = FreeTensor::from_data(spec, weights.clone())?;
    let mut grad = signature_backward(
        SignatureGradOut::Single(&grad_out),
        &stream,
        spec,
        &opts,
        sig.single(),
    )?;
    if corrupt {
        corrupt_gradient(&mut grad.grad_stream);
    }
    Ok(max_relative_error(
        &grad.grad_stream,
        stream.data(),
        d,
        |st| {
            let out = signature(st, spec, &opts).expect("same shape as the checked input");
            out.single()
                .data()
                .iter()
                .zip(&weights)
                .map(|(x, w)| x * w)
                .sum()
        },
    ))
}

/// Checks `logsignature_backward` in the given mode; same protocol as
/// [`gradcheck_signature`].
pub fn gradcheck_logsignature(
    spec: TruncationSpec,
    length: usize,
    mode: LogSigMode,
    seed: u64,
    corrupt: bool,
) -> Result<f64> {
    let d = spec.channels();
    let (stream, mut rng) = random_case(d, length, seed);
    let opts = SignatureOptions::default();
    let out_len = crate::logsignature::logsig_length(spec, mode)?;
    let weights: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut grad = logsignature_backward(
        LogSigGradOut::Single(&weights),
        &stream,
        spec,
        mode,
        &opts,
    )?;
    if corrupt {
        corrupt_gradient(&mut grad.grad_stream);
    }
    Ok(max_relative_error(
        &grad.grad_stream,
        stream.data(),
        d,
        |st| {
            let out = logsignature(st, spec, mode, &opts).expect("same shape as checked input");
            out.single().iter().zip(&weights).map(|(x, w)| x * w).sum()
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(d: usize, n: usize) -> TruncationSpec {
        TruncationSpec::new(d, n).unwrap()
    }

    #[test]
    fn trivial_case_is_exact() {
        let err = gradcheck_signature(spec(1, 1), 2, 0, false).unwrap();
        assert!(err < 1e-9, "error {err}");
    }

    #[test]
    fn seeded_cases_pass() {
        assert!(gradcheck_signature(spec(4, 5), 10, 1234, false).unwrap() <= 1e-5);
        for mode in [LogSigMode::Expanded, LogSigMode::Brackets, LogSigMode::Words] {
            let err = gradcheck_logsignature(spec(3, 4), 8, mode, 1234, false).unwrap();
            assert!(err <= 1e-5, "{mode:?}: {err}");
        }
    }

    #[test]
    fn corruption_is_detected() {
        assert!(gradcheck_signature(spec(2, 3), 6, 7, true).unwrap() > 1e-5);
        let err =
            gradcheck_logsignature(spec(2, 3), 6, LogSigMode::Words, 7, true).unwrap();
        assert!(err > 1e-5);
    }
}
