//! Logsignature transform in three representations — the full expanded
//! tensor, Lyndon-bracket coefficients, and Lyndon-word extraction — plus
//! its reverse-mode backward pass.

use crate::error::{Error, Result};
use crate::lyndon::{
    lyndon_basis, lyndon_triangular_solve, lyndon_triangular_solve_adjoint, psi_project,
};
use crate::signature::{signature, SignatureOptions, SignatureOutput, Stream};
use crate::backward::{signature_backward, SignatureGradOut, SignatureGradient};
use crate::tensor_algebra::{nonunit_mul, tensor_log, FreeTensor, TruncationSpec};
use crate::backward::nonunit_mul_backward;

/// Output representation of the logsignature.
///
/// `Words` extracts the coefficients at the Lyndon-word positions of the
/// expanded logarithm; `Brackets` solves for the coefficients in the
/// Lyndon-bracket basis; `Expanded` returns the full tensor layout.
/// `Words` is the default: when the next operation is a learnt linear
/// map, the cheaper extraction loses nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogSigMode {
    Expanded,
    Brackets,
    #[default]
    Words,
}

/// Output vector length for a mode: the full tensor length for
/// `Expanded`, the free-Lie-algebra dimension w(d, N) otherwise.
pub fn logsig_length(spec: TruncationSpec, mode: LogSigMode) -> Result<usize> {
    match mode {
        LogSigMode::Expanded => Ok(spec.sig_length()),
        LogSigMode::Brackets | LogSigMode::Words => crate::lyndon::witt_dimension(spec),
    }
}

/// Logsignature(s) of a stream: one vector, or one per expanding prefix.
#[derive(Debug, Clone, PartialEq)]
pub enum LogSigOutput {
    Single(Vec<f64>),
    Stream(Vec<Vec<f64>>),
}

impl LogSigOutput {
    /// The single output, or the final prefix in stream mode.
    pub fn single(&self) -> &[f64] {
        match self {
            LogSigOutput::Single(v) => v,
            LogSigOutput::Stream(vs) => vs.last().expect("stream output is never empty"),
        }
    }

    pub fn stream(&self) -> Option<&[Vec<f64>]> {
        match self {
            LogSigOutput::Single(_) => None,
            LogSigOutput::Stream(vs) => Some(vs),
        }
    }
}

/// Projects the logarithm of a group tensor into the chosen representation.
pub fn project_log_tensor(sig: &FreeTensor, mode: LogSigMode) -> Result<Vec<f64>> {
    let log = tensor_log(sig);
    match mode {
        LogSigMode::Expanded => Ok(log.data().to_vec()),
        LogSigMode::Words => psi_project(&log, &lyndon_basis(log.spec())),
        LogSigMode::Brackets => lyndon_triangular_solve(&log, &lyndon_basis(log.spec())),
    }
}

/// Logsignature transform: the logarithm of the signature under the same
/// options, projected per `mode`. With `inverse` this yields the
/// logsignature of the time-reversed stream; with `stream_mode` the
/// projection is applied to every expanding-prefix signature.
pub fn logsignature(
    stream: &Stream,
    spec: TruncationSpec,
    mode: LogSigMode,
    options: &SignatureOptions,
) -> Result<LogSigOutput> {
    match signature(stream, spec, options)? {
        SignatureOutput::Single(sig) => Ok(LogSigOutput::Single(project_log_tensor(&sig, mode)?)),
        SignatureOutput::Stream(sigs) => {
            let mut out = Vec::with_capacity(sigs.len());
            for s in &sigs {
                out.push(project_log_tensor(s, mode)?);
            }
            Ok(LogSigOutput::Stream(out))
        }
    }
}

/// Adjoint of the mode projection: maps a gradient on the projected
/// vector back to a gradient on the expanded logarithm tensor.
fn projection_adjoint(grad: &[f64], spec: TruncationSpec, mode: LogSigMode) -> Result<FreeTensor> {
    let expected = logsig_length(spec, mode)?;
    if grad.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "expected gradient of length {expected}, got {}",
            grad.len()
        )));
    }
    match mode {
        LogSigMode::Expanded => FreeTensor::from_data(spec, grad.to_vec()),
        LogSigMode::Words => {
            let basis = lyndon_basis(spec);
            let mut out = FreeTensor::zeros(spec);
            for (&o, &g) in basis.offsets().iter().zip(grad) {
                out.data_mut()[o] = g;
            }
            Ok(out)
        }
        LogSigMode::Brackets => {
            let basis = lyndon_basis(spec);
            let y = lyndon_triangular_solve_adjoint(grad, &basis)?;
            let mut out = FreeTensor::zeros(spec);
            for (&o, &g) in basis.offsets().iter().zip(&y) {
                out.data_mut()[o] = g;
            }
            Ok(out)
        }
    }
}

/// Tail of the Horner form of the log series from term `p`:
/// `s_p = c_p x + x (x) s_{p+1}`, `s_N = c_N x`, where
/// `c_q = (-1)^{q+1} / q` and `(x)` is the nonunital product.
/// `s_1` equals `tensor_log(a)` with `x = a - 1`.
fn log_horner_tail(x: &FreeTensor, p: usize) -> FreeTensor {
    let n = x.spec().depth();
    let coef = |q: usize| if q % 2 == 0 { -1.0 } else { 1.0 } / q as f64;
    let mut s = x.clone();
    s.scale(coef(n));
    for q in (p..n).rev() {
        let mut next = nonunit_mul(x, &s);
        next.add_scaled(x, coef(q));
        s = next;
    }
    s
}

/// Adjoint of `tensor_log` as a function of the group tensor `a`.
///
/// The reverse sweep recomputes the Horner tails it needs instead of
/// storing per-term powers, keeping the number of live tensors constant
/// in the truncation depth.
pub fn log_tensor_backward(grad_out: &FreeTensor, a: &FreeTensor) -> FreeTensor {
    let spec = a.spec();
    let n = spec.depth();
    assert_eq!(grad_out.spec(), spec, "spec mismatch");
    if n == 1 {
        return grad_out.clone();
    }
    let coef = |q: usize| if q % 2 == 0 { -1.0 } else { 1.0 } / q as f64;
    let mut grad_x = FreeTensor::zeros(spec);
    let mut grad_s = grad_out.clone();
    for p in 1..n {
        grad_x.add_scaled(&grad_s, coef(p));
        let s_next = log_horner_tail(a, p + 1);
        let (ga, gb) = nonunit_mul_backward(&grad_s, a, &s_next);
        grad_x.add_scaled(&ga, 1.0);
        grad_s = gb;
    }
    grad_x.add_scaled(&grad_s, coef(n));
    grad_x
}

/// Gradient on the logsignature output, mirroring [`LogSigOutput`].
pub enum LogSigGradOut<'a> {
    Single(&'a [f64]),
    Stream(&'a [Vec<f64>]),
}

/// Reverse-mode sweep through the logsignature: the adjoint of the mode
/// projection, then of the truncated log series, then of the signature.
///
/// The signature forward pass is recomputed here; no saved state beyond
/// the original inputs is required.
pub fn logsignature_backward(
    grad_out: LogSigGradOut<'_>,
    stream: &Stream,
    spec: TruncationSpec,
    mode: LogSigMode,
    options: &SignatureOptions,
) -> Result<SignatureGradient> {
    let sig = signature(stream, spec, options)?;
    match (&sig, &grad_out) {
        (SignatureOutput::Single(s), LogSigGradOut::Single(g)) => {
            let grad_log = projection_adjoint(g, spec, mode)?;
            let grad_sig = log_tensor_backward(&grad_log, s);
            signature_backward(SignatureGradOut::Single(&grad_sig), stream, spec, options, s)
        }
        (SignatureOutput::Stream(sigs), LogSigGradOut::Stream(gs)) => {
            if gs.len() != sigs.len() {
                return Err(Error::ShapeMismatch(format!(
                    "expected {} prefix gradients, got {}",
                    sigs.len(),
                    gs.len()
                )));
            }
            let mut grad_sigs = Vec::with_capacity(sigs.len());
            for (s, g) in sigs.iter().zip(gs.iter()) {
                let grad_log = projection_adjoint(g, spec, mode)?;
                grad_sigs.push(log_tensor_backward(&grad_log, s));
            }
            signature_backward(
                SignatureGradOut::Stream(&grad_sigs),
                stream,
                spec,
                options,
                sigs.last().expect("stream output is never empty"),
            )
        }
        _ => Err(Error::ShapeMismatch(
            "gradient shape does not match stream_mode".into(),
        )),
    }
}
