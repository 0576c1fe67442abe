//! Handwritten reverse-mode gradients of the signature transform.
//!
//! The sweep along the stream recomputes prefix signatures from the final
//! one via the reversal identity
//! `Sig(x_1..x_{L-1}) = Sig(x_1..x_L) boxtimes exp(x_{L-1} - x_L)`,
//! so only a constant number of tensors is alive at any point instead of
//! one per stream position.

use crate::error::{Error, Result};
use crate::signature::{Basepoint, SignatureOptions, SignatureOutput, Stream};
use crate::tensor_algebra::{fused_mul_exp, FreeTensor, TruncationSpec};

/// Gradients of a scalar loss with respect to a signature call's inputs.
#[derive(Debug, Clone)]
pub struct SignatureGradient {
    /// `L x d` row-major, matching the input stream's shape.
    pub grad_stream: Vec<f64>,
    /// Present when the basepoint was an explicit vector.
    pub grad_basepoint: Option<Vec<f64>>,
    /// Present when an initial condition was used.
    pub grad_initial: Option<FreeTensor>,
}

/// Vector-Jacobian product of the grouplike product `C = A boxtimes B`.
pub fn mul_backward(
    grad_out: &FreeTensor,
    a: &FreeTensor,
    b: &FreeTensor,
) -> (FreeTensor, FreeTensor) {
    assert_eq!(a.spec(), b.spec(), "spec mismatch");
    assert_eq!(grad_out.spec(), a.spec(), "spec mismatch");
    let spec = a.spec();
    let n = spec.depth();
    // Implicit-scalar terms: C_k includes A_k * 1 and 1 * B_k.
    let mut grad_a = grad_out.clone();
    let mut grad_b = grad_out.clone();
    for i in 1..n {
        for j in 1..=(n - i) {
            let k = i + j;
            let gk = grad_out.level(k);
            let bj = b.level(j);
            let ai = a.level(i);
            let cols = bj.len();
            {
                let ga = grad_a.level_mut(i);
                for (w, gaw) in ga.iter_mut().enumerate() {
                    let row = &gk[w * cols..(w + 1) * cols];
                    let mut acc = 0.0;
                    for (g, &bv) in row.iter().zip(bj) {
                        acc += g * bv;
                    }
                    *gaw += acc;
                }
            }
            {
                let gb = grad_b.level_mut(j);
                for (w, &aw) in ai.iter().enumerate() {
                    let row = &gk[w * cols..(w + 1) * cols];
                    for (gbv, &g) in gb.iter_mut().zip(row) {
                        *gbv += aw * g;
                    }
                }
            }
        }
    }
    (grad_a, grad_b)
}

/// Vector-Jacobian product of the nonunital product (implicit scalar 0).
pub(crate) fn nonunit_mul_backward(
    grad_out: &FreeTensor,
    a: &FreeTensor,
    b: &FreeTensor,
) -> (FreeTensor, FreeTensor) {
    let spec = a.spec();
    let n = spec.depth();
    let mut grad_a = FreeTensor::zeros(spec);
    let mut grad_b = FreeTensor::zeros(spec);
    for i in 1..n {
        for j in 1..=(n - i) {
            let k = i + j;
            let gk = grad_out.level(k);
            let bj = b.level(j);
            let ai = a.level(i);
            let cols = bj.len();
            {
                let ga = grad_a.level_mut(i);
                for (w, gaw) in ga.iter_mut().enumerate() {
                    let row = &gk[w * cols..(w + 1) * cols];
                    let mut acc = 0.0;
                    for (g, &bv) in row.iter().zip(bj) {
                        acc += g * bv;
                    }
                    *gaw += acc;
                }
            }
            {
                let gb = grad_b.level_mut(j);
                for (w, &aw) in ai.iter().enumerate() {
                    let row = &gk[w * cols..(w + 1) * cols];
                    for (gbv, &g) in gb.iter_mut().zip(row) {
                        *gbv += aw * g;
                    }
                }
            }
        }
    }
    (grad_a, grad_b)
}

/// Vector-Jacobian product of the fused multiply-exponentiate: the exact
/// reverse sweep of the per-level Horner chains.
pub fn fused_mul_exp_backward(
    grad_out: &FreeTensor,
    a: &FreeTensor,
    z: &[f64],
) -> (FreeTensor, Vec<f64>) {
    let spec = a.spec();
    let d = spec.channels();
    let n = spec.depth();
    assert_eq!(z.len(), d, "channel mismatch");
    assert_eq!(grad_out.spec(), spec, "spec mismatch");

    let scaled: Vec<Vec<f64>> = (2..=n)
        .map(|j| z.iter().map(|x| x / j as f64).collect())
        .collect();
    let multiplier = |j: usize| -> &[f64] {
        if j == 1 {
            z
        } else {
            &scaled[j - 2]
        }
    };

    let mut grad_a = FreeTensor::zeros(spec);
    let mut grad_z = vec![0.0; d];

    for k in 1..=n {
        // Forward replay of the level-k chain, keeping each intermediate.
        // hs[m] has length d^{m+1} and already includes the A additions.
        let mut hs: Vec<Vec<f64>> = Vec::with_capacity(k);
        hs.push(
            multiplier(k)
                .iter()
                .zip(a.level(1))
                .map(|(x, y)| x + y)
                .collect(),
        );
        for m in 1..k {
            let s = multiplier(k - m);
            let mut next = crate::tensor_algebra::outer_product(hs[m - 1].as_slice(), s);
            for (r, &am) in next.iter_mut().zip(a.level(m + 1)) {
                *r += am;
            }
            hs.push(next);
        }

        // Reverse sweep.
        let mut grad_h: Vec<f64> = grad_out.level(k).to_vec();
        for m in (1..k).rev() {
            // h_{m+1} = outer(h_m, s_m) + A_{m+1}, s_m = z / (k - m).
            for (gam, &gh) in grad_a.level_mut(m + 1).iter_mut().zip(&grad_h) {
                *gam += gh;
            }
            let s = multiplier(k - m);
            let h_prev = &hs[m - 1];
            let mut grad_h_prev = vec![0.0; h_prev.len()];
            let mut grad_s = vec![0.0; d];
            for (w, ghp) in grad_h_prev.iter_mut().enumerate() {
                let row = &grad_h[w * d..(w + 1) * d];
                let mut acc = 0.0;
                for (g, &sv) in row.iter().zip(s) {
                    acc += g * sv;
                }
                *ghp = acc;
                for (gs, &g) in grad_s.iter_mut().zip(row) {
                    *gs += g * h_prev[w];
                }
            }
            let inv = 1.0 / (k - m) as f64;
            for (gz, gs) in grad_z.iter_mut().zip(grad_s) {
                *gz += gs * inv;
            }
            grad_h = grad_h_prev;
        }
        // h_1 = z/k + A_1.
        for (gam, &gh) in grad_a.level_mut(1).iter_mut().zip(&grad_h) {
            *gam += gh;
        }
        let inv = 1.0 / k as f64;
        for (gz, &gh) in grad_z.iter_mut().zip(&grad_h) {
            *gz += gh * inv;
        }
    }
    (grad_a, grad_z)
}

/// Gradient reference to the forward output.
pub enum SignatureGradOut<'a> {
    Single(&'a FreeTensor),
    /// One gradient tensor per expanding-prefix output.
    Stream(&'a [FreeTensor]),
}

impl<'a> From<&'a FreeTensor> for SignatureGradOut<'a> {
    fn from(t: &'a FreeTensor) -> Self {
        SignatureGradOut::Single(t)
    }
}

fn effective_points_for_backward(
    stream: &Stream,
    spec: TruncationSpec,
    options: &SignatureOptions,
) -> Result<Vec<Vec<f64>>> {
    let d = spec.channels();
    if stream.channels() != d {
        return Err(Error::ChannelMismatch {
            expected: d,
            got: stream.channels(),
        });
    }
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(stream.len() + 1);
    match &options.basepoint {
        Basepoint::None => {}
        Basepoint::Origin => points.push(vec![0.0; d]),
        Basepoint::Point(p) => {
            if p.len() != d {
                return Err(Error::ChannelMismatch {
                    expected: d,
                    got: p.len(),
                });
            }
            points.push(p.clone());
        }
    }
    for i in 0..stream.len() {
        points.push(stream.point(i).to_vec());
    }
    if points.len() < 2 {
        return Err(Error::StreamTooShort {
            needed: 2,
            got: points.len(),
        });
    }
    if options.inverse {
        points.reverse();
    }
    Ok(points)
}

/// Reverse-mode sweep through the signature transform.
///
/// `saved_final` must be the forward output for this stream and options
/// (the last element, in stream mode). Consistency between the two is
/// not checked; an inconsistent pair silently produces wrong gradients.
pub fn signature_backward(
    grad_out: SignatureGradOut<'_>,
    stream: &Stream,
    spec: TruncationSpec,
    options: &SignatureOptions,
    saved_final: &FreeTensor,
) -> Result<SignatureGradient> {
    if options.stream_mode && options.inverse {
        return Err(Error::Unsupported(
            "backward through stream mode combined with inverse",
        ));
    }
    let points = effective_points_for_backward(stream, spec, options)?;
    let n_pts = points.len();
    let d = spec.channels();

    let grad_stream_out: Option<&[FreeTensor]> = match (&grad_out, options.stream_mode) {
        (SignatureGradOut::Single(_), true) | (SignatureGradOut::Stream(_), false) => {
            return Err(Error::ShapeMismatch(
                "gradient shape does not match stream_mode".into(),
            ))
        }
        (SignatureGradOut::Stream(gs), true) => {
            if gs.len() != n_pts - 1 {
                return Err(Error::ShapeMismatch(format!(
                    "expected {} prefix gradients, got {}",
                    n_pts - 1,
                    gs.len()
                )));
            }
            Some(gs)
        }
        _ => None,
    };

    // In stream mode the initial factor multiplies every output, so its
    // adjoint accumulates across prefixes; strip it from the running state
    // by treating `current` as initial boxtimes Sig(prefix) throughout,
    // which the reversal identity preserves.
    let mut current = saved_final.clone();
    let mut grad_current = match &grad_out {
        SignatureGradOut::Single(g) => (*g).clone(),
        SignatureGradOut::Stream(gs) => gs.last().unwrap().clone(),
    };

    let mut grad_points = vec![0.0; n_pts * d];
    for i in (0..n_pts - 1).rev() {
        let z: Vec<f64> = points[i]
            .iter()
            .zip(&points[i + 1])
            .map(|(a, b)| b - a)
            .collect();
        // Recover the previous running state via the reversal identity.
        let back: Vec<f64> = z.iter().map(|x| -x).collect();
        let prev = fused_mul_exp(&current, &back);
        let (grad_prev, grad_z) = fused_mul_exp_backward(&grad_current, &prev, &z);
        for c in 0..d {
            grad_points[(i + 1) * d + c] += grad_z[c];
            grad_points[i * d + c] -= grad_z[c];
        }
        grad_current = grad_prev;
        if let Some(gs) = grad_stream_out {
            if i >= 1 {
                grad_current.add_scaled(&gs[i - 1], 1.0);
            }
        }
        current = prev;
    }

    let grad_initial = options.initial.as_ref().map(|_| grad_current);

    if options.inverse {
        // Undo the time reversal of the effective points.
        let mut reversed = vec![0.0; n_pts * d];
        for i in 0..n_pts {
            reversed[i * d..(i + 1) * d]
                .copy_from_slice(&grad_points[(n_pts - 1 - i) * d..(n_pts - i) * d]);
        }
        grad_points = reversed;
    }

    let (grad_basepoint, grad_stream) = match &options.basepoint {
        Basepoint::None => (None, grad_points),
        Basepoint::Origin => (None, grad_points[d..].to_vec()),
        Basepoint::Point(_) => (Some(grad_points[..d].to_vec()), grad_points[d..].to_vec()),
    };

    Ok(SignatureGradient {
        grad_stream,
        grad_basepoint,
        grad_initial,
    })
}

/// Convenience wrapper matching a forward output shape.
pub fn signature_backward_output(
    grad_out: &SignatureOutput,
    stream: &Stream,
    spec: TruncationSpec,
    options: &SignatureOptions,
    saved: &SignatureOutput,
) -> Result<SignatureGradient> {
    let saved_final = saved.single();
    match grad_out {
        SignatureOutput::Single(g) => {
            signature_backward(SignatureGradOut::Single(g), stream, spec, options, saved_final)
        }
        SignatureOutput::Stream(gs) => {
            signature_backward(SignatureGradOut::Stream(gs), stream, spec, options, saved_final)
        }
    }
}
