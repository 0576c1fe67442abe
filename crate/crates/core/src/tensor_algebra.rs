//! Arithmetic in the truncated tensor algebra.
//!
//! Elements live in the product space of dense level blocks of shapes
//! `d, d^2, ..., d^N`, stored level-major with words in lexicographic
//! order. The scalar (level 0) slot is implicit: group elements carry an
//! implicit scalar 1, Lie elements an implicit scalar 0. Which contract
//! applies is part of each operation's documentation, not a stored flag.

use crate::error::{Error, Result};

/// Channel count `d` and truncation depth `N` governing all shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TruncationSpec {
    channels: usize,
    depth: usize,
}

impl TruncationSpec {
    pub fn new(channels: usize, depth: usize) -> Result<Self> {
        if channels < 1 || depth < 1 {
            return Err(Error::InvalidSpec);
        }
        let spec = TruncationSpec { channels, depth };
        // Reject specs whose flattened length does not fit in usize.
        let mut total: usize = 0;
        let mut level: usize = 1;
        for _ in 0..depth {
            level = level
                .checked_mul(channels)
                .ok_or(Error::Overflow("signature length"))?;
            total = total
                .checked_add(level)
                .ok_or(Error::Overflow("signature length"))?;
        }
        Ok(spec)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of coefficients in level `k`, i.e. `d^k`.
    pub fn level_len(&self, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.depth);
        self.channels.pow(k as u32)
    }

    /// Flat offset of the start of level `k`.
    pub fn level_offset(&self, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.depth);
        (1..k).map(|m| self.level_len(m)).sum()
    }

    /// Total flattened length, `sum_{k=1}^N d^k`.
    pub fn sig_length(&self) -> usize {
        (1..=self.depth).map(|k| self.level_len(k)).sum()
    }

    /// Flat offset of the coefficient of a word of 1-based letters.
    pub fn word_offset(&self, word: &[usize]) -> usize {
        let k = word.len();
        let d = self.channels;
        let mut within = 0usize;
        for &letter in word {
            debug_assert!(letter >= 1 && letter <= d);
            within = within * d + (letter - 1);
        }
        self.level_offset(k) + within
    }
}

/// Live/peak instance accounting for [`FreeTensor`].
///
/// Counters are thread-local so a measurement on one thread is not
/// perturbed by tensors allocated concurrently elsewhere.
pub mod alloc_stats {
    use std::cell::Cell;

    thread_local! {
        static LIVE: Cell<i64> = const { Cell::new(0) };
        static PEAK: Cell<i64> = const { Cell::new(0) };
    }

    pub(crate) fn on_alloc() {
        LIVE.with(|l| {
            let v = l.get() + 1;
            l.set(v);
            PEAK.with(|p| {
                if v > p.get() {
                    p.set(v);
                }
            });
        });
    }

    pub(crate) fn on_drop() {
        LIVE.with(|l| l.set(l.get() - 1));
    }

    /// Tensors currently alive on this thread.
    pub fn live() -> i64 {
        LIVE.with(|l| l.get())
    }

    /// Highest live count observed on this thread since the last reset.
    pub fn peak() -> i64 {
        PEAK.with(|p| p.get())
    }

    /// Resets the peak to the current live count.
    pub fn reset_peak() {
        let now = live();
        PEAK.with(|p| p.set(now));
    }
}

/// A truncated tensor algebra element: one dense block per level.
#[derive(Debug)]
pub struct FreeTensor {
    spec: TruncationSpec,
    data: Vec<f64>,
}

impl FreeTensor {
    /// The all-zero element. Under the group contract (implicit scalar 1)
    /// this is the group identity; under the Lie contract it is zero.
    pub fn zeros(spec: TruncationSpec) -> Self {
        alloc_stats::on_alloc();
        FreeTensor {
            spec,
            data: vec![0.0; spec.sig_length()],
        }
    }

    pub fn from_data(spec: TruncationSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.sig_length() {
            return Err(Error::ShapeMismatch(format!(
                "tensor data length {} does not match spec length {}",
                data.len(),
                spec.sig_length()
            )));
        }
        alloc_stats::on_alloc();
        Ok(FreeTensor { spec, data })
    }

    pub fn spec(&self) -> TruncationSpec {
        self.spec
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let off = self.spec.level_offset(k);
        &self.data[off..off + self.spec.level_len(k)]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        let off = self.spec.level_offset(k);
        let len = self.spec.level_len(k);
        &mut self.data[off..off + len]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `self *= scale`, elementwise.
    pub fn scale(&mut self, scale: f64) {
        for a in self.data.iter_mut() {
            *a *= scale;
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &FreeTensor, scale: f64) {
        assert_eq!(self.spec, other.spec, "spec mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}

impl Clone for FreeTensor {
    fn clone(&self) -> Self {
        alloc_stats::on_alloc();
        FreeTensor {
            spec: self.spec,
            data: self.data.clone(),
        }
    }
}

impl Drop for FreeTensor {
    fn drop(&mut self) {
        alloc_stats::on_drop();
    }
}

impl PartialEq for FreeTensor {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.data == other.data
    }
}

/// Tensor product of a level-`i` block with a level-`j` block, written
/// into `out` (length `d^{i+j}`), accumulating with `out[wv] += a[w]*b[v]`.
fn outer_accumulate(a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), a.len() * b.len());
    for (w, &aw) in a.iter().enumerate() {
        let row = &mut out[w * b.len()..(w + 1) * b.len()];
        for (r, &bv) in row.iter_mut().zip(b) {
            *r += aw * bv;
        }
    }
}

/// Tensor product of two blocks: `out[wv] = a[w]*b[v]`.
pub fn outer_product(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() * b.len()];
    outer_accumulate(a, b, &mut out);
    out
}

/// The grouplike product. Both arguments carry the implicit scalar 1.
pub fn group_mul(a: &FreeTensor, b: &FreeTensor) -> FreeTensor {
    assert_eq!(a.spec(), b.spec(), "spec mismatch");
    let spec = a.spec();
    let mut out = FreeTensor::zeros(spec);
    for k in 1..=spec.depth() {
        let block = out.level_mut(k);
        for (r, (&x, &y)) in block.iter_mut().zip(a.level(k).iter().zip(b.level(k))) {
            *r = x + y;
        }
        for i in 1..k {
            // Re-borrow to satisfy the borrow checker: copy inputs first.
            let prod = outer_product(a.level(i), b.level(k - i));
            for (r, p) in out.level_mut(k).iter_mut().zip(prod) {
                *r += p;
            }
        }
    }
    out
}

/// Product of two elements with implicit scalar 0 (Lie contract).
pub fn nonunit_mul(a: &FreeTensor, b: &FreeTensor) -> FreeTensor {
    assert_eq!(a.spec(), b.spec(), "spec mismatch");
    let spec = a.spec();
    let mut out = FreeTensor::zeros(spec);
    for k in 2..=spec.depth() {
        for i in 1..k {
            let prod = outer_product(a.level(i), b.level(k - i));
            for (r, p) in out.level_mut(k).iter_mut().zip(prod) {
                *r += p;
            }
        }
    }
    out
}

/// `exp(z) = (z, z^{tensor 2}/2!, ..., z^{tensor N}/N!)`, a group element.
pub fn tensor_exp(z: &[f64], spec: TruncationSpec) -> FreeTensor {
    assert_eq!(z.len(), spec.channels(), "channel mismatch");
    let mut out = FreeTensor::zeros(spec);
    out.level_mut(1).copy_from_slice(z);
    for k in 2..=spec.depth() {
        let scaled: Vec<f64> = z.iter().map(|x| x / k as f64).collect();
        let prod = outer_product(out.level(k - 1), &scaled);
        out.level_mut(k).copy_from_slice(&prod);
    }
    out
}

/// Truncated logarithm of a group element: `log(1 + x)` as a power series
/// in `x = a - 1`, with everything above level N dropped. The result
/// carries the Lie contract (implicit scalar 0).
pub fn tensor_log(a: &FreeTensor) -> FreeTensor {
    let spec = a.spec();
    let n = spec.depth();
    let mut out = a.clone();
    if n == 1 {
        return out;
    }
    let mut power = a.clone(); // x^k under the nonunital product
    for k in 2..=n {
        power = nonunit_mul(&power, a);
        let coef = if k % 2 == 0 { -1.0 } else { 1.0 } / k as f64;
        out.add_scaled(&power, coef);
    }
    out
}

/// Group inverse via the truncated series `(1 + x)^{-1} = sum (-x)^k`.
pub fn group_inverse(a: &FreeTensor) -> FreeTensor {
    let spec = a.spec();
    let n = spec.depth();
    let mut out = a.clone();
    for v in out.data_mut() {
        *v = -*v;
    }
    let mut power = a.clone();
    for k in 2..=n {
        power = nonunit_mul(&power, a);
        let coef = if k % 2 == 0 { 1.0 } else { -1.0 };
        out.add_scaled(&power, coef);
    }
    out
}

/// Per-level Horner chain for `a boxtimes exp(z)`, writing into `a` and
/// tallying scalar multiplications (divisions included) into `count`.
///
/// Level `k` is assembled innermost-to-outermost as
/// `(((z/k + A_1) x z/(k-1) + A_2) x z/(k-2) + ...) x z + A_k`,
/// with the scaled increments `z/2, ..., z/N` shared across levels.
/// Levels are processed top-down so each still reads the original
/// `A_1..A_k` blocks.
pub(crate) fn fused_mul_exp_inplace_counted(a: &mut FreeTensor, z: &[f64], count: &mut u128) {
    let spec = a.spec();
    let d = spec.channels();
    let n = spec.depth();
    assert_eq!(z.len(), d, "channel mismatch");

    // scaled[j - 2] = z / j for j = 2..=N; d(N-1) multiplications.
    let scaled: Vec<Vec<f64>> = (2..=n)
        .map(|j| z.iter().map(|x| x / j as f64).collect())
        .collect();
    *count += (d * (n - 1)) as u128;
    let multiplier = |j: usize| -> &[f64] {
        if j == 1 {
            z
        } else {
            &scaled[j - 2]
        }
    };

    for k in (1..=n).rev() {
        // h = z/k + A_1  (no multiplications; z/k is precomputed, z itself for k = 1)
        let mut h: Vec<f64> = multiplier(k)
            .iter()
            .zip(a.level(1))
            .map(|(x, y)| x + y)
            .collect();
        for m in 1..k {
            let s = multiplier(k - m);
            let mut next = outer_product(&h, s);
            *count += next.len() as u128;
            for (r, &am) in next.iter_mut().zip(a.level(m + 1)) {
                *r += am;
            }
            h = next;
        }
        a.level_mut(k).copy_from_slice(&h);
    }
}

/// Fused multiply-exponentiate: `a boxtimes exp(z)` in one pass.
pub fn fused_mul_exp(a: &FreeTensor, z: &[f64]) -> FreeTensor {
    let mut out = a.clone();
    let mut count = 0u128;
    fused_mul_exp_inplace_counted(&mut out, z, &mut count);
    out
}

/// In-place variant used by the signature reductions.
pub fn fused_mul_exp_inplace(a: &mut FreeTensor, z: &[f64]) {
    let mut count = 0u128;
    fused_mul_exp_inplace_counted(a, z, &mut count);
}

/// Left-sided fused operation: `exp(z) boxtimes a`.
///
/// Level `k` is assembled as the mirror Horner chain
/// `A_k + z x (A_{k-1} + z/2 x (... + z/(k-1) x (A_1 + z/k)))`.
pub fn fused_exp_mul(z: &[f64], a: &FreeTensor) -> FreeTensor {
    let spec = a.spec();
    let d = spec.channels();
    let n = spec.depth();
    assert_eq!(z.len(), d, "channel mismatch");

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

    let mut out = a.clone();
    for k in (1..=n).rev() {
        let mut h: Vec<f64> = a
            .level(1)
            .iter()
            .zip(multiplier(k))
            .map(|(x, y)| x + y)
            .collect();
        for s in 1..k {
            let mut next = outer_product(multiplier(k - s), &h);
            for (r, &am) in next.iter_mut().zip(a.level(s + 1)) {
                *r += am;
            }
            h = next;
        }
        out.level_mut(k).copy_from_slice(&h);
    }
    out
}
