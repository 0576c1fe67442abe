//! Precomputed prefix signatures supporting interval queries whose cost
//! does not grow with the stream length, plus in-place appends.
//!
//! For a stream of L points the index stores, for every prefix ending at
//! point j = 2..L, both the signature and the inverse signature of that
//! prefix. The signature over any interval is then a single grouplike
//! product of two stored tensors.
//!
//! Numerical caveat: recovering a short interval deep inside a long
//! stream multiplies two large prefix signatures that nearly cancel, so
//! precision degrades as the interval start moves late into the stream.
//! [`PathIndex::inverse_drift`] quantifies the accumulated error.

use crate::error::{Error, Result};
use crate::logsignature::{project_log_tensor, LogSigMode};
use crate::signature::{increments, Stream};
use crate::tensor_algebra::{
    fused_exp_mul, fused_mul_exp, group_mul, tensor_exp, FreeTensor, TruncationSpec,
};

/// Tally of the heavy operations performed while building and extending
/// an index: full tensor exponentials and fused one-step extensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildStats {
    pub exponentials: usize,
    pub fused_extensions: usize,
}

/// Queryable structure over a stream: prefix signatures (and optionally
/// prefix inverse signatures) for every prefix of two or more points.
///
/// Indexing is 0-based with inclusive start and end: `query_signature(i, j)`
/// is the signature of points `i..=j`. A built index is immutable from the
/// reader's perspective; [`PathIndex::update`] takes `&mut self`, so no
/// concurrent reader can observe a partially extended index.
#[derive(Debug, Clone)]
pub struct PathIndex {
    stream: Stream,
    spec: TruncationSpec,
    /// `forward[j]` = signature of points `0..=j+1`, for `j` in `0..L-1`.
    forward: Vec<FreeTensor>,
    /// `inverted[j]` = inverse of `forward[j]`; absent when built with
    /// `without_inverted` (halving memory; only `start == 0` queries work).
    inverted: Option<Vec<FreeTensor>>,
    stats: BuildStats,
}

impl PathIndex {
    /// Builds both prefix arrays with `2(L-1) - 2` fused extensions and
    /// two exponentials in total.
    pub fn new(stream: Stream, spec: TruncationSpec) -> Result<Self> {
        Self::build(stream, spec, true)
    }

    /// Builds only the forward prefix array; queries must start at 0.
    pub fn without_inverted(stream: Stream, spec: TruncationSpec) -> Result<Self> {
        Self::build(stream, spec, false)
    }

    fn build(stream: Stream, spec: TruncationSpec, with_inverted: bool) -> Result<Self> {
        if stream.channels() != spec.channels() {
            return Err(Error::ChannelMismatch {
                expected: spec.channels(),
                got: stream.channels(),
            });
        }
        if stream.len() < 2 {
            return Err(Error::StreamTooShort {
                needed: 2,
                got: stream.len(),
            });
        }
        let incs = increments(&stream)?;
        let mut stats = BuildStats::default();

        let mut forward = Vec::with_capacity(incs.len());
        forward.push(tensor_exp(&incs[0], spec));
        stats.exponentials += 1;
        for z in &incs[1..] {
            forward.push(fused_mul_exp(forward.last().unwrap(), z));
            stats.fused_extensions += 1;
        }

        let inverted = if with_inverted {
            let neg: Vec<f64> = incs[0].iter().map(|x| -x).collect();
            let mut inv = Vec::with_capacity(incs.len());
            inv.push(tensor_exp(&neg, spec));
            stats.exponentials += 1;
            for z in &incs[1..] {
                let neg: Vec<f64> = z.iter().map(|x| -x).collect();
                inv.push(fused_exp_mul(&neg, inv.last().unwrap()));
                stats.fused_extensions += 1;
            }
            Some(inv)
        } else {
            None
        };

        Ok(PathIndex {
            stream,
            spec,
            forward,
            inverted,
            stats,
        })
    }

    pub fn stream(&self) -> &Stream {
        &self.stream
    }

    pub fn spec(&self) -> TruncationSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.stream.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least two points
    }

    pub fn stats(&self) -> BuildStats {
        self.stats
    }

    fn check_interval(&self, start: usize, end: usize) -> Result<()> {
        let len = self.stream.len();
        if start >= end || end >= len {
            return Err(Error::InvalidInterval { start, end, len });
        }
        Ok(())
    }

    /// Signature of points `start..=end` (0-based, inclusive on both
    /// ends), as one product of stored tensors — constant work in L.
    pub fn query_signature(&self, start: usize, end: usize) -> Result<FreeTensor> {
        self.check_interval(start, end)?;
        if start == 0 {
            return Ok(self.forward[end - 1].clone());
        }
        let inverted = self.inverted.as_ref().ok_or(Error::Unsupported(
            "interval queries with start > 0 on an index built without inverted prefixes",
        ))?;
        Ok(group_mul(&inverted[start - 1], &self.forward[end - 1]))
    }

    /// Logsignature of points `start..=end` in the requested mode.
    pub fn query_logsignature(
        &self,
        start: usize,
        end: usize,
        mode: LogSigMode,
    ) -> Result<Vec<f64>> {
        let sig = self.query_signature(start, end)?;
        project_log_tensor(&sig, mode)
    }

    /// Appends points to the indexed stream, extending both prefix arrays
    /// by one fused operation per new point per array.
    pub fn update(&mut self, new_points: &[f64]) -> Result<()> {
        let d = self.spec.channels();
        if new_points.len() % d != 0 {
            return Err(Error::ChannelMismatch {
                expected: d,
                got: new_points.len() % d,
            });
        }
        let mut last = self.stream.point(self.stream.len() - 1).to_vec();
        self.stream.push_rows(new_points)?;
        for row in new_points.chunks(d) {
            let z: Vec<f64> = row.iter().zip(&last).map(|(b, a)| b - a).collect();
            self.forward
                .push(fused_mul_exp(self.forward.last().unwrap(), &z));
            self.stats.fused_extensions += 1;
            if let Some(inv) = self.inverted.as_mut() {
                let neg: Vec<f64> = z.iter().map(|x| -x).collect();
                inv.push(fused_exp_mul(&neg, inv.last().unwrap()));
                self.stats.fused_extensions += 1;
            }
            last = row.to_vec();
        }
        Ok(())
    }

    /// Worst-case deviation of `inverted[j] boxtimes forward[j]` from the
    /// identity, over all stored prefixes — a diagnostic for the numerical
    /// drift of long-stream queries. `None` without inverted prefixes.
    pub fn inverse_drift(&self) -> Option<f64> {
        let inverted = self.inverted.as_ref()?;
        let mut worst = 0.0f64;
        for (inv, fwd) in inverted.iter().zip(&self.forward) {
            let product = group_mul(inv, fwd);
            worst = worst.max(product.max_abs()); // identity has all-zero stored levels
        }
        Some(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::{signature, SignatureOptions, SignatureOutput};
    use crate::logsignature::{logsignature, LogSigOutput};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(d: usize, n: usize) -> TruncationSpec {
        TruncationSpec::new(d, n).unwrap()
    }

    fn random_stream(rng: &mut ChaCha8Rng, l: usize, d: usize) -> Stream {
        let data: Vec<f64> = (0..l * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Stream::new(d, data).unwrap()
    }

    fn direct_signature(stream: &Stream, lo: usize, hi: usize, s: TruncationSpec) -> FreeTensor {
        let d = stream.channels();
        let slice = Stream::new(d, stream.data()[lo * d..(hi + 1) * d].to_vec()).unwrap();
        match signature(&slice, s, &SignatureOptions::default()).unwrap() {
            SignatureOutput::Single(t) => t,
            _ => unreachable!(),
        }
    }

    #[test]
    fn two_point_index() {
        let s = spec(2, 3);
        let stream = Stream::new(2, vec![0.0, 0.0, 1.0, -2.0]).unwrap();
        let index = PathIndex::new(stream, s).unwrap();
        let q = index.query_signature(0, 1).unwrap();
        let expected = tensor_exp(&[1.0, -2.0], s);
        for (a, b) in q.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(
            index.stats(),
            BuildStats {
                exponentials: 2,
                fused_extensions: 0
            }
        );
    }

    #[test]
    fn constant_stream_is_identity() {
        let s = spec(3, 3);
        let stream = Stream::new(3, vec![0.5, -1.0, 2.0].repeat(6)).unwrap();
        let index = PathIndex::new(stream, s).unwrap();
        for end in 1..6 {
            for start in 0..end {
                let q = index.query_signature(start, end).unwrap();
                assert!(q.max_abs() < 1e-14, "({start}, {end})");
            }
        }
    }

    #[test]
    fn forward_prefixes_match_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let s = spec(3, 4);
        let stream = random_stream(&mut rng, 12, 3);
        let index = PathIndex::new(stream.clone(), s).unwrap();
        for j in 1..stream.len() {
            let q = index.query_signature(0, j).unwrap();
            let direct = direct_signature(&stream, 0, j, s);
            for (a, b) in q.data().iter().zip(direct.data()) {
                assert!((a - b).abs() < 1e-11, "prefix 0..={j}");
            }
        }
    }

    #[test]
    fn all_intervals_match_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        let s = spec(3, 4);
        let l = 20;
        let stream = random_stream(&mut rng, l, 3);
        let index = PathIndex::new(stream.clone(), s).unwrap();
        for start in 0..l {
            for end in (start + 1)..l {
                let q = index.query_signature(start, end).unwrap();
                let direct = direct_signature(&stream, start, end, s);
                for (a, b) in q.data().iter().zip(direct.data()) {
                    assert!((a - b).abs() < 1e-9, "({start}, {end}): {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn adjacent_interval_is_two_point_signature() {
        let mut rng = ChaCha8Rng::seed_from_u64(93);
        let s = spec(2, 4);
        let stream = random_stream(&mut rng, 8, 2);
        let index = PathIndex::new(stream.clone(), s).unwrap();
        for i in 0..7 {
            let z: Vec<f64> = stream
                .point(i + 1)
                .iter()
                .zip(stream.point(i))
                .map(|(b, a)| b - a)
                .collect();
            let expected = tensor_exp(&z, s);
            let q = index.query_signature(i, i + 1).unwrap();
            for (a, b) in q.data().iter().zip(expected.data()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn logsignature_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(94);
        let s = spec(2, 3);
        let stream = random_stream(&mut rng, 10, 2);
        let index = PathIndex::new(stream.clone(), s).unwrap();

        // Adjacent interval in expanded mode: one nonzero level.
        let v = index
            .query_logsignature(3, 4, LogSigMode::Expanded)
            .unwrap();
        for c in 0..2 {
            let expected = stream.point(4)[c] - stream.point(3)[c];
            assert!((v[c] - expected).abs() < 1e-10);
        }
        for &x in &v[2..] {
            assert!(x.abs() < 1e-9);
        }

        // Every mode matches the direct logsignature of the slice.
        for mode in [LogSigMode::Expanded, LogSigMode::Brackets, LogSigMode::Words] {
            let got = index.query_logsignature(2, 7, mode).unwrap();
            let slice = Stream::new(2, stream.data()[2 * 2..8 * 2].to_vec()).unwrap();
            let direct = match logsignature(&slice, s, mode, &Default::default()).unwrap() {
                LogSigOutput::Single(v) => v,
                _ => unreachable!(),
            };
            assert_eq!(got.len(), direct.len());
            for (a, b) in got.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        let w = crate::lyndon::witt_dimension(s).unwrap();
        assert_eq!(
            index
                .query_logsignature(1, 5, LogSigMode::Brackets)
                .unwrap()
                .len(),
            w
        );
    }

    #[test]
    fn interval_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(95);
        let s = spec(2, 2);
        let index = PathIndex::new(random_stream(&mut rng, 5, 2), s).unwrap();
        assert!(matches!(
            index.query_signature(3, 3),
            Err(Error::InvalidInterval { .. })
        ));
        assert!(matches!(
            index.query_signature(4, 2),
            Err(Error::InvalidInterval { .. })
        ));
        assert!(matches!(
            index.query_signature(0, 5),
            Err(Error::InvalidInterval { .. })
        ));
    }

    #[test]
    fn without_inverted_supports_prefix_queries_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(96);
        let s = spec(2, 3);
        let stream = random_stream(&mut rng, 6, 2);
        let index = PathIndex::without_inverted(stream.clone(), s).unwrap();
        assert_eq!(
            index.stats(),
            BuildStats {
                exponentials: 1,
                fused_extensions: 4
            }
        );
        let q = index.query_signature(0, 5).unwrap();
        let direct = direct_signature(&stream, 0, 5, s);
        for (a, b) in q.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-11);
        }
        assert!(matches!(
            index.query_signature(1, 5),
            Err(Error::Unsupported(_))
        ));
        assert!(index.inverse_drift().is_none());
    }

    #[test]
    fn build_cost_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let s = spec(2, 3);
        for l in [2usize, 5, 17, 60] {
            let index = PathIndex::new(random_stream(&mut rng, l, 2), s).unwrap();
            assert_eq!(
                index.stats(),
                BuildStats {
                    exponentials: 2,
                    fused_extensions: 2 * (l - 1) - 2
                },
                "L={l}"
            );
        }
    }

    #[test]
    fn update_matches_fresh_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(98);
        let s = spec(3, 3);
        let full = random_stream(&mut rng, 14, 3);
        let head = Stream::new(3, full.data()[..8 * 3].to_vec()).unwrap();
        let tail = &full.data()[8 * 3..];

        let mut updated = PathIndex::new(head, s).unwrap();
        updated.update(tail).unwrap();
        let fresh = PathIndex::new(full.clone(), s).unwrap();

        assert_eq!(updated.len(), fresh.len());
        for start in 0..full.len() {
            for end in (start + 1)..full.len() {
                let a = updated.query_signature(start, end).unwrap();
                let b = fresh.query_signature(start, end).unwrap();
                for (x, y) in a.data().iter().zip(b.data()) {
                    assert!((x - y).abs() < 1e-12, "({start}, {end})");
                }
            }
        }
        // query over the full range equals the direct signature
        let q = updated.query_signature(0, full.len() - 1).unwrap();
        let direct = direct_signature(&full, 0, full.len() - 1, s);
        for (x, y) in q.data().iter().zip(direct.data()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_update_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let s = spec(2, 3);
        let stream = random_stream(&mut rng, 6, 2);
        let mut index = PathIndex::new(stream, s).unwrap();
        let before = index.stats();
        index.update(&[]).unwrap();
        assert_eq!(index.stats(), before);
        assert_eq!(index.len(), 6);
    }

    #[test]
    fn update_rejects_ragged_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let s = spec(3, 2);
        let mut index = PathIndex::new(random_stream(&mut rng, 4, 3), s).unwrap();
        assert!(matches!(
            index.update(&[1.0, 2.0]),
            Err(Error::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn drift_is_small_at_desk_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let s = spec(2, 4);
        let index = PathIndex::new(random_stream(&mut rng, 50, 2), s).unwrap();
        let drift = index.inverse_drift().unwrap();
        assert!(drift < 1e-9, "drift {drift}");
    }
}
