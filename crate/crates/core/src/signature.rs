//! Signature transform over streams and batches: stream mode, basepoint,
//! initial condition, inversion, combination, and parallel reduction.

use crate::error::{Error, Result};
use crate::tensor_algebra::{
    fused_exp_mul, fused_mul_exp_inplace, group_mul, tensor_exp, FreeTensor, TruncationSpec,
};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// An `L x d` sequence of points, stored row-major.
#[derive(Debug, Clone)]
pub struct Stream {
    channels: usize,
    data: Vec<f64>,
}

impl Stream {
    pub fn new(channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidSpec);
        }
        if data.len() % channels != 0 {
            return Err(Error::ShapeMismatch(format!(
                "stream data length {} is not a multiple of {} channels",
                data.len(),
                channels
            )));
        }
        Ok(Stream { channels, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let channels = rows.first().ok_or(Error::Empty)?.len();
        let mut data = Vec::with_capacity(rows.len() * channels);
        for row in rows {
            if row.len() != channels {
                return Err(Error::ChannelMismatch {
                    expected: channels,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Stream::new(channels, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn push_rows(&mut self, rows: &[f64]) -> Result<()> {
        if rows.len() % self.channels != 0 {
            return Err(Error::ShapeMismatch(format!(
                "appended data length {} is not a multiple of {} channels",
                rows.len(),
                self.channels
            )));
        }
        self.data.extend_from_slice(rows);
        Ok(())
    }
}

/// `b` streams of identical shape.
#[derive(Debug, Clone)]
pub struct Batch {
    streams: Vec<Stream>,
}

impl Batch {
    pub fn new(streams: Vec<Stream>) -> Result<Self> {
        let first = streams.first().ok_or(Error::Empty)?;
        let (len, channels) = (first.len(), first.channels());
        for s in &streams {
            if s.channels() != channels {
                return Err(Error::ChannelMismatch {
                    expected: channels,
                    got: s.channels(),
                });
            }
            if s.len() != len {
                return Err(Error::ShapeMismatch(format!(
                    "batch streams must share length: {} vs {}",
                    len,
                    s.len()
                )));
            }
        }
        Ok(Batch { streams })
    }

    pub fn streams(&self) -> &[Stream] {
        &self.streams
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }
}

/// Optional starting point prepended to a stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Basepoint {
    #[default]
    None,
    /// Prepend the zero vector.
    Origin,
    /// Prepend an explicit point.
    Point(Vec<f64>),
}

#[derive(Debug, Clone, Default)]
pub struct SignatureOptions {
    /// Return the signatures of all expanding prefixes instead of one value.
    pub stream_mode: bool,
    pub basepoint: Basepoint,
    /// Left-multiply every returned signature by this group element.
    pub initial: Option<FreeTensor>,
    /// Return the group inverse, computed as the signature of the
    /// time-reversed stream. In stream mode this yields the inverses of
    /// the expanding prefixes.
    pub inverse: bool,
}

#[derive(Debug, Clone)]
pub enum SignatureOutput {
    Single(FreeTensor),
    Stream(Vec<FreeTensor>),
}

impl SignatureOutput {
    pub fn single(&self) -> &FreeTensor {
        match self {
            SignatureOutput::Single(t) => t,
            SignatureOutput::Stream(ts) => ts.last().expect("empty stream output"),
        }
    }

    pub fn stream(&self) -> Option<&[FreeTensor]> {
        match self {
            SignatureOutput::Stream(ts) => Some(ts),
            SignatureOutput::Single(_) => None,
        }
    }
}

/// How to spread work in `batch_signature`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Serial,
    /// Batch elements concurrently, each stream reduced serially.
    Batch,
    /// Batch elements concurrently and each stream reduced in ordered
    /// contiguous chunks that are combined left-to-right.
    BatchAndStream,
}

/// Difference vectors `x_{i+1} - x_i` of a stream.
pub fn increments(stream: &Stream) -> Result<Vec<Vec<f64>>> {
    if stream.len() < 2 {
        return Err(Error::StreamTooShort {
            needed: 2,
            got: stream.len(),
        });
    }
    Ok(increments_of_points(&points_of(stream)))
}

fn points_of(stream: &Stream) -> Vec<Vec<f64>> {
    (0..stream.len()).map(|i| stream.point(i).to_vec()).collect()
}

fn increments_of_points(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| b - a).collect())
        .collect()
}

/// Effective point sequence after basepoint prepending and optional
/// time reversal.
fn effective_points(
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
    if let Some(initial) = &options.initial {
        if initial.spec() != spec {
            return Err(Error::ShapeMismatch(
                "initial condition does not match the spec".into(),
            ));
        }
    }
    let mut points = Vec::with_capacity(stream.len() + 1);
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
    points.extend(points_of(stream));
    if points.len() < 2 {
        return Err(Error::StreamTooShort {
            needed: if options.basepoint == Basepoint::None { 2 } else { 1 },
            got: stream.len(),
        });
    }
    if options.inverse && !options.stream_mode {
        points.reverse();
    }
    Ok(points)
}

/// Serial reduction: one exponential then fused multiply-exponentiates,
/// optionally seeded with an initial group element.
fn reduce_increments(
    incs: &[Vec<f64>],
    spec: TruncationSpec,
    initial: Option<&FreeTensor>,
) -> FreeTensor {
    match initial {
        Some(init) => {
            let mut sig = init.clone();
            for z in incs {
                fused_mul_exp_inplace(&mut sig, z);
            }
            sig
        }
        None => {
            let mut sig = tensor_exp(&incs[0], spec);
            for z in &incs[1..] {
                fused_mul_exp_inplace(&mut sig, z);
            }
            sig
        }
    }
}

/// Chunk count used for stream-level parallel reduction: chunks shorter
/// than 8 increments are not split.
pub(crate) fn chunk_count(num_increments: usize, workers: usize) -> usize {
    workers.min(num_increments.div_ceil(8)).max(1)
}

/// Chunked reduction: the increments are split into `chunks` contiguous
/// pieces, each reduced independently, and the chunk signatures are
/// combined left-to-right. Equivalent to the serial reduction up to
/// floating-point reassociation.
pub fn chunked_signature(
    stream: &Stream,
    spec: TruncationSpec,
    options: &SignatureOptions,
    chunks: usize,
) -> Result<FreeTensor> {
    if options.stream_mode {
        return Err(Error::Unsupported("chunked reduction with stream mode"));
    }
    let points = effective_points(stream, spec, options)?;
    let incs = increments_of_points(&points);
    let chunks = chunks.clamp(1, incs.len());
    let chunk_len = incs.len().div_ceil(chunks);

    let pieces: Vec<&[Vec<f64>]> = incs.chunks(chunk_len).collect();
    #[cfg(feature = "parallel")]
    let partials: Vec<FreeTensor> = pieces
        .par_iter()
        .map(|piece| reduce_increments(piece, spec, None))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<FreeTensor> = pieces
        .iter()
        .map(|piece| reduce_increments(piece, spec, None))
        .collect();

    let mut acc = match &options.initial {
        Some(init) => group_mul(init, &partials[0]),
        None => partials[0].clone(),
    };
    for p in &partials[1..] {
        acc = group_mul(&acc, p);
    }
    Ok(acc)
}

/// Signature transform of a single stream.
pub fn signature(
    stream: &Stream,
    spec: TruncationSpec,
    options: &SignatureOptions,
) -> Result<SignatureOutput> {
    let points = effective_points(stream, spec, options)?;
    let incs = increments_of_points(&points);
    if !options.stream_mode {
        return Ok(SignatureOutput::Single(reduce_increments(
            &incs,
            spec,
            options.initial.as_ref(),
        )));
    }

    // Expanding prefixes. With the inverse flag we return the inverses of
    // the expanding prefixes, maintained by left-extending with negated
    // increments.
    let mut out = Vec::with_capacity(incs.len());
    if options.inverse {
        let neg = |z: &[f64]| -> Vec<f64> { z.iter().map(|x| -x).collect() };
        let mut inv = tensor_exp(&neg(&incs[0]), spec);
        out.push(apply_initial(options.initial.as_ref(), &inv));
        for z in &incs[1..] {
            inv = fused_exp_mul(&neg(z), &inv);
            out.push(apply_initial(options.initial.as_ref(), &inv));
        }
    } else {
        let mut sig = tensor_exp(&incs[0], spec);
        out.push(apply_initial(options.initial.as_ref(), &sig));
        for z in &incs[1..] {
            fused_mul_exp_inplace(&mut sig, z);
            out.push(apply_initial(options.initial.as_ref(), &sig));
        }
    }
    Ok(SignatureOutput::Stream(out))
}

fn apply_initial(initial: Option<&FreeTensor>, sig: &FreeTensor) -> FreeTensor {
    match initial {
        Some(init) => group_mul(init, sig),
        None => sig.clone(),
    }
}

/// Combine the signatures of two adjacent intervals with a single
/// grouplike product.
pub fn signature_combine(a: &FreeTensor, b: &FreeTensor) -> Result<FreeTensor> {
    if a.spec() != b.spec() {
        return Err(Error::ShapeMismatch(
            "combined signatures must share a spec".into(),
        ));
    }
    Ok(group_mul(a, b))
}

/// Left-to-right fold of `signature_combine` over a non-empty list.
pub fn multi_signature_combine(sigs: &[FreeTensor]) -> Result<FreeTensor> {
    let first = sigs.first().ok_or(Error::Empty)?;
    let mut acc = first.clone();
    for s in &sigs[1..] {
        acc = signature_combine(&acc, s)?;
    }
    Ok(acc)
}

fn available_workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Signature of every stream in a batch.
pub fn batch_signature(
    batch: &Batch,
    spec: TruncationSpec,
    options: &SignatureOptions,
    parallelism: Parallelism,
) -> Result<Vec<SignatureOutput>> {
    let per_stream = |s: &Stream| -> Result<SignatureOutput> {
        match parallelism {
            Parallelism::BatchAndStream if !options.stream_mode => {
                let n_incs = s.len().saturating_sub(1)
                    + usize::from(options.basepoint != Basepoint::None);
                let chunks = chunk_count(n_incs, available_workers());
                Ok(SignatureOutput::Single(chunked_signature(
                    s, spec, options, chunks,
                )?))
            }
            _ => signature(s, spec, options),
        }
    };

    match parallelism {
        Parallelism::Serial => batch.streams().iter().map(per_stream).collect(),
        Parallelism::Batch | Parallelism::BatchAndStream => {
            #[cfg(feature = "parallel")]
            {
                batch.streams().par_iter().map(per_stream).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                batch.streams().iter().map(per_stream).collect()
            }
        }
    }
}
