//! Stream-file ingestion (CSV or JSON) and JSON output shaping.

use anyhow::{bail, Context, Result};
use pathsig::{Batch, Stream};
use serde::Deserialize;
use std::io::Read;
use std::path::Path;

#[derive(Deserialize)]
struct JsonStreams {
    streams: Vec<Vec<Vec<f64>>>,
}

fn read_source(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .context("reading stdin")?;
        Ok(buf)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

/// Parses a stream file: JSON (`{"streams": [[[...]...]...]}`) when the
/// content starts with `{`, CSV (rows = time steps, columns = channels)
/// otherwise. All batch elements must share their length and channel
/// count.
pub fn read_batch(path: &Path, csv_header: bool) -> Result<Batch> {
    let text = read_source(path)?;
    let streams = if text.trim_start().starts_with('{') {
        let parsed: JsonStreams = serde_json::from_str(&text).context("parsing JSON input")?;
        if parsed.streams.is_empty() {
            bail!("input contains no streams");
        }
        let mut streams = Vec::with_capacity(parsed.streams.len());
        for (i, rows) in parsed.streams.iter().enumerate() {
            let rows_owned: Vec<Vec<f64>> = rows.clone();
            streams.push(
                Stream::from_rows(&rows_owned)
                    .with_context(|| format!("stream {i} is not rectangular"))?,
            );
        }
        streams
    } else {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(csv_header)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.with_context(|| format!("reading CSV row {i}"))?;
            let row: Vec<f64> = record
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("parsing CSV row {i}"))?;
            rows.push(row);
        }
        if rows.is_empty() {
            bail!("input contains no rows");
        }
        vec![Stream::from_rows(&rows).context("CSV rows are not rectangular")?]
    };
    Batch::new(streams).context("batch elements do not share length and channel count")
}

/// Parses an initial-condition file: a JSON array holding the level-major
/// data of a group tensor.
pub fn read_initial(path: &Path) -> Result<Vec<f64>> {
    let text = read_source(path)?;
    serde_json::from_str(&text).context("parsing initial-condition JSON array")
}

/// The documented output envelope: a shape, the fixed layout tag, and
/// nested data arrays matching the shape.
pub fn print_output(shape: &[usize], data: serde_json::Value) -> Result<()> {
    let out = serde_json::json!({
        "shape": shape,
        "layout": "level-major word-lex",
        "data": data,
    });
    println!("{}", serde_json::to_string(&out)?);
    Ok(())
}
