//! Readers for outcome and price files.
//!
//! Outcome files hold one value per line, either `-1`/`+1` or `0`/`1` (detected
//! from the values present), or a CSV with a named column. Price files are CSV
//! with a `price` column; other columns are ignored.

use std::io::Read;

use crate::error::{Error, Result};
use crate::model::Outcome;

/// Encoding of an outcome column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeEncoding {
    PlusMinus,
    ZeroOne,
}

/// Maps raw integer codes to `+1`/`-1`, detecting the encoding.
///
/// A column containing `-1` is read as `+1`/`-1`; one containing `0` as `0`/`1`.
/// A column of only `1`s is all heads under either reading.
pub fn decode_outcomes(raw: &[i64]) -> Result<(Vec<Outcome>, OutcomeEncoding)> {
    let has_minus = raw.contains(&-1);
    let has_zero = raw.contains(&0);
    if has_minus && has_zero {
        return Err(Error::Parse("outcomes mix -1 and 0 codes".into()));
    }
    if let Some(bad) = raw.iter().find(|v| !matches!(v, -1..=1)) {
        return Err(Error::InvalidOutcome(*bad));
    }
    let encoding = if has_zero { OutcomeEncoding::ZeroOne } else { OutcomeEncoding::PlusMinus };
    let out = raw.iter().map(|&v| if v == 1 { 1 } else { -1 }).collect();
    Ok((out, encoding))
}

fn parse_int(token: &str, line: usize) -> Result<i64> {
    let t = token.trim();
    let t = t.strip_prefix('+').unwrap_or(t);
    t.parse::<i64>()
        .or_else(|_| match t.parse::<f64>() {
            Ok(v) if v.fract() == 0.0 && v.abs() <= 1.0 => Ok(v as i64),
            _ => Err(()),
        })
        .map_err(|_| Error::Parse(format!("line {line}: cannot read outcome {token:?}")))
}

/// Reads an outcome file. With `column`, the input is CSV with a header row and
/// values are taken from that column; otherwise one value per non-empty line.
pub fn read_outcomes<R: Read>(mut reader: R, column: Option<&str>) -> Result<Vec<Outcome>> {
    let raw = match column {
        Some(name) => {
            let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
            let idx = column_index(csv.headers()?, name)?;
            let mut raw = Vec::new();
            for (i, record) in csv.records().enumerate() {
                let record = record?;
                let field = record.get(idx).unwrap_or("");
                raw.push(parse_int(field, i + 2)?);
            }
            raw
        }
        None => {
            let mut text = String::new();
            reader.read_to_string(&mut text)?;
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
                .map(|(i, l)| parse_int(l, i + 1))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(decode_outcomes(&raw)?.0)
}

/// Reads the `price` column of a CSV file.
pub fn read_prices<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let idx = column_index(csv.headers()?, "price")?;
    let mut prices = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let field = record.get(idx).unwrap_or("");
        let price = field
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("line {}: cannot read price {field:?}", i + 2)))?;
        prices.push(price);
    }
    Ok(prices)
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Parse(format!("no column named {name:?}")))
}
