//! Window temperature statistics in exact decimal arithmetic.
//!
//! Inputs are taken from their canonical decimal renderings, summed exactly,
//! and the mean is rounded half-to-even to two places. Renderings are
//! strings so that comparisons are exact.

use std::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::{self, TEMPERATURE_KEY};
use crate::windowing::{WindowError, WindowKey};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AggregateError {
    #[error("window {0} has no records")]
    EmptyWindow(String),
    #[error("temperature {0} is not representable as a decimal")]
    Unrepresentable(String),
    #[error("sum overflow")]
    Overflow,
    #[error("record has no numeric temperature: {0}")]
    MissingTemperature(String),
    #[error(transparent)]
    Window(#[from] WindowError),
}

/// Decimal value of an `f64` via its canonical rendering.
pub fn decimal_of(f: f64) -> Result<Decimal, AggregateError> {
    let text = canonical::format_number(f).ok_or_else(|| AggregateError::Unrepresentable(f.to_string()))?;
    parse_decimal(&text)
}

/// Parses a JSON number rendering, with or without exponent.
pub fn parse_decimal(text: &str) -> Result<Decimal, AggregateError> {
    let parsed = if text.contains(['e', 'E']) {
        Decimal::from_scientific(text)
    } else {
        Decimal::from_str(text)
    };
    parsed.map_err(|_| AggregateError::Unrepresentable(text.to_string()))
}

/// Reads the temperature of a canonical payload line as a decimal.
pub fn temperature_of_line(line: &str) -> Result<Decimal, AggregateError> {
    let value: Value =
        serde_json::from_str(line).map_err(|_| AggregateError::MissingTemperature(line.to_string()))?;
    match value.get(TEMPERATURE_KEY) {
        Some(Value::Number(n)) => {
            let rendered = canonical::to_canonical_json(&Value::Number(n.clone()))
                .map_err(|_| AggregateError::Unrepresentable(n.to_string()))?;
            parse_decimal(&rendered)
        }
        _ => Err(AggregateError::MissingTemperature(line.to_string())),
    }
}

/// `sum / count` rounded half-to-even at two decimal places, computed
/// exactly on the integer mantissa.
pub fn mean_half_even_2dp(sum: Decimal, count: u64) -> Result<Decimal, AggregateError> {
    if count == 0 {
        return Err(AggregateError::EmptyWindow(String::new()));
    }
    let scale = sum.scale();
    let mantissa = sum.mantissa();
    // value·100 = mantissa·100 / (10^scale · count)
    let numer = mantissa.checked_mul(100).ok_or(AggregateError::Overflow)?;
    let denom = 10i128
        .checked_pow(scale)
        .and_then(|p| p.checked_mul(count as i128))
        .ok_or(AggregateError::Overflow)?;
    let mut q = numer / denom;
    let r = numer % denom;
    let twice = r.abs() * 2;
    if twice > denom || (twice == denom && q % 2 != 0) {
        q += numer.signum();
    }
    Ok(Decimal::from_i128_with_scale(q, 2))
}

/// Statistics for one window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AggregateResult {
    /// Mean with exactly two decimals.
    pub avg: String,
    pub count: u64,
    pub max: String,
    pub min: String,
    /// Source name or region label.
    pub scope: String,
    pub window_end: String,
    pub window_id: String,
    pub window_start: String,
}

impl AggregateResult {
    pub fn to_line(&self) -> String {
        let value = serde_json::to_value(self).expect("aggregate serializes");
        canonical::to_canonical_json(&value).expect("aggregate has no floats")
    }

    pub fn avg_decimal(&self) -> Option<Decimal> {
        Decimal::from_str(&self.avg).ok()
    }
}

fn render(d: Decimal) -> String {
    d.normalize().to_string()
}

/// Computes min/max/avg over the given temperatures.
pub fn aggregate_values<I>(key: &WindowKey, temps: I) -> Result<AggregateResult, AggregateError>
where
    I: IntoIterator<Item = Decimal>,
{
    let window_id = key.window_id()?;
    let mut iter = temps.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| AggregateError::EmptyWindow(window_id.clone()))?;
    let (mut min, mut max, mut sum, mut count) = (first, first, first, 1u64);
    for t in iter {
        min = min.min(t);
        max = max.max(t);
        sum = sum.checked_add(t).ok_or(AggregateError::Overflow)?;
        count += 1;
    }
    let avg = mean_half_even_2dp(sum, count)?;
    Ok(AggregateResult {
        avg: format!("{avg:.2}"),
        count,
        max: render(max),
        min: render(min),
        scope: key.source_stream.clone(),
        window_end: key.end_iso()?,
        window_id,
        window_start: key.start_iso()?,
    })
}

/// Aggregates canonical payload lines.
pub fn aggregate_lines<'a, I>(key: &WindowKey, lines: I) -> Result<AggregateResult, AggregateError>
where
    I: IntoIterator<Item = &'a str>,
{
    let temps = lines
        .into_iter()
        .map(temperature_of_line)
        .collect::<Result<Vec<_>, _>>()?;
    aggregate_values(key, temps)
}
