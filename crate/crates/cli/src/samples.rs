//! Small argument grammars shared by several subcommands.

use crate::error::CliError;

/// Parses `linspace:a:b:k` (k points from a to b inclusive) or a
/// comma-separated list of times. The result must be finite, non-negative
/// and non-decreasing.
pub fn parse_times(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("--samples '{text}': {why}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("'{}' is not a number", s.trim())));
    let times = if let Some(rest) = text.trim().strip_prefix("linspace:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected linspace:a:b:k"));
        }
        let (a, b) = (num(parts[0])?, num(parts[1])?);
        let k: usize = parts[2].trim().parse().map_err(|_| bad("k must be a positive integer"))?;
        match k {
            0 => return Err(bad("k must be a positive integer")),
            1 => vec![a],
            _ => (0..k).map(|i| if i + 1 == k { b } else { a + (b - a) * i as f64 / (k - 1) as f64 }).collect(),
        }
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(bad("times must be finite and non-negative"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(bad("times must be non-decreasing"));
    }
    Ok(times)
}

/// Parses a per-species box such as `6,6`.
pub fn parse_box(text: &str, dim: usize) -> Result<Vec<u32>, CliError> {
    let upper = text
        .split(',')
        .map(|s| s.trim().parse::<u32>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Usage(format!("--box '{text}': expected comma-separated non-negative integers")))?;
    if upper.len() != dim {
        return Err(CliError::Usage(format!("--box '{text}': {} bounds given, the model has {dim} species", upper.len())));
    }
    Ok(upper)
}

/// Parses a set of compartment counts: comma-separated values or ranges `a-b`.
pub fn parse_counts(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("--exceptional-c '{text}': expected values like 0-3 or 1,2,5"));
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}
