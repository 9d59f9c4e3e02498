//! Impulse-response sources: a text file with one coefficient per line, or a
//! `random:<seed>:<M>` directive.

use std::path::Path;

use satlms_core::ImpulseResponse;

use crate::error::CliError;

/// Parse one real per line. Blank lines and lines starting with `#` are skipped.
pub fn parse_coefficients(text: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| format!("line {}: not a number: {line:?}", i + 1))?;
        out.push(v);
    }
    Ok(out)
}

fn parse_random(spec: &str) -> Option<(u64, usize)> {
    let rest = spec.strip_prefix("random:")?;
    let (seed, len) = rest.split_once(':')?;
    Some((seed.trim().parse().ok()?, len.trim().parse().ok()?))
}

/// Resolve `spec` (relative paths against `base`) and normalize to
/// `(1/taps)‖g‖² = sigma_g2`.
pub fn load(spec: &str, base: &Path, taps: usize, sigma_g2: f64) -> Result<ImpulseResponse, CliError> {
    let fail = |message: String| CliError::ImpulseResponseLoad { source_name: spec.to_owned(), message };
    if spec.starts_with("random:") {
        let (seed, len) = parse_random(spec).ok_or_else(|| fail("expected random:<seed>:<M>".into()))?;
        return ImpulseResponse::random(seed, len, taps, sigma_g2).map_err(|e| fail(e.to_string()));
    }
    let path = base.join(spec);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::ImpulseResponseLoad {
        source_name: path.display().to_string(),
        message: e.to_string(),
    })?;
    let raw = parse_coefficients(&text).map_err(|m| CliError::ImpulseResponseLoad {
        source_name: path.display().to_string(),
        message: m,
    })?;
    ImpulseResponse::normalize(&raw, taps, sigma_g2).map_err(|e| CliError::ImpulseResponseLoad {
        source_name: path.display().to_string(),
        message: e.to_string(),
    })
}
