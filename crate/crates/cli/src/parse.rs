//! Flag-value parsers for proxy lists, deterministic blocks, and spec
//! strings.

use ccep::error::{Error, Result};
use ccep::estimator::{DeterministicSpec, EstimatorSpec};
use ccep::proxy::{ProxyColumn, ProxySpec};

/// Parse a comma-separated proxy list: `const | trend[:p] | mean_x | mean_y
/// | prod:j,l`. The `prod` form carries a comma, so a bare-integer token
/// following `prod:j` is folded into it; `prod:j:l` is accepted too.
pub fn parse_proxy_list(input: &str) -> Result<ProxySpec> {
    let raw: Vec<&str> = input
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    if raw.is_empty() {
        return Err(Error::InvalidConfig("empty proxy list".to_string()));
    }
    let mut columns = Vec::new();
    let mut i = 0;
    while i < raw.len() {
        let token = raw[i];
        let column = if token == "const" {
            ProxyColumn::Intercept
        } else if token == "trend" {
            ProxyColumn::Trend { power: 1 }
        } else if let Some(p) = token.strip_prefix("trend:") {
            let power: u32 = p
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad trend power '{p}'")))?;
            ProxyColumn::Trend { power }
        } else if token == "mean_x" {
            ProxyColumn::MeanX
        } else if token == "mean_y" {
            ProxyColumn::MeanY
        } else if let Some(rest) = token.strip_prefix("prod:") {
            let (j_str, l_str) = if let Some((a, b)) = rest.split_once(':') {
                (a.to_string(), b.to_string())
            } else if i + 1 < raw.len() && raw[i + 1].chars().all(|c| c.is_ascii_digit()) {
                i += 1;
                (rest.to_string(), raw[i].to_string())
            } else {
                return Err(Error::InvalidConfig(format!(
                    "prod needs two indices, got '{token}'"
                )));
            };
            let j: usize = j_str
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad prod index '{j_str}'")))?;
            let l: usize = l_str
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad prod index '{l_str}'")))?;
            ProxyColumn::MeanProduct { indices: (j, l) }
        } else {
            return Err(Error::InvalidConfig(format!(
                "unknown proxy column '{token}' (expected const, trend[:p], mean_x, mean_y, prod:j,l)"
            )));
        };
        columns.push(column);
        i += 1;
    }
    Ok(ProxySpec::new(columns))
}

/// Parse a deterministic-block flag: `time_dummies | trend[:p] | file:path`
/// (the file is a headerless CSV with T rows and r numeric columns).
pub fn parse_det_spec(input: &str) -> Result<DeterministicSpec> {
    let input = input.trim();
    if input == "time_dummies" {
        return Ok(DeterministicSpec::TimeDummies);
    }
    if input == "trend" {
        return Ok(DeterministicSpec::Trend { degree: 1 });
    }
    if let Some(p) = input.strip_prefix("trend:") {
        let degree: u32 = p
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad trend degree '{p}'")))?;
        return Ok(DeterministicSpec::Trend { degree });
    }
    if let Some(path) = input.strip_prefix("file:") {
        let content = std::fs::read_to_string(path)?;
        let mut values = Vec::new();
        for (ln, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let row = row.map_err(|_| {
                Error::InvalidConfig(format!("non-numeric value on line {} of {path}", ln + 1))
            })?;
            values.push(row);
        }
        if values.is_empty() {
            return Err(Error::InvalidConfig(format!("empty deterministic file {path}")));
        }
        return Ok(DeterministicSpec::Explicit { values });
    }
    Err(Error::InvalidConfig(format!(
        "unknown deterministic spec '{input}' (expected time_dummies, trend[:p], file:path)"
    )))
}

/// Parse one `--spec` value for the compare subcommand:
/// `[label=]proxy_list[@det_spec]`.
pub fn parse_compare_spec(input: &str) -> Result<(String, EstimatorSpec)> {
    let (label, rest) = match input.split_once('=') {
        Some((l, r)) if !l.contains(',') && !l.contains('@') => (l.trim().to_string(), r),
        _ => (input.trim().to_string(), input),
    };
    let (proxy_part, det_part) = match rest.split_once('@') {
        Some((p, d)) => (p, Some(d)),
        None => (rest, None),
    };
    let proxy = parse_proxy_list(proxy_part)?;
    let deterministic = det_part.map(parse_det_spec).transpose()?;
    Ok((
        label,
        EstimatorSpec {
            proxy,
            deterministic,
        },
    ))
}

/// Split a comma-separated list of names.
pub fn parse_name_list(input: &str) -> Vec<String> {
    input
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}
