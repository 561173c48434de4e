//! Plain-text feature files, one per domain:
//!
//! ```text
//! #fuda-features v1 domain=<id> classes=<C> dim=<d>
//! <label-or-dash>,<f0>,...,<f{d-1}>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::DomainDataset;
use crate::error::{FudaError, Result};
use crate::nn::Matrix;

const MAGIC: &str = "#fuda-features";
const VERSION: &str = "v1";

pub fn save_feature_file(ds: &DomainDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_rows(ds.domain_id(), ds.num_classes(), ds.features(), ds.labels())?;
    fs::write(path, text).map_err(|e| FudaError::io(path, e))
}

/// Dump probability rows (one per sample, width C) in feature-file layout
/// with every label set to `-`.
pub fn save_probability_rows(domain_id: &str, probs: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_rows(domain_id, probs.cols(), probs, None)?;
    fs::write(path, text).map_err(|e| FudaError::io(path, e))
}

fn render_rows(domain_id: &str, classes: usize, features: &Matrix, labels: Option<&[usize]>) -> Result<String> {
    if domain_id.is_empty() || domain_id.chars().any(char::is_whitespace) {
        return Err(FudaError::invalid(format!(
            "domain id {domain_id:?} must be non-empty without whitespace"
        )));
    }
    let mut out = format!(
        "{MAGIC} {VERSION} domain={domain_id} classes={classes} dim={}\n",
        features.cols()
    );
    for (i, row) in features.iter_rows().enumerate() {
        match labels {
            Some(l) => write!(out, "{}", l[i]).unwrap(),
            None => out.push('-'),
        }
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn load_feature_file(path: impl AsRef<Path>) -> Result<DomainDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FudaError::io(path, e))?;
    parse_feature_text(&text, path)
}

pub fn parse_feature_text(text: &str, path: &Path) -> Result<DomainDataset> {
    let err = |line: usize, message: String| FudaError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let (domain_id, classes, dim) = parse_header(header).map_err(|m| err(1, m))?;

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut labeled: Option<bool> = None;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label_field = fields.next().unwrap_or("").trim();
        let label = if label_field == "-" {
            None
        } else {
            let y: usize = label_field.parse().map_err(|_| {
                err(
                    line_no,
                    format!("row label {label_field:?} is neither an integer nor '-'"),
                )
            })?;
            if y >= classes {
                return Err(err(line_no, format!("label {y} >= classes={classes}")));
            }
            Some(y)
        };
        match (labeled, label.is_some()) {
            (None, l) => labeled = Some(l),
            (Some(a), b) if a != b => {
                return Err(err(line_no, "rows mix labeled and unlabeled samples".into()));
            }
            _ => {}
        }
        let start = data.len();
        for field in fields {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| err(line_no, format!("bad feature value {field:?}")))?;
            if !v.is_finite() {
                return Err(err(line_no, format!("non-finite feature value {field:?}")));
            }
            data.push(v);
        }
        let got = data.len() - start;
        if got != dim {
            return Err(err(line_no, format!("row has {got} features, header says dim={dim}")));
        }
        if let Some(y) = label {
            labels.push(y);
        }
    }
    let n = data.len() / dim;
    if n == 0 {
        return Err(err(1, "file contains no samples".into()));
    }
    let features = Matrix::from_vec(n, dim, data)?;
    let labels = if labeled == Some(true) { Some(labels) } else { None };
    DomainDataset::new(domain_id, features, labels, classes).map_err(|e| err(1, e.to_string()))
}

fn parse_header(header: &str) -> std::result::Result<(String, usize, usize), String> {
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(format!("header must start with {MAGIC}"));
    }
    match parts.next() {
        Some(VERSION) => {}
        other => return Err(format!("unsupported format version {other:?}")),
    }
    let (mut domain, mut classes, mut dim) = (None, None, None);
    for part in parts {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("malformed header field {part:?}"))?;
        match key {
            "domain" => domain = Some(value.to_string()),
            "classes" => classes = Some(value.parse::<usize>().map_err(|_| format!("bad classes={value}"))?),
            "dim" => dim = Some(value.parse::<usize>().map_err(|_| format!("bad dim={value}"))?),
            _ => return Err(format!("unknown header field {key:?}")),
        }
    }
    let domain = domain.filter(|d| !d.is_empty()).ok_or("header is missing domain=")?;
    let classes = classes.ok_or("header is missing classes=")?;
    let dim = dim.filter(|&d| d > 0).ok_or("header is missing a positive dim=")?;
    Ok((domain, classes, dim))
}
