use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MultivariateSeries;
use crate::error::{Error, Result};

/// Header directives of a `.ts` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TsHeader {
    pub problem_name: Option<String>,
    pub timestamps: bool,
    pub missing: bool,
    pub univariate: Option<bool>,
    pub dimensions: Option<usize>,
    pub equal_length: Option<bool>,
    pub series_length: Option<usize>,
    pub class_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTs {
    pub header: TsHeader,
    /// Labels are indices into `header.class_labels`.
    pub samples: Vec<MultivariateSeries>,
}

impl ParsedTs {
    pub fn dimensions(&self) -> usize {
        self.samples
            .first()
            .map(MultivariateSeries::dims)
            .or(self.header.dimensions)
            .unwrap_or(1)
    }

    pub fn series_length(&self) -> usize {
        self.samples
            .first()
            .map(MultivariateSeries::len)
            .or(self.header.series_length)
            .unwrap_or(0)
    }

    pub fn raw_label(&self, sample: usize) -> &str {
        &self.header.class_labels[self.samples[sample].label]
    }
}

pub fn parse_ts_file(path: &Path) -> Result<ParsedTs> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::DatasetNotFound(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    parse_ts_str(&text)
}

fn parse_bool(directive: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::MalformedHeader(format!(
            "@{directive} expects true/false, got {value:?}"
        ))),
    }
}

fn parse_count(directive: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::MalformedHeader(format!(
                "@{directive} expects a positive integer, got {value:?}"
            ))
        })
}

fn header_line(header: &mut TsHeader, saw_class_label: &mut bool, line: &str) -> Result<()> {
    let body = &line[1..];
    let (directive, rest) = match body.find(char::is_whitespace) {
        Some(i) => (&body[..i], body[i..].trim()),
        None => (body, ""),
    };
    let key = directive.to_ascii_lowercase();
    match key.as_str() {
        "problemname" => header.problem_name = Some(rest.to_string()),
        "timestamps" => {
            header.timestamps = parse_bool(directive, rest)?;
            if header.timestamps {
                return Err(Error::Unsupported("time-stamped series".into()));
            }
        }
        "missing" => header.missing = parse_bool(directive, rest)?,
        "univariate" => header.univariate = Some(parse_bool(directive, rest)?),
        "dimensions" | "dimension" => header.dimensions = Some(parse_count(directive, rest)?),
        "equallength" => {
            let eq = parse_bool(directive, rest)?;
            if !eq {
                return Err(Error::Unsupported("unequal-length series".into()));
            }
            header.equal_length = Some(eq);
        }
        "serieslength" => header.series_length = Some(parse_count(directive, rest)?),
        "classlabel" => {
            let mut parts = rest.split_whitespace();
            let flag = parts
                .next()
                .ok_or_else(|| Error::MalformedHeader("@classLabel without value".into()))?;
            if !parse_bool(directive, flag)? {
                return Err(Error::MalformedHeader(
                    "@classLabel false: only classification problems are supported".into(),
                ));
            }
            header.class_labels = parts.map(str::to_string).collect();
            if header.class_labels.is_empty() {
                return Err(Error::MalformedHeader(
                    "@classLabel true without labels".into(),
                ));
            }
            *saw_class_label = true;
        }
        other => tracing::debug!(directive = other, "ignoring unknown header directive"),
    }
    Ok(())
}

/// Parses the text of a `.ts` file.
pub fn parse_ts_str(text: &str) -> Result<ParsedTs> {
    let mut header = TsHeader::default();
    let mut saw_class_label = false;
    let mut in_data = false;
    let mut samples = Vec::new();
    let mut expected_dims = None;
    let mut expected_len = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_data {
            if !line.starts_with('@') {
                return Err(Error::MalformedHeader(format!(
                    "line {lineno}: data before @data"
                )));
            }
            if line[1..].eq_ignore_ascii_case("data") {
                if !saw_class_label {
                    return Err(Error::MalformedHeader("missing @classLabel".into()));
                }
                in_data = true;
                expected_dims = match (header.dimensions, header.univariate) {
                    (Some(d), _) => Some(d),
                    (None, Some(true)) => Some(1),
                    _ => None,
                };
                expected_len = header.series_length;
                continue;
            }
            header_line(&mut header, &mut saw_class_label, line)?;
            continue;
        }

        let sample = data_line(&header, line, lineno)?;
        let dims = *expected_dims.get_or_insert(sample.dims());
        if sample.dims() != dims {
            return Err(Error::RaggedSample {
                line: lineno,
                detail: format!("expected {dims} dimensions, found {}", sample.dims()),
            });
        }
        let len = *expected_len.get_or_insert(sample.len());
        if sample.len() != len {
            return Err(Error::RaggedSample {
                line: lineno,
                detail: format!("expected series length {len}, found {}", sample.len()),
            });
        }
        samples.push(sample);
    }

    if !in_data {
        return Err(Error::MalformedHeader("missing @data".into()));
    }
    Ok(ParsedTs { header, samples })
}

fn data_line(header: &TsHeader, line: &str, lineno: usize) -> Result<MultivariateSeries> {
    let (series, label) = line.rsplit_once(':').ok_or_else(|| Error::RaggedSample {
        line: lineno,
        detail: "no class label separator".into(),
    })?;
    let label = label.trim();
    let label_idx = header
        .class_labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::UnknownLabel {
            line: lineno,
            label: label.to_string(),
        })?;

    let mut channels = Vec::new();
    for dim in series.split(':') {
        let mut values = Vec::new();
        for tok in dim.split(',') {
            let tok = tok.trim();
            if tok == "?" {
                return Err(Error::MissingValue { line: lineno });
            }
            if tok.starts_with('(') {
                return Err(Error::Unsupported("time-stamped series".into()));
            }
            let v: f64 = tok.parse().map_err(|_| Error::NonNumericValue {
                line: lineno,
                value: tok.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericValue {
                    line: lineno,
                    value: tok.to_string(),
                });
            }
            values.push(v);
        }
        channels.push(values);
    }
    let n = channels[0].len();
    if let Some(bad) = channels.iter().position(|c| c.len() != n) {
        return Err(Error::RaggedSample {
            line: lineno,
            detail: format!(
                "dimension 0 has {n} values, dimension {bad} has {}",
                channels[bad].len()
            ),
        });
    }
    Ok(MultivariateSeries::new(channels, label_idx))
}
