//! The one-line chart answer format ("VizType: N; Xaxis: X; Yaxis: Y") and
//! the chart document served to the UI.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query_result::{QueryResult, Value};

/// Index order is part of the prompt: the names are always listed in this
/// order, so index 0 is a scatterplot.
pub const VIZ_NAMES: [&str; 4] = ["scatterplot", "bar chart", "line chart", "histogram"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VizKind {
    Scatterplot,
    BarChart,
    LineChart,
    Histogram,
}

impl VizKind {
    pub const ALL: [VizKind; 4] = [VizKind::Scatterplot, VizKind::BarChart, VizKind::LineChart, VizKind::Histogram];

    pub fn from_index(i: u32) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn index(self) -> u32 {
        Self::ALL.iter().position(|k| *k == self).expect("listed") as u32
    }

    pub fn display_name(self) -> &'static str {
        VIZ_NAMES[self.index() as usize]
    }

    pub fn needs_y(self) -> bool {
        self != VizKind::Histogram
    }
}

/// Parsed model answer. `viz_type` stays a raw index so that an out-of-range
/// value is a validation error rather than a parse error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VizSpec {
    pub viz_type: u32,
    pub x_axis: String,
    pub y_axis: Option<String>,
}

impl VizSpec {
    pub fn kind(&self) -> Option<VizKind> {
        VizKind::from_index(self.viz_type)
    }
}

impl fmt::Display for VizSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VizType: {}; Xaxis: {}", self.viz_type, self.x_axis)?;
        if let Some(y) = &self.y_axis {
            write!(f, "; Yaxis: {y}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VizError {
    #[error("viz response has no {0} field")]
    Missing(&'static str),
    #[error("VizType is not an integer: {0:?}")]
    BadIndex(String),
    #[error("VizType {0} is not one of the supported charts")]
    UnknownType(u32),
    #[error("column {0} is not in the result")]
    UnknownColumn(String),
    #[error("{kind} needs {expected} column(s)")]
    Arity { kind: &'static str, expected: usize },
}

fn field_value<'a>(segment: &'a str, key: &str) -> Option<&'a str> {
    let (k, v) = segment.split_once(':')?;
    k.trim().eq_ignore_ascii_case(key).then(|| v.trim())
}

/// Reads the first "VizType:" line-segment sequence in `text`. Text around it
/// is ignored, including anything after the last recognised field.
pub fn parse_viz_response(text: &str) -> Result<VizSpec, VizError> {
    let start = text
        .find("VizType")
        .ok_or(VizError::Missing("VizType"))?;
    let line = text[start..].lines().next().unwrap_or_default();
    let mut segments = line.split(';');

    let raw_type = field_value(segments.next().unwrap_or_default(), "VizType").ok_or(VizError::Missing("VizType"))?;
    let digits: &str = raw_type.split_whitespace().next().unwrap_or_default();
    let viz_type = digits
        .parse::<u32>()
        .map_err(|_| VizError::BadIndex(raw_type.to_string()))?;

    let x_axis = segments
        .next()
        .and_then(|s| field_value(s, "Xaxis"))
        .filter(|x| !x.is_empty())
        .ok_or(VizError::Missing("Xaxis"))?;
    let y_axis = segments
        .next()
        .and_then(|s| field_value(s, "Yaxis"))
        .filter(|y| !y.is_empty())
        .map(str::to_string);
    Ok(VizSpec {
        viz_type,
        x_axis: strip_trailing_period(x_axis).to_string(),
        y_axis: y_axis.map(|y| strip_trailing_period(&y).to_string()),
    })
}

fn strip_trailing_period(s: &str) -> &str {
    s.strip_suffix('.').unwrap_or(s).trim_end()
}

/// A spec checked against a concrete result: kind known, columns resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatedViz {
    pub kind: VizKind,
    pub x_index: usize,
    pub y_index: Option<usize>,
}

pub fn validate_viz_spec(spec: &VizSpec, result: &QueryResult) -> Result<ValidatedViz, VizError> {
    let kind = spec.kind().ok_or(VizError::UnknownType(spec.viz_type))?;
    match (kind.needs_y(), &spec.y_axis) {
        (true, None) => {
            return Err(VizError::Arity {
                kind: kind.display_name(),
                expected: 2,
            })
        }
        (false, Some(_)) => {
            return Err(VizError::Arity {
                kind: kind.display_name(),
                expected: 1,
            })
        }
        _ => {}
    }
    let find = |name: &str| {
        result
            .column_index(name)
            .ok_or_else(|| VizError::UnknownColumn(name.to_string()))
    };
    Ok(ValidatedViz {
        kind,
        x_index: find(&spec.x_axis)?,
        y_index: spec.y_axis.as_deref().map(find).transpose()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartDocument {
    pub kind: VizKind,
    pub title: String,
    pub x_label: String,
    pub y_label: Option<String>,
    pub x_values: Vec<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_values: Option<Vec<Value>>,
}

/// Pulls the chart series out of `result`, dropping rows where any plotted
/// value is null. Row order is preserved.
pub fn emit_chart_document(viz: &ValidatedViz, result: &QueryResult, question: &str) -> ChartDocument {
    let mut xs = Vec::new();
    let mut ys = viz.y_index.map(|_| Vec::new());
    for row in &result.rows {
        let x = &row[viz.x_index];
        let y = viz.y_index.map(|i| &row[i]);
        if x.is_null() || y.is_some_and(Value::is_null) {
            continue;
        }
        xs.push(x.clone());
        if let (Some(ys), Some(y)) = (ys.as_mut(), y) {
            ys.push(y.clone());
        }
    }
    ChartDocument {
        kind: viz.kind,
        title: question.trim().to_string(),
        x_label: result.columns[viz.x_index].name.clone(),
        y_label: viz.y_index.map(|i| result.columns[i].name.clone()),
        x_values: xs,
        y_values: ys,
    }
}
