//! JSON schema `mmm-space/v1`.
//!
//! ```json
//! {"schema": "mmm-space/v1", "label": "A",
//!  "mark_space": {"kind": "discrete", "labels": ["0", "1"]},
//!  "weights": [0.5, 0.5], "marks": ["0", "1"], "distances": [1.0]}
//! ```
//!
//! `distances` is the strict upper triangle in row-major order. Discrete
//! marks are label strings, Euclidean marks are coordinate arrays. The
//! writer prints every real with 17 significant digits.

use serde::Deserialize;
use serde_json::Value;

use crate::matrix::Matrix;
use crate::numeric::fmt_g17;
use crate::space::{FiniteMmmSpace, Mark, MarkSpace};
use crate::{Error, Result};

pub const SPACE_SCHEMA: &str = "mmm-space/v1";

#[derive(Deserialize)]
struct SpaceFile {
    #[serde(default)]
    schema: Option<String>,
    #[serde(default)]
    label: Option<String>,
    mark_space: MarkSpace,
    weights: Vec<f64>,
    marks: Vec<Value>,
    distances: Vec<f64>,
}

pub fn mark_to_json(mark: &Mark, mark_space: &MarkSpace) -> Value {
    match mark {
        Mark::Label(i) => match mark_space.label_name(mark) {
            Some(name) => Value::String(name.to_string()),
            None => Value::from(*i),
        },
        Mark::Point(p) => Value::Array(p.iter().map(|&x| Value::from(x)).collect()),
    }
}

pub fn mark_from_json(v: &Value, mark_space: &MarkSpace, index: usize) -> Result<Mark> {
    let bad = |detail: String| Error::InvalidMark { index, detail };
    match mark_space {
        MarkSpace::Discrete { .. } => {
            let name = match v {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                other => return Err(bad(format!("expected a label, got {other}"))),
            };
            mark_space
                .label_index(&name)
                .ok_or_else(|| bad(format!("unknown label {name:?}")))
        }
        MarkSpace::Euclidean { dim } => {
            let arr = v
                .as_array()
                .ok_or_else(|| bad(format!("expected a coordinate array, got {v}")))?;
            let p = arr
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| bad(format!("non-numeric coordinate {x}"))))
                .collect::<Result<Vec<f64>>>()?;
            if p.len() != *dim {
                return Err(bad(format!("point of dimension {} in R^{dim}", p.len())));
            }
            Ok(Mark::Point(p))
        }
    }
}

/// Parses a space file. Shapes and marks are checked; metric invariants
/// are left to [`crate::space::validate`].
pub fn space_from_json(text: &str) -> Result<FiniteMmmSpace> {
    let file: SpaceFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some(schema) = &file.schema {
        if schema != SPACE_SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported schema {schema:?}, expected {SPACE_SCHEMA:?}"
            )));
        }
    }
    let n = file.weights.len();
    let distances = Matrix::from_upper(n, &file.distances)?;
    if file.marks.len() != n {
        return Err(Error::LengthMismatch {
            what: "marks",
            expected: n,
            got: file.marks.len(),
        });
    }
    let marks = file
        .marks
        .iter()
        .enumerate()
        .map(|(i, v)| mark_from_json(v, &file.mark_space, i))
        .collect::<Result<Vec<_>>>()?;
    let space = FiniteMmmSpace::new(distances, marks, file.weights, file.mark_space)?;
    Ok(match file.label {
        Some(l) => space.with_label(l),
        None => space,
    })
}

fn num_list(xs: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = xs.into_iter().map(fmt_g17).collect();
    format!("[{}]", parts.join(", "))
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

pub fn space_to_json(space: &FiniteMmmSpace) -> String {
    let ms = space.mark_space();
    let mark_space = match ms {
        MarkSpace::Discrete { labels } => {
            let ls: Vec<String> = labels.iter().map(|l| json_str(l)).collect();
            format!("{{\"kind\": \"discrete\", \"labels\": [{}]}}", ls.join(", "))
        }
        MarkSpace::Euclidean { dim } => format!("{{\"kind\": \"euclidean\", \"dim\": {dim}}}"),
    };
    let marks: Vec<String> = space
        .marks()
        .iter()
        .map(|m| match m {
            Mark::Label(_) => match ms.label_name(m) {
                Some(name) => json_str(name),
                None => "null".to_string(),
            },
            Mark::Point(p) => num_list(p.iter().copied()),
        })
        .collect();
    let label = match space.label() {
        Some(l) => json_str(l),
        None => "null".to_string(),
    };
    format!(
        "{{\n  \"schema\": \"{SPACE_SCHEMA}\",\n  \"label\": {label},\n  \"mark_space\": {mark_space},\n  \"weights\": {},\n  \"marks\": [{}],\n  \"distances\": {}\n}}\n",
        num_list(space.weights().iter().copied()),
        marks.join(", "),
        num_list(space.distances().upper()),
    )
}
