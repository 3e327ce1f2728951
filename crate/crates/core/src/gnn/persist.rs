//! Weights files: `{dims, head, layers, seed, task}` with matrices stored as
//! arrays of rows and every real written with 17 significant digits.

use std::path::Path;

use serde_json::{json, Value};

use super::{GnnWeights, Head};
use crate::error::{Error, Result};
use crate::graph::Task;
use crate::json::{float, to_canonical_string};
use crate::linalg::Matrix;

fn matrix_json(m: &Matrix) -> Result<Value> {
    m.iter_rows()
        .map(|row| {
            row.iter()
                .map(|x| float(*x).ok_or_else(|| Error::Weights("non-finite weight".into())))
                .collect::<Result<Vec<_>>>()
                .map(Value::Array)
        })
        .collect::<Result<Vec<_>>>()
        .map(Value::Array)
}

pub fn weights_to_json(w: &GnnWeights) -> Result<String> {
    w.validate()?;
    let layers = w.layers.iter().map(matrix_json).collect::<Result<Vec<_>>>()?;
    let head = match &w.head {
        Head::None => Value::Null,
        Head::Link(theta) => json!({
            "kind": "link",
            "theta": matrix_json(&Matrix::from_vec(theta.len(), 1, theta.clone()))?,
        }),
        Head::Graph(theta) => json!({"kind": "graph", "theta": matrix_json(theta)?}),
    };
    let value = json!({
        "dims": w.dims,
        "head": head,
        "layers": layers,
        "seed": w.seed,
        "task": w.task.to_string(),
    });
    Ok(to_canonical_string(&value))
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Weights(msg.into())
}

fn parse_matrix(v: &Value, what: &str) -> Result<Matrix> {
    let rows = v.as_array().ok_or_else(|| bad(format!("{what} is not an array of rows")))?;
    let rows = rows
        .iter()
        .map(|r| {
            r.as_array()
                .ok_or_else(|| bad(format!("{what} row is not an array")))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| bad(format!("{what} has a non-numeric entry"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows).ok_or_else(|| bad(format!("{what} is ragged")))
}

pub fn weights_from_json(text: &str) -> Result<GnnWeights> {
    let value: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| bad("top level is not an object"))?;
    for key in obj.keys() {
        if !["dims", "head", "layers", "seed", "task"].contains(&key.as_str()) {
            return Err(bad(format!("unknown field `{key}`")));
        }
    }
    let field = |k: &str| obj.get(k).ok_or_else(|| bad(format!("missing field `{k}`")));
    let dims = field("dims")?
        .as_array()
        .ok_or_else(|| bad("dims is not an array"))?
        .iter()
        .map(|d| d.as_u64().map(|d| d as usize).ok_or_else(|| bad("dims must be non-negative integers")))
        .collect::<Result<Vec<_>>>()?;
    let layers = field("layers")?
        .as_array()
        .ok_or_else(|| bad("layers is not an array"))?
        .iter()
        .enumerate()
        .map(|(t, m)| parse_matrix(m, &format!("layer {}", t + 1)))
        .collect::<Result<Vec<_>>>()?;
    let seed = field("seed")?.as_u64().ok_or_else(|| bad("seed is not an unsigned integer"))?;
    let task: Task = field("task")?
        .as_str()
        .ok_or_else(|| bad("task is not a string"))?
        .parse()
        .map_err(|_| bad("unknown task"))?;
    let head = match field("head")? {
        Value::Null => Head::None,
        Value::Object(h) => {
            let theta = parse_matrix(h.get("theta").ok_or_else(|| bad("head without theta"))?, "head")?;
            match h.get("kind").and_then(Value::as_str) {
                Some("link") if theta.cols() == 1 => Head::Link(theta.into_vec()),
                Some("graph") => Head::Graph(theta),
                _ => return Err(bad("head kind must be `link` (one column) or `graph`")),
            }
        }
        _ => return Err(bad("head must be null or an object")),
    };
    let w = GnnWeights {
        dims,
        layers,
        head,
        seed,
        task,
    };
    w.validate()?;
    Ok(w)
}

pub fn save_weights(w: &GnnWeights, path: &Path) -> Result<()> {
    std::fs::write(path, weights_to_json(w)?)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<GnnWeights> {
    weights_from_json(&std::fs::read_to_string(path)?)
}
