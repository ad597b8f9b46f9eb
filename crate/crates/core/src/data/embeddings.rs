use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::vocab::Vocab;

/// Reads word2vec text vectors: a `<count> <dim>` header, then one
/// `word v1 .. vd` line per entry.
pub fn load_word2vec(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_word2vec(&text, &path.display().to_string())
}

fn parse_word2vec(text: &str, source: &str) -> Result<HashMap<String, Vec<f64>>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        location: format!("{source}:{line}"),
        message,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [c, d] => (
            c.parse::<usize>()
                .map_err(|e| parse_err(1, format!("count: {e}")))?,
            d.parse::<usize>()
                .map_err(|e| parse_err(1, format!("dim: {e}")))?,
        ),
        _ => return Err(parse_err(1, "header must be `<count> <dim>`".into())),
    };
    let mut out = HashMap::with_capacity(count);
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line");
        let values = parts
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| parse_err(i + 1, format!("{v:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != dim {
            return Err(parse_err(
                i + 1,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        out.insert(word.to_string(), values);
    }
    if out.len() != count {
        log::warn!(
            "{source}: header declares {count} vectors, found {}",
            out.len()
        );
    }
    Ok(out)
}

/// Copies vectors into the rows of `word` whose tokens have one. Returns the
/// number of rows filled.
pub fn apply_pretrained(
    word: &mut Matrix,
    vocab: &Vocab,
    vectors: &HashMap<String, Vec<f64>>,
) -> Result<usize> {
    if let Some(v) = vectors.values().next() {
        if v.len() != word.cols() {
            return Err(Error::Config(format!(
                "pretrained vectors have dimension {}, model expects {}",
                v.len(),
                word.cols()
            )));
        }
    }
    let mut filled = 0;
    for (id, tok) in vocab.tokens().iter().enumerate().skip(2) {
        if let Some(v) = vectors.get(tok) {
            word.row_mut(id).copy_from_slice(v);
            filled += 1;
        }
    }
    Ok(filled)
}
