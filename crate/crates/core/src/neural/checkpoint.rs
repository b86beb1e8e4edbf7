use super::{Mat, NeuralError, Params, Vocab};
use std::collections::HashMap;

const MAGIC: &str = "absparse-checkpoint";
const VERSION: u32 = 1;

/// Text dump of named tensors with metadata and the utterance vocabulary.
/// Numbers are written in shortest round-trip form, so loading reproduces
/// the saved values exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub vocab: Vec<String>,
    pub tensors: Vec<(String, Mat)>,
}

impl Checkpoint {
    pub fn new<P: Params>(
        kind: &str,
        params: &P,
        vocab: &Vocab,
        meta: Vec<(String, String)>,
    ) -> Self {
        Checkpoint {
            kind: kind.to_string(),
            meta,
            vocab: vocab.tokens().to_vec(),
            tensors: params
                .tensors()
                .into_iter()
                .map(|(n, m)| (n.to_string(), m.clone()))
                .collect(),
        }
    }

    pub fn meta_map(&self) -> HashMap<String, String> {
        self.meta.iter().cloned().collect()
    }

    pub fn vocab(&self) -> Vocab {
        Vocab::new(self.vocab.iter().skip(1))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION} {}\n", self.kind);
        for (k, v) in &self.meta {
            out.push_str(&format!("meta {k} {v}\n"));
        }
        out.push_str(&format!("vocab {}\n", self.vocab.len()));
        for w in &self.vocab {
            out.push_str(w);
            out.push('\n');
        }
        for (name, m) in &self.tensors {
            out.push_str(&format!("tensor {name} {} {}\n", m.rows, m.cols));
            for r in 0..m.rows {
                let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, NeuralError> {
        let mut lines = text.lines().enumerate().peekable();
        let err = |line: usize, message: String| NeuralError::Checkpoint {
            line: line + 1,
            message,
        };
        let (i, header) = lines.next().ok_or_else(|| err(0, "empty file".into()))?;
        let parts: Vec<&str> = header.split(' ').collect();
        if parts.len() != 3 || parts[0] != MAGIC {
            return Err(err(i, "not a checkpoint".into()));
        }
        if parts[1] != VERSION.to_string() {
            return Err(err(i, format!("unsupported version {}", parts[1])));
        }
        let mut ck = Checkpoint {
            kind: parts[2].to_string(),
            meta: Vec::new(),
            vocab: Vec::new(),
            tensors: Vec::new(),
        };
        while let Some((i, line)) = lines.next() {
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest
                    .split_once(' ')
                    .ok_or_else(|| err(i, "meta without value".into()))?;
                ck.meta.push((k.to_string(), v.to_string()));
            } else if let Some(n) = line.strip_prefix("vocab ") {
                let n: usize = n.parse().map_err(|_| err(i, "bad vocab size".into()))?;
                for _ in 0..n {
                    let (_, w) = lines
                        .next()
                        .ok_or_else(|| err(i, "truncated vocab".into()))?;
                    ck.vocab.push(w.to_string());
                }
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let f: Vec<&str> = rest.split(' ').collect();
                let [name, rows, cols] = f[..] else {
                    return Err(err(i, "bad tensor header".into()));
                };
                let rows: usize = rows.parse().map_err(|_| err(i, "bad rows".into()))?;
                let cols: usize = cols.parse().map_err(|_| err(i, "bad cols".into()))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (j, row) = lines
                        .next()
                        .ok_or_else(|| err(i, "truncated tensor".into()))?;
                    let vals = row
                        .split(' ')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| err(j, e.to_string()))?;
                    if vals.len() != cols {
                        return Err(err(
                            j,
                            format!("expected {cols} values, found {}", vals.len()),
                        ));
                    }
                    data.extend(vals);
                }
                ck.tensors
                    .push((name.to_string(), Mat { rows, cols, data }));
            } else if !line.trim().is_empty() {
                return Err(err(i, format!("unexpected line {line:?}")));
            }
        }
        Ok(ck)
    }
}

/// Copies named tensors into `params`, checking names and shapes.
pub(crate) fn assign<P: Params>(
    params: &mut P,
    tensors: Vec<(String, Mat)>,
) -> Result<(), NeuralError> {
    let mut by_name: HashMap<String, Mat> = tensors.into_iter().collect();
    for (name, m) in params.tensors_mut() {
        let src = by_name
            .remove(name)
            .ok_or_else(|| NeuralError::Checkpoint {
                line: 0,
                message: format!("missing tensor {name}"),
            })?;
        if (src.rows, src.cols) != (m.rows, m.cols) {
            return Err(NeuralError::Checkpoint {
                line: 0,
                message: format!(
                    "{name} is {}×{}, expected {}×{}",
                    src.rows, src.cols, m.rows, m.cols
                ),
            });
        }
        *m = src;
    }
    if let Some(extra) = by_name.keys().next() {
        return Err(NeuralError::Checkpoint {
            line: 0,
            message: format!("unexpected tensor {extra}"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{Dims, Parser, Reranker};
    use super::*;

    #[test]
    fn exact_round_trip() {
        let vocab = Vocab::new(["a", "b c", "yellow"]);
        let p = Parser::new(Dims::default(), vocab.len(), 5);
        let ck = Checkpoint::new("parser", &p, &vocab, Dims::default().to_meta());
        let text = ck.to_text();
        let back = Checkpoint::parse(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.vocab(), vocab);
        let dims = Dims::from_meta(&back.meta_map()).unwrap();
        let q = Parser::from_tensors(dims, back.tensors).unwrap();
        assert_eq!(q, p);

        let r = Reranker::new(Dims::default(), vocab.len(), 6);
        let ck = Checkpoint::new("reranker", &r, &vocab, Dims::default().to_meta());
        let back = Checkpoint::parse(&ck.to_text()).unwrap();
        assert_eq!(
            Reranker::from_tensors(Dims::default(), back.tensors).unwrap(),
            r
        );
    }

    #[test]
    fn rejects_damage() {
        let vocab = Vocab::new(["a"]);
        let p = Parser::new(Dims::default(), vocab.len(), 5);
        let text = Checkpoint::new("parser", &p, &vocab, vec![]).to_text();
        assert!(Checkpoint::parse("hello").is_err());
        assert!(
            Checkpoint::parse(&text.replace("absparse-checkpoint 1", "absparse-checkpoint 9"))
                .is_err()
        );
        let truncated: String = text.lines().take(20).collect::<Vec<_>>().join("\n");
        assert!(Checkpoint::parse(&truncated).is_err());
        let mut ck = Checkpoint::parse(&text).unwrap();
        ck.tensors.pop();
        assert!(Parser::from_tensors(Dims::default(), ck.tensors).is_err());
    }
}
