use super::{Color, Item, KnowledgeBase, Shape, Size, WorldError, NUM_BOXES};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// One (utterance, KB, label) triple.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub sentence: String,
    pub kb: KnowledgeBase,
    pub label: bool,
}

#[derive(Clone, Debug)]
pub enum CorpusFormat {
    Canonical,
    Cnlvr(AdapterConfig),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanonicalRecord {
    sentence: String,
    label: bool,
    boxes: Vec<Vec<CanonicalItem>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanonicalItem {
    color: String,
    shape: String,
    size: String,
    x: i32,
    y: i32,
}

pub fn load_corpus(path: &Path, format: &CorpusFormat) -> Result<Vec<Example>, WorldError> {
    let text = fs::read_to_string(path)?;
    match format {
        CorpusFormat::Canonical => parse_canonical(&text),
        CorpusFormat::Cnlvr(cfg) => parse_cnlvr(&text, cfg),
    }
}

/// Parses the line-oriented canonical format. Blank lines are ignored.
pub fn parse_canonical(text: &str) -> Result<Vec<Example>, WorldError> {
    let mut out = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CanonicalRecord =
            serde_json::from_str(line).map_err(|e| WorldError::Malformed {
                index,
                message: e.to_string(),
            })?;
        if rec.boxes.len() != NUM_BOXES {
            return Err(WorldError::Malformed {
                index,
                message: format!("expected {NUM_BOXES} boxes, found {}", rec.boxes.len()),
            });
        }
        let mut boxes: [Vec<Item>; NUM_BOXES] = Default::default();
        for (b, items) in rec.boxes.iter().enumerate() {
            for it in items {
                let color = Color::from_code(&it.color)
                    .ok_or_else(|| unknown(index, "color", &it.color))?;
                let shape = Shape::from_code(&it.shape)
                    .ok_or_else(|| unknown(index, "shape", &it.shape))?;
                let size =
                    Size::from_code(&it.size).ok_or_else(|| unknown(index, "size", &it.size))?;
                boxes[b].push(Item {
                    color,
                    shape,
                    size,
                    x: it.x,
                    y: it.y,
                    box_index: b,
                });
            }
        }
        let kb = KnowledgeBase::new(boxes).map_err(|e| WorldError::Malformed {
            index,
            message: e.to_string(),
        })?;
        out.push(Example {
            sentence: rec.sentence,
            kb,
            label: rec.label,
        });
    }
    Ok(out)
}

/// Serializes examples in the canonical format, one JSON object per line.
pub fn write_canonical(examples: &[Example]) -> String {
    let mut out = String::new();
    for ex in examples {
        let rec = CanonicalRecord {
            sentence: ex.sentence.clone(),
            label: ex.label,
            boxes: ex
                .kb
                .boxes()
                .iter()
                .map(|items| {
                    items
                        .iter()
                        .map(|it| CanonicalItem {
                            color: it.color.code().to_string(),
                            shape: it.shape.code().to_string(),
                            size: it.size.code().to_string(),
                            x: it.x,
                            y: it.y,
                        })
                        .collect()
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("canonical record serializes"));
        out.push('\n');
    }
    out
}

fn unknown(index: usize, field: &'static str, code: &str) -> WorldError {
    WorldError::UnknownCode {
        index,
        field,
        code: code.to_string(),
    }
}

/// Field names and value tables for reading the released structured
/// representations. Every value seen in the data must appear in a table.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub sentence_field: String,
    pub label_field: String,
    pub boxes_field: String,
    pub x_field: String,
    pub y_field: String,
    pub color_field: String,
    pub shape_field: String,
    pub size_field: String,
    pub label_values: BTreeMap<String, bool>,
    pub color_values: BTreeMap<String, String>,
    pub shape_values: BTreeMap<String, String>,
    pub size_values: BTreeMap<String, String>,
}

const DEFAULT_ADAPTER: &str = include_str!("../../data/cnlvr_adapter.toml");

impl AdapterConfig {
    pub fn from_toml(text: &str) -> Result<Self, WorldError> {
        let cfg: AdapterConfig =
            toml::from_str(text).map_err(|e| WorldError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// The shipped table for the public release.
    pub fn default_cnlvr() -> Self {
        Self::from_toml(DEFAULT_ADAPTER).expect("bundled adapter config is valid")
    }

    fn check(&self) -> Result<(), WorldError> {
        fn targets<T>(
            table: &BTreeMap<String, String>,
            what: &str,
            parse: fn(&str) -> Option<T>,
        ) -> Result<(), WorldError> {
            for (k, v) in table {
                if parse(v).is_none() {
                    return Err(WorldError::Config(format!(
                        "{what} value {k:?} maps to unknown {what} {v:?}"
                    )));
                }
            }
            Ok(())
        }
        targets(&self.color_values, "color", Color::from_code)?;
        targets(&self.shape_values, "shape", Shape::from_code)?;
        targets(&self.size_values, "size", Size::from_code)?;
        Ok(())
    }
}

/// Renders a scalar JSON value as the key used in the value tables.
fn value_key(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Parses JSON-lines records of the released dataset through `cfg`.
pub fn parse_cnlvr(text: &str, cfg: &AdapterConfig) -> Result<Vec<Example>, WorldError> {
    let mut out = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| WorldError::Malformed { index, message };
        let rec: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let field = |obj: &Value, name: &str| -> Result<Value, WorldError> {
            obj.get(name)
                .cloned()
                .ok_or_else(|| malformed(format!("missing field {name:?}")))
        };
        let sentence = match field(&rec, &cfg.sentence_field)? {
            Value::String(s) => s,
            other => return Err(malformed(format!("sentence is not a string: {other}"))),
        };
        let label_raw = field(&rec, &cfg.label_field)?;
        let label_key =
            value_key(&label_raw).ok_or_else(|| malformed("label is not scalar".into()))?;
        let label = *cfg
            .label_values
            .get(&label_key)
            .ok_or_else(|| unknown(index, "label", &label_key))?;
        let boxes_raw = field(&rec, &cfg.boxes_field)?;
        let boxes_arr = boxes_raw
            .as_array()
            .filter(|a| a.len() == NUM_BOXES)
            .ok_or_else(|| malformed(format!("expected an array of {NUM_BOXES} boxes")))?;
        let mut boxes: [Vec<Item>; NUM_BOXES] = Default::default();
        for (b, items) in boxes_arr.iter().enumerate() {
            let items = items
                .as_array()
                .ok_or_else(|| malformed(format!("box {b} is not an array")))?;
            for obj in items {
                let lookup = |name: &str, table: &BTreeMap<String, String>, what: &'static str| {
                    let raw = field(obj, name)?;
                    let key = value_key(&raw)
                        .ok_or_else(|| malformed(format!("{what} is not scalar")))?;
                    table
                        .get(&key)
                        .cloned()
                        .ok_or_else(|| unknown(index, what, &key))
                };
                let coord = |name: &str| -> Result<i32, WorldError> {
                    field(obj, name)?
                        .as_f64()
                        .map(|v| v.round() as i32)
                        .ok_or_else(|| malformed(format!("{name} is not a number")))
                };
                // The tables were validated on load, so these lookups succeed.
                let color =
                    Color::from_code(&lookup(&cfg.color_field, &cfg.color_values, "color")?)
                        .expect("validated color table");
                let shape =
                    Shape::from_code(&lookup(&cfg.shape_field, &cfg.shape_values, "shape")?)
                        .expect("validated shape table");
                let size = Size::from_code(&lookup(&cfg.size_field, &cfg.size_values, "size")?)
                    .expect("validated size table");
                boxes[b].push(Item {
                    color,
                    shape,
                    size,
                    x: coord(&cfg.x_field)?,
                    y: coord(&cfg.y_field)?,
                    box_index: b,
                });
            }
        }
        let kb = KnowledgeBase::new(boxes).map_err(|e| malformed(e.to_string()))?;
        out.push(Example {
            sentence,
            kb,
            label,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r#"{"sentence":"there is a yellow square","label":true,"boxes":[[{"color":"yellow","shape":"square","size":"small","x":0,"y":0}],[],[]]}"#;

    #[test]
    fn canonical_single_record() {
        let exs = parse_canonical(ONE).unwrap();
        assert_eq!(exs.len(), 1);
        let ex = &exs[0];
        assert!(ex.label);
        assert_eq!(ex.sentence, "there is a yellow square");
        let it = ex.kb.boxes()[0][0];
        assert_eq!(
            (it.color, it.shape, it.size, it.x, it.y, it.box_index),
            (Color::Yellow, Shape::Square, Size::Small, 0, 0, 0)
        );
        assert_eq!(ex.kb.num_items(), 1);
    }

    #[test]
    fn canonical_empty_file() {
        assert!(parse_canonical("").unwrap().is_empty());
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let text = format!("{ONE}\n{ONE}\n");
        let again = write_canonical(&parse_canonical(&text).unwrap());
        assert_eq!(again, text);
    }

    #[test]
    fn canonical_errors_name_record_and_code() {
        let bad = ONE.replace("\"yellow\"", "\"purple\"");
        let text = format!("{ONE}\n{bad}\n");
        match parse_canonical(&text) {
            Err(WorldError::UnknownCode { index, field, code }) => {
                assert_eq!((index, field, code.as_str()), (1, "color", "purple"));
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_canonical("{not json") {
            Err(WorldError::Malformed { index, .. }) => assert_eq!(index, 0),
            other => panic!("unexpected {other:?}"),
        }
        let outside = ONE.replace("\"x\":0", "\"x\":95");
        assert!(matches!(
            parse_canonical(&outside),
            Err(WorldError::Malformed { .. })
        ));
    }

    #[test]
    fn cnlvr_size_code_twenty_is_medium() {
        let cfg = AdapterConfig::default_cnlvr();
        let line = r##"{"sentence":"There is a blue circle.","label":"true","identifier":"0-0","structured_rep":[[{"y_loc":21,"size":20,"type":"circle","x_loc":27,"color":"#0099ff"}],[],[]]}"##;
        let exs = parse_cnlvr(line, &cfg).unwrap();
        let it = exs[0].kb.boxes()[0][0];
        assert_eq!(it.size, Size::Medium);
        assert_eq!(it.color, Color::Blue);
        assert_eq!((it.x, it.y), (27, 21));
        assert!(exs[0].label);
    }

    #[test]
    fn cnlvr_unmapped_value_is_an_error() {
        let cfg = AdapterConfig::default_cnlvr();
        let line = r##"{"sentence":"s","label":"false","structured_rep":[[{"y_loc":0,"size":25,"type":"circle","x_loc":0,"color":"Black"}],[],[]]}"##;
        match parse_cnlvr(line, &cfg) {
            Err(WorldError::UnknownCode { field, code, .. }) => {
                assert_eq!((field, code.as_str()), ("size", "25"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn adapter_rejects_bad_table_target() {
        let text = DEFAULT_ADAPTER.replace("= \"blue\"", "= \"teal\"");
        assert!(AdapterConfig::from_toml(&text).is_err());
    }
}
