//! Categorical schema documents and domain arithmetic.
//!
//! A schema document is a JSON object mapping each variable name to
//! `{"description", "dtype", "values": {code: meaning}}`. Variable order and
//! value order follow the document and are canonical from then on.

use serde_json::{Map, Value};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("malformed schema document: {0}")]
    Malformed(String),
    #[error("variable `{name}`: {msg}")]
    Variable { name: String, msg: String },
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("schema has no variables")]
    Empty,
}

/// How codes are written in the source document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    Integer,
    String,
}

impl Dtype {
    fn parse(s: &str) -> Option<Self> {
        let s = s.to_ascii_lowercase();
        if s.starts_with("int") || s.starts_with("uint") {
            Some(Dtype::Integer)
        } else if matches!(s.as_str(), "str" | "string" | "object" | "category" | "categorical") {
            Some(Dtype::String)
        } else {
            None
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            Dtype::Integer => "int64",
            Dtype::String => "string",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableSpec {
    pub name: String,
    pub description: String,
    pub dtype: Dtype,
    /// `(code, meaning)` in canonical order.
    pub values: Vec<(String, String)>,
}

impl VariableSpec {
    pub fn new(name: &str, codes: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            description: String::new(),
            dtype: if codes.iter().all(|c| c.parse::<i64>().is_ok()) {
                Dtype::Integer
            } else {
                Dtype::String
            },
            values: codes.iter().map(|c| (c.to_string(), c.to_string())).collect(),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    pub fn code(&self, index: u32) -> &str {
        &self.values[index as usize].0
    }

    pub fn index_of(&self, code: &str) -> Option<u32> {
        self.values.iter().position(|(c, _)| c == code).map(|i| i as u32)
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.values.iter().map(|(c, _)| c.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub variables: Vec<VariableSpec>,
    pub topic: String,
}

/// Product of cardinalities; `saturated` is set when the product overflows `u128`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainSize {
    pub count: u128,
    pub saturated: bool,
}

impl Schema {
    pub fn new(variables: Vec<VariableSpec>, topic: impl Into<String>) -> Result<Self, SchemaError> {
        let schema = Self { variables, topic: topic.into() };
        schema.check()?;
        Ok(schema)
    }

    fn check(&self) -> Result<(), SchemaError> {
        if self.variables.is_empty() {
            return Err(SchemaError::Empty);
        }
        let mut seen = HashSet::new();
        for v in &self.variables {
            if !seen.insert(v.name.as_str()) {
                return Err(SchemaError::DuplicateVariable(v.name.clone()));
            }
            if v.values.is_empty() {
                return Err(SchemaError::Variable { name: v.name.clone(), msg: "empty values list".into() });
            }
            let mut codes = HashSet::new();
            for (c, _) in &v.values {
                if !codes.insert(c.as_str()) {
                    return Err(SchemaError::Variable {
                        name: v.name.clone(),
                        msg: format!("duplicate code `{c}`"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name.as_str()).collect()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.cardinality()).collect()
    }

    pub fn domain_size(&self) -> DomainSize {
        let mut count: u128 = 1;
        for v in &self.variables {
            match count.checked_mul(v.cardinality() as u128) {
                Some(c) => count = c,
                None => return DomainSize { count: u128::MAX, saturated: true },
            }
        }
        DomainSize { count, saturated: false }
    }

    /// Parse a schema document. Unknown top-level keys `"_topic"` / `"topic"`
    /// (string-valued) set the topic; every other key is a variable.
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        check_duplicate_keys(text)?;
        let root: Value = serde_json::from_str(text).map_err(|e| SchemaError::Malformed(e.to_string()))?;
        let obj = root
            .as_object()
            .ok_or_else(|| SchemaError::Malformed("top level must be an object".into()))?;
        let mut topic = String::new();
        let mut variables = Vec::new();
        for (name, body) in obj {
            if (name == "_topic" || name == "topic") && body.is_string() {
                topic = body.as_str().unwrap_or_default().to_string();
                continue;
            }
            variables.push(parse_variable(name, body)?);
        }
        Self::new(variables, topic)
    }

    pub fn to_json(&self) -> Value {
        let mut root = Map::new();
        if !self.topic.is_empty() {
            root.insert("_topic".into(), Value::String(self.topic.clone()));
        }
        for v in &self.variables {
            let mut values = Map::new();
            for (c, m) in &v.values {
                values.insert(c.clone(), Value::String(m.clone()));
            }
            let mut body = Map::new();
            body.insert("description".into(), Value::String(v.description.clone()));
            body.insert("dtype".into(), Value::String(v.dtype.as_str().into()));
            body.insert("values".into(), Value::Object(values));
            root.insert(v.name.clone(), Value::Object(body));
        }
        Value::Object(root)
    }

    /// Pretty-printed document, as embedded in prompts and written to disk.
    pub fn serialize(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("schema serializes")
    }
}

fn parse_variable(name: &str, body: &Value) -> Result<VariableSpec, SchemaError> {
    let err = |msg: &str| SchemaError::Variable { name: name.to_string(), msg: msg.to_string() };
    let body = body.as_object().ok_or_else(|| err("variable entry must be an object"))?;
    let description = match body.get("description") {
        None => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(err("description must be a string")),
    };
    let dtype = match body.get("dtype") {
        None => None,
        Some(Value::String(s)) => Some(Dtype::parse(s).ok_or_else(|| {
            err(&format!("unsupported dtype `{s}`; only categorical integer- or string-coded variables are supported"))
        })?),
        Some(_) => return Err(err("dtype must be a string")),
    };
    if body.contains_key("range") || body.contains_key("min") || body.contains_key("max") {
        return Err(err("continuous ranges are not supported; list allowed coded values instead"));
    }
    let values = match body.get("values") {
        Some(Value::Object(m)) => m
            .iter()
            .map(|(code, meaning)| {
                let meaning = match meaning {
                    Value::String(s) => s.clone(),
                    Value::Null => String::new(),
                    other => other.to_string(),
                };
                (code.clone(), meaning)
            })
            .collect::<Vec<_>>(),
        Some(Value::Array(a)) => a
            .iter()
            .map(|c| match c {
                Value::String(s) => Ok((s.clone(), s.clone())),
                Value::Number(n) => Ok((n.to_string(), n.to_string())),
                _ => Err(err("values array entries must be strings or numbers")),
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(err("values must be an object of code -> meaning")),
        None => return Err(err("missing values")),
    };
    if values.is_empty() {
        return Err(err("empty values list"));
    }
    let dtype = dtype.unwrap_or(if values.iter().all(|(c, _)| c.parse::<i64>().is_ok()) {
        Dtype::Integer
    } else {
        Dtype::String
    });
    if dtype == Dtype::Integer {
        if let Some((bad, _)) = values.iter().find(|(c, _)| c.trim().parse::<i64>().is_err()) {
            return Err(err(&format!("code `{bad}` is not an integer but dtype is integer")));
        }
    }
    Ok(VariableSpec { name: name.to_string(), description, dtype, values })
}

/// serde_json silently keeps the last duplicate key; scan top-level keys and
/// each variable's value keys ourselves so duplicates are reported.
fn check_duplicate_keys(text: &str) -> Result<(), SchemaError> {
    use serde::de::{self, Deserializer, MapAccess, Visitor};
    use std::fmt;

    struct TopKeys;
    impl<'de> Visitor<'de> for TopKeys {
        type Value = Option<String>;
        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a schema object")
        }
        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
            let mut seen = HashSet::new();
            let mut dup = None;
            while let Some(k) = map.next_key::<String>()? {
                let _: de::IgnoredAny = map.next_value()?;
                if !seen.insert(k.clone()) && dup.is_none() {
                    dup = Some(k);
                }
            }
            Ok(dup)
        }
    }
    let mut de = serde_json::Deserializer::from_str(text);
    match de.deserialize_map(TopKeys) {
        Ok(Some(dup)) => Err(SchemaError::DuplicateVariable(dup)),
        Ok(None) => Ok(()),
        Err(e) => Err(SchemaError::Malformed(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EDAD_EXCERPT: &str = r#"{
  "RELACT": {
    "description": "Main labour market activity status",
    "dtype": "int64",
    "values": {
      "1": "Employed",
      "2": "Unemployed",
      "3": "Retired",
      "4": "Student",
      "5": "Unable to work",
      "6": "Doing unpaid social work or charitable activities",
      "7": "Other inactive person"
    }
  },
  "CERTIG": {
    "description": "Degree of disability",
    "dtype": "int64",
    "values": {"1": "0-32%", "2": "33-44%", "3": "45-64%", "4": "65-74%", "5": "75% and over", "6": "Not known"}
  },
  "AUDI_7_1": {
    "description": "Has significant difficulty hearing a conversation with several people without a hearing aid",
    "dtype": "int64",
    "values": {"1": "Yes", "2": "No"}
  }
}"#;

    #[test]
    fn parses_edad_excerpt_in_document_order() {
        let s = Schema::parse(EDAD_EXCERPT).unwrap();
        assert_eq!(s.names(), vec!["RELACT", "CERTIG", "AUDI_7_1"]);
        assert_eq!(s.variables[0].cardinality(), 7);
        assert_eq!(s.variables[0].dtype, Dtype::Integer);
        assert_eq!(s.domain_size().count, 7 * 6 * 2);
    }

    #[test]
    fn minimal_schema_has_domain_one() {
        let s = Schema::parse(r#"{"X": {"description": "", "dtype": "int64", "values": {"1": "only"}}}"#).unwrap();
        assert_eq!(s.domain_size(), DomainSize { count: 1, saturated: false });
    }

    #[test]
    fn duplicate_variable_rejected() {
        let doc = r#"{"SEX": {"values": {"1": "M"}}, "SEX": {"values": {"1": "M", "2": "F"}}}"#;
        assert_eq!(Schema::parse(doc), Err(SchemaError::DuplicateVariable("SEX".into())));
    }

    #[test]
    fn empty_values_names_variable() {
        let err = Schema::parse(r#"{"A": {"values": {}}}"#).unwrap_err();
        assert!(err.to_string().contains("`A`"), "{err}");
    }

    #[test]
    fn continuous_range_rejected() {
        let err = Schema::parse(r#"{"AGE": {"dtype": "float64", "values": {"1": "x"}}}"#).unwrap_err();
        assert!(err.to_string().contains("AGE"));
        let err = Schema::parse(r#"{"AGE": {"dtype": "int64", "range": [0, 99], "values": {"1": "x"}}}"#).unwrap_err();
        assert!(err.to_string().contains("continuous"));
    }

    #[test]
    fn domain_size_products() {
        let s = Schema::new(
            vec![VariableSpec::new("A", &["1", "2", "3"]), VariableSpec::new("B", &["1", "2", "3", "4"]), VariableSpec::new("C", &["1", "2", "3", "4", "5"])],
            "",
        )
        .unwrap();
        assert_eq!(s.domain_size().count, 60);
        let b = Schema::new(vec![VariableSpec::new("B", &["0", "1"])], "").unwrap();
        assert_eq!(b.domain_size().count, 2);
        // ACS-like cardinalities from the dataset overview table.
        let cards = [2usize, 9, 6, 10, 6, 2, 9];
        assert_eq!(cards.iter().product::<usize>(), 116_640);
        let vars = cards
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let codes: Vec<String> = (0..k).map(|c| c.to_string()).collect();
                let refs: Vec<&str> = codes.iter().map(String::as_str).collect();
                VariableSpec::new(&format!("V{i}"), &refs)
            })
            .collect();
        assert_eq!(Schema::new(vars, "").unwrap().domain_size().count, 116_640);
    }

    #[test]
    fn saturates_on_huge_domain() {
        let codes: Vec<String> = (0..1000).map(|c| c.to_string()).collect();
        let refs: Vec<&str> = codes.iter().map(String::as_str).collect();
        let vars = (0..20).map(|i| VariableSpec::new(&format!("V{i}"), &refs)).collect();
        assert!(Schema::new(vars, "").unwrap().domain_size().saturated);
    }

    #[test]
    fn serialize_round_trip() {
        let mut s = Schema::parse(EDAD_EXCERPT).unwrap();
        s.topic = "disability survey".into();
        let again = Schema::parse(&s.serialize()).unwrap();
        assert_eq!(s, again);
    }
}
