//! Path-tracking accessors over `serde_json::Value`, so every schema error can
//! name the exact field that failed.

use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub reason: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Violation { path: path.into(), reason: reason.into() }
    }
}

pub type Checked<T> = Result<T, Violation>;

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn join(base: &str, key: &str) -> String {
    if base.is_empty() {
        key.to_string()
    } else {
        format!("{base}.{key}")
    }
}

#[derive(Debug, Clone)]
pub struct Obj<'a> {
    pub map: &'a Map<String, Value>,
    path: String,
}

pub struct Field<'a> {
    pub value: &'a Value,
    pub path: String,
}

impl<'a> Field<'a> {
    pub fn new(value: &'a Value, path: impl Into<String>) -> Self {
        Field { value, path: path.into() }
    }

    fn type_error(&self, expected: &str) -> Violation {
        Violation::new(self.path.clone(), format!("expected {expected}, found {}", kind_name(self.value)))
    }

    pub fn str(&self) -> Checked<&'a str> {
        self.value.as_str().ok_or_else(|| self.type_error("string"))
    }

    pub fn bool(&self) -> Checked<bool> {
        self.value.as_bool().ok_or_else(|| self.type_error("boolean"))
    }

    pub fn array(&self) -> Checked<&'a [Value]> {
        self.value.as_array().map(Vec::as_slice).ok_or_else(|| self.type_error("array"))
    }

    pub fn items(&self) -> Checked<Vec<Field<'a>>> {
        Ok(self.array()?.iter().enumerate().map(|(i, v)| Field::new(v, format!("{}[{i}]", self.path))).collect())
    }

    /// An integer in `[lo, hi]`. Non-integral numbers are a type error;
    /// integral numbers outside the range are `IntError::OutOfRange`.
    pub fn int_in(&self, lo: i64, hi: i64) -> Result<i64, IntError> {
        let n = match self.value {
            Value::Number(n) => n,
            _ => return Err(IntError::Type(self.type_error("integer"))),
        };
        let v = if let Some(i) = n.as_i64() {
            i
        } else if let Some(f) = n.as_f64().filter(|f| f.fract() == 0.0 && f.is_finite()) {
            if f < i64::MIN as f64 || f > i64::MAX as f64 {
                return Err(IntError::OutOfRange { path: self.path.clone(), value: f });
            }
            f as i64
        } else if n.is_u64() {
            return Err(IntError::OutOfRange { path: self.path.clone(), value: n.as_f64().unwrap_or(f64::INFINITY) });
        } else {
            return Err(IntError::Type(self.type_error("integer")));
        };
        if v < lo || v > hi {
            return Err(IntError::OutOfRange { path: self.path.clone(), value: v as f64 });
        }
        Ok(v)
    }

    pub fn obj(&self) -> Checked<Obj<'a>> {
        self.value.as_object().map(|map| Obj { map, path: self.path.clone() }).ok_or_else(|| self.type_error("object"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IntError {
    Type(Violation),
    OutOfRange { path: String, value: f64 },
}

impl<'a> Obj<'a> {
    pub fn root(map: &'a Map<String, Value>) -> Self {
        Obj { map, path: String::new() }
    }

    pub fn get(&self, key: &str) -> Option<Field<'a>> {
        self.map.get(key).map(|v| Field::new(v, join(&self.path, key)))
    }

    pub fn req(&self, key: &str) -> Checked<Field<'a>> {
        self.get(key).ok_or_else(|| Violation::new(join(&self.path, key), "missing required field"))
    }

    /// Optional field where an explicit `null` counts as absent.
    pub fn opt(&self, key: &str) -> Option<Field<'a>> {
        self.get(key).filter(|f| !f.value.is_null())
    }

    /// Keys outside `known`, preserved for round-tripping.
    pub fn extras(&self, known: &[&str]) -> Map<String, Value> {
        self.map.iter().filter(|(k, _)| !known.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}
