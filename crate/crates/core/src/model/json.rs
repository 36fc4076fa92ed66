//! JSON rendering of model documents. Expressions and assignment lists are
//! carried as strings in the text grammar; values are JSON numbers,
//! booleans, or `"#name"` strings for locations.

use super::{parse::ModelError, validate, CompositeSystem};

pub fn to_json(sys: &CompositeSystem) -> String {
    serde_json::to_string_pretty(sys).expect("model serializes")
}

pub fn from_json(text: &str) -> Result<CompositeSystem, ModelError> {
    let sys: CompositeSystem = serde_json::from_str(text).map_err(|e| ModelError::Json(e.to_string()))?;
    let diags = validate(&sys);
    if diags.is_empty() {
        Ok(sys)
    } else {
        Err(ModelError::Validation(diags))
    }
}

pub(crate) mod expr_str {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::expr::Expr;
    use crate::syntax::parse_expr;

    pub fn serialize<S: Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(e)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Expr, D::Error> {
        let s = String::deserialize(d)?;
        parse_expr(&s).map_err(D::Error::custom)
    }
}

pub(crate) mod assignments_str {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    use crate::expr::Assignment;
    use crate::syntax::{quote_name, Parser};

    pub fn serialize<S: Serializer>(f: &[Assignment], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<String> = f
            .iter()
            .map(|a| format!("{} := {}", quote_name(&a.target), a.source))
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Assignment>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| {
                let mut p = Parser::new(s).map_err(D::Error::custom)?;
                let a = p.assignment().map_err(D::Error::custom)?;
                if !p.at_eof() {
                    return Err(D::Error::custom(p.unexpected("end of assignment")));
                }
                Ok(a)
            })
            .collect()
    }
}

pub(crate) mod value_repr {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::expr::Value;

    pub fn serialize<S: Serializer>(v: &Value, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Value::Int(i) => s.serialize_i64(*i),
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Sym(n) => s.collect_str(&format_args!("#{n}")),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Value, D::Error> {
        let j = serde_json::Value::deserialize(d)?;
        from_json_value(&j).ok_or_else(|| D::Error::custom(format!("not a model value: {j}")))
    }

    pub fn to_json_value(v: &Value) -> serde_json::Value {
        match v {
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Bool(b) => serde_json::Value::from(*b),
            Value::Sym(n) => serde_json::Value::from(format!("#{n}")),
        }
    }

    pub fn from_json_value(j: &serde_json::Value) -> Option<Value> {
        match j {
            serde_json::Value::Bool(b) => Some(Value::Bool(*b)),
            serde_json::Value::Number(n) => n.as_i64().map(Value::Int),
            serde_json::Value::String(s) => s.strip_prefix('#').map(|n| Value::Sym(n.to_string())),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_task;

    #[test]
    fn json_round_trip() {
        let sys = builtin_task();
        let text = to_json(&sys);
        assert!(text.contains("\"guard\": \"x <= 10\""));
        assert_eq!(from_json(&text).unwrap(), sys);
    }
}
