//! Validator for the small JSON-schema subset tool descriptors use: an
//! object with typed properties, `required`, numeric bounds, `minLength`
//! and `additionalProperties: false`.

use serde_json::{Map, Value};

fn type_matches(expected: &str, v: &Value) -> bool {
    match expected {
        "string" => v.is_string(),
        "integer" => v.is_i64() || v.is_u64(),
        "number" => v.is_number(),
        "boolean" => v.is_boolean(),
        "object" => v.is_object(),
        "array" => v.is_array(),
        "null" => v.is_null(),
        _ => true,
    }
}

fn check_property(name: &str, schema: &Value, v: &Value, errors: &mut Vec<String>) {
    if let Some(t) = schema.get("type").and_then(Value::as_str) {
        if !type_matches(t, v) {
            errors.push(format!("'{name}' must be of type {t}"));
            return;
        }
    }
    if let (Some(n), Some(min)) = (v.as_f64(), schema.get("minimum").and_then(Value::as_f64)) {
        if n < min {
            errors.push(format!("'{name}' must be >= {min}"));
        }
    }
    if let (Some(n), Some(max)) = (v.as_f64(), schema.get("maximum").and_then(Value::as_f64)) {
        if n > max {
            errors.push(format!("'{name}' must be <= {max}"));
        }
    }
    if let (Some(s), Some(min)) = (v.as_str(), schema.get("minLength").and_then(Value::as_u64)) {
        if (s.trim().chars().count() as u64) < min {
            errors.push(format!("'{name}' must have at least {min} non-blank character(s)"));
        }
    }
}

/// Returns every violation found; empty means valid.
pub fn validate(schema: &Value, args: &Value) -> Vec<String> {
    let mut errors = Vec::new();
    let Some(obj) = args.as_object() else {
        return vec!["arguments must be an object".into()];
    };
    let empty = Map::new();
    let props = schema.get("properties").and_then(Value::as_object).unwrap_or(&empty);
    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        for name in required.iter().filter_map(Value::as_str) {
            if !obj.contains_key(name) {
                errors.push(format!("missing required argument '{name}'"));
            }
        }
    }
    let closed = schema.get("additionalProperties") == Some(&Value::Bool(false));
    for (name, v) in obj {
        match props.get(name) {
            Some(p) => check_property(name, p, v, &mut errors),
            None if closed => errors.push(format!("unexpected argument '{name}'")),
            None => {}
        }
    }
    errors
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn schema() -> Value {
        json!({
            "type": "object",
            "properties": {
                "term": {"type": "string", "minLength": 1},
                "k": {"type": "integer", "minimum": 1, "maximum": 20},
                "flag": {"type": "boolean"}
            },
            "required": ["term"],
            "additionalProperties": false
        })
    }

    #[test]
    fn accepts_valid() {
        assert!(validate(&schema(), &json!({"term": "x", "k": 3, "flag": true})).is_empty());
    }

    #[test]
    fn reports_each_problem() {
        assert_eq!(validate(&schema(), &json!({})), ["missing required argument 'term'"]);
        assert_eq!(validate(&schema(), &json!({"term": "  "})).len(), 1);
        assert_eq!(validate(&schema(), &json!({"term": "x", "k": 2.5})).len(), 1);
        assert_eq!(validate(&schema(), &json!({"term": "x", "k": 21})).len(), 1);
        assert_eq!(validate(&schema(), &json!({"term": "x", "other": 1})).len(), 1);
        assert_eq!(validate(&schema(), &json!([1])).len(), 1);
    }
}
