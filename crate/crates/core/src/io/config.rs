//! Layered configuration: built-in defaults, then a JSON file, then
//! command-line flags. Later layers win key by key.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Overlays `top` on `base`. Objects merge recursively; nulls in `top` are
/// ignored so unset flags keep lower-layer values.
pub fn layer(base: &mut Value, top: Value) {
    match (base, top) {
        (_, Value::Null) => {}
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => layer(slot, v),
                    None => {
                        if !v.is_null() {
                            b.insert(k, v);
                        }
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// Resolves a configuration from defaults, an optional file and flag
/// overrides. Unknown keys and type mismatches are config errors.
pub fn resolve<T: Serialize + DeserializeOwned + Default>(file: Option<&Path>, flags: Value) -> Result<T> {
    let mut v = serde_json::to_value(T::default()).expect("defaults serialize");
    if let Some(p) = file {
        let s = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        let f: Value = serde_json::from_str(&s).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        if !f.is_object() {
            return Err(Error::Config(format!("{}: top level must be an object", p.display())));
        }
        layer(&mut v, f);
    }
    layer(&mut v, flags);
    serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use serde_json::json;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Cfg {
        a: f64,
        b: Inner,
    }
    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        c: u32,
        d: String,
    }
    impl Default for Cfg {
        fn default() -> Self {
            Cfg { a: 1.0, b: Inner { c: 2, d: "x".into() } }
        }
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"a": 5.0, "b": {"c": 7}}"#).unwrap();
        let c: Cfg = resolve(Some(&p), json!({"a": null, "b": {"d": "y"}})).unwrap();
        assert_eq!(c, Cfg { a: 5.0, b: Inner { c: 7, d: "y".into() } });
        let c: Cfg = resolve(Some(&p), json!({"a": 9.0})).unwrap();
        assert_eq!(c.a, 9.0);
    }

    #[test]
    fn bad_inputs_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(resolve::<Cfg>(Some(&dir.path().join("missing.json")), Value::Null), Err(Error::Config(_))));
        let p = dir.path().join("u.json");
        std::fs::write(&p, r#"{"zzz": 1}"#).unwrap();
        assert!(matches!(resolve::<Cfg>(Some(&p), Value::Null), Err(Error::Config(_))));
        std::fs::write(&p, "not json").unwrap();
        assert!(matches!(resolve::<Cfg>(Some(&p), Value::Null), Err(Error::Config(_))));
    }
}
