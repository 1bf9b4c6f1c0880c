use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::SandboxLimits;

/// A runtime value. Text and List payloads are shared so that reading a
/// large variable (such as `prompt`) does not copy it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Text(Arc<str>),
    Int(i64),
    List(Arc<Vec<String>>),
}

impl Value {
    pub fn text(s: impl Into<Arc<str>>) -> Self {
        Value::Text(s.into())
    }

    pub fn list(items: Vec<String>) -> Self {
        Value::List(Arc::new(items))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Text(_) => "text",
            Value::Int(_) => "int",
            Value::List(_) => "list",
        }
    }

    /// Bytes charged against the environment cap.
    pub fn byte_size(&self) -> usize {
        match self {
            Value::Text(s) => s.len(),
            Value::Int(_) => 8,
            Value::List(items) => items.iter().map(String::len).sum(),
        }
    }
}

/// Text renders raw, Int in decimal, List as a JSON string array.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Int(n) => write!(f, "{n}"),
            Value::List(items) => {
                let rendered = serde_json::to_string(items.as_ref()).map_err(|_| fmt::Error)?;
                f.write_str(&rendered)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("value of {size} bytes exceeds the per-value cap of {cap} bytes")]
    ValueTooLarge { size: usize, cap: usize },
    #[error("binding `{name}` would raise the environment to {total} bytes (cap {cap})")]
    EnvironmentFull { name: String, total: usize, cap: usize },
}

/// Variable bindings that persist across executions within one session.
#[derive(Debug, Clone)]
pub struct Environment {
    bindings: BTreeMap<String, Value>,
    total_bytes: usize,
    limits: SandboxLimits,
}

impl Environment {
    /// Creates an environment holding `prompt`.
    pub fn new(prompt: &str, limits: SandboxLimits) -> Result<Self, EnvError> {
        let mut env = Self {
            bindings: BTreeMap::new(),
            total_bytes: 0,
            limits,
        };
        env.set("prompt", Value::text(prompt))?;
        Ok(env)
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings.get(name)
    }

    pub fn set(&mut self, name: &str, value: Value) -> Result<(), EnvError> {
        let size = value.byte_size();
        if matches!(value, Value::Text(_)) && size > self.limits.max_value_bytes {
            return Err(EnvError::ValueTooLarge {
                size,
                cap: self.limits.max_value_bytes,
            });
        }
        let previous = self.bindings.get(name).map_or(0, Value::byte_size);
        let total = self.total_bytes - previous + size;
        if total > self.limits.max_env_bytes {
            return Err(EnvError::EnvironmentFull {
                name: name.to_string(),
                total,
                cap: self.limits.max_env_bytes,
            });
        }
        self.total_bytes = total;
        self.bindings.insert(name.to_string(), value);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }

    pub fn total_bytes(&self) -> usize {
        self.total_bytes
    }

    pub fn limits(&self) -> &SandboxLimits {
        &self.limits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_is_bound_at_creation() {
        let env = Environment::new("hello", SandboxLimits::default()).unwrap();
        assert_eq!(env.get("prompt"), Some(&Value::text("hello")));
        assert_eq!(env.total_bytes(), 5);
    }

    #[test]
    fn rebinding_recharges_bytes() {
        let limits = SandboxLimits {
            max_env_bytes: 20,
            ..SandboxLimits::default()
        };
        let mut env = Environment::new("0123456789", limits).unwrap();
        env.set("x", Value::text("abcdefghij")).unwrap();
        assert!(matches!(
            env.set("y", Value::text("z")),
            Err(EnvError::EnvironmentFull { .. })
        ));
        env.set("x", Value::text("ab")).unwrap();
        assert_eq!(env.total_bytes(), 12);
        env.set("y", Value::text("z")).unwrap();
    }

    #[test]
    fn oversized_prompt_is_rejected() {
        let limits = SandboxLimits {
            max_value_bytes: 4,
            ..SandboxLimits::default()
        };
        assert!(Environment::new("too long", limits).is_err());
    }

    #[test]
    fn list_display_is_json() {
        let v = Value::list(vec!["a".into(), "b\"c".into()]);
        assert_eq!(v.to_string(), r#"["a","b\"c"]"#);
    }
}
