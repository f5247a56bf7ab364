//! Runtime parameters: `key = v1 v2 ...` lines with `#` comments, overridden
//! by `key=value` command-line arguments.

use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::index_space::IntVect;

/// Types a value can be read as.
pub trait InputValue: Sized {
    fn parse_input(s: &str) -> Option<Self>;
}

macro_rules! via_from_str {
    ($($t:ty),*) => {$(
        impl InputValue for $t {
            fn parse_input(s: &str) -> Option<Self> {
                s.parse().ok()
            }
        }
    )*};
}

via_from_str!(i32, i64, u32, u64, usize, f32, f64, String);

impl InputValue for bool {
    fn parse_input(s: &str) -> Option<Self> {
        match s {
            "true" | "1" => Some(true),
            "false" | "0" => Some(false),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InputsTable {
    entries: IndexMap<String, Vec<String>>,
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

fn split_assignment(line: &str) -> std::result::Result<(String, Vec<String>), String> {
    let (k, v) = line.split_once('=').ok_or_else(|| "expected `key = value`".to_string())?;
    let key = k.trim();
    if !valid_key(key) {
        return Err(format!("invalid key `{key}`"));
    }
    let values: Vec<String> = v.split_whitespace().map(str::to_string).collect();
    if values.is_empty() {
        return Err(format!("no value for `{key}`"));
    }
    Ok((key.to_string(), values))
}

impl InputsTable {
    pub fn new() -> InputsTable {
        InputsTable::default()
    }

    pub fn parse_str(text: &str) -> Result<InputsTable> {
        let mut t = InputsTable::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_assignment(line).map_err(|message| Error::InputsSyntax { line: n + 1, message })?;
            t.entries.insert(k, v);
        }
        Ok(t)
    }

    /// Reads `path` (if any), then applies `overrides` in order.
    pub fn read(path: Option<&Path>, overrides: &[String]) -> Result<InputsTable> {
        let mut t = match path {
            Some(p) => InputsTable::parse_str(&std::fs::read_to_string(p)?)?,
            None => InputsTable::new(),
        };
        for o in overrides {
            t.apply_override(o)?;
        }
        Ok(t)
    }

    /// Applies one `key=value ...` argument.
    pub fn apply_override(&mut self, arg: &str) -> Result<()> {
        let (k, v) =
            split_assignment(arg).map_err(|message| Error::InputsValue { key: arg.to_string(), message })?;
        self.entries.insert(k, v);
        Ok(())
    }

    pub fn set(&mut self, key: &str, values: &[&str]) {
        self.entries.insert(key.to_string(), values.iter().map(|s| s.to_string()).collect());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&[String]> {
        self.entries.get(key).map(|v| v.as_slice())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn parse_at<T: InputValue>(&self, key: &str, s: &str) -> Result<T> {
        T::parse_input(s).ok_or_else(|| Error::InputsValue {
            key: key.to_string(),
            message: format!("cannot parse `{s}` as {}", std::any::type_name::<T>()),
        })
    }

    /// Scalar value, `None` if absent.
    pub fn get<T: InputValue>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some([v]) => self.parse_at(key, v).map(Some),
            Some(v) => Err(Error::InputsValue { key: key.into(), message: format!("expected 1 value, got {}", v.len()) }),
        }
    }

    pub fn get_or<T: InputValue>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Three values, `None` if absent.
    pub fn get_triple<T: InputValue>(&self, key: &str) -> Result<Option<[T; 3]>> {
        match self.raw(key) {
            None => Ok(None),
            Some([a, b, c]) => Ok(Some([self.parse_at(key, a)?, self.parse_at(key, b)?, self.parse_at(key, c)?])),
            Some(v) => Err(Error::InputsValue { key: key.into(), message: format!("expected 3 values, got {}", v.len()) }),
        }
    }

    pub fn triple_or<T: InputValue>(&self, key: &str, default: [T; 3]) -> Result<[T; 3]> {
        Ok(self.get_triple(key)?.unwrap_or(default))
    }

    pub fn intvect_or(&self, key: &str, default: IntVect) -> Result<IntVect> {
        let [a, b, c] = self.triple_or(key, [default[0], default[1], default[2]])?;
        Ok(IntVect::new(a, b, c))
    }

    /// All values of a key.
    pub fn get_list<T: InputValue>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key).map(|v| v.iter().map(|s| self.parse_at(key, s)).collect()).transpose()
    }
}
