//! Name-keyed factories for the interchangeable pieces of the pipeline.
//!
//! Indicators, kernels, membership schemes and model presets are all
//! selected at runtime by name (from the config file or the command line).
//! Each family registers a constructor under a stable name here; lookups
//! that miss report the full list of known names.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

type Factory<S, T> = Box<dyn Fn(&S) -> Result<T> + Send + Sync>;

/// A registry mapping names to constructors taking a spec `S` and
/// producing a `T` (usually a boxed trait object).
pub struct Registry<S, T> {
    kind: &'static str,
    entries: BTreeMap<String, Factory<S, T>>,
}

impl<S, T> Registry<S, T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register<F>(&mut self, name: &str, factory: F) -> &mut Self
    where
        F: Fn(&S) -> Result<T> + Send + Sync + 'static,
    {
        self.entries.insert(name.to_string(), Box::new(factory));
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, spec: &S) -> Result<T> {
        match self.entries.get(name) {
            Some(factory) => factory(spec),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().collect::<Vec<_>>().join(", "),
            }),
        }
    }
}

impl<S, T> fmt::Debug for Registry<S, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.entries.keys().collect::<Vec<_>>())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_lists_known_entries() {
        let mut reg: Registry<u32, u32> = Registry::new("doubler");
        reg.register("double", |x| Ok(x * 2));
        reg.register("triple", |x| Ok(x * 3));
        assert_eq!(reg.build("double", &4).unwrap(), 8);
        let err = reg.build("quad", &4).unwrap_err().to_string();
        assert!(err.contains("double, triple"), "{err}");
    }
}
