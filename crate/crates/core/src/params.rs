//! Ordered, named parameter collections.

use indexmap::IndexMap;

use crate::autodiff::Value;

/// A set of named parameter tensors with stable insertion order.
///
/// The same container is used for model parameters, gradients, and optimizer
/// moments; entries are aligned by name. Order matters: gradient flattening
/// (e.g. for global-norm computations) walks entries in insertion order, so
/// two sets built the same way behave bit-identically.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: IndexMap<String, Value>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value) {
        let name = name.into();
        debug_assert!(
            !self.entries.contains_key(&name),
            "duplicate parameter {name}"
        );
        self.entries.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Value> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar elements across all entries.
    pub fn num_elements(&self) -> usize {
        self.entries.values().map(Value::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Value)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// A same-shaped set with every entry zero-filled.
    pub fn zeros_like(&self) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, value) in self.iter() {
            out.insert(name, Value::zeros(value.shape().to_vec()));
        }
        out
    }

    /// Euclidean norm over the concatenation of all entries.
    pub fn global_l2_norm(&self) -> f64 {
        self.entries
            .values()
            .map(Value::squared_norm)
            .sum::<f64>()
            .sqrt()
    }
}

impl FromIterator<(String, Value)> for ParamSet {
    fn from_iter<T: IntoIterator<Item = (String, Value)>>(iter: T) -> Self {
        let mut set = ParamSet::new();
        for (name, value) in iter {
            set.insert(name, value);
        }
        set
    }
}
