use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

/// A named, contiguous slice of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub range: Range<usize>,
}

/// Flat parameter array with named, disjoint groups that cover it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector {
    values: Vec<f64>,
    groups: Vec<ParamGroup>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(name: &str, values: Vec<f64>) -> Self {
        let mut p = Self::new();
        p.push(name, &values);
        p
    }

    /// Appends a group. Panics if the name is already taken.
    pub fn push(&mut self, name: &str, values: &[f64]) -> &mut Self {
        assert!(
            self.group(name).is_none(),
            "duplicate parameter group {name:?}"
        );
        let start = self.values.len();
        self.values.extend_from_slice(values);
        self.groups.push(ParamGroup {
            name: name.into(),
            range: start..self.values.len(),
        });
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.group(name).map(|g| &self.values[g.range.clone()])
    }

    pub fn slice_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.group(name)?.range.clone();
        Some(&mut self.values[range])
    }

    /// Same layout, different values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            values,
            groups: self.groups.clone(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.with_values(alloc::vec![0.0; self.values.len()])
    }
}
