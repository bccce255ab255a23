use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Symbol identifier. Real symbols are `0..alphabet.len()`; the END marker
/// occupies index `alphabet.len()` in next-symbol vectors.
pub type Symbol = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlphabetError {
    #[error("alphabet must contain at least one symbol")]
    Empty,
    #[error("duplicate symbol name {0:?}")]
    Duplicate(String),
}

/// An ordered, non-empty set of named symbols.
///
/// START and END are never members; they exist only at oracle boundaries
/// (END is the trailing entry of every next-symbol distribution).
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Alphabet {
    names: Vec<String>,
    index: HashMap<String, Symbol>,
}

impl Alphabet {
    pub fn new<I, S>(names: I) -> Result<Self, AlphabetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(AlphabetError::Empty);
        }
        let mut index = HashMap::with_capacity(names.len());
        for (id, name) in names.iter().enumerate() {
            if index.insert(name.clone(), id).is_some() {
                return Err(AlphabetError::Duplicate(name.clone()));
            }
        }
        Ok(Self { names, index })
    }

    /// Alphabet whose symbol names are the decimal ids `"0"`, `"1"`, ...,
    /// as used by PAutomaC-style sequence files.
    pub fn numeric(size: usize) -> Result<Self, AlphabetError> {
        Self::new((0..size).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Index of the END marker in next-symbol vectors.
    pub fn end(&self) -> Symbol {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: Symbol) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<Symbol> {
        self.index.get(name).copied()
    }

    pub fn contains_all(&self, seq: &[Symbol]) -> bool {
        seq.iter().all(|&s| s < self.len())
    }

    /// Parses a sequence of symbol names; single-character alphabets may be
    /// written without separators (`"ab"`), otherwise names are whitespace separated.
    pub fn parse_sequence(&self, text: &str) -> Option<Vec<Symbol>> {
        let text = text.trim();
        if text.is_empty() {
            return Some(Vec::new());
        }
        if text.contains(char::is_whitespace) || !self.names.iter().all(|n| n.chars().count() == 1) {
            text.split_whitespace().map(|tok| self.id(tok)).collect()
        } else {
            text.chars().map(|c| self.id(c.encode_utf8(&mut [0; 4]))).collect()
        }
    }

    pub fn render(&self, seq: &[Symbol]) -> String {
        let single = self.names.iter().all(|n| n.chars().count() == 1);
        let parts: Vec<&str> = seq.iter().map(|&s| self.name(s).unwrap_or("?")).collect();
        if single {
            parts.concat()
        } else {
            parts.join(" ")
        }
    }
}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.names).finish()
    }
}

impl TryFrom<Vec<String>> for Alphabet {
    type Error = AlphabetError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(names)
    }
}

impl From<Alphabet> for Vec<String> {
    fn from(a: Alphabet) -> Self {
        a.names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_duplicates() {
        assert_eq!(Alphabet::new(Vec::<String>::new()), Err(AlphabetError::Empty));
        assert!(matches!(Alphabet::new(["a", "a"]), Err(AlphabetError::Duplicate(_))));
    }

    #[test]
    fn ids_follow_list_order() {
        let a = Alphabet::new(["x", "y", "z"]).unwrap();
        assert_eq!(a.id("z"), Some(2));
        assert_eq!(a.end(), 3);
        assert_eq!(a.parse_sequence("zyx"), Some(vec![2, 1, 0]));
        assert_eq!(a.render(&[0, 2]), "xz");
    }

    #[test]
    fn numeric_names_are_space_separated() {
        let a = Alphabet::numeric(12).unwrap();
        assert_eq!(a.parse_sequence("11 0 3"), Some(vec![11, 0, 3]));
        assert_eq!(a.render(&[11, 0]), "11 0");
        assert_eq!(a.parse_sequence("12"), None);
    }
}
