use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// The bundled training text (public-domain sonnets, about 94 KB).
pub fn bundled_corpus() -> &'static str {
    include_str!("../../data/sonnets.txt")
}

/// Sorted character set of a text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
    index: BTreeMap<char, usize>,
}

impl CharVocab {
    pub fn from_text(text: &str) -> Self {
        let index: BTreeMap<char, usize> = text
            .chars()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, c)| (c, i))
            .collect();
        let chars = index.keys().copied().collect();
        CharVocab { chars, index }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                self.index
                    .get(&c)
                    .copied()
                    .ok_or_else(|| Error::InvalidArgument(format!("character {c:?} not in vocabulary")))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.chars[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_bundled() {
        let text = bundled_corpus();
        assert!(text.len() > 90_000);
        let v = CharVocab::from_text(text);
        assert!(v.len() > 20 && v.len() < 100);
        let ids = v.encode("thine own").unwrap();
        assert_eq!(v.decode(&ids), "thine own");
        assert!(v.encode("\u{1F600}").is_err());
    }
}
