//! Sentence normalization: tokenization, stop-word elimination and stemming.

mod porter;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use porter::stem;

/// English stop words bundled with the crate, one per line.
pub const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// Ordered, normalized tokens of one sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenList(Vec<String>);

impl TokenList {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenList(tokens)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl<S: Into<String>> FromIterator<S> for TokenList {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenList(iter.into_iter().map(Into::into).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopList(HashSet<String>);

impl StopList {
    pub fn empty() -> Self {
        StopList(HashSet::new())
    }

    /// The bundled English list.
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    pub fn parse(text: &str) -> Self {
        StopList(
            text.lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for StopList {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        StopList(iter.into_iter().map(Into::into).collect())
    }
}

/// Lowercases, drops every character that is not a letter, digit or
/// apostrophe, and splits on whitespace.
pub fn tokenize(text: &str) -> TokenList {
    text.split_whitespace()
        .map(|word| {
            word.chars()
                .flat_map(char::to_lowercase)
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

pub fn remove_stop_words(tokens: &TokenList, stoplist: &StopList) -> TokenList {
    tokens.iter().filter(|t| !stoplist.contains(t)).collect()
}

pub fn stem_all(tokens: &TokenList) -> TokenList {
    tokens.iter().map(stem).collect()
}

/// tokenize, then stop-word removal, then stemming.
pub fn preprocess(text: &str, stoplist: &StopList) -> TokenList {
    stem_all(&remove_stop_words(&tokenize(text), stoplist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> TokenList {
        words.iter().copied().collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Two people are Kickboxing!"),
            toks(&["two", "people", "are", "kickboxing"])
        );
        assert_eq!(tokenize(""), TokenList::default());
        assert_eq!(tokenize("  a  b "), toks(&["a", "b"]));
        assert_eq!(tokenize("Don't -- stop"), toks(&["don't", "stop"]));
    }

    #[test]
    fn stop_word_examples() {
        let are: StopList = ["are"].into_iter().collect();
        assert_eq!(
            remove_stop_words(&toks(&["two", "people", "are", "kickboxing"]), &are),
            toks(&["two", "people", "kickboxing"])
        );
        let the: StopList = ["the"].into_iter().collect();
        assert!(remove_stop_words(&toks(&["the", "the"]), &the).is_empty());
        assert_eq!(
            remove_stop_words(&toks(&["watch"]), &StopList::empty()),
            toks(&["watch"])
        );
    }

    #[test]
    fn stem_examples() {
        assert_eq!(stem("watched"), "watch");
        assert_eq!(stem("watching"), "watch");
        assert_eq!(stem("cat"), "cat");
    }

    #[test]
    fn bundled_list_is_lowercase_and_nonempty() {
        let list = StopList::english();
        assert!(list.len() > 100);
        assert!(list.contains("the") && list.contains("are"));
        for w in DEFAULT_STOPWORDS.lines() {
            assert_eq!(w, w.to_lowercase());
        }
    }

    #[test]
    fn preprocess_pipeline() {
        let out = preprocess("The people were watching the kickboxing.", &StopList::english());
        assert_eq!(out, toks(&["peopl", "watch", "kickbox"]));
    }

    proptest! {
        #[test]
        fn tokenize_is_a_fixed_point(text in "\\PC{0,60}") {
            let once = tokenize(&text);
            let again = tokenize(&once.as_slice().join(" "));
            prop_assert_eq!(once, again);
        }

        #[test]
        fn tokens_are_nonempty(text in "\\PC{0,60}") {
            prop_assert!(tokenize(&text).iter().all(|t| !t.is_empty()));
        }

        #[test]
        fn stop_word_removal_is_idempotent(
            words in proptest::collection::vec("[a-d]{1,2}", 0..20),
            stops in proptest::collection::vec("[a-d]{1,2}", 0..5),
        ) {
            let tokens: TokenList = words.iter().cloned().collect();
            let list: StopList = stops.iter().cloned().collect();
            let once = remove_stop_words(&tokens, &list);
            prop_assert!(once.iter().all(|t| !list.contains(t)));
            prop_assert_eq!(remove_stop_words(&once, &list), once.clone());
            // order preserved: `once` is a subsequence of `tokens`
            let mut it = tokens.iter();
            prop_assert!(once.iter().all(|t| it.any(|u| u == t)));
        }
    }
}
