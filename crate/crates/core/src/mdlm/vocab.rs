use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const MASK: u32 = 1;
pub const SEP: u32 = 2;
pub const BOS: u32 = 3;
pub const EOS: u32 = 4;
pub const NUM: u32 = 5;

pub const SPECIALS: [&str; 6] = ["[PAD]", "[MASK]", "[SEP]", "[BOS]", "[EOS]", "[NUM]"];

pub fn is_special(id: u32) -> bool {
    (id as usize) < SPECIALS.len()
}

/// Split text into word-like pieces whose concatenation is the input: an
/// optional single leading space followed by a backslash command, a run of
/// letters/underscores, a single digit, or any other single character.
pub fn pre_tokenize(text: &str) -> Vec<&str> {
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let word = |c: char| c.is_alphabetic() || c == '_';
    while i < bytes.len() {
        let start = bytes[i].0;
        let mut j = i;
        if bytes[j].1 == ' ' && j + 1 < bytes.len() && bytes[j + 1].1 != ' ' {
            j += 1;
        }
        let c = bytes[j].1;
        j += 1;
        if c == '\\' || word(c) {
            while j < bytes.len() && word(bytes[j].1) {
                j += 1;
            }
        }
        let end = bytes.get(j).map_or(text.len(), |b| b.0);
        out.push(&text[start..end]);
        i = j;
    }
    out
}

/// Token strings and ids. Ids `0..6` are the special tokens; the rest are
/// sorted corpus pieces plus single-character fallbacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Deterministic vocabulary over the pieces of `corpus`, every character
    /// seen in it and all printable ASCII characters.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let mut pieces = BTreeSet::new();
        for text in corpus {
            for p in pre_tokenize(text) {
                pieces.insert(p.to_string());
                for c in p.chars() {
                    pieces.insert(c.to_string());
                }
            }
        }
        for b in 0x20u8..0x7f {
            pieces.insert((b as char).to_string());
        }
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(pieces.into_iter().filter(|p| !SPECIALS.contains(&p.as_str())));
        tokens.into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Pieces found in the vocabulary map to one id; others fall back to
    /// their characters.
    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        let mut ids = Vec::new();
        for piece in pre_tokenize(text) {
            if let Some(id) = self.id(piece) {
                ids.push(id);
                continue;
            }
            for c in piece.chars() {
                let mut buf = [0u8; 4];
                ids.push(self.id(c.encode_utf8(&mut buf)).ok_or(Error::Untokenizable(c))?);
            }
        }
        Ok(ids)
    }

    /// Concatenate content tokens; `None` if any id is special or unknown.
    pub fn decode(&self, ids: &[u32]) -> Option<String> {
        let mut s = String::new();
        for &id in ids {
            if is_special(id) {
                return None;
            }
            s.push_str(self.token(id)?);
        }
        Some(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pieces_cover_latex() {
        assert_eq!(
            pre_tokenize(r"\sin(2.75) \times \log(6.40)"),
            [r"\sin", "(", "2", ".", "7", "5", ")", r" \times", r" \log", "(", "6", ".", "4", "0", ")"]
        );
        assert_eq!(pre_tokenize("a  b"), ["a", " ", " b"]);
        assert_eq!(pre_tokenize("x1_y "), ["x", "1", "_y", " "]);
    }

    #[test]
    fn specials_come_first_and_build_is_deterministic() {
        let a = Vocabulary::build(["hello world", "software developer"]);
        let b = Vocabulary::build(["software developer", "hello world"]);
        assert_eq!(a, b);
        assert_eq!(a.token(MASK), Some("[MASK]"));
        assert_eq!(a.id("[NUM]"), Some(NUM));
        assert!(a.id(" developer").is_some());
    }

    #[test]
    fn unseen_words_fall_back_to_characters() {
        let v = Vocabulary::build(["alpha"]);
        let ids = v.encode("alpha beta").unwrap();
        assert_eq!(ids.len(), 1 + 5);
        assert_eq!(v.decode(&ids).unwrap(), "alpha beta");
        assert!(matches!(v.encode("é"), Err(Error::Untokenizable('é'))));
        assert_eq!(v.decode(&[MASK]), None);
    }

    proptest! {
        #[test]
        fn pre_tokenize_is_lossless(s in "[ -~]{0,40}") {
            prop_assert_eq!(pre_tokenize(&s).concat(), s.clone());
            let v = Vocabulary::build([s.as_str()]);
            prop_assert_eq!(v.decode(&v.encode(&s).unwrap()).unwrap(), s);
        }
    }
}
