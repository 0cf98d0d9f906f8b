use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Corpus;
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const MASK: usize = 2;
pub const SEP: usize = 3;

const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[MASK]", "|"];

/// Vocabulary ids of one encoder input sequence. Never empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenIds(pub Vec<usize>);

impl TokenIds {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Word-level vocabulary. Ids 0..=3 are reserved for PAD, UNK, MASK and the
/// `|` separator; the remaining ids follow first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in RESERVED {
            v.insert(t);
        }
        v
    }
}

/// Lowercases, splits frame-name underscores and detaches the `|` separator,
/// then splits on whitespace.
pub fn split_text(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace('_', " ")
        .replace('|', " | ")
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocab> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::Checkpoint(
                "vocabulary does not start with the reserved tokens".into(),
            ));
        }
        let mut v = Vocab {
            tokens: Vec::with_capacity(tokens.len()),
            index: HashMap::with_capacity(tokens.len()),
        };
        for t in &tokens {
            if v.index.contains_key(t) {
                return Err(Error::Checkpoint(format!("duplicate vocabulary token '{t}'")));
            }
            v.insert(t);
        }
        Ok(v)
    }

    fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Hex SHA-256 over the newline-joined token list.
    pub fn manifest_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.tokens {
            hasher.update(t.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    /// Tokenizes pre-split surface tokens (lowercased, otherwise passed through).
    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Result<TokenIds> {
        let ids: Vec<usize> = tokens
            .iter()
            .map(|t| self.id(&t.as_ref().to_lowercase()))
            .collect();
        if ids.is_empty() {
            return Err(Error::Empty("token sequence".into()));
        }
        Ok(TokenIds(ids))
    }

    pub fn encode_text(&self, text: &str) -> Result<TokenIds> {
        self.encode_tokens(&split_text(text))
    }

    pub fn detokenize(&self, ids: &TokenIds) -> String {
        ids.0
            .iter()
            .map(|&i| self.token(i).unwrap_or(RESERVED[UNK]))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Reserved tokens, then lowercased corpus tokens, then frame input text
/// tokens, each in order of first occurrence.
pub fn build_vocab(corpus: &Corpus, lex: &Lexicon) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut vocab = Vocab::default();
    for inst in &corpus.instances {
        for t in &inst.tokens {
            vocab.insert(&t.to_lowercase());
        }
    }
    for f in lex.frame_ids() {
        for t in split_text(&lex.frame_input_text(f)?) {
            vocab.insert(&t);
        }
    }
    Ok(vocab)
}
