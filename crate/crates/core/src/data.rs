//! Corpus ingestion: vocabulary, tokenization and train/validation streams.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Literal spelling of the unknown token; pre-tokenized corpora (PTB) use it.
pub const UNK: &str = "<unk>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    Word,
    Char,
}

impl std::str::FromStr for TokenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "word" => Ok(TokenMode::Word),
            "char" => Ok(TokenMode::Char),
            other => Err(Error::Config(format!("unknown token mode '{other}'"))),
        }
    }
}

fn split(text: &str, mode: TokenMode) -> Vec<String> {
    match mode {
        TokenMode::Word => text.split_whitespace().map(str::to_owned).collect(),
        TokenMode::Char => text.chars().map(String::from).collect(),
    }
}

/// Token/id mapping. Known tokens get ids `0..V-1` in order of first
/// occurrence; the unknown id is always `V-1`, reserved even when unused.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    mode: TokenMode,
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary. With `max_size`, only the `max_size` most
    /// frequent known tokens are kept (frequency ties go to the earlier
    /// first occurrence); the rest map to the unknown id.
    pub fn build(text: &str, mode: TokenMode, max_size: Option<usize>) -> Result<Self> {
        let toks = split(text, mode);
        if toks.is_empty() {
            return Err(Error::Argument("corpus is empty".into()));
        }
        // (first occurrence, count) per token, in first-occurrence order
        let mut order: Vec<&str> = Vec::new();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in &toks {
            if mode == TokenMode::Word && t == UNK {
                continue;
            }
            let c = counts.entry(t.as_str()).or_insert_with(|| {
                order.push(t.as_str());
                0
            });
            *c += 1;
        }
        let kept: Vec<&str> = match max_size {
            Some(cap) if cap < order.len() => {
                let mut ranked: Vec<(usize, &str)> = order.iter().copied().enumerate().collect();
                ranked.sort_by(|a, b| counts[b.1].cmp(&counts[a.1]).then(a.0.cmp(&b.0)));
                let mut keep: Vec<(usize, &str)> = ranked.into_iter().take(cap).collect();
                keep.sort_by_key(|&(i, _)| i);
                keep.into_iter().map(|(_, t)| t).collect()
            }
            _ => order,
        };
        let mut tokens: Vec<String> = kept.into_iter().map(str::to_owned).collect();
        tokens.push(UNK.to_owned());
        Ok(Self::from_tokens(mode, tokens))
    }

    fn from_tokens(mode: TokenMode, tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .take(tokens.len() - 1)
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            mode,
            tokens,
            index,
        }
    }

    /// Restores the lookup table after deserialization.
    pub fn reindex(self) -> Self {
        Self::from_tokens(self.mode, self.tokens)
    }

    pub fn mode(&self) -> TokenMode {
        self.mode
    }

    /// Number of ids, the unknown id included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn unk_id(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.unk_id())
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        split(text, self.mode).iter().map(|t| self.id(t)).collect()
    }

    /// Word mode joins with single spaces; char mode concatenates.
    pub fn decode(&self, ids: &[usize]) -> String {
        let parts: Vec<&str> = ids.iter().map(|&i| self.token(i).unwrap_or(UNK)).collect();
        match self.mode {
            TokenMode::Word => parts.join(" "),
            TokenMode::Char => parts.concat(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamRole {
    Train,
    Valid,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenStream {
    pub ids: Vec<usize>,
    pub role: StreamRole,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn encode(text: &str, vocab: &Vocab, role: StreamRole) -> TokenStream {
    TokenStream {
        ids: vocab.encode(text),
        role,
    }
}

/// A tokenized corpus split by position: the first `1 - valid_frac` of the
/// tokens train, the tail validates.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub vocab: Vocab,
    pub train: TokenStream,
    pub valid: TokenStream,
}

impl Corpus {
    pub fn from_text(
        text: &str,
        mode: TokenMode,
        vocab_max: Option<usize>,
        valid_frac: f64,
    ) -> Result<Self> {
        let vocab = Vocab::build(text, mode, vocab_max)?;
        Self::with_vocab(text, vocab, valid_frac)
    }

    /// Encodes `text` with an existing vocabulary; the last `valid_frac`
    /// of the tokens (by position) become the validation stream.
    pub fn with_vocab(text: &str, vocab: Vocab, valid_frac: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&valid_frac) {
            return Err(Error::Config(format!("valid fraction {valid_frac} not in [0, 1)")));
        }
        let ids = vocab.encode(text);
        let n_valid = ((ids.len() as f64) * valid_frac).round() as usize;
        let cut = ids.len() - n_valid;
        Ok(Corpus {
            train: TokenStream {
                ids: ids[..cut].to_vec(),
                role: StreamRole::Train,
            },
            valid: TokenStream {
                ids: ids[cut..].to_vec(),
                role: StreamRole::Valid,
            },
            vocab,
        })
    }
}

/// Perplexity of the add-one-smoothed unigram model fit on `train`,
/// scored on `eval`.
pub fn unigram_perplexity(train: &[usize], eval: &[usize], vocab: usize) -> f64 {
    let mut counts = vec![1.0f64; vocab];
    for &t in train {
        counts[t] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    // the first token of a stream is never predicted
    let scored = &eval[1.min(eval.len())..];
    let nll: f64 = scored.iter().map(|&t| -(counts[t] / total).ln()).sum();
    (nll / scored.len() as f64).exp()
}
