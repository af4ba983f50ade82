use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const PAD_ID: u32 = 0;

/// Closed token vocabulary. Index 0 is always the pad token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary with the pad token followed by `words` in order.
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self {
            tokens: vec![PAD_TOKEN.to_string()],
            index: HashMap::from([(PAD_TOKEN.to_string(), PAD_ID)]),
        };
        for w in words {
            let w = w.into();
            if vocab.index.contains_key(&w) {
                return Err(Error::invalid(format!("duplicate vocabulary token {w:?}")));
            }
            vocab.push(w)?;
        }
        Ok(vocab)
    }

    /// Like [`Vocabulary::new`] but silently skips repeats.
    pub fn from_words_dedup<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::new(std::iter::empty::<String>())?;
        for w in words {
            let w = w.into();
            if !vocab.index.contains_key(&w) {
                vocab.push(w)?;
            }
        }
        Ok(vocab)
    }

    fn push(&mut self, w: String) -> Result<()> {
        if w.is_empty() || w.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!("invalid vocabulary token {w:?}")));
        }
        let id = u32::try_from(self.tokens.len()).map_err(|_| Error::invalid("vocabulary too large"))?;
        self.index.insert(w.clone(), id);
        self.tokens.push(w);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pad_id(&self) -> u32 {
        PAD_ID
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        match self.index.get(token) {
            Some(&PAD_ID) => None,
            other => other.copied(),
        }
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Parses the one-token-per-line vocabulary file. Line 0 is the pad token.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let parse_err = |line: usize, msg: String| Error::Parse {
            source_name: source_name.to_string(),
            line: line + 1,
            msg,
        };
        let pad = match lines.next() {
            Some((_, l)) => l.trim_end_matches('\r'),
            None => return Err(parse_err(0, "empty vocabulary file".into())),
        };
        let mut vocab = Self {
            tokens: vec![pad.to_string()],
            index: HashMap::from([(pad.to_string(), PAD_ID)]),
        };
        if pad.is_empty() || pad.chars().any(char::is_whitespace) {
            return Err(parse_err(0, format!("invalid pad token {pad:?}")));
        }
        for (i, line) in lines {
            let tok = line.trim_end_matches('\r');
            if vocab.index.contains_key(tok) {
                return Err(parse_err(i, format!("duplicate token {tok:?}")));
            }
            vocab.push(tok.to_string()).map_err(|e| parse_err(i, e.to_string()))?;
        }
        Ok(vocab)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    /// Maps known tokens to ids, drops unknown ones, truncates to `max_len`
    /// and pads with the pad id to exactly `max_len`.
    pub fn tokenize<S: AsRef<str>>(&self, caption: &[S], max_len: usize) -> Result<Vec<u32>> {
        tokenize(caption, self, max_len)
    }

    /// Token strings for the non-pad ids.
    pub fn detokenize(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id != PAD_ID)
            .filter_map(|&id| self.token(id).map(str::to_string))
            .collect()
    }

    /// Tokens of `caption` that are not in the vocabulary.
    pub fn unknown<'a, S: AsRef<str>>(&self, caption: &'a [S]) -> Vec<&'a str> {
        caption
            .iter()
            .map(AsRef::as_ref)
            .filter(|t| self.id(t).is_none())
            .collect()
    }
}

pub fn tokenize<S: AsRef<str>>(caption: &[S], vocab: &Vocabulary, max_len: usize) -> Result<Vec<u32>> {
    if max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    let mut ids: Vec<u32> = caption
        .iter()
        .filter_map(|t| vocab.id(t.as_ref()))
        .take(max_len)
        .collect();
    if ids.is_empty() {
        return Err(Error::invalid(format!(
            "caption has no known tokens: {:?}",
            caption.iter().map(AsRef::as_ref).collect::<Vec<_>>()
        )));
    }
    ids.resize(max_len, PAD_ID);
    Ok(ids)
}
