//! Closed toy vocabulary standing in for a pretrained text encoder's tokenizer.

use std::collections::HashMap;

use crate::scene::{prompt_tokens, Direction, PaletteColor, ShapeKind, Style};
use crate::{Error, Result};

/// Longest token sequence accepted by the text embedder.
pub const MAX_TOKENS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::toy()
    }
}

impl Vocabulary {
    /// Grammar words, colors, shapes, directions and styles.
    pub fn toy() -> Self {
        let mut words: Vec<String> = ["a", "moving", "on", "background"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        words.extend(PaletteColor::ALL.iter().map(|c| c.word().to_string()));
        words.extend(ShapeKind::ALL.iter().map(|c| c.word().to_string()));
        words.extend(Direction::ALL.iter().map(|c| c.word().to_string()));
        words.extend(Style::ALL.iter().map(|c| c.word().to_string()));
        Self::from_words(words)
    }

    pub fn from_words(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Self { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    /// Token ids of a prompt. The empty prompt yields no tokens, which the
    /// denoiser treats exactly like null text.
    pub fn tokenize(&self, prompt: &str) -> Result<Vec<u32>> {
        let ids = prompt_tokens(prompt)
            .into_iter()
            .map(|t| {
                self.index
                    .get(&t)
                    .copied()
                    .ok_or_else(|| Error::UnknownToken {
                        token: t.clone(),
                        prompt: prompt.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        if ids.len() > MAX_TOKENS {
            return Err(Error::Grammar {
                prompt: prompt.to_string(),
                reason: format!("{} tokens exceeds the limit of {MAX_TOKENS}", ids.len()),
            });
        }
        Ok(ids)
    }
}
