use std::hash::Hasher;

use fnv::FnvHasher;

use super::PreprocessError;

pub const PAD_ID: u32 = 0;
pub const CLS_ID: u32 = 1;
pub const SEP_ID: u32 = 2;
pub const UNK_ID: u32 = 3;

/// 64-bit FNV-1a over the UTF-8 bytes of `token`.
pub fn stable_hash(token: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    h.finish()
}

/// Splits on whitespace; runs of alphanumerics/underscore form words and
/// every other character is its own token.
pub fn split_words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        let wordy = c.is_alphanumeric() || c == '_' || c == '$';
        if wordy {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
        if !c.is_whitespace() {
            out.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

/// Maps each token to `4 + fnv1a(token) mod (vocab_size - 4)`.
pub fn hash_tokenize(text: &str, vocab_size: usize) -> Result<Vec<u32>, PreprocessError> {
    if vocab_size < 16 {
        return Err(PreprocessError::VocabTooSmall(vocab_size));
    }
    let buckets = (vocab_size - 4) as u64;
    Ok(split_words(text)
        .into_iter()
        .map(|w| 4 + (stable_hash(w) % buckets) as u32)
        .collect())
}

/// Fixed-length windows over a token sequence, each wrapped as
/// `[CLS] tokens.. [PAD].. [SEP]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkedTokens {
    pub chunks: Vec<Vec<u32>>,
    pub window: usize,
    pub stride: usize,
    pub pad_id: u32,
    pub cls_id: u32,
    pub sep_id: u32,
}

impl ChunkedTokens {
    pub fn chunk_len(&self) -> usize {
        self.window + 2
    }
}

/// Number of windows needed to cover `len` tokens.
pub fn chunk_count(len: usize, window: usize, stride: usize) -> usize {
    if len <= window {
        1
    } else {
        (len - window).div_ceil(stride) + 1
    }
}

pub fn chunk_tokens(
    token_ids: &[u32],
    window: usize,
    stride: usize,
) -> Result<ChunkedTokens, PreprocessError> {
    if window == 0 || stride == 0 || stride > window {
        return Err(PreprocessError::BadWindow { window, stride });
    }
    if token_ids.is_empty() {
        return Err(PreprocessError::EmptyInput);
    }
    let count = chunk_count(token_ids.len(), window, stride);
    let chunks = (0..count)
        .map(|k| {
            let start = k * stride;
            let end = (start + window).min(token_ids.len());
            let mut chunk = Vec::with_capacity(window + 2);
            chunk.push(CLS_ID);
            chunk.extend_from_slice(&token_ids[start..end]);
            chunk.resize(window + 1, PAD_ID);
            chunk.push(SEP_ID);
            chunk
        })
        .collect();
    Ok(ChunkedTokens {
        chunks,
        window,
        stride,
        pad_id: PAD_ID,
        cls_id: CLS_ID,
        sep_id: SEP_ID,
    })
}
