//! Language-tagged, padded training/evaluation batches.
//!
//! Tag convention: the source row is `tokens ++ [eos, src_tag]`, the decoder
//! input is `[tgt_tag] ++ target` and the gold output is `target ++ [eos]`.

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const MASK: TokenId = 1;
pub const EOS: TokenId = 2;

/// One source/target pair of content tokens (no specials).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub src: Vec<TokenId>,
    pub tgt: Vec<TokenId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBatch {
    pub rows: usize,
    pub src_len: usize,
    pub tgt_len: usize,
    /// `rows × src_len`, right padded.
    pub src: Vec<usize>,
    pub src_pad: Vec<bool>,
    /// `rows × tgt_len` decoder inputs.
    pub dec_in: Vec<usize>,
    pub dec_pad: Vec<bool>,
    /// `rows × tgt_len` gold outputs; padding is `PAD`.
    pub target: Vec<usize>,
}

impl PaddedBatch {
    pub fn build(examples: &[&Example], src_tag: TokenId, tgt_tag: TokenId) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Data("cannot build an empty batch".into()));
        }
        let rows = examples.len();
        let src_len = examples.iter().map(|e| e.src.len()).max().unwrap_or(0) + 2;
        let tgt_len = examples.iter().map(|e| e.tgt.len()).max().unwrap_or(0) + 1;
        let mut b = PaddedBatch {
            rows,
            src_len,
            tgt_len,
            src: vec![PAD as usize; rows * src_len],
            src_pad: vec![true; rows * src_len],
            dec_in: vec![PAD as usize; rows * tgt_len],
            dec_pad: vec![true; rows * tgt_len],
            target: vec![PAD as usize; rows * tgt_len],
        };
        for (r, e) in examples.iter().enumerate() {
            let row = e.src.iter().copied().chain([EOS, src_tag]);
            for (j, t) in row.enumerate() {
                b.src[r * src_len + j] = t as usize;
                b.src_pad[r * src_len + j] = false;
            }
            let dec = std::iter::once(tgt_tag).chain(e.tgt.iter().copied());
            for (j, t) in dec.enumerate() {
                b.dec_in[r * tgt_len + j] = t as usize;
                b.dec_pad[r * tgt_len + j] = false;
            }
            for (j, t) in e.tgt.iter().copied().chain([EOS]).enumerate() {
                b.target[r * tgt_len + j] = t as usize;
            }
        }
        Ok(b)
    }

    /// Padded target tokens, the quantity bounded by `max_tokens`.
    pub fn padded_target_tokens(&self) -> usize {
        self.rows * self.tgt_len
    }

    /// Content tokens of source row `r` (specials and padding stripped).
    pub fn source_content(&self, r: usize) -> Vec<TokenId> {
        let row = &self.src[r * self.src_len..(r + 1) * self.src_len];
        let pad = &self.src_pad[r * self.src_len..(r + 1) * self.src_len];
        let n = pad.iter().filter(|p| !**p).count();
        row[..n.saturating_sub(2)].iter().map(|&t| t as TokenId).collect()
    }

    /// Content tokens of target row `r`.
    pub fn target_content(&self, r: usize) -> Vec<TokenId> {
        let row = &self.target[r * self.tgt_len..(r + 1) * self.tgt_len];
        row.iter().take_while(|&&t| t != EOS as usize).map(|&t| t as TokenId).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_convention() {
        let e = Example { src: vec![10, 11], tgt: vec![20] };
        let b = PaddedBatch::build(&[&e], 5, 6).unwrap();
        assert_eq!(b.src, vec![10, 11, 2, 5]);
        assert_eq!(b.dec_in, vec![6, 20]);
        assert_eq!(b.target, vec![20, 2]);
    }

    #[test]
    fn padding_round_trips_content() {
        let a = Example { src: vec![10], tgt: vec![20, 21, 22] };
        let c = Example { src: vec![12, 13, 14], tgt: vec![23] };
        let b = PaddedBatch::build(&[&a, &c], 5, 6).unwrap();
        assert_eq!(b.src_len, 5);
        assert_eq!(b.tgt_len, 4);
        assert_eq!(b.source_content(0), a.src);
        assert_eq!(b.source_content(1), c.src);
        assert_eq!(b.target_content(0), a.tgt);
        assert_eq!(b.target_content(1), c.tgt);
        assert_eq!(b.padded_target_tokens(), 8);
        assert_eq!(&b.dec_pad[4..], &[false, false, true, true]);
    }
}
