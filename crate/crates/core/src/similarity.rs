//! All-pairs cosine similarity over standardized document embeddings,
//! with same-author masking and exact nearest-neighbor queries.
//!
//! # `SIM v1` file layout
//!
//! All integers little-endian.
//!
//! | field        | size                     | notes                                   |
//! |--------------|--------------------------|-----------------------------------------|
//! | magic        | 7 bytes                  | `SIM v1\n`                              |
//! | count `n`    | u64                      |                                         |
//! | policy       | u8                       | 0 = none, 1 = same-author               |
//! | doc_id table | `n` × (u32 len + bytes)  | UTF-8                                   |
//! | values       | `n·n` × f64              | row-major                               |
//! | mask         | `ceil(n·n / 8)` bytes    | bit `i·n+j` (LSB first) set = masked    |

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::embedding::{cosine, EmbeddingMatrix};
use crate::error::{Error, Result};

pub const SIM_MAGIC: &[u8; 7] = b"SIM v1\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskPolicy {
    None,
    SameAuthor,
}

impl std::str::FromStr for MaskPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MaskPolicy::None),
            "same-author" => Ok(MaskPolicy::SameAuthor),
            other => Err(Error::InvalidArgument(format!("unknown mask policy {other:?}"))),
        }
    }
}

/// Symmetric similarity matrix with an explicit absence mask.
///
/// Masked entries store `0.0`. Under the same-author policy the diagonal
/// keeps the value 1 but is masked, like every other same-author pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    doc_ids: Vec<String>,
    values: Vec<f64>,
    mask: Vec<bool>,
    policy: MaskPolicy,
    index: HashMap<String, usize>,
}

impl SimilarityMatrix {
    fn from_parts(doc_ids: Vec<String>, values: Vec<f64>, mask: Vec<bool>, policy: MaskPolicy) -> Self {
        let index = doc_ids.iter().enumerate().map(|(i, d)| (d.clone(), i)).collect();
        SimilarityMatrix {
            doc_ids,
            values,
            mask,
            policy,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn policy(&self) -> MaskPolicy {
        self.policy
    }

    pub fn index_of(&self, doc_id: &str) -> Option<usize> {
        self.index.get(doc_id).copied()
    }

    /// Stored value, regardless of the mask.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.len() + j]
    }

    /// `None` when the pair is masked.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        (!self.is_masked(i, j)).then(|| self.value(i, j))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn row_mask(&self, i: usize) -> &[bool] {
        let n = self.len();
        &self.mask[i * n..(i + 1) * n]
    }

    /// Masked ordered pairs, diagonal excluded.
    pub fn masked_pair_count(&self) -> usize {
        let n = self.len();
        (0..n)
            .map(|i| (0..n).filter(|&j| j != i && self.is_masked(i, j)).count())
            .sum()
    }

    /// Exact top-`k` unmasked neighbors of `doc_id`, self excluded, sorted by
    /// similarity descending with ascending `doc_id` on ties.
    pub fn neighbors(&self, doc_id: &str, k: usize) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let i = self
            .index_of(doc_id)
            .ok_or_else(|| Error::UnknownDoc(doc_id.to_string()))?;
        Ok(self
            .neighbor_indices(i, k)
            .into_iter()
            .map(|j| (self.doc_ids[j].clone(), self.value(i, j)))
            .collect())
    }

    pub(crate) fn neighbor_indices(&self, i: usize, k: usize) -> Vec<usize> {
        let mut cand: Vec<usize> = (0..self.len()).filter(|&j| j != i && !self.is_masked(i, j)).collect();
        let cmp = |a: &usize, b: &usize| {
            self.value(i, *b)
                .total_cmp(&self.value(i, *a))
                .then_with(|| self.doc_ids[*a].cmp(&self.doc_ids[*b]))
        };
        if cand.len() > k {
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
        }
        cand.sort_by(cmp);
        cand
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(16 + n * n * 8 + n * n / 8 + n * 16);
        out.extend_from_slice(SIM_MAGIC);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.push(match self.policy {
            MaskPolicy::None => 0,
            MaskPolicy::SameAuthor => 1,
        });
        for id in &self.doc_ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut bits = vec![0u8; (n * n).div_ceil(8)];
        for (k, _) in self.mask.iter().enumerate().filter(|(_, m)| **m) {
            bits[k / 8] |= 1 << (k % 8);
        }
        out.extend_from_slice(&bits);
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(SIM_MAGIC.len())? != SIM_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, expected \"SIM v1\"".into(),
            });
        }
        let count_at = r.pos;
        let n = u64::from_le_bytes(r.array()?);
        let n = usize::try_from(n)
            .ok()
            .filter(|n| n.checked_mul(*n).and_then(|x| x.checked_mul(8)).is_some())
            .ok_or_else(|| Error::Format {
                offset: count_at as u64,
                message: format!("implausible count {n}"),
            })?;
        let policy_at = r.pos;
        let policy = match r.take(1)?[0] {
            0 => MaskPolicy::None,
            1 => MaskPolicy::SameAuthor,
            p => {
                return Err(Error::Format {
                    offset: policy_at as u64,
                    message: format!("unknown policy byte {p}"),
                })
            }
        };
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let len = u32::from_le_bytes(r.array()?) as usize;
            let at = r.pos;
            let s = std::str::from_utf8(r.take(len)?).map_err(|_| Error::Format {
                offset: at as u64,
                message: "doc_id is not UTF-8".into(),
            })?;
            ids.push(s.to_string());
        }
        let values: Vec<f64> = r
            .take(n * n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let bits = r.take((n * n).div_ceil(8))?;
        let mask = (0..n * n).map(|k| bits[k / 8] >> (k % 8) & 1 == 1).collect();
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos as u64,
                message: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Self::from_parts(ids, values, mask, policy))
    }

    /// CSV `doc_a,doc_b,sim` for unmasked pairs `a < b` (matrix order) with
    /// similarity at or above `floor`.
    pub fn write_csv<W: Write>(&self, w: &mut W, floor: f64) -> std::io::Result<()> {
        writeln!(w, "doc_a,doc_b,sim")?;
        let n = self.len();
        for i in 0..n {
            for j in i + 1..n {
                if let Some(v) = self.get(i, j).filter(|v| *v >= floor) {
                    writeln!(w, "{},{},{}", self.doc_ids[i], self.doc_ids[j], v)?;
                }
            }
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Format {
                offset: self.pos as u64,
                message: format!("truncated: need {len} bytes, {} left", self.bytes.len() - self.pos),
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
}

/// Pairwise cosine over a standardized embedding matrix. Rows are computed
/// in parallel; each entry depends only on its two rows.
pub fn build(m: &EmbeddingMatrix, corpus: &Corpus, policy: MaskPolicy) -> Result<SimilarityMatrix> {
    let authors: Vec<&str> = m
        .doc_ids()
        .iter()
        .map(|id| corpus.author_of(id).ok_or_else(|| Error::UnknownDoc(id.clone())))
        .collect::<Result<_>>()?;
    build_inner(m, policy, |i, j| authors[i] == authors[j])
}

/// Unmasked matrix over rows that need not belong to a corpus.
pub fn build_unmasked(m: &EmbeddingMatrix) -> Result<SimilarityMatrix> {
    build_inner(m, MaskPolicy::None, |_, _| false)
}

fn build_inner(
    m: &EmbeddingMatrix,
    policy: MaskPolicy,
    same_author: impl Fn(usize, usize) -> bool + Sync,
) -> Result<SimilarityMatrix> {
    if !m.is_standardized() {
        return Err(Error::Unstandardized);
    }
    let n = m.len();
    let rows: Vec<Result<(Vec<f64>, Vec<bool>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut vals = Vec::with_capacity(n);
            let mut mask = Vec::with_capacity(n);
            for j in 0..n {
                let masked = policy == MaskPolicy::SameAuthor && same_author(i, j);
                let v = if i == j {
                    1.0
                } else if masked {
                    0.0
                } else {
                    cosine(m.row(i), m.row(j))?
                };
                vals.push(v);
                mask.push(masked);
            }
            Ok((vals, mask))
        })
        .collect();
    let mut values = Vec::with_capacity(n * n);
    let mut mask = Vec::with_capacity(n * n);
    for r in rows {
        let (v, k) = r?;
        values.extend(v);
        mask.extend(k);
    }
    Ok(SimilarityMatrix::from_parts(m.doc_ids().to_vec(), values, mask, policy))
}
