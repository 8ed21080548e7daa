//! A single-layer self-attention recommender small enough to run anywhere.
//!
//! Token `t` at position `p` is embedded as `E[t] + P[p]`. Recommendation
//! appends a learned mask vector after the session and scores every item by
//! the dot product of its embedding with the attention output at the mask
//! position. Attention queries run the same layer over the given tokens
//! without a mask.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{rank, ModelError, Recommender, Scored};
use crate::ci::{aggregate_heads, matrix_from_rows, AttentionMatrix, HeadSelection};
use crate::graph::ItemId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    pub wq: Vec<Vec<f64>>,
    pub wk: Vec<Vec<f64>>,
    pub wv: Vec<Vec<f64>>,
}

/// Serialized weights; matrices are row-major `Vec<Vec<f64>>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyWeights {
    /// `vocab × dim`
    pub embeddings: Vec<Vec<f64>>,
    /// `max_len × dim`
    pub positions: Vec<Vec<f64>>,
    pub mask: Vec<f64>,
    /// Each projection is `dim × dim`.
    pub heads: Vec<HeadWeights>,
}

impl TinyWeights {
    /// Gaussian weights with standard deviation `1/√dim`.
    pub fn random(vocab: usize, dim: usize, heads: usize, max_len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let mut matrix = |rows: usize| -> Vec<Vec<f64>> {
            (0..rows)
                .map(|_| {
                    (0..dim)
                        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect()
        };
        let embeddings = matrix(vocab);
        let positions = matrix(max_len);
        let mask = matrix(1).remove(0);
        let heads = (0..heads)
            .map(|_| HeadWeights {
                wq: matrix(dim),
                wk: matrix(dim),
                wv: matrix(dim),
            })
            .collect();
        TinyWeights {
            embeddings,
            positions,
            mask,
            heads,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Invalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ModelError::Invalid(format!("{}: {e}", path.display())))
    }
}

struct Head {
    wq: DMatrix<f64>,
    wk: DMatrix<f64>,
    wv: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    embeddings: DMatrix<f64>,
    positions: DMatrix<f64>,
    mask: DMatrix<f64>,
}

pub struct TinyModel {
    layer: Layer,
    heads: Vec<Head>,
    selection: HeadSelection,
}

impl std::fmt::Debug for TinyModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TinyModel")
            .field("vocab", &self.vocabulary_size())
            .field("dim", &self.dim())
            .field("heads", &self.heads.len())
            .field("selection", &self.selection)
            .finish()
    }
}

fn square(rows: &[Vec<f64>], dim: usize, what: &str) -> Result<DMatrix<f64>, ModelError> {
    let m = matrix_from_rows(rows).map_err(|e| ModelError::Invalid(format!("{what}: {e}")))?;
    if m.shape() != (dim, dim) {
        return Err(ModelError::Invalid(format!("{what} must be {dim}x{dim}")));
    }
    Ok(m)
}

impl TinyModel {
    pub fn new(w: &TinyWeights, selection: HeadSelection) -> Result<Self, ModelError> {
        let invalid = |what: &str, e: crate::ci::CiError| ModelError::Invalid(format!("{what}: {e}"));
        let embeddings = matrix_from_rows(&w.embeddings).map_err(|e| invalid("embeddings", e))?;
        let dim = embeddings.ncols();
        let positions = matrix_from_rows(&w.positions).map_err(|e| invalid("positions", e))?;
        if positions.ncols() != dim || w.mask.len() != dim {
            return Err(ModelError::Invalid(format!(
                "positions and mask must have width {dim}"
            )));
        }
        if positions.nrows() < 2 {
            return Err(ModelError::Invalid("need at least two positions".into()));
        }
        if w.heads.is_empty() {
            return Err(ModelError::Invalid("no attention heads".into()));
        }
        if let HeadSelection::Index(i) = selection {
            if i >= w.heads.len() {
                return Err(ModelError::Invalid(format!("head {i} of {}", w.heads.len())));
            }
        }
        let all = [&w.embeddings, &w.positions];
        if all.iter().flat_map(|m| m.iter().flatten()).chain(&w.mask).any(|v| !v.is_finite()) {
            return Err(ModelError::Invalid("non-finite weight".into()));
        }
        let heads = w
            .heads
            .iter()
            .enumerate()
            .map(|(i, h)| {
                Ok(Head {
                    wq: square(&h.wq, dim, &format!("head {i} wq"))?,
                    wk: square(&h.wk, dim, &format!("head {i} wk"))?,
                    wv: square(&h.wv, dim, &format!("head {i} wv"))?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(TinyModel {
            layer: Layer {
                embeddings,
                positions,
                mask: DMatrix::from_row_slice(1, dim, &w.mask),
            },
            heads,
            selection,
        })
    }

    pub fn vocabulary_size(&self) -> usize {
        self.layer.embeddings.nrows()
    }

    pub fn dim(&self) -> usize {
        self.layer.embeddings.ncols()
    }

    pub fn max_len(&self) -> usize {
        self.layer.positions.nrows()
    }

    fn check_items(&self, items: &[ItemId], extra: usize) -> Result<(), ModelError> {
        if items.is_empty() {
            return Err(ModelError::EmptySession);
        }
        if items.len() + extra > self.max_len() {
            return Err(ModelError::TooLong {
                len: items.len() + extra,
                max: self.max_len(),
            });
        }
        for (i, item) in items.iter().enumerate() {
            if item.0 as usize >= self.vocabulary_size() {
                return Err(ModelError::OutOfVocabulary(*item));
            }
            if items[..i].contains(item) {
                return Err(ModelError::DuplicateItem(*item));
            }
        }
        Ok(())
    }

    fn embed(&self, items: &[ItemId], with_mask: bool) -> DMatrix<f64> {
        let len = items.len() + usize::from(with_mask);
        DMatrix::from_fn(len, self.dim(), |r, c| {
            let token = match items.get(r) {
                Some(item) => self.layer.embeddings[(item.0 as usize, c)],
                None => self.layer.mask[(0, c)],
            };
            token + self.layer.positions[(r, c)]
        })
    }

    /// Per-head softmax attention and value outputs.
    fn heads_forward(&self, x: &DMatrix<f64>) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
        let scale = 1.0 / (self.dim() as f64).sqrt();
        self.heads
            .iter()
            .map(|h| {
                let q = x * &h.wq;
                let k = x * &h.wk;
                let v = x * &h.wv;
                let mut logits = (q * k.transpose()) * scale;
                for mut row in logits.row_iter_mut() {
                    let max = row.max();
                    row.apply(|z| *z = (*z - max).exp());
                    let sum = row.sum();
                    row /= sum;
                }
                let out = &logits * v;
                (logits, out)
            })
            .collect()
    }

    /// Scores of every vocabulary item at the mask position after `items`.
    pub fn scores(&self, items: &[ItemId]) -> Result<Vec<f64>, ModelError> {
        self.check_items(items, 1)?;
        let x = self.embed(items, true);
        let last = x.nrows() - 1;
        let heads = self.heads_forward(&x);
        let mut h = DMatrix::zeros(1, self.dim());
        for (_, out) in &heads {
            h += out.row(last);
        }
        h /= heads.len() as f64;
        Ok((&self.layer.embeddings * h.transpose()).iter().copied().collect())
    }

    /// Softmax attention of every head over `tokens`.
    pub fn head_attention(&self, tokens: &[ItemId]) -> Result<Vec<DMatrix<f64>>, ModelError> {
        self.check_items(tokens, 0)?;
        let x = self.embed(tokens, false);
        Ok(self.heads_forward(&x).into_iter().map(|(a, _)| a).collect())
    }
}

impl Recommender for TinyModel {
    fn recommend(&self, items: &[ItemId], k: usize) -> Result<Vec<Scored>, ModelError> {
        let scores = self.scores(items)?;
        let scored = scores
            .into_iter()
            .enumerate()
            .map(|(i, s)| Scored::new(ItemId(i as u32), s))
            .filter(|s| !items.contains(&s.item))
            .collect();
        Ok(rank(scored, k))
    }

    fn attention(&self, tokens: &[ItemId]) -> Result<AttentionMatrix, ModelError> {
        Ok(aggregate_heads(&self.head_attention(tokens)?, self.selection)?)
    }
}
