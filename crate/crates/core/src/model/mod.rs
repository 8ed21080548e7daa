//! Recommender contract and the built-in implementations.
//!
//! A recommender answers two questions: the ranked top-k for a session (the
//! next, masked position) and the last-layer attention over a token list.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ci::{AttentionMatrix, CiError};
use crate::graph::ItemId;

pub mod ipc;
pub mod sem;
pub mod tiny;
pub mod trace;

mod float17;

pub use float17::F17;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("item {0} is not in the vocabulary")]
    OutOfVocabulary(ItemId),
    #[error("session is empty")]
    EmptySession,
    #[error("item {0} appears more than once")]
    DuplicateItem(ItemId),
    #[error("{len} tokens exceed the model's maximum of {max}")]
    TooLong { len: usize, max: usize },
    #[error("model returned no recommendations")]
    NoRecommendation,
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("remote model error: {0}")]
    Remote(String),
    #[error("invalid model definition: {0}")]
    Invalid(String),
    #[error("trace error: {0}")]
    Trace(String),
    #[error(transparent)]
    Attention(#[from] CiError),
}

/// An item with its model score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub item: ItemId,
    pub score: F17,
}

impl Scored {
    pub fn new(item: ItemId, score: f64) -> Self {
        Scored {
            item,
            score: F17(score),
        }
    }
}

/// Sorts by descending score, ties by ascending item id, and keeps `k`.
pub(crate) fn rank(mut scored: Vec<Scored>, k: usize) -> Vec<Scored> {
    scored.sort_by(|a, b| {
        b.score
            .0
            .total_cmp(&a.score.0)
            .then_with(|| a.item.cmp(&b.item))
    });
    scored.truncate(k);
    scored
}

/// Ordered list of item interactions; position is temporal order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<ItemId>", into = "Vec<ItemId>")]
pub struct Session {
    items: Vec<ItemId>,
}

impl Session {
    pub fn new(items: Vec<ItemId>) -> Result<Self, ModelError> {
        if items.is_empty() {
            return Err(ModelError::EmptySession);
        }
        Ok(Session { items })
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Items with the given positions dropped, order preserved.
    pub fn without_positions(&self, positions: &[usize]) -> Vec<ItemId> {
        self.items
            .iter()
            .enumerate()
            .filter(|(i, _)| !positions.contains(i))
            .map(|(_, &item)| item)
            .collect()
    }

    /// The session followed by `item`.
    pub fn extended_with(&self, item: ItemId) -> Vec<ItemId> {
        let mut v = self.items.clone();
        v.push(item);
        v
    }
}

impl TryFrom<Vec<ItemId>> for Session {
    type Error = ModelError;

    fn try_from(items: Vec<ItemId>) -> Result<Self, Self::Error> {
        Session::new(items)
    }
}

impl From<Session> for Vec<ItemId> {
    fn from(s: Session) -> Self {
        s.items
    }
}

/// A pre-trained attention-based recommender.
///
/// Implementations must be deterministic and must never recommend an item
/// that is already part of the queried session.
pub trait Recommender {
    /// Top-`k` items for the position after `items`, best first.
    fn recommend(&self, items: &[ItemId], k: usize) -> Result<Vec<Scored>, ModelError>;

    /// Last-layer attention over `tokens`, head-aggregated.
    fn attention(&self, tokens: &[ItemId]) -> Result<AttentionMatrix, ModelError>;
}

impl<T: Recommender + ?Sized> Recommender for &T {
    fn recommend(&self, items: &[ItemId], k: usize) -> Result<Vec<Scored>, ModelError> {
        (**self).recommend(items, k)
    }

    fn attention(&self, tokens: &[ItemId]) -> Result<AttentionMatrix, ModelError> {
        (**self).attention(tokens)
    }
}

impl<T: Recommender + ?Sized> Recommender for Box<T> {
    fn recommend(&self, items: &[ItemId], k: usize) -> Result<Vec<Scored>, ModelError> {
        (**self).recommend(items, k)
    }

    fn attention(&self, tokens: &[ItemId]) -> Result<AttentionMatrix, ModelError> {
        (**self).attention(tokens)
    }
}
