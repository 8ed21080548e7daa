//! Recorded model outputs, one JSON object per session per line.
//!
//! ```text
//! {"version":1,"session_id":"u17","items":[4,9,2],
//!  "top_k":[{"item":7,"score":1.25e0},...],
//!  "extended":true,"synthetic":false,"attention":[[...],...],
//!  "variants":[{"removed":[1],"top_k":[...]}]}
//! ```
//!
//! `attention` covers `items` followed by the top-1 item when `extended` is
//! set. `removed` lists session positions dropped for a counterfactual query.
//! Floats carry 17 significant digits so files read back bit-identical.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, Recommender, Scored, Session, F17};
use crate::ci::AttentionMatrix;
use crate::graph::ItemId;

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceVariant {
    pub removed: Vec<usize>,
    pub top_k: Vec<Scored>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub version: u32,
    pub session_id: String,
    pub items: Vec<ItemId>,
    pub top_k: Vec<Scored>,
    pub extended: bool,
    #[serde(default)]
    pub synthetic: bool,
    pub attention: Vec<Vec<F17>>,
    #[serde(default)]
    pub variants: Vec<TraceVariant>,
}

impl TraceRecord {
    /// Records top-k, the extended-input attention and one variant per removal set.
    pub fn capture<M: Recommender + ?Sized>(
        model: &M,
        session_id: impl Into<String>,
        session: &Session,
        k: usize,
        removals: &[Vec<usize>],
    ) -> Result<Self, ModelError> {
        let top_k = model.recommend(session.items(), k)?;
        let rec = top_k.first().ok_or(ModelError::NoRecommendation)?.item;
        let attention = model.attention(&session.extended_with(rec))?;
        let variants = removals
            .iter()
            .map(|removed| {
                let mut removed = removed.clone();
                removed.sort_unstable();
                removed.dedup();
                let top_k = model.recommend(&session.without_positions(&removed), k)?;
                Ok(TraceVariant { removed, top_k })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(TraceRecord {
            version: TRACE_VERSION,
            session_id: session_id.into(),
            items: session.items().to_vec(),
            top_k,
            extended: true,
            synthetic: attention.is_synthetic(),
            attention: attention
                .to_rows()
                .into_iter()
                .map(|r| r.into_iter().map(F17).collect())
                .collect(),
            variants,
        })
    }

    /// Tokens the attention matrix is defined over.
    pub fn tokens(&self) -> Vec<ItemId> {
        let mut t = self.items.clone();
        if self.extended {
            if let Some(first) = self.top_k.first() {
                t.push(first.item);
            }
        }
        t
    }

    pub fn attention_matrix(&self) -> Result<AttentionMatrix, ModelError> {
        let rows: Vec<Vec<f64>> = self
            .attention
            .iter()
            .map(|r| r.iter().map(|v| v.0).collect())
            .collect();
        let m = crate::ci::matrix_from_rows(&rows)?;
        let a = if self.synthetic {
            AttentionMatrix::synthetic_factor(m)?
        } else {
            AttentionMatrix::new(m)?
        };
        Ok(a)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Trace(format!("session {}: {msg}", self.session_id)));
        if self.version != TRACE_VERSION {
            return fail(format!("unsupported version {}", self.version));
        }
        if let Err(e) = Session::new(self.items.clone()) {
            return fail(e.to_string());
        }
        if self.top_k.is_empty() {
            return fail("empty top-k".into());
        }
        if self.extended && self.items.contains(&self.top_k[0].item) {
            return fail("top-1 item is part of the session".into());
        }
        let tokens = self.tokens().len();
        if self.attention.len() != tokens {
            return fail(format!(
                "attention has {} rows for {tokens} tokens",
                self.attention.len()
            ));
        }
        if let Err(e) = self.attention_matrix() {
            return fail(e.to_string());
        }
        for v in &self.variants {
            if v.removed.is_empty() || v.removed.iter().any(|&p| p >= self.items.len()) {
                return fail(format!("variant removes invalid positions {:?}", v.removed));
            }
            if v.removed.len() >= self.items.len() {
                return fail("variant removes every item".into());
            }
        }
        Ok(())
    }

    /// One JSON line, without the trailing newline.
    pub fn to_line(&self) -> Result<String, ModelError> {
        serde_json::to_string(self).map_err(|e| ModelError::Trace(e.to_string()))
    }
}

pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>, ModelError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ModelError::Trace(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| ModelError::Trace(format!("line {}: {e}", n + 1)))?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, ModelError> {
    let f = std::fs::File::open(path)
        .map_err(|e| ModelError::Trace(format!("{}: {e}", path.display())))?;
    parse_trace(std::io::BufReader::new(f))
}

pub fn write_trace<W: Write>(mut w: W, records: &[TraceRecord]) -> Result<(), ModelError> {
    for r in records {
        writeln!(w, "{}", r.to_line()?).map_err(|e| ModelError::Trace(e.to_string()))?;
    }
    w.flush().map_err(|e| ModelError::Trace(e.to_string()))
}

type Fallback = Box<dyn Recommender + Send + Sync>;

/// Answers queries from recorded outputs, optionally forwarding misses.
pub struct TraceModel {
    records: Vec<TraceRecord>,
    top_k: HashMap<Vec<ItemId>, Vec<Scored>>,
    attention: HashMap<Vec<ItemId>, AttentionMatrix>,
    fallback: Option<Fallback>,
}

impl std::fmt::Debug for TraceModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TraceModel")
            .field("sessions", &self.records.len())
            .field("queries", &self.top_k.len())
            .field("fallback", &self.fallback.is_some())
            .finish()
    }
}

impl TraceModel {
    pub fn new(records: Vec<TraceRecord>) -> Result<Self, ModelError> {
        let mut top_k = HashMap::new();
        let mut attention = HashMap::new();
        let mut insert = |key: Vec<ItemId>, value: &Vec<Scored>| -> Result<(), ModelError> {
            match top_k.get(&key) {
                Some(existing) if existing != value => Err(ModelError::Trace(format!(
                    "conflicting top-k recorded for {key:?}"
                ))),
                _ => {
                    top_k.insert(key, value.clone());
                    Ok(())
                }
            }
        };
        for r in &records {
            r.validate()?;
            insert(r.items.clone(), &r.top_k)?;
            for v in &r.variants {
                let s = Session::new(r.items.clone())?;
                insert(s.without_positions(&v.removed), &v.top_k)?;
            }
        }
        for r in &records {
            attention.insert(r.tokens(), r.attention_matrix()?);
        }
        Ok(TraceModel {
            records,
            top_k,
            attention,
            fallback: None,
        })
    }

    pub fn open(path: &Path) -> Result<Self, ModelError> {
        Self::new(read_trace(path)?)
    }

    /// Forwards queries missing from the trace to `model`.
    pub fn with_fallback(mut self, model: Fallback) -> Self {
        self.fallback = Some(model);
        self
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }
}

impl Recommender for TraceModel {
    fn recommend(&self, items: &[ItemId], k: usize) -> Result<Vec<Scored>, ModelError> {
        match self.top_k.get(items) {
            Some(list) if list.len() >= k => Ok(list[..k].to_vec()),
            _ => match &self.fallback {
                Some(m) => m.recommend(items, k),
                None => Err(ModelError::Unavailable(format!(
                    "no recorded top-{k} for session {items:?}"
                ))),
            },
        }
    }

    fn attention(&self, tokens: &[ItemId]) -> Result<AttentionMatrix, ModelError> {
        match self.attention.get(tokens) {
            Some(a) => Ok(a.clone()),
            None => match &self.fallback {
                Some(m) => m.attention(tokens),
                None => Err(ModelError::Unavailable(format!(
                    "no recorded attention for tokens {tokens:?}"
                ))),
            },
        }
    }
}
