//! Counterfactual explanations for a top-1 recommendation.
//!
//! The causal method appends the recommendation to the session, turns the
//! model's attention over that input into a correlation matrix, learns a PAG
//! and then removes PI-sets of growing radius until the top-1 changes. The
//! attention baseline removes items in order of their attention weight.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ci::{correlation_from_attention, AttentionMatrix, CiError, PartialCorrelationTest};
use crate::discovery::{learn_pag, DiscoveryConfig, DiscoveryError};
use crate::graph::{GraphError, ItemId, Pag};
use crate::model::{ModelError, Recommender, Scored, Session};
use crate::pi::{build_pi_tree, CircleMode, PiSetLevels};

pub const NO_EXPLANATION_HINT: &str =
    "no explanation found at this significance level; consider a higher alpha";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExplainError {
    #[error("model query failed with items {candidate:?} removed: {source}")]
    Probe {
        candidate: Vec<ItemId>,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ci(#[from] CiError),
    #[error(transparent)]
    Discovery(#[from] DiscoveryError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Causal,
    Attention,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Causal => "causal",
            Method::Attention => "attention",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which replacements are acceptable.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PoolPolicy {
    /// Any item other than the recommendation.
    Any,
    /// The original top-k without the top-1.
    #[default]
    TopK,
    Items(BTreeSet<ItemId>),
}

impl PoolPolicy {
    pub fn resolve(&self, top_k: &[Scored]) -> Option<BTreeSet<ItemId>> {
        match self {
            PoolPolicy::Any => None,
            PoolPolicy::TopK => Some(top_k.iter().skip(1).map(|s| s.item).collect()),
            PoolPolicy::Items(items) => Some(items.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub top_k: usize,
    pub discovery: DiscoveryConfig,
    pub circle_mode: CircleMode,
    pub pool: PoolPolicy,
    /// Sample size for the Fisher-z test; defaults to the token count.
    pub sample_size: Option<u64>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            top_k: 5,
            discovery: DiscoveryConfig::default(),
            circle_mode: CircleMode::default(),
            pool: PoolPolicy::default(),
            sample_size: None,
        }
    }
}

/// One counterfactual model query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    /// Session positions removed, ascending.
    pub removed: Vec<usize>,
    pub top1: ItemId,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    /// Session positions, ascending.
    pub positions: Vec<usize>,
    pub items: Vec<ItemId>,
}

impl Explanation {
    pub fn size(&self) -> usize {
        self.positions.len()
    }
}

/// Outcome of a removal search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Search {
    pub explanation: Option<Explanation>,
    pub alternative: Option<ItemId>,
    /// Model queries including the initial recommendation.
    pub forward_passes: usize,
    pub probes: Vec<Probe>,
}

impl Search {
    fn new() -> Self {
        Search {
            explanation: None,
            alternative: None,
            forward_passes: 1,
            probes: Vec::new(),
        }
    }

    /// Queries the model with `removed` positions dropped; returns whether it was accepted.
    fn probe<M: Recommender + ?Sized>(
        &mut self,
        model: &M,
        session: &Session,
        removed: Vec<usize>,
        rec: ItemId,
        pool: Option<&BTreeSet<ItemId>>,
    ) -> Result<bool, ExplainError> {
        let remaining = session.without_positions(&removed);
        let candidate = || removed.iter().map(|&p| session.items()[p]).collect::<Vec<_>>();
        let top = model
            .recommend(&remaining, 1)
            .map_err(|source| ExplainError::Probe {
                candidate: candidate(),
                source,
            })?;
        let top1 = top
            .first()
            .ok_or_else(|| ExplainError::Probe {
                candidate: candidate(),
                source: ModelError::NoRecommendation,
            })?
            .item;
        self.forward_passes += 1;
        let accepted = top1 != rec && pool.is_none_or(|p| p.contains(&top1));
        if accepted {
            self.explanation = Some(Explanation {
                items: candidate(),
                positions: removed.clone(),
            });
            self.alternative = Some(top1);
        }
        self.probes.push(Probe {
            removed,
            top1,
            accepted,
        });
        Ok(accepted)
    }
}

/// Tries PI-sets of radius 1..n−1 in order and stops at the first one whose
/// removal changes the top-1 to an acceptable item.
///
/// `g` is the PAG over the session followed by `rec`, so `rec` is node `n`.
pub fn find_explanation<M: Recommender + ?Sized>(
    g: &Pag,
    model: &M,
    session: &Session,
    rec: ItemId,
    pool: Option<&BTreeSet<ItemId>>,
    mode: CircleMode,
) -> Result<Search, ExplainError> {
    let n = session.len();
    if g.len() != n + 1 {
        return Err(ExplainError::Invalid(format!(
            "graph has {} nodes for a session of {n} items plus the recommendation",
            g.len()
        )));
    }
    let tree = build_pi_tree(g, n, mode)?;
    let mut search = Search::new();
    for level in PiSetLevels::new(&tree).take(n.saturating_sub(1)) {
        for set in level {
            if search.probe(model, session, set.members, rec, pool)? {
                return Ok(search);
            }
        }
    }
    Ok(search)
}

/// Removes items cumulatively in descending attention order, taken from the
/// recommendation's row of the attention over the extended input.
///
/// Signed synthetic factors are ranked by magnitude. Ties go to the later
/// position.
pub fn atten_baseline<M: Recommender + ?Sized>(
    model: &M,
    session: &Session,
    rec: ItemId,
    pool: Option<&BTreeSet<ItemId>>,
    attention: &AttentionMatrix,
) -> Result<Search, ExplainError> {
    let n = session.len();
    if attention.len() != n + 1 {
        return Err(ExplainError::Invalid(format!(
            "attention over {} tokens for a session of {n} items plus the recommendation",
            attention.len()
        )));
    }
    let row = attention.row(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()).then(b.cmp(&a)));
    let mut search = Search::new();
    let mut removed = Vec::new();
    for &p in order.iter().take(n.saturating_sub(1)) {
        removed.push(p);
        let mut sorted = removed.clone();
        sorted.sort_unstable();
        if search.probe(model, session, sorted, rec, pool)? {
            break;
        }
    }
    Ok(search)
}

/// Everything produced for one session by one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationResult {
    pub method: Method,
    pub session: Vec<ItemId>,
    pub recommendation: ItemId,
    pub top_k: Vec<Scored>,
    pub explanation: Option<Explanation>,
    pub alternative: Option<ItemId>,
    pub radius: Option<usize>,
    pub forward_passes: usize,
    pub probes: Vec<Probe>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pag: Option<Pag>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hint: Option<String>,
}

impl ExplanationResult {
    fn from_search(
        method: Method,
        session: &Session,
        top_k: Vec<Scored>,
        search: Search,
        pag: Option<Pag>,
    ) -> Self {
        let hint = search.explanation.is_none().then(|| NO_EXPLANATION_HINT.to_string());
        ExplanationResult {
            method,
            session: session.items().to_vec(),
            recommendation: top_k[0].item,
            radius: search.explanation.as_ref().map(Explanation::size),
            top_k,
            explanation: search.explanation,
            alternative: search.alternative,
            forward_passes: search.forward_passes,
            probes: search.probes,
            pag,
            hint,
        }
    }

    pub fn found(&self) -> bool {
        self.explanation.is_some()
    }

    /// 1-based rank of the replacement in the original top-k.
    pub fn replacement_position(&self) -> Option<usize> {
        let alt = self.alternative?;
        self.top_k.iter().position(|s| s.item == alt).map(|p| p + 1)
    }
}

struct Prepared {
    top_k: Vec<Scored>,
    rec: ItemId,
    attention: AttentionMatrix,
    pool: Option<BTreeSet<ItemId>>,
}

fn prepare<M: Recommender + ?Sized>(
    session: &Session,
    model: &M,
    cfg: &ExplainConfig,
) -> Result<Prepared, ExplainError> {
    if session.len() < 2 {
        return Err(ExplainError::Invalid("a session needs at least two items".into()));
    }
    if cfg.top_k == 0 {
        return Err(ExplainError::Invalid("top-k must be at least 1".into()));
    }
    let top_k = model.recommend(session.items(), cfg.top_k)?;
    let rec = top_k.first().ok_or(ModelError::NoRecommendation)?.item;
    let attention = model.attention(&session.extended_with(rec))?;
    if attention.len() != session.len() + 1 {
        return Err(ExplainError::Invalid(format!(
            "model returned attention over {} tokens for {} inputs",
            attention.len(),
            session.len() + 1
        )));
    }
    let pool = cfg.pool.resolve(&top_k);
    Ok(Prepared {
        top_k,
        rec,
        attention,
        pool,
    })
}

/// PAG over the session followed by `rec`, learned from `attention`.
pub fn learn_session_graph(
    session: &Session,
    rec: ItemId,
    attention: &AttentionMatrix,
    cfg: &ExplainConfig,
) -> Result<Pag, ExplainError> {
    let mut rho = correlation_from_attention(attention)?;
    if let Some(n) = cfg.sample_size {
        rho = rho.with_sample_size(n);
    }
    let test = PartialCorrelationTest::new(&rho);
    let (pag, _) = learn_pag(&test, session.extended_with(rec), &cfg.discovery)?;
    Ok(pag)
}

/// The full causal pipeline for one session.
pub fn causal_main<M: Recommender + ?Sized>(
    session: &Session,
    model: &M,
    cfg: &ExplainConfig,
) -> Result<ExplanationResult, ExplainError> {
    let p = prepare(session, model, cfg)?;
    let pag = learn_session_graph(session, p.rec, &p.attention, cfg)?;
    let search = find_explanation(&pag, model, session, p.rec, p.pool.as_ref(), cfg.circle_mode)?;
    Ok(ExplanationResult::from_search(Method::Causal, session, p.top_k, search, Some(pag)))
}

/// The attention baseline for one session.
pub fn attention_main<M: Recommender + ?Sized>(
    session: &Session,
    model: &M,
    cfg: &ExplainConfig,
) -> Result<ExplanationResult, ExplainError> {
    let p = prepare(session, model, cfg)?;
    let search = atten_baseline(model, session, p.rec, p.pool.as_ref(), &p.attention)?;
    Ok(ExplanationResult::from_search(Method::Attention, session, p.top_k, search, None))
}

pub fn explain<M: Recommender + ?Sized>(
    method: Method,
    session: &Session,
    model: &M,
    cfg: &ExplainConfig,
) -> Result<ExplanationResult, ExplainError> {
    match method {
        Method::Causal => causal_main(session, model, cfg),
        Method::Attention => attention_main(session, model, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ci::AttentionMatrix;
    use crate::fixtures::search_radius_example;
    use crate::model::sem::{SemEdge, SemModel, SemSpec};
    use std::cell::RefCell;

    /// Ranks a fixed slate, promoting `fallback` once any trigger item is gone.
    struct Scripted {
        slate: Vec<u32>,
        triggers: Vec<u32>,
        fallback: u32,
        calls: RefCell<Vec<Vec<ItemId>>>,
    }

    impl Scripted {
        fn new(triggers: &[u32], fallback: u32) -> Self {
            Scripted {
                slate: vec![14, 20, 21, 22, 23],
                triggers: triggers.to_vec(),
                fallback,
                calls: RefCell::new(Vec::new()),
            }
        }
    }

    impl Recommender for Scripted {
        fn recommend(&self, items: &[ItemId], k: usize) -> Result<Vec<Scored>, ModelError> {
            self.calls.borrow_mut().push(items.to_vec());
            let flipped = self.triggers.iter().any(|t| !items.contains(&ItemId(*t)));
            let mut order = self.slate.clone();
            if flipped {
                order.retain(|&i| i != self.fallback);
                order.insert(0, self.fallback);
            }
            Ok(order
                .iter()
                .take(k)
                .enumerate()
                .map(|(i, &item)| Scored::new(ItemId(item), -(i as f64)))
                .collect())
        }

        fn attention(&self, tokens: &[ItemId]) -> Result<AttentionMatrix, ModelError> {
            let n = tokens.len();
            Ok(AttentionMatrix::from_rows(&vec![vec![1.0 / n as f64; n]; n])?)
        }
    }

    fn session() -> Session {
        Session::new(vec![ItemId(10), ItemId(11), ItemId(12), ItemId(13)]).unwrap()
    }

    fn pool() -> BTreeSet<ItemId> {
        [20, 21, 22, 23].map(ItemId).into()
    }

    #[test]
    fn removing_the_driver_flips_the_recommendation() {
        let model = Scripted::new(&[11], 21);
        let g = search_radius_example();
        let s = find_explanation(&g, &model, &session(), ItemId(14), Some(&pool()), CircleMode::Strict).unwrap();
        let e = s.explanation.unwrap();
        assert_eq!(e.items, vec![ItemId(11)]);
        assert_eq!(e.positions, vec![1]);
        assert_eq!(s.alternative, Some(ItemId(21)));
        // {I3} is tried first, then {I2}
        assert_eq!(s.probes.iter().map(|p| p.removed.clone()).collect::<Vec<_>>(), vec![vec![2], vec![1]]);
        assert_eq!(s.forward_passes, 3);
        assert_eq!(model.calls.borrow().len(), 2);
    }

    #[test]
    fn empty_pool_never_accepts() {
        let model = Scripted::new(&[11], 21);
        let s = find_explanation(
            &search_radius_example(),
            &model,
            &session(),
            ItemId(14),
            Some(&BTreeSet::new()),
            CircleMode::Strict,
        )
        .unwrap();
        assert!(s.explanation.is_none() && s.alternative.is_none());
        assert_eq!(s.probes.len(), 5);
        assert_eq!(s.forward_passes, 6);
    }

    #[test]
    fn constant_model_exhausts_candidates() {
        let model = Scripted::new(&[], 21);
        let s = find_explanation(&search_radius_example(), &model, &session(), ItemId(14), None, CircleMode::Strict)
            .unwrap();
        assert!(s.explanation.is_none());
        let removed: Vec<Vec<usize>> = s.probes.iter().map(|p| p.removed.clone()).collect();
        assert_eq!(removed, vec![vec![2], vec![1], vec![1, 2], vec![0, 2], vec![0, 1, 2]]);
        assert!(s.probes.iter().all(|p| p.top1 == ItemId(14) && !p.accepted));
    }

    #[test]
    fn replacement_outside_pool_is_rejected() {
        let model = Scripted::new(&[12], 99);
        let s = find_explanation(
            &search_radius_example(),
            &model,
            &session(),
            ItemId(14),
            Some(&pool()),
            CircleMode::Strict,
        )
        .unwrap();
        assert!(s.explanation.is_none());
        let any = find_explanation(&search_radius_example(), &model, &session(), ItemId(14), None, CircleMode::Strict)
            .unwrap();
        assert_eq!(any.alternative, Some(ItemId(99)));
        assert_eq!(any.explanation.unwrap().items, vec![ItemId(12)]);
    }

    #[test]
    fn graph_size_must_match_session() {
        let model = Scripted::new(&[], 21);
        let short = Session::new(vec![ItemId(10), ItemId(11)]).unwrap();
        assert!(matches!(
            find_explanation(&search_radius_example(), &model, &short, ItemId(14), None, CircleMode::Strict),
            Err(ExplainError::Invalid(_))
        ));
    }

    fn weighted(rows: &[[f64; 5]]) -> AttentionMatrix {
        AttentionMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn baseline_attention() -> AttentionMatrix {
        let u = [0.2; 5];
        weighted(&[u, u, u, u, [0.1, 0.3, 0.15, 0.25, 0.2]])
    }

    #[test]
    fn baseline_single_highest_weight_flip() {
        let model = Scripted::new(&[11], 21);
        let s = atten_baseline(&model, &session(), ItemId(14), Some(&pool()), &baseline_attention()).unwrap();
        assert_eq!(s.explanation.unwrap().items, vec![ItemId(11)]);
        assert_eq!(s.forward_passes, 2);
    }

    #[test]
    fn baseline_probes_follow_attention_order() {
        let model = Scripted::new(&[], 21);
        let s = atten_baseline(&model, &session(), ItemId(14), None, &baseline_attention()).unwrap();
        assert!(s.explanation.is_none());
        assert_eq!(s.forward_passes, 4);
        let removed: Vec<Vec<usize>> = s.probes.iter().map(|p| p.removed.clone()).collect();
        // weights: position 1 (0.3), 3 (0.25), 2 (0.15), 0 (0.1)
        assert_eq!(removed, vec![vec![1], vec![1, 3], vec![1, 2, 3]]);
    }

    #[test]
    fn baseline_grows_until_flip() {
        let model = Scripted::new(&[12], 22);
        let s = atten_baseline(&model, &session(), ItemId(14), Some(&pool()), &baseline_attention()).unwrap();
        assert_eq!(s.explanation.unwrap().positions, vec![1, 2, 3]);
        assert_eq!(s.alternative, Some(ItemId(22)));
        assert_eq!(s.forward_passes, s.probes.len() + 1);
    }

    fn sem(edges: &[(usize, usize, f64)], values: Vec<f64>) -> SemModel {
        let spec = SemSpec {
            observed: values.len(),
            latent: 0,
            edges: edges.iter().map(|&(from, to, weight)| SemEdge { from, to, weight }).collect(),
            noise: vec![1.0; values.len()],
            seed: 0,
        };
        SemModel::new(&spec, values).unwrap()
    }

    fn oracle_config() -> ExplainConfig {
        ExplainConfig {
            sample_size: Some(1_000_000),
            ..ExplainConfig::default()
        }
    }

    #[test]
    fn single_driver_is_found_at_radius_one() {
        let model = sem(&[(0, 4, 1.5), (1, 5, 0.5)], vec![3.0, 0.5, -0.2, 1.0, 0.0, 0.0]);
        let s = Session::new((0..4).map(ItemId).collect()).unwrap();
        let r = causal_main(&s, &model, &oracle_config()).unwrap();
        assert_eq!(r.recommendation, ItemId(4));
        assert_eq!(r.explanation.as_ref().unwrap().items, vec![ItemId(0)]);
        assert_eq!(r.radius, Some(1));
        assert_eq!(r.alternative, Some(ItemId(5)));
        assert_eq!(r.replacement_position(), Some(2));
        // exhaustive oracle: only removing item 0 changes the top-1
        for p in 0..4 {
            let top = model.recommend(&s.without_positions(&[p]), 1).unwrap()[0].item;
            assert_eq!(top != ItemId(4), p == 0);
        }
        let pag = r.pag.unwrap();
        assert_eq!(pag.edge_count(), 1);
        assert!(pag.adjacent(0, 4).unwrap());
    }

    #[test]
    fn independent_items_give_no_explanation() {
        let model = sem(&[], vec![1.0, 2.0, 3.0, 0.0, 0.0]);
        let s = Session::new((0..3).map(ItemId).collect()).unwrap();
        let r = causal_main(&s, &model, &oracle_config()).unwrap();
        assert_eq!(r.pag.as_ref().unwrap().edge_count(), 0);
        assert!(!r.found());
        assert_eq!(r.forward_passes, 1);
        assert_eq!(r.hint.as_deref(), Some(NO_EXPLANATION_HINT));
    }

    #[test]
    fn result_json_round_trips() {
        let model = sem(&[(0, 4, 1.5), (1, 5, 0.5)], vec![3.0, 0.5, -0.2, 1.0, 0.0, 0.0]);
        let s = Session::new((0..4).map(ItemId).collect()).unwrap();
        let r = causal_main(&s, &model, &oracle_config()).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<ExplanationResult>(&text).unwrap(), r);
        assert_eq!(text, serde_json::to_string(&causal_main(&s, &model, &oracle_config()).unwrap()).unwrap());
    }

    #[test]
    fn short_sessions_are_rejected() {
        let model = Scripted::new(&[], 21);
        let s = Session::new(vec![ItemId(10)]).unwrap();
        assert!(matches!(causal_main(&s, &model, &ExplainConfig::default()), Err(ExplainError::Invalid(_))));
    }

    #[test]
    fn probe_failures_carry_the_candidate() {
        struct Failing;
        impl Recommender for Failing {
            fn recommend(&self, items: &[ItemId], _k: usize) -> Result<Vec<Scored>, ModelError> {
                if items.len() == 4 {
                    Ok(vec![Scored::new(ItemId(14), 1.0)])
                } else {
                    Err(ModelError::Unavailable("offline".into()))
                }
            }
            fn attention(&self, _: &[ItemId]) -> Result<AttentionMatrix, ModelError> {
                unreachable!()
            }
        }
        let err = find_explanation(&search_radius_example(), &Failing, &session(), ItemId(14), None, CircleMode::Strict)
            .unwrap_err();
        assert_eq!(
            err,
            ExplainError::Probe {
                candidate: vec![ItemId(12)],
                source: ModelError::Unavailable("offline".into())
            }
        );
    }
}
