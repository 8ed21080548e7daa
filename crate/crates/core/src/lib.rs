//! Session-specific causal graphs learned from recommender attention, and
//! counterfactual explanations read off those graphs.

pub mod ci;
pub mod dag;
pub mod discovery;
pub mod eval;
pub mod explain;
pub mod graph;
pub mod model;
pub mod pi;
mod svg;

#[cfg(test)]
mod fixtures;

pub use ci::{AttentionMatrix, CiDecision, CiError, CorrelationMatrix, HeadSelection, IndependenceTest};
pub use discovery::{DiscoveryConfig, DiscoveryError, PossibleDsep, RuleSet};
pub use graph::{EdgeMark, GraphError, ItemId, Pag, SepsetTable};
pub use eval::{eval_run, summarize, EvalCase, EvalRecord};
pub use explain::{causal_main, find_explanation, ExplainConfig, ExplainError, ExplanationResult, Method, PoolPolicy};
pub use model::{ModelError, Recommender, Scored, Session};
pub use pi::{build_pi_tree, enumerate_pi_sets, is_pi_path, CircleMode, PiSet, PiTree};
