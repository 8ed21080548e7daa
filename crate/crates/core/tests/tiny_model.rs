//! The tiny attention model checked against a plain scalar forward pass.

use causal_attn::ci::HeadSelection;
use causal_attn::graph::ItemId;
use causal_attn::model::tiny::{TinyModel, TinyWeights};
use causal_attn::model::Recommender;

fn matvec_row(x: &[f64], w: &[Vec<f64>]) -> Vec<f64> {
    let cols = w[0].len();
    (0..cols).map(|c| x.iter().zip(w).map(|(xi, row)| xi * row[c]).sum()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// One row-major matrix per head.
type PerHead = Vec<Vec<Vec<f64>>>;

/// Per-head attention and per-head outputs.
fn reference_layer(w: &TinyWeights, tokens: &[Option<ItemId>]) -> (PerHead, PerHead) {
    let dim = w.mask.len();
    let x: Vec<Vec<f64>> = tokens
        .iter()
        .enumerate()
        .map(|(p, t)| {
            let base = match t {
                Some(item) => &w.embeddings[item.0 as usize],
                None => &w.mask,
            };
            (0..dim).map(|c| base[c] + w.positions[p][c]).collect()
        })
        .collect();
    let scale = 1.0 / (dim as f64).sqrt();
    let mut attn = Vec::new();
    let mut outs = Vec::new();
    for h in &w.heads {
        let q: Vec<Vec<f64>> = x.iter().map(|r| matvec_row(r, &h.wq)).collect();
        let k: Vec<Vec<f64>> = x.iter().map(|r| matvec_row(r, &h.wk)).collect();
        let v: Vec<Vec<f64>> = x.iter().map(|r| matvec_row(r, &h.wv)).collect();
        let a: Vec<Vec<f64>> = q
            .iter()
            .map(|qi| softmax(&k.iter().map(|kj| dot(qi, kj) * scale).collect::<Vec<_>>()))
            .collect();
        let o: Vec<Vec<f64>> = a
            .iter()
            .map(|row| (0..dim).map(|c| row.iter().zip(&v).map(|(p, vj)| p * vj[c]).sum()).collect())
            .collect();
        attn.push(a);
        outs.push(o);
    }
    (attn, outs)
}

fn reference_scores(w: &TinyWeights, items: &[ItemId]) -> Vec<f64> {
    let mut tokens: Vec<Option<ItemId>> = items.iter().copied().map(Some).collect();
    tokens.push(None);
    let (_, outs) = reference_layer(w, &tokens);
    let last = tokens.len() - 1;
    let dim = w.mask.len();
    let h: Vec<f64> = (0..dim)
        .map(|c| outs.iter().map(|o| o[last][c]).sum::<f64>() / outs.len() as f64)
        .collect();
    w.embeddings.iter().map(|e| dot(e, &h)).collect()
}

fn items(ids: &[u32]) -> Vec<ItemId> {
    ids.iter().copied().map(ItemId).collect()
}

#[test]
fn scores_match_scalar_forward_pass() {
    let w = TinyWeights::random(30, 8, 3, 12, 11);
    let model = TinyModel::new(&w, HeadSelection::Mean).unwrap();
    for session in [vec![4], vec![3, 17, 9], vec![0, 29, 5, 6, 7, 21, 12, 13]] {
        let got = model.scores(&items(&session)).unwrap();
        let want = reference_scores(&w, &items(&session));
        assert_eq!(got.len(), want.len());
        for (g, r) in got.iter().zip(&want) {
            assert!((g - r).abs() < 1e-12, "{g} vs {r}");
        }
    }
}

#[test]
fn attention_matches_scalar_forward_pass() {
    let w = TinyWeights::random(20, 6, 2, 10, 3);
    let tokens = items(&[5, 1, 14, 8, 19]);
    let (heads, _) = reference_layer(&w, &tokens.iter().copied().map(Some).collect::<Vec<_>>());

    let mean = TinyModel::new(&w, HeadSelection::Mean).unwrap().attention(&tokens).unwrap();
    let second = TinyModel::new(&w, HeadSelection::Index(1)).unwrap().attention(&tokens).unwrap();
    for i in 0..tokens.len() {
        for j in 0..tokens.len() {
            let avg = (heads[0][i][j] + heads[1][i][j]) / 2.0;
            assert!((mean.values()[(i, j)] - avg).abs() < 1e-12);
            assert!((second.values()[(i, j)] - heads[1][i][j]).abs() < 1e-12);
        }
    }
    assert!(!mean.is_synthetic());
}

#[test]
fn recommendations_follow_scalar_ranking() {
    let w = TinyWeights::random(25, 8, 2, 10, 5);
    let model = TinyModel::new(&w, HeadSelection::Mean).unwrap();
    let session = items(&[2, 11, 7]);
    let scores = reference_scores(&w, &session);
    let mut ranked: Vec<(u32, f64)> = (0..25u32)
        .filter(|i| !session.contains(&ItemId(*i)))
        .map(|i| (i, scores[i as usize]))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let top: Vec<u32> = model.recommend(&session, 5).unwrap().iter().map(|s| s.item.0).collect();
    assert_eq!(top, ranked[..5].iter().map(|r| r.0).collect::<Vec<_>>());
}

#[test]
fn weights_load_from_json() {
    let w = TinyWeights::random(10, 4, 1, 6, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.json");
    std::fs::write(&path, serde_json::to_string(&w).unwrap()).unwrap();
    assert_eq!(TinyWeights::load(&path).unwrap(), w);
    std::fs::write(&path, "{").unwrap();
    assert!(TinyWeights::load(&path).is_err());
}
