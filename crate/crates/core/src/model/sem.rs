//! Linear-Gaussian structural equation models as ground-truth recommenders.
//!
//! Variables `0..observed` are catalogue items; variables
//! `observed..observed + latent` are hidden influences. A session reveals
//! the realised values of its items and the model recommends the unseen item
//! with the largest conditional mean. The model's "attention" is the
//! Cholesky factor of the session covariance, so the correlation derived
//! from it is exact.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{rank, ModelError, Recommender, Scored};
use crate::ci::AttentionMatrix;
use crate::dag::Dag;
use crate::graph::ItemId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemEdge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemSpec {
    pub observed: usize,
    pub latent: usize,
    pub edges: Vec<SemEdge>,
    /// Noise variance per variable, observed first.
    pub noise: Vec<f64>,
    pub seed: u64,
}

/// Shape of randomly generated models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemParams {
    pub observed: usize,
    pub latent: usize,
    /// Probability of each forward edge between observed variables.
    pub edge_prob: f64,
    /// Edge weight magnitudes are drawn uniformly from this range, sign at random.
    pub weight_range: (f64, f64),
    pub noise_range: (f64, f64),
}

impl Default for SemParams {
    fn default() -> Self {
        SemParams {
            observed: 8,
            latent: 2,
            edge_prob: 0.3,
            weight_range: (0.5, 1.5),
            noise_range: (0.5, 1.5),
        }
    }
}

impl SemSpec {
    pub fn total(&self) -> usize {
        self.observed + self.latent
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.total();
        if self.observed == 0 {
            return Err(ModelError::Invalid("no observed variables".into()));
        }
        if self.noise.len() != n {
            return Err(ModelError::Invalid(format!(
                "{} noise variances for {n} variables",
                self.noise.len()
            )));
        }
        if let Some(v) = self.noise.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(ModelError::Invalid(format!("noise variance {v} is not positive")));
        }
        if let Some(e) = self.edges.iter().find(|e| !e.weight.is_finite()) {
            return Err(ModelError::Invalid(format!("edge {}->{} weight is not finite", e.from, e.to)));
        }
        self.dag().map(|_| ())
    }

    pub fn dag(&self) -> Result<Dag, ModelError> {
        let pairs: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.from, e.to)).collect();
        Dag::from_edges(self.total(), &pairs)
            .ok_or_else(|| ModelError::Invalid("edges do not form a DAG over valid indices".into()))
    }

    /// `(I − W)⁻¹` where `W[to, from]` holds the edge weights.
    pub fn total_effects(&self) -> Result<DMatrix<f64>, ModelError> {
        self.validate()?;
        let n = self.total();
        let mut w = DMatrix::zeros(n, n);
        for e in &self.edges {
            w[(e.to, e.from)] += e.weight;
        }
        let m = (DMatrix::identity(n, n) - w)
            .try_inverse()
            .expect("I - W is unit-triangular up to permutation for a DAG");
        Ok(m)
    }

    /// Covariance over all variables, `M·diag(noise)·Mᵀ`.
    pub fn full_covariance(&self) -> Result<DMatrix<f64>, ModelError> {
        let m = self.total_effects()?;
        let d = DMatrix::from_diagonal(&DVector::from_vec(self.noise.clone()));
        let sigma = &m * d * m.transpose();
        Ok((&sigma + sigma.transpose()) * 0.5)
    }

    /// One joint draw of every variable, seeded by `self.seed`.
    pub fn sample(&self) -> Result<Vec<f64>, ModelError> {
        let m = self.total_effects()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = DVector::from_fn(self.total(), |i, _| {
            let z: f64 = rng.sample(StandardNormal);
            z * self.noise[i].sqrt()
        });
        Ok((m * noise).iter().copied().collect())
    }

    /// Random model: forward edges `i -> j` (`i < j`) among observed
    /// variables, and every latent confounding two distinct observed ones.
    pub fn random(params: &SemParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight = |rng: &mut ChaCha8Rng| {
            let (lo, hi) = params.weight_range;
            let w = rng.random_range(lo..=hi);
            if rng.random_bool(0.5) {
                w
            } else {
                -w
            }
        };
        let mut edges = Vec::new();
        for to in 0..params.observed {
            for from in 0..to {
                if rng.random_bool(params.edge_prob) {
                    edges.push(SemEdge {
                        from,
                        to,
                        weight: weight(&mut rng),
                    });
                }
            }
        }
        for h in 0..params.latent {
            if params.observed < 2 {
                break;
            }
            let a = rng.random_range(0..params.observed);
            let mut b = rng.random_range(0..params.observed - 1);
            if b >= a {
                b += 1;
            }
            for child in [a.min(b), a.max(b)] {
                edges.push(SemEdge {
                    from: params.observed + h,
                    to: child,
                    weight: weight(&mut rng),
                });
            }
        }
        let (lo, hi) = params.noise_range;
        let noise = (0..params.observed + params.latent)
            .map(|_| rng.random_range(lo..=hi))
            .collect();
        SemSpec {
            observed: params.observed,
            latent: params.latent,
            edges,
            noise,
            seed: rng.random(),
        }
    }
}

/// Covariance of the observed variables.
pub fn sem_covariance(spec: &SemSpec) -> Result<DMatrix<f64>, ModelError> {
    let full = spec.full_covariance()?;
    Ok(full.view((0, 0), (spec.observed, spec.observed)).into_owned())
}

/// Lower-triangular `A` with `A·Aᵀ = sigma`.
pub fn attention_from_covariance(sigma: &DMatrix<f64>) -> Result<AttentionMatrix, ModelError> {
    let chol = Cholesky::new(sigma.clone())
        .ok_or_else(|| ModelError::Invalid("covariance is not positive definite".into()))?;
    Ok(AttentionMatrix::synthetic_factor(chol.l())?)
}

/// A recommender backed by a linear-Gaussian model and one realised user.
#[derive(Debug, Clone)]
pub struct SemModel {
    covariance: DMatrix<f64>,
    values: Vec<f64>,
}

impl SemModel {
    /// `values` holds the realised value of every observed variable.
    pub fn new(spec: &SemSpec, values: Vec<f64>) -> Result<Self, ModelError> {
        let covariance = sem_covariance(spec)?;
        if values.len() != spec.observed {
            return Err(ModelError::Invalid(format!(
                "{} values for {} observed variables",
                values.len(),
                spec.observed
            )));
        }
        Ok(SemModel { covariance, values })
    }

    pub fn vocabulary_size(&self) -> usize {
        self.values.len()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    fn indices(&self, items: &[ItemId]) -> Result<Vec<usize>, ModelError> {
        let mut seen = vec![false; self.vocabulary_size()];
        items
            .iter()
            .map(|&item| {
                let i = item.0 as usize;
                if i >= seen.len() {
                    return Err(ModelError::OutOfVocabulary(item));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(ModelError::DuplicateItem(item));
                }
                Ok(i)
            })
            .collect()
    }

    fn sub_covariance(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.covariance[(idx[r], idx[c])])
    }

    /// `E[X_j | X_S = x_S]` for every observed `j` not in the session.
    pub fn conditional_means(&self, items: &[ItemId]) -> Result<Vec<(ItemId, f64)>, ModelError> {
        let idx = self.indices(items)?;
        let x = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.values[i]));
        let weights = if idx.is_empty() {
            DVector::zeros(0)
        } else {
            let chol = Cholesky::new(self.sub_covariance(&idx))
                .ok_or_else(|| ModelError::Invalid("session covariance is singular".into()))?;
            chol.solve(&x)
        };
        Ok((0..self.vocabulary_size())
            .filter(|j| !idx.contains(j))
            .map(|j| {
                let mean: f64 = idx
                    .iter()
                    .zip(weights.iter())
                    .map(|(&s, w)| self.covariance[(j, s)] * w)
                    .sum();
                (ItemId(j as u32), mean)
            })
            .collect())
    }
}

impl Recommender for SemModel {
    fn recommend(&self, items: &[ItemId], k: usize) -> Result<Vec<Scored>, ModelError> {
        let scored = self
            .conditional_means(items)?
            .into_iter()
            .map(|(item, mean)| Scored::new(item, mean))
            .collect();
        Ok(rank(scored, k))
    }

    fn attention(&self, tokens: &[ItemId]) -> Result<AttentionMatrix, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptySession);
        }
        let idx = self.indices(tokens)?;
        attention_from_covariance(&self.sub_covariance(&idx))
    }
}

/// A session drawn from a random model, with the realised user values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSession {
    pub id: String,
    pub spec: SemSpec,
    pub items: Vec<ItemId>,
    pub values: Vec<f64>,
}

impl SyntheticSession {
    pub fn model(&self) -> Result<SemModel, ModelError> {
        SemModel::new(&self.spec, self.values.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkParams {
    pub sem: SemParams,
    pub session_len: usize,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        BenchmarkParams {
            sem: SemParams {
                observed: 14,
                latent: 2,
                edge_prob: 0.2,
                weight_range: (0.5, 1.5),
                noise_range: (0.5, 1.5),
            },
            session_len: 6,
        }
    }
}

/// `count` seeded sessions; session items are listed in causal order.
pub fn synthetic_benchmark(
    seed: u64,
    count: usize,
    params: &BenchmarkParams,
) -> Result<Vec<SyntheticSession>, ModelError> {
    if params.session_len == 0 || params.session_len >= params.sem.observed {
        return Err(ModelError::Invalid(format!(
            "session length {} must be in 1..{}",
            params.session_len, params.sem.observed
        )));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let spec = SemSpec::random(&params.sem, master.random());
            let all = spec.sample()?;
            let values = all[..spec.observed].to_vec();
            let mut items: Vec<usize> =
                rand::seq::index::sample(&mut master, spec.observed, params.session_len).into_vec();
            items.sort_unstable();
            Ok(SyntheticSession {
                id: format!("s{i:04}"),
                items: items.into_iter().map(|v| ItemId(v as u32)).collect(),
                spec,
                values,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(observed: usize, latent: usize, edges: &[(usize, usize, f64)]) -> SemSpec {
        SemSpec {
            observed,
            latent,
            edges: edges
                .iter()
                .map(|&(from, to, weight)| SemEdge { from, to, weight })
                .collect(),
            noise: vec![1.0; observed + latent],
            seed: 1,
        }
    }

    #[test]
    fn no_edges_unit_noise_is_identity() {
        let s = spec(3, 0, &[]);
        assert_eq!(sem_covariance(&s).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn single_edge_covariance() {
        let b = 0.7;
        let c = sem_covariance(&spec(2, 0, &[(0, 1, b)])).unwrap();
        assert!((c[(1, 1)] - (1.0 + b * b)).abs() < 1e-12);
        assert!((c[(0, 1)] - b).abs() < 1e-12);
        assert!((c[(1, 0)] - b).abs() < 1e-12);
    }

    #[test]
    fn chain_covariance_by_path_tracing() {
        let (b, c) = (0.8, -1.3);
        let cov = sem_covariance(&spec(3, 0, &[(0, 1, b), (1, 2, c)])).unwrap();
        assert!((cov[(0, 2)] - b * c).abs() < 1e-12);
    }

    #[test]
    fn latents_are_marginalised() {
        // hidden 2 confounds 0 and 1
        let cov = sem_covariance(&spec(2, 1, &[(2, 0, 1.0), (2, 1, 2.0)])).unwrap();
        assert_eq!(cov.shape(), (2, 2));
        assert!((cov[(0, 1)] - 2.0).abs() < 1e-12);
        assert!((cov[(1, 1)] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        assert!(spec(2, 0, &[(0, 1, 1.0), (1, 0, 1.0)]).validate().is_err());
        assert!(spec(2, 0, &[(0, 5, 1.0)]).validate().is_err());
        assert!(spec(2, 0, &[(0, 1, f64::NAN)]).validate().is_err());
        let mut s = spec(2, 0, &[]);
        s.noise[1] = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn cholesky_factor_examples() {
        let a = attention_from_covariance(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(a.values(), &DMatrix::identity(3, 3));
        assert!(a.is_synthetic());

        let b = 0.6;
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, b, b, 1.0 + b * b]);
        let a = attention_from_covariance(&sigma).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, b, 1.0]);
        assert!((a.values() - expected).abs().max() < 1e-12);

        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(attention_from_covariance(&not_pd).is_err());
    }

    #[test]
    fn random_factor_multiplies_back() {
        for seed in 0..20 {
            let s = SemSpec::random(&SemParams::default(), seed);
            let sigma = sem_covariance(&s).unwrap();
            let a = attention_from_covariance(&sigma).unwrap();
            let back = a.values() * a.values().transpose();
            assert!((back - &sigma).abs().max() < 1e-10);
        }
    }

    #[test]
    fn conditional_mean_recommendation() {
        // 0 -> 3 strongly, 1 -> 4 weakly, 2 isolated
        let s = spec(5, 0, &[(0, 3, 1.0), (1, 4, 0.5)]);
        let model = SemModel::new(&s, vec![2.0, 1.0, 0.3, 0.0, 0.0]).unwrap();
        let session = [ItemId(0), ItemId(1), ItemId(2)];
        let top = model.recommend(&session, 5).unwrap();
        assert_eq!(top.len(), 2);
        assert_eq!(top[0].item, ItemId(3));
        assert!((top[0].score.0 - 2.0).abs() < 1e-12);
        assert!((top[1].score.0 - 0.5).abs() < 1e-12);
        let without = model.recommend(&[ItemId(1), ItemId(2)], 5).unwrap();
        assert_eq!(without[0].item, ItemId(4));
        assert!(model.recommend(&[ItemId(9)], 1).is_err());
        assert!(model.recommend(&[ItemId(1), ItemId(1)], 1).is_err());
    }

    #[test]
    fn model_is_deterministic() {
        let bench = synthetic_benchmark(3, 4, &BenchmarkParams::default()).unwrap();
        for s in &bench {
            let m = s.model().unwrap();
            assert_eq!(m.recommend(&s.items, 5).unwrap(), m.recommend(&s.items, 5).unwrap());
            assert_eq!(m.attention(&s.items).unwrap(), m.attention(&s.items).unwrap());
            assert!(m.recommend(&s.items, 5).unwrap().iter().all(|r| !s.items.contains(&r.item)));
        }
        assert_eq!(bench, synthetic_benchmark(3, 4, &BenchmarkParams::default()).unwrap());
    }

    #[test]
    fn sampling_is_seeded() {
        let s = SemSpec::random(&SemParams::default(), 9);
        assert_eq!(s.sample().unwrap(), s.sample().unwrap());
        assert_eq!(s.sample().unwrap().len(), s.total());
    }
}
