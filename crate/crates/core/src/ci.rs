//! Correlation from last-layer attention and a partial-correlation
//! conditional-independence test.
//!
//! The covariance is `K = A·Aᵀ` over the rows of the attention matrix and the
//! correlation is `K(i,j) / sqrt(K(i,i)·K(j,j))`. Conditional independence is
//! decided with a Fisher-z test on the partial correlation.

use std::cell::RefCell;
use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Row-sum tolerance for softmax attention rows.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;
/// `|ρ|` is clamped to this before `atanh`.
pub const MAX_ABS_CORRELATION: f64 = 1.0 - 1e-12;
const PIVOT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CiError {
    #[error("attention matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("attention matrix is empty")]
    Empty,
    #[error("attention entry ({row}, {col}) = {value} is negative or not finite")]
    BadEntry { row: usize, col: usize, value: f64 },
    #[error("attention row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("attention row {0} is degenerate (zero norm)")]
    DegenerateRow(usize),
    #[error("head selection: {0}")]
    Heads(String),
    #[error("index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("invalid conditioning query: {0}")]
    InvalidQuery(String),
    #[error("conditioning submatrix over {0:?} is numerically singular")]
    Singular(Vec<usize>),
    #[error("effective sample size {n} is too small for a conditioning set of size {cond}; cap the conditioning-set size at {max}")]
    SampleTooSmall { n: u64, cond: usize, max: i64 },
    #[error("significance level {0} is outside (0, 1)")]
    BadAlpha(f64),
}

/// How multi-head attention is reduced to one matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HeadSelection {
    #[default]
    Mean,
    Index(usize),
}

impl std::str::FromStr for HeadSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("mean") {
            return Ok(HeadSelection::Mean);
        }
        s.parse::<usize>()
            .map(HeadSelection::Index)
            .map_err(|_| format!("expected `mean` or a head index, got `{s}`"))
    }
}

/// Square attention matrix over the tokens of an (extended) session.
///
/// Regular matrices are row-stochastic and non-negative. Synthetic factors
/// produced from an analytic covariance are exempt from both checks and are
/// flagged as such.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    values: DMatrix<f64>,
    synthetic: bool,
}

impl AttentionMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self, CiError> {
        Self::check_square(&values)?;
        for r in 0..values.nrows() {
            let mut sum = 0.0;
            for c in 0..values.ncols() {
                let v = values[(r, c)];
                if !v.is_finite() || v < 0.0 {
                    return Err(CiError::BadEntry { row: r, col: c, value: v });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(CiError::RowSum { row: r, sum });
            }
        }
        Ok(AttentionMatrix {
            values,
            synthetic: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, CiError> {
        Self::new(matrix_from_rows(rows)?)
    }

    /// Factor of an analytic covariance; only squareness and finiteness are checked.
    pub fn synthetic_factor(values: DMatrix<f64>) -> Result<Self, CiError> {
        Self::check_square(&values)?;
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let n = values.nrows();
            return Err(CiError::BadEntry { row: i % n, col: i / n, value: *v });
        }
        Ok(AttentionMatrix {
            values,
            synthetic: true,
        })
    }

    fn check_square(values: &DMatrix<f64>) -> Result<(), CiError> {
        if values.nrows() == 0 {
            return Err(CiError::Empty);
        }
        if values.nrows() != values.ncols() {
            return Err(CiError::NotSquare {
                rows: values.nrows(),
                cols: values.ncols(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn is_synthetic(&self) -> bool {
        self.synthetic
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row(i)).collect()
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CiError> {
    let n = rows.len();
    if n == 0 {
        return Err(CiError::Empty);
    }
    let cols = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(CiError::NotSquare { rows: n, cols: bad.len() });
    }
    Ok(DMatrix::from_fn(n, cols, |r, c| rows[r][c]))
}

/// Reduces per-head attention of one layer to a single matrix.
pub fn aggregate_heads(
    heads: &[DMatrix<f64>],
    selection: HeadSelection,
) -> Result<AttentionMatrix, CiError> {
    let first = heads
        .first()
        .ok_or_else(|| CiError::Heads("no heads supplied".into()))?;
    if heads.iter().any(|h| h.shape() != first.shape()) {
        return Err(CiError::Heads("heads differ in shape".into()));
    }
    match selection {
        HeadSelection::Index(i) => heads
            .get(i)
            .cloned()
            .ok_or_else(|| CiError::Heads(format!("head {i} of {}", heads.len())))
            .and_then(AttentionMatrix::new),
        HeadSelection::Mean => {
            let mut sum = DMatrix::zeros(first.nrows(), first.ncols());
            for h in heads {
                sum += h;
            }
            AttentionMatrix::new(sum / heads.len() as f64)
        }
    }
}

/// Correlation matrix plus the sample size used by the significance test.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    values: DMatrix<f64>,
    effective_sample_size: u64,
}

impl CorrelationMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn effective_sample_size(&self) -> u64 {
        self.effective_sample_size
    }

    pub fn with_sample_size(mut self, n: u64) -> Self {
        self.effective_sample_size = n.max(1);
        self
    }

    /// Normalises a covariance matrix. The sample size defaults to the dimension.
    pub fn from_covariance(k: &DMatrix<f64>) -> Result<Self, CiError> {
        let n = k.nrows();
        if n == 0 {
            return Err(CiError::Empty);
        }
        if k.ncols() != n {
            return Err(CiError::NotSquare { rows: n, cols: k.ncols() });
        }
        let mut scale = Vec::with_capacity(n);
        for i in 0..n {
            let d = k[(i, i)];
            if !(d.is_finite() && d > 0.0) {
                return Err(CiError::DegenerateRow(i));
            }
            scale.push(d.sqrt());
        }
        let mut rho = DMatrix::identity(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (k[(i, j)] / (scale[i] * scale[j])).clamp(-1.0, 1.0);
                rho[(i, j)] = v;
                rho[(j, i)] = v;
            }
        }
        Ok(CorrelationMatrix {
            values: rho,
            effective_sample_size: n as u64,
        })
    }

    /// Partial correlation of `i` and `j` given `z`, from the precision
    /// matrix of the `{i, j} ∪ z` submatrix.
    pub fn partial_correlation(&self, i: usize, j: usize, z: &[usize]) -> Result<f64, CiError> {
        let n = self.len();
        for &idx in [i, j].iter().chain(z) {
            if idx >= n {
                return Err(CiError::IndexOutOfRange(idx));
            }
        }
        if i == j {
            return Err(CiError::InvalidQuery(format!("i = j = {i}")));
        }
        if z.contains(&i) || z.contains(&j) {
            return Err(CiError::InvalidQuery("conditioning set contains an endpoint".into()));
        }
        if z.is_empty() {
            return Ok(self.values[(i, j)]);
        }
        let idx: Vec<usize> = [i, j].iter().chain(z).copied().collect();
        let m = idx.len();
        let sub = DMatrix::from_fn(m, m, |r, c| self.values[(idx[r], idx[c])]);
        let chol = Cholesky::new(sub).ok_or_else(|| CiError::Singular(idx.clone()))?;
        if chol.l_dirty().diagonal().iter().any(|d| d * d <= PIVOT_FLOOR) {
            return Err(CiError::Singular(idx));
        }
        let precision = chol.inverse();
        let denom = (precision[(0, 0)] * precision[(1, 1)]).sqrt();
        let value = -precision[(0, 1)] / denom;
        if !value.is_finite() || value.abs() > 1.0 + 1e-9 {
            return Err(CiError::Singular(idx));
        }
        Ok(value.clamp(-1.0, 1.0))
    }

    /// Fisher-z test of `i ⫫ j | z` at level `alpha`.
    pub fn ci_test(&self, i: usize, j: usize, z: &[usize], alpha: f64) -> Result<CiDecision, CiError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CiError::BadAlpha(alpha));
        }
        let n = self.effective_sample_size;
        let dof = n as f64 - z.len() as f64 - 3.0;
        if dof < 1.0 {
            return Err(CiError::SampleTooSmall {
                n,
                cond: z.len(),
                max: n as i64 - 4,
            });
        }
        let pc = self.partial_correlation(i, j, z)?;
        let statistic = dof.sqrt() * pc.abs().min(MAX_ABS_CORRELATION).atanh();
        Ok(CiDecision {
            independent: statistic <= critical_value(alpha),
            statistic,
            partial_correlation: pc,
        })
    }

    /// Largest conditioning-set size the Fisher-z test accepts.
    pub fn max_conditioning(&self) -> usize {
        self.effective_sample_size.saturating_sub(4) as usize
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.len() {
            let row: Vec<String> = (0..self.len())
                .map(|c| format!("{:.17e}", self.values[(r, c)]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Two-sided standard-normal critical value `Φ⁻¹(1 − α/2)`.
pub fn critical_value(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// Correlation of the rows of an attention matrix, `K = A·Aᵀ`.
pub fn correlation_from_attention(a: &AttentionMatrix) -> Result<CorrelationMatrix, CiError> {
    let values = a.values();
    let n = values.nrows();
    for i in 0..n {
        if values.row(i).iter().all(|v| *v == 0.0) {
            return Err(CiError::DegenerateRow(i));
        }
    }
    let k = values * values.transpose();
    CorrelationMatrix::from_covariance(&k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiDecision {
    pub independent: bool,
    pub statistic: f64,
    pub partial_correlation: f64,
}

/// A conditional-independence oracle consumed by structure learning.
pub trait IndependenceTest {
    fn is_independent(&self, x: usize, y: usize, z: &[usize], alpha: f64) -> Result<bool, CiError>;

    /// Upper bound on conditioning-set size the test can answer, if any.
    fn max_conditioning(&self) -> Option<usize> {
        None
    }
}

/// `(x, y, z, alpha bits)`
type TestKey = (usize, usize, Vec<usize>, u64);

/// Fisher-z test over a correlation matrix, memoised per `(x, y, z)`.
pub struct PartialCorrelationTest<'a> {
    rho: &'a CorrelationMatrix,
    memo: RefCell<HashMap<TestKey, CiDecision>>,
}

impl<'a> PartialCorrelationTest<'a> {
    pub fn new(rho: &'a CorrelationMatrix) -> Self {
        PartialCorrelationTest {
            rho,
            memo: RefCell::new(HashMap::new()),
        }
    }

    pub fn decide(&self, x: usize, y: usize, z: &[usize], alpha: f64) -> Result<CiDecision, CiError> {
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        let mut zs = z.to_vec();
        zs.sort_unstable();
        let memo_key = (a, b, zs, alpha.to_bits());
        if let Some(d) = self.memo.borrow().get(&memo_key) {
            return Ok(*d);
        }
        let d = self.rho.ci_test(a, b, &memo_key.2, alpha)?;
        self.memo.borrow_mut().insert(memo_key, d);
        Ok(d)
    }

    pub fn tests_performed(&self) -> usize {
        self.memo.borrow().len()
    }
}

impl IndependenceTest for PartialCorrelationTest<'_> {
    fn is_independent(&self, x: usize, y: usize, z: &[usize], alpha: f64) -> Result<bool, CiError> {
        self.decide(x, y, z, alpha).map(|d| d.independent)
    }

    fn max_conditioning(&self) -> Option<usize> {
        Some(self.rho.max_conditioning())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stochastic(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            })
            .collect()
    }

    // Plain-loop oracle for rho = normalise(A Aᵀ).
    fn brute_force_correlation(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = rows.len();
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                k[i][j] = (0..n).map(|t| rows[i][t] * rows[j][t]).sum();
            }
        }
        (0..n)
            .map(|i| (0..n).map(|j| k[i][j] / (k[i][i] * k[j][j]).sqrt()).collect())
            .collect()
    }

    #[test]
    fn identity_attention_gives_identity_correlation() {
        let a = AttentionMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let rho = correlation_from_attention(&a).unwrap();
        assert_eq!(rho.values(), &DMatrix::<f64>::identity(3, 3));
        assert_eq!(rho.effective_sample_size(), 3);
    }

    #[test]
    fn identical_rows_are_perfectly_correlated() {
        let rows = vec![
            vec![0.2, 0.3, 0.5],
            vec![0.6, 0.2, 0.2],
            vec![0.2, 0.3, 0.5],
        ];
        let rho = correlation_from_attention(&AttentionMatrix::from_rows(&rows).unwrap()).unwrap();
        assert!((rho.get(0, 2) - 1.0).abs() < 1e-15);
        assert!(rho.get(0, 1) < 1.0);
    }

    #[test]
    fn correlation_matches_brute_force_oracle() {
        let rows = random_stochastic(5, 7);
        let rho = correlation_from_attention(&AttentionMatrix::from_rows(&rows).unwrap()).unwrap();
        let oracle = brute_force_correlation(&rows);
        for i in 0..5 {
            for j in 0..5 {
                assert!((rho.get(i, j) - oracle[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_validation() {
        assert!(matches!(
            AttentionMatrix::from_rows(&[vec![0.5, 0.5], vec![0.7, 0.2]]),
            Err(CiError::RowSum { row: 1, .. })
        ));
        assert!(matches!(
            AttentionMatrix::from_rows(&[vec![1.5, -0.5], vec![0.5, 0.5]]),
            Err(CiError::BadEntry { row: 0, col: 1, .. })
        ));
        assert!(matches!(
            AttentionMatrix::from_rows(&[vec![1.0, 0.0]]),
            Err(CiError::NotSquare { .. })
        ));
    }

    #[test]
    fn zero_row_is_degenerate() {
        let mut m = DMatrix::identity(3, 3);
        m[(1, 1)] = 0.0;
        let a = AttentionMatrix::synthetic_factor(m).unwrap();
        assert_eq!(correlation_from_attention(&a), Err(CiError::DegenerateRow(1)));
    }

    #[test]
    fn head_aggregation() {
        let h0 = matrix_from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let h1 = matrix_from_rows(&[vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let mean = aggregate_heads(&[h0.clone(), h1.clone()], HeadSelection::Mean).unwrap();
        assert_eq!(mean.row(0), vec![0.5, 0.5]);
        assert_eq!(mean.row(1), vec![0.25, 0.75]);
        let one = aggregate_heads(&[h0, h1.clone()], HeadSelection::Index(1)).unwrap();
        assert_eq!(one.values(), &h1);
        assert!(aggregate_heads(&[h1], HeadSelection::Index(3)).is_err());
        assert_eq!("mean".parse::<HeadSelection>(), Ok(HeadSelection::Mean));
        assert_eq!("2".parse::<HeadSelection>(), Ok(HeadSelection::Index(2)));
    }

    fn corr3(xy: f64, xz: f64, yz: f64) -> CorrelationMatrix {
        let m = matrix_from_rows(&[vec![1.0, xy, xz], vec![xy, 1.0, yz], vec![xz, yz, 1.0]]).unwrap();
        CorrelationMatrix::from_covariance(&m).unwrap()
    }

    #[test]
    fn empty_conditioning_set_returns_marginal() {
        let rho = corr3(0.6, 0.5, 0.5);
        assert_eq!(rho.partial_correlation(0, 1, &[]).unwrap(), 0.6);
    }

    #[test]
    fn first_order_partial_correlation() {
        // (0.6 - 0.25) / sqrt(0.75 * 0.75)
        let rho = corr3(0.6, 0.5, 0.5);
        let pc = rho.partial_correlation(0, 1, &[2]).unwrap();
        assert!((pc - 0.35 / 0.75).abs() < 1e-12);
        assert!((pc - 0.466_666_666_666_666_7).abs() < 1e-12);
    }

    #[test]
    fn markov_chain_screens_off() {
        let (a, b) = (0.7, -0.4);
        let rho = corr3(a * b, a, b);
        assert!(rho.partial_correlation(0, 1, &[2]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn singular_submatrix_is_reported() {
        let rho = corr3(1.0, 0.3, 0.3);
        assert!(matches!(rho.partial_correlation(0, 1, &[2]), Err(CiError::Singular(_))));
    }

    #[test]
    fn bad_queries() {
        let rho = corr3(0.1, 0.2, 0.3);
        assert!(rho.partial_correlation(0, 0, &[]).is_err());
        assert!(rho.partial_correlation(0, 1, &[1]).is_err());
        assert_eq!(rho.partial_correlation(0, 5, &[]), Err(CiError::IndexOutOfRange(5)));
    }

    #[test]
    fn fisher_z_zero_correlation_is_independent() {
        let rho = corr3(0.0, 0.0, 0.0).with_sample_size(10);
        for alpha in [1e-6, 0.01, 0.5, 0.999] {
            let d = rho.ci_test(0, 1, &[], alpha).unwrap();
            assert!(d.independent);
            assert_eq!(d.statistic, 0.0);
        }
    }

    #[test]
    fn fisher_z_reference_value() {
        // sqrt(47) * atanh(0.5) = 3.76585... ; Φ⁻¹(0.995) = 2.5758...
        // values from an independent scipy evaluation
        let rho = corr3(0.5, 0.0, 0.0).with_sample_size(50);
        let d = rho.ci_test(0, 1, &[], 0.01).unwrap();
        assert!((d.statistic - 3.765_853_195_432_322_7).abs() < 1e-9);
        assert!((critical_value(0.01) - 2.575_829_303_548_900_4).abs() < 1e-9);
        assert!(!d.independent);
    }

    #[test]
    fn fisher_z_saturates_near_one() {
        let rows = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let rho = correlation_from_attention(&AttentionMatrix::from_rows(&rows).unwrap())
            .unwrap()
            .with_sample_size(5);
        let d = rho.ci_test(0, 1, &[], 0.01).unwrap();
        assert!(d.statistic.is_finite());
        assert!(!d.independent);
    }

    #[test]
    fn fisher_z_needs_enough_samples() {
        let rho = corr3(0.2, 0.1, 0.1).with_sample_size(4);
        assert!(rho.ci_test(0, 1, &[], 0.05).is_ok());
        assert!(matches!(
            rho.ci_test(0, 1, &[2], 0.05),
            Err(CiError::SampleTooSmall { n: 4, cond: 1, max: 0 })
        ));
        assert_eq!(rho.max_conditioning(), 0);
        assert!(matches!(rho.ci_test(0, 1, &[], 1.0), Err(CiError::BadAlpha(_))));
    }

    #[test]
    fn memoised_test_matches_direct_test() {
        let rho = corr3(0.3, 0.2, 0.4).with_sample_size(30);
        let t = PartialCorrelationTest::new(&rho);
        let a = t.decide(1, 0, &[2], 0.05).unwrap();
        let b = t.decide(0, 1, &[2], 0.05).unwrap();
        assert_eq!(a, b);
        assert_eq!(t.tests_performed(), 1);
        assert_eq!(a, rho.ci_test(0, 1, &[2], 0.05).unwrap());
    }

    proptest! {
        #[test]
        fn correlation_invariants(seed in any::<u64>(), n in 2usize..7) {
            let rows = random_stochastic(n, seed);
            let rho = correlation_from_attention(&AttentionMatrix::from_rows(&rows).unwrap()).unwrap();
            let m = rho.values();
            for i in 0..n {
                prop_assert_eq!(m[(i, i)], 1.0);
                for j in 0..n {
                    prop_assert!((m[(i, j)] - m[(j, i)]).abs() <= 1e-12);
                    prop_assert!(m[(i, j)].abs() <= 1.0);
                }
            }
            let eig = m.clone().symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|e| *e >= -1e-9));
        }

        #[test]
        fn correlation_is_relabeling_equivariant(seed in any::<u64>(), n in 2usize..7, shift in 0usize..7) {
            let rows = random_stochastic(n, seed);
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            // permuted[perm[i]][perm[j]] = rows[i][j]
            let mut permuted = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    permuted[perm[i]][perm[j]] = rows[i][j];
                }
            }
            let a = correlation_from_attention(&AttentionMatrix::from_rows(&rows).unwrap()).unwrap();
            let b = correlation_from_attention(&AttentionMatrix::from_rows(&permuted).unwrap()).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((a.get(i, j) - b.get(perm[i], perm[j])).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn fisher_z_is_monotone_in_alpha(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = random_stochastic(6, rng.random());
            let rho = correlation_from_attention(&AttentionMatrix::from_rows(&rows).unwrap())
                .unwrap()
                .with_sample_size(rng.random_range(6..200));
            let alphas = [0.5, 0.2, 0.1, 0.05, 0.01, 0.001, 1e-6];
            for z in [vec![], vec![2], vec![2, 3]] {
                let mut was_independent = false;
                for &alpha in &alphas {
                    let ind = rho.ci_test(0, 1, &z, alpha).unwrap().independent;
                    prop_assert!(!was_independent || ind);
                    was_independent = ind;
                }
            }
        }
    }
}
