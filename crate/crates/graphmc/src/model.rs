//! The probabilistic model: observed data in coordinate form, the
//! Gamma/matrix-normal prior stack, factor and hyperparameter posteriors,
//! and directly evaluable densities used by the property tests.
//!
//! Generative story, per factor column w (a column of U or of V):
//!   λ_r ~ Gamma(c0_r, d0_r),   w_r | λ_r ~ N(0, (λ_r L)⁻¹),
//!   τ ~ Gamma(a0, b0),         M_ij | U,V,τ ~ N((UVᵀ)_ij, τ⁻¹) on observed cells.
//! Marginalizing λ_r couples the column through the graph Laplacian L while
//! promoting whole-column shrinkage, which is what drives automatic rank
//! selection during inference.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::GraphLaplacian;
use crate::inference::InferenceState;
use crate::scalar::{ln_gamma, real, Real};

/// Sparse observed matrix: coordinate entries with fast row-wise and
/// column-wise iteration (CSR plus a CSC permutation view).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix<T: Real> {
    m: usize,
    n: usize,
    // CSR over observed entries, sorted row-major.
    row_ptr: Vec<usize>,
    col_of: Vec<usize>,
    vals: Vec<T>,
    // CSC view; `csr_pos` maps each CSC slot to its CSR position so that
    // per-entry caches indexed in CSR order are reachable column-wise.
    col_ptr: Vec<usize>,
    row_of: Vec<usize>,
    csr_pos: Vec<usize>,
}

impl<T: Real> ObservedMatrix<T> {
    /// Builds from coordinate triplets. Rejects out-of-range indices,
    /// duplicate cells, and empty observation sets.
    pub fn from_triplets(m: usize, n: usize, entries: &[(usize, usize, T)]) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Dimension("matrix dimensions must be positive".into()));
        }
        if entries.is_empty() {
            return Err(Error::InvalidData("observation set is empty".into()));
        }
        let mut sorted: Vec<(usize, usize, T)> = entries.to_vec();
        for &(i, j, v) in &sorted {
            if i >= m || j >= n {
                return Err(Error::InvalidData(format!(
                    "entry ({i},{j}) out of range for {m}x{n}"
                )));
            }
            if v != v {
                return Err(Error::InvalidData(format!("entry ({i},{j}) is NaN")));
            }
        }
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::InvalidData(format!(
                    "duplicate entry at ({},{})",
                    w[0].0, w[0].1
                )));
            }
        }

        let nnz = sorted.len();
        let mut row_ptr = vec![0usize; m + 1];
        let mut col_of = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for &(i, j, v) in &sorted {
            row_ptr[i + 1] += 1;
            col_of.push(j);
            vals.push(v);
        }
        for i in 0..m {
            row_ptr[i + 1] += row_ptr[i];
        }

        let mut col_ptr = vec![0usize; n + 1];
        for &j in &col_of {
            col_ptr[j + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut next = col_ptr.clone();
        let mut row_of = vec![0usize; nnz];
        let mut csr_pos = vec![0usize; nnz];
        for (p, &(i, j, _)) in sorted.iter().enumerate() {
            let slot = next[j];
            row_of[slot] = i;
            csr_pos[slot] = p;
            next[j] += 1;
        }

        Ok(Self {
            m,
            n,
            row_ptr,
            col_of,
            vals,
            col_ptr,
            row_of,
            csr_pos,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of observed entries |Ω|.
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// CSR positions covering row `i`.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// CSC slots covering column `j`.
    pub fn col_range(&self, j: usize) -> std::ops::Range<usize> {
        self.col_ptr[j]..self.col_ptr[j + 1]
    }

    /// Column index per CSR position.
    pub fn col_of(&self) -> &[usize] {
        &self.col_of
    }

    /// Row index per CSC slot.
    pub fn row_of(&self) -> &[usize] {
        &self.row_of
    }

    /// CSR position per CSC slot.
    pub fn csr_pos(&self) -> &[usize] {
        &self.csr_pos
    }

    /// Observed values in CSR order.
    pub fn values(&self) -> &[T] {
        &self.vals
    }

    pub fn mask_contains(&self, i: usize, j: usize) -> bool {
        let r = self.row_range(i);
        self.col_of[r].binary_search(&j).is_ok()
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.m).flat_map(move |i| {
            self.row_range(i)
                .map(move |p| (i, self.col_of[p], self.vals[p]))
        })
    }

    /// Dense copy with unobserved cells set to zero.
    pub fn to_dense_zero_filled(&self) -> DMatrix<T> {
        let mut out = DMatrix::zeros(self.m, self.n);
        for (i, j, v) in self.iter() {
            out[(i, j)] = v;
        }
        out
    }

    /// All cells outside the observation set, row-major.
    pub fn unobserved_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.m * self.n - self.nnz());
        for i in 0..self.m {
            let range = self.row_range(i);
            let mut next = range.start;
            for j in 0..self.n {
                if next < range.end && self.col_of[next] == j {
                    next += 1;
                } else {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Population variance of the observed values.
    pub fn observed_variance(&self) -> T {
        let count = real::<T>(self.nnz() as f64);
        let mean = self.vals.iter().fold(T::zero(), |a, v| a + *v) / count;
        self.vals
            .iter()
            .fold(T::zero(), |a, v| a + (*v - mean) * (*v - mean))
            / count
    }
}

/// Gamma hyperparameter that is either shared or per-component.
#[derive(Debug, Clone, PartialEq)]
pub enum HyperParam<T: Real> {
    Scalar(T),
    PerComponent(Vec<T>),
}

impl<T: Real> HyperParam<T> {
    pub fn at(&self, r: usize) -> T {
        match self {
            HyperParam::Scalar(x) => *x,
            HyperParam::PerComponent(v) => v[r],
        }
    }

    /// Materializes `k` values, broadcasting the scalar form.
    pub fn expand(&self, k: usize, name: &str) -> Result<Vec<T>> {
        match self {
            HyperParam::Scalar(x) => Ok(vec![*x; k]),
            HyperParam::PerComponent(v) => {
                if v.len() != k {
                    return Err(Error::Dimension(format!(
                        "{name} has {} components, expected {k}",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            HyperParam::Scalar(x) => *x > T::zero(),
            HyperParam::PerComponent(v) => !v.is_empty() && v.iter().all(|x| *x > T::zero()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{name} must be strictly positive"
            )))
        }
    }
}

/// Gamma shape/rate hyperparameters for the noise precision τ (a0, b0) and
/// the per-column precisions λ_r (c0, d0).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig<T: Real> {
    pub a0: T,
    pub b0: T,
    pub c0: HyperParam<T>,
    pub d0: HyperParam<T>,
}

impl<T: Real> Default for PriorConfig<T> {
    fn default() -> Self {
        let eps = real(1e-6);
        Self {
            a0: eps,
            b0: eps,
            c0: HyperParam::Scalar(eps),
            d0: HyperParam::Scalar(eps),
        }
    }
}

impl<T: Real> PriorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.a0 <= T::zero() || self.b0 <= T::zero() {
            return Err(Error::InvalidArgument(
                "noise prior a0, b0 must be strictly positive".into(),
            ));
        }
        self.c0.validate("c0")?;
        self.d0.validate("d0")
    }
}

/// Which factor a posterior belongs to: rows (U, length-m columns) or
/// columns (V, length-n columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Row,
    Col,
}

/// Gaussian posterior for one factor column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnGaussian<T: Real> {
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
    /// ln det of `cov`, cached by whoever last set `cov`.
    pub ln_det_cov: T,
}

impl<T: Real> ColumnGaussian<T> {
    /// Point-mass column: zero covariance around the given mean.
    pub fn point(mean: DVector<T>) -> Self {
        let d = mean.len();
        Self {
            mean,
            cov: DMatrix::zeros(d, d),
            ln_det_cov: T::zero(),
        }
    }

    /// Unit-covariance column.
    pub fn standard(mean: DVector<T>) -> Self {
        let d = mean.len();
        Self {
            mean,
            cov: DMatrix::identity(d, d),
            ln_det_cov: T::zero(),
        }
    }

    /// Element-wise second moments mean² + diag(cov).
    pub fn second_moments(&self) -> DVector<T> {
        DVector::from_fn(self.mean.len(), |i, _| {
            self.mean[i] * self.mean[i] + self.cov[(i, i)]
        })
    }
}

/// Per-column Gaussian posteriors for one factor matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPosterior<T: Real> {
    pub side: Side,
    pub columns: Vec<ColumnGaussian<T>>,
}

impl<T: Real> FactorPosterior<T> {
    pub fn k(&self) -> usize {
        self.columns.len()
    }

    /// Length of each column (m on the row side, n on the column side).
    pub fn dim(&self) -> usize {
        self.columns.first().map_or(0, |c| c.mean.len())
    }

    /// Stacks the column means into a dense factor matrix.
    pub fn mean_matrix(&self) -> DMatrix<T> {
        let (d, k) = (self.dim(), self.k());
        DMatrix::from_fn(d, k, |i, r| self.columns[r].mean[i])
    }
}

/// Gamma posterior parameters (shape, rate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams<T: Real> {
    pub shape: T,
    pub rate: T,
}

impl<T: Real> GammaParams<T> {
    pub fn mean(&self) -> T {
        self.shape / self.rate
    }
}

/// Gamma posteriors for every λ_r and for τ.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperPosterior<T: Real> {
    pub lambda: Vec<GammaParams<T>>,
    pub tau: GammaParams<T>,
}

/// Log of the marginal column prior p(w) = ∫ N(w|0,(λL)⁻¹) Ga(λ|c0,d0) dλ,
/// including its normalization constant:
///
///   log p(w) = c0·ln d0 + ½·ln det L + ln Γ(c0+½) − ln Γ(c0)
///              − (dim/2)·ln 2π − (c0+½)·ln(d0 + wᵀLw/2).
///
/// As c0 = d0 → 0 this approaches the improper density ∝ (wᵀLw)^(−1/2):
/// heavy-tailed, peaked at zero, and cheapest along graph-smooth directions.
pub fn log_marginal_prior_column<T: Real>(
    w: &DVector<T>,
    lap: &GraphLaplacian<T>,
    c0: T,
    d0: T,
) -> Result<T> {
    if w.len() != lap.n() {
        return Err(Error::Dimension(format!(
            "vector length {} does not match laplacian size {}",
            w.len(),
            lap.n()
        )));
    }
    if c0 <= T::zero() || d0 <= T::zero() {
        return Err(Error::InvalidArgument("c0 and d0 must be positive".into()));
    }
    let chol = Cholesky::new(lap.matrix().clone())
        .ok_or_else(|| Error::Numerical("laplacian is not positive definite".into()))?;
    let ln_det_l = chol.ln_determinant();

    let half = real::<T>(0.5);
    let dim = real::<T>(w.len() as f64);
    let two_pi = T::two_pi();
    let quad = (w.transpose() * lap.matrix() * w)[(0, 0)];

    Ok(c0 * d0.ln() + half * ln_det_l + ln_gamma(c0 + half) - ln_gamma(c0)
        - half * dim * two_pi.ln()
        - (c0 + half) * (d0 + half * quad).ln())
}

/// Additive decomposition of the log joint density evaluated at posterior
/// means, up to a constant independent of the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogJointTerms<T: Real> {
    /// (|Ω|/2)·ln τ − (τ/2)·‖Ω∘(M−UVᵀ)‖²_F
    pub likelihood: T,
    /// Σ_r [ ((m+n)/2)·ln λ_r − (λ_r/2)(u_rᵀL_r u_r + v_rᵀL_c v_r) ]
    pub factor_prior: T,
    /// Σ_r [ (c0_r−1)·ln λ_r − d0_r·λ_r ]
    pub lambda_prior: T,
    /// (a0−1)·ln τ − b0·τ
    pub tau_prior: T,
}

impl<T: Real> LogJointTerms<T> {
    pub fn total(&self) -> T {
        self.likelihood + self.factor_prior + self.lambda_prior + self.tau_prior
    }
}

/// Log joint density of data and parameters at the current posterior means,
/// split into its additive terms. Constant offsets that no parameter can
/// change are dropped.
pub fn log_joint_terms<T: Real>(
    state: &InferenceState<T>,
    data: &ObservedMatrix<T>,
) -> Result<LogJointTerms<T>> {
    state.check_dims(data)?;
    let half = real::<T>(0.5);
    let tau = state.tau_mean;
    let m = real::<T>(state.u.dim() as f64);
    let n = real::<T>(state.v.dim() as f64);

    let residual_sq = state.resid.iter().fold(T::zero(), |a, r| a + *r * *r);
    let likelihood = half * real::<T>(data.nnz() as f64) * tau.ln() - half * tau * residual_sq;

    let mut factor_prior = T::zero();
    let mut lambda_prior = T::zero();
    for r in 0..state.rank() {
        let lam = state.lambda_mean[r];
        let qu = quad_form(&state.u.columns[r].mean, state.lap_row.matrix());
        let qv = quad_form(&state.v.columns[r].mean, state.lap_col.matrix());
        factor_prior += half * (m + n) * lam.ln() - half * lam * (qu + qv);
        lambda_prior += (state.prior_c0[r] - T::one()) * lam.ln() - state.prior_d0[r] * lam;
    }
    let tau_prior = (state.prior_a0 - T::one()) * tau.ln() - state.prior_b0 * tau;

    Ok(LogJointTerms {
        likelihood,
        factor_prior,
        lambda_prior,
        tau_prior,
    })
}

/// Sum of the `log_joint_terms` decomposition.
pub fn log_joint<T: Real>(state: &InferenceState<T>, data: &ObservedMatrix<T>) -> Result<T> {
    Ok(log_joint_terms(state, data)?.total())
}

fn quad_form<T: Real>(w: &DVector<T>, l: &DMatrix<T>) -> T {
    (w.transpose() * l * w)[(0, 0)]
}

/// Data-dependent coefficients of the quadratic form a factor column sees:
/// the diagonal precision contribution diag(Ω·⟨v_i∘v_i⟩) and the linear
/// term (Ω∘(M − Σ_{r≠i}⟨u_r⟩⟨v_r⟩ᵀ))·⟨v_i⟩ (row side; column side is the
/// transpose picture). Moments are the current posterior moments; with
/// zero covariances this is exactly the plug-in quadratic expansion of
/// ‖Ω∘(M−UVᵀ)‖²_F in the selected column.
pub fn conditional_quadratic_coefficients<T: Real>(
    data: &ObservedMatrix<T>,
    state: &InferenceState<T>,
    side: Side,
    i: usize,
) -> Result<(DVector<T>, DVector<T>)> {
    state.check_dims(data)?;
    let k = state.rank();
    if i >= k {
        return Err(Error::InvalidArgument(format!(
            "column index {i} out of range for rank {k}"
        )));
    }
    match side {
        Side::Row => {
            let own = &state.u.columns[i].mean;
            let other_sq = state.v.columns[i].second_moments();
            let other_mean = &state.v.columns[i].mean;
            let mut diag = DVector::zeros(data.m());
            let mut linear = DVector::zeros(data.m());
            for s in 0..data.m() {
                let mut dsum = T::zero();
                let mut lsum = T::zero();
                for p in data.row_range(s) {
                    let j = data.col_of()[p];
                    dsum += other_sq[j];
                    // Cached residual excludes nothing, so add column i back.
                    lsum += (state.resid[p] + own[s] * other_mean[j]) * other_mean[j];
                }
                diag[s] = dsum;
                linear[s] = lsum;
            }
            Ok((diag, linear))
        }
        Side::Col => {
            let own = &state.v.columns[i].mean;
            let other_sq = state.u.columns[i].second_moments();
            let other_mean = &state.u.columns[i].mean;
            let mut diag = DVector::zeros(data.n());
            let mut linear = DVector::zeros(data.n());
            for j in 0..data.n() {
                let mut dsum = T::zero();
                let mut lsum = T::zero();
                for slot in data.col_range(j) {
                    let s = data.row_of()[slot];
                    let p = data.csr_pos()[slot];
                    dsum += other_sq[s];
                    lsum += (state.resid[p] + other_mean[s] * own[j]) * other_mean[s];
                }
                diag[j] = dsum;
                linear[j] = lsum;
            }
            Ok((diag, linear))
        }
    }
}
