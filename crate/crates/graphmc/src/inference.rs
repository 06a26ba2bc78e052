//! Column-wise mean-field variational inference for graph-regularized
//! low-rank completion: closed-form coordinate updates for each factor
//! column, the column precisions, and the noise precision, with ELBO
//! monitoring and energy-based column pruning.
//!
//! The variational family factorizes per column,
//!   q(Θ) = ∏ᵢ q(uᵢ) ∏ᵢ q(vᵢ) ∏ᵣ q(λᵣ) q(τ),
//! with Gaussian column factors and Gamma hyperparameter factors. Every
//! update is exact coordinate ascent on the ELBO, so the recorded ELBO
//! trace is non-decreasing between pruning events.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::GraphLaplacian;
use crate::model::{
    conditional_quadratic_coefficients, ColumnGaussian, FactorPosterior, GammaParams,
    HyperPosterior, ObservedMatrix, PriorConfig, Side,
};
use crate::scalar::{digamma, ln_gamma, real, Real};

/// Posterior means above this value are clamped; columns this dead are
/// pruned anyway, and letting them grow unchecked eventually poisons the
/// precision solves.
const LAMBDA_CLAMP: f64 = 1e12;

/// Knobs for one inference run.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig<T: Real> {
    /// Starting number of factor columns; pruning only shrinks it.
    pub initial_rank: usize,
    pub max_iters: usize,
    /// Convergence threshold on the relative change of the reconstruction
    /// over observed cells between iterations.
    pub tol: T,
    /// Columns whose energy is at most this fraction of the maximum column
    /// energy are dropped.
    pub prune_rel_tol: T,
    /// Used only when initial_rank exceeds min(m,n) and extra columns must
    /// be drawn at random.
    pub seed: u64,
    pub prior: PriorConfig<T>,
}

impl<T: Real> Default for InferenceConfig<T> {
    fn default() -> Self {
        Self {
            initial_rank: 100,
            max_iters: 200,
            tol: real(1e-5),
            prune_rel_tol: real(1e-6),
            seed: 0,
            prior: PriorConfig::default(),
        }
    }
}

impl<T: Real> InferenceConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.initial_rank == 0 {
            return Err(Error::InvalidArgument("initial rank must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max iterations must be >= 1".into()));
        }
        if self.tol <= T::zero() || self.prune_rel_tol <= T::zero() {
            return Err(Error::InvalidArgument(
                "tolerances must be strictly positive".into(),
            ));
        }
        self.prior.validate()
    }
}

/// One diagnostics line per iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T: Real> {
    pub iteration: usize,
    /// ELBO evaluated after the hyperparameter updates, before pruning.
    pub elbo: T,
    /// Rank after this iteration's pruning step.
    pub rank: usize,
    pub tau_mean: T,
    /// Frobenius norm of the plug-in residual over observed cells.
    pub residual: T,
    /// Wall clock since the run started.
    pub wall_ms: f64,
}

impl<T: Real> IterationRecord<T> {
    /// Single-line `key=value` record.
    pub fn to_line(&self) -> String {
        format!(
            "iteration={} elbo={:.10e} rank={} tau_mean={:.10e} residual={:.10e} wall_ms={:.3}",
            self.iteration, self.elbo, self.rank, self.tau_mean, self.residual, self.wall_ms
        )
    }
}

/// Everything a run mutates: factor and hyperparameter posteriors, cached
/// moments, the incremental residual, and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceState<T: Real> {
    pub u: FactorPosterior<T>,
    pub v: FactorPosterior<T>,
    pub hyper: HyperPosterior<T>,
    /// Posterior means of λ, clamped at 1e12; used by the factor updates.
    pub lambda_mean: Vec<T>,
    pub tau_mean: T,
    /// Plug-in residual M_ij − Σᵣ⟨u⟩⟨v⟩ per observed entry, in the data's
    /// row-major entry order, maintained incrementally.
    pub resid: Vec<T>,
    pub lap_row: GraphLaplacian<T>,
    pub lap_col: GraphLaplacian<T>,
    pub ln_det_lap_row: T,
    pub ln_det_lap_col: T,
    pub prior_a0: T,
    pub prior_b0: T,
    /// Per-column prior parameters, kept in step with pruning.
    pub prior_c0: Vec<T>,
    pub prior_d0: Vec<T>,
    pub config: InferenceConfig<T>,
    pub iteration: usize,
    pub trace: Vec<IterationRecord<T>>,
    /// Set if any λ mean hit the overflow clamp.
    pub lambda_clamped: bool,
    /// Set if the requested rank exceeded min(m,n) at initialization.
    pub rank_deficient_init: bool,
}

impl<T: Real> InferenceState<T> {
    pub fn rank(&self) -> usize {
        self.u.columns.len()
    }

    /// Cross-checks the state against a data set: matching dimensions,
    /// matching ranks across all per-column vectors, residual cache length.
    pub fn check_dims(&self, data: &ObservedMatrix<T>) -> Result<()> {
        let k = self.rank();
        if self.v.columns.len() != k
            || self.lambda_mean.len() != k
            || self.hyper.lambda.len() != k
            || self.prior_c0.len() != k
            || self.prior_d0.len() != k
        {
            return Err(Error::Dimension("per-column vectors disagree on rank".into()));
        }
        if self.u.dim() != data.m() || self.v.dim() != data.n() {
            return Err(Error::Dimension(format!(
                "factors are {}x{} / {}x{}, data is {}x{}",
                self.u.dim(),
                k,
                self.v.dim(),
                k,
                data.m(),
                data.n()
            )));
        }
        if self.lap_row.n() != data.m() || self.lap_col.n() != data.n() {
            return Err(Error::Dimension(format!(
                "graphs are {}x{} and {}x{}, data is {}x{}",
                self.lap_row.n(),
                self.lap_row.n(),
                self.lap_col.n(),
                self.lap_col.n(),
                data.m(),
                data.n()
            )));
        }
        if self.resid.len() != data.nnz() {
            return Err(Error::Dimension("residual cache length mismatch".into()));
        }
        Ok(())
    }

    /// Assembles a state from explicit posterior moments. The Gamma
    /// posteriors are set to mean-consistent placeholders (rate 1), which
    /// is sufficient for everything except entropy-bearing ELBO terms.
    /// Intended for tests and reference implementations.
    #[allow(clippy::too_many_arguments)]
    pub fn with_moments(
        data: &ObservedMatrix<T>,
        lap_row: GraphLaplacian<T>,
        lap_col: GraphLaplacian<T>,
        prior: &PriorConfig<T>,
        u: FactorPosterior<T>,
        v: FactorPosterior<T>,
        lambda_mean: Vec<T>,
        tau_mean: T,
    ) -> Result<Self> {
        prior.validate()?;
        let k = u.columns.len();
        if k == 0 || v.columns.len() != k || lambda_mean.len() != k {
            return Err(Error::Dimension("factor ranks disagree".into()));
        }
        if tau_mean <= T::zero() || lambda_mean.iter().any(|l| *l <= T::zero()) {
            return Err(Error::InvalidArgument(
                "hyperparameter means must be positive".into(),
            ));
        }
        let hyper = HyperPosterior {
            lambda: lambda_mean
                .iter()
                .map(|&l| GammaParams {
                    shape: l,
                    rate: T::one(),
                })
                .collect(),
            tau: GammaParams {
                shape: tau_mean,
                rate: T::one(),
            },
        };
        let config = InferenceConfig {
            initial_rank: k,
            prior: prior.clone(),
            ..InferenceConfig::default()
        };
        let mut state = Self {
            resid: Vec::new(),
            ln_det_lap_row: ln_det_spd(&lap_row)?,
            ln_det_lap_col: ln_det_spd(&lap_col)?,
            prior_a0: prior.a0,
            prior_b0: prior.b0,
            prior_c0: prior.c0.expand(k, "c0")?,
            prior_d0: prior.d0.expand(k, "d0")?,
            u,
            v,
            hyper,
            lambda_mean,
            tau_mean,
            lap_row,
            lap_col,
            config,
            iteration: 0,
            trace: Vec::new(),
            lambda_clamped: false,
            rank_deficient_init: false,
        };
        state.resid = residual_from_means(&state.u, &state.v, data);
        state.check_dims(data)?;
        Ok(state)
    }

    /// Reconstruction values on the observed cells, in entry order.
    pub fn predictions_on_observed(&self, data: &ObservedMatrix<T>) -> Vec<T> {
        data.values()
            .iter()
            .zip(&self.resid)
            .map(|(m, r)| *m - *r)
            .collect()
    }
}

fn ln_det_spd<T: Real>(lap: &GraphLaplacian<T>) -> Result<T> {
    Cholesky::new(lap.matrix().clone())
        .map(|c| c.ln_determinant())
        .ok_or_else(|| Error::Numerical("laplacian is not positive definite".into()))
}

fn residual_from_means<T: Real>(
    u: &FactorPosterior<T>,
    v: &FactorPosterior<T>,
    data: &ObservedMatrix<T>,
) -> Vec<T> {
    let mut resid: Vec<T> = data.values().to_vec();
    for r in 0..u.columns.len() {
        let uc = &u.columns[r].mean;
        let vc = &v.columns[r].mean;
        let mut p = 0;
        for i in 0..data.m() {
            for q in data.row_range(i) {
                resid[p] -= uc[i] * vc[data.col_of()[q]];
                p += 1;
                debug_assert_eq!(p - 1, q);
            }
        }
    }
    resid
}

/// Initializes the posterior from a truncated SVD of the zero-filled data:
/// column r of each factor is the r-th singular vector scaled by the square
/// root of its singular value, covariances start at identity, all λ means
/// start at 1, and the τ mean starts at 1/variance(observed) (1 when the
/// variance is zero). When the requested rank exceeds min(m,n), the surplus
/// columns are seeded N(0, 1e-2) and the state is flagged.
pub fn init_state<T: Real>(
    data: &ObservedMatrix<T>,
    lap_row: &GraphLaplacian<T>,
    lap_col: &GraphLaplacian<T>,
    cfg: &InferenceConfig<T>,
) -> Result<InferenceState<T>> {
    cfg.validate()?;
    if lap_row.n() != data.m() || lap_col.n() != data.n() {
        return Err(Error::Dimension(format!(
            "graphs are {}x{} and {}x{}, data is {}x{}",
            lap_row.n(),
            lap_row.n(),
            lap_col.n(),
            lap_col.n(),
            data.m(),
            data.n()
        )));
    }
    let (m, n) = (data.m(), data.n());
    let k = cfg.initial_rank;
    let p = m.min(n);

    let svd = data.to_dense_zero_filled().svd(true, true);
    let u_mat = svd.u.expect("svd with vectors");
    let v_t = svd.v_t.expect("svd with vectors");
    let sv = svd.singular_values;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut u_cols = Vec::with_capacity(k);
    let mut v_cols = Vec::with_capacity(k);
    for r in 0..k {
        if r < p {
            let scale = sv[r].sqrt();
            u_cols.push(ColumnGaussian::standard(u_mat.column(r) * scale));
            v_cols.push(ColumnGaussian::standard(v_t.row(r).transpose() * scale));
        } else {
            let surplus_std = real::<T>(0.1);
            let uc = DVector::from_fn(m, |_, _| {
                real::<T>(rng.sample::<f64, _>(StandardNormal)) * surplus_std
            });
            let vc = DVector::from_fn(n, |_, _| {
                real::<T>(rng.sample::<f64, _>(StandardNormal)) * surplus_std
            });
            u_cols.push(ColumnGaussian::standard(uc));
            v_cols.push(ColumnGaussian::standard(vc));
        }
    }

    let var = data.observed_variance();
    let tau_mean = if var == T::zero() { T::one() } else { T::one() / var };

    let u = FactorPosterior {
        side: Side::Row,
        columns: u_cols,
    };
    let v = FactorPosterior {
        side: Side::Col,
        columns: v_cols,
    };
    // Proper starting distributions with the intended means: Gamma(1, 1)
    // for every λ and Gamma(1, 1/τ̄) for τ, so the first ELBO evaluations
    // already describe a valid variational family.
    let hyper = HyperPosterior {
        lambda: vec![
            GammaParams {
                shape: T::one(),
                rate: T::one(),
            };
            k
        ],
        tau: GammaParams {
            shape: T::one(),
            rate: T::one() / tau_mean,
        },
    };

    let mut state = InferenceState {
        resid: Vec::new(),
        ln_det_lap_row: ln_det_spd(lap_row)?,
        ln_det_lap_col: ln_det_spd(lap_col)?,
        prior_a0: cfg.prior.a0,
        prior_b0: cfg.prior.b0,
        prior_c0: cfg.prior.c0.expand(k, "c0")?,
        prior_d0: cfg.prior.d0.expand(k, "d0")?,
        u,
        v,
        hyper,
        lambda_mean: vec![T::one(); k],
        tau_mean,
        lap_row: lap_row.clone(),
        lap_col: lap_col.clone(),
        config: cfg.clone(),
        iteration: 0,
        trace: Vec::new(),
        lambda_clamped: false,
        rank_deficient_init: k > p,
    };
    state.resid = residual_from_means(&state.u, &state.v, data);
    state.check_dims(data)?;
    Ok(state)
}

/// Coordinate update for one factor column: precision ⟨τ⟩·diag(data term) +
/// ⟨λᵢ⟩·L, mean ⟨τ⟩·Σ̂·(masked residual excluding column i)·(other side's
/// mean). Solved through a Cholesky factorization; the covariance is its
/// inverse, symmetrized as (S+Sᵀ)/2. Updates the residual cache in place.
pub fn update_factor_column<T: Real>(
    state: &mut InferenceState<T>,
    data: &ObservedMatrix<T>,
    side: Side,
    i: usize,
) -> Result<()> {
    let (diag, linear) = conditional_quadratic_coefficients(data, state, side, i)?;
    let tau = state.tau_mean;
    let lam = state.lambda_mean[i];
    let lap = match side {
        Side::Row => state.lap_row.matrix(),
        Side::Col => state.lap_col.matrix(),
    };
    let d = diag.len();
    let mut prec = lap * lam;
    for s in 0..d {
        prec[(s, s)] += tau * diag[s];
    }
    let chol = Cholesky::new(prec).ok_or_else(|| {
        Error::Numerical(format!("factor column {i} precision is not positive definite"))
    })?;
    let mean = chol.solve(&linear) * tau;
    let cov_raw = chol.inverse();
    let cov = (&cov_raw + cov_raw.transpose()) * real::<T>(0.5);
    let ln_det_cov = -chol.ln_determinant();

    match side {
        Side::Row => {
            let vmean = state.v.columns[i].mean.clone();
            let old = std::mem::replace(
                &mut state.u.columns[i],
                ColumnGaussian {
                    mean,
                    cov,
                    ln_det_cov,
                },
            );
            for s in 0..data.m() {
                let delta = old.mean[s] - state.u.columns[i].mean[s];
                if delta != T::zero() {
                    for p in data.row_range(s) {
                        state.resid[p] += delta * vmean[data.col_of()[p]];
                    }
                }
            }
        }
        Side::Col => {
            let umean = state.u.columns[i].mean.clone();
            let old = std::mem::replace(
                &mut state.v.columns[i],
                ColumnGaussian {
                    mean,
                    cov,
                    ln_det_cov,
                },
            );
            for j in 0..data.n() {
                let delta = old.mean[j] - state.v.columns[i].mean[j];
                if delta != T::zero() {
                    for slot in data.col_range(j) {
                        state.resid[data.csr_pos()[slot]] +=
                            delta * umean[data.row_of()[slot]];
                    }
                }
            }
        }
    }
    Ok(())
}

/// ⟨wᵀLw⟩ = tr[(Σ + μμᵀ)L] for w ~ N(μ, Σ).
pub fn expected_quadratic_form<T: Real>(
    mean: &DVector<T>,
    cov: &DMatrix<T>,
    lap: &GraphLaplacian<T>,
) -> Result<T> {
    let d = mean.len();
    if cov.nrows() != d || cov.ncols() != d || lap.n() != d {
        return Err(Error::Dimension(format!(
            "mean has {d} entries, covariance is {}x{}, laplacian is {}x{}",
            cov.nrows(),
            cov.ncols(),
            lap.n(),
            lap.n()
        )));
    }
    let l = lap.matrix();
    let mut acc = T::zero();
    for a in 0..d {
        for b in 0..d {
            acc += (cov[(a, b)] + mean[a] * mean[b]) * l[(b, a)];
        }
    }
    Ok(acc)
}

/// Gamma update for every column precision: shape c0 + (m+n)/2, rate
/// d0 + (⟨uᵀL_r u⟩ + ⟨vᵀL_c v⟩)/2. Means are clamped at 1e12 with a
/// diagnostic flag; the posterior parameters themselves are kept exact.
pub fn update_lambda<T: Real>(state: &mut InferenceState<T>) -> Result<()> {
    let half = real::<T>(0.5);
    let mn = real::<T>((state.u.dim() + state.v.dim()) as f64);
    let clamp = real::<T>(LAMBDA_CLAMP);
    for r in 0..state.rank() {
        let qu = expected_quadratic_form(
            &state.u.columns[r].mean,
            &state.u.columns[r].cov,
            &state.lap_row,
        )?;
        let qv = expected_quadratic_form(
            &state.v.columns[r].mean,
            &state.v.columns[r].cov,
            &state.lap_col,
        )?;
        let shape = state.prior_c0[r] + half * mn;
        let rate = state.prior_d0[r] + half * (qu + qv);
        state.hyper.lambda[r] = GammaParams { shape, rate };
        let mean = shape / rate;
        state.lambda_mean[r] = if mean > clamp {
            state.lambda_clamped = true;
            clamp
        } else {
            mean
        };
    }
    Ok(())
}

/// ⟨‖Ω∘(M−UVᵀ)‖²_F⟩ under the factorized posterior. Expands per observed
/// cell as the squared plug-in residual plus the variance cross terms
/// Σᵣ(⟨u⟩²·σᵥ + σᵤ·⟨v⟩² + σᵤ·σᵥ), which equals the textbook expansion
/// Σᵣ⟨u²⟩⟨v²⟩ + Σ_{r≠s}⟨u⟩⟨u⟩⟨v⟩⟨v⟩ − (Σᵣ⟨u⟩⟨v⟩)² folded into the square.
pub fn expected_residual<T: Real>(state: &InferenceState<T>, data: &ObservedMatrix<T>) -> T {
    let mut total = state.resid.iter().fold(T::zero(), |a, r| a + *r * *r);
    for r in 0..state.rank() {
        let uc = &state.u.columns[r];
        let vc = &state.v.columns[r];
        let udiag: Vec<T> = (0..data.m()).map(|i| uc.cov[(i, i)]).collect();
        let vdiag: Vec<T> = (0..data.n()).map(|j| vc.cov[(j, j)]).collect();
        for i in 0..data.m() {
            for p in data.row_range(i) {
                let j = data.col_of()[p];
                let (mu, su) = (uc.mean[i], udiag[i]);
                let (mv, sv) = (vc.mean[j], vdiag[j]);
                total += mu * mu * sv + su * mv * mv + su * sv;
            }
        }
    }
    total
}

/// Gamma update for the noise precision: shape a0 + |Ω|/2, rate
/// b0 + ⟨‖Ω∘(M−UVᵀ)‖²_F⟩/2.
pub fn update_tau<T: Real>(state: &mut InferenceState<T>, data: &ObservedMatrix<T>) {
    let half = real::<T>(0.5);
    let shape = state.prior_a0 + half * real(data.nnz() as f64);
    let rate = state.prior_b0 + half * expected_residual(state, data);
    state.hyper.tau = GammaParams { shape, rate };
    state.tau_mean = shape / rate;
}

fn gamma_entropy<T: Real>(g: &GammaParams<T>) -> T {
    g.shape - g.rate.ln() + ln_gamma(g.shape) + (T::one() - g.shape) * digamma(g.shape)
}

/// Evidence lower bound ⟨ln p(M,Θ)⟩_q + H[q], with all constants, using the
/// exact Gamma posteriors (not the clamped λ means). Finite for any valid
/// state; non-decreasing along coordinate updates.
pub fn elbo<T: Real>(state: &InferenceState<T>, data: &ObservedMatrix<T>) -> Result<T> {
    state.check_dims(data)?;
    let half = real::<T>(0.5);
    let one = T::one();
    let two_pi_ln = T::two_pi().ln();
    let m = real::<T>(state.u.dim() as f64);
    let n = real::<T>(state.v.dim() as f64);
    let k = real::<T>(state.rank() as f64);
    let omega = real::<T>(data.nnz() as f64);

    let tau = &state.hyper.tau;
    let tau_ln = digamma(tau.shape) - tau.rate.ln();
    let tau_mean = tau.mean();

    let mut value = half * omega * (tau_ln - two_pi_ln)
        - half * tau_mean * expected_residual(state, data);

    for r in 0..state.rank() {
        let lam = &state.hyper.lambda[r];
        let lam_ln = digamma(lam.shape) - lam.rate.ln();
        let lam_mean = lam.mean();
        let qu = expected_quadratic_form(
            &state.u.columns[r].mean,
            &state.u.columns[r].cov,
            &state.lap_row,
        )?;
        let qv = expected_quadratic_form(
            &state.v.columns[r].mean,
            &state.v.columns[r].cov,
            &state.lap_col,
        )?;
        value += half * (m + n) * lam_ln - half * lam_mean * (qu + qv);
        let (c0, d0) = (state.prior_c0[r], state.prior_d0[r]);
        value += c0 * d0.ln() - ln_gamma(c0) + (c0 - one) * lam_ln - d0 * lam_mean;
        value += gamma_entropy(lam);
        value += half * m * (one + two_pi_ln) + half * state.u.columns[r].ln_det_cov;
        value += half * n * (one + two_pi_ln) + half * state.v.columns[r].ln_det_cov;
    }
    value += half * k * (state.ln_det_lap_row + state.ln_det_lap_col)
        - half * k * (m + n) * two_pi_ln;
    value += state.prior_a0 * state.prior_b0.ln() - ln_gamma(state.prior_a0)
        + (state.prior_a0 - one) * tau_ln
        - state.prior_b0 * tau_mean;
    value += gamma_entropy(tau);
    Ok(value)
}

/// Drops factor columns whose energy ‖⟨uᵢ⟩‖² + ‖⟨vᵢ⟩‖² is at most
/// prune_rel_tol times the maximum column energy, from both factors and the
/// λ posterior together. If every column qualifies, the maximum-energy
/// column survives. The residual cache absorbs the pruned contributions.
pub fn prune_columns<T: Real>(state: &mut InferenceState<T>, data: &ObservedMatrix<T>) {
    let k = state.rank();
    let energies: Vec<T> = (0..k)
        .map(|r| state.u.columns[r].mean.norm_squared() + state.v.columns[r].mean.norm_squared())
        .collect();
    let mut max_at = 0;
    for r in 1..k {
        if energies[r] > energies[max_at] {
            max_at = r;
        }
    }
    let cutoff = state.config.prune_rel_tol * energies[max_at];
    let mut keep: Vec<bool> = energies.iter().map(|e| *e > cutoff).collect();
    if keep.iter().all(|kp| !kp) {
        keep[max_at] = true;
    }
    if keep.iter().all(|kp| *kp) {
        return;
    }

    // Removed columns leave the model; their predicted mass returns to the
    // residual so the cache stays exact.
    for r in 0..k {
        if keep[r] {
            continue;
        }
        let uc = &state.u.columns[r].mean;
        let vc = &state.v.columns[r].mean;
        for i in 0..data.m() {
            if uc[i] == T::zero() {
                continue;
            }
            for p in data.row_range(i) {
                state.resid[p] += uc[i] * vc[data.col_of()[p]];
            }
        }
    }

    let mut idx = 0;
    state.u.columns.retain(|_| {
        let kp = keep[idx];
        idx += 1;
        kp
    });
    idx = 0;
    state.v.columns.retain(|_| {
        let kp = keep[idx];
        idx += 1;
        kp
    });
    idx = 0;
    state.hyper.lambda.retain(|_| {
        let kp = keep[idx];
        idx += 1;
        kp
    });
    idx = 0;
    state.lambda_mean.retain(|_| {
        let kp = keep[idx];
        idx += 1;
        kp
    });
    idx = 0;
    state.prior_c0.retain(|_| {
        let kp = keep[idx];
        idx += 1;
        kp
    });
    idx = 0;
    state.prior_d0.retain(|_| {
        let kp = keep[idx];
        idx += 1;
        kp
    });
}

/// Completed matrix plus run diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult<T: Real> {
    /// Posterior mean reconstruction ⟨U⟩⟨V⟩ᵀ, dense m×n.
    pub x_hat: DMatrix<T>,
    pub estimated_rank: usize,
    /// Per-entry predictive variance Σᵣ(⟨u⟩²σᵥ + σᵤ⟨v⟩² + σᵤσᵥ) + 1/⟨τ⟩.
    pub predictive_variance: Option<DMatrix<T>>,
    pub trace: Vec<IterationRecord<T>>,
    pub converged: bool,
    pub iterations: usize,
}

/// Full inference loop. Each iteration sweeps every row-factor column, then
/// every column-factor column, then updates λ and τ, records the ELBO, and
/// prunes. Stops when the reconstruction over observed cells changes by
/// less than `tol` in relative Frobenius norm, or at `max_iters`.
pub fn run_vi<T: Real>(
    data: &ObservedMatrix<T>,
    lap_row: &GraphLaplacian<T>,
    lap_col: &GraphLaplacian<T>,
    cfg: &InferenceConfig<T>,
) -> Result<CompletionResult<T>> {
    let start = Instant::now();
    let mut state = init_state(data, lap_row, lap_col, cfg)?;
    let mut prev_pred = state.predictions_on_observed(data);
    let mut converged = false;

    let with_iter_context = |iter: usize| {
        move |e: Error| match e {
            Error::Numerical(msg) => Error::Numerical(format!("iteration {iter}: {msg}")),
            other => other,
        }
    };

    for iter in 1..=cfg.max_iters {
        let k = state.rank();
        for i in 0..k {
            update_factor_column(&mut state, data, Side::Row, i)
                .map_err(with_iter_context(iter))?;
        }
        for i in 0..k {
            update_factor_column(&mut state, data, Side::Col, i)
                .map_err(with_iter_context(iter))?;
        }
        update_lambda(&mut state).map_err(with_iter_context(iter))?;
        update_tau(&mut state, data);
        let elbo_val = elbo(&state, data).map_err(with_iter_context(iter))?;
        prune_columns(&mut state, data);

        let resid_norm = state
            .resid
            .iter()
            .fold(T::zero(), |a, r| a + *r * *r)
            .sqrt();
        let pred = state.predictions_on_observed(data);
        let mut diff = T::zero();
        let mut base = T::zero();
        for (a, b) in pred.iter().zip(&prev_pred) {
            diff += (*a - *b) * (*a - *b);
            base += *b * *b;
        }
        let rel = diff.sqrt() / base.sqrt().max(real(1e-12));
        prev_pred = pred;

        state.iteration = iter;
        state.trace.push(IterationRecord {
            iteration: iter,
            elbo: elbo_val,
            rank: state.rank(),
            tau_mean: state.tau_mean,
            residual: resid_norm,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        if rel < cfg.tol {
            converged = true;
            break;
        }
    }

    let x_hat = state.u.mean_matrix() * state.v.mean_matrix().transpose();
    let mut pvar = DMatrix::from_element(data.m(), data.n(), T::one() / state.tau_mean);
    for r in 0..state.rank() {
        let uc = &state.u.columns[r];
        let vc = &state.v.columns[r];
        for i in 0..data.m() {
            let (mu, su) = (uc.mean[i], uc.cov[(i, i)]);
            for j in 0..data.n() {
                let (mv, sv) = (vc.mean[j], vc.cov[(j, j)]);
                pvar[(i, j)] += mu * mu * sv + su * mv * mv + su * sv;
            }
        }
    }

    Ok(CompletionResult {
        x_hat,
        estimated_rank: state.rank(),
        predictive_variance: Some(pvar),
        trace: state.trace.clone(),
        converged,
        iterations: state.iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::identity_laplacian;
    use crate::model::HyperParam;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(k: usize) -> InferenceConfig<f64> {
        InferenceConfig {
            initial_rank: k,
            ..InferenceConfig::default()
        }
    }

    fn full_entries(x: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
        let mut out = vec![];
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                out.push((i, j, x[(i, j)]));
            }
        }
        out
    }

    fn point_cols(vecs: Vec<DVector<f64>>) -> Vec<ColumnGaussian<f64>> {
        vecs.into_iter().map(ColumnGaussian::point).collect()
    }

    /// Bernoulli-masked random entries over an m×n grid.
    fn random_entries(
        rng: &mut ChaCha8Rng,
        m: usize,
        n: usize,
        keep: f64,
        amp: f64,
    ) -> Vec<(usize, usize, f64)> {
        let mut out = vec![];
        for p in 0..m * n {
            if rng.random_range(0.0..1.0) < keep {
                out.push((p / n, p % n, rng.random_range(-amp..amp)));
            }
        }
        out
    }

    fn moment_state(
        data: &ObservedMatrix<f64>,
        u_cols: Vec<ColumnGaussian<f64>>,
        v_cols: Vec<ColumnGaussian<f64>>,
        lambda: Vec<f64>,
        tau: f64,
    ) -> InferenceState<f64> {
        let m = u_cols[0].mean.len();
        let n = v_cols[0].mean.len();
        InferenceState::with_moments(
            data,
            identity_laplacian(m).unwrap(),
            identity_laplacian(n).unwrap(),
            &PriorConfig::default(),
            FactorPosterior {
                side: Side::Row,
                columns: u_cols,
            },
            FactorPosterior {
                side: Side::Col,
                columns: v_cols,
            },
            lambda,
            tau,
        )
        .unwrap()
    }

    #[test]
    fn init_reproduces_full_rank_one_matrix() {
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let v = DVector::from_vec(vec![3.0, 1.0, -1.0]);
        let x = &u * v.transpose();
        let data = ObservedMatrix::from_triplets(3, 3, &full_entries(&x)).unwrap();
        let state = init_state(
            &data,
            &identity_laplacian(3).unwrap(),
            &identity_laplacian(3).unwrap(),
            &small_cfg(1),
        )
        .unwrap();
        let rec = state.u.mean_matrix() * state.v.mean_matrix().transpose();
        assert!((rec - x).norm() < 1e-9);
        assert!(!state.rank_deficient_init);
    }

    #[test]
    fn init_single_entry_uses_unit_tau() {
        let data = ObservedMatrix::from_triplets(2, 2, &[(0, 0, 5.0)]).unwrap();
        let state = init_state(
            &data,
            &identity_laplacian(2).unwrap(),
            &identity_laplacian(2).unwrap(),
            &small_cfg(1),
        )
        .unwrap();
        assert_eq!(state.tau_mean, 1.0);
    }

    #[test]
    fn init_residual_equals_svd_truncation_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = DMatrix::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0f64));
        let data = ObservedMatrix::from_triplets(10, 10, &full_entries(&x)).unwrap();
        let state = init_state(
            &data,
            &identity_laplacian(10).unwrap(),
            &identity_laplacian(10).unwrap(),
            &small_cfg(3),
        )
        .unwrap();
        let cached: f64 = state.resid.iter().map(|r| r * r).sum::<f64>().sqrt();
        let sv = x.clone().svd(false, false).singular_values;
        let tail: f64 = sv.iter().skip(3).map(|s| s * s).sum::<f64>().sqrt();
        assert!((cached - tail).abs() < 1e-9, "{cached} vs {tail}");
    }

    #[test]
    fn init_surplus_columns_are_seeded_and_flagged() {
        let data =
            ObservedMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0)]).unwrap();
        let lap = identity_laplacian(3).unwrap();
        let cfg = InferenceConfig {
            initial_rank: 5,
            seed: 9,
            ..InferenceConfig::default()
        };
        let s1 = init_state(&data, &lap, &lap, &cfg).unwrap();
        let s2 = init_state(&data, &lap, &lap, &cfg).unwrap();
        assert!(s1.rank_deficient_init);
        assert_eq!(s1.u.columns[4].mean, s2.u.columns[4].mean);
        let other = init_state(
            &data,
            &lap,
            &lap,
            &InferenceConfig {
                seed: 10,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_ne!(s1.u.columns[4].mean, other.u.columns[4].mean);
    }

    #[test]
    fn factor_update_scalar_fixture() {
        // One cell M=2, tau=1, v=1 point mass, lambda=1, L=[1]:
        // precision = 1·1 + 1·1 = 2, mean = 1·(1/2)·2 = 1.
        let data = ObservedMatrix::from_triplets(1, 1, &[(0, 0, 2.0)]).unwrap();
        let mut state = moment_state(
            &data,
            point_cols(vec![DVector::from_vec(vec![0.0])]),
            point_cols(vec![DVector::from_vec(vec![1.0])]),
            vec![1.0],
            1.0,
        );
        update_factor_column(&mut state, &data, Side::Row, 0).unwrap();
        assert!((state.u.columns[0].cov[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((state.u.columns[0].mean[0] - 1.0).abs() < 1e-14);
        assert!((state.resid[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn factor_update_huge_lambda_shrinks_to_prior() {
        let data =
            ObservedMatrix::from_triplets(2, 2, &[(0, 0, 3.0), (1, 1, -2.0)]).unwrap();
        let mut state = moment_state(
            &data,
            point_cols(vec![DVector::from_vec(vec![1.0, 1.0])]),
            point_cols(vec![DVector::from_vec(vec![1.0, 1.0])]),
            vec![1e12],
            1.0,
        );
        update_factor_column(&mut state, &data, Side::Row, 0).unwrap();
        assert!(state.u.columns[0].mean.norm() < 1e-9);
        assert!(state.u.columns[0].cov.norm() < 1e-9);
    }

    #[test]
    fn factor_update_unobserved_row_is_prior_only() {
        // Row 1 has no observations: its block of the precision is lambda·L
        // alone, and with identity L the covariance there is 1/lambda.
        let data = ObservedMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (2, 1, 2.0)]).unwrap();
        let mut state = moment_state(
            &data,
            point_cols(vec![DVector::from_vec(vec![0.2, 0.4, 0.6])]),
            point_cols(vec![DVector::from_vec(vec![1.0, 1.0])]),
            vec![4.0],
            1.0,
        );
        update_factor_column(&mut state, &data, Side::Row, 0).unwrap();
        assert!((state.u.columns[0].cov[(1, 1)] - 0.25).abs() < 1e-12);
        assert!(state.u.columns[0].mean[1].abs() < 1e-12);
    }

    #[test]
    fn identity_graphs_give_diagonal_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0f64));
        let data = ObservedMatrix::from_triplets(4, 4, &full_entries(&x)).unwrap();
        let mut state = init_state(
            &data,
            &identity_laplacian(4).unwrap(),
            &identity_laplacian(4).unwrap(),
            &small_cfg(2),
        )
        .unwrap();
        update_factor_column(&mut state, &data, Side::Row, 0).unwrap();
        let cov = &state.u.columns[0].cov;
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    assert!(cov[(a, b)].abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn larger_lambda_shrinks_the_updated_mean() {
        let data = ObservedMatrix::from_triplets(
            3,
            2,
            &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, -1.0), (2, 1, 3.0)],
        )
        .unwrap();
        let mut norms = vec![];
        for lam in [0.5, 2.0, 8.0] {
            let mut state = moment_state(
                &data,
                point_cols(vec![DVector::zeros(3)]),
                point_cols(vec![DVector::from_vec(vec![1.0, -0.5])]),
                vec![lam],
                1.0,
            );
            update_factor_column(&mut state, &data, Side::Row, 0).unwrap();
            norms.push(state.u.columns[0].mean.norm());
        }
        assert!(norms[0] > norms[1] && norms[1] > norms[2]);
    }

    #[test]
    fn expected_quadratic_form_fixtures() {
        let lap3 = identity_laplacian::<f64>(3).unwrap();
        let got = expected_quadratic_form(
            &DVector::zeros(3),
            &DMatrix::identity(3, 3),
            &lap3,
        )
        .unwrap();
        assert!((got - 3.0).abs() < 1e-14);

        let chain = crate::graph::GraphLaplacian::from_matrix(
            DMatrix::<f64>::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]),
            0.0,
        )
        .unwrap();
        let got = expected_quadratic_form(
            &DVector::from_vec(vec![1.0, 1.0]),
            &DMatrix::zeros(2, 2),
            &chain,
        )
        .unwrap();
        assert!(got.abs() < 1e-14);

        assert!(expected_quadratic_form(&DVector::zeros(2), &DMatrix::zeros(2, 2), &lap3).is_err());
    }

    #[test]
    fn lambda_update_fixture() {
        // m=4, n=3, quadratic forms 2 and 1: shape = c0 + 3.5, rate = d0 + 1.5.
        let data = ObservedMatrix::from_triplets(4, 3, &[(0, 0, 1.0)]).unwrap();
        let mut state = moment_state(
            &data,
            point_cols(vec![DVector::from_vec(vec![2.0f64.sqrt(), 0.0, 0.0, 0.0])]),
            point_cols(vec![DVector::from_vec(vec![1.0, 0.0, 0.0])]),
            vec![1.0],
            1.0,
        );
        update_lambda(&mut state).unwrap();
        assert!((state.hyper.lambda[0].shape - 3.500001).abs() < 1e-12);
        assert!((state.hyper.lambda[0].rate - 1.500001).abs() < 1e-12);
        assert!((state.lambda_mean[0] - 3.500001 / 1.500001).abs() < 1e-12);
    }

    #[test]
    fn lambda_update_dead_column_explodes_and_stays_unclamped() {
        let data = ObservedMatrix::from_triplets(4, 3, &[(0, 0, 1.0)]).unwrap();
        let mut state = moment_state(
            &data,
            point_cols(vec![DVector::zeros(4)]),
            point_cols(vec![DVector::zeros(3)]),
            vec![1.0],
            1.0,
        );
        update_lambda(&mut state).unwrap();
        let expected = (1e-6 + 3.5) / 1e-6;
        assert!((state.lambda_mean[0] - expected).abs() / expected < 1e-12);
        assert!(!state.lambda_clamped);
    }

    #[test]
    fn expected_residual_moment_fixtures() {
        let data = ObservedMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.0)]).unwrap();
        // Zero means and covariances: plain sum of squares.
        let state = moment_state(
            &data,
            point_cols(vec![DVector::zeros(2)]),
            point_cols(vec![DVector::zeros(2)]),
            vec![1.0],
            1.0,
        );
        assert!((expected_residual(&state, &data) - 5.0).abs() < 1e-14);

        // Unit covariances add (0·1 + 1·0 + 1·1) per cell and column.
        let state = moment_state(
            &data,
            vec![ColumnGaussian::standard(DVector::zeros(2))],
            vec![ColumnGaussian::standard(DVector::zeros(2))],
            vec![1.0],
            1.0,
        );
        assert!((expected_residual(&state, &data) - 7.0).abs() < 1e-14);

        // Zero covariances with nonzero means: exactly the plug-in residual.
        let u = DVector::from_vec(vec![0.5, -1.0]);
        let v = DVector::from_vec(vec![2.0, 0.25]);
        let state = moment_state(
            &data,
            point_cols(vec![u.clone()]),
            point_cols(vec![v.clone()]),
            vec![1.0],
            1.0,
        );
        let plug = (1.0 - 0.5 * 2.0f64).powi(2) + (2.0 - (-1.0) * 0.25f64).powi(2);
        assert!((expected_residual(&state, &data) - plug).abs() < 1e-14);
    }

    #[test]
    fn tau_update_fixture() {
        // Ten cells with squared sum 2: shape = 5 + a0, rate = 1 + b0.
        let v = 0.2f64.sqrt();
        let entries: Vec<(usize, usize, f64)> = (0..10).map(|p| (p / 5, p % 5, v)).collect();
        let data = ObservedMatrix::from_triplets(2, 5, &entries).unwrap();
        let mut state = moment_state(
            &data,
            point_cols(vec![DVector::zeros(2)]),
            point_cols(vec![DVector::zeros(5)]),
            vec![1.0],
            1.0,
        );
        update_tau(&mut state, &data);
        assert!((state.hyper.tau.shape - 5.000001).abs() < 1e-9);
        assert!((state.hyper.tau.rate - 1.000001).abs() < 1e-9);
    }

    #[test]
    fn elbo_never_decreases_along_coordinate_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let entries = random_entries(&mut rng, 5, 5, 0.8, 2.0);
        let data = ObservedMatrix::from_triplets(5, 5, &entries).unwrap();
        let lap = identity_laplacian(5).unwrap();
        let cfg = InferenceConfig {
            initial_rank: 2,
            // Keep every column so the ascent is over a fixed model.
            prune_rel_tol: 1e-30,
            ..InferenceConfig::default()
        };
        let mut state = init_state(&data, &lap, &lap, &cfg).unwrap();
        let mut last = elbo(&state, &data).unwrap();
        for _ in 0..3 {
            for side in [Side::Row, Side::Col] {
                for i in 0..state.rank() {
                    update_factor_column(&mut state, &data, side, i).unwrap();
                    let now = elbo(&state, &data).unwrap();
                    assert!(now >= last - 1e-8 * last.abs().max(1.0), "{last} -> {now}");
                    last = now;
                }
            }
            update_lambda(&mut state).unwrap();
            let now = elbo(&state, &data).unwrap();
            assert!(now >= last - 1e-8 * last.abs().max(1.0));
            last = now;
            update_tau(&mut state, &data);
            let now = elbo(&state, &data).unwrap();
            assert!(now >= last - 1e-8 * last.abs().max(1.0));
            last = now;
        }
    }

    #[test]
    fn prune_fixtures() {
        let data = ObservedMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        let vec2 = |a: f64, b: f64| DVector::from_vec(vec![a, b]);

        // Ratio 1e-10 is below the cutoff; the strong column survives.
        let mut state = moment_state(
            &data,
            point_cols(vec![vec2(3.0, 0.0), vec2(1e-5, 0.0)]),
            point_cols(vec![vec2(1.0, 0.0), vec2(1e-5, 0.0)]),
            vec![1.0, 1.0],
            1.0,
        );
        prune_columns(&mut state, &data);
        assert_eq!(state.rank(), 1);
        assert_eq!(state.u.columns[0].mean[0], 3.0);
        // Residual re-absorbed the pruned column's prediction exactly.
        assert!((state.resid[0] - (1.0 - 3.0)).abs() < 1e-12);

        // Equal energies: nothing is pruned.
        let mut state = moment_state(
            &data,
            point_cols(vec![vec2(1.0, 0.0), vec2(0.0, 1.0)]),
            point_cols(vec![vec2(0.0, 1.0), vec2(1.0, 0.0)]),
            vec![1.0, 1.0],
            1.0,
        );
        prune_columns(&mut state, &data);
        assert_eq!(state.rank(), 2);

        // Two closely matched columns stay, the dead one goes.
        let mut state = moment_state(
            &data,
            point_cols(vec![vec2(5.0f64.sqrt(), 0.0), vec2(4.9f64.sqrt(), 0.0), vec2(1e-6, 0.0)]),
            point_cols(vec![vec2(0.0, 0.0), vec2(0.0, 0.0), vec2(0.0, 0.0)]),
            vec![1.0; 3],
            1.0,
        );
        prune_columns(&mut state, &data);
        assert_eq!(state.rank(), 2);

        // All-zero energies collapse to a single retained column.
        let mut state = moment_state(
            &data,
            point_cols(vec![vec2(0.0, 0.0), vec2(0.0, 0.0)]),
            point_cols(vec![vec2(0.0, 0.0), vec2(0.0, 0.0)]),
            vec![1.0, 1.0],
            1.0,
        );
        prune_columns(&mut state, &data);
        assert_eq!(state.rank(), 1);
    }

    #[test]
    fn run_recovers_rank_one_noiseless_matrix() {
        let u = DVector::from_vec(vec![1.0, -0.5, 2.0, 0.8, -1.2]);
        let v = DVector::from_vec(vec![0.7, 1.5, -0.3, 1.0, -2.0]);
        let x = &u * v.transpose();
        let data = ObservedMatrix::from_triplets(5, 5, &full_entries(&x)).unwrap();
        let lap = identity_laplacian(5).unwrap();
        let result = run_vi(&data, &lap, &lap, &small_cfg(4)).unwrap();
        assert_eq!(result.estimated_rank, 1);
        let rmse = ((&result.x_hat - &x).norm_squared() / 25.0).sqrt();
        assert!(rmse < 1e-3, "rmse {rmse}");
        assert!(result.converged);
    }

    #[test]
    fn run_on_all_zero_data_collapses() {
        let entries: Vec<(usize, usize, f64)> = (0..16).map(|p| (p / 4, p % 4, 0.0)).collect();
        let data = ObservedMatrix::from_triplets(4, 4, &entries).unwrap();
        let lap = identity_laplacian(4).unwrap();
        let result = run_vi(&data, &lap, &lap, &small_cfg(3)).unwrap();
        assert!(result.estimated_rank <= 1);
        assert!(result.x_hat.amax() < 1e-6);
    }

    #[test]
    fn run_trace_is_well_formed_and_cache_stays_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let entries = random_entries(&mut rng, 6, 6, 0.7, 1.0);
        let data = ObservedMatrix::from_triplets(6, 6, &entries).unwrap();
        let lap = identity_laplacian(6).unwrap();
        let cfg = small_cfg(3);

        // Re-run the loop manually to inspect the final state's cache.
        let mut state = init_state(&data, &lap, &lap, &cfg).unwrap();
        for _ in 0..5 {
            for i in 0..state.rank() {
                update_factor_column(&mut state, &data, Side::Row, i).unwrap();
            }
            for i in 0..state.rank() {
                update_factor_column(&mut state, &data, Side::Col, i).unwrap();
            }
            update_lambda(&mut state).unwrap();
            update_tau(&mut state, &data);
            prune_columns(&mut state, &data);
        }
        let fresh = residual_from_means(&state.u, &state.v, &data);
        for (a, b) in state.resid.iter().zip(&fresh) {
            assert!((a - b).abs() < 1e-9);
        }

        let result = run_vi(&data, &lap, &lap, &cfg).unwrap();
        assert!(!result.trace.is_empty());
        let mut last_wall = 0.0;
        let mut last_rank = usize::MAX;
        for rec in &result.trace {
            assert!(rec.elbo.is_finite());
            assert!(rec.wall_ms >= last_wall);
            assert!(rec.rank <= last_rank);
            last_wall = rec.wall_ms;
            last_rank = rec.rank;
            let line = rec.to_line();
            assert!(line.starts_with(&format!("iteration={}", rec.iteration)));
            assert_eq!(line.split(' ').count(), 6);
        }
        assert_eq!(result.iterations, result.trace.len());
        assert!(result.predictive_variance.is_some());
        let pv = result.predictive_variance.unwrap();
        assert!(pv.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn run_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let entries = random_entries(&mut rng, 8, 8, 0.6, 1.0);
        let data = ObservedMatrix::from_triplets(8, 8, &entries).unwrap();
        let lap = identity_laplacian(8).unwrap();
        let cfg = small_cfg(3);
        let a = run_vi(&data, &lap, &lap, &cfg).unwrap();
        let b = run_vi(&data, &lap, &lap, &cfg).unwrap();
        assert_eq!(a.x_hat, b.x_hat);
        assert_eq!(a.estimated_rank, b.estimated_rank);
    }

    #[test]
    fn config_and_state_validation() {
        assert!(small_cfg(0).validate().is_err());
        assert!(InferenceConfig::<f64> {
            tol: 0.0,
            ..InferenceConfig::default()
        }
        .validate()
        .is_err());
        assert!(InferenceConfig::<f64> {
            prior: PriorConfig {
                c0: HyperParam::Scalar(-1.0),
                ..PriorConfig::default()
            },
            ..InferenceConfig::default()
        }
        .validate()
        .is_err());

        let data = ObservedMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        let err = init_state(
            &data,
            &identity_laplacian(3).unwrap(),
            &identity_laplacian(2).unwrap(),
            &small_cfg(1),
        );
        assert!(err.is_err());
    }
}
