//! Graph Laplacian construction: k-nearest-neighbor graphs from feature
//! vectors, the Gaussian index kernel for regularly sampled signals, and
//! jittered Laplacians L = D − A + ε̂I that are safe to factorize.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Default diagonal jitter ε̂ keeping Laplacians positive definite.
pub const DEFAULT_JITTER: f64 = 1e-6;

/// Symmetric nonnegative adjacency matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency<T: Real> {
    n: usize,
    weights: DMatrix<T>,
}

impl<T: Real> Adjacency<T> {
    /// Wraps a weight matrix, validating symmetry, nonnegativity and the
    /// zero diagonal.
    pub fn new(weights: DMatrix<T>) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::Dimension(format!(
                "adjacency must be square, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        for i in 0..n {
            if weights[(i, i)] != T::zero() {
                return Err(Error::InvalidData(format!(
                    "adjacency diagonal must be zero, entry ({i},{i}) is {}",
                    weights[(i, i)]
                )));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if w != weights[(j, i)] {
                    return Err(Error::InvalidData(format!(
                        "adjacency not symmetric at ({i},{j})"
                    )));
                }
                if w < T::zero() || w != w {
                    return Err(Error::InvalidData(format!(
                        "adjacency weight at ({i},{j}) is {w}, must be finite and >= 0"
                    )));
                }
            }
        }
        Ok(Self { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &DMatrix<T> {
        &self.weights
    }
}

/// Symmetric positive-definite graph Laplacian, L = D − A + ε̂I.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian<T: Real> {
    n: usize,
    matrix: DMatrix<T>,
    jitter: T,
}

impl<T: Real> GraphLaplacian<T> {
    /// Wraps a user-supplied symmetric matrix as a Laplacian, adding
    /// `extra_jitter`·I on top of whatever the matrix already carries.
    /// Needed because raw Laplacians are singular (constant nullspace).
    pub fn from_matrix(matrix: DMatrix<T>, extra_jitter: T) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n || n == 0 {
            return Err(Error::Dimension(format!(
                "laplacian must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if extra_jitter < T::zero() {
            return Err(Error::InvalidArgument("jitter must be >= 0".into()));
        }
        let mut matrix = matrix;
        for i in 0..n {
            for j in 0..n {
                let x = matrix[(i, j)];
                if x != x {
                    return Err(Error::InvalidData(format!("laplacian has NaN at ({i},{j})")));
                }
                if x != matrix[(j, i)] {
                    return Err(Error::InvalidData(format!(
                        "laplacian not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        for i in 0..n {
            matrix[(i, i)] += extra_jitter;
        }
        Ok(Self {
            n,
            matrix,
            jitter: extra_jitter,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    /// The ε̂ recorded when this Laplacian was built.
    pub fn jitter(&self) -> T {
        self.jitter
    }
}

/// Builds a binary k-nearest-neighbor adjacency from feature vectors.
///
/// Directed k-NN edges (Euclidean distance) are symmetrized by union, ties
/// broken by lower vertex index, and all edge weights are 1.
pub fn knn_adjacency<T: Real>(features: &[Vec<T>], k: usize) -> Result<Adjacency<T>> {
    let n = features.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty feature list".into()));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "k must satisfy 1 <= k < n, got k={k} with n={n}"
        )));
    }
    let dim = features[0].len();
    for (i, f) in features.iter().enumerate() {
        if f.len() != dim {
            return Err(Error::Dimension(format!(
                "feature {i} has dimension {}, expected {dim}",
                f.len()
            )));
        }
        if f.iter().any(|x| *x != *x) {
            return Err(Error::InvalidData(format!("feature {i} contains NaN")));
        }
    }

    // Each vertex's neighbor list is independent of the others, so this part
    // parallelizes without affecting determinism.
    let neighbor_lists: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(T, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2 = features[i]
                        .iter()
                        .zip(&features[j])
                        .fold(T::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b));
                    (d2, j)
                })
                .collect();
            cand.sort_by(|a, b| a.partial_cmp(b).expect("distances are comparable"));
            cand.truncate(k);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let mut weights = DMatrix::zeros(n, n);
    for (i, nbrs) in neighbor_lists.iter().enumerate() {
        for &j in nbrs {
            weights[(i, j)] = T::one();
            weights[(j, i)] = T::one();
        }
    }
    Adjacency::new(weights)
}

/// Gaussian kernel adjacency on the index line: A_ij = exp(−(i−j)²/θ²).
pub fn gaussian_kernel_adjacency<T: Real>(n: usize, theta: T) -> Result<Adjacency<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "kernel adjacency needs n >= 2, got {n}"
        )));
    }
    if theta <= T::zero() {
        return Err(Error::InvalidArgument(format!(
            "kernel width must be positive, got {theta}"
        )));
    }
    let mut weights = DMatrix::zeros(n, n);
    let t2 = theta * theta;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = real::<T>((j - i) as f64);
            let w = (-(d * d) / t2).exp();
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    Adjacency::new(weights)
}

/// Builds L = D − A + ε̂I from an adjacency.
pub fn laplacian<T: Real>(adj: &Adjacency<T>, jitter: T) -> Result<GraphLaplacian<T>> {
    if jitter < T::zero() {
        return Err(Error::InvalidArgument("jitter must be >= 0".into()));
    }
    let n = adj.n();
    let a = adj.weights();
    let mut matrix = -a.clone();
    for i in 0..n {
        let degree = a.row(i).iter().fold(T::zero(), |acc, w| acc + *w);
        matrix[(i, i)] = degree + jitter;
    }
    Ok(GraphLaplacian { n, matrix, jitter })
}

/// The identity matrix as a Laplacian, for graph-free sides.
///
/// Viewed as L = D − A + ε̂I this is the edgeless graph with ε̂ = 1, which
/// keeps every Laplacian invariant intact.
pub fn identity_laplacian<T: Real>(n: usize) -> Result<GraphLaplacian<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("identity laplacian needs n >= 1".into()));
    }
    Ok(GraphLaplacian {
        n,
        matrix: DMatrix::identity(n, n),
        jitter: T::one(),
    })
}
