//! Closed-form mean-square analysis of the incremental LMS ring.
//!
//! Working in each node's input eigenbasis, one node update maps the
//! weighted error energy E‖w̄‖²_σ through a fixed per-node transition
//! matrix plus a noise injection term. Chaining the N nodes of one sweep
//! gives a per-sweep composite transition matrix and an accumulated
//! noise-injection row vector; from those this module evaluates
//!
//! - the transient learning curve in closed form (tracking successive
//!   powers of the sweep matrix),
//! - the same curve by brute-force forward recursion of the per-node moment
//!   vector, which serves as an independent oracle for the closed form,
//! - per-node values of the first sweep, and
//! - the steady state as a linear solve against I − sweep_matrix.
//!
//! Choosing the all-ones weighting yields MSD; weighting by the last node's
//! input eigenvalues yields EMSE.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matlib::{self, dot, Matrix};
use crate::network::{NetworkConfig, RandomStream};
use crate::scalar::{power_db, Scalar};
use crate::simulator::fmt_field;

/// Iteration budget for the spectral-radius estimate used to gate curve
/// evaluation.
pub const RADIUS_MAX_ITERS: usize = 100_000;

/// Eigendecomposition of one node's input covariance: eigenvalues in
/// descending order and the orthonormal eigenvector matrix.
#[derive(Debug, Clone)]
pub struct NodeSpectrum<T> {
    pub eigenvalues: Vec<T>,
    pub basis: Matrix<T>,
}

impl<T: Scalar> NodeSpectrum<T> {
    /// Largest input eigenvalue.
    pub fn max_eigenvalue(&self) -> T {
        self.eigenvalues[0]
    }

    /// The eigenvalues as a diagonal matrix.
    pub fn eigenvalue_matrix(&self) -> Matrix<T> {
        Matrix::from_diag(&self.eigenvalues)
    }
}

/// Per-node eigendecompositions for a whole network.
#[derive(Debug, Clone)]
pub struct SpectralData<T> {
    nodes: Vec<NodeSpectrum<T>>,
}

impl<T: Scalar> SpectralData<T> {
    /// Decomposes every node's input covariance. Tolerance scales with the
    /// scalar's precision.
    pub fn from_network(config: &NetworkConfig<T>) -> Result<Self> {
        let tol = spectral_tol::<T>();
        let nodes = config
            .nodes()
            .iter()
            .map(|node| {
                let (eigenvalues, basis) = matlib::jacobi_eig(node.input_covariance(), tol)?;
                if eigenvalues.iter().any(|&l| !(l > T::zero())) {
                    return Err(Error::Validation(
                        "input covariance must be positive definite".to_string(),
                    ));
                }
                Ok(NodeSpectrum { eigenvalues, basis })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SpectralData { nodes })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, k: usize) -> &NodeSpectrum<T> {
        &self.nodes[k]
    }
}

fn spectral_tol<T: Scalar>() -> T {
    T::epsilon() * T::of(100.0)
}

/// Sufficient mean-stability bound for node k's step size: 2 over the
/// node's largest input eigenvalue.
pub fn mean_stability_bound<T: Scalar>(spectral: &SpectralData<T>, k: usize) -> T {
    T::of(2.0) / spectral.node(k).max_eigenvalue()
}

/// Per-node energy transition matrix in the node's eigenbasis:
/// I − 2μΛ + μ²(Λ² + λλᵀ), fixed across iterations.
pub fn node_transition_matrix<T: Scalar>(spectral: &SpectralData<T>, mu: T, k: usize) -> Matrix<T> {
    let lambda = &spectral.node(k).eigenvalues;
    let m = lambda.len();
    let mu_sq = mu * mu;
    let mut f = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut entry = mu_sq * lambda[i] * lambda[j];
            if i == j {
                entry = entry + T::one() - T::of(2.0) * mu * lambda[i] + mu_sq * lambda[i] * lambda[i];
            }
            f.set(i, j, entry);
        }
    }
    f
}

/// The chained one-sweep analysis: per-node transition matrices, their
/// running left-to-right products, and the accumulated noise-injection row
/// vectors, plus the last node's eigendata needed to express the initial
/// error and the EMSE weighting.
#[derive(Debug, Clone)]
pub struct TheoryChain<T> {
    /// Per-node transition matrices, ring order.
    pub node_matrices: Vec<Matrix<T>>,
    /// Per-node noise injection vectors σ²_v μ² λ.
    pub node_noise: Vec<Vec<T>>,
    /// Product of all node matrices in ring order (node 1 leftmost).
    pub sweep_matrix: Matrix<T>,
    /// Noise-injection row vector accumulated over one full sweep.
    pub noise_row: Vec<T>,
    /// Running products up to node k, k = 1..N.
    pub sweep_partials: Vec<Matrix<T>>,
    /// Accumulated noise rows up to node k, k = 1..N.
    pub noise_partials: Vec<Vec<T>>,
    /// Eigenvector matrix of the last node, whose estimate is recorded.
    pub last_basis: Matrix<T>,
    /// Eigenvalues of the last node, the EMSE weighting.
    pub last_eigenvalues: Vec<T>,
}

impl<T: Scalar> TheoryChain<T> {
    pub fn filter_length(&self) -> usize {
        self.last_eigenvalues.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_matrices.len()
    }

    /// All-ones weighting selecting the mean-square deviation.
    pub fn msd_weighting(&self) -> Vec<T> {
        vec![T::one(); self.filter_length()]
    }

    /// Last node's eigenvalue weighting selecting the excess mean-square
    /// error.
    pub fn emse_weighting(&self) -> Vec<T> {
        self.last_eigenvalues.clone()
    }

    /// The true weight vector expressed in the last node's eigenbasis and
    /// squared entrywise: the initial error energy per mode.
    fn initial_energy(&self, true_weights: &[T]) -> Vec<T> {
        assert_eq!(true_weights.len(), self.filter_length());
        self.last_basis
            .tr_mul_vec(true_weights)
            .into_iter()
            .map(|x| x * x)
            .collect()
    }
}

/// Builds the full analysis chain for a network.
///
/// The running product is taken in ring order with node 1 leftmost; the
/// weighted-norm chaining makes the order significant. The accumulated
/// noise row obeys B_k = B_{k−1}·F_k + σ²_v,k μ_k² λ_kᵀ.
pub fn build_chain<T: Scalar>(
    config: &NetworkConfig<T>,
    spectral: &SpectralData<T>,
) -> Result<TheoryChain<T>> {
    let n = config.num_nodes();
    if spectral.num_nodes() != n {
        return Err(Error::Validation(format!(
            "spectral data covers {} nodes but the network has {n}",
            spectral.num_nodes()
        )));
    }
    let m = config.filter_length();
    let mut node_matrices = Vec::with_capacity(n);
    let mut node_noise = Vec::with_capacity(n);
    let mut sweep_partials: Vec<Matrix<T>> = Vec::with_capacity(n);
    let mut noise_partials: Vec<Vec<T>> = Vec::with_capacity(n);

    for k in 0..n {
        let node = config.node(k);
        let mu = node.step_size();
        let gain = node.noise_variance() * mu * mu;
        let lambda = &spectral.node(k).eigenvalues;
        if lambda.len() != m {
            return Err(Error::Validation(format!(
                "node {k} spectrum has length {} but the filter length is {m}",
                lambda.len()
            )));
        }
        let transition = node_transition_matrix(spectral, mu, k);
        let injection: Vec<T> = lambda.iter().map(|&l| gain * l).collect();

        let product = match sweep_partials.last() {
            Some(prev) => prev.mul(&transition),
            None => transition.clone(),
        };
        let noise_acc = match noise_partials.last() {
            Some(prev) => {
                let propagated = matlib::row_mul(prev, &transition);
                propagated
                    .into_iter()
                    .zip(&injection)
                    .map(|(p, &g)| p + g)
                    .collect()
            }
            None => injection.clone(),
        };
        sweep_partials.push(product);
        noise_partials.push(noise_acc);
        node_matrices.push(transition);
        node_noise.push(injection);
    }

    let sweep_matrix = sweep_partials.last().expect("n >= 1").clone();
    let noise_row = noise_partials.last().expect("n >= 1").clone();
    let last = spectral.node(n - 1);
    Ok(TheoryChain {
        node_matrices,
        node_noise,
        sweep_matrix,
        noise_row,
        sweep_partials,
        noise_partials,
        last_basis: last.basis.clone(),
        last_eigenvalues: last.eigenvalues.clone(),
    })
}

/// Dominant eigenvalue magnitude via seeded two-dimensional subspace power
/// iteration with Rayleigh-Ritz extraction.
///
/// A one-dimensional power vector oscillates forever when the dominant
/// eigenvalues form a complex pair, which products of per-node transition
/// matrices can produce; the projected 2×2 problem covers that case and
/// reduces to plain power iteration for 1×1 input.
pub fn spectral_radius<T: Scalar>(a: &Matrix<T>, tol: T, max_iters: usize) -> Result<T> {
    if !a.is_square() || a.rows() == 0 {
        return Err(Error::Validation(
            "spectral radius needs a non-empty square matrix".to_string(),
        ));
    }
    if !(tol > T::zero()) {
        return Err(Error::Validation("tolerance must be positive".to_string()));
    }
    let n = a.rows();
    let p = n.min(2);
    let mut stream = RandomStream::new(0x5EED_0D0A_7E57_0001);
    let mut basis: Vec<Vec<T>> = (0..p).map(|_| random_unit(n, &mut stream)).collect();
    orthonormalize(&mut basis, &mut stream);

    let mut estimate = T::zero();
    for _ in 0..max_iters {
        let images: Vec<Vec<T>> = basis.iter().map(|b| a.mul_vec(b)).collect();
        // Rayleigh-Ritz projection onto the current basis.
        let mut h = [[T::zero(); 2]; 2];
        for (i, b) in basis.iter().enumerate() {
            for (j, y) in images.iter().enumerate() {
                h[i][j] = dot(b, y);
            }
        }
        let rho = if p == 1 {
            h[0][0].abs()
        } else {
            dominant_magnitude_2x2(h)
        };
        if (rho - estimate).abs() <= tol * rho.max(T::min_positive_value()) {
            return Ok(rho);
        }
        estimate = rho;
        basis = images;
        orthonormalize(&mut basis, &mut stream);
    }
    Err(Error::Convergence {
        routine: "spectral_radius",
        budget: max_iters,
    })
}

fn random_unit<T: Scalar>(n: usize, stream: &mut RandomStream) -> Vec<T> {
    (0..n).map(|_| T::of(stream.next_f64() * 2.0 - 1.0)).collect()
}

/// Modified Gram-Schmidt with one re-orthogonalization pass; a single pass
/// loses orthogonality to rounding when the subtraction cancels
/// catastrophically (the dominant direction outweighs the rest by more
/// than 1/ε). Degenerate directions are replaced by fresh random draws so
/// the basis always ends up orthonormal.
fn orthonormalize<T: Scalar>(basis: &mut [Vec<T>], stream: &mut RandomStream) {
    let n = basis[0].len();
    for i in 0..basis.len() {
        loop {
            for _pass in 0..2 {
                for j in 0..i {
                    let (head, tail) = basis.split_at_mut(i);
                    let proj = dot(&head[j], &tail[0]);
                    for (x, &h) in tail[0].iter_mut().zip(&head[j]) {
                        *x = *x - proj * h;
                    }
                }
            }
            let norm = matlib::norm_sq(&basis[i]).sqrt();
            if norm > T::min_positive_value().sqrt() {
                for x in basis[i].iter_mut() {
                    *x = *x / norm;
                }
                break;
            }
            basis[i] = random_unit(n, stream);
        }
    }
}

/// Largest eigenvalue magnitude of a real 2×2 matrix; a negative
/// discriminant means a complex conjugate pair of magnitude sqrt(det).
fn dominant_magnitude_2x2<T: Scalar>(h: [[T; 2]; 2]) -> T {
    let half_trace = (h[0][0] + h[1][1]) * T::of(0.5);
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let disc = half_trace * half_trace - det;
    if disc >= T::zero() {
        let s = disc.sqrt();
        (half_trace + s).abs().max((half_trace - s).abs())
    } else {
        det.sqrt()
    }
}

/// Learning curve: a weighted error-energy value per iteration, linear
/// power, index 0 being the initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> LearningCurve<T> {
    pub fn iterations(&self) -> usize {
        self.values.len() - 1
    }

    pub fn last(&self) -> T {
        *self.values.last().expect("curve never empty")
    }

    pub fn to_db(&self) -> Vec<T> {
        self.values.iter().map(|&v| power_db(v)).collect()
    }
}

/// Iterative evaluation of the closed-form transient recursion.
///
/// Tracks the running power of the sweep matrix; each step adds the noise
/// contribution and the decaying initial-error contribution to the current
/// weighted energy. Construction refuses unstable chains (spectral radius
/// of the sweep matrix at or above one), except for the exactly frozen
/// all-zero-step-size network whose curve is constant.
pub struct TransientRecursion<'a, T: Scalar> {
    chain: &'a TheoryChain<T>,
    weighting: Vec<T>,
    gap_weighting: Vec<T>,
    initial_energy: Vec<T>,
    power: Matrix<T>,
    value: T,
    iteration: usize,
    spectral_radius: T,
}

impl<'a, T: Scalar> TransientRecursion<'a, T> {
    pub fn new(chain: &'a TheoryChain<T>, true_weights: &[T], weighting: &[T]) -> Result<Self> {
        let m = chain.filter_length();
        if true_weights.len() != m || weighting.len() != m {
            return Err(Error::Validation(format!(
                "weight vector and weighting must have length {m}"
            )));
        }
        let frozen = chain.sweep_matrix == Matrix::identity(m);
        let rho = if frozen {
            T::one()
        } else {
            let tol = T::of(1e-10).max(spectral_tol::<T>());
            spectral_radius(&chain.sweep_matrix, tol, RADIUS_MAX_ITERS)?
        };
        if !frozen && rho >= T::one() {
            return Err(Error::Instability {
                spectral_radius: rho.as_f64(),
            });
        }
        let initial_energy = chain.initial_energy(true_weights);
        let value = dot(&initial_energy, weighting);
        let weighted = chain.sweep_matrix.mul_vec(weighting);
        let gap_weighting: Vec<T> = weighted
            .into_iter()
            .zip(weighting)
            .map(|(w, &s)| w - s)
            .collect();
        Ok(TransientRecursion {
            chain,
            weighting: weighting.to_vec(),
            gap_weighting,
            initial_energy,
            power: Matrix::identity(m),
            value,
            iteration: 0,
            spectral_radius: rho,
        })
    }

    pub fn value(&self) -> T {
        self.value
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn spectral_radius(&self) -> T {
        self.spectral_radius
    }

    /// Advances one iteration and returns the new curve value.
    pub fn advance(&mut self) -> T {
        let weighted = self.power.mul_vec(&self.weighting);
        let gap = self.power.mul_vec(&self.gap_weighting);
        self.value = self.value
            + dot(&self.chain.noise_row, &weighted)
            + dot(&self.initial_energy, &gap);
        self.power = self.power.mul(&self.chain.sweep_matrix);
        self.iteration += 1;
        self.value
    }

    /// Runs until the curve increment is negligible — at most `cap`
    /// iterations — and returns the plateau value with the iteration it was
    /// reached at.
    ///
    /// The stop rule combines a small absolute floor with a tail-aware
    /// relative term: a geometric tail of ratio ρ still ahead of iteration
    /// i is about increment·ρ/(1−ρ), so requiring
    /// increment ≤ rel_tol·value·(1−ρ) bounds the *remaining* error
    /// relative to the plateau value rather than the step size.
    pub fn run_to_plateau(&mut self, rel_tol: T, cap: usize) -> (T, usize) {
        let headroom = (T::one() - self.spectral_radius).max(T::epsilon());
        let mut consecutive = 0;
        for _ in 0..cap {
            let previous = self.value;
            let next = self.advance();
            let increment = (next - previous).abs();
            let threshold = T::of(1e-14).max(rel_tol * next.abs() * headroom);
            if increment <= threshold {
                consecutive += 1;
                if consecutive >= 3 {
                    break;
                }
            } else {
                consecutive = 0;
            }
        }
        (self.value, self.iteration)
    }
}

/// Evaluates the closed-form transient curve for `iterations` sweeps.
pub fn transient_curve<T: Scalar>(
    chain: &TheoryChain<T>,
    true_weights: &[T],
    weighting: &[T],
    iterations: usize,
) -> Result<LearningCurve<T>> {
    let mut recursion = TransientRecursion::new(chain, true_weights, weighting)?;
    let mut values = Vec::with_capacity(iterations + 1);
    values.push(recursion.value());
    for _ in 0..iterations {
        values.push(recursion.advance());
    }
    Ok(LearningCurve { values })
}

/// Brute-force forward recursion of the per-mode moment vector: one
/// transition-matrix application and one noise injection per node per
/// iteration. Evaluates the same quantity the closed form compresses, so it
/// doubles as the internal oracle for [`transient_curve`].
pub fn state_space_curve<T: Scalar>(
    chain: &TheoryChain<T>,
    true_weights: &[T],
    weighting: &[T],
    iterations: usize,
) -> Result<LearningCurve<T>> {
    // Same stability gate as the closed form.
    let gate = TransientRecursion::new(chain, true_weights, weighting)?;
    let mut moment = gate.initial_energy.clone();
    let mut values = Vec::with_capacity(iterations + 1);
    values.push(dot(&moment, weighting));
    for _ in 0..iterations {
        for (transition, injection) in chain.node_matrices.iter().zip(&chain.node_noise) {
            let mut next = transition.tr_mul_vec(&moment);
            for (x, &g) in next.iter_mut().zip(injection) {
                *x = *x + g;
            }
            moment = next;
        }
        values.push(dot(&moment, weighting));
    }
    Ok(LearningCurve { values })
}

/// Per-node weighted error energy after the first sweep, from the chain
/// partials: entry k is the initial energy pushed through the partial
/// product up to node k plus the accumulated noise row up to node k.
pub fn first_sweep_values<T: Scalar>(
    chain: &TheoryChain<T>,
    true_weights: &[T],
    weighting: &[T],
) -> Vec<T> {
    let initial_energy = chain.initial_energy(true_weights);
    chain
        .sweep_partials
        .iter()
        .zip(&chain.noise_partials)
        .map(|(product, noise)| {
            dot(&initial_energy, &product.mul_vec(weighting)) + dot(noise, weighting)
        })
        .collect()
}

/// Steady-state weighted error energy: noise_row·(I − sweep_matrix)⁻¹·σ.
///
/// Refuses unstable chains; a singular system here signals a
/// parameterization at the stability boundary.
pub fn steady_state<T: Scalar>(chain: &TheoryChain<T>, weighting: &[T]) -> Result<T> {
    let m = chain.filter_length();
    if weighting.len() != m {
        return Err(Error::Validation(format!(
            "weighting must have length {m}"
        )));
    }
    let tol = T::of(1e-10).max(spectral_tol::<T>());
    let rho = spectral_radius(&chain.sweep_matrix, tol, RADIUS_MAX_ITERS)?;
    if rho >= T::one() {
        return Err(Error::Instability {
            spectral_radius: rho.as_f64(),
        });
    }
    let system = Matrix::identity(m).sub(&chain.sweep_matrix);
    let solved = matlib::solve_linear(&system, weighting)?;
    Ok(dot(&chain.noise_row, &solved))
}

/// Steady-state summary serialized by the theory CLI command.
#[derive(Debug, Clone, Serialize)]
pub struct SteadySummary {
    pub msd_db: f64,
    pub emse_db: f64,
    pub spectral_radius: f64,
    pub stable: bool,
}

/// Writes theory curves as CSV: iteration, theory_msd_db, theory_emse_db.
pub fn write_curves_csv<T: Scalar, W: Write>(
    msd: &LearningCurve<T>,
    emse: &LearningCurve<T>,
    mut out: W,
) -> Result<()> {
    if msd.values.len() != emse.values.len() {
        return Err(Error::Validation(
            "MSD and EMSE curves must cover the same iterations".to_string(),
        ));
    }
    writeln!(out, "iteration,theory_msd_db,theory_emse_db")?;
    for (i, (m, e)) in msd.values.iter().zip(&emse.values).enumerate() {
        writeln!(
            out,
            "{i},{},{}",
            fmt_field(power_db(*m)),
            fmt_field(power_db(*e))
        )?;
    }
    Ok(())
}
