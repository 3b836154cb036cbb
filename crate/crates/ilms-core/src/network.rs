//! Network definition and signal model: per-node statistical profiles, the
//! ring configuration, and the deterministic random generators that realize
//! regressors and noisy observations.
//!
//! The data model at node k and time i is d = u·w_o + v, with u a zero-mean
//! Gaussian row regressor of covariance R_u and v zero-mean Gaussian noise
//! of variance σ²_v, all draws independent across nodes and time.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::matlib::{self, Matrix};
use crate::scalar::Scalar;

/// SplitMix64 finalizer; also used to derive independent substream seeds.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Derives an independent child seed from a parent seed and a stream index.
///
/// Used to give every (replica, node) pair its own stream from one master
/// seed: replica r uses `derive_seed(master, 1 + r)`, node k within a
/// replica uses `derive_seed(replica_seed, k)`, and the network builder's
/// jitter stream is `derive_seed(master, 0)`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index.wrapping_mul(GOLDEN_GAMMA).wrapping_add(1)))
}

/// Deterministic random stream: SplitMix64 counter generator with a
/// Box-Muller normal transform. Identical seed and draw sequence give
/// bit-identical outputs on every platform.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    state: u64,
    spare_normal: Option<f64>,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream { seed, state: seed, spare_normal: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream derived from this stream's seed and an index; see
    /// [`derive_seed`].
    pub fn substream(&self, index: u64) -> RandomStream {
        RandomStream::new(derive_seed(self.seed, index))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Standard normal draw via Box-Muller; the second member of each
    /// generated pair is cached for the next call.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }
}

/// Per-node statistical profile: step size μ, noise variance σ²_v, and the
/// regressor covariance R_u with its cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct NodeProfile<T> {
    step_size: T,
    noise_variance: T,
    input_covariance: Matrix<T>,
    chol_factor: Matrix<T>,
}

impl<T: Scalar> NodeProfile<T> {
    /// Validates μ > 0 (or zero for the degenerate frozen filter), σ²_v >= 0
    /// and R_u symmetric positive definite; the Cholesky factor is computed
    /// once here and cached for the signal generator.
    pub fn new(step_size: T, noise_variance: T, input_covariance: Matrix<T>) -> Result<Self> {
        if !(step_size >= T::zero()) || !step_size.is_finite() {
            return Err(Error::Validation(format!(
                "step size must be finite and >= 0, got {step_size}"
            )));
        }
        if !(noise_variance >= T::zero()) || !noise_variance.is_finite() {
            return Err(Error::Validation(format!(
                "noise variance must be finite and >= 0, got {noise_variance}"
            )));
        }
        if !input_covariance.is_square() {
            return Err(Error::Validation(
                "input covariance must be square".to_string(),
            ));
        }
        let scale = input_covariance.max_abs().max(T::one());
        if input_covariance.asymmetry() > T::epsilon() * T::of(100.0) * scale {
            return Err(Error::Validation(
                "input covariance must be symmetric".to_string(),
            ));
        }
        let chol_factor = matlib::cholesky(&input_covariance)?;
        Ok(NodeProfile { step_size, noise_variance, input_covariance, chol_factor })
    }

    pub fn step_size(&self) -> T {
        self.step_size
    }

    pub fn noise_variance(&self) -> T {
        self.noise_variance
    }

    pub fn input_covariance(&self) -> &Matrix<T> {
        &self.input_covariance
    }

    /// Draws one regressor into `out`: L·g with g standard normal.
    pub(crate) fn sample_regressor_into(&self, stream: &mut RandomStream, out: &mut [T]) {
        let m = self.input_covariance.rows();
        debug_assert_eq!(out.len(), m);
        // Lower-triangular multiply folded into the draw loop; L is cached.
        for x in out.iter_mut() {
            *x = T::zero();
        }
        for (j, x) in (0..m).map(|j| (j, T::of(stream.next_normal()))) {
            for i in j..m {
                out[i] = out[i] + self.chol_factor.get(i, j) * x;
            }
        }
    }
}

/// Ordered ring of nodes plus the common filter length and true weight
/// vector. Ring order is list order; node indices are zero-based with the
/// last node producing the per-iteration estimate.
#[derive(Debug, Clone)]
pub struct NetworkConfig<T> {
    num_nodes: usize,
    filter_length: usize,
    true_weights: Vec<T>,
    nodes: Vec<NodeProfile<T>>,
}

impl<T: Scalar> NetworkConfig<T> {
    pub fn new(filter_length: usize, true_weights: Vec<T>, nodes: Vec<NodeProfile<T>>) -> Result<Self> {
        if filter_length == 0 || nodes.is_empty() {
            return Err(Error::Validation(
                "network needs at least one node and filter length >= 1".to_string(),
            ));
        }
        if true_weights.len() != filter_length {
            return Err(Error::Validation(format!(
                "true weight vector length {} does not match filter length {filter_length}",
                true_weights.len()
            )));
        }
        if true_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation("true weights must be finite".to_string()));
        }
        for (k, node) in nodes.iter().enumerate() {
            if node.input_covariance.rows() != filter_length {
                return Err(Error::Validation(format!(
                    "node {k} covariance is {}x{} but filter length is {filter_length}",
                    node.input_covariance.rows(),
                    node.input_covariance.cols()
                )));
            }
        }
        Ok(NetworkConfig {
            num_nodes: nodes.len(),
            filter_length,
            true_weights,
            nodes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn filter_length(&self) -> usize {
        self.filter_length
    }

    pub fn true_weights(&self) -> &[T] {
        &self.true_weights
    }

    pub fn nodes(&self) -> &[NodeProfile<T>] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &NodeProfile<T> {
        &self.nodes[k]
    }
}

/// Per-node step sizes: one value for every node or an explicit list.
#[derive(Debug, Clone)]
pub enum StepSizes<T> {
    Uniform(T),
    PerNode(Vec<T>),
}

impl<T: Scalar> StepSizes<T> {
    pub fn resolve(&self, num_nodes: usize) -> Result<Vec<T>> {
        match self {
            StepSizes::Uniform(mu) => Ok(vec![*mu; num_nodes]),
            StepSizes::PerNode(list) => {
                if list.len() != num_nodes {
                    return Err(Error::Validation(format!(
                        "step size list has {} entries for {num_nodes} nodes",
                        list.len()
                    )));
                }
                Ok(list.clone())
            }
        }
    }
}

/// Arguments for [`build_network`]; mirrors the JSON configuration schema
/// plus the jitter switch, which is only reachable programmatically.
#[derive(Debug, Clone)]
pub struct BuildParams<T> {
    pub filter_length: usize,
    pub num_nodes: usize,
    pub step_sizes: StepSizes<T>,
    pub snr_db: T,
    pub correlation: T,
    /// Explicit per-node noise variances; overrides the SNR-derived profile.
    pub noise_profile: Option<Vec<T>>,
    /// True weight vector; defaults to (1,…,1)/sqrt(M).
    pub true_weights: Option<Vec<T>>,
    /// When true (the default) and no explicit profile is given, each node's
    /// noise variance gets a seeded uniform ±50% jitter around the SNR value.
    pub jitter: bool,
}

impl<T: Scalar> BuildParams<T> {
    pub fn new(filter_length: usize, num_nodes: usize, step_sizes: StepSizes<T>, snr_db: T, correlation: T) -> Self {
        BuildParams {
            filter_length,
            num_nodes,
            step_sizes,
            snr_db,
            correlation,
            noise_profile: None,
            true_weights: None,
            jitter: true,
        }
    }
}

/// Noise variance implied by an SNR in dB under the unit signal power
/// convention (unit-norm w_o, unit-variance regressor taps): 10^(-snr/10).
pub fn snr_noise_variance<T: Scalar>(snr_db: T) -> T {
    T::of(10.0).powf(-snr_db / T::of(10.0))
}

/// Builds the ring network: every node gets the AR(1) input covariance for
/// the given correlation, step sizes from `step_sizes`, and noise variances
/// either from the explicit profile or from the SNR with optional jitter.
/// Deterministic for a given parameter set and stream seed.
pub fn build_network<T: Scalar>(
    params: &BuildParams<T>,
    stream: &mut RandomStream,
) -> Result<NetworkConfig<T>> {
    let m = params.filter_length;
    let n = params.num_nodes;
    if m == 0 || n == 0 {
        return Err(Error::Validation(
            "filter length and node count must be >= 1".to_string(),
        ));
    }
    let step_sizes = params.step_sizes.resolve(n)?;
    let covariance = matlib::toeplitz_ar1(m, params.correlation)?;

    let noise: Vec<T> = match &params.noise_profile {
        Some(profile) => {
            if profile.len() != n {
                return Err(Error::Validation(format!(
                    "noise profile has {} entries for {n} nodes",
                    profile.len()
                )));
            }
            if profile.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
                return Err(Error::Validation(
                    "noise profile entries must be finite and >= 0".to_string(),
                ));
            }
            profile.clone()
        }
        None => {
            let base = snr_noise_variance(params.snr_db);
            (0..n)
                .map(|_| {
                    if params.jitter {
                        let jitter = T::of(stream.next_f64() - 0.5);
                        base * (T::one() + jitter)
                    } else {
                        base
                    }
                })
                .collect()
        }
    };

    let true_weights = match &params.true_weights {
        Some(w) => {
            if w.len() != m {
                return Err(Error::Validation(format!(
                    "true weight vector has {} entries for filter length {m}",
                    w.len()
                )));
            }
            w.clone()
        }
        None => vec![T::one() / T::of(m as f64).sqrt(); m],
    };

    let nodes = step_sizes
        .into_iter()
        .zip(noise)
        .map(|(mu, var)| NodeProfile::new(mu, var, covariance.clone()))
        .collect::<Result<Vec<_>>>()?;
    NetworkConfig::new(m, true_weights, nodes)
}

/// Draws one zero-mean Gaussian regressor with the profile's covariance.
pub fn generate_regressor<T: Scalar>(profile: &NodeProfile<T>, stream: &mut RandomStream) -> Vec<T> {
    let mut out = vec![T::zero(); profile.input_covariance.rows()];
    profile.sample_regressor_into(stream, &mut out);
    out
}

/// Draws one observation d = u·w_o + v with v ~ N(0, σ²_v).
pub fn generate_observation<T: Scalar>(
    profile: &NodeProfile<T>,
    regressor: &[T],
    true_weights: &[T],
    stream: &mut RandomStream,
) -> T {
    debug_assert_eq!(regressor.len(), true_weights.len());
    let noise = profile.noise_variance.sqrt() * T::of(stream.next_normal());
    matlib::dot(regressor, true_weights) + noise
}

/// JSON network configuration document. Unknown keys are rejected.
///
/// `mu` accepts either a single number applied to every node or an array of
/// n per-node values.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub m: usize,
    pub n: usize,
    pub mu: StepSizeSpec,
    pub snr_db: f64,
    pub correlation: f64,
    #[serde(default)]
    pub noise_profile: Option<Vec<f64>>,
    #[serde(default)]
    pub w_o: Option<Vec<f64>>,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StepSizeSpec {
    Single(f64),
    PerNode(Vec<f64>),
}

impl NetworkSpec {
    pub fn parse(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_params(&self) -> BuildParams<f64> {
        let step_sizes = match &self.mu {
            StepSizeSpec::Single(mu) => StepSizes::Uniform(*mu),
            StepSizeSpec::PerNode(list) => StepSizes::PerNode(list.clone()),
        };
        BuildParams {
            filter_length: self.m,
            num_nodes: self.n,
            step_sizes,
            snr_db: self.snr_db,
            correlation: self.correlation,
            noise_profile: self.noise_profile.clone(),
            true_weights: self.w_o.clone(),
            jitter: true,
        }
    }

    /// Builds the network this document describes, seeding the jitter
    /// stream from the document's seed.
    pub fn build(&self) -> Result<NetworkConfig<f64>> {
        let mut stream = RandomStream::new(derive_seed(self.seed, 0));
        build_network(&self.to_params(), &mut stream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matlib::{dot, toeplitz_ar1};

    #[test]
    fn stream_reproducibility() {
        let mut a = RandomStream::new(42);
        let mut b = RandomStream::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let va: Vec<f64> = (0..100).map(|_| a.next_normal()).collect();
        let vb: Vec<f64> = (0..100).map(|_| b.next_normal()).collect();
        assert_eq!(va, vb, "normal draws must be bit-identical");
    }

    #[test]
    fn substreams_diverge() {
        let base = RandomStream::new(42);
        let mut s0 = base.substream(0);
        let mut s1 = base.substream(1);
        assert_ne!(s0.next_u64(), s1.next_u64());
    }

    #[test]
    fn normal_moments() {
        let mut stream = RandomStream::new(8);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = stream.next_normal();
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    fn white_profile(m: usize) -> NodeProfile<f64> {
        NodeProfile::new(0.1, 0.0, Matrix::identity(m)).unwrap()
    }

    #[test]
    fn regressor_sample_covariance_white() {
        // Sample-average oracle: covariance of 1e5 draws within 0.02 of I.
        let profile = white_profile(4);
        let mut stream = RandomStream::new(1234);
        let draws = 100_000;
        let mut cov = [[0.0_f64; 4]; 4];
        let mut u = [0.0_f64; 4];
        for _ in 0..draws {
            profile.sample_regressor_into(&mut stream, &mut u);
            for i in 0..4 {
                for j in 0..4 {
                    cov[i][j] += u[i] * u[j];
                }
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                let got = cov[i][j] / draws as f64;
                assert!((got - want).abs() < 0.02, "cov[{i}][{j}] = {got}");
            }
        }
    }

    #[test]
    fn regressor_sample_covariance_correlated() {
        let cov = toeplitz_ar1(2, 0.4_f64).unwrap();
        let profile = NodeProfile::new(0.1, 0.0, cov).unwrap();
        let mut stream = RandomStream::new(77);
        let draws = 100_000;
        let mut cross = 0.0;
        let mut u = [0.0_f64; 2];
        for _ in 0..draws {
            profile.sample_regressor_into(&mut stream, &mut u);
            cross += u[0] * u[1];
        }
        let got = cross / draws as f64;
        assert!((got - 0.4).abs() < 0.02, "cross covariance {got}");
    }

    #[test]
    fn regressor_reproducibility() {
        let profile = white_profile(4);
        let mut a = RandomStream::new(42);
        let mut b = RandomStream::new(42);
        for _ in 0..10 {
            assert_eq!(
                generate_regressor(&profile, &mut a),
                generate_regressor(&profile, &mut b)
            );
        }
    }

    #[test]
    fn regressor_iid_over_time() {
        // Lag-1 autocorrelation of the first tap stays below 0.02.
        let profile = white_profile(4);
        let mut stream = RandomStream::new(4242);
        let draws = 100_000;
        let mut prev = 0.0;
        let mut corr = 0.0;
        let mut u = [0.0_f64; 4];
        for i in 0..draws {
            profile.sample_regressor_into(&mut stream, &mut u);
            if i > 0 {
                corr += prev * u[0];
            }
            prev = u[0];
        }
        assert!((corr / (draws - 1) as f64).abs() < 0.02);
    }

    #[test]
    fn observation_noiseless_cases() {
        let mut stream = RandomStream::new(1);
        let profile = white_profile(4);
        let d = generate_observation(&profile, &[1.0, 0.0, 0.0, 0.0], &[3.0, 1.0, 1.0, 1.0], &mut stream);
        assert_eq!(d, 3.0, "noiseless observation is exact");
        let d = generate_observation(&profile, &[1.0, 1.0, 1.0, 1.0], &[0.0; 4], &mut stream);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn observation_noise_variance() {
        // Sample-variance oracle for d − u·w_o at σ²_v = 0.1.
        let profile = NodeProfile::new(0.1, 0.1, Matrix::identity(2)).unwrap();
        let w_o = [0.5, 0.5];
        let mut stream = RandomStream::new(99);
        let draws = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let u = generate_regressor(&profile, &mut stream);
            let d = generate_observation(&profile, &u, &w_o, &mut stream);
            let v = d - dot(&u, &w_o);
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / draws as f64;
        let var = sum_sq / draws as f64 - mean * mean;
        assert!((var - 0.1).abs() < 0.005, "noise variance {var}");
    }

    #[test]
    fn node_noise_independence() {
        // Cross-correlation of noise at two nodes stays below 0.02.
        let profile = NodeProfile::new(0.1, 1.0, Matrix::identity(1)).unwrap();
        let w_o = [0.0];
        let master = RandomStream::new(11);
        let mut s0 = master.substream(0);
        let mut s1 = master.substream(1);
        let draws = 100_000;
        let mut cross = 0.0;
        for _ in 0..draws {
            let v0 = generate_observation(&profile, &[0.0], &w_o, &mut s0);
            let v1 = generate_observation(&profile, &[0.0], &w_o, &mut s1);
            cross += v0 * v1;
        }
        assert!((cross / draws as f64).abs() < 0.02);
    }

    fn white_params(m: usize, n: usize, mu: f64, snr_db: f64) -> BuildParams<f64> {
        BuildParams::new(m, n, StepSizes::Uniform(mu), snr_db, 0.0)
    }

    #[test]
    fn build_network_white() {
        let mut stream = RandomStream::new(3);
        let net = build_network(&white_params(4, 20, 0.01, 10.0), &mut stream).unwrap();
        assert_eq!(net.num_nodes(), 20);
        assert_eq!(net.filter_length(), 4);
        for node in net.nodes() {
            assert_eq!(*node.input_covariance(), Matrix::identity(4));
        }
        // default w_o is unit norm
        let norm: f64 = net.true_weights().iter().map(|w| w * w).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn build_network_correlated() {
        let mut stream = RandomStream::new(3);
        let mut params = white_params(4, 20, 0.1, 10.0);
        params.correlation = 0.4;
        let net = build_network(&params, &mut stream).unwrap();
        let want = toeplitz_ar1(4, 0.4_f64).unwrap();
        for node in net.nodes() {
            assert_eq!(*node.input_covariance(), want);
        }
    }

    #[test]
    fn build_network_snr_mapping() {
        let mut stream = RandomStream::new(3);
        let mut params = white_params(2, 1, 0.1, 10.0);
        params.jitter = false;
        let net = build_network(&params, &mut stream).unwrap();
        assert!((net.node(0).noise_variance() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn build_network_jitter_bounds_and_determinism() {
        let params = white_params(2, 50, 0.1, 20.0);
        let mut s1 = RandomStream::new(5);
        let mut s2 = RandomStream::new(5);
        let a = build_network(&params, &mut s1).unwrap();
        let b = build_network(&params, &mut s2).unwrap();
        let base = 0.01;
        for (na, nb) in a.nodes().iter().zip(b.nodes()) {
            assert_eq!(na.noise_variance(), nb.noise_variance(), "not deterministic");
            assert!(na.noise_variance() >= base * 0.5 && na.noise_variance() <= base * 1.5);
        }
    }

    #[test]
    fn build_network_validation() {
        let mut stream = RandomStream::new(3);
        let mut params = white_params(2, 3, 0.1, 10.0);
        params.noise_profile = Some(vec![0.1, 0.1]); // wrong length
        assert!(matches!(
            build_network(&params, &mut stream),
            Err(Error::Validation(_))
        ));
        let mut params = white_params(2, 3, 0.1, 10.0);
        params.correlation = 1.0;
        assert!(matches!(
            build_network(&params, &mut stream),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn network_spec_json_roundtrip() {
        let spec = NetworkSpec::parse(
            r#"{"m":4,"n":20,"mu":0.01,"snr_db":10.0,"correlation":0.0,"seed":7}"#,
        )
        .unwrap();
        let net = spec.build().unwrap();
        assert_eq!(net.num_nodes(), 20);

        let per_node = NetworkSpec::parse(
            r#"{"m":2,"n":2,"mu":[0.1,0.2],"snr_db":10.0,"correlation":0.0,"seed":7}"#,
        )
        .unwrap();
        let net = per_node.build().unwrap();
        assert_eq!(net.node(0).step_size(), 0.1);
        assert_eq!(net.node(1).step_size(), 0.2);

        assert!(NetworkSpec::parse(
            r#"{"m":2,"n":2,"mu":0.1,"snr_db":10.0,"correlation":0.0,"seed":7,"bogus":1}"#
        )
        .is_err());
    }
}
