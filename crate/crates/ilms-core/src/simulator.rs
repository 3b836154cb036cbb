//! Monte Carlo simulation of the incremental LMS ring.
//!
//! Each iteration the running estimate makes one pass around the ring; node
//! k draws a fresh regressor/observation pair, forms the instantaneous
//! error e = d − u·w and applies w ← w + μ e uᵀ. The estimate recorded for
//! the iteration is the one leaving the last node. Curves are averaged over
//! independently seeded replicas with a fixed reduction order, so results
//! are bit-reproducible regardless of parallel scheduling.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matlib::{dot, norm_sq};
use crate::network::{derive_seed, generate_observation, NetworkConfig, RandomStream};
use crate::scalar::{power_db, Scalar};

/// Any estimate entry beyond this magnitude aborts the replica as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Replicas are dispatched to the thread pool in fixed-size batches and
/// reduced serially in replica order, which bounds memory and keeps the
/// floating-point summation order independent of scheduling.
const REPLICA_BATCH: usize = 32;

/// Estimate state carried around the ring.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState<T> {
    pub estimate: Vec<T>,
    pub iteration: usize,
}

impl<T: Scalar> FilterState<T> {
    /// Zero initial estimate, the analysis initialization.
    pub fn zeroed(filter_length: usize) -> Self {
        FilterState {
            estimate: vec![T::zero(); filter_length],
            iteration: 0,
        }
    }
}

/// Averaged learning curves from a Monte Carlo run.
///
/// `msd_per_iteration[i]` is the mean of ‖w_o − w(i)‖² across replicas and
/// `emse_per_iteration[i]` the mean weighted error energy w̃ᵀ·R_N·w̃, which
/// equals the eigenbasis-weighted norm ‖H_Nᵀw̃‖²_Λ_N of the analysis. Index
/// 0 reflects the zero initial estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult<T> {
    pub msd_per_iteration: Vec<T>,
    pub emse_per_iteration: Vec<T>,
    pub num_replicas: usize,
    pub per_node_final_msd: Option<Vec<T>>,
}

impl<T: Scalar> SimResult<T> {
    pub fn iterations(&self) -> usize {
        self.msd_per_iteration.len() - 1
    }

    /// Writes the curve as CSV: iteration, msd_linear, msd_db, emse_linear,
    /// emse_db. Numeric fields carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,msd_linear,msd_db,emse_linear,emse_db")?;
        for (i, (msd, emse)) in self
            .msd_per_iteration
            .iter()
            .zip(&self.emse_per_iteration)
            .enumerate()
        {
            writeln!(
                out,
                "{i},{},{},{},{}",
                fmt_field(*msd),
                fmt_field(power_db(*msd)),
                fmt_field(*emse),
                fmt_field(power_db(*emse)),
            )?;
        }
        Ok(())
    }
}

/// CSV numeric field: scientific notation with 17 significant digits, full
/// double precision.
pub(crate) fn fmt_field<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

/// The LMS update itself: w ← w + μ (d − u·w) uᵀ.
#[inline]
pub(crate) fn apply_lms<T: Scalar>(estimate: &mut [T], regressor: &[T], observation: T, mu: T) {
    let error = observation - dot(regressor, estimate);
    let gain = mu * error;
    for (w, &u) in estimate.iter_mut().zip(regressor.iter()) {
        *w = *w + gain * u;
    }
}

#[inline]
fn node_update<T: Scalar>(
    config: &NetworkConfig<T>,
    node: usize,
    estimate: &mut [T],
    regressor: &mut [T],
    stream: &mut RandomStream,
) {
    let profile = config.node(node);
    profile.sample_regressor_into(stream, regressor);
    let observation = generate_observation(profile, regressor, config.true_weights(), stream);
    apply_lms(estimate, regressor, observation, profile.step_size());
}

fn check_estimate<T: Scalar>(estimate: &[T], iteration: usize, replica: Option<usize>) -> Result<()> {
    let limit = T::of(DIVERGENCE_LIMIT);
    if estimate.iter().any(|w| !w.is_finite() || w.abs() > limit) {
        return Err(Error::Divergence { replica, iteration });
    }
    Ok(())
}

/// One full pass around the ring: visits nodes in order, drawing fresh data
/// at each, and returns the estimate leaving the last node. `streams` holds
/// one stream per node.
pub fn ilms_sweep<T: Scalar>(
    config: &NetworkConfig<T>,
    mut state: FilterState<T>,
    streams: &mut [RandomStream],
) -> Result<FilterState<T>> {
    if state.estimate.len() != config.filter_length() {
        return Err(Error::Validation(format!(
            "estimate length {} does not match filter length {}",
            state.estimate.len(),
            config.filter_length()
        )));
    }
    if streams.len() != config.num_nodes() {
        return Err(Error::Validation(format!(
            "{} streams supplied for {} nodes",
            streams.len(),
            config.num_nodes()
        )));
    }
    let mut regressor = vec![T::zero(); config.filter_length()];
    for k in 0..config.num_nodes() {
        node_update(config, k, &mut state.estimate, &mut regressor, &mut streams[k]);
    }
    state.iteration += 1;
    check_estimate(&state.estimate, state.iteration, None)?;
    Ok(state)
}

struct ReplicaCurves<T> {
    msd: Vec<T>,
    emse: Vec<T>,
    per_node_final: Vec<T>,
}

fn run_replica<T: Scalar>(
    config: &NetworkConfig<T>,
    iterations: usize,
    master_seed: u64,
    replica: usize,
) -> Result<ReplicaCurves<T>> {
    let m = config.filter_length();
    let n = config.num_nodes();
    let w_o = config.true_weights();
    let replica_seed = derive_seed(master_seed, 1 + replica as u64);
    let mut streams: Vec<RandomStream> = (0..n)
        .map(|k| RandomStream::new(derive_seed(replica_seed, k as u64)))
        .collect();

    let last_cov = config.node(n - 1).input_covariance();
    let mut estimate = vec![T::zero(); m];
    let mut regressor = vec![T::zero(); m];
    let mut deviation = vec![T::zero(); m];
    let mut msd = Vec::with_capacity(iterations + 1);
    let mut emse = Vec::with_capacity(iterations + 1);
    let mut per_node_final = vec![T::zero(); n];

    msd.push(norm_sq(w_o));
    emse.push(last_cov.quad_form(w_o));

    for i in 1..=iterations {
        for k in 0..n {
            node_update(config, k, &mut estimate, &mut regressor, &mut streams[k]);
            if i == iterations {
                for (d, (&wo, &w)) in deviation.iter_mut().zip(w_o.iter().zip(&estimate)) {
                    *d = wo - w;
                }
                per_node_final[k] = norm_sq(&deviation);
            }
        }
        check_estimate(&estimate, i, Some(replica))?;
        for (d, (&wo, &w)) in deviation.iter_mut().zip(w_o.iter().zip(&estimate)) {
            *d = wo - w;
        }
        msd.push(norm_sq(&deviation));
        emse.push(last_cov.quad_form(&deviation));
    }
    Ok(ReplicaCurves { msd, emse, per_node_final })
}

/// Runs `replicas` independent simulations and averages the learning
/// curves. Replica r is seeded from (master_seed, r), so the result depends
/// only on the arguments; replicas execute in parallel but are reduced in
/// replica order.
pub fn monte_carlo<T: Scalar>(
    config: &NetworkConfig<T>,
    iterations: usize,
    replicas: usize,
    master_seed: u64,
) -> Result<SimResult<T>> {
    if iterations == 0 || replicas == 0 {
        return Err(Error::Validation(
            "iterations and replicas must be >= 1".to_string(),
        ));
    }
    let n = config.num_nodes();
    let mut msd_sum = vec![T::zero(); iterations + 1];
    let mut emse_sum = vec![T::zero(); iterations + 1];
    let mut per_node_sum = vec![T::zero(); n];

    let indices: Vec<usize> = (0..replicas).collect();
    for batch in indices.chunks(REPLICA_BATCH) {
        let results: Vec<Result<ReplicaCurves<T>>> = batch
            .par_iter()
            .map(|&r| run_replica(config, iterations, master_seed, r))
            .collect();
        for result in results {
            let curves = result?;
            for (acc, x) in msd_sum.iter_mut().zip(&curves.msd) {
                *acc = *acc + *x;
            }
            for (acc, x) in emse_sum.iter_mut().zip(&curves.emse) {
                *acc = *acc + *x;
            }
            for (acc, x) in per_node_sum.iter_mut().zip(&curves.per_node_final) {
                *acc = *acc + *x;
            }
        }
    }

    let scale = T::one() / T::of(replicas as f64);
    let mut msd: Vec<T> = msd_sum.into_iter().map(|x| x * scale).collect();
    let mut emse: Vec<T> = emse_sum.into_iter().map(|x| x * scale).collect();
    // Every replica starts from the same zero estimate; record the exact
    // initial values rather than the averaged copies.
    msd[0] = norm_sq(config.true_weights());
    emse[0] = config
        .node(n - 1)
        .input_covariance()
        .quad_form(config.true_weights());
    let per_node = per_node_sum.into_iter().map(|x| x * scale).collect();

    Ok(SimResult {
        msd_per_iteration: msd,
        emse_per_iteration: emse,
        num_replicas: replicas,
        per_node_final_msd: Some(per_node),
    })
}

/// Mean of the final tenth of a curve, the plateau estimator used when
/// comparing a noisy simulated curve against a steady-state value.
pub fn plateau<T: Scalar>(values: &[T]) -> T {
    let tail = (values.len() / 10).max(1);
    let slice = &values[values.len() - tail..];
    slice.iter().copied().sum::<T>() / T::of(tail as f64)
}
