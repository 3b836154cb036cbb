//! Experiment runner: builds a network, runs the Monte Carlo simulator and
//! the theory engine on identical parameters, and reports the aligned
//! curves, their deltas, and the steady-state comparison. Also provides the
//! standard 12-scenario suite over white/correlated inputs, three SNR
//! levels and two step sizes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{
    build_network, derive_seed, snr_noise_variance, BuildParams, RandomStream, StepSizes,
};
use crate::scalar::power_db;
use crate::simulator::{fmt_field, monte_carlo, plateau};
use crate::theory::{
    build_chain, spectral_radius, steady_state, transient_curve, SpectralData, TheoryChain,
    TransientRecursion, RADIUS_MAX_ITERS,
};

/// Relative tolerance for the theory-curve plateau stop rule.
const PLATEAU_REL_TOL: f64 = 1e-10;

/// Iteration cap for plateau detection when the configured budget is small.
const PLATEAU_MIN_CAP: usize = 200_000;

/// One complete experiment: a labeled network parameterization plus the
/// simulation budget.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub label: String,
    pub network: BuildParams<f64>,
    pub seed: u64,
    pub iterations: usize,
    pub replicas: usize,
}

/// Theory-vs-simulation comparison for one experiment.
///
/// Curves are per-iteration MSD in dB, aligned by iteration; the steady
/// block holds the simulated plateau (mean of the final tenth), the plateau
/// of the closed-form transient recursion, and the steady-state solve. The
/// latter is absent for the degenerate all-zero-step-size run, whose curves
/// are constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub label: String,
    pub stable: bool,
    pub degenerate: bool,
    pub spectral_radius: f64,
    pub iterations: usize,
    pub replicas: usize,
    pub sim_msd_db: Vec<f64>,
    pub theory_msd_db: Vec<f64>,
    pub sim_plateau_db: f64,
    pub transient_plateau_db: f64,
    pub steady_state_db: Option<f64>,
    pub max_transient_delta_db: f64,
}

/// Serialized summary block of a [`ComparisonReport`].
#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub label: String,
    pub stable: bool,
    pub degenerate: bool,
    pub spectral_radius: f64,
    pub iterations: usize,
    pub replicas: usize,
    pub sim_plateau_db: f64,
    #[serde(rename = "eq19_plateau_db")]
    pub transient_plateau_db: f64,
    #[serde(rename = "eq22_db")]
    pub steady_state_db: Option<f64>,
    pub max_transient_delta_db: f64,
}

impl ComparisonReport {
    pub fn delta_db(&self, iteration: usize) -> f64 {
        self.sim_msd_db[iteration] - self.theory_msd_db[iteration]
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            label: self.label.clone(),
            stable: self.stable,
            degenerate: self.degenerate,
            spectral_radius: self.spectral_radius,
            iterations: self.iterations,
            replicas: self.replicas,
            sim_plateau_db: self.sim_plateau_db,
            transient_plateau_db: self.transient_plateau_db,
            steady_state_db: self.steady_state_db,
            max_transient_delta_db: self.max_transient_delta_db,
        }
    }

    /// Writes the aligned curves as CSV: iteration, sim_msd_db,
    /// theory_msd_db, delta_db.
    pub fn write_curves_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,sim_msd_db,theory_msd_db,delta_db")?;
        for i in 0..self.sim_msd_db.len() {
            writeln!(
                out,
                "{i},{},{},{}",
                fmt_field(self.sim_msd_db[i]),
                fmt_field(self.theory_msd_db[i]),
                fmt_field(self.delta_db(i)),
            )?;
        }
        Ok(())
    }

    /// Writes curves.csv and summary.json into `base/<label>/`.
    pub fn write_into(&self, base: &Path) -> Result<()> {
        let dir = base.join(&self.label);
        fs::create_dir_all(&dir)?;
        let mut csv = fs::File::create(dir.join("curves.csv"))?;
        self.write_curves_csv(&mut csv)?;
        let json = serde_json::to_string_pretty(&self.summary())?;
        fs::write(dir.join("summary.json"), json + "\n")?;
        Ok(())
    }
}

fn is_degenerate(params: &BuildParams<f64>) -> bool {
    match &params.step_sizes {
        StepSizes::Uniform(mu) => *mu == 0.0,
        StepSizes::PerNode(list) => list.iter().all(|&mu| mu == 0.0),
    }
}

/// Builds the network, runs simulation and theory with identical
/// parameters, and assembles the comparison. Instability and divergence are
/// reported with the experiment label attached.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ComparisonReport> {
    run_experiment_inner(spec).map_err(|e| match e {
        already @ Error::Labeled { .. } => already,
        other => Error::labeled(&spec.label, other),
    })
}

fn run_experiment_inner(spec: &ExperimentSpec) -> Result<ComparisonReport> {
    if spec.iterations == 0 || spec.replicas == 0 {
        return Err(Error::Validation(
            "iterations and replicas must be >= 1".to_string(),
        ));
    }
    let mut stream = RandomStream::new(derive_seed(spec.seed, 0));
    let config = build_network(&spec.network, &mut stream)?;
    let degenerate = is_degenerate(&spec.network);

    let spectral = SpectralData::from_network(&config)?;
    let chain = build_chain(&config, &spectral)?;
    let rho = if degenerate {
        1.0
    } else {
        spectral_radius(&chain.sweep_matrix, 1e-10, RADIUS_MAX_ITERS)?
    };
    let stable = rho < 1.0;
    if !stable && !degenerate {
        return Err(Error::Instability { spectral_radius: rho });
    }

    let weighting = chain.msd_weighting();
    let theory = transient_curve(&chain, config.true_weights(), &weighting, spec.iterations)?;
    let sim = monte_carlo(&config, spec.iterations, spec.replicas, spec.seed)?;

    let sim_msd_db: Vec<f64> = sim.msd_per_iteration.iter().map(|&x| power_db(x)).collect();
    let theory_msd_db = theory.to_db();
    let max_transient_delta_db = sim_msd_db
        .iter()
        .zip(&theory_msd_db)
        .map(|(s, t)| (s - t).abs())
        .fold(0.0_f64, f64::max);

    let sim_plateau_db = power_db(plateau(&sim.msd_per_iteration));
    let mut recursion = TransientRecursion::new(&chain, config.true_weights(), &weighting)?;
    let cap = spec.iterations.max(PLATEAU_MIN_CAP);
    let (transient_plateau, _) = recursion.run_to_plateau(PLATEAU_REL_TOL, cap);
    let steady_state_db = if degenerate {
        None
    } else {
        Some(power_db(steady_state(&chain, &weighting)?))
    };

    Ok(ComparisonReport {
        label: spec.label.clone(),
        stable,
        degenerate,
        spectral_radius: rho,
        iterations: spec.iterations,
        replicas: spec.replicas,
        sim_msd_db,
        theory_msd_db,
        sim_plateau_db,
        transient_plateau_db: power_db(transient_plateau),
        steady_state_db,
        max_transient_delta_db,
    })
}

/// One row of the 12-scenario suite.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub data_type: &'static str,
    pub snr_db: f64,
    pub step_size: f64,
    pub stable: bool,
    pub sim_db: Option<f64>,
    /// Plateau reached by the closed-form transient recursion.
    pub transient_plateau_db: Option<f64>,
    /// Steady state from the fixed-point solve.
    pub steady_state_db: Option<f64>,
}

/// The full suite: white and correlated input × SNR {10, 20, 30} dB × step
/// size {5e-3, 5e-2}, N=20 nodes, M=4 taps, flat noise profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1Summary {
    pub rows: Vec<Table1Row>,
}

impl Table1Summary {
    /// CSV columns: data_type, snr_db, step_size, sim_db, eq19_db, eq22_db.
    /// Missing values (no simulation requested, or an unstable row) are
    /// empty cells.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "data_type,snr_db,step_size,sim_db,eq19_db,eq22_db")?;
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.data_type,
                fmt_field(row.snr_db),
                fmt_field(row.step_size),
                opt_field(row.sim_db),
                opt_field(row.transient_plateau_db),
                opt_field(row.steady_state_db),
            )?;
        }
        Ok(())
    }
}

fn opt_field(x: Option<f64>) -> String {
    x.map(fmt_field).unwrap_or_default()
}

fn scenario_params(correlation: f64, snr_db: f64, mu: f64) -> BuildParams<f64> {
    let n = 20;
    let mut params = BuildParams::new(4, n, StepSizes::Uniform(mu), snr_db, correlation);
    params.noise_profile = Some(vec![snr_noise_variance(snr_db); n]);
    params.jitter = false;
    params
}

/// Iteration budget per scenario: slow steps need a longer run to plateau.
pub fn scenario_iterations(mu: f64) -> usize {
    if mu >= 0.01 {
        5_000
    } else {
        50_000
    }
}

/// Runs the 12-scenario suite. With `replicas` = 0 the simulation column is
/// skipped (theory only); otherwise each row's Monte Carlo run is seeded
/// from (seed, row index). Verifies per stable row that the transient
/// plateau and the steady-state solve agree within 1e-6 dB.
pub fn table1_suite(seed: u64, replicas: usize) -> Result<Table1Summary> {
    let mut rows = Vec::with_capacity(12);
    let mut row_index = 0u64;
    for (correlation, data_type) in [(0.0, "white"), (0.4, "correlated")] {
        for snr_db in [10.0, 20.0, 30.0] {
            for mu in [5e-3, 5e-2] {
                let params = scenario_params(correlation, snr_db, mu);
                let iterations = scenario_iterations(mu);
                let mut stream = RandomStream::new(derive_seed(seed, row_index));
                let config = build_network(&params, &mut stream)?;
                let spectral = SpectralData::from_network(&config)?;
                let chain = build_chain(&config, &spectral)?;
                let rho = spectral_radius(&chain.sweep_matrix, 1e-10, RADIUS_MAX_ITERS)?;
                if rho >= 1.0 {
                    rows.push(Table1Row {
                        data_type,
                        snr_db,
                        step_size: mu,
                        stable: false,
                        sim_db: None,
                        transient_plateau_db: None,
                        steady_state_db: None,
                    });
                    row_index += 1;
                    continue;
                }

                let weighting = chain.msd_weighting();
                let mut recursion =
                    TransientRecursion::new(&chain, config.true_weights(), &weighting)?;
                let (plateau_value, _) =
                    recursion.run_to_plateau(PLATEAU_REL_TOL, iterations.max(PLATEAU_MIN_CAP));
                let transient_db = power_db(plateau_value);
                let steady_db = power_db(steady_state(&chain, &weighting)?);
                if (transient_db - steady_db).abs() > 1e-6 {
                    return Err(Error::Validation(format!(
                        "transient plateau {transient_db} dB and steady state {steady_db} dB \
                         disagree beyond 1e-6 dB on {data_type} snr={snr_db} mu={mu}"
                    )));
                }

                let sim_db = if replicas > 0 {
                    let sim =
                        monte_carlo(&config, iterations, replicas, derive_seed(seed, row_index))?;
                    Some(power_db(plateau(&sim.msd_per_iteration)))
                } else {
                    None
                };

                rows.push(Table1Row {
                    data_type,
                    snr_db,
                    step_size: mu,
                    stable: true,
                    sim_db,
                    transient_plateau_db: Some(transient_db),
                    steady_state_db: Some(steady_db),
                });
                row_index += 1;
            }
        }
    }
    Ok(Table1Summary { rows })
}

/// Convenience: theory-engine curve pair (MSD and EMSE) for a network that
/// is already built, as used by the CLI theory command.
pub fn theory_curves(
    chain: &TheoryChain<f64>,
    true_weights: &[f64],
    iterations: usize,
) -> Result<(crate::theory::LearningCurve<f64>, crate::theory::LearningCurve<f64>)> {
    let msd = transient_curve(chain, true_weights, &chain.msd_weighting(), iterations)?;
    let emse = transient_curve(chain, true_weights, &chain.emse_weighting(), iterations)?;
    Ok((msd, emse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matlib::norm_sq;

    fn small_spec(mu: f64) -> ExperimentSpec {
        let mut network = BuildParams::new(3, 4, StepSizes::Uniform(mu), 10.0, 0.0);
        network.jitter = false;
        ExperimentSpec {
            label: "small".to_string(),
            network,
            seed: 42,
            iterations: 400,
            replicas: 20,
        }
    }

    #[test]
    fn report_is_deterministic() {
        let spec = small_spec(0.05);
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a, b, "identical spec must give a bit-identical report");
    }

    #[test]
    fn stable_report_consistency() {
        let report = run_experiment(&small_spec(0.05)).unwrap();
        assert!(report.stable);
        assert!(!report.degenerate);
        let eq19 = report.transient_plateau_db;
        let eq22 = report.steady_state_db.unwrap();
        assert!(
            (eq19 - eq22).abs() < 1e-6,
            "plateau {eq19} dB vs steady {eq22} dB"
        );
        assert!(report.max_transient_delta_db.is_finite());
        assert_eq!(report.sim_msd_db.len(), 401);
        assert_eq!(report.theory_msd_db.len(), 401);
        // iteration 0 matches exactly: both sides start at ‖w_o‖²
        assert!((report.delta_db(0)).abs() < 1e-9);
    }

    #[test]
    fn degenerate_run_flagged_with_constant_curves() {
        let report = run_experiment(&small_spec(0.0)).unwrap();
        assert!(report.degenerate);
        assert!(!report.stable);
        assert!(report.steady_state_db.is_none());
        let want = power_db(norm_sq(&[1.0 / 3.0_f64.sqrt(); 3]));
        for (s, t) in report.sim_msd_db.iter().zip(&report.theory_msd_db) {
            assert!((s - want).abs() < 1e-9, "sim curve moved: {s}");
            assert!((t - want).abs() < 1e-9, "theory curve moved: {t}");
        }
    }

    #[test]
    fn unstable_experiment_carries_label() {
        let mut spec = small_spec(2.5);
        spec.label = "way-too-fast".to_string();
        match run_experiment(&spec) {
            Err(Error::Labeled { label, source }) => {
                assert_eq!(label, "way-too-fast");
                assert!(matches!(*source, Error::Instability { .. }));
            }
            other => panic!("expected labeled instability, got {other:?}"),
        }
    }

    #[test]
    fn suite_trends_and_consistency() {
        let summary = table1_suite(7, 0).unwrap();
        assert_eq!(summary.rows.len(), 12);
        for row in &summary.rows {
            assert!(row.stable);
            assert!(row.sim_db.is_none());
            let eq19 = row.transient_plateau_db.unwrap();
            let eq22 = row.steady_state_db.unwrap();
            assert!((eq19 - eq22).abs() <= 1e-6, "row disagrees: {row:?}");
        }
        // MSD falls as noise falls (higher SNR) at fixed step size, and
        // rises with the step size at fixed noise.
        for chunk in summary.rows.chunks(6) {
            for pair in chunk.chunks(2) {
                let slow = pair[0].steady_state_db.unwrap();
                let fast = pair[1].steady_state_db.unwrap();
                assert!(fast > slow, "larger step size must raise the MSD");
            }
            let at_slow: Vec<f64> = chunk
                .iter()
                .filter(|r| r.step_size < 0.01)
                .map(|r| r.steady_state_db.unwrap())
                .collect();
            assert!(
                at_slow.windows(2).all(|w| w[1] < w[0]),
                "MSD must fall strictly as SNR rises: {at_slow:?}"
            );
        }
    }

    #[test]
    fn suite_csv_shape() {
        let summary = table1_suite(3, 0).unwrap();
        let mut buf = Vec::new();
        summary.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 13);
        assert_eq!(lines[0], "data_type,snr_db,step_size,sim_db,eq19_db,eq22_db");
        assert!(lines[1].starts_with("white,"));
        assert!(lines[7].starts_with("correlated,"));
        // sim column empty for a theory-only run
        assert!(lines[1].contains(",,"));
    }

    #[test]
    fn report_files_written_under_label() {
        let dir = std::env::temp_dir().join(format!("ilms-report-test-{}", std::process::id()));
        let report = run_experiment(&small_spec(0.05)).unwrap();
        report.write_into(&dir).unwrap();
        assert!(dir.join("small").join("curves.csv").exists());
        assert!(dir.join("small").join("summary.json").exists());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
