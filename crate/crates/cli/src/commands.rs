//! Pipeline commands behind the CLI subcommands.

use std::path::Path;
use std::time::Instant;

use dcbc_core::data::{assemble_m, check_richness, collect_trajectory, DataMatrices, Excitation, TrajectoryData};
use dcbc_core::error::{Error, Result};
use dcbc_core::model::AugmentedModel;
use dcbc_core::scenario::{run_scenario_pipeline, ScenarioOptions, ScenarioRoute};
use dcbc_core::synth::run_pipeline;
use dcbc_core::verify::{
    default_decrement_mode, rollout_traces, traces_to_csv, verify_certificate, DecrementMode,
};

use crate::config::{RunConfig, ScenarioPath};
use crate::report::{CertificateFile, Timing, VerificationFile};

/// Collects a trajectory, retrying with doubled length (up to three times)
/// when the data is not rich enough.
pub fn collect_rich(
    config: &RunConfig,
    aug: &AugmentedModel,
) -> Result<(TrajectoryData, DataMatrices)> {
    let n_terms = aug.aug_dictionary.len();
    let excitation = match &config.experiment.excitation_box {
        Some(b) => Excitation::UniformBox(b.to_region()?),
        None => dcbc_core::data::default_excitation(aug)?,
    };
    let mut samples = config.experiment_samples(n_terms);
    let mut last_rank = 0;
    let mut last_samples = samples;
    for _ in 0..=3 {
        let traj = collect_trajectory(aug, samples, &excitation, config.experiment.seed, None)?;
        let dm = assemble_m(&traj, &aug.aug_dictionary)?;
        if check_richness(&dm, traj.samples) {
            return Ok((traj, dm));
        }
        last_rank = dm.rank;
        last_samples = traj.samples;
        samples *= 2;
    }
    Err(Error::Richness {
        rank: last_rank,
        n_terms,
        samples: last_samples,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

/// `synthesize`: the end-to-end certificate pipeline. Writes
/// `certificate.json` and `trajectory.csv` into the output directory.
pub fn cmd_synthesize(config: &RunConfig, out_dir: &Path) -> Result<CertificateFile> {
    let start = Instant::now();
    let aug = config.build_augmented()?;
    let (traj, dm) = collect_rich(config, &aug)?;
    let out = run_pipeline(&aug, &traj, &dm, &config.synth_options())?;
    let file = CertificateFile::from_synthesis(
        &out,
        aug.n(),
        aug.m(),
        aug.aug_dictionary.len(),
        config.synthesis.level_mode,
        config.experiment.seed,
        traj.samples,
        start.elapsed().as_secs_f64() * 1e3,
    );
    write(&out_dir.join("certificate.json"), &file.to_json())?;
    write(&out_dir.join("trajectory.csv"), &traj.to_csv())?;
    Ok(file)
}

/// `scenario`: the alternative computation (deterministic grid route or
/// probabilistic i.i.d. route). Writes the same artifact pair.
pub fn cmd_scenario(config: &RunConfig, out_dir: &Path) -> Result<CertificateFile> {
    let start = Instant::now();
    let aug = config.build_augmented()?;
    let (traj, dm) = collect_rich(config, &aug)?;
    let route = match config.scenario.path {
        ScenarioPath::None => {
            return Err(Error::Config(
                "scenario.path must be \"deterministic\" or \"probabilistic\" for the scenario command".into(),
            ))
        }
        ScenarioPath::Deterministic => ScenarioRoute::Deterministic {
            grid: config.scenario_grid(aug.dim()),
        },
        ScenarioPath::Probabilistic => ScenarioRoute::Probabilistic {
            epsilon: config.scenario.epsilon,
            beta: config.scenario.beta,
            seed: config.scenario.seed,
        },
    };
    let opts = ScenarioOptions {
        varpi: config.synthesis.varpi,
        route,
        kappa_floor_frac: config.scenario.kappa_floor_frac,
        rho_ladder: config.scenario.rho_ladder.clone(),
    };
    let out = run_scenario_pipeline(&aug, &traj, &dm, &opts)?;
    let file = CertificateFile::from_scenario(
        &out,
        aug.n(),
        aug.m(),
        aug.aug_dictionary.len(),
        config.experiment.seed,
        traj.samples,
        start.elapsed().as_secs_f64() * 1e3,
    );
    write(&out_dir.join("certificate.json"), &file.to_json())?;
    write(&out_dir.join("trajectory.csv"), &traj.to_csv())?;
    Ok(file)
}

/// `verify`: the model-based posterior checks against a certificate file.
/// Writes `verification.json`, `rollouts.csv`, and (in grid mode)
/// `heatmap.csv`. Returns the file and whether all checks passed.
pub fn cmd_verify(
    config: &RunConfig,
    certificate_path: &Path,
    out_dir: &Path,
) -> Result<(VerificationFile, bool)> {
    let start = Instant::now();
    let aug = config.build_augmented()?;
    let cert_file = CertificateFile::load(certificate_path)?;
    let cert = cert_file.certificate()?;
    let controller = cert_file.controller()?;

    let mode = default_decrement_mode(
        aug.dim(),
        config.verification.grid_res,
        config.verification.seed,
    );
    let steps = match cert.horizon {
        dcbc_core::synth::Horizon::Finite(t) => t,
        dcbc_core::synth::Horizon::Infinite => 1000,
    };
    let (report, decrement) = verify_certificate(
        &aug,
        &cert,
        &controller,
        &mode,
        config.verification.n_samples,
        config.verification.n_runs,
        steps,
        config.verification.seed,
    )?;
    if matches!(mode, DecrementMode::Grid { .. }) {
        write(&out_dir.join("heatmap.csv"), &decrement.to_csv())?;
    }
    let traces = rollout_traces(
        &aug.plant,
        &controller,
        &aug.initial_input_box()?,
        steps,
        config.verification.n_runs,
        config.verification.seed,
    );
    write(
        &out_dir.join("rollouts.csv"),
        &traces_to_csv(&traces, aug.n(), aug.m()),
    )?;
    let passed = report.passed;
    let file = VerificationFile {
        format_version: 1,
        report,
        certificate_kind: cert_file.kind.clone(),
        seed: config.verification.seed,
        timing_ms: Timing {
            total_ms: start.elapsed().as_secs_f64() * 1e3,
        },
    };
    write(&out_dir.join("verification.json"), &file.to_json())?;
    Ok((file, passed))
}

/// `simulate`: closed-loop rollout export without checks.
pub fn cmd_simulate(
    config: &RunConfig,
    certificate_path: &Path,
    out_dir: &Path,
    steps: u64,
    runs: u64,
) -> Result<()> {
    let aug = config.build_augmented()?;
    let cert_file = CertificateFile::load(certificate_path)?;
    let controller = cert_file.controller()?;
    let traces = rollout_traces(
        &aug.plant,
        &controller,
        &aug.initial_input_box()?,
        steps,
        runs,
        config.verification.seed,
    );
    write(
        &out_dir.join("simulation.csv"),
        &traces_to_csv(&traces, aug.n(), aug.m()),
    )?;
    Ok(())
}
