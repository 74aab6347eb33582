//! Model-based posterior verification of a synthesized certificate and
//! controller: decrement-condition check over the state set, level checks,
//! and Monte Carlo safety rollouts against the true dynamics.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{contains, sample_union, AugmentedModel, BoxRegion, PlantModel};
use crate::synth::{grid_points, Certificate, DynamicController};

/// How the decrement condition is evaluated over the state set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecrementMode {
    /// Full uniform grid with the per-axis count.
    Grid { per_axis: usize },
    /// Seeded uniform samples (high-dimensional state sets).
    Sampled { n_samples: u64, seed: u64 },
}

/// Chooses the evaluation mode the way the verifier defaults do: a full
/// grid up to 3 augmented dimensions, seeded sampling above.
pub fn default_decrement_mode(aug_dim: usize, grid_res: usize, seed: u64) -> DecrementMode {
    if aug_dim <= 3 {
        DecrementMode::Grid { per_axis: grid_res }
    } else {
        DecrementMode::Sampled {
            n_samples: 1_000_000,
            seed,
        }
    }
}

/// Result of the decrement-condition evaluation.
#[derive(Debug, Clone)]
pub struct DecrementResult {
    pub max_value: f64,
    pub argmax: Vec<f64>,
    pub mode: DecrementMode,
    pub points_evaluated: u64,
    /// Dense table `(zeta..., value)` in grid mode; empty in sampled mode.
    pub table: Vec<(Vec<f64>, f64)>,
}

impl DecrementResult {
    /// Heatmap CSV: zeta coordinates and the decrement value per row. A
    /// pure function of the table, so identical inputs produce identical
    /// bytes.
    pub fn to_csv(&self) -> String {
        let dim = self.argmax.len();
        let mut out = String::new();
        for i in 1..=dim {
            out.push_str(&format!("zeta{i},"));
        }
        out.push_str("value\n");
        for (zeta, value) in &self.table {
            for v in zeta {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{value}\n"));
        }
        out
    }
}

/// Evaluates `B(A F(zeta) + B theta) - B(zeta) - c_a` with
/// `theta = K F(zeta)` over the augmented state set and returns the
/// maximum (negative everywhere means the decrement condition holds).
pub fn check_decrement(
    aug: &AugmentedModel,
    cert: &Certificate,
    controller: &DynamicController,
    mode: &DecrementMode,
) -> Result<DecrementResult> {
    let value_at = |zeta: &[f64]| -> Result<f64> {
        let theta = controller.virtual_input(&aug.aug_dictionary, zeta)?;
        let next = aug.step(zeta, &theta)?;
        Ok(cert.barrier(&next) - cert.barrier(zeta) - cert.c_a)
    };
    match mode {
        DecrementMode::Grid { per_axis } => {
            let counts = vec![(*per_axis).max(2); aug.dim()];
            let points = grid_points(&aug.state_box, &counts);
            let values = points
                .par_iter()
                .map(|z| value_at(z))
                .collect::<Result<Vec<_>>>()?;
            let mut max_value = f64::NEG_INFINITY;
            let mut argmax = aug.state_box.center();
            for (z, v) in points.iter().zip(&values) {
                if *v > max_value {
                    max_value = *v;
                    argmax = z.clone();
                }
            }
            let n = points.len() as u64;
            let table = points.into_iter().zip(values).collect();
            Ok(DecrementResult {
                max_value,
                argmax,
                mode: mode.clone(),
                points_evaluated: n,
                table,
            })
        }
        DecrementMode::Sampled { n_samples, seed } => {
            let evaluated = (0..*n_samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = ChaCha12Rng::seed_from_u64(*seed);
                    rng.set_stream(i);
                    let z = aug.state_box.sample_uniform(&mut rng);
                    let v = value_at(&z)?;
                    Ok((v, z))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut max_value = f64::NEG_INFINITY;
            let mut argmax = aug.state_box.center();
            for (v, z) in evaluated {
                if v > max_value {
                    max_value = v;
                    argmax = z;
                }
            }
            Ok(DecrementResult {
                max_value,
                argmax,
                mode: mode.clone(),
                points_evaluated: *n_samples,
                table: Vec::new(),
            })
        }
    }
}

/// Sampled check of the level-set conditions: the barrier stays at or below
/// `eta_a` on the initial set and at or above `gamma_a` on the unsafe set
/// (1e-9 slack).
pub fn check_levels(
    cert: &Certificate,
    initial_boxes: &[BoxRegion],
    unsafe_boxes: &[BoxRegion],
    n_samples: u64,
    seed: u64,
) -> Result<LevelCheck> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut max_initial = f64::NEG_INFINITY;
    for _ in 0..n_samples {
        let z = sample_union(initial_boxes, &mut rng);
        max_initial = max_initial.max(cert.barrier(&z));
    }
    let mut min_unsafe = f64::INFINITY;
    for _ in 0..n_samples {
        let z = sample_union(unsafe_boxes, &mut rng);
        min_unsafe = min_unsafe.min(cert.barrier(&z));
    }
    Ok(LevelCheck {
        max_initial,
        min_unsafe,
        initial_ok: max_initial <= cert.eta_a + 1e-9,
        unsafe_ok: min_unsafe >= cert.gamma_a - 1e-9,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelCheck {
    pub max_initial: f64,
    pub min_unsafe: f64,
    pub initial_ok: bool,
    pub unsafe_ok: bool,
}

impl LevelCheck {
    pub fn passed(&self) -> bool {
        self.initial_ok && self.unsafe_ok
    }
}

/// One closed-loop run of the true plant under the dynamic controller.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// States x(0..T-1), one row per step.
    pub states: Vec<Vec<f64>>,
    /// Inputs u(0..T-1).
    pub inputs: Vec<Vec<f64>>,
    pub state_violation_at: Option<usize>,
    pub input_violation_at: Option<usize>,
}

/// Aggregate rollout statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStats {
    pub runs: u64,
    pub steps: u64,
    pub runs_with_state_violation: u64,
    pub runs_with_input_violation: u64,
    pub domain_errors: u64,
    pub seed: u64,
}

impl RolloutStats {
    pub fn passed(&self) -> bool {
        self.runs_with_state_violation == 0
            && self.runs_with_input_violation == 0
            && self.domain_errors == 0
    }
}

/// Simulates `x+ = A f(x, u)`, `u+ = K f(x, u)` for `steps` steps per run,
/// states drawn uniformly from the plant initial set and inputs from
/// `init_u_box` (the input slice of the augmented initial set).
/// Deterministic per seed; runs use independent seeded substreams.
pub fn rollout_traces(
    plant: &PlantModel,
    controller: &DynamicController,
    init_u_box: &BoxRegion,
    steps: u64,
    n_runs: u64,
    seed: u64,
) -> Vec<std::result::Result<RunTrace, Error>> {
    (0..n_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(run);
            let mut x = sample_union(&plant.regions.initial_boxes, &mut rng);
            let mut u = init_u_box.sample_uniform(&mut rng);
            let mut trace = RunTrace {
                states: Vec::with_capacity(steps as usize),
                inputs: Vec::with_capacity(steps as usize),
                state_violation_at: None,
                input_violation_at: None,
            };
            for k in 0..steps {
                if trace.state_violation_at.is_none()
                    && contains(&plant.regions.unsafe_boxes, &x)?
                {
                    trace.state_violation_at = Some(k as usize);
                }
                if trace.input_violation_at.is_none() && !plant.inputs.admits(&u)? {
                    trace.input_violation_at = Some(k as usize);
                }
                trace.states.push(x.clone());
                trace.inputs.push(u.clone());
                if k + 1 < steps {
                    let next_x = plant.step(&x, &u).map_err(|e| Error::Rollout {
                        step: k as usize,
                        source: Box::new(e),
                    })?;
                    let next_u =
                        controller
                            .next_input(&plant.dictionary, &x, &u)
                            .map_err(|e| Error::Rollout {
                                step: k as usize,
                                source: Box::new(e),
                            })?;
                    x = next_x;
                    u = next_u;
                }
            }
            Ok(trace)
        })
        .collect()
}

/// Rollout statistics over the guaranteed window `k = 0..steps-1`.
pub fn rollout(
    plant: &PlantModel,
    controller: &DynamicController,
    init_u_box: &BoxRegion,
    steps: u64,
    n_runs: u64,
    seed: u64,
) -> RolloutStats {
    let traces = rollout_traces(plant, controller, init_u_box, steps, n_runs, seed);
    let mut stats = RolloutStats {
        runs: n_runs,
        steps,
        runs_with_state_violation: 0,
        runs_with_input_violation: 0,
        domain_errors: 0,
        seed,
    };
    for t in traces {
        match t {
            Ok(trace) => {
                if trace.state_violation_at.is_some() {
                    stats.runs_with_state_violation += 1;
                }
                if trace.input_violation_at.is_some() {
                    stats.runs_with_input_violation += 1;
                }
            }
            Err(_) => stats.domain_errors += 1,
        }
    }
    stats
}

/// Per-run CSV export: `run, k, x..., u...` rows.
pub fn traces_to_csv(traces: &[std::result::Result<RunTrace, Error>], n: usize, m: usize) -> String {
    let mut out = String::from("run,k");
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    for i in 1..=m {
        out.push_str(&format!(",u{i}"));
    }
    out.push('\n');
    for (run, trace) in traces.iter().enumerate() {
        let Ok(trace) = trace else { continue };
        for (k, (x, u)) in trace.states.iter().zip(&trace.inputs).enumerate() {
            out.push_str(&format!("{run},{k}"));
            for v in x {
                out.push_str(&format!(",{v}"));
            }
            for v in u {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    out
}

/// Full verification report: decrement, levels, rollouts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub decrement_max: f64,
    pub decrement_mode: DecrementMode,
    pub decrement_points: u64,
    pub levels: LevelCheck,
    pub rollouts: RolloutStats,
    pub passed: bool,
}

/// Runs all three checks; passing requires a non-positive decrement
/// maximum (1e-6 slack), both level conditions, and violation-free
/// rollouts.
#[allow(clippy::too_many_arguments)]
pub fn verify_certificate(
    aug: &AugmentedModel,
    cert: &Certificate,
    controller: &DynamicController,
    mode: &DecrementMode,
    level_samples: u64,
    rollout_runs: u64,
    rollout_steps: u64,
    seed: u64,
) -> Result<(VerificationReport, DecrementResult)> {
    let decrement = check_decrement(aug, cert, controller, mode)?;
    let levels = check_levels(
        cert,
        &aug.initial_boxes,
        &aug.unsafe_boxes,
        level_samples,
        seed,
    )?;
    let stats = rollout(
        &aug.plant,
        controller,
        &aug.initial_input_box()?,
        rollout_steps,
        rollout_runs,
        seed,
    );
    let passed = decrement.max_value <= 1e-6 && levels.passed() && stats.passed();
    Ok((
        VerificationReport {
            decrement_max: decrement.max_value,
            decrement_mode: decrement.mode.clone(),
            decrement_points: decrement.points_evaluated,
            levels,
            rollouts: stats,
            passed,
        },
        decrement,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use crate::data::{assemble_m, collect_trajectory, default_excitation};
    use crate::expr::Dictionary;
    use crate::model::tests_support::{case1_augmented, case1_paper_p};
    use crate::model::{augment, InputConstraints, RegionSpec};
    use crate::synth::{run_pipeline, Horizon, SynthOptions, SynthOutput};

    fn case1_synthesized() -> (AugmentedModel, SynthOutput) {
        let aug = case1_augmented();
        let exc = default_excitation(&aug).unwrap();
        let traj = collect_trajectory(&aug, 11, &exc, 7, None).unwrap();
        let dm = assemble_m(&traj, &aug.aug_dictionary).unwrap();
        let out = run_pipeline(&aug, &traj, &dm, &SynthOptions::default()).unwrap();
        (aug, out)
    }

    #[test]
    fn decrement_nonpositive_for_synthesized_certificate() {
        let (aug, out) = case1_synthesized();
        let mode = DecrementMode::Grid { per_axis: 21 };
        let res = check_decrement(&aug, &out.certificate, &out.controller, &mode).unwrap();
        assert!(
            res.max_value <= 1e-6,
            "decrement max {} at {:?}",
            res.max_value,
            res.argmax
        );
        assert_eq!(res.table.len(), 21 * 21 * 21);
    }

    #[test]
    fn decrement_with_inflated_ca_is_deeply_negative() {
        let (aug, out) = case1_synthesized();
        let mut cert = out.certificate.clone();
        cert.c_a = 1e6;
        let mode = DecrementMode::Grid { per_axis: 9 };
        let res = check_decrement(&aug, &cert, &out.controller, &mode).unwrap();
        assert!(res.max_value < -1e5);
    }

    #[test]
    fn decrement_detects_corrupted_certificate() {
        // a barrier concentrated on the input axis grows along the closed
        // loop wherever the controller swings u, so the check must flag it
        let (aug, out) = case1_synthesized();
        let mut cert = out.certificate.clone();
        cert.p = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[
            1e-3, 1e-3, 1.0,
        ]));
        let mode = DecrementMode::Grid { per_axis: 9 };
        let res = check_decrement(&aug, &cert, &out.controller, &mode).unwrap();
        assert!(
            res.max_value > 0.0,
            "corruption not detected: {}",
            res.max_value
        );
    }

    #[test]
    fn sampled_mode_close_to_grid_mode() {
        let (aug, out) = case1_synthesized();
        let sampled = check_decrement(
            &aug,
            &out.certificate,
            &out.controller,
            &DecrementMode::Sampled {
                n_samples: 20_000,
                seed: 3,
            },
        )
        .unwrap();
        assert!(sampled.max_value <= 1e-6);
        assert!(sampled.table.is_empty());
    }

    #[test]
    fn level_check_accepts_computed_levels_and_paper_values() {
        let (aug, out) = case1_synthesized();
        let check = check_levels(&out.certificate, &aug.initial_boxes, &aug.unsafe_boxes, 5000, 1)
            .unwrap();
        assert!(check.passed());

        let paper_cert = Certificate {
            p: case1_paper_p(),
            eta_a: 66.6553,
            gamma_a: 125.7459,
            c_a: 3.9385,
            varpi: 0.01,
            horizon: Horizon::Finite(15),
        };
        let check = check_levels(&paper_cert, &aug.initial_boxes, &aug.unsafe_boxes, 5000, 1)
            .unwrap();
        assert!(check.passed());
    }

    #[test]
    fn level_check_rejects_lowered_eta() {
        let (aug, out) = case1_synthesized();
        let mut cert = out.certificate.clone();
        cert.eta_a -= 1.0;
        let check =
            check_levels(&cert, &aug.initial_boxes, &aug.unsafe_boxes, 5000, 1).unwrap();
        assert!(!check.initial_ok);
    }

    #[test]
    fn rollouts_stay_safe_for_horizon() {
        let (aug, out) = case1_synthesized();
        let steps = out.certificate.horizon.as_steps().unwrap_or(100).min(100);
        let stats = rollout(
            &aug.plant,
            &out.controller,
            &aug.initial_input_box().unwrap(),
            steps,
            200,
            11,
        );
        assert_eq!(stats.runs_with_state_violation, 0);
        assert_eq!(stats.runs_with_input_violation, 0);
        assert_eq!(stats.domain_errors, 0);
    }

    #[test]
    fn zero_steps_is_vacuously_safe() {
        let (aug, out) = case1_synthesized();
        let stats = rollout(
            &aug.plant,
            &out.controller,
            &aug.initial_input_box().unwrap(),
            0,
            50,
            11,
        );
        assert!(stats.passed());
    }

    #[test]
    fn diverging_plant_with_zero_controller_violates() {
        // x+ = 1.5 x: diverges from the initial set into the unsafe box
        let dictionary = Dictionary::parse(1, 1, &["x1", "u1"]).unwrap();
        let a = DMatrix::from_row_slice(1, 2, &[1.5, 0.0]);
        let regions = RegionSpec::new(
            BoxRegion::new(vec![-10.0], vec![10.0]).unwrap(),
            vec![BoxRegion::new(vec![0.5], vec![0.6]).unwrap()],
            vec![BoxRegion::new(vec![5.0], vec![10.0]).unwrap()],
        )
        .unwrap();
        let inputs = InputConstraints::from_box_bounds(&[1.0]).unwrap();
        let plant = PlantModel::new(dictionary, a, regions, inputs).unwrap();
        let zero_ctrl = DynamicController {
            gain: DMatrix::zeros(1, 2),
        };
        let u_box = BoxRegion::new(vec![0.0], vec![0.0]).unwrap();
        let stats = rollout(&plant, &zero_ctrl, &u_box, 20, 50, 4);
        assert!(stats.runs_with_state_violation > 0);
    }

    #[test]
    fn rollouts_are_deterministic_per_seed() {
        let (aug, out) = case1_synthesized();
        let u_box = aug.initial_input_box().unwrap();
        let a = rollout_traces(&aug.plant, &out.controller, &u_box, 10, 20, 5);
        let b = rollout_traces(&aug.plant, &out.controller, &u_box, 10, 20, 5);
        for (x, y) in a.iter().zip(&b) {
            match (x, y) {
                (Ok(tx), Ok(ty)) => assert_eq!(tx, ty),
                _ => panic!("trace errors"),
            }
        }
    }

    #[test]
    fn barrier_chain_bound_along_rollouts() {
        // along verified rollouts, B(zeta(k)) <= eta_a + k c_a + slack and
        // stays strictly below gamma_a within the horizon
        let (aug, out) = case1_synthesized();
        let cert = &out.certificate;
        let steps = match cert.horizon {
            Horizon::Finite(t) => t.min(80),
            Horizon::Infinite => 80,
        };
        let traces = rollout_traces(
            &aug.plant,
            &out.controller,
            &aug.initial_input_box().unwrap(),
            steps,
            100,
            21,
        );
        for trace in traces {
            let trace = trace.unwrap();
            for (k, (x, u)) in trace.states.iter().zip(&trace.inputs).enumerate() {
                let mut zeta = x.clone();
                zeta.extend_from_slice(u);
                let b = cert.barrier(&zeta);
                assert!(
                    b <= cert.eta_a + k as f64 * cert.c_a + 1e-6,
                    "chain bound broken at k = {k}: B = {b}"
                );
                assert!(b < cert.gamma_a, "barrier reached gamma at k = {k}");
            }
        }
    }

    #[test]
    fn heatmap_csv_is_reproducible() {
        let (aug, out) = case1_synthesized();
        let mode = DecrementMode::Grid { per_axis: 5 };
        let r1 = check_decrement(&aug, &out.certificate, &out.controller, &mode).unwrap();
        let r2 = check_decrement(&aug, &out.certificate, &out.controller, &mode).unwrap();
        assert_eq!(r1.to_csv(), r2.to_csv());
        assert!(r1.to_csv().starts_with("zeta1,zeta2,zeta3,value\n"));
    }
}
