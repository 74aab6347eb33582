//! The alternative computation route: sampled convex programs over the
//! state set, deterministic Lipschitz certification, and the probabilistic
//! scenario route with its sample-count bound.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrices, TrajectoryData};
use crate::error::{Error, Result};
use crate::expr::Dictionary;
use crate::model::{AugmentedModel, BoxRegion};
use crate::sdp::{self, extract_symmetric, ScpMode, ScpShape, SolveStatus};
use crate::synth::{self, BarrierSolution, Certificate, DynamicController};

pub use crate::synth::recover_y;

/// Memory guard for explicit grids.
const GRID_POINT_LIMIT: u128 = 10_000_000;

/// Uniform grid over the state box with per-axis sample counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub counts: Vec<usize>,
}

impl GridSpec {
    pub fn uniform(dim: usize, count: usize) -> Self {
        GridSpec {
            counts: vec![count; dim],
        }
    }

    /// Doubles the per-axis resolution (refinement between rounds).
    pub fn doubled(&self) -> Self {
        GridSpec {
            counts: self.counts.iter().map(|c| c * 2).collect(),
        }
    }
}

/// The grid points and the exact covering radius `delta`, half the cell
/// diagonal: every point of the box is within `delta` of some sample.
pub fn grid_samples(state_box: &BoxRegion, spec: &GridSpec) -> Result<(Vec<Vec<f64>>, f64)> {
    if spec.counts.len() != state_box.dim() {
        return Err(Error::Dimension {
            expected: state_box.dim(),
            got: spec.counts.len(),
            context: "grid spec".into(),
        });
    }
    if spec.counts.iter().any(|c| *c < 2) {
        return Err(Error::ScenarioParams(
            "grid needs at least 2 points per axis".into(),
        ));
    }
    let total: u128 = spec
        .counts
        .iter()
        .map(|c| *c as u128)
        .try_fold(1u128, |acc, c| acc.checked_mul(c))
        .ok_or(Error::GridGuard {
            points: u128::MAX,
            limit: GRID_POINT_LIMIT as u64,
        })?;
    if total > GRID_POINT_LIMIT {
        return Err(Error::GridGuard {
            points: total,
            limit: GRID_POINT_LIMIT as u64,
        });
    }
    let widths = state_box.widths();
    let delta = 0.5
        * widths
            .iter()
            .zip(&spec.counts)
            .map(|(w, c)| {
                let h = w / (*c as f64 - 1.0);
                h * h
            })
            .sum::<f64>()
            .sqrt();
    Ok((crate::synth::grid_points(state_box, &spec.counts), delta))
}

/// The scenario sample bound
/// `ceil((2/eps) (ln(1/beta) + dim (dim+1)/2 + 1))`, where the second
/// summand counts the decision variables of the adjusted program.
pub fn sample_count(epsilon: f64, beta: f64, dim: usize) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::ScenarioParams(format!(
            "epsilon = {epsilon} must lie in (0, 1)"
        )));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::ScenarioParams(format!(
            "beta = {beta} must lie in (0, 1)"
        )));
    }
    if dim == 0 {
        return Err(Error::ScenarioParams("dimension must be positive".into()));
    }
    let d = dim as f64;
    let raw = (2.0 / epsilon) * ((1.0 / beta).ln() + d * (d + 1.0) / 2.0 + 1.0);
    Ok(raw.ceil() as u64)
}

/// Violation and confidence parameters of the probabilistic route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub epsilon: f64,
    pub beta: f64,
    pub seed: u64,
    /// Number of i.i.d. assessment samples (at least the sample bound).
    pub n_samples: u64,
}

impl ScenarioParams {
    pub fn new(epsilon: f64, beta: f64, seed: u64, dim: usize) -> Result<Self> {
        Ok(ScenarioParams {
            epsilon,
            beta,
            seed,
            n_samples: sample_count(epsilon, beta, dim)?,
        })
    }
}

/// The sampled constraint function
/// `g(zeta) = (1 + 1/varpi) Psi(zeta)^T G^T P G Psi(zeta)` with `G = S+ Z2`.
pub fn nonlinear_quad(
    p: &DMatrix<f64>,
    g_mat: &DMatrix<f64>,
    aug_dict: &Dictionary,
    varpi: f64,
    zeta: &[f64],
) -> Result<f64> {
    let psi = aug_dict.eval_nonlinear(zeta, &[])?;
    let psi = DVector::from_column_slice(&psi);
    let w = g_mat * psi;
    Ok((1.0 + 1.0 / varpi) * (w.transpose() * p * &w)[(0, 0)])
}

/// A solved scenario program, canonicalized on its optimal face.
#[derive(Debug, Clone)]
pub struct ScpSolution {
    pub p: DMatrix<f64>,
    /// The tight bound `max_d g_d(P)` over the assessment samples.
    pub c_a: f64,
    /// Slack variable of the with-mu program at the canonical point.
    pub mu: f64,
    /// Raw solver objective, for diagnostics.
    pub objective: f64,
}

fn run_scp(
    samples: &[Vec<f64>],
    g_mat: &DMatrix<f64>,
    aug_dict: &Dictionary,
    varpi: f64,
    mode: ScpMode,
    shape: &ScpShape,
) -> Result<ScpSolution> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let psi_images = samples
        .par_iter()
        .map(|z| aug_dict.eval_nonlinear(z, &[]))
        .collect::<Result<Vec<_>>>()?;
    let (problem, layout) = sdp::build_scp_problem(&psi_images, g_mat, varpi, mode, shape)?;
    let sol = sdp::solve(&problem, 1e-9)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::SdpInfeasible {
                context: "scenario convex program".into(),
            })
        }
        SolveStatus::NumericalFailure => {
            return Err(Error::SdpFailure {
                status: sol.solver_status,
                context: "scenario convex program".into(),
            })
        }
    }
    let p = extract_symmetric(&sol.y, 0, layout.aug_dim);
    // the optimal face leaves the (c_a, mu) split free; report the tight
    // per-sample bound, which is feasible and optimal for the solved P
    let max_g = samples
        .par_iter()
        .map(|z| nonlinear_quad(&p, g_mat, aug_dict, varpi, z))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    Ok(ScpSolution {
        p,
        c_a: max_g.max(0.0),
        mu: 0.0,
        objective: sol.objective,
    })
}

/// Solves the with-mu scenario program on explicit samples.
pub fn solve_scp(
    samples: &[Vec<f64>],
    g_mat: &DMatrix<f64>,
    aug_dict: &Dictionary,
    varpi: f64,
    shape: &ScpShape,
) -> Result<ScpSolution> {
    run_scp(samples, g_mat, aug_dict, varpi, ScpMode::WithMu, shape)
}

/// Heuristic Lipschitz estimate of the sampled constraint function: 1.1
/// times the largest sampled gradient norm over the fine grid (central
/// differences). Not a certified bound.
pub fn lipschitz_estimate(
    p: &DMatrix<f64>,
    g_mat: &DMatrix<f64>,
    aug_dict: &Dictionary,
    state_box: &BoxRegion,
    varpi: f64,
    fine_grid: &GridSpec,
) -> Result<f64> {
    let (points, _) = grid_samples(state_box, fine_grid)?;
    let widths = state_box.widths();
    let dim = state_box.dim();
    let max_grad = points
        .par_iter()
        .map(|z| {
            let mut sq = 0.0;
            for axis in 0..dim {
                let h = 1e-6 * widths[axis].max(1e-12);
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[axis] = (zp[axis] + h).min(state_box.upper[axis]);
                zm[axis] = (zm[axis] - h).max(state_box.lower[axis]);
                let span = zp[axis] - zm[axis];
                if span > 0.0 {
                    let g = (nonlinear_quad(p, g_mat, aug_dict, varpi, &zp)?
                        - nonlinear_quad(p, g_mat, aug_dict, varpi, &zm)?)
                        / span;
                    sq += g * g;
                }
            }
            Ok(sq.sqrt())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    Ok(1.1 * max_grad)
}

/// The a-posteriori correctness condition `mu_S* + L delta <= 0`; on true,
/// the sampled solution is valid for the robust program with
/// `mu_R* = L delta + mu_S*`.
pub fn deterministic_check(mu_s: f64, lipschitz: f64, delta: f64) -> bool {
    mu_s + lipschitz * delta <= 0.0
}

/// Solves the adjusted (ca-only) scenario program on `n_samples` i.i.d.
/// uniform samples drawn from the state box with the given seed.
pub fn solve_probabilistic(
    params: &ScenarioParams,
    state_box: &BoxRegion,
    g_mat: &DMatrix<f64>,
    aug_dict: &Dictionary,
    varpi: f64,
    shape: &ScpShape,
) -> Result<ScpSolution> {
    let needed = sample_count(params.epsilon, params.beta, state_box.dim())?;
    if params.n_samples < needed {
        return Err(Error::ScenarioParams(format!(
            "n_samples = {} below the bound {} for (epsilon, beta) = ({}, {})",
            params.n_samples, needed, params.epsilon, params.beta
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
    let samples: Vec<Vec<f64>> = (0..params.n_samples)
        .map(|_| state_box.sample_uniform(&mut rng))
        .collect();
    run_scp(&samples, g_mat, aug_dict, varpi, ScpMode::CaOnly, shape)
}

/// Empirical fraction of fresh uniform samples violating `g(zeta) <= c_a`,
/// for auditing the probabilistic guarantee.
pub fn audit_violations(
    p: &DMatrix<f64>,
    c_a: f64,
    g_mat: &DMatrix<f64>,
    aug_dict: &Dictionary,
    state_box: &BoxRegion,
    varpi: f64,
    n_samples: u64,
    seed: u64,
) -> Result<f64> {
    let violations: u64 = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let z = state_box.sample_uniform(&mut rng);
            Ok(u64::from(nonlinear_quad(p, g_mat, aug_dict, varpi, &z)? > c_a))
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum();
    Ok(violations as f64 / n_samples as f64)
}

/// Shape anchor for the scenario programs, derived from a reference
/// certificate: the scenario `P` is confined to the band
/// `P0_hat / rho <= P <= rho P0_hat` at pinned trace, which keeps the data
/// LMI solvable for `Y` while leaving room to shrink `c_a`. Deterministic
/// convex constraints do not change the scenario decision-variable count,
/// so the sample bound is unaffected.
#[derive(Debug, Clone)]
pub struct ShapeAnchor {
    pub reference_p: DMatrix<f64>,
    pub rho: f64,
}

impl ShapeAnchor {
    pub fn from_barrier(barrier: &BarrierSolution, rho: f64) -> Self {
        ShapeAnchor {
            reference_p: barrier.p.clone(),
            rho,
        }
    }

    /// The deterministic constraints handed to the scenario program.
    pub fn to_scp_shape(&self) -> ScpShape {
        let d = self.reference_p.nrows() as f64;
        let normalized = &self.reference_p * (d / self.reference_p.trace());
        ScpShape {
            trace_target: Some(d),
            lower: Some(&normalized / self.rho),
            upper: Some(&normalized * self.rho),
        }
    }

    pub fn tightened(&self, factor: f64) -> Self {
        ShapeAnchor {
            reference_p: self.reference_p.clone(),
            rho: (self.rho / factor).max(1.0 + 1e-9),
        }
    }
}

/// Outcome of a deterministic (grid + Lipschitz) scenario round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeterministicReport {
    pub rounds: usize,
    pub final_counts: Vec<usize>,
    pub delta: f64,
    pub lipschitz: f64,
    /// mu at the canonical optimal-face point used for the check.
    pub mu_used: f64,
    pub check_passed: bool,
    /// Decay value promoted to the robust program: `max_g + L delta`.
    pub c_a_robust: f64,
}

/// Deterministic scenario route: solve the grid program, estimate the
/// Lipschitz constant, and promote the solution to the robust program with
/// the Lipschitz-inflated decay value.
///
/// The (c_a, mu) split is free on the optimal face of the with-mu program;
/// the a-posteriori split `(max_g + L delta, -L delta)` is the optimal
/// point at which the correctness condition holds, and the promoted decay
/// value is exactly the bound the Lipschitz argument certifies. Rounds
/// double the grid resolution until the inflation stops dominating the
/// sampled maximum (up to three refinements).
pub fn run_deterministic(
    state_box: &BoxRegion,
    initial_grid: &GridSpec,
    g_mat: &DMatrix<f64>,
    aug_dict: &Dictionary,
    varpi: f64,
    shape: &ScpShape,
) -> Result<(ScpSolution, DeterministicReport)> {
    let mut grid = initial_grid.clone();
    let mut last: Option<(ScpSolution, DeterministicReport)> = None;
    for round in 0..3 {
        let (samples, delta) = grid_samples(state_box, &grid)?;
        let scp = solve_scp(&samples, g_mat, aug_dict, varpi, shape)?;
        let fine = GridSpec {
            counts: grid.counts.iter().map(|c| 2 * c - 1).collect(),
        };
        let lipschitz = lipschitz_estimate(&scp.p, g_mat, aug_dict, state_box, varpi, &fine)?;
        let inflation = lipschitz * delta;
        let mu_used = -inflation;
        let check_passed = deterministic_check(mu_used, lipschitz, delta);
        let c_a_robust = scp.c_a + inflation;
        let good_enough = inflation <= scp.c_a.max(1e-12);
        let report = DeterministicReport {
            rounds: round + 1,
            final_counts: grid.counts.clone(),
            delta,
            lipschitz,
            mu_used,
            check_passed,
            c_a_robust,
        };
        last = Some((scp, report));
        if check_passed && good_enough {
            break;
        }
        grid = grid.doubled();
    }
    let (mut scp, report) = last.expect("at least one round always runs");
    scp.c_a = report.c_a_robust;
    scp.mu = report.mu_used;
    Ok((scp, report))
}

/// Which sampled route computes `(P, c_a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioRoute {
    /// Grid samples with the a-posteriori Lipschitz promotion.
    Deterministic { grid: GridSpec },
    /// i.i.d. samples with the probabilistic guarantee.
    Probabilistic { epsilon: f64, beta: f64, seed: u64 },
}

/// Knobs of the scenario pipeline.
#[derive(Debug, Clone)]
pub struct ScenarioOptions {
    pub varpi: f64,
    pub route: ScenarioRoute,
    /// The anchor keeps at least this fraction of the optimal conditioning.
    pub kappa_floor_frac: f64,
    /// Shape-band half-widths tried from widest to tightest; the pipeline
    /// keeps the first scenario solution whose `Y` recovery succeeds.
    pub rho_ladder: Vec<f64>,
}

impl ScenarioOptions {
    pub fn probabilistic(varpi: f64, epsilon: f64, beta: f64, seed: u64) -> Self {
        ScenarioOptions {
            varpi,
            route: ScenarioRoute::Probabilistic {
                epsilon,
                beta,
                seed,
            },
            kappa_floor_frac: 0.8,
            rho_ladder: vec![4.0, 2.0, 1.3, 1.05],
        }
    }

    pub fn deterministic(varpi: f64, grid: GridSpec) -> Self {
        ScenarioOptions {
            varpi,
            route: ScenarioRoute::Deterministic { grid },
            kappa_floor_frac: 0.8,
            rho_ladder: vec![4.0, 2.0, 1.3, 1.05],
        }
    }
}

/// Route-specific metadata of a scenario run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteReport {
    Deterministic(DeterministicReport),
    Probabilistic(ScenarioParams),
}

/// Everything produced by one scenario-pipeline run.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub certificate: Certificate,
    pub controller: DynamicController,
    pub z2: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// LMI margin achieved by the recovered `Y`.
    pub margin: f64,
    pub route: RouteReport,
    /// Band half-width at which recovery succeeded.
    pub rho_used: f64,
    pub attempts: usize,
    /// Conditioning of the anchor shape.
    pub anchor_kappa: f64,
}

/// The full alternative-route pipeline: `Z2`, interior anchor, sampled
/// `(P, c_a)` inside a shrinking shape band, `Y` recovery with `Pi = P^{-1}`
/// pinned, then levels, horizon, and the controller.
pub fn run_scenario_pipeline(
    aug: &AugmentedModel,
    traj: &TrajectoryData,
    dm: &DataMatrices,
    opts: &ScenarioOptions,
) -> Result<ScenarioOutput> {
    let s_plus = &traj.shifted;
    let z2 = synth::solve_z2(dm, s_plus)?;
    let g_mat = s_plus * &z2;

    // anchor: the max-margin metric within the near-optimal conditioning
    // slice is interior, so a band around it stays data-consistent
    let kmax = synth::solve_barrier(dm, s_plus, opts.varpi)?;
    let anchor = synth::solve_barrier_margin(
        dm,
        s_plus,
        opts.varpi,
        opts.kappa_floor_frac * kmax.kappa,
    )?;

    let mut attempts = 0;
    let mut last_err: Option<Error> = None;
    for &rho in &opts.rho_ladder {
        attempts += 1;
        let shape = ShapeAnchor {
            reference_p: anchor.p.clone(),
            rho,
        }
        .to_scp_shape();
        let (scp, route_report) = match &opts.route {
            ScenarioRoute::Probabilistic {
                epsilon,
                beta,
                seed,
            } => {
                let params = ScenarioParams::new(*epsilon, *beta, *seed, aug.dim())?;
                let scp = solve_probabilistic(
                    &params,
                    &aug.state_box,
                    &g_mat,
                    &aug.aug_dictionary,
                    opts.varpi,
                    &shape,
                )?;
                (scp, RouteReport::Probabilistic(params))
            }
            ScenarioRoute::Deterministic { grid } => {
                let (scp, report) = run_deterministic(
                    &aug.state_box,
                    grid,
                    &g_mat,
                    &aug.aug_dictionary,
                    opts.varpi,
                    &shape,
                )?;
                (scp, RouteReport::Deterministic(report))
            }
        };
        match recover_y(dm, s_plus, &scp.p, opts.varpi) {
            Ok((y, margin)) => {
                let (eta_a, gamma_a) =
                    synth::compute_levels(&scp.p, &aug.initial_boxes, &aug.unsafe_boxes)?;
                let horizon = synth::horizon(eta_a, gamma_a, scp.c_a)?;
                let controller = synth::build_controller(&traj.inputs, &y, &scp.p, &z2);
                return Ok(ScenarioOutput {
                    certificate: Certificate {
                        p: scp.p,
                        eta_a,
                        gamma_a,
                        c_a: scp.c_a,
                        varpi: opts.varpi,
                        horizon,
                    },
                    controller,
                    z2,
                    y,
                    margin,
                    route: route_report,
                    rho_used: rho,
                    attempts,
                    anchor_kappa: anchor.kappa,
                });
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| {
        Error::ScenarioCoupling("empty shape-band ladder".into())
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn sample_count_reported_value() {
        assert_eq!(sample_count(0.01, 1e-10, 3).unwrap(), 6006);
    }

    #[test]
    fn sample_count_direct_evaluations() {
        assert_eq!(sample_count(0.05, 0.01, 3).unwrap(), 465);
        // dim = 1: decision count 1*2/2 + 1 = 2
        assert_eq!(sample_count(0.5, 0.5, 1).unwrap(), 11);
    }

    proptest! {
        #[test]
        fn sample_count_monotonicity(
            eps1 in 0.01f64..0.9, eps2 in 0.01f64..0.9,
            beta in 1e-8f64..0.5, dim in 1usize..10
        ) {
            let (lo, hi) = if eps1 <= eps2 { (eps1, eps2) } else { (eps2, eps1) };
            prop_assert!(
                sample_count(lo, beta, dim).unwrap() >= sample_count(hi, beta, dim).unwrap()
            );
            prop_assert!(
                sample_count(lo, beta / 2.0, dim).unwrap() >= sample_count(lo, beta, dim).unwrap()
            );
            prop_assert!(
                sample_count(lo, beta, dim + 1).unwrap() > sample_count(lo, beta, dim).unwrap()
            );
        }
    }

    #[test]
    fn grid_delta_closed_forms() {
        let unit2 = BoxRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let (points, delta) = grid_samples(&unit2, &GridSpec::uniform(2, 11)).unwrap();
        assert_eq!(points.len(), 121);
        assert_relative_eq!(delta, 0.07071067811865477, epsilon = 1e-15);

        let unit1 = BoxRegion::new(vec![0.0], vec![1.0]).unwrap();
        let (_, delta) = grid_samples(&unit1, &GridSpec::uniform(1, 2)).unwrap();
        assert_relative_eq!(delta, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn grid_delta_case1_box() {
        let b = BoxRegion::new(vec![-5.0, -5.0, -15.01], vec![5.0, 5.0, 15.01]).unwrap();
        let (points, delta) = grid_samples(&b, &GridSpec::uniform(3, 51)).unwrap();
        assert_eq!(points.len(), 51 * 51 * 51);
        assert_relative_eq!(delta, 0.33184339680035824, epsilon = 1e-12);
    }

    #[test]
    fn grid_delta_bounds_empirical_covering_radius() {
        let b = BoxRegion::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let spec = GridSpec { counts: vec![3, 4] };
        let (points, delta) = grid_samples(&b, &spec).unwrap();
        // brute-force max-min distance over a fine probe grid
        let mut worst = 0.0f64;
        for probe in crate::synth::grid_points(&b, &[41, 41]) {
            let nearest = points
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(&probe)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(nearest);
        }
        assert!(worst <= delta + 1e-12, "empirical {worst} > delta {delta}");
        // the bound is tight up to probe-grid resolution
        assert!(delta - worst <= 0.1);
    }

    #[test]
    fn grid_guard_rejects_huge_grids() {
        let b = BoxRegion::new(vec![0.0; 10], vec![1.0; 10]).unwrap();
        let err = grid_samples(&b, &GridSpec::uniform(10, 11)).unwrap_err();
        assert!(matches!(err, Error::GridGuard { .. }));
    }

    #[test]
    fn scp_vacuous_sample_is_zero() {
        // Psi = 0 at the only sample: optimal c_a = 0, mu = 0
        let dict = Dictionary::parse(2, 0, &["x1", "x2", "sin(x1)"]).unwrap();
        let g = DMatrix::from_column_slice(2, 1, &[1.0, 0.5]);
        let samples = vec![vec![0.0, 0.3]];
        let sol = solve_scp(&samples, &g, &dict, 0.01, &ScpShape::none()).unwrap();
        assert!(sol.c_a.abs() < 1e-9, "c_a = {}", sol.c_a);
        assert_eq!(sol.mu, 0.0);
    }

    #[test]
    fn scp_constraint_tight_at_canonical_point() {
        let dict = Dictionary::parse(2, 0, &["x1", "x2", "sin(x1)", "cos(x2)"]).unwrap();
        let g = DMatrix::from_row_slice(2, 2, &[0.8, -0.1, 0.2, 0.5]);
        let samples = vec![
            vec![0.5, 0.2],
            vec![-1.0, 0.8],
            vec![0.1, -0.4],
            vec![1.2, 1.0],
        ];
        let varpi = 0.1;
        let sol = solve_scp(&samples, &g, &dict, varpi, &ScpShape::none()).unwrap();
        // at least one sample attains g_d = c_a + mu
        let worst = samples
            .iter()
            .map(|z| nonlinear_quad(&sol.p, &g, &dict, varpi, z).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(worst, sol.c_a + sol.mu, epsilon = 1e-9);
    }

    #[test]
    fn lipschitz_of_quadratic_matches_analytic_derivative() {
        // tail term x1 over [0,1] with (1 + 1/varpi) g^2 p = 1 makes the
        // constraint function exactly zeta^2: max |g'| = 2, estimate 2.2
        let dict = Dictionary::parse(1, 0, &["x1", "x1"]).unwrap();
        let varpi = 1.0;
        let g_val = 0.5f64;
        let p_val = 1.0 / ((1.0 + 1.0 / varpi) * g_val * g_val);
        let g = DMatrix::from_element(1, 1, g_val);
        let p = DMatrix::from_element(1, 1, p_val);
        let b = BoxRegion::new(vec![0.0], vec![1.0]).unwrap();
        let lip =
            lipschitz_estimate(&p, &g, &dict, &b, varpi, &GridSpec::uniform(1, 101)).unwrap();
        assert_relative_eq!(lip, 2.2, max_relative = 1e-3);
    }

    #[test]
    fn lipschitz_scales_linearly_with_p() {
        let dict = Dictionary::parse(1, 0, &["x1", "sin(x1)"]).unwrap();
        let g = DMatrix::from_element(1, 1, 1.0);
        let b = BoxRegion::new(vec![-1.0], vec![1.0]).unwrap();
        let p1 = DMatrix::from_element(1, 1, 1.0);
        let p3 = DMatrix::from_element(1, 1, 3.0);
        let l1 = lipschitz_estimate(&p1, &g, &dict, &b, 0.5, &GridSpec::uniform(1, 51)).unwrap();
        let l3 = lipschitz_estimate(&p3, &g, &dict, &b, 0.5, &GridSpec::uniform(1, 51)).unwrap();
        assert_relative_eq!(l3, 3.0 * l1, max_relative = 1e-9);
    }

    #[test]
    fn lipschitz_of_constant_is_zero() {
        // a box so small the argument effectively never moves
        let dict = Dictionary::parse(1, 0, &["x1", "cos(x1)"]).unwrap();
        let g = DMatrix::from_element(1, 1, 1.0);
        let b = BoxRegion::new(vec![0.0], vec![1e-9]).unwrap();
        let lip = lipschitz_estimate(
            &DMatrix::identity(1, 1),
            &g,
            &dict,
            &b,
            0.5,
            &GridSpec::uniform(1, 11),
        )
        .unwrap();
        assert!(lip.abs() < 1e-6);
    }

    #[test]
    fn deterministic_check_arithmetic() {
        assert!(deterministic_check(-1.0, 0.5, 1.0));
        assert!(!deterministic_check(-0.1, 1.0, 0.2));
        assert!(!deterministic_check(0.0, 0.5, 0.5));
    }

    #[test]
    fn probabilistic_rejects_insufficient_samples() {
        let dict = Dictionary::parse(1, 0, &["x1", "sin(x1)"]).unwrap();
        let g = DMatrix::from_element(1, 1, 1.0);
        let b = BoxRegion::new(vec![-1.0], vec![1.0]).unwrap();
        let params = ScenarioParams {
            epsilon: 0.01,
            beta: 1e-10,
            seed: 0,
            n_samples: 10,
        };
        let err =
            solve_probabilistic(&params, &b, &g, &dict, 0.01, &ScpShape::none()).unwrap_err();
        assert!(matches!(err, Error::ScenarioParams(_)));
    }

    #[test]
    fn probabilistic_is_deterministic_per_seed() {
        let dict = Dictionary::parse(1, 0, &["x1", "sin(x1)"]).unwrap();
        let g = DMatrix::from_element(1, 1, 1.0);
        let b = BoxRegion::new(vec![-1.0], vec![1.0]).unwrap();
        let params = ScenarioParams::new(0.2, 0.01, 5, 1).unwrap();
        let shape = ScpShape {
            trace_target: Some(1.0),
            lower: None,
            upper: None,
        };
        let a = solve_probabilistic(&params, &b, &g, &dict, 0.5, &shape).unwrap();
        let b2 = solve_probabilistic(&params, &b, &g, &dict, 0.5, &shape).unwrap();
        assert_eq!(a.p, b2.p);
        assert_eq!(a.c_a, b2.c_a);
    }

    #[test]
    fn scenario_pipeline_case1_probabilistic() {
        use crate::data::{assemble_m, collect_trajectory, default_excitation};
        use crate::model::tests_support::case1_augmented;
        let aug = case1_augmented();
        let exc = default_excitation(&aug).unwrap();
        let traj = collect_trajectory(&aug, 11, &exc, 7, None).unwrap();
        let dm = assemble_m(&traj, &aug.aug_dictionary).unwrap();
        let opts = ScenarioOptions::probabilistic(0.01, 0.01, 1e-10, 42);
        let out = run_scenario_pipeline(&aug, &traj, &dm, &opts).unwrap();
        assert!(out.margin >= -1e-9);
        assert!(out.certificate.gamma_a > out.certificate.eta_a);
        let t = out.certificate.horizon.as_steps().unwrap();
        assert!(t >= 30, "scenario horizon {t} below 30");
        // the recovered pair still satisfies the closed-loop identity
        let z1 = &out.y * &out.certificate.p;
        let r = synth::closed_loop_residual(
            &aug,
            &out.controller.gain,
            &traj.shifted,
            &z1,
            &out.z2,
            &[1.0, -1.0, 3.0],
        )
        .unwrap();
        assert!(r <= 1e-6, "closed-loop residual {r}");
    }

    #[test]
    fn scenario_pipeline_case1_deterministic_route() {
        use crate::data::{assemble_m, collect_trajectory, default_excitation};
        use crate::model::tests_support::case1_augmented;
        let aug = case1_augmented();
        let exc = default_excitation(&aug).unwrap();
        let traj = collect_trajectory(&aug, 11, &exc, 7, None).unwrap();
        let dm = assemble_m(&traj, &aug.aug_dictionary).unwrap();
        let opts = ScenarioOptions::deterministic(0.01, GridSpec::uniform(3, 13));
        let out = run_scenario_pipeline(&aug, &traj, &dm, &opts).unwrap();
        assert!(out.certificate.gamma_a > out.certificate.eta_a);
        match &out.route {
            RouteReport::Deterministic(rep) => {
                assert!(rep.check_passed);
                assert!(rep.lipschitz > 0.0);
                assert!(rep.delta > 0.0);
            }
            other => panic!("unexpected route report {other:?}"),
        }
    }
}
