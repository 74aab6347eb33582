//! The synthesis pipeline: from data matrices to certificate, level sets,
//! horizon, and dynamic controller.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrices, TrajectoryData};
use crate::error::{Error, Result};
use crate::expr::Dictionary;
use crate::model::{AugmentedModel, BoxRegion};
use crate::sdp::{self, extract_symmetric, SolveStatus};

/// Safety horizon: finite `T` with `eta_a + c_a T < gamma_a`, or infinite
/// when the decay constant vanishes. Serializes as the number of steps,
/// with `null` as the infinity sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizon {
    Finite(u64),
    Infinite,
}

impl Horizon {
    pub fn as_steps(&self) -> Option<u64> {
        match self {
            Horizon::Finite(t) => Some(*t),
            Horizon::Infinite => None,
        }
    }
}

impl std::fmt::Display for Horizon {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Horizon::Finite(t) => write!(f, "{t}"),
            Horizon::Infinite => write!(f, "inf"),
        }
    }
}

/// Quadratic augmented control barrier certificate `B(zeta) = zeta^T P zeta`.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub p: DMatrix<f64>,
    pub eta_a: f64,
    pub gamma_a: f64,
    pub c_a: f64,
    pub varpi: f64,
    pub horizon: Horizon,
}

impl Certificate {
    pub fn barrier(&self, zeta: &[f64]) -> f64 {
        let z = DVector::from_column_slice(zeta);
        (z.transpose() * &self.p * z)[(0, 0)]
    }
}

/// Dynamic safety controller `u+ = K f(x, u)` over the plant dictionary.
///
/// The same gain read against the augmented dictionary is the virtual static
/// law `theta = K F(zeta)`; the two evaluate identically since the augmented
/// dictionary is the plant dictionary with inputs re-indexed as states.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicController {
    pub gain: DMatrix<f64>,
}

impl DynamicController {
    /// Virtual input for an augmented state.
    pub fn virtual_input(&self, aug_dict: &Dictionary, zeta: &[f64]) -> Result<Vec<f64>> {
        let f = aug_dict.eval(zeta, &[])?;
        Ok(apply_gain(&self.gain, &f))
    }

    /// Next plant input from the current plant state and input.
    pub fn next_input(&self, plant_dict: &Dictionary, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let f = plant_dict.eval(x, u)?;
        Ok(apply_gain(&self.gain, &f))
    }
}

fn apply_gain(gain: &DMatrix<f64>, f: &[f64]) -> Vec<f64> {
    (0..gain.nrows())
        .map(|r| (0..gain.ncols()).map(|c| gain[(r, c)] * f[c]).sum())
        .collect()
}

fn pseudo_inverse(mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    mat.clone()
        .svd(true, true)
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::SdpFailure {
            status: "pinv".into(),
            context: e.to_string(),
        })
}

/// Pseudoinverse of `M` together with an orthonormal basis of its null
/// space.
///
/// The equality systems `M Z2 = [0; I]` and `M Y = [Pi; 0]` inherit the
/// conditioning of `M`, which is poor when the experiment is barely rich
/// (`T` close to `N + 1`). Substituting the general solution
/// `M^+ rhs + V2 W` eliminates the equalities from the cone programs
/// entirely; the interior-point iterations then run on the well-conditioned
/// reduced variables.
pub(crate) fn nullspace_decomposition(
    m_mat: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = m_mat.nrows();
    let t = m_mat.ncols();
    let m_pinv = pseudo_inverse(m_mat)?;
    // orthonormal basis of range(M^T), then greedy orthonormal completion
    let q = m_mat.transpose().qr().q();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(t - n);
    for i in 0..t {
        if basis.len() == t - n {
            break;
        }
        let mut e = DVector::zeros(t);
        e[i] = 1.0;
        // two projection passes for numerical orthogonality
        for _ in 0..2 {
            for c in 0..n {
                let col = q.column(c);
                let proj = col.dot(&e);
                e -= proj * DVector::from_column_slice(col.as_slice());
            }
            for b in &basis {
                let proj = b.dot(&e);
                e -= proj * b;
            }
        }
        let norm = e.norm();
        if norm > 1e-8 {
            basis.push(e / norm);
        }
    }
    if basis.len() != t - n {
        return Err(Error::SdpFailure {
            status: "nullspace".into(),
            context: format!(
                "null space of M has numerical dimension {} != T - N = {}",
                basis.len(),
                t - n
            ),
        });
    }
    let v2 = if basis.is_empty() {
        DMatrix::zeros(t, 0)
    } else {
        DMatrix::from_columns(&basis)
    };
    Ok((m_pinv, v2))
}

/// Solves for `Z2`: the minimum induced-2-norm solution of `M Z2 = [0; I]`,
/// with the solver iterate projected exactly onto the equality manifold.
pub fn solve_z2(dm: &DataMatrices, s_plus: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n_terms = dm.m_mat.nrows();
    let samples = dm.m_mat.ncols();
    let d = s_plus.nrows();
    let tail = n_terms - d;
    if tail == 0 {
        return Ok(DMatrix::zeros(samples, 0));
    }
    let (m_pinv, v2) = nullspace_decomposition(&dm.m_mat)?;
    let mut rhs = DMatrix::zeros(n_terms, tail);
    for j in 0..tail {
        rhs[(d + j, j)] = 1.0;
    }
    // Z2 = Z0 + V2 W; minimize || S+ Z0' + (S+ V2) W || over W
    let z0 = &m_pinv * &rhs;
    let base = s_plus * &z0; // d x tail, constant block
    let g_w = s_plus * &v2; // d x (T - N)
    let free = v2.ncols();

    let w = if free == 0 {
        DMatrix::zeros(0, tail)
    } else {
        // epigraph: [t I, base + G W; *, t I] >= 0, W column-major then t
        let w_index = |q: usize, j: usize| j * free + q;
        let t_index = free * tail;
        let dim = t_index + 1;
        let mut objective = vec![0.0; dim];
        objective[t_index] = 1.0;
        let block_dim = d + tail;
        let mut terms: Vec<(usize, sdp::SymTriplets)> = Vec::new();
        terms.push((t_index, (0..block_dim).map(|i| (i, i, 1.0)).collect()));
        for j in 0..tail {
            for q in 0..free {
                let trips: sdp::SymTriplets = (0..d)
                    .filter(|r| g_w[(*r, q)] != 0.0)
                    .map(|r| (r, d + j, g_w[(r, q)]))
                    .collect();
                if !trips.is_empty() {
                    terms.push((w_index(q, j), trips));
                }
            }
        }
        let mut f0: sdp::SymTriplets = Vec::new();
        for j in 0..tail {
            for r in 0..d {
                if base[(r, j)] != 0.0 {
                    f0.push((r, d + j, base[(r, j)]));
                }
            }
        }
        let problem = sdp::SdpProblem {
            dim,
            objective,
            equalities: vec![],
            nonneg: vec![],
            psd_blocks: vec![sdp::PsdBlock {
                dim: block_dim,
                f0,
                terms,
            }],
        };
        let sol = sdp::solve(&problem, 1e-10)?;
        if sol.status != SolveStatus::Optimal {
            return Err(Error::SdpFailure {
                status: sol.solver_status,
                context: "spectral-norm minimization".into(),
            });
        }
        DMatrix::from_fn(free, tail, |q, j| sol.y[w_index(q, j)])
    };

    let mut z2 = z0 + &v2 * w;
    // exact projection onto the equality manifold
    let correction = &m_pinv * (&dm.m_mat * &z2 - &rhs);
    z2 -= correction;
    let residual = (&dm.m_mat * &z2 - &rhs).norm();
    if residual > 1e-7 {
        return Err(Error::SdpFailure {
            status: "residual".into(),
            context: format!("M Z2 residual {residual:.3e} exceeds 1e-7"),
        });
    }
    Ok(z2)
}

/// Output of the barrier LMI stage.
#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub pi: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub kappa: f64,
    /// Residual of `M Y = [Pi; 0]` after projection.
    pub equality_residual: f64,
    /// Minimum eigenvalue of the solved LMI block.
    pub lmi_min_eig: f64,
}

/// Which quantity the barrier LMI solve maximizes, and how the metric
/// scale is pinned.
#[derive(Debug, Clone, PartialEq)]
pub enum BarrierObjective {
    /// Maximize `kappa` subject to `kappa C <= Pi <= C`: the best scaled
    /// conditioning, which minimizes the `lambda_max(P)` factor of the
    /// decay constant.
    MaximizeKappa,
    /// Maximize the LMI margin subject to `kappa_floor C <= Pi <= C`: an
    /// interior metric within the near-optimal conditioning slice (the
    /// scenario route's anchor).
    MaximizeMargin { kappa_floor: f64 },
}

/// Core barrier LMI solve over `(Pi, W, aux)` with the equality
/// `M Y = [Pi; 0]` eliminated by the null-space substitution
/// `Y = M^+ [Pi; 0] + V2 W`.
///
/// `cap_half_widths` sets the normalization matrix `C = D^2`,
/// `D = diag(half widths)`: the constraint set is homogeneous in
/// `(Pi, Y, kappa)` and every certificate quantity is scale-invariant, so a
/// cap must pin the scale; measuring it relative to the state-box geometry
/// keeps the conditioning meaningful for anisotropic region specs.
pub fn solve_barrier_core(
    dm: &DataMatrices,
    s_plus: &DMatrix<f64>,
    varpi: f64,
    cap_half_widths: &[f64],
    objective_kind: BarrierObjective,
) -> Result<BarrierSolution> {
    if !(varpi > 0.0) {
        return Err(Error::HorizonParams(format!(
            "varpi = {varpi} must be positive"
        )));
    }
    let d = s_plus.nrows();
    if cap_half_widths.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: cap_half_widths.len(),
            context: "barrier cap diagonal".into(),
        });
    }
    let cap: Vec<f64> = cap_half_widths.iter().map(|w| w * w).collect();
    let n_terms = dm.m_mat.nrows();
    let (m_pinv, v2) = nullspace_decomposition(&dm.m_mat)?;
    // S+ Y = H [Pi; 0] + G W with H = S+ M^+, G = S+ V2
    let h = s_plus * &m_pinv;
    let g_w = s_plus * &v2;
    let free = v2.ncols();

    let p_len = d * (d + 1) / 2;
    let pidx = |r: usize, c: usize| {
        let (lo, hi) = if r <= c { (r, c) } else { (c, r) };
        hi * (hi + 1) / 2 + lo
    };
    let widx = |q: usize, j: usize| p_len + j * free + q;
    let aux_index = p_len + free * d; // kappa or the margin
    let dim = aux_index + 1;

    let mut objective = vec![0.0; dim];
    objective[aux_index] = -1.0;

    // [Pi/(1+varpi), S+ Y; *, Pi] >= 0  (minus aux*I in margin mode)
    let scale = 1.0 / (1.0 + varpi);
    let mut lmi_terms: Vec<(usize, sdp::SymTriplets)> = Vec::new();
    for c in 0..d {
        for r in 0..=c {
            let mut trips: sdp::SymTriplets = vec![(r, c, scale), (d + r, d + c, 1.0)];
            // Pi[r,c] enters S+ Y through the particular solution M^+ [Pi; 0]
            for row in 0..d {
                if h[(row, r)] != 0.0 {
                    trips.push((row, d + c, h[(row, r)]));
                }
                if r != c && h[(row, c)] != 0.0 {
                    trips.push((row, d + r, h[(row, c)]));
                }
            }
            lmi_terms.push((pidx(r, c), trips));
        }
    }
    for j in 0..d {
        for q in 0..free {
            let trips: sdp::SymTriplets = (0..d)
                .filter(|row| g_w[(*row, q)] != 0.0)
                .map(|row| (row, d + j, g_w[(row, q)]))
                .collect();
            if !trips.is_empty() {
                lmi_terms.push((widx(q, j), trips));
            }
        }
    }
    if !matches!(objective_kind, BarrierObjective::MaximizeKappa) {
        lmi_terms.push((aux_index, (0..2 * d).map(|i| (i, i, -1.0)).collect()));
    }
    let lmi_block = sdp::PsdBlock {
        dim: 2 * d,
        f0: vec![],
        terms: lmi_terms,
    };

    // floor: Pi - kappa C >= 0 (kappa variable or fixed)
    let mut floor_terms: Vec<(usize, sdp::SymTriplets)> = Vec::new();
    for c in 0..d {
        for r in 0..=c {
            floor_terms.push((pidx(r, c), vec![(r, c, 1.0)]));
        }
    }
    let floor_f0: sdp::SymTriplets = match &objective_kind {
        BarrierObjective::MaximizeKappa => {
            floor_terms.push((
                aux_index,
                (0..d).map(|i| (i, i, -cap[i])).collect(),
            ));
            vec![]
        }
        BarrierObjective::MaximizeMargin { kappa_floor } => {
            let floor = kappa_floor.max(sdp::KAPPA_MIN);
            (0..d).map(|i| (i, i, -floor * cap[i])).collect()
        }
    };
    // cap: C - Pi >= 0
    let mut cap_terms: Vec<(usize, sdp::SymTriplets)> = Vec::new();
    for c in 0..d {
        for r in 0..=c {
            cap_terms.push((pidx(r, c), vec![(r, c, -1.0)]));
        }
    }
    let nonneg = match &objective_kind {
        BarrierObjective::MaximizeKappa => vec![sdp::LinTerm {
            coeffs: vec![(aux_index, 1.0)],
            constant: -sdp::KAPPA_MIN,
        }],
        _ => vec![sdp::LinTerm {
            coeffs: vec![(aux_index, 1.0)],
            constant: 0.0,
        }],
    };
    let problem = sdp::SdpProblem {
        dim,
        objective,
        equalities: vec![],
        nonneg,
        psd_blocks: vec![
            lmi_block,
            sdp::PsdBlock {
                dim: d,
                f0: floor_f0,
                terms: floor_terms,
            },
            sdp::PsdBlock {
                dim: d,
                f0: (0..d).map(|i| (i, i, cap[i])).collect(),
                terms: cap_terms,
            },
        ],
    };
    let sol = sdp::solve(&problem, 1e-10)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::SdpInfeasible {
                context: format!("no quadratic A-CBC found with varpi = {varpi} on this data"),
            })
        }
        SolveStatus::NumericalFailure => {
            return Err(Error::SdpFailure {
                status: sol.solver_status,
                context: "barrier LMI".into(),
            })
        }
    }
    let pi = extract_symmetric(&sol.y, 0, d);
    let w = DMatrix::from_fn(free, d, |q, j| sol.y[widx(q, j)]);

    // reconstruct Y and project exactly onto M Y = [Pi; 0]
    let mut rhs = DMatrix::zeros(n_terms, d);
    rhs.view_mut((0, 0), (d, d)).copy_from(&pi);
    let y = &m_pinv * &rhs + &v2 * w;
    let y = &y - &m_pinv * (&dm.m_mat * &y - &rhs);
    let equality_residual = (&dm.m_mat * &y - &rhs).norm();

    let min_eig_pi = symmetric_min_eig(&pi);
    if min_eig_pi < 1e-8 {
        return Err(Error::SdpFailure {
            status: "Pi".into(),
            context: format!("Pi minimum eigenvalue {min_eig_pi:.3e} below 1e-8"),
        });
    }
    let p = pi
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SdpFailure {
            status: "Pi".into(),
            context: "Cholesky of Pi failed".into(),
        })?
        .inverse();
    let p = symmetrize(&p);

    // scaled conditioning achieved: lambda_min(D^-1 Pi D^-1)
    let kappa = match &objective_kind {
        BarrierObjective::MaximizeKappa => sol.y[aux_index],
        _ => {
            let dinv = DMatrix::from_diagonal(&DVector::from_iterator(
                d,
                cap_half_widths.iter().map(|w| 1.0 / w),
            ));
            symmetric_min_eig(&symmetrize(&(&dinv * &pi * &dinv)))
        }
    };

    let s_plus_y = s_plus * &y;
    let mut lmi = DMatrix::zeros(2 * d, 2 * d);
    lmi.view_mut((0, 0), (d, d))
        .copy_from(&(&pi / (1.0 + varpi)));
    lmi.view_mut((0, d), (d, d)).copy_from(&s_plus_y);
    lmi.view_mut((d, 0), (d, d)).copy_from(&s_plus_y.transpose());
    lmi.view_mut((d, d), (d, d)).copy_from(&pi);
    let lmi_min_eig = symmetric_min_eig(&lmi);
    if equality_residual > 1e-7 || lmi_min_eig < -1e-8 {
        return Err(Error::SdpFailure {
            status: "barrier".into(),
            context: format!(
                "post-solve contract violated: equality residual {equality_residual:.3e}, LMI min eig {lmi_min_eig:.3e}"
            ),
        });
    }

    Ok(BarrierSolution {
        pi,
        y,
        p,
        kappa,
        equality_residual,
        lmi_min_eig,
    })
}

/// Solves the barrier LMI, maximizing the conditioning variable `kappa`
/// subject to `kappa I <= Pi <= I`, and returns `P = Pi^{-1}`.
pub fn solve_barrier(
    dm: &DataMatrices,
    s_plus: &DMatrix<f64>,
    varpi: f64,
) -> Result<BarrierSolution> {
    let d = s_plus.nrows();
    solve_barrier_core(
        dm,
        s_plus,
        varpi,
        &vec![1.0; d],
        BarrierObjective::MaximizeKappa,
    )
}

/// Like [`solve_barrier`], but maximizes the LMI margin within the
/// conditioning slice `Pi >= kappa_floor I`: an interior reference metric.
pub fn solve_barrier_margin(
    dm: &DataMatrices,
    s_plus: &DMatrix<f64>,
    varpi: f64,
    kappa_floor: f64,
) -> Result<BarrierSolution> {
    let d = s_plus.nrows();
    solve_barrier_core(
        dm,
        s_plus,
        varpi,
        &vec![1.0; d],
        BarrierObjective::MaximizeMargin { kappa_floor },
    )
}

/// Reshapes the certificate metric for the configured regions with the
/// controller held fixed.
///
/// With `Z1` pinned, the decrement condition is the linear matrix
/// inequality `P/(1+varpi) - X^T P X >= 0` in `P` alone (`X = S+ Z1` is the
/// closed-loop linear map), so the level separation `gamma - eta` can be
/// maximized directly: `eta >= v^T P v` (initial-set vertices) and
/// `gamma <= z^T P z` (unsafe points) are linear cuts grown from the exact
/// level computations of each iterate. The trace pin and the
/// `lambda_max(P)` cap keep the scale and the decay constant comparable to
/// the starting metric, whose `P0` is always feasible, so the result never
/// separates worse than the start.
///
/// The returned solution keeps the starting controller: `Y = Z1 P^{-1}`
/// satisfies `M Y = [Pi; 0]` exactly because `M Z1 = [I; 0]`.
pub fn improve_levels_fixed_controller(
    dm: &DataMatrices,
    s_plus: &DMatrix<f64>,
    varpi: f64,
    start_solution: &BarrierSolution,
    initial_boxes: &[BoxRegion],
    unsafe_boxes: &[BoxRegion],
) -> Result<BarrierSolution> {
    let d = s_plus.nrows();
    let p0 = &start_solution.p;
    let z1 = &start_solution.y * p0;
    let x_cl = s_plus * &z1;
    let lambda_cap = symmetric_max_eig(p0);
    let trace_target = p0.trace();

    let p_len = d * (d + 1) / 2;
    let pidx = |r: usize, c: usize| {
        let (lo, hi) = if r <= c { (r, c) } else { (c, r) };
        hi * (hi + 1) / 2 + lo
    };
    let eta_index = p_len;
    let gamma_index = p_len + 1;
    let dim = p_len + 2;

    let mut objective = vec![0.0; dim];
    objective[eta_index] = 1.0;
    objective[gamma_index] = -1.0; // maximize gamma - eta

    let quad_cut = |z: &[f64], level_index: usize, sign: f64| -> sdp::LinTerm {
        let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(p_len + 1);
        for c in 0..d {
            for r in 0..=c {
                let q = if r == c { z[r] * z[r] } else { 2.0 * z[r] * z[c] };
                if q != 0.0 {
                    coeffs.push((pidx(r, c), sign * q));
                }
            }
        }
        coeffs.push((level_index, -sign));
        sdp::LinTerm {
            coeffs,
            constant: 0.0,
        }
    };

    // P/(1+varpi) - X^T P X >= 0, entrywise linear in P:
    // coefficient of P[r,c] is E_rc/(1+varpi) - (x_r x_c^T + x_c x_r^T)/sym
    // with x_i = row i of X as a column vector
    let scale = 1.0 / (1.0 + varpi);
    let rows: Vec<DVector<f64>> = (0..d)
        .map(|r| DVector::from_iterator(d, (0..d).map(|c| x_cl[(r, c)])))
        .collect();
    let mut contraction_terms: Vec<(usize, sdp::SymTriplets)> = Vec::new();
    for c in 0..d {
        for r in 0..=c {
            let mut trips: sdp::SymTriplets = vec![(r, c, scale)];
            // -(x_r x_c^T) symmetrized: entry (i, j) gets
            // -(x_r[i] x_c[j] + x_c[i] x_r[j]) / (1 + [r == c])
            let denom = if r == c { 2.0 } else { 1.0 };
            for i in 0..d {
                for j in i..d {
                    let v = -(rows[r][i] * rows[c][j] + rows[c][i] * rows[r][j]) / denom;
                    if v != 0.0 {
                        trips.push((i, j, v));
                    }
                }
            }
            contraction_terms.push((pidx(r, c), trips));
        }
    }
    let contraction_block = sdp::PsdBlock {
        dim: d,
        f0: vec![],
        terms: contraction_terms,
    };

    let p_terms = |sign: f64| -> Vec<(usize, sdp::SymTriplets)> {
        let mut terms = Vec::with_capacity(p_len);
        for c in 0..d {
            for r in 0..=c {
                terms.push((pidx(r, c), vec![(r, c, sign)]));
            }
        }
        terms
    };
    let floor_eps = 1e-8 * trace_target.max(1.0);
    let floor_block = sdp::PsdBlock {
        dim: d,
        f0: (0..d).map(|i| (i, i, -floor_eps)).collect(),
        terms: p_terms(1.0),
    };
    let cap_block = sdp::PsdBlock {
        dim: d,
        f0: (0..d).map(|i| (i, i, lambda_cap)).collect(),
        terms: p_terms(-1.0),
    };
    let trace_pin = sdp::LinTerm {
        coeffs: (0..d).map(|i| (pidx(i, i), 1.0)).collect(),
        constant: -trace_target,
    };

    // seed cuts from the starting metric's level geometry
    let mut eta_cuts: Vec<Vec<f64>> = initial_boxes
        .iter()
        .map(|b| argmax_vertex_quadratic(p0, b))
        .collect::<Result<Vec<_>>>()?;
    let mut gamma_cuts: Vec<Vec<f64>> = unsafe_boxes
        .iter()
        .map(|b| box_qp_argmin(p0, b))
        .collect();

    let mut best_p: Option<DMatrix<f64>> = None;
    for _round in 0..10 {
        let mut nonneg: Vec<sdp::LinTerm> = Vec::new();
        for v in &eta_cuts {
            nonneg.push(quad_cut(v, eta_index, -1.0)); // eta >= v^T P v
        }
        for z in &gamma_cuts {
            nonneg.push(quad_cut(z, gamma_index, 1.0)); // gamma <= z^T P z
        }
        let problem = sdp::SdpProblem {
            dim,
            objective: objective.clone(),
            equalities: vec![trace_pin.clone()],
            nonneg,
            psd_blocks: vec![
                contraction_block.clone(),
                floor_block.clone(),
                cap_block.clone(),
            ],
        };
        let sol = sdp::solve(&problem, 1e-9)?;
        if sol.status != SolveStatus::Optimal {
            break;
        }
        let p = symmetrize(&extract_symmetric(&sol.y, 0, d));
        let eta_hat = sol.y[eta_index];
        let gamma_hat = sol.y[gamma_index];
        let mut new_cut = false;
        for b in initial_boxes {
            let v = argmax_vertex_quadratic(&p, b)?;
            if quad_value(&p, &v) > eta_hat * (1.0 + 1e-8) + 1e-10 && !eta_cuts.contains(&v) {
                eta_cuts.push(v);
                new_cut = true;
            }
        }
        for b in unsafe_boxes {
            let z = box_qp_argmin(&p, b);
            if quad_value(&p, &z) < gamma_hat * (1.0 - 1e-8) - 1e-10 {
                gamma_cuts.push(z);
                new_cut = true;
            }
        }
        best_p = Some(p);
        if !new_cut {
            break;
        }
    }
    let p = best_p.ok_or_else(|| Error::SdpFailure {
        status: "level-opt".into(),
        context: "metric reshaping made no progress".into(),
    })?;

    let pi = symmetrize(
        &p.clone()
            .cholesky()
            .ok_or_else(|| Error::SdpFailure {
                status: "level-opt".into(),
                context: "reshaped P is not positive definite".into(),
            })?
            .inverse(),
    );
    let y = &z1 * &pi;
    let n_terms = dm.m_mat.nrows();
    let mut rhs = DMatrix::zeros(n_terms, d);
    rhs.view_mut((0, 0), (d, d)).copy_from(&pi);
    let equality_residual = (&dm.m_mat * &y - &rhs).norm();

    let s_plus_y = s_plus * &y;
    let mut lmi = DMatrix::zeros(2 * d, 2 * d);
    lmi.view_mut((0, 0), (d, d))
        .copy_from(&(&pi / (1.0 + varpi)));
    lmi.view_mut((0, d), (d, d)).copy_from(&s_plus_y);
    lmi.view_mut((d, 0), (d, d)).copy_from(&s_plus_y.transpose());
    lmi.view_mut((d, d), (d, d)).copy_from(&pi);
    let lmi_min_eig = symmetric_min_eig(&lmi);
    if equality_residual > 1e-7 || lmi_min_eig < -1e-8 {
        return Err(Error::SdpFailure {
            status: "level-opt".into(),
            context: format!(
                "reshaped metric violates the data LMI: residual {equality_residual:.3e}, min eig {lmi_min_eig:.3e}"
            ),
        });
    }
    Ok(BarrierSolution {
        pi,
        y,
        p,
        kappa: start_solution.kappa,
        equality_residual,
        lmi_min_eig,
    })
}

fn quad_value(p: &DMatrix<f64>, z: &[f64]) -> f64 {
    let zv = DVector::from_column_slice(z);
    (zv.transpose() * p * &zv)[(0, 0)]
}

pub(crate) fn symmetrize(mat: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (mat + mat.transpose())
}

pub(crate) fn symmetric_min_eig(mat: &DMatrix<f64>) -> f64 {
    mat.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn symmetric_max_eig(mat: &DMatrix<f64>) -> f64 {
    mat.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Recovers `Y` for a fixed metric `P`: with `Pi = P^{-1}` pinned, finds
/// `Y` satisfying `M Y = [Pi; 0]` and the data LMI, maximizing the LMI
/// margin. Fails when `P` admits no data-consistent `Y`.
pub fn recover_y(
    dm: &DataMatrices,
    s_plus: &DMatrix<f64>,
    p: &DMatrix<f64>,
    varpi: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let d = s_plus.nrows();
    let n_terms = dm.m_mat.nrows();
    let pi = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::ScenarioCoupling("metric P is not positive definite".into()))?
        .inverse();
    let pi = symmetrize(&pi);

    let (m_pinv, v2) = nullspace_decomposition(&dm.m_mat)?;
    let mut rhs = DMatrix::zeros(n_terms, d);
    rhs.view_mut((0, 0), (d, d)).copy_from(&pi);
    let y0 = &m_pinv * &rhs;
    let base = s_plus * &y0;
    let g_w = s_plus * &v2;
    let free = v2.ncols();

    // variables: W (free x d) column-major, then the margin s;
    // maximize s subject to [Pi/(1+varpi), base + G W; *, Pi] - s I >= 0
    let widx = |q: usize, j: usize| j * free + q;
    let s_index = free * d;
    let dim = s_index + 1;
    let mut objective = vec![0.0; dim];
    objective[s_index] = -1.0;

    let block_dim = 2 * d;
    let mut f0: sdp::SymTriplets = Vec::new();
    let scale = 1.0 / (1.0 + varpi);
    for c in 0..d {
        for r in 0..=c {
            if pi[(r, c)] != 0.0 {
                f0.push((r, c, scale * pi[(r, c)]));
                f0.push((d + r, d + c, pi[(r, c)]));
            }
        }
    }
    for j in 0..d {
        for r in 0..d {
            if base[(r, j)] != 0.0 {
                f0.push((r, d + j, base[(r, j)]));
            }
        }
    }
    let mut terms: Vec<(usize, sdp::SymTriplets)> = Vec::new();
    terms.push((s_index, (0..block_dim).map(|i| (i, i, -1.0)).collect()));
    for j in 0..d {
        for q in 0..free {
            let trips: sdp::SymTriplets = (0..d)
                .filter(|r| g_w[(*r, q)] != 0.0)
                .map(|r| (r, d + j, g_w[(r, q)]))
                .collect();
            if !trips.is_empty() {
                terms.push((widx(q, j), trips));
            }
        }
    }
    // cap the margin so the maximization stays bounded
    let problem = sdp::SdpProblem {
        dim,
        objective,
        equalities: vec![],
        nonneg: vec![sdp::LinTerm {
            coeffs: vec![(s_index, -1.0)],
            constant: 1e6,
        }],
        psd_blocks: vec![sdp::PsdBlock {
            dim: block_dim,
            f0,
            terms,
        }],
    };
    let sol = sdp::solve(&problem, 1e-9)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::ScenarioCoupling(format!(
            "margin maximization failed ({})",
            sol.solver_status
        )));
    }
    let margin = sol.y[s_index];
    if margin < -1e-9 {
        return Err(Error::ScenarioCoupling(format!(
            "best achievable LMI margin {margin:.3e} is negative; \
             re-run with a different varpi or seed"
        )));
    }
    let w = DMatrix::from_fn(free, d, |q, j| sol.y[widx(q, j)]);
    let y = &y0 + &v2 * w;
    let y = &y - &m_pinv * (&dm.m_mat * &y - &rhs);
    Ok((y, margin))
}

fn dense_to_triplets_sym(mat: &DMatrix<f64>) -> sdp::SymTriplets {
    let d = mat.nrows();
    let mut trips = Vec::new();
    for c in 0..d {
        for r in 0..=c {
            if mat[(r, c)] != 0.0 {
                trips.push((r, c, mat[(r, c)]));
            }
        }
    }
    trips
}

fn dense_to_neg_triplets(mat: &DMatrix<f64>) -> sdp::SymTriplets {
    dense_to_triplets_sym(mat)
        .into_iter()
        .map(|(r, c, v)| (r, c, -v))
        .collect()
}

/// Memory guard for seeding grids; above this many points a deterministic
/// uniform sample of the same size replaces the full grid.
const CA_SEED_CAP: u128 = 1_000_000;
/// Fixed seed for the sampled fallback, keeping the estimate reproducible.
const CA_FALLBACK_SEED: u64 = 0x0ca_5eed;
const PATTERN_SEARCH_ITERS: usize = 200;
const PATTERN_SEARCH_TOL: f64 = 1e-10;
const MULTISTART_COUNT: usize = 32;

/// Details of a decay-constant estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaEstimate {
    pub c_a: f64,
    /// max of |G Psi(zeta)|^2 over the state box as found by the search.
    pub inner_max: f64,
    pub argmax: Vec<f64>,
    /// Lipschitz inflation applied in sound mode (zero otherwise).
    pub inflation: f64,
    /// Whether the seeds came from the full grid or the sampled fallback.
    pub seeded_by_grid: bool,
}

/// Estimates `c_a = (1 + 1/varpi) lambda_max(P) max |G Psi(zeta)|^2` over the
/// state box by grid-seeded multi-start pattern search.
///
/// In sound mode the inner maximum is inflated by `L_g * delta`, where `L_g`
/// is a sampled-gradient Lipschitz estimate of the inner objective and
/// `delta` the grid half-diagonal; the estimate is heuristic, not certified.
pub fn compute_ca(
    p: &DMatrix<f64>,
    g_mat: &DMatrix<f64>,
    aug_dict: &Dictionary,
    state_box: &BoxRegion,
    varpi: f64,
    grid_res: usize,
    sound: bool,
) -> Result<CaEstimate> {
    if !(varpi > 0.0) {
        return Err(Error::HorizonParams(format!(
            "varpi = {varpi} must be positive"
        )));
    }
    let inner = compute_inner_max(g_mat, aug_dict, state_box, grid_res, sound)?;
    Ok(finish_ca(p, varpi, inner))
}

/// Scales a metric-independent inner maximum into the decay constant.
pub fn finish_ca(p: &DMatrix<f64>, varpi: f64, inner: CaEstimate) -> CaEstimate {
    let lambda_max = symmetric_max_eig(p);
    CaEstimate {
        c_a: (1.0 + 1.0 / varpi) * lambda_max * (inner.inner_max + inner.inflation),
        ..inner
    }
}

/// The metric-independent part of the decay constant:
/// `max |G Psi(zeta)|^2` over the state box (grid-seeded multi-start
/// pattern search). `c_a` in the returned estimate is zero.
pub fn compute_inner_max(
    g_mat: &DMatrix<f64>,
    aug_dict: &Dictionary,
    state_box: &BoxRegion,
    grid_res: usize,
    sound: bool,
) -> Result<CaEstimate> {
    let tail = g_mat.ncols();
    if tail == 0 || g_mat.iter().all(|v| *v == 0.0) {
        return Ok(CaEstimate {
            c_a: 0.0,
            inner_max: 0.0,
            argmax: state_box.center(),
            inflation: 0.0,
            seeded_by_grid: true,
        });
    }
    let inner = |zeta: &[f64]| -> Result<f64> {
        let psi = aug_dict.eval_nonlinear(zeta, &[])?;
        let mut acc = 0.0;
        for r in 0..g_mat.nrows() {
            let mut row = 0.0;
            for c in 0..tail {
                row += g_mat[(r, c)] * psi[c];
            }
            acc += row * row;
        }
        Ok(acc)
    };
    maximize_over_box(&inner, state_box, grid_res, sound)
}

/// The exact decay value `max (1 + 1/varpi) Psi^T G^T P G Psi` over the
/// state box, with `c_a` filled in directly (no eigenvalue relaxation).
///
/// Always at most the eigenvalue-bound value, and sufficient for the
/// decrement condition by the same proof chain: it is exactly the quantity
/// the robust program bounds.
pub fn compute_ca_direct(
    p: &DMatrix<f64>,
    g_mat: &DMatrix<f64>,
    aug_dict: &Dictionary,
    state_box: &BoxRegion,
    varpi: f64,
    grid_res: usize,
    sound: bool,
) -> Result<CaEstimate> {
    if !(varpi > 0.0) {
        return Err(Error::HorizonParams(format!(
            "varpi = {varpi} must be positive"
        )));
    }
    let tail = g_mat.ncols();
    if tail == 0 || g_mat.iter().all(|v| *v == 0.0) {
        return Ok(CaEstimate {
            c_a: 0.0,
            inner_max: 0.0,
            argmax: state_box.center(),
            inflation: 0.0,
            seeded_by_grid: true,
        });
    }
    let factor = 1.0 + 1.0 / varpi;
    let weighted = |zeta: &[f64]| -> Result<f64> {
        let psi = aug_dict.eval_nonlinear(zeta, &[])?;
        let psi = DVector::from_column_slice(&psi);
        let w = g_mat * psi;
        Ok(factor * (w.transpose() * p * &w)[(0, 0)])
    };
    let est = maximize_over_box(&weighted, state_box, grid_res, sound)?;
    Ok(CaEstimate {
        c_a: est.inner_max + est.inflation,
        ..est
    })
}

/// Grid-seeded multi-start pattern-search maximization over a box; in
/// sound mode the result carries a sampled-gradient Lipschitz inflation.
fn maximize_over_box(
    inner: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    state_box: &BoxRegion,
    grid_res: usize,
    sound: bool,
) -> Result<CaEstimate> {
    let dim = state_box.dim();
    let grid_res = grid_res.max(2);

    let total_points = (grid_res as u128).checked_pow(dim as u32);
    let seeded_by_grid = matches!(total_points, Some(t) if t <= CA_SEED_CAP);
    let seeds: Vec<Vec<f64>> = if seeded_by_grid {
        grid_points(state_box, &vec![grid_res; dim])
    } else {
        let mut rng = ChaCha12Rng::seed_from_u64(CA_FALLBACK_SEED);
        (0..CA_SEED_CAP as usize)
            .map(|_| state_box.sample_uniform(&mut rng))
            .collect()
    };

    let mut scored: Vec<(f64, usize)> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, z)| Ok((inner(z)?, i)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let widths = state_box.widths();
    let cell: Vec<f64> = widths
        .iter()
        .map(|w| w / (grid_res as f64 - 1.0))
        .collect();

    let mut starts: Vec<Vec<f64>> = scored
        .iter()
        .take(MULTISTART_COUNT)
        .map(|(_, i)| seeds[*i].clone())
        .collect();
    starts.push(state_box.center());

    let refined: Vec<(f64, Vec<f64>)> = starts
        .par_iter()
        .map(|start| pattern_search(&inner, start, state_box, &cell))
        .collect::<Result<Vec<_>>>()?;
    let (mut inner_max, mut argmax) = (f64::NEG_INFINITY, state_box.center());
    for (v, z) in refined {
        if v > inner_max {
            inner_max = v;
            argmax = z;
        }
    }

    let mut inflation = 0.0;
    if sound {
        let delta = 0.5 * cell.iter().map(|h| h * h).sum::<f64>().sqrt();
        let stride = (seeds.len() / 4096).max(1);
        let grad_samples: Vec<&Vec<f64>> = seeds.iter().step_by(stride).collect();
        let lip = grad_samples
            .par_iter()
            .map(|z| {
                let mut sq = 0.0;
                for axis in 0..dim {
                    let h = 1e-6 * widths[axis].max(1e-9);
                    let mut zp = (*z).clone();
                    let mut zm = (*z).clone();
                    zp[axis] = (zp[axis] + h).min(state_box.upper[axis]);
                    zm[axis] = (zm[axis] - h).max(state_box.lower[axis]);
                    let span = zp[axis] - zm[axis];
                    if span > 0.0 {
                        let g = (inner(&zp)? - inner(&zm)?) / span;
                        sq += g * g;
                    }
                }
                Ok(sq.sqrt())
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0f64, f64::max);
        inflation = lip * delta;
    }

    Ok(CaEstimate {
        c_a: 0.0,
        inner_max,
        argmax,
        inflation,
        seeded_by_grid,
    })
}

fn pattern_search(
    f: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    start: &[f64],
    bounds: &BoxRegion,
    initial_step: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let mut x = start.to_vec();
    let mut best = f(&x)?;
    let mut step: Vec<f64> = initial_step.to_vec();
    for _ in 0..PATTERN_SEARCH_ITERS {
        if step.iter().all(|s| *s < PATTERN_SEARCH_TOL) {
            break;
        }
        let mut improved = false;
        for axis in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut trial = x.clone();
                trial[axis] =
                    (trial[axis] + sign * step[axis]).clamp(bounds.lower[axis], bounds.upper[axis]);
                let v = f(&trial)?;
                if v > best {
                    best = v;
                    x = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            for s in &mut step {
                *s *= 0.5;
            }
        }
    }
    Ok((best, x))
}

/// All points of the uniform grid with the given per-axis counts
/// (endpoints included).
pub(crate) fn grid_points(b: &BoxRegion, counts: &[usize]) -> Vec<Vec<f64>> {
    let dim = b.dim();
    let axes: Vec<Vec<f64>> = (0..dim)
        .map(|i| linspace(b.lower[i], b.upper[i], counts[i]))
        .collect();
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    loop {
        out.push((0..dim).map(|i| axes[i][idx[i]]).collect());
        let mut axis = 0;
        loop {
            idx[axis] += 1;
            if idx[axis] < counts[axis] {
                break;
            }
            idx[axis] = 0;
            axis += 1;
            if axis == dim {
                return out;
            }
        }
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..count)
        .map(|i| lo + (hi - lo) * (i as f64) / ((count - 1) as f64))
        .collect()
}

/// Guard for vertex enumeration.
const VERTEX_LIMIT: u64 = 1 << 20;

/// Optimized level sets: `eta_a` is the exact maximum of the barrier over
/// the initial union (vertex enumeration; the maximum of a convex quadratic
/// over a box sits at a vertex), `gamma_a` the exact minimum over the unsafe
/// union (box-constrained convex QP, minimum over boxes).
pub fn compute_levels(
    p: &DMatrix<f64>,
    initial_boxes: &[BoxRegion],
    unsafe_boxes: &[BoxRegion],
) -> Result<(f64, f64)> {
    let eta = initial_boxes
        .iter()
        .map(|b| vertex_max_quadratic(p, b))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let gamma = unsafe_boxes
        .iter()
        .map(|b| box_qp_min(p, b))
        .fold(f64::INFINITY, f64::min);
    Ok((eta, gamma))
}

/// The always-valid conservative levels
/// `eta_a = lambda_max(P) max |zeta|^2` over the initial union and
/// `gamma_a = lambda_min(P) min |zeta|^2` over the unsafe union, both exact
/// (vertex maximum; separable clamp minimum).
pub fn compute_levels_conservative(
    p: &DMatrix<f64>,
    initial_boxes: &[BoxRegion],
    unsafe_boxes: &[BoxRegion],
) -> Result<(f64, f64)> {
    let lambda_max = symmetric_max_eig(p);
    let lambda_min = symmetric_min_eig(p);
    let max_norm_sq = initial_boxes
        .iter()
        .map(|b| {
            b.lower
                .iter()
                .zip(&b.upper)
                .map(|(lo, hi)| lo.abs().max(hi.abs()).powi(2))
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let min_norm_sq = unsafe_boxes
        .iter()
        .map(|b| {
            b.lower
                .iter()
                .zip(&b.upper)
                .map(|(lo, hi)| {
                    let v = 0.0f64.clamp(*lo, *hi);
                    v * v
                })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    Ok((lambda_max * max_norm_sq, lambda_min * min_norm_sq))
}

fn vertex_max_quadratic(p: &DMatrix<f64>, b: &BoxRegion) -> Result<f64> {
    argmax_vertex_quadratic(p, b).map(|v| quad_value(p, &v))
}

/// The vertex of the box maximizing the quadratic form.
fn argmax_vertex_quadratic(p: &DMatrix<f64>, b: &BoxRegion) -> Result<Vec<f64>> {
    let dim = b.dim();
    if dim >= 64 || (1u64 << dim) > VERTEX_LIMIT {
        return Err(Error::VertexGuard {
            vertices: 1u128 << dim.min(127),
            limit: VERTEX_LIMIT,
        });
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_vertex = b.lower.clone();
    let mut vertex = vec![0.0; dim];
    for mask in 0u64..(1u64 << dim) {
        for (i, v) in vertex.iter_mut().enumerate() {
            *v = if mask >> i & 1 == 1 {
                b.upper[i]
            } else {
                b.lower[i]
            };
        }
        let z = DVector::from_column_slice(&vertex);
        let val = (z.transpose() * p * &z)[(0, 0)];
        if val > best {
            best = val;
            best_vertex.copy_from_slice(&vertex);
        }
    }
    Ok(best_vertex)
}

const BOX_QP_TOL: f64 = 1e-10;
const BOX_QP_MAX_ITERS: usize = 200_000;

/// Minimum of `zeta^T P zeta` over a box by accelerated projected gradient
/// descent with adaptive restart.
fn box_qp_min(p: &DMatrix<f64>, b: &BoxRegion) -> f64 {
    quad_value(p, &box_qp_argmin(p, b))
}

/// The minimizer of `zeta^T P zeta` over a box.
fn box_qp_argmin(p: &DMatrix<f64>, b: &BoxRegion) -> Vec<f64> {
    let lambda_max = symmetric_max_eig(p).max(f64::MIN_POSITIVE);
    let step = 1.0 / (2.0 * lambda_max);
    let value = |x: &DVector<f64>| (x.transpose() * p * x)[(0, 0)];
    let mut x = DVector::from_column_slice(&b.center());
    let mut momentum = x.clone();
    let mut t_prev = 1.0f64;
    let mut f_prev = value(&x);
    for _ in 0..BOX_QP_MAX_ITERS {
        let grad = 2.0 * (p * &momentum);
        let mut next = &momentum - step * grad;
        b.clamp(next.as_mut_slice());
        let f_next = value(&next);
        if f_next > f_prev {
            // restart acceleration on non-monotone steps
            momentum = x.clone();
            t_prev = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_prev * t_prev).sqrt());
        let beta = (t_prev - 1.0) / t_next;
        let delta = &next - &x;
        let shift = delta.amax();
        momentum = &next + beta * delta;
        b.clamp(momentum.as_mut_slice());
        x = next;
        f_prev = f_next;
        t_prev = t_next;
        if shift <= BOX_QP_TOL {
            break;
        }
    }
    x.as_slice().to_vec()
}

/// Largest integer horizon strictly below `(gamma_a - eta_a) / c_a`;
/// infinite when `c_a = 0`.
pub fn horizon(eta_a: f64, gamma_a: f64, c_a: f64) -> Result<Horizon> {
    if !eta_a.is_finite() || !gamma_a.is_finite() || !c_a.is_finite() || c_a < 0.0 {
        return Err(Error::HorizonParams(format!(
            "eta_a = {eta_a}, gamma_a = {gamma_a}, c_a = {c_a}"
        )));
    }
    if gamma_a <= eta_a {
        return Err(Error::LevelSeparation { eta_a, gamma_a });
    }
    if c_a == 0.0 {
        return Ok(Horizon::Infinite);
    }
    let bound = (gamma_a - eta_a) / c_a;
    let floor = bound.floor();
    let t = if bound > floor { floor } else { floor - 1.0 };
    if t < 1.0 {
        return Err(Error::DecayTooLarge { bound });
    }
    Ok(Horizon::Finite(t as u64))
}

/// Controller gain `K = I_data [Y P | Z2]`, column-partitioned into the
/// linear block and the nonlinear block of the dictionary.
pub fn build_controller(
    inputs: &DMatrix<f64>,
    y: &DMatrix<f64>,
    p: &DMatrix<f64>,
    z2: &DMatrix<f64>,
) -> DynamicController {
    let z1 = y * p;
    let samples = inputs.ncols();
    let d = z1.ncols();
    let tail = z2.ncols();
    let mut z = DMatrix::zeros(samples, d + tail);
    z.view_mut((0, 0), (samples, d)).copy_from(&z1);
    if tail > 0 {
        z.view_mut((0, d), (samples, tail)).copy_from(z2);
    }
    DynamicController { gain: inputs * z }
}

/// `|S+ Z1 zeta + S+ Z2 Psi(zeta) - (A F(zeta) + B theta)|` with
/// `theta = K F(zeta)`; exercises the closed-loop data-based representation
/// against the oracle (test and audit use only).
pub fn closed_loop_residual(
    aug: &AugmentedModel,
    virtual_gain: &DMatrix<f64>,
    s_plus: &DMatrix<f64>,
    z1: &DMatrix<f64>,
    z2: &DMatrix<f64>,
    zeta: &[f64],
) -> Result<f64> {
    let f = aug.aug_dictionary.eval(zeta, &[])?;
    let theta = apply_gain(virtual_gain, &f);
    let truth = aug.step(zeta, &theta)?;

    let d = aug.dim();
    let psi = &f[d..];
    let zeta_vec = DVector::from_column_slice(zeta);
    let mut lhs = s_plus * (z1 * zeta_vec);
    if z2.ncols() > 0 {
        let psi_vec = DVector::from_column_slice(psi);
        lhs += s_plus * (z2 * psi_vec);
    }
    let mut err = 0.0;
    for i in 0..d {
        let e = lhs[i] - truth[i];
        err += e * e;
    }
    Ok(err.sqrt())
}

/// Level-set computation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelMode {
    /// Exact optimization of the barrier over the regions.
    Optimized,
    /// The eigenvalue-bound formulas.
    Conservative,
}

/// Knobs of the synthesis pipeline.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub varpi: f64,
    pub grid_res: usize,
    pub sound: bool,
    pub level_mode: LevelMode,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            varpi: 0.01,
            grid_res: 51,
            sound: false,
            level_mode: LevelMode::Optimized,
        }
    }
}

/// Everything produced by one synthesis run.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub certificate: Certificate,
    pub controller: DynamicController,
    pub z2: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub pi: DMatrix<f64>,
    pub kappa: f64,
    pub ca_estimate: CaEstimate,
    pub s_plus_z2_norm: f64,
    pub equality_residual: f64,
    pub lmi_min_eig: f64,
    /// Which metric normalization produced the kept certificate.
    pub metric_strategy: String,
}

/// Runs the full certificate pipeline on collected data.
///
/// Two metric normalizations are synthesized and the one with the longer
/// horizon is kept: the identity-capped conditioning optimum, and a
/// level-optimized metric that reshapes it for the configured regions
/// (which dominates when the region spec is anisotropic). Both are
/// evaluated with the same data, inner maximum, and level computation, so
/// the choice is deterministic.
pub fn run_pipeline(
    aug: &AugmentedModel,
    traj: &TrajectoryData,
    dm: &DataMatrices,
    opts: &SynthOptions,
) -> Result<SynthOutput> {
    let s_plus = &traj.shifted;
    let z2 = solve_z2(dm, s_plus)?;
    let g_mat = s_plus * &z2;
    let inner = compute_inner_max(
        &g_mat,
        &aug.aug_dictionary,
        &aug.state_box,
        opts.grid_res,
        opts.sound,
    )?;

    let mut candidates: Vec<(String, BarrierSolution)> = Vec::new();
    let mut first_error: Option<Error> = None;
    match solve_barrier(dm, s_plus, opts.varpi) {
        Ok(b) => candidates.push(("kappa_identity".into(), b)),
        Err(e) => first_error = Some(e),
    }
    if let Some((_, kmax)) = candidates.first() {
        match improve_levels_fixed_controller(
            dm,
            s_plus,
            opts.varpi,
            kmax,
            &aug.initial_boxes,
            &aug.unsafe_boxes,
        ) {
            Ok(b) => candidates.push(("level_reshaped".into(), b)),
            Err(Error::SdpInfeasible { .. }) | Err(Error::SdpFailure { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if candidates.is_empty() {
        return Err(first_error.unwrap_or(Error::SdpInfeasible {
            context: "no barrier metric candidate solvable".into(),
        }));
    }

    let mut best: Option<(Horizon, String, BarrierSolution, CaEstimate, f64, f64)> = None;
    let mut first_level_error: Option<Error> = None;
    for (name, barrier) in candidates {
        let eig_bound = finish_ca(&barrier.p, opts.varpi, inner.clone());
        let direct = compute_ca_direct(
            &barrier.p,
            &g_mat,
            &aug.aug_dictionary,
            &aug.state_box,
            opts.varpi,
            opts.grid_res,
            opts.sound,
        )?;
        // the direct maximum bounds the same proof term without the
        // lambda_max relaxation, so the smaller value is always valid
        let ca_estimate = if direct.c_a <= eig_bound.c_a {
            direct
        } else {
            eig_bound
        };
        let levels = match opts.level_mode {
            LevelMode::Optimized => {
                compute_levels(&barrier.p, &aug.initial_boxes, &aug.unsafe_boxes)
            }
            LevelMode::Conservative => {
                compute_levels_conservative(&barrier.p, &aug.initial_boxes, &aug.unsafe_boxes)
            }
        };
        let (eta_a, gamma_a) = match levels {
            Ok(l) => l,
            Err(e) => return Err(e),
        };
        match horizon(eta_a, gamma_a, ca_estimate.c_a) {
            Ok(h) => {
                let better = match &best {
                    None => true,
                    Some((incumbent, ..)) => match (h, incumbent) {
                        (Horizon::Infinite, Horizon::Infinite) => false,
                        (Horizon::Infinite, _) => true,
                        (_, Horizon::Infinite) => false,
                        (Horizon::Finite(a), Horizon::Finite(b)) => a > *b,
                    },
                };
                if better {
                    best = Some((h, name, barrier, ca_estimate, eta_a, gamma_a));
                }
            }
            Err(e @ Error::LevelSeparation { .. }) | Err(e @ Error::DecayTooLarge { .. }) => {
                if first_level_error.is_none() {
                    first_level_error = Some(e);
                }
            }
            Err(e) => return Err(e),
        }
    }
    let (horizon, metric_strategy, barrier, ca_estimate, eta_a, gamma_a) = match best {
        Some(b) => b,
        None => {
            return Err(first_level_error.unwrap_or(Error::SdpInfeasible {
                context: "no candidate yields separated level sets".into(),
            }))
        }
    };

    let controller = build_controller(&traj.inputs, &barrier.y, &barrier.p, &z2);
    Ok(SynthOutput {
        certificate: Certificate {
            p: barrier.p,
            eta_a,
            gamma_a,
            c_a: ca_estimate.c_a,
            varpi: opts.varpi,
            horizon,
        },
        controller,
        z2: z2.clone(),
        y: barrier.y,
        pi: barrier.pi,
        kappa: barrier.kappa,
        s_plus_z2_norm: singular_norm(&g_mat),
        equality_residual: barrier.equality_residual,
        lmi_min_eig: barrier.lmi_min_eig,
        ca_estimate,
        metric_strategy,
    })
}

pub(crate) fn singular_norm(mat: &DMatrix<f64>) -> f64 {
    if mat.ncols() == 0 || mat.nrows() == 0 {
        return 0.0;
    }
    mat.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}
