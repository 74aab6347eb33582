//! Standard-form semidefinite programs, problem builders, and the solver
//! contract.
//!
//! A problem is `minimize c^T y` subject to affine equalities, affine
//! scalar bounds, and PSD blocks `F_0 + sum_i y_i F_i >= 0` with
//! triplet-sparse `F_i`. Solving is delegated to the Clarabel interior-point
//! solver; the standard form below is the module contract and also the JSON
//! wire format for external-solver debugging.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine scalar `constant + sum coeffs_i * y_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinTerm {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinTerm {
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.constant
            + self
                .coeffs
                .iter()
                .map(|(i, v)| v * y[*i])
                .sum::<f64>()
    }
}

/// Symmetric-matrix triplets; each unordered index pair appears once,
/// duplicates accumulate.
pub type SymTriplets = Vec<(usize, usize, f64)>;

/// Affine symmetric-matrix map `F_0 + sum_i y_i F_i` required PSD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdBlock {
    pub dim: usize,
    pub f0: SymTriplets,
    pub terms: Vec<(usize, SymTriplets)>,
}

impl PsdBlock {
    /// Dense evaluation of the block at `y`.
    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        let mut mat = DMatrix::zeros(self.dim, self.dim);
        let mut add = |trips: &SymTriplets, scale: f64| {
            for &(r, c, v) in trips {
                mat[(r, c)] += scale * v;
                if r != c {
                    mat[(c, r)] += scale * v;
                }
            }
        };
        add(&self.f0, 1.0);
        for (i, trips) in &self.terms {
            add(trips, y[*i]);
        }
        mat
    }
}

/// Standard-form problem: `minimize objective^T y` subject to
/// `equalities = 0`, `nonneg >= 0`, and every PSD block PSD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub dim: usize,
    pub objective: Vec<f64>,
    pub equalities: Vec<LinTerm>,
    pub nonneg: Vec<LinTerm>,
    pub psd_blocks: Vec<PsdBlock>,
}

/// Versioned JSON wrapper for external-solver debugging.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpProblemFile {
    pub format_version: u32,
    pub problem: SdpProblem,
}

impl SdpProblem {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SdpProblemFile {
            format_version: 1,
            problem: self.clone(),
        })
        .expect("SDP problems are always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SdpProblemFile =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(file.problem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpSolution {
    pub y: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    /// Minimum eigenvalue over all PSD blocks at `y` (negative = violation).
    pub psd_violation: f64,
    pub max_equality_residual: f64,
    pub solver_status: String,
    pub iterations: u32,
}

fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Index of entry (r, c), r <= c, in the column-stacked upper triangle.
fn svec_index(r: usize, c: usize) -> usize {
    debug_assert!(r <= c);
    c * (c + 1) / 2 + r
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

struct TripletAccumulator {
    nrows: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl TripletAccumulator {
    fn new(nrows: usize, ncols: usize) -> Self {
        TripletAccumulator {
            nrows,
            cols: vec![Vec::new(); ncols],
        }
    }

    fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows);
        if value != 0.0 {
            self.cols[col].push((row, value));
        }
    }

    fn into_csc(mut self) -> CscMatrix<f64> {
        let mut colptr = Vec::with_capacity(self.cols.len() + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for col in &mut self.cols {
            col.sort_unstable_by_key(|(r, _)| *r);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
            for &(r, v) in col.iter() {
                match merged.last_mut() {
                    Some((lr, lv)) if *lr == r => *lv += v,
                    _ => merged.push((r, v)),
                }
            }
            for (r, v) in merged {
                rowval.push(r);
                nzval.push(v);
            }
            colptr.push(rowval.len());
        }
        CscMatrix::new(self.nrows, self.cols.len(), colptr, rowval, nzval)
    }
}

/// Solves the problem to the requested tolerance.
///
/// Deterministic for identical inputs. `status = Optimal` guarantees the PSD
/// violation is no worse than -1e-7.
pub fn solve(problem: &SdpProblem, tol: f64) -> Result<SdpSolution> {
    let d = problem.dim;
    if problem.objective.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: problem.objective.len(),
            context: "SDP objective length".into(),
        });
    }

    let n_eq = problem.equalities.len();
    let n_in = problem.nonneg.len();
    let n_psd_rows: usize = problem.psd_blocks.iter().map(|b| svec_len(b.dim)).sum();
    let total_rows = n_eq + n_in + n_psd_rows;

    let mut acc = TripletAccumulator::new(total_rows, d);
    let mut b = vec![0.0; total_rows];
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    // equalities: coeffs^T y = -constant  (ZeroCone)
    for (row, eq) in problem.equalities.iter().enumerate() {
        for &(i, v) in &eq.coeffs {
            acc.push(row, i, v);
        }
        b[row] = -eq.constant;
    }
    if n_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(n_eq));
    }

    // scalar bounds: s = constant + coeffs^T y >= 0
    for (k, g) in problem.nonneg.iter().enumerate() {
        let row = n_eq + k;
        for &(i, v) in &g.coeffs {
            acc.push(row, i, -v);
        }
        b[row] = g.constant;
    }
    if n_in > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(n_in));
    }

    // PSD blocks: s = svec(F0 + sum y_i F_i) in the PSD triangle cone
    let mut offset = n_eq + n_in;
    for block in &problem.psd_blocks {
        for &(r, c, v) in &block.f0 {
            let (lo, hi) = if r <= c { (r, c) } else { (c, r) };
            let scale = if lo == hi { 1.0 } else { SQRT2 };
            b[offset + svec_index(lo, hi)] += scale * v;
        }
        for (i, trips) in &block.terms {
            for &(r, c, v) in trips {
                let (lo, hi) = if r <= c { (r, c) } else { (c, r) };
                let scale = if lo == hi { 1.0 } else { SQRT2 };
                acc.push(offset + svec_index(lo, hi), *i, -scale * v);
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(block.dim));
        offset += svec_len(block.dim);
    }

    let a = acc.into_csc();
    let p = CscMatrix::zeros((d, d));
    let settings = DefaultSettingsBuilder::default()
        .verbose(std::env::var("DCBC_SDP_VERBOSE").is_ok())
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .max_iter(500)
        .build()
        .map_err(|e| Error::SdpFailure {
            status: "settings".into(),
            context: e.to_string(),
        })?;

    let mut solver =
        DefaultSolver::new(&p, &problem.objective, &a, &b, &cones, settings).map_err(|e| {
            Error::SdpFailure {
                status: "setup".into(),
                context: format!("{e:?}"),
            }
        })?;
    solver.solve();

    let raw_status = solver.solution.status;
    let status = match raw_status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        _ => SolveStatus::NumericalFailure,
    };

    let y = solver.solution.x.clone();
    let mut psd_violation = f64::INFINITY;
    let mut max_equality_residual: f64 = 0.0;
    if status == SolveStatus::Optimal {
        for block in &problem.psd_blocks {
            let mat = block.eval(&y);
            let eigs = mat.symmetric_eigen();
            let min_eig = eigs.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            psd_violation = psd_violation.min(min_eig);
        }
        for eq in &problem.equalities {
            max_equality_residual = max_equality_residual.max(eq.eval(&y).abs());
        }
        if psd_violation < -1e-7 {
            return Ok(SdpSolution {
                y,
                objective: solver.solution.obj_val,
                status: SolveStatus::NumericalFailure,
                psd_violation,
                max_equality_residual,
                solver_status: format!("{raw_status:?} (PSD violation {psd_violation:.3e})"),
                iterations: solver.solution.iterations,
            });
        }
    }
    if problem.psd_blocks.is_empty() {
        psd_violation = 0.0;
    }

    Ok(SdpSolution {
        y,
        objective: solver.solution.obj_val,
        status,
        psd_violation,
        max_equality_residual,
        solver_status: format!("{raw_status:?}"),
        iterations: solver.solution.iterations,
    })
}

/// Variable layout of the spectral-norm problem: `Z2` column-major, then the
/// epigraph scalar `t`.
pub struct SpectralNormLayout {
    pub samples: usize,
    pub tail: usize,
}

impl SpectralNormLayout {
    pub fn z_index(&self, k: usize, j: usize) -> usize {
        j * self.samples + k
    }

    pub fn t_index(&self) -> usize {
        self.samples * self.tail
    }

    pub fn dim(&self) -> usize {
        self.samples * self.tail + 1
    }
}

/// `minimize ||S+ Z2||` (induced 2-norm epigraph) subject to
/// `M Z2 = [0; I]`.
pub fn build_spectral_norm_problem(
    s_plus: &DMatrix<f64>,
    m_mat: &DMatrix<f64>,
    n: usize,
    m: usize,
    n_terms: usize,
) -> Result<(SdpProblem, SpectralNormLayout)> {
    let d = n + m;
    let samples = m_mat.ncols();
    if m_mat.nrows() != n_terms {
        return Err(Error::Dimension {
            expected: n_terms,
            got: m_mat.nrows(),
            context: "M row count".into(),
        });
    }
    if s_plus.nrows() != d || s_plus.ncols() != samples {
        return Err(Error::Dimension {
            expected: d * samples,
            got: s_plus.nrows() * s_plus.ncols(),
            context: "S+ shape".into(),
        });
    }
    let tail = n_terms - d;
    let layout = SpectralNormLayout { samples, tail };

    let mut objective = vec![0.0; layout.dim()];
    objective[layout.t_index()] = 1.0;

    let mut equalities = Vec::with_capacity(n_terms * tail);
    for i in 0..n_terms {
        for j in 0..tail {
            let rhs = if i == d + j { 1.0 } else { 0.0 };
            let coeffs = (0..samples)
                .filter(|k| m_mat[(i, *k)] != 0.0)
                .map(|k| (layout.z_index(k, j), m_mat[(i, k)]))
                .collect();
            equalities.push(LinTerm {
                coeffs,
                constant: -rhs,
            });
        }
    }

    // [t I_d, S+ Z2; *, t I_tail] >= 0 is the epigraph of the induced 2-norm
    let block_dim = d + tail;
    let mut terms: Vec<(usize, SymTriplets)> = Vec::new();
    let t_diag: SymTriplets = (0..block_dim).map(|i| (i, i, 1.0)).collect();
    terms.push((layout.t_index(), t_diag));
    for j in 0..tail {
        for k in 0..samples {
            let trips: SymTriplets = (0..d)
                .filter(|r| s_plus[(*r, k)] != 0.0)
                .map(|r| (r, d + j, s_plus[(r, k)]))
                .collect();
            if !trips.is_empty() {
                terms.push((layout.z_index(k, j), trips));
            }
        }
    }

    Ok((
        SdpProblem {
            dim: layout.dim(),
            objective,
            equalities,
            nonneg: vec![],
            psd_blocks: vec![PsdBlock {
                dim: block_dim,
                f0: vec![],
                terms,
            }],
        },
        layout,
    ))
}

/// Variable layout of the barrier LMI problem: `Pi` upper triangle
/// column-stacked, then `Y` column-major, then `kappa`.
pub struct BarrierLayout {
    pub aug_dim: usize,
    pub samples: usize,
}

impl BarrierLayout {
    pub fn pi_index(&self, r: usize, c: usize) -> usize {
        let (lo, hi) = if r <= c { (r, c) } else { (c, r) };
        svec_index(lo, hi)
    }

    pub fn pi_len(&self) -> usize {
        svec_len(self.aug_dim)
    }

    pub fn y_index(&self, k: usize, j: usize) -> usize {
        self.pi_len() + j * self.samples + k
    }

    pub fn kappa_index(&self) -> usize {
        self.pi_len() + self.samples * self.aug_dim
    }

    pub fn dim(&self) -> usize {
        self.kappa_index() + 1
    }
}

/// Minimum value enforced for the conditioning variable `kappa`.
pub const KAPPA_MIN: f64 = 1e-6;

/// The barrier LMI: find `Pi > 0`, `Y` with `M Y = [Pi; 0]` and
/// `[Pi/(1+varpi), S+ Y; *, Pi] >= 0`, maximizing `kappa` with
/// `kappa I <= Pi <= I`.
///
/// The upper cap `Pi <= I` pins the scale: the constraint set is positively
/// homogeneous in `(Pi, Y, kappa)`, so kappa-maximization is unbounded
/// without it, and every certificate quantity downstream is scale-invariant.
pub fn build_barrier_lmi_problem(
    s_plus: &DMatrix<f64>,
    m_mat: &DMatrix<f64>,
    varpi: f64,
) -> Result<(SdpProblem, BarrierLayout)> {
    if !(varpi > 0.0) {
        return Err(Error::HorizonParams(format!(
            "varpi = {varpi} must be positive"
        )));
    }
    let d = s_plus.nrows();
    let samples = s_plus.ncols();
    let n_terms = m_mat.nrows();
    if m_mat.ncols() != samples {
        return Err(Error::Dimension {
            expected: samples,
            got: m_mat.ncols(),
            context: "M column count".into(),
        });
    }
    let layout = BarrierLayout {
        aug_dim: d,
        samples,
    };

    let mut objective = vec![0.0; layout.dim()];
    objective[layout.kappa_index()] = -1.0; // maximize kappa

    // M Y = [Pi; 0]
    let mut equalities = Vec::with_capacity(n_terms * d);
    for i in 0..n_terms {
        for j in 0..d {
            let mut coeffs: Vec<(usize, f64)> = (0..samples)
                .filter(|k| m_mat[(i, *k)] != 0.0)
                .map(|k| (layout.y_index(k, j), m_mat[(i, k)]))
                .collect();
            if i < d {
                coeffs.push((layout.pi_index(i, j), -1.0));
            }
            equalities.push(LinTerm {
                coeffs,
                constant: 0.0,
            });
        }
    }

    // [Pi/(1+varpi), S+ Y; *, Pi] >= 0
    let scale = 1.0 / (1.0 + varpi);
    let mut lmi_terms: Vec<(usize, SymTriplets)> = Vec::new();
    for c in 0..d {
        for r in 0..=c {
            lmi_terms.push((
                layout.pi_index(r, c),
                vec![(r, c, scale), (d + r, d + c, 1.0)],
            ));
        }
    }
    for j in 0..d {
        for k in 0..samples {
            let trips: SymTriplets = (0..d)
                .filter(|r| s_plus[(*r, k)] != 0.0)
                .map(|r| (r, d + j, s_plus[(r, k)]))
                .collect();
            if !trips.is_empty() {
                lmi_terms.push((layout.y_index(k, j), trips));
            }
        }
    }
    let lmi_block = PsdBlock {
        dim: 2 * d,
        f0: vec![],
        terms: lmi_terms,
    };

    // Pi - kappa I >= 0
    let mut floor_terms: Vec<(usize, SymTriplets)> = Vec::new();
    for c in 0..d {
        for r in 0..=c {
            floor_terms.push((layout.pi_index(r, c), vec![(r, c, 1.0)]));
        }
    }
    floor_terms.push((
        layout.kappa_index(),
        (0..d).map(|i| (i, i, -1.0)).collect(),
    ));
    let floor_block = PsdBlock {
        dim: d,
        f0: vec![],
        terms: floor_terms,
    };

    // I - Pi >= 0 (scale normalization)
    let mut cap_terms: Vec<(usize, SymTriplets)> = Vec::new();
    for c in 0..d {
        for r in 0..=c {
            cap_terms.push((layout.pi_index(r, c), vec![(r, c, -1.0)]));
        }
    }
    let cap_block = PsdBlock {
        dim: d,
        f0: (0..d).map(|i| (i, i, 1.0)).collect(),
        terms: cap_terms,
    };

    Ok((
        SdpProblem {
            dim: layout.dim(),
            objective,
            equalities,
            nonneg: vec![LinTerm {
                coeffs: vec![(layout.kappa_index(), 1.0)],
                constant: -KAPPA_MIN,
            }],
            psd_blocks: vec![lmi_block, floor_block, cap_block],
        },
        layout,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScpMode {
    /// minimize `mu + c_a` with per-sample constraints `g_d - c_a <= mu`,
    /// `mu <= 0`.
    WithMu,
    /// minimize `c_a` with per-sample constraints `g_d <= c_a`.
    CaOnly,
}

/// Optional deterministic convex constraints added to the scenario program.
///
/// These do not change the scenario decision-variable count, so the sample
/// bound is unaffected; they pin the scale (trace) and keep the designed `P`
/// inside a shape band where the data LMI stays solvable for `Y`.
#[derive(Debug, Clone)]
pub struct ScpShape {
    /// Enforce `trace(P) = trace_target`.
    pub trace_target: Option<f64>,
    /// Enforce `P >= lower`.
    pub lower: Option<DMatrix<f64>>,
    /// Enforce `P <= upper`.
    pub upper: Option<DMatrix<f64>>,
}

impl ScpShape {
    pub fn none() -> Self {
        ScpShape {
            trace_target: None,
            lower: None,
            upper: None,
        }
    }
}

/// Variable layout of the scenario program: `P` upper triangle
/// column-stacked, then `c_a`, then (with_mu) `mu`.
pub struct ScpLayout {
    pub aug_dim: usize,
    pub mode: ScpMode,
}

impl ScpLayout {
    pub fn p_index(&self, r: usize, c: usize) -> usize {
        let (lo, hi) = if r <= c { (r, c) } else { (c, r) };
        svec_index(lo, hi)
    }

    pub fn p_len(&self) -> usize {
        svec_len(self.aug_dim)
    }

    pub fn ca_index(&self) -> usize {
        self.p_len()
    }

    pub fn mu_index(&self) -> Option<usize> {
        match self.mode {
            ScpMode::WithMu => Some(self.p_len() + 1),
            ScpMode::CaOnly => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.p_len() + 1 + usize::from(self.mode == ScpMode::WithMu)
    }
}

/// Minimum eigenvalue floor standing in for strict positive definiteness of
/// the scenario `P`.
pub const SCP_EIG_FLOOR: f64 = 1e-8;

/// Builds the scenario convex program over precomputed nonlinear images.
///
/// `psi_images[d]` is `Psi(zeta^d)`; the per-sample scalar constraint is
/// `(1 + 1/varpi) * (G psi)^T P (G psi) - c_a <= mu` (with-mu mode) or
/// `... <= c_a` (ca-only mode), with `G = S+ Z2`.
pub fn build_scp_problem(
    psi_images: &[Vec<f64>],
    g_mat: &DMatrix<f64>,
    varpi: f64,
    mode: ScpMode,
    shape: &ScpShape,
) -> Result<(SdpProblem, ScpLayout)> {
    if psi_images.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(varpi > 0.0) {
        return Err(Error::HorizonParams(format!(
            "varpi = {varpi} must be positive"
        )));
    }
    let d = g_mat.nrows();
    let tail = g_mat.ncols();
    let layout = ScpLayout { aug_dim: d, mode };
    let factor = 1.0 + 1.0 / varpi;

    let mut objective = vec![0.0; layout.dim()];
    objective[layout.ca_index()] = 1.0;
    if let Some(mu) = layout.mu_index() {
        objective[mu] = 1.0;
    }

    let mut nonneg = Vec::with_capacity(psi_images.len() + 2);
    for psi in psi_images {
        if psi.len() != tail {
            return Err(Error::Dimension {
                expected: tail,
                got: psi.len(),
                context: "Psi sample length".into(),
            });
        }
        // w = G psi
        let w: Vec<f64> = (0..d)
            .map(|r| (0..tail).map(|c| g_mat[(r, c)] * psi[c]).sum())
            .collect();
        // slack = c_a (+ mu) - factor * w^T P w >= 0
        let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(layout.p_len() + 2);
        for c in 0..d {
            for r in 0..=c {
                let q = if r == c {
                    w[r] * w[r]
                } else {
                    2.0 * w[r] * w[c]
                };
                if q != 0.0 {
                    coeffs.push((layout.p_index(r, c), -factor * q));
                }
            }
        }
        coeffs.push((layout.ca_index(), 1.0));
        if let Some(mu) = layout.mu_index() {
            coeffs.push((mu, 1.0));
        }
        nonneg.push(LinTerm {
            coeffs,
            constant: 0.0,
        });
    }
    nonneg.push(LinTerm {
        coeffs: vec![(layout.ca_index(), 1.0)],
        constant: 0.0,
    });
    if let Some(mu) = layout.mu_index() {
        nonneg.push(LinTerm {
            coeffs: vec![(mu, -1.0)],
            constant: 0.0,
        });
    }

    let mut equalities = Vec::new();
    if let Some(target) = shape.trace_target {
        equalities.push(LinTerm {
            coeffs: (0..d).map(|i| (layout.p_index(i, i), 1.0)).collect(),
            constant: -target,
        });
    }

    let mut psd_blocks = Vec::new();
    // P - floor I >= 0
    let p_terms = |sign: f64| -> Vec<(usize, SymTriplets)> {
        let mut terms = Vec::with_capacity(svec_len(d));
        for c in 0..d {
            for r in 0..=c {
                terms.push((layout.p_index(r, c), vec![(r, c, sign)]));
            }
        }
        terms
    };
    psd_blocks.push(PsdBlock {
        dim: d,
        f0: (0..d).map(|i| (i, i, -SCP_EIG_FLOOR)).collect(),
        terms: p_terms(1.0),
    });
    if let Some(lower) = &shape.lower {
        let f0 = dense_to_triplets_neg(lower);
        psd_blocks.push(PsdBlock {
            dim: d,
            f0,
            terms: p_terms(1.0),
        });
    }
    if let Some(upper) = &shape.upper {
        let f0 = dense_to_triplets(upper);
        psd_blocks.push(PsdBlock {
            dim: d,
            f0,
            terms: p_terms(-1.0),
        });
    }

    Ok((
        SdpProblem {
            dim: layout.dim(),
            objective,
            equalities,
            nonneg,
            psd_blocks,
        },
        layout,
    ))
}

fn dense_to_triplets(mat: &DMatrix<f64>) -> SymTriplets {
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

fn dense_to_triplets_neg(mat: &DMatrix<f64>) -> SymTriplets {
    dense_to_triplets(mat)
        .into_iter()
        .map(|(r, c, v)| (r, c, -v))
        .collect()
}

/// Extracts a symmetric matrix from svec-layout variables.
pub fn extract_symmetric(y: &[f64], offset: usize, dim: usize) -> DMatrix<f64> {
    let mut mat = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        for r in 0..=c {
            let v = y[offset + svec_index(r, c)];
            mat[(r, c)] = v;
            mat[(c, r)] = v;
        }
    }
    mat
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn epigraph_of_two_by_two_psd() {
        // minimize t s.t. [t 1; 1 t] >= 0  =>  t = 1
        let problem = SdpProblem {
            dim: 1,
            objective: vec![1.0],
            equalities: vec![],
            nonneg: vec![],
            psd_blocks: vec![PsdBlock {
                dim: 2,
                f0: vec![(0, 1, 1.0)],
                terms: vec![(0, vec![(0, 0, 1.0), (1, 1, 1.0)])],
            }],
        };
        let sol = solve(&problem, 1e-9).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.y[0], 1.0, epsilon = 1e-6);
        assert!(sol.psd_violation >= -1e-7);
    }

    #[test]
    fn eigenvalue_bound_maximization() {
        // maximize kappa s.t. I2 >= kappa I2  =>  kappa = 1
        let problem = SdpProblem {
            dim: 1,
            objective: vec![-1.0],
            equalities: vec![],
            nonneg: vec![],
            psd_blocks: vec![PsdBlock {
                dim: 2,
                f0: vec![(0, 0, 1.0), (1, 1, 1.0)],
                terms: vec![(0, vec![(0, 0, -1.0), (1, 1, -1.0)])],
            }],
        };
        let sol = solve(&problem, 1e-9).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.y[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        // Pi >= 0 with Pi = -I forced by equalities
        let layout_dim = 3; // 2x2 symmetric has 3 entries
        let problem = SdpProblem {
            dim: layout_dim,
            objective: vec![0.0; layout_dim],
            equalities: vec![
                LinTerm {
                    coeffs: vec![(0, 1.0)],
                    constant: 1.0,
                },
                LinTerm {
                    coeffs: vec![(2, 1.0)],
                    constant: 1.0,
                },
                LinTerm {
                    coeffs: vec![(1, 1.0)],
                    constant: 0.0,
                },
            ],
            nonneg: vec![],
            psd_blocks: vec![PsdBlock {
                dim: 2,
                f0: vec![],
                terms: vec![
                    (0, vec![(0, 0, 1.0)]),
                    (1, vec![(0, 1, 1.0)]),
                    (2, vec![(1, 1, 1.0)]),
                ],
            }],
        };
        let sol = solve(&problem, 1e-9).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn equality_residuals_within_contract() {
        let problem = SdpProblem {
            dim: 2,
            objective: vec![1.0, 0.0],
            equalities: vec![LinTerm {
                coeffs: vec![(0, 2.0), (1, 1.0)],
                constant: -3.0,
            }],
            nonneg: vec![
                LinTerm {
                    coeffs: vec![(0, 1.0)],
                    constant: 0.0,
                },
                LinTerm {
                    coeffs: vec![(1, 1.0)],
                    constant: 0.0,
                },
            ],
            psd_blocks: vec![],
        };
        let sol = solve(&problem, 1e-10).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.max_equality_residual <= 1e-7);
        assert_relative_eq!(sol.y[0], 0.0, epsilon = 1e-6);
        assert_relative_eq!(sol.y[1], 3.0, epsilon = 1e-6);
    }

    #[test]
    fn problem_json_round_trip() {
        let problem = SdpProblem {
            dim: 2,
            objective: vec![1.0, -0.5],
            equalities: vec![LinTerm {
                coeffs: vec![(0, 1.0)],
                constant: -1.0,
            }],
            nonneg: vec![LinTerm {
                coeffs: vec![(1, 2.0)],
                constant: 0.25,
            }],
            psd_blocks: vec![PsdBlock {
                dim: 2,
                f0: vec![(0, 1, 1.0)],
                terms: vec![(0, vec![(0, 0, 1.0)])],
            }],
        };
        let text = problem.to_json();
        let back = SdpProblem::from_json(&text).unwrap();
        assert_eq!(problem, back);
    }

    #[test]
    fn spectral_norm_with_zero_splus_is_zero() {
        let s_plus = DMatrix::zeros(2, 4);
        // M: 3 x 4 full row rank
        let m_mat = DMatrix::from_row_slice(
            3,
            4,
            &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.5],
        );
        let (problem, layout) = build_spectral_norm_problem(&s_plus, &m_mat, 1, 1, 3).unwrap();
        let sol = solve(&problem, 1e-9).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.y[layout.t_index()].abs() < 1e-6);
    }

    #[test]
    fn spectral_norm_square_invertible_m_is_forced() {
        // T = N: Z2 = M^{-1} [0; I], no freedom
        let m_mat = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 3.0]);
        let s_plus = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.5, 0.0, 2.0, 1.0]);
        let n = 1;
        let m = 1;
        let n_terms = 3;
        let (problem, layout) = build_spectral_norm_problem(&s_plus, &m_mat, n, m, n_terms).unwrap();
        let sol = solve(&problem, 1e-9).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);

        let rhs = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        let z2_expected = m_mat.clone().lu().solve(&rhs).unwrap();
        for k in 0..3 {
            assert_relative_eq!(sol.y[layout.z_index(k, 0)], z2_expected[(k, 0)], epsilon = 1e-6);
        }
        let norm = (&s_plus * &z2_expected).norm();
        assert_relative_eq!(sol.y[layout.t_index()], norm, epsilon = 1e-6);
    }

    #[test]
    fn scp_single_zero_psi_sample() {
        // the split between c_a and mu is free on the optimal face; the
        // face-invariant optimal value mu + c_a is zero here
        let g = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let (problem, layout) = build_scp_problem(
            &[vec![0.0]],
            &g,
            0.01,
            ScpMode::WithMu,
            &ScpShape::none(),
        )
        .unwrap();
        let sol = solve(&problem, 1e-9).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let ca = sol.y[layout.ca_index()];
        let mu = sol.y[layout.mu_index().unwrap()];
        assert!((ca + mu).abs() < 1e-6);
        assert!(ca >= -1e-9);
        assert!(mu <= 1e-9);
    }

    #[test]
    fn scp_identical_samples_are_tight_at_optimum() {
        // all samples share the same Psi value; at any optimum
        // mu* + c_a* equals the constrained quadratic exactly
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let psi = vec![vec![1.0, -2.0]; 5];
        let varpi = 0.5;
        let (problem, layout) =
            build_scp_problem(&psi, &g, varpi, ScpMode::WithMu, &ScpShape::none()).unwrap();
        let sol = solve(&problem, 1e-10).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let p = extract_symmetric(&sol.y, 0, 2);
        let w = {
            let psi0 = nalgebra::DVector::from_column_slice(&psi[0]);
            &g * psi0
        };
        let quad = (1.0 + 1.0 / varpi) * (w.transpose() * &p * &w)[(0, 0)];
        let total = sol.y[layout.ca_index()] + sol.y[layout.mu_index().unwrap()];
        assert_relative_eq!(quad, total, epsilon = 1e-6, max_relative = 1e-4);
    }

    #[test]
    fn scp_optimum_monotone_in_sample_set() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.7]);
        let base: Vec<Vec<f64>> = vec![vec![0.5, 0.1], vec![-0.2, 0.4], vec![0.9, -0.3]];
        let extended: Vec<Vec<f64>> = base
            .iter()
            .cloned()
            .chain([vec![1.5, 1.0], vec![-1.0, 1.2]])
            .collect();
        let shape = ScpShape {
            trace_target: Some(2.0),
            lower: None,
            upper: None,
        };
        let (p1, _) = build_scp_problem(&base, &g, 0.1, ScpMode::CaOnly, &shape).unwrap();
        let (p2, _) = build_scp_problem(&extended, &g, 0.1, ScpMode::CaOnly, &shape).unwrap();
        let s1 = solve(&p1, 1e-9).unwrap();
        let s2 = solve(&p2, 1e-9).unwrap();
        assert_eq!(s1.status, SolveStatus::Optimal);
        assert_eq!(s2.status, SolveStatus::Optimal);
        assert!(s2.objective >= s1.objective - 1e-7);
    }
}
