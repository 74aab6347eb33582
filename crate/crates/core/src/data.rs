//! Single-trajectory experiment collection and data-matrix assembly.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::expr::Dictionary;
use crate::model::{sample_union, AugmentedModel, BoxRegion};

/// One finite-time experiment of the augmented system: states, virtual
/// inputs, and shifted states, column per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    /// `zeta(0), ..., zeta(T-1)`, shape (n+m) x T.
    pub states: DMatrix<f64>,
    /// `theta(0), ..., theta(T-1)`, shape m x T.
    pub inputs: DMatrix<f64>,
    /// `zeta(1), ..., zeta(T)`, shape (n+m) x T.
    pub shifted: DMatrix<f64>,
    pub samples: usize,
    pub seed: u64,
}

/// Excitation policy for the experiment inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Excitation {
    /// i.i.d. uniform draws from the box.
    UniformBox(BoxRegion),
}

/// Simulates `zeta+ = A_aug F(zeta) + B theta` for `samples` steps with
/// i.i.d. uniform excitation. Deterministic for a fixed seed. The initial
/// state is drawn uniformly from the augmented initial set unless supplied.
pub fn collect_trajectory(
    aug: &AugmentedModel,
    samples: usize,
    excitation: &Excitation,
    seed: u64,
    initial: Option<Vec<f64>>,
) -> Result<TrajectoryData> {
    if samples == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let Excitation::UniformBox(theta_box) = excitation;
    if theta_box.dim() != aug.m() {
        return Err(Error::Dimension {
            expected: aug.m(),
            got: theta_box.dim(),
            context: "excitation box".into(),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut zeta = match initial {
        Some(z) => {
            if z.len() != aug.dim() {
                return Err(Error::Dimension {
                    expected: aug.dim(),
                    got: z.len(),
                    context: "initial augmented state".into(),
                });
            }
            z
        }
        None => sample_union(&aug.initial_boxes, &mut rng),
    };

    let d = aug.dim();
    let m = aug.m();
    let mut states = DMatrix::zeros(d, samples);
    let mut inputs = DMatrix::zeros(m, samples);
    let mut shifted = DMatrix::zeros(d, samples);
    for k in 0..samples {
        let theta = theta_box.sample_uniform(&mut rng);
        let next = aug.step(&zeta, &theta).map_err(|e| Error::Rollout {
            step: k,
            source: Box::new(e),
        })?;
        for i in 0..d {
            states[(i, k)] = zeta[i];
            shifted[(i, k)] = next[i];
        }
        for i in 0..m {
            inputs[(i, k)] = theta[i];
        }
        zeta = next;
    }
    Ok(TrajectoryData {
        states,
        inputs,
        shifted,
        samples,
        seed,
    })
}

/// The default excitation box: the virtual-input image of the augmented
/// input-slice box.
pub fn default_excitation(aug: &AugmentedModel) -> Result<Excitation> {
    Ok(Excitation::UniformBox(BoxRegion::symmetric(
        &aug.u_max
            .iter()
            .map(|u| (1.0 + aug.eps1) * u)
            .collect::<Vec<_>>(),
    )?))
}

/// Stacked regressor: row i of `M` is dictionary term i evaluated at the
/// state columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrices {
    pub m_mat: DMatrix<f64>,
    pub rank: usize,
}

/// Evaluates the augmented dictionary at every collected state and computes
/// the numerical rank by singular-value threshold.
pub fn assemble_m(traj: &TrajectoryData, aug_dict: &Dictionary) -> Result<DataMatrices> {
    let n_terms = aug_dict.len();
    let samples = traj.samples;
    if aug_dict.n() != traj.states.nrows() || aug_dict.m() != 0 {
        return Err(Error::Dimension {
            expected: traj.states.nrows(),
            got: aug_dict.n(),
            context: "augmented dictionary state dimension".into(),
        });
    }
    let mut m_mat = DMatrix::zeros(n_terms, samples);
    for k in 0..samples {
        let zeta: Vec<f64> = traj.states.column(k).iter().copied().collect();
        let f = aug_dict.eval(&zeta, &[])?;
        for (i, v) in f.iter().enumerate() {
            m_mat[(i, k)] = *v;
        }
    }
    let rank = numerical_rank(&m_mat);
    Ok(DataMatrices { m_mat, rank })
}

fn numerical_rank(mat: &DMatrix<f64>) -> usize {
    let svd = mat.clone().svd(false, false);
    let sigma_max = svd
        .singular_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    let threshold =
        (mat.nrows().max(mat.ncols()) as f64) * sigma_max * f64::EPSILON * 16.0;
    svd.singular_values.iter().filter(|s| **s > threshold).count()
}

/// Richness: `rank(M) = N` and at least `N + 1` samples.
pub fn check_richness(dm: &DataMatrices, samples: usize) -> bool {
    let n_terms = dm.m_mat.nrows();
    dm.rank == n_terms && samples >= n_terms + 1
}

impl TrajectoryData {
    /// Audit CSV: one row per time step `k, zeta..., theta...`; a final row
    /// holds `zeta(T)` with empty input cells.
    pub fn to_csv(&self) -> String {
        let d = self.states.nrows();
        let m = self.inputs.nrows();
        let mut out = String::new();
        out.push('k');
        for i in 1..=d {
            out.push_str(&format!(",zeta{i}"));
        }
        for i in 1..=m {
            out.push_str(&format!(",theta{i}"));
        }
        out.push('\n');
        for k in 0..self.samples {
            out.push_str(&k.to_string());
            for i in 0..d {
                out.push_str(&format!(",{}", self.states[(i, k)]));
            }
            for i in 0..m {
                out.push_str(&format!(",{}", self.inputs[(i, k)]));
            }
            out.push('\n');
        }
        out.push_str(&self.samples.to_string());
        for i in 0..d {
            out.push_str(&format!(",{}", self.shifted[(i, self.samples - 1)]));
        }
        for _ in 0..m {
            out.push(',');
        }
        out.push('\n');
        out
    }
}
