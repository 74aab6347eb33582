//! Plant and augmented-system models, region specifications, and the
//! adding-one-integrator construction.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Dictionary;

/// Axis-aligned closed box `[lower_i, upper_i]` in each coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                got: upper.len(),
                context: "box bounds".into(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo > hi || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidRegion(format!(
                    "axis {i}: lower {lo} must not exceed upper {hi}"
                )));
            }
        }
        Ok(BoxRegion { lower, upper })
    }

    /// Symmetric box `[-half_i, half_i]`.
    pub fn symmetric(half_widths: &[f64]) -> Result<Self> {
        BoxRegion::new(
            half_widths.iter().map(|w| -w).collect(),
            half_widths.to_vec(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &[f64]) -> Result<bool> {
        if p.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: p.len(),
                context: "box membership".into(),
            });
        }
        Ok(self
            .lower
            .iter()
            .zip(&self.upper)
            .zip(p)
            .all(|((lo, hi), v)| *lo <= *v && *v <= *hi))
    }

    /// Cartesian product of two boxes.
    pub fn product(&self, other: &BoxRegion) -> BoxRegion {
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        lower.extend_from_slice(&other.lower);
        upper.extend_from_slice(&other.upper);
        BoxRegion { lower, upper }
    }

    /// True if the closed boxes share at least one point.
    pub fn intersects(&self, other: &BoxRegion) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(other.lower.iter().zip(&other.upper))
            .all(|((lo1, hi1), (lo2, hi2))| lo1.max(*lo2) <= hi1.min(*hi2))
    }

    /// True if `other` lies entirely inside `self`.
    pub fn contains_box(&self, other: &BoxRegion) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(other.lower.iter().zip(&other.upper))
            .all(|((lo1, hi1), (lo2, hi2))| lo1 <= lo2 && hi2 <= hi1)
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| rng.random_range(*lo..=*hi))
            .collect()
    }

    /// Per-axis interval view, for dictionary validation.
    pub fn axis_bounds(&self) -> Vec<(f64, f64)> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (*lo, *hi))
            .collect()
    }

    pub fn clamp(&self, p: &mut [f64]) {
        for ((v, lo), hi) in p.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// True iff `p` lies in any of the closed boxes.
pub fn contains(region: &[BoxRegion], p: &[f64]) -> Result<bool> {
    for b in region {
        if b.contains(p)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Samples a point uniformly from a union of boxes (boxes weighted by
/// volume; overlaps are not corrected for).
pub fn sample_union<R: Rng + ?Sized>(region: &[BoxRegion], rng: &mut R) -> Vec<f64> {
    assert!(!region.is_empty(), "cannot sample from an empty region");
    if region.len() == 1 {
        return region[0].sample_uniform(rng);
    }
    let volumes: Vec<f64> = region.iter().map(BoxRegion::volume).collect();
    let total: f64 = volumes.iter().sum();
    let mut pick = rng.random_range(0.0..total.max(f64::MIN_POSITIVE));
    for (b, v) in region.iter().zip(&volumes) {
        if pick <= *v {
            return b.sample_uniform(rng);
        }
        pick -= v;
    }
    region.last().unwrap().sample_uniform(rng)
}

/// State set, initial set, and unsafe set of a plant, all unions of boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub state_box: BoxRegion,
    pub initial_boxes: Vec<BoxRegion>,
    pub unsafe_boxes: Vec<BoxRegion>,
}

impl RegionSpec {
    pub fn new(
        state_box: BoxRegion,
        initial_boxes: Vec<BoxRegion>,
        unsafe_boxes: Vec<BoxRegion>,
    ) -> Result<Self> {
        let d = state_box.dim();
        for b in initial_boxes.iter().chain(&unsafe_boxes) {
            if b.dim() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: b.dim(),
                    context: "region box dimension".into(),
                });
            }
            if !state_box.contains_box(b) {
                return Err(Error::InvalidRegion(format!(
                    "region box {b:?} is not contained in the state box"
                )));
            }
        }
        for ib in &initial_boxes {
            for ub in &unsafe_boxes {
                if ib.intersects(ub) {
                    return Err(Error::InvalidRegion(
                        "initial and unsafe sets must be disjoint".into(),
                    ));
                }
            }
        }
        Ok(RegionSpec {
            state_box,
            initial_boxes,
            unsafe_boxes,
        })
    }
}

/// Admissible input set `{u : C_j^T u <= 1 for all j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputConstraints {
    m: usize,
    rows: Vec<Vec<f64>>,
}

impl InputConstraints {
    /// General polytopic constraints. Boundedness is checked by solving an
    /// LP in each coordinate direction.
    pub fn new(m: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInputs("input dimension must be positive".into()));
        }
        for r in &rows {
            if r.len() != m {
                return Err(Error::Dimension {
                    expected: m,
                    got: r.len(),
                    context: "input constraint row".into(),
                });
            }
        }
        let c = InputConstraints { m, rows };
        c.check_bounded()?;
        Ok(c)
    }

    /// Symmetric box constraints `-u_max_i <= u_i <= u_max_i`, encoded as the
    /// rows `+/- e_i / u_max_i`.
    pub fn from_box_bounds(u_max: &[f64]) -> Result<Self> {
        if u_max.is_empty() {
            return Err(Error::InvalidInputs("input dimension must be positive".into()));
        }
        let m = u_max.len();
        let mut rows = Vec::with_capacity(2 * m);
        for (i, &umax) in u_max.iter().enumerate() {
            if !(umax > 0.0) || !umax.is_finite() {
                return Err(Error::InvalidInputs(format!(
                    "u_max[{i}] = {umax} must be positive and finite"
                )));
            }
            let mut plus = vec![0.0; m];
            plus[i] = 1.0 / umax;
            let mut minus = vec![0.0; m];
            minus[i] = -1.0 / umax;
            rows.push(plus);
            rows.push(minus);
        }
        Ok(InputConstraints { m, rows })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// True iff `C_j^T u <= 1` holds for every row.
    pub fn admits(&self, u: &[f64]) -> Result<bool> {
        if u.len() != self.m {
            return Err(Error::Dimension {
                expected: self.m,
                got: u.len(),
                context: "input admissibility".into(),
            });
        }
        Ok(self
            .rows
            .iter()
            .all(|c| c.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() <= 1.0))
    }

    /// If the rows are exactly the symmetric per-axis pattern
    /// `+/- e_i / u_max_i`, returns the `u_max` vector.
    pub fn as_box_bounds(&self) -> Option<Vec<f64>> {
        if self.rows.len() != 2 * self.m {
            return None;
        }
        let mut pos = vec![None::<f64>; self.m];
        let mut neg = vec![None::<f64>; self.m];
        for row in &self.rows {
            let mut nonzero = row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0);
            let (axis, &value) = nonzero.next()?;
            if nonzero.next().is_some() {
                return None;
            }
            let slot = if value > 0.0 { &mut pos[axis] } else { &mut neg[axis] };
            if slot.is_some() {
                return None;
            }
            *slot = Some(value);
        }
        let mut u_max = Vec::with_capacity(self.m);
        for i in 0..self.m {
            let p = pos[i]?;
            let n = neg[i]?;
            let rel = (p + n).abs() / p.abs().max(n.abs());
            if rel > 1e-12 {
                return None;
            }
            u_max.push(1.0 / p);
        }
        Some(u_max)
    }

    fn check_bounded(&self) -> Result<()> {
        use crate::sdp::{LinTerm, SdpProblem, SolveStatus};
        // max +/- e_i^T u  s.t.  C_j^T u <= 1  must be bounded in every
        // coordinate direction; u = 0 is always feasible, so only
        // unboundedness can occur.
        for axis in 0..self.m {
            for sign in [1.0, -1.0] {
                let mut objective = vec![0.0; self.m];
                objective[axis] = -sign; // minimize -sign*u_axis = maximize sign*u_axis
                let nonneg = self
                    .rows
                    .iter()
                    .map(|row| LinTerm {
                        coeffs: row
                            .iter()
                            .enumerate()
                            .filter(|(_, v)| **v != 0.0)
                            .map(|(i, v)| (i, -*v))
                            .collect(),
                        constant: 1.0,
                    })
                    .collect();
                let problem = SdpProblem {
                    dim: self.m,
                    objective,
                    equalities: Vec::new(),
                    nonneg,
                    psd_blocks: Vec::new(),
                };
                let sol = crate::sdp::solve(&problem, 1e-9)?;
                match sol.status {
                    SolveStatus::Optimal => {}
                    _ => {
                        return Err(Error::InvalidInputs(format!(
                            "admissible input set unbounded in coordinate {axis} (direction {sign})"
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

/// True dynamics `x+ = A f(x, u)`; `A` is the simulation oracle only and is
/// never read by the synthesis pipeline.
#[derive(Debug, Clone)]
pub struct PlantModel {
    pub dictionary: Dictionary,
    pub a: DMatrix<f64>,
    pub regions: RegionSpec,
    pub inputs: InputConstraints,
}

impl PlantModel {
    pub fn new(
        dictionary: Dictionary,
        a: DMatrix<f64>,
        regions: RegionSpec,
        inputs: InputConstraints,
    ) -> Result<Self> {
        let (n, m, n_terms) = (dictionary.n(), dictionary.m(), dictionary.len());
        if a.nrows() != n || a.ncols() != n_terms {
            return Err(Error::Dimension {
                expected: n * n_terms,
                got: a.nrows() * a.ncols(),
                context: format!("A must be {n} x {n_terms} to align with the dictionary"),
            });
        }
        if regions.state_box.dim() != n {
            return Err(Error::Dimension {
                expected: n,
                got: regions.state_box.dim(),
                context: "state box dimension".into(),
            });
        }
        if inputs.m() != m {
            return Err(Error::Dimension {
                expected: m,
                got: inputs.m(),
                context: "input constraint dimension".into(),
            });
        }
        Ok(PlantModel {
            dictionary,
            a,
            regions,
            inputs,
        })
    }

    pub fn n(&self) -> usize {
        self.dictionary.n()
    }

    pub fn m(&self) -> usize {
        self.dictionary.m()
    }

    /// One-step simulation oracle `x+ = A f(x, u)`.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let f = self.dictionary.eval(x, u)?;
        let fx = DMatrix::from_column_slice(f.len(), 1, &f);
        Ok((&self.a * fx).column(0).iter().copied().collect())
    }
}

/// The integrator-augmented system `zeta+ = A_aug F(zeta) + B theta` with
/// region spec derived from the plant per the epsilon adjustments.
#[derive(Debug, Clone)]
pub struct AugmentedModel {
    pub plant: PlantModel,
    /// Dictionary over the augmented state (no input variables).
    pub aug_dictionary: Dictionary,
    /// `[A; 0]`, oracle-only.
    pub a_aug: DMatrix<f64>,
    /// `[0; I_m]`.
    pub b_aug: DMatrix<f64>,
    pub eps1: f64,
    pub eps2: f64,
    /// Symmetric per-input bounds of the plant's admissible set.
    pub u_max: Vec<f64>,
    pub state_box: BoxRegion,
    pub initial_boxes: Vec<BoxRegion>,
    pub unsafe_boxes: Vec<BoxRegion>,
}

/// Builds the augmented model. Input constraints must be axis-aligned
/// bounds; general polytopes are rejected.
pub fn augment(plant: &PlantModel, eps1: f64, eps2: f64) -> Result<AugmentedModel> {
    if !(eps1 > 0.0 && eps1 < 1.0) {
        return Err(Error::EpsRange {
            name: "eps1",
            value: eps1,
        });
    }
    if !(eps2 > 0.0 && eps2 < 1.0) {
        return Err(Error::EpsRange {
            name: "eps2",
            value: eps2,
        });
    }
    let u_max = plant
        .inputs
        .as_box_bounds()
        .ok_or(Error::NonBoxInputs)?;
    let (n, m, n_terms) = (plant.n(), plant.m(), plant.dictionary.len());

    let mut a_aug = DMatrix::zeros(n + m, n_terms);
    a_aug.view_mut((0, 0), (n, n_terms)).copy_from(&plant.a);
    let mut b_aug = DMatrix::zeros(n + m, m);
    b_aug.view_mut((n, 0), (m, m)).copy_from(&DMatrix::identity(m, m));

    let aug_dictionary = plant.dictionary.reindex_for_augmentation();

    // zeta_2 boxes from the epsilon adjustments
    let z2_state = BoxRegion::symmetric(
        &u_max.iter().map(|u| (1.0 + eps1) * u).collect::<Vec<_>>(),
    )?;
    let z2_initial = BoxRegion::symmetric(
        &u_max.iter().map(|u| (1.0 - eps2) * u).collect::<Vec<_>>(),
    )?;

    let state_box = plant.regions.state_box.product(&z2_state);
    let initial_boxes: Vec<BoxRegion> = plant
        .regions
        .initial_boxes
        .iter()
        .map(|b| b.product(&z2_initial))
        .collect();

    // unsafe union: (a) input bands (closed at |u_i| = u_max_i, absorbing
    // the boundary of U), (b) plant-unsafe corners at full zeta_2 range
    let mut unsafe_boxes = Vec::new();
    for i in 0..m {
        for sign in [1.0, -1.0] {
            let mut lower = z2_state.lower.clone();
            let mut upper = z2_state.upper.clone();
            if sign > 0.0 {
                lower[i] = u_max[i];
            } else {
                upper[i] = -u_max[i];
            }
            unsafe_boxes.push(
                plant
                    .regions
                    .state_box
                    .product(&BoxRegion::new(lower, upper)?),
            );
        }
    }
    for b in &plant.regions.unsafe_boxes {
        unsafe_boxes.push(b.product(&z2_state));
    }

    // every ln argument must be provably positive on the analysis box
    aug_dictionary.validate_on_box(&state_box.axis_bounds(), &[])?;

    Ok(AugmentedModel {
        plant: plant.clone(),
        aug_dictionary,
        a_aug,
        b_aug,
        eps1,
        eps2,
        u_max,
        state_box,
        initial_boxes,
        unsafe_boxes,
    })
}

impl AugmentedModel {
    pub fn n(&self) -> usize {
        self.plant.n()
    }

    pub fn m(&self) -> usize {
        self.plant.m()
    }

    /// Augmented state dimension n + m.
    pub fn dim(&self) -> usize {
        self.plant.n() + self.plant.m()
    }

    /// One-step oracle `zeta+ = A_aug F(zeta) + B theta`.
    pub fn step(&self, zeta: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.m() {
            return Err(Error::Dimension {
                expected: self.m(),
                got: theta.len(),
                context: "virtual input".into(),
            });
        }
        let f = self.aug_dictionary.eval(zeta, &[])?;
        let mut out = vec![0.0; self.dim()];
        for (r, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, fv) in f.iter().enumerate() {
                acc += self.a_aug[(r, c)] * fv;
            }
            *slot = acc;
        }
        for (i, t) in theta.iter().enumerate() {
            out[self.n() + i] += t;
        }
        Ok(out)
    }

    /// The initial box of the zeta_2 block, `[-(1-eps2) u_max, (1-eps2) u_max]`.
    pub fn initial_input_box(&self) -> Result<BoxRegion> {
        BoxRegion::symmetric(
            &self
                .u_max
                .iter()
                .map(|u| (1.0 - self.eps2) * u)
                .collect::<Vec<_>>(),
        )
    }
}


#[cfg(test)]
mod tests {
    use super::tests_support::{case1_augmented, case1_plant};
    use super::*;
    use crate::expr::Dictionary;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn augment_matches_paper_matrices_exactly() {
        let aug = case1_augmented();
        let tau = 0.01;
        let expected_a = DMatrix::from_row_slice(
            3,
            10,
            &[
                1.0, tau, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, tau, //
                -tau,
                1.0 + tau,
                tau,
                -tau,
                0.0,
                0.0,
                0.0,
                0.0,
                0.0,
                0.0, //
                0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            ],
        );
        assert_eq!(aug.a_aug, expected_a);
        assert_eq!(aug.b_aug, DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]));
    }

    #[test]
    fn augment_builds_case1_regions() {
        let aug = case1_augmented();
        assert_eq!(&aug.state_box.lower[..2], &[-5.0, -5.0]);
        assert_eq!(&aug.state_box.upper[..2], &[5.0, 5.0]);
        assert_relative_eq!(aug.state_box.lower[2], -15.01, epsilon = 1e-12);
        assert_relative_eq!(aug.state_box.upper[2], 15.01, epsilon = 1e-12);
        assert_eq!(aug.initial_boxes.len(), 1);
        assert_relative_eq!(aug.initial_boxes[0].lower[0], -1.0);
        assert_relative_eq!(aug.initial_boxes[0].lower[2], -0.01, epsilon = 1e-12);
        assert_relative_eq!(aug.initial_boxes[0].upper[2], 0.01, epsilon = 1e-12);
        // two input bands + two plant corners
        assert_eq!(aug.unsafe_boxes.len(), 4);
    }

    #[test]
    fn augment_small_block_structure() {
        let dictionary = Dictionary::parse(1, 1, &["x1", "u1"]).unwrap();
        let a = DMatrix::from_row_slice(1, 2, &[0.5, 2.0]);
        let regions = RegionSpec::new(
            BoxRegion::new(vec![-1.0], vec![1.0]).unwrap(),
            vec![BoxRegion::new(vec![-0.1], vec![0.1]).unwrap()],
            vec![BoxRegion::new(vec![0.9], vec![1.0]).unwrap()],
        )
        .unwrap();
        let inputs = InputConstraints::from_box_bounds(&[1.0]).unwrap();
        let plant = PlantModel::new(dictionary, a, regions, inputs).unwrap();
        let aug = augment(&plant, 0.01, 0.9).unwrap();
        assert_eq!(
            aug.a_aug,
            DMatrix::from_row_slice(2, 2, &[0.5, 2.0, 0.0, 0.0])
        );
        assert_eq!(aug.b_aug, DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
    }

    #[test]
    fn augment_reindexes_dictionary() {
        let aug = case1_augmented();
        let rendered = aug.aug_dictionary.render();
        assert_eq!(rendered[9], "sin(x3)");
        assert_eq!(rendered[3], "ln(1 + x1 * x1)");
        assert_eq!(aug.aug_dictionary.n(), 3);
        assert_eq!(aug.aug_dictionary.m(), 0);
    }

    #[test]
    fn augment_rejects_bad_eps() {
        let plant = case1_plant();
        assert!(matches!(
            augment(&plant, 0.0, 0.5),
            Err(Error::EpsRange { name: "eps1", .. })
        ));
        assert!(matches!(
            augment(&plant, 0.5, 1.0),
            Err(Error::EpsRange { name: "eps2", .. })
        ));
    }

    #[test]
    fn augment_rejects_general_polytopes() {
        let plant = case1_plant();
        let skewed = InputConstraints::new(1, vec![vec![0.5], vec![-0.25]]).unwrap();
        let plant = PlantModel::new(
            plant.dictionary.clone(),
            plant.a.clone(),
            plant.regions.clone(),
            skewed,
        )
        .unwrap();
        assert!(matches!(
            augment(&plant, 0.01, 0.99),
            Err(Error::NonBoxInputs)
        ));
    }

    #[test]
    fn contains_case1_points() {
        let aug = case1_augmented();
        assert!(contains(&aug.unsafe_boxes, &[4.0, 4.0, 0.0]).unwrap());
        assert!(!contains(&aug.unsafe_boxes, &[0.0, 0.0, 0.0]).unwrap());
        // boundary of a closed box counts as inside
        assert!(contains(&aug.unsafe_boxes, &[3.0, 3.0, 0.0]).unwrap());
        // the input band is closed at |u| = u_max
        assert!(contains(&aug.unsafe_boxes, &[0.0, 0.0, 15.0]).unwrap());
        assert!(!contains(&aug.unsafe_boxes, &[0.0, 0.0, 14.999]).unwrap());
    }

    #[test]
    fn augmented_step_matches_plant_on_first_n_coordinates() {
        let plant = case1_plant();
        let aug = case1_augmented();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..100 {
            let zeta = aug.state_box.sample_uniform(&mut rng);
            let theta = [rng.random_range(-15.0..15.0)];
            let next = aug.step(&zeta, &theta).unwrap();
            let plant_next = plant.step(&zeta[..2], &zeta[2..]).unwrap();
            for i in 0..2 {
                assert_relative_eq!(next[i], plant_next[i], epsilon = 1e-14);
            }
            // integrator law: the last m coordinates equal theta exactly
            assert_eq!(next[2], theta[0]);
        }
    }

    #[test]
    fn initial_and_unsafe_augmented_sets_are_disjoint() {
        let aug = case1_augmented();
        for ib in &aug.initial_boxes {
            for ub in &aug.unsafe_boxes {
                assert!(!ib.intersects(ub));
            }
        }
    }

    #[test]
    fn region_spec_rejects_overlap() {
        let err = RegionSpec::new(
            BoxRegion::new(vec![-1.0], vec![1.0]).unwrap(),
            vec![BoxRegion::new(vec![-0.5], vec![0.5]).unwrap()],
            vec![BoxRegion::new(vec![0.4], vec![0.9]).unwrap()],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidRegion(_)));
    }

    #[test]
    fn box_bounds_detection() {
        let c = InputConstraints::from_box_bounds(&[15.0, 30.0]).unwrap();
        let b = c.as_box_bounds().unwrap();
        assert_relative_eq!(b[0], 15.0);
        assert_relative_eq!(b[1], 30.0);

        let skew = InputConstraints::new(2, vec![
            vec![0.1, 0.05],
            vec![-0.1, 0.0],
            vec![0.0, 0.1],
            vec![0.0, -0.1],
        ])
        .unwrap();
        assert!(skew.as_box_bounds().is_none());
    }

    #[test]
    fn unbounded_inputs_rejected() {
        // single half-space: unbounded
        let err = InputConstraints::new(1, vec![vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::InvalidInputs(_)));
    }
}
