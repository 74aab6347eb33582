use thiserror::Error;

/// Errors produced by the synthesis and verification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {pos}: {msg} in \"{src}\"")]
    Syntax { src: String, pos: usize, msg: String },

    #[error("variable {name} out of range: dictionary has n={n} states, m={m} inputs")]
    VarIndex {
        name: String,
        n: usize,
        m: usize,
    },

    #[error("invalid dictionary: {0}")]
    InvalidDictionary(String),

    #[error("domain error: ln argument {value} <= 0 while evaluating \"{term}\"")]
    LnDomain { term: String, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid input constraints: {0}")]
    InvalidInputs(String),

    #[error("augmentation parameter out of range: {name} = {value}, must lie in (0, 1)")]
    EpsRange { name: &'static str, value: f64 },

    #[error("input constraints are not axis-aligned bounds; general polytopes are not supported by augment")]
    NonBoxInputs,

    #[error("dictionary domain error during rollout at step {step}: {source}")]
    Rollout {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("data not rich enough: rank(M) = {rank} with N = {n_terms}, T = {samples} (need rank N and T >= N+1)")]
    Richness {
        rank: usize,
        n_terms: usize,
        samples: usize,
    },

    #[error("SDP infeasible: {context}")]
    SdpInfeasible { context: String },

    #[error("SDP solve failed ({status}): {context}")]
    SdpFailure { status: String, context: String },

    #[error("no quadratic barrier found: level sets do not separate (eta_a = {eta_a} >= gamma_a = {gamma_a})")]
    LevelSeparation { eta_a: f64, gamma_a: f64 },

    #[error("decay too large: horizon bound (gamma_a - eta_a)/c_a = {bound} admits no T >= 1")]
    DecayTooLarge { bound: f64 },

    #[error("horizon parameters invalid: {0}")]
    HorizonParams(String),

    #[error("refusing vertex enumeration over {vertices} vertices (limit {limit})")]
    VertexGuard { vertices: u128, limit: u64 },

    #[error("refusing grid of {points} points (limit {limit})")]
    GridGuard { points: u128, limit: u64 },

    #[error("scenario parameter out of range: {0}")]
    ScenarioParams(String),

    #[error("deterministic correctness check failed: mu_S* + L*delta = {value} > 0 after {rounds} refinement rounds")]
    DeterministicCheck { value: f64, rounds: usize },

    #[error("scenario-designed P admits no data-consistent Y: {0}")]
    ScenarioCoupling(String),

    #[error("empty sample list")]
    EmptySamples,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
