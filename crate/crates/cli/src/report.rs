//! Versioned JSON artifacts: the certificate/controller report and the
//! verification report. Timing lives under its own key so reports from
//! identical seeded runs are byte-identical after dropping it.

use serde::{Deserialize, Serialize};

use dcbc_core::error::{Error, Result};
use dcbc_core::scenario::{RouteReport, ScenarioOutput};
use dcbc_core::synth::{Certificate, DynamicController, Horizon, LevelMode, SynthOutput};
use dcbc_core::verify::VerificationReport;
use nalgebra::DMatrix;

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config("ragged matrix in certificate file".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaSection {
    pub inner_max: f64,
    pub argmax: Vec<f64>,
    pub inflation: f64,
    pub seeded_by_grid: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub kappa: f64,
    pub s_plus_z2_norm: f64,
    pub equality_residual: f64,
    pub lmi_min_eig: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ca: Option<CaSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSection {
    pub route: RouteReport,
    pub margin: f64,
    pub rho_used: f64,
    pub attempts: usize,
    pub anchor_kappa: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: f64,
}

/// The certificate + controller artifact written by `synthesize` and
/// `scenario` and consumed by `verify` and `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateFile {
    pub format_version: u32,
    /// "synthesis" or "scenario".
    pub kind: String,
    pub n: usize,
    pub m: usize,
    pub n_terms: usize,
    pub varpi: f64,
    /// Row-major (n+m) x (n+m).
    pub p: Vec<Vec<f64>>,
    pub eta_a: f64,
    pub gamma_a: f64,
    pub c_a: f64,
    /// Steps, or null for an infinite-horizon certificate.
    pub horizon: Horizon,
    /// Row-major m x N gain of `u+ = K f(x, u)`.
    pub controller_gain: Vec<Vec<f64>>,
    pub level_mode: LevelMode,
    pub experiment_seed: u64,
    pub experiment_samples: usize,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSection>,
    pub timing_ms: Timing,
}

impl CertificateFile {
    pub fn from_synthesis(
        out: &SynthOutput,
        n: usize,
        m: usize,
        n_terms: usize,
        level_mode: LevelMode,
        experiment_seed: u64,
        experiment_samples: usize,
        total_ms: f64,
    ) -> Self {
        let cert = &out.certificate;
        CertificateFile {
            format_version: 1,
            kind: "synthesis".into(),
            n,
            m,
            n_terms,
            varpi: cert.varpi,
            p: matrix_rows(&cert.p),
            eta_a: cert.eta_a,
            gamma_a: cert.gamma_a,
            c_a: cert.c_a,
            horizon: cert.horizon,
            controller_gain: matrix_rows(&out.controller.gain),
            level_mode,
            experiment_seed,
            experiment_samples,
            diagnostics: Diagnostics {
                kappa: out.kappa,
                s_plus_z2_norm: out.s_plus_z2_norm,
                equality_residual: out.equality_residual,
                lmi_min_eig: out.lmi_min_eig,
                ca: Some(CaSection {
                    inner_max: out.ca_estimate.inner_max,
                    argmax: out.ca_estimate.argmax.clone(),
                    inflation: out.ca_estimate.inflation,
                    seeded_by_grid: out.ca_estimate.seeded_by_grid,
                }),
            },
            scenario: None,
            timing_ms: Timing { total_ms },
        }
    }

    pub fn from_scenario(
        out: &ScenarioOutput,
        n: usize,
        m: usize,
        n_terms: usize,
        experiment_seed: u64,
        experiment_samples: usize,
        total_ms: f64,
    ) -> Self {
        let cert = &out.certificate;
        CertificateFile {
            format_version: 1,
            kind: "scenario".into(),
            n,
            m,
            n_terms,
            varpi: cert.varpi,
            p: matrix_rows(&cert.p),
            eta_a: cert.eta_a,
            gamma_a: cert.gamma_a,
            c_a: cert.c_a,
            horizon: cert.horizon,
            controller_gain: matrix_rows(&out.controller.gain),
            level_mode: LevelMode::Optimized,
            experiment_seed,
            experiment_samples,
            diagnostics: Diagnostics {
                kappa: out.anchor_kappa,
                s_plus_z2_norm: 0.0,
                equality_residual: 0.0,
                lmi_min_eig: out.margin,
                ca: None,
            },
            scenario: Some(ScenarioSection {
                route: out.route.clone(),
                margin: out.margin,
                rho_used: out.rho_used,
                attempts: out.attempts,
                anchor_kappa: out.anchor_kappa,
            }),
            timing_ms: Timing { total_ms },
        }
    }

    pub fn certificate(&self) -> Result<Certificate> {
        Ok(Certificate {
            p: rows_matrix(&self.p)?,
            eta_a: self.eta_a,
            gamma_a: self.gamma_a,
            c_a: self.c_a,
            varpi: self.varpi,
            horizon: self.horizon,
        })
    }

    pub fn controller(&self) -> Result<DynamicController> {
        Ok(DynamicController {
            gain: rows_matrix(&self.controller_gain)?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate files always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CertificateFile =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if file.format_version != 1 {
            return Err(Error::Config(format!(
                "unsupported certificate format_version {}",
                file.format_version
            )));
        }
        Ok(file)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// The artifact written by `verify`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationFile {
    pub format_version: u32,
    pub report: VerificationReport,
    pub certificate_kind: String,
    pub seed: u64,
    pub timing_ms: Timing,
}

impl VerificationFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verification files always serialize")
    }
}
