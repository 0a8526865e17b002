//! TOML run configuration. Physical inputs sit at the top level, each
//! command reads its own section. All frequencies are in MHz.

use std::path::{Path, PathBuf};

use dicke_core::dynamics::{Boundary, SpinVariant};
use dicke_core::ensemble::{
    FrequencyDistribution, LineShape, SyntheticFieldSpec, DEFAULT_FREQUENCY_BINS,
};
use dicke_core::phases::{ClassifierMethod, NumericOptions};
use dicke_core::stability::CriticalMethod;
use dicke_core::PhysicalParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub unit: Option<String>,
    #[serde(rename = "D")]
    pub d: Option<f64>,
    #[serde(rename = "delta_B")]
    pub delta_b: Option<f64>,
    pub omega_c: Option<f64>,
    pub omega_1: Option<f64>,
    pub omega_2: Option<f64>,
    /// Common Rabi frequency of both drives.
    #[serde(rename = "Omega")]
    pub rabi: Option<f64>,
    #[serde(rename = "Omega_1")]
    pub rabi_1: Option<f64>,
    #[serde(rename = "Omega_2")]
    pub rabi_2: Option<f64>,
    pub kappa: Option<f64>,
    pub ensemble: Option<EnsembleConfig>,
    pub critical: Option<CriticalConfig>,
    pub srt_scan: Option<SrtScanConfig>,
    pub evolve: Option<EvolveConfig>,
    pub phase_diagram: Option<PhaseDiagramConfig>,
    pub spectrum: Option<SpectrumConfig>,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn require(name: &str, v: Option<f64>) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Validation(format!("missing key `{name}`")))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg: Config = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        if let Some(u) = &cfg.unit {
            if !u.eq_ignore_ascii_case("mhz") {
                return Err(CliError::Validation(format!(
                    "unsupported unit `{u}`, only MHz is supported"
                )));
            }
        }
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn physical(&self) -> Result<PhysicalParams, CliError> {
        let (r1, r2) = match (self.rabi, self.rabi_1, self.rabi_2) {
            (Some(r), None, None) => (r, r),
            (None, Some(a), Some(b)) => (a, b),
            (None, None, None) => return Err(CliError::Validation("missing key `Omega`".into())),
            _ => {
                return Err(CliError::Validation(
                    "give either `Omega` or both `Omega_1` and `Omega_2`".into(),
                ))
            }
        };
        Ok(PhysicalParams {
            zero_field_splitting: require("D", self.d)?,
            zeeman_splitting: require("delta_B", self.delta_b)?,
            omega_c: require("omega_c", self.omega_c)?,
            omega_1: require("omega_1", self.omega_1)?,
            omega_2: require("omega_2", self.omega_2)?,
            rabi_1: r1,
            rabi_2: r2,
            kappa: require("kappa", self.kappa)?,
        })
    }
}

/// Spin ensemble: a coupling histogram from a file or the synthetic field
/// model, plus a frequency distribution (table or analytic shape).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// `g0_mhz,count` CSV.
    pub file: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
    pub frequency: Option<FrequencyDistribution>,
    /// `delta_mhz,weight` CSV; overrides `frequency`.
    pub frequency_file: Option<PathBuf>,
    pub n_freq_bins: Option<usize>,
    /// Binned span in units of the line FWHM.
    pub span_fwhm: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub width_um: Option<f64>,
    pub height_um: Option<f64>,
    pub length_um: Option<f64>,
    pub density_cm3: Option<f64>,
    pub g0_ref: Option<f64>,
    pub ref_height_um: Option<f64>,
    pub conductor_depth_um: Option<f64>,
    pub grid_x: Option<usize>,
    pub grid_y: Option<usize>,
    pub n_bins: Option<usize>,
    pub cap_quantile: Option<f64>,
    /// Rescale `g0_ref` so that `sqrt(sum g0^2)` equals this value.
    #[serde(rename = "target_G0")]
    pub target_g0: Option<f64>,
}

impl SyntheticConfig {
    pub fn spec(&self) -> SyntheticFieldSpec {
        let d = SyntheticFieldSpec::default();
        SyntheticFieldSpec {
            width_um: self.width_um.unwrap_or(d.width_um),
            height_um: self.height_um.unwrap_or(d.height_um),
            length_um: self.length_um.unwrap_or(d.length_um),
            density_cm3: self.density_cm3.unwrap_or(d.density_cm3),
            g0_ref: self.g0_ref.unwrap_or(d.g0_ref),
            ref_height_um: self.ref_height_um.unwrap_or(d.ref_height_um),
            conductor_depth_um: self.conductor_depth_um.unwrap_or(d.conductor_depth_um),
            grid_x: self.grid_x.unwrap_or(d.grid_x),
            grid_y: self.grid_y.unwrap_or(d.grid_y),
            n_bins: self.n_bins.unwrap_or(d.n_bins),
            cap_quantile: self.cap_quantile.unwrap_or(d.cap_quantile),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Lorentzian,
    QGaussian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalConfig {
    /// Use the top-level physical parameters and `[ensemble]` instead of
    /// the normalized parameters below.
    pub from_params: bool,
    pub delta_c: f64,
    pub delta_s: f64,
    pub kappa: f64,
    pub shapes: Vec<ShapeKind>,
    /// Explicit list of FWHM values; takes precedence over the range.
    pub gamma_s: Option<Vec<f64>>,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_steps: usize,
    pub q: f64,
    pub n_bins: usize,
    pub span_fwhm: f64,
    /// Lower bound on the binned span in units of `delta_s`.
    pub min_span_delta_s: f64,
    /// Solver for the binned ensemble; `auto` bisects on the spectrum when
    /// some detunings are negative and there is loss.
    pub method: CriticalMethod,
    pub epsilon: Option<f64>,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        Self {
            from_params: false,
            delta_c: 1.0,
            delta_s: 1.0,
            kappa: 0.5,
            shapes: vec![ShapeKind::Lorentzian, ShapeKind::QGaussian],
            gamma_s: None,
            gamma_min: 0.0,
            gamma_max: 4.0,
            gamma_steps: 41,
            q: 1.3,
            n_bins: DEFAULT_FREQUENCY_BINS,
            span_fwhm: 10.0,
            min_span_delta_s: 4.0,
            method: CriticalMethod::Auto,
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrtScanConfig {
    pub delta_c: f64,
    pub delta_s: f64,
    pub kappa: f64,
    #[serde(rename = "G_min")]
    pub g_min: f64,
    #[serde(rename = "G_max")]
    pub g_max: f64,
    #[serde(rename = "G_steps")]
    pub g_steps: usize,
    /// Total Stark coefficient `lambda N`.
    pub lambda_n: f64,
    pub frequency: FrequencyDistribution,
    pub n_bins: usize,
    pub span_fwhm: f64,
    pub n_spins: u64,
    pub t_end: f64,
    pub dt: f64,
    pub noise: f64,
    pub window: f64,
    pub rtol: f64,
    pub variant: SpinVariant,
}

impl Default for SrtScanConfig {
    fn default() -> Self {
        Self {
            delta_c: 1.0,
            delta_s: 1.0,
            kappa: 0.5,
            g_min: 0.0,
            g_max: 1.0,
            g_steps: 101,
            lambda_n: 0.0,
            frequency: FrequencyDistribution::delta(),
            n_bins: DEFAULT_FREQUENCY_BINS,
            span_fwhm: 10.0,
            n_spins: 1_000_000,
            t_end: 2000.0,
            dt: 0.02,
            noise: 1e-3,
            window: 50.0,
            rtol: 1e-8,
            variant: SpinVariant::Constrained,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Cavity,
    Lattice,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub system: SystemKind,
    pub delta_c: f64,
    pub delta_s: f64,
    pub kappa: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Keep every `stride`-th step in the trajectory file.
    pub stride: usize,
    pub noise: f64,
    pub window: f64,
    pub rtol: f64,
    // single cavity
    pub lambda_n: f64,
    pub frequency: FrequencyDistribution,
    pub n_bins: usize,
    pub span_fwhm: f64,
    pub n_spins: u64,
    pub variant: SpinVariant,
    // lattice
    pub t: f64,
    pub n_sites: usize,
    pub boundary: Boundary,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::Cavity,
            delta_c: 1.0,
            delta_s: 1.0,
            kappa: 0.5,
            g: 0.7,
            t_end: 200.0,
            dt: 1e-3,
            stride: 100,
            noise: 1e-3,
            window: 50.0,
            rtol: 1e-8,
            lambda_n: 0.0,
            frequency: FrequencyDistribution::delta(),
            n_bins: DEFAULT_FREQUENCY_BINS,
            span_fwhm: 10.0,
            n_spins: 1_000_000,
            variant: SpinVariant::Constrained,
            t: 0.0,
            n_sites: 50,
            boundary: Boundary::Periodic,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseDiagramConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub t_steps: usize,
    #[serde(rename = "G_min")]
    pub g_min: f64,
    #[serde(rename = "G_max")]
    pub g_max: f64,
    #[serde(rename = "G_steps")]
    pub g_steps: usize,
    pub delta_c: f64,
    pub delta_s: f64,
    pub kappa: f64,
    pub n_sites: usize,
    pub method: ClassifierMethod,
    pub numeric: NumericOptions,
}

impl Default for PhaseDiagramConfig {
    fn default() -> Self {
        Self {
            t_min: 0.0,
            t_max: 0.8,
            t_steps: 81,
            g_min: 0.0,
            g_max: 0.8,
            g_steps: 81,
            delta_c: 1.0,
            delta_s: 1.0,
            kappa: 0.4,
            n_sites: 50,
            method: ClassifierMethod::Analytic,
            numeric: NumericOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub t: f64,
    pub delta_c: f64,
    pub delta_s: f64,
    pub kappa: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub n_sites: usize,
    pub t_end: f64,
    pub dt: f64,
    pub noise: f64,
    pub window: f64,
    pub rtol: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            t: 0.32,
            delta_c: 1.0,
            delta_s: 1.0,
            kappa: 0.4,
            g: 0.45,
            n_sites: 50,
            t_end: 1000.0,
            dt: 0.01,
            noise: 1e-3,
            window: 50.0,
            rtol: 1e-6,
        }
    }
}

/// Binned span for a line shape: `span_fwhm` FWHMs, or the table extent.
pub fn span_for(dist: &FrequencyDistribution, span_fwhm: f64) -> f64 {
    match (&dist.shape, dist.fwhm()) {
        (LineShape::CustomTable { points }, _) => {
            let lo = points.first().map_or(0.0, |p| p.0);
            let hi = points.last().map_or(0.0, |p| p.0);
            2.0 * (hi - dist.center).abs().max((lo - dist.center).abs())
        }
        (_, Some(w)) => span_fwhm * w,
        (_, None) => 1.0,
    }
}

/// Normalize tabulated shapes read straight from the config.
pub fn normalized(dist: FrequencyDistribution) -> Result<FrequencyDistribution, CliError> {
    let out = match dist.shape {
        LineShape::CustomTable { points } => FrequencyDistribution::custom_table(points)
            .map_err(|e| CliError::Validation(e.to_string()))?
            .with_center(dist.center),
        _ => dist,
    };
    out.validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(out)
}
