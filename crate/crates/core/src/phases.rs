//! Phase classification of the Dicke lattice in the `(t, G)` plane and
//! parallel sweeps over it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    alpha_k_spectrum, integrate_lattice_with, steady_state_detect, Boundary, DynamicsError,
    IntegrationOptions, LatticeParams, LatticeState, DEFAULT_NOISE,
};
use crate::stability::{
    critical_wavevector, lattice_critical, sr_fluctuation_stability, sr_nu, StabilityError,
};

/// Quasi-momentum resolution of the superradiant fluctuation scan.
const SR_SCAN_POINTS: usize = 257;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("invalid input `{name}`: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> PhaseError {
    PhaseError::Invalid {
        name,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseLabel {
    Normal,
    SRHomogeneous,
    SRFiniteK,
    Unstable,
    /// The numeric run matched no signature before `t_end`.
    Inconclusive,
    /// Analytic and numeric labels disagree; both are kept on the point.
    Conflict,
    /// Evaluation of this point failed; see `error`.
    Failed,
}

impl PhaseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::Normal => "Normal",
            PhaseLabel::SRHomogeneous => "SRHomogeneous",
            PhaseLabel::SRFiniteK => "SRFiniteK",
            PhaseLabel::Unstable => "Unstable",
            PhaseLabel::Inconclusive => "Inconclusive",
            PhaseLabel::Conflict => "Conflict",
            PhaseLabel::Failed => "Failed",
        }
    }
}

impl std::fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMethod {
    #[default]
    Analytic,
    Numeric,
    Both,
}

/// Field summary of a classified point (normalized per-site units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderParam {
    pub max_abs_alpha: f64,
    /// Mean `|a_l|^2` over sites.
    pub mean_photons: f64,
    /// Dominant quasi-momentum of the final state, when simulated.
    pub peak_k: Option<f64>,
    /// Share of `sum_k |alpha_k|^2` in the `+-peak_k` bins.
    pub peak_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub t: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub label: PhaseLabel,
    /// Non-negative representative of the `+-k` pair.
    pub k_star: Option<f64>,
    pub method: ClassifierMethod,
    pub order_param: Option<OrderParam>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_label: Option<PhaseLabel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub numeric_label: Option<PhaseLabel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PhasePoint {
    fn new(t: f64, g: f64, label: PhaseLabel, method: ClassifierMethod) -> Self {
        Self {
            t,
            g,
            label,
            k_star: None,
            method,
            order_param: None,
            analytic_label: None,
            numeric_label: None,
            error: None,
        }
    }
}

/// Label a point from the momentum-space stability analysis.
///
/// Unstable once `2t > Delta_c`; Normal below `min_k G_k`; homogeneous
/// superradiant when the minimum sits at `k = 0` and the superradiant
/// fluctuation matrix is stable for every `k`; finite-`k` superradiant
/// otherwise.
pub fn classify_analytic(
    t: f64,
    g: f64,
    delta_c: f64,
    delta_s: f64,
    kappa: f64,
) -> Result<PhasePoint, PhaseError> {
    if !(delta_s > 0.0) {
        return Err(StabilityError::NonPositiveSpinDetuning(delta_s).into());
    }
    if !(t >= 0.0) || !g.is_finite() || !(g >= 0.0) {
        return Err(invalid("t/G", "hopping and coupling must be non-negative"));
    }
    let mut p = PhasePoint::new(t, g, PhaseLabel::Unstable, ClassifierMethod::Analytic);
    if 2.0 * t > delta_c {
        return Ok(p);
    }
    let crit = lattice_critical(t, delta_c, delta_s, kappa)?;
    let Some(g_crit) = crit.g_crit else {
        return Ok(p);
    };
    if g < g_crit {
        p.label = PhaseLabel::Normal;
        p.order_param = Some(OrderParam {
            max_abs_alpha: 0.0,
            mean_photons: 0.0,
            peak_k: None,
            peak_fraction: None,
        });
        return Ok(p);
    }
    if crit.k_star != 0.0 {
        p.label = PhaseLabel::SRFiniteK;
        p.k_star = Some(crit.k_star);
        return Ok(p);
    }
    let sr = sr_fluctuation_stability(t, delta_c, delta_s, kappa, g, SR_SCAN_POINTS)?;
    if sr.stable {
        let nu = sr_nu(t, delta_c, delta_s, kappa, g)?;
        let d0 = delta_c - 2.0 * t;
        let amp = g / (d0 * d0 + kappa * kappa).sqrt() * (1.0 - nu * nu).max(0.0).sqrt();
        p.label = PhaseLabel::SRHomogeneous;
        p.k_star = Some(0.0);
        p.order_param = Some(OrderParam {
            max_abs_alpha: amp,
            mean_photons: amp * amp,
            peak_k: None,
            peak_fraction: None,
        });
        return Ok(p);
    }
    let k = if t > 0.0 {
        critical_wavevector(t, delta_c, kappa)?
    } else {
        0.0
    };
    let k = if k > 0.0 { k } else { sr.k_most_unstable };
    if k > 0.0 {
        p.label = PhaseLabel::SRFiniteK;
        p.k_star = Some(k);
    } else {
        p.label = PhaseLabel::Inconclusive;
        p.error = Some("homogeneous superradiant state unstable at k = 0".into());
    }
    Ok(p)
}

/// Settings of the simulation-based classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericOptions {
    pub t_end: f64,
    pub dt: f64,
    pub noise: f64,
    /// Trailing window inspected for stationarity and signatures.
    pub window: f64,
    pub rtol: f64,
    /// Steady states with `max |a_l|` below this are Normal.
    pub normal_threshold: f64,
    /// Unstable signature: field amplitude below this...
    pub unstable_field_max: f64,
    /// ...while the spin oscillation amplitude exceeds this.
    pub unstable_spin_min: f64,
    /// A non-stationary run whose field stays below `normal_threshold` and
    /// whose spins stay within this distance of the south pole is Normal
    /// (weakly damped precession).
    pub quiet_spin_max: f64,
}

impl Default for NumericOptions {
    fn default() -> Self {
        Self {
            t_end: 1000.0,
            dt: 0.01,
            noise: DEFAULT_NOISE,
            window: 50.0,
            rtol: 1e-6,
            normal_threshold: 1e-4,
            unstable_field_max: 0.05,
            unstable_spin_min: 0.1,
            quiet_spin_max: 1e-2,
        }
    }
}

/// Measurements from one lattice run used by the numeric classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steady: bool,
    pub residual_amplitude: f64,
    /// `max |a_l|` over the trailing window.
    pub field_max: f64,
    /// Largest half peak-to-peak excursion of any spin component over the window.
    pub spin_amplitude: f64,
    /// `max |Jm_l|` over the window.
    pub spin_deviation: f64,
    pub final_state: LatticeState,
}

/// Integrate a seeded lattice and summarize its trailing window.
pub fn run_lattice(
    params: &LatticeParams,
    n_l: usize,
    seed: u64,
    opts: &NumericOptions,
) -> Result<RunSummary, PhaseError> {
    if !(opts.window > 0.0) || opts.window >= opts.t_end {
        return Err(invalid("window", "must be positive and shorter than t_end"));
    }
    let init = LatticeState::random(n_l, opts.noise, seed, Boundary::Periodic);
    let stride = ((0.1 / opts.dt).round() as usize).max(1);
    // one sample of slack so the detector sees the full window
    let start = opts.t_end - opts.window - stride as f64 * opts.dt;
    let mut kept = Vec::new();
    let last = integrate_lattice_with(
        params,
        &init,
        &IntegrationOptions::new(opts.t_end, opts.dt, stride),
        |s| {
            if s.time >= start {
                kept.push(s.clone());
            }
        },
    )?;
    let st = steady_state_detect(&kept, opts.window, opts.rtol);
    let n = n_l;
    let mut lo = vec![f64::INFINITY; 3 * n];
    let mut hi = vec![f64::NEG_INFINITY; 3 * n];
    let mut field_max: f64 = 0.0;
    let mut spin_dev: f64 = 0.0;
    for s in &kept {
        field_max = field_max.max(s.max_abs_a());
        for l in 0..n {
            let c = [s.jm[l].re, s.jm[l].im, s.jz[l]];
            spin_dev = spin_dev.max(s.jm[l].norm());
            for j in 0..3 {
                lo[3 * l + j] = lo[3 * l + j].min(c[j]);
                hi[3 * l + j] = hi[3 * l + j].max(c[j]);
            }
        }
    }
    let spin_amp = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| 0.5 * (b - a))
        .fold(0.0, f64::max);
    Ok(RunSummary {
        steady: st.steady,
        residual_amplitude: st.residual_amplitude,
        field_max,
        spin_amplitude: spin_amp,
        spin_deviation: spin_dev,
        final_state: last,
    })
}

/// Dominant `|k|` of a periodic state and the share of `sum |alpha_k|^2` in
/// the `+-k` bins.
pub fn dominant_mode(state: &LatticeState) -> Result<(f64, f64), PhaseError> {
    let spec = alpha_k_spectrum(state)?;
    let total: f64 = spec.iter().map(|p| p.1).sum();
    let (k, _) = spec
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.abs().total_cmp(&a.0.abs())))
        .expect("non-empty spectrum");
    let k = k.abs();
    let share: f64 = spec
        .iter()
        .filter(|p| (p.0.abs() - k).abs() < 1e-9)
        .map(|p| p.1)
        .sum();
    let frac = if total > 0.0 { share / total } else { 0.0 };
    Ok((k, frac))
}

/// Label a point by simulating the periodic lattice from seeded noise.
pub fn classify_numeric(
    params: &LatticeParams,
    n_l: usize,
    seed: u64,
    opts: &NumericOptions,
) -> Result<PhasePoint, PhaseError> {
    if n_l < 2 {
        return Err(invalid("N_L", "need at least two sites"));
    }
    let run = run_lattice(params, n_l, seed, opts)?;
    let (k, frac) = dominant_mode(&run.final_state)?;
    let mean_photons = run.final_state.a.iter().map(|a| a.norm_sqr()).sum::<f64>() / n_l as f64;
    let mut p = PhasePoint::new(
        params.hopping,
        params.g,
        PhaseLabel::Inconclusive,
        ClassifierMethod::Numeric,
    );
    p.order_param = Some(OrderParam {
        max_abs_alpha: run.field_max,
        mean_photons,
        peak_k: Some(k),
        peak_fraction: Some(frac),
    });
    let grid = 2.0 * std::f64::consts::PI / n_l as f64;
    if run.steady {
        if run.field_max < opts.normal_threshold {
            p.label = PhaseLabel::Normal;
        } else if k < 0.5 * grid {
            p.label = PhaseLabel::SRHomogeneous;
            p.k_star = Some(0.0);
        } else {
            p.label = PhaseLabel::SRFiniteK;
            p.k_star = Some(k);
        }
    } else if run.field_max < opts.unstable_field_max && run.spin_amplitude > opts.unstable_spin_min
    {
        p.label = PhaseLabel::Unstable;
    } else if run.field_max < opts.normal_threshold && run.spin_deviation < opts.quiet_spin_max {
        p.label = PhaseLabel::Normal;
    }
    Ok(p)
}

/// Both classifiers; a disagreement becomes a `Conflict` point carrying
/// both labels.
pub fn classify_both(
    params: &LatticeParams,
    n_l: usize,
    seed: u64,
    opts: &NumericOptions,
) -> Result<PhasePoint, PhaseError> {
    let a = classify_analytic(
        params.hopping,
        params.g,
        params.delta_c,
        params.delta_s,
        params.kappa,
    )?;
    let n = classify_numeric(params, n_l, seed, opts)?;
    let mut p = n.clone();
    p.method = ClassifierMethod::Both;
    p.analytic_label = Some(a.label);
    p.numeric_label = Some(n.label);
    if a.label == n.label {
        p.label = a.label;
        if a.label == PhaseLabel::SRFiniteK {
            p.k_star = n.k_star;
        }
    } else {
        p.label = PhaseLabel::Conflict;
        p.k_star = None;
    }
    Ok(p)
}

/// Grid and fixed parameters of a phase-diagram sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub t_steps: usize,
    pub g_min: f64,
    pub g_max: f64,
    pub g_steps: usize,
    pub delta_c: f64,
    pub delta_s: f64,
    pub kappa: f64,
    pub n_l: usize,
    /// Point `i` (row-major) is simulated with seed `seed + i`.
    pub seed: u64,
    pub method: ClassifierMethod,
    #[serde(default)]
    pub numeric: NumericOptions,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), PhaseError> {
        if self.t_steps < 2 || self.g_steps < 2 {
            return Err(invalid("steps", "grid resolutions must be at least 2"));
        }
        for (name, v) in [
            ("t_min", self.t_min),
            ("t_max", self.t_max),
            ("g_min", self.g_min),
            ("g_max", self.g_max),
            ("delta_c", self.delta_c),
            ("delta_s", self.delta_s),
            ("kappa", self.kappa),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.t_max < self.t_min || self.g_max < self.g_min {
            return Err(invalid("range", "upper bound below lower bound"));
        }
        if self.method != ClassifierMethod::Analytic && self.n_l < 2 {
            return Err(invalid("N_L", "need at least two sites"));
        }
        Ok(())
    }

    pub fn t_values(&self) -> Vec<f64> {
        linspace(self.t_min, self.t_max, self.t_steps)
    }

    pub fn g_values(&self) -> Vec<f64> {
        linspace(self.g_min, self.g_max, self.g_steps)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Classify one grid point with the chosen method; failures become
/// `Failed` points.
pub fn classify_point(
    spec: &SweepSpec,
    t: f64,
    g: f64,
    seed: u64,
    method: ClassifierMethod,
) -> PhasePoint {
    let params = LatticeParams {
        hopping: t,
        delta_c: spec.delta_c,
        delta_s: spec.delta_s,
        kappa: spec.kappa,
        g,
    };
    let res = match method {
        ClassifierMethod::Analytic => {
            classify_analytic(t, g, spec.delta_c, spec.delta_s, spec.kappa)
        }
        ClassifierMethod::Numeric => classify_numeric(&params, spec.n_l, seed, &spec.numeric),
        ClassifierMethod::Both => classify_both(&params, spec.n_l, seed, &spec.numeric),
    };
    res.unwrap_or_else(|e| {
        let mut p = PhasePoint::new(t, g, PhaseLabel::Failed, method);
        p.error = Some(e.to_string());
        p
    })
}

/// Classify every grid point in parallel. Output is row-major in `t`, then
/// `G`, independent of scheduling.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<PhasePoint>, PhaseError> {
    spec.validate()?;
    let ts = spec.t_values();
    let gs = spec.g_values();
    let jobs: Vec<(usize, f64, f64)> = ts
        .iter()
        .flat_map(|&t| gs.iter().map(move |&g| (t, g)))
        .enumerate()
        .map(|(i, (t, g))| (i, t, g))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(i, t, g)| classify_point(spec, t, g, spec.seed.wrapping_add(i as u64), spec.method))
        .collect())
}
