//! Linear stability of the normal and homogeneous superradiant phases:
//! Holstein–Primakoff dynamical matrices, their spectra, critical couplings
//! and critical wavevectors.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{EnsembleError, FrequencyDistribution, LineShape};
use crate::linalg::{self, CMatrix, LinalgError};
use crate::model::EffectiveParams;
use crate::quadrature::{self, QuadratureError};

/// Default spin-damping regularization, relative to `Delta_c`.
pub const DEFAULT_EPSILON_FACTOR: f64 = 1e-6;
/// Largest matrix handed to the dense eigensolver.
pub const MAX_EIGEN_DIM: usize = 200;
/// Stability threshold relative to the largest matrix entry.
pub const STABILITY_TOL_FACTOR: f64 = 1e-9;
/// Bisection tolerance on `G`, relative to `Delta_c`.
pub const BISECTION_TOL_FACTOR: f64 = 1e-8;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("cavity detuning must be positive, got {0}")]
    NonPositiveCavityDetuning(f64),
    #[error("spin detuning must be positive, got {0}")]
    NonPositiveSpinDetuning(f64),
    #[error("nu = {0} > 1: the system is in the normal phase, use the normal-phase matrix")]
    NormalPhase(f64),
    #[error("coupling {g} lies below the critical value {g_crit}; no superradiant branch")]
    BelowCritical { g: f64, g_crit: f64 },
    #[error("matrix dimension {0} exceeds the dense eigensolver limit of {MAX_EIGEN_DIM}")]
    TooLarge(usize),
    #[error("all couplings vanish; the critical coupling is undefined")]
    ZeroCoupling,
    #[error("principal-value extrapolation did not converge (residual {residual:e})")]
    PrincipalValueNotConverged { residual: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> StabilityError {
    StabilityError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Spectrum of a dynamical matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub eigenvalues: Vec<Complex64>,
    pub max_real_part: f64,
    pub unstable: bool,
    /// Index into `eigenvalues` of the eigenvalue with the largest real part.
    pub critical_mode_index: Option<usize>,
    pub epsilon_reg: f64,
    pub tolerance: f64,
}

/// Full spectrum of `m` and its largest real part. The stability threshold
/// is `1e-9` times the largest matrix entry.
pub fn max_real_eigenvalue(
    m: &CMatrix,
    epsilon_reg: f64,
) -> Result<StabilityReport, StabilityError> {
    let tol = STABILITY_TOL_FACTOR * linalg::max_abs_entry(m).max(f64::MIN_POSITIVE);
    max_real_eigenvalue_with_tol(m, epsilon_reg, tol)
}

pub fn max_real_eigenvalue_with_tol(
    m: &CMatrix,
    epsilon_reg: f64,
    tolerance: f64,
) -> Result<StabilityReport, StabilityError> {
    let eigenvalues = linalg::eigenvalues(m)?;
    let critical_mode_index = eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.re.total_cmp(&b.1.re))
        .map(|(i, _)| i);
    let max_real_part = critical_mode_index
        .map(|i| eigenvalues[i].re)
        .unwrap_or(f64::NEG_INFINITY);
    Ok(StabilityReport {
        unstable: max_real_part > tolerance,
        eigenvalues,
        max_real_part,
        critical_mode_index,
        epsilon_reg,
        tolerance,
    })
}

/// Normal-phase fluctuation matrix over `(a, a+, b_1, b_1+, ..., b_n, b_n+)`.
///
/// `epsilon` is a spin damping added to every spin diagonal entry.
pub fn build_normal_matrix(ens: &EffectiveParams, epsilon: f64) -> CMatrix {
    let n = ens.groups.len();
    let dim = 2 + 2 * n;
    let mut m = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    m[(0, 0)] = Complex64::new(-ens.kappa, -ens.delta_c);
    m[(1, 1)] = Complex64::new(-ens.kappa, ens.delta_c);
    for (mu, grp) in ens.groups.iter().enumerate() {
        let gc = grp.collective_coupling();
        let (b, bd) = (2 + 2 * mu, 3 + 2 * mu);
        let ig = Complex64::new(0.0, gc);
        m[(0, b)] = -ig;
        m[(0, bd)] = -ig;
        m[(1, b)] = ig;
        m[(1, bd)] = ig;
        m[(b, 0)] = -ig;
        m[(b, 1)] = -ig;
        m[(bd, 0)] = ig;
        m[(bd, 1)] = ig;
        m[(b, b)] = Complex64::new(-epsilon, -grp.delta);
        m[(bd, bd)] = Complex64::new(-epsilon, grp.delta);
    }
    m
}

/// Closed-form characteristic function of the normal-phase matrix:
///
/// `(Dc^2 + (L+k)^2) prod_mu (D_mu^2 + (L+e)^2) [1 - sum_mu 4 G_mu^2 Dc D_mu / ((Dc^2+(L+k)^2)(D_mu^2+(L+e)^2))]`
pub fn normal_characteristic_product(
    ens: &EffectiveParams,
    epsilon: f64,
    lambda: Complex64,
) -> Complex64 {
    let dc = ens.delta_c;
    let cav = dc * dc + (lambda + ens.kappa) * (lambda + ens.kappa);
    let mut prod = cav;
    let mut sum = Complex64::new(0.0, 0.0);
    for grp in &ens.groups {
        let spin = grp.delta * grp.delta + (lambda + epsilon) * (lambda + epsilon);
        prod *= spin;
        let gc = grp.collective_coupling();
        sum += 4.0 * gc * gc * dc * grp.delta / (cav * spin);
    }
    prod * (1.0 - sum)
}

pub fn default_epsilon(ens: &EffectiveParams) -> f64 {
    DEFAULT_EPSILON_FACTOR * ens.delta_c.abs()
}

/// Solver used for a critical coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalMethod {
    /// Scalar zero-frequency determinant condition.
    Scalar,
    /// Bisection on the largest real eigenvalue.
    Eigen,
    /// Scalar when the shortcut is exact, bisection otherwise.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalCoupling {
    /// Critical total coupling; `+inf` when no transition exists.
    pub g_crit: f64,
    pub transition: bool,
    pub method: CriticalMethod,
    pub epsilon: f64,
    /// `|G_crit(epsilon) - G_crit(epsilon/10)|`.
    pub epsilon_spread: f64,
    /// Some groups have negative detuning.
    pub mixed_sign: bool,
    /// The result comes from a path not covered by the zero-frequency
    /// argument (mixed-sign detunings with loss).
    pub generalized: bool,
}

fn zero_frequency_sum(ens: &EffectiveParams, epsilon: f64) -> f64 {
    let dc = ens.delta_c;
    let cav = dc * dc + ens.kappa * ens.kappa;
    ens.groups
        .iter()
        .map(|g| {
            let gc2 = g.g * g.g * g.n as f64;
            4.0 * gc2 * dc * g.delta / (cav * (g.delta * g.delta + epsilon * epsilon))
        })
        .sum()
}

fn scalar_g_crit(ens: &EffectiveParams, epsilon: f64) -> f64 {
    let s = zero_frequency_sum(ens, epsilon);
    if s > 0.0 {
        ens.total_coupling() / s.sqrt()
    } else {
        f64::INFINITY
    }
}

fn check_detuning(ens: &EffectiveParams) -> Result<(), StabilityError> {
    ens.validate()
        .map_err(|e| invalid("ensemble", e.to_string()))?;
    if !(ens.delta_c > 0.0) {
        return Err(StabilityError::NonPositiveCavityDetuning(ens.delta_c));
    }
    if !(ens.total_coupling() > 0.0) {
        return Err(StabilityError::ZeroCoupling);
    }
    Ok(())
}

fn is_mixed_sign(ens: &EffectiveParams) -> bool {
    ens.groups.iter().any(|g| g.delta <= 0.0)
}

/// Critical total coupling from the zero-frequency condition
/// `sum_mu 4 G_mu^2 Dc D_mu / ((Dc^2 + kappa^2)(D_mu^2 + eps^2)) = 1`.
///
/// The left side is quadratic in an overall coupling scale, so the result
/// is `G / sqrt(S)` with `S` the sum at the current couplings. `epsilon`
/// defaults to `1e-6 Delta_c`; the spread against `epsilon/10` is reported.
pub fn critical_coupling_discrete(
    ens: &EffectiveParams,
    epsilon: Option<f64>,
) -> Result<CriticalCoupling, StabilityError> {
    check_detuning(ens)?;
    let eps = epsilon.unwrap_or_else(|| default_epsilon(ens));
    let g1 = scalar_g_crit(ens, eps);
    let g2 = scalar_g_crit(ens, eps / 10.0);
    let spread = if g1.is_finite() && g2.is_finite() {
        (g1 - g2).abs()
    } else {
        0.0
    };
    let mixed = is_mixed_sign(ens);
    Ok(CriticalCoupling {
        g_crit: g1,
        transition: g1.is_finite(),
        method: CriticalMethod::Scalar,
        epsilon: eps,
        epsilon_spread: spread,
        mixed_sign: mixed,
        generalized: mixed && ens.kappa > 0.0,
    })
}

fn unstable_at(ens: &EffectiveParams, g: f64, eps: f64, tol: f64) -> Result<bool, StabilityError> {
    let m = build_normal_matrix(&ens.with_total_coupling(g), eps);
    Ok(max_real_eigenvalue_with_tol(&m, eps, tol)?.unstable)
}

fn bisect_g_crit(ens: &EffectiveParams, eps: f64) -> Result<f64, StabilityError> {
    let dc = ens.delta_c;
    let ds = ens.mean_spin_detuning();
    let ds_scale = if ds > 0.0 {
        ds
    } else {
        ens.groups.iter().map(|g| g.delta.abs()).fold(0.0, f64::max)
    };
    let mut hi = 10.0 * (dc * ds_scale).sqrt();
    let freq_scale = [dc.abs(), ens.kappa, ds_scale, hi]
        .into_iter()
        .fold(0.0, f64::max);
    let tol = STABILITY_TOL_FACTOR * freq_scale;
    if !unstable_at(ens, hi, eps, tol)? {
        return Ok(f64::INFINITY);
    }
    let mut lo = 0.0;
    if unstable_at(ens, BISECTION_TOL_FACTOR * dc, eps, tol)? {
        return Ok(0.0);
    }
    while hi - lo > BISECTION_TOL_FACTOR * dc {
        let mid = 0.5 * (lo + hi);
        if unstable_at(ens, mid, eps, tol)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Critical total coupling by bisection on the largest real eigenvalue of
/// the normal-phase matrix over `[0, 10 sqrt(Delta_c Delta_s_bar)]`.
pub fn critical_coupling_eigen(
    ens: &EffectiveParams,
    epsilon: Option<f64>,
) -> Result<CriticalCoupling, StabilityError> {
    check_detuning(ens)?;
    let dim = 2 + 2 * ens.groups.len();
    if dim > MAX_EIGEN_DIM {
        return Err(StabilityError::TooLarge(dim));
    }
    let eps = epsilon.unwrap_or_else(|| default_epsilon(ens));
    let g1 = bisect_g_crit(ens, eps)?;
    let g2 = bisect_g_crit(ens, eps / 10.0)?;
    let spread = if g1.is_finite() && g2.is_finite() {
        (g1 - g2).abs()
    } else {
        0.0
    };
    let mixed = is_mixed_sign(ens);
    Ok(CriticalCoupling {
        g_crit: g1,
        transition: g1.is_finite(),
        method: CriticalMethod::Eigen,
        epsilon: eps,
        epsilon_spread: spread,
        mixed_sign: mixed,
        generalized: mixed && ens.kappa > 0.0,
    })
}

/// Dispatch between the scalar and eigenvalue paths.
///
/// `Auto` uses the scalar condition when every detuning is positive or
/// there is no loss. Otherwise it bisects on the spectrum when the matrix is
/// small enough and falls back to the scalar condition (flagged) when not.
pub fn critical_coupling(
    ens: &EffectiveParams,
    method: CriticalMethod,
    epsilon: Option<f64>,
) -> Result<CriticalCoupling, StabilityError> {
    match method {
        CriticalMethod::Scalar => critical_coupling_discrete(ens, epsilon),
        CriticalMethod::Eigen => critical_coupling_eigen(ens, epsilon),
        CriticalMethod::Auto => {
            if !is_mixed_sign(ens) || ens.kappa == 0.0 || 2 + 2 * ens.groups.len() > MAX_EIGEN_DIM {
                critical_coupling_discrete(ens, epsilon)
            } else {
                critical_coupling_eigen(ens, epsilon)
            }
        }
    }
}

/// Closed-form critical coupling for a Lorentzian line of FWHM `gamma_s`:
/// `sqrt(Dc Ds/4 (1 + kappa^2/Dc^2)(1 + gamma_s^2/(4 Ds^2)))`.
pub fn critical_coupling_lorentzian(
    delta_c: f64,
    delta_s_bar: f64,
    kappa: f64,
    gamma_s: f64,
) -> Result<f64, StabilityError> {
    if !(delta_c > 0.0) {
        return Err(StabilityError::NonPositiveCavityDetuning(delta_c));
    }
    if !(delta_s_bar > 0.0) {
        return Err(StabilityError::NonPositiveSpinDetuning(delta_s_bar));
    }
    if !(gamma_s >= 0.0) {
        return Err(invalid("gamma_s", "must be non-negative"));
    }
    let v = delta_c * delta_s_bar / 4.0
        * (1.0 + kappa * kappa / (delta_c * delta_c))
        * (1.0 + gamma_s * gamma_s / (4.0 * delta_s_bar * delta_s_bar));
    Ok(v.sqrt())
}

/// Critical coupling for a continuous line shape through its
/// principal-value factor. Returns `+inf` when the factor is not positive.
pub fn critical_coupling_for_distribution(
    delta_c: f64,
    delta_s_bar: f64,
    kappa: f64,
    dist: &FrequencyDistribution,
) -> Result<f64, StabilityError> {
    if !(delta_c > 0.0) {
        return Err(StabilityError::NonPositiveCavityDetuning(delta_c));
    }
    if !(delta_s_bar > 0.0) {
        return Err(StabilityError::NonPositiveSpinDetuning(delta_s_bar));
    }
    let pv = principal_value_factor(dist, delta_s_bar)?;
    if !(pv > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok((delta_c * delta_s_bar / 4.0 * (1.0 + kappa * kappa / (delta_c * delta_c)) / pv).sqrt())
}

/// `P int dw (Ds/w) rho(w)` with `rho` the spin-frequency density centered
/// at `Ds`. Lorentzians use the closed form `Ds^2/(Ds^2 + gamma_s^2/4)`.
pub fn principal_value_factor(
    dist: &FrequencyDistribution,
    delta_s_bar: f64,
) -> Result<f64, StabilityError> {
    dist.validate()?;
    match dist.shape {
        LineShape::Lorentzian { gamma_s } if dist.center == 0.0 => {
            let d2 = delta_s_bar * delta_s_bar;
            Ok(d2 / (d2 + 0.25 * gamma_s * gamma_s))
        }
        _ => principal_value_quadrature(dist, delta_s_bar),
    }
}

/// Exclusion radii, in units of the line width, for the extrapolation.
const PV_RADII: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Quadrature route for [`principal_value_factor`], valid for every shape.
///
/// The integral is folded onto `w > 0` as `Ds int_r^inf (rho(w) - rho(-w))/w dw`,
/// evaluated at three exclusion radii `r` and extrapolated linearly to `r = 0`.
pub fn principal_value_quadrature(
    dist: &FrequencyDistribution,
    delta_s_bar: f64,
) -> Result<f64, StabilityError> {
    dist.validate()?;
    if delta_s_bar == 0.0 {
        return Ok(0.0);
    }
    let peak = delta_s_bar + dist.center;
    if dist.is_delta() {
        if peak == 0.0 {
            return Err(invalid(
                "delta_s_bar",
                "delta line sits exactly on the pole",
            ));
        }
        return Ok(delta_s_bar / peak);
    }
    let w = dist.width_scale();
    let rho = |omega: f64| dist.pdf(omega - delta_s_bar);
    let folded = |omega: f64| (rho(omega) - rho(-omega)) / omega;
    let p = peak.abs();

    let values: Vec<f64> = PV_RADII
        .iter()
        .map(|&frac| {
            let r = frac * w;
            let mut knots = vec![
                r,
                p - 20.0 * w,
                p - w,
                p,
                p + w,
                p + 20.0 * w,
                p + 200.0 * w,
            ];
            knots.retain(|&x| x >= r);
            knots.sort_by(|a, b| a.total_cmp(b));
            knots.dedup();
            let mut total = 0.0;
            for pair in knots.windows(2) {
                total += quadrature::integrate(folded, pair[0], pair[1], 1e-14, 1e-12)?;
            }
            let last = *knots.last().expect("non-empty");
            total += quadrature::integrate_to_infinity(folded, last, last.max(w), 1e-14, 1e-12)?;
            Ok(delta_s_bar * total)
        })
        .collect::<Result<_, StabilityError>>()?;

    // least-squares line through (r, I(r))
    let rs: Vec<f64> = PV_RADII.iter().map(|f| f * w).collect();
    let n = rs.len() as f64;
    let mr = rs.iter().sum::<f64>() / n;
    let mv = values.iter().sum::<f64>() / n;
    let sxy: f64 = rs
        .iter()
        .zip(&values)
        .map(|(r, v)| (r - mr) * (v - mv))
        .sum();
    let sxx: f64 = rs.iter().map(|r| (r - mr) * (r - mr)).sum();
    let slope = sxy / sxx;
    let intercept = mv - slope * mr;
    let residual = rs
        .iter()
        .zip(&values)
        .map(|(r, v)| (v - (intercept + slope * r)).abs())
        .fold(0.0, f64::max);
    if residual > 1e-6 * intercept.abs().max(1.0) {
        return Err(StabilityError::PrincipalValueNotConverged { residual });
    }
    Ok(intercept)
}

/// Per-mode critical coupling on the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum LatticeGk {
    Finite(f64),
    /// `Delta_k = 0`: the mode never destabilizes.
    NoTransition,
    /// `Delta_k Delta_s < 0`: unstable for arbitrarily small coupling.
    UnstableAtZero,
}

impl LatticeGk {
    pub fn finite(self) -> Option<f64> {
        match self {
            LatticeGk::Finite(v) => Some(v),
            _ => None,
        }
    }
}

/// Photon band `Delta_k = Delta_c - 2 t cos k`.
pub fn band(k: f64, t: f64, delta_c: f64) -> f64 {
    delta_c - 2.0 * t * k.cos()
}

/// `G_k = sqrt(Delta_k Delta_s / 4 (1 + kappa^2 / Delta_k^2))`.
pub fn lattice_gk(k: f64, t: f64, delta_c: f64, delta_s: f64, kappa: f64) -> LatticeGk {
    let dk = band(k, t, delta_c);
    if dk * delta_s < 0.0 {
        return LatticeGk::UnstableAtZero;
    }
    if dk == 0.0 {
        return LatticeGk::NoTransition;
    }
    LatticeGk::Finite((delta_s * (dk * dk + kappa * kappa) / (4.0 * dk)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeStabilityScan {
    pub k_values: Vec<f64>,
    #[serde(rename = "G_k")]
    pub g_k: Vec<LatticeGk>,
    /// Minimum over finite `G_k`; `None` if no mode has a finite threshold.
    #[serde(rename = "G_crit")]
    pub g_crit: Option<f64>,
    pub k_star: Option<f64>,
    /// Some mode is unstable at zero coupling.
    pub unstable_at_zero: bool,
}

/// Quasi-momenta `2 pi n / n_k` mapped into `(-pi, pi]`, ascending.
pub fn k_grid(n_k: usize) -> Vec<f64> {
    (0..n_k)
        .map(|j| -PI + 2.0 * PI * (j + 1) as f64 / n_k as f64)
        .collect()
}

/// Pick the minimizer among `(k, value)` pairs: smallest value, ties
/// (relative 1e-12) broken toward smallest `|k|`, then `k >= 0`.
fn argmin_k(candidates: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for (k, v) in candidates {
        best = match best {
            None => Some((k, v)),
            Some((bk, bv)) => {
                let tie = (v - bv).abs() <= 1e-12 * bv.abs().max(v.abs());
                let better = if tie {
                    k.abs() < bk.abs() - 1e-15
                        || ((k.abs() - bk.abs()).abs() <= 1e-15 && k >= 0.0 && bk < 0.0)
                } else {
                    v < bv
                };
                if better {
                    Some((k, v))
                } else {
                    Some((bk, bv))
                }
            }
        };
    }
    best
}

pub fn lattice_scan(
    t: f64,
    delta_c: f64,
    delta_s: f64,
    kappa: f64,
    n_k: usize,
) -> Result<LatticeStabilityScan, StabilityError> {
    if n_k < 2 {
        return Err(invalid("n_k", "need at least two quasi-momenta"));
    }
    let k_values = k_grid(n_k);
    let g_k: Vec<LatticeGk> = k_values
        .iter()
        .map(|&k| lattice_gk(k, t, delta_c, delta_s, kappa))
        .collect();
    let best = argmin_k(
        k_values
            .iter()
            .zip(&g_k)
            .filter_map(|(&k, g)| g.finite().filter(|v| *v > 0.0).map(|v| (k, v))),
    );
    Ok(LatticeStabilityScan {
        unstable_at_zero: g_k.contains(&LatticeGk::UnstableAtZero),
        k_values,
        g_k,
        g_crit: best.map(|b| b.1),
        k_star: best.map(|b| b.0),
    })
}

/// Exact minimum of `G_k` over the whole Brillouin zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeCritical {
    /// `None` in the unstable regime (some `Delta_k < 0`).
    pub g_crit: Option<f64>,
    /// Non-negative representative of the minimizing `+-k` pair.
    pub k_star: f64,
}

/// Analytic minimum of `G_k` for `t >= 0`, `Delta_s > 0`.
///
/// `G_k^2 = Ds (D^2 + kappa^2) / (4 D)` is minimized at `D = kappa`, so the
/// minimum sits at `Delta_k = kappa` when the band contains it and at the
/// nearer band edge otherwise.
pub fn lattice_critical(
    t: f64,
    delta_c: f64,
    delta_s: f64,
    kappa: f64,
) -> Result<LatticeCritical, StabilityError> {
    if !(delta_s > 0.0) {
        return Err(StabilityError::NonPositiveSpinDetuning(delta_s));
    }
    if !(t >= 0.0) {
        return Err(invalid("t", "hopping must be non-negative"));
    }
    if !(kappa >= 0.0) {
        return Err(invalid("kappa", "must be non-negative"));
    }
    let lo = delta_c - 2.0 * t;
    let hi = delta_c + 2.0 * t;
    if lo < 0.0 {
        return Ok(LatticeCritical {
            g_crit: None,
            k_star: 0.0,
        });
    }
    let target = kappa.clamp(lo, hi);
    let g = if target > 0.0 {
        Some((delta_s * (target * target + kappa * kappa) / (4.0 * target)).sqrt())
    } else {
        // band edge touches zero with kappa = 0
        Some(0.0)
    };
    let k_star = if t == 0.0 || target == lo {
        0.0
    } else if target == hi {
        PI
    } else {
        ((delta_c - target) / (2.0 * t)).clamp(-1.0, 1.0).acos()
    };
    Ok(LatticeCritical { g_crit: g, k_star })
}

/// `k_c = arccos(t_c / t)` with `t_c = (Delta_c - kappa)/2`, clipped to
/// `0` for `t <= t_c` and to `pi` once `kappa > Delta_c + 2t`.
pub fn critical_wavevector(t: f64, delta_c: f64, kappa: f64) -> Result<f64, StabilityError> {
    if !(t > 0.0) {
        return Err(invalid("t", "hopping must be positive"));
    }
    let tc = (delta_c - kappa) / 2.0;
    if t <= tc {
        return Ok(0.0);
    }
    let r = tc / t;
    if r <= -1.0 {
        return Ok(PI);
    }
    Ok(r.acos())
}

/// Normal-phase matrix of mode `k` over `(b_k, a_k, b+_{-k}, a+_{-k})`.
pub fn build_lattice_normal_matrix(
    k: f64,
    t: f64,
    delta_c: f64,
    delta_s: f64,
    kappa: f64,
    g: f64,
) -> CMatrix {
    fluctuation_block(band(k, t, delta_c), kappa, delta_s, 0.0, g)
}

#[rustfmt::skip]
fn fluctuation_block(dk: f64, kappa: f64, ds: f64, e: f64, g: f64) -> CMatrix {
    let z = Complex64::new(0.0, 0.0);
    let ig = I * g;
    let ie = I * (2.0 * e);
    CMatrix::from_row_slice(
        4,
        4,
        &[
            -I * ds, -ig, -ie, -ig,
            -ig, -I * dk - kappa, -ig, z,
            ie, ig, I * ds, ig,
            ig, z, ig, I * dk - kappa,
        ],
    )
}

/// `nu = G_crit(k=0)^2 / G^2` for the homogeneous superradiant branch.
pub fn sr_nu(
    t: f64,
    delta_c: f64,
    delta_s: f64,
    kappa: f64,
    g: f64,
) -> Result<f64, StabilityError> {
    let d0 = delta_c - 2.0 * t;
    if !(d0 > 0.0) {
        return Err(StabilityError::NonPositiveCavityDetuning(d0));
    }
    if !(g > 0.0) {
        return Err(invalid("G", "must be positive"));
    }
    let gc2 = d0 * delta_s / 4.0 * (1.0 + kappa * kappa / (d0 * d0));
    Ok(gc2 / (g * g))
}

/// Renormalized parameters of the superradiant fluctuation matrix:
/// `(Delta_s(nu), E(nu), G(nu))`.
pub fn sr_renormalized(nu: f64, delta_s: f64, g: f64) -> (f64, f64, f64) {
    let ds_nu =
        delta_s * ((1.0 + nu) / (2.0 * nu) + (1.0 - nu) * (3.0 + nu) / (4.0 * nu * (1.0 + nu)));
    let e_nu = delta_s * (1.0 - nu) * (3.0 + nu) / (8.0 * nu * (1.0 + nu));
    let g_nu = g * nu * (2.0 / (1.0 + nu)).sqrt();
    (ds_nu, e_nu, g_nu)
}

/// Fluctuation matrix of mode `k` around the homogeneous superradiant
/// state, over `(b_k, a_k, b+_{-k}, a+_{-k})`. Requires `0 < nu <= 1`.
pub fn build_sr_fluctuation_matrix(
    nu: f64,
    k: f64,
    t: f64,
    delta_c: f64,
    delta_s: f64,
    kappa: f64,
    g: f64,
) -> Result<CMatrix, StabilityError> {
    if nu > 1.0 {
        return Err(StabilityError::NormalPhase(nu));
    }
    if !(nu > 0.0) {
        return Err(invalid("nu", format!("must lie in (0, 1], got {nu}")));
    }
    let (ds_nu, e_nu, g_nu) = sr_renormalized(nu, delta_s, g);
    Ok(fluctuation_block(
        band(k, t, delta_c),
        kappa,
        ds_nu,
        e_nu,
        g_nu,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrStability {
    pub stable: bool,
    pub max_real_part: f64,
    /// Non-negative quasi-momentum with the largest growth rate.
    pub k_most_unstable: f64,
}

/// Scan `k` over `[0, pi]` (the band is even in `k`) and report the largest
/// growth rate of the superradiant fluctuation matrices.
pub fn sr_fluctuation_stability(
    t: f64,
    delta_c: f64,
    delta_s: f64,
    kappa: f64,
    g: f64,
    n_k: usize,
) -> Result<SrStability, StabilityError> {
    let nu = sr_nu(t, delta_c, delta_s, kappa, g)?;
    if nu > 1.0 {
        return Err(StabilityError::BelowCritical {
            g,
            g_crit: g * nu.sqrt(),
        });
    }
    let n = n_k.max(2);
    let scale = [delta_c.abs() + 2.0 * t.abs(), delta_s.abs(), kappa, g]
        .into_iter()
        .fold(0.0, f64::max);
    let tol = STABILITY_TOL_FACTOR * scale;
    let mut worst = (f64::NEG_INFINITY, 0.0);
    for j in 0..n {
        let k = PI * j as f64 / (n - 1) as f64;
        let m = build_sr_fluctuation_matrix(nu, k, t, delta_c, delta_s, kappa, g)?;
        let r = max_real_eigenvalue_with_tol(&m, 0.0, tol)?;
        if r.max_real_part > worst.0 + tol {
            worst = (r.max_real_part, k);
        }
    }
    Ok(SrStability {
        stable: worst.0 <= tol,
        max_real_part: worst.0,
        k_most_unstable: worst.1,
    })
}

/// Right-hand side `F(x)` of the Stark-shifted steady-state condition,
/// `x = |beta|^2`, with `l = lambda N / Delta_c`:
///
/// `F(x) = r^4 x (1-x) / [zeta + 2 l r^2 x / zeta]^2`, `zeta = 1 + l (1 - sqrt(1-x))`,
/// `r = G / G_crit`.
pub fn stark_f(x: f64, g: f64, g_crit: f64, lambda_n: f64, delta_c: f64) -> f64 {
    let r2 = (g / g_crit).powi(2);
    let l = lambda_n / delta_c;
    let zeta = 1.0 + l * (1.0 - (1.0 - x).sqrt());
    let den = zeta + 2.0 * l * r2 * x / zeta;
    r2 * r2 * x * (1.0 - x) / (den * den)
}

/// Initial slope `F'(0)` by a one-sided difference at `x = 1e-8`.
pub fn stark_shift_slope_check(g: f64, g_crit: f64, lambda_n: f64, delta_c: f64) -> f64 {
    let h = 1e-8;
    (stark_f(h, g, g_crit, lambda_n, delta_c) - stark_f(0.0, g, g_crit, lambda_n, delta_c)) / h
}
