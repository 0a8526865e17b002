//! Physical inputs of the driven NV-ensemble setup and their reduction to
//! effective Dicke-model parameters.
//!
//! All frequencies are plain `f64` values in one consistent unit (MHz is
//! what the CLI assumes). No factors of 2π are inserted anywhere.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{largest_remainder, EnsembleError, EnsembleSpec, FreqBin};

/// Largest ratio of drive/coupling/offset scale to the Zeeman splitting for
/// which the adiabatic elimination of `|0>` is trusted.
pub const PERTURBATIVE_LIMIT: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` is invalid: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("Zeeman splitting delta_B must be non-zero")]
    ZeroZeemanSplitting,
    #[error("ensemble has no spin groups")]
    EmptyEnsemble,
    #[error("unequal Rabi frequencies ({omega_1} vs {omega_2}) are not supported; the effective model requires g_1 = g_2")]
    AsymmetricDrive { omega_1: f64, omega_2: f64 },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// Raw experimental inputs.
///
/// Serialized field names match the configuration keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Zero-field splitting `D`.
    #[serde(rename = "D")]
    pub zero_field_splitting: f64,
    /// Zeeman splitting between `|+1>` and `|-1>`.
    #[serde(rename = "delta_B")]
    pub zeeman_splitting: f64,
    pub omega_c: f64,
    pub omega_1: f64,
    pub omega_2: f64,
    #[serde(rename = "Omega_1")]
    pub rabi_1: f64,
    #[serde(rename = "Omega_2")]
    pub rabi_2: f64,
    /// Half the photon loss rate (the master equation uses `2 kappa`).
    pub kappa: f64,
}

impl PhysicalParams {
    /// Parameters with a single homogeneous Rabi frequency on both drives.
    pub fn symmetric(
        zero_field_splitting: f64,
        zeeman_splitting: f64,
        omega_c: f64,
        omega_1: f64,
        omega_2: f64,
        rabi: f64,
        kappa: f64,
    ) -> Self {
        Self {
            zero_field_splitting,
            zeeman_splitting,
            omega_c,
            omega_1,
            omega_2,
            rabi_1: rabi,
            rabi_2: rabi,
            kappa,
        }
    }

    /// Central effective spin detuning,
    /// `delta_B - (omega_1 - omega_2)/2 - (Omega_1^2 + Omega_2^2)/(3 delta_B)`.
    pub fn mean_spin_detuning(&self) -> f64 {
        let delta_b = self.zeeman_splitting;
        delta_b
            - (self.omega_1 - self.omega_2) / 2.0
            - (self.rabi_1 * self.rabi_1 + self.rabi_2 * self.rabi_2) / (3.0 * delta_b)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = [
            ("D", self.zero_field_splitting),
            ("delta_B", self.zeeman_splitting),
            ("omega_c", self.omega_c),
            ("omega_1", self.omega_1),
            ("omega_2", self.omega_2),
            ("Omega_1", self.rabi_1),
            ("Omega_2", self.rabi_2),
            ("kappa", self.kappa),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("must be finite, got {v}"),
                });
            }
        }
        if self.zeeman_splitting == 0.0 {
            return Err(ModelError::ZeroZeemanSplitting);
        }
        if self.zeeman_splitting < 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "delta_B",
                reason: format!("must be positive, got {}", self.zeeman_splitting),
            });
        }
        if self.kappa < 0.0 {
            return Err(ModelError::InvalidParameter {
                name: "kappa",
                reason: format!("must be non-negative, got {}", self.kappa),
            });
        }
        for (name, v) in [("Omega_1", self.rabi_1), ("Omega_2", self.rabi_2)] {
            if v < 0.0 {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("must be non-negative, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// One collective spin: `n` spins sharing detuning, coupling and Stark shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinGroup {
    /// Effective two-photon spin detuning `Delta_mu`.
    pub delta: f64,
    /// Single-spin Raman coupling `g_mu`.
    pub g: f64,
    /// Single-spin Stark coefficient `lambda_mu`.
    pub lambda: f64,
    pub n: u64,
}

impl SpinGroup {
    /// Collective coupling `G_mu = g_mu sqrt(N_mu)`.
    pub fn collective_coupling(&self) -> f64 {
        self.g * (self.n as f64).sqrt()
    }
}

/// Whether the derived parameters sit inside the perturbative window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    /// `max(Omega_1, Omega_2, G_0, max|delta_i|) / delta_B`.
    pub ratio: f64,
    pub perturbative: bool,
}

impl Validity {
    pub fn from_ratio(ratio: f64) -> Self {
        Self {
            ratio,
            perturbative: ratio <= PERTURBATIVE_LIMIT,
        }
    }
}

/// Effective Dicke-model parameters for a grouped spin ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    /// Effective cavity detuning; already contains the `-sum_i lambda_i` shift.
    pub delta_c: f64,
    pub kappa: f64,
    pub groups: Vec<SpinGroup>,
    /// Central spin frequency the groups are distributed around, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_s_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity: Option<Validity>,
}

impl EffectiveParams {
    pub fn new(delta_c: f64, kappa: f64, groups: Vec<SpinGroup>) -> Result<Self, ModelError> {
        let p = Self {
            delta_c,
            kappa,
            groups,
            delta_s_bar: None,
            validity: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// A single homogeneous group of `n` spins with collective coupling `big_g`.
    pub fn homogeneous(
        delta_c: f64,
        delta_s: f64,
        kappa: f64,
        big_g: f64,
        n: u64,
    ) -> Result<Self, ModelError> {
        let g = big_g / (n as f64).sqrt();
        let mut p = Self::new(
            delta_c,
            kappa,
            vec![SpinGroup {
                delta: delta_s,
                g,
                lambda: 0.0,
                n,
            }],
        )?;
        p.delta_s_bar = Some(delta_s);
        Ok(p)
    }

    /// Groups at `delta_s_bar + delta` for each frequency bin, sharing one
    /// single-spin coupling. `n_total` spins are split over the bins by
    /// largest remainder; empty bins are dropped.
    pub fn from_frequency_bins(
        delta_c: f64,
        delta_s_bar: f64,
        kappa: f64,
        big_g: f64,
        bins: &[FreqBin],
        n_total: u64,
    ) -> Result<Self, ModelError> {
        let weights: Vec<f64> = bins.iter().map(|b| b.weight).collect();
        let counts = largest_remainder(n_total, &weights);
        let g = big_g / (n_total as f64).sqrt();
        let groups = bins
            .iter()
            .zip(counts)
            .filter(|(_, n)| *n > 0)
            .map(|(b, n)| SpinGroup {
                delta: delta_s_bar + b.delta,
                g,
                lambda: 0.0,
                n,
            })
            .collect();
        let mut p = Self::new(delta_c, kappa, groups)?;
        p.delta_s_bar = Some(delta_s_bar);
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.groups.is_empty() {
            return Err(ModelError::EmptyEnsemble);
        }
        if !self.delta_c.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "delta_c",
                reason: format!("must be finite, got {}", self.delta_c),
            });
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "kappa",
                reason: format!("must be finite and non-negative, got {}", self.kappa),
            });
        }
        for grp in &self.groups {
            if grp.n == 0 {
                return Err(ModelError::InvalidParameter {
                    name: "groups.n",
                    reason: "every group needs at least one spin".into(),
                });
            }
            if !(grp.lambda >= 0.0) {
                return Err(ModelError::InvalidParameter {
                    name: "groups.lambda",
                    reason: format!("must be non-negative, got {}", grp.lambda),
                });
            }
            if !grp.delta.is_finite() || !grp.g.is_finite() || !grp.lambda.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name: "groups",
                    reason: "group parameters must be finite".into(),
                });
            }
        }
        Ok(())
    }

    /// Total collective coupling `G = sqrt(sum_mu g_mu^2 N_mu)`.
    pub fn total_coupling(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.g * g.g * g.n as f64)
            .sum::<f64>()
            .sqrt()
    }

    /// Copy with every `g_mu` rescaled so that the total collective coupling
    /// equals `target`. Relative group weights are kept.
    pub fn with_total_coupling(&self, target: f64) -> Self {
        let current = self.total_coupling();
        let scale = if current > 0.0 { target / current } else { 0.0 };
        let mut out = self.clone();
        for grp in &mut out.groups {
            grp.g *= scale;
        }
        out
    }

    /// Copy with every Stark coefficient multiplied by `factor`.
    pub fn with_stark_scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for grp in &mut out.groups {
            grp.lambda *= factor;
        }
        out
    }

    /// Spectral-density weighted mean spin detuning, `sum G_mu^2 Delta_mu / G^2`.
    pub fn mean_spin_detuning(&self) -> f64 {
        if let Some(d) = self.delta_s_bar {
            return d;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for grp in &self.groups {
            let w = grp.g * grp.g * grp.n as f64;
            num += w * grp.delta;
            den += w;
        }
        if den > 0.0 {
            num / den
        } else {
            self.groups.iter().map(|g| g.delta).sum::<f64>() / self.groups.len() as f64
        }
    }

    pub fn total_spins(&self) -> u64 {
        self.groups.iter().map(|g| g.n).sum()
    }
}

/// Reduce physical inputs plus an ensemble description to effective
/// Dicke-model parameters.
///
/// Uses `g = g_0 Omega / delta_B`, `lambda = 2 g_0^2 / delta_B`,
/// `Delta_c = omega_c - (omega_1 + omega_2)/2 - sum_i lambda_i` and
/// `Delta_s^i = delta_B - (omega_1 - omega_2)/2 + delta_i - (Omega_1^2 + Omega_2^2)/(3 delta_B)`.
/// Groups whose rounded population is zero are dropped.
pub fn derive_effective_params(
    phys: &PhysicalParams,
    ensemble: &EnsembleSpec,
) -> Result<EffectiveParams, ModelError> {
    phys.validate()?;
    ensemble.validate()?;
    if phys.rabi_1 != phys.rabi_2 {
        return Err(ModelError::AsymmetricDrive {
            omega_1: phys.rabi_1,
            omega_2: phys.rabi_2,
        });
    }
    let delta_b = phys.zeeman_splitting;
    let rabi = phys.rabi_1;
    let delta_s_bar = phys.mean_spin_detuning();

    let counts = ensemble.group_counts();
    let mut groups = Vec::new();
    for (cb, row) in ensemble.coupling_bins.iter().zip(&counts) {
        let g = cb.g0 * rabi / delta_b;
        let lambda = 2.0 * cb.g0 * cb.g0 / delta_b;
        for (fb, &n) in ensemble.freq_bins.iter().zip(row) {
            if n == 0 {
                continue;
            }
            groups.push(SpinGroup {
                delta: delta_s_bar + fb.delta,
                g,
                lambda,
                n,
            });
        }
    }
    if groups.is_empty() {
        return Err(ModelError::EmptyEnsemble);
    }

    let sum_lambda_n: f64 = groups.iter().map(|g| g.lambda * g.n as f64).sum();
    let delta_c = phys.omega_c - (phys.omega_1 + phys.omega_2) / 2.0 - sum_lambda_n;

    let g0_total = ensemble.bare_collective_coupling();
    let max_offset = ensemble
        .freq_bins
        .iter()
        .map(|b| b.delta.abs())
        .fold(0.0, f64::max);
    let ratio = [phys.rabi_1, phys.rabi_2, g0_total, max_offset]
        .into_iter()
        .fold(0.0, f64::max)
        / delta_b;

    let out = EffectiveParams {
        delta_c,
        kappa: phys.kappa,
        groups,
        delta_s_bar: Some(delta_s_bar),
        validity: Some(Validity::from_ratio(ratio)),
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{Correlation, CouplingBin};

    fn spec(g0: &[(f64, u64)], freq: &[(f64, f64)]) -> EnsembleSpec {
        EnsembleSpec {
            coupling_bins: g0
                .iter()
                .map(|&(g0, count)| CouplingBin { g0, count })
                .collect(),
            freq_bins: freq
                .iter()
                .map(|&(delta, weight)| FreqBin { delta, weight })
                .collect(),
            correlation: Correlation::Independent,
        }
    }

    fn phys(rabi: f64) -> PhysicalParams {
        PhysicalParams::symmetric(2880.0, 100.0, 2881.0, 2980.0, 2782.0, rabi, 0.5)
    }

    #[test]
    fn raman_coupling_scales_with_drive() {
        // 10 Hz bare coupling in MHz units
        let g0 = 10e-6;
        let p = derive_effective_params(&phys(20.0), &spec(&[(g0, 1)], &[(0.0, 1.0)])).unwrap();
        let grp = p.groups[0];
        assert!((grp.g - 2e-6).abs() < 1e-18);
        // lambda = 2 g0^2 / delta_B = 2e-12 MHz = 2e-6 Hz
        assert!((grp.lambda - 2e-12).abs() < 1e-24);
    }

    #[test]
    fn stark_terms_vanish_without_drive() {
        let p = derive_effective_params(&phys(0.0), &spec(&[(1e-5, 3)], &[(0.0, 1.0)])).unwrap();
        let expected = 100.0 - (2980.0 - 2782.0) / 2.0;
        assert_eq!(p.groups[0].delta, expected);
        assert_eq!(p.delta_s_bar, Some(expected));
    }

    #[test]
    fn cavity_detuning_includes_total_stark_shift() {
        let s = spec(
            &[(1e-5, 1000), (3e-5, 500)],
            &[(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)],
        );
        let p = derive_effective_params(&phys(10.0), &s).unwrap();
        let sum: f64 = p.groups.iter().map(|g| g.lambda * g.n as f64).sum();
        assert_eq!(p.delta_c, 2881.0 - (2980.0 + 2782.0) / 2.0 - sum);
        assert_eq!(p.total_spins(), 1500);
    }

    #[test]
    fn common_drive_offset_moves_only_the_cavity_detuning() {
        let s = spec(&[(1e-5, 10)], &[(0.5, 1.0)]);
        let base = derive_effective_params(&phys(5.0), &s).unwrap();
        let mut shifted = phys(5.0);
        shifted.omega_1 += 0.75;
        shifted.omega_2 += 0.75;
        let moved = derive_effective_params(&shifted, &s).unwrap();
        assert!((moved.delta_c - (base.delta_c - 0.75)).abs() < 1e-9);
        assert_eq!(moved.groups[0].delta, base.groups[0].delta);
    }

    #[test]
    fn coupling_scale_propagates() {
        let s1 = spec(&[(1e-5, 10), (2e-5, 4)], &[(0.0, 1.0)]);
        let s3 = spec(&[(3e-5, 10), (6e-5, 4)], &[(0.0, 1.0)]);
        let a = derive_effective_params(&phys(5.0), &s1).unwrap();
        let b = derive_effective_params(&phys(5.0), &s3).unwrap();
        for (x, y) in a.groups.iter().zip(&b.groups) {
            assert!((y.g / x.g - 3.0).abs() < 1e-12);
            assert!((y.lambda / x.lambda - 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = spec(&[(1e-5, 10)], &[(0.0, 1.0)]);
        let mut p = phys(5.0);
        p.zeeman_splitting = 0.0;
        assert_eq!(
            derive_effective_params(&p, &s),
            Err(ModelError::ZeroZeemanSplitting)
        );

        let mut p = phys(5.0);
        p.rabi_2 = 4.0;
        assert!(matches!(
            derive_effective_params(&p, &s),
            Err(ModelError::AsymmetricDrive { .. })
        ));

        let empty = spec(&[], &[(0.0, 1.0)]);
        assert!(derive_effective_params(&phys(5.0), &empty).is_err());
    }

    #[test]
    fn validity_flag_is_a_warning() {
        let s = spec(&[(1e-5, 10)], &[(0.0, 1.0)]);
        let ok = derive_effective_params(&phys(20.0), &s).unwrap();
        assert!(ok.validity.unwrap().perturbative);
        let strong = derive_effective_params(&phys(30.0), &s).unwrap();
        let v = strong.validity.unwrap();
        assert!(!v.perturbative);
        assert!((v.ratio - 0.3).abs() < 1e-12);
    }
}
