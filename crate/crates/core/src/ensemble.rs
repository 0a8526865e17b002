//! Discretized inhomogeneous spin ensembles: coupling histograms, frequency
//! line shapes, binning and collective quantities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::model::EffectiveParams;
use crate::quadrature;

/// Default number of coupling bins.
pub const DEFAULT_COUPLING_BINS: usize = 15;
/// Default number of frequency bins.
pub const DEFAULT_FREQUENCY_BINS: usize = 51;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("invalid input `{name}`: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("q-Gaussian shape parameter q = {0} is outside (1, 2]")]
    QOutOfRange(f64),
    #[error("need at least 3 frequency bins and an odd count, got {0}")]
    TooFewBins(usize),
    #[error("frequency weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("ensemble contains no spins")]
    NoSpins,
    #[error(transparent)]
    Quadrature(#[from] quadrature::QuadratureError),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> EnsembleError {
    EnsembleError::Invalid {
        name,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingBin {
    /// Bare single-spin vacuum coupling.
    pub g0: f64,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqBin {
    /// Frequency offset from the central spin frequency.
    pub delta: f64,
    pub weight: f64,
}

/// How coupling and frequency distributions are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    /// Couplings and frequency offsets are statistically independent.
    #[default]
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub coupling_bins: Vec<CouplingBin>,
    pub freq_bins: Vec<FreqBin>,
    #[serde(default)]
    pub correlation: Correlation,
}

impl EnsembleSpec {
    pub fn new(
        coupling_bins: Vec<CouplingBin>,
        freq_bins: Vec<FreqBin>,
    ) -> Result<Self, EnsembleError> {
        let s = Self {
            coupling_bins,
            freq_bins,
            correlation: Correlation::Independent,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.coupling_bins.is_empty() {
            return Err(invalid("coupling_bins", "no coupling bins"));
        }
        if self.freq_bins.is_empty() {
            return Err(invalid("freq_bins", "no frequency bins"));
        }
        if self.coupling_bins.iter().all(|b| b.count == 0) {
            return Err(EnsembleError::NoSpins);
        }
        for b in &self.coupling_bins {
            if !b.g0.is_finite() || b.g0 < 0.0 {
                return Err(invalid(
                    "coupling_bins.g0",
                    format!("bad coupling {}", b.g0),
                ));
            }
        }
        let mut sum = 0.0;
        for b in &self.freq_bins {
            if !(b.weight >= 0.0) || !b.delta.is_finite() {
                return Err(invalid("freq_bins", format!("bad bin {b:?}")));
            }
            sum += b.weight;
        }
        if (sum - 1.0).abs() > 1e-10 {
            return Err(EnsembleError::WeightsNotNormalized(sum));
        }
        Ok(())
    }

    /// Integer populations `N_{mu,nu}`; row `mu` sums exactly to the count of
    /// coupling bin `mu`.
    pub fn group_counts(&self) -> Vec<Vec<u64>> {
        let weights: Vec<f64> = self.freq_bins.iter().map(|b| b.weight).collect();
        self.coupling_bins
            .iter()
            .map(|b| largest_remainder(b.count, &weights))
            .collect()
    }

    pub fn total_spins(&self) -> u64 {
        self.coupling_bins.iter().map(|b| b.count).sum()
    }

    /// Bare collective coupling `G_0 = sqrt(sum_i (g_0^i)^2)`.
    pub fn bare_collective_coupling(&self) -> f64 {
        self.coupling_bins
            .iter()
            .map(|b| b.g0 * b.g0 * b.count as f64)
            .sum::<f64>()
            .sqrt()
    }
}

/// Split `total` into integer parts proportional to `weights` (Hamilton's
/// method). Ties in the remainders go to the lower index.
pub fn largest_remainder(total: u64, weights: &[f64]) -> Vec<u64> {
    let wsum: f64 = weights.iter().sum();
    if weights.is_empty() || wsum <= 0.0 {
        return vec![0; weights.len()];
    }
    let mut parts = Vec::with_capacity(weights.len());
    let mut rems = Vec::with_capacity(weights.len());
    let mut assigned: u64 = 0;
    for (i, &w) in weights.iter().enumerate() {
        let exact = total as f64 * (w / wsum);
        let base = exact.floor().max(0.0) as u64;
        parts.push(base);
        rems.push((exact - base as f64, i));
        assigned += base;
    }
    // Rounding in `exact` can overshoot by a few units for huge totals.
    while assigned > total {
        let i = (0..parts.len())
            .filter(|&i| parts[i] > 0)
            .min_by(|&a, &b| rems[a].0.total_cmp(&rems[b].0))
            .expect("positive part exists");
        parts[i] -= 1;
        assigned -= 1;
    }
    rems.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = total - assigned;
    let mut k = 0;
    while left > 0 {
        parts[rems[k % rems.len()].1] += 1;
        left -= 1;
        k += 1;
    }
    parts
}

/// Lorentzian density with full width at half maximum `gamma_s`.
pub fn lorentzian_pdf(omega: f64, gamma_s: f64) -> f64 {
    debug_assert!(gamma_s > 0.0);
    (gamma_s / (2.0 * PI)) / (omega * omega + 0.25 * gamma_s * gamma_s)
}

/// Scale parameter `a` of a q-Gaussian with FWHM `gamma_s`.
pub fn q_gaussian_scale(gamma_s: f64, q: f64) -> f64 {
    let half_width_factor = ((2f64.powf(q) - 2.0) / (2.0 * q - 2.0)).sqrt();
    0.5 * gamma_s / half_width_factor
}

/// Normalization constant `C_q` for scale `a`.
pub fn q_gaussian_norm(a: f64, q: f64) -> f64 {
    let ratio = (ln_gamma(1.0 / (q - 1.0)) - ln_gamma((3.0 - q) / (2.0 * (q - 1.0)))).exp();
    ((q - 1.0) / (PI * a * a)).sqrt() * ratio
}

/// q-Gaussian density `C_q [1 + (q-1) w^2/a^2]^(1/(1-q))` with FWHM `gamma_s`.
pub fn q_gaussian_pdf(omega: f64, gamma_s: f64, q: f64) -> Result<f64, EnsembleError> {
    check_q(q)?;
    if !(gamma_s > 0.0) {
        return Err(invalid("gamma_s", "must be positive"));
    }
    let a = q_gaussian_scale(gamma_s, q);
    Ok(q_gaussian_eval(omega, a, q_gaussian_norm(a, q), q))
}

fn q_gaussian_eval(omega: f64, a: f64, c_q: f64, q: f64) -> f64 {
    c_q * (1.0 + (q - 1.0) * omega * omega / (a * a)).powf(-1.0 / (q - 1.0))
}

fn check_q(q: f64) -> Result<(), EnsembleError> {
    if q > 1.0 && q <= 2.0 {
        Ok(())
    } else {
        Err(EnsembleError::QOutOfRange(q))
    }
}

/// Shape of the inhomogeneous offset distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LineShape {
    Delta,
    Lorentzian {
        gamma_s: f64,
    },
    QGaussian {
        gamma_s: f64,
        q: f64,
    },
    /// Piecewise-linear density through `(offset, density)` points, zero
    /// outside the table. Normalized on construction.
    CustomTable {
        points: Vec<(f64, f64)>,
    },
}

/// Distribution `P_delta` of frequency offsets, peaked at `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyDistribution {
    #[serde(flatten)]
    pub shape: LineShape,
    #[serde(default)]
    pub center: f64,
}

impl FrequencyDistribution {
    pub fn delta() -> Self {
        Self {
            shape: LineShape::Delta,
            center: 0.0,
        }
    }

    pub fn lorentzian(gamma_s: f64) -> Result<Self, EnsembleError> {
        let d = Self {
            shape: LineShape::Lorentzian { gamma_s },
            center: 0.0,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn q_gaussian(gamma_s: f64, q: f64) -> Result<Self, EnsembleError> {
        let d = Self {
            shape: LineShape::QGaussian { gamma_s, q },
            center: 0.0,
        };
        d.validate()?;
        Ok(d)
    }

    /// Tabulated density; points are sorted and rescaled to unit area.
    pub fn custom_table(mut points: Vec<(f64, f64)>) -> Result<Self, EnsembleError> {
        if points.len() < 2 {
            return Err(invalid("points", "need at least two table points"));
        }
        if points.iter().any(|p| !p.0.is_finite() || !(p.1 >= 0.0)) {
            return Err(invalid(
                "points",
                "offsets must be finite and densities non-negative",
            ));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let area: f64 = points
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
            .sum();
        if !(area > 0.0) {
            return Err(invalid("points", "table has zero area"));
        }
        for p in &mut points {
            p.1 /= area;
        }
        Ok(Self {
            shape: LineShape::CustomTable { points },
            center: 0.0,
        })
    }

    pub fn with_center(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if !self.center.is_finite() {
            return Err(invalid("center", "must be finite"));
        }
        match &self.shape {
            LineShape::Delta | LineShape::CustomTable { .. } => Ok(()),
            LineShape::Lorentzian { gamma_s } => {
                if *gamma_s > 0.0 && gamma_s.is_finite() {
                    Ok(())
                } else {
                    Err(invalid(
                        "gamma_s",
                        format!("must be positive, got {gamma_s}"),
                    ))
                }
            }
            LineShape::QGaussian { gamma_s, q } => {
                check_q(*q)?;
                if *gamma_s > 0.0 && gamma_s.is_finite() {
                    Ok(())
                } else {
                    Err(invalid(
                        "gamma_s",
                        format!("must be positive, got {gamma_s}"),
                    ))
                }
            }
        }
    }

    /// Full width at half maximum, where defined.
    pub fn fwhm(&self) -> Option<f64> {
        match self.shape {
            LineShape::Lorentzian { gamma_s } | LineShape::QGaussian { gamma_s, .. } => {
                Some(gamma_s)
            }
            LineShape::Delta => Some(0.0),
            LineShape::CustomTable { .. } => None,
        }
    }

    pub fn is_delta(&self) -> bool {
        matches!(self.shape, LineShape::Delta)
    }

    /// Density at offset `x`. The delta shape has no density and returns 0.
    pub fn pdf(&self, x: f64) -> f64 {
        let w = x - self.center;
        match &self.shape {
            LineShape::Delta => 0.0,
            LineShape::Lorentzian { gamma_s } => lorentzian_pdf(w, *gamma_s),
            LineShape::QGaussian { gamma_s, q } => {
                let a = q_gaussian_scale(*gamma_s, *q);
                q_gaussian_eval(w, a, q_gaussian_norm(a, *q), *q)
            }
            LineShape::CustomTable { points } => table_lookup(points, w),
        }
    }

    /// Characteristic width used to scale quadrature meshes.
    pub(crate) fn width_scale(&self) -> f64 {
        match &self.shape {
            LineShape::Delta => 0.0,
            LineShape::Lorentzian { gamma_s } | LineShape::QGaussian { gamma_s, .. } => *gamma_s,
            LineShape::CustomTable { points } => {
                let lo = points.first().map(|p| p.0).unwrap_or(0.0);
                let hi = points.last().map(|p| p.0).unwrap_or(0.0);
                (hi - lo).max(f64::MIN_POSITIVE)
            }
        }
    }
}

fn table_lookup(points: &[(f64, f64)], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x < first.0 || x > last.0 {
        return 0.0;
    }
    let idx = points.partition_point(|p| p.0 <= x);
    if idx == 0 {
        return first.1;
    }
    if idx >= points.len() {
        return last.1;
    }
    let (x0, y0) = points[idx - 1];
    let (x1, y1) = points[idx];
    if x1 == x0 {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Bin a frequency distribution into `n_bins` equal-width bins covering
/// `span` around its center.
///
/// Weights are the density integrated over each bin with one 15-point
/// Kronrod panel, then renormalized to sum to one; tails outside the span
/// are dropped. A delta distribution gives a single bin of weight one.
pub fn discretize(
    dist: &FrequencyDistribution,
    n_bins: usize,
    span: f64,
) -> Result<Vec<FreqBin>, EnsembleError> {
    check_bins(dist, n_bins, span)?;
    if dist.is_delta() {
        return Ok(vec![FreqBin {
            delta: dist.center,
            weight: 1.0,
        }]);
    }
    bin_with_step(dist, n_bins, span / n_bins as f64)
}

/// Like [`discretize`], but the bin width is adjusted (the span changes
/// slightly) so that the offset `pole` falls exactly on a bin edge.
///
/// Use `pole = -Delta_s_bar` when the bins feed the discrete critical-coupling
/// sum: no spin group then sits arbitrarily close to zero detuning, and the
/// groups pair up symmetrically around it.
pub fn discretize_pole_aligned(
    dist: &FrequencyDistribution,
    n_bins: usize,
    span: f64,
    pole: f64,
) -> Result<Vec<FreqBin>, EnsembleError> {
    check_bins(dist, n_bins, span)?;
    if dist.is_delta() {
        return Ok(vec![FreqBin {
            delta: dist.center,
            weight: 1.0,
        }]);
    }
    let distance = (dist.center - pole).abs();
    if distance == 0.0 {
        return Err(invalid(
            "pole",
            "pole coincides with the distribution center",
        ));
    }
    let nominal = span / n_bins as f64;
    let m = (distance / nominal - 0.5).round().max(0.0);
    bin_with_step(dist, n_bins, distance / (m + 0.5))
}

fn check_bins(dist: &FrequencyDistribution, n_bins: usize, span: f64) -> Result<(), EnsembleError> {
    dist.validate()?;
    if n_bins < 3 || n_bins.is_multiple_of(2) {
        return Err(EnsembleError::TooFewBins(n_bins));
    }
    if !(span > 0.0) || !span.is_finite() {
        return Err(invalid("span", format!("must be positive, got {span}")));
    }
    Ok(())
}

fn bin_with_step(
    dist: &FrequencyDistribution,
    n_bins: usize,
    h: f64,
) -> Result<Vec<FreqBin>, EnsembleError> {
    let mid = (n_bins / 2) as f64;
    let f = |x: f64| dist.pdf(x);
    let mut bins: Vec<FreqBin> = (0..n_bins)
        .map(|j| {
            let delta = dist.center + (j as f64 - mid) * h;
            let (w, _) = quadrature::gk15(&f, delta - 0.5 * h, delta + 0.5 * h);
            FreqBin { delta, weight: w }
        })
        .collect();
    let total: f64 = bins.iter().map(|b| b.weight).sum();
    if !(total > 0.0) {
        return Err(invalid(
            "dist",
            "no probability mass inside the binned span",
        ));
    }
    for b in &mut bins {
        b.weight /= total;
    }
    Ok(bins)
}

/// Ensemble-level coupling quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collective {
    /// `G = sqrt(sum g_mu^2 N_mu)`.
    pub g: f64,
    /// Characteristic photon number `N_c = (sum g_mu N_mu)^2 / G^2`.
    pub n_c: f64,
    /// `sum lambda_mu N_mu`.
    pub sum_lambda_n: f64,
}

pub fn collective_quantities(ens: &EffectiveParams) -> Collective {
    let mut g2 = 0.0;
    let mut gn = 0.0;
    let mut ln = 0.0;
    for grp in &ens.groups {
        let n = grp.n as f64;
        g2 += grp.g * grp.g * n;
        gn += grp.g * n;
        ln += grp.lambda * n;
    }
    let n_c = if g2 > 0.0 { gn * gn / g2 } else { 0.0 };
    Collective {
        g: g2.sqrt(),
        n_c,
        sum_lambda_n: ln,
    }
}

/// Collective cooperativity `2 G^2 / (kappa gamma_s)`.
pub fn cooperativity(big_g: f64, kappa: f64, gamma_s: f64) -> Result<f64, EnsembleError> {
    if !(kappa > 0.0) {
        return Err(invalid("kappa", "must be positive"));
    }
    if !(gamma_s > 0.0) {
        return Err(invalid("gamma_s", "must be positive"));
    }
    Ok(2.0 * big_g * big_g / (kappa * gamma_s))
}

/// Surrogate sample geometry for the bare coupling histogram.
///
/// The stripline center conductor is a line current running along `z` at
/// lateral position `x = 0`, a distance `conductor_depth_um` below the chip
/// surface. The coupling falls off as `1/r` with the distance `r` from that
/// axis and equals `g0_ref` at height `ref_height_um` straight above it.
/// The sample is a box resting on the surface, centered over the conductor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFieldSpec {
    pub width_um: f64,
    pub height_um: f64,
    pub length_um: f64,
    /// NV density in cm^-3.
    pub density_cm3: f64,
    /// Bare coupling at the reference point (frequency units, e.g. MHz).
    pub g0_ref: f64,
    pub ref_height_um: f64,
    pub conductor_depth_um: f64,
    pub grid_x: usize,
    pub grid_y: usize,
    pub n_bins: usize,
    /// Couplings above this count-weighted quantile all land in the last bin.
    pub cap_quantile: f64,
}

impl Default for SyntheticFieldSpec {
    fn default() -> Self {
        Self {
            width_um: 50.0,
            height_um: 100.0,
            length_um: 500.0,
            density_cm3: 1e18,
            g0_ref: 1e-5,
            ref_height_um: 5.0,
            conductor_depth_um: 5.0,
            grid_x: 100,
            grid_y: 200,
            n_bins: DEFAULT_COUPLING_BINS,
            cap_quantile: 0.99,
        }
    }
}

impl SyntheticFieldSpec {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        for (name, v) in [
            ("width_um", self.width_um),
            ("height_um", self.height_um),
            ("length_um", self.length_um),
            ("g0_ref", self.g0_ref),
            ("ref_height_um", self.ref_height_um),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(
                    name,
                    format!("must be finite and non-negative, got {v}"),
                ));
            }
        }
        if !(self.density_cm3 > 0.0) {
            return Err(invalid("density_cm3", "NV density must be positive"));
        }
        if !(self.conductor_depth_um > 0.0) {
            return Err(invalid("conductor_depth_um", "must be positive"));
        }
        if self.grid_x == 0 || self.grid_y == 0 || self.n_bins == 0 {
            return Err(invalid("grid", "grid sizes and bin count must be positive"));
        }
        if !(self.cap_quantile > 0.0 && self.cap_quantile <= 1.0) {
            return Err(invalid("cap_quantile", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Number of NV centers in the box.
    pub fn total_spins(&self) -> f64 {
        let cm3 = (self.width_um * 1e-4) * (self.height_um * 1e-4) * (self.length_um * 1e-4);
        self.density_cm3 * cm3
    }

    /// Bare coupling at lateral offset `x` and height `y` (micrometres).
    pub fn coupling_at(&self, x_um: f64, y_um: f64) -> f64 {
        let d = self.conductor_depth_um;
        let r = (x_um * x_um + (y_um + d) * (y_um + d)).sqrt();
        self.g0_ref * (self.ref_height_um + d) / r
    }

    /// Copy with `g0_ref` chosen so the bare collective coupling
    /// `sqrt(sum_i g0_i^2)` equals `target`.
    pub fn calibrated_to(&self, target: f64) -> Result<Self, EnsembleError> {
        let bins = synthetic_coupling_histogram(self)?;
        let g0 = EnsembleSpec {
            coupling_bins: bins,
            freq_bins: vec![FreqBin {
                delta: 0.0,
                weight: 1.0,
            }],
            correlation: Correlation::Independent,
        }
        .bare_collective_coupling();
        if !(g0 > 0.0) {
            return Err(EnsembleError::NoSpins);
        }
        let mut out = self.clone();
        out.g0_ref *= target / g0;
        Ok(out)
    }
}

/// Histogram of bare couplings over a regular grid of sample positions.
///
/// Bin representatives are count-weighted RMS couplings, so the histogram
/// reproduces `sum_i g0_i^2` of the sampled positions exactly.
pub fn synthetic_coupling_histogram(
    spec: &SyntheticFieldSpec,
) -> Result<Vec<CouplingBin>, EnsembleError> {
    spec.validate()?;
    let total = spec.total_spins().round();
    if !(total >= 1.0) {
        return Err(EnsembleError::NoSpins);
    }
    let (nx, ny) = (spec.grid_x, spec.grid_y);
    let mut samples: Vec<f64> = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        let x = -0.5 * spec.width_um + (i as f64 + 0.5) * spec.width_um / nx as f64;
        for j in 0..ny {
            let y = (j as f64 + 0.5) * spec.height_um / ny as f64;
            samples.push(spec.coupling_at(x, y));
        }
    }
    samples.sort_by(|a, b| a.total_cmp(b));
    let lo = samples[0];
    let cap_idx =
        ((spec.cap_quantile * samples.len() as f64).ceil() as usize).clamp(1, samples.len()) - 1;
    let cap = samples[cap_idx];
    let nb = spec.n_bins;
    let width = (cap - lo) / nb as f64;

    let mut cell_count = vec![0usize; nb];
    let mut g2_sum = vec![0.0; nb];
    for &g in &samples {
        let b = if width > 0.0 {
            (((g - lo) / width) as usize).min(nb - 1)
        } else {
            0
        };
        cell_count[b] += 1;
        g2_sum[b] += g * g;
    }
    let weights: Vec<f64> = cell_count.iter().map(|&c| c as f64).collect();
    let counts = largest_remainder(total as u64, &weights);
    let bins = (0..nb)
        .filter(|&b| cell_count[b] > 0 && counts[b] > 0)
        .map(|b| CouplingBin {
            g0: (g2_sum[b] / cell_count[b] as f64).sqrt(),
            count: counts[b],
        })
        .collect::<Vec<_>>();
    if bins.is_empty() {
        return Err(EnsembleError::NoSpins);
    }
    Ok(bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpinGroup;

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..n {
            s += f(a + i as f64 * h);
        }
        s * h
    }

    #[test]
    fn lorentzian_values() {
        // unit-area line of FWHM 2 peaks at 1/pi
        assert!((lorentzian_pdf(0.0, 2.0) - std::f64::consts::FRAC_1_PI).abs() < 1e-15);
        let g = 0.7;
        let peak = 2.0 / (PI * g);
        assert!((lorentzian_pdf(0.0, g) - peak).abs() < 1e-14);
        assert!((lorentzian_pdf(0.5 * g, g) - 0.5 * peak).abs() < 1e-14);
        assert!((lorentzian_pdf(-0.5 * g, g) - 0.5 * peak).abs() < 1e-14);
    }

    #[test]
    fn lorentzian_normalization_by_quadrature() {
        let g = 1.3;
        let v = quadrature::integrate(|w| lorentzian_pdf(w, g), -1e3 * g, 1e3 * g, 1e-10, 1e-10)
            .unwrap();
        assert!((v - 1.0).abs() < 1e-3);
    }

    #[test]
    fn q_gaussian_at_two_is_lorentzian() {
        for i in 0..1000 {
            let w = -20.0 + 40.0 * i as f64 / 999.0;
            let a = q_gaussian_pdf(w, 1.7, 2.0).unwrap();
            let b = lorentzian_pdf(w, 1.7);
            assert!((a - b).abs() < 1e-10, "w={w}: {a} vs {b}");
        }
    }

    #[test]
    fn q_gaussian_half_maximum_and_norm() {
        for &q in &[1.05, 1.3, 1.6, 1.8] {
            let g = 2.0;
            let a = q_gaussian_scale(g, q);
            let c = q_gaussian_norm(a, q);
            let p0 = q_gaussian_pdf(0.0, g, q).unwrap();
            assert!((p0 - c).abs() < 1e-14);
            let ph = q_gaussian_pdf(0.5 * g, g, q).unwrap();
            assert!((ph / p0 - 0.5).abs() < 1e-12, "q={q}");
            // independent trapezoid oracle on a wide grid plus analytic-free tail bound
            let area = trapezoid(
                |w| q_gaussian_pdf(w, g, q).unwrap(),
                -4000.0,
                4000.0,
                4_000_000,
            );
            assert!((area - 1.0).abs() < 1e-4, "q={q}: area {area}");
        }
    }

    #[test]
    fn q_out_of_range_rejected() {
        assert_eq!(
            q_gaussian_pdf(0.0, 1.0, 1.0),
            Err(EnsembleError::QOutOfRange(1.0))
        );
        assert_eq!(
            q_gaussian_pdf(0.0, 1.0, 2.5),
            Err(EnsembleError::QOutOfRange(2.5))
        );
        assert!(FrequencyDistribution::q_gaussian(1.0, 0.5).is_err());
    }

    #[test]
    fn largest_remainder_conserves_totals() {
        let parts = largest_remainder(10, &[0.33, 0.33, 0.34]);
        assert_eq!(parts.iter().sum::<u64>(), 10);
        assert_eq!(parts, vec![3, 3, 4]);
        let big = largest_remainder(2_500_000_000_000, &[0.1; 10]);
        assert_eq!(big.iter().sum::<u64>(), 2_500_000_000_000);
    }

    #[test]
    fn delta_discretizes_to_single_bin() {
        let bins = discretize(&FrequencyDistribution::delta(), 51, 1.0).unwrap();
        assert_eq!(
            bins,
            vec![FreqBin {
                delta: 0.0,
                weight: 1.0
            }]
        );
    }

    #[test]
    fn lorentzian_bins_are_symmetric() {
        let d = FrequencyDistribution::lorentzian(0.8).unwrap();
        let bins = discretize(&d, 51, 8.0).unwrap();
        assert_eq!(bins.len(), 51);
        assert_eq!(bins[25].delta, 0.0);
        let s: f64 = bins.iter().map(|b| b.weight).sum();
        assert!((s - 1.0).abs() < 1e-12);
        for j in 0..25 {
            assert!((bins[j].weight - bins[50 - j].weight).abs() < 1e-14);
            assert!((bins[j].delta + bins[50 - j].delta).abs() < 1e-12);
        }
    }

    #[test]
    fn discretize_rejects_bad_counts() {
        let d = FrequencyDistribution::lorentzian(1.0).unwrap();
        assert_eq!(discretize(&d, 1, 10.0), Err(EnsembleError::TooFewBins(1)));
        assert_eq!(discretize(&d, 50, 10.0), Err(EnsembleError::TooFewBins(50)));
    }

    #[test]
    fn pole_aligned_grid_puts_pole_on_edge() {
        let d = FrequencyDistribution::lorentzian(2.0).unwrap();
        let bins = discretize_pole_aligned(&d, 51, 20.0, -1.0).unwrap();
        let h = bins[1].delta - bins[0].delta;
        // distance from pole to the nearest bin center is half a bin
        let nearest = bins
            .iter()
            .map(|b| (b.delta + 1.0).abs())
            .fold(f64::INFINITY, f64::min);
        assert!((nearest - 0.5 * h).abs() < 1e-12);
    }

    #[test]
    fn discretize_is_deterministic() {
        let d = FrequencyDistribution::q_gaussian(1.5, 1.3).unwrap();
        let a = discretize(&d, 51, 9.0).unwrap();
        let b = discretize(&d, 51, 9.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.weight.to_bits(), y.weight.to_bits());
            assert_eq!(x.delta.to_bits(), y.delta.to_bits());
        }
    }

    #[test]
    fn custom_table_is_normalized() {
        let d =
            FrequencyDistribution::custom_table(vec![(-1.0, 0.0), (0.0, 2.0), (1.0, 0.0)]).unwrap();
        assert!((d.pdf(0.0) - 1.0).abs() < 1e-15);
        assert!((d.pdf(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(d.pdf(2.0), 0.0);
    }

    fn grp(g: f64, n: u64) -> SpinGroup {
        SpinGroup {
            delta: 1.0,
            g,
            lambda: 0.0,
            n,
        }
    }

    #[test]
    fn collective_single_and_merged_groups() {
        let one = EffectiveParams::new(1.0, 0.1, vec![grp(0.01, 400)]).unwrap();
        let c = collective_quantities(&one);
        assert!((c.g - 0.2).abs() < 1e-15);
        assert!((c.n_c - 400.0).abs() < 1e-9);

        let two = EffectiveParams::new(1.0, 0.1, vec![grp(0.01, 400), grp(0.01, 400)]).unwrap();
        let c2 = collective_quantities(&two);
        assert!((c2.g - 0.01 * 800f64.sqrt()).abs() < 1e-15);
        assert!((c2.n_c - 800.0).abs() < 1e-9);
    }

    #[test]
    fn cooperativity_values() {
        assert!((cooperativity(1.5, 0.1, 20.0).unwrap() - 2.25).abs() < 1e-12);
        assert_eq!(cooperativity(0.0, 0.1, 20.0).unwrap(), 0.0);
        let a = cooperativity(0.3, 0.2, 1.0).unwrap();
        let b = cooperativity(0.6, 0.2, 1.0).unwrap();
        assert!((b / a - 4.0).abs() < 1e-12);
        assert!(cooperativity(1.0, 0.0, 1.0).is_err());
        assert!(cooperativity(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn synthetic_default_geometry_spin_count() {
        let spec = SyntheticFieldSpec::default();
        // 50 um x 100 um x 500 um = 2.5e-6 cm^3 at 1e18 cm^-3
        let expected = 2.5e12;
        assert!((spec.total_spins() - expected).abs() / expected < 1e-12);
        let bins = synthetic_coupling_histogram(&spec).unwrap();
        let n: u64 = bins.iter().map(|b| b.count).sum();
        assert_eq!(n, 2_500_000_000_000);
        assert!(bins.len() <= DEFAULT_COUPLING_BINS);
    }

    #[test]
    fn synthetic_histogram_is_linear_in_reference_field() {
        let spec = SyntheticFieldSpec::default();
        let half = SyntheticFieldSpec {
            g0_ref: 0.5 * spec.g0_ref,
            ..spec.clone()
        };
        let a = synthetic_coupling_histogram(&spec).unwrap();
        let b = synthetic_coupling_histogram(&half).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.count, y.count);
            assert!((y.g0 - 0.5 * x.g0).abs() <= 1e-15 * x.g0);
        }
    }

    #[test]
    fn thin_column_over_axis_has_surface_coupling() {
        // a vanishing box directly above the conductor sees only the surface value
        let spec = SyntheticFieldSpec {
            width_um: 1e-6,
            height_um: 1e-6,
            length_um: 5e6,
            density_cm3: 1e23,
            ..SyntheticFieldSpec::default()
        };
        let surface = spec.coupling_at(0.0, 0.0);
        for b in synthetic_coupling_histogram(&spec).unwrap() {
            assert!((b.g0 - surface).abs() < 1e-6 * surface);
        }
    }

    #[test]
    fn synthetic_rejects_zero_density() {
        let spec = SyntheticFieldSpec {
            density_cm3: 0.0,
            ..SyntheticFieldSpec::default()
        };
        assert!(synthetic_coupling_histogram(&spec).is_err());
    }

    #[test]
    fn calibration_hits_target_bare_coupling() {
        let spec = SyntheticFieldSpec::default().calibrated_to(7.5).unwrap();
        let bins = synthetic_coupling_histogram(&spec).unwrap();
        let s = EnsembleSpec::new(
            bins,
            vec![FreqBin {
                delta: 0.0,
                weight: 1.0,
            }],
        )
        .unwrap();
        assert!((s.bare_collective_coupling() - 7.5).abs() < 1e-9);
    }

    #[test]
    fn ensemble_spec_validation() {
        let bad = EnsembleSpec {
            coupling_bins: vec![CouplingBin { g0: 1.0, count: 3 }],
            freq_bins: vec![FreqBin {
                delta: 0.0,
                weight: 0.5,
            }],
            correlation: Correlation::Independent,
        };
        assert!(matches!(
            bad.validate(),
            Err(EnsembleError::WeightsNotNormalized(_))
        ));
        let empty = EnsembleSpec {
            coupling_bins: vec![CouplingBin { g0: 1.0, count: 0 }],
            freq_bins: vec![FreqBin {
                delta: 0.0,
                weight: 1.0,
            }],
            correlation: Correlation::Independent,
        };
        assert_eq!(empty.validate(), Err(EnsembleError::NoSpins));
    }
}
