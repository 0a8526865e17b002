//! Semiclassical mean-field dynamics of the single-cavity inhomogeneous
//! model and of the Dicke lattice, with steady-state detection and lattice
//! order parameters.
//!
//! Time is measured in inverse frequency units; with `Delta_c = 1` this is
//! the `1/Delta_c` unit used throughout the outputs.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::collective_quantities;
use crate::model::EffectiveParams;

/// Largest allowed `dt * (fastest frequency)`.
pub const MAX_STEP_PRODUCT: f64 = 0.05;
/// Default amplitude of the random initial noise.
pub const DEFAULT_NOISE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid input `{name}`: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("step dt = {dt} too large; dt times the fastest frequency must stay below {MAX_STEP_PRODUCT} (dt <= {limit})")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("state left the Bloch sphere (|beta| = {norm}) at t = {time}")]
    BlochBound { norm: f64, time: f64 },
    #[error("state became non-finite at t = {0}")]
    NonFinite(f64),
    #[error("momentum spectrum needs a periodic lattice")]
    OpenBoundary,
}

fn invalid(name: &'static str, reason: impl Into<String>) -> DynamicsError {
    DynamicsError::Invalid {
        name,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Periodic,
    Open,
}

/// How collective spins are propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinVariant {
    /// Only `beta` is integrated; `z = -sqrt(1 - |beta|^2)`.
    #[default]
    Constrained,
    /// `beta` and `z` are integrated independently.
    Unconstrained,
}

/// Fixed-step integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Keep every `stride`-th step (the initial state is always kept).
    pub stride: usize,
}

impl IntegrationOptions {
    pub fn new(t_end: f64, dt: f64, stride: usize) -> Self {
        Self { t_end, dt, stride }
    }

    fn steps(&self) -> Result<usize, DynamicsError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(invalid("t_end", "must be finite and non-negative"));
        }
        if self.stride == 0 {
            return Err(invalid("stride", "must be at least 1"));
        }
        Ok((self.t_end / self.dt).round() as usize)
    }
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step<F: Fn(&[f64], &mut [f64])>(&mut self, f: &F, y: &mut [f64], dt: f64) {
        fn stage(tmp: &mut [f64], y: &[f64], h: f64, k: &[f64]) {
            for ((t, yi), ki) in tmp.iter_mut().zip(y).zip(k) {
                *t = yi + h * ki;
            }
        }
        f(y, &mut self.k1);
        stage(&mut self.tmp, y, 0.5 * dt, &self.k1);
        f(&self.tmp, &mut self.k2);
        stage(&mut self.tmp, y, 0.5 * dt, &self.k2);
        f(&self.tmp, &mut self.k3);
        stage(&mut self.tmp, y, dt, &self.k3);
        f(&self.tmp, &mut self.k4);
        let h6 = dt / 6.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += h6 * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }
}

fn uniform_complex(rng: &mut ChaCha8Rng, amp: f64) -> Complex64 {
    let re = amp * (2.0 * rng.random::<f64>() - 1.0);
    let im = amp * (2.0 * rng.random::<f64>() - 1.0);
    Complex64::new(re, im)
}

/// Single-cavity mean-field state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityState {
    pub time: f64,
    /// `<a> / sqrt(N_c)`.
    pub alpha: Complex64,
    /// `2 <J_mu^-> / N_mu`.
    pub betas: Vec<Complex64>,
    /// `2 <J_mu^z> / N_mu`.
    pub z: Vec<f64>,
}

impl CavityState {
    /// Empty cavity, every group fully polarized down.
    pub fn ground(n_groups: usize) -> Self {
        Self {
            time: 0.0,
            alpha: Complex64::new(0.0, 0.0),
            betas: vec![Complex64::new(0.0, 0.0); n_groups],
            z: vec![-1.0; n_groups],
        }
    }

    /// Uniform complex noise of amplitude `amp` on `alpha` and every `beta`,
    /// with `z` placed on the lower Bloch hemisphere.
    pub fn random(n_groups: usize, amp: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = uniform_complex(&mut rng, amp);
        let betas: Vec<Complex64> = (0..n_groups)
            .map(|_| uniform_complex(&mut rng, amp))
            .collect();
        let z = betas
            .iter()
            .map(|b| -(1.0 - b.norm_sqr()).max(0.0).sqrt())
            .collect();
        Self {
            time: 0.0,
            alpha,
            betas,
            z,
        }
    }

    /// Largest `|z^2 + |beta|^2 - 1|` over groups.
    pub fn spin_length_error(&self) -> f64 {
        self.betas
            .iter()
            .zip(&self.z)
            .map(|(b, z)| (z * z + b.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

struct CavityModel {
    delta_c: f64,
    kappa: f64,
    delta: Vec<f64>,
    lambda_n: Vec<f64>,
    two_lambda_nc: Vec<f64>,
    coef_a: Vec<f64>,
    coef_b: Vec<f64>,
    constrained: bool,
}

impl CavityModel {
    fn new(ens: &EffectiveParams, variant: SpinVariant) -> Self {
        let nc = collective_quantities(ens).n_c;
        let mut m = CavityModel {
            delta_c: ens.delta_c,
            kappa: ens.kappa,
            delta: Vec::new(),
            lambda_n: Vec::new(),
            two_lambda_nc: Vec::new(),
            coef_a: Vec::new(),
            coef_b: Vec::new(),
            constrained: variant == SpinVariant::Constrained,
        };
        for grp in &ens.groups {
            let n = grp.n as f64;
            let gm = grp.collective_coupling();
            m.delta.push(grp.delta);
            m.lambda_n.push(grp.lambda * n);
            m.two_lambda_nc.push(2.0 * grp.lambda * nc);
            if nc > 0.0 {
                m.coef_a.push(0.5 * gm * (n / nc).sqrt());
                m.coef_b.push(2.0 * gm * (nc / n).sqrt());
            } else {
                m.coef_a.push(0.0);
                m.coef_b.push(0.0);
            }
        }
        m
    }

    fn max_frequency(&self) -> f64 {
        let stark: f64 = self.lambda_n.iter().map(|l| 2.0 * l).sum();
        let spin = self.delta.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let g = self
            .coef_a
            .iter()
            .zip(&self.coef_b)
            .map(|(a, b)| (a * b).sqrt())
            .fold(0.0, f64::max);
        [self.delta_c.abs() + stark + self.kappa, spin, 2.0 * g]
            .into_iter()
            .fold(0.0, f64::max)
    }

    fn z_of(&self, y: &[f64], mu: usize) -> f64 {
        let base = 2 + 3 * mu;
        if self.constrained {
            let b2 = y[base] * y[base] + y[base + 1] * y[base + 1];
            -(1.0 - b2).max(0.0).sqrt()
        } else {
            y[base + 2]
        }
    }

    fn deriv(&self, y: &[f64], dy: &mut [f64]) {
        let (x, p) = (y[0], y[1]);
        let a2 = x * x + p * p;
        let mut stark = 0.0;
        let mut drive = 0.0;
        for mu in 0..self.delta.len() {
            let z = self.z_of(y, mu);
            stark += self.lambda_n[mu] * (1.0 + z);
            drive += self.coef_a[mu] * 2.0 * y[2 + 3 * mu];
        }
        let w = self.delta_c + stark;
        // alpha' = -(i w + kappa) alpha - i drive
        dy[0] = -self.kappa * x + w * p;
        dy[1] = -w * x - self.kappa * p - drive;
        for mu in 0..self.delta.len() {
            let base = 2 + 3 * mu;
            let (u, v) = (y[base], y[base + 1]);
            let z = self.z_of(y, mu);
            let om = self.delta[mu] + self.two_lambda_nc[mu] * a2;
            let push = self.coef_b[mu] * 2.0 * x * z;
            // beta' = -i om beta + i push
            dy[base] = om * v;
            dy[base + 1] = -om * u + push;
            dy[base + 2] = if self.constrained {
                0.0
            } else {
                -2.0 * self.coef_b[mu] * x * v
            };
        }
    }
}

fn pack_cavity(s: &CavityState) -> Vec<f64> {
    let mut y = vec![s.alpha.re, s.alpha.im];
    for (b, z) in s.betas.iter().zip(&s.z) {
        y.extend_from_slice(&[b.re, b.im, *z]);
    }
    y
}

fn unpack_cavity(y: &[f64], time: f64, model: &CavityModel) -> CavityState {
    let n = model.delta.len();
    let mut betas = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for mu in 0..n {
        let base = 2 + 3 * mu;
        betas.push(Complex64::new(y[base], y[base + 1]));
        z.push(model.z_of(y, mu));
    }
    CavityState {
        time,
        alpha: Complex64::new(y[0], y[1]),
        betas,
        z,
    }
}

/// Fixed-step RK4 integration of the normalized single-cavity equations
/// including the Stark nonlinearity:
///
/// `alpha' = -(i Dc + i sum_mu lambda_mu N_mu (1 + z_mu) + kappa) alpha - i sum_mu (G_mu/2) sqrt(N_mu/N_c)(beta_mu + beta_mu*)`
///
/// `beta_mu' = -i (D_mu + 2 lambda_mu N_c |alpha|^2) beta_mu + 2 i G_mu sqrt(N_c/N_mu)(alpha + alpha*) z_mu`
///
/// with `z_mu = -sqrt(1 - |beta_mu|^2)` in the constrained variant and
/// `z_mu' = -2 G_mu sqrt(N_c/N_mu)(alpha + alpha*) Im beta_mu` otherwise.
pub fn integrate_cavity(
    ens: &EffectiveParams,
    init: &CavityState,
    opts: &IntegrationOptions,
    variant: SpinVariant,
) -> Result<Vec<CavityState>, DynamicsError> {
    let mut out = Vec::new();
    integrate_cavity_with(ens, init, opts, variant, |s| out.push(s.clone()))?;
    Ok(out)
}

/// Like [`integrate_cavity`] but hands every kept sample to `observe`
/// instead of collecting them. Returns the final state.
pub fn integrate_cavity_with<F: FnMut(&CavityState)>(
    ens: &EffectiveParams,
    init: &CavityState,
    opts: &IntegrationOptions,
    variant: SpinVariant,
    mut observe: F,
) -> Result<CavityState, DynamicsError> {
    let steps = opts.steps()?;
    if init.betas.len() != ens.groups.len() || init.z.len() != ens.groups.len() {
        return Err(invalid(
            "init",
            "state size does not match the number of groups",
        ));
    }
    let model = CavityModel::new(ens, variant);
    let fmax = model.max_frequency();
    if opts.dt * fmax > MAX_STEP_PRODUCT {
        return Err(DynamicsError::StepTooLarge {
            dt: opts.dt,
            limit: MAX_STEP_PRODUCT / fmax,
        });
    }
    for b in &init.betas {
        if b.norm() > 1.0 + 1e-9 {
            return Err(DynamicsError::BlochBound {
                norm: b.norm(),
                time: init.time,
            });
        }
    }
    let mut y = pack_cavity(init);
    let mut rk = Rk4::new(y.len());
    let f = |y: &[f64], dy: &mut [f64]| model.deriv(y, dy);
    observe(&unpack_cavity(&y, init.time, &model));
    for i in 1..=steps {
        rk.step(&f, &mut y, opts.dt);
        let time = init.time + i as f64 * opts.dt;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite(time));
        }
        if model.constrained {
            for mu in 0..model.delta.len() {
                let base = 2 + 3 * mu;
                let norm = (y[base] * y[base] + y[base + 1] * y[base + 1]).sqrt();
                if norm > 1.0 + 1e-9 {
                    return Err(DynamicsError::BlochBound { norm, time });
                }
            }
        }
        if i % opts.stride == 0 || i == steps {
            observe(&unpack_cavity(&y, time, &model));
        }
    }
    Ok(unpack_cavity(
        &y,
        init.time + steps as f64 * opts.dt,
        &model,
    ))
}

/// Parameters of the Dicke lattice (Stark term omitted).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    /// Photon hopping amplitude `t`.
    pub hopping: f64,
    pub delta_c: f64,
    pub delta_s: f64,
    pub kappa: f64,
    /// Per-site collective coupling `G`.
    pub g: f64,
}

impl LatticeParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, v) in [
            ("t", self.hopping),
            ("delta_c", self.delta_c),
            ("delta_s", self.delta_s),
            ("kappa", self.kappa),
            ("G", self.g),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.kappa < 0.0 {
            return Err(invalid("kappa", "must be non-negative"));
        }
        Ok(())
    }

    pub fn max_frequency(&self) -> f64 {
        [
            self.delta_c.abs() + 2.0 * self.hopping.abs() + self.kappa,
            self.delta_s.abs(),
            2.0 * self.g.abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Lattice mean-field state, normalized per site by the spin number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeState {
    pub time: f64,
    /// `<a_l> / sqrt(N)`.
    pub a: Vec<Complex64>,
    /// `<J_l^-> / N`.
    pub jm: Vec<Complex64>,
    /// `<J_l^z> / N`.
    pub jz: Vec<f64>,
    pub boundary: Boundary,
}

impl LatticeState {
    pub fn ground(n_sites: usize, boundary: Boundary) -> Self {
        Self {
            time: 0.0,
            a: vec![Complex64::new(0.0, 0.0); n_sites],
            jm: vec![Complex64::new(0.0, 0.0); n_sites],
            jz: vec![-0.5; n_sites],
            boundary,
        }
    }

    /// Uniform complex noise of amplitude `amp` on every `a_l` and `J_l^-`,
    /// with `J_l^z = -sqrt(1/4 - |J_l^-|^2)`.
    pub fn random(n_sites: usize, amp: f64, seed: u64, boundary: Boundary) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Self::ground(n_sites, boundary);
        for l in 0..n_sites {
            s.a[l] = uniform_complex(&mut rng, amp);
            s.jm[l] = uniform_complex(&mut rng, amp);
            s.jz[l] = -(0.25 - s.jm[l].norm_sqr()).max(0.0).sqrt();
        }
        s
    }

    /// Every site in the same state.
    pub fn uniform(
        n_sites: usize,
        a: Complex64,
        jm: Complex64,
        jz: f64,
        boundary: Boundary,
    ) -> Self {
        Self {
            time: 0.0,
            a: vec![a; n_sites],
            jm: vec![jm; n_sites],
            jz: vec![jz; n_sites],
            boundary,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.a.len()
    }

    /// Largest `|Jz^2 + |Jm|^2 - 1/4|` over sites.
    pub fn spin_length_error(&self) -> f64 {
        self.jm
            .iter()
            .zip(&self.jz)
            .map(|(m, z)| (z * z + m.norm_sqr() - 0.25).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_a(&self) -> f64 {
        self.a.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Same state with every site index shifted by `shift` (periodic wrap).
    pub fn shifted(&self, shift: usize) -> Self {
        let n = self.n_sites();
        let rot = |v: &Vec<Complex64>| (0..n).map(|l| v[(l + n - shift % n) % n]).collect();
        Self {
            time: self.time,
            a: rot(&self.a),
            jm: rot(&self.jm),
            jz: (0..n).map(|l| self.jz[(l + n - shift % n) % n]).collect(),
            boundary: self.boundary,
        }
    }
}

fn pack_lattice(s: &LatticeState) -> Vec<f64> {
    let mut y = Vec::with_capacity(5 * s.n_sites());
    for l in 0..s.n_sites() {
        y.extend_from_slice(&[s.a[l].re, s.a[l].im, s.jm[l].re, s.jm[l].im, s.jz[l]]);
    }
    y
}

fn unpack_lattice(y: &[f64], time: f64, boundary: Boundary) -> LatticeState {
    let n = y.len() / 5;
    let mut s = LatticeState::ground(n, boundary);
    s.time = time;
    for l in 0..n {
        let b = 5 * l;
        s.a[l] = Complex64::new(y[b], y[b + 1]);
        s.jm[l] = Complex64::new(y[b + 2], y[b + 3]);
        s.jz[l] = y[b + 4];
    }
    s
}

fn lattice_deriv(p: &LatticeParams, boundary: Boundary, y: &[f64], dy: &mut [f64]) {
    let n = y.len() / 5;
    let (dc, ds, k, g, t) = (p.delta_c, p.delta_s, p.kappa, p.g, p.hopping);
    for l in 0..n {
        let b = 5 * l;
        let (mut sr, mut si) = (0.0, 0.0);
        let mut add = |m: usize| {
            sr += y[5 * m];
            si += y[5 * m + 1];
        };
        match boundary {
            Boundary::Periodic => {
                add((l + 1) % n);
                add((l + n - 1) % n);
            }
            Boundary::Open => {
                if l + 1 < n {
                    add(l + 1);
                }
                if l > 0 {
                    add(l - 1);
                }
            }
        }
        let (x, q, u, v, jz) = (y[b], y[b + 1], y[b + 2], y[b + 3], y[b + 4]);
        // a' = -(i Dc + kappa) a - i G (Jm + Jm*) + i t (a_{l+1} + a_{l-1})
        dy[b] = -k * x + dc * q - t * si;
        dy[b + 1] = -dc * x - k * q - 2.0 * g * u + t * sr;
        // Jm' = -i Ds Jm + 2 i G (a + a*) Jz
        dy[b + 2] = ds * v;
        dy[b + 3] = -ds * u + 4.0 * g * x * jz;
        // Jz' = i G (a + a*)(Jm - Jm*)
        dy[b + 4] = -4.0 * g * x * v;
    }
}

/// Time derivative of a lattice state under the mean-field equations, stored
/// in a state of the same shape (the `time` field is left at zero).
pub fn lattice_velocity(params: &LatticeParams, state: &LatticeState) -> LatticeState {
    let y = pack_lattice(state);
    let mut dy = vec![0.0; y.len()];
    lattice_deriv(params, state.boundary, &y, &mut dy);
    unpack_lattice(&dy, 0.0, state.boundary)
}

/// Fixed-step RK4 integration of the lattice mean-field equations
///
/// `a_l' = -(i Dc + kappa) a_l - i G (Jm_l + Jm_l*) + i t (a_{l+1} + a_{l-1})`,
/// `Jm_l' = -i Ds Jm_l + 2 i G (a_l + a_l*) Jz_l`,
/// `Jz_l' = i G (a_l + a_l*)(Jm_l - Jm_l*)`.
///
/// Open boundaries drop the missing neighbor.
pub fn integrate_lattice(
    params: &LatticeParams,
    init: &LatticeState,
    opts: &IntegrationOptions,
) -> Result<Vec<LatticeState>, DynamicsError> {
    let mut out = Vec::new();
    integrate_lattice_with(params, init, opts, |s| out.push(s.clone()))?;
    Ok(out)
}

/// Like [`integrate_lattice`] but hands every kept sample to `observe`.
/// Returns the final state.
pub fn integrate_lattice_with<F: FnMut(&LatticeState)>(
    params: &LatticeParams,
    init: &LatticeState,
    opts: &IntegrationOptions,
    mut observe: F,
) -> Result<LatticeState, DynamicsError> {
    params.validate()?;
    let steps = opts.steps()?;
    if init.n_sites() < 2 {
        return Err(invalid("N_L", "lattice needs at least two sites"));
    }
    if init.jm.len() != init.n_sites() || init.jz.len() != init.n_sites() {
        return Err(invalid("init", "inconsistent per-site vectors"));
    }
    let fmax = params.max_frequency();
    if opts.dt * fmax > MAX_STEP_PRODUCT {
        return Err(DynamicsError::StepTooLarge {
            dt: opts.dt,
            limit: MAX_STEP_PRODUCT / fmax,
        });
    }
    let boundary = init.boundary;
    let mut y = pack_lattice(init);
    let mut rk = Rk4::new(y.len());
    let f = |y: &[f64], dy: &mut [f64]| lattice_deriv(params, boundary, y, dy);
    observe(&unpack_lattice(&y, init.time, boundary));
    for i in 1..=steps {
        rk.step(&f, &mut y, opts.dt);
        let time = init.time + i as f64 * opts.dt;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite(time));
        }
        if i % opts.stride == 0 || i == steps {
            observe(&unpack_lattice(&y, time, boundary));
        }
    }
    Ok(unpack_lattice(
        &y,
        init.time + steps as f64 * opts.dt,
        boundary,
    ))
}

/// One point of the homogeneous superradiant branch, in units where the
/// per-site spin number is `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrBranch {
    pub a: Complex64,
    pub jm: f64,
    pub jz: f64,
}

/// Both homogeneous superradiant solutions
/// `<a> = +-G sqrt(N)/(Dc - 2t - i kappa) sqrt(1 - nu^2)`,
/// `<J^-> = -+(N/2) sqrt(1 - nu^2)`, `<J^z> = -(N/2) nu` with
/// `nu = (G_crit/G)^2`.
pub fn homogeneous_sr_branch(
    t: f64,
    delta_c: f64,
    delta_s: f64,
    kappa: f64,
    g: f64,
    n: f64,
) -> Result<[SrBranch; 2], DynamicsError> {
    let d0 = delta_c - 2.0 * t;
    if !(d0 > 0.0) {
        return Err(invalid("t", "branch requires Delta_c - 2t > 0"));
    }
    if !(delta_s > 0.0) {
        return Err(invalid("delta_s", "must be positive"));
    }
    let gc2 = d0 * delta_s / 4.0 * (1.0 + kappa * kappa / (d0 * d0));
    if !(g * g >= gc2) {
        return Err(invalid(
            "G",
            format!("coupling {g} lies below the critical value {}", gc2.sqrt()),
        ));
    }
    let nu = gc2 / (g * g);
    let amp = (1.0 - nu * nu).max(0.0).sqrt();
    let a = g * n.sqrt() / Complex64::new(d0, -kappa) * amp;
    let jm = 0.5 * n * amp;
    let jz = -0.5 * n * nu;
    Ok([SrBranch { a, jm: -jm, jz }, SrBranch { a: -a, jm, jz }])
}

/// Anything with a time stamp and a flat list of real components.
pub trait Observable {
    fn time(&self) -> f64;
    fn components(&self, out: &mut Vec<f64>);
}

impl Observable for CavityState {
    fn time(&self) -> f64 {
        self.time
    }

    fn components(&self, out: &mut Vec<f64>) {
        out.push(self.alpha.re);
        out.push(self.alpha.im);
        for (b, z) in self.betas.iter().zip(&self.z) {
            out.extend_from_slice(&[b.re, b.im, *z]);
        }
    }
}

impl Observable for LatticeState {
    fn time(&self) -> f64 {
        self.time
    }

    fn components(&self, out: &mut Vec<f64>) {
        for l in 0..self.n_sites() {
            out.extend_from_slice(&[
                self.a[l].re,
                self.a[l].im,
                self.jm[l].re,
                self.jm[l].im,
                self.jz[l],
            ]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateReport {
    pub steady: bool,
    /// Half the largest peak-to-peak excursion of any component over the
    /// trailing window; infinite if the trajectory is shorter than the window.
    pub residual_amplitude: f64,
    pub window_start: f64,
}

/// Declare a trajectory stationary when every component varies by at most
/// `rtol * max(1, max|x|)` (peak to peak) over the trailing `window`.
pub fn steady_state_detect<S: Observable>(traj: &[S], window: f64, rtol: f64) -> SteadyStateReport {
    let Some(last) = traj.last() else {
        return SteadyStateReport {
            steady: false,
            residual_amplitude: f64::INFINITY,
            window_start: f64::NAN,
        };
    };
    let t_last = last.time();
    let start = t_last - window;
    if traj[0].time() > start {
        return SteadyStateReport {
            steady: false,
            residual_amplitude: f64::INFINITY,
            window_start: start,
        };
    }
    let mut lo: Vec<f64> = Vec::new();
    let mut hi: Vec<f64> = Vec::new();
    let mut buf = Vec::new();
    for s in traj.iter().rev().take_while(|s| s.time() >= start) {
        buf.clear();
        s.components(&mut buf);
        if lo.is_empty() {
            lo = buf.clone();
            hi = buf.clone();
        }
        for (i, &x) in buf.iter().enumerate() {
            lo[i] = lo[i].min(x);
            hi[i] = hi[i].max(x);
        }
    }
    let mut scale: f64 = 1.0;
    let mut p2p: f64 = 0.0;
    for i in 0..lo.len() {
        scale = scale.max(lo[i].abs()).max(hi[i].abs());
        p2p = p2p.max(hi[i] - lo[i]);
    }
    SteadyStateReport {
        steady: p2p <= rtol * scale,
        residual_amplitude: 0.5 * p2p,
        window_start: start,
    }
}

/// `|alpha_k|^2` with `alpha_k = N_L^{-1/2} sum_{l=1}^{N_L} e^{i k l} a_l` on
/// the grid `k = 2 pi n / N_L`, mapped into `(-pi, pi]` and sorted by `k`.
pub fn alpha_k_spectrum(state: &LatticeState) -> Result<Vec<(f64, f64)>, DynamicsError> {
    if state.boundary != Boundary::Periodic {
        return Err(DynamicsError::OpenBoundary);
    }
    let n = state.n_sites();
    if n < 2 {
        return Err(invalid("N_L", "need at least two sites"));
    }
    // the inverse transform carries e^{+i k j}; the j -> l = j + 1 shift only
    // changes phases
    let mut buf = state.a.clone();
    FftPlanner::<f64>::new()
        .plan_fft_inverse(n)
        .process(&mut buf);
    let norm = 1.0 / n as f64;
    let mut out: Vec<(f64, f64)> = buf
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let mut k = 2.0 * PI * m as f64 / n as f64;
            if k > PI + 1e-12 {
                k -= 2.0 * PI;
            }
            (k, c.norm_sqr() * norm)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Offset `phi_0` in `a_l ~ A cos(phi_0 + k l)`, `l = 1..N_L`, from the two
/// Fourier components at `+-k`. Returned in `[0, pi)`; the sign of `A` is
/// not resolved.
pub fn fit_modulation_phase(a: &[Complex64], k: f64) -> f64 {
    let n = a.len() as f64;
    let mut cp = Complex64::new(0.0, 0.0);
    let mut cm = Complex64::new(0.0, 0.0);
    for (j, &x) in a.iter().enumerate() {
        let l = (j + 1) as f64;
        cp += x * Complex64::from_polar(1.0, -k * l);
        cm += x * Complex64::from_polar(1.0, k * l);
    }
    cp /= n;
    cm /= n;
    let phi = 0.5 * (cp.arg() - cm.arg());
    phi.rem_euclid(PI)
}
