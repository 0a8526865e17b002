use std::fs::File;
use std::path::Path;
use std::time::Instant;

use dicke_core::dynamics::{
    alpha_k_spectrum, fit_modulation_phase, homogeneous_sr_branch, integrate_cavity,
    integrate_cavity_with, integrate_lattice, steady_state_detect, CavityState, DynamicsError,
    IntegrationOptions, LatticeParams, LatticeState, SpinVariant,
};
use dicke_core::ensemble::{
    collective_quantities, discretize, discretize_pole_aligned, synthetic_coupling_histogram,
    CouplingBin, EnsembleSpec, FreqBin, FrequencyDistribution,
};
use dicke_core::io;
use dicke_core::model::derive_effective_params;
use dicke_core::phases::{
    dominant_mode, run_lattice, sweep, ClassifierMethod, NumericOptions, SweepSpec,
};
use dicke_core::stability::{
    critical_coupling, critical_coupling_discrete, critical_coupling_for_distribution,
    critical_coupling_lorentzian,
};
use dicke_core::{CriticalCoupling, EffectiveParams, SpinGroup};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{
    normalized, span_for, Config, CriticalConfig, EvolveConfig, PhaseDiagramConfig, ShapeKind,
    SpectrumConfig, SrtScanConfig, SystemKind,
};
use crate::output::{compute, Format, Output};
use crate::{CliError, Command};

/// Spin count used when only the collective coupling matters.
const LARGE_N: u64 = 1_000_000_000_000;

pub fn dispatch(cmd: Command, cfg: &Config, out: &Path, format: Format) -> Result<(), CliError> {
    match cmd {
        Command::Params => params(cfg, out, format),
        Command::Ensemble => ensemble(cfg, out, format),
        Command::Critical => critical(cfg, out, format),
        Command::SrtScan => srt_scan(cfg, out, format),
        Command::Evolve => evolve(cfg, out, format),
        Command::PhaseDiagram => phase_diagram(cfg, out, format),
        Command::Spectrum => spectrum(cfg, out, format),
    }
}

fn invalid<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

fn io_err(e: io::IoError) -> CliError {
    CliError::Compute(e.to_string())
}

fn require_seed(cfg: &Config) -> Result<u64, CliError> {
    cfg.seed
        .ok_or_else(|| CliError::Validation("missing key `seed` (or pass --seed)".into()))
}

fn provenance(cfg: &Config) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

fn open_file(cfg: &Config, p: &Path) -> Result<File, CliError> {
    let path = cfg.resolve_path(p);
    File::open(&path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn coupling_bins(cfg: &Config) -> Result<Vec<CouplingBin>, CliError> {
    let ens = cfg
        .ensemble
        .as_ref()
        .ok_or_else(|| CliError::Validation("missing section `[ensemble]`".into()))?;
    match (&ens.file, &ens.synthetic) {
        (Some(f), None) => io::read_coupling_histogram(open_file(cfg, f)?).map_err(invalid),
        (None, Some(s)) => {
            let mut spec = s.spec();
            if let Some(target) = s.target_g0 {
                spec = spec.calibrated_to(target).map_err(invalid)?;
            }
            synthetic_coupling_histogram(&spec).map_err(invalid)
        }
        (None, None) => Err(CliError::Validation(
            "missing key `ensemble.file` or section `[ensemble.synthetic]`".into(),
        )),
        (Some(_), Some(_)) => Err(CliError::Validation(
            "give either `ensemble.file` or `[ensemble.synthetic]`, not both".into(),
        )),
    }
}

/// Frequency bins for the configured line. With a known central detuning
/// the bin grid is shifted so zero detuning falls on a bin edge.
fn frequency_bins(cfg: &Config, delta_s_bar: Option<f64>) -> Result<Vec<FreqBin>, CliError> {
    let Some(ens) = &cfg.ensemble else {
        return Ok(vec![FreqBin {
            delta: 0.0,
            weight: 1.0,
        }]);
    };
    if let Some(f) = &ens.frequency_file {
        return io::read_frequency_histogram(open_file(cfg, f)?).map_err(invalid);
    }
    let dist = normalized(
        ens.frequency
            .clone()
            .unwrap_or_else(FrequencyDistribution::delta),
    )?;
    if dist.is_delta() {
        return Ok(vec![FreqBin {
            delta: dist.center,
            weight: 1.0,
        }]);
    }
    let n = ens
        .n_freq_bins
        .unwrap_or(dicke_core::ensemble::DEFAULT_FREQUENCY_BINS);
    let span = span_for(&dist, ens.span_fwhm.unwrap_or(10.0));
    match delta_s_bar {
        Some(d) if d != 0.0 => discretize_pole_aligned(&dist, n, span, -d),
        _ => discretize(&dist, n, span),
    }
    .map_err(invalid)
}

fn ensemble_spec(cfg: &Config, delta_s_bar: Option<f64>) -> Result<EnsembleSpec, CliError> {
    EnsembleSpec::new(coupling_bins(cfg)?, frequency_bins(cfg, delta_s_bar)?).map_err(invalid)
}

/// Central detuning when the physical parameters are complete.
fn known_delta_s_bar(cfg: &Config) -> Option<f64> {
    cfg.physical().ok().map(|p| p.mean_spin_detuning())
}

fn effective(cfg: &Config) -> Result<EffectiveParams, CliError> {
    let phys = cfg.physical()?;
    let spec = ensemble_spec(cfg, Some(phys.mean_spin_detuning()))?;
    derive_effective_params(&phys, &spec).map_err(invalid)
}

fn params(cfg: &Config, dir: &Path, format: Format) -> Result<(), CliError> {
    let out = Output::new(dir.into(), format, "params", cfg.seed, provenance(cfg));
    let ens = effective(cfg)?;
    let json_file = out.create("effective_params.json")?;
    let csv_file = if out.csv() {
        Some(out.create("groups.csv")?)
    } else {
        None
    };

    let coll = collective_quantities(&ens);
    let summary = json!({
        "delta_c": ens.delta_c,
        "delta_s_bar": ens.delta_s_bar,
        "kappa": ens.kappa,
        "G": coll.g,
        "N_c": coll.n_c,
        "sum_lambda_N": coll.sum_lambda_n,
        "total_spins": ens.total_spins(),
        "groups": ens.groups.len(),
        "validity": ens.validity,
    });
    out.write_json(json_file, &json!({ "summary": summary, "params": ens }))?;
    if let Some(w) = csv_file {
        let rows: Vec<Vec<f64>> = ens
            .groups
            .iter()
            .map(|g| vec![g.delta, g.g, g.lambda, g.n as f64])
            .collect();
        io::write_table(
            w,
            &out.meta_line(),
            &["delta_mhz", "g_mhz", "lambda_mhz", "n"],
            &rows,
        )
        .map_err(io_err)?;
    }

    println!("Delta_c      = {:.6} MHz", ens.delta_c);
    if let Some(d) = ens.delta_s_bar {
        println!("Delta_s_bar  = {d:.6} MHz");
    }
    println!("kappa        = {:.6} MHz", ens.kappa);
    println!("G            = {:.6} MHz", coll.g);
    println!("N_c          = {:.6e}", coll.n_c);
    println!("sum lambda N = {:.6} MHz", coll.sum_lambda_n);
    println!(
        "spins        = {} in {} groups",
        ens.total_spins(),
        ens.groups.len()
    );
    if let Some(v) = ens.validity {
        let note = if v.perturbative {
            ""
        } else {
            " (outside the perturbative window)"
        };
        println!("max(Omega, G_0, |delta|)/delta_B = {:.4}{note}", v.ratio);
    }
    Ok(())
}

fn ensemble(cfg: &Config, dir: &Path, format: Format) -> Result<(), CliError> {
    let out = Output::new(dir.into(), format, "ensemble", cfg.seed, provenance(cfg));
    let spec = ensemble_spec(cfg, known_delta_s_bar(cfg))?;
    let summary_file = out.create("ensemble.json")?;
    let files = if out.csv() {
        Some((out.create("couplings.csv")?, out.create("frequencies.csv")?))
    } else {
        None
    };
    out.write_json(
        summary_file,
        &json!({
            "total_spins": spec.total_spins(),
            "G0": spec.bare_collective_coupling(),
            "coupling_bins": spec.coupling_bins,
            "freq_bins": spec.freq_bins,
        }),
    )?;
    if let Some((c, f)) = files {
        let meta = out.meta_line();
        io::write_coupling_histogram(c, &meta, &spec.coupling_bins).map_err(io_err)?;
        io::write_frequency_histogram(f, &meta, &spec.freq_bins).map_err(io_err)?;
    }
    println!(
        "{} spins, G0 = {:.6} MHz, {} coupling x {} frequency bins",
        spec.total_spins(),
        spec.bare_collective_coupling(),
        spec.coupling_bins.len(),
        spec.freq_bins.len()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct CriticalRow {
    shape: ShapeKind,
    gamma_s: f64,
    g_crit_discrete: f64,
    g_crit_continuous: f64,
    rel_diff: f64,
    epsilon_spread: f64,
}

fn shape_name(s: ShapeKind) -> &'static str {
    match s {
        ShapeKind::Lorentzian => "lorentzian",
        ShapeKind::QGaussian => "q_gaussian",
    }
}

fn critical_row(c: &CriticalConfig, shape: ShapeKind, gamma: f64) -> Result<CriticalRow, CliError> {
    let (dc, ds, kappa) = (c.delta_c, c.delta_s, c.kappa);
    let (disc, cont): (CriticalCoupling, f64) = if gamma == 0.0 {
        let ens = EffectiveParams::homogeneous(dc, ds, kappa, 1.0, LARGE_N).map_err(invalid)?;
        let d = critical_coupling_discrete(&ens, c.epsilon).map_err(compute)?;
        (
            d,
            critical_coupling_lorentzian(dc, ds, kappa, 0.0).map_err(compute)?,
        )
    } else {
        let dist = match shape {
            ShapeKind::Lorentzian => FrequencyDistribution::lorentzian(gamma),
            ShapeKind::QGaussian => FrequencyDistribution::q_gaussian(gamma, c.q),
        }
        .map_err(invalid)?;
        // keep the zero-detuning pole well inside the binned range
        let span = (c.span_fwhm * gamma).max(c.min_span_delta_s * ds);
        let bins = discretize_pole_aligned(&dist, c.n_bins, span, -ds).map_err(invalid)?;
        let ens = EffectiveParams::from_frequency_bins(dc, ds, kappa, 1.0, &bins, LARGE_N)
            .map_err(invalid)?;
        let d = critical_coupling(&ens, c.method, c.epsilon).map_err(compute)?;
        let cont = match shape {
            ShapeKind::Lorentzian => critical_coupling_lorentzian(dc, ds, kappa, gamma),
            ShapeKind::QGaussian => critical_coupling_for_distribution(dc, ds, kappa, &dist),
        }
        .map_err(compute)?;
        (d, cont)
    };
    Ok(CriticalRow {
        shape,
        gamma_s: gamma,
        g_crit_discrete: disc.g_crit,
        g_crit_continuous: cont,
        rel_diff: disc.g_crit / cont - 1.0,
        epsilon_spread: disc.epsilon_spread,
    })
}

fn critical(cfg: &Config, dir: &Path, format: Format) -> Result<(), CliError> {
    let c = cfg.critical.clone().unwrap_or_default();
    if c.from_params {
        return critical_from_params(cfg, &c, dir, format);
    }
    if !(c.delta_c > 0.0 && c.delta_s > 0.0 && c.kappa >= 0.0) {
        return Err(CliError::Validation(
            "critical: need delta_c > 0, delta_s > 0, kappa >= 0".into(),
        ));
    }
    let gammas = match &c.gamma_s {
        Some(list) => list.clone(),
        None => {
            if c.gamma_steps < 2 || !(c.gamma_max > c.gamma_min) || c.gamma_min < 0.0 {
                return Err(CliError::Validation(
                    "critical: need gamma_steps >= 2 and 0 <= gamma_min < gamma_max".into(),
                ));
            }
            let h = (c.gamma_max - c.gamma_min) / (c.gamma_steps - 1) as f64;
            (0..c.gamma_steps)
                .map(|i| c.gamma_min + h * i as f64)
                .collect()
        }
    };
    if gammas.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(CliError::Validation(
            "critical: gamma_s values must be finite and >= 0".into(),
        ));
    }
    if c.shapes.is_empty() {
        return Err(CliError::Validation("critical: `shapes` is empty".into()));
    }
    let mut resolved = cfg.clone();
    resolved.critical = Some(c.clone());
    let out = Output::new(
        dir.into(),
        format,
        "critical",
        cfg.seed,
        provenance(&resolved),
    );
    let mut csv_files = Vec::new();
    if out.csv() {
        for s in &c.shapes {
            csv_files.push(out.create(&format!("critical_{}.csv", shape_name(*s)))?);
        }
    }
    let json_file = if out.json() {
        Some(out.create("critical.json")?)
    } else {
        None
    };

    let per_shape: Vec<Vec<CriticalRow>> = c
        .shapes
        .iter()
        .map(|&shape| {
            gammas
                .par_iter()
                .map(|&g| critical_row(&c, shape, g))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    for (w, rows) in csv_files.into_iter().zip(&per_shape) {
        let table: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.gamma_s,
                    r.g_crit_discrete,
                    r.g_crit_continuous,
                    r.rel_diff,
                ]
            })
            .collect();
        io::write_table(
            w,
            &out.meta_line(),
            &[
                "gamma_s",
                "G_crit_discrete",
                "G_crit_continuous",
                "rel_diff",
            ],
            &table,
        )
        .map_err(io_err)?;
    }
    let all: Vec<CriticalRow> = per_shape.into_iter().flatten().collect();
    for r in &all {
        println!(
            "{:<10} gamma_s {:>8.4}  G_crit {:.6} (discrete) {:.6} (continuous)",
            shape_name(r.shape),
            r.gamma_s,
            r.g_crit_discrete,
            r.g_crit_continuous
        );
    }
    if let Some(w) = json_file {
        out.write_json(w, &json!({ "rows": all }))?;
    }
    Ok(())
}

fn critical_from_params(
    cfg: &Config,
    c: &CriticalConfig,
    dir: &Path,
    format: Format,
) -> Result<(), CliError> {
    let ens = effective(cfg)?;
    let out = Output::new(dir.into(), format, "critical", cfg.seed, provenance(cfg));
    let json_file = out.create("critical.json")?;
    let disc = critical_coupling(&ens, c.method, c.epsilon).map_err(compute)?;
    let ds = ens.mean_spin_detuning();
    let dist = match cfg.ensemble.as_ref().and_then(|e| e.frequency.clone()) {
        Some(d)
            if cfg
                .ensemble
                .as_ref()
                .is_some_and(|e| e.frequency_file.is_none()) =>
        {
            Some(normalized(d)?)
        }
        _ => None,
    };
    let cont = match &dist {
        Some(d) if d.is_delta() => {
            Some(critical_coupling_lorentzian(ens.delta_c, ds, ens.kappa, 0.0).map_err(compute)?)
        }
        Some(d) => Some(
            critical_coupling_for_distribution(ens.delta_c, ds, ens.kappa, d).map_err(compute)?,
        ),
        None => None,
    };
    let g = ens.total_coupling();
    out.write_json(
        json_file,
        &json!({
            "G": g,
            "discrete": disc,
            "G_crit_continuous": cont,
            "superradiant": g > disc.g_crit,
        }),
    )?;
    println!("G       = {g:.6} MHz");
    println!(
        "G_crit  = {:.6} MHz (discrete, {:?})",
        disc.g_crit, disc.method
    );
    if let Some(x) = cont {
        println!("G_crit  = {x:.6} MHz (continuous line shape)");
    }
    Ok(())
}

/// Single-cavity ensemble for the scan and evolve commands: one group per
/// frequency bin, total coupling `big_g`, Stark term split evenly.
struct CavitySetup<'a> {
    delta_c: f64,
    delta_s: f64,
    kappa: f64,
    lambda_n: f64,
    dist: &'a FrequencyDistribution,
    n_bins: usize,
    span_fwhm: f64,
    n_spins: u64,
}

fn cavity_ensemble(setup: &CavitySetup, big_g: f64) -> Result<EffectiveParams, CliError> {
    let CavitySetup {
        delta_c,
        delta_s,
        kappa,
        lambda_n,
        dist,
        n_bins,
        span_fwhm,
        n_spins,
    } = *setup;
    let bins = if dist.is_delta() {
        vec![FreqBin {
            delta: dist.center,
            weight: 1.0,
        }]
    } else {
        discretize_pole_aligned(dist, n_bins, span_for(dist, span_fwhm), -delta_s)
            .map_err(invalid)?
    };
    let mut ens =
        EffectiveParams::from_frequency_bins(delta_c, delta_s, kappa, big_g, &bins, n_spins)
            .map_err(invalid)?;
    let lambda = lambda_n / n_spins as f64;
    ens.groups = ens
        .groups
        .into_iter()
        .map(|g| SpinGroup { lambda, ..g })
        .collect();
    ens.validate().map_err(invalid)?;
    Ok(ens)
}

fn srt_scan(cfg: &Config, dir: &Path, format: Format) -> Result<(), CliError> {
    let seed = require_seed(cfg)?;
    let mut c: SrtScanConfig = cfg.srt_scan.clone().unwrap_or_default();
    c.frequency = normalized(c.frequency)?;
    if c.g_steps < 2 || !(c.g_max > c.g_min) || c.g_min < 0.0 {
        return Err(CliError::Validation(
            "srt_scan: need G_steps >= 2 and 0 <= G_min < G_max".into(),
        ));
    }
    if !(c.window > 0.0 && c.window < c.t_end) || !(c.dt > 0.0) || c.n_spins == 0 {
        return Err(CliError::Validation(
            "srt_scan: need 0 < window < t_end, dt > 0 and n_spins > 0".into(),
        ));
    }
    let mut resolved = cfg.clone();
    resolved.srt_scan = Some(c.clone());
    let out = Output::new(
        dir.into(),
        format,
        "srt-scan",
        Some(seed),
        provenance(&resolved),
    );
    let csv_file = if out.csv() {
        Some(out.create("srt_scan.csv")?)
    } else {
        None
    };
    let json_file = if out.json() {
        Some(out.create("srt_scan.json")?)
    } else {
        None
    };

    let h = (c.g_max - c.g_min) / (c.g_steps - 1) as f64;
    let grid: Vec<f64> = (0..c.g_steps).map(|i| c.g_min + h * i as f64).collect();
    let setup = CavitySetup {
        delta_c: c.delta_c,
        delta_s: c.delta_s,
        kappa: c.kappa,
        lambda_n: c.lambda_n,
        dist: &c.frequency,
        n_bins: c.n_bins,
        span_fwhm: c.span_fwhm,
        n_spins: c.n_spins,
    };
    let homogeneous = c.frequency.is_delta() && c.frequency.center == 0.0 && c.lambda_n == 0.0;
    let rows: Vec<[f64; 5]> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &g)| {
            let ens = cavity_ensemble(&setup, g)?;
            let init = CavityState::random(ens.groups.len(), c.noise, seed.wrapping_add(i as u64));
            let stride = ((0.1 / c.dt).round() as usize).max(1);
            let start = c.t_end - c.window - stride as f64 * c.dt;
            let opts = IntegrationOptions::new(c.t_end, c.dt, stride);
            let run = |variant| {
                let mut kept = Vec::new();
                integrate_cavity_with(&ens, &init, &opts, variant, |s| {
                    if s.time >= start {
                        kept.push(s.clone());
                    }
                })
                .map(|last| (last, kept))
            };
            // strong drives push the transient over the equator, which the
            // constrained form cannot represent
            let (last, kept, fallback) = match run(c.variant) {
                Ok((last, kept)) => (last, kept, false),
                Err(DynamicsError::BlochBound { .. }) if c.variant == SpinVariant::Constrained => {
                    let (last, kept) = run(SpinVariant::Unconstrained).map_err(compute)?;
                    (last, kept, true)
                }
                Err(e) => return Err(compute(e)),
            };
            let steady = steady_state_detect(&kept, c.window, c.rtol).steady;
            let branch = if homogeneous {
                homogeneous_sr_branch(0.0, c.delta_c, c.delta_s, c.kappa, g, 1.0)
                    .map_or(0.0, |b| b[0].a.norm())
            } else {
                f64::NAN
            };
            Ok([
                g,
                last.alpha.norm(),
                if steady { 1.0 } else { 0.0 },
                branch,
                if fallback { 1.0 } else { 0.0 },
            ])
        })
        .collect::<Result<_, CliError>>()?;

    if let Some(w) = csv_file {
        let table: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        io::write_table(
            w,
            &out.meta_line(),
            &["G", "abs_alpha", "steady", "abs_alpha_branch", "fallback"],
            &table,
        )
        .map_err(io_err)?;
    }
    if let Some(w) = json_file {
        let pts: Vec<_> = rows
            .iter()
            .map(|r| {
                json!({
                    "G": r[0],
                    "abs_alpha": r[1],
                    "steady": r[2] == 1.0,
                    "abs_alpha_branch": if r[3].is_nan() { None } else { Some(r[3]) },
                    "unconstrained_fallback": r[4] == 1.0,
                })
            })
            .collect();
        out.write_json(w, &json!({ "points": pts }))?;
    }
    let unsteady = rows.iter().filter(|r| r[2] == 0.0).count();
    let fallback = rows.iter().filter(|r| r[4] == 1.0).count();
    println!(
        "{} couplings scanned, {unsteady} not stationary at t_end, {fallback} integrated unconstrained",
        rows.len()
    );
    Ok(())
}

fn evolve(cfg: &Config, dir: &Path, format: Format) -> Result<(), CliError> {
    let seed = require_seed(cfg)?;
    let mut c: EvolveConfig = cfg.evolve.clone().unwrap_or_default();
    c.frequency = normalized(c.frequency)?;
    if c.stride == 0 || !(c.dt > 0.0) || !(c.t_end > 0.0) {
        return Err(CliError::Validation(
            "evolve: need t_end > 0, dt > 0 and stride >= 1".into(),
        ));
    }
    let mut resolved = cfg.clone();
    resolved.evolve = Some(c.clone());
    let out = Output::new(
        dir.into(),
        format,
        "evolve",
        Some(seed),
        provenance(&resolved),
    );
    let traj_file = if out.csv() {
        Some(out.create("trajectory.csv")?)
    } else {
        None
    };
    let final_file = out.create("final.json")?;
    let opts = IntegrationOptions::new(c.t_end, c.dt, c.stride);

    match c.system {
        SystemKind::Cavity => {
            let setup = CavitySetup {
                delta_c: c.delta_c,
                delta_s: c.delta_s,
                kappa: c.kappa,
                lambda_n: c.lambda_n,
                dist: &c.frequency,
                n_bins: c.n_bins,
                span_fwhm: c.span_fwhm,
                n_spins: c.n_spins,
            };
            let ens = cavity_ensemble(&setup, c.g)?;
            let init = CavityState::random(ens.groups.len(), c.noise, seed);
            let traj = integrate_cavity(&ens, &init, &opts, c.variant).map_err(|e| match e {
                DynamicsError::BlochBound { .. } if c.variant == SpinVariant::Constrained => {
                    CliError::Compute(format!("{e}; try variant = \"unconstrained\""))
                }
                other => compute(other),
            })?;
            let report = steady_state_detect(&traj, c.window, c.rtol);
            let last = traj.last().expect("trajectory keeps the initial state");
            if let Some(w) = traj_file {
                io::write_cavity_trajectory(w, &out.meta_line(), &traj).map_err(io_err)?;
            }
            out.write_json(
                final_file,
                &json!({ "steady_state": report, "final": last }),
            )?;
            println!(
                "|alpha| = {:.6e} at t = {}, steady: {}",
                last.alpha.norm(),
                last.time,
                report.steady
            );
        }
        SystemKind::Lattice => {
            if c.n_sites == 0 {
                return Err(CliError::Validation(
                    "evolve: n_sites must be positive".into(),
                ));
            }
            let p = LatticeParams {
                hopping: c.t,
                delta_c: c.delta_c,
                delta_s: c.delta_s,
                kappa: c.kappa,
                g: c.g,
            };
            p.validate().map_err(invalid)?;
            let init = LatticeState::random(c.n_sites, c.noise, seed, c.boundary);
            let traj = integrate_lattice(&p, &init, &opts).map_err(compute)?;
            let report = steady_state_detect(&traj, c.window, c.rtol);
            let last = traj.last().expect("trajectory keeps the initial state");
            if let Some(w) = traj_file {
                io::write_lattice_trajectory(w, &out.meta_line(), &traj).map_err(io_err)?;
            }
            out.write_json(
                final_file,
                &json!({
                    "steady_state": report,
                    "max_abs_a": last.max_abs_a(),
                    "spin_length_error": last.spin_length_error(),
                    "final": last,
                }),
            )?;
            println!(
                "max |a_l| = {:.6e} at t = {}, steady: {}",
                last.max_abs_a(),
                last.time,
                report.steady
            );
        }
    }
    Ok(())
}

fn phase_diagram(cfg: &Config, dir: &Path, format: Format) -> Result<(), CliError> {
    let c: PhaseDiagramConfig = cfg.phase_diagram.clone().unwrap_or_default();
    let seed = if c.method == ClassifierMethod::Analytic {
        cfg.seed.unwrap_or(0)
    } else {
        require_seed(cfg)?
    };
    let spec = SweepSpec {
        t_min: c.t_min,
        t_max: c.t_max,
        t_steps: c.t_steps,
        g_min: c.g_min,
        g_max: c.g_max,
        g_steps: c.g_steps,
        delta_c: c.delta_c,
        delta_s: c.delta_s,
        kappa: c.kappa,
        n_l: c.n_sites,
        seed,
        method: c.method,
        numeric: c.numeric,
    };
    spec.validate().map_err(invalid)?;
    let mut resolved = cfg.clone();
    resolved.phase_diagram = Some(c.clone());
    let out = Output::new(
        dir.into(),
        format,
        "phase-diagram",
        cfg.seed,
        provenance(&resolved),
    );
    let csv_file = if out.csv() {
        Some(out.create("phase_diagram.csv")?)
    } else {
        None
    };
    let json_file = if out.json() {
        Some(out.create("phase_diagram.json")?)
    } else {
        None
    };

    let start = Instant::now();
    let points = sweep(&spec).map_err(compute)?;
    let wall = start.elapsed().as_secs_f64();
    if let Some(w) = csv_file {
        io::write_sweep(w, &out.meta_line(), spec.delta_c, &points).map_err(io_err)?;
    }
    if let Some(w) = json_file {
        out.write_json(w, &json!({ "wall_time_s": wall, "points": points }))?;
    }
    let mut counts = std::collections::BTreeMap::new();
    for p in &points {
        *counts.entry(p.label.as_str()).or_insert(0usize) += 1;
    }
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
    println!(
        "{} points in {wall:.2}s: {}",
        points.len(),
        summary.join(", ")
    );
    Ok(())
}

fn spectrum(cfg: &Config, dir: &Path, format: Format) -> Result<(), CliError> {
    let seed = require_seed(cfg)?;
    let c: SpectrumConfig = cfg.spectrum.clone().unwrap_or_default();
    if c.n_sites < 2 {
        return Err(CliError::Validation(
            "spectrum: n_sites must be at least 2".into(),
        ));
    }
    let p = LatticeParams {
        hopping: c.t,
        delta_c: c.delta_c,
        delta_s: c.delta_s,
        kappa: c.kappa,
        g: c.g,
    };
    p.validate().map_err(invalid)?;
    let opts = NumericOptions {
        t_end: c.t_end,
        dt: c.dt,
        noise: c.noise,
        window: c.window,
        rtol: c.rtol,
        ..NumericOptions::default()
    };
    let mut resolved = cfg.clone();
    resolved.spectrum = Some(c.clone());
    let out = Output::new(
        dir.into(),
        format,
        "spectrum",
        Some(seed),
        provenance(&resolved),
    );
    let csv_file = if out.csv() {
        Some(out.create("spectrum.csv")?)
    } else {
        None
    };
    let json_file = if out.json() {
        Some(out.create("spectrum.json")?)
    } else {
        None
    };

    let run = run_lattice(&p, c.n_sites, seed, &opts).map_err(|e| match e {
        dicke_core::PhaseError::Invalid { .. } => invalid(e),
        other => compute(other),
    })?;
    let spec = alpha_k_spectrum(&run.final_state).map_err(compute)?;
    let (k, share) = dominant_mode(&run.final_state).map_err(compute)?;
    let phi0 = fit_modulation_phase(&run.final_state.a, k);
    if let Some(w) = csv_file {
        io::write_spectrum(w, &out.meta_line(), &spec).map_err(io_err)?;
    }
    if let Some(w) = json_file {
        let pts: Vec<_> = spec
            .iter()
            .map(|(k, v)| json!({ "k": k, "abs_alpha_k_sq": v }))
            .collect();
        out.write_json(
            w,
            &json!({
                "peak_k": k,
                "peak_k_over_pi": k / std::f64::consts::PI,
                "peak_fraction": share,
                "phi0": phi0,
                "steady": run.steady,
                "max_abs_alpha": run.final_state.max_abs_a(),
                "spectrum": pts,
            }),
        )?;
    }
    println!(
        "peak |k|/pi = {:.4}, share {:.3}, phi0 = {phi0:.4}, steady: {}",
        k / std::f64::consts::PI,
        share,
        run.steady
    );
    Ok(())
}
