//! Adaptive Gauss–Kronrod (7/15) quadrature on finite and semi-infinite
//! intervals.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error(
        "quadrature did not reach tolerance {tol:e} (estimated error {err:e}) after {evals} panels"
    )]
    NotConverged { tol: f64, err: f64, evals: usize },
    #[error("integrand returned a non-finite value at x = {0}")]
    NonFinite(f64),
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
// Gauss weights for the odd Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel; returns (integral, error estimate).
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive bisection on `[a, b]` until the summed error estimate is below
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64, QuadratureError> {
    const MAX_PANELS: usize = 4000;
    if a == b {
        return Ok(0.0);
    }
    let (i0, e0) = gk15(&f, a, b);
    let mut panels = vec![(a, b, i0, e0)];
    let mut total = i0;
    let mut err = e0;
    let mut evals = 1;
    loop {
        if !total.is_finite() {
            return Err(QuadratureError::NonFinite(0.5 * (a + b)));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if evals >= MAX_PANELS {
            return Err(QuadratureError::NotConverged {
                tol: abs_tol.max(rel_tol * total.abs()),
                err,
                evals,
            });
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("at least one panel");
        let (pa, pb, pi, pe) = panels.swap_remove(idx);
        let mid = 0.5 * (pa + pb);
        let (l, le) = gk15(&f, pa, mid);
        let (r, re) = gk15(&f, mid, pb);
        total += l + r - pi;
        err += le + re - pe;
        panels.push((pa, mid, l, le));
        panels.push((mid, pb, r, re));
        evals += 2;
    }
}

/// Integral over `[a, inf)` through the map `x = a + s / (1 - s)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64, QuadratureError> {
    let g = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let u = 1.0 - s;
        let x = a + scale * s / u;
        let v = f(x) * scale / (u * u);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, abs_tol, rel_tol)
}
