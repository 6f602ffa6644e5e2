//! Adaptive Gauss–Kronrod (7/15) quadrature and KL oracles built on it.

use crate::error::{Error, Result};

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
    0.209_482_141_084_727_8,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// `∫_a^b f` to absolute tolerance `tol` by recursive bisection.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut stack = vec![(a, b, tol, 0u32)];
    let mut total = 0.0;
    while let Some((lo, hi, t, depth)) = stack.pop() {
        let (v, err) = gk15(&mut f, lo, hi);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("integrand on [{lo}, {hi}]")));
        }
        if err <= t || depth >= 40 {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * t, depth + 1));
            stack.push((mid, hi, 0.5 * t, depth + 1));
        }
    }
    Ok(total)
}

/// `∫ p_a log(p_a / p_b)` over `[lo, hi]` from log-densities.
pub fn numeric_kl_continuous(
    log_a: impl Fn(f64) -> f64,
    log_b: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    integrate(
        |x| {
            let la = log_a(x);
            if la == f64::NEG_INFINITY {
                return 0.0;
            }
            la.exp() * (la - log_b(x))
        },
        lo,
        hi,
        tol,
    )
}

/// `Σ p_a log(p_a / p_b)` over a finite support.
pub fn numeric_kl_discrete(pa: &[f64], pb: &[f64]) -> Result<f64> {
    if pa.len() != pb.len() {
        return Err(Error::Dimension { expected: pa.len(), got: pb.len() });
    }
    let mut total = 0.0;
    for (&a, &b) in pa.iter().zip(pb) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::NonFinite("reference mass is zero where the first is not".into()));
        }
        total += a * (a / b).ln();
    }
    Ok(total)
}

/// Log-density of `N(m, v)`.
pub fn normal_log_pdf(x: f64, m: f64, v: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * v).ln() - 0.5 * (x - m) * (x - m) / v
}

/// `KL(N(ma, va) ‖ N(mb, vb))` by quadrature on `ma ± 12 sd`.
pub fn gaussian_kl_quadrature(ma: f64, va: f64, mb: f64, vb: f64) -> Result<f64> {
    let sd = va.sqrt();
    numeric_kl_continuous(
        |x| normal_log_pdf(x, ma, va),
        |x| normal_log_pdf(x, mb, vb),
        ma - 12.0 * sd,
        ma + 12.0 * sd,
        1e-10,
    )
}
