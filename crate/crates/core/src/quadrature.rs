//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate meets `max(abs_tol, rel_tol·|I|)`.

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

/// Gauss weights for nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub fn absolute(abs: f64) -> Self {
        Self { abs, rel: 0.0 }
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kron += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]` (finite, `a ≤ b`).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::InvalidArgument(format!("bad integration range [{a}, {b}]")));
    }
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    // (a, b, value, error)
    let mut pieces: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(64);
    let (v, e) = kronrod(&mut f, a, b);
    pieces.push((a, b, v, e));
    let mut total = v;
    let mut err = e;
    loop {
        if !total.is_finite() {
            return Err(Error::QuadratureNonConvergence { value: total, error: err });
        }
        if err <= tol.abs.max(tol.rel * total.abs()) {
            return Ok(Integral { value: total, error: err });
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureNonConvergence { value: total, error: err });
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            // Interval cannot be split further in floating point.
            return Err(Error::QuadratureNonConvergence { value: total, error: err });
        }
        let (v1, e1) = kronrod(&mut f, lo, mid);
        let (v2, e2) = kronrod(&mut f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
        // Re-sum to avoid drift from incremental updates.
        total = pieces.iter().map(|p| p.2).sum();
        err = pieces.iter().map(|p| p.3).sum();
    }
}

/// Integrates over consecutive sub-intervals split at `points` (sorted, inside
/// `[a, b]`), dividing the absolute tolerance evenly.
pub fn integrate_split<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    points: &[f64],
    tol: Tolerance,
) -> Result<Integral> {
    let mut cuts = vec![a];
    cuts.extend(points.iter().copied().filter(|&p| p > a && p < b));
    cuts.push(b);
    let parts = (cuts.len() - 1) as f64;
    let sub = Tolerance {
        abs: tol.abs / parts,
        rel: tol.rel,
    };
    let mut out = Integral { value: 0.0, error: 0.0 };
    for w in cuts.windows(2) {
        let r = integrate(&mut f, w[0], w[1], sub)?;
        out.value += r.value;
        out.error += r.error;
    }
    Ok(out)
}

/// Integrates over `[a, ∞)` via the substitution `t = a + (1 − s)/s`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, tol: Tolerance) -> Result<Integral> {
    integrate(
        |s: f64| {
            if s <= 0.0 {
                return 0.0;
            }
            let t = a + (1.0 - s) / s;
            let v = f(t) / (s * s);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )
}
