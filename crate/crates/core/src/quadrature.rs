//! Deterministic quadrature for oscillatory radial integrals.
//!
//! Panels are sized from an a priori bound on the local phase frequency so
//! that no panel sees more than π/4 of phase change, then each panel is
//! evaluated with a 15-point Kronrod rule. Every result must survive a
//! panel-doubling stability test before it is accepted.

use crate::error::CoreError;
use crate::Result;
use num_complex::Complex64;

/// Positive abscissae of the 15-point Kronrod extension of 7-point Gauss,
/// ordered from the outermost node inward; even positions are Gauss nodes.
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

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529_2,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// Weights of the embedded 7-point Gauss rule, for `XGK[1]`, `XGK[3]`,
/// `XGK[5]`, `XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Phase change allowed per panel at the bounding local frequency.
const PHASE_BUDGET: f64 = std::f64::consts::FRAC_PI_4;

/// Kronrod-15 value on [a, b] and the magnitude of its defect against the
/// embedded Gauss-7 rule.
pub fn kronrod_panel(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = Complex64::new(0.0, 0.0);
    let mut gauss = Complex64::new(0.0, 0.0);
    for (i, &x) in XGK.iter().enumerate() {
        let contribution = if x == 0.0 {
            f(mid)
        } else {
            f(mid - half * x) + f(mid + half * x)
        };
        kronrod += WGK[i] * contribution;
        if i % 2 == 1 {
            gauss += WG[i / 2] * contribution;
        }
    }
    kronrod *= half;
    gauss *= half;
    (kronrod, (kronrod - gauss).norm())
}

/// Panel edges over [a, b] such that each panel carries at most π/4 of phase
/// at the bounding frequency, with mandatory edges at the interior
/// breakpoints (integrand kinks).
///
/// `freq_upper(lo, hi)` must bound the local phase frequency |dφ/dr| on
/// [lo, hi]; it may be crude, only panel count suffers.
pub fn phase_budget_edges(
    a: f64,
    b: f64,
    freq_upper: &dyn Fn(f64, f64) -> f64,
    breakpoints: &[f64],
) -> Result<Vec<f64>> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(CoreError::Quadrature(format!(
            "bad interval [{a}, {b}]"
        )));
    }
    let mut anchors: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&p| p > a && p < b)
        .collect();
    anchors.sort_by(|x, y| x.partial_cmp(y).unwrap());
    anchors.insert(0, a);
    anchors.push(b);

    let mut edges = vec![a];
    for seg in anchors.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let mut r = lo;
        while r < hi {
            let mut h = hi - r;
            // Shrink until the panel respects the phase budget. The bound is
            // re-evaluated on the shrunken panel, so a frequency that grows
            // toward the far end cannot be underestimated.
            let mut halvings = 0;
            while h * freq_upper(r, r + h) > PHASE_BUDGET {
                h *= 0.5;
                halvings += 1;
                if halvings > 128 {
                    return Err(CoreError::Quadrature(format!(
                        "panel width underflow near r={r}: frequency bound {}",
                        freq_upper(r, r + h)
                    )));
                }
            }
            let next = if r + h >= hi { hi } else { r + h };
            if next <= r {
                return Err(CoreError::Quadrature(format!(
                    "panel edges stalled at r={r}"
                )));
            }
            edges.push(next);
            r = next;
        }
    }
    Ok(edges)
}

/// Accepted oscillatory integral: the refined value, the change observed in
/// the final panel-doubling, and the panel count of the refined grid.
#[derive(Clone, Copy, Debug)]
pub struct OscillatoryIntegral {
    pub value: Complex64,
    pub doubling_defect: f64,
    pub panels: usize,
}

/// Integrates f over [a, b] with phase-budget panels, then doubles the panel
/// count until the value moves by at most `abs_tol`. Fails if stability is
/// not reached before the panel cap.
pub fn integrate_oscillatory(
    f: &dyn Fn(f64) -> Complex64,
    a: f64,
    b: f64,
    freq_upper: &dyn Fn(f64, f64) -> f64,
    breakpoints: &[f64],
    abs_tol: f64,
) -> Result<OscillatoryIntegral> {
    if !(abs_tol.is_finite() && abs_tol > 0.0) {
        return Err(CoreError::Quadrature(format!(
            "stability tolerance must be positive, got {abs_tol}"
        )));
    }
    let mut edges = phase_budget_edges(a, b, freq_upper, breakpoints)?;
    let sum = |edges: &[f64]| -> Complex64 {
        edges
            .windows(2)
            .map(|p| kronrod_panel(f, p[0], p[1]).0)
            .sum()
    };
    let mut value = sum(&edges);
    const PANEL_CAP: usize = 1 << 23;
    loop {
        let mut refined = Vec::with_capacity(edges.len() * 2 - 1);
        for p in edges.windows(2) {
            refined.push(p[0]);
            refined.push(0.5 * (p[0] + p[1]));
        }
        refined.push(*edges.last().unwrap());
        let refined_value = sum(&refined);
        let defect = (refined_value - value).norm();
        if defect <= abs_tol {
            return Ok(OscillatoryIntegral {
                value: refined_value,
                doubling_defect: defect,
                panels: refined.len() - 1,
            });
        }
        if refined.len() - 1 > PANEL_CAP {
            return Err(CoreError::Quadrature(format!(
                "no stability at {} panels: doubling moved the value by {defect:e} (tol {abs_tol:e})",
                refined.len() - 1
            )));
        }
        edges = refined;
        value = refined_value;
    }
}

/// Gauss-Legendre nodes and weights on [−1, 1], by Newton iteration on the
/// Legendre recurrence. Nodes are symmetric and weights sum to 2.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1, "rule order must be positive");
    let mut rule = Vec::with_capacity(n);
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi's approximation seeds Newton well for all orders.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((x, w));
        if !(n % 2 == 1 && i == m - 1) {
            rule.push((-x, w));
        }
    }
    rule.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    rule
}
