//! Radial Fourier multipliers and projection operators.
//!
//! The half-Klein-Gordon family for light speed c:
//!
//! * mass operator      M(ξ)   = √(c⁴ + c²|ξ|²),
//! * its inverse        M⁻¹(ξ) = 1/√(c⁴ + c²|ξ|²),
//! * shifted generator  h_c(ξ) = symbol of M − c².
//!
//! h_c is evaluated exclusively through the cancellation-free form
//! h_c(ξ) = |ξ|² / (1 + √(1 + |ξ|²/c²)); the naive difference
//! √(c⁴+c²|ξ|²) − c² loses all significant digits once |ξ| ≪ c.
//! h_c satisfies h_c ≤ min(c|ξ|, |ξ|²/2) and h_c → |ξ|²/2 as c → ∞,
//! which is the mechanism behind the Schrödinger limit.

use crate::error::CoreError;
use crate::field::{SpectralField, VectorField};
use crate::Result;
use num_complex::Complex64;

/// Shifted generator symbol h_c(ξ) = |ξ|²/(1 + √(1 + |ξ|²/c²)).
pub fn symbol_hc(xi_sq: f64, c: f64) -> f64 {
    xi_sq / (1.0 + (1.0 + xi_sq / (c * c)).sqrt())
}

/// Mass symbol √(c⁴ + c²|ξ|²).
pub fn symbol_m(xi_sq: f64, c: f64) -> f64 {
    c * (c * c + xi_sq).sqrt()
}

/// Smooth radial cutoff: 1 on [0,1], cos²(π(r−1)/2) on (1,2), 0 on [2,∞).
pub fn cutoff_chi(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let s = (std::f64::consts::FRAC_PI_2 * (r - 1.0)).cos();
        s * s
    }
}

/// Supported radial multipliers.
#[derive(Clone, Copy, Debug)]
pub enum Multiplier {
    /// M = √(c⁴ − c²Δ).
    Mass { c: f64 },
    /// M⁻¹.
    MassInverse { c: f64 },
    /// M − c², in the cancellation-safe form.
    MassShifted { c: f64 },
    /// Δ⁻¹; annihilates the constant mode by contract.
    InverseLaplacian,
    /// |D|^s. For s < 0 the constant mode must vanish.
    FractionalD { s: f64 },
    /// (1 − Δ)^{s/2}, the Sobolev weight.
    Bessel { s: f64 },
    /// Low-frequency cutoff χ(|ξ|/c).
    LowPass { c: f64 },
}

impl Multiplier {
    /// Symbol value at squared radius |ξ|².
    pub fn symbol(&self, xi_sq: f64) -> f64 {
        match *self {
            Multiplier::Mass { c } => symbol_m(xi_sq, c),
            Multiplier::MassInverse { c } => 1.0 / symbol_m(xi_sq, c),
            Multiplier::MassShifted { c } => symbol_hc(xi_sq, c),
            Multiplier::InverseLaplacian => {
                if xi_sq == 0.0 {
                    0.0
                } else {
                    -1.0 / xi_sq
                }
            }
            Multiplier::FractionalD { s } => {
                if xi_sq == 0.0 {
                    if s > 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    xi_sq.powf(s / 2.0)
                }
            }
            Multiplier::Bessel { s } => (1.0 + xi_sq).powf(s / 2.0),
            Multiplier::LowPass { c } => cutoff_chi(xi_sq.sqrt() / c),
        }
    }

    fn validate(&self) -> Result<()> {
        let c = match *self {
            Multiplier::Mass { c }
            | Multiplier::MassInverse { c }
            | Multiplier::MassShifted { c }
            | Multiplier::LowPass { c } => c,
            _ => return Ok(()),
        };
        if !(c.is_finite() && c > 0.0) {
            return Err(CoreError::SingularSymbol(format!(
                "light speed parameter must be positive, got {c}"
            )));
        }
        Ok(())
    }
}

/// Applies a radial multiplier coefficient-wise.
///
/// Real, even symbols preserve the real-valued flag. `FractionalD` with
/// negative exponent rejects fields whose constant mode is nonzero;
/// `InverseLaplacian` annihilates the constant mode by contract.
pub fn apply_multiplier(f: &SpectralField, m: &Multiplier) -> Result<SpectralField> {
    m.validate()?;
    if let Multiplier::FractionalD { s } = *m {
        if s < 0.0 {
            let zero = f.coeff([0, 0, 0]).norm();
            if zero > 1e-14 * (f.l2_norm() + 1e-300) {
                return Err(CoreError::SingularSymbol(format!(
                    "|D|^{s} needs a zero constant mode, found magnitude {zero:.3e}"
                )));
            }
        }
    }
    let grid = f.grid();
    let mut out = f.clone();
    for (idx, v) in out.coeffs_mut().indexed_iter_mut() {
        let xi_sq = grid.xi_sq([idx.0, idx.1, idx.2]);
        if xi_sq == 0.0 {
            match *m {
                Multiplier::InverseLaplacian => *v = Complex64::default(),
                Multiplier::FractionalD { s } if s < 0.0 => *v = Complex64::default(),
                _ => *v *= m.symbol(0.0),
            }
        } else {
            *v *= m.symbol(xi_sq);
        }
    }
    Ok(out)
}

/// Riesz transform R_i = ∂_i/|D|: symbol iξ_i/|ξ|, zero on the constant mode.
pub fn riesz(f: &SpectralField, axis: usize) -> SpectralField {
    assert!(axis < 3);
    let grid = f.grid();
    let mut out = f.clone();
    for (idx, v) in out.coeffs_mut().indexed_iter_mut() {
        let xi = grid.wavevector([idx.0, idx.1, idx.2]);
        let norm = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
        if norm == 0.0 {
            *v = Complex64::default();
        } else {
            *v *= Complex64::new(0.0, xi[axis] / norm);
        }
    }
    out
}

/// Leray projection onto divergence-free fields:
/// (PX)^i = X^i − ξ^i (ξ·X̂)/|ξ|². The constant mode passes through.
pub fn leray_project(x: &VectorField) -> VectorField {
    let grid = x.grid();
    let mut out = x.clone();
    for idx in grid.indices() {
        let xi = grid.wavevector(idx);
        let norm_sq = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        if norm_sq == 0.0 {
            continue;
        }
        let dot = (0..3)
            .map(|i| Complex64::new(xi[i], 0.0) * x.comp(i).coeff(idx))
            .sum::<Complex64>();
        for i in 0..3 {
            let v = x.comp(i).coeff(idx) - dot * (xi[i] / norm_sq);
            out.comp_mut(i).set_coeff(idx, v);
        }
    }
    out
}

/// Splits into low and high parts at scale c: f̂_l = χ(|ξ|/c)·f̂ and
/// f_h = f − f_l, so the partition is exact in floating point.
pub fn low_high_split(f: &SpectralField, c: f64) -> Result<(SpectralField, SpectralField)> {
    let low = apply_multiplier(f, &Multiplier::LowPass { c })?;
    let high = f.sub(&low)?;
    Ok((low, high))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use ndarray::Array3;

    #[test]
    fn hc_values() {
        // |ξ|² = 3, c = 1: h = 3/(1+2) = 1.
        assert!((symbol_hc(3.0, 1.0) - 1.0).abs() < 1e-15);
        // ξ = 0, c = 3: M = c² = 9, shifted symbol 0.
        assert!((symbol_m(0.0, 3.0) - 9.0).abs() < 1e-12);
        assert_eq!(symbol_hc(0.0, 3.0), 0.0);
    }

    #[test]
    fn hc_nonrelativistic_gap() {
        // |ξ| = 1, c = 10³: |h_c − |ξ|²/2| = |ξ|⁴/(2c²(1+s)²) ≈ 1.25e-7.
        let h = symbol_hc(1.0, 1e3);
        let gap = (h - 0.5).abs();
        assert!(gap <= 2e-7, "gap {gap}");
        let s = (1.0_f64 + 1.0 / 1e6).sqrt();
        let predicted = 1.0 / (2.0 * 1e6 * (1.0 + s) * (1.0 + s));
        // gap carries one ulp of 0.5 from the subtraction, so compare loosely.
        assert!((gap - predicted).abs() < 1e-15);
    }

    #[test]
    fn hc_is_cancellation_free_for_large_c() {
        // The naive √(c⁴+c²|ξ|²) − c² is catastrophically wrong at c = 10⁸;
        // the rational form stays at full precision.
        let c = 1e8;
        let xi_sq = 2.0;
        let naive = symbol_m(xi_sq, c) - c * c;
        let safe = symbol_hc(xi_sq, c);
        assert!((safe - 1.0).abs() < 1e-12);
        // Either the naive form is off or (rarely) the platform got lucky;
        // the safe form must be right regardless.
        assert!((naive - safe).abs() > 1e-9 || (naive - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hc_identity_m_minus_c2() {
        // Where no cancellation occurs the two routes agree tightly.
        for &(xi_sq, c) in &[(3.0, 1.0), (10.0, 2.0), (100.0, 4.0), (0.5, 1.0)] {
            let direct = symbol_m(xi_sq, c) - c * c;
            let safe = symbol_hc(xi_sq, c);
            assert!(
                (direct - safe).abs() <= 1e-12 * safe.max(1.0),
                "xi_sq={xi_sq} c={c}"
            );
        }
    }

    #[test]
    fn hc_upper_bounds() {
        for &c in &[1.0, 2.0, 8.0, 64.0] {
            for i in 0..200 {
                let xi = 1e-3 * 10f64.powf(i as f64 * 0.045);
                let h = symbol_hc(xi * xi, c);
                assert!(h <= c * xi * (1.0 + 1e-14));
                assert!(h <= xi * xi / 2.0 * (1.0 + 1e-14));
            }
        }
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff_chi(0.3), 1.0);
        assert_eq!(cutoff_chi(1.0), 1.0);
        assert_eq!(cutoff_chi(2.0), 0.0);
        assert_eq!(cutoff_chi(5.0), 0.0);
        let mid = cutoff_chi(1.5);
        assert!((mid - 0.5).abs() < 1e-14);
        // Monotone on the ramp.
        assert!(cutoff_chi(1.2) > cutoff_chi(1.4));
    }

    #[test]
    fn negative_power_rejects_nonzero_mean() {
        let g = Grid::new(8, 1.0).unwrap();
        let ones = Array3::from_elem((8, 8, 8), 1.0);
        let f = SpectralField::from_physical_real(g, &ones).unwrap();
        let r = apply_multiplier(&f, &Multiplier::FractionalD { s: -1.0 });
        assert!(r.is_err());
    }

    #[test]
    fn inverse_laplacian_kills_mean_and_inverts() {
        let g = Grid::new(8, 2.0 * std::f64::consts::PI).unwrap();
        let samples = Array3::from_shape_fn((8, 8, 8), |(i, _, _)| {
            1.0 + (2.0 * std::f64::consts::PI * i as f64 / 8.0).cos()
        });
        let f = SpectralField::from_physical_real(g, &samples).unwrap();
        let u = apply_multiplier(&f, &Multiplier::InverseLaplacian).unwrap();
        assert_eq!(u.coeff([0, 0, 0]), Complex64::default());
        // Δ(Δ⁻¹ f) recovers f minus its mean.
        let lap = u.derivative(0).derivative(0)
            .add(&u.derivative(1).derivative(1)).unwrap()
            .add(&u.derivative(2).derivative(2)).unwrap();
        let mut expected = f.clone();
        expected.remove_mean();
        let diff = lap.sub(&expected).unwrap().l2_norm();
        assert!(diff < 1e-12);
    }
}
