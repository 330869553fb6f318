//! Exact spectral propagators and the splitting primitives built on them.
//!
//! * U±(t): half-Klein-Gordon group, coefficients × e^{∓i t h_c(ξ)},
//! * V±(t): free Schrödinger group, coefficients × e^{∓i t |ξ|²/2},
//! * wave flow for (A, ∂ₜA) with the inhomogeneous term −c|D|⁻¹sin(c(t−s)|D|)F(s)
//!   integrated by one midpoint sample of the source per step.
//!
//! At ξ = 0, □A = F degenerates to ∂ₜ²Ā = −c²F̄; the step integrates that
//! mean motion in closed form alongside the rotating modes.

use crate::error::CoreError;
use crate::field::{Reality, SpectralField, VectorField};
use crate::multiplier::symbol_hc;
use crate::Result;
use num_complex::Complex64;

/// Sign of the split component the operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    /// +1 for Plus, −1 for Minus.
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Largest step the coupled stepper accepts: the explicit phases e^{±2itc²}
/// in the cross terms must be resolved, so dt·c² is capped at 0.1.
pub fn dt_max(c: f64) -> f64 {
    0.1 / (c * c)
}

/// U±(t): multiplies coefficients by e^{∓i t h_c(ξ)}.
pub fn propagate_u(f: &SpectralField, t: f64, c: f64, sign: Sign) -> SpectralField {
    let grid = f.grid();
    let mut out = f.clone();
    out.set_reality(Reality::ComplexValued);
    let s = sign.factor();
    for (idx, v) in out.coeffs_mut().indexed_iter_mut() {
        let h = symbol_hc(grid.xi_sq([idx.0, idx.1, idx.2]), c);
        *v *= Complex64::from_polar(1.0, -s * t * h);
    }
    out
}

/// V±(t): multiplies coefficients by e^{∓i t |ξ|²/2}.
pub fn propagate_v(f: &SpectralField, t: f64, sign: Sign) -> SpectralField {
    let grid = f.grid();
    let mut out = f.clone();
    out.set_reality(Reality::ComplexValued);
    let s = sign.factor();
    for (idx, v) in out.coeffs_mut().indexed_iter_mut() {
        let xi_sq = grid.xi_sq([idx.0, idx.1, idx.2]);
        *v *= Complex64::from_polar(1.0, -s * t * xi_sq / 2.0);
    }
    out
}

/// Divergence-free vector potential and its time derivative.
#[derive(Clone, Debug)]
pub struct WavePair {
    pub a: VectorField,
    pub at: VectorField,
}

impl WavePair {
    pub fn zeros(grid: crate::grid::Grid) -> Self {
        WavePair {
            a: VectorField::zeros(grid, Reality::RealValued),
            at: VectorField::zeros(grid, Reality::RealValued),
        }
    }

    pub fn grid(&self) -> crate::grid::Grid {
        self.a.grid()
    }

    /// Homogeneous wave energy Σ_k (|ξ|²|Â|² + |∂ₜÂ|²/c²), per-mode invariant
    /// of the free flow, with the physical volume factor.
    pub fn wave_energy(&self, c: f64) -> f64 {
        let grid = self.grid();
        let mut sum = 0.0;
        for idx in grid.indices() {
            let xi_sq = grid.xi_sq(idx);
            for i in 0..3 {
                sum += xi_sq * self.a.comp(i).coeff(idx).norm_sqr()
                    + self.at.comp(i).coeff(idx).norm_sqr() / (c * c);
            }
        }
        sum * grid.cell_volume()
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.at.is_finite()
    }
}

/// One wave step: exact homogeneous rotation over dt plus the Duhamel
/// contribution of a source frozen at its midpoint sample,
///
///   Â  += −F̂·(1 − cos(c·dt·|ξ|))/|ξ|²,
///   ∂ₜÂ += −F̂·c·sin(c·dt·|ξ|)/|ξ|,
///
/// which is the exact particular solution for a constant-in-time source.
/// A non-divergence-free source is projected; the flag reports it.
pub fn wave_step(
    w: &WavePair,
    source_mid: Option<&VectorField>,
    dt: f64,
    c: f64,
) -> Result<(WavePair, bool)> {
    if !(dt.is_finite() && c.is_finite() && c > 0.0) {
        return Err(CoreError::BadStep(format!("dt={dt}, c={c}")));
    }
    let grid = w.grid();
    let mut projected = false;
    let source = match source_mid {
        None => None,
        Some(f) => {
            grid.ensure_same(&f.grid())?;
            let div = f.max_divergence();
            let scale = f.l2_norm().max(1e-300);
            if div > 1e-10 * scale {
                projected = true;
                Some(crate::multiplier::leray_project(f))
            } else {
                Some(f.clone())
            }
        }
    };

    let mut out = w.clone();
    for idx in grid.indices() {
        let xi = grid.xi_sq(idx).sqrt();
        let (rot_aa, rot_atob, rot_btoa, rot_bb);
        if xi == 0.0 {
            // Mean motion: Ā'' = −c²F̄.
            rot_aa = 1.0;
            rot_btoa = dt;
            rot_atob = 0.0;
            rot_bb = 1.0;
        } else {
            let th = c * dt * xi;
            rot_aa = th.cos();
            rot_btoa = th.sin() / (c * xi);
            rot_atob = -c * xi * th.sin();
            rot_bb = th.cos();
        }
        for i in 0..3 {
            let a = w.a.comp(i).coeff(idx);
            let b = w.at.comp(i).coeff(idx);
            let mut na = a * rot_aa + b * rot_btoa;
            let mut nb = a * rot_atob + b * rot_bb;
            if let Some(src) = &source {
                let f = src.comp(i).coeff(idx);
                if xi == 0.0 {
                    na += -f * (c * c * dt * dt / 2.0);
                    nb += -f * (c * c * dt);
                } else {
                    let th = c * dt * xi;
                    na += -f * ((1.0 - th.cos()) / (xi * xi));
                    nb += -f * (c * th.sin() / xi);
                }
            }
            out.a.comp_mut(i).set_coeff(idx, na);
            out.at.comp_mut(i).set_coeff(idx, nb);
        }
    }
    Ok((out, projected))
}

/// Nonlinear term handed to `duhamel_u_step`: an optional real multiplicative
/// potential (applied as the exact pointwise phase e^{−i·dt·V(x)}) plus an
/// optional additive forcing (applied as a midpoint increment).
#[derive(Clone, Debug, Default)]
pub struct NonlinearTerm {
    pub potential: Option<SpectralField>,
    pub additive: Option<SpectralField>,
}

/// Applies the exact phase e^{−i·dt·V(x)} pointwise in physical space and
/// returns to the spectral side. Unitary in the discrete L² norm before the
/// Nyquist rows are re-zeroed.
pub fn apply_potential_phase(psi: &SpectralField, v: &SpectralField, dt: f64) -> Result<SpectralField> {
    psi.grid().ensure_same(&v.grid())?;
    let vphys = v.to_physical_real()?;
    let mut phys = psi.to_physical();
    let mut it = vphys.iter();
    phys.mapv_inplace(|z| {
        let pot = *it.next().expect("shape checked");
        z * Complex64::from_polar(1.0, -dt * pot)
    });
    let mut out = SpectralField::from_physical(psi.grid(), &phys)?;
    out.set_reality(psi.reality().and(Reality::ComplexValued));
    Ok(out)
}

/// One Strang step for i∂ₜψ = ±h_c(D)ψ + F with F supplied by `eval` at the
/// midpoint state: half U± flow, nonlinear update, half U± flow.
pub fn duhamel_u_step<E>(
    psi: &SpectralField,
    eval: E,
    t: f64,
    dt: f64,
    sign: Sign,
    c: f64,
) -> Result<SpectralField>
where
    E: FnOnce(f64, &SpectralField) -> Result<NonlinearTerm>,
{
    let mut cur = propagate_u(psi, dt / 2.0, c, sign);
    let term = eval(t + dt / 2.0, &cur)?;
    if let Some(pot) = &term.potential {
        cur = apply_potential_phase(&cur, pot, dt)?;
    }
    if let Some(add) = &term.additive {
        cur.axpy(Complex64::new(0.0, -dt), add)?;
    }
    Ok(propagate_u(&cur, dt / 2.0, c, sign))
}
