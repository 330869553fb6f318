//! Measured quantities: lattice Sobolev and Lebesgue norms, the conserved
//! field energy, null forms and their exact lattice identity, spacetime
//! trackers, and the error metrics comparing the coupled system against its
//! nonrelativistic limit.
//!
//! All norms carry the torus volume factors so that Plancherel holds
//! literally: `‖f‖₂² = cell_volume·Σ_x|f(x)|² = cell_volume·Σ_k|f̂(k)|²`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::field::{Reality, SpectralField, VectorField};
use crate::kgm::{self, Couplings, KgmState};
use crate::multiplier::{apply_multiplier, riesz, Multiplier};
use crate::products::dealiased_product;
use crate::Result;

/// Inhomogeneous (`(1+|ξ|²)^{s/2}`) or homogeneous (`|ξ|^s`) Sobolev norm.
///
/// The homogeneous symbol always excludes the zero mode; for s < 0 a nonzero
/// mean (beyond roundoff of the stored coefficients) is rejected because the
/// symbol is singular there.
pub fn sobolev_norm(f: &SpectralField, s: f64, homogeneous: bool) -> Result<f64> {
    let grid = f.grid();
    if homogeneous && s < 0.0 {
        let mean = f.mean().norm();
        if mean > 1e-14 * (1.0 + f.l2_norm()) {
            return Err(CoreError::SingularSymbol(format!(
                "homogeneous norm with s = {s} requires zero mean, got {mean:.3e}"
            )));
        }
    }
    let mut sum = 0.0;
    for (idx, value) in f.coeffs().indexed_iter() {
        let xi_sq = grid.xi_sq([idx.0, idx.1, idx.2]);
        let weight = if homogeneous {
            if xi_sq == 0.0 {
                continue;
            }
            xi_sq.powf(s)
        } else {
            (1.0 + xi_sq).powf(s)
        };
        sum += weight * value.norm_sqr();
    }
    Ok((grid.cell_volume() * sum).sqrt())
}

/// `sqrt(Σᵢ ‖fᵢ‖²)` over the three components.
pub fn vector_sobolev_norm(f: &VectorField, s: f64, homogeneous: bool) -> Result<f64> {
    let mut sum = 0.0;
    for i in 0..3 {
        sum += sobolev_norm(f.comp(i), s, homogeneous)?.powi(2);
    }
    Ok(sum.sqrt())
}

/// Lattice Lebesgue norm `(cell_volume·Σ_x|f(x)|^p)^{1/p}`, with `p = ∞`
/// giving the max over grid points.
pub fn lp_norm(f: &SpectralField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(CoreError::Diagnostics(format!("invalid Lebesgue exponent {p}")));
    }
    let phys = f.to_physical();
    if p.is_infinite() {
        return Ok(phys.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    let sum: f64 = phys.iter().map(|z| z.norm().powf(p)).sum();
    Ok((f.grid().cell_volume() * sum).powf(1.0 / p))
}

/// The conserved field energy, split into its five quadratic pieces. Each
/// piece is half the squared L² norm of the corresponding density factor.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBreakdown {
    pub d0: f64,
    pub gradient: f64,
    pub mass: f64,
    pub electric: f64,
    pub magnetic: f64,
    pub total: f64,
}

/// Energy `½∫(|D₀φ|² + Σ|D_jφ|² + c²|φ|² + |E|² + |B|²) dx` of a coupled
/// state. The scalar potential is re-solved from the constraint, so the time
/// derivative entering `D₀φ = (1/c)(∂ₜφ + iA₀φ)` reduces to the spectral
/// expression `−(i/c)M(φ⁺−φ⁻)`: the A₀ terms cancel identically.
pub fn kgm_energy(state: &KgmState, couplings: &Couplings) -> Result<EnergyBreakdown> {
    let c = state.c;
    let grid = state.grid();
    let (phi, phi_diff) = kgm::reconstruct_phi_pair(state);

    let m_diff = apply_multiplier(&phi_diff, &Multiplier::Mass { c })?;
    let d0 = 0.5 * (m_diff.l2_norm() / c).powi(2);

    let mut grad = 0.0;
    for axis in 0..3 {
        let mut dj = phi.derivative(axis);
        if couplings.magnetic {
            let aj_phi = dealiased_product(state.wave.a.comp(axis), &phi)?;
            dj.axpy(Complex64::new(0.0, 1.0 / c), &aj_phi)?;
        }
        grad += 0.5 * dj.l2_norm().powi(2);
    }

    let mass = 0.5 * (c * phi.l2_norm()).powi(2);

    let a0 = if couplings.electrostatic {
        kgm::solve_a0(&state.psi_plus, &state.psi_minus, state.t, c)?.a0
    } else {
        SpectralField::zeros(grid, Reality::RealValued)
    };
    let mut electric = 0.0;
    for axis in 0..3 {
        let mut e_i = a0.derivative(axis);
        e_i.axpy(Complex64::new(-1.0 / c, 0.0), state.wave.at.comp(axis))?;
        electric += 0.5 * e_i.l2_norm().powi(2);
    }
    let magnetic = 0.5 * state.wave.a.curl().l2_norm().powi(2);

    let total = d0 + grad + mass + electric + magnetic;
    if !total.is_finite() {
        return Err(CoreError::Diagnostics("non-finite energy".into()));
    }
    Ok(EnergyBreakdown { d0, gradient: grad, mass, electric, magnetic, total })
}

/// Spectral closed form of the energy when all couplings are off:
/// `cell·Σ(c²+|ξ|²)(|ψ̂⁺|²+|ψ̂⁻|²)` plus half the free wave energy. Used as an
/// independent cross-check of `kgm_energy`.
pub fn free_energy_closed_form(state: &KgmState) -> f64 {
    let grid = state.grid();
    let c = state.c;
    let mut sum = 0.0;
    for (idx, vp) in state.psi_plus.coeffs().indexed_iter() {
        let xi_sq = grid.xi_sq([idx.0, idx.1, idx.2]);
        let vm = state.psi_minus.coeff([idx.0, idx.1, idx.2]);
        sum += (c * c + xi_sq) * (vp.norm_sqr() + vm.norm_sqr());
    }
    grid.cell_volume() * sum + 0.5 * state.wave.wave_energy(c)
}

/// Dealiased null form `Q_ij(u,v) = ∂_i u ∂_j v − ∂_j u ∂_i v`.
pub fn null_form_q(u: &SpectralField, v: &SpectralField, i: usize, j: usize) -> Result<SpectralField> {
    if i >= 3 || j >= 3 {
        return Err(CoreError::Diagnostics(format!("null form axes out of range: ({i},{j})")));
    }
    let a = dealiased_product(&u.derivative(i), &v.derivative(j))?;
    let b = dealiased_product(&u.derivative(j), &v.derivative(i))?;
    a.sub(&b)
}

/// Relative L² discrepancy of the identity
/// `u·∇v = ½ Σ_{ij} Q_ij(|Dₓ|⁻¹[R_j uⁱ − R_i uʲ], v)`,
/// which is exact per Fourier mode pair when u is divergence-free with
/// zero-mean components. Both sides use identical dealiasing, so the returned
/// discrepancy for valid u is pure roundoff; a non-solenoidal u produces an
/// O(1) value, witnessing the necessity of the hypothesis.
pub fn null_identity_check(u: &VectorField, v: &SpectralField) -> Result<f64> {
    let grid = u.grid();
    v.grid().ensure_same(&grid)?;

    let mut lhs = SpectralField::zeros(grid, Reality::ComplexValued);
    for i in 0..3 {
        let term = dealiased_product(u.comp(i), &v.derivative(i))?;
        lhs.axpy(Complex64::new(1.0, 0.0), &term)?;
    }

    let mut rhs = SpectralField::zeros(grid, Reality::ComplexValued);
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let mut w = riesz(u.comp(i), j);
            w.axpy(Complex64::new(-1.0, 0.0), &riesz(u.comp(j), i))?;
            let w = apply_multiplier(&w, &Multiplier::FractionalD { s: -1.0 })?;
            let q = null_form_q(&w, v, i, j)?;
            rhs.axpy(Complex64::new(0.5, 0.0), &q)?;
        }
    }

    let diff = lhs.sub(&rhs)?.l2_norm();
    let scale = lhs.l2_norm();
    if scale < 1e-14 {
        return Ok(diff);
    }
    Ok(diff / scale)
}

/// Composite trapezoid rule over possibly nonuniform sample times.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    assert_eq!(times.len(), values.len(), "mismatched series lengths");
    let mut sum = 0.0;
    for k in 1..times.len() {
        sum += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
    }
    sum
}

fn series_max(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

/// One instant of the tracker inputs. Field norms come from the sampled
/// state; the forcing norms come from the equation right-hand sides evaluated
/// at that state (never from differencing states in time).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrackerSample {
    pub t: f64,
    /// ‖A(t)‖_{Ḣ¹}
    pub a_h1dot: f64,
    /// ‖∂ₜA(t)‖₂
    pub at_l2: f64,
    /// ‖□A(t)‖₂, i.e. the norm of the projected wave source
    pub box_a_l2: f64,
    /// ‖ψ±(t)‖_{H¹}
    pub psi_h1: [f64; 2],
    /// ‖(i∂ₜ ∓ (M−c²))ψ±‖_{H¹} from the stored right-hand sides
    pub lpsi_h1: [f64; 2],
    /// ‖ψ±_l(t)‖₂ of the low-frequency part (|ξ| ≤ c cutoff)
    pub psi_low_l2: [f64; 2],
    /// ‖ψ±_l(t)‖₆
    pub psi_low_l6: [f64; 2],
}

/// The three spacetime trackers:
/// `X = sup‖A‖_{Ḣ¹} + (1/c)sup‖∂ₜA‖₂ + c∫‖□A‖₂`,
/// `Y± = sup‖ψ±‖_{H¹} + ∫‖L±ψ±‖_{H¹}`,
/// `Z± = sup‖ψ±_l‖₂ + (∫‖ψ±_l‖₆²)^{1/2}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Trackers {
    pub x_t: f64,
    pub y_t: [f64; 2],
    pub z_t: [f64; 2],
}

/// Time norms are composite trapezoid sums over the sample cadence; sup norms
/// are maxima over samples.
pub fn strichartz_trackers(samples: &[TrackerSample], c: f64) -> Result<Trackers> {
    if samples.is_empty() {
        return Err(CoreError::Diagnostics("tracker series is empty".into()));
    }
    for pair in samples.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(CoreError::Diagnostics("tracker times not strictly increasing".into()));
        }
    }
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();

    let x_t = series_max(samples.iter().map(|s| s.a_h1dot))
        + series_max(samples.iter().map(|s| s.at_l2)) / c
        + c * trapezoid(&times, &samples.iter().map(|s| s.box_a_l2).collect::<Vec<_>>());

    let mut y_t = [0.0; 2];
    let mut z_t = [0.0; 2];
    for side in 0..2 {
        y_t[side] = series_max(samples.iter().map(|s| s.psi_h1[side]))
            + trapezoid(&times, &samples.iter().map(|s| s.lpsi_h1[side]).collect::<Vec<_>>());
        let l6_sq: Vec<f64> = samples.iter().map(|s| s.psi_low_l6[side].powi(2)).collect();
        z_t[side] = series_max(samples.iter().map(|s| s.psi_low_l2[side]))
            + trapezoid(&times, &l6_sq).sqrt();
    }

    let out = Trackers { x_t, y_t, z_t };
    if !(out.x_t.is_finite() && out.y_t.iter().all(|v| v.is_finite()) && out.z_t.iter().all(|v| v.is_finite())) {
        return Err(CoreError::Diagnostics("non-finite tracker".into()));
    }
    Ok(out)
}

/// Per-sample error metrics between a coupled state and the limit fields at
/// the same instant.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ErrorSample {
    pub t: f64,
    pub h1_err_p: f64,
    pub h1_err_m: f64,
    /// ‖Δ(A₀−u)‖_{L¹} and ‖Δ(A₀−u)‖_{L^{3/2}}
    pub lap_a0_u_err_r1: f64,
    pub lap_a0_u_err_r32: f64,
    /// ‖A₀−u‖_{Ḣ¹}
    pub a0_u_h1dot_err: f64,
    /// ‖M⁻¹(A₀φ)‖_{H¹}
    pub minv_a0phi_h1: f64,
    /// ‖R‖_{H¹}
    pub r_h1: f64,
}

/// Evaluates all error metrics for one (state, limit-fields) pair. The scalar
/// potentials on both sides are re-solved from their own constraints so the
/// comparison is like-for-like.
pub fn error_sample(
    state: &KgmState,
    couplings: &Couplings,
    v_plus: &SpectralField,
    v_minus: &SpectralField,
) -> Result<ErrorSample> {
    let grid = state.grid();
    v_plus.grid().ensure_same(&grid)?;
    v_minus.grid().ensure_same(&grid)?;

    let h1_err_p = sobolev_norm(&state.psi_plus.sub(v_plus)?, 1.0, false)?;
    let h1_err_m = sobolev_norm(&state.psi_minus.sub(v_minus)?, 1.0, false)?;

    let a0 = if couplings.electrostatic {
        kgm::solve_a0(&state.psi_plus, &state.psi_minus, state.t, state.c)?.a0
    } else {
        SpectralField::zeros(grid, Reality::RealValued)
    };
    let u = crate::sp::solve_u(v_plus, v_minus)?.u;
    let d = a0.sub(&u)?;
    let mut lap_d = d.clone();
    for (idx, value) in lap_d.coeffs_mut().indexed_iter_mut() {
        *value *= Complex64::new(-grid.xi_sq([idx.0, idx.1, idx.2]), 0.0);
    }
    let lap_a0_u_err_r1 = lp_norm(&lap_d, 1.0)?;
    let lap_a0_u_err_r32 = lp_norm(&lap_d, 1.5)?;
    let a0_u_h1dot_err = sobolev_norm(&d, 1.0, true)?;

    let (phi, _) = kgm::reconstruct_phi_pair(state);
    let a0_phi = dealiased_product(&a0, &phi)?;
    let minv = apply_multiplier(&a0_phi, &Multiplier::MassInverse { c: state.c })?;
    let minv_a0phi_h1 = sobolev_norm(&minv, 1.0, false)?;

    let r = kgm::compute_remainder(state, &a0, couplings)?;
    let r_h1 = sobolev_norm(&r, 1.0, false)?;

    Ok(ErrorSample {
        t: state.t,
        h1_err_p,
        h1_err_m,
        lap_a0_u_err_r1,
        lap_a0_u_err_r32,
        a0_u_h1dot_err,
        minv_a0phi_h1,
        r_h1,
    })
}

/// Sup-over-samples reductions of the error series, plus the L¹-in-time
/// remainder norm.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ErrorSummary {
    pub sup_h1_err_p: f64,
    pub sup_h1_err_m: f64,
    pub sup_lap_a0_u_err_r1: f64,
    pub sup_lap_a0_u_err_r32: f64,
    pub sup_a0_u_h1dot_err: f64,
    pub sup_minv_a0phi_h1: f64,
    pub r_l1h1: f64,
}

pub fn convergence_error(samples: &[ErrorSample]) -> Result<ErrorSummary> {
    if samples.is_empty() {
        return Err(CoreError::Diagnostics("error series is empty".into()));
    }
    for pair in samples.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(CoreError::Diagnostics("error sample times not strictly increasing".into()));
        }
    }
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let r_series: Vec<f64> = samples.iter().map(|s| s.r_h1).collect();
    Ok(ErrorSummary {
        sup_h1_err_p: series_max(samples.iter().map(|s| s.h1_err_p)),
        sup_h1_err_m: series_max(samples.iter().map(|s| s.h1_err_m)),
        sup_lap_a0_u_err_r1: series_max(samples.iter().map(|s| s.lap_a0_u_err_r1)),
        sup_lap_a0_u_err_r32: series_max(samples.iter().map(|s| s.lap_a0_u_err_r32)),
        sup_a0_u_h1dot_err: series_max(samples.iter().map(|s| s.a0_u_h1dot_err)),
        sup_minv_a0phi_h1: series_max(samples.iter().map(|s| s.minv_a0phi_h1)),
        r_l1h1: trapezoid(&times, &r_series),
    })
}

/// Metadata identifying one recorded run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordMeta {
    pub run_id: String,
    /// None for runs of the limit system, which has no light speed.
    pub c: Option<f64>,
    pub n: usize,
    pub length: f64,
    pub dt: f64,
    pub data_hash: String,
}

/// Time series of named scalars sampled along one trajectory. Every push
/// must carry the same set of names, finite values, and a strictly larger
/// time than the previous sample.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsRecord {
    pub meta: RecordMeta,
    times: Vec<f64>,
    scalars: BTreeMap<String, Vec<f64>>,
}

impl DiagnosticsRecord {
    pub fn new(meta: RecordMeta) -> Self {
        DiagnosticsRecord { meta, times: Vec::new(), scalars: BTreeMap::new() }
    }

    pub fn push_sample(&mut self, t: f64, named: &[(&str, f64)]) -> Result<()> {
        if !t.is_finite() {
            return Err(CoreError::Diagnostics(format!("non-finite sample time {t}")));
        }
        if let Some(last) = self.times.last() {
            if t <= *last {
                return Err(CoreError::Diagnostics(format!(
                    "sample times must increase strictly: {t} after {last}"
                )));
            }
        }
        for (name, value) in named {
            if !value.is_finite() {
                return Err(CoreError::Diagnostics(format!("non-finite scalar {name} at t = {t}")));
            }
        }
        if self.times.is_empty() {
            for (name, _) in named {
                self.scalars.insert((*name).to_string(), Vec::new());
            }
        } else if named.len() != self.scalars.len()
            || !named.iter().all(|(name, _)| self.scalars.contains_key(*name))
        {
            return Err(CoreError::Diagnostics("sample carries a different scalar set".into()));
        }
        self.times.push(t);
        for (name, value) in named {
            self.scalars.get_mut(*name).expect("key checked above").push(*value);
        }
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.scalars.keys().map(|s| s.as_str())
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.scalars.get(name).map(|v| v.as_slice())
    }
}

/// Terminal summary of one run at a fixed light speed.
#[derive(Debug, Clone, Serialize)]
pub struct TerminalSummary {
    pub c: f64,
    pub errors: ErrorSummary,
    pub trackers: Trackers,
    pub energy_drift_rel: f64,
    pub psi_l2_drift_rel: [f64; 2],
    pub charge_defect_max: f64,
}

/// Least-squares slope of log(value) against log(c). None when any value is
/// nonpositive or fewer than two points are given.
pub fn fit_decay_exponent(c_values: &[f64], values: &[f64]) -> Option<f64> {
    if c_values.len() != values.len() || c_values.len() < 2 {
        return None;
    }
    if values.iter().any(|v| *v <= 0.0) || c_values.iter().any(|c| *c <= 0.0) {
        return None;
    }
    let xs: Vec<f64> = c_values.iter().map(|c| c.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Fitted decay exponents of the quantities expected to vanish as c grows.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayExponents {
    pub r_l1h1: Option<f64>,
    pub minv_a0phi: Option<f64>,
    pub h1_err: Option<f64>,
}

///// Cross-c sweep outcome: one terminal summary per light speed, plus fitted
/// decay exponents over the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub c_values: Vec<f64>,
    pub summaries: Vec<TerminalSummary>,
    pub exponents: DecayExponents,
}

impl SweepResult {
    pub fn new(summaries: Vec<TerminalSummary>) -> Result<Self> {
        let c_values: Vec<f64> = summaries.iter().map(|s| s.c).collect();
        for pair in c_values.windows(2) {
            if pair[1] <= pair[0] {
                return Err(CoreError::Diagnostics("sweep c values must increase strictly".into()));
            }
        }
        let r: Vec<f64> = summaries.iter().map(|s| s.errors.r_l1h1).collect();
        let minv: Vec<f64> = summaries.iter().map(|s| s.errors.sup_minv_a0phi_h1).collect();
        let h1: Vec<f64> = summaries
            .iter()
            .map(|s| s.errors.sup_h1_err_p.max(s.errors.sup_h1_err_m))
            .collect();
        let exponents = DecayExponents {
            r_l1h1: fit_decay_exponent(&c_values, &r),
            minv_a0phi: fit_decay_exponent(&c_values, &minv),
            h1_err: fit_decay_exponent(&c_values, &h1),
        };
        Ok(SweepResult { c_values, summaries, exponents })
    }
}
