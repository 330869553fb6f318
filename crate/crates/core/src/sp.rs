//! The limiting two-component Schrödinger-Poisson system
//! `(i∂ₜ ± Δ/2)v± = u v±` with `Δu = −|v⁺|² + |v⁻|²` on the torus.
//!
//! Time stepping is Strang splitting. Both substeps are exactly unitary: the
//! free flight is a Fourier phase and the potential update is a pointwise
//! phase, so `‖v±‖₂` is conserved to roundoff per component. Reversing the
//! sign of dt retraces the composition, which the reversibility tests use.

use ndarray::Array3;
use num_complex::Complex64;

use crate::diagnostics::{lp_norm, sobolev_norm, trapezoid, DiagnosticsRecord, RecordMeta};
use crate::error::CoreError;
use crate::field::{Reality, SpectralField};
use crate::grid::Grid;
use crate::multiplier::{apply_multiplier, Multiplier};
use crate::products::{pad_to_physical, quadratic_pad, truncate_to_base};
use crate::propagators::{apply_potential_phase, propagate_v, Sign};
use crate::Result;

/// State of the limit system at one instant.
#[derive(Debug, Clone)]
pub struct SpState {
    pub v_plus: SpectralField,
    pub v_minus: SpectralField,
    pub t: f64,
}

impl SpState {
    pub fn new(v_plus: SpectralField, v_minus: SpectralField, t: f64) -> Result<Self> {
        v_plus.grid().ensure_same(&v_minus.grid())?;
        if !t.is_finite() {
            return Err(CoreError::BadData(format!("non-finite time {t}")));
        }
        Ok(SpState { v_plus, v_minus, t })
    }

    pub fn grid(&self) -> Grid {
        self.v_plus.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.v_plus.is_finite() && self.v_minus.is_finite() && self.t.is_finite()
    }
}

/// Potential solve output. `charge_defect` is the spatial mean of the raw
/// source, which the periodic Poisson inversion must remove (neutralizing
/// background); it is logged, never asserted small.
#[derive(Debug, Clone)]
pub struct PotentialSolve {
    pub u: SpectralField,
    pub charge_defect: f64,
}

/// Solves `Δu = −|v⁺|² + |v⁻|²` with dealiased quadratic source, mean
/// subtraction, and zero mode set to zero. The output is real-valued.
pub fn solve_u(v_plus: &SpectralField, v_minus: &SpectralField) -> Result<PotentialSolve> {
    let grid = v_plus.grid();
    grid.ensure_same(&v_minus.grid())?;
    let m = quadratic_pad(grid.n());
    let zp = pad_to_physical(v_plus, m);
    let zm = pad_to_physical(v_minus, m);
    let mut source_fine = Array3::<Complex64>::zeros((m, m, m));
    for ((dst, p), q) in source_fine.iter_mut().zip(zp.iter()).zip(zm.iter()) {
        *dst = Complex64::new(q.norm_sqr() - p.norm_sqr(), 0.0);
    }
    let mut source = truncate_to_base(grid, Reality::RealValued, source_fine)?;
    let mean = source.remove_mean();
    let u = apply_multiplier(&source, &Multiplier::InverseLaplacian)?;
    Ok(PotentialSolve { u, charge_defect: mean.re })
}

/// One Strang step: half free flight, midpoint potential solve and pointwise
/// phase `v± ← e^{−i dt u}v±`, half free flight. dt may be negative; the
/// composition is symmetric, so a negative step exactly retraces a positive
/// one.
pub fn step_sp(state: &SpState, dt: f64) -> Result<SpState> {
    if !dt.is_finite() {
        return Err(CoreError::BadStep(format!("non-finite dt {dt}")));
    }
    let before = [state.v_plus.l2_norm(), state.v_minus.l2_norm()];
    let half = 0.5 * dt;
    let mut vp = propagate_v(&state.v_plus, half, Sign::Plus);
    let mut vm = propagate_v(&state.v_minus, half, Sign::Minus);
    let solve = solve_u(&vp, &vm)?;
    vp = apply_potential_phase(&vp, &solve.u, dt)?;
    vm = apply_potential_phase(&vm, &solve.u, dt)?;
    vp = propagate_v(&vp, half, Sign::Plus);
    vm = propagate_v(&vm, half, Sign::Minus);
    let next = SpState::new(vp, vm, state.t + dt)?;
    if !next.is_finite() {
        return Err(CoreError::Blowup { t: next.t, detail: "non-finite state".into() });
    }
    let after = [next.v_plus.l2_norm(), next.v_minus.l2_norm()];
    for side in 0..2 {
        if after[side] > 10.0 * before[side] + 1e-12 {
            return Err(CoreError::Blowup {
                t: next.t,
                detail: format!("L2 norm grew {:.3e} -> {:.3e} in one step", before[side], after[side]),
            });
        }
    }
    Ok(next)
}

/// Output of a sampled run of the limit system.
#[derive(Debug, Clone)]
pub struct SpRun {
    /// States at the sample instants, starting with the initial state.
    pub samples: Vec<SpState>,
    pub record: DiagnosticsRecord,
    /// Max over samples of ‖∇v⁺(t)‖₂ divided by its Gronwall envelope
    /// ‖∇v⁺(0)‖₂·exp(Σ±‖v±(0)‖₂∫₀ᵗ‖v±‖₆ ds); 0 for identically zero data.
    pub gronwall_max_ratio: f64,
    /// ‖v±‖_{L∞L²} over the run.
    pub z_linf_l2: [f64; 2],
    /// ‖v±‖_{L²L⁶} over the run (trapezoid in time).
    pub z_l2_l6: [f64; 2],
    /// Step size actually used (dt_target rounded down to divide the sample
    /// interval evenly).
    pub dt_used: f64,
}

/// Advances the state to `t_final`, sampling every `sample_interval`. The
/// requested `dt_target` is shrunk to the nearest divisor of the interval so
/// samples land exactly on the cadence.
/// Smallest step count whose uniform step does not exceed the target,
/// tolerating one part in 10^9 so exact divisors are not bumped by roundoff.
pub(crate) fn steps_per_interval(interval: f64, dt_target: f64) -> usize {
    let quotient = interval / dt_target;
    let rounded = quotient.round();
    let m = if (quotient - rounded).abs() <= 1e-9 * quotient.max(1.0) && rounded >= 1.0 {
        rounded
    } else {
        quotient.ceil()
    };
    m.max(1.0) as usize
}

pub fn run_sp(
    initial: &SpState,
    t_final: f64,
    dt_target: f64,
    sample_interval: f64,
    meta: RecordMeta,
) -> Result<SpRun> {
    let span = t_final - initial.t;
    if !(span >= 0.0) || !span.is_finite() {
        return Err(CoreError::BadStep(format!("invalid horizon: t0 = {}, t_final = {t_final}", initial.t)));
    }
    if !(dt_target > 0.0) || !(sample_interval > 0.0) {
        return Err(CoreError::BadStep("dt and sample interval must be positive".into()));
    }
    let n_intervals = (span / sample_interval).round() as usize;
    if (span - n_intervals as f64 * sample_interval).abs() > 1e-9 * sample_interval.max(1.0) {
        return Err(CoreError::BadStep(format!(
            "sample interval {sample_interval} does not divide the horizon {span}"
        )));
    }
    let steps_per_interval = steps_per_interval(sample_interval, dt_target);
    let dt = sample_interval / steps_per_interval as f64;

    let mut meta = meta;
    meta.dt = dt;
    let mut record = DiagnosticsRecord::new(meta);
    let mut samples = Vec::with_capacity(n_intervals + 1);
    let mut state = initial.clone();

    let mut l6_series: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut times = Vec::new();
    let grad0 = sobolev_norm(&initial.v_plus, 1.0, true)?;
    let l2_0 = [initial.v_plus.l2_norm(), initial.v_minus.l2_norm()];
    let mut gronwall_max_ratio: f64 = 0.0;
    let mut z_linf_l2 = [0.0_f64; 2];

    for interval in 0..=n_intervals {
        let t = initial.t + interval as f64 * sample_interval;
        let fields = [&state.v_plus, &state.v_minus];
        let l2 = [fields[0].l2_norm(), fields[1].l2_norm()];
        let grad = [
            sobolev_norm(fields[0], 1.0, true)?,
            sobolev_norm(fields[1], 1.0, true)?,
        ];
        let l6 = [lp_norm(fields[0], 6.0)?, lp_norm(fields[1], 6.0)?];
        let defect = solve_u(fields[0], fields[1])?.charge_defect;

        times.push(t);
        for side in 0..2 {
            l6_series[side].push(l6[side]);
            z_linf_l2[side] = z_linf_l2[side].max(l2[side]);
        }
        // Gronwall envelope for the first component, integral by running
        // trapezoid over the cadence samples.
        let mut exponent = 0.0;
        for side in 0..2 {
            exponent += l2_0[side] * trapezoid(&times, &l6_series[side]);
        }
        let envelope = grad0 * exponent.exp();
        let ratio = if envelope > 0.0 {
            grad[0] / envelope
        } else if grad[0] <= 1e-14 {
            0.0
        } else {
            f64::INFINITY
        };
        gronwall_max_ratio = gronwall_max_ratio.max(ratio);

        record.push_sample(
            t,
            &[
                ("l2_v_p", l2[0]),
                ("l2_v_m", l2[1]),
                ("h1dot_v_p", grad[0]),
                ("h1dot_v_m", grad[1]),
                ("l6_v_p", l6[0]),
                ("l6_v_m", l6[1]),
                ("charge_defect", defect),
            ],
        )?;
        samples.push(state.clone());

        if interval < n_intervals {
            for _ in 0..steps_per_interval {
                state = step_sp(&state, dt)?;
            }
            // Land exactly on the cadence instant to keep sample times clean.
            state.t = initial.t + (interval + 1) as f64 * sample_interval;
        }
    }

    let z_l2_l6 = [
        trapezoid(&times, &l6_series[0].iter().map(|v| v * v).collect::<Vec<_>>()).sqrt(),
        trapezoid(&times, &l6_series[1].iter().map(|v| v * v).collect::<Vec<_>>()).sqrt(),
    ];

    Ok(SpRun { samples, record, gronwall_max_ratio, z_linf_l2, z_l2_l6, dt_used: dt })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(16, 8.0).unwrap()
    }

    fn gaussian_pair(g: Grid) -> SpState {
        let mut vals_p = Array3::<Complex64>::zeros((g.n(), g.n(), g.n()));
        let mut vals_m = Array3::<Complex64>::zeros((g.n(), g.n(), g.n()));
        let half = g.length() / 2.0;
        for ((i, j, k), v) in vals_p.indexed_iter_mut() {
            let dx = g.coord(i) - half;
            let dy = g.coord(j) - half;
            let dz = g.coord(k) - half;
            let r2 = dx * dx + dy * dy + dz * dz;
            *v = Complex64::new(0.6 * (-r2 / 0.8).exp(), 0.0);
        }
        for ((i, j, k), v) in vals_m.indexed_iter_mut() {
            let dx = g.coord(i) - half + 0.5;
            let dy = g.coord(j) - half;
            let dz = g.coord(k) - half - 0.3;
            let r2 = dx * dx + dy * dy + dz * dz;
            *v = Complex64::new(0.4 * (-r2 / 0.9).exp(), 0.1 * (-r2 / 0.5).exp());
        }
        let vp = SpectralField::from_physical(g, &vals_p).unwrap();
        let vm = SpectralField::from_physical(g, &vals_m).unwrap();
        SpState::new(vp, vm, 0.0).unwrap()
    }

    /// Weak band-limited pair: the potential phase generates harmonics that
    /// stay inside the band up to roundoff, so the structural identities of
    /// the stepper (unitarity, reversibility) can be asserted at roundoff.
    fn band_limited_pair(g: Grid) -> SpState {
        let n = g.n();
        let mut cp = Array3::<Complex64>::zeros((n, n, n));
        let mut cm = Array3::<Complex64>::zeros((n, n, n));
        let scale = (g.points() as f64).sqrt();
        cp[[1, 0, 0]] = Complex64::new(0.08, 0.03) * scale;
        cp[[0, n - 1, 0]] = Complex64::new(-0.05, 0.02) * scale;
        cp[[0, 0, 1]] = Complex64::new(0.04, -0.06) * scale;
        cm[[0, 1, 0]] = Complex64::new(0.07, -0.01) * scale;
        cm[[1, 0, n - 1]] = Complex64::new(0.03, 0.05) * scale;
        let vp = SpectralField::from_coeffs(g, Reality::ComplexValued, cp).unwrap();
        let vm = SpectralField::from_coeffs(g, Reality::ComplexValued, cm).unwrap();
        SpState::new(vp, vm, 0.0).unwrap()
    }

    #[test]
    fn potential_vanishes_for_equal_components() {
        let g = grid();
        let st = gaussian_pair(g);
        let solve = solve_u(&st.v_plus, &st.v_plus).unwrap();
        assert!(solve.u.l2_norm() < 1e-13);
        assert!(solve.charge_defect.abs() < 1e-13);
    }

    #[test]
    fn potential_inverse_consistency() {
        let g = grid();
        let st = gaussian_pair(g);
        let solve = solve_u(&st.v_plus, &st.v_minus).unwrap();
        // Δu must reproduce the mean-removed source.
        let m = quadratic_pad(g.n());
        let zp = pad_to_physical(&st.v_plus, m);
        let zm = pad_to_physical(&st.v_minus, m);
        let mut src = Array3::<Complex64>::zeros((m, m, m));
        for ((dst, p), q) in src.iter_mut().zip(zp.iter()).zip(zm.iter()) {
            *dst = Complex64::new(q.norm_sqr() - p.norm_sqr(), 0.0);
        }
        let mut source = truncate_to_base(g, Reality::RealValued, src).unwrap();
        source.remove_mean();
        let mut lap_u = solve.u.clone();
        for (idx, v) in lap_u.coeffs_mut().indexed_iter_mut() {
            *v *= Complex64::new(-g.xi_sq([idx.0, idx.1, idx.2]), 0.0);
        }
        let diff = lap_u.sub(&source).unwrap().l2_norm();
        assert!(diff < 1e-12 * source.l2_norm().max(1.0), "diff {diff}");
    }

    #[test]
    fn l2_conservation_per_component() {
        let g = grid();
        let mut st = band_limited_pair(g);
        let n0 = [st.v_plus.l2_norm(), st.v_minus.l2_norm()];
        for _ in 0..50 {
            st = step_sp(&st, 0.02).unwrap();
        }
        let n1 = [st.v_plus.l2_norm(), st.v_minus.l2_norm()];
        for side in 0..2 {
            assert!(
                (n1[side] - n0[side]).abs() < 1e-12 * n0[side],
                "side {side}: {} vs {}",
                n1[side],
                n0[side]
            );
        }
    }

    #[test]
    fn free_flight_when_potential_cancels() {
        // v⁺ = v⁻ keeps u = 0, so the step is the exact free flow.
        let g = grid();
        let st0 = gaussian_pair(g);
        let st = SpState::new(st0.v_plus.clone(), st0.v_plus.clone(), 0.0).unwrap();
        let dt = 0.05;
        let stepped = step_sp(&st, dt).unwrap();
        let free_p = propagate_v(&st.v_plus, dt, Sign::Plus);
        let free_m = propagate_v(&st.v_plus, dt, Sign::Minus);
        assert!(stepped.v_plus.sub(&free_p).unwrap().l2_norm() < 1e-13);
        assert!(stepped.v_minus.sub(&free_m).unwrap().l2_norm() < 1e-13);
    }

    #[test]
    fn time_reversal_recovers_data() {
        let g = grid();
        let st0 = band_limited_pair(g);
        let dt = 0.02;
        let mut st = st0.clone();
        for _ in 0..25 {
            st = step_sp(&st, dt).unwrap();
        }
        for _ in 0..25 {
            st = step_sp(&st, -dt).unwrap();
        }
        let err_p = st.v_plus.sub(&st0.v_plus).unwrap().l2_norm();
        let err_m = st.v_minus.sub(&st0.v_minus).unwrap().l2_norm();
        assert!(err_p < 1e-10 && err_m < 1e-10, "reversal errors {err_p} {err_m}");
    }

    #[test]
    fn second_order_self_convergence() {
        let g = grid();
        let st0 = gaussian_pair(g);
        let t_final = 0.2;
        let advance = |dt: f64| {
            let mut st = st0.clone();
            let steps = (t_final / dt).round() as usize;
            for _ in 0..steps {
                st = step_sp(&st, dt).unwrap();
            }
            st
        };
        let reference = advance(0.00125);
        let coarse = advance(0.02);
        let fine = advance(0.01);
        let err_coarse = coarse.v_plus.sub(&reference.v_plus).unwrap().l2_norm();
        let err_fine = fine.v_plus.sub(&reference.v_plus).unwrap().l2_norm();
        let order = (err_coarse / err_fine).log2();
        assert!((order - 2.0).abs() < 0.5, "observed order {order}");
    }

    #[test]
    fn run_records_and_gronwall() {
        let g = grid();
        let st0 = gaussian_pair(g);
        let meta = RecordMeta {
            run_id: "sp-test".into(),
            c: None,
            n: g.n(),
            length: g.length(),
            dt: 0.02,
            data_hash: String::new(),
        };
        let run = run_sp(&st0, 0.2, 0.02, 0.05, meta).unwrap();
        assert_eq!(run.samples.len(), 5);
        assert_eq!(run.record.len(), 5);
        assert!(run.gronwall_max_ratio <= 1.0 + 1e-9, "ratio {}", run.gronwall_max_ratio);
        assert!(run.z_linf_l2[0] > 0.0 && run.z_l2_l6[0] > 0.0);
        // Zero data stays zero.
        let zero = SpState::new(
            SpectralField::zeros(g, Reality::ComplexValued),
            SpectralField::zeros(g, Reality::ComplexValued),
            0.0,
        )
        .unwrap();
        let meta2 = RecordMeta {
            run_id: "sp-zero".into(),
            c: None,
            n: g.n(),
            length: g.length(),
            dt: 0.02,
            data_hash: String::new(),
        };
        let zrun = run_sp(&zero, 0.1, 0.02, 0.05, meta2).unwrap();
        assert!(zrun.samples.iter().all(|s| s.v_plus.l2_norm() == 0.0));
        assert_eq!(zrun.gronwall_max_ratio, 0.0);
    }
}
