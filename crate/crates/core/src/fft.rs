//! Unitary 3-D FFT on cubic complex arrays.
//!
//! Both directions carry the factor n^{-3/2}, so the transform pair is
//! unitary and Plancherel holds literally: Σ_x |f(x)|² = Σ_k |f̂(k)|².
//! Plans are cached per size and shared; transforms run on the calling
//! thread only.

use ndarray::{Array3, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Clone)]
struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn plans_for(n: usize) -> Plans {
    static CACHE: OnceLock<Mutex<HashMap<usize, Plans>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Plans {
                fwd: planner.plan_fft_forward(n),
                inv: planner.plan_fft_inverse(n),
            }
        })
        .clone()
}

fn transform_axes(data: &mut Array3<Complex64>, plan: &Arc<dyn Fft<f64>>) {
    let n = data.shape()[0];
    debug_assert_eq!(data.shape(), &[n, n, n]);
    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];

    // Axis 2 lanes are contiguous in the standard layout.
    if let Some(slice) = data.as_slice_mut() {
        for chunk in slice.chunks_exact_mut(n) {
            plan.process_with_scratch(chunk, &mut scratch);
        }
    } else {
        let mut line = vec![Complex64::default(); n];
        for mut lane in data.lanes_mut(Axis(2)) {
            for (dst, src) in line.iter_mut().zip(lane.iter()) {
                *dst = *src;
            }
            plan.process_with_scratch(&mut line, &mut scratch);
            for (dst, src) in lane.iter_mut().zip(line.iter()) {
                *dst = *src;
            }
        }
    }

    let mut line = vec![Complex64::default(); n];
    for axis in [0usize, 1] {
        for mut lane in data.lanes_mut(Axis(axis)) {
            for (dst, src) in line.iter_mut().zip(lane.iter()) {
                *dst = *src;
            }
            plan.process_with_scratch(&mut line, &mut scratch);
            for (dst, src) in lane.iter_mut().zip(line.iter()) {
                *dst = *src;
            }
        }
    }
}

fn rescale(data: &mut Array3<Complex64>, factor: f64) {
    for v in data.iter_mut() {
        *v *= factor;
    }
}

/// In-place forward transform, physical samples to unitary coefficients.
pub fn forward(data: &mut Array3<Complex64>) {
    let n = data.shape()[0];
    let plans = plans_for(n);
    transform_axes(data, &plans.fwd);
    rescale(data, 1.0 / (n as f64).powf(1.5));
}

/// In-place inverse transform, unitary coefficients to physical samples.
pub fn inverse(data: &mut Array3<Complex64>) {
    let n = data.shape()[0];
    let plans = plans_for(n);
    transform_axes(data, &plans.inv);
    rescale(data, 1.0 / (n as f64).powf(1.5));
}
