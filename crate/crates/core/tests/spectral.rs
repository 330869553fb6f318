//! Transform, multiplier and dealiased-product contracts checked against
//! independent oracles: direct coefficient convolutions on a small grid and
//! whole-lattice symbol bounds.

use ndarray::Array3;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nrlimit_core::diagnostics::sobolev_norm;
use nrlimit_core::multiplier::{
    apply_multiplier, leray_project, low_high_split, riesz, symbol_hc, symbol_m, Multiplier,
};
use nrlimit_core::products::{dealiased_product, dealiased_triple_product};
use nrlimit_core::{Grid, Reality, SpectralField, VectorField};

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Random complex field with every non-Nyquist mode populated.
fn random_field(grid: Grid, rng: &mut ChaCha8Rng) -> SpectralField {
    let n = grid.n();
    let mut coeffs = Array3::<Complex64>::default((n, n, n));
    for idx in grid.indices() {
        if !grid.is_nyquist(idx) {
            coeffs[idx] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    SpectralField::from_coeffs(grid, Reality::ComplexValued, coeffs).unwrap()
}

fn random_vector(grid: Grid, rng: &mut ChaCha8Rng) -> VectorField {
    VectorField::new([
        random_field(grid, rng),
        random_field(grid, rng),
        random_field(grid, rng),
    ])
    .unwrap()
}

/// Signed lattice coordinate of an array index.
fn signed(grid: Grid, i: usize) -> i64 {
    grid.signed_index(i)
}

/// Array index of a signed coordinate, or None when outside the band.
fn unsigned(grid: Grid, s: i64) -> Option<usize> {
    let half = grid.n() as i64 / 2;
    // The Nyquist row -n/2 is excluded: it is zero in every field.
    if s <= -half || s >= half {
        return None;
    }
    Some(if s >= 0 { s as usize } else { (s + grid.n() as i64) as usize })
}

/// O(n^6) convolution of coefficient arrays: the spectral image of the
/// pointwise product under the unitary transform, true integer frequency
/// addition with no wrap-around.
fn brute_force_product(a: &SpectralField, b: &SpectralField) -> SpectralField {
    let grid = a.grid();
    let n = grid.n();
    let scale = 1.0 / (grid.points() as f64).sqrt();
    let mut coeffs = Array3::<Complex64>::default((n, n, n));
    for out_idx in grid.indices() {
        if grid.is_nyquist(out_idx) {
            continue;
        }
        let k = [
            signed(grid, out_idx[0]),
            signed(grid, out_idx[1]),
            signed(grid, out_idx[2]),
        ];
        let mut acc = Complex64::default();
        for a_idx in grid.indices() {
            if grid.is_nyquist(a_idx) {
                continue;
            }
            let ka = [
                signed(grid, a_idx[0]),
                signed(grid, a_idx[1]),
                signed(grid, a_idx[2]),
            ];
            let (Some(i), Some(j), Some(l)) = (
                unsigned(grid, k[0] - ka[0]),
                unsigned(grid, k[1] - ka[1]),
                unsigned(grid, k[2] - ka[2]),
            ) else {
                continue;
            };
            acc += a.coeff(a_idx) * b.coeff([i, j, l]);
        }
        coeffs[out_idx] = acc * scale;
    }
    SpectralField::from_coeffs(grid, Reality::ComplexValued, coeffs).unwrap()
}

/// O(n^9) triple convolution oracle for the cubic product.
fn brute_force_triple(a: &SpectralField, b: &SpectralField, c: &SpectralField) -> SpectralField {
    let grid = a.grid();
    let n = grid.n();
    let scale = 1.0 / grid.points() as f64;
    let band: Vec<[usize; 3]> = grid.indices().filter(|&i| !grid.is_nyquist(i)).collect();
    let mut coeffs = Array3::<Complex64>::default((n, n, n));
    for &out_idx in &band {
        let k = [
            signed(grid, out_idx[0]),
            signed(grid, out_idx[1]),
            signed(grid, out_idx[2]),
        ];
        let mut acc = Complex64::default();
        for &a_idx in &band {
            let va = a.coeff(a_idx);
            if va == Complex64::default() {
                continue;
            }
            let ka = [
                signed(grid, a_idx[0]),
                signed(grid, a_idx[1]),
                signed(grid, a_idx[2]),
            ];
            for &b_idx in &band {
                let kb = [
                    signed(grid, b_idx[0]),
                    signed(grid, b_idx[1]),
                    signed(grid, b_idx[2]),
                ];
                let (Some(i), Some(j), Some(l)) = (
                    unsigned(grid, k[0] - ka[0] - kb[0]),
                    unsigned(grid, k[1] - ka[1] - kb[1]),
                    unsigned(grid, k[2] - ka[2] - kb[2]),
                ) else {
                    continue;
                };
                acc += va * b.coeff(b_idx) * c.coeff([i, j, l]);
            }
        }
        coeffs[out_idx] = acc * scale;
    }
    SpectralField::from_coeffs(grid, Reality::ComplexValued, coeffs).unwrap()
}

#[test]
fn quadratic_product_matches_brute_force_convolution() {
    let grid = Grid::new(8, 5.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a = random_field(grid, &mut rng);
    let b = random_field(grid, &mut rng);
    let fast = dealiased_product(&a, &b).unwrap();
    let slow = brute_force_product(&a, &b);
    let diff = fast.sub(&slow).unwrap().l2_norm();
    assert!(diff <= 1e-12 * slow.l2_norm(), "diff = {diff:e}");
}

#[test]
fn cubic_product_matches_brute_force_convolution() {
    let grid = Grid::new(8, 5.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let a = random_field(grid, &mut rng);
    let b = random_field(grid, &mut rng);
    let c = random_field(grid, &mut rng);
    let fast = dealiased_triple_product(&a, &b, &c).unwrap();
    let slow = brute_force_triple(&a, &b, &c);
    let diff = fast.sub(&slow).unwrap().l2_norm();
    assert!(diff <= 1e-12 * slow.l2_norm(), "diff = {diff:e}");

    // A quadratic intermediate would alias the cubic: the fine lattice of the
    // 3/2 rule cannot hold a threefold frequency sum. Witnessed by comparing
    // against product-of-product.
    let two_step = dealiased_product(&dealiased_product(&a, &b).unwrap(), &c).unwrap();
    let aliasing = two_step.sub(&slow).unwrap().l2_norm();
    assert!(aliasing > 1e-6 * slow.l2_norm(), "two-step unexpectedly exact");
}

#[test]
fn hc_symbol_bounds_hold_on_the_whole_lattice() {
    let grid = Grid::new(32, 4.0).unwrap();
    for &c in &[1.0, 10.0, 100.0] {
        for idx in grid.indices() {
            let xi_sq = grid.xi_sq(idx);
            let xi = xi_sq.sqrt();
            let h = symbol_hc(xi_sq, c);
            assert!(h <= (c * xi).min(xi_sq / 2.0) * (1.0 + 1e-12) + 1e-300);
            // Stable-form identity against the subtraction form, safe here
            // because xi^2 <= ~2.5e3 keeps the cancellation mild.
            if c <= 10.0 {
                let naive = symbol_m(xi_sq, c) - c * c;
                assert!((h - naive).abs() <= 1e-9 * h.max(1.0));
            }
        }
    }
}

#[test]
fn mass_inverse_gains_one_derivative_at_rate_one_over_c() {
    let grid = Grid::new(32, 4.0).unwrap();
    for &c in &[1.0, 10.0, 100.0] {
        let mut sup: f64 = 0.0;
        for idx in grid.indices() {
            let xi_sq = grid.xi_sq(idx);
            let ratio = (1.0 + xi_sq).sqrt() / symbol_m(xi_sq, c);
            sup = sup.max(ratio);
        }
        // <xi>/m = (1/c) sqrt((1+xi^2)/(c^2+xi^2)) <= 1/c once c >= 1.
        assert!(sup <= (1.0 + 1e-12) / c, "c = {c}: sup = {sup}");
        // The ratio approaches 1/c only where the lattice reaches past c.
        if c <= 10.0 {
            assert!(sup > 0.9 / c, "c = {c}: sup = {sup} implausibly small");
        }
    }
}

#[test]
fn high_part_trades_a_derivative_for_one_over_c() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = Grid::new(16, 4.0).unwrap();
    let f = random_field(grid, &mut rng);
    for &c in &[1.0, 4.0, 16.0] {
        let (_, high) = low_high_split(&f, c).unwrap();
        let l2 = high.l2_norm();
        if l2 == 0.0 {
            continue;
        }
        let h1 = sobolev_norm(&high, 1.0, false).unwrap();
        // Support of the high part lies in |xi| >= c, so H1 >= sqrt(1+c^2) L2.
        assert!(c * l2 <= h1 * (1.0 + 1e-12), "c = {c}");
    }
}

#[test]
fn low_high_split_single_mode_examples() {
    let grid = Grid::new(16, 2.0 * std::f64::consts::PI).unwrap();
    // |xi| = 2 for the mode [0, 2, 0] on the 2pi torus.
    let f = SpectralField::plane_wave(grid, [0, 2, 0]);
    let (low, high) = low_high_split(&f, 4.0).unwrap();
    assert!(low.sub(&f).unwrap().l2_norm() <= 1e-13 * f.l2_norm());
    assert!(high.l2_norm() <= 1e-13 * f.l2_norm());
    let (low, high) = low_high_split(&f, 0.5).unwrap();
    assert!(low.l2_norm() <= 1e-13 * f.l2_norm());
    assert!(high.sub(&f).unwrap().l2_norm() <= 1e-13 * f.l2_norm());
}

#[test]
fn riesz_composition_and_conventions() {
    let grid = Grid::new(16, 7.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut f = random_field(grid, &mut rng);
    f.remove_mean();
    let mut sum = SpectralField::zeros(grid, Reality::ComplexValued);
    for axis in 0..3 {
        let rr = riesz(&riesz(&f, axis), axis);
        sum.axpy(re(1.0), &rr).unwrap();
    }
    // Sum of squared Riesz transforms is minus the identity on zero-mean input.
    let diff = sum.add(&f).unwrap().l2_norm();
    assert!(diff <= 1e-13 * f.l2_norm(), "diff = {diff:e}");

    let constant = SpectralField::plane_wave(grid, [0, 0, 0]);
    assert!(riesz(&constant, 0).l2_norm() == 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transform_round_trip_is_identity(seed in 0u64..1_000_000) {
        let grid = Grid::new(8, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.n();
        let samples = Array3::from_shape_fn((n, n, n), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        // from_physical zeroes the Nyquist rows, so round-trip stability is
        // checked on the already banded samples of a first pass.
        let banded = SpectralField::from_physical(grid, &samples).unwrap().to_physical();
        let twice = SpectralField::from_physical(grid, &banded).unwrap().to_physical();
        let scale = banded.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let max = banded
            .iter()
            .zip(twice.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
        prop_assert!(max <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn multiplier_composition_matches_symbol_product(seed in 0u64..1_000_000, c in 1.0f64..20.0) {
        let grid = Grid::new(8, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(grid, &mut rng);
        let m1 = Multiplier::Mass { c };
        let m2 = Multiplier::Bessel { s: 0.5 };
        let seq = apply_multiplier(&apply_multiplier(&f, &m1).unwrap(), &m2).unwrap();
        let mut direct = f.clone();
        for (idx, v) in direct.coeffs_mut().indexed_iter_mut() {
            let xi_sq = grid.xi_sq([idx.0, idx.1, idx.2]);
            *v *= m1.symbol(xi_sq) * m2.symbol(xi_sq);
        }
        let diff = seq.sub(&direct).unwrap().l2_norm();
        prop_assert!(diff <= 1e-13 * direct.l2_norm().max(1e-300));
    }

    #[test]
    fn mass_pair_inverts(seed in 0u64..1_000_000, c in 0.5f64..50.0) {
        let grid = Grid::new(8, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(grid, &mut rng);
        let roundtrip = apply_multiplier(
            &apply_multiplier(&f, &Multiplier::Mass { c }).unwrap(),
            &Multiplier::MassInverse { c },
        )
        .unwrap();
        prop_assert!(roundtrip.sub(&f).unwrap().l2_norm() <= 1e-12 * f.l2_norm());
    }

    #[test]
    fn leray_projection_is_idempotent_and_solenoidal(seed in 0u64..1_000_000) {
        let grid = Grid::new(8, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vector(grid, &mut rng);
        let p = leray_project(&x);
        // Per-mode divergence of the projected field vanishes to roundoff
        // relative to the mode magnitude.
        for idx in grid.indices() {
            let xi = grid.wavevector(idx);
            let mut div = Complex64::default();
            let mut mag = 0.0f64;
            for i in 0..3 {
                div += Complex64::new(xi[i], 0.0) * p.comp(i).coeff(idx);
                mag = mag.max(p.comp(i).coeff(idx).norm());
            }
            let xi_norm = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
            prop_assert!(div.norm() <= 1e-12 * (xi_norm * mag).max(1e-300));
        }
        let pp = leray_project(&p);
        prop_assert!(pp.sub(&p).unwrap().l2_norm() <= 1e-13 * p.l2_norm().max(1e-300));
        // Gradients are annihilated.
        let mut g = random_field(grid, &mut rng);
        g.remove_mean();
        let grad = VectorField::new([g.derivative(0), g.derivative(1), g.derivative(2)]).unwrap();
        prop_assert!(leray_project(&grad).l2_norm() <= 1e-12 * grad.l2_norm().max(1e-300));
    }

    #[test]
    fn low_high_partition_is_exact(seed in 0u64..1_000_000, c in 0.2f64..30.0) {
        let grid = Grid::new(8, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(grid, &mut rng);
        let (low, high) = low_high_split(&f, c).unwrap();
        let sum = low.add(&high).unwrap();
        // The high part is defined as f minus the low part, so the partition
        // reassembles bit for bit.
        for (a, b) in sum.coeffs().iter().zip(f.coeffs().iter()) {
            prop_assert!(a == b);
        }
    }
}
