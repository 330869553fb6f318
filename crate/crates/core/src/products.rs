//! Dealiased pointwise products via zero padding.
//!
//! Quadratic products are evaluated on a grid padded by 3/2, cubic products
//! by 2. Frequencies created beyond the padded band alias onto modes outside
//! the retained base band, so truncation back to the base grid is exact for
//! band-limited inputs.
//!
//! Padded arrays carry the scale (m/n)^{3/2} so that their inverse transform
//! reproduces the physical values of the field on the fine lattice; the
//! final truncation carries (n/m)^{3/2} back.

use crate::error::CoreError;
use crate::fft;
use crate::field::{Reality, SpectralField};
use crate::grid::Grid;
use crate::Result;
use ndarray::Array3;
use num_complex::Complex64;

/// Padded size for quadratic products.
pub fn quadratic_pad(n: usize) -> usize {
    3 * n / 2
}

/// Padded size for cubic products.
pub fn cubic_pad(n: usize) -> usize {
    2 * n
}

fn embed(f: &SpectralField, m: usize) -> Array3<Complex64> {
    let n = f.grid().n();
    debug_assert!(m >= n);
    let scale = (m as f64 / n as f64).powf(1.5);
    let mut out = Array3::default((m, m, m));
    let map = |i: usize| -> Option<usize> {
        // Nyquist row is zero by construction; skip it.
        if i == n / 2 {
            return None;
        }
        if i < n / 2 {
            Some(i)
        } else {
            Some(m - (n - i))
        }
    };
    for (idx, v) in f.coeffs().indexed_iter() {
        if v.norm_sqr() == 0.0 {
            continue;
        }
        if let (Some(a), Some(b), Some(c)) = (map(idx.0), map(idx.1), map(idx.2)) {
            out[[a, b, c]] = *v * scale;
        }
    }
    out
}

/// Physical samples of `f` on the m-point-per-axis lattice of the same torus.
pub fn pad_to_physical(f: &SpectralField, m: usize) -> Array3<Complex64> {
    let mut data = embed(f, m);
    fft::inverse(&mut data);
    data
}

/// Forward transform of fine-lattice physical data, truncated to the base
/// band of `grid`. Nyquist rows of the result are zero.
pub fn truncate_to_base(
    grid: Grid,
    reality: Reality,
    mut fine: Array3<Complex64>,
) -> Result<SpectralField> {
    let n = grid.n();
    let m = fine.shape()[0];
    debug_assert!(m >= n);
    fft::forward(&mut fine);
    let scale = (n as f64 / m as f64).powf(1.5);
    let mut out = SpectralField::zeros(grid, reality);
    let map = |i: usize| -> Option<usize> {
        if i == n / 2 {
            return None;
        }
        if i < n / 2 {
            Some(i)
        } else {
            Some(m - (n - i))
        }
    };
    for i in 0..n {
        let Some(a) = map(i) else { continue };
        for j in 0..n {
            let Some(b) = map(j) else { continue };
            for k in 0..n {
                let Some(c) = map(k) else { continue };
                out.set_coeff([i, j, k], fine[[a, b, c]] * scale);
            }
        }
    }
    Ok(out)
}

/// Dealiased product of two fields (3/2 padding).
pub fn dealiased_product(a: &SpectralField, b: &SpectralField) -> Result<SpectralField> {
    a.grid().ensure_same(&b.grid())?;
    let m = quadratic_pad(a.grid().n());
    let pa = pad_to_physical(a, m);
    let pb = pad_to_physical(b, m);
    let mut prod = pa;
    prod.zip_mut_with(&pb, |x, y| *x *= *y);
    truncate_to_base(a.grid(), a.reality().and(b.reality()), prod)
}

/// Dealiased product of three fields (factor 2 padding).
pub fn dealiased_triple_product(
    a: &SpectralField,
    b: &SpectralField,
    c: &SpectralField,
) -> Result<SpectralField> {
    a.grid().ensure_same(&b.grid())?;
    a.grid().ensure_same(&c.grid())?;
    let m = cubic_pad(a.grid().n());
    let pa = pad_to_physical(a, m);
    let pb = pad_to_physical(b, m);
    let pc = pad_to_physical(c, m);
    let mut prod = pa;
    prod.zip_mut_with(&pb, |x, y| *x *= *y);
    prod.zip_mut_with(&pc, |x, y| *x *= *y);
    truncate_to_base(
        a.grid(),
        a.reality().and(b.reality()).and(c.reality()),
        prod,
    )
}

/// Rejects inputs whose grids disagree; convenience shared by callers that
/// accumulate several padded operands before one truncation.
pub fn ensure_same_grid(fields: &[&SpectralField]) -> Result<Grid> {
    let first = fields
        .first()
        .ok_or_else(|| CoreError::InvalidGrid("empty field list".into()))?
        .grid();
    for f in fields {
        first.ensure_same(&f.grid())?;
    }
    Ok(first)
}
