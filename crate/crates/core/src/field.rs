//! Spectral scalar and vector fields on the torus.
//!
//! A `SpectralField` stores unitary Fourier coefficients together with a
//! reality flag. Real-valued fields keep conjugate-symmetric coefficients;
//! the Nyquist rows k = −n/2 are forced to zero at construction and stay
//! zero under every operation in this crate, which is what makes the
//! conjugate symmetry exact rather than approximate.

use crate::error::CoreError;
use crate::fft;
use crate::grid::Grid;
use crate::Result;
use ndarray::Array3;
use num_complex::Complex64;

/// Whether a field represents a real-valued function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reality {
    RealValued,
    ComplexValued,
}

impl Reality {
    pub fn and(self, other: Reality) -> Reality {
        if self == Reality::RealValued && other == Reality::RealValued {
            Reality::RealValued
        } else {
            Reality::ComplexValued
        }
    }
}

/// Scalar field in unitary spectral representation.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    reality: Reality,
    coeffs: Array3<Complex64>,
}

impl SpectralField {
    /// Zero field.
    pub fn zeros(grid: Grid, reality: Reality) -> Self {
        let n = grid.n();
        SpectralField {
            grid,
            reality,
            coeffs: Array3::default((n, n, n)),
        }
    }

    /// Wraps raw coefficients; zeroes the Nyquist rows.
    pub fn from_coeffs(grid: Grid, reality: Reality, coeffs: Array3<Complex64>) -> Result<Self> {
        if coeffs.shape() != [grid.n(), grid.n(), grid.n()] {
            return Err(CoreError::InvalidGrid(format!(
                "coefficient array shape {:?} does not match n={}",
                coeffs.shape(),
                grid.n()
            )));
        }
        let mut f = SpectralField {
            grid,
            reality,
            coeffs,
        };
        f.zero_nyquist();
        Ok(f)
    }

    /// Forward transform of complex physical samples. The reality flag is
    /// inferred from the imaginary parts of the samples.
    pub fn from_physical(grid: Grid, samples: &Array3<Complex64>) -> Result<Self> {
        let max_abs = samples.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let max_im = samples.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let reality = if max_im <= 1e-12 * max_abs.max(1e-300) {
            Reality::RealValued
        } else {
            Reality::ComplexValued
        };
        let mut coeffs = samples.clone();
        fft::forward(&mut coeffs);
        Self::from_coeffs(grid, reality, coeffs)
    }

    /// Unit-amplitude plane wave e^{i x·ξ(k)} for an integer frequency triple.
    pub fn plane_wave(grid: Grid, k: [i64; 3]) -> Self {
        let n = grid.n();
        let samples = Array3::from_shape_fn((n, n, n), |(i, j, l)| {
            let phase = 2.0 * std::f64::consts::PI / n as f64
                * (k[0] as f64 * i as f64 + k[1] as f64 * j as f64 + k[2] as f64 * l as f64);
            Complex64::from_polar(1.0, phase)
        });
        Self::from_physical(grid, &samples).expect("shape is consistent")
    }

    /// Forward transform of real physical samples.
    pub fn from_physical_real(grid: Grid, samples: &Array3<f64>) -> Result<Self> {
        let coeffs = samples.mapv(|v| Complex64::new(v, 0.0));
        let mut out = Self::from_physical_complex_tagged(grid, coeffs, Reality::RealValued)?;
        out.zero_nyquist();
        Ok(out)
    }

    fn from_physical_complex_tagged(
        grid: Grid,
        mut samples: Array3<Complex64>,
        reality: Reality,
    ) -> Result<Self> {
        fft::forward(&mut samples);
        Self::from_coeffs(grid, reality, samples)
    }

    /// Evaluates physical samples by inverse transform.
    pub fn to_physical(&self) -> Array3<Complex64> {
        let mut data = self.coeffs.clone();
        fft::inverse(&mut data);
        data
    }

    /// Physical samples of a field flagged real-valued.
    pub fn to_physical_real(&self) -> Result<Array3<f64>> {
        if self.reality != Reality::RealValued {
            return Err(CoreError::NotRealValued(
                "to_physical_real on a complex-valued field".into(),
            ));
        }
        Ok(self.to_physical().mapv(|z| z.re))
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn reality(&self) -> Reality {
        self.reality
    }

    pub fn set_reality(&mut self, reality: Reality) {
        self.reality = reality;
    }

    pub fn coeffs(&self) -> &Array3<Complex64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.coeffs
    }

    /// Coefficient at an index triple.
    pub fn coeff(&self, idx: [usize; 3]) -> Complex64 {
        self.coeffs[idx]
    }

    pub fn set_coeff(&mut self, idx: [usize; 3], value: Complex64) {
        self.coeffs[idx] = value;
    }

    /// Zero coefficient of the constant mode divided by √(n³): the mean value
    /// of the field over the torus.
    pub fn mean(&self) -> Complex64 {
        self.coeffs[[0, 0, 0]] / (self.grid.points() as f64).sqrt()
    }

    /// Subtracts the mean; returns the removed mean value.
    pub fn remove_mean(&mut self) -> Complex64 {
        let m = self.mean();
        self.coeffs[[0, 0, 0]] = Complex64::default();
        m
    }

    /// Forces the unpaired Nyquist rows to zero.
    pub fn zero_nyquist(&mut self) {
        let n = self.grid.n();
        let half = n / 2;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if i == half || j == half || k == half {
                        self.coeffs[[i, j, k]] = Complex64::default();
                    }
                }
            }
        }
    }

    /// L² norm with the physical volume factor: (cell·Σ_k |f̂(k)|²)^{1/2}.
    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self.coeffs.iter().map(|z| z.norm_sqr()).sum();
        (self.grid.cell_volume() * sum).sqrt()
    }

    /// Largest deviation from conjugate symmetry, max_k |f̂(k) − conj(f̂(−k))|.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for idx in self.grid.indices() {
            let other = self.grid.conjugate_index(idx);
            let d = (self.coeffs[idx] - self.coeffs[other].conj()).norm();
            worst = worst.max(d);
        }
        worst
    }

    /// True when all coefficients are finite.
    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Pointwise complex conjugate of the represented function.
    pub fn conjugate(&self) -> SpectralField {
        let mut out = SpectralField::zeros(self.grid, self.reality);
        for idx in self.grid.indices() {
            let other = self.grid.conjugate_index(idx);
            out.coeffs[idx] = self.coeffs[other].conj();
        }
        out
    }

    /// self + other.
    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.grid.ensure_same(&other.grid)?;
        let mut out = self.clone();
        out.reality = self.reality.and(other.reality);
        out.coeffs.zip_mut_with(&other.coeffs, |a, b| *a += b);
        Ok(out)
    }

    /// self − other.
    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.grid.ensure_same(&other.grid)?;
        let mut out = self.clone();
        out.reality = self.reality.and(other.reality);
        out.coeffs.zip_mut_with(&other.coeffs, |a, b| *a -= b);
        Ok(out)
    }

    /// self += s·other.
    pub fn axpy(&mut self, s: Complex64, other: &SpectralField) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if !(s.im == 0.0 && self.reality == Reality::RealValued
            && other.reality == Reality::RealValued)
        {
            self.reality = self.reality.and(other.reality);
            if s.im != 0.0 {
                self.reality = Reality::ComplexValued;
            }
        }
        self.coeffs.zip_mut_with(&other.coeffs, |a, b| *a += s * b);
        Ok(())
    }

    /// Scales by a complex constant.
    pub fn scale(&self, s: Complex64) -> SpectralField {
        let mut out = self.clone();
        if s.im != 0.0 {
            out.reality = Reality::ComplexValued;
        }
        out.coeffs.mapv_inplace(|z| z * s);
        out
    }

    /// Partial derivative ∂_axis as the multiplier iξ_axis.
    pub fn derivative(&self, axis: usize) -> SpectralField {
        assert!(axis < 3);
        let mut out = self.clone();
        let grid = self.grid;
        for (idx, v) in out.coeffs.indexed_iter_mut() {
            let xi = grid.wavevector([idx.0, idx.1, idx.2])[axis];
            *v *= Complex64::new(0.0, xi);
        }
        out
    }
}

/// Three-component field, used for the vector potential and wave sources.
#[derive(Clone, Debug)]
pub struct VectorField {
    comps: [SpectralField; 3],
}

impl VectorField {
    pub fn new(comps: [SpectralField; 3]) -> Result<Self> {
        comps[0].grid().ensure_same(&comps[1].grid())?;
        comps[0].grid().ensure_same(&comps[2].grid())?;
        Ok(VectorField { comps })
    }

    pub fn zeros(grid: Grid, reality: Reality) -> Self {
        VectorField {
            comps: [
                SpectralField::zeros(grid, reality),
                SpectralField::zeros(grid, reality),
                SpectralField::zeros(grid, reality),
            ],
        }
    }

    pub fn grid(&self) -> Grid {
        self.comps[0].grid()
    }

    pub fn comp(&self, i: usize) -> &SpectralField {
        &self.comps[i]
    }

    pub fn comp_mut(&mut self, i: usize) -> &mut SpectralField {
        &mut self.comps[i]
    }

    pub fn comps(&self) -> &[SpectralField; 3] {
        &self.comps
    }

    /// Spectral divergence Σ iξ_i X̂^i.
    pub fn divergence(&self) -> SpectralField {
        let grid = self.grid();
        let mut out = SpectralField::zeros(grid, Reality::ComplexValued);
        for (idx, v) in out.coeffs_mut().indexed_iter_mut() {
            let xi = grid.wavevector([idx.0, idx.1, idx.2]);
            let mut acc = Complex64::default();
            for i in 0..3 {
                acc += Complex64::new(0.0, xi[i]) * self.comps[i].coeff([idx.0, idx.1, idx.2]);
            }
            *v = acc;
        }
        out
    }

    /// Max-coefficient magnitude of the divergence, a cheap solenoidality check.
    pub fn max_divergence(&self) -> f64 {
        self.divergence()
            .coeffs()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Spectral curl (∇×X).
    pub fn curl(&self) -> VectorField {
        let grid = self.grid();
        let reality = self.comps[0]
            .reality()
            .and(self.comps[1].reality())
            .and(self.comps[2].reality());
        let mut out = VectorField::zeros(grid, reality);
        for idx3 in grid.indices() {
            let xi = grid.wavevector(idx3);
            let x = [
                self.comps[0].coeff(idx3),
                self.comps[1].coeff(idx3),
                self.comps[2].coeff(idx3),
            ];
            let i = Complex64::new(0.0, 1.0);
            out.comps[0].set_coeff(idx3, i * (xi[1] * x[2] - xi[2] * x[1]));
            out.comps[1].set_coeff(idx3, i * (xi[2] * x[0] - xi[0] * x[2]));
            out.comps[2].set_coeff(idx3, i * (xi[0] * x[1] - xi[1] * x[0]));
        }
        out
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField> {
        Ok(VectorField {
            comps: [
                self.comps[0].add(&other.comps[0])?,
                self.comps[1].add(&other.comps[1])?,
                self.comps[2].add(&other.comps[2])?,
            ],
        })
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        Ok(VectorField {
            comps: [
                self.comps[0].sub(&other.comps[0])?,
                self.comps[1].sub(&other.comps[1])?,
                self.comps[2].sub(&other.comps[2])?,
            ],
        })
    }

    pub fn scale(&self, s: Complex64) -> VectorField {
        VectorField {
            comps: [
                self.comps[0].scale(s),
                self.comps[1].scale(s),
                self.comps[2].scale(s),
            ],
        }
    }

    /// Σ_i ‖X^i‖₂², square-rooted.
    pub fn l2_norm(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| c.l2_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(8, 2.0 * std::f64::consts::PI).unwrap()
    }

    #[test]
    fn real_samples_give_conjugate_symmetric_coeffs() {
        let g = grid();
        let samples = Array3::from_shape_fn((8, 8, 8), |(i, j, k)| {
            ((i as f64) * 0.3).sin() + ((j as f64 + 2.0 * k as f64) * 0.21).cos()
        });
        let f = SpectralField::from_physical_real(g, &samples).unwrap();
        assert_eq!(f.reality(), Reality::RealValued);
        assert!(f.conjugate_symmetry_defect() < 1e-12);
    }

    #[test]
    fn roundtrip_physical_spectral() {
        let g = grid();
        let samples = Array3::from_shape_fn((8, 8, 8), |(i, j, k)| {
            Complex64::new((i as f64).sin(), (j as f64 - k as f64).cos())
        });
        let f = SpectralField::from_physical(g, &samples).unwrap();
        let back = f.to_physical();
        // Nyquist removal perturbs only those rows; the test input has content
        // there, so compare after re-projecting the input.
        let f2 = SpectralField::from_physical(g, &back).unwrap();
        let diff: f64 = f
            .coeffs()
            .iter()
            .zip(f2.coeffs().iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn plancherel_l2_norm_of_plane_wave() {
        // ‖e^{ix·ξ}‖_{L²(T³)} = L^{3/2}.
        let g = grid();
        let samples = Array3::from_shape_fn((8, 8, 8), |(i, _, _)| {
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * i as f64 / 8.0)
        });
        let f = SpectralField::from_physical(g, &samples).unwrap();
        let expect = g.volume().sqrt();
        assert!((f.l2_norm() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn derivative_of_plane_wave() {
        let g = grid();
        let samples = Array3::from_shape_fn((8, 8, 8), |(i, _, _)| {
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * i as f64 / 8.0 * 2.0)
        });
        let f = SpectralField::from_physical(g, &samples).unwrap();
        let d = f.derivative(0);
        // ∂x e^{2ix} = 2i e^{2ix}, so the single coefficient is scaled by 2i.
        let ratio = d.coeff([2, 0, 0]) / f.coeff([2, 0, 0]);
        assert!((ratio - Complex64::new(0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn divergence_and_curl_of_solenoidal_mode() {
        let g = grid();
        // X = (sin(y), 0, 0) is divergence-free; curl has only a z-component.
        let sx = Array3::from_shape_fn((8, 8, 8), |(_, j, _)| {
            (2.0 * std::f64::consts::PI * j as f64 / 8.0).sin()
        });
        let x = VectorField::new([
            SpectralField::from_physical_real(g, &sx).unwrap(),
            SpectralField::zeros(g, Reality::RealValued),
            SpectralField::zeros(g, Reality::RealValued),
        ])
        .unwrap();
        assert!(x.max_divergence() < 1e-13);
        let c = x.curl();
        assert!(c.comp(0).l2_norm() < 1e-13);
        assert!(c.comp(1).l2_norm() < 1e-13);
        assert!(c.comp(2).l2_norm() > 0.1);
    }
}
