//! Hypervector types and the shared similarity function.
//!
//! Complex vectors are compared through their flattened real form
//! `Re(h) ++ Im(h)`, so one cosine definition serves real vectors, phase
//! vectors, and full scene representations alike.

use crate::error::{Error, Result};
use crate::mat::dot;

/// Tolerance for the unit-modulus invariant of [`PhaseVector`].
pub const PHASE_MODULUS_TOL: f64 = 1e-9;

/// A real hypervector of dimensionality `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypervector {
    values: Vec<f64>,
}

impl Hypervector {
    /// Wrap a value vector; every element must be finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("hypervector element is not finite"));
        }
        Ok(Hypervector { values })
    }

    pub fn zeros(d: usize) -> Self {
        Hypervector {
            values: vec![0.0; d],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn from_values_unchecked(values: Vec<f64>) -> Self {
        Hypervector { values }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scaled(&self, s: f64) -> Self {
        Hypervector {
            values: self.values.iter().map(|v| s * v).collect(),
        }
    }

    /// L2-normalized copy; errors on the zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let n = dot(&self.values, &self.values).sqrt();
        if n == 0.0 {
            return Err(Error::UndefinedSimilarity("hypervector"));
        }
        Ok(self.scaled(1.0 / n))
    }

    pub fn cosine(&self, other: &Hypervector) -> Result<f64> {
        cosine_similarity(&self.values, &other.values)
    }
}

/// A general complex hypervector, stored as separate real and imaginary parts.
///
/// Bundling phase vectors lands here: sums of unit-modulus elements are not
/// unit-modulus themselves.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexHv {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexHv {
    pub fn new(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::invalid(format!(
                "real/imaginary length mismatch: {} vs {}",
                re.len(),
                im.len()
            )));
        }
        if re.iter().chain(im.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("complex hypervector element is not finite"));
        }
        Ok(ComplexHv { re, im })
    }

    pub fn zeros(d: usize) -> Self {
        ComplexHv {
            re: vec![0.0; d],
            im: vec![0.0; d],
        }
    }

    /// Lift a real hypervector into the complex plane (zero imaginary part).
    pub fn from_real(hv: &Hypervector) -> Self {
        ComplexHv {
            re: hv.values().to_vec(),
            im: vec![0.0; hv.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.re, &mut self.im)
    }

    /// Flattened real form `Re ++ Im` of length `2D`.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.re.len());
        out.extend_from_slice(&self.re);
        out.extend_from_slice(&self.im);
        out
    }

    /// Cosine on the flattened forms. Equals the normalized real part of the
    /// Hermitian inner product of the two complex vectors.
    pub fn cosine(&self, other: &ComplexHv) -> Result<f64> {
        cosine_similarity(&self.flat(), &other.flat())
    }
}

/// A complex hypervector with every element on the unit circle.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseVector {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl PhaseVector {
    /// Build from phase angles; elements are exactly `e^{i theta_j}`.
    pub fn from_angles(angles: &[f64]) -> Self {
        let mut re = Vec::with_capacity(angles.len());
        let mut im = Vec::with_capacity(angles.len());
        for &t in angles {
            re.push(t.cos());
            im.push(t.sin());
        }
        PhaseVector { re, im }
    }

    /// Build from raw parts, validating the unit-modulus invariant.
    pub fn from_parts(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::invalid(format!(
                "real/imaginary length mismatch: {} vs {}",
                re.len(),
                im.len()
            )));
        }
        for (j, (&r, &i)) in re.iter().zip(&im).enumerate() {
            let modulus = (r * r + i * i).sqrt();
            if (modulus - 1.0).abs() > PHASE_MODULUS_TOL {
                return Err(Error::invalid(format!(
                    "phase vector element {j} has modulus {modulus}, expected 1"
                )));
            }
        }
        Ok(PhaseVector { re, im })
    }

    /// All-ones phase vector (zero angles); the binding identity.
    pub fn ones(d: usize) -> Self {
        PhaseVector {
            re: vec![1.0; d],
            im: vec![0.0; d],
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn to_complex(&self) -> ComplexHv {
        ComplexHv {
            re: self.re.clone(),
            im: self.im.clone(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.re.len());
        out.extend_from_slice(&self.re);
        out.extend_from_slice(&self.im);
        out
    }

    pub fn cosine(&self, other: &PhaseVector) -> Result<f64> {
        cosine_similarity(&self.flat(), &other.flat())
    }
}

/// Cosine similarity of two equal-length real vectors, in `[-1, 1]`.
///
/// Complex vectors are compared by passing their flattened `Re ++ Im` form.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "cosine length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let na = dot(a, a).sqrt();
    if na == 0.0 {
        return Err(Error::UndefinedSimilarity("left"));
    }
    let nb = dot(b, b).sqrt();
    if nb == 0.0 {
        return Err(Error::UndefinedSimilarity("right"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_self_is_one() {
        let a = [0.3, -1.2, 4.0];
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_antipodal_is_minus_one() {
        let a = [0.5, 2.0, -1.0];
        let b: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((cosine_similarity(&a, &b).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_orthogonal_is_zero() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_zero_vector_rejected() {
        let err = cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::UndefinedSimilarity(_)));
    }

    #[test]
    fn non_finite_values_rejected() {
        assert!(Hypervector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ComplexHv::new(vec![1.0], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn phase_vector_validates_modulus() {
        assert!(PhaseVector::from_parts(vec![1.0, 0.6], vec![0.0, 0.8]).is_ok());
        assert!(PhaseVector::from_parts(vec![1.0, 0.5], vec![0.0, 0.5]).is_err());
    }

    #[test]
    fn flat_layout_is_re_then_im() {
        let c = ComplexHv::new(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(c.flat(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn complex_cosine_matches_hermitian_real_part() {
        let a = ComplexHv::new(vec![1.0, 0.5], vec![-0.25, 2.0]).unwrap();
        let b = ComplexHv::new(vec![0.1, -1.0], vec![0.7, 0.3]).unwrap();
        // Re(<a, b>) with <a, b> = sum a_j * conj(b_j).
        let mut herm = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for j in 0..2 {
            herm += a.re()[j] * b.re()[j] + a.im()[j] * b.im()[j];
            na += a.re()[j] * a.re()[j] + a.im()[j] * a.im()[j];
            nb += b.re()[j] * b.re()[j] + b.im()[j] * b.im()[j];
        }
        let expect = herm / (na.sqrt() * nb.sqrt());
        assert!((a.cosine(&b).unwrap() - expect).abs() < 1e-12);
    }
}
