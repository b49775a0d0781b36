//! The three core HDC operations plus random hypervector sampling.
//!
//! Bundling is elementwise addition, binding elementwise (complex)
//! multiplication, permutation a cyclic rotation. Binding by a phase vector
//! preserves cosine similarity exactly because every factor has modulus 1.

use crate::error::{Error, Result};
use crate::rng::{gaussian_f64, rng_from_seed};

use super::vector::{ComplexHv, Hypervector, PhaseVector};

/// Sample a hypervector with i.i.d. `N(0, sigma^2)` elements.
///
/// ChaCha8 + Box-Muller; identical `(seed, d, sigma)` reproduce the vector
/// bit-for-bit.
pub fn random_gaussian_hv(seed: u64, d: usize, sigma: f64) -> Result<Hypervector> {
    if d == 0 {
        return Err(Error::invalid("dimensionality d must be >= 1"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    let mut rng = rng_from_seed(seed);
    let values = (0..d).map(|_| sigma * gaussian_f64(&mut rng)).collect();
    Ok(Hypervector::from_values_unchecked(values))
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Bundle two real hypervectors: elementwise sum.
pub fn bundle(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    check_len(a.len(), b.len())?;
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x + y)
        .collect();
    Ok(Hypervector::from_values_unchecked(values))
}

/// Bundle two complex hypervectors. Bundling phase vectors also lands here
/// (sums of unit-modulus elements leave the unit circle).
pub fn bundle_complex(a: &ComplexHv, b: &ComplexHv) -> Result<ComplexHv> {
    check_len(a.len(), b.len())?;
    let re = a.re().iter().zip(b.re()).map(|(x, y)| x + y).collect();
    let im = a.im().iter().zip(b.im()).map(|(x, y)| x + y).collect();
    ComplexHv::new(re, im)
}

/// Bind two real hypervectors: elementwise product.
pub fn bind(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    check_len(a.len(), b.len())?;
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x * y)
        .collect();
    Ok(Hypervector::from_values_unchecked(values))
}

/// Bind two complex hypervectors: elementwise complex product.
pub fn bind_complex(a: &ComplexHv, b: &ComplexHv) -> Result<ComplexHv> {
    check_len(a.len(), b.len())?;
    let d = a.len();
    let mut re = Vec::with_capacity(d);
    let mut im = Vec::with_capacity(d);
    for j in 0..d {
        re.push(a.re()[j] * b.re()[j] - a.im()[j] * b.im()[j]);
        im.push(a.re()[j] * b.im()[j] + a.im()[j] * b.re()[j]);
    }
    ComplexHv::new(re, im)
}

/// Bind two phase vectors; the product of unit-modulus elements stays on the
/// unit circle, so the result is a phase vector again.
pub fn bind_phase(a: &PhaseVector, b: &PhaseVector) -> Result<PhaseVector> {
    check_len(a.len(), b.len())?;
    let d = a.len();
    let mut re = Vec::with_capacity(d);
    let mut im = Vec::with_capacity(d);
    for j in 0..d {
        re.push(a.re()[j] * b.re()[j] - a.im()[j] * b.im()[j]);
        im.push(a.re()[j] * b.im()[j] + a.im()[j] * b.re()[j]);
    }
    PhaseVector::from_parts(re, im)
}

/// Bind a phase vector with a real hypervector: rotates each real element
/// into the complex plane, preserving its magnitude.
pub fn bind_phase_real(p: &PhaseVector, h: &Hypervector) -> Result<ComplexHv> {
    check_len(p.len(), h.len())?;
    let d = p.len();
    let mut re = Vec::with_capacity(d);
    let mut im = Vec::with_capacity(d);
    for j in 0..d {
        let v = h.values()[j];
        re.push(v * p.re()[j]);
        im.push(v * p.im()[j]);
    }
    ComplexHv::new(re, im)
}

/// Cyclic rotation of vector elements; `shift` is taken modulo `D` and may
/// be negative. `permute(permute(a, s), D - s) == a` exactly.
pub fn permute(a: &Hypervector, shift: i64) -> Hypervector {
    let d = a.len();
    if d == 0 {
        return a.clone();
    }
    let s = shift.rem_euclid(d as i64) as usize;
    if s == 0 {
        return a.clone();
    }
    let mut values = Vec::with_capacity(d);
    // Element j of the output comes from position j - s (mod d): a right rotation.
    values.extend_from_slice(&a.values()[d - s..]);
    values.extend_from_slice(&a.values()[..d - s]);
    Hypervector::from_values_unchecked(values)
}
