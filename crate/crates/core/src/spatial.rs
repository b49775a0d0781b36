//! Spatial encoding: positional base hypervectors, complex-exponential
//! position encoding with a length scale, and weighted scene composition.
//!
//! A position `(x, y)` maps to the phase vector with elements
//! `exp(i (Bx_j x + By_j y) / w)`. Two encodings of positions displaced by
//! `delta` then have expected flat-cosine `exp(-|delta|^2 / (2 w^2))`, so the
//! length scale `w` directly controls how fast spatial similarity decays.
//! Scenes combine a global hypervector with position-bound object vectors,
//! each scaled by its weight `eta`.

use crate::error::{Error, Result};
use crate::hdc::{ComplexHv, Hypervector, PhaseVector};
use crate::rng::{gaussian_f64, rng_from_seed};

/// The pair of positional base hypervectors, fixed once per corpus.
///
/// The same basis must encode every indexed image and every query; the seed
/// is kept so persisted artifacts can verify that.
#[derive(Clone, Debug)]
pub struct PositionalBasis {
    bx: Hypervector,
    by: Hypervector,
    seed: u64,
}

impl PositionalBasis {
    pub fn bx(&self) -> &Hypervector {
        &self.bx
    }

    pub fn by(&self) -> &Hypervector {
        &self.by
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.bx.len()
    }
}

/// Sample a positional basis: two independent `N(0,1)` hypervectors.
pub fn new_basis(seed: u64, d: usize) -> Result<PositionalBasis> {
    if d == 0 {
        return Err(Error::invalid("dimensionality d must be >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let bx = Hypervector::new((0..d).map(|_| gaussian_f64(&mut rng)).collect())?;
    let by = Hypervector::new((0..d).map(|_| gaussian_f64(&mut rng)).collect())?;
    Ok(PositionalBasis { bx, by, seed })
}

/// Encode a position as a phase vector: element `j` is
/// `exp(i (Bx_j x + By_j y) / w)`.
///
/// Equals the binding of the two single-axis encodings. The basis is never
/// resampled when `w` changes; the scale only divides inside the exponent.
pub fn encode_position(basis: &PositionalBasis, x: f64, y: f64, w: f64) -> Result<PhaseVector> {
    if !(w > 0.0) {
        return Err(Error::invalid(format!("length scale w must be > 0, got {w}")));
    }
    let angles: Vec<f64> = basis
        .bx
        .values()
        .iter()
        .zip(basis.by.values())
        .map(|(&bx, &by)| (bx * x + by * y) / w)
        .collect();
    Ok(PhaseVector::from_angles(&angles))
}

/// Closed-form expected similarity of two position encodings displaced by
/// `(dx, dy)`: `exp(-(dx^2 + dy^2) / (2 w^2))`.
///
/// Serves as the analytic oracle for the empirical kernel.
pub fn expected_position_kernel(dx: f64, dy: f64, w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return Err(Error::invalid(format!("length scale w must be > 0, got {w}")));
    }
    Ok((-(dx * dx + dy * dy) / (2.0 * w * w)).exp())
}

/// One object to compose into a scene: its feature hypervector, normalized
/// position, and weight.
#[derive(Clone, Debug)]
pub struct ObjectPlacement {
    feature_hv: Hypervector,
    x: f64,
    y: f64,
    eta: f64,
}

impl ObjectPlacement {
    /// Coordinates are normalized by image width/height into `[0, 1]`.
    pub fn new(feature_hv: Hypervector, x: f64, y: f64, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::invalid(format!(
                "object position ({x}, {y}) outside the unit square"
            )));
        }
        if !(eta > 0.0) {
            return Err(Error::invalid(format!("eta must be > 0, got {eta}")));
        }
        Ok(ObjectPlacement {
            feature_hv,
            x,
            y,
            eta,
        })
    }

    pub fn feature_hv(&self) -> &Hypervector {
        &self.feature_hv
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Copy with a different weight.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        ObjectPlacement::new(self.feature_hv.clone(), self.x, self.y, eta)
    }
}

/// The composed complex representation of one image, with its flattened
/// `Re ++ Im` form cached for hashing and similarity.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRep {
    h: ComplexHv,
    flat: Vec<f64>,
}

impl SceneRep {
    pub fn new(h: ComplexHv) -> Self {
        let flat = h.flat();
        SceneRep { h, flat }
    }

    pub fn h(&self) -> &ComplexHv {
        &self.h
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn cosine(&self, other: &SceneRep) -> Result<f64> {
        crate::hdc::cosine_similarity(&self.flat, &other.flat)
    }
}

/// The flattened real form of a scene representation.
pub fn flatten(rep: &SceneRep) -> &[f64] {
    rep.flat()
}

/// Options for scene composition.
#[derive(Clone, Copy, Debug, Default)]
pub struct ComposeOpts {
    /// L2-normalize the global and object feature hypervectors before
    /// weighting. Off by default: raw encoder outputs are composed as-is.
    pub normalize_features: bool,
}

/// Compose a scene: `H = eta_glob * global + sum_k eta_k * (h_k * p_k)`
/// where `p_k` encodes object `k`'s position and `*` is binding.
pub fn compose_scene(
    global_hv: &Hypervector,
    objects: &[ObjectPlacement],
    eta_glob: f64,
    basis: &PositionalBasis,
    w: f64,
) -> Result<SceneRep> {
    compose_scene_with(global_hv, objects, eta_glob, basis, w, ComposeOpts::default())
}

pub fn compose_scene_with(
    global_hv: &Hypervector,
    objects: &[ObjectPlacement],
    eta_glob: f64,
    basis: &PositionalBasis,
    w: f64,
    opts: ComposeOpts,
) -> Result<SceneRep> {
    if !(w > 0.0) {
        return Err(Error::invalid(format!("length scale w must be > 0, got {w}")));
    }
    if !(eta_glob > 0.0) {
        return Err(Error::invalid(format!(
            "eta_glob must be > 0, got {eta_glob}"
        )));
    }
    let d = basis.dim();
    if global_hv.len() != d {
        return Err(Error::invalid(format!(
            "global hypervector length {} does not match basis dimensionality {d}",
            global_hv.len()
        )));
    }
    let normalize = |hv: &Hypervector| -> Result<Hypervector> {
        if opts.normalize_features {
            hv.normalized()
        } else {
            Ok(hv.clone())
        }
    };

    let global = normalize(global_hv)?;
    let mut acc = ComplexHv::zeros(d);
    {
        let (re, _) = acc.parts_mut();
        for (r, &g) in re.iter_mut().zip(global.values()) {
            *r = eta_glob * g;
        }
    }
    for obj in objects {
        if obj.feature_hv.len() != d {
            return Err(Error::invalid(format!(
                "object hypervector length {} does not match basis dimensionality {d}",
                obj.feature_hv.len()
            )));
        }
        let feature = normalize(&obj.feature_hv)?;
        let pos = encode_position(basis, obj.x, obj.y, w)?;
        let (re, im) = acc.parts_mut();
        for j in 0..d {
            let f = obj.eta * feature.values()[j];
            re[j] += f * pos.re()[j];
            im[j] += f * pos.im()[j];
        }
    }
    Ok(SceneRep::new(acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdc::{cosine_similarity, random_gaussian_hv};

    #[test]
    fn basis_deterministic_and_decorrelated() {
        let a = new_basis(42, 10_000).unwrap();
        let b = new_basis(42, 10_000).unwrap();
        assert_eq!(a.bx(), b.bx());
        assert_eq!(a.by(), b.by());
        let corr = cosine_similarity(a.bx().values(), a.by().values()).unwrap();
        assert!(corr.abs() < 0.04, "corr {corr}");
        let var =
            a.bx().values().iter().map(|v| v * v).sum::<f64>() / a.bx().len() as f64;
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn origin_encodes_to_ones() {
        let basis = new_basis(1, 64).unwrap();
        let p = encode_position(&basis, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(p.re(), &vec![1.0; 64][..]);
        assert_eq!(p.im(), &vec![0.0; 64][..]);
    }

    #[test]
    fn unit_modulus_everywhere() {
        let basis = new_basis(2, 1_000).unwrap();
        for &(x, y, w) in &[(0.3, 0.9, 0.1), (1.0, 0.0, 1.0), (0.5, 0.5, 10.0)] {
            let p = encode_position(&basis, x, y, w).unwrap();
            for j in 0..p.len() {
                let m = (p.re()[j] * p.re()[j] + p.im()[j] * p.im()[j]).sqrt();
                assert!((m - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn invalid_length_scale_rejected() {
        let basis = new_basis(3, 16).unwrap();
        assert!(encode_position(&basis, 0.1, 0.1, 0.0).is_err());
        assert!(encode_position(&basis, 0.1, 0.1, -2.0).is_err());
        assert!(expected_position_kernel(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn position_encoding_factorizes_by_axis() {
        let basis = new_basis(4, 512).unwrap();
        let (x, y, w) = (0.7, 0.2, 0.5);
        let joint = encode_position(&basis, x, y, w).unwrap();
        let only_x = encode_position(&basis, x, 0.0, w).unwrap();
        let only_y = encode_position(&basis, 0.0, y, w).unwrap();
        let bound = crate::hdc::bind_phase(&only_x, &only_y).unwrap();
        for j in 0..joint.len() {
            assert!((joint.re()[j] - bound.re()[j]).abs() < 1e-12);
            assert!((joint.im()[j] - bound.im()[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_closed_forms() {
        assert_eq!(expected_position_kernel(0.0, 0.0, 3.0).unwrap(), 1.0);
        let k = expected_position_kernel(1.0, 0.0, 1.0).unwrap();
        assert!((k - (-0.5f64).exp()).abs() < 1e-12);
        // 3-4-5 displacement at w = 5 collapses to the same exponent.
        let k345 = expected_position_kernel(3.0, 4.0, 5.0).unwrap();
        assert!((k345 - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn empirical_kernel_matches_oracle_at_unit_displacement() {
        let d = 10_000;
        let basis = new_basis(7, d).unwrap();
        let a = encode_position(&basis, 0.0, 0.0, 1.0).unwrap();
        let b = encode_position(&basis, 0.6, 0.8, 1.0).unwrap();
        let sim = a.cosine(&b).unwrap();
        let expect = (-0.5f64).exp();
        assert!((sim - expect).abs() < 0.03, "sim {sim}, expect {expect}");
    }

    #[test]
    fn larger_scale_is_more_tolerant() {
        let basis = new_basis(8, 4_000).unwrap();
        let delta = (0.3, 0.4);
        let sim_at = |w: f64| {
            let a = encode_position(&basis, 0.1, 0.1, w).unwrap();
            let b = encode_position(&basis, 0.1 + delta.0, 0.1 + delta.1, w).unwrap();
            a.cosine(&b).unwrap()
        };
        assert!(sim_at(10.0) > sim_at(0.1));
    }

    #[test]
    fn translation_stationarity() {
        let basis = new_basis(9, 10_000).unwrap();
        let w = 0.7;
        let base = {
            let a = encode_position(&basis, 0.2, 0.3, w).unwrap();
            let b = encode_position(&basis, 0.5, 0.1, w).unwrap();
            a.cosine(&b).unwrap()
        };
        let shifted = {
            let a = encode_position(&basis, 0.4, 0.6, w).unwrap();
            let b = encode_position(&basis, 0.7, 0.4, w).unwrap();
            a.cosine(&b).unwrap()
        };
        assert!((base - shifted).abs() <= 1e-9, "{base} vs {shifted}");
    }

    #[test]
    fn empty_scene_is_weighted_global() {
        let d = 128;
        let basis = new_basis(10, d).unwrap();
        let global = random_gaussian_hv(11, d, 1.0).unwrap();
        let scene = compose_scene(&global, &[], 1.0, &basis, 1.0).unwrap();
        assert_eq!(scene.h().re(), global.values());
        assert!(scene.h().im().iter().all(|&v| v == 0.0));
        // Real-only scene: second half of the flat form is all zero.
        assert!(scene.flat()[d..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_object_bind_preserves_magnitudes() {
        let d = 256;
        let basis = new_basis(12, d).unwrap();
        let feature = random_gaussian_hv(13, d, 1.0).unwrap();
        let zero_global = Hypervector::zeros(d);
        let obj = ObjectPlacement::new(feature.clone(), 0.25, 0.75, 1.0).unwrap();
        let scene = compose_scene(&zero_global, &[obj], 1.0, &basis, 0.5).unwrap();
        for j in 0..d {
            let m = (scene.h().re()[j].powi(2) + scene.h().im()[j].powi(2)).sqrt();
            assert!((m - feature.values()[j].abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn weight_linearity() {
        let d = 64;
        let basis = new_basis(14, d).unwrap();
        let global = random_gaussian_hv(15, d, 1.0).unwrap();
        let f1 = random_gaussian_hv(16, d, 1.0).unwrap();
        let f2 = random_gaussian_hv(17, d, 1.0).unwrap();
        let o1 = ObjectPlacement::new(f1, 0.2, 0.2, 1.0).unwrap();
        let o2 = ObjectPlacement::new(f2.clone(), 0.8, 0.6, 1.0).unwrap();
        let base = compose_scene(&global, &[o1.clone(), o2.clone()], 1.0, &basis, 1.0).unwrap();
        let doubled = compose_scene(
            &global,
            &[o1, o2.with_eta(2.0).unwrap()],
            1.0,
            &basis,
            1.0,
        )
        .unwrap();
        // Doubling eta_2 adds exactly one extra copy of object 2's bound term.
        let pos2 = encode_position(&basis, 0.8, 0.6, 1.0).unwrap();
        let term2 = crate::hdc::bind_phase_real(&pos2, &f2).unwrap();
        for j in 0..d {
            let re = base.h().re()[j] + term2.re()[j];
            let im = base.h().im()[j] + term2.im()[j];
            assert!((doubled.h().re()[j] - re).abs() <= 1e-12_f64.max(re.abs() * 1e-12));
            assert!((doubled.h().im()[j] - im).abs() <= 1e-12_f64.max(im.abs() * 1e-12));
        }
    }

    #[test]
    fn displaced_objects_reduce_similarity_by_kernel_gap() {
        let d = 10_000;
        let basis = new_basis(18, d).unwrap();
        let w = 0.1;
        let feature = random_gaussian_hv(19, d, 1.0).unwrap();
        let zero_global = Hypervector::zeros(d);
        let at = |x: f64, y: f64| {
            let obj = ObjectPlacement::new(feature.clone(), x, y, 1.0).unwrap();
            compose_scene(&zero_global, &[obj], 1.0, &basis, w).unwrap()
        };
        let reference = at(0.2, 0.2);
        let same = at(0.2, 0.2);
        let displaced = at(0.5, 0.6); // displacement norm 0.5
        let sim_same = reference.cosine(&same).unwrap();
        let sim_disp = reference.cosine(&displaced).unwrap();
        assert!(sim_disp < sim_same);
        let expect = expected_position_kernel(0.3, 0.4, w).unwrap();
        assert!(
            (sim_disp - expect).abs() < 0.05,
            "sim {sim_disp}, kernel {expect}"
        );
    }

    #[test]
    fn flatten_orthogonal_to_i_rotation() {
        // Multiplying a complex vector by i rotates its flat form into an
        // orthogonal direction.
        let d = 512;
        let basis = new_basis(20, d).unwrap();
        let feature = random_gaussian_hv(21, d, 1.0).unwrap();
        let obj = ObjectPlacement::new(feature, 0.4, 0.9, 1.0).unwrap();
        let scene = compose_scene(&Hypervector::zeros(d), &[obj], 1.0, &basis, 1.0).unwrap();
        let rotated = ComplexHv::new(
            scene.h().im().iter().map(|v| -v).collect(),
            scene.h().re().to_vec(),
        )
        .unwrap();
        let sim = cosine_similarity(scene.flat(), &rotated.flat()).unwrap();
        assert!(sim.abs() <= 1e-12, "sim {sim}");
    }

    #[test]
    fn compose_rejects_mismatched_lengths() {
        let basis = new_basis(22, 32).unwrap();
        let global = random_gaussian_hv(23, 16, 1.0).unwrap();
        assert!(compose_scene(&global, &[], 1.0, &basis, 1.0).is_err());
    }

    #[test]
    fn placement_validation() {
        let hv = random_gaussian_hv(24, 8, 1.0).unwrap();
        assert!(ObjectPlacement::new(hv.clone(), 1.5, 0.0, 1.0).is_err());
        assert!(ObjectPlacement::new(hv.clone(), 0.5, 0.5, 0.0).is_err());
        assert!(ObjectPlacement::new(hv, 0.5, 0.5, 1.0).is_ok());
    }

    #[test]
    fn raising_eta_promotes_matching_scene() {
        // Conditional-retrieval property: boosting one object's weight
        // improves (or holds) the rank of the corpus scene containing a
        // near-duplicate of that object at the same position.
        let d = 2_000;
        let basis = new_basis(25, d).unwrap();
        let w = 0.2;
        let target = random_gaussian_hv(26, d, 1.0).unwrap();
        let clutter = random_gaussian_hv(27, d, 1.0).unwrap();
        let global = random_gaussian_hv(28, d, 1.0).unwrap();

        // Corpus scene with a near-duplicate of the target at its position.
        let noise = random_gaussian_hv(29, d, 0.05).unwrap();
        let near_dup = crate::hdc::bundle(&target, &noise).unwrap();
        let match_scene = compose_scene(
            &random_gaussian_hv(30, d, 1.0).unwrap(),
            &[ObjectPlacement::new(near_dup, 0.3, 0.3, 1.0).unwrap()],
            1.0,
            &basis,
            w,
        )
        .unwrap();
        // Distractors sharing the query's clutter object instead.
        let corpus: Vec<SceneRep> = (0..6)
            .map(|i| {
                compose_scene(
                    &random_gaussian_hv(40 + i, d, 1.0).unwrap(),
                    &[ObjectPlacement::new(clutter.clone(), 0.8, 0.8, 1.0).unwrap()],
                    1.0,
                    &basis,
                    w,
                )
                .unwrap()
            })
            .chain(std::iter::once(match_scene))
            .collect();
        let match_idx = corpus.len() - 1;

        let rank_of_match = |eta_target: f64| {
            let objects = vec![
                ObjectPlacement::new(target.clone(), 0.3, 0.3, eta_target).unwrap(),
                ObjectPlacement::new(clutter.clone(), 0.8, 0.8, 1.0).unwrap(),
            ];
            let query = compose_scene(&global, &objects, 1.0, &basis, w).unwrap();
            let mut sims: Vec<(usize, f64)> = corpus
                .iter()
                .enumerate()
                .map(|(i, s)| (i, query.cosine(s).unwrap()))
                .collect();
            sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            sims.iter().position(|(i, _)| *i == match_idx).unwrap()
        };
        assert!(rank_of_match(10.0) <= rank_of_match(1.0));
    }
}
