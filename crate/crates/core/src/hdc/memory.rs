//! Symbolic class memory: bundling initialization plus similarity-gated
//! retraining, and argmax-by-cosine inference.

use crate::error::{Error, Result};

use super::vector::{cosine_similarity, Hypervector};

/// `c` class hypervectors of a common dimensionality plus the retrain rate.
#[derive(Clone, Debug)]
pub struct ClassMemory {
    classes: Vec<Hypervector>,
    eta: f64,
}

impl ClassMemory {
    pub fn new(c: usize, d: usize, eta: f64) -> Result<Self> {
        if c < 1 {
            return Err(Error::invalid("class count must be >= 1"));
        }
        if d < 1 {
            return Err(Error::invalid("dimensionality must be >= 1"));
        }
        if !(eta >= 0.0) {
            return Err(Error::invalid(format!(
                "learning rate must be >= 0, got {eta}"
            )));
        }
        Ok(ClassMemory {
            classes: vec![Hypervector::zeros(d); c],
            eta,
        })
    }

    /// Build directly from class hypervectors (used by tests and tooling).
    pub fn from_classes(classes: Vec<Hypervector>, eta: f64) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("class count must be >= 1"));
        }
        let d = classes[0].len();
        if classes.iter().any(|c| c.len() != d) {
            return Err(Error::invalid("class hypervector lengths differ"));
        }
        Ok(ClassMemory { classes, eta })
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.classes[0].len()
    }

    pub fn classes(&self) -> &[Hypervector] {
        &self.classes
    }
}

/// Train the memory on labeled encoded samples.
///
/// Initialization bundles every sample into its class vector
/// (`C_i = sum of phi(x) with label i`); each retrain epoch then updates only
/// mispredicted samples, pulling the true class toward the sample and pushing
/// the predicted one away, both scaled by `eta * (1 - delta)` where `delta`
/// is the sample's similarity to its true class.
pub fn class_train(
    mut memory: ClassMemory,
    data: &[(Hypervector, usize)],
    epochs: usize,
) -> Result<ClassMemory> {
    let c = memory.class_count();
    let d = memory.dim();
    let mut seen = vec![false; c];
    for (hv, label) in data {
        if *label >= c {
            return Err(Error::invalid(format!(
                "label {label} out of range for {c} classes"
            )));
        }
        if hv.len() != d {
            return Err(Error::invalid(format!(
                "sample length {} does not match memory dimensionality {d}",
                hv.len()
            )));
        }
        seen[*label] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::invalid(format!(
            "class {missing} has no samples for bundling initialization"
        )));
    }

    // Bundling initialization.
    for class in memory.classes.iter_mut() {
        *class = Hypervector::zeros(d);
    }
    for (hv, label) in data {
        let acc = memory.classes[*label].values_mut();
        for (v, &x) in acc.iter_mut().zip(hv.values()) {
            *v += x;
        }
    }

    // Misprediction-gated retraining.
    for _ in 0..epochs {
        for (hv, label) in data {
            let predicted = class_infer(&memory, hv)?;
            if predicted == *label {
                continue;
            }
            let delta = cosine_similarity(memory.classes[*label].values(), hv.values())?;
            let step = memory.eta * (1.0 - delta);
            for (v, &x) in memory.classes[*label].values_mut().iter_mut().zip(hv.values()) {
                *v += step * x;
            }
            for (v, &x) in memory.classes[predicted].values_mut().iter_mut().zip(hv.values()) {
                *v -= step * x;
            }
        }
    }
    Ok(memory)
}

/// Predict the class whose hypervector is most cosine-similar to the query;
/// ties break toward the lowest class index.
pub fn class_infer(memory: &ClassMemory, q: &Hypervector) -> Result<usize> {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (i, class) in memory.classes.iter().enumerate() {
        let sim = cosine_similarity(class.values(), q.values())?;
        if sim > best_sim {
            best_sim = sim;
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdc::{random_gaussian_hv, NonlinearEncoder};
    use crate::rng::{gaussian_f64, rng_from_seed};

    #[test]
    fn infer_matches_own_class_vector() {
        let a = random_gaussian_hv(1, 256, 1.0).unwrap();
        let b = random_gaussian_hv(2, 256, 1.0).unwrap();
        let memory = ClassMemory::from_classes(vec![a.clone(), b], 0.1).unwrap();
        assert_eq!(class_infer(&memory, &a).unwrap(), 0);
    }

    #[test]
    fn infer_antipodal_memory() {
        let v = random_gaussian_hv(3, 128, 1.0).unwrap();
        let neg = v.scaled(-1.0);
        let memory = ClassMemory::from_classes(vec![v.clone(), neg], 0.1).unwrap();
        assert_eq!(class_infer(&memory, &v).unwrap(), 0);
    }

    #[test]
    fn infer_scale_invariant() {
        let a = random_gaussian_hv(4, 128, 1.0).unwrap();
        let b = random_gaussian_hv(5, 128, 1.0).unwrap();
        let q = random_gaussian_hv(6, 128, 1.0).unwrap();
        let m1 = ClassMemory::from_classes(vec![a.clone(), b.clone()], 0.1).unwrap();
        let m2 = ClassMemory::from_classes(vec![a.scaled(17.0), b], 0.1).unwrap();
        assert_eq!(
            class_infer(&m1, &q).unwrap(),
            class_infer(&m2, &q).unwrap()
        );
    }

    #[test]
    fn infer_uniform_over_random_memory() {
        // Random memory, random queries: predictions are near-uniform.
        let c = 4;
        let d = 1_000;
        let classes: Vec<_> = (0..c)
            .map(|i| random_gaussian_hv(100 + i as u64, d, 1.0).unwrap())
            .collect();
        let memory = ClassMemory::from_classes(classes, 0.1).unwrap();
        let n = 200;
        let mut counts = vec![0usize; c];
        for q in 0..n {
            let query = random_gaussian_hv(9_000 + q as u64, d, 1.0).unwrap();
            counts[class_infer(&memory, &query).unwrap()] += 1;
        }
        let p = 1.0 / c as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for (i, &count) in counts.iter().enumerate() {
            let dev = (count as f64 - n as f64 * p).abs();
            assert!(dev <= 4.0 * sigma, "class {i}: count {count}, dev {dev}");
        }
    }

    #[test]
    fn single_sample_per_class_zero_epochs() {
        let samples: Vec<_> = (0..3)
            .map(|i| (random_gaussian_hv(40 + i, 512, 1.0).unwrap(), i as usize))
            .collect();
        let memory = ClassMemory::new(3, 512, 0.1).unwrap();
        let trained = class_train(memory, &samples, 0).unwrap();
        for (hv, label) in &samples {
            assert_eq!(class_infer(&trained, hv).unwrap(), *label);
        }
    }

    #[test]
    fn correct_prediction_leaves_memory_unchanged() {
        let samples: Vec<_> = (0..2)
            .map(|i| (random_gaussian_hv(50 + i, 256, 1.0).unwrap(), i as usize))
            .collect();
        let memory = ClassMemory::new(2, 256, 0.5).unwrap();
        // With one well-separated sample per class, every sample is correctly
        // predicted after bundling, so retrain epochs are no-ops.
        let once = class_train(memory.clone(), &samples, 0).unwrap();
        let retrained = class_train(memory, &samples, 5).unwrap();
        for (a, b) in once.classes().iter().zip(retrained.classes()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn out_of_range_label_rejected() {
        let samples = vec![(random_gaussian_hv(1, 64, 1.0).unwrap(), 2usize)];
        let memory = ClassMemory::new(2, 64, 0.1).unwrap();
        assert!(class_train(memory, &samples, 1).is_err());
    }

    #[test]
    fn separable_clusters_train_accurately() {
        // Two well-separated Gaussian clusters encoded at D = 10,000 reach
        // at least 95% training accuracy within 5 epochs.
        let d = 10_000;
        let z = 16;
        let enc = NonlinearEncoder::new(77, z, d).unwrap();
        let mut rng = rng_from_seed(78);
        let centers = [4.0, -4.0];
        let mut data = Vec::new();
        for (label, &center) in centers.iter().enumerate() {
            for _ in 0..40 {
                let f: Vec<f64> = (0..z).map(|_| center + gaussian_f64(&mut rng)).collect();
                data.push((enc.encode(&f).unwrap(), label));
            }
        }
        let memory = ClassMemory::new(2, d, 0.5).unwrap();
        let trained = class_train(memory, &data, 5).unwrap();
        let correct = data
            .iter()
            .filter(|(hv, label)| class_infer(&trained, hv).unwrap() == *label)
            .count();
        let accuracy = correct as f64 / data.len() as f64;
        assert!(accuracy >= 0.95, "accuracy {accuracy}");
    }
}
