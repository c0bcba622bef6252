//! Multinomial Naive Bayes with additive smoothing.

use super::{check_inputs, classes_present, ModelError, ModelKind, ModelParams, TrainedClassifier};
use crate::corpus::SecurityClass;
use crate::text::SparseVector;

/// `log p(t|c) = ln((N_ct + α) / (N_c + α·d))`, priors from empirical
/// class frequencies.
pub fn train_naive_bayes(
    x: &[SparseVector],
    y: &[SecurityClass],
    alpha: f64,
) -> Result<TrainedClassifier, ModelError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(ModelError::BadHyperparameter(format!("alpha must be > 0, got {alpha}")));
    }
    let dim = check_inputs(x, y)?;
    let classes = classes_present(y);
    let slot = |c: SecurityClass| classes.iter().position(|&k| k == c).unwrap();

    let mut feature_mass = vec![vec![0.0f64; dim]; classes.len()];
    let mut docs = vec![0usize; classes.len()];
    for (v, &label) in x.iter().zip(y) {
        let k = slot(label);
        docs[k] += 1;
        for (j, w) in v.iter() {
            feature_mass[k][j] += w;
        }
    }
    let n = x.len() as f64;
    let log_prior = docs.iter().map(|&d| (d as f64 / n).ln()).collect();
    let log_likelihood = feature_mass
        .into_iter()
        .map(|row| {
            let total: f64 = row.iter().sum::<f64>() + alpha * dim as f64;
            row.into_iter().map(|m| ((m + alpha) / total).ln()).collect()
        })
        .collect();

    Ok(TrainedClassifier {
        kind: ModelKind::NaiveBayes,
        classes,
        dim,
        params: ModelParams::NaiveBayes { log_prior, log_likelihood },
        class_weights: [1.0; 3],
        hyperparameter: alpha,
        seed: 0,
        vectorizer_config: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::distributions::{Distribution, WeightedIndex};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use SecurityClass::*;

    #[test]
    fn separable_two_points() {
        let x = vec![SparseVector::from_dense(&[1.0, 0.0]), SparseVector::from_dense(&[0.0, 1.0])];
        let m = train_naive_bayes(&x, &[U, S], 1.0).unwrap();
        assert_eq!(m.predict(&x[0]), Ok(U));
        assert_eq!(m.predict(&x[1]), Ok(S));
    }

    #[test]
    fn rejects_bad_alpha_and_dims() {
        let x = vec![SparseVector::from_dense(&[1.0])];
        assert!(matches!(train_naive_bayes(&x, &[U], 0.0), Err(ModelError::BadHyperparameter(_))));
        let mixed = vec![SparseVector::zeros(2), SparseVector::zeros(3)];
        assert!(matches!(
            train_naive_bayes(&mixed, &[U, C], 1.0),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn huge_alpha_falls_back_to_prior() {
        let x = vec![
            SparseVector::from_dense(&[5.0, 0.0]),
            SparseVector::from_dense(&[4.0, 0.0]),
            SparseVector::from_dense(&[0.0, 3.0]),
        ];
        let m = train_naive_bayes(&x, &[C, C, S], 1e12).unwrap();
        assert_eq!(m.predict(&SparseVector::from_dense(&[0.0, 9.0])), Ok(C));
    }

    fn sample(rng: &mut ChaCha8Rng, dist: &WeightedIndex<f64>, d: usize, len: usize) -> Vec<f64> {
        let mut counts = vec![0.0; d];
        for _ in 0..len {
            counts[dist.sample(rng)] += 1.0;
        }
        counts
    }

    #[test]
    fn close_to_exact_bayes_on_multinomial_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let d = 10;
        let p: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..d).map(|_| rng.gen_range(0.2..1.0)).collect())
            .collect();
        let dists: Vec<_> = p.iter().map(|r| WeightedIndex::new(r).unwrap()).collect();
        let norm: Vec<Vec<f64>> = p
            .iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|v| (v / s).ln()).collect()
            })
            .collect();
        let draw = |n: usize, rng: &mut ChaCha8Rng| {
            (0..n)
                .map(|i| {
                    let k = i % 2;
                    (SparseVector::from_dense(&sample(rng, &dists[k], d, 15)), [U, S][k])
                })
                .collect::<Vec<_>>()
        };
        let train = draw(200, &mut rng);
        let test = draw(2000, &mut rng);
        let (x, y): (Vec<_>, Vec<_>) = train.into_iter().unzip();
        let m = train_naive_bayes(&x, &y, 1.0).unwrap();

        let mut model_hits = 0;
        let mut bayes_hits = 0;
        for (v, label) in &test {
            if m.predict(v).unwrap() == *label {
                model_hits += 1;
            }
            let ll = |k: usize| v.iter().map(|(j, c)| c * norm[k][j]).sum::<f64>();
            let bayes = if ll(1) > ll(0) { S } else { U };
            if bayes == *label {
                bayes_hits += 1;
            }
        }
        let gap = (bayes_hits as f64 - model_hits as f64) / test.len() as f64;
        assert!(gap.abs() <= 0.05, "model {model_hits} vs bayes {bayes_hits}");
    }
}
