//! Confusion matrices, per-class F1, max-rule document evaluation and the
//! uniform-prior document class probabilities.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SecurityClass;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("document group {0} has no predicted paragraphs")]
    EmptyDocumentGroup(usize),
    #[error("paragraph count must be in 1..=80, got {0}")]
    BadN(u32),
}

/// `counts[true][predicted]` over `U, C, S`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (SecurityClass, SecurityClass)>,
    {
        let mut cm = ConfusionMatrix::default();
        for (t, p) in pairs {
            cm.add(t, p);
        }
        cm
    }

    pub fn add(&mut self, truth: SecurityClass, predicted: SecurityClass) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for t in 0..3 {
            for p in 0..3 {
                self.counts[t][p] += other.counts[t][p];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, c: SecurityClass) -> u64 {
        self.counts[c.index()][c.index()]
    }

    pub fn false_positives(&self, c: SecurityClass) -> u64 {
        let j = c.index();
        (0..3).filter(|&t| t != j).map(|t| self.counts[t][j]).sum()
    }

    pub fn false_negatives(&self, c: SecurityClass) -> u64 {
        let i = c.index();
        (0..3).filter(|&p| p != i).map(|p| self.counts[i][p]).sum()
    }

    pub fn support(&self, c: SecurityClass) -> u64 {
        self.counts[c.index()].iter().sum()
    }

    pub fn predicted(&self, c: SecurityClass) -> u64 {
        self.counts.iter().map(|row| row[c.index()]).sum()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `F1 = 2TP / (2TP + FP + FN)`, zero when the denominator is zero.
pub fn f1_per_class(cm: &ConfusionMatrix) -> [f64; 3] {
    SecurityClass::ALL.map(|c| {
        let tp = cm.true_positives(c);
        ratio(2 * tp, 2 * tp + cm.false_positives(c) + cm.false_negatives(c))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when the class has no support or is never predicted; its F1 is
    /// then reported as 0 or derived from an empty denominator.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub run_id: String,
    pub method: String,
    pub level: String,
    pub config_hash: String,
    pub test_set_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: BTreeMap<SecurityClass, ClassMetrics>,
    pub macro_f1: f64,
    pub total: u64,
    pub confusion: ConfusionMatrix,
    pub provenance: Provenance,
}

impl EvalReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Self {
        let f1 = f1_per_class(&cm);
        let per_class = SecurityClass::ALL
            .iter()
            .map(|&c| {
                let tp = cm.true_positives(c);
                let support = cm.support(c);
                let predicted = cm.predicted(c);
                let m = ClassMetrics {
                    precision: ratio(tp, predicted),
                    recall: ratio(tp, support),
                    f1: f1[c.index()],
                    support,
                    degenerate: support == 0 || predicted == 0,
                };
                (c, m)
            })
            .collect();
        EvalReport {
            per_class,
            macro_f1: f1.iter().sum::<f64>() / 3.0,
            total: cm.total(),
            confusion: cm,
            provenance: Provenance::default(),
        }
    }

    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (SecurityClass, SecurityClass)>,
    {
        Self::from_confusion(ConfusionMatrix::from_pairs(pairs))
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn f1(&self, c: SecurityClass) -> f64 {
        self.per_class[&c].f1
    }

    /// `class,precision,recall,f1,support`, one row per class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for (c, m) in self.per_class.iter().rev() {
            writeln!(out, "{},{},{},{},{}", c, m.precision, m.recall, m.f1, m.support).unwrap();
        }
        out
    }
}

/// Predicted document label = max over its paragraph predictions.
pub fn document_level_eval(
    groups: &[(Vec<SecurityClass>, SecurityClass)],
) -> Result<EvalReport, MetricsError> {
    let mut cm = ConfusionMatrix::default();
    for (i, (preds, truth)) in groups.iter().enumerate() {
        let p = preds.iter().copied().max().ok_or(MetricsError::EmptyDocumentGroup(i))?;
        cm.add(*truth, p);
    }
    Ok(EvalReport::from_confusion(cm))
}

/// Exact document class probabilities for `n` iid uniform paragraphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DocumentPriors {
    pub u: Ratio<u128>,
    pub c: Ratio<u128>,
    pub s: Ratio<u128>,
}

impl DocumentPriors {
    pub fn get(&self, class: SecurityClass) -> Ratio<u128> {
        match class {
            SecurityClass::U => self.u,
            SecurityClass::C => self.c,
            SecurityClass::S => self.s,
        }
    }
}

/// `Pr(U) = (1/3)^n`, `Pr(C) = (2/3)^n - (1/3)^n`, `Pr(S) = 1 - (2/3)^n`.
pub fn document_priors(n: u32) -> Result<DocumentPriors, MetricsError> {
    if n == 0 || n > 80 {
        return Err(MetricsError::BadN(n));
    }
    let three = 3u128.pow(n);
    let two = 2u128.pow(n);
    Ok(DocumentPriors {
        u: Ratio::new(1, three),
        c: Ratio::new(two - 1, three),
        s: Ratio::new(three - two, three),
    })
}

pub fn document_class_prior(n: u32, class: SecurityClass) -> Result<f64, MetricsError> {
    let r = document_priors(n)?.get(class);
    Ok(*r.numer() as f64 / *r.denom() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SecurityClass::*;

    #[test]
    fn perfect_predictions() {
        let r = EvalReport::from_pairs([(U, U), (C, C), (S, S), (S, S)]);
        assert_eq!(f1_per_class(&r.confusion), [1.0, 1.0, 1.0]);
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn one_one_one_gives_half() {
        // TP=1, FP=1, FN=1 for C.
        let cm = ConfusionMatrix::from_pairs([(C, C), (U, C), (C, S)]);
        assert_eq!(f1_per_class(&cm)[C.index()], 0.5);
    }

    #[test]
    fn absent_class_is_zero_and_flagged() {
        let r = EvalReport::from_pairs([(U, U), (C, C)]);
        assert_eq!(r.f1(S), 0.0);
        assert!(r.per_class[&S].degenerate);
        assert!(!r.per_class[&U].degenerate);
    }

    #[test]
    fn document_eval_max_rule() {
        let r = document_level_eval(&[(vec![U, U, S], U)]).unwrap();
        assert_eq!(r.confusion.counts[U.index()][S.index()], 1);
        let ok = document_level_eval(&[(vec![U, C], C), (vec![U], U)]).unwrap();
        assert_eq!(ok.macro_f1, 2.0 / 3.0);
        assert_eq!(document_level_eval(&[(vec![], U)]), Err(MetricsError::EmptyDocumentGroup(0)));
    }

    #[test]
    fn priors_small_n() {
        let p1 = document_priors(1).unwrap();
        assert_eq!((p1.u, p1.c, p1.s), (Ratio::new(1, 3), Ratio::new(1, 3), Ratio::new(1, 3)));
        let p2 = document_priors(2).unwrap();
        assert_eq!((p2.u, p2.c, p2.s), (Ratio::new(1, 9), Ratio::new(3, 9), Ratio::new(5, 9)));
        assert_eq!(document_priors(0), Err(MetricsError::BadN(0)));
        assert!((document_class_prior(2, S).unwrap() - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn csv_rows() {
        let csv = EvalReport::from_pairs([(U, U), (S, C)]).to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "class,precision,recall,f1,support");
        assert!(lines[1].starts_with("S,"));
        assert_eq!(lines.len(), 4);
    }

    fn arb_class() -> impl Strategy<Value = SecurityClass> {
        prop_oneof![Just(U), Just(C), Just(S)]
    }

    proptest! {
        #[test]
        fn f1_is_harmonic_mean(pairs in prop::collection::vec((arb_class(), arb_class()), 1..200)) {
            let r = EvalReport::from_pairs(pairs.iter().copied());
            for m in r.per_class.values() {
                if m.precision + m.recall > 0.0 {
                    let h = 2.0 * m.precision * m.recall / (m.precision + m.recall);
                    prop_assert!((h - m.f1).abs() < 1e-12);
                }
                prop_assert!((0.0..=1.0).contains(&m.f1));
            }
            prop_assert_eq!(r.total, pairs.len() as u64);
            let support: u64 = r.per_class.values().map(|m| m.support).sum();
            prop_assert_eq!(support, r.total);
        }

        #[test]
        fn priors_monotone(n in 1u32..40) {
            let a = document_priors(n).unwrap();
            let b = document_priors(n + 1).unwrap();
            prop_assert!(b.s > a.s);
            prop_assert!(b.u < a.u);
            prop_assert_eq!(a.u + a.c + a.s, Ratio::from_integer(1));
        }
    }
}
