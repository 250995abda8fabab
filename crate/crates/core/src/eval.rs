//! Participant-independent cross-validation and macro-F1 scoring.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{SentimentClass, UtteranceKey};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_RUNS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{participants} participants cannot fill {k} folds")]
    TooFewParticipants { participants: usize, k: usize },
    #[error("fold index {index} out of range for {k} folds")]
    BadFoldIndex { index: usize, k: usize },
    #[error("participant `{0}` has no fold")]
    UnknownParticipant(String),
    #[error("predictions and golds differ in length ({preds} vs {golds})")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("no predictions to score")]
    EmptyInput,
    #[error("score matrix is incomplete")]
    IncompleteMatrix,
}

/// Assignment of each participant to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Participants in their original order with their fold index.
    pub assignments: Vec<(String, usize)>,
}

impl FoldPlan {
    pub fn fold_of(&self, participant: &str) -> Option<usize> {
        self.assignments
            .iter()
            .find(|(p, _)| p == participant)
            .map(|&(_, f)| f)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &(_, f) in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn participants_in(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|&&(_, f)| f == fold)
            .map(|(p, _)| p.as_str())
            .collect()
    }
}

/// Shuffles participants with `seed`, then deals them round-robin into `k`
/// folds, so fold sizes differ by at most one.
pub fn make_folds(participants: &[String], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k == 0 || participants.len() < k {
        return Err(EvalError::TooFewParticipants {
            participants: participants.len(),
            k,
        });
    }
    let mut order: Vec<usize> = (0..participants.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; participants.len()];
    for (rank, &idx) in order.iter().enumerate() {
        fold[idx] = rank % k;
    }
    Ok(FoldPlan {
        k,
        seed,
        assignments: participants.iter().cloned().zip(fold).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fold: usize,
    pub train: Vec<UtteranceKey>,
    pub validation: Vec<UtteranceKey>,
    pub test: Vec<UtteranceKey>,
}

/// Index where the training portion of `m` records ends: `floor(0.8 m)`.
pub fn validation_boundary(m: usize) -> usize {
    m * 4 / 5
}

/// Splits records (in corpus order) into train, validation and test.
/// Records of the test fold's participants form the test set; the first
/// 80 % of the remaining records train and the last 20 % validate.
pub fn make_split(
    records: &[UtteranceKey],
    plan: &FoldPlan,
    test_fold: usize,
) -> Result<SplitSpec, EvalError> {
    if test_fold >= plan.k {
        return Err(EvalError::BadFoldIndex {
            index: test_fold,
            k: plan.k,
        });
    }
    let folds: HashMap<&str, usize> = plan
        .assignments
        .iter()
        .map(|(p, f)| (p.as_str(), *f))
        .collect();
    let mut rest = Vec::new();
    let mut test = Vec::new();
    for key in records {
        let fold = *folds
            .get(key.participant_id.as_str())
            .ok_or_else(|| EvalError::UnknownParticipant(key.participant_id.clone()))?;
        if fold == test_fold {
            test.push(key.clone());
        } else {
            rest.push(key.clone());
        }
    }
    let validation = rest.split_off(validation_boundary(rest.len()));
    Ok(SplitSpec {
        test_fold,
        train: rest,
        validation,
        test,
    })
}

/// Unweighted mean of the per-class F1 over {low, high}. A class that occurs
/// in neither list scores 0.
pub fn macro_f1(preds: &[SentimentClass], golds: &[SentimentClass]) -> Result<f64, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let total: f64 = SentimentClass::ALL
        .iter()
        .map(|&class| {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fn_ = 0usize;
            for (&p, &g) in preds.iter().zip(golds) {
                match (p == class, g == class) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                (2 * tp) as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / SentimentClass::ALL.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `scores[run][fold]`.
    pub scores: Vec<Vec<f64>>,
    /// Mean over runs for each fold.
    pub per_fold_f1: Vec<f64>,
    /// Mean over folds for each run.
    pub per_run_mean: Vec<f64>,
    pub final_f1: f64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Averages a runs-by-folds matrix: folds within each run, then runs.
pub fn aggregate(matrix: &[Vec<Option<f64>>]) -> Result<MetricsReport, EvalError> {
    let k = matrix.first().map_or(0, Vec::len);
    if k == 0 || matrix.iter().any(|row| row.len() != k) {
        return Err(EvalError::IncompleteMatrix);
    }
    let scores: Vec<Vec<f64>> = matrix
        .iter()
        .map(|row| row.iter().copied().collect::<Option<Vec<f64>>>())
        .collect::<Option<_>>()
        .ok_or(EvalError::IncompleteMatrix)?;
    let per_run_mean: Vec<f64> = scores.iter().map(|r| mean(r)).collect();
    let per_fold_f1 = (0..k)
        .map(|f| mean(&scores.iter().map(|r| r[f]).collect::<Vec<_>>()))
        .collect();
    let final_f1 = mean(&per_run_mean);
    Ok(MetricsReport {
        scores,
        per_fold_f1,
        per_run_mean,
        final_f1,
    })
}

/// Checks that splits are participant-disjoint and that the test folds
/// cover every record exactly once.
pub fn check_splits(records: &[UtteranceKey], splits: &[SplitSpec]) -> Result<(), String> {
    let mut covered: HashMap<&UtteranceKey, usize> = HashMap::new();
    for s in splits {
        let test_people: HashSet<&str> = s.test.iter().map(|k| k.participant_id.as_str()).collect();
        if let Some(k) = s
            .train
            .iter()
            .chain(&s.validation)
            .find(|k| test_people.contains(k.participant_id.as_str()))
        {
            return Err(format!(
                "fold {}: participant {} in both test and training",
                s.test_fold, k.participant_id
            ));
        }
        if s.train.len() + s.validation.len() + s.test.len() != records.len() {
            return Err(format!("fold {}: records lost", s.test_fold));
        }
        for k in &s.test {
            *covered.entry(k).or_default() += 1;
        }
    }
    for r in records {
        match covered.get(r) {
            Some(1) => {}
            n => return Err(format!("{r:?} tested {} times", n.copied().unwrap_or(0))),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use SentimentClass::{High as H, Low as L};

    fn people(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i:02}")).collect()
    }

    fn keys(per_person: &[(usize, usize)]) -> Vec<UtteranceKey> {
        per_person
            .iter()
            .flat_map(|&(p, n)| {
                (0..n).map(move |e| UtteranceKey {
                    participant_id: format!("p{p:02}"),
                    exchange_id: format!("e{e}"),
                })
            })
            .collect()
    }

    #[test]
    fn fifty_nine_into_five() {
        let plan = make_folds(&people(59), 5, 0).unwrap();
        let mut sizes = plan.fold_sizes();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, [12, 12, 12, 12, 11]);
    }

    #[test]
    fn one_per_fold_and_too_few() {
        let plan = make_folds(&people(5), 5, 3).unwrap();
        assert_eq!(plan.fold_sizes(), [1; 5]);
        assert_eq!(
            make_folds(&people(3), 5, 0),
            Err(EvalError::TooFewParticipants {
                participants: 3,
                k: 5
            })
        );
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(
            make_folds(&people(20), 5, 9).unwrap(),
            make_folds(&people(20), 5, 9).unwrap()
        );
        assert_ne!(
            make_folds(&people(20), 5, 9).unwrap().assignments,
            make_folds(&people(20), 5, 10).unwrap().assignments
        );
    }

    #[test]
    fn split_boundaries() {
        assert_eq!(validation_boundary(100), 80);
        assert_eq!(validation_boundary(101), 80);
        assert_eq!(validation_boundary(4072), 3257);
    }

    #[test]
    fn split_respects_order_and_folds() {
        let records = keys(&[(0, 10), (1, 10), (2, 10), (3, 10), (4, 10)]);
        let plan = make_folds(&people(5), 5, 1).unwrap();
        let splits: Vec<SplitSpec> = (0..5)
            .map(|f| make_split(&records, &plan, f).unwrap())
            .collect();
        for s in &splits {
            assert_eq!(s.test.len(), 10);
            assert_eq!(s.train.len(), 32);
            assert_eq!(s.validation.len(), 8);
        }
        check_splits(&records, &splits).unwrap();
        assert_eq!(
            make_split(&records, &plan, 5),
            Err(EvalError::BadFoldIndex { index: 5, k: 5 })
        );
    }

    #[test]
    fn f1_examples() {
        assert_eq!(macro_f1(&[H, L, H], &[H, L, H]).unwrap(), 1.0);
        let f = macro_f1(&[H, H, H, H], &[H, H, L, L]).unwrap();
        assert!((f - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(macro_f1(&[L, H], &[H, L]).unwrap(), 0.0);
        // Only one class anywhere: the other contributes 0.
        assert_eq!(macro_f1(&[H, H], &[H, H]).unwrap(), 0.5);
    }

    #[test]
    fn f1_errors() {
        assert_eq!(
            macro_f1(&[H], &[H, L]),
            Err(EvalError::LengthMismatch { preds: 1, golds: 2 })
        );
        assert_eq!(macro_f1(&[], &[]), Err(EvalError::EmptyInput));
    }

    #[test]
    fn aggregate_means() {
        let r = aggregate(&vec![vec![Some(0.5); 5]; 3]).unwrap();
        assert_eq!(r.final_f1, 0.5);
        let r = aggregate(&[vec![Some(0.6)], vec![Some(0.5)], vec![Some(0.4)]]).unwrap();
        assert!((r.final_f1 - 0.5).abs() < 1e-12);
        assert_eq!(r.per_run_mean, [0.6, 0.5, 0.4]);
        let mut m = vec![vec![Some(0.5); 5]; 3];
        m[1][2] = None;
        assert_eq!(aggregate(&m), Err(EvalError::IncompleteMatrix));
        assert_eq!(aggregate(&[]), Err(EvalError::IncompleteMatrix));
    }
}
