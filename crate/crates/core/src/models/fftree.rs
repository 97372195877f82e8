//! Fast-and-frugal binary trees.
//!
//! Induction is greedy: at each level pick the single cue with the highest
//! balanced accuracy on the examples still in play, exit on the purer side of
//! the cue, and continue with the other side. Ties go to the lower feature index,
//! then the lower threshold.

use serde::{Deserialize, Serialize};

use crate::features::{feature_kind, FeatureKind, FeatureVector, N_FEATURES};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Test {
    /// `x[feature] <= t`
    AtMost(f64),
    /// `x[feature] == c`
    Is(f64),
}

impl Test {
    pub fn eval(self, x: f64) -> bool {
        match self {
            Test::AtMost(t) => x <= t,
            Test::Is(c) => x == c,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cue {
    pub feature: usize,
    pub test: Test,
    /// Exit when the test evaluates to this value.
    pub exit_on: bool,
    pub exit_label: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FFTree {
    pub cues: Vec<Cue>,
    pub final_label: bool,
}

impl FFTree {
    pub fn constant(label: bool) -> Self {
        FFTree { cues: Vec::new(), final_label: label }
    }

    pub fn leaves(&self) -> usize {
        self.cues.len() + 1
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.predict_traced(x).0
    }

    /// Prediction plus the number of cues inspected.
    pub fn predict_traced(&self, x: &[f64]) -> (bool, usize) {
        for (i, c) in self.cues.iter().enumerate() {
            if c.test.eval(x[c.feature]) == c.exit_on {
                return (c.exit_label, i + 1);
            }
        }
        (self.final_label, self.cues.len())
    }
}

/// Feature columns sorted once, reused by every tree trained on the same rows.
pub struct Presorted<'a> {
    rows: &'a [FeatureVector],
    order: Vec<Vec<u32>>,
}

impl<'a> Presorted<'a> {
    pub fn new(rows: &'a [FeatureVector]) -> Self {
        let order = (0..N_FEATURES)
            .map(|f| {
                let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
                idx.sort_by(|&a, &b| rows[a as usize].0[f].total_cmp(&rows[b as usize].0[f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { rows, order }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrainError {
    #[error("no training examples")]
    Empty,
    #[error("max_leaves must be at least 2")]
    TooFewLeaves,
    #[error("labels and rows differ in length")]
    Shape,
}

pub fn learn_ff_tree(rows: &[FeatureVector], labels: &[bool], max_leaves: usize) -> Result<FFTree, TrainError> {
    learn_presorted(&Presorted::new(rows), labels, max_leaves)
}

#[derive(Clone, Copy)]
struct Split {
    feature: usize,
    test: Test,
    score: f64,
    // counts on the side where the test holds / fails
    pos_in: usize,
    neg_in: usize,
    pos_out: usize,
    neg_out: usize,
}

pub fn learn_presorted(data: &Presorted<'_>, labels: &[bool], max_leaves: usize) -> Result<FFTree, TrainError> {
    if data.is_empty() {
        return Err(TrainError::Empty);
    }
    if labels.len() != data.len() {
        return Err(TrainError::Shape);
    }
    if max_leaves < 2 {
        return Err(TrainError::TooFewLeaves);
    }
    let max_leaves = max_leaves.min(N_FEATURES);
    let mut active = vec![true; data.len()];
    let mut pos = labels.iter().filter(|&&l| l).count();
    let mut neg = labels.len() - pos;
    let mut cues = Vec::new();

    while cues.len() + 1 < max_leaves && pos > 0 && neg > 0 {
        let Some(s) = best_split(data, labels, &active, pos, neg) else { break };
        if s.score <= 0.5 + 1e-12 {
            break;
        }
        let (n_in, n_out) = (s.pos_in + s.neg_in, s.pos_out + s.neg_out);
        let purity = |p: usize, n: usize| p.max(n) as f64 / (p + n).max(1) as f64;
        // exit on the purer side; equal purity exits on the larger side
        let exit_on = {
            let (pi, po) = (purity(s.pos_in, s.neg_in), purity(s.pos_out, s.neg_out));
            if pi != po {
                pi > po
            } else {
                n_in >= n_out
            }
        };
        let (ep, en) = if exit_on { (s.pos_in, s.neg_in) } else { (s.pos_out, s.neg_out) };
        cues.push(Cue { feature: s.feature, test: s.test, exit_on, exit_label: ep > en });
        for (i, a) in active.iter_mut().enumerate() {
            if *a && s.test.eval(data.rows[i].0[s.feature]) == exit_on {
                *a = false;
            }
        }
        pos -= ep;
        neg -= en;
    }
    Ok(FFTree { cues, final_label: pos > neg })
}

fn balanced(pos_in: usize, neg_in: usize, pos: usize, neg: usize) -> f64 {
    let tpr = pos_in as f64 / pos as f64;
    let tnr = (neg - neg_in) as f64 / neg as f64;
    let ba = 0.5 * (tpr + tnr);
    ba.max(1.0 - ba)
}

fn best_split(data: &Presorted<'_>, labels: &[bool], active: &[bool], pos: usize, neg: usize) -> Option<Split> {
    let mut best: Option<Split> = None;
    let mut consider = |cand: Split| {
        if best.is_none_or(|b| cand.score > b.score + 1e-12) {
            best = Some(cand);
        }
    };
    for f in 0..N_FEATURES {
        let col = &data.order[f];
        match feature_kind(f) {
            FeatureKind::Categorical(k) => {
                let mut cp = vec![0usize; k];
                let mut cn = vec![0usize; k];
                for &i in col {
                    let i = i as usize;
                    if !active[i] {
                        continue;
                    }
                    let c = data.rows[i].0[f];
                    let c = if c >= 0.0 && (c as usize) < k { c as usize } else { continue };
                    if labels[i] {
                        cp[c] += 1;
                    } else {
                        cn[c] += 1;
                    }
                }
                for c in 0..k {
                    if cp[c] + cn[c] == 0 || cp[c] + cn[c] == pos + neg {
                        continue;
                    }
                    consider(Split {
                        feature: f,
                        test: Test::Is(c as f64),
                        score: balanced(cp[c], cn[c], pos, neg),
                        pos_in: cp[c],
                        neg_in: cn[c],
                        pos_out: pos - cp[c],
                        neg_out: neg - cn[c],
                    });
                }
            }
            FeatureKind::Continuous => {
                let (mut pi, mut ni) = (0usize, 0usize);
                let mut prev: Option<f64> = None;
                for &i in col {
                    let i = i as usize;
                    if !active[i] {
                        continue;
                    }
                    let v = data.rows[i].0[f];
                    if let Some(p) = prev {
                        if v > p && pi + ni < pos + neg {
                            consider(Split {
                                feature: f,
                                test: Test::AtMost(0.5 * (p + v)),
                                score: balanced(pi, ni, pos, neg),
                                pos_in: pi,
                                neg_in: ni,
                                pos_out: pos - pi,
                                neg_out: neg - ni,
                            });
                        }
                    }
                    if labels[i] {
                        pi += 1;
                    } else {
                        ni += 1;
                    }
                    prev = Some(v);
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(vals: &[(usize, f64)]) -> FeatureVector {
        let mut v = [0.0; N_FEATURES];
        for &(i, x) in vals {
            v[i] = x;
        }
        FeatureVector(v)
    }

    #[test]
    fn single_class_gives_constant_tree() {
        let rows = vec![row(&[(0, 1.0)]), row(&[(0, 2.0)])];
        let t = learn_ff_tree(&rows, &[true, true], 8).unwrap();
        assert_eq!(t, FFTree::constant(true));
        assert!(learn_ff_tree(&[], &[], 8).is_err());
        assert_eq!(learn_ff_tree(&rows, &[true, true], 1), Err(TrainError::TooFewLeaves));
    }

    #[test]
    fn perfect_threshold_found_in_one_cue() {
        // feature 7 separates the classes at 5; other features are noise
        let rows: Vec<FeatureVector> = (0..40)
            .map(|i| row(&[(7, i as f64 * 0.25), (1, ((i * 7) % 5) as f64)]))
            .collect();
        let labels: Vec<bool> = rows.iter().map(|r| r.0[7] > 5.0).collect();
        let t = learn_ff_tree(&rows, &labels, 39).unwrap();
        assert_eq!(t.cues.len(), 1);
        assert_eq!(t.cues[0].feature, 7);
        assert!(rows.iter().zip(&labels).all(|(r, &l)| t.predict(&r.0) == l));
    }

    #[test]
    fn categorical_cue_tests_equality() {
        let rows: Vec<FeatureVector> = (0..32).map(|i| row(&[(4, (i % 4) as f64)])).collect();
        let labels: Vec<bool> = rows.iter().map(|r| r.0[4] == 2.0).collect();
        let t = learn_ff_tree(&rows, &labels, 4).unwrap();
        assert_eq!(t.cues[0].test, Test::Is(2.0));
        assert!(rows.iter().zip(&labels).all(|(r, &l)| t.predict(&r.0) == l));
    }
}
