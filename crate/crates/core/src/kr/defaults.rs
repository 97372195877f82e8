//! Initial defaults and their minimal retraction.
//!
//! Every default whose body holds contributes its conclusion. When the result
//! contradicts an observation or violates a constraint, the smallest set of
//! default instances is retracted instead, and each retracted conclusion is
//! replaced by its complement. Among sets of equal size the first in
//! lexicographic order of instance index wins.

use serde::{Deserialize, Serialize};

use super::eval::{instantiate, BeliefState, Eval, RuleInstance};
use super::ground::GroundedDomain;
use super::syntax::{Atom, RuleKind, Val};
use super::KrError;

/// An observed fluent literal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub atom: Atom,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefaultInstance {
    pub instance: RuleInstance,
    pub atom: Atom,
    /// True when the default concludes the fluent is false.
    pub negated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub state: BeliefState,
    pub applied: Vec<DefaultInstance>,
    pub retracted: Vec<DefaultInstance>,
}

/// Ground default instances whose bodies hold in `s`, in rule then binding order.
pub fn default_instances(g: &GroundedDomain, s: &BeliefState) -> Vec<DefaultInstance> {
    let e = Eval::new(g, s);
    let mut out = Vec::new();
    for r in g.desc.rules_of(RuleKind::Default) {
        let head = r.head.as_ref().expect("defaults have heads");
        let mut b = vec![Val::Nil; r.var_names.len()];
        let mut found = Vec::new();
        e.solve(&r.body, &mut b, &mut |b| {
            found.push(DefaultInstance {
                instance: RuleInstance { rule: r.id, bindings: b.to_vec() },
                atom: instantiate(head, b),
                negated: r.head_negated,
            });
            true
        });
        found.sort_by(|a, b| a.instance.bindings.cmp(&b.instance.bindings));
        out.extend(found);
    }
    out
}

/// State obtained from `base` and the observations when the defaults with
/// the given indices are retracted. `None` when it is inconsistent.
pub fn candidate_state(
    g: &GroundedDomain,
    base: &BeliefState,
    obs: &[Observation],
    defaults: &[DefaultInstance],
    retract: &[usize],
) -> Option<BeliefState> {
    let mut s = base.clone();
    for o in obs {
        if o.holds {
            s.insert(o.atom);
        } else {
            s.remove(&o.atom);
        }
    }
    for (i, d) in defaults.iter().enumerate() {
        let assert_true = d.negated == retract.contains(&i);
        if assert_true {
            s.insert(d.atom);
        } else {
            s.remove(&d.atom);
        }
    }
    let obs_ok = obs.iter().all(|o| s.contains(&o.atom) == o.holds);
    (obs_ok && g.violation(&s).is_none()).then_some(s)
}

/// Complete an initial state: apply every default, retracting a minimum
/// cardinality set when that is needed for consistency.
pub fn complete_initial(g: &GroundedDomain, base: &BeliefState, obs: &[Observation]) -> Result<Completion, KrError> {
    let defaults = default_instances(g, base);
    let n = defaults.len();
    for k in 0..=n {
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            if let Some(state) = candidate_state(g, base, obs, &defaults, &combo) {
                let (retracted, applied) = defaults
                    .iter()
                    .enumerate()
                    .fold((Vec::new(), Vec::new()), |(mut r, mut a), (i, d)| {
                        if combo.contains(&i) {
                            r.push(d.clone());
                        } else {
                            a.push(d.clone());
                        }
                        (r, a)
                    });
                return Ok(Completion { state, applied, retracted });
            }
            if !next_combination(&mut combo, n) {
                break;
            }
        }
    }
    Err(KrError::Inconsistent("no retraction of defaults restores consistency".into()))
}

/// Advance to the next k-subset of 0..n in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
