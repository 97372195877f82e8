//! Named goals declared by `goal` rules.

use serde::{Deserialize, Serialize};

use super::eval::{BeliefState, Eval, RuleInstance};
use super::ground::GroundedDomain;
use super::syntax::{Term, Val};
use super::KrError;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Goal {
    pub name: String,
    pub args: Vec<Val>,
}

impl Goal {
    pub fn new(name: &str, args: Vec<Val>) -> Self {
        Goal { name: name.into(), args }
    }
}

impl GroundedDomain {
    /// Check the goal is declared with a matching number of parameters.
    pub fn validate_goal(&self, goal: &Goal) -> Result<(), KrError> {
        let rules = self
            .base
            .goals
            .get(&goal.name)
            .ok_or_else(|| KrError::Context(format!("no goal named `{}`", goal.name)))?;
        for &r in rules {
            let n = self.desc.rules[r].action.as_ref().map_or(0, |p| p.args.len());
            if n != goal.args.len() {
                return Err(KrError::Context(format!("goal `{}` takes {n} parameters", goal.name)));
            }
        }
        Ok(())
    }

    /// The goal rule instance satisfied in `s`, if any.
    pub fn goal_instance(&self, s: &BeliefState, goal: &Goal) -> Option<RuleInstance> {
        let rules = self.base.goals.get(&goal.name)?;
        let e = Eval::new(self, s);
        for &r in rules {
            let rule = &self.desc.rules[r];
            let params = rule.action.as_ref()?;
            if params.args.len() != goal.args.len() {
                continue;
            }
            let mut b = vec![Val::Nil; rule.var_names.len()];
            let mut ok = true;
            for (t, v) in params.args.iter().zip(&goal.args) {
                match t {
                    Term::Const(c) => ok &= c == v,
                    Term::Var(x) => {
                        let slot = &mut b[*x as usize];
                        if *slot == Val::Nil {
                            *slot = *v;
                        } else {
                            ok &= slot == v;
                        }
                    }
                }
            }
            if !ok {
                continue;
            }
            if let Some(bindings) = e.first(&rule.body, &mut b) {
                return Some(RuleInstance { rule: r, bindings });
            }
        }
        None
    }

    pub fn goal_holds(&self, s: &BeliefState, goal: &Goal) -> bool {
        self.goal_instance(s, goal).is_some()
    }

    pub fn goal_text(&self, goal: &Goal) -> String {
        if goal.args.is_empty() {
            return goal.name.clone();
        }
        let a: Vec<String> = goal.args.iter().map(|v| self.desc.val_name(*v)).collect();
        format!("{}({})", goal.name, a.join(","))
    }
}
