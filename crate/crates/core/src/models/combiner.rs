//! Second-level tree mapping the eight expert votes to one action.

use serde::{Deserialize, Serialize};

use crate::env::ActionKind;

pub const MAX_DEPTH: usize = 8;
pub const ARITY: usize = ActionKind::COUNT;

/// The eight expert outputs packed as bits, bit `i` for action index `i`.
pub type Votes = u8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(ActionKind),
    /// Test vote `input`; children for vote 0 and vote 1.
    Split { input: usize, zero: usize, one: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Combiner {
    pub nodes: Vec<Node>,
}

impl Combiner {
    pub fn constant(a: ActionKind) -> Self {
        Combiner { nodes: vec![Node::Leaf(a)] }
    }

    pub fn predict(&self, votes: Votes) -> ActionKind {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(a) => return a,
                Node::Split { input, zero, one } => i = if votes >> input & 1 == 1 { one } else { zero },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { zero, one, .. } => 1 + go(nodes, zero).max(go(nodes, one)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Gini-split CART; leaves take the majority action, ties to the lowest index.
    pub fn learn(data: &[(Votes, ActionKind)]) -> Combiner {
        // the input space has only 256 points, so train on a histogram
        let mut hist = vec![[0u32; ARITY]; 256];
        for &(v, a) in data {
            hist[v as usize][a.index()] += 1;
        }
        let patterns: Vec<usize> = (0..256).filter(|&p| hist[p].iter().any(|&c| c > 0)).collect();
        let mut nodes = Vec::new();
        grow(&hist, patterns, 0, &mut nodes);
        Combiner { nodes }
    }
}

fn counts(hist: &[[u32; ARITY]], pats: &[usize]) -> [u32; ARITY] {
    let mut c = [0u32; ARITY];
    for &p in pats {
        for k in 0..ARITY {
            c[k] += hist[p][k];
        }
    }
    c
}

fn gini(c: &[u32; ARITY]) -> f64 {
    let n: u32 = c.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - c.iter().map(|&k| (k as f64 / n).powi(2)).sum::<f64>()
}

fn majority(c: &[u32; ARITY]) -> ActionKind {
    let mut best = 0;
    for k in 1..ARITY {
        if c[k] > c[best] {
            best = k;
        }
    }
    ActionKind::ALL[best]
}

fn grow(hist: &[[u32; ARITY]], pats: Vec<usize>, depth: usize, nodes: &mut Vec<Node>) -> usize {
    let here = nodes.len();
    let c = counts(hist, &pats);
    nodes.push(Node::Leaf(majority(&c)));
    let total: u32 = c.iter().sum();
    if depth >= MAX_DEPTH || total == 0 || gini(&c) == 0.0 {
        return here;
    }
    let parent = gini(&c) * total as f64;
    let mut best: Option<(usize, f64)> = None;
    for input in 0..ARITY {
        let (one, zero): (Vec<usize>, Vec<usize>) = pats.iter().partition(|&&p| p >> input & 1 == 1);
        if one.is_empty() || zero.is_empty() {
            continue;
        }
        let (c1, c0) = (counts(hist, &one), counts(hist, &zero));
        let w = |c: &[u32; ARITY]| gini(c) * c.iter().sum::<u32>() as f64;
        let cost = w(&c1) + w(&c0);
        if cost < parent - 1e-9 && best.is_none_or(|(_, b)| cost < b - 1e-9) {
            best = Some((input, cost));
        }
    }
    let Some((input, _)) = best else { return here };
    let (one, zero): (Vec<usize>, Vec<usize>) = pats.iter().partition(|&&p| p >> input & 1 == 1);
    let z = grow(hist, zero, depth + 1, nodes);
    let o = grow(hist, one, depth + 1, nodes);
    nodes[here] = Node::Split { input, zero: z, one: o };
    here
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_one_hot_mapping() {
        let data: Vec<(Votes, ActionKind)> = (0..8).flat_map(|k| vec![(1u8 << k, ActionKind::ALL[k]); 5]).collect();
        let c = Combiner::learn(&data);
        for k in 0..8 {
            assert_eq!(c.predict(1 << k), ActionKind::ALL[k]);
        }
        assert!(c.depth() <= MAX_DEPTH);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let data = vec![(0u8, ActionKind::Shoot), (0u8, ActionKind::MoveE)];
        assert_eq!(Combiner::learn(&data).predict(0), ActionKind::MoveE);
        assert_eq!(Combiner::learn(&[]).predict(3), ActionKind::Noop);
    }
}
