//! Monte Carlo Tree Search over the nine-parameter configuration space.
//!
//! One iteration is the usual select / expand / rollout / back-propagate loop.
//! Open-loop trees store only action keys and re-simulate from the root every
//! iteration; closed-loop trees store the state that created each node.

use rand::seq::IndexedRandom;
use rand::Rng as _;

use super::params::{FinalPolicy, MctsParams, OpponentTree, TreePolicy};
use super::{random_action, Budget};
use crate::error::{Error, Result};
use crate::game::{Action, GameState, MAX_PLAYERS};
use crate::rng::Rng;

const NO_CHILD: u32 = u32::MAX;

/// UCT: `q + k * sqrt(ln(total) / n)`.
pub fn uct_value(q: f64, n: u32, total: u32, k: f64) -> f64 {
    q + k * ((total as f64).ln() / n as f64).sqrt()
}

/// AlphaZero-style exploration: `q + k * sqrt(total) / (1 + n)`.
pub fn alpha_value(q: f64, n: u32, total: u32, k: f64) -> f64 {
    q + k * (total as f64).sqrt() / (1.0 + n as f64)
}

/// Statistics for one action out of a node.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub key: Action,
    pub n: u32,
    /// Sum of backed-up values, per player, from that player's perspective
    /// under the configured opponent model.
    pub sum: [f64; MAX_PLAYERS],
    /// EXP3 cumulative importance-weighted payoff in `[0, 1]` units.
    pub gain: [f64; MAX_PLAYERS],
    pub child: u32,
}

impl Edge {
    fn new(key: Action, child: u32) -> Edge {
        Edge { key, n: 0, sum: [0.0; MAX_PLAYERS], gain: [0.0; MAX_PLAYERS], child }
    }

    /// Mean value for `player`.
    pub fn q(&self, player: usize) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum[player] / self.n as f64
        }
    }

    pub fn child(&self) -> Option<usize> {
        (self.child != NO_CHILD).then_some(self.child as usize)
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub depth: u32,
    /// Iterations that passed through this node.
    pub visits: u32,
    /// Iterations that stopped here (expansion leaf, depth limit or terminal).
    pub leaf_visits: u32,
    /// Sorted by key.
    pub edges: Vec<Edge>,
    state: Option<GameState>,
    legal: Vec<Action>,
}

impl Node {
    fn new(depth: u32, state: Option<GameState>) -> Node {
        let legal = match &state {
            Some(s) if !s.is_terminal() => s.legal_actions().unwrap_or_default(),
            _ => Vec::new(),
        };
        Node { depth, visits: 0, leaf_visits: 0, edges: Vec::new(), state, legal }
    }

    /// Visits that went on to take an action: always `sum(n(a))`.
    pub fn decision_visits(&self) -> u32 {
        self.visits - self.leaf_visits
    }

    pub fn edge(&self, key: Action) -> Option<&Edge> {
        self.edges.binary_search_by_key(&key, |e| e.key).ok().map(|i| &self.edges[i])
    }

    fn insert_edge(&mut self, key: Action, child: u32) {
        let at = self.edges.binary_search_by_key(&key, |e| e.key).unwrap_err();
        self.edges.insert(at, Edge::new(key, child));
    }

    /// Splits `legal` (sorted) into untried actions and indices of tried edges.
    fn partition(&self, legal: &[Action]) -> (Vec<Action>, Vec<usize>) {
        let mut untried = Vec::new();
        let mut tried = Vec::with_capacity(self.edges.len());
        let mut i = 0;
        for &a in legal {
            while i < self.edges.len() && self.edges[i].key < a {
                i += 1;
            }
            if i < self.edges.len() && self.edges[i].key == a {
                tried.push(i);
            } else {
                untried.push(a);
            }
        }
        (untried, tried)
    }
}

#[derive(Debug, Clone)]
pub struct SearchTree {
    pub nodes: Vec<Node>,
    pub root_player: usize,
    pub iterations: u32,
}

impl SearchTree {
    fn add(&mut self, node: Node) -> u32 {
        self.nodes.push(node);
        (self.nodes.len() - 1) as u32
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }
}

/// Picks the edge to descend through among `candidates` (indices into
/// `edges`, all visited at least once). Returns the index and, for the
/// sampling policies, the probability it was chosen with.
fn select_from(
    edges: &[Edge],
    candidates: &[usize],
    actor: usize,
    params: &MctsParams,
    rng: &mut Rng,
) -> (usize, Option<f64>) {
    let total: u32 = candidates.iter().map(|&i| edges[i].n).sum();
    match params.tree_policy {
        TreePolicy::Ucb | TreePolicy::Alpha => {
            let value = |e: &Edge| match params.tree_policy {
                TreePolicy::Ucb => uct_value(e.q(actor), e.n, total, params.k),
                _ => alpha_value(e.q(actor), e.n, total, params.k),
            };
            let mut best = f64::NEG_INFINITY;
            let mut ties: Vec<usize> = Vec::new();
            for &i in candidates {
                let v = value(&edges[i]);
                if v > best {
                    best = v;
                    ties.clear();
                    ties.push(i);
                } else if v == best {
                    ties.push(i);
                }
            }
            (*ties.choose(rng).expect("at least one candidate"), None)
        }
        TreePolicy::Exp3 => {
            let max_gain = candidates.iter().map(|&i| edges[i].gain[actor]).fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = candidates.iter().map(|&i| (edges[i].gain[actor] - max_gain).exp()).collect();
            sample_mixed(candidates, &weights, params.epsilon, rng)
        }
        TreePolicy::Rm => {
            let node_sum: f64 = candidates.iter().map(|&i| edges[i].sum[actor]).sum();
            let node_mean = node_sum / total.max(1) as f64;
            let regrets: Vec<f64> = candidates.iter().map(|&i| (edges[i].q(actor) - node_mean).max(0.0)).collect();
            if regrets.iter().sum::<f64>() <= 0.0 {
                let pick = rng.random_range(0..candidates.len());
                (candidates[pick], Some(1.0 / candidates.len() as f64))
            } else {
                sample_mixed(candidates, &regrets, params.epsilon, rng)
            }
        }
    }
}

/// Samples from `(1 - eps) * weights / sum + eps / n`.
fn sample_mixed(candidates: &[usize], weights: &[f64], epsilon: f64, rng: &mut Rng) -> (usize, Option<f64>) {
    let n = candidates.len() as f64;
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| (1.0 - epsilon) * w / total + epsilon / n).collect();
    let mut u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    for (k, &p) in probs.iter().enumerate() {
        if u < p {
            return (candidates[k], Some(p));
        }
        u -= p;
    }
    let last = probs.len() - 1;
    (candidates[last], Some(probs[last]))
}

/// Selection step over every edge of a fully expanded node; returns the
/// chosen action with its position among the node's edges.
pub fn select_child(node: &Node, actor: usize, params: &MctsParams, rng: &mut Rng) -> Result<(usize, Action)> {
    if node.edges.is_empty() {
        return Err(Error::NoLegalAction);
    }
    let all: Vec<usize> = (0..node.edges.len()).collect();
    let (i, _) = select_from(&node.edges, &all, actor, params, rng);
    Ok((i, node.edges[i].key))
}

struct Search<'a> {
    params: &'a MctsParams,
    root_player: usize,
    players: usize,
    tree: SearchTree,
}

impl Search<'_> {
    fn advance_opponents(&self, state: &mut GameState, rng: &mut Rng) {
        if self.params.opponent_tree != OpponentTree::SelfOnly {
            return;
        }
        while !state.is_terminal() && state.current_player() != self.root_player {
            let a = random_action(state, rng).expect("non-terminal state has actions");
            state.apply_unchecked(a, rng);
        }
    }

    fn rollout(&self, state: &mut GameState, rng: &mut Rng) {
        for _ in 0..self.params.rollout_length {
            match random_action(state, rng) {
                Some(a) => state.apply_unchecked(a, rng),
                None => break,
            }
        }
    }

    /// Backed-up values from each player's perspective.
    fn evaluate(&self, state: &GameState) -> [f64; MAX_PLAYERS] {
        let scores = state.scores();
        let root = scores[self.root_player];
        let mut out = [0.0; MAX_PLAYERS];
        for (q, v) in out.iter_mut().enumerate().take(self.players) {
            *v = match self.params.opponent_tree {
                OpponentTree::MaxN => scores[q],
                OpponentTree::Paranoid if q != self.root_player => -root,
                _ => root,
            };
        }
        out
    }

    fn backup(&mut self, path: &[(usize, Action, Option<f64>)], leaf: usize, value: &[f64; MAX_PLAYERS]) {
        for &(node, key, prob) in path {
            let n = &mut self.tree.nodes[node];
            n.visits += 1;
            let i = n.edges.binary_search_by_key(&key, |e| e.key).expect("edge on path");
            let e = &mut n.edges[i];
            e.n += 1;
            for q in 0..self.players {
                e.sum[q] += value[q];
                if let Some(p) = prob {
                    e.gain[q] += (value[q] + 1.0) / 2.0 / p;
                }
            }
        }
        let l = &mut self.tree.nodes[leaf];
        l.visits += 1;
        l.leaf_visits += 1;
    }

    fn iterate_open(&mut self, mut state: GameState, rng: &mut Rng) {
        let mut node = 0usize;
        let mut path = Vec::new();
        loop {
            self.advance_opponents(&mut state, rng);
            let depth = self.tree.nodes[node].depth;
            if state.is_terminal() || depth >= self.params.tree_depth {
                break;
            }
            let actor = state.current_player();
            let legal = state.legal_actions().expect("non-terminal");
            let (untried, tried) = self.tree.nodes[node].partition(&legal);
            if let Some(&a) = untried.choose(rng) {
                state.apply_unchecked(a, rng);
                let child = self.tree.add(Node::new(depth + 1, None));
                self.tree.nodes[node].insert_edge(a, child);
                path.push((node, a, None));
                node = child as usize;
                break;
            }
            let (i, prob) = select_from(&self.tree.nodes[node].edges, &tried, actor, self.params, rng);
            let edge = &self.tree.nodes[node].edges[i];
            let (a, child) = (edge.key, edge.child as usize);
            state.apply_unchecked(a, rng);
            path.push((node, a, prob));
            node = child;
        }
        self.rollout(&mut state, rng);
        let value = self.evaluate(&state);
        self.backup(&path, node, &value);
    }

    fn iterate_closed(&mut self, root_state: &GameState, rng: &mut Rng) {
        let mut node = 0usize;
        let mut path = Vec::new();
        let mut state = loop {
            let n = &self.tree.nodes[node];
            let here = if node == 0 { root_state } else { n.state.as_ref().expect("closed-loop node state") };
            if here.is_terminal() || n.depth >= self.params.tree_depth {
                break here.clone();
            }
            let actor = here.current_player();
            let (untried, tried) = if node == 0 {
                n.partition(&here.legal_actions().expect("non-terminal"))
            } else {
                n.partition(&n.legal)
            };
            if let Some(&a) = untried.choose(rng) {
                let mut next = here.clone();
                let depth = n.depth;
                next.apply_unchecked(a, rng);
                self.advance_opponents(&mut next, rng);
                let leaf = next.clone();
                let child = self.tree.add(Node::new(depth + 1, Some(next)));
                self.tree.nodes[node].insert_edge(a, child);
                path.push((node, a, None));
                node = child as usize;
                break leaf;
            }
            let (i, prob) = select_from(&n.edges, &tried, actor, self.params, rng);
            let edge = &n.edges[i];
            path.push((node, edge.key, prob));
            node = edge.child as usize;
        };
        self.rollout(&mut state, rng);
        let value = self.evaluate(&state);
        self.backup(&path, node, &value);
    }

    fn final_choice(&self, root_state: &GameState, rng: &mut Rng) -> Result<Action> {
        let legal = root_state.legal_actions()?;
        let root = self.tree.root();
        let candidates: Vec<&Edge> = root.edges.iter().filter(|e| legal.binary_search(&e.key).is_ok()).collect();
        if candidates.is_empty() {
            return legal.choose(rng).copied().ok_or(Error::NoLegalAction);
        }
        let score = |e: &Edge| match self.params.final_policy {
            FinalPolicy::Robust => e.n as f64,
            FinalPolicy::Simple => e.q(self.root_player),
        };
        let best = candidates.iter().map(|e| score(e)).fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<Action> = candidates.iter().filter(|e| score(e) == best).map(|e| e.key).collect();
        Ok(*ties.choose(rng).expect("non-empty"))
    }
}

/// Runs the search and returns the chosen action together with the tree.
pub fn search_tree(
    root_state: &GameState,
    player: usize,
    params: &MctsParams,
    budget: Budget,
    rng: &mut Rng,
) -> Result<(Action, SearchTree)> {
    let legal = root_state.legal_actions()?;
    if legal.is_empty() {
        return Err(Error::NoLegalAction);
    }
    let mut search = Search {
        params,
        root_player: player,
        players: root_state.player_count(),
        tree: SearchTree { nodes: vec![Node::new(0, None)], root_player: player, iterations: 0 },
    };
    let mut fixed = root_state.clone();
    fixed.redeterminize(player, rng);
    let mut meter = budget.meter();
    while meter.tick() {
        let det = if params.redeterminise {
            let mut d = root_state.clone();
            d.redeterminize(player, rng);
            d
        } else {
            fixed.clone()
        };
        if params.open_loop {
            search.iterate_open(det, rng);
        } else {
            search.iterate_closed(&det, rng);
        }
        search.tree.iterations += 1;
    }
    let choice = search.final_choice(root_state, rng)?;
    Ok((choice, search.tree))
}

/// MCTS decision for `player` from `root_state`.
pub fn mcts_search(
    root_state: &GameState,
    player: usize,
    params: &MctsParams,
    budget: Budget,
    rng: &mut Rng,
) -> Result<Action> {
    search_tree(root_state, player, params, budget, rng).map(|(a, _)| a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn edge(key: u32, n: u32, q: f64) -> Edge {
        let mut e = Edge::new(Action(key), NO_CHILD);
        e.n = n;
        e.sum = [q * n as f64; MAX_PLAYERS];
        e
    }

    fn node(edges: Vec<Edge>) -> Node {
        Node { depth: 0, visits: 0, leaf_visits: 0, edges, state: None, legal: Vec::new() }
    }

    #[test]
    fn uct_examples() {
        assert_eq!(uct_value(0.0, 1, 1, 1.0), 0.0);
        // 0.2 + sqrt(ln(100) / 10)
        assert!((uct_value(0.2, 10, 100, 1.0) - 0.878_614_04).abs() < 1e-4);
        assert_eq!(uct_value(0.37, 4, 50, 0.0), 0.37);
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_value(0.0, 0, 1, 1.0), 1.0);
        assert!((alpha_value(0.5, 3, 16, 0.1) - 0.6).abs() < 1e-12);
        assert_eq!(alpha_value(-0.25, 7, 9, 0.0), -0.25);
    }

    #[test]
    fn ucb_prefers_higher_mean_at_equal_counts() {
        let params = MctsParams { k: 0.1, ..MctsParams::simple() };
        let n = node(vec![edge(0, 50, 0.9), edge(1, 50, 0.1)]);
        let mut rng = stream(1, &[]);
        for _ in 0..200 {
            assert_eq!(select_child(&n, 0, &params, &mut rng).unwrap().1, Action(0));
        }
    }

    #[test]
    fn symmetric_edges_are_picked_evenly() {
        let n = node(vec![edge(0, 5, 0.3), edge(1, 5, 0.3)]);
        let mut rng = stream(2, &[]);
        for policy in [TreePolicy::Ucb, TreePolicy::Alpha, TreePolicy::Exp3, TreePolicy::Rm] {
            let params = MctsParams { tree_policy: policy, ..MctsParams::simple() };
            let zeros = (0..10_000)
                .filter(|_| select_child(&n, 0, &params, &mut rng).unwrap().1 == Action(0))
                .count();
            let freq = zeros as f64 / 10_000.0;
            assert!((freq - 0.5).abs() < 0.05, "{policy:?}: {freq}");
        }
    }

    #[test]
    fn regret_matching_without_positive_regret_is_uniform() {
        // Every edge sits exactly at the node mean.
        let n = node(vec![edge(0, 3, 0.2), edge(1, 3, 0.2), edge(2, 3, 0.2)]);
        let params = MctsParams { tree_policy: TreePolicy::Rm, epsilon: 0.01, ..MctsParams::simple() };
        let mut rng = stream(3, &[]);
        let mut counts = [0usize; 3];
        for _ in 0..9_000 {
            counts[select_child(&n, 0, &params, &mut rng).unwrap().0] += 1;
        }
        for c in counts {
            assert!((c as f64 / 9_000.0 - 1.0 / 3.0).abs() < 0.03, "{counts:?}");
        }
    }

    #[test]
    fn regret_matching_favours_positive_regret() {
        let n = node(vec![edge(0, 5, 0.8), edge(1, 5, -0.8)]);
        let params = MctsParams { tree_policy: TreePolicy::Rm, epsilon: 0.1, ..MctsParams::simple() };
        let mut rng = stream(4, &[]);
        let zeros = (0..4_000).filter(|_| select_child(&n, 0, &params, &mut rng).unwrap().0 == 0).count();
        // (1 - eps) * 1 + eps / 2
        assert!((zeros as f64 / 4_000.0 - 0.95).abs() < 0.02);
    }

    #[test]
    fn scaling_q_and_k_keeps_the_ucb_argmax() {
        let qs = [0.1, 0.4, -0.3, 0.35];
        let ns = [3, 10, 1, 7];
        let total: u32 = ns.iter().sum();
        let argmax = |scale: f64| {
            (0..4)
                .map(|i| uct_value(qs[i] * scale, ns[i], total, 0.7 * scale))
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b })
                .0
        };
        for scale in [0.01, 0.5, 3.0, 40.0] {
            assert_eq!(argmax(scale), argmax(1.0));
        }
    }
}
