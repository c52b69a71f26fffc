//! Control-flow graph construction and longest-path selection.
//!
//! Paths are what the executor runs: loops are ignored (paths never revisit a
//! node), and for dense graphs the longest path is approximated by repeated
//! self-avoiding random walks.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::listing::FunctionListing;
use crate::x86::{OpClass, Operand};

/// A maximal run of instructions with no internal control transfer.
/// `range` indexes into the owning listing's instruction vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicBlock {
    pub start_addr: u32,
    pub range: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cfg {
    pub blocks: Vec<BasicBlock>,
    pub edges: BTreeSet<(usize, usize)>,
    pub entry: usize,
    pub returns: BTreeSet<usize>,
}

impl Cfg {
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.blocks.len()];
        for &(a, b) in &self.edges {
            succ[a].push(b);
        }
        succ
    }

    /// A graph without instruction backing, for tests and path search.
    pub fn synthetic(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        returns: impl IntoIterator<Item = usize>,
    ) -> Cfg {
        Cfg {
            blocks: (0..n)
                .map(|i| BasicBlock {
                    start_addr: i as u32,
                    range: (i, i),
                })
                .collect(),
            edges: edges.into_iter().collect(),
            entry: 0,
            returns: returns.into_iter().collect(),
        }
    }
}

/// Where a branch immediate lands relative to the function.
enum BranchTarget {
    Block(usize),
    Outside,
}

pub fn build_cfg(f: &FunctionListing) -> Result<Cfg> {
    if f.instructions.is_empty() {
        return Err(Error::contract("cannot build a CFG for an empty function"));
    }
    let n = f.instructions.len();
    let addr_to_idx: BTreeMap<u32, usize> = f
        .instructions
        .iter()
        .enumerate()
        .map(|(i, ins)| (ins.addr, i))
        .collect();
    let (lo_addr, hi_addr) = f.addr_span();

    let classify_target = |ins_addr: u32, target: u32| -> Result<BranchTarget> {
        if let Some(&idx) = addr_to_idx.get(&target) {
            return Ok(BranchTarget::Block(idx));
        }
        if (lo_addr..=hi_addr).contains(&target) {
            return Err(Error::validation(format!(
                "branch at 0x{ins_addr:X} targets 0x{target:X}, \
                 which is not on an instruction boundary"
            )));
        }
        Ok(BranchTarget::Outside)
    };

    // Leaders: function entry, branch targets, and whatever follows a
    // terminator. Calls do not end blocks.
    let mut leaders = BTreeSet::from([0usize]);
    for (i, ins) in f.instructions.iter().enumerate() {
        match ins.op_class {
            OpClass::Branch => {
                if let Some(target) = ins.operands.first().and_then(Operand::as_imm) {
                    if let BranchTarget::Block(t) = classify_target(ins.addr, target)? {
                        leaders.insert(t);
                    }
                }
                if i + 1 < n {
                    leaders.insert(i + 1);
                }
            }
            OpClass::Return if i + 1 < n => {
                leaders.insert(i + 1);
            }
            _ => {}
        }
    }

    let starts: Vec<usize> = leaders.into_iter().collect();
    let blocks: Vec<BasicBlock> = starts
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let end = starts.get(k + 1).copied().unwrap_or(n);
            BasicBlock {
                start_addr: f.instructions[s].addr,
                range: (s, end),
            }
        })
        .collect();
    let block_of: BTreeMap<usize, usize> = starts.iter().enumerate().map(|(b, &s)| (s, b)).collect();

    let mut edges = BTreeSet::new();
    let mut returns = BTreeSet::new();
    for (b, block) in blocks.iter().enumerate() {
        let last = &f.instructions[block.range.1 - 1];
        match last.op_class {
            OpClass::Return => {
                returns.insert(b);
            }
            OpClass::Branch => {
                let conditional = last.is_conditional_branch();
                // Indirect branches have no immediate and no static successor.
                if let Some(target) = last.operands.first().and_then(Operand::as_imm) {
                    match classify_target(last.addr, target)? {
                        BranchTarget::Block(t) => {
                            edges.insert((b, block_of[&t]));
                        }
                        BranchTarget::Outside => {
                            // Tail jump out of the function: this block is a
                            // function exit.
                            returns.insert(b);
                        }
                    }
                }
                if conditional && b + 1 < blocks.len() {
                    edges.insert((b, b + 1));
                }
            }
            // Block ended because the next instruction is a leader.
            _ => {
                if b + 1 < blocks.len() {
                    edges.insert((b, b + 1));
                }
            }
        }
    }

    Ok(Cfg {
        blocks,
        edges,
        entry: 0,
        returns,
    })
}

/// Result of path selection. `degraded` is set when no return node was
/// reachable and the path falls back to ending at an arbitrary sink.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectedPath {
    pub nodes: Vec<usize>,
    pub degraded: bool,
}

/// Edge-count threshold above which exhaustive search gives way to random
/// walks.
pub const EDGE_LIMIT: usize = 100;
/// Number of self-avoiding random walks tried in the dense regime.
pub const WALK_TRIALS: usize = 30;
/// Safety valve for exhaustive enumeration on cyclic graphs.
pub const ENUMERATION_CAP: usize = 100_000;

/// Pick the longest loop-free entry-to-return path.
///
/// Up to [`EDGE_LIMIT`] edges the result is exact (topological DP on acyclic
/// graphs, capped enumeration otherwise); beyond that, the longest of
/// [`WALK_TRIALS`] seeded self-avoiding walks wins. Deterministic for a given
/// seed.
pub fn select_path(g: &Cfg, rng_seed: u64) -> SelectedPath {
    let succ = sorted_successors(g);
    if g.edges.len() <= EDGE_LIMIT {
        if let Some(order) = topological_order(&succ) {
            return longest_path_dag(g, &succ, &order);
        }
        if let Some(best) = enumerate_longest(g, &succ, &g.returns) {
            return SelectedPath {
                nodes: best,
                degraded: false,
            };
        }
        // Either the cap was hit (fall back to walks) or no return node is
        // reachable (fall back to sinks).
        if let Some(best) = enumerate_longest(g, &succ, &sink_nodes(&succ)) {
            return SelectedPath {
                nodes: best,
                degraded: true,
            };
        }
    }
    random_walk_path(g, &succ, rng_seed)
}

fn sorted_successors(g: &Cfg) -> Vec<Vec<usize>> {
    let mut succ = g.successors();
    for s in &mut succ {
        s.sort_unstable();
        s.dedup();
    }
    succ
}

fn sink_nodes(succ: &[Vec<usize>]) -> BTreeSet<usize> {
    let sinks: BTreeSet<usize> = (0..succ.len()).filter(|&v| succ[v].is_empty()).collect();
    if sinks.is_empty() {
        // Fully cyclic graph: accept any endpoint.
        (0..succ.len()).collect()
    } else {
        sinks
    }
}

fn topological_order(succ: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = succ.len();
    let mut indegree = vec![0usize; n];
    for s in succ {
        for &w in s {
            indegree[w] += 1;
        }
    }
    let mut queue: std::collections::VecDeque<usize> =
        (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &w in &succ[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Exact longest path on an acyclic graph; every path there is simple, so the
/// DP answer equals the enumeration answer without the exponential blowup.
fn longest_path_dag(g: &Cfg, succ: &[Vec<usize>], order: &[usize]) -> SelectedPath {
    let n = succ.len();
    let mut dist = vec![0usize; n]; // path length in nodes; 0 = unreachable
    let mut parent = vec![usize::MAX; n];
    dist[g.entry] = 1;
    for &v in order {
        if dist[v] == 0 {
            continue;
        }
        for &w in &succ[v] {
            if dist[v] + 1 > dist[w] {
                dist[w] = dist[v] + 1;
                parent[w] = v;
            }
        }
    }
    let pick_best = |targets: &BTreeSet<usize>| -> Option<usize> {
        targets
            .iter()
            .copied()
            .filter(|&r| dist[r] > 0)
            .max_by_key(|&r| (dist[r], std::cmp::Reverse(r)))
    };
    let (end, degraded) = match pick_best(&g.returns) {
        Some(r) => (r, false),
        None => {
            let sinks = sink_nodes(succ);
            match pick_best(&sinks) {
                Some(s) => (s, true),
                None => (g.entry, true),
            }
        }
    };
    let mut nodes = vec![end];
    let mut cur = end;
    while parent[cur] != usize::MAX {
        cur = parent[cur];
        nodes.push(cur);
    }
    nodes.reverse();
    SelectedPath { nodes, degraded }
}

/// Depth-first enumeration of simple entry-to-target paths, keeping the
/// longest. Returns `None` if the expansion cap is hit or no target is
/// reachable.
fn enumerate_longest(g: &Cfg, succ: &[Vec<usize>], targets: &BTreeSet<usize>) -> Option<Vec<usize>> {
    let n = succ.len();
    let mut best: Option<Vec<usize>> = None;
    let mut path = vec![g.entry];
    let mut on_path = vec![false; n];
    on_path[g.entry] = true;
    // Per-frame iterator position into succ[node].
    let mut cursor = vec![0usize];
    let mut expansions = 0usize;

    let consider = |best: &mut Option<Vec<usize>>, path: &[usize]| {
        if best.as_ref().map_or(true, |b| path.len() > b.len()) {
            *best = Some(path.to_vec());
        }
    };
    if targets.contains(&g.entry) {
        consider(&mut best, &path);
    }

    while let Some(frame) = cursor.last_mut() {
        let v = *path.last().expect("path tracks cursor");
        if let Some(&w) = succ[v].get(*frame) {
            *frame += 1;
            if on_path[w] {
                continue;
            }
            expansions += 1;
            if expansions > ENUMERATION_CAP {
                return None;
            }
            path.push(w);
            on_path[w] = true;
            cursor.push(0);
            if targets.contains(&w) {
                consider(&mut best, &path);
            }
        } else {
            cursor.pop();
            on_path[v] = false;
            path.pop();
        }
    }
    best
}

/// Longest of `WALK_TRIALS` self-avoiding random walks. A trial ends on
/// reaching a return node, or aborts where no unvisited successor remains.
fn random_walk_path(g: &Cfg, succ: &[Vec<usize>], rng_seed: u64) -> SelectedPath {
    let mut rng = StdRng::seed_from_u64(rng_seed);
    let n = succ.len();
    let mut best: Option<Vec<usize>> = None;
    let mut best_is_return = false;
    for _ in 0..WALK_TRIALS {
        let mut visited = vec![false; n];
        let mut path = vec![g.entry];
        visited[g.entry] = true;
        let mut cur = g.entry;
        let reached = loop {
            if g.returns.contains(&cur) {
                break true;
            }
            let open: Vec<usize> = succ[cur].iter().copied().filter(|&w| !visited[w]).collect();
            if open.is_empty() {
                break false;
            }
            cur = open[rng.random_range(0..open.len())];
            visited[cur] = true;
            path.push(cur);
        };
        let better = match (&best, reached) {
            (None, _) => true,
            (Some(_), true) if !best_is_return => true,
            (Some(b), r) if r == best_is_return => path.len() > b.len(),
            _ => false,
        };
        if better {
            best_is_return = reached;
            best = Some(path);
        }
    }
    SelectedPath {
        nodes: best.unwrap_or_else(|| vec![g.entry]),
        degraded: !best_is_return,
    }
}
