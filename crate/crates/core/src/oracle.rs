//! Brute-force references used to judge the heuristics.
//!
//! Nothing here calls into favorable-order, optimizer or refinement code;
//! each oracle recomputes its answer from the order algebra, the cost model
//! and the statistics alone.

use std::collections::HashMap;

use crate::cost::{coe_partial, hash_group_by_cost, hash_join_cost, merge_join_cost, CostParams};
use crate::error::{Error, Result};
use crate::expr::{NodeId, NodeKind, QueryTree};
use crate::extsort::Tuple;
use crate::order::{permutations, SortOrder};
use crate::refine::LabeledTree;

pub const GUARD_OVERRIDE_ENV: &str = "ORDOPT_GUARD_OVERRIDE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleGuard {
    /// Largest attribute set whose permutations are enumerated.
    pub max_attrs: usize,
    pub max_nodes: usize,
    pub max_rows: u64,
    /// Largest number of (node, permutation) pairs the tree oracle visits.
    pub max_tree_work: u64,
}

impl Default for OracleGuard {
    fn default() -> Self {
        OracleGuard {
            max_attrs: 6,
            max_nodes: 9,
            max_rows: 1_000_000,
            max_tree_work: 10_000_000,
        }
    }
}

impl OracleGuard {
    pub fn unlimited() -> Self {
        OracleGuard {
            max_attrs: usize::MAX,
            max_nodes: usize::MAX,
            max_rows: u64::MAX,
            max_tree_work: u64::MAX,
        }
    }

    /// Default limits unless `ORDOPT_GUARD_OVERRIDE=1` is set.
    pub fn from_env() -> Self {
        if std::env::var(GUARD_OVERRIDE_ENV).is_ok_and(|v| v == "1") {
            OracleGuard::unlimited()
        } else {
            OracleGuard::default()
        }
    }

    pub(crate) fn check(what: impl Into<String>, size: u64, limit: u64) -> Result<()> {
        if size > limit {
            return Err(Error::TooLarge {
                what: what.into(),
                size,
                limit,
            });
        }
        Ok(())
    }
}

/// Exhaustive cost of the best plan for `(node, order)` goals: every
/// permutation of every join and grouping attribute set is tried.
pub struct BruteCost<'a> {
    tree: &'a QueryTree,
    params: &'a CostParams,
    memo: HashMap<(NodeId, SortOrder), f64>,
}

impl<'a> BruteCost<'a> {
    pub fn new(tree: &'a QueryTree, params: &'a CostParams, guard: &OracleGuard) -> Result<Self> {
        params.validate()?;
        for n in &tree.nodes {
            let set = match &n.kind {
                NodeKind::Join { join_attrs, .. } => join_attrs,
                NodeKind::GroupBy { keys, .. } => keys,
                _ => continue,
            };
            OracleGuard::check(
                format!("attribute set of {}", n.label()),
                set.len() as u64,
                guard.max_attrs as u64,
            )?;
        }
        Ok(BruteCost {
            tree,
            params,
            memo: HashMap::new(),
        })
    }

    pub fn cbp(&mut self, id: NodeId, o: &SortOrder) -> Result<f64> {
        let key = (id, o.clone());
        if let Some(&c) = self.memo.get(&key) {
            return Ok(c);
        }
        let c = self.compute(id, o)?;
        self.memo.insert(key, c);
        Ok(c)
    }

    fn compute(&mut self, id: NodeId, o: &SortOrder) -> Result<f64> {
        let tree = self.tree;
        let params = self.params;
        let node = tree.node(id);
        let stats = &node.stats;
        let mut best = f64::INFINITY;

        for shorter in o.strict_prefixes() {
            best = best.min(self.cbp(id, &shorter)? + coe_partial(stats, &shorter, o, params)?);
        }
        match &node.kind {
            NodeKind::Scan { .. } => {
                for path in tree.access_paths(id, &params.cfg)? {
                    best = best.min(path.blocks() + coe_partial(stats, path.order(), o, params)?);
                }
            }
            NodeKind::Select { input, .. } | NodeKind::Project { input, .. } => {
                best = best.min(self.cbp(*input, o)?);
            }
            NodeKind::Join {
                left, right, join_attrs, ..
            } => {
                let (l, r) = (tree.node(*left).stats.clone(), tree.node(*right).stats.clone());
                let merge = merge_join_cost(l.rows, r.rows, params);
                for p in permutations(join_attrs) {
                    let c = self.cbp(*left, &p)? + self.cbp(*right, &p)? + merge + coe_partial(stats, &p, o, params)?;
                    best = best.min(c);
                }
                if params.hashjoin_enabled {
                    let eps = SortOrder::empty();
                    let c = self.cbp(*left, &eps)?
                        + self.cbp(*right, &eps)?
                        + hash_join_cost(l.blocks(&params.cfg), r.blocks(&params.cfg), params)
                        + coe_partial(stats, &eps, o, params)?;
                    best = best.min(c);
                }
            }
            NodeKind::GroupBy { input, keys } => {
                for p in permutations(keys) {
                    best = best.min(self.cbp(*input, &p)? + coe_partial(stats, &p, o, params)?);
                }
                if params.hashjoin_enabled {
                    let eps = SortOrder::empty();
                    let input_blocks = tree.node(*input).stats.blocks(&params.cfg);
                    let c = self.cbp(*input, &eps)?
                        + hash_group_by_cost(input_blocks, params)
                        + coe_partial(stats, &eps, o, params)?;
                    best = best.min(c);
                }
            }
        }
        Ok(best)
    }
}

/// Cost of the best plan for the whole query, by exhaustive search.
pub fn brute_best_plan(tree: &QueryTree, params: &CostParams, guard: &OracleGuard) -> Result<f64> {
    let mut b = BruteCost::new(tree, params, guard)?;
    b.cbp(tree.root, tree.required_order())
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product::<u64>().max(1)
}

/// Largest achievable sum over edges of the common-prefix length of the
/// permutations chosen at both ends.
///
/// Exact dynamic program over (node, permutation) pairs; the benefit is a sum
/// of per-edge terms, so each subtree's best value for a fixed permutation at
/// its root is independent of the rest of the tree.
pub fn brute_tree_benefit(t: &LabeledTree, guard: &OracleGuard) -> Result<u64> {
    let n = t.len();
    OracleGuard::check("tree nodes", n as u64, guard.max_nodes as u64)?;
    let mut work = 0u64;
    for v in 0..n {
        OracleGuard::check("node attribute set", t.set(v).len() as u64, guard.max_attrs as u64)?;
        let own = factorial(t.set(v).len());
        work = work.saturating_add(own);
        if let Some(p) = t.parent(v) {
            work = work.saturating_add(own.saturating_mul(factorial(t.set(p).len())));
        }
    }
    OracleGuard::check("tree search work", work, guard.max_tree_work)?;
    if n == 0 {
        return Ok(0);
    }

    let perms: Vec<Vec<SortOrder>> = (0..n).map(|v| permutations(t.set(v))).collect();
    let mut best: Vec<Vec<u64>> = perms.iter().map(|p| vec![0; p.len()]).collect();
    for v in t.post_order() {
        for c in t.children(v) {
            for (i, pv) in perms[v].iter().enumerate() {
                let gain = perms[c]
                    .iter()
                    .enumerate()
                    .map(|(j, pc)| best[c][j] + pv.lcp_len(pc) as u64)
                    .max()
                    .unwrap_or(0);
                best[v][i] += gain;
            }
        }
    }
    Ok(best[t.root()].iter().copied().max().unwrap_or(0))
}

/// Trusted in-memory sort on the full key vector.
pub fn reference_sort(input: impl IntoIterator<Item = Tuple>, guard: &OracleGuard) -> Result<Vec<Tuple>> {
    let mut v: Vec<Tuple> = input.into_iter().collect();
    OracleGuard::check("reference sort rows", v.len() as u64, guard.max_rows)?;
    v.sort_by(|a, b| a.keys.cmp(&b.keys));
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{BlockConfig, Catalog};
    use crate::expr::parse_query;
    use crate::order::AttrSet;

    fn set(s: &[&str]) -> AttrSet {
        s.iter().copied().collect()
    }

    /// Enumerate every assignment outright.
    fn naive_benefit(t: &LabeledTree) -> u64 {
        let perms: Vec<Vec<SortOrder>> = (0..t.len()).map(|v| permutations(t.set(v))).collect();
        let mut idx = vec![0usize; t.len()];
        let mut best = 0;
        loop {
            let total: u64 = (0..t.len())
                .filter_map(|v| t.parent(v).map(|p| perms[v][idx[v]].lcp_len(&perms[p][idx[p]]) as u64))
                .sum();
            best = best.max(total);
            let mut i = 0;
            loop {
                if i == t.len() {
                    return best;
                }
                idx[i] += 1;
                if idx[i] < perms[i].len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn tree_benefit_examples() {
        let g = OracleGuard::default();
        let edge = LabeledTree::new(vec![set(&["a", "b"]), set(&["a", "b"])], &[(0, 1)]).unwrap();
        assert_eq!(brute_tree_benefit(&edge, &g).unwrap(), 2);
        let star = LabeledTree::new(
            vec![set(&["x"]), set(&["a"]), set(&["b"]), set(&["c"])],
            &[(0, 1), (0, 2), (1, 3)],
        )
        .unwrap();
        assert_eq!(brute_tree_benefit(&star, &g).unwrap(), 0);
    }

    #[test]
    fn tree_dp_matches_naive_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pool = ["a", "b", "c", "d"];
        for _ in 0..200 {
            let n = rng.gen_range(1..=5);
            let sets: Vec<AttrSet> = (0..n)
                .map(|_| {
                    let k = rng.gen_range(1..=3);
                    let mut s = AttrSet::new();
                    while s.len() < k {
                        s.insert(pool[rng.gen_range(0..pool.len())].into());
                    }
                    s
                })
                .collect();
            let mut edges = Vec::new();
            let mut kids = vec![0; n];
            for c in 1..n {
                let p = loop {
                    let p = rng.gen_range(0..c);
                    if kids[p] < 2 {
                        break p;
                    }
                };
                kids[p] += 1;
                edges.push((p, c));
            }
            let t = LabeledTree::new(sets, &edges).unwrap();
            assert_eq!(brute_tree_benefit(&t, &OracleGuard::default()).unwrap(), naive_benefit(&t));
        }
    }

    #[test]
    fn tree_guard_fails_loudly() {
        let big: AttrSet = (0..7).map(|i| format!("a{i}")).map(crate::order::Attribute::new).collect();
        let t = LabeledTree::new(vec![big.clone(), big], &[(0, 1)]).unwrap();
        assert!(matches!(
            brute_tree_benefit(&t, &OracleGuard::default()),
            Err(Error::TooLarge { .. })
        ));
        assert_eq!(brute_tree_benefit(&t, &OracleGuard::unlimited()).unwrap(), 7);
    }

    #[test]
    fn reference_sort_examples() {
        let g = OracleGuard::default();
        assert!(reference_sort(Vec::new(), &g).unwrap().is_empty());
        let sorted = vec![Tuple::new(vec![1, 2], 0), Tuple::new(vec![1, 3], 0), Tuple::new(vec![2, 0], 0)];
        assert_eq!(reference_sort(sorted.clone(), &g).unwrap(), sorted);
        let tiny = OracleGuard {
            max_rows: 2,
            ..OracleGuard::default()
        };
        assert!(reference_sort(sorted, &tiny).is_err());
    }

    #[test]
    fn symmetric_join_costs_the_same_for_every_permutation() {
        let cat = Catalog::from_json(
            r#"{"relations":[
                {"name":"r","row_count":100000,"tuple_bytes":40,"columns":["a","b","c"],"distincts":{"a":10,"b":10,"c":10}},
                {"name":"s","row_count":100000,"tuple_bytes":40,"columns":["a","b","c"],"distincts":{"a":10,"b":10,"c":10}}
            ]}"#,
        )
        .unwrap();
        let q = parse_query(
            br#"{"expr":{"op":"join","on":["a","b","c"],"left":{"op":"scan","relation":"r"},"right":{"op":"scan","relation":"s"}}}"#,
            &cat,
        )
        .unwrap();
        let t = QueryTree::build(&cat, &q).unwrap();
        let params = CostParams {
            cfg: BlockConfig {
                block_bytes: 4096,
                memory_blocks: 100,
            },
            ..CostParams::default()
        };
        let mut b = BruteCost::new(&t, &params, &OracleGuard::default()).unwrap();
        let costs: Vec<f64> = permutations(&set(&["a", "b", "c"]))
            .iter()
            .map(|p| b.cbp(t.root, p).unwrap())
            .collect();
        assert!(costs.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-9));
    }
}
