//! Favorable orders: orders an expression can deliver more cheaply than by
//! sorting its unordered result.
//!
//! `afm` approximates the minimal favorable order set bottom-up from access
//! paths and operator order propagation, without costing anything.
//! `exact_ford_min` computes the real thing from brute-force plan costs and
//! is only usable on tiny schemas.

use crate::catalog::BlockConfig;
use crate::cost::{coe_partial, CostParams};
use crate::error::{Error, Result};
use crate::expr::{NodeId, NodeKind, QueryTree};
use crate::oracle::{BruteCost, OracleGuard};
use crate::order::{all_orders, AttrSet, SortOrder};

/// Sets above this size are reported by [`FavorableOrders::oversized`].
pub const LARGE_SET: usize = 64;

/// One favorable order set per query tree node. The empty order is never
/// stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FavorableOrders {
    sets: Vec<Vec<SortOrder>>,
}

impl FavorableOrders {
    /// Approximate minimal favorable orders of every node.
    pub fn afm(tree: &QueryTree) -> Result<FavorableOrders> {
        let mut sets: Vec<Vec<SortOrder>> = Vec::with_capacity(tree.nodes.len());
        // post-order ids: children are always computed first
        for node in &tree.nodes {
            let set = match &node.kind {
                NodeKind::Scan { .. } => {
                    let paths = tree.access_paths(node.id, &BlockConfig::default())?;
                    dedup(paths.iter().map(|p| p.order().clone()))
                }
                NodeKind::Select { input, .. } => sets[*input].clone(),
                NodeKind::Project { input, cols } => afm_wrt(&sets[*input], cols),
                NodeKind::Join {
                    left, right, join_attrs, ..
                } => {
                    let t = dedup(sets[*left].iter().chain(sets[*right].iter()).cloned());
                    let extended = std::iter::once(SortOrder::empty())
                        .chain(t.iter().cloned())
                        .map(|o| o.lcp_with_set(join_attrs).extend_canonical(join_attrs));
                    dedup(t.iter().cloned().chain(extended))
                }
                NodeKind::GroupBy { input, keys } => dedup(
                    std::iter::once(SortOrder::empty())
                        .chain(sets[*input].iter().cloned())
                        .map(|o| o.lcp_with_set(keys).extend_canonical(keys)),
                ),
            };
            sets.push(set);
        }
        Ok(FavorableOrders { sets })
    }

    /// Exact minimal favorable orders of every node, from brute-force costs.
    pub fn exact(tree: &QueryTree, params: &CostParams, guard: &OracleGuard) -> Result<FavorableOrders> {
        let mut brute = BruteCost::new(tree, params, guard)?;
        let sets = (0..tree.nodes.len())
            .map(|id| exact_ford_min_with(&mut brute, tree, id, params, guard))
            .collect::<Result<_>>()?;
        Ok(FavorableOrders { sets })
    }

    pub fn from_sets(sets: Vec<Vec<SortOrder>>) -> FavorableOrders {
        FavorableOrders {
            sets: sets.into_iter().map(|s| dedup(s.into_iter())).collect(),
        }
    }

    pub fn of(&self, id: NodeId) -> &[SortOrder] {
        &self.sets[id]
    }

    /// `{o ∧ s : o ∈ afm(id)}` without the empty order.
    pub fn wrt(&self, id: NodeId, s: &AttrSet) -> Vec<SortOrder> {
        afm_wrt(&self.sets[id], s)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Nodes whose set grew beyond [`LARGE_SET`] orders.
    pub fn oversized(&self) -> Vec<NodeId> {
        (0..self.sets.len()).filter(|&i| self.sets[i].len() > LARGE_SET).collect()
    }
}

/// Keep the first occurrence of each order; drop the empty order.
fn dedup(orders: impl Iterator<Item = SortOrder>) -> Vec<SortOrder> {
    let mut out: Vec<SortOrder> = Vec::new();
    for o in orders {
        if !o.is_empty() && !out.contains(&o) {
            out.push(o);
        }
    }
    out
}

pub fn afm_wrt(orders: &[SortOrder], s: &AttrSet) -> Vec<SortOrder> {
    dedup(orders.iter().map(|o| o.lcp_with_set(s)))
}

/// Exact minimal favorable order set of node `id`.
pub fn exact_ford_min(tree: &QueryTree, id: NodeId, params: &CostParams, guard: &OracleGuard) -> Result<Vec<SortOrder>> {
    let mut brute = BruteCost::new(tree, params, guard)?;
    exact_ford_min_with(&mut brute, tree, id, params, guard)
}

fn same_cost(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn exact_ford_min_with(
    brute: &mut BruteCost,
    tree: &QueryTree,
    id: NodeId,
    params: &CostParams,
    guard: &OracleGuard,
) -> Result<Vec<SortOrder>> {
    let node = tree.node(id);
    let width = node.schema.len();
    if width > guard.max_attrs {
        return Err(Error::TooLarge {
            what: format!("schema of {}", node.label()),
            size: width as u64,
            limit: guard.max_attrs as u64,
        });
    }
    let unordered = brute.cbp(id, &SortOrder::empty())?;
    let mut ford = Vec::new();
    let mut cost = Vec::new();
    for o in all_orders(&node.schema) {
        let c = brute.cbp(id, &o)?;
        let by_sorting = unordered + coe_partial(&node.stats, &SortOrder::empty(), &o, params)?;
        if by_sorting - c > 1e-9 * by_sorting.max(1.0) {
            ford.push(o);
            cost.push(c);
        }
    }

    // covers[x] lists the members of ford that choosing x accounts for
    let n = ford.len();
    let mut covers = vec![Vec::new(); n];
    for x in 0..n {
        for o in 0..n {
            let ok = x == o
                || (ford[x].is_prefix_of(&ford[o])
                    && same_cost(cost[x] + coe_partial(&node.stats, &ford[x], &ford[o], params)?, cost[o]))
                || (ford[o].is_prefix_of(&ford[x]) && same_cost(cost[x], cost[o]));
            if ok {
                covers[x].push(o);
            }
        }
    }

    // greedy cover; ties go to the earliest candidate (shorter, then lexicographic)
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ford[a].len().cmp(&ford[b].len()).then_with(|| ford[a].cmp(&ford[b])));
    let mut covered = vec![false; n];
    let mut chosen = Vec::new();
    while covered.iter().any(|c| !c) {
        let gain = |x: usize| covers[x].iter().filter(|&&o| !covered[o]).count();
        let top = order.iter().map(|&x| gain(x)).max().unwrap_or(0);
        let best = order.iter().copied().find(|&x| gain(x) == top).expect("some candidate has the top gain");
        for &o in &covers[best] {
            covered[o] = true;
        }
        chosen.push(ford[best].clone());
    }
    chosen.sort();
    Ok(chosen)
}
