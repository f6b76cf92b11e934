//! Memoizing plan search over `(node, required order)` goals.
//!
//! For a goal `(e, o)` the candidates are:
//! * a sort enforcer over the goal `(e, o')` for every strict prefix `o'` of
//!   `o` (a full sort when `o'` is empty, a partial sort otherwise);
//! * every native operator for `e`, followed by a partial or full sort when
//!   its output order does not already satisfy `o`. Merge joins and sort
//!   group-bys try each order of the node's interesting order set.
//!
//! Ties within a relative tolerance go to the smaller produced order and then
//! to the plan with fewer nodes.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::cost::{coe_partial, hash_group_by_cost, hash_join_cost, merge_join_cost, table_scan_cost, CostParams};
use crate::error::{Error, Result};
use crate::expr::{parse_query, AccessPath, NodeId, NodeKind, QueryTree};
use crate::favorable::FavorableOrders;
use crate::oracle::OracleGuard;
use crate::order::{permutations, AttrSet, SortOrder};

const TIE_TOLERANCE: f64 = 1e-9;

/// How a merge join or sort group-by picks the orders it tries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Heuristic {
    /// The canonical permutation only.
    Arbitrary,
    /// One order per attribute, starting with that attribute.
    Postgres,
    /// Orders derived from the inputs' favorable orders and the required order.
    Favorable,
    /// Every permutation.
    Exhaustive,
}

impl Heuristic {
    pub const ALL: [Heuristic; 4] = [
        Heuristic::Arbitrary,
        Heuristic::Postgres,
        Heuristic::Favorable,
        Heuristic::Exhaustive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Heuristic::Arbitrary => "arbitrary",
            Heuristic::Postgres => "postgres",
            Heuristic::Favorable => "favorable",
            Heuristic::Exhaustive => "exhaustive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum PhysicalOp {
    TableScan {
        relation: String,
    },
    CoveringIndexScan {
        relation: String,
        index_key: SortOrder,
    },
    Filter {
        selectivity: f64,
    },
    Project {
        cols: AttrSet,
    },
    FullSort {
        target: SortOrder,
    },
    /// `input_order` is the part of `target` the input already satisfies.
    PartialSort {
        input_order: SortOrder,
        target: SortOrder,
    },
    MergeJoin {
        join_attrs: AttrSet,
        order: SortOrder,
        full_outer: bool,
    },
    HashJoin {
        join_attrs: AttrSet,
        full_outer: bool,
    },
    SortGroupBy {
        keys: AttrSet,
        order: SortOrder,
    },
    HashGroupBy {
        keys: AttrSet,
    },
}

impl PhysicalOp {
    pub fn name(&self) -> &'static str {
        match self {
            PhysicalOp::TableScan { .. } => "TableScan",
            PhysicalOp::CoveringIndexScan { .. } => "CoveringIndexScan",
            PhysicalOp::Filter { .. } => "Filter",
            PhysicalOp::Project { .. } => "Project",
            PhysicalOp::FullSort { .. } => "FullSort",
            PhysicalOp::PartialSort { .. } => "PartialSort",
            PhysicalOp::MergeJoin { .. } => "MergeJoin",
            PhysicalOp::HashJoin { .. } => "HashJoin",
            PhysicalOp::SortGroupBy { .. } => "SortGroupBy",
            PhysicalOp::HashGroupBy { .. } => "HashGroupBy",
        }
    }

    pub fn is_sort(&self) -> bool {
        matches!(self, PhysicalOp::FullSort { .. } | PhysicalOp::PartialSort { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalPlan {
    #[serde(flatten)]
    pub op: PhysicalOp,
    /// Query tree node this operator computes.
    pub node: NodeId,
    pub produced_order: SortOrder,
    pub local_cost: f64,
    /// Cost of this operator plus its whole subtree.
    pub cost: f64,
    pub est_rows: f64,
    pub est_blocks: f64,
    /// Operators in this subtree, including this one.
    pub size: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Arc<PhysicalPlan>>,
}

impl PhysicalPlan {
    /// Pre-order walk.
    pub fn walk(&self) -> Vec<&PhysicalPlan> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }

    /// Merge join orders by query node.
    pub fn merge_orders(&self) -> BTreeMap<NodeId, SortOrder> {
        self.walk()
            .into_iter()
            .filter_map(|p| match &p.op {
                PhysicalOp::MergeJoin { order, .. } => Some((p.node, order.clone())),
                _ => None,
            })
            .collect()
    }

    /// Sort group-by orders by query node.
    pub fn group_orders(&self) -> BTreeMap<NodeId, SortOrder> {
        self.walk()
            .into_iter()
            .filter_map(|p| match &p.op {
                PhysicalOp::SortGroupBy { order, .. } => Some((p.node, order.clone())),
                _ => None,
            })
            .collect()
    }

    pub fn explain(&self) -> String {
        let mut s = String::new();
        self.explain_into(&mut s, 0);
        s
    }

    fn explain_into(&self, s: &mut String, depth: usize) {
        let detail = match &self.op {
            PhysicalOp::TableScan { relation } => relation.clone(),
            PhysicalOp::CoveringIndexScan { relation, index_key } => format!("{relation} index {index_key}"),
            PhysicalOp::Filter { selectivity } => format!("selectivity {selectivity}"),
            PhysicalOp::Project { cols } => format!("{cols:?}"),
            PhysicalOp::FullSort { target } => format!("to {target}"),
            PhysicalOp::PartialSort { input_order, target } => format!("{input_order} to {target}"),
            PhysicalOp::MergeJoin {
                order, full_outer, ..
            } => format!("{}on {order}", if *full_outer { "full outer " } else { "" }),
            PhysicalOp::HashJoin {
                join_attrs, full_outer, ..
            } => format!("{}on {join_attrs:?}", if *full_outer { "full outer " } else { "" }),
            PhysicalOp::SortGroupBy { order, .. } => format!("by {order}"),
            PhysicalOp::HashGroupBy { keys } => format!("by {keys:?}"),
        };
        let _ = writeln!(
            s,
            "{:indent$}{} {}  order={} cost={:.3} total={:.3} rows={:.0}",
            "",
            self.op.name(),
            detail,
            self.produced_order,
            self.local_cost,
            self.cost,
            self.est_rows,
            indent = 2 * depth
        );
        for c in &self.children {
            c.explain_into(s, depth + 1);
        }
    }
}

/// `a` is preferred to `b`.
fn better(a: &PhysicalPlan, b: &PhysicalPlan) -> bool {
    let tol = TIE_TOLERANCE * a.cost.abs().max(b.cost.abs()).max(1.0);
    if a.cost < b.cost - tol {
        return true;
    }
    if a.cost > b.cost + tol {
        return false;
    }
    (&a.produced_order, a.size) < (&b.produced_order, b.size)
}

/// Drop orders that are strict prefixes of other members, then extend each
/// survivor to a permutation of `s` with the canonical order of the missing
/// attributes.
pub fn prune_and_extend(t: Vec<SortOrder>, s: &AttrSet) -> Vec<SortOrder> {
    let mut out: Vec<SortOrder> = Vec::new();
    for o in t.iter().filter(|o| !o.is_empty()) {
        if t.iter().any(|other| o.is_strict_prefix_of(other)) {
            continue;
        }
        let full = o.extend_canonical(s);
        if !out.contains(&full) {
            out.push(full);
        }
    }
    if out.is_empty() {
        out.push(s.canonical_permutation());
    }
    out
}

pub struct Optimizer<'a> {
    tree: &'a QueryTree,
    params: &'a CostParams,
    heuristic: Heuristic,
    favorable: FavorableOrders,
    imposed: BTreeMap<NodeId, SortOrder>,
    guard: OracleGuard,
    memo: HashMap<(NodeId, SortOrder), Arc<PhysicalPlan>>,
}

impl<'a> Optimizer<'a> {
    pub fn new(tree: &'a QueryTree, params: &'a CostParams, heuristic: Heuristic) -> Result<Self> {
        params.validate()?;
        Ok(Optimizer {
            tree,
            params,
            heuristic,
            favorable: FavorableOrders::afm(tree)?,
            imposed: BTreeMap::new(),
            guard: OracleGuard::from_env(),
            memo: HashMap::new(),
        })
    }

    /// Use `sets` in place of the approximate favorable orders.
    pub fn with_favorable(mut self, sets: FavorableOrders) -> Self {
        self.favorable = sets;
        self.memo.clear();
        self
    }

    /// Fix the order used by the merge join or sort group-by at each listed
    /// node.
    pub fn impose(mut self, orders: BTreeMap<NodeId, SortOrder>) -> Self {
        self.imposed = orders;
        self.memo.clear();
        self
    }

    pub fn favorable(&self) -> &FavorableOrders {
        &self.favorable
    }

    /// Orders tried by the merge join or sort group-by at `id` for goal order
    /// `o`.
    pub fn interesting_orders(&self, id: NodeId, o: &SortOrder) -> Result<Vec<SortOrder>> {
        let node = self.tree.node(id);
        let (s, inputs) = match &node.kind {
            NodeKind::Join {
                left, right, join_attrs, ..
            } => (join_attrs, vec![*left, *right]),
            NodeKind::GroupBy { input, keys } => (keys, vec![*input]),
            _ => return Ok(vec![]),
        };
        if let Some(p) = self.imposed.get(&id) {
            return Ok(vec![p.clone()]);
        }
        Ok(match self.heuristic {
            Heuristic::Arbitrary => vec![s.canonical_permutation()],
            Heuristic::Postgres => s
                .iter()
                .map(|a| {
                    let mut rest = s.clone();
                    rest.remove(a);
                    SortOrder::new(vec![a.clone()])
                        .expect("single attribute")
                        .extend_canonical(&rest)
                })
                .collect(),
            Heuristic::Favorable => {
                let mut t: Vec<SortOrder> = inputs.iter().flat_map(|&i| self.favorable.wrt(i, s)).collect();
                t.push(o.lcp_with_set(s));
                prune_and_extend(t, s)
            }
            Heuristic::Exhaustive => {
                OracleGuard::check(
                    format!("exhaustive orders of {}", node.label()),
                    s.len() as u64,
                    self.guard.max_attrs as u64,
                )?;
                permutations(s)
            }
        })
    }

    /// Best plan for the query's root goal.
    pub fn optimize(&mut self) -> Result<Arc<PhysicalPlan>> {
        let o = self.tree.required_order().clone();
        self.best(self.tree.root, &o)
    }

    pub fn best(&mut self, id: NodeId, o: &SortOrder) -> Result<Arc<PhysicalPlan>> {
        let key = (id, o.clone());
        if let Some(p) = self.memo.get(&key) {
            return Ok(p.clone());
        }
        let node = self.tree.node(id);
        if let Some(a) = o.attrs().iter().find(|a| !node.schema.contains(a)) {
            return Err(Error::Unsatisfiable(format!("{o} needs `{a}`, which {} does not produce", node.label())));
        }
        let mut best: Option<Arc<PhysicalPlan>> = None;
        let mut offer = |cand: Arc<PhysicalPlan>| {
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        };

        for shorter in o.strict_prefixes() {
            let below = self.best(id, &shorter)?;
            offer(self.enforce(below, o)?);
        }
        for native in self.natives(id, o)? {
            offer(self.enforce(native, o)?);
        }
        let best = best.expect("every goal has at least one candidate");
        self.memo.insert(key, best.clone());
        Ok(best)
    }

    fn make(&self, op: PhysicalOp, id: NodeId, produced: SortOrder, local: f64, children: Vec<Arc<PhysicalPlan>>) -> Arc<PhysicalPlan> {
        let stats = &self.tree.node(id).stats;
        Arc::new(PhysicalPlan {
            op,
            node: id,
            produced_order: produced,
            local_cost: local,
            cost: local + children.iter().map(|c| c.cost).sum::<f64>(),
            est_rows: stats.rows,
            est_blocks: stats.blocks(&self.params.cfg),
            size: 1 + children.iter().map(|c| c.size).sum::<usize>(),
            children,
        })
    }

    /// Sort `plan`'s output into `o` unless it already satisfies it.
    fn enforce(&self, plan: Arc<PhysicalPlan>, o: &SortOrder) -> Result<Arc<PhysicalPlan>> {
        if o.is_prefix_of(&plan.produced_order) {
            return Ok(plan);
        }
        let id = plan.node;
        let known = o.lcp(&plan.produced_order);
        let cost = coe_partial(&self.tree.node(id).stats, &known, o, self.params)?;
        let op = if known.is_empty() {
            PhysicalOp::FullSort { target: o.clone() }
        } else {
            PhysicalOp::PartialSort {
                input_order: known,
                target: o.clone(),
            }
        };
        Ok(self.make(op, id, o.clone(), cost, vec![plan]))
    }

    fn natives(&mut self, id: NodeId, o: &SortOrder) -> Result<Vec<Arc<PhysicalPlan>>> {
        let tree = self.tree;
        let params = self.params;
        let node = tree.node(id);
        let mut out = Vec::new();
        match &node.kind {
            NodeKind::Scan { relation, .. } => {
                for path in tree.access_paths(id, &params.cfg)? {
                    let op = match &path {
                        AccessPath::Table { .. } => PhysicalOp::TableScan {
                            relation: relation.clone(),
                        },
                        AccessPath::CoveringIndex { order, .. } => PhysicalOp::CoveringIndexScan {
                            relation: relation.clone(),
                            index_key: order.clone(),
                        },
                    };
                    out.push(self.make(op, id, path.order().clone(), table_scan_cost(path.blocks()), vec![]));
                }
            }
            NodeKind::Select { input, selectivity } => {
                let child = self.best(*input, o)?;
                let produced = child.produced_order.clone();
                out.push(self.make(
                    PhysicalOp::Filter {
                        selectivity: *selectivity,
                    },
                    id,
                    produced,
                    0.0,
                    vec![child],
                ));
            }
            NodeKind::Project { input, cols } => {
                let child = self.best(*input, o)?;
                let produced = child.produced_order.lcp_with_set(cols);
                out.push(self.make(PhysicalOp::Project { cols: cols.clone() }, id, produced, 0.0, vec![child]));
            }
            NodeKind::Join {
                left,
                right,
                join_attrs,
                full_outer,
            } => {
                let (l_stats, r_stats) = (&tree.node(*left).stats, &tree.node(*right).stats);
                let merge = merge_join_cost(l_stats.rows, r_stats.rows, params);
                for p in self.interesting_orders(id, o)? {
                    let l = self.best(*left, &p)?;
                    let r = self.best(*right, &p)?;
                    let op = PhysicalOp::MergeJoin {
                        join_attrs: join_attrs.clone(),
                        order: p.clone(),
                        full_outer: *full_outer,
                    };
                    out.push(self.make(op, id, p, merge, vec![l, r]));
                }
                if params.hashjoin_enabled {
                    let eps = SortOrder::empty();
                    let l = self.best(*left, &eps)?;
                    let r = self.best(*right, &eps)?;
                    let cost = hash_join_cost(l_stats.blocks(&params.cfg), r_stats.blocks(&params.cfg), params);
                    let op = PhysicalOp::HashJoin {
                        join_attrs: join_attrs.clone(),
                        full_outer: *full_outer,
                    };
                    out.push(self.make(op, id, eps, cost, vec![l, r]));
                }
            }
            NodeKind::GroupBy { input, keys } => {
                for p in self.interesting_orders(id, o)? {
                    let child = self.best(*input, &p)?;
                    let op = PhysicalOp::SortGroupBy {
                        keys: keys.clone(),
                        order: p.clone(),
                    };
                    out.push(self.make(op, id, p, 0.0, vec![child]));
                }
                if params.hashjoin_enabled {
                    let eps = SortOrder::empty();
                    let child = self.best(*input, &eps)?;
                    let cost = hash_group_by_cost(tree.node(*input).stats.blocks(&params.cfg), params);
                    out.push(self.make(PhysicalOp::HashGroupBy { keys: keys.clone() }, id, eps, cost, vec![child]));
                }
            }
        }
        Ok(out)
    }
}

pub fn optimize(tree: &QueryTree, params: &CostParams, heuristic: Heuristic) -> Result<Arc<PhysicalPlan>> {
    Optimizer::new(tree, params, heuristic)?.optimize()
}

/// A plan together with everything needed to re-derive it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanDocument {
    pub catalog: Catalog,
    pub query: serde_json::Value,
    pub cost_params: CostParams,
    pub heuristic: Heuristic,
    pub refined: bool,
    pub plan: PhysicalPlan,
}

impl PlanDocument {
    pub fn new(tree: &QueryTree, params: &CostParams, heuristic: Heuristic, refined: bool, plan: &PhysicalPlan) -> Self {
        PlanDocument {
            catalog: tree.catalog.clone(),
            query: serde_json::to_value(&tree.query).expect("query serializes"),
            cost_params: params.clone(),
            heuristic,
            refined,
            plan: plan.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<PlanDocument> {
        let doc: PlanDocument = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        doc.catalog.validate()?;
        doc.cost_params.validate()?;
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan document serializes")
    }

    /// Rebuild the annotated query tree the plan refers to.
    pub fn tree(&self) -> Result<QueryTree> {
        let q = parse_query(self.query.to_string().as_bytes(), &self.catalog)?;
        QueryTree::build(&self.catalog, &q)
    }
}
