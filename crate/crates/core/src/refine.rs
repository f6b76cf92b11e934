//! Coordinated choice of merge-join orders across a join tree.
//!
//! Each join carries a set of attributes whose position in its order is
//! still free. Adjacent joins profit when their orders share a long common
//! prefix, since the upper join's input then only needs a partial sort.
//! Maximizing the total shared prefix length is solved exactly on paths by
//! dynamic programming and within a factor of two on binary trees.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::cost::CostParams;
use crate::error::{Error, Result};
use crate::expr::{NodeId, NodeKind, QueryTree};
use crate::favorable::FavorableOrders;
use crate::optimizer::{Heuristic, Optimizer, PhysicalPlan};
use crate::order::{AttrSet, Attribute, SortOrder};

/// A rooted binary tree whose nodes carry attribute sets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTree {
    sets: Vec<AttrSet>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
}

impl LabeledTree {
    /// `edges` are `(parent, child)` pairs.
    pub fn new(sets: Vec<AttrSet>, edges: &[(usize, usize)]) -> Result<LabeledTree> {
        let n = sets.len();
        if n == 0 {
            return Err(Error::validation("tree", "a tree needs at least one node"));
        }
        if edges.len() != n - 1 {
            return Err(Error::validation("tree", format!("{n} nodes need {} edges, got {}", n - 1, edges.len())));
        }
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for &(p, c) in edges {
            if p >= n || c >= n || p == c {
                return Err(Error::validation("tree", format!("bad edge ({p}, {c})")));
            }
            if parent[c].is_some() {
                return Err(Error::validation("tree", format!("node {c} has two parents")));
            }
            parent[c] = Some(p);
            children[p].push(c);
            if children[p].len() > 2 {
                return Err(Error::validation("tree", format!("node {p} has more than two children")));
            }
        }
        let roots: Vec<usize> = (0..n).filter(|&v| parent[v].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::validation("tree", "edges do not form a single tree"));
        }
        let t = LabeledTree {
            sets,
            parent,
            children,
            root: roots[0],
        };
        if t.post_order().len() != n {
            return Err(Error::validation("tree", "edges do not form a single tree"));
        }
        Ok(t)
    }

    /// A path `0 - 1 - ... - n-1` rooted at node 0.
    pub fn path(sets: Vec<AttrSet>) -> Result<LabeledTree> {
        let edges: Vec<(usize, usize)> = (1..sets.len()).map(|i| (i - 1, i)).collect();
        LabeledTree::new(sets, &edges)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn set(&self, v: usize) -> &AttrSet {
        &self.sets[v]
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        self.children[v].clone()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.len()).filter_map(|v| self.parent[v].map(|p| (p, v))).collect()
    }

    /// Children before parents.
    pub fn post_order(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![(self.root, false)];
        let mut seen = vec![false; self.len()];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                out.push(v);
                continue;
            }
            if seen[v] {
                continue;
            }
            seen[v] = true;
            stack.push((v, true));
            for &c in self.children[v].iter().rev() {
                stack.push((c, false));
            }
        }
        out
    }

    fn depths(&self) -> Vec<usize> {
        let mut d = vec![0; self.len()];
        for v in self.post_order().into_iter().rev() {
            for &c in &self.children[v] {
                d[c] = d[v] + 1;
            }
        }
        d
    }

    /// Nodes in path order when no node has more than two neighbours.
    fn as_path(&self) -> Option<Vec<usize>> {
        let degree = |v: usize| self.children[v].len() + usize::from(self.parent[v].is_some());
        if (0..self.len()).any(|v| degree(v) > 2) {
            return None;
        }
        let start = (0..self.len()).find(|&v| degree(v) <= 1)?;
        let mut out = vec![start];
        let mut prev = None;
        let mut cur = start;
        loop {
            let next = self.children[cur]
                .iter()
                .copied()
                .chain(self.parent[cur])
                .find(|&x| Some(x) != prev);
            match next {
                Some(x) => {
                    out.push(x);
                    prev = Some(cur);
                    cur = x;
                }
                None => return Some(out),
            }
        }
    }
}

/// Sum over edges of the common prefix length of the two endpoint orders.
pub fn benefit(t: &LabeledTree, a: &[SortOrder]) -> u64 {
    t.edges().iter().map(|&(p, c)| a[p].lcp_len(&a[c]) as u64).sum()
}

/// Benefit-maximal permutations for a path of attribute sets.
///
/// `best[i][j]` is the optimum for segment `i..=j`: the best split into two
/// sub-segments plus the attributes common to the whole segment, which are
/// placed as a shared prefix of every order in it. Ties pick the smallest
/// split point.
pub fn path_order(sets: &[AttrSet]) -> Vec<SortOrder> {
    let n = sets.len();
    if n == 0 {
        return vec![];
    }
    let mut commons = vec![vec![AttrSet::new(); n]; n];
    let mut best = vec![vec![0u64; n]; n];
    let mut split = vec![vec![0usize; n]; n];
    for i in 0..n {
        commons[i][i] = sets[i].clone();
    }
    for len in 1..n {
        for i in 0..n - len {
            let j = i + len;
            let mut k_best = i;
            for k in i + 1..j {
                if best[i][k] + best[k + 1][j] > best[i][k_best] + best[k_best + 1][j] {
                    k_best = k;
                }
            }
            commons[i][j] = commons[i][k_best].intersection(&commons[k_best + 1][j]);
            best[i][j] = best[i][k_best] + best[k_best + 1][j] + commons[i][j].len() as u64;
            split[i][j] = k_best;
        }
    }

    let mut out: Vec<Vec<Attribute>> = vec![Vec::new(); n];
    let mut stack = vec![(0, n - 1, AttrSet::new())];
    while let Some((i, j, placed)) = stack.pop() {
        // attributes already placed by an enclosing segment are skipped
        let add = commons[i][j].difference(&placed).canonical_permutation();
        for o in out.iter_mut().take(j + 1).skip(i) {
            o.extend(add.attrs().iter().cloned());
        }
        if i < j {
            let placed = placed.union(&commons[i][j]);
            let m = split[i][j];
            stack.push((m + 1, j, placed.clone()));
            stack.push((i, m, placed));
        }
    }
    out.into_iter()
        .map(|v| SortOrder::new(v).expect("segment attributes are placed once"))
        .collect()
}

/// Permutations for a binary tree with at least half the optimal benefit.
///
/// Edges leaving nodes at even depth form one class and the remaining edges
/// the other; each class is a set of vertex-disjoint paths of at most three
/// nodes, solved exactly. Nodes outside every path take their canonical
/// permutation. The class with the larger total benefit wins. A tree that is
/// itself a path is solved exactly in one piece.
pub fn tree_approx(t: &LabeledTree) -> Vec<SortOrder> {
    if let Some(path) = t.as_path() {
        let sets: Vec<AttrSet> = path.iter().map(|&v| t.set(v).clone()).collect();
        let mut out = vec![SortOrder::empty(); t.len()];
        for (v, o) in path.into_iter().zip(path_order(&sets)) {
            out[v] = o;
        }
        return out;
    }
    let depth = t.depths();
    let side = |parity: usize| {
        let mut a: Vec<SortOrder> = (0..t.len()).map(|v| t.set(v).canonical_permutation()).collect();
        for v in (0..t.len()).filter(|&v| depth[v] % 2 == parity) {
            let kids = t.children(v);
            if kids.is_empty() {
                continue;
            }
            let mut path = vec![kids[0], v];
            path.extend(kids.get(1));
            let sets: Vec<AttrSet> = path.iter().map(|&x| t.set(x).clone()).collect();
            for (x, o) in path.into_iter().zip(path_order(&sets)) {
                a[x] = o;
            }
        }
        a
    };
    let odd = side(0);
    let even = side(1);
    if benefit(t, &even) > benefit(t, &odd) {
        even
    } else {
        odd
    }
}

/// Outcome of reworking a plan's merge-join orders.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub plan: Arc<PhysicalPlan>,
    /// The reworked plan replaced the original.
    pub accepted: bool,
    pub orders_before: BTreeMap<NodeId, SortOrder>,
    pub orders_after: BTreeMap<NodeId, SortOrder>,
    /// Sum of common prefix lengths over adjacent merge joins.
    pub benefit_before: u64,
    pub benefit_after: u64,
}

/// Adjacency of merge joins: each join's nearest merge-join ancestor,
/// looking through selections and projections only.
fn join_parents(tree: &QueryTree, joins: &BTreeMap<NodeId, SortOrder>) -> BTreeMap<NodeId, Option<NodeId>> {
    let mut up: Vec<Option<NodeId>> = vec![None; tree.nodes.len()];
    for n in &tree.nodes {
        for c in n.children() {
            up[c] = Some(n.id);
        }
    }
    joins
        .keys()
        .map(|&j| {
            let mut cur = up[j];
            let parent = loop {
                match cur {
                    Some(x) if joins.contains_key(&x) => break Some(x),
                    Some(x) if matches!(tree.node(x).kind, NodeKind::Select { .. } | NodeKind::Project { .. }) => {
                        cur = up[x]
                    }
                    _ => break None,
                }
            };
            (j, parent)
        })
        .collect()
}

/// Total common prefix length over adjacent merge joins.
pub fn join_tree_benefit(tree: &QueryTree, orders: &BTreeMap<NodeId, SortOrder>) -> u64 {
    join_parents(tree, orders)
        .iter()
        .filter_map(|(c, p)| p.map(|p| orders[c].lcp_len(&orders[&p]) as u64))
        .sum()
}

/// Rework the free attributes of every merge join so adjacent joins agree on
/// longer prefixes, then re-plan with those orders imposed. The original plan
/// is kept unless the reworked one costs no more.
pub fn refine_plan(
    tree: &QueryTree,
    params: &CostParams,
    heuristic: Heuristic,
    plan: &Arc<PhysicalPlan>,
) -> Result<Refinement> {
    let before = plan.merge_orders();
    let benefit_before = join_tree_benefit(tree, &before);
    let unchanged = Refinement {
        plan: plan.clone(),
        accepted: false,
        orders_before: before.clone(),
        orders_after: before.clone(),
        benefit_before,
        benefit_after: benefit_before,
    };
    if before.len() < 2 {
        return Ok(unchanged);
    }

    let afm = FavorableOrders::afm(tree)?;
    let mut fixed: BTreeMap<NodeId, SortOrder> = BTreeMap::new();
    let mut free: BTreeMap<NodeId, AttrSet> = BTreeMap::new();
    for (&j, p) in &before {
        let NodeKind::Join { left, right, .. } = tree.node(j).kind else {
            unreachable!("merge joins compute join nodes")
        };
        let mut q = SortOrder::empty();
        for cand in afm.of(left).iter().chain(afm.of(right)) {
            let (l, best) = (p.lcp_len(cand), p.lcp_len(&q));
            if l > best || (l == best && l > 0 && cand < &q) {
                q = cand.clone();
            }
        }
        let known = p.lcp(&q);
        free.insert(j, p.attr_set().difference(&known.attr_set()));
        fixed.insert(j, known);
    }
    if free.values().all(|f| f.is_empty()) {
        return Ok(unchanged);
    }

    // one labeled tree per connected group of merge joins
    let parents = join_parents(tree, &before);
    let mut after = before.clone();
    for (&root, _) in parents.iter().filter(|(_, p)| p.is_none()) {
        let mut members = vec![root];
        let mut i = 0;
        while i < members.len() {
            let m = members[i];
            members.extend(parents.iter().filter(|(_, p)| **p == Some(m)).map(|(&c, _)| c));
            i += 1;
        }
        let index: BTreeMap<NodeId, usize> = members.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        let sets = members.iter().map(|m| free[m].clone()).collect();
        let edges: Vec<(usize, usize)> = members
            .iter()
            .filter_map(|m| parents[m].map(|p| (index[&p], index[m])))
            .collect();
        let t = LabeledTree::new(sets, &edges)?;
        for (m, r) in members.iter().zip(tree_approx(&t)) {
            after.insert(*m, fixed[m].concat(&r)?);
        }
    }

    if after == before {
        return Ok(unchanged);
    }
    let refined = Optimizer::new(tree, params, heuristic)?.impose(after.clone()).optimize()?;
    if refined.cost > plan.cost {
        return Ok(unchanged);
    }
    let orders_after = refined.merge_orders();
    Ok(Refinement {
        benefit_after: join_tree_benefit(tree, &orders_after),
        plan: refined,
        accepted: true,
        orders_before: before,
        orders_after,
        benefit_before,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_tree_benefit, OracleGuard};

    fn set(s: &[&str]) -> AttrSet {
        s.iter().copied().collect()
    }

    #[test]
    fn benefit_examples() {
        let t = LabeledTree::path(vec![set(&["a", "b"]), set(&["a", "b"])]).unwrap();
        let ab = SortOrder::of(&["a", "b"]);
        assert_eq!(benefit(&t, &[ab.clone(), ab]), 2);
        let t = LabeledTree::path(vec![set(&["a"]), set(&["b"])]).unwrap();
        assert_eq!(benefit(&t, &[SortOrder::of(&["a"]), SortOrder::of(&["b"])]), 0);
        let t = LabeledTree::path(vec![set(&["a"]); 3]).unwrap();
        assert_eq!(benefit(&t, &vec![SortOrder::of(&["a"]); 3]), 2);
    }

    #[test]
    fn path_order_examples() {
        let sets = vec![set(&["a", "b"]), set(&["a", "b"])];
        let p = path_order(&sets);
        assert_eq!(p[0], p[1]);
        assert_eq!(benefit(&LabeledTree::path(sets).unwrap(), &p), 2);

        let sets = vec![set(&["a", "b", "c"]), set(&["b", "c", "d"]), set(&["c", "d", "e"])];
        let p = path_order(&sets);
        let t = LabeledTree::path(sets).unwrap();
        assert_eq!(benefit(&t, &p), brute_tree_benefit(&t, &OracleGuard::default()).unwrap());
        for (o, s) in p.iter().zip([set(&["a", "b", "c"]), set(&["b", "c", "d"]), set(&["c", "d", "e"])]) {
            assert_eq!(o.attr_set(), s);
        }
    }

    #[test]
    fn nested_segments_do_not_disturb_disjoint_ones() {
        // (0,1) share {a,b}; (2,3) share {c,d}; everyone shares nothing
        let sets = vec![set(&["a", "b"]), set(&["a", "b", "c"]), set(&["c", "d"]), set(&["c", "d"])];
        let p = path_order(&sets);
        let t = LabeledTree::path(sets).unwrap();
        assert_eq!(benefit(&t, &p), brute_tree_benefit(&t, &OracleGuard::default()).unwrap());
    }

    #[test]
    fn tree_approx_examples() {
        let single = LabeledTree::path(vec![set(&["b", "a"])]).unwrap();
        assert_eq!(tree_approx(&single), vec![SortOrder::of(&["a", "b"])]);

        let t = LabeledTree::new(
            vec![
                set(&["a", "b"]),
                set(&["a", "c"]),
                set(&["b", "c"]),
                set(&["a", "c"]),
                set(&["b", "c"]),
            ],
            &[(0, 1), (0, 2), (1, 3), (2, 4)],
        )
        .unwrap();
        let a = tree_approx(&t);
        for (v, o) in a.iter().enumerate() {
            assert_eq!(&o.attr_set(), t.set(v));
        }
        let opt = brute_tree_benefit(&t, &OracleGuard::default()).unwrap();
        assert!(2 * benefit(&t, &a) >= opt);
    }

    #[test]
    fn malformed_trees_are_rejected() {
        let s = || vec![set(&["a"]); 3];
        assert!(LabeledTree::new(s(), &[(0, 1)]).is_err());
        assert!(LabeledTree::new(s(), &[(0, 1), (2, 1)]).is_err());
        assert!(LabeledTree::new(s(), &[(0, 1), (1, 0)]).is_err());
        assert!(LabeledTree::new(vec![set(&["a"]); 4], &[(0, 1), (0, 2), (0, 3)]).is_err());
        assert!(LabeledTree::new(vec![], &[]).is_err());
    }
}
