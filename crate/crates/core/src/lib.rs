//! Sort-order-aware cost-based optimization of select-project-join-group-by
//! queries, and an external sort that exploits partially sorted input.

pub mod catalog;
pub mod cli;
pub mod cost;
pub mod error;
pub mod expr;
pub mod extsort;
pub mod favorable;
pub mod optimizer;
pub mod oracle;
pub mod order;
pub mod refine;

pub use catalog::{BlockConfig, Catalog, CatalogRelation, ExprStats, IndexDef, IndexKind};
pub use cost::CostParams;
pub use error::{Error, OrderError, Result};
pub use expr::{parse_query, LogicalExpr, QuerySpec, QueryTree};
pub use extsort::{gen_segmented_input, sort_mrs, sort_srs, SortMetrics, SortSpec, Tuple};
pub use favorable::FavorableOrders;
pub use optimizer::{optimize, Heuristic, Optimizer, PhysicalOp, PhysicalPlan, PlanDocument};
pub use oracle::OracleGuard;
pub use order::{AttrSet, Attribute, SortOrder};
pub use refine::{path_order, refine_plan, tree_approx, LabeledTree};
