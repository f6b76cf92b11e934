//! C ABI over the `ordopt` optimizer and sort simulator.
//!
//! Every fallible entry point returns an [`OrdoptStatus`]. On failure the
//! message is kept per thread and read with [`ordopt_last_error_message`].
//! Strings handed out by the library are released with
//! [`ordopt_string_free`], query handles with [`ordopt_query_free`].
//! Panics never cross the boundary; they surface as
//! [`OrdoptStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use ordopt::extsort::SortStream;
use ordopt::{
    gen_segmented_input, parse_query, refine_plan, sort_mrs, sort_srs, BlockConfig, Catalog, CostParams, Error,
    FavorableOrders, Heuristic, Optimizer, PlanDocument, QueryTree, SortMetrics, SortSpec, Tuple,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrdoptStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed JSON or a document that fails validation.
    InvalidInput = 3,
    /// Cost or block parameters out of range.
    Config = 4,
    /// A search or oracle exceeded its size guard.
    Guard = 5,
    /// No plan satisfies the requested order.
    Unsatisfiable = 6,
    /// Sort input was not ordered on the declared prefix.
    UnsortedInput = 7,
    InvalidArgument = 8,
    Panic = 9,
}

/// Values accepted wherever a heuristic is passed as `uint32_t`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrdoptHeuristic {
    Arbitrary = 0,
    Postgres = 1,
    Favorable = 2,
    Exhaustive = 3,
}

/// A parsed catalog and query with its cost parameters.
pub struct OrdoptQuery {
    tree: QueryTree,
    params: CostParams,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OrdoptSortConfig {
    /// Sort on key positions `0..target_keys`.
    pub target_keys: u32,
    /// Input is ordered on key positions `0..known_prefix`; 0 selects the
    /// plain run-generation sort, anything larger the segment-wise sort.
    pub known_prefix: u32,
    pub payload_bytes: u32,
    pub block_bytes: u64,
    pub memory_blocks: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OrdoptSortMetrics {
    pub run_blocks_written: u64,
    pub run_blocks_read: u64,
    pub comparisons: u64,
    pub positions_inspected: u64,
    pub tuples_in_before_first_out: u64,
    pub runs_generated: u64,
    pub segments: u64,
    pub intermediate_merges: u64,
    pub max_fan_in: u64,
    pub tuples_out: u64,
}

impl From<SortMetrics> for OrdoptSortMetrics {
    fn from(m: SortMetrics) -> Self {
        OrdoptSortMetrics {
            run_blocks_written: m.run_blocks_written,
            run_blocks_read: m.run_blocks_read,
            comparisons: m.comparisons,
            positions_inspected: m.positions_inspected,
            tuples_in_before_first_out: m.tuples_in_before_first_out,
            runs_generated: m.runs_generated,
            segments: m.segments,
            intermediate_merges: m.intermediate_merges,
            max_fan_in: m.max_fan_in,
            tuples_out: m.tuples_out,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(OrdoptStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::TooLarge { .. } => OrdoptStatus::Guard,
            Error::Config(_) => OrdoptStatus::Config,
            Error::Unsatisfiable(_) => OrdoptStatus::Unsatisfiable,
            Error::UnsortedPrefix { .. } => OrdoptStatus::UnsortedInput,
            _ => OrdoptStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: OrdoptStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_last_error(msg: String) {
    // interior NULs would truncate the message on the C side
    let msg = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

/// Run `f`, record any failure, and map it to a status.
fn guarded(f: impl FnOnce() -> Result<(), Failure>) -> OrdoptStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OrdoptStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal error: {msg}"));
            OrdoptStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(OrdoptStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(OrdoptStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if !out.is_null() {
        let c = CString::new(s).map_err(|e| fail(OrdoptStatus::InvalidArgument, e.to_string()))?;
        // SAFETY: the caller provides a writable pointer when non-null.
        unsafe { *out = c.into_raw() };
    }
    Ok(())
}

fn heuristic(h: u32) -> Result<Heuristic, Failure> {
    Ok(match h {
        0 => Heuristic::Arbitrary,
        1 => Heuristic::Postgres,
        2 => Heuristic::Favorable,
        3 => Heuristic::Exhaustive,
        _ => return Err(fail(OrdoptStatus::InvalidArgument, format!("unknown heuristic {h}"))),
    })
}

fn sort_spec(cfg: &OrdoptSortConfig) -> SortSpec {
    SortSpec {
        target_order_len: cfg.target_keys as usize,
        known_prefix_len: cfg.known_prefix as usize,
        cfg: BlockConfig {
            block_bytes: cfg.block_bytes,
            memory_blocks: cfg.memory_blocks,
        },
    }
}

fn drain<I: Iterator<Item = Tuple>>(
    mut stream: SortStream<I>,
    mut sink: impl FnMut(Tuple),
) -> Result<SortMetrics, Failure> {
    for t in stream.by_ref() {
        sink(t?);
    }
    Ok(stream.metrics())
}

fn start_sort<I: Iterator<Item = Tuple>>(input: I, spec: SortSpec) -> Result<SortStream<I>, Failure> {
    Ok(if spec.known_prefix_len == 0 {
        sort_srs(input, spec)?
    } else {
        sort_mrs(input, spec)?
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ordopt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn ordopt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or was returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ordopt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a catalog and query, both JSON documents. `config_json` may be null
/// for default cost parameters.
///
/// # Safety
/// String arguments are null or NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn ordopt_query_new(
    catalog_json: *const c_char,
    query_json: *const c_char,
    config_json: *const c_char,
    out: *mut *mut OrdoptQuery,
) -> OrdoptStatus {
    guarded(|| {
        if out.is_null() {
            return Err(fail(OrdoptStatus::NullArgument, "`out` is null"));
        }
        let catalog = Catalog::from_json(str_arg(catalog_json, "catalog_json")?)?;
        let query = parse_query(str_arg(query_json, "query_json")?.as_bytes(), &catalog)?;
        let params = if config_json.is_null() {
            CostParams::default()
        } else {
            CostParams::from_config_json(str_arg(config_json, "config_json")?)?
        };
        let tree = QueryTree::build(&catalog, &query)?;
        *out = Box::into_raw(Box::new(OrdoptQuery { tree, params }));
        Ok(())
    })
}

/// # Safety
/// `q` is null or a handle from [`ordopt_query_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ordopt_query_free(q: *mut OrdoptQuery) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Optimize with one of the [`OrdoptHeuristic`] values, optionally followed
/// by merge-order refinement. `out_cost` and `out_plan_json` may each be
/// null; the plan document can be fed back to [`ordopt_refine_plan`].
///
/// # Safety
/// `q` is a live handle; non-null out pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn ordopt_query_optimize(
    q: *const OrdoptQuery,
    heuristic_id: u32,
    refine: bool,
    out_cost: *mut f64,
    out_plan_json: *mut *mut c_char,
) -> OrdoptStatus {
    guarded(|| {
        let q = q.as_ref().ok_or_else(|| fail(OrdoptStatus::NullArgument, "`q` is null"))?;
        let h = heuristic(heuristic_id)?;
        let mut plan = Optimizer::new(&q.tree, &q.params, h)?.optimize()?;
        if refine {
            plan = refine_plan(&q.tree, &q.params, h, &plan)?.plan;
        }
        if !out_cost.is_null() {
            *out_cost = plan.cost;
        }
        out_string(out_plan_json, PlanDocument::new(&q.tree, &q.params, h, refine, &plan).to_json())
    })
}

/// Favorable orders of every node as a JSON array of
/// `{"node", "label", "orders"}` objects.
///
/// # Safety
/// `q` is a live handle; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn ordopt_query_favorable_orders(q: *const OrdoptQuery, out_json: *mut *mut c_char) -> OrdoptStatus {
    guarded(|| {
        let q = q.as_ref().ok_or_else(|| fail(OrdoptStatus::NullArgument, "`q` is null"))?;
        if out_json.is_null() {
            return Err(fail(OrdoptStatus::NullArgument, "`out_json` is null"));
        }
        let afm = FavorableOrders::afm(&q.tree)?;
        let entries: Vec<serde_json::Value> = q
            .tree
            .nodes
            .iter()
            .map(|n| {
                let orders: Vec<String> = afm.of(n.id).iter().map(|o| o.to_string()).collect();
                serde_json::json!({"node": n.id, "label": n.label(), "orders": orders})
            })
            .collect();
        out_string(out_json, serde_json::Value::Array(entries).to_string())
    })
}

/// Refine the merge orders of a plan document produced by
/// [`ordopt_query_optimize`]. The result is the original plan when
/// refinement does not lower the cost; `out_accepted` reports which.
///
/// # Safety
/// `plan_json` is NUL-terminated; non-null out pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn ordopt_refine_plan(
    plan_json: *const c_char,
    out_accepted: *mut bool,
    out_plan_json: *mut *mut c_char,
) -> OrdoptStatus {
    guarded(|| {
        let doc = PlanDocument::from_json(str_arg(plan_json, "plan_json")?)?;
        let tree = doc.tree()?;
        let r = refine_plan(&tree, &doc.cost_params, doc.heuristic, &Arc::new(doc.plan.clone()))?;
        if !out_accepted.is_null() {
            *out_accepted = r.accepted;
        }
        out_string(out_plan_json, PlanDocument::new(&tree, &doc.cost_params, doc.heuristic, true, &r.plan).to_json())
    })
}

/// Sort a synthetic stream of `rows` tuples whose first key is constant
/// within segments of `segment_rows` and increases between segments.
///
/// # Safety
/// `cfg` is readable; `out_metrics` is writable.
#[no_mangle]
pub unsafe extern "C" fn ordopt_sort_generated(
    cfg: *const OrdoptSortConfig,
    rows: u64,
    segment_rows: u64,
    seed: u64,
    out_metrics: *mut OrdoptSortMetrics,
) -> OrdoptStatus {
    guarded(|| {
        let cfg = cfg.as_ref().ok_or_else(|| fail(OrdoptStatus::NullArgument, "`cfg` is null"))?;
        if out_metrics.is_null() {
            return Err(fail(OrdoptStatus::NullArgument, "`out_metrics` is null"));
        }
        if cfg.known_prefix > 1 {
            return Err(fail(OrdoptStatus::InvalidArgument, "generated input is ordered on one key at most"));
        }
        let input = gen_segmented_input(rows, segment_rows, cfg.target_keys as usize, cfg.payload_bytes, seed);
        let m = drain(start_sort(input, sort_spec(cfg))?, |_| {})?;
        *out_metrics = m.into();
        Ok(())
    })
}

/// Sort `rows` tuples of `cfg.target_keys` keys each, given row-major in
/// `keys`, writing the sorted keys to `out_keys` (same shape). Input must
/// be ordered on the first `cfg.known_prefix` keys.
///
/// # Safety
/// `keys` and `out_keys` each hold `rows * cfg.target_keys` values;
/// `out_metrics` is null or writable.
#[no_mangle]
pub unsafe extern "C" fn ordopt_sort_keys(
    cfg: *const OrdoptSortConfig,
    keys: *const i64,
    rows: usize,
    out_keys: *mut i64,
    out_metrics: *mut OrdoptSortMetrics,
) -> OrdoptStatus {
    guarded(|| {
        let cfg = cfg.as_ref().ok_or_else(|| fail(OrdoptStatus::NullArgument, "`cfg` is null"))?;
        let width = cfg.target_keys as usize;
        let len = rows
            .checked_mul(width)
            .ok_or_else(|| fail(OrdoptStatus::InvalidArgument, "rows * target_keys overflows"))?;
        if len > 0 && (keys.is_null() || out_keys.is_null()) {
            return Err(fail(OrdoptStatus::NullArgument, "`keys` or `out_keys` is null"));
        }
        let input: &[i64] = if len == 0 { &[] } else { std::slice::from_raw_parts(keys, len) };
        let tuples = input.chunks(width.max(1)).map(|k| Tuple::new(k.to_vec(), cfg.payload_bytes));
        let mut sorted = Vec::with_capacity(len);
        let m = drain(start_sort(tuples, sort_spec(cfg))?, |t| sorted.extend_from_slice(&t.keys))?;
        if len > 0 {
            std::slice::from_raw_parts_mut(out_keys, len).copy_from_slice(&sorted);
        }
        if !out_metrics.is_null() {
            *out_metrics = m.into();
        }
        Ok(())
    })
}
