//! C ABI over the fluid-democracy library.
//!
//! Graphs are opaque handles created by one of the `fluid_graph_*`
//! constructors and released with [`fluid_graph_free`]. Every fallible call
//! returns a [`FluidStatus`]; on failure [`fluid_last_error`] describes the
//! cause for the calling thread. Results go into caller-provided buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fluid_democracy::adversary::{self, AdversarySearch, CostModel};
use fluid_democracy::delegation_graph::{
    build_composite, upward_delegate, CompetenceIntervals, CompetenceProfile, DelegationGraph, SocialGraph,
    TopologySpec,
};
use fluid_democracy::election_sim::{build_theorem1, estimate_accuracy, Theorem1Spec};
use fluid_democracy::weight_engine::{compute_weights, Mechanism};
use fluid_democracy::{rng, Error};

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluidStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Structural = 3,
    DegenerateElection = 4,
    Numerical = 5,
    BudgetInfeasible = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

/// Outcome of an adversary search.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluidSearchStatus {
    Found = 0,
    /// No topology within the agent bound; the true minimum is larger.
    ExceedsBound = 1,
    Infeasible = 2,
}

/// Marks "no value" in `size_t` outputs.
pub const FLUID_NONE: usize = !0;

/// Opaque delegation graph.
pub struct FluidGraph {
    inner: DelegationGraph,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidSweepRow {
    pub tau: f64,
    pub elector_count: usize,
    pub c_total: f64,
    pub honest_weight: f64,
    /// `FLUID_NONE` unless `status` is `Found`.
    pub min_adversaries: usize,
    pub status: FluidSearchStatus,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> FluidStatus {
    match e {
        Error::Config(_) | Error::Io(_) | Error::Json(_) | Error::Toml(_) => FluidStatus::InvalidArgument,
        Error::Structural(_) => FluidStatus::Structural,
        Error::DegenerateElection => FluidStatus::DegenerateElection,
        Error::Numerical(_) | Error::UndefinedSimilarity => FluidStatus::Numerical,
        Error::BudgetInfeasible { .. } => FluidStatus::BudgetInfeasible,
    }
}

struct Failure(FluidStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FluidStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure and converts panics to `Internal`.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> FluidStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FluidStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FluidStatus::Internal
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, needed: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len < needed {
        return Err(Failure(
            FluidStatus::BufferTooSmall,
            format!("{what} holds {len} entries, need {needed}"),
        ));
    }
    if needed == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn graph_ref<'a>(g: *const FluidGraph) -> Result<&'a DelegationGraph, Failure> {
    g.as_ref().map(|g| &g.inner).ok_or_else(|| null("graph"))
}

fn emit(out: *mut *mut FluidGraph, d: DelegationGraph) {
    let handle = Box::into_raw(Box::new(FluidGraph { inner: d }));
    // SAFETY: callers check `out` for null before building.
    unsafe { *out = handle };
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fluid_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a graph from `edge_count` undirected edges stored as consecutive
/// pairs in `edges` and one competence per voter. Every voter delegates to
/// its most competent neighbour when that neighbour is more competent.
///
/// # Safety
/// `edges` must hold `2 * edge_count` values and `competence` `n` values.
#[no_mangle]
pub unsafe extern "C" fn fluid_graph_from_edges(
    n: usize,
    edges: *const usize,
    edge_count: usize,
    competence: *const f64,
    out: *mut *mut FluidGraph,
) -> FluidStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let pairs = edge_count
            .checked_mul(2)
            .ok_or_else(|| Failure(FluidStatus::InvalidArgument, "edge count overflows".into()))?;
        let flat = slice(edges, pairs, "edges")?;
        let q = slice(competence, n, "competence")?;
        let g = SocialGraph::from_edges(n, flat.chunks_exact(2).map(|e| (e[0], e[1])))?;
        let q = CompetenceProfile::new(q.to_vec())?;
        emit(out, upward_delegate(&g, &q)?);
        Ok(())
    })
}

/// Star/chain composite with default competence intervals.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fluid_graph_composite(
    stars: usize,
    star_size: usize,
    chains: usize,
    chain_size: usize,
    seed: u64,
    out: *mut *mut FluidGraph,
) -> FluidStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = TopologySpec {
            stars,
            star_size,
            chains,
            chain_size,
            intervals: CompetenceIntervals::default(),
        };
        let (g, q) = build_composite(&spec, &mut rng::seeded(seed))?;
        emit(out, upward_delegate(&g, &q)?);
        Ok(())
    })
}

/// Half 10-stars, half 10-chains on `n` voters (a multiple of 20) with the
/// default competence constants.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fluid_graph_theorem1(n: usize, seed: u64, out: *mut *mut FluidGraph) -> FluidStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = Theorem1Spec {
            n,
            ..Theorem1Spec::default()
        };
        emit(out, build_theorem1(&spec, &mut rng::seeded(seed))?);
        Ok(())
    })
}

/// # Safety
/// `graph` must come from a `fluid_graph_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fluid_graph_free(graph: *mut FluidGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of voters, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fluid_graph_voter_count(graph: *const FluidGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.n())
}

/// Writes each voter's delegate, or `FLUID_NONE` for gurus.
///
/// # Safety
/// `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn fluid_graph_delegates(graph: *const FluidGraph, out: *mut usize, len: usize) -> FluidStatus {
    guard(|| {
        let d = graph_ref(graph)?;
        let out = slice_mut(out, len, d.n(), "out")?;
        for (slot, target) in out.iter_mut().zip(d.delegations()) {
            *slot = target.unwrap_or(FLUID_NONE);
        }
        Ok(())
    })
}

/// Flow and cast weight per voter under mechanism `(alpha, beta)`.
/// Either output may be null to skip it.
///
/// # Safety
/// Non-null outputs must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn fluid_compute_weights(
    graph: *const FluidGraph,
    alpha: f64,
    beta: f64,
    flow: *mut f64,
    cast_weight: *mut f64,
    len: usize,
) -> FluidStatus {
    guard(|| {
        let d = graph_ref(graph)?;
        let w = compute_weights(d, Mechanism::new(alpha, beta)?);
        if !flow.is_null() {
            slice_mut(flow, len, d.n(), "flow")?.copy_from_slice(&w.flow);
        }
        if !cast_weight.is_null() {
            slice_mut(cast_weight, len, d.n(), "cast_weight")?.copy_from_slice(&w.cast_weight);
        }
        Ok(())
    })
}

/// Monte Carlo accuracy of the weighted vote among voters above `tau`.
///
/// # Safety
/// `p_hat` and `half_width` must be valid pointers; `half_width` may be null.
#[no_mangle]
pub unsafe extern "C" fn fluid_estimate_accuracy(
    graph: *const FluidGraph,
    alpha: f64,
    beta: f64,
    tau: f64,
    trials: u64,
    seed: u64,
    p_hat: *mut f64,
    half_width: *mut f64,
) -> FluidStatus {
    guard(|| {
        let d = graph_ref(graph)?;
        if p_hat.is_null() {
            return Err(null("p_hat"));
        }
        let est = estimate_accuracy(d, Mechanism::new(alpha, beta)?, tau, trials, seed)?;
        *p_hat = est.p_hat;
        if !half_width.is_null() {
            *half_width = est.half_width;
        }
        Ok(())
    })
}

fn search_fields(search: &AdversarySearch) -> (FluidSearchStatus, usize) {
    match search {
        AdversarySearch::Found(t) => (FluidSearchStatus::Found, t.total_agents),
        AdversarySearch::ExceedsBound { .. } => (FluidSearchStatus::ExceedsBound, FLUID_NONE),
        AdversarySearch::Infeasible => (FluidSearchStatus::Infeasible, FLUID_NONE),
    }
}

/// Fewest adversarial agents whose above-threshold members, at most
/// `core_budget` of them, cast more than `target_weight`.
///
/// # Safety
/// `status` and `total_agents` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fluid_min_adversaries(
    alpha: f64,
    tau: f64,
    target_weight: f64,
    core_budget: usize,
    status: *mut FluidSearchStatus,
    total_agents: *mut usize,
) -> FluidStatus {
    guard(|| {
        if status.is_null() || total_agents.is_null() {
            return Err(null("output"));
        }
        let search = adversary::min_adversaries(alpha, tau, target_weight, core_budget)?;
        (*status, *total_agents) = search_fields(&search);
        Ok(())
    })
}

/// Viscous-retained threshold sweep over `grid`, one row per threshold.
///
/// # Safety
/// `grid` must hold `grid_len` values and `rows` at least `grid_len` rows.
#[no_mangle]
pub unsafe extern "C" fn fluid_sweep_tau(
    graph: *const FluidGraph,
    alpha: f64,
    c: f64,
    c_adv: f64,
    grid: *const f64,
    grid_len: usize,
    rows: *mut FluidSweepRow,
    rows_len: usize,
) -> FluidStatus {
    guard(|| {
        let d = graph_ref(graph)?;
        let grid = slice(grid, grid_len, "grid")?;
        let out = slice_mut(rows, rows_len, grid.len(), "rows")?;
        let m = Mechanism::viscous_retained(alpha)?;
        let result = adversary::sweep_tau(d, m, CostModel::new(c, c_adv)?, grid)?;
        for (slot, r) in out.iter_mut().zip(&result) {
            let (status, agents) = search_fields(&r.search);
            *slot = FluidSweepRow {
                tau: r.tau,
                elector_count: r.elector_count,
                c_total: r.c_total,
                honest_weight: r.honest_weight,
                min_adversaries: agents,
                status,
            };
        }
        Ok(())
    })
}
