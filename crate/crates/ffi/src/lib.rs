//! C interface to filterlab.
//!
//! Every function returns an [`FlStatus`]; results come back through out
//! pointers. Objects are opaque handles released with their `*_free`
//! function. After a failure, `fl_last_error_message` describes it on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use filterlab::network::{self, ConsensusWeights, SensorGraph};
use filterlab::periodic::{self, PlantModel};
use filterlab::spps::{self, SppsSolution};
use filterlab::{gap, linalg, Error};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullPointer = 1,
    /// Malformed arguments, JSON, or out-of-range indices.
    InvalidInput = 2,
    /// The computation itself failed (no convergence, unobservable, ...).
    Numerical = 3,
    /// A Rust panic was caught at the boundary.
    Panic = 4,
}

/// Plant model handle.
pub struct FlPlant(PlantModel);

/// Sensor graph with its consensus weights.
pub struct FlNetwork {
    graph: SensorGraph,
    weights: ConsensusWeights,
}

/// Periodic matrix sequence returned by the solvers.
pub struct FlSolution(SppsSolution);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: FlStatus, message: impl Into<String>) -> FlStatus {
    set_error(message.into());
    status
}

fn from_error(e: Error) -> FlStatus {
    let status = if e.is_numerical() { FlStatus::Numerical } else { FlStatus::InvalidInput };
    fail(status, e.to_string())
}

/// Runs `f` behind a panic guard, clearing the last error first.
fn guard(f: impl FnOnce() -> Result<(), FlStatus>) -> FlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FlStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(FlStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, FlStatus> {
    p.as_ref().ok_or_else(|| fail(FlStatus::NullPointer, format!("{what} is NULL")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), FlStatus> {
    if out.is_null() {
        return Err(fail(FlStatus::NullPointer, format!("{what} is NULL")));
    }
    out.write(value);
    Ok(())
}

fn check<T>(r: filterlab::Result<T>) -> Result<T, FlStatus> {
    r.map_err(from_error)
}

fn tolerance(tol: f64) -> Result<f64, FlStatus> {
    if tol == 0.0 {
        Ok(spps::DEFAULT_TOL)
    } else if tol > 0.0 && tol.is_finite() {
        Ok(tol)
    } else {
        Err(fail(FlStatus::InvalidInput, format!("tolerance must be positive, got {tol}")))
    }
}

/// Message for the last failure on this thread, or NULL. The pointer stays
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn fl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// The built-in 20-sensor, period-30 benchmark plant.
///
/// # Safety
/// `out` must be a valid pointer to write a handle to.
#[no_mangle]
pub unsafe extern "C" fn fl_plant_paper(out: *mut *mut FlPlant) -> FlStatus {
    guard(|| write_out(out, Box::into_raw(Box::new(FlPlant(periodic::paper_plant()))), "out"))
}

/// Parses a plant from its JSON description.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_plant_from_json(json: *const c_char, out: *mut *mut FlPlant) -> FlStatus {
    guard(|| {
        if json.is_null() {
            return Err(fail(FlStatus::NullPointer, "json is NULL"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| fail(FlStatus::InvalidInput, format!("json is not UTF-8: {e}")))?;
        let plant = check(PlantModel::from_json(text))?;
        write_out(out, Box::into_raw(Box::new(FlPlant(plant))), "out")
    })
}

/// # Safety
/// `plant` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn fl_plant_free(plant: *mut FlPlant) {
    if !plant.is_null() {
        drop(Box::from_raw(plant));
    }
}

/// State dimension, sensor count and period. Any out pointer may be NULL.
///
/// # Safety
/// `plant` must be a live handle; non-NULL out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_plant_dims(
    plant: *const FlPlant,
    state_dim: *mut usize,
    sensors: *mut usize,
    period: *mut usize,
) -> FlStatus {
    guard(|| {
        let p = &deref(plant, "plant")?.0;
        for (out, v) in [(state_dim, p.state_dim()), (sensors, p.sensor_count()), (period, p.period())] {
            if !out.is_null() {
                out.write(v);
            }
        }
        Ok(())
    })
}

/// Whether the stacked pair `(A, C)` passes the uniform observability test.
///
/// # Safety
/// `plant` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_uniform_observability(plant: *const FlPlant, out: *mut bool) -> FlStatus {
    guard(|| {
        let p = &deref(plant, "plant")?.0;
        let (c, _) = p.stacked_sequences();
        let verdict = check(spps::uniform_observability(p.a(), &c))?;
        write_out(out, verdict, "out")
    })
}

/// Centralized periodic Riccati solution. `tol = 0` selects the default.
///
/// # Safety
/// `plant` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_dpre_solve(plant: *const FlPlant, tol: f64, out: *mut *mut FlSolution) -> FlStatus {
    guard(|| {
        let p = &deref(plant, "plant")?.0;
        let sol = check(gap::ckf_dpre(p, tolerance(tol)?))?;
        write_out(out, Box::into_raw(Box::new(FlSolution(sol))), "out")
    })
}

/// Connected random geometric graph (first connected draw from `seed` on)
/// with Metropolis weights.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_network_random_geometric(
    nodes: usize,
    side: f64,
    radius: f64,
    seed: u64,
    out: *mut *mut FlNetwork,
) -> FlStatus {
    guard(|| {
        let (graph, _) = check(network::connected_random_geometric_graph(nodes, side, radius, seed, 10_000))?;
        let weights = check(network::metropolis_weights(&graph))?;
        write_out(out, Box::into_raw(Box::new(FlNetwork { graph, weights })), "out")
    })
}

/// Graph from `edge_count` undirected 0-based pairs `edges[2e], edges[2e+1]`,
/// with Metropolis weights.
///
/// # Safety
/// `edges` must point to `2 * edge_count` values (or be NULL when the count is 0); `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_network_from_edges(
    nodes: usize,
    edges: *const usize,
    edge_count: usize,
    out: *mut *mut FlNetwork,
) -> FlStatus {
    guard(|| {
        let pairs: &[usize] = if edge_count == 0 {
            &[]
        } else if edges.is_null() {
            return Err(fail(FlStatus::NullPointer, "edges is NULL"));
        } else {
            std::slice::from_raw_parts(edges, 2 * edge_count)
        };
        let graph = check(SensorGraph::new(nodes, pairs.chunks(2).map(|e| (e[0], e[1]))))?;
        let weights = check(network::metropolis_weights(&graph))?;
        write_out(out, Box::into_raw(Box::new(FlNetwork { graph, weights })), "out")
    })
}

/// # Safety
/// `net` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn fl_network_free(net: *mut FlNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_network_diameter(net: *const FlNetwork, out: *mut usize) -> FlStatus {
    guard(|| {
        let n = deref(net, "network")?;
        write_out(out, check(n.graph.diameter())?, "out")
    })
}

/// Second largest eigenvalue modulus of the weight matrix.
///
/// # Safety
/// `net` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_network_sigma2(net: *const FlNetwork, out: *mut f64) -> FlStatus {
    guard(|| {
        let n = deref(net, "network")?;
        let moduli = linalg::eigenvalue_moduli(n.weights.matrix());
        write_out(out, moduli.get(1).copied().unwrap_or(0.0), "out")
    })
}

unsafe fn node_solution(
    plant: *const FlPlant,
    net: *const FlNetwork,
    steps: usize,
    sensor: usize,
    tol: f64,
    out: *mut *mut FlSolution,
    solve: fn(&PlantModel, &ConsensusWeights, usize, usize, f64) -> filterlab::Result<SppsSolution>,
) -> FlStatus {
    guard(|| {
        let p = &deref(plant, "plant")?.0;
        let n = deref(net, "network")?;
        if n.weights.node_count() != p.sensor_count() {
            return Err(fail(FlStatus::InvalidInput, "network and plant disagree on the number of sensors"));
        }
        if sensor >= p.sensor_count() {
            return Err(fail(FlStatus::InvalidInput, format!("sensor {sensor} out of range")));
        }
        let sol = check(solve(p, &n.weights, steps, sensor, tolerance(tol)?))?;
        write_out(out, Box::into_raw(Box::new(FlSolution(sol))), "out")
    })
}

/// Riccati solution of the filter at `sensor` (0-based) after `steps` consensus rounds.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_cmdf_dpre(
    plant: *const FlPlant,
    net: *const FlNetwork,
    steps: usize,
    sensor: usize,
    tol: f64,
    out: *mut *mut FlSolution,
) -> FlStatus {
    node_solution(plant, net, steps, sensor, tol, out, gap::cmdf_dpre)
}

/// True steady-state error covariance of the filter at `sensor` (0-based).
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_cmdf_error_dple(
    plant: *const FlPlant,
    net: *const FlNetwork,
    steps: usize,
    sensor: usize,
    tol: f64,
    out: *mut *mut FlSolution,
) -> FlStatus {
    node_solution(plant, net, steps, sensor, tol, out, gap::cmdf_error_dple)
}

/// # Safety
/// `sol` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn fl_solution_free(sol: *mut FlSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Period and matrix dimension. Either out pointer may be NULL.
///
/// # Safety
/// `sol` must be a live handle; non-NULL out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn fl_solution_period(sol: *const FlSolution, period: *mut usize, dim: *mut usize) -> FlStatus {
    guard(|| {
        let s = &deref(sol, "solution")?.0;
        if !period.is_null() {
            period.write(s.period());
        }
        if !dim.is_null() {
            dim.write(s.dim());
        }
        Ok(())
    })
}

/// Copies the matrix at step `k` (taken modulo the period) row-major into
/// `buffer`, which must hold `len >= dim * dim` values.
///
/// # Safety
/// `sol` must be a live handle and `buffer` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn fl_solution_matrix(sol: *const FlSolution, k: usize, buffer: *mut f64, len: usize) -> FlStatus {
    guard(|| {
        let s = &deref(sol, "solution")?.0;
        if buffer.is_null() {
            return Err(fail(FlStatus::NullPointer, "buffer is NULL"));
        }
        let n = s.dim();
        if len < n * n {
            return Err(fail(FlStatus::InvalidInput, format!("buffer holds {len} values, {} needed", n * n)));
        }
        let m = s.at(k);
        let out = std::slice::from_raw_parts_mut(buffer, n * n);
        for r in 0..n {
            for c in 0..n {
                out[r * n + c] = m[(r, c)];
            }
        }
        Ok(())
    })
}

/// Mean of the traces over one period.
///
/// # Safety
/// `sol` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_solution_average_trace(sol: *const FlSolution, out: *mut f64) -> FlStatus {
    guard(|| {
        let s = &deref(sol, "solution")?.0;
        write_out(out, s.average_trace(), "out")
    })
}
