//! Explicit time integration of graphical mean curvature flow.
//!
//! The surface is evolved in the nonparametric gauge: both height functions
//! move by `dt * g^{ij} d_ij`, whose normal part is the mean curvature vector.
//! Tangential motion only reparametrizes the surface.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LagflowError, Result};
use crate::grid::MapGrid;
use crate::observables::{comparison_bound, torus_row, Curvature, ObservableRow};
use crate::stencil::{DerivativeOrder, Partials, PeriodicStencil};
use crate::torus::compute_geometry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    Off,
    Gradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub t_end: f64,
    pub cfl: f64,
    pub observe_every: usize,
    pub stop_h_sup: f64,
    /// Grid resolution (nodes per side, or colatitude nodes for the sphere).
    pub n: usize,
    pub order: DerivativeOrder,
    pub projection_mode: ProjectionMode,
    pub projection_iterations: usize,
    /// 0 disables checkpoints.
    pub checkpoint_every: usize,
    pub max_steps: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            cfl: 0.2,
            observe_every: 100,
            stop_h_sup: 0.0,
            n: 64,
            order: DerivativeOrder::Second,
            projection_mode: ProjectionMode::Off,
            projection_iterations: 1,
            checkpoint_every: 0,
            max_steps: 10_000_000,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LagflowError::InvalidArgument(m));
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return bad(format!("cfl must lie in (0, 0.5], got {}", self.cfl));
        }
        // t_end = 0 is accepted and yields the initial observation only
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be finite and non-negative, got {}", self.t_end));
        }
        if !(self.stop_h_sup >= 0.0) {
            return bad(format!("stop_h_sup must be >= 0, got {}", self.stop_h_sup));
        }
        if self.observe_every == 0 {
            return bad("observe_every must be positive".into());
        }
        Ok(())
    }
}

/// Why a run ended.
#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    ReachedEnd,
    /// `sup |H|` dropped below `stop_h_sup`.
    Converged,
    StepLimit,
    /// Non-positive Jacobian: the discrete graph stopped being a graph over
    /// both factors. In the continuum this cannot happen, so it signals
    /// under-resolution.
    Degenerate(String),
    /// `max |A|^2 h^2 > 1`: curvature no longer resolved by the grid.
    Unresolved { a2_h2: f64 },
    NonFinite(String),
}

impl Termination {
    pub fn is_abort(&self) -> bool {
        matches!(
            self,
            Termination::Degenerate(_) | Termination::Unresolved { .. } | Termination::NonFinite(_)
        )
    }

    pub fn describe(&self) -> String {
        match self {
            Termination::ReachedEnd => "reached t_end".into(),
            Termination::Converged => "sup|H| below stop_h_sup".into(),
            Termination::StepLimit => "step limit reached".into(),
            Termination::Degenerate(d) => format!("degeneracy abort (under-resolved): {d}"),
            Termination::Unresolved { a2_h2 } => {
                format!("curvature unresolved: max|A|^2 h^2 = {a2_h2:e} > 1")
            }
            Termination::NonFinite(d) => format!("non-finite value: {d}"),
        }
    }
}

/// Flow state: time, current map and the rows observed so far.
#[derive(Clone, Debug)]
pub struct FlowState<M> {
    pub t: f64,
    pub map: M,
    pub dt: f64,
    pub step_index: usize,
    pub history: Vec<ObservableRow>,
    /// Time and minimum of eta from which the comparison bound is measured.
    pub bound_origin: Option<(f64, f64)>,
}

impl<M> FlowState<M> {
    pub fn new(map: M) -> Self {
        Self::resumed(map, 0.0, 0)
    }

    pub fn resumed(map: M, t: f64, step_index: usize) -> Self {
        Self {
            t,
            map,
            dt: 0.0,
            step_index,
            history: Vec::new(),
            bound_origin: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowResult<M> {
    pub state: FlowState<M>,
    pub termination: Termination,
}

/// Geometry-specific pieces of the time loop.
pub trait FlowModel {
    type Map: Clone;

    fn curvature(&self) -> Curvature;

    /// Largest stable explicit step, `cfl` already applied.
    fn stable_dt(&self, map: &Self::Map) -> Result<f64>;

    /// One forward-Euler step.
    fn advance(&self, map: &Self::Map, dt: f64) -> Result<Self::Map>;

    /// Row with everything but `t`, `dt` and `eta_bound` filled in.
    fn observe(&self, map: &Self::Map) -> Result<ObservableRow>;

    /// Returns `Some(max |A|^2 h^2)` when it exceeds 1.
    fn unresolved(&self, row: &ObservableRow) -> Option<f64>;

    fn post_step(&self, map: Self::Map) -> Result<Self::Map> {
        Ok(map)
    }
}

/// Side effects requested by the loop; all default to no-ops.
pub trait FlowHooks<M> {
    fn after_step(&mut self, _state: &FlowState<M>) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&mut self, _state: &FlowState<M>) -> Result<()> {
        Ok(())
    }
}

pub struct NoHooks;

impl<M> FlowHooks<M> for NoHooks {}

fn record<F: FlowModel>(model: &F, state: &mut FlowState<F::Map>) -> Result<ObservableRow> {
    let mut row = model.observe(&state.map)?;
    row.t = state.t;
    row.dt = state.dt;
    let (t0, eta0) = *state.bound_origin.get_or_insert((state.t, row.min_eta));
    row.eta_bound = if eta0 > 0.0 && eta0 <= 1.0 {
        comparison_bound(state.t - t0, eta0, model.curvature())?
    } else {
        0.0
    };
    state.history.push(row.clone());
    Ok(row)
}

fn abort_from_error(e: LagflowError) -> Result<Termination> {
    match e {
        LagflowError::DegenerateGraph { .. } | LagflowError::NearPole { .. } => {
            Ok(Termination::Degenerate(e.to_string()))
        }
        LagflowError::NonFinite(d) => Ok(Termination::NonFinite(d)),
        other => Err(other),
    }
}

fn check_row<F: FlowModel>(model: &F, config: &FlowConfig, row: &ObservableRow) -> Option<Termination> {
    if row.values().iter().any(|v| !v.is_finite()) {
        return Some(Termination::NonFinite("observable row".into()));
    }
    if let Some(a2_h2) = model.unresolved(row) {
        return Some(Termination::Unresolved { a2_h2 });
    }
    if row.sup_h() < config.stop_h_sup {
        return Some(Termination::Converged);
    }
    None
}

/// Runs the loop from `state` until a termination condition is met.
pub fn continue_run<F: FlowModel>(
    model: &F,
    config: &FlowConfig,
    mut state: FlowState<F::Map>,
    hooks: &mut dyn FlowHooks<F::Map>,
) -> Result<FlowResult<F::Map>> {
    config.validate()?;
    let row = match record(model, &mut state) {
        Ok(r) => r,
        Err(e) => {
            let termination = abort_from_error(e)?;
            return Ok(FlowResult { state, termination });
        }
    };
    if let Some(termination) = check_row(model, config, &row) {
        return Ok(FlowResult { state, termination });
    }
    let mut observed_last = true;
    let termination = loop {
        if state.t >= config.t_end {
            break Termination::ReachedEnd;
        }
        if state.step_index >= config.max_steps {
            break Termination::StepLimit;
        }
        let stable = match model.stable_dt(&state.map) {
            Ok(dt) => dt,
            Err(e) => break abort_from_error(e)?,
        };
        let remaining = config.t_end - state.t;
        let (dt, last) = if stable >= remaining { (remaining, true) } else { (stable, false) };
        let next = model.advance(&state.map, dt).and_then(|m| model.post_step(m));
        match next {
            Ok(m) => state.map = m,
            Err(e) => break abort_from_error(e)?,
        }
        state.t = if last { config.t_end } else { state.t + dt };
        state.dt = dt;
        state.step_index += 1;
        observed_last = false;
        hooks.after_step(&state)?;
        if config.checkpoint_every > 0 && state.step_index % config.checkpoint_every == 0 {
            hooks.checkpoint(&state)?;
        }
        if state.step_index % config.observe_every == 0 || last {
            observed_last = true;
            match record(model, &mut state) {
                Ok(row) => {
                    if let Some(t) = check_row(model, config, &row) {
                        break t;
                    }
                }
                Err(e) => break abort_from_error(e)?,
            }
        }
    };
    if !observed_last && !termination.is_abort() {
        record(model, &mut state)?;
    }
    Ok(FlowResult { state, termination })
}

/// Torus maps evolved in the graph gauge.
#[derive(Clone, Debug)]
pub struct TorusFlow {
    pub cfl: f64,
    pub order: DerivativeOrder,
    /// Projection iterations applied after every step, if enabled.
    pub projection: Option<usize>,
    /// Grid spacing, for the resolution guard.
    pub h: f64,
}

impl TorusFlow {
    pub fn from_config(config: &FlowConfig) -> Self {
        Self {
            cfl: config.cfl,
            order: config.order,
            projection: match config.projection_mode {
                ProjectionMode::Off => None,
                ProjectionMode::Gradient => Some(config.projection_iterations),
            },
            h: 1.0 / config.n as f64,
        }
    }
}

/// `cfl * h^2 / (2 max lambda_max(g^{-1}))`.
pub fn cfl_dt(map: &MapGrid, cfl: f64, order: DerivativeOrder) -> f64 {
    let n = map.n();
    let st = PeriodicStencil::new(n, order);
    let lin = map.linear();
    // max is exact, so the parallel reduction is deterministic
    let lam = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![[0.0; 2]; n], vec![[0.0; 2]; n]),
            |(gu, gv), i| {
                st.row_gradients(map.u(), i, gu);
                st.row_gradients(map.v(), i, gv);
                let mut lam = 0.0f64;
                for (a, b) in gu.iter().zip(gv.iter()) {
                    let fx = lin[0][0] + a[0];
                    let fy = lin[0][1] + a[1];
                    let gx = lin[1][0] + b[0];
                    let gy = lin[1][1] + b[1];
                    let g11 = 1.0 + fx * fx + gx * gx;
                    let g12 = fx * fy + gx * gy;
                    let g22 = 1.0 + fy * fy + gy * gy;
                    // largest eigenvalue of g^{-1} = 1 / smallest eigenvalue of g
                    let half_tr = 0.5 * (g11 + g22);
                    let disc = (0.25 * (g11 - g22) * (g11 - g22) + g12 * g12).sqrt();
                    lam = lam.max((half_tr + disc) / (g11 * g22 - g12 * g12));
                }
                lam
            },
        )
        .reduce(|| 0.0, f64::max);
    let h = map.spacing();
    cfl * h * h / (2.0 * lam)
}

// forward Euler update; also checks the Jacobian of the input map
fn euler_update(map: &MapGrid, dt: f64, order: DerivativeOrder) -> Result<MapGrid> {
    let n = map.n();
    let st = PeriodicStencil::new(n, order);
    let lin = map.linear();
    let (u, v) = (map.u(), map.v());
    let mut nu = vec![0.0; n * n];
    let mut nv = vec![0.0; n * n];
    let bad = nu
        .par_chunks_mut(n)
        .zip(nv.par_chunks_mut(n))
        .enumerate()
        .map_init(
            || (vec![Partials::default(); n], vec![Partials::default(); n]),
            |(pu, pv), (i, (ru, rv))| {
                st.row_partials(u, i, pu);
                st.row_partials(v, i, pv);
                for j in 0..n {
                    let (a, b) = (&pu[j], &pv[j]);
                    let fx = lin[0][0] + a.x;
                    let fy = lin[0][1] + a.y;
                    let gx = lin[1][0] + b.x;
                    let gy = lin[1][1] + b.y;
                    let jac = fx * gy - fy * gx;
                    if !(jac > 0.0) {
                        return Some((i, j, jac));
                    }
                    let g11 = 1.0 + fx * fx + gx * gx;
                    let g12 = fx * fy + gx * gy;
                    let g22 = 1.0 + fy * fy + gy * gy;
                    let s = dt / (g11 * g22 - g12 * g12);
                    let k = i * n + j;
                    ru[j] = u[k] + s * (g22 * a.xx - 2.0 * g12 * a.xy + g11 * a.yy);
                    rv[j] = v[k] + s * (g22 * b.xx - 2.0 * g12 * b.xy + g11 * b.yy);
                }
                None
            },
        )
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .next();
    if let Some((i, j, jac)) = bad {
        return Err(LagflowError::DegenerateGraph {
            i,
            j,
            detail: format!("Jacobian {jac:e} <= 0"),
        });
    }
    if nu.iter().chain(&nv).any(|x| !x.is_finite()) {
        return Err(LagflowError::NonFinite("map after step".into()));
    }
    Ok(map.replace_fields(nu, nv))
}

fn check_jacobian(map: &MapGrid, order: DerivativeOrder) -> Result<()> {
    let n = map.n();
    let st = PeriodicStencil::new(n, order);
    let lin = map.linear();
    let mut gu = vec![[0.0; 2]; n];
    let mut gv = vec![[0.0; 2]; n];
    for i in 0..n {
        st.row_gradients(map.u(), i, &mut gu);
        st.row_gradients(map.v(), i, &mut gv);
        for j in 0..n {
            let (a, b) = (gu[j], gv[j]);
            let jac = (lin[0][0] + a[0]) * (lin[1][1] + b[1]) - (lin[0][1] + a[1]) * (lin[1][0] + b[0]);
            if !(jac > 0.0) {
                return Err(LagflowError::DegenerateGraph {
                    i,
                    j,
                    detail: format!("Jacobian {jac:e} <= 0 after step"),
                });
            }
        }
    }
    Ok(())
}

/// One explicit step of length `dt`, checking the Jacobian afterwards.
pub fn step(state: &FlowState<MapGrid>, dt: f64, order: DerivativeOrder) -> Result<FlowState<MapGrid>> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(LagflowError::InvalidArgument(format!("bad step size {dt}")));
    }
    let map = euler_update(&state.map, dt, order)?;
    check_jacobian(&map, order)?;
    Ok(FlowState {
        t: state.t + dt,
        map,
        dt,
        step_index: state.step_index + 1,
        history: state.history.clone(),
        bound_origin: state.bound_origin,
    })
}

impl FlowModel for TorusFlow {
    type Map = MapGrid;

    fn curvature(&self) -> Curvature {
        Curvature::Flat
    }

    fn stable_dt(&self, map: &MapGrid) -> Result<f64> {
        Ok(cfl_dt(map, self.cfl, self.order))
    }

    fn advance(&self, map: &MapGrid, dt: f64) -> Result<MapGrid> {
        euler_update(map, dt, self.order)
    }

    fn post_step(&self, map: MapGrid) -> Result<MapGrid> {
        match self.projection {
            Some(iters) => project_area_preserving(&map, iters, self.order),
            None => Ok(map),
        }
    }

    fn observe(&self, map: &MapGrid) -> Result<ObservableRow> {
        check_jacobian(map, self.order)?;
        let geom = compute_geometry(map, self.order)?;
        Ok(torus_row(&geom, map))
    }

    fn unresolved(&self, row: &ObservableRow) -> Option<f64> {
        let v = row.sup_a2 * self.h * self.h;
        (v > 1.0).then_some(v)
    }
}

/// Runs the torus flow from `initial`.
pub fn run(config: &FlowConfig, initial: MapGrid) -> Result<FlowResult<MapGrid>> {
    run_with_hooks(config, FlowState::new(initial), &mut NoHooks)
}

/// Runs (or resumes) the torus flow with side-effect hooks.
pub fn run_with_hooks(
    config: &FlowConfig,
    state: FlowState<MapGrid>,
    hooks: &mut dyn FlowHooks<MapGrid>,
) -> Result<FlowResult<MapGrid>> {
    if state.map.n() != config.n {
        return Err(LagflowError::InvalidArgument(format!(
            "map resolution {} does not match configured n = {}",
            state.map.n(),
            config.n
        )));
    }
    continue_run(&TorusFlow::from_config(config), config, state, hooks)
}

/// Discrete energy `sum (Jac - 1)^2 h^2` and its gradient with respect to `(u, v)`.
fn defect_energy(map: &MapGrid, st: &PeriodicStencil) -> (f64, Vec<f64>, Vec<f64>) {
    let n = map.n();
    let h2 = map.spacing() * map.spacing();
    let lin = map.linear();
    let mut energy = 0.0;
    // r * g_y, r * g_x, r * f_x, r * f_y with r = 2 (Jac - 1) h^2
    let mut w = [vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]];
    for i in 0..n {
        for j in 0..n {
            let gu = st.gradient(map.u(), i, j);
            let gv = st.gradient(map.v(), i, j);
            let fx = lin[0][0] + gu[0];
            let fy = lin[0][1] + gu[1];
            let gx = lin[1][0] + gv[0];
            let gy = lin[1][1] + gv[1];
            let d = fx * gy - fy * gx - 1.0;
            energy += d * d * h2;
            let r = 2.0 * d * h2;
            let k = i * n + j;
            w[0][k] = r * gy;
            w[1][k] = r * gx;
            w[2][k] = r * fx;
            w[3][k] = r * fy;
        }
    }
    // dE/du = Dx^T(r g_y) - Dy^T(r g_x), dE/dv = Dy^T(r f_x) - Dx^T(r f_y)
    let mut grad_u = vec![0.0; n * n];
    let mut grad_v = vec![0.0; n * n];
    st.gradient_adjoint(&w[0], 0, &mut grad_u);
    let neg1: Vec<f64> = w[1].iter().map(|x| -x).collect();
    st.gradient_adjoint(&neg1, 1, &mut grad_u);
    st.gradient_adjoint(&w[2], 1, &mut grad_v);
    let neg3: Vec<f64> = w[3].iter().map(|x| -x).collect();
    st.gradient_adjoint(&neg3, 0, &mut grad_v);
    (energy, grad_u, grad_v)
}

/// Gradient descent on `int (Jac - 1)^2`, step `h^2 / 4` in the continuum
/// scaling, halved (up to 10 times) whenever a step would raise the energy.
pub fn project_area_preserving(map: &MapGrid, iterations: usize, order: DerivativeOrder) -> Result<MapGrid> {
    let st = PeriodicStencil::new(map.n(), order);
    let mut current = map.clone();
    for _ in 0..iterations {
        let (energy, gu, gv) = defect_energy(&current, &st);
        if energy == 0.0 {
            break;
        }
        // h^2/4 times the continuum gradient, which is the discrete gradient
        // divided by the cell area h^2
        let mut step = 0.25;
        let mut accepted = None;
        for _ in 0..=10 {
            let nu: Vec<f64> = current.u().iter().zip(&gu).map(|(a, g)| a - step * g).collect();
            let nv: Vec<f64> = current.v().iter().zip(&gv).map(|(a, g)| a - step * g).collect();
            let cand = current.replace_fields(nu, nv);
            let (e_new, _, _) = defect_energy(&cand, &st);
            if e_new <= energy {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        current = accepted.ok_or_else(|| {
            LagflowError::NonFinite("area projection could not decrease the defect".into())
        })?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn shear(n: usize, a: f64) -> MapGrid {
        MapGrid::from_fn(n, |_, y| (a * (TAU * y).sin(), 0.0)).unwrap()
    }

    #[test]
    fn cfl_step_for_identity_and_diagonal_map() {
        let id = MapGrid::identity(64).unwrap();
        let dt = cfl_dt(&id, 0.2, DerivativeOrder::Second);
        assert!((dt - 0.2 / 4096.0).abs() < 1e-18);
        let n = 16;
        let lin = MapGrid::with_linear(n, vec![0.0; n * n], vec![0.0; n * n], [[2.0, 0.0], [0.0, 0.5]]).unwrap();
        let h = 1.0 / n as f64;
        let dt = cfl_dt(&lin, 0.2, DerivativeOrder::Second);
        assert!((dt - 0.2 * h * h / 1.6).abs() < 1e-16);
    }

    #[test]
    fn identity_and_affine_maps_are_fixed_points() {
        let id = FlowState::new(MapGrid::identity(16).unwrap());
        let next = step(&id, 1e-3, DerivativeOrder::Second).unwrap();
        assert_eq!(next.map, id.map);
        assert_eq!(next.t, 1e-3);
        let n = 16;
        let aff = MapGrid::with_linear(
            n,
            vec![0.3; n * n],
            vec![-0.1; n * n],
            [[1.0, 0.5], [0.0, 1.0]],
        )
        .unwrap();
        let next = step(&FlowState::new(aff.clone()), 1e-4, DerivativeOrder::Fourth).unwrap();
        for (a, b) in next.map.u().iter().zip(aff.u()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn one_step_decreases_total_curvature() {
        for n in [32usize, 64] {
            let m = shear(n, 0.2);
            let dt = cfl_dt(&m, 0.2, DerivativeOrder::Second);
            let before = compute_geometry(&m, DerivativeOrder::Second).unwrap();
            let st = step(&FlowState::new(m), dt, DerivativeOrder::Second).unwrap();
            let after = compute_geometry(&st.map, DerivativeOrder::Second).unwrap();
            let a0 = before.integrate(|g| g.a_norm2);
            let a1 = after.integrate(|g| g.a_norm2);
            assert!(a1 < a0, "n = {n}: {a1} !< {a0}");
        }
    }

    #[test]
    fn run_from_identity_stops_immediately() {
        let cfg = FlowConfig { n: 16, t_end: 1.0, stop_h_sup: 1e-4, ..Default::default() };
        let res = run(&cfg, MapGrid::identity(16).unwrap()).unwrap();
        assert_eq!(res.termination, Termination::Converged);
        assert_eq!(res.state.history.len(), 1);
        assert_eq!(res.state.step_index, 0);
    }

    #[test]
    fn zero_end_time_records_one_row() {
        let cfg = FlowConfig { n: 16, t_end: 0.0, ..Default::default() };
        let res = run(&cfg, shear(16, 0.1)).unwrap();
        assert_eq!(res.termination, Termination::ReachedEnd);
        assert_eq!(res.state.history.len(), 1);
    }

    #[test]
    fn run_ends_exactly_at_t_end_with_final_row() {
        let cfg = FlowConfig { n: 16, t_end: 0.01, observe_every: 7, ..Default::default() };
        let res = run(&cfg, shear(16, 0.1)).unwrap();
        assert_eq!(res.termination, Termination::ReachedEnd);
        let last = res.state.history.last().unwrap();
        assert_eq!(last.t, 0.01);
        assert!(res.state.history.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn step_limit_is_honoured() {
        let cfg = FlowConfig { n: 16, t_end: 1.0, max_steps: 5, observe_every: 2, ..Default::default() };
        let res = run(&cfg, shear(16, 0.1)).unwrap();
        assert_eq!(res.termination, Termination::StepLimit);
        assert_eq!(res.state.step_index, 5);
        assert_eq!(res.state.history.last().unwrap().t, res.state.t);
    }

    #[test]
    fn folded_map_aborts_as_degenerate() {
        // x + 0.2 sin(2 pi x) has negative Jacobian near x = 1/2
        let m = MapGrid::from_fn(32, |x, _| (0.2 * (TAU * x).sin(), 0.0)).unwrap();
        let cfg = FlowConfig { n: 32, t_end: 0.1, ..Default::default() };
        let res = run(&cfg, m.clone()).unwrap();
        assert!(matches!(res.termination, Termination::Degenerate(_)), "{:?}", res.termination);
        assert!(matches!(
            step(&FlowState::new(m), 1e-6, DerivativeOrder::Second),
            Err(LagflowError::DegenerateGraph { .. })
        ));
    }

    #[test]
    fn unresolved_curvature_aborts() {
        let m = MapGrid::from_fn(16, |_, y| (0.01 * (TAU * 7.0 * y).sin(), 0.0)).unwrap();
        let cfg = FlowConfig { n: 16, t_end: 0.1, ..Default::default() };
        let res = run(&cfg, m).unwrap();
        // max |A|^2 h^2 ~ (0.01 (14 pi)^2)^2 / 2 / 256 ~ 0.04 here: stays resolved
        assert!(!res.termination.is_abort());
        let m = MapGrid::from_fn(16, |_, y| (0.2 * (TAU * 7.0 * y).sin(), 0.0)).unwrap();
        let res = run(&cfg, m).unwrap();
        assert!(matches!(res.termination, Termination::Unresolved { .. }), "{:?}", res.termination);
    }

    #[test]
    fn projection_leaves_exact_maps_alone() {
        let m = shear(32, 0.2);
        let p = project_area_preserving(&m, 5, DerivativeOrder::Second).unwrap();
        for (a, b) in p.u().iter().zip(m.u()).chain(p.v().iter().zip(m.v())) {
            assert!((a - b).abs() <= 1e-14);
        }
        assert_eq!(project_area_preserving(&m, 0, DerivativeOrder::Second).unwrap(), m);
    }

    #[test]
    fn projection_reduces_defect_monotonically() {
        let m = MapGrid::from_fn(32, |x, y| {
            (0.1 * (TAU * y).sin() + 0.01 * (TAU * x).sin(), 0.01 * (TAU * (x + y)).cos())
        })
        .unwrap();
        let defect = |m: &MapGrid| compute_geometry(m, DerivativeOrder::Second).unwrap().lagrangian_defect().l2;
        let mut cur = m;
        let mut prev = defect(&cur);
        for _ in 0..5 {
            cur = project_area_preserving(&cur, 1, DerivativeOrder::Second).unwrap();
            let d = defect(&cur);
            assert!(d < prev, "{d} !< {prev}");
            prev = d;
        }
    }

    #[test]
    fn config_validation() {
        assert!(FlowConfig { cfl: 0.6, ..Default::default() }.validate().is_err());
        assert!(FlowConfig { t_end: -1.0, ..Default::default() }.validate().is_err());
        assert!(FlowConfig { stop_h_sup: -1.0, ..Default::default() }.validate().is_err());
        let cfg: FlowConfig = serde_json::from_str(r#"{"t_end": 2.0, "order": 4, "projection_mode": "gradient"}"#).unwrap();
        assert_eq!(cfg.order, DerivativeOrder::Fourth);
        assert_eq!(cfg.projection_mode, ProjectionMode::Gradient);
        assert!(serde_json::from_str::<FlowConfig>(r#"{"order": 3}"#).is_err());
    }
}
