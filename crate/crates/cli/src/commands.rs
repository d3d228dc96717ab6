use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use lagflow::flow::{run_with_hooks, FlowState, Termination};
use lagflow::generators::{validate_map, validate_profile};
use lagflow::observables::{density_resolved, gaussian_density, parabolic_rescale, write_csv, RescaleSpec, SpaceTimePoint};
use lagflow::sphere::run_sphere_with_hooks;
use lagflow::{compute_geometry, generate, FlowResult, Generated, MapGrid, TwistProfile, ValidationReport};

use crate::config::{Geometry, RunConfig};
use crate::files::{list_snapshots, Meta, OutputHooks, Snapshot};
use crate::CliError;

/// How a command finished when it did not fail outright.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    GeometricFailure,
}

enum Initial {
    Torus(MapGrid, Option<f64>),
    Sphere(TwistProfile),
}

fn initial_surface(config: &RunConfig) -> Result<Initial, CliError> {
    if let Some(path) = &config.input {
        return Ok(match config.geometry {
            Geometry::Torus => Initial::Torus(MapGrid::read_from(path)?, None),
            Geometry::Sphere => Initial::Sphere(TwistProfile::read_from(path)?),
        });
    }
    Ok(match generate(&config.generator, config.flow.n)? {
        Generated::Torus { map, certified_defect } => Initial::Torus(map, certified_defect),
        Generated::Sphere(p) => Initial::Sphere(p),
    })
}

fn report_text(r: &ValidationReport, certified: Option<f64>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "jacobian_min = {:.16e}", r.jacobian_min);
    let _ = writeln!(s, "defect_sup = {:.16e}", r.defect_sup);
    let _ = writeln!(s, "defect_l2 = {:.16e}", r.defect_l2);
    let _ = writeln!(s, "min_eta = {:.16e}", r.min_eta);
    let _ = writeln!(s, "is_diffeo = {}", r.is_diffeo);
    match certified {
        Some(d) => {
            let _ = writeln!(s, "certified_defect = {d:.16e}");
        }
        None => s.push_str("certified_defect = none\n"),
    }
    s
}

/// Writes `initial.<ext>` and `validation.txt`; returns the surface and its report.
fn prepare(config: &RunConfig, out: &Path) -> Result<(Initial, ValidationReport, String), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    let initial = initial_surface(config)?;
    let order = config.flow.order;
    let (report, certified) = match &initial {
        Initial::Torus(map, cert) => {
            map.save(&out.join(format!("initial.{}", MapGrid::EXT)))?;
            (validate_map(map, order)?, *cert)
        }
        Initial::Sphere(p) => {
            p.save(&out.join(format!("initial.{}", TwistProfile::EXT)))?;
            (validate_profile(p, order)?, Some(0.0))
        }
    };
    let text = report_text(&report, certified);
    fs::write(out.join("validation.txt"), &text)?;
    Ok((initial, report, text))
}

pub fn cmd_generate(config: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let (_, report, text) = prepare(config, out)?;
    print!("{text}");
    if report.is_diffeo {
        Ok(Outcome::Success)
    } else {
        eprintln!("error: generated map is not a diffeomorphism");
        Ok(Outcome::GeometricFailure)
    }
}

fn termination_code(t: &Termination) -> &'static str {
    match t {
        Termination::ReachedEnd => "reached_end",
        Termination::Converged => "converged",
        Termination::StepLimit => "step_limit",
        Termination::Degenerate(_) => "degenerate",
        Termination::Unresolved { .. } => "unresolved",
        Termination::NonFinite(_) => "non_finite",
    }
}

fn finish<M: Snapshot>(result: &FlowResult<M>, hooks: &OutputHooks, out: &Path) -> Result<Outcome, CliError> {
    let state = &result.state;
    if state.step_index % hooks.stride != 0 {
        hooks.snapshot(state)?;
    }
    let mut w = BufWriter::new(fs::File::create(out.join("timeseries.csv"))?);
    write_csv(&mut w, &state.history)?;
    w.flush()?;
    state.map.save(&out.join(format!("final.{}", M::EXT)))?;
    let term = &result.termination;
    let text = format!(
        "termination = {}\ndetail = {}\nt = {:.16e}\nsteps = {}\nrows = {}\n",
        termination_code(term),
        term.describe(),
        state.t,
        state.step_index,
        state.history.len()
    );
    fs::write(out.join("termination.txt"), &text)?;
    print!("{text}");
    if term.is_abort() {
        eprintln!("error: run aborted: {}", term.describe());
        Ok(Outcome::GeometricFailure)
    } else {
        Ok(Outcome::Success)
    }
}

fn run_from<M: Snapshot>(
    config: &RunConfig,
    state: FlowState<M>,
    out: &Path,
    runner: impl FnOnce(FlowState<M>, &mut OutputHooks) -> lagflow::Result<FlowResult<M>>,
) -> Result<Outcome, CliError> {
    let mut hooks = OutputHooks::new(out, config.emit_snapshots, config.snapshot_stride.max(1))?;
    if state.step_index % hooks.stride == 0 {
        hooks.snapshot(&state)?;
    }
    let result = runner(state, &mut hooks)?;
    finish(&result, &hooks, out)
}

pub fn cmd_run(config: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let (initial, report, _) = prepare(config, out)?;
    if !report.is_diffeo {
        eprintln!("error: initial map is not a diffeomorphism");
        return Ok(Outcome::GeometricFailure);
    }
    let flow = &config.flow;
    match initial {
        Initial::Torus(map, _) => run_from(config, FlowState::new(map), out, |s, h| run_with_hooks(flow, s, h)),
        Initial::Sphere(p) => run_from(config, FlowState::new(p), out, |s, h| run_sphere_with_hooks(flow, s, h)),
    }
}

pub fn cmd_resume(config: &RunConfig, checkpoint: &Path, out: &Path) -> Result<Outcome, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    let meta = Meta::read(&crate::files::meta_path(checkpoint))?;
    let flow = &config.flow;
    match config.geometry {
        Geometry::Torus => {
            let state = FlowState::resumed(MapGrid::read_from(checkpoint)?, meta.t, meta.step);
            run_from(config, state, out, |s, h| run_with_hooks(flow, s, h))
        }
        Geometry::Sphere => {
            let state = FlowState::resumed(TwistProfile::read_from(checkpoint)?, meta.t, meta.step);
            run_from(config, state, out, |s, h| run_sphere_with_hooks(flow, s, h))
        }
    }
}

struct History {
    maps: Vec<(MapGrid, Meta)>,
    t0: f64,
    center: [f64; 4],
}

fn load_history(config: &RunConfig, out: &Path) -> Result<History, CliError> {
    if config.geometry != Geometry::Torus {
        return Err(CliError::Config("diagnostics are defined for torus runs only".into()));
    }
    let dir = out.join("snapshots");
    let listed = list_snapshots(&dir, MapGrid::EXT)
        .map_err(|e| CliError::Config(format!("no history in {}: {e}", dir.display())))?;
    if listed.is_empty() {
        return Err(CliError::Config(format!("no snapshots in {}", dir.display())));
    }
    let mut maps = Vec::with_capacity(listed.len());
    for (path, meta) in listed {
        maps.push((MapGrid::read_from(&path)?, meta));
    }
    let d = &config.diagnose;
    let t0 = d.t0.unwrap_or(maps[maps.len() - 1].1.t);
    let (center_map, _) = maps
        .iter()
        .filter(|(_, m)| m.t <= t0)
        .last()
        .ok_or_else(|| CliError::Config(format!("t0 = {t0} precedes the recorded history")))?;
    let [i, j] = d.center_node;
    if i >= center_map.n() || j >= center_map.n() {
        return Err(CliError::Config(format!("center node ({i}, {j}) outside the grid")));
    }
    let center = center_map.lifted_point(i, j);
    Ok(History { maps, t0, center })
}

pub fn cmd_density(config: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let hist = load_history(config, out)?;
    let center = SpaceTimePoint { x: hist.center, t: hist.t0 };
    let mut w = BufWriter::new(fs::File::create(out.join("density.csv"))?);
    writeln!(w, "t,density")?;
    // rows whose kernel is narrower than the grid can resolve are skipped
    let resolved = |map: &MapGrid, t: f64| density_resolved(hist.t0 - t, map.spacing());
    for (map, meta) in hist.maps.iter().filter(|(m, meta)| resolved(m, meta.t)) {
        let geom = compute_geometry(map, config.flow.order)?;
        let d = gaussian_density(map, &geom, meta.t, &center)?;
        writeln!(w, "{:.16e},{:.16e}", meta.t, d)?;
    }
    w.flush()?;
    Ok(Outcome::Success)
}

pub fn cmd_rescale(config: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let hist = load_history(config, out)?;
    let spec = RescaleSpec {
        center: SpaceTimePoint { x: hist.center, t: hist.t0 },
        lambda: config.diagnose.lambda,
    };
    let mut w = BufWriter::new(fs::File::create(out.join("rescaled.txt"))?);
    writeln!(w, "# lagflow-points lambda={:.16e} t0={:.16e}", spec.lambda, spec.center.t)?;
    writeln!(w, "# step i j t x0 x1 x2 x3")?;
    for (map, meta) in &hist.maps {
        let n = map.n();
        let points: Vec<_> = (0..n * n)
            .map(|k| SpaceTimePoint { x: map.lifted_point(k / n, k % n), t: meta.t })
            .collect();
        for (k, p) in parabolic_rescale(&points, &spec)?.iter().enumerate() {
            writeln!(
                w,
                "{} {} {} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                meta.step,
                k / n,
                k % n,
                p.t,
                p.x[0],
                p.x[1],
                p.x[2],
                p.x[3]
            )?;
        }
    }
    w.flush()?;
    Ok(Outcome::Success)
}
