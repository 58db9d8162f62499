//! End-to-end runs: single operating points, Cartesian sweeps, and the
//! tables and reports written for them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Profile, RunConfig};
use crate::constants::{PhysicalConstants, TWO_PI};
use crate::correlations::{build_grid, CorrelationGrid, GridDiagnostics};
use crate::dynamics::{prepare_initial, steady_state_from, with_ground_spin};
use crate::error::{Error, Result};
use crate::operator::StateMatrix;
use crate::merit::{analytic_suite, evaluate_gate, AnalyticEstimate, MeritReport};
use crate::model::{
    build_bath_model, build_model, derive, feasibility, DerivedParams, FeasibilityReport, SystemParams, Truncation,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything computed for one operating point.
#[derive(Clone, Debug, Serialize)]
pub struct PointReport {
    pub params: SystemParams,
    pub derived: DerivedParams,
    pub feasibility: FeasibilityReport,
    /// Truncation actually used after any escalation.
    pub truncation: Truncation,
    pub escalations: usize,
    pub truncation_adequate: bool,
    pub diagnostics: GridDiagnostics,
    pub merits: MeritReport,
}

/// One row of a sweep: the axis values and either a report or the error.
#[derive(Clone, Debug)]
pub struct PointOutcome {
    pub axes: Vec<(String, f64)>,
    pub result: std::result::Result<PointReport, String>,
}

#[derive(Clone, Debug)]
pub struct Provenance {
    pub version: String,
    pub constants: String,
    pub config_hash: String,
    pub profile: Profile,
}

impl Provenance {
    pub fn new(config: &RunConfig, profile: Profile) -> Self {
        Self {
            version: VERSION.to_string(),
            constants: PhysicalConstants::CODATA_2018.describe(),
            config_hash: config.hash(),
            profile,
        }
    }

    pub fn header(&self) -> String {
        let profile = match self.profile {
            Profile::Full => "full",
            Profile::Fast => "fast",
        };
        format!(
            "# nvphoton {}\n# constants: {}\n# config sha256: {}\n# profile: {profile}\n\
             # units: configuration rates in Hz are multiplied by 2*pi internally; times in s; temperature in K\n",
            self.version, self.constants, self.config_hash
        )
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub axes: Vec<String>,
    pub points: Vec<PointOutcome>,
    pub provenance: Provenance,
}

/// Output of the shared simulation behind one or more gates.
pub struct Simulation {
    pub grid: CorrelationGrid,
    pub truncation: Truncation,
    pub escalations: usize,
    pub truncation_adequate: bool,
}

/// Cooling equilibrium, spin excitation and correlation grid over
/// `[t_l, t_u]`, escalating the truncation while any top Fock level holds
/// more than the configured population.
pub fn simulate(config: &RunConfig, params: &SystemParams, profile: Profile, t_l: f64, t_u: f64) -> Result<Simulation> {
    let solver = &config.solver;
    let evolve = solver.evolve_config(params.f_m);
    let marching = solver.steady_config(params.f_m);
    let spec = config.grid_for(profile).spec(t_l, t_u);
    spec.validate().map_err(|e| e.at("grid"))?;
    let mut trunc = config.truncation_for(profile);
    let mut escalations = 0;
    let mut previous: Option<StateMatrix> = None;
    loop {
        let bath = build_bath_model(params, trunc).map_err(|e| e.at("model"))?;
        // an escalated cooling stage starts from the smaller solution
        let start = match &previous {
            Some(rho) => rho.resized(bath.layout.clone())?,
            None => StateMatrix::vacuum(bath.layout.clone()),
        };
        let rho_bath =
            steady_state_from(&bath, &marching, solver.steady, &start).map_err(|e| e.at("cooling steady state"))?;
        let model = build_model(params, trunc, true).map_err(|e| e.at("model"))?;
        let rho0 = prepare_initial(&with_ground_spin(&rho_bath)).map_err(|e| e.at("initial state"))?;
        let grid = build_grid(&model, &rho0, spec, &evolve, solver.correlations).map_err(|e| e.at("correlations"))?;

        let over: Vec<&str> = grid
            .diagnostics
            .top_fock
            .iter()
            .filter(|(_, p)| *p >= solver.top_fock_limit)
            .map(|(label, _)| label.as_str())
            .collect();
        if over.is_empty() || escalations >= config.escalation_budget_for(profile) {
            if !over.is_empty() {
                log::warn!("truncation budget exhausted with {over:?} above the top-level limit");
            }
            return Ok(Simulation { truncation_adequate: over.is_empty(), grid, truncation: trunc, escalations });
        }
        for label in over {
            let slot = match label {
                "phonon" => &mut trunc.n_b,
                "photon" => &mut trunc.n_a,
                _ => &mut trunc.n_c,
            };
            *slot += solver.escalation_step;
        }
        previous = Some(rho_bath);
        escalations += 1;
        log::info!("escalating truncation to {trunc:?}");
    }
}

fn point_report(sim: &Simulation, params: &SystemParams, merits: MeritReport) -> Result<PointReport> {
    let derived = derive(params, &PhysicalConstants::CODATA_2018)?;
    Ok(PointReport {
        params: *params,
        derived,
        feasibility: feasibility(params, &derived),
        truncation: sim.truncation,
        escalations: sim.escalations,
        truncation_adequate: sim.truncation_adequate,
        diagnostics: sim.grid.diagnostics.clone(),
        merits,
    })
}

/// Full pipeline for the configured point with `overrides` applied.
pub fn run_point(config: &RunConfig, overrides: &[(String, f64)], profile: Profile) -> Result<PointReport> {
    let params = config.point_params(overrides, profile)?;
    derive(&params, &PhysicalConstants::CODATA_2018).map_err(|e| e.at("derived parameters"))?;
    let sim = simulate(config, &params, profile, params.t_l, params.t_u)?;
    let merits = evaluate_gate(&sim.grid, params.kappa_sp, params.t_l, params.t_u).map_err(|e| e.at("merits"))?;
    point_report(&sim, &params, merits)
}

/// Points that differ only in their gate share one evolution.
fn group_points(config: &RunConfig, points: &[Vec<(String, f64)>]) -> Vec<Vec<usize>> {
    let gate_paths: Vec<&str> = config.sweep.iter().filter(|a| a.is_gate()).map(|a| a.path.as_str()).collect();
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, point) in points.iter().enumerate() {
        let key = point
            .iter()
            .filter(|(path, _)| !gate_paths.contains(&path.as_str()))
            .map(|(path, v)| format!("{path}={v:e}"))
            .collect::<Vec<_>>()
            .join(",");
        groups.entry(key).or_default().push(i);
    }
    groups.into_values().collect()
}

fn run_group(
    config: &RunConfig,
    points: &[Vec<(String, f64)>],
    members: &[usize],
    profile: Profile,
) -> Vec<std::result::Result<PointReport, String>> {
    let params: Vec<Result<SystemParams>> = members.iter().map(|&i| config.point_params(&points[i], profile)).collect();
    let valid: Vec<&SystemParams> = params.iter().filter_map(|p| p.as_ref().ok()).collect();
    let Some(first) = valid.first() else {
        return params.into_iter().map(|p| Err(p.expect_err("all invalid").to_string())).collect();
    };
    let t_l = valid.iter().map(|p| p.t_l).fold(f64::INFINITY, f64::min);
    let t_u = valid.iter().map(|p| p.t_u).fold(0.0, f64::max);
    let shared = SystemParams { t_l, t_u, ..**first };
    let sim = simulate(config, &shared, profile, t_l, t_u);
    params
        .into_iter()
        .map(|p| {
            let p = p.map_err(|e| e.to_string())?;
            let sim = sim.as_ref().map_err(|e| e.to_string())?;
            let merits = evaluate_gate(&sim.grid, p.kappa_sp, p.t_l, p.t_u)
                .map_err(|e| e.at("merits").to_string())?;
            point_report(sim, &p, merits).map_err(|e| e.to_string())
        })
        .collect()
}

/// Table rows are written in point order as soon as all earlier rows exist.
struct OrderedSink<'w> {
    next: usize,
    pending: BTreeMap<usize, Vec<String>>,
    writer: csv::Writer<&'w mut (dyn Write + Send)>,
    error: Option<csv::Error>,
}

impl OrderedSink<'_> {
    fn push(&mut self, index: usize, record: Vec<String>) {
        self.pending.insert(index, record);
        while let Some(rec) = self.pending.remove(&self.next) {
            let written = self.writer.write_record(&rec).and_then(|_| self.writer.flush().map_err(csv::Error::from));
            if let Err(e) = written {
                self.error.get_or_insert(e);
            }
            self.next += 1;
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Runs every Cartesian point of the configured sweep (or the base point
/// when there are no axes). When `sink` is given the CSV table is written
/// to it row by row in point order.
pub fn run_sweep(config: &RunConfig, profile: Profile, sink: Option<&mut (dyn Write + Send)>) -> Result<SweepResult> {
    let points = config.sweep_points();
    let axes: Vec<String> = config.sweep.iter().map(|a| a.path.clone()).collect();
    let provenance = Provenance::new(config, profile);
    let sink = match sink {
        Some(out) => {
            out.write_all(provenance.header().as_bytes())?;
            let mut writer = csv::Writer::from_writer(out);
            writer.write_record(csv_header(&axes)).map_err(csv_error)?;
            Some(Mutex::new(OrderedSink { next: 0, pending: BTreeMap::new(), writer, error: None }))
        }
        None => None,
    };
    let groups = group_points(config, &points);
    let mut rows: Vec<(usize, PointOutcome)> = groups
        .par_iter()
        .flat_map_iter(|members| {
            let results = run_group(config, &points, members, profile);
            let rows: Vec<(usize, PointOutcome)> = members
                .iter()
                .zip(results)
                .map(|(&i, result)| {
                    if let Err(e) = &result {
                        log::warn!("point {i} failed: {e}");
                    }
                    (i, PointOutcome { axes: points[i].clone(), result })
                })
                .collect();
            if let Some(sink) = &sink {
                let mut sink = sink.lock().expect("sink lock");
                for (i, row) in &rows {
                    sink.push(*i, csv_record(row));
                }
            }
            rows
        })
        .collect();
    if let Some(sink) = sink {
        if let Some(e) = sink.into_inner().expect("sink lock").error {
            return Err(csv_error(e));
        }
    }
    rows.sort_by_key(|(i, _)| *i);
    Ok(SweepResult { axes, points: rows.into_iter().map(|(_, r)| r).collect(), provenance })
}

const METRIC_COLUMNS: [&str; 18] = [
    "t_l",
    "t_u",
    "beta",
    "g2",
    "indistinguishability",
    "n_norm",
    "delta_g2",
    "delta_indistinguishability",
    "delta_n_norm",
    "n_b",
    "n_a",
    "n_c",
    "truncation_adequate",
    "sideband_resolved",
    "no_normal_mode_splitting",
    "cooling_sufficient",
    "adiabatic_ok",
    "rwa_ok",
];

pub fn csv_header(axes: &[String]) -> Vec<String> {
    axes.iter()
        .cloned()
        .chain(METRIC_COLUMNS.iter().map(|s| s.to_string()))
        .chain(std::iter::once("error".to_string()))
        .collect()
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), num)
}

pub fn csv_record(row: &PointOutcome) -> Vec<String> {
    let mut rec: Vec<String> = row.axes.iter().map(|(_, v)| num(*v)).collect();
    match &row.result {
        Ok(r) => {
            let m = &r.merits;
            let f = &r.feasibility;
            rec.extend([
                num(m.t_l),
                num(m.t_u),
                num(m.beta),
                opt(m.g2),
                opt(m.indistinguishability),
                num(m.n_norm),
                opt(m.convergence.g2),
                opt(m.convergence.indistinguishability),
                opt(m.convergence.normalization),
                r.truncation.n_b.to_string(),
                r.truncation.n_a.to_string(),
                r.truncation.n_c.to_string(),
                r.truncation_adequate.to_string(),
                f.sideband_resolved.ok.to_string(),
                f.no_normal_mode_splitting.ok.to_string(),
                f.cooling_sufficient.ok.to_string(),
                f.adiabatic_ok.to_string(),
                f.rwa_ok.to_string(),
                String::new(),
            ]);
        }
        Err(e) => {
            rec.extend(std::iter::repeat_n(String::new(), METRIC_COLUMNS.len()));
            rec.push(e.clone());
        }
    }
    rec
}

/// Whole table including the provenance header.
pub fn render_csv(result: &SweepResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header(&result.axes)).map_err(csv_error)?;
    for row in &result.points {
        w.write_record(csv_record(row)).map_err(csv_error)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?)
        .expect("csv output is utf-8");
    Ok(format!("{}{body}", result.provenance.header()))
}

/// Axis label with units for plotting.
pub fn axis_label(path: &str) -> String {
    let label = match path {
        "params.t_u" => "gate end time t_u (s)",
        "params.t_l" => "gate start time t_l (s)",
        "params.gate_length" => "total gate time t_u - t_l (s)",
        "params.q_m" => "mechanical quality factor Q_m",
        "params.gamma_star" => "spin dephasing rate gamma*/2pi (Hz)",
        "params.temperature" => "temperature T (K)",
        "params.g_c" => "cooling coupling g_c/2pi (Hz)",
        "params.kappa_c" => "cooling cavity linewidth kappa_c/2pi (Hz)",
        "params.kappa_sp" => "single-photon cavity linewidth kappa_sp/2pi (Hz)",
        "params.delta" => "Raman detuning delta/2pi (Hz)",
        "params.f_m" => "mechanical frequency f_m (Hz)",
        other => other,
    };
    label.to_string()
}

#[derive(Serialize, serde::Deserialize, Default)]
struct Manifest {
    #[serde(default)]
    panel: Vec<ManifestPanel>,
}

#[derive(Serialize, serde::Deserialize, Clone)]
struct ManifestPanel {
    name: String,
    file: String,
    x: String,
    x_label: String,
    series: Vec<String>,
    series_labels: Vec<String>,
}

/// Writes `fig2<panel>.csv` and adds the panel to `manifest.toml` in `dir`.
pub fn write_panel(dir: &Path, panel: &str, result: &SweepResult) -> Result<()> {
    let file = format!("fig2{panel}.csv");
    let mut text = format!("# panel: fig2{panel}\n");
    text.push_str(&render_csv(result)?);
    std::fs::write(dir.join(&file), text)?;

    let manifest_path = dir.join("manifest.toml");
    let mut manifest: Manifest = match std::fs::read_to_string(&manifest_path) {
        Ok(s) => toml::from_str(&s).unwrap_or_default(),
        Err(_) => Manifest::default(),
    };
    let x = result.axes.first().cloned().unwrap_or_default();
    let entry = ManifestPanel {
        name: format!("fig2{panel}"),
        file,
        x_label: axis_label(&x),
        x,
        series: vec!["indistinguishability".into(), "g2".into(), "beta".into()],
        series_labels: vec!["indistinguishability I".into(), "purity g2".into(), "brightness beta".into()],
    };
    manifest.panel.retain(|p| p.name != entry.name);
    manifest.panel.push(entry);
    manifest.panel.sort_by(|a, b| a.name.cmp(&b.name));
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(manifest_path, text)?;
    Ok(())
}

/// Closed-form feasibility checks and estimates; no simulation.
pub fn report_feasibility(config: &RunConfig, profile: Profile) -> Result<(FeasibilityReport, AnalyticEstimate)> {
    let params = config.point_params(&[], profile)?;
    let estimate = analytic_suite(&params, config.material.as_ref(), &PhysicalConstants::CODATA_2018)?;
    Ok((feasibility(&params, &estimate.derived), estimate))
}

fn hz(x: f64) -> String {
    format!("2pi x {:.6e} Hz", x / TWO_PI)
}

pub fn feasibility_text(report: &FeasibilityReport, estimate: &AnalyticEstimate) -> String {
    let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let mut s = String::new();
    let _ = writeln!(s, "sideband resolved (kappa_c < omega_m): {} (margin {:.3})", mark(report.sideband_resolved.ok), report.sideband_resolved.margin);
    let _ = writeln!(
        s,
        "no normal-mode splitting (g_c < 2 kappa_c): {} (margin {:.3})",
        mark(report.no_normal_mode_splitting.ok),
        report.no_normal_mode_splitting.margin
    );
    let _ = writeln!(
        s,
        "cooling sufficient (4 g_c^2 > n_th gamma_m (2 n_th gamma_m + kappa_c)): {} (margin {:.3})",
        mark(report.cooling_sufficient.ok),
        report.cooling_sufficient.margin
    );
    let _ = writeln!(
        s,
        "adiabatic (delta >> lambda, g_sp): {} (delta/lambda {:.3}, delta/g_sp {:.3})",
        mark(report.adiabatic_ok),
        report.delta_over_lambda,
        report.delta_over_g_sp
    );
    let _ = writeln!(
        s,
        "rotating-wave (delta, g_c << omega_q, omega_m): {} (delta/omega_q {:.3}, g_c/omega_m {:.3})",
        mark(report.rwa_ok),
        report.delta_over_omega_q,
        report.g_c_over_omega_m
    );
    let _ = writeln!(s, "critical coupling residual |delta kappa_sp - 2 g_sp lambda|/(delta kappa_sp): {:.3e}", report.critical_coupling_residual);
    let _ = writeln!(s, "overall: {}", if report.all_ok() { "feasible" } else { "infeasible" });
    s.push('\n');
    s.push_str(&analytic_text(estimate));
    s
}

pub fn analytic_text(e: &AnalyticEstimate) -> String {
    let d = &e.derived;
    let mut s = String::new();
    let _ = writeln!(s, "n_th = {:.6e}", d.n_th);
    let _ = writeln!(s, "gamma_m = {}", hz(d.gamma_m));
    let _ = writeln!(s, "n_th gamma_m = {}", hz(d.n_th * d.gamma_m));
    let _ = writeln!(s, "Omega = {}", hz(d.omega_eff));
    let _ = writeln!(s, "Gamma_th = {}", hz(d.gamma_th));
    let _ = writeln!(s, "R = {}", hz(d.emission_rate));
    let _ = writeln!(s, "beta_0 = {:.6}", d.beta_0);
    let _ = writeln!(s, "t_u_opt = pi/R = {:.6e} s", e.t_u_opt);
    let _ = writeln!(s, "critical delta = {}", hz(e.critical_delta));
    let _ = writeln!(
        s,
        "g_c window = ({}, {}){}",
        hz(e.g_c_window.0),
        hz(e.g_c_window.1),
        if e.g_c_window_feasible { "" } else { " EMPTY" }
    );
    if let Some(q) = e.q_m_estimate {
        let _ = writeln!(s, "Q_m estimate = {q:.3e}");
    }
    s
}
