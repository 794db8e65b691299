//! The five subcommands. Each writes its outputs under the run directory and
//! returns the in-memory result.

use crate::config::Loaded;
use crate::error::{CliError, Result};
use crate::fit::{fit_gap, GapFit, GapPoint};
use magtunnel::amplitude::{amplitude_profile, Subprincipal};
use magtunnel::eikonal::solve_phi;
use magtunnel::field_model::{check_assumptions, well_coefficients, AssumptionReport, AssumptionSampling};
use magtunnel_spectra::{refinement_check, solve_extrapolated, ExtrapolatedSpectrum, GaugeChoice, RefinementCheck};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const CHECK_JSON: &str = "check.json";
pub const ASYMPTOTICS_JSON: &str = "asymptotics.json";
pub const EIKONAL_CSV: &str = "eikonal_profile.csv";
pub const AMPLITUDE_CSV: &str = "amplitude_profile.csv";
pub const SWEEP_JSON: &str = "sweep.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_DIR: &str = "spectra";
pub const FIT_JSON: &str = "fit.json";
pub const REPORT_JSON: &str = "report.json";
pub const PLOT_CSV: &str = "gap_plot.csv";

/// Tolerances re-asserted on the asymptotic pipeline.
pub const EIKONAL_RESIDUAL_TOL: f64 = 1e-10;
pub const ACTION_ROUTE_TOL: f64 = 1e-9;
pub const PHI_DD_TOL: f64 = 1e-8;
pub const CONST_CHECK_TOL: f64 = 1e-6;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    if !path.exists() {
        return Err(CliError::MissingInput { path: path.to_path_buf(), what });
    }
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

// check

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutput {
    pub params: magtunnel::field_model::ExampleFieldParams,
    pub variation_bound: f64,
    pub report: AssumptionReport,
}

impl CheckOutput {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.report.checks {
            s.push_str(&format!(
                "{:<22} {}  margin {:+.3e}  worst at q1 = {:+.4}{:+.4}i, q2 = {:+.4}\n",
                c.name,
                if c.passed { "ok  " } else { "FAIL" },
                c.margin,
                c.worst_q1_re,
                c.worst_q1_im,
                c.worst_q2
            ));
        }
        s.push_str(if self.report.all_passed { "all assumptions hold\n" } else { "assumptions violated\n" });
        s
    }
}

pub fn cmd_check(run: &Loaded) -> Result<CheckOutput> {
    let report = check_assumptions(&run.field, &AssumptionSampling::for_field(&run.field));
    let out = CheckOutput { params: run.params, variation_bound: run.field.eps, report };
    write_json(&run.out_dir().join(CHECK_JSON), &out)?;
    Ok(out)
}

fn require_check(run: &Loaded) -> Result<()> {
    let out = cmd_check(run)?;
    if out.report.all_passed {
        return Ok(());
    }
    let failed: Vec<&str> = out.report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    Err(CliError::Invariant(format!("field assumptions fail: {}", failed.join(", "))))
}

// asymptotics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsOutput {
    pub b0: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub phi_dd_cu: f64,
    pub z2_closed: f64,
    pub z2_transport: f64,
    pub c0: f64,
    pub const_check_spread: f64,
    pub subprincipal: Subprincipal,
    /// The two evaluations of the action.
    pub s_nested: f64,
    pub s_via_gamma: f64,
    pub phi_dd_cu_direct: f64,
    pub eikonal_max_residual: f64,
    pub c0_secondary: f64,
    pub jcal_route_gap: f64,
    pub transport_residual: f64,
    pub d0: f64,
    pub d1: f64,
    /// `(z2_transport - z2_closed) / z2_closed`.
    pub z2_rel_gap: f64,
}

fn invariant(name: &str, value: f64, tol: f64) -> Result<()> {
    if value <= tol {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("{name}: {value:e} exceeds {tol:e}")))
    }
}

pub fn cmd_asymptotics(run: &Loaded) -> Result<AsymptoticsOutput> {
    require_check(run)?;
    let f = &run.field;
    let prof = solve_phi(f, &run.seal, &run.eikonal_grid())?;
    invariant("eikonal residual / b0", prof.max_residual, EIKONAL_RESIDUAL_TOL)?;
    invariant("action route gap", prof.action.rel_gap(), ACTION_ROUTE_TOL)?;
    invariant(
        "phi''(c_u) against -b0 gamma'(c_u)",
        (prof.ddphi_cu_direct - prof.ddphi_cu).abs() / prof.ddphi_cu.abs(),
        PHI_DD_TOL,
    )?;
    if !(prof.s > 0.0) {
        return Err(CliError::Invariant(format!("action S = {} is not positive", prof.s)));
    }
    let amp = amplitude_profile(f, &prof, &run.config.amplitude.options())?;
    invariant("a0(x) conj(a0(-x)) J(x) spread", amp.const_check_spread, CONST_CHECK_TOL)?;
    let wc = well_coefficients(f)?;

    let dir = run.out_dir();
    ensure_dir(dir)?;
    prof.write_csv(&dir.join(EIKONAL_CSV))?;
    amp.write_csv(&dir.join(AMPLITUDE_CSV))?;
    let out = AsymptoticsOutput {
        b0: f.b0,
        s: prof.s,
        phi_dd_cu: amp.phi_dd_cu,
        z2_closed: amp.z2_closed,
        z2_transport: amp.z2_transport.re,
        c0: amp.c0,
        const_check_spread: amp.const_check_spread,
        subprincipal: run.config.amplitude.subprincipal,
        s_nested: prof.action.nested,
        s_via_gamma: prof.action.via_gamma,
        phi_dd_cu_direct: prof.ddphi_cu_direct,
        eikonal_max_residual: prof.max_residual,
        c0_secondary: amp.c0_secondary,
        jcal_route_gap: amp.jcal_route_gap,
        transport_residual: amp.transport_residual,
        d0: wc.d0,
        d1: wc.d1,
        z2_rel_gap: (amp.z2_transport.re - amp.z2_closed) / amp.z2_closed,
    };
    write_json(&dir.join(ASYMPTOTICS_JSON), &out)?;
    Ok(out)
}

// sweep

/// Outcome at one `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub h: f64,
    /// Path of the per-`h` spectrum JSON, relative to the run directory.
    pub file: Option<String>,
    pub eigenvalues: Vec<f64>,
    pub gap: Option<f64>,
    pub parities: Vec<i8>,
    pub noise_floor: Option<f64>,
    pub gap_refinement_shift: Option<f64>,
    /// Set when the solve failed or an invariant of the pair does not hold.
    pub error: Option<String>,
    pub invariant_violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub gauge: GaugeChoice,
    pub seed: u64,
    /// Sorted by decreasing `h`.
    pub entries: Vec<SweepEntry>,
    /// `d ln(gap) / d(1/h)` between consecutive successful points.
    pub log_gap_slopes: Vec<f64>,
    pub refinement: Option<RefinementCheck>,
    pub refinement_error: Option<String>,
    pub failed: Vec<f64>,
}

impl SweepOutput {
    /// Exit status of the sweep: 1 if a pair invariant fails, 2 if a solve failed.
    pub fn exit_code(&self) -> i32 {
        if self.entries.iter().any(|e| e.invariant_violated) {
            1
        } else if !self.failed.is_empty() || self.refinement_error.is_some() {
            2
        } else {
            0
        }
    }

    pub fn gap_points(&self) -> Vec<GapPoint> {
        self.entries
            .iter()
            .filter(|e| e.error.is_none())
            .filter_map(|e| {
                Some(GapPoint {
                    h: e.h,
                    gap: e.gap?,
                    noise_floor: e.noise_floor?,
                    rel_uncertainty: e.gap_refinement_shift?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Serialize)]
struct SweepRow {
    h: f64,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    gap: Option<f64>,
    parity1: Option<i8>,
    parity2: Option<i8>,
    noise_floor: Option<f64>,
    gap_refinement_shift: Option<f64>,
    status: &'static str,
}

pub fn spectrum_file(h: f64) -> String {
    format!("{SWEEP_DIR}/h_{h:.6}.json")
}

fn sweep_one(run: &Loaded, h: f64) -> Result<ExtrapolatedSpectrum> {
    let grid = run.grid(h)?;
    Ok(solve_extrapolated(&run.field, run.config.spectra.gauge, &grid, h, &run.solver_options())?)
}

fn entry_from(run: &Loaded, h: f64, res: Result<ExtrapolatedSpectrum>) -> Result<SweepEntry> {
    let mut e = SweepEntry {
        h,
        file: None,
        eigenvalues: vec![],
        gap: None,
        parities: vec![],
        noise_floor: None,
        gap_refinement_shift: None,
        error: None,
        invariant_violated: false,
    };
    match res {
        Err(err) => e.error = Some(err.to_string()),
        Ok(s) => {
            let file = spectrum_file(h);
            write_json(&run.out_dir().join(&file), &s)?;
            e.file = Some(file);
            e.eigenvalues = s.eigenvalues.clone();
            e.gap = Some(s.gap);
            e.parities = s.parities.clone();
            e.noise_floor = Some(s.noise_floor);
            e.gap_refinement_shift = Some(s.gap_refinement_shift);
            if !(s.gap > 0.0) {
                e.error = Some(format!("gap {} is not positive", s.gap));
                e.invariant_violated = true;
            } else if s.parities.len() < 2 || s.parities[0] * s.parities[1] != -1 {
                e.error = Some(format!("parities {:?} of the pair are not opposite", s.parities));
                e.invariant_violated = true;
            }
        }
    }
    Ok(e)
}

pub fn cmd_sweep(run: &Loaded) -> Result<SweepOutput> {
    require_check(run)?;
    let hs = &run.config.spectra.h;
    let results: Vec<(f64, Result<ExtrapolatedSpectrum>)> = hs.par_iter().map(|&h| (h, sweep_one(run, h))).collect();
    let mut entries = results
        .into_iter()
        .map(|(h, r)| entry_from(run, h, r))
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| b.h.total_cmp(&a.h));

    let ok: Vec<(f64, f64)> = entries.iter().filter(|e| e.error.is_none()).filter_map(|e| Some((e.h, e.gap?))).collect();
    let log_gap_slopes = ok.windows(2).map(|w| (w[1].1.ln() - w[0].1.ln()) / (1.0 / w[1].0 - 1.0 / w[0].0)).collect();
    let (refinement, refinement_error) = if run.config.spectra.refinement_check {
        let h = hs[0];
        let r = run.grid(h).and_then(|g| {
            Ok(refinement_check(&run.field, run.config.spectra.gauge, &g, h, &run.solver_options())?)
        });
        match r {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    let failed = entries.iter().filter(|e| e.error.is_some()).map(|e| e.h).collect();
    let out = SweepOutput {
        gauge: run.config.spectra.gauge,
        seed: run.config.seed,
        entries,
        log_gap_slopes,
        refinement,
        refinement_error,
        failed,
    };
    write_sweep(run.out_dir(), &out)?;
    Ok(out)
}

pub fn write_sweep(dir: &Path, out: &SweepOutput) -> Result<()> {
    write_json(&dir.join(SWEEP_JSON), out)?;
    let path = dir.join(SWEEP_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Numerical(format!("{}: {e}", path.display())))?;
    for e in &out.entries {
        let row = SweepRow {
            h: e.h,
            lambda1: e.eigenvalues.first().copied(),
            lambda2: e.eigenvalues.get(1).copied(),
            gap: e.gap,
            parity1: e.parities.first().copied(),
            parity2: e.parities.get(1).copied(),
            noise_floor: e.noise_floor,
            gap_refinement_shift: e.gap_refinement_shift,
            status: if e.error.is_none() { "ok" } else { "failed" },
        };
        w.serialize(row).map_err(|e| CliError::Numerical(e.to_string()))?;
    }
    w.flush().map_err(CliError::io(&path))
}

// fit

pub fn cmd_fit(run: &Loaded) -> Result<GapFit> {
    let dir = run.out_dir();
    let sweep: SweepOutput = read_json(&dir.join(SWEEP_JSON), "sweep output (run `sweep` first)")?;
    let asym: AsymptoticsOutput = read_json(&dir.join(ASYMPTOTICS_JSON), "asymptotics output (run `asymptotics` first)")?;
    let fit = fit_gap(&sweep.gap_points(), asym.s, asym.c0, &run.config.fit)?;
    write_json(&dir.join(FIT_JSON), &fit)?;
    Ok(fit)
}

// report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPoint {
    pub h: f64,
    pub gap: Option<f64>,
    pub parities: Vec<i8>,
    pub used_in_fit: bool,
    /// Empty when the point is usable.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check: Option<CheckOutput>,
    pub asymptotics: AsymptoticsOutput,
    pub points: Vec<ReportPoint>,
    pub refinement: Option<RefinementCheck>,
    pub fit: Option<GapFit>,
    /// Missing pieces and failed points.
    pub flags: Vec<String>,
}

#[derive(Debug, Serialize)]
struct PlotRow {
    h: f64,
    inv_h: f64,
    /// `ln(gap h^{-3/2})`.
    log_compensated_gap: f64,
    used_in_fit: bool,
    /// `ln c0_fit - S_fit / h`.
    fit_line: Option<f64>,
    /// `ln c0_pred - S_pred / h`.
    predicted_line: f64,
}

pub fn cmd_report(run: &Loaded) -> Result<Report> {
    let dir = run.out_dir();
    let sweep: SweepOutput = read_json(&dir.join(SWEEP_JSON), "sweep output (run `sweep` first)")?;
    let asymptotics: AsymptoticsOutput =
        read_json(&dir.join(ASYMPTOTICS_JSON), "asymptotics output (run `asymptotics` first)")?;
    build_report(dir, sweep, asymptotics)
}

/// Merges the outputs under `dir`; `check.json` and `fit.json` are optional and flagged when absent.
pub fn build_report(dir: &Path, sweep: SweepOutput, asymptotics: AsymptoticsOutput) -> Result<Report> {
    if sweep.entries.iter().all(|e| e.error.is_some() || e.gap.is_none()) {
        return Err(CliError::Numerical("sweep contains no successful point".into()));
    }
    let mut flags = Vec::new();
    let optional = |name: &str, flags: &mut Vec<String>| -> Option<PathBuf> {
        let p = dir.join(name);
        if p.exists() {
            Some(p)
        } else {
            flags.push(format!("{name} missing"));
            None
        }
    };
    let check: Option<CheckOutput> = match optional(CHECK_JSON, &mut flags) {
        Some(p) => Some(read_json(&p, "check output")?),
        None => None,
    };
    let fit: Option<GapFit> = match optional(FIT_JSON, &mut flags) {
        Some(p) => Some(read_json(&p, "fit output")?),
        None => None,
    };
    if let Some(e) = &sweep.refinement_error {
        flags.push(format!("refinement check failed: {e}"));
    }
    let used = |h: f64| fit.as_ref().is_some_and(|f| f.points.iter().any(|p| p.h == h && p.used));
    let points: Vec<ReportPoint> = sweep
        .entries
        .iter()
        .map(|e| {
            let flag = match (&e.error, &fit) {
                (Some(err), _) => Some(format!("h = {}: {err}", e.h)),
                (None, Some(_)) if !used(e.h) => Some(format!("h = {}: below the noise window", e.h)),
                _ => None,
            };
            ReportPoint { h: e.h, gap: e.gap, parities: e.parities.clone(), used_in_fit: used(e.h), flag }
        })
        .collect();
    flags.extend(points.iter().filter_map(|p| p.flag.clone()));

    let path = dir.join(PLOT_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Numerical(format!("{}: {e}", path.display())))?;
    for p in &points {
        let Some(gap) = p.gap.filter(|g| *g > 0.0 && p.flag.as_deref().map_or(true, |f| f.contains("noise window")))
        else {
            continue;
        };
        let row = PlotRow {
            h: p.h,
            inv_h: 1.0 / p.h,
            log_compensated_gap: gap.ln() - 1.5 * p.h.ln(),
            used_in_fit: p.used_in_fit,
            fit_line: fit.as_ref().map(|f| f.c0_fit.ln() - f.s_fit / p.h),
            predicted_line: asymptotics.c0.ln() - asymptotics.s / p.h,
        };
        w.serialize(row).map_err(|e| CliError::Numerical(e.to_string()))?;
    }
    w.flush().map_err(CliError::io(&path))?;

    let report = Report { check, asymptotics, points, refinement: sweep.refinement, fit, flags };
    write_json(&dir.join(REPORT_JSON), &report)?;
    Ok(report)
}
