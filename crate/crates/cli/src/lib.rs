//! Pipelines behind the `crossbif` binary: read a config, run one analysis,
//! write a JSON report plus CSV curves.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use crossbif::classifier::destruction_check_map;
use crossbif::continuation::{
    continue_branch, find_trace2_crossings, newton_fixed_point, split_cross_branches, trace_on_branch,
    verify_fork_slopes, verify_transcritical_slopes, Boundary, Branch, BranchFits, Parametrization,
};
use crossbif::family::{BuiltinKind, FdSteps};
use crossbif::ode::OdeOptions;
use crossbif::perturbation::{analyze, preservation_smoke, rotation_case, PerturbationTerm, SmokeSettings};
use crossbif::poincare::{
    libration_branch_scan, quadrature_period, Hamiltonian, LibrationContext, PoincareFamily, ScanSettings, SectionSpec,
};
use crossbif::{classify, BifurcationKind, Point3, SymplecticFamily, Tolerances};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

pub use config::{Mode, RunConfig};

pub const SCHEMA: &str = "crossbif.report/1";
pub const BUILD: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] crossbif::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    /// `{"error": code, "message": text}` for stderr.
    pub fn to_json(&self) -> String {
        json!({"error": self.code(), "message": self.to_string()}).to_string()
    }
}

/// One command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub mode: Mode,
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed_eps: Option<f64>,
    /// `name=value` overrides.
    pub tol: Vec<String>,
}

/// Report payload plus the CSV files it refers to.
pub struct Outcome {
    pub result: Value,
    pub csv: Vec<(String, String)>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// Parse, validate, run and write. Nothing is written unless the run
/// succeeds.
pub fn execute(inv: &Invocation) -> Result<Vec<PathBuf>, CliError> {
    let text = std::fs::read_to_string(&inv.config)
        .map_err(|e| CliError::Config(format!("reading {}: {e}", inv.config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if cfg.mode != inv.mode {
        return Err(CliError::Config(format!(
            "command line mode {} does not match config mode {}",
            inv.mode.name(),
            cfg.mode.name()
        )));
    }
    for t in &inv.tol {
        let (name, val) = t
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--tol expects name=value, got '{t}'")))?;
        let v: f64 = val
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("--tol {name}: '{val}' is not a number")))?;
        cfg.tolerances.insert(name.trim().to_owned(), v);
    }
    if let Some(s) = inv.seed_eps {
        if !s.is_finite() {
            return Err(CliError::Config("--seed-eps must be finite".into()));
        }
    }
    cfg.validate()?;
    let outcome = run(&cfg, inv.seed_eps)?;
    let files = render(&cfg, inv.seed_eps, outcome);
    output::write_all_atomic(&inv.out, &files)
}

/// Report text and CSV files for a finished run.
pub fn render(cfg: &RunConfig, seed_eps: Option<f64>, outcome: Outcome) -> Vec<(String, String)> {
    let artifacts: Vec<&str> = outcome.csv.iter().map(|(n, _)| n.as_str()).collect();
    let report = json!({
        "schema": SCHEMA,
        "build": BUILD,
        "mode": cfg.mode,
        "config": cfg,
        "seed_eps": seed_eps,
        "artifacts": artifacts,
        "result": outcome.result,
    });
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    let mut files = vec![(cfg.outputs.report.clone(), text)];
    files.extend(outcome.csv);
    files
}

pub fn run(cfg: &RunConfig, seed_eps: Option<f64>) -> Result<Outcome, CliError> {
    let tols = cfg.tolerances()?;
    match cfg.mode {
        Mode::ClassifyMap => classify_map(cfg, seed_eps, &tols),
        Mode::Continue => continue_mode(cfg, seed_eps, &tols),
        Mode::LibrationScan => scan_mode(cfg, &tols),
        Mode::Monodromy => monodromy_mode(cfg, &tols),
        Mode::PerturbCheck => perturb_mode(cfg, seed_eps, &tols),
    }
}

fn seeded_point(cfg: &RunConfig, seed_eps: Option<f64>) -> Result<Point3, CliError> {
    let mut pt = cfg.point()?;
    if let Some(e) = seed_eps {
        pt.eps = e;
    }
    Ok(pt)
}

fn classify_map(cfg: &RunConfig, seed_eps: Option<f64>, tols: &Tolerances) -> Result<Outcome, CliError> {
    let fam = cfg.family()?;
    let pt = seeded_point(cfg, seed_eps)?;
    let report = classify(&fam, pt, tols)?;
    let mut result = json!({ "report": report });
    if fam.kind == BuiltinKind::TwoParamExtension && report.kind.is_cross() {
        result["destruction"] = to_value(&destruction_check_map(&fam, pt, 1e-9, tols)?);
    }
    Ok(Outcome {
        result,
        csv: Vec::new(),
    })
}

#[derive(Serialize)]
struct BranchSummary<'a> {
    parametrization: Parametrization,
    samples: usize,
    param_range: Option<[f64; 2]>,
    fits: &'a BranchFits,
    boundaries: &'a [Boundary],
    skipped: &'a [f64],
    csv: String,
}

fn summary(b: &Branch, csv: String) -> BranchSummary<'_> {
    BranchSummary {
        parametrization: b.parametrization,
        samples: b.len(),
        param_range: b.param.first().zip(b.param.last()).map(|(a, z)| [*a, *z]),
        fits: &b.fits,
        boundaries: &b.boundaries,
        skipped: &b.skipped,
        csv,
    }
}

fn continue_mode(cfg: &RunConfig, seed_eps: Option<f64>, tols: &Tolerances) -> Result<Outcome, CliError> {
    let fam = cfg.family()?;
    let guess = seeded_point(cfg, seed_eps)?;
    let range = cfg.eps_range()?;
    let step = cfg.step()?;
    let stem = cfg.outputs.csv.clone().unwrap_or_else(|| "branch".into());

    let x = newton_fixed_point(&fam, guess.eps, [guess.q, guess.p], 1e-13, 60)?;
    let seed = Point3::new(x[0], x[1], guess.eps);
    let branch = trace_on_branch(&fam, continue_branch(&fam, seed, range, step)?)?;
    let search = find_trace2_crossings(&fam, &branch, tols)?;

    let mut csv = vec![(format!("{stem}.csv"), output::branch_csv(&branch))];
    let half_width = 0.5 * (range.1 - range.0);
    // The split lines are seeded ten steps out, which has to land inside
    // the window.
    let split_step = step.min(half_width / 20.0);
    let mut crossings = Vec::new();
    for (k, c) in search.crossings.iter().enumerate() {
        let mut entry = json!({ "crossing": c });
        let kind = c.report.kind;
        if matches!(
            kind,
            BifurcationKind::Rank1CrossTranscritical | BifurcationKind::Rank1CrossForkLike
        ) {
            match split_cross_branches(&fam, c.point, half_width, split_step, tols) {
                Ok((a, b)) => {
                    let (na, nb) = (format!("{stem}_a{k}.csv"), format!("{stem}_b{k}.csv"));
                    let check = if kind == BifurcationKind::Rank1CrossTranscritical {
                        ("tr_a' + tr_b'", verify_transcritical_slopes(&fam, &a, &b))
                    } else {
                        ("tr_a' + tr_b'/2", verify_fork_slopes(&fam, &a, &b))
                    };
                    entry["line_a"] = to_value(&summary(&a, na.clone()));
                    entry["line_b"] = to_value(&summary(&b, nb.clone()));
                    entry["trace_slope_relation"] = json!(check.0);
                    match check.1 {
                        Ok(r) => entry["trace_slope_check"] = to_value(&r),
                        Err(e) => entry["trace_slope_error"] = json!(e.to_string()),
                    }
                    csv.push((na, output::branch_csv(&a)));
                    csv.push((nb, output::branch_csv(&b)));
                }
                Err(e) => entry["split_error"] = json!(e.to_string()),
            }
        }
        crossings.push(entry);
    }
    let result = json!({
        "branch": summary(&branch, format!("{stem}.csv")),
        "crossings": crossings,
        "flat": search.flat,
        "unresolved": search.unresolved,
    });
    Ok(Outcome { result, csv })
}

fn scan_settings(cfg: &RunConfig, classify: bool) -> ScanSettings {
    ScanSettings {
        well_guess: cfg.well_guess,
        y0: cfg.section_y0,
        chart_radius: None,
        classify,
    }
}

fn scan_mode(cfg: &RunConfig, tols: &Tolerances) -> Result<Outcome, CliError> {
    let h = cfg.hamiltonian()?;
    let scan = libration_branch_scan(
        &h,
        cfg.energy()?,
        cfg.eps_range()?,
        cfg.samples()?,
        &scan_settings(cfg, true),
        tols,
    )?;
    let name = format!("{}.csv", cfg.outputs.csv.as_deref().unwrap_or("scan"));
    let result = json!({
        "e_ref": scan.e_ref,
        "section": scan.section,
        "samples": scan.rows.len(),
        "flat": scan.flat,
        "crossings": scan.crossings,
        "failures": scan.failures,
        "csv": name,
    });
    Ok(Outcome {
        result,
        csv: vec![(name, output::scan_csv(&scan.rows))],
    })
}

fn poincare_family(h: Hamiltonian, ctx: &LibrationContext) -> PoincareFamily {
    PoincareFamily {
        hamiltonian: h,
        section: SectionSpec::upward(ctx.orbit.y0),
        e0: ctx.orbit.e0,
        time_budget: 3.0 * ctx.orbit.period,
        chart_radius: None,
        fd: FdSteps::default(),
        ode: OdeOptions::default(),
    }
}

fn monodromy_mode(cfg: &RunConfig, tols: &Tolerances) -> Result<Outcome, CliError> {
    let h = cfg.hamiltonian()?;
    let ctx = LibrationContext::new(h.clone(), cfg.energy()?, cfg.section_y0, cfg.well_guess)?;
    let o = &ctx.orbit;
    let m = ctx.hill.monodromy;
    let fam = poincare_family(h.clone(), &ctx);
    let j = fam.jet(Point3::ORIGIN, 1)?.jacobian();
    let classification = classify(&fam, Point3::ORIGIN, tols)?;
    let result = json!({
        "orbit": {
            "energy": o.e0,
            "y0": o.y0,
            "py0": o.py0,
            "turning_points": [o.y1, o.y2],
            "period": o.period,
            "quadrature_period": quadrature_period(&h, o.y1, o.y2)?,
            "energy_drift": o.energy_drift,
            "closure_error": o.closure_error,
        },
        "monodromy": m,
        "trace": m.trace(),
        "poincare_jacobian": j.0,
        "jacobian_gap": j.sub(&m.matrix()).norm_inf(),
        "det_residual": (j.det() - 1.0).abs(),
        "classification": classification,
    });
    Ok(Outcome {
        result,
        csv: Vec::new(),
    })
}

fn perturb_mode(cfg: &RunConfig, seed_eps: Option<f64>, tols: &Tolerances) -> Result<Outcome, CliError> {
    let h = cfg.hamiltonian()?;
    let e_ref = cfg.energy()?;
    let terms = cfg.perturbation_terms()?;

    let located = if cfg.eps_range.is_some() {
        let range = cfg.eps_range()?;
        let scan = libration_branch_scan(&h, e_ref, range, cfg.samples()?, &scan_settings(cfg, true), tols)?;
        let target = seed_eps.unwrap_or(0.0);
        let c = scan
            .crossings
            .iter()
            .min_by(|a, b| (a.eps_star - target).abs().total_cmp(&(b.eps_star - target).abs()))
            .cloned()
            .ok_or_else(|| crossbif::Error::NumericalBreakdown(format!("no Tr = 2 crossing in eps range {range:?}")))?;
        Some(c)
    } else {
        None
    };
    let energy = located.as_ref().map_or(e_ref, |c| c.energy);
    let ctx = LibrationContext::new(h.clone(), energy, cfg.section_y0, cfg.well_guess)?;

    let reports = terms
        .par_iter()
        .map(|t| {
            let r = if t.polynomial == PerturbationTerm::rotation().polynomial {
                rotation_case(&ctx)?
            } else {
                analyze(&ctx, t)?
            };
            Ok(json!({ "name": t.name, "cross_preserving": t.is_cross_preserving(), "report": r }))
        })
        .collect::<Result<Vec<Value>, crossbif::Error>>()?;

    let mut smoke = Vec::new();
    if let Some(c) = &located {
        let settings = SmokeSettings {
            e_ref,
            eps_star: c.eps_star,
            tr_prime: c.tr_prime,
            eps_range: cfg.eps_range()?,
            n: cfg.samples()?,
            scan: scan_settings(cfg, false),
        };
        for t in terms
            .iter()
            .filter(|t| !cfg.smoke_deltas.is_empty() && t.is_cross_preserving())
        {
            let entry = match preservation_smoke(&h, t, &settings, &cfg.smoke_deltas, tols) {
                Ok(s) => json!({ "name": t.name, "result": s }),
                Err(e) => json!({ "name": t.name, "skipped": e.to_string() }),
            };
            smoke.push(entry);
        }
    }
    let crossing = located.as_ref().map(|c| {
        json!({
            "eps_star": c.eps_star,
            "energy": c.energy,
            "tr_prime": c.tr_prime,
            "kind": c.report.as_ref().map(|r| r.kind),
        })
    });
    let result = json!({
        "energy": energy,
        "crossing": crossing,
        "monodromy": ctx.hill.monodromy,
        "terms": reports,
        "preservation": smoke,
    });
    Ok(Outcome {
        result,
        csv: Vec::new(),
    })
}

/// Worker count from `TOOL_THREADS`, if set.
pub fn thread_cap(var: Option<&str>) -> Result<Option<usize>, CliError> {
    match var {
        None => Ok(None),
        Some(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "TOOL_THREADS must be a positive integer, got '{s}'"
            ))),
        },
    }
}

/// Shipped configuration directory.
pub fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs"))
}
