//! Command bodies: scenario execution with artifact emission, the
//! feasibility tools, the kernel scaling experiment, the standalone
//! verification suites, and batch fan-out.
//!
//! Exit-code contract (enforced by `main`): 0 when the requested run or
//! check passes, 2 when a solver fails or a check does not pass, 3 for
//! configuration errors.  Failed runs still write their summary so no
//! outcome is lost.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use fks_core::diagnostics::{
    chemical_mass_closed_form, decay_envelope_check, frac_laplacian_crosscheck, record_diagnostics,
    sign_inequality_suite, write_diagnostics_csv, DiagnosticsRecord,
};
use fks_core::feasibility::{
    check_extra_region, check_hypotheses, scan_region, theta_exponents, ExtraRegionVerdict, H2Case,
    HypothesesReport,
};
use fks_core::field::{read_snapshot, write_snapshot, Field};
use fks_core::kernels::kernel_norm_scaling_check;
use fks_core::mild::{solver_by_name, InitialChemical, PicardReport, SolveRequest, TimeGrid};
use fks_core::spectral::smooth_random_field;
use fks_core::{Grid, SystemParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{
    check_err, config_err, load_scenario, resolve_exponents, CliError, CliResult, GridConfig,
    InitialConfig, ProfileSpec, ResolvedExponents, ScenarioConfig,
};

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Invocation {
    /// Built-in preset name.
    pub preset: Option<String>,
    /// Scenario file.
    pub config: Option<PathBuf>,
    /// Output directory (overrides `FKS_OUT` and the config).
    pub out: Option<PathBuf>,
    /// Seed for randomized profiles and suites.
    pub seed: u64,
    /// Dotted-path `key=value` overrides.
    pub overrides: Vec<String>,
}

impl Invocation {
    fn load(&self) -> CliResult<ScenarioConfig> {
        load_scenario(
            self.preset.as_deref(),
            self.config.as_deref(),
            &self.overrides,
        )
    }

    /// Output directory by precedence `--out`, `FKS_OUT`, config.
    fn out_dir(&self, cfg: &ScenarioConfig) -> Option<PathBuf> {
        self.out
            .clone()
            .or_else(|| std::env::var("FKS_OUT").ok().map(PathBuf::from))
            .or_else(|| cfg.output.directory.clone().map(PathBuf::from))
    }

    fn required_out_dir(&self, cfg: &ScenarioConfig) -> CliResult<PathBuf> {
        let dir = self.out_dir(cfg).ok_or_else(|| {
            config_err(
                "no output directory: pass --out DIR, set FKS_OUT, or set [output] directory",
            )
        })?;
        std::fs::create_dir_all(&dir)
            .map_err(|e| config_err(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }
}

fn fmtf(v: f64) -> String {
    format!("{v:.17e}")
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| check_err(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| check_err(format!("writing {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// feasibility check | scan
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FeasibilityJson {
    system: SystemParams,
    p: f64,
    r: f64,
    wp: f64,
    regime: String,
    accepted: bool,
    hypotheses: HypothesesReport,
    sigma: f64,
    p1: f64,
    p2: f64,
    theta1: f64,
    theta2_gamma_pos: f64,
    theta2_gamma_zero: f64,
    extra: ExtraRegionVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    profile: Option<fks_core::feasibility::ExponentProfile>,
}

/// `feasibility check`: one profile, human-readable verdict plus JSON.
pub fn cmd_feasibility_check(inv: &Invocation) -> CliResult<()> {
    let cfg = inv.load()?;
    let params = cfg.system()?;
    let resolved = resolve_exponents(&params, &cfg.exponents, cfg.scan.as_ref())?;
    let (p, r, wp) = (resolved.profile.p, resolved.profile.r, resolved.profile.wp);
    let hypotheses = check_hypotheses(&params, p, r);
    let thetas = theta_exponents(&params, p, r, wp);
    let extra = check_extra_region(&params, p, r);
    let accepted = !resolved.outside_theory;
    let report = FeasibilityJson {
        system: params,
        p,
        r,
        wp,
        regime: format!("{:?}", resolved.profile.case),
        accepted,
        hypotheses: hypotheses.clone(),
        sigma: resolved.profile.sigma,
        p1: resolved.profile.p1,
        p2: resolved.profile.p2,
        theta1: thetas.theta1,
        theta2_gamma_pos: thetas.theta2_gamma_pos,
        theta2_gamma_zero: thetas.theta2_gamma_zero,
        extra: extra.clone(),
        profile: (!resolved.outside_theory).then_some(resolved.profile),
    };

    println!(
        "feasibility check: d = {}, alpha = {}, beta = {}, p = {p}, r = {r}, wp = {wp}",
        params.d, params.alpha, params.beta
    );
    if accepted {
        println!(
            "verdict: accepted ({}, regime {:?})",
            match hypotheses.case {
                Some(H2Case::A2a) => "bounded case (a)",
                Some(H2Case::A2b) => "unbounded case (b)",
                None => "case unknown",
            },
            resolved.profile.case
        );
    } else {
        println!("verdict: rejected");
        for v in &resolved.rejections {
            println!("  - {v}");
        }
    }
    println!(
        "sigma = {}  (global estimate sup_t t^sigma ||rho(t)||_p)",
        resolved.profile.sigma
    );
    println!(
        "p1 = {}  p2 = {}  (initial data rho0 in L^p1, grad c0 in L^p2)",
        resolved.profile.p1, resolved.profile.p2
    );
    println!(
        "theta1 = {}  theta2 = {} (gamma > 0) / {} (gamma = 0)",
        thetas.theta1, thetas.theta2_gamma_pos, thetas.theta2_gamma_zero
    );
    println!(
        "extra region (r*sigma <= d/alpha): {}",
        if extra.accepted {
            "accepted"
        } else {
            "not applicable"
        }
    );

    if let Some(dir) = inv.out_dir(&cfg) {
        std::fs::create_dir_all(&dir)
            .map_err(|e| config_err(format!("cannot create {}: {e}", dir.display())))?;
        write_json(&dir.join("feasibility.json"), &report)?;
    }
    if accepted {
        Ok(())
    } else {
        Err(check_err(format!(
            "feasibility rejected (p, r) = ({p}, {r}): {}",
            resolved.rejections.join("; ")
        )))
    }
}

/// `feasibility scan`: classify the `[scan]` rectangle into a CSV table.
pub fn cmd_feasibility_scan(inv: &Invocation) -> CliResult<()> {
    let cfg = inv.load()?;
    let params = cfg.system()?;
    let sc = cfg.scan.unwrap_or_default();
    let samples = scan_region(
        &params,
        (sc.p_min, sc.p_max),
        (sc.r_min, sc.r_max),
        sc.resolution,
    )
    .map_err(|e| config_err(e.to_string()))?;
    let dir = inv.required_out_dir(&cfg)?;
    let path = dir.join("scan.csv");
    let mut text = String::from(
        "p,r,accepted,case,sigma,theta1,theta2_gamma_pos,theta2_gamma_zero,p1,p2,extra_accepted\n",
    );
    let mut accepted = 0usize;
    let mut extra = 0usize;
    for s in &samples {
        accepted += usize::from(s.accepted);
        extra += usize::from(s.extra_accepted);
        let case = match s.case {
            Some(H2Case::A2a) => "A2a",
            Some(H2Case::A2b) => "A2b",
            None => "-",
        };
        text.push_str(&format!(
            "{},{},{},{case},{},{},{},{},{},{},{}\n",
            fmtf(s.p),
            fmtf(s.r),
            s.accepted,
            fmtf(s.sigma),
            fmtf(s.theta1),
            fmtf(s.theta2_gamma_pos),
            fmtf(s.theta2_gamma_zero),
            fmtf(s.p1),
            fmtf(s.p2),
            s.extra_accepted,
        ));
    }
    std::fs::write(&path, text)
        .map_err(|e| check_err(format!("writing {}: {e}", path.display())))?;
    println!(
        "wrote {}: {} samples, {} accepted, {} in the extra region",
        path.display(),
        samples.len(),
        accepted,
        extra
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// kernel
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct KernelFit {
    alpha: f64,
    p: f64,
    fitted_exponent: f64,
    expected_exponent: f64,
    rel_deviation: f64,
    rel_tail: f64,
    pass: bool,
}

#[derive(Serialize)]
struct KernelJson {
    d: usize,
    n: usize,
    l: f64,
    times: Vec<f64>,
    margin: f64,
    fits: Vec<KernelFit>,
    all_pass: bool,
}

/// `kernel`: fit `||K_t^alpha||_p` time exponents and emit CSV rows
/// `(t, p, measured norm, theoretical exponent)` per pair.
pub fn cmd_kernel(inv: &Invocation) -> CliResult<()> {
    let cfg = inv.load()?;
    let kc = cfg.kernel.clone().unwrap_or_default();
    let dir = inv.required_out_dir(&cfg)?;
    let grid = Grid::new(kc.d, kc.n, kc.l).map_err(|e| config_err(e.to_string()))?;
    let mut csv = String::from("alpha,t,p,norm,expected_exponent\n");
    let mut fits = Vec::new();
    for &(alpha, p) in &kc.pairs {
        let report = kernel_norm_scaling_check(alpha, p, kc.d, &kc.times, grid, kc.tail_tol)
            .map_err(|e| config_err(format!("kernel fit (alpha = {alpha}, p = {p}): {e}")))?;
        for &(t, norm) in &report.norms {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                fmtf(alpha),
                fmtf(t),
                fmtf(p),
                fmtf(norm),
                fmtf(report.expected_exponent),
            ));
        }
        let rel_deviation = (report.fitted_exponent - report.expected_exponent).abs()
            / report.expected_exponent.abs();
        let pass = rel_deviation <= kc.margin;
        println!(
            "kernel alpha = {alpha}, p = {p}: fitted {:.6} vs expected {:.6} ({}, deviation {:.2e})",
            report.fitted_exponent,
            report.expected_exponent,
            if pass { "pass" } else { "FAIL" },
            rel_deviation
        );
        fits.push(KernelFit {
            alpha,
            p,
            fitted_exponent: report.fitted_exponent,
            expected_exponent: report.expected_exponent,
            rel_deviation,
            rel_tail: report.rel_tail,
            pass,
        });
    }
    let all_pass = fits.iter().all(|f| f.pass);
    let json = KernelJson {
        d: kc.d,
        n: kc.n,
        l: kc.l,
        times: kc.times.clone(),
        margin: kc.margin,
        fits,
        all_pass,
    };
    std::fs::write(dir.join("kernel.csv"), csv)
        .map_err(|e| check_err(format!("writing kernel.csv: {e}")))?;
    write_json(&dir.join("kernel.json"), &json)?;
    if all_pass {
        Ok(())
    } else {
        Err(check_err("kernel scaling fit outside the accepted margin"))
    }
}

// ---------------------------------------------------------------------------
// simulate / picard
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TimePlanEcho {
    horizon: f64,
    solver: String,
    nodes: usize,
    spacing: String,
    dt: f64,
    tol: f64,
    max_iter: usize,
}

#[derive(Serialize)]
struct ResolvedEcho {
    system: SystemParams,
    grid: GridConfig,
    time: TimePlanEcho,
    seed: u64,
    initial: InitialConfig,
    output_directory: String,
    cadence: usize,
}

#[derive(Serialize)]
struct SolverSummary {
    name: String,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    picard: Option<PicardReport>,
}

#[derive(Serialize)]
struct Verdict {
    name: String,
    /// `pass`, `fail`, or `skipped`.
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

#[derive(Serialize)]
struct RunSummary {
    resolved: ResolvedEcho,
    exponents: ResolvedExponents,
    solver: SolverSummary,
    verdicts: Vec<Verdict>,
    all_pass: bool,
    artifacts: Vec<String>,
}

/// Names accepted in `[output] diagnostics`.
const VERDICT_NAMES: [&str; 4] = ["conservation", "chemical-mass", "positivity", "envelopes"];

struct TimePlan {
    grid: TimeGrid,
    spacing: String,
    dt: f64,
}

fn build_time_plan(cfg: &ScenarioConfig) -> CliResult<TimePlan> {
    let tc = cfg.time()?;
    if tc.nodes < 2 {
        return Err(config_err(format!(
            "time.nodes = {} but at least 2 nodes (t = 0 and t = T) are needed",
            tc.nodes
        )));
    }
    if !(tc.horizon > 0.0 && tc.horizon.is_finite()) {
        return Err(config_err(format!(
            "time.horizon = {} must be positive",
            tc.horizon
        )));
    }
    let spacing = match (tc.spacing.as_deref(), tc.solver.as_str()) {
        (Some("uniform"), _) => "uniform",
        (Some("graded"), "picard") => "graded",
        (Some("graded"), other) => {
            return Err(config_err(format!(
                "graded node spacing requires the picard solver (solver is '{other}'); \
                 graded nodes are not integer multiples of an ETD step"
            )))
        }
        (Some(other), _) => {
            return Err(config_err(format!(
                "unknown time.spacing '{other}' (uniform, graded)"
            )))
        }
        (None, "picard") => "graded",
        (None, _) => "uniform",
    };
    let delta = tc.horizon / (tc.nodes - 1) as f64;
    let dt = tc.dt.unwrap_or(delta / 64.0);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(config_err(format!("time.dt = {dt} must be positive")));
    }
    if tc.solver == "etd" {
        let ratio = delta / dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio < 1.0 - 1e-9 {
            return Err(config_err(format!(
                "time.dt = {dt} does not divide the node spacing T/(nodes-1) = {delta}; \
                 choose dt = {delta}/k for an integer k"
            )));
        }
    }
    let grid = match spacing {
        "graded" => TimeGrid::graded(tc.horizon, tc.nodes),
        _ => TimeGrid::uniform(tc.horizon, tc.nodes),
    }
    .map_err(|e| config_err(e.to_string()))?;
    Ok(TimePlan {
        grid,
        spacing: spacing.to_string(),
        dt,
    })
}

fn build_profile_field(
    spec: &ProfileSpec,
    grid: Grid,
    rng: &mut ChaCha8Rng,
    what: &str,
) -> CliResult<Field> {
    match spec {
        ProfileSpec::Zero => Ok(Field::zeros(grid)),
        ProfileSpec::Gaussian {
            mass,
            width,
            center,
        } => {
            if !(*width > 0.0 && width.is_finite()) {
                return Err(config_err(format!(
                    "{what}: gaussian width = {width} must be positive"
                )));
            }
            let center = match center {
                Some(c) if c.len() == grid.dim() => c.clone(),
                Some(c) => {
                    return Err(config_err(format!(
                        "{what}: center has {} coordinates for a {}-dimensional grid",
                        c.len(),
                        grid.dim()
                    )))
                }
                None => vec![0.0; grid.dim()],
            };
            let d = grid.dim() as f64;
            let amp = mass / (4.0 * std::f64::consts::PI * width).powf(d / 2.0);
            Ok(Field::gaussian(grid, amp, &center, *width))
        }
        ProfileSpec::Noise { amplitude, cutoff } => {
            let mut f = smooth_random_field(grid, *cutoff, rng);
            f.scale(*amplitude);
            Ok(f)
        }
        ProfileSpec::Snapshot { path } => {
            let (field, header) =
                read_snapshot(Path::new(path)).map_err(|e| config_err(format!("{what}: {e}")))?;
            if field.grid() != &grid {
                return Err(config_err(format!(
                    "{what}: snapshot grid (d = {}, n = {}, L = {}) does not match the \
                     configured grid (d = {}, n = {}, L = {})",
                    header.d,
                    header.n,
                    header.l,
                    grid.dim(),
                    grid.n(),
                    grid.half_width()
                )));
            }
            Ok(field)
        }
    }
}

/// Which verdicts the config requests (all when unspecified).
fn requested_verdicts(cfg: &ScenarioConfig) -> CliResult<Vec<&'static str>> {
    match &cfg.output.diagnostics {
        None => Ok(VERDICT_NAMES.to_vec()),
        Some(list) => {
            let mut out = Vec::new();
            for name in list {
                let known = VERDICT_NAMES.iter().find(|k| *k == name).ok_or_else(|| {
                    config_err(format!(
                        "unknown diagnostic '{name}' (known: {})",
                        VERDICT_NAMES.join(", ")
                    ))
                })?;
                out.push(*known);
            }
            Ok(out)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn compute_verdicts(
    requested: &[&str],
    record: &DiagnosticsRecord,
    chemical: &[Field],
    params: &SystemParams,
    exponents: &ResolvedExponents,
    traj: &fks_core::mild::Trajectory,
    initial_nonnegative: bool,
    horizon: f64,
) -> Vec<Verdict> {
    let rows = &record.rows;
    let mut verdicts = Vec::new();
    for &name in requested {
        let v = match name {
            "conservation" => {
                let m0 = rows[0].mass_rho;
                let denom = if m0.abs() > 0.0 { m0.abs() } else { 1.0 };
                let worst = rows
                    .iter()
                    .map(|r| (r.mass_rho - m0).abs() / denom)
                    .fold(0.0f64, f64::max);
                Verdict {
                    name: name.into(),
                    status: if worst <= 1e-10 { "pass" } else { "fail" }.into(),
                    worst: Some(worst),
                    note: Some(format!("max relative drift of integral(rho) from {m0:.6e}")),
                }
            }
            "chemical-mass" => {
                let m0 = rows[0].mass_rho;
                let c0 = rows[0].mass_c;
                let laws: Vec<f64> = rows
                    .iter()
                    .map(|r| chemical_mass_closed_form(m0, c0, params.gamma, params.tau, r.t))
                    .collect();
                let scale = laws.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-30);
                let worst = rows
                    .iter()
                    .zip(&laws)
                    .map(|(r, law)| (r.mass_c - law).abs() / scale)
                    .fold(0.0f64, f64::max);
                Verdict {
                    name: name.into(),
                    status: if worst <= 1e-6 { "pass" } else { "fail" }.into(),
                    worst: Some(worst),
                    note: Some("max deviation of integral(c) from the closed-form law".into()),
                }
            }
            "positivity" => {
                if !initial_nonnegative {
                    Verdict {
                        name: name.into(),
                        status: "skipped".into(),
                        worst: None,
                        note: Some(
                            "signed initial data: positivity preservation does not apply".into(),
                        ),
                    }
                } else {
                    let worst_rho = rows
                        .iter()
                        .map(|r| r.negative_part_lp / r.lp_rho.max(f64::MIN_POSITIVE))
                        .fold(0.0f64, f64::max);
                    let worst_c = chemical
                        .iter()
                        .map(|c| {
                            let floor = c.max_value().max(0.0).max(f64::MIN_POSITIVE);
                            (-c.min_value()).max(0.0) / floor
                        })
                        .fold(0.0f64, f64::max);
                    let worst = worst_rho.max(worst_c);
                    Verdict {
                        name: name.into(),
                        status: if worst <= 1e-8 { "pass" } else { "fail" }.into(),
                        worst: Some(worst),
                        note: Some(
                            "max of ||rho_-||_p/||rho||_p and (-min c)/max c over nodes".into(),
                        ),
                    }
                }
            }
            "envelopes" => {
                if horizon < 1.0 {
                    Verdict {
                        name: name.into(),
                        status: "skipped".into(),
                        worst: None,
                        note: Some("horizon below t_min = 1: no decay tail to examine".into()),
                    }
                } else {
                    match decay_envelope_check(traj, params, &exponents.profile, 1.0) {
                        Err(e) => Verdict {
                            name: name.into(),
                            status: "fail".into(),
                            worst: None,
                            note: Some(e.to_string()),
                        },
                        Ok(report) => {
                            let ratio = |env: &[f64]| -> f64 {
                                let first = env.first().copied().unwrap_or(0.0);
                                env.iter()
                                    .map(|&v| v / first.max(f64::MIN_POSITIVE))
                                    .fold(0.0f64, f64::max)
                            };
                            let worst =
                                ratio(&report.rho_envelope).max(ratio(&report.gradc_envelope));
                            let slope = |s: Option<f64>| {
                                s.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into())
                            };
                            Verdict {
                                name: name.into(),
                                status: if worst <= 1.2 { "pass" } else { "fail" }.into(),
                                worst: Some(worst),
                                note: Some(format!(
                                    "max envelope growth over its t = {} value; fitted \
                                     log-log slopes rho {} (decay rate sigma = {}), gradc {}",
                                    report.t_min,
                                    slope(report.rho_fitted_slope),
                                    exponents.profile.sigma,
                                    slope(report.gradc_fitted_slope),
                                )),
                            }
                        }
                    }
                }
            }
            other => unreachable!("requested_verdicts filtered names, got {other}"),
        };
        verdicts.push(v);
    }
    verdicts
}

/// `simulate` (and `picard`, which forces the solver): run a scenario,
/// write artifacts, and gate on the requested verdicts.
pub fn cmd_simulate(inv: &Invocation, force_solver: Option<&str>) -> CliResult<()> {
    let mut cfg = inv.load()?;
    if let Some(solver) = force_solver {
        let tc = cfg
            .time
            .as_mut()
            .ok_or_else(|| config_err("this command needs a [time] section"))?;
        tc.solver = solver.to_string();
        if solver == "picard" && tc.spacing.as_deref() == Some("uniform") {
            // keep the user's explicit choice
        } else if solver == "picard" {
            tc.spacing = None; // re-derive the picard default (graded)
        }
    }
    let params = cfg.system()?;
    let gc = cfg.grid()?;
    let grid = Grid::new(params.d, gc.n, gc.l).map_err(|e| config_err(e.to_string()))?;
    let exponents = resolve_exponents(&params, &cfg.exponents, cfg.scan.as_ref())?;
    let plan = build_time_plan(&cfg)?;
    let tc = cfg.time()?.clone();
    let requested = requested_verdicts(&cfg)?;
    let dir = inv.required_out_dir(&cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(inv.seed);
    // Deterministic draw order: density first, then the chemical.
    let rho0 = build_profile_field(&cfg.initial.rho, grid, &mut rng, "initial.rho")?;
    let c0 = build_profile_field(&cfg.initial.chemical, grid, &mut rng, "initial.chemical")?;
    let initial_nonnegative = rho0.min_value() >= 0.0 && c0.min_value() >= 0.0;
    let chem0 = InitialChemical::Concentration(c0);

    let solver = solver_by_name(&tc.solver).map_err(|e| config_err(e.to_string()))?;
    let echo = ResolvedEcho {
        system: params,
        grid: gc,
        time: TimePlanEcho {
            horizon: tc.horizon,
            solver: solver.name().to_string(),
            nodes: tc.nodes,
            spacing: plan.spacing.clone(),
            dt: plan.dt,
            tol: tc.tol,
            max_iter: tc.max_iter,
        },
        seed: inv.seed,
        initial: cfg.initial.clone(),
        output_directory: dir.display().to_string(),
        cadence: cfg.output.cadence,
    };
    eprintln!(
        "resolved scenario:\n{}",
        serde_json::to_string_pretty(&echo).map_err(|e| check_err(e.to_string()))?
    );

    let request = SolveRequest {
        rho0: &rho0,
        chem0: &chem0,
        params: &params,
        profile: &exponents.profile,
        time_grid: &plan.grid,
        tol: tc.tol,
        max_iter: tc.max_iter,
        dt: plan.dt,
    };
    let outcome = solver.solve(&request);

    let mut artifacts = Vec::new();
    let output = match outcome {
        Err(e) => {
            let summary = RunSummary {
                resolved: echo,
                exponents,
                solver: SolverSummary {
                    name: solver.name().into(),
                    status: format!("failed: {e}"),
                    picard: None,
                },
                verdicts: Vec::new(),
                all_pass: false,
                artifacts: vec!["summary.json".into()],
            };
            write_json(&dir.join("summary.json"), &summary)?;
            return Err(check_err(format!("solver {} failed: {e}", solver.name())));
        }
        Ok(output) => output,
    };

    let chemical = output
        .chemical
        .as_deref()
        .ok_or_else(|| check_err("solver produced no concentration snapshots"))?;
    let record = record_diagnostics(&output.trajectory, chemical, &params, &exponents.profile)
        .map_err(|e| check_err(format!("diagnostics: {e}")))?;
    write_diagnostics_csv(&record, &dir.join("diagnostics.csv"))
        .map_err(|e| check_err(format!("writing diagnostics.csv: {e}")))?;
    artifacts.push("diagnostics.csv".into());

    if cfg.output.cadence > 0 {
        let snap_dir = dir.join("snapshots");
        std::fs::create_dir_all(&snap_dir)
            .map_err(|e| check_err(format!("cannot create {}: {e}", snap_dir.display())))?;
        for (m, &t) in plan.grid.nodes().iter().enumerate() {
            if m % cfg.output.cadence != 0 {
                continue;
            }
            write_snapshot(
                output.trajectory.rho(m),
                &snap_dir.join(format!("rho_{m:04}")),
                t,
                "rho",
            )
            .map_err(|e| check_err(format!("writing snapshot: {e}")))?;
            write_snapshot(&chemical[m], &snap_dir.join(format!("c_{m:04}")), t, "c")
                .map_err(|e| check_err(format!("writing snapshot: {e}")))?;
            artifacts.push(format!("snapshots/rho_{m:04}"));
            artifacts.push(format!("snapshots/c_{m:04}"));
        }
    }

    let mut solver_status = "completed".to_string();
    if let Some(report) = &output.report {
        write_json(&dir.join("picard_report.json"), report)?;
        artifacts.push("picard_report.json".into());
        println!(
            "picard: {} iterations, converged = {}, final residual {:.3e}",
            report.iterations,
            report.converged,
            report.residual_history.last().copied().unwrap_or(f64::NAN)
        );
        for (i, res) in report.residual_history.iter().enumerate() {
            println!("  iteration {:2}: residual {res:.6e}", i + 1);
        }
        if !report.converged {
            solver_status = "did not converge within max_iter".into();
        }
    }

    let verdicts = compute_verdicts(
        &requested,
        &record,
        chemical,
        &params,
        &exponents,
        &output.trajectory,
        initial_nonnegative,
        tc.horizon,
    );
    for v in &verdicts {
        match v.worst {
            Some(w) => println!("verdict {}: {} (worst {w:.3e})", v.name, v.status),
            None => println!(
                "verdict {}: {}{}",
                v.name,
                v.status,
                v.note
                    .as_deref()
                    .map(|n| format!(" ({n})"))
                    .unwrap_or_default()
            ),
        }
    }
    let converged = solver_status == "completed";
    let all_pass = converged && verdicts.iter().all(|v| v.status != "fail");
    println!("overall: {}", if all_pass { "pass" } else { "FAIL" });
    if exponents.outside_theory {
        println!("note: outside-theory run; decay guarantees do not apply");
    }

    artifacts.push("summary.json".into());
    let summary = RunSummary {
        resolved: echo,
        exponents,
        solver: SolverSummary {
            name: solver.name().into(),
            status: solver_status.clone(),
            picard: output.report,
        },
        verdicts,
        all_pass,
        artifacts,
    };
    write_json(&dir.join("summary.json"), &summary)?;

    if !converged {
        return Err(check_err(format!(
            "solver {}: {solver_status}",
            solver.name()
        )));
    }
    if !all_pass {
        let failed: Vec<&str> = summary
            .verdicts
            .iter()
            .filter(|v| v.status == "fail")
            .map(|v| v.name.as_str())
            .collect();
        return Err(check_err(format!("verdicts failed: {}", failed.join(", "))));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CrosscheckEntry {
    d: usize,
    s: f64,
    discrepancy: f64,
    gate: f64,
    pass: bool,
}

#[derive(Serialize)]
struct SignSuiteEntry {
    index: usize,
    order: f64,
    p: f64,
    all_ok: bool,
    worst_pointwise_violation: f64,
    drift_bound_margin: f64,
    plancherel_quadratic_form: f64,
}

#[derive(Serialize)]
struct DiagnoseJson {
    crosscheck: Vec<CrosscheckEntry>,
    sign_suite: Vec<SignSuiteEntry>,
    all_pass: bool,
}

/// Oscillatory bump with strong spectral response, well inside the box.
fn crosscheck_bump(grid: Grid, mode: f64, width: f64) -> Field {
    let k0 = mode * std::f64::consts::PI / grid.half_width();
    Field::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        (k0 * x[0]).cos() * (-r2 / (2.0 * width * width)).exp()
    })
}

/// `diagnose`: the fractional-Laplacian definition crosscheck and the
/// sign-inequality suite on seeded random fields.
pub fn cmd_diagnose(inv: &Invocation) -> CliResult<()> {
    let cfg = inv.load()?;
    let dc = cfg.diagnose.clone().unwrap_or_default();
    let dir = inv.required_out_dir(&cfg)?;

    let mut crosscheck = Vec::new();
    for &d in &dc.crosscheck_d {
        let (grid, bump) = match d {
            1 => {
                let grid = Grid::new(1, 512, 8.0).map_err(|e| config_err(e.to_string()))?;
                (grid, crosscheck_bump(grid, 6.0, 1.2))
            }
            2 => {
                let grid = Grid::new(2, 256, 10.0).map_err(|e| config_err(e.to_string()))?;
                (grid, crosscheck_bump(grid, 4.0, 1.6))
            }
            other => {
                return Err(config_err(format!(
                    "crosscheck_d entry {other}: the quadrature supports d = 1 and d = 2"
                )))
            }
        };
        let _ = grid;
        for &s in &dc.s_values {
            let discrepancy = frac_laplacian_crosscheck(&bump, s)
                .map_err(|e| config_err(format!("crosscheck (d = {d}, s = {s}): {e}")))?;
            let pass = discrepancy <= dc.gate;
            println!(
                "crosscheck d = {d}, s = {s}: relative discrepancy {discrepancy:.3e} ({})",
                if pass { "pass" } else { "FAIL" }
            );
            crosscheck.push(CrosscheckEntry {
                d,
                s,
                discrepancy,
                gate: dc.gate,
                pass,
            });
        }
    }

    let grid = Grid::new(2, dc.field_n, dc.field_l).map_err(|e| config_err(e.to_string()))?;
    if dc.orders.is_empty() || dc.norms.is_empty() {
        return Err(config_err(
            "diagnose.orders and diagnose.norms must be non-empty",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(inv.seed);
    let mut sign_suite = Vec::new();
    let mut cases = Vec::new();
    for &a in &dc.orders {
        for &p in &dc.norms {
            cases.push((a, p));
        }
    }
    for i in 0..dc.fields {
        let (a, p) = cases[i % cases.len()];
        let u = smooth_random_field(grid, dc.cutoff, &mut rng);
        let v = smooth_random_field(grid, dc.cutoff, &mut rng);
        let report = sign_inequality_suite(&u, a, p, &v)
            .map_err(|e| config_err(format!("sign suite (a = {a}, p = {p}): {e}")))?;
        sign_suite.push(SignSuiteEntry {
            index: i,
            order: a,
            p,
            all_ok: report.all_ok,
            worst_pointwise_violation: report.worst_pointwise_violation,
            drift_bound_margin: report.drift_bound_margin,
            plancherel_quadratic_form: report.plancherel_quadratic_form,
        });
    }
    let sign_pass = sign_suite.iter().all(|e| e.all_ok);
    let failures = sign_suite.iter().filter(|e| !e.all_ok).count();
    println!(
        "sign-inequality suite: {} random field pairs, {} failures ({})",
        dc.fields,
        failures,
        if sign_pass { "pass" } else { "FAIL" }
    );

    let all_pass = sign_pass && crosscheck.iter().all(|e| e.pass);
    let json = DiagnoseJson {
        crosscheck,
        sign_suite,
        all_pass,
    };
    write_json(&dir.join("diagnose.json"), &json)?;
    println!("overall: {}", if all_pass { "pass" } else { "FAIL" });
    if all_pass {
        Ok(())
    } else {
        Err(check_err("diagnose suites reported failures"))
    }
}

// ---------------------------------------------------------------------------
// batch
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BatchEntry {
    config: String,
    out: String,
    exit_code: i32,
}

#[derive(Serialize)]
struct BatchJson {
    runs: Vec<BatchEntry>,
    all_pass: bool,
}

/// `batch`: fan independent scenario files out across worker processes
/// (each a `simulate` invocation of this same binary) and aggregate.
pub fn cmd_batch(
    configs: &[PathBuf],
    out: Option<&Path>,
    seed: u64,
    jobs: Option<usize>,
) -> CliResult<()> {
    if configs.is_empty() {
        return Err(config_err("batch needs at least one scenario file"));
    }
    let out_dir = out
        .map(Path::to_path_buf)
        .or_else(|| std::env::var("FKS_OUT").ok().map(PathBuf::from))
        .ok_or_else(|| config_err("batch needs an output directory (--out or FKS_OUT)"))?;
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| config_err(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut stems = Vec::new();
    for path in configs {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| config_err(format!("{}: no usable file stem", path.display())))?
            .to_string();
        if stems.contains(&stem) {
            return Err(config_err(format!(
                "duplicate scenario stem '{stem}': outputs would collide"
            )));
        }
        stems.push(stem);
    }
    let jobs = match jobs {
        Some(0) => return Err(config_err("--jobs must be at least 1")),
        Some(j) => j,
        None => std::thread::available_parallelism()
            .map(usize::from)
            .unwrap_or(2),
    }
    .min(configs.len());
    let exe = std::env::current_exe()
        .map_err(|e| check_err(format!("cannot locate this executable for workers: {e}")))?;

    let mut runs = Vec::new();
    for chunk in configs.chunks(jobs) {
        let mut children = Vec::new();
        for path in chunk {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .expect("validated above");
            let child_out = out_dir.join(stem);
            let child = std::process::Command::new(&exe)
                .arg("simulate")
                .arg("--config")
                .arg(path)
                .arg("--out")
                .arg(&child_out)
                .arg("--seed")
                .arg(seed.to_string())
                .stdout(std::process::Stdio::piped())
                .stderr(std::process::Stdio::piped())
                .spawn()
                .map_err(|e| check_err(format!("spawning worker for {}: {e}", path.display())))?;
            children.push((path.clone(), child_out, child));
        }
        for (path, child_out, child) in children {
            let output = child
                .wait_with_output()
                .map_err(|e| check_err(format!("waiting on worker for {}: {e}", path.display())))?;
            let code = output.status.code().unwrap_or(2);
            std::io::stdout().write_all(&output.stdout).ok();
            std::io::stderr().write_all(&output.stderr).ok();
            println!("batch: {} -> exit {code}", path.display());
            runs.push(BatchEntry {
                config: path.display().to_string(),
                out: child_out.display().to_string(),
                exit_code: code,
            });
        }
    }
    let all_pass = runs.iter().all(|r| r.exit_code == 0);
    let json = BatchJson { runs, all_pass };
    write_json(&out_dir.join("batch_summary.json"), &json)?;
    if all_pass {
        println!("batch: all {} runs passed", configs.len());
        Ok(())
    } else if json.runs.iter().any(|r| r.exit_code == 3) {
        Err(CliError::Config(
            "a batch worker reported a configuration error".into(),
        ))
    } else {
        Err(check_err("a batch worker failed"))
    }
}
