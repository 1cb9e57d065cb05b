//! Scenario configuration: TOML schema, built-in presets, dotted-path
//! overrides, and resolution of "auto" exponents.
//!
//! Configs are plain TOML files; a handful of named presets ship as
//! embedded TOML so `--preset` and `--config` flow through the same
//! parser and the same `--override key=value` mechanism.  The only
//! environment variable consulted anywhere is `FKS_OUT` (an output
//! directory fallback), keeping runs reproducible from the config text
//! alone.

use std::fmt;
use std::path::Path;

use fks_core::feasibility::{
    check_extra_region, check_hypotheses, compute_p1_p2, compute_sigma, scan_region,
    ExponentProfile, ProfileCase,
};
use fks_core::SystemParams;
use serde::{Deserialize, Serialize};

/// CLI-level failure, classified for the exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed or inconsistent configuration (exit code 3).
    Config(String),
    /// A solver failed or a requested check did not pass (exit code 2).
    Check(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Check(m) => write!(f, "{m}"),
        }
    }
}

/// Convenience alias for CLI command bodies.
pub type CliResult<T> = Result<T, CliError>;

/// Shorthand constructors.
pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn check_err(msg: impl Into<String>) -> CliError {
    CliError::Check(msg.into())
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

/// Top-level scenario file.  Every section is optional at parse time;
/// each subcommand demands the sections it needs so a kernel-only or
/// diagnose-only file stays minimal.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Physical parameters of the coupled system.
    pub system: Option<SystemParams>,
    /// Requested exponents, or `"auto"` to resolve them by scanning.
    #[serde(default)]
    pub exponents: ExponentSpec,
    /// Spatial lattice.
    pub grid: Option<GridConfig>,
    /// Horizon, solver selection and stepping.
    pub time: Option<TimeConfig>,
    /// Initial data for the density and the chemical.
    #[serde(default)]
    pub initial: InitialConfig,
    /// Artifact destination and cadence.
    #[serde(default)]
    pub output: OutputConfig,
    /// Rectangle for `feasibility scan` (also reused by auto exponents).
    pub scan: Option<ScanConfig>,
    /// Kernel scaling-law experiment.
    pub kernel: Option<KernelConfig>,
    /// Standalone verification suites.
    pub diagnose: Option<DiagnoseConfig>,
}

/// Exponent request: a named mode (only `"auto"`) or explicit values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExponentSpec {
    /// A mode name; `"auto"` picks exponents by region scan.
    Named(String),
    /// Explicit `(p, r)` with optional gradient exponent and regime.
    Fixed(FixedExponents),
}

impl Default for ExponentSpec {
    fn default() -> Self {
        ExponentSpec::Named("auto".into())
    }
}

/// Explicit exponent request.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedExponents {
    /// Density norm exponent.
    pub p: f64,
    /// Gradient norm exponent.
    pub r: f64,
    /// Initial-gradient exponent for the local regime (defaults to `r`).
    pub wp: Option<f64>,
    /// `"global"` (default), `"extra"`, or `"local"`.
    pub regime: Option<String>,
}

/// Spatial lattice: `n` samples per axis on `[-l, l)^d`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Samples per axis.
    pub n: usize,
    /// Box half-width.
    pub l: f64,
}

/// Time horizon and solver plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Final time `T`.
    pub horizon: f64,
    /// `"picard"` or `"etd"`.
    #[serde(default = "default_solver")]
    pub solver: String,
    /// Number of snapshot nodes (including `t = 0`).
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// ETD step size; defaults to a 64th of the node spacing.
    pub dt: Option<f64>,
    /// `"uniform"` or `"graded"`; defaults per solver (graded for
    /// Picard, uniform for ETD).
    pub spacing: Option<String>,
    /// Picard residual tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Picard iteration cap.
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_solver() -> String {
    "etd".into()
}
fn default_nodes() -> usize {
    9
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    40
}

/// Initial data pair.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Cell density profile.
    #[serde(default)]
    pub rho: ProfileSpec,
    /// Chemical concentration profile.
    #[serde(default)]
    pub chemical: ProfileSpec,
}

/// A named analytic profile or a snapshot path.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// Identically zero.
    #[default]
    Zero,
    /// Heat-kernel shaped bump `amp(mass, width) exp(-|x - center|^2 / (4 width))`
    /// normalized so the continuum integral is `mass`.
    Gaussian {
        /// Total mass.
        mass: f64,
        /// Heat-kernel "time" parameter: the bump has standard
        /// deviation `sqrt(2 width)` per axis.
        width: f64,
        /// Bump center; the origin when omitted.
        center: Option<Vec<f64>>,
    },
    /// Band-limited random field (sup-normalized, then scaled), seeded
    /// by `--seed`.
    Noise {
        /// Amplitude after sup-normalization.
        amplitude: f64,
        /// Mode cutoff of the band limit.
        cutoff: usize,
    },
    /// A previously written snapshot (path stem without extension).
    Snapshot {
        /// Path stem of the `.f64`/`.json` pair.
        path: String,
    },
}

/// Output directory, snapshot cadence, and which verdicts to gate on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Artifact directory; `--out` and then `FKS_OUT` take precedence.
    pub directory: Option<String>,
    /// Write every `cadence`-th node's snapshots (0 disables snapshots).
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    /// Verdicts to evaluate; all applicable ones when omitted.  Known
    /// names: `conservation`, `chemical-mass`, `positivity`, `envelopes`.
    pub diagnostics: Option<Vec<String>>,
}

fn default_cadence() -> usize {
    1
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: None,
            cadence: 1,
            diagnostics: None,
        }
    }
}

/// Rectangle and resolution for region scans.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Smallest density exponent.
    #[serde(default = "default_p_min")]
    pub p_min: f64,
    /// Largest density exponent.
    #[serde(default = "default_p_max")]
    pub p_max: f64,
    /// Smallest gradient exponent.
    #[serde(default = "default_r_min")]
    pub r_min: f64,
    /// Largest gradient exponent.
    #[serde(default = "default_r_max")]
    pub r_max: f64,
    /// Points per axis.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

fn default_p_min() -> f64 {
    1.05
}
fn default_p_max() -> f64 {
    4.0
}
fn default_r_min() -> f64 {
    2.0
}
fn default_r_max() -> f64 {
    8.0
}
fn default_resolution() -> usize {
    41
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            p_min: default_p_min(),
            p_max: default_p_max(),
            r_min: default_r_min(),
            r_max: default_r_max(),
            resolution: default_resolution(),
        }
    }
}

/// Kernel scaling-law experiment: each `(alpha, p)` pair is fitted over
/// the same time list (`p = inf` is valid TOML for the sup norm).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Spatial dimension.
    #[serde(default = "default_kernel_d")]
    pub d: usize,
    /// Samples per axis.
    #[serde(default = "default_kernel_n")]
    pub n: usize,
    /// Box half-width.
    #[serde(default = "default_kernel_l")]
    pub l: f64,
    /// `(alpha, p)` pairs to fit.
    #[serde(default = "default_kernel_pairs")]
    pub pairs: Vec<(f64, f64)>,
    /// Fit times.
    #[serde(default = "default_kernel_times")]
    pub times: Vec<f64>,
    /// Admissible boundary-to-peak ratio at the largest time.
    #[serde(default = "default_kernel_tail_tol")]
    pub tail_tol: f64,
    /// Acceptance margin on the fitted exponent (relative).
    #[serde(default = "default_kernel_margin")]
    pub margin: f64,
}

fn default_kernel_d() -> usize {
    2
}
fn default_kernel_n() -> usize {
    256
}
fn default_kernel_l() -> f64 {
    36.0
}
fn default_kernel_pairs() -> Vec<(f64, f64)> {
    vec![(2.0, f64::INFINITY), (1.0, f64::INFINITY), (1.5, 2.0)]
}
fn default_kernel_times() -> Vec<f64> {
    vec![0.5, 0.75, 1.0, 1.5, 2.0]
}
fn default_kernel_tail_tol() -> f64 {
    1e-3
}
fn default_kernel_margin() -> f64 {
    0.02
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            d: default_kernel_d(),
            n: default_kernel_n(),
            l: default_kernel_l(),
            pairs: default_kernel_pairs(),
            times: default_kernel_times(),
            tail_tol: default_kernel_tail_tol(),
            margin: default_kernel_margin(),
        }
    }
}

/// Standalone verification suites: the fractional-Laplacian definition
/// crosscheck and the sign-inequality suite on random fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Dimensions to crosscheck (1 and/or 2).
    #[serde(default = "default_crosscheck_d")]
    pub crosscheck_d: Vec<usize>,
    /// Fractional orders `s` of `(-Delta)^s` to crosscheck.
    #[serde(default = "default_s_values")]
    pub s_values: Vec<f64>,
    /// Relative-agreement gate.
    #[serde(default = "default_gate")]
    pub gate: f64,
    /// Number of random field pairs for the sign suite.
    #[serde(default = "default_fields")]
    pub fields: usize,
    /// Sign-suite lattice size per axis.
    #[serde(default = "default_field_n")]
    pub field_n: usize,
    /// Sign-suite box half-width.
    #[serde(default = "default_field_l")]
    pub field_l: f64,
    /// Dissipation orders cycled through the sign suite.
    #[serde(default = "default_orders")]
    pub orders: Vec<f64>,
    /// Norm exponents cycled through the sign suite.
    #[serde(default = "default_norms")]
    pub norms: Vec<f64>,
    /// Band limit of the random fields.
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
}

fn default_crosscheck_d() -> Vec<usize> {
    vec![1, 2]
}
fn default_s_values() -> Vec<f64> {
    vec![0.4, 0.75, 0.9, 1.1, 1.4]
}
fn default_gate() -> f64 {
    1e-3
}
fn default_fields() -> usize {
    20
}
fn default_field_n() -> usize {
    64
}
fn default_field_l() -> f64 {
    6.0
}
fn default_orders() -> Vec<f64> {
    vec![1.2, 1.8]
}
fn default_norms() -> Vec<f64> {
    vec![2.0, 3.0]
}
fn default_cutoff() -> usize {
    6
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            crosscheck_d: default_crosscheck_d(),
            s_values: default_s_values(),
            gate: default_gate(),
            fields: default_fields(),
            field_n: default_field_n(),
            field_l: default_field_l(),
            orders: default_orders(),
            norms: default_norms(),
            cutoff: default_cutoff(),
        }
    }
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Built-in presets, each a complete TOML scenario.
pub const PRESET_NAMES: [&str; 5] = [
    "classical-2d",
    "corollary-a1.8",
    "zero-density",
    "kernel-scaling",
    "diagnose-default",
];

/// Embedded TOML for a named preset.
pub fn preset_toml(name: &str) -> Option<&'static str> {
    match name {
        "classical-2d" => Some(
            r#"
[system]
d = 2
alpha = 2.0
beta = 2.0
chi = 1.0
gamma = 0.5
tau = 1.0

[exponents]
p = 1.5
r = 3.0

[grid]
n = 128
l = 8.0

[time]
horizon = 1.0
solver = "etd"
nodes = 9
dt = 0.001953125

[initial.rho]
kind = "gaussian"
mass = 0.1
width = 0.25

[initial.chemical]
kind = "zero"
"#,
        ),
        // Same system with both diffusion orders at 1.8; the exponent
        // pair (2, 3) realizes the critical-space indices 1/(alpha-1)
        // and 2/(alpha-1).
        "corollary-a1.8" | "corollary-α1.8" => Some(
            r#"
[system]
d = 2
alpha = 1.8
beta = 1.8
chi = 1.0
gamma = 0.5
tau = 1.0

[exponents]
p = 2.0
r = 3.0

[grid]
n = 128
l = 8.0

[time]
horizon = 1.0
solver = "etd"
nodes = 9
dt = 0.001953125

[initial.rho]
kind = "gaussian"
mass = 0.1
width = 0.25

[initial.chemical]
kind = "zero"
"#,
        ),
        "zero-density" => Some(
            r#"
[system]
d = 2
alpha = 2.0
beta = 2.0
chi = 1.0
gamma = 0.5
tau = 1.0

[exponents]
p = 1.5
r = 3.0

[grid]
n = 64
l = 8.0

[time]
horizon = 1.0
solver = "etd"
nodes = 5
dt = 0.00390625

[initial.rho]
kind = "zero"

[initial.chemical]
kind = "zero"
"#,
        ),
        "kernel-scaling" => Some("[kernel]\n"),
        "diagnose-default" => Some("[diagnose]\n"),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Loading and overrides
// ---------------------------------------------------------------------------

/// Parse TOML text into the raw table, with position-annotated errors.
fn parse_table(text: &str, origin: &str) -> CliResult<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| config_err(format!("{origin}: {e}")))
}

/// Apply one `key=value` override to the raw table, creating intermediate
/// tables along the dotted path.  The value is parsed as TOML; bare words
/// that are not valid TOML values are taken as strings.
fn apply_override(table: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (path, raw_value) = spec
        .split_once('=')
        .ok_or_else(|| config_err(format!("override '{spec}' is not of the form key=value")))?;
    let segments: Vec<&str> = path.trim().split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(config_err(format!(
            "override '{spec}' has an empty path segment"
        )));
    }
    let value: toml::Value = match format!("v = {}", raw_value.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key v was just parsed"),
        Err(_) => toml::Value::String(raw_value.trim().to_string()),
    };
    let mut cursor = table;
    for seg in &segments[..segments.len() - 1] {
        let entry = cursor
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| {
            config_err(format!(
                "override '{spec}': '{seg}' is not a table and cannot be descended into"
            ))
        })?;
    }
    cursor.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

/// Load a scenario from `--preset` and/or `--config` plus overrides.
///
/// Exactly one of `preset` / `config_path` must be given (a run needs a
/// single source of truth; overrides cover the delta).
pub fn load_scenario(
    preset: Option<&str>,
    config_path: Option<&Path>,
    overrides: &[String],
) -> CliResult<ScenarioConfig> {
    let mut table = match (preset, config_path) {
        (Some(_), Some(_)) => {
            return Err(config_err(
                "--preset and --config are mutually exclusive; start from one source and use \
                 --override for the delta",
            ))
        }
        (None, None) => {
            return Err(config_err(format!(
                "no scenario given: pass --config FILE or --preset NAME (presets: {})",
                PRESET_NAMES.join(", ")
            )))
        }
        (Some(name), None) => {
            let text = preset_toml(name).ok_or_else(|| {
                config_err(format!(
                    "unknown preset '{name}' (presets: {})",
                    PRESET_NAMES.join(", ")
                ))
            })?;
            parse_table(text, &format!("preset {name}"))?
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
            parse_table(&text, &path.display().to_string())?
        }
    };
    for spec in overrides {
        apply_override(&mut table, spec)?;
    }
    let text = toml::to_string(&table)
        .map_err(|e| config_err(format!("internal: re-serializing config failed: {e}")))?;
    toml::from_str::<ScenarioConfig>(&text).map_err(|e| config_err(e.to_string()))
}

// ---------------------------------------------------------------------------
// Exponent resolution
// ---------------------------------------------------------------------------

/// The exponent part of a resolved run: a usable profile plus the
/// feasibility verdicts that produced (or failed to produce) it.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedExponents {
    /// The profile the run uses (constructed even for outside-theory
    /// runs, so diagnostics always have norms to measure).
    pub profile: ExponentProfile,
    /// Whether the feasibility gate rejected the request.
    pub outside_theory: bool,
    /// Rejection messages when outside theory.
    pub rejections: Vec<String>,
    /// Whether the exponents came from the auto scan.
    pub auto: bool,
    /// Whether the pair also sits in the auxiliary region
    /// `r sigma <= d/alpha`.
    pub extra_region: bool,
}

/// Resolve the exponent request against the system parameters.
///
/// `"auto"` scans the `[scan]` rectangle (default rectangle otherwise)
/// and picks the accepted sample whose decay rate `sigma` has the
/// largest margin `min(sigma, 1 - sigma)`, tie-breaking toward smaller
/// `(p, r)` for determinism.  Explicit requests are pushed through the
/// checked profile constructors; on rejection the run is flagged
/// outside-theory and a best-effort profile (same formulas, no
/// guarantees) is built so it remains executable.
pub fn resolve_exponents(
    params: &SystemParams,
    spec: &ExponentSpec,
    scan: Option<&ScanConfig>,
) -> CliResult<ResolvedExponents> {
    match spec {
        ExponentSpec::Named(name) if name == "auto" => {
            let sc = scan.copied().unwrap_or_default();
            let samples = scan_region(
                params,
                (sc.p_min, sc.p_max),
                (sc.r_min, sc.r_max),
                sc.resolution,
            )
            .map_err(|e| config_err(format!("auto exponent scan: {e}")))?;
            let best = samples
                .iter()
                .filter(|s| {
                    s.accepted && s.sigma > 0.0 && s.sigma < 1.0 && s.p1 >= 1.0 && s.p2 >= 1.0
                })
                .max_by(|a, b| {
                    let ma = a.sigma.min(1.0 - a.sigma);
                    let mb = b.sigma.min(1.0 - b.sigma);
                    ma.total_cmp(&mb)
                        .then(b.p.total_cmp(&a.p))
                        .then(b.r.total_cmp(&a.r))
                })
                .ok_or_else(|| {
                    config_err(format!(
                        "auto exponents: no accepted (p, r) with sigma in (0, 1) and \
                         p1, p2 >= 1 inside the scan rectangle p in [{}, {}], r in [{}, {}]",
                        sc.p_min, sc.p_max, sc.r_min, sc.r_max
                    ))
                })?;
            let profile = ExponentProfile::global(params, best.p, best.r).map_err(|e| {
                config_err(format!(
                    "auto exponents: accepted sample failed to build: {e}"
                ))
            })?;
            eprintln!(
                "resolved auto exponents: p = {}, r = {}, sigma = {}, p1 = {}, p2 = {}",
                profile.p, profile.r, profile.sigma, profile.p1, profile.p2
            );
            Ok(ResolvedExponents {
                profile,
                outside_theory: false,
                rejections: Vec::new(),
                auto: true,
                extra_region: best.extra_accepted,
            })
        }
        ExponentSpec::Named(other) => Err(config_err(format!(
            "unknown exponents mode '{other}' (only \"auto\" or an explicit {{p, r}} table)"
        ))),
        ExponentSpec::Fixed(fx) => {
            let regime = fx.regime.as_deref().unwrap_or("global");
            let built = match regime {
                "global" => ExponentProfile::global(params, fx.p, fx.r),
                "extra" => ExponentProfile::extra(params, fx.p, fx.r),
                "local" => ExponentProfile::build(params, fx.p, fx.r, fx.wp.unwrap_or(fx.r)),
                other => {
                    return Err(config_err(format!(
                        "unknown exponent regime '{other}' (global, extra, local)"
                    )))
                }
            };
            let extra_region = check_extra_region(params, fx.p, fx.r).accepted;
            match built {
                Ok(profile) => Ok(ResolvedExponents {
                    profile,
                    outside_theory: false,
                    rejections: Vec::new(),
                    auto: false,
                    extra_region,
                }),
                Err(e) => {
                    // Outside-theory: keep the run executable with the
                    // same formulas, prominently flagged.
                    let hyp = check_hypotheses(params, fx.p, fx.r);
                    let rejections = if hyp.violations.is_empty() {
                        vec![e.to_string()]
                    } else {
                        hyp.violations
                    };
                    let (p1, p2) = compute_p1_p2(params, fx.p, fx.r);
                    let profile = ExponentProfile {
                        p: fx.p,
                        r: fx.r,
                        wp: fx.wp.unwrap_or(fx.r),
                        sigma: compute_sigma(params, fx.p, fx.r),
                        p1,
                        p2,
                        case: ProfileCase::Global,
                    };
                    eprintln!(
                        "WARNING: outside-theory run: the feasibility gate rejected \
                         (p, r) = ({}, {}); decay guarantees do not apply",
                        fx.p, fx.r
                    );
                    Ok(ResolvedExponents {
                        profile,
                        outside_theory: true,
                        rejections,
                        auto: false,
                        extra_region,
                    })
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Section accessors (named errors instead of unwraps)
// ---------------------------------------------------------------------------

impl ScenarioConfig {
    /// The `[system]` section, validated.
    pub fn system(&self) -> CliResult<SystemParams> {
        let params = self
            .system
            .ok_or_else(|| config_err("this command needs a [system] section"))?;
        params.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(params)
    }

    /// The `[grid]` section.
    pub fn grid(&self) -> CliResult<GridConfig> {
        self.grid
            .ok_or_else(|| config_err("this command needs a [grid] section"))
    }

    /// The `[time]` section.
    pub fn time(&self) -> CliResult<&TimeConfig> {
        self.time
            .as_ref()
            .ok_or_else(|| config_err("this command needs a [time] section"))
    }
}
