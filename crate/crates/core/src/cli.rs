//! The `tanbound` command line.
//!
//! Exit codes: 0 success, 1 rule violation or failed check, 2 unreadable or
//! malformed input, 3 primal/dual disagreement beyond tolerance, 4 relaxation
//! stall.

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bound::{self, BoundError, BoundResult, GAP_TOL};
use crate::field::{self, AnalyzeOptions, DiscreteField, FieldError, KinkPath};
use crate::invariants::{self, HomotopyInvariants, InvariantError, InvariantFile};
use crate::polytope::Polytope;
use crate::relax::{self, Ansatz, RelaxConfig, RelaxError};
use crate::sphergeo::UnitVec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_GAP: i32 = 3;
pub const EXIT_STALL: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "tanbound", version, about = "Energy bounds for tangent unit-vector fields on polytopes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check invariants against the sum rules.
    Validate(Common),
    /// Trapped areas and the energy lower bound of a homotopy class.
    Bound(Common),
    /// Measure invariants, trapped areas and energy of a sampled field.
    Analyze(Common),
    /// Relax a seeded field on a box and check it against the bound.
    Relax(Common),
    /// Every stage the given inputs allow, in one report.
    Report(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Shape file (OFF or JSON) or `builtin:NAME` (cube, tetrahedron, box LxWxH, octant R).
    #[arg(long)]
    pub shape: String,
    #[arg(long)]
    pub invariants: Option<PathBuf>,
    /// Field header (JSON) written by `relax` or by hand.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Reference direction `x,y,z`, overriding the invariant file or the seeded choice.
    #[arg(long, value_name = "X,Y,Z", allow_hyphen_values = true)]
    pub s: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cells per axis for seeded fields.
    #[arg(long, default_value_t = 24)]
    pub resolution: usize,
    /// Directory for the report and any artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Relative duality-gap tolerance (bound) or tangency tolerance (analyze).
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Seed field for `relax`: constant[:x,y,z], corner-radial[:v], edge-rotation[:face,k].
    #[arg(long, default_value = "corner-radial:0")]
    pub ansatz: String,
    #[arg(long, default_value_t = 0.2)]
    pub tau: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
    /// Triangulation density of separating surfaces.
    #[arg(long, default_value_t = 64)]
    pub surface_res: usize,
    /// Restrict `analyze` to these vertices, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub vertices: Option<Vec<usize>>,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
    fn input(message: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, message)
    }
    fn violation(message: impl Into<String>) -> Self {
        Self::new(EXIT_VIOLATION, message)
    }
}

impl From<BoundError> for Failure {
    fn from(e: BoundError) -> Self {
        Failure::violation(e.to_string())
    }
}

impl From<InvariantError> for Failure {
    fn from(e: InvariantError) -> Self {
        match e {
            InvariantError::Parse(_) | InvariantError::Shape(_) => Failure::input(e.to_string()),
            _ => Failure::violation(e.to_string()),
        }
    }
}

impl From<FieldError> for Failure {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::Format(_) | FieldError::Io(_) | FieldError::Length { .. } | FieldError::Grid(_) => {
                Failure::input(e.to_string())
            }
            _ => Failure::violation(e.to_string()),
        }
    }
}

impl From<RelaxError> for Failure {
    fn from(e: RelaxError) -> Self {
        match e {
            RelaxError::Stall { .. } => Failure::new(EXIT_STALL, e.to_string()),
            RelaxError::UnknownAnsatz(_) | RelaxError::BadParameters(_) | RelaxError::Config(_) | RelaxError::NotABox => {
                Failure::input(e.to_string())
            }
            RelaxError::Field(fe) => fe.into(),
            _ => Failure::violation(e.to_string()),
        }
    }
}

/// JSON formatting with every float written to 17 significant digits.
struct Exact(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for Exact {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serialize with [`Exact`] float formatting.
pub fn to_report_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Exact(Default::default()));
    value.serialize(&mut ser).expect("report values serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// The report without its `metadata` entry, for reproducibility checks.
pub fn strip_metadata(report: &str) -> Result<String, serde_json::Error> {
    let mut v: Value = serde_json::from_str(report)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("metadata");
    }
    Ok(to_report_string(&v))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Loaded<T> {
    value: T,
    echo: Value,
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_shape(spec: &str) -> Result<Loaded<Polytope>, Failure> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        let p = Polytope::builtin(name).map_err(|e| Failure::input(format!("shape {spec}: {e}")))?;
        return Ok(Loaded { value: p, echo: json!({ "source": spec, "sha256": sha256_hex(spec.as_bytes()) }) });
    }
    let bytes = read_file(Path::new(spec))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Failure::input(format!("{spec}: not UTF-8")))?;
    let p = Polytope::parse(&text).map_err(|e| Failure::input(format!("shape {spec}: {e}")))?;
    Ok(Loaded { value: p, echo: json!({ "source": spec, "sha256": sha256_hex(&bytes) }) })
}

/// What `--invariants` may hold: a full invariant set, or trapped areas alone.
enum ClassInput {
    Invariants(HomotopyInvariants),
    Omega(Vec<f64>),
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct OmegaFile {
    omega: Vec<f64>,
}

fn load_invariants(path: &Path, p: &Polytope) -> Result<Loaded<ClassInput>, Failure> {
    let bytes = read_file(path)?;
    let bad = |e: String| Failure::input(format!("{}: {e}", path.display()));
    let text = String::from_utf8(bytes.clone()).map_err(|_| bad("not UTF-8".into()))?;
    let probe: Value = serde_json::from_str(&text).map_err(|e| bad(format!("invariant file: {e}")))?;
    let value = if probe.get("omega").is_some() {
        let f: OmegaFile = serde_json::from_value(probe).map_err(|e| bad(e.to_string()))?;
        if f.omega.len() != p.num_vertices() {
            return Err(bad(format!("{} trapped areas for {} vertices", f.omega.len(), p.num_vertices())));
        }
        ClassInput::Omega(f.omega)
    } else {
        let file = InvariantFile::parse(&text).map_err(|e| bad(e.to_string()))?;
        ClassInput::Invariants(file.resolve(p).map_err(|e| bad(e.to_string()))?)
    };
    Ok(Loaded { value, echo: json!({ "source": path.display().to_string(), "sha256": sha256_hex(&bytes) }) })
}

fn load_field(path: &Path, p: &Polytope, tol: Option<f64>) -> Result<Loaded<DiscreteField>, Failure> {
    let (grid, values) = field::read_field_file(path)?;
    let blob = path.with_extension("bin");
    let mut hasher = Sha256::new();
    hasher.update(read_file(path)?);
    if let Ok(b) = fs::read(&blob) {
        hasher.update(b);
    }
    let f = DiscreteField::from_values_on_polytope(p, grid, values).map_err(|e| Failure::input(e.to_string()))?;
    let f = match tol {
        Some(t) => f.with_tangency_tolerance(t),
        None => f,
    };
    Ok(Loaded {
        value: f,
        echo: json!({ "source": path.display().to_string(), "sha256": hex::encode(hasher.finalize()) }),
    })
}

fn parse_s(text: &str) -> Result<UnitVec, Failure> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::input(format!("--s {text}: {e}")))?;
    if parts.len() != 3 {
        return Err(Failure::input(format!("--s {text}: expected three components")));
    }
    UnitVec::from_xyz(parts[0], parts[1], parts[2]).map_err(|e| Failure::input(format!("--s {text}: {e}")))
}

/// Assembled report plus the exit code it implies.
struct Outcome {
    stages: Value,
    code: i32,
    artifacts: Artifacts,
}

fn gap_code(result: &BoundResult, gap_tol: f64) -> i32 {
    if result.gap <= gap_tol * (1.0 + result.value.abs()) {
        EXIT_OK
    } else {
        EXIT_GAP
    }
}

fn bound_stage(p: &Polytope, class: &ClassInput, gap_tol: f64) -> Result<(Value, i32), Failure> {
    let inv = match class {
        ClassInput::Omega(omega) => {
            let inst = bound::BoundInstance::from_polytope(p, omega.clone())?;
            let result = bound::bound_for_instance(&inst)?;
            let v = json!({
                "omega": omega,
                "bound": result.report(),
                "primal_value": result.primal_value,
                "dual_value": result.dual_value,
                "gap_tolerance": gap_tol,
            });
            return Ok((v, gap_code(&result, gap_tol)));
        }
        ClassInput::Invariants(inv) => inv,
    };
    let validation = invariants::validate(p, inv);
    if !validation.passed() {
        for f in &validation.findings {
            eprintln!("finding: {f}");
        }
        return Ok((json!({ "validation": validation }), EXIT_VIOLATION));
    }
    let areas = invariants::trapped_areas_all(p, inv)?;
    let result: BoundResult = bound::lower_bound(p, inv)?;
    let v = json!({
        "validation": validation,
        "omega": areas.omega,
        "omega_sum": areas.residual(),
        "bound": result.report(),
        "primal_value": result.primal_value,
        "dual_value": result.dual_value,
        "gap_tolerance": gap_tol,
    });
    Ok((v, gap_code(&result, gap_tol)))
}

fn analyze_options(c: &Common) -> Result<AnalyzeOptions, Failure> {
    Ok(AnalyzeOptions {
        s: c.s.as_deref().map(parse_s).transpose()?,
        seed: c.seed,
        kink_path: KinkPath::default(),
        surface_fraction: 0.5,
        surface_res: c.surface_res,
        vertices: c.vertices.clone(),
    })
}

type Artifacts = Vec<(String, Vec<u8>)>;

fn analyze_stage(f: &DiscreteField, p: &Polytope, c: &Common) -> Result<(Value, i32, Artifacts), Failure> {
    let opts = analyze_options(c)?;
    if let Some(vs) = &opts.vertices {
        if let Some(&bad) = vs.iter().find(|&&a| a >= p.num_vertices()) {
            return Err(Failure::input(format!("--vertices: no vertex {bad}")));
        }
    }
    let a = field::analyze(f, p, &opts)?;
    for e in &a.extraction_errors {
        eprintln!("extraction: {e}");
    }
    let ok = a.extraction_errors.is_empty() && a.complete.as_ref().is_none_or(|c| c.validation.passed());
    let artifacts = match &a.complete {
        Some(done) => vec![("invariants.json".to_string(), to_report_string(&done.invariants.to_file(p)).into_bytes())],
        None => vec![],
    };
    Ok((serde_json::to_value(&a).expect("analysis serializes"), if ok { EXIT_OK } else { EXIT_VIOLATION }, artifacts))
}

fn run_command(cmd: &Command) -> Result<(Value, Outcome), Failure> {
    let (name, c) = match cmd {
        Command::Validate(c) => ("validate", c),
        Command::Bound(c) => ("bound", c),
        Command::Analyze(c) => ("analyze", c),
        Command::Relax(c) => ("relax", c),
        Command::Report(c) => ("report", c),
    };
    let shape = load_shape(&c.shape)?;
    let p = &shape.value;
    let mut inputs = json!({ "shape": shape.echo, "seed": c.seed });
    let s_override = c.s.as_deref().map(parse_s).transpose()?;
    if let Some(s) = &s_override {
        inputs["s"] = json!(<[f64; 3]>::from(*s));
    }
    let need = |what: &Option<PathBuf>, flag: &str| -> Result<PathBuf, Failure> {
        what.clone().ok_or_else(|| Failure::input(format!("{name} needs --{flag}")))
    };
    let load_inv = |inputs: &mut Value| -> Result<ClassInput, Failure> {
        let inv = load_invariants(&need(&c.invariants, "invariants")?, p)?;
        inputs["invariants"] = inv.echo;
        let mut value = inv.value;
        if let (Some(s), ClassInput::Invariants(inv)) = (s_override, &mut value) {
            inv.s = s;
        }
        Ok(value)
    };
    let gap_tol = c.tolerance.unwrap_or(GAP_TOL);
    if gap_tol < 0.0 || !gap_tol.is_finite() {
        return Err(Failure::input("--tolerance must be a nonnegative number"));
    }

    let outcome = match cmd {
        Command::Validate(_) => {
            let ClassInput::Invariants(inv) = load_inv(&mut inputs)? else {
                return Err(Failure::input("validate needs an invariant set, not trapped areas"));
            };
            let report = invariants::validate(p, &inv);
            let code = if report.passed() { EXIT_OK } else { EXIT_VIOLATION };
            for f in &report.findings {
                eprintln!("finding: {f}");
            }
            Outcome { stages: json!({ "validation": report }), code, artifacts: vec![] }
        }
        Command::Bound(_) => {
            let inv = load_inv(&mut inputs)?;
            let (v, code) = bound_stage(p, &inv, gap_tol)?;
            Outcome { stages: v, code, artifacts: vec![] }
        }
        Command::Analyze(_) => {
            let f = load_field(&need(&c.field, "field")?, p, c.tolerance)?;
            inputs["field"] = f.echo;
            let (v, code, artifacts) = analyze_stage(&f.value, p, c)?;
            Outcome { stages: json!({ "analysis": v }), code, artifacts }
        }
        Command::Relax(_) => relax_command(p, c, &mut inputs)?,
        Command::Report(_) => {
            let mut stages = serde_json::Map::new();
            let mut code = EXIT_OK;
            let mut artifacts = vec![];
            if c.invariants.is_some() {
                let inv = load_inv(&mut inputs)?;
                let (v, k) = bound_stage(p, &inv, gap_tol)?;
                stages.insert("bound".into(), v);
                code = code.max(k);
            }
            if c.field.is_some() {
                let f = load_field(&need(&c.field, "field")?, p, None)?;
                inputs["field"] = f.echo;
                let (v, k, a) = analyze_stage(&f.value, p, c)?;
                stages.insert("analysis".into(), v);
                code = code.max(k);
                artifacts = a;
            }
            if stages.is_empty() {
                return Err(Failure::input("report needs --invariants and/or --field"));
            }
            Outcome { stages: Value::Object(stages), code, artifacts }
        }
    };
    let header = json!({ "command": name, "inputs": inputs });
    Ok((header, outcome))
}

fn relax_command(p: &Polytope, c: &Common, inputs: &mut Value) -> Result<Outcome, Failure> {
    let ansatz: Ansatz = c.ansatz.parse()?;
    inputs["ansatz"] = json!(ansatz.to_string());
    inputs["resolution"] = json!(c.resolution);
    let cfg = RelaxConfig { tau: c.tau, max_iter: c.max_iter, ..Default::default() };
    cfg.validate()?;
    inputs["config"] = serde_json::to_value(&cfg).expect("config serializes");
    let seed = relax::seed_field(p, &ansatz, c.resolution)?;
    let out = relax::relax(&seed, p, &cfg)?;
    let sw = relax::sandwich(p, &seed, &out.field, &analyze_options(c)?)?;
    let monotone = out.trace.windows(2).all(|w| w[1].energy <= w[0].energy);
    let passed = sw.passed && sw.class_changes.is_empty() && monotone;
    for change in &sw.class_changes {
        eprintln!("class change: {change}");
    }
    let last = out.trace.last().expect("trace has the initial row");
    let stages = json!({
        "relaxation": {
            "iterations": last.iter,
            "stop": out.stop,
            "halvings": out.halvings,
            "final_tau": last.tau,
            "initial_link_energy": out.trace[0].energy,
            "final_link_energy": last.energy,
            "initial_residual": out.trace[0].residual,
            "final_residual": last.residual,
            "monotone": monotone,
        },
        "sandwich": sw,
    });
    let mut artifacts = vec![("trace.csv".to_string(), out.trace_csv().into_bytes())];
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir).map_err(|e| Failure::violation(format!("{}: {e}", dir.display())))?;
        field::write_field_file(&dir.join("field.json"), &out.field)?;
    }
    artifacts.sort();
    Ok(Outcome { stages, code: if passed { EXIT_OK } else { EXIT_VIOLATION }, artifacts })
}

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Run with explicit arguments (the first is the program name); returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let out_dir = match &cli.command {
        Command::Validate(c) | Command::Bound(c) | Command::Analyze(c) | Command::Relax(c) | Command::Report(c) => {
            c.out.clone()
        }
    };
    match run_command(&cli.command) {
        Ok((header, outcome)) => {
            let report = json!({
                "tool": "tanbound",
                "version": env!("CARGO_PKG_VERSION"),
                "command": header["command"],
                "inputs": header["inputs"],
                "stages": outcome.stages,
                "passed": outcome.code == EXIT_OK,
                "exit_code": outcome.code,
                "metadata": { "generated_unix": unix_time() },
            });
            let text = to_report_string(&report);
            print!("{text}");
            if let Some(dir) = out_dir {
                let write = |name: &str, bytes: &[u8]| -> Result<(), String> {
                    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
                    fs::write(dir.join(name), bytes).map_err(|e| format!("{}: {e}", dir.join(name).display()))
                };
                let mut result = write("report.json", text.as_bytes());
                for (name, bytes) in &outcome.artifacts {
                    result = result.and_then(|_| write(name, bytes));
                }
                if let Err(e) = result {
                    eprintln!("error: {e}");
                    return EXIT_VIOLATION;
                }
            }
            outcome.code
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        let s = to_report_string(&json!({ "x": 0.1, "y": std::f64::consts::PI, "n": 3 }));
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("3.1415926535897931e0"));
        assert!(s.contains("\"n\": 3"));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["y"].as_f64().unwrap(), std::f64::consts::PI);
    }

    #[test]
    fn metadata_is_stripped() {
        let a = to_report_string(&json!({ "a": 1.5, "metadata": { "generated_unix": 1 } }));
        let b = to_report_string(&json!({ "a": 1.5, "metadata": { "generated_unix": 2 } }));
        assert_ne!(a, b);
        assert_eq!(strip_metadata(&a).unwrap(), strip_metadata(&b).unwrap());
    }

    #[test]
    fn s_parsing() {
        assert!(parse_s("1,2,3").is_ok());
        assert_eq!(parse_s("0,0,0").unwrap_err().code, EXIT_INPUT);
        assert_eq!(parse_s("1,2").unwrap_err().code, EXIT_INPUT);
    }

    #[test]
    fn unknown_ansatz_is_an_input_error() {
        let f: Failure = "swirl".parse::<Ansatz>().unwrap_err().into();
        assert_eq!(f.code, EXIT_INPUT);
        let f: Failure = RelaxError::Stall { iteration: 1, energy: 1.0, tau: 0.1, halvings: 20 }.into();
        assert_eq!(f.code, EXIT_STALL);
    }
}
