//! Run configuration: TOML text with sections `[potential]`, `[initial]`,
//! `[run]`, `[grid]`, `[scatter]` and `[ehrenfest]`.

use std::fmt;
use std::path::Path;

use hagedorn::basis::BasisCoefficients;
use hagedorn::classical::ClassicalState;
use hagedorn::grid::GridSpec;
use hagedorn::linalg;
use hagedorn::multiindex::MultiIndex;
use hagedorn::potential::{DecayMetadata, GaussianTerm, GrowthMetadata, PotentialKind, PotentialModel};
use hagedorn::truncation::{tail_violation, TailClass, TruncationMode};
use num_complex::Complex64;
use serde::Deserialize;

/// A configuration problem, anchored to the offending field.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    /// Dotted path such as `initial.coefficients`.
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error in `{}` (line {l}): {}", self.field, self.message),
            None => write!(f, "config error in `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub potential: Option<PotentialSection>,
    pub initial: Option<InitialSection>,
    pub run: Option<RunSection>,
    pub grid: Option<GridSection>,
    pub scatter: Option<ScatterSection>,
    pub ehrenfest: Option<EhrenfestSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub m: Vec<u32>,
    pub c: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSection {
    pub center: Vec<f64>,
    pub width: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    /// `free`, `harmonic`, `polynomial`, `double_well` or `gaussian_sum`.
    pub kind: String,
    pub dim: Option<usize>,
    /// Ascending 1-D coefficients for `polynomial`.
    pub coefficients: Option<Vec<f64>>,
    /// Multi-dimensional monomials for `polynomial`.
    pub terms: Option<Vec<PolyTerm>>,
    pub strength: Option<f64>,
    pub radius: Option<f64>,
    pub gaussians: Option<Vec<GaussianSection>>,
    pub decay: Option<DecayMetadata>,
    pub growth: Option<GrowthMetadata>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientEntry {
    pub j: Vec<u32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub a: Vec<f64>,
    pub eta: Vec<f64>,
    /// Row-major real and imaginary parts of `A` and `B`; identity if absent.
    pub a_re: Option<Vec<f64>>,
    pub a_im: Option<Vec<f64>>,
    pub b_re: Option<Vec<f64>>,
    pub b_im: Option<Vec<f64>>,
    /// `c_{0,j}`; the ground state if absent.
    pub coefficients: Option<Vec<CoefficientEntry>>,
    pub tail: Option<TailClass>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub hbar: Vec<f64>,
    pub g: Option<f64>,
    #[serde(default)]
    pub empirical: bool,
    pub t_end: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub flow_tol: Option<f64>,
    pub hierarchy_tol: Option<f64>,
    /// Orders in the trial hierarchy of empirical mode.
    pub l_max: Option<usize>,
    pub oracle: Option<bool>,
    #[serde(default)]
    pub residual: bool,
    pub b: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub points: usize,
    pub dt: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterSection {
    pub tol: Option<f64>,
    pub extraction_tol: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EhrenfestSection {
    pub t_prime: f64,
    pub lambda: Option<f64>,
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "one")]
    pub v: f64,
    pub kappa: Option<f64>,
    /// Length of the orbit used to fit `lambda`.
    pub fit_t_end: Option<f64>,
}

fn one() -> f64 {
    1.0
}

/// Validated initial data.
#[derive(Clone, Debug)]
pub struct Initial {
    pub state: ClassicalState,
    /// Listed `c_{0,j}` (all of them, before any tail truncation).
    pub entries: Vec<(MultiIndex, Complex64)>,
    pub tail: Option<TailClass>,
}

impl Initial {
    pub fn coefficients(&self) -> BasisCoefficients {
        BasisCoefficients::from_entries(self.state.dim(), &self.entries).expect("entries validated on load")
    }
}

#[derive(Clone, Debug)]
pub struct RunSettings {
    pub hbars: Vec<f64>,
    pub mode: TruncationMode,
    pub t_end: f64,
    pub times: Vec<f64>,
    pub flow_tol: f64,
    pub hierarchy_tol: f64,
    pub l_max: usize,
    pub oracle: bool,
    pub residual: bool,
    pub radii: Vec<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct ScatterSettings {
    pub tol: f64,
    pub extraction_tol: f64,
}

#[derive(Clone, Debug)]
pub struct EhrenfestSettings {
    pub t_prime: f64,
    pub lambda: Option<f64>,
    pub tau: f64,
    pub v: f64,
    pub kappa: Option<f64>,
    pub fit_t_end: f64,
}

/// A fully validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub potential: PotentialModel,
    pub initial: Initial,
    pub run: RunSettings,
    pub grid: Option<GridSpec>,
    pub scatter: Option<ScatterSettings>,
    pub ehrenfest: Option<EhrenfestSettings>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Best-effort line of `key = ...` inside `[section]`.
fn locate(text: &str, field: &str) -> Option<usize> {
    let (section, key) = field.split_once('.')?;
    let key = key.split('.').next()?;
    let mut in_section = false;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            in_section = t.trim_matches(|c| c == '[' || c == ']').trim() == section;
            continue;
        }
        if in_section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        let field = e
            .message()
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "<document>".into());
        ConfigError {
            field,
            line,
            message: e.message().trim().to_string(),
        }
    })?;
    validate(raw).map_err(|mut e| {
        if e.line.is_none() {
            e.line = locate(text, &e.field);
        }
        e
    })
}

fn require<T>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| ConfigError::new(field, "required field is missing"))
}

fn finite(v: f64, field: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(field, "must be finite"))
    }
}

fn positive(v: f64, field: &str) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::new(field, format!("must be positive, got {v}")))
    }
}

fn potential(sec: PotentialSection) -> Result<PotentialModel> {
    let dim = sec.dim.unwrap_or(1);
    if dim == 0 {
        return Err(ConfigError::new("potential.dim", "must be at least 1"));
    }
    let kind = match sec.kind.as_str() {
        "free" => PotentialKind::Polynomial { terms: vec![] },
        "harmonic" => PotentialKind::Polynomial {
            terms: (0..dim)
                .map(|i| {
                    let mut m = vec![0; dim];
                    m[i] = 2;
                    (MultiIndex::new(m), 0.5)
                })
                .collect(),
        },
        "polynomial" => {
            let terms = match (sec.coefficients, sec.terms) {
                (Some(c), None) => {
                    if dim != 1 {
                        return Err(ConfigError::new(
                            "potential.coefficients",
                            "ascending coefficients describe 1-D polynomials; use `terms` for dim > 1",
                        ));
                    }
                    for &v in &c {
                        finite(v, "potential.coefficients")?;
                    }
                    c.iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(p, &v)| (MultiIndex::new(vec![p as u32]), v))
                        .collect()
                }
                (None, Some(t)) => {
                    let mut out = Vec::new();
                    for term in t {
                        if term.m.len() != dim {
                            return Err(ConfigError::new(
                                "potential.terms",
                                format!("monomial {:?} does not have dimension {dim}", term.m),
                            ));
                        }
                        out.push((MultiIndex::new(term.m), finite(term.c, "potential.terms")?));
                    }
                    out
                }
                (None, None) => {
                    return Err(ConfigError::new(
                        "potential.coefficients",
                        "polynomial needs `coefficients` or `terms`",
                    ))
                }
                (Some(_), Some(_)) => {
                    return Err(ConfigError::new(
                        "potential.terms",
                        "give either `coefficients` or `terms`, not both",
                    ))
                }
            };
            PotentialKind::Polynomial { terms }
        }
        "double_well" => PotentialKind::DoubleWell {
            strength: finite(sec.strength.unwrap_or(0.25), "potential.strength")?,
            radius: positive(sec.radius.unwrap_or(1.0), "potential.radius")?,
        },
        "gaussian_sum" => {
            let gs = require(sec.gaussians, "potential.gaussians")?;
            let mut terms = Vec::new();
            for g in gs {
                if g.center.len() != dim {
                    return Err(ConfigError::new(
                        "potential.gaussians",
                        format!("center {:?} does not have dimension {dim}", g.center),
                    ));
                }
                terms.push(GaussianTerm {
                    center: g.center,
                    width: positive(g.width, "potential.gaussians")?,
                    amplitude: finite(g.amplitude, "potential.gaussians")?,
                });
            }
            PotentialKind::GaussianSum { terms }
        }
        other => {
            return Err(ConfigError::new(
                "potential.kind",
                format!("unknown kind `{other}` (free, harmonic, polynomial, double_well, gaussian_sum)"),
            ))
        }
    };
    let mut pot = PotentialModel::new(dim, kind).map_err(|e| ConfigError::new("potential", e.to_string()))?;
    if let Some(d) = sec.decay {
        if !(d.beta > 1.0) || d.v0 < 0.0 || d.v1 <= 0.0 {
            return Err(ConfigError::new("potential.decay", "need beta > 1, v0 >= 0 and v1 > 0"));
        }
        pot = pot.with_decay(d);
    } else if sec.kind == "free" {
        pot = PotentialModel::free(dim);
    }
    if let Some(g) = sec.growth {
        pot = pot.with_growth(g);
    }
    Ok(pot)
}

fn matrix(re: Option<Vec<f64>>, im: Option<Vec<f64>>, d: usize, name: &str) -> Result<hagedorn::linalg::CMatrix> {
    let re_field = format!("initial.{name}_re");
    let im_field = format!("initial.{name}_im");
    let re = re.unwrap_or_else(|| (0..d * d).map(|k| if k % (d + 1) == 0 { 1.0 } else { 0.0 }).collect());
    let im = im.unwrap_or_else(|| vec![0.0; d * d]);
    if re.len() != d * d {
        return Err(ConfigError::new(&re_field, format!("needs {} row-major entries", d * d)));
    }
    if im.len() != d * d {
        return Err(ConfigError::new(&im_field, format!("needs {} row-major entries", d * d)));
    }
    for &v in re.iter() {
        finite(v, &re_field)?;
    }
    for &v in im.iter() {
        finite(v, &im_field)?;
    }
    Ok(linalg::from_parts(d, &re, &im))
}

fn initial(sec: InitialSection, dim: usize) -> Result<Initial> {
    if sec.a.len() != dim {
        return Err(ConfigError::new("initial.a", format!("needs {dim} entries to match the potential")));
    }
    if sec.eta.len() != dim {
        return Err(ConfigError::new("initial.eta", format!("needs {dim} entries to match the potential")));
    }
    for &v in &sec.a {
        finite(v, "initial.a")?;
    }
    for &v in &sec.eta {
        finite(v, "initial.eta")?;
    }
    let a_mat = matrix(sec.a_re, sec.a_im, dim, "a")?;
    let b_mat = matrix(sec.b_re, sec.b_im, dim, "b")?;
    let state = ClassicalState {
        t: 0.0,
        a: sec.a,
        eta: sec.eta,
        a_mat,
        b_mat,
        s: 0.0,
    };
    let res = state.cond1().max();
    if !(res <= 1e-8) {
        return Err(ConfigError::new(
            "initial.a_re",
            format!("(A, B) violate A^T B = B^T A, A* B + B* A = 2I: residual {res:.3e} > 1e-8"),
        ));
    }
    let entries: Vec<(MultiIndex, Complex64)> = match sec.coefficients {
        None => vec![(MultiIndex::zero(dim), Complex64::new(1.0, 0.0))],
        Some(list) => {
            let mut out: Vec<(MultiIndex, Complex64)> = Vec::new();
            for e in list {
                if e.j.len() != dim {
                    return Err(ConfigError::new(
                        "initial.coefficients",
                        format!("index {:?} does not have dimension {dim}", e.j),
                    ));
                }
                let j = MultiIndex::new(e.j);
                if out.iter().any(|(k, _)| *k == j) {
                    return Err(ConfigError::new("initial.coefficients", format!("index {j} listed twice")));
                }
                out.push((j, Complex64::new(finite(e.re, "initial.coefficients")?, finite(e.im, "initial.coefficients")?)));
            }
            out
        }
    };
    if entries.is_empty() {
        return Err(ConfigError::new("initial.coefficients", "no coefficients listed"));
    }
    let n2: f64 = entries.iter().map(|(_, c)| c.norm_sqr()).sum();
    if (n2 - 1.0).abs() > 1e-10 {
        return Err(ConfigError::new(
            "initial.coefficients",
            format!("sum |c_j|^2 = {n2} differs from 1 by more than 1e-10"),
        ));
    }
    if let Some(tc) = &sec.tail {
        positive(tc.k, "initial.tail")?;
        positive(tc.nu, "initial.tail")?;
        if let Some(i) = tail_violation(&entries, tc) {
            return Err(ConfigError::new(
                "initial.tail",
                format!("entry {} exceeds exp(-k |j|) for k = {}", entries[i].0, tc.k),
            ));
        }
    }
    Ok(Initial {
        state,
        entries,
        tail: sec.tail,
    })
}

fn run(sec: RunSection) -> Result<RunSettings> {
    if sec.hbar.is_empty() {
        return Err(ConfigError::new("run.hbar", "needs at least one value"));
    }
    for &h in &sec.hbar {
        if !(h > 0.0 && h < 1.0) {
            return Err(ConfigError::new("run.hbar", format!("values must lie in (0, 1), got {h}")));
        }
    }
    let mode = match (sec.g, sec.empirical) {
        (Some(g), false) => TruncationMode::FixedG { g: positive(g, "run.g")? },
        (None, true) => TruncationMode::Empirical,
        (Some(_), true) => return Err(ConfigError::new("run.empirical", "give either `g` or `empirical = true`")),
        (None, false) => return Err(ConfigError::new("run.g", "required unless `empirical = true`")),
    };
    let times = match (sec.times, sec.t_end) {
        (Some(ts), _) => {
            if ts.is_empty() || ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                return Err(ConfigError::new("run.times", "needs positive finite times"));
            }
            if ts.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ConfigError::new("run.times", "must be strictly increasing"));
            }
            ts
        }
        (None, Some(t)) => vec![positive(t, "run.t_end")?],
        (None, None) => vec![1.0],
    };
    let t_end = *times.last().expect("non-empty");
    if let Some(t) = sec.t_end {
        if t < t_end {
            return Err(ConfigError::new("run.t_end", "is earlier than the last entry of `run.times`"));
        }
    }
    let radii = sec.b.unwrap_or_default();
    for &b in &radii {
        if !(b >= 0.0 && b.is_finite()) {
            return Err(ConfigError::new("run.b", "radii must be non-negative"));
        }
    }
    let l_max = sec.l_max.unwrap_or(20);
    if l_max < 2 {
        return Err(ConfigError::new("run.l_max", "must be at least 2"));
    }
    Ok(RunSettings {
        hbars: sec.hbar,
        mode,
        t_end: sec.t_end.unwrap_or(t_end),
        times,
        flow_tol: positive(sec.flow_tol.unwrap_or(1e-12), "run.flow_tol")?,
        hierarchy_tol: positive(sec.hierarchy_tol.unwrap_or(1e-12), "run.hierarchy_tol")?,
        l_max,
        oracle: sec.oracle.unwrap_or(true),
        residual: sec.residual,
        radii,
        seed: sec.seed.unwrap_or(0),
    })
}

fn validate(raw: RawConfig) -> Result<RunConfig> {
    let potential = potential(require(raw.potential, "potential")?)?;
    let initial = initial(require(raw.initial, "initial")?, potential.dim)?;
    let run = run(require(raw.run, "run")?)?;
    let grid = match raw.grid {
        None => None,
        Some(g) => {
            if g.center.len() != potential.dim || g.half_width.len() != potential.dim {
                return Err(ConfigError::new("grid.center", "center and half_width need one entry per dimension"));
            }
            Some(
                GridSpec {
                    center: g.center,
                    half_width: g.half_width,
                    points: g.points,
                    dt: g.dt,
                }
                .validated()
                .map_err(|e| ConfigError::new("grid.points", e.to_string()))?,
            )
        }
    };
    let scatter = match raw.scatter {
        None => None,
        Some(s) => Some(ScatterSettings {
            tol: positive(s.tol.unwrap_or(1e-7), "scatter.tol")?,
            extraction_tol: positive(s.extraction_tol.unwrap_or(1e-9), "scatter.extraction_tol")?,
        }),
    };
    let ehrenfest = match raw.ehrenfest {
        None => None,
        Some(e) => Some(EhrenfestSettings {
            t_prime: positive(e.t_prime, "ehrenfest.t_prime")?,
            lambda: e.lambda.map(|l| positive(l, "ehrenfest.lambda")).transpose()?,
            tau: finite(e.tau, "ehrenfest.tau")?,
            v: finite(e.v, "ehrenfest.v")?,
            kappa: e.kappa.map(|k| positive(k, "ehrenfest.kappa")).transpose()?,
            fit_t_end: positive(e.fit_t_end.unwrap_or(10.0), "ehrenfest.fit_t_end")?,
        }),
    };
    Ok(RunConfig {
        potential,
        initial,
        run,
        grid,
        scatter,
        ehrenfest,
    })
}
