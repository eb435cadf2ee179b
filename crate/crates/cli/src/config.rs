//! Run configuration: a TOML file with one section per module.
//!
//! Every section has defaults, so an empty file is a valid config (the cone
//! Laplacian over the circle). Unknown keys are rejected at parse time;
//! range checks run afterwards and report every offending field at once.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use conecalc::calculus::HardyTail;
use conecalc::discretize::GridKind;
use conecalc::pde::{DiffusivityArg, Stepper};
use conecalc::poly::MultiPoly;
use conecalc::symbols::{COEFF_VARS, SYMBOL_VARS};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub operator: OperatorConfig,
    pub cross_section: CrossSectionConfig,
    pub weight: WeightConfig,
    pub grid: GridConfig,
    pub contour: ContourConfig,
    pub scan: ScanConfig,
    pub bip: BipConfig,
    pub hardy: HardyConfig,
    pub heat: HeatConfig,
    pub quasilinear: QuasilinearConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("conecalc-out"),
            operator: Default::default(),
            cross_section: Default::default(),
            weight: Default::default(),
            grid: Default::default(),
            contour: Default::default(),
            scan: Default::default(),
            bip: Default::default(),
            hardy: Default::default(),
            heat: Default::default(),
            quasilinear: Default::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// shift − Δ for the cone metric.
    Laplacian,
    /// Coefficients a_0..a_mu (in t, nu) and symbols s_0..s_mu (in xi).
    Custom,
}

/// `a_j` strings are sums of monomials in `t` and `nu`; `;` separates
/// factors that are multiplied, e.g. `"1 + t; -nu"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorConfig {
    #[serde(rename = "type")]
    pub kind: OperatorKind,
    pub shift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_0: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_1: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_2: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_3: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_4: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_0: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_1: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_2: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_3: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_4: Option<String>,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            kind: OperatorKind::Laplacian,
            shift: 1.0,
            mu: None,
            a_0: None,
            a_1: None,
            a_2: None,
            a_3: None,
            a_4: None,
            s_0: None,
            s_1: None,
            s_2: None,
            s_3: None,
            s_4: None,
        }
    }
}

/// Largest operator order a config can describe.
pub const MAX_MU: usize = 4;

impl OperatorConfig {
    pub fn coefficients(&self) -> [&Option<String>; MAX_MU + 1] {
        [&self.a_0, &self.a_1, &self.a_2, &self.a_3, &self.a_4]
    }

    pub fn symbols(&self) -> [&Option<String>; MAX_MU + 1] {
        [&self.s_0, &self.s_1, &self.s_2, &self.s_3, &self.s_4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossSectionKind {
    Circle,
    DiscreteCircle,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossSectionConfig {
    #[serde(rename = "type")]
    pub kind: CrossSectionKind,
    pub n: usize,
    /// Circle: wavenumbers |k| ≤ modes.
    pub modes: usize,
    /// Discrete circle: number of periodic nodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Table: (ν, multiplicity) pairs, starting with ν = 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<(f64, usize)>>,
}

impl Default for CrossSectionConfig {
    fn default() -> Self {
        CrossSectionConfig { kind: CrossSectionKind::Circle, n: 1, modes: 2, points: None, eigenvalues: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    pub gamma: f64,
    pub p: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig { gamma: 0.0, p: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub kind: GridKind,
    pub rmin: f64,
    pub rmax: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { kind: GridKind::ModelCone, rmin: -12.0, rmax: 12.0, points: 256 }
    }
}

/// Sector angle plus optional overrides of the automatic contour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContourConfig {
    pub theta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smax: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nray: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub narc: Option<usize>,
    /// Exponents for `power`, as [re, im].
    pub z: Vec<[f64; 2]>,
    /// Compare `power` against the eigendecomposition.
    pub oracle: bool,
}

impl Default for ContourConfig {
    fn default() -> Self {
        ContourConfig {
            theta: PI / 2.0,
            delta: None,
            smax: None,
            nray: None,
            narc: None,
            z: vec![[-1.0, 0.0], [-0.5, 0.0], [-0.1, 3.0], [-0.1, -3.0]],
            oracle: true,
        }
    }
}

impl ContourConfig {
    pub fn has_overrides(&self) -> bool {
        self.delta.is_some() || self.smax.is_some() || self.nray.is_some() || self.narc.is_some()
    }
}

/// Radii 10^k for k on a grid of `per_decade` points per decade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub decade_min: i32,
    pub decade_max: i32,
    pub per_decade: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { decade_min: 0, decade_max: 6, per_decade: 4 }
    }
}

impl ScanConfig {
    pub fn radii(&self) -> Vec<f64> {
        let k = (self.decade_max - self.decade_min) as usize * self.per_decade;
        (0..=k).map(|i| 10f64.powf(self.decade_min as f64 + i as f64 / self.per_decade as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BipConfig {
    pub y_max: f64,
    pub steps: usize,
    /// Also scan the operator assembled on half the grid points.
    pub coarse: bool,
}

impl Default for BipConfig {
    fn default() -> Self {
        BipConfig { y_max: 10.0, steps: 21, coarse: true }
    }
}

/// Families g = t^a on (0, 1], sampled at t = e^x; every combination of
/// the listed a, p, r and tails is checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardyConfig {
    pub a: Vec<f64>,
    pub p: Vec<f64>,
    pub r: Vec<f64>,
    pub tails: Vec<HardyTail>,
    pub x_min: f64,
    pub points: usize,
}

impl Default for HardyConfig {
    fn default() -> Self {
        HardyConfig {
            a: vec![0.0],
            p: vec![2.0],
            r: vec![1.0],
            tails: vec![HardyTail::LowerTail, HardyTail::UpperTail],
            x_min: -40.0,
            points: 40001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatConfig {
    pub t_final: f64,
    pub steps: usize,
    pub stepper: Stepper,
    /// `zero`, `constant`, `sine` (with `omega`), or a CSV path with
    /// columns `mode,node,re,im` giving the spatial profile.
    pub forcing: String,
    pub omega: f64,
    pub r_time: f64,
    /// Maximal-regularity sweep; empty means no sweep.
    pub frequencies: Vec<f64>,
}

impl Default for HeatConfig {
    fn default() -> Self {
        HeatConfig {
            t_final: 1.0,
            steps: 1000,
            stepper: Stepper::Bdf2,
            forcing: "constant".into(),
            omega: 1.0,
            r_time: 2.0,
            frequencies: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    None,
    /// u − u³.
    Gl,
    /// coefficient·u^exponent.
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Bump,
    Zero,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuasilinearConfig {
    pub r_max: f64,
    pub nr: usize,
    pub nx: usize,
    pub t_final: f64,
    pub steps: usize,
    /// Polynomial in `s`.
    pub a: String,
    pub arg: DiffusivityArg,
    pub c: f64,
    pub f: SourceKind,
    pub f_exponent: f64,
    pub f_coefficient: f64,
    pub g: f64,
    pub u0: InitialKind,
    /// Bump amplitude or uniform value.
    pub u0_value: f64,
    pub diffusion_scale: f64,
    pub a_min: f64,
    pub q: f64,
    pub tol: f64,
    pub snapshot_stride: usize,
}

impl Default for QuasilinearConfig {
    fn default() -> Self {
        QuasilinearConfig {
            r_max: 12.0,
            nr: 128,
            nx: 64,
            t_final: 0.1,
            steps: 100,
            a: "1+s^2".into(),
            arg: DiffusivityArg::RealPart,
            c: 1.0,
            f: SourceKind::None,
            f_exponent: 2.0,
            f_coefficient: 1.0,
            g: 0.0,
            u0: InitialKind::Bump,
            u0_value: 1.0,
            diffusion_scale: 1.0,
            a_min: 1e-6,
            q: 4.0,
            tol: 1e-13,
            snapshot_stride: 10,
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io { path: PathBuf, message: String },
    Parse(String),
    Invalid(Vec<FieldError>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "cannot read {}: {message}", path.display()),
            ConfigError::Parse(m) => write!(f, "config does not parse: {m}"),
            ConfigError::Invalid(errs) => {
                write!(f, "invalid config:")?;
                for e in errs {
                    write!(f, "\n  {}: {}", e.field, e.reason)?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    parse_config(&src)
}

pub fn parse_config(src: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(src).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// The fully resolved config as TOML; parses back to an equal value.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut bad = |field: &str, ok: bool, reason: String| {
            if !ok {
                errs.push(FieldError { field: field.into(), reason });
            }
        };
        let finite = |x: f64| x.is_finite();

        // operator
        let op = &self.operator;
        bad("operator.shift", op.shift >= 0.0 && finite(op.shift), format!("need a finite shift ≥ 0, got {}", op.shift));
        match op.kind {
            OperatorKind::Laplacian => {
                let stray = op.mu.is_some()
                    || op.coefficients().iter().any(|c| c.is_some())
                    || op.symbols().iter().any(|c| c.is_some());
                bad("operator.type", !stray, "mu, a_j and s_j only apply to type = \"custom\"".into());
            }
            OperatorKind::Custom => match op.mu {
                Some(mu) if (1..=MAX_MU).contains(&mu) => {
                    for (j, (a, s)) in op.coefficients().iter().zip(op.symbols()).enumerate() {
                        let want = j <= mu;
                        check_poly(&mut errs, &format!("operator.a_{j}"), a, want, &COEFF_VARS);
                        check_poly(&mut errs, &format!("operator.s_{j}"), s, want, &SYMBOL_VARS);
                    }
                }
                other => errs.push(FieldError {
                    field: "operator.mu".into(),
                    reason: format!("a custom operator needs 1 ≤ mu ≤ {MAX_MU}, got {other:?}"),
                }),
            },
        }
        let mut bad = |field: &str, ok: bool, reason: String| {
            if !ok {
                errs.push(FieldError { field: field.into(), reason });
            }
        };

        // cross_section
        let cs = &self.cross_section;
        bad("cross_section.n", cs.n >= 1, format!("need n ≥ 1, got {}", cs.n));
        match cs.kind {
            CrossSectionKind::Circle => {
                bad("cross_section.n", cs.n == 1, format!("the circle has n = 1, got {}", cs.n));
            }
            CrossSectionKind::DiscreteCircle => {
                bad("cross_section.n", cs.n == 1, format!("the circle has n = 1, got {}", cs.n));
                let pts = cs.points.unwrap_or(0);
                bad("cross_section.points", pts >= 4 && pts % 2 == 0, format!("need an even count ≥ 4, got {pts}"));
            }
            CrossSectionKind::Table => match &cs.eigenvalues {
                None => bad("cross_section.eigenvalues", false, "a table needs an eigenvalue list".into()),
                Some(list) => {
                    bad("cross_section.eigenvalues", list.first().is_some_and(|e| e.0 == 0.0), "must start with ν = 0".into());
                    bad(
                        "cross_section.eigenvalues",
                        list.iter().all(|&(nu, m)| nu <= 0.0 && nu.is_finite() && m >= 1),
                        "need finite ν ≤ 0 and multiplicities ≥ 1".into(),
                    );
                    bad(
                        "cross_section.eigenvalues",
                        list.windows(2).all(|w| w[1].0 < w[0].0),
                        "ν must be strictly decreasing".into(),
                    );
                }
            },
        }

        // weight
        bad("weight.p", self.weight.p > 1.0 && finite(self.weight.p), format!("p must lie in (1, ∞), got {}", self.weight.p));
        bad("weight.gamma", finite(self.weight.gamma), format!("gamma must be finite, got {}", self.weight.gamma));

        // grid
        let g = &self.grid;
        bad("grid.points", g.points >= 8, format!("need at least 8 points, got {}", g.points));
        bad("grid.rmax", finite(g.rmin) && finite(g.rmax) && g.rmax > g.rmin, format!("need rmin < rmax, got [{}, {}]", g.rmin, g.rmax));
        match g.kind {
            GridKind::ModelCone => bad("grid.rmin", g.rmin < 0.0 && g.rmax > 0.0, "a model-cone grid must straddle r = 0".into()),
            GridKind::TruncatedCone => bad("grid.rmin", g.rmin == 0.0, "a truncated-cone grid starts at r = 0".into()),
        }

        // contour
        let c = &self.contour;
        bad("contour.theta", c.theta > 0.0 && c.theta < PI, format!("the sector angle must lie in (0, π), got {}", c.theta));
        if let Some(d) = c.delta {
            bad("contour.delta", d > 0.0 && finite(d), format!("must be positive, got {d}"));
        }
        if let Some(s) = c.smax {
            bad("contour.smax", s > 0.0 && finite(s), format!("must be positive, got {s}"));
        }
        if let Some(n) = c.nray {
            bad("contour.nray", n >= 2, format!("need at least 2, got {n}"));
        }
        if let Some(n) = c.narc {
            bad("contour.narc", n >= 2, format!("need at least 2, got {n}"));
        }
        bad("contour.z", !c.z.is_empty(), "need at least one exponent".into());
        bad(
            "contour.z",
            c.z.iter().all(|z| z[0] < 0.0 && finite(z[1])),
            "every exponent needs Re z < 0 and finite Im z".into(),
        );

        // scan
        let s = &self.scan;
        bad("scan.decade_max", s.decade_max > s.decade_min, format!("need decade_min < decade_max, got {} ≥ {}", s.decade_min, s.decade_max));
        bad("scan.per_decade", s.per_decade >= 1, "need at least one radius per decade".into());

        // bip
        bad("bip.y_max", self.bip.y_max > 0.0 && finite(self.bip.y_max), format!("must be positive, got {}", self.bip.y_max));
        bad("bip.steps", self.bip.steps >= 3, format!("need at least 3, got {}", self.bip.steps));

        // hardy
        let h = &self.hardy;
        bad("hardy.a", !h.a.is_empty() && h.a.iter().all(|&a| a > -1.0 && finite(a)), "need a > −1".into());
        bad("hardy.p", !h.p.is_empty() && h.p.iter().all(|&p| p > 1.0 && finite(p)), "need p in (1, ∞)".into());
        bad("hardy.r", !h.r.is_empty() && h.r.iter().all(|&r| r > 0.0 && finite(r)), "need r > 0".into());
        bad("hardy.tails", !h.tails.is_empty(), "need at least one tail".into());
        bad("hardy.x_min", h.x_min < 0.0 && finite(h.x_min), format!("need x_min < 0, got {}", h.x_min));
        bad("hardy.points", h.points >= 3, format!("need at least 3, got {}", h.points));

        // heat
        let ht = &self.heat;
        bad("heat.t_final", ht.t_final > 0.0 && finite(ht.t_final), format!("must be positive, got {}", ht.t_final));
        bad("heat.steps", ht.steps >= 2, format!("need at least 2, got {}", ht.steps));
        bad("heat.r_time", ht.r_time >= 1.0 && finite(ht.r_time), format!("need r ≥ 1, got {}", ht.r_time));
        bad("heat.omega", finite(ht.omega), format!("must be finite, got {}", ht.omega));
        bad("heat.frequencies", ht.frequencies.iter().all(|&w| w >= 0.0 && finite(w)), "need finite ω ≥ 0".into());
        let preset = matches!(ht.forcing.as_str(), "zero" | "constant" | "sine");
        bad("heat.forcing", preset || ht.forcing.ends_with(".csv"), format!("expected zero|constant|sine or a .csv path, got {:?}", ht.forcing));

        // quasilinear
        let q = &self.quasilinear;
        bad("quasilinear.r_max", q.r_max > 0.0 && finite(q.r_max), format!("must be positive, got {}", q.r_max));
        bad("quasilinear.nr", q.nr >= 8, format!("need at least 8, got {}", q.nr));
        bad("quasilinear.nx", q.nx >= 4 && q.nx % 2 == 0, format!("need an even count ≥ 4, got {}", q.nx));
        bad("quasilinear.t_final", q.t_final > 0.0 && finite(q.t_final), format!("must be positive, got {}", q.t_final));
        bad("quasilinear.steps", q.steps >= 1, "need at least one step".into());
        bad("quasilinear.a", MultiPoly::parse(&q.a, &["s"]).is_ok(), format!("not a polynomial in s: {:?}", q.a));
        bad("quasilinear.c", q.c > 0.0 && finite(q.c), format!("must be positive, got {}", q.c));
        bad("quasilinear.g", finite(q.g), format!("must be finite, got {}", q.g));
        bad("quasilinear.u0_value", finite(q.u0_value), format!("must be finite, got {}", q.u0_value));
        bad("quasilinear.f_exponent", finite(q.f_exponent), format!("must be finite, got {}", q.f_exponent));
        bad("quasilinear.f_coefficient", finite(q.f_coefficient), format!("must be finite, got {}", q.f_coefficient));
        bad("quasilinear.diffusion_scale", q.diffusion_scale >= 0.0 && finite(q.diffusion_scale), format!("must be ≥ 0, got {}", q.diffusion_scale));
        bad("quasilinear.a_min", q.a_min > 0.0 && finite(q.a_min), format!("must be positive, got {}", q.a_min));
        bad("quasilinear.q", q.q > 1.0 && finite(q.q), format!("need q > 1, got {}", q.q));
        bad("quasilinear.tol", q.tol > 0.0 && q.tol < 1.0, format!("need 0 < tol < 1, got {}", q.tol));

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

fn check_poly(errs: &mut Vec<FieldError>, field: &str, src: &Option<String>, wanted: bool, vars: &[&str]) {
    match (src, wanted) {
        (None, true) => errs.push(FieldError { field: field.into(), reason: "missing".into() }),
        (Some(_), false) => errs.push(FieldError { field: field.into(), reason: "beyond the order mu".into() }),
        (Some(s), true) => {
            if let Err(e) = MultiPoly::parse(s, vars) {
                errs.push(FieldError { field: field.into(), reason: e.to_string() });
            }
        }
        (None, false) => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(e: ConfigError) -> Vec<String> {
        match e {
            ConfigError::Invalid(v) => v.into_iter().map(|f| f.field).collect(),
            other => panic!("expected field errors, got {other}"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("[operator]\ntype = \"laplacian\"\n[cross_section]\nn = 1\n").unwrap();
        assert_eq!(cfg.weight, WeightConfig { gamma: 0.0, p: 2.0 });
        assert_eq!(cfg.grid.points, 256);
        assert_eq!(cfg.contour.delta, None);
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn p_one_names_the_field() {
        assert_eq!(fields(parse_config("[weight]\np = 1.0\n").unwrap_err()), ["weight.p"]);
    }

    #[test]
    fn improper_sector_is_rejected() {
        let src = format!("[contour]\ntheta = {}\n", PI);
        assert_eq!(fields(parse_config(&src).unwrap_err()), ["contour.theta"]);
    }

    #[test]
    fn every_violation_is_listed() {
        let f = fields(parse_config("[weight]\np = 0.5\n[grid]\npoints = 3\n[heat]\nsteps = 1\n").unwrap_err());
        assert_eq!(f, ["weight.p", "grid.points", "heat.steps"]);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        assert!(matches!(parse_config("[weight]\ngamm = 0.5\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_config("sed = 1\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_config("[grid]\nkind = \"cylinder\"\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn custom_operator_needs_all_coefficients() {
        let src = "[operator]\ntype = \"custom\"\nmu = 2\na_0 = \"-nu\"\na_1 = \"0\"\ns_0 = \"xi^2\"\ns_1 = \"0\"\ns_2 = \"-1\"\n";
        assert_eq!(fields(parse_config(src).unwrap_err()), ["operator.a_2"]);
        let ok = format!("{src}a_2 = \"-1\"\n");
        parse_config(&ok).unwrap();
    }

    #[test]
    fn echo_round_trips() {
        let src = "seed = 7\n[cross_section]\ntype = \"table\"\nn = 4\neigenvalues = [[0.0, 1], [-4.0, 5]]\n[contour]\ndelta = 0.25\nz = [[-0.3, 1.5]]\n";
        let cfg = parse_config(src).unwrap();
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
        let d = RunConfig::default();
        assert_eq!(parse_config(&d.to_toml()).unwrap(), d);
    }
}
