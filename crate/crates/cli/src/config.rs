//! Flat `key=value` experiment configuration with dotted keys.
//!
//! Lines are `key = value`; `#` starts a comment. List values use commas
//! (`start = 0,1`), and lists of points or atom rows use `;`
//! (`targets = 10,3; 20,3`, `walk.atoms = 1 0 0.5; -1 0 0.5`).

use std::collections::BTreeMap;
use std::fmt;

use cone_green::{Cone, Pmf1d, StepDistribution};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("walk.kind", "simple | product-rademacher | product-lazy | williamson | custom-atoms"),
    ("walk.d", "walk dimension (defaults to cone.d)"),
    ("walk.beta", "Williamson tail exponent"),
    ("walk.n_max", "Williamson truncation level"),
    ("walk.atoms", "custom atoms as rows `x1 ... xd prob` separated by `;`"),
    ("cone.kind", "half-space | wedge | orthant"),
    ("cone.d", "cone dimension"),
    ("cone.beta", "wedge opening angle in radians"),
    ("start", "start point x"),
    ("start.alt", "second start point x' for Martin ratios"),
    ("target", "target point y"),
    ("targets", "explicit target points separated by `;`"),
    ("ray.direction", "direction of the target ray"),
    ("ray.moduli", "moduli along the ray"),
    ("boundary.distance", "lattice distance from the wall"),
    ("boundary.along", "along-wall coordinates of the boundary path"),
    ("method", "dp | mc | tilted | auto"),
    ("horizon", "number of steps N"),
    ("horizon.factor", "scan horizon as a multiple of |y|^2"),
    ("dp.spread", "Hoeffding prune radius in standard deviations (0 disables)"),
    ("replicas", "Monte Carlo replicas"),
    ("seed", "RNG seed"),
    ("tilt.gamma", "tilt truncation as a fraction of the target coordinate"),
    ("schedule", "time schedule for V estimates"),
    ("v.x", "V(x) used in scaled ratios"),
    ("v.alt", "V(x') used in Martin ratios"),
    ("ladder.horizon", "ladder DP horizon"),
    ("ladder.k_max", "largest renewal index"),
    ("llt.n", "layer used by the local-limit check"),
    ("tolerance.plateau", "relative plateau tolerance"),
    ("tolerance.exponent", "absolute tolerance on fitted exponents"),
    ("tolerance.llt", "largest accepted local-limit residual"),
    ("memory_cap", "DP memory cap in bytes"),
    ("output", "CSV output path"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Dp,
    Mc,
    Tilted,
    Auto,
}

impl MethodChoice {
    pub fn random(self) -> bool {
        !matches!(self, MethodChoice::Dp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WalkSpec {
    Simple,
    ProductRademacher,
    ProductLazy,
    Williamson { beta: f64, n_max: u32 },
    Atoms(Vec<(Vec<i64>, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConeSpec {
    HalfSpace,
    Wedge(f64),
    Orthant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub plateau: f64,
    /// Defaults to 0.3 for interior fits and 0.4 for boundary fits.
    pub exponent: Option<f64>,
    pub llt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub walk: WalkSpec,
    pub cone: ConeSpec,
    pub start: Option<Vec<i64>>,
    pub start_alt: Option<Vec<i64>>,
    pub target: Option<Vec<i64>>,
    pub targets: Vec<Vec<i64>>,
    pub direction: Option<Vec<f64>>,
    pub moduli: Vec<f64>,
    pub boundary_distance: i64,
    pub boundary_along: Vec<i64>,
    pub method: MethodChoice,
    pub horizon: usize,
    pub horizon_factor: f64,
    pub spread: Option<f64>,
    pub replicas: usize,
    pub seed: Option<u64>,
    pub gamma: f64,
    pub schedule: Vec<usize>,
    pub v_x: Option<f64>,
    pub v_alt: Option<f64>,
    pub ladder_horizon: usize,
    pub ladder_k_max: usize,
    pub llt_n: usize,
    pub tolerances: Tolerances,
    pub memory_cap: u64,
    pub output: Option<String>,
}

/// All problems found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Splits `key=value` lines into a map. Later lines override earlier ones.
pub fn parse_pairs(text: &str, errors: &mut Vec<String>) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => errors.push(format!("line {}: expected key=value, got `{line}`", i + 1)),
        }
    }
    map
}

struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn scalar<T: std::str::FromStr>(&mut self, key: &str) -> Option<T> {
        let v = self.raw(key)?;
        match v.parse() {
            Ok(x) => Some(x),
            Err(_) => {
                self.errors.push(format!("{key}: cannot parse `{v}`"));
                None
            }
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, text: &str) -> Option<Vec<T>> {
        let mut out = Vec::new();
        for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match part.parse() {
                Ok(x) => out.push(x),
                Err(_) => {
                    self.errors.push(format!("{key}: cannot parse `{part}`"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn vector<T: std::str::FromStr>(&mut self, key: &str) -> Option<Vec<T>> {
        let v = self.raw(key)?.to_string();
        self.list(key, &v)
    }

    fn points(&mut self, key: &str) -> Vec<Vec<i64>> {
        let Some(v) = self.raw(key).map(str::to_string) else {
            return Vec::new();
        };
        v.split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .filter_map(|s| self.list(key, s))
            .collect()
    }

    fn positive(&mut self, key: &str, default: f64) -> f64 {
        match self.scalar::<f64>(key) {
            Some(v) if v > 0.0 && v.is_finite() => v,
            Some(v) => {
                self.errors.push(format!("{key}: must be positive, got {v}"));
                default
            }
            None => default,
        }
    }
}

fn walk_spec(r: &mut Reader, dim: usize) -> WalkSpec {
    match r.raw("walk.kind").unwrap_or("simple") {
        "simple" => WalkSpec::Simple,
        "product-rademacher" => WalkSpec::ProductRademacher,
        "product-lazy" => WalkSpec::ProductLazy,
        "williamson" => {
            let beta = r.scalar("walk.beta").unwrap_or(2.5);
            let n_max = r.scalar("walk.n_max").unwrap_or(30);
            WalkSpec::Williamson { beta, n_max }
        }
        "custom-atoms" => {
            let text = r.raw("walk.atoms").unwrap_or("").to_string();
            let mut atoms = Vec::new();
            for row in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                let parts: Vec<&str> = row.split_whitespace().collect();
                if parts.len() != dim + 1 {
                    r.errors.push(format!(
                        "walk.atoms: row `{row}` has {} entries, expected {} coordinates and a probability",
                        parts.len(),
                        dim
                    ));
                    continue;
                }
                let coords: Result<Vec<i64>, _> = parts[..dim].iter().map(|s| s.parse()).collect();
                match (coords, parts[dim].parse::<f64>()) {
                    (Ok(c), Ok(p)) => atoms.push((c, p)),
                    _ => r.errors.push(format!("walk.atoms: cannot parse row `{row}`")),
                }
            }
            if atoms.is_empty() {
                r.errors.push("walk.atoms: custom-atoms needs at least one row".into());
            }
            WalkSpec::Atoms(atoms)
        }
        other => {
            r.errors.push(format!("walk.kind: unknown kind `{other}`"));
            WalkSpec::Simple
        }
    }
}

fn cone_spec(r: &mut Reader) -> ConeSpec {
    match r.raw("cone.kind").unwrap_or("half-space") {
        "half-space" => ConeSpec::HalfSpace,
        "orthant" => ConeSpec::Orthant,
        "wedge" => match r.scalar::<f64>("cone.beta") {
            Some(b) => ConeSpec::Wedge(b),
            None => {
                if r.raw("cone.beta").is_none() {
                    r.errors.push("cone.beta: required for a wedge".into());
                }
                ConeSpec::Wedge(std::f64::consts::FRAC_PI_2)
            }
        },
        other => {
            r.errors.push(format!("cone.kind: unknown kind `{other}`"));
            ConeSpec::HalfSpace
        }
    }
}

/// Parses and validates a configuration, reporting every error found.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let map = parse_pairs(text, &mut errors);
    from_map(&map, errors)
}

pub fn from_map(map: &BTreeMap<String, String>, mut errors: Vec<String>) -> Result<ExperimentConfig, ConfigErrors> {
    for k in map.keys() {
        if !KEYS.iter().any(|(name, _)| name == k) {
            errors.push(format!("unknown key `{k}`"));
        }
    }
    let mut r = Reader { map, errors };

    let cone = cone_spec(&mut r);
    let cone_d: Option<usize> = r.scalar("cone.d");
    let walk_d: Option<usize> = r.scalar("walk.d");
    let dim = match (&cone, cone_d, walk_d) {
        (ConeSpec::Wedge(_), c, w) => {
            for (key, v) in [("cone.d", c), ("walk.d", w)] {
                if let Some(v) = v.filter(|&v| v != 2) {
                    r.errors.push(format!("dimension mismatch: {key}={v} but a wedge is 2-dimensional"));
                }
            }
            2
        }
        (_, Some(c), Some(w)) if c != w => {
            r.errors.push(format!("dimension mismatch: cone.d={c} but walk.d={w}"));
            c
        }
        (_, c, w) => c.or(w).unwrap_or(2),
    };
    if dim == 0 {
        r.errors.push("cone.d: dimension must be at least 1".into());
    }
    let walk = walk_spec(&mut r, dim);

    let start = r.vector::<i64>("start");
    let start_alt = r.vector::<i64>("start.alt");
    let target = r.vector::<i64>("target");
    let targets = r.points("targets");
    let direction = r.vector::<f64>("ray.direction");
    for (key, len) in [
        ("start", start.as_ref().map(Vec::len)),
        ("start.alt", start_alt.as_ref().map(Vec::len)),
        ("target", target.as_ref().map(Vec::len)),
        ("ray.direction", direction.as_ref().map(Vec::len)),
    ] {
        if let Some(len) = len.filter(|&l| l != dim) {
            r.errors.push(format!("dimension mismatch: {key} has {len} coordinates, expected {dim}"));
        }
    }
    for t in &targets {
        if t.len() != dim {
            r.errors.push(format!("dimension mismatch: target {t:?} in `targets` has {} coordinates, expected {dim}", t.len()));
        }
    }

    let method = match r.raw("method").unwrap_or("dp") {
        "dp" => MethodChoice::Dp,
        "mc" => MethodChoice::Mc,
        "tilted" => MethodChoice::Tilted,
        "auto" => MethodChoice::Auto,
        other => {
            r.errors.push(format!("method: unknown method `{other}`"));
            MethodChoice::Dp
        }
    };
    let seed = r.scalar::<u64>("seed");
    if method.random() && seed.is_none() && r.raw("seed").is_none() {
        r.errors.push(format!("missing seed: method {method:?} uses randomness").to_lowercase());
    }

    let spread = match r.scalar::<f64>("dp.spread") {
        Some(0.0) => None,
        Some(s) if s > 0.0 => Some(s),
        Some(s) => {
            r.errors.push(format!("dp.spread: must be non-negative, got {s}"));
            None
        }
        None => Some(10.0),
    };

    let tolerances = Tolerances {
        plateau: r.positive("tolerance.plateau", 0.15),
        exponent: r.raw("tolerance.exponent").is_some().then(|| r.positive("tolerance.exponent", 0.3)),
        llt: r.positive("tolerance.llt", 0.10),
    };
    let cfg = ExperimentConfig {
        dim,
        walk,
        cone,
        start,
        start_alt,
        target,
        targets,
        direction,
        moduli: r.vector("ray.moduli").unwrap_or_default(),
        boundary_distance: r.scalar("boundary.distance").unwrap_or(2),
        boundary_along: r.vector("boundary.along").unwrap_or_default(),
        method,
        horizon: r.scalar("horizon").unwrap_or(1000),
        horizon_factor: r.positive("horizon.factor", 2.0),
        spread,
        replicas: r.scalar("replicas").unwrap_or(100_000),
        seed,
        gamma: r.positive("tilt.gamma", 0.5),
        schedule: r.vector("schedule").unwrap_or_else(|| vec![64, 256, 1024]),
        v_x: r.scalar("v.x"),
        v_alt: r.scalar("v.alt"),
        ladder_horizon: r.scalar("ladder.horizon").unwrap_or(40_000),
        ladder_k_max: r.scalar("ladder.k_max").unwrap_or(50),
        llt_n: r.scalar("llt.n").unwrap_or(400),
        tolerances,
        memory_cap: r.scalar("memory_cap").unwrap_or(cone_green::exact_dp::DEFAULT_MEMORY_CAP),
        output: r.raw("output").map(str::to_string),
    };
    if r.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(r.errors))
    }
}

impl ExperimentConfig {
    pub fn distribution(&self) -> cone_green::Result<StepDistribution> {
        match &self.walk {
            WalkSpec::Simple => StepDistribution::simple(self.dim),
            WalkSpec::ProductRademacher => StepDistribution::product(&Pmf1d::rademacher(), self.dim),
            // Products need unit-variance marginals, so the lazy walk is {-2, 0, 2}.
            WalkSpec::ProductLazy => StepDistribution::product(&Pmf1d::lazy_unit(), self.dim),
            WalkSpec::Williamson { beta, n_max } => StepDistribution::williamson(self.dim, *beta, *n_max),
            WalkSpec::Atoms(a) => StepDistribution::from_atoms(self.dim, a.clone()),
        }
    }

    pub fn build_cone(&self) -> cone_green::Result<Cone> {
        match self.cone {
            ConeSpec::HalfSpace => Cone::half_space(self.dim),
            ConeSpec::Wedge(b) => Cone::wedge(b),
            ConeSpec::Orthant => Cone::orthant(self.dim),
        }
    }
}
