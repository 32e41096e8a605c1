//! Line-oriented `section.key = value` configuration.
//!
//! ```text
//! # deterministic Cahn-Hilliard on the unit interval
//! domain.lengths = 1.0
//! domain.modes = 32
//! potential.kind = polynomial
//! time.T = 0.01
//! time.dt = 1e-5
//! ```
//!
//! Unknown keys, repeated keys and malformed values are errors carrying
//! the line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::integrator::{InitialDatum, Mobility, SolverConfig};
use crate::mobility::{build_m_eps, MobilitySpec};
use crate::noise::{NoiseSpec, DEFAULT_MODES};
use crate::potentials::{build_eps_reg, build_lambda_reg, PotentialSpec};
use crate::spectral::{Backend, SpectralGrid, DEFAULT_OVERSAMPLE};

/// λ used when a polynomial potential is configured without one.
pub const DEFAULT_LAMBDA: f64 = 1e-2;

const KEYS: &[&str] = &[
    "domain.dim",
    "domain.lengths",
    "domain.modes",
    "domain.oversample",
    "domain.backend",
    "potential.kind",
    "potential.theta",
    "potential.theta0",
    "potential.c_f",
    "potential.lambda",
    "potential.epsilon",
    "mobility.kind",
    "mobility.m0",
    "mobility.alpha",
    "noise.sigma0",
    "noise.p",
    "noise.K",
    "noise.shape",
    "time.T",
    "time.dt",
    "time.record_every",
    "time.kappa",
    "init.preset",
    "init.amplitude",
    "init.mode",
    "init.mean",
    "init.value",
    "run.paths",
    "run.seed",
    "study.axis",
    "study.levels",
];

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialChoice {
    Logarithmic { theta: f64, theta0: f64 },
    DoubleObstacle,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MobilityChoice {
    Constant { m0: f64 },
    PolyDegenerate { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyAxis {
    Modes,
    Dt,
    Lambda,
    Epsilon,
}

impl StudyAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "n" | "modes" => Some(StudyAxis::Modes),
            "dt" => Some(StudyAxis::Dt),
            "lambda" => Some(StudyAxis::Lambda),
            "epsilon" | "eps" => Some(StudyAxis::Epsilon),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StudyAxis::Modes => "n",
            StudyAxis::Dt => "dt",
            StudyAxis::Lambda => "lambda",
            StudyAxis::Epsilon => "epsilon",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub axis: StudyAxis,
    pub levels: Vec<f64>,
}

/// Fully resolved problem description, defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub lengths: Vec<f64>,
    pub modes: usize,
    pub oversample: f64,
    pub backend: Backend,
    pub potential: PotentialChoice,
    pub c_f: Option<f64>,
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
    pub mobility: MobilityChoice,
    pub sigma0: f64,
    pub p: f64,
    pub noise_modes: usize,
    pub t_final: f64,
    pub dt: f64,
    pub record_every: usize,
    pub kappa: Option<f64>,
    pub init: InitialDatum,
    pub paths: usize,
    pub seed: u64,
    pub study: Option<StudySpec>,
}

struct Entries {
    map: BTreeMap<&'static str, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|(line, v)| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("{key}: expected a number, got '{v}'"),
                })
            })
            .transpose()
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.raw(key)
            .map(|(line, v)| {
                v.parse::<usize>().map_err(|_| Error::Parse {
                    line,
                    message: format!("{key}: expected a nonnegative integer, got '{v}'"),
                })
            })
            .transpose()
    }

    fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.raw(key)
            .map(|(line, v)| {
                v.parse::<u64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("{key}: expected a 64-bit unsigned integer, got '{v}'"),
                })
            })
            .transpose()
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.raw(key)
            .map(|(line, v)| {
                v.split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|_| Error::Parse {
                            line,
                            message: format!("{key}: expected a comma-separated list of numbers, got '{v}'"),
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    fn required_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?
            .ok_or_else(|| Error::Validation(format!("missing required key {key}")))
    }

    fn reject(&self, key: &str, why: &str) -> Result<()> {
        match self.raw(key) {
            Some((line, _)) => Err(Error::Parse {
                line,
                message: format!("{key} is not used {why}"),
            }),
            None => Ok(()),
        }
    }
}

fn tokenize(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected 'section.key = value', got '{content}'"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let known = KEYS.iter().find(|k| **k == key).ok_or_else(|| Error::Parse {
            line,
            message: format!("unknown key '{key}'"),
        })?;
        if value.is_empty() {
            return Err(Error::Parse {
                line,
                message: format!("{key} has an empty value"),
            });
        }
        if let Some((first, _)) = map.insert(*known, (line, value.to_string())) {
            return Err(Error::Parse {
                line,
                message: format!("{key} is already set on line {first}"),
            });
        }
    }
    Ok(Entries { map })
}

pub fn parse_config(text: &str) -> Result<ProblemSpec> {
    let e = tokenize(text)?;

    let lengths = e.list("domain.lengths")?.unwrap_or_else(|| vec![1.0]);
    let dim = e.usize("domain.dim")?.unwrap_or(lengths.len());
    if dim != lengths.len() {
        return Err(Error::Validation(format!(
            "domain.dim = {dim} but domain.lengths has {} entries",
            lengths.len()
        )));
    }
    let modes = e.usize("domain.modes")?.unwrap_or(32);
    let oversample = e.f64("domain.oversample")?.unwrap_or(DEFAULT_OVERSAMPLE);
    let backend = match e.raw("domain.backend") {
        None | Some((_, "fast")) => Backend::Fast,
        Some((_, "naive")) => Backend::Naive,
        Some((line, other)) => {
            return Err(Error::Parse {
                line,
                message: format!("domain.backend must be 'fast' or 'naive', got '{other}'"),
            })
        }
    };

    let potential = match e.raw("potential.kind") {
        Some((_, "logarithmic")) => {
            let theta = e.required_f64("potential.theta")?;
            let theta0 = e.required_f64("potential.theta0")?;
            if !(theta > 0.0 && theta < theta0) {
                return Err(Error::Validation(format!(
                    "theta must be < theta0 with both positive (0 < theta < theta0), got theta = {theta}, theta0 = {theta0}"
                )));
            }
            PotentialChoice::Logarithmic { theta, theta0 }
        }
        Some((_, "double-obstacle")) => PotentialChoice::DoubleObstacle,
        Some((_, "polynomial")) => PotentialChoice::Polynomial,
        Some((line, other)) => {
            return Err(Error::Parse {
                line,
                message: format!(
                    "potential.kind must be logarithmic, double-obstacle or polynomial, got '{other}'"
                ),
            })
        }
        None => return Err(Error::Validation("missing required key potential.kind".into())),
    };
    if !matches!(potential, PotentialChoice::Logarithmic { .. }) {
        e.reject("potential.theta", "by this potential kind")?;
        e.reject("potential.theta0", "by this potential kind")?;
    }
    let c_f = e.f64("potential.c_f")?;
    let mut lambda = e.f64("potential.lambda")?;
    let epsilon = e.f64("potential.epsilon")?;
    let singular = !matches!(potential, PotentialChoice::Polynomial);
    match (lambda, epsilon) {
        (Some(_), Some(_)) => {
            return Err(Error::Validation(
                "potential.lambda and potential.epsilon are mutually exclusive: pick one pipeline".into(),
            ))
        }
        (None, None) if singular => {
            return Err(Error::Validation(
                "a singular potential needs potential.epsilon (the lambda pipeline requires a potential on the whole line)"
                    .into(),
            ))
        }
        (None, None) => lambda = Some(DEFAULT_LAMBDA),
        (Some(_), None) if singular => {
            return Err(Error::Validation(
                "potential.lambda needs a potential on the whole line; use potential.epsilon for singular potentials"
                    .into(),
            ))
        }
        (None, Some(_)) if !singular => {
            return Err(Error::Validation(
                "potential.epsilon needs a singular potential (logarithmic or double-obstacle)".into(),
            ))
        }
        _ => {}
    }

    let mobility = match e.raw("mobility.kind") {
        None | Some((_, "constant")) => MobilityChoice::Constant {
            m0: e.f64("mobility.m0")?.unwrap_or(1.0),
        },
        Some((_, "polynomial-degenerate")) => MobilityChoice::PolyDegenerate {
            alpha: e.f64("mobility.alpha")?.unwrap_or(1.0),
        },
        Some((line, other)) => {
            return Err(Error::Parse {
                line,
                message: format!("mobility.kind must be constant or polynomial-degenerate, got '{other}'"),
            })
        }
    };
    match mobility {
        MobilityChoice::Constant { .. } => e.reject("mobility.alpha", "by a constant mobility")?,
        MobilityChoice::PolyDegenerate { .. } => {
            e.reject("mobility.m0", "by a degenerate mobility")?;
            if lambda.is_some() {
                return Err(Error::Validation(
                    "a degenerate mobility needs the epsilon pipeline (set potential.epsilon)".into(),
                ));
            }
        }
    }

    match e.raw("noise.shape") {
        None | Some((_, "one-minus-r-squared")) => {}
        Some((line, other)) => {
            return Err(Error::Parse {
                line,
                message: format!("noise.shape must be one-minus-r-squared, got '{other}'"),
            })
        }
    }

    let preset = e.raw("init.preset").map_or("cosine", |(_, v)| v);
    let init = match preset {
        "cosine" => {
            e.reject("init.value", "by the cosine preset")?;
            InitialDatum::Cosine {
                amplitude: e.f64("init.amplitude")?.unwrap_or(0.1),
                mode: e.usize("init.mode")?.unwrap_or(1),
                mean: e.f64("init.mean")?.unwrap_or(0.0),
            }
        }
        "uniform-random" => {
            e.reject("init.value", "by the uniform-random preset")?;
            e.reject("init.mode", "by the uniform-random preset")?;
            InitialDatum::UniformRandom {
                amplitude: e.f64("init.amplitude")?.unwrap_or(0.1),
                mean: e.f64("init.mean")?.unwrap_or(0.0),
            }
        }
        "constant" => {
            for k in ["init.amplitude", "init.mode", "init.mean"] {
                e.reject(k, "by the constant preset")?;
            }
            InitialDatum::Constant {
                value: e.f64("init.value")?.unwrap_or(0.0),
            }
        }
        other => {
            let line = e.raw("init.preset").map_or(0, |(l, _)| l);
            return Err(Error::Parse {
                line,
                message: format!("init.preset must be cosine, uniform-random or constant, got '{other}'"),
            });
        }
    };

    let study = match e.raw("study.axis") {
        None => {
            e.reject("study.levels", "without study.axis")?;
            None
        }
        Some((line, name)) => {
            let axis = StudyAxis::parse(name).ok_or_else(|| Error::Parse {
                line,
                message: format!("study.axis must be n, dt, lambda or epsilon, got '{name}'"),
            })?;
            let levels = e
                .list("study.levels")?
                .ok_or_else(|| Error::Validation("study.axis needs study.levels".into()))?;
            Some(StudySpec { axis, levels })
        }
    };

    let spec = ProblemSpec {
        lengths,
        modes,
        oversample,
        backend,
        potential,
        c_f,
        lambda,
        epsilon,
        mobility,
        sigma0: e.f64("noise.sigma0")?.unwrap_or(0.0),
        p: e.f64("noise.p")?.unwrap_or(1.0),
        noise_modes: e.usize("noise.K")?.unwrap_or(DEFAULT_MODES),
        t_final: e.required_f64("time.T")?,
        dt: e.required_f64("time.dt")?,
        record_every: e.usize("time.record_every")?.unwrap_or(1),
        kappa: e.f64("time.kappa")?,
        init,
        paths: e.usize("run.paths")?.unwrap_or(1),
        seed: e.u64("run.seed")?.unwrap_or(0),
        study,
    };
    spec.build()?;
    Ok(spec)
}

impl ProblemSpec {
    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        let base = match self.potential {
            PotentialChoice::Logarithmic { theta, theta0 } => PotentialSpec::logarithmic(theta, theta0)?,
            PotentialChoice::DoubleObstacle => PotentialSpec::double_obstacle(),
            PotentialChoice::Polynomial => PotentialSpec::polynomial(),
        };
        match self.c_f {
            Some(c) => base.with_c_f(c),
            None => Ok(base),
        }
    }

    pub fn mobility_spec(&self) -> Result<MobilitySpec> {
        match self.mobility {
            MobilityChoice::Constant { m0 } => MobilitySpec::constant(m0),
            MobilityChoice::PolyDegenerate { alpha } => MobilitySpec::poly_degenerate(alpha),
        }
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        NoiseSpec::default_shape(self.sigma0, self.p, self.noise_modes)
    }

    pub fn grid(&self) -> Result<SpectralGrid> {
        SpectralGrid::new(&self.lengths, self.modes, self.oversample, self.backend)
    }

    /// Assembles and validates the solver configuration.
    pub fn build(&self) -> Result<SolverConfig> {
        let grid = Arc::new(self.grid()?);
        let pot = self.potential_spec()?;
        let mob = self.mobility_spec()?;
        let mut noise = self.noise_spec()?;
        let (potential, mobility) = match (self.lambda, self.epsilon) {
            (Some(l), None) => (
                build_lambda_reg(&pot, pot.c_f(), l)?,
                Mobility::Plain(mob),
            ),
            (None, Some(eps)) => {
                noise = noise.truncate_eps(eps)?;
                (build_eps_reg(&pot, eps)?, Mobility::Truncated(build_m_eps(&mob, eps)?))
            }
            _ => {
                return Err(Error::Validation(
                    "exactly one of potential.lambda and potential.epsilon must be set".into(),
                ))
            }
        };
        let kappa = self.kappa.unwrap_or_else(|| mobility.sup_m());
        let cfg = SolverConfig {
            grid,
            potential: Arc::new(potential),
            mobility: Arc::new(mobility),
            noise,
            t_final: self.t_final,
            dt: self.dt,
            kappa,
            seed: self.seed,
            init: self.init.clone(),
            record_every: self.record_every,
        };
        cfg.validate()?;
        cfg.initial_field()?;
        Ok(cfg)
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        ProblemSpec {
            epsilon: Some(eps),
            lambda: None,
            ..self.clone()
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        ProblemSpec {
            lambda: Some(lambda),
            epsilon: None,
            ..self.clone()
        }
    }

    pub fn with_modes(&self, modes: usize) -> Self {
        ProblemSpec {
            modes,
            ..self.clone()
        }
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        ProblemSpec { dt, ..self.clone() }
    }

    /// Canonical text form; parsing it yields an equal spec.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "domain.dim = {}", self.lengths.len());
        let _ = writeln!(s, "domain.lengths = {}", list(&self.lengths));
        let _ = writeln!(s, "domain.modes = {}", self.modes);
        let _ = writeln!(s, "domain.oversample = {:?}", self.oversample);
        let backend = match self.backend {
            Backend::Fast => "fast",
            Backend::Naive => "naive",
        };
        let _ = writeln!(s, "domain.backend = {backend}");
        match self.potential {
            PotentialChoice::Logarithmic { theta, theta0 } => {
                let _ = writeln!(s, "potential.kind = logarithmic");
                let _ = writeln!(s, "potential.theta = {theta:?}");
                let _ = writeln!(s, "potential.theta0 = {theta0:?}");
            }
            PotentialChoice::DoubleObstacle => {
                let _ = writeln!(s, "potential.kind = double-obstacle");
            }
            PotentialChoice::Polynomial => {
                let _ = writeln!(s, "potential.kind = polynomial");
            }
        }
        if let Some(c) = self.c_f {
            let _ = writeln!(s, "potential.c_f = {c:?}");
        }
        if let Some(l) = self.lambda {
            let _ = writeln!(s, "potential.lambda = {l:?}");
        }
        if let Some(e) = self.epsilon {
            let _ = writeln!(s, "potential.epsilon = {e:?}");
        }
        match self.mobility {
            MobilityChoice::Constant { m0 } => {
                let _ = writeln!(s, "mobility.kind = constant");
                let _ = writeln!(s, "mobility.m0 = {m0:?}");
            }
            MobilityChoice::PolyDegenerate { alpha } => {
                let _ = writeln!(s, "mobility.kind = polynomial-degenerate");
                let _ = writeln!(s, "mobility.alpha = {alpha:?}");
            }
        }
        let _ = writeln!(s, "noise.shape = one-minus-r-squared");
        let _ = writeln!(s, "noise.sigma0 = {:?}", self.sigma0);
        let _ = writeln!(s, "noise.p = {:?}", self.p);
        let _ = writeln!(s, "noise.K = {}", self.noise_modes);
        let _ = writeln!(s, "time.T = {:?}", self.t_final);
        let _ = writeln!(s, "time.dt = {:?}", self.dt);
        let _ = writeln!(s, "time.record_every = {}", self.record_every);
        if let Some(k) = self.kappa {
            let _ = writeln!(s, "time.kappa = {k:?}");
        }
        match &self.init {
            InitialDatum::Cosine { amplitude, mode, mean } => {
                let _ = writeln!(s, "init.preset = cosine");
                let _ = writeln!(s, "init.amplitude = {amplitude:?}");
                let _ = writeln!(s, "init.mode = {mode}");
                let _ = writeln!(s, "init.mean = {mean:?}");
            }
            InitialDatum::UniformRandom { amplitude, mean } => {
                let _ = writeln!(s, "init.preset = uniform-random");
                let _ = writeln!(s, "init.amplitude = {amplitude:?}");
                let _ = writeln!(s, "init.mean = {mean:?}");
            }
            InitialDatum::Constant { value } => {
                let _ = writeln!(s, "init.preset = constant");
                let _ = writeln!(s, "init.value = {value:?}");
            }
        }
        let _ = writeln!(s, "run.paths = {}", self.paths);
        let _ = writeln!(s, "run.seed = {}", self.seed);
        if let Some(st) = &self.study {
            let _ = writeln!(s, "study.axis = {}", st.axis.name());
            let _ = writeln!(s, "study.levels = {}", list(&st.levels));
        }
        s
    }
}
