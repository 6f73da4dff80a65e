//! Run configuration: a line-oriented `key = value` format under
//! `[section]` headers. Unknown keys and sections are hard errors (typo
//! protection), every diagnostic carries a line number, and the canonical
//! defaults for each model are printed by `oed config --dump-defaults`.

use anyhow::{anyhow, bail, Context, Result};
use oed_core::dp::{ControlSet, PriorGrid};
use oed_core::experiment::{ControlMode, ExperimentConfig, ObservationRegime};
use oed_core::mca::{AxisSpec, Grid, MCAConfig};
use oed_core::models::{
    ChemostatParams, DoubleWellParams, MorrisLecarParams, ObservationModel, OuParams,
};
use oed_core::sde::DiffusionModel;
use std::collections::{BTreeMap, BTreeSet};

const SECTIONS: [&str; 7] = [
    "model",
    "grid",
    "control",
    "prior",
    "observation",
    "filter",
    "experiment",
];
const REQUIRED_SECTIONS: [&str; 5] = ["model", "grid", "control", "prior", "experiment"];

struct Reader {
    entries: BTreeMap<(String, String), (String, usize)>,
    consumed: BTreeSet<(String, String)>,
    sections: BTreeSet<String>,
}

impl Reader {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut sections = BTreeSet::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("line {line_no}: malformed section header `{line}`"))?
                    .trim()
                    .to_string();
                if !SECTIONS.contains(&name.as_str()) {
                    bail!("line {line_no}: unknown section [{name}]");
                }
                sections.insert(name.clone());
                current = Some(name);
                continue;
            }
            let section = current
                .clone()
                .ok_or_else(|| anyhow!("line {line_no}: entry before any [section] header"))?;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line_no}: expected `key = value`, got `{line}`"))?;
            let key = key.trim().to_string();
            // values run to end of line or to a trailing comment
            let value = value
                .split_once('#')
                .map_or(value, |(v, _)| v)
                .trim()
                .to_string();
            if entries
                .insert((section.clone(), key.clone()), (value, line_no))
                .is_some()
            {
                bail!("line {line_no}: duplicate key `{key}` in [{section}]");
            }
        }
        let missing: Vec<&str> = REQUIRED_SECTIONS
            .iter()
            .filter(|s| !sections.contains(**s))
            .copied()
            .collect();
        if !missing.is_empty() {
            bail!(
                "missing required section(s): {}",
                missing
                    .iter()
                    .map(|s| format!("[{s}]"))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }
        Ok(Self {
            entries,
            consumed: BTreeSet::new(),
            sections,
        })
    }

    fn has_section(&self, section: &str) -> bool {
        self.sections.contains(section)
    }

    fn raw(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let k = (section.to_string(), key.to_string());
        let v = self.entries.get(&k).cloned();
        if v.is_some() {
            self.consumed.insert(k);
        }
        v
    }

    fn required(&mut self, section: &str, key: &str) -> Result<(String, usize)> {
        self.raw(section, key)
            .ok_or_else(|| anyhow!("missing required key `{key}` in [{section}]"))
    }

    fn f64(&mut self, section: &str, key: &str) -> Result<f64> {
        let (v, line) = self.required(section, key)?;
        v.parse()
            .map_err(|_| anyhow!("line {line}: `{section}.{key}`: malformed number `{v}`"))
    }

    fn f64_opt(&mut self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| anyhow!("line {line}: `{section}.{key}`: malformed number `{v}`")),
        }
    }

    fn usize(&mut self, section: &str, key: &str) -> Result<usize> {
        let (v, line) = self.required(section, key)?;
        v.parse()
            .map_err(|_| anyhow!("line {line}: `{section}.{key}`: malformed integer `{v}`"))
    }

    fn usize_opt(&mut self, section: &str, key: &str) -> Result<Option<usize>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| anyhow!("line {line}: `{section}.{key}`: malformed integer `{v}`")),
        }
    }

    fn u64(&mut self, section: &str, key: &str) -> Result<u64> {
        let (v, line) = self.required(section, key)?;
        v.parse()
            .map_err(|_| anyhow!("line {line}: `{section}.{key}`: malformed integer `{v}`"))
    }

    fn string(&mut self, section: &str, key: &str) -> Result<String> {
        Ok(self.required(section, key)?.0)
    }

    fn list_f64(&mut self, section: &str, key: &str) -> Result<Vec<f64>> {
        let (v, line) = self.required(section, key)?;
        v.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    anyhow!("line {line}: `{section}.{key}`: malformed number `{}`", s.trim())
                })
            })
            .collect()
    }

    fn list_usize(&mut self, section: &str, key: &str) -> Result<Vec<usize>> {
        let (v, line) = self.required(section, key)?;
        v.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    anyhow!("line {line}: `{section}.{key}`: malformed integer `{}`", s.trim())
                })
            })
            .collect()
    }

    fn list_usize_opt(&mut self, section: &str, key: &str) -> Result<Option<Vec<usize>>> {
        if self.entries.contains_key(&(section.to_string(), key.to_string())) {
            self.list_usize(section, key).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Error on any key that was never consumed (unknown keys, typos).
    fn finish(self) -> Result<()> {
        for ((section, key), (_, line)) in &self.entries {
            if !self
                .consumed
                .contains(&(section.clone(), key.clone()))
            {
                bail!("line {line}: unknown key `{key}` in [{section}]");
            }
        }
        Ok(())
    }
}

/// Which concrete model a config describes, with its parameters.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    DoubleWell(DoubleWellParams),
    MorrisLecar(MorrisLecarParams),
    Chemostat(ChemostatParams),
    Ou(OuParams),
}

impl ModelSpec {
    pub fn model(&self) -> &dyn DiffusionModel {
        match self {
            ModelSpec::DoubleWell(p) => p,
            ModelSpec::MorrisLecar(p) => p,
            ModelSpec::Chemostat(p) => p,
            ModelSpec::Ou(p) => p,
        }
    }

    /// The stored nominal value of the estimated parameter.
    pub fn nominal_theta(&self) -> f64 {
        match self {
            ModelSpec::DoubleWell(p) => p.a,
            ModelSpec::MorrisLecar(p) => p.g_ca,
            ModelSpec::Chemostat(p) => p.kappa,
            ModelSpec::Ou(p) => p.beta,
        }
    }
}

/// Fully parsed run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub grid: Grid,
    pub dt_h: f64,
    pub skip_factors: Option<Vec<usize>>,
    pub controls: ControlSet,
    pub prior: PriorGrid,
    pub observation: ObservationRegime,
    pub n_particles: usize,
    pub control_theta: Option<f64>,
    pub true_theta: f64,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub trials: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Reader::parse(text)?;

        let name = r.string("model", "name")?;
        let model = match name.as_str() {
            "double_well" => {
                let d = DoubleWellParams::default();
                ModelSpec::DoubleWell(DoubleWellParams {
                    a: r.f64_opt("model", "a")?.unwrap_or(d.a),
                    w: r.f64_opt("model", "w")?.unwrap_or(d.w),
                    sigma: r.f64_opt("model", "sigma")?.unwrap_or(d.sigma),
                })
            }
            "morris_lecar" => {
                let d = MorrisLecarParams::default();
                ModelSpec::MorrisLecar(MorrisLecarParams {
                    c_m: r.f64_opt("model", "c_m")?.unwrap_or(d.c_m),
                    g_k: r.f64_opt("model", "g_k")?.unwrap_or(d.g_k),
                    g_ca: r.f64_opt("model", "g_ca")?.unwrap_or(d.g_ca),
                    g_leak: r.f64_opt("model", "g_leak")?.unwrap_or(d.g_leak),
                    phi: r.f64_opt("model", "phi")?.unwrap_or(d.phi),
                    v_k: r.f64_opt("model", "v_k")?.unwrap_or(d.v_k),
                    v_leak: r.f64_opt("model", "v_leak")?.unwrap_or(d.v_leak),
                    v_ca: r.f64_opt("model", "v_ca")?.unwrap_or(d.v_ca),
                    v1: r.f64_opt("model", "v1")?.unwrap_or(d.v1),
                    v2: r.f64_opt("model", "v2")?.unwrap_or(d.v2),
                    v3: r.f64_opt("model", "v3")?.unwrap_or(d.v3),
                    v4: r.f64_opt("model", "v4")?.unwrap_or(d.v4),
                    beta_v: r.f64_opt("model", "beta_v")?.unwrap_or(d.beta_v),
                    beta_w: r.f64_opt("model", "beta_w")?.unwrap_or(d.beta_w),
                    i0: r.f64_opt("model", "i0")?.unwrap_or(d.i0),
                })
            }
            "chemostat" => {
                let d = ChemostatParams::default();
                ModelSpec::Chemostat(ChemostatParams {
                    eta_i: r.f64_opt("model", "eta_i")?.unwrap_or(d.eta_i),
                    rho: r.f64_opt("model", "rho")?.unwrap_or(d.rho),
                    chi: r.f64_opt("model", "chi")?.unwrap_or(d.chi),
                    kappa: r.f64_opt("model", "kappa")?.unwrap_or(d.kappa),
                    sigma1: r.f64_opt("model", "sigma1")?.unwrap_or(d.sigma1),
                    sigma2: r.f64_opt("model", "sigma2")?.unwrap_or(d.sigma2),
                })
            }
            "ou" => {
                let d = OuParams::default();
                ModelSpec::Ou(OuParams {
                    beta: r.f64_opt("model", "beta")?.unwrap_or(d.beta),
                    sigma: r.f64_opt("model", "sigma")?.unwrap_or(d.sigma),
                })
            }
            other => bail!(
                "unknown model `{other}` (expected double_well, morris_lecar, chemostat, or ou)"
            ),
        };
        let dim = model.model().dim();

        let lo = r.list_f64("grid", "lo")?;
        let hi = r.list_f64("grid", "hi")?;
        let n = r.list_usize("grid", "n")?;
        if lo.len() != dim || hi.len() != dim || n.len() != dim {
            bail!("[grid] lo/hi/n must each have {dim} entries for model `{name}`");
        }
        let axes = (0..dim)
            .map(|d| AxisSpec { lo: lo[d], hi: hi[d], n: n[d] })
            .collect();
        let grid = Grid::new(axes).map_err(|e| anyhow!("[grid]: {e}"))?;
        let dt_h = r.f64("grid", "dt_h")?;
        let skip_factors = r.list_usize_opt("grid", "r")?;
        if let Some(rf) = &skip_factors {
            if rf.len() != dim {
                bail!("[grid] r must have {dim} entries");
            }
        }

        let controls = ControlSet::new(r.list_f64("control", "values")?)
            .map_err(|e| anyhow!("[control]: {e}"))?;
        let prior = PriorGrid::uniform(
            r.f64("prior", "lo")?,
            r.f64("prior", "hi")?,
            r.usize("prior", "n")?,
        )
        .map_err(|e| anyhow!("[prior]: {e}"))?;

        let observation = if r.has_section("observation") {
            let mode = r.string("observation", "mode")?;
            match mode.as_str() {
                "full" => ObservationRegime::Full,
                "partial" => {
                    let h = r.list_f64("observation", "h")?;
                    if h.is_empty() || h.len() % dim != 0 {
                        bail!("[observation] h must be rows x {dim} values, row-major");
                    }
                    let rows = h.len() / dim;
                    let r_diag = r.list_f64("observation", "r")?;
                    let period = r.f64("observation", "period")?;
                    ObservationRegime::Partial(
                        ObservationModel::new(h, rows, r_diag, period)
                            .map_err(|e| anyhow!("[observation]: {e}"))?,
                    )
                }
                other => bail!("[observation] mode must be `full` or `partial`, got `{other}`"),
            }
        } else {
            ObservationRegime::Full
        };

        let (n_particles, control_theta) = if r.has_section("filter") {
            (
                r.usize_opt("filter", "particles")?.unwrap_or(1000),
                r.f64_opt("filter", "control_theta")?,
            )
        } else {
            (1000, None)
        };

        let true_theta = r
            .f64_opt("experiment", "true_theta")?
            .unwrap_or_else(|| model.nominal_theta());
        let x0 = r.list_f64("experiment", "x0")?;
        if x0.len() != dim {
            bail!("[experiment] x0 must have {dim} entries");
        }
        let dt = r.f64("experiment", "dt")?;
        let horizon = r.f64("experiment", "horizon")?;
        let trials = r.usize("experiment", "trials")?;
        let seed = r.u64("experiment", "seed")?;
        if dt <= 0.0 || horizon <= 0.0 {
            bail!("[experiment] dt and horizon must be positive");
        }

        r.finish()?;
        Ok(Self {
            model,
            grid,
            dt_h,
            skip_factors,
            controls,
            prior,
            observation,
            n_particles,
            control_theta,
            true_theta,
            x0,
            dt,
            horizon,
            trials,
            seed,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Discretization parameters, with automatic skip factors unless the
    /// config pins them.
    pub fn mca_config(&self) -> Result<MCAConfig> {
        match &self.skip_factors {
            Some(rf) => MCAConfig::new(self.dt_h, rf.clone()).map_err(|e| anyhow!("{e}")),
            None => MCAConfig::auto(self.model.model(), &self.grid, self.dt_h)
                .map_err(|e| anyhow!("{e}")),
        }
    }

    pub fn experiment_config(&self, control: ControlMode) -> ExperimentConfig {
        ExperimentConfig {
            true_theta: self.true_theta,
            prior: self.prior.clone(),
            control,
            regime: self.observation.clone(),
            dt: self.dt,
            horizon: self.horizon,
            n_particles: self.n_particles,
            n_trials: self.trials,
            base_seed: self.seed,
            x0: self.x0.clone(),
            control_theta: self.control_theta,
            retain_paths: false,
        }
    }
}

/// Canonical annotated config for each model (printed by
/// `oed config --dump-defaults`).
pub fn default_config(model: &str) -> Result<String> {
    let text = match model {
        "double_well" => DOUBLE_WELL_DEFAULT,
        "morris_lecar" => MORRIS_LECAR_DEFAULT,
        "chemostat" => CHEMOSTAT_DEFAULT,
        "ou" => OU_DEFAULT,
        other => bail!("unknown model `{other}`"),
    };
    Ok(text.to_string())
}

pub const MODEL_NAMES: [&str; 4] = ["double_well", "morris_lecar", "chemostat", "ou"];

const DOUBLE_WELL_DEFAULT: &str = "\
# Particle in a double-well potential; estimates the barrier height.
# Units: dimensionless state, time in natural units.

[model]
name = double_well
a = 3.84          # nominal barrier height (the estimand)
w = 0.3           # bump width
sigma = 0.1       # noise intensity

[grid]
lo = -5
hi = 5
n = 100
dt_h = 0.01       # policy time step
# r = 1           # skip factors; omitted = automatic

[control]
values = 0, 2, -2, 4, -4, 6, -6, 8, -8, 10, -10

[prior]
lo = 2
hi = 5
n = 10

[observation]
mode = partial    # `full` = noiseless full-state observation at every step
h = 1
r = 0.0025        # observation noise variance (sd 0.05)
period = 0.25

[filter]
particles = 10000

[experiment]
true_theta = 3.84
x0 = -1
dt = 0.01
horizon = 30
trials = 128
seed = 20260809
";

const MORRIS_LECAR_DEFAULT: &str = "\
# Morris-Lecar neuron; estimates the calcium conductance g_ca.
# Units: mV, ms, pA; control u = I / C_m.

[model]
name = morris_lecar
c_m = 20.0
g_k = 8.0
g_ca = 4.41498308  # nominal calcium conductance (the estimand)
g_leak = 2.0
phi = 0.04
v_k = -84.0
v_leak = -60.0
v_ca = 120.0
v1 = -1.2
v2 = 18.0
v3 = 2.0
v4 = 30.0
beta_v = 1.0       # voltage noise (mV / sqrt(ms), on dv)
beta_w = 0.1       # channel noise scale
i0 = 95.0          # baseline current from the reference table (unused)

[grid]
lo = -80, 0
hi = 80, 1
n = 73, 73
dt_h = 2
# r = 1, 3         # omitted = automatic

[control]
values = 0, 3.5, 5   # injected currents 0, 70, 100 pA over C_m = 20

[prior]
lo = 4
hi = 5
n = 10

[observation]
mode = partial     # voltage observed every step, gating variable latent
h = 1, 0
r = 0.25           # observation noise variance (sd 0.5 mV)
period = 0.25

[filter]
particles = 500

[experiment]
true_theta = 4.41498308
x0 = -61, 0.0147   # quiescent state at zero input
dt = 0.25
horizon = 1000
trials = 128
seed = 20260809
";

const CHEMOSTAT_DEFAULT: &str = "\
# Chemostat algal-growth system on log coordinates (C*, N*); estimates the
# half-saturation constant kappa. Units: days; control = dilution rate.

[model]
name = chemostat
eta_i = 160.0
rho = 270.0
chi = 0.0027
kappa = 4.4        # nominal half-saturation (the estimand)
sigma1 = 0.1       # log-scale noise on N*
sigma2 = 0.1       # log-scale noise on C*

[grid]
lo = -6, -2
hi = 1, 6
n = 71, 81
dt_h = 0.05
# r = 1, 1         # omitted = automatic

[control]
values = 0.1, 0.3, 0.5, 0.68   # dilution rates below wash-out

[prior]
lo = 3.5
hi = 5.5
n = 10

[observation]
mode = full        # switch to `partial` for infrequent noisy sampling:
# mode = partial
# h = 1, 0, 0, 1   # observe (C*, N*); use `1, 0` for C*-only
# r = 0.000625, 0.000625
# period = 0.5

[filter]
particles = 1000

[experiment]
true_theta = 4.4
x0 = -4, 2
dt = 0.01
horizon = 30
trials = 128
seed = 20260809
";

const OU_DEFAULT: &str = "\
# Ornstein-Uhlenbeck validation model; estimates the mean-reversion rate.

[model]
name = ou
beta = 1.0         # nominal mean-reversion rate (the estimand)
sigma = 0.5

[grid]
lo = -4
hi = 4
n = 81
dt_h = 0.01

[control]
values = 0, 1, -1

[prior]
lo = 0.5
hi = 2
n = 10

[observation]
mode = full

[filter]
particles = 1000

[experiment]
true_theta = 1.0
x0 = 1
dt = 0.01
horizon = 10
trials = 64
seed = 20260809
";
