//! Experiment configuration: the TOML file format and how CLI flags merge into it.
//!
//! Precedence is flag > file > built-in default. The output directory falls
//! back to `$SWITCHPDMP_OUT` before the built-in default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use switchpdmp::integrate::{IntegratorConfig, Method};
use switchpdmp::BracketKind;

use crate::Failure;

pub const OUT_ENV: &str = "SWITCHPDMP_OUT";
pub const DEFAULT_OUT: &str = "switchpdmp-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    #[default]
    Simulate,
    Lyapunov,
    Classify2d,
    CheckTriangular,
    Occupation,
    Extinction,
    Bracket,
    Sweep,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Lyapunov => "lyapunov",
            CommandKind::Classify2d => "classify2d",
            CommandKind::CheckTriangular => "check-triangular",
            CommandKind::Occupation => "occupation",
            CommandKind::Extinction => "extinction",
            CommandKind::Bracket => "bracket",
            CommandKind::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Block {
    #[default]
    Full,
    B,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    #[default]
    NormGrowth,
    ThetaAverage,
    /// Multi-start minimum of theta averages.
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormChoice {
    #[default]
    Full,
    /// The first `n` coordinates of the split.
    Transverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodFlag {
    Rk4Fixed,
    DormandPrinceAdaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub horizon: f64,
    pub sample_dt: f64,
    pub seed: u64,
    /// Model default when absent.
    pub init_state: Option<Vec<f64>>,
    /// 1-based.
    pub init_mode: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig { horizon: 1000.0, sample_dt: 0.01, seed: 0, init_state: None, init_mode: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    pub block: Block,
    pub estimator: Estimator,
    pub starts: usize,
    pub theta0: Option<Vec<f64>>,
    /// Transverse block size; the model's split when absent.
    pub split_n: Option<usize>,
    /// Run on the invariant face, or add the face check to check-triangular.
    pub face: bool,
    pub bins: usize,
    /// Defaults to a tenth of the horizon for occupation and half of it for
    /// extinction fits.
    pub burn_in: Option<f64>,
    pub delta: f64,
    pub epsilon: f64,
    pub component: NormChoice,
    pub target: Option<f64>,
    pub point: Option<Vec<f64>>,
    pub kind: BracketKind,
    pub depth: usize,
    pub b: Option<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    pub d: Option<Vec<f64>>,
    pub q: Option<Vec<Vec<f64>>>,
    pub sweep_param: Option<String>,
    pub sweep_values: Vec<f64>,
    pub sweep_command: CommandKind,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            block: Block::Full,
            estimator: Estimator::NormGrowth,
            starts: switchpdmp::lyapunov::DEFAULT_STARTS,
            theta0: None,
            split_n: None,
            face: false,
            bins: switchpdmp::persistence::DEFAULT_BINS,
            burn_in: None,
            delta: 0.05,
            epsilon: 0.05,
            component: NormChoice::Full,
            target: None,
            point: None,
            kind: BracketKind::Strong,
            depth: 3,
            b: None,
            c: None,
            d: None,
            q: None,
            sweep_param: None,
            sweep_values: Vec::new(),
            sweep_command: CommandKind::Extinction,
        }
    }
}

/// Everything a run depends on. Serialized verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    pub model: String,
    pub overrides: BTreeMap<String, String>,
    pub plan: PlanConfig,
    pub integrator: IntegratorConfig,
    pub output_dir: Option<PathBuf>,
    pub replicates: usize,
    pub options: Options,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: CommandKind::Simulate,
            model: "lorenz-switch".into(),
            overrides: BTreeMap::new(),
            plan: PlanConfig::default(),
            integrator: IntegratorConfig::default(),
            output_dir: None,
            replicates: 20,
            options: Options::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(src: &str) -> Result<Self, Failure> {
        toml::from_str(src).map_err(|e| Failure::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&src)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Output directory after the environment fallback.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

fn list(s: &str) -> Result<List, String> {
    s.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number"))).collect()
}

fn matrix(s: &str) -> Result<Matrix, String> {
    serde_json::from_str(s).map_err(|e| format!("expected a nested list like [[-1,1],[1,-1]]: {e}"))
}

fn key_value(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

// Aliases keep clap from reading these as repeated flags.
type List = Vec<f64>;
type Matrix = Vec<Vec<f64>>;

/// Flags shared by every experiment command. Unset flags leave the file or
/// default value in place.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Registered model name or path to a linear system file.
    #[arg(long)]
    pub model: Option<String>,
    /// Model parameter override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = key_value)]
    pub set: Vec<(String, String)>,
    /// Simulation horizon.
    #[arg(long = "T", visible_alias = "horizon")]
    pub horizon: Option<f64>,
    /// Output sampling interval.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial state, comma separated.
    #[arg(long, value_parser = list, allow_hyphen_values = true)]
    pub init: Option<List>,
    /// Initial mode, 1-based.
    #[arg(long)]
    pub init_mode: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,

    #[arg(long, value_enum, help_heading = "Integrator")]
    pub method: Option<MethodFlag>,
    #[arg(long, help_heading = "Integrator")]
    pub step: Option<f64>,
    #[arg(long, help_heading = "Integrator")]
    pub abs_tol: Option<f64>,
    #[arg(long, help_heading = "Integrator")]
    pub rel_tol: Option<f64>,
    #[arg(long, help_heading = "Integrator")]
    pub renorm_period: Option<f64>,

    #[arg(long, value_enum, help_heading = "Exponents")]
    pub block: Option<Block>,
    #[arg(long, value_enum, help_heading = "Exponents")]
    pub estimator: Option<Estimator>,
    #[arg(long, help_heading = "Exponents")]
    pub starts: Option<usize>,
    #[arg(long, value_parser = list, allow_hyphen_values = true, help_heading = "Exponents")]
    pub theta0: Option<List>,
    /// Transverse block size.
    #[arg(long = "n", help_heading = "Exponents")]
    pub split_n: Option<usize>,
    /// Simulate on the invariant face (check-triangular: add the face check).
    #[arg(long, help_heading = "Exponents")]
    pub face: bool,

    #[arg(long, help_heading = "Diagnostics")]
    pub bins: Option<usize>,
    #[arg(long, help_heading = "Diagnostics")]
    pub burn_in: Option<f64>,
    #[arg(long, help_heading = "Diagnostics")]
    pub delta: Option<f64>,
    #[arg(long, help_heading = "Diagnostics")]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum, help_heading = "Diagnostics")]
    pub component: Option<NormChoice>,
    #[arg(long, allow_hyphen_values = true, help_heading = "Diagnostics")]
    pub target: Option<f64>,
    #[arg(long, value_parser = list, allow_hyphen_values = true, help_heading = "Brackets")]
    pub point: Option<List>,
    #[arg(long, value_enum, help_heading = "Brackets")]
    pub kind: Option<KindFlag>,
    #[arg(long, help_heading = "Brackets")]
    pub depth: Option<usize>,

    #[arg(long, value_parser = list, allow_hyphen_values = true, help_heading = "Classifier")]
    pub b: Option<List>,
    #[arg(long, value_parser = list, allow_hyphen_values = true, help_heading = "Classifier")]
    pub c: Option<List>,
    #[arg(long, value_parser = list, allow_hyphen_values = true, help_heading = "Classifier")]
    pub d: Option<List>,
    /// Rate matrix as a nested list.
    #[arg(long, value_parser = matrix, allow_hyphen_values = true, help_heading = "Classifier")]
    pub q: Option<Matrix>,

    /// Parameter swept by `sweep`.
    #[arg(long, help_heading = "Sweep")]
    pub param: Option<String>,
    #[arg(long, value_parser = list, allow_hyphen_values = true, help_heading = "Sweep")]
    pub values: Option<List>,
    /// Command run at each grid point.
    #[arg(long = "sub", value_enum, help_heading = "Sweep")]
    pub sub: Option<CommandKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindFlag {
    Weak,
    Strong,
}

impl RunArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(self.model => cfg.model);
        for (k, v) in &self.set {
            cfg.overrides.insert(k.clone(), v.clone());
        }
        set!(self.horizon => cfg.plan.horizon);
        set!(self.dt => cfg.plan.sample_dt);
        set!(self.seed => cfg.plan.seed);
        if self.init.is_some() {
            cfg.plan.init_state = self.init.clone();
        }
        set!(self.init_mode => cfg.plan.init_mode);
        set!(self.replicates => cfg.replicates);

        match self.method {
            Some(MethodFlag::Rk4Fixed) => cfg.integrator.method = Method::Rk4Fixed { step: 1e-3 },
            Some(MethodFlag::DormandPrinceAdaptive) => {
                cfg.integrator.method = Method::DormandPrinceAdaptive { abs_tol: 1e-9, rel_tol: 1e-9 }
            }
            None => {}
        }
        match &mut cfg.integrator.method {
            Method::Rk4Fixed { step } => set!(self.step => *step),
            Method::DormandPrinceAdaptive { abs_tol, rel_tol } => {
                set!(self.abs_tol => *abs_tol);
                set!(self.rel_tol => *rel_tol);
            }
        }
        set!(self.renorm_period => cfg.integrator.renorm_period);

        let o = &mut cfg.options;
        set!(self.block => o.block);
        set!(self.estimator => o.estimator);
        set!(self.starts => o.starts);
        if self.theta0.is_some() {
            o.theta0 = self.theta0.clone();
        }
        if self.split_n.is_some() {
            o.split_n = self.split_n;
        }
        if self.face {
            o.face = true;
        }
        set!(self.bins => o.bins);
        if self.burn_in.is_some() {
            o.burn_in = self.burn_in;
        }
        set!(self.delta => o.delta);
        set!(self.epsilon => o.epsilon);
        set!(self.component => o.component);
        if self.target.is_some() {
            o.target = self.target;
        }
        if self.point.is_some() {
            o.point = self.point.clone();
        }
        if let Some(k) = self.kind {
            o.kind = match k {
                KindFlag::Weak => BracketKind::Weak,
                KindFlag::Strong => BracketKind::Strong,
            };
        }
        set!(self.depth => o.depth);
        for (src, dst) in [(&self.b, &mut o.b), (&self.c, &mut o.c), (&self.d, &mut o.d)] {
            if src.is_some() {
                *dst = src.clone();
            }
        }
        if self.q.is_some() {
            o.q = self.q.clone();
        }
        if self.param.is_some() {
            o.sweep_param = self.param.clone();
        }
        set!(self.values => o.sweep_values);
        set!(self.sub => o.sweep_command);
    }
}
