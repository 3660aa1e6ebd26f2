//! Command pipelines. Each returns a one-line [`Summary`] and, given an
//! output directory, writes its artifacts there.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};
use switchpdmp::jump::replicate_seed;
use switchpdmp::lyapunov::{random_unit_vector, LowerExponentEstimate};
use switchpdmp::models::{lorenz_bounds_report, sirs_r0, Model};
use switchpdmp::persistence::{time_fraction, NormComponent};
use switchpdmp::trajectory::fmt_f64;
use switchpdmp::{
    bracket_rank, build_model, check_face_absorption, check_triangular_max, classify_2d_triangular,
    estimate_growth_via_theta, estimate_lower_exponent, estimate_top_exponent, extinction_rate, first_exit,
    linearize_at_origin, occupation_measure, simulate_on_face, simulate_pdmp, stationary_distribution, block_decompose,
    EnsembleSpec, GridSpec, LinearSwitchedSystem, RateMatrix, SimulationPlan, SwitchedSystem, Trajectory,
};

use crate::config::{Block, CommandKind, Estimator, ExperimentConfig, NormChoice};
use crate::Failure;

/// Scalar outcome of a run, also the row content of a sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    pub pass: Option<bool>,
    pub outputs: Vec<String>,
}

struct Sink<'a> {
    dir: Option<&'a Path>,
    written: Vec<String>,
}

impl Sink<'_> {
    fn file(&mut self, name: &str, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), Failure> {
        let Some(dir) = self.dir else { return Ok(()) };
        let path = dir.join(name);
        let io = |e: std::io::Error| Failure::Validation(format!("cannot write {}: {e}", path.display()));
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        write(&mut w).map_err(io)?;
        w.flush().map_err(io)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(value).expect("reports serialize");
        self.file(name, |w| writeln!(w, "{text}"))
    }
}

fn model_of(cfg: &ExperimentConfig) -> Result<Model, Failure> {
    Ok(build_model(&cfg.model, &cfg.overrides)?)
}

fn ensemble(cfg: &ExperimentConfig) -> EnsembleSpec {
    EnsembleSpec::new(cfg.plan.horizon, cfg.replicates, cfg.plan.seed)
}

fn default_init(model: &Model) -> Vec<f64> {
    match model {
        Model::Lorenz(_) => vec![0.0, 0.05, 0.05],
        Model::Sirs(s) => {
            let cap = s.params().capacity();
            s.params().from_original([0.5 * cap, 0.25 * cap, 0.1 * cap]).to_vec()
        }
        Model::Linear(l) => vec![1.0 / (l.k() as f64).sqrt(); l.k()],
    }
}

fn split_n(cfg: &ExperimentConfig, sys: &dyn SwitchedSystem) -> Result<usize, Failure> {
    cfg.options
        .split_n
        .or_else(|| sys.split().map(|s| s.n))
        .ok_or_else(|| Failure::Validation("the model declares no split; pass --n".into()))
}

fn plan_of(cfg: &ExperimentConfig, model: &Model) -> Result<SimulationPlan, Failure> {
    let sys = model.system();
    let mut init = cfg.plan.init_state.clone().unwrap_or_else(|| default_init(model));
    if cfg.options.face && cfg.plan.init_state.is_none() {
        let n = split_n(cfg, sys)?;
        let n = n.min(init.len());
        init[..n].fill(0.0);
    }
    if cfg.plan.init_mode == 0 {
        return Err(Failure::Validation("init_mode is 1-based".into()));
    }
    let plan = SimulationPlan {
        horizon: cfg.plan.horizon,
        sample_dt: cfg.plan.sample_dt,
        seed: cfg.plan.seed,
        init_state: init,
        init_mode: cfg.plan.init_mode - 1,
    };
    plan.validate(sys)?;
    Ok(plan)
}

fn simulate(cfg: &ExperimentConfig, model: &Model) -> Result<Trajectory, Failure> {
    let plan = plan_of(cfg, model)?;
    let traj = if cfg.options.face {
        simulate_on_face(model.system(), &plan, &cfg.integrator)?
    } else {
        simulate_pdmp(model.system(), &plan, &cfg.integrator)?
    };
    Ok(traj)
}

/// The linearization, or one of its diagonal blocks.
fn linear_target(cfg: &ExperimentConfig, model: &Model, block: Block) -> Result<LinearSwitchedSystem, Failure> {
    let lin = linearize_at_origin(model.system())?;
    if block == Block::Full {
        return Ok(lin);
    }
    let n = split_n(cfg, model.system())?;
    let dec = block_decompose(&lin, n, true)?;
    let mats = if block == Block::B { dec.b } else { dec.d };
    Ok(lin.with_matrices(mats)?)
}

fn model_report(model: &Model) -> Result<Value, Failure> {
    Ok(match model {
        Model::Lorenz(l) => json!({ "lorenz_bounds": lorenz_bounds_report(l.params())? }),
        Model::Sirs(s) => json!({ "r0": sirs_r0(s.params())? }),
        Model::Linear(_) => Value::Null,
    })
}

fn start_direction(cfg: &ExperimentConfig, k: usize) -> Result<Vec<f64>, Failure> {
    match &cfg.options.theta0 {
        Some(v) => {
            if v.len() != k {
                return Err(Failure::Validation(format!("theta0 needs {k} entries")));
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Failure::Validation("theta0 must be non-zero".into()));
            }
            Ok(v.iter().map(|x| x / norm).collect())
        }
        None => Ok(random_unit_vector(k, cfg.plan.seed)),
    }
}

pub fn execute(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<Summary, Failure> {
    cfg.integrator.validate()?;
    let mut sink = Sink { dir, written: Vec::new() };
    let mut summary = match cfg.command {
        CommandKind::Simulate => cmd_simulate(cfg, &mut sink)?,
        CommandKind::Lyapunov => cmd_lyapunov(cfg, &mut sink)?,
        CommandKind::Classify2d => cmd_classify(cfg, &mut sink)?,
        CommandKind::CheckTriangular => cmd_triangular(cfg, &mut sink)?,
        CommandKind::Occupation => cmd_occupation(cfg, &mut sink)?,
        CommandKind::Extinction => cmd_extinction(cfg, &mut sink)?,
        CommandKind::Bracket => cmd_bracket(cfg, &mut sink)?,
        CommandKind::Sweep => cmd_sweep(cfg, &mut sink)?,
    };
    summary.outputs = sink.written;
    Ok(summary)
}

fn cmd_simulate(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Summary, Failure> {
    let model = model_of(cfg)?;
    let traj = simulate(cfg, &model)?;
    sink.file("trajectory.csv", |w| traj.write_csv(w))?;
    sink.file("events.csv", |w| traj.write_events_csv(w))?;
    Ok(Summary::default())
}

fn cmd_lyapunov(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Summary, Failure> {
    let model = model_of(cfg)?;
    let lin = linear_target(cfg, &model, cfg.options.block)?;
    let spec = ensemble(cfg);
    let p = stationary_distribution(lin.q())?;
    let theta0 = start_direction(cfg, lin.k())?;
    let (value, se, estimate) = match cfg.options.estimator {
        Estimator::NormGrowth => {
            let e = estimate_top_exponent(&lin, &theta0, &spec)?;
            (e.value, e.std_error, serde_json::to_value(&e).unwrap())
        }
        Estimator::ThetaAverage => {
            let e = estimate_growth_via_theta(&lin, &theta0, &spec, &cfg.integrator)?;
            (e.value, e.std_error, serde_json::to_value(&e).unwrap())
        }
        Estimator::Lower => {
            let extra: Vec<Vec<f64>> = cfg.options.theta0.as_ref().map(|_| theta0.clone()).into_iter().collect();
            let e: LowerExponentEstimate =
                estimate_lower_exponent(&lin, cfg.options.starts, &extra, &spec, &cfg.integrator)?;
            (e.value, e.std_error, serde_json::to_value(&e).unwrap())
        }
    };
    sink.json(
        "lyapunov.json",
        &json!({
            "model": cfg.model,
            "block": cfg.options.block,
            "estimator": cfg.options.estimator,
            "k": lin.k(),
            "p": p,
            "seed": cfg.plan.seed,
            "estimate": estimate,
            "model_report": model_report(&model)?,
        }),
    )?;
    Ok(Summary { estimate: Some(value), std_error: Some(se), ..Default::default() })
}

fn cmd_classify(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Summary, Failure> {
    let o = &cfg.options;
    let need = |v: &Option<Vec<f64>>, name: &str| {
        v.clone().ok_or_else(|| Failure::Validation(format!("classify2d needs --{name}")))
    };
    let (b, c, d) = (need(&o.b, "b")?, need(&o.c, "c")?, need(&o.d, "d")?);
    let n = b.len();
    let q = match &o.q {
        Some(rows) => RateMatrix::from_rows(rows)?,
        None => RateMatrix::new(DMatrix::from_fn(n, n, |i, j| if i == j { -(n as f64 - 1.0) } else { 1.0 }))?,
    };
    if q.size() != n || c.len() != n || d.len() != n {
        return Err(Failure::Validation("b, c, d and q must agree on the number of modes".into()));
    }
    if !q.is_irreducible() {
        return Err(switchpdmp::Error::Reducible.into());
    }
    let p = stationary_distribution(&q)?;
    let verdict = classify_2d_triangular(&b, &c, &d, &p)?;
    sink.json("classify2d.json", &json!({ "b": b, "c": c, "d": d, "q": q.rows(), "p": p, "verdict": verdict }))?;
    Ok(Summary { estimate: Some(verdict.lambda_plus), ..Default::default() })
}

fn cmd_triangular(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Summary, Failure> {
    let model = model_of(cfg)?;
    let lin = linearize_at_origin(model.system())?;
    let n = split_n(cfg, model.system())?;
    let spec = ensemble(cfg);
    let report = check_triangular_max(&lin, n, &spec)?;
    let mut pass = report.pass;
    let face = if cfg.options.face {
        let theta0 = start_direction(cfg, lin.k())?;
        let f = check_face_absorption(&lin, n, &theta0, &spec, &cfg.integrator)?;
        pass &= f.pass;
        serde_json::to_value(&f).unwrap()
    } else {
        Value::Null
    };
    sink.json(
        "check-triangular.json",
        &json!({ "model": cfg.model, "seed": cfg.plan.seed, "triangular_max": report, "face_absorption": face, "pass": pass }),
    )?;
    Ok(Summary {
        estimate: Some(report.full.value),
        std_error: Some(report.full.std_error),
        pass: Some(pass),
        ..Default::default()
    })
}

fn transverse_norm(x: &[f64], n: usize) -> f64 {
    x[..n].iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn cmd_occupation(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Summary, Failure> {
    let model = model_of(cfg)?;
    let sys = model.system();
    let n = split_n(cfg, sys)?;
    let region = sys
        .bounding_box()
        .ok_or_else(|| Failure::Validation("the model declares no bounding region".into()))?;
    let grid = GridSpec::new(region, cfg.options.bins, sys.modes())?;
    let traj = simulate(cfg, &model)?;
    let burn_in = cfg.options.burn_in.unwrap_or(0.1 * cfg.plan.horizon);
    let hist = occupation_measure(&traj, &grid, burn_in)?;
    let delta = cfg.options.delta;
    let near = time_fraction(&traj, burn_in, 4, |x, _| transverse_norm(x, n) < delta)?;
    let pass = near <= cfg.options.epsilon;
    sink.file("occupation.csv", |w| hist.write_csv(w))?;
    sink.json(
        "occupation.json",
        &json!({
            "model": cfg.model,
            "seed": cfg.plan.seed,
            "horizon": cfg.plan.horizon,
            "burn_in": burn_in,
            "bins": cfg.options.bins,
            "total_mass": hist.total(),
            "overflow_mass": hist.overflow_total(),
            "mode_marginal": hist.mode_marginal(),
            "delta": delta,
            "epsilon": cfg.options.epsilon,
            "near_face_mass": near,
            "pass": pass,
        }),
    )?;
    Ok(Summary { estimate: Some(near), pass: Some(pass), ..Default::default() })
}

fn cmd_extinction(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Summary, Failure> {
    let model = model_of(cfg)?;
    let sys = model.system();
    let traj = simulate(cfg, &model)?;
    let component = match cfg.options.component {
        NormChoice::Full => NormComponent::Full,
        NormChoice::Transverse => NormComponent::FirstN(split_n(cfg, sys)?),
    };
    let (target, source) = match cfg.options.target {
        Some(t) => (t, "given"),
        None => {
            let block = if cfg.options.face { Block::D } else { Block::Full };
            let lin = linear_target(cfg, &model, block)?;
            let y0 = random_unit_vector(lin.k(), cfg.plan.seed);
            (estimate_top_exponent(&lin, &y0, &ensemble(cfg))?.value, "estimated-top-exponent")
        }
    };
    let burn_in = cfg.options.burn_in.unwrap_or(0.5 * cfg.plan.horizon);
    let report = extinction_rate(&traj, component, burn_in, target)?;
    let exit = sys.split().map(|s| first_exit(&traj, s.n, cfg.options.epsilon));
    sink.json(
        "extinction.json",
        &json!({
            "model": cfg.model,
            "seed": cfg.plan.seed,
            "component": cfg.options.component,
            "target_source": source,
            "report": report,
            "epsilon": cfg.options.epsilon,
            "first_exit": exit.flatten(),
        }),
    )?;
    Ok(Summary { estimate: Some(report.slope), pass: Some(report.pass), ..Default::default() })
}

fn cmd_bracket(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Summary, Failure> {
    let model = model_of(cfg)?;
    let point = cfg.options.point.clone().ok_or_else(|| Failure::Validation("bracket needs --point".into()))?;
    let rank = bracket_rank(model.system(), &point, cfg.options.kind, cfg.options.depth)?;
    let pass = rank.is_full();
    sink.json(
        "bracket.json",
        &json!({ "model": cfg.model, "point": point, "kind": cfg.options.kind, "depth": cfg.options.depth, "result": rank, "pass": pass }),
    )?;
    Ok(Summary { estimate: Some(rank.rank as f64), pass: Some(pass), ..Default::default() })
}

fn cmd_sweep(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Summary, Failure> {
    let o = &cfg.options;
    let param = o.sweep_param.clone().ok_or_else(|| Failure::Validation("sweep needs --param".into()))?;
    if o.sweep_values.is_empty() {
        return Err(Failure::Validation("sweep grid is empty".into()));
    }
    if o.sweep_command == CommandKind::Sweep {
        return Err(Failure::Validation("sweeps do not nest".into()));
    }
    let mut rows = Vec::with_capacity(o.sweep_values.len());
    for (i, v) in o.sweep_values.iter().enumerate() {
        let mut point = cfg.clone();
        point.command = o.sweep_command;
        point.overrides.insert(param.clone(), format!("{v:?}"));
        point.plan.seed = replicate_seed(cfg.plan.seed, i as u64);
        let r0 = match (cfg.model.as_str(), model_of(&point)) {
            ("sirs", Ok(Model::Sirs(s))) => sirs_r0(s.params()).ok().map(|r| r.r0),
            _ => None,
        };
        let row = match execute(&point, None) {
            Ok(s) => (s, String::new()),
            Err(e) => (Summary::default(), e.to_string()),
        };
        rows.push((*v, point.plan.seed, r0, row));
    }
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    sink.file("sweep.csv", |w| {
        writeln!(w, "index,{param},seed,r0,estimate,std_error,pass,error")?;
        for (i, (v, seed, r0, (s, err))) in rows.iter().enumerate() {
            let pass = s.pass.map(|p| p.to_string()).unwrap_or_default();
            let err = err.replace([',', '\n'], ";");
            writeln!(
                w,
                "{i},{},{seed},{},{},{},{pass},{err}",
                fmt_f64(*v),
                opt(*r0),
                opt(s.estimate),
                opt(s.std_error)
            )?;
        }
        Ok(())
    })?;
    Ok(Summary::default())
}
