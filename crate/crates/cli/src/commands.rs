use std::fs::File;
use std::io::{self, BufWriter, Write};

use lapse_urn::export::{write_exact_csv, write_rational_csv, write_samples_csv, write_trajectory_csv};
use lapse_urn::limits::limit_report;
use lapse_urn::montecarlo::{
    calibrate_kappa, lapse_statistics, run_ensemble, verify_clt, verify_fclt, verify_lln, Centering,
    KappaFlag, KappaSource,
};
use lapse_urn::oracle::{exact_distribution_capped, exact_distribution_rational};
use lapse_urn::spectral::{critical_p, regime, RegimeTag};
use lapse_urn::urn::{extract_lapses, simulate, LapseRecord, UrnState, StepRecord};
use lapse_urn::{
    EnsembleConfig, EnsembleStats, LimitReport, Model, ModelParams, Preset, Probability, ReplacementMatrix,
    UrnError,
};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::args::*;

#[derive(Debug, Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Urn(#[from] UrnError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Urn(e) => match e {
                UrnError::Validation(_)
                | UrnError::Domain(_)
                | UrnError::CapExceeded { .. }
                | UrnError::UnknownPreset(_) => 2,
                UrnError::Regime(_) | UrnError::DegenerateNormalization => 3,
                _ => 1,
            },
            Failure::Io(_) => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// `Ok(false)` means a statistical check failed; the report is still written.
pub fn run(command: Command) -> Result<bool, Failure> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Exact(a) => cmd_exact(&a),
        Command::Limits(a) => cmd_limits(&a),
        Command::Phase(a) => cmd_phase(&a),
        Command::Verify(v) => match *v {
            VerifyCommand::Lln(a) => cmd_verify_lln(&a),
            VerifyCommand::Clt(a) => cmd_verify_clt(&a),
            VerifyCommand::Fclt(a) => cmd_verify_fclt(&a),
            VerifyCommand::Lapses(a) => cmd_verify_lapses(&a),
            VerifyCommand::Calibrate(a) => cmd_verify_calibrate(&a),
        },
    }
}

// ---- plumbing ---------------------------------------------------------------

fn matrix(m: &MatrixArgs) -> Result<ReplacementMatrix, Failure> {
    match (&m.preset, m.a, m.b, m.c, m.d) {
        (Some(name), ..) => {
            let preset = Preset::from_name(name, m.k)?;
            if let Some(k) = m.k {
                if preset != Preset::Pure(k) {
                    return Err(usage(format!("--K {k} does not apply to preset {preset}")));
                }
            }
            Ok(preset.matrix())
        }
        (None, Some(a), Some(b), Some(c), Some(d)) => {
            if m.k.is_some() {
                return Err(usage("--K only applies to the pure preset"));
            }
            Ok(ReplacementMatrix::new(a, b, c, d))
        }
        _ => Err(usage("give either --preset or all of --a --b --c --d")),
    }
}

fn model(m: &ModelArgs) -> Result<Model, Failure> {
    let matrix = matrix(&m.matrix)?;
    let p = m.p.ok_or_else(|| usage("--p is required"))?;
    let theta = m.theta.ok_or_else(|| usage("--theta is required"))?;
    Ok(Model::new(ModelParams::new(matrix, p, theta, m.r0, m.b0))?)
}

fn sink(out: &OutputArgs) -> Result<Box<dyn Write>, Failure> {
    Ok(match &out.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn format(out: &OutputArgs, default: Format, allowed: &[Format]) -> Result<Format, Failure> {
    let f = out.format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(usage(format!("this command does not write {f:?} output")))
    }
}

fn write_json<T: Serialize>(out: &OutputArgs, value: &T) -> Result<(), Failure> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn execution(w: &WorkerArgs) -> Result<lapse_urn::Execution, Failure> {
    w.execution().map_err(Failure::Usage)
}

fn require_regime(report: &LimitReport, allowed: &[RegimeTag], what: &str) -> Result<(), Failure> {
    let tag = report.regime.tag;
    if allowed.contains(&tag) {
        Ok(())
    } else {
        Err(UrnError::Regime(format!("{what} is not available in the {} regime", tag.as_str())).into())
    }
}

// ---- simulate / exact / limits ----------------------------------------------

#[derive(Serialize)]
struct SimulateReport<'a> {
    command: &'static str,
    params: &'a ModelParams,
    n: u64,
    seed: u64,
    states: &'a [UrnState],
    steps: &'a [StepRecord],
    lapses: Vec<LapseRecord>,
}

fn cmd_simulate(a: &SimulateArgs) -> Result<bool, Failure> {
    let model = model(&a.model)?;
    let fmt = format(&a.out, Format::Csv, &[Format::Csv, Format::Json])?;
    let traj = simulate(&model, a.n, a.seed.seed);
    match fmt {
        Format::Csv => {
            let mut w = sink(&a.out)?;
            write_trajectory_csv(&traj, &mut w)?;
            w.flush()?;
        }
        Format::Json => write_json(
            &a.out,
            &SimulateReport {
                command: "simulate",
                params: model.params(),
                n: a.n,
                seed: a.seed.seed,
                states: &traj.states,
                steps: &traj.steps,
                lapses: extract_lapses(&traj.y_sequence()),
            },
        )?,
    }
    Ok(true)
}

fn cmd_exact(a: &ExactArgs) -> Result<bool, Failure> {
    let model = model(&a.model)?;
    let fmt = format(&a.out, Format::Json, &[Format::Csv, Format::Json])?;
    if a.rational {
        let dist = exact_distribution_rational(&model, a.n)?;
        if fmt == Format::Csv {
            let mut w = sink(&a.out)?;
            write_rational_csv(&dist, &mut w)?;
            w.flush()?;
        } else {
            let float = dist.to_f64();
            write_json(
                &a.out,
                &json!({
                    "command": "exact",
                    "mode": "rational",
                    "params": model.params(),
                    "n": a.n,
                    "support": dist.support,
                    "probs": dist.probs.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
                    "total_mass": dist.total_mass().to_string(),
                    "mean": float.mean(),
                    "variance": float.variance(),
                }),
            )?;
        }
        return Ok(true);
    }
    let dist = exact_distribution_capped(&model, a.n, a.cap)?;
    if fmt == Format::Csv {
        let mut w = sink(&a.out)?;
        write_exact_csv(&dist, &mut w)?;
        w.flush()?;
    } else {
        write_json(
            &a.out,
            &json!({
                "command": "exact",
                "mode": "float",
                "params": model.params(),
                "n": a.n,
                "support": dist.support,
                "probs": dist.probs,
                "total_mass": dist.total_mass(),
                "mean": dist.mean(),
                "variance": dist.variance(),
            }),
        )?;
    }
    Ok(true)
}

fn cmd_limits(a: &LimitsArgs) -> Result<bool, Failure> {
    let model = model(&a.model)?;
    format(&a.out, Format::Json, &[Format::Json])?;
    let report = limit_report(&model)?;
    write_json(&a.out, &json!({"command": "limits", "params": model.params(), "report": report}))?;
    Ok(true)
}

// ---- phase ------------------------------------------------------------------

#[derive(Serialize)]
struct PhaseCell {
    p: f64,
    theta: f64,
    regime: RegimeTag,
    /// `2 lambda2 / K`.
    lambda_ratio: f64,
}

#[derive(Serialize)]
struct CurvePoint {
    theta: f64,
    p_critical: f64,
}

fn cmd_phase(a: &PhaseArgs) -> Result<bool, Failure> {
    let m = matrix(&a.matrix)?;
    let fmt = format(&a.out, Format::Csv, &[Format::Csv, Format::Json])?;
    if a.grid < 2 {
        return Err(usage("--grid needs at least 2 points"));
    }
    let steps = a.grid as i64 - 1;
    let axis: Vec<Probability> = (0..=steps).map(|i| Probability::ratio(i, steps)).collect();
    let curve: Vec<(Probability, Option<Probability>)> = axis.iter().map(|&th| (th, critical_p(&m, th))).collect();
    let mut cells = Vec::new();
    if !a.curve {
        for &theta in &axis {
            for &p in &axis {
                let model = Model::new(ModelParams::new(m, p, theta, 1, 1))?;
                let r = regime(&model);
                cells.push(PhaseCell {
                    p: p.value(),
                    theta: theta.value(),
                    regime: r.tag,
                    lambda_ratio: r.lambda_ratio,
                });
            }
        }
    }
    let mut w = sink(&a.out)?;
    match fmt {
        Format::Csv if a.curve => {
            writeln!(w, "theta,p_critical")?;
            for (th, pc) in curve.iter().filter_map(|(th, pc)| pc.map(|pc| (th, pc))) {
                writeln!(w, "{:?},{:?}", th.value(), pc.value())?;
            }
        }
        Format::Csv => {
            writeln!(w, "p,theta,regime,lambda_ratio,p_critical")?;
            for (i, c) in cells.iter().enumerate() {
                let pc = curve[i / axis.len()].1.map(|p| format!("{:?}", p.value())).unwrap_or_default();
                writeln!(w, "{:?},{:?},{},{:?},{pc}", c.p, c.theta, c.regime.as_str(), c.lambda_ratio)?;
            }
        }
        Format::Json => {
            let points: Vec<CurvePoint> = curve
                .iter()
                .filter_map(|(th, pc)| pc.map(|pc| CurvePoint { theta: th.value(), p_critical: pc.value() }))
                .collect();
            let mut body = json!({"command": "phase", "matrix": m, "grid": a.grid, "critical_curve": points});
            if !a.curve {
                body["cells"] = serde_json::to_value(&cells).map_err(io::Error::from)?;
            }
            serde_json::to_writer_pretty(&mut w, &body).map_err(io::Error::from)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(true)
}

// ---- verify -----------------------------------------------------------------

const FLUCTUATION_REGIMES: &[RegimeTag] = &[RegimeTag::Diffusive, RegimeTag::Critical, RegimeTag::Degenerate];

fn ensemble(
    model: &Model,
    e: &EnsembleArgs,
    st_pairs: &[(f64, f64)],
) -> Result<(EnsembleConfig, EnsembleStats), Failure> {
    let config = EnsembleConfig::new(e.n, e.replicates, e.seed.seed)
        .checkpoints(e.checkpoints.iter().copied())
        .st_pairs(st_pairs.iter().copied())
        .centering(if e.paper_centering { Centering::Paper } else { Centering::Total })
        .keep_samples(e.samples.is_some())
        .execution(execution(&e.workers)?);
    let stats = run_ensemble(model, &config)?;
    if let (Some(path), Some(rows)) = (&e.samples, &stats.samples) {
        let mut w = BufWriter::new(File::create(path)?);
        write_samples_csv(rows, &mut w)?;
        w.flush()?;
    }
    Ok((config, stats))
}

fn json_only(out: &OutputArgs) -> Result<(), Failure> {
    format(out, Format::Json, &[Format::Json]).map(|_| ())
}

fn cmd_verify_lln(a: &EnsembleCmd) -> Result<bool, Failure> {
    json_only(&a.out)?;
    let model = model(&a.model)?;
    let report = limit_report(&model)?;
    require_regime(&report, FLUCTUATION_REGIMES, "the LLN check")?;
    let th = a.thresholds.resolve();
    let (config, stats) = ensemble(&model, &a.ensemble, &[])?;
    let verdict = verify_lln(&stats, &report, &th)?;
    write_json(
        &a.out,
        &json!({"command": "verify lln", "params": model.params(), "config": config, "thresholds": th,
            "pass": verdict.pass, "verdict": verdict, "stats": stats}),
    )?;
    Ok(verdict.pass)
}

fn cmd_verify_clt(a: &CltArgs) -> Result<bool, Failure> {
    let b = &a.base;
    json_only(&b.out)?;
    let model = model(&b.model)?;
    let report = limit_report(&model)?;
    require_regime(&report, FLUCTUATION_REGIMES, "the CLT check")?;
    let kappa = match (a.kappa, a.target) {
        (Some(k), _) => Some(k),
        (None, Target::Paper) => report.kappa_hypothesis,
        (None, Target::Calibrated) => None,
    };
    let th = b.thresholds.resolve();
    let (config, stats) = ensemble(&model, &b.ensemble, &[])?;
    let verdict = verify_clt(&stats, &report, kappa, &th)?;
    write_json(
        &b.out,
        &json!({"command": "verify clt", "params": model.params(), "config": config, "thresholds": th,
            "pass": verdict.pass, "verdict": verdict, "report": report, "stats": stats}),
    )?;
    Ok(verdict.pass)
}

fn cmd_verify_fclt(a: &FcltArgs) -> Result<bool, Failure> {
    let b = &a.base;
    json_only(&b.out)?;
    let model = model(&b.model)?;
    let report = limit_report(&model)?;
    require_regime(&report, FLUCTUATION_REGIMES, "the FCLT check")?;
    let th = b.thresholds.resolve();
    let (config, stats) = ensemble(&model, &b.ensemble, &a.st_pairs)?;
    let verdict = verify_fclt(&stats, &report, &model, &th)?;
    let pass = match a.target {
        Target::Calibrated => verdict.calibrated_pass,
        Target::Paper => verdict.pass,
    };
    write_json(
        &b.out,
        &json!({"command": "verify fclt", "params": model.params(), "config": config, "thresholds": th,
            "target": a.target, "pass": pass, "verdict": verdict, "stats": stats}),
    )?;
    Ok(pass)
}

fn cmd_verify_lapses(a: &LapsesArgs) -> Result<bool, Failure> {
    json_only(&a.out)?;
    let model = model(&a.model)?;
    let config = EnsembleConfig::new(a.n, a.replicates, a.seed.seed)
        .track_lapses(true)
        .execution(execution(&a.workers)?);
    let stats = run_ensemble(&model, &config)?;
    let st = lapse_statistics(&stats)?;
    let theta = model.theta();
    let pass = if theta == 1.0 {
        st.total_lapses == 0
    } else if theta == 0.0 {
        st.complete_lapses == 0 && st.histogram.censored.get(&a.n) == Some(&a.replicates)
    } else {
        st.gof.as_ref().is_some_and(|g| g.p_value > a.alpha)
    };
    write_json(
        &a.out,
        &json!({"command": "verify lapses", "params": model.params(), "n": a.n, "replicates": a.replicates,
            "seed": a.seed.seed, "alpha": a.alpha, "pass": pass, "statistics": st}),
    )?;
    Ok(pass)
}

fn cmd_verify_calibrate(a: &CalibrateArgs) -> Result<bool, Failure> {
    json_only(&a.out)?;
    let m = matrix(&a.matrix)?;
    let points: Vec<(Probability, Probability)> =
        a.theta.iter().flat_map(|&th| a.p.iter().map(move |&p| (p, th))).collect();
    let source = if a.exact {
        KappaSource::Exact
    } else {
        KappaSource::MonteCarlo {
            replicates: a.replicates,
            seed: a.seed.seed,
            execution: execution(&a.workers)?,
        }
    };
    let th = a.thresholds.resolve();
    let cal = calibrate_kappa(m, &points, a.n, source, &th)?;
    let flag = match a.basis {
        Target::Calibrated => KappaFlag::SignCorrectedHypothesisRejected,
        Target::Paper => KappaFlag::HypothesisRejected,
    };
    let pass = !cal.flags.contains(&flag);
    write_json(
        &a.out,
        &json!({"command": "verify calibrate", "basis": a.basis, "thresholds": th, "pass": pass, "calibration": cal}),
    )?;
    Ok(pass)
}
