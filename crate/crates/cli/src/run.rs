//! One runner per subcommand.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use spikescan::energy::{
    estimate_energy, reconcile_reference, reconciliation_csv, reference_architecture, reference_rates, report_csv,
    EnergyConfig, NeuronKind, Reconciliation, REFERENCE_SCALE,
};
use spikescan::neurons::container;
use spikescan::neurons::{
    DsnNeuron, DsnParams, Leak, LifNeuron, PsnKind, PsnNeuron, PsnParams, ResetMode, SpikingNeuron,
};
use spikescan::numerics::Tensor;
use spikescan::props::{
    check_conditions_table, check_long_control, check_short_control, classical, find_nonlinearity, ConditionsRow,
    DsnProbe, MembraneModel, PropertyReport, WindowedDsn,
};
use spikescan::tasks::approx::{approx_csv, run_approx_experiment, ApproxTarget};
use spikescan::tasks::datasets::{gen_dataset_a, gen_dataset_b, split};
use spikescan::tasks::extrapolation::{
    extrapolation_csv, gen_stationary, run_extrapolation, EvalOutcome, ExtrapolationConfig,
};
use spikescan::tasks::layers::NeuronChoice;
use spikescan::tasks::optim::TrainConfig;
use spikescan::tasks::pixel::{gen_pixel_set, run_pixel_task, PixelConfig};

use crate::args::*;
use crate::bench::{bench_csv, bench_one, slopes, BenchPlan};
use crate::manifest::{write_atomic, write_json};
use crate::{CliError, Outcome, Status};

pub fn dispatch(cmd: &Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Bench(a) => bench(a),
        Command::Props(a) => props(a),
        Command::Approx(a) => approx(a),
        Command::Pixel(a) => pixel(a),
        Command::Extrapolate(a) => extrapolate(a),
        Command::Energy(a) => energy(a),
        Command::GenData(a) => gen_data(a),
        Command::Replay(_) => Err(CliError::Usage("replay is handled by execute".into())),
    }
}

fn choice(name: &str) -> Result<NeuronChoice, CliError> {
    NeuronChoice::parse(name).map_err(|e| CliError::Usage(e.to_string()))
}

struct Writer {
    dir: PathBuf,
    outputs: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        }
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let p = self.dir.join(name);
        write_atomic(&p, body.as_bytes())?;
        self.outputs.push(p);
        Ok(())
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let p = self.dir.join(name);
        write_json(&p, value)?;
        self.outputs.push(p);
        Ok(())
    }

    fn finish(self, status: Status, summary: String) -> Outcome {
        Outcome {
            status,
            outputs: self.outputs,
            summary,
            manifest: None,
        }
    }
}

fn bench(a: &BenchArgs) -> Result<Outcome, CliError> {
    if a.lengths.windows(2).any(|w| w[0] >= w[1]) || a.lengths.is_empty() {
        return Err(CliError::Usage("--lengths must be non-empty and strictly ascending".into()));
    }
    if a.batch == 0 || a.channels == 0 {
        return Err(CliError::Usage("--batch and --channels must be >= 1".into()));
    }
    let choices = a.neurons.iter().map(|n| choice(n)).collect::<Result<Vec<_>, _>>()?;
    let plan = BenchPlan {
        batch: a.batch,
        channels: a.channels,
        reps: a.reps,
        warmup: a.warmup,
        seed: a.seed,
    };
    let mut rows = Vec::new();
    for &c in &choices {
        for &t in &a.lengths {
            rows.push(bench_one(c, t, &plan)?);
        }
    }
    let fitted = slopes(&rows);
    let mut w = Writer::new(&a.out);
    w.text("bench.csv", &bench_csv(&rows))?;
    w.json("bench.json", &json!({ "rows": rows, "slopes": fitted }))?;
    let mut summary = bench_csv(&rows);
    for s in &fitted {
        summary.push_str(&format!("slope {}: {:.3}\n", s.neuron, s.slope));
    }
    Ok(w.finish(Status::Ok, summary))
}

enum Subject {
    Classical(LifNeuron),
    Dsn,
    Psn(PsnKind),
}

fn subject(name: &str, beta: f64) -> Result<Subject, CliError> {
    let (leak, reset) = match name {
        "dsn" => return Ok(Subject::Dsn),
        "psn" => return Ok(Subject::Psn(PsnKind::Full)),
        "masked-psn" => return Ok(Subject::Psn(PsnKind::Masked { k: 8 })),
        "sliding-psn" => return Ok(Subject::Psn(PsnKind::Sliding { k: 8 })),
        _ => {
            let (l, r) = name
                .split_once('-')
                .ok_or_else(|| CliError::Usage(format!("unknown neuron '{name}'")))?;
            let leak = match l {
                "if" => Leak::If,
                "lif" => Leak::Lif,
                _ => return Err(CliError::Usage(format!("unknown neuron '{name}'"))),
            };
            let reset = match r {
                "hard" => ResetMode::Hard,
                "soft" => ResetMode::Soft,
                "none" => ResetMode::None,
                _ => return Err(CliError::Usage(format!("unknown neuron '{name}'"))),
            };
            (leak, reset)
        }
    };
    let n = classical(leak, reset, beta);
    n.cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Subject::Classical(n))
}

fn row(c1: bool, c2: bool, c3: bool) -> ConditionsRow {
    ConditionsRow {
        condition1: c1,
        condition2: c2,
        condition3: c3,
    }
}

fn props(a: &PropsArgs) -> Result<Outcome, CliError> {
    let subj = subject(&a.neuron, a.beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let unsupported = || CliError::Usage(format!("{:?} is not defined for '{}'", a.property, a.neuron));

    let (report, expected, extra) = match a.property {
        Property::ConditionsTable => {
            let (neuron, expected): (Box<dyn SpikingNeuron>, ConditionsRow) = match subj {
                Subject::Classical(n) => {
                    let linear = n.cfg.reset == ResetMode::None;
                    (Box::new(n), row(true, true, linear))
                }
                Subject::Dsn => (
                    Box::new(DsnNeuron {
                        params: DsnParams::init(3, 4, &mut rng),
                    }),
                    row(true, true, true),
                ),
                Subject::Psn(kind) => {
                    let sliding = matches!(kind, PsnKind::Sliding { .. });
                    (
                        Box::new(PsnNeuron::new(PsnParams::init(kind, 32, &mut rng)?)),
                        row(sliding, sliding, true),
                    )
                }
            };
            let got = check_conditions_table(neuron.as_ref(), a.seed)?;
            let report = PropertyReport {
                neuron: a.neuron.clone(),
                property: "conditions-table".into(),
                holds: got == expected,
                trials: 1,
                witness: None,
                conditions: Some(got),
            };
            (report, json!(expected), serde_json::Value::Null)
        }
        prop => {
            let dsn_params = || DsnParams::init(1, 4, &mut ChaCha8Rng::seed_from_u64(a.seed));
            let model: Box<dyn MembraneModel> = match (&subj, prop) {
                (Subject::Classical(n), _) => Box::new(n.clone()),
                (Subject::Dsn, Property::ShortControl) => Box::new(WindowedDsn {
                    params: dsn_params(),
                    v_th: 1.0,
                    margin: 0.9,
                }),
                (Subject::Dsn, _) => Box::new(DsnProbe::new(dsn_params())?),
                (Subject::Psn(_), _) => return Err(unsupported()),
            };
            let reset = match &subj {
                Subject::Classical(n) => Some((n.cfg.leak, n.cfg.reset)),
                _ => None,
            };
            match prop {
                Property::ShortControl => {
                    let v = check_short_control(model.as_ref(), a.delta, a.trials, a.seed)?;
                    let expected = !matches!(reset, Some((_, ResetMode::Soft | ResetMode::None)));
                    (
                        PropertyReport::from_verdict(&a.neuron, "short-control", v),
                        json!(expected),
                        serde_json::Value::Null,
                    )
                }
                Property::LongControl => {
                    let v = check_long_control(model.as_ref(), a.c_bound, a.t, a.trials, a.seed)?;
                    let expected = !matches!(reset, Some((Leak::If, ResetMode::Soft | ResetMode::None)));
                    (
                        PropertyReport::from_verdict(&a.neuron, "long-control", v),
                        json!(expected),
                        serde_json::Value::Null,
                    )
                }
                Property::Nonlinearity => {
                    let w = find_nonlinearity(model.as_ref(), a.t, a.trials, 1e-9, a.seed)?;
                    let expected = !matches!(reset, Some((_, ResetMode::None)));
                    let report = PropertyReport {
                        neuron: a.neuron.clone(),
                        property: "nonlinearity".into(),
                        holds: w.is_some(),
                        trials: a.trials,
                        witness: None,
                        conditions: None,
                    };
                    (report, json!(expected), json!(w))
                }
                Property::ConditionsTable => unreachable!(),
            }
        }
    };

    let matches = match a.property {
        Property::ConditionsTable => report.holds,
        _ => json!(report.holds) == expected,
    };
    let mut body = json!({ "report": report, "expected": expected, "matches": matches });
    if !extra.is_null() {
        body["nonlinearity_witness"] = extra;
    }
    let mut w = Writer::new(&a.out);
    w.json("props.json", &body)?;
    let summary = format!(
        "{} {:?}: observed {} expected {} -> {}\n",
        a.neuron,
        a.property,
        match &report.conditions {
            Some(c) => json!(c).to_string(),
            None => report.holds.to_string(),
        },
        expected,
        if matches { "as expected" } else { "UNEXPECTED" }
    );
    let status = if matches {
        Status::Ok
    } else {
        Status::Unexpected(summary.clone())
    };
    Ok(w.finish(status, summary))
}

/// Sequence length of both approximation datasets.
pub const APPROX_T: usize = 128;

fn approx(a: &ApproxArgs) -> Result<Outcome, CliError> {
    let (train, test) = match a.dataset {
        ApproxDataset::A => {
            let n = match a.scale {
                Scale::Desk => 2200,
                Scale::Full => 11000,
            };
            split(&gen_dataset_a(n, APPROX_T, 1.0, 2.0, a.seed)?, 1.0 / 11.0, a.seed)?
        }
        ApproxDataset::B => split(&gen_dataset_b(APPROX_T, a.seed)?.x, 0.1, a.seed)?,
    };
    let epochs = a.epochs.unwrap_or(match a.scale {
        Scale::Desk => 30,
        Scale::Full => 100,
    });
    let target = match a.variant {
        SpikeVariant::Binary => ApproxTarget::six_channels(),
        SpikeVariant::Integer => ApproxTarget::integer_soft(4),
    };
    let cfg = TrainConfig {
        epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let r = run_approx_experiment(&train, &test, &target, &cfg)?;
    let mut w = Writer::new(&a.out);
    w.text("approx.csv", &approx_csv(&r))?;
    w.json(
        "approx.json",
        &json!({
            "task": "approx",
            "neuron": "dsn",
            "seed": a.seed,
            "dataset": a.dataset,
            "scale": a.scale,
            "variant": a.variant,
            "train_config": cfg,
            "per_epoch": r.per_epoch,
            "final": {
                "channels": r.channels,
                "per_channel_accuracy": r.per_channel_accuracy,
                "average_accuracy": r.average_accuracy,
                "test_mse": r.test_mse,
                "param_count": r.param_count,
            },
        }),
    )?;
    Ok(w.finish(Status::Ok, approx_csv(&r)))
}

fn pixel(a: &PixelArgs) -> Result<Outcome, CliError> {
    let c = choice(&a.neuron)?;
    if matches!(c, NeuronChoice::Psn | NeuronChoice::MaskedPsn) {
        return Err(CliError::Usage("pixel task supports lif, sliding-psn and dsn".into()));
    }
    let mut cfg = PixelConfig::default();
    cfg.train.seed = a.seed;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    let r = run_pixel_task(c, &cfg)?;
    let mut csv = String::from("epoch,loss,test_accuracy\n");
    for l in &r.per_epoch {
        csv.push_str(&format!("{},{},{}\n", l.epoch, l.loss, l.metric.unwrap_or(f64::NAN)));
    }
    let mut w = Writer::new(&a.out);
    w.text("pixel.csv", &csv)?;
    w.json(
        "pixel.json",
        &json!({
            "task": "pixel",
            "neuron": c,
            "seed": a.seed,
            "config": cfg,
            "per_epoch": r.per_epoch,
            "final": { "accuracy": r.accuracy, "untrained_accuracy": r.untrained_accuracy },
        }),
    )?;
    let summary = format!(
        "{}: test accuracy {:.2}% (untrained {:.2}%)\n",
        c.label(),
        100.0 * r.accuracy,
        100.0 * r.untrained_accuracy
    );
    Ok(w.finish(Status::Ok, summary))
}

/// Largest allowed ratio of an extrapolated loss to the loss at the training length.
pub const EXTRAPOLATION_TOLERANCE: f64 = 2.0;

fn extrapolate(a: &ExtrapolateArgs) -> Result<Outcome, CliError> {
    let c = choice(&a.neuron)?;
    if c == NeuronChoice::Lif {
        return Err(CliError::Usage("extrapolation supports dsn, sliding-psn, psn and masked-psn".into()));
    }
    let mut cfg = ExtrapolationConfig {
        train_t: a.train_t,
        eval_ts: a.eval_t.clone(),
        ..ExtrapolationConfig::default()
    };
    cfg.train.seed = a.seed;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    let r = run_extrapolation(c, &cfg)?;
    let mut w = Writer::new(&a.out);
    w.text("extrapolate.csv", &extrapolation_csv(&r))?;
    w.json(
        "extrapolate.json",
        &json!({
            "task": "extrapolate",
            "neuron": c,
            "seed": a.seed,
            "config": cfg,
            "per_epoch": r.per_epoch,
            "final": {
                "train_loss_parallel": r.train_loss_parallel,
                "train_loss_serial": r.train_loss_serial,
                "evals": r.evals,
            },
        }),
    )?;
    let baseline = r
        .evals
        .iter()
        .find(|e| e.t == a.train_t)
        .and_then(|e| e.loss())
        .or(r.train_loss_serial)
        .unwrap_or(r.train_loss_parallel);
    let mismatch = r.evals.iter().find_map(|e| match e.outcome {
        EvalOutcome::LengthMismatch { expected, got } => {
            Some(format!("{} is tied to length {expected}; asked for {got}", c.label()))
        }
        _ => None,
    });
    let failures: Vec<String> = r
        .evals
        .iter()
        .filter_map(|e| match &e.outcome {
            EvalOutcome::Loss(l) if *l > EXTRAPOLATION_TOLERANCE * baseline || !l.is_finite() => {
                Some(format!("T={} loss {l:.5} exceeds {EXTRAPOLATION_TOLERANCE}x {baseline:.5}", e.t))
            }
            EvalOutcome::Failed(msg) => Some(format!("T={}: {msg}", e.t)),
            _ => None,
        })
        .collect();
    let summary = extrapolation_csv(&r);
    let status = match (mismatch, failures.is_empty()) {
        (_, false) => Status::Unexpected(failures.join("; ")),
        (Some(m), true) => Status::LengthMismatch(m),
        (None, true) => Status::Ok,
    };
    Ok(w.finish(status, summary))
}

/// Largest accepted relative gap to the reference totals.
pub const ENERGY_TOLERANCE: f64 = 0.10;

fn energy(a: &EnergyArgs) -> Result<Outcome, CliError> {
    let cfg = EnergyConfig {
        scale: a.scale,
        ..EnergyConfig::default()
    };
    let rows: Vec<Reconciliation> = if a.neuron == "all" {
        reconcile_reference(cfg)?
    } else {
        let kind = NeuronKind::parse(&a.neuron).map_err(|e| CliError::Usage(e.to_string()))?;
        let (rates, reference_mj) = reference_rates(kind);
        let report = estimate_energy(&reference_architecture(kind), &rates, 32, cfg)?;
        vec![Reconciliation {
            neuron: kind.label().into(),
            estimated_mj: report.total_mj,
            reference_mj,
            relative_error: report.total_mj / reference_mj - 1.0,
            report,
        }]
    };
    let mut w = Writer::new(&a.out);
    for r in &rows {
        w.text(&format!("energy_{}.csv", r.neuron), &report_csv(&r.report))?;
    }
    w.text("reconciliation.csv", &reconciliation_csv(&rows))?;
    w.json("energy.json", &json!({ "config": cfg, "rows": rows }))?;
    let checked = a.scale == REFERENCE_SCALE;
    let off: Vec<String> = rows
        .iter()
        .filter(|r| checked && r.relative_error.abs() > ENERGY_TOLERANCE)
        .map(|r| format!("{} off by {:.1}%", r.neuron, 100.0 * r.relative_error))
        .collect();
    let status = if off.is_empty() {
        Status::Ok
    } else {
        Status::Unexpected(off.join("; "))
    };
    Ok(w.finish(status, reconciliation_csv(&rows)))
}

fn gen_data(a: &GenDataArgs) -> Result<Outcome, CliError> {
    if a.n == 0 || a.t == 0 {
        return Err(CliError::Usage("--n and --t must be >= 1".into()));
    }
    let tensors: Vec<(String, Tensor)> = match a.dataset {
        DataKind::A => vec![("x".into(), gen_dataset_a(a.n, a.t, 1.0, 2.0, a.seed)?)],
        DataKind::B => {
            let set = gen_dataset_b(a.t, a.seed)?;
            let families = ["sine", "sigmoid", "step", "poisson"];
            let ids = set
                .families
                .iter()
                .map(|f| families.iter().position(|g| g == f).unwrap_or(0) as f64)
                .collect();
            let n = set.families.len();
            vec![("x".into(), set.x), ("family".into(), Tensor::new(&[n], ids)?)]
        }
        DataKind::Pixel => {
            let set = gen_pixel_set(a.n, 0.3, a.seed)?;
            let labels = set.labels.iter().map(|&l| l as f64).collect();
            vec![("x".into(), set.x), ("label".into(), Tensor::new(&[a.n], labels)?)]
        }
        DataKind::Stationary => {
            let (x, y) = gen_stationary(a.n, a.t, a.seed)?;
            vec![("x".into(), x), ("y".into(), y)]
        }
    };
    write_atomic(&a.out, &container::encode(&tensors))?;
    let summary = tensors
        .iter()
        .map(|(name, t)| format!("{name}: {:?}\n", t.shape()))
        .collect::<String>();
    Ok(Outcome {
        status: Status::Ok,
        outputs: vec![a.out.clone()],
        summary,
        manifest: None,
    })
}
