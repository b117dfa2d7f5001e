use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use alp_eval::evaluation::{sweep_target, SweepMode, SWEEP_HEADER};
use alp_eval::io::write_atomic;
use alp_eval::manifest::{RunManifest, MANIFEST_FILE};
use alp_eval::training::{default_inner_attack, InnerAttackMode};
use alp_eval::{
    attack_many, attack_summary_csv, checkpoint, clean_accuracy, gen_gaussian_blobs,
    gen_two_spirals, landscape_grid_with, load_idx, split, targeted_sweep, train_adversarial,
    train_alp, train_natural, trajectory_csv, trajectory_file_name, untargeted_sweep, AlpConfig,
    AttackConfig, AttackMode, Dataset, Error, LandscapeOptions, LogitDistance, ModelSpec,
    Parameters, SweepConfig, SweepReport, TrainConfig,
};

use crate::args::*;
use crate::CliError;

type CliResult<T> = Result<T, CliError>;

const UNIT: f64 = 255.0;

/// Files produced by a command; written only once everything is computed.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }
}

struct Record {
    command: &'static str,
    configs: serde_json::Value,
    seeds: serde_json::Value,
    inputs: Vec<PathBuf>,
}

pub fn dispatch(command: Command, raw_args: Vec<String>) -> CliResult<()> {
    let start = Instant::now();
    let (record, outputs) = match command {
        Command::Train(a) => cmd_train(&a)?,
        Command::Sweep(a) => cmd_sweep(&a)?,
        Command::Landscape(a) => cmd_landscape(&a)?,
        Command::Attack(a) => cmd_attack(&a)?,
        Command::Compare(a) => cmd_compare(&a)?,
        Command::Eval(a) => cmd_eval(&a)?,
        Command::Dataset(a) => cmd_dataset(&a)?,
        Command::Replay(a) => return cmd_replay(&a),
    };
    std::fs::create_dir_all(&outputs.dir).map_err(|e| Error::io(&outputs.dir, e))?;
    let mut written = Vec::new();
    for (name, bytes) in &outputs.files {
        let path = outputs.dir.join(name);
        write_atomic(&path, bytes)?;
        written.push(path.display().to_string());
    }
    let manifest = RunManifest {
        command: record.command.to_string(),
        args: raw_args,
        toolkit_version: alp_eval::VERSION.to_string(),
        configs: record.configs,
        seeds: record.seeds,
        inputs: record
            .inputs
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        outputs: written,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    manifest.save(&outputs.dir.join(MANIFEST_FILE))?;
    Ok(())
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(format!("error: {}", msg.into()))
}

/// Loads the full dataset named by `--dataset`, plus any input files.
fn load_data(d: &DataArgs) -> CliResult<(Dataset, Vec<PathBuf>)> {
    match d.dataset.as_str() {
        "blobs" => Ok((
            gen_gaussian_blobs(d.n_per_class, d.dim, d.classes, d.spread, d.data_seed)?,
            vec![],
        )),
        "spirals" => Ok((
            gen_two_spirals(d.n_per_class, d.noise, d.data_seed)?,
            vec![],
        )),
        other => {
            let paths = other.strip_prefix("idx:").ok_or_else(|| {
                usage(format!(
                    "unknown dataset '{other}' (blobs, spirals, idx:<images>,<labels>)"
                ))
            })?;
            let (images, labels) = paths
                .split_once(',')
                .ok_or_else(|| usage("idx dataset needs idx:<images>,<labels>"))?;
            let (images, labels) = (PathBuf::from(images), PathBuf::from(labels));
            let ds = load_idx(&images, &labels)?;
            Ok((ds, vec![images, labels]))
        }
    }
}

fn select(d: &DataArgs, part: SplitPart) -> CliResult<(Dataset, Vec<PathBuf>)> {
    let (full, inputs) = load_data(d)?;
    let ds = match part {
        SplitPart::All => full,
        SplitPart::Train => split(&full, d.train_fraction, d.split_seed)?.0,
        SplitPart::Test => split(&full, d.train_fraction, d.split_seed)?.1,
    };
    Ok((ds, inputs))
}

fn data_record(d: &DataArgs, part: SplitPart) -> serde_json::Value {
    json!({
        "dataset": d.dataset,
        "n_per_class": d.n_per_class,
        "dim": d.dim,
        "classes": d.classes,
        "spread": d.spread,
        "noise": d.noise,
        "train_fraction": d.train_fraction,
        "split": format!("{part:?}").to_lowercase(),
    })
}

fn parse_hidden(s: &str) -> CliResult<Vec<usize>> {
    let s = s.trim();
    if s.is_empty() || s == "none" {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("bad hidden width '{w}'")))
        })
        .collect()
}

/// `start:end:count` in 1/255 units → radii in `[0, 1]`.
pub fn parse_eps_grid(s: &str) -> CliResult<Vec<f64>> {
    let bad = || {
        usage(format!(
            "malformed --eps-grid '{s}', expected start:end:count"
        ))
    };
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let end: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if count == 0 || !start.is_finite() || !end.is_finite() || (count == 1 && start != end) {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![start / UNIT]);
    }
    let m = (count - 1) as f64;
    Ok((0..count)
        .map(|i| (start + (end - start) * i as f64 / m) / UNIT)
        .collect())
}

fn load_model(path: &Path, data: &Dataset) -> CliResult<Parameters> {
    let params = checkpoint::load_checkpoint(path)?;
    if !data.is_empty() && data.input_dim() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            actual: data.input_dim(),
        }
        .into());
    }
    Ok(params)
}

fn attack_config(f: &AttackFlags, epsilon: f64) -> AttackConfig {
    AttackConfig {
        epsilon,
        alpha: if epsilon > 0.0 {
            f.alpha * epsilon
        } else {
            alp_eval::attacks::default_alpha(0.0)
        },
        max_steps: f.steps,
        random_start: f.random_start,
        convergence_tol: f.convergence_tol,
        convergence_window: f.convergence_window,
        seed: f.seed,
    }
}

fn cmd_train(a: &TrainArgs) -> CliResult<(Record, Outputs)> {
    let (train, inputs) = select(&a.data, SplitPart::Train)?;
    let spec = ModelSpec::new(
        train.input_dim(),
        &parse_hidden(&a.hidden)?,
        train.num_classes,
    )?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed,
    };
    let epsilon = a.eps / UNIT;
    let inner = AttackConfig {
        alpha: if epsilon > 0.0 {
            a.inner_alpha * epsilon
        } else {
            default_inner_attack(0.0).alpha
        },
        max_steps: a.inner_steps,
        ..default_inner_attack(epsilon)
    };
    let (run, objective) = match a.objective {
        Objective::Natural => (
            train_natural(&spec, &train, &cfg)?,
            json!({"objective": "natural"}),
        ),
        Objective::Adversarial => (
            train_adversarial(&spec, &train, &cfg, &inner)?,
            json!({"objective": "adversarial", "inner_attack": inner}),
        ),
        Objective::Alp => {
            let alp = AlpConfig {
                lambda: a.lambda,
                inner_attack_mode: match a.alp_inner {
                    Mode::Targeted => InnerAttackMode::TargetedRandom,
                    Mode::Untargeted => InnerAttackMode::Untargeted,
                },
                include_clean_loss: a.alp_clean_loss.is_on(),
                include_adv_loss: a.alp_adv_loss.is_on(),
                distance: if a.alp_euclidean {
                    LogitDistance::Euclidean
                } else {
                    LogitDistance::SquaredEuclidean
                },
                inner_attack: inner.clone(),
            };
            (
                train_alp(&spec, &train, &cfg, &alp)?,
                json!({"objective": "alp", "alp": alp}),
            )
        }
    };
    let final_log = run.log.last();
    println!(
        "trained {} on {} examples: objective {:.6}, clean accuracy {:.4}",
        spec.describe(),
        train.len(),
        final_log.map_or(f64::NAN, |l| l.objective),
        final_log.map_or(f64::NAN, |l| l.clean_acc),
    );
    let mut out = Outputs::new(&a.out);
    out.add("model.ckpt", checkpoint::encode_checkpoint(&run.params));
    out.add("train_log.csv", run.log_csv());
    let record = Record {
        command: "train",
        configs: json!({
            "model": spec,
            "train": cfg,
            "training": objective,
            "data": data_record(&a.data, SplitPart::Train),
            "eps_255": a.eps,
            "eps": epsilon,
        }),
        seeds: json!({"train": a.seed, "data": a.data.data_seed, "split": a.data.split_seed}),
        inputs,
    };
    Ok((record, out))
}

fn run_sweep(
    params: &Parameters,
    data: &Dataset,
    grid: &[f64],
    f: &AttackFlags,
) -> CliResult<SweepReport> {
    let cfg = SweepConfig {
        attack: attack_config(f, 0.0),
        alpha_ratio: f.alpha,
    };
    let data = data.take(f.n);
    Ok(match f.mode {
        Mode::Targeted => targeted_sweep(params, &data, grid, &cfg, f.seed)?,
        Mode::Untargeted => untargeted_sweep(params, &data, grid, &cfg)?,
    })
}

fn sweep_record(s: &SweepFlags, grid: &[f64]) -> serde_json::Value {
    json!({
        "mode": match s.attack.mode { Mode::Targeted => SweepMode::Targeted, Mode::Untargeted => SweepMode::Untargeted },
        "eps_grid_255": grid.iter().map(|e| e * UNIT).collect::<Vec<_>>(),
        "eps_grid": grid,
        "alpha_ratio": s.attack.alpha,
        "steps": s.attack.steps,
        "n": s.attack.n,
        "random_start": s.attack.random_start,
        "convergence_tol": s.attack.convergence_tol,
        "convergence_window": s.attack.convergence_window,
    })
}

fn cmd_sweep(a: &SweepArgs) -> CliResult<(Record, Outputs)> {
    let grid = parse_eps_grid(&a.sweep.eps_grid)?;
    let (data, mut inputs) = select(&a.data, a.split)?;
    let params = load_model(&a.model, &data)?;
    let report = run_sweep(&params, &data, &grid, &a.sweep.attack)?;
    let csv = report.to_csv();
    print!("{csv}");
    let mut out = Outputs::new(&a.out);
    out.add("sweep.csv", csv);
    inputs.insert(0, a.model.clone());
    let record = Record {
        command: "sweep",
        configs: json!({
            "sweep": sweep_record(&a.sweep, &grid),
            "data": data_record(&a.data, a.split),
        }),
        seeds: json!({"attack": a.sweep.attack.seed, "data": a.data.data_seed, "split": a.data.split_seed}),
        inputs,
    };
    Ok((record, out))
}

fn cmd_compare(a: &CompareArgs) -> CliResult<(Record, Outputs)> {
    if a.models.len() < 2 {
        return Err(usage("compare needs at least two models"));
    }
    let grid = parse_eps_grid(&a.sweep.eps_grid)?;
    let (data, data_inputs) = select(&a.data, a.split)?;
    let mut csv = format!("model,{SWEEP_HEADER}\n");
    for path in &a.models {
        let params = load_model(path, &data)?;
        let report = run_sweep(&params, &data, &grid, &a.sweep.attack)?;
        for row in report.rows() {
            writeln!(csv, "{},{row}", path.display()).unwrap();
        }
    }
    print!("{csv}");
    let mut out = Outputs::new(&a.out);
    out.add("compare.csv", csv);
    let mut inputs = a.models.clone();
    inputs.extend(data_inputs);
    let record = Record {
        command: "compare",
        configs: json!({
            "sweep": sweep_record(&a.sweep, &grid),
            "data": data_record(&a.data, a.split),
        }),
        seeds: json!({"attack": a.sweep.attack.seed, "data": a.data.data_seed, "split": a.data.split_seed}),
        inputs,
    };
    Ok((record, out))
}

fn cmd_landscape(a: &LandscapeArgs) -> CliResult<(Record, Outputs)> {
    if a.resolution.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "resolution must be odd, got {}",
            a.resolution
        ))
        .into());
    }
    let (data, mut inputs) = select(&a.data, a.split)?;
    let params = load_model(&a.model, &data)?;
    let ex = data.examples.get(a.example_index).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "example index {} out of range ({} examples)",
            a.example_index,
            data.len()
        ))
    })?;
    let opts = LandscapeOptions {
        radius: a.radius / UNIT,
        resolution: a.resolution,
        seed: a.seed,
        clip: !a.no_clip,
    };
    let grid = landscape_grid_with(&params, ex, &opts)?;
    let sidecar = json!({
        "example_index": a.example_index,
        "label": ex.y,
        "seed": a.seed,
        "radius": opts.radius,
        "radius_255": a.radius,
        "resolution": a.resolution,
        "clip": opts.clip,
        "center_loss": grid.center_loss(),
        "r1": grid.r1.data(),
        "r2": grid.r2.data(),
    });
    let mut out = Outputs::new(&a.out);
    out.add("landscape.csv", grid.to_csv());
    let mut side = serde_json::to_vec_pretty(&sidecar).map_err(Error::from)?;
    side.push(b'\n');
    out.add("landscape.json", side);
    inputs.insert(0, a.model.clone());
    let record = Record {
        command: "landscape",
        configs: json!({"landscape": sidecar, "data": data_record(&a.data, a.split)}),
        seeds: json!({"direction": a.seed, "data": a.data.data_seed, "split": a.data.split_seed}),
        inputs,
    };
    Ok((record, out))
}

fn cmd_attack(a: &AttackArgs) -> CliResult<(Record, Outputs)> {
    let (data, mut inputs) = select(&a.data, a.split)?;
    let params = load_model(&a.model, &data)?;
    let data = data.take(a.attack.n);
    let cfg = attack_config(&a.attack, a.eps / UNIT);
    let items = data
        .examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            Ok((
                ex.clone(),
                match a.attack.mode {
                    Mode::Untargeted => AttackMode::Untargeted,
                    Mode::Targeted => AttackMode::Targeted {
                        target: sweep_target(ex, i, params.num_classes(), a.attack.seed)?,
                    },
                },
            ))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let results = attack_many(&params, &items, &cfg)?;
    let mut out = Outputs::new(&a.out);
    for (i, r) in results.iter().enumerate() {
        out.add(trajectory_file_name(i, &r.mode), trajectory_csv(r));
    }
    out.add("summary.csv", attack_summary_csv(&results));
    let successes = results.iter().filter(|r| r.success).count();
    println!("{successes}/{} attacks succeeded", results.len());
    inputs.insert(0, a.model.clone());
    let record = Record {
        command: "attack",
        configs: json!({
            "attack": cfg,
            "mode": format!("{:?}", a.attack.mode).to_lowercase(),
            "eps_255": a.eps,
            "n": a.attack.n,
            "data": data_record(&a.data, a.split),
        }),
        seeds: json!({"attack": a.attack.seed, "data": a.data.data_seed, "split": a.data.split_seed}),
        inputs,
    };
    Ok((record, out))
}

fn cmd_eval(a: &EvalArgs) -> CliResult<(Record, Outputs)> {
    let (data, mut inputs) = select(&a.data, a.split)?;
    let params = load_model(&a.model, &data)?;
    let mut csv = String::from("example,label,prediction,loss\n");
    for (i, ex) in data.examples.iter().enumerate() {
        let pred = params.predict_slice(ex.x.data())?;
        let loss = params.loss_at(ex.x.data(), ex.y)?;
        writeln!(csv, "{i},{},{pred},{loss}", ex.y).unwrap();
    }
    let acc = clean_accuracy(&params, &data)?;
    println!("clean accuracy {acc:.6} on {} examples", data.len());
    let mut out = Outputs::new(&a.out);
    out.add("eval.csv", csv);
    inputs.insert(0, a.model.clone());
    let record = Record {
        command: "eval",
        configs: json!({"data": data_record(&a.data, a.split), "clean_accuracy": acc}),
        seeds: json!({"data": a.data.data_seed, "split": a.data.split_seed}),
        inputs,
    };
    Ok((record, out))
}

fn cmd_dataset(a: &DatasetArgs) -> CliResult<(Record, Outputs)> {
    let (data, inputs) = select(&a.data, a.split)?;
    let mut out = Outputs::new(&a.out);
    out.add("dataset.csv", data.to_csv());
    println!("{} examples, {} classes", data.len(), data.num_classes);
    let record = Record {
        command: "dataset",
        configs: json!({"data": data_record(&a.data, a.split)}),
        seeds: json!({"data": a.data.data_seed, "split": a.data.split_seed}),
        inputs,
    };
    Ok((record, out))
}

/// Replaces the value of `--out` in recorded arguments.
fn override_out(args: &[String], out: &Path) -> Vec<String> {
    let out = out.display().to_string();
    let mut result = Vec::with_capacity(args.len() + 2);
    let mut replaced = false;
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        if arg == "--out" {
            iter.next();
            result.push("--out".to_string());
            result.push(out.clone());
            replaced = true;
        } else if arg.starts_with("--out=") {
            result.push(format!("--out={out}"));
            replaced = true;
        } else {
            result.push(arg.clone());
        }
    }
    if !replaced {
        result.push("--out".to_string());
        result.push(out);
    }
    result
}

fn cmd_replay(a: &ReplayArgs) -> CliResult<()> {
    let manifest = RunManifest::load(&a.manifest)?;
    if manifest.command == "replay" || manifest.args.first().is_some_and(|c| c == "replay") {
        return Err(Error::InvalidArgument("cannot replay a replay".into()).into());
    }
    let args = match &a.out {
        Some(out) => override_out(&manifest.args, out),
        None => manifest.args.clone(),
    };
    crate::run(args)
}
