use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::estimators::Estimator;
use crate::graph::{load_dataset, make_splits, save_dataset, GraphDataset, LoadOptions, SplitFractions};
use crate::metrics::{CurveOptions, Ranking};
use crate::ndiff::{read_checkpoint, write_checkpoint};
use crate::synth::{generate, SynthConfig};
use crate::train::{evaluate, kappa_sweep, scarcity_sweep, train, Arch, EvalOptions, Model, TrainConfig, TrainError};

use super::config::{parse_value, read_table, resolve, to_table, Overrides};
use super::manifest::{hash_input, sha256_file, FileHash, RunManifest, MANIFEST_FILE};
use super::{Cli, CliError, Command, GlobalArgs};

pub const DATASET_FILE: &str = "dataset.gnum.gz";
pub const MODEL_FILE: &str = "model.ckpt";

struct Ctx {
    global: GlobalArgs,
    argv: Vec<String>,
    overrides: Overrides,
    started: Instant,
}

impl Ctx {
    fn out_dir(&self) -> Result<&Path, CliError> {
        let dir = self.global.out_dir.as_path();
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.out_dir()?.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }

    fn finish(
        &self,
        command: &str,
        config: serde_json::Value,
        seeds: Vec<u64>,
        inputs: Vec<FileHash>,
        outputs: &[&str],
    ) -> Result<(), CliError> {
        let dir = self.out_dir()?;
        let outputs = outputs
            .iter()
            .map(|name| Ok(FileHash { path: name.to_string(), sha256: sha256_file(&dir.join(name))? }))
            .collect::<Result<_, CliError>>()?;
        let wall_seconds = if self.global.reproducible { 0.0 } else { self.started.elapsed().as_secs_f64() };
        let manifest = RunManifest {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            args: self.argv.clone(),
            config,
            seeds,
            inputs,
            outputs,
            wall_seconds,
        };
        manifest.write(dir)?;
        log::info!("wrote {}", dir.join(MANIFEST_FILE).display());
        Ok(())
    }

    fn workers(&self) -> usize {
        self.global.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

pub(super) fn dispatch(cli: Cli, argv: Vec<String>, env: Vec<(String, String)>) -> Result<(), CliError> {
    let overrides = Overrides { env, sets: cli.global.sets.clone(), seed: cli.global.seed };
    let ctx = Ctx { global: cli.global, argv, overrides, started: Instant::now() };
    match cli.command {
        Command::Gen { config } => gen(&ctx, config.as_deref()),
        Command::Train { dataset, config, estimator, backbone, split, label_fraction } => {
            train_cmd(&ctx, &dataset, config.as_deref(), estimator, backbone, &split, label_fraction)
        }
        Command::Eval { model, dataset, split, bins, average_predictions, joint } => {
            let curve =
                CurveOptions { ranking: if joint { Ranking::Joint } else { Ranking::Separate }, average_predictions };
            eval(&ctx, &model, &dataset, &split, bins, curve)
        }
        Command::Sweep { config, kind } => sweep(&ctx, &config, kind),
        Command::Report { runs } => report(&ctx, &runs),
    }
}

fn synth_presets(name: &str) -> Result<SynthConfig, String> {
    SynthConfig::preset(name).map_err(|e| e.to_string())
}

fn train_presets(name: &str) -> Result<TrainConfig, String> {
    TrainConfig::preset(name).map_err(|e| e.to_string())
}

fn gen(ctx: &Ctx, config: Option<&Path>) -> Result<(), CliError> {
    let file = config.map(read_table).transpose()?;
    let cfg: SynthConfig =
        resolve("synth config", file, ctx.global.preset.as_deref(), "desk", synth_presets, &ctx.overrides)?;
    let generated = generate(&cfg)?;
    let dir = ctx.out_dir()?;
    save_dataset(dir.join(DATASET_FILE), &generated.dataset)?;
    ctx.write("synth.toml", toml::to_string(&cfg).expect("config serializes"))?;
    let inputs = config.map(hash_input).transpose()?.into_iter().collect();
    ctx.finish("gen", json(&cfg), vec![cfg.seed], inputs, &[DATASET_FILE, "synth.toml"])
}

fn parse_fractions(s: &str) -> Result<SplitFractions, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--split expects three numbers like 0.7,0.1,0.2, got `{s}`")))?;
    match v[..] {
        [train, val, test] => Ok(SplitFractions { train, val, test }),
        _ => Err(CliError::Usage(format!("--split expects three numbers, got `{s}`"))),
    }
}

fn load(path: &Path) -> Result<GraphDataset, CliError> {
    load_dataset(path, LoadOptions::default()).map_err(|e| match e {
        crate::graph::GraphError::Io(io) => CliError::Io(format!("cannot read dataset {}: {io}", path.display())),
        other => CliError::Config(format!("dataset {}: {other}", path.display())),
    })
}

fn train_cmd(
    ctx: &Ctx,
    dataset_path: &Path,
    config: Option<&Path>,
    estimator: Option<String>,
    backbone: Option<String>,
    split: &str,
    label_fraction: f64,
) -> Result<(), CliError> {
    let fractions = parse_fractions(split)?;
    let mut overrides = ctx.overrides.clone();
    overrides.sets.extend(estimator.map(|e| format!("estimator={e}")));
    overrides.sets.extend(backbone.map(|b| format!("backbone={b}")));
    let file = config.map(read_table).transpose()?;
    let cfg: TrainConfig =
        resolve("train config", file, ctx.global.preset.as_deref(), "desk", train_presets, &overrides)?;
    cfg.validate()?;
    let dataset = load(dataset_path)?;
    if cfg.estimator.requires_binary() && !dataset.has_binary_outcome() {
        return Err(CliError::Config(format!(
            "estimator `{}` needs binary outcomes but {} is continuous; binarize it first, e.g. \
             `gnum gen --set binary=true --set monotone=true`",
            cfg.estimator,
            dataset_path.display()
        )));
    }
    let masks = make_splits(dataset.n_nodes(), fractions, cfg.seed)?;
    let masks = if label_fraction < 1.0 { masks.mask_labels(label_fraction, cfg.seed)? } else { masks };
    let dir = ctx.out_dir()?;
    let split_meta = |ckpt: &mut crate::ndiff::Checkpoint| {
        ckpt.metadata.insert("split.seed".into(), cfg.seed.to_string());
        ckpt.metadata
            .insert("split.fractions".into(), format!("{},{},{}", fractions.train, fractions.val, fractions.test));
        ckpt.metadata.insert("split.label_fraction".into(), label_fraction.to_string());
    };
    let outcome = match train(&dataset, &masks, &cfg) {
        Ok(o) => o,
        Err(TrainError::Divergence { epoch, reason, last_finite }) => {
            if let Some(model) = *last_finite {
                let mut ckpt = model.to_checkpoint();
                split_meta(&mut ckpt);
                save_checkpoint(&dir.join("model.last_finite.ckpt"), &ckpt)?;
            }
            return Err(CliError::Numerical(format!("training diverged at epoch {epoch}: {reason}")));
        }
        Err(e) => return Err(e.into()),
    };
    let mut ckpt = outcome.model.to_checkpoint();
    split_meta(&mut ckpt);
    save_checkpoint(&dir.join(MODEL_FILE), &ckpt)?;
    ctx.write("history.csv", outcome.history.to_csv(!ctx.global.reproducible))?;
    ctx.write("train.toml", toml::to_string(&cfg).expect("config serializes"))?;
    log::info!("best epoch {} of {}", outcome.best_epoch, outcome.history.epochs());
    let mut resolved = json(&cfg);
    resolved["split"] = serde_json::json!({
        "fractions": [fractions.train, fractions.val, fractions.test],
        "label_fraction": label_fraction,
    });
    let mut inputs = vec![hash_input(dataset_path)?];
    inputs.extend(config.map(hash_input).transpose()?);
    ctx.finish("train", resolved, vec![cfg.seed], inputs, &[MODEL_FILE, "history.csv", "train.toml"])
}

fn save_checkpoint(path: &Path, ckpt: &crate::ndiff::Checkpoint) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, ckpt).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn checkpoint_meta<'a>(ckpt: &'a crate::ndiff::Checkpoint, key: &str) -> Result<&'a str, CliError> {
    ckpt.metadata
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| CliError::Config(format!("checkpoint has no `{key}` metadata; was it written by `gnum train`?")))
}

fn eval(
    ctx: &Ctx,
    model_path: &Path,
    dataset_path: &Path,
    split: &str,
    bins: usize,
    curve: CurveOptions,
) -> Result<(), CliError> {
    let bytes = fs::read(model_path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", model_path.display())))?;
    let ckpt = read_checkpoint(&bytes[..]).map_err(|e| CliError::Config(format!("{}: {e}", model_path.display())))?;
    let model = Model::from_checkpoint(&ckpt, None)?;
    let dataset = load(dataset_path)?;
    if dataset.feature_dim() != model.input_dim {
        return Err(CliError::Config(format!(
            "model expects {} feature columns, dataset has {}",
            model.input_dim,
            dataset.feature_dim()
        )));
    }
    let seed: u64 = checkpoint_meta(&ckpt, "split.seed")?
        .parse()
        .map_err(|_| CliError::Config("malformed `split.seed` metadata".into()))?;
    let fractions = parse_fractions(checkpoint_meta(&ckpt, "split.fractions")?)?;
    let label_fraction: f64 = checkpoint_meta(&ckpt, "split.label_fraction")?
        .parse()
        .map_err(|_| CliError::Config("malformed `split.label_fraction` metadata".into()))?;
    let masks = make_splits(dataset.n_nodes(), fractions, seed)?;
    let masks = if label_fraction < 1.0 { masks.mask_labels(label_fraction, seed)? } else { masks };
    let nodes = masks.by_name(split)?;
    if bins == 0 {
        return Err(CliError::Usage("--bins must be positive".into()));
    }
    let opts = EvalOptions { n_bins: bins, curve, ..EvalOptions::default() };
    let mut report = evaluate(&model, &dataset, &nodes, &opts)?;
    report.metadata.insert("split".into(), split.to_string());
    if !report.is_finite() {
        return Err(CliError::Numerical("evaluation produced non-finite metrics".into()));
    }
    ctx.write("report.txt", report.to_text())?;
    ctx.write("curve.csv", report.curve_csv())?;
    ctx.write("qini.csv", report.qini_csv())?;
    let resolved = serde_json::json!({
        "split": split,
        "bins": bins,
        "joint_ranking": curve.ranking == Ranking::Joint,
        "average_predictions": curve.average_predictions,
        "model": json(&model.config),
    });
    let inputs = vec![hash_input(model_path)?, hash_input(dataset_path)?];
    ctx.finish("eval", resolved, vec![seed], inputs, &["report.txt", "curve.csv", "qini.csv"])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SweepKind {
    Kappa,
    Scarcity,
}

fn desk() -> String {
    "desk".into()
}

/// Contents of a sweep config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSpec {
    kind: SweepKind,
    /// Training preset under the `[train]` table.
    #[serde(default = "desk")]
    preset: String,
    /// Generator preset under the `[synth]` table.
    #[serde(default = "desk")]
    synth_preset: String,
    seeds: Vec<u64>,
    /// `estimator` or `estimator:backbone`, e.g. `ct:gcn`.
    estimators: Vec<String>,
    #[serde(default)]
    kappas: Vec<f64>,
    #[serde(default)]
    fractions: Vec<f64>,
    /// Scarcity sweeps read this dataset instead of generating one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dataset: Option<PathBuf>,
    #[serde(default)]
    synth: Table,
    #[serde(default)]
    train: Table,
}

fn with_preset(mut table: Table, preset: &str) -> Table {
    table.entry("preset").or_insert_with(|| Value::String(preset.to_string()));
    table
}

fn sweep(ctx: &Ctx, config_path: &Path, kind: Option<String>) -> Result<(), CliError> {
    let mut table = read_table(config_path)?;
    if let Some(k) = kind {
        table.insert("kind".into(), Value::String(k));
    }
    if let Some(p) = &ctx.global.preset {
        table.insert("preset".into(), Value::String(p.clone()));
    }
    if let Some(seed) = ctx.global.seed {
        table.insert("seeds".into(), Value::Array(vec![Value::Integer(seed as i64)]));
    }
    for kv in &ctx.overrides.sets {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{kv}`")))?;
        let (k, v) = (k.trim(), parse_value(v.trim()));
        match k.split_once('.') {
            Some((section @ ("synth" | "train"), key)) => {
                let sub = table.entry(section).or_insert_with(|| Value::Table(Table::new()));
                let Value::Table(sub) = sub else {
                    return Err(CliError::Config(format!("`{section}` must be a table")));
                };
                sub.insert(key.to_string(), v);
            }
            _ => {
                table.insert(k.to_string(), v);
            }
        }
    }
    let plan: SweepSpec = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("sweep config: {}", e.message())))?;
    if plan.seeds.is_empty() || plan.estimators.is_empty() {
        return Err(CliError::Config("sweep config: `seeds` and `estimators` must be non-empty".into()));
    }
    let env_only = Overrides { env: ctx.overrides.env.clone(), ..Overrides::default() };
    let base: SynthConfig = resolve(
        "sweep [synth]",
        Some(with_preset(plan.synth.clone(), &plan.synth_preset)),
        None,
        "desk",
        synth_presets,
        &env_only,
    )?;
    let configs = plan
        .estimators
        .iter()
        .map(|entry| {
            let (est, bb) = entry.split_once(':').unwrap_or((entry, "gnum"));
            let estimator: Estimator = est.parse().map_err(CliError::Config)?;
            let backbone: Arch =
                if estimator.uses_graph() { bb.parse().map_err(CliError::Config)? } else { Arch::None };
            let mut t = with_preset(plan.train.clone(), &plan.preset);
            t.insert("estimator".into(), Value::String(estimator.to_string()));
            t.insert("backbone".into(), Value::String(backbone.to_string()));
            let cfg: TrainConfig = resolve("sweep [train]", Some(t), None, "desk", train_presets, &env_only)?;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let dir = ctx.out_dir()?;
    let csv = dir.join("sweep.csv");
    let workers = ctx.workers();
    let mut inputs = vec![hash_input(config_path)?];
    match plan.kind {
        SweepKind::Kappa => {
            if plan.kappas.is_empty() {
                return Err(CliError::Config("sweep config: kind = \"kappa\" needs a non-empty `kappas`".into()));
            }
            let (table, _) = kappa_sweep(&base, &plan.kappas, &configs, &plan.seeds, workers, Some(&csv))?;
            log::info!("{} kappa rows", table.rows.len());
        }
        SweepKind::Scarcity => {
            if plan.fractions.is_empty() {
                return Err(CliError::Config("sweep config: kind = \"scarcity\" needs a non-empty `fractions`".into()));
            }
            let dataset = match &plan.dataset {
                Some(p) => {
                    inputs.push(hash_input(p)?);
                    load(p)?
                }
                None => generate(&base)?.dataset,
            };
            let masks = make_splits(dataset.n_nodes(), SplitFractions::default(), base.seed)?;
            let (table, _) =
                scarcity_sweep(&dataset, &masks, &configs, &plan.fractions, &plan.seeds, workers, Some(&csv))?;
            log::info!("{} scarcity rows", table.rows.len());
        }
    }
    let resolved = SweepSpec { synth: to_table(&base), train: Table::new(), ..plan.clone() };
    let mut doc = to_table(&resolved);
    doc.remove("train");
    let mut text = toml::to_string(&doc).expect("plan serializes");
    for cfg in &configs {
        let mut section = Table::new();
        section.insert(format!("train-{}-{}", cfg.estimator, cfg.backbone), Value::Table(to_table(cfg)));
        text.push('\n');
        text.push_str(&toml::to_string(&section).expect("config serializes"));
    }
    ctx.write("sweep.toml", &text)?;
    let mut config = json(&doc);
    config["train"] = serde_json::Value::Array(configs.iter().map(json).collect());
    ctx.finish("sweep", config, plan.seeds.clone(), inputs, &["sweep.csv", "sweep.toml"])
}

/// `key value` lines of a report, skipping metadata.
fn report_metrics(text: &str) -> IndexMap<String, String> {
    text.lines()
        .filter(|l| !l.starts_with("meta."))
        .filter_map(|l| l.split_once(' '))
        .map(|(k, v)| (k.to_string(), v.trim().to_string()))
        .collect()
}

/// First column → second column of a two-column CSV.
fn two_columns(text: &str) -> IndexMap<String, String> {
    text.lines().skip(1).filter_map(|l| l.split_once(',')).map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

/// Side-by-side table: `key_name,<run>,<run>…` over the union of keys.
fn side_by_side(key_name: &str, names: &[String], columns: &[IndexMap<String, String>]) -> String {
    let mut keys: Vec<&String> = Vec::new();
    for c in columns {
        for k in c.keys() {
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    let mut s = format!("{key_name},{}\n", names.join(","));
    for k in keys {
        let cells: Vec<&str> = columns.iter().map(|c| c.get(k).map_or("", String::as_str)).collect();
        s.push_str(&format!("{k},{}\n", cells.join(",")));
    }
    s
}

/// Mean and sample standard deviation of every metric column per
/// (parameter, estimator) group of a sweep CSV.
fn summarize_sweep(text: &str) -> Result<String, CliError> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    if header.len() < 4 {
        return Err(CliError::Config(format!("unexpected sweep header {header:?}")));
    }
    let metrics = &header[3..];
    let mut groups: IndexMap<(String, String), Vec<Vec<f64>>> = IndexMap::new();
    for l in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = l.split(',').collect();
        let values = f[3..]
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Config(format!("malformed sweep row `{l}`")))?;
        groups.entry((f[0].to_string(), f[2].to_string())).or_default().push(values);
    }
    let mut s = format!("{},estimator,n", header[0]);
    for m in metrics {
        s.push_str(&format!(",{m}_mean,{m}_sd"));
    }
    s.push('\n');
    for ((param, est), rows) in &groups {
        let n = rows.len() as f64;
        s.push_str(&format!("{param},{est},{}", rows.len()));
        for j in 0..metrics.len() {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = if rows.len() > 1 {
                (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            s.push_str(&format!(",{mean:.10e},{sd:.10e}"));
        }
        s.push('\n');
    }
    Ok(s)
}

fn report(ctx: &Ctx, runs: &[PathBuf]) -> Result<(), CliError> {
    let mut names: Vec<String> = Vec::new();
    let mut inputs = Vec::new();
    for dir in runs {
        let manifest = RunManifest::read(dir)?;
        manifest.verify(dir)?;
        inputs.push(hash_input(&dir.join(MANIFEST_FILE))?);
        let base = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        let mut name = base.clone();
        let mut k = 2;
        while names.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        names.push(name);
    }
    let read = |dir: &Path, file: &str| fs::read_to_string(dir.join(file)).ok();
    let metrics: Vec<_> =
        runs.iter().map(|d| read(d, "report.txt").map(|t| report_metrics(&t)).unwrap_or_default()).collect();
    let curves: Vec<_> =
        runs.iter().map(|d| read(d, "curve.csv").map(|t| two_columns(&t)).unwrap_or_default()).collect();
    let qinis: Vec<_> = runs.iter().map(|d| read(d, "qini.csv").map(|t| two_columns(&t)).unwrap_or_default()).collect();
    let mut outputs: Vec<String> = vec!["comparison.csv".into()];
    ctx.write("comparison.csv", side_by_side("metric", &names, &metrics))?;
    if curves.iter().any(|c| !c.is_empty()) {
        ctx.write("uplift_curves.csv", side_by_side("k", &names, &curves))?;
        outputs.push("uplift_curves.csv".into());
    }
    if qinis.iter().any(|c| !c.is_empty()) {
        ctx.write("qini_curves.csv", side_by_side("k", &names, &qinis))?;
        outputs.push("qini_curves.csv".into());
    }
    for (dir, name) in runs.iter().zip(&names) {
        if let Some(text) = read(dir, "sweep.csv") {
            let file = format!("sweep_summary_{name}.csv");
            ctx.write(&file, summarize_sweep(&text)?)?;
            outputs.push(file);
        }
    }
    let resolved = serde_json::json!({ "runs": runs.iter().map(|r| r.display().to_string()).collect::<Vec<_>>() });
    let outs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    ctx.finish("report", resolved, vec![], inputs, &outs)
}
