use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::nm::{bdwp_bp, bdwp_ff, NmConfig};
use crate::sched::{schedule, SorePolicy};
use crate::sim::{peak_throughput, simulate_training_step, ArrayConfig, CycleReport, MemoryConfig};
use crate::train::{count_flops, run_training, FlopsTable, StageCount, TrainingMethod};

use super::config::{Command, ExperimentConfig};

/// Files a command wrote.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
}

impl Artifacts {
    fn push(&mut self, p: PathBuf) {
        self.files.push(p);
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub name: Option<String>,
    pub method: String,
    pub nm: NmConfig,
    pub seed: u64,
    pub steps: u64,
    pub final_loss: f64,
    pub final_train_loss: f64,
    pub flops: FlopsTable,
}

fn train_one(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<(TrainSummary, Artifacts)> {
    let tc = cfg.train_config(seed)?;
    create_dir(dir)?;
    let outcome = run_training(&tc)?;
    let method = outcome.trainer.method();
    let mut art = Artifacts::default();

    let csv_path = dir.join("train_loss.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    for r in &outcome.records {
        w.serialize(r)?;
    }
    w.flush()?;
    art.push(csv_path);

    let wdir = dir.join("weights");
    create_dir(&wdir)?;
    let model = outcome.trainer.model();
    for (l, layer) in model.layers.iter().enumerate() {
        let stem = format!("{l:02}_{}", layer.label());
        let master = outcome.trainer.master_weight(l);
        let raw = wdir.join(format!("{stem}.f32"));
        let bytes: Vec<u8> = master.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&raw, bytes)?;
        art.push(raw);

        let sparse = !layer.sparsity_exempt;
        let ff_nm = if sparse && method.prunes_ff_weights() {
            method.nm
        } else {
            NmConfig::DENSE_PAIR
        };
        let ff = wdir.join(format!("{stem}.ff.nmpk"));
        bdwp_ff(&master, ff_nm)?.write_to(BufWriter::new(File::create(&ff)?))?;
        art.push(ff);
        if sparse && method.prunes_bp_weights() {
            let bp = wdir.join(format!("{stem}.bp.nmpk"));
            bdwp_bp(&master, method.nm)?.write_to(BufWriter::new(File::create(&bp)?))?;
            art.push(bp);
        }
    }

    let summary = TrainSummary {
        name: tc.name.clone(),
        method: method.kind.to_string(),
        nm: method.nm,
        seed,
        steps: tc.steps,
        final_loss: outcome.final_loss,
        final_train_loss: outcome.final_train_loss,
        flops: outcome.flops,
    };
    let sp = dir.join("summary.json");
    write_json(&sp, &summary)?;
    art.push(sp);
    Ok((summary, art))
}

type RunResult = Result<(TrainSummary, Artifacts)>;

/// Trains every configured seed, `jobs` at a time. With several seeds each
/// run gets its own `seed_<s>` directory under the output directory.
pub fn cmd_train(cfg: &ExperimentConfig, jobs: usize) -> Result<(Vec<TrainSummary>, Artifacts)> {
    let seeds = cfg.seeds();
    let out = cfg.out_dir(Command::Train);
    // Surface config errors before spawning anything.
    cfg.train_config(seeds[0])?.training_method()?;
    let dirs: Vec<PathBuf> = if seeds.len() == 1 {
        vec![out.clone()]
    } else {
        seeds
            .iter()
            .map(|s| out.join(format!("seed_{s}")))
            .collect()
    };
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunResult>>> =
        Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, seeds.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                log::info!("train: seed {} -> {}", seeds[i], dirs[i].display());
                let r = train_one(cfg, seeds[i], &dirs[i]);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    let mut summaries = Vec::new();
    let mut art = Artifacts::default();
    for r in results.into_inner().expect("results lock") {
        let (s, a) = r.expect("every seed ran")?;
        summaries.push(s);
        art.files.extend(a.files);
    }
    if seeds.len() > 1 {
        let p = out.join("runs.json");
        write_json(&p, &summaries)?;
        art.push(p);
    }
    Ok((summaries, art))
}

/// The schedule the scheduler emits, in a form `sim` reads back unchanged.
pub fn cmd_sched(cfg: &ExperimentConfig) -> Result<(ExperimentConfig, Artifacts)> {
    let model = cfg.load_model()?;
    let method = cfg.method()?;
    let (array, mem) = (cfg.array()?, cfg.memory()?);
    let policy = cfg.sore_policy.unwrap_or_default();
    let s = schedule(&model, &method, &array, &mem, policy)?;
    let doc = ExperimentConfig {
        name: model.name.clone(),
        layers: Some(model.layers.clone()),
        dataset: model.dataset.clone(),
        method: Some(method.kind),
        nm: Some(method.nm),
        array: Some(array),
        memory: Some(mem),
        sore_policy: Some(policy),
        schedule: Some(s.words),
        predicted_total_cycles: Some(s.predicted_total_cycles),
        ..Default::default()
    };
    let dir = cfg.out_dir(Command::Sched);
    create_dir(&dir)?;
    let p = dir.join("schedule.json");
    write_json(&p, &doc)?;
    Ok((doc, Artifacts { files: vec![p] }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub name: Option<String>,
    pub method: String,
    pub nm: NmConfig,
    pub array: ArrayConfig,
    pub memory: MemoryConfig,
    pub peak_dense_flops: f64,
    pub peak_sparse_flops: f64,
    pub total_cycles: u64,
    pub predicted_total_cycles: Option<u64>,
    pub matches_prediction: Option<bool>,
    /// The same network scheduled densely on the same hardware.
    pub dense_total_cycles: u64,
    pub speedup: f64,
    pub report: CycleReport,
}

#[derive(Debug, Serialize)]
struct LayerRow<'a> {
    layer: usize,
    name: &'a str,
    ff_cycles: u64,
    bp_cycles: u64,
    wu_cycles: u64,
    optimizer_cycles: u64,
    total_cycles: u64,
    dense_total_cycles: u64,
    speedup: f64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn cmd_sim(cfg: &ExperimentConfig) -> Result<(SimSummary, Artifacts)> {
    let model = cfg.load_model()?;
    let method = cfg.method()?;
    let (array, mem) = (cfg.array()?, cfg.memory()?);
    let policy = cfg.sore_policy.unwrap_or_default();
    let words = match &cfg.schedule {
        Some(w) => w.clone(),
        None => schedule(&model, &method, &array, &mem, policy)?.words,
    };
    let report = simulate_training_step(&model, &words, &array, &mem)?;
    let dense = dense_report(&model, &array, &mem)?;
    let total = report.total.total_cycles;
    let summary = SimSummary {
        name: model.name.clone(),
        method: method.kind.to_string(),
        nm: method.nm,
        array,
        memory: mem,
        peak_dense_flops: peak_throughput(&array, None),
        peak_sparse_flops: peak_throughput(&array, Some(array.nm()?)),
        total_cycles: total,
        predicted_total_cycles: cfg.predicted_total_cycles,
        matches_prediction: cfg.predicted_total_cycles.map(|p| p == total),
        dense_total_cycles: dense.total.total_cycles,
        speedup: ratio(dense.total.total_cycles, total),
        report,
    };

    let dir = cfg.out_dir(Command::Sim);
    create_dir(&dir)?;
    let jp = dir.join("sim_report.json");
    write_json(&jp, &summary)?;
    let cp = dir.join("sim_layers.csv");
    let mut w = csv::Writer::from_path(&cp)?;
    for (l, d) in summary.report.layers.iter().zip(&dense.layers) {
        w.serialize(LayerRow {
            layer: l.layer,
            name: &l.name,
            ff_cycles: l.ff,
            bp_cycles: l.bp,
            wu_cycles: l.wu,
            optimizer_cycles: l.optimizer,
            total_cycles: l.total,
            dense_total_cycles: d.total,
            speedup: ratio(d.total, l.total),
        })?;
    }
    w.flush()?;
    Ok((
        summary,
        Artifacts {
            files: vec![jp, cp],
        },
    ))
}

fn dense_report(model: &Model, array: &ArrayConfig, mem: &MemoryConfig) -> Result<CycleReport> {
    let s = schedule(
        model,
        &TrainingMethod::dense(),
        array,
        mem,
        SorePolicy::default(),
    )?;
    simulate_training_step(model, &s.words, array, mem)
}

#[derive(Debug, Serialize)]
struct FlopsRow {
    layer: String,
    name: String,
    exempt: bool,
    ff_dense: f64,
    ff_actual: f64,
    bp_dense: f64,
    bp_actual: f64,
    wu_dense: f64,
    wu_actual: f64,
    total_dense: f64,
    total_actual: f64,
    ratio: f64,
}

pub fn cmd_flops(cfg: &ExperimentConfig) -> Result<(FlopsTable, Artifacts)> {
    let model = cfg.load_model()?;
    let method = cfg.method()?;
    let table = count_flops(&model, &method);
    let dir = cfg.out_dir(Command::Flops);
    create_dir(&dir)?;
    let jp = dir.join("flops.json");
    write_json(&jp, &table)?;
    let cp = dir.join("flops.csv");
    let mut w = csv::Writer::from_path(&cp)?;
    let row = |layer: String, name: &str, exempt: bool, f: [StageCount; 4]| FlopsRow {
        layer,
        name: name.to_string(),
        exempt,
        ff_dense: f[0].dense,
        ff_actual: f[0].actual,
        bp_dense: f[1].dense,
        bp_actual: f[1].actual,
        wu_dense: f[2].dense,
        wu_actual: f[2].actual,
        total_dense: f[3].dense,
        total_actual: f[3].actual,
        ratio: f[3].actual / f[3].dense,
    };
    for (l, lf) in table.layers.iter().enumerate() {
        w.serialize(row(
            l.to_string(),
            &lf.name,
            lf.exempt,
            [lf.ff, lf.bp, lf.wu, lf.total()],
        ))?;
    }
    let mut sums = [StageCount::default(); 3];
    for lf in &table.layers {
        for (k, s) in [lf.ff, lf.bp, lf.wu].into_iter().enumerate() {
            sums[k].dense += s.dense;
            sums[k].actual += s.actual;
        }
    }
    w.serialize(row(
        "total".into(),
        "",
        false,
        [sums[0], sums[1], sums[2], table.step],
    ))?;
    w.flush()?;
    Ok((
        table,
        Artifacts {
            files: vec![jp, cp],
        },
    ))
}
