//! One ResNet18 training step on the accelerator, dense against BDWP 2:8.
use nmsat::model::{Model, Stage};
use nmsat::nm::NmConfig;
use nmsat::sched::{schedule, SorePolicy};
use nmsat::sim::{peak_throughput, simulate_training_step, ArrayConfig, MemoryConfig};
use nmsat::train::TrainingMethod;

fn main() -> nmsat::Result<()> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/models/resnet18_tinyimagenet.json"
    );
    let model = Model::load(path.as_ref())?;
    let nm = NmConfig::new(2, 8)?;
    let (array, mem) = (ArrayConfig::default(), MemoryConfig::default());
    println!(
        "peak {:.1} GFLOPS dense, {:.1} GFLOPS {nm}",
        peak_throughput(&array, None) / 1e9,
        peak_throughput(&array, Some(nm)) / 1e9
    );

    let mut totals = Vec::new();
    for method in [TrainingMethod::dense(), TrainingMethod::bdwp(nm)] {
        let s = schedule(&model, &method, &array, &mem, SorePolicy::PreGenerate)?;
        let r = simulate_training_step(&model, &s.words, &array, &mem)?;
        println!(
            "{method:>9}: {:.3} s/batch  FF {} BP {} WU {} update {}",
            r.seconds,
            r.stage_totals(Stage::Ff).total_cycles,
            r.stage_totals(Stage::Bp).total_cycles,
            r.stage_totals(Stage::Wu).total_cycles,
            r.optimizer_totals.total_cycles
        );
        totals.push(r.total.total_cycles);
    }
    println!("speedup {:.3}x", totals[0] as f64 / totals[1] as f64);
    Ok(())
}
