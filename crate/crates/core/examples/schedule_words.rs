//! Configuration words for the toy CNN under each training method.
use nmsat::model::Model;
use nmsat::nm::NmConfig;
use nmsat::sched::{schedule, SorePolicy};
use nmsat::sim::{ArrayConfig, MemoryConfig};
use nmsat::train::{MethodKind, TrainingMethod};

fn main() -> nmsat::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/models/toy_cnn.json");
    let model = Model::load(path.as_ref())?;
    let nm = NmConfig::new(2, 8)?;
    let (array, mem) = (ArrayConfig::default(), MemoryConfig::default());
    for kind in [
        MethodKind::Dense,
        MethodKind::Srste,
        MethodKind::Sdgp,
        MethodKind::Bdwp,
    ] {
        let s = schedule(
            &model,
            &TrainingMethod::new(kind, nm),
            &array,
            &mem,
            SorePolicy::PreGenerate,
        )?;
        println!("{kind}: {} cycles", s.predicted_total_cycles);
        for w in &s.words {
            println!(
                "  layer {} {:<2} {:<18} {:<20} {} tiles {:>3}  {:>6} cycles",
                w.layer,
                w.stage.as_str(),
                w.sparse_mode.to_string(),
                format!("{:?}", w.sore_placement),
                w.dataflow,
                w.tiles.count(),
                w.predicted_cycles.unwrap_or(0)
            );
        }
    }
    Ok(())
}
