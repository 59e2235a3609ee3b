//! Short dense and BDWP 2:8 runs on the synthetic benchmark.
use nmsat::train::{run_training, MethodKind, TrainConfig};

fn main() -> nmsat::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/models/toy_mlp.json");
    let mut base = TrainConfig::load(path.as_ref())?;
    base.steps = 200;
    for kind in [MethodKind::Dense, MethodKind::Bdwp] {
        let out = run_training(&base.clone().with_method(kind, None))?;
        let last = out.records.last().expect("steps > 0");
        println!(
            "{kind:>5}: held-out loss {:.4}, last batch {:.4}, FLOPs {:.3e} of {:.3e}",
            out.final_loss, last.loss, last.flops_actual, last.flops_dense
        );
    }
    Ok(())
}
