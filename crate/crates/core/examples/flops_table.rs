//! BDWP 2:8 training FLOPs relative to dense on the bundled networks.
use nmsat::model::Model;
use nmsat::nm::NmConfig;
use nmsat::train::{count_flops, TrainingMethod};

const MODELS: [&str; 5] = [
    "resnet9_cifar10",
    "vgg19_cifar100",
    "vit_cifar100",
    "resnet18_tinyimagenet",
    "resnet50_imagenet",
];

fn main() -> nmsat::Result<()> {
    let method = TrainingMethod::bdwp(NmConfig::new(2, 8)?);
    for name in MODELS {
        let path = format!("{}/models/{name}.json", env!("CARGO_MANIFEST_DIR"));
        let model = Model::load(path.as_ref())?;
        let t = count_flops(&model, &method);
        let run = t.run.map_or(String::from("-"), |r| {
            format!("{:.3e} / {:.3e}", r.actual, r.dense)
        });
        println!("{name:<24} ratio {:.4}  run {run}", t.ratio);
    }
    Ok(())
}
