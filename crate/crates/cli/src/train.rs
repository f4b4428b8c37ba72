use std::path::PathBuf;

use clap::Args;
use robustlab::data::DataLayout;
use robustlab::models::{save_model, ModelMeta};
use robustlab::training::{parse_config, recipe, run_config, DatasetKind, TrainConfig};
use robustlab::Error;

use crate::manifest::{sha256_hex, Manifest};
use crate::{DataArgs, Failure};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Named recipe, e.g. `expert-l2` or `cnn-l2-pgd-desk`.
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    recipe: Option<String>,

    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,

    #[command(flatten)]
    data: DataArgs,

    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Model output path.
    #[arg(long)]
    out: PathBuf,

    /// Training log CSV (default: `<out>.log.csv`).
    #[arg(long)]
    log: Option<PathBuf>,

    /// Do not print per-epoch progress.
    #[arg(long)]
    quiet: bool,
}

pub fn sibling(path: &std::path::Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(args: TrainArgs) -> Result<(), Failure> {
    let (name, mut cfg): (String, TrainConfig) = match (&args.recipe, &args.config) {
        (Some(r), _) => (r.clone(), recipe(r)?),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            (format!("config:{}", path.display()), parse_config(&text)?)
        }
        (None, None) => return Err(Failure::Usage("either --recipe or --config is required".into())),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let layout = DataLayout::new(&args.data.data_dir);
    let log_path = args.log.clone().unwrap_or_else(|| sibling(&args.out, ".log.csv"));
    let manifest_path = sibling(&args.out, ".manifest");

    let mut m = Manifest::new("train");
    m.push("recipe", &name);
    m.push("seed", cfg.seed);
    m.push_block("config", &cfg.to_text());
    match cfg.dataset {
        DatasetKind::Mnist3v7 => {
            let (i, l) = layout.mnist_train();
            m.push_file("data.train_images", &i)?;
            m.push_file("data.train_labels", &l)?;
        }
        DatasetKind::Cifar10 => {
            for (k, p) in layout.cifar_train().iter().enumerate() {
                m.push_file(&format!("data.train_batch_{}", k + 1), p)?;
            }
        }
    }
    m.push("output.model", args.out.display());
    m.push("output.log", log_path.display());
    m.write(&manifest_path)?;

    let quiet = args.quiet;
    let (model, log) = run_config(&cfg, &layout, &mut |r| {
        if !quiet {
            eprintln!(
                "epoch {:>4}  loss {:.5}  clean_acc {:.4}  l1 {:.4}  l2 {:.4}",
                r.epoch, r.loss, r.clean_acc, r.l1_norm, r.l2_norm
            );
        }
    })?;

    let mut meta = ModelMeta::new();
    meta.insert("recipe".into(), name);
    meta.insert("manifest".into(), m.digest());
    meta.insert("config_sha256".into(), sha256_hex(cfg.to_text().as_bytes()));
    meta.insert("loss".into(), cfg.loss.tag().into());
    meta.insert("label_smoothing".into(), cfg.loss.smoothing().to_string());
    save_model(&model, &meta, &args.out)?;
    let csv = format!("{}{}", m.csv_header(), log.to_csv()?);
    std::fs::write(&log_path, csv).map_err(|e| Error::Io {
        path: log_path.clone(),
        source: e,
    })?;
    if !quiet {
        eprintln!("wrote {} ({} steps)", args.out.display(), log.steps);
    }
    Ok(())
}
