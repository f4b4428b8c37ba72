use std::path::{Path, PathBuf};

use clap::Args;
use robustlab::attacks::{AttackFamily, AttackSpec, FGL2_SCALE};
use robustlab::data::{load_cifar10_bin, DataLayout};
use robustlab::eval::EvalSet;
use robustlab::models::{load_model, Model};
use robustlab::training::parse_fraction;
use robustlab::Error;

use crate::manifest::Manifest;
use crate::{DataArgs, Failure};

pub fn num(s: &str) -> Result<f64, String> {
    parse_fraction(s).ok_or_else(|| format!("not a number: `{s}`"))
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    /// Evaluate on the first N test images.
    #[arg(long)]
    pub n: Option<usize>,
}

pub struct Loaded {
    pub model: Model,
    pub set: EvalSet,
    pub manifest: Manifest,
}

impl Loaded {
    pub fn image_shape(&self) -> [usize; 3] {
        match self.model {
            Model::Linear(_) => [28, 28, 1],
            Model::Conv(_) => [32, 32, 3],
        }
    }
}

/// Load a model and the test split it was trained for; records both in a
/// fresh manifest.
pub fn load(args: &ModelArgs, command: &str) -> Result<Loaded, Failure> {
    let (model, meta) = load_model(&args.model)?;
    let layout = DataLayout::new(&args.data.data_dir);
    let mut manifest = Manifest::new(command);
    manifest.push_file("model", &args.model)?;
    if let Some(r) = meta.get("recipe") {
        manifest.push("model.recipe", r);
    }
    let set = match &model {
        Model::Linear(_) => {
            let (i, l) = layout.mnist_test();
            manifest.push_file("data.test_images", &i)?;
            manifest.push_file("data.test_labels", &l)?;
            EvalSet::from_binary(&layout.mnist_3v7()?.1)?
        }
        Model::Conv(_) => {
            let p = layout.cifar_test();
            manifest.push_file("data.test_batch", &p)?;
            EvalSet::from_dataset(&load_cifar10_bin(&[p])?)?
        }
    };
    let set = match args.n {
        Some(0) => return Err(Failure::Usage("--n must be positive".into())),
        Some(n) => set.take(n)?,
        None => set,
    };
    manifest.push("n", set.len());
    Ok(Loaded {
        model,
        set,
        manifest,
    })
}

#[derive(Args, Debug, Clone)]
pub struct AttackArgs {
    /// fgsm, fgl2, scaled-fgl2, pgd, pixel-swap, top-weight-pixel or jsma.
    #[arg(long)]
    pub attack: String,

    /// Perturbation bound; fractions such as 8/255 are accepted.
    #[arg(long, default_value = "0", value_parser = num)]
    pub eps: f64,

    /// PGD iterations.
    #[arg(long, default_value_t = 20)]
    pub steps: usize,

    /// PGD step size.
    #[arg(long, default_value = "2/255", value_parser = num)]
    pub step_size: f64,

    /// Start PGD from a uniform point in the eps ball.
    #[arg(long)]
    pub random_start: bool,

    /// Gradient scale for scaled-fgl2.
    #[arg(long, default_value_t = FGL2_SCALE)]
    pub scale: f64,

    /// Fraction of features swapped by pixel-swap.
    #[arg(long, default_value = "0", value_parser = num)]
    pub ratio: f64,

    /// Pixels set by top-weight-pixel.
    #[arg(long, default_value_t = 0)]
    pub k: usize,

    /// JSMA budgets (comma-separated fractions of features).
    #[arg(long, value_delimiter = ',', value_parser = num)]
    pub gamma: Vec<f64>,

    /// Do not clip adversarial images to [0, 1].
    #[arg(long)]
    pub no_clip: bool,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl AttackArgs {
    pub fn spec(&self) -> Result<AttackSpec, Failure> {
        let family = match self.attack.as_str() {
            "fgsm" => AttackFamily::Fgsm,
            "fgl2" => AttackFamily::FastGradL2,
            "scaled-fgl2" => AttackFamily::ScaledClippedFgl2 { scale: self.scale },
            "pgd" => AttackFamily::Pgd {
                steps: self.steps,
                step_size: self.step_size,
                random_start: self.random_start,
            },
            "pixel-swap" => AttackFamily::PixelSwap { ratio: self.ratio },
            "top-weight-pixel" => AttackFamily::TopWeightPixel { k: self.k },
            "jsma" => AttackFamily::Jsma {
                gamma: self.gamma.first().copied().unwrap_or(0.0),
                target: None,
            },
            other => return Err(Failure::Usage(format!("unknown attack `{other}`"))),
        };
        let spec = AttackSpec::new(family, self.eps)
            .with_clip(!self.no_clip)
            .with_seed(self.seed);
        spec.validate()?;
        Ok(spec)
    }

    pub fn record(&self, m: &mut Manifest) {
        m.push("attack", &self.attack);
        m.push("attack.eps", self.eps);
        m.push("attack.steps", self.steps);
        m.push("attack.step_size", self.step_size);
        m.push("attack.random_start", self.random_start);
        m.push("attack.scale", self.scale);
        m.push("attack.ratio", self.ratio);
        m.push("attack.k", self.k);
        m.push("attack.gamma", format!("{:?}", self.gamma));
        m.push("attack.clip", !self.no_clip);
        m.push("seed", self.seed);
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| {
        Failure::Lib(Error::Io {
            path: path.into(),
            source: e,
        })
    })
}

/// Write the manifest next to `out` and return the CSV header line.
pub fn commit_manifest(m: &mut Manifest, out: &Path) -> Result<String, Failure> {
    m.push("output", out.display());
    let path = crate::train::sibling(out, ".manifest");
    write_text(&path, &m.to_text())?;
    Ok(m.csv_header())
}
