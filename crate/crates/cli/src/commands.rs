use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use robustlab::attacks::{example_seed, fooling_ascent, fooling_asr_sweep, run_attack, AttackFamily};
use robustlab::eval::{
    conv1_filter_grid, default_fooling_grid, export_weight_image, fooling_to_csv, image_grid,
    jsma_table, jsma_table_to_csv, parse_grid, perturbation_to_unit, sweep, sweep_to_csv,
    write_png,
};
use robustlab::models::{load_model, Model};

use crate::common::{commit_manifest, load, num, write_text, AttackArgs, ModelArgs};
use crate::manifest::Manifest;
use crate::Failure;

#[derive(Args, Debug)]
pub struct AttackCmd {
    #[command(flatten)]
    model: ModelArgs,

    #[command(flatten)]
    attack: AttackArgs,

    /// Per-example CSV (a table with one row per budget for jsma).
    #[arg(long)]
    out: PathBuf,

    /// PNG grid of the first clean images, adversarial images and
    /// perturbations (mid-grey = unchanged).
    #[arg(long)]
    images: Option<PathBuf>,
}

pub fn attack(args: AttackCmd) -> Result<(), Failure> {
    let mut l = load(&args.model, "attack")?;
    let spec = args.attack.spec()?;
    args.attack.record(&mut l.manifest);
    let header = commit_manifest(&mut l.manifest, &args.out)?;
    let clf = l.model.fast_classifier();
    if let AttackFamily::Jsma { .. } = spec.family {
        if args.attack.gamma.is_empty() {
            return Err(Failure::Usage("jsma needs --gamma".into()));
        }
        let table = jsma_table(clf.as_ref(), &l.set, l.set.len(), &args.attack.gamma)?;
        for r in &table.rows {
            eprintln!(
                "gamma {:.4}  asr {:.2}%  pert {:.3}%  s-pert {:.3}%",
                r.gamma,
                100.0 * r.asr,
                100.0 * r.pert_rate,
                100.0 * r.success_pert_rate
            );
        }
        return write_text(&args.out, &jsma_table_to_csv(&table, &header)?);
    }
    let linear = l.model.as_linear().ok();
    if matches!(spec.family, AttackFamily::TopWeightPixel { .. }) && linear.is_none() {
        return Err(Failure::Usage("top-weight-pixel needs a linear model".into()));
    }
    let results = run_attack(clf.as_ref(), &spec, &l.set.xs, &l.set.labels, linear)?;
    let mut csv = header;
    csv.push_str("index,label,success,l2,l2_fraction,features_changed,zero_gradient\n");
    for (i, r) in results.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{},{}",
            l.set.labels[i], r.success, r.l2, r.l2_fraction, r.features_changed, r.zero_gradient
        );
    }
    write_text(&args.out, &csv)?;
    let succ: Vec<_> = results.iter().filter(|r| r.success).collect();
    let err = succ.len() as f64 / results.len() as f64;
    let mean_l2 = succ.iter().map(|r| r.l2).sum::<f64>() / succ.len().max(1) as f64;
    eprintln!(
        "{}: accuracy {:.4}  error {:.2}%  mean L2 {:.4} over {} successes",
        spec.family.tag(),
        1.0 - err,
        100.0 * err,
        mean_l2,
        succ.len()
    );
    if let Some(path) = &args.images {
        let shape = l.image_shape();
        let mut tiles = Vec::new();
        for (i, r) in results.iter().take(8).enumerate() {
            let x = l.set.xs.row(i);
            let delta: Vec<f64> = r.x_adv.iter().zip(x).map(|(a, b)| a - b).collect();
            tiles.push(x.to_vec());
            tiles.push(r.x_adv.clone());
            tiles.push(perturbation_to_unit(&delta));
        }
        write_png(path, &image_grid(&tiles, shape, 3)?)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SweepCmd {
    #[command(flatten)]
    model: ModelArgs,

    #[command(flatten)]
    attack: AttackArgs,

    /// `start:stop:step` or a comma-separated list (fractions allowed).
    #[arg(long)]
    grid: String,

    /// Stop after the first point with zero accuracy.
    #[arg(long)]
    stop_at_zero: bool,

    #[arg(long)]
    out: PathBuf,
}

pub fn sweep_cmd(args: SweepCmd) -> Result<(), Failure> {
    let grid = parse_grid(&args.grid)?;
    let mut l = load(&args.model, "sweep")?;
    let spec = args.attack.spec()?;
    args.attack.record(&mut l.manifest);
    l.manifest.push("grid", &args.grid);
    l.manifest.push("stop_at_zero", args.stop_at_zero);
    let header = commit_manifest(&mut l.manifest, &args.out)?;
    let clf = l.model.fast_classifier();
    let curve = sweep(clf.as_ref(), l.model.as_linear().ok(), &spec, &l.set, &grid, args.stop_at_zero)?;
    for p in &curve.points {
        eprintln!("{:>10.5}  accuracy {:.4}  mean L2 {:.4}", p.param, p.accuracy, p.mean_l2);
    }
    write_text(&args.out, &sweep_to_csv(&curve, &header)?)
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoolMode {
    /// One fooling image per class by iterative descent.
    Single,
    /// Single-step success rate and margin over an eps grid.
    Sweep,
}

#[derive(Args, Debug)]
pub struct FoolCmd {
    #[command(flatten)]
    model: ModelArgs,

    #[arg(long, value_enum, default_value = "single")]
    mode: FoolMode,

    #[arg(long, default_value_t = 50)]
    steps: usize,

    #[arg(long, default_value = "5e-3", value_parser = num)]
    step_size: f64,

    /// Sweep grid (default: 0..64 then every 8 up to 255, in 1/255 units).
    #[arg(long)]
    grid: Option<String>,

    /// Uniform noise images per sweep point.
    #[arg(long, default_value_t = 1000)]
    samples: usize,

    /// Count success when the target probability exceeds this instead of
    /// requiring the argmax.
    #[arg(long, value_parser = num)]
    threshold: Option<f64>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory (single) or CSV path (sweep).
    #[arg(long)]
    out: PathBuf,
}

pub fn fool(args: FoolCmd) -> Result<(), Failure> {
    let mut l = load(&args.model, "fool")?;
    for (k, v) in [
        ("mode", format!("{:?}", args.mode)),
        ("steps", args.steps.to_string()),
        ("step_size", args.step_size.to_string()),
        ("samples", args.samples.to_string()),
        ("threshold", format!("{:?}", args.threshold)),
        ("seed", args.seed.to_string()),
    ] {
        l.manifest.push(k, v);
    }
    let clf = l.model.fast_classifier();
    match args.mode {
        FoolMode::Sweep => {
            let grid = match &args.grid {
                Some(g) => parse_grid(g)?,
                None => default_fooling_grid(),
            };
            let header = commit_manifest(&mut l.manifest, &args.out)?;
            let pts = fooling_asr_sweep(clf.as_ref(), &grid, args.samples, args.threshold, args.seed)?;
            for p in &pts {
                eprintln!("eps {:>7.2}/255  asr {:.4}  margin {:.4}", p.eps * 255.0, p.asr, p.margin);
            }
            write_text(&args.out, &fooling_to_csv(&pts, &header)?)
        }
        FoolMode::Single => {
            let csv_path = args.out.join("confidences.csv");
            let mut csv = commit_manifest(&mut l.manifest, &csv_path)?;
            csv.push_str("target,initial_prob,final_prob\n");
            let mut images = Vec::new();
            for t in 0..clf.num_classes() {
                let tr = fooling_ascent(clf.as_ref(), t, args.steps, args.step_size, example_seed(args.seed, t))?;
                let (a, b) = (tr.probs[0], *tr.probs.last().expect("initial probability"));
                eprintln!("target {t}: {a:.4} -> {b:.4}");
                let _ = writeln!(csv, "{t},{a},{b}");
                images.push(tr.image);
            }
            write_text(&csv_path, &csv)?;
            write_png(&args.out.join("fooling.png"), &image_grid(&images, l.image_shape(), 5)?)?;
            Ok(())
        }
    }
}

#[derive(Args, Debug)]
pub struct ExportCmd {
    #[arg(long)]
    model: PathBuf,

    /// PGM for the logistic weights, PNG for the first conv layer.
    #[arg(long)]
    out: PathBuf,

    /// Export the sign of every weight instead of its value.
    #[arg(long)]
    sign: bool,
}

pub fn export(args: ExportCmd) -> Result<(), Failure> {
    let (model, _) = load_model(&args.model)?;
    let mut m = Manifest::new("export-weights");
    m.push_file("model", &args.model)?;
    m.push("sign", args.sign);
    commit_manifest(&mut m, &args.out)?;
    let sign = |v: f64| if !args.sign { v } else { v.signum() * (v != 0.0) as u8 as f64 };
    match &model {
        Model::Linear(lin) => {
            let w: Vec<f64> = lin.w().data().iter().map(|&v| sign(v)).collect();
            if w.len() != 784 {
                return Err(Failure::Usage(format!("expected 784 weights, got {}", w.len())));
            }
            export_weight_image(&w, 28, 28, &args.out)?;
        }
        Model::Conv(net) => {
            let k = net.params().conv[0].map(sign);
            write_png(&args.out, &conv1_filter_grid(&k, 8)?)?;
        }
    }
    Ok(())
}
