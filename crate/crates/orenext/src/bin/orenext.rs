//! Thin command line over the library: dataset generation, training,
//! evaluation, gradient verification, MAC benchmarking, and inference.
//!
//! Config files are TOML; every field has a default, so an empty file is a
//! valid config. `--seed` overrides whatever seed a config carries.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use orenext::backbone::{stone_block_forward, StoneBlockParams};
use orenext::fpn::{sparse_mlp_forward, SparseMLPParams};
use orenext::harness::{
    eval_ap50, infer_scene, load_checkpoint, save_checkpoint, scene_gt, train_loop, TrainConfig,
};
use orenext::synth::io::{read_ann, read_dataset, read_pgm, write_dataset, write_pgm};
use orenext::synth::{generate_dataset, SceneSpec};
use orenext::tensor::Tensor4;
use orenext::{verify, Error, Result};

#[derive(Parser)]
#[command(
    name = "orenext",
    about = "Axial-shift MLP instance segmentation: synthetic data, training, evaluation.",
    version
)]
struct Cli {
    /// Override the seed found in any config or spec file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic ellipse dataset from a TOML scene spec.
    GenData { spec_file: PathBuf, out_dir: PathBuf },
    /// Train on a generated dataset and write a checkpoint plus loss trace.
    Train { config_file: PathBuf, data_dir: PathBuf, out_dir: PathBuf },
    /// Evaluate a checkpoint on a dataset (AP50 over boxes and masks).
    Eval { checkpoint: PathBuf, data_dir: PathBuf },
    /// Run the finite-difference gradient suite; nonzero exit on failure.
    Gradcheck,
    /// Print instrumented MAC counts next to the closed-form formulas.
    Bench,
    /// Run a checkpoint on one PGM image; instance boxes are read from the
    /// sibling `.ann` file (there is no proposal stage).
    Infer { checkpoint: PathBuf, image: PathBuf, out_prefix: String },
}

/// `gen-data` spec file: a scene spec plus the number of scenes.
#[derive(serde::Deserialize)]
#[serde(default)]
struct GenSpec {
    count: u64,
    #[serde(flatten)]
    scene: SceneSpec,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec { count: 8, scene: SceneSpec::default() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::GenData { spec_file, out_dir } => {
            let mut spec: GenSpec = parse_toml(&spec_file)?;
            if let Some(seed) = cli.seed {
                spec.scene.seed = seed;
            }
            let scenes = generate_dataset(&spec.scene, spec.count)?;
            let manifest = write_dataset(&scenes, &spec.scene, &out_dir)?;
            let instances: usize = scenes.iter().map(|s| s.instances.len()).sum();
            println!(
                "wrote {} scenes ({} instances) to {}",
                scenes.len(),
                instances,
                manifest.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Train { config_file, data_dir, out_dir } => {
            let mut cfg: TrainConfig = parse_toml(&config_file)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let (_, scenes) = read_dataset(&data_dir)?;
            let outcome = train_loop(&scenes, &cfg)?;
            fs::create_dir_all(&out_dir)?;
            let ckpt = out_dir.join("model.ornx");
            save_checkpoint(&ckpt, &cfg.model, &outcome.params)?;
            let mut trace = String::from("step lr total cls ploc coarse pmat\n");
            for t in &outcome.trace {
                trace.push_str(&format!(
                    "{} {} {} {} {} {} {}\n",
                    t.step + 1,
                    t.lr,
                    t.loss.total,
                    t.loss.l_cls_b,
                    t.loss.l_ploc_b,
                    t.loss.l_coarse_m,
                    t.loss.l_pmat_m
                ));
            }
            fs::write(out_dir.join("trace.txt"), trace)?;
            let first = outcome.trace.first().expect("at least one step");
            let last = outcome.trace.last().expect("at least one step");
            println!(
                "trained {} steps on {} scenes: loss {} -> {}",
                outcome.trace.len(),
                scenes.len(),
                first.loss.total,
                last.loss.total
            );
            println!("checkpoint {}", ckpt.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Eval { checkpoint, data_dir } => {
            let (mc, params) = load_checkpoint(&checkpoint)?;
            let (_, scenes) = read_dataset(&data_dir)?;
            let mut preds = Vec::with_capacity(scenes.len());
            let mut gts = Vec::with_capacity(scenes.len());
            for scene in &scenes {
                let boxes: Vec<_> = scene.instances.iter().map(|a| a.box_).collect();
                preds.push(infer_scene(&params, &mc, &scene.image_tensor(), &boxes)?);
                gts.push(scene_gt(scene));
            }
            let r = eval_ap50(&preds, &gts)?;
            println!("scenes {}", scenes.len());
            println!("ground_truth {}", gts.iter().map(Vec::len).sum::<usize>());
            println!("predictions {}", preds.iter().map(Vec::len).sum::<usize>());
            println!("ap50_box {}", r.ap50_box);
            println!("ap50_mask {}", r.ap50_mask);
            let mean = |ious: &[Vec<f64>]| -> f64 {
                let all: Vec<f64> = ious.iter().flatten().copied().collect();
                if all.is_empty() { 0.0 } else { all.iter().sum::<f64>() / all.len() as f64 }
            };
            println!("mean_box_iou {}", mean(&r.box_ious));
            println!("mean_mask_iou {}", mean(&r.mask_ious));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Gradcheck => {
            let reports = verify::run_all(cli.seed.unwrap_or(1234))?;
            for r in &reports {
                println!("{r}");
            }
            if verify::all_passed(&reports) {
                println!("gradcheck: all {} operations passed", reports.len());
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("gradcheck: FAILED");
                Ok(ExitCode::FAILURE)
            }
        }
        Cmd::Bench => bench(),
        Cmd::Infer { checkpoint, image, out_prefix } => {
            let (mc, params) = load_checkpoint(&checkpoint)?;
            let bytes = fs::read(&image)?;
            let name = image.display().to_string();
            let (w, h, pixels) = read_pgm(&bytes, &name)?;
            if (h, w) != (mc.image_h, mc.image_w) {
                return Err(Error::config(format!(
                    "image is {h}x{w} but the checkpoint was trained at {}x{}",
                    mc.image_h, mc.image_w
                )));
            }
            let ann_path = image.with_extension("ann");
            let ann_text = fs::read_to_string(&ann_path).map_err(|_| {
                Error::config(format!(
                    "no annotation file {}: inference takes instance boxes from the \
                     sibling .ann file (there is no proposal stage)",
                    ann_path.display()
                ))
            })?;
            let (_, ah, aw, instances) = read_ann(&ann_text, &ann_path.display().to_string())?;
            if (ah, aw) != (h, w) {
                return Err(Error::config(format!(
                    "annotation grid {ah}x{aw} does not match the {h}x{w} image"
                )));
            }
            let img = Tensor4::from_fn(1, 3, h, w, |_, _, i, j| {
                f64::from(pixels[i * w + j]) / 255.0
            });
            let boxes: Vec<_> = instances.iter().map(|a| a.box_).collect();
            let preds = infer_scene(&params, &mc, &img, &boxes)?;
            let mut overlay = pixels.clone();
            for (k, p) in preds.iter().enumerate() {
                let mask_bytes: Vec<u8> =
                    p.mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
                let path = format!("{out_prefix}_mask_{k}.pgm");
                fs::write(&path, write_pgm(w, h, &mask_bytes))?;
                println!("instance {k} score {} pixels {} -> {path}", p.score, p.mask.area());
                for (o, &m) in overlay.iter_mut().zip(&p.mask.data) {
                    if m {
                        *o = 255;
                    }
                }
            }
            let overlay_path = format!("{out_prefix}_overlay.pgm");
            fs::write(&overlay_path, write_pgm(w, h, &overlay))?;
            println!("overlay -> {overlay_path}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Forward passes with the MAC counter on, next to the closed-form counts
/// they must equal: 4·h·w·c² per backbone block (expansion ratio 1) and
/// h·w·c·(h+w) + 3·h·w·c² per three-branch mixing block.
fn bench() -> Result<ExitCode> {
    let mut state = 42u64;
    let mut rng = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut ok = true;

    println!("{:<16} {:>4} {:>4} {:>4} {:>12} {:>12}", "block", "c", "h", "w", "counted", "formula");
    for &(c, h, w) in &[(48usize, 8usize, 8usize), (6, 4, 5), (12, 6, 3), (24, 2, 9), (9, 7, 2)] {
        let x = Tensor4::from_fn(1, c, h, w, |_, _, _, _| rng() * 2.0 - 1.0);
        let p = StoneBlockParams::init(c, 3, 1, &mut rng);
        let (_, cache) = stone_block_forward(&x, &p)?;
        let formula = 4 * (h * w * c * c) as u64;
        ok &= cache.macs == formula;
        println!("{:<16} {c:>4} {h:>4} {w:>4} {:>12} {formula:>12}", "shift_mix", cache.macs);
    }
    for &(c, h, w) in &[(16usize, 8usize, 8usize), (5, 3, 4), (8, 7, 7), (11, 2, 6), (3, 9, 5)] {
        let x = Tensor4::from_fn(1, c, h, w, |_, _, _, _| rng() * 2.0 - 1.0);
        let p = SparseMLPParams::init(c, h, w, &mut rng);
        let (_, cache) = sparse_mlp_forward(&x, &p)?;
        let formula = (h * w * c * (h + w) + 3 * h * w * c * c) as u64;
        ok &= cache.macs == formula;
        println!("{:<16} {c:>4} {h:>4} {w:>4} {:>12} {formula:>12}", "three_branch", cache.macs);
    }
    if ok {
        println!("bench: all counters equal their formulas");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("bench: counter/formula mismatch");
        Ok(ExitCode::FAILURE)
    }
}
