use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::config::{
    load_run_file, render_run_file, DataArgs, ModelChoice, PhantomSpec, RunArgs, DEFAULT_IMAGE_SIZE, SMOKE_EPOCHS,
    SMOKE_PHANTOM,
};
use super::{EvaluateArgs, ReportArgs, TrainArgs, TranslateArgs};
use crate::datapipe::{
    extract_slices, grid, load_prepared, make_phantom_dataset_split, read_nifti, read_pgm, resize_image, split_by_volume,
    split_dataset, standardize, to_tensor, write_pgm16, write_prepared, DomainTag, GrayImage, Provenance,
    SliceDataset, SliceImage, SlicePolicy, MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::evalmetrics::{evaluate_cycle, evaluate_synthesis, format_report, Direction, MetricsReport, Stat};
use crate::gantrain::{load_checkpoint, train as run_training, translate_cycle, TrainData, TrainState, HISTORY_FILE};
use crate::nncore::Tensor4;

const RUN_FILE: &str = "run.toml";
const REPORT_CSV: &str = "report.csv";
const REPORT_TXT: &str = "report.txt";
/// Rows of input | translated | reconstructed written by `evaluate`.
const TRIPTYCH_ROWS: usize = 4;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Attach the offending file name to errors that do not already carry it.
fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { .. } => e,
        other => Error::Dataset(format!("{}: {other}", path.display())),
    }
}

/// Source (3T) and target (1.5T) datasets; either may be absent.
struct Domains {
    x: Option<SliceDataset>,
    y: Option<SliceDataset>,
}

impl Domains {
    fn get(&self, domain: DomainTag) -> Result<&SliceDataset> {
        let ds = match domain {
            DomainTag::Source3T => &self.x,
            _ => &self.y,
        };
        ds.as_ref().ok_or_else(|| Error::Dataset(format!("no {domain} images were supplied")))
    }

    fn iter(&self) -> impl Iterator<Item = &SliceDataset> {
        self.x.iter().chain(self.y.iter())
    }

    fn resized(self, size: usize) -> Self {
        let fix = |ds: Option<SliceDataset>| {
            ds.map(|mut d| {
                let needs = d.train.iter().chain(&d.test).any(|i| i.height != size || i.width != size);
                if needs {
                    log::warn!("resizing {} images to {size}x{size}", d.domain);
                    let r = |v: Vec<SliceImage>| v.iter().map(|i| resize_image(i, size)).collect();
                    d.train = r(d.train);
                    d.test = r(d.test);
                }
                d
            })
        };
        Domains { x: fix(self.x), y: fix(self.y) }
    }
}

/// Apply the run file and the smoke preset beneath the command-line flags.
fn layered(run: RunArgs, data: DataArgs) -> Result<(RunArgs, DataArgs, super::config::RunFile)> {
    let file = load_run_file(run.config.as_deref())?;
    let run = run.or(file.run.clone());
    let mut data = data.or(file.data.clone());
    if data.phantom_smoke {
        data = data.or(DataArgs { phantom: Some(SMOKE_PHANTOM), ..Default::default() });
    }
    Ok((run, data, file))
}

fn read_domain_dir(dir: &Path, domain: DomainTag, per_volume: usize, size: usize) -> Result<Vec<SliceImage>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("nii") => {
                let vol = read_nifti(&path).map_err(|e| in_file(&path, e))?;
                let count = per_volume.min(vol.slice_count());
                if count < per_volume {
                    log::warn!("{}: only {count} slices available", path.display());
                }
                let slices = extract_slices(&vol, count, SlicePolicy::CenteredUniform, domain).map_err(|e| in_file(&path, e))?;
                out.extend(slices.iter().map(|s| standardize(s, size)));
            }
            Some("pgm") => {
                let img = read_pgm(&path)?;
                let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let slice = SliceImage::from_gray(img, Provenance { source_id: id, slice_index: 0 }, domain);
                out.push(standardize(&slice, size));
            }
            _ => log::debug!("skipping {}", path.display()),
        }
    }
    if out.is_empty() {
        return Err(Error::Dataset(format!("no volumes found in {}", dir.display())));
    }
    Ok(out)
}

fn load_domains(run: &RunArgs, data: &DataArgs, allow_prepared: bool) -> Result<Domains> {
    if let Some(dir) = &data.data_dir {
        if !allow_prepared {
            return Err(Error::Config("prepare reads raw inputs; --data names an already prepared dataset".into()));
        }
        if !dir.join(MANIFEST_FILE).is_file() {
            return Err(Error::Dataset(format!("{}: no {MANIFEST_FILE} found", dir.display())));
        }
        let optional = |domain| match load_prepared(dir, domain) {
            Ok(ds) => Ok(Some(ds)),
            Err(Error::Dataset(_)) => Ok(None),
            Err(e) => Err(e),
        };
        return Ok(Domains { x: optional(DomainTag::Source3T)?, y: optional(DomainTag::Target1p5T)? });
    }
    let fraction = data.train_fraction()?;
    if let Some(PhantomSpec { n, size, seed }) = data.phantom {
        let phantoms = |domain| make_phantom_dataset_split(n, size, domain, seed, fraction);
        return Ok(Domains { x: Some(phantoms(DomainTag::Source3T)?), y: Some(phantoms(DomainTag::Target1p5T)?) });
    }
    if data.source_dir.is_none() && data.target_dir.is_none() {
        return Err(Error::Config("no input: give --source-dir/--target-dir, --phantom, --phantom-smoke or --data".into()));
    }
    let size = run.image_size.unwrap_or(DEFAULT_IMAGE_SIZE);
    let load = |dir: &Option<PathBuf>, domain| -> Result<Option<SliceDataset>> {
        let Some(dir) = dir else { return Ok(None) };
        let slices = read_domain_dir(dir, domain, data.slices_per_volume(), size)?;
        let split = if data.by_volume { split_by_volume } else { split_dataset };
        split(slices, fraction, run.seed()).map(Some)
    };
    Ok(Domains { x: load(&data.source_dir, DomainTag::Source3T)?, y: load(&data.target_dir, DomainTag::Target1p5T)? })
}

pub fn prepare(run: RunArgs, data: DataArgs) -> Result<()> {
    let (run, data, _) = layered(run, data)?;
    let mut domains = load_domains(&run, &data, false)?;
    if let Some(size) = run.image_size {
        domains = domains.resized(size);
    }
    let out = run.output_dir();
    create_dir(&out)?;
    let sets: Vec<&SliceDataset> = domains.iter().collect();
    let rows = write_prepared(&out, &sets)?;
    for ds in &sets {
        println!("{}: train {}, test {}", ds.domain, ds.train.len(), ds.test.len());
    }
    println!("wrote {} slices to {}", rows.len(), out.join(MANIFEST_FILE).display());
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<()> {
    let (run, data, file) = layered(args.run, args.data)?;
    let model = args
        .model
        .or(file.model)
        .ok_or_else(|| Error::Config("--model is required (cyclegan, dcgan-1.5t or dcgan-3t)".into()))?;
    let mut hyper = args.hyper.or(file.hyper);
    if data.phantom_smoke {
        hyper.epochs = hyper.epochs.or(Some(SMOKE_EPOCHS));
    }
    let domains = load_domains(&run, &data, true)?;
    let size = run
        .image_size
        .or(data.phantom.map(|p| p.size))
        .unwrap_or_else(|| model.default_image_size());
    let domains = domains.resized(size);
    let out = run.output_dir();
    create_dir(&out)?;

    let resume = args.resume.as_deref().map(load_checkpoint).transpose()?;
    let cfg = match &resume {
        // the checkpoint fixes the architecture; only the schedule may be extended
        Some(ck) => {
            let mut c = ck.config.clone();
            c.epochs = hyper.epochs.unwrap_or(c.epochs);
            c.max_steps = hyper.max_steps.or(c.max_steps);
            c
        }
        None => hyper.to_config(run.seed(), size),
    };
    write_text(&out.join(RUN_FILE), &render_run_file(model, &data, &cfg, &out)?)?;

    let train_data = match model {
        ModelChoice::CycleGan => TrainData::CycleGan {
            x: &domains.get(DomainTag::Source3T)?.train,
            y: &domains.get(DomainTag::Target1p5T)?.train,
        },
        ModelChoice::Dcgan1p5T => TrainData::Dcgan { real: &domains.get(DomainTag::Target1p5T)?.train },
        ModelChoice::Dcgan3T => TrainData::Dcgan { real: &domains.get(DomainTag::Source3T)?.train },
    };
    match run_training(train_data, &cfg, &out, resume) {
        Ok(history) => {
            println!(
                "{}: {} steps; history {}; final checkpoint {}",
                model.as_str(),
                history.rows.len(),
                out.join(HISTORY_FILE).display(),
                history.final_checkpoint.display()
            );
            Ok(())
        }
        Err(e @ Error::Divergence { .. }) => {
            eprintln!("history so far kept in {}", out.join(HISTORY_FILE).display());
            Err(e)
        }
        Err(e) => Err(e),
    }
}

fn collect_pgms(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| Error::io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::Dataset("no .pgm inputs found".into()));
    }
    Ok(files)
}

fn plane_image(t: &Tensor4<f32>, n: usize) -> GrayImage {
    GrayImage {
        width: t.width(),
        height: t.height(),
        pixels: t.sample(n)[..t.plane_len()].iter().map(|&v| v as f64).collect(),
    }
}

/// One triptych row per image: input | translated | reconstructed.
fn triptychs(g: &crate::models::NetworkState<f32>, f: &crate::models::NetworkState<f32>, images: &[SliceImage], forward: bool) -> Result<(Vec<GrayImage>, GrayImage)> {
    let refs: Vec<&SliceImage> = images.iter().collect();
    let input = to_tensor::<f32>(&refs)?;
    let (translated, reconstructed) = translate_cycle(g, f, &input, forward)?;
    let mut tiles = Vec::with_capacity(3 * images.len());
    for k in 0..images.len() {
        tiles.push(plane_image(&input, k));
        tiles.push(plane_image(&translated, k));
        tiles.push(plane_image(&reconstructed, k));
    }
    let sheet = grid(&tiles, 3)?;
    Ok((tiles, sheet))
}

pub fn translate(args: TranslateArgs) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let TrainState::CycleGan(state) = &ck.state else {
        return Err(Error::Config(format!(
            "{} holds a {} run; translate needs a cyclegan checkpoint",
            args.checkpoint.display(),
            ck.state.kind()
        )));
    };
    let size = ck.config.image_size;
    let forward = Direction::from(args.direction) == Direction::Forward;
    let domain = if forward { DomainTag::Source3T } else { DomainTag::Target1p5T };
    create_dir(&args.out)?;
    for path in collect_pgms(&args.inputs)? {
        let gray = read_pgm(&path)?;
        if gray.width != size || gray.height != size {
            log::warn!("{}: {}x{} resized to the model's {size}x{size}", path.display(), gray.width, gray.height);
        }
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
        let slice = SliceImage::from_gray(gray, Provenance { source_id: stem.clone(), slice_index: 0 }, domain);
        let (tiles, sheet) = triptychs(&state.g, &state.f, &[standardize(&slice, size)], forward)?;
        for (suffix, img) in [("translated", &tiles[1]), ("reconstructed", &tiles[2]), ("triptych", &sheet)] {
            let file = args.out.join(format!("{stem}_{suffix}.pgm"));
            write_pgm16(&file, img)?;
            println!("{}", file.display());
        }
    }
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let (run, data, file) = layered(args.run, args.data)?;
    let ck = load_checkpoint(&args.checkpoint)?;
    let domains = load_domains(&run, &data, true)?;
    let out = run.output_dir();
    let seed = run.seed();
    let model = args.model.or(file.model);
    let reports = match (&ck.state, model) {
        (TrainState::CycleGan(s), None | Some(ModelChoice::CycleGan)) => {
            let domains = domains.resized(ck.config.image_size);
            let mut reports = Vec::new();
            create_dir(&out)?;
            for (direction, domain, label, name) in [
                (Direction::Forward, DomainTag::Source3T, "CycleGAN 3T to 1.5T", "forward"),
                (Direction::Backward, DomainTag::Target1p5T, "CycleGAN 1.5T to 3T", "backward"),
            ] {
                let test = &domains.get(domain)?.test;
                reports.push(evaluate_cycle(&s.g, &s.f, test, direction, args.n, seed, label)?);
                let shown = &test[..test.len().min(TRIPTYCH_ROWS)];
                let (_, sheet) = triptychs(&s.g, &s.f, shown, direction == Direction::Forward)?;
                write_pgm16(out.join(format!("triptych_{name}.pgm")), &sheet)?;
            }
            reports
        }
        (TrainState::Dcgan(s), Some(m @ (ModelChoice::Dcgan1p5T | ModelChoice::Dcgan3T))) => {
            let (domain, label) = match m {
                ModelChoice::Dcgan1p5T => (DomainTag::Target1p5T, "DCGAN 1.5T"),
                _ => (DomainTag::Source3T, "DCGAN 3T"),
            };
            vec![evaluate_synthesis(&s.g, &domains.get(domain)?.test, args.n, seed, label)?]
        }
        (TrainState::Dcgan(_), None) => {
            return Err(Error::Config("a dcgan checkpoint needs --model dcgan-1.5t or dcgan-3t".into()));
        }
        (state, Some(m)) => {
            return Err(Error::Config(format!("{} holds a {} run, not {}", args.checkpoint.display(), state.kind(), m.as_str())));
        }
    };
    let (text, csv) = format_report(&reports);
    create_dir(&out)?;
    write_text(&out.join(REPORT_CSV), &csv)?;
    write_text(&out.join(REPORT_TXT), &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Deserialize)]
struct ReportRow {
    model: String,
    mae_mean: Option<f64>,
    mae_sd: Option<f64>,
    mse_mean: Option<f64>,
    mse_sd: Option<f64>,
    psnr_mean: Option<f64>,
    psnr_sd: Option<f64>,
    n: usize,
    n_infinite_psnr: usize,
    mae_mean_per_pixel: Option<f64>,
}

fn stat(mean: Option<f64>, sd: Option<f64>) -> Option<Stat> {
    Some(Stat::new(mean?, sd?))
}

fn read_report_csv(path: &Path) -> Result<Vec<MetricsReport>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    reader
        .deserialize::<ReportRow>()
        .map(|row| {
            let r = row.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            let mae = stat(r.mae_mean, r.mae_sd);
            // recover the pixel count from the per-pixel column
            let pixel_count = match (mae, r.mae_mean_per_pixel) {
                (Some(m), Some(pp)) if pp > 0.0 => (m.mean / pp).round() as usize,
                _ => 0,
            };
            Ok(MetricsReport {
                model_label: r.model,
                n_samples: r.n,
                mae,
                mse: stat(r.mse_mean, r.mse_sd),
                psnr: stat(r.psnr_mean, r.psnr_sd),
                n_infinite_psnr: r.n_infinite_psnr,
                pixel_count,
                samples: Vec::new(),
            })
        })
        .collect()
}

pub fn report(args: ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for path in &args.inputs {
        if !path.is_file() {
            return Err(Error::Dataset(format!("{}: no such report", path.display())));
        }
        reports.extend(read_report_csv(path)?);
    }
    let (text, csv) = format_report(&reports);
    if let Some(out) = &args.out {
        write_text(out, &csv)?;
    }
    print!("{text}");
    Ok(())
}
