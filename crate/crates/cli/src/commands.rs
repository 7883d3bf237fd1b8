use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use spad_core::dataset::{
    load_split, read_manifest, synthesize_pair, write_dataset, CleanSequence, DatasetManifest, Provenance,
    SeqDims, SourceSpec, Split,
};
use spad_core::inference::{self, RestoreOptions};
use spad_core::metrics::{self, SsimConfig};
use spad_core::network::{load_checkpoint, save_checkpoint, Checkpoint, TrainState};
use spad_core::sensor::{detect_bit_level, BitLevel, HotPixelMode, HotPixelSpec};
use spad_core::video_io::{self, encode_pgm, Depth, PgmImage};
use spad_core::{rng, BitFrame, Frame};

use crate::config::RunConfig;
use crate::{ContactSheetArgs, DatasetArgs, DetectArgs, EvalArgs, RestoreArgs, SimulateArgs, TrainArgs};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DATA: u8 = 4;

/// Child-seed index reserved for hot-pixel placement.
const HOT_SEED_INDEX: u64 = u64::MAX;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(spad_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) if e.is_io() => EXIT_IO,
            CliError::Core(spad_core::Error::Image { .. }) => EXIT_IO,
            CliError::Core(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<spad_core::Error> for CliError {
    fn from(e: spad_core::Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(spad_core::Error::IoAt {
        path: path.to_path_buf(),
        source: e,
    })
}

fn log_resolved(what: &str, value: &impl Serialize) {
    match toml::to_string(value) {
        Ok(text) => log::info!("resolved {what} configuration:\n{}", text.trim_end()),
        Err(e) => log::warn!("could not render {what} configuration: {e}"),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn bit_level(bits: u8) -> Result<BitLevel> {
    BitLevel::new(bits).map_err(usage)
}

#[derive(Debug, Serialize)]
struct SimulateRecord {
    schema_version: u32,
    rng_algorithm: &'static str,
    clean_dir: PathBuf,
    bit_level: BitLevel,
    seed: u64,
    hot_pixels: HotPixelSpec,
    frames: usize,
    height: usize,
    width: usize,
}

fn mask_frame(mask: &BitFrame) -> Frame {
    mask.map(|&b| if b { 1.0 } else { 0.0 })
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let bits = bit_level(a.bits)?;
    let hot = HotPixelSpec::new(a.hot_density, rng::child_seed(a.seed, HOT_SEED_INDEX), a.hot_mode.into())
        .map_err(usage)?;
    let frames = video_io::read_source_frames(&a.clean_dir)?;
    let (height, width) = (frames[0].height(), frames[0].width());
    let record = SimulateRecord {
        schema_version: 1,
        rng_algorithm: rng::RNG_ALGORITHM,
        clean_dir: a.clean_dir.clone(),
        bit_level: bits,
        seed: a.seed,
        hot_pixels: hot,
        frames: frames.len(),
        height,
        width,
    };
    log_resolved("simulate", &record);
    let clean = CleanSequence::new(
        frames,
        Provenance {
            source: a.clean_dir.display().to_string(),
            origin: [0; 3],
        },
    )?;
    let pair = synthesize_pair(&clean, bits, &hot, &mut rng::stream(a.seed, 0))?;
    video_io::write_quantized(&a.out, &pair.input)?;
    write_file(&a.out.join("simulate.toml"), &toml::to_string(&record).map_err(usage)?)?;
    if hot.count(height, width) > 0 {
        let masks = match hot.mode {
            HotPixelMode::PerSequenceFixed => hot.masks(height, width, 1),
            HotPixelMode::PerFrameRandom => hot.masks(height, width, record.frames),
        };
        let frames: Vec<Frame> = masks.iter().map(mask_frame).collect();
        video_io::write_frames(&a.out.join("hot_mask"), &frames, Depth::Eight)?;
    }
    log::info!("wrote {} {bits} frames to {}", record.frames, a.out.display());
    Ok(())
}

pub fn dataset(a: DatasetArgs) -> Result<()> {
    let manifest = if let Some(path) = &a.manifest {
        read_manifest(path)?
    } else {
        let source = if a.synthetic {
            SourceSpec::SlowGradient
        } else if !a.sources.is_empty() {
            SourceSpec::Frames {
                directories: a.sources.clone(),
                downsample_factor: a.downsample,
            }
        } else {
            return Err(usage("pass --manifest, --synthetic or at least one --source"));
        };
        if a.test > a.count {
            return Err(usage(format!("--test {} exceeds --count {}", a.test, a.count)));
        }
        let [t, h, w] = a.dims;
        if t == 0 || h == 0 || w == 0 {
            return Err(usage("--dims must be positive"));
        }
        let hot = HotPixelSpec::new(a.hot_density, rng::child_seed(a.seed, HOT_SEED_INDEX), a.hot_mode.into())
            .map_err(usage)?;
        DatasetManifest::new(a.seed, source, SeqDims::new(t, h, w), a.count, a.test, bit_level(a.bits)?, hot)
            .map_err(usage)?
    };
    log_resolved("dataset", &manifest);
    let pairs = write_dataset(&a.out, &manifest)?;
    log::info!(
        "wrote {} sequences ({} train, {} test) to {}",
        pairs.len(),
        manifest.split.train,
        manifest.split.test,
        a.out.display()
    );
    Ok(())
}

fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step_{step:07}.ckpt"))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config).map_err(CliError::Usage)?;
    if let Some(d) = a.data {
        cfg.data = d;
    }
    if let Some(o) = a.out {
        cfg.out = o;
    }
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(lr) = a.lr {
        cfg.train.sgd.learning_rate = lr;
    }
    cfg.network.validate().map_err(usage)?;
    cfg.train.validate(&cfg.network).map_err(usage)?;
    log::info!("resolved train configuration:\n{}", cfg.to_toml().trim_end());

    let (manifest, pairs) = load_split(&cfg.data, Split::Train)?;
    if pairs.is_empty() {
        return Err(CliError::Core(spad_core::Error::Domain(format!(
            "{} has no training sequences",
            cfg.data.display()
        ))));
    }
    let state = match &a.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            ckpt.expect_config(&cfg.network)?;
            if ckpt.bit_level.is_some_and(|b| b != manifest.bit_level) {
                log::warn!(
                    "checkpoint was trained on {} data, dataset is {}",
                    ckpt.bit_level.expect("checked"),
                    manifest.bit_level
                );
            }
            log::info!("resuming from {} at step {}", path.display(), ckpt.step);
            TrainState {
                weights: ckpt.weights,
                optimizer: ckpt.optimizer.unwrap_or_default(),
                step: ckpt.step,
            }
        }
        None => TrainState::fresh(&cfg.network, &cfg.train)?,
    };
    let start = state.step;
    let ckpt_dir = cfg.out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| io_err(&ckpt_dir, e))?;
    write_file(&cfg.out.join("resolved.toml"), cfg.to_toml())?;
    let format = cfg.checkpoint_format.into();
    let to_checkpoint = |s: &TrainState| Checkpoint {
        config: cfg.network,
        weights: s.weights.clone(),
        step: s.step,
        bit_level: Some(manifest.bit_level),
        optimizer: Some(s.optimizer.clone()),
    };
    let outcome = spad_core::network::train(&pairs, &cfg.network, &cfg.train, state, |s| {
        let path = checkpoint_path(&ckpt_dir, s.step);
        save_checkpoint(&path, &to_checkpoint(s), format)?;
        log::info!("step {}: checkpoint {}", s.step, path.display());
        Ok(())
    })?;
    let final_path = cfg.out.join("final.ckpt");
    save_checkpoint(&final_path, &to_checkpoint(&outcome.state), format)?;

    let losses_path = cfg.out.join("losses.csv");
    let mut csv = if a.resume.is_some() && losses_path.exists() {
        fs::read_to_string(&losses_path).map_err(|e| io_err(&losses_path, e))?
    } else {
        String::from("step,loss\n")
    };
    for (i, l) in outcome.losses.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", start + i as u64 + 1));
    }
    write_file(&losses_path, &csv)?;
    if let Some(last) = outcome.losses.last() {
        log::info!("finished at step {} with loss {last:.6}", outcome.state.step);
    }
    println!("{}", final_path.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct RestoreRecord<'a> {
    checkpoint: &'a Path,
    input: &'a Path,
    out: &'a Path,
    tile: [usize; 3],
    overlap: [usize; 3],
    network: spad_core::network::NetworkConfig,
    step: u64,
}

pub fn restore(a: RestoreArgs) -> Result<()> {
    if a.tile.contains(&0) {
        return Err(usage("--tile extents must be positive"));
    }
    let ckpt = load_checkpoint(&a.checkpoint)?;
    log_resolved(
        "restore",
        &RestoreRecord {
            checkpoint: &a.checkpoint,
            input: &a.input,
            out: &a.out,
            tile: a.tile,
            overlap: a.overlap,
            network: ckpt.config,
            step: ckpt.step,
        },
    );
    let frames = video_io::read_frames(&a.input)?;
    let opts = RestoreOptions {
        tile: a.tile,
        overlap: a.overlap,
        model_bits: ckpt.bit_level,
    };
    let restored = inference::restore(&frames, &ckpt.weights, &ckpt.config, &opts)?;
    video_io::write_frames(&a.out, &restored, Depth::Sixteen)?;
    log::info!("wrote {} restored frames to {}", restored.len(), a.out.display());
    Ok(())
}

fn read_masks(path: &Path) -> Result<Vec<BitFrame>> {
    let frames = if path.is_dir() {
        video_io::read_frames(path)?
    } else {
        vec![video_io::read_source_frame(path)?]
    };
    Ok(frames.iter().map(|f| f.map(|&v| v > 0.5)).collect())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let reference = video_io::read_source_frames(&a.reference)?;
    let mut test = video_io::read_source_frames(&a.test)?;
    let masks = match (&a.hot_mask, a.auto_hot_mask) {
        (Some(p), _) => Some(read_masks(p)?),
        (None, true) => Some(vec![metrics::hot_mask_from_saturation(
            &test,
            metrics::SATURATION_THRESHOLD,
            metrics::MIN_SATURATION_FRAMES,
        )?]),
        (None, false) => None,
    };
    if let Some(masks) = masks {
        if masks.len() != 1 && masks.len() != test.len() {
            return Err(usage(format!(
                "{} hot masks for {} frames; pass one mask or one per frame",
                masks.len(),
                test.len()
            )));
        }
        let mut unfixed = 0;
        for (t, f) in test.iter_mut().enumerate() {
            let fix = metrics::median_hot_pixel_fix(f, &masks[t.min(masks.len() - 1)])?;
            unfixed += fix.unfixed.len();
            *f = fix.frame;
        }
        if unfixed > 0 {
            log::warn!("{unfixed} hot pixels had no unmasked neighbours and were left as is");
        }
    }
    let report = metrics::evaluate(&reference, &test, &SsimConfig::default())?;
    let json = serde_json::to_string_pretty(&report).map_err(usage)?;
    match &a.out {
        Some(path) => {
            write_file(path, &(json + "\n"))?;
            log::info!("report written to {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

pub fn detect_bits(a: DetectArgs) -> Result<()> {
    let frames = video_io::read_frames(&a.input)?;
    println!("{}", detect_bit_level(&frames)?.bits());
    Ok(())
}

pub fn contact_sheet(a: ContactSheetArgs) -> Result<()> {
    if a.columns == 0 || a.every == 0 || a.max_frames == 0 {
        return Err(usage("--columns, --every and --max-frames must be positive"));
    }
    let frames = video_io::read_source_frames(&a.input)?;
    let picked: Vec<&Frame> = frames.iter().step_by(a.every).take(a.max_frames).collect();
    let (h, w) = (picked[0].height(), picked[0].width());
    let cols = a.columns.min(picked.len());
    let rows = picked.len().div_ceil(cols);
    const GAP: usize = 2;
    let sheet_h = rows * h + (rows - 1) * GAP;
    let sheet_w = cols * w + (cols - 1) * GAP;
    let mut sheet = Frame::filled(sheet_h, sheet_w, 1.0);
    for (i, f) in picked.iter().enumerate() {
        let (oy, ox) = ((i / cols) * (h + GAP), (i % cols) * (w + GAP));
        for y in 0..h {
            for x in 0..w {
                sheet.set(oy + y, ox + x, f.get(y, x).clamp(0.0, 1.0));
            }
        }
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    write_file(&a.out, encode_pgm(&PgmImage::from_frame(&sheet, 255)))?;
    log::info!("{} frames tiled {cols} wide into {}", picked.len(), a.out.display());
    Ok(())
}
