mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zw3d::attack::{attack_catalog_seeded, apply_attack, Attack, AttackSpec};
use zw3d::corpus::{generate_clip, CorpusParams};
use zw3d::dibr::{synthesize_clip, BaselineConfig};
use zw3d::eval::{
    attacked_queries, ber_table, det_curve, pfn_table, score_queries, write_ber_csv, write_det_csv,
    write_pfn_csv, Channel,
};
use zw3d::frame::{FrameSequence, Role};
use zw3d::frameio::{load_clip, save_clip};
use zw3d::fusion::{
    calibrate_thresholds, feature_distance, fuse_scores, match_query, Calibration, MatchMode, Thresholds,
};
use zw3d::pipeline::{build_record, clip_features, identify};
use zw3d::pnm::{read_bitmap, write_bitmap};
use zw3d::registry::Registry;
use zw3d::vss::Watermark;
use zw3d::{Error, Result};

use config::CliConfig;

#[derive(Parser, Debug)]
#[command(name = "zw3d", version, about = "Zero-watermark copyright registration and identification for DIBR 3D video")]
struct Cli {
    /// Flat key = value configuration file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Registry file.
    #[arg(long, global = true)]
    db: Option<PathBuf>,
    /// Fusion weight.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Seed for every random choice (noise, frame replacement/dropping, corpus).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ClipArgs {
    /// Directory of 2D frames (frame_000000.ppm, ...).
    #[arg(long)]
    video: PathBuf,
    /// Directory of depth frames (frame_000000.pgm, ...).
    #[arg(long)]
    depth: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
struct ThresholdArgs {
    /// Thresholds CSV written by `calibrate`.
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[arg(long)]
    t_2d: Option<f64>,
    #[arg(long)]
    t_depth: Option<f64>,
    #[arg(long)]
    t_fusion: Option<f64>,
    /// False-positive target when thresholds are calibrated on the fly.
    #[arg(long)]
    target_pfp: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract features, build ownership shares and append a record.
    Register {
        #[arg(long)]
        id: String,
        #[command(flatten)]
        clip: ClipArgs,
        /// 40x40 PBM watermark for the 2D clip.
        #[arg(long)]
        wm_2d: PathBuf,
        /// 40x40 PBM watermark for the depth clip.
        #[arg(long)]
        wm_depth: PathBuf,
    },
    /// Find registered clips similar to the query; exits 1 when nothing matches.
    Query {
        #[command(flatten)]
        clip: ClipArgs,
        #[arg(long, default_value = "independent")]
        mode: MatchMode,
        #[command(flatten)]
        th: ThresholdArgs,
    },
    /// Recover both watermarks of a record from the query clip.
    Identify {
        #[command(flatten)]
        clip: ClipArgs,
        /// Record to identify against.
        #[arg(long, required_unless_present = "auto", conflicts_with = "auto")]
        id: Option<String>,
        /// Use the best match of a query instead of --id.
        #[arg(long)]
        auto: bool,
        #[arg(long, default_value = "fused")]
        mode: MatchMode,
        #[command(flatten)]
        th: ThresholdArgs,
        /// Directory for recovered_2d.pbm and recovered_depth.pbm.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Apply one attack to a clip.
    Attack {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// gb, af, mf, cc, cb, gt, gn, li, rs, cr, rt, fl, fr or fd.
        #[arg(long)]
        family: String,
        /// e.g. 9, -30, 0.6, 0.005, 64, 1/5, 10%, 45, horizontal, 5%.
        #[arg(long, allow_hyphen_values = true)]
        param: String,
        /// Load the input as a single-channel depth clip.
        #[arg(long)]
        depth_input: bool,
    },
    /// Render left and right views for each baseline.
    Dibr {
        #[command(flatten)]
        clip: ClipArgs,
        /// Baseline as a fraction of the frame width; repeatable.
        #[arg(long, default_values_t = [0.05, 0.07])]
        baseline: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        convergence: f64,
        /// Output directory; views go to left_<b> and right_<b> below it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate thresholds from distinct-record distances and write them as CSV.
    Calibrate {
        #[arg(long)]
        target_pfp: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// DET curve of attacked registered clips against distinct-record pairs.
    EvalDet {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, default_value = "fused")]
        channel: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean BER per attack and channel, and optionally P_fn at fixed thresholds.
    EvalBer {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-attack false-negative rates here.
        #[arg(long)]
        pfn_out: Option<PathBuf>,
        #[command(flatten)]
        th: ThresholdArgs,
    },
    /// Write synthetic clips with depth and watermarks.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        clips: usize,
        #[arg(long, default_value_t = 160)]
        size: usize,
        #[arg(long, default_value_t = 64)]
        frames: usize,
    },
    /// Print the effective configuration.
    ShowConfig,
}

#[derive(Args, Debug, Clone)]
struct EvalArgs {
    /// Corpus directory as written by gen-corpus; every clip must be registered.
    #[arg(long)]
    corpus: PathBuf,
    /// Restrict to these attacks, e.g. "GB 9"; repeatable. Default: all 26.
    #[arg(long = "attack")]
    attacks: Vec<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DuplicateId(_)
        | Error::InvalidAttack(_)
        | Error::MissingSeed(_)
        | Error::Config(_)
        | Error::InsufficientRecords(_)
        | Error::EmptyScores
        | Error::NegativeScore(_) => 2,
        Error::Io { .. }
        | Error::Format(_)
        | Error::MissingDirectory(_)
        | Error::NoFrames(_)
        | Error::FrameGap { .. }
        | Error::Corrupt(_)
        | Error::Locked(_)
        | Error::RegistryClosed
        | Error::ReadOnly => 3,
        Error::MixedDimensions { .. }
        | Error::UnsupportedBitDepth(_)
        | Error::EmptySequence
        | Error::Shape(_)
        | Error::LengthMismatch { .. }
        | Error::NonInformativeFeature
        | Error::MalformedShare { .. }
        | Error::FrameCountMismatch { .. } => 4,
        Error::UnknownId(_) => 5,
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(io_err(path))?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, buf).map_err(io_err(path))
}

fn load_pair(clip: &ClipArgs) -> Result<(FrameSequence, FrameSequence)> {
    Ok((load_clip(&clip.video, Role::TwoD)?, load_clip(&clip.depth, Role::Depth)?))
}

fn read_watermark(path: &Path) -> Result<Watermark> {
    Watermark::new(read_bitmap(path)?)
}

/// Thresholds from a CSV file or, failing that, calibrated on the registry;
/// explicit per-threshold values override either.
fn resolve_thresholds(cfg: &CliConfig, th: &ThresholdArgs, db: &Registry) -> Result<Thresholds> {
    let t_2d = th.t_2d.or(cfg.t_2d);
    let t_depth = th.t_depth.or(cfg.t_depth);
    let t_fusion = th.t_fusion.or(cfg.t_fusion);
    let mut base = if let (Some(a), Some(b), Some(c)) = (t_2d, t_depth, t_fusion) {
        Thresholds::new(a, b, c, cfg.gamma)?
    } else if let Some(path) = th.thresholds.as_ref().or(cfg.thresholds.as_ref()) {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut t = Calibration::read_thresholds_csv(&text)?;
        t.gamma = cfg.gamma;
        t
    } else {
        let target = th.target_pfp.unwrap_or(cfg.target_pfp);
        calibrate_thresholds(db, &[], target, cfg.gamma)?.thresholds
    };
    base.t_2d = t_2d.unwrap_or(base.t_2d);
    base.t_depth = t_depth.unwrap_or(base.t_depth);
    base.t_fusion = t_fusion.unwrap_or(base.t_fusion);
    base.validate()?;
    Ok(base)
}

fn corpus_inputs(dir: &Path) -> Result<Vec<(String, FrameSequence, FrameSequence)>> {
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.to_path_buf()));
    }
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if entry.path().is_dir() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    ids.into_iter()
        .map(|id| {
            let base = dir.join(&id);
            let video = load_clip(&base.join("video"), Role::TwoD)?;
            let depth = load_clip(&base.join("depth"), Role::Depth)?;
            Ok((id, video, depth))
        })
        .collect()
}

fn selected_attacks(cfg: &CliConfig, labels: &[String]) -> Result<Vec<AttackSpec>> {
    if labels.is_empty() {
        return Ok(attack_catalog_seeded(cfg.seed));
    }
    labels
        .iter()
        .map(|l| {
            let attack: Attack = l.parse()?;
            Ok(AttackSpec::new(attack, attack.is_stochastic().then_some(cfg.seed)))
        })
        .collect()
}

fn run(cli: Cli) -> Result<u8> {
    let mut cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    if let Some(db) = cli.db {
        cfg.db_path = db;
    }
    if let Some(g) = cli.gamma {
        cfg.gamma = g;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let mut out = io::stdout().lock();
    let stdout_err = |e: io::Error| Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };

    match cli.command {
        Command::Register {
            id,
            clip,
            wm_2d,
            wm_depth,
        } => {
            let w_2d = read_watermark(&wm_2d)?;
            let w_depth = read_watermark(&wm_depth)?;
            let mut db = Registry::open_writer(&cfg.db_path)?;
            if db.get(&id).is_ok() {
                return Err(Error::DuplicateId(id));
            }
            let (video, depth) = load_pair(&clip)?;
            let record = build_record(&id, clip_features(&video, &depth)?, w_2d, w_depth)?;
            let count = db.register(record)?;
            writeln!(out, "id,records\n{id},{count}").map_err(stdout_err)?;
        }
        Command::Query { clip, mode, th } => {
            let db = Registry::open(&cfg.db_path)?;
            let thresholds = resolve_thresholds(&cfg, &th, &db)?;
            let (video, depth) = load_pair(&clip)?;
            let q = clip_features(&video, &depth)?;
            let hits = match_query(&q.fn_2d, &q.fn_depth, &db, &thresholds, mode)?;
            writeln!(out, "id,d_2d,d_depth,d_fused,decision,mode").map_err(stdout_err)?;
            for h in &hits {
                writeln!(
                    out,
                    "{},{:.6e},{:.6e},{:.6e},{},{}",
                    h.id, h.d_2d, h.d_depth, h.d_fused, h.decision, h.mode
                )
                .map_err(stdout_err)?;
            }
            if hits.is_empty() {
                return Ok(1);
            }
        }
        Command::Identify {
            clip,
            id,
            auto,
            mode,
            th,
            out_dir,
        } => {
            let db = Registry::open(&cfg.db_path)?;
            // fail on an unknown id before the feature work
            if let Some(id) = &id {
                db.get(id)?;
            }
            let (video, depth) = load_pair(&clip)?;
            let q = clip_features(&video, &depth)?;
            let id = match (id, auto) {
                (Some(id), _) => id,
                (None, _) => {
                    let thresholds = resolve_thresholds(&cfg, &th, &db)?;
                    match match_query(&q.fn_2d, &q.fn_depth, &db, &thresholds, mode)?.first() {
                        Some(hit) => hit.id.clone(),
                        None => {
                            eprintln!("no registered clip matches the query");
                            return Ok(1);
                        }
                    }
                }
            };
            let ident = identify(&db.lookup_ownership(&id)?, &q, cfg.gamma)?;
            fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
            write_bitmap(&out_dir.join("recovered_2d.pbm"), ident.w_2d.bits())?;
            write_bitmap(&out_dir.join("recovered_depth.pbm"), ident.w_depth.bits())?;
            writeln!(
                out,
                "id,ber_2d,ber_depth,ber_fused\n{id},{:.4},{:.4},{:.4}",
                ident.ber_2d, ident.ber_depth, ident.ber_fused
            )
            .map_err(stdout_err)?;
        }
        Command::Attack {
            input,
            output,
            family,
            param,
            depth_input,
        } => {
            let attack = Attack::parse(&family, &param)?;
            let spec = AttackSpec::new(attack, attack.is_stochastic().then_some(cfg.seed));
            let role = if depth_input { Role::Depth } else { Role::TwoD };
            let attacked = apply_attack(&load_clip(&input, role)?, &spec)?;
            save_clip(&output, &attacked)?;
            writeln!(
                out,
                "attack,frames,width,height\n{},{},{},{}",
                spec.label(),
                attacked.len(),
                attacked.width(),
                attacked.height()
            )
            .map_err(stdout_err)?;
        }
        Command::Dibr {
            clip,
            baseline,
            convergence,
            out: dir,
        } => {
            let configs = baseline
                .iter()
                .map(|&b| BaselineConfig::new(b, convergence))
                .collect::<Result<Vec<_>>>()?;
            let (video, depth) = load_pair(&clip)?;
            writeln!(out, "baseline,view,dir,frames").map_err(stdout_err)?;
            for cfg in configs {
                let (left, right) = synthesize_clip(&video, &depth, &cfg)?;
                for (name, seq) in [("left", left), ("right", right)] {
                    let path = dir.join(format!("{name}_{}", cfg.baseline_fraction));
                    save_clip(&path, &seq)?;
                    writeln!(out, "{},{name},{},{}", cfg.baseline_fraction, path.display(), seq.len())
                        .map_err(stdout_err)?;
                }
            }
        }
        Command::Calibrate { target_pfp, out: path } => {
            let db = Registry::open(&cfg.db_path)?;
            let cal = calibrate_thresholds(&db, &[], target_pfp.unwrap_or(cfg.target_pfp), cfg.gamma)?;
            write_file(&path, |w| cal.write_csv(w))?;
            cal.write_csv(&mut out).map_err(stdout_err)?;
        }
        Command::EvalDet { eval, channel, out: path } => {
            let channel = match channel.as_str() {
                "2d" => Channel::TwoD,
                "depth" => Channel::Depth,
                "fused" => Channel::Fused,
                other => return Err(Error::Config(format!("unknown channel {other:?}"))),
            };
            let db = Registry::open(&cfg.db_path)?;
            let scores = eval_scores(&cfg, &db, &eval)?;
            let genuine: Vec<f64> = scores.iter().map(|s| s.distance(channel)).collect();
            let records = db.records()?;
            let mut impostor = Vec::new();
            for (i, a) in records.iter().enumerate() {
                for b in &records[i + 1..] {
                    let d_2d = feature_distance(&a.fn_2d, &b.fn_2d)?;
                    let d_depth = feature_distance(&a.fn_depth, &b.fn_depth)?;
                    impostor.push(match channel {
                        Channel::TwoD => d_2d,
                        Channel::Depth => d_depth,
                        Channel::Fused => fuse_scores(d_2d, d_depth, cfg.gamma)?,
                    });
                }
            }
            let det = det_curve(&genuine, &impostor)?;
            write_file(&path, |w| write_det_csv(&det, w))?;
            writeln!(out, "channel,points,genuine,impostor\n{channel},{},{},{}", det.len(), genuine.len(), impostor.len())
                .map_err(stdout_err)?;
        }
        Command::EvalBer {
            eval,
            out: path,
            pfn_out,
            th,
        } => {
            let db = Registry::open(&cfg.db_path)?;
            let scores = eval_scores(&cfg, &db, &eval)?;
            let rows = ber_table(&scores);
            write_file(&path, |w| write_ber_csv(&rows, w))?;
            if let Some(pfn_path) = pfn_out {
                let thresholds = resolve_thresholds(&cfg, &th, &db)?;
                let pfn = pfn_table(&scores, &thresholds);
                write_file(&pfn_path, |w| write_pfn_csv(&pfn, w))?;
            }
            write_ber_csv(&rows, &mut out).map_err(stdout_err)?;
        }
        Command::GenCorpus {
            out: dir,
            clips,
            size,
            frames,
        } => {
            let params = CorpusParams {
                clips,
                size,
                frames,
                seed: cfg.seed,
            };
            writeln!(out, "id,frames,size").map_err(stdout_err)?;
            for i in 0..clips {
                let clip = generate_clip(&params, i)?;
                let base = dir.join(&clip.id);
                save_clip(&base.join("video"), &clip.video)?;
                save_clip(&base.join("depth"), &clip.depth)?;
                write_bitmap(&base.join("wm_2d.pbm"), clip.w_2d.bits())?;
                write_bitmap(&base.join("wm_depth.pbm"), clip.w_depth.bits())?;
                writeln!(out, "{},{frames},{size}", clip.id).map_err(stdout_err)?;
            }
        }
        Command::ShowConfig => {
            writeln!(out, "key,value").map_err(stdout_err)?;
            for (k, v) in cfg.rows() {
                writeln!(out, "{k},{v}").map_err(stdout_err)?;
            }
        }
    }
    Ok(0)
}

fn eval_scores(cfg: &CliConfig, db: &Registry, eval: &EvalArgs) -> Result<Vec<zw3d::eval::QueryScore>> {
    let inputs = corpus_inputs(&eval.corpus)?;
    for (id, _, _) in &inputs {
        db.get(id)?;
    }
    let specs = selected_attacks(cfg, &eval.attacks)?;
    let queries = attacked_queries(&inputs, &specs)?;
    score_queries(db.records()?, &queries, cfg.gamma)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
