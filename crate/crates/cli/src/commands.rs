use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use hopekit::dataprep::{
    label_all, load_manifest, occlusion_proportion_with, read_manifest_lines, save_manifest,
    split_scenes, FrameRecord, GraspThresholds, OcclusionMode, ReferencePolicy, DEFAULT_RRE_DEG,
    DEFAULT_RTE_MM,
};
use hopekit::deoccluder::{
    select_control_strength, DeoccluderError, ProcessEstimator, StrengthCandidates,
};
use hopekit::evaluation::{evaluate_manifests, recover_object_poses, EvaluationOptions};
use hopekit::fixture::{synthetic_fixture, FixtureOptions};
use hopekit::geometry::PointSet3;
use hopekit::metrics::{
    default_thresholds, mean_position_error, EvalConfig, DEFAULT_OCCLUSION_EDGES,
};

use crate::{table, CliError, Format, Global};

fn parent_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load(path: &Path) -> Result<Vec<FrameRecord>, CliError> {
    load_manifest(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn save(records: &[FrameRecord], path: &Path) -> Result<(), CliError> {
    save_manifest(records, path).map_err(CliError::input)
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OcclusionArg {
    /// One minus the IoU of the amodal and full hand masks.
    Complement,
    /// The IoU itself.
    Literal,
}

#[derive(Args)]
pub struct PrepareLabelsArgs {
    /// Input manifest (JSON lines).
    pub manifest: PathBuf,
    /// Where to write the labeled manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Rotation threshold in degrees.
    #[arg(long, default_value_t = DEFAULT_RRE_DEG)]
    pub rre_deg: f64,
    /// Translation threshold in millimetres.
    #[arg(long, default_value_t = DEFAULT_RTE_MM)]
    pub rte_mm: f64,
    /// Use the first frame carrying an object pose as the reference instead
    /// of requiring one on the first frame of each sequence.
    #[arg(long)]
    pub first_annotated_reference: bool,
    #[arg(long, value_enum, default_value_t = OcclusionArg::Complement)]
    pub occlusion_mode: OcclusionArg,
}

#[derive(Serialize)]
struct LabelCounts {
    hand_only: usize,
    hand_object: usize,
}

pub fn prepare_labels(global: &Global, args: PrepareLabelsArgs) -> Result<(), CliError> {
    if !(args.rre_deg.is_finite()
        && args.rre_deg >= 0.0
        && args.rte_mm.is_finite()
        && args.rte_mm >= 0.0)
    {
        return Err(CliError::Input(
            "thresholds must be finite and non-negative".into(),
        ));
    }
    let mut records = load(&args.manifest)?;
    let base = parent_dir(&args.manifest);
    let mode = match args.occlusion_mode {
        OcclusionArg::Complement => OcclusionMode::Complement,
        OcclusionArg::Literal => OcclusionMode::Literal,
    };
    for r in &mut records {
        if let (Some(amodal), Some(full)) = (&r.amodal_mask, &r.full_mask) {
            let context = |e| CliError::Input(format!("frame `{}`: {e}", r.frame_id));
            let a = amodal.resolve(&base).map_err(context)?;
            let f = full.resolve(&base).map_err(context)?;
            r.occlusion = Some(occlusion_proportion_with(&a, &f, mode).map_err(context)?);
        }
    }
    let policy = if args.first_annotated_reference {
        ReferencePolicy::FirstAnnotated
    } else {
        ReferencePolicy::StrictInitial
    };
    let labeled = label_all(
        &records,
        GraspThresholds::from_degrees(args.rre_deg, args.rte_mm),
        policy,
    )
    .map_err(CliError::input)?;
    save(&labeled, &args.out)?;
    let (ho, obj) = split_scenes(&labeled).map_err(CliError::input)?;
    let counts = LabelCounts {
        hand_only: ho.len(),
        hand_object: obj.len(),
    };
    match global.format {
        Format::Table => global.emit(&format!(
            "hand_only={} hand_object={}\n",
            counts.hand_only, counts.hand_object
        )),
        Format::Json => global.emit(&json(&counts)),
    }
}

#[derive(Args)]
pub struct SplitArgs {
    /// Labeled manifest.
    pub manifest: PathBuf,
    /// Directory receiving hand_only.jsonl and hand_object.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn split(global: &Global, args: SplitArgs) -> Result<(), CliError> {
    let records = load(&args.manifest)?;
    let (ho, obj) = split_scenes(&records).map_err(CliError::input)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.out_dir.display())))?;
    save(&ho, &args.out_dir.join("hand_only.jsonl"))?;
    save(&obj, &args.out_dir.join("hand_object.jsonl"))?;
    let counts = LabelCounts {
        hand_only: ho.len(),
        hand_object: obj.len(),
    };
    match global.format {
        Format::Table => global.emit(&format!(
            "hand_only={} hand_object={}\n",
            counts.hand_only, counts.hand_object
        )),
        Format::Json => global.emit(&json(&counts)),
    }
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Predicted manifest.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth manifest.
    #[arg(long)]
    pub gt: PathBuf,
    /// Skip the Procrustes-aligned metrics.
    #[arg(long)]
    pub no_pa: bool,
    /// PCK threshold range in millimetres.
    #[arg(long, default_value_t = 0.0)]
    pub pck_min: f64,
    #[arg(long, default_value_t = 50.0)]
    pub pck_max: f64,
    /// Number of intervals between the PCK thresholds.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub pck_steps: u64,
    /// Occlusion bucket edges (comma separated).
    #[arg(long, value_delimiter = ',', conflicts_with = "no_buckets")]
    pub buckets: Option<Vec<f64>>,
    /// Do not report occlusion buckets.
    #[arg(long)]
    pub no_buckets: bool,
    /// Write the PCK curves as two-column text.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    /// Exit with status 1 when the all-scenes J-PE exceeds this value.
    #[arg(long)]
    pub max_j_pe: Option<f64>,
}

fn thresholds(min: f64, max: f64, steps: u64) -> Result<Vec<f64>, CliError> {
    if !(min.is_finite() && max.is_finite() && min >= 0.0 && max > min) {
        return Err(CliError::Input(
            "PCK range must satisfy 0 <= min < max".into(),
        ));
    }
    if (min, max, steps) == (0.0, 50.0, 100) {
        return Ok(default_thresholds());
    }
    let n = steps as f64;
    Ok((0..=steps)
        .map(|i| min + (max - min) * i as f64 / n)
        .collect())
}

pub fn evaluate(global: &Global, args: EvaluateArgs) -> Result<(), CliError> {
    let pred = load(&args.pred)?;
    let gt = load(&args.gt)?;
    let occlusion_edges = if args.no_buckets {
        None
    } else {
        Some(
            args.buckets
                .unwrap_or_else(|| DEFAULT_OCCLUSION_EDGES.to_vec()),
        )
    };
    let options = EvaluationOptions {
        config: EvalConfig {
            thresholds: thresholds(args.pck_min, args.pck_max, args.pck_steps)?,
            procrustes: !args.no_pa,
        },
        occlusion_edges,
    };
    let evaluation = evaluate_manifests(
        &pred,
        &gt,
        &parent_dir(&args.pred),
        &parent_dir(&args.gt),
        &options,
    )
    .map_err(CliError::input)?;
    if let Some(path) = &args.curve_out {
        let text = table::curves(&evaluation.joint_curve, evaluation.vertex_curve.as_ref());
        std::fs::write(path, text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    }
    match global.format {
        Format::Table => global.emit(&table::evaluation(&evaluation.report))?,
        Format::Json => global.emit(&json(&evaluation.report))?,
    }
    if let Some(limit) = args.max_j_pe {
        let j_pe = evaluation.report.all.hand.j_pe;
        if j_pe > limit {
            return Err(CliError::Check(format!("J-PE {j_pe:.3} exceeds {limit}")));
        }
    }
    Ok(())
}

#[derive(Args)]
pub struct PnpArgs {
    /// Manifest with predicted 2D object keypoints.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground truth for ADD.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Write the prediction manifest with recovered object poses.
    #[arg(long)]
    pub poses_out: Option<PathBuf>,
}

pub fn pnp(global: &Global, args: PnpArgs) -> Result<(), CliError> {
    let file = std::fs::File::open(&args.pred)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.pred.display())))?;
    let lines = read_manifest_lines(std::io::BufReader::new(file))
        .map_err(|e| CliError::Input(format!("{}: {e}", args.pred.display())))?;
    let gt = args.gt.as_deref().map(load).transpose()?;
    let (report, records) = recover_object_poses(lines, gt.as_deref()).map_err(CliError::input)?;
    if let Some(path) = &args.poses_out {
        save(&records, path)?;
    }
    match global.format {
        Format::Table => global.emit(&table::pnp(&report)),
        Format::Json => global.emit(&json(&report)),
    }
}

#[derive(Args)]
pub struct SelectStrengthArgs {
    /// JSON lines `{"sample": .., "scores": [..]}`; `null` marks a failed candidate.
    #[arg(long, conflicts_with_all = ["estimator", "inputs"], required_unless_present = "estimator")]
    pub scores: Option<PathBuf>,
    /// Candidate strengths (comma separated); defaults to the built-in ladder.
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<f64>>,
    /// Pose-estimator program speaking the line protocol.
    #[arg(long, requires = "inputs")]
    pub estimator: Option<String>,
    /// Extra arguments for the estimator.
    #[arg(long, allow_hyphen_values = true)]
    pub estimator_arg: Vec<String>,
    /// JSON lines `{"sample": .., "joints": [63], "candidates": [paths]}`.
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    /// Seconds to wait for each estimator reply.
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
}

#[derive(Deserialize)]
struct ScoreLine {
    sample: String,
    scores: Vec<Option<f64>>,
}

#[derive(Deserialize)]
struct EstimatorLine {
    sample: String,
    joints: Vec<f64>,
    candidates: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Selection {
    sample: String,
    strength: Option<f64>,
    index: Option<usize>,
    score: Option<f64>,
    error: Option<String>,
}

fn json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Input(format!("{}: line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn select(
    sample: String,
    candidates: &StrengthCandidates,
    scores: &[f64],
) -> Result<Selection, CliError> {
    Ok(match select_control_strength(candidates, scores) {
        Ok((strength, index)) => Selection {
            sample,
            strength: Some(strength),
            index: Some(index),
            score: Some(scores[index]),
            error: None,
        },
        Err(DeoccluderError::AllCandidatesFailed) => Selection {
            sample,
            strength: None,
            index: None,
            score: None,
            error: Some(DeoccluderError::AllCandidatesFailed.to_string()),
        },
        Err(e) => return Err(CliError::Input(format!("sample `{sample}`: {e}"))),
    })
}

pub fn select_strength(global: &Global, args: SelectStrengthArgs) -> Result<(), CliError> {
    let candidates = match args.candidates {
        Some(v) => StrengthCandidates::new(v).map_err(CliError::input)?,
        None => StrengthCandidates::default(),
    };
    let mut selections = Vec::new();
    if let Some(path) = &args.scores {
        for line in json_lines::<ScoreLine>(path)? {
            let scores: Vec<f64> = line
                .scores
                .iter()
                .map(|s| s.unwrap_or(f64::INFINITY))
                .collect();
            selections.push(select(line.sample, &candidates, &scores)?);
        }
    } else {
        let program = args
            .estimator
            .as_deref()
            .expect("clap requires an estimator");
        let inputs = args.inputs.as_deref().expect("clap requires inputs");
        let estimator = ProcessEstimator::spawn(
            program,
            &args.estimator_arg,
            Duration::from_secs(args.timeout_secs),
        )
        .map_err(CliError::input)?;
        let base = parent_dir(inputs);
        for line in json_lines::<EstimatorLine>(inputs)? {
            let gt = PointSet3::from_flat(&line.joints)
                .map_err(|e| CliError::Input(format!("sample `{}`: {e}", line.sample)))?;
            let scores: Vec<f64> = line
                .candidates
                .iter()
                .map(|p| {
                    estimator
                        .estimate_file(&base.join(p))
                        .ok()
                        .and_then(|j| mean_position_error(&j, &gt).ok())
                        .unwrap_or(f64::INFINITY)
                })
                .collect();
            selections.push(select(line.sample, &candidates, &scores)?);
        }
    }
    match global.format {
        Format::Table => {
            let mut out = format!("{:<18}{:>10}{:>12}\n", "sample", "strength", "J-PE");
            for s in &selections {
                match (s.strength, s.score) {
                    (Some(st), Some(sc)) => {
                        out.push_str(&format!("{:<18}{st:>10.2}{sc:>12.4}\n", s.sample))
                    }
                    _ => out.push_str(&format!(
                        "{:<18}{:>10}{:>12}  all candidates failed\n",
                        s.sample, "-", "-"
                    )),
                }
            }
            global.emit(&out)?;
        }
        Format::Json => global.emit(&json(&selections))?,
    }
    let failed: Vec<&str> = selections
        .iter()
        .filter(|s| s.error.is_some())
        .map(|s| s.sample.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "every candidate failed for {}",
            failed.join(", ")
        )))
    }
}

#[derive(Args)]
pub struct MakeFixtureArgs {
    /// Directory receiving gt.jsonl and pred.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Half-width of the uniform noise on predicted 2D object keypoints.
    #[arg(long, default_value_t = 1.0)]
    pub keypoint_noise_px: f64,
}

pub fn make_fixture(global: &Global, args: MakeFixtureArgs) -> Result<(), CliError> {
    if !(args.keypoint_noise_px.is_finite() && args.keypoint_noise_px >= 0.0) {
        return Err(CliError::Input(
            "keypoint noise must be finite and non-negative".into(),
        ));
    }
    let fixture = synthetic_fixture(&FixtureOptions {
        seed: global.seed,
        keypoint_noise_px: args.keypoint_noise_px,
        ..FixtureOptions::default()
    });
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.out_dir.display())))?;
    save(&fixture.gt, &args.out_dir.join("gt.jsonl"))?;
    save(&fixture.pred, &args.out_dir.join("pred.jsonl"))?;
    global.emit(&format!("frames={}\n", fixture.gt.len()))
}
