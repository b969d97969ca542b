use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use confcl::contrastive_loss::{
    central_difference, max_relative_error, partition_batch, BatchPartition, LossBreakdown, Objective,
    ViewPairBatch,
};
use confcl::detection_metrics::{
    evaluate_exam, exam_score, Connectivity, DynamicThreshold, MetricReport, Thresholding,
};
use confcl::io::{
    read_embeddings_binary, read_mask, read_matrix_csv, read_metadata_csv, read_volume, write_matrix_csv,
};
use confcl::metadata_kernel::{
    group_annotations, kernel_matrix, AnnotationSource, AnnotationVector, ConfidenceModel, KernelMatrix,
    MetadataSummary,
};
use confcl::synth_bench::{run_study, StudyVariant, SynthConfig};
use confcl::Error;

use crate::output::{emit, read_text, read_with, to_json_pretty, write_atomic, CliError, CliResult};
use crate::{
    ConfidenceArgs, EmbeddingInput, EvalDetectArgs, GradcheckArgs, KernelArgs, LossArgs, ObjectiveArg,
    SimulateArgs,
};

fn invalid(message: impl Into<String>) -> CliError {
    CliError::from(Error::InvalidArgument(message.into()))
}

fn confidence_model(args: &ConfidenceArgs, vectors: &[AnnotationVector]) -> CliResult<ConfidenceModel> {
    let mut model = ConfidenceModel::new(args.epsilon)?;
    let source = match (&args.biopsy_source, args.variant) {
        (Some(s), _) => Some(s.parse::<AnnotationSource>()?),
        (None, StudyVariant::Biopsy) => Some(AnnotationSource::Isup),
        (None, _) => None,
    };
    if let Some(source) = source {
        model = model.with_source_override(vectors, source, 1.0)?;
    }
    for (id, eps) in &args.epsilon_overrides {
        model = model.with_override(id.clone(), *eps)?;
    }
    Ok(model)
}

/// Partition and kernel kept alive for the borrowed [`Objective`].
struct Prepared {
    kind: ObjectiveArg,
    partition: BatchPartition,
    kernel: KernelMatrix,
    global_uniformity: bool,
}

impl Prepared {
    fn new(kind: ObjectiveArg, variant: StudyVariant, summaries: &[MetadataSummary]) -> CliResult<Self> {
        let n = summaries.len();
        let kv = variant.kernel_variant();
        let (partition, kernel) = match kind {
            ObjectiveArg::Global => (BatchPartition::all_unlabeled(n), KernelMatrix::identity(0)),
            ObjectiveArg::Conditional => {
                let labeled: Vec<(usize, MetadataSummary)> = summaries.iter().cloned().enumerate().collect();
                let kernel = kernel_matrix(summaries, kv)?;
                (BatchPartition::new(labeled, Vec::new(), n)?, kernel)
            }
            ObjectiveArg::Decoupled => {
                let partition = if variant.uses_metadata() {
                    partition_batch(summaries, kv)
                } else {
                    BatchPartition::all_unlabeled(n)
                };
                let kernel = partition.kernel(kv)?;
                (partition, kernel)
            }
        };
        Ok(Self {
            kind,
            partition,
            kernel,
            global_uniformity: variant.global_uniformity(),
        })
    }

    fn objective(&self) -> Objective<'_> {
        match self.kind {
            ObjectiveArg::Global => Objective::Global,
            ObjectiveArg::Conditional => Objective::Conditional(&self.kernel),
            ObjectiveArg::Decoupled => Objective::Decoupled {
                partition: &self.partition,
                kernel: &self.kernel,
                global_uniformity: self.global_uniformity,
            },
        }
    }

    fn rows(&self) -> (Vec<usize>, Vec<usize>) {
        match self.kind {
            ObjectiveArg::Global => (Vec::new(), (0..self.partition.len()).collect()),
            _ => (self.partition.labeled().to_vec(), self.partition.unlabeled().to_vec()),
        }
    }
}

fn objective_name(kind: ObjectiveArg) -> &'static str {
    match kind {
        ObjectiveArg::Global => "global",
        ObjectiveArg::Conditional => "conditional",
        ObjectiveArg::Decoupled => "decoupled",
    }
}

fn load_embeddings(input: &EmbeddingInput) -> CliResult<Option<ViewPairBatch>> {
    match (&input.embeddings, &input.first, &input.second) {
        (Some(path), _, _) => Ok(Some(read_with(path, read_embeddings_binary)?)),
        (None, Some(first), Some(second)) => {
            let x1 = read_with(first, read_matrix_csv)?;
            let x2 = read_with(second, read_matrix_csv)?;
            Ok(Some(ViewPairBatch::new(x1, x2)?))
        }
        _ => Ok(None),
    }
}

fn load_ids(path: Option<&PathBuf>, n: usize) -> CliResult<Vec<String>> {
    let Some(path) = path else {
        return Ok((0..n).map(|i| i.to_string()).collect());
    };
    let ids: Vec<String> = read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if ids.len() != n {
        return Err(CliError::from(Error::Shape(format!("{} ids for {n} embedding rows", ids.len()))).in_file(path));
    }
    Ok(ids)
}

/// Metadata summary for each embedding row; rows without metadata are unlabeled.
fn row_summaries(metadata: &Path, args: &ConfidenceArgs, ids: &[String]) -> CliResult<Vec<MetadataSummary>> {
    let raw = read_with(metadata, read_metadata_csv)?;
    let vectors = group_annotations(&raw);
    let model = confidence_model(args, &vectors)?;
    let by_id: BTreeMap<&str, &AnnotationVector> = vectors.iter().map(|v| (v.exam_id.as_str(), v)).collect();
    Ok(ids
        .iter()
        .map(|id| match by_id.get(id.as_str()) {
            Some(v) => model.summarize(v),
            None => MetadataSummary::unlabeled(id.clone()),
        })
        .collect())
}

#[derive(Serialize)]
struct KernelReport<'a> {
    variant: &'a str,
    out: String,
    labeled: Vec<&'a str>,
    unlabeled: Vec<&'a str>,
}

pub fn kernel(a: KernelArgs) -> CliResult<()> {
    let raw = read_with(&a.metadata, read_metadata_csv)?;
    let vectors = group_annotations(&raw);
    let model = confidence_model(&a.confidence, &vectors)?;
    let summaries: Vec<MetadataSummary> = vectors.iter().map(|v| model.summarize(v)).collect();
    let variant = a.confidence.variant;
    let kv = variant.kernel_variant();
    let partition = if variant.uses_metadata() {
        partition_batch(&summaries, kv)
    } else {
        BatchPartition::all_unlabeled(summaries.len())
    };
    let k = partition.kernel(kv)?;
    let mut bytes = Vec::new();
    write_matrix_csv(&mut bytes, k.weights())?;
    write_atomic(&a.out, &bytes)?;
    let report = KernelReport {
        variant: variant.name(),
        out: a.out.display().to_string(),
        labeled: partition.labeled().iter().map(|&i| summaries[i].exam_id.as_str()).collect(),
        unlabeled: partition.unlabeled().iter().map(|&i| summaries[i].exam_id.as_str()).collect(),
    };
    print!("{}", to_json_pretty(&report));
    Ok(())
}

#[derive(Serialize)]
struct LossReport<'a> {
    objective: &'a str,
    variant: &'a str,
    labeled_rows: Vec<usize>,
    unlabeled_rows: Vec<usize>,
    loss: LossBreakdown,
}

pub fn loss(a: LossArgs) -> CliResult<()> {
    let batch = load_embeddings(&a.input)?.ok_or_else(|| invalid("give --embeddings or --first/--second"))?;
    let ids = load_ids(a.input.ids.as_ref(), batch.len())?;
    let summaries = row_summaries(&a.metadata, &a.confidence, &ids)?;
    let prepared = Prepared::new(a.objective, a.confidence.variant, &summaries)?;
    let loss = prepared.objective().evaluate(&batch)?;
    let (labeled_rows, unlabeled_rows) = prepared.rows();
    let report = LossReport {
        objective: objective_name(a.objective),
        variant: a.confidence.variant.name(),
        labeled_rows,
        unlabeled_rows,
        loss,
    };
    emit(a.out.as_deref(), &to_json_pretty(&report))
}

fn random_batch(n: usize, d: usize, rng: &mut ChaCha8Rng) -> CliResult<ViewPairBatch> {
    let mut view = || Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let x1 = view();
    let x2 = view();
    Ok(ViewPairBatch::new(x1, x2)?)
}

/// Random radiologist votes; the conditional objective needs every exam labeled.
fn random_summaries(
    n: usize,
    kind: ObjectiveArg,
    args: &ConfidenceArgs,
    rng: &mut ChaCha8Rng,
) -> CliResult<Vec<MetadataSummary>> {
    let vectors: Vec<AnnotationVector> = (0..n)
        .map(|i| {
            let votes = match kind {
                ObjectiveArg::Conditional => 2 * rng.random_range(0..=2usize) + 1,
                _ => rng.random_range(0..=5usize),
            };
            let values: Vec<bool> = (0..votes).map(|_| rng.random_bool(0.5)).collect();
            AnnotationVector::from_values(i.to_string(), AnnotationSource::Pirads, &values)
        })
        .collect();
    let model = confidence_model(args, &vectors)?;
    Ok(vectors.iter().map(|v| model.summarize(v)).collect())
}

#[derive(Serialize)]
struct GradcheckReport<'a> {
    objective: &'a str,
    variant: &'a str,
    n: usize,
    d: usize,
    seed: u64,
    h: f64,
    loss: f64,
    max_relative_error: f64,
    tolerance: f64,
    passed: bool,
}

pub fn gradcheck(a: GradcheckArgs) -> CliResult<()> {
    if !(a.h > 0.0 && a.h.is_finite()) {
        return Err(invalid(format!("--h must be positive, got {}", a.h)));
    }
    if a.tolerance.is_nan() || a.tolerance <= 0.0 {
        return Err(invalid(format!("--tolerance must be positive, got {}", a.tolerance)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let batch = match load_embeddings(&a.input)? {
        Some(b) => b,
        None => {
            if a.n == 0 || a.d == 0 {
                return Err(invalid("--n and --d must be positive"));
            }
            random_batch(a.n, a.d, &mut rng)?
        }
    };
    let summaries = match &a.metadata {
        Some(path) => {
            let ids = load_ids(a.input.ids.as_ref(), batch.len())?;
            row_summaries(path, &a.confidence, &ids)?
        }
        None => random_summaries(batch.len(), a.objective, &a.confidence, &mut rng)?,
    };
    let prepared = Prepared::new(a.objective, a.confidence.variant, &summaries)?;
    let objective = prepared.objective();
    let (loss, analytic) = objective.gradient(&batch)?;
    let numeric = central_difference(&batch, a.h, |b| Ok(objective.evaluate(b)?.total))?;
    let err = max_relative_error(&analytic, &numeric);
    let report = GradcheckReport {
        objective: objective_name(a.objective),
        variant: a.confidence.variant.name(),
        n: batch.len(),
        d: batch.dim(),
        seed: a.seed,
        h: a.h,
        loss: loss.total,
        max_relative_error: err,
        tolerance: a.tolerance,
        passed: err <= a.tolerance,
    };
    emit(a.out.as_deref(), &to_json_pretty(&report))?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::new(
            "gradient_mismatch",
            format!("max relative error {err:e} exceeds tolerance {:e}", a.tolerance),
        ))
    }
}

#[derive(Serialize)]
struct ExamRow {
    volume: String,
    mask: String,
    true_positives: usize,
    false_positives: usize,
    false_negatives: usize,
    exam_score: f64,
}

#[derive(Serialize)]
struct DetectReport {
    thresholding: String,
    connectivity: Connectivity,
    #[serde(flatten)]
    report: MetricReport,
    exams: Vec<ExamRow>,
}

pub fn eval_detect(a: EvalDetectArgs) -> CliResult<()> {
    if a.volumes.len() != a.masks.len() {
        return Err(invalid(format!(
            "{} volumes but {} masks; pass one --mask per --volume",
            a.volumes.len(),
            a.masks.len()
        )));
    }
    if !(0.0..1.0).contains(&a.overlap) {
        return Err(invalid(format!("--overlap must lie in [0,1), got {}", a.overlap)));
    }
    let connectivity: Connectivity = a.connectivity.parse()?;
    let thresholding = match a.threshold {
        Some(t) if (0.0..=1.0).contains(&t) => Thresholding::Fixed(t),
        Some(t) => return Err(invalid(format!("--threshold must lie in [0,1], got {t}"))),
        None => {
            let params = DynamicThreshold {
                t_start: a.t_start,
                t_min: a.t_min,
                step: a.step,
                max_candidates: a.max_candidates,
                min_voxels: a.min_voxels,
                connectivity,
            };
            params.validate()?;
            Thresholding::Dynamic(params)
        }
    };

    let mut outcomes = Vec::with_capacity(a.volumes.len());
    let mut exams = Vec::with_capacity(a.volumes.len());
    for (vp, mp) in a.volumes.iter().zip(&a.masks) {
        let volume = read_with(vp, read_volume)?;
        let mask = read_with(mp, read_mask)?;
        if volume.dims() != mask.dims() {
            return Err(CliError::from(Error::DimensionMismatch(format!(
                "volume {:?} vs mask {:?}",
                volume.dims(),
                mask.dims()
            )))
            .in_file(mp));
        }
        let outcome = evaluate_exam(&volume, &mask, thresholding, connectivity, a.overlap)?;
        exams.push(ExamRow {
            volume: vp.display().to_string(),
            mask: mp.display().to_string(),
            true_positives: outcome.true_positives.len(),
            false_positives: outcome.false_positives.len(),
            false_negatives: outcome.false_negatives.len(),
            exam_score: exam_score(&outcome),
        });
        outcomes.push(outcome);
    }

    let report = MetricReport::from_outcomes(&outcomes, a.overlap);
    let csv = report.to_csv();
    let doc = DetectReport {
        thresholding: match thresholding {
            Thresholding::Fixed(t) => format!("fixed:{t}"),
            Thresholding::Dynamic(_) => "dynamic".into(),
        },
        connectivity,
        report,
        exams,
    };
    let json = to_json_pretty(&doc);
    if let Some(p) = &a.out_csv {
        write_atomic(p, csv.as_bytes())?;
    }
    match &a.out_json {
        Some(p) => write_atomic(p, json.as_bytes()),
        None => emit(None, &json),
    }
}

fn thread_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("CONFCL_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| invalid(format!("CONFCL_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    let mut config = match &a.config {
        Some(path) => SynthConfig::from_json(&read_text(path)?).map_err(|e| CliError::from(e).in_file(path))?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let seeds: Vec<u64> = if a.seeds.is_empty() { (0..a.n_seeds).collect() } else { a.seeds.clone() };
    let variants: Vec<StudyVariant> = if a.variants.is_empty() { StudyVariant::ALL.to_vec() } else { a.variants.clone() };
    let threads = thread_count(a.threads)?;
    if threads == Some(0) {
        return Err(invalid("thread count must be positive"));
    }
    let report = run_study(&config, &variants, &seeds, threads)?;
    if let Some(p) = &a.out {
        write_atomic(p, to_json_pretty(&report).as_bytes())?;
    }
    if let Some(p) = &a.summary_csv {
        write_atomic(p, report.summary_csv().as_bytes())?;
    }
    if let Some(p) = &a.cells_csv {
        write_atomic(p, report.cells_csv().as_bytes())?;
    }
    print!("{}", report.table());
    for c in report.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("cell {} seed {} failed: {}", c.variant, c.seed, c.error.as_deref().unwrap_or(""));
    }
    Ok(())
}
