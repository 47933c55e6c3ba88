//! Stage implementations shared by the per-stage subcommands and the
//! end-to-end pipeline runner. Every artifact is JSON (or CSV for the
//! feature matrix) with a schema_version, and contains no timing fields so
//! identical runs are byte-identical.

use crate::{
    AnalyzeArgs, CliError, ExtractArgs, IngestArgs, LabelArgs, RulesArgs, SweepArgs, SynthArgs,
    TrainArgs,
};
use gwprof_core::analysis::{cfs_select, detect_and_rescale, pca, RescaleOutcome, SkewEntry};
use gwprof_core::classify::{
    cross_validate, data_sufficiency_sweep, dataset_from_labels, encode_oui, grid_search,
    ClassifierFamily, Dataset, EvalReport, ModelSpec, ParamGrid, SweepConfig, SweepPoint,
    TrainedModel,
};
use gwprof_core::features::{extract_corpus, FeatureMatrix};
use gwprof_core::ingest::{
    filter_population, load_timelines, parse_trace, save_timelines, PopulationReport,
};
use gwprof_core::labeler::{default_ruleset, label_population, CompiledRuleset, GroundTruthLabel,
    LabelRuleset};
use gwprof_core::rules::{rules_for_all_classes, render_markdown, ConjunctiveRule};
use gwprof_core::synth::{default_profiles, generate_corpus, GeneratorConfig, ProfileSet};
use gwprof_core::telemetry::{DeviceTimeline, MacAddress};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestReport {
    pub schema_version: u32,
    pub min_days: u32,
    pub population: PopulationReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelsFile {
    pub schema_version: u32,
    pub labels: Vec<GroundTruthLabel>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PcaSummary {
    pub explained_variance_ratio: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub components_for_95: usize,
    pub dropped_features: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CfsReport {
    pub granularity: String,
    pub k: usize,
    pub selected: Vec<String>,
    pub merit: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnalysisFile {
    pub schema_version: u32,
    pub evf: f64,
    pub skew: Vec<SkewEntry>,
    pub rescaled: Vec<String>,
    pub pca: PcaSummary,
    pub cfs: Vec<CfsReport>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalFile {
    pub schema_version: u32,
    pub granularity: String,
    pub spec: ModelSpec,
    pub oui_top_n: Option<usize>,
    pub rows: u64,
    pub report: EvalReport,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub granularity: String,
    pub spec: ModelSpec,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub model: TrainedModel,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepFile {
    pub schema_version: u32,
    pub granularity: String,
    pub svm_c: f64,
    pub folds: usize,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RulesFile {
    pub schema_version: u32,
    pub granularity: String,
    pub rules: Vec<ConjunctiveRule>,
}

pub(crate) fn write_json<T: Serialize>(
    path: &Path,
    value: &T,
    stage: &'static str,
) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::stage(stage, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::stage(stage, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)
        .map_err(|e| CliError::stage(stage, e))?;
    Ok(())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(
    path: &Path,
    stage: &'static str,
) -> Result<T, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::stage(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::stage(stage, e))
}

pub(crate) fn load_profiles(path: Option<&Path>) -> Result<ProfileSet, CliError> {
    match path {
        None => Ok(default_profiles()),
        Some(path) => {
            let json = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            ProfileSet::from_json(&json).map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

pub(crate) fn load_ruleset(path: Option<&Path>) -> Result<CompiledRuleset, CliError> {
    match path {
        None => Ok(default_ruleset()),
        Some(path) => {
            let json = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            LabelRuleset::from_json(&json).map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

pub(crate) fn load_timeline_store(
    path: &Path,
    stage: &'static str,
) -> Result<Vec<DeviceTimeline>, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::stage(stage, format!("{}: {e}", path.display())))?;
    load_timelines(BufReader::new(file)).map_err(|e| CliError::stage(stage, e))
}

pub(crate) fn load_feature_matrix(
    path: &Path,
    stage: &'static str,
) -> Result<FeatureMatrix, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::stage(stage, format!("{}: {e}", path.display())))?;
    FeatureMatrix::read_csv(BufReader::new(file)).map_err(|e| CliError::stage(stage, e))
}

pub(crate) fn load_labels(path: &Path, stage: &'static str) -> Result<Vec<GroundTruthLabel>, CliError> {
    let file: LabelsFile = read_json(path, stage)?;
    Ok(file.labels)
}

/// Map labeled devices to their class name at the chosen granularity.
pub(crate) fn label_map(
    labels: &[GroundTruthLabel],
    granularity: &str,
) -> BTreeMap<MacAddress, String> {
    labels
        .iter()
        .filter_map(|l| match granularity {
            "fine" => l.fine.map(|f| (l.mac, f.to_string())),
            _ => l.coarse.map(|c| (l.mac, c.to_string())),
        })
        .collect()
}

pub(crate) fn parse_thresholds(text: &str) -> Result<Vec<u32>, CliError> {
    let bad = |t: &str| CliError::Config(format!("bad threshold spec {t:?}"));
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u32 = lo.trim().parse().map_err(|_| bad(text))?;
        let hi: u32 = hi.trim().parse().map_err(|_| bad(text))?;
        if lo == 0 || hi < lo {
            return Err(bad(text));
        }
        return Ok((lo..=hi).collect());
    }
    let values: Result<Vec<u32>, _> = text.split(',').map(|t| t.trim().parse::<u32>()).collect();
    let values = values.map_err(|_| bad(text))?;
    if values.is_empty() || values.contains(&0) {
        return Err(bad(text));
    }
    Ok(values)
}

/// "off" or "top:N".
pub(crate) fn parse_oui_spec(text: &str) -> Result<Option<usize>, CliError> {
    if text == "off" {
        return Ok(None);
    }
    if let Some(n) = text.strip_prefix("top:") {
        let n: usize = n
            .parse()
            .map_err(|_| CliError::Config(format!("bad oui spec {text:?}")))?;
        if n == 0 {
            return Err(CliError::Config("oui top:N needs N >= 1".into()));
        }
        return Ok(Some(n));
    }
    Err(CliError::Config(format!("bad oui spec {text:?}")))
}

pub(crate) fn parse_cfs_k(text: &str) -> Result<Vec<usize>, CliError> {
    let values: Result<Vec<usize>, _> =
        text.split(',').map(|t| t.trim().parse::<usize>()).collect();
    let values = values.map_err(|_| CliError::Config(format!("bad cfs-k {text:?}")))?;
    if values.is_empty() || values.contains(&0) {
        return Err(CliError::Config("cfs-k needs positive sizes".into()));
    }
    Ok(values)
}

pub fn run_synth(args: &SynthArgs) -> Result<(), CliError> {
    let set = load_profiles(args.profiles.as_deref())?;
    let config = GeneratorConfig {
        homes: args.homes,
        days: args.days,
        seed: args.seed,
        start_ts: gwprof_core::synth::DEFAULT_START_TS,
    };
    let summary =
        generate_corpus(&set, &config, &args.out).map_err(|e| CliError::stage("synth", e))?;
    println!(
        "synth: {} devices across {} homes, {} records ({:.1} MB)",
        summary.devices,
        summary.homes,
        summary.records,
        summary.trace_bytes as f64 / 1e6
    );
    Ok(())
}

pub(crate) fn parse_stage(input: &Path) -> Result<Vec<DeviceTimeline>, CliError> {
    let file = File::open(input)
        .map_err(|e| CliError::stage("ingest", format!("{}: {e}", input.display())))?;
    parse_trace(BufReader::new(file)).map_err(|e| CliError::stage("ingest", e))
}

pub(crate) fn ingest_stage(
    input: &Path,
    min_days: u32,
) -> Result<(Vec<DeviceTimeline>, PopulationReport), CliError> {
    Ok(filter_population(parse_stage(input)?, min_days))
}

pub fn run_ingest(args: &IngestArgs) -> Result<(), CliError> {
    let (kept, population) = ingest_stage(&args.input, args.min_days)?;
    let out = File::create(&args.out).map_err(|e| CliError::stage("ingest", e))?;
    save_timelines(BufWriter::new(out), &kept).map_err(|e| CliError::stage("ingest", e))?;
    if let Some(report_path) = &args.report {
        write_json(
            report_path,
            &IngestReport {
                schema_version: SCHEMA_VERSION,
                min_days: args.min_days,
                population: population.clone(),
            },
            "ingest",
        )?;
    }
    println!(
        "ingest: kept {} of {} devices (wired/unreliable {}, transient {})",
        population.nontransient, population.total, population.wired, population.transient
    );
    Ok(())
}

pub(crate) fn label_stage(
    timelines: &[DeviceTimeline],
    rules: &CompiledRuleset,
) -> Vec<GroundTruthLabel> {
    label_population(timelines, rules)
}

pub fn run_label(args: &LabelArgs) -> Result<(), CliError> {
    let timelines = load_timeline_store(&args.timelines, "label")?;
    let rules = load_ruleset(args.rules.as_deref())?;
    let labels = label_stage(&timelines, &rules);
    let coarse = labels.iter().filter(|l| l.coarse.is_some()).count();
    let fine = labels.iter().filter(|l| l.fine.is_some()).count();
    write_json(
        &args.out,
        &LabelsFile {
            schema_version: SCHEMA_VERSION,
            labels,
        },
        "label",
    )?;
    println!("label: {coarse} coarse, {fine} fine labels");
    Ok(())
}

pub fn run_extract(args: &ExtractArgs) -> Result<(), CliError> {
    let timelines = load_timeline_store(&args.timelines, "extract")?;
    let gap = args.session_gap_mins as i64 * 60;
    let (matrix, skipped) = extract_corpus(&timelines, gap);
    for (mac, err) in &skipped {
        log::warn!("extract: skipping {mac}: {err}");
    }
    let out = File::create(&args.out).map_err(|e| CliError::stage("extract", e))?;
    matrix
        .write_csv(BufWriter::new(out))
        .map_err(|e| CliError::stage("extract", e))?;
    println!(
        "extract: {} devices x {} features ({} skipped)",
        matrix.rows.len(),
        matrix.names.len(),
        skipped.len()
    );
    Ok(())
}

pub(crate) fn analyze_stage(
    matrix: &FeatureMatrix,
    labels: &[GroundTruthLabel],
    evf: f64,
    cfs_k: &[usize],
) -> Result<(AnalysisFile, FeatureMatrix), CliError> {
    let mut rescaled_matrix = matrix.clone();
    let RescaleOutcome { skew, rescaled } =
        detect_and_rescale(&mut rescaled_matrix, evf).map_err(|e| CliError::stage("analyze", e))?;

    let pca_result =
        pca(&rescaled_matrix.rows, true).map_err(|e| CliError::stage("analyze", e))?;
    let pca_summary = PcaSummary {
        components_for_95: pca_result.components_for(0.95),
        dropped_features: pca_result
            .dropped
            .iter()
            .map(|&i| rescaled_matrix.names[i].clone())
            .collect(),
        explained_variance_ratio: pca_result.explained_variance_ratio,
        cumulative: pca_result.cumulative,
    };

    let mut cfs_reports = Vec::new();
    for granularity in ["coarse", "fine"] {
        let map = label_map(labels, granularity);
        let dataset = match dataset_from_labels(&rescaled_matrix, &map) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("analyze: skipping CFS for {granularity}: {e}");
                continue;
            }
        };
        let sub = FeatureMatrix {
            macs: dataset.macs.clone(),
            names: dataset.feature_names.clone(),
            rows: dataset.rows.clone(),
        };
        for &k in cfs_k {
            let ranking = cfs_select(&sub, &dataset.labels, k)
                .map_err(|e| CliError::stage("analyze", e))?;
            cfs_reports.push(CfsReport {
                granularity: granularity.to_string(),
                k,
                selected: ranking.selected,
                merit: ranking.merit,
            });
        }
    }

    Ok((
        AnalysisFile {
            schema_version: SCHEMA_VERSION,
            evf,
            skew,
            rescaled,
            pca: pca_summary,
            cfs: cfs_reports,
        },
        rescaled_matrix,
    ))
}

pub fn run_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let cfs_k = parse_cfs_k(&args.cfs_k)?;
    let matrix = load_feature_matrix(&args.features, "analyze")?;
    let labels = load_labels(&args.labels, "analyze")?;
    let (analysis, _) = analyze_stage(&matrix, &labels, args.evf, &cfs_k)?;
    write_json(&args.out, &analysis, "analyze")?;
    println!(
        "analyze: {} skewed features rescaled, {} components reach 95% variance",
        analysis.rescaled.len(),
        analysis.pca.components_for_95
    );
    Ok(())
}

/// Rescale a raw feature matrix and assemble the labeled dataset at the
/// requested granularity, optionally with OUI indicator columns.
pub(crate) fn dataset_stage(
    matrix: &FeatureMatrix,
    labels: &[GroundTruthLabel],
    granularity: &str,
    evf: f64,
    oui_top_n: Option<usize>,
    stage: &'static str,
) -> Result<Dataset, CliError> {
    let mut rescaled = matrix.clone();
    detect_and_rescale(&mut rescaled, evf).map_err(|e| CliError::stage(stage, e))?;
    let map = label_map(labels, granularity);
    let dataset = dataset_from_labels(&rescaled, &map).map_err(|e| CliError::stage(stage, e))?;
    match oui_top_n {
        None => Ok(dataset),
        Some(n) => {
            let ouis = dataset.oui.clone().expect("dataset carries OUIs");
            encode_oui(&dataset, &ouis, n).map_err(|e| CliError::stage(stage, e))
        }
    }
}

pub(crate) struct TrainOutcome {
    pub spec: ModelSpec,
    pub eval: EvalFile,
    pub model: Option<ModelFile>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn train_stage(
    dataset: &Dataset,
    granularity: &str,
    model: &str,
    grid: bool,
    folds: usize,
    seed: u64,
    svm_c: f64,
    min_leaf: usize,
    prune: bool,
    oui_top_n: Option<usize>,
    want_model: bool,
) -> Result<TrainOutcome, CliError> {
    let base_spec = match model {
        "zeror" => ModelSpec::ZeroR,
        "cart" => ModelSpec::Cart { min_leaf, prune },
        _ => ModelSpec::Svm { c: svm_c },
    };
    let (spec, report) = if grid && model != "zeror" {
        let family = if model == "cart" {
            ClassifierFamily::Cart
        } else {
            ClassifierFamily::Svm
        };
        grid_search(dataset, family, &ParamGrid::default(), folds, seed)
            .map_err(|e| CliError::stage("train", e))?
    } else {
        let report = cross_validate(dataset, base_spec, folds, seed)
            .map_err(|e| CliError::stage("train", e))?;
        (base_spec, report)
    };

    let trained = if want_model {
        Some(ModelFile {
            schema_version: SCHEMA_VERSION,
            granularity: granularity.to_string(),
            spec,
            feature_names: dataset.feature_names.clone(),
            class_names: dataset.class_names.clone(),
            model: spec.train(dataset).map_err(|e| CliError::stage("train", e))?,
        })
    } else {
        None
    };

    Ok(TrainOutcome {
        spec,
        eval: EvalFile {
            schema_version: SCHEMA_VERSION,
            granularity: granularity.to_string(),
            spec,
            oui_top_n,
            rows: dataset.rows.len() as u64,
            report,
        },
        model: trained,
    })
}

pub fn run_train(args: &TrainArgs) -> Result<(), CliError> {
    let oui_top_n = parse_oui_spec(&args.oui)?;
    let matrix = load_feature_matrix(&args.features, "train")?;
    let labels = load_labels(&args.labels, "train")?;
    let dataset = dataset_stage(
        &matrix,
        &labels,
        &args.granularity,
        args.evf,
        oui_top_n,
        "train",
    )?;
    let outcome = train_stage(
        &dataset,
        &args.granularity,
        &args.model,
        args.grid == "default",
        args.folds,
        args.seed,
        args.svm_c,
        args.min_leaf,
        args.prune,
        oui_top_n,
        args.out.is_some(),
    )?;
    write_json(&args.report, &outcome.eval, "train")?;
    if let (Some(path), Some(model)) = (&args.out, &outcome.model) {
        write_json(path, model, "train")?;
    }
    let r = &outcome.eval.report;
    println!(
        "train: {} on {} rows: accuracy {:.4} (baseline {:.4}, +{:.1} pp), f-measure {:.4}",
        outcome.spec,
        outcome.eval.rows,
        r.accuracy,
        r.baseline_accuracy,
        r.improvement * 100.0,
        r.f_measure
    );
    Ok(())
}

pub(crate) fn sweep_stage(
    timelines: &[DeviceTimeline],
    labels: &[GroundTruthLabel],
    thresholds: &[u32],
    config: &SweepConfig,
) -> SweepFile {
    let map = label_map(labels, "coarse");
    let points = data_sufficiency_sweep(timelines, &map, thresholds, config);
    SweepFile {
        schema_version: SCHEMA_VERSION,
        granularity: "coarse".to_string(),
        svm_c: config.svm_c,
        folds: config.folds,
        points,
    }
}

pub fn run_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let thresholds = parse_thresholds(&args.thresholds)?;
    let timelines = load_timeline_store(&args.timelines, "sweep")?;
    let labels = load_labels(&args.labels, "sweep")?;
    let config = SweepConfig {
        folds: args.folds,
        seed: args.seed,
        svm_c: args.svm_c,
        session_gap_secs: gwprof_core::features::DEFAULT_SESSION_GAP_SECS,
        evf: args.evf,
    };
    let sweep = sweep_stage(&timelines, &labels, &thresholds, &config);
    write_json(&args.out, &sweep, "sweep")?;
    for point in &sweep.points {
        match point.improvement {
            Some(imp) => println!(
                "sweep: threshold {:>2}: kept {:>5}, labeled {:>5}, improvement {:+.1} pp",
                point.threshold,
                point.kept_devices,
                point.labeled_devices,
                imp * 100.0
            ),
            None => println!(
                "sweep: threshold {:>2}: {}",
                point.threshold,
                point.error.as_deref().unwrap_or("no result")
            ),
        }
    }
    Ok(())
}

/// The auxiliary active-day count exposed to the rule learner only: the
/// daily-volume series has one entry per active day, so its count is exactly
/// the number of active days.
pub(crate) fn append_traffic_days(dataset: &mut Dataset, matrix: &FeatureMatrix) {
    let idx = matrix
        .column_index("tx_count")
        .expect("schema includes tx_count");
    let by_mac: BTreeMap<&MacAddress, f64> = matrix
        .macs
        .iter()
        .zip(&matrix.rows)
        .map(|(mac, row)| (mac, row[idx]))
        .collect();
    dataset.feature_names.push("traffic_days".to_string());
    for (mac, row) in dataset.macs.iter().zip(dataset.rows.iter_mut()) {
        row.push(by_mac[mac]);
    }
}

pub(crate) fn rules_stage(
    matrix: &FeatureMatrix,
    labels: &[GroundTruthLabel],
    granularity: &str,
    evf: f64,
    seed: u64,
) -> Result<RulesFile, CliError> {
    let mut dataset = dataset_stage(matrix, labels, granularity, evf, None, "rules")?;
    append_traffic_days(&mut dataset, matrix);
    let rules =
        rules_for_all_classes(&dataset, true, seed).map_err(|e| CliError::stage("rules", e))?;
    Ok(RulesFile {
        schema_version: SCHEMA_VERSION,
        granularity: granularity.to_string(),
        rules,
    })
}

pub fn run_rules(args: &RulesArgs) -> Result<(), CliError> {
    let matrix = load_feature_matrix(&args.features, "rules")?;
    let labels = load_labels(&args.labels, "rules")?;
    let rules = rules_stage(&matrix, &labels, &args.granularity, args.evf, args.seed)?;
    write_json(&args.out, &rules, "rules")?;
    print!("{}", render_markdown(&rules.rules));
    Ok(())
}

/// Write the pipeline outputs below this directory.
pub(crate) fn artifact_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
