//! End-to-end pipeline: synth -> ingest -> label -> extract -> analyze ->
//! train -> sweep -> rules, driven by one config with a single root seed.
//! Reports are JSON plus a human-readable summary; any stage failure aborts
//! with a stage-named diagnostic.

use crate::stages::{
    analyze_stage, artifact_path, dataset_stage, label_stage, load_profiles, load_ruleset,
    rules_stage, sweep_stage, train_stage, write_json, EvalFile, IngestReport, LabelsFile,
    SweepFile, SCHEMA_VERSION,
};
use crate::{CliError, PipelineArgs};
use gwprof_core::classify::{derive_seed, SweepConfig};
use gwprof_core::features::extract_corpus;
use gwprof_core::ingest::save_timelines;
use gwprof_core::rules::render_markdown;
use gwprof_core::synth::{generate_corpus, GeneratorConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

fn default_out_dir() -> PathBuf {
    PathBuf::from("gwprof-run")
}
fn default_homes() -> usize {
    240
}
fn default_days() -> u32 {
    90
}
fn default_seed() -> u64 {
    7
}
fn default_min_days() -> u32 {
    3
}
fn default_session_gap_mins() -> u32 {
    15
}
fn default_evf() -> f64 {
    6.0
}
fn default_folds() -> usize {
    10
}
fn default_cfs_k() -> Vec<usize> {
    vec![10, 20]
}
fn default_svm_c() -> f64 {
    1.0
}
fn default_min_leaf() -> usize {
    5
}
fn default_oui_top_n() -> usize {
    10
}
fn default_sweep_thresholds() -> Vec<u32> {
    vec![1, 2, 4, 8, 16, 30]
}
fn default_true() -> bool {
    true
}

/// Everything the pipeline needs; every numeric default matches the values
/// the methodology fixes (3 active days, 15 min gap, EVF 6, 10 folds).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Generate a synthetic corpus; otherwise `trace` must point at one.
    #[serde(default = "default_true")]
    pub synth: bool,
    #[serde(default = "default_homes")]
    pub homes: usize,
    #[serde(default = "default_days")]
    pub days: u32,
    #[serde(default)]
    pub profiles: Option<PathBuf>,
    /// Existing trace file, used when `synth` is false.
    #[serde(default)]
    pub trace: Option<PathBuf>,
    #[serde(default)]
    pub label_rules: Option<PathBuf>,
    #[serde(default = "default_min_days")]
    pub min_days: u32,
    #[serde(default = "default_session_gap_mins")]
    pub session_gap_mins: u32,
    #[serde(default = "default_evf")]
    pub evf: f64,
    #[serde(default = "default_cfs_k")]
    pub cfs_k: Vec<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_svm_c")]
    pub svm_c: f64,
    #[serde(default = "default_min_leaf")]
    pub cart_min_leaf: usize,
    #[serde(default)]
    pub cart_prune: bool,
    #[serde(default = "default_oui_top_n")]
    pub oui_top_n: usize,
    #[serde(default = "default_true")]
    pub run_sweep: bool,
    #[serde(default = "default_sweep_thresholds")]
    pub sweep_thresholds: Vec<u32>,
    #[serde(default = "default_true")]
    pub run_rules: bool,
    #[serde(default)]
    pub run_grid: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

pub fn run_pipeline_command(args: &PipelineArgs) -> Result<(), CliError> {
    let mut config: PipelineConfig = match &args.config {
        None => PipelineConfig::default(),
        Some(path) => {
            let json = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&json).map_err(|e| CliError::Config(e.to_string()))?
        }
    };
    if let Some(out_dir) = &args.out_dir {
        config.out_dir = out_dir.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(homes) = args.homes {
        config.homes = homes;
    }
    if let Some(days) = args.days {
        config.days = days;
    }
    if args.no_sweep {
        config.run_sweep = false;
    }
    if args.grid {
        config.run_grid = true;
    }
    run_pipeline(&config)
}

/// Execute the stages in dependency order, writing every artifact under
/// `config.out_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<(), CliError> {
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(e.to_string()))?;
    write_json(&artifact_path(dir, "config.json"), config, "config")?;

    // Synth.
    let trace_path = if config.synth {
        let set = load_profiles(config.profiles.as_deref())?;
        let gen_config = GeneratorConfig {
            homes: config.homes,
            days: config.days,
            seed: derive_seed(config.seed, "synth"),
            start_ts: gwprof_core::synth::DEFAULT_START_TS,
        };
        let corpus_dir = dir.join("corpus");
        let summary = generate_corpus(&set, &gen_config, &corpus_dir)
            .map_err(|e| CliError::stage("synth", e))?;
        println!(
            "pipeline/synth: {} devices, {} records ({:.1} MB)",
            summary.devices,
            summary.records,
            summary.trace_bytes as f64 / 1e6
        );
        corpus_dir.join("trace.jsonl")
    } else {
        config
            .trace
            .clone()
            .ok_or_else(|| CliError::Config("synth disabled and no trace given".into()))?
    };

    // Ingest. The unfiltered population is kept around so the
    // data-sufficiency sweep can go below the configured threshold.
    let all_timelines = crate::stages::parse_stage(&trace_path)?;
    let (kept, mut population) =
        gwprof_core::ingest::filter_population(all_timelines.clone(), config.min_days);
    let timelines_path = artifact_path(dir, "timelines.bin");
    let out = File::create(&timelines_path).map_err(|e| CliError::stage("ingest", e))?;
    save_timelines(BufWriter::new(out), &kept).map_err(|e| CliError::stage("ingest", e))?;
    println!(
        "pipeline/ingest: kept {} of {} devices",
        population.nontransient, population.total
    );

    // Label.
    let rules = load_ruleset(config.label_rules.as_deref())?;
    let labels = label_stage(&kept, &rules);
    population.coarse_labeled = labels.iter().filter(|l| l.coarse.is_some()).count() as u64;
    population.fine_labeled = labels.iter().filter(|l| l.fine.is_some()).count() as u64;
    population
        .validate()
        .map_err(|e| CliError::stage("label", e))?;
    write_json(
        &artifact_path(dir, "labels.json"),
        &LabelsFile {
            schema_version: SCHEMA_VERSION,
            labels: labels.clone(),
        },
        "label",
    )?;
    write_json(
        &artifact_path(dir, "population.json"),
        &IngestReport {
            schema_version: SCHEMA_VERSION,
            min_days: config.min_days,
            population: population.clone(),
        },
        "label",
    )?;
    println!(
        "pipeline/label: {} coarse, {} fine",
        population.coarse_labeled, population.fine_labeled
    );

    // Extract.
    let gap = config.session_gap_mins as i64 * 60;
    let (matrix, skipped) = extract_corpus(&kept, gap);
    for (mac, err) in &skipped {
        log::warn!("pipeline/extract: skipping {mac}: {err}");
    }
    let features_path = artifact_path(dir, "features.csv");
    let out = File::create(&features_path).map_err(|e| CliError::stage("extract", e))?;
    matrix
        .write_csv(BufWriter::new(out))
        .map_err(|e| CliError::stage("extract", e))?;
    println!(
        "pipeline/extract: {} devices x {} features",
        matrix.rows.len(),
        matrix.names.len()
    );

    // Analyze.
    let (analysis, _) = analyze_stage(&matrix, &labels, config.evf, &config.cfs_k)?;
    write_json(&artifact_path(dir, "analysis.json"), &analysis, "analyze")?;
    println!(
        "pipeline/analyze: {} features rescaled, 95% variance at {} components",
        analysis.rescaled.len(),
        analysis.pca.components_for_95
    );

    // Train: both classifiers, both granularities, with and without OUI.
    let mut evals: Vec<EvalFile> = Vec::new();
    for granularity in ["coarse", "fine"] {
        for model in ["zeror", "cart", "svm"] {
            for oui in [None, Some(config.oui_top_n)] {
                if model == "zeror" && oui.is_some() {
                    continue;
                }
                let dataset =
                    dataset_stage(&matrix, &labels, granularity, config.evf, oui, "train")?;
                let seed = derive_seed(config.seed, &format!("train-{granularity}-{model}"));
                let outcome = train_stage(
                    &dataset,
                    granularity,
                    model,
                    config.run_grid && model != "zeror",
                    config.folds,
                    seed,
                    config.svm_c,
                    config.cart_min_leaf,
                    config.cart_prune,
                    oui,
                    oui.is_none(),
                )?;
                let suffix = match oui {
                    None => String::new(),
                    Some(n) => format!("_oui{n}"),
                };
                write_json(
                    &artifact_path(dir, &format!("eval_{model}_{granularity}{suffix}.json")),
                    &outcome.eval,
                    "train",
                )?;
                if let Some(model_file) = &outcome.model {
                    write_json(
                        &artifact_path(dir, &format!("model_{model}_{granularity}.json")),
                        model_file,
                        "train",
                    )?;
                }
                println!(
                    "pipeline/train: {granularity:<6} {model:<5} oui={:<3} accuracy {:.4} (+{:.1} pp)",
                    oui.map(|_| "on").unwrap_or("off"),
                    outcome.eval.report.accuracy,
                    outcome.eval.report.improvement * 100.0
                );
                evals.push(outcome.eval);
            }
        }
    }

    // Sweep, over the unfiltered population so low thresholds re-admit the
    // transient devices.
    let sweep = if config.run_sweep {
        let sweep_config = SweepConfig {
            folds: config.folds,
            seed: derive_seed(config.seed, "sweep"),
            svm_c: config.svm_c,
            session_gap_secs: gap,
            evf: config.evf,
        };
        let all_labels = label_stage(&all_timelines, &rules);
        let sweep = sweep_stage(&all_timelines, &all_labels, &config.sweep_thresholds, &sweep_config);
        write_json(&artifact_path(dir, "sweep.json"), &sweep, "sweep")?;
        println!("pipeline/sweep: {} thresholds", sweep.points.len());
        Some(sweep)
    } else {
        None
    };

    // Rules.
    let rules_file = if config.run_rules {
        let rules_file = rules_stage(
            &matrix,
            &labels,
            "fine",
            config.evf,
            derive_seed(config.seed, "rules"),
        )?;
        write_json(&artifact_path(dir, "rules.json"), &rules_file, "rules")?;
        std::fs::write(
            artifact_path(dir, "rules.md"),
            render_markdown(&rules_file.rules),
        )
        .map_err(|e| CliError::stage("rules", e))?;
        println!("pipeline/rules: {} classes", rules_file.rules.len());
        Some(rules_file)
    } else {
        None
    };

    write_summary(dir, &population, &evals, sweep.as_ref(), rules_file.as_ref())?;
    println!("pipeline: reports written to {}", dir.display());
    Ok(())
}

fn write_summary(
    dir: &Path,
    population: &gwprof_core::ingest::PopulationReport,
    evals: &[EvalFile],
    sweep: Option<&SweepFile>,
    rules: Option<&crate::stages::RulesFile>,
) -> Result<(), CliError> {
    let mut md = String::new();
    md.push_str("# Run summary\n\n## Population funnel\n\n");
    md.push_str("| stage | devices |\n|---|---|\n");
    md.push_str(&format!("| observed | {} |\n", population.total));
    md.push_str(&format!(
        "| wired or unreliable counters | {} |\n",
        population.wired
    ));
    md.push_str(&format!("| wireless | {} |\n", population.wireless));
    md.push_str(&format!("| transient | {} |\n", population.transient));
    md.push_str(&format!("| kept (non-transient) | {} |\n", population.nontransient));
    md.push_str(&format!("| coarse labeled | {} |\n", population.coarse_labeled));
    md.push_str(&format!("| fine labeled | {} |\n", population.fine_labeled));

    md.push_str("\n## Cross-validated accuracy\n\n");
    md.push_str("| granularity | model | oui | rows | baseline | accuracy | improvement | f-measure |\n");
    md.push_str("|---|---|---|---|---|---|---|---|\n");
    for eval in evals {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {:.4} | {:.4} | {:+.1} pp | {:.4} |\n",
            eval.granularity,
            eval.spec,
            eval.oui_top_n.map(|n| format!("top {n}")).unwrap_or_else(|| "off".into()),
            eval.rows,
            eval.report.baseline_accuracy,
            eval.report.accuracy,
            eval.report.improvement * 100.0,
            eval.report.f_measure
        ));
    }

    if let Some(sweep) = sweep {
        md.push_str("\n## Data sufficiency (SVM, coarse labels)\n\n");
        md.push_str("| min active days | kept | labeled | improvement |\n|---|---|---|---|\n");
        for point in &sweep.points {
            match point.improvement {
                Some(imp) => md.push_str(&format!(
                    "| {} | {} | {} | {:+.1} pp |\n",
                    point.threshold, point.kept_devices, point.labeled_devices, imp * 100.0
                )),
                None => md.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    point.threshold,
                    point.kept_devices,
                    point.labeled_devices,
                    point.error.as_deref().unwrap_or("-")
                )),
            }
        }
    }

    if let Some(rules) = rules {
        md.push_str("\n## Behavior rules (one-vs-rest conjunctions)\n\n");
        md.push_str(&render_markdown(&rules.rules));
    }

    std::fs::write(artifact_path(dir, "summary.md"), md)
        .map_err(|e| CliError::stage("summary", e))?;

    let artifacts: BTreeMap<&str, bool> = BTreeMap::from([
        ("population.json", true),
        ("labels.json", true),
        ("features.csv", true),
        ("analysis.json", true),
        ("sweep.json", sweep.is_some()),
        ("rules.json", rules.is_some()),
    ]);
    #[derive(Serialize)]
    struct SummaryIndex<'a> {
        schema_version: u32,
        artifacts: BTreeMap<&'a str, bool>,
        evals: Vec<String>,
    }
    write_json(
        &artifact_path(dir, "summary.json"),
        &SummaryIndex {
            schema_version: SCHEMA_VERSION,
            artifacts,
            evals: evals
                .iter()
                .map(|e| {
                    format!(
                        "eval_{}_{}{}.json",
                        match e.spec {
                            gwprof_core::classify::ModelSpec::ZeroR => "zeror",
                            gwprof_core::classify::ModelSpec::Cart { .. } => "cart",
                            gwprof_core::classify::ModelSpec::Svm { .. } => "svm",
                        },
                        e.granularity,
                        e.oui_top_n.map(|n| format!("_oui{n}")).unwrap_or_default()
                    )
                })
                .collect(),
        },
        "summary",
    )
}
