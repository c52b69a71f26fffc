//! Subcommand implementations. Every output artifact embeds or sits next to
//! the configuration and seeds that produced it, and files are written
//! atomically (temp then rename), so identical invocations yield
//! byte-identical results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use apideob_core::dataset::{balance, split};
use apideob_core::extract::extract_records;
use apideob_core::listing::{parse_listing, ApiSignatureDb, ImportTable};
use apideob_core::pipeline::{
    count_by_class, load_bundle, run_experiment1, run_experiment2, save_bundle, write_atomic,
    ModelBundle, PipelineConfig, TrainedModel, BUNDLE_SCHEMA_VERSION,
};
use apideob_core::report::EvalReport;
use apideob_core::symexec::{parse_records, serialize_records, ApiCallRecord};
use apideob_core::synth::{default_spec, generate, parse_truth, serialize_truth, SynthSpec};
use apideob_core::tokens::ConstantWhitelist;

use crate::Failure;


/// Print to stdout, swallowing errors from a closed pipe (`| head` must not
/// crash the run or skip artifact writes).
fn emit(text: impl AsRef<str>) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_ref().as_bytes());
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

fn write_artifact(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    write_atomic(path, bytes)?;
    Ok(())
}

/// Sidecar metadata for JSONL artifacts, where the line format itself is
/// fixed by the schema.
fn write_meta<A: Serialize>(out: &Path, command: &str, args: &A) -> Result<(), Failure> {
    let meta = serde_json::json!({ "command": command, "args": args });
    let mut path = out.as_os_str().to_owned();
    path.push(".meta.json");
    write_artifact(
        Path::new(&path),
        serde_json::to_string_pretty(&meta)
            .expect("meta serialization cannot fail")
            .as_bytes(),
    )
}

fn load_sigs(path: &Option<PathBuf>) -> Result<ApiSignatureDb, Failure> {
    match path {
        Some(p) => Ok(ApiSignatureDb::from_json(&read_file(p)?)?),
        None => Ok(ApiSignatureDb::default_db()),
    }
}

#[derive(Args, Serialize)]
pub struct ExtractArgs {
    /// Function listings, JSONL.
    #[arg(long)]
    pub listings: PathBuf,
    /// Import table, JSON map of hex address to API name.
    #[arg(long)]
    pub imports: PathBuf,
    /// API signature database; defaults to the built-in 25-API set.
    #[arg(long)]
    pub sigs: Option<PathBuf>,
    /// Output records, JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed for path selection on dense graphs.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

pub fn extract(args: ExtractArgs) -> Result<(), Failure> {
    let functions = parse_listing(&read_file(&args.listings)?)?;
    let imports = ImportTable::from_json(&read_file(&args.imports)?)?;
    let sigs = load_sigs(&args.sigs)?;
    let outcome = extract_records(&functions, &imports, &sigs, args.seed)?;
    if outcome.records.is_empty() {
        return Err(Failure::empty("no API call records extracted"));
    }
    write_artifact(&args.out, serialize_records(&outcome.records).as_bytes())?;
    write_meta(&args.out, "extract", &args)?;

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "extracted {} records from {} functions",
        outcome.records.len(),
        functions.len()
    );
    let _ = writeln!(summary, "per binary:");
    for (bin, n) in &outcome.per_binary {
        let _ = writeln!(summary, "  {bin}: {n}");
    }
    let _ = writeln!(summary, "per API:");
    for (api, n) in &outcome.per_api {
        let _ = writeln!(summary, "  {api}: {n}");
    }
    if outcome.skipped_no_signature > 0 {
        let _ = writeln!(
            summary,
            "skipped {} calls to imports without signatures",
            outcome.skipped_no_signature
        );
    }
    if outcome.degraded_paths > 0 {
        let _ = writeln!(
            summary,
            "{} functions had no reachable return node (degraded paths)",
            outcome.degraded_paths
        );
    }
    emit(summary);
    Ok(())
}

#[derive(Args, Serialize, Clone)]
pub struct TrainArgs {
    /// Extracted call records, JSONL.
    #[arg(long)]
    pub records: PathBuf,
    /// 1 = single population HMM vs bag-of-words baseline (argument count
    /// treated as known); 2 = per-API HMM bank (argument count inferred).
    #[arg(long)]
    pub experiment: u8,
    /// Hidden states per HMM.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Per-class balancing cap.
    #[arg(long, default_value_t = 400)]
    pub cap: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Disable per-class stratification of the split.
    #[arg(long, default_value_t = false)]
    pub no_stratify: bool,
    /// Constant whitelist override, JSON array of hex strings.
    #[arg(long)]
    pub whitelist: Option<PathBuf>,
    #[arg(long)]
    pub sigs: Option<PathBuf>,
    /// Where the trained bundle is written.
    #[arg(long)]
    pub out_bundle: PathBuf,
    /// Directory for evaluation reports and the split audit file.
    #[arg(long)]
    pub report_dir: PathBuf,
    /// Also dump train/test feature matrices as CSV into the report dir.
    #[arg(long, default_value_t = false)]
    pub dump_features: bool,
}

fn report_envelope<A: Serialize>(
    command: &str,
    args: &A,
    report: &EvalReport,
) -> Result<String, Failure> {
    let doc = serde_json::json!({
        "run": { "command": command, "args": args },
        "report": report,
    });
    Ok(serde_json::to_string_pretty(&doc).expect("report serialization cannot fail"))
}

fn write_report(
    dir: &Path,
    stem: &str,
    args: &TrainArgs,
    report: &EvalReport,
) -> Result<(), Failure> {
    write_artifact(
        &dir.join(format!("{stem}.json")),
        report_envelope("train", args, report)?.as_bytes(),
    )?;
    write_artifact(
        &dir.join(format!("{stem}_confusion.csv")),
        report.confusion_csv().as_bytes(),
    )
}

fn summarize(name: &str, r: &EvalReport) {
    emit(format!(
        "{name}: n={} top1={:.4} top2={:.4} top3={:.4} top4={:.4} top5={:.4} baserate1={:.4}\n",
        r.n_test,
        r.top_k_accuracy[0],
        r.top_k_accuracy[1],
        r.top_k_accuracy[2],
        r.top_k_accuracy[3],
        r.top_k_accuracy[4],
        r.baserate_top_k[0],
    ));
}

pub fn train(args: TrainArgs) -> Result<(), Failure> {
    if !(1..=2).contains(&args.experiment) {
        return Err(Failure::input("--experiment must be 1 or 2"));
    }
    let records = parse_records(&read_file(&args.records)?)?;
    if records.is_empty() {
        return Err(Failure::empty("records file contains no records"));
    }
    let sigs = load_sigs(&args.sigs)?;
    let ds = balance(records, args.cap, args.seed)?;
    if ds.provenance.class_counts.len() < 2 {
        return Err(Failure::insufficient(format!(
            "need at least 2 labeled classes, found {}",
            ds.provenance.class_counts.len()
        )));
    }
    for rec in &ds.records {
        let api = rec.api.as_deref().expect("balance keeps labeled records");
        if let Some(n) = sigs.get(api) {
            if n != rec.n_args {
                return Err(Failure::input(format!(
                    "record at {}:{:#x} says {} takes {} arguments, signature db says {n}",
                    rec.binary_id, rec.call_addr, api, rec.n_args
                )));
            }
        }
    }
    for name in sigs.names() {
        match ds.provenance.class_counts.get(name) {
            None => eprintln!("warning: no records for {name}; class excluded"),
            Some(1) => eprintln!("warning: {name} has a single record; it goes to train"),
            _ => {}
        }
    }
    let s = split(&ds.records, args.train_frac, args.seed, !args.no_stratify)?;
    let train_recs: Vec<&ApiCallRecord> = s.train.iter().map(|&i| &ds.records[i]).collect();
    let test_recs: Vec<&ApiCallRecord> = s.test.iter().map(|&i| &ds.records[i]).collect();

    let mut config = PipelineConfig {
        k: args.k,
        seed: args.seed,
        ..PipelineConfig::default()
    };
    if let Some(wl) = &args.whitelist {
        config.whitelist = ConstantWhitelist::from_json(&read_file(wl)?)?.to_hex_strings();
    }

    let (model, reports) = match args.experiment {
        1 => {
            let (m, seq, bow) = run_experiment1(&train_recs, &test_recs, &config)?;
            (
                TrainedModel::Experiment1(m),
                vec![("report_expt1_seq", seq), ("report_expt1_bow", bow)],
            )
        }
        _ => {
            let (m, r) = run_experiment2(&train_recs, &test_recs, &sigs, &config)?;
            (TrainedModel::Experiment2(m), vec![("report_expt2", r)])
        }
    };

    let classes = match &model {
        TrainedModel::Experiment1(m) => m.mlr_seq.classes.clone(),
        TrainedModel::Experiment2(m) => m.mlr.classes.clone(),
    };
    let bundle = ModelBundle {
        schema_version: BUNDLE_SCHEMA_VERSION,
        config,
        split: Some(s),
        train_class_freq: count_by_class(&train_recs, &classes),
        model,
    };
    save_bundle(&bundle, &args.out_bundle)?;
    write_artifact(
        &args.report_dir.join("split.json"),
        serde_json::to_string_pretty(bundle.split.as_ref().expect("split was just set"))
            .expect("split serialization cannot fail")
            .as_bytes(),
    )?;
    for (stem, report) in &reports {
        write_report(&args.report_dir, stem, &args, report)?;
        summarize(stem, report);
    }
    if args.dump_features {
        dump_features(&bundle, &train_recs, &test_recs, &args.report_dir)?;
    }
    emit(format!("bundle written to {}\n", args.out_bundle.display()));
    Ok(())
}

/// Recompute and export the feature matrices the classifier trained on.
fn dump_features(
    bundle: &ModelBundle,
    train: &[&ApiCallRecord],
    test: &[&ApiCallRecord],
    dir: &Path,
) -> Result<(), Failure> {
    use apideob_core::features::{
        expt2_feature_names, feature_matrix_csv, hmm_feature_names, svd_feature_names,
        vectorize_expt1, vectorize_expt2,
    };
    let abstraction = bundle.config.abstraction()?;
    let last = bundle.config.last_token;
    match &bundle.model {
        TrainedModel::Experiment1(m) => {
            let names = hmm_feature_names("", m.hmm.k);
            let bow_names = svd_feature_names(m.bow_basis.components());
            for (records, tag) in [(train, "train"), (test, "test")] {
                let seq_rows: Vec<Vec<f64>> = records
                    .iter()
                    .map(|r| vectorize_expt1(&m.hmm, &m.vocabulary, &abstraction, last, r))
                    .collect::<apideob_core::Result<_>>()?;
                write_artifact(
                    &dir.join(format!("features_expt1_seq_{tag}.csv")),
                    feature_matrix_csv(&names, &seq_rows).as_bytes(),
                )?;
                let bow_rows: Vec<Vec<f64>> = records
                    .iter()
                    .map(|r| {
                        let tokens = apideob_core::tokens::abstract_sequence(
                            r,
                            r.n_args as usize,
                            &abstraction,
                        )?;
                        Ok(m.bow_basis.project(&m.vocabulary.encode_sequence(&tokens)))
                    })
                    .collect::<apideob_core::Result<_>>()?;
                write_artifact(
                    &dir.join(format!("features_expt1_bow_{tag}.csv")),
                    feature_matrix_csv(&bow_names, &bow_rows).as_bytes(),
                )?;
            }
        }
        TrainedModel::Experiment2(m) => {
            let names = expt2_feature_names(&m.bank);
            for (records, tag) in [(train, "train"), (test, "test")] {
                let rows: Vec<Vec<f64>> = records
                    .iter()
                    .map(|r| vectorize_expt2(&m.bank, &m.vocabulary, &abstraction, last, r))
                    .collect();
                write_artifact(
                    &dir.join(format!("features_expt2_{tag}.csv")),
                    feature_matrix_csv(&names, &rows).as_bytes(),
                )?;
            }
        }
    }
    Ok(())
}

#[derive(Args, Serialize)]
pub struct PredictArgs {
    /// Trained model bundle.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Records to predict on; the `api` field is optional here.
    #[arg(long)]
    pub records: PathBuf,
    /// Output predictions, JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write an evaluation report here (requires labeled records).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    binary_id: &'a str,
    call_addr: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    api: Option<&'a str>,
    top: Vec<RankedName>,
}

#[derive(Serialize)]
struct RankedName {
    api: String,
    p: f64,
}

pub fn predict(args: PredictArgs) -> Result<(), Failure> {
    let bundle = load_bundle(&args.bundle)?;
    let records = parse_records(&read_file(&args.records)?)?;
    if records.is_empty() {
        return Err(Failure::empty("records file contains no records"));
    }
    let classes = bundle.class_names().to_vec();

    let mut lines = String::new();
    let mut ranked_all: Vec<Vec<usize>> = Vec::new();
    let mut labeled: Vec<(usize, usize)> = Vec::new(); // (record idx, class idx)
    for (i, rec) in records.iter().enumerate() {
        let ranking = bundle.predict(rec)?;
        let top: Vec<RankedName> = ranking
            .iter()
            .take(5)
            .map(|(api, p)| RankedName {
                api: api.clone(),
                p: *p,
            })
            .collect();
        let line = PredictionLine {
            binary_id: &rec.binary_id,
            call_addr: rec.call_addr,
            api: rec.api.as_deref(),
            top,
        };
        let _ = writeln!(
            lines,
            "{}",
            serde_json::to_string(&line).expect("prediction serialization cannot fail")
        );
        let indices: Vec<usize> = ranking
            .iter()
            .map(|(api, _)| {
                classes
                    .iter()
                    .position(|c| c == api)
                    .expect("bundle ranks its own classes")
            })
            .collect();
        ranked_all.push(indices);
        if let Some(api) = &rec.api {
            if let Ok(y) = classes.binary_search(api) {
                labeled.push((i, y));
            }
        }
    }
    write_artifact(&args.out, lines.as_bytes())?;
    write_meta(&args.out, "predict", &args)?;

    if let Some(report_path) = &args.report {
        if labeled.is_empty() {
            return Err(Failure::input(
                "--report needs records labeled with known classes",
            ));
        }
        let ranked: Vec<Vec<usize>> = labeled
            .iter()
            .map(|&(i, _)| ranked_all[i].clone())
            .collect();
        let truth: Vec<usize> = labeled.iter().map(|&(_, y)| y).collect();
        let freq = if bundle.train_class_freq.len() == classes.len() {
            bundle.train_class_freq.clone()
        } else {
            vec![0; classes.len()]
        };
        let report = EvalReport::from_predictions(&classes, &ranked, &truth, &freq)?;
        write_artifact(
            report_path,
            report_envelope("predict", &args, &report)?.as_bytes(),
        )?;
        write_artifact(
            &report_path.with_extension("csv"),
            report.confusion_csv().as_bytes(),
        )?;
        summarize("predict", &report);
    }
    emit(format!(
        "wrote {} predictions to {}\n",
        records.len(),
        args.out.display()
    ));
    Ok(())
}

#[derive(Args, Serialize)]
pub struct SynthArgs {
    /// Corpus description; omit to use the built-in default profiles.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Master seed; overrides the seed in --spec when given.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for listings.jsonl, imports.json, truth.jsonl and
    /// the echoed spec.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn synth(args: SynthArgs) -> Result<(), Failure> {
    let mut spec = match &args.spec {
        Some(p) => SynthSpec::from_json(&read_file(p)?)?,
        None => default_spec(args.seed.unwrap_or(7)),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let out = generate(&spec)?;
    fs::create_dir_all(&args.out_dir)?;
    write_artifact(
        &args.out_dir.join("listings.jsonl"),
        apideob_core::listing::serialize_listing(&out.functions).as_bytes(),
    )?;
    write_artifact(
        &args.out_dir.join("imports.json"),
        out.imports.to_json().as_bytes(),
    )?;
    write_artifact(
        &args.out_dir.join("truth.jsonl"),
        serialize_truth(&out.truth).as_bytes(),
    )?;
    write_artifact(&args.out_dir.join("spec.json"), spec.to_json().as_bytes())?;
    emit(format!(
        "generated {} functions, {} planted calls into {}\n",
        out.functions.len(),
        out.truth.len(),
        args.out_dir.display()
    ));
    Ok(())
}

#[derive(Args, Serialize)]
pub struct EvalArgs {
    /// Predictions JSONL as written by `predict`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Ground truth JSONL as written by `synth` (or records with labels).
    #[arg(long)]
    pub truth: PathBuf,
    /// Output report path (JSON; confusion CSV lands beside it).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(serde::Deserialize)]
struct PredictionLineIn {
    binary_id: String,
    call_addr: u32,
    top: Vec<RankedNameIn>,
}

#[derive(serde::Deserialize)]
struct RankedNameIn {
    api: String,
}

pub fn eval(args: EvalArgs) -> Result<(), Failure> {
    let truth = parse_truth(&read_file(&args.truth)?)?;
    let truth_by_site: BTreeMap<(String, u32), String> = truth
        .iter()
        .map(|t| ((t.binary_id.clone(), t.call_addr), t.api.clone()))
        .collect();

    let mut classes: Vec<String> = truth.iter().map(|t| t.api.clone()).collect();
    classes.sort();
    classes.dedup();

    let mut ranked: Vec<Vec<usize>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut unmatched = 0usize;
    for (idx, raw) in read_file(&args.predictions)?.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: PredictionLineIn = serde_json::from_str(raw)
            .map_err(|e| Failure::input(format!("predictions line {}: {e}", idx + 1)))?;
        let Some(api) = truth_by_site.get(&(line.binary_id.clone(), line.call_addr)) else {
            unmatched += 1;
            continue;
        };
        let y = classes
            .binary_search(api)
            .expect("classes cover every truth label");
        let mut list = Vec::with_capacity(line.top.len());
        for name in &line.top {
            // Predicted names outside the truth's class set cannot be a hit;
            // they are dropped from the ranking rather than failing the run.
            if let Ok(c) = classes.binary_search(&name.api) {
                list.push(c);
            }
        }
        ranked.push(list);
        labels.push(y);
    }
    if ranked.is_empty() {
        return Err(Failure::empty(
            "no predictions matched the ground-truth call sites",
        ));
    }

    // Baserate reference from the ground-truth label frequencies.
    let mut freq = vec![0usize; classes.len()];
    for &y in &labels {
        freq[y] += 1;
    }
    let report = EvalReport::from_topk_predictions(&classes, &ranked, &labels, &freq)?;
    write_artifact(&args.out, report_envelope("eval", &args, &report)?.as_bytes())?;
    write_artifact(
        &args.out.with_extension("csv"),
        report.confusion_csv().as_bytes(),
    )?;
    summarize("eval", &report);
    if unmatched > 0 {
        emit(format!("{unmatched} predictions had no matching truth record\n"));
    }
    Ok(())
}
