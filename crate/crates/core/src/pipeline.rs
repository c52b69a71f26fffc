//! Experiment orchestration and the trained-model bundle.
//!
//! Experiment 1 trains a single population HMM with the argument count
//! treated as known, against a bag-of-words SVD baseline with the same
//! feature budget. Experiment 2 trains one HMM per API and vectorizes test
//! records without ever consulting their labels or true argument counts.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SplitIndices;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::features::{
    hmm_features, vectorize_expt2, BankEntry, HmmBank, LastTokenFeature,
};
use crate::hmm::{baum_welch, HmmParams, TrainOptions};
use crate::listing::ApiSignatureDb;
use crate::mlr::{train_mlr, MlrModel, MlrOptions};
use crate::report::EvalReport;
use crate::svd::{fit_bow_basis, BowBasis};
use crate::symexec::ApiCallRecord;
use crate::tokens::{abstract_sequence, AbstractionConfig, ConstantWhitelist, Vocabulary};

/// Everything the experiments need beyond the data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Hidden-state count per HMM.
    pub k: usize,
    pub seed: u64,
    pub last_token: LastTokenFeature,
    pub bw: TrainOptions,
    pub mlr: MlrOptions,
    /// Pointer band for argument abstraction.
    pub pointer_band: (u32, u32),
    /// Constant whitelist, as hex strings so the config serializes cleanly.
    pub whitelist: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 10,
            seed: 7,
            last_token: LastTokenFeature::default(),
            bw: TrainOptions::default(),
            mlr: MlrOptions::default(),
            pointer_band: crate::tokens::DEFAULT_POINTER_BAND,
            whitelist: ConstantWhitelist::default().to_hex_strings(),
        }
    }
}

impl PipelineConfig {
    pub fn abstraction(&self) -> Result<AbstractionConfig> {
        let json = serde_json::to_string(&self.whitelist)?;
        Ok(AbstractionConfig {
            whitelist: ConstantWhitelist::from_json(&json)?,
            pointer_band: self.pointer_band,
        })
    }
}

fn class_order(records: &[&ApiCallRecord]) -> Vec<String> {
    let mut names: Vec<String> = records
        .iter()
        .filter_map(|r| r.api.clone())
        .collect();
    names.sort();
    names.dedup();
    names
}

fn label_of(rec: &ApiCallRecord, classes: &[String]) -> Result<usize> {
    let api = rec
        .api
        .as_deref()
        .ok_or_else(|| Error::contract("training record without a label"))?;
    classes
        .binary_search_by(|c| c.as_str().cmp(api))
        .map_err(|_| Error::contract(format!("label `{api}` not in class set")))
}

fn true_length_tokens(
    rec: &ApiCallRecord,
    cfg: &AbstractionConfig,
) -> Result<Vec<String>> {
    abstract_sequence(rec, rec.n_args as usize, cfg)
}

fn class_frequencies(labels: &[usize], m: usize) -> Vec<usize> {
    let mut freq = vec![0usize; m];
    for &y in labels {
        freq[y] += 1;
    }
    freq
}

/// Per-class record counts in `classes` order; labels outside the class set
/// are ignored.
pub fn count_by_class(records: &[&ApiCallRecord], classes: &[String]) -> Vec<usize> {
    let mut freq = vec![0usize; classes.len()];
    for rec in records {
        if let Ok(y) = label_of(rec, classes) {
            freq[y] += 1;
        }
    }
    freq
}

/// Artifacts of experiment 1: the population HMM route and the bag-of-words
/// route share the vocabulary and the feature budget.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Experiment1Model {
    pub vocabulary: Vocabulary,
    pub hmm: crate::Hmm,
    pub mlr_seq: crate::Classifier,
    pub bow_basis: crate::Basis,
    pub mlr_bow: crate::Classifier,
}

/// Artifacts of experiment 2: the per-API bank and its classifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Experiment2Model {
    pub vocabulary: Vocabulary,
    pub bank: crate::Bank,
    pub mlr: crate::Classifier,
}

/// Known-argument-count experiment. Returns the trained artifacts and the
/// held-out reports for the sequential and bag-of-words vectorizations.
pub fn run_experiment1(
    train: &[&ApiCallRecord],
    test: &[&ApiCallRecord],
    cfg: &PipelineConfig,
) -> Result<(Experiment1Model, EvalReport, EvalReport)> {
    let abstraction = cfg.abstraction()?;
    let classes = class_order(train);
    if classes.len() < 2 {
        return Err(Error::contract("experiment needs at least two classes"));
    }

    let train_tokens: Vec<Vec<String>> = train
        .iter()
        .map(|r| true_length_tokens(r, &abstraction))
        .collect::<Result<_>>()?;
    let vocabulary = Vocabulary::build(train_tokens.iter().map(Vec::as_slice));
    let train_seqs: Vec<Vec<usize>> = train_tokens
        .iter()
        .map(|t| vocabulary.encode_sequence(t))
        .collect();

    let hmm: HmmParams<f64> = baum_welch(
        &train_seqs,
        cfg.k,
        vocabulary.w_total(),
        derive_seed(cfg.seed, "expt1:hmm"),
        cfg.bw,
    )?;

    let train_labels: Vec<usize> = train
        .iter()
        .map(|r| label_of(r, &classes))
        .collect::<Result<_>>()?;
    let test_labels: Vec<usize> = test
        .iter()
        .map(|r| label_of(r, &classes))
        .collect::<Result<_>>()?;
    let test_seqs: Vec<Vec<usize>> = test
        .iter()
        .map(|r| Ok(vocabulary.encode_sequence(&true_length_tokens(r, &abstraction)?)))
        .collect::<Result<_>>()?;

    // Sequential route.
    let feats = |seqs: &[Vec<usize>]| -> Vec<Vec<f64>> {
        seqs.par_iter()
            .map(|y| hmm_features(&hmm, y, cfg.last_token))
            .collect()
    };
    let x_train = feats(&train_seqs);
    let x_test = feats(&test_seqs);
    let mlr_seq = train_mlr(
        &x_train,
        &train_labels,
        classes.clone(),
        cfg.mlr,
        derive_seed(cfg.seed, "expt1:mlr_seq"),
    )?;
    let report_seq = evaluate(&mlr_seq, &x_test, &test_labels, &train_labels)?;

    // Bag-of-words route with the same number of features.
    let bow_basis: BowBasis<f64> = fit_bow_basis(&train_seqs, vocabulary.w_total(), cfg.k + 3);
    let bx_train: Vec<Vec<f64>> = train_seqs.iter().map(|y| bow_basis.project(y)).collect();
    let bx_test: Vec<Vec<f64>> = test_seqs.iter().map(|y| bow_basis.project(y)).collect();
    let mlr_bow = train_mlr(
        &bx_train,
        &train_labels,
        classes,
        cfg.mlr,
        derive_seed(cfg.seed, "expt1:mlr_bow"),
    )?;
    let report_bow = evaluate(&mlr_bow, &bx_test, &test_labels, &train_labels)?;

    Ok((
        Experiment1Model {
            vocabulary,
            hmm,
            mlr_seq,
            bow_basis,
            mlr_bow,
        },
        report_seq,
        report_bow,
    ))
}

/// Unknown-argument-count experiment: per-API HMM bank and the wide
/// concatenated vectorization.
pub fn run_experiment2(
    train: &[&ApiCallRecord],
    test: &[&ApiCallRecord],
    sigs: &ApiSignatureDb,
    cfg: &PipelineConfig,
) -> Result<(Experiment2Model, EvalReport)> {
    let abstraction = cfg.abstraction()?;
    let classes = class_order(train);
    if classes.len() < 2 {
        return Err(Error::contract("experiment needs at least two classes"));
    }

    // Training sequences are sliced at each record's own API length.
    let train_tokens: Vec<Vec<String>> = train
        .iter()
        .map(|r| true_length_tokens(r, &abstraction))
        .collect::<Result<_>>()?;
    let vocabulary = Vocabulary::build(train_tokens.iter().map(Vec::as_slice));

    let mut per_class_seqs: BTreeMap<&str, Vec<Vec<usize>>> = BTreeMap::new();
    for (rec, tokens) in train.iter().zip(&train_tokens) {
        per_class_seqs
            .entry(rec.api.as_deref().expect("labels checked by class_order"))
            .or_default()
            .push(vocabulary.encode_sequence(tokens));
    }

    let entries: Vec<BankEntry<f64>> = classes
        .par_iter()
        .map(|api| {
            let n_args = sigs
                .get(api)
                .ok_or_else(|| Error::contract(format!("no signature for `{api}`")))?;
            let hmm = baum_welch(
                &per_class_seqs[api.as_str()],
                cfg.k,
                vocabulary.w_total(),
                derive_seed(cfg.seed, &format!("expt2:hmm:{api}")),
                cfg.bw,
            )?;
            Ok(BankEntry {
                api: api.clone(),
                n_args,
                hmm,
            })
        })
        .collect::<Result<_>>()?;
    let bank = HmmBank { entries };

    let vectorize = |records: &[&ApiCallRecord]| -> Vec<Vec<f64>> {
        records
            .par_iter()
            .map(|r| vectorize_expt2(&bank, &vocabulary, &abstraction, cfg.last_token, r))
            .collect()
    };
    let x_train = vectorize(train);
    let x_test = vectorize(test);
    let train_labels: Vec<usize> = train
        .iter()
        .map(|r| label_of(r, &classes))
        .collect::<Result<_>>()?;
    let test_labels: Vec<usize> = test
        .iter()
        .map(|r| label_of(r, &classes))
        .collect::<Result<_>>()?;

    let mlr = train_mlr(
        &x_train,
        &train_labels,
        classes,
        cfg.mlr,
        derive_seed(cfg.seed, "expt2:mlr"),
    )?;
    let report = evaluate(&mlr, &x_test, &test_labels, &train_labels)?;

    Ok((
        Experiment2Model {
            vocabulary,
            bank,
            mlr,
        },
        report,
    ))
}

fn evaluate(
    model: &MlrModel<f64>,
    x_test: &[Vec<f64>],
    test_labels: &[usize],
    train_labels: &[usize],
) -> Result<EvalReport> {
    let ranked: Vec<Vec<usize>> = x_test
        .iter()
        .map(|x| {
            Ok(model
                .predict(x)?
                .into_iter()
                .map(|(c, _)| c)
                .collect::<Vec<_>>())
        })
        .collect::<Result<_>>()?;
    let freq = class_frequencies(train_labels, model.classes.len());
    EvalReport::from_predictions(&model.classes, &ranked, test_labels, &freq)
}

/// Schema version written into bundles; loads refuse anything else.
pub const BUNDLE_SCHEMA_VERSION: u64 = 1;

/// One self-contained trained artifact: config, vocabulary-bearing model and
/// enough provenance to reproduce the run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_version: u64,
    pub config: PipelineConfig,
    /// The split that produced the held-out report, for audit.
    pub split: Option<SplitIndices>,
    /// Per-class training counts, in class order; drives the baserate
    /// comparison when re-evaluating from a bundle.
    #[serde(default)]
    pub train_class_freq: Vec<usize>,
    pub model: TrainedModel,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Experiment1(Experiment1Model),
    Experiment2(Experiment2Model),
}

impl ModelBundle {
    pub fn validate(&self) -> Result<()> {
        match &self.model {
            TrainedModel::Experiment1(m) => {
                m.hmm.validate()?;
                m.mlr_seq.validate()?;
                m.mlr_bow.validate()?;
            }
            TrainedModel::Experiment2(m) => {
                m.bank.validate()?;
                m.mlr.validate()?;
            }
        }
        Ok(())
    }

    /// Ranked (api, probability) predictions for one record.
    pub fn predict(&self, rec: &ApiCallRecord) -> Result<Vec<(String, f64)>> {
        let abstraction = self.config.abstraction()?;
        let (model, x): (&MlrModel<f64>, Vec<f64>) = match &self.model {
            TrainedModel::Experiment1(m) => {
                let tokens = true_length_tokens(rec, &abstraction)?;
                let y = m.vocabulary.encode_sequence(&tokens);
                (
                    &m.mlr_seq,
                    hmm_features(&m.hmm, &y, self.config.last_token),
                )
            }
            TrainedModel::Experiment2(m) => (
                &m.mlr,
                vectorize_expt2(
                    &m.bank,
                    &m.vocabulary,
                    &abstraction,
                    self.config.last_token,
                    rec,
                ),
            ),
        };
        Ok(model
            .predict(&x)?
            .into_iter()
            .map(|(c, p)| (model.classes[c].clone(), p))
            .collect())
    }

    pub fn class_names(&self) -> &[String] {
        match &self.model {
            TrainedModel::Experiment1(m) => &m.mlr_seq.classes,
            TrainedModel::Experiment2(m) => &m.mlr.classes,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<ModelBundle> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::validation("bundle has no schema_version"))?;
        if found != BUNDLE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found,
                expected: BUNDLE_SCHEMA_VERSION,
            });
        }
        let bundle: ModelBundle = serde_json::from_value(value)?;
        bundle.validate()?;
        Ok(bundle)
    }
}

/// Atomic write: temp file in the same directory, then rename.
pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    write_atomic(path, bundle.to_json()?.as_bytes())
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    ModelBundle::from_json(&std::fs::read_to_string(path)?)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp~");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{balance, split};
    use crate::extract::extract_records;
    use crate::symexec::RawArg;
    use crate::synth::{default_spec, generate};

    fn tiny_corpus() -> Vec<ApiCallRecord> {
        let mut spec = default_spec(11);
        spec.calls_per_api = 30;
        spec.binaries = 2;
        let out = generate(&spec).unwrap();
        extract_records(
            &out.functions,
            &out.imports,
            &ApiSignatureDb::default_db(),
            3,
        )
        .unwrap()
        .records
    }

    fn fast_cfg() -> PipelineConfig {
        PipelineConfig {
            k: 3,
            seed: 5,
            bw: TrainOptions {
                max_iters: 30,
                tol: 1e-4,
            },
            mlr: MlrOptions {
                max_epochs: 250,
                ..MlrOptions::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn experiments_run_and_beat_chance_on_a_tiny_corpus() {
        let records = tiny_corpus();
        let ds = balance(records, 30, 1).unwrap();
        let s = split(&ds.records, 0.8, 2, true).unwrap();
        let train: Vec<&ApiCallRecord> = s.train.iter().map(|&i| &ds.records[i]).collect();
        let test: Vec<&ApiCallRecord> = s.test.iter().map(|&i| &ds.records[i]).collect();
        let cfg = fast_cfg();

        let (_m1, seq, bow) = run_experiment1(&train, &test, &cfg).unwrap();
        let chance = 1.0 / seq.classes.len() as f64;
        assert!(seq.top1() > chance * 2.0, "seq top1 {}", seq.top1());
        assert!(bow.top1() > chance, "bow top1 {}", bow.top1());
        for w in seq.top_k_accuracy.windows(2) {
            assert!(w[1] >= w[0]);
        }

        let (_m2, r2) = run_experiment2(&train, &test, &ApiSignatureDb::default_db(), &cfg).unwrap();
        assert!(r2.top1() > chance * 2.0, "expt2 top1 {}", r2.top1());
        assert_eq!(r2.top_m_accuracy, 1.0);
    }

    #[test]
    fn bundle_round_trip_preserves_predictions_bit_for_bit() {
        let records = tiny_corpus();
        let ds = balance(records, 25, 1).unwrap();
        let s = split(&ds.records, 0.8, 2, true).unwrap();
        let train: Vec<&ApiCallRecord> = s.train.iter().map(|&i| &ds.records[i]).collect();
        let test: Vec<&ApiCallRecord> = s.test.iter().map(|&i| &ds.records[i]).collect();
        let cfg = fast_cfg();
        let (model, _) =
            run_experiment2(&train, &test, &ApiSignatureDb::default_db(), &cfg).unwrap();
        let bundle = ModelBundle {
            schema_version: BUNDLE_SCHEMA_VERSION,
            config: cfg,
            split: Some(s),
            train_class_freq: Vec::new(),
            model: TrainedModel::Experiment2(model),
        };

        let dir = std::env::temp_dir().join(format!("bundle_rt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        save_bundle(&bundle, &path).unwrap();
        let loaded = load_bundle(&path).unwrap();
        for rec in test.iter().take(10) {
            let before = bundle.predict(rec).unwrap();
            let after = loaded.predict(rec).unwrap();
            assert_eq!(before.len(), after.len());
            for ((ca, pa), (cb, pb)) in before.iter().zip(&after) {
                assert_eq!(ca, cb);
                assert_eq!(pa.to_bits(), pb.to_bits());
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bundle_rejects_wrong_schema_and_truncation() {
        let err = ModelBundle::from_json(r#"{"schema_version": 99}"#).unwrap_err();
        match err {
            Error::SchemaVersion { found, expected } => {
                assert_eq!(found, 99);
                assert_eq!(expected, BUNDLE_SCHEMA_VERSION);
            }
            other => panic!("unexpected error {other}"),
        }
        assert!(ModelBundle::from_json("{\"schema_ver").is_err());
    }

    #[test]
    fn expt2_vectorization_ignores_test_labels() {
        let records = tiny_corpus();
        let ds = balance(records, 20, 1).unwrap();
        let s = split(&ds.records, 0.8, 2, true).unwrap();
        let train: Vec<&ApiCallRecord> = s.train.iter().map(|&i| &ds.records[i]).collect();
        let test: Vec<&ApiCallRecord> = s.test.iter().map(|&i| &ds.records[i]).collect();
        let cfg = fast_cfg();
        let (model, _) =
            run_experiment2(&train, &test, &ApiSignatureDb::default_db(), &cfg).unwrap();
        let bundle = ModelBundle {
            schema_version: BUNDLE_SCHEMA_VERSION,
            config: fast_cfg(),
            split: None,
            train_class_freq: Vec::new(),
            model: TrainedModel::Experiment2(model),
        };
        // Stripping the label and lying about n_args must not change the
        // prediction.
        let mut rec = test[0].clone();
        let labeled = bundle.predict(&rec).unwrap();
        rec.api = None;
        rec.n_args = 3;
        let unlabeled = bundle.predict(&rec).unwrap();
        assert_eq!(labeled, unlabeled);
    }

    #[test]
    fn stationary_marginal_mode_trains_and_round_trips() {
        let records = tiny_corpus();
        let ds = balance(records, 20, 1).unwrap();
        let s = split(&ds.records, 0.8, 2, true).unwrap();
        let train: Vec<&ApiCallRecord> = s.train.iter().map(|&i| &ds.records[i]).collect();
        let test: Vec<&ApiCallRecord> = s.test.iter().map(|&i| &ds.records[i]).collect();
        let cfg = PipelineConfig {
            last_token: crate::features::LastTokenFeature::StationaryMarginal,
            ..fast_cfg()
        };
        let (model, report) =
            run_experiment2(&train, &test, &ApiSignatureDb::default_db(), &cfg).unwrap();
        assert!(report.top1() > 1.0 / 25.0);
        let bundle = ModelBundle {
            schema_version: BUNDLE_SCHEMA_VERSION,
            config: cfg,
            split: None,
            train_class_freq: Vec::new(),
            model: TrainedModel::Experiment2(model),
        };
        let back = ModelBundle::from_json(&bundle.to_json().unwrap()).unwrap();
        assert!(matches!(
            back.config.last_token,
            crate::features::LastTokenFeature::StationaryMarginal
        ));
        assert_eq!(back.predict(test[0]).unwrap(), bundle.predict(test[0]).unwrap());
    }

    #[test]
    fn records_without_labels_are_rejected_for_training() {
        let rec = ApiCallRecord {
            binary_id: "b".into(),
            call_addr: 0,
            api: None,
            n_args: 3,
            raw_args: vec![RawArg::Star; 12],
            image_range: None,
        };
        let recs = [&rec, &rec];
        let err = run_experiment1(&recs, &recs, &fast_cfg()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
