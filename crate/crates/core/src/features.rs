//! Turning token sequences into classifier feature vectors.
//!
//! A trained HMM summarizes a sequence as K+3 numbers: the log filtered
//! terminal posterior over the K hidden states, plus three likelihood
//! figures (total, per-token mean, and the last observation's contribution).
//! The unknown-argument-count vectorizer concatenates one such block per
//! candidate API, defaulting blocks that cannot be built.

use serde::{Deserialize, Serialize};

use crate::hmm::HmmParams;
use crate::num::{logsumexp, Real};
use crate::symexec::ApiCallRecord;
use crate::tokens::{abstract_sequence, AbstractionConfig, Vocabulary};

/// Log-scale floor for every feature; also the fill value for blocks that
/// cannot be constructed.
pub const FEATURE_FLOOR: f64 = -200.0;

/// How the "last observation" likelihood feature is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LastTokenFeature {
    /// log P(y_T | y_{1:T-1}) — the trajectory-conditional reading.
    #[default]
    Predictive,
    /// log P(y_T) under the stationary state distribution.
    StationaryMarginal,
}

/// The K+3 features for one encoded sequence, floored at
/// [`FEATURE_FLOOR`].
pub fn hmm_features<F: Real>(
    params: &HmmParams<F>,
    y: &[usize],
    last: LastTokenFeature,
) -> Vec<F> {
    let floor = F::of(FEATURE_FLOOR);
    let s = params.forward(y);
    let mut out = Vec::with_capacity(params.k + 3);
    for &lp in &s.log_filtered {
        out.push(lp.max(floor));
    }
    out.push(s.loglik_full.max(floor));
    let t = F::of(y.len() as f64);
    out.push((s.loglik_full / t).max(floor));
    let last_ll = match last {
        LastTokenFeature::Predictive => s.loglik_full - s.loglik_prefix,
        LastTokenFeature::StationaryMarginal => {
            stationary_token_loglik(params, *y.last().expect("non-empty sequence"))
        }
    };
    out.push(last_ll.max(floor));
    out
}

/// log P(token) with the state marginal taken at the stationary distribution
/// of A (fixed-point iteration from uniform).
fn stationary_token_loglik<F: Real>(params: &HmmParams<F>, token: usize) -> F {
    let k = params.k;
    let mut dist = vec![F::of(1.0 / k as f64); k];
    for _ in 0..200 {
        let mut next = vec![F::zero(); k];
        for (i, &d) in dist.iter().enumerate() {
            for (j, n) in next.iter_mut().enumerate() {
                *n += d * params.a[i][j];
            }
        }
        dist = next;
    }
    let terms: Vec<F> = (0..k)
        .map(|s| dist[s].ln() + params.b[s][token].ln())
        .collect();
    logsumexp(&terms)
}

/// One trained HMM per API function, in canonical (sorted-name) order, each
/// tagged with the argument count its sequences were sliced to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmBank<F> {
    pub entries: Vec<BankEntry<F>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankEntry<F> {
    pub api: String,
    pub n_args: u8,
    pub hmm: HmmParams<F>,
}

impl<F: Real> HmmBank<F> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn api_names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.api.clone()).collect()
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        for e in &self.entries {
            e.hmm.validate()?;
        }
        if !self.entries.windows(2).all(|w| w[0].api < w[1].api) {
            return Err(crate::error::Error::validation(
                "HMM bank entries must be sorted by API name",
            ));
        }
        Ok(())
    }

    /// Feature width of [`vectorize_expt2`] output: M * (K+3).
    pub fn feature_len(&self) -> usize {
        self.entries.iter().map(|e| e.hmm.k + 3).sum()
    }
}

/// Known-argument-count vectorization: slice the record at its true `n_args`
/// and score it against the single population HMM.
pub fn vectorize_expt1<F: Real>(
    hmm: &HmmParams<F>,
    vocab: &Vocabulary,
    cfg: &AbstractionConfig,
    last: LastTokenFeature,
    rec: &ApiCallRecord,
) -> crate::error::Result<Vec<F>> {
    let tokens = abstract_sequence(rec, rec.n_args as usize, cfg)?;
    Ok(hmm_features(hmm, &vocab.encode_sequence(&tokens), last))
}

/// Unknown-argument-count vectorization: for every candidate API, slice the
/// stack at that API's argument count and score against its HMM. A block is
/// filled with [`FEATURE_FLOOR`] when the candidate needs more values than
/// the stack can supply (or the slice is all padding). Uses nothing from the
/// record but its captured stack values.
pub fn vectorize_expt2<F: Real>(
    bank: &HmmBank<F>,
    vocab: &Vocabulary,
    cfg: &AbstractionConfig,
    last: LastTokenFeature,
    rec: &ApiCallRecord,
) -> Vec<F> {
    let depth = rec.available_depth();
    let mut out = Vec::with_capacity(bank.feature_len());
    for entry in &bank.entries {
        let len = entry.n_args as usize;
        let constructible = len <= depth && len <= rec.raw_args.len();
        if !constructible {
            out.extend(std::iter::repeat_n(F::of(FEATURE_FLOOR), entry.hmm.k + 3));
            continue;
        }
        let tokens = abstract_sequence(rec, len, cfg)
            .expect("slice length checked against the capture size");
        out.extend(hmm_features(
            &entry.hmm,
            &vocab.encode_sequence(&tokens),
            last,
        ));
    }
    out
}

/// CSV header names for an experiment-2 feature matrix.
pub fn expt2_feature_names<F: Real>(bank: &HmmBank<F>) -> Vec<String> {
    let mut names = Vec::with_capacity(bank.feature_len());
    for entry in &bank.entries {
        names.extend(hmm_feature_names(&entry.api, entry.hmm.k));
    }
    names
}

/// Header names for one K+3 HMM block.
pub fn hmm_feature_names(api: &str, k: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..k).map(|i| format!("hmm{api}_{i}")).collect();
    names.push(format!("hmm{api}_ll"));
    names.push(format!("hmm{api}_mll"));
    names.push(format!("hmm{api}_lastll"));
    names
}

/// Header names for a bag-of-words projection.
pub fn svd_feature_names(components: usize) -> Vec<String> {
    (0..components).map(|i| format!("svd_{i}")).collect()
}

/// Render a feature matrix as CSV under the given header.
pub fn feature_matrix_csv<F: Real>(names: &[String], rows: &[Vec<F>]) -> String {
    let mut out = names.join(",");
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), names.len());
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}
