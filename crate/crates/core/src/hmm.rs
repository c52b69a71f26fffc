//! Categorical-emission hidden Markov models: forward likelihoods,
//! forward-backward posteriors and multi-sequence Baum-Welch training.
//!
//! All recursions run in log space. Sequences here are short (at most the 12
//! captured stack values) but emission alphabets can run to hundreds of
//! tokens, so probabilities get small fast.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{logsumexp, Real};

/// Smoothing floor for trained distributions; no entry ends below this.
pub const PROB_FLOOR: f64 = 1e-8;
/// Row-stochasticity tolerance used by validation.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Model parameters: initial distribution `pi`, transition matrix `A`
/// (row-stochastic, `a[i][j] = P(s_t = j | s_{t-1} = i)`) and per-state
/// emission rows `B` over `w_total` tokens (vocabulary plus the OOV slot).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmParams<F> {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "W_total")]
    pub w_total: usize,
    pub pi: Vec<F>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<F>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<F>>,
    /// Data log-likelihood under the parameters entering each training
    /// iteration; non-decreasing.
    #[serde(default = "Vec::new")]
    pub train_loglik_trace: Vec<F>,
}

/// Forward-pass summary for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary<F> {
    /// Filtered terminal posterior, `log P(s_T | y_{1:T})`; logsumexp is 0.
    pub log_filtered: Vec<F>,
    /// `log P(y_{1:T})`.
    pub loglik_full: F,
    /// `log P(y_{1:T-1})`; 0 for a length-1 sequence.
    pub loglik_prefix: F,
}

impl<F: Real> HmmParams<F> {
    /// Uniform parameters, mostly useful as a test baseline.
    pub fn uniform(k: usize, w_total: usize) -> HmmParams<F> {
        let kf = F::of(1.0 / k as f64);
        let wf = F::of(1.0 / w_total as f64);
        HmmParams {
            k,
            w_total,
            pi: vec![kf; k],
            a: vec![vec![kf; k]; k],
            b: vec![vec![wf; w_total]; k],
            train_loglik_trace: Vec::new(),
        }
    }

    /// Check shapes, row sums and the smoothing floor. Run on every load.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.w_total == 0 {
            return Err(Error::validation("K and W_total must be positive"));
        }
        if self.pi.len() != self.k || self.a.len() != self.k || self.b.len() != self.k {
            return Err(Error::validation("parameter shapes do not match K"));
        }
        let check_row = |row: &[F], n: usize, what: &str| -> Result<()> {
            if row.len() != n {
                return Err(Error::validation(format!(
                    "{what} has length {}, expected {n}",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).sum();
            if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                return Err(Error::validation(format!(
                    "{what} sums to {sum}, not 1 within {ROW_SUM_TOL}"
                )));
            }
            for x in row {
                let x = x.to_f64().unwrap_or(f64::NAN);
                if !(x >= 0.0) || !x.is_finite() {
                    return Err(Error::validation(format!("{what} has entry {x}")));
                }
            }
            Ok(())
        };
        check_row(&self.pi, self.k, "pi")?;
        for (i, row) in self.a.iter().enumerate() {
            check_row(row, self.k, &format!("A row {i}"))?;
        }
        for (i, row) in self.b.iter().enumerate() {
            check_row(row, self.w_total, &format!("B row {i}"))?;
        }
        Ok(())
    }

    fn log_view(&self) -> LogParams<F> {
        LogParams {
            lpi: self.pi.iter().map(|p| p.ln()).collect(),
            lb: self
                .b
                .iter()
                .map(|row| row.iter().map(|p| p.ln()).collect())
                .collect(),
            a: self.a.clone(),
            b: self.b.clone(),
        }
    }

    /// Log-space forward recursion over one sequence.
    pub fn forward(&self, y: &[usize]) -> PosteriorSummary<F> {
        self.log_view().forward(y, &mut 0)
    }

    /// Forward with an inner-step counter, for complexity checks.
    #[cfg(test)]
    pub(crate) fn forward_counting(&self, y: &[usize]) -> (PosteriorSummary<F>, usize) {
        let mut steps = 0;
        let summary = self.log_view().forward(y, &mut steps);
        (summary, steps)
    }

    /// Smoothed per-step posteriors `gamma[t][k] = P(s_t = k | y_{1:T})` in
    /// linear space; each row sums to 1.
    pub fn forward_backward(&self, y: &[usize]) -> Vec<Vec<F>> {
        let lp = self.log_view();
        let (la, loglik) = lp.forward_table(y);
        let lbeta = lp.backward_table(y);
        let t_len = y.len();
        let mut gamma = vec![vec![F::zero(); self.k]; t_len];
        for (t, row) in gamma.iter_mut().enumerate() {
            for (s, g) in row.iter_mut().enumerate() {
                *g = (la[t][s] + lbeta[t][s] - loglik).exp();
            }
            let sum: F = row.iter().copied().sum();
            for g in row.iter_mut() {
                *g /= sum;
            }
        }
        gamma
    }
}

/// Parameters prepared for a pass: log-space where values are consumed in
/// log space, linear where the recursion can use plain dot products.
///
/// The recursions factor a shared max out of each step, so
/// `lse_i(prev_i + log a_ij)` becomes `max + ln(sum_i exp(prev_i - max) *
/// a_ij)` — one exp per state instead of one per state pair, with the same
/// result.
struct LogParams<F> {
    lpi: Vec<F>,
    lb: Vec<Vec<F>>,
    a: Vec<Vec<F>>,
    b: Vec<Vec<F>>,
}

fn vec_max<F: Real>(xs: &[F]) -> F {
    xs.iter().copied().fold(F::neg_infinity(), F::max)
}

impl<F: Real> LogParams<F> {
    fn k(&self) -> usize {
        self.lpi.len()
    }

    fn forward(&self, y: &[usize], steps: &mut usize) -> PosteriorSummary<F> {
        assert!(!y.is_empty(), "forward requires a non-empty sequence");
        let k = self.k();
        let mut prev: Vec<F> = (0..k).map(|s| self.lpi[s] + self.lb[s][y[0]]).collect();
        let mut loglik_prefix = F::zero();
        let mut scaled = vec![F::zero(); k];
        for &tok in &y[1..] {
            loglik_prefix = logsumexp(&prev);
            let m = vec_max(&prev);
            if m == F::neg_infinity() {
                // Zero-probability prefix; everything stays -inf.
                continue;
            }
            for (e, &p) in scaled.iter_mut().zip(&prev) {
                *e = (p - m).exp();
            }
            let mut next = vec![F::zero(); k];
            for (j, nj) in next.iter_mut().enumerate() {
                let mut s = F::zero();
                for i in 0..k {
                    s += scaled[i] * self.a[i][j];
                    *steps += 1;
                }
                *nj = m + s.ln() + self.lb[j][tok];
            }
            prev = next;
        }
        if y.len() == 1 {
            *steps += k;
        }
        let loglik_full = logsumexp(&prev);
        let log_filtered = prev.iter().map(|&a| a - loglik_full).collect();
        PosteriorSummary {
            log_filtered,
            loglik_full,
            loglik_prefix,
        }
    }

    /// Full log-alpha table plus the sequence log-likelihood.
    fn forward_table(&self, y: &[usize]) -> (Vec<Vec<F>>, F) {
        let k = self.k();
        let mut la = vec![vec![F::zero(); k]; y.len()];
        for s in 0..k {
            la[0][s] = self.lpi[s] + self.lb[s][y[0]];
        }
        let mut scaled = vec![F::zero(); k];
        for t in 1..y.len() {
            let m = vec_max(&la[t - 1]);
            if m == F::neg_infinity() {
                for j in 0..k {
                    la[t][j] = F::neg_infinity();
                }
                continue;
            }
            for (e, &p) in scaled.iter_mut().zip(&la[t - 1]) {
                *e = (p - m).exp();
            }
            for j in 0..k {
                let mut s = F::zero();
                for i in 0..k {
                    s += scaled[i] * self.a[i][j];
                }
                la[t][j] = m + s.ln() + self.lb[j][y[t]];
            }
        }
        let loglik = logsumexp(&la[y.len() - 1]);
        (la, loglik)
    }

    /// Log-beta table: `lbeta[t][i] = log P(y_{t+1:T} | s_t = i)`.
    fn backward_table(&self, y: &[usize]) -> Vec<Vec<F>> {
        let k = self.k();
        let t_len = y.len();
        let mut lbeta = vec![vec![F::zero(); k]; t_len];
        let mut scaled = vec![F::zero(); k];
        for t in (0..t_len - 1).rev() {
            let m = vec_max(&lbeta[t + 1]);
            if m == F::neg_infinity() {
                for i in 0..k {
                    lbeta[t][i] = F::neg_infinity();
                }
                continue;
            }
            for (f, (&lb_next, brow)) in scaled
                .iter_mut()
                .zip(lbeta[t + 1].iter().zip(self.b.iter()))
            {
                *f = brow[y[t + 1]] * (lb_next - m).exp();
            }
            for i in 0..k {
                let mut s = F::zero();
                for j in 0..k {
                    s += self.a[i][j] * scaled[j];
                }
                lbeta[t][i] = m + s.ln();
            }
        }
        lbeta
    }
}

/// Expected counts pooled over sequences during one E-step.
struct ExpectedCounts<F> {
    init: Vec<F>,
    trans: Vec<Vec<F>>,
    emit: Vec<Vec<F>>,
    loglik: F,
}

impl<F: Real> ExpectedCounts<F> {
    fn zero(k: usize, w_total: usize) -> Self {
        ExpectedCounts {
            init: vec![F::zero(); k],
            trans: vec![vec![F::zero(); k]; k],
            emit: vec![vec![F::zero(); w_total]; k],
            loglik: F::zero(),
        }
    }

    fn absorb(&mut self, other: &ExpectedCounts<F>) {
        for (a, b) in self.init.iter_mut().zip(&other.init) {
            *a += *b;
        }
        for (ra, rb) in self.trans.iter_mut().zip(&other.trans) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += *b;
            }
        }
        for (ra, rb) in self.emit.iter_mut().zip(&other.emit) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += *b;
            }
        }
        self.loglik += other.loglik;
    }
}

fn e_step_sequence<F: Real>(lp: &LogParams<F>, y: &[usize], w_total: usize) -> ExpectedCounts<F> {
    let k = lp.k();
    let (la, loglik) = lp.forward_table(y);
    let lbeta = lp.backward_table(y);
    let mut counts = ExpectedCounts::zero(k, w_total);
    counts.loglik = loglik;
    for t in 0..y.len() {
        for s in 0..k {
            let g = (la[t][s] + lbeta[t][s] - loglik).exp();
            if t == 0 {
                counts.init[s] += g;
            }
            counts.emit[s][y[t]] += g;
        }
    }
    // xi_t(i, j) = exp(la[t-1][i] + log a_ij + log b_j(y_t) + lbeta[t][j]
    // - loglik), factored so the inner double loop is multiplications only.
    let mut u = vec![F::zero(); k];
    let mut f = vec![F::zero(); k];
    for t in 1..y.len() {
        let m = vec_max(&lbeta[t]);
        if m == F::neg_infinity() {
            continue;
        }
        for i in 0..k {
            u[i] = (la[t - 1][i] + m - loglik).exp();
        }
        for j in 0..k {
            f[j] = lp.b[j][y[t]] * (lbeta[t][j] - m).exp();
        }
        for i in 0..k {
            if u[i] == F::zero() {
                continue;
            }
            for j in 0..k {
                counts.trans[i][j] += u[i] * lp.a[i][j] * f[j];
            }
        }
    }
    counts
}

/// Additive smoothing, normalization, then a floor pass. The clamp value
/// sits slightly above [`PROB_FLOOR`] so renormalization cannot pull floored
/// entries back under it.
fn normalize_row<F: Real>(counts: &[F]) -> Vec<F> {
    let eps = F::of(PROB_FLOOR);
    let mut row: Vec<F> = counts.iter().map(|&c| c + eps).collect();
    let sum: F = row.iter().copied().sum();
    for x in &mut row {
        *x /= sum;
    }
    let clamp = F::of(PROB_FLOOR * 1.01);
    if row.iter().any(|&x| x < clamp) {
        for x in &mut row {
            if *x < clamp {
                *x = clamp;
            }
        }
        let sum: F = row.iter().copied().sum();
        for x in &mut row {
            *x /= sum;
        }
    }
    row
}

/// One row of a Dirichlet(1) draw: uniform on the simplex.
fn dirichlet_row<F: Real>(rng: &mut StdRng, n: usize) -> Vec<F> {
    let mut row: Vec<F> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            F::of(-(1.0 - u).ln())
        })
        .collect();
    let sum: F = row.iter().copied().sum();
    for x in &mut row {
        *x /= sum;
    }
    row
}

/// Options for [`baum_welch`]; the defaults are what the pipeline uses.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainOptions {
    pub max_iters: usize,
    /// Stop once the absolute log-likelihood improvement falls below this.
    pub tol: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

/// Maximum-likelihood training over multiple sequences.
///
/// Parameters start from seeded Dirichlet(1) rows; each iteration runs the
/// E-step per sequence (in parallel, reduced in sequence order so results are
/// reproducible) and a pooled, smoothed M-step. The log-likelihood trace is
/// monotone non-decreasing and lands in `train_loglik_trace`.
pub fn baum_welch<F: Real>(
    sequences: &[Vec<usize>],
    k: usize,
    w_total: usize,
    seed: u64,
    opts: TrainOptions,
) -> Result<HmmParams<F>> {
    if sequences.is_empty() {
        return Err(Error::contract("baum_welch requires at least one sequence"));
    }
    if k == 0 {
        return Err(Error::contract("baum_welch requires K >= 1"));
    }
    for (i, y) in sequences.iter().enumerate() {
        if y.is_empty() {
            return Err(Error::contract(format!("sequence {i} is empty")));
        }
        if let Some(&bad) = y.iter().find(|&&tok| tok >= w_total) {
            return Err(Error::contract(format!(
                "sequence {i} contains token {bad} >= W_total {w_total}"
            )));
        }
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let mut params = HmmParams {
        k,
        w_total,
        pi: dirichlet_row(&mut rng, k),
        a: (0..k).map(|_| dirichlet_row(&mut rng, k)).collect(),
        b: (0..k).map(|_| dirichlet_row(&mut rng, w_total)).collect(),
        train_loglik_trace: Vec::new(),
    };

    let mut trace: Vec<F> = Vec::new();
    for _ in 0..opts.max_iters {
        let lp = params.log_view();
        let per_seq: Vec<ExpectedCounts<F>> = sequences
            .par_iter()
            .map(|y| e_step_sequence(&lp, y, w_total))
            .collect();
        let mut pooled = ExpectedCounts::zero(k, w_total);
        for c in &per_seq {
            pooled.absorb(c);
        }

        let loglik = pooled.loglik;
        let done = trace
            .last()
            .is_some_and(|&prev| (loglik - prev).abs() < F::of(opts.tol));
        trace.push(loglik);
        if done {
            break;
        }

        params.pi = normalize_row(&pooled.init);
        params.a = pooled.trans.iter().map(|row| normalize_row(row)).collect();
        params.b = pooled.emit.iter().map(|row| normalize_row(row)).collect();
    }
    params.train_loglik_trace = trace;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Linear-space likelihood by summing the complete-data likelihood over
    /// all K^T hidden state sequences.
    pub fn enumeration_loglik(params: &HmmParams<f64>, y: &[usize]) -> f64 {
        let k = params.k;
        let t_len = y.len();
        let mut total = 0.0;
        let mut states = vec![0usize; t_len];
        loop {
            let mut p = params.pi[states[0]] * params.b[states[0]][y[0]];
            for t in 1..t_len {
                p *= params.a[states[t - 1]][states[t]] * params.b[states[t]][y[t]];
            }
            total += p;
            // Odometer over state assignments.
            let mut pos = t_len;
            loop {
                if pos == 0 {
                    return total.ln();
                }
                pos -= 1;
                states[pos] += 1;
                if states[pos] < k {
                    break;
                }
                states[pos] = 0;
            }
        }
    }

    fn random_params(rng: &mut StdRng, k: usize, w_total: usize) -> HmmParams<f64> {
        HmmParams {
            k,
            w_total,
            pi: dirichlet_row(rng, k),
            a: (0..k).map(|_| dirichlet_row(rng, k)).collect(),
            b: (0..k).map(|_| dirichlet_row(rng, w_total)).collect(),
            train_loglik_trace: Vec::new(),
        }
    }

    #[test]
    fn single_state_forward_is_emission_product() {
        let params = HmmParams::<f64> {
            k: 1,
            w_total: 3,
            pi: vec![1.0],
            a: vec![vec![1.0]],
            b: vec![vec![0.5, 0.3, 0.2]],
            train_loglik_trace: Vec::new(),
        };
        let y = [0, 2, 1];
        let s = params.forward(&y);
        let expect = 0.5f64.ln() + 0.2f64.ln() + 0.3f64.ln();
        assert!((s.loglik_full - expect).abs() < 1e-12);
        assert_eq!(s.log_filtered, vec![0.0]);
        assert!((s.loglik_prefix - (0.5f64.ln() + 0.2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn uniform_model_is_memoryless() {
        let params = HmmParams::<f64>::uniform(3, 5);
        let y = [0, 1, 2, 3];
        let s = params.forward(&y);
        let expect = 4.0 * (1.0f64 / 5.0).ln();
        assert!((s.loglik_full - expect).abs() < 1e-12);
    }

    #[test]
    fn forward_matches_enumeration_on_a_fixture() {
        let mut rng = StdRng::seed_from_u64(42);
        let params = random_params(&mut rng, 2, 4);
        let y = [1, 3, 0];
        let s = params.forward(&y);
        let oracle = enumeration_loglik(&params, &y);
        assert!((s.loglik_full - oracle).abs() < 1e-10);
        let prefix_oracle = enumeration_loglik(&params, &y[..2]);
        assert!((s.loglik_prefix - prefix_oracle).abs() < 1e-10);
    }

    #[test]
    fn filtered_posterior_normalizes() {
        let mut rng = StdRng::seed_from_u64(9);
        let params = random_params(&mut rng, 3, 4);
        let s = params.forward(&[0, 1, 2, 3, 1]);
        let lse = crate::num::logsumexp(&s.log_filtered);
        assert!(lse.abs() < 1e-9);
        assert!(s.loglik_full <= s.loglik_prefix + 1e-12);
    }

    #[test]
    fn forward_backward_single_state_is_certain() {
        let params = HmmParams::<f64> {
            k: 1,
            w_total: 2,
            pi: vec![1.0],
            a: vec![vec![1.0]],
            b: vec![vec![0.25, 0.75]],
            train_loglik_trace: Vec::new(),
        };
        for row in params.forward_backward(&[0, 1, 1]) {
            assert_eq!(row, vec![1.0]);
        }
    }

    #[test]
    fn forward_backward_matches_enumeration_posteriors() {
        let mut rng = StdRng::seed_from_u64(3);
        let params = random_params(&mut rng, 2, 3);
        let y = [0, 2];
        let gamma = params.forward_backward(&y);
        // Oracle: P(s_t = s | y) from the four complete-data terms.
        let joint = |s0: usize, s1: usize| {
            params.pi[s0] * params.b[s0][y[0]] * params.a[s0][s1] * params.b[s1][y[1]]
        };
        let total: f64 = (0..2)
            .flat_map(|a| (0..2).map(move |b| joint(a, b)))
            .sum();
        for s in 0..2 {
            let p0: f64 = (0..2).map(|b| joint(s, b)).sum::<f64>() / total;
            let p1: f64 = (0..2).map(|a| joint(a, s)).sum::<f64>() / total;
            assert!((gamma[0][s] - p0).abs() < 1e-10);
            assert!((gamma[1][s] - p1).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetric_parameters_give_uniform_posteriors() {
        let params = HmmParams::<f64> {
            k: 2,
            w_total: 2,
            pi: vec![0.5, 0.5],
            a: vec![vec![0.7, 0.3], vec![0.3, 0.7]],
            b: vec![vec![0.6, 0.4], vec![0.6, 0.4]],
            train_loglik_trace: Vec::new(),
        };
        for row in params.forward_backward(&[0, 1, 0]) {
            assert!((row[0] - 0.5).abs() < 1e-12);
            assert!((row[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn k1_training_recovers_smoothed_token_frequencies() {
        let sequences = vec![vec![0, 0, 1, 2, 0]];
        let params: HmmParams<f64> =
            baum_welch(&sequences, 1, 3, 11, TrainOptions::default()).unwrap();
        params.validate().unwrap();
        let freq = [3.0 / 5.0, 1.0 / 5.0, 1.0 / 5.0];
        for (got, want) in params.b[0].iter().zip(freq) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        // Closed form: converged on the second iteration.
        assert!(params.train_loglik_trace.len() <= 3);
    }

    #[test]
    fn training_loglik_is_monotone() {
        let mut rng = StdRng::seed_from_u64(5);
        let sequences: Vec<Vec<usize>> = (0..40)
            .map(|_| {
                (0..rng.random_range(1..=10))
                    .map(|_| rng.random_range(0..5))
                    .collect()
            })
            .collect();
        let params: HmmParams<f64> =
            baum_welch(&sequences, 3, 5, 77, TrainOptions::default()).unwrap();
        for w in params.train_loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "trace decreased: {} -> {}", w[0], w[1]);
        }
        params.validate().unwrap();
    }

    #[test]
    fn trained_rows_stay_stochastic_and_floored() {
        let sequences = vec![vec![0, 1], vec![1, 1, 2], vec![0]];
        let params: HmmParams<f64> =
            baum_welch(&sequences, 2, 6, 123, TrainOptions::default()).unwrap();
        params.validate().unwrap();
        for row in params.b.iter().chain(params.a.iter()) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p >= PROB_FLOOR));
        }
        // Tokens 3..5 never occur; their mass is floor-smoothing only.
        assert!(params.b.iter().all(|row| row[5] < 1e-6));
    }

    #[test]
    fn invalid_token_index_is_a_contract_violation() {
        let err = baum_welch::<f64>(&[vec![7]], 2, 5, 0, TrainOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn training_is_seed_deterministic() {
        let sequences = vec![vec![0, 1, 2], vec![2, 1], vec![0, 0, 1, 1]];
        let a: HmmParams<f64> = baum_welch(&sequences, 2, 4, 99, TrainOptions::default()).unwrap();
        let b: HmmParams<f64> = baum_welch(&sequences, 2, 4, 99, TrainOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_inner_work_scales_quadratically_in_k() {
        let y: Vec<usize> = vec![0, 1, 2, 1, 0, 2, 1, 2];
        let small = HmmParams::<f64>::uniform(4, 3);
        let large = HmmParams::<f64>::uniform(8, 3);
        let (_, steps_small) = small.forward_counting(&y);
        let (_, steps_large) = large.forward_counting(&y);
        let ratio = steps_large as f64 / steps_small as f64;
        assert!(ratio <= 4.5, "doubling K multiplied steps by {ratio}");
    }

    #[test]
    fn generic_over_f32_still_runs() {
        let params = HmmParams::<f32>::uniform(2, 3);
        let s = params.forward(&[0, 1]);
        assert!((s.loglik_full - 2.0 * (1.0f32 / 3.0).ln()).abs() < 1e-5);
    }
}
