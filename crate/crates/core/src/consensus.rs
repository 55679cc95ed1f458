//! Consensus matrices, step-size schedules and the checks that a consensus
//! process, a pair of schedules and a feature matrix are admissible.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::SimRng;

/// Row-sum tolerance for consensus matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Tolerance on the column sums of the empirical mean matrix.
pub const MEAN_COLUMN_TOL: f64 = 1e-3;

/// The spectral quantity must stay below `1 - SPECTRAL_MARGIN`.
pub const SPECTRAL_MARGIN: f64 = 1e-6;

/// Minimum number of matrix samples drawn by the validator.
pub const MIN_SAMPLES: usize = 10_000;

/// The standing assumptions of the convergence analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assumption {
    /// Critic features are bounded and `Φ` has full column rank.
    Features,
    /// Two-timescale Robbins-Monro step sizes.
    StepSizes,
    /// Row-stochastic weights, column-stochastic in mean, contracting the
    /// disagreement subspace.
    ConsensusWeights,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Features => "feature assumption (full column rank)",
            Self::StepSizes => "step-size assumption",
            Self::ConsensusWeights => "consensus-weight assumption",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Identity,
    Uniform,
    General,
}

/// Nonnegative row-stochastic `N×N` weights `c(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusMatrix {
    weights: DMatrix<f64>,
    kind: Kind,
}

impl ConsensusMatrix {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if n == 0 || weights.ncols() != n {
            return Err(Error::Dimension(format!(
                "consensus matrix must be square and non-empty, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParam(
                "consensus weights must be finite and nonnegative".into(),
            ));
        }
        for i in 0..n {
            let sum: f64 = weights.row(i).iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidParam(format!(
                    "consensus matrix row {i} sums to {sum}"
                )));
            }
        }
        Ok(Self {
            weights,
            kind: Kind::General,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            weights: DMatrix::identity(n, n),
            kind: Kind::Identity,
        }
    }

    /// `c(i, j) = 1/N` everywhere.
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: DMatrix::from_element(n, n, 1.0 / n as f64),
            kind: Kind::Uniform,
        }
    }

    /// Pairwise average of agents `i` and `j`; other rows are identity.
    pub fn gossip(n: usize, i: usize, j: usize) -> Result<Self> {
        if i >= n || j >= n || i == j {
            return Err(Error::InvalidParam(format!(
                "gossip pair ({i}, {j}) invalid for {n} agents"
            )));
        }
        let mut w = DMatrix::identity(n, n);
        w[(i, i)] = 0.5;
        w[(j, j)] = 0.5;
        w[(i, j)] = 0.5;
        w[(j, i)] = 0.5;
        Ok(Self {
            weights: w,
            kind: Kind::General,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        (0..self.n_agents()).all(|j| {
            let s: f64 = self.weights.column(j).iter().sum();
            (s - 1.0).abs() <= STOCHASTIC_TOL
        })
    }
}

/// `out^i = Σ_j c(i, j) · x^j`.
pub fn apply_consensus(params: &[Vec<f64>], c: &ConsensusMatrix) -> Result<Vec<Vec<f64>>> {
    let n = c.n_agents();
    if params.len() != n {
        return Err(Error::Dimension(format!(
            "{} parameter vectors for a {n}-agent consensus matrix",
            params.len()
        )));
    }
    let dim = params[0].len();
    if params.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension(
            "agent parameter vectors differ in length".into(),
        ));
    }
    match c.kind {
        Kind::Identity => Ok(params.to_vec()),
        Kind::Uniform => {
            let (mean, _) = disagreement(params);
            Ok(vec![mean; n])
        }
        Kind::General => {
            let mut out = vec![vec![0.0; dim]; n];
            for (i, row) in out.iter_mut().enumerate() {
                for (j, p) in params.iter().enumerate() {
                    let w = c.weights[(i, j)];
                    if w != 0.0 {
                        for (o, x) in row.iter_mut().zip(p) {
                            *o += w * x;
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Mean vector and the norm of the stacked deviations from it.
pub fn disagreement(params: &[Vec<f64>]) -> (Vec<f64>, f64) {
    if params.is_empty() {
        return (Vec::new(), 0.0);
    }
    let n = params.len() as f64;
    let dim = params[0].len();
    let mut mean = vec![0.0; dim];
    for p in params {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let sq: f64 = params
        .iter()
        .flat_map(|p| p.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)))
        .sum();
    (mean, sq.sqrt())
}

/// How consensus matrices are drawn at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsensusSpec {
    /// No mixing.
    Identity,
    /// Full averaging every step.
    Uniform,
    /// One uniformly random pair averages per step.
    Gossip,
}

impl ConsensusSpec {
    pub fn sample(self, n: usize, rng: &mut SimRng) -> ConsensusMatrix {
        match self {
            Self::Identity => ConsensusMatrix::identity(n),
            Self::Uniform => ConsensusMatrix::uniform(n),
            Self::Gossip if n < 2 => ConsensusMatrix::identity(n),
            Self::Gossip => {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                ConsensusMatrix::gossip(n, i, j).expect("distinct in-range pair")
            }
        }
    }
}

/// Step sizes `β_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `β_t = scale · (1 + t)^(-p)`.
    PowerDecay { p: f64, scale: f64 },
    Constant { value: f64 },
    /// Adaptive moments with the given base rate; `β_t` is the base rate.
    AdaptiveMoment {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl StepSchedule {
    pub fn critic_default() -> Self {
        Self::PowerDecay {
            p: 0.65,
            scale: 1.0,
        }
    }

    pub fn actor_default() -> Self {
        Self::PowerDecay {
            p: 0.85,
            scale: 1.0,
        }
    }

    pub fn adaptive() -> Self {
        Self::AdaptiveMoment {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn rate(&self, t: u64) -> f64 {
        match *self {
            Self::PowerDecay { p, scale } => scale * (1.0 + t as f64).powf(-p),
            Self::Constant { value } => value,
            Self::AdaptiveMoment { lr, .. } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::PowerDecay { p, scale } => p.is_finite() && p > 0.0 && scale > 0.0,
            Self::Constant { value } => value.is_finite() && value > 0.0,
            Self::AdaptiveMoment {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                lr > 0.0
                    && (0.0..1.0).contains(&beta1)
                    && (0.0..1.0).contains(&beta2)
                    && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid step schedule {self:?}")))
        }
    }
}

/// Outcome of one group of checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub assumption: Assumption,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusCheck {
    pub samples: usize,
    pub all_rows_stochastic: bool,
    /// Largest `|Σ_i E[C](i, j) - 1|` over columns.
    pub mean_column_deviation: f64,
    /// Spectral norm of the empirical mean of `Cᵀ (I - 11ᵀ/N) C`.
    pub spectral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub consensus: ConsensusCheck,
    pub checks: Vec<Check>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, a: Assumption) -> Option<&Check> {
        self.checks.iter().find(|c| c.assumption == a)
    }

    /// The first failed check as an error.
    pub fn into_result(self) -> Result<Self> {
        if let Some(c) = self.checks.iter().find(|c| !c.passed) {
            return Err(Error::Assumption {
                assumption: c.assumption,
                detail: c.detail.clone(),
            });
        }
        Ok(self)
    }
}

/// Checks the consensus process by sampling, the two schedules
/// analytically and, when given, the feature matrix by rank.
pub fn validate_assumptions<F>(
    mut sampler: F,
    n_agents: usize,
    samples: usize,
    critic: &StepSchedule,
    actor: &StepSchedule,
    features: Option<&DMatrix<f64>>,
) -> Result<AssumptionReport>
where
    F: FnMut() -> ConsensusMatrix,
{
    let samples = samples.max(MIN_SAMPLES);
    let consensus = check_consensus(&mut sampler, n_agents, samples)?;
    let mut checks = Vec::new();

    let cons_ok = consensus.all_rows_stochastic
        && consensus.mean_column_deviation <= MEAN_COLUMN_TOL
        && consensus.spectral < 1.0 - SPECTRAL_MARGIN;
    checks.push(Check {
        assumption: Assumption::ConsensusWeights,
        passed: cons_ok,
        detail: format!(
            "rows stochastic: {}, mean column deviation {:.3e} (tol {MEAN_COLUMN_TOL:e}), \
             spectral quantity {:.6} (must be < 1 - {SPECTRAL_MARGIN:e}) over {} samples",
            consensus.all_rows_stochastic,
            consensus.mean_column_deviation,
            consensus.spectral,
            consensus.samples
        ),
    });

    checks.push(check_schedules(critic, actor));

    if let Some(phi) = features {
        checks.push(check_features(phi));
    }
    Ok(AssumptionReport { consensus, checks })
}

fn check_consensus<F>(sampler: &mut F, n: usize, samples: usize) -> Result<ConsensusCheck>
where
    F: FnMut() -> ConsensusMatrix,
{
    let mut mean_c = DMatrix::<f64>::zeros(n, n);
    let mut mean_q = DMatrix::<f64>::zeros(n, n);
    let centering = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let mut rows_ok = true;
    for _ in 0..samples {
        let c = sampler();
        if c.n_agents() != n {
            return Err(Error::Dimension(format!(
                "sampler produced a {}-agent matrix, expected {n}",
                c.n_agents()
            )));
        }
        let w = c.weights();
        rows_ok &= (0..n).all(|i| {
            let s: f64 = w.row(i).iter().sum();
            (s - 1.0).abs() <= STOCHASTIC_TOL && w.row(i).iter().all(|&x| x >= 0.0)
        });
        mean_c += w;
        mean_q += w.transpose() * &centering * w;
    }
    mean_c /= samples as f64;
    mean_q /= samples as f64;
    let mean_column_deviation = (0..n)
        .map(|j| (mean_c.column(j).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    // symmetrise against rounding before the eigen-solve
    let sym = (&mean_q + mean_q.transpose()) * 0.5;
    Ok(ConsensusCheck {
        samples,
        all_rows_stochastic: rows_ok,
        mean_column_deviation,
        spectral: linalg::spectral_norm_sym(&sym),
    })
}

fn check_schedules(critic: &StepSchedule, actor: &StepSchedule) -> Check {
    let fail = |detail: String| Check {
        assumption: Assumption::StepSizes,
        passed: false,
        detail,
    };
    let (
        StepSchedule::PowerDecay { p: pw, scale: sw },
        StepSchedule::PowerDecay { p: pt, scale: st },
    ) = (*critic, *actor)
    else {
        return fail(format!(
            "only power-decay schedules can be checked analytically (critic {critic:?}, actor {actor:?})"
        ));
    };
    if sw <= 0.0 || st <= 0.0 {
        return fail("schedule scales must be positive".into());
    }
    for (name, p) in [("critic", pw), ("actor", pt)] {
        if !(p > 0.5 && p <= 1.0) {
            return fail(format!(
                "{name} exponent {p} outside (0.5, 1]: need Σβ = ∞ and Σβ² < ∞"
            ));
        }
    }
    if pt <= pw {
        return fail(format!(
            "actor exponent {pt} must exceed critic exponent {pw} so that β_θ/β_ω → 0"
        ));
    }
    Check {
        assumption: Assumption::StepSizes,
        passed: true,
        detail: format!("critic p = {pw}, actor p = {pt}: both in (0.5, 1] and actor slower"),
    }
}

fn check_features(phi: &DMatrix<f64>) -> Check {
    let r = linalg::rank(phi);
    let k = phi.ncols();
    let bounded = phi.iter().all(|x| x.is_finite());
    Check {
        assumption: Assumption::Features,
        passed: bounded && r == k,
        detail: format!("rank {r} of {k} columns{}", if bounded { "" } else { ", non-finite entries" }),
    }
}
