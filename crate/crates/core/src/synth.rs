//! Synthetic experiments: preferential-attachment truth graphs, their
//! precision factors, latent Kronecker-sum Gaussian samples and
//! multiplicative chi-squared corruption.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphmetrics::{community_detect, Adjacency};
use crate::kroncore::{EigenFactor, FactorPrecision};
use crate::linalg::sorted_eigen;
use crate::seeds::{derive_seed, rng_for, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub d_rows: usize,
    pub d_cols: usize,
    /// Edges added per new vertex in the attachment process.
    pub ba_m: usize,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub pd_margin: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            d_rows: 100,
            d_cols: 150,
            ba_m: 2,
            alpha: 0.0,
            replicates: 20,
            seed: 0,
            pd_margin: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_rows < 2 || self.d_cols < 2 {
            return Err(Error::InvalidParameter(
                "dimensions must be at least 2".into(),
            ));
        }
        if self.ba_m < 1 || self.ba_m >= self.d_rows.min(self.d_cols) {
            return Err(Error::InvalidParameter(format!(
                "ba_m = {} must satisfy 1 <= m < min(d_rows, d_cols)",
                self.ba_m
            )));
        }
        check_alpha(self.alpha)?;
        if !(self.pd_margin > 0.0) || !self.pd_margin.is_finite() {
            return Err(Error::InvalidParameter("pd_margin must be positive".into()));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Raw multiplicative factors as drawn; no unit-product normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDraws {
    #[serde(with = "crate::serial::vector")]
    pub r_rows: DVector<f64>,
    #[serde(with = "crate::serial::vector")]
    pub r_cols: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub replicate: usize,
    pub truth_rows: Adjacency,
    pub truth_cols: Adjacency,
    pub precision: FactorPrecision,
    pub labels_rows: Vec<usize>,
    pub labels_cols: Vec<usize>,
    pub latent: DMatrix<f64>,
    pub observed: DMatrix<f64>,
    pub noise: NoiseDraws,
}

/// Preferential attachment starting from a clique on the first `m` vertices.
/// Each later vertex links to `m` distinct earlier vertices chosen with
/// probability proportional to degree (uniformly while all degrees are 0).
pub fn barabasi_albert(n: usize, m: usize, seed: u64) -> Result<Adjacency> {
    if m < 1 || n <= m {
        return Err(Error::InvalidParameter(format!(
            "need n > m >= 1, got n = {n}, m = {m}"
        )));
    }
    let mut rng = rand::SeedableRng::seed_from_u64(seed);
    barabasi_albert_with(n, m, &mut rng)
}

fn barabasi_albert_with(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Adjacency> {
    let mut edges = Vec::with_capacity(m * (n - m) + m * (m - 1) / 2);
    // Each vertex appears once per incident edge end.
    let mut ends: Vec<usize> = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            edges.push((i, j));
            ends.extend([i, j]);
        }
    }
    let mut targets = Vec::with_capacity(m);
    for v in m..n {
        targets.clear();
        while targets.len() < m {
            let t = if ends.is_empty() {
                rng.random_range(0..v)
            } else {
                ends[rng.random_range(0..ends.len())]
            };
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((t, v));
            ends.extend([t, v]);
        }
    }
    Adjacency::from_edges(n, edges)
}

/// `I + A / (λ_max(A) + margin)`.
pub fn graph_to_precision(adj: &Adjacency, margin: f64) -> DMatrix<f64> {
    let n = adj.n_nodes();
    let a = adj.to_matrix();
    if adj.n_edges() == 0 {
        return DMatrix::identity(n, n);
    }
    let (values, _) = sorted_eigen(&a);
    let top = values[n - 1];
    DMatrix::identity(n, n) + a / (top + margin)
}

fn chi2_power(rng: &mut ChaCha8Rng, alpha: f64) -> f64 {
    loop {
        let g: f64 = rng.sample(StandardNormal);
        let r = (g * g).powf(alpha);
        if r > 0.0 && r.is_finite() {
            return r;
        }
    }
}

fn draw_noise(rng: &mut ChaCha8Rng, d_rows: usize, d_cols: usize, alpha: f64) -> NoiseDraws {
    let r_rows = DVector::from_fn(d_rows, |_, _| chi2_power(rng, alpha));
    let r_cols = DVector::from_fn(d_cols, |_, _| chi2_power(rng, alpha));
    NoiseDraws { r_rows, r_cols }
}

fn apply_draws(latent: &DMatrix<f64>, noise: &NoiseDraws) -> DMatrix<f64> {
    DMatrix::from_fn(latent.nrows(), latent.ncols(), |i, j| {
        noise.r_rows[i] * noise.r_cols[j] * latent[(i, j)]
    })
}

/// Multiplies row `i` and column `j` by independent `(χ²₁)^α` draws.
/// The underlying normal draws do not depend on `alpha`, so the same seed
/// gives paired corruptions across noise strengths.
pub fn corrupt(latent: &DMatrix<f64>, alpha: f64, seed: u64) -> Result<(DMatrix<f64>, NoiseDraws)> {
    check_alpha(alpha)?;
    let mut rng = rand::SeedableRng::seed_from_u64(seed);
    let noise = draw_noise(&mut rng, latent.nrows(), latent.ncols(), alpha);
    Ok((apply_draws(latent, &noise), noise))
}

/// Communities of the truth graph at the given resolution.
pub fn make_truth_labels(adj: &Adjacency, resolution: f64, seed: u64) -> Vec<usize> {
    community_detect(adj, resolution, seed)
}

/// Everything in a replicate that does not depend on `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateBase {
    pub replicate: usize,
    pub truth_rows: Adjacency,
    pub truth_cols: Adjacency,
    pub precision: FactorPrecision,
    pub labels_rows: Vec<usize>,
    pub labels_cols: Vec<usize>,
    pub latent: DMatrix<f64>,
    noise_seed: u64,
}

impl ReplicateBase {
    pub fn generate(cfg: &SynthConfig, replicate: usize) -> Result<Self> {
        cfg.validate()?;
        let r = replicate as u64;
        let truth_rows = barabasi_albert_with(
            cfg.d_rows,
            cfg.ba_m,
            &mut rng_for(cfg.seed, &[stream::GRAPH_ROWS, r]),
        )?;
        let truth_cols = barabasi_albert_with(
            cfg.d_cols,
            cfg.ba_m,
            &mut rng_for(cfg.seed, &[stream::GRAPH_COLS, r]),
        )?;
        let precision = FactorPrecision::new(
            graph_to_precision(&truth_rows, cfg.pd_margin),
            graph_to_precision(&truth_cols, cfg.pd_margin),
        )?;
        let latent = EigenFactor::new(&precision)?
            .sample_latent_with(&mut rng_for(cfg.seed, &[stream::LATENT, r]));
        let labels_rows = make_truth_labels(
            &truth_rows,
            1.0,
            derive_seed(cfg.seed, &[stream::LABELS_ROWS, r]),
        );
        let labels_cols = make_truth_labels(
            &truth_cols,
            1.0,
            derive_seed(cfg.seed, &[stream::LABELS_COLS, r]),
        );
        Ok(ReplicateBase {
            replicate,
            truth_rows,
            truth_cols,
            precision,
            labels_rows,
            labels_cols,
            latent,
            noise_seed: derive_seed(cfg.seed, &[stream::NOISE, r]),
        })
    }

    /// Corrupts the shared latent sample at strength `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Result<SynthBundle> {
        let (observed, noise) = corrupt(&self.latent, alpha, self.noise_seed)?;
        Ok(SynthBundle {
            replicate: self.replicate,
            truth_rows: self.truth_rows.clone(),
            truth_cols: self.truth_cols.clone(),
            precision: self.precision.clone(),
            labels_rows: self.labels_rows.clone(),
            labels_cols: self.labels_cols.clone(),
            latent: self.latent.clone(),
            observed,
            noise,
        })
    }
}

/// `cfg.replicates` independent bundles, all derived from `cfg.seed`.
pub fn generate_experiment(cfg: &SynthConfig) -> Result<Vec<SynthBundle>> {
    cfg.validate()?;
    (0..cfg.replicates)
        .map(|r| ReplicateBase::generate(cfg, r)?.with_alpha(cfg.alpha))
        .collect()
}
