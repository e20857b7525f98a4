//! Matrix-factorization rating predictors trained by SGD.
//!
//! Plain MF predicts the dot product of user and item factor vectors; the
//! biased variant adds the global mean plus per-user and per-item bias
//! terms, all regularized with the same coefficient. Training is
//! deterministic for a fixed seed: initialization and the per-epoch
//! traversal shuffle both draw from one seeded generator.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ratings::RatingMatrix;

const FACTOR_INIT_RANGE: f64 = 0.05;

/// SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfHyperParams {
    pub factors: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MfHyperParams {
    fn default() -> Self {
        MfHyperParams {
            factors: 10,
            learning_rate: 0.005,
            regularization: 0.02,
            epochs: 50,
            seed: 0,
        }
    }
}

/// A trained factor model.
#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    pub biased: bool,
    pub factors: usize,
    n_users: usize,
    n_items: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    user_bias: Vec<f64>,
    item_bias: Vec<f64>,
    pub global_mean: f64,
    seen_user: Vec<bool>,
    seen_item: Vec<bool>,
    /// Training RMSE recorded per epoch.
    pub epoch_rmse: Vec<f64>,
    /// Loss-increase warnings recorded during training.
    pub warnings: Vec<String>,
}

impl MfModel {
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    fn user_vec(&self, user: usize) -> &[f64] {
        &self.user_factors[user * self.factors..(user + 1) * self.factors]
    }

    fn item_vec(&self, item: usize) -> &[f64] {
        &self.item_factors[item * self.factors..(item + 1) * self.factors]
    }

    /// Predict a rating, clamped to [0, 4]. Users or songs unseen during
    /// training fall back to the training-rating mean.
    pub fn predict(&self, user: usize, item: usize) -> f64 {
        let known_user = user < self.n_users && self.seen_user[user];
        let known_item = item < self.n_items && self.seen_item[item];
        if !known_user || !known_item {
            return self.global_mean.clamp(0.0, 4.0);
        }
        let dot: f64 = self
            .user_vec(user)
            .iter()
            .zip(self.item_vec(item))
            .map(|(p, q)| p * q)
            .sum();
        let raw = if self.biased {
            self.global_mean + self.user_bias[user] + self.item_bias[item] + dot
        } else {
            dot
        };
        raw.clamp(0.0, 4.0)
    }

    /// Versioned binary serialization.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"SCMF");
        out.extend_from_slice(&1u32.to_le_bytes());
        out.push(self.biased as u8);
        out.extend_from_slice(&(self.factors as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_users as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_items as u64).to_le_bytes());
        out.extend_from_slice(&self.global_mean.to_le_bytes());
        for v in [&self.user_factors, &self.item_factors, &self.user_bias, &self.item_bias] {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        for seen in [&self.seen_user, &self.seen_item] {
            out.extend(seen.iter().map(|&b| b as u8));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<MfModel> {
        let bad = |msg: &str| Error::InvalidParameter(format!("model file: {msg}"));
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            let end = *pos + n;
            let slice = bytes.get(*pos..end).ok_or_else(|| bad("truncated"))?;
            *pos = end;
            Ok(slice)
        };
        if take(&mut pos, 4)? != b"SCMF" {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != 1 {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let biased = take(&mut pos, 1)?[0] != 0;
        let read_u64 = |pos: &mut usize| -> Result<usize> {
            Ok(u64::from_le_bytes(take(pos, 8)?.try_into().unwrap()) as usize)
        };
        let factors = read_u64(&mut pos)?;
        let n_users = read_u64(&mut pos)?;
        let n_items = read_u64(&mut pos)?;
        let global_mean = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let read_f64s = |pos: &mut usize, n: usize| -> Result<Vec<f64>> {
            let raw = take(pos, n * 8)?;
            Ok(raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let user_factors = read_f64s(&mut pos, n_users * factors)?;
        let item_factors = read_f64s(&mut pos, n_items * factors)?;
        let user_bias = read_f64s(&mut pos, n_users)?;
        let item_bias = read_f64s(&mut pos, n_items)?;
        let seen_user = take(&mut pos, n_users)?.iter().map(|&b| b != 0).collect();
        let seen_item = take(&mut pos, n_items)?.iter().map(|&b| b != 0).collect();
        Ok(MfModel {
            biased,
            factors,
            n_users,
            n_items,
            user_factors,
            item_factors,
            user_bias,
            item_bias,
            global_mean,
            seen_user,
            seen_item,
            epoch_rmse: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<MfModel> {
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        MfModel::from_bytes(&bytes)
    }
}

/// Train a factor model on the rating matrix.
pub fn train(ratings: &RatingMatrix, hyper: &MfHyperParams, biased: bool) -> Result<MfModel> {
    if ratings.n_ratings() == 0 {
        return Err(Error::EmptyInput("cannot train on an empty rating matrix".into()));
    }
    if hyper.factors == 0 {
        return Err(Error::InvalidParameter("factors must be >= 1".into()));
    }
    if hyper.learning_rate <= 0.0 {
        return Err(Error::InvalidParameter("learning rate must be > 0".into()));
    }
    if hyper.regularization < 0.0 {
        return Err(Error::InvalidParameter("regularization must be >= 0".into()));
    }
    if hyper.epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be >= 1".into()));
    }

    let n_users = ratings.n_users();
    let n_items = ratings.n_songs();
    let f = hyper.factors;
    let triples: Vec<(usize, usize, f64)> = ratings.rated_pairs().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut user_factors = vec![0.0; n_users * f];
    let mut item_factors = vec![0.0; n_items * f];
    for x in user_factors.iter_mut().chain(item_factors.iter_mut()) {
        *x = rng.random_range(-FACTOR_INIT_RANGE..FACTOR_INIT_RANGE);
    }
    let mut user_bias = vec![0.0; n_users];
    let mut item_bias = vec![0.0; n_items];
    let mut seen_user = vec![false; n_users];
    let mut seen_item = vec![false; n_items];
    for &(u, i, _) in &triples {
        seen_user[u] = true;
        seen_item[i] = true;
    }
    let global_mean = ratings.global_mean();

    let lr = hyper.learning_rate;
    let reg = hyper.regularization;
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut epoch_rmse = Vec::with_capacity(hyper.epochs);
    let mut warnings = Vec::new();

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for &idx in &order {
            let (u, i, r) = triples[idx];
            let pu = &mut user_factors[u * f..(u + 1) * f];
            let qi = &mut item_factors[i * f..(i + 1) * f];
            let dot: f64 = pu.iter().zip(qi.iter()).map(|(p, q)| p * q).sum();
            let pred = if biased {
                global_mean + user_bias[u] + item_bias[i] + dot
            } else {
                dot
            };
            let err = r - pred;
            sse += err * err;
            if biased {
                user_bias[u] += lr * (err - reg * user_bias[u]);
                item_bias[i] += lr * (err - reg * item_bias[i]);
            }
            for (p, q) in pu.iter_mut().zip(qi.iter_mut()) {
                let p_old = *p;
                *p += lr * (err * *q - reg * p_old);
                *q += lr * (err * p_old - reg * *q);
            }
        }
        let rmse = (sse / triples.len() as f64).sqrt();
        if !rmse.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: rmse,
            });
        }
        if epoch >= 5 {
            let prev = epoch_rmse[epoch - 1];
            if rmse > prev + 1e-6 {
                warnings.push(format!(
                    "training RMSE rose from {prev:.6} to {rmse:.6} at epoch {epoch}"
                ));
            }
        }
        epoch_rmse.push(rmse);
    }

    Ok(MfModel {
        biased,
        factors: f,
        n_users,
        n_items,
        user_factors,
        item_factors,
        user_bias,
        item_bias,
        global_mean,
        seen_user,
        seen_item,
        epoch_rmse,
        warnings,
    })
}

/// Regularized squared error of one training example:
/// half the squared residual plus half the regularization penalty on the
/// parameters involved. The SGD step moves each parameter along the
/// negative of this objective's gradient scaled by the learning rate.
pub fn sample_loss(
    user_vec: &[f64],
    item_vec: &[f64],
    user_bias: f64,
    item_bias: f64,
    global_mean: f64,
    rating: f64,
    regularization: f64,
    biased: bool,
) -> f64 {
    let dot: f64 = user_vec.iter().zip(item_vec).map(|(p, q)| p * q).sum();
    let pred = if biased {
        global_mean + user_bias + item_bias + dot
    } else {
        dot
    };
    let err = rating - pred;
    let mut penalty: f64 = user_vec.iter().map(|p| p * p).sum::<f64>()
        + item_vec.iter().map(|q| q * q).sum::<f64>();
    if biased {
        penalty += user_bias * user_bias + item_bias * item_bias;
    }
    0.5 * err * err + 0.5 * regularization * penalty
}

/// Analytic gradients of [`sample_loss`] with respect to the user vector,
/// item vector, user bias, and item bias.
pub fn sample_gradients(
    user_vec: &[f64],
    item_vec: &[f64],
    user_bias: f64,
    item_bias: f64,
    global_mean: f64,
    rating: f64,
    regularization: f64,
    biased: bool,
) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let dot: f64 = user_vec.iter().zip(item_vec).map(|(p, q)| p * q).sum();
    let pred = if biased {
        global_mean + user_bias + item_bias + dot
    } else {
        dot
    };
    let err = rating - pred;
    let d_user = user_vec
        .iter()
        .zip(item_vec)
        .map(|(p, q)| -err * q + regularization * p)
        .collect();
    let d_item = user_vec
        .iter()
        .zip(item_vec)
        .map(|(p, q)| -err * p + regularization * q)
        .collect();
    let (d_bu, d_bi) = if biased {
        (
            -err + regularization * user_bias,
            -err + regularization * item_bias,
        )
    } else {
        (0.0, 0.0)
    };
    (d_user, d_item, d_bu, d_bi)
}
