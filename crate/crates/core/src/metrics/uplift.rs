use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_finite, check_len, MetricsError};

/// How the top-k% sets of the treated and control groups are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ranking {
    /// Each group is ranked on its own and contributes its own top k%.
    #[default]
    Separate,
    /// All nodes are ranked together; the top k% is then split by treatment.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CurveOptions {
    pub ranking: Ranking,
    /// Average the predicted uplift inside each set instead of the observed
    /// outcome.
    pub average_predictions: bool,
}

/// `k = 10%, 20%, …, 100%`.
pub fn default_ks() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Node ids sorted by descending score, ties by ascending id.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    rank_with(scores, |i| i)
}

fn rank_with(scores: &[f64], tie: impl Fn(usize) -> usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| tie(a).cmp(&tie(b))));
    order
}

/// Size of the top `k` share of `n` items, at least one when `n > 0`.
fn top_count(k: f64, n: usize) -> usize {
    (((k * n as f64) - 1e-9).ceil().max(1.0) as usize).min(n)
}

fn validate(tau_hat: &[f64], t: &[u8], y: &[f64]) -> Result<(usize, usize), MetricsError> {
    check_len("tau_hat vs t", tau_hat.len(), t.len())?;
    check_len("tau_hat vs y", tau_hat.len(), y.len())?;
    check_finite("tau_hat", tau_hat)?;
    check_finite("outcomes", y)?;
    let n_t = t.iter().filter(|&&x| x == 1).count();
    let n_c = t.len() - n_t;
    if n_t == 0 || n_c == 0 {
        return Err(MetricsError::EmptyGroup(format!("{n_t} treated and {n_c} control nodes")));
    }
    Ok((n_t, n_c))
}

fn sorted_ks(ks: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if ks.iter().any(|&k| !(k > 0.0 && k <= 1.0)) {
        return Err(MetricsError::Length(format!("every k must lie in (0, 1], got {ks:?}")));
    }
    let mut ks = ks.to_vec();
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    Ok(ks)
}

fn curve_points(order: &[usize], t: &[u8], value: &[f64], ks: &[f64], ranking: Ranking) -> Vec<Option<f64>> {
    let mean = |v: &mut dyn Iterator<Item = usize>| {
        let (s, c) = v.fold((0.0, 0usize), |(s, c), i| (s + value[i], c + 1));
        (c > 0).then(|| s / c as f64)
    };
    let treated: Vec<usize> = order.iter().copied().filter(|&i| t[i] == 1).collect();
    let control: Vec<usize> = order.iter().copied().filter(|&i| t[i] == 0).collect();
    ks.iter()
        .map(|&k| {
            let (mt, mc) = match ranking {
                Ranking::Separate => (
                    mean(&mut treated[..top_count(k, treated.len())].iter().copied()),
                    mean(&mut control[..top_count(k, control.len())].iter().copied()),
                ),
                Ranking::Joint => {
                    let top = &order[..top_count(k, order.len())];
                    (
                        mean(&mut top.iter().copied().filter(|&i| t[i] == 1)),
                        mean(&mut top.iter().copied().filter(|&i| t[i] == 0)),
                    )
                }
            };
            Some(mt? - mc?)
        })
        .collect()
}

/// Uplift curve `Y_k` for each share `k`: the mean observed outcome of the
/// treated members of the top-k% minus that of the control members, nodes
/// ranked by descending `τ̂` with ties broken by node id. A point whose
/// treated or control set is empty is skipped with a warning.
pub fn uplift_curve(
    tau_hat: &[f64],
    t: &[u8],
    y_obs: &[f64],
    ks: &[f64],
    opts: CurveOptions,
) -> Result<Vec<(f64, f64)>, MetricsError> {
    validate(tau_hat, t, y_obs)?;
    let ks = sorted_ks(ks)?;
    let value = if opts.average_predictions { tau_hat } else { y_obs };
    let points = curve_points(&rank_descending(tau_hat), t, value, &ks, opts.ranking);
    Ok(ks
        .iter()
        .zip(points)
        .filter_map(|(&k, p)| {
            if p.is_none() {
                log::warn!("uplift curve: empty group at k={k}, point skipped");
            }
            p.map(|v| (k, v))
        })
        .collect())
}

/// Uplift curve with ties broken by a fresh random permutation in each of
/// `shuffles` repetitions. Returns `(k, mean Y_k, standard error)` for every
/// `k` present in all repetitions.
pub fn uplift_curve_averaged(
    tau_hat: &[f64],
    t: &[u8],
    y_obs: &[f64],
    ks: &[f64],
    opts: CurveOptions,
    shuffles: usize,
    seed: u64,
) -> Result<Vec<(f64, f64, f64)>, MetricsError> {
    validate(tau_hat, t, y_obs)?;
    let ks = sorted_ks(ks)?;
    let value = if opts.average_predictions { tau_hat } else { y_obs };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut key: Vec<usize> = (0..tau_hat.len()).collect();
    let mut runs: Vec<Vec<Option<f64>>> = Vec::with_capacity(shuffles);
    for _ in 0..shuffles {
        key.shuffle(&mut rng);
        let order = rank_with(tau_hat, |i| key[i]);
        runs.push(curve_points(&order, t, value, &ks, opts.ranking));
    }
    Ok(ks
        .iter()
        .enumerate()
        .filter_map(|(j, &k)| {
            let v: Option<Vec<f64>> = runs.iter().map(|r| r[j]).collect();
            let v = v?;
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            Some((k, m, (var / n).sqrt()))
        })
        .collect())
}

/// Cumulative incremental-gain curve and its Qini coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct QiniCurve {
    /// `(x, g(x))` starting at `(0, 0)`, `x` the share of the population.
    pub points: Vec<(f64, f64)>,
    /// Trapezoidal area of `g(x) − x·g(1)` over `x ∈ [0, 1]`.
    pub coefficient: f64,
    /// Bins folded into the next one because they held no control node.
    pub merged_bins: usize,
}

/// Qini curve over `n_bins` equal population shares. The population is
/// ranked jointly by descending `τ̂` (ties by node id). At each cutoff
/// `g = Y_t − Y_c · n_t / n_c`, with `Y_t`, `Y_c` the summed observed
/// outcomes of the treated and control nodes above the cutoff. A cutoff with
/// no control node yet is merged into the next bin with a warning.
pub fn qini_curve(tau_hat: &[f64], t: &[u8], y_obs: &[f64], n_bins: usize) -> Result<QiniCurve, MetricsError> {
    validate(tau_hat, t, y_obs)?;
    if n_bins == 0 {
        return Err(MetricsError::Length("qini needs at least one bin".into()));
    }
    let n = tau_hat.len();
    let order = rank_descending(tau_hat);
    let mut points = vec![(0.0, 0.0)];
    let mut merged_bins = 0;
    let (mut yt, mut yc, mut nt, mut nc) = (0.0, 0.0, 0usize, 0usize);
    let mut pos = 0;
    for b in 1..=n_bins {
        let cutoff = b * n / n_bins;
        while pos < cutoff {
            let i = order[pos];
            if t[i] == 1 {
                yt += y_obs[i];
                nt += 1;
            } else {
                yc += y_obs[i];
                nc += 1;
            }
            pos += 1;
        }
        if nc == 0 || cutoff == 0 {
            merged_bins += 1;
            continue;
        }
        points.push((cutoff as f64 / n as f64, yt - yc * nt as f64 / nc as f64));
    }
    if merged_bins > 0 {
        log::warn!("qini: {merged_bins} leading bins had no control node and were merged into later bins");
    }
    let g1 = points.last().map_or(0.0, |p| p.1);
    let lift = |(x, g): (f64, f64)| g - x * g1;
    let coefficient = points.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (lift(w[0]) + lift(w[1]))).sum();
    Ok(QiniCurve { points, coefficient, merged_bins })
}

/// Qini coefficient, see [`qini_curve`].
pub fn qini(tau_hat: &[f64], t: &[u8], y_obs: &[f64], n_bins: usize) -> Result<f64, MetricsError> {
    qini_curve(tau_hat, t, y_obs, n_bins).map(|q| q.coefficient)
}
