use serde::{Deserialize, Serialize};

use super::TrainingSet;
use crate::error::{Error, Result};
use crate::textrepr::CountVector;

/// `sigmoid(bias + w·x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn margin(&self, x: &CountVector) -> f64 {
        self.bias
            + x.entries()
                .iter()
                .filter(|e| e.0 < self.weights.len())
                .map(|&(j, v)| self.weights[j] * v)
                .sum::<f64>()
    }

    pub fn predict_prob(&self, x: &CountVector) -> f64 {
        sigmoid(self.margin(x))
    }

    /// Columns with `|w| > 1e-8`.
    pub fn nonzero_features(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| w.abs() > 1e-8)
            .map(|(j, _)| j)
            .collect()
    }
}

/// A fitted model with its per-epoch training objective.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub model: LinearModel,
    /// Objective before the first epoch followed by one value per epoch.
    pub losses: Vec<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z) - y z`, stable for large `|z|`.
fn log_loss(z: f64, y: f64) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - y * z
}

struct Problem<'a> {
    data: &'a TrainingSet,
    y: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(data: &'a TrainingSet) -> Result<Self> {
        if !data.has_both_classes() {
            return Err(Error::DegenerateLabels);
        }
        Ok(Problem {
            data,
            y: data.labels.iter().map(|&l| l as f64).collect(),
        })
    }

    fn n(&self) -> f64 {
        self.data.len() as f64
    }

    fn prior_logit(&self) -> f64 {
        let p = self.data.positive_rate();
        (p / (1.0 - p)).ln()
    }

    fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        self.data
            .rows
            .iter()
            .map(|x| b + x.entries().iter().map(|&(j, v)| w[j] * v).sum::<f64>())
            .collect()
    }

    /// Mean log loss.
    fn loss(&self, margins: &[f64]) -> f64 {
        margins.iter().zip(&self.y).map(|(&z, &y)| log_loss(z, y)).sum::<f64>() / self.n()
    }

    /// Gradient of the mean log loss with respect to (w, b).
    fn gradient(&self, margins: &[f64]) -> (Vec<f64>, f64) {
        let mut gw = vec![0.0; self.data.dim];
        let mut gb = 0.0;
        for ((x, &z), &y) in self.data.rows.iter().zip(margins).zip(&self.y) {
            let r = sigmoid(z) - y;
            gb += r;
            for &(j, v) in x.entries() {
                gw[j] += r * v;
            }
        }
        let n = self.n();
        gw.iter_mut().for_each(|g| *g /= n);
        (gw, gb / n)
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Batch gradient descent on `mean log loss + l2/2 ‖w‖²` (bias unpenalized).
///
/// Each epoch takes one full-gradient step. The step starts at `lr` and is
/// halved until the Armijo condition holds, so the objective never increases.
pub(crate) fn train_l2(data: &TrainingSet, l2: f64, epochs: usize, lr: f64) -> Result<LogisticFit> {
    let problem = Problem::new(data)?;
    let objective = |margins: &[f64], w: &[f64]| problem.loss(margins) + 0.5 * l2 * sq_norm(w);

    let mut w = vec![0.0; data.dim];
    let mut b = problem.prior_logit();
    let mut margins = problem.margins(&w, b);
    let mut current = objective(&margins, &w);
    let mut losses = vec![current];
    let mut step = lr;

    for _ in 0..epochs {
        let (mut gw, gb) = problem.gradient(&margins);
        for (g, wj) in gw.iter_mut().zip(&w) {
            *g += l2 * wj;
        }
        let g2 = sq_norm(&gw) + gb * gb;
        if g2 < 1e-20 {
            losses.push(current);
            continue;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let cand_w: Vec<f64> = w.iter().zip(&gw).map(|(wj, g)| wj - step * g).collect();
            let cand_b = b - step * gb;
            let cand_margins = problem.margins(&cand_w, cand_b);
            let cand = objective(&cand_margins, &cand_w);
            if cand <= current - 0.5 * step * g2 {
                w = cand_w;
                b = cand_b;
                margins = cand_margins;
                current = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        losses.push(current);
        if accepted {
            step = (step * 2.0).min(lr);
        } else {
            // no representable descent left
            step = lr;
        }
    }
    Ok(LogisticFit {
        model: LinearModel { weights: w, bias: b },
        losses,
    })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

const PATH_LENGTH: usize = 100;
const PATH_RATIO: f64 = 1e-4;
const MAX_INNER: usize = 500;

/// L1-penalized logistic regression solved along a decreasing penalty path.
///
/// Each penalty is solved by accelerated proximal gradient (FISTA with
/// backtracking and restart), warm-started from the previous one. The path
/// stops before the first penalty that activates more than `k_max` weights.
/// When `k_max` covers every column, the path ends with an unpenalized fit.
pub(crate) fn train_sparse(data: &TrainingSet, k_max: usize) -> Result<LinearModel> {
    let problem = Problem::new(data)?;
    if k_max > data.dim {
        return Err(Error::Config(format!(
            "k_max = {k_max} exceeds the {} available features",
            data.dim
        )));
    }
    let b0 = problem.prior_logit();
    let w0 = vec![0.0; data.dim];
    let (g0, _) = problem.gradient(&problem.margins(&w0, b0));
    let lambda_max = g0.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    if lambda_max <= 0.0 {
        return Err(Error::Convergence("no feature correlates with the labels".into()));
    }

    let mut lambdas: Vec<f64> = (1..PATH_LENGTH)
        .map(|t| lambda_max * PATH_RATIO.powf(t as f64 / (PATH_LENGTH - 1) as f64))
        .collect();
    if k_max >= data.dim {
        lambdas.push(0.0);
    }

    let mut solver = Fista::new(&problem);
    let mut best: Option<LinearModel> = None;
    let (mut w, mut b) = (w0, b0);
    for lambda in lambdas {
        (w, b) = solver.solve(&w, b, lambda);
        let nnz = w.iter().filter(|v| **v != 0.0).count();
        if nnz > k_max {
            break;
        }
        best = Some(LinearModel {
            weights: w.clone(),
            bias: b,
        });
    }
    match best {
        Some(m) if m.weights.iter().any(|v| *v != 0.0) => Ok(m),
        _ => Err(Error::Convergence(format!(
            "the penalty path never selects between 1 and {k_max} features"
        ))),
    }
}

struct Fista<'p, 'a> {
    problem: &'p Problem<'a>,
    lipschitz: f64,
}

impl<'p, 'a> Fista<'p, 'a> {
    fn new(problem: &'p Problem<'a>) -> Self {
        Fista {
            problem,
            lipschitz: 1e-3,
        }
    }

    fn smooth(&self, w: &[f64], b: f64) -> (f64, Vec<f64>) {
        let m = self.problem.margins(w, b);
        (self.problem.loss(&m), m)
    }

    fn solve(&mut self, w_init: &[f64], b_init: f64, lambda: f64) -> (Vec<f64>, f64) {
        let objective = |loss: f64, w: &[f64]| loss + lambda * w.iter().map(|v| v.abs()).sum::<f64>();
        let (mut x_w, mut x_b) = (w_init.to_vec(), b_init);
        let (mut y_w, mut y_b) = (x_w.clone(), x_b);
        let mut t = 1.0f64;
        let (loss0, _) = self.smooth(&x_w, x_b);
        let mut f_x = objective(loss0, &x_w);

        for _ in 0..MAX_INNER {
            let (f_y, m_y) = self.smooth(&y_w, y_b);
            let (gw, gb) = self.problem.gradient(&m_y);
            let (next_w, next_b, loss_next) = loop {
                let step = 1.0 / self.lipschitz;
                let nw: Vec<f64> = y_w
                    .iter()
                    .zip(&gw)
                    .map(|(v, g)| soft_threshold(v - step * g, step * lambda))
                    .collect();
                let nb = y_b - step * gb;
                let (loss_n, _) = self.smooth(&nw, nb);
                let diff_w: Vec<f64> = nw.iter().zip(&y_w).map(|(a, b)| a - b).collect();
                let db = nb - y_b;
                let lin: f64 = diff_w.iter().zip(&gw).map(|(d, g)| d * g).sum::<f64>() + db * gb;
                let quad = 0.5 * self.lipschitz * (sq_norm(&diff_w) + db * db);
                if loss_n <= f_y + lin + quad + 1e-12 || self.lipschitz > 1e12 {
                    break (nw, nb, loss_n);
                }
                self.lipschitz *= 2.0;
            };
            let f_next = objective(loss_next, &next_w);
            let delta = next_w
                .iter()
                .zip(&x_w)
                .map(|(a, b)| (a - b).abs())
                .fold((next_b - x_b).abs(), f64::max);
            if f_next > f_x {
                // adaptive restart: drop momentum
                t = 1.0;
                y_w = x_w.clone();
                y_b = x_b;
                continue;
            }
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            y_w = next_w.iter().zip(&x_w).map(|(n, o)| n + beta * (n - o)).collect();
            y_b = next_b + beta * (next_b - x_b);
            x_w = next_w;
            x_b = next_b;
            f_x = f_next;
            t = t_next;
            if delta < 1e-7 {
                break;
            }
        }
        (x_w, x_b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> TrainingSet {
        let rows = (0..20)
            .map(|i| CountVector::from_entries([(i % 2, 1.0 + (i % 3) as f64)]))
            .collect();
        let labels = (0..20).map(|i| (i % 2) as u8).collect();
        TrainingSet { rows, labels, dim: 2 }
    }

    #[test]
    fn loss_is_monotone() {
        let fit = train_l2(&separable(), 1e-3, 200, 5.0).unwrap();
        for pair in fit.losses.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-6);
        }
        assert_eq!(fit.losses.len(), 201);
    }

    #[test]
    fn separable_toy_is_learned() {
        let data = separable();
        let fit = train_l2(&data, 0.0, 300, 1.0).unwrap();
        for (x, &y) in data.rows.iter().zip(&data.labels) {
            assert_eq!((fit.model.predict_prob(x) >= 0.5) as u8, y);
        }
    }

    #[test]
    fn huge_ridge_gives_prior() {
        let mut data = separable();
        data.labels[0] = 1; // prior 11/20
        let fit = train_l2(&data, 1e6, 50, 1.0).unwrap();
        assert!(fit.model.weights.iter().all(|w| w.abs() < 1e-5));
        let p = fit.model.predict_prob(&data.rows[0]);
        assert!((p - 0.55).abs() < 1e-4, "{p}");
    }

    #[test]
    fn stable_log_loss() {
        assert!((log_loss(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(log_loss(800.0, 1.0).abs() < 1e-12);
        assert!((log_loss(-800.0, 1.0) - 800.0).abs() < 1e-9);
        assert_eq!(sigmoid(-1000.0), 0.0);
    }

    #[test]
    fn sparse_respects_budget() {
        // 6 informative columns with decreasing strength
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200usize {
            let y = (i % 2) as u8;
            let mut e = Vec::new();
            for j in 0..6 {
                if (i / 2 + j) % (j + 2) != 0 {
                    e.push((j, if y == 1 { 1.0 } else { 0.0 } + ((i + j) % 2) as f64));
                }
            }
            e.push((6 + i % 5, 1.0));
            rows.push(CountVector::from_entries(e));
            labels.push(y);
        }
        let data = TrainingSet { rows, labels, dim: 11 };
        for k in [1, 3, 5] {
            let m = train_sparse(&data, k).unwrap();
            let nnz = m.nonzero_features().len();
            assert!((1..=k).contains(&nnz), "k={k} nnz={nnz}");
        }
    }
}
