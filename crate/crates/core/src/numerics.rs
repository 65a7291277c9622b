//! Shared numeric kernels: seasonal/nonseasonal differencing with exact
//! inversion, exponential moving averages, a Nelder-Mead simplex optimizer,
//! and a ridge regression solver.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("series too short: need more than {need} values, got {got}")]
    SeriesTooShort { need: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,
    #[error("singular system: rank-deficient normal equations with zero ridge penalty")]
    SingularSystem,
}

// ---------------------------------------------------------------------------
// Differencing
// ---------------------------------------------------------------------------

/// Boundary values retained by [`difference`], sufficient to invert it
/// exactly. Seasonal passes are applied first, then regular passes; the
/// retained values total `d + D*s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceInfo {
    pub d: usize,
    pub cap_d: usize,
    pub season: usize,
    /// First `s` values of the series entering each seasonal pass.
    seasonal_heads: Vec<Vec<f64>>,
    /// First value of the series entering each regular pass.
    regular_heads: Vec<f64>,
}

impl DifferenceInfo {
    /// Total retained boundary values (`d + D*s`).
    pub fn retained(&self) -> usize {
        self.regular_heads.len() + self.seasonal_heads.iter().map(Vec::len).sum::<usize>()
    }
}

/// Apply `D` seasonal differences at period `s`, then `d` regular
/// differences: `z = (1-B)^d (1-B^s)^D y`.
pub fn difference(
    y: &[f64],
    d: usize,
    cap_d: usize,
    season: usize,
) -> Result<(Vec<f64>, DifferenceInfo), NumericError> {
    let need = d + cap_d * season;
    if y.len() <= need {
        return Err(NumericError::SeriesTooShort { need, got: y.len() });
    }
    let mut current = y.to_vec();
    let mut seasonal_heads = Vec::with_capacity(cap_d);
    for _ in 0..cap_d {
        seasonal_heads.push(current[..season].to_vec());
        current = current.windows(season + 1).map(|w| w[season] - w[0]).collect();
    }
    let mut regular_heads = Vec::with_capacity(d);
    for _ in 0..d {
        regular_heads.push(current[0]);
        current = current.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok((current, DifferenceInfo { d, cap_d, season, seasonal_heads, regular_heads }))
}

/// Exact inverse of [`difference`].
pub fn integrate(z: &[f64], info: &DifferenceInfo) -> Result<Vec<f64>, NumericError> {
    let mut current = z.to_vec();
    for head in info.regular_heads.iter().rev() {
        let mut undone = Vec::with_capacity(current.len() + 1);
        undone.push(*head);
        for &v in &current {
            let prev = *undone.last().unwrap();
            undone.push(prev + v);
        }
        current = undone;
    }
    for head in info.seasonal_heads.iter().rev() {
        if head.len() != info.season {
            return Err(NumericError::ShapeMismatch(format!(
                "seasonal head has {} values, expected {}",
                head.len(),
                info.season
            )));
        }
        let mut undone = head.clone();
        for (i, &v) in current.iter().enumerate() {
            let base = undone[i];
            undone.push(base + v);
        }
        current = undone;
    }
    Ok(current)
}

/// Incrementally inverts differencing for values appended beyond the series
/// the differencing was fit on. Used to turn differenced-scale forecasts back
/// into level forecasts one step at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepIntegrator {
    season: usize,
    /// Last value of the series entering each regular pass (outermost first).
    regular_tails: Vec<f64>,
    /// Last `s` values of the series entering each seasonal pass
    /// (outermost first, oldest value first within each tail).
    seasonal_tails: Vec<Vec<f64>>,
}

impl StepIntegrator {
    /// Build from the original series; replays the same stage structure the
    /// differencing used and keeps only the tails each stage needs.
    pub fn from_series(
        y: &[f64],
        d: usize,
        cap_d: usize,
        season: usize,
    ) -> Result<Self, NumericError> {
        let need = d + cap_d * season;
        if y.len() <= need {
            return Err(NumericError::SeriesTooShort { need, got: y.len() });
        }
        let mut current = y.to_vec();
        let mut seasonal_tails = Vec::with_capacity(cap_d);
        for _ in 0..cap_d {
            seasonal_tails.push(current[current.len() - season..].to_vec());
            current = current.windows(season + 1).map(|w| w[season] - w[0]).collect();
        }
        let mut regular_tails = Vec::with_capacity(d);
        for _ in 0..d {
            regular_tails.push(*current.last().unwrap());
            current = current.windows(2).map(|w| w[1] - w[0]).collect();
        }
        Ok(Self { season, regular_tails, seasonal_tails })
    }

    /// Append one differenced-scale value; returns the level-scale value.
    pub fn step(&mut self, z: f64) -> f64 {
        let mut v = z;
        for tail in self.regular_tails.iter_mut().rev() {
            v += *tail;
            *tail = v;
        }
        for tail in self.seasonal_tails.iter_mut().rev() {
            v += tail[0];
            tail.remove(0);
            tail.push(v);
        }
        v
    }
}

/// Incrementally applies the same differencing to values appended beyond the
/// series it was built from (exogenous columns at forecast time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDifferencer {
    season: usize,
    regular_tails: Vec<f64>,
    seasonal_tails: Vec<Vec<f64>>,
}

impl StepDifferencer {
    pub fn from_series(
        x: &[f64],
        d: usize,
        cap_d: usize,
        season: usize,
    ) -> Result<Self, NumericError> {
        let need = d + cap_d * season;
        if x.len() <= need {
            return Err(NumericError::SeriesTooShort { need, got: x.len() });
        }
        let mut current = x.to_vec();
        let mut seasonal_tails = Vec::with_capacity(cap_d);
        for _ in 0..cap_d {
            seasonal_tails.push(current[current.len() - season..].to_vec());
            current = current.windows(season + 1).map(|w| w[season] - w[0]).collect();
        }
        let mut regular_tails = Vec::with_capacity(d);
        for _ in 0..d {
            regular_tails.push(*current.last().unwrap());
            current = current.windows(2).map(|w| w[1] - w[0]).collect();
        }
        Ok(Self { season, regular_tails, seasonal_tails })
    }

    /// Append one raw value; returns the fully differenced value.
    pub fn step(&mut self, x: f64) -> f64 {
        let mut v = x;
        for tail in self.seasonal_tails.iter_mut() {
            let prev = tail[0];
            tail.remove(0);
            tail.push(v);
            v -= prev;
        }
        for tail in self.regular_tails.iter_mut() {
            let prev = *tail;
            *tail = v;
            v -= prev;
        }
        v
    }
}

// ---------------------------------------------------------------------------
// Exponential moving average
// ---------------------------------------------------------------------------

/// EMA over `values` with window count `k`: smoothing factor `b = 2/(k+1)`,
/// seeded with the first value; returns the final smoothed value.
pub fn ema(values: &[f64], k: usize) -> Result<f64, NumericError> {
    if values.is_empty() {
        return Err(NumericError::EmptyInput);
    }
    let beta = 2.0 / (k as f64 + 1.0);
    let mut acc = values[0];
    for &v in &values[1..] {
        acc = beta * v + (1.0 - beta) * acc;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Nelder-Mead
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Terminate when the objective spread across the simplex drops below
    /// `tol * (1 + |f_best|)`.
    pub tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iter: 2000, tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective seen, per iteration (non-increasing).
    pub history: Vec<f64>,
}

fn eval_clamped(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Derivative-free simplex minimization with the standard reflection /
/// expansion / contraction / shrink moves.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> Result<OptimizerResult, NumericError> {
    let n = x0.len();
    if !f(x0).is_finite() {
        return Err(NumericError::NonFiniteObjective);
    }
    if n == 0 {
        return Ok(OptimizerResult {
            x: vec![],
            objective: f(x0),
            iterations: 0,
            converged: true,
            history: vec![f(x0)],
        });
    }

    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = if v[i].abs() > 1e-8 { 0.1 * v[i].abs() } else { 0.1 };
        v[i] += step;
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|x| eval_clamped(&mut f, x)).collect();

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..opts.max_iter {
        // Order vertices by objective.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap_or(std::cmp::Ordering::Equal));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];
        history.push(fvals[best]);

        let spread = fvals[worst] - fvals[best];
        if !spread.is_finite() || spread <= opts.tol * (1.0 + fvals[best].abs()) {
            converged = spread.is_finite();
            break;
        }
        iterations += 1;

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for (i, v) in simplex.iter().enumerate() {
            if i == worst {
                continue;
            }
            for (c, &vi) in centroid.iter_mut().zip(v) {
                *c += vi;
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let blend = |a: f64, from: &[f64], to: &[f64]| -> Vec<f64> {
            from.iter().zip(to).map(|(&c, &w)| c + a * (c - w)).collect()
        };

        let reflected = blend(ALPHA, &centroid, &simplex[worst]);
        let f_reflected = eval_clamped(&mut f, &reflected);

        if f_reflected < fvals[best] {
            let expanded = blend(GAMMA, &centroid, &simplex[worst]);
            let f_expanded = eval_clamped(&mut f, &expanded);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                fvals[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                fvals[worst] = f_reflected;
            }
        } else if f_reflected < fvals[second_worst] {
            simplex[worst] = reflected;
            fvals[worst] = f_reflected;
        } else {
            // Outside contraction when the reflected point improved on the
            // worst vertex, inside contraction otherwise.
            let (contracted, f_contracted, bar) = if f_reflected < fvals[worst] {
                let c = blend(ALPHA * RHO, &centroid, &simplex[worst]);
                let fc = eval_clamped(&mut f, &c);
                (c, fc, f_reflected)
            } else {
                let c = blend(-RHO, &centroid, &simplex[worst]);
                let fc = eval_clamped(&mut f, &c);
                (c, fc, fvals[worst])
            };
            if f_contracted <= bar {
                simplex[worst] = contracted;
                fvals[worst] = f_contracted;
            } else {
                // Shrink toward the best vertex.
                let best_point = simplex[best].clone();
                for (i, v) in simplex.iter_mut().enumerate() {
                    if i == best {
                        continue;
                    }
                    for (vi, &bi) in v.iter_mut().zip(&best_point) {
                        *vi = bi + SIGMA * (*vi - bi);
                    }
                    fvals[i] = eval_clamped(&mut f, v);
                }
            }
        }
    }

    let (best_idx, _) = fvals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    history.push(fvals[best_idx]);
    // Keep the history monotone best-so-far.
    for i in 1..history.len() {
        if history[i] > history[i - 1] {
            history[i] = history[i - 1];
        }
    }
    Ok(OptimizerResult {
        x: simplex[best_idx].clone(),
        objective: fvals[best_idx],
        iterations,
        converged,
        history,
    })
}

/// Nelder-Mead with `restarts` re-initializations around the best point
/// found so far; the perturbations are drawn from `rng`.
pub fn nelder_mead_restarts(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &NelderMeadOptions,
    restarts: usize,
    rng: &mut impl rand::Rng,
) -> Result<OptimizerResult, NumericError> {
    let mut best = nelder_mead(&mut f, x0, opts)?;
    for _ in 0..restarts {
        let start: Vec<f64> = best
            .x
            .iter()
            .map(|&v| v + rng.random_range(-0.5..0.5) * (1.0 + v.abs()))
            .collect();
        if !f(&start).is_finite() {
            continue;
        }
        let run = nelder_mead(&mut f, &start, opts)?;
        let offset = best.objective.min(run.history.first().copied().unwrap_or(f64::INFINITY));
        let mut floor = offset;
        for h in run.history.iter() {
            floor = floor.min(*h);
            best.history.push(floor);
        }
        best.iterations += run.iterations;
        if run.objective < best.objective {
            best.x = run.x;
            best.objective = run.objective;
            best.converged = run.converged;
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Ridge regression
// ---------------------------------------------------------------------------

/// Solve `min ||y - X b||^2 + lambda ||b||^2` via the normal equations with
/// a Cholesky factorization. `rows` holds one feature vector per observation.
pub fn ridge_solve(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<Vec<f64>, NumericError> {
    if rows.len() != y.len() {
        return Err(NumericError::ShapeMismatch(format!(
            "{} rows vs {} targets",
            rows.len(),
            y.len()
        )));
    }
    if rows.is_empty() {
        return Err(NumericError::EmptyInput);
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(NumericError::ShapeMismatch("ragged design matrix".into()));
    }

    // A = X'X + lambda I, b = X'y
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for (row, &yi) in rows.iter().zip(y) {
        for i in 0..p {
            let xi = row[i];
            b[i] += xi * yi;
            for j in i..p {
                a[i * p + j] += xi * row[j];
            }
        }
    }
    for i in 0..p {
        a[i * p + i] += lambda;
        for j in 0..i {
            a[i * p + j] = a[j * p + i];
        }
    }

    cholesky_solve(&mut a, &b, p).ok_or(NumericError::SingularSystem)
}

/// In-place Cholesky solve of a symmetric positive-definite system.
fn cholesky_solve(a: &mut [f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    // Factor A = L L'
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= a[i * p + k] * a[j * p + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                a[i * p + i] = sum.sqrt();
            } else {
                a[i * p + j] = sum / a[j * p + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut x = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            x[i] -= a[i * p + k] * x[k];
        }
        x[i] /= a[i * p + i];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            x[i] -= a[k * p + i] * x[k];
        }
        x[i] /= a[i * p + i];
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// Percentiles
// ---------------------------------------------------------------------------

/// Nearest-rank percentile of an unsorted slice: the value at rank
/// `ceil(pct/100 * n)` (1-based) of the sorted data. NaNs are ignored.
/// Returns None when no finite values are present.
pub fn nearest_rank_percentile(values: &[f64], pct: f64) -> Option<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}
