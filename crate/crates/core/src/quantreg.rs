//! Linear quantile regression by exact minimization of the check loss.
//!
//! The fit is computed by a simplex-type descent over interpolation vertices:
//! a candidate solution always interpolates `d + 1` observations, and each
//! iteration relaxes one interpolated row, walks the piecewise-linear
//! objective along the resulting edge to its one-dimensional minimizer, and
//! admits the row where the walk stops. The objective strictly decreases per
//! pivot, so the walk terminates at a global minimizer of the convex loss.
//! With no predictors the fit reduces to the sample quantile.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuantRegError {
    #[error("quantile level must lie strictly inside (0, 1), got {0}")]
    InvalidTau(f64),
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("design has {design_rows} rows but the response has {response_len}")]
    DimensionMismatch {
        design_rows: usize,
        response_len: usize,
    },
    #[error("need at least {needed} observations to fit {predictors} predictors, got {got}")]
    TooFewObservations {
        needed: usize,
        got: usize,
        predictors: usize,
    },
    #[error("design matrix is rank-deficient once the intercept is included")]
    DegenerateDesign,
    #[error("empty value sequence")]
    Empty,
}

/// Relative pivot tolerance below which a design is reported rank-deficient.
const RANK_TOL: f64 = 1e-10;

/// A `T x d` predictor matrix (`d` may be zero). An intercept column is
/// implicitly prepended by every consumer; it is never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, QuantRegError> {
        if data.len() != rows * cols {
            return Err(QuantRegError::DimensionMismatch {
                design_rows: rows,
                response_len: data.len().checked_div(cols).unwrap_or(0),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(QuantRegError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// A design with no predictors: the intercept-only model.
    pub fn empty(rows: usize) -> Self {
        Self {
            rows,
            cols: 0,
            data: Vec::new(),
        }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self, QuantRegError> {
        for c in columns {
            if c.len() != rows {
                return Err(QuantRegError::DimensionMismatch {
                    design_rows: rows,
                    response_len: c.len(),
                });
            }
        }
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for t in 0..rows {
            for c in columns {
                data.push(c[t]);
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    /// The first `n` rows, as an owned matrix.
    pub fn head_rows(&self, n: usize) -> DesignMatrix {
        DesignMatrix {
            rows: n,
            cols: self.cols,
            data: self.data[..n * self.cols].to_vec(),
        }
    }

    pub(crate) fn data_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows gathered by index, in order.
    pub fn gather_rows(&self, idx: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &t in idx {
            data.extend_from_slice(self.row(t));
        }
        DesignMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Koenker-Bassett check loss `u * (tau - 1{u < 0})`.
pub fn check_loss(tau: f64, u: f64) -> Result<f64, QuantRegError> {
    validate_tau(tau)?;
    if !u.is_finite() {
        return Err(QuantRegError::NonFinite);
    }
    Ok(loss(tau, u))
}

#[inline]
pub(crate) fn loss(tau: f64, u: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

pub(crate) fn validate_tau(tau: f64) -> Result<(), QuantRegError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(QuantRegError::InvalidTau(tau));
    }
    Ok(())
}

/// 0-based order-statistic index of the `tau` sample quantile on `n` values:
/// the ceil(tau * n)-th order statistic, falling back to the lower endpoint
/// when `tau * n` is an integer. A small guard absorbs the float error of
/// products like `0.05 * 20`.
pub(crate) fn quantile_index(tau: f64, n: usize) -> usize {
    let s = tau * n as f64;
    let nearest = s.round();
    let m = if (s - nearest).abs() <= 1e-9 * (n as f64).max(1.0) {
        nearest
    } else {
        s.ceil()
    };
    (m as usize).clamp(1, n) - 1
}

/// The `tau` sample quantile: the lower endpoint of the check-loss minimizer
/// interval over the order statistics.
pub fn sample_quantile(values: &[f64], tau: f64) -> Result<f64, QuantRegError> {
    validate_tau(tau)?;
    if values.is_empty() {
        return Err(QuantRegError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(QuantRegError::NonFinite);
    }
    let mut v = values.to_vec();
    let idx = quantile_index(tau, v.len());
    let (_, q, _) = v.select_nth_unstable_by(idx, f64::total_cmp);
    Ok(*q)
}

/// A fitted linear quantile regression at one level.
#[derive(Debug, Clone)]
pub struct QuantileFit {
    pub tau: f64,
    /// Intercept first, then one coefficient per predictor column.
    pub coefficients: Vec<f64>,
    /// Fitted conditional quantiles, one per observation.
    pub fitted: Vec<f64>,
    /// Achieved check loss.
    pub objective: f64,
}

/// Fits `response ~ intercept + design` at level `tau` by exact check-loss
/// minimization. With an empty design this is the sample quantile.
pub fn fit_quantile_regression(
    response: &[f64],
    design: &DesignMatrix,
    tau: f64,
) -> Result<QuantileFit, QuantRegError> {
    validate_tau(tau)?;
    let t_len = response.len();
    if design.rows() != t_len {
        return Err(QuantRegError::DimensionMismatch {
            design_rows: design.rows(),
            response_len: t_len,
        });
    }
    let d = design.cols();
    if t_len < d + 2 {
        return Err(QuantRegError::TooFewObservations {
            needed: d + 2,
            got: t_len,
            predictors: d,
        });
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(QuantRegError::NonFinite);
    }

    if d == 0 {
        let q = sample_quantile(response, tau)?;
        let fitted = vec![q; t_len];
        let objective = response.iter().map(|&y| loss(tau, y - q)).sum();
        return Ok(QuantileFit {
            tau,
            coefficients: vec![q],
            fitted,
            objective,
        });
    }

    let beta = descend(response, design, tau)?;
    let fitted: Vec<f64> = (0..t_len).map(|t| aug_dot(design, t, &beta)).collect();
    let objective = response
        .iter()
        .zip(&fitted)
        .map(|(&y, &f)| loss(tau, y - f))
        .sum();
    Ok(QuantileFit {
        tau,
        coefficients: beta,
        fitted,
        objective,
    })
}

/// Dot product of the implicit augmented row `[1, z_t]` with `v`.
#[inline]
fn aug_dot(design: &DesignMatrix, t: usize, v: &[f64]) -> f64 {
    let row = design.row(t);
    let mut acc = v[0];
    for j in 0..row.len() {
        acc += row[j] * v[j + 1];
    }
    acc
}

/// Dense LU with partial pivoting for the tiny basis systems.
struct LuSmall {
    m: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuSmall {
    /// Factors the matrix whose rows are the augmented basis rows. Returns
    /// `None` when a pivot falls below the relative tolerance.
    fn factor(response_design: &DesignMatrix, basis: &[usize]) -> Option<LuSmall> {
        let m = basis.len();
        let mut lu = vec![0.0; m * m];
        for (i, &t) in basis.iter().enumerate() {
            lu[i * m] = 1.0;
            lu[i * m + 1..i * m + m].copy_from_slice(response_design.row(t));
        }
        let scale = lu
            .iter()
            .fold(0.0_f64, |a, &v| a.max(v.abs()))
            .max(1.0);
        let mut perm: Vec<usize> = (0..m).collect();
        for col in 0..m {
            let mut best = col;
            let mut best_abs = lu[perm[col] * m + col].abs();
            for r in col + 1..m {
                let a = lu[perm[r] * m + col].abs();
                if a > best_abs {
                    best = r;
                    best_abs = a;
                }
            }
            if best_abs <= 1e-13 * scale {
                return None;
            }
            perm.swap(col, best);
            let p = perm[col];
            let pivot = lu[p * m + col];
            for r in col + 1..m {
                let row = perm[r];
                let f = lu[row * m + col] / pivot;
                lu[row * m + col] = f;
                for c in col + 1..m {
                    lu[row * m + c] -= f * lu[p * m + c];
                }
            }
        }
        Some(LuSmall { m, lu, perm })
    }

    /// Solves `B x = b` where `B` is the factored basis-row matrix.
    fn solve(&self, b: &[f64], out: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            let mut acc = b[self.perm[i]];
            for j in 0..i {
                acc -= self.lu[self.perm[i] * m + j] * out[j];
            }
            out[i] = acc;
        }
        for i in (0..m).rev() {
            let mut acc = out[i];
            for j in i + 1..m {
                acc -= self.lu[self.perm[i] * m + j] * out[j];
            }
            out[i] = acc / self.lu[self.perm[i] * m + i];
        }
    }
}

/// Least-squares residuals via the normal equations, used only to seed the
/// descent. Returns `None` when X'X is effectively singular; rank issues are
/// then caught by the Gram-Schmidt pass.
fn ols_residuals(response: &[f64], design: &DesignMatrix) -> Option<Vec<f64>> {
    let t_len = response.len();
    let m = design.cols() + 1;
    let mut xtx = vec![0.0; m * m];
    let mut xty = vec![0.0; m];
    let mut row = vec![0.0; m];
    for t in 0..t_len {
        row[0] = 1.0;
        row[1..].copy_from_slice(design.row(t));
        for i in 0..m {
            xty[i] += row[i] * response[t];
            for j in i..m {
                xtx[i * m + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            xtx[i * m + j] = xtx[j * m + i];
        }
    }
    // gaussian elimination with partial pivoting on the small system
    let scale = xtx.iter().fold(0.0_f64, |a, &v| a.max(v.abs())).max(1.0);
    let mut a = xtx;
    let mut b = xty;
    let mut perm: Vec<usize> = (0..m).collect();
    for col in 0..m {
        let best = (col..m)
            .max_by(|&r1, &r2| a[perm[r1] * m + col].abs().total_cmp(&a[perm[r2] * m + col].abs()))?;
        if a[perm[best] * m + col].abs() <= 1e-12 * scale {
            return None;
        }
        perm.swap(col, best);
        let p = perm[col];
        for r in col + 1..m {
            let q = perm[r];
            let f = a[q * m + col] / a[p * m + col];
            for c in col..m {
                a[q * m + c] -= f * a[p * m + c];
            }
            b[q] -= f * b[p];
        }
    }
    let mut beta = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = b[perm[i]];
        for j in i + 1..m {
            acc -= a[perm[i] * m + j] * beta[j];
        }
        beta[i] = acc / a[perm[i] * m + i];
    }
    Some(
        (0..t_len)
            .map(|t| response[t] - aug_dot(design, t, &beta))
            .collect(),
    )
}

/// Picks a deterministic full-rank starting basis, preferring rows that sit
/// near the `tau` quantile regression plane (approximated by the tau quantile
/// of least-squares residuals). Detects rank deficiency over the whole design.
fn starting_basis(
    response: &[f64],
    design: &DesignMatrix,
    tau: f64,
) -> Result<Vec<usize>, QuantRegError> {
    let t_len = response.len();
    let m = design.cols() + 1;
    let score: Vec<f64> = match ols_residuals(response, design) {
        Some(resid) => {
            let anchor = {
                let mut v = resid.clone();
                let idx = quantile_index(tau, v.len());
                let (_, q, _) = v.select_nth_unstable_by(idx, f64::total_cmp);
                *q
            };
            resid.iter().map(|e| (e - anchor).abs()).collect()
        }
        None => {
            let anchor = {
                let mut v = response.to_vec();
                let idx = quantile_index(tau, v.len());
                let (_, q, _) = v.select_nth_unstable_by(idx, f64::total_cmp);
                *q
            };
            response.iter().map(|y| (y - anchor).abs()).collect()
        }
    };
    let cmp = |a: &usize, b: &usize| score[*a].total_cmp(&score[*b]).then(a.cmp(b));
    let mut order: Vec<usize> = (0..t_len).collect();
    // only the best handful of rows is usually touched, so sort lazily
    let head = (4 * m + 8).min(t_len);
    if head < t_len {
        order.select_nth_unstable_by(head - 1, cmp);
    }
    order[..head].sort_unstable_by(cmp);

    let mut basis = Vec::with_capacity(m);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut row = vec![0.0; m];
    let mut sorted_tail = head == t_len;
    let mut i = 0;
    while i < t_len {
        if i == head && !sorted_tail {
            order[head..].sort_unstable_by(cmp);
            sorted_tail = true;
        }
        let t = order[i];
        i += 1;
        row[0] = 1.0;
        row[1..].copy_from_slice(design.row(t));
        let base_norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for q in &ortho {
            let proj: f64 = row.iter().zip(q).map(|(a, b)| a * b).sum();
            for (r, qv) in row.iter_mut().zip(q) {
                *r -= proj * qv;
            }
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > RANK_TOL * base_norm {
            for r in row.iter_mut() {
                *r /= norm;
            }
            ortho.push(row.clone());
            basis.push(t);
            if basis.len() == m {
                return Ok(basis);
            }
        }
    }
    Err(QuantRegError::DegenerateDesign)
}

/// Finds the row at which the cumulative breakpoint weight, taken in
/// `(theta, index)` order, first reaches `target`. Expected linear time;
/// the result matches a full sort exactly, ties included.
fn weighted_cut(points: &mut [(f64, usize, f64)], target: f64) -> Option<usize> {
    let mut lo = 0usize;
    let mut hi = points.len();
    let mut need = target;
    while hi > lo {
        if hi - lo <= 8 {
            points[lo..hi].sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, t, w) in &points[lo..hi] {
                need -= w;
                if need <= 0.0 {
                    return Some(t);
                }
            }
            return None;
        }
        // median-of-three pivot on (theta, index)
        let mid = lo + (hi - lo) / 2;
        let key = |p: &(f64, usize, f64)| (p.0, p.1);
        let mut trio = [key(&points[lo]), key(&points[mid]), key(&points[hi - 1])];
        trio.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let pivot = trio[1];
        let less = |k: (f64, usize)| k.0.total_cmp(&pivot.0).then(k.1.cmp(&pivot.1)).is_lt();
        // partition [lo, hi) into < pivot | >= pivot
        let mut i = lo;
        let mut j = hi;
        let mut below = 0.0;
        while i < j {
            if less(key(&points[i])) {
                below += points[i].2;
                i += 1;
            } else {
                j -= 1;
                points.swap(i, j);
            }
        }
        if below >= need {
            hi = i;
        } else {
            need -= below;
            lo = i;
            // make progress even when the pivot region is all ties
            let pivot_exact = |k: (f64, usize)| k.0 == pivot.0 && k.1 == pivot.1;
            if i < points.len() {
                for t in lo..hi {
                    if pivot_exact(key(&points[t])) {
                        points.swap(lo, t);
                        need -= points[lo].2;
                        if need <= 0.0 {
                            return Some(points[lo].1);
                        }
                        lo += 1;
                        break;
                    }
                }
            }
        }
    }
    None
}

/// Vertex descent on the piecewise-linear check loss. Returns the optimal
/// coefficient vector (intercept first).
///
/// At a degenerate vertex (more observations interpolated than the basis
/// holds, as happens with tied data) the edges of the current basis need not
/// include the descending one, so the walk also pivots through sibling bases
/// at the same point; a visited set rules out cycling.
fn descend(response: &[f64], design: &DesignMatrix, tau: f64) -> Result<Vec<f64>, QuantRegError> {
    let t_len = response.len();
    let m = design.cols() + 1;

    let mut basis = starting_basis(response, design, tau)?;
    let mut lu = LuSmall::factor(design, &basis).ok_or(QuantRegError::DegenerateDesign)?;

    let mut beta = vec![0.0; m];
    let mut resid = vec![0.0; t_len];
    let mut y_basis = vec![0.0; m];
    let refresh = |lu: &LuSmall,
                   basis: &[usize],
                   beta: &mut [f64],
                   resid: &mut [f64],
                   y_basis: &mut [f64]|
     -> f64 {
        for (i, &t) in basis.iter().enumerate() {
            y_basis[i] = response[t];
        }
        lu.solve(y_basis, beta);
        let mut obj = 0.0;
        for t in 0..t_len {
            resid[t] = response[t] - aug_dot(design, t, beta);
        }
        for &t in basis {
            resid[t] = 0.0;
        }
        for t in 0..t_len {
            obj += loss(tau, resid[t]);
        }
        obj
    };
    let mut objective = refresh(&lu, &basis, &mut beta, &mut resid, &mut y_basis);

    let sorted_key = |b: &[usize]| {
        let mut key = b.to_vec();
        key.sort_unstable();
        key
    };
    let mut visited: std::collections::HashSet<Vec<usize>> = std::collections::HashSet::new();
    visited.insert(sorted_key(&basis));

    let mut scratch_beta = vec![0.0; m];
    let mut scratch_resid = vec![0.0; t_len];
    let mut sum_s = vec![0.0; m];
    let mut sum_neg = vec![0.0; m];
    let mut sum_p0 = vec![0.0; m];
    let mut sum_m0 = vec![0.0; m];
    let mut sum_abs = vec![0.0; m];
    let mut etas = vec![0.0; m * m];
    let mut s_all = vec![0.0; m * t_len];
    let mut unit = vec![0.0; m];
    let mut eta = vec![0.0; m];
    let mut breakpoints: Vec<(f64, usize, f64)> = vec![(0.0, 0, 0.0); t_len];
    let max_iter = 200 + 20 * t_len;

    'outer: for _ in 0..max_iter {
        // Edge directions for every basis slot, then one fused pass over the
        // rows accumulating each direction's one-sided derivatives:
        //   D+ = -tau * S + N + P0,  D- = tau * S - N + M0
        // with S the plain sum of steps, N the sum over negative residuals,
        // and P0/M0 the positive/negative step parts on zero residuals.
        for slot in 0..m {
            for u in unit.iter_mut() {
                *u = 0.0;
            }
            unit[slot] = 1.0;
            lu.solve(&unit, &mut eta);
            etas[slot * m..(slot + 1) * m].copy_from_slice(&eta);
        }
        let data = design.data_slice();
        let d = m - 1;
        for slot in 0..m {
            let e = &etas[slot * m..(slot + 1) * m];
            let s = &mut s_all[slot * t_len..(slot + 1) * t_len];
            match d {
                1 => {
                    let (e0, e1) = (e[0], e[1]);
                    for (sv, z) in s.iter_mut().zip(data) {
                        *sv = e0 + z * e1;
                    }
                }
                2 => {
                    let (e0, e1, e2) = (e[0], e[1], e[2]);
                    for (sv, z) in s.iter_mut().zip(data.chunks_exact(2)) {
                        *sv = e0 + z[0] * e1 + z[1] * e2;
                    }
                }
                _ => {
                    for (sv, z) in s.iter_mut().zip(data.chunks_exact(d)) {
                        let mut acc = e[0];
                        for j in 0..d {
                            acc += z[j] * e[j + 1];
                        }
                        *sv = acc;
                    }
                }
            }
            let (mut ss, mut nn, mut pp, mut mm, mut aa) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (&st, &r) in s.iter().zip(resid.iter()) {
                ss += st;
                aa += st.abs();
                nn += f64::from(r < 0.0) * st;
                let z = f64::from(r == 0.0);
                pp += z * st.max(0.0);
                mm += z * (-st).max(0.0);
            }
            sum_s[slot] = ss;
            sum_neg[slot] = nn;
            sum_p0[slot] = pp;
            sum_m0[slot] = mm;
            sum_abs[slot] = aa;
        }
        let mut best: Option<(usize, f64, f64)> = None; // (basis slot, sign, derivative)
        for slot in 0..m {
            let dplus = -tau * sum_s[slot] + sum_neg[slot] + sum_p0[slot];
            let dminus = tau * sum_s[slot] - sum_neg[slot] + sum_m0[slot];
            let eps = 1e-13 * (1.0 + sum_abs[slot]);
            if dplus < -eps && best.is_none_or(|(_, _, d)| dplus < d) {
                best = Some((slot, 1.0, dplus));
            }
            if dminus < -eps && best.is_none_or(|(_, _, d)| dminus < d) {
                best = Some((slot, -1.0, dminus));
            }
        }

        if let Some((slot, sign, deriv)) = best {
            let s = &mut s_all[slot * t_len..(slot + 1) * t_len];
            if sign < 0.0 {
                for v in s.iter_mut() {
                    *v = -*v;
                }
            }
            for (i, &t) in basis.iter().enumerate() {
                s[t] = if i == slot { sign } else { 0.0 };
            }

            // Walk the ray: the derivative gains |s_t| at each residual
            // crossing; stop at the first breakpoint where it turns
            // non-negative (the lower endpoint of the minimizer interval).
            // branchless gather of the residual crossings along the ray
            let mut n = 0;
            for t in 0..t_len {
                let r = resid[t];
                let st = s[t];
                let keep = ((r > 0.0) & (st > 0.0)) | ((r < 0.0) & (st < 0.0));
                breakpoints[n] = (r / st, t, st.abs());
                n += keep as usize;
            }
            let entering = weighted_cut(&mut breakpoints[..n], -deriv);
            if let Some(t_enter) = entering {
                let mut next_basis = basis.clone();
                next_basis[slot] = t_enter;
                if let Some(next_lu) = LuSmall::factor(design, &next_basis) {
                    let next_obj = refresh(
                        &next_lu,
                        &next_basis,
                        &mut scratch_beta,
                        &mut scratch_resid,
                        &mut y_basis,
                    );
                    if next_obj < objective {
                        visited.insert(sorted_key(&next_basis));
                        basis = next_basis;
                        lu = next_lu;
                        std::mem::swap(&mut beta, &mut scratch_beta);
                        std::mem::swap(&mut resid, &mut scratch_resid);
                        objective = next_obj;
                        continue 'outer;
                    }
                }
            }
            // No usable strict descent along this edge (rounding-level step):
            // fall through to sibling exploration.
        }

        // Degenerate vertex: try an unvisited basis interpolating the same
        // point, swapping in a zero-residual row. Zero steps cost nothing and
        // expose the remaining edges.
        if visited.len() > 1000 {
            break;
        }
        let mut swapped = false;
        'swap: for t in 0..t_len {
            if basis.contains(&t) || resid[t].abs() > 1e-11 * (1.0 + response[t].abs()) {
                continue;
            }
            for slot in 0..m {
                let mut cand = basis.clone();
                cand[slot] = t;
                let key = sorted_key(&cand);
                if visited.contains(&key) {
                    continue;
                }
                if let Some(cand_lu) = LuSmall::factor(design, &cand) {
                    visited.insert(key);
                    objective = refresh(&cand_lu, &cand, &mut beta, &mut resid, &mut y_basis);
                    basis = cand;
                    lu = cand_lu;
                    swapped = true;
                    break 'swap;
                }
            }
        }
        if !swapped {
            break; // every edge at this point is non-decreasing: optimal
        }
    }

    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Exhaustive vertex oracle: enumerate every size-(d+1) row subset,
    /// solve the interpolation system, and keep the smallest loss.
    fn vertex_oracle(response: &[f64], design: &DesignMatrix, tau: f64) -> f64 {
        let n = response.len();
        let m = design.cols() + 1;
        let mut combo: Vec<usize> = (0..m).collect();
        let mut best = f64::INFINITY;
        loop {
            if let Some(beta) = solve_rows(response, design, &combo) {
                let mut obj = 0.0;
                for t in 0..n {
                    let fit = beta[0]
                        + design
                            .row(t)
                            .iter()
                            .zip(&beta[1..])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    obj += loss(tau, response[t] - fit);
                }
                if obj < best {
                    best = obj;
                }
            }
            // next combination
            let mut i = m;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if combo[i] != i + n - m {
                    break;
                }
            }
            combo[i] += 1;
            for j in i + 1..m {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }

    /// Gaussian elimination on the interpolation system, written separately
    /// from the solver path on purpose.
    fn solve_rows(response: &[f64], design: &DesignMatrix, rows: &[usize]) -> Option<Vec<f64>> {
        let m = rows.len();
        let mut a = vec![0.0; m * (m + 1)];
        for (i, &t) in rows.iter().enumerate() {
            a[i * (m + 1)] = 1.0;
            for (j, &z) in design.row(t).iter().enumerate() {
                a[i * (m + 1) + 1 + j] = z;
            }
            a[i * (m + 1) + m] = response[t];
        }
        for col in 0..m {
            let pivot_row = (col..m).max_by(|&r1, &r2| {
                a[r1 * (m + 1) + col]
                    .abs()
                    .total_cmp(&a[r2 * (m + 1) + col].abs())
            })?;
            if a[pivot_row * (m + 1) + col].abs() < 1e-9 {
                return None;
            }
            for c in 0..=m {
                a.swap(col * (m + 1) + c, pivot_row * (m + 1) + c);
            }
            let pivot = a[col * (m + 1) + col];
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = a[r * (m + 1) + col] / pivot;
                for c in col..=m {
                    a[r * (m + 1) + c] -= f * a[col * (m + 1) + c];
                }
            }
        }
        Some((0..m).map(|i| a[i * (m + 1) + m] / a[i * (m + 1) + i]).collect())
    }

    fn random_instance(rng: &mut ChaCha8Rng, t_len: usize, d: usize) -> (Vec<f64>, DesignMatrix) {
        let data: Vec<f64> = (0..t_len * d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let design = DesignMatrix::new(t_len, d, data).unwrap();
        let beta: Vec<f64> = (0..=d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let response: Vec<f64> = (0..t_len)
            .map(|t| {
                let mut v = beta[0];
                for (z, b) in design.row(t).iter().zip(&beta[1..]) {
                    v += z * b;
                }
                v + rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0)
            })
            .collect();
        (response, design)
    }

    #[test]
    fn check_loss_examples() {
        assert_eq!(check_loss(0.5, 2.0).unwrap(), 1.0);
        assert_eq!(check_loss(0.5, -2.0).unwrap(), 1.0);
        assert!((check_loss(0.1, -1.0).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(check_loss(0.3, 0.0).unwrap(), 0.0);
        assert!(check_loss(0.0, 1.0).is_err());
        assert!(check_loss(1.0, 1.0).is_err());
        assert!(check_loss(0.5, f64::NAN).is_err());
    }

    #[test]
    fn sample_quantile_examples() {
        assert_eq!(sample_quantile(&[3.0, 1.0, 2.0], 0.5).unwrap(), 2.0);
        let v: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        assert_eq!(sample_quantile(&v, 0.05).unwrap(), 1.0);
        assert_eq!(sample_quantile(&[5.0], 0.9).unwrap(), 5.0);
        assert!(sample_quantile(&[], 0.5).is_err());
    }

    #[test]
    fn sample_quantile_is_check_loss_minimizer_lower_endpoint() {
        // scan every order statistic on a case with an integer tau * T
        let v: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let tau = 0.05;
        let losses: Vec<f64> = v
            .iter()
            .map(|&q| v.iter().map(|&y| loss(tau, y - q)).sum::<f64>())
            .collect();
        let min = losses.iter().cloned().fold(f64::INFINITY, f64::min);
        let minimizers: Vec<f64> = v
            .iter()
            .zip(&losses)
            .filter(|(_, &l)| l <= min + 1e-12)
            .map(|(&q, _)| q)
            .collect();
        assert_eq!(minimizers, vec![1.0, 2.0]);
        assert_eq!(sample_quantile(&v, tau).unwrap(), 1.0);
    }

    #[test]
    fn exact_line_has_zero_loss() {
        let z: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let response: Vec<f64> = z.iter().map(|v| 2.0 * v + 1.0).collect();
        let design = DesignMatrix::from_columns(10, &[z]).unwrap();
        for tau in [0.1, 0.5, 0.9] {
            let fit = fit_quantile_regression(&response, &design, tau).unwrap();
            assert!((fit.coefficients[0] - 1.0).abs() < 1e-9, "{:?}", fit.coefficients);
            assert!((fit.coefficients[1] - 2.0).abs() < 1e-9);
            assert!(fit.objective.abs() < 1e-10);
        }
    }

    #[test]
    fn intercept_only_median() {
        let fit =
            fit_quantile_regression(&[1.0, 2.0, 3.0], &DesignMatrix::empty(3), 0.5).unwrap();
        assert_eq!(fit.fitted, vec![2.0, 2.0, 2.0]);
        assert_eq!(fit.coefficients, vec![2.0]);
    }

    #[test]
    fn matches_vertex_oracle_on_random_instances() {
        let mut r = rng(42);
        for case in 0..12 {
            let t_len = r.gen_range(8..=30);
            let d = r.gen_range(1..=3);
            let (y, design) = random_instance(&mut r, t_len, d);
            for tau in [0.1, 0.25, 0.5, 0.8] {
                let fit = fit_quantile_regression(&y, &design, tau).unwrap();
                let oracle = vertex_oracle(&y, &design, tau);
                assert!(
                    fit.objective <= oracle + 1e-8,
                    "case {case}: objective {} vs oracle {}",
                    fit.objective,
                    oracle
                );
            }
        }
    }

    #[test]
    fn shift_and_scale_equivariance() {
        let mut r = rng(7);
        for _ in 0..10 {
            let t_len = r.gen_range(12..=40);
            let d = r.gen_range(0..=3);
            let (y, design) = random_instance(&mut r, t_len, d);
            let tau = r.gen_range(0.1..0.9);
            let base = fit_quantile_regression(&y, &design, tau).unwrap();

            let shifted: Vec<f64> = y.iter().map(|v| v + 3.25).collect();
            let shift_fit = fit_quantile_regression(&shifted, &design, tau).unwrap();
            assert!((shift_fit.coefficients[0] - base.coefficients[0] - 3.25).abs() < 1e-8);
            for j in 1..=d {
                assert!((shift_fit.coefficients[j] - base.coefficients[j]).abs() < 1e-8);
            }

            let scaled: Vec<f64> = y.iter().map(|v| v * 2.5).collect();
            let scale_fit = fit_quantile_regression(&scaled, &design, tau).unwrap();
            for j in 0..=d {
                let want = base.coefficients[j] * 2.5;
                assert!(
                    (scale_fit.coefficients[j] - want).abs() <= 1e-8 * (1.0 + want.abs()),
                    "j={j}"
                );
            }
        }
    }

    #[test]
    fn subgradient_bound_holds_on_random_fits() {
        let mut r = rng(11);
        for _ in 0..20 {
            let t_len = r.gen_range(10..=60);
            let d = r.gen_range(0..=3);
            let (y, design) = random_instance(&mut r, t_len, d);
            let tau = r.gen_range(0.05..0.95);
            let fit = fit_quantile_regression(&y, &design, tau).unwrap();
            let mut sum = 0.0;
            for t in 0..t_len {
                let u = y[t] - fit.fitted[t];
                sum += if u < 0.0 { 1.0 - tau } else { -tau };
            }
            assert!(
                sum.abs() <= (d + 1) as f64 + 1e-9,
                "subgradient {} for d={}",
                sum,
                d
            );
        }
    }

    #[test]
    fn empty_design_fit_equals_sample_quantile() {
        let mut r = rng(19);
        let y: Vec<f64> = (0..37).map(|_| r.gen_range(-5.0..5.0)).collect();
        let design = DesignMatrix::empty(y.len());
        for i in 1..=19 {
            let tau = i as f64 * 0.05;
            let fit = fit_quantile_regression(&y, &design, tau).unwrap();
            let q = sample_quantile(&y, tau).unwrap();
            assert_eq!(fit.fitted[0], q);
            assert!(fit.fitted.iter().all(|&v| v == q));
        }
    }

    #[test]
    fn objective_matches_residual_loss_sum() {
        let mut r = rng(23);
        let (y, design) = random_instance(&mut r, 25, 2);
        let fit = fit_quantile_regression(&y, &design, 0.3).unwrap();
        let direct: f64 = y
            .iter()
            .zip(&fit.fitted)
            .map(|(&yv, &f)| check_loss(0.3, yv - f).unwrap())
            .sum();
        assert!((fit.objective - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
    }

    #[test]
    fn rank_deficiency_reported_distinctly() {
        // a predictor that duplicates the intercept
        let design = DesignMatrix::from_columns(6, &[vec![2.0; 6]]).unwrap();
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        match fit_quantile_regression(&y, &design, 0.5) {
            Err(QuantRegError::DegenerateDesign) => {}
            other => panic!("expected DegenerateDesign, got {other:?}"),
        }
        // mismatch is a different error
        let design = DesignMatrix::from_columns(5, &[(0..5).map(|i| i as f64).collect()]).unwrap();
        match fit_quantile_regression(&y, &design, 0.5) {
            Err(QuantRegError::DimensionMismatch { .. }) => {}
            other => panic!("expected DimensionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn too_few_observations_rejected() {
        let design = DesignMatrix::from_columns(2, &[vec![1.0, 2.0]]).unwrap();
        match fit_quantile_regression(&[1.0, 2.0], &design, 0.5) {
            Err(QuantRegError::TooFewObservations { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ties_and_duplicated_rows_still_optimal() {
        // duplicated rows and integer-valued data exercise degenerate vertices
        let mut r = rng(31);
        for _ in 0..8 {
            let t_len = r.gen_range(10..=24);
            let col: Vec<f64> = (0..t_len).map(|_| r.gen_range(-2..3) as f64).collect();
            let design = DesignMatrix::from_columns(t_len, std::slice::from_ref(&col)).unwrap();
            let y: Vec<f64> = (0..t_len).map(|_| r.gen_range(-3..4) as f64).collect();
            if let Err(QuantRegError::DegenerateDesign) =
                fit_quantile_regression(&y, &design, 0.4)
            {
                continue; // constant integer column: legitimately rank-deficient
            }
            let fit = fit_quantile_regression(&y, &design, 0.4).unwrap();
            let oracle = vertex_oracle(&y, &design, 0.4);
            assert!(
                fit.objective <= oracle + 1e-8,
                "objective {} vs oracle {}",
                fit.objective,
                oracle
            );
        }
    }
}
