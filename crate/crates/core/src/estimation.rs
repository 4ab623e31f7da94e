//! Production-parameter estimation: labor elasticity via a control-function
//! polynomial regression, then recovery of the span-of-control and capital
//! share from the average profit share.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Estimated labor elasticity of output for one technology.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticityEstimate {
    pub gamma: f64,
    pub residual_variance: f64,
    pub n_obs: usize,
}

/// Column labels for `polynomial_design(order)`, in matrix order.
pub fn design_column_names(order: usize) -> Vec<String> {
    let mut names = vec!["intercept".to_string(), "k".to_string(), "m".to_string(), "k*m".to_string()];
    for q in 2..=order {
        names.push(format!("k^{q}"));
        names.push(format!("m^{q}"));
    }
    names
}

/// Control-function design: intercept, k, m, the single interaction k·m,
/// and pure powers k^q, m^q for q = 2..=order.
pub fn polynomial_design(k_values: &[f64], m_values: &[f64], order: usize) -> Result<DMatrix<f64>> {
    if k_values.len() != m_values.len() {
        return Err(Error::Input(format!(
            "length mismatch: {} capital values vs {} control values",
            k_values.len(),
            m_values.len()
        )));
    }
    if order < 1 {
        return Err(Error::InvalidParameter("polynomial order must be >= 1".to_string()));
    }
    let n = k_values.len();
    let p = 2 * order + 2;
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let (k, m) = (k_values[i], m_values[i]);
        x[(i, 0)] = 1.0;
        x[(i, 1)] = k;
        x[(i, 2)] = m;
        x[(i, 3)] = k * m;
        let mut col = 4;
        let mut kq = k;
        let mut mq = m;
        for _ in 2..=order {
            kq *= k;
            mq *= m;
            x[(i, col)] = kq;
            x[(i, col + 1)] = mq;
            col += 2;
        }
    }
    Ok(x)
}

/// Least squares of `y` on `x` via column-pivoted QR; errors name the
/// columns past the numerical rank.
fn least_squares(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<Vec<f64>> {
    let n = x.nrows();
    let p = x.ncols();
    let qr = x.clone().col_piv_qr();
    let r = qr.r();
    // Numerical rank from the pivoted R diagonal.
    let dmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    let tol = dmax * (n.max(p) as f64) * f64::EPSILON;
    let deficient: Vec<usize> = (0..p).filter(|&i| r[(i, i)].abs() <= tol).collect();
    if !deficient.is_empty() {
        // Map pivoted positions back to original column labels.
        let mut idx = nalgebra::DVector::from_iterator(p, 0..p);
        qr.p().permute_rows(&mut idx);
        let cols: Vec<String> = deficient
            .iter()
            .map(|&i| names.get(idx[i]).cloned().unwrap_or_else(|| format!("col{}", idx[i])))
            .collect();
        return Err(Error::RankDeficient(cols.join(", ")));
    }
    // Thin least squares: X P = Q R, so beta = P R^{-1} Q^T y.
    let rhs = nalgebra::DVector::from_column_slice(y);
    let mut z = qr.q().transpose() * rhs;
    for i in (0..p).rev() {
        let mut acc = z[i];
        for j in (i + 1)..p {
            acc -= r[(i, j)] * z[j];
        }
        z[i] = acc / r[(i, i)];
    }
    qr.p().inv_permute_rows(&mut z);
    Ok(z.as_slice().to_vec())
}

/// Estimates the labor elasticity from a panel of (y', n', k', m') rows by
/// least squares of y' on n' and the polynomial control function in (k', m').
pub fn estimate_labor_elasticity(
    panel: &[(f64, f64, f64, f64)],
    order: usize,
) -> Result<ElasticityEstimate> {
    let n = panel.len();
    let p = 2 * order + 3; // n' column plus the design
    if n <= p {
        return Err(Error::Input(format!(
            "need more than {p} observations for order-{order} design, got {n}"
        )));
    }
    let y: Vec<f64> = panel.iter().map(|r| r.0).collect();
    let nn: Vec<f64> = panel.iter().map(|r| r.1).collect();
    let k: Vec<f64> = panel.iter().map(|r| r.2).collect();
    let m: Vec<f64> = panel.iter().map(|r| r.3).collect();
    let design = polynomial_design(&k, &m, order)?;
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        x[(i, 0)] = nn[i];
        for j in 0..design.ncols() {
            x[(i, j + 1)] = design[(i, j)];
        }
    }
    let mut names = vec!["n".to_string()];
    names.extend(design_column_names(order));
    let beta = least_squares(&x, &y, &names)?;
    let gamma = beta[0];
    let mut ssr = 0.0;
    for i in 0..n {
        let mut fit = 0.0;
        for j in 0..p {
            fit += x[(i, j)] * beta[j];
        }
        let e = y[i] - fit;
        ssr += e * e;
    }
    Ok(ElasticityEstimate {
        gamma,
        residual_variance: ssr / (n - p) as f64,
        n_obs: n,
    })
}

/// Recovers (sigma, alpha) from the labor elasticity and the mean profit
/// share: sigma is the profit share itself and alpha = 1 - gamma/(1-sigma).
pub fn recover_sigma_alpha(gamma: f64, mean_profit_share: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "labor elasticity must lie in (0,1), got {gamma}"
        )));
    }
    if !(mean_profit_share > 0.0 && mean_profit_share < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mean profit share must lie in (0,1), got {mean_profit_share}"
        )));
    }
    let sigma = mean_profit_share;
    let alpha = 1.0 - gamma / (1.0 - sigma);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InconsistentMoments(format!(
            "implied capital share {alpha:.6} outside (0,1) for gamma={gamma}, sigma={sigma}"
        )));
    }
    Ok((sigma, alpha))
}

/// Mean over firms of (sales - labor_cost - capital payments -
/// intermediates)/sales, floored at zero firm by firm.
pub fn mean_profit_share(rows: &[(f64, f64, f64, f64)]) -> Result<f64> {
    // rows: (sales, labor_cost, capital_payments, intermediates)
    if rows.is_empty() {
        return Err(Error::Input("cannot average profit shares over an empty panel".to_string()));
    }
    let mut total = 0.0;
    for &(sales, labor, capital, mats) in rows {
        if !(sales > 0.0) {
            return Err(Error::Input(format!("profit share needs positive sales, got {sales}")));
        }
        total += ((sales - labor - capital - mats) / sales).max(0.0);
    }
    Ok(total / rows.len() as f64)
}
