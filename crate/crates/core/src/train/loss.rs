//! Masked softmax cross-entropy.

use ndarray::{Array2, ArrayView2};

use crate::error::{shape_err, CsgnnError, Result};

fn check(logits: &ArrayView2<f64>, labels: &[i64], mask: &[bool]) -> Result<Vec<usize>> {
    let (n, classes) = logits.dim();
    if labels.len() != n || mask.len() != n {
        return Err(shape_err(
            "masked_cross_entropy",
            format!("{n} labels and mask entries"),
            format!("{} / {}", labels.len(), mask.len()),
        ));
    }
    let mut rows = Vec::new();
    for (i, (&m, &y)) in mask.iter().zip(labels).enumerate() {
        if !m {
            continue;
        }
        if y < 0 || y as usize >= classes {
            return Err(CsgnnError::LabelOutOfRange {
                node: i,
                label: y,
                classes,
            });
        }
        rows.push(i);
    }
    if rows.is_empty() {
        return Err(CsgnnError::EmptyMask);
    }
    Ok(rows)
}

fn row_log_softmax(row: ndarray::ArrayView1<f64>) -> (f64, f64) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
    (max, sum.ln())
}

/// Mean of `−log softmax(logits_i)[y_i]` over masked nodes.
pub fn masked_cross_entropy(logits: &ArrayView2<f64>, labels: &[i64], mask: &[bool]) -> Result<f64> {
    Ok(masked_cross_entropy_with_grad(logits, labels, mask)?.0)
}

/// Loss together with its gradient with respect to the logits.
pub fn masked_cross_entropy_with_grad(
    logits: &ArrayView2<f64>,
    labels: &[i64],
    mask: &[bool],
) -> Result<(f64, Array2<f64>)> {
    let rows = check(logits, labels, mask)?;
    let count = rows.len() as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut total = 0.0;
    for &i in &rows {
        let row = logits.row(i);
        let (max, log_z) = row_log_softmax(row);
        let y = labels[i] as usize;
        total += -(row[y] - max - log_z);
        for (j, &x) in row.iter().enumerate() {
            let p = (x - max - log_z).exp();
            grad[[i, j]] = (p - if j == y { 1.0 } else { 0.0 }) / count;
        }
    }
    Ok((total / count, grad))
}

/// Fraction of masked nodes whose arg-max logit equals the label.
pub fn masked_accuracy(logits: &ArrayView2<f64>, labels: &[i64], mask: &[bool]) -> Result<f64> {
    let rows = check(logits, labels, mask)?;
    let correct = rows
        .iter()
        .filter(|&&i| {
            let row = logits.row(i);
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best as i64 == labels[i]
        })
        .count();
    Ok(correct as f64 / rows.len() as f64)
}
