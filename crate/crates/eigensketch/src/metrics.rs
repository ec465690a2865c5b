//! Recovery quality metrics. Eigenvectors are only defined up to sign (or a
//! unit phase in the complex case), so every error here is the distance after
//! the best such alignment. `evaluate_trial` scores one full pipeline pass
//! against planted ground truth, in both the measurement domain (how far the
//! sketch eigenvector sits from the compressed planted vector) and the
//! ambient domain (how far the decoded vector sits from the planted one).

use crate::decode::{beta_m, SparseVector};
use crate::eig::EigenPair;
use crate::measure::Ensemble;
use crate::synth::GroundTruth;
use crate::{Error, Result};
use num_complex::Complex64;
use std::io::Write;

/// Scores for one planted factor in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub trial: u64,
    /// 1-based factor index.
    pub j: u64,
    /// min over signs of || sign * v_sketch - M u_planted ||_2.
    pub pre_err: f64,
    /// min over signs of || sign * x_decoded - u_planted ||_2.
    pub post_err: f64,
    /// Noise amplification of the measurement-domain residual; NaN for
    /// ensembles without a sublinear decoder (subsampled Hadamard).
    pub beta: f64,
    /// The sign that aligned the decoded vector.
    pub sign: f64,
}

/// Best sign alignment of `a` against `b`: returns (error, sign) minimizing
/// ||sign * a - b||_2, preferring +1 on ties.
pub fn aligned_error(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Config(format!("aligned_error: lengths {} and {}", a.len(), b.len())));
    }
    let mut plus = 0.0f64;
    let mut minus = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        plus += (x - y) * (x - y);
        minus += (x + y) * (x + y);
    }
    if minus < plus {
        Ok((minus.sqrt(), -1.0))
    } else {
        Ok((plus.sqrt(), 1.0))
    }
}

/// Sign alignment for sparse vectors of one dimension.
pub fn aligned_error_sparse(a: &SparseVector, b: &SparseVector) -> Result<(f64, f64)> {
    if a.dim() != b.dim() {
        return Err(Error::Config(format!(
            "aligned_error: dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let (mut plus, mut minus) = (0.0f64, 0.0f64);
    let (ae, be) = (a.entries(), b.entries());
    let (mut p, mut q) = (0, 0);
    loop {
        match (ae.get(p), be.get(q)) {
            (Some(&(ia, va)), Some(&(ib, vb))) => match ia.cmp(&ib) {
                std::cmp::Ordering::Less => {
                    plus += va * va;
                    minus += va * va;
                    p += 1;
                }
                std::cmp::Ordering::Greater => {
                    plus += vb * vb;
                    minus += vb * vb;
                    q += 1;
                }
                std::cmp::Ordering::Equal => {
                    plus += (va - vb) * (va - vb);
                    minus += (va + vb) * (va + vb);
                    p += 1;
                    q += 1;
                }
            },
            (Some(&(_, va)), None) => {
                plus += va * va;
                minus += va * va;
                p += 1;
            }
            (None, Some(&(_, vb))) => {
                plus += vb * vb;
                minus += vb * vb;
                q += 1;
            }
            (None, None) => break,
        }
    }
    if minus < plus {
        Ok((minus.sqrt(), -1.0))
    } else {
        Ok((plus.sqrt(), 1.0))
    }
}

/// Best phase alignment of complex sparse entries: returns (error, phi)
/// minimizing || e^{i phi} a - b ||_2 over both supports.
pub fn aligned_error_complex(a: &[(u64, Complex64)], b: &[(u64, Complex64)]) -> (f64, f64) {
    // || e^{i phi} a - b ||^2 = ||a||^2 + ||b||^2 - 2 Re(e^{i phi} <a, conj b>),
    // minimized by the phase that makes the cross term real positive.
    let norm2 = |v: &[(u64, Complex64)]| v.iter().map(|(_, z)| z.norm_sqr()).sum::<f64>();
    let mut cross = Complex64::new(0.0, 0.0);
    let (mut p, mut q) = (0, 0);
    while p < a.len() && q < b.len() {
        match a[p].0.cmp(&b[q].0) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                cross += a[p].1 * b[q].1.conj();
                p += 1;
                q += 1;
            }
        }
    }
    let phi = if cross.norm() == 0.0 { 0.0 } else { -cross.arg() };
    let err2 = (norm2(a) + norm2(b) - 2.0 * cross.norm()).max(0.0);
    (err2.sqrt(), phi)
}

/// Scores one pipeline pass: sketch eigenpairs and decoded vectors against
/// the planted truth, factor by factor. `pairs` and `decoded` line up with
/// the leading planted factors.
pub fn evaluate_trial(
    ens: &Ensemble,
    trial: u64,
    gt: &GroundTruth,
    pairs: &[EigenPair],
    decoded: &[SparseVector],
    s: u64,
) -> Result<Vec<ErrorRecord>> {
    if pairs.len() != decoded.len() {
        return Err(Error::Config(format!(
            "evaluate_trial: {} eigenpairs but {} decoded vectors",
            pairs.len(),
            decoded.len()
        )));
    }
    if pairs.len() > gt.eigenvectors.len() {
        return Err(Error::Config(format!(
            "evaluate_trial: {} eigenpairs but rank {} ground truth",
            pairs.len(),
            gt.eigenvectors.len()
        )));
    }
    let mut out = Vec::with_capacity(pairs.len());
    for (idx, (pair, dec)) in pairs.iter().zip(decoded).enumerate() {
        let u = &gt.eigenvectors[idx];
        let mu = ens.apply_sparse(u.entries());
        let (pre_err, pre_sign) = aligned_error(&pair.vector, &mu.data)?;
        // The decoder saw pre_sign * v as its measurement of u; what is left
        // over is the noise it had to survive.
        let resid: Vec<f64> = pair
            .vector
            .iter()
            .zip(&mu.data)
            .map(|(v, m)| pre_sign * v - m)
            .collect();
        let beta = match ens {
            Ensemble::Coherent(_) => {
                if resid.iter().all(|&v| v == 0.0) {
                    0.0
                } else {
                    beta_m(ens, &resid, s)?
                }
            }
            Ensemble::Hadamard(_) => f64::NAN,
        };
        let (post_err, sign) = aligned_error_sparse(dec, u)?;
        out.push(ErrorRecord {
            trial,
            j: idx as u64 + 1,
            pre_err,
            post_err,
            beta,
            sign,
        });
    }
    Ok(out)
}

/// Writes per-trial records as CSV with a header line.
pub fn write_error_records(w: &mut impl Write, records: &[ErrorRecord]) -> Result<()> {
    writeln!(w, "trial,j,pre_err,post_err,beta,sign")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.trial, r.j, r.pre_err, r.post_err, r.beta, r.sign
        )?;
    }
    Ok(())
}

/// Mean scores per factor at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    /// The sweep variable (planted sparsity, measurement rows, ...).
    pub x: f64,
    pub j: u64,
    pub mean_pre_err: f64,
    pub mean_post_err: f64,
    pub mean_beta: f64,
}

/// Averages records at each sweep point, grouped by factor index.
pub fn aggregate(points: &[(f64, Vec<ErrorRecord>)]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for (x, records) in points {
        let mut js: Vec<u64> = records.iter().map(|r| r.j).collect();
        js.sort_unstable();
        js.dedup();
        for j in js {
            let sel: Vec<&ErrorRecord> = records.iter().filter(|r| r.j == j).collect();
            let n = sel.len() as f64;
            out.push(AggregateRow {
                x: *x,
                j,
                mean_pre_err: sel.iter().map(|r| r.pre_err).sum::<f64>() / n,
                mean_post_err: sel.iter().map(|r| r.post_err).sum::<f64>() / n,
                mean_beta: sel.iter().map(|r| r.beta).sum::<f64>() / n,
            });
        }
    }
    out
}

pub fn write_aggregate(w: &mut impl Write, rows: &[AggregateRow]) -> Result<()> {
    writeln!(w, "x,j,mean_pre_err,mean_post_err,mean_beta")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.x, r.j, r.mean_pre_err, r.mean_post_err, r.mean_beta
        )?;
    }
    Ok(())
}
