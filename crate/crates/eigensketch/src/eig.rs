//! Spectral extraction from a finalized sketch: the top eigenpairs of the
//! m x m compressed matrix, whose eigenvalues track those of the original
//! and whose eigenvectors are compressed images ready for sparse recovery.
//!
//! Two paths produce the same answer where both apply. `top_eigs` runs a
//! dense symmetric eigendecomposition (tridiagonalization + implicit QL/QR)
//! on the full sketch. `top_eigs_factored` exploits a factored sketch
//! B B^T by decomposing the small Gram matrix B^T B instead, which is exact
//! for factor streams and the only practical route once m is large.

use crate::stream::{FactorSketch, Sketch};
use crate::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use std::io::{BufRead, Write};

/// One eigenvalue with its unit-norm eigenvector of the sketch.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub eigenvalue: f64,
    pub vector: Vec<f64>,
}

/// Deterministic sign: the largest-magnitude entry (first such on ties) is
/// made nonnegative.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn check_ell(ell: usize, avail: usize, what: &str) -> Result<()> {
    if ell == 0 {
        return Err(Error::Config("ell must be at least 1".into()));
    }
    if ell > avail {
        return Err(Error::Config(format!(
            "ell = {ell} exceeds the {avail} eigenpairs available from {what}; lower ell"
        )));
    }
    Ok(())
}

/// Top `ell` eigenpairs of a finalized sketch, eigenvalues descending.
///
/// Each returned pair satisfies the residual check
/// ||Q v - lambda v|| <= tol * ||Q||_F; a violation means the decomposition
/// did not converge and is reported as a numeric error.
pub fn top_eigs(sketch: &Sketch, ell: usize, tol: f64) -> Result<Vec<EigenPair>> {
    if !sketch.is_finalized() {
        return Err(Error::Config("sketch must be finalized before eigendecomposition".into()));
    }
    let m = sketch.m();
    check_ell(ell, m, &format!("an m = {m} sketch"))?;
    let data = sketch.data();
    let frob = data.iter().map(|v| v * v).sum::<f64>().sqrt();

    // Rows no measurement touched are exactly zero, and by symmetry so are
    // their columns. They span an exact zero eigenspace; deflating them
    // before the solve keeps the iteration off the degenerate block, which
    // the dense solver does not always survive.
    let live: Vec<usize> =
        (0..m).filter(|&r| data[r * m..(r + 1) * m].iter().any(|&v| v != 0.0)).collect();
    let dead: Vec<usize> = {
        let mut mask = vec![true; m];
        for &r in &live {
            mask[r] = false;
        }
        (0..m).filter(|&r| mask[r]).collect()
    };

    let p = live.len();
    let eig = (p > 0).then(|| {
        SymmetricEigen::new(DMatrix::from_fn(p, p, |i, j| data[live[i] * m + live[j]]))
    });
    // Fail before emitting anything: a non-finite spectrum cannot be ranked.
    if let Some(e) = &eig {
        if e.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "eigendecomposition produced non-finite eigenvalues".into(),
            ));
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    if let Some(e) = &eig {
        order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
    }

    // Merge the solved spectrum with the deflated exact zeros, largest first.
    // A solved eigenvalue wins ties so real eigenvectors come before basis
    // fill-ins.
    let mut out = Vec::with_capacity(ell);
    let (mut li, mut di) = (0usize, 0usize);
    while out.len() < ell {
        let take_live = match (eig.as_ref(), li < p, di < dead.len()) {
            (Some(e), true, true) => e.eigenvalues[order[li]] >= 0.0,
            (_, true, false) => true,
            (_, false, true) => false,
            _ => unreachable!("check_ell bounds ell by m"),
        };
        let (lambda, mut v) = if take_live {
            let e = eig.as_ref().unwrap();
            let i = order[li];
            li += 1;
            let mut full = vec![0.0f64; m];
            for (w, &r) in e.eigenvectors.column(i).iter().zip(&live) {
                full[r] = *w;
            }
            (e.eigenvalues[i], full)
        } else {
            let mut full = vec![0.0f64; m];
            full[dead[di]] = 1.0;
            di += 1;
            (0.0, full)
        };
        fix_sign(&mut v);
        let mut resid = 0.0f64;
        for r in 0..m {
            let qv: f64 = data[r * m..(r + 1) * m].iter().zip(&v).map(|(a, b)| a * b).sum();
            resid += (qv - lambda * v[r]) * (qv - lambda * v[r]);
        }
        let resid = resid.sqrt();
        // Negated comparison so a non-finite residual fails the gate too.
        if !(resid <= tol * frob.max(1e-300)) {
            return Err(Error::Numeric(format!(
                "eigenpair {} residual {resid:e} exceeds {tol:e} * {frob:e}",
                out.len() + 1
            )));
        }
        out.push(EigenPair { eigenvalue: lambda, vector: v });
    }
    Ok(out)
}

/// Top `ell` eigenpairs of a factored sketch B B^T via its Gram matrix.
///
/// For r factor columns this costs O(m r^2) instead of O(m^3) and is exact:
/// eigenvectors are B w / sqrt(mu) for Gram eigenpairs (mu, w). Only the
/// numerically nonzero spectrum is recoverable, so `ell` is capped by the
/// Gram rank at relative cutoff `rank_tol`.
pub fn top_eigs_factored(fact: &FactorSketch, ell: usize, rank_tol: f64) -> Result<Vec<EigenPair>> {
    let r = fact.cols.len();
    let m = fact.m as usize;
    if r == 0 {
        return Err(Error::Config("factored sketch has no columns".into()));
    }
    for (i, c) in fact.cols.iter().enumerate() {
        if c.len() != m {
            return Err(Error::Config(format!(
                "factored sketch column {i} has length {} != m = {m}",
                c.len()
            )));
        }
    }
    let mut gram = DMatrix::zeros(r, r);
    for i in 0..r {
        for j in i..r {
            let g: f64 = fact.cols[i].iter().zip(&fact.cols[j]).map(|(a, b)| a * b).sum();
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mu_max = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] > rank_tol * mu_max && eig.eigenvalues[i] > 0.0)
        .count();
    check_ell(ell, rank, &format!("a rank-{rank} factored sketch"))?;

    let mut out = Vec::with_capacity(ell);
    for &i in order.iter().take(ell) {
        let mu = eig.eigenvalues[i];
        let w = eig.eigenvectors.column(i);
        let inv = 1.0 / mu.sqrt();
        let mut v = vec![0.0f64; m];
        for (cidx, col) in fact.cols.iter().enumerate() {
            let wc = w[cidx] * inv;
            if wc == 0.0 {
                continue;
            }
            for (vr, cr) in v.iter_mut().zip(col) {
                *vr += wc * cr;
            }
        }
        fix_sign(&mut v);
        // The reconstruction is algebraically exact, so any non-finite value
        // is a solver fault and must not leak into decoding.
        if !mu.is_finite() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!(
                "factored eigenpair {} is non-finite",
                out.len() + 1
            )));
        }
        out.push(EigenPair { eigenvalue: mu, vector: v });
    }
    Ok(out)
}

/// Relative spectral gaps g_j = (lambda_j - lambda_{j+1}) / lambda_j for a
/// descending positive sequence; drives how hard each eigenvector is to pin
/// down.
pub fn relative_gaps(pairs: &[EigenPair]) -> Result<Vec<f64>> {
    if pairs.len() < 2 {
        return Err(Error::Config("relative gaps need at least two eigenpairs".into()));
    }
    pairs
        .windows(2)
        .map(|w| {
            if w[0].eigenvalue <= 0.0 {
                return Err(Error::Numeric(format!(
                    "relative gap undefined at nonpositive eigenvalue {}",
                    w[0].eigenvalue
                )));
            }
            Ok((w[0].eigenvalue - w[1].eigenvalue) / w[0].eigenvalue)
        })
        .collect()
}

/// Writes eigenpairs as CSV: header `m=<m>`, then one line per pair holding
/// the eigenvalue followed by the m vector entries.
pub fn write_eigenpairs_csv(w: &mut impl Write, pairs: &[EigenPair]) -> Result<()> {
    let m = pairs.first().map_or(0, |p| p.vector.len());
    writeln!(w, "m={m}")?;
    for p in pairs {
        write!(w, "{}", p.eigenvalue)?;
        for v in &p.vector {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads the eigenpairs CSV format back; every line must carry exactly the
/// header's vector length and only finite values.
pub fn read_eigenpairs_csv(r: impl BufRead) -> Result<Vec<EigenPair>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Io("eigenpairs: empty input".into()))?
        .map_err(|e| Error::Io(format!("eigenpairs: {e}")))?;
    let m: usize = header
        .trim()
        .strip_prefix("m=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Io(format!("eigenpairs: bad header {header:?}")))?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::Io(format!("eigenpairs line {lineno}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.trim().split(',');
        let eigenvalue: f64 = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|_| Error::Io(format!("eigenpairs line {lineno}: bad eigenvalue")))?;
        let vector = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Io(format!("eigenpairs line {lineno}: bad entry {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.len() != m {
            return Err(Error::Io(format!(
                "eigenpairs line {lineno}: {} entries, header says {m}",
                vector.len()
            )));
        }
        if !eigenvalue.is_finite() || vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Io(format!("eigenpairs line {lineno}: non-finite value")));
        }
        out.push(EigenPair { eigenvalue, vector });
    }
    Ok(out)
}
