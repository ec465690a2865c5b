//! Sparse recovery of a vector x from its measurement y = M x.
//!
//! `decode_sublinear` is the fast path for the coherent construction: each
//! polynomial-code row of the measurement carries a bit-test block that names
//! the single support index hashed into it, and the index's value is read off
//! the ones-row measurements of all its rows by a median vote. Runtime is
//! O(k q) row scans plus candidate gathers, independent of the ambient N.
//!
//! `decode_cosamp` is the general iterative fallback for either ensemble:
//! a support proxy from the adjoint, least squares on the merged support by
//! conjugate gradient on the normal equations, pruning, repeat.

use crate::measure::{ceil_log2, CoherentEnsemble, Ensemble};
use crate::{Error, Result};
use num_complex::Complex64;
use std::collections::BTreeSet;
use std::io::{BufRead, Write};

/// Sparse vector with ascending, unique indices and nonzero finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: u64,
    entries: Vec<(u64, f64)>,
}

impl SparseVector {
    pub fn new(dim: u64, entries: Vec<(u64, f64)>) -> Result<Self> {
        for (pos, &(idx, val)) in entries.iter().enumerate() {
            if idx >= dim {
                return Err(Error::Config(format!("sparse entry index {idx} >= dim {dim}")));
            }
            if pos > 0 && entries[pos - 1].0 >= idx {
                return Err(Error::Config(format!(
                    "sparse entries must be strictly ascending at index {idx}"
                )));
            }
            if val == 0.0 || !val.is_finite() {
                return Err(Error::Config(format!("sparse entry {idx} has bad value {val}")));
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> u64 {
        self.dim
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, idx: u64) -> f64 {
        match self.entries.binary_search_by_key(&idx, |e| e.0) {
            Ok(p) => self.entries[p].1,
            Err(_) => 0.0,
        }
    }

    pub fn norm2(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    /// l2 distance to another vector of the same dimension.
    pub fn distance(&self, other: &SparseVector) -> f64 {
        let mut sum = 0.0;
        let (mut p, mut q) = (0, 0);
        while p < self.entries.len() || q < other.entries.len() {
            let a = self.entries.get(p);
            let b = other.entries.get(q);
            match (a, b) {
                (Some(&(ia, va)), Some(&(ib, vb))) => match ia.cmp(&ib) {
                    std::cmp::Ordering::Less => {
                        sum += va * va;
                        p += 1;
                    }
                    std::cmp::Ordering::Greater => {
                        sum += vb * vb;
                        q += 1;
                    }
                    std::cmp::Ordering::Equal => {
                        sum += (va - vb) * (va - vb);
                        p += 1;
                        q += 1;
                    }
                },
                (Some(&(_, va)), None) => {
                    sum += va * va;
                    p += 1;
                }
                (None, Some(&(_, vb))) => {
                    sum += vb * vb;
                    q += 1;
                }
                (None, None) => break,
            }
        }
        sum.sqrt()
    }
}

/// What the sublinear decoder saw along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    /// Rows that passed the presence gate and yielded an index candidate.
    pub candidates_considered: usize,
    /// Identifications naming an index outside [0, N): collided rows whose
    /// bit pattern is a blend of several columns.
    pub collisions_detected: usize,
    /// Multiplier from raw median measurement back to coefficient scale,
    /// sqrt(k * (1 + ceil(log2 N))).
    pub rescale: f64,
}

fn coherent_of<'e>(ens: &'e Ensemble, what: &str) -> Result<&'e CoherentEnsemble> {
    match ens {
        Ensemble::Coherent(c) => Ok(c),
        Ensemble::Hadamard(_) => Err(Error::Config(format!(
            "{what} requires the coherent construction; use the iterative decoder for \
             subsampled Hadamard measurements"
        ))),
    }
}

fn check_measurement(y_len: usize, m: u64, finite: bool) -> Result<()> {
    if y_len as u64 != m {
        return Err(Error::Config(format!("measurement length {y_len} != ensemble rows {m}")));
    }
    if !finite {
        return Err(Error::Numeric("measurement contains non-finite values".into()));
    }
    Ok(())
}

/// Lower median of an unsorted sample set.
fn lower_median(vals: &mut [f64]) -> f64 {
    vals.sort_by(f64::total_cmp);
    vals[(vals.len() - 1) / 2]
}

/// Identifies support candidates from the bit-test blocks. Returns gated
/// candidate indices plus (rows_gated, out_of_range_count).
fn identify_candidates(c: &CoherentEnsemble, modulus: impl Fn(usize) -> f64) -> (BTreeSet<u64>, usize, usize) {
    let p = c.params();
    let q = p.q;
    let bit_rows = p.bit_rows();
    let code_bits = c.code_rows() as u64 - 1;
    let mut candidates = BTreeSet::new();
    let mut gated = 0usize;
    let mut out_of_range = 0usize;
    for i in 0..p.k {
        for row in 0..q {
            let base = ((i * q + row) * bit_rows) as usize;
            let r = c.code_rows() as usize;
            // Presence gate: the always-on row must dominate its complement.
            if modulus(base) <= modulus(base + r) {
                continue;
            }
            gated += 1;
            let mut idx = 0u64;
            for t in 0..code_bits {
                if modulus(base + 1 + t as usize) > modulus(base + r + 1 + t as usize) {
                    idx |= 1 << t;
                }
            }
            if idx < p.n {
                candidates.insert(idx);
            } else {
                out_of_range += 1;
            }
        }
    }
    (candidates, gated, out_of_range)
}

/// Gathers the ones-row measurement of each of `j`'s k rows.
fn ones_row_samples(c: &CoherentEnsemble, j: u64, read: impl Fn(usize) -> f64) -> Vec<f64> {
    let bit_rows = c.params().bit_rows();
    (0..c.params().k)
        .map(|i| read((c.w_row(j, i) * bit_rows) as usize))
        .collect()
}

fn warn_if_undersized(c: &CoherentEnsemble, s: u64) {
    let p = c.params();
    if !p.supports_sparsity(s) {
        log::warn!(
            "k = {} is below 4*d*s+1 = {} for s = {s}; recovery is not guaranteed",
            p.k,
            4 * p.d as u64 * s + 1
        );
    }
}

/// Recovers an s-sparse x from y = M x for a coherent ensemble.
///
/// Keeps the 2s largest-magnitude estimates so that a near-sparse input
/// degrades gracefully instead of truncating early.
pub fn decode_sublinear(ens: &Ensemble, y: &[f64], s: u64) -> Result<(SparseVector, DecodeReport)> {
    let c = coherent_of(ens, "sublinear decoding")?;
    check_measurement(y.len(), c.m(), y.iter().all(|v| v.is_finite()))?;
    if s == 0 {
        return Err(Error::Config("sparsity s must be at least 1".into()));
    }
    warn_if_undersized(c, s);

    let (candidates, gated, out_of_range) = identify_candidates(c, |i| y[i].abs());
    let rescale = 1.0 / c.scale();
    let mut estimates: Vec<(u64, f64)> = Vec::with_capacity(candidates.len());
    for &j in &candidates {
        let mut samples = ones_row_samples(c, j, |i| y[i]);
        let est = rescale * c.sign(j) * lower_median(&mut samples);
        if est != 0.0 {
            estimates.push((j, est));
        }
    }
    estimates.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    estimates.truncate(2 * s as usize);
    estimates.sort_by_key(|e| e.0);
    let report = DecodeReport {
        candidates_considered: gated,
        collisions_detected: out_of_range,
        rescale,
    };
    Ok((SparseVector::new(c.n(), estimates)?, report))
}

/// Complex variant: y = M x for complex x, bit tests on moduli, medians taken
/// separately on real and imaginary parts.
pub fn decode_sublinear_complex(
    ens: &Ensemble,
    y: &[Complex64],
    s: u64,
) -> Result<(Vec<(u64, Complex64)>, DecodeReport)> {
    let c = coherent_of(ens, "sublinear decoding")?;
    check_measurement(y.len(), c.m(), y.iter().all(|v| v.re.is_finite() && v.im.is_finite()))?;
    if s == 0 {
        return Err(Error::Config("sparsity s must be at least 1".into()));
    }
    warn_if_undersized(c, s);

    let (candidates, gated, out_of_range) = identify_candidates(c, |i| y[i].norm());
    let rescale = 1.0 / c.scale();
    let mut estimates: Vec<(u64, Complex64)> = Vec::with_capacity(candidates.len());
    for &j in &candidates {
        let ssign = c.sign(j);
        let mut re = ones_row_samples(c, j, |i| y[i].re);
        let mut im = ones_row_samples(c, j, |i| y[i].im);
        let est = Complex64::new(
            rescale * ssign * lower_median(&mut re),
            rescale * ssign * lower_median(&mut im),
        );
        if est.norm() != 0.0 {
            estimates.push((j, est));
        }
    }
    estimates.sort_by(|a, b| b.1.norm().total_cmp(&a.1.norm()).then(a.0.cmp(&b.0)));
    estimates.truncate(2 * s as usize);
    estimates.sort_by_key(|e| e.0);
    let report = DecodeReport {
        candidates_considered: gated,
        collisions_detected: out_of_range,
        rescale,
    };
    Ok((estimates, report))
}

/// Iterative decoder outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct CosampReport {
    pub iterations: usize,
    /// ||y - M x_hat|| / ||y||.
    pub relative_residual: f64,
}

fn sparse_col_dot(a: &[(u64, f64)], b: &[(u64, f64)]) -> f64 {
    let mut sum = 0.0;
    let (mut p, mut q) = (0, 0);
    while p < a.len() && q < b.len() {
        match a[p].0.cmp(&b[q].0) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                sum += a[p].1 * b[q].1;
                p += 1;
                q += 1;
            }
        }
    }
    sum
}

/// CG on the SPD normal-equation system G z = b, capped at `cap` iterations.
fn cg_solve(g: &[Vec<f64>], b: &[f64], cap: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let bnorm2: f64 = b.iter().map(|v| v * v).sum();
    let mut rs: f64 = bnorm2;
    if rs == 0.0 {
        return Ok(x);
    }
    for it in 0..cap {
        let gp: Vec<f64> =
            g.iter().map(|row| row.iter().zip(&p).map(|(a, b)| a * b).sum()).collect();
        let curv: f64 = p.iter().zip(&gp).map(|(a, b)| a * b).sum();
        if !curv.is_finite() || curv <= 0.0 {
            return Err(Error::Numeric(format!(
                "conjugate gradient breakdown at iteration {it}: curvature {curv}"
            )));
        }
        let alpha = rs / curv;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * gp[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        if rs_new <= 1e-28 * bnorm2 {
            break;
        }
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    Ok(x)
}

/// Recovers an s-sparse x from y = M x + n by compressive sampling matching
/// pursuit. Works for either ensemble. Halts when the relative residual
/// drops to `eta`, when an iteration improves it by less than `eta`, or at
/// `max_iters`.
pub fn decode_cosamp(
    ens: &Ensemble,
    y: &[f64],
    s: u64,
    eta: f64,
    max_iters: usize,
) -> Result<(SparseVector, CosampReport)> {
    check_measurement(y.len(), ens.m(), y.iter().all(|v| v.is_finite()))?;
    if s == 0 {
        return Err(Error::Config("sparsity s must be at least 1".into()));
    }
    if max_iters == 0 {
        return Err(Error::Config("max_iters must be at least 1".into()));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!("halting threshold eta = {eta} must be positive")));
    }
    let n = ens.n();
    let s_us = s as usize;
    let min_rows = 8 * s * ceil_log2(n).max(1) as u64;
    if ens.m() < min_rows {
        log::warn!(
            "m = {} rows is below the recommended {min_rows} for s = {s}, N = {n}",
            ens.m()
        );
    }
    let ynorm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ynorm == 0.0 {
        return Ok((
            SparseVector::new(n, Vec::new())?,
            CosampReport { iterations: 0, relative_residual: 0.0 },
        ));
    }

    let mut support: Vec<u64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut resid = y.to_vec();
    let mut rel = 1.0;
    let mut iterations = 0usize;
    let mut col_cache: std::collections::HashMap<u64, Vec<(u64, f64)>> =
        std::collections::HashMap::new();

    for iter in 1..=max_iters {
        iterations = iter;
        // Support proxy from the adjoint of the residual.
        let proxy = ens.adjoint(&resid);
        let mut order: Vec<u64> = (0..n).collect();
        order.sort_by(|&a, &b| {
            proxy[b as usize].abs().total_cmp(&proxy[a as usize].abs()).then(a.cmp(&b))
        });
        let mut merged: BTreeSet<u64> = support.iter().copied().collect();
        for &j in order.iter().take(2 * s_us) {
            merged.insert(j);
        }
        let t: Vec<u64> = merged.into_iter().collect();
        for &j in &t {
            col_cache.entry(j).or_insert_with(|| {
                let mut c = Vec::new();
                ens.column(j, &mut c);
                c
            });
        }

        // Least squares on the merged support via the normal equations.
        let cols: Vec<&Vec<(u64, f64)>> = t.iter().map(|j| &col_cache[j]).collect();
        let gram: Vec<Vec<f64>> = cols
            .iter()
            .map(|a| cols.iter().map(|b| sparse_col_dot(a, b)).collect())
            .collect();
        let rhs: Vec<f64> = cols
            .iter()
            .map(|c| c.iter().map(|&(r, v)| v * y[r as usize]).sum())
            .collect();
        let z = cg_solve(&gram, &rhs, 3 * s_us)?;

        // Prune to the s largest and rebuild the residual.
        let mut keep: Vec<usize> = (0..t.len()).collect();
        keep.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(t[a].cmp(&t[b])));
        keep.truncate(s_us);
        keep.sort_by_key(|&i| t[i]);
        support = keep.iter().map(|&i| t[i]).collect();
        values = keep.iter().map(|&i| z[i]).collect();

        resid = y.to_vec();
        for (&j, &v) in support.iter().zip(&values) {
            for &(r, c) in &col_cache[&j] {
                resid[r as usize] -= v * c;
            }
        }
        let new_rel = resid.iter().map(|v| v * v).sum::<f64>().sqrt() / ynorm;
        let improved = rel - new_rel;
        rel = new_rel;
        if rel <= eta || improved < eta {
            break;
        }
    }

    let entries: Vec<(u64, f64)> =
        support.into_iter().zip(values).filter(|&(_, v)| v != 0.0).collect();
    Ok((
        SparseVector::new(n, entries)?,
        CosampReport { iterations, relative_residual: rel },
    ))
}

/// Worst-case noise amplification sqrt(s k (1 + ceil(log2 N))) * ||n||_inf / ||n||_2
/// of the sublinear decoder for a residual n. Small when the residual energy
/// is spread out; sqrt(s k log N) when it concentrates on one row.
pub fn beta_m(ens: &Ensemble, resid: &[f64], s: u64) -> Result<f64> {
    let c = coherent_of(ens, "the noise amplification factor")?;
    check_measurement(resid.len(), c.m(), resid.iter().all(|v| v.is_finite()))?;
    if s == 0 {
        return Err(Error::Config("sparsity s must be at least 1".into()));
    }
    let linf = resid.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let l2: f64 = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
    if l2 == 0.0 {
        return Err(Error::Numeric("noise amplification undefined for a zero residual".into()));
    }
    let p = c.params();
    Ok(((s * p.k) as f64 * c.code_rows() as f64).sqrt() * linf / l2)
}

/// Writes a sparse vector as CSV: header `dim=<N>`, then `index,value` lines
/// with 1-based ascending indices.
pub fn write_sparse_csv(w: &mut impl Write, v: &SparseVector) -> Result<()> {
    writeln!(w, "dim={}", v.dim())?;
    for &(idx, val) in v.entries() {
        writeln!(w, "{},{val}", idx + 1)?;
    }
    Ok(())
}

/// Reads the sparse vector CSV format; indices must be 1-based, strictly
/// ascending, in range, with finite nonzero values.
pub fn read_sparse_csv(r: impl BufRead) -> Result<SparseVector> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Io("sparse vector: empty input".into()))?
        .map_err(|e| Error::Io(format!("sparse vector: {e}")))?;
    let dim: u64 = header
        .trim()
        .strip_prefix("dim=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Io(format!("sparse vector: bad header {header:?}")))?;
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::Io(format!("sparse vector line {lineno}: {e}")))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (is, vs) = line
            .split_once(',')
            .ok_or_else(|| Error::Io(format!("sparse vector line {lineno}: expected index,value")))?;
        let idx: u64 = is
            .trim()
            .parse()
            .map_err(|_| Error::Io(format!("sparse vector line {lineno}: bad index {is:?}")))?;
        if idx == 0 {
            return Err(Error::Io(format!("sparse vector line {lineno}: indices are 1-based")));
        }
        let val: f64 = vs
            .trim()
            .parse()
            .map_err(|_| Error::Io(format!("sparse vector line {lineno}: bad value {vs:?}")))?;
        entries.push((idx - 1, val));
    }
    SparseVector::new(dim, entries).map_err(|e| Error::Io(format!("sparse vector: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{CoherentParams, HadamardParams};
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plant(n: u64, s: usize, seed: u64) -> SparseVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<u64> = (0..n).collect();
        idx.shuffle(&mut rng);
        let mut entries: Vec<(u64, f64)> = idx[..s]
            .iter()
            .map(|&i| {
                let mut v = 0.0;
                while v == 0.0 {
                    v = rng.gen_range(-2.0..2.0);
                }
                (i, v)
            })
            .collect();
        entries.sort_by_key(|e| e.0);
        SparseVector::new(n, entries).unwrap()
    }

    fn measure(ens: &Ensemble, x: &SparseVector) -> Vec<f64> {
        ens.apply_sparse(x.entries()).data
    }

    #[test]
    fn one_sparse_columns_decode_exactly() {
        let ens = Ensemble::coherent(CoherentParams::new(1024, 7, 7, 3, 3).unwrap());
        let c = match &ens {
            Ensemble::Coherent(c) => c,
            _ => unreachable!(),
        };
        let mut seen_neg = false;
        let mut seen_pos = false;
        for j in [0u64, 1, 5, 511, 777, 1023] {
            for val in [1.5, -0.25] {
                let x = SparseVector::new(1024, vec![(j, val)]).unwrap();
                let (got, rep) = decode_sublinear(&ens, &measure(&ens, &x), 1).unwrap();
                assert_eq!(got.nnz(), 1, "j={j}");
                assert_eq!(got.entries()[0].0, j);
                assert!(
                    (got.entries()[0].1 - val).abs() < 1e-12,
                    "j={j}: {} vs {val}",
                    got.entries()[0].1
                );
                assert_eq!(rep.collisions_detected, 0);
                // A 1-sparse input lights exactly its k rows; the rest fail
                // the presence gate.
                assert_eq!(rep.candidates_considered, 7);
            }
            if c.sign(j) < 0.0 {
                seen_neg = true;
            } else {
                seen_pos = true;
            }
        }
        // The exactness above only proves the decoder undoes the diagonal
        // signs if both signs actually occurred.
        assert!(seen_neg && seen_pos);
    }

    #[test]
    fn planted_supports_decode_exactly() {
        let params = CoherentParams::new(1024, 41, 41, 1, 9).unwrap();
        assert!(params.supports_sparsity(5));
        let ens = Ensemble::coherent(params);
        for seed in 0..20 {
            let x = plant(1024, 5, seed);
            let (got, rep) = decode_sublinear(&ens, &measure(&ens, &x), 5).unwrap();
            assert!((rep.rescale - (41.0 * 11.0f64).sqrt()).abs() < 1e-12);
            for &(j, v) in x.entries() {
                assert!(
                    (got.get(j) - v).abs() < 1e-10,
                    "seed {seed}: index {j} got {} want {v}",
                    got.get(j)
                );
            }
            // Anything beyond the planted support must be junk the median
            // already zeroed or small enough to have been kept as slack.
            assert!(got.nnz() <= 10);
            for &(j, v) in got.entries() {
                if x.get(j) == 0.0 {
                    assert!(v.abs() < 1e-10, "seed {seed}: phantom {v} at {j}");
                }
            }
        }
    }

    #[test]
    fn complex_vectors_decode_exactly() {
        let ens = Ensemble::coherent(CoherentParams::new(1024, 41, 41, 1, 13).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let mut idx: Vec<u64> = (0..1024).collect();
            idx.shuffle(&mut rng);
            let mut want: Vec<(u64, Complex64)> = idx[..4]
                .iter()
                .map(|&i| (i, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
                .collect();
            want.sort_by_key(|e| e.0);
            let m = ens.m() as usize;
            let mut y = vec![Complex64::new(0.0, 0.0); m];
            for &(j, v) in &want {
                ens.for_each_nonzero(j, |r, c| y[r as usize] += v * c);
            }
            let (got, _) = decode_sublinear_complex(&ens, &y, 4).unwrap();
            for &(j, v) in &want {
                let g = got
                    .iter()
                    .find(|e| e.0 == j)
                    .map(|e| e.1)
                    .unwrap_or_else(|| panic!("missing index {j}"));
                assert!((g - v).norm() < 1e-10, "index {j}: {g} vs {v}");
            }
        }
    }

    #[test]
    fn recovery_error_scales_linearly_with_noise() {
        let ens = Ensemble::coherent(CoherentParams::new(1024, 41, 41, 1, 21).unwrap());
        let x = plant(1024, 5, 77);
        let clean = measure(&ens, &x);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let noise: Vec<f64> = (0..clean.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ymax = clean.iter().fold(0.0f64, |a, &v| a.max(v.abs()));

        let deltas = [1e-6, 1e-5, 1e-4, 1e-3];
        let errs: Vec<f64> = deltas
            .iter()
            .map(|&d| {
                let y: Vec<f64> =
                    clean.iter().zip(&noise).map(|(c, n)| c + d * ymax * n).collect();
                let (got, _) = decode_sublinear(&ens, &y, 5).unwrap();
                let err = got.distance(&x);
                assert!(err > 0.0);
                err
            })
            .collect();
        // Least squares slope of log err against log delta.
        let xs: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        let slope: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
        assert!((slope - 1.0).abs() < 0.15, "noise scaling slope {slope}");
    }

    #[test]
    fn cosamp_recovers_with_both_ensembles() {
        let x = plant(1024, 10, 31);
        let had = Ensemble::hadamard(HadamardParams::new(1024, 400, 7, 8).unwrap());
        let (got, rep) = decode_cosamp(&had, &measure(&had, &x), 10, 1e-9, 50).unwrap();
        assert!(got.distance(&x) / x.norm2() < 1e-6, "hadamard err {}", got.distance(&x));
        assert!(rep.relative_residual < 1e-6);

        // Degree 1 keeps column coherence at 1/k, well inside the greedy
        // recovery regime for s = 10.
        let coh = Ensemble::coherent(CoherentParams::new(1024, 37, 37, 1, 15).unwrap());
        let (got, _) = decode_cosamp(&coh, &measure(&coh, &x), 10, 1e-9, 50).unwrap();
        assert!(got.distance(&x) / x.norm2() < 1e-6, "coherent err {}", got.distance(&x));
    }

    #[test]
    fn cosamp_noise_stays_proportional() {
        let had = Ensemble::hadamard(HadamardParams::new(1024, 400, 7, 8).unwrap());
        let x = plant(1024, 10, 32);
        let clean = measure(&had, &x);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut noise: Vec<f64> = (0..clean.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nn: f64 = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
        let target = 1e-3 * x.norm2();
        noise.iter_mut().for_each(|v| *v *= target / nn);
        let y: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + n).collect();
        let (got, _) = decode_cosamp(&had, &y, 10, 1e-9, 50).unwrap();
        assert!(got.distance(&x) <= 20.0 * target, "err {} noise {target}", got.distance(&x));
    }

    #[test]
    fn cosamp_zero_measurement_gives_empty() {
        let had = Ensemble::hadamard(HadamardParams::new(64, 32, 7, 8).unwrap());
        let (got, rep) = decode_cosamp(&had, &vec![0.0; 32], 3, 1e-9, 10).unwrap();
        assert_eq!(got.nnz(), 0);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn sublinear_rejects_hadamard_and_bad_args() {
        let had = Ensemble::hadamard(HadamardParams::new(64, 32, 7, 8).unwrap());
        let err = decode_sublinear(&had, &vec![0.0; 32], 1).unwrap_err();
        assert!(err.to_string().contains("coherent"), "{err}");
        let coh = Ensemble::coherent(CoherentParams::new(64, 3, 3, 3, 1).unwrap());
        let m = coh.m() as usize;
        assert!(decode_sublinear(&coh, &vec![0.0; m - 1], 1).is_err());
        assert!(decode_sublinear(&coh, &vec![0.0; m], 0).is_err());
        let mut y = vec![0.0; m];
        y[0] = f64::NAN;
        assert!(decode_sublinear(&coh, &y, 1).is_err());
        assert!(beta_m(&had, &vec![1.0; 32], 1).is_err());
        assert!(beta_m(&coh, &vec![0.0; m], 1).is_err());
    }

    #[test]
    fn beta_closed_forms() {
        let params = CoherentParams::new(1024, 41, 41, 1, 0).unwrap();
        let ens = Ensemble::coherent(params);
        let m = ens.m() as usize;
        let s = 5u64;
        // Flat residual: l_inf / l_2 = 1 / sqrt(m).
        let flat = vec![0.25; m];
        let got = beta_m(&ens, &flat, s).unwrap();
        let want = ((s * 41) as f64 * 11.0 / m as f64).sqrt();
        assert!((got - want).abs() < 1e-12);
        // Single spike: ratio 1, the worst case.
        let mut spike = vec![0.0; m];
        spike[17] = -3.0;
        let got = beta_m(&ens, &spike, s).unwrap();
        assert!((got - ((s * 41) as f64 * 11.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sparse_vector_invariants() {
        assert!(SparseVector::new(10, vec![(3, 1.0), (7, -2.0)]).is_ok());
        assert!(SparseVector::new(10, vec![(7, 1.0), (3, 1.0)]).is_err());
        assert!(SparseVector::new(10, vec![(3, 1.0), (3, 1.0)]).is_err());
        assert!(SparseVector::new(10, vec![(10, 1.0)]).is_err());
        assert!(SparseVector::new(10, vec![(3, 0.0)]).is_err());
        assert!(SparseVector::new(10, vec![(3, f64::INFINITY)]).is_err());
        let a = SparseVector::new(8, vec![(1, 1.0), (4, 2.0)]).unwrap();
        let b = SparseVector::new(8, vec![(1, 1.0), (5, -1.0)]).unwrap();
        assert!((a.distance(&b) - (4.0f64 + 1.0).sqrt()).abs() < 1e-12);
        assert_eq!(a.get(4), 2.0);
        assert_eq!(a.get(2), 0.0);
    }

    #[test]
    fn sparse_csv_round_trip_and_rejects() {
        let v = SparseVector::new(100, vec![(0, 1.5), (41, -0.0625), (99, 3.0)]).unwrap();
        let mut buf = Vec::new();
        write_sparse_csv(&mut buf, &v).unwrap();
        let back = read_sparse_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back, v);

        for bad in [
            "",
            "dim=x\n",
            "dim=10\n0,1.0\n",
            "dim=10\n5,1.0\n3,1.0\n",
            "dim=10\n5,1.0\n5,2.0\n",
            "dim=10\n11,1.0\n",
            "dim=10\n5,0.0\n",
            "dim=10\n5,nan\n",
            "dim=10\n5;1.0\n",
        ] {
            assert!(
                read_sparse_csv(std::io::BufReader::new(bad.as_bytes())).is_err(),
                "accepted {bad:?}"
            );
        }
    }
}
