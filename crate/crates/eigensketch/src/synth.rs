//! Synthetic ground truth: planted low-rank PSD matrices A = sum_j l_j u_j u_j^T
//! with s-sparse unit eigenvectors and geometric eigenvalues, generated
//! reproducibly at dimensions far beyond anything that could be materialized.
//!
//! Vectors are drawn by sampling s positions uniformly with replacement and
//! filling them with standard normal values; at large N the supports barely
//! overlap, so the planted vectors are close to orthogonal and the planted
//! (l_j, u_j) are close to the true eigenpairs. `orthogonality_report` gives
//! the realized overlaps so callers can judge that closeness; `densify` is a
//! small-N oracle for tests.

use crate::decode::SparseVector;
use crate::stream::EntryTriple;
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, Write};
use std::path::Path;

/// Cap on `densify`, which allocates n^2 floats.
pub const MAX_DENSE_DIM: u64 = 1 << 14;

/// Parameters of a planted test matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TestMatrixSpec {
    /// Ambient dimension N.
    pub n: u64,
    /// Number of planted factors.
    pub r: u64,
    /// Nonzeros drawn per eigenvector (duplicates merge, so a vector can
    /// end up slightly sparser).
    pub s: u64,
    /// Eigenvalue ratio: l_j = scale * decay^j, j = 1..=r.
    pub decay: f64,
    pub scale: f64,
    pub seed: u64,
}

impl TestMatrixSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > crate::measure::MAX_DIM {
            return Err(Error::Config(format!("dimension n = {} out of range", self.n)));
        }
        if self.r == 0 || self.r > 10_000 {
            return Err(Error::Config(format!("rank r = {} out of range", self.r)));
        }
        if self.s == 0 || self.s > self.n {
            return Err(Error::Config(format!("sparsity s = {} out of range for n = {}", self.s, self.n)));
        }
        if self.r.saturating_mul(self.s) > self.n {
            return Err(Error::Config(format!(
                "r * s = {} exceeds n = {}; planted supports would overlap heavily",
                self.r * self.s,
                self.n
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("decay {} must lie in (0, 1]", self.decay)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("scale {} must be positive", self.scale)));
        }
        Ok(())
    }
}

/// A planted matrix in factor form.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub spec: TestMatrixSpec,
    /// Descending, l_j = scale * decay^j.
    pub eigenvalues: Vec<f64>,
    /// Unit-norm planted eigenvectors, one per eigenvalue.
    pub eigenvectors: Vec<SparseVector>,
}

/// Draws the planted ground truth for a spec. Factor j uses its own ChaCha
/// stream, so the result is reproducible and independent of generation order.
pub fn generate(spec: &TestMatrixSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let mut eigenvalues = Vec::with_capacity(spec.r as usize);
    let mut eigenvectors = Vec::with_capacity(spec.r as usize);
    for j in 1..=spec.r {
        eigenvalues.push(spec.scale * spec.decay.powi(j as i32));
        eigenvectors.push(draw_unit_sparse(spec, j)?);
    }
    Ok(GroundTruth { spec: spec.clone(), eigenvalues, eigenvectors })
}

fn draw_unit_sparse(spec: &TestMatrixSpec, j: u64) -> Result<SparseVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(j);
    for _ in 0..100 {
        let mut entries: Vec<(u64, f64)> = Vec::with_capacity(spec.s as usize);
        for _ in 0..spec.s {
            let idx = rng.gen_range(0..spec.n);
            let val: f64 = rng.sample(StandardNormal);
            entries.push((idx, val));
        }
        entries.sort_by_key(|e| e.0);
        // Merge duplicate positions by summation.
        let mut merged: Vec<(u64, f64)> = Vec::with_capacity(entries.len());
        for (idx, val) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == idx => last.1 += val,
                _ => merged.push((idx, val)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        let norm: f64 = merged.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            merged.iter_mut().for_each(|e| e.1 /= norm);
            return SparseVector::new(spec.n, merged);
        }
    }
    Err(Error::Numeric(format!("factor {j}: drew a zero vector 100 times in a row")))
}

impl GroundTruth {
    /// Factor stream `(eigenvalue, eigenvector entries)` for sketching.
    pub fn factors(&self) -> Vec<(f64, Vec<(u64, f64)>)> {
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .map(|(&l, u)| (l, u.entries().to_vec()))
            .collect()
    }

    /// Dense A = sum l_j u_j u_j^T; a test oracle, guarded to small N.
    pub fn densify(&self) -> Result<Vec<f64>> {
        let n = self.spec.n;
        if n > MAX_DENSE_DIM {
            return Err(Error::Config(format!(
                "refusing to densify at n = {n} (cap {MAX_DENSE_DIM})"
            )));
        }
        let n = n as usize;
        let mut a = vec![0.0; n * n];
        for (l, u) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            for &(i, x) in u.entries() {
                for &(k, y) in u.entries() {
                    a[i as usize * n + k as usize] += l * x * y;
                }
            }
        }
        Ok(a)
    }

    /// The dense matrix as an entry stream, including exact zeros, for
    /// exercising the entry-by-entry sketch path.
    pub fn dense_entries(&self) -> Result<Vec<EntryTriple>> {
        let a = self.densify()?;
        let n = self.spec.n;
        Ok(a
            .iter()
            .enumerate()
            .map(|(idx, &value)| EntryTriple {
                row: idx as u64 / n,
                col: idx as u64 % n,
                value,
            })
            .collect())
    }
}

/// Pairwise inner-product summary of the planted eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityReport {
    pub max_overlap: f64,
    pub mean_overlap: f64,
}

pub fn orthogonality_report(gt: &GroundTruth) -> OrthogonalityReport {
    let r = gt.eigenvectors.len();
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    let mut pairs = 0u64;
    for i in 0..r {
        for j in (i + 1)..r {
            let dot = sparse_dot(gt.eigenvectors[i].entries(), gt.eigenvectors[j].entries()).abs();
            max = max.max(dot);
            sum += dot;
            pairs += 1;
        }
    }
    OrthogonalityReport { max_overlap: max, mean_overlap: if pairs == 0 { 0.0 } else { sum / pairs as f64 } }
}

fn sparse_dot(a: &[(u64, f64)], b: &[(u64, f64)]) -> f64 {
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

/// Writes a ground truth as a directory: `manifest.txt` plus one sparse
/// vector CSV per factor (`u_001.csv`, ...).
pub fn write_ground_truth(dir: &Path, gt: &GroundTruth) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let spec = &gt.spec;
    let manifest = dir.join("manifest.txt");
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(&manifest).map_err(|e| Error::Io(format!("{}: {e}", manifest.display())))?,
    );
    write!(
        w,
        "ground_truth v1\nn={}\nrank={}\nsparsity={}\ndecay={}\nscale={}\nseed={}\n",
        spec.n, spec.r, spec.s, spec.decay, spec.scale, spec.seed
    )?;
    write!(w, "eigenvalues=")?;
    for (i, l) in gt.eigenvalues.iter().enumerate() {
        if i > 0 {
            write!(w, ",")?;
        }
        write!(w, "{l}")?;
    }
    writeln!(w)?;
    w.flush()?;
    for (i, u) in gt.eigenvectors.iter().enumerate() {
        let path = dir.join(format!("u_{:03}.csv", i + 1));
        let mut f = std::io::BufWriter::new(
            std::fs::File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        );
        crate::decode::write_sparse_csv(&mut f, u)?;
        f.flush()?;
    }
    Ok(())
}

/// Reads a ground truth directory back; vector dimensions and counts must
/// match the manifest.
pub fn read_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let manifest = dir.join("manifest.txt");
    let f = std::fs::File::open(&manifest)
        .map_err(|e| Error::Io(format!("{}: {e}", manifest.display())))?;
    let mut lines = std::io::BufReader::new(f).lines();
    let magic = lines
        .next()
        .transpose()
        .map_err(|e| Error::Io(format!("manifest: {e}")))?
        .unwrap_or_default();
    if magic.trim() != "ground_truth v1" {
        return Err(Error::Io("manifest: bad magic".into()));
    }
    let mut n = None;
    let mut r = None;
    let mut s = None;
    let mut decay = None;
    let mut scale = None;
    let mut seed = None;
    let mut eigenvalues: Option<Vec<f64>> = None;
    for line in lines {
        let line = line.map_err(|e| Error::Io(format!("manifest: {e}")))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Io(format!("manifest: malformed line {line:?}")))?;
        match key {
            "n" => n = Some(value.parse().map_err(|_| Error::Io("manifest: bad n".into()))?),
            "rank" => r = Some(value.parse().map_err(|_| Error::Io("manifest: bad rank".into()))?),
            "sparsity" => {
                s = Some(value.parse().map_err(|_| Error::Io("manifest: bad sparsity".into()))?)
            }
            "decay" => {
                decay = Some(value.parse().map_err(|_| Error::Io("manifest: bad decay".into()))?)
            }
            "scale" => {
                scale = Some(value.parse().map_err(|_| Error::Io("manifest: bad scale".into()))?)
            }
            "seed" => seed = Some(value.parse().map_err(|_| Error::Io("manifest: bad seed".into()))?),
            "eigenvalues" => {
                let vals = value
                    .split(',')
                    .map(|v| {
                        v.parse::<f64>().map_err(|_| Error::Io(format!("manifest: bad eigenvalue {v:?}")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Io("manifest: non-finite eigenvalue".into()));
                }
                eigenvalues = Some(vals);
            }
            other => return Err(Error::Io(format!("manifest: unknown key {other}"))),
        }
    }
    let spec = TestMatrixSpec {
        n: n.ok_or_else(|| Error::Io("manifest: missing n".into()))?,
        r: r.ok_or_else(|| Error::Io("manifest: missing rank".into()))?,
        s: s.ok_or_else(|| Error::Io("manifest: missing sparsity".into()))?,
        decay: decay.ok_or_else(|| Error::Io("manifest: missing decay".into()))?,
        scale: scale.ok_or_else(|| Error::Io("manifest: missing scale".into()))?,
        seed: seed.ok_or_else(|| Error::Io("manifest: missing seed".into()))?,
    };
    let eigenvalues = eigenvalues.ok_or_else(|| Error::Io("manifest: missing eigenvalues".into()))?;
    if eigenvalues.len() as u64 != spec.r {
        return Err(Error::Io(format!(
            "manifest: {} eigenvalues for rank {}",
            eigenvalues.len(),
            spec.r
        )));
    }
    let mut eigenvectors = Vec::with_capacity(spec.r as usize);
    for i in 1..=spec.r {
        let path = dir.join(format!("u_{i:03}.csv"));
        let f = std::fs::File::open(&path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let u = crate::decode::read_sparse_csv(std::io::BufReader::new(f))?;
        if u.dim() != spec.n {
            return Err(Error::Io(format!(
                "{}: dimension {} != manifest n {}",
                path.display(),
                u.dim(),
                spec.n
            )));
        }
        eigenvectors.push(u);
    }
    Ok(GroundTruth { spec, eigenvalues, eigenvectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn spec(n: u64, r: u64, s: u64, seed: u64) -> TestMatrixSpec {
        TestMatrixSpec { n, r, s, decay: 0.5, scale: 1.0, seed }
    }

    #[test]
    fn one_sparse_vectors_are_signed_basis_vectors() {
        let gt = generate(&spec(1 << 20, 10, 1, 3)).unwrap();
        for u in &gt.eigenvectors {
            assert_eq!(u.nnz(), 1);
            assert!((u.entries()[0].1.abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn vectors_are_unit_norm_and_eigenvalues_geometric() {
        let gt = generate(&spec(1 << 27, 20, 100, 7)).unwrap();
        assert_eq!(gt.eigenvectors.len(), 20);
        for (j, (l, u)) in gt.eigenvalues.iter().zip(&gt.eigenvectors).enumerate() {
            assert!((u.norm2() - 1.0).abs() < 1e-12);
            assert!(u.nnz() <= 100);
            assert!((l - 0.5f64.powi(j as i32 + 1)).abs() < 1e-15);
            assert!(u.entries().iter().all(|&(i, _)| i < (1 << 27)));
        }
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let a = generate(&spec(4096, 5, 10, 11)).unwrap();
        let b = generate(&spec(4096, 5, 10, 11)).unwrap();
        let c = generate(&spec(4096, 5, 10, 12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.eigenvectors, c.eigenvectors);
    }

    #[test]
    fn densified_matrix_is_psd_with_planted_spectrum() {
        let gt = generate(&spec(128, 4, 8, 5)).unwrap();
        let a = gt.densify().unwrap();
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(128, 128, &a));
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|x, y| y.total_cmp(x));
        assert!(vals.iter().all(|&v| v > -1e-10), "not PSD: min {}", vals[127]);
        // Near-orthogonal planted vectors put the top of the spectrum close
        // to the planted values.
        let rep = orthogonality_report(&gt);
        for j in 0..4 {
            let tol = 2.0 * rep.max_overlap * gt.eigenvalues[0] + 1e-12;
            assert!(
                (vals[j] - gt.eigenvalues[j]).abs() <= tol,
                "eigenvalue {j}: {} vs {} (tol {tol})",
                vals[j],
                gt.eigenvalues[j]
            );
        }
    }

    #[test]
    fn large_dimension_supports_rarely_overlap() {
        let mut ok = 0;
        for seed in 0..100 {
            let gt = generate(&spec(1 << 20, 20, 100, seed)).unwrap();
            if orthogonality_report(&gt).max_overlap < 0.2 {
                ok += 1;
            }
        }
        assert!(ok >= 95, "only {ok}/100 seeds had overlap < 0.2");
    }

    #[test]
    fn spec_validation_rejects_bad_parameters() {
        assert!(generate(&spec(0, 1, 1, 0)).is_err());
        assert!(generate(&spec(100, 0, 1, 0)).is_err());
        assert!(generate(&spec(100, 1, 0, 0)).is_err());
        assert!(generate(&spec(100, 1, 101, 0)).is_err());
        assert!(generate(&spec(100, 20, 10, 0)).is_err());
        let mut s = spec(100, 2, 3, 0);
        s.decay = 0.0;
        assert!(generate(&s).is_err());
        s.decay = 1.5;
        assert!(generate(&s).is_err());
        s.decay = 0.5;
        s.scale = -1.0;
        assert!(generate(&s).is_err());
    }

    #[test]
    fn ground_truth_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let gt = generate(&spec(4096, 5, 10, 11)).unwrap();
        write_ground_truth(dir.path(), &gt).unwrap();
        let back = read_ground_truth(dir.path()).unwrap();
        assert_eq!(back, gt);

        // Tampered manifests are rejected.
        std::fs::write(dir.path().join("manifest.txt"), "ground_truth v1\nn=4096\n").unwrap();
        assert!(read_ground_truth(dir.path()).is_err());
        std::fs::write(dir.path().join("manifest.txt"), "nope\n").unwrap();
        assert!(read_ground_truth(dir.path()).is_err());
    }

    #[test]
    fn dense_entry_stream_covers_every_cell() {
        let gt = generate(&spec(32, 2, 3, 9)).unwrap();
        let entries = gt.dense_entries().unwrap();
        assert_eq!(entries.len(), 32 * 32);
        let a = gt.densify().unwrap();
        for t in &entries {
            assert_eq!(a[(t.row * 32 + t.col) as usize], t.value);
        }
    }
}
