//! One-pass sketch accumulation: compresses an N x N Hermitian PSD matrix A
//! streamed as entries, columns, or low-rank factors into the dense m x m
//! matrix `M A M*` without ever holding A.
//!
//! Entry streams may arrive in any order and may be sharded: sketches built
//! from disjoint parts of a stream merge by elementwise addition into the
//! single-stream result. The caller must stream each entry of A exactly once
//! (the full matrix, both triangles); `finalize` then verifies Hermitian
//! symmetry of the accumulated sketch and freezes it.
//!
//! Entry streams are read from little-endian binary records
//! `(u64 row, u64 col, f64 value)` or CSV lines `row,col,value`, both with
//! 1-based indices on disk. Sketches serialize to a text header (row count,
//! ensemble descriptor, accumulation stats) followed by the raw row-major
//! f64 block.

use crate::measure::{parse_descriptor, Ensemble};
use crate::{Error, Result};
use std::io::{BufRead, Read, Write};
use std::path::Path;

/// Dense sketches above this row count are refused; the factored
/// representation covers larger m.
pub const MAX_DENSE_ROWS: u64 = 20_000;

/// One streamed entry of A, 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryTriple {
    pub row: u64,
    pub col: u64,
    pub value: f64,
}

/// Dense m x m accumulator for `M A M*`.
///
/// Accumulation is plain f64 by default; the compensated flag switches every
/// cell to Kahan summation at the cost of a second m x m buffer.
#[derive(Debug, Clone)]
pub struct Sketch {
    m: usize,
    data: Vec<f64>,
    comp: Option<Vec<f64>>,
    descriptor: String,
    entries_seen: u64,
    finalized: bool,
    hermitian_defect: f64,
}

impl Sketch {
    pub fn new(ens: &Ensemble, compensated: bool) -> Result<Self> {
        let m = ens.m();
        if m > MAX_DENSE_ROWS {
            return Err(Error::Config(format!(
                "dense sketch at m = {m} exceeds the cap {MAX_DENSE_ROWS}; \
                 use the factored path for large ensembles"
            )));
        }
        let m = m as usize;
        Ok(Self {
            m,
            data: vec![0.0; m * m],
            comp: compensated.then(|| vec![0.0; m * m]),
            descriptor: ens.descriptor(),
            entries_seen: 0,
            finalized: false,
            hermitian_defect: 0.0,
        })
    }

    /// Wraps existing row-major data; used by tests and the sketch file reader.
    pub fn from_dense(m: usize, data: Vec<f64>, descriptor: String) -> Result<Self> {
        if data.len() != m * m {
            return Err(Error::Config(format!(
                "dense data length {} != m^2 = {}",
                data.len(),
                m * m
            )));
        }
        Ok(Self {
            m,
            data,
            comp: None,
            descriptor,
            entries_seen: 0,
            finalized: false,
            hermitian_defect: 0.0,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Row-major m x m data.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn entries_seen(&self) -> u64 {
        self.entries_seen
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    /// Max |Q_ij - Q_ji| observed at finalize.
    pub fn hermitian_defect(&self) -> f64 {
        self.hermitian_defect
    }

    #[inline]
    fn add(&mut self, idx: usize, v: f64) {
        match &mut self.comp {
            None => self.data[idx] += v,
            Some(comp) => {
                // Neumaier: bank whatever the rounding dropped, whichever
                // operand was smaller; folded into data at finalize.
                let s = self.data[idx];
                let t = s + v;
                comp[idx] += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
                self.data[idx] = t;
            }
        }
    }

    fn check_open(&self) -> Result<()> {
        if self.finalized {
            return Err(Error::Config("sketch is finalized; no further accumulation".into()));
        }
        Ok(())
    }

    /// Rank-one update Q += value * m_row * m_col^T for one entry of A.
    pub fn accumulate_entry(&mut self, ens: &Ensemble, t: EntryTriple) -> Result<()> {
        self.check_open()?;
        if t.row >= ens.n() || t.col >= ens.n() {
            return Err(Error::Io(format!(
                "entry {} out of range: ({}, {}) with n = {}",
                self.entries_seen + 1,
                t.row,
                t.col,
                ens.n()
            )));
        }
        if !t.value.is_finite() {
            return Err(Error::Io(format!(
                "entry {}: non-finite value",
                self.entries_seen + 1
            )));
        }
        let mut rcol = Vec::new();
        let mut ccol = Vec::new();
        ens.column(t.row, &mut rcol);
        ens.column(t.col, &mut ccol);
        for &(r, a) in &rcol {
            let base = r as usize * self.m;
            let av = a * t.value;
            for &(c, b) in &ccol {
                self.add(base + c as usize, av * b);
            }
        }
        self.entries_seen += 1;
        Ok(())
    }

    /// Update R += (M a_col) m_col^T for one full column of A.
    pub fn accumulate_column(&mut self, ens: &Ensemble, col: u64, values: &[f64]) -> Result<()> {
        self.check_open()?;
        if col >= ens.n() {
            return Err(Error::Io(format!("column {col} out of range with n = {}", ens.n())));
        }
        if values.len() as u64 != ens.n() {
            return Err(Error::Io(format!(
                "column {col}: length {} != n = {}",
                values.len(),
                ens.n()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Io(format!("column {col}: non-finite value at row {pos}")));
        }
        let ma = ens.apply(values);
        let mut mcol = Vec::new();
        ens.column(col, &mut mcol);
        for (r, &y) in ma.data.iter().enumerate() {
            if y == 0.0 {
                continue;
            }
            let base = r * self.m;
            for &(c, b) in &mcol {
                self.add(base + c as usize, y * b);
            }
        }
        self.entries_seen += values.len() as u64;
        Ok(())
    }

    /// Update Q += eigenvalue * (M u)(M u)^T for one factor of A.
    pub fn accumulate_factor(&mut self, ens: &Ensemble, eigenvalue: f64, u: &[(u64, f64)]) -> Result<()> {
        self.check_open()?;
        let mu = ens.apply_sparse(u);
        for (r, &a) in mu.data.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let base = r * self.m;
            let av = eigenvalue * a;
            for (c, &b) in mu.data.iter().enumerate() {
                if b != 0.0 {
                    self.add(base + c, av * b);
                }
            }
        }
        self.entries_seen += u.len() as u64;
        Ok(())
    }

    /// Elementwise sum with a sketch of the same ensemble; both must still be
    /// open. Supports sharded streams.
    pub fn merge(&mut self, other: &Sketch) -> Result<()> {
        self.check_open()?;
        if other.finalized {
            return Err(Error::Config("cannot merge a finalized sketch".into()));
        }
        if self.descriptor != other.descriptor {
            return Err(Error::Config(
                "cannot merge sketches with different ensemble descriptors".into(),
            ));
        }
        for (i, v) in other.data.iter().enumerate() {
            self.add(i, *v);
        }
        if let Some(ocomp) = &other.comp {
            // The shard's banked corrections are part of its sum.
            for (i, v) in ocomp.iter().enumerate() {
                self.add(i, *v);
            }
        }
        self.entries_seen += other.entries_seen;
        Ok(())
    }

    /// Freezes the sketch: verifies Hermitian symmetry within `tol` relative
    /// to the largest entry, then averages Q with its transpose to scrub
    /// accumulation roundoff. A sketch that saw zero entries finalizes to
    /// zero with a warning.
    pub fn finalize(&mut self, tol: f64) -> Result<()> {
        self.check_open()?;
        if self.entries_seen == 0 {
            log::warn!("finalizing a sketch that saw no entries; result is zero");
        }
        if let Some(comp) = self.comp.take() {
            for (d, c) in self.data.iter_mut().zip(&comp) {
                *d += c;
            }
        }
        let scale = self.data.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let mut defect = 0.0f64;
        for r in 0..self.m {
            for c in (r + 1)..self.m {
                let a = self.data[r * self.m + c];
                let b = self.data[c * self.m + r];
                defect = defect.max((a - b).abs());
                let avg = 0.5 * (a + b);
                self.data[r * self.m + c] = avg;
                self.data[c * self.m + r] = avg;
            }
        }
        self.hermitian_defect = defect;
        if defect > tol * scale.max(1e-300) {
            return Err(Error::Numeric(format!(
                "sketch asymmetry {defect:e} exceeds tolerance {tol:e} * {scale:e}; \
                 was the full matrix streamed?"
            )));
        }
        self.finalized = true;
        Ok(())
    }

    /// Writes the header + row-major f64 block format.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        write!(
            w,
            "sketch v1\nm={}\nentries_seen={}\nfinalized={}\nhermitian_defect={:e}\nensemble_begin\n{}ensemble_end\ndata\n",
            self.m, self.entries_seen, self.finalized, self.hermitian_defect, self.descriptor
        )?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn write_to_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads the sketch file format. The data block length must match the
    /// header row count exactly, so allocation is bounded by the input size.
    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let data_tag = b"\ndata\n";
        let split = find_subsequence(&bytes, data_tag)
            .ok_or_else(|| Error::Io("sketch file: missing data marker".into()))?;
        let header = std::str::from_utf8(&bytes[..split])
            .map_err(|_| Error::Io("sketch file: header is not UTF-8".into()))?;
        let block = &bytes[split + data_tag.len()..];

        let mut lines = header.lines().map(|l| l.trim_end_matches('\r'));
        if lines.next() != Some("sketch v1") {
            return Err(Error::Io("sketch file: bad magic".into()));
        }
        let mut m: Option<u64> = None;
        let mut entries_seen: Option<u64> = None;
        let mut finalized: Option<bool> = None;
        let mut defect: Option<f64> = None;
        let mut descriptor = String::new();
        let mut in_ensemble = false;
        let mut saw_ensemble = false;
        for line in lines {
            if in_ensemble {
                if line == "ensemble_end" {
                    in_ensemble = false;
                } else {
                    descriptor.push_str(line);
                    descriptor.push('\n');
                }
                continue;
            }
            if line == "ensemble_begin" {
                if saw_ensemble {
                    return Err(Error::Io("sketch file: duplicate ensemble block".into()));
                }
                in_ensemble = true;
                saw_ensemble = true;
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Io(format!("sketch file: malformed header line {line:?}")))?;
            match key {
                "m" => {
                    m = Some(value.parse().map_err(|_| Error::Io("sketch file: bad m".into()))?)
                }
                "entries_seen" => {
                    entries_seen =
                        Some(value.parse().map_err(|_| Error::Io("sketch file: bad entries_seen".into()))?)
                }
                "finalized" => {
                    finalized =
                        Some(value.parse().map_err(|_| Error::Io("sketch file: bad finalized".into()))?)
                }
                "hermitian_defect" => {
                    let v: f64 =
                        value.parse().map_err(|_| Error::Io("sketch file: bad hermitian_defect".into()))?;
                    if !v.is_finite() {
                        return Err(Error::Io("sketch file: non-finite hermitian_defect".into()));
                    }
                    defect = Some(v);
                }
                other => return Err(Error::Io(format!("sketch file: unknown header key {other}"))),
            }
        }
        if in_ensemble {
            return Err(Error::Io("sketch file: unterminated ensemble block".into()));
        }
        let m = m.ok_or_else(|| Error::Io("sketch file: missing m".into()))?;
        if m > MAX_DENSE_ROWS {
            return Err(Error::Io(format!("sketch file: m = {m} exceeds cap {MAX_DENSE_ROWS}")));
        }
        let m = m as usize;
        let want = m
            .checked_mul(m)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| Error::Io("sketch file: m overflows".into()))?;
        if block.len() != want {
            return Err(Error::Io(format!(
                "sketch file: data block is {} bytes, expected {want}",
                block.len()
            )));
        }
        // The descriptor must parse and agree with the declared row count.
        // Checked from the parsed parameters alone, so a hostile header
        // cannot force an ensemble-sized allocation.
        let desc = parse_descriptor(&descriptor)?;
        if desc.rows() != m as u64 {
            return Err(Error::Io(format!(
                "sketch file: ensemble rows {} != header m {m}",
                desc.rows()
            )));
        }
        let data = block
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect::<Vec<f64>>();
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Io(format!("sketch file: non-finite cell {bad}")));
        }
        Ok(Self {
            m,
            data,
            comp: None,
            descriptor,
            entries_seen: entries_seen.ok_or_else(|| Error::Io("sketch file: missing entries_seen".into()))?,
            finalized: finalized.ok_or_else(|| Error::Io("sketch file: missing finalized".into()))?,
            hermitian_defect: defect.ok_or_else(|| Error::Io("sketch file: missing hermitian_defect".into()))?,
        })
    }

    pub fn read_from_path(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::read_from(&mut f)
    }
}

fn find_subsequence(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Sketches a full entry stream and finalizes.
pub fn sketch_entries(
    ens: &Ensemble,
    entries: impl IntoIterator<Item = Result<EntryTriple>>,
    compensated: bool,
) -> Result<Sketch> {
    let mut sk = Sketch::new(ens, compensated)?;
    for t in entries {
        sk.accumulate_entry(ens, t?)?;
    }
    sk.finalize(1e-8)?;
    Ok(sk)
}

/// Sketches a full column stream and finalizes.
pub fn sketch_columns(
    ens: &Ensemble,
    cols: impl IntoIterator<Item = Result<(u64, Vec<f64>)>>,
    compensated: bool,
) -> Result<Sketch> {
    let mut sk = Sketch::new(ens, compensated)?;
    for c in cols {
        let (col, values) = c?;
        sk.accumulate_column(ens, col, &values)?;
    }
    sk.finalize(1e-8)?;
    Ok(sk)
}

/// Sketches low-rank factors (eigenvalue, sparse eigenvector) and finalizes.
/// This is the fast path for factor-form input: no N x N work at all.
pub fn sketch_lowrank(
    ens: &Ensemble,
    factors: &[(f64, Vec<(u64, f64)>)],
    compensated: bool,
) -> Result<Sketch> {
    let mut sk = Sketch::new(ens, compensated)?;
    for (ev, u) in factors {
        sk.accumulate_factor(ens, *ev, u)?;
    }
    sk.finalize(1e-8)?;
    Ok(sk)
}

/// Factored representation of a low-rank sketch: columns sqrt(eigenvalue) * M u
/// for each factor, so the sketch is B B^T without the m x m storage. Exact
/// for factor streams of any m; negative factor eigenvalues are rejected.
#[derive(Debug, Clone)]
pub struct FactorSketch {
    pub m: u64,
    /// One scaled measurement column per factor.
    pub cols: Vec<Vec<f64>>,
    pub descriptor: String,
}

pub fn sketch_lowrank_factored(ens: &Ensemble, factors: &[(f64, Vec<(u64, f64)>)]) -> Result<FactorSketch> {
    let mut cols = Vec::with_capacity(factors.len());
    for (ev, u) in factors {
        if *ev < 0.0 || !ev.is_finite() {
            return Err(Error::Config(format!(
                "factored sketch requires nonnegative finite eigenvalues, got {ev}"
            )));
        }
        let mut mu = ens.apply_sparse(u);
        let s = ev.sqrt();
        mu.data.iter_mut().for_each(|v| *v *= s);
        cols.push(mu.data);
    }
    Ok(FactorSketch { m: ens.m(), cols, descriptor: ens.descriptor() })
}

/// Streaming CSV entry reader: lines `row,col,value`, 1-based indices.
/// Yields 0-based triples; malformed lines, 0 indices, and non-finite values
/// are errors carrying the line number.
pub fn read_entries_csv(r: impl BufRead) -> impl Iterator<Item = Result<EntryTriple>> {
    r.lines().enumerate().filter_map(|(i, line)| {
        let lineno = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(Error::Io(format!("entries line {lineno}: {e}")))),
        };
        let line = line.trim();
        if line.is_empty() {
            return None;
        }
        Some(parse_entry_line(line, lineno))
    })
}

fn parse_entry_line(line: &str, lineno: usize) -> Result<EntryTriple> {
    let mut parts = line.split(',');
    let (r, c, v) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(r), Some(c), Some(v), None) => (r.trim(), c.trim(), v.trim()),
        _ => return Err(Error::Io(format!("entries line {lineno}: expected row,col,value"))),
    };
    let row: u64 = r
        .parse()
        .map_err(|_| Error::Io(format!("entries line {lineno}: bad row {r:?}")))?;
    let col: u64 = c
        .parse()
        .map_err(|_| Error::Io(format!("entries line {lineno}: bad col {c:?}")))?;
    if row == 0 || col == 0 {
        return Err(Error::Io(format!("entries line {lineno}: indices are 1-based")));
    }
    let value: f64 = v
        .parse()
        .map_err(|_| Error::Io(format!("entries line {lineno}: bad value {v:?}")))?;
    if !value.is_finite() {
        return Err(Error::Io(format!("entries line {lineno}: non-finite value")));
    }
    Ok(EntryTriple { row: row - 1, col: col - 1, value })
}

/// Streaming binary entry reader: 24-byte little-endian records
/// `(u64 row, u64 col, f64 value)`, 1-based indices. Yields 0-based triples;
/// errors carry the record number.
pub fn read_entries_bin(mut r: impl Read) -> impl Iterator<Item = Result<EntryTriple>> {
    let mut record = 0u64;
    let mut done = false;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let mut buf = [0u8; 24];
        let mut filled = 0;
        while filled < 24 {
            match r.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => {
                    done = true;
                    return Some(Err(Error::Io(format!("entries record {}: {e}", record + 1))));
                }
            }
        }
        if filled == 0 {
            return None;
        }
        record += 1;
        if filled < 24 {
            done = true;
            return Some(Err(Error::Io(format!(
                "entries record {record}: truncated ({filled} of 24 bytes)"
            ))));
        }
        let row = u64::from_le_bytes(buf[0..8].try_into().unwrap());
        let col = u64::from_le_bytes(buf[8..16].try_into().unwrap());
        let value = f64::from_le_bytes(buf[16..24].try_into().unwrap());
        if row == 0 || col == 0 {
            done = true;
            return Some(Err(Error::Io(format!("entries record {record}: indices are 1-based"))));
        }
        if !value.is_finite() {
            done = true;
            return Some(Err(Error::Io(format!("entries record {record}: non-finite value"))));
        }
        Some(Ok(EntryTriple { row: row - 1, col: col - 1, value }))
    })
}

/// Writes 0-based triples as 1-based CSV.
pub fn write_entries_csv(w: &mut impl Write, entries: &[EntryTriple]) -> Result<()> {
    for t in entries {
        writeln!(w, "{},{},{}", t.row + 1, t.col + 1, t.value)?;
    }
    Ok(())
}

/// Writes 0-based triples as 1-based binary records.
pub fn write_entries_bin(w: &mut impl Write, entries: &[EntryTriple]) -> Result<()> {
    for t in entries {
        w.write_all(&(t.row + 1).to_le_bytes())?;
        w.write_all(&(t.col + 1).to_le_bytes())?;
        w.write_all(&t.value.to_le_bytes())?;
    }
    Ok(())
}
