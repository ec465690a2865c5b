//! Measurement ensembles: an m x N operator `M` with unit-norm columns that
//! compresses length-N vectors to length m.
//!
//! Two constructions are provided:
//!
//! * **Coherent**: a deterministic sparse matrix built as the column-wise
//!   Kronecker product of a low-coherence binary matrix `W` (columns indexed
//!   by polynomials of degree <= d over the prime field of size q, one per
//!   matrix column, with a one at row `i*q + P_j(i)` for each of the first K
//!   field points i) with a binary indexing matrix whose column j encodes
//!   j-1 in binary behind an always-on row, extended by bitwise complements.
//!   Supports sublinear-time decoding.
//! * **Hadamard**: a subsampled randomized Hadamard transform, m rows of the
//!   unitary Hadamard matrix sampled uniformly with replacement, with a fast
//!   O(N log N) apply/adjoint. Supports iterative decoding.
//!
//! Both constructions post-multiply by a random +-1 diagonal derived from a
//! counter-based hash of `(seed, column)`, so any column can be generated out
//! of order without storing the diagonal. Ensembles serialize to small
//! key=value descriptors that rebuild the operator bit for bit.

use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Largest prime field size accepted; keeps the formal row count q^2 bounded.
pub const MAX_FIELD: u64 = 65_521;
/// Largest row count an ensemble will be built with (vectors of this length
/// are allocated by `apply`).
pub const MAX_ROWS: u64 = 1 << 28;
/// Largest ambient dimension accepted.
pub const MAX_DIM: u64 = 1 << 48;

/// Ceiling of log2(n) for n >= 1; 0 for n = 1.
pub fn ceil_log2(n: u64) -> u32 {
    assert!(n >= 1, "ceil_log2 of 0");
    if n == 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// Deterministic +-1 from a counter-based hash of (seed, counter); lets any
/// diagonal entry be generated out of order in O(1) memory.
pub fn rademacher_sign(seed: u64, counter: u64) -> f64 {
    // splitmix64: golden-ratio increment then finalizer.
    let mut z = seed.wrapping_add(counter.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    if z >> 63 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut f = 3;
    while f * f <= n {
        if n % f == 0 {
            return false;
        }
        f += 2;
    }
    true
}

/// Smallest prime >= n (n <= MAX_FIELD).
pub fn next_prime(n: u64) -> Result<u64> {
    let mut p = n.max(2);
    while p <= MAX_FIELD {
        if is_prime(p) {
            return Ok(p);
        }
        p += 1;
    }
    Err(Error::Config(format!("no prime in [{n}, {MAX_FIELD}]")))
}

/// Binary indexing matrix with 1 + ceil(log2 n) rows: column j (1-indexed)
/// is an always-on row followed by the bits of j-1, least significant first.
/// Row-major; intended as a small test oracle, not a hot path.
pub fn bit_test_matrix(n: u64) -> Vec<Vec<u8>> {
    let rows = 1 + ceil_log2(n) as usize;
    let mut out = vec![vec![0u8; n as usize]; rows];
    for j in 0..n as usize {
        let mask = column_code(j as u64, rows as u32 - 1);
        for (t, row) in out.iter_mut().enumerate() {
            row[j] = ((mask >> t) & 1) as u8;
        }
    }
    out
}

/// Extended variant: the indexing matrix stacked over its bitwise complement,
/// 2(1 + ceil(log2 n)) rows. Every column has exactly 1 + ceil(log2 n) ones.
pub fn bit_test_matrix_extended(n: u64) -> Vec<Vec<u8>> {
    let top = bit_test_matrix(n);
    let mut out = top.clone();
    for row in &top {
        out.push(row.iter().map(|&b| 1 - b).collect());
    }
    out
}

/// Column code for 0-based column j0: bit 0 is the always-on row, bit 1+t is
/// bit t of j0. `bits` is ceil(log2 n).
fn column_code(j0: u64, bits: u32) -> u64 {
    debug_assert!(bits < 63);
    1 | (j0 << 1) & ((1u64 << (bits + 1)) - 1 | 1)
}

/// Parameters of the coherent construction.
///
/// Derived sizes: the sparse factor `W` has q^2 formal rows (rows with first
/// field point >= k are identically zero when k < q), the indexing factor has
/// 2(1 + ceil(log2 n)) rows, and m is their product. Any two distinct W
/// columns share at most d rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoherentParams {
    /// Ambient dimension N.
    pub n: u64,
    /// Ones per W column; also the number of value candidates per decoded index.
    pub k: u64,
    /// Prime field size, k <= q.
    pub q: u64,
    /// Polynomial degree bound; q^(d+1) >= n so columns get distinct polynomials.
    pub d: u32,
    /// Seed of the +-1 diagonal.
    pub seed: u64,
}

impl CoherentParams {
    pub fn new(n: u64, k: u64, q: u64, d: u32, seed: u64) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::Config(format!("n = {n} out of range [1, {MAX_DIM}]")));
        }
        if q > MAX_FIELD || !is_prime(q) {
            return Err(Error::Config(format!("q = {q} is not a prime <= {MAX_FIELD}")));
        }
        if k == 0 || k > q {
            return Err(Error::Config(format!("k = {k} must satisfy 1 <= k <= q = {q}")));
        }
        if d >= 64 {
            return Err(Error::Config(format!("d = {d} out of range")));
        }
        // q^(d+1) >= n, checked without overflow.
        let mut pow: u128 = 1;
        let mut enough = false;
        for _ in 0..=d {
            pow = pow.saturating_mul(q as u128);
            if pow >= n as u128 {
                enough = true;
                break;
            }
        }
        if !enough {
            return Err(Error::Config(format!(
                "q^(d+1) = {q}^{} < n = {n}: columns would repeat polynomials",
                d + 1
            )));
        }
        let p = Self { n, k, q, d, seed };
        if p.rows() > MAX_ROWS {
            return Err(Error::Config(format!(
                "m = {} exceeds the row cap {MAX_ROWS}",
                p.rows()
            )));
        }
        Ok(p)
    }

    /// Smallest prime q >= k and smallest valid degree for n.
    pub fn auto(n: u64, k: u64, seed: u64) -> Result<Self> {
        let q = next_prime(k)?;
        let mut d = 0u32;
        let mut pow = q as u128;
        while pow < n as u128 {
            pow = pow.saturating_mul(q as u128);
            d += 1;
        }
        Self::new(n, k, q, d, seed)
    }

    /// Smallest k whose derived parameters carry the recovery guarantee
    /// k >= 4*d*s_max + 1 for s_max-sparse targets.
    pub fn for_sparsity(n: u64, s_max: u64, seed: u64) -> Result<Self> {
        let mut k = 1;
        loop {
            let p = Self::auto(n, k, seed)?;
            if p.supports_sparsity(s_max) {
                return Ok(p);
            }
            // Jump straight to the bound for the current degree; the degree
            // only shrinks as k grows, so this terminates.
            k = (4 * p.d as u64 * s_max + 1).max(k + 1);
        }
    }

    /// Formal rows of the sparse factor W.
    pub fn w_rows(&self) -> u64 {
        self.q * self.q
    }

    /// Rows of the binary indexing factor including complements.
    pub fn bit_rows(&self) -> u64 {
        2 * (1 + ceil_log2(self.n) as u64)
    }

    /// Total rows m.
    pub fn rows(&self) -> u64 {
        self.w_rows() * self.bit_rows()
    }

    /// Whether the decoding guarantee holds for s-sparse targets: the
    /// coherence budget requires k >= 4*d*s + 1.
    pub fn supports_sparsity(&self, s: u64) -> bool {
        self.k >= 4 * self.d as u64 * s + 1
    }

    pub fn descriptor(&self) -> String {
        format!(
            "construction=coherent\nn={}\nk={}\nq={}\nd={}\nseed={}\n",
            self.n, self.k, self.q, self.d, self.seed
        )
    }
}

/// Parameters of the subsampled randomized Hadamard construction. The m row
/// indices are regenerated from `rows_seed`, so the descriptor stays small.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HadamardParams {
    /// Ambient dimension N.
    pub n: u64,
    /// Power-of-two padded dimension.
    pub n_pad: u64,
    /// Number of sampled rows.
    pub m: u64,
    /// Seed of the row sampler.
    pub rows_seed: u64,
    /// Seed of the +-1 diagonal.
    pub seed: u64,
}

impl HadamardParams {
    pub fn new(n: u64, m: u64, rows_seed: u64, seed: u64) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(Error::Config(format!("n = {n} out of range [1, {MAX_DIM}]")));
        }
        let n_pad = 1u64 << ceil_log2(n);
        if m == 0 || m > MAX_ROWS {
            return Err(Error::Config(format!("m = {m} out of range [1, {MAX_ROWS}]")));
        }
        Ok(Self { n, n_pad, m, rows_seed, seed })
    }

    fn validate(&self) -> Result<()> {
        let canon = Self::new(self.n, self.m, self.rows_seed, self.seed)?;
        if canon.n_pad != self.n_pad {
            return Err(Error::Config(format!(
                "n_pad = {} is not the power of two for n = {}",
                self.n_pad, self.n
            )));
        }
        Ok(())
    }

    pub fn descriptor(&self) -> String {
        format!(
            "construction=hadamard\nn={}\nn_pad={}\nm={}\nrows_seed={}\nseed={}\n",
            self.n, self.n_pad, self.m, self.rows_seed, self.seed
        )
    }
}

/// A length-m measurement vector tagged with the descriptor of the ensemble
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    pub data: Vec<f64>,
    pub descriptor: String,
}

/// The coherent ensemble, ready to apply. Columns are generated on the fly;
/// nothing of size m or N is stored.
#[derive(Debug, Clone)]
pub struct CoherentEnsemble {
    params: CoherentParams,
    /// 1 + ceil(log2 n): ones per indexing column.
    code_rows: u32,
    /// 1 / sqrt(k * code_rows): entry magnitude making columns unit norm.
    scale: f64,
}

impl CoherentEnsemble {
    pub fn new(params: CoherentParams) -> Self {
        let code_rows = 1 + ceil_log2(params.n);
        let scale = 1.0 / ((params.k * code_rows as u64) as f64).sqrt();
        Self { params, code_rows, scale }
    }

    pub fn params(&self) -> &CoherentParams {
        &self.params
    }

    pub fn n(&self) -> u64 {
        self.params.n
    }

    pub fn m(&self) -> u64 {
        self.params.rows()
    }

    /// Ones per indexing column: 1 + ceil(log2 n).
    pub fn code_rows(&self) -> u32 {
        self.code_rows
    }

    /// Entry magnitude 1/sqrt(k(1 + ceil(log2 n))).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Diagonal sign of column j (0-based).
    pub fn sign(&self, j: u64) -> f64 {
        rademacher_sign(self.params.seed, j)
    }

    /// P_j(x) over GF(q): coefficients are the base-q digits of j, constant
    /// term first.
    pub fn poly_eval(&self, j: u64, x: u64) -> u64 {
        let q = self.params.q;
        let mut digits = [0u64; 64];
        let deg = self.params.d as usize;
        let mut v = j;
        for digit in digits.iter_mut().take(deg + 1) {
            *digit = v % q;
            v /= q;
        }
        let mut acc = digits[deg];
        for i in (0..deg).rev() {
            acc = (acc * x + digits[i]) % q;
        }
        acc
    }

    /// Row of the sparse factor W holding the one of column j at field point i.
    pub fn w_row(&self, j: u64, i: u64) -> u64 {
        i * self.params.q + self.poly_eval(j, i)
    }

    /// Visits the k(1 + ceil(log2 n)) nonzeros of column j in row order
    /// within each field point.
    pub fn for_each_nonzero(&self, j: u64, mut f: impl FnMut(u64, f64)) {
        debug_assert!(j < self.params.n);
        let val = self.scale * self.sign(j);
        let code = column_code(j, self.code_rows - 1);
        let block = self.params.bit_rows();
        let rows_half = self.code_rows as u64;
        for i in 0..self.params.k {
            let base = self.w_row(j, i) * block;
            for t in 0..rows_half {
                // Set bit t of the code lands in the top half, a cleared bit
                // in the complement half.
                if (code >> t) & 1 == 1 {
                    f(base + t, val);
                } else {
                    f(base + rows_half + t, val);
                }
            }
        }
    }
}

/// The subsampled randomized Hadamard ensemble. Stores only the m sampled
/// row indices.
#[derive(Debug, Clone)]
pub struct HadamardEnsemble {
    params: HadamardParams,
    rows: Vec<u64>,
    /// 1/sqrt(m): entry magnitude making columns unit norm.
    scale: f64,
}

impl HadamardEnsemble {
    pub fn new(params: HadamardParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.rows_seed);
        let rows = (0..params.m).map(|_| rng.gen_range(0..params.n_pad)).collect();
        let scale = 1.0 / (params.m as f64).sqrt();
        Self { params, rows, scale }
    }

    pub fn params(&self) -> &HadamardParams {
        &self.params
    }

    pub fn n(&self) -> u64 {
        self.params.n
    }

    pub fn m(&self) -> u64 {
        self.params.m
    }

    pub fn sampled_rows(&self) -> &[u64] {
        &self.rows
    }

    pub fn sign(&self, j: u64) -> f64 {
        rademacher_sign(self.params.seed, j)
    }

    /// Visits all m entries of column j: M[i, j] = +-1/sqrt(m) with the sign
    /// of the Hadamard entry at (rows[i], j) times the diagonal sign.
    pub fn for_each_nonzero(&self, j: u64, mut f: impl FnMut(u64, f64)) {
        debug_assert!(j < self.params.n);
        let base = self.scale * self.sign(j);
        for (i, &r) in self.rows.iter().enumerate() {
            let v = if (r & j).count_ones() % 2 == 0 { base } else { -base };
            f(i as u64, v);
        }
    }

    /// Fast apply via the padded transform: O(N_pad log N_pad).
    pub fn apply_dense(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len() as u64, self.params.n, "input length != n");
        let mut buf = vec![0.0; self.params.n_pad as usize];
        for (j, &x) in v.iter().enumerate() {
            buf[j] = x * self.sign(j as u64);
        }
        fwht(&mut buf);
        self.rows.iter().map(|&r| buf[r as usize] * self.scale).collect()
    }

    /// Adjoint M* y, exact transpose of `apply_dense` (duplicate sampled rows
    /// accumulate).
    pub fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len() as u64, self.params.m, "input length != m");
        let mut buf = vec![0.0; self.params.n_pad as usize];
        for (i, &r) in self.rows.iter().enumerate() {
            buf[r as usize] += y[i];
        }
        fwht(&mut buf);
        (0..self.params.n as usize)
            .map(|j| buf[j] * self.scale * self.sign(j as u64))
            .collect()
    }
}

/// In-place unnormalized Walsh-Hadamard butterfly; length must be a power of
/// two. The unitary transform is this divided by sqrt(len).
pub fn fwht(buf: &mut [f64]) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "fwht length must be a power of two");
    let mut h = 1;
    while h < n {
        for chunk in buf.chunks_exact_mut(2 * h) {
            let (lo, hi) = chunk.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// A built measurement ensemble of either construction.
#[derive(Debug, Clone)]
pub enum Ensemble {
    Coherent(CoherentEnsemble),
    Hadamard(HadamardEnsemble),
}

impl Ensemble {
    pub fn coherent(params: CoherentParams) -> Self {
        Ensemble::Coherent(CoherentEnsemble::new(params))
    }

    pub fn hadamard(params: HadamardParams) -> Self {
        Ensemble::Hadamard(HadamardEnsemble::new(params))
    }

    /// Ambient dimension N.
    pub fn n(&self) -> u64 {
        match self {
            Ensemble::Coherent(e) => e.n(),
            Ensemble::Hadamard(e) => e.n(),
        }
    }

    /// Measurement dimension m.
    pub fn m(&self) -> u64 {
        match self {
            Ensemble::Coherent(e) => e.m(),
            Ensemble::Hadamard(e) => e.m(),
        }
    }

    /// Diagonal sign of column j.
    pub fn sign(&self, j: u64) -> f64 {
        match self {
            Ensemble::Coherent(e) => e.sign(j),
            Ensemble::Hadamard(e) => e.sign(j),
        }
    }

    /// Visits the nonzeros of column j (all m entries for Hadamard).
    pub fn for_each_nonzero(&self, j: u64, f: impl FnMut(u64, f64)) {
        match self {
            Ensemble::Coherent(e) => e.for_each_nonzero(j, f),
            Ensemble::Hadamard(e) => e.for_each_nonzero(j, f),
        }
    }

    /// Column j as (row, value) pairs sorted by row.
    pub fn column(&self, j: u64, out: &mut Vec<(u64, f64)>) {
        out.clear();
        self.for_each_nonzero(j, |r, v| out.push((r, v)));
        out.sort_unstable_by_key(|e| e.0);
    }

    /// M v for sparse v given as (index, value) pairs; cost is
    /// O(nnz * k * log n) coherent, O(N_pad log N_pad) Hadamard.
    pub fn apply_sparse(&self, entries: &[(u64, f64)]) -> MeasurementVector {
        let data = match self {
            Ensemble::Coherent(e) => {
                let mut y = vec![0.0; e.m() as usize];
                for &(j, x) in entries {
                    assert!(j < e.n(), "index {j} out of range");
                    e.for_each_nonzero(j, |r, v| y[r as usize] += v * x);
                }
                y
            }
            Ensemble::Hadamard(e) => {
                let mut buf = vec![0.0; e.params.n_pad as usize];
                for &(j, x) in entries {
                    assert!(j < e.n(), "index {j} out of range");
                    buf[j as usize] = x * e.sign(j);
                }
                fwht(&mut buf);
                e.rows.iter().map(|&r| buf[r as usize] * e.scale).collect()
            }
        };
        MeasurementVector { data, descriptor: self.descriptor() }
    }

    /// M v for dense v of length N.
    pub fn apply(&self, v: &[f64]) -> MeasurementVector {
        match self {
            Ensemble::Coherent(_) => {
                let entries: Vec<(u64, f64)> = v
                    .iter()
                    .enumerate()
                    .filter(|(_, &x)| x != 0.0)
                    .map(|(j, &x)| (j as u64, x))
                    .collect();
                self.apply_sparse(&entries)
            }
            Ensemble::Hadamard(e) => MeasurementVector {
                data: e.apply_dense(v),
                descriptor: self.descriptor(),
            },
        }
    }

    /// M* y of length N. Fast for Hadamard; column-by-column for coherent
    /// (O(N k log n), intended for moderate N).
    pub fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Ensemble::Coherent(e) => {
                assert_eq!(y.len() as u64, e.m(), "input length != m");
                let mut out = vec![0.0; e.n() as usize];
                for (j, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    e.for_each_nonzero(j as u64, |r, v| acc += v * y[r as usize]);
                    *o = acc;
                }
                out
            }
            Ensemble::Hadamard(e) => e.adjoint(y),
        }
    }

    /// Serialized key=value descriptor; `parse_descriptor` + `build` round-trip
    /// to an identical operator.
    pub fn descriptor(&self) -> String {
        match self {
            Ensemble::Coherent(e) => e.params.descriptor(),
            Ensemble::Hadamard(e) => e.params.descriptor(),
        }
    }
}

/// Parsed but not yet built ensemble parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnsembleDescriptor {
    Coherent(CoherentParams),
    Hadamard(HadamardParams),
}

impl EnsembleDescriptor {
    pub fn build(&self) -> Ensemble {
        match self {
            EnsembleDescriptor::Coherent(p) => Ensemble::coherent(p.clone()),
            EnsembleDescriptor::Hadamard(p) => Ensemble::hadamard(p.clone()),
        }
    }

    pub fn serialize(&self) -> String {
        match self {
            EnsembleDescriptor::Coherent(p) => p.descriptor(),
            EnsembleDescriptor::Hadamard(p) => p.descriptor(),
        }
    }

    /// Rows the built ensemble will have, without paying for the build.
    pub fn rows(&self) -> u64 {
        match self {
            EnsembleDescriptor::Coherent(p) => p.rows(),
            EnsembleDescriptor::Hadamard(p) => p.m,
        }
    }
}

/// Parses a key=value descriptor block. All fields are validated; unknown
/// constructions, missing or duplicate or unknown keys, and invalid sizes are
/// rejected.
pub fn parse_descriptor(text: &str) -> Result<EnsembleDescriptor> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Io(format!("descriptor line {}: missing '='", lineno + 1)))?;
        if pairs.iter().any(|(k, _)| k == key) {
            return Err(Error::Io(format!("descriptor: duplicate key {key}")));
        }
        pairs.push((key.to_string(), value.to_string()));
    }
    let get = |key: &str| -> Result<&str> {
        pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Io(format!("descriptor: missing key {key}")))
    };
    let int = |key: &str| -> Result<u64> {
        get(key)?
            .parse::<u64>()
            .map_err(|_| Error::Io(format!("descriptor: {key} is not a valid integer")))
    };
    let check_keys = |allowed: &[&str]| -> Result<()> {
        for (k, _) in &pairs {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Io(format!("descriptor: unknown key {k}")));
            }
        }
        Ok(())
    };
    match get("construction")? {
        "coherent" => {
            check_keys(&["construction", "n", "k", "q", "d", "seed"])?;
            let d = int("d")?;
            if d > 63 {
                return Err(Error::Io(format!("descriptor: d = {d} out of range")));
            }
            let params = CoherentParams::new(int("n")?, int("k")?, int("q")?, d as u32, int("seed")?)
                .map_err(|e| Error::Io(e.to_string()))?;
            Ok(EnsembleDescriptor::Coherent(params))
        }
        "hadamard" => {
            check_keys(&["construction", "n", "n_pad", "m", "rows_seed", "seed"])?;
            let params = HadamardParams {
                n: int("n")?,
                n_pad: int("n_pad")?,
                m: int("m")?,
                rows_seed: int("rows_seed")?,
                seed: int("seed")?,
            };
            params.validate().map_err(|e| Error::Io(e.to_string()))?;
            Ok(EnsembleDescriptor::Hadamard(params))
        }
        other => Err(Error::Io(format!("descriptor: unknown construction {other:?}"))),
    }
}
