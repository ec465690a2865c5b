//! Run configuration: a flat key=value model shared by config files, --set
//! overrides, and dedicated CLI flags. Every knob of the pipeline lives here
//! so a run can be reproduced from its serialized config alone.

use crate::measure::{ceil_log2, CoherentParams, Ensemble, HadamardParams};
use crate::synth::TestMatrixSpec;
use crate::{Error, Result};

/// Which ensemble construction to measure with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleKind {
    Coherent,
    Hadamard,
}

/// How to recover sparse eigenvectors from sketch eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderKind {
    Sublinear,
    Cosamp,
}

/// Whether the sketch is held as a dense m x m matrix or in factor form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchMode {
    /// Dense below `dense_limit` rows, factored above.
    Auto,
    Dense,
    Factored,
}

/// Entry stream file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryFormat {
    Csv,
    Bin,
}

/// Everything a run needs. Field semantics follow the library modules; the
/// `Option` fields derive their values from the rest when absent and print
/// as `auto` in serialized form.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Ambient dimension N.
    pub n: u64,
    /// Planted rank.
    pub rank: u64,
    /// Planted nonzeros per eigenvector; also the decoder's sparsity target.
    pub sparsity: u64,
    /// Planted eigenvalue ratio.
    pub decay: f64,
    /// Planted eigenvalue scale.
    pub scale: f64,
    /// Master seed; trials derive their own streams from it.
    pub seed: u64,
    /// Independent pipeline repetitions.
    pub trials: u64,
    /// Eigenpairs to extract; defaults to `rank`.
    pub ell: Option<u64>,
    pub ensemble: EnsembleKind,
    /// Coherent: repetitions k. Defaults to the smallest k supporting
    /// `sparsity`.
    pub k: Option<u64>,
    /// Coherent: field size q (prime >= k).
    pub q: Option<u64>,
    /// Coherent: polynomial degree d.
    pub d: Option<u32>,
    /// Hadamard: measurement rows. Defaults to 8 * sparsity * ceil(log2 n).
    pub m: Option<u64>,
    /// Hadamard: row subsampling seed.
    pub rows_seed: u64,
    pub decoder: DecoderKind,
    /// Iterative decoder halting threshold.
    pub eta: f64,
    /// Iterative decoder iteration cap.
    pub max_iters: u64,
    /// Worker threads for multi-trial runs; 0 means all cores.
    pub threads: u64,
    pub out_dir: String,
    /// Entry stream format when emitting entries.
    pub format: EntryFormat,
    pub sketch_mode: SketchMode,
    /// Dense/factored crossover for `sketch_mode = auto`.
    pub dense_limit: u64,
    /// Compensated accumulation in dense sketches.
    pub compensated: bool,
    /// Also write the densified matrix as an entry stream when generating.
    pub emit_entries: bool,
    /// Which field the aggregate table uses as its x column.
    pub aggregate_x: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 1024,
            rank: 5,
            sparsity: 10,
            decay: 0.5,
            scale: 1.0,
            seed: 0,
            trials: 1,
            ell: None,
            ensemble: EnsembleKind::Coherent,
            k: None,
            q: None,
            d: None,
            m: None,
            rows_seed: 1,
            decoder: DecoderKind::Sublinear,
            eta: 1e-6,
            max_iters: 50,
            threads: 0,
            out_dir: "out".into(),
            format: EntryFormat::Csv,
            sketch_mode: SketchMode::Auto,
            dense_limit: 4000,
            compensated: false,
            emit_entries: false,
            aggregate_x: "sparsity".into(),
        }
    }
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse().map_err(|_| Error::Config(format!("{key}: expected an unsigned integer, got {v:?}")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 =
        v.parse().map_err(|_| Error::Config(format!("{key}: expected a number, got {v:?}")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{key}: must be finite, got {v:?}")));
    }
    Ok(x)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn parse_opt<T>(v: &str, f: impl FnOnce(&str) -> Result<T>) -> Result<Option<T>> {
    if v == "auto" {
        Ok(None)
    } else {
        f(v).map(Some)
    }
}

impl RunConfig {
    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "n" => self.n = parse_u64(key, v)?,
            "rank" => self.rank = parse_u64(key, v)?,
            "sparsity" => self.sparsity = parse_u64(key, v)?,
            "decay" => self.decay = parse_f64(key, v)?,
            "scale" => self.scale = parse_f64(key, v)?,
            "seed" => self.seed = parse_u64(key, v)?,
            "trials" => self.trials = parse_u64(key, v)?,
            "ell" => self.ell = parse_opt(v, |v| parse_u64(key, v))?,
            "ensemble" => {
                self.ensemble = match v {
                    "coherent" => EnsembleKind::Coherent,
                    "hadamard" => EnsembleKind::Hadamard,
                    _ => {
                        return Err(Error::Config(format!(
                            "ensemble: expected coherent or hadamard, got {v:?}"
                        )))
                    }
                }
            }
            "k" => self.k = parse_opt(v, |v| parse_u64(key, v))?,
            "q" => self.q = parse_opt(v, |v| parse_u64(key, v))?,
            "d" => {
                self.d = parse_opt(v, |v| {
                    v.parse::<u32>()
                        .map_err(|_| Error::Config(format!("d: expected a small integer, got {v:?}")))
                })?
            }
            "m" => self.m = parse_opt(v, |v| parse_u64(key, v))?,
            "rows_seed" => self.rows_seed = parse_u64(key, v)?,
            "decoder" => {
                self.decoder = match v {
                    "sublinear" => DecoderKind::Sublinear,
                    "cosamp" => DecoderKind::Cosamp,
                    _ => {
                        return Err(Error::Config(format!(
                            "decoder: expected sublinear or cosamp, got {v:?}"
                        )))
                    }
                }
            }
            "eta" => self.eta = parse_f64(key, v)?,
            "max_iters" => self.max_iters = parse_u64(key, v)?,
            "threads" => self.threads = parse_u64(key, v)?,
            "out_dir" => {
                // The value is echoed into config.txt, where '#' starts a
                // comment and a newline ends the record.
                if v.contains('#') || v.contains('\n') {
                    return Err(Error::Config(format!(
                        "out_dir: '#' and newlines are not representable, got {v:?}"
                    )));
                }
                self.out_dir = v.to_string();
            }
            "format" => {
                self.format = match v {
                    "csv" => EntryFormat::Csv,
                    "bin" => EntryFormat::Bin,
                    _ => return Err(Error::Config(format!("format: expected csv or bin, got {v:?}"))),
                }
            }
            "sketch_mode" => {
                self.sketch_mode = match v {
                    "auto" => SketchMode::Auto,
                    "dense" => SketchMode::Dense,
                    "factored" => SketchMode::Factored,
                    _ => {
                        return Err(Error::Config(format!(
                            "sketch_mode: expected auto, dense, or factored, got {v:?}"
                        )))
                    }
                }
            }
            "dense_limit" => self.dense_limit = parse_u64(key, v)?,
            "compensated" => self.compensated = parse_bool(key, v)?,
            "emit_entries" => self.emit_entries = parse_bool(key, v)?,
            "aggregate_x" => {
                if v != "sparsity" && v != "rows" {
                    return Err(Error::Config(format!(
                        "aggregate_x: expected sparsity or rows, got {v:?}"
                    )));
                }
                self.aggregate_x = v.to_string();
            }
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Cross-field validation; the ensemble and matrix constructors do their
    /// own range checking on top.
    pub fn validate(&self) -> Result<()> {
        self.matrix_spec().validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if let Some(ell) = self.ell {
            if ell == 0 {
                return Err(Error::Config("ell must be at least 1 (or auto)".into()));
            }
            if ell > self.rank {
                return Err(Error::Config(format!(
                    "ell = {ell} exceeds the planted rank {}; nothing to compare the extra \
                     eigenpairs against",
                    self.rank
                )));
            }
        }
        if self.ensemble == EnsembleKind::Hadamard && self.decoder == DecoderKind::Sublinear {
            return Err(Error::Config(
                "the sublinear decoder needs the coherent ensemble; \
                 set decoder=cosamp or ensemble=coherent"
                    .into(),
            ));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("eta = {} must be positive", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if self.dense_limit == 0 {
            return Err(Error::Config("dense_limit must be at least 1".into()));
        }
        Ok(())
    }

    pub fn ell(&self) -> u64 {
        self.ell.unwrap_or(self.rank)
    }

    pub fn matrix_spec(&self) -> TestMatrixSpec {
        TestMatrixSpec {
            n: self.n,
            r: self.rank,
            s: self.sparsity,
            decay: self.decay,
            scale: self.scale,
            seed: self.seed,
        }
    }

    /// Builds the measurement ensemble with the given diagonal seed (and row
    /// seed offset for Hadamard subsampling).
    pub fn build_ensemble_seeded(&self, seed: u64, rows_seed: u64) -> Result<Ensemble> {
        match self.ensemble {
            EnsembleKind::Coherent => {
                let params = match (self.k, self.q, self.d) {
                    (None, None, None) => CoherentParams::for_sparsity(self.n, self.sparsity, seed)?,
                    (Some(k), None, None) => CoherentParams::auto(self.n, k, seed)?,
                    (k, q, d) => {
                        let q = match q {
                            Some(q) => q,
                            None => crate::measure::next_prime(k.unwrap_or(2))?,
                        };
                        let k = k.unwrap_or(q);
                        let d = match d {
                            Some(d) => d,
                            None => {
                                // Smallest degree with q^(d+1) >= n.
                                let mut d = 0u32;
                                let mut cover = q as u128;
                                while cover < self.n as u128 {
                                    d += 1;
                                    cover = cover.saturating_mul(q as u128);
                                }
                                d
                            }
                        };
                        CoherentParams::new(self.n, k, q, d, seed)?
                    }
                };
                Ok(Ensemble::coherent(params))
            }
            EnsembleKind::Hadamard => {
                let m = self
                    .m
                    .unwrap_or_else(|| 8 * self.sparsity * ceil_log2(self.n).max(1) as u64);
                Ok(Ensemble::hadamard(HadamardParams::new(self.n, m, rows_seed, seed)?))
            }
        }
    }

    pub fn build_ensemble(&self) -> Result<Ensemble> {
        self.build_ensemble_seeded(self.seed, self.rows_seed)
    }

    /// Stable key=value form that parses back to an equal config.
    pub fn serialize(&self) -> String {
        let opt_u = |v: Option<u64>| v.map_or("auto".into(), |x| x.to_string());
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        put("n", self.n.to_string());
        put("rank", self.rank.to_string());
        put("sparsity", self.sparsity.to_string());
        put("decay", self.decay.to_string());
        put("scale", self.scale.to_string());
        put("seed", self.seed.to_string());
        put("trials", self.trials.to_string());
        put("ell", opt_u(self.ell));
        put(
            "ensemble",
            match self.ensemble {
                EnsembleKind::Coherent => "coherent".into(),
                EnsembleKind::Hadamard => "hadamard".into(),
            },
        );
        put("k", opt_u(self.k));
        put("q", opt_u(self.q));
        put("d", self.d.map_or("auto".into(), |x| x.to_string()));
        put("m", opt_u(self.m));
        put("rows_seed", self.rows_seed.to_string());
        put(
            "decoder",
            match self.decoder {
                DecoderKind::Sublinear => "sublinear".into(),
                DecoderKind::Cosamp => "cosamp".into(),
            },
        );
        put("eta", self.eta.to_string());
        put("max_iters", self.max_iters.to_string());
        put("threads", self.threads.to_string());
        put("out_dir", self.out_dir.clone());
        put(
            "format",
            match self.format {
                EntryFormat::Csv => "csv".into(),
                EntryFormat::Bin => "bin".into(),
            },
        );
        put(
            "sketch_mode",
            match self.sketch_mode {
                SketchMode::Auto => "auto".into(),
                SketchMode::Dense => "dense".into(),
                SketchMode::Factored => "factored".into(),
            },
        );
        put("dense_limit", self.dense_limit.to_string());
        put("compensated", self.compensated.to_string());
        put("emit_entries", self.emit_entries.to_string());
        put("aggregate_x", self.aggregate_x.clone());
        s
    }
}

/// Parses a config file: `key=value` lines, `#` comments, no duplicates.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = std::collections::BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("config line {}: expected key=value, got {raw:?}", i + 1))
        })?;
        let key = key.trim();
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!("config line {}: duplicate key {key:?}", i + 1)));
        }
        cfg.apply_override(key, value)
            .map_err(|e| Error::Config(format!("config line {}: {e}", i + 1)))?;
    }
    Ok(cfg)
}
