//! Command implementations behind the binary, plus the multi-trial synthetic
//! experiment driver. Every command reads its knobs from a `RunConfig` and
//! writes deterministic artifacts under `out_dir`, so reruns with one config
//! produce byte-identical files.

use crate::config::{DecoderKind, RunConfig, SketchMode};
use crate::decode::{decode_cosamp, decode_sublinear, write_sparse_csv, SparseVector};
use crate::eig::{
    read_eigenpairs_csv, relative_gaps, top_eigs, top_eigs_factored, write_eigenpairs_csv,
    EigenPair,
};
use crate::measure::{parse_descriptor, Ensemble};
use crate::metrics::{
    aggregate, evaluate_trial, write_aggregate, write_error_records, ErrorRecord,
};
use crate::stream::{
    read_entries_bin, read_entries_csv, sketch_entries, sketch_lowrank, sketch_lowrank_factored,
    write_entries_bin, write_entries_csv, Sketch,
};
use crate::synth::{generate, read_ground_truth, write_ground_truth};
use crate::{Error, Result};
use rayon::prelude::*;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// What the sketch command is fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchInputKind {
    /// CSV lines `row,col,value`, 1-based.
    EntriesCsv,
    /// 24-byte little-endian records `(row, col, value)`, 1-based.
    EntriesBin,
    /// A ground truth directory; sketches its factors directly.
    Factors,
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.out_dir).join(name)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Error::Io(format!("{}: {e}", cfg.out_dir)))
}

fn write_file(path: &Path, f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>) -> Result<()> {
    let file =
        std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Plants a ground truth under `out_dir/truth`; with `emit_entries`, also
/// writes the densified matrix as an entry stream for the sketch command.
pub fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let gt = generate(&cfg.matrix_spec())?;
    ensure_out_dir(cfg)?;
    let truth = out_path(cfg, "truth");
    write_ground_truth(&truth, &gt)?;
    println!(
        "planted rank {} truth at n = {} under {}",
        cfg.rank,
        cfg.n,
        truth.display()
    );
    if cfg.emit_entries {
        let entries = gt.dense_entries()?;
        let name = match cfg.format {
            crate::config::EntryFormat::Csv => "entries.csv",
            crate::config::EntryFormat::Bin => "entries.bin",
        };
        let path = out_path(cfg, name);
        write_file(&path, |w| match cfg.format {
            crate::config::EntryFormat::Csv => write_entries_csv(w, &entries),
            crate::config::EntryFormat::Bin => write_entries_bin(w, &entries),
        })?;
        println!("emitted {} entries to {}", entries.len(), path.display());
    }
    Ok(())
}

/// Sketches an entry stream or factor directory into `out_dir/sketch.bin`.
pub fn cmd_sketch(cfg: &RunConfig, input: &Path, kind: SketchInputKind) -> Result<()> {
    let ens = cfg.build_ensemble()?;
    if ens.m() > cfg.dense_limit {
        return Err(Error::Config(format!(
            "ensemble has m = {} rows, above dense_limit = {}; a dense sketch file at this \
             size is impractical, run the experiment driver (`all`) which switches to factor \
             form, or raise dense_limit",
            ens.m(),
            cfg.dense_limit
        )));
    }
    let sk = match kind {
        SketchInputKind::EntriesCsv => {
            let f = std::fs::File::open(input)
                .map_err(|e| Error::Io(format!("{}: {e}", input.display())))?;
            sketch_entries(&ens, read_entries_csv(std::io::BufReader::new(f)), cfg.compensated)?
        }
        SketchInputKind::EntriesBin => {
            let f = std::fs::File::open(input)
                .map_err(|e| Error::Io(format!("{}: {e}", input.display())))?;
            sketch_entries(&ens, read_entries_bin(std::io::BufReader::new(f)), cfg.compensated)?
        }
        SketchInputKind::Factors => {
            let gt = read_ground_truth(input)?;
            if gt.spec.n != ens.n() {
                return Err(Error::Config(format!(
                    "ground truth dimension {} != configured n = {}",
                    gt.spec.n,
                    ens.n()
                )));
            }
            sketch_lowrank(&ens, &gt.factors(), cfg.compensated)?
        }
    };
    ensure_out_dir(cfg)?;
    let path = out_path(cfg, "sketch.bin");
    sk.write_to_path(&path)?;
    println!(
        "sketched {} entries into {} rows at {}",
        sk.entries_seen(),
        sk.m(),
        path.display()
    );
    Ok(())
}

fn decode_vector(cfg: &RunConfig, ens: &Ensemble, y: &[f64]) -> Result<SparseVector> {
    match cfg.decoder {
        DecoderKind::Sublinear => Ok(decode_sublinear(ens, y, cfg.sparsity)?.0),
        DecoderKind::Cosamp => {
            Ok(decode_cosamp(ens, y, cfg.sparsity, cfg.eta, cfg.max_iters as usize)?.0)
        }
    }
}

/// Extracts eigenpairs from a sketch file and decodes each eigenvector:
/// writes `eigs.csv`, `ensemble.txt`, and `rec_XXX.csv` under `out_dir`.
pub fn cmd_recover(cfg: &RunConfig, sketch_path: &Path) -> Result<()> {
    let sk = Sketch::read_from_path(sketch_path)?;
    let ens = parse_descriptor(sk.descriptor())?.build();
    let ell = cfg.ell();
    let pairs = top_eigs(&sk, ell as usize, 1e-8)?;
    ensure_out_dir(cfg)?;
    write_file(&out_path(cfg, "eigs.csv"), |w| write_eigenpairs_csv(w, &pairs))?;
    write_file(&out_path(cfg, "ensemble.txt"), |w| {
        w.write_all(sk.descriptor().as_bytes()).map_err(Error::from)
    })?;
    for (i, p) in pairs.iter().enumerate() {
        let dec = decode_vector(cfg, &ens, &p.vector)?;
        write_file(&out_path(cfg, &format!("rec_{:03}.csv", i + 1)), |w| {
            write_sparse_csv(w, &dec)
        })?;
    }
    let vals: Vec<String> = pairs.iter().map(|p| format!("{:.6e}", p.eigenvalue)).collect();
    println!("top {} eigenvalues: {}", pairs.len(), vals.join(", "));
    if pairs.len() >= 2 {
        let gaps: Vec<String> =
            relative_gaps(&pairs)?.iter().map(|g| format!("{g:.3}")).collect();
        println!("relative gaps: {}", gaps.join(", "));
    }
    Ok(())
}

/// Scores a recover run against a ground truth directory; writes
/// `trials.csv` into the run directory and prints mean errors.
pub fn cmd_evaluate(cfg: &RunConfig, truth_dir: &Path, run_dir: &Path) -> Result<()> {
    let gt = read_ground_truth(truth_dir)?;
    let eigs_path = run_dir.join("eigs.csv");
    let f = std::fs::File::open(&eigs_path)
        .map_err(|e| Error::Io(format!("{}: {e}", eigs_path.display())))?;
    let pairs = read_eigenpairs_csv(std::io::BufReader::new(f))?;
    let desc_path = run_dir.join("ensemble.txt");
    let desc = std::fs::read_to_string(&desc_path)
        .map_err(|e| Error::Io(format!("{}: {e}", desc_path.display())))?;
    let ens = parse_descriptor(&desc)?.build();
    let mut decoded = Vec::with_capacity(pairs.len());
    for i in 1..=pairs.len() {
        let path = run_dir.join(format!("rec_{i:03}.csv"));
        let f = std::fs::File::open(&path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        decoded.push(crate::decode::read_sparse_csv(std::io::BufReader::new(f))?);
    }
    let records = evaluate_trial(&ens, 0, &gt, &pairs, &decoded, cfg.sparsity)?;
    write_file(&run_dir.join("trials.csv"), |w| write_error_records(w, &records))?;
    print_record_summary(&records);
    Ok(())
}

fn print_record_summary(records: &[ErrorRecord]) {
    let points = vec![(0.0, records.to_vec())];
    for row in aggregate(&points) {
        println!(
            "j={}: mean pre err {:.4}, mean post err {:.4}, mean beta {:.3}",
            row.j, row.mean_pre_err, row.mean_post_err, row.mean_beta
        );
    }
}

/// One trial's scores and the sketch eigenvalues it saw.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub records: Vec<ErrorRecord>,
    pub eigenvalues: Vec<f64>,
}

fn run_single_trial(cfg: &RunConfig, trial: u64) -> Result<TrialOutcome> {
    let mut spec = cfg.matrix_spec();
    spec.seed = cfg.seed.wrapping_add(2 * trial);
    let gt = generate(&spec)?;
    let ens = cfg.build_ensemble_seeded(
        cfg.seed.wrapping_add(2 * trial + 1),
        cfg.rows_seed.wrapping_add(trial),
    )?;
    let ell = cfg.ell() as usize;
    let use_dense = match cfg.sketch_mode {
        SketchMode::Dense => true,
        SketchMode::Factored => false,
        SketchMode::Auto => ens.m() <= cfg.dense_limit,
    };
    let pairs: Vec<EigenPair> = if use_dense {
        let sk = sketch_lowrank(&ens, &gt.factors(), cfg.compensated)?;
        top_eigs(&sk, ell, 1e-8)?
    } else {
        let fs = sketch_lowrank_factored(&ens, &gt.factors())?;
        top_eigs_factored(&fs, ell, 1e-12)?
    };
    let decoded = pairs
        .iter()
        .map(|p| decode_vector(cfg, &ens, &p.vector))
        .collect::<Result<Vec<SparseVector>>>()?;
    let records = evaluate_trial(&ens, trial, &gt, &pairs, &decoded, cfg.sparsity)?;
    Ok(TrialOutcome {
        records,
        eigenvalues: pairs.iter().map(|p| p.eigenvalue).collect(),
    })
}

/// Runs the configured number of independent trials, in parallel when
/// `threads` allows, with per-trial seeds derived from the master seed so
/// results do not depend on scheduling.
pub fn run_trials(cfg: &RunConfig) -> Result<Vec<TrialOutcome>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads as usize)
        .build()
        .map_err(|e| Error::Config(format!("threads: {e}")))?;
    let outcomes: Vec<Result<TrialOutcome>> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_single_trial(cfg, t))
            .collect()
    });
    outcomes.into_iter().collect()
}

/// Full in-memory experiment: plant, sketch, recover, decode, and score over
/// all trials. Writes `config.txt`, `trials.csv`, and `aggregate.csv`.
pub fn cmd_all(cfg: &RunConfig) -> Result<()> {
    let outcomes = run_trials(cfg)?;
    ensure_out_dir(cfg)?;
    write_file(&out_path(cfg, "config.txt"), |w| {
        w.write_all(cfg.serialize().as_bytes()).map_err(Error::from)
    })?;
    let flat: Vec<ErrorRecord> =
        outcomes.iter().flat_map(|o| o.records.iter().cloned()).collect();
    write_file(&out_path(cfg, "trials.csv"), |w| write_error_records(w, &flat))?;
    let x = match cfg.aggregate_x.as_str() {
        "rows" => cfg.build_ensemble()?.m() as f64,
        _ => cfg.sparsity as f64,
    };
    let points = vec![(x, flat.clone())];
    write_file(&out_path(cfg, "aggregate.csv"), |w| write_aggregate(w, &aggregate(&points)))?;
    println!(
        "{} trials at n = {}, s = {}, {} rows",
        cfg.trials,
        cfg.n,
        cfg.sparsity,
        cfg.build_ensemble()?.m()
    );
    print_record_summary(&flat);
    Ok(())
}
