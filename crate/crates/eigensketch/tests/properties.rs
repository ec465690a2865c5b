//! Randomized invariants: measurement column structure, serialization round
//! trips, and the measure-then-decode identity on the simplest inputs.

use proptest::prelude::*;

use eigensketch::config::{parse_config_str, RunConfig};
use eigensketch::decode::{decode_sublinear, read_sparse_csv, write_sparse_csv, SparseVector};
use eigensketch::measure::{
    ceil_log2, fwht, parse_descriptor, CoherentParams, Ensemble, HadamardParams,
};
use eigensketch::stream::{
    read_entries_bin, read_entries_csv, write_entries_bin, write_entries_csv, EntryTriple,
};

fn coherent_params() -> impl Strategy<Value = CoherentParams> {
    (prop::sample::select(vec![5u64, 7, 11, 13]), 1u32..=3, 0u64..1 << 48).prop_flat_map(
        |(q, d, seed)| {
            let cap = q.pow(d + 1).min(2048);
            (2u64..=cap, 2u64..=q)
                .prop_map(move |(n, k)| CoherentParams::new(n, k, q, d, seed).unwrap())
        },
    )
}

fn hadamard_params() -> impl Strategy<Value = HadamardParams> {
    (1u32..=6, 0u64..1 << 48, 0u64..1 << 48).prop_flat_map(|(pow, rows_seed, seed)| {
        let n = 1u64 << pow;
        (1u64..=n).prop_map(move |m| HadamardParams::new(n, m, rows_seed, seed).unwrap())
    })
}

fn nonzero_value() -> impl Strategy<Value = f64> {
    prop_oneof![-1e9f64..=-1e-9, 1e-9f64..=1e9]
}

fn sparse_vector() -> impl Strategy<Value = SparseVector> {
    (1u64..=4096).prop_flat_map(|dim| {
        prop::collection::btree_map(0..dim, nonzero_value(), 0..=16.min(dim as usize))
            .prop_map(move |m| SparseVector::new(dim, m.into_iter().collect()).unwrap())
    })
}

proptest! {
    /// Every coherent column has exactly k(1 + ceil(log2 n)) nonzeros of one
    /// magnitude, listed by ascending row, and unit l2 norm.
    #[test]
    fn coherent_columns_have_fixed_weight_and_unit_norm(
        p in coherent_params(),
        pick in any::<u64>(),
    ) {
        let weight = p.k * (1 + u64::from(ceil_log2(p.n)));
        let ens = Ensemble::coherent(p);
        let j = pick % ens.n();
        let mut col = Vec::new();
        ens.column(j, &mut col);
        prop_assert_eq!(col.len() as u64, weight);
        prop_assert!(col.windows(2).all(|w| w[0].0 < w[1].0));
        prop_assert!(col.iter().all(|&(r, _)| r < ens.m()));
        let mag = 1.0 / (weight as f64).sqrt();
        prop_assert!(col.iter().all(|&(_, v)| (v.abs() - mag).abs() < 1e-15));
        let norm: f64 = col.iter().map(|&(_, v)| v * v).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    /// A descriptor names its ensemble completely: parse(build) is identity.
    #[test]
    fn descriptors_round_trip(p in coherent_params(), h in hadamard_params()) {
        for ens in [Ensemble::coherent(p), Ensemble::hadamard(h)] {
            let text = ens.descriptor();
            let rebuilt = parse_descriptor(&text).unwrap().build();
            prop_assert_eq!(rebuilt.descriptor(), text);
        }
    }

    /// Measuring a 1-sparse vector and decoding it back is the identity.
    #[test]
    fn one_sparse_vectors_decode_exactly(
        p in coherent_params(),
        pick in any::<u64>(),
        v in nonzero_value(),
    ) {
        let ens = Ensemble::coherent(p);
        let j = pick % ens.n();
        let y = ens.apply_sparse(&[(j, v)]);
        let (dec, _) = decode_sublinear(&ens, &y.data, 1).unwrap();
        prop_assert_eq!(dec.entries().len(), 1);
        prop_assert_eq!(dec.entries()[0].0, j);
        prop_assert!((dec.entries()[0].1 - v).abs() <= 1e-9 * v.abs());
    }

    /// The dense apply agrees with the streamed column view.
    #[test]
    fn hadamard_apply_matches_column_stream(h in hadamard_params(), pick in any::<u64>()) {
        let ens = Ensemble::hadamard(h);
        let j = pick % ens.n();
        let mut e = vec![0.0; ens.n() as usize];
        e[j as usize] = 1.0;
        let applied = ens.apply(&e);
        let mut col = Vec::new();
        ens.column(j, &mut col);
        let mut scattered = vec![0.0; ens.m() as usize];
        for (r, v) in col {
            scattered[r as usize] = v;
        }
        for (a, b) in applied.data.iter().zip(&scattered) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    /// Sparse vector CSV survives a write/read cycle bit for bit.
    #[test]
    fn sparse_vector_csv_round_trips(v in sparse_vector()) {
        let mut buf = Vec::new();
        write_sparse_csv(&mut buf, &v).unwrap();
        let back = read_sparse_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, v);
    }

    /// Entry stream CSV survives a write/read cycle.
    #[test]
    fn entry_csv_round_trips(
        entries in prop::collection::vec(
            (0u64..1000, 0u64..1000, -1e9f64..=1e9)
                .prop_map(|(row, col, value)| EntryTriple { row, col, value }),
            0..50,
        )
    ) {
        let mut buf = Vec::new();
        write_entries_csv(&mut buf, &entries).unwrap();
        let back: Vec<EntryTriple> =
            read_entries_csv(buf.as_slice()).map(|r| r.unwrap()).collect();
        prop_assert_eq!(back, entries);
    }

    /// Entry stream binary records survive a write/read cycle exactly.
    #[test]
    fn entry_bin_round_trips(
        entries in prop::collection::vec(
            (0u64..1 << 40, 0u64..1 << 40, prop::num::f64::NORMAL | prop::num::f64::ZERO)
                .prop_map(|(row, col, value)| EntryTriple { row, col, value }),
            0..50,
        )
    ) {
        let mut buf = Vec::new();
        write_entries_bin(&mut buf, &entries).unwrap();
        let back: Vec<EntryTriple> =
            read_entries_bin(buf.as_slice()).map(|r| r.unwrap()).collect();
        prop_assert_eq!(back, entries);
    }

    /// The transform is its own inverse up to a factor of the length.
    #[test]
    fn fwht_applied_twice_scales_by_length(
        pow in 0u32..=8,
        vals in prop::collection::vec(-100.0f64..=100.0, 256),
    ) {
        let n = 1usize << pow;
        let mut buf = vals[..n].to_vec();
        let orig = buf.clone();
        fwht(&mut buf);
        fwht(&mut buf);
        for (got, want) in buf.iter().zip(&orig) {
            let want = want * n as f64;
            prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    /// A serialized config parses back to the same config.
    #[test]
    fn config_serialization_round_trips(
        n in 256u64..=1 << 20,
        rank in 1u64..=8,
        sparsity in 1u64..=32,
        decay in 0.01f64..=1.0,
        scale in 0.1f64..=10.0,
        seed in any::<u64>(),
        trials in 1u64..=16,
        compensated in any::<bool>(),
        emit_entries in any::<bool>(),
    ) {
        let cfg = RunConfig {
            n,
            rank,
            sparsity,
            decay,
            scale,
            seed,
            trials,
            compensated,
            emit_entries,
            ..RunConfig::default()
        };
        let parsed = parse_config_str(&cfg.serialize()).unwrap();
        prop_assert_eq!(parsed, cfg);
    }
}
