use eigensketch::config::parse_config_str;
use eigensketch::decode::{read_sparse_csv, write_sparse_csv};
use eigensketch::eig::{read_eigenpairs_csv, write_eigenpairs_csv};
use eigensketch::measure::parse_descriptor;
use eigensketch::stream::{read_entries_bin, read_entries_csv, Sketch};

fn seeds(dir: &str) -> Vec<(String, Vec<u8>)> {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fuzz/corpus/");
    let mut out = Vec::new();
    for e in std::fs::read_dir(format!("{root}{dir}")).unwrap() {
        let p = e.unwrap().path();
        out.push((p.display().to_string(), std::fs::read(&p).unwrap()));
    }
    assert!(!out.is_empty(), "no seeds in {dir}");
    out
}

#[test]
fn every_corpus_seed_passes_its_fuzz_invariant() {
    for (name, data) in seeds("descriptor") {
        let text = std::str::from_utf8(&data).unwrap();
        let desc = parse_descriptor(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parse_descriptor(&desc.serialize()).unwrap(), desc, "{name}");
    }
    for (name, data) in seeds("entries_csv") {
        for item in read_entries_csv(&data[..]) {
            item.unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
    for (name, data) in seeds("entries_bin") {
        for item in read_entries_bin(&data[..]) {
            item.unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
    for (name, data) in seeds("sketch_file") {
        Sketch::read_from(&mut &data[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, data) in seeds("sparse_csv") {
        let v = read_sparse_csv(&data[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut buf = Vec::new();
        write_sparse_csv(&mut buf, &v).unwrap();
        assert_eq!(read_sparse_csv(&buf[..]).unwrap(), v, "{name}");
    }
    for (name, data) in seeds("eigenpairs_csv") {
        let pairs = read_eigenpairs_csv(&data[..]).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut buf = Vec::new();
        write_eigenpairs_csv(&mut buf, &pairs).unwrap();
        assert_eq!(read_eigenpairs_csv(&buf[..]).unwrap(), pairs, "{name}");
    }
    for (name, data) in seeds("config") {
        let text = std::str::from_utf8(&data).unwrap();
        let cfg = parse_config_str(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parse_config_str(&cfg.serialize()).unwrap(), cfg, "{name}");
    }
}
