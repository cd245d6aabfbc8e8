//! Binary dataset and parameter files: round trips and corruption handling.

mod common;

use common::small_dims;
use fltp_core::format::{decode_dataset, decode_params, encode_dataset, encode_params, load_params, save_params};
use fltp_core::{init_params, partition_clients, Error, GeneratorConfig};
use proptest::prelude::*;

fn gen(seed: u64, c: usize, k: usize, a_max: usize) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        num_clients: c,
        scenarios_per_client: k,
        agents_max: a_max,
        t_obs: 3,
        t_pre: 2,
        ..GeneratorConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dataset_round_trip(seed in any::<u64>(), half in 1usize..4, k in 1usize..5, a_max in 1usize..5) {
        let d = partition_clients(&gen(seed, 2 * half, k, a_max)).unwrap();
        let bytes = encode_dataset(&d).unwrap();
        prop_assert_eq!(decode_dataset(&bytes).unwrap(), d);
    }

    #[test]
    fn truncated_dataset_reports_offset(seed in any::<u64>(), cut in 0.0f64..1.0) {
        let d = partition_clients(&gen(seed, 2, 2, 3)).unwrap();
        let bytes = encode_dataset(&d).unwrap();
        let n = (cut * bytes.len() as f64) as usize;
        match decode_dataset(&bytes[..n]) {
            Err(Error::Parse { offset, .. }) => prop_assert!(offset as usize <= n),
            other => prop_assert!(false, "expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn params_round_trip(seed in any::<u64>()) {
        let p = init_params(seed, small_dims()).unwrap();
        let bytes = encode_params(&p).unwrap();
        prop_assert_eq!(decode_params(&bytes).unwrap(), p.clone());
        for n in [0, 3, 5, 21, bytes.len() - 1] {
            let parse_err = matches!(decode_params(&bytes[..n]), Err(Error::Parse { .. }));
            prop_assert!(parse_err);
        }
    }
}

#[test]
fn default_partition_ids_are_unique() {
    let cfg = GeneratorConfig { seed: 7, ..GeneratorConfig::default() };
    let d = partition_clients(&cfg).unwrap();
    assert_eq!(d.len(), 20);
    let mut ids: Vec<u64> = d.iter().flat_map(|c| c.scenarios.iter().map(|s| s.scenario_id)).collect();
    assert_eq!(ids.len(), 2000);
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), 2000);
    let back = decode_dataset(&encode_dataset(&d).unwrap()).unwrap();
    assert_eq!(back, d);
}

#[test]
fn params_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.ftpw");
    let p = init_params(3, small_dims()).unwrap();
    save_params(&p, &path).unwrap();
    assert_eq!(load_params(&path).unwrap(), p);
    assert!(!path.with_extension("ftpw.tmp").exists());
    assert!(load_params(&dir.path().join("missing.ftpw")).is_err());
}
