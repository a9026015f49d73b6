use std::io::Cursor;

use csl_core::record::{parse_capture, read_capture, validate_record, write_capture, write_capture_to, Capture};
use csl_core::synth::{generate_synthetic, SyntheticSpec};
use csl_core::Error;
use proptest::prelude::*;

fn small(seed: u64, n_records: usize, n_heads: usize, n_samples: usize) -> SyntheticSpec {
    SyntheticSpec {
        n_records,
        n_heads,
        good_heads: n_heads.min(2),
        n_samples,
        seed,
        ..SyntheticSpec::frozen()
    }
}

fn to_bytes(c: &Capture) -> Vec<u8> {
    let mut buf = Vec::new();
    write_capture_to(&mut buf, c).unwrap();
    buf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parse_inverts_write(seed in any::<u64>(), n in 1usize..20, h in 1usize..6, m in 0usize..4) {
        let capture = generate_synthetic(&small(seed, n, h, m)).unwrap();
        let bytes = to_bytes(&capture);
        let back = read_capture(Cursor::new(&bytes)).unwrap();
        prop_assert_eq!(&back, &capture);
        prop_assert_eq!(to_bytes(&back), bytes);
    }
}

#[test]
fn synthetic_records_are_schema_valid() {
    let capture = generate_synthetic(&small(3, 200, 16, 3)).unwrap();
    for r in &capture.records {
        let v = validate_record(r);
        assert!(v.is_ok(), "{}: {:?}", r.id, v.messages());
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("capture.jsonl");
    let capture = generate_synthetic(&small(4, 30, 8, 2)).unwrap();
    write_capture(&path, &capture).unwrap();
    assert_eq!(parse_capture(&path).unwrap(), capture);
}

#[test]
fn missing_file_reports_the_path() {
    let err = parse_capture("/nonexistent/capture.jsonl").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/capture.jsonl"));
}
