use std::path::Path;

use egohoi_core::backends::protocol::{decode_exact, encode, Message, Predictions};
use egohoi_core::backends::Role;
use serde::Deserialize;

#[derive(Deserialize)]
struct Vectors {
    canned: Vec<Canned>,
    malformed: Vec<Malformed>,
}

#[derive(Deserialize)]
struct Canned {
    name: String,
    json: String,
    hex: String,
}

#[derive(Deserialize)]
struct Malformed {
    name: String,
    hex: String,
    error: String,
}

fn vectors() -> Vectors {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/protocol_vectors.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn canned_vectors_round_trip() {
    let v = vectors();
    assert_eq!(v.canned.len(), 5);
    for c in &v.canned {
        let bytes = hex::decode(&c.hex).unwrap();
        // length prefix is the big-endian byte count of the JSON text
        assert_eq!(&bytes[..4], &(c.json.len() as u32).to_be_bytes(), "{}", c.name);
        assert_eq!(&bytes[4..], c.json.as_bytes(), "{}", c.name);
        let msg = decode_exact(&bytes).unwrap_or_else(|e| panic!("{}: {e}", c.name));
        assert_eq!(encode(&msg), bytes, "{}", c.name);
    }
}

#[test]
fn canned_vectors_decode_to_expected_messages() {
    let v = vectors();
    let msg = |name: &str| decode_exact(&hex::decode(&v.canned.iter().find(|c| c.name == name).unwrap().hex).unwrap()).unwrap();
    assert!(matches!(msg("hello_request"), Message::Hello { version: 1, role: Role::Detector, ref taxonomy } if taxonomy.len() == 3));
    assert!(matches!(msg("infer_base64"), Message::Infer { frame_index: 42, image: Some(_), .. }));
    match msg("result_detections") {
        Message::Result { frame_index: 42, predictions: Predictions::Detections(d) } => {
            assert_eq!(d.len(), 2);
            assert!(d[0].is_hand() && !d[1].is_hand());
            assert_eq!(d[0].bbox.as_array(), [100.5, 200.0, 180.25, 280.0]);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(msg("result_contact"), Message::Result { frame_index: 7, predictions: Predictions::Contact { confidence: 0.875 } });
}

#[test]
fn malformed_vectors_fail_with_their_class() {
    let v = vectors();
    assert!(!v.malformed.is_empty());
    for m in &v.malformed {
        let err = decode_exact(&hex::decode(&m.hex).unwrap()).expect_err(&m.name);
        assert_eq!(err.class(), m.error, "{}: {err}", m.name);
    }
}
