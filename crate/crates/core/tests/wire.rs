mod common;

use binc::wire::{annotate, decode, encode, size_of, Message, WireError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn random_messages_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..5 {
        for _ in 0..500 {
            let m = common::random_message(&mut rng, k);
            let bytes = encode(&m).expect("generated messages are in range");
            assert_eq!(bytes.len(), size_of(&m));
            assert_eq!(decode(&bytes).unwrap(), m);
        }
    }
}

#[test]
fn every_prefix_of_a_valid_packet_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..5 {
        let bytes = encode(&common::random_message(&mut rng, k)).unwrap();
        for cut in 0..bytes.len() {
            assert!(matches!(decode(&bytes[..cut]), Err(WireError::MalformedPacket(_))), "kind {k}, cut {cut}");
        }
    }
}

#[test]
fn trailing_bytes_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut bytes = encode(&Message::Tc(common::random_tc(&mut rng))).unwrap();
    bytes.push(0);
    assert!(decode(&bytes).is_err());
}

#[test]
fn annotation_names_every_field_of_a_hello() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut h = common::random_hello(&mut rng);
    h.neighbors.truncate(2);
    let text = annotate(&encode(&Message::Hello(h)).unwrap()).unwrap();
    for name in ["origin", "position", "velocity", "neighbor"] {
        assert!(text.contains(name), "missing {name} in\n{text}");
    }
}

proptest! {
    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..600)) {
        let _ = decode(&bytes);
    }

    #[test]
    fn decoded_garbage_reencodes_to_itself(bytes in proptest::collection::vec(any::<u8>(), 0..600)) {
        if let Ok(m) = decode(&bytes) {
            prop_assert_eq!(encode(&m).unwrap(), bytes);
        }
    }

    #[test]
    fn size_matches_encoding(seed in any::<u64>(), k in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = common::random_message(&mut rng, k);
        prop_assert_eq!(encode(&m).unwrap().len(), size_of(&m));
    }
}
