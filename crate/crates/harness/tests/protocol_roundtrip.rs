#[path = "support/messages.rs"]
mod messages;

use std::io::Cursor;

use live_harness::protocol::{decode_message, decode_prefix, encode_message, read_message, DecodeError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn decode_inverts_encode(seed in any::<u64>()) {
        let m = messages::random_message(&mut ChaCha8Rng::seed_from_u64(seed));
        let bytes = encode_message(&m);
        prop_assert_eq!(decode_message(&bytes).unwrap(), m.clone());
        prop_assert_eq!(read_message(&mut Cursor::new(bytes)).unwrap(), Some(m));
    }

    #[test]
    fn every_strict_prefix_is_truncated(seed in any::<u64>(), cut in 0.0f64..1.0) {
        let bytes = encode_message(&messages::random_message(&mut ChaCha8Rng::seed_from_u64(seed)));
        let at = ((bytes.len() as f64) * cut) as usize;
        let truncated = matches!(decode_message(&bytes[..at]), Err(DecodeError::Truncated { .. }));
        prop_assert!(truncated);
    }
}

#[test]
fn concatenated_frames_decode_in_order() {
    let ms = messages::messages(9, 200);
    let mut stream = Vec::new();
    for m in &ms {
        stream.extend(encode_message(m));
    }
    let mut at = 0;
    for m in &ms {
        let (got, used) = decode_prefix(&stream[at..]).unwrap();
        assert_eq!(&got, m);
        at += used;
    }
    assert_eq!(at, stream.len());
    let mut cursor = Cursor::new(stream);
    for m in &ms {
        assert_eq!(read_message(&mut cursor).unwrap().as_ref(), Some(m));
    }
    assert_eq!(read_message(&mut cursor).unwrap(), None);
}
