use mbot_core::board::{decode_frames, encode_frame, FrameDecoder, SerialFrame};
use proptest::prelude::*;

fn frame() -> impl Strategy<Value = SerialFrame> {
    (any::<u16>(), proptest::collection::vec(any::<u8>(), 0..300)).prop_map(|(t, p)| SerialFrame::new(t, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn round_trip(f in frame()) {
        let bytes = encode_frame(&f).unwrap();
        let (frames, rest, _) = decode_frames(&bytes);
        prop_assert_eq!(frames, vec![f]);
        prop_assert!(rest.is_empty());
    }

    #[test]
    fn garbage_between_frames_is_skipped(f1 in frame(), f2 in frame(), garbage in proptest::collection::vec(any::<u8>(), 0..64)) {
        prop_assume!(decode_frames(&garbage).0.is_empty());
        let mut bytes = encode_frame(&f1).unwrap();
        bytes.extend_from_slice(&garbage);
        bytes.extend(encode_frame(&f2).unwrap());
        let (frames, _, _) = decode_frames(&bytes);
        prop_assert_eq!(frames, vec![f1, f2]);
    }

    #[test]
    fn chunking_does_not_matter(fs in proptest::collection::vec(frame(), 1..5), cut in 1usize..17) {
        let bytes: Vec<u8> = fs.iter().flat_map(|f| encode_frame(f).unwrap()).collect();
        let mut dec = FrameDecoder::new();
        let mut got = Vec::new();
        for chunk in bytes.chunks(cut) {
            dec.push(chunk);
            got.extend(dec.drain_frames());
        }
        prop_assert_eq!(got, fs);
        prop_assert_eq!(dec.pending_bytes(), 0);
    }
}
