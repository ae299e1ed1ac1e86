use ndnn::checkpoint::{AdamState, Checkpoint, EntryKind, StateEntry};
use proptest::prelude::*;

fn entry() -> impl Strategy<Value = StateEntry> {
    (
        "[a-z][a-z0-9_.]{0,12}",
        prop::collection::vec(1usize..4, 1..4),
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
        any::<u64>(),
    )
        .prop_flat_map(|(name, shape, frozen, buffer, with_adam, step)| {
            let n: usize = shape.iter().product();
            let vals = prop::collection::vec(-1e6f32..1e6, n);
            (Just(name), Just(shape), Just(frozen), Just(buffer), vals.clone(), vals.clone(), vals).prop_map(
                move |(name, shape, frozen, buffer, value, m, v)| StateEntry {
                    name,
                    shape,
                    frozen,
                    kind: if buffer { EntryKind::Buffer } else { EntryKind::Param },
                    value,
                    adam: with_adam.then_some(AdamState { m, v, step }),
                },
            )
        })
}

fn checkpoint() -> impl Strategy<Value = Checkpoint> {
    ("[ -~]{0,40}", prop::collection::vec(entry(), 0..5))
        .prop_map(|(descriptor, entries)| Checkpoint { descriptor, entries })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bytes_round_trip(ck in checkpoint()) {
        let bytes = ck.to_bytes().unwrap();
        prop_assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
    }

    #[test]
    fn any_flipped_byte_is_detected(ck in checkpoint(), at in any::<prop::sample::Index>(), bit in 0u8..8) {
        let mut bytes = ck.to_bytes().unwrap();
        let i = at.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ndnn");
    let ck = Checkpoint {
        descriptor: "toy".into(),
        entries: vec![StateEntry {
            name: "w".into(),
            shape: vec![2, 3],
            frozen: true,
            kind: EntryKind::Param,
            value: vec![0.5, -1.0, 2.0, 3.25, f32::MIN_POSITIVE, -0.0],
            adam: Some(AdamState { m: vec![0.1; 6], v: vec![0.2; 6], step: 7 }),
        }],
    };
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.entries[0].value[5].to_bits(), (-0.0f32).to_bits());
}
