use mstd::buffer::{MultiStateSample, RingBuffer, WindowBuilder};
use proptest::prelude::*;

mod common;
use common::{expected_windows, transition};

fn episodes() -> impl Strategy<Value = (usize, usize, Vec<(usize, bool)>)> {
    (1usize..=4, 1usize..=300, prop::collection::vec((1usize..=50, any::<bool>()), 1..=40))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn windows_counts_flags_and_eviction((horizon, capacity, eps) in episodes()) {
        let mut buffer = RingBuffer::new(capacity, horizon, 1, 1);
        let mut builder = WindowBuilder::new(horizon);
        let mut all_expected = Vec::new();
        for (e, &(len, terminated)) in eps.iter().enumerate() {
            let mut unpadded = 0;
            for i in 0..len {
                unpadded += builder.push_transition(&mut buffer, transition(e, i, terminated && i + 1 == len)).unwrap();
            }
            let padded = if terminated {
                builder.finalize_episode(&mut buffer).unwrap()
            } else {
                builder.truncate_episode();
                0
            };
            // emission counts
            prop_assert_eq!(unpadded, (len + 1).saturating_sub(horizon));
            prop_assert_eq!(padded, if terminated { len.min(horizon - 1) } else { 0 });
            all_expected.extend(expected_windows(e, len, terminated, horizon));
        }
        // FIFO eviction: the buffer holds the newest `capacity` windows in order
        let keep = all_expected.len().min(capacity);
        let tail = &all_expected[all_expected.len() - keep..];
        prop_assert_eq!(buffer.len(), keep);
        prop_assert_eq!(buffer.inserted(), all_expected.len() as u64);
        for (got, want) in buffer.iter().zip(tail) {
            prop_assert_eq!(got, want);
            got.check().unwrap();
            // flag monotonicity: once padded, padded to the end
            let first_pad = got.pad_flags.iter().position(|&p| p).unwrap_or(horizon);
            prop_assert!(got.pad_flags[first_pad..].iter().all(|&p| p));
            prop_assert!(!got.pad_flags[0]);
            if got.is_padded() {
                prop_assert!(got.terminal);
            }
        }
        // window overlap: consecutive windows of one episode shift by one triplet
        let stored: Vec<&MultiStateSample> = buffer.iter().collect();
        for pair in stored.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let same_episode = (a.states[0][0] / 1000.0).floor() == (b.states[0][0] / 1000.0).floor();
            if same_episode && horizon > 1 {
                let shift = b.real_len().min(a.real_len().saturating_sub(1));
                prop_assert_eq!(&a.states[1..1 + shift], &b.states[..shift]);
                prop_assert_eq!(&a.rewards[1..1 + shift], &b.rewards[..shift]);
            }
        }
    }

    #[test]
    fn dump_round_trip((horizon, capacity, eps) in episodes()) {
        let mut buffer = RingBuffer::new(capacity, horizon, 1, 1);
        let mut builder = WindowBuilder::new(horizon);
        for (e, &(len, terminated)) in eps.iter().enumerate().take(5) {
            for i in 0..len {
                builder.push_transition(&mut buffer, transition(e, i, terminated && i + 1 == len)).unwrap();
            }
            if terminated {
                builder.finalize_episode(&mut buffer).unwrap();
            } else {
                builder.truncate_episode();
            }
        }
        let mut bytes = Vec::new();
        buffer.write_to(&mut bytes).unwrap();
        let back = RingBuffer::read_from(bytes.as_slice(), capacity).unwrap();
        prop_assert!(buffer.iter().eq(back.iter()));
    }
}
