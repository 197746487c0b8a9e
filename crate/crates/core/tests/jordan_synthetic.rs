mod common;

use common::{round_trip, synthetic_jordan, RoundTrip};

#[test]
fn synthetic_round_trips_are_recovered_or_flagged() {
    let mut recovered = 0;
    let mut ambiguous = Vec::new();
    for seed in 0..100 {
        let s = synthetic_jordan(seed);
        match round_trip(&s) {
            RoundTrip::Recovered => recovered += 1,
            RoundTrip::Ambiguous => ambiguous.push(seed),
            RoundTrip::Wrong(why) => panic!("seed {seed}: silently wrong: {why}"),
        }
    }
    assert!(recovered >= 98, "recovered {recovered}/100, ambiguous seeds {ambiguous:?}");
}

#[test]
fn generator_covers_every_kind() {
    use ou_lab::BlockKind::*;
    let mut seen = [false; 5];
    for seed in 0..100 {
        for (k, _) in synthetic_jordan(seed).expected {
            let i = match k {
                Stable => 0,
                ZeroSimple => 1,
                NilpotentJordan { .. } => 2,
                RotationJordan { .. } => 3,
                PureRotation { .. } => 4,
                Unstable => unreachable!(),
            };
            seen[i] = true;
        }
    }
    assert!(seen.iter().all(|&s| s), "{seen:?}");
}
