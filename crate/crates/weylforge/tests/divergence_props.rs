use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use weylforge::divergence::{
    build_rearrangement, expected_window, independence_check, LevelSelection, NestedSelection, ScaleLadder,
};

#[derive(Debug, Clone)]
struct Shape {
    ratio: u64,
    block_len: u32,
    levels: Vec<Vec<(u64, u32)>>,
}

fn shape() -> impl Strategy<Value = Shape> {
    (3u64..6, 1u32..4, 1usize..4).prop_flat_map(|(ratio, block_len, depth)| {
        let level = prop::collection::btree_map(0..ratio, 1..=block_len, 1..=ratio as usize)
            .prop_map(|m| m.into_iter().collect::<Vec<_>>());
        prop::collection::vec(level, depth).prop_map(move |levels| Shape { ratio, block_len, levels })
    })
}

fn selection(s: &Shape) -> NestedSelection {
    let levels = s
        .levels
        .iter()
        .map(|l| LevelSelection {
            selected: l.iter().map(|p| p.0).collect(),
            continuation: l.iter().map(|p| p.1).collect(),
            density: BigRational::new(BigInt::from(l.len()), BigInt::from(s.ratio)),
        })
        .collect();
    NestedSelection::new(ScaleLadder::new(1, s.ratio, s.levels.len()).unwrap(), s.block_len, levels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rearrangement_is_a_permutation(s in shape()) {
        let sel = selection(&s);
        let k1 = s.levels.len();
        let rs = build_rearrangement(&sel, 1, k1).unwrap();
        prop_assert!(rs.is_permutation(&sel));
    }

    #[test]
    fn windows_follow_the_placement_rules(s in shape(), picks in prop::collection::vec(0u64..1000, 4)) {
        let sel = selection(&s);
        let k1 = s.levels.len();
        let rs = build_rearrangement(&sel, 1, k1).unwrap();
        let r = s.ratio;
        let mut path = vec![picks[0] % r + 1];
        for i in 1..k1 {
            let prev = path[i - 1];
            path.push((prev - 1) * r + picks[i] % r + 1);
        }
        let last = picks[3] % r;
        prop_assert_eq!(rs.restricted_window(&sel, &path, last), expected_window(&sel, 1, &path, last));
    }

    #[test]
    fn levels_are_independent(s in shape()) {
        let sel = selection(&s);
        let rep = independence_check(&sel, s.levels.len()).unwrap();
        prop_assert_eq!(rep.failures, 0);
        prop_assert!(rep.subsets >= s.levels.len());
    }
}

#[test]
fn inconsistent_density_is_rejected() {
    let l = LevelSelection { selected: vec![0, 1], continuation: vec![1, 1], density: BigRational::new(1.into(), 4.into()) };
    assert!(NestedSelection::new(ScaleLadder::new(1, 4, 1).unwrap(), 2, vec![l]).is_err());
}
