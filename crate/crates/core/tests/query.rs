use std::collections::BTreeSet;

use proptest::prelude::*;
use voxelmap::query::{count_states, occluded, query_with, QueryOptions, StateCounts, StateSet};
use voxelmap::{LeafPayload, MapConfig, NodeCode, OccupancyMap, OccupancyState, Predicate, Region, Rgb, SummaryReducer};

const DEPTH: u8 = 4;
const N: u32 = 16;
const RES: f64 = 0.5;

fn config() -> MapConfig {
    MapConfig::with_resolution(RES, DEPTH)
}

#[derive(Debug, Clone)]
struct Op {
    idx: [u32; 3],
    delta: f64,
    label: Option<u16>,
    frame: u32,
}

fn op() -> impl Strategy<Value = Op> {
    (
        [0u32..12, 0u32..12, 0u32..12],
        prop_oneof![Just(0.85), Just(-0.4), Just(3.5), Just(-2.0), -1.0f64..1.0],
        proptest::option::of(0u16..4),
        0u32..20,
    )
        .prop_map(|(idx, delta, label, frame)| Op { idx, delta, label, frame })
}

fn build(ops: &[Op], fill: bool, prune: bool, reducer: SummaryReducer) -> OccupancyMap {
    let mut map = OccupancyMap::with_reducer(config(), reducer).unwrap();
    if fill {
        map.set_frame_counter(3);
        for x in 0..8 {
            for y in 0..8 {
                for z in 0..4 {
                    map.update_leaf(NodeCode::from_index([x, y, z], 0), -1.0, None, Some(1)).unwrap();
                }
            }
        }
    }
    for o in ops {
        map.set_frame_counter(o.frame);
        map.update_leaf(NodeCode::from_index(o.idx, 0), o.delta, Some(Rgb([1, 2, 3])), o.label).unwrap();
    }
    map.propagate();
    if prune {
        map.prune();
    }
    map
}

/// Membership computed from integer indices.
fn in_region(region: &Region, idx: [u32; 3], depth: u8) -> bool {
    let size = RES * f64::from(1u32 << depth);
    let lo: Vec<f64> = idx.iter().map(|&i| (f64::from(i) - f64::from(N / 2)) * RES).collect();
    match region {
        Region::Aabb { min, max } => (0..3).all(|a| lo[a] <= max[a] && min[a] < lo[a] + size),
        Region::Sphere { center, radius } => {
            let d2: f64 = (0..3).map(|a| (lo[a] + size / 2.0 - center[a]).powi(2)).sum();
            d2 <= radius * radius
        }
        Region::Everything => true,
    }
}

fn brute(map: &OccupancyMap, region: &Region, depth: u8, mut keep: impl FnMut(&LeafPayload) -> bool) -> BTreeSet<NodeCode> {
    let n = N >> depth;
    let mut out = BTreeSet::new();
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let idx = [x << depth, y << depth, z << depth];
                if !in_region(region, idx, depth) {
                    continue;
                }
                let code = NodeCode::from_index(idx, depth);
                let p = map.get_payload(code).unwrap_or_default();
                if keep(&p) {
                    out.insert(code);
                }
            }
        }
    }
    out
}

fn region() -> impl Strategy<Value = Region> {
    let c = -4.5f64..4.5;
    prop_oneof![
        ([c.clone(), c.clone(), c.clone()], [0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0])
            .prop_map(|(lo, ext)| Region::aabb(lo, [lo[0] + ext[0], lo[1] + ext[1], lo[2] + ext[2]])),
        // Box corners on voxel faces.
        ([-8i32..8, -8i32..8, -8i32..8], [0i32..6, 0i32..6, 0i32..6]).prop_map(|(lo, ext)| {
            let lo = lo.map(|v| f64::from(v) * RES);
            Region::aabb(lo, [0, 1, 2].map(|a| lo[a] + f64::from(ext[a]) * RES))
        }),
        ([c.clone(), c.clone(), c], 0.1f64..4.0).prop_map(|(ctr, r)| Region::sphere(ctr, r)),
        Just(Region::Everything),
    ]
}

fn predicate() -> impl Strategy<Value = Predicate> {
    let leaf = prop_oneof![
        (1u8..8).prop_map(|m| {
            let states: Vec<_> = OccupancyState::ALL
                .into_iter()
                .enumerate()
                .filter(|(i, _)| m & (1 << i) != 0)
                .map(|(_, s)| s)
                .collect();
            Predicate::StateIn(StateSet::of(&states))
        }),
        (0u16..5).prop_map(Predicate::HasLabel),
        (0u16..5).prop_map(Predicate::TopLabelIs),
        (0u32..22).prop_map(Predicate::UpdatedBefore),
        (0u32..22).prop_map(Predicate::UpdatedAtOrAfter),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.and(b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.or(b)),
            inner.prop_map(Predicate::not),
        ]
    })
}

fn check_query(map: &OccupancyMap, region: &Region, pred: &Predicate, depth: u8) -> Result<(), TestCaseError> {
    let want = brute(map, region, depth, |p| pred.eval(p, map.config()));
    for prune in [true, false] {
        let got = query_with(map, region, pred, depth, QueryOptions { prune }).unwrap();
        let codes: Vec<NodeCode> = got.iter().map(|(c, _)| *c).collect();
        let set: BTreeSet<NodeCode> = codes.iter().copied().collect();
        prop_assert_eq!(set.len(), codes.len(), "duplicates");
        prop_assert_eq!(&set, &want, "prune={} pred={} region={}", prune, pred, region);
        for (c, p) in &got {
            prop_assert!(p.bit_eq(&map.get_payload(*c).unwrap_or_default()));
        }
    }
    Ok(())
}

#[test]
fn empty_map_examples() {
    let map = OccupancyMap::new(config()).unwrap();
    let occ = Predicate::state_in(&[OccupancyState::Occupied]);
    assert!(query_with(&map, &Region::Everything, &occ, 0, QueryOptions::default()).unwrap().is_empty());
    let cube = Region::aabb([0.1; 3], [0.9; 3]);
    let unk = Predicate::state_in(&[OccupancyState::Unknown]);
    assert_eq!(query_with(&map, &cube, &unk, 0, QueryOptions::default()).unwrap().len(), 8);
}

#[test]
fn sphere_on_inexact_resolution() {
    let map = OccupancyMap::new(MapConfig::with_resolution(0.1, 16)).unwrap();
    let unk = Predicate::state_in(&[OccupancyState::Unknown]);
    let ball = Region::sphere([1.0, 1.0, 0.5], 0.9);
    let found = query_with(&map, &ball, &unk, 0, QueryOptions::default()).unwrap();
    let all = query_with(&map, &ball, &unk, 0, QueryOptions { prune: false }).unwrap();
    assert_eq!(found, all);
    let mut expected = 0;
    for x in 0..20 {
        for y in 0..20 {
            for z in -5..15 {
                let c = [x, y, z].map(|i| i as f64 * 0.1 + 0.05);
                let d2 = (c[0] - 1.0).powi(2) + (c[1] - 1.0).powi(2) + (c[2] - 0.5).powi(2);
                expected += (d2 <= 0.81) as usize;
            }
        }
    }
    assert_eq!(found.len(), expected);
}

#[test]
fn coarse_occupied_iff_child_occupied() {
    let ops: Vec<Op> = (0..40)
        .map(|i| Op {
            idx: [i % 12, (i * 7) % 12, (i * 5) % 12],
            delta: if i % 3 == 0 { 0.85 } else { -0.4 },
            label: None,
            frame: 1,
        })
        .collect();
    let map = build(&ops, false, false, SummaryReducer::Max);
    let occ = Predicate::state_in(&[OccupancyState::Occupied]);
    let coarse = query_with(&map, &Region::Everything, &occ, 1, QueryOptions::default()).unwrap();
    let fine: BTreeSet<NodeCode> = query_with(&map, &Region::Everything, &occ, 0, QueryOptions::default())
        .unwrap()
        .into_iter()
        .map(|(c, _)| c.parent())
        .collect();
    let coarse: BTreeSet<NodeCode> = coarse.into_iter().map(|(c, _)| c).collect();
    assert_eq!(coarse, fine);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn query_matches_brute_force(
        ops in proptest::collection::vec(op(), 0..120),
        fill in any::<bool>(),
        prune in any::<bool>(),
        region in region(),
        pred in predicate(),
        depth in 0u8..4,
    ) {
        let map = build(&ops, fill, prune, SummaryReducer::Max);
        check_query(&map, &region, &pred, depth)?;
    }

    #[test]
    fn query_sound_with_mean_reducer(
        ops in proptest::collection::vec(op(), 0..60),
        region in region(),
        pred in predicate(),
        depth in 0u8..3,
    ) {
        let map = build(&ops, true, true, SummaryReducer::Mean);
        check_query(&map, &region, &pred, depth)?;
    }

    #[test]
    fn counts_match_brute_force(
        ops in proptest::collection::vec(op(), 0..120),
        fill in any::<bool>(),
        prune in any::<bool>(),
        region in region(),
        depth in 0u8..4,
    ) {
        let map = build(&ops, fill, prune, SummaryReducer::Max);
        let got = count_states(&map, &region, depth).unwrap();
        let mut want = StateCounts::default();
        for s in OccupancyState::ALL {
            let n = brute(&map, &region, depth, |p| p.state(map.config()) == s).len() as u64;
            match s {
                OccupancyState::Unknown => want.unknown = n,
                OccupancyState::Free => want.free = n,
                OccupancyState::Occupied => want.occupied = n,
            }
        }
        prop_assert_eq!(got, want);
        prop_assert_eq!(got.total(), brute(&map, &region, depth, |_| true).len() as u64);
    }

    #[test]
    fn occlusion_is_union(
        ops in proptest::collection::vec(op(), 0..120),
        region in region(),
        now in 0u32..40,
        stale_after in 0u32..30,
        depth in 0u8..3,
    ) {
        let map = build(&ops, true, false, SummaryReducer::Max);
        let got: BTreeSet<NodeCode> = occluded(&map, &region, now, stale_after, depth).unwrap().into_iter().collect();
        let unknown = brute(&map, &region, depth, |p| p.state(map.config()) == OccupancyState::Unknown);
        let cutoff = now.saturating_sub(stale_after);
        let stale = brute(&map, &region, depth, |p| p.timestep < cutoff);
        let want: BTreeSet<NodeCode> = unknown.union(&stale).copied().collect();
        prop_assert_eq!(&got, &want);
        // Shrinking the window never shrinks the set.
        let wider: BTreeSet<NodeCode> = occluded(&map, &region, now, stale_after.saturating_sub(5), depth).unwrap().into_iter().collect();
        prop_assert!(got.is_subset(&wider));
    }
}
