use std::collections::BTreeSet;

use biokm::route_filter::{star_paths, FilterError, FilterMatrix, Orientation, PathUsage};
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = (FilterMatrix, Vec<String>)> {
    (1usize..7, 1usize..7)
        .prop_flat_map(|(l, p)| (Just(l), proptest::collection::vec(proptest::collection::vec(any::<bool>(), l), p)))
        .prop_map(|(l, uses)| {
            let links: Vec<String> = (1..=l).map(|i| format!("L{i}")).collect();
            let paths: Vec<PathUsage> = uses
                .iter()
                .enumerate()
                .map(|(k, row)| {
                    let used = links.iter().zip(row).filter(|(_, &u)| u).map(|(n, _)| n.clone());
                    PathUsage::new(format!("P{}", k + 1), used.collect::<Vec<_>>())
                })
                .collect();
            (FilterMatrix::build(&paths, &links).unwrap(), links)
        })
}

proptest! {
    #[test]
    fn transpose_is_an_involution((m, _) in matrix()) {
        let t = m.transpose();
        prop_assert_eq!(t.orientation(), Orientation::PathsByLinks);
        prop_assert_eq!(t.row_labels(), m.col_labels());
        for r in 0..m.row_labels().len() {
            for c in 0..m.col_labels().len() {
                prop_assert_eq!(m.get(r, c), t.get(c, r));
            }
        }
        prop_assert_eq!(t.transpose(), m);
    }

    #[test]
    fn range_and_domain_agree_with_cells((m, _) in matrix()) {
        let range: BTreeSet<String> = (0..m.paths().len())
            .filter(|&p| (0..m.links().len()).any(|l| m.uses(l, p)))
            .map(|p| m.paths()[p].clone())
            .collect();
        let domain: BTreeSet<String> = (0..m.links().len())
            .filter(|&l| (0..m.paths().len()).any(|p| m.uses(l, p)))
            .map(|l| m.links()[l].clone())
            .collect();
        prop_assert_eq!(m.relation_range(), range);
        prop_assert_eq!(m.relation_domain(), domain);
        prop_assert_eq!(m.transpose().relation_range(), m.relation_range());
    }

    #[test]
    fn failures_only_remove_paths((m, links) in matrix(), mask in any::<u8>()) {
        let failed: Vec<&String> = links.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, l)| l).collect();
        let alive = m.surviving_paths(&failed).unwrap();
        let none: [&str; 0] = [];
        prop_assert_eq!(m.surviving_paths(&none).unwrap(), m.paths().to_vec());
        for (p, name) in m.paths().iter().enumerate() {
            let hit = (0..links.len()).any(|l| m.uses(l, p) && failed.contains(&&links[l]));
            prop_assert_eq!(alive.contains(name), !hit);
        }
        // failing every link leaves only paths that use none
        let all = m.surviving_paths(&links).unwrap();
        let unused: Vec<String> = m.paths().iter().filter(|p| !m.relation_range().contains(*p)).cloned().collect();
        prop_assert_eq!(all, unused);
    }

    #[test]
    fn csv_round_trip((m, _) in matrix()) {
        for x in [m.clone(), m.transpose()] {
            let mut buf = Vec::new();
            x.write_csv(&mut buf).unwrap();
            prop_assert_eq!(FilterMatrix::read_csv(buf.as_slice()).unwrap(), x);
        }
    }
}

#[test]
fn unknown_failed_link_is_an_error() {
    let (links, paths) = star_paths(&["c1", "c2"]);
    let m = FilterMatrix::build(&paths, &links).unwrap();
    assert!(matches!(m.surviving_paths(&["L9"]), Err(FilterError::UnknownLink(_))));
}

#[test]
fn star_paths_cross_two_spokes() {
    let (links, paths) = star_paths(&["c1", "c2", "c3"]);
    let m = FilterMatrix::build(&paths, &links).unwrap();
    assert_eq!(m.paths().len(), 3);
    for p in 0..3 {
        assert_eq!((0..3).filter(|&l| m.uses(l, p)).count(), 2);
    }
    assert_eq!(m.surviving_paths(&[&links[0]]).unwrap().len(), 1);
}
