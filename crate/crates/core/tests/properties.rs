//! Property tests for the panel, taxonomy and matrix invariants.

use proptest::prelude::*;

use efc_core::complexity;
use efc_core::fixtures;
use efc_core::panel::{ExportPanel, SmoothingConfig};
use efc_core::progression;
use efc_core::taxonomy::TaxonomyTree;

/// Strategy: a small panel as a list of present cells with axis pools kept
/// tiny so collisions across countries/activities actually happen.
fn panel_strategy() -> impl Strategy<Value = ExportPanel> {
    let cell = (
        prop::sample::select(vec!["AAA", "BBB", "CCC", "DDD"]),
        prop::sample::select(vec!["01", "02", "BXSR", "BXSTRA"]),
        1996i32..2004,
        // decimal-friendly magnitudes, incl. zero
        prop::strategy::Union::new([
            Just(0.0).boxed(),
            (0u64..2_000_000).prop_map(|k| k as f64 / 100.0).boxed(),
        ]),
    );
    prop::collection::vec(cell, 1..60).prop_map(|cells| {
        // dedupe triples: keep the first value for each
        let mut seen = std::collections::BTreeSet::new();
        let mut unique = Vec::new();
        for (c, a, y, v) in cells {
            if seen.insert((c, a, y)) {
                unique.push((c.to_owned(), a.to_owned(), y, v));
            }
        }
        ExportPanel::from_cells(unique).expect("valid cells")
    })
}

proptest! {
    #[test]
    fn long_csv_round_trip_is_exact(panel in panel_strategy()) {
        let mut buf = Vec::new();
        panel.write_long_to(&mut buf).unwrap();
        let text = std::str::from_utf8(&buf).unwrap();
        prop_assert!(text.ends_with('\n'));
        prop_assert!(!text.contains('\r'));
        let back = ExportPanel::from_long_reader(&buf[..], "round").unwrap();
        prop_assert_eq!(panel, back);
    }

    #[test]
    fn smoothing_is_a_convex_combination(
        panel in panel_strategy(),
        half_life in 0.5f64..20.0,
    ) {
        let cfg = SmoothingConfig::new(half_life).unwrap();
        let smoothed = panel.smoothed(&cfg);
        let (nc, na, ny) = panel.shape();
        for ci in 0..nc {
            for ai in 0..na {
                let values: Vec<f64> = (0..ny).filter_map(|yi| panel.value(ci, ai, yi)).collect();
                if values.is_empty() {
                    continue;
                }
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for yi in 0..ny {
                    prop_assert_eq!(
                        panel.value(ci, ai, yi).is_some(),
                        smoothed.value(ci, ai, yi).is_some()
                    );
                    if let Some(s) = smoothed.value(ci, ai, yi) {
                        prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn smoothing_commutes_with_positive_rescaling(
        panel in panel_strategy(),
        half_life in 0.5f64..20.0,
        k in 0.01f64..1000.0,
    ) {
        let cfg = SmoothingConfig::new(half_life).unwrap();
        let direct = panel.smoothed(&cfg);
        let mut scaled_cells = Vec::new();
        let (nc, na, ny) = panel.shape();
        for ci in 0..nc {
            for ai in 0..na {
                for yi in 0..ny {
                    if let Some(v) = panel.value(ci, ai, yi) {
                        scaled_cells.push((
                            panel.countries()[ci].clone(),
                            panel.activities()[ai].clone(),
                            panel.years()[yi],
                            k * v,
                        ));
                    }
                }
            }
        }
        if scaled_cells.is_empty() {
            return Ok(());
        }
        let scaled = ExportPanel::from_cells(scaled_cells).unwrap().smoothed(&cfg);
        for ci in 0..nc {
            for ai in 0..na {
                for yi in 0..ny {
                    if let Some(v) = direct.value(ci, ai, yi) {
                        // scaled panel may have different axes ordering only
                        // if axes differ; they do not, values were copied
                        let w = scaled
                            .value_by_label(
                                &panel.countries()[ci],
                                &panel.activities()[ai],
                                panel.years()[yi],
                            )
                            .unwrap();
                        prop_assert!((w - k * v).abs() <= 1e-9 * (1.0 + w.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn masking_leaves_exactly_the_complement(
        panel in panel_strategy(),
        fraction in 0.05f64..0.95,
        seed in 0u64..1000,
    ) {
        let present = panel.present_count();
        let (masked, mask) = panel.mask_random(fraction, seed).unwrap();
        let expect = (fraction * present as f64).round() as usize;
        prop_assert_eq!(mask.marked_count(), expect);
        prop_assert_eq!(masked.present_count(), present - expect);
        // a mask only marks cells that were present
        for (c, a, y) in mask.marked() {
            prop_assert!(!panel.is_missing(c, a, y));
            prop_assert!(masked.is_missing(c, a, y));
        }
    }
}

/// Strategy: random valid taxonomy trees (every leaf marked complete).
fn tree_strategy() -> impl Strategy<Value = TaxonomyTree> {
    // parent index for node i is drawn from 0..i
    prop::collection::vec(0usize..100, 1..16).prop_map(|parents| {
        let n = parents.len() + 1;
        let mut parent_of = vec![usize::MAX; n];
        let mut layer = vec![0u32; n];
        for i in 1..n {
            let p = parents[i - 1] % i;
            parent_of[i] = p;
            layer[i] = layer[p] + 1;
        }
        let is_leaf: Vec<bool> = (0..n).map(|i| !parent_of.contains(&i)).collect();
        let mut csv = String::from("code,parent,layer,description,complete_set\n");
        for i in 0..n {
            let parent = if i == 0 {
                String::new()
            } else {
                format!("N{:02}", parent_of[i])
            };
            csv.push_str(&format!(
                "N{i:02},{parent},{},node {i},{}\n",
                layer[i],
                u8::from(is_leaf[i])
            ));
        }
        TaxonomyTree::from_reader(csv.as_bytes(), "prop").expect("generated tree is valid")
    })
}

proptest! {
    #[test]
    fn taxonomy_round_trip_for_random_trees(tree in tree_strategy()) {
        let mut buf = Vec::new();
        tree.write_to(&mut buf).unwrap();
        let back = TaxonomyTree::from_reader(&buf[..], "round").unwrap();
        prop_assert_eq!(tree, back);
    }

    #[test]
    fn assist_rows_sum_to_one_for_positive_degrees(
        seed in 0u64..500,
        nc in 3usize..10,
        na in 2usize..8,
    ) {
        let m_t = fixtures::random_binary_matrix(nc, na, 0.4, seed, true);
        let m_td = {
            let m = fixtures::random_binary_matrix(nc, na, 0.4, seed.wrapping_add(7919), true);
            complexity::CompetitivenessMatrix::binary(
                m_t.countries().to_vec(),
                m_t.activities().to_vec(),
                2001,
                m.cells().clone(),
            )
            .unwrap()
        };
        let b = progression::assist_matrix(&m_t, &m_td).unwrap();
        for row in b.cells().rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }
}
