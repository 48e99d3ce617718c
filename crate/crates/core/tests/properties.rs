#![allow(clippy::needless_range_loop)]

use std::collections::BTreeSet;

use fogtype::data::{Domain, Labels, Provenance, TimeSeries};
use fogtype::evaluation::{average_precision, combined_score, feature_set_performance, map_score};
use fogtype::features::{
    build_feature_matrix, compute_jerk, compute_magnitude, compute_time_frac, feature_columns, standardize,
    FeatureMatrix, FeatureSetId, Standardization,
};
use fogtype::model::{param_count, patch_targets, TransBiLstmConfig};
use fogtype::nn::Tensor;
use fogtype::pseudolabel::{argmax_first, assign_pseudo_labels};
use fogtype::stats::{kmeans, pca_fit_transform, pearson_correlation};
use fogtype::training::{assign_folds, make_windows, window_count};
use proptest::prelude::*;

fn signal(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 2..max_len)
}

fn three_channels() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(-3.0f64..3.0, n),
            prop::collection::vec(-3.0f64..3.0, n),
        )
    })
}

fn rows(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), n)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Precision at each positive's rank, with ranks computed by counting
/// rather than sorting; equal scores rank by index.
fn ap_by_counting(scores: &[f64], labels: &[u8]) -> f64 {
    let rank = |i: usize| {
        1 + (0..scores.len())
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count()
    };
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let sum: f64 = pos
        .iter()
        .map(|&i| {
            let r = rank(i);
            let hits = pos.iter().filter(|&&j| rank(j) <= r).count();
            hits as f64 / r as f64
        })
        .sum();
    sum / pos.len() as f64
}

fn series_of(v: Vec<f64>, ml: Vec<f64>, ap: Vec<f64>) -> TimeSeries {
    let n = v.len();
    TimeSeries::new("p", Domain::Defog, v, ml, ap, Labels::Typed(vec![[0, 0, 0]; n]))
        .unwrap()
        .harmonize_units()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jerk_is_linear(x in signal(50), a in -3.0f64..3.0, b in -3.0f64..3.0, rate in 1.0f64..200.0) {
        let y: Vec<f64> = x.iter().map(|v| (v * 1.7).sin()).collect();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let jm = compute_jerk(&mix, rate).unwrap();
        let jx = compute_jerk(&x, rate).unwrap();
        let jy = compute_jerk(&y, rate).unwrap();
        prop_assert_eq!(jm[0], 0.0);
        for i in 0..x.len() {
            prop_assert!(close(jm[i], a * jx[i] + b * jy[i], 1e-10));
        }
    }

    #[test]
    fn jerk_of_a_constant_is_zero(c in -5.0f64..5.0, n in 1usize..40) {
        prop_assert!(compute_jerk(&vec![c; n], 100.0).unwrap().iter().all(|&j| j == 0.0));
    }

    #[test]
    fn magnitude_dominates_every_channel((v, ml, ap) in three_channels()) {
        let m = compute_magnitude(&v, &ml, &ap).unwrap();
        for i in 0..v.len() {
            prop_assert!(m[i] + 1e-12 >= v[i].abs().max(ml[i].abs()).max(ap[i].abs()));
            prop_assert!(m[i] <= v[i].abs() + ml[i].abs() + ap[i].abs() + 1e-12);
        }
    }

    #[test]
    fn time_frac_is_monotone_in_unit_interval(t in 1usize..500) {
        let f = compute_time_frac(t).unwrap();
        prop_assert_eq!(f.len(), t);
        prop_assert_eq!(f[0], 0.0);
        if t > 1 {
            prop_assert_eq!(f[t - 1], 1.0);
        }
        prop_assert!(f.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn set_d_matrix_matches_channel_operations((v, ml, ap) in three_channels()) {
        let s = series_of(v, ml, ap);
        let m = build_feature_matrix(&s, FeatureSetId::D, None, None, None).unwrap();
        prop_assert_eq!(m.width(), 9);
        let acc_m = m.column(7);
        let expect = compute_magnitude(s.acc_v(), s.acc_ml(), s.acc_ap()).unwrap();
        prop_assert_eq!(&acc_m, &expect);
        prop_assert_eq!(m.column(8), compute_jerk(&expect, s.sample_rate_hz()).unwrap());
        prop_assert_eq!(m.column(4), compute_jerk(s.acc_v(), s.sample_rate_hz()).unwrap());
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_std((v, ml, ap) in three_channels()) {
        let s = series_of(v, ml, ap);
        let m = build_feature_matrix(&s, FeatureSetId::C, None, None, None).unwrap();
        let stats = Standardization::fit([&m]).unwrap();
        let z = standardize(&m, &stats).unwrap();
        for (j, name) in z.columns.iter().enumerate() {
            let col = z.column(j);
            if name == "TimeFrac" {
                prop_assert_eq!(col, m.column(j));
                continue;
            }
            if stats.std[j] == 0.0 {
                continue;
            }
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pearson_is_affine_invariant(x in signal(40), y_noise in signal(40), a in 0.1f64..5.0, b in -5.0f64..5.0) {
        let n = x.len().min(y_noise.len());
        let x = &x[..n];
        let y: Vec<f64> = x.iter().zip(&y_noise[..n]).map(|(p, q)| p + q).collect();
        let (Ok(r), Ok(r_pos), Ok(r_neg)) = (
            pearson_correlation(x, &y),
            pearson_correlation(&x.iter().map(|v| a * v + b).collect::<Vec<_>>(), &y),
            pearson_correlation(&x.iter().map(|v| -a * v + b).collect::<Vec<_>>(), &y),
        ) else {
            return Ok(());
        };
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        prop_assert!(close(r, r_pos, 1e-9));
        prop_assert!(close(r, -r_neg, 1e-9));
    }

    #[test]
    fn pca_components_are_orthonormal(data in rows(6..30, 4)) {
        let (pca, scores) = pca_fit_transform(&data, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = pca.components[i].iter().zip(&pca.components[j]).map(|(a, b)| a * b).sum();
                let expected = f64::from(u8::from(i == j));
                prop_assert!((dot - expected).abs() < 1e-9);
            }
        }
        prop_assert!(pca.explained_variance.windows(2).all(|w| w[0] + 1e-12 >= w[1]));
        prop_assert!(pca.explained_variance.iter().all(|&v| v >= 0.0));
        for k in 0..3 {
            let mean = scores.iter().map(|s| s[k]).sum::<f64>() / scores.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn full_rank_pca_reconstructs(data in rows(5..20, 3)) {
        let (pca, scores) = pca_fit_transform(&data, 3).unwrap();
        let back = pca.inverse_transform(&scores).unwrap();
        for (r, b) in data.iter().zip(&back) {
            for (x, y) in r.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn kmeans_wcss_never_increases(data in rows(4..40, 2), k in 1usize..4, seed in 0u64..1000) {
        let c = kmeans(&data, k, seed, 100).unwrap();
        prop_assert!(!c.wcss_history.is_empty());
        for w in c.wcss_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", c.wcss_history);
        }
        prop_assert!(close(*c.wcss_history.last().unwrap(), c.wcss(&data), 1e-9));
        prop_assert!(c.assignments.iter().all(|&a| a < k));
    }

    #[test]
    fn ap_equals_counting_oracle(
        data in prop::collection::vec((0u8..8, 0u8..2), 1..40),
    ) {
        // coarse scores produce many ties
        let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 8.0).collect();
        let labels: Vec<u8> = data.iter().map(|(_, l)| *l).collect();
        match average_precision(&scores, &labels) {
            Ok(ap) => {
                prop_assert!(close(ap, ap_by_counting(&scores, &labels), 1e-12));
                prop_assert!((0.0..=1.0).contains(&ap));
            }
            Err(_) => prop_assert!(!labels.contains(&1)),
        }
    }

    #[test]
    fn map_is_row_permutation_invariant(
        data in prop::collection::vec((prop::array::uniform3(0.0f64..1.0), prop::array::uniform3(0u8..2)), 2..30),
        seed in any::<u64>(),
    ) {
        let probs: Vec<Vec<f64>> = data.iter().map(|(p, _)| p.to_vec()).collect();
        let labels: Vec<Vec<f64>> = data.iter().map(|(_, y)| y.iter().map(|&v| f64::from(v)).collect()).collect();
        let mut order: Vec<usize> = (0..data.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut fogtype::rng::seeded(seed));
        let p = Tensor::from_rows(&probs).unwrap();
        let y = Tensor::from_rows(&labels).unwrap();
        let pp = Tensor::from_rows(&order.iter().map(|&i| probs[i].clone()).collect::<Vec<_>>()).unwrap();
        let yp = Tensor::from_rows(&order.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>()).unwrap();
        match (map_score(&p, &y), map_score(&pp, &yp)) {
            (Ok(a), Ok(b)) => prop_assert!(close(a, b, 1e-12)),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn scores_are_convex_combinations(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        for v in [feature_set_performance(a, b).unwrap(), combined_score(a, b).unwrap()] {
            prop_assert!(v >= a.min(b) - 1e-15 && v <= a.max(b) + 1e-15);
        }
    }

    #[test]
    fn pseudo_labels_conserve_event_mass(
        data in prop::collection::vec((0u8..2, prop::array::uniform3(0.0f64..1.0)), 1..80),
    ) {
        let events: Vec<u8> = data.iter().map(|(e, _)| *e).collect();
        let n = events.len();
        let s = TimeSeries::new("n", Domain::Notype, vec![0.1; n], vec![0.0; n], vec![0.2; n], Labels::Event(events.clone()))
            .unwrap();
        let probs = Tensor::from_rows(&data.iter().map(|(_, p)| p.to_vec()).collect::<Vec<_>>()).unwrap();
        let prov = Provenance { group_id: "g".into(), feature_set: FeatureSetId::A, seed: 0 };
        let out = assign_pseudo_labels(&s, &probs, prov.clone()).unwrap();
        let again = assign_pseudo_labels(&s, &probs, prov).unwrap();
        prop_assert_eq!(&out, &again);
        let typed = out.series.labels().typed().unwrap();
        let one_hot = typed.iter().filter(|r| r.iter().map(|&v| u32::from(v)).sum::<u32>() == 1).count();
        prop_assert_eq!(one_hot, events.iter().filter(|&&e| e == 1).count());
        for (i, row) in typed.iter().enumerate() {
            if events[i] == 1 {
                prop_assert_eq!(row[argmax_first(probs.row(i))], 1);
            } else {
                prop_assert_eq!(row, &[0, 0, 0]);
            }
        }
    }

    #[test]
    fn windows_cover_every_row(t in 1usize..300, w in 1usize..64, s_frac in 0.0f64..1.0) {
        let s = ((w as f64 * s_frac) as usize).clamp(1, w);
        let m = FeatureMatrix {
            trial_id: "t".into(),
            set_id: FeatureSetId::A,
            columns: feature_columns(FeatureSetId::A, 0),
            values: Tensor::from_vec(vec![t, 3], (0..3 * t).map(|v| v as f64).collect()).unwrap(),
        };
        let y = Tensor::zeros(vec![t, 3]);
        let wins = make_windows(&m, &y, w, s).unwrap();
        prop_assert_eq!(wins.len(), window_count(t, w, s));
        let mut covered = vec![false; t];
        for win in &wins {
            prop_assert_eq!(win.features.rows(), w);
            for r in 0..win.valid {
                covered[win.start + r] = true;
                prop_assert_eq!(win.features.row(r), m.values.row(win.start + r));
            }
        }
        prop_assert!(covered.iter().all(|&c| c));
        let last = wins.last().unwrap();
        prop_assert_eq!(last.start + last.valid, t);
    }

    #[test]
    fn patch_targets_follow_majority(
        rows in prop::collection::vec(prop::array::uniform3(0u8..2), 1..40),
        patch in 1usize..6,
        pad in 0usize..10,
    ) {
        let valid = rows.len();
        let mut data: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
        data.extend(std::iter::repeat_n(vec![1.0, 1.0, 1.0], pad));
        let labels = Tensor::from_rows(&data).unwrap();
        let (targets, mask) = patch_targets(&labels, valid, patch);
        for (p, &m) in mask.iter().enumerate() {
            let start = p * patch;
            let end = ((p + 1) * patch).min(valid);
            prop_assert_eq!(m, start < end);
            if !m {
                continue;
            }
            for c in 0..3 {
                let pos = (start..end).filter(|&i| rows[i][c] == 1).count();
                prop_assert_eq!(targets.get(p, c) == 1.0, 2 * pos >= end - start);
            }
        }
    }

    #[test]
    fn param_count_is_affine_in_input_dim(
        patch_len in 1usize..8, d_model in 2usize..24, n_heads in 1usize..4, d_head in 1usize..8,
        ffn in 1usize..16, enc in 0usize..3, lstm in 1usize..3, half in 1usize..8, d in 1usize..12,
    ) {
        let cfg = |input_dim| TransBiLstmConfig {
            input_dim, patch_len, d_model, n_heads, d_head, ffn_units: ffn,
            n_encoder_layers: enc, n_bilstm_layers: lstm, bilstm_out: 2 * half, dropout_rate: 0.0,
        };
        let slope = param_count(&cfg(d + 1)) as i64 - param_count(&cfg(d)) as i64;
        prop_assert_eq!(slope, (patch_len * d_model) as i64);
    }

    #[test]
    fn folds_partition_trials(n_real in 3usize..30, n_pseudo in 0usize..10, n_folds in 2usize..4, seed in any::<u64>()) {
        prop_assume!(n_real >= n_folds);
        let real: Vec<String> = (0..n_real).map(|i| format!("r{i}")).collect();
        let pseudo: Vec<String> = (0..n_pseudo).map(|i| format!("p{i}")).collect();
        let all = assign_folds(
            real.iter().map(|s| (s.as_str(), false)).chain(pseudo.iter().map(|s| (s.as_str(), true))),
            n_folds,
            seed,
        ).unwrap();
        let only_real = assign_folds(real.iter().map(|s| (s.as_str(), false)), n_folds, seed).unwrap();
        prop_assert_eq!(all.len(), n_real + n_pseudo);
        let mut sizes = vec![0usize; n_folds];
        for r in &real {
            prop_assert_eq!(all[r], only_real[r]);
            sizes[all[r]] += 1;
        }
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

#[test]
fn feature_sets_nest() {
    let cols = |s| feature_columns(s, 3).into_iter().collect::<BTreeSet<_>>();
    use FeatureSetId::*;
    for (small, big) in [(A, B), (B, C), (C, D), (C, E), (D, F), (E, F), (C, G)] {
        assert!(cols(small).is_subset(&cols(big)), "{small} within {big}");
    }
    for s in FeatureSetId::ALL {
        assert_eq!(feature_columns(s, 3).len(), s.width(3));
    }
}
