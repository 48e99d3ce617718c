use fogtype::evaluation::{combined_score, feature_set_performance, ReportRow};

/// (set, DMAP, TMAP, FP, Private, Public, Total) as printed.
const PRELIMINARY: [(&str, f64, f64, f64, f64, f64, f64); 7] = [
    ("A", 0.224, 0.642, 0.367, 0.330, 0.323, 0.328),
    ("B", 0.250, 0.687, 0.400, 0.362, 0.374, 0.366),
    ("C", 0.214, 0.669, 0.370, 0.420, 0.393, 0.411),
    ("D", 0.237, 0.686, 0.391, 0.342, 0.372, 0.352),
    ("E", 0.239, 0.659, 0.383, 0.400, 0.342, 0.381),
    ("F", 0.227, 0.652, 0.373, 0.391, 0.352, 0.378),
    ("G", 0.112, 0.601, 0.280, 0.156, 0.238, 0.183),
];

const IMPROVED: [(&str, f64, f64, f64, f64, f64, f64); 6] = [
    ("A", 0.300, 0.642, 0.417, 0.356, 0.328, 0.347),
    ("B", 0.251, 0.687, 0.400, 0.377, 0.376, 0.377),
    ("C", 0.308, 0.669, 0.432, 0.443, 0.392, 0.427),
    ("D", 0.264, 0.686, 0.409, 0.349, 0.374, 0.357),
    ("E", 0.310, 0.659, 0.430, 0.408, 0.350, 0.389),
    ("F", 0.262, 0.652, 0.395, 0.397, 0.357, 0.384),
];

#[test]
fn feature_set_performance_matches_printed_fp() {
    for (set, d, t, fp, ..) in PRELIMINARY.iter().chain(IMPROVED.iter()) {
        let got = feature_set_performance(*d, *t).unwrap();
        assert!((got - fp).abs() <= 0.001, "set {set}: {got} vs {fp}");
    }
}

#[test]
fn combined_score_matches_printed_total() {
    for (set, .., p, q, total) in PRELIMINARY.iter().chain(IMPROVED.iter()) {
        let got = combined_score(*p, *q).unwrap();
        assert!((got - total).abs() <= 0.002, "set {set}: {got} vs {total}");
    }
}

#[test]
fn best_rows_are_set_c() {
    fn best(rows: &[(&'static str, f64, f64, f64, f64, f64, f64)]) -> &'static str {
        rows.iter()
            .max_by(|a, b| combined_score(a.4, a.5).unwrap().total_cmp(&combined_score(b.4, b.5).unwrap()))
            .unwrap()
            .0
    }
    assert_eq!(best(&PRELIMINARY), "C");
    assert_eq!(best(&IMPROVED), "C");
}

#[test]
fn report_rounds_to_printed_values() {
    let (set, d, t, fp, p, q, total) = IMPROVED[2];
    let row = ReportRow::new(set, d, t, Some((p, q))).unwrap();
    assert_eq!(format!("{:.3}", row.fp), format!("{fp:.3}"));
    assert_eq!(format!("{:.3}", row.total.unwrap()), format!("{total:.3}"));
}
