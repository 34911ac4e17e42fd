use proptest::prelude::*;
use sotkit::der::{der, shift_segments};
use sotkit::frames::RoleSegment;
use sotkit::model::{SpeakerRole, TimeInterval};

/// Segments with endpoints on a 0.1 s grid, given in tenths.
fn segs(raw: &[(bool, u32, u32)]) -> Vec<RoleSegment> {
    raw.iter()
        .map(|&(child, a, len)| {
            let role = if child { SpeakerRole::Child } else { SpeakerRole::Adult };
            RoleSegment::new(role, TimeInterval::new(a as f64 / 10.0, (a + len) as f64 / 10.0).unwrap())
        })
        .collect()
}

/// Reference spans never overlap across or within roles.
fn disjoint_reference(raw: &[(bool, u32, u32)]) -> Vec<(bool, u32, u32)> {
    let mut out = Vec::new();
    let mut t = 0;
    for &(child, gap, len) in raw {
        out.push((child, t + gap, len));
        t += gap + len;
    }
    out
}

/// Millisecond rasterization: per cell, count active roles on each side.
fn rasterized(reference: &[RoleSegment], hypothesis: &[RoleSegment]) -> (f64, f64, f64, f64) {
    let to_ms = |x: f64| (x * 1000.0).round() as i64;
    let end = reference.iter().chain(hypothesis).map(|s| to_ms(s.span.end())).max().unwrap_or(0);
    let on = |segs: &[RoleSegment], role: SpeakerRole, c: i64| {
        segs.iter().any(|s| s.role == role && to_ms(s.span.start()) <= c && c < to_ms(s.span.end()))
    };
    let (mut md, mut fa, mut sc, mut total) = (0i64, 0i64, 0i64, 0i64);
    for c in 0..end {
        let r: Vec<bool> = SpeakerRole::ALL.iter().map(|role| on(reference, *role, c)).collect();
        let h: Vec<bool> = SpeakerRole::ALL.iter().map(|role| on(hypothesis, *role, c)).collect();
        let nr = r.iter().filter(|x| **x).count() as i64;
        let nh = h.iter().filter(|x| **x).count() as i64;
        let both = r.iter().zip(&h).filter(|(x, y)| **x && **y).count() as i64;
        total += nr;
        md += (nr - nh).max(0);
        fa += (nh - nr).max(0);
        sc += nr.min(nh) - both;
    }
    (md as f64 / 1000.0, fa as f64 / 1000.0, sc as f64 / 1000.0, total as f64 / 1000.0)
}

fn seg_strategy() -> impl Strategy<Value = Vec<(bool, u32, u32)>> {
    prop::collection::vec((any::<bool>(), 0u32..30, 1u32..30), 0..=5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn sweep_matches_rasterization(r in seg_strategy(), h in seg_strategy()) {
        let reference = segs(&disjoint_reference(&r));
        let hypothesis = segs(&h);
        prop_assume!(!reference.is_empty());
        let d = der(&reference, &hypothesis, 0.0).unwrap();
        let (md, fa, sc, total) = rasterized(&reference, &hypothesis);
        prop_assert!((d.missed - md).abs() < 1e-9);
        prop_assert!((d.false_alarm - fa).abs() < 1e-9);
        prop_assert!((d.confusion - sc).abs() < 1e-9);
        prop_assert!((d.total - total).abs() < 1e-9);
    }

    #[test]
    fn shift_invariant(r in seg_strategy(), h in seg_strategy(), delta in 0u32..500) {
        let reference = segs(&disjoint_reference(&r));
        let hypothesis = segs(&h);
        prop_assume!(!reference.is_empty());
        let delta = delta as f64 / 10.0;
        let a = der(&reference, &hypothesis, 0.0).unwrap();
        let b = der(&shift_segments(&reference, delta), &shift_segments(&hypothesis, delta), 0.0).unwrap();
        prop_assert!((a.der - b.der).abs() < 1e-9);
        prop_assert!((a.missed - b.missed).abs() < 1e-9);
        prop_assert!((a.confusion - b.confusion).abs() < 1e-9);
    }

    #[test]
    fn components_stay_non_negative(r in seg_strategy(), h in seg_strategy(), drop in 0usize..5) {
        let reference = segs(&disjoint_reference(&r));
        let mut hypothesis = segs(&h);
        prop_assume!(!reference.is_empty());
        if drop < hypothesis.len() {
            hypothesis.remove(drop);
        }
        let d = der(&reference, &hypothesis, 0.0).unwrap();
        prop_assert!(d.missed >= 0.0 && d.false_alarm >= 0.0 && d.confusion >= 0.0 && d.der >= 0.0);
    }
}
