use boundloop_core::eval::{boundary_f1, token_f1, token_f1_segmentation};
use boundloop_core::{AlignedWord, GoldAlignment, Segmentation, VadSegment, VadSet};
use proptest::prelude::*;

const END_MS: u32 = 2000;

fn vad() -> VadSegment {
    VadSegment::new("u", 0.0, END_MS as f64 / 1000.0).unwrap()
}

fn seg(ms: &[u32]) -> Segmentation {
    let mut s = Segmentation::new();
    s.insert(&vad(), ms.iter().map(|&m| m as f64 / 1000.0));
    s
}

fn gold_of(s: &Segmentation) -> GoldAlignment {
    let t = s.get("u").unwrap();
    let words = t.windows(2).map(|w| AlignedWord::new("w", w[0], w[1])).collect();
    let mut g = GoldAlignment::new();
    g.insert("u", words).unwrap();
    g
}

fn internal() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::btree_set(1..END_MS, 0..10).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn shrinking_tolerance_never_increases(h in internal(), g in internal(), tol in 0.0f64..0.1, f in 0.0f64..1.0) {
        let (hs, gs) = (seg(&h), seg(&g));
        let small = tol * f;
        let tb = boundary_f1(&hs, &gs, tol).unwrap();
        let sb = boundary_f1(&hs, &gs, small).unwrap();
        prop_assert!(sb.f1 <= tb.f1 && sb.precision <= tb.precision && sb.recall <= tb.recall);
        let tt = token_f1(&hs, &gold_of(&gs), tol).unwrap();
        let st = token_f1(&hs, &gold_of(&gs), small).unwrap();
        prop_assert!(st.f1 <= tt.f1 && st.precision <= tt.precision && st.recall <= tt.recall);
    }

    #[test]
    fn boundary_f1_swap_symmetry(h in internal(), g in internal()) {
        let a = boundary_f1(&seg(&h), &seg(&g), 0.03).unwrap();
        let b = boundary_f1(&seg(&g), &seg(&h), 0.03).unwrap();
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
        prop_assert!((a.f1 - b.f1).abs() < 1e-15);
    }

    #[test]
    fn scores_are_fractions(h in internal(), g in internal()) {
        for p in [boundary_f1(&seg(&h), &seg(&g), 0.03).unwrap(), token_f1(&seg(&h), &gold_of(&seg(&g)), 0.03).unwrap()] {
            for v in [p.precision, p.recall, p.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn perfect_token_f1_iff_boundaries_coincide(g in internal(), shifts in prop::collection::vec(-30i32..=30, 10)) {
        let gs = seg(&g);
        let gold = gold_of(&gs);
        // boundaries moved by at most the tolerance, order kept
        let mut h: Vec<u32> = g.iter().zip(&shifts).map(|(&b, &d)| (b as i32 + d).clamp(1, END_MS as i32 - 1) as u32).collect();
        h.sort_unstable();
        h.dedup();
        let hs = seg(&h);
        let f1 = token_f1(&hs, &gold, 0.03).unwrap().f1;
        let ht = hs.get("u").unwrap();
        let gt = gs.get("u").unwrap();
        let coincide = ht.len() == gt.len() && ht.iter().zip(gt).all(|(a, b)| (a - b).abs() <= 0.03 + 1e-9);
        prop_assert_eq!(f1 == 1.0, coincide);
        prop_assert_eq!(f1, token_f1_segmentation(&hs, &gs, 0.03).unwrap().f1);
    }
}

#[test]
fn vad_baseline_gets_edge_credit_only() {
    let v = VadSet::from_segments([vad()]).unwrap();
    let g = seg(&[400, 900, 1300]);
    let h = Segmentation::edges_only(&v);
    assert_eq!(token_f1(&h, &gold_of(&g), 0.03).unwrap().f1, 0.0);
    let b = boundary_f1(&h, &g, 0.03).unwrap();
    assert_eq!((b.precision, b.recall), (1.0, 0.4));
}
