use num_traits::Signed;
use proptest::prelude::*;
use robcomm_core::games::{q, Q};
use robcomm_core::mediated::{build_partition, build_partition_bits, jcl_output, pushforward_counts, UnitFraction};

/// Normalized weights as a distribution.
fn row(weights: &[u32]) -> Vec<Q> {
    let total: i64 = weights.iter().map(|w| *w as i64).sum();
    weights.iter().map(|w| q(*w as i64, total)).collect()
}

fn weights() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..20, 2..6).prop_filter("non-zero", |w| w.iter().any(|x| *x > 0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn addition_is_associative_and_commutative(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (a, b, c) = (UnitFraction(a), UnitFraction(b), UnitFraction(c));
        prop_assert_eq!((a + b) + c, a + (b + c));
        prop_assert_eq!(a + b, b + a);
        prop_assert_eq!(a + UnitFraction(0), a);
    }

    #[test]
    fn shifting_is_a_bijection(x in any::<u64>(), ys in prop::collection::vec(any::<u64>(), 2..20)) {
        // y -> x + y is injective, so a uniform y gives a uniform sum.
        let mut sums: Vec<u64> = ys.iter().map(|y| (UnitFraction(x) + UnitFraction(*y)).0).collect();
        let mut ys = ys.clone();
        ys.sort();
        ys.dedup();
        sums.sort();
        sums.dedup();
        prop_assert_eq!(sums.len(), ys.len());
    }

    #[test]
    fn pushforward_equals_widths(w in weights(), x in any::<u64>(), bits in 4u32..=12) {
        let p = build_partition_bits(&row(&w), bits).unwrap();
        let x = UnitFraction(x & ((1 << bits) - 1));
        let counts = pushforward_counts(x, &p);
        let widths: Vec<u128> = (0..p.len()).map(|a| p.width(a)).collect();
        prop_assert_eq!(counts, widths);
    }

    #[test]
    fn widths_round_the_device(w in weights(), bits in 1u32..=64) {
        let r = row(&w);
        let p = build_partition_bits(&r, bits).unwrap();
        prop_assert_eq!(p.bounds[0], 0);
        prop_assert_eq!(*p.bounds.last().unwrap(), 1u128 << bits);
        let scale = Q::from_integer((1u128 << bits).into());
        // The residual goes to the largest cell, the last one among equals.
        let big = (0..r.len()).max_by(|a, b| r[*a].cmp(&r[*b])).unwrap();
        for (a, phi) in r.iter().enumerate() {
            let err = (Q::from_integer(p.width(a).into()) - phi * &scale).abs();
            let bound = if a == big { q(r.len() as i64, 1) } else { q(1, 2) };
            prop_assert!(err <= bound, "cell {a} width {} phi {phi}", p.width(a));
            if phi == &q(0, 1) {
                prop_assert_eq!(p.width(a), 0);
            }
        }
    }

    #[test]
    fn output_depends_on_the_sum_only(w in weights(), x in any::<u64>(), y in any::<u64>()) {
        let p = build_partition(&row(&w)).unwrap();
        let (x, y) = (UnitFraction(x), UnitFraction(y));
        prop_assert_eq!(jcl_output(x, y, &p), jcl_output(UnitFraction(0), x + y, &p));
        prop_assert_eq!(jcl_output(x, y, &p), jcl_output(y, x, &p));
    }
}
