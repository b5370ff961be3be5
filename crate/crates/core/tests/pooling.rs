use aga_core::{masked_average_pool, FeatureMap, InstanceMask};
use proptest::prelude::*;

const H: usize = 4;
const W: usize = 5;
const C: usize = 3;

fn features() -> impl Strategy<Value = FeatureMap<f64>> {
    prop::collection::vec(-10.0f64..10.0, H * W * C).prop_map(|v| FeatureMap::new(H, W, C, v).unwrap())
}

fn mask() -> impl Strategy<Value = InstanceMask<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..=1.0], H * W)
        .prop_filter("non-empty", |v| v.iter().any(|&x| x > 0.0))
        .prop_map(|v| InstanceMask::new(H, W, v).unwrap())
}

fn combine(a: &FeatureMap<f64>, b: &FeatureMap<f64>, x: f64, y: f64) -> FeatureMap<f64> {
    let v = a.values().iter().zip(b.values()).map(|(p, q)| x * p + y * q).collect();
    FeatureMap::new(H, W, C, v).unwrap()
}

proptest! {
    #[test]
    fn linear_in_the_feature_map(a in features(), b in features(), m in mask(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let lhs = masked_average_pool(&combine(&a, &b, x, y), &m).unwrap();
        let pa = masked_average_pool(&a, &m).unwrap();
        let pb = masked_average_pool(&b, &m).unwrap();
        for c in 0..C {
            prop_assert!((lhs[c] - (x * pa[c] + y * pb[c])).abs() < 1e-9);
        }
    }

    #[test]
    fn invariant_to_mask_scale(f in features(), m in mask(), s in 0.01f64..=1.0) {
        let scaled = InstanceMask::new(H, W, m.values().iter().map(|v| v * s).collect()).unwrap();
        let a = masked_average_pool(&f, &m).unwrap();
        let b = masked_average_pool(&f, &scaled).unwrap();
        for c in 0..C {
            prop_assert!((a[c] - b[c]).abs() < 1e-9);
        }
    }

    #[test]
    fn stays_inside_the_feature_range(f in features(), m in mask()) {
        let p = masked_average_pool(&f, &m).unwrap();
        for (c, &pc) in p.iter().enumerate() {
            let vals = f.values().iter().skip(c).step_by(C);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            prop_assert!(pc >= lo - 1e-9 && pc <= hi + 1e-9);
        }
    }
}
