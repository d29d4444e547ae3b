mod support;

use mcseg_core::metrics::{compute_metrics, confusion, MetricsReport};
use mcseg_core::LabelMap;
use proptest::prelude::*;
use support::metrics_oracle::{matches_oracle, random_pair, Metrics};

fn as_metrics(r: &MetricsReport) -> Metrics {
    Metrics {
        mean_iu: r.mean_iu,
        fw_iu: r.fw_iu,
        pixel_acc: r.pixel_acc,
        mean_acc: r.mean_acc,
    }
}

#[test]
fn matches_brute_force_exactly_on_200_pairs() {
    for seed in 0..200 {
        assert!(matches_oracle(seed), "seed {seed}");
    }
}

fn permute(l: &LabelMap, perm: &[u8]) -> LabelMap {
    let ignore = l.ignore_index();
    let labels = l.labels().iter().map(|&x| if x == ignore { x } else { perm[x as usize] }).collect();
    LabelMap::new(l.height(), l.width(), l.n_classes(), labels).unwrap()
}

proptest! {
    #[test]
    fn relabeling_permutes_the_matrix_only(seed in any::<u64>(), shuffle_seed in any::<u64>()) {
        let (gt, pred) = random_pair(seed);
        let n = gt.n_classes();
        let mut perm: Vec<u8> = (0..n as u8).collect();
        mcseg_core::rng::SplitMix64::new(shuffle_seed).shuffle(&mut perm);
        let a = confusion(&gt, &pred).unwrap();
        let b = confusion(&permute(&gt, &perm), &permute(&pred, &perm)).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(a.get(i, j), b.get(perm[i] as usize, perm[j] as usize));
            }
        }
        if a.total() > 0 {
            let (ma, mb) = (compute_metrics(&a).unwrap(), compute_metrics(&b).unwrap());
            prop_assert_eq!(as_metrics(&ma), as_metrics(&mb));
            for v in [ma.mean_iu, ma.fw_iu, ma.pixel_acc, ma.mean_acc] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
